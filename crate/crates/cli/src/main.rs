mod config;
mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use mixdiff::cross::build_cross;
use mixdiff::harness::{
    run_convergence_study, run_radius_study, ExperimentConfig, MetricChoice, NoiseChoice, RadiusConfig,
    SignPattern, TestFunction, SUPPORT_MARGIN,
};
use mixdiff::noise::{lp_norm, perturb, LpExponent};
use mixdiff::spectral::{parseval_l2_norm, sup_norm_on_grid, ClassParams, CoeffGrid, DEFAULT_SUP_RESOLUTION};
use mixdiff::truncation::{apply_method, MethodParams, RateClass};
use mixdiff::Error;

use output::{Emitter, RunIdentity};

#[derive(Parser)]
#[command(name = "mixdiff", version, about = "Stable mixed-derivative recovery from noisy Legendre coefficients")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute Legendre coefficients of a registry function.
    Coeffs(CoeffsArgs),
    /// Perturb a coefficient file and recover a mixed derivative.
    Diff(DiffArgs),
    /// Enumerate a hyperbolic cross.
    Cross(CrossArgs),
    /// Run a convergence study from a config file.
    Experiment(ExperimentArgs),
    /// Check the lower-bound witnesses over a sweep of band sizes.
    Radius(RadiusArgs),
    /// Print the default experiment config.
    DefaultConfig,
}

#[derive(Args)]
struct ClassFlags {
    #[arg(long, default_value_t = 2.0)]
    s: f64,
    #[arg(long, default_value_t = 4.0)]
    mu: f64,
}

#[derive(Args)]
struct CoeffsArgs {
    /// One of constant, polynomial, exp, boundary.
    #[arg(long)]
    function: String,
    /// Highest degree in each variable.
    #[arg(long = "k")]
    k: usize,
    /// Quadrature points per axis; defaults to k + 2.
    #[arg(long = "m")]
    m: Option<usize>,
    #[command(flatten)]
    class: ClassFlags,
    /// Decay margin of the boundary function.
    #[arg(long, default_value_t = 0.01)]
    epsilon: f64,
    #[arg(long, default_value = "random")]
    signs: SignPattern,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct DiffArgs {
    /// Coefficient file of the noise-free function.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value_t = 1)]
    r1: usize,
    #[arg(long, default_value_t = 1)]
    r2: usize,
    #[arg(long)]
    delta: f64,
    /// Noise exponent; `inf` for the sup norm.
    #[arg(long, default_value = "2")]
    p: LpExponent,
    #[command(flatten)]
    class: ClassFlags,
    #[arg(long, default_value = "l2")]
    metric: MetricChoice,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "sphere")]
    noise: NoiseChoice,
    /// Coefficient file of the exact derivative, for error reporting.
    #[arg(long)]
    reference: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_SUP_RESOLUTION)]
    sup_resolution: usize,
    #[arg(long)]
    out: PathBuf,
    /// Sidecar path; defaults to `<out>.json`.
    #[arg(long)]
    out_json: Option<PathBuf>,
}

#[derive(Args)]
struct CrossArgs {
    #[arg(long)]
    n: f64,
    #[arg(long, default_value_t = 1.0)]
    gamma: f64,
    #[arg(long, default_value_t = 1)]
    r1: usize,
    #[arg(long, default_value_t = 1)]
    r2: usize,
    /// Writes the index list here; otherwise to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ExperimentArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out_csv: PathBuf,
    #[arg(long)]
    out_json: PathBuf,
    #[arg(long)]
    out_svg: Option<PathBuf>,
    /// Replaces the seed from the config file.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct RadiusArgs {
    /// Comma-separated band sizes.
    #[arg(long, value_delimiter = ',', default_value = "8,16,32,64")]
    n_list: Vec<usize>,
    #[arg(long, default_value_t = 1)]
    r1: usize,
    #[arg(long, default_value_t = 1)]
    r2: usize,
    #[arg(long, default_value_t = 2.0)]
    s: f64,
    #[arg(long, default_value_t = 3.0)]
    mu: f64,
    #[arg(long, default_value = "2")]
    p: LpExponent,
    #[arg(long, default_value_t = DEFAULT_SUP_RESOLUTION)]
    sup_resolution: usize,
    #[arg(long)]
    out_json: PathBuf,
}

enum Failure {
    Lib(Error),
    Input(String),
    Config(Vec<String>),
    Write(PathBuf, std::io::Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Lib(Error::Domain(_) | Error::Parameter(_) | Error::Parse { .. }) => 2,
            Failure::Lib(Error::Admissibility(_)) => 3,
            Failure::Lib(Error::Infeasible(_)) => 5,
            Failure::Lib(Error::Internal(_)) => 1,
            Failure::Input(_) => 2,
            Failure::Config(_) => 4,
            Failure::Write(..) => 1,
        }
    }

    fn report(&self) {
        match self {
            Failure::Lib(e) => eprintln!("error: {e}"),
            Failure::Input(msg) => eprintln!("error: {msg}"),
            Failure::Config(problems) => {
                eprintln!("error: invalid config ({} problem{})", problems.len(), if problems.len() == 1 { "" } else { "s" });
                for p in problems {
                    eprintln!("  {p}");
                }
            }
            Failure::Write(path, e) => eprintln!("error: cannot write {}: {e}", path.display()),
        }
    }
}

type CmdResult = Result<(), Failure>;

fn read_input(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| Failure::Input(format!("cannot read {}: {e}", path.display())))
}

fn emit(em: &mut Emitter, path: &Path, contents: &[u8]) -> CmdResult {
    em.write(path, contents).map_err(|e| Failure::Write(path.to_path_buf(), e))
}

fn emit_json<T: Serialize>(em: &mut Emitter, path: &Path, value: &T) -> CmdResult {
    em.write_json(path, value).map_err(|e| Failure::Write(path.to_path_buf(), e))
}

fn finish(em: Emitter) -> CmdResult {
    em.finish().map(|_| ()).map_err(|e| Failure::Write(PathBuf::from("manifest"), e))
}

/// Puts the manifest line right after the format header.
fn stamp_text(text: &str, hash: &str) -> String {
    match text.split_once('\n') {
        Some((header, rest)) => format!("{header}\n# manifest sha256:{hash}\n{rest}"),
        None => format!("{text}\n# manifest sha256:{hash}\n"),
    }
}

fn load_grid(path: &Path) -> Result<CoeffGrid, Failure> {
    let text = read_input(path)?;
    CoeffGrid::from_text(&text).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))
}

fn cmd_coeffs(a: CoeffsArgs) -> CmdResult {
    let mut function = TestFunction::from_name(&a.function)?;
    if let TestFunction::Boundary { epsilon, signs } = &mut function {
        *epsilon = a.epsilon;
        *signs = a.signs;
    }
    let class = ClassParams::new(a.class.s, a.class.mu)?;
    let grid = function.coefficients_with_order(class, a.k, a.m.unwrap_or(a.k + 2), a.seed)?;
    let identity = RunIdentity::new(
        "coeffs",
        serde_json::json!({
            "function": function,
            "k": a.k,
            "m": a.m.unwrap_or(a.k + 2),
            "s": a.class.s,
            "mu": a.class.mu,
            "seed": a.seed,
        }),
    );
    let mut em = Emitter::new(identity);
    let text = stamp_text(&grid.to_text(), em.hash());
    emit(&mut em, &a.out, text.as_bytes())?;
    finish(em)?;
    println!("wrote {} coefficients to {}", grid.len(), a.out.display());
    Ok(())
}

#[derive(Serialize)]
struct DiffSidecar {
    delta: f64,
    p: LpExponent,
    r1: usize,
    r2: usize,
    s: f64,
    mu: f64,
    metric: MetricChoice,
    n: f64,
    gamma: f64,
    case_label: String,
    rate: RateClass,
    cross_card: usize,
    noise_mode: String,
    noise_norm: f64,
    noise_support: usize,
    seed: u64,
    output_terms: usize,
    error_l2: Option<f64>,
    error_c: Option<f64>,
}

fn cmd_diff(a: DiffArgs) -> CmdResult {
    let grid = load_grid(&a.input)?;
    let reference = a.reference.as_deref().map(load_grid).transpose()?;
    let class = ClassParams::new(a.class.s, a.class.mu)?;
    if !(a.delta > 0.0 && a.delta < 1.0) {
        return Err(Failure::Lib(Error::Parameter(format!("delta = {} must lie in (0, 1)", a.delta))));
    }
    let setup = ExperimentConfig {
        class,
        r1: a.r1,
        r2: a.r2,
        p: a.p,
        metric: a.metric,
        noise: a.noise,
        seed: a.seed,
        gamma: a.gamma,
        sup_resolution: a.sup_resolution,
        ..ExperimentConfig::default()
    };
    if a.r2 < 1 || a.r1 < a.r2 {
        return Err(Failure::Lib(Error::Parameter(format!(
            "derivative orders must satisfy r1 >= r2 >= 1, got ({}, {})",
            a.r1, a.r2
        ))));
    }
    let sel = setup.select(a.delta)?;
    let cross = build_cross(sel.n, sel.gamma, a.r1, a.r2)?;
    let cross_extent = cross.max_extents().map_or(0, |(x, y)| x.max(y));
    let grid_extent = grid.extent().map_or(0, |(x, y)| x.max(y));
    let support = cross_extent.max(grid_extent) + SUPPORT_MARGIN;
    let spec = setup.noise_spec(a.delta, a.seed, support)?;
    let (data, noise_norm, noise_mode, noise_support) = match &spec {
        Some(spec) => {
            let (data, xi) = perturb(&grid, spec)?;
            (data, lp_norm(&xi, a.p), spec.mode.name().to_string(), spec.support)
        }
        None => (grid.clone(), 0.0, "off".to_string(), 0),
    };
    let derivative = apply_method(&data, MethodParams::new(sel.n, sel.gamma, a.r1, a.r2)?)?;
    let (error_l2, error_c) = match &reference {
        Some(r) => {
            let diff = derivative.sub(r);
            (Some(parseval_l2_norm(&diff)), Some(sup_norm_on_grid(&diff, a.sup_resolution)?))
        }
        None => (None, None),
    };

    let sidecar = DiffSidecar {
        delta: a.delta,
        p: a.p,
        r1: a.r1,
        r2: a.r2,
        s: a.class.s,
        mu: a.class.mu,
        metric: a.metric,
        n: sel.n,
        gamma: sel.gamma,
        case_label: sel.case_label.clone(),
        rate: sel.rate,
        cross_card: cross.cardinality(),
        noise_mode,
        noise_norm,
        noise_support,
        seed: a.seed,
        output_terms: derivative.len(),
        error_l2,
        error_c,
    };
    let identity = RunIdentity::new(
        "diff",
        serde_json::json!({
            "input_sha256": output::sha256_hex(grid.to_text().as_bytes()),
            "reference_sha256": reference.as_ref().map(|r| output::sha256_hex(r.to_text().as_bytes())),
            "delta": a.delta,
            "p": a.p,
            "r1": a.r1,
            "r2": a.r2,
            "s": a.class.s,
            "mu": a.class.mu,
            "metric": a.metric,
            "gamma": a.gamma,
            "noise": a.noise,
            "seed": a.seed,
            "sup_resolution": a.sup_resolution,
        }),
    );
    let mut em = Emitter::new(identity);
    let text = stamp_text(&derivative.to_text(), em.hash());
    emit(&mut em, &a.out, text.as_bytes())?;
    let json_path = a.out_json.unwrap_or_else(|| {
        let mut p = a.out.clone().into_os_string();
        p.push(".json");
        PathBuf::from(p)
    });
    emit_json(&mut em, &json_path, &sidecar)?;
    finish(em)?;
    println!(
        "n = {:.6}, gamma = {:.6}, |cross| = {}, case: {}",
        sel.n,
        sel.gamma,
        cross.cardinality(),
        sel.case_label
    );
    if let (Some(l2), Some(c)) = (error_l2, error_c) {
        println!("error vs reference: l2 = {l2:e}, c = {c:e}");
    }
    Ok(())
}

fn cmd_cross(a: CrossArgs) -> CmdResult {
    let cross = build_cross(a.n, a.gamma, a.r1, a.r2)?;
    match &a.out {
        Some(path) => {
            let identity = RunIdentity::new(
                "cross",
                serde_json::json!({"n": a.n, "gamma": a.gamma, "r1": a.r1, "r2": a.r2}),
            );
            let mut em = Emitter::new(identity);
            let text = stamp_text(&cross.to_text(), em.hash());
            emit(&mut em, path, text.as_bytes())?;
            finish(em)?;
            println!("cardinality {}", cross.cardinality());
        }
        None => print!("{}", cross.to_text()),
    }
    Ok(())
}

fn cmd_experiment(a: ExperimentArgs) -> CmdResult {
    let text = read_input(&a.config)?;
    let mut cfg = config::parse_experiment_config(&text).map_err(Failure::Config)?;
    if let Some(seed) = a.seed {
        cfg.seed = seed;
    }
    let result = run_convergence_study(&cfg)?;
    let identity = RunIdentity::new("experiment", serde_json::to_value(&cfg).expect("config serializes"));
    let mut em = Emitter::new(identity);
    emit(&mut em, &a.out_csv, output::experiment_csv(&result).as_bytes())?;
    emit_json(&mut em, &a.out_json, &result)?;
    if let Some(svg_path) = &a.out_svg {
        let svg = output::experiment_svg(&result, cfg.metric == MetricChoice::C, em.hash());
        emit(&mut em, svg_path, svg.as_bytes())?;
    }
    finish(em)?;
    let show = |x: Option<f64>| x.map_or("n/a".to_string(), |v| format!("{v:.4}"));
    println!("case: {}", result.case_label);
    println!(
        "l2 exponent: fitted {} theoretical {}",
        show(result.fitted_exponent_l2),
        show(result.theoretical_exponent_l2)
    );
    println!(
        "c exponent: fitted {} theoretical {}",
        show(result.fitted_exponent_c),
        show(result.theoretical_exponent_c)
    );
    Ok(())
}

fn cmd_radius(a: RadiusArgs) -> CmdResult {
    let cfg = RadiusConfig {
        n_sweep: a.n_list,
        class: ClassParams::new(a.s, a.mu)?,
        r1: a.r1,
        r2: a.r2,
        p: a.p,
        sup_resolution: a.sup_resolution,
    };
    let report = run_radius_study(&cfg)?;
    let identity = RunIdentity::new("radius", serde_json::to_value(&cfg).expect("config serializes"));
    let mut em = Emitter::new(identity);
    emit_json(&mut em, &a.out_json, &report)?;
    finish(em)?;
    for r in &report.records {
        println!(
            "N = {:>4}: delta = {:e}, l2 bound {}, c bound {}",
            r.n_witness,
            r.delta,
            if r.l2.bound_check.passed { "ok" } else { "FAILED" },
            if r.c.bound_check.passed { "ok" } else { "FAILED" },
        );
    }
    println!("all lower-bound checks passed: {}", report.all_bounds_passed);
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let outcome = match cli.command {
        Command::Coeffs(a) => cmd_coeffs(a),
        Command::Diff(a) => cmd_diff(a),
        Command::Cross(a) => cmd_cross(a),
        Command::Experiment(a) => cmd_experiment(a),
        Command::Radius(a) => cmd_radius(a),
        Command::DefaultConfig => {
            print!("{}", config::render_experiment_config(&ExperimentConfig::default()));
            Ok(())
        }
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            f.report();
            ExitCode::from(f.code())
        }
    }
}
