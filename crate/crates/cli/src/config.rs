//! Experiment config files: `[section]` headers with `key = value` lines.

use std::str::FromStr;

use ini::Ini;

use mixdiff::harness::{DeltaSweep, ExperimentConfig, SignPattern, TestFunction};
use mixdiff::noise::LpExponent;
use mixdiff::spectral::ClassParams;

const KNOWN: &[(&str, &[&str])] = &[
    ("class", &["s", "mu"]),
    ("orders", &["r1", "r2"]),
    ("method", &["metric", "gamma"]),
    ("noise", &["mode", "p", "seed", "repeats"]),
    ("sweep", &["start", "stop", "count"]),
    ("function", &["name", "epsilon", "signs", "k_ref"]),
    ("output", &["sup_resolution", "timing"]),
];

struct Reader<'a> {
    ini: &'a Ini,
    problems: Vec<String>,
}

impl Reader<'_> {
    fn get<T: FromStr>(&mut self, section: &str, key: &str, slot: &mut T)
    where
        T::Err: std::fmt::Display,
    {
        let Some(raw) = self.ini.section(Some(section)).and_then(|s| s.get(key)) else {
            return;
        };
        match raw.trim().parse::<T>() {
            Ok(v) => *slot = v,
            Err(e) => self.problems.push(format!("{section}.{key}: cannot parse {raw:?}: {e}")),
        }
    }

    fn raw(&self, section: &str, key: &str) -> Option<String> {
        self.ini.section(Some(section)).and_then(|s| s.get(key)).map(|v| v.trim().to_string())
    }
}

fn parse_bool(raw: &str) -> Option<bool> {
    match raw.to_ascii_lowercase().as_str() {
        "true" | "yes" | "on" | "1" => Some(true),
        "false" | "no" | "off" | "0" => Some(false),
        _ => None,
    }
}

/// Parses a config over the defaults. On failure returns every problem found,
/// one `section.key: message` string each.
pub fn parse_experiment_config(text: &str) -> Result<ExperimentConfig, Vec<String>> {
    let ini = Ini::load_from_str(text).map_err(|e| vec![format!("syntax: {e}")])?;
    let mut problems = Vec::new();
    for (section, props) in ini.iter() {
        let Some(name) = section else {
            for (k, _) in props.iter() {
                problems.push(format!("{k}: key outside any section"));
            }
            continue;
        };
        match KNOWN.iter().find(|(s, _)| *s == name) {
            None => problems.push(format!("[{name}]: unknown section")),
            Some((_, keys)) => {
                for (k, _) in props.iter() {
                    if !keys.contains(&k) {
                        problems.push(format!("{name}.{k}: unknown key"));
                    }
                }
            }
        }
    }

    let mut cfg = ExperimentConfig::default();
    let mut r = Reader { ini: &ini, problems };

    let (mut s, mut mu) = (cfg.class.s, cfg.class.mu);
    r.get("class", "s", &mut s);
    r.get("class", "mu", &mut mu);
    cfg.class = ClassParams { s, mu };
    r.get("orders", "r1", &mut cfg.r1);
    r.get("orders", "r2", &mut cfg.r2);
    r.get("method", "metric", &mut cfg.metric);
    if let Some(raw) = r.raw("method", "gamma") {
        if raw.eq_ignore_ascii_case("auto") {
            cfg.gamma = None;
        } else {
            let mut g = 0.0;
            r.get("method", "gamma", &mut g);
            cfg.gamma = Some(g);
        }
    }
    r.get("noise", "mode", &mut cfg.noise);
    if let Some(raw) = r.raw("noise", "p") {
        match raw.parse::<LpExponent>() {
            Ok(p) => cfg.p = p,
            Err(e) => r.problems.push(format!("noise.p: {e}")),
        }
    }
    r.get("noise", "seed", &mut cfg.seed);
    r.get("noise", "repeats", &mut cfg.repeats);
    let mut sweep: DeltaSweep = cfg.delta_sweep;
    r.get("sweep", "start", &mut sweep.start);
    r.get("sweep", "stop", &mut sweep.stop);
    r.get("sweep", "count", &mut sweep.count);
    cfg.delta_sweep = sweep;

    if let Some(name) = r.raw("function", "name") {
        match TestFunction::from_name(&name) {
            Ok(f) => cfg.function = f,
            Err(e) => r.problems.push(format!("function.name: {e}")),
        }
    }
    if let TestFunction::Boundary { mut epsilon, mut signs } = cfg.function {
        r.get("function", "epsilon", &mut epsilon);
        r.get::<SignPattern>("function", "signs", &mut signs);
        cfg.function = TestFunction::Boundary { epsilon, signs };
    } else {
        for key in ["epsilon", "signs"] {
            if r.raw("function", key).is_some() {
                r.problems.push(format!("function.{key}: only meaningful for the boundary function"));
            }
        }
    }
    r.get("function", "k_ref", &mut cfg.k_ref);
    r.get("output", "sup_resolution", &mut cfg.sup_resolution);
    if let Some(raw) = r.raw("output", "timing") {
        match parse_bool(&raw) {
            Some(b) => cfg.timing = b,
            None => r.problems.push(format!("output.timing: cannot parse {raw:?} as a boolean")),
        }
    }

    let mut problems = r.problems;
    if problems.is_empty() {
        problems.extend(cfg.problems());
    }
    if problems.is_empty() {
        Ok(cfg)
    } else {
        Err(problems)
    }
}

/// Writes `cfg` in the same format `parse_experiment_config` reads.
pub fn render_experiment_config(cfg: &ExperimentConfig) -> String {
    let mut out = String::new();
    let mut line = |s: String| {
        out.push_str(&s);
        out.push('\n');
    };
    line("[class]".into());
    line(format!("s = {:?}", cfg.class.s));
    line(format!("mu = {:?}", cfg.class.mu));
    line(String::new());
    line("[orders]".into());
    line(format!("r1 = {}", cfg.r1));
    line(format!("r2 = {}", cfg.r2));
    line(String::new());
    line("[method]".into());
    line(format!("metric = {}", cfg.metric));
    line(format!("gamma = {}", cfg.gamma.map_or("auto".to_string(), |g| format!("{g:?}"))));
    line(String::new());
    line("[noise]".into());
    line(format!("mode = {}", cfg.noise));
    line(format!("p = {}", cfg.p));
    line(format!("seed = {}", cfg.seed));
    line(format!("repeats = {}", cfg.repeats));
    line(String::new());
    line("[sweep]".into());
    line(format!("start = {:e}", cfg.delta_sweep.start));
    line(format!("stop = {:e}", cfg.delta_sweep.stop));
    line(format!("count = {}", cfg.delta_sweep.count));
    line(String::new());
    line("[function]".into());
    line(format!("name = {}", cfg.function.name()));
    if let TestFunction::Boundary { epsilon, signs } = cfg.function {
        line(format!("epsilon = {epsilon:?}"));
        line(format!(
            "signs = {}",
            match signs {
                SignPattern::Random => "random",
                SignPattern::Coherent => "coherent",
            }
        ));
    }
    line(format!("k_ref = {}", cfg.k_ref));
    line(String::new());
    line("[output]".into());
    line(format!("sup_resolution = {}", cfg.sup_resolution));
    line(format!("timing = {}", cfg.timing));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use mixdiff::harness::MetricChoice;

    #[test]
    fn empty_file_gives_defaults() {
        assert_eq!(parse_experiment_config("").unwrap(), ExperimentConfig::default());
    }

    #[test]
    fn render_round_trips() {
        let cfg = ExperimentConfig {
            class: ClassParams { s: 2.0, mu: 6.0 },
            r1: 2,
            metric: MetricChoice::L2,
            gamma: Some(7.0 / 6.0),
            p: LpExponent::Infinity,
            timing: true,
            ..ExperimentConfig::default()
        };
        let text = render_experiment_config(&cfg);
        assert_eq!(parse_experiment_config(&text).unwrap(), cfg);
    }

    #[test]
    fn every_bad_field_is_listed() {
        let text = "[class]\ns = zero\nmu = 4\n[orders]\nr1 = -1\n[noise]\np = 0.5\ncolour = red\n[extra]\nx = 1\n";
        let problems = parse_experiment_config(text).unwrap_err();
        let joined = problems.join("\n");
        for needle in ["class.s", "orders.r1", "noise.p", "noise.colour", "[extra]"] {
            assert!(joined.contains(needle), "{needle} missing from {joined}");
        }
        assert_eq!(problems.len(), 5);
    }

    #[test]
    fn semantic_problems_surface_after_syntax() {
        let problems = parse_experiment_config("[orders]\nr1 = 1\nr2 = 2\n[sweep]\ncount = 0\n").unwrap_err();
        assert!(problems.iter().any(|p| p.starts_with("r1:")));
        assert!(problems.iter().any(|p| p.starts_with("delta_count:")));
    }

    #[test]
    fn p_accepts_inf() {
        let cfg = parse_experiment_config("[noise]\np = inf\n").unwrap();
        assert_eq!(cfg.p, LpExponent::Infinity);
    }

    #[test]
    fn epsilon_rejected_for_closed_form_functions() {
        let problems = parse_experiment_config("[function]\nname = exp\nepsilon = 0.1\n").unwrap_err();
        assert!(problems[0].starts_with("function.epsilon"));
    }
}
