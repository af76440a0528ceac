use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use sha2::{Digest, Sha256};

use mixdiff::harness::ExperimentResult;

pub const TOOL: &str = "mixdiff";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut out = String::with_capacity(64);
    for b in digest {
        let _ = write!(out, "{b:02x}");
    }
    out
}

/// Reproducible part of a run: what was asked for, not when.
#[derive(Debug, Clone, Serialize)]
pub struct RunIdentity {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub config: serde_json::Value,
    pub rng_algorithm: &'static str,
}

impl RunIdentity {
    pub fn new(command: &str, config: serde_json::Value) -> Self {
        Self {
            tool: TOOL,
            version: VERSION,
            command: command.to_string(),
            config,
            rng_algorithm: mixdiff::noise::RNG_ALGORITHM,
        }
    }

    pub fn hash(&self) -> String {
        sha256_hex(&serde_json::to_vec(self).expect("identity serializes"))
    }
}

#[derive(Debug, Serialize)]
struct OutputEntry {
    path: String,
    sha256: String,
}

#[derive(Debug, Serialize)]
struct RunManifest<'a> {
    #[serde(flatten)]
    identity: &'a RunIdentity,
    manifest_hash: String,
    timestamp_unix: u64,
    outputs: Vec<OutputEntry>,
}

/// Collects written files so the manifest can list them with digests.
pub struct Emitter {
    identity: RunIdentity,
    hash: String,
    written: Vec<(PathBuf, String)>,
}

impl Emitter {
    pub fn new(identity: RunIdentity) -> Self {
        let hash = identity.hash();
        Self { identity, hash, written: Vec::new() }
    }

    pub fn hash(&self) -> &str {
        &self.hash
    }

    pub fn write(&mut self, path: &Path, contents: &[u8]) -> std::io::Result<()> {
        write_atomic(path, contents)?;
        self.written.push((path.to_path_buf(), sha256_hex(contents)));
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, path: &Path, value: &T) -> std::io::Result<()> {
        #[derive(Serialize)]
        struct Stamped<'a, T> {
            manifest_hash: &'a str,
            #[serde(flatten)]
            value: &'a T,
        }
        let mut text = serde_json::to_string_pretty(&Stamped { manifest_hash: &self.hash, value })
            .map_err(std::io::Error::other)?;
        text.push('\n');
        self.write(path, text.as_bytes())
    }

    /// Writes `<first output stem>.manifest.json` next to the first output.
    pub fn finish(self) -> std::io::Result<Option<PathBuf>> {
        let Some((first, _)) = self.written.first() else {
            return Ok(None);
        };
        let stem = first.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "run".into());
        let path = first.with_file_name(format!("{stem}.manifest.json"));
        let manifest = RunManifest {
            identity: &self.identity,
            manifest_hash: self.hash.clone(),
            timestamp_unix: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
            outputs: self
                .written
                .iter()
                .map(|(p, h)| OutputEntry { path: p.display().to_string(), sha256: h.clone() })
                .collect(),
        };
        let mut text = serde_json::to_string_pretty(&manifest).map_err(std::io::Error::other)?;
        text.push('\n');
        write_atomic(&path, text.as_bytes())?;
        Ok(Some(path))
    }
}

/// Writes through a temporary file in the target directory, then renames.
pub fn write_atomic(path: &Path, contents: &[u8]) -> std::io::Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(contents)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

pub const CSV_HEADER: &str = "delta,n,gamma,cross_card,error_l2,error_c,noise_norm,wall_ms";

pub fn experiment_csv(result: &ExperimentResult) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in &result.records {
        let _ = writeln!(
            out,
            "{:?},{:?},{:?},{},{:?},{:?},{:?},{}",
            r.delta, r.n, r.gamma, r.cross_card, r.error_l2, r.error_c, r.noise_norm, r.wall_ms
        );
    }
    out
}

const WIDTH: f64 = 600.0;
const HEIGHT: f64 = 400.0;
const MARGIN_LEFT: f64 = 70.0;
const MARGIN_RIGHT: f64 = 20.0;
const MARGIN_TOP: f64 = 30.0;
const MARGIN_BOTTOM: f64 = 50.0;

fn decade_range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values
        .filter(|v| *v > 0.0 && v.is_finite())
        .map(f64::log10)
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        return (-1.0, 0.0);
    }
    let (lo, hi) = (lo.floor(), hi.ceil());
    if lo == hi {
        (lo - 1.0, hi + 1.0)
    } else {
        (lo, hi)
    }
}

/// Log-log plot of one error series against delta, with the theoretical
/// slope drawn through the geometric mean of the measured points.
pub fn experiment_svg(result: &ExperimentResult, use_c: bool, manifest_hash: &str) -> String {
    let (label, exponent) = if use_c {
        ("C error", result.theoretical_exponent_c)
    } else {
        ("L2 error", result.theoretical_exponent_l2)
    };
    let points: Vec<(f64, f64)> = result
        .records
        .iter()
        .map(|r| (r.delta, if use_c { r.error_c } else { r.error_l2 }))
        .filter(|&(d, e)| d > 0.0 && e > 0.0)
        .collect();

    let reference: Vec<(f64, f64)> = match (exponent, points.is_empty()) {
        (Some(e), false) => {
            let m = points.len() as f64;
            let mx = points.iter().map(|p| p.0.ln()).sum::<f64>() / m;
            let my = points.iter().map(|p| p.1.ln()).sum::<f64>() / m;
            points.iter().map(|&(d, _)| (d, (my + e * (d.ln() - mx)).exp())).collect()
        }
        _ => Vec::new(),
    };

    let (x0, x1) = decade_range(points.iter().map(|p| p.0));
    let (y0, y1) = decade_range(points.iter().chain(&reference).map(|p| p.1));
    let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
    let sx = |d: f64| MARGIN_LEFT + (d.log10() - x0) / (x1 - x0) * plot_w;
    let sy = |e: f64| MARGIN_TOP + (y1 - e.log10()) / (y1 - y0) * plot_h;
    let polyline = |pts: &[(f64, f64)]| -> String {
        pts.iter().map(|&(d, e)| format!("{:.2},{:.2}", sx(d), sy(e))).collect::<Vec<_>>().join(" ")
    };

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(s, "<!-- manifest sha256:{manifest_hash} -->");
    let _ = writeln!(s, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<rect x="{MARGIN_LEFT}" y="{MARGIN_TOP}" width="{plot_w}" height="{plot_h}" fill="none" stroke="black"/>"#
    );
    for dec in (x0 as i32)..=(x1 as i32) {
        let x = MARGIN_LEFT + (dec as f64 - x0) / (x1 - x0) * plot_w;
        let _ = writeln!(
            s,
            r##"<line x1="{x:.2}" y1="{MARGIN_TOP}" x2="{x:.2}" y2="{:.2}" stroke="#ddd"/><text x="{x:.2}" y="{:.2}" font-size="11" text-anchor="middle">1e{dec}</text>"##,
            MARGIN_TOP + plot_h,
            MARGIN_TOP + plot_h + 16.0
        );
    }
    for dec in (y0 as i32)..=(y1 as i32) {
        let y = MARGIN_TOP + (y1 - dec as f64) / (y1 - y0) * plot_h;
        let _ = writeln!(
            s,
            r##"<line x1="{MARGIN_LEFT}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#ddd"/><text x="{:.2}" y="{:.2}" font-size="11" text-anchor="end">1e{dec}</text>"##,
            MARGIN_LEFT + plot_w,
            MARGIN_LEFT - 6.0,
            y + 4.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" font-size="12" text-anchor="middle">delta</text>"#,
        MARGIN_LEFT + plot_w / 2.0,
        HEIGHT - 10.0
    );
    let _ = writeln!(
        s,
        r#"<text x="14" y="{:.2}" font-size="12" text-anchor="middle" transform="rotate(-90 14 {:.2})">{label}</text>"#,
        MARGIN_TOP + plot_h / 2.0,
        MARGIN_TOP + plot_h / 2.0
    );
    let _ = writeln!(
        s,
        r##"<polyline class="measured" fill="none" stroke="#1f77b4" stroke-width="2" points="{}"/>"##,
        polyline(&points)
    );
    let _ = writeln!(
        s,
        r##"<polyline class="reference" fill="none" stroke="#d62728" stroke-dasharray="6 4" points="{}"/>"##,
        polyline(&reference)
    );
    let legend = match exponent {
        Some(e) => format!("measured {label}; dashed: slope {e:.4}"),
        None => format!("measured {label}"),
    };
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="20" font-size="12">{legend}</text>"#,
        MARGIN_LEFT
    );
    s.push_str("</svg>\n");
    s
}
