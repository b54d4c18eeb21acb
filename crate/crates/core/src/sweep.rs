//! Parameter sweeps over `J` or `N`, log-log slope fits and their
//! deterministic CSV/JSON output.
//!
//! Config files are `key = value` lines grouped under `[sweep]`, `[code]`
//! and `[channel]` headers; `#` starts a comment and lists are
//! comma-separated. Exponents may be written as fractions (`2/3`).
//!
//! ```text
//! [sweep]
//! mode = fig2
//! s = 1/2
//! b = 2/3
//! c = 1/4
//! grid_start = 64
//! grid_stop = 4096
//! format = csv
//! output = fig2.csv
//! ```

use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::angmom::HalfInt;
use crate::channels::{derive_seed, random_dlocal_channel, PRNG_ID};
use crate::codes::{inaccuracy_erasure, inaccuracy_generic, CodeSpec, ErasurePath};
use crate::error::{Error, Result};
use crate::metrology::{qfi_erased_explicit, qfi_erased_probe};

/// Explicit QFI cross-checks run when the register has at most this many
/// basis states.
pub const CROSS_CHECK_DIM: u128 = 1 << 12;

/// CSV header, in column order.
pub const CSV_COLUMNS: [&str; 11] = [
    "s",
    "J",
    "N",
    "M",
    "d",
    "j1",
    "qfi_ideal",
    "qfi_erased",
    "loss_ratio",
    "epsilon_hat",
    "cross_checked",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepMode {
    /// Grid over `J`; `M ≈ J^b`, `j1 ≈ J^c`; erasure QFI loss of the probe.
    Fig2,
    /// Grid over `N`; erasure inaccuracy of a symmetric code.
    ErasureEps,
    /// Grid over `N`; inaccuracy against a seeded random d-local channel.
    GenericEps,
}

impl std::str::FromStr for SweepMode {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "fig2" => Ok(SweepMode::Fig2),
            "erasure_eps" => Ok(SweepMode::ErasureEps),
            "generic_eps" => Ok(SweepMode::GenericEps),
            _ => Err(format!(
                "unknown mode `{s}` (fig2, erasure_eps, generic_eps)"
            )),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    Csv,
    Json,
}

impl std::str::FromStr for OutputFormat {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            _ => Err(format!("unknown format `{s}` (csv, json)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepConfig {
    pub mode: SweepMode,
    pub s: HalfInt,
    /// `J ~ N^a`; only the symmetric irrep (`a = 1`) is supported.
    pub a: f64,
    pub b: f64,
    pub c: f64,
    /// `J` values for `fig2`, `N` values otherwise.
    pub grid: Vec<u64>,
    /// Prefactor of `M` in the `N`-grid modes.
    pub m_scale: f64,
    /// Prefactor of `d` in the `N`-grid modes.
    pub d_scale: f64,
    /// Codeword spacing for the `N`-grid modes; `None` means the pair `{±M}`.
    pub delta: Option<i64>,
    pub n_kraus: usize,
    pub format: OutputFormat,
    pub output: Option<PathBuf>,
    pub seed: u64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            mode: SweepMode::Fig2,
            s: HalfInt::HALF,
            a: 1.0,
            b: 2.0 / 3.0,
            c: 0.25,
            grid: Vec::new(),
            m_scale: 1.0,
            d_scale: 1.0,
            delta: None,
            n_kraus: 4,
            format: OutputFormat::Csv,
            output: None,
            seed: 0,
        }
    }
}

/// `start, start·factor, …` up to and including `stop`.
pub fn geometric_grid(start: u64, stop: u64, factor: u64) -> Result<Vec<u64>> {
    if start == 0 || factor < 2 {
        return Err(Error::domain(
            "geometric grid needs start ≥ 1 and factor ≥ 2",
        ));
    }
    let mut out = Vec::new();
    let mut x = start;
    while x <= stop {
        out.push(x);
        match x.checked_mul(factor) {
            Some(next) => x = next,
            None => break,
        }
    }
    Ok(out)
}

fn cfg_err(line: usize, field: &str, msg: impl Into<String>) -> Error {
    Error::Config {
        line,
        field: field.to_string(),
        msg: msg.into(),
    }
}

fn parse_real(v: &str) -> std::result::Result<f64, String> {
    let parsed = match v.split_once('/') {
        Some((p, q)) => {
            let p: f64 = p
                .trim()
                .parse()
                .map_err(|_| format!("bad numerator in `{v}`"))?;
            let q: f64 = q
                .trim()
                .parse()
                .map_err(|_| format!("bad denominator in `{v}`"))?;
            if q == 0.0 {
                return Err("zero denominator".into());
            }
            p / q
        }
        None => v.parse().map_err(|_| format!("`{v}` is not a number"))?,
    };
    if parsed.is_finite() {
        Ok(parsed)
    } else {
        Err(format!("`{v}` is not finite"))
    }
}

const KEYS: [(&str, &str); 16] = [
    ("sweep", "mode"),
    ("sweep", "s"),
    ("sweep", "a"),
    ("sweep", "b"),
    ("sweep", "c"),
    ("sweep", "grid"),
    ("sweep", "grid_start"),
    ("sweep", "grid_stop"),
    ("sweep", "grid_factor"),
    ("sweep", "format"),
    ("sweep", "output"),
    ("sweep", "seed"),
    ("code", "m_scale"),
    ("code", "d_scale"),
    ("code", "delta"),
    ("channel", "n_kraus"),
];

impl SweepConfig {
    /// Parses and validates a config file body.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = SweepConfig::default();
        let mut section = String::from("sweep");
        let mut seen: Vec<(&str, usize)> = Vec::new();
        let mut lines = std::collections::HashMap::new();
        let (mut start, mut stop, mut factor) = (None, None, 2u64);
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            if let Some(rest) = body.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .ok_or_else(|| cfg_err(line, "[section]", "unterminated header"))?;
                let name = name.trim();
                if !KEYS.iter().any(|(s, _)| *s == name) {
                    return Err(cfg_err(
                        line,
                        name,
                        "unknown section (sweep, code, channel)",
                    ));
                }
                section = name.to_string();
                continue;
            }
            let (key, value) = body
                .split_once('=')
                .ok_or_else(|| cfg_err(line, body, "expected `key = value`"))?;
            let (key, value) = (key.trim(), value.trim());
            let Some(&(_, field)) = KEYS.iter().find(|(s, k)| *s == section && *k == key) else {
                return Err(cfg_err(line, key, format!("unknown key in [{section}]")));
            };
            if let Some((_, first)) = seen.iter().find(|(k, _)| *k == field) {
                return Err(cfg_err(
                    line,
                    field,
                    format!("duplicate key (first set at line {first})"),
                ));
            }
            seen.push((field, line));
            lines.insert(field, line);
            let bad = |msg: String| cfg_err(line, field, msg);
            let int = |v: &str| {
                v.parse::<u64>().map_err(|_| {
                    cfg_err(line, field, format!("`{v}` is not a non-negative integer"))
                })
            };
            match field {
                "mode" => cfg.mode = value.parse().map_err(bad)?,
                "s" => {
                    cfg.s = value
                        .parse::<HalfInt>()
                        .map_err(|e| cfg_err(line, field, e.to_string()))?;
                    if cfg.s.twice() < 1 {
                        return Err(cfg_err(line, field, "local spin must be positive"));
                    }
                }
                "a" => cfg.a = parse_real(value).map_err(bad)?,
                "b" => cfg.b = parse_real(value).map_err(bad)?,
                "c" => cfg.c = parse_real(value).map_err(bad)?,
                "grid" => {
                    cfg.grid = value
                        .split(',')
                        .map(str::trim)
                        .filter(|t| !t.is_empty())
                        .map(int)
                        .collect::<Result<_>>()?;
                }
                "grid_start" => start = Some(int(value)?),
                "grid_stop" => stop = Some(int(value)?),
                "grid_factor" => factor = int(value)?,
                "format" => cfg.format = value.parse().map_err(bad)?,
                "output" => cfg.output = Some(PathBuf::from(value)),
                "seed" => cfg.seed = int(value)?,
                "m_scale" => cfg.m_scale = parse_real(value).map_err(bad)?,
                "d_scale" => cfg.d_scale = parse_real(value).map_err(bad)?,
                "delta" => cfg.delta = Some(int(value)? as i64),
                "n_kraus" => cfg.n_kraus = int(value)? as usize,
                _ => unreachable!("key table and match arms agree"),
            }
        }
        let at = |f: &str| lines.get(f).copied().unwrap_or(0);
        match (start, stop) {
            (Some(a), Some(b)) => {
                if lines.contains_key("grid") {
                    return Err(cfg_err(
                        at("grid_start"),
                        "grid_start",
                        "give either `grid` or `grid_start`/`grid_stop`",
                    ));
                }
                cfg.grid = geometric_grid(a, b, factor)
                    .map_err(|e| cfg_err(at("grid_start"), "grid_start", e.to_string()))?;
            }
            (None, None) => {}
            _ => {
                return Err(cfg_err(
                    at("grid_start").max(at("grid_stop")),
                    "grid_start",
                    "`grid_start` and `grid_stop` go together",
                ))
            }
        }
        cfg.validate_with(at)?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.validate_with(|_| 0)
    }

    fn validate_with(&self, at: impl Fn(&str) -> usize) -> Result<()> {
        if self.s.twice() < 1 {
            return Err(cfg_err(at("s"), "s", "local spin must be positive"));
        }
        if self.a != 1.0 {
            return Err(cfg_err(
                at("a"),
                "a",
                "only the symmetric irrep J = sN (a = 1) is supported",
            ));
        }
        if self.grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(cfg_err(
                at("grid"),
                "grid",
                "grid must be strictly increasing",
            ));
        }
        if self.grid.first() == Some(&0) {
            return Err(cfg_err(at("grid"), "grid", "grid values must be positive"));
        }
        match self.mode {
            SweepMode::Fig2 => {
                if !(0.0 <= self.c && self.c <= self.b && self.b < 1.0) {
                    return Err(cfg_err(
                        at("b").max(at("c")),
                        "b",
                        format!(
                            "fig2 needs 0 ≤ c ≤ b < 1, got b = {}, c = {}",
                            self.b, self.c
                        ),
                    ));
                }
                if let Some(&j) = self
                    .grid
                    .iter()
                    .find(|&&j| (2 * j as i64) % self.s.twice() != 0)
                {
                    return Err(cfg_err(
                        at("grid"),
                        "grid",
                        format!("J = {j} is not a multiple of s = {}", self.s),
                    ));
                }
            }
            SweepMode::ErasureEps | SweepMode::GenericEps => {
                if self.b < 0.0 || self.c < 0.0 {
                    return Err(cfg_err(
                        at("b").max(at("c")),
                        "b",
                        "exponents must be non-negative",
                    ));
                }
                if self.m_scale <= 0.0 || self.d_scale < 0.0 {
                    return Err(cfg_err(
                        at("m_scale").max(at("d_scale")),
                        "m_scale",
                        "need m_scale > 0 and d_scale ≥ 0",
                    ));
                }
                if self.delta == Some(0) {
                    return Err(cfg_err(at("delta"), "delta", "spacing must be ≥ 1"));
                }
            }
        }
        if self.mode == SweepMode::GenericEps && self.n_kraus == 0 {
            return Err(cfg_err(
                at("n_kraus"),
                "n_kraus",
                "need at least one Kraus operator",
            ));
        }
        Ok(())
    }
}

/// Rounds `x` to the nearest multiple of `step`, ties toward zero.
pub fn round_to_step(x: f64, step: f64) -> f64 {
    let q = x.abs() / step;
    let f = q.floor();
    let k = if q - f <= 0.5 { f } else { f + 1.0 };
    (k * step).copysign(x)
}

/// Nearest `M` in `(0, J]` with `J − M` integral; ties go to the smaller
/// magnitude.
pub fn nearest_ladder_m(j: HalfInt, target: f64) -> Result<HalfInt> {
    if j <= HalfInt::ZERO {
        return Err(Error::domain(format!("need J > 0, got {j}")));
    }
    let offset = if j.is_integer() { 0.0 } else { 0.5 };
    let k = round_to_step(target - offset, 1.0);
    let lowest = if j.is_integer() {
        HalfInt::ONE
    } else {
        HalfInt::HALF
    };
    let m = HalfInt::from_f64(k + offset).unwrap_or(lowest);
    Ok(if m < lowest {
        lowest
    } else if m > j {
        j
    } else {
        m
    })
}

/// Number of sites `d` with `s·d` nearest to `j1_target`, ties down.
pub fn nearest_erasure_count(s: HalfInt, j1_target: f64) -> usize {
    round_to_step(j1_target.max(0.0) / s.value(), 1.0) as usize
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub s: HalfInt,
    #[serde(rename = "J")]
    pub j: HalfInt,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "M")]
    pub m: HalfInt,
    pub d: usize,
    pub j1: HalfInt,
    pub qfi_ideal: f64,
    pub qfi_erased: f64,
    /// `(qfi_ideal − qfi_erased)/qfi_ideal ∈ [0, 1]`.
    pub loss_ratio: f64,
    pub epsilon_hat: Option<f64>,
    pub cross_checked: bool,
    /// Seconds spent on the point. Kept out of CSV/JSON so reruns diff clean.
    #[serde(skip)]
    pub wall_time: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
    pub warnings: Vec<String>,
}

enum Point {
    Row(SweepRow),
    Skip(String),
}

/// Evaluates every grid point (in parallel) and returns rows in grid order.
/// Points violating `M > j1` or the code premise are skipped with a warning.
pub fn run_sweep(cfg: &SweepConfig) -> Result<SweepTable> {
    cfg.validate()?;
    let points: Vec<Result<Point>> = cfg.grid.par_iter().map(|&x| evaluate(cfg, x)).collect();
    let mut table = SweepTable::default();
    for p in points {
        match p? {
            Point::Row(r) => table.rows.push(r),
            Point::Skip(w) => table.warnings.push(w),
        }
    }
    Ok(table)
}

fn evaluate(cfg: &SweepConfig, x: u64) -> Result<Point> {
    let clock = Instant::now();
    let s = cfg.s;
    let (j, n, m, d) = match cfg.mode {
        SweepMode::Fig2 => {
            let j = HalfInt::from_int(x as i64);
            let n = (j.twice() / s.twice()) as usize;
            let jf = x as f64;
            (
                j,
                n,
                nearest_ladder_m(j, jf.powf(cfg.b))?,
                nearest_erasure_count(s, jf.powf(cfg.c)),
            )
        }
        _ => {
            let n = x as usize;
            let j = s * n as i64;
            let nf = n as f64;
            let m = nearest_ladder_m(j, cfg.m_scale * nf.powf(cfg.b))?;
            (
                j,
                n,
                m,
                round_to_step(cfg.d_scale * nf.powf(cfg.c), 1.0) as usize,
            )
        }
    };
    let j1 = s * d as i64;
    if d > n {
        return Ok(Point::Skip(format!(
            "grid point {x}: d = {d} exceeds N = {n}; skipped"
        )));
    }
    if m <= j1 {
        return Ok(Point::Skip(format!(
            "grid point {x}: M = {m} ≤ j1 = {j1}; skipped"
        )));
    }
    let qfi = qfi_erased_probe(s, n, m, d)?;
    let qfi_ideal = 4.0 * m.value() * m.value();
    let dim = (s.twice() as u128 + 1)
        .checked_pow(n as u32)
        .unwrap_or(u128::MAX);
    let cross_checked = dim <= CROSS_CHECK_DIM;
    if cross_checked {
        let ex = qfi_erased_explicit(s, n, m, d)?;
        if (ex - qfi.qfi).abs() > 1e-8 * qfi_ideal {
            return Err(Error::Numerical(format!(
                "grid point {x}: explicit QFI {ex} disagrees with closed form {}",
                qfi.qfi
            )));
        }
    }
    let sites: Vec<usize> = (0..d).collect();
    let epsilon_hat = match cfg.mode {
        SweepMode::Fig2 => {
            let code = CodeSpec::probe_pair(s, n, m)?;
            Some(inaccuracy_erasure(&code, &sites, ErasurePath::Auto)?.epsilon_hat)
        }
        SweepMode::ErasureEps | SweepMode::GenericEps => {
            let delta = cfg.delta.unwrap_or(m.twice());
            let count = (m.twice() / delta) as usize + 1;
            let code = CodeSpec::symmetric(s, n, -m, delta, count)?;
            if !code.spacing_admits(d) {
                return Ok(Point::Skip(format!(
                    "grid point {x}: Δ = {delta} < 2sd + 1 = {}; skipped",
                    s.twice() * d as i64 + 1
                )));
            }
            if cfg.mode == SweepMode::ErasureEps {
                Some(inaccuracy_erasure(&code, &sites, ErasurePath::Auto)?.epsilon_hat)
            } else {
                if d == 0 {
                    return Ok(Point::Skip(format!(
                        "grid point {x}: d = 0 leaves no channel; skipped"
                    )));
                }
                let ch = random_dlocal_channel(s, &sites, cfg.n_kraus, derive_seed(cfg.seed, x))?;
                Some(inaccuracy_generic(&code, &ch)?.epsilon_hat)
            }
        }
    };
    let loss_ratio = qfi.loss_ratio;
    let direct = (qfi_ideal - qfi.qfi) / qfi_ideal;
    if !(0.0..=1.0).contains(&loss_ratio) || (direct - loss_ratio).abs() > 1e-9 {
        return Err(Error::Numerical(format!(
            "grid point {x}: loss ratio {loss_ratio} inconsistent with QFI values (direct {direct})"
        )));
    }
    Ok(Point::Row(SweepRow {
        s,
        j,
        n,
        m,
        d,
        j1,
        qfi_ideal,
        qfi_erased: qfi.qfi,
        loss_ratio,
        epsilon_hat,
        cross_checked,
        wall_time: clock.elapsed().as_secs_f64(),
    }))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LogLogFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

/// Least squares on `(log10 x, log10 y)`.
pub fn fit_loglog_slope(points: &[(f64, f64)]) -> Result<LogLogFit> {
    if points.len() < 3 {
        return Err(Error::domain(format!(
            "need at least 3 points, got {}",
            points.len()
        )));
    }
    if let Some(p) = points.iter().find(|(x, y)| !(*x > 0.0 && *y > 0.0)) {
        return Err(Error::domain(format!(
            "log-log fit needs positive values, got {p:?}"
        )));
    }
    let xs: Vec<f64> = points.iter().map(|p| p.0.log10()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.log10()).collect();
    let k = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / k, ys.iter().sum::<f64>() / k);
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::domain("all x values coincide"));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_tot: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let ss_res: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    let r_squared = if ss_tot == 0.0 {
        1.0
    } else {
        (1.0 - ss_res / ss_tot).clamp(0.0, 1.0)
    };
    Ok(LogLogFit {
        slope,
        intercept,
        r_squared,
    })
}

/// Rows as CSV with the fixed [`CSV_COLUMNS`] header.
pub fn to_csv(rows: &[SweepRow]) -> Result<String> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(Vec::new());
    w.write_record(CSV_COLUMNS)
        .map_err(|e| Error::Numerical(e.to_string()))?;
    for r in rows {
        w.serialize(r)
            .map_err(|e| Error::Numerical(e.to_string()))?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Error::Numerical(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Numerical(e.to_string()))
}

#[derive(Serialize)]
struct JsonOut<'a> {
    config: &'a SweepConfig,
    prng: &'a str,
    warnings: &'a [String],
    rows: &'a [SweepRow],
}

/// Rows plus the config echo. No timing.
pub fn to_json(cfg: &SweepConfig, table: &SweepTable) -> Result<String> {
    let out = JsonOut {
        config: cfg,
        prng: PRNG_ID,
        warnings: &table.warnings,
        rows: &table.rows,
    };
    serde_json::to_string_pretty(&out).map_err(|e| Error::Numerical(e.to_string()))
}

/// Per-row wall times, kept apart from the data so data files are
/// byte-reproducible.
pub fn timing_json(table: &SweepTable) -> String {
    let per_row: Vec<f64> = table.rows.iter().map(|r| r.wall_time).collect();
    let total: f64 = per_row.iter().sum();
    serde_json::json!({ "wall_time": per_row, "total_wall_time": total }).to_string()
}

/// `out.csv` → `out.meta.json`.
pub fn timing_path(output: &Path) -> PathBuf {
    output.with_extension("meta.json")
}

/// Serialized data in the configured format.
pub fn render(cfg: &SweepConfig, table: &SweepTable) -> Result<String> {
    match cfg.format {
        OutputFormat::Csv => to_csv(&table.rows),
        OutputFormat::Json => to_json(cfg, table),
    }
}
