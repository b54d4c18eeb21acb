//! `su2qec` command-line runner.
//!
//! Exit codes: 0 success, 1 usage/config error, 2 numerical-contract
//! violation, 3 dimension-guard refusal.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};
use su2qec::angmom::stretched_cg;
use su2qec::channels::random_dlocal_channel;
use su2qec::codes::{
    inaccuracy_erasure, inaccuracy_generic, kl_offdiagonal_check, CodeSpec, ErasurePath,
    PREMISE_TOL,
};
use su2qec::metrology::{
    default_theta, fidelity_asymptotic, fidelity_deviation_coefficient, fidelity_erased_codewords,
    fidelity_erased_explicit, measurement_estimate, qfi_erased_explicit, qfi_erased_probe,
    verify_qfi_loss_bound, Scheme,
};
use su2qec::sweep::{
    self, fit_loglog_slope, geometric_grid, run_sweep, OutputFormat, SweepConfig, SweepMode,
    SweepTable,
};
use su2qec::{Error, HalfInt};

#[derive(Parser)]
#[command(
    name = "su2qec",
    version,
    about = "Covariant approximate QEC codes from |J, M> states: QFI, inaccuracy and sweeps"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

impl From<Format> for OutputFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Csv => OutputFormat::Csv,
            Format::Json => OutputFormat::Json,
        }
    }
}

#[derive(Args)]
struct Output {
    /// Write to PATH instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, global = true)]
    format: Option<Format>,
}

#[derive(Args)]
struct Probe {
    /// Local spin, e.g. 1/2, 1, 3/2.
    #[arg(long, default_value = "1/2")]
    s: HalfInt,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    m: HalfInt,
    /// Number of erased sites.
    #[arg(long, default_value_t = 0)]
    d: usize,
}

#[derive(Args)]
struct Code {
    #[arg(long, default_value = "1/2")]
    s: HalfInt,
    #[arg(long)]
    n: usize,
    /// Lowest codeword label.
    #[arg(long, allow_hyphen_values = true)]
    m_min: HalfInt,
    /// Codeword spacing Δ.
    #[arg(long)]
    delta: i64,
    #[arg(long, default_value_t = 2)]
    count: usize,
    /// Comma-separated site list.
    #[arg(long, value_delimiter = ',', required = true)]
    sites: Vec<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Stretched Clebsch-Gordan coefficient <j1 m1; J-j1 M-m1 | J M>.
    Cg {
        #[arg(long)]
        j: HalfInt,
        #[arg(long, allow_hyphen_values = true)]
        m: HalfInt,
        #[arg(long)]
        j1: HalfInt,
        #[arg(long, allow_hyphen_values = true)]
        m1: HalfInt,
        #[command(flatten)]
        out: Output,
    },
    /// QFI of the probe (|J,M> + |J,-M>)/sqrt2 after erasing d sites.
    Qfi {
        #[command(flatten)]
        probe: Probe,
        /// Also evaluate the explicit-vector oracle.
        #[arg(long)]
        explicit: bool,
        /// Also check the QFI-loss bound against the erasure inaccuracy.
        #[arg(long)]
        bound: bool,
        #[command(flatten)]
        out: Output,
    },
    /// Fidelity of the reduced states of |J,M> and |J,0> on d sites.
    Fidelity {
        #[command(flatten)]
        probe: Probe,
        #[arg(long)]
        explicit: bool,
        #[command(flatten)]
        out: Output,
    },
    /// Knill-Laflamme residuals for a seeded random d-local channel.
    KlCheck {
        #[command(flatten)]
        code: Code,
        #[arg(long, default_value_t = 4)]
        n_kraus: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        out: Output,
    },
    /// Inaccuracy estimate against a random channel or an erasure of --sites.
    Inaccuracy {
        #[command(flatten)]
        code: Code,
        /// Treat --sites as heralded erasures (closed form).
        #[arg(long)]
        erasure: bool,
        #[arg(long, default_value_t = 4)]
        n_kraus: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        out: Output,
    },
    /// Phase estimate of an erased probe.
    Measure {
        #[command(flatten)]
        probe: Probe,
        #[arg(long, value_enum)]
        scheme: SchemeArg,
        /// Phase; defaults to pi/(8M).
        #[arg(long)]
        theta: Option<f64>,
        #[arg(long, default_value_t = 10_000)]
        nu: u64,
        /// Seed for the Monte Carlo run (omit to skip it).
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        out: Output,
    },
    /// Run a sweep from a config file.
    Sweep {
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        out: Output,
    },
    /// Loss-ratio sweep over J with M ~ J^b, j1 ~ J^c, plus the log-log fit.
    Fig2 {
        #[arg(long, default_value = "1/2")]
        s: HalfInt,
        #[arg(long, value_parser = parse_real)]
        b: f64,
        #[arg(long, value_parser = parse_real)]
        c: f64,
        #[arg(long, default_value_t = 64)]
        j_start: u64,
        #[arg(long, default_value_t = 8192)]
        j_stop: u64,
        #[arg(long, default_value_t = 2)]
        factor: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        out: Output,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum SchemeArg {
    #[value(name = "local_D")]
    LocalD,
    #[value(name = "global_Dprime")]
    GlobalDprime,
    #[value(name = "local_Dbar")]
    LocalDbar,
}

fn parse_real(v: &str) -> Result<f64, String> {
    match v.split_once('/') {
        Some((p, q)) => {
            let p: f64 = p.trim().parse().map_err(|_| format!("bad number `{v}`"))?;
            let q: f64 = q.trim().parse().map_err(|_| format!("bad number `{v}`"))?;
            Ok(p / q)
        }
        None => v.parse().map_err(|_| format!("bad number `{v}`")),
    }
}

enum Failure {
    Usage(String),
    Lib(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::DimensionGuard { .. } => 3,
        Error::NotHermitian(_)
        | Error::NotPsd(_)
        | Error::Numerical(_)
        | Error::EstimatorSingularity(_) => 2,
        Error::Domain(_)
        | Error::InvalidSite { .. }
        | Error::DimensionMismatch { .. }
        | Error::Premise(_)
        | Error::Config { .. } => 1,
    }
}

/// Flattens a JSON object into a one-row CSV; nested values stay JSON.
fn object_to_csv(v: &Value) -> Result<String, Failure> {
    let Value::Object(map) = v else {
        return Err(Failure::Usage("internal: report is not an object".into()));
    };
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| Failure::Usage(e.to_string());
    w.write_record(map.keys()).map_err(io)?;
    w.write_record(map.values().map(|x| match x {
        Value::String(s) => s.clone(),
        Value::Null => String::new(),
        other => other.to_string(),
    }))
    .map_err(io)?;
    let bytes = w.into_inner().map_err(|e| Failure::Usage(e.to_string()))?;
    Ok(String::from_utf8_lossy(&bytes).into_owned())
}

fn emit(text: &str, out: Option<&Path>) -> Result<(), Failure> {
    match out {
        Some(p) => std::fs::write(p, text)
            .map_err(|e| Failure::Usage(format!("cannot write {}: {e}", p.display()))),
        None => {
            let mut stdout = std::io::stdout().lock();
            let res = stdout.write_all(text.as_bytes()).and_then(|_| {
                if text.ends_with('\n') {
                    Ok(())
                } else {
                    stdout.write_all(b"\n")
                }
            });
            match res {
                // a closed pipe (e.g. `| head`) is not an error
                Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => {
                    Err(Failure::Usage(format!("cannot write stdout: {e}")))
                }
                _ => Ok(()),
            }
        }
    }
}

fn emit_report<T: Serialize>(report: &T, out: &Output) -> Result<(), Failure> {
    let value = serde_json::to_value(report).map_err(|e| Failure::Usage(e.to_string()))?;
    let text = match out.format.unwrap_or(Format::Json) {
        Format::Json => {
            serde_json::to_string_pretty(&value).map_err(|e| Failure::Usage(e.to_string()))?
        }
        Format::Csv => object_to_csv(&value)?,
    };
    emit(&text, out.out.as_deref())
}

fn emit_table(
    cfg: &SweepConfig,
    table: &SweepTable,
    extra_note: Option<String>,
) -> Result<(), Failure> {
    for w in &table.warnings {
        eprintln!("warning: {w}");
    }
    let text = sweep::render(cfg, table)?;
    emit(&text, cfg.output.as_deref())?;
    let timing = sweep::timing_json(table);
    match &cfg.output {
        Some(p) => {
            let meta = sweep::timing_path(p);
            std::fs::write(&meta, timing)
                .map_err(|e| Failure::Usage(format!("cannot write {}: {e}", meta.display())))?;
        }
        None => eprintln!("timing: {timing}"),
    }
    if let Some(note) = extra_note {
        eprintln!("{note}");
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.cmd {
        Command::Cg { j, m, j1, m1, out } => {
            let value = stretched_cg(j, m, j1, m1)?;
            emit_report(
                &json!({ "j": j, "m": m, "j1": j1, "m1": m1, "value": value }),
                &out,
            )
        }
        Command::Qfi {
            probe,
            explicit,
            bound,
            out,
        } => {
            let rep = qfi_erased_probe(probe.s, probe.n, probe.m, probe.d)?;
            let mut v = serde_json::to_value(&rep).map_err(|e| Failure::Usage(e.to_string()))?;
            v["qfi_ideal"] = json!(4.0 * probe.m.value() * probe.m.value());
            if explicit {
                v["qfi_explicit"] = json!(qfi_erased_explicit(probe.s, probe.n, probe.m, probe.d)?);
            }
            if bound {
                v["loss_bound"] = serde_json::to_value(verify_qfi_loss_bound(
                    probe.s, probe.n, probe.m, probe.d,
                )?)
                .map_err(|e| Failure::Usage(e.to_string()))?;
            }
            emit_report(&v, &out)
        }
        Command::Fidelity {
            probe,
            explicit,
            out,
        } => {
            let (s, n, m, d) = (probe.s, probe.n, probe.m, probe.d);
            let f = fidelity_erased_codewords(s, n, m, d)?;
            let (jf, mf, j1) = ((s * n as i64).value(), m.value(), (s * d as i64).value());
            let mut v = json!({
                "s": s, "n": n, "m": m, "d": d,
                "fidelity": f,
                "asymptotic_expansion": fidelity_asymptotic(jf, mf, j1),
            });
            if s == HalfInt::HALF {
                let nf = n as f64;
                v["d_coefficient"] = json!(fidelity_deviation_coefficient(d as f64, mf));
                v["expansion_1_minus_d_over_n2"] =
                    json!(1.0 - fidelity_deviation_coefficient(d as f64, mf) / (nf * nf));
            }
            if explicit {
                v["fidelity_explicit"] = json!(fidelity_erased_explicit(s, n, m, d)?);
            }
            emit_report(&v, &out)
        }
        Command::KlCheck {
            code,
            n_kraus,
            seed,
            out,
        } => {
            let spec = CodeSpec::symmetric(code.s, code.n, code.m_min, code.delta, code.count)?;
            let ch = random_dlocal_channel(code.s, &code.sites, n_kraus, seed)?;
            let offdiag = kl_offdiagonal_check(&spec, &ch)?;
            let premise = offdiag <= PREMISE_TOL;
            // diagonal checks need the premise; otherwise only the residual is reported
            let diag = if premise {
                serde_json::to_value(inaccuracy_generic(&spec, &ch)?.diag_checks)
                    .map_err(|e| Failure::Usage(e.to_string()))?
            } else {
                json!([])
            };
            let v = json!({
                "code": spec,
                "channel_meta": ch.meta(Some(seed)),
                "spacing_admits": spec.spacing_admits(code.sites.len()),
                "premise_holds": premise,
                "offdiag_residual": offdiag,
                "diag_checks": diag,
            });
            emit_report(&v, &out)
        }
        Command::Inaccuracy {
            code,
            erasure,
            n_kraus,
            seed,
            out,
        } => {
            let spec = CodeSpec::symmetric(code.s, code.n, code.m_min, code.delta, code.count)?;
            if erasure {
                emit_report(
                    &inaccuracy_erasure(&spec, &code.sites, ErasurePath::Auto)?,
                    &out,
                )
            } else {
                let ch = random_dlocal_channel(code.s, &code.sites, n_kraus, seed)?;
                let mut rep = inaccuracy_generic(&spec, &ch)?;
                rep.channel_meta.seed = Some(seed);
                emit_report(&rep, &out)
            }
        }
        Command::Measure {
            probe,
            scheme,
            theta,
            nu,
            seed,
            out,
        } => {
            let scheme = match scheme {
                SchemeArg::LocalD => Scheme::LocalD,
                SchemeArg::GlobalDprime => Scheme::GlobalDprime,
                SchemeArg::LocalDbar => Scheme::LocalDbar,
            };
            let theta = theta.unwrap_or_else(|| default_theta(probe.m));
            let rep =
                measurement_estimate(scheme, probe.s, probe.n, probe.m, probe.d, theta, nu, seed)?;
            emit_report(&rep, &out)
        }
        Command::Sweep { config, seed, out } => {
            let text = std::fs::read_to_string(&config)
                .map_err(|e| Failure::Usage(format!("cannot read {}: {e}", config.display())))?;
            let mut cfg = SweepConfig::parse(&text)?;
            if let Some(seed) = seed {
                cfg.seed = seed;
            }
            if let Some(f) = out.format {
                cfg.format = f.into();
            }
            if out.out.is_some() {
                cfg.output = out.out;
            }
            let table = run_sweep(&cfg)?;
            emit_table(&cfg, &table, None)
        }
        Command::Fig2 {
            s,
            b,
            c,
            j_start,
            j_stop,
            factor,
            seed,
            out,
        } => {
            let cfg = SweepConfig {
                mode: SweepMode::Fig2,
                s,
                b,
                c,
                grid: geometric_grid(j_start, j_stop, factor)?,
                seed,
                format: out.format.unwrap_or(Format::Csv).into(),
                output: out.out,
                ..SweepConfig::default()
            };
            let clock = Instant::now();
            let table = run_sweep(&cfg)?;
            let pts: Vec<(f64, f64)> = table
                .rows
                .iter()
                .map(|r| (r.j.value(), r.loss_ratio))
                .collect();
            let note = fit_loglog_slope(&pts).ok().map(|fit| {
                format!(
                    "fit: slope {:.4} (2b + c - 2 = {:.4}), r^2 {:.4}, {:.2}s",
                    fit.slope,
                    2.0 * b + c - 2.0,
                    fit.r_squared,
                    clock.elapsed().as_secs_f64()
                )
            });
            emit_table(&cfg, &table, note)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Lib(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
