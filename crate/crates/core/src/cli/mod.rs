//! The `gpx` command line.

pub mod config;
pub mod pipeline;

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::error::{GpxError, Result};
use crate::functional::momentum;
use crate::isoperimetric::loops_to_csv;
use config::KEYS;
use pipeline::{parse_list, parse_point, Ctx, EpsSpec};

#[derive(Debug, Parser)]
#[command(name = "gpx", version, about = "Flux-constrained Ginzburg-Landau vortex rings on the flat 3-torus", after_help = KEYS)]
pub struct Cli {
    /// Directory that relative paths refer to.
    #[arg(long, global = true, default_value = ".")]
    pub workdir: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct ConfigArg {
    #[arg(long)]
    pub config: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build the photograph at `p` and write it with a JSON-lines record.
    Ansatz {
        #[command(flatten)]
        config: ConfigArg,
        /// Center `x,y,z`.
        #[arg(long)]
        p: String,
        #[arg(long)]
        phi: f64,
        /// A number or `r/<k>`; defaults to `solver.eps_ratio * r`.
        #[arg(long)]
        eps: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Minimize energy at fixed momentum from a field file.
    Minimize {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long)]
        init: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        report: PathBuf,
        /// Defaults to the record next to `--init`, else its momentum.
        #[arg(long)]
        phi: Option<f64>,
        /// Defaults to the record next to `--init`.
        #[arg(long)]
        eps: Option<f64>,
    },
    /// Minimize from every Σ component for each `(phi, eps)` pair.
    Scan {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long)]
        phis: String,
        /// Comma-separated numbers or `r/<k>` entries.
        #[arg(long = "eps-list")]
        eps_list: String,
        #[arg(long, default_value = "scan.csv")]
        out: PathBuf,
    },
    /// Shortest loops at fixed flux from random seeds.
    Iso {
        #[command(flatten)]
        config: ConfigArg,
        /// One flux or a comma-separated list; defaults to `isoperimetric.phis`.
        #[arg(long)]
        phi: Option<String>,
        #[arg(long)]
        seeds: Option<usize>,
        #[arg(long, default_value = "loops.csv")]
        out: PathBuf,
        #[arg(long, default_value = "jm.csv")]
        table: PathBuf,
    },
    /// Energy, concentration, barycenter and homotopy gap of a field.
    Diag {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        phi: Option<f64>,
        #[arg(long)]
        eps: Option<f64>,
        /// Seed point `x,y,z` for the homotopy gap.
        #[arg(long = "seed-point")]
        seed_point: Option<String>,
    },
    /// Randomized lemma suites and gradient checks.
    CheckLemmas {
        #[command(flatten)]
        config: ConfigArg,
    },
    /// One critical point per Σ component, with a verdict table.
    Multiplicity {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long)]
        phi: f64,
        #[arg(long)]
        eps: Option<String>,
        /// Σ points to minimize from for homotopy gaps.
        #[arg(long, default_value_t = 0)]
        gaps: usize,
        #[arg(long, default_value = "multiplicity.csv")]
        out: PathBuf,
        #[arg(long, default_value = "multiplicity.json")]
        report: PathBuf,
        /// Write each critical point to `<prefix><component>.gpxf`.
        #[arg(long = "fields-prefix")]
        fields_prefix: Option<String>,
    },
}

/// Exit codes.
pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_CHECKS: i32 = 2;

fn print_json<T: Serialize>(v: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(v)?);
    Ok(())
}

fn eps_spec(s: &Option<String>) -> Result<Option<EpsSpec>> {
    s.as_deref().map(EpsSpec::parse).transpose()
}

fn from_sidecar(path: &Path, key: &str) -> Option<f64> {
    pipeline::sidecar(path)?.get(key)?.as_f64()
}

fn checks(passed: bool) -> i32 {
    if passed {
        EXIT_OK
    } else {
        EXIT_CHECKS
    }
}

/// Runs one command; returns the exit code.
pub fn run(cli: &Cli) -> Result<i32> {
    let wd = &cli.workdir;
    match &cli.command {
        Command::Ansatz { config, p, phi, eps, out } => {
            let ctx = Ctx::load(&config.config, wd)?;
            let x = ctx.cfg.build_field()?;
            let alpha = pipeline::resolve_alpha(&ctx, &x)?.alpha;
            let (u, rec) = pipeline::ansatz_run(&ctx, &x, alpha, parse_point(p)?, *phi, eps_spec(eps)?)?;
            ctx.write_field(out, &u)?;
            let line = format!("{}\n", serde_json::to_string(&rec)?);
            crate::torus::io::write_atomic(&ctx.resolve(out).with_extension("jsonl"), line.as_bytes())?;
            print!("{line}");
            Ok(checks(rec.passed))
        }
        Command::Minimize { config, init, out, report, phi, eps } => {
            let ctx = Ctx::load(&config.config, wd)?;
            let x = ctx.cfg.build_field()?;
            let u0 = ctx.read_field(init)?;
            let side = ctx.resolve(init);
            let phi = phi.or_else(|| from_sidecar(&side, "phi")).unwrap_or_else(|| momentum(&u0, &x));
            let eps = eps.or_else(|| from_sidecar(&side, "eps")).ok_or_else(|| GpxError::Validation {
                key: "eps".into(),
                msg: "pass --eps or keep the .jsonl record next to --init".into(),
            })?;
            let (u, rec) = pipeline::minimize_run(&ctx, &x, &u0, phi, eps)?;
            ctx.write_field(out, &u)?;
            let line = serde_json::json!({ "phi": phi, "eps": eps, "energy": rec.report.final_energy, "meta": rec.meta });
            crate::torus::io::write_atomic(&ctx.resolve(out).with_extension("jsonl"), format!("{line}\n").as_bytes())?;
            ctx.write_json(report, &rec)?;
            print_json(&rec)?;
            Ok(checks(rec.report.converged))
        }
        Command::Scan { config, phis, eps_list, out } => {
            let ctx = Ctx::load(&config.config, wd)?;
            let x = ctx.cfg.build_field()?;
            let phis = parse_list("phis", phis)?;
            let eps: Vec<EpsSpec> = eps_list.split(',').map(EpsSpec::parse).collect::<Result<_>>()?;
            let rows = pipeline::scan(&ctx, &x, &phis, &eps)?;
            let mut body = String::from(pipeline::ScanRow::HEADER);
            rows.iter().for_each(|r| body.push_str(&r.csv()));
            ctx.write_csv(out, &body)?;
            print!("{body}");
            Ok(checks(rows.iter().all(|r| r.converged)))
        }
        Command::Iso { config, phi, seeds, out, table } => {
            let ctx = Ctx::load(&config.config, wd)?;
            let x = ctx.cfg.build_field()?;
            let phis = match phi {
                Some(s) => parse_list("phi", s)?,
                None => ctx.cfg.isoperimetric.phis.clone(),
            };
            let rep = pipeline::iso(&ctx, &x, &phis, seeds.unwrap_or(ctx.cfg.isoperimetric.seeds))?;
            ctx.write_csv(out, &loops_to_csv(&rep.loops))?;
            ctx.write_csv(table, &rep.table_csv())?;
            print_json(&rep)?;
            Ok(checks(rep.passed))
        }
        Command::Diag { config, input, phi, eps, seed_point } => {
            let ctx = Ctx::load(&config.config, wd)?;
            let x = ctx.cfg.build_field()?;
            let u = ctx.read_field(input)?;
            let side = ctx.resolve(input);
            let phi = phi.or_else(|| from_sidecar(&side, "phi")).unwrap_or_else(|| momentum(&u, &x));
            let eps = eps.or_else(|| from_sidecar(&side, "eps")).ok_or_else(|| GpxError::Validation {
                key: "eps".into(),
                msg: "pass --eps or keep the .jsonl record next to --in".into(),
            })?;
            let seed = seed_point.as_deref().map(parse_point).transpose()?;
            let rep = pipeline::diagnose(&ctx, &x, &u, phi, eps, seed)?;
            print_json(&rep)?;
            Ok(checks(rep.passed))
        }
        Command::CheckLemmas { config } => {
            let ctx = Ctx::load(&config.config, wd)?;
            let rep = pipeline::check_lemmas(&ctx)?;
            print_json(&rep)?;
            Ok(checks(rep.passed))
        }
        Command::Multiplicity { config, phi, eps, gaps, out, report, fields_prefix } => {
            let ctx = Ctx::load(&config.config, wd)?;
            let x = ctx.cfg.build_field()?;
            let rep = pipeline::multiplicity(&ctx, &x, *phi, eps_spec(eps)?, *gaps)?;
            let table = rep.table_csv();
            ctx.write_csv(out, &table)?;
            ctx.write_json(report, &rep)?;
            if let Some(prefix) = fields_prefix {
                for p in &rep.points {
                    ctx.write_field(Path::new(&format!("{prefix}{}.gpxf", p.component)), &p.u)?;
                }
            }
            print!("{table}");
            println!("verdict: {} distinct critical points for cat(Σ) = {}: {}", rep.distinct_components, rep.cat_sigma, if rep.verdict { "pass" } else { "fail" });
            Ok(checks(rep.verdict))
        }
    }
}

/// Caps the rayon pool at `GPX_THREADS` when set.
pub fn init_threads() -> Result<()> {
    if let Ok(v) = std::env::var("GPX_THREADS") {
        let n: usize = v.trim().parse().map_err(|_| GpxError::Validation { key: "GPX_THREADS".into(), msg: format!("`{v}` is not a count") })?;
        if n == 0 {
            return Err(GpxError::Validation { key: "GPX_THREADS".into(), msg: "must be positive".into() });
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| GpxError::Validation { key: "GPX_THREADS".into(), msg: e.to_string() })?;
    }
    Ok(())
}

/// Parses arguments, runs and maps errors to exit code 1.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_ERROR } else { EXIT_OK };
        }
    };
    match init_threads().and_then(|_| run(&cli)) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_ERROR
        }
    }
}
