//! `aymh`: validate, analyze and solve flat Higgs bundle scenarios.

mod commands;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use affine_ymh::calculus::Mutation;
use affine_ymh::scenario::ScenarioConfig;
use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use commands::Outcome;

#[derive(Parser)]
#[command(name = "aymh", version, about = "Yang-Mills-Higgs metrics on flat Higgs bundles over affine tori")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check the torus metric and the bundle data; exit 1 if any check fails.
    Validate(RunArgs),
    /// Degree, slope, Einstein factor and stability verdict.
    Analyze(RunArgs),
    /// Continuity-method solve, with destabilizer extraction on blow-up.
    Solve(RunArgs),
    /// Bogomolov integral at the reference metric.
    Bogomolov(RunArgs),
    /// Built-in calculus, Chern identity and degree checks.
    Selftest {
        /// Flip one sign convention (wedge, dbar, nu); the run should then fail.
        #[arg(long)]
        mutate: Option<String>,
        #[arg(long, default_value_t = 16)]
        grid: usize,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Scenario JSON file; repeat for a batch.
    #[arg(long, required = true)]
    config: Vec<PathBuf>,
    /// Output directory (overrides `output.dir` in the config).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Grid resolution override.
    #[arg(long)]
    grid: Option<usize>,
    /// Override `solver.eps_min`.
    #[arg(long)]
    eps_min: Option<f64>,
    /// Scenarios run concurrently in a batch.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Write per-step telemetry CSV (solve only).
    #[arg(long)]
    csv: bool,
}

fn load(path: &Path, args: &RunArgs) -> Result<ScenarioConfig> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut cfg = ScenarioConfig::from_json(&text).with_context(|| format!("in {}", path.display()))?;
    if let Some(n) = args.grid {
        cfg = cfg.with_grid(n);
    }
    if let Some(e) = args.eps_min {
        cfg.solver.get_or_insert_with(Default::default).eps_min = e;
    }
    if cfg.name.is_none() {
        cfg.name = path.file_stem().map(|s| s.to_string_lossy().into_owned());
    }
    Ok(cfg)
}

fn run_one(cmd: &str, path: &Path, args: &RunArgs, batch: bool) -> Result<bool> {
    let start = Instant::now();
    let cfg = load(path, args)?;
    let outcome: Outcome = match cmd {
        "validate" => commands::validate(&cfg),
        "analyze" => commands::analyze(&cfg)?,
        "solve" => commands::solve(&cfg)?,
        "bogomolov" => commands::bogomolov(&cfg)?,
        _ => unreachable!(),
    };
    let Outcome { mut report, summary, telemetry, failed } = outcome;
    report.wall_time_s = start.elapsed().as_secs_f64();
    if !report.all_finite() {
        bail!("report for {} contains non-finite values", path.display());
    }
    let json = serde_json::to_string_pretty(&report)?;

    let out_cfg = cfg.output.clone().unwrap_or_default();
    let mut dir = args.out.clone().or(out_cfg.dir.map(PathBuf::from));
    if batch {
        dir = dir.map(|d| d.join(cfg.name.as_deref().unwrap_or("scenario")));
    }
    let want_csv = (args.csv || out_cfg.csv) && cmd == "solve";
    match &dir {
        Some(d) => {
            fs::create_dir_all(d).with_context(|| format!("creating {}", d.display()))?;
            fs::write(d.join("report.json"), &json)?;
            if want_csv {
                commands::write_telemetry(&d.join("telemetry.csv"), telemetry.as_deref().unwrap_or_default())?;
            }
            for line in &summary {
                println!("{line}");
            }
            println!("wrote {}", d.join("report.json").display());
        }
        None => {
            if want_csv {
                bail!("--csv needs an output directory (--out or output.dir)");
            }
            for line in &summary {
                eprintln!("{line}");
            }
            println!("{json}");
        }
    }
    Ok(!failed)
}

fn run(cmd: &str, args: &RunArgs) -> Result<bool> {
    let batch = args.config.len() > 1;
    if args.jobs <= 1 || !batch {
        let mut ok = true;
        for p in &args.config {
            ok &= run_one(cmd, p, args, batch)?;
        }
        return Ok(ok);
    }
    let pool = rayon::ThreadPoolBuilder::new().num_threads(args.jobs).build()?;
    let results: Vec<Result<bool>> = pool.install(|| args.config.par_iter().map(|p| run_one(cmd, p, args, batch)).collect());
    let mut ok = true;
    for r in results {
        ok &= r?;
    }
    Ok(ok)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Validate(a) => run("validate", a),
        Command::Analyze(a) => run("analyze", a),
        Command::Solve(a) => run("solve", a),
        Command::Bogomolov(a) => run("bogomolov", a),
        Command::Selftest { mutate, grid } => (|| {
            let m = mutate.as_deref().map(commands::parse_mutation).transpose()?.unwrap_or(Mutation::default());
            let start = Instant::now();
            let (checks, ok) = commands::selftest(m, *grid)?;
            for c in &checks {
                println!("suite {} {:<32} {:>10.3e}  tol {:.0e}  {}", c.suite, c.name, c.value, c.tol, if c.passed { "ok" } else { "FAIL" });
            }
            println!("selftest {} in {:.1} s", if ok { "passed" } else { "FAILED" }, start.elapsed().as_secs_f64());
            Ok(ok)
        })(),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
