use cgolab::harness::{cmd_quasimode, cmd_reconstruct, cmd_slice_study, cmd_sweep, cmd_verify, RunConfig};
use cgolab::Error;
use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "cgolab", version, about = "CGO solutions, DtN data and coefficient reconstruction on cylinders")]
struct Cli {
    /// TOML run configuration (defaults are used when omitted).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run the invariant suites and write verify.csv.
    Verify,
    /// Build one quasimode and report its residual and L4 norm.
    Quasimode {
        #[arg(long)]
        k: f64,
        #[arg(long, default_value_t = 1.0)]
        tau: f64,
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        lambda: f64,
    },
    /// One reconstruction with field dumps, or the noiseless slice study.
    Reconstruct {
        #[arg(long, default_value_t = 16.0)]
        k: f64,
        #[arg(long, default_value_t = 0.0)]
        eps: f64,
        /// Fit the slice error against varsigma instead.
        #[arg(long)]
        study: bool,
    },
    /// Stability sweep over the configured k and eps lists.
    Sweep,
}

fn load(cli: &Cli) -> cgolab::Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = &cli.out {
        cfg.out = o.display().to_string();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: &Cli, cfg: &RunConfig) -> cgolab::Result<bool> {
    match &cli.cmd {
        Cmd::Verify => {
            let rep = cmd_verify(cfg)?;
            print!("{}", rep.to_csv());
            Ok(rep.passed())
        }
        Cmd::Quasimode { k, tau, lambda } => {
            let r = cmd_quasimode(cfg, *k, *tau, *lambda)?;
            println!("varsigma = {}", r.varsigma);
            println!("relative_residual = {:e}", r.relative_residual);
            println!("discrete_relative_residual = {:e}", r.discrete_relative_residual);
            println!("l4_norm = {:e}", r.l4_norm);
            println!("l4_ratio = {:e}", r.l4_ratio);
            Ok(true)
        }
        Cmd::Reconstruct { k, eps, study } => {
            if *study {
                let s = cmd_slice_study(cfg)?;
                for (v, e) in s.varsigma.iter().zip(&s.mean) {
                    println!("varsigma = {v}  mean_error = {e:e}");
                }
                println!("slope = {:.4}", s.slope);
            } else {
                let r = cmd_reconstruct(cfg, *k, *eps)?;
                println!(
                    "case = {}  tau = {}  lambda_window = {}",
                    r.schedule.case, r.schedule.tau, r.schedule.window
                );
                println!("l2_error = {:e}", r.metrics.l2_error);
                println!("windowed_error = {:e}", r.metrics.windowed_error);
                println!("tail = {:e}  tail_budget = {:e}", r.metrics.tail, r.metrics.tail_budget);
                println!("failed_tasks = {}", r.metrics.failed);
            }
            Ok(true)
        }
        Cmd::Sweep => {
            let c = cmd_sweep(cfg)?;
            print!("{}", c.to_csv());
            Ok(c.rows.iter().all(|r| r.error.is_none()))
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cfg = match load(&cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.threads {
        builder = builder.num_threads(n.max(1));
    }
    let pool = match builder.build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    match pool.install(|| run(&cli, &cfg)) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e @ Error::Config { .. }) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
