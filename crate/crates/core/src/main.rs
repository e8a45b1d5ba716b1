use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use mgt_core::analysis::fit_rate;
use mgt_core::harness::{read_sweep_csv, run_single, run_sweep, Config};
use mgt_core::validation::quick_checks;

#[derive(Parser)]
#[command(name = "mgt", version, about = "Third-order acoustic wave simulations and vanishing-diffusivity sweeps")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a single simulation at `scenario.delta`.
    Run {
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Run a diffusivity sweep and fit the convergence rate.
    Sweep {
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Run the oracle and consistency checks.
    Validate,
    /// Re-fit the convergence rate of an existing sweep.csv.
    Rate { sweep_csv: PathBuf },
}

#[derive(Args)]
struct Overrides {
    /// Comma-separated diffusivities, e.g. 0,1e-4,1e-3.
    #[arg(long, value_delimiter = ',')]
    deltas: Option<Vec<f64>>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    cfl: Option<f64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    parallelism: Option<usize>,
    /// Accepted for compatibility; all computations are deterministic.
    #[arg(long)]
    seed: Option<u64>,
}

impl Overrides {
    fn apply(&self, cfg: &mut Config) {
        if let Some(d) = &self.deltas {
            cfg.sweep.deltas = d.clone();
        }
        if let Some(t) = self.tau {
            cfg.medium.tau = Some(t);
        }
        if let Some(c) = self.cfl {
            cfg.newmark.cfl = c;
        }
        if let Some(o) = &self.out {
            cfg.sweep.output_dir = o.clone();
        }
        if let Some(p) = self.parallelism {
            cfg.sweep.parallelism = p;
        }
    }
}

fn load(path: &PathBuf, o: &Overrides) -> mgt_core::Result<Config> {
    let mut cfg = Config::load(path)?;
    o.apply(&mut cfg);
    Ok(cfg)
}

fn run(cli: Cli) -> mgt_core::Result<bool> {
    match cli.command {
        Command::Run { config, overrides } => {
            let cfg = load(&config, &overrides)?;
            let s = run_single(&cfg)?;
            println!(
                "steps {} dt {:e} h {:e} max_fp_iters {} max_energy {:e}",
                s.steps, s.dt, s.h, s.max_fp_iters, s.max_energy
            );
            println!("output in {}", cfg.sweep.output_dir.display());
            Ok(true)
        }
        Command::Sweep { config, overrides } => {
            let cfg = load(&config, &overrides)?;
            let out = run_sweep(&cfg)?;
            println!("{:>10} {:>14} {:>12} {:>6}", "delta", "err_rel", "dt", "iters");
            for e in &out.entries {
                match (&e.record, &e.error) {
                    (Some(r), _) => println!(
                        "{:>10e} {:>14.6e} {:>12.4e} {:>6}",
                        r.delta, r.err_rel, r.dt, r.max_fp_iters
                    ),
                    (None, Some(msg)) => println!("{:>10e} failed: {msg}", e.delta),
                    (None, None) => {}
                }
            }
            match &out.rate {
                Ok(f) => println!("slope {:.4}", f.slope),
                Err(e) => println!("rate fit: {e}"),
            }
            println!("output in {}", cfg.sweep.output_dir.display());
            Ok(out.entries.iter().all(|e| e.error.is_none()))
        }
        Command::Validate => {
            let checks = quick_checks();
            for c in &checks {
                println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
            }
            Ok(checks.iter().all(|c| c.passed))
        }
        Command::Rate { sweep_csv } => {
            let f = fit_rate(&read_sweep_csv(&sweep_csv)?)?;
            println!("slope {:.6} intercept {:.6}", f.slope, f.intercept);
            for (d, r) in &f.ratios {
                println!("{d:>10e} err/delta {r:.6e}");
            }
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
