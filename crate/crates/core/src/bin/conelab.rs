use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use conelab::runner::{self, RunConfig, SweepAxis};

/// Spherically symmetric nonlinear waves on Schwarzschild-cone foliations.
#[derive(Parser)]
#[command(version, about)]
struct Cli {
    /// Override `output.dir` from the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evolve, diagnose and write energies.csv, pointwise.csv, manifest.json.
    Run { config: PathBuf },
    /// One run per value of AMPLITUDE, MASS_PARAM or GAMMA0.
    Sweep {
        config: PathBuf,
        #[arg(long)]
        axis: String,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        values: Vec<f64>,
    },
    /// Observed convergence orders against the config's exact solution.
    Converge {
        config: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "1,2,4")]
        levels: Vec<usize>,
    },
    /// Inequality probes selected by the `probe.*` keys.
    Probe { config: PathBuf },
    /// Power-law fit of one CSV column against u_+ = 1 + |u|.
    Fit {
        csv: PathBuf,
        #[arg(long, default_value = "E_H")]
        field: String,
        /// `lo,hi` range of u to include.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        urange: Option<Vec<f64>>,
    },
}

fn load(path: &PathBuf, out: &Option<PathBuf>) -> Result<RunConfig> {
    let mut cfg = RunConfig::load(path).with_context(|| format!("reading {}", path.display()))?;
    if let Some(dir) = out {
        cfg.output.dir = dir.clone();
    }
    Ok(cfg)
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let threads = runner::configure_threads()?;
    log::info!("using {threads} worker threads");

    match cli.command {
        Command::Run { config } => {
            let cfg = load(&config, &cli.out)?;
            let m = runner::run(&cfg)?;
            println!("t_reached = {}  steps = {}  c_max = {}", m.summary.t_reached, m.summary.steps, m.summary.c_max);
            if m.blowup.detected {
                println!(
                    "blow-up: cause {:?} at t = {:?}, r = {:?}, inside_cone = {}",
                    m.blowup.cause, m.blowup.t_blow, m.blowup.r_blow, m.blowup.inside_cone
                );
            }
            for (field, fit) in &m.decay_fits {
                if let Some(f) = fit {
                    println!("{field:>16}  exponent {:+.4}  max_dev {:.3}", f.exponent, f.max_deviation);
                }
            }
            println!("wrote {}", cfg.output.dir.display());
        }
        Command::Sweep { config, axis, values } => {
            let cfg = load(&config, &cli.out)?;
            let axis = SweepAxis::parse(&axis)?;
            let rows = runner::sweep(&cfg, axis, &values)?;
            for r in &rows {
                match (&r.error, r.blowup) {
                    (Some(e), _) => println!("{} = {}: FAILED ({e})", axis.name(), r.value),
                    (None, Some(b)) => println!("{} = {}: blow-up {} t_blow {:?}", axis.name(), r.value, b.detected, b.t_blow),
                    (None, None) => {}
                }
            }
            println!("wrote {}", cfg.output.dir.join("sweep.csv").display());
        }
        Command::Converge { config, levels } => {
            let cfg = load(&config, &cli.out)?;
            let report = runner::converge(&cfg, &levels)?;
            for o in &report.orders {
                let orders: Vec<String> = o.orders.iter().map(|p| format!("{p:.3}")).collect();
                println!("{:>16}  orders [{}]{}", o.diagnostic, orders.join(", "), if o.monotone { "" } else { "  NON-MONOTONE" });
            }
        }
        Command::Probe { config } => {
            let cfg = load(&config, &cli.out)?;
            for rep in runner::run_probes(&cfg)? {
                println!(
                    "{:>15} {:<14} rows {:>3}  max ratio {:.4e}  stable {}  homogeneous {}",
                    rep.inequality.name(),
                    rep.variant,
                    rep.ratio_rows(),
                    rep.max_ratio,
                    rep.stable,
                    rep.homogeneous
                );
            }
        }
        Command::Fit { csv, field, urange } => {
            let range = match urange.as_deref() {
                None => None,
                Some([a, b]) => Some((*a, *b)),
                Some(_) => anyhow::bail!("--urange takes exactly two values: lo,hi"),
            };
            let fit = runner::fit_csv(&csv, &field, range)?;
            println!(
                "{field}: exponent {:+.6}  intercept {:.6}  max_dev {:.4}  points {}  nonpositive {}",
                fit.exponent, fit.intercept, fit.max_deviation, fit.points, fit.nonpositive
            );
        }
    }
    Ok(())
}
