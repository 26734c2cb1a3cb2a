//! Lifespan against amplitude for JOHN1: one run per value, run in
//! parallel, with a combined `sweep.csv`.
//!
//! ```bash
//! CONELAB_THREADS=4 cargo run --release --example amplitude_sweep
//! ```

use conelab::runner::{configure_threads, sweep, GridConfig, RunConfig, SweepAxis};

fn main() -> conelab::error::Result<()> {
    let threads = configure_threads()?;
    let mut cfg = RunConfig::default();
    cfg.equation.catalog = "JOHN1".into();
    cfg.data.family = "ANNULUS_BUMP".into();
    cfg.data.center = 4.0;
    cfg.data.width = 1.0;
    cfg.grid = GridConfig { r_in: 1.0, r_out: 31.0, n: 3001 };
    cfg.run.t_end = 12.0;
    cfg.diagnostics.u = vec![-3.0];
    cfg.diagnostics.flux = false;
    cfg.output.dir = std::env::temp_dir().join("conelab-sweep");

    let rows = sweep(&cfg, SweepAxis::Amplitude, &[2.0, 1.5, 1.0, 0.75])?;
    println!("{threads} worker threads");
    for r in &rows {
        match (&r.blowup, &r.error) {
            (Some(b), _) if b.detected => println!("A = {:<5} t_blow = {:.4}", r.value, b.t_blow.unwrap()),
            (Some(_), _) => println!("A = {:<5} no blow-up by t = {}", r.value, cfg.run.t_end),
            (None, Some(e)) => println!("A = {:<5} failed: {e}", r.value),
            (None, None) => {}
        }
    }
    println!("wrote {}", cfg.output.dir.join("sweep.csv").display());
    Ok(())
}
