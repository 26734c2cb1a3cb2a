//! Observed convergence orders from manufactured solutions, written to
//! `converge.csv` in a scratch directory.
//!
//! ```bash
//! cargo run --release --example convergence
//! ```

use conelab::runner::{converge, GridConfig, RunConfig};

fn main() -> conelab::error::Result<()> {
    let dir = std::env::temp_dir().join("conelab-convergence");
    for (eq, family) in [("FREE", "MANUFACTURED_TRIG"), ("JOHN1", "MANUFACTURED_BUMP"), ("JOHN2", "MANUFACTURED_BUMP")] {
        let mut cfg = RunConfig::default();
        cfg.equation.catalog = eq.into();
        cfg.data.family = family.into();
        cfg.data.amplitude = if family == "MANUFACTURED_TRIG" { 2.0 } else { 0.5 };
        cfg.data.center = 3.0;
        cfg.data.width = 0.75;
        cfg.grid = GridConfig { r_in: 1.0, r_out: 6.0, n: 101 };
        cfg.run.t_end = 2.0;
        // boundary drives come from the exact solution, so no causal padding is needed
        cfg.solver.check_padding = false;
        cfg.diagnostics.u = vec![-3.0];
        cfg.output.dir = dir.join(eq.to_ascii_lowercase());

        let report = converge(&cfg, &[1, 2, 4, 8])?;
        println!("{eq} with {family}:");
        for l in &report.levels {
            println!("  n = {:>4}  dr = {:.5}  max error {:.3e}", l.n, l.dr, l.solution_error);
        }
        for o in &report.orders {
            let orders: Vec<String> = o.orders.iter().map(|p| format!("{p:.3}")).collect();
            println!("  {:<15} orders [{}]", o.diagnostic, orders.join(", "));
        }
    }
    println!("CSV files under {}", dir.display());
    Ok(())
}
