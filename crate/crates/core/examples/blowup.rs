//! Blow-up for the two John equations with annulus data: detection time,
//! location, cause and whether it happened inside the cone `{u > u0}`.
//!
//! ```bash
//! cargo run --release --example blowup
//! ```

use rayon::prelude::*;

use conelab::runner::{execute, GridConfig, RunConfig};

fn main() {
    let cases: Vec<(&str, f64)> = vec![("JOHN1", 1.0), ("JOHN1", 1.5), ("JOHN1", 2.0), ("JOHN2", 1.0), ("JOHN2", 2.0)];
    let rows: Vec<String> = cases
        .par_iter()
        .map(|&(eq, a)| {
            let mut cfg = RunConfig::default();
            cfg.equation.catalog = eq.into();
            cfg.data.family = "ANNULUS_BUMP".into();
            cfg.data.amplitude = a;
            cfg.data.center = 4.0;
            cfg.data.width = 1.0;
            cfg.grid = GridConfig { r_in: 1.0, r_out: 21.0, n: 2001 };
            cfg.run.t_end = 6.0;
            cfg.diagnostics.u = vec![-3.0];
            cfg.diagnostics.flux = false;
            match execute(&cfg) {
                Ok(o) if o.blowup.detected => format!(
                    "{eq} A = {a}: {:?} at t = {:.4}, r = {:.3}, inside cone: {}",
                    o.blowup.cause.unwrap(),
                    o.blowup.t_blow.unwrap(),
                    o.blowup.r_blow.unwrap(),
                    o.blowup.inside_cone
                ),
                Ok(_) => format!("{eq} A = {a}: no blow-up by t = {}", cfg.run.t_end),
                Err(e) => format!("{eq} A = {a}: {e}"),
            }
        })
        .collect();
    for r in rows {
        println!("{r}");
    }
}
