//! Closed-form references: Burgers shock time, the exact outgoing free wave,
//! and manufactured solutions with their sources.
//!
//! ```bash
//! cargo run --example oracles
//! ```

use std::f64::consts::PI;

use conelab::equations::{Catalog, EquationSpec};
use conelab::numerics::{d1_4th, d2_4th};
use conelab::oracles::{burgers_shock_time, dalembert_exact, manufactured_solution, ManufacturedKind, PulseProfile};

fn main() -> conelab::error::Result<()> {
    // w_t + w w_x = 0 with w0 = -sin(x)/2 breaks at T = 2
    let xs: Vec<f64> = (0..2001).map(|i| 2.0 * PI * i as f64 / 2000.0).collect();
    let w0: Vec<f64> = xs.iter().map(|x| -0.5 * x.sin()).collect();
    if let Some(s) = burgers_shock_time(&xs, &w0)? {
        println!("Burgers shock: brute force {:.6}, -1/min w0' = {:.6}", s.brute_force, s.analytic);
    }

    let p = PulseProfile::gaussian(1.0, -6.0, 2.0);
    let h = 0.01;
    let (t, r) = (4.0, 9.0);
    let along_r: Vec<f64> = (-2..=2).map(|k| dalembert_exact(&p, t, r + k as f64 * h).unwrap().phi).collect();
    let along_t: Vec<f64> = (-2..=2).map(|k| dalembert_exact(&p, t + k as f64 * h, r).unwrap().phi).collect();
    let residual = -d2_4th(&along_t, 2, h) + d2_4th(&along_r, 2, h) + 2.0 / r * d1_4th(&along_r, 2, h);
    let v = dalembert_exact(&p, t, r)?;
    println!("F(t-r)/r at (t, r) = ({t}, {r}): phi {:.6e}, L phi {:.6e}, Lbar phi {:.6e}, wave residual {residual:.1e}", v.phi, v.lphi, v.lbarphi);

    for catalog in [Catalog::Free, Catalog::John1, Catalog::John2] {
        let spec = EquationSpec::from_catalog(catalog);
        let m = manufactured_solution(ManufacturedKind::TravelingBump { amplitude: 1.0, center: 3.0, width: 0.75 }, &spec)?;
        let sources: Vec<String> = [2.5, 3.0, 3.5].iter().map(|&r| format!("{:+.4}", m.source(0.0, r))).collect();
        println!("{:<6} traveling-bump source at t = 0, r = 2.5, 3, 3.5: {}", catalog.name(), sources.join(" "));
    }
    Ok(())
}
