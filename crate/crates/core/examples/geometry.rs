//! The cone chart: tortoise coordinate, optical labels, null-frame weights
//! and the trust region `{u <= u0}`.
//!
//! ```bash
//! cargo run --example geometry
//! ```

use conelab::geometry::{default_margin, FoliationChart};

fn main() -> conelab::error::Result<()> {
    let chart = FoliationChart::new(0.05, 2.0)?;
    println!("m = {}, R = {}, u0 = -r*(R) = {:.6}", chart.mass_param(), chart.inner_radius(), chart.u0());

    println!("\n{:>8} {:>12} {:>10} {:>10} {:>10}", "r", "r*", "b", "Lu", "Lbar u");
    for r in [1.0, 2.0, 5.0, 10.0, 50.0, 200.0] {
        let w = chart.frame_weights(r)?;
        println!("{r:>8} {:>12.6} {:>10.6} {:>10.6} {:>10.6}", chart.r_star(r)?, w.lapse_b, w.lu, w.lbar_u);
    }

    // (t, r) -> (u, ubar) -> back
    let p = chart.coords(3.0, 12.0)?;
    let q = chart.point_at(p.u, p.ubar)?;
    println!("\n(t, r) = (3, 12) has u = {:.6}, ubar = {:.6}; inverse gives r = {:.12}", p.u, p.ubar, q.r);

    let margin = default_margin(0.05, 1.0);
    for (t, r) in [(0.0, 3.0), (2.0, 3.0), (10.0, 30.0)] {
        println!("trusted({t}, {r}) = {}", chart.in_trust_region(t, r, margin));
    }
    Ok(())
}
