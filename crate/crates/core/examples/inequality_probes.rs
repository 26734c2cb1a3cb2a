//! Trace, Hardy and Sobolev inequalities probed on closed-form test
//! functions: the worst LHS/RHS ratio per inequality, its stability under
//! quadrature refinement, and exact homogeneity.
//!
//! ```bash
//! cargo run --release --example inequality_probes
//! ```

use conelab::geometry::FoliationChart;
use conelab::probes::{probe_suite, ProbeDomain, ProbeSettings, TestFamily};

fn main() -> conelab::error::Result<()> {
    let chart = FoliationChart::new(0.05, 2.0)?;
    let (u, ubar) = (-4.0, 40.0);
    let domain = ProbeDomain::new(chart, u, ubar)?;
    let family = TestFamily::shipped(u, ubar);
    println!("{} members on D_u^ubar with u = {u}, ubar = {ubar}\n", family.members.len());

    for rep in probe_suite(&family, &domain, &ProbeSettings::default())? {
        let worst = rep
            .rows
            .iter()
            .filter(|r| r.ratio == Some(rep.max_ratio))
            .map(|r| r.member.as_str())
            .next()
            .unwrap_or("-");
        println!(
            "{:<15} {:<15} max ratio {:.4}  (worst: {worst})  stable {}  homogeneous {}",
            rep.inequality.name(),
            rep.variant,
            rep.max_ratio,
            rep.stable,
            rep.homogeneous
        );
    }
    Ok(())
}
