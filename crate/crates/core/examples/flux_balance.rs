//! Energy flux identity on `D_u^ubar`: flux through `H_u` and `Hbar_ubar`
//! (plus bulk) against the initial energy in the `Sigma_0` annulus.
//!
//! ```bash
//! cargo run --release --example flux_balance
//! ```

use conelab::diagnostics::flux_balance_residual;
use conelab::runner::{execute, GridConfig, RunConfig};

fn main() -> conelab::error::Result<()> {
    let (u, ubar) = (-3.0, 25.0);
    for n in [401, 801, 1601] {
        let mut cfg = RunConfig::default();
        cfg.data.family = "OUTGOING_PULSE".into();
        cfg.data.center = -5.0;
        cfg.data.width = 1.0;
        cfg.grid = GridConfig { r_in: 1.0, r_out: 31.0, n };
        // snapshot spacing sets the time-interpolation error of the slices
        cfg.solver.snap_cadence = 0.05;
        cfg.diagnostics.u = vec![u];
        cfg.diagnostics.flux = false;
        let out = execute(&cfg)?;
        let fb = flux_balance_residual(&out.trajectory, u, ubar, 2001)?;
        println!(
            "n = {n:>4}: F(H) {:.6}  F(Hbar) {:.6}  bulk {:.2e}  Sigma0 {:.6}  residual {:.3e}",
            fb.flux_h, fb.flux_hbar, fb.bulk, fb.sigma0, fb.residual
        );
    }
    Ok(())
}
