//! Energy and pointwise decay along the cones `H_u` for tail data, with
//! power-law fits in `u_+ = 1 + |u|`.
//!
//! Pass `massive` to add a constant potential `q0 = 1`; the tail power is
//! then raised above the massive finite-norm threshold.
//!
//! ```bash
//! cargo run --release --example decay_scan
//! cargo run --release --example decay_scan -- massive
//! ```

use conelab::diagnostics::{fit_decay_exponent, fit_power_law, u_plus, DecayField};
use conelab::runner::{execute, write_energies_csv, GridConfig, RunConfig};

fn main() -> conelab::error::Result<()> {
    let massive = std::env::args().any(|a| a == "massive");
    let gamma0 = 1.5;

    let mut cfg = RunConfig::default();
    cfg.data.family = "POLY_TAIL".into();
    cfg.data.gamma0 = gamma0;
    cfg.data.power = if massive { 2.3 } else { 1.3 };
    if massive {
        cfg.potential.kind = "CONSTANT".into();
        cfg.potential.q0 = 1.0;
    }
    cfg.grid = GridConfig { r_in: 1.0, r_out: 211.0, n: 2101 };
    cfg.run.t_end = 100.0;
    cfg.solver.snap_cadence = 0.1;
    cfg.diagnostics.u_min = -40.0;
    cfg.diagnostics.u_max = -4.0;
    cfg.diagnostics.u_count = 10;
    cfg.diagnostics.ubar_max = Some(200.0);
    cfg.diagnostics.flux = false;

    let out = execute(&cfg)?;
    write_energies_csv(&out.records, std::io::stdout().lock())?;

    println!();
    for field in [DecayField::EH, DecayField::MaxR32Lphi, DecayField::MaxRu12Lbphi, DecayField::MaxQR52Phi2] {
        match fit_decay_exponent(&out.records, field, None) {
            Ok(f) => println!("{:<16} ~ u_+^{:+.3}  (max deviation {:.2})", field.column(), f.exponent, f.max_deviation),
            Err(e) => println!("{:<16} no fit: {e}", field.column()),
        }
    }

    let normalized: Vec<(f64, f64)> = out.records.iter().map(|r| (r.u, u_plus(r.u).powf(gamma0) * r.e_h)).collect();
    let slope = fit_power_law(&normalized)?.exponent;
    println!("\nu_+^gamma0 E(H_u) has log-log slope {slope:+.3}");
    Ok(())
}
