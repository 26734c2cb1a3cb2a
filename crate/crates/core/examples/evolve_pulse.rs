//! Evolves an exact outgoing pulse with the free equation and compares the
//! numerical field against `F(t - r)/r` at three resolutions.
//!
//! ```bash
//! cargo run --release --example evolve_pulse
//! ```

use conelab::equations::EquationSpec;
use conelab::geometry::FoliationChart;
use conelab::initial_data::{make_data, DataFamily, RadialGrid};
use conelab::oracles::{dalembert_exact, DalembertDrive, PulseProfile};
use conelab::solver::{evolve, solution_error, SolverSettings};

fn main() -> conelab::error::Result<()> {
    let profile = PulseProfile::gaussian(1.0, -5.0, 1.0);
    let chart = FoliationChart::new(0.05, 2.0)?;
    let spec = EquationSpec::free();
    let settings = SolverSettings::default();
    let t_end = 12.0;

    let mut previous: Option<f64> = None;
    for n in [201, 401, 801] {
        let grid = RadialGrid::new(1.0, 31.0, n)?;
        let data = make_data(&DataFamily::OutgoingPulse { profile }, &grid, chart.inner_radius(), None)?;
        // exact boundary drives keep the comparison free of boundary error
        let (traj, blowup) = evolve(&[data], &spec, &chart, &grid, t_end, &settings, Some(&DalembertDrive(profile)))?;
        assert!(!blowup.detected);
        let last = traj.snapshots.last().unwrap();
        let (max, rms) = solution_error(last, &grid, 0, false, |t, r| dalembert_exact(&profile, t, r).unwrap().phi);
        let order = previous.map(|p| format!("  order {:.2}", (p / max).log2())).unwrap_or_default();
        println!("dr = {:.4}: steps {:>5}, max error {max:.3e}, rms {rms:.3e}{order}", grid.dr(), traj.steps);
        previous = Some(max);
    }
    Ok(())
}
