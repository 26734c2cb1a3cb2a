//! Method-of-lines evolution of the first-order system for `(phi, pi, chi)`
//! with `pi = d_t phi`, `chi = d_r phi`.
//!
//! Second-order centred differences in space (one-sided at the ends),
//! classical RK4 in time, Kreiss–Oliger dissipation, and radiation
//! conditions `L(r phi) = g_out`, `Lbar(r phi) = g_in` at the two ends.
//! Points that leave the trust region keep being evolved, only their mask
//! bit is cleared.

use serde::{Deserialize, Serialize};

use crate::equations::{Derivs, EquationSpec, MAX_FIELDS};
use crate::error::{Error, Result};
use crate::geometry::{default_margin, FoliationChart};
use crate::initial_data::{DataPair, RadialGrid};
use crate::numerics::{d1_4th, d2_4th, derivative_2nd};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundarySide {
    Inner,
    Outer,
}

/// External source terms and boundary data, used by manufactured solutions.
pub trait Forcing: Sync {
    /// Extra term `S` in `g^{ab} d_a d_b phi = N + q phi + S`.
    fn source(&self, field: usize, t: f64, r: f64) -> f64;

    /// `d_t L(r phi)` (outer) or `d_t Lbar(r phi)` (inner) at the boundary.
    fn boundary_drive(&self, _field: usize, _t: f64, _r: f64, _side: BoundarySide) -> f64 {
        0.0
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct FieldArrays {
    pub phi: Vec<f64>,
    pub pi: Vec<f64>,
    pub chi: Vec<f64>,
}

impl FieldArrays {
    fn zeros(n: usize) -> Self {
        Self {
            phi: vec![0.0; n],
            pi: vec![0.0; n],
            chi: vec![0.0; n],
        }
    }

    fn all_finite(&self) -> bool {
        self.phi.iter().chain(&self.pi).chain(&self.chi).all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FieldState {
    pub t: f64,
    pub fields: Vec<FieldArrays>,
    /// Trust-region membership; monotone in time.
    pub valid_mask: Vec<bool>,
}

impl FieldState {
    pub fn from_data(data: &[DataPair], grid: &RadialGrid, chart: &FoliationChart) -> Result<Self> {
        if data.is_empty() || data.len() > MAX_FIELDS {
            return Err(Error::InvalidInput(format!("need 1..={MAX_FIELDS} data pairs, got {}", data.len())));
        }
        let mut fields = Vec::with_capacity(data.len());
        for d in data {
            if d.phi0.len() != grid.n || d.phi1.len() != grid.n {
                return Err(Error::InvalidInput("data length does not match the grid".into()));
            }
            if !d.is_finite() {
                return Err(Error::InvalidInput("initial data contain non-finite values".into()));
            }
            let mut chi = vec![0.0; grid.n];
            derivative_2nd(&d.phi0, grid.dr(), &mut chi);
            fields.push(FieldArrays {
                phi: d.phi0.clone(),
                pi: d.phi1.clone(),
                chi,
            });
        }
        let valid_mask = grid.radii().map(|r| chart.in_trust_region(0.0, r, 0.0)).collect();
        Ok(Self {
            t: 0.0,
            fields,
            valid_mask,
        })
    }

    pub fn n(&self) -> usize {
        self.valid_mask.len()
    }

    pub fn is_finite(&self) -> bool {
        self.fields.iter().all(FieldArrays::all_finite)
    }

    /// Largest `|chi - D_r phi|` over masked-in points.
    pub fn constraint_violation(&self, dr: f64) -> f64 {
        let mut worst: f64 = 0.0;
        let mut d = vec![0.0; self.n()];
        for f in &self.fields {
            derivative_2nd(&f.phi, dr, &mut d);
            for i in 0..self.n() {
                if self.valid_mask[i] {
                    worst = worst.max((f.chi[i] - d[i]).abs());
                }
            }
        }
        worst
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum BlowupCause {
    Nan,
    GradientThreshold,
    LorentzianBreakdown,
    DtCollapse,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct BlowupReport {
    pub detected: bool,
    pub t_blow: Option<f64>,
    pub r_blow: Option<f64>,
    pub cause: Option<BlowupCause>,
    /// Whether `(t_blow, r_blow)` has `u > u0`.
    pub inside_cone: bool,
}

/// Points over which the gradient cap is enforced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum GradientScope {
    #[default]
    All,
    MaskedIn,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlowupThresholds {
    /// Cap as a multiple of the initial maximum gradient.
    pub gradient_factor: f64,
    /// Smallest admissible step as a fraction of the initial step.
    pub dt_floor_factor: f64,
    pub scope: GradientScope,
}

impl Default for BlowupThresholds {
    fn default() -> Self {
        Self {
            gradient_factor: 1e3,
            dt_floor_factor: 1e-3,
            scope: GradientScope::All,
        }
    }
}

/// Absolute limits handed to [`detect_blowup`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectionLimits {
    pub gradient_cap: f64,
    pub dt_floor: f64,
    pub scope: GradientScope,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BlowupStatus {
    Stable,
    Flagged { cause: BlowupCause, r: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverSettings {
    pub sigma: f64,
    pub eps_ko: f64,
    pub snap_cadence: f64,
    /// Trust-region margin; `None` means `2 dr c_max` with the running maximum speed.
    pub margin: Option<f64>,
    pub thresholds: BlowupThresholds,
    /// Reject grids with `r_out < R + c t_end + 10`.
    pub check_padding: bool,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            sigma: 0.4,
            eps_ko: 0.02,
            snap_cadence: 0.25,
            margin: None,
            thresholds: BlowupThresholds::default(),
            check_padding: true,
        }
    }
}

impl SolverSettings {
    fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0 && self.sigma <= 0.5) {
            return Err(Error::InvalidInput(format!("sigma must lie in (0, 0.5], got {}", self.sigma)));
        }
        if !(self.eps_ko >= 0.0) {
            return Err(Error::InvalidInput(format!("eps_ko must be >= 0, got {}", self.eps_ko)));
        }
        if !(self.snap_cadence > 0.0) {
            return Err(Error::InvalidInput(format!("snapshot cadence must be > 0, got {}", self.snap_cadence)));
        }
        if let Some(m) = self.margin {
            if !(m >= 0.0) {
                return Err(Error::InvalidInput(format!("margin must be >= 0, got {m}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub snapshots: Vec<FieldState>,
    pub spec: EquationSpec,
    pub chart: FoliationChart,
    pub grid: RadialGrid,
    pub settings: SolverSettings,
    pub t_end: f64,
    pub steps: usize,
    pub dt_min: f64,
    pub dt_max: f64,
    /// Largest characteristic speed seen during the run.
    pub c_max: f64,
    /// Largest trust-region margin used during the run.
    pub margin: f64,
}

impl Trajectory {
    pub fn t_last(&self) -> f64 {
        self.snapshots.last().map_or(0.0, |s| s.t)
    }

    /// Index `k` with `t_k <= t <= t_{k+1}`.
    pub fn bracket(&self, t: f64) -> Option<usize> {
        let n = self.snapshots.len();
        if n < 2 || t < self.snapshots[0].t || t > self.snapshots[n - 1].t {
            return None;
        }
        let k = self.snapshots.partition_point(|s| s.t <= t);
        Some(k.saturating_sub(1).min(n - 2))
    }

    /// Whether `(t, r)` is trusted under the run's largest margin.
    pub fn trusted(&self, t: f64, r: f64) -> bool {
        self.chart.in_trust_region(t, r, self.margin)
    }
}

/// Largest characteristic speed over the grid (field 0 drives the metric).
pub fn max_speed(state: &FieldState, spec: &EquationSpec, grid: &RadialGrid) -> Result<f64> {
    let f = &state.fields[0];
    spec.characteristic_speed((0..state.n()).map(|i| (f.phi[i], Derivs::new(f.pi[i], f.chi[i]))))
        .map_err(|e| match e {
            Error::LorentzianBreakdown { g00, grr, .. } => {
                let i = (0..state.n())
                    .find(|&i| !spec.metric_unchecked(f.phi[i], Derivs::new(f.pi[i], f.chi[i])).is_lorentzian())
                    .unwrap_or(0);
                Error::LorentzianBreakdown { r: grid.r(i), g00, grr }
            }
            other => other,
        })
}

/// `sigma dr / c_max`.
pub fn cfl_dt(state: &FieldState, spec: &EquationSpec, grid: &RadialGrid, sigma: f64) -> Result<f64> {
    if !(sigma > 0.0 && sigma <= 0.5) {
        return Err(Error::InvalidInput(format!("sigma must lie in (0, 0.5], got {sigma}")));
    }
    Ok(sigma * grid.dr() / max_speed(state, spec, grid)?)
}

/// Maximum of `|D_r pi|` and `|D_r chi|` and its location.
pub fn max_gradient(state: &FieldState, dr: f64, scope: GradientScope) -> (f64, usize) {
    let n = state.n();
    let mut d = vec![0.0; n];
    let mut best = (0.0, 0);
    for f in &state.fields {
        for arr in [&f.pi, &f.chi] {
            derivative_2nd(arr, dr, &mut d);
            for (i, v) in d.iter().enumerate() {
                if scope == GradientScope::MaskedIn && !state.valid_mask[i] {
                    continue;
                }
                let a = v.abs();
                if a > best.0 || a.is_nan() {
                    best = (a, i);
                }
            }
        }
    }
    best
}

/// Checks a state for non-finite values, metric degeneracy, gradient and step-size limits.
pub fn detect_blowup(
    state: &FieldState,
    spec: &EquationSpec,
    grid: &RadialGrid,
    limits: &DetectionLimits,
    dt: f64,
) -> BlowupStatus {
    for f in &state.fields {
        for arr in [&f.phi, &f.pi, &f.chi] {
            if let Some(i) = arr.iter().position(|v| !v.is_finite()) {
                return BlowupStatus::Flagged {
                    cause: BlowupCause::Nan,
                    r: grid.r(i),
                };
            }
        }
    }
    let f0 = &state.fields[0];
    for i in 0..state.n() {
        if !spec.metric_unchecked(f0.phi[i], Derivs::new(f0.pi[i], f0.chi[i])).is_lorentzian() {
            return BlowupStatus::Flagged {
                cause: BlowupCause::LorentzianBreakdown,
                r: grid.r(i),
            };
        }
    }
    let (g, i) = max_gradient(state, grid.dr(), limits.scope);
    if g > limits.gradient_cap {
        return BlowupStatus::Flagged {
            cause: BlowupCause::GradientThreshold,
            r: grid.r(i),
        };
    }
    if dt < limits.dt_floor {
        return BlowupStatus::Flagged {
            cause: BlowupCause::DtCollapse,
            r: grid.r(i),
        };
    }
    BlowupStatus::Stable
}

/// Metric degeneracy met while evaluating the right-hand side.
#[derive(Debug, Clone, Copy)]
struct Breakdown {
    r: f64,
    g00: f64,
    grr: f64,
}

/// Right-hand side evaluator with reusable scratch space.
struct Stepper<'a> {
    spec: &'a EquationSpec,
    grid: RadialGrid,
    eps_ko: f64,
    forcing: Option<&'a dyn Forcing>,
    radii: Vec<f64>,
    q: Vec<f64>,
    dpi: Vec<Vec<f64>>,
    dchi: Vec<Vec<f64>>,
    k: [Vec<FieldArrays>; 4],
    stage: Vec<FieldArrays>,
}

impl<'a> Stepper<'a> {
    fn new(spec: &'a EquationSpec, grid: RadialGrid, eps_ko: f64, forcing: Option<&'a dyn Forcing>, fields: usize) -> Self {
        let n = grid.n;
        let radii: Vec<f64> = grid.radii().collect();
        let q = radii.iter().map(|&r| spec.potential.value(r)).collect();
        let zeros = || vec![FieldArrays::zeros(n); fields];
        Self {
            spec,
            grid,
            eps_ko,
            forcing,
            radii,
            q,
            dpi: vec![vec![0.0; n]; fields],
            dchi: vec![vec![0.0; n]; fields],
            k: [zeros(), zeros(), zeros(), zeros()],
            stage: zeros(),
        }
    }

    fn rhs(&mut self, fields: &[FieldArrays], t: f64, slot: usize) -> std::result::Result<(), Breakdown> {
        let n = self.grid.n;
        let dr = self.grid.dr();
        let nf = fields.len();
        for f in 0..nf {
            derivative_2nd(&fields[f].pi, dr, &mut self.dpi[f]);
            derivative_2nd(&fields[f].chi, dr, &mut self.dchi[f]);
        }
        let out = &mut self.k[slot];
        let mut d = [Derivs::default(); MAX_FIELDS];
        for i in 0..n {
            let r = self.radii[i];
            for f in 0..nf {
                d[f] = Derivs::new(fields[f].pi[i], fields[f].chi[i]);
            }
            let g = self.spec.metric_unchecked(fields[0].phi[i], d[0]);
            if !g.is_lorentzian() {
                return Err(Breakdown { r, g00: g.g00, grr: g.grr });
            }
            let semilinear = self.spec.semilinear_rhs(&d[..nf.max(1)]);
            for f in 0..nf {
                let src = &fields[f];
                let o = &mut out[f];
                o.phi[i] = src.pi[i];
                o.chi[i] = self.dpi[f][i];
                o.pi[i] = if i == 0 {
                    let drive = self.forcing.map_or(0.0, |fc| fc.boundary_drive(f, t, r, BoundarySide::Inner));
                    self.dpi[f][i] + (src.pi[i] + drive) / r
                } else if i == n - 1 {
                    let drive = self.forcing.map_or(0.0, |fc| fc.boundary_drive(f, t, r, BoundarySide::Outer));
                    -self.dpi[f][i] + (drive - src.pi[i]) / r
                } else {
                    let source = self.forcing.map_or(0.0, |fc| fc.source(f, t, r));
                    (g.grr * self.dchi[f][i] + g.gang * 2.0 / r * src.chi[i] + 2.0 * g.g0r * self.dpi[f][i]
                        - semilinear[f]
                        - self.q[i] * src.phi[i]
                        - source)
                        / (-g.g00)
                };
            }
        }
        if self.eps_ko > 0.0 && n > 4 {
            let c = self.eps_ko / dr;
            for f in 0..nf {
                let o = &mut out[f];
                for (src, dst) in [
                    (&fields[f].phi, &mut o.phi),
                    (&fields[f].pi, &mut o.pi),
                    (&fields[f].chi, &mut o.chi),
                ] {
                    for i in 2..n - 2 {
                        dst[i] -= c * (src[i - 2] - 4.0 * src[i - 1] + 6.0 * src[i] - 4.0 * src[i + 1] + src[i + 2]);
                    }
                }
            }
        }
        Ok(())
    }

    fn set_stage(&mut self, base: &[FieldArrays], slot: usize, h: f64) {
        for (f, b) in base.iter().enumerate() {
            let k = &self.k[slot][f];
            let s = &mut self.stage[f];
            for i in 0..b.phi.len() {
                s.phi[i] = b.phi[i] + h * k.phi[i];
                s.pi[i] = b.pi[i] + h * k.pi[i];
                s.chi[i] = b.chi[i] + h * k.chi[i];
            }
        }
    }

    /// One classical RK4 step, in place.
    fn rk4(&mut self, fields: &mut [FieldArrays], t: f64, dt: f64) -> std::result::Result<(), Breakdown> {
        self.rhs(fields, t, 0)?;
        self.set_stage(fields, 0, 0.5 * dt);
        let stage = std::mem::take(&mut self.stage);
        let r = self.rhs(&stage, t + 0.5 * dt, 1);
        self.stage = stage;
        r?;
        self.set_stage(fields, 1, 0.5 * dt);
        let stage = std::mem::take(&mut self.stage);
        let r = self.rhs(&stage, t + 0.5 * dt, 2);
        self.stage = stage;
        r?;
        self.set_stage(fields, 2, dt);
        let stage = std::mem::take(&mut self.stage);
        let r = self.rhs(&stage, t + dt, 3);
        self.stage = stage;
        r?;
        let w = dt / 6.0;
        for (f, field) in fields.iter_mut().enumerate() {
            let [k1, k2, k3, k4] = [&self.k[0][f], &self.k[1][f], &self.k[2][f], &self.k[3][f]];
            for i in 0..field.phi.len() {
                field.phi[i] += w * (k1.phi[i] + 2.0 * k2.phi[i] + 2.0 * k3.phi[i] + k4.phi[i]);
                field.pi[i] += w * (k1.pi[i] + 2.0 * k2.pi[i] + 2.0 * k3.pi[i] + k4.pi[i]);
                field.chi[i] += w * (k1.chi[i] + 2.0 * k2.chi[i] + 2.0 * k3.chi[i] + k4.chi[i]);
            }
        }
        Ok(())
    }
}

/// Advances `state` by one RK4 step of size `dt`. The mask is carried over unchanged.
pub fn step(
    state: &FieldState,
    spec: &EquationSpec,
    grid: &RadialGrid,
    dt: f64,
    eps_ko: f64,
    forcing: Option<&dyn Forcing>,
) -> Result<FieldState> {
    let mut stepper = Stepper::new(spec, *grid, eps_ko, forcing, state.fields.len());
    let mut next = state.clone();
    stepper
        .rk4(&mut next.fields, state.t, dt)
        .map_err(|b| Error::LorentzianBreakdown { r: b.r, g00: b.g00, grr: b.grr })?;
    next.t = state.t + dt;
    Ok(next)
}

/// Evolves the data to `t_end`, or until a blow-up criterion fires.
pub fn evolve(
    data: &[DataPair],
    spec: &EquationSpec,
    chart: &FoliationChart,
    grid: &RadialGrid,
    t_end: f64,
    settings: &SolverSettings,
    forcing: Option<&dyn Forcing>,
) -> Result<(Trajectory, BlowupReport)> {
    settings.validate()?;
    if !(t_end > 0.0) {
        return Err(Error::InvalidInput(format!("t_end must be > 0, got {t_end}")));
    }
    if data.len() != spec.field_count {
        return Err(Error::InvalidInput(format!(
            "equation has {} fields but {} data pairs were given",
            spec.field_count,
            data.len()
        )));
    }
    let mut state = FieldState::from_data(data, grid, chart)?;
    let dr = grid.dr();
    let c0 = max_speed(&state, spec, grid)?;
    let required = chart.inner_radius() + c0 * t_end + 10.0;
    if settings.check_padding && grid.r_out < required {
        return Err(Error::Config {
            field: "grid.r_out".into(),
            message: format!("r_out = {} is below the causal padding R + c t_end + 10 = {required}", grid.r_out),
        });
    }

    let rstar: Vec<f64> = grid.radii().map(|r| chart.r_star(r)).collect::<Result<_>>()?;
    let dt0 = settings.sigma * dr / c0;
    let (g0, _) = max_gradient(&state, dr, settings.thresholds.scope);
    let limits = DetectionLimits {
        gradient_cap: settings.thresholds.gradient_factor * if g0 > 0.0 { g0 } else { 1.0 },
        dt_floor: settings.thresholds.dt_floor_factor * dt0,
        scope: settings.thresholds.scope,
    };

    let mut traj = Trajectory {
        snapshots: vec![state.clone()],
        spec: spec.clone(),
        chart: *chart,
        grid: *grid,
        settings: *settings,
        t_end,
        steps: 0,
        dt_min: f64::INFINITY,
        dt_max: 0.0,
        c_max: c0,
        margin: settings.margin.unwrap_or_else(|| default_margin(dr, c0)),
    };
    let mut stepper = Stepper::new(spec, *grid, settings.eps_ko, forcing, state.fields.len());
    let mut report = BlowupReport::default();
    let mut snap_index = 1usize;
    let mut prev = state.clone();

    let flag = |report: &mut BlowupReport, cause: BlowupCause, t: f64, r: f64| {
        *report = BlowupReport {
            detected: true,
            t_blow: Some(t),
            r_blow: Some(r),
            cause: Some(cause),
            inside_cone: !chart.in_trust_region(t, r, 0.0),
        };
    };

    while state.t < t_end {
        let target = (snap_index as f64 * settings.snap_cadence).min(t_end);
        let speed = match max_speed(&state, spec, grid) {
            Ok(s) => s,
            Err(Error::LorentzianBreakdown { r, .. }) => {
                flag(&mut report, BlowupCause::LorentzianBreakdown, state.t, r);
                break;
            }
            Err(e) => return Err(e),
        };
        traj.c_max = traj.c_max.max(speed);
        let dt_cfl = settings.sigma * dr / speed;
        if dt_cfl < limits.dt_floor {
            let (_, i) = max_gradient(&state, dr, limits.scope);
            flag(&mut report, BlowupCause::DtCollapse, state.t + 0.5 * dt_cfl, grid.r(i));
            break;
        }
        let remaining = target - state.t;
        let substeps = (remaining / dt_cfl - 1e-9).ceil().max(1.0);
        let dt = remaining / substeps;
        let lands = substeps == 1.0;

        prev.clone_from(&state);
        if let Err(b) = stepper.rk4(&mut state.fields, state.t, dt) {
            flag(&mut report, BlowupCause::LorentzianBreakdown, prev.t + 0.5 * dt, b.r);
            break;
        }
        state.t = if lands { target } else { prev.t + dt };
        traj.steps += 1;
        traj.dt_min = traj.dt_min.min(dt);
        traj.dt_max = traj.dt_max.max(dt);

        if let BlowupStatus::Flagged { cause, r } = detect_blowup(&state, spec, grid, &limits, dt) {
            let r = if cause == BlowupCause::Nan {
                let (_, i) = max_gradient(&prev, dr, GradientScope::All);
                grid.r(i)
            } else {
                r
            };
            flag(&mut report, cause, prev.t + 0.5 * dt, r);
            break;
        }

        let margin = settings.margin.unwrap_or_else(|| default_margin(dr, traj.c_max));
        traj.margin = traj.margin.max(margin);
        let threshold = state.t - chart.u0() + margin;
        for (m, rs) in state.valid_mask.iter_mut().zip(&rstar) {
            *m = *m && *rs >= threshold;
        }

        if lands {
            traj.snapshots.push(state.clone());
            snap_index += 1;
        }
    }
    if traj.steps == 0 {
        traj.dt_min = 0.0;
    }
    Ok((traj, report))
}

/// Pointwise PDE residual on masked-in interior points.
#[derive(Debug, Clone, PartialEq)]
pub struct Residual {
    pub t: f64,
    pub r: Vec<f64>,
    pub values: Vec<f64>,
}

impl Residual {
    pub fn l2(&self, dr: f64) -> f64 {
        (self.values.iter().map(|v| v * v).sum::<f64>() * dr).sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Evaluates `g^{ab} d_a d_b phi - N - q phi - S` on the stored solution using
/// fourth-order spatial stencils and a centred time difference of `pi`.
pub fn pde_residual(
    traj: &Trajectory,
    t_sample: f64,
    field: usize,
    forcing: Option<&dyn Forcing>,
) -> Result<Residual> {
    let snaps = &traj.snapshots;
    let have = snaps.len();
    let k = snaps
        .iter()
        .enumerate()
        .min_by(|a, b| (a.1.t - t_sample).abs().total_cmp(&(b.1.t - t_sample).abs()))
        .map(|(k, _)| k)
        .ok_or(Error::InsufficientSnapshots { needed: 3, have, t: t_sample })?;
    if k == 0 || k + 1 >= have {
        return Err(Error::InsufficientSnapshots { needed: 3, have, t: t_sample });
    }
    if field >= traj.spec.field_count {
        return Err(Error::InvalidInput(format!("field index {field} out of range")));
    }
    let (before, now, after) = (&snaps[k - 1], &snaps[k], &snaps[k + 1]);
    let grid = &traj.grid;
    let dr = grid.dr();
    let n = grid.n;
    let inv_dt = 1.0 / (after.t - before.t);
    let mut out = Residual {
        t: now.t,
        r: Vec::new(),
        values: Vec::new(),
    };
    let f0 = &now.fields[0];
    let fi = &now.fields[field];
    for i in 2..n.saturating_sub(2) {
        if !now.valid_mask[i] {
            continue;
        }
        let r = grid.r(i);
        let mut d = [Derivs::default(); MAX_FIELDS];
        for (f, arr) in now.fields.iter().enumerate() {
            d[f] = Derivs::new(arr.pi[i], d1_4th(&arr.phi, i, dr));
        }
        let g = traj.spec.metric_unchecked(f0.phi[i], d[0]);
        let semilinear = traj.spec.semilinear_rhs(&d[..now.fields.len()])[field];
        let phi_tt = (after.fields[field].pi[i] - before.fields[field].pi[i]) * inv_dt;
        let phi_tr = d1_4th(&fi.pi, i, dr);
        let phi_rr = d2_4th(&fi.phi, i, dr);
        let source = forcing.map_or(0.0, |f| f.source(field, now.t, r));
        let value = crate::equations::pointwise_residual(
            &g,
            r,
            d[field],
            (phi_tt, phi_tr, phi_rr),
            semilinear,
            traj.spec.potential.value(r),
            fi.phi[i],
            source,
        );
        out.r.push(r);
        out.values.push(value);
    }
    Ok(out)
}

/// Max and RMS of `phi - exact` over the whole grid, or over masked-in points only.
pub fn solution_error(state: &FieldState, grid: &RadialGrid, field: usize, masked_only: bool, exact: impl Fn(f64, f64) -> f64) -> (f64, f64) {
    let mut max: f64 = 0.0;
    let mut sum = 0.0;
    let mut count = 0usize;
    for (i, r) in grid.radii().enumerate() {
        if masked_only && !state.valid_mask[i] {
            continue;
        }
        let e = (state.fields[field].phi[i] - exact(state.t, r)).abs();
        max = max.max(e);
        sum += e * e;
        count += 1;
    }
    (max, if count > 0 { (sum / count as f64).sqrt() } else { 0.0 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::initial_data::{make_data, DataFamily};
    use crate::oracles::{dalembert_exact, manufactured_solution, ManufacturedKind, PulseProfile};

    fn chart() -> FoliationChart {
        FoliationChart::new(0.05, 2.0).unwrap()
    }

    #[test]
    fn cfl_values() {
        let grid = RadialGrid::new(1.0, 11.0, 201).unwrap();
        let zero = FieldState::from_data(&[DataPair::zeros(201)], &grid, &chart()).unwrap();
        assert!((cfl_dt(&zero, &EquationSpec::free(), &grid, 0.4).unwrap() - 0.02).abs() < 1e-15);
        assert!((cfl_dt(&zero, &EquationSpec::john2(), &grid, 0.4).unwrap() - 0.02).abs() < 1e-15);
        let mut s = zero.clone();
        s.fields[0].pi[50] = 0.1;
        let dt = cfl_dt(&s, &EquationSpec::john2(), &grid, 0.4).unwrap();
        assert!((dt - 0.02 / 1.1f64.sqrt()).abs() < 1e-12 && (dt - 0.01907).abs() < 1e-5);
        assert!(cfl_dt(&s, &EquationSpec::free(), &grid, 0.6).is_err());
    }

    #[test]
    fn zero_and_constant_states_are_fixed_points() {
        let grid = RadialGrid::new(1.0, 11.0, 201).unwrap();
        let zero = FieldState::from_data(&[DataPair::zeros(201)], &grid, &chart()).unwrap();
        for spec in [EquationSpec::free(), EquationSpec::john1(), EquationSpec::john2()] {
            let next = step(&zero, &spec, &grid, 0.01, 0.02, None).unwrap();
            assert_eq!(next.fields, zero.fields);
        }
        // constants: only the boundary rows see pi/r terms, which vanish for pi = 0
        let c = FieldState::from_data(&[DataPair::new(vec![0.75; 201], vec![0.0; 201])], &grid, &chart()).unwrap();
        let next = step(&c, &EquationSpec::john1(), &grid, 0.01, 0.02, None).unwrap();
        assert_eq!(next.fields, c.fields);
    }

    #[test]
    fn detects_nan() {
        let grid = RadialGrid::new(1.0, 11.0, 201).unwrap();
        let mut s = FieldState::from_data(&[DataPair::zeros(201)], &grid, &chart()).unwrap();
        let limits = DetectionLimits { gradient_cap: 1.0, dt_floor: 0.0, scope: GradientScope::All };
        assert_eq!(detect_blowup(&s, &EquationSpec::free(), &grid, &limits, 0.01), BlowupStatus::Stable);
        s.fields[0].phi[80] = f64::NAN;
        assert_eq!(
            detect_blowup(&s, &EquationSpec::free(), &grid, &limits, 0.01),
            BlowupStatus::Flagged { cause: BlowupCause::Nan, r: grid.r(80) }
        );
    }

    #[test]
    fn free_pulse_tracks_dalembert_at_second_order() {
        let profile = PulseProfile::gaussian(1.0, -5.0, 0.6);
        let mut errs = Vec::new();
        for n in [401, 801] {
            let grid = RadialGrid::new(1.0, 21.0, n).unwrap();
            let data = make_data(&DataFamily::OutgoingPulse { profile }, &grid, 2.0, None).unwrap();
            let settings = SolverSettings { snap_cadence: 1.0, check_padding: false, ..Default::default() };
            let (traj, rep) = evolve(&[data], &EquationSpec::free(), &chart(), &grid, 6.0, &settings, None).unwrap();
            assert!(!rep.detected);
            let last = traj.snapshots.last().unwrap();
            assert_eq!(last.t, 6.0);
            let (max, _) = solution_error(last, &grid, 0, false, |t, r| dalembert_exact(&profile, t, r).unwrap().phi);
            errs.push(max);
        }
        let order = (errs[0] / errs[1]).log2();
        assert!(order > 1.7, "errors {errs:?}");
    }

    #[test]
    fn manufactured_trig_converges() {
        let spec = EquationSpec::free();
        let ms = manufactured_solution(ManufacturedKind::SeparableTrig { amplitude: 1.0 }, &spec).unwrap();
        let mut errs = Vec::new();
        for n in [101, 201, 401] {
            let grid = RadialGrid::new(1.0, 6.0, n).unwrap();
            let settings = SolverSettings { snap_cadence: 0.5, check_padding: false, ..Default::default() };
            let (traj, _) = evolve(&[ms.data(&grid)], &spec, &chart(), &grid, 2.0, &settings, Some(&ms)).unwrap();
            let (max, _) = solution_error(traj.snapshots.last().unwrap(), &grid, 0, false, |t, r| ms.exact(t, r).phi);
            errs.push(max);
        }
        for w in errs.windows(2) {
            let order = (w[0] / w[1]).log2();
            assert!((order - 2.0).abs() < 0.3, "errors {errs:?}");
        }
    }

    #[test]
    fn mask_is_monotone_and_matches_trust_region() {
        let grid = RadialGrid::new(1.0, 30.0, 581).unwrap();
        let data = make_data(&DataFamily::AnnulusBump { amplitude: 0.1, center: 5.0, width: 1.0 }, &grid, 2.0, None).unwrap();
        let settings = SolverSettings { snap_cadence: 0.5, ..Default::default() };
        let (traj, _) = evolve(&[data], &EquationSpec::free(), &chart(), &grid, 8.0, &settings, None).unwrap();
        for w in traj.snapshots.windows(2) {
            for (a, b) in w[0].valid_mask.iter().zip(&w[1].valid_mask) {
                assert!(*a || !*b);
            }
        }
        let last = traj.snapshots.last().unwrap();
        for (i, r) in grid.radii().enumerate() {
            if last.valid_mask[i] {
                assert!(traj.chart.in_trust_region(last.t, r, 0.0));
            }
        }
    }

    #[test]
    fn padding_is_enforced() {
        let grid = RadialGrid::new(1.0, 15.0, 281).unwrap();
        let err = evolve(&[DataPair::zeros(281)], &EquationSpec::free(), &chart(), &grid, 8.0, &SolverSettings::default(), None);
        assert!(matches!(err, Err(Error::Config { .. })));
    }
}
