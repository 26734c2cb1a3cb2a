//! Energies, weighted energies, flux balance and decay fits on cone slices.
//!
//! Trajectories are interpolated onto truncated outgoing cones `H_u` (sampled
//! uniformly in `ubar`) and incoming cones `Hbar_ubar` (uniformly in `u`).
//! All angular terms vanish in spherical symmetry, so every integral below
//! carries an explicit `4 pi` from the sphere.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::equations::{Derivs, PotentialSpec, MAX_FIELDS};
use crate::error::{Error, Result};
use crate::geometry::FoliationChart;
use crate::initial_data::{DataPair, RadialGrid};
use crate::numerics::{cubic_interp, derivative, hermite, linear_fit, simpson};
use crate::solver::Trajectory;

/// `u_+ = 1 + |u|`.
pub fn u_plus(u: f64) -> f64 {
    1.0 + u.abs()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SliceKind {
    Outgoing,
    Incoming,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SliceSample {
    pub r: f64,
    pub t: f64,
    pub u: f64,
    pub ubar: f64,
    pub phi: f64,
    pub lphi: f64,
    pub lbarphi: f64,
}

/// Samples on `H_u` (parameter `ubar`) or `Hbar_ubar` (parameter `u`).
#[derive(Debug, Clone, PartialEq)]
pub struct ConeSlice {
    pub kind: SliceKind,
    /// `u` for outgoing slices, `ubar` for incoming ones.
    pub label: f64,
    /// Parameter range `[lower, upper]`; `upper` is the truncation.
    pub lower: f64,
    pub upper: f64,
    pub samples: Vec<SliceSample>,
}

impl ConeSlice {
    pub fn spacing(&self) -> f64 {
        if self.samples.len() < 2 {
            0.0
        } else {
            (self.upper - self.lower) / (self.samples.len() - 1) as f64
        }
    }
}

/// Field values at one spacetime point.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PointValues {
    pub phi: f64,
    pub pi: f64,
    pub chi: f64,
}

/// Interpolates one field at `(t, r)`: cubic in `r`, cubic Hermite in `t` for
/// `phi` (using `pi` as its time derivative), four-point Lagrange in `t` for
/// `pi` and `chi`.
pub fn interpolate(traj: &Trajectory, field: usize, t: f64, r: f64) -> Result<PointValues> {
    let grid = &traj.grid;
    if !grid.contains(r) {
        return Err(Error::SliceOutOfRange(format!("r = {r} outside [{}, {}]", grid.r_in, grid.r_out)));
    }
    if field >= traj.spec.field_count {
        return Err(Error::InvalidInput(format!("field index {field} out of range")));
    }
    let k = traj
        .bracket(t)
        .ok_or_else(|| Error::SliceOutOfRange(format!("t = {t} outside [0, {}]", traj.t_last())))?;
    let snaps = &traj.snapshots;
    let dr = grid.dr();
    let at = |j: usize| {
        let f = &snaps[j].fields[field];
        PointValues {
            phi: cubic_interp(&f.phi, grid.r_in, dr, r),
            pi: cubic_interp(&f.pi, grid.r_in, dr, r),
            chi: cubic_interp(&f.chi, grid.r_in, dr, r),
        }
    };
    let (a, b) = (at(k), at(k + 1));
    let (t0, t1) = (snaps[k].t, snaps[k + 1].t);
    let phi = hermite(t0, t1, a.phi, b.phi, a.pi, b.pi, t);
    let n = snaps.len();
    let (pi, chi) = if n >= 4 {
        let base = k.saturating_sub(1).min(n - 4);
        let ts = [snaps[base].t, snaps[base + 1].t, snaps[base + 2].t, snaps[base + 3].t];
        let w = lagrange_weights(&ts, t);
        let mut pi = 0.0;
        let mut chi = 0.0;
        for (j, wj) in w.iter().enumerate() {
            let v = if base + j == k {
                a
            } else if base + j == k + 1 {
                b
            } else {
                at(base + j)
            };
            pi += wj * v.pi;
            chi += wj * v.chi;
        }
        (pi, chi)
    } else {
        let s = (t - t0) / (t1 - t0);
        (a.pi + s * (b.pi - a.pi), a.chi + s * (b.chi - a.chi))
    };
    Ok(PointValues { phi, pi, chi })
}

fn lagrange_weights(ts: &[f64; 4], t: f64) -> [f64; 4] {
    let mut w = [1.0; 4];
    for (i, wi) in w.iter_mut().enumerate() {
        for (j, tj) in ts.iter().enumerate() {
            if i != j {
                *wi *= (t - tj) / (ts[i] - tj);
            }
        }
    }
    w
}

fn check_samples(n_samples: usize) -> Result<()> {
    if n_samples < 3 {
        return Err(Error::InvalidInput(format!("need at least 3 slice samples, got {n_samples}")));
    }
    Ok(())
}

fn sample_point(traj: &Trajectory, field: usize, u: f64, ubar: f64) -> Result<SliceSample> {
    let p = traj.chart.point_at(u, ubar)?;
    if !traj.trusted(p.t, p.r) {
        return Err(Error::MaskViolation { t: p.t, r: p.r });
    }
    let v = interpolate(traj, field, p.t, p.r)?;
    Ok(SliceSample {
        r: p.r,
        t: p.t,
        u,
        ubar,
        phi: v.phi,
        lphi: v.pi + v.chi,
        lbarphi: v.pi - v.chi,
    })
}

/// Samples `H_u` at `n_samples` uniform values of `ubar` in `[-u, ubar_max]`.
pub fn sample_outgoing_cone(traj: &Trajectory, u: f64, ubar_max: f64, n_samples: usize, field: usize) -> Result<ConeSlice> {
    check_samples(n_samples)?;
    if !(ubar_max > -u) {
        return Err(Error::SliceOutOfRange(format!("ubar_max = {ubar_max} must exceed -u = {}", -u)));
    }
    let h = (ubar_max + u) / (n_samples - 1) as f64;
    let samples = (0..n_samples)
        .map(|i| {
            let ubar = if i == n_samples - 1 { ubar_max } else { -u + h * i as f64 };
            sample_point(traj, field, u, ubar)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ConeSlice {
        kind: SliceKind::Outgoing,
        label: u,
        lower: -u,
        upper: ubar_max,
        samples,
    })
}

/// Samples `Hbar_ubar` at `n_samples` uniform values of `u` in `[-ubar, u_max]`.
pub fn sample_incoming_cone(traj: &Trajectory, ubar: f64, u_max: f64, n_samples: usize, field: usize) -> Result<ConeSlice> {
    check_samples(n_samples)?;
    if !(u_max > -ubar) {
        return Err(Error::SliceOutOfRange(format!("u_max = {u_max} must exceed -ubar = {}", -ubar)));
    }
    let h = (u_max + ubar) / (n_samples - 1) as f64;
    let samples = (0..n_samples)
        .map(|i| {
            let u = if i == n_samples - 1 { u_max } else { -ubar + h * i as f64 };
            sample_point(traj, field, u, ubar)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ConeSlice {
        kind: SliceKind::Incoming,
        label: ubar,
        lower: -ubar,
        upper: u_max,
        samples,
    })
}

fn integrate_slice(slice: &ConeSlice, density: impl Fn(&SliceSample) -> f64) -> f64 {
    let values: Vec<f64> = slice.samples.iter().map(density).collect();
    4.0 * PI * simpson(&values, slice.spacing())
}

fn expect(slice: &ConeSlice, kind: SliceKind, m: f64) -> Result<()> {
    if slice.kind != kind {
        return Err(Error::InvalidInput(format!("expected a {kind:?} slice, got {:?}", slice.kind)));
    }
    if !(m >= 0.0) {
        return Err(Error::InvalidInput(format!("energy weight M must be >= 0, got {m}")));
    }
    Ok(())
}

/// `E[phi](H_u) = int 1/2 r^2 (|L phi|^2 + (M/r)|Lbar phi|^2 + q phi^2) dubar dw`
pub fn energy_on_h(slice: &ConeSlice, m: f64, q: &PotentialSpec) -> Result<f64> {
    expect(slice, SliceKind::Outgoing, m)?;
    Ok(integrate_slice(slice, |s| {
        0.5 * s.r * s.r * (s.lphi * s.lphi + m / s.r * s.lbarphi * s.lbarphi + q.value(s.r) * s.phi * s.phi)
    }))
}

/// `E[phi](Hbar_ubar) = int 1/2 r^2 (|Lbar phi|^2 + (M/r)|L phi|^2 + q phi^2) du dw`
pub fn energy_on_hbar(slice: &ConeSlice, m: f64, q: &PotentialSpec) -> Result<f64> {
    expect(slice, SliceKind::Incoming, m)?;
    Ok(integrate_slice(slice, |s| {
        0.5 * s.r * s.r * (s.lbarphi * s.lbarphi + m / s.r * s.lphi * s.lphi + q.value(s.r) * s.phi * s.phi)
    }))
}

/// `W1[phi](H_u) = int 1/2 (r (L(r phi))^2 + r^3 (M/r) q phi^2) dubar dw`
pub fn weighted_energy_on_h(slice: &ConeSlice, m: f64, q: &PotentialSpec) -> Result<f64> {
    expect(slice, SliceKind::Outgoing, m)?;
    Ok(integrate_slice(slice, |s| {
        let l_rphi = s.r * s.lphi + s.phi;
        0.5 * (s.r * l_rphi * l_rphi + s.r * s.r * m * q.value(s.r) * s.phi * s.phi)
    }))
}

/// `W1[phi](Hbar_ubar) = int 1/2 r^3 ((M/r)|L phi|^2 + q phi^2) du dw`
pub fn weighted_energy_on_hbar(slice: &ConeSlice, m: f64, q: &PotentialSpec) -> Result<f64> {
    expect(slice, SliceKind::Incoming, m)?;
    Ok(integrate_slice(slice, |s| {
        0.5 * s.r * s.r * s.r * (m / s.r * s.lphi * s.lphi + q.value(s.r) * s.phi * s.phi)
    }))
}

fn annulus(chart: &FoliationChart, u: f64, ubar: f64) -> Result<Option<(f64, f64)>> {
    if !(ubar > -u) {
        log::warn!("empty initial annulus for u = {u}, ubar = {ubar}");
        return Ok(None);
    }
    Ok(Some((chart.invert_r_star(-u)?, chart.invert_r_star(ubar)?)))
}

fn radial_integral(lo: f64, hi: f64, dr: f64, f: impl Fn(f64) -> f64) -> f64 {
    let intervals = (((hi - lo) / dr * 2.0).ceil() as usize).max(8);
    let m = intervals + intervals % 2;
    let h = (hi - lo) / m as f64;
    let values: Vec<f64> = (0..=m).map(|i| f(lo + h * i as f64)).collect();
    simpson(&values, h)
}

/// `E[phi](Sigma_0) = int (|d_t phi|^2 + |d_r phi|^2 + q phi^2) dx` over the
/// annulus `-u <= r* <= ubar` of the initial slice.
pub fn sigma0_energy(data: &DataPair, grid: &RadialGrid, chart: &FoliationChart, u: f64, ubar: f64, q: &PotentialSpec) -> Result<f64> {
    let Some((lo, hi)) = annulus(chart, u, ubar)? else {
        return Ok(0.0);
    };
    if !grid.contains(lo) || !grid.contains(hi) {
        return Err(Error::SliceOutOfRange(format!("annulus [{lo}, {hi}] leaves the grid")));
    }
    let dr = grid.dr();
    let chi = derivative(&data.phi0, dr);
    Ok(4.0 * PI
        * radial_integral(lo, hi, dr, |r| {
            let phi = cubic_interp(&data.phi0, grid.r_in, dr, r);
            let pi = cubic_interp(&data.phi1, grid.r_in, dr, r);
            let c = cubic_interp(&chi, grid.r_in, dr, r);
            (pi * pi + c * c + q.value(r) * phi * phi) * r * r
        }))
}

/// Terms of the flux-balance identity
/// `F(H) + F(Hbar) + int_D F d_t phi = int_Sigma0 Q(d_t, d_t)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FluxBalance {
    pub flux_h: f64,
    pub flux_hbar: f64,
    pub bulk: f64,
    pub sigma0: f64,
    pub residual: f64,
}

/// Evaluates the flux-balance identity on `D_u^ubar` for field 0.
///
/// Densities `Q(d_t, N)` and `Q(d_t, Nbar)` use the chart's `h = m/r` and
/// area elements `1/2 b r^2`; the bulk term integrates `F d_t phi` with
/// `dx dt = 1/2 b r^2 du dubar dw`.
pub fn flux_balance_residual(traj: &Trajectory, u: f64, ubar: f64, n_samples: usize) -> Result<FluxBalance> {
    let spec = &traj.spec;
    if !spec.is_flat() {
        return Err(Error::InvalidInput("flux balance is only checked for the flat wave operator".into()));
    }
    if !spec.potential.is_constant() {
        return Err(Error::InvalidInput("flux balance needs a constant potential".into()));
    }
    let chart = &traj.chart;
    let q = spec.potential.sup();
    let m = chart.mass_param();

    let out = sample_outgoing_cone(traj, u, ubar, n_samples, 0)?;
    let inc = sample_incoming_cone(traj, ubar, u, n_samples, 0)?;
    let flux_h = integrate_slice(&out, |s| {
        let h = m / s.r;
        let qd = 0.5 / (1.0 + h) * (s.lphi * s.lphi + h * s.lbarphi * s.lbarphi + (1.0 + h) * q * s.phi * s.phi);
        qd * 0.5 * chart.lapse(s.r) * s.r * s.r
    });
    let flux_hbar = integrate_slice(&inc, |s| {
        let h = m / s.r;
        let qd = 0.5 / (1.0 + h) * (s.lbarphi * s.lbarphi + h * s.lphi * s.lphi + (1.0 + h) * q * s.phi * s.phi);
        qd * 0.5 * chart.lapse(s.r) * s.r * s.r
    });

    let bulk = if spec.field_count == 1 && spec.semilinear_rhs(&[Derivs::new(1.0, 1.0); MAX_FIELDS]) == [0.0; MAX_FIELDS] {
        0.0
    } else {
        bulk_integral(traj, u, ubar, n_samples)?
    };

    let first = &traj.snapshots[0];
    let data = DataPair::new(first.fields[0].phi.clone(), first.fields[0].pi.clone());
    let sigma0 = 0.5 * sigma0_energy(&data, &traj.grid, chart, u, ubar, &spec.potential)?;
    let total = flux_h + flux_hbar + bulk;
    let residual = if sigma0 > 0.0 {
        (total - sigma0).abs() / sigma0
    } else if total == 0.0 {
        0.0
    } else {
        f64::INFINITY
    };
    Ok(FluxBalance {
        flux_h,
        flux_hbar,
        bulk,
        sigma0,
        residual,
    })
}

/// `4 pi int_D F d_t phi 1/2 b r^2 du' dubar'` over `-ubar <= u' <= u`, `-u' <= ubar' <= ubar`.
fn bulk_integral(traj: &Trajectory, u: f64, ubar: f64, n_samples: usize) -> Result<f64> {
    let nu = n_samples.max(5) | 1;
    let hu = (u + ubar) / (nu - 1) as f64;
    let chart = &traj.chart;
    let nf = traj.spec.field_count;
    let inner: Vec<f64> = (0..nu)
        .into_par_iter()
        .map(|i| -> Result<f64> {
            let up = -ubar + hu * i as f64;
            let len = ubar + up;
            if len <= 0.0 {
                return Ok(0.0);
            }
            let nb = ((len / (u + ubar) * nu as f64) as usize).max(4) | 1;
            let hb = len / (nb - 1) as f64;
            let mut values = Vec::with_capacity(nb);
            for j in 0..nb {
                let ub = -up + hb * j as f64;
                let p = chart.point_at(up, ub)?;
                let mut d = [Derivs::default(); MAX_FIELDS];
                let mut pi0 = 0.0;
                for (f, df) in d.iter_mut().enumerate().take(nf) {
                    let v = interpolate(traj, f, p.t, p.r)?;
                    *df = Derivs::new(v.pi, v.chi);
                    if f == 0 {
                        pi0 = v.pi;
                    }
                }
                let source = traj.spec.semilinear_rhs(&d[..nf])[0];
                values.push(source * pi0 * 0.5 * chart.lapse(p.r) * p.r * p.r);
            }
            Ok(simpson(&values, hb))
        })
        .collect::<Result<_>>()?;
    Ok(4.0 * PI * simpson(&inner, hu))
}

/// One row of `energies.csv` plus the extra massive-decay maximum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyRecord {
    pub u: f64,
    pub ubar_max: f64,
    pub e_h: f64,
    pub e_hbar: f64,
    pub w1_h: f64,
    pub w1_hbar: f64,
    /// `NaN` when the flux identity does not apply to the run.
    pub flux_residual: f64,
    pub max_r32_lphi: f64,
    pub max_ru12_lbphi: f64,
    pub max_r_phi: f64,
    /// `max q0 r^{5/2} |phi|^2`
    pub max_q_r52_phi2: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanOptions {
    /// Common truncation; `None` picks [`default_ubar_max`] per cone.
    pub ubar_max: Option<f64>,
    /// Samples per slice; `None` uses about two per grid cell.
    pub n_samples: Option<usize>,
    pub field: usize,
    pub flux: bool,
}

impl Default for ScanOptions {
    fn default() -> Self {
        Self {
            ubar_max: None,
            n_samples: None,
            field: 0,
            flux: true,
        }
    }
}

/// Largest truncation keeping `H_u` inside the evolved time range and out of
/// reach of anything reflected at the outer boundary.
pub fn default_ubar_max(traj: &Trajectory, u: f64) -> Result<f64> {
    ubar_limit(&traj.chart, &traj.grid, traj.t_last(), u)
}

/// [`default_ubar_max`] for a run on `grid` that reached `t_last`.
pub fn ubar_limit(chart: &FoliationChart, grid: &RadialGrid, t_last: f64, u: f64) -> Result<f64> {
    let pad = 2.0 + 4.0 * grid.dr();
    let limit = if chart.mass_param() < 0.0 { grid.r_out } else { chart.r_star(grid.r_out)? };
    Ok((limit - pad).min(2.0 * t_last - u))
}

fn default_samples(traj: &Trajectory, length: f64) -> usize {
    (((2.0 * length / traj.grid.dr()) as usize).max(401)) | 1
}

/// Energies, weighted energies, flux residual and pointwise maxima on each `H_u`.
pub fn pointwise_decay_scan(traj: &Trajectory, u_list: &[f64], m: f64, opts: &ScanOptions) -> Result<Vec<EnergyRecord>> {
    if !(m >= 0.0) {
        return Err(Error::InvalidInput(format!("energy weight M must be >= 0, got {m}")));
    }
    let q = traj.spec.potential;
    let q0 = q.sup();
    let flux_ok = opts.flux && traj.spec.is_flat() && q.is_constant() && opts.field == 0;
    u_list
        .par_iter()
        .map(|&u| {
            let ubar_max = match opts.ubar_max {
                Some(v) => v,
                None => default_ubar_max(traj, u)?,
            };
            let n = opts.n_samples.unwrap_or_else(|| default_samples(traj, ubar_max + u));
            let out = sample_outgoing_cone(traj, u, ubar_max, n, opts.field)?;
            let inc = sample_incoming_cone(traj, ubar_max, u, n, opts.field)?;
            let up = u_plus(u);
            let mut rec = EnergyRecord {
                u,
                ubar_max,
                e_h: energy_on_h(&out, m, &q)?,
                e_hbar: energy_on_hbar(&inc, m, &q)?,
                w1_h: weighted_energy_on_h(&out, m, &q)?,
                w1_hbar: weighted_energy_on_hbar(&inc, m, &q)?,
                flux_residual: f64::NAN,
                max_r32_lphi: 0.0,
                max_ru12_lbphi: 0.0,
                max_r_phi: 0.0,
                max_q_r52_phi2: 0.0,
            };
            for s in &out.samples {
                rec.max_r32_lphi = rec.max_r32_lphi.max(s.r.powf(1.5) * s.lphi.abs());
                rec.max_ru12_lbphi = rec.max_ru12_lbphi.max(s.r * up.sqrt() * s.lbarphi.abs());
                rec.max_r_phi = rec.max_r_phi.max(s.r * s.phi.abs());
                rec.max_q_r52_phi2 = rec.max_q_r52_phi2.max(q0 * s.r.powf(2.5) * s.phi * s.phi);
            }
            if flux_ok {
                rec.flux_residual = flux_balance_residual(traj, u, ubar_max, n)?.residual;
            }
            Ok(rec)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecayField {
    #[serde(rename = "E_H")]
    EH,
    #[serde(rename = "E_Hbar")]
    EHbar,
    #[serde(rename = "W1_H")]
    W1H,
    #[serde(rename = "W1_Hbar")]
    W1Hbar,
    MaxR32Lphi,
    MaxRu12Lbphi,
    MaxRPhi,
    MaxQR52Phi2,
}

impl DecayField {
    pub const ALL: [DecayField; 8] = [
        Self::EH,
        Self::EHbar,
        Self::W1H,
        Self::W1Hbar,
        Self::MaxR32Lphi,
        Self::MaxRu12Lbphi,
        Self::MaxRPhi,
        Self::MaxQR52Phi2,
    ];

    /// Column name in `energies.csv` / `pointwise.csv`.
    pub fn column(self) -> &'static str {
        match self {
            Self::EH => "E_H",
            Self::EHbar => "E_Hbar",
            Self::W1H => "W1_H",
            Self::W1Hbar => "W1_Hbar",
            Self::MaxR32Lphi => "max_r32_Lphi",
            Self::MaxRu12Lbphi => "max_ru12_Lbphi",
            Self::MaxRPhi => "max_r_phi",
            Self::MaxQR52Phi2 => "max_q_r52_phi2",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|f| f.column().eq_ignore_ascii_case(s))
    }

    pub fn get(self, r: &EnergyRecord) -> f64 {
        match self {
            Self::EH => r.e_h,
            Self::EHbar => r.e_hbar,
            Self::W1H => r.w1_h,
            Self::W1Hbar => r.w1_hbar,
            Self::MaxR32Lphi => r.max_r32_lphi,
            Self::MaxRu12Lbphi => r.max_ru12_lbphi,
            Self::MaxRPhi => r.max_r_phi,
            Self::MaxQR52Phi2 => r.max_q_r52_phi2,
        }
    }
}

/// Least-squares power law `value ~ C u_+^exponent`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub exponent: f64,
    /// `ln C`
    pub intercept: f64,
    /// Largest `|value / fit - 1|` over the fitted points.
    pub max_deviation: f64,
    pub points: usize,
    pub nonpositive: usize,
}

/// Fits `ln value` against `ln u_+` for pairs `(u, value)`.
pub fn fit_power_law(points: &[(f64, f64)]) -> Result<DecayFit> {
    let nonpositive = points.iter().filter(|p| !(p.1 > 0.0)).count();
    let usable: Vec<(f64, f64)> = points.iter().copied().filter(|p| p.1 > 0.0 && p.1.is_finite()).collect();
    if usable.len() < 5 {
        return Err(Error::InvalidInput(format!(
            "decay fit needs at least 5 positive values, got {} ({nonpositive} nonpositive)",
            usable.len()
        )));
    }
    let ups: Vec<f64> = usable.iter().map(|p| u_plus(p.0)).collect();
    let (lo, hi) = ups.iter().fold((f64::INFINITY, 0.0f64), |(a, b), v| (a.min(*v), b.max(*v)));
    if hi < 3.0 * lo {
        return Err(Error::InvalidInput(format!("u_+ spans only [{lo}, {hi}], need a factor of 3")));
    }
    if nonpositive > 0 {
        log::warn!("decay fit skipped {nonpositive} nonpositive values");
    }
    let x: Vec<f64> = ups.iter().map(|v| v.ln()).collect();
    let y: Vec<f64> = usable.iter().map(|p| p.1.ln()).collect();
    let (intercept, exponent) = linear_fit(&x, &y);
    let max_deviation = x
        .iter()
        .zip(&y)
        .map(|(xi, yi)| ((yi - intercept - exponent * xi).exp() - 1.0).abs())
        .fold(0.0, f64::max);
    Ok(DecayFit {
        exponent,
        intercept,
        max_deviation,
        points: usable.len(),
        nonpositive,
    })
}

/// Fits one column of the records, restricted to `u` in `u_range` when given.
pub fn fit_decay_exponent(records: &[EnergyRecord], field: DecayField, u_range: Option<(f64, f64)>) -> Result<DecayFit> {
    let points: Vec<(f64, f64)> = records
        .iter()
        .filter(|r| u_range.is_none_or(|(a, b)| r.u >= a.min(b) && r.u <= a.max(b)))
        .map(|r| (r.u, field.get(r)))
        .collect();
    fit_power_law(&points)
}
