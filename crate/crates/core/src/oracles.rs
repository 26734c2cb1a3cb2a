//! Reference solutions: exact free outgoing waves, Burgers characteristics,
//! and manufactured solutions with matching sources.

use serde::{Deserialize, Serialize};

use crate::equations::{Derivs, EquationSpec};
use crate::error::{Error, Result};
use crate::initial_data::{DataPair, RadialGrid};
use crate::solver::{BoundarySide, Forcing};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum PulseShape {
    Gaussian,
    /// `exp(-1 / (1 - s^2))` on `|s| < 1`, compactly supported.
    Bump,
}

/// A closed-form profile `F(x) = A * shape((x - center) / width)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PulseProfile {
    pub shape: PulseShape,
    pub amplitude: f64,
    pub center: f64,
    pub width: f64,
}

impl PulseProfile {
    pub fn gaussian(amplitude: f64, center: f64, width: f64) -> Self {
        Self {
            shape: PulseShape::Gaussian,
            amplitude,
            center,
            width,
        }
    }

    pub fn bump(amplitude: f64, center: f64, width: f64) -> Self {
        Self {
            shape: PulseShape::Bump,
            amplitude,
            center,
            width,
        }
    }

    /// Interval outside of which `|F|` is zero (bump) or below `1e-16 A` (Gaussian).
    pub fn support(&self) -> (f64, f64) {
        let half = match self.shape {
            PulseShape::Gaussian => 6.1 * self.width,
            PulseShape::Bump => self.width,
        };
        (self.center - half, self.center + half)
    }

    pub fn value(&self, x: f64) -> f64 {
        self.jet(x)[0]
    }

    pub fn derivative(&self, x: f64) -> f64 {
        self.jet(x)[1]
    }

    /// `[F, F', F'', F''']` at `x`.
    pub fn jet(&self, x: f64) -> [f64; 4] {
        let w = self.width;
        let s = (x - self.center) / w;
        let a = self.amplitude;
        let unit = match self.shape {
            PulseShape::Gaussian => {
                let e = (-s * s).exp();
                [
                    e,
                    -2.0 * s * e,
                    (4.0 * s * s - 2.0) * e,
                    (-8.0 * s * s * s + 12.0 * s) * e,
                ]
            }
            PulseShape::Bump => {
                if s.abs() >= 1.0 {
                    [0.0; 4]
                } else {
                    let d = 1.0 / (1.0 - s * s);
                    let e = (-d).exp();
                    let g1 = -2.0 * s * d * d;
                    let g2 = -2.0 * d * d - 8.0 * s * s * d * d * d;
                    let g3 = -24.0 * s * d * d * d - 48.0 * s * s * s * d * d * d * d;
                    [e, e * g1, e * (g2 + g1 * g1), e * (g3 + 3.0 * g1 * g2 + g1 * g1 * g1)]
                }
            }
        };
        [a * unit[0], a * unit[1] / w, a * unit[2] / (w * w), a * unit[3] / (w * w * w)]
    }
}

/// Values and derivatives of a field at one spacetime point.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Jet {
    pub phi: f64,
    pub phi_t: f64,
    pub phi_r: f64,
    pub phi_tt: f64,
    pub phi_tr: f64,
    pub phi_rr: f64,
}

impl Jet {
    pub fn derivs(&self) -> Derivs {
        Derivs::new(self.phi_t, self.phi_r)
    }

    /// `d_t L(r phi)` at radius `r`.
    pub fn dt_l_rphi(&self, r: f64) -> f64 {
        r * (self.phi_tt + self.phi_tr) + self.phi_t
    }

    /// `d_t Lbar(r phi)` at radius `r`.
    pub fn dt_lbar_rphi(&self, r: f64) -> f64 {
        r * (self.phi_tt - self.phi_tr) - self.phi_t
    }
}

/// Null-frame values of the exact free wave at a point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NullValues {
    pub phi: f64,
    pub lphi: f64,
    pub lbarphi: f64,
}

/// `phi = F(t - r) / r`, the exact outgoing solution of the free wave equation.
pub fn dalembert_exact(profile: &PulseProfile, t: f64, r: f64) -> Result<NullValues> {
    if !(r > 0.0) {
        return Err(Error::Domain(format!("d'Alembert solution needs r > 0, got {r}")));
    }
    let [f, fp, ..] = profile.jet(t - r);
    Ok(NullValues {
        phi: f / r,
        lphi: -f / (r * r),
        lbarphi: 2.0 * fp / r + f / (r * r),
    })
}

/// Full second-order jet of `F(t - r) / r`.
pub fn dalembert_jet(profile: &PulseProfile, t: f64, r: f64) -> Jet {
    let [f, f1, f2, _] = profile.jet(t - r);
    let r2 = r * r;
    Jet {
        phi: f / r,
        phi_t: f1 / r,
        phi_r: -f1 / r - f / r2,
        phi_tt: f2 / r,
        phi_tr: -f2 / r - f1 / r2,
        phi_rr: f2 / r + 2.0 * f1 / r2 + 2.0 * f / (r2 * r),
    }
}

/// Shock time estimates for `w_t + w w_x = 0` from samples of `w0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShockTime {
    /// Earliest crossing of sampled characteristics.
    pub brute_force: f64,
    /// `-1 / min w0'`, with `w0'` from finite differences.
    pub analytic: f64,
}

/// Brute-force characteristic crossing for Burgers' equation.
///
/// Characteristics `X_i(t) = x_i + w0_i t` are advanced on a dense time grid
/// until two neighbours swap order, then the crossing is refined by bisection.
/// Returns `None` if `w0` is nondecreasing (no crossing ever happens).
pub fn burgers_shock_time(x: &[f64], w0: &[f64]) -> Result<Option<ShockTime>> {
    if x.len() != w0.len() || x.len() < 3 {
        return Err(Error::InvalidInput("need matching x and w0 with at least 3 samples".into()));
    }
    if x.windows(2).any(|p| !(p[1] > p[0])) {
        return Err(Error::InvalidInput("x must be strictly increasing".into()));
    }
    let mut min_slope = f64::INFINITY;
    for i in 0..x.len() {
        let s = if i == 0 {
            (w0[1] - w0[0]) / (x[1] - x[0])
        } else if i == x.len() - 1 {
            (w0[i] - w0[i - 1]) / (x[i] - x[i - 1])
        } else {
            (w0[i + 1] - w0[i - 1]) / (x[i + 1] - x[i - 1])
        };
        min_slope = min_slope.min(s);
    }
    if !(min_slope < 0.0) {
        return Ok(None);
    }
    let analytic = -1.0 / min_slope;

    let crossed = |t: f64| x.windows(2).zip(w0.windows(2)).any(|(xs, ws)| xs[1] + ws[1] * t <= xs[0] + ws[0] * t);

    // Dense stepping out to well past the analytic candidate.
    let t_max = 10.0 * analytic;
    let steps = 20_000;
    let dt = t_max / steps as f64;
    let mut lo = 0.0;
    let mut hi = None;
    for k in 1..=steps {
        let t = k as f64 * dt;
        if crossed(t) {
            hi = Some(t);
            break;
        }
        lo = t;
    }
    let Some(mut hi) = hi else {
        return Ok(None);
    };
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if crossed(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(Some(ShockTime {
        brute_force: 0.5 * (lo + hi),
        analytic,
    }))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ManufacturedKind {
    /// `phi = A sin(t) e^{-r} / r`
    SeparableTrig { amplitude: f64 },
    /// `phi = A g(r - center - t)` with a Gaussian `g` of the given width.
    TravelingBump { amplitude: f64, center: f64, width: f64 },
}

/// A smooth exact field, its equation, and the source that makes it a solution.
#[derive(Debug, Clone, PartialEq)]
pub struct ManufacturedSolution {
    pub kind: ManufacturedKind,
    pub spec: EquationSpec,
}

pub fn manufactured_solution(kind: ManufacturedKind, spec: &EquationSpec) -> Result<ManufacturedSolution> {
    if spec.field_count != 1 {
        return Err(Error::InvalidInput("manufactured solutions support single-field equations only".into()));
    }
    if let ManufacturedKind::TravelingBump { width, .. } = kind {
        if !(width > 0.0) {
            return Err(Error::InvalidInput("bump width must be positive".into()));
        }
    }
    Ok(ManufacturedSolution {
        kind,
        spec: spec.clone(),
    })
}

impl ManufacturedSolution {
    pub fn exact(&self, t: f64, r: f64) -> Jet {
        match self.kind {
            ManufacturedKind::SeparableTrig { amplitude } => {
                let e = (-r).exp();
                let (r2, r3) = (r * r, r * r * r);
                let f = e / r;
                let f1 = -e / r - e / r2;
                let f2 = e / r + 2.0 * e / r2 + 2.0 * e / r3;
                let (s, c) = t.sin_cos();
                Jet {
                    phi: amplitude * s * f,
                    phi_t: amplitude * c * f,
                    phi_r: amplitude * s * f1,
                    phi_tt: -amplitude * s * f,
                    phi_tr: amplitude * c * f1,
                    phi_rr: amplitude * s * f2,
                }
            }
            ManufacturedKind::TravelingBump { amplitude, center, width } => {
                let [g, g1, g2, _] = PulseProfile::gaussian(amplitude, 0.0, width).jet(r - center - t);
                Jet {
                    phi: g,
                    phi_t: -g1,
                    phi_r: g1,
                    phi_tt: g2,
                    phi_tr: -g2,
                    phi_rr: g2,
                }
            }
        }
    }

    /// `g^{ab} d_a d_b phi_e - N(d phi_e) - q phi_e`.
    pub fn source(&self, t: f64, r: f64) -> f64 {
        let j = self.exact(t, r);
        let d = j.derivs();
        let g = self.spec.metric_unchecked(j.phi, d);
        let n = self.spec.semilinear_rhs(&[d, d])[0];
        g.g00 * j.phi_tt + 2.0 * g.g0r * j.phi_tr + g.grr * j.phi_rr + g.gang * 2.0 / r * j.phi_r
            - n
            - self.spec.potential.value(r) * j.phi
    }

    /// Initial data `(phi_e(0), d_t phi_e(0))` on the grid.
    pub fn data(&self, grid: &RadialGrid) -> DataPair {
        let (phi0, phi1) = grid.radii().map(|r| {
            let j = self.exact(0.0, r);
            (j.phi, j.phi_t)
        }).unzip();
        DataPair::new(phi0, phi1)
    }
}

impl Forcing for ManufacturedSolution {
    fn source(&self, _field: usize, t: f64, r: f64) -> f64 {
        ManufacturedSolution::source(self, t, r)
    }

    fn boundary_drive(&self, _field: usize, t: f64, r: f64, side: BoundarySide) -> f64 {
        let j = self.exact(t, r);
        match side {
            BoundarySide::Inner => j.dt_lbar_rphi(r),
            BoundarySide::Outer => j.dt_l_rphi(r),
        }
    }
}

/// Free outgoing pulse as a [`Forcing`]: no source, exact boundary drives.
#[derive(Debug, Clone, Copy)]
pub struct DalembertDrive(pub PulseProfile);

impl Forcing for DalembertDrive {
    fn source(&self, _field: usize, _t: f64, _r: f64) -> f64 {
        0.0
    }

    fn boundary_drive(&self, _field: usize, t: f64, r: f64, side: BoundarySide) -> f64 {
        let j = dalembert_jet(&self.0, t, r);
        match side {
            BoundarySide::Inner => j.dt_lbar_rphi(r),
            BoundarySide::Outer => j.dt_l_rphi(r),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{d1_4th, d2_4th};

    #[test]
    fn profile_jets_match_finite_differences() {
        for p in [PulseProfile::gaussian(1.3, 0.4, 0.7), PulseProfile::bump(0.8, -0.2, 1.1)] {
            for x in [-0.9, -0.3, 0.1, 0.5, 0.75] {
                let h = 1e-5;
                let j = p.jet(x);
                for k in 1..4 {
                    let fd = (p.jet(x + h)[k - 1] - p.jet(x - h)[k - 1]) / (2.0 * h);
                    assert!((fd - j[k]).abs() < 1e-5 * (1.0 + j[k].abs()), "{p:?} x={x} k={k}");
                }
            }
        }
        assert_eq!(PulseProfile::bump(1.0, 0.0, 1.0).jet(1.0), [0.0; 4]);
    }

    #[test]
    fn dalembert_closed_form_identities() {
        let zero = PulseProfile::gaussian(0.0, -3.0, 0.5);
        let v = dalembert_exact(&zero, 1.0, 2.0).unwrap();
        assert_eq!((v.phi, v.lphi, v.lbarphi), (0.0, 0.0, 0.0));
        let p = PulseProfile::gaussian(1.0, -4.0, 0.8);
        for k in 0..100 {
            let t = 0.1 * k as f64;
            let r = 1.0 + 0.07 * k as f64;
            let v = dalembert_exact(&p, t, r).unwrap();
            assert!((v.lphi * r * r + p.value(t - r)).abs() < 1e-14);
        }
        assert!(dalembert_exact(&p, 0.0, 0.0).is_err());
    }

    #[test]
    fn dalembert_satisfies_free_wave_equation() {
        let p = PulseProfile::gaussian(1.0, -6.0, 2.0);
        let h = 0.01;
        for (t, r) in [(0.3, 3.0), (2.0, 5.5), (4.0, 9.1), (7.5, 12.0)] {
            let along_r: Vec<f64> = (-2..=2).map(|k| dalembert_exact(&p, t, r + k as f64 * h).unwrap().phi).collect();
            let along_t: Vec<f64> = (-2..=2).map(|k| dalembert_exact(&p, t + k as f64 * h, r).unwrap().phi).collect();
            let res = -d2_4th(&along_t, 2, h) + d2_4th(&along_r, 2, h) + 2.0 / r * d1_4th(&along_r, 2, h);
            assert!(res.abs() <= 1e-10, "residual {res} at ({t}, {r})");
        }
    }

    #[test]
    fn burgers_sine_and_linear_profiles() {
        let n = 2001;
        let xs: Vec<f64> = (0..n).map(|i| -std::f64::consts::PI + 2.0 * std::f64::consts::PI * i as f64 / (n - 1) as f64).collect();
        let w: Vec<f64> = xs.iter().map(|x| -0.5 * x.sin()).collect();
        let s = burgers_shock_time(&xs, &w).unwrap().unwrap();
        assert!((s.brute_force - 2.0).abs() <= 0.04, "{s:?}");
        assert!((s.brute_force - s.analytic).abs() <= 0.02 * s.analytic);

        let xs: Vec<f64> = (0..201).map(|i| -1.0 + 0.01 * i as f64).collect();
        let w: Vec<f64> = xs.iter().map(|x| -x).collect();
        let s = burgers_shock_time(&xs, &w).unwrap().unwrap();
        assert!((s.brute_force - 1.0).abs() <= 0.02);

        let w: Vec<f64> = xs.iter().map(|x| x * x * x).collect();
        assert!(burgers_shock_time(&xs, &w).unwrap().is_none());
    }

    #[test]
    fn manufactured_sources() {
        let trig = manufactured_solution(ManufacturedKind::SeparableTrig { amplitude: 1.0 }, &EquationSpec::free()).unwrap();
        for (t, r) in [(0.3, 1.5), (1.0, 2.0), (2.5, 4.0)] {
            assert!((trig.source(t, r) - 2.0 * trig.exact(t, r).phi).abs() < 1e-14);
        }
        let zero = manufactured_solution(ManufacturedKind::SeparableTrig { amplitude: 0.0 }, &EquationSpec::john1()).unwrap();
        assert_eq!(zero.source(1.0, 2.0), 0.0);

        let bump = ManufacturedKind::TravelingBump { amplitude: 0.3, center: 4.0, width: 0.7 };
        let free = manufactured_solution(bump, &EquationSpec::free()).unwrap();
        let john = manufactured_solution(bump, &EquationSpec::john1()).unwrap();
        let (t, r) = (0.4, 4.6);
        let j = free.exact(t, r);
        let g1 = PulseProfile::gaussian(0.3, 0.0, 0.7).derivative(r - 4.0 - t);
        assert!((free.source(t, r) - 2.0 * g1 / r).abs() < 1e-14);
        assert!((john.source(t, r) - free.source(t, r) - j.phi_t * j.phi_t).abs() < 1e-14);
        assert!(manufactured_solution(bump, &EquationSpec::weak_null_pair()).is_err());
    }
}
