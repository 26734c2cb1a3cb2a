//! The equation class `g^{ab}(phi, dphi) d_a d_b phi = N^{ab} d_a phi d_b phi + q phi`
//! reduced to spherical symmetry.
//!
//! Angular derivatives of spherically symmetric fields vanish, so the metric
//! is described by four components `(g00, g0r, grr, gang)` where `gang`
//! multiplies the `(2/r) d_r phi` part of the flat Laplacian, and the
//! quadratic forms only see `(d_t phi, d_r phi)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Maximum number of coupled fields.
pub const MAX_FIELDS: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Catalog {
    Free,
    John1,
    John2,
    WeakNullPair,
    Generic,
}

impl Catalog {
    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_uppercase().as_str() {
            "FREE" => Some(Self::Free),
            "JOHN1" => Some(Self::John1),
            "JOHN2" => Some(Self::John2),
            "WEAK_NULL_PAIR" => Some(Self::WeakNullPair),
            "GENERIC" => Some(Self::Generic),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Free => "FREE",
            Self::John1 => "JOHN1",
            Self::John2 => "JOHN2",
            Self::WeakNullPair => "WEAK_NULL_PAIR",
            Self::Generic => "GENERIC",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum PotentialKind {
    Zero,
    Constant,
    Decaying,
}

/// Potential `q(r)`, with `0 <= q <= 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PotentialSpec {
    pub kind: PotentialKind,
    pub q0: f64,
    pub eta: f64,
}

impl Default for PotentialSpec {
    fn default() -> Self {
        Self::zero()
    }
}

impl PotentialSpec {
    pub fn zero() -> Self {
        Self {
            kind: PotentialKind::Zero,
            q0: 0.0,
            eta: 1.0,
        }
    }

    pub fn constant(q0: f64) -> Result<Self> {
        Self {
            kind: PotentialKind::Constant,
            q0,
            eta: 1.0,
        }
        .validated()
    }

    pub fn decaying(q0: f64, eta: f64) -> Result<Self> {
        Self {
            kind: PotentialKind::Decaying,
            q0,
            eta,
        }
        .validated()
    }

    pub fn validated(self) -> Result<Self> {
        if !(0.0..=1.0).contains(&self.q0) {
            return Err(Error::InvalidInput(format!("q0 must lie in [0, 1], got {}", self.q0)));
        }
        if self.kind == PotentialKind::Decaying && !(self.eta > 0.0) {
            return Err(Error::InvalidInput(format!("eta must be > 0, got {}", self.eta)));
        }
        Ok(self)
    }

    pub fn is_constant(&self) -> bool {
        matches!(self.kind, PotentialKind::Zero | PotentialKind::Constant)
    }

    /// `sup q` over the exterior, the `q0` entering the weighted data norm.
    pub fn sup(&self) -> f64 {
        match self.kind {
            PotentialKind::Zero => 0.0,
            _ => self.q0,
        }
    }

    pub fn value(&self, r: f64) -> f64 {
        self.derivatives(r)[0]
    }

    /// `[q, q', q'', q''']` at radius `r`, differentiated in closed form.
    pub fn derivatives(&self, r: f64) -> [f64; 4] {
        match self.kind {
            PotentialKind::Zero => [0.0; 4],
            PotentialKind::Constant => [self.q0, 0.0, 0.0, 0.0],
            PotentialKind::Decaying => {
                // q = q0 (1 + r^2)^(-a), a = (2 + eta) / 2
                let a = 0.5 * (2.0 + self.eta);
                let s = 1.0 + r * r;
                let p0 = s.powf(-a);
                let p1 = p0 / s;
                let p2 = p1 / s;
                let p3 = p2 / s;
                let q1 = -2.0 * a * r * p1;
                let q2 = -2.0 * a * p1 + 4.0 * a * (a + 1.0) * r * r * p2;
                let q3 = 12.0 * a * (a + 1.0) * r * p2 - 8.0 * a * (a + 1.0) * (a + 2.0) * r * r * r * p3;
                [self.q0 * p0, self.q0 * q1, self.q0 * q2, self.q0 * q3]
            }
        }
    }
}

/// Result of [`validate_potential`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PotentialCheck {
    pub ok: bool,
    pub worst_ratio: f64,
}

/// Bound for the decay ratio `|r^i d^i q| r^(2 + eta)` accepted as "bounded".
pub const POTENTIAL_RATIO_CAP: f64 = 1e3;

/// Checks `|r^i d^i q| <~ r^(-2-eta)` for `i = 1..=3` on the given radii.
pub fn validate_potential(spec: &PotentialSpec, r_samples: &[f64]) -> Result<PotentialCheck> {
    let mut worst: f64 = 0.0;
    for &r in r_samples {
        if !(2.0..=1e4).contains(&r) {
            return Err(Error::InvalidInput(format!("potential sample radius {r} outside [2, 1e4]")));
        }
        let d = spec.derivatives(r);
        let weight = r.powf(2.0 + spec.eta);
        let mut rp = 1.0;
        for di in d.iter().skip(1) {
            rp *= r;
            worst = worst.max((rp * di).abs() * weight);
        }
    }
    Ok(PotentialCheck {
        ok: worst.is_finite() && worst <= POTENTIAL_RATIO_CAP,
        worst_ratio: worst,
    })
}

/// First derivatives `(d_t phi, d_r phi)` of one field at one point.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Derivs {
    pub dt: f64,
    pub dr: f64,
}

impl Derivs {
    pub fn new(dt: f64, dr: f64) -> Self {
        Self { dt, dr }
    }

    fn component(&self, c: usize) -> f64 {
        if c == 0 { self.dt } else { self.dr }
    }
}

/// Inverse-metric components in the spherically symmetric reduction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricComponents {
    pub g00: f64,
    pub g0r: f64,
    pub grr: f64,
    pub gang: f64,
}

impl MetricComponents {
    pub const MINKOWSKI: Self = Self {
        g00: -1.0,
        g0r: 0.0,
        grr: 1.0,
        gang: 1.0,
    };

    pub fn is_lorentzian(&self) -> bool {
        self.g00 < 0.0 && self.grr > 0.0
    }

    /// Largest `|dr/dt|` of the radial characteristics.
    pub fn max_speed(&self) -> f64 {
        let disc = (self.g0r * self.g0r - self.g00 * self.grr).max(0.0);
        (self.g0r.abs() + disc.sqrt()) / (-self.g00)
    }
}

/// Perturbation `H = c phi + d^mu d_mu phi` for the four reduced components
/// `[00, 0r, rr, ang]`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LinearMetricPerturbation {
    pub phi: [f64; 4],
    pub dphi: [[f64; 2]; 4],
}

impl LinearMetricPerturbation {
    fn eval(&self, phi: f64, d: Derivs) -> [f64; 4] {
        let mut out = [0.0; 4];
        for (k, o) in out.iter_mut().enumerate() {
            *o = self.phi[k] * phi + self.dphi[k][0] * d.dt + self.dphi[k][1] * d.dr;
        }
        out
    }

    pub fn is_zero(&self) -> bool {
        self.phi.iter().all(|v| *v == 0.0) && self.dphi.iter().flatten().all(|v| *v == 0.0)
    }
}

/// One member of the equation class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquationSpec {
    pub catalog: Catalog,
    /// Only used by `GENERIC`.
    pub h_coeffs: LinearMetricPerturbation,
    /// `N^{ab}` over `(t, r)`; only used by `GENERIC`, applied to each field.
    pub n_coeffs: [[f64; 2]; 2],
    pub potential: PotentialSpec,
    pub field_count: usize,
}

impl EquationSpec {
    fn base(catalog: Catalog, field_count: usize) -> Self {
        Self {
            catalog,
            h_coeffs: LinearMetricPerturbation::default(),
            n_coeffs: [[0.0; 2]; 2],
            potential: PotentialSpec::zero(),
            field_count,
        }
    }

    pub fn free() -> Self {
        Self::base(Catalog::Free, 1)
    }

    /// `box phi = -(d_t phi)^2`
    pub fn john1() -> Self {
        Self::base(Catalog::John1, 1)
    }

    /// `box phi = -d_t phi * Laplacian phi`, written as `g^rr = g^ang = 1 + d_t phi`.
    pub fn john2() -> Self {
        Self::base(Catalog::John2, 1)
    }

    /// `box phi_1 = -(d_t phi_2)^2`, `box phi_2 = 0`.
    pub fn weak_null_pair() -> Self {
        Self::base(Catalog::WeakNullPair, 2)
    }

    pub fn generic(
        h_coeffs: LinearMetricPerturbation,
        n_coeffs: [[f64; 2]; 2],
        field_count: usize,
    ) -> Result<Self> {
        if !(1..=MAX_FIELDS).contains(&field_count) {
            return Err(Error::InvalidInput(format!("field_count must be 1 or 2, got {field_count}")));
        }
        if n_coeffs[0][1] != n_coeffs[1][0] {
            return Err(Error::InvalidInput("N^{ab} must be symmetric".into()));
        }
        Ok(Self {
            h_coeffs,
            n_coeffs,
            ..Self::base(Catalog::Generic, field_count)
        })
    }

    pub fn from_catalog(catalog: Catalog) -> Self {
        match catalog {
            Catalog::Free => Self::free(),
            Catalog::John1 => Self::john1(),
            Catalog::John2 => Self::john2(),
            Catalog::WeakNullPair => Self::weak_null_pair(),
            Catalog::Generic => Self::base(Catalog::Generic, 1),
        }
    }

    pub fn with_potential(mut self, potential: PotentialSpec) -> Self {
        self.potential = potential;
        self
    }

    /// Whether the principal part is the flat wave operator.
    pub fn is_flat(&self) -> bool {
        match self.catalog {
            Catalog::John2 => false,
            Catalog::Generic => self.h_coeffs.is_zero(),
            _ => true,
        }
    }

    /// Metric components without the Lorentzian check.
    pub fn metric_unchecked(&self, phi: f64, d: Derivs) -> MetricComponents {
        match self.catalog {
            Catalog::Free | Catalog::John1 | Catalog::WeakNullPair => MetricComponents::MINKOWSKI,
            Catalog::John2 => MetricComponents {
                g00: -1.0,
                g0r: 0.0,
                grr: 1.0 + d.dt,
                gang: 1.0 + d.dt,
            },
            Catalog::Generic => {
                let h = self.h_coeffs.eval(phi, d);
                MetricComponents {
                    g00: -1.0 + h[0],
                    g0r: h[1],
                    grr: 1.0 + h[2],
                    gang: 1.0 + h[3],
                }
            }
        }
    }

    pub fn metric_components(&self, phi: f64, d: Derivs) -> Result<MetricComponents> {
        if !phi.is_finite() || !d.dt.is_finite() || !d.dr.is_finite() {
            return Err(Error::InvalidInput("non-finite field values".into()));
        }
        let g = self.metric_unchecked(phi, d);
        if !g.is_lorentzian() {
            return Err(Error::LorentzianBreakdown {
                r: f64::NAN,
                g00: g.g00,
                grr: g.grr,
            });
        }
        Ok(g)
    }

    /// `sum N^{ab} d_a phi d_b phi` for every field. The potential term is not included.
    pub fn semilinear_rhs(&self, d: &[Derivs]) -> [f64; MAX_FIELDS] {
        let mut out = [0.0; MAX_FIELDS];
        match self.catalog {
            Catalog::Free | Catalog::John2 => {}
            Catalog::John1 => out[0] = -d[0].dt * d[0].dt,
            Catalog::WeakNullPair => out[0] = -d[1].dt * d[1].dt,
            Catalog::Generic => {
                for (f, o) in out.iter_mut().enumerate().take(self.field_count) {
                    let mut s = 0.0;
                    for a in 0..2 {
                        for b in 0..2 {
                            s += self.n_coeffs[a][b] * d[f].component(a) * d[f].component(b);
                        }
                    }
                    *o = s;
                }
            }
        }
        out
    }

    /// Largest characteristic speed over `(phi, derivs)` samples of field 0.
    pub fn characteristic_speed<I>(&self, samples: I) -> Result<f64>
    where
        I: IntoIterator<Item = (f64, Derivs)>,
    {
        if self.is_flat() {
            return Ok(1.0);
        }
        let mut speed: f64 = 0.0;
        for (phi, d) in samples {
            speed = speed.max(self.metric_components(phi, d)?.max_speed());
        }
        Ok(speed.max(f64::MIN_POSITIVE))
    }
}

/// Pointwise residual `g^{ab} d_a d_b phi - N - q phi - source` of the reduced PDE.
///
/// `second = (phi_tt, phi_tr, phi_rr)`.
pub fn pointwise_residual(
    metric: &MetricComponents,
    r: f64,
    d: Derivs,
    second: (f64, f64, f64),
    semilinear: f64,
    q: f64,
    phi: f64,
    source: f64,
) -> f64 {
    let (tt, tr, rr) = second;
    metric.g00 * tt + 2.0 * metric.g0r * tr + metric.grr * rr + metric.gang * 2.0 / r * d.dr
        - semilinear
        - q * phi
        - source
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn catalog_metrics_are_minkowski_at_zero() {
        let specs = [
            EquationSpec::free(),
            EquationSpec::john1(),
            EquationSpec::john2(),
            EquationSpec::weak_null_pair(),
            EquationSpec::generic(
                LinearMetricPerturbation {
                    phi: [0.1, 0.2, 0.3, 0.4],
                    dphi: [[0.5, 0.1], [0.2, 0.3], [0.4, 0.5], [0.1, 0.1]],
                },
                [[1.0, 0.5], [0.5, -1.0]],
                1,
            )
            .unwrap(),
        ];
        for s in specs {
            assert_eq!(s.metric_components(0.0, Derivs::default()).unwrap(), MetricComponents::MINKOWSKI);
        }
    }

    #[test]
    fn john2_metric_and_breakdown() {
        let s = EquationSpec::john2();
        let g = s.metric_components(0.0, Derivs::new(0.3, 0.0)).unwrap();
        assert_eq!(g.grr, 1.3);
        assert_eq!(g.gang, 1.3);
        assert!(matches!(
            s.metric_components(0.0, Derivs::new(-1.0, 0.0)),
            Err(Error::LorentzianBreakdown { .. })
        ));
    }

    #[test]
    fn semilinear_sources() {
        let j1 = EquationSpec::john1();
        let v = j1.semilinear_rhs(&[Derivs::new(0.2, 0.7)]);
        assert!((v[0] + 0.04).abs() < 1e-16);
        let wn = EquationSpec::weak_null_pair();
        let v = wn.semilinear_rhs(&[Derivs::new(0.1, 0.0), Derivs::new(0.5, 0.3)]);
        assert_eq!(v, [-0.25, 0.0]);
        for s in [EquationSpec::free(), j1, wn] {
            assert_eq!(s.semilinear_rhs(&[Derivs::default(); 2]), [0.0; 2]);
        }
    }

    #[test]
    fn characteristic_speeds() {
        assert_eq!(EquationSpec::free().characteristic_speed([(0.0, Derivs::new(5.0, 1.0))]).unwrap(), 1.0);
        let j2 = EquationSpec::john2();
        let v = j2
            .characteristic_speed([(0.0, Derivs::new(0.05, 0.0)), (0.0, Derivs::new(0.1, 0.0))])
            .unwrap();
        assert!((v - 1.1f64.sqrt()).abs() < 1e-15);
        assert!((v - 1.0488).abs() < 1e-4);
        assert_eq!(j2.characteristic_speed([(0.0, Derivs::default())]).unwrap(), 1.0);
    }

    #[test]
    fn potential_checks() {
        let radii: Vec<f64> = (0..200).map(|i| 2.0 * 1.045f64.powi(i)).filter(|r| *r <= 1e4).collect();
        let zero = validate_potential(&PotentialSpec::zero(), &radii).unwrap();
        assert!(zero.ok && zero.worst_ratio == 0.0);
        let c = validate_potential(&PotentialSpec::constant(0.5).unwrap(), &radii).unwrap();
        assert!(c.ok && c.worst_ratio == 0.0);
        let d = validate_potential(&PotentialSpec::decaying(1.0, 0.5).unwrap(), &radii).unwrap();
        assert!(d.ok && d.worst_ratio > 1.0 && d.worst_ratio < 100.0, "{d:?}");
        assert!(validate_potential(&PotentialSpec::zero(), &[1.0]).is_err());
    }

    #[test]
    fn decaying_potential_derivatives_match_finite_differences() {
        let p = PotentialSpec::decaying(0.8, 0.5).unwrap();
        for r in [2.0, 3.5, 10.0, 40.0] {
            let d = p.derivatives(r);
            let h = 1e-3 * r;
            for k in 1..4 {
                let fd = (p.derivatives(r + h)[k - 1] - p.derivatives(r - h)[k - 1]) / (2.0 * h);
                assert!((fd - d[k]).abs() <= 1e-5 * d[k].abs().max(1e-12) + 1e-14, "r={r} k={k}");
            }
        }
    }
}
