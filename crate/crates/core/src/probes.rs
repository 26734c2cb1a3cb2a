//! Quadrature probes of the trace, Hardy-type and cone Sobolev inequalities.
//!
//! Test functions are closed-form in `(u, ubar, cos theta)` with analytic
//! null derivatives, so both sides of each inequality are evaluated by
//! Gauss-Legendre quadrature without any grid. The inequality constants are
//! not known, so a probe only checks that `LHS / RHS` stays bounded and is
//! stable under refinement.

use std::f64::consts::PI;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diagnostics::u_plus;
use crate::error::{Error, Result};
use crate::geometry::FoliationChart;
use crate::numerics::GaussLegendre;

/// Falsification tripwire on `LHS / RHS`.
pub const RATIO_CAP: f64 = 1e6;
/// Allowed relative change of a ratio when quadrature nodes are doubled.
pub const REFINEMENT_TOL: f64 = 0.1;
const HOMOGENEITY_LAMBDA: f64 = 2.0;
/// Exact for the angular polynomials used here (degree <= 4 in `cos theta`).
const SPHERE_NODES: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InequalityId {
    /// `int_S r phi^2 + int_Hbar phi^2 <= C (int_S0 r phi^2 + E(Hbar))`
    Trace,
    /// `int_H phi^2 <= C (int_{S_{u,-u}} r phi^2 + int_{S_{-ubar,ubar}} r phi^2 + E(H) + E(Hbar))`
    TraceOutgoing,
    Hardy,
    Sobolev,
}

impl InequalityId {
    pub const ALL: [InequalityId; 4] = [Self::Trace, Self::TraceOutgoing, Self::Hardy, Self::Sobolev];

    pub fn name(self) -> &'static str {
        match self {
            Self::Trace => "trace",
            Self::TraceOutgoing => "trace_outgoing",
            Self::Hardy => "hardy",
            Self::Sobolev => "sobolev",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|i| i.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidInput(format!("unknown inequality id {s:?}")))
    }
}

/// Spherically symmetric profile of a test function.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BaseProfile {
    /// `r^{-p}`
    PowerTail { p: f64 },
    /// `exp(-((ubar - center) / width)^2)`
    Bump { center: f64, width: f64 },
    /// `(1 - u)^{-a} (1 + ubar)^{-b}`
    Separable { a: f64, b: f64 },
}

impl BaseProfile {
    /// `(f, d_u f, d_ubar f)`; `r` is the radius of the sphere `S_{u, ubar}`.
    fn eval(&self, u: f64, ubar: f64, r: f64, lapse: f64) -> (f64, f64, f64) {
        match *self {
            Self::PowerTail { p } => {
                let f = r.powf(-p);
                let fr = -p * f / r;
                (f, -0.5 * lapse * fr, 0.5 * lapse * fr)
            }
            Self::Bump { center, width } => {
                let x = (ubar - center) / width;
                let f = (-x * x).exp();
                (f, 0.0, -2.0 * x / width * f)
            }
            Self::Separable { a, b } => {
                let f = (1.0 - u).powf(-a) * (1.0 + ubar).powf(-b);
                (f, a * f / (1.0 - u), -b * f / (1.0 + ubar))
            }
        }
    }
}

/// `amplitude (a0 + a1 cos theta) f(s u, s ubar)` with `f` a [`BaseProfile`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestFunction {
    pub base: BaseProfile,
    pub amplitude: f64,
    pub a0: f64,
    pub a1: f64,
    pub dilation: f64,
}

/// Values of one member on a sphere `S_{u, ubar}`, before the angular factor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SphereValues {
    pub r: f64,
    pub h: f64,
    pub phi: f64,
    pub lphi: f64,
    pub lbarphi: f64,
}

impl TestFunction {
    pub fn radial(base: BaseProfile) -> Self {
        Self {
            base,
            amplitude: 1.0,
            a0: 1.0,
            a1: 0.0,
            dilation: 1.0,
        }
    }

    pub fn axisymmetric(base: BaseProfile, a0: f64, a1: f64) -> Self {
        Self { a0, a1, ..Self::radial(base) }
    }

    pub fn scaled(&self, lambda: f64) -> Self {
        Self {
            amplitude: self.amplitude * lambda,
            ..*self
        }
    }

    /// `phi(s u, s ubar)`.
    pub fn dilated(&self, s: f64) -> Self {
        Self {
            dilation: self.dilation * s,
            ..*self
        }
    }

    pub fn is_axisymmetric(&self) -> bool {
        self.a1 != 0.0
    }

    pub fn label(&self) -> String {
        let base = match self.base {
            BaseProfile::PowerTail { p } => format!("power_tail(p={p})"),
            BaseProfile::Bump { center, width } => format!("bump(c={center},w={width})"),
            BaseProfile::Separable { a, b } => format!("separable(a={a},b={b})"),
        };
        let mut s = base;
        if self.is_axisymmetric() {
            s = format!("({}+{}cos)*{s}", self.a0, self.a1);
        }
        if self.dilation != 1.0 {
            s = format!("{s}@x{}", self.dilation);
        }
        if self.amplitude != 1.0 {
            s = format!("{}*{s}", self.amplitude);
        }
        s
    }

    /// Radial factor and its null derivatives on `S_{u, ubar}`.
    pub fn on_sphere(&self, chart: &FoliationChart, u: f64, ubar: f64) -> Result<SphereValues> {
        let s = self.dilation;
        let p = chart.point_at(u, ubar)?;
        let (f, fu, fub) = if s == 1.0 {
            self.base.eval(u, ubar, p.r, chart.lapse(p.r))
        } else {
            let q = chart.point_at(s * u, s * ubar)?;
            let (f, fu, fub) = self.base.eval(s * u, s * ubar, q.r, chart.lapse(q.r));
            (f, s * fu, s * fub)
        };
        let inv_b = 1.0 / chart.lapse(p.r);
        let a = self.amplitude;
        Ok(SphereValues {
            r: p.r,
            h: chart.mass_param() / p.r,
            phi: a * f,
            lphi: a * ((1.0 - inv_b) * fu + (1.0 + inv_b) * fub),
            lbarphi: a * ((1.0 + inv_b) * fu + (1.0 - inv_b) * fub),
        })
    }

    fn angular(&self, x: f64) -> (f64, f64) {
        // (A(x), (d_theta A)^2) with x = cos theta
        (self.a0 + self.a1 * x, self.a1 * self.a1 * (1.0 - x * x))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestFamily {
    pub name: String,
    pub members: Vec<TestFunction>,
}

impl TestFamily {
    pub fn power_tails() -> Self {
        Self {
            name: "power_tail".into(),
            members: [0.5, 1.0, 1.5, 2.0]
                .into_iter()
                .map(|p| TestFunction::radial(BaseProfile::PowerTail { p }))
                .collect(),
        }
    }

    /// Bumps in `ubar` centred inside `[-u, ubar]`.
    pub fn bumps(u: f64, ubar: f64) -> Self {
        let len = ubar + u;
        Self {
            name: "bump".into(),
            members: [(0.25, 0.1), (0.5, 0.15), (0.75, 0.2)]
                .into_iter()
                .map(|(c, w)| {
                    TestFunction::radial(BaseProfile::Bump {
                        center: -u + c * len,
                        width: w * len,
                    })
                })
                .collect(),
        }
    }

    pub fn separable() -> Self {
        Self {
            name: "separable".into(),
            members: [(0.5, 0.5), (1.0, 1.0), (1.5, 0.5)]
                .into_iter()
                .map(|(a, b)| TestFunction::radial(BaseProfile::Separable { a, b }))
                .collect(),
        }
    }

    pub fn axisymmetric(u: f64, ubar: f64) -> Self {
        let len = ubar + u;
        Self {
            name: "axisymmetric".into(),
            members: vec![
                TestFunction::axisymmetric(BaseProfile::Separable { a: 1.0, b: 1.0 }, 1.0, 0.5),
                TestFunction::axisymmetric(
                    BaseProfile::Bump {
                        center: -u + 0.5 * len,
                        width: 0.2 * len,
                    },
                    0.5,
                    1.0,
                ),
                TestFunction::axisymmetric(BaseProfile::PowerTail { p: 1.0 }, 1.0, -1.0),
            ],
        }
    }

    /// Everything above, the family used by default.
    pub fn shipped(u: f64, ubar: f64) -> Self {
        let mut members = Vec::new();
        for f in [Self::power_tails(), Self::bumps(u, ubar), Self::separable(), Self::axisymmetric(u, ubar)] {
            members.extend(f.members);
        }
        Self {
            name: "shipped".into(),
            members,
        }
    }

    pub fn by_name(name: &str, u: f64, ubar: f64) -> Result<Self> {
        match name {
            "power_tail" => Ok(Self::power_tails()),
            "bump" => Ok(Self::bumps(u, ubar)),
            "separable" => Ok(Self::separable()),
            "axisymmetric" => Ok(Self::axisymmetric(u, ubar)),
            "shipped" => Ok(Self::shipped(u, ubar)),
            other => Err(Error::InvalidInput(format!("unknown test family {other:?}"))),
        }
    }

    pub fn dilated(&self, s: f64) -> Self {
        Self {
            name: format!("{}@x{s}", self.name),
            members: self.members.iter().map(|m| m.dilated(s)).collect(),
        }
    }
}

/// Weights `(gamma, gamma0', gamma2)` of the cone Sobolev inequality.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SobolevWeights {
    pub gamma: f64,
    pub gamma0p: f64,
    pub gamma2: f64,
}

impl SobolevWeights {
    pub const STANDARD: [SobolevWeights; 3] = [
        SobolevWeights { gamma: 1.0, gamma0p: 1.0, gamma2: 0.5 },
        SobolevWeights { gamma: 0.5, gamma0p: 1.0, gamma2: 0.0 },
        SobolevWeights { gamma: 1.5, gamma0p: 0.0, gamma2: 1.5 },
    ];

    /// Requires `2 gamma = gamma0' + 2 gamma2`.
    pub fn validated(self) -> Result<Self> {
        let lhs = 2.0 * self.gamma;
        let rhs = self.gamma0p + 2.0 * self.gamma2;
        if !((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs())) {
            return Err(Error::InvalidInput(format!(
                "Sobolev weights violate 2 gamma = gamma0' + 2 gamma2: {lhs} != {rhs}"
            )));
        }
        Ok(self)
    }

    pub fn label(&self) -> String {
        format!("({},{},{})", self.gamma, self.gamma0p, self.gamma2)
    }
}

impl Default for SobolevWeights {
    fn default() -> Self {
        Self::STANDARD[0]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeSettings {
    /// Gauss-Legendre order per panel.
    pub nodes: usize,
    /// Panels per null direction; the refined pass doubles this.
    pub panels: usize,
    /// Exponent in the Hardy bulk term.
    pub alpha: f64,
    /// Energy weight `M`; `None` uses `|m|` of the chart.
    pub energy_weight: Option<f64>,
    pub sobolev: SobolevWeights,
}

impl Default for ProbeSettings {
    fn default() -> Self {
        Self {
            nodes: 8,
            panels: 8,
            alpha: 1.0,
            energy_weight: None,
            sobolev: SobolevWeights::default(),
        }
    }
}

/// The probe domain `D_u^ubar` of a chart.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeDomain {
    pub chart: FoliationChart,
    pub u: f64,
    pub ubar: f64,
}

impl ProbeDomain {
    pub fn new(chart: FoliationChart, u: f64, ubar: f64) -> Result<Self> {
        if !(u <= chart.u0()) {
            return Err(Error::InvalidInput(format!("probe cone u = {u} must satisfy u <= u0 = {}", chart.u0())));
        }
        if !(ubar > -u) {
            return Err(Error::InvalidInput(format!("probe needs ubar > -u, got u = {u}, ubar = {ubar}")));
        }
        Ok(Self { chart, u, ubar })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeRow {
    pub member: String,
    pub lhs: f64,
    pub rhs: f64,
    /// `None` when both sides vanish.
    pub ratio: Option<f64>,
    pub ratio_refined: Option<f64>,
    pub refinement_change: f64,
    /// The ratio of the member scaled by 2 equals the unscaled ratio bit for bit.
    pub homogeneous: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub inequality: InequalityId,
    pub family: String,
    /// Extra parameters, e.g. the Sobolev weights.
    pub variant: String,
    pub rows: Vec<ProbeRow>,
    pub max_ratio: f64,
    /// Every ratio moved by less than [`REFINEMENT_TOL`] under node doubling.
    pub stable: bool,
    pub homogeneous: bool,
}

impl ProbeReport {
    pub fn ratio_rows(&self) -> usize {
        self.rows.iter().filter(|r| r.ratio.is_some()).count()
    }

    pub fn csv_header() -> &'static [&'static str] {
        &["inequality", "variant", "member", "lhs", "rhs", "ratio", "ratio_refined", "refinement_change", "homogeneous"]
    }

    pub fn write_csv_rows<W: Write>(&self, w: &mut csv::Writer<W>) -> Result<()> {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for row in &self.rows {
            w.write_record([
                self.inequality.name().to_string(),
                self.variant.clone(),
                row.member.clone(),
                row.lhs.to_string(),
                row.rhs.to_string(),
                opt(row.ratio),
                opt(row.ratio_refined),
                row.refinement_change.to_string(),
                row.homogeneous.to_string(),
            ])?;
        }
        Ok(())
    }

    pub fn write_csv<W: Write>(reports: &[ProbeReport], out: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
        w.write_record(Self::csv_header())?;
        for r in reports {
            r.write_csv_rows(&mut w)?;
        }
        w.flush()?;
        Ok(())
    }
}

struct Quadrature {
    rule: GaussLegendre,
    sphere: Vec<(f64, f64)>,
    panels: usize,
}

impl Quadrature {
    fn new(nodes: usize, panels: usize) -> Self {
        let sphere = GaussLegendre::new(SPHERE_NODES)
            .points(-1.0, 1.0, 1)
            .into_iter()
            .map(|(x, w)| (x, 2.0 * PI * w))
            .collect();
        Self {
            rule: GaussLegendre::new(nodes.max(2)),
            sphere,
            panels: panels.max(1),
        }
    }

    fn line(&self, a: f64, b: f64) -> Vec<(f64, f64)> {
        if b <= a {
            return Vec::new();
        }
        // panels scale with length so long cones keep their resolution
        self.rule.points(a, b, self.panels)
    }
}

/// Local quantities at one point `(u, ubar, x = cos theta)`.
#[derive(Clone, Copy)]
struct Point {
    r: f64,
    h: f64,
    phi: f64,
    lphi: f64,
    lbarphi: f64,
    /// `(d_theta phi)^2`
    dtheta2: f64,
}

struct Evaluator<'a> {
    f: &'a TestFunction,
    dom: &'a ProbeDomain,
    q: &'a Quadrature,
    m: f64,
}

impl Evaluator<'_> {
    fn sphere(&self, u: f64, ubar: f64, density: impl Fn(&Point) -> f64) -> Result<f64> {
        let s = self.f.on_sphere(&self.dom.chart, u, ubar)?;
        Ok(self
            .q
            .sphere
            .iter()
            .map(|&(x, w)| {
                let (a, da2) = self.f.angular(x);
                let p = Point {
                    r: s.r,
                    h: s.h,
                    phi: a * s.phi,
                    lphi: a * s.lphi,
                    lbarphi: a * s.lbarphi,
                    dtheta2: da2 * s.phi * s.phi,
                };
                w * density(&p)
            })
            .sum())
    }

    /// `int_{H_u} density dubar' dw` over `ubar' in [-u, ubar]`.
    fn outgoing(&self, u: f64, ubar: f64, density: impl Fn(&Point) -> f64 + Copy) -> Result<f64> {
        self.q.line(-u, ubar).iter().map(|&(ub, w)| Ok(w * self.sphere(u, ub, density)?)).sum()
    }

    /// `int_{Hbar_ubar} density du' dw` over `u' in [-ubar, u]`.
    fn incoming(&self, ubar: f64, u: f64, density: impl Fn(&Point) -> f64 + Copy) -> Result<f64> {
        self.q.line(-ubar, u).iter().map(|&(up, w)| Ok(w * self.sphere(up, ubar, density)?)).sum()
    }

    /// `int_D density du' dubar' dw`.
    fn region(&self, density: impl Fn(f64, &Point) -> f64 + Copy) -> Result<f64> {
        let (u, ubar) = (self.dom.u, self.dom.ubar);
        self.q
            .line(-ubar, u)
            .iter()
            .map(|&(up, w)| Ok(w * self.outgoing(up, ubar, |p| density(up, p))?))
            .sum()
    }

    fn energy_h(&self, u: f64, ubar: f64) -> Result<f64> {
        let m = self.m;
        self.outgoing(u, ubar, move |p| {
            0.5 * p.r * p.r * (p.lphi * p.lphi + m / p.r * p.lbarphi * p.lbarphi) + 0.5 * p.dtheta2
        })
    }

    fn energy_hbar(&self, ubar: f64, u: f64) -> Result<f64> {
        let m = self.m;
        self.incoming(ubar, u, move |p| {
            0.5 * p.r * p.r * (p.lbarphi * p.lbarphi + m / p.r * p.lphi * p.lphi) + 0.5 * p.dtheta2
        })
    }

    fn sides(&self, id: InequalityId, settings: &ProbeSettings) -> Result<(f64, f64)> {
        let (u, ubar) = (self.dom.u, self.dom.ubar);
        let r_phi2 = |p: &Point| p.r * p.phi * p.phi;
        let phi2 = |p: &Point| p.phi * p.phi;
        match id {
            InequalityId::Trace => {
                let lhs = self.sphere(u, ubar, r_phi2)? + self.incoming(ubar, u, phi2)?;
                let rhs = self.sphere(-ubar, ubar, r_phi2)? + self.energy_hbar(ubar, u)?;
                Ok((lhs, rhs))
            }
            InequalityId::TraceOutgoing => {
                let lhs = self.outgoing(u, ubar, phi2)?;
                let rhs = self.sphere(u, -u, r_phi2)?
                    + self.sphere(-ubar, ubar, r_phi2)?
                    + self.energy_h(u, ubar)?
                    + self.energy_hbar(ubar, u)?;
                Ok((lhs, rhs))
            }
            InequalityId::Hardy => self.hardy(settings.alpha),
            InequalityId::Sobolev => self.sobolev(settings.sobolev),
        }
    }

    fn hardy(&self, alpha: f64) -> Result<(f64, f64)> {
        let (u, ubar) = (self.dom.u, self.dom.ubar);
        let chart = self.dom.chart;
        let lhs = self.incoming(ubar, u, |p| p.r * p.phi * p.phi)?
            + self.region(|up, p| {
                p.r * p.r * p.lphi * p.lphi + alpha * (u_plus(up) / p.r).powf(alpha) * p.phi * p.phi
            })?;
        // W1(D) = int r^{-2} |L(r phi)|^2 + |grad_S phi|^2 dx dt, dx dt = 1/2 b r^2 du dubar dw
        let w1_region = self.region(|_, p| {
            let l_rphi = p.r * p.lphi + p.phi;
            0.5 * chart.lapse(p.r) * (l_rphi * l_rphi + p.dtheta2)
        })?;
        let energy_integral = if self.m > 0.0 {
            let mut total = 0.0;
            for (up, w) in self.q.line(-ubar, u) {
                total += w * self.energy_h(up, ubar)? / u_plus(up);
            }
            self.m * total
        } else {
            0.0
        };
        // int_{Sigma_0} r^{-1} phi^2 dx over -u <= r* <= ubar, with dx = r^2 dr dw and dr = b dr*
        let sigma0: f64 = self
            .q
            .line(-u, ubar)
            .iter()
            .map(|&(rs, w)| -> Result<f64> {
                let r = chart.invert_r_star(rs)?;
                Ok(w * chart.lapse(r) * self.sphere(-rs, rs, |p| p.r * p.phi * p.phi)?)
            })
            .sum::<Result<f64>>()?;
        Ok((lhs, w1_region + energy_integral + sigma0))
    }

    fn sobolev(&self, wts: SobolevWeights) -> Result<(f64, f64)> {
        let (u, ubar) = (self.dom.u, self.dom.ubar);
        let SobolevWeights { gamma, gamma0p, gamma2 } = wts.validated()?;
        let quartic = |p: &Point| (p.r.powf(gamma) * p.phi).powi(4) / (p.r * p.r);
        let lhs = self.sphere(u, ubar, quartic)?;
        // L'(r^g phi) = r^g (L phi - h Lbar phi) + g r^{g-1} (1 + h) phi
        let lprime = self.outgoing(u, ubar, |p| {
            let v = p.r.powf(gamma) * (p.lphi - p.h * p.lbarphi) + gamma * p.r.powf(gamma - 1.0) * (1.0 + p.h) * p.phi;
            p.r.powf(gamma0p) * v * v / (p.r * p.r)
        })?;
        let angular = self.outgoing(u, ubar, |p| p.r.powf(2.0 * gamma2) * (p.phi * p.phi + p.dtheta2) / (p.r * p.r))?;
        let rhs = self.sphere(u, -u, quartic)? + lprime * angular;
        Ok((lhs, rhs))
    }
}

fn ratio(lhs: f64, rhs: f64, member: &str, id: InequalityId) -> Result<Option<f64>> {
    if !lhs.is_finite() || !rhs.is_finite() {
        return Err(Error::ProbeFalsified(format!("{} probe: non-finite sides for {member}", id.name())));
    }
    if rhs == 0.0 {
        if lhs > 0.0 {
            return Err(Error::ProbeFalsified(format!("{} probe: RHS = 0 < LHS = {lhs} for {member}", id.name())));
        }
        return Ok(None);
    }
    let q = lhs / rhs;
    if q > RATIO_CAP {
        return Err(Error::ProbeFalsified(format!(
            "{} probe: ratio {q:e} exceeds the cap {RATIO_CAP:e} for {member}",
            id.name()
        )));
    }
    Ok(Some(q))
}

/// Evaluates one inequality on every member of `family`.
pub fn probe(id: InequalityId, family: &TestFamily, domain: &ProbeDomain, settings: &ProbeSettings) -> Result<ProbeReport> {
    if id == InequalityId::Sobolev {
        settings.sobolev.validated()?;
    }
    if !(settings.alpha > 0.0) {
        return Err(Error::InvalidInput(format!("Hardy exponent alpha must be positive, got {}", settings.alpha)));
    }
    let m = settings.energy_weight.unwrap_or(domain.chart.mass_param().abs());
    if !(m >= 0.0) {
        return Err(Error::InvalidInput(format!("energy weight M must be >= 0, got {m}")));
    }
    let coarse = Quadrature::new(settings.nodes, settings.panels);
    let fine = Quadrature::new(settings.nodes, 2 * settings.panels);
    let rows = family
        .members
        .par_iter()
        .map(|f| -> Result<ProbeRow> {
            let member = f.label();
            let eval = |f: &TestFunction, q: &Quadrature| Evaluator { f, dom: domain, q, m }.sides(id, settings);
            let (lhs, rhs) = eval(f, &coarse)?;
            let r1 = ratio(lhs, rhs, &member, id)?;
            let (lf, rf) = eval(f, &fine)?;
            let r2 = ratio(lf, rf, &member, id)?;
            let (ls, rs) = eval(&f.scaled(HOMOGENEITY_LAMBDA), &coarse)?;
            let homogeneous = ratio(ls, rs, &member, id)? == r1;
            let refinement_change = match (r1, r2) {
                (Some(a), Some(b)) => (b / a - 1.0).abs(),
                (None, None) => 0.0,
                _ => f64::INFINITY,
            };
            Ok(ProbeRow {
                member,
                lhs,
                rhs,
                ratio: r1,
                ratio_refined: r2,
                refinement_change,
                homogeneous,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let max_ratio = rows.iter().filter_map(|r| r.ratio).fold(0.0, f64::max);
    let stable = rows.iter().all(|r| r.refinement_change < REFINEMENT_TOL);
    let homogeneous = rows.iter().all(|r| r.homogeneous);
    Ok(ProbeReport {
        inequality: id,
        family: family.name.clone(),
        variant: match id {
            InequalityId::Sobolev => settings.sobolev.label(),
            InequalityId::Hardy => format!("alpha={}", settings.alpha),
            _ => String::new(),
        },
        rows,
        max_ratio,
        stable,
        homogeneous,
    })
}

pub fn probe_trace(family: &TestFamily, chart: &FoliationChart, u: f64, ubar: f64) -> Result<ProbeReport> {
    probe(InequalityId::Trace, family, &ProbeDomain::new(*chart, u, ubar)?, &ProbeSettings::default())
}

pub fn probe_trace_outgoing(family: &TestFamily, chart: &FoliationChart, u: f64, ubar: f64) -> Result<ProbeReport> {
    probe(InequalityId::TraceOutgoing, family, &ProbeDomain::new(*chart, u, ubar)?, &ProbeSettings::default())
}

pub fn probe_hardy(family: &TestFamily, chart: &FoliationChart, u: f64, ubar: f64, alpha: f64) -> Result<ProbeReport> {
    let settings = ProbeSettings { alpha, ..Default::default() };
    probe(InequalityId::Hardy, family, &ProbeDomain::new(*chart, u, ubar)?, &settings)
}

pub fn probe_sobolev(family: &TestFamily, chart: &FoliationChart, u: f64, ubar: f64, weights: SobolevWeights) -> Result<ProbeReport> {
    let settings = ProbeSettings {
        sobolev: weights.validated()?,
        ..Default::default()
    };
    probe(InequalityId::Sobolev, family, &ProbeDomain::new(*chart, u, ubar)?, &settings)
}

/// All probes on one domain: trace, outgoing trace, Hardy and one Sobolev
/// report per standard weight triple.
pub fn probe_suite(family: &TestFamily, domain: &ProbeDomain, settings: &ProbeSettings) -> Result<Vec<ProbeReport>> {
    let mut out = Vec::new();
    for id in [InequalityId::Trace, InequalityId::TraceOutgoing, InequalityId::Hardy] {
        out.push(probe(id, family, domain, settings)?);
    }
    for w in SobolevWeights::STANDARD {
        let s = ProbeSettings { sobolev: w, ..*settings };
        out.push(probe(InequalityId::Sobolev, family, domain, &s)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn domain() -> ProbeDomain {
        ProbeDomain::new(FoliationChart::new(0.05, 2.0).unwrap(), -4.0, 40.0).unwrap()
    }

    fn single(f: TestFunction) -> TestFamily {
        TestFamily { name: "one".into(), members: vec![f] }
    }

    #[test]
    fn zero_member_is_skipped() {
        let zero = single(TestFunction::radial(BaseProfile::PowerTail { p: 1.0 }).scaled(0.0));
        for id in InequalityId::ALL {
            let rep = probe(id, &zero, &domain(), &ProbeSettings::default()).unwrap();
            assert_eq!(rep.rows[0].ratio, None);
            assert_eq!((rep.rows[0].lhs, rep.rows[0].rhs), (0.0, 0.0));
        }
    }

    #[test]
    fn inverse_r_member_is_refinement_stable() {
        let fam = single(TestFunction::radial(BaseProfile::PowerTail { p: 1.0 }));
        let rep = probe(InequalityId::Trace, &fam, &domain(), &ProbeSettings::default()).unwrap();
        let row = &rep.rows[0];
        assert!(row.ratio.unwrap() > 0.0 && row.refinement_change < 0.1, "{row:?}");
        assert!(row.homogeneous);
    }

    #[test]
    fn null_derivatives_of_power_tail() {
        let chart = FoliationChart::new(0.05, 2.0).unwrap();
        let f = TestFunction::radial(BaseProfile::PowerTail { p: 2.0 });
        let s = f.on_sphere(&chart, -4.0, 10.0).unwrap();
        assert!((s.lphi + 2.0 * s.r.powi(-3)).abs() < 1e-14);
        assert!((s.lbarphi - 2.0 * s.r.powi(-3)).abs() < 1e-14);
    }

    #[test]
    fn null_derivatives_match_finite_differences() {
        let chart = FoliationChart::new(0.05, 2.0).unwrap();
        let f = TestFunction::radial(BaseProfile::Separable { a: 1.5, b: 0.5 }).dilated(2.0);
        let (u, ub) = (-4.0, 10.0);
        let s = f.on_sphere(&chart, u, ub).unwrap();
        let e = 1e-5;
        let at = |du: f64, dub: f64| f.on_sphere(&chart, u + du, ub + dub).unwrap().phi;
        let fu = (at(e, 0.0) - at(-e, 0.0)) / (2.0 * e);
        let fub = (at(0.0, e) - at(0.0, -e)) / (2.0 * e);
        // phi_t = f_u + f_ubar, phi_r = (f_ubar - f_u) / b
        let b = chart.lapse(s.r);
        assert!((s.lphi - (fu + fub + (fub - fu) / b)).abs() < 1e-8);
        assert!((s.lbarphi - (fu + fub - (fub - fu) / b)).abs() < 1e-8);
    }

    #[test]
    fn shipped_family_passes_every_probe() {
        let dom = domain();
        let fam = TestFamily::shipped(dom.u, dom.ubar);
        let reports = probe_suite(&fam, &dom, &ProbeSettings::default()).unwrap();
        for rep in &reports {
            assert!(rep.ratio_rows() >= 10, "{}", rep.inequality.name());
            assert!(rep.max_ratio.is_finite() && rep.max_ratio < RATIO_CAP);
            assert!(rep.stable, "{rep:#?}");
            assert!(rep.homogeneous);
        }
    }

    #[test]
    fn sobolev_weight_relation_is_enforced() {
        let dom = domain();
        let bad = SobolevWeights { gamma: 1.0, gamma0p: 1.0, gamma2: 1.0 };
        assert!(probe_sobolev(&TestFamily::power_tails(), &dom.chart, dom.u, dom.ubar, bad).is_err());
    }

    #[test]
    fn spherical_members_have_no_angular_term() {
        let dom = domain();
        let f = TestFunction::radial(BaseProfile::Separable { a: 1.0, b: 1.0 });
        let q = Quadrature::new(8, 4);
        let ev = Evaluator { f: &f, dom: &dom, q: &q, m: 0.05 };
        let with = ev.outgoing(dom.u, dom.ubar, |p| p.phi * p.phi + p.dtheta2).unwrap();
        let without = ev.outgoing(dom.u, dom.ubar, |p| p.phi * p.phi).unwrap();
        assert_eq!(with, without);
    }

    #[test]
    fn dyadic_rescaling_keeps_ratio_scale() {
        let dom = domain();
        let fam = TestFamily::separable();
        for id in [InequalityId::Trace, InequalityId::Hardy] {
            let a = probe(id, &fam, &dom, &ProbeSettings::default()).unwrap().max_ratio;
            let b = probe(id, &fam.dilated(2.0), &dom, &ProbeSettings::default()).unwrap().max_ratio;
            assert!(b / a < 4.0 && a / b < 4.0, "{id:?}: {a} vs {b}");
        }
    }

    #[test]
    fn unknown_ids_rejected() {
        assert!(InequalityId::parse("poincare").is_err());
        assert!(TestFamily::by_name("nope", -4.0, 40.0).is_err());
        assert_eq!(InequalityId::parse("Hardy").unwrap(), InequalityId::Hardy);
    }
}
