//! Radial grids, data families on `{r >= R}`, and the weighted data norm.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{cubic_interp, derivative_4th, simpson};
use crate::oracles::PulseProfile;

/// Uniform radial grid `r_i = r_in + i dr`, `i = 0..n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadialGrid {
    pub r_in: f64,
    pub r_out: f64,
    pub n: usize,
}

impl RadialGrid {
    pub fn new(r_in: f64, r_out: f64, n: usize) -> Result<Self> {
        if n < 16 {
            return Err(Error::InvalidInput(format!("grid needs n >= 16, got {n}")));
        }
        if !(r_in >= 1.0) || !(r_out > r_in) || !r_out.is_finite() {
            return Err(Error::InvalidInput(format!("grid needs 1 <= r_in < r_out, got [{r_in}, {r_out}]")));
        }
        Ok(Self { r_in, r_out, n })
    }

    /// Grid with spacing as close to `dr` as possible.
    pub fn with_spacing(r_in: f64, r_out: f64, dr: f64) -> Result<Self> {
        let n = ((r_out - r_in) / dr).round() as usize + 1;
        Self::new(r_in, r_out, n)
    }

    pub fn dr(&self) -> f64 {
        (self.r_out - self.r_in) / (self.n - 1) as f64
    }

    pub fn r(&self, i: usize) -> f64 {
        self.r_in + self.dr() * i as f64
    }

    pub fn radii(&self) -> impl ExactSizeIterator<Item = f64> + '_ {
        let dr = self.dr();
        (0..self.n).map(move |i| self.r_in + dr * i as f64)
    }

    /// Same interval, `(n - 1) * factor + 1` points.
    pub fn refined(&self, factor: usize) -> Self {
        Self {
            n: (self.n - 1) * factor + 1,
            ..*self
        }
    }

    pub fn contains(&self, r: f64) -> bool {
        r >= self.r_in && r <= self.r_out
    }
}

/// Initial data `(phi(0, .), d_t phi(0, .))` for one field.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DataPair {
    pub phi0: Vec<f64>,
    pub phi1: Vec<f64>,
    /// Amplitude and power of an analytic `A r^-p` tail beyond the grid.
    pub tail: Option<PolyTail>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolyTail {
    pub amplitude: f64,
    pub power: f64,
}

impl DataPair {
    pub fn new(phi0: Vec<f64>, phi1: Vec<f64>) -> Self {
        Self { phi0, phi1, tail: None }
    }

    pub fn zeros(n: usize) -> Self {
        Self::new(vec![0.0; n], vec![0.0; n])
    }

    pub fn scaled(&self, lambda: f64) -> Self {
        Self {
            phi0: self.phi0.iter().map(|v| lambda * v).collect(),
            phi1: self.phi1.iter().map(|v| lambda * v).collect(),
            tail: self.tail.map(|t| PolyTail {
                amplitude: lambda * t.amplitude,
                ..t
            }),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.phi0.iter().chain(&self.phi1).all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum DataFamily {
    /// `A exp(-1 / (1 - s^2))`, `s = (r - center) / width`, zero velocity.
    AnnulusBump { amplitude: f64, center: f64, width: f64 },
    /// `A chi(r) (1 + r)^-p` with `chi` a smooth step from 0 at `R` to 1 at `R + 1`.
    PolyTail { amplitude: f64, power: f64 },
    /// `phi0 = F(-r) / r`, `phi1 = F'(-r) / r`: exactly outgoing free-wave data.
    OutgoingPulse { profile: PulseProfile },
}

/// Norm parameters used to reject data whose weighted norm would diverge.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormParams {
    pub gamma0: f64,
    pub q0: f64,
}

/// Smallest power for which a `(1 + r)^-p` tail has a finite weighted norm.
///
/// The gradient terms need `2p > 1 + gamma0`; the mass term `q0 phi^2`
/// carries two extra powers of `r` and needs `2p > 3 + gamma0`.
pub fn tail_power_threshold(gamma0: f64, q0: f64) -> f64 {
    if q0 > 0.0 {
        0.5 * (3.0 + gamma0)
    } else {
        0.5 * (1.0 + gamma0)
    }
}

/// `f(x) / (f(x) + f(1 - x))` with `f = exp(-1/x)`: 0 for `x <= 0`, 1 for `x >= 1`.
pub fn smooth_step(x: f64) -> f64 {
    let f = |y: f64| if y > 0.0 { (-1.0 / y).exp() } else { 0.0 };
    if x <= 0.0 {
        0.0
    } else if x >= 1.0 {
        1.0
    } else {
        let a = f(x);
        a / (a + f(1.0 - x))
    }
}

pub fn make_data(
    family: &DataFamily,
    grid: &RadialGrid,
    inner_radius: f64,
    norm: Option<NormParams>,
) -> Result<DataPair> {
    match *family {
        DataFamily::AnnulusBump { amplitude, center, width } => {
            if !(width > 0.0) {
                return Err(Error::InvalidInput(format!("bump width must be positive, got {width}")));
            }
            let p = PulseProfile::bump(amplitude, center, width);
            let phi0 = grid.radii().map(|r| if r < inner_radius { 0.0 } else { p.value(r) }).collect();
            Ok(DataPair::new(phi0, vec![0.0; grid.n]))
        }
        DataFamily::PolyTail { amplitude, power } => {
            if let Some(np) = norm {
                let threshold = tail_power_threshold(np.gamma0, np.q0);
                if !(power > threshold) {
                    return Err(Error::InvalidInput(format!(
                        "tail power {power} gives an infinite weighted norm (need p > {threshold})"
                    )));
                }
            }
            let phi0 = grid
                .radii()
                .map(|r| amplitude * smooth_step(r - inner_radius) * (1.0 + r).powf(-power))
                .collect();
            Ok(DataPair {
                phi0,
                phi1: vec![0.0; grid.n],
                tail: Some(PolyTail { amplitude, power }),
            })
        }
        DataFamily::OutgoingPulse { profile } => {
            let (phi0, phi1) = grid
                .radii()
                .map(|r| {
                    let j = profile.jet(-r);
                    (j[0] / r, j[1] / r)
                })
                .unzip();
            Ok(DataPair::new(phi0, phi1))
        }
    }
}

/// Value of the weighted data norm, split into the grid quadrature and the analytic tail.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NormReport {
    pub value: f64,
    pub grid_part: f64,
    pub tail_part: f64,
    pub warning: Option<String>,
}

/// Weighted norm of the data on `{r >= R}`:
///
/// `int (1+r)^(g-2) phi0^2 + sum_{l<=k} int (1+r)^(g+2l) (|d^(l+1) phi0|^2 + |d^l phi1|^2 + q0 |d^l phi0|^2)`
///
/// with `dx = 4 pi r^2 dr` and radial derivatives only, taken with centred
/// five-point differences.
pub fn weighted_norm(
    data: &DataPair,
    k: usize,
    gamma0: f64,
    inner_radius: f64,
    q0: f64,
    grid: &RadialGrid,
) -> Result<NormReport> {
    if k > 3 {
        return Err(Error::InvalidInput(format!("norm order k must be <= 3, got {k}")));
    }
    if grid.n < 32 * k.max(1) {
        return Err(Error::InvalidInput(format!("grid with n = {} cannot resolve {k} derivatives", grid.n)));
    }
    if data.phi0.len() != grid.n || data.phi1.len() != grid.n {
        return Err(Error::InvalidInput("data length does not match the grid".into()));
    }
    if !(gamma0 > 1.0 && gamma0 < 2.0) {
        return Err(Error::InvalidInput(format!("gamma0 must lie in (1, 2), got {gamma0}")));
    }
    if !grid.contains(inner_radius) {
        return Err(Error::InvalidInput(format!("R = {inner_radius} outside the grid")));
    }
    let dr = grid.dr();

    // d^j phi0 for j = 0..=k+1 and d^j phi1 for j = 0..=k
    let mut d0 = vec![data.phi0.clone()];
    for _ in 0..=k {
        let next = derivative_4th(d0.last().unwrap(), dr);
        d0.push(next);
    }
    let mut d1 = vec![data.phi1.clone()];
    for _ in 0..k {
        let next = derivative_4th(d1.last().unwrap(), dr);
        d1.push(next);
    }

    let integrand: Vec<f64> = grid
        .radii()
        .enumerate()
        .map(|(i, r)| {
            let mut s = (1.0 + r).powf(gamma0 - 2.0) * d0[0][i].powi(2);
            for l in 0..=k {
                let w = (1.0 + r).powf(gamma0 + 2.0 * l as f64);
                s += w * (d0[l + 1][i].powi(2) + d1[l][i].powi(2) + q0 * d0[l][i].powi(2));
            }
            4.0 * PI * r * r * s
        })
        .collect();

    let grid_part = integrate_from(&integrand, grid, inner_radius);
    let tail_part = match data.tail {
        Some(t) => tail_estimate(t, k, gamma0, q0, grid.r_out),
        None => 0.0,
    };
    let warning = (tail_part > 0.01 * grid_part).then(|| {
        let msg = format!(
            "norm tail beyond r_out = {} is {tail_part:.3e}, more than 1% of the grid part {grid_part:.3e}",
            grid.r_out
        );
        log::warn!("{msg}");
        msg
    });
    Ok(NormReport {
        value: grid_part + tail_part,
        grid_part,
        tail_part,
        warning,
    })
}

/// Simpson integral of grid samples over `[from, r_out]`, with the partial
/// first cell handled by a three-point rule on interpolated values.
fn integrate_from(values: &[f64], grid: &RadialGrid, from: f64) -> f64 {
    let dr = grid.dr();
    let first = ((from - grid.r_in) / dr).ceil() as usize;
    if first >= grid.n {
        return 0.0;
    }
    let r_first = grid.r(first);
    let gap = r_first - from;
    let partial = if gap > 1e-12 * dr {
        let mid = 0.5 * (from + r_first);
        let a = cubic_interp(values, grid.r_in, dr, from);
        let m = cubic_interp(values, grid.r_in, dr, mid);
        gap / 6.0 * (a + 4.0 * m + values[first])
    } else {
        0.0
    };
    partial + simpson(&values[first..], dr)
}

/// Analytic norm contribution of `A r^-p` beyond `r_out`, approximating
/// `r^2 ~ (1+r)^2` and `d^j (1+r)^-p = (-1)^j (p)_j (1+r)^(-p-j)`.
fn tail_estimate(tail: PolyTail, k: usize, gamma0: f64, q0: f64, r_out: f64) -> f64 {
    let p = tail.power;
    let a2 = tail.amplitude * tail.amplitude;
    let rising = |j: usize| (0..j).fold(1.0, |acc, i| acc * (p + i as f64));
    let x = 1.0 + r_out;
    let power_tail = |e: f64| if e < -1.0 { x.powf(e + 1.0) / -(e + 1.0) } else { f64::INFINITY };
    let mut total = power_tail(gamma0 - 2.0 * p);
    for l in 0..=k {
        let lf = l as f64;
        total += rising(l + 1).powi(2) * power_tail(gamma0 + 2.0 * lf - 2.0 * p - 2.0 * lf - 2.0 + 2.0);
        if q0 > 0.0 {
            total += q0 * rising(l).powi(2) * power_tail(gamma0 + 2.0 * lf - 2.0 * p - 2.0 * lf + 2.0);
        }
    }
    4.0 * PI * a2 * total
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> RadialGrid {
        RadialGrid::new(1.0, 12.0, 1101).unwrap()
    }

    #[test]
    fn grid_basics() {
        let g = RadialGrid::new(1.0, 3.0, 21).unwrap();
        assert!((g.dr() - 0.1).abs() < 1e-15);
        assert_eq!(g.refined(2).n, 41);
        assert!(RadialGrid::new(0.5, 3.0, 21).is_err());
        assert!(RadialGrid::new(1.0, 3.0, 8).is_err());
    }

    #[test]
    fn smooth_step_limits() {
        assert_eq!(smooth_step(-0.1), 0.0);
        assert_eq!(smooth_step(1.2), 1.0);
        assert!((smooth_step(0.5) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn zero_amplitude_bump_is_zero() {
        let g = grid();
        let d = make_data(&DataFamily::AnnulusBump { amplitude: 0.0, center: 5.0, width: 1.0 }, &g, 3.0, None).unwrap();
        assert!(d.phi0.iter().chain(&d.phi1).all(|v| *v == 0.0));
        let n = weighted_norm(&d, 2, 1.5, 3.0, 0.5, &g).unwrap();
        assert_eq!(n.value, 0.0);
    }

    #[test]
    fn norm_is_quadratic_and_monotone() {
        let g = grid();
        let fam = DataFamily::AnnulusBump { amplitude: 1.0, center: 5.0, width: 1.0 };
        let d = make_data(&fam, &g, 3.0, None).unwrap();
        let base = weighted_norm(&d, 1, 1.5, 3.0, 0.0, &g).unwrap().value;
        let scaled = weighted_norm(&d.scaled(2.0), 1, 1.5, 3.0, 0.0, &g).unwrap().value;
        assert_eq!(scaled, 4.0 * base);
        let mut prev = 0.0;
        for k in 0..=3 {
            let v = weighted_norm(&d, k, 1.5, 3.0, 0.0, &g).unwrap().value;
            assert!(v >= prev);
            prev = v;
        }
        let with_mass = weighted_norm(&d, 1, 1.5, 3.0, 0.7, &g).unwrap().value;
        assert!(with_mass > base);
    }

    #[test]
    fn bump_norm_against_fine_quadrature() {
        // A = 1, c = R + 2, w = 1, k = 0, gamma0 = 1.5, q0 = 0
        let r0 = 3.0;
        let fam = DataFamily::AnnulusBump { amplitude: 1.0, center: r0 + 2.0, width: 1.0 };
        let g = RadialGrid::new(1.0, 12.0, 2201).unwrap();
        let d = make_data(&fam, &g, r0, None).unwrap();
        let v = weighted_norm(&d, 0, 1.5, r0, 0.0, &g).unwrap().value;

        // reference: exact derivatives, 10x finer Simpson
        let p = PulseProfile::bump(1.0, r0 + 2.0, 1.0);
        let f = |r: f64| {
            let j = p.jet(r);
            4.0 * PI * r * r * ((1.0 + r).powf(-0.5) * j[0] * j[0] + (1.0 + r).powf(1.5) * j[1] * j[1])
        };
        let reference = crate::numerics::simpson_fn(f, r0 + 1.0, r0 + 3.0, 40_000);
        assert!(((v - reference) / reference).abs() <= 1e-4, "{v} vs {reference}");
    }

    #[test]
    fn bump_norm_independent_of_r_out() {
        let fam = DataFamily::AnnulusBump { amplitude: 1.0, center: 5.0, width: 1.0 };
        let a = RadialGrid::with_spacing(1.0, 10.0, 0.01).unwrap();
        let b = RadialGrid::with_spacing(1.0, 20.0, 0.01).unwrap();
        let va = weighted_norm(&make_data(&fam, &a, 3.0, None).unwrap(), 1, 1.5, 3.0, 0.0, &a).unwrap().value;
        let vb = weighted_norm(&make_data(&fam, &b, 3.0, None).unwrap(), 1, 1.5, 3.0, 0.0, &b).unwrap().value;
        assert!(((va - vb) / va).abs() < 1e-6);
    }

    #[test]
    fn poly_tail_norm_and_threshold() {
        let g = RadialGrid::with_spacing(1.0, 200.0, 0.05).unwrap();
        let np = NormParams { gamma0: 1.5, q0: 0.0 };
        let fam = DataFamily::PolyTail { amplitude: 1.0, power: 3.0 };
        let d = make_data(&fam, &g, 2.0, Some(np)).unwrap();
        let n = weighted_norm(&d, 1, 1.5, 2.0, 0.0, &g).unwrap();
        assert!(n.value.is_finite() && n.warning.is_none());
        let n2 = weighted_norm(&d.scaled(2.0), 1, 1.5, 2.0, 0.0, &g).unwrap();
        assert_eq!(n2.value, 4.0 * n.value);
        assert!(make_data(&DataFamily::PolyTail { amplitude: 1.0, power: 1.2 }, &g, 2.0, Some(np)).is_err());
        let massive = NormParams { gamma0: 1.5, q0: 1.0 };
        assert!(make_data(&DataFamily::PolyTail { amplitude: 1.0, power: 2.0 }, &g, 2.0, Some(massive)).is_err());
    }

    #[test]
    fn outgoing_pulse_data() {
        let g = grid();
        let p = PulseProfile::gaussian(1.0, -6.0, 0.5);
        let d = make_data(&DataFamily::OutgoingPulse { profile: p }, &g, 3.0, None).unwrap();
        for (i, r) in g.radii().enumerate().step_by(50) {
            let v = crate::oracles::dalembert_exact(&p, 0.0, r).unwrap();
            assert_eq!(d.phi0[i], v.phi);
        }
    }
}
