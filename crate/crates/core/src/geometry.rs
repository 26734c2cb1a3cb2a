//! Closed-form geometry of the Schwarzschild-cone foliation of Minkowski space.
//!
//! A cone of mass parameter `m` is described through the tortoise coordinate
//! `r*(m, r) = r - 2m ln((r + m) / (1 + m))`, normalised so that `r*(1) = 1`.
//! The optical functions are `u = t - r*` and `ubar = t + r*`; their level
//! sets are the outgoing cones `H_u` and the incoming cones `Hbar_ubar`.
//! With `m > 0` both families are slightly spacelike and the region
//! `{u <= u0}` outside the cone launched from `{t = 0, r = R}` lies strictly
//! inside the Minkowski domain of dependence of `{r >= R}`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Upper bound on `|m|` for which the chart is considered small-mass.
pub const MAX_ABS_MASS: f64 = 0.1;

const INVERT_MAX_ITERS: usize = 100;

/// Tortoise coordinate `r*(m, r)`.
pub fn r_star(mass_param: f64, r: f64) -> Result<f64> {
    if !(r >= 1.0) {
        return Err(Error::Domain(format!("r_star needs r >= 1, got {r}")));
    }
    if r + mass_param <= 0.0 || 1.0 + mass_param <= 0.0 {
        return Err(Error::Domain(format!(
            "r_star undefined for r + m <= 0 (r = {r}, m = {mass_param})"
        )));
    }
    Ok(r - 2.0 * mass_param * ((r + mass_param) / (1.0 + mass_param)).ln())
}

/// The cone chart `(m, R)` together with the derived boundary label `u0 = -r*(R)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FoliationChart {
    mass_param: f64,
    inner_radius: f64,
    u0: f64,
}

/// A spacetime point expressed in both `(t, r)` and optical coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConePoint {
    pub u: f64,
    pub ubar: f64,
    pub t: f64,
    pub r: f64,
}

/// Null-frame quantities at a given radius.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameWeights {
    /// `h = m / r`
    pub h: f64,
    /// lapse `b = (1 + h) / (1 - h)`
    pub lapse_b: f64,
    /// `L u = 2m / (r + m) = 1 - 1/b`
    pub lu: f64,
    /// `Lbar u = 1 + 1/b`
    pub lbar_u: f64,
    /// Coefficients `(a, c)` with `N = a L + c Lbar`, i.e. `(1+h)^-1 (1, h)`.
    pub normal_coeffs: (f64, f64),
}

impl FoliationChart {
    pub fn new(mass_param: f64, inner_radius: f64) -> Result<Self> {
        if !(mass_param.abs() < MAX_ABS_MASS) {
            return Err(Error::InvalidInput(format!(
                "|mass_param| must be < {MAX_ABS_MASS}, got {mass_param}"
            )));
        }
        if !(inner_radius >= 2.0) || !inner_radius.is_finite() {
            return Err(Error::InvalidInput(format!(
                "inner radius R must be >= 2, got {inner_radius}"
            )));
        }
        let u0 = -r_star(mass_param, inner_radius)?;
        Ok(Self {
            mass_param,
            inner_radius,
            u0,
        })
    }

    pub fn mass_param(&self) -> f64 {
        self.mass_param
    }

    pub fn inner_radius(&self) -> f64 {
        self.inner_radius
    }

    /// `u0 = -r*(m, R)`, the label of the boundary cone.
    pub fn u0(&self) -> f64 {
        self.u0
    }

    pub fn r_star(&self, r: f64) -> Result<f64> {
        r_star(self.mass_param, r)
    }

    /// `dr*/dr = 1/b = (r - m) / (r + m)`.
    pub fn r_star_derivative(&self, r: f64) -> f64 {
        (r - self.mass_param) / (r + self.mass_param)
    }

    /// Inverts the tortoise coordinate: returns `r >= 1` with `r*(r) = target`.
    ///
    /// Newton iteration from `r = target`, falling back to bisection on
    /// `[1, 2 target + 10]` whenever a Newton iterate leaves the bracket.
    pub fn invert_r_star(&self, target: f64) -> Result<f64> {
        let floor = self.r_star(1.0)?;
        if !(target >= floor) {
            return Err(Error::Domain(format!(
                "invert_r_star target {target} below r*(1) = {floor}"
            )));
        }
        // a few ulps of the target; Newton is quadratic, so this costs one extra step
        let tol = 4.0 * f64::EPSILON * target.abs().max(1.0);
        let mut lo: f64 = 1.0;
        let mut hi = 2.0 * target + 10.0;
        let mut r = target.max(1.0);
        for _ in 0..INVERT_MAX_ITERS {
            let f = self.r_star(r)? - target;
            let step = f / self.r_star_derivative(r);
            if f.abs() <= tol || step.abs() <= 2.0 * f64::EPSILON * r {
                return Ok(r);
            }
            if f > 0.0 {
                hi = hi.min(r);
            } else {
                lo = lo.max(r);
            }
            let newton = r - step;
            r = if newton > lo && newton < hi {
                newton
            } else {
                0.5 * (lo + hi)
            };
        }
        Err(Error::Convergence {
            iterations: INVERT_MAX_ITERS,
            target,
        })
    }

    pub fn coords(&self, t: f64, r: f64) -> Result<ConePoint> {
        let rs = self.r_star(r)?;
        Ok(ConePoint {
            u: t - rs,
            ubar: t + rs,
            t,
            r,
        })
    }

    /// Point on the sphere `S_{u, ubar}`; requires `ubar - u >= 2 r*(1)`.
    pub fn point_at(&self, u: f64, ubar: f64) -> Result<ConePoint> {
        let r = self.invert_r_star(0.5 * (ubar - u))?;
        Ok(ConePoint {
            u,
            ubar,
            t: 0.5 * (ubar + u),
            r,
        })
    }

    pub fn frame_weights(&self, r: f64) -> Result<FrameWeights> {
        if !(r >= 1.0) {
            return Err(Error::Domain(format!("frame weights need r >= 1, got {r}")));
        }
        let h = self.mass_param / r;
        if h.abs() >= 1.0 {
            return Err(Error::Domain(format!("|m/r| >= 1 at r = {r}")));
        }
        let lapse_b = (1.0 + h) / (1.0 - h);
        let inv_b = 1.0 / lapse_b;
        Ok(FrameWeights {
            h,
            lapse_b,
            lu: 2.0 * self.mass_param / (r + self.mass_param),
            lbar_u: 1.0 + inv_b,
            normal_coeffs: (1.0 / (1.0 + h), h / (1.0 + h)),
        })
    }

    /// Lapse `b(r)`; panics only on radii below 1, which callers never pass.
    pub fn lapse(&self, r: f64) -> f64 {
        let h = self.mass_param / r;
        (1.0 + h) / (1.0 - h)
    }

    /// True iff `u(t, r) <= u0 - margin`.
    pub fn in_trust_region(&self, t: f64, r: f64, margin: f64) -> bool {
        match self.r_star(r) {
            Ok(rs) => t - rs <= self.u0 - margin,
            Err(_) => false,
        }
    }
}

/// Runtime causal buffer: two cells times the fastest characteristic speed.
pub fn default_margin(dr: f64, max_speed: f64) -> f64 {
    2.0 * dr * max_speed
}
