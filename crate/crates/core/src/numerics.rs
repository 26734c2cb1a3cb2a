//! Small numerical kernels shared by the data, solver and diagnostic layers.

/// Composite Simpson rule on uniformly spaced samples.
///
/// An even sample count is handled with Simpson's 3/8 rule on the last four
/// samples. Fewer than two samples integrate to zero.
pub fn simpson(values: &[f64], h: f64) -> f64 {
    let n = values.len();
    match n {
        0 | 1 => 0.0,
        2 => 0.5 * h * (values[0] + values[1]),
        3 => h / 3.0 * (values[0] + 4.0 * values[1] + values[2]),
        _ if n % 2 == 1 => simpson_odd(values, h),
        _ => {
            let head = &values[..n - 3];
            let tail = &values[n - 4..];
            let three_eighths = 3.0 * h / 8.0 * (tail[0] + 3.0 * tail[1] + 3.0 * tail[2] + tail[3]);
            simpson_odd(head, h) + three_eighths
        }
    }
}

fn simpson_odd(values: &[f64], h: f64) -> f64 {
    let n = values.len();
    if n < 3 {
        return if n == 2 { 0.5 * h * (values[0] + values[1]) } else { 0.0 };
    }
    let mut odd = 0.0;
    let mut even = 0.0;
    for (i, v) in values.iter().enumerate().take(n - 1).skip(1) {
        if i % 2 == 1 {
            odd += v;
        } else {
            even += v;
        }
    }
    h / 3.0 * (values[0] + values[n - 1] + 4.0 * odd + 2.0 * even)
}

/// Simpson integral of `f` on `[a, b]` with `intervals` (rounded up to even) panels.
pub fn simpson_fn(f: impl Fn(f64) -> f64, a: f64, b: f64, intervals: usize) -> f64 {
    let m = (intervals.max(2) + 1) & !1;
    let h = (b - a) / m as f64;
    let values: Vec<f64> = (0..=m).map(|i| f(a + h * i as f64)).collect();
    simpson(&values, h)
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "Gauss-Legendre needs at least one node");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let nf = n as f64;
        for i in 0..n.div_ceil(2) {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-15 {
                    break;
                }
            }
            let (_, d) = legendre(n, x);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        Self { nodes, weights }
    }

    /// Composite rule: `panels` equal sub-intervals of `[a, b]`.
    pub fn integrate(&self, f: impl Fn(f64) -> f64, a: f64, b: f64, panels: usize) -> f64 {
        let panels = panels.max(1);
        let h = (b - a) / panels as f64;
        let mut total = 0.0;
        for p in 0..panels {
            let lo = a + h * p as f64;
            let mid = lo + 0.5 * h;
            let mut s = 0.0;
            for (x, w) in self.nodes.iter().zip(&self.weights) {
                s += w * f(mid + 0.5 * h * x);
            }
            total += 0.5 * h * s;
        }
        total
    }

    /// Abscissae and weights of the composite rule on `[a, b]`.
    pub fn points(&self, a: f64, b: f64, panels: usize) -> Vec<(f64, f64)> {
        let panels = panels.max(1);
        let h = (b - a) / panels as f64;
        let mut out = Vec::with_capacity(panels * self.nodes.len());
        for p in 0..panels {
            let mid = a + h * (p as f64 + 0.5);
            for (x, w) in self.nodes.iter().zip(&self.weights) {
                out.push((mid + 0.5 * h * x, 0.5 * h * w));
            }
        }
        out
    }
}

fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let p = if n == 0 { 1.0 } else { p1 };
    let d = if n == 0 { 0.0 } else { n as f64 * (x * p1 - p0) / (x * x - 1.0) };
    (p, d)
}

/// Second-order first derivative on a uniform grid: centred inside,
/// one-sided three-point stencils at the two ends.
pub fn derivative_2nd(f: &[f64], dr: f64, out: &mut [f64]) {
    let n = f.len();
    debug_assert_eq!(out.len(), n);
    if n < 3 {
        out.iter_mut().for_each(|v| *v = 0.0);
        return;
    }
    let inv2 = 0.5 / dr;
    out[0] = (-3.0 * f[0] + 4.0 * f[1] - f[2]) * inv2;
    for i in 1..n - 1 {
        out[i] = (f[i + 1] - f[i - 1]) * inv2;
    }
    out[n - 1] = (3.0 * f[n - 1] - 4.0 * f[n - 2] + f[n - 3]) * inv2;
}

/// Allocating variant of [`derivative_2nd`].
pub fn derivative(f: &[f64], dr: f64) -> Vec<f64> {
    let mut out = vec![0.0; f.len()];
    derivative_2nd(f, dr, &mut out);
    out
}

/// First derivative with five-point centred stencils inside and the
/// second-order stencils of [`derivative_2nd`] on the two outermost points.
pub fn derivative_4th(f: &[f64], dr: f64) -> Vec<f64> {
    let n = f.len();
    let mut out = derivative(f, dr);
    if n >= 5 {
        for i in 2..n - 2 {
            out[i] = d1_4th(f, i, dr);
        }
    }
    out
}

/// Fourth-order centred first and second derivatives at interior index `i`
/// (requires `2 <= i < n - 2`).
pub fn d1_4th(f: &[f64], i: usize, dr: f64) -> f64 {
    (f[i - 2] - 8.0 * f[i - 1] + 8.0 * f[i + 1] - f[i + 2]) / (12.0 * dr)
}

pub fn d2_4th(f: &[f64], i: usize, dr: f64) -> f64 {
    (-f[i - 2] + 16.0 * f[i - 1] - 30.0 * f[i] + 16.0 * f[i + 1] - f[i + 2]) / (12.0 * dr * dr)
}

/// Four-point Lagrange interpolation weights for abscissae `x0 + k h`,
/// `k = 0..4`, evaluated at `x0 + s h`.
pub fn lagrange4_weights(s: f64) -> [f64; 4] {
    let (a, b, c, d) = (s, s - 1.0, s - 2.0, s - 3.0);
    [
        -b * c * d / 6.0,
        a * c * d / 2.0,
        -a * b * d / 2.0,
        a * b * c / 6.0,
    ]
}

/// Cubic interpolation of uniformly sampled data at `x` (clamped stencil).
pub fn cubic_interp(values: &[f64], x0: f64, h: f64, x: f64) -> f64 {
    let n = values.len();
    if n < 4 {
        let s = ((x - x0) / h).clamp(0.0, (n - 1) as f64);
        let i = (s.floor() as usize).min(n.saturating_sub(2));
        let frac = s - i as f64;
        return values[i] * (1.0 - frac) + values[(i + 1).min(n - 1)] * frac;
    }
    let s = (x - x0) / h;
    let base = (s.floor() as isize - 1).clamp(0, n as isize - 4) as usize;
    let w = lagrange4_weights(s - base as f64);
    w[0] * values[base] + w[1] * values[base + 1] + w[2] * values[base + 2] + w[3] * values[base + 3]
}

/// Cubic Hermite interpolation on `[t0, t1]` using values and slopes.
pub fn hermite(t0: f64, t1: f64, y0: f64, y1: f64, d0: f64, d1: f64, t: f64) -> f64 {
    let h = t1 - t0;
    let s = (t - t0) / h;
    let s2 = s * s;
    let s3 = s2 * s;
    let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
    let h10 = s3 - 2.0 * s2 + s;
    let h01 = -2.0 * s3 + 3.0 * s2;
    let h11 = s3 - s2;
    h00 * y0 + h10 * h * d0 + h01 * y1 + h11 * h * d1
}

/// Least-squares line `y = a + b x`; returns `(intercept, slope)`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (xi, yi) in x.iter().zip(y) {
        sxx += (xi - mx) * (xi - mx);
        sxy += (xi - mx) * (yi - my);
    }
    let slope = if sxx == 0.0 { 0.0 } else { sxy / sxx };
    (my - slope * mx, slope)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simpson_exact_on_cubics() {
        for n in [5usize, 6, 9, 12] {
            let h = 2.0 / (n - 1) as f64;
            let v: Vec<f64> = (0..n).map(|i| (i as f64 * h).powi(3)).collect();
            assert!((simpson(&v, h) - 4.0).abs() < 1e-12, "n = {n}");
        }
    }

    #[test]
    fn gauss_legendre_exactness() {
        let gl = GaussLegendre::new(6);
        let sum: f64 = gl.weights.iter().sum();
        assert!((sum - 2.0).abs() < 1e-14);
        // degree 11 integrates exactly
        let v = gl.integrate(|x| x.powi(10) + x.powi(11), -1.0, 1.0, 1);
        assert!((v - 2.0 / 11.0).abs() < 1e-14);
        let v = gl.integrate(|x| x.exp(), 0.0, 3.0, 4);
        assert!((v - (3.0f64.exp() - 1.0)).abs() < 1e-12);
    }

    #[test]
    fn cubic_interp_reproduces_cubics() {
        let h = 0.3;
        let v: Vec<f64> = (0..10).map(|i| {
            let x = 1.0 + h * i as f64;
            x * x * x - 2.0 * x
        }).collect();
        for x in [1.0, 1.17, 2.0, 3.33, 3.7] {
            let exact = x * x * x - 2.0 * x;
            assert!((cubic_interp(&v, 1.0, h, x) - exact).abs() < 1e-12, "x = {x}");
        }
    }

    #[test]
    fn line_fit_recovers_line() {
        let x = [0.0, 1.0, 2.0, 3.0];
        let y: Vec<f64> = x.iter().map(|v| 2.0 - 0.5 * v).collect();
        let (a, b) = linear_fit(&x, &y);
        assert!((a - 2.0).abs() < 1e-14 && (b + 0.5).abs() < 1e-14);
    }
}
