//! Radially symmetric real profiles on a uniform grid `r_i = i h`, `i = 0..n`.
//!
//! Integrals use composite Simpson with weight `4πr²`; derivatives use
//! fourth-order centered differences, even reflection through the origin and
//! one-sided closures at `r_max`.

use serde::{Deserialize, Serialize};

use super::FunctionalReport;
use crate::error::{Error, Result};
use crate::numerics::pairwise_sum_by;

/// Minimum number of radial nodes.
pub const MIN_NODES: usize = 16;

/// A profile counts as decayed when `|u(r_max)| <= DECAY_THRESHOLD * max|u|`.
pub const DECAY_THRESHOLD: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeSpacing {
    Uniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadialProfile {
    r_max: f64,
    spacing: NodeSpacing,
    values: Vec<f64>,
}

impl RadialProfile {
    pub fn new(r_max: f64, values: Vec<f64>) -> Result<Self> {
        if !(r_max > 0.0 && r_max.is_finite()) {
            return Err(Error::InvalidGrid(format!("r_max must be positive, got {r_max}")));
        }
        if values.len() < MIN_NODES {
            return Err(Error::InvalidGrid(format!(
                "need at least {MIN_NODES} nodes, got {}",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(RadialProfile { r_max, spacing: NodeSpacing::Uniform, values })
    }

    /// Sample `f` at the `n` uniform nodes of `[0, r_max]`.
    pub fn from_fn<F: Fn(f64) -> f64>(r_max: f64, n: usize, f: F) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidGrid(format!("need at least {MIN_NODES} nodes, got {n}")));
        }
        let h = r_max / (n - 1) as f64;
        Self::new(r_max, (0..n).map(|i| f(i as f64 * h)).collect())
    }

    pub fn zeros(r_max: f64, n: usize) -> Result<Self> {
        Self::new(r_max, vec![0.0; n])
    }

    pub fn r_max(&self) -> f64 {
        self.r_max
    }

    pub fn spacing(&self) -> NodeSpacing {
        self.spacing
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn step(&self) -> f64 {
        self.r_max / (self.values.len() - 1) as f64
    }

    pub fn radius(&self, i: usize) -> f64 {
        i as f64 * self.step()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn is_decayed(&self, threshold: f64) -> bool {
        let tail = self.values.last().map_or(0.0, |v| v.abs());
        tail <= threshold * self.max_abs()
    }

    /// True when the values are positive and strictly decreasing in `r`.
    pub fn is_positive_decreasing(&self) -> bool {
        self.values.iter().all(|&v| v > 0.0) && self.values.windows(2).all(|w| w[1] < w[0])
    }

    /// Smallest node radius beyond which `|u| <= threshold * max|u|` holds
    /// for every remaining node.
    pub fn decay_radius(&self, threshold: f64) -> f64 {
        let cut = threshold * self.max_abs();
        let last_above = self.values.iter().rposition(|v| v.abs() > cut);
        match last_above {
            None => 0.0,
            Some(i) if i + 1 >= self.values.len() => self.r_max,
            Some(i) => self.radius(i + 1),
        }
    }

    /// `x ↦ a·u(λx)`: the same number of nodes on `[0, r_max/λ]`, so no
    /// interpolation is involved.
    pub fn rescale(&self, amplitude: f64, dilation: f64) -> Result<Self> {
        if !(amplitude > 0.0 && amplitude.is_finite()) {
            return Err(Error::InvalidArgument(format!("amplitude must be positive, got {amplitude}")));
        }
        if !(dilation > 0.0 && dilation.is_finite()) {
            return Err(Error::InvalidArgument(format!("dilation must be positive, got {dilation}")));
        }
        Self::new(
            self.r_max / dilation,
            self.values.iter().map(|v| amplitude * v).collect(),
        )
    }

    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(self.r_max, self.values.iter().map(|v| factor * v).collect())
    }

    pub fn derivative(&self) -> Vec<f64> {
        first_derivative(&self.values, self.step())
    }

    pub fn laplacian(&self) -> Vec<f64> {
        radial_laplacian(&self.values, self.step())
    }

    /// `∫ f(u, u') dx` over ℝ³ with the Simpson `4πr²` weights.
    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        let w = simpson_weights(self.values.len(), self.step());
        pairwise_sum_by(0, self.values.len(), |i| w[i] * f(self.values[i]))
    }

    pub fn functionals(&self) -> FunctionalReport {
        let n = self.values.len();
        let w = simpson_weights(n, self.step());
        let du = self.derivative();
        let u = &self.values;
        let mass = pairwise_sum_by(0, n, |i| w[i] * u[i] * u[i]);
        let kinetic = pairwise_sum_by(0, n, |i| w[i] * du[i] * du[i]);
        let quartic = pairwise_sum_by(0, n, |i| w[i] * u[i].powi(4));
        let sextic = pairwise_sum_by(0, n, |i| w[i] * u[i].powi(6));
        let mut report = FunctionalReport::from_integrals(mass, kinetic, quartic, sextic);
        report.truncated = !self.is_decayed(DECAY_THRESHOLD);
        report
    }

    /// Piecewise cubic Hermite interpolant with fourth-order slopes limited to
    /// preserve monotonicity between nodes.
    pub fn interpolant(&self) -> MonotoneCubic<'_> {
        MonotoneCubic::new(&self.values, self.step())
    }
}

/// Composite Simpson weights for `∫ g(|x|) dx = 4π ∫ r² g(r) dr` on `n` nodes
/// with spacing `h`. An odd interval count closes with the 3/8 rule.
pub fn simpson_weights(n: usize, h: f64) -> Vec<f64> {
    let mut w = vec![0.0; n];
    let intervals = n - 1;
    let simpson_end = if intervals % 2 == 0 { intervals } else { intervals - 3 };
    for i in (0..simpson_end).step_by(2) {
        w[i] += h / 3.0;
        w[i + 1] += 4.0 * h / 3.0;
        w[i + 2] += h / 3.0;
    }
    if simpson_end < intervals {
        let i = simpson_end;
        w[i] += 3.0 * h / 8.0;
        w[i + 1] += 9.0 * h / 8.0;
        w[i + 2] += 9.0 * h / 8.0;
        w[i + 3] += 3.0 * h / 8.0;
    }
    let four_pi = 4.0 * std::f64::consts::PI;
    for (i, wi) in w.iter_mut().enumerate() {
        let r = i as f64 * h;
        *wi *= four_pi * r * r;
    }
    w
}

/// Five-point stencil row: `(column, coefficient)` pairs, ghost columns folded
/// back through the origin by even symmetry.
pub type StencilRow = [(usize, f64); 6];

/// Rows of the fourth-order first-derivative operator on `n` nodes.
pub fn first_derivative_stencil(n: usize, h: f64) -> Vec<StencilRow> {
    assert!(n >= 5, "derivative stencil needs at least five nodes");
    let c = 1.0 / (12.0 * h);
    let fold = |j: isize| j.unsigned_abs();
    (0..n)
        .map(|i| {
            let ii = i as isize;
            if i + 2 < n {
                [
                    (fold(ii - 2), c),
                    (fold(ii - 1), -8.0 * c),
                    (i + 1, 8.0 * c),
                    (i + 2, -c),
                    (i, 0.0),
                    (i, 0.0),
                ]
            } else if i + 2 == n {
                [
                    (i + 1, 3.0 * c),
                    (i, 10.0 * c),
                    (i - 1, -18.0 * c),
                    (i - 2, 6.0 * c),
                    (i - 3, -c),
                    (i, 0.0),
                ]
            } else {
                [
                    (i, 25.0 * c),
                    (i - 1, -48.0 * c),
                    (i - 2, 36.0 * c),
                    (i - 3, -16.0 * c),
                    (i - 4, 3.0 * c),
                    (i, 0.0),
                ]
            }
        })
        .collect()
}

pub fn apply_stencil(rows: &[StencilRow], u: &[f64]) -> Vec<f64> {
    rows.iter()
        .map(|row| row.iter().map(|&(j, c)| c * u[j]).sum())
        .collect()
}

/// `Dᵀ v` for a stencil operator `D`.
pub fn apply_stencil_transpose(rows: &[StencilRow], v: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; v.len()];
    for (row, &vi) in rows.iter().zip(v) {
        for &(j, c) in row {
            out[j] += c * vi;
        }
    }
    out
}

pub fn first_derivative(u: &[f64], h: f64) -> Vec<f64> {
    apply_stencil(&first_derivative_stencil(u.len(), h), u)
}

/// Fourth-order second derivative with even reflection at the origin.
pub fn second_derivative(u: &[f64], h: f64) -> Vec<f64> {
    let n = u.len();
    assert!(n >= 6, "second derivative needs at least six nodes");
    let c = 1.0 / (12.0 * h * h);
    let at = |j: isize| u[j.unsigned_abs()];
    (0..n)
        .map(|i| {
            let ii = i as isize;
            if i + 2 < n {
                c * (-at(ii - 2) + 16.0 * at(ii - 1) - 30.0 * u[i] + 16.0 * u[i + 1] - u[i + 2])
            } else if i + 2 == n {
                c * (10.0 * u[i + 1] - 15.0 * u[i] - 4.0 * u[i - 1] + 14.0 * u[i - 2]
                    - 6.0 * u[i - 3]
                    + u[i - 4])
            } else {
                c * (45.0 * u[i] - 154.0 * u[i - 1] + 214.0 * u[i - 2] - 156.0 * u[i - 3]
                    + 61.0 * u[i - 4]
                    - 10.0 * u[i - 5])
            }
        })
        .collect()
}

/// `Δu = u'' + (2/r)u'`, with `Δu(0) = 3u''(0)`.
pub fn radial_laplacian(u: &[f64], h: f64) -> Vec<f64> {
    let d1 = first_derivative(u, h);
    let d2 = second_derivative(u, h);
    d1.iter()
        .zip(&d2)
        .enumerate()
        .map(|(i, (&p, &pp))| {
            if i == 0 {
                3.0 * pp
            } else {
                pp + 2.0 * p / (i as f64 * h)
            }
        })
        .collect()
}

/// Cubic Hermite interpolation on a uniform radial grid. Slopes come from the
/// fourth-order stencil and are limited (Fritsch–Carlson) so that monotone
/// data stays monotone. Evaluations beyond `r_max` return zero.
#[derive(Debug, Clone)]
pub struct MonotoneCubic<'a> {
    values: &'a [f64],
    slopes: Vec<f64>,
    h: f64,
}

impl<'a> MonotoneCubic<'a> {
    pub fn new(values: &'a [f64], h: f64) -> Self {
        let n = values.len();
        let mut slopes = first_derivative(values, h);
        slopes[0] = 0.0;
        for i in 0..n - 1 {
            let secant = (values[i + 1] - values[i]) / h;
            if secant == 0.0 {
                slopes[i] = 0.0;
                slopes[i + 1] = 0.0;
                continue;
            }
            for s in [i, i + 1] {
                if slopes[s] * secant < 0.0 {
                    slopes[s] = 0.0;
                }
            }
            let alpha = slopes[i] / secant;
            let beta = slopes[i + 1] / secant;
            let norm2 = alpha * alpha + beta * beta;
            if norm2 > 9.0 {
                let tau = 3.0 / norm2.sqrt();
                slopes[i] = tau * alpha * secant;
                slopes[i + 1] = tau * beta * secant;
            }
        }
        MonotoneCubic { values, slopes, h }
    }

    pub fn eval(&self, r: f64) -> f64 {
        let r = r.abs();
        let n = self.values.len();
        let r_max = (n - 1) as f64 * self.h;
        if r > r_max {
            return 0.0;
        }
        let s = r / self.h;
        let i = (s.floor() as usize).min(n - 2);
        let t = s - i as f64;
        let (y0, y1) = (self.values[i], self.values[i + 1]);
        let (m0, m1) = (self.slopes[i] * self.h, self.slopes[i + 1] * self.h);
        let t2 = t * t;
        let t3 = t2 * t;
        (2.0 * t3 - 3.0 * t2 + 1.0) * y0
            + (t3 - 2.0 * t2 + t) * m0
            + (-2.0 * t3 + 3.0 * t2) * y1
            + (t3 - t2) * m1
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gaussian(n: usize) -> RadialProfile {
        RadialProfile::from_fn(12.0, n, |r| (-r * r / 2.0).exp()).unwrap()
    }

    #[test]
    fn simpson_integrates_r2_polynomial_weights_exactly() {
        // ∫_0^1 4π r² dr = 4π/3 for both parities of the interval count
        for n in [17usize, 18] {
            let w = simpson_weights(n, 1.0 / (n - 1) as f64);
            let total: f64 = w.iter().sum();
            assert!((total - 4.0 * std::f64::consts::PI / 3.0).abs() < 1e-13, "n = {n}");
        }
    }

    #[test]
    fn derivatives_are_fourth_order() {
        let err = |n: usize| {
            let p = RadialProfile::from_fn(6.0, n, |r| (-r * r).exp()).unwrap();
            let d = p.derivative();
            let lap = p.laplacian();
            let mut e1 = 0.0f64;
            let mut e2 = 0.0f64;
            for i in 0..n {
                let r = p.radius(i);
                e1 = e1.max((d[i] + 2.0 * r * (-r * r).exp()).abs());
                e2 = e2.max((lap[i] - (4.0 * r * r - 6.0) * (-r * r).exp()).abs());
            }
            (e1, e2)
        };
        let (a1, a2) = err(201);
        let (b1, b2) = err(401);
        assert!(a1 / b1 > 12.0, "first derivative ratio {}", a1 / b1);
        assert!(a2 / b2 > 12.0, "laplacian ratio {}", a2 / b2);
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(matches!(RadialProfile::new(1.0, vec![0.0; 8]), Err(Error::InvalidGrid(_))));
        assert!(matches!(RadialProfile::new(0.0, vec![0.0; 32]), Err(Error::InvalidGrid(_))));
        let mut v = vec![0.0; 32];
        v[3] = f64::NAN;
        assert!(matches!(RadialProfile::new(1.0, v), Err(Error::NonFinite)));
    }

    #[test]
    fn decay_flags() {
        let g = gaussian(1201);
        assert!(g.is_decayed(DECAY_THRESHOLD));
        assert!(!g.functionals().truncated);
        let short = RadialProfile::from_fn(3.0, 301, |r| (-r * r / 2.0).exp()).unwrap();
        assert!(short.functionals().truncated);
        let r = g.decay_radius(1e-6);
        assert!((r - (2.0 * 1e6f64.ln()).sqrt()).abs() < 0.02, "decay radius {r}");
    }

    #[test]
    fn interpolant_reproduces_nodes_and_is_accurate() {
        let g = gaussian(1201);
        let it = g.interpolant();
        for i in [0usize, 7, 300, 1200] {
            assert_eq!(it.eval(g.radius(i)), g.values()[i]);
        }
        let mut worst = 0.0f64;
        for j in 0..997 {
            let r = 0.0123 * j as f64;
            worst = worst.max((it.eval(r) - (-r * r / 2.0).exp()).abs());
        }
        assert!(worst < 1e-8, "interpolation error {worst}");
        assert_eq!(it.eval(20.0), 0.0);
    }

    #[test]
    fn stencil_transpose_is_adjoint() {
        let n = 40;
        let rows = first_derivative_stencil(n, 0.1);
        let u: Vec<f64> = (0..n).map(|i| (i as f64 * 0.3).sin()).collect();
        let v: Vec<f64> = (0..n).map(|i| (i as f64 * 0.7).cos()).collect();
        let du = apply_stencil(&rows, &u);
        let dtv = apply_stencil_transpose(&rows, &v);
        let lhs: f64 = du.iter().zip(&v).map(|(a, b)| a * b).sum();
        let rhs: f64 = u.iter().zip(&dtv).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }
}
