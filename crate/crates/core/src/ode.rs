//! Adaptive Dormand–Prince 5(4) integration for small autonomous-in-state
//! systems `y' = f(t, y)` with `y ∈ ℝᴰ`.

use std::ops::ControlFlow;

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;

const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;

// fifth minus embedded fourth order weights
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerance {
    pub rtol: f64,
    pub atol: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepError {
    /// Step size underflowed before the error test could be met.
    StepSizeUnderflow,
    NonFinite,
}

/// Integrator state carried between calls so consecutive segments reuse the
/// last accepted step size.
#[derive(Debug, Clone)]
pub struct DormandPrince<const D: usize> {
    pub t: f64,
    pub y: [f64; D],
    pub h: f64,
    pub tol: Tolerance,
    pub h_max: f64,
    pub steps: usize,
    k1: Option<[f64; D]>,
}

fn axpy<const D: usize>(y: &[f64; D], terms: &[(f64, &[f64; D])], h: f64) -> [f64; D] {
    let mut out = *y;
    for (c, k) in terms {
        for i in 0..D {
            out[i] += h * c * k[i];
        }
    }
    out
}

impl<const D: usize> DormandPrince<D> {
    pub fn new(t: f64, y: [f64; D], h: f64, tol: Tolerance) -> Self {
        DormandPrince { t, y, h, tol, h_max: f64::INFINITY, steps: 0, k1: None }
    }

    /// Advance to `t_end` (which must not precede `t`). `on_step` sees every
    /// accepted step and may stop the integration early.
    pub fn advance<F, G>(&mut self, f: &F, t_end: f64, mut on_step: G) -> Result<ControlFlow<()>, StepError>
    where
        F: Fn(f64, &[f64; D]) -> [f64; D],
        G: FnMut(f64, &[f64; D]) -> ControlFlow<()>,
    {
        while self.t < t_end {
            let remaining = t_end - self.t;
            let mut h = self.h.min(self.h_max);
            let last = h >= remaining;
            if last {
                h = remaining;
            }
            let k1 = self.k1.unwrap_or_else(|| f(self.t, &self.y));
            let y = &self.y;
            let t = self.t;
            let k2 = f(t + C2 * h, &axpy(y, &[(A21, &k1)], h));
            let k3 = f(t + C3 * h, &axpy(y, &[(A31, &k1), (A32, &k2)], h));
            let k4 = f(t + C4 * h, &axpy(y, &[(A41, &k1), (A42, &k2), (A43, &k3)], h));
            let k5 = f(t + C5 * h, &axpy(y, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)], h));
            let k6 = f(t + h, &axpy(y, &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)], h));
            let y_new = axpy(y, &[(B1, &k1), (B3, &k3), (B4, &k4), (B5, &k5), (B6, &k6)], h);
            let k7 = f(t + h, &y_new);

            let mut err2 = 0.0;
            for i in 0..D {
                let e = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
                let sc = self.tol.atol + self.tol.rtol * y[i].abs().max(y_new[i].abs());
                err2 += (e / sc).powi(2);
            }
            let err = (err2 / D as f64).sqrt();
            if !err.is_finite() || y_new.iter().any(|v| !v.is_finite()) {
                if h < 1e-14 * t.abs().max(1.0) {
                    return Err(StepError::NonFinite);
                }
                self.h = 0.25 * h;
                self.k1 = Some(k1);
                continue;
            }
            let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
            if err <= 1.0 {
                self.t = if last { t_end } else { t + h };
                self.y = y_new;
                self.k1 = Some(k7);
                self.steps += 1;
                if !last || factor < 1.0 {
                    self.h = h * factor;
                }
                if on_step(self.t, &self.y).is_break() {
                    return Ok(ControlFlow::Break(()));
                }
            } else {
                if h < 1e-14 * t.abs().max(1.0) {
                    return Err(StepError::StepSizeUnderflow);
                }
                self.h = h * factor.min(1.0);
                self.k1 = Some(k1);
            }
        }
        Ok(ControlFlow::Continue(()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn harmonic_oscillator_is_accurate() {
        let f = |_t: f64, y: &[f64; 2]| [y[1], -y[0]];
        let tol = Tolerance { rtol: 1e-12, atol: 1e-14 };
        let mut dp = DormandPrince::new(0.0, [1.0, 0.0], 1e-3, tol);
        let _ = dp.advance(&f, 10.0, |_, _| ControlFlow::Continue(())).unwrap();
        assert_eq!(dp.t, 10.0);
        assert!((dp.y[0] - 10f64.cos()).abs() < 1e-10);
        assert!((dp.y[1] + 10f64.sin()).abs() < 1e-10);
    }

    #[test]
    fn fifth_order_convergence_with_fixed_steps() {
        let f = |t: f64, y: &[f64; 1]| [y[0] * t.cos()];
        let exact = 2f64.sin().exp();
        let run = |h: f64| {
            let tol = Tolerance { rtol: 1e30, atol: 1e30 };
            let mut dp = DormandPrince::new(0.0, [1.0], h, tol);
            dp.h_max = h;
            let _ = dp.advance(&f, 2.0, |_, _| ControlFlow::Continue(())).unwrap();
            (dp.y[0] - exact).abs()
        };
        let ratio = run(0.1) / run(0.05);
        assert!(ratio > 25.0 && ratio < 45.0, "ratio {ratio}");
    }

    #[test]
    fn stops_on_request() {
        let f = |_t: f64, _y: &[f64; 1]| [1.0];
        let tol = Tolerance { rtol: 1e-10, atol: 1e-12 };
        let mut dp = DormandPrince::new(0.0, [0.0], 0.1, tol);
        dp.h_max = 0.1;
        let flow = dp
            .advance(&f, 10.0, |_, y| if y[0] > 1.0 { ControlFlow::Break(()) } else { ControlFlow::Continue(()) })
            .unwrap();
        assert!(flow.is_break());
        assert!(dp.t > 1.0 && dp.t < 1.2 + 1e-12);
    }
}
