//! Cubic 3D complex FFT built from batched 1D `rustfft` passes.
//!
//! Layout is row-major `(i, j, k)` with `k` fastest. The forward transform is
//! unnormalized; the inverse divides by `N³` so that `inverse(forward(u)) = u`.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

pub struct Fft3 {
    n: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    scratch: Vec<Complex64>,
    lines: Vec<Complex64>,
}

impl std::fmt::Debug for Fft3 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Fft3").field("n", &self.n).finish()
    }
}

impl Fft3 {
    pub fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(n);
        let inverse = planner.plan_fft_inverse(n);
        let scratch_len = forward
            .get_inplace_scratch_len()
            .max(inverse.get_inplace_scratch_len());
        Fft3 {
            n,
            forward,
            inverse,
            scratch: vec![Complex64::new(0.0, 0.0); scratch_len],
            lines: vec![Complex64::new(0.0, 0.0); n * n],
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn forward(&mut self, data: &mut [Complex64]) {
        let plan = Arc::clone(&self.forward);
        self.transform(data, plan.as_ref());
    }

    pub fn inverse(&mut self, data: &mut [Complex64]) {
        let plan = Arc::clone(&self.inverse);
        self.transform(data, plan.as_ref());
        let scale = 1.0 / (self.n * self.n * self.n) as f64;
        for v in data.iter_mut() {
            *v *= scale;
        }
    }

    fn transform(&mut self, data: &mut [Complex64], plan: &dyn Fft<f64>) {
        let n = self.n;
        assert_eq!(data.len(), n * n * n, "buffer does not match grid");

        // k axis: contiguous lines
        plan.process_with_scratch(data, &mut self.scratch);

        // j axis: transpose each i-plane, transform rows, transpose back
        for plane in data.chunks_exact_mut(n * n) {
            for j in 0..n {
                for k in 0..n {
                    self.lines[k * n + j] = plane[j * n + k];
                }
            }
            plan.process_with_scratch(&mut self.lines, &mut self.scratch);
            for k in 0..n {
                for j in 0..n {
                    plane[j * n + k] = self.lines[k * n + j];
                }
            }
        }

        // i axis: for each j, gather the (i, k) slab as k-major lines
        for j in 0..n {
            for i in 0..n {
                let row = &data[(i * n + j) * n..(i * n + j + 1) * n];
                for (k, v) in row.iter().enumerate() {
                    self.lines[k * n + i] = *v;
                }
            }
            plan.process_with_scratch(&mut self.lines, &mut self.scratch);
            for i in 0..n {
                let row = &mut data[(i * n + j) * n..(i * n + j + 1) * n];
                for (k, v) in row.iter_mut().enumerate() {
                    *v = self.lines[k * n + i];
                }
            }
        }
    }
}

/// Angular wavenumbers for an `n`-point periodic grid of side `length`, in FFT
/// order. The Nyquist entry carries `-n/2`.
pub fn wavenumbers(n: usize, length: f64) -> Vec<f64> {
    let dk = 2.0 * std::f64::consts::PI / length;
    (0..n)
        .map(|j| {
            let m = if j < n / 2 { j as f64 } else { j as f64 - n as f64 };
            m * dk
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive_dft3(data: &[Complex64], n: usize) -> Vec<Complex64> {
        let mut out = vec![Complex64::new(0.0, 0.0); n * n * n];
        let tau = 2.0 * std::f64::consts::PI / n as f64;
        for a in 0..n {
            for b in 0..n {
                for c in 0..n {
                    let mut acc = Complex64::new(0.0, 0.0);
                    for i in 0..n {
                        for j in 0..n {
                            for k in 0..n {
                                let phase = -tau * ((a * i + b * j + c * k) % n) as f64;
                                acc += data[(i * n + j) * n + k] * Complex64::from_polar(1.0, phase);
                            }
                        }
                    }
                    out[(a * n + b) * n + c] = acc;
                }
            }
        }
        out
    }

    #[test]
    fn matches_naive_dft() {
        let n = 4;
        let data: Vec<Complex64> = (0..n * n * n)
            .map(|i| Complex64::new((i as f64 * 0.37).sin(), (i as f64 * 1.3).cos()))
            .collect();
        let expect = naive_dft3(&data, n);
        let mut got = data.clone();
        let mut fft = Fft3::new(n);
        fft.forward(&mut got);
        for (g, e) in got.iter().zip(&expect) {
            assert!((g - e).norm() < 1e-12);
        }
        fft.inverse(&mut got);
        for (g, d) in got.iter().zip(&data) {
            assert!((g - d).norm() < 1e-14);
        }
    }

    #[test]
    fn wavenumber_ordering() {
        let k = wavenumbers(8, 2.0 * std::f64::consts::PI);
        assert_eq!(k, vec![0.0, 1.0, 2.0, 3.0, -4.0, -3.0, -2.0, -1.0]);
    }
}
