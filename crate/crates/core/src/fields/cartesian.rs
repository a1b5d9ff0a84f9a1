//! Complex fields on the periodic cube `[-L/2, L/2)³` with `N` points per side.

use num_complex::Complex64;
use super::FunctionalReport;
use crate::error::{Error, Result};
use crate::fft3::{wavenumbers, Fft3};
use crate::numerics::pairwise_sum_by;

#[derive(Debug, Clone, PartialEq)]
pub struct ComplexField {
    length: f64,
    n: usize,
    values: Vec<Complex64>,
}

impl ComplexField {
    pub fn new(length: f64, n: usize, values: Vec<Complex64>) -> Result<Self> {
        if !(length > 0.0 && length.is_finite()) {
            return Err(Error::InvalidGrid(format!("box side must be positive, got {length}")));
        }
        if n < 2 || !n.is_power_of_two() {
            return Err(Error::InvalidGrid(format!("points per side must be a power of two, got {n}")));
        }
        if values.len() != n * n * n {
            return Err(Error::InvalidGrid(format!(
                "expected {} values, got {}",
                n * n * n,
                values.len()
            )));
        }
        if values.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(ComplexField { length, n, values })
    }

    pub fn zeros(length: f64, n: usize) -> Result<Self> {
        Self::new(length, n, vec![Complex64::new(0.0, 0.0); n * n * n])
    }

    /// Sample `f(x, y, z)` at the lattice points.
    pub fn from_fn<F: Fn(f64, f64, f64) -> Complex64>(length: f64, n: usize, f: F) -> Result<Self> {
        let h = length / n as f64;
        let coord = |i: usize| -0.5 * length + i as f64 * h;
        let mut values = Vec::with_capacity(n * n * n);
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    values.push(f(coord(i), coord(j), coord(k)));
                }
            }
        }
        Self::new(length, n, values)
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn spacing(&self) -> f64 {
        self.length / self.n as f64
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(3)
    }

    pub fn coordinate(&self, i: usize) -> f64 {
        -0.5 * self.length + i as f64 * self.spacing()
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Complex64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<Complex64> {
        self.values
    }

    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.n + j) * self.n + k
    }

    pub fn same_grid(&self, other: &ComplexField) -> bool {
        self.n == other.n && self.length == other.length
    }

    pub fn check_same_grid(&self, other: &ComplexField) -> Result<()> {
        if self.same_grid(other) {
            Ok(())
        } else {
            Err(Error::GridMismatch(format!(
                "(L = {}, N = {}) vs (L = {}, N = {})",
                self.length, self.n, other.length, other.n
            )))
        }
    }

    /// `x ↦ u(x - c)` for the lattice vector `c = h·(di, dj, dk)`.
    pub fn lattice_shift(&self, di: isize, dj: isize, dk: isize) -> ComplexField {
        let n = self.n as isize;
        let wrap = |a: isize| a.rem_euclid(n) as usize;
        let mut out = vec![Complex64::new(0.0, 0.0); self.values.len()];
        for i in 0..self.n {
            for j in 0..self.n {
                for k in 0..self.n {
                    let src = self.index(
                        wrap(i as isize - di),
                        wrap(j as isize - dj),
                        wrap(k as isize - dk),
                    );
                    out[self.index(i, j, k)] = self.values[src];
                }
            }
        }
        ComplexField { length: self.length, n: self.n, values: out }
    }

    pub fn phase_rotated(&self, theta: f64) -> ComplexField {
        let phase = Complex64::from_polar(1.0, theta);
        self.map(|v| v * phase)
    }

    pub fn conj(&self) -> ComplexField {
        self.map(|v| v.conj())
    }

    pub fn scaled(&self, factor: f64) -> ComplexField {
        self.map(|v| v * factor)
    }

    pub fn map(&self, f: impl Fn(Complex64) -> Complex64) -> ComplexField {
        ComplexField {
            length: self.length,
            n: self.n,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn sub(&self, other: &ComplexField) -> Result<ComplexField> {
        self.check_same_grid(other)?;
        Ok(ComplexField {
            length: self.length,
            n: self.n,
            values: self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect(),
        })
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.norm()))
    }

    /// `h³ Σ g(|u|²)` by pairwise summation.
    pub fn integrate_density(&self, g: impl Fn(f64) -> f64 + Copy) -> f64 {
        let vals = &self.values;
        self.cell_volume() * pairwise_sum_by(0, vals.len(), |i| g(vals[i].norm_sqr()))
    }

    pub fn spectrum(&self, fft: &mut Fft3) -> Vec<Complex64> {
        assert_eq!(fft.n(), self.n, "transform size does not match grid");
        let mut hat = self.values.clone();
        fft.forward(&mut hat);
        hat
    }

    /// `Σ_k w(|k|²) |û_k|²` scaled to `∫` over the box (Parseval).
    pub fn spectral_quadratic(hat: &[Complex64], n: usize, length: f64, w: impl Fn(f64) -> f64) -> f64 {
        let k = wavenumbers(n, length);
        let h3 = (length / n as f64).powi(3);
        let scale = h3 / (n * n * n) as f64;
        scale
            * pairwise_sum_by(0, hat.len(), |idx| {
                let (i, j, l) = (idx / (n * n), (idx / n) % n, idx % n);
                w(k[i] * k[i] + k[j] * k[j] + k[l] * k[l]) * hat[idx].norm_sqr()
            })
    }

    pub fn kinetic_with(&self, fft: &mut Fft3) -> f64 {
        let hat = self.spectrum(fft);
        Self::spectral_quadratic(&hat, self.n, self.length, |k2| k2)
    }

    pub fn functionals_with(&self, fft: &mut Fft3) -> FunctionalReport {
        let kinetic = self.kinetic_with(fft);
        self.functionals_given_kinetic(kinetic)
    }

    pub fn functionals_given_kinetic(&self, kinetic: f64) -> FunctionalReport {
        let mass = self.integrate_density(|p| p);
        let quartic = self.integrate_density(|p| p * p);
        let sextic = self.integrate_density(|p| p * p * p);
        FunctionalReport::from_integrals(mass, kinetic, quartic, sextic)
    }

    pub fn functionals(&self) -> FunctionalReport {
        self.functionals_with(&mut Fft3::new(self.n))
    }

    /// `⟨u, v⟩_{L²} + ⟨∇u, ∇v⟩_{L²}`, antilinear in `u`.
    pub fn h1_inner(&self, other: &ComplexField) -> Result<Complex64> {
        self.check_same_grid(other)?;
        let mut fft = Fft3::new(self.n);
        let a = self.spectrum(&mut fft);
        let b = other.spectrum(&mut fft);
        Ok(h1_inner_spectral(&a, &b, self.n, self.length))
    }

    pub fn h1_norm(&self) -> f64 {
        let r = self.functionals();
        (r.mass + r.kinetic).sqrt()
    }
}

/// H¹ pairing from precomputed spectra.
pub fn h1_inner_spectral(a: &[Complex64], b: &[Complex64], n: usize, length: f64) -> Complex64 {
    let k = wavenumbers(n, length);
    let scale = (length / n as f64).powi(3) / (n * n * n) as f64;
    let re = pairwise_sum_by(0, a.len(), |idx| {
        let (i, j, l) = (idx / (n * n), (idx / n) % n, idx % n);
        let w = 1.0 + k[i] * k[i] + k[j] * k[j] + k[l] * k[l];
        w * (a[idx].conj() * b[idx]).re
    });
    let im = pairwise_sum_by(0, a.len(), |idx| {
        let (i, j, l) = (idx / (n * n), (idx / n) % n, idx % n);
        let w = 1.0 + k[i] * k[i] + k[j] * k[j] + k[l] * k[l];
        w * (a[idx].conj() * b[idx]).im
    });
    Complex64::new(re, im) * scale
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn gaussian(length: f64, n: usize) -> ComplexField {
        ComplexField::from_fn(length, n, |x, y, z| {
            Complex64::new((-(x * x + y * y + z * z) / 2.0).exp(), 0.0)
        })
        .unwrap()
    }

    #[test]
    fn rejects_non_power_of_two() {
        assert!(matches!(ComplexField::zeros(1.0, 12), Err(Error::InvalidGrid(_))));
        assert!(matches!(
            ComplexField::new(1.0, 2, vec![Complex64::new(f64::INFINITY, 0.0); 8]),
            Err(Error::NonFinite)
        ));
    }

    #[test]
    fn gaussian_integrals_match_closed_form() {
        let r = gaussian(20.0, 64).functionals();
        let pi32 = PI.powf(1.5);
        assert!((r.mass - pi32).abs() < 1e-10);
        assert!((r.kinetic - 1.5 * pi32).abs() < 1e-8);
        assert!((r.quartic - (PI / 2.0).powf(1.5)).abs() < 1e-10);
        assert!((r.sextic - (PI / 3.0).powf(1.5)).abs() < 1e-10);
    }

    #[test]
    fn h1_inner_identities() {
        let u = gaussian(16.0, 16).lattice_shift(1, 0, -2);
        let r = u.functionals();
        let uu = u.h1_inner(&u).unwrap();
        assert!((uu.re - (r.mass + r.kinetic)).abs() < 1e-12 * uu.re);
        assert!(uu.im.abs() < 1e-12);

        let theta = 0.7;
        let rotated = u.phase_rotated(theta);
        let z = u.h1_inner(&rotated).unwrap();
        let expect = Complex64::from_polar(r.mass + r.kinetic, theta);
        assert!((z - expect).norm() < 1e-12 * expect.norm());

        let length = 2.0 * PI;
        let mode = |a: f64, b: f64, c: f64| {
            ComplexField::from_fn(length, 8, move |x, y, z| Complex64::from_polar(1.0, a * x + b * y + c * z))
                .unwrap()
        };
        let z = mode(1.0, 0.0, 2.0).h1_inner(&mode(1.0, -1.0, 2.0)).unwrap();
        assert!(z.norm() < 1e-12);

        let other = ComplexField::zeros(16.0, 8).unwrap();
        assert!(matches!(u.h1_inner(&other), Err(Error::GridMismatch(_))));
    }

    #[test]
    fn lattice_shift_moves_the_peak() {
        let u = gaussian(8.0, 16);
        let shifted = u.lattice_shift(2, -1, 3);
        let peak = shifted
            .values()
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.norm().total_cmp(&b.1.norm()))
            .unwrap()
            .0;
        assert_eq!(peak, u.index(8 + 2, 8 - 1, 8 + 3));
    }
}
