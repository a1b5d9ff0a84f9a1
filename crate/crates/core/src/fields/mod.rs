//! Grid representations of fields and the mass, energy and virial functionals.
//!
//! With `K = ∫|∇u|²`, `F = ∫|u|⁴`, `S = ∫|u|⁶`:
//!
//! ```text
//! M = ∫|u|²      E = K/2 + S/6 − F/4      V = K + S − (3/4)F
//! ```
//!
//! `E` and `V` are always derived from the stored `K, F, S`, never integrated
//! separately.

mod cartesian;
pub mod io;
mod radial;

pub use cartesian::{h1_inner_spectral, ComplexField};
pub use radial::{
    apply_stencil, apply_stencil_transpose, first_derivative, first_derivative_stencil,
    radial_laplacian, second_derivative, simpson_weights, MonotoneCubic, NodeSpacing,
    RadialProfile, StencilRow, DECAY_THRESHOLD, MIN_NODES,
};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative decay a radial profile must reach before it can be placed on a
/// periodic lattice.
pub const EMBED_DECAY_THRESHOLD: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FunctionalReport {
    pub mass: f64,
    pub kinetic: f64,
    pub quartic: f64,
    pub sextic: f64,
    pub energy: f64,
    pub virial: f64,
    /// Set when a radial profile has not decayed below
    /// [`DECAY_THRESHOLD`] at `r_max`.
    #[serde(default)]
    pub truncated: bool,
}

impl FunctionalReport {
    pub fn from_integrals(mass: f64, kinetic: f64, quartic: f64, sextic: f64) -> Self {
        FunctionalReport {
            mass,
            kinetic,
            quartic,
            sextic,
            energy: kinetic / 2.0 + sextic / 6.0 - quartic / 4.0,
            virial: kinetic + sextic - 0.75 * quartic,
            truncated: false,
        }
    }

    /// `S/K`.
    pub fn beta(&self) -> Option<f64> {
        (self.kinetic > 0.0).then(|| self.sextic / self.kinetic)
    }

    /// `‖u‖⁴_{L⁴} / (‖u‖_{L²} ‖∇u‖^{3/2}_{L²} ‖u‖^{3/2}_{L⁶})`, scale invariant
    /// under `u ↦ a·u(λ·)`. `None` when any norm vanishes.
    pub fn gnh_quotient(&self) -> Option<f64> {
        let denom = self.mass.sqrt() * self.kinetic.powf(0.75) * self.sextic.powf(0.25);
        (denom > 0.0).then(|| self.quartic / denom)
    }
}

/// Anything the functionals can be evaluated on.
pub trait Functionals {
    fn functionals(&self) -> FunctionalReport;
}

impl Functionals for RadialProfile {
    fn functionals(&self) -> FunctionalReport {
        RadialProfile::functionals(self)
    }
}

impl Functionals for ComplexField {
    fn functionals(&self) -> FunctionalReport {
        ComplexField::functionals(self)
    }
}

pub fn functionals<T: Functionals + ?Sized>(u: &T) -> FunctionalReport {
    u.functionals()
}

/// `x ↦ a·u(λx)`.
pub fn rescale(u: &RadialProfile, amplitude: f64, dilation: f64) -> Result<RadialProfile> {
    u.rescale(amplitude, dilation)
}

pub fn h1_inner(u: &ComplexField, v: &ComplexField) -> Result<Complex64> {
    u.h1_inner(v)
}

/// Place `u(|x|)` on the periodic lattice of side `length` with `n` points per
/// side, using [`EMBED_DECAY_THRESHOLD`].
pub fn embed(u: &RadialProfile, length: f64, n: usize) -> Result<ComplexField> {
    embed_with_threshold(u, length, n, EMBED_DECAY_THRESHOLD)
}

/// As [`embed`], refusing when `|u|` still exceeds `threshold·max|u|` anywhere
/// beyond `min(r_max, L/2)`, where the periodic images would overlap.
pub fn embed_with_threshold(
    u: &RadialProfile,
    length: f64,
    n: usize,
    threshold: f64,
) -> Result<ComplexField> {
    if !(length > 0.0) {
        return Err(Error::InvalidGrid(format!("box side must be positive, got {length}")));
    }
    let half = 0.5 * length;
    let cut = threshold * u.max_abs();
    let decay = u.decay_radius(threshold);
    if decay > half {
        let it = u.interpolant();
        return Err(Error::WrapAround { radius: half, value: it.eval(half).abs().max(cut) });
    }
    let it = u.interpolant();
    ComplexField::from_fn(length, n, |x, y, z| {
        let r = (x * x + y * y + z * z).sqrt();
        Complex64::new(it.eval(r), 0.0)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn radial_gaussian(n: usize) -> RadialProfile {
        RadialProfile::from_fn(12.0, n, |r| (-r * r / 2.0).exp()).unwrap()
    }

    #[test]
    fn report_identities_are_exact() {
        let r = FunctionalReport::from_integrals(1.5, 2.25, 3.5, 0.75);
        assert_eq!(r.energy, 2.25 / 2.0 + 0.75 / 6.0 - 3.5 / 4.0);
        assert_eq!(r.virial, 2.25 + 0.75 - 0.75 * 3.5);
    }

    #[test]
    fn zero_field_reports_zero() {
        let r = RadialProfile::zeros(5.0, 64).unwrap().functionals();
        assert_eq!((r.mass, r.kinetic, r.quartic, r.sextic, r.energy, r.virial), (0.0, 0.0, 0.0, 0.0, 0.0, 0.0));
        let c = ComplexField::zeros(5.0, 8).unwrap().functionals();
        assert_eq!((c.mass, c.kinetic, c.energy, c.virial), (0.0, 0.0, 0.0, 0.0));
    }

    #[test]
    fn radial_gaussian_matches_closed_form() {
        // ∫e^{-a|x|²} = (π/a)^{3/2}; ∫|x|²e^{-|x|²} = (3/2)π^{3/2}
        let r = radial_gaussian(2401).functionals();
        let pi32 = PI.powf(1.5);
        let mass = pi32;
        let kinetic = 1.5 * pi32;
        let quartic = (PI / 2.0).powf(1.5);
        let sextic = (PI / 3.0).powf(1.5);
        for (got, want) in [(r.mass, mass), (r.kinetic, kinetic), (r.quartic, quartic), (r.sextic, sextic)] {
            assert!((got - want).abs() < 1e-10 * want, "{got} vs {want}");
        }
        assert!((r.mass - 5.56833).abs() < 1e-5);
        assert!((r.kinetic - 8.35249).abs() < 1e-5);
        assert!((r.quartic - 1.96870).abs() < 1e-5);
        assert!((r.sextic - 1.07163).abs() < 1e-5);
        assert!((r.energy - 3.86267).abs() < 1e-5);
        assert!((r.virial - 7.94759).abs() < 1e-5);
    }

    #[test]
    fn rescaling_identity_and_amplitude() {
        let g = radial_gaussian(1201);
        assert_eq!(rescale(&g, 1.0, 1.0).unwrap(), g);
        let base = g.functionals();
        let r = rescale(&g, 2.0, 1.0).unwrap().functionals();
        assert!((r.mass / base.mass - 4.0).abs() < 1e-14);
        assert!((r.sextic / base.sextic - 64.0).abs() < 1e-13);
        let d = rescale(&g, 1.0, 2.0).unwrap().functionals();
        assert!((d.kinetic / base.kinetic - 0.5).abs() < 1e-13);
        assert!((d.quartic / base.quartic - 0.125).abs() < 1e-13);
        assert!(matches!(rescale(&g, -1.0, 1.0), Err(Error::InvalidArgument(_))));
        assert!(matches!(rescale(&g, 1.0, 0.0), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn embed_gaussian_preserves_mass() {
        let g = radial_gaussian(1201);
        let field = embed(&g, 20.0, 64).unwrap();
        let (a, b) = (g.functionals(), field.functionals());
        assert!((a.mass - b.mass).abs() < 1e-4 * a.mass);
        assert!((a.virial - b.virial).abs() < 1e-4 * a.kinetic);
        let zero = embed(&RadialProfile::zeros(10.0, 100).unwrap(), 20.0, 16).unwrap();
        assert!(zero.values().iter().all(|v| *v == Complex64::new(0.0, 0.0)));
    }

    #[test]
    fn embed_refuses_wraparound() {
        let wide = RadialProfile::from_fn(40.0, 801, |r| (-r * r / 50.0).exp()).unwrap();
        assert!(matches!(embed(&wide, 10.0, 32), Err(Error::WrapAround { .. })));
    }

    #[test]
    fn gauge_and_translation_invariance() {
        let u = ComplexField::from_fn(16.0, 32, |x, y, z| {
            Complex64::from_polar((-(x * x + 2.0 * y * y + z * z) / 3.0).exp(), 0.3 * x - 0.2 * z)
        })
        .unwrap();
        let a = u.functionals();
        let b = u.phase_rotated(1.234).lattice_shift(3, -5, 1).functionals();
        for (x, y) in [(a.mass, b.mass), (a.kinetic, b.kinetic), (a.quartic, b.quartic), (a.sextic, b.sextic)] {
            assert!((x - y).abs() <= 1e-13 * x.abs(), "{x} vs {y}");
        }
    }
}
