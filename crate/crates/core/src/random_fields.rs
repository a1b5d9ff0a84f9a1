//! Seeded random Gaussian-mixture fields on the periodic box.
//!
//! Each field is `Σ A e^{iφ} exp(−|x − c|²/(2w²))` with 1 to 5 components,
//! centers in `[−L/4, L/4]³`, widths in `[0.5, 3]`, amplitudes in `[0.1, 2]`
//! and phases in `[0, 2π)`. Every component is summed over its periodic
//! images, so the field is smooth on the torus.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::fields::ComplexField;

pub const MAX_COMPONENTS: usize = 5;
pub const WIDTH_RANGE: (f64, f64) = (0.5, 3.0);
pub const AMPLITUDE_RANGE: (f64, f64) = (0.1, 2.0);

/// Images per side beyond which a component's tail is below rounding.
const IMAGE_REACH: i32 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianComponent {
    pub center: [f64; 3],
    pub width: f64,
    pub amplitude: f64,
    pub phase: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mixture {
    pub length: f64,
    pub components: Vec<GaussianComponent>,
}

impl Mixture {
    pub fn random<R: Rng>(rng: &mut R, length: f64) -> Self {
        let count = rng.gen_range(1..=MAX_COMPONENTS);
        let components = (0..count)
            .map(|_| GaussianComponent {
                center: [0; 3].map(|_| rng.gen_range(-0.25 * length..=0.25 * length)),
                width: rng.gen_range(WIDTH_RANGE.0..=WIDTH_RANGE.1),
                amplitude: rng.gen_range(AMPLITUDE_RANGE.0..=AMPLITUDE_RANGE.1),
                phase: rng.gen_range(0.0..2.0 * PI),
            })
            .collect();
        Mixture { length, components }
    }

    /// Sample on the `n³` lattice of the box.
    pub fn sample(&self, n: usize) -> Result<ComplexField> {
        let mut field = ComplexField::zeros(self.length, n)?;
        let coords: Vec<f64> = (0..n).map(|i| field.coordinate(i)).collect();
        let length = self.length;
        for c in &self.components {
            let axis = |d: usize| -> Vec<f64> {
                coords
                    .iter()
                    .map(|&x| {
                        (-IMAGE_REACH..=IMAGE_REACH)
                            .map(|m| {
                                let s = x - c.center[d] + m as f64 * length;
                                (-s * s / (2.0 * c.width * c.width)).exp()
                            })
                            .sum()
                    })
                    .collect()
            };
            let (gx, gy, gz) = (axis(0), axis(1), axis(2));
            let weight = Complex64::from_polar(c.amplitude, c.phase);
            let values = field.values_mut();
            for i in 0..n {
                for j in 0..n {
                    let a = weight * gx[i] * gy[j];
                    let row = &mut values[(i * n + j) * n..(i * n + j + 1) * n];
                    for (v, &g) in row.iter_mut().zip(&gz) {
                        *v += a * g;
                    }
                }
            }
        }
        Ok(field)
    }
}

/// Generator for the `index`-th mixture of a seeded family; each index draws
/// from its own ChaCha stream, so results do not depend on evaluation order.
pub fn mixture(seed: u64, index: u64, length: f64) -> Mixture {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    Mixture::random(&mut rng, length)
}

pub fn random_field(seed: u64, index: u64, length: f64, n: usize) -> Result<ComplexField> {
    mixture(seed, index, length).sample(n)
}
