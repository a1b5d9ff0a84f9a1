//! Property-based checks of structural invariants.

use std::f64::consts::TAU;

use cqnls::dynamics::{evolve, EvolutionConfig};
use cqnls::fields::{io, ComplexField, FunctionalReport, RadialProfile};
use cqnls::random_fields::{GaussianComponent, Mixture};
use cqnls::varmin::{gnh_slack, virial_lower_bound_gap, young_gap};
use num_complex::Complex64;
use proptest::prelude::*;

fn component() -> impl Strategy<Value = GaussianComponent> {
    (prop::array::uniform3(-4.0..4.0f64), 0.8..2.5f64, 0.1..2.0f64, 0.0..TAU)
        .prop_map(|(center, width, amplitude, phase)| GaussianComponent { center, width, amplitude, phase })
}

fn mixture() -> impl Strategy<Value = Mixture> {
    prop::collection::vec(component(), 1..4).prop_map(|components| Mixture { length: 16.0, components })
}

fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()).max(1e-300)
}

fn reports_close(a: &FunctionalReport, b: &FunctionalReport, rel: f64) -> bool {
    close(a.mass, b.mass, rel) && close(a.kinetic, b.kinetic, rel) && close(a.quartic, b.quartic, rel) && close(a.sextic, b.sextic, rel)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn functionals_are_gauge_and_translation_invariant(m in mixture(), theta in -10.0..10.0f64, s in prop::array::uniform3(-16isize..16)) {
        let u = m.sample(16).unwrap();
        let a = u.functionals();
        let b = u.phase_rotated(theta).lattice_shift(s[0], s[1], s[2]).functionals();
        prop_assert!(reports_close(&a, &b, 1e-12), "{a:?} vs {b:?}");
    }

    #[test]
    fn young_gap_is_non_negative(a in 0.0..50.0f64, b in 0.0..5.0f64) {
        let g = young_gap(a, b).unwrap();
        let scale = 0.75 * (a.powf(4.0 / 3.0) + b.powi(4));
        prop_assert!(g >= -1e-14 * scale, "gap {g} at ({a}, {b})");
    }

    #[test]
    fn young_gap_vanishes_on_the_equality_curve(a in 1e-3..1e3f64) {
        let b = (a.powf(4.0 / 3.0) / 3.0).powf(0.25);
        let scale = 0.75 * (a.powf(4.0 / 3.0) + b.powi(4));
        prop_assert!(young_gap(a, b).unwrap().abs() <= 1e-13 * scale);
    }

    #[test]
    fn gnh_quotient_is_scale_invariant(amp in 0.05..20.0f64, dil in 0.3..3.0f64, w in 0.5..2.0f64) {
        let g = RadialProfile::from_fn(40.0, 4001, |r| (-r * r / (2.0 * w * w)).exp()).unwrap();
        let q0 = g.functionals().gnh_quotient().unwrap();
        let q1 = g.rescale(amp, dil).unwrap().functionals().gnh_quotient().unwrap();
        prop_assert!(close(q0, q1, 1e-9), "{q0} vs {q1}");
    }

    #[test]
    fn virial_lower_bound_holds(m in mixture()) {
        let u = m.sample(32).unwrap();
        let r = u.functionals();
        let gap = virial_lower_bound_gap(&u);
        prop_assert!(gap >= -1e-10 * (r.kinetic + r.sextic + r.mass), "gap {gap}");
    }

    #[test]
    fn gnh_slack_scales_with_mass_bound(m in mixture()) {
        // lowering the reference mass can only raise the slack
        let r = m.sample(32).unwrap().functionals();
        prop_assert!(gnh_slack(&r, 150.0) >= gnh_slack(&r, 185.0));
    }

    #[test]
    fn cqf_round_trip_is_bit_exact(m in mixture()) {
        let u = m.sample(8).unwrap();
        let back = io::field_from_bytes(&io::field_to_bytes(&u).unwrap()).unwrap();
        prop_assert_eq!(back.length().to_bits(), u.length().to_bits());
        for (x, y) in u.values().iter().zip(back.values()) {
            prop_assert_eq!((x.re.to_bits(), x.im.to_bits()), (y.re.to_bits(), y.im.to_bits()));
        }
    }

    #[test]
    fn radial_cqf_round_trip_is_bit_exact(values in prop::collection::vec(-5.0..5.0f64, 16..64), r_max in 1.0..100.0f64) {
        let u = RadialProfile::new(r_max, values).unwrap();
        let back = io::radial_from_bytes(&io::radial_to_bytes(&u).unwrap()).unwrap();
        prop_assert_eq!(back, u);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn split_step_conserves_mass(m in mixture(), dt in prop::sample::select(vec![0.01, 0.02, 0.05])) {
        let u = m.sample(16).unwrap();
        let mut cfg = EvolutionConfig::new(dt, 10.0 * dt);
        cfg.boundary_threshold = 1.0;
        let (v, trace) = evolve(&u, &cfg).unwrap();
        prop_assert!(trace.mass_drift() <= 1e-12, "{}", trace.mass_drift());
        prop_assert!(close(u.functionals().mass, v.functionals().mass, 1e-12));
    }

    #[test]
    fn evolution_commutes_with_gauge(m in mixture(), theta in 0.0..TAU) {
        let u = m.sample(16).unwrap();
        let mut cfg = EvolutionConfig::new(0.02, 0.2);
        cfg.boundary_threshold = 1.0;
        let (a, _) = evolve(&u.phase_rotated(theta), &cfg).unwrap();
        let (b, _) = evolve(&u, &cfg).unwrap();
        let b = b.phase_rotated(theta);
        let err = a.sub(&b).unwrap().values().iter().map(|v| v.norm()).fold(0.0, f64::max);
        prop_assert!(err <= 1e-12 * u.max_abs(), "{err}");
    }
}

#[test]
fn zero_field_is_a_fixed_point() {
    let u = ComplexField::zeros(10.0, 8).unwrap();
    let (v, _) = evolve(&u, &EvolutionConfig::new(0.1, 1.0)).unwrap();
    assert!(v.values().iter().all(|x| *x == Complex64::new(0.0, 0.0)));
}
