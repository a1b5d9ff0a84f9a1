//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs without the libtest harness so the report is always printed. Pass
//! criterion numbers as arguments to run a subset, e.g.
//! `cargo test --release --test acceptance -- 3 12`.

use std::f64::consts::PI;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use cqnls::dynamics::{
    evolve, evolve_with_reference, integrated_virial, plane_wave, scattering_diagnostics, AlarmPolicy,
    Behaviour, EvolutionConfig, EvolutionTrace, ModulationReference,
};
use cqnls::fields::{embed_with_threshold, ComplexField, FunctionalReport};
use cqnls::groundstate::{multiplier_residuals, solve_ground_state};
use cqnls::rescaling::{default_grid, ev_min, mass_from_constant, rescaled_soliton, EvMin, RegionMap, Solver};
use cqnls::varmin::{
    gnh_slack, minimize_e_on_constraints, run_suite, FieldCheck, MinimizerConfig, SuiteConfig, SuiteReport,
};
use cqnls::Error;
use num_complex::Complex64;

const TOL: f64 = 1e-9;
const SUITE_SEED: u64 = 7;
const SUITE_COUNT: u64 = 1000;
/// Box side for a radial profile, as a multiple of its decay radius.
const BOX_FACTOR: f64 = 2.1;

struct Verdict {
    passed: bool,
    detail: String,
}

fn verdict(passed: bool, detail: impl Into<String>) -> Verdict {
    Verdict { passed, detail: detail.into() }
}

struct ReferenceRuns {
    /// `(dt, final field, trace)` for dt = 4e-3, 2e-3, 1e-3.
    runs: Vec<(f64, ComplexField, EvolutionTrace)>,
    seconds: f64,
}

#[derive(Default)]
struct Shared {
    map: Option<RegionMap>,
    suite: Option<(SuiteReport, Vec<FieldCheck>)>,
    reference: Option<ReferenceRuns>,
}

impl Shared {
    fn map(&mut self) -> &RegionMap {
        self.map.get_or_insert_with(|| RegionMap::build(&default_grid(), &Solver::new(TOL)).expect("atlas builds"))
    }

    fn suite(&mut self) -> &(SuiteReport, Vec<FieldCheck>) {
        if self.suite.is_none() {
            let m0 = self.map().m0;
            self.suite = Some(run_suite(&SuiteConfig::new(SUITE_SEED, SUITE_COUNT, m0)).expect("suite runs"));
        }
        self.suite.as_ref().unwrap()
    }

    fn reference(&mut self) -> &ReferenceRuns {
        self.reference.get_or_insert_with(|| {
            let u0 = ComplexField::from_fn(40.0, 128, |x, y, z| Complex64::new((-(x * x + y * y + z * z) / 2.0).exp(), 0.0))
                .unwrap();
            let mut runs = Vec::new();
            let mut seconds = 0.0;
            for dt in [4e-3, 2e-3, 1e-3] {
                let mut cfg = EvolutionConfig::new(dt, 2.0);
                cfg.cadence = (0.02 / dt).round() as usize;
                cfg.alarm = AlarmPolicy::Flag;
                cfg.action_rate = dt == 1e-3;
                let start = Instant::now();
                let (u, trace) = evolve(&u0, &cfg).expect("reference run");
                if dt == 1e-3 {
                    seconds = start.elapsed().as_secs_f64();
                }
                runs.push((dt, u, trace));
            }
            ReferenceRuns { runs, seconds }
        })
    }
}

fn c1_certification(_: &mut Shared) -> Verdict {
    let start = Instant::now();
    let mut worst = (0.0f64, 0.0f64);
    let mut failed = Vec::new();
    for omega in [0.02, 0.05, 0.08, 0.1, 0.12, 0.15, 0.18] {
        match solve_ground_state(omega, TOL) {
            Ok(rec) => {
                let m = multiplier_residuals(&rec);
                let mult = m.nehari.max(m.pohozaev);
                worst = (worst.0.max(rec.residuals.stationarity), worst.1.max(mult));
                if rec.residuals.stationarity > 1e-8 || mult > 1e-7 {
                    failed.push(omega);
                }
            }
            Err(e) => {
                failed.push(omega);
                eprintln!("omega {omega}: {e}");
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(
        failed.is_empty() && secs <= 60.0,
        format!("max stationarity {:.2e}, max multiplier {:.2e}, {secs:.1} s, failing {failed:?}", worst.0, worst.1),
    )
}

fn c2_zero_virial(sh: &mut Shared) -> Verdict {
    let map = sh.map();
    let worst = map.rescaled_curve.iter().map(|s| s.relative_virial()).fold(0.0, f64::max);
    verdict(
        worst <= 1e-6 && map.failures.is_empty(),
        format!("max |V|/K = {worst:.2e} over {} rescaled samples, {} failed solves", map.rescaled_curve.len(), map.failures.len()),
    )
}

fn c3_landmark_identity(sh: &mut Shared) -> Verdict {
    let map = sh.map();
    let dev = (27.0 * map.m0 * map.m0 - 16.0 * map.m2 * map.m2).abs() / (16.0 * map.m2 * map.m2);
    let ratio = map.m2 / map.m0;
    let target = 3.0 * 3f64.sqrt() / 4.0;
    verdict(
        dev <= 5e-3 && (ratio / target - 1.0).abs() <= 5e-3,
        format!("m0 = {:.10}, m2 = {:.10}, |27m0²−16m2²|/16m2² = {dev:.2e}, m2/m0 = {ratio:.8}", map.m0, map.m2),
    )
}

fn c4_m0_cross_check(sh: &mut Shared) -> Verdict {
    let map = sh.map().clone();
    let roots = &map.m0_detail.beta_one_roots;
    let Some(&omega) = roots.first() else { return verdict(false, "no β = 1 root on the grid") };
    let rec = solve_ground_state(omega, TOL).expect("solve at β = 1");
    let c = rescaled_soliton(&rec).unwrap().functionals().gnh_quotient().unwrap();
    let from_c = mass_from_constant(c);
    let rel = (from_c - map.m0).abs() / map.m0;
    verdict(
        rel <= 5e-3 && map.m0 < map.min_soliton_mass && roots.len() == 1,
        format!(
            "curve m0 = {:.10}, √3(16/9C)² = {from_c:.10} at ω = {omega:.10} (rel {rel:.2e}); min soliton mass {:.6}",
            map.m0, map.min_soliton_mass
        ),
    )
}

fn c5_variational_oracle(sh: &mut Shared) -> Verdict {
    let map = sh.map().clone();
    let cfg = MinimizerConfig::default();
    let mut worst: f64 = 0.0;
    let mut notes = Vec::new();
    let mut ok = true;
    for omega in [0.03, 0.035, 0.04, 0.045, 0.05] {
        let rec = solve_ground_state(omega, TOL).unwrap();
        let r: FunctionalReport = rescaled_soliton(&rec).unwrap().functionals();
        if !matches!(ev_min(r.mass, &map), Ok(EvMin::Finite { curve: cqnls::rescaling::CurveKind::Rescaled, .. })) {
            ok = false;
            notes.push(format!("ω = {omega} not on the rescaled branch of the envelope"));
        }
        match minimize_e_on_constraints(r.mass, &cfg) {
            Ok(res) => worst = worst.max((res.e_min - r.energy).abs() / r.energy.abs()),
            Err(e) => {
                ok = false;
                notes.push(format!("m = {}: {e}", r.mass));
            }
        }
    }
    let infeasible = matches!(minimize_e_on_constraints(0.5 * map.m0, &cfg), Err(Error::InfeasibleAtMass { .. }));
    verdict(
        ok && worst <= 1e-2 && infeasible,
        format!("max relative energy error {worst:.2e} at 5 masses; InfeasibleAtMass at m0/2: {infeasible} {notes:?}"),
    )
}

fn c6_gnh_suite(sh: &mut Shared) -> Verdict {
    let map = sh.map().clone();
    let (report, _) = sh.suite();
    let omega = map.omega_set.first().copied().expect("minimizer frequency");
    let r = rescaled_soliton(&solve_ground_state(omega, TOL).unwrap()).unwrap().functionals();
    let saturation = gnh_slack(&r, map.m0) / (r.kinetic + r.sextic);
    verdict(
        report.gnh_violations.is_empty() && (-1e-6..=1e-3).contains(&saturation),
        format!(
            "{}/{} fields with slack ≥ −1e-6·(K+S) (min relative slack {:.3e}); relative slack at R_ω* = {saturation:.2e}",
            SUITE_COUNT - report.gnh_violations.len() as u64,
            SUITE_COUNT,
            report.min_relative_slack
        ),
    )
}

fn c7_virial_lower_bound(sh: &mut Shared) -> Verdict {
    let (report, checks) = sh.suite();
    // the shorter display that omits the (1/3)∫|u|⁶ term
    let display_error = checks
        .iter()
        .map(|c| {
            let d = &c.decomposition;
            let scale = c.report.kinetic + c.report.sextic + 0.75 * c.report.quartic;
            (d.lower_bound + d.well_term - d.virial).abs() / scale
        })
        .fold(0.0, f64::max);
    verdict(
        report.virial_violations.is_empty() && report.max_decomposition_error <= 1e-10,
        format!(
            "{}/{} fields with V − [2E − 3M/64] ≥ −1e-10·(K+S+M) (min relative gap {:.3e}); decomposition error {:.2e}; \
             display without (1/3)∫|u|⁶ is off by up to {display_error:.2e} (flagged discrepancy)",
            SUITE_COUNT - report.virial_violations.len() as u64,
            SUITE_COUNT,
            report.min_relative_gap,
            report.max_decomposition_error
        ),
    )
}

fn c8_conservation(sh: &mut Shared) -> Verdict {
    let refs = sh.reference();
    let (_, fine, trace) = &refs.runs[2];
    let (m, e) = (trace.mass_drift(), trace.energy_drift());
    let drift = |i: usize| refs.runs[i].2.energy_drift();
    let drift_order = (drift(1) / drift(2)).log2();
    let d_coarse = refs.runs[0].1.sub(&refs.runs[1].1).unwrap().h1_norm();
    let d_fine = refs.runs[1].1.sub(fine).unwrap().h1_norm();
    let self_order = (d_coarse / d_fine).log2();
    verdict(
        m <= 1e-6 && e <= 1e-6 && (drift_order - 2.0).abs() <= 0.2 && (self_order - 2.0).abs() <= 0.2 && refs.seconds <= 600.0,
        format!(
            "dt = 1e-3: M drift {m:.2e}, E drift {e:.2e}; order {self_order:.3} (self-convergence), {drift_order:.3} (E drift); \
             {:.0} s",
            refs.seconds
        ),
    )
}

fn c9_virial_identity(sh: &mut Shared) -> Verdict {
    let refs = sh.reference();
    let trace = &refs.runs[2].2;
    let quiet = trace.rows.iter().filter(|r| r.action_rate.is_some()).count();
    let err = trace.virial_identity_error();
    let alarm = trace.rows.iter().find(|r| r.action.is_none()).map(|r| r.t);
    verdict(
        err.is_some_and(|e| e <= 1e-3) && quiet >= 10,
        format!(
            "max |dA/dt − V|/|V| = {:.2e} over {quiet} quiet rows; alarm {}",
            err.unwrap_or(f64::NAN),
            alarm.map_or("never raised".into(), |t| format!("raised at t = {t:.2}"))
        ),
    )
}

fn integrated_virial_at(omega: f64, n: usize, dt: f64) -> Result<f64, Error> {
    let r = rescaled_soliton(&solve_ground_state(omega, TOL)?)?;
    let threshold = 1e-4;
    let length = BOX_FACTOR * r.decay_radius(threshold);
    let u0 = embed_with_threshold(&r, length, n, threshold)?;
    Ok(integrated_virial(&u0, &EvolutionConfig::new(dt, 1.0))?.value)
}

fn c10_integrated_virial(_: &mut Shared) -> Verdict {
    let mut ok = true;
    let mut notes = Vec::new();
    for omega in [0.04, 0.047, 0.054] {
        let runs = [(64, 0.01), (64, 0.005), (128, 0.01)].map(|(n, dt)| integrated_virial_at(omega, n, dt));
        match runs {
            [Ok(base), Ok(dt_half), Ok(n_double)] => {
                let spread = ((dt_half - base).abs().max((n_double - base).abs())) / base.abs();
                ok &= base > 0.0 && dt_half > 0.0 && n_double > 0.0 && spread <= 0.02;
                notes.push(format!("ω = {omega}: ∫V = {base:.5e} (refined {dt_half:.5e}, {n_double:.5e}; spread {spread:.1e})"));
            }
            other => {
                ok = false;
                notes.push(format!("ω = {omega}: {:?}", other.iter().filter_map(|r| r.as_ref().err()).map(|e| e.to_string()).collect::<Vec<_>>()));
            }
        }
    }
    verdict(ok, notes.join("; "))
}

fn c11_soliton_dynamics(_: &mut Shared) -> Verdict {
    let omega = 0.1;
    let rec = solve_ground_state(omega, TOL).unwrap();
    let length = BOX_FACTOR * rec.profile.decay_radius(1e-6);
    let n = 64;
    let u0 = embed_with_threshold(&rec.profile, length, n, 1e-6).unwrap();
    let reference = ModulationReference::from_record(&rec, length, n).unwrap();
    let mut cfg = EvolutionConfig::new(0.01, 2.0);
    cfg.cadence = 20;
    let (_, trace) = evolve_with_reference(&u0, &cfg, Some(&reference)).unwrap();
    let s = scattering_diagnostics(&trace);
    let rho0 = trace.rows[0].rho.unwrap();
    let max_rho = s.max_rho.unwrap();
    let slack = 1e-6 * reference.h1_norm();
    verdict(
        s.l4_variation <= 0.01 && max_rho <= 2.0 * rho0 + slack && s.classification == Behaviour::SolitonLike,
        format!(
            "L4 variation {:.2e}, ρ(0) = {rho0:.6}, max ρ = {max_rho:.6}, E drift {:.2e}, classified {:?}",
            s.l4_variation,
            trace.energy_drift(),
            s.classification
        ),
    )
}

fn c12_plane_wave(_: &mut Shared) -> Verdict {
    let (length, n, modes) = (2.0 * PI, 16, [1, -2, 3]);
    let u0 = plane_wave(length, n, 1.0, modes, 0.0).unwrap();
    let mut cfg = EvolutionConfig::new(0.01, 1.0);
    cfg.boundary_threshold = 1.0;
    let (u, _) = evolve(&u0, &cfg).unwrap();
    let exact = plane_wave(length, n, 1.0, modes, 1.0).unwrap();
    let err = u.values().iter().zip(exact.values()).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
    verdict(err <= 1e-12, format!("max pointwise error {err:.2e} at T = 1"))
}

type Criterion = (usize, &'static str, fn(&mut Shared) -> Verdict);

fn main() {
    let criteria: [Criterion; 12] = [
        (1, "soliton certification", c1_certification),
        (2, "zero virial of rescaled solitons", c2_zero_virial),
        (3, "landmark identity 27m0² = 16m2²", c3_landmark_identity),
        (4, "m0 cross-validation", c4_m0_cross_check),
        (5, "variational oracle equivalence", c5_variational_oracle),
        (6, "GNH property suite", c6_gnh_suite),
        (7, "virial lower-bound suite", c7_virial_lower_bound),
        (8, "dynamics conservation", c8_conservation),
        (9, "virial identity", c9_virial_identity),
        (10, "integrated virial positivity", c10_integrated_virial),
        (11, "soliton dynamics sanity", c11_soliton_dynamics),
        (12, "plane-wave exactness", c12_plane_wave),
    ];
    let selected: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut shared = Shared::default();
    let mut failures = 0;
    for (id, name, check) in criteria {
        if !selected.is_empty() && !selected.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let v = catch_unwind(AssertUnwindSafe(|| check(&mut shared)))
            .unwrap_or_else(|p| {
                let msg = p
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_default();
                verdict(false, format!("panicked: {msg}"))
            });
        if !v.passed {
            failures += 1;
        }
        println!(
            "{} criterion {id:>2} ({name}): {} [{:.1} s]",
            if v.passed { "PASS" } else { "FAIL" },
            v.detail,
            start.elapsed().as_secs_f64()
        );
    }
    if failures > 0 {
        println!("{failures} acceptance criteria failed");
        std::process::exit(1);
    }
}
