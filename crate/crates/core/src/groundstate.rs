//! Radial ground states `P_ω` of `−ΔP + P⁵ − P³ + ωP = 0`, `0 < ω < 3/16`.
//!
//! The profile is found by shooting on the central value `b = P(0)`. Writing
//! `p₋ < p₊` for the positive roots of `P⁴ − P² + ω` and `ζ` for the positive
//! zero of `G(P) = P⁶/6 − P⁴/4 + ωP²/2` beyond `p₋`, decaying solutions start
//! in `ζ < b < p₊`: below the bracket the trajectory turns back up
//! (undershoot), near `p₊` it crosses zero (overshoot).
//!
//! The shooting parameter is `η = p₊ − b`. Close to `ω = 3/16` the solution
//! sits on a plateau at `p₊` for a long radius and `η` falls far below the
//! resolution of `b`, so while `P > p₊/2` the ODE is integrated for the
//! deviation `w = p₊ − P`, with the nonlinearity factored so that it is
//! exactly proportional to `w`.
//!
//! Once `P` drops below `MATCH_THRESHOLD · b` the tail is replaced by the
//! linear decay `c e^{−√ω r}/r`.

mod cache;

pub use cache::SolitonCache;

use std::ops::ControlFlow;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{simpson_weights, FunctionalReport, RadialProfile};
use crate::numerics::pairwise_sum_by;
use crate::ode::{DormandPrince, Tolerance};

/// Upper end of the admissible frequency range.
pub const OMEGA_MAX: f64 = 3.0 / 16.0;

/// Starting radius for the integration; the series covers `[0, r₀]`.
pub const START_RADIUS: f64 = 1e-4;

/// Relative value (to `b`) below which the computed solution is replaced by
/// its linear tail.
pub const MATCH_THRESHOLD: f64 = 1e-6;

/// Smallest tolerance accepted by the solver.
pub const MIN_TOLERANCE: f64 = 1e-12;

const RADIUS_CAP: f64 = 5000.0;
const BRACKET_EXPANSIONS: usize = 40;
const BRACKET_FACTOR: f64 = 1e-4;
const MAX_GRID_REFINEMENTS: usize = 2;

/// Constant states and bracket ends for a given `ω`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantStates {
    /// `p₋²`, the smaller root of `x² − x + ω`.
    pub lower_sq: f64,
    /// `p₊²`, the larger root.
    pub upper_sq: f64,
    pub upper: f64,
    /// Positive zero of `G` beyond `p₋`.
    pub zeta: f64,
}

impl ConstantStates {
    pub fn new(omega: f64) -> Self {
        let disc = (1.0 - 4.0 * omega).sqrt();
        let upper_sq = 0.5 * (1.0 + disc);
        let lower_sq = 2.0 * omega / (1.0 + disc);
        // ζ² = 3/4 − 3√(1/16 − ω/3), written without cancellation
        let root = (1.0 / 16.0 - omega / 3.0).sqrt();
        let zeta_sq = 3.0 * omega / (0.75 + 3.0 * root);
        ConstantStates { lower_sq, upper_sq, upper: upper_sq.sqrt(), zeta: zeta_sq.sqrt() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Residuals {
    /// Relative `L²` norm of `−ΔP + P⁵ − P³ + ωP` on the grid.
    pub stationarity: f64,
    /// Relative residual of `K + S − F + ωM = 0`.
    pub nehari: f64,
    /// Relative residual of `F − 4ωM = 0`.
    pub pohozaev: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolitonRecord {
    pub omega: f64,
    pub tol: f64,
    /// `b = P(0)`.
    pub central: f64,
    /// `p₊ − b`, carried separately because it can be far below `ulp(b)`.
    pub eta: f64,
    pub profile: RadialProfile,
    pub report: FunctionalReport,
    pub beta: f64,
    pub residuals: Residuals,
    /// Radius where the computed profile hands over to the linear tail.
    pub junction_radius: f64,
    /// Set when the record missed `tol` because the shooting parameter hit
    /// floating point resolution.
    pub precision_limited: bool,
}

impl SolitonRecord {
    pub fn decay_rate(&self) -> f64 {
        self.omega.sqrt()
    }

    pub fn meets_tolerance(&self) -> bool {
        self.residuals.stationarity <= self.tol
            && self.residuals.nehari <= 10.0 * self.tol
            && self.residuals.pohozaev <= 10.0 * self.tol
    }
}

/// Serializable metadata of a record; the profile travels separately as `.cqf`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordMeta {
    pub omega: f64,
    pub tol: f64,
    pub central: f64,
    pub eta: f64,
    pub report: FunctionalReport,
    pub beta: f64,
    pub residuals: Residuals,
    pub junction_radius: f64,
    pub precision_limited: bool,
    pub r_max: f64,
    pub n: usize,
}

impl SolitonRecord {
    pub fn meta(&self) -> RecordMeta {
        RecordMeta {
            omega: self.omega,
            tol: self.tol,
            central: self.central,
            eta: self.eta,
            report: self.report,
            beta: self.beta,
            residuals: self.residuals,
            junction_radius: self.junction_radius,
            precision_limited: self.precision_limited,
            r_max: self.profile.r_max(),
            n: self.profile.len(),
        }
    }

    pub fn from_parts(meta: RecordMeta, profile: RadialProfile) -> Result<Self> {
        if profile.len() != meta.n || profile.r_max() != meta.r_max {
            return Err(Error::Format("profile grid does not match record metadata".into()));
        }
        Ok(SolitonRecord {
            omega: meta.omega,
            tol: meta.tol,
            central: meta.central,
            eta: meta.eta,
            profile,
            report: meta.report,
            beta: meta.beta,
            residuals: meta.residuals,
            junction_radius: meta.junction_radius,
            precision_limited: meta.precision_limited,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Outcome {
    Undershoot,
    Overshoot,
}

#[derive(Debug, Clone, Copy)]
struct Shot {
    outcome: Outcome,
    /// First radius with `0 < P < MATCH_THRESHOLD · b` on a decreasing branch.
    below_threshold: Option<f64>,
}

struct Shooter {
    omega: f64,
    states: ConstantStates,
    rtol: f64,
}

enum Phase {
    Deviation,
    Direct,
}

/// What a trajectory run should do at grid nodes.
struct Sampling {
    step: f64,
    values: Vec<f64>,
    junction: Option<usize>,
    junction_slope: f64,
}

impl Shooter {
    fn new(omega: f64, tol: f64) -> Self {
        Shooter { omega, states: ConstantStates::new(omega), rtol: (tol / 100.0).max(1e-14) }
    }

    fn source(&self, p: f64) -> f64 {
        p * (p * p * (p * p - 1.0) + self.omega)
    }

    /// `−f(P)` for `P = p₊ − w`, exactly proportional to `w`.
    fn deviation_source(&self, w: f64) -> f64 {
        let p = self.states.upper - w;
        p * w * (2.0 * self.states.upper - w) * (p * p - self.states.lower_sq)
    }

    /// Integrate from the origin with `b = p₊ − η`. Without sampling the run
    /// continues until the trajectory classifies itself; with sampling it
    /// stops at the first node below the match threshold.
    fn run(&self, eta: f64, mut sampling: Option<&mut Sampling>) -> Shot {
        let p_plus = self.states.upper;
        let b = p_plus - eta;
        let threshold = MATCH_THRESHOLD * b;
        let r0 = START_RADIUS;
        let mut phase = if eta <= 0.5 * p_plus { Phase::Deviation } else { Phase::Direct };

        let mut state = match phase {
            Phase::Deviation => {
                let g0 = self.deviation_source(eta);
                [eta + g0 * r0 * r0 / 6.0, g0 * r0 / 3.0]
            }
            Phase::Direct => {
                let f0 = self.source(b);
                [b + f0 * r0 * r0 / 6.0, f0 * r0 / 3.0]
            }
        };
        let tol_for = |phase: &Phase| match phase {
            Phase::Deviation => Tolerance { rtol: self.rtol, atol: self.rtol * 1e-3 * eta },
            Phase::Direct => Tolerance { rtol: self.rtol, atol: self.rtol * 1e-3 * threshold },
        };
        let mut stepper = DormandPrince::new(r0, state, 1e-3, tol_for(&phase));

        if let Some(s) = sampling.as_deref_mut() {
            s.values.clear();
            s.values.push(b);
        }

        let deviation_rhs = |r: f64, y: &[f64; 2]| [y[1], self.deviation_source(y[0]) - 2.0 * y[1] / r];
        let direct_rhs = |r: f64, y: &[f64; 2]| [y[1], self.source(y[0]) - 2.0 * y[1] / r];

        let mut below_threshold = None;
        let mut outcome = None;
        let mut switch = false;
        let mut node = 1usize;

        loop {
            let target = match sampling.as_deref() {
                Some(s) => node as f64 * s.step,
                None => RADIUS_CAP,
            };
            if target > RADIUS_CAP {
                break;
            }
            if target > stepper.t {
                let result = match phase {
                    Phase::Deviation => stepper.advance(&deviation_rhs, target, |_, y| {
                        if y[1] < 0.0 {
                            outcome = Some(Outcome::Undershoot);
                            ControlFlow::Break(())
                        } else if y[0] >= 0.5 * p_plus {
                            switch = true;
                            ControlFlow::Break(())
                        } else {
                            ControlFlow::Continue(())
                        }
                    }),
                    Phase::Direct => stepper.advance(&direct_rhs, target, |r, y| {
                        if y[0] < 0.0 {
                            outcome = Some(Outcome::Overshoot);
                            ControlFlow::Break(())
                        } else if y[1] > 0.0 {
                            outcome = Some(Outcome::Undershoot);
                            ControlFlow::Break(())
                        } else {
                            if below_threshold.is_none() && y[0] < threshold {
                                below_threshold = Some(r);
                            }
                            ControlFlow::Continue(())
                        }
                    }),
                };
                if result.is_err() {
                    // a step size collapse only happens once the trajectory
                    // has run away; treat it like the matching event
                    outcome.get_or_insert(Outcome::Overshoot);
                }
            }
            if switch {
                switch = false;
                phase = Phase::Direct;
                state = [p_plus - stepper.y[0], -stepper.y[1]];
                let (t, h) = (stepper.t, stepper.h);
                stepper = DormandPrince::new(t, state, h, tol_for(&phase));
                continue;
            }
            if outcome.is_some() && sampling.is_none() {
                break;
            }
            match sampling.as_deref_mut() {
                Some(s) => {
                    if stepper.t < target {
                        // stopped early by an event before reaching the node
                        break;
                    }
                    let p = match phase {
                        Phase::Deviation => p_plus - stepper.y[0],
                        Phase::Direct => stepper.y[0],
                    };
                    s.values.push(p);
                    if matches!(phase, Phase::Direct) && p < threshold && p > 0.0 {
                        s.junction = Some(node);
                        s.junction_slope = stepper.y[1];
                        below_threshold.get_or_insert(target);
                        break;
                    }
                    node += 1;
                }
                None => break,
            }
        }

        let outcome = outcome.unwrap_or(match phase {
            // never left the plateau: b is too close to p₊
            Phase::Deviation => Outcome::Overshoot,
            Phase::Direct => Outcome::Undershoot,
        });
        Shot { outcome, below_threshold }
    }
}

/// Relative `L²(ℝ³)` residual of the ground-state equation on the profile grid.
pub fn stationarity_residual(profile: &RadialProfile, omega: f64) -> f64 {
    let u = profile.values();
    let n = u.len();
    let lap = profile.laplacian();
    let w = simpson_weights(n, profile.step());
    let norm = |g: &dyn Fn(usize) -> f64| pairwise_sum_by(0, n, |i| w[i] * g(i).powi(2)).sqrt();
    let residual = norm(&|i| -lap[i] + u[i].powi(5) - u[i].powi(3) + omega * u[i]);
    let scale = norm(&|i| lap[i]) + norm(&|i| u[i].powi(5)) + norm(&|i| u[i].powi(3)) + omega * norm(&|i| u[i]);
    if scale == 0.0 {
        0.0
    } else {
        residual / scale
    }
}

/// Multiplier (Nehari and Pohozaev-type) residuals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MultiplierResiduals {
    /// `|K + S − F + ωM| / (K + S + F + ωM)`.
    pub nehari: f64,
    /// `|F − 4ωM| / (F + 4ωM)`.
    pub pohozaev: f64,
    /// All integrals vanish; both residuals are reported as zero.
    pub degenerate: bool,
}

pub fn multiplier_residuals_of(report: &FunctionalReport, omega: f64) -> MultiplierResiduals {
    let FunctionalReport { mass, kinetic, quartic, sextic, .. } = *report;
    let scale_i = kinetic + sextic + quartic + omega * mass;
    let scale_ii = quartic + 4.0 * omega * mass;
    if scale_i == 0.0 || scale_ii == 0.0 {
        return MultiplierResiduals { nehari: 0.0, pohozaev: 0.0, degenerate: true };
    }
    MultiplierResiduals {
        nehari: (kinetic + sextic - quartic + omega * mass).abs() / scale_i,
        pohozaev: (quartic - 4.0 * omega * mass).abs() / scale_ii,
        degenerate: false,
    }
}

pub fn multiplier_residuals(rec: &SolitonRecord) -> MultiplierResiduals {
    multiplier_residuals_of(&rec.report, rec.omega)
}

pub fn beta_of(rec: &SolitonRecord) -> Result<f64> {
    rec.report
        .beta()
        .ok_or_else(|| Error::Degenerate("kinetic integral vanishes; β = S/K undefined".into()))
}

fn check_omega(omega: f64) -> Result<()> {
    if omega > 0.0 && omega < OMEGA_MAX {
        Ok(())
    } else {
        Err(Error::OutOfRange { omega })
    }
}

/// Default radial step: `0.01`, coarsened as `0.003/√ω` for wide profiles.
pub fn default_step(omega: f64) -> f64 {
    0.01f64.max(0.003 / omega.sqrt()).min(0.1)
}

/// Find the shooting parameter `η = p₊ − b` by bisection between overshoot
/// (small `η`) and undershoot (large `η`). Returns the undershoot-side end
/// and its shot; both ends agree to floating point resolution.
fn shoot(shooter: &Shooter) -> Result<(f64, Shot, f64, Shot)> {
    let omega = shooter.omega;
    let states = shooter.states;
    let mut hi = states.upper - states.zeta;
    let hi_shot = shooter.run(hi, None);
    if hi_shot.outcome != Outcome::Undershoot {
        return Err(Error::BracketFailure {
            omega,
            detail: format!("b = ζ = {} does not undershoot", states.zeta),
        });
    }
    let mut hi_shot = hi_shot;
    let mut lo = 1e-2 * hi;
    let mut lo_shot = shooter.run(lo, None);
    let mut expansions = 0;
    while lo_shot.outcome != Outcome::Overshoot {
        if expansions == BRACKET_EXPANSIONS {
            return Err(Error::BracketFailure {
                omega,
                detail: format!("no overshoot down to p₊ − b = {lo:e}"),
            });
        }
        hi = lo;
        hi_shot = lo_shot;
        lo *= BRACKET_FACTOR;
        lo_shot = shooter.run(lo, None);
        expansions += 1;
    }

    for _ in 0..2000 {
        let mid = if hi > 4.0 * lo { (lo * hi).sqrt() } else { 0.5 * (lo + hi) };
        if mid <= lo || mid >= hi {
            break;
        }
        let shot = shooter.run(mid, None);
        match shot.outcome {
            Outcome::Overshoot => {
                lo = mid;
                lo_shot = shot;
            }
            Outcome::Undershoot => {
                hi = mid;
                hi_shot = shot;
            }
        }
    }
    Ok((hi, hi_shot, lo, lo_shot))
}

fn build_record(shooter: &Shooter, eta: f64, junction_hint: f64, step: f64, tol: f64) -> Option<SolitonRecord> {
    let omega = shooter.omega;
    let kappa = omega.sqrt();
    let r_max = 30f64.max(12.0 / kappa).max(junction_hint + 10.0 / kappa);
    let mut n = (r_max / step).ceil() as usize + 1;
    if n % 2 == 0 {
        n += 1;
    }
    let h = r_max / (n - 1) as f64;
    let mut sampling = Sampling { step: h, values: Vec::with_capacity(n), junction: None, junction_slope: 0.0 };
    shooter.run(eta, Some(&mut sampling));
    let junction = sampling.junction?;
    let mut values = sampling.values;
    values.truncate(junction + 1);
    if junction + 1 > n {
        return None;
    }
    let r_j = junction as f64 * h;
    let (decaying, growing) = split_linear_modes(kappa, r_j, values[junction], sampling.junction_slope);
    // the growing mode is the shooting error; its regular form is smooth
    // down to the origin and negligible inside the core
    for i in 1..=junction {
        let r = i as f64 * h;
        values[i] -= growing * (kappa * r).sinh() / r;
    }
    values[0] -= growing * kappa;
    for i in junction + 1..n {
        let r = i as f64 * h;
        values.push(decaying * (-kappa * r).exp() / r);
    }
    let profile = RadialProfile::new(r_max, values).ok()?;
    let report = profile.functionals();
    let mult = multiplier_residuals_of(&report, omega);
    let residuals = Residuals {
        stationarity: stationarity_residual(&profile, omega),
        nehari: mult.nehari,
        pohozaev: mult.pohozaev,
    };
    let central = shooter.states.upper - eta;
    Some(SolitonRecord {
        omega,
        tol,
        central,
        eta,
        beta: report.sextic / report.kinetic,
        profile,
        report,
        residuals,
        junction_radius: r_j,
        precision_limited: false,
    })
}

/// Split `(P, P')` at radius `r` into `A e^{−κr}/r + B sinh(κr)/r`.
fn split_linear_modes(kappa: f64, r: f64, value: f64, slope: f64) -> (f64, f64) {
    let down = (-kappa * r).exp() / r;
    let up = (kappa * r).sinh() / r;
    let down_slope = -(kappa + 1.0 / r) * down;
    let up_slope = kappa * (kappa * r).cosh() / r - up / r;
    let det = down * up_slope - up * down_slope;
    let a = (value * up_slope - up * slope) / det;
    let b = (down * slope - value * down_slope) / det;
    (a, b)
}

/// Solve for `P_ω` with the default radial step.
pub fn solve_ground_state(omega: f64, tol: f64) -> Result<SolitonRecord> {
    solve_ground_state_with_step(omega, tol, default_step(omega))
}

/// Solve for `P_ω`, starting from radial step `step` and halving it (up to
/// twice) while the stationarity residual exceeds `tol`.
pub fn solve_ground_state_with_step(omega: f64, tol: f64, step: f64) -> Result<SolitonRecord> {
    check_omega(omega)?;
    if !(tol >= MIN_TOLERANCE) {
        return Err(Error::InvalidArgument(format!("tolerance must be at least {MIN_TOLERANCE:e}, got {tol:e}")));
    }
    let shooter = Shooter::new(omega, tol);
    let (hi, hi_shot, lo, lo_shot) = shoot(&shooter)?;

    let candidates = [(hi, hi_shot), (lo, lo_shot)];
    let mut best: Option<SolitonRecord> = None;
    for (eta, shot) in candidates {
        let Some(junction) = shot.below_threshold else { continue };
        let mut h = step;
        for _ in 0..=MAX_GRID_REFINEMENTS {
            let Some(rec) = build_record(&shooter, eta, junction, h, tol) else { break };
            if rec.meets_tolerance() {
                return Ok(rec);
            }
            let better = best
                .as_ref()
                .map_or(true, |b| rec.residuals.stationarity < b.residuals.stationarity);
            if better {
                best = Some(rec);
            }
            h *= 0.5;
        }
    }
    match best {
        Some(mut rec) => {
            rec.precision_limited = true;
            Err(Error::PrecisionLimit(Box::new(rec)))
        }
        None => Err(Error::BracketFailure {
            omega,
            detail: "bisection never resolved the profile down to the matching threshold".into(),
        }),
    }
}

/// Accept a record even when it only reached floating point resolution.
pub fn solve_ground_state_lenient(omega: f64, tol: f64) -> Result<SolitonRecord> {
    match solve_ground_state(omega, tol) {
        Err(Error::PrecisionLimit(rec)) => Ok(*rec),
        other => other,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BetaRoots {
    pub roots: Vec<f64>,
    pub min_beta: f64,
    pub max_beta: f64,
    /// Grid frequencies whose solve failed, with the error message.
    pub failures: Vec<(f64, String)>,
}

/// All `ω` on the grid where `β(ω) − target` changes sign, each refined by
/// bisection on fresh solves to relative width `xtol` in `ω`.
pub fn find_beta_roots(target: f64, omega_grid: &[f64], tol: f64, xtol: f64) -> Result<BetaRoots> {
    if !(target > 0.0) {
        return Err(Error::InvalidArgument(format!("target must be positive, got {target}")));
    }
    for &w in omega_grid {
        check_omega(w)?;
    }
    let samples: Vec<(f64, Result<f64>)> = omega_grid
        .par_iter()
        .map(|&w| (w, solve_ground_state_lenient(w, tol).and_then(|r| beta_of(&r))))
        .collect();
    let mut failures = Vec::new();
    let mut ok = Vec::new();
    for (w, res) in samples {
        match res {
            Ok(beta) => ok.push((w, beta)),
            Err(e) => failures.push((w, e.to_string())),
        }
    }
    ok.sort_by(|a, b| a.0.total_cmp(&b.0));
    let min_beta = ok.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
    let max_beta = ok.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);

    let brackets: Vec<(f64, f64)> = ok
        .windows(2)
        .filter(|w| (w[0].1 - target).signum() != (w[1].1 - target).signum())
        .map(|w| (w[0].0, w[1].0))
        .collect();
    let roots = brackets
        .par_iter()
        .map(|&(a, b)| {
            crate::numerics::bisect(
                |w| solve_ground_state_lenient(w, tol).map(|r| r.beta - target).unwrap_or(f64::NAN),
                a,
                b,
                xtol,
            )
            .unwrap_or(0.5 * (a + b))
        })
        .collect();
    Ok(BetaRoots { roots, min_beta, max_beta, failures })
}
