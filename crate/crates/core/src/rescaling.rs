//! Rescaled solitons `R_ω`, the two mass-energy curves, the landmark masses
//! `m₀, m₁, m₂`, the variational boundary `E^V_min` and classification of
//! points `(m, e)` of the mass-energy plane.
//!
//! ```text
//! R_ω(x) = a·P_ω(λx),   a = √((1+β)/(4β)),   λ = 3(1+β)/(4√(3β)),   β = S/K
//! ```
//!
//! Every `R_ω` has zero virial and `K = 3S`. `m₀` is the least mass on the
//! rescaled curve, `m₂` the mass where the soliton energy vanishes and `m₁`
//! the mass where the boundary of `R = {e < E^V_min(m)}` passes from the
//! rescaled curve to the soliton curve.

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{FunctionalReport, RadialProfile};
use crate::groundstate::{beta_of, find_beta_roots, solve_ground_state, SolitonCache, SolitonRecord, OMEGA_MAX};
use crate::numerics::{bisect, golden_min};

pub const DEFAULT_GRID_POINTS: usize = 200;
pub const DEFAULT_OMEGA_MIN: f64 = 1e-3;
pub const DEFAULT_OMEGA_MAX: f64 = OMEGA_MAX - 1e-3;

/// Relative width in `ω` for golden-section and bisection refinement.
pub const REFINE_XTOL: f64 = 1e-8;

/// Bound on `|V|/K` along the rescaled curve.
pub const CURVE_TOLERANCE: f64 = 1e-6;

/// Relative energy band treated as "on the boundary" by [`classify`].
pub const BOUNDARY_BAND: f64 = 1e-3;

/// Minima of `M(R_ω)` within this relative distance of `m₀` all belong to `Ω`.
const MINIMIZER_RTOL: f64 = 1e-7;

/// `n` logarithmically spaced frequencies on `[lo, hi]`.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n)
            .map(|i| {
                if i == 0 {
                    lo
                } else if i + 1 == n {
                    hi
                } else {
                    (lo.ln() + (hi.ln() - lo.ln()) * i as f64 / (n - 1) as f64).exp()
                }
            })
            .collect(),
    }
}

pub fn default_grid() -> Vec<f64> {
    log_grid(DEFAULT_OMEGA_MIN, DEFAULT_OMEGA_MAX, DEFAULT_GRID_POINTS)
}

/// `(a, λ)` of the zero-virial rescaling for a given `β`.
pub fn rescaling_parameters(beta: f64) -> Result<(f64, f64)> {
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(Error::Degenerate(format!("rescaling needs a finite positive β, got {beta}")));
    }
    let a = ((1.0 + beta) / (4.0 * beta)).sqrt();
    let lambda = 3.0 * (1.0 + beta) / (4.0 * (3.0 * beta).sqrt());
    Ok((a, lambda))
}

pub fn rescaled_soliton(rec: &SolitonRecord) -> Result<RadialProfile> {
    let (a, lambda) = rescaling_parameters(beta_of(rec)?)?;
    rec.profile.rescale(a, lambda)
}

/// `√3·(16/(9C))²`.
pub fn mass_from_constant(c: f64) -> f64 {
    3f64.sqrt() * (16.0 / (9.0 * c)).powi(2)
}

/// Solves ground states, optionally through an on-disk cache.
#[derive(Debug, Clone)]
pub struct Solver {
    pub tol: f64,
    pub cache: Option<SolitonCache>,
}

impl Solver {
    pub fn new(tol: f64) -> Self {
        Solver { tol, cache: None }
    }

    pub fn with_cache(tol: f64, cache: SolitonCache) -> Self {
        Solver { tol, cache: Some(cache) }
    }

    pub fn solve(&self, omega: f64) -> Result<SolitonRecord> {
        match &self.cache {
            Some(cache) => cache.get_or_solve(omega, self.tol).map(|(rec, _)| rec),
            None => solve_ground_state(omega, self.tol),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CurveKind {
    Soliton,
    Rescaled,
}

impl fmt::Display for CurveKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CurveKind::Soliton => "soliton",
            CurveKind::Rescaled => "rescaled",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveSample {
    pub omega: f64,
    pub mass: f64,
    pub energy: f64,
    /// `β(ω)` of the underlying soliton.
    pub beta: f64,
    pub kind: CurveKind,
    pub kinetic: f64,
    pub virial: f64,
}

impl CurveSample {
    fn from_report(omega: f64, beta: f64, kind: CurveKind, r: &FunctionalReport) -> Self {
        CurveSample { omega, mass: r.mass, energy: r.energy, beta, kind, kinetic: r.kinetic, virial: r.virial }
    }

    pub fn point(&self) -> (f64, f64) {
        (self.mass, self.energy)
    }

    /// `|V|/K`.
    pub fn relative_virial(&self) -> f64 {
        if self.kinetic > 0.0 {
            self.virial.abs() / self.kinetic
        } else {
            0.0
        }
    }
}

/// The soliton and rescaled samples for one solved record.
pub fn curve_samples(rec: &SolitonRecord) -> Result<(CurveSample, CurveSample)> {
    let beta = beta_of(rec)?;
    let rescaled = rescaled_soliton(rec)?.functionals();
    Ok((
        CurveSample::from_report(rec.omega, beta, CurveKind::Soliton, &rec.report),
        CurveSample::from_report(rec.omega, beta, CurveKind::Rescaled, &rescaled),
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveFailure {
    pub omega: f64,
    pub error: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TracedCurves {
    pub soliton: Vec<CurveSample>,
    pub rescaled: Vec<CurveSample>,
    pub failures: Vec<SolveFailure>,
}

impl TracedCurves {
    /// Largest `|V|/K` over the rescaled samples.
    pub fn max_rescaled_virial(&self) -> f64 {
        self.rescaled.iter().map(CurveSample::relative_virial).fold(0.0, f64::max)
    }

    fn insert(&mut self, soliton: CurveSample, rescaled: CurveSample) {
        for (curve, s) in [(&mut self.soliton, soliton), (&mut self.rescaled, rescaled)] {
            match curve.binary_search_by(|c| c.omega.total_cmp(&s.omega)) {
                Ok(_) => {}
                Err(pos) => curve.insert(pos, s),
            }
        }
    }
}

fn check_grid(grid: &[f64]) -> Result<Vec<f64>> {
    let mut omegas = grid.to_vec();
    for &w in &omegas {
        if !(w > 0.0 && w < OMEGA_MAX) {
            return Err(Error::OutOfRange { omega: w });
        }
    }
    omegas.sort_by(f64::total_cmp);
    omegas.dedup();
    Ok(omegas)
}

/// Solve at every grid frequency (in parallel) and emit both curves sorted by
/// `ω`. Failed solves are listed in `failures`.
pub fn trace_curves(grid: &[f64], solver: &Solver) -> Result<TracedCurves> {
    let omegas = check_grid(grid)?;
    let results: Vec<(f64, Result<(CurveSample, CurveSample)>)> = omegas
        .par_iter()
        .map(|&w| (w, solver.solve(w).and_then(|rec| curve_samples(&rec))))
        .collect();
    let mut curves = TracedCurves::default();
    for (omega, res) in results {
        match res {
            Ok((s, r)) => {
                curves.soliton.push(s);
                curves.rescaled.push(r);
            }
            Err(e) => curves.failures.push(SolveFailure { omega, error: e.to_string() }),
        }
    }
    Ok(curves)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Minimizer {
    pub omega: f64,
    pub mass: f64,
    pub energy: f64,
    pub beta: f64,
    /// The interpolation quotient of `R_ω`.
    pub constant: f64,
    /// `√3·(16/(9C))²` with `C` the quotient above.
    pub mass_from_constant: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct M0Result {
    pub m0: f64,
    /// Refined minimizers achieving `m₀` (the set `Ω`).
    pub minimizers: Vec<Minimizer>,
    /// Every refined local minimum of `M(R_ω)` along the grid.
    pub local_minima: Vec<Minimizer>,
    /// All roots of `β(ω) = 1` on the grid, independent of the minimization.
    pub beta_one_roots: Vec<f64>,
}

fn minimizer_at(solver: &Solver, omega: f64) -> Result<Minimizer> {
    let rec = solver.solve(omega)?;
    let (_, r) = curve_samples(&rec)?;
    let report = rescaled_soliton(&rec)?.functionals();
    let constant = report
        .gnh_quotient()
        .ok_or_else(|| Error::Degenerate("vanishing norm at the minimizer".into()))?;
    Ok(Minimizer {
        omega,
        mass: r.mass,
        energy: r.energy,
        beta: r.beta,
        constant,
        mass_from_constant: mass_from_constant(constant),
    })
}

/// Least mass on the rescaled curve. Every interior local minimum of the
/// sampled curve is refined by golden-section search on fresh solves.
pub fn find_m0(rescaled: &[CurveSample], solver: &Solver) -> Result<M0Result> {
    if rescaled.len() < 3 {
        return Err(Error::InsufficientGrid(format!(
            "locating m0 needs at least 3 rescaled samples, got {}",
            rescaled.len()
        )));
    }
    let masses: Vec<f64> = rescaled.iter().map(|s| s.mass).collect();
    let global = masses
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .expect("non-empty");
    if global == 0 || global + 1 == masses.len() {
        return Err(Error::MinimumAtGridEnd { omega: rescaled[global].omega });
    }
    let local: Vec<usize> = (1..masses.len() - 1)
        .filter(|&i| masses[i] <= masses[i - 1] && masses[i] <= masses[i + 1])
        .collect();
    let local_minima = local
        .par_iter()
        .map(|&i| {
            let (lo, hi) = (rescaled[i - 1].omega, rescaled[i + 1].omega);
            let mass = |w: f64| {
                solver
                    .solve(w)
                    .and_then(|rec| curve_samples(&rec))
                    .map(|(_, r)| r.mass)
                    .unwrap_or(f64::INFINITY)
            };
            let (omega, _) = golden_min(mass, lo, hi, REFINE_XTOL);
            minimizer_at(solver, omega)
        })
        .collect::<Result<Vec<_>>>()?;
    let m0 = local_minima.iter().map(|m| m.mass).fold(f64::INFINITY, f64::min);
    let minimizers = local_minima
        .iter()
        .filter(|m| m.mass <= m0 * (1.0 + MINIMIZER_RTOL))
        .copied()
        .collect();
    let omegas: Vec<f64> = rescaled.iter().map(|s| s.omega).collect();
    let beta_one_roots = find_beta_roots(1.0, &omegas, solver.tol, REFINE_XTOL)?.roots;
    Ok(M0Result { m0, minimizers, local_minima, beta_one_roots })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct M2Result {
    pub m2: f64,
    pub omega: f64,
    /// `E(P_ω)` at the returned root.
    pub energy: f64,
}

/// Mass where the soliton energy first changes sign along increasing `ω`,
/// refined by bisection on fresh solves.
pub fn find_m2(soliton: &[CurveSample], solver: &Solver) -> Result<M2Result> {
    let bracket = soliton
        .windows(2)
        .find(|w| w[0].energy.signum() != w[1].energy.signum())
        .ok_or_else(|| Error::NotBracketed("soliton energy keeps one sign along the grid".into()))?;
    let energy = |w: f64| solver.solve(w).map(|r| r.report.energy).unwrap_or(f64::NAN);
    let omega = bisect(energy, bracket[0].omega, bracket[1].omega, 1e-14)
        .ok_or_else(|| Error::NotBracketed("soliton energy sign change lost on re-solve".into()))?;
    let rec = solver.solve(omega)?;
    Ok(M2Result { m2: rec.report.mass, omega, energy: rec.report.energy })
}

/// A transversal crossing of two polylines.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegmentCrossing {
    pub point: (f64, f64),
    pub segment_a: usize,
    pub segment_b: usize,
    /// Position along the segments, in `[0, 1]`.
    pub t_a: f64,
    pub t_b: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PolylineIntersections {
    pub crossings: Vec<SegmentCrossing>,
    /// Set when some pair of segments overlaps collinearly.
    pub degenerate: bool,
}

fn cross(a: (f64, f64), b: (f64, f64)) -> f64 {
    a.0 * b.1 - a.1 * b.0
}

/// All transversal crossings between polylines `a` and `b`. Each crossing is
/// reported once even when it falls on a shared vertex.
pub fn polyline_intersections(a: &[(f64, f64)], b: &[(f64, f64)]) -> PolylineIntersections {
    let mut out = PolylineIntersections::default();
    let na = a.len().saturating_sub(1);
    let nb = b.len().saturating_sub(1);
    for i in 0..na {
        let p = a[i];
        let r = (a[i + 1].0 - p.0, a[i + 1].1 - p.1);
        let r_len = r.0.hypot(r.1);
        for j in 0..nb {
            let q = b[j];
            let s = (b[j + 1].0 - q.0, b[j + 1].1 - q.1);
            let s_len = s.0.hypot(s.1);
            let qp = (q.0 - p.0, q.1 - p.1);
            let denom = cross(r, s);
            let eps = 1e-12 * r_len * s_len;
            if denom.abs() <= eps {
                let collinear = cross(qp, r).abs() <= 1e-12 * r_len * (qp.0.hypot(qp.1) + r_len);
                if collinear && r_len > 0.0 {
                    let rr = r.0 * r.0 + r.1 * r.1;
                    let t0 = (qp.0 * r.0 + qp.1 * r.1) / rr;
                    let t1 = t0 + (s.0 * r.0 + s.1 * r.1) / rr;
                    let (lo, hi) = (t0.min(t1), t0.max(t1));
                    if hi > 0.0 && lo < 1.0 {
                        out.degenerate = true;
                    }
                }
                continue;
            }
            let t = cross(qp, s) / denom;
            let u = cross(qp, r) / denom;
            let t_ok = t >= 0.0 && (t < 1.0 || (i + 1 == na && t <= 1.0));
            let u_ok = u >= 0.0 && (u < 1.0 || (j + 1 == nb && u <= 1.0));
            if t_ok && u_ok {
                out.crossings.push(SegmentCrossing {
                    point: (p.0 + t * r.0, p.1 + t * r.1),
                    segment_a: i,
                    segment_b: j,
                    t_a: t,
                    t_b: u,
                });
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Crossing {
    pub mass: f64,
    pub energy: f64,
    pub soliton_omega: f64,
    pub rescaled_omega: f64,
    /// Crossing mass on curves re-solved at four times the grid density.
    pub refined_mass: Option<f64>,
    /// `|refined − mass| / mass`.
    pub displacement: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct M1Result {
    pub crossings: Vec<Crossing>,
    /// Whether crossings were re-located on refined curves.
    pub refined: bool,
    pub degenerate: bool,
    pub diagnostic: Option<String>,
}

impl M1Result {
    pub fn masses(&self) -> Vec<f64> {
        self.crossings.iter().map(|c| c.mass).collect()
    }

    /// Masses of crossings that persist on the locally refined curves (all
    /// crossings when no refinement was attempted).
    pub fn confirmed_masses(&self) -> Vec<f64> {
        self.crossings
            .iter()
            .filter(|c| !self.refined || c.displacement.is_some_and(|d| d < 5e-3))
            .map(|c| c.mass)
            .collect()
    }
}

fn lerp(a: f64, b: f64, t: f64) -> f64 {
    a + t * (b - a)
}

/// Crossings of the two polylines in the `(M, E)` plane. With a solver,
/// each crossing is re-located on both curves re-solved at four times the
/// local grid density.
pub fn find_m1(soliton: &[CurveSample], rescaled: &[CurveSample], solver: Option<&Solver>) -> Result<M1Result> {
    let a: Vec<(f64, f64)> = soliton.iter().map(CurveSample::point).collect();
    let b: Vec<(f64, f64)> = rescaled.iter().map(CurveSample::point).collect();
    let found = polyline_intersections(&a, &b);
    if found.degenerate {
        return Ok(M1Result {
            crossings: Vec::new(),
            refined: false,
            degenerate: true,
            diagnostic: Some("curves overlap along a segment; crossings are not transversal".into()),
        });
    }
    let crossings = found
        .crossings
        .par_iter()
        .map(|c| {
            let (si, ri) = (c.segment_a, c.segment_b);
            let mut crossing = Crossing {
                mass: c.point.0,
                energy: c.point.1,
                soliton_omega: lerp(soliton[si].omega, soliton[si + 1].omega, c.t_a),
                rescaled_omega: lerp(rescaled[ri].omega, rescaled[ri + 1].omega, c.t_b),
                refined_mass: None,
                displacement: None,
            };
            if let Some(solver) = solver {
                let refined = refine_crossing(solver, (soliton[si].omega, soliton[si + 1].omega), (
                    rescaled[ri].omega,
                    rescaled[ri + 1].omega,
                ));
                if let Ok(points) = refined {
                    if let Some(best) = points
                        .iter()
                        .min_by(|x, y| (x.0 - crossing.mass).abs().total_cmp(&(y.0 - crossing.mass).abs()))
                    {
                        crossing.refined_mass = Some(best.0);
                        crossing.displacement = Some((best.0 - crossing.mass).abs() / crossing.mass);
                    }
                }
            }
            crossing
        })
        .collect::<Vec<_>>();
    let diagnostic = crossings.is_empty().then(|| "the two curves do not cross on the traced grid".to_string());
    Ok(M1Result { crossings, refined: solver.is_some(), degenerate: false, diagnostic })
}

fn refine_crossing(solver: &Solver, soliton: (f64, f64), rescaled: (f64, f64)) -> Result<Vec<(f64, f64)>> {
    let sub = |(lo, hi): (f64, f64)| (0..=4).map(move |k| lerp(lo, hi, k as f64 / 4.0)).collect::<Vec<_>>();
    let sol = sub(soliton)
        .into_iter()
        .map(|w| solver.solve(w).and_then(|r| curve_samples(&r)).map(|(s, _)| s.point()))
        .collect::<Result<Vec<_>>>()?;
    let res = sub(rescaled)
        .into_iter()
        .map(|w| solver.solve(w).and_then(|r| curve_samples(&r)).map(|(_, r)| r.point()))
        .collect::<Result<Vec<_>>>()?;
    Ok(polyline_intersections(&sol, &res).crossings.iter().map(|c| c.point).collect())
}

/// `E^V_min(m)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EvMin {
    /// Below `m₀`, no nonzero state has zero virial.
    Infinite,
    Finite { energy: f64, curve: CurveKind },
}

impl EvMin {
    pub fn energy(&self) -> f64 {
        match self {
            EvMin::Infinite => f64::INFINITY,
            EvMin::Finite { energy, .. } => *energy,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Label {
    #[serde(rename = "inside_R")]
    InsideR,
    #[serde(rename = "boundary_rescaled")]
    BoundaryRescaled,
    #[serde(rename = "boundary_soliton")]
    BoundarySoliton,
    #[serde(rename = "outside_R")]
    OutsideR,
    #[serde(rename = "negative_energy")]
    NegativeEnergy,
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Label::InsideR => "inside_R",
            Label::BoundaryRescaled => "boundary_rescaled",
            Label::BoundarySoliton => "boundary_soliton",
            Label::OutsideR => "outside_R",
            Label::NegativeEnergy => "negative_energy",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub label: Label,
    /// `e − E^V_min(m)` where the bound is finite.
    pub energy_gap: Option<f64>,
    /// `m − m₀`.
    pub mass_gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapTolerances {
    pub solver_tol: f64,
    pub refine_xtol: f64,
    pub curve_tol: f64,
    pub boundary_band: f64,
    /// Allowed relative deviation of `27m₀²/(16m₂²)` from 1.
    pub landmark_ratio_tol: f64,
}

impl MapTolerances {
    pub fn new(solver_tol: f64) -> Self {
        MapTolerances {
            solver_tol,
            refine_xtol: REFINE_XTOL,
            curve_tol: CURVE_TOLERANCE,
            boundary_band: BOUNDARY_BAND,
            landmark_ratio_tol: 5e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridMeta {
    pub omega_min: f64,
    pub omega_max: f64,
    pub points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LandmarkCheck {
    pub name: String,
    pub value: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionMap {
    pub soliton_curve: Vec<CurveSample>,
    pub rescaled_curve: Vec<CurveSample>,
    pub m0: f64,
    /// Frequencies `Ω` of the minimizers achieving `m₀`.
    pub omega_set: Vec<f64>,
    pub m0_detail: M0Result,
    /// Crossing masses of the two curves confirmed under local refinement.
    pub m1_candidates: Vec<f64>,
    /// Mass where the lower envelope passes from the rescaled to the soliton
    /// curve, if it does on the traced range.
    pub m1: Option<f64>,
    pub m1_detail: M1Result,
    pub m2: f64,
    pub m2_detail: M2Result,
    pub min_soliton_mass: f64,
    /// `27m₀² / (16m₂²)`, equal to one in exact arithmetic.
    pub landmark_ratio: f64,
    pub tolerances: MapTolerances,
    pub grid: GridMeta,
    pub failures: Vec<SolveFailure>,
}

impl RegionMap {
    /// Trace both curves on `grid` and locate all landmarks.
    pub fn build(grid: &[f64], solver: &Solver) -> Result<RegionMap> {
        let omegas = check_grid(grid)?;
        if omegas.len() < 3 {
            return Err(Error::InsufficientGrid(format!(
                "landmark search needs a sweep of at least 3 frequencies, got {}",
                omegas.len()
            )));
        }
        let mut curves = trace_curves(&omegas, solver)?;
        let m0_detail = find_m0(&curves.rescaled, solver)?;
        let m2_detail = find_m2(&curves.soliton, solver)?;
        for w in m0_detail.minimizers.iter().map(|m| m.omega).chain([m2_detail.omega]) {
            let rec = solver.solve(w)?;
            let (s, r) = curve_samples(&rec)?;
            curves.insert(s, r);
        }
        let m1_detail = find_m1(&curves.soliton, &curves.rescaled, Some(solver))?;
        let m0 = m0_detail.m0;
        let m2 = m2_detail.m2;
        let min_soliton_mass = curves.soliton.iter().map(|s| s.mass).fold(f64::INFINITY, f64::min);
        let mut map = RegionMap {
            omega_set: m0_detail.minimizers.iter().map(|m| m.omega).collect(),
            m1_candidates: m1_detail.confirmed_masses(),
            m1: None,
            soliton_curve: curves.soliton,
            rescaled_curve: curves.rescaled,
            m0,
            m0_detail,
            m1_detail,
            m2,
            m2_detail,
            min_soliton_mass,
            landmark_ratio: 27.0 * m0 * m0 / (16.0 * m2 * m2),
            tolerances: MapTolerances::new(solver.tol),
            grid: GridMeta { omega_min: omegas[0], omega_max: omegas[omegas.len() - 1], points: omegas.len() },
            failures: curves.failures,
        };
        map.m1 = map.envelope_switch();
        Ok(map)
    }

    /// Largest mass covered by either curve.
    pub fn max_mass(&self) -> f64 {
        self.soliton_curve.iter().chain(&self.rescaled_curve).map(|s| s.mass).fold(0.0, f64::max)
    }

    /// Lowest energy at mass `m` over all segments of both curves.
    fn envelope(&self, m: f64) -> Option<(f64, CurveKind)> {
        let mut best: Option<(f64, CurveKind)> = None;
        for curve in [&self.rescaled_curve, &self.soliton_curve] {
            for w in curve.windows(2) {
                let (lo, hi) = (w[0].mass.min(w[1].mass), w[0].mass.max(w[1].mass));
                if m < lo || m > hi {
                    continue;
                }
                let e = if hi == lo {
                    w[0].energy.min(w[1].energy)
                } else {
                    lerp(w[0].energy, w[1].energy, (m - w[0].mass) / (w[1].mass - w[0].mass))
                };
                if best.map_or(true, |(b, _)| e < b) {
                    best = Some((e, w[0].kind));
                }
            }
        }
        best
    }

    fn envelope_switch(&self) -> Option<f64> {
        let mut candidates = self.m1_candidates.clone();
        candidates.sort_by(f64::total_cmp);
        candidates.into_iter().find(|&m| {
            let d = 1e-6 * m;
            matches!(
                (self.envelope(m - d), self.envelope(m + d)),
                (Some((_, CurveKind::Rescaled)), Some((_, CurveKind::Soliton)))
            )
        })
    }

    /// Mass intervals where the sampled envelope increases, as `(m, m')` pairs.
    pub fn envelope_violations(&self) -> Vec<(f64, f64)> {
        let mut masses: Vec<f64> = self
            .soliton_curve
            .iter()
            .chain(&self.rescaled_curve)
            .map(|s| s.mass)
            .filter(|&m| m >= self.m0)
            .collect();
        masses.sort_by(f64::total_cmp);
        let values: Vec<(f64, f64)> =
            masses.iter().filter_map(|&m| self.envelope(m).map(|(e, _)| (m, e))).collect();
        values
            .windows(2)
            .filter(|w| w[1].1 > w[0].1 + 1e-9 * w[0].1.abs().max(1.0))
            .map(|w| (w[0].0, w[1].0))
            .collect()
    }

    pub fn landmark_checks(&self) -> Vec<LandmarkCheck> {
        let ratio_dev = (self.landmark_ratio - 1.0).abs();
        let max_virial = self.rescaled_curve.iter().map(CurveSample::relative_virial).fold(0.0, f64::max);
        let worst_beta = self.m0_detail.minimizers.iter().map(|m| (m.beta - 1.0).abs()).fold(0.0, f64::max);
        let worst_c = self
            .m0_detail
            .minimizers
            .iter()
            .map(|m| (m.mass_from_constant - self.m0).abs() / self.m0)
            .fold(0.0, f64::max);
        vec![
            LandmarkCheck {
                name: "|27 m0^2 / (16 m2^2) - 1|".into(),
                value: ratio_dev,
                passed: ratio_dev <= self.tolerances.landmark_ratio_tol,
            },
            LandmarkCheck {
                name: "m0 / min soliton mass".into(),
                value: self.m0 / self.min_soliton_mass,
                passed: self.m0 < self.min_soliton_mass,
            },
            LandmarkCheck { name: "m2 / m0".into(), value: self.m2 / self.m0, passed: self.m2 > self.m0 },
            LandmarkCheck {
                name: "max |beta - 1| over minimizers".into(),
                value: worst_beta,
                passed: !self.omega_set.is_empty() && worst_beta <= 1e-4,
            },
            LandmarkCheck {
                name: "max relative m0 mismatch against constant formula".into(),
                value: worst_c,
                passed: worst_c <= 5e-3,
            },
            LandmarkCheck {
                name: "max |V|/K on rescaled curve".into(),
                value: max_virial,
                passed: max_virial <= self.tolerances.curve_tol,
            },
            LandmarkCheck {
                name: "envelope increases".into(),
                value: self.envelope_violations().len() as f64,
                passed: self.envelope_violations().is_empty(),
            },
        ]
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Both curves as CSV with columns `omega,M,E,beta,kind`.
    pub fn curves_csv(&self) -> String {
        curves_csv(self.soliton_curve.iter().chain(&self.rescaled_curve))
    }
}

/// Samples as CSV with columns `omega,M,E,beta,kind`, 17 significant digits.
pub fn curves_csv<'a>(samples: impl IntoIterator<Item = &'a CurveSample>) -> String {
    let mut out = String::from("omega,M,E,beta,kind\n");
    for s in samples {
        out.push_str(&format!("{:.16e},{:.16e},{:.16e},{:.16e},{}\n", s.omega, s.mass, s.energy, s.beta, s.kind));
    }
    out
}

pub fn ev_min(m: f64, map: &RegionMap) -> Result<EvMin> {
    if m < map.m0 {
        return Ok(EvMin::Infinite);
    }
    let hi = map.max_mass();
    if m > hi {
        return Err(Error::OutsideTracedRange { value: m, lo: map.m0, hi });
    }
    // between m₀ and the nearest sampled mass the minimizer is the endpoint
    let (energy, curve) = map.envelope(m).or_else(|| map.envelope(m.max(map.m0) * (1.0 + 1e-12))).ok_or(
        Error::OutsideTracedRange { value: m, lo: map.m0, hi },
    )?;
    Ok(EvMin::Finite { energy, curve })
}

pub fn classify(m: f64, e: f64, map: &RegionMap) -> Classification {
    let mass_gap = m - map.m0;
    if e < 0.0 {
        return Classification { label: Label::NegativeEnergy, energy_gap: None, mass_gap };
    }
    let (energy, curve) = match ev_min(m, map) {
        Ok(EvMin::Infinite) => return Classification { label: Label::InsideR, energy_gap: None, mass_gap },
        Ok(EvMin::Finite { energy, curve }) => (energy, curve),
        // the envelope keeps decreasing past the traced range and is already
        // negative there, so non-negative energies lie outside
        Err(_) => return Classification { label: Label::OutsideR, energy_gap: None, mass_gap },
    };
    let gap = e - energy;
    let band = map.tolerances.boundary_band * energy.abs().max(e.abs()).max(f64::MIN_POSITIVE);
    let label = if gap.abs() <= band {
        match curve {
            CurveKind::Rescaled => Label::BoundaryRescaled,
            CurveKind::Soliton => Label::BoundarySoliton,
        }
    } else if gap < 0.0 {
        Label::InsideR
    } else {
        Label::OutsideR
    };
    Classification { label, energy_gap: Some(gap), mass_gap }
}
