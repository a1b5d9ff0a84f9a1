//! Direct minimization of `E` over `{M(u) = m, V(u) = 0}` on radial fields,
//! and property checks of the interpolation inequalities.
//!
//! The radial discretization used by the flow has no spurious grid modes:
//!
//! ```text
//! M, F, S:  trapezoid rule on 4πr²·g(u)          (nodes r_i = i·h)
//! K:        Σ 4π r_{i+½}² h · (G u)_{i+½}²       (midpoints)
//! (G u)_{i+½} = (u_{i−1} − 27u_i + 27u_{i+1} − u_{i+2}) / (24h)
//! ```
//!
//! with even reflection at the origin and zero beyond the last node. Both
//! rules act on even integrands, for which they converge faster than any
//! power of `h`, apart from the fourth-order derivative stencil.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fft3::Fft3;
use crate::fields::{ComplexField, FunctionalReport, Functionals, RadialProfile};
use crate::numerics::{bisect, pairwise_sum, pairwise_sum_by};
use crate::random_fields::random_field;

const FOUR_PI: f64 = 4.0 * std::f64::consts::PI;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinimizerConfig {
    pub nodes: usize,
    /// Radius of the working grid.
    pub r_max: f64,
    /// Plateau parameters `w` of the starting shapes
    /// `(1 + e^{−w²/2}) / (1 + e^{(ρ² − w²)/2})`, `ρ = r/ℓ`.
    pub widths: Vec<f64>,
    /// Length unit `ℓ` of the starting shapes.
    pub start_scale: f64,
    /// Stop once an accepted step lowers `E` by less than this, relatively.
    pub energy_tol: f64,
    pub max_iterations: usize,
    pub max_halvings: usize,
    /// Iteration cap for the feasibility phase.
    pub restoration_iterations: usize,
}

impl Default for MinimizerConfig {
    fn default() -> Self {
        MinimizerConfig {
            nodes: 2001,
            r_max: 150.0,
            widths: vec![0.0, 1.0, 2.0, 3.0, 4.0],
            start_scale: 3.0,
            energy_tol: 1e-13,
            max_iterations: 20_000,
            max_halvings: 30,
            restoration_iterations: 20_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinimizationResult {
    pub m: f64,
    pub e_min: f64,
    pub minimizer: RadialProfile,
    pub iterations: usize,
    /// `|M − m| / m`.
    pub mass_residual: f64,
    /// `|V| / K`.
    pub virial_residual: f64,
    pub converged: bool,
    pub start_width: f64,
    /// Energies reached from every feasible start.
    pub start_energies: Vec<(f64, f64)>,
}

/// Oracle functionals of a radial node vector with spacing `h`.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Integrals {
    mass: f64,
    kinetic: f64,
    quartic: f64,
    sextic: f64,
}

impl Integrals {
    fn energy(&self) -> f64 {
        self.kinetic / 2.0 + self.sextic / 6.0 - self.quartic / 4.0
    }

    fn virial(&self) -> f64 {
        self.kinetic + self.sextic - 0.75 * self.quartic
    }

    fn report(&self) -> FunctionalReport {
        FunctionalReport::from_integrals(self.mass, self.kinetic, self.quartic, self.sextic)
    }
}

fn trapezoid_weights(n: usize, h: f64) -> Vec<f64> {
    (0..n)
        .map(|i| {
            let r = i as f64 * h;
            let end = if i + 1 == n { 0.5 } else { 1.0 };
            FOUR_PI * r * r * h * end
        })
        .collect()
}

fn node(u: &[f64], j: isize) -> f64 {
    if j < 0 {
        u[j.unsigned_abs()]
    } else {
        u.get(j as usize).copied().unwrap_or(0.0)
    }
}

/// Staggered derivative at the `n − 1` midpoints.
fn staggered_derivative(u: &[f64], h: f64) -> Vec<f64> {
    let c = 1.0 / (24.0 * h);
    (0..u.len() - 1)
        .map(|i| {
            let i = i as isize;
            c * (node(u, i - 1) - 27.0 * node(u, i) + 27.0 * node(u, i + 1) - node(u, i + 2))
        })
        .collect()
}

/// `Gᵀ v` for the staggered derivative.
fn staggered_transpose(v: &[f64], n: usize, h: f64) -> Vec<f64> {
    let c = 1.0 / (24.0 * h);
    let mut out = vec![0.0; n];
    let mut add = |j: isize, x: f64| {
        let j = j.unsigned_abs();
        if j < n {
            out[j] += x;
        }
    };
    for (i, &vi) in v.iter().enumerate() {
        let i = i as isize;
        add(i - 1, c * vi);
        add(i, -27.0 * c * vi);
        add(i + 1, 27.0 * c * vi);
        add(i + 2, -c * vi);
    }
    out
}

fn midpoint_weights(n: usize, h: f64) -> Vec<f64> {
    (0..n - 1)
        .map(|i| {
            let r = (i as f64 + 0.5) * h;
            FOUR_PI * r * r * h
        })
        .collect()
}

fn integrals(u: &[f64], h: f64) -> Integrals {
    let n = u.len();
    let w = trapezoid_weights(n, h);
    let c = midpoint_weights(n, h);
    let du = staggered_derivative(u, h);
    Integrals {
        mass: pairwise_sum_by(0, n, |i| w[i] * u[i] * u[i]),
        kinetic: pairwise_sum_by(0, n - 1, |i| c[i] * du[i] * du[i]),
        quartic: pairwise_sum_by(0, n, |i| w[i] * u[i].powi(4)),
        sextic: pairwise_sum_by(0, n, |i| w[i] * u[i].powi(6)),
    }
}

/// Gradients of `M, K, F, S` with respect to the node values.
struct Gradients {
    mass: Vec<f64>,
    kinetic: Vec<f64>,
    quartic: Vec<f64>,
    sextic: Vec<f64>,
}

fn gradients(u: &[f64], h: f64) -> Gradients {
    let n = u.len();
    let w = trapezoid_weights(n, h);
    let c = midpoint_weights(n, h);
    let du = staggered_derivative(u, h);
    let weighted: Vec<f64> = du.iter().zip(&c).map(|(d, c)| 2.0 * c * d).collect();
    Gradients {
        mass: (0..n).map(|i| 2.0 * w[i] * u[i]).collect(),
        kinetic: staggered_transpose(&weighted, n, h),
        quartic: (0..n).map(|i| 4.0 * w[i] * u[i].powi(3)).collect(),
        sextic: (0..n).map(|i| 6.0 * w[i] * u[i].powi(5)).collect(),
    }
}

/// Gradient of `E` with respect to the node values of `u` on spacing `h`.
pub fn energy_gradient(u: &[f64], h: f64) -> Vec<f64> {
    let g = gradients(u, h);
    (0..u.len()).map(|i| 0.5 * g.kinetic[i] + g.sextic[i] / 6.0 - 0.25 * g.quartic[i]).collect()
}

/// Energy of `u` in the oracle discretization.
pub fn oracle_energy(u: &[f64], h: f64) -> f64 {
    integrals(u, h).energy()
}

/// Oracle functionals of a radial profile.
pub fn oracle_functionals(u: &RadialProfile) -> FunctionalReport {
    integrals(u.values(), u.step()).report()
}

/// Cholesky factor of a symmetric positive definite band matrix, stored by
/// rows as `l[i][k] = L[i][i − p + k]`.
struct BandCholesky {
    n: usize,
    p: usize,
    l: Vec<f64>,
}

impl BandCholesky {
    /// `a(i, j)` is queried for `j ∈ [i − p, i]` only.
    fn factor(n: usize, p: usize, a: impl Fn(usize, usize) -> f64) -> Result<Self> {
        let mut l = vec![0.0; n * (p + 1)];
        let at = |l: &[f64], i: usize, j: usize| l[i * (p + 1) + p + j - i];
        for i in 0..n {
            for j in i.saturating_sub(p)..=i {
                let mut s = a(i, j);
                for k in i.saturating_sub(p).max(j.saturating_sub(p))..j {
                    s -= at(&l, i, k) * at(&l, j, k);
                }
                let value = if i == j {
                    if s <= 0.0 {
                        return Err(Error::Degenerate(format!("preconditioner is not positive definite at row {i}")));
                    }
                    s.sqrt()
                } else {
                    s / at(&l, j, j)
                };
                l[i * (p + 1) + p + j - i] = value;
            }
        }
        Ok(BandCholesky { n, p, l })
    }

    fn solve(&self, b: &[f64]) -> Vec<f64> {
        let (n, p) = (self.n, self.p);
        let at = |i: usize, j: usize| self.l[i * (p + 1) + p + j - i];
        let mut y = b.to_vec();
        for i in 0..n {
            let mut s = y[i];
            for k in i.saturating_sub(p)..i {
                s -= at(i, k) * y[k];
            }
            y[i] = s / at(i, i);
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in i + 1..(i + p + 1).min(n) {
                s -= at(k, i) * y[k];
            }
            y[i] = s / at(i, i);
        }
        y
    }
}

/// H¹ Riesz map `(T + GᵀCG)⁻¹` on a grid of `n` nodes with spacing `h`.
struct Preconditioner {
    chol: BandCholesky,
    n: usize,
    h: f64,
}

impl Preconditioner {
    fn new(n: usize, h: f64) -> Result<Self> {
        // assemble the band of T + GᵀCG column by column from unit vectors
        let p = 3;
        let mut band = vec![[0.0; 4]; n];
        let w = trapezoid_weights(n, h);
        let c = midpoint_weights(n, h);
        for j in 0..n {
            let lo = j.saturating_sub(p + 2);
            let hi = (j + p + 3).min(n);
            let mut e = vec![0.0; hi - lo];
            e[j - lo] = 1.0;
            let mut full = vec![0.0; n];
            full[lo..hi].copy_from_slice(&e);
            let g = staggered_derivative(&full, h);
            let cg: Vec<f64> = g.iter().zip(&c).map(|(g, c)| c * g).collect();
            let column = staggered_transpose(&cg, n, h);
            for (i, row) in band.iter_mut().enumerate().take((j + p + 1).min(n)).skip(j) {
                row[p - (i - j)] += column[i];
            }
            band[j][p] += w[j];
        }
        let chol = BandCholesky::factor(n, p, |i, j| band[i][p - (i - j)])?;
        Ok(Preconditioner { chol, n, h })
    }

    fn apply(&self, g: &[f64]) -> Vec<f64> {
        self.chol.solve(g)
    }

    /// `⟨a, b⟩_A` for `A = T + GᵀCG`.
    fn inner(&self, a: &[f64], b: &[f64]) -> f64 {
        let w = trapezoid_weights(self.n, self.h);
        let c = midpoint_weights(self.n, self.h);
        let (da, db) = (staggered_derivative(a, self.h), staggered_derivative(b, self.h));
        pairwise_sum_by(0, self.n, |i| w[i] * a[i] * b[i]) + pairwise_sum_by(0, self.n - 1, |i| c[i] * da[i] * db[i])
    }
}

/// Smallest positive root of `K + λ⁴S − (3/4)λF`, the dilation `λ` for which
/// `λ^{3/2}u(λx)` has zero virial. `None` when no root exists.
pub fn virial_dilation(kinetic: f64, quartic: f64, sextic: f64) -> Option<f64> {
    if !(kinetic > 0.0 && quartic > 0.0 && sextic > 0.0) {
        return None;
    }
    let g = |l: f64| kinetic + l.powi(4) * sextic - 0.75 * l * quartic;
    let critical = (3.0 * quartic / (16.0 * sextic)).cbrt();
    if g(critical) > 0.0 {
        return None;
    }
    bisect(g, 0.0, critical, 1e-15)
}

/// `256√3/81`: the fold state of a shape with quotient `Q` has mass `k/Q²`.
const FOLD_MASS_FACTOR: f64 = 256.0 * 1.732_050_807_568_877_2 / 81.0;

/// Mass of the fold state of a shape with these integrals.
pub fn fold_mass(report: &FunctionalReport) -> Option<f64> {
    report.gnh_quotient().map(|q| FOLD_MASS_FACTOR / (q * q))
}

/// The unique `a·λ^{3/2}·u(λx)` with `V = 0` and `K = 3S`, returned as node
/// values on spacing `h/λ`.
fn fold_state(u: &[f64], h: f64) -> Option<(Vec<f64>, f64, Integrals)> {
    let it = integrals(u, h);
    if !(it.kinetic > 0.0 && it.quartic > 0.0 && it.sextic > 0.0) {
        return None;
    }
    // with p = aλ: K = 3S needs p⁴ = K/(3S), and then V = 0 needs a·p = 16K/(9F)
    let p = (it.kinetic / (3.0 * it.sextic)).powf(0.25);
    let a = 16.0 * it.kinetic / (9.0 * it.quartic * p);
    let lambda = p / a;
    let amp = a * lambda.powf(1.5);
    let values: Vec<f64> = u.iter().map(|v| amp * v).collect();
    let h = h / lambda;
    let it = integrals(&values, h);
    Some((values, h, it))
}

/// Resample onto `nodes` points of `[0, r_max]`, zero beyond the old grid.
fn resample(u: &[f64], h: f64, nodes: usize, r_max: f64) -> Result<Vec<f64>> {
    let profile = RadialProfile::new(h * (u.len() - 1) as f64, u.to_vec())?;
    let it = profile.interpolant();
    let step = r_max / (nodes - 1) as f64;
    Ok((0..nodes).map(|i| it.eval(i as f64 * step)).collect())
}

/// `log F − ½ log M − ¾ log K − ¼ log S`, the log of the scale-invariant
/// quotient, and its gradient.
fn log_quotient(u: &[f64], h: f64) -> (f64, Vec<f64>) {
    let it = integrals(u, h);
    let g = gradients(u, h);
    let value = log_quotient_value(&it);
    let grad = (0..u.len())
        .map(|i| {
            g.quartic[i] / it.quartic
                - 0.5 * g.mass[i] / it.mass
                - 0.75 * g.kinetic[i] / it.kinetic
                - 0.25 * g.sextic[i] / it.sextic
        })
        .collect();
    (value, grad)
}

fn log_quotient_value(it: &Integrals) -> f64 {
    it.quartic.ln() - 0.5 * it.mass.ln() - 0.75 * it.kinetic.ln() - 0.25 * it.sextic.ln()
}

/// Log-quotient whose fold state has mass `m`.
fn quotient_target(m: f64) -> f64 {
    0.5 * (FOLD_MASS_FACTOR / m).ln()
}

/// Move `u` along the Riesz gradient of the log-quotient until it hits
/// `target`. `None` when the quotient cannot be raised that far.
fn retract(u: Vec<f64>, h: f64, target: f64, iterations: usize, pre: &Preconditioner) -> Option<Vec<f64>> {
    const TOL: f64 = 1e-14;
    let mut u = u;
    for _ in 0..iterations {
        let (c, grad) = log_quotient(&u, h);
        let err = c - target;
        if !err.is_finite() {
            return None;
        }
        if err.abs() <= TOL {
            return Some(u);
        }
        let dir = pre.apply(&grad);
        let slope: f64 = pairwise_sum_by(0, u.len(), |i| grad[i] * dir[i]);
        if !(slope > 0.0) {
            return None;
        }
        let mut t = -err / slope;
        let mut improved = false;
        for _ in 0..30 {
            let trial: Vec<f64> = u.iter().zip(&dir).map(|(v, d)| v + t * d).collect();
            let ct = log_quotient_value(&integrals(&trial, h));
            if (ct - target).abs() < err.abs() {
                u = trial;
                improved = true;
                break;
            }
            t *= 0.5;
        }
        if !improved {
            return None;
        }
    }
    None
}

/// Fold state of `u`, resampled onto the working grid (and re-retracted)
/// until its spacing is within a factor 1.25 of the working spacing.
fn fold_on_working_grid(
    u: Vec<f64>,
    h: f64,
    target: f64,
    cfg: &MinimizerConfig,
    pre: &Preconditioner,
) -> Result<Option<(Vec<f64>, f64, Integrals)>> {
    let h_work = cfg.r_max / (cfg.nodes - 1) as f64;
    let (mut values, mut step) = (u, h);
    for _ in 0..8 {
        let Some((v, hn, it)) = fold_state(&values, step) else { return Ok(None) };
        if (0.8..=1.25).contains(&(hn / h_work)) {
            return Ok(Some((v, hn, it)));
        }
        let resampled = resample(&v, hn, cfg.nodes, cfg.r_max)?;
        let Some(r) = retract(resampled, h_work, target, cfg.restoration_iterations, pre) else { return Ok(None) };
        values = r;
        step = h_work;
    }
    Ok(None)
}

fn start_shape(width: f64, cfg: &MinimizerConfig) -> Vec<f64> {
    let h = cfg.r_max / (cfg.nodes - 1) as f64;
    let norm = 1.0 + (-width * width / 2.0).exp();
    (0..cfg.nodes)
        .map(|i| {
            let rho = i as f64 * h / cfg.start_scale;
            let x = (rho * rho - width * width) / 2.0;
            if x > 700.0 {
                0.0
            } else {
                norm / (1.0 + x.exp())
            }
        })
        .collect()
}

struct Descent {
    values: Vec<f64>,
    h: f64,
    integrals: Integrals,
    iterations: usize,
    converged: bool,
}

fn descend(width: f64, m: f64, cfg: &MinimizerConfig, pre: &Preconditioner) -> Result<Option<Descent>> {
    let h_work = cfg.r_max / (cfg.nodes - 1) as f64;
    let target = quotient_target(m);
    let Some(start) = retract(start_shape(width, cfg), h_work, target, cfg.restoration_iterations, pre) else {
        return Ok(None);
    };
    let Some((mut u, mut h, mut it)) = fold_on_working_grid(start, h_work, target, cfg, pre)? else {
        return Ok(None);
    };
    let mut energy = it.energy();
    let mut step = 1.0;
    let mut converged = false;
    let mut iterations = 0;
    while iterations < cfg.max_iterations {
        iterations += 1;
        // descend log E_fold = (3/2) log K − (1/2) log S along the level set
        // of the quotient
        let g = gradients(&u, h);
        let grad_f: Vec<f64> =
            (0..u.len()).map(|i| 1.5 * g.kinetic[i] / it.kinetic - 0.5 * g.sextic[i] / it.sextic).collect();
        let (_, grad_c) = log_quotient(&u, h);
        let mut dir = pre.apply(&grad_f);
        let normal = pre.apply(&grad_c);
        let c = pre.inner(&normal, &dir) / pre.inner(&normal, &normal);
        dir.iter_mut().zip(&normal).for_each(|(x, y)| *x -= c * y);
        let mut accepted = None;
        for _ in 0..=cfg.max_halvings {
            let trial: Vec<f64> = u.iter().zip(&dir).map(|(v, d)| v - step * d).collect();
            if let Some(r) = retract(trial, h, target, 50, pre) {
                if let Some((v, hn, itn)) = fold_on_working_grid(r, h, target, cfg, pre)? {
                    let e = itn.energy();
                    if e < energy {
                        accepted = Some((v, hn, itn, e));
                        break;
                    }
                }
            }
            step *= 0.5;
        }
        let Some((v, hn, itn, e)) = accepted else {
            converged = true;
            break;
        };
        let decrease = energy - e;
        u = v;
        h = hn;
        it = itn;
        energy = e;
        if decrease < cfg.energy_tol * energy.abs() {
            converged = true;
            break;
        }
        step = (step * 2.0).min(1e6);
    }
    if u[0] < 0.0 {
        u.iter_mut().for_each(|v| *v = -*v);
    }
    Ok(Some(Descent { values: u, h, integrals: it, iterations, converged }))
}

/// Minimize `E` over radial `u` with `M(u) = m`, `V(u) = 0`.
///
/// Along a dilation orbit `dE/dλ = V/λ` and `dV/dλ = 2K + 6S − (9/4)F`, so a
/// constrained minimizer is either a critical point of `E` at fixed mass or
/// satisfies `K = 3S`. This routine searches the second family: every shape
/// has exactly one rescaling with `V = 0` and `K = 3S` (its fold state), of
/// energy `K^{3/2}/(9√(3S))` and mass `(256√3/81)/Q²` with
/// `Q = F/(M^{1/2}K^{3/4}S^{1/4})`. The flow lowers the fold energy on the
/// level set of `Q` fixed by `m`. When no start reaches that level the mass is
/// reported infeasible.
pub fn minimize_e_on_constraints(m: f64, cfg: &MinimizerConfig) -> Result<MinimizationResult> {
    if !(m > 0.0 && m.is_finite()) {
        return Err(Error::InvalidArgument(format!("mass must be positive, got {m}")));
    }
    if cfg.nodes < 64 || cfg.widths.is_empty() || !(cfg.r_max > 0.0) {
        return Err(Error::InvalidArgument("minimizer needs at least 64 nodes, a positive radius and a start".into()));
    }
    let pre = Preconditioner::new(cfg.nodes, cfg.r_max / (cfg.nodes - 1) as f64)?;
    let runs: Vec<(f64, Option<Descent>)> = cfg
        .widths
        .par_iter()
        .map(|&w| descend(w, m, cfg, &pre).map(|d| (w, d)))
        .collect::<Result<_>>()?;
    let start_energies: Vec<(f64, f64)> =
        runs.iter().filter_map(|(w, d)| d.as_ref().map(|d| (*w, d.integrals.energy()))).collect();
    let Some((width, best)) = runs
        .into_iter()
        .filter_map(|(w, d)| d.map(|d| (w, d)))
        .min_by(|a, b| a.1.integrals.energy().total_cmp(&b.1.integrals.energy()))
    else {
        return Err(Error::InfeasibleAtMass { mass: m });
    };
    let it = best.integrals;
    let r_max = best.h * (best.values.len() - 1) as f64;
    Ok(MinimizationResult {
        m,
        e_min: it.energy(),
        minimizer: RadialProfile::new(r_max, best.values)?,
        iterations: best.iterations,
        mass_residual: (it.mass - m).abs() / m,
        virial_residual: it.virial().abs() / it.kinetic,
        converged: best.converged,
        start_width: width,
        start_energies,
    })
}

/// `‖a − b‖_{H¹}` for radial profiles, with `b` resampled onto the grid of
/// `a` (and zero beyond its own radius).
pub fn radial_h1_distance(a: &RadialProfile, b: &RadialProfile) -> Result<f64> {
    let resampled = resample(b.values(), b.step(), a.len(), a.r_max())?;
    let diff: Vec<f64> = a.values().iter().zip(&resampled).map(|(x, y)| x - y).collect();
    Ok(radial_h1_norm(&RadialProfile::new(a.r_max(), diff)?))
}

pub fn radial_h1_norm(u: &RadialProfile) -> f64 {
    let it = integrals(u.values(), u.step());
    (it.mass + it.kinetic).sqrt()
}

/// `√(M/m₀)·(K + S) − (3/4)F`; non-negative for every field when `m₀` is
/// not over-estimated.
pub fn gnh_slack(report: &FunctionalReport, m0: f64) -> f64 {
    (report.mass / m0).sqrt() * (report.kinetic + report.sextic) - 0.75 * report.quartic
}

pub fn check_gnh<T: Functionals + ?Sized>(u: &T, m0: f64) -> f64 {
    gnh_slack(&u.functionals(), m0)
}

/// `‖u‖⁴_{L⁴} / (‖u‖_{L²} ‖∇u‖^{3/2}_{L²} ‖u‖^{3/2}_{L⁶})`.
pub fn gnh_prime_quotient<T: Functionals + ?Sized>(u: &T) -> Result<f64> {
    u.functionals()
        .gnh_quotient()
        .ok_or_else(|| Error::InvalidArgument("quotient undefined for a field with a vanishing norm".into()))
}

/// The optimal constant `C` for which `m₀ = √3·(16/(9C))²`.
pub fn constant_from_mass(m0: f64) -> f64 {
    16.0 / (9.0 * (m0 / 3f64.sqrt()).sqrt())
}

/// `(3/4)(a^{4/3} + b⁴) − 3^{1/4}·a·b`, zero iff `a^{4/3} = 3b⁴`.
pub fn young_gap(a: f64, b: f64) -> Result<f64> {
    if !(a >= 0.0 && b >= 0.0) {
        return Err(Error::InvalidArgument(format!("arguments must be non-negative, got ({a}, {b})")));
    }
    Ok(0.75 * (a.powf(4.0 / 3.0) + b.powi(4)) - 3f64.powf(0.25) * a * b)
}

/// `V − [2E − (3/64)M]`.
pub fn virial_lower_bound_gap<T: Functionals + ?Sized>(u: &T) -> f64 {
    let r = u.functionals();
    lower_bound_gap(&r)
}

fn lower_bound_gap(r: &FunctionalReport) -> f64 {
    r.virial - (2.0 * r.energy - 3.0 / 64.0 * r.mass)
}

/// `V = 2E − (3/64)M + (1/3)∫|u|²(|u|² − 3/8)² + (1/3)∫|u|⁶`, with each term
/// integrated separately.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VirialDecomposition {
    pub virial: f64,
    /// `2E − (3/64)M`.
    pub lower_bound: f64,
    /// `(1/3)∫|u|²(|u|² − 3/8)²`.
    pub well_term: f64,
    /// `(1/3)∫|u|⁶`.
    pub sextic_term: f64,
    /// `V − lower_bound`.
    pub gap: f64,
    /// `|lower_bound + well_term + sextic_term − V| / (K + S + (3/4)F)`.
    pub relative_error: f64,
}

pub fn virial_decomposition_of(u: &ComplexField, report: &FunctionalReport) -> VirialDecomposition {
    let well_term = u.integrate_density(|p| p * (p - 0.375).powi(2)) / 3.0;
    let sextic_term = u.integrate_density(|p| p * p * p) / 3.0;
    decomposition(report, well_term, sextic_term)
}

pub fn virial_decomposition(u: &ComplexField) -> VirialDecomposition {
    virial_decomposition_of(u, &u.functionals())
}

fn decomposition(report: &FunctionalReport, well_term: f64, sextic_term: f64) -> VirialDecomposition {
    let lower_bound = 2.0 * report.energy - 3.0 / 64.0 * report.mass;
    let scale = report.kinetic + report.sextic + 0.75 * report.quartic;
    let rebuilt = pairwise_sum(&[lower_bound, well_term, sextic_term]);
    VirialDecomposition {
        virial: report.virial,
        lower_bound,
        well_term,
        sextic_term,
        gap: lower_bound_gap(report),
        relative_error: if scale > 0.0 { (rebuilt - report.virial).abs() / scale } else { 0.0 },
    }
}

/// Checks on one random field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldCheck {
    pub index: u64,
    pub report: FunctionalReport,
    pub gnh_slack: f64,
    /// `gnh_slack / (K + S)`.
    pub relative_slack: f64,
    pub quotient: f64,
    pub decomposition: VirialDecomposition,
    /// `gap / (K + S + M)`.
    pub relative_gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteConfig {
    pub seed: u64,
    pub count: u64,
    pub length: f64,
    pub n: usize,
    pub m0: f64,
    pub gnh_tolerance: f64,
    pub virial_tolerance: f64,
}

impl SuiteConfig {
    pub fn new(seed: u64, count: u64, m0: f64) -> Self {
        SuiteConfig { seed, count, length: 40.0, n: 128, m0, gnh_tolerance: 1e-6, virial_tolerance: 1e-10 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub config: SuiteConfig,
    pub c_opt: f64,
    pub min_relative_slack: f64,
    pub max_quotient_ratio: f64,
    pub min_relative_gap: f64,
    pub max_decomposition_error: f64,
    /// Indices with slack below `−gnh_tolerance·(K + S)`.
    pub gnh_violations: Vec<u64>,
    /// Indices with gap below `−virial_tolerance·(K + S + M)`.
    pub virial_violations: Vec<u64>,
    /// Indices whose quotient exceeds `C·(1 + gnh_tolerance)`.
    pub quotient_violations: Vec<u64>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.gnh_violations.is_empty()
            && self.virial_violations.is_empty()
            && self.quotient_violations.is_empty()
            && self.max_decomposition_error <= self.config.virial_tolerance
    }
}

pub fn check_field(index: u64, u: &ComplexField, fft: &mut Fft3, m0: f64) -> FieldCheck {
    let report = u.functionals_with(fft);
    let slack = gnh_slack(&report, m0);
    let decomposition = virial_decomposition_of(u, &report);
    FieldCheck {
        index,
        report,
        gnh_slack: slack,
        relative_slack: slack / (report.kinetic + report.sextic),
        quotient: report.gnh_quotient().unwrap_or(0.0),
        relative_gap: decomposition.gap / (report.kinetic + report.sextic + report.mass),
        decomposition,
    }
}

/// Evaluate the inequality checks on `count` seeded random mixtures.
pub fn run_suite(cfg: &SuiteConfig) -> Result<(SuiteReport, Vec<FieldCheck>)> {
    if !(cfg.m0 > 0.0) {
        return Err(Error::InvalidArgument(format!("m0 must be positive, got {}", cfg.m0)));
    }
    let checks: Vec<FieldCheck> = (0..cfg.count)
        .into_par_iter()
        .map_init(
            || Fft3::new(cfg.n),
            |fft, index| {
                let u = random_field(cfg.seed, index, cfg.length, cfg.n)?;
                Ok(check_field(index, &u, fft, cfg.m0))
            },
        )
        .collect::<Result<_>>()?;
    let c_opt = constant_from_mass(cfg.m0);
    let fold = |f: fn(&FieldCheck) -> f64, init: f64, pick: fn(f64, f64) -> f64| checks.iter().map(f).fold(init, pick);
    let report = SuiteReport {
        config: cfg.clone(),
        c_opt,
        min_relative_slack: fold(|c| c.relative_slack, f64::INFINITY, f64::min),
        max_quotient_ratio: checks.iter().map(|c| c.quotient / c_opt).fold(0.0, f64::max),
        min_relative_gap: fold(|c| c.relative_gap, f64::INFINITY, f64::min),
        max_decomposition_error: fold(|c| c.decomposition.relative_error, 0.0, f64::max),
        gnh_violations: checks.iter().filter(|c| c.relative_slack < -cfg.gnh_tolerance).map(|c| c.index).collect(),
        virial_violations: checks.iter().filter(|c| c.relative_gap < -cfg.virial_tolerance).map(|c| c.index).collect(),
        quotient_violations: checks
            .iter()
            .filter(|c| c.quotient > c_opt * (1.0 + cfg.gnh_tolerance))
            .map(|c| c.index)
            .collect(),
    };
    Ok((report, checks))
}
