//! Strang split-step evolution of `i∂ₜu + Δu = −|u|²u + |u|⁴u` on the periodic
//! box, with conservation, virial and modulation diagnostics.
//!
//! One step is `N(dt/2) ∘ L(dt) ∘ N(dt/2)` where
//!
//! ```text
//! N(τ): u ↦ e^{iτ(|u|² − |u|⁴)} u        (|u| is invariant)
//! L(τ): û_k ↦ e^{−i|k|²τ} û_k
//! ```
//!
//! Consecutive nonlinear half steps are merged unless the field is needed at
//! the step boundary.

use std::f64::consts::PI;
use std::path::PathBuf;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fft3::{wavenumbers, Fft3};
use crate::fields::io::write_field;
use crate::fields::{embed, h1_inner_spectral, ComplexField, FunctionalReport};
use crate::groundstate::SolitonRecord;
use crate::numerics::{pairwise_sum, pairwise_sum_by};
use crate::rescaling::rescaled_soliton;

/// Default boundary-mass alarm threshold.
pub const BOUNDARY_THRESHOLD: f64 = 1e-6;

/// Thickness of the monitored shell as a fraction of the half side.
pub const BOUNDARY_SHELL: f64 = 0.1;

/// Steps of the sub-lattice pattern search in [`modulation_distance`].
const PATTERN_STEPS: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    Strang,
}

/// Response to the boundary-mass alarm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlarmPolicy {
    /// Stop with [`Error::BoundaryContamination`].
    Halt,
    /// Keep evolving but stop recording the x-weighted virial action.
    Flag,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvolutionConfig {
    pub dt: f64,
    /// Horizon `T`.
    pub t_end: f64,
    pub scheme: Scheme,
    /// Steps between recorded trace rows.
    pub cadence: usize,
    /// Fraction of the mass in the boundary shell that halts the run.
    pub boundary_threshold: f64,
    pub alarm: AlarmPolicy,
    /// Drop the nonlinearity (free Schrödinger flow).
    pub linear_only: bool,
    /// Record the virial action one step either side of each trace row, for
    /// the centered estimate of `dA/dt`.
    pub action_rate: bool,
    /// Write the field as `.cqf` every this many steps.
    pub checkpoint_every: Option<usize>,
    pub checkpoint_dir: Option<PathBuf>,
}

impl EvolutionConfig {
    pub fn new(dt: f64, t_end: f64) -> Self {
        EvolutionConfig {
            dt,
            t_end,
            scheme: Scheme::Strang,
            cadence: 10,
            boundary_threshold: BOUNDARY_THRESHOLD,
            alarm: AlarmPolicy::Halt,
            linear_only: false,
            action_rate: false,
            checkpoint_every: None,
            checkpoint_dir: None,
        }
    }

    fn steps(&self) -> Result<usize> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidArgument(format!("time step must be positive, got {}", self.dt)));
        }
        if !(self.t_end >= self.dt) {
            return Err(Error::InvalidArgument(format!("horizon {} shorter than the step {}", self.t_end, self.dt)));
        }
        if !(self.boundary_threshold > 0.0 && self.boundary_threshold <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "boundary threshold must lie in (0, 1], got {}",
                self.boundary_threshold
            )));
        }
        if self.cadence == 0 {
            return Err(Error::InvalidArgument("cadence must be at least one step".into()));
        }
        let steps = (self.t_end / self.dt).round();
        if (steps * self.dt - self.t_end).abs() > 1e-9 * self.t_end {
            return Err(Error::InvalidArgument(format!(
                "horizon {} is not a whole number of steps of {}",
                self.t_end, self.dt
            )));
        }
        Ok(steps as usize)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub t: f64,
    pub mass: f64,
    pub energy: f64,
    pub virial: f64,
    /// `A = (1/2) Im ∫ ū x·∇u`; absent once the boundary alarm has fired.
    pub action: Option<f64>,
    /// `(A(t+dt) − A(t−dt)) / 2dt` when recorded.
    pub action_rate: Option<f64>,
    /// `‖u‖⁴_{L⁴}`.
    pub l4: f64,
    pub rho: Option<f64>,
    /// `∫₀ᵗ ‖u(s)‖¹⁰_{L¹⁰} ds`.
    pub s10: f64,
    pub boundary_fraction: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvolutionTrace {
    pub dt: f64,
    pub rows: Vec<TraceRow>,
}

impl EvolutionTrace {
    pub const CSV_HEADER: &'static str = "t,M,E,V,A,L4,rho,S10,boundary_fraction";

    pub fn times(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.t).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("{}\n", Self::CSV_HEADER);
        for r in &self.rows {
            let opt = |v: Option<f64>| v.map(|v| format!("{v:.16e}")).unwrap_or_default();
            out.push_str(&format!(
                "{:.16e},{:.16e},{:.16e},{:.16e},{},{:.16e},{},{:.16e},{:.16e}\n",
                r.t, r.mass, r.energy, r.virial, opt(r.action), r.l4, opt(r.rho), r.s10, r.boundary_fraction
            ));
        }
        out
    }

    /// `max_t |M(t) − M(0)| / M(0)`.
    pub fn mass_drift(&self) -> f64 {
        relative_drift(self.rows.iter().map(|r| r.mass))
    }

    /// `max_t |E(t) − E(0)| / |E(0)|`.
    pub fn energy_drift(&self) -> f64 {
        relative_drift(self.rows.iter().map(|r| r.energy))
    }

    /// First recorded time with the boundary alarm raised.
    pub fn alarm_time(&self, threshold: f64) -> Option<f64> {
        self.rows.iter().find(|r| r.boundary_fraction > threshold).map(|r| r.t)
    }

    /// Largest `|dA/dt − V| / |V|` over rows carrying a rate estimate.
    pub fn virial_identity_error(&self) -> Option<f64> {
        self.rows
            .iter()
            .filter_map(|r| r.action_rate.map(|rate| (rate - r.virial).abs() / r.virial.abs()))
            .reduce(f64::max)
    }

    /// Trapezoid rule for `∫ V dt` over the recorded rows.
    pub fn integrated_virial(&self) -> f64 {
        trapezoid(&self.rows.iter().map(|r| (r.t, r.virial)).collect::<Vec<_>>())
    }
}

fn relative_drift(values: impl Iterator<Item = f64>) -> f64 {
    let values: Vec<f64> = values.collect();
    let Some(&first) = values.first() else { return 0.0 };
    let worst = values.iter().map(|v| (v - first).abs()).fold(0.0, f64::max);
    if first == 0.0 {
        worst
    } else {
        worst / first.abs()
    }
}

fn trapezoid(points: &[(f64, f64)]) -> f64 {
    let terms: Vec<f64> = points.windows(2).map(|w| 0.5 * (w[1].0 - w[0].0) * (w[0].1 + w[1].1)).collect();
    pairwise_sum(&terms)
}

/// Spectral machinery shared by the stepper and the diagnostics.
struct Spectral {
    n: usize,
    length: f64,
    fft: Fft3,
    k: Vec<f64>,
    /// Wavenumbers with the Nyquist mode zeroed, for first derivatives.
    k_odd: Vec<f64>,
    /// Per-axis flag: coordinate lies in the boundary shell.
    shell: Vec<bool>,
}

impl Spectral {
    fn new(n: usize, length: f64) -> Self {
        let k = wavenumbers(n, length);
        let mut k_odd = k.clone();
        k_odd[n / 2] = 0.0;
        let h = length / n as f64;
        let edge = (1.0 - BOUNDARY_SHELL) * 0.5 * length;
        let shell = (0..n).map(|i| (-0.5 * length + i as f64 * h).abs() >= edge).collect();
        Spectral { n, length, fft: Fft3::new(n), k, k_odd, shell }
    }

    fn k2(&self, idx: usize) -> f64 {
        let n = self.n;
        let (i, j, l) = (idx / (n * n), (idx / n) % n, idx % n);
        self.k[i] * self.k[i] + self.k[j] * self.k[j] + self.k[l] * self.k[l]
    }

    fn cell(&self) -> f64 {
        (self.length / self.n as f64).powi(3)
    }

    fn report(&mut self, u: &[Complex64]) -> (FunctionalReport, Vec<Complex64>) {
        let mut hat = u.to_vec();
        self.fft.forward(&mut hat);
        let kinetic = ComplexField::spectral_quadratic(&hat, self.n, self.length, |k2| k2);
        let cell = self.cell();
        let mass = cell * pairwise_sum_by(0, u.len(), |i| u[i].norm_sqr());
        let quartic = cell * pairwise_sum_by(0, u.len(), |i| u[i].norm_sqr().powi(2));
        let sextic = cell * pairwise_sum_by(0, u.len(), |i| u[i].norm_sqr().powi(3));
        (FunctionalReport::from_integrals(mass, kinetic, quartic, sextic), hat)
    }

    /// `(1/2) Im ∫ ū x·∇u` from the spectrum of `u`.
    fn action(&mut self, u: &[Complex64], hat: &[Complex64]) -> f64 {
        let n = self.n;
        let h = self.length / n as f64;
        let coord: Vec<f64> = (0..n).map(|i| -0.5 * self.length + i as f64 * h).collect();
        let mut density = vec![0.0; u.len()];
        for axis in 0..3 {
            let mut du = hat.to_vec();
            for (idx, v) in du.iter_mut().enumerate() {
                let m = [idx / (n * n), (idx / n) % n, idx % n][axis];
                *v *= Complex64::new(0.0, self.k_odd[m]);
            }
            self.fft.inverse(&mut du);
            for (idx, d) in density.iter_mut().enumerate() {
                let m = [idx / (n * n), (idx / n) % n, idx % n][axis];
                *d += coord[m] * (u[idx].conj() * du[idx]).im;
            }
        }
        0.5 * self.cell() * pairwise_sum(&density)
    }

    /// `(‖u‖¹⁰_{L¹⁰}, boundary-shell mass fraction)`.
    fn moduli(&self, u: &[Complex64]) -> (f64, f64) {
        let n = self.n;
        let in_shell = |idx: usize| self.shell[idx / (n * n)] || self.shell[(idx / n) % n] || self.shell[idx % n];
        let l10 = self.cell() * pairwise_sum_by(0, u.len(), |i| u[i].norm_sqr().powi(5));
        let total = pairwise_sum_by(0, u.len(), |i| u[i].norm_sqr());
        let outer = pairwise_sum_by(0, u.len(), |i| if in_shell(i) { u[i].norm_sqr() } else { 0.0 });
        let fraction = if total > 0.0 { outer / total } else { 0.0 };
        (l10, fraction)
    }
}

fn nonlinear_phase(u: &mut [Complex64], tau: f64) {
    for v in u.iter_mut() {
        let p = v.norm_sqr();
        let (s, c) = (tau * (p - p * p)).sin_cos();
        *v *= Complex64::new(c, s);
    }
}

/// Virial action `A[u] = (1/2) Im ∫ ū (x·∇u)` with spectral gradient.
pub fn virial_action(u: &ComplexField) -> f64 {
    let mut sp = Spectral::new(u.n(), u.length());
    let mut hat = u.values().to_vec();
    sp.fft.forward(&mut hat);
    sp.action(u.values(), &hat)
}

/// Fraction of the mass of `u` in the outer shell of the box.
pub fn boundary_fraction(u: &ComplexField) -> f64 {
    Spectral::new(u.n(), u.length()).moduli(u.values()).1
}

/// Evolve `u0` over `[0, T]`. A boundary-shell mass fraction above the
/// threshold either halts the run with [`Error::BoundaryContamination`],
/// carrying the trace and field up to the halt, or (with
/// [`AlarmPolicy::Flag`]) drops the virial action from later rows.
pub fn evolve(u0: &ComplexField, cfg: &EvolutionConfig) -> Result<(ComplexField, EvolutionTrace)> {
    evolve_with_reference(u0, cfg, None)
}

/// As [`evolve`], also recording the modulation distance to `reference` at
/// every trace row.
pub fn evolve_with_reference(
    u0: &ComplexField,
    cfg: &EvolutionConfig,
    reference: Option<&ModulationReference>,
) -> Result<(ComplexField, EvolutionTrace)> {
    let steps = cfg.steps()?;
    let (n, length) = (u0.n(), u0.length());
    if let Some(r) = reference {
        r.check_grid(n, length)?;
    }
    let dt = cfg.dt;
    let mut sp = Spectral::new(n, length);
    let propagator: Vec<Complex64> =
        (0..n * n * n).map(|idx| Complex64::from_polar(1.0, -sp.k2(idx) * dt)).collect();
    let nonlinear = !cfg.linear_only;
    let mut u = u0.values().to_vec();
    let mut trace = EvolutionTrace { dt, rows: Vec::new() };

    let needs_field = |s: usize| {
        s == steps
            || s % cfg.cadence == 0
            || (cfg.action_rate && (s % cfg.cadence == 1 || (s + 1) % cfg.cadence == 0))
            || cfg.checkpoint_every.is_some_and(|c| s % c == 0)
    };
    let mut pending_action: Option<(usize, f64)> = None;
    let mut previous_action: Option<f64> = None;

    let (mut l10, fraction) = sp.moduli(&u);
    let mut s10 = 0.0;
    let halt = |trace: EvolutionTrace, u: Vec<Complex64>, time: f64, fraction: f64| -> Result<_> {
        Err(Error::BoundaryContamination {
            time,
            fraction,
            trace: Box::new(trace),
            field: Box::new(ComplexField::new(length, n, u)?),
        })
    };

    let record = |sp: &mut Spectral,
                      trace: &mut EvolutionTrace,
                      u: &[Complex64],
                      s: usize,
                      s10: f64,
                      fraction: f64,
                      pending: &mut Option<(usize, f64)>,
                      previous: &mut Option<f64>,
                      alarmed: bool|
     -> Result<()> {
        let row_due = s % cfg.cadence == 0 || s == steps;
        let probe = cfg.action_rate && (s % cfg.cadence == 1 || (s + 1) % cfg.cadence == 0);
        if !row_due && !probe {
            return Ok(());
        }
        if alarmed {
            pending.take();
            previous.take();
            if !row_due {
                return Ok(());
            }
        }
        let (report, hat) = sp.report(u);
        let action = (!alarmed).then(|| sp.action(u, &hat));
        if let (Some((row, before)), Some(after)) = (pending.take(), action) {
            if s % cfg.cadence == 1 {
                trace.rows[row].action_rate = Some((after - before) / (2.0 * dt));
            }
        }
        if row_due {
            let rho = match reference {
                Some(r) => Some(r.distance_spectral(&hat)?.rho),
                None => None,
            };
            trace.rows.push(TraceRow {
                t: s as f64 * dt,
                mass: report.mass,
                energy: report.energy,
                virial: report.virial,
                action,
                action_rate: None,
                l4: report.quartic,
                rho,
                s10,
                boundary_fraction: fraction,
            });
            if cfg.action_rate && s > 0 {
                if let Some(before) = previous.take() {
                    *pending = Some((trace.rows.len() - 1, before));
                }
            }
        }
        if probe && (s + 1) % cfg.cadence == 0 {
            *previous = action;
        }
        Ok(())
    };

    let mut alarmed = fraction > cfg.boundary_threshold;
    if alarmed && cfg.alarm == AlarmPolicy::Halt {
        return halt(trace, u, 0.0, fraction);
    }
    record(&mut sp, &mut trace, &u, 0, s10, fraction, &mut pending_action, &mut previous_action, alarmed)?;
    if nonlinear {
        nonlinear_phase(&mut u, 0.5 * dt);
    }
    for s in 1..=steps {
        sp.fft.forward(&mut u);
        for (v, p) in u.iter_mut().zip(&propagator) {
            *v *= p;
        }
        sp.fft.inverse(&mut u);
        // |u| is the same before and after the nonlinear phase
        let (next_l10, fraction) = sp.moduli(&u);
        s10 += 0.5 * dt * (l10 + next_l10);
        l10 = next_l10;
        if !u.iter().all(|v| v.re.is_finite() && v.im.is_finite()) {
            return Err(Error::NonFinite);
        }
        alarmed |= fraction > cfg.boundary_threshold;
        if alarmed && cfg.alarm == AlarmPolicy::Halt {
            if nonlinear {
                nonlinear_phase(&mut u, 0.5 * dt);
            }
            return halt(trace, u, s as f64 * dt, fraction);
        }
        if needs_field(s) {
            if nonlinear {
                nonlinear_phase(&mut u, 0.5 * dt);
            }
            record(&mut sp, &mut trace, &u, s, s10, fraction, &mut pending_action, &mut previous_action, alarmed)?;
            if let (Some(every), Some(dir)) = (cfg.checkpoint_every, &cfg.checkpoint_dir) {
                if s % every == 0 {
                    let field = ComplexField::new(length, n, u.clone())?;
                    write_field(&dir.join(format!("checkpoint_{s:08}.cqf")), &field)?;
                }
            }
            if nonlinear && s < steps {
                nonlinear_phase(&mut u, 0.5 * dt);
            }
        } else if nonlinear {
            nonlinear_phase(&mut u, dt);
        }
    }
    Ok((ComplexField::new(length, n, u)?, trace))
}

/// `u(−t) = conj(evolve(conj(u0), t))`.
pub fn evolve_backward(u0: &ComplexField, cfg: &EvolutionConfig) -> Result<(ComplexField, EvolutionTrace)> {
    let (u, mut trace) = evolve(&u0.conj(), cfg)?;
    for r in &mut trace.rows {
        r.t = -r.t;
        r.action = r.action.map(|a| -a);
    }
    trace.rows.reverse();
    Ok((u.conj(), trace))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntegratedVirial {
    /// Trapezoid value of `∫ V dt` over `[−T, T]`.
    pub value: f64,
    pub forward: f64,
    pub backward: f64,
    /// The data were real, so the backward half was obtained by symmetry.
    pub time_symmetric: bool,
}

/// `∫_{−T}^{T} V(u(t)) dt` with `T = cfg.t_end`, by evolving forward and (via
/// conjugation) backward from `u0`. For real data the two halves coincide and
/// only one run is made.
pub fn integrated_virial(u0: &ComplexField, cfg: &EvolutionConfig) -> Result<IntegratedVirial> {
    let (_, fwd) = evolve(u0, cfg)?;
    let forward = fwd.integrated_virial();
    let real = u0.values().iter().all(|v| v.im == 0.0);
    let backward = if real {
        forward
    } else {
        evolve(&u0.conj(), cfg)?.1.integrated_virial()
    };
    Ok(IntegratedVirial { value: forward + backward, forward, backward, time_symmetric: real })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Modulation {
    pub rho: f64,
    /// Translation `c` minimizing the distance.
    pub shift: [f64; 3],
    /// Phase `θ` minimizing the distance.
    pub phase: f64,
}

/// `R_ω` on a fixed lattice, prepared for repeated modulation distances.
#[derive(Debug, Clone)]
pub struct ModulationReference {
    n: usize,
    length: f64,
    hat: Vec<Complex64>,
    norm2: f64,
}

impl ModulationReference {
    /// Embed `R_ω` of `rec` on the lattice `(length, n)`.
    pub fn from_record(rec: &SolitonRecord, length: f64, n: usize) -> Result<Self> {
        Ok(Self::from_field(&embed(&rescaled_soliton(rec)?, length, n)?))
    }

    pub fn from_field(r: &ComplexField) -> Self {
        let mut fft = Fft3::new(r.n());
        let hat = r.spectrum(&mut fft);
        let norm2 = h1_inner_spectral(&hat, &hat, r.n(), r.length()).re;
        ModulationReference { n: r.n(), length: r.length(), hat, norm2 }
    }

    pub fn h1_norm(&self) -> f64 {
        self.norm2.sqrt()
    }

    fn check_grid(&self, n: usize, length: f64) -> Result<()> {
        if n == self.n && length == self.length {
            Ok(())
        } else {
            Err(Error::GridMismatch(format!(
                "reference on (L = {}, N = {}), field on (L = {length}, N = {n})",
                self.length, self.n
            )))
        }
    }

    pub fn distance(&self, u: &ComplexField) -> Result<Modulation> {
        self.check_grid(u.n(), u.length())?;
        let mut fft = Fft3::new(u.n());
        self.distance_spectral(&u.spectrum(&mut fft))
    }

    /// Modulation distance from the unnormalized spectrum of `u`.
    fn distance_spectral(&self, u_hat: &[Complex64]) -> Result<Modulation> {
        let (n, length) = (self.n, self.length);
        let h = length / n as f64;
        let k = wavenumbers(n, length);
        let weight = |idx: usize| {
            let (i, j, l) = (idx / (n * n), (idx / n) % n, idx % n);
            1.0 + k[i] * k[i] + k[j] * k[j] + k[l] * k[l]
        };
        let scale = h.powi(3) / (n * n * n) as f64;
        // X_k = w_k conj(R̂_k) û_k; ⟨R(·−c), u⟩ = scale Σ X_k e^{ik·c}
        let cross: Vec<Complex64> =
            (0..u_hat.len()).map(|idx| weight(idx) * self.hat[idx].conj() * u_hat[idx]).collect();
        let mut corr = cross.clone();
        Fft3::new(n).inverse(&mut corr);
        let best = corr
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.norm().total_cmp(&b.1.norm()))
            .map(|(i, _)| i)
            .unwrap_or(0);
        let wrap = |m: usize| if m < n / 2 { m as f64 } else { m as f64 - n as f64 };
        let mut c = [wrap(best / (n * n)) * h, wrap((best / n) % n) * h, wrap(best % n) * h];

        let overlap = |c: &[f64; 3]| {
            let phases: Vec<Vec<Complex64>> =
                c.iter().map(|&ci| k.iter().map(|&kk| Complex64::from_polar(1.0, kk * ci)).collect()).collect();
            let re = pairwise_sum_by(0, cross.len(), |idx| {
                let (i, j, l) = (idx / (n * n), (idx / n) % n, idx % n);
                (cross[idx] * phases[0][i] * phases[1][j] * phases[2][l]).re
            });
            let im = pairwise_sum_by(0, cross.len(), |idx| {
                let (i, j, l) = (idx / (n * n), (idx / n) % n, idx % n);
                (cross[idx] * phases[0][i] * phases[1][j] * phases[2][l]).im
            });
            Complex64::new(re, im) * scale
        };
        let mut z = overlap(&c);
        let mut step = 0.5 * h;
        for _ in 0..PATTERN_STEPS {
            let mut moved = false;
            for axis in 0..3 {
                for sign in [1.0, -1.0] {
                    let mut trial = c;
                    trial[axis] += sign * step;
                    let zt = overlap(&trial);
                    if zt.norm() > z.norm() {
                        c = trial;
                        z = zt;
                        moved = true;
                    }
                }
            }
            if !moved {
                step *= 0.5;
            }
        }
        let theta = z.arg();
        // evaluate the distance directly; ‖u‖² + ‖R‖² − 2|z| cancels badly
        let rot = Complex64::from_polar(1.0, theta);
        let phases: Vec<Vec<Complex64>> =
            c.iter().map(|&ci| k.iter().map(|&kk| Complex64::from_polar(1.0, -kk * ci)).collect()).collect();
        let dist2 = scale
            * pairwise_sum_by(0, u_hat.len(), |idx| {
                let (i, j, l) = (idx / (n * n), (idx / n) % n, idx % n);
                let shifted = self.hat[idx] * phases[0][i] * phases[1][j] * phases[2][l];
                weight(idx) * (u_hat[idx] - rot * shifted).norm_sqr()
            });
        Ok(Modulation { rho: dist2.max(0.0).sqrt(), shift: c, phase: theta })
    }
}

/// `inf_{θ, c} ‖u − e^{iθ}R_ω(· − c)‖_{H¹}`: exact over lattice shifts by FFT
/// cross-correlation, then refined off-lattice by pattern search.
pub fn modulation_distance(u: &ComplexField, rec: &SolitonRecord) -> Result<Modulation> {
    ModulationReference::from_record(rec, u.length(), u.n())?.distance(u)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Behaviour {
    Dispersing,
    SolitonLike,
    Undecided,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScatteringSummary {
    pub classification: Behaviour,
    /// `L4(T)/L4(0)`.
    pub l4_ratio: f64,
    /// `max_t |L4(t)/L4(0) − 1|`.
    pub l4_variation: f64,
    /// Least-squares slope of `log L4` against `log t` over the second half
    /// of the window (free dispersion gives `−3`).
    pub l4_decay_exponent: Option<f64>,
    /// `(S10(T) − S10(T/2)) / (S10(T/2) − S10(0))`; small values indicate a
    /// saturating spacetime norm.
    pub s10_growth_ratio: Option<f64>,
    /// `(1/T) ∫₀ᵀ V dt`.
    pub mean_virial: f64,
    pub max_rho: Option<f64>,
}

pub fn scattering_diagnostics(trace: &EvolutionTrace) -> ScatteringSummary {
    let rows = &trace.rows;
    let empty = ScatteringSummary {
        classification: Behaviour::Dispersing,
        l4_ratio: 0.0,
        l4_variation: 0.0,
        l4_decay_exponent: None,
        s10_growth_ratio: None,
        mean_virial: 0.0,
        max_rho: None,
    };
    let (Some(first), Some(last)) = (rows.first(), rows.last()) else { return empty };
    if first.l4 == 0.0 {
        return ScatteringSummary { max_rho: rows.iter().filter_map(|r| r.rho).reduce(f64::max), ..empty };
    }
    let l4_ratio = last.l4 / first.l4;
    let l4_variation = rows.iter().map(|r| (r.l4 / first.l4 - 1.0).abs()).fold(0.0, f64::max);
    let span = last.t - first.t;
    let tail: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.t > first.t + 0.5 * span && r.t > 0.0 && r.l4 > 0.0)
        .map(|r| (r.t.ln(), r.l4.ln()))
        .collect();
    let l4_decay_exponent = (tail.len() >= 2).then(|| {
        let mx = tail.iter().map(|p| p.0).sum::<f64>() / tail.len() as f64;
        let my = tail.iter().map(|p| p.1).sum::<f64>() / tail.len() as f64;
        let sxy: f64 = tail.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = tail.iter().map(|p| (p.0 - mx).powi(2)).sum();
        sxy / sxx
    });
    let mid = rows.iter().min_by(|a, b| (a.t - (first.t + 0.5 * span)).abs().total_cmp(&(b.t - (first.t + 0.5 * span)).abs()));
    let s10_growth_ratio = mid.and_then(|m| {
        let early = m.s10 - first.s10;
        (early > 0.0).then(|| (last.s10 - m.s10) / early)
    });
    let mean_virial = if span > 0.0 { trace.integrated_virial() / span } else { first.virial };
    let classification = if l4_ratio <= 0.5 {
        Behaviour::Dispersing
    } else if l4_variation <= 0.01 {
        Behaviour::SolitonLike
    } else {
        Behaviour::Undecided
    };
    ScatteringSummary {
        classification,
        l4_ratio,
        l4_variation,
        l4_decay_exponent,
        s10_growth_ratio,
        mean_virial,
        max_rho: rows.iter().filter_map(|r| r.rho).reduce(f64::max),
    }
}

/// `A·e^{i(k·x + φt)}`, `φ = |A|² − |A|⁴ − |k|²`, for the lattice wavevector
/// `k = (2π/L)·m`.
pub fn plane_wave(length: f64, n: usize, amplitude: f64, modes: [i32; 3], t: f64) -> Result<ComplexField> {
    let dk = 2.0 * PI / length;
    let k = modes.map(|m| m as f64 * dk);
    let k2 = k.iter().map(|v| v * v).sum::<f64>();
    let a2 = amplitude * amplitude;
    let phi = a2 - a2 * a2 - k2;
    ComplexField::from_fn(length, n, |x, y, z| Complex64::from_polar(amplitude, k[0] * x + k[1] * y + k[2] * z + phi * t))
}

/// Free Schrödinger flow `e^{itΔ}u` applied spectrally.
pub fn free_propagate(u: &ComplexField, t: f64) -> Result<ComplexField> {
    let sp = Spectral::new(u.n(), u.length());
    let mut fft = Fft3::new(u.n());
    let mut hat = u.values().to_vec();
    fft.forward(&mut hat);
    for (idx, v) in hat.iter_mut().enumerate() {
        *v *= Complex64::from_polar(1.0, -sp.k2(idx) * t);
    }
    fft.inverse(&mut hat);
    ComplexField::new(u.length(), u.n(), hat)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gaussian(length: f64, n: usize, amplitude: f64) -> ComplexField {
        ComplexField::from_fn(length, n, |x, y, z| {
            Complex64::new(amplitude * (-(x * x + y * y + z * z) / 2.0).exp(), 0.0)
        })
        .unwrap()
    }

    fn max_diff(a: &ComplexField, b: &ComplexField) -> f64 {
        a.values().iter().zip(b.values()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
    }

    #[test]
    fn plane_wave_is_exact() {
        let u0 = plane_wave(2.0 * PI, 16, 1.0, [1, -2, 3], 0.0).unwrap();
        let mut cfg = EvolutionConfig::new(0.01, 1.0);
        cfg.cadence = 100;
        cfg.boundary_threshold = 1.0;
        let (u, _) = evolve(&u0, &cfg).unwrap();
        let exact = plane_wave(2.0 * PI, 16, 1.0, [1, -2, 3], 1.0).unwrap();
        assert!(max_diff(&u, &exact) <= 1e-12, "{}", max_diff(&u, &exact));

        let u0 = plane_wave(2.0 * PI, 8, 0.7, [0, 1, 0], 0.0).unwrap();
        let (u, _) = evolve(&u0, &cfg).unwrap();
        let exact = plane_wave(2.0 * PI, 8, 0.7, [0, 1, 0], 1.0).unwrap();
        assert!(max_diff(&u, &exact) <= 1e-12);
    }

    #[test]
    fn linear_mode_matches_free_propagator() {
        let u0 = gaussian(20.0, 32, 1.0);
        let mut cfg = EvolutionConfig::new(0.01, 0.5);
        cfg.linear_only = true;
        let (u, _) = evolve(&u0, &cfg).unwrap();
        let exact = free_propagate(&u0, 0.5).unwrap();
        assert!(max_diff(&u, &exact) <= 1e-13);
    }

    #[test]
    fn gauge_covariance_and_time_reversal() {
        let u0 = gaussian(16.0, 32, 0.8);
        let mut cfg = EvolutionConfig::new(0.01, 0.2);
        cfg.boundary_threshold = 0.5;
        let theta = 0.9;
        let (a, _) = evolve(&u0.phase_rotated(theta), &cfg).unwrap();
        let (b, _) = evolve(&u0, &cfg).unwrap();
        assert!(max_diff(&a, &b.phase_rotated(theta)) <= 1e-13);
        let (back, _) = evolve(&b.conj(), &cfg).unwrap();
        assert!(max_diff(&back, &u0.conj()) <= 1e-12, "{}", max_diff(&back, &u0.conj()));
    }

    #[test]
    fn virial_action_symmetries() {
        let real = gaussian(16.0, 32, 1.0);
        assert!(virial_action(&real).abs() < 1e-14);
        let xi = 2.0 * PI / 16.0 * 2.0;
        let boosted = ComplexField::from_fn(16.0, 32, |x, y, z| {
            Complex64::from_polar((-(x * x + y * y + z * z) / 2.0).exp(), xi * x)
        })
        .unwrap();
        assert!(virial_action(&boosted).abs() < 1e-12);
        // u = e^{iα|x|²} g with real g gives A = α ∫|x|²|g|²
        let alpha = 0.05;
        let chirped = ComplexField::from_fn(16.0, 64, |x, y, z| {
            let r2 = x * x + y * y + z * z;
            Complex64::from_polar((-r2 / 2.0).exp(), alpha * r2)
        })
        .unwrap();
        let expect = alpha * 1.5 * PI.powf(1.5);
        assert!((virial_action(&chirped) - expect).abs() < 1e-8 * expect);
    }

    #[test]
    fn zero_field_is_trivial() {
        let zero = ComplexField::zeros(10.0, 8).unwrap();
        let cfg = EvolutionConfig::new(0.1, 1.0);
        let iv = integrated_virial(&zero, &cfg).unwrap();
        assert_eq!(iv.value, 0.0);
        let (_, trace) = evolve(&zero, &cfg).unwrap();
        let summary = scattering_diagnostics(&trace);
        assert_eq!(summary.classification, Behaviour::Dispersing);
        assert_eq!(summary.l4_ratio, 0.0);
    }

    #[test]
    fn boundary_alarm_halts() {
        let wide = ComplexField::from_fn(10.0, 16, |x, _, _| Complex64::new((-x * x / 20.0).exp(), 0.0)).unwrap();
        let cfg = EvolutionConfig::new(0.01, 0.1);
        match evolve(&wide, &cfg) {
            Err(Error::BoundaryContamination { time, trace, .. }) => {
                assert_eq!(time, 0.0);
                assert!(trace.rows.is_empty());
            }
            other => panic!("expected a halt, got {other:?}"),
        }
    }

    #[test]
    fn flag_policy_keeps_running_without_action() {
        let wide = ComplexField::from_fn(10.0, 16, |x, _, _| Complex64::new((-x * x / 20.0).exp(), 0.0)).unwrap();
        let mut cfg = EvolutionConfig::new(0.01, 0.1);
        cfg.alarm = AlarmPolicy::Flag;
        cfg.action_rate = true;
        cfg.cadence = 2;
        let (_, trace) = evolve(&wide, &cfg).unwrap();
        assert_eq!(trace.rows.len(), 6);
        assert!(trace.rows.iter().all(|r| r.action.is_none() && r.action_rate.is_none()));
        assert_eq!(trace.alarm_time(cfg.boundary_threshold), Some(0.0));
        assert!(trace.virial_identity_error().is_none());
    }

    #[test]
    fn config_validation() {
        let u = gaussian(10.0, 8, 1.0);
        assert!(matches!(evolve(&u, &EvolutionConfig::new(0.0, 1.0)), Err(Error::InvalidArgument(_))));
        assert!(matches!(evolve(&u, &EvolutionConfig::new(0.3, 1.0)), Err(Error::InvalidArgument(_))));
        assert!(matches!(evolve(&u, &EvolutionConfig::new(0.1, 0.05)), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn modulation_recovers_shift_and_phase() {
        let r = ComplexField::from_fn(16.0, 32, |x, y, z| {
            Complex64::new(1.0 / (1.0 + (x * x + 2.0 * y * y + z * z) / 2.0).powi(3), 0.0)
        })
        .unwrap();
        let reference = ModulationReference::from_field(&r);
        let u = r.lattice_shift(3, -2, 5).phase_rotated(PI / 3.0);
        let m = reference.distance(&u).unwrap();
        let h = 0.5;
        assert!(m.rho <= 1e-10, "{}", m.rho);
        assert!((m.phase - PI / 3.0).abs() < 1e-12);
        for (got, want) in m.shift.iter().zip([3.0 * h, -2.0 * h, 5.0 * h]) {
            assert!((got - want).abs() < 1e-12, "{:?}", m.shift);
        }
        let same = reference.distance(&r).unwrap();
        assert!(same.rho <= 1e-12 && same.phase.abs() < 1e-12);
    }

    #[test]
    fn trace_csv_has_fixed_columns() {
        let u0 = gaussian(16.0, 16, 0.5);
        let mut cfg = EvolutionConfig::new(0.05, 0.2);
        cfg.cadence = 2;
        cfg.boundary_threshold = 0.5;
        let (_, trace) = evolve(&u0, &cfg).unwrap();
        let csv = trace.to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), EvolutionTrace::CSV_HEADER);
        assert_eq!(trace.rows.len(), 3);
        assert!(lines.all(|l| l.split(',').count() == 9));
        assert!(trace.rows.windows(2).all(|w| w[1].s10 >= w[0].s10));
    }
}
