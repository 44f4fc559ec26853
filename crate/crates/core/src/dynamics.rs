//! Time evolution `i dψ/dt = H(t/𝒯) ψ` along the annealing schedule and the
//! observables recorded on the way.

use std::io::Write;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::basis::Basis;
use crate::error::{Error, Result};
use crate::graph::PartitionSolution;
use crate::hamiltonian::{even_site_mask, HamiltonianParts, Weights};
use crate::linalg::{cnorm, krylov_expm_apply};
use crate::spectral::{check_normalized, csv_err, glass_order, unique_ground_state, Amplitude};

/// Default annealing time.
pub const DEFAULT_TOTAL_TIME: f64 = 50.0;
/// Default number of integration steps at the default annealing time.
pub const DEFAULT_STEPS: usize = 2000;
/// Default number of uniformly spaced observation times.
pub const DEFAULT_SAMPLES: usize = 201;
/// Largest accepted deviation of ‖ψ‖ from one.
pub const NORM_DRIFT_LIMIT: f64 = 1e-6;

const KRYLOV_MAX_DIM: usize = 40;
const MAX_SUBDIVISION_DEPTH: u32 = 10;

/// Linear schedule `s(t) = t / 𝒯`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnnealSchedule {
    pub total_time: f64,
    pub lambda: f64,
}

impl AnnealSchedule {
    pub fn new(total_time: f64, lambda: f64) -> Result<Self> {
        if !(total_time > 0.0) || !total_time.is_finite() {
            return Err(Error::invalid(format!("annealing time must be positive, got {total_time}")));
        }
        Ok(AnnealSchedule { total_time, lambda })
    }

    pub fn s_of_t(&self, t: f64) -> f64 {
        (t / self.total_time).clamp(0.0, 1.0)
    }

    pub fn weights(&self, t: f64) -> Weights {
        Weights::at(self.s_of_t(t), self.lambda)
    }
}

/// Single-step propagators. Both evaluate `H` only through weighted
/// combinations of the three fixed components.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Integrator {
    /// `exp(-i Δt H(t + Δt/2))`, second order.
    Midpoint,
    /// Two-exponential commutator-free Magnus scheme at the Gauss points,
    /// fourth order.
    #[default]
    Magnus4,
}

impl std::str::FromStr for Integrator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "midpoint" => Ok(Integrator::Midpoint),
            "magnus4" => Ok(Integrator::Magnus4),
            other => Err(Error::Parse(format!("unknown integrator {other:?}"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct EvolveOptions {
    pub steps: usize,
    /// Uniform observation times including both endpoints; below 2 only the
    /// endpoints are recorded.
    pub samples: usize,
    /// Also record the instantaneous ground-state probability (one
    /// eigensolve per sample).
    pub ground_state: bool,
    pub integrator: Integrator,
    /// Krylov error target per exponential.
    pub tol: f64,
}

impl Default for EvolveOptions {
    fn default() -> Self {
        EvolveOptions {
            steps: DEFAULT_STEPS,
            samples: DEFAULT_SAMPLES,
            ground_state: false,
            integrator: Integrator::default(),
            tol: 1e-10,
        }
    }
}

/// Observables of the evolving state at the sample times.
#[derive(Debug, Clone)]
pub struct DynamicsTrace {
    pub times: Vec<f64>,
    pub s: Vec<f64>,
    pub p_s: Vec<f64>,
    pub p_g: Option<Vec<f64>>,
    pub d_eff: Vec<f64>,
    pub q: Vec<f64>,
    pub norm_error: Vec<f64>,
    pub final_state: Vec<Complex64>,
}

impl DynamicsTrace {
    pub fn final_success(&self) -> f64 {
        *self.p_s.last().expect("trace has samples")
    }

    pub fn max_norm_error(&self) -> f64 {
        self.norm_error.iter().cloned().fold(0.0, f64::max)
    }
}

/// Ground state of `H(0)`: all even (1-based) sites occupied, which for the
/// Ising annealer means spin up on even sites.
pub fn initial_state(parts: &HamiltonianParts) -> Vec<Complex64> {
    let mut psi = vec![Complex64::new(0.0, 0.0); parts.dim()];
    let idx = parts
        .basis
        .index_of(even_site_mask(parts.n_sites()))
        .expect("even-site configuration is half filled");
    psi[idx] = Complex64::new(1.0, 0.0);
    psi
}

/// `Σ_{b ∈ solutions} |<b|ψ>|^2`.
pub fn success_probability<T: Amplitude, B: Basis + ?Sized>(
    state: &[T],
    solutions: &PartitionSolution,
    basis: &B,
) -> f64 {
    solutions
        .solutions
        .iter()
        .filter_map(|&b| basis.index_of(b))
        .map(|i| state[i].prob())
        .sum()
}

/// Inverse participation ratio `(Σ |c_i|^4)^{-1}` of a normalized state.
pub fn effective_dimension<T: Amplitude>(state: &[T]) -> f64 {
    let (p2, p4) = state.iter().fold((0.0, 0.0), |(a, b), c| {
        let p = c.prob();
        (a + p, b + p * p)
    });
    p2 * p2 / p4
}

/// Weight of `state` on the instantaneous ground state of `H(s)`.
///
/// Where `H(s)` is diagonal (`s = 0` or `s = 1`) this is the weight on the
/// whole lowest-diagonal subspace; elsewhere the ground state must be unique.
pub fn ground_state_probability<T: Amplitude + Into<Complex64>>(
    state: &[T],
    parts: &HamiltonianParts,
    s: f64,
) -> Result<f64> {
    check_normalized(state)?;
    if s == 0.0 || s == 1.0 {
        let w = parts.weights(s);
        let diag: Vec<f64> = parts
            .h_initial
            .diagonal()
            .iter()
            .zip(parts.h_problem.diagonal())
            .map(|(a, b)| w.initial * a + w.problem * b)
            .collect();
        let min = diag.iter().cloned().fold(f64::INFINITY, f64::min);
        return Ok(diag
            .iter()
            .zip(state)
            .filter(|(d, _)| **d - min <= 1e-12 * min.abs().max(1.0))
            .map(|(_, c)| c.prob())
            .sum());
    }
    let (_, g) = unique_ground_state(parts, s)?;
    let ov: Complex64 = g.iter().zip(state).map(|(a, c)| (*c).into() * *a).sum();
    Ok(ov.norm_sqr())
}

/// Applies `exp(-i dt Σ w H_k)`, halving the step while the Krylov estimate
/// misses `tol`.
fn apply_exponential(
    parts: &HamiltonianParts,
    weights: Weights,
    psi: &mut [Complex64],
    dt: f64,
    tol: f64,
    t: f64,
    depth: u32,
) -> Result<()> {
    let op = parts.weighted(weights);
    match krylov_expm_apply(&op, psi, dt, tol, KRYLOV_MAX_DIM) {
        Ok(_) => Ok(()),
        Err(err) if depth < MAX_SUBDIVISION_DEPTH => {
            log::debug!("krylov estimate {err:.2e} at t = {t}; halving step");
            apply_exponential(parts, weights, psi, dt / 2.0, tol, t, depth + 1)?;
            apply_exponential(parts, weights, psi, dt / 2.0, tol, t + dt / 2.0, depth + 1)
        }
        Err(err) => Err(Error::Integration {
            t,
            reason: format!("Krylov error estimate {err:.2e} above {tol:.0e} after subdivision"),
        }),
    }
}

/// One step from `t` to `t + dt` (`dt` may be negative).
pub fn step(
    parts: &HamiltonianParts,
    schedule: &AnnealSchedule,
    psi: &mut [Complex64],
    t: f64,
    dt: f64,
    integrator: Integrator,
    tol: f64,
) -> Result<()> {
    match integrator {
        Integrator::Midpoint => {
            let w = schedule.weights(t + dt / 2.0);
            apply_exponential(parts, w, psi, dt, tol, t, 0)
        }
        Integrator::Magnus4 => {
            let r3 = 3f64.sqrt();
            let w1 = schedule.weights(t + (0.5 - r3 / 6.0) * dt);
            let w2 = schedule.weights(t + (0.5 + r3 / 6.0) * dt);
            let a1 = (3.0 - 2.0 * r3) / 12.0;
            let a2 = (3.0 + 2.0 * r3) / 12.0;
            apply_exponential(parts, w1.combine(a2, w2, a1), psi, dt, tol, t, 0)?;
            apply_exponential(parts, w1.combine(a1, w2, a2), psi, dt, tol, t, 0)
        }
    }
}

/// Propagates `psi` from `t_from` to `t_to` in `steps` equal steps.
pub fn propagate(
    parts: &HamiltonianParts,
    schedule: &AnnealSchedule,
    psi: &mut [Complex64],
    t_from: f64,
    t_to: f64,
    steps: usize,
    opts: &EvolveOptions,
) -> Result<()> {
    if steps == 0 {
        return Err(Error::invalid("at least one step is required"));
    }
    let dt = (t_to - t_from) / steps as f64;
    for i in 0..steps {
        let t = t_from + i as f64 * dt;
        step(parts, schedule, psi, t, dt, opts.integrator, opts.tol)?;
    }
    Ok(())
}

fn sample_steps(steps: usize, samples: usize) -> Vec<usize> {
    if samples < 2 {
        return vec![0, steps];
    }
    let mut idx: Vec<usize> = (0..samples)
        .map(|j| ((j as f64) * steps as f64 / (samples - 1) as f64).round() as usize)
        .collect();
    idx.dedup();
    idx
}

/// Runs the full anneal from the initial state and records observables.
pub fn evolve(
    parts: &HamiltonianParts,
    schedule: &AnnealSchedule,
    solutions: &PartitionSolution,
    opts: &EvolveOptions,
) -> Result<DynamicsTrace> {
    if opts.steps == 0 {
        return Err(Error::invalid("at least one step is required"));
    }
    let dt = schedule.total_time / opts.steps as f64;
    let sample_at = sample_steps(opts.steps, opts.samples);
    let mut psi = initial_state(parts);
    let mut trace = DynamicsTrace {
        times: Vec::with_capacity(sample_at.len()),
        s: Vec::with_capacity(sample_at.len()),
        p_s: Vec::with_capacity(sample_at.len()),
        p_g: opts.ground_state.then(Vec::new),
        d_eff: Vec::with_capacity(sample_at.len()),
        q: Vec::with_capacity(sample_at.len()),
        norm_error: Vec::with_capacity(sample_at.len()),
        final_state: Vec::new(),
    };
    let mut done = 0;
    for &target in &sample_at {
        while done < target {
            let t = done as f64 * dt;
            step(parts, schedule, &mut psi, t, dt, opts.integrator, opts.tol)?;
            done += 1;
            let drift = (cnorm(&psi) - 1.0).abs();
            if drift > NORM_DRIFT_LIMIT {
                return Err(Error::Integration {
                    t: t + dt,
                    reason: format!("norm drifted by {drift:.2e}"),
                });
            }
        }
        let t = if done == opts.steps { schedule.total_time } else { done as f64 * dt };
        let s = schedule.s_of_t(t);
        trace.times.push(t);
        trace.s.push(s);
        trace.norm_error.push((cnorm(&psi) - 1.0).abs());
        trace.p_s.push(success_probability(&psi, solutions, &parts.basis));
        trace.d_eff.push(effective_dimension(&psi));
        trace.q.push(glass_order(&psi, &parts.basis)?);
        if let Some(p_g) = trace.p_g.as_mut() {
            p_g.push(ground_state_probability(&psi, parts, s)?);
        }
    }
    trace.final_state = psi;
    Ok(trace)
}

/// Writes `t, s, P_s, P_g, D_eff, q, norm_error` as CSV (`P_g` empty when not recorded).
pub fn write_dynamics_csv<W: Write>(out: W, trace: &DynamicsTrace) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t", "s", "P_s", "P_g", "D_eff", "q", "norm_error"])
        .map_err(csv_err)?;
    for i in 0..trace.times.len() {
        let p_g = trace
            .p_g
            .as_ref()
            .map(|p| format!("{:.12}", p[i]))
            .unwrap_or_default();
        w.write_record([
            format!("{}", trace.times[i]),
            format!("{}", trace.s[i]),
            format!("{:.12}", trace.p_s[i]),
            p_g,
            format!("{:.12}", trace.d_eff[i]),
            format!("{:.12}", trace.q[i]),
            format!("{:.3e}", trace.norm_error[i]),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::Parse(e.to_string()))?;
    Ok(())
}

/// Final-state summary written next to a dynamics trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalSummary {
    pub instance_id: String,
    pub annealer: String,
    #[serde(rename = "T")]
    pub total_time: f64,
    pub steps: usize,
    #[serde(rename = "P_s_final")]
    pub p_s_final: f64,
    #[serde(rename = "D")]
    pub degeneracy: usize,
    pub min_cut: u32,
}
