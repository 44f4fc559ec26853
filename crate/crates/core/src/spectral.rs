//! Low-energy spectra along the schedule and the static diagnostics derived
//! from them: relevant gap, ground-state fidelity susceptibility and the
//! Edwards-Anderson glass order.

use std::io::Write;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::basis::Basis;
use crate::error::{Error, Result};
use crate::linalg::{
    lowest_eigs_davidson, lowest_eigs_dense, lowest_eigs_iterative, EigenPairs, IterativeOptions, LinearOperator,
    ParametricOperator,
};

/// Operators up to this dimension are diagonalized densely.
pub const DENSE_MAX_DIM: usize = 400;
/// Levels kept per grid point by default.
pub const DEFAULT_LEVELS: usize = 12;
/// Grid sizes used for traces and gap scans.
pub const TRACE_GRID: usize = 101;
pub const GAP_GRID: usize = 201;
/// Golden-section refinement stops once the bracket is narrower than this.
pub const GAP_REFINE_TOL: f64 = 1e-5;
/// Ground-state splittings below this make the ground state ill-defined.
pub const DEGENERACY_THRESHOLD: f64 = 1e-10;
/// Default finite-difference step of the fidelity susceptibility.
pub const DEFAULT_DELTA_S: f64 = 1e-3;

/// Eigensolver used for the lowest levels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EigenSolver {
    /// Dense up to [`DENSE_MAX_DIM`], Davidson above, Lanczos as fallback.
    #[default]
    Auto,
    Dense,
    /// Block Davidson; operators without a cheap diagonal use Lanczos.
    Davidson,
    Lanczos,
}

impl EigenSolver {
    pub fn lowest(self, op: &dyn LinearOperator, k: usize) -> Result<EigenPairs> {
        let opts = IterativeOptions::default();
        match self {
            EigenSolver::Dense => lowest_eigs_dense(op, k),
            EigenSolver::Lanczos => lowest_eigs_iterative(op, k, &opts),
            EigenSolver::Davidson => match lowest_eigs_davidson(op, k, &opts, None)? {
                Some(pairs) => Ok(pairs),
                None => lowest_eigs_iterative(op, k, &opts),
            },
            EigenSolver::Auto if op.dim() <= DENSE_MAX_DIM => lowest_eigs_dense(op, k),
            EigenSolver::Auto => match lowest_eigs_davidson(op, k, &opts, None) {
                Ok(Some(pairs)) => Ok(pairs),
                Ok(None) => lowest_eigs_iterative(op, k, &opts),
                Err(Error::NoConvergence { residual, .. }) => {
                    log::debug!("Davidson stalled at residual {residual:.2e}; retrying with Lanczos");
                    lowest_eigs_iterative(op, k, &opts)
                }
                Err(e) => Err(e),
            },
        }
    }
}

/// `k` lowest eigenpairs with [`EigenSolver::Auto`].
pub fn lowest_eigs(op: &dyn LinearOperator, k: usize) -> Result<EigenPairs> {
    EigenSolver::Auto.lowest(op, k)
}

/// `n` equally spaced points covering `[0, 1]`.
pub fn uniform_grid(n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![0.0],
        _ => (0..n).map(|i| i as f64 / (n - 1) as f64).collect(),
    }
}

#[derive(Debug, Clone)]
pub struct TraceOptions {
    pub levels: usize,
    /// Solution degeneracy `D`; the trace keeps at least `D + 1` levels.
    pub degeneracy: usize,
    pub keep_vectors: bool,
    pub solver: EigenSolver,
}

impl Default for TraceOptions {
    fn default() -> Self {
        TraceOptions {
            levels: DEFAULT_LEVELS,
            degeneracy: 0,
            keep_vectors: false,
            solver: EigenSolver::Auto,
        }
    }
}

/// Lowest levels of `H(s)` on a grid of schedule points.
#[derive(Debug, Clone)]
pub struct SpectralTrace {
    pub s_grid: Vec<f64>,
    /// Ascending eigenvalues per grid point.
    pub levels: Vec<Vec<f64>>,
    pub vectors: Option<Vec<Vec<Vec<f64>>>>,
    /// `labels[i][j]`: continuity label of the `j`-th sorted level at `s_grid[i]`,
    /// matched by maximal eigenvector overlap with the previous point. Identity
    /// when vectors are not retained.
    pub labels: Vec<Vec<usize>>,
    pub k: usize,
    /// Solver that produced the trace; reused when refining on it.
    pub solver: EigenSolver,
}

impl SpectralTrace {
    pub fn ground_energies(&self) -> Vec<f64> {
        self.levels.iter().map(|l| l[0]).collect()
    }
}

pub fn spectral_trace(
    ham: &dyn ParametricOperator,
    s_grid: &[f64],
    opts: &TraceOptions,
) -> Result<SpectralTrace> {
    if s_grid.iter().any(|s| !(0.0..=1.0).contains(s)) || s_grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::invalid("s grid must be strictly ascending inside [0, 1]"));
    }
    let k = opts.levels.max(opts.degeneracy + 1).min(ham.dim());
    let per_s: Vec<EigenPairs> = s_grid
        .par_iter()
        .map(|&s| {
            opts.solver.lowest(ham.at(s).as_ref(), k).map_err(|e| Error::AtSchedule {
                s,
                source: Box::new(e),
            })
        })
        .collect::<Result<_>>()?;

    let mut labels: Vec<Vec<usize>> = Vec::with_capacity(per_s.len());
    if opts.keep_vectors {
        for (i, pairs) in per_s.iter().enumerate() {
            if i == 0 {
                labels.push((0..k).collect());
            } else {
                labels.push(match_levels(&per_s[i - 1].vectors, &pairs.vectors, &labels[i - 1]));
            }
        }
    } else {
        labels = vec![(0..k).collect(); per_s.len()];
    }
    let levels = per_s.iter().map(|p| p.values.clone()).collect();
    let vectors = opts
        .keep_vectors
        .then(|| per_s.into_iter().map(|p| p.vectors).collect());
    Ok(SpectralTrace {
        s_grid: s_grid.to_vec(),
        levels,
        vectors,
        labels,
        k,
        solver: opts.solver,
    })
}

/// Greedy maximal-overlap assignment of the current levels to the previous labels.
fn match_levels(prev: &[Vec<f64>], cur: &[Vec<f64>], prev_labels: &[usize]) -> Vec<usize> {
    let mut pairs: Vec<(f64, usize, usize)> = Vec::with_capacity(prev.len() * cur.len());
    for (a, u) in prev.iter().enumerate() {
        for (b, v) in cur.iter().enumerate() {
            let ov: f64 = u.iter().zip(v).map(|(x, y)| x * y).sum();
            pairs.push((ov.abs(), a, b));
        }
    }
    pairs.sort_by(|x, y| y.0.total_cmp(&x.0));
    let mut used_prev = vec![false; prev.len()];
    let mut out = vec![usize::MAX; cur.len()];
    for (_, a, b) in pairs {
        if !used_prev[a] && out[b] == usize::MAX {
            used_prev[a] = true;
            out[b] = prev_labels[a];
        }
    }
    out
}

/// Minimum over the schedule of `E_D(s) - E_0(s)`.
#[derive(Debug, Clone)]
pub struct GapReport {
    pub relevant_gap: f64,
    pub argmin_s: f64,
    /// `(s, E_D(s) - E_0(s))` on the trace grid, sorted-order levels.
    pub per_s_gap: Vec<(f64, f64)>,
}

/// Relevant gap from the trace grid alone.
pub fn coarse_relevant_gap(trace: &SpectralTrace, degeneracy: usize) -> Result<GapReport> {
    if degeneracy == 0 || trace.k < degeneracy + 1 {
        return Err(Error::invalid(format!(
            "relevant gap for D = {degeneracy} needs {} levels, trace has {}",
            degeneracy + 1,
            trace.k
        )));
    }
    let per_s_gap: Vec<(f64, f64)> = trace
        .s_grid
        .iter()
        .zip(&trace.levels)
        .map(|(&s, l)| (s, (l[degeneracy] - l[0]).max(0.0)))
        .collect();
    let &(argmin_s, relevant_gap) = per_s_gap
        .iter()
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .ok_or_else(|| Error::invalid("empty trace"))?;
    Ok(GapReport {
        relevant_gap,
        argmin_s,
        per_s_gap,
    })
}

/// Relevant gap refined by golden-section search around the coarse minimum.
pub fn relevant_gap(ham: &dyn ParametricOperator, trace: &SpectralTrace, degeneracy: usize) -> Result<GapReport> {
    let mut report = coarse_relevant_gap(trace, degeneracy)?;
    let grid = &trace.s_grid;
    let i = grid
        .iter()
        .position(|&s| s == report.argmin_s)
        .expect("argmin is a grid point");
    let lo = grid[i.saturating_sub(1)];
    let hi = grid[(i + 1).min(grid.len() - 1)];
    if hi <= lo {
        return Ok(report);
    }
    let gap_at = |s: f64| -> Result<f64> {
        let pairs = trace.solver.lowest(ham.at(s).as_ref(), degeneracy + 1).map_err(|e| Error::AtSchedule {
            s,
            source: Box::new(e),
        })?;
        Ok((pairs.values[degeneracy] - pairs.values[0]).max(0.0))
    };
    let (s_best, g_best) = golden_section_min(gap_at, lo, hi, GAP_REFINE_TOL)?;
    if g_best < report.relevant_gap {
        report.relevant_gap = g_best;
        report.argmin_s = s_best;
    }
    Ok(report)
}

/// Minimizes `f` on `[a, b]`; returns the best point seen.
pub(crate) fn golden_section_min<F>(mut f: F, mut a: f64, mut b: f64, tol: f64) -> Result<(f64, f64)>
where
    F: FnMut(f64) -> Result<f64>,
{
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = f(c)?;
    let mut fd = f(d)?;
    let mut best = if fc <= fd { (c, fc) } else { (d, fd) };
    while b - a > tol {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c)?;
            if fc < best.1 {
                best = (c, fc);
            }
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d)?;
            if fd < best.1 {
                best = (d, fd);
            }
        }
    }
    Ok(best)
}

/// Unique ground state of `H(s)`, or an error when the lowest two levels are
/// closer than [`DEGENERACY_THRESHOLD`].
pub fn unique_ground_state(ham: &dyn ParametricOperator, s: f64) -> Result<(f64, Vec<f64>)> {
    let k = 2.min(ham.dim());
    let mut pairs = lowest_eigs(ham.at(s).as_ref(), k).map_err(|e| Error::AtSchedule {
        s,
        source: Box::new(e),
    })?;
    if k == 2 {
        let gap = pairs.values[1] - pairs.values[0];
        if gap < DEGENERACY_THRESHOLD {
            return Err(Error::DegenerateGroundState { s, gap });
        }
    }
    Ok((pairs.values[0], pairs.vectors.swap_remove(0)))
}

/// Per-site ground-state fidelity susceptibility
/// `-2 ln F(s - δ/2, s + δ/2) / (N δ²)`.
pub fn fidelity_susceptibility(ham: &dyn ParametricOperator, s: f64, delta_s: f64) -> Result<f64> {
    if !(delta_s > 0.0) || s - delta_s / 2.0 < 0.0 || s + delta_s / 2.0 > 1.0 {
        return Err(Error::invalid(format!(
            "stencil s = {s} ± {} leaves [0, 1]",
            delta_s / 2.0
        )));
    }
    let (_, a) = unique_ground_state(ham, s - delta_s / 2.0)?;
    let (_, b) = unique_ground_state(ham, s + delta_s / 2.0)?;
    let ov: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
    // 1 - F^2 = ‖b - <a|b> a‖^2, free of the cancellation in 1 - ov^2
    let infidelity: f64 = a.iter().zip(&b).map(|(x, y)| (y - ov * x).powi(2)).sum();
    let neg_log_f2 = -(-infidelity.min(1.0)).ln_1p();
    Ok((neg_log_f2 / (ham.n_sites() as f64 * delta_s * delta_s)).max(0.0))
}

/// Susceptibility on `grid`; points whose stencil leaves `[δ, 1 - δ]` or whose
/// ground state is degenerate are `None`.
pub fn susceptibility_profile(
    ham: &dyn ParametricOperator,
    grid: &[f64],
    delta_s: f64,
) -> Result<Vec<Option<f64>>> {
    grid.par_iter()
        .map(|&s| {
            if s < delta_s || s > 1.0 - delta_s {
                return Ok(None);
            }
            match fidelity_susceptibility(ham, s, delta_s) {
                Ok(v) => Ok(Some(v)),
                Err(Error::DegenerateGroundState { .. }) => Ok(None),
                Err(e) => Err(e),
            }
        })
        .collect()
}

/// Amplitude types whose squared modulus is a probability.
pub trait Amplitude: Copy + Sync {
    fn prob(self) -> f64;
}

impl Amplitude for f64 {
    #[inline]
    fn prob(self) -> f64 {
        self * self
    }
}

impl Amplitude for Complex64 {
    #[inline]
    fn prob(self) -> f64 {
        self.norm_sqr()
    }
}

pub(crate) const NORM_TOL: f64 = 1e-8;

pub(crate) fn check_normalized<T: Amplitude>(state: &[T]) -> Result<()> {
    let total: f64 = state.iter().map(|a| a.prob()).sum();
    if (total - 1.0).abs() > NORM_TOL {
        return Err(Error::Unnormalized { norm: total.sqrt() });
    }
    Ok(())
}

/// Edwards-Anderson order `(1/N) Σ_i <2 n_i - 1>^2`.
///
/// With the shared bit convention this is `q_n` for the atomic annealers and
/// `q_z` for the Ising annealer.
pub fn glass_order<T: Amplitude, B: Basis + ?Sized>(state: &[T], basis: &B) -> Result<f64> {
    if state.len() != basis.dim() {
        return Err(Error::DimensionMismatch {
            expected: basis.dim(),
            actual: state.len(),
        });
    }
    check_normalized(state)?;
    let n = basis.n_sites();
    let mut mag = vec![0.0; n];
    for (idx, a) in state.iter().enumerate() {
        let p = a.prob();
        if p == 0.0 {
            continue;
        }
        let bits = basis.state(idx);
        for (i, m) in mag.iter_mut().enumerate() {
            if bits >> i & 1 == 1 {
                *m += p;
            } else {
                *m -= p;
            }
        }
    }
    Ok((mag.iter().map(|m| m * m).sum::<f64>() / n as f64).clamp(0.0, 1.0))
}

/// Mean glass order of the `k` lowest eigenvectors at each grid point.
pub fn glass_order_lowk<B: Basis + ?Sized>(trace: &SpectralTrace, basis: &B, k: usize) -> Result<Vec<f64>> {
    let vectors = trace
        .vectors
        .as_ref()
        .ok_or_else(|| Error::invalid("trace was computed without eigenvectors"))?;
    if k == 0 || k > trace.k {
        return Err(Error::invalid(format!("trace holds {} levels, asked for {k}", trace.k)));
    }
    vectors
        .iter()
        .map(|vs| {
            let mut acc = 0.0;
            for v in vs.iter().take(k) {
                acc += glass_order(v, basis)?;
            }
            Ok(acc / k as f64)
        })
        .collect()
}

/// Optional per-point columns appended to a trace export.
#[derive(Debug, Clone, Default)]
pub struct TraceColumns {
    pub q_gs: Option<Vec<f64>>,
    pub q_low: Option<Vec<f64>>,
    pub susceptibility: Option<Vec<Option<f64>>>,
}

/// Writes `s, E_0 … E_{k-1}[, q_gs][, q_low12][, S]` as CSV.
pub fn write_trace_csv<W: Write>(out: W, trace: &SpectralTrace, extra: &TraceColumns) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["s".to_string()];
    header.extend((0..trace.k).map(|i| format!("E_{i}")));
    if extra.q_gs.is_some() {
        header.push("q_gs".into());
    }
    if extra.q_low.is_some() {
        header.push("q_low12".into());
    }
    if extra.susceptibility.is_some() {
        header.push("S".into());
    }
    w.write_record(&header).map_err(csv_err)?;
    for (i, (&s, levels)) in trace.s_grid.iter().zip(&trace.levels).enumerate() {
        let mut row = vec![format!("{s}")];
        row.extend(levels.iter().map(|e| format!("{e:.12}")));
        if let Some(q) = &extra.q_gs {
            row.push(format!("{:.12}", q[i]));
        }
        if let Some(q) = &extra.q_low {
            row.push(format!("{:.12}", q[i]));
        }
        if let Some(sus) = &extra.susceptibility {
            row.push(sus[i].map(|v| format!("{v:.12e}")).unwrap_or_default());
        }
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::Parse(e.to_string()))?;
    Ok(())
}

pub(crate) fn csv_err(e: csv::Error) -> Error {
    Error::Parse(e.to_string())
}
