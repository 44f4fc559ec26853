//! Sparse operator components of the three annealers and the interpolated
//! Hamiltonian
//!
//! ```text
//! H(s) = (1 - s) H_initial + λ s (1 - s) H_driver + s H_problem
//! ```
//!
//! The atomic annealers (spinless fermions, hard-core bosons) act on the
//! half-filled sector; the Ising annealer acts on all `2^N` spin
//! configurations. Every matrix is real symmetric in the computational basis.

use std::fmt;
use std::io::{self, Write};
use std::ops::{AddAssign, Mul};
use std::str::FromStr;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::basis::{AnnealBasis, Basis, FullBasis, SectorBasis};
use crate::error::{Error, Result};
use crate::graph::{Graph, ProblemInstance};
use crate::linalg::{LinearOperator, ParametricOperator};

/// Default driving strength λ.
pub const DEFAULT_LAMBDA: f64 = 3.0;
/// Default Ising imbalance penalty α.
pub const DEFAULT_ALPHA: f64 = 1.0;

/// Open-boundary square lattice, sites numbered row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LatticeGeometry {
    rows: usize,
    cols: usize,
    bonds: Vec<(usize, usize)>,
}

impl LatticeGeometry {
    pub fn new(rows: usize, cols: usize) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::invalid(format!("empty lattice {rows}x{cols}")));
        }
        if rows * cols > 63 {
            return Err(Error::invalid(format!(
                "{rows}x{cols} lattice exceeds 63 sites"
            )));
        }
        let mut bonds = Vec::with_capacity(rows * (cols - 1) + (rows - 1) * cols);
        for r in 0..rows {
            for c in 0..cols {
                let i = r * cols + c;
                if c + 1 < cols {
                    bonds.push((i, i + 1));
                }
                if r + 1 < rows {
                    bonds.push((i, i + cols));
                }
            }
        }
        Ok(LatticeGeometry { rows, cols, bonds })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn sites(&self) -> usize {
        self.rows * self.cols
    }

    /// Nearest-neighbour pairs `(i, j)`, `i < j`, 0-based site indices.
    pub fn bonds(&self) -> &[(usize, usize)] {
        &self.bonds
    }
}

/// A real symmetric matrix: dense diagonal plus the strict upper triangle.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseOperator {
    dim: usize,
    diagonal: Vec<f64>,
    rows: Vec<u32>,
    cols: Vec<u32>,
    values: Vec<f64>,
}

impl SparseOperator {
    pub fn diagonal_only(diagonal: Vec<f64>) -> Self {
        SparseOperator {
            dim: diagonal.len(),
            diagonal,
            rows: Vec::new(),
            cols: Vec::new(),
            values: Vec::new(),
        }
    }

    /// Normalizes arbitrary off-diagonal triplets: entries are mirrored into
    /// the upper triangle, duplicates summed, zeros dropped, and the result
    /// sorted row-major.
    pub fn from_triplets(
        diagonal: Vec<f64>,
        mut entries: Vec<(usize, usize, f64)>,
    ) -> Result<Self> {
        let dim = diagonal.len();
        if dim > u32::MAX as usize {
            return Err(Error::invalid("dimension exceeds u32 indexing"));
        }
        for e in entries.iter_mut() {
            if e.0 >= dim || e.1 >= dim {
                return Err(Error::invalid(format!("entry ({}, {}) out of range", e.0, e.1)));
            }
            if e.0 == e.1 {
                return Err(Error::invalid("diagonal entries belong in the diagonal"));
            }
            if e.0 > e.1 {
                *e = (e.1, e.0, e.2);
            }
        }
        entries.sort_unstable_by_key(|&(r, c, _)| (r, c));
        let mut op = SparseOperator {
            dim,
            diagonal,
            rows: Vec::with_capacity(entries.len()),
            cols: Vec::with_capacity(entries.len()),
            values: Vec::with_capacity(entries.len()),
        };
        let mut iter = entries.into_iter().peekable();
        while let Some((r, c, mut v)) = iter.next() {
            while let Some(&(r2, c2, v2)) = iter.peek() {
                if (r2, c2) != (r, c) {
                    break;
                }
                v += v2;
                iter.next();
            }
            if v != 0.0 {
                op.rows.push(r as u32);
                op.cols.push(c as u32);
                op.values.push(v);
            }
        }
        Ok(op)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn diagonal(&self) -> &[f64] {
        &self.diagonal
    }

    /// Stored upper-triangle entries `(row, col, value)`, `row < col`.
    pub fn offdiag(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.rows
            .iter()
            .zip(&self.cols)
            .zip(&self.values)
            .map(|((&r, &c), &v)| (r as usize, c as usize, v))
    }

    pub fn nnz_offdiag(&self) -> usize {
        self.values.len()
    }

    pub fn is_diagonal(&self) -> bool {
        self.values.is_empty()
    }

    pub fn has_zero_diagonal(&self) -> bool {
        self.diagonal.iter().all(|&d| d == 0.0)
    }

    /// `Σ_k c_k A_k` over operators of equal dimension.
    pub fn linear_combination(terms: &[(f64, &SparseOperator)]) -> Result<Self> {
        let dim = terms
            .first()
            .map(|t| t.1.dim)
            .ok_or_else(|| Error::invalid("empty linear combination"))?;
        let mut diagonal = vec![0.0; dim];
        let mut entries = Vec::new();
        for &(c, op) in terms {
            if op.dim != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    actual: op.dim,
                });
            }
            if c == 0.0 {
                continue;
            }
            for (d, &x) in diagonal.iter_mut().zip(&op.diagonal) {
                *d += c * x;
            }
            entries.extend(op.offdiag().map(|(r, col, v)| (r, col, c * v)));
        }
        Self::from_triplets(diagonal, entries)
    }

    /// `y = A x`, overwriting `y`.
    pub fn apply_into<T>(&self, x: &[T], y: &mut [T])
    where
        T: Copy + AddAssign + Mul<f64, Output = T>,
    {
        for ((yi, &xi), &d) in y.iter_mut().zip(x).zip(&self.diagonal) {
            *yi = xi * d;
        }
        self.add_offdiag(1.0, x, y);
    }

    /// `y += w * (off-diagonal part) x`.
    #[inline]
    fn add_offdiag<T>(&self, weight: f64, x: &[T], y: &mut [T])
    where
        T: Copy + AddAssign + Mul<f64, Output = T>,
    {
        if weight == 0.0 {
            return;
        }
        for ((&r, &c), &v) in self.rows.iter().zip(&self.cols).zip(&self.values) {
            let (r, c) = (r as usize, c as usize);
            let wv = weight * v;
            let xr = x[r];
            y[r] += x[c] * wv;
            y[c] += xr * wv;
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(&self.diagonal));
        for (r, c, v) in self.offdiag() {
            m[(r, c)] = v;
            m[(c, r)] = v;
        }
        m
    }

    /// Coordinate-format text dump: diagonal first, then the upper triangle.
    pub fn dump<W: Write>(&self, mut out: W) -> io::Result<()> {
        for (i, d) in self.diagonal.iter().enumerate() {
            writeln!(out, "{i} {i} {d:.16e}")?;
        }
        for (r, c, v) in self.offdiag() {
            writeln!(out, "{r} {c} {v:.16e}")?;
        }
        Ok(())
    }
}

impl LinearOperator for SparseOperator {
    fn dim(&self) -> usize {
        self.dim
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.apply_into(x, y);
    }

    fn apply_complex(&self, x: &[Complex64], y: &mut [Complex64]) {
        self.apply_into(x, y);
    }

    fn diagonal_entries(&self) -> Option<Vec<f64>> {
        Some(self.diagonal.clone())
    }
}

/// Which of the three annealers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AnnealerKind {
    Fermion,
    Boson,
    Ising,
}

impl AnnealerKind {
    pub const ALL: [AnnealerKind; 3] = [AnnealerKind::Fermion, AnnealerKind::Boson, AnnealerKind::Ising];

    pub fn as_str(self) -> &'static str {
        match self {
            AnnealerKind::Fermion => "fermion",
            AnnealerKind::Boson => "boson",
            AnnealerKind::Ising => "ising",
        }
    }

    pub fn is_atomic(self) -> bool {
        !matches!(self, AnnealerKind::Ising)
    }
}

impl fmt::Display for AnnealerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AnnealerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "fermion" => Ok(AnnealerKind::Fermion),
            "boson" => Ok(AnnealerKind::Boson),
            "ising" => Ok(AnnealerKind::Ising),
            other => Err(Error::Parse(format!("unknown annealer {other:?}"))),
        }
    }
}

/// Particle statistics of the tunneling driver.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Statistics {
    Fermion,
    Boson,
}

/// Onsite potential `V_i`: -2 on even (1-based) sites, 0 on odd ones.
#[inline]
pub fn onsite_potential(site: usize) -> f64 {
    if (site + 1).is_multiple_of(2) {
        -2.0
    } else {
        0.0
    }
}

/// Bit pattern occupying every even (1-based) site.
pub fn even_site_mask(n: usize) -> u64 {
    (0..n).filter(|i| (i + 1) % 2 == 0).fold(0, |m, i| m | 1 << i)
}

pub fn build_onsite(geometry: &LatticeGeometry, basis: &SectorBasis) -> Result<SparseOperator> {
    check_sites(geometry.sites(), basis.n_sites())?;
    let potential: Vec<f64> = (0..basis.n_sites()).map(onsite_potential).collect();
    let diagonal = basis
        .states()
        .iter()
        .map(|&s| {
            potential
                .iter()
                .enumerate()
                .filter(|&(i, _)| s >> i & 1 == 1)
                .map(|(_, v)| v)
                .sum()
        })
        .collect();
    Ok(SparseOperator::diagonal_only(diagonal))
}

/// Jordan-Wigner parity `(-1)^(occupied sites strictly between p and q)`, `p < q`.
#[inline]
pub fn jw_sign(state: u64, p: usize, q: usize) -> f64 {
    debug_assert!(p < q && q < 64);
    let between = ((1u64 << q) - 1) & !((1u64 << (p + 1)) - 1);
    if (state & between).count_ones().is_multiple_of(2) {
        1.0
    } else {
        -1.0
    }
}

/// Nearest-neighbour hopping `-Σ (a_i† a_j + a_j† a_i)` in the sector basis.
pub fn build_tunneling(
    geometry: &LatticeGeometry,
    basis: &SectorBasis,
    statistics: Statistics,
) -> Result<SparseOperator> {
    check_sites(geometry.sites(), basis.n_sites())?;
    let mut entries = Vec::new();
    for (idx, &state) in basis.states().iter().enumerate() {
        for &(i, j) in geometry.bonds() {
            if (state >> i ^ state >> j) & 1 == 0 {
                continue;
            }
            let target = state ^ (1 << i | 1 << j);
            let tidx = basis.rank_unchecked(target);
            if idx < tidx {
                let value = match statistics {
                    Statistics::Boson => -1.0,
                    // the string sites are untouched by the hop, so either state gives the sign
                    Statistics::Fermion => -jw_sign(state, i, j),
                };
                entries.push((idx, tidx, value));
            }
        }
    }
    SparseOperator::from_triplets(vec![0.0; basis.dim()], entries)
}

/// Atomic problem Hamiltonian: the cut size of each occupation pattern.
pub fn build_problem_atomic(graph: &Graph, basis: &SectorBasis) -> Result<SparseOperator> {
    check_sites(graph.n(), basis.n_sites())?;
    Ok(SparseOperator::diagonal_only(
        basis.states().iter().map(|&s| graph.cut(s) as f64).collect(),
    ))
}

/// What to do when the Ising penalty is below its validity bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PenaltyCheck {
    #[default]
    Reject,
    Warn,
}

/// Smallest penalty that keeps the Ising ground states balanced.
pub fn alpha_lower_bound(graph: &Graph) -> f64 {
    (2 * graph.max_degree()).min(graph.n()) as f64 / 8.0
}

/// `cut + α (Σ σ^z)^2` over all spin configurations.
pub fn build_ising_problem(graph: &Graph, alpha: f64, check: PenaltyCheck) -> Result<SparseOperator> {
    let bound = alpha_lower_bound(graph);
    if alpha < bound {
        match check {
            PenaltyCheck::Reject => {
                return Err(Error::invalid(format!(
                    "penalty α = {alpha} is below the balance bound {bound}"
                )))
            }
            PenaltyCheck::Warn => log::warn!("penalty α = {alpha} is below the balance bound {bound}"),
        }
    }
    let n = graph.n();
    let basis = FullBasis::new(n)?;
    let diagonal = (0..basis.dim() as u64)
        .map(|s| {
            let m = 2 * s.count_ones() as i64 - n as i64;
            graph.cut(s) as f64 + alpha * (m * m) as f64
        })
        .collect();
    Ok(SparseOperator::diagonal_only(diagonal))
}

/// Longitudinal field `Σ h_i σ_i^z` (h = -1 on even sites, +1 on odd) and
/// transverse field `-Σ σ_i^x`.
pub fn build_ising_drivers(n: usize) -> Result<(SparseOperator, SparseOperator)> {
    let basis = FullBasis::new(n)?;
    let dim = basis.dim();
    let h: Vec<f64> = (0..n).map(|i| if (i + 1) % 2 == 0 { -1.0 } else { 1.0 }).collect();
    let hz = (0..dim as u64)
        .map(|s| {
            h.iter()
                .enumerate()
                .map(|(i, hi)| if s >> i & 1 == 1 { *hi } else { -*hi })
                .sum()
        })
        .collect();
    let mut entries = Vec::with_capacity(dim * n / 2);
    for s in 0..dim {
        for i in 0..n {
            let t = s ^ (1 << i);
            if s < t {
                entries.push((s, t, -1.0));
            }
        }
    }
    Ok((
        SparseOperator::diagonal_only(hz),
        SparseOperator::from_triplets(vec![0.0; dim], entries)?,
    ))
}

fn check_sites(expected: usize, actual: usize) -> Result<()> {
    if expected != actual {
        return Err(Error::DimensionMismatch { expected, actual });
    }
    Ok(())
}

/// Scalar weights of the three components at one point of the schedule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Weights {
    pub initial: f64,
    pub driver: f64,
    pub problem: f64,
}

impl Weights {
    pub fn at(s: f64, lambda: f64) -> Self {
        Weights {
            initial: 1.0 - s,
            driver: lambda * s * (1.0 - s),
            problem: s,
        }
    }

    /// `a * self + b * other`.
    pub fn combine(self, a: f64, other: Weights, b: f64) -> Self {
        Weights {
            initial: a * self.initial + b * other.initial,
            driver: a * self.driver + b * other.driver,
            problem: a * self.problem + b * other.problem,
        }
    }
}

/// The three schedule-weighted components of one annealer.
#[derive(Debug, Clone)]
pub struct HamiltonianParts {
    pub kind: AnnealerKind,
    pub basis: AnnealBasis,
    pub h_initial: SparseOperator,
    pub h_driver: SparseOperator,
    pub h_problem: SparseOperator,
    pub lambda: f64,
    /// Ising imbalance penalty; carried but unused by the atomic kinds.
    pub alpha: f64,
}

impl HamiltonianParts {
    /// Builds the annealer of `kind` for `instance`.
    pub fn build(instance: &ProblemInstance, kind: AnnealerKind, lambda: f64, alpha: f64) -> Result<Self> {
        match kind {
            AnnealerKind::Fermion => Self::atomic(instance, Statistics::Fermion, lambda),
            AnnealerKind::Boson => Self::atomic(instance, Statistics::Boson, lambda),
            AnnealerKind::Ising => Self::ising(&instance.graph, lambda, alpha, PenaltyCheck::Reject),
        }
    }

    pub fn atomic(instance: &ProblemInstance, statistics: Statistics, lambda: f64) -> Result<Self> {
        let basis = SectorBasis::half_filling(instance.n())?;
        let h_initial = build_onsite(&instance.geometry, &basis)?;
        let h_driver = build_tunneling(&instance.geometry, &basis, statistics)?;
        let h_problem = build_problem_atomic(&instance.graph, &basis)?;
        Ok(HamiltonianParts {
            kind: match statistics {
                Statistics::Fermion => AnnealerKind::Fermion,
                Statistics::Boson => AnnealerKind::Boson,
            },
            basis: AnnealBasis::Sector(basis),
            h_initial,
            h_driver,
            h_problem,
            lambda,
            alpha: DEFAULT_ALPHA,
        })
    }

    pub fn ising(graph: &Graph, lambda: f64, alpha: f64, check: PenaltyCheck) -> Result<Self> {
        let h_problem = build_ising_problem(graph, alpha, check)?;
        let (h_initial, h_driver) = build_ising_drivers(graph.n())?;
        Ok(HamiltonianParts {
            kind: AnnealerKind::Ising,
            basis: AnnealBasis::Full(FullBasis::new(graph.n())?),
            h_initial,
            h_driver,
            h_problem,
            lambda,
            alpha,
        })
    }

    pub fn dim(&self) -> usize {
        self.h_initial.dim()
    }

    pub fn n_sites(&self) -> usize {
        self.basis.n_sites()
    }

    pub fn weights(&self, s: f64) -> Weights {
        Weights::at(s, self.lambda)
    }

    /// Matrix-free view of `Σ w_k H_k` for arbitrary weights.
    pub fn weighted(&self, weights: Weights) -> WeightedHamiltonian<'_> {
        WeightedHamiltonian { parts: self, weights }
    }

    /// Matrix-free view of `H(s)`.
    pub fn at_s(&self, s: f64) -> WeightedHamiltonian<'_> {
        self.weighted(self.weights(s))
    }

    /// Explicit sparse matrix of `H(s)`.
    pub fn assemble(&self, s: f64) -> Result<SparseOperator> {
        if !(0.0..=1.0).contains(&s) {
            return Err(Error::invalid(format!("schedule parameter s = {s} outside [0, 1]")));
        }
        let w = self.weights(s);
        SparseOperator::linear_combination(&[
            (w.initial, &self.h_initial),
            (w.driver, &self.h_driver),
            (w.problem, &self.h_problem),
        ])
    }
}

impl ParametricOperator for HamiltonianParts {
    fn n_sites(&self) -> usize {
        self.basis.n_sites()
    }

    fn dim(&self) -> usize {
        self.h_initial.dim()
    }

    fn at(&self, s: f64) -> Box<dyn LinearOperator + '_> {
        Box::new(self.at_s(s))
    }
}

/// `w_i H_initial + w_d H_driver + w_p H_problem` applied without assembly.
#[derive(Debug, Clone, Copy)]
pub struct WeightedHamiltonian<'a> {
    parts: &'a HamiltonianParts,
    weights: Weights,
}

impl WeightedHamiltonian<'_> {
    fn apply_generic<T>(&self, x: &[T], y: &mut [T])
    where
        T: Copy + AddAssign + Mul<f64, Output = T>,
    {
        let w = self.weights;
        let p = self.parts;
        // both diagonal components are purely diagonal, the driver purely off-diagonal
        for (((yi, &xi), &a), &b) in y
            .iter_mut()
            .zip(x)
            .zip(&p.h_initial.diagonal)
            .zip(&p.h_problem.diagonal)
        {
            *yi = xi * (w.initial * a + w.problem * b);
        }
        p.h_initial.add_offdiag(w.initial, x, y);
        p.h_problem.add_offdiag(w.problem, x, y);
        if w.driver != 0.0 {
            for ((yi, &xi), &d) in y.iter_mut().zip(x).zip(&p.h_driver.diagonal) {
                if d != 0.0 {
                    *yi += xi * (w.driver * d);
                }
            }
            p.h_driver.add_offdiag(w.driver, x, y);
        }
    }
}

impl LinearOperator for WeightedHamiltonian<'_> {
    fn dim(&self) -> usize {
        self.parts.dim()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.apply_generic(x, y);
    }

    fn apply_complex(&self, x: &[Complex64], y: &mut [Complex64]) {
        self.apply_generic(x, y);
    }

    fn diagonal_entries(&self) -> Option<Vec<f64>> {
        let w = self.weights;
        let p = self.parts;
        Some(
            p.h_initial
                .diagonal
                .iter()
                .zip(&p.h_problem.diagonal)
                .zip(&p.h_driver.diagonal)
                .map(|((a, b), d)| w.initial * a + w.problem * b + w.driver * d)
                .collect(),
        )
    }
}
