//! Matrix-free linear algebra: operator traits, the lowest-eigenpair solvers
//! and the Krylov propagator used by the time evolution.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// A real symmetric operator available only through matrix-vector products.
pub trait LinearOperator: Sync {
    fn dim(&self) -> usize;

    /// `y = A x`.
    fn apply(&self, x: &[f64], y: &mut [f64]);

    /// `y = A x` for complex vectors (the matrix itself stays real).
    fn apply_complex(&self, x: &[Complex64], y: &mut [Complex64]);

    /// Main diagonal, when it is cheap to produce; enables preconditioning.
    fn diagonal_entries(&self) -> Option<Vec<f64>> {
        None
    }

    /// Dense copy built column by column.
    fn to_dense(&self) -> DMatrix<f64> {
        let n = self.dim();
        let mut m = DMatrix::zeros(n, n);
        let mut e = vec![0.0; n];
        let mut col = vec![0.0; n];
        for j in 0..n {
            e[j] = 1.0;
            self.apply(&e, &mut col);
            m.column_mut(j).copy_from_slice(&col);
            e[j] = 0.0;
        }
        m
    }
}

/// A one-parameter family `s ↦ H(s)` of operators on a lattice of sites.
pub trait ParametricOperator: Sync {
    /// Number of lattice sites, the normalization of per-site quantities.
    fn n_sites(&self) -> usize;
    fn dim(&self) -> usize;
    fn at(&self, s: f64) -> Box<dyn LinearOperator + '_>;
}

/// Lowest eigenpairs in ascending order with orthonormal vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenPairs {
    pub values: Vec<f64>,
    pub vectors: Vec<Vec<f64>>,
}

impl EigenPairs {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Full dense diagonalization, ascending.
pub fn dense_eigh(matrix: DMatrix<f64>) -> EigenPairs {
    let n = matrix.nrows();
    let eig = SymmetricEigen::new(matrix);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    EigenPairs {
        values: order.iter().map(|&i| eig.eigenvalues[i]).collect(),
        vectors: order
            .iter()
            .map(|&i| eig.eigenvectors.column(i).iter().copied().collect())
            .collect(),
    }
}

/// The `k` lowest eigenpairs by dense diagonalization.
pub fn lowest_eigs_dense(op: &dyn LinearOperator, k: usize) -> Result<EigenPairs> {
    check_k(op.dim(), k)?;
    let mut all = dense_eigh(op.to_dense());
    all.values.truncate(k);
    all.vectors.truncate(k);
    Ok(all)
}

fn check_k(dim: usize, k: usize) -> Result<()> {
    if k == 0 || k > dim {
        return Err(Error::invalid(format!(
            "requested {k} eigenpairs of a dimension-{dim} operator"
        )));
    }
    Ok(())
}

/// Settings of the restarted block Krylov solver.
#[derive(Debug, Clone)]
pub struct IterativeOptions {
    /// Residual bound `‖Hv - Ev‖ <= tol * max(1, |E|)` for every returned pair.
    pub tol: f64,
    /// Restart limit of the Lanczos solver.
    pub max_restarts: usize,
    /// Block size; defaults to `k` plus a small margin.
    pub block: Option<usize>,
    /// Largest basis kept before a thick restart.
    pub max_basis: Option<usize>,
    pub seed: u64,
}

impl Default for IterativeOptions {
    fn default() -> Self {
        IterativeOptions {
            tol: 1e-10,
            max_restarts: 400,
            block: None,
            max_basis: None,
            seed: 0x5eed_1a2c,
        }
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Orthogonalizes `v` against `basis` (two Gram-Schmidt passes) and
/// normalizes it. Returns `false` when nothing independent is left.
fn orthonormalize_against(basis: &[Vec<f64>], v: &mut [f64]) -> bool {
    let start = norm(v);
    if start == 0.0 || !start.is_finite() {
        return false;
    }
    for _ in 0..2 {
        for q in basis {
            let c = dot(q, v);
            axpy(-c, q, v);
        }
    }
    let left = norm(v);
    if left <= 1e-10 * start || left < 1e-300 {
        return false;
    }
    v.iter_mut().for_each(|x| *x /= left);
    true
}

/// The `k` lowest eigenpairs by thick-restart block Lanczos with full
/// reorthogonalization.
///
/// With a random starting block of size `p > k` the Krylov space contains a
/// `min(multiplicity, p)`-dimensional slice of every eigenspace, so degenerate
/// levels inside the `k` window are resolved completely.
pub fn lowest_eigs_iterative(
    op: &dyn LinearOperator,
    k: usize,
    opts: &IterativeOptions,
) -> Result<EigenPairs> {
    let n = op.dim();
    check_k(n, k)?;
    let p = opts.block.unwrap_or(k + (k / 3).max(3)).clamp(k, n);
    let max_basis = opts.max_basis.unwrap_or((8 * p).max(48)).clamp(p, n);

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ (n as u64).wrapping_mul(0x9e37_79b9));
    let mut block: Vec<Vec<f64>> = (0..p)
        .map(|_| (0..n).map(|_| rng.random::<f64>() - 0.5).collect())
        .collect();

    let mut q: Vec<Vec<f64>> = Vec::with_capacity(max_basis);
    let mut hq: Vec<Vec<f64>> = Vec::with_capacity(max_basis);
    let mut worst = f64::INFINITY;

    for _restart in 0..opts.max_restarts {
        // grow the block Krylov space
        loop {
            let mut added = Vec::new();
            for mut v in block.drain(..) {
                if q.len() >= max_basis {
                    break;
                }
                if orthonormalize_against(&q, &mut v) {
                    let mut hv = vec![0.0; n];
                    op.apply(&v, &mut hv);
                    q.push(v);
                    hv.shrink_to_fit();
                    hq.push(hv);
                    added.push(q.len() - 1);
                }
            }
            if added.is_empty() || q.len() >= max_basis {
                break;
            }
            block = added.iter().map(|&i| hq[i].clone()).collect();
        }

        // Rayleigh-Ritz on span(q)
        let r = q.len();
        let mut t = DMatrix::zeros(r, r);
        for i in 0..r {
            for j in i..r {
                let v = 0.5 * (dot(&q[i], &hq[j]) + dot(&q[j], &hq[i]));
                t[(i, j)] = v;
                t[(j, i)] = v;
            }
        }
        let ritz = dense_eigh(t);
        let keep = p.min(r);
        let mut x: Vec<Vec<f64>> = Vec::with_capacity(keep);
        for y in ritz.vectors.iter().take(keep) {
            let mut v = vec![0.0; n];
            for (coef, qj) in y.iter().zip(&q) {
                axpy(*coef, qj, &mut v);
            }
            x.push(v);
        }
        // re-orthonormalize the Ritz block against round-off
        let mut xs: Vec<Vec<f64>> = Vec::with_capacity(keep);
        for mut v in x {
            if orthonormalize_against(&xs, &mut v) {
                xs.push(v);
            }
        }
        let hx: Vec<Vec<f64>> = xs
            .iter()
            .map(|v| {
                let mut hv = vec![0.0; n];
                op.apply(v, &mut hv);
                hv
            })
            .collect();
        let theta: Vec<f64> = xs.iter().zip(&hx).map(|(v, hv)| dot(v, hv)).collect();
        let residuals: Vec<Vec<f64>> = hx
            .iter()
            .zip(&xs)
            .zip(&theta)
            .map(|((hv, v), &th)| {
                let mut res = hv.clone();
                axpy(-th, v, &mut res);
                res
            })
            .collect();

        // Ritz values of the refreshed block, ascending
        let mut order: Vec<usize> = (0..xs.len()).collect();
        order.sort_by(|&a, &b| theta[a].total_cmp(&theta[b]));
        worst = 0.0;
        let mut converged = xs.len() >= k;
        for &i in order.iter().take(k) {
            let scaled = norm(&residuals[i]) / theta[i].abs().max(1.0);
            worst = worst.max(scaled);
            if scaled > opts.tol {
                converged = false;
            }
        }
        if converged {
            let mut values = Vec::with_capacity(k);
            let mut vectors = Vec::with_capacity(k);
            for &i in order.iter().take(k) {
                values.push(theta[i]);
                vectors.push(xs[i].clone());
            }
            return Ok(EigenPairs { values, vectors });
        }

        // thick restart: keep the Ritz block, continue from its residuals
        block = order.iter().map(|&i| residuals[i].clone()).collect();
        q = order.iter().map(|&i| xs[i].clone()).collect();
        hq = order.iter().map(|&i| hx[i].clone()).collect();
        if q.len() >= n {
            // the whole space is spanned; nothing left to add
            block.clear();
        }
    }
    Err(Error::NoConvergence {
        iterations: opts.max_restarts,
        residual: worst,
    })
}

/// Largest Davidson iteration count before giving up.
const DAVIDSON_MAX_ITERATIONS: usize = 3000;

/// The `k` lowest eigenpairs by block Davidson with a diagonal preconditioner.
///
/// The correction for Ritz pair `(θ, x)` is `(θ - diag(H))^{-1} r`, which
/// resolves clusters of nearly equal diagonal energies in a few iterations,
/// where Lanczos needs a polynomial sharp enough to split them. `start`
/// vectors (e.g. eigenvectors at a neighbouring schedule point) seed the
/// search space. Returns `Ok(None)` when the operator cannot supply its
/// diagonal.
pub fn lowest_eigs_davidson(
    op: &dyn LinearOperator,
    k: usize,
    opts: &IterativeOptions,
    start: Option<&[Vec<f64>]>,
) -> Result<Option<EigenPairs>> {
    let n = op.dim();
    check_k(n, k)?;
    let Some(diag) = op.diagonal_entries() else {
        return Ok(None);
    };
    let p = opts.block.unwrap_or(k + 1).clamp(k, n);
    let max_basis = opts.max_basis.unwrap_or((6 * p).max(32)).clamp((2 * p).min(n), n);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ (n as u64).wrapping_mul(0x9e37_79b9));

    let mut q: Vec<Vec<f64>> = Vec::with_capacity(max_basis);
    let mut hq: Vec<Vec<f64>> = Vec::with_capacity(max_basis);
    let mut t: Vec<Vec<f64>> = Vec::new();

    let push = |v: Vec<f64>, q: &mut Vec<Vec<f64>>, hq: &mut Vec<Vec<f64>>, t: &mut Vec<Vec<f64>>| {
        let mut hv = vec![0.0; n];
        op.apply(&v, &mut hv);
        let row: Vec<f64> = q.iter().map(|qi| dot(qi, &hv)).collect();
        for (ti, &x) in t.iter_mut().zip(&row) {
            ti.push(x);
        }
        let mut row = row;
        row.push(dot(&v, &hv));
        t.push(row);
        q.push(v);
        hq.push(hv);
    };

    let mut seeds: Vec<Vec<f64>> = start.map(|s| s.to_vec()).unwrap_or_default();
    if seeds.len() < p {
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| diag[a].total_cmp(&diag[b]));
        for &j in order.iter().take(p - seeds.len()) {
            let mut v: Vec<f64> = (0..n).map(|_| 1e-3 * (rng.random::<f64>() - 0.5)).collect();
            v[j] += 1.0;
            seeds.push(v);
        }
    }
    for mut v in seeds {
        if q.len() < max_basis && orthonormalize_against(&q, &mut v) {
            push(v, &mut q, &mut hq, &mut t);
        }
    }

    let mut worst = f64::INFINITY;
    for _iteration in 0..DAVIDSON_MAX_ITERATIONS {
        let r = q.len();
        let tm = DMatrix::from_fn(r, r, |i, j| 0.5 * (t[i][j] + t[j][i]));
        let ritz = dense_eigh(tm);
        let m = p.min(r);
        let mut xs = Vec::with_capacity(m);
        let mut hxs = Vec::with_capacity(m);
        let mut residuals = Vec::with_capacity(m);
        for (y, &theta) in ritz.vectors.iter().zip(&ritz.values).take(m) {
            let mut x = vec![0.0; n];
            let mut hx = vec![0.0; n];
            for ((c, qj), hqj) in y.iter().zip(&q).zip(&hq) {
                axpy(*c, qj, &mut x);
                axpy(*c, hqj, &mut hx);
            }
            let mut res = hx.clone();
            axpy(-theta, &x, &mut res);
            xs.push(x);
            hxs.push(hx);
            residuals.push(res);
        }
        let scaled: Vec<f64> = residuals
            .iter()
            .zip(&ritz.values)
            .map(|(res, th)| norm(res) / th.abs().max(1.0))
            .collect();
        worst = scaled.iter().take(k).cloned().fold(0.0, f64::max);
        if m >= k && worst <= opts.tol {
            // confirm against fresh products, free of accumulated round-off
            let mut ok = true;
            let mut values = Vec::with_capacity(k);
            for (x, &th) in xs.iter().zip(&ritz.values).take(k) {
                let mut hx = vec![0.0; n];
                op.apply(x, &mut hx);
                axpy(-th, x, &mut hx);
                ok &= norm(&hx) <= opts.tol * th.abs().max(1.0);
                values.push(th);
            }
            if ok {
                xs.truncate(k);
                return Ok(Some(EigenPairs { values, vectors: xs }));
            }
        }

        if r + m > max_basis {
            // thick restart on the leading Ritz vectors
            let keep = (2 * p).min(r).min(max_basis - m);
            let mut nq = Vec::with_capacity(max_basis);
            for y in ritz.vectors.iter().take(keep) {
                let mut x = vec![0.0; n];
                for (c, qj) in y.iter().zip(&q) {
                    axpy(*c, qj, &mut x);
                }
                if orthonormalize_against(&nq, &mut x) {
                    nq.push(x);
                }
            }
            q.clear();
            hq.clear();
            t.clear();
            for v in nq {
                push(v, &mut q, &mut hq, &mut t);
            }
        }

        let mut added = 0;
        for i in 0..m {
            if scaled[i] <= opts.tol * 0.1 {
                continue;
            }
            let theta = ritz.values[i];
            let mut c: Vec<f64> = residuals[i]
                .iter()
                .zip(&diag)
                .map(|(ri, di)| {
                    let den = theta - di;
                    ri / if den.abs() < 1e-10 { 1e-10f64.copysign(den) } else { den }
                })
                .collect();
            if !orthonormalize_against(&q, &mut c) {
                c = residuals[i].clone();
                if !orthonormalize_against(&q, &mut c) {
                    continue;
                }
            }
            if q.len() < max_basis {
                push(c, &mut q, &mut hq, &mut t);
                added += 1;
            }
        }
        if added == 0 {
            let mut v: Vec<f64> = (0..n).map(|_| rng.random::<f64>() - 0.5).collect();
            if q.len() >= max_basis || !orthonormalize_against(&q, &mut v) {
                break;
            }
            push(v, &mut q, &mut hq, &mut t);
        }
    }
    Err(Error::NoConvergence {
        iterations: DAVIDSON_MAX_ITERATIONS,
        residual: worst,
    })
}

#[inline]
fn cdot(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

pub fn cnorm(a: &[Complex64]) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Outcome of one Krylov exponential step.
#[derive(Debug, Clone, Copy)]
pub struct KrylovStep {
    pub subspace: usize,
    pub error_estimate: f64,
}

/// Replaces `psi` by `exp(-i H dt) psi` using a Lanczos subspace of at most
/// `max_dim` vectors.
///
/// Fails (leaving `psi` untouched) when the a posteriori error estimate
/// `β_m |[exp(-i T_m dt) e_1]_m|` stays above `tol` at `max_dim`; the caller
/// then subdivides the step.
pub fn krylov_expm_apply(
    op: &dyn LinearOperator,
    psi: &mut [Complex64],
    dt: f64,
    tol: f64,
    max_dim: usize,
) -> std::result::Result<KrylovStep, f64> {
    let n = psi.len();
    let beta0 = cnorm(psi);
    if beta0 == 0.0 {
        return Ok(KrylovStep {
            subspace: 0,
            error_estimate: 0.0,
        });
    }
    let max_dim = max_dim.min(n).max(1);
    let mut v: Vec<Vec<Complex64>> = Vec::with_capacity(max_dim);
    v.push(psi.iter().map(|z| z / beta0).collect());
    let mut alpha: Vec<f64> = Vec::with_capacity(max_dim);
    let mut beta: Vec<f64> = Vec::with_capacity(max_dim);
    let mut w = vec![Complex64::new(0.0, 0.0); n];
    let mut last_err = f64::INFINITY;

    for j in 0..max_dim {
        op.apply_complex(&v[j], &mut w);
        let a = cdot(&v[j], &w).re;
        alpha.push(a);
        // full reorthogonalization, twice
        for _ in 0..2 {
            for vi in &v {
                let c = cdot(vi, &w);
                for (wk, vk) in w.iter_mut().zip(vi) {
                    *wk -= c * vk;
                }
            }
        }
        let b = cnorm(&w);
        let m = j + 1;
        let coeffs = small_expm_e1(&alpha, &beta, dt);
        let breakdown = b <= 1e-13 * (a.abs().max(1.0));
        let err = if breakdown { 0.0 } else { b * coeffs[m - 1].norm() };
        last_err = err;
        if err <= tol || breakdown || m == n {
            for z in psi.iter_mut() {
                *z = Complex64::new(0.0, 0.0);
            }
            for (c, vi) in coeffs.iter().zip(&v) {
                let c = c * beta0;
                for (z, vk) in psi.iter_mut().zip(vi) {
                    *z += c * vk;
                }
            }
            return Ok(KrylovStep {
                subspace: m,
                error_estimate: err,
            });
        }
        if m == max_dim {
            break;
        }
        beta.push(b);
        v.push(w.iter().map(|z| z / b).collect());
    }
    Err(last_err)
}

/// `exp(-i T dt) e_1` for the symmetric tridiagonal `T = tridiag(beta, alpha, beta)`.
fn small_expm_e1(alpha: &[f64], beta: &[f64], dt: f64) -> Vec<Complex64> {
    let m = alpha.len();
    let mut t = DMatrix::zeros(m, m);
    for i in 0..m {
        t[(i, i)] = alpha[i];
        if i + 1 < m {
            t[(i, i + 1)] = beta[i];
            t[(i + 1, i)] = beta[i];
        }
    }
    let eig = SymmetricEigen::new(t);
    let s = &eig.eigenvectors;
    (0..m)
        .map(|i| {
            (0..m)
                .map(|l| {
                    let phase = Complex64::from_polar(1.0, -eig.eigenvalues[l] * dt);
                    phase * (s[(i, l)] * s[(0, l)])
                })
                .sum()
        })
        .collect()
}
