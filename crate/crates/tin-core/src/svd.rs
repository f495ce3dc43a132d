//! Randomized truncated SVD over implicitly applied operators.
//!
//! The factorization pipeline is: seeded Gaussian sketch, Gram-Schmidt QR
//! with re-orthogonalization, a configurable number of subspace power
//! iterations, then an exact one-sided Jacobi SVD of the small projected
//! matrix. Operators are only ever touched through [`MatrixApply`], so the
//! sketch works for matrices that are never materialized.
//!
//! Determinism: the same seed and shapes give bit-identical factors. Ties and
//! sign freedoms are resolved by fixed conventions (descending singular
//! values, stable order on ties, the largest-magnitude entry of each right
//! singular vector made nonnegative).

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::mat::{dot, Mat};

/// Left-multiplication access to an m×n operator.
pub trait MatrixApply {
    fn rows(&self) -> usize;
    fn cols(&self) -> usize;
    /// M · x for x with `cols()` rows.
    fn apply(&self, x: &Mat) -> Mat;
    /// Mᵀ · x for x with `rows()` rows.
    fn apply_t(&self, x: &Mat) -> Mat;
}

impl MatrixApply for Mat {
    fn rows(&self) -> usize {
        self.rows
    }
    fn cols(&self) -> usize {
        self.cols
    }
    fn apply(&self, x: &Mat) -> Mat {
        self.matmul(x).expect("shape checked by caller")
    }
    fn apply_t(&self, x: &Mat) -> Mat {
        self.matmul_tn(x).expect("shape checked by caller")
    }
}

#[derive(Debug, Clone)]
pub struct SvdConfig {
    /// Extra sketch columns beyond the requested rank.
    pub oversample: usize,
    /// Subspace iterations; each one sharpens the sketch toward the top
    /// singular subspace at the cost of two more operator passes.
    pub power_iters: usize,
}

impl Default for SvdConfig {
    fn default() -> Self {
        SvdConfig { oversample: 8, power_iters: 2 }
    }
}

/// Economy factorization M ≈ U · diag(s) · Vᵀ.
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: Mat,
    pub s: Vec<f64>,
    pub v: Mat,
}

/// Relative threshold below which a singular value is treated as zero and its
/// vector replaced by an orthonormal completion.
const RANK_CUTOFF: f64 = 1e-12;

/// Seeded Gaussian sketch matrix, filled row-major.
fn gaussian(rows: usize, cols: usize, seed: u64) -> Mat {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut m = Mat::zeros(rows, cols);
    for r in 0..rows {
        for c in 0..cols {
            *m.at_mut(r, c) = StandardNormal.sample(&mut rng);
        }
    }
    m
}

/// Subtract from column `j` of `a` its projections onto columns `0..j`,
/// done twice for numerical re-orthogonalization. Returns the residual norm.
fn reproject(a: &mut Mat, j: usize) -> f64 {
    let rows = a.rows;
    for _pass in 0..2 {
        for p in 0..j {
            let mut coef = 0.0;
            for r in 0..rows {
                coef += a.at(r, p) * a.at(r, j);
            }
            for r in 0..rows {
                let v = coef * a.at(r, p);
                *a.at_mut(r, j) -= v;
            }
        }
    }
    let mut norm2 = 0.0;
    for r in 0..rows {
        norm2 += a.at(r, j) * a.at(r, j);
    }
    norm2.sqrt()
}

/// Replace column `j` with a canonical basis vector orthogonalized against
/// columns `0..j`. The candidate leaving the largest residual wins, ties
/// favoring the lowest index, so the choice is deterministic. For j < rows
/// the best residual is at least sqrt((rows−j)/rows) up to roundoff.
fn complete_column(a: &mut Mat, j: usize) {
    let rows = a.rows;
    let mut best = (0usize, -1.0f64);
    for cand in 0..rows {
        for r in 0..rows {
            *a.at_mut(r, j) = if r == cand { 1.0 } else { 0.0 };
        }
        let norm = reproject(a, j);
        if norm > best.1 {
            best = (cand, norm);
        }
    }
    assert!(best.1 > 1e-8, "orthonormal completion failed at column {j}");
    for r in 0..rows {
        *a.at_mut(r, j) = if r == best.0 { 1.0 } else { 0.0 };
    }
    let norm = reproject(a, j);
    for r in 0..rows {
        *a.at_mut(r, j) /= norm;
    }
}

/// Modified Gram-Schmidt QR returning only Q. Columns that collapse to zero
/// (rank deficiency in the sketch) are replaced by orthonormal completions,
/// so Q always has exactly `a.cols` orthonormal columns.
fn mgs_qr(a: &Mat) -> Mat {
    let mut q = a.clone();
    for j in 0..q.cols {
        let mut orig = 0.0;
        for r in 0..q.rows {
            orig += q.at(r, j) * q.at(r, j);
        }
        let orig = orig.sqrt();
        let norm = reproject(&mut q, j);
        if norm > 1e-8 * orig.max(1e-300) && norm > 0.0 {
            for r in 0..q.rows {
                *q.at_mut(r, j) /= norm;
            }
        } else {
            complete_column(&mut q, j);
        }
    }
    q
}

/// One-sided Jacobi SVD of a tall matrix: a = u · diag(s) · vᵀ with s sorted
/// descending. `u` inherits a's shape (zero-σ columns orthonormally
/// completed); `v` is square orthogonal.
fn one_sided_jacobi(a: &Mat) -> (Mat, Vec<f64>, Mat) {
    assert!(a.rows >= a.cols, "jacobi svd wants a tall input");
    let mut w = a.clone();
    let n = a.cols;
    let mut v = Mat::eye(n);
    for _sweep in 0..60 {
        let mut rotated = false;
        for p in 0..n {
            for q in (p + 1)..n {
                let mut alpha = 0.0;
                let mut beta = 0.0;
                let mut gamma = 0.0;
                for r in 0..w.rows {
                    let wp = w.at(r, p);
                    let wq = w.at(r, q);
                    alpha += wp * wp;
                    beta += wq * wq;
                    gamma += wp * wq;
                }
                if gamma.abs() <= 1e-15 * (alpha * beta).sqrt().max(1e-300) {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for r in 0..w.rows {
                    let wp = w.at(r, p);
                    let wq = w.at(r, q);
                    *w.at_mut(r, p) = c * wp - s * wq;
                    *w.at_mut(r, q) = s * wp + c * wq;
                }
                for r in 0..n {
                    let vp = v.at(r, p);
                    let vq = v.at(r, q);
                    *v.at_mut(r, p) = c * vp - s * vq;
                    *v.at_mut(r, q) = s * vp + c * vq;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let mut sigma: Vec<f64> = (0..n)
        .map(|j| {
            let mut s2 = 0.0;
            for r in 0..w.rows {
                s2 += w.at(r, j) * w.at(r, j);
            }
            s2.sqrt()
        })
        .collect();
    // Sort descending, stable on ties.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| sigma[j].partial_cmp(&sigma[i]).unwrap().then(i.cmp(&j)));
    let mut u = Mat::zeros(w.rows, n);
    let mut vs = Mat::zeros(n, n);
    let sorted: Vec<f64> = order.iter().map(|&j| sigma[j]).collect();
    for (new, &old) in order.iter().enumerate() {
        for r in 0..w.rows {
            *u.at_mut(r, new) = w.at(r, old);
        }
        for r in 0..n {
            *vs.at_mut(r, new) = v.at(r, old);
        }
    }
    sigma = sorted;
    let smax = sigma.first().copied().unwrap_or(0.0);
    for j in 0..n {
        if sigma[j] > RANK_CUTOFF * smax && sigma[j] > 0.0 {
            for r in 0..u.rows {
                *u.at_mut(r, j) /= sigma[j];
            }
        } else {
            sigma[j] = 0.0;
            complete_column(&mut u, j);
        }
    }
    (u, sigma, vs)
}

/// Flip factor signs so the largest-magnitude entry of each right singular
/// vector is nonnegative (ties broken by lowest row index).
fn apply_sign_convention(u: &mut Mat, v: &mut Mat) {
    for j in 0..v.cols {
        let mut best = 0usize;
        for r in 1..v.rows {
            if v.at(r, j).abs() > v.at(best, j).abs() {
                best = r;
            }
        }
        if v.at(best, j) < 0.0 {
            for r in 0..v.rows {
                *v.at_mut(r, j) = -v.at(r, j);
            }
            for r in 0..u.rows {
                *u.at_mut(r, j) = -u.at(r, j);
            }
        }
    }
}

/// Randomized top-k SVD of an implicitly applied operator.
///
/// Requesting k beyond the operator's numerical rank is not an error: the
/// trailing singular values come back as exact zeros with orthonormally
/// completed singular vectors.
pub fn rsvd(op: &dyn MatrixApply, k: usize, cfg: &SvdConfig, seed: u64) -> Result<Svd> {
    let (m, n) = (op.rows(), op.cols());
    if k == 0 {
        return Err(Error::Contract("svd rank k must be at least 1".into()));
    }
    if k > m.min(n) {
        return Err(Error::Contract(format!(
            "svd rank k={k} exceeds min dimension {} of a {m}x{n} operator",
            m.min(n)
        )));
    }
    let l = (k + cfg.oversample).min(m.min(n));
    let omega = gaussian(n, l, seed);
    let mut q = mgs_qr(&op.apply(&omega));
    for _ in 0..cfg.power_iters {
        let z = mgs_qr(&op.apply_t(&q));
        q = mgs_qr(&op.apply(&z));
    }
    // bt = Mᵀ·Q is n×l and tall because l ≤ n; its SVD gives
    // M ≈ Q·btᵀ = (Q·w)·diag(s)·ũᵀ.
    let bt = op.apply_t(&q);
    let (utilde, sigma, w) = one_sided_jacobi(&bt);
    let u_full = q.matmul(&w)?;
    let mut u = Mat::zeros(m, k);
    let mut v = Mat::zeros(n, k);
    for j in 0..k {
        for r in 0..m {
            *u.at_mut(r, j) = u_full.at(r, j);
        }
        for r in 0..n {
            *v.at_mut(r, j) = utilde.at(r, j);
        }
    }
    let s = sigma[..k].to_vec();
    apply_sign_convention(&mut u, &mut v);
    Ok(Svd { u, s, v })
}

/// Exact economy SVD by one-sided Jacobi, for small dense matrices.
pub fn dense_svd(m: &Mat) -> Result<Svd> {
    if m.rows.max(m.cols) > 512 {
        return Err(Error::Contract(format!(
            "dense svd capped at 512 on each side, got {}x{}",
            m.rows, m.cols
        )));
    }
    if m.rows == 0 || m.cols == 0 {
        return Err(Error::Contract("dense svd needs a nonempty matrix".into()));
    }
    let (mut u, s, mut v) = if m.rows >= m.cols {
        one_sided_jacobi(m)
    } else {
        let (ua, s, va) = one_sided_jacobi(&m.transpose());
        (va, s, ua)
    };
    apply_sign_convention(&mut u, &mut v);
    Ok(Svd { u, s, v })
}

/// Max deviation of the columns of `a` from orthonormality.
pub fn orthonormality_error(a: &Mat) -> f64 {
    let mut worst = 0.0_f64;
    for p in 0..a.cols {
        for q in p..a.cols {
            let g = dot(a.col(p).as_slice(), a.col(q).as_slice());
            let target = if p == q { 1.0 } else { 0.0 };
            worst = worst.max((g - target).abs());
        }
    }
    worst
}
