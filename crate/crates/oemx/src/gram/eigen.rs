//! Largest-eigenvalue estimation for symmetric PSD matrices.
//!
//! The solver needs a scalar d >= lambda_1(X'X/n); convergence is fastest at
//! equality, so we estimate lambda_1 with the Lanczos recurrence (full
//! reorthogonalization, largest Ritz value extracted from the tridiagonal by
//! Sturm-sequence bisection) and then inflate by a small safety factor so the
//! dominance requirement survives estimation error. A single Rayleigh
//! quotient probe of the converged Ritz vector guards the estimate from
//! below.

use ndarray::{Array1, ArrayView2};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{OemError, Result};

/// Relative safety inflation applied to the converged estimate.
pub const D_SAFETY_INFLATION: f64 = 1e-8;

const START_VECTOR_SEED: u64 = 0x0ea1_1ab5;

/// Returns d with lambda_1 <= d <= lambda_1 * (1 + 10 * tol) for a symmetric
/// PSD input. Requires tol >= 1e-9 for the upper band to hold (the safety
/// inflation is fixed at 1e-8).
pub fn largest_eigenvalue(xtx: ArrayView2<'_, f64>, tol: f64, max_iter: usize) -> Result<f64> {
    let p = xtx.nrows();
    if p == 0 || xtx.ncols() != p {
        return Err(OemError::DimensionMismatch(format!(
            "expected square matrix, got {} x {}",
            p,
            xtx.ncols()
        )));
    }
    if !(tol > 0.0) {
        return Err(OemError::InvalidConfig("eigenvalue tolerance must be positive".into()));
    }
    let lam = match p {
        1 => xtx[[0, 0]].max(0.0),
        2 => {
            let a = xtx[[0, 0]];
            let c = xtx[[1, 1]];
            let b = 0.5 * (xtx[[0, 1]] + xtx[[1, 0]]);
            (0.5 * (a + c) + (0.25 * (a - c) * (a - c) + b * b).sqrt()).max(0.0)
        }
        _ => lanczos_top(xtx, tol, max_iter)?,
    };
    let diag_max = (0..p).map(|j| xtx[[j, j]]).fold(0.0f64, f64::max);
    let d = lam.max(diag_max) * (1.0 + D_SAFETY_INFLATION);
    Ok(d.max(1e-12))
}

/// A cheap always-valid upper bound: trace(xtx) >= lambda_1 for PSD input.
pub fn trace_bound(xtx: ArrayView2<'_, f64>) -> f64 {
    let t: f64 = (0..xtx.nrows()).map(|j| xtx[[j, j]]).sum();
    t.max(1e-12)
}

fn lanczos_top(a: ArrayView2<'_, f64>, tol: f64, max_iter: usize) -> Result<f64> {
    let p = a.nrows();
    let scale = (0..p).map(|j| a[[j, j]].abs()).fold(0.0f64, f64::max).max(1e-300);
    let kmax = p.min(max_iter.max(2));

    let mut rng = ChaCha8Rng::seed_from_u64(START_VECTOR_SEED);
    let mut v = Array1::from_shape_fn(p, |_| rng.random::<f64>() - 0.5);
    let norm = v.dot(&v).sqrt();
    v.mapv_inplace(|x| x / norm);

    // Basis kept for full reorthogonalization; p is moderate (columns of a
    // Gram matrix), so the O(p*k) storage is within the O(p^2) budget.
    let mut basis: Vec<Array1<f64>> = Vec::with_capacity(kmax);
    let mut alphas: Vec<f64> = Vec::with_capacity(kmax);
    let mut betas: Vec<f64> = Vec::with_capacity(kmax);
    let mut theta_prev = f64::NEG_INFINITY;

    for step in 0..kmax {
        basis.push(v.clone());
        let mut w = a.dot(&v);
        let alpha = w.dot(&v);
        if alpha < -1e-10 * scale {
            return Err(OemError::NotPsd);
        }
        w.scaled_add(-alpha, &v);
        if step > 0 {
            w.scaled_add(-betas[step - 1], &basis[step - 1]);
        }
        // Two-pass reorthogonalization keeps the basis numerically orthogonal.
        for _ in 0..2 {
            for q in &basis {
                let c = w.dot(q);
                w.scaled_add(-c, q);
            }
        }
        alphas.push(alpha);

        let theta = tridiag_max_eig(&alphas, &betas);
        let beta = w.dot(&w).sqrt();
        let breakdown = beta <= 1e-14 * scale.max(theta.abs());
        if step + 1 == p || breakdown {
            // Exact invariant subspace: the tridiagonalization is complete.
            return Ok(finish(a, &basis, &alphas, &betas, theta));
        }
        if (theta - theta_prev).abs() <= tol * theta.abs().max(1e-300) && step >= 2 {
            return Ok(finish(a, &basis, &alphas, &betas, theta));
        }
        theta_prev = theta;
        betas.push(beta);
        v = w.mapv(|x| x / beta);
    }
    Err(OemError::NotConverged(max_iter))
}

/// Rayleigh-quotient probe of the top Ritz vector; returns the larger of the
/// tridiagonal estimate and the probe.
fn finish(a: ArrayView2<'_, f64>, basis: &[Array1<f64>], alphas: &[f64], betas: &[f64], theta: f64) -> f64 {
    let s = tridiag_top_vector(alphas, betas, theta);
    let p = a.nrows();
    let mut ritz = Array1::<f64>::zeros(p);
    for (c, q) in s.iter().zip(basis) {
        ritz.scaled_add(*c, q);
    }
    let denom = ritz.dot(&ritz);
    if denom <= 0.0 {
        return theta;
    }
    let av = a.dot(&ritz);
    let rq = ritz.dot(&av) / denom;
    theta.max(rq)
}

/// Largest eigenvalue of the symmetric tridiagonal (alphas on the diagonal,
/// betas off-diagonal) via bisection on the Sturm-sequence negative count.
fn tridiag_max_eig(alphas: &[f64], betas: &[f64]) -> f64 {
    let k = alphas.len();
    if k == 1 {
        return alphas[0];
    }
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for i in 0..k {
        let left = if i > 0 { betas[i - 1].abs() } else { 0.0 };
        let right = if i < k - 1 { betas[i].abs() } else { 0.0 };
        lo = lo.min(alphas[i] - left - right);
        hi = hi.max(alphas[i] + left + right);
    }
    let span = (hi - lo).max(1e-300);
    let mut lo = lo - 1e-12 * span;
    let mut hi = hi + 1e-12 * span;
    for _ in 0..120 {
        let mid = 0.5 * (lo + hi);
        if count_below(alphas, betas, mid) >= k {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo <= 1e-15 * hi.abs().max(1.0) {
            break;
        }
    }
    hi
}

/// Number of eigenvalues strictly below x (Sturm sequence with the usual
/// guarded recurrence).
fn count_below(alphas: &[f64], betas: &[f64], x: f64) -> usize {
    let mut count = 0usize;
    let mut q = alphas[0] - x;
    if q < 0.0 {
        count += 1;
    }
    for i in 1..alphas.len() {
        let b2 = betas[i - 1] * betas[i - 1];
        let denom = if q == 0.0 { 1e-300 } else { q };
        q = alphas[i] - x - b2 / denom;
        if q < 0.0 {
            count += 1;
        }
    }
    count
}

/// Top eigenvector of the tridiagonal via one shifted inverse-iteration
/// sweep (tridiagonal LU with partial pivoting).
fn tridiag_top_vector(alphas: &[f64], betas: &[f64], theta: f64) -> Vec<f64> {
    let k = alphas.len();
    if k == 1 {
        return vec![1.0];
    }
    let shift = theta * (1.0 + 1e-12) + 1e-300;
    let mut x = vec![1.0f64; k];
    for _ in 0..2 {
        x = solve_shifted_tridiag(alphas, betas, shift, &x);
        let n = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !(n > 0.0) || !n.is_finite() {
            return vec![1.0 / (k as f64).sqrt(); k];
        }
        for v in &mut x {
            *v /= n;
        }
    }
    x
}

fn solve_shifted_tridiag(alphas: &[f64], betas: &[f64], shift: f64, rhs: &[f64]) -> Vec<f64> {
    let k = alphas.len();
    // Bands of T - shift*I: dl (sub), d (main), du (super), du2 (fill-in).
    let mut d: Vec<f64> = alphas.iter().map(|a| a - shift).collect();
    let mut du: Vec<f64> = betas.to_vec();
    let mut dl: Vec<f64> = betas.to_vec();
    let mut du2 = vec![0.0f64; k.saturating_sub(2)];
    let mut b = rhs.to_vec();
    let mut perm = vec![false; k.saturating_sub(1)];

    for i in 0..k - 1 {
        if dl[i].abs() > d[i].abs() {
            perm[i] = true;
            d.swap(i, i + 1);
            b.swap(i, i + 1);
            let tmp = du[i];
            du[i] = d[i + 1];
            d[i + 1] = tmp;
            if i + 2 < k {
                du2[i] = du[i + 1];
                du[i + 1] = 0.0;
            }
        }
        let pivot = if d[i] == 0.0 { 1e-300 } else { d[i] };
        let m = dl[i] / pivot;
        d[i + 1] -= m * du[i];
        if i + 2 < k {
            du[i + 1] -= m * du2[i];
        }
        b[i + 1] -= m * b[i];
    }
    let _ = &mut perm;
    // Back substitution.
    let mut x = vec![0.0f64; k];
    let last = if d[k - 1] == 0.0 { 1e-300 } else { d[k - 1] };
    x[k - 1] = b[k - 1] / last;
    if k >= 2 {
        let dk = if d[k - 2] == 0.0 { 1e-300 } else { d[k - 2] };
        x[k - 2] = (b[k - 2] - du[k - 2] * x[k - 1]) / dk;
    }
    for i in (0..k.saturating_sub(2)).rev() {
        let di = if d[i] == 0.0 { 1e-300 } else { d[i] };
        x[i] = (b[i] - du[i] * x[i + 1] - du2[i] * x[i + 2]) / di;
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::arr2;

    #[test]
    fn identity_two_by_two() {
        let tol = 1e-9;
        let d = largest_eigenvalue(Array2::eye(2).view(), tol, 100).unwrap();
        assert!(d >= 1.0 && d <= 1.0 + 10.0 * tol, "d = {d}");
    }

    #[test]
    fn known_two_by_two_spectrum() {
        let tol = 1e-9;
        let m = arr2(&[[2.0, 1.0], [1.0, 2.0]]);
        let d = largest_eigenvalue(m.view(), tol, 100).unwrap();
        assert!(d >= 3.0 && d <= 3.0 * (1.0 + 10.0 * tol), "d = {d}");
    }

    #[test]
    fn not_converged_when_starved() {
        // 20x20 with a spread spectrum, but only 2 Lanczos steps allowed.
        let mut m = Array2::eye(20);
        for j in 0..20 {
            m[[j, j]] = 1.0 + j as f64;
            if j > 0 {
                m[[j, j - 1]] = 0.3;
                m[[j - 1, j]] = 0.3;
            }
        }
        let r = largest_eigenvalue(m.view(), 1e-12, 2);
        assert!(matches!(r, Err(OemError::NotConverged(_))));
        assert!(trace_bound(m.view()) >= 20.0);
    }

    use ndarray::Array2;

    #[test]
    fn sturm_matches_diag() {
        // Diagonal tridiagonal: max eig = max alpha.
        let a = [0.5, 3.25, 1.0];
        let b = [0.0, 0.0];
        assert!((tridiag_max_eig(&a, &b) - 3.25).abs() < 1e-12);
    }
}
