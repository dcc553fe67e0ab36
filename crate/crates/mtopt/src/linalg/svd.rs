//! One-sided Jacobi SVD for small dense matrices.

use super::Mat;
use crate::error::{Error, Result};

/// Thin singular value decomposition `A = U diag(sigma) Vt`.
///
/// `u` is `m x k`, `sigma` has `k = min(m, n)` non-negative entries sorted in
/// non-increasing order, and `vt` is `k x n`.
#[derive(Debug, Clone)]
pub struct SvdResult {
    pub u: Mat,
    pub sigma: Vec<f64>,
    pub vt: Mat,
}

impl SvdResult {
    /// Reconstructs `U diag(sigma) Vt`.
    pub fn reconstruct(&self) -> Mat {
        let k = self.sigma.len();
        let m = self.u.rows();
        let n = self.vt.cols();
        let mut out = Mat::zeros(m, n);
        for i in 0..m {
            for j in 0..n {
                let mut acc = 0.0;
                for l in 0..k {
                    acc += self.u.get(i, l) * self.sigma[l] * self.vt.get(l, j);
                }
                out.set(i, j, acc);
            }
        }
        out
    }

    /// Numerical rank: count of singular values above `tol * sigma_max`.
    pub fn rank(&self, tol: f64) -> usize {
        let smax = self.sigma.first().copied().unwrap_or(0.0);
        if smax == 0.0 {
            return 0;
        }
        self.sigma.iter().filter(|&&s| s > tol * smax).count()
    }
}

/// Computes the thin SVD of `a` by one-sided (Hestenes) Jacobi rotations.
///
/// Intended for the small-matrix regime (`min(rows, cols) <= 512`). Returns
/// an invalid-input error for non-finite entries or an empty matrix.
pub fn svd(a: &Mat) -> Result<SvdResult> {
    if a.rows() == 0 || a.cols() == 0 {
        return Err(Error::InvalidInput("empty matrix".into()));
    }
    if a.data().iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidInput(
            "matrix contains non-finite entries".into(),
        ));
    }
    if a.rows() >= a.cols() {
        svd_tall(a)
    } else {
        // A^T = U' S V'^T  =>  A = V' S U'^T
        let t = svd_tall(&a.transpose())?;
        Ok(SvdResult {
            u: t.vt.transpose(),
            sigma: t.sigma,
            vt: t.u.transpose(),
        })
    }
}

/// One-sided Jacobi on an `m x n` matrix with `m >= n`: orthogonalize the
/// columns of a working copy `W = A * V` by right rotations, then read off
/// `sigma_j = ||w_j||` and `u_j = w_j / sigma_j`.
fn svd_tall(a: &Mat) -> Result<SvdResult> {
    let m = a.rows();
    let n = a.cols();
    let mut w = a.clone();
    let mut v = Mat::identity(n);

    let tol = 1e-14;
    let max_sweeps = 64;
    for _ in 0..max_sweeps {
        let mut rotated = false;
        for p in 0..n {
            for q in (p + 1)..n {
                let mut app = 0.0;
                let mut aqq = 0.0;
                let mut apq = 0.0;
                for i in 0..m {
                    let wp = w.get(i, p);
                    let wq = w.get(i, q);
                    app += wp * wp;
                    aqq += wq * wq;
                    apq += wp * wq;
                }
                if apq.abs() <= tol * (app * aqq).sqrt() || app == 0.0 || aqq == 0.0 {
                    continue;
                }
                rotated = true;
                // Jacobi rotation diagonalizing [[app, apq], [apq, aqq]].
                let zeta = (aqq - app) / (2.0 * apq);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let cs = 1.0 / (1.0 + t * t).sqrt();
                let sn = cs * t;
                for i in 0..m {
                    let wp = w.get(i, p);
                    let wq = w.get(i, q);
                    w.set(i, p, cs * wp - sn * wq);
                    w.set(i, q, sn * wp + cs * wq);
                }
                for i in 0..n {
                    let vp = v.get(i, p);
                    let vq = v.get(i, q);
                    v.set(i, p, cs * vp - sn * vq);
                    v.set(i, q, sn * vp + cs * vq);
                }
            }
        }
        if !rotated {
            break;
        }
    }

    // Column norms are the singular values; sort descending.
    let mut order: Vec<usize> = (0..n).collect();
    let norms: Vec<f64> = (0..n)
        .map(|j| (0..m).map(|i| w.get(i, j).powi(2)).sum::<f64>().sqrt())
        .collect();
    order.sort_by(|&x, &y| norms[y].partial_cmp(&norms[x]).unwrap());

    let mut u = Mat::zeros(m, n);
    let mut vt = Mat::zeros(n, n);
    let mut sigma = vec![0.0; n];
    let smax = norms[order[0]];
    for (slot, &j) in order.iter().enumerate() {
        sigma[slot] = norms[j];
        for i in 0..n {
            vt.set(slot, i, v.get(i, j));
        }
        if norms[j] > smax * 1e-300 && norms[j] > 0.0 {
            for i in 0..m {
                u.set(i, slot, w.get(i, j) / norms[j]);
            }
        }
    }
    // Replace columns for zero singular values with an orthonormal completion
    // so U keeps orthonormal columns.
    complete_orthonormal(&mut u, &sigma, smax);

    Ok(SvdResult { u, sigma, vt })
}

/// Fills the columns of `u` whose singular value vanished with unit vectors
/// orthogonal to the existing columns (Gram-Schmidt over the standard basis).
fn complete_orthonormal(u: &mut Mat, sigma: &[f64], smax: f64) {
    let m = u.rows();
    let k = u.cols();
    for j in 0..k {
        if sigma[j] > smax * 1e-300 && sigma[j] > 0.0 {
            continue;
        }
        let mut candidate = 0;
        loop {
            let mut col = vec![0.0; m];
            col[candidate % m] = 1.0;
            for prev in 0..k {
                if prev == j || (sigma[prev] == 0.0 && prev > j) {
                    continue;
                }
                let proj: f64 = (0..m).map(|i| u.get(i, prev) * col[i]).sum();
                for (i, c) in col.iter_mut().enumerate() {
                    *c -= proj * u.get(i, prev);
                }
            }
            let nrm = col.iter().map(|x| x * x).sum::<f64>().sqrt();
            if nrm > 1e-6 {
                for (i, c) in col.iter().enumerate() {
                    u.set(i, j, c / nrm);
                }
                break;
            }
            candidate += 1;
            assert!(candidate < 2 * m, "orthonormal completion failed");
        }
    }
}
