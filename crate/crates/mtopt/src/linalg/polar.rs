//! Exact polar factor via SVD, and its Newton-Schulz polynomial approximation.

use super::svd::svd;
use super::Mat;
use crate::error::{Error, Result};

/// Rank-deficiency threshold for the exact polar factor, relative to sigma_max.
pub const POLAR_RANK_TOL: f64 = 1e-12;

/// Quintic coefficients tuned for a steep slope at zero. They inflate small
/// singular values fast but admit a two-cycle around 1 instead of a fixed
/// point, so on their own they only reach a loose band.
pub const KELLER_JORDAN: (f64, f64, f64) = (3.4445, -4.7750, 2.0315);

/// Classical quintic Newton-Schulz coefficients: superattracting fixed point
/// at 1, but slow growth (x1.875) for small singular values.
pub const CLASSICAL: (f64, f64, f64) = (1.875, -1.25, 0.375);

/// Coefficient source for the Newton-Schulz iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NsCoefficients {
    /// Growth phase with [`KELLER_JORDAN`] followed by a short [`CLASSICAL`]
    /// tail (the last `min(3, k - 4)` of `k` iterations) that contracts the
    /// singular values onto 1.
    Hybrid,
    /// The same `(a, b, c)` for every iteration.
    Fixed(f64, f64, f64),
}

impl Default for NsCoefficients {
    fn default() -> Self {
        NsCoefficients::Hybrid
    }
}

impl NsCoefficients {
    fn at(&self, iteration: usize, total: usize) -> (f64, f64, f64) {
        match *self {
            NsCoefficients::Fixed(a, b, c) => (a, b, c),
            NsCoefficients::Hybrid => {
                let tail = total.saturating_sub(4).min(3);
                if iteration + tail >= total {
                    CLASSICAL
                } else {
                    KELLER_JORDAN
                }
            }
        }
    }
}

/// Orthogonal polar factor `U V^T` of `a`, from the exact SVD.
///
/// Errors with the numerical rank when the smallest singular value falls
/// below `1e-12 * sigma_max`.
pub fn polar_factor(a: &Mat) -> Result<Mat> {
    let decomp = svd(a)?;
    let k = decomp.sigma.len();
    let rank = decomp.rank(POLAR_RANK_TOL);
    if rank < k {
        return Err(Error::DegeneratePolar { rank, expected: k });
    }
    Ok(decomp.u.matmul(&decomp.vt))
}

/// Newton-Schulz approximation of `polar_factor(g)` with the default hybrid
/// coefficient schedule.
pub fn newton_schulz(g: &Mat, iterations: usize) -> Result<Mat> {
    newton_schulz_with(g, iterations, NsCoefficients::Hybrid)
}

/// Newton-Schulz iteration `X <- aX + b(XX^T)X + c(XX^T)^2 X` starting from
/// `X0 = g / ||g||_F`. Tall matrices are transposed first so the Gram product
/// stays on the small side, and transposed back at the end.
pub fn newton_schulz_with(g: &Mat, iterations: usize, coeffs: NsCoefficients) -> Result<Mat> {
    if iterations == 0 {
        return Err(Error::InvalidInput(
            "newton_schulz requires at least one iteration".into(),
        ));
    }
    let fnorm = g.frob_norm();
    if fnorm == 0.0 {
        return Err(Error::ZeroGradient);
    }

    let transposed = g.rows() > g.cols();
    let mut x = if transposed {
        g.transpose().scale(1.0 / fnorm)
    } else {
        g.scale(1.0 / fnorm)
    };

    for it in 0..iterations {
        let (a, b, c) = coeffs.at(it, iterations);
        let gram = x.matmul(&x.transpose());
        let gram2 = gram.matmul(&gram);
        let poly = gram.scale(b).add(&gram2.scale(c));
        x = x.scale(a).add(&poly.matmul(&x));
    }

    Ok(if transposed { x.transpose() } else { x })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Random matrix with prescribed extreme singular values (log-spaced
    /// spectrum between `smax` and `smax / cond`).
    pub(crate) fn random_with_condition(
        rng: &mut ChaCha8Rng,
        m: usize,
        n: usize,
        cond: f64,
        smax: f64,
    ) -> Mat {
        let k = m.min(n);
        let gauss_u = Mat::new(m, k, (0..m * k).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
        let gauss_v = Mat::new(n, k, (0..n * k).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
        let u = svd(&gauss_u).unwrap().u;
        let v = svd(&gauss_v).unwrap().u;
        let mut out = Mat::zeros(m, n);
        for l in 0..k {
            let frac = if k == 1 { 0.0 } else { l as f64 / (k - 1) as f64 };
            let s = smax * cond.powf(-frac);
            for i in 0..m {
                for j in 0..n {
                    let val = out.get(i, j) + s * u.get(i, l) * v.get(j, l);
                    out.set(i, j, val);
                }
            }
        }
        out
    }

    #[test]
    fn polar_of_positive_diagonal_is_identity() {
        let p = polar_factor(&Mat::from_diag(&[3.0, 1.0])).unwrap();
        assert!(p.max_abs_diff(&Mat::identity(2)) < 1e-12);
    }

    #[test]
    fn polar_of_orthogonal_is_itself() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let g = Mat::new(4, 4, (0..16).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
        let q = polar_factor(&g).unwrap();
        let p = polar_factor(&q).unwrap();
        assert!(p.max_abs_diff(&q) < 1e-9);
    }

    #[test]
    fn polar_columns_orthonormal() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = random_with_condition(&mut rng, 6, 4, 10.0, 2.0);
        let p = polar_factor(&a).unwrap();
        let gram = p.transpose().matmul(&p);
        assert!(gram.max_abs_diff(&Mat::identity(4)) < 1e-9);
    }

    #[test]
    fn polar_scale_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..10 {
            let a = random_with_condition(&mut rng, 5, 5, 8.0, 1.0);
            let c = rng.gen_range(0.01..100.0);
            let p1 = polar_factor(&a).unwrap();
            let p2 = polar_factor(&a.scale(c)).unwrap();
            assert!(p1.max_abs_diff(&p2) < 1e-9);
        }
    }

    #[test]
    fn polar_rejects_rank_deficient() {
        let a = Mat::new(3, 3, vec![1.0; 9]).unwrap();
        match polar_factor(&a) {
            Err(Error::DegeneratePolar { rank, expected }) => {
                assert_eq!(rank, 1);
                assert_eq!(expected, 3);
            }
            other => panic!("expected degenerate-polar error, got {other:?}"),
        }
    }

    #[test]
    fn ns_scalar_sign() {
        let g = Mat::new(1, 1, vec![2.0]).unwrap();
        let o = newton_schulz(&g, 10).unwrap();
        assert!((o.get(0, 0) - 1.0).abs() < 0.01, "got {}", o.get(0, 0));
    }

    #[test]
    fn ns_matches_polar_oracle() {
        let g = Mat::from_diag(&[3.0, 1.0]);
        let o = newton_schulz(&g, 10).unwrap();
        assert!(o.max_abs_diff(&polar_factor(&g).unwrap()) < 0.05);
    }

    #[test]
    fn ns_on_orthogonal_keeps_unit_spectrum() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for n in [2usize, 5, 8] {
            let g = Mat::new(n, n, (0..n * n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
            let q = polar_factor(&g).unwrap();
            let o = newton_schulz(&q, 10).unwrap();
            for s in svd(&o).unwrap().sigma {
                assert!((0.95..=1.05).contains(&s), "sigma {s} out of band (n={n})");
            }
        }
    }

    #[test]
    fn ns_band_for_5_and_10_iterations() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let m = rng.gen_range(2..=8);
            let n = rng.gen_range(2..=8);
            let cond = rng.gen_range(1.0..100.0);
            let smax = rng.gen_range(0.1..10.0);
            let a = random_with_condition(&mut rng, m, n, cond, smax);
            for (iters, tau) in [(5usize, 0.3), (10, 0.05)] {
                let o = newton_schulz(&a, iters).unwrap();
                for s in svd(&o).unwrap().sigma {
                    assert!(
                        (1.0 - tau..=1.0 + tau).contains(&s),
                        "sigma {s} outside band for k={iters} ({m}x{n}, cond {cond:.1})"
                    );
                }
            }
        }
    }

    #[test]
    fn ns_wide_matrix_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let a = random_with_condition(&mut rng, 3, 7, 5.0, 1.0);
        let o = newton_schulz(&a, 10).unwrap();
        assert_eq!((o.rows(), o.cols()), (3, 7));
        assert!(o.max_abs_diff(&polar_factor(&a).unwrap()) < 0.05);
    }

    #[test]
    fn ns_zero_matrix_errors() {
        assert!(matches!(
            newton_schulz(&Mat::zeros(2, 2), 5),
            Err(Error::ZeroGradient)
        ));
    }

    #[test]
    fn ns_pure_keller_jordan_stays_loose() {
        // The fixed KJ coefficients alone oscillate in a loose band; this
        // pins the configurable escape hatch.
        let g = Mat::from_diag(&[3.0, 1.0]);
        let o = newton_schulz_with(&g, 5, NsCoefficients::Fixed(3.4445, -4.7750, 2.0315)).unwrap();
        for s in svd(&o).unwrap().sigma {
            assert!((0.6..=1.4).contains(&s), "sigma {s}");
        }
    }
}
