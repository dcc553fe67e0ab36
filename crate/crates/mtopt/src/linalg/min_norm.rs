//! Min-norm point in the convex hull of a set of vectors (the MGDA
//! subproblem), plus Euclidean projection onto the probability simplex.

use super::{axpy, dot, norm};
use crate::error::{Error, Result};

/// Convex weights: non-negative, summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct Simplex(Vec<f64>);

impl Simplex {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidInput("empty weight vector".into()));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidInput(
                "simplex weights must be finite and non-negative".into(),
            ));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidInput(format!(
                "simplex weights sum to {sum}, expected 1"
            )));
        }
        Ok(Self(weights))
    }

    pub fn uniform(k: usize) -> Self {
        Self(vec![1.0 / k as f64; k])
    }

    pub fn weights(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

/// Euclidean projection of `y` onto the probability simplex, by the sorting
/// algorithm (Held-Wolfe-Crowder).
pub fn project_to_simplex(y: &[f64]) -> Vec<f64> {
    let mut sorted = y.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (i, &v) in sorted.iter().enumerate() {
        cumsum += v;
        let candidate = (cumsum - 1.0) / (i + 1) as f64;
        if v - candidate > 0.0 {
            theta = candidate;
        }
    }
    y.iter().map(|&v| (v - theta).max(0.0)).collect()
}

/// Number of Frank-Wolfe iterations used by [`min_norm_simplex`].
pub const FRANK_WOLFE_ITERATIONS: usize = 250;

/// Finds convex weights `w` minimizing `|| sum_i w_i p_i ||` by Frank-Wolfe
/// with away steps and exact line search; `K = 2` short-circuits to the
/// analytic solution.
///
/// Returns the weights and the combined vector. The result is guaranteed not
/// to be worse than any vertex or the uniform weighting.
pub fn min_norm_simplex(points: &[Vec<f64>]) -> Result<(Simplex, Vec<f64>)> {
    if points.is_empty() {
        return Err(Error::InvalidInput("no points given".into()));
    }
    let dim = points[0].len();
    if points.iter().any(|p| p.len() != dim) {
        return Err(Error::InvalidInput(
            "points have mismatched dimensions".into(),
        ));
    }
    let k = points.len();
    if k == 1 {
        return Ok((Simplex(vec![1.0]), points[0].clone()));
    }
    if k == 2 {
        let gamma = pairwise_line_search(&points[0], &points[1]);
        let weights = vec![1.0 - gamma, gamma];
        let combined = combine(points, &weights);
        return Ok((Simplex(weights), combined));
    }

    // Start from the smallest vertex so the exact line search only improves.
    let start = (0..k)
        .min_by(|&a, &b| norm(&points[a]).partial_cmp(&norm(&points[b])).unwrap())
        .unwrap();
    let mut weights = vec![0.0; k];
    weights[start] = 1.0;
    let mut combined = points[start].clone();
    let scale_sq = points
        .iter()
        .map(|p| dot(p, p))
        .fold(0.0, f64::max)
        .max(1e-300);

    for _ in 0..FRANK_WOLFE_ITERATIONS {
        // The gradient of 0.5 ||sum w_i p_i||^2 in w_i is <p_i, combined>.
        let grads: Vec<f64> = points.iter().map(|p| dot(p, &combined)).collect();
        let s = (0..k)
            .min_by(|&a, &b| grads[a].partial_cmp(&grads[b]).unwrap())
            .unwrap();
        let a = (0..k)
            .filter(|&i| weights[i] > 0.0)
            .max_by(|&x, &y| grads[x].partial_cmp(&grads[y]).unwrap())
            .unwrap();
        let at_w: f64 = weights.iter().zip(&grads).map(|(w, g)| w * g).sum();
        let fw_gap = at_w - grads[s];
        let away_gap = grads[a] - at_w;
        if fw_gap <= 1e-15 * scale_sq && away_gap <= 1e-15 * scale_sq {
            break;
        }
        if fw_gap >= away_gap {
            // Toward vertex s: w <- (1-gamma) w + gamma e_s.
            let gamma = pairwise_line_search(&combined, &points[s]);
            if gamma == 0.0 {
                break;
            }
            for w in weights.iter_mut() {
                *w *= 1.0 - gamma;
            }
            weights[s] += gamma;
            for (c, p) in combined.iter_mut().zip(&points[s]) {
                *c = (1.0 - gamma) * *c + gamma * p;
            }
        } else {
            // Away from vertex a: w <- (1+gamma) w - gamma e_a, capped so
            // w_a stays non-negative.
            let gamma_max = if weights[a] < 1.0 {
                weights[a] / (1.0 - weights[a])
            } else {
                break; // single active vertex: nothing to move away from
            };
            let dir: Vec<f64> = combined
                .iter()
                .zip(&points[a])
                .map(|(c, p)| c - p)
                .collect();
            let dir_sq = dot(&dir, &dir);
            if dir_sq <= 0.0 {
                break;
            }
            let gamma = (-dot(&combined, &dir) / dir_sq).clamp(0.0, gamma_max);
            if gamma == 0.0 {
                break;
            }
            for w in weights.iter_mut() {
                *w *= 1.0 + gamma;
            }
            weights[a] = (weights[a] - gamma).max(0.0);
            for (c, d) in combined.iter_mut().zip(&dir) {
                *c += gamma * d;
            }
        }
    }

    // The solver is approximate; never report a point worse than a vertex or
    // the uniform weighting.
    let mut best_norm = norm(&combined);
    for (i, p) in points.iter().enumerate() {
        if norm(p) < best_norm {
            best_norm = norm(p);
            weights = vec![0.0; k];
            weights[i] = 1.0;
            combined = p.clone();
        }
    }
    let uniform = Simplex::uniform(k);
    let uniform_combined = combine(points, uniform.weights());
    if norm(&uniform_combined) < best_norm {
        weights = uniform.into_vec();
        combined = uniform_combined;
    }

    // Renormalize away accumulated rounding in the weights.
    let sum: f64 = weights.iter().sum();
    for w in weights.iter_mut() {
        *w /= sum;
    }
    Ok((Simplex(weights), combined))
}

/// `argmin_{gamma in [0,1]} || (1-gamma) a + gamma b ||^2`.
fn pairwise_line_search(a: &[f64], b: &[f64]) -> f64 {
    let mut diff_sq = 0.0;
    let mut numer = 0.0;
    for (x, y) in a.iter().zip(b) {
        let d = x - y;
        diff_sq += d * d;
        numer += d * x;
    }
    if diff_sq <= 0.0 {
        return 0.0;
    }
    (numer / diff_sq).clamp(0.0, 1.0)
}

fn combine(points: &[Vec<f64>], weights: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; points[0].len()];
    for (p, &w) in points.iter().zip(weights) {
        axpy(w, p, &mut out);
    }
    out
}
