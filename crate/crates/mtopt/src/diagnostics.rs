//! Per-step and per-run measurements: similarity timelines, projection
//! norms and ratios, spectral effective rank, delta-m% and mean-rank tables.

use serde::{Deserialize, Serialize};

use crate::aggregators::{cosine, TaskGradients};
use crate::error::{Error, Result};
use crate::linalg::{dot, norm, svd, Mat, POLAR_RANK_TOL};

/// Cosine of the combined gradient against each task gradient.
pub fn similarity_profile(combined: &[f64], tg: &TaskGradients) -> Result<Vec<f64>> {
    if norm(combined) == 0.0 {
        return Err(Error::UndefinedCosine { task: None });
    }
    let mut out = Vec::with_capacity(tg.tasks());
    for i in 0..tg.tasks() {
        if norm(tg.flat(i)) == 0.0 {
            return Err(Error::UndefinedCosine { task: Some(i) });
        }
        out.push(cosine(combined, tg.flat(i))?);
    }
    Ok(out)
}

/// Ratio of the largest to the smallest projection norm, defined only when
/// every projection is strictly positive.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ProjNormRatio {
    Positive(f64),
    /// Projections mix signs (or touch zero): the conflict is reported as a
    /// flag instead of a clamped number.
    SignMixed,
}

impl ProjNormRatio {
    pub fn value(&self) -> Option<f64> {
        match self {
            ProjNormRatio::Positive(r) => Some(*r),
            ProjNormRatio::SignMixed => None,
        }
    }

    pub fn sign_mixed(&self) -> bool {
        matches!(self, ProjNormRatio::SignMixed)
    }
}

/// Scalar projections `p_i = <update, g_i> / ||g_i||` of an update vector
/// onto each task gradient, plus their max/min ratio.
pub fn projection_profile(update: &[f64], tg: &TaskGradients) -> Result<(Vec<f64>, ProjNormRatio)> {
    let mut projections = Vec::with_capacity(tg.tasks());
    for i in 0..tg.tasks() {
        let g = tg.flat(i);
        let n = norm(g);
        if n == 0.0 {
            return Err(Error::UndefinedProjection { task: i });
        }
        projections.push(dot(update, g) / n);
    }
    let ratio = if projections.iter().all(|p| *p > 0.0) {
        let max = projections.iter().cloned().fold(f64::MIN, f64::max);
        let min = projections.iter().cloned().fold(f64::MAX, f64::min);
        ProjNormRatio::Positive(max / min)
    } else {
        ProjNormRatio::SignMixed
    };
    Ok((projections, ratio))
}

/// Spectral effective rank: `exp(-sum p_k ln p_k)` with `p_k = sigma_k /
/// sum(sigma)` over the nonzero singular values.
pub fn effective_rank(a: &Mat) -> Result<f64> {
    if a.frob_norm() == 0.0 {
        return Err(Error::UndefinedRank);
    }
    let sigma = svd(a)?.sigma;
    let total: f64 = sigma.iter().sum();
    let mut entropy = 0.0;
    for &s in &sigma {
        if s > 0.0 {
            let p = s / total;
            entropy -= p * p.ln();
        }
    }
    Ok(entropy.exp())
}

/// Projections of the combined gradient and of its exact polar factor onto
/// each task gradient, with the per-task basis coefficients.
#[derive(Debug, Clone)]
pub struct MuonProjectionPair {
    /// `P_i(G) = <G, g_i>_F` per task.
    pub proj_g: Vec<f64>,
    /// `P_i(O) = <O, g_i>_F` per task, `O` the exact polar factor.
    pub proj_o: Vec<f64>,
    /// `alpha_{i,k} = <g_i, E_k>_F` with `E_k = u_k v_k^T`.
    pub alphas: Vec<Vec<f64>>,
    /// Singular values of `G`.
    pub sigma: Vec<f64>,
}

/// Computes `P_i(G)` and `P_i(O)` for every task gradient, using the exact
/// SVD polar factor of `g` (errors when `g` is rank deficient).
pub fn muon_projection_pair(g: &Mat, task_grads: &[Mat]) -> Result<MuonProjectionPair> {
    for (i, t) in task_grads.iter().enumerate() {
        if (t.rows(), t.cols()) != (g.rows(), g.cols()) {
            return Err(Error::InvalidInput(format!(
                "task {i} gradient shape {}x{} does not match {}x{}",
                t.rows(),
                t.cols(),
                g.rows(),
                g.cols()
            )));
        }
    }
    let decomp = svd(g)?;
    let k = decomp.sigma.len();
    let rank = decomp.rank(POLAR_RANK_TOL);
    if rank < k {
        return Err(Error::DegeneratePolar { rank, expected: k });
    }
    let polar = decomp.u.matmul(&decomp.vt);

    let bases: Vec<Mat> = (0..k)
        .map(|l| {
            let u = decomp.u.column(l);
            let v = decomp.vt.transpose().column(l);
            Mat::outer(&u, &v)
        })
        .collect();

    let mut proj_g = Vec::with_capacity(task_grads.len());
    let mut proj_o = Vec::with_capacity(task_grads.len());
    let mut alphas = Vec::with_capacity(task_grads.len());
    for t in task_grads {
        proj_g.push(g.frob_dot(t));
        proj_o.push(polar.frob_dot(t));
        alphas.push(bases.iter().map(|e| t.frob_dot(e)).collect());
    }
    Ok(MuonProjectionPair {
        proj_g,
        proj_o,
        alphas,
        sigma: decomp.sigma,
    })
}

/// Per-task metric values for a method against per-task baselines, with the
/// direction flag per metric (`true` when higher is better).
#[derive(Debug, Clone)]
pub struct BenchmarkScores {
    pub method: Vec<f64>,
    pub baseline: Vec<f64>,
    pub higher_better: Vec<bool>,
}

impl BenchmarkScores {
    pub fn validate(&self) -> Result<()> {
        if self.method.len() != self.baseline.len()
            || self.method.len() != self.higher_better.len()
            || self.method.is_empty()
        {
            return Err(Error::InvalidInput(
                "benchmark scores need equal, nonzero lengths".into(),
            ));
        }
        if self.baseline.iter().any(|b| *b == 0.0 || !b.is_finite()) {
            return Err(Error::InvalidInput("baselines must be finite and nonzero".into()));
        }
        Ok(())
    }
}

/// Mean signed relative degradation versus the baselines, in percent:
/// `(1/K) sum_k (-1)^{delta_k} (M_{m,k} - M_{b,k}) / M_{b,k} * 100`.
/// Lower is better; negative means surpassing the baselines.
pub fn delta_m(scores: &BenchmarkScores) -> Result<f64> {
    scores.validate()?;
    let k = scores.method.len() as f64;
    let mut acc = 0.0;
    for i in 0..scores.method.len() {
        let sign = if scores.higher_better[i] { -1.0 } else { 1.0 };
        acc += sign * (scores.method[i] - scores.baseline[i]) / scores.baseline[i] * 100.0;
    }
    Ok(acc / k)
}

/// Ranks each metric column (1 = best under its direction, ties averaged)
/// and returns the per-method mean rank.
///
/// `table[m][j]` is method `m`'s score on metric `j`; `higher_better[j]`
/// gives the direction of metric `j`.
pub fn mean_rank(table: &[Vec<f64>], higher_better: &[bool]) -> Result<Vec<f64>> {
    if table.is_empty() {
        return Err(Error::InvalidInput("empty score table".into()));
    }
    let metrics = higher_better.len();
    for (m, row) in table.iter().enumerate() {
        if row.len() != metrics {
            return Err(Error::InvalidInput(format!(
                "method {m} has {} entries, expected {metrics}",
                row.len()
            )));
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "method {m} has missing/non-finite entries"
            )));
        }
    }
    let n = table.len();
    let mut rank_sums = vec![0.0; n];
    for j in 0..metrics {
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| {
            let (x, y) = (table[a][j], table[b][j]);
            if higher_better[j] {
                y.partial_cmp(&x).unwrap()
            } else {
                x.partial_cmp(&y).unwrap()
            }
        });
        // Averaged ranks over tied groups.
        let mut i = 0;
        while i < n {
            let mut jj = i;
            while jj + 1 < n && table[order[jj + 1]][j] == table[order[i]][j] {
                jj += 1;
            }
            let avg = (i + jj + 2) as f64 / 2.0; // ranks are 1-based
            for &m in &order[i..=jj] {
                rank_sums[m] += avg;
            }
            i = jj + 1;
        }
    }
    Ok(rank_sums.iter().map(|s| s / metrics as f64).collect())
}

/// One step's worth of measurements, as persisted in trajectory records.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DiagnosticsRecord {
    pub step: usize,
    /// cos(G_t, g_i) per task; absent when a vector involved is zero.
    pub cos_combined_vs_task: Option<Vec<f64>>,
    /// Scalar projection of the realized update onto each task gradient.
    pub proj_norms: Option<Vec<f64>>,
    pub proj_norm_ratio: Option<f64>,
    pub sign_mixed: bool,
    /// Effective rank per matrix-shaped block of the combined gradient.
    pub effective_rank: Vec<Option<f64>>,
    pub beta: f64,
    pub rho: Option<f64>,
    pub tracking_error: f64,
    /// cos(update_t, update_{t-1}); a per-step oscillation measure.
    pub update_cos_prev: Option<f64>,
}
