//! Synthetic multi-task objectives with analytic gradients and verifiable
//! Pareto structure.

pub mod toy2d;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::aggregators::{BlockLayout, BlockShape, TaskGradients};
use crate::error::{Error, Result};
use crate::linalg::{min_norm_simplex, svd, Mat, Simplex};

/// One quadratic objective `L(theta) = 0.5 (theta - center)^T A (theta -
/// center) + offset` with symmetric positive-definite curvature `A`.
///
/// `offset` is the loss at the task's own optimum; conflict ensembles set it
/// nonzero so per-task baselines for delta-m% are well defined.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticTask {
    pub center: Vec<f64>,
    pub curvature: Mat,
    pub offset: f64,
}

impl QuadraticTask {
    pub fn new(center: Vec<f64>, curvature: Mat, offset: f64) -> Result<Self> {
        let d = center.len();
        if curvature.rows() != d || curvature.cols() != d {
            return Err(Error::InvalidInput(
                "curvature shape does not match center".into(),
            ));
        }
        for i in 0..d {
            for j in 0..d {
                if (curvature.get(i, j) - curvature.get(j, i)).abs() > 1e-12 {
                    return Err(Error::InvalidInput("curvature is not symmetric".into()));
                }
            }
        }
        if cholesky(&curvature).is_none() {
            return Err(Error::InvalidInput(
                "curvature is not positive definite".into(),
            ));
        }
        Ok(Self {
            center,
            curvature,
            offset,
        })
    }

    pub fn isotropic(center: Vec<f64>) -> Self {
        let d = center.len();
        Self {
            center,
            curvature: Mat::identity(d),
            offset: 0.0,
        }
    }

    pub fn loss(&self, theta: &[f64]) -> f64 {
        let d: Vec<f64> = theta
            .iter()
            .zip(&self.center)
            .map(|(t, c)| t - c)
            .collect();
        let mut acc = 0.0;
        for i in 0..d.len() {
            for j in 0..d.len() {
                acc += d[i] * self.curvature.get(i, j) * d[j];
            }
        }
        0.5 * acc + self.offset
    }

    pub fn gradient(&self, theta: &[f64]) -> Vec<f64> {
        let d: Vec<f64> = theta
            .iter()
            .zip(&self.center)
            .map(|(t, c)| t - c)
            .collect();
        (0..d.len())
            .map(|i| (0..d.len()).map(|j| self.curvature.get(i, j) * d[j]).sum())
            .collect()
    }
}

/// Cholesky factorization; `None` when the matrix is not positive definite.
fn cholesky(a: &Mat) -> Option<Mat> {
    let n = a.rows();
    let mut l = Mat::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let mut sum = a.get(i, j);
            for k in 0..j {
                sum -= l.get(i, k) * l.get(j, k);
            }
            if i == j {
                if sum <= 0.0 {
                    return None;
                }
                l.set(i, j, sum.sqrt());
            } else {
                l.set(i, j, sum / l.get(j, j));
            }
        }
    }
    Some(l)
}

/// A registered multi-task problem: task losses, analytic gradients, and the
/// block layout its parameters live on.
#[derive(Debug, Clone, PartialEq)]
pub enum ProblemSpec {
    QuadraticEnsemble {
        tasks: Vec<QuadraticTask>,
        layout: BlockLayout,
    },
    /// Two-task 2-D toy objective from the reference visualization setup.
    Toy2d,
}

impl ProblemSpec {
    pub fn dim(&self) -> usize {
        match self {
            ProblemSpec::QuadraticEnsemble { layout, .. } => layout.total_len(),
            ProblemSpec::Toy2d => 2,
        }
    }

    pub fn tasks(&self) -> usize {
        match self {
            ProblemSpec::QuadraticEnsemble { tasks, .. } => tasks.len(),
            ProblemSpec::Toy2d => 2,
        }
    }

    pub fn layout(&self) -> BlockLayout {
        match self {
            ProblemSpec::QuadraticEnsemble { layout, .. } => layout.clone(),
            ProblemSpec::Toy2d => BlockLayout::vector(2),
        }
    }

    /// Loss at each task's own optimum, when well defined and usable as a
    /// delta-m% baseline (finite and nonzero).
    pub fn single_task_optima(&self) -> Option<Vec<f64>> {
        match self {
            ProblemSpec::QuadraticEnsemble { tasks, .. } => {
                if tasks.iter().all(|t| t.offset != 0.0) {
                    Some(tasks.iter().map(|t| t.offset).collect())
                } else {
                    None
                }
            }
            ProblemSpec::Toy2d => None,
        }
    }

    /// Task losses and gradients at `theta`.
    pub fn eval(&self, theta: &[f64]) -> Result<(Vec<f64>, TaskGradients)> {
        if theta.len() != self.dim() {
            return Err(Error::InvalidInput(format!(
                "theta has dimension {}, problem expects {}",
                theta.len(),
                self.dim()
            )));
        }
        match self {
            ProblemSpec::QuadraticEnsemble { tasks, layout } => {
                let losses: Vec<f64> = tasks.iter().map(|t| t.loss(theta)).collect();
                let grads: Vec<Vec<f64>> = tasks.iter().map(|t| t.gradient(theta)).collect();
                Ok((losses, TaskGradients::new(layout.clone(), grads)?))
            }
            ProblemSpec::Toy2d => {
                let (losses, grads) = toy2d::eval(theta[0], theta[1]);
                Ok((
                    losses.to_vec(),
                    TaskGradients::from_vectors(vec![grads[0].to_vec(), grads[1].to_vec()])?,
                ))
            }
        }
    }
}

/// Approximate Pareto-stationarity certificate: the min-norm convex
/// combination of the task gradients at `theta`.
#[derive(Debug, Clone)]
pub struct StationarityReport {
    pub min_norm_value: f64,
    pub weights: Simplex,
}

pub fn pareto_stationarity(spec: &ProblemSpec, theta: &[f64]) -> Result<StationarityReport> {
    let (_, tg) = spec.eval(theta)?;
    let (weights, combined) = min_norm_simplex(tg.all())?;
    let min_norm_value = combined.iter().map(|x| x * x).sum::<f64>().sqrt();
    Ok(StationarityReport {
        min_norm_value,
        weights,
    })
}

/// Options for [`make_conflict_ensemble_with`].
#[derive(Debug, Clone, Copy)]
pub struct ConflictOptions {
    /// Loss at each task's own optimum (delta-m% baseline).
    pub offset: f64,
    /// Reshape the parameter vector into a single `rows x (dim/rows)` matrix
    /// block so Muon's orthogonalization has a matrix to act on.
    pub matrix_rows: Option<usize>,
}

impl Default for ConflictOptions {
    fn default() -> Self {
        Self {
            offset: 1.0,
            matrix_rows: None,
        }
    }
}

/// Deterministic-for-seed quadratic ensemble whose task gradients at the
/// origin are unit vectors with pairwise angle exactly `conflict_angle`, and
/// whose curvatures have condition number `condition`.
pub fn make_conflict_ensemble(
    seed: u64,
    tasks: usize,
    dim: usize,
    condition: f64,
    conflict_angle: f64,
) -> Result<ProblemSpec> {
    make_conflict_ensemble_with(seed, tasks, dim, condition, conflict_angle, ConflictOptions::default())
}

pub fn make_conflict_ensemble_with(
    seed: u64,
    tasks: usize,
    dim: usize,
    condition: f64,
    conflict_angle: f64,
    opts: ConflictOptions,
) -> Result<ProblemSpec> {
    if tasks < 2 || dim < 2 {
        return Err(Error::InvalidInput("need tasks >= 2 and dim >= 2".into()));
    }
    if tasks > dim {
        return Err(Error::InvalidInput(format!(
            "construction needs tasks <= dim (got {tasks} > {dim})"
        )));
    }
    if condition < 1.0 || !condition.is_finite() {
        return Err(Error::InvalidInput("condition must be >= 1".into()));
    }
    if !(0.0 < conflict_angle && conflict_angle <= std::f64::consts::PI) {
        return Err(Error::InvalidInput(
            "conflict_angle must lie in (0, pi]".into(),
        ));
    }
    let target_cos = conflict_angle.cos();
    if 1.0 + (tasks as f64 - 1.0) * target_cos < -1e-12 {
        return Err(Error::InvalidInput(format!(
            "angle {conflict_angle} infeasible for {tasks} tasks (simplex bound)"
        )));
    }
    let layout = match opts.matrix_rows {
        None => BlockLayout::vector(dim),
        Some(rows) => {
            if rows == 0 || dim % rows != 0 {
                return Err(Error::InvalidInput(format!(
                    "matrix_rows = {rows} does not divide dim = {dim}"
                )));
            }
            BlockLayout::new(vec![("w".into(), BlockShape::Matrix(rows, dim / rows))])
        }
    };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // Equiangular unit directions: blend the first `tasks` axes with their
    // mean so every pairwise cosine equals the target.
    let blend = if target_cos >= 1.0 - 1e-15 {
        0.0
    } else {
        let s = (1.0 + tasks as f64 * target_cos / (1.0 - target_cos)).max(0.0);
        s.sqrt() - 1.0
    };
    let mut directions = Vec::with_capacity(tasks);
    for i in 0..tasks {
        let mut u = vec![0.0; dim];
        u[i] = 1.0;
        for slot in u.iter_mut().take(tasks) {
            *slot += blend / tasks as f64;
        }
        let n = u.iter().map(|x| x * x).sum::<f64>().sqrt();
        for x in u.iter_mut() {
            *x /= n;
        }
        directions.push(u);
    }

    let mut quad_tasks = Vec::with_capacity(tasks);
    for u in directions {
        // A = Q diag(lambda) Q^T with log-spaced eigenvalues in [1, condition].
        let gauss =
            Mat::new(dim, dim, (0..dim * dim).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
        let q = svd(&gauss).unwrap().u;
        let lambdas: Vec<f64> = (0..dim)
            .map(|l| {
                let frac = if dim == 1 { 0.0 } else { l as f64 / (dim - 1) as f64 };
                condition.powf(frac)
            })
            .collect();
        let mut a = Mat::zeros(dim, dim);
        for l in 0..dim {
            for i in 0..dim {
                for j in 0..dim {
                    let v = a.get(i, j) + lambdas[l] * q.get(i, l) * q.get(j, l);
                    a.set(i, j, v);
                }
            }
        }
        // Symmetrize away rounding so the constructor's check passes.
        for i in 0..dim {
            for j in 0..i {
                let s = 0.5 * (a.get(i, j) + a.get(j, i));
                a.set(i, j, s);
                a.set(j, i, s);
            }
        }
        // Center chosen so the gradient at the origin is exactly u:
        // g(0) = A(0 - c) = u  =>  c = -A^{-1} u.
        let inv_u = solve_spd(&q, &lambdas, &u);
        let center: Vec<f64> = inv_u.iter().map(|x| -x).collect();
        quad_tasks.push(QuadraticTask::new(center, a, opts.offset)?);
    }

    Ok(ProblemSpec::QuadraticEnsemble {
        tasks: quad_tasks,
        layout,
    })
}

/// Solves `(Q diag(lambda) Q^T) x = b` via the eigendecomposition.
fn solve_spd(q: &Mat, lambdas: &[f64], b: &[f64]) -> Vec<f64> {
    let n = lambdas.len();
    let mut qt_b = vec![0.0; n];
    for l in 0..n {
        qt_b[l] = (0..n).map(|i| q.get(i, l) * b[i]).sum::<f64>() / lambdas[l];
    }
    (0..n)
        .map(|i| (0..n).map(|l| q.get(i, l) * qt_b[l]).sum())
        .collect()
}

/// Builds the named problems reachable from run configs.
///
/// - `"quad2"`: two isotropic quadratics with centers (-1, 0) and (1, 0).
/// - `"quadK"`: `tasks` isotropic quadratics, centers uniform in [-1, 1]^dim,
///   seeded.
/// - `"toy2d"`: the two-task toy objective.
/// - `"conflict"`: [`make_conflict_ensemble`] (seed, tasks, dim, condition,
///   conflict_angle, plus offset / matrix_rows options).
pub fn by_name(
    name: &str,
    tasks: usize,
    dim: usize,
    seed: u64,
    condition: f64,
    conflict_angle: f64,
    opts: ConflictOptions,
) -> Result<ProblemSpec> {
    match name {
        "quad2" => Ok(ProblemSpec::QuadraticEnsemble {
            tasks: vec![
                QuadraticTask::isotropic(vec![-1.0, 0.0]),
                QuadraticTask::isotropic(vec![1.0, 0.0]),
            ],
            layout: BlockLayout::vector(2),
        }),
        "quadK" => {
            if tasks < 1 || dim < 1 {
                return Err(Error::Config("quadK needs tasks >= 1 and dim >= 1".into()));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let quad_tasks = (0..tasks)
                .map(|_| {
                    QuadraticTask::isotropic((0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect())
                })
                .collect();
            Ok(ProblemSpec::QuadraticEnsemble {
                tasks: quad_tasks,
                layout: BlockLayout::vector(dim),
            })
        }
        "toy2d" => Ok(ProblemSpec::Toy2d),
        "conflict" => make_conflict_ensemble_with(seed, tasks, dim, condition, conflict_angle, opts),
        other => Err(Error::Config(format!("unknown problem name {other:?}"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{dot, norm};
    use rand::Rng;

    /// Central finite differences of the task losses.
    fn fd_gradients(spec: &ProblemSpec, theta: &[f64], h: f64) -> Vec<Vec<f64>> {
        let k = spec.tasks();
        let mut out = vec![vec![0.0; theta.len()]; k];
        for d in 0..theta.len() {
            let mut tp = theta.to_vec();
            tp[d] += h;
            let (lp, _) = spec.eval(&tp).unwrap();
            let mut tm = theta.to_vec();
            tm[d] -= h;
            let (lm, _) = spec.eval(&tm).unwrap();
            for t in 0..k {
                out[t][d] = (lp[t] - lm[t]) / (2.0 * h);
            }
        }
        out
    }

    /// Asserts analytic gradients match central differences at `points`.
    pub(crate) fn check_fd(spec: &ProblemSpec, points: &[Vec<f64>]) {
        for theta in points {
            let (_, tg) = spec.eval(theta).unwrap();
            let fd = fd_gradients(spec, theta, 1e-5);
            for t in 0..spec.tasks() {
                let diff: f64 = tg
                    .flat(t)
                    .iter()
                    .zip(&fd[t])
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt();
                let scale = norm(&fd[t]).max(1.0);
                assert!(
                    diff <= 1e-5 * scale,
                    "task {t} at {theta:?}: fd mismatch {diff:e} (scale {scale:.3})"
                );
            }
        }
    }

    #[test]
    fn quadratic_minimum_and_identity_curvature() {
        let spec = by_name("quad2", 0, 0, 0, 1.0, 1.0, ConflictOptions::default()).unwrap();
        let (losses, tg) = spec.eval(&[-1.0, 0.0]).unwrap();
        assert_eq!(losses[0], 0.0);
        assert!(norm(tg.flat(0)) == 0.0);
        // A = I: gradient is theta - center.
        let (_, tg) = spec.eval(&[0.3, -0.4]).unwrap();
        assert_eq!(tg.flat(0), &[1.3, -0.4]);
        assert_eq!(tg.flat(1), &[-0.7, -0.4]);
    }

    #[test]
    fn quadratic_rejects_bad_curvature() {
        let asym = Mat::new(2, 2, vec![1.0, 0.5, 0.2, 1.0]).unwrap();
        assert!(QuadraticTask::new(vec![0.0, 0.0], asym, 0.0).is_err());
        let indef = Mat::new(2, 2, vec![1.0, 0.0, 0.0, -1.0]).unwrap();
        assert!(QuadraticTask::new(vec![0.0, 0.0], indef, 0.0).is_err());
    }

    #[test]
    fn finite_differences_all_registered_problems() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let specs = vec![
            by_name("quad2", 0, 0, 0, 1.0, 1.0, ConflictOptions::default()).unwrap(),
            by_name("quadK", 3, 4, 11, 1.0, 1.0, ConflictOptions::default()).unwrap(),
            make_conflict_ensemble(5, 2, 4, 20.0, 2.0).unwrap(),
            ProblemSpec::Toy2d,
        ];
        for spec in &specs {
            let points: Vec<Vec<f64>> = (0..20)
                .map(|_| {
                    (0..spec.dim())
                        .map(|_| {
                            // Keep away from the toy's x2 = 0 kink.
                            let v: f64 = rng.gen_range(-9.0..9.0);
                            if v.abs() < 0.1 {
                                v + 0.2
                            } else {
                                v
                            }
                        })
                        .collect()
                })
                .collect();
            check_fd(spec, &points);
        }
    }

    #[test]
    fn pareto_stationarity_on_segment_and_at_center() {
        let spec = by_name("quad2", 0, 0, 0, 1.0, 1.0, ConflictOptions::default()).unwrap();
        // On the segment between the centers the gradients are anti-parallel.
        for lam in [0.0, 0.25, 0.5, 0.9, 1.0] {
            let theta = [-1.0 + 2.0 * lam, 0.0];
            let rep = pareto_stationarity(&spec, &theta).unwrap();
            assert!(rep.min_norm_value <= 1e-8, "lam {lam}: {}", rep.min_norm_value);
        }
        let rep = pareto_stationarity(&spec, &[-1.0, 0.0]).unwrap();
        assert_eq!(rep.min_norm_value, 0.0);
        assert!((rep.weights.weights()[0] - 1.0).abs() < 1e-12);
        // Far outside the hull both gradients share a positive component.
        let rep = pareto_stationarity(&spec, &[5.0, 3.0]).unwrap();
        assert!(rep.min_norm_value > 1e-3);
    }

    #[test]
    fn shared_curvature_pareto_set_is_hull() {
        let spec = by_name("quadK", 3, 4, 13, 1.0, 1.0, ConflictOptions::default()).unwrap();
        let centers: Vec<Vec<f64>> = match &spec {
            ProblemSpec::QuadraticEnsemble { tasks, .. } => {
                tasks.iter().map(|t| t.center.clone()).collect()
            }
            _ => unreachable!(),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        for _ in 0..10 {
            // Interior hull point with margin.
            let mut lam: Vec<f64> = (0..3).map(|_| rng.gen_range(0.1..1.0)).collect();
            let s: f64 = lam.iter().sum();
            for l in lam.iter_mut() {
                *l /= s;
            }
            let mut theta = vec![0.0; 4];
            for (c, &l) in centers.iter().zip(&lam) {
                for (t, ci) in theta.iter_mut().zip(c) {
                    *t += l * ci;
                }
            }
            let rep = pareto_stationarity(&spec, &theta).unwrap();
            assert!(rep.min_norm_value <= 1e-6, "hull point: {}", rep.min_norm_value);

            // Displace orthogonally to the center-span by unit distance: the
            // distance to the hull (= min-norm for A = I) is at least 1.
            let mut w: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let d1: Vec<f64> = (0..4).map(|i| centers[1][i] - centers[0][i]).collect();
            let d2: Vec<f64> = (0..4).map(|i| centers[2][i] - centers[0][i]).collect();
            for d in [&d1, &d2] {
                let c = dot(&w, d) / dot(d, d);
                for (wi, di) in w.iter_mut().zip(d) {
                    *wi -= c * di;
                }
            }
            let wn = norm(&w);
            assert!(wn > 1e-6);
            let displaced: Vec<f64> = theta.iter().zip(&w).map(|(t, wi)| t + wi / wn).collect();
            let rep = pareto_stationarity(&spec, &displaced).unwrap();
            assert!(rep.min_norm_value > 1e-3, "displaced: {}", rep.min_norm_value);
        }
    }

    #[test]
    fn conflict_ensemble_angles_and_condition() {
        // Orthogonal design: gradients at origin exactly orthogonal.
        let spec = make_conflict_ensemble(3, 2, 4, 1.0, std::f64::consts::FRAC_PI_2).unwrap();
        let (_, tg) = spec.eval(&vec![0.0; 4]).unwrap();
        assert!(dot(tg.flat(0), tg.flat(1)).abs() <= 1e-8);
        for t in 0..2 {
            assert!((norm(tg.flat(t)) - 1.0).abs() < 1e-9, "unit gradient");
        }

        // Determinism: same seed gives bit-identical specs.
        let a = make_conflict_ensemble(9, 3, 5, 50.0, 2.0).unwrap();
        let b = make_conflict_ensemble(9, 3, 5, 50.0, 2.0).unwrap();
        assert_eq!(a, b);
        let c = make_conflict_ensemble(10, 3, 5, 50.0, 2.0).unwrap();
        assert_ne!(a, c);

        // Requested angle achieved pairwise (120 degrees, 3 tasks).
        let (_, tg) = a.eval(&vec![0.0; 5]).unwrap();
        for i in 0..3 {
            for j in (i + 1)..3 {
                let cosv = dot(tg.flat(i), tg.flat(j)) / (norm(tg.flat(i)) * norm(tg.flat(j)));
                assert!((cosv - 2.0f64.cos()).abs() < 1e-9, "pair ({i},{j}): {cosv}");
            }
        }

        // Condition number ~ requested (eigenvalue ratio within [50, 200]
        // for condition = 100).
        let spec = make_conflict_ensemble(21, 2, 4, 100.0, 2.0).unwrap();
        if let ProblemSpec::QuadraticEnsemble { tasks, .. } = &spec {
            for t in tasks {
                let sig = svd(&t.curvature).unwrap().sigma;
                let ratio = sig[0] / sig[sig.len() - 1];
                assert!((50.0..=200.0).contains(&ratio), "ratio {ratio}");
            }
        }

        // Infeasible angle for the task count.
        assert!(make_conflict_ensemble(0, 3, 4, 10.0, 3.1).is_err());
        // Too many tasks for the dimension.
        assert!(make_conflict_ensemble(0, 5, 4, 10.0, 1.0).is_err());
    }

    #[test]
    fn conflict_ensemble_matrix_layout() {
        let spec = make_conflict_ensemble_with(
            4,
            2,
            6,
            10.0,
            2.0,
            ConflictOptions {
                offset: 1.0,
                matrix_rows: Some(2),
            },
        )
        .unwrap();
        let layout = spec.layout();
        let (name, shape, _) = layout.blocks().next().unwrap();
        assert_eq!(name, "w");
        assert_eq!(shape, BlockShape::Matrix(2, 3));
        assert_eq!(spec.single_task_optima(), Some(vec![1.0, 1.0]));
    }
}
