//! Gradient aggregators: turn per-task gradients into one combined gradient.

use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::{axpy, dot, min_norm_simplex, norm, project_to_simplex, Mat};

/// Shape of one named parameter block.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockShape {
    Vector(usize),
    Matrix(usize, usize),
}

impl BlockShape {
    pub fn len(&self) -> usize {
        match *self {
            BlockShape::Vector(n) => n,
            BlockShape::Matrix(r, c) => r * c,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_matrix(&self) -> bool {
        matches!(self, BlockShape::Matrix(_, _))
    }
}

/// Ordered list of named parameter blocks; the flattened vector view is the
/// concatenation in block order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockLayout {
    blocks: Vec<(String, BlockShape)>,
}

impl BlockLayout {
    pub fn new(blocks: Vec<(String, BlockShape)>) -> Self {
        Self { blocks }
    }

    /// Single unnamed vector block of dimension `n`.
    pub fn vector(n: usize) -> Self {
        Self::new(vec![("theta".to_string(), BlockShape::Vector(n))])
    }

    pub fn total_len(&self) -> usize {
        self.blocks.iter().map(|(_, s)| s.len()).sum()
    }

    pub fn blocks(&self) -> impl Iterator<Item = (&str, BlockShape, Range<usize>)> {
        let mut offset = 0;
        self.blocks.iter().map(move |(name, shape)| {
            let range = offset..offset + shape.len();
            offset = range.end;
            (name.as_str(), *shape, range)
        })
    }

    pub fn n_blocks(&self) -> usize {
        self.blocks.len()
    }

    /// Extracts a matrix block from a flattened vector.
    pub fn matrix_at(flat: &[f64], shape: BlockShape, range: Range<usize>) -> Mat {
        match shape {
            BlockShape::Matrix(r, c) => {
                Mat::new(r, c, flat[range].to_vec()).expect("finite block data")
            }
            BlockShape::Vector(_) => panic!("vector block extracted as matrix"),
        }
    }
}

/// Per-task gradients over a shared block layout, stored flattened.
#[derive(Debug, Clone)]
pub struct TaskGradients {
    layout: BlockLayout,
    grads: Vec<Vec<f64>>,
}

impl TaskGradients {
    pub fn new(layout: BlockLayout, grads: Vec<Vec<f64>>) -> Result<Self> {
        if grads.is_empty() {
            return Err(Error::InvalidInput("need at least one task".into()));
        }
        let dim = layout.total_len();
        for (i, g) in grads.iter().enumerate() {
            if g.len() != dim {
                return Err(Error::InvalidInput(format!(
                    "task {i} gradient has length {}, layout expects {dim}",
                    g.len()
                )));
            }
            if g.iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidInput(format!(
                    "task {i} gradient contains non-finite entries"
                )));
            }
        }
        Ok(Self { layout, grads })
    }

    /// Gradients over a single flat vector block.
    pub fn from_vectors(grads: Vec<Vec<f64>>) -> Result<Self> {
        let dim = grads.first().map(|g| g.len()).unwrap_or(0);
        Self::new(BlockLayout::vector(dim), grads)
    }

    pub fn tasks(&self) -> usize {
        self.grads.len()
    }

    pub fn dim(&self) -> usize {
        self.layout.total_len()
    }

    pub fn layout(&self) -> &BlockLayout {
        &self.layout
    }

    pub fn flat(&self, task: usize) -> &[f64] {
        &self.grads[task]
    }

    pub fn all(&self) -> &[Vec<f64>] {
        &self.grads
    }

    /// Mean gradient over tasks.
    pub fn mean(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        for g in &self.grads {
            axpy(1.0 / self.tasks() as f64, g, &mut out);
        }
        out
    }
}

/// Aggregator identifiers, matching the harness config strings.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AggregatorKind {
    Ls,
    PcGrad,
    Mgda,
    CaGrad,
    Ldp,
}

impl AggregatorKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            AggregatorKind::Ls => "ls",
            AggregatorKind::PcGrad => "pcgrad",
            AggregatorKind::Mgda => "mgda",
            AggregatorKind::CaGrad => "cagrad",
            AggregatorKind::Ldp => "ldp",
        }
    }
}

impl FromStr for AggregatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ls" => Ok(AggregatorKind::Ls),
            "pcgrad" => Ok(AggregatorKind::PcGrad),
            "mgda" => Ok(AggregatorKind::Mgda),
            "cagrad" => Ok(AggregatorKind::CaGrad),
            "ldp" => Ok(AggregatorKind::Ldp),
            other => Err(Error::Config(format!("unknown aggregator id {other:?}"))),
        }
    }
}

impl fmt::Display for AggregatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Combined gradient plus the task weights that produced it.
///
/// For the weight-based methods (LS, MGDA, CAGrad, global LDP) `combined`
/// reconstructs from `weights` within 1e-10 relative error; PCGrad and
/// per-block LDP record weights as unavailable.
#[derive(Debug, Clone)]
pub struct AggregationResult {
    pub combined: Vec<f64>,
    pub weights: Option<Vec<f64>>,
    pub method: AggregatorKind,
    /// Set when an inner solve degenerated (e.g. CAGrad with `||g_w|| = 0`).
    pub degenerate: bool,
    /// Tasks whose zero gradient was skipped (PCGrad projections).
    pub skipped_tasks: Vec<usize>,
}

impl AggregationResult {
    fn weighted(method: AggregatorKind, tg: &TaskGradients, weights: Vec<f64>) -> Self {
        let mut combined = vec![0.0; tg.dim()];
        for (g, &w) in tg.all().iter().zip(&weights) {
            axpy(w, g, &mut combined);
        }
        Self {
            combined,
            weights: Some(weights),
            method,
            degenerate: false,
            skipped_tasks: Vec::new(),
        }
    }
}

/// Cosine similarity `a.b / (||a|| ||b||)`, clamped into [-1, 1].
pub fn cosine(a: &[f64], b: &[f64]) -> Result<f64> {
    let (na, nb) = (norm(a), norm(b));
    if na == 0.0 || nb == 0.0 {
        return Err(Error::UndefinedCosine { task: None });
    }
    Ok((dot(a, b) / (na * nb)).clamp(-1.0, 1.0))
}

/// Linear scalarization: the arithmetic mean, weights all `1/K`.
pub fn ls_aggregate(tg: &TaskGradients) -> AggregationResult {
    let k = tg.tasks() as f64;
    AggregationResult::weighted(AggregatorKind::Ls, tg, vec![1.0 / k; tg.tasks()])
}

/// PCGrad: project each task gradient away from the tasks it conflicts with,
/// visiting the others in a seeded random order, then average.
///
/// Zero-gradient tasks are skipped as projection targets and reported in
/// `skipped_tasks`. Deterministic for a fixed seed.
pub fn pcgrad(tg: &TaskGradients, seed: u64) -> Result<AggregationResult> {
    let k = tg.tasks();
    if k < 2 {
        return Err(Error::InvalidInput("pcgrad requires at least 2 tasks".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let norms_sq: Vec<f64> = tg.all().iter().map(|g| dot(g, g)).collect();
    let mut skipped: Vec<usize> = Vec::new();
    let mut combined = vec![0.0; tg.dim()];
    for i in 0..k {
        let mut adjusted = tg.flat(i).to_vec();
        let mut order: Vec<usize> = (0..k).filter(|&j| j != i).collect();
        order.shuffle(&mut rng);
        for j in order {
            if norms_sq[j] == 0.0 {
                if !skipped.contains(&j) {
                    skipped.push(j);
                }
                continue;
            }
            let d = dot(&adjusted, tg.flat(j));
            if d < 0.0 {
                axpy(-d / norms_sq[j], tg.flat(j), &mut adjusted);
            }
        }
        axpy(1.0 / k as f64, &adjusted, &mut combined);
    }
    skipped.sort_unstable();
    Ok(AggregationResult {
        combined,
        weights: None,
        method: AggregatorKind::PcGrad,
        degenerate: false,
        skipped_tasks: skipped,
    })
}

/// MGDA: the min-norm convex combination of the task gradients.
pub fn mgda(tg: &TaskGradients) -> Result<AggregationResult> {
    let (simplex, combined) = min_norm_simplex(tg.all())?;
    Ok(AggregationResult {
        combined,
        weights: Some(simplex.into_vec()),
        method: AggregatorKind::Mgda,
        degenerate: false,
        skipped_tasks: Vec::new(),
    })
}

/// Iterations of projected gradient descent for the CAGrad inner problem.
pub const CAGRAD_PGD_STEPS: usize = 500;

/// CAGrad: solves `min_{w in simplex} g_w . g0 + sqrt(phi) ||g_w||` with
/// `g0` the mean gradient and `phi = c^2 ||g0||^2`, then returns
/// `d = g0 + (sqrt(phi) / ||g_w||) g_w`.
///
/// `K = 2` uses an exact 1-D minimization; larger `K` runs projected gradient
/// descent on the simplex, keeping the best iterate. When `||g_w|| = 0` the
/// result degenerates to `d = g0` and is flagged.
pub fn cagrad(tg: &TaskGradients, c: f64) -> Result<AggregationResult> {
    let k = tg.tasks();
    if k < 2 {
        return Err(Error::InvalidInput("cagrad requires at least 2 tasks".into()));
    }
    if !(0.0..1.0).contains(&c) {
        return Err(Error::InvalidInput(format!(
            "cagrad parameter c = {c} outside [0, 1)"
        )));
    }
    let g0 = tg.mean();
    let sqrt_phi = c * norm(&g0);

    // Gram matrix of the task gradients and q_i = <g_i, g0>.
    let gram: Vec<Vec<f64>> = (0..k)
        .map(|i| (0..k).map(|j| dot(tg.flat(i), tg.flat(j))).collect())
        .collect();
    let q: Vec<f64> = (0..k).map(|i| dot(tg.flat(i), &g0)).collect();

    let objective = |w: &[f64]| -> f64 {
        let gw_dot_g0: f64 = w.iter().zip(&q).map(|(wi, qi)| wi * qi).sum();
        gw_dot_g0 + sqrt_phi * gw_norm(&gram, w)
    };

    let w = if k == 2 {
        // Exact minimization of the convex scalar objective on [0, 1].
        let f = |t: f64| objective(&[1.0 - t, t]);
        let t = golden_section_min(f, 0.0, 1.0, 200);
        vec![1.0 - t, t]
    } else {
        let mut w = vec![1.0 / k as f64; k];
        let mut best = w.clone();
        let mut best_val = objective(&w);
        // 1/L step from a cheap curvature bound; the norm term is handled by
        // keeping the best iterate, which also covers the nonsmooth point.
        let l_gram = gram
            .iter()
            .map(|row| row.iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
            .max(1e-12);
        for it in 0..CAGRAD_PGD_STEPS {
            let gw_norm_val = gw_norm(&gram, &w).max(1e-9);
            let mut grad = q.clone();
            for i in 0..k {
                let gw_i: f64 = gram[i].iter().zip(&w).map(|(g, wi)| g * wi).sum();
                grad[i] += sqrt_phi * gw_i / gw_norm_val;
            }
            let step = 1.0 / (l_gram * (1.0 + sqrt_phi / gw_norm_val) * (1.0 + it as f64 / 64.0));
            let moved: Vec<f64> = w.iter().zip(&grad).map(|(wi, gi)| wi - step * gi).collect();
            w = project_to_simplex(&moved);
            let val = objective(&w);
            if val < best_val {
                best_val = val;
                best = w.clone();
            }
        }
        best
    };

    let gw: Vec<f64> = {
        let mut out = vec![0.0; tg.dim()];
        for (g, &wi) in tg.all().iter().zip(&w) {
            axpy(wi, g, &mut out);
        }
        out
    };
    let gw_n = norm(&gw);
    let mut degenerate = false;
    let (combined, eff_weights) = if gw_n > 0.0 {
        let lam = sqrt_phi / gw_n;
        let mut d = g0.clone();
        axpy(lam, &gw, &mut d);
        let eff: Vec<f64> = w.iter().map(|wi| 1.0 / k as f64 + lam * wi).collect();
        (d, eff)
    } else {
        degenerate = true;
        (g0.clone(), vec![1.0 / k as f64; k])
    };

    Ok(AggregationResult {
        combined,
        weights: Some(eff_weights),
        method: AggregatorKind::CaGrad,
        degenerate,
        skipped_tasks: Vec::new(),
    })
}

fn gw_norm(gram: &[Vec<f64>], w: &[f64]) -> f64 {
    let mut sq = 0.0;
    for (i, row) in gram.iter().enumerate() {
        for (j, &g) in row.iter().enumerate() {
            sq += w[i] * w[j] * g;
        }
    }
    sq.max(0.0).sqrt()
}

fn golden_section_min(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, iters: usize) -> f64 {
    let inv_phi = (5.0_f64.sqrt() - 1.0) / 2.0;
    let mut x1 = b - inv_phi * (b - a);
    let mut x2 = a + inv_phi * (b - a);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    for _ in 0..iters {
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - inv_phi * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + inv_phi * (b - a);
            f2 = f(x2);
        }
    }
    0.5 * (a + b)
}

/// Configuration for light direction preservation.
#[derive(Debug, Clone, Copy)]
pub struct LdpConfig {
    /// Gate sharpness. Maps cosines in [-1, 1] to raw gates spanning roughly
    /// [0.018, 0.982] at the default of 4.0.
    pub xi: f64,
    /// Gate per parameter block instead of on the global flattened gradient
    /// (pairs with Muon's per-layer orthogonalization). Weights are reported
    /// as unavailable in this mode.
    pub per_block: bool,
}

impl Default for LdpConfig {
    fn default() -> Self {
        Self {
            xi: 4.0,
            per_block: false,
        }
    }
}

impl LdpConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.xi.is_finite() || self.xi <= 0.0 {
            return Err(Error::InvalidInput(format!(
                "ldp xi = {} must be finite and > 0",
                self.xi
            )));
        }
        Ok(())
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Light direction preservation: gate each task gradient by a sigmoid of its
/// cosine to the mean-gradient anchor, normalize the gates to sum to `K`, and
/// combine `G = sum_i w_i g_i`.
pub fn ldp(tg: &TaskGradients, cfg: &LdpConfig) -> Result<AggregationResult> {
    cfg.validate()?;
    if cfg.per_block {
        return ldp_per_block(tg, cfg);
    }
    let anchor = tg.mean();
    if norm(&anchor) == 0.0 {
        return Err(Error::UndefinedCosine { task: None });
    }
    let weights = ldp_gates(tg.all(), &anchor, cfg.xi)?;
    Ok(AggregationResult::weighted(AggregatorKind::Ldp, tg, weights))
}

fn ldp_gates(grads: &[Vec<f64>], anchor: &[f64], xi: f64) -> Result<Vec<f64>> {
    let k = grads.len();
    let mut raw = Vec::with_capacity(k);
    for (i, g) in grads.iter().enumerate() {
        if norm(g) == 0.0 {
            return Err(Error::UndefinedCosine { task: Some(i) });
        }
        raw.push(sigmoid(xi * cosine(g, anchor)?));
    }
    let sum: f64 = raw.iter().sum();
    Ok(raw.iter().map(|r| k as f64 * r / sum).collect())
}

fn ldp_per_block(tg: &TaskGradients, cfg: &LdpConfig) -> Result<AggregationResult> {
    let mut combined = vec![0.0; tg.dim()];
    for (_, _, range) in tg.layout().blocks() {
        let grads: Vec<Vec<f64>> = tg.all().iter().map(|g| g[range.clone()].to_vec()).collect();
        let mut anchor = vec![0.0; range.len()];
        for g in &grads {
            axpy(1.0 / tg.tasks() as f64, g, &mut anchor);
        }
        if norm(&anchor) == 0.0 {
            return Err(Error::UndefinedCosine { task: None });
        }
        let gates = ldp_gates(&grads, &anchor, cfg.xi)?;
        for (g, &w) in grads.iter().zip(&gates) {
            axpy(w, g, &mut combined[range.clone()]);
        }
    }
    Ok(AggregationResult {
        combined,
        weights: None,
        method: AggregatorKind::Ldp,
        degenerate: false,
        skipped_tasks: Vec::new(),
    })
}

/// Aggregator selection plus its parameters, as referenced from run configs.
#[derive(Debug, Clone)]
pub struct AggregatorConfig {
    pub kind: AggregatorKind,
    /// CAGrad convergence parameter.
    pub c: f64,
    pub ldp: LdpConfig,
    /// Base seed for PCGrad's per-step projection order.
    pub seed: u64,
}

impl Default for AggregatorConfig {
    fn default() -> Self {
        Self {
            kind: AggregatorKind::Ls,
            c: 0.4,
            ldp: LdpConfig::default(),
            seed: 0,
        }
    }
}

impl AggregatorConfig {
    /// Runs the configured aggregator. `step` decorrelates PCGrad's
    /// projection order across steps while staying reproducible.
    pub fn aggregate(&self, tg: &TaskGradients, step: u64) -> Result<AggregationResult> {
        match self.kind {
            AggregatorKind::Ls => Ok(ls_aggregate(tg)),
            AggregatorKind::PcGrad => {
                pcgrad(tg, self.seed ^ step.wrapping_mul(0x9E37_79B9_7F4A_7C15))
            }
            AggregatorKind::Mgda => mgda(tg),
            AggregatorKind::CaGrad => cagrad(tg, self.c),
            AggregatorKind::Ldp => ldp(tg, &self.ldp),
        }
    }
}
