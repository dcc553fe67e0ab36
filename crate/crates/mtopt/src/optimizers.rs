//! Parameter-update rules consuming aggregated gradients: SGD, Adam/AdamW
//! with a static or curvature-adaptive first-moment coefficient, and Muon
//! with Newton-Schulz orthogonalization.

use std::fmt;
use std::str::FromStr;

use crate::aggregators::{AggregationResult, BlockLayout, BlockShape};
use crate::error::{Error, Result};
use crate::linalg::{dot, newton_schulz_with, norm, Mat, NsCoefficients};

/// Operational bounds for the adaptive momentum coefficient.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentumBounds {
    pub beta_min: f64,
    pub beta_max: f64,
}

impl Default for MomentumBounds {
    fn default() -> Self {
        Self {
            beta_min: 0.1,
            beta_max: 0.9,
        }
    }
}

impl MomentumBounds {
    pub fn new(beta_min: f64, beta_max: f64) -> Result<Self> {
        let b = Self { beta_min, beta_max };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0 <= self.beta_min && self.beta_min <= self.beta_max && self.beta_max < 1.0) {
            return Err(Error::InvalidInput(format!(
                "momentum bounds ({}, {}) must satisfy 0 <= min <= max < 1",
                self.beta_min, self.beta_max
            )));
        }
        Ok(())
    }
}

/// Interpolates the momentum coefficient from the curvature proxy:
/// `beta = beta_min + (beta_max - beta_min) * clip((rho + 1) / 2, 0, 1)`.
pub fn beta_from_rho(rho: f64, bounds: MomentumBounds) -> f64 {
    let t = ((rho + 1.0) / 2.0).clamp(0.0, 1.0);
    bounds.beta_min + (bounds.beta_max - bounds.beta_min) * t
}

/// Picks the momentum coefficient from the cosine of adjacent combined
/// gradients. Without a previous gradient, or when either vector is zero,
/// the curvature proxy is undefined and `beta_max` is used.
pub fn adaptive_beta(
    g_now: &[f64],
    g_prev: Option<&[f64]>,
    bounds: MomentumBounds,
) -> (f64, Option<f64>) {
    match curvature_proxy(g_now, g_prev) {
        Some(rho) => (beta_from_rho(rho, bounds), Some(rho)),
        None => (bounds.beta_max, None),
    }
}

/// Cosine of adjacent combined gradients (the curvature proxy), when defined.
fn curvature_proxy(g_now: &[f64], g_prev: Option<&[f64]>) -> Option<f64> {
    let prev = g_prev?;
    let (na, nb) = (norm(g_now), norm(prev));
    if na == 0.0 || nb == 0.0 {
        return None;
    }
    Some((dot(g_now, prev) / (na * nb)).clamp(-1.0, 1.0))
}

/// First-moment coefficient mode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BetaMode {
    Static(f64),
    /// "apt" mode: beta tracks the curvature proxy within the bounds.
    Adaptive(MomentumBounds),
}

impl BetaMode {
    pub fn validate(&self) -> Result<()> {
        match self {
            BetaMode::Static(b) => {
                if !(0.0..1.0).contains(b) {
                    return Err(Error::InvalidInput(format!("beta1 = {b} outside [0, 1)")));
                }
                Ok(())
            }
            BetaMode::Adaptive(bounds) => bounds.validate(),
        }
    }

    /// Largest momentum coefficient this mode can produce.
    pub fn max_beta(&self) -> f64 {
        match self {
            BetaMode::Static(b) => *b,
            BetaMode::Adaptive(bounds) => bounds.beta_max,
        }
    }
}

/// Optimizer identifiers, matching the harness config strings.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptimizerKind {
    Sgd,
    Adam,
    AdamW,
    Muon,
}

impl OptimizerKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            OptimizerKind::Sgd => "sgd",
            OptimizerKind::Adam => "adam",
            OptimizerKind::AdamW => "adamw",
            OptimizerKind::Muon => "muon",
        }
    }
}

impl FromStr for OptimizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sgd" => Ok(OptimizerKind::Sgd),
            "adam" => Ok(OptimizerKind::Adam),
            "adamw" => Ok(OptimizerKind::AdamW),
            "muon" => Ok(OptimizerKind::Muon),
            other => Err(Error::Config(format!("unknown optimizer id {other:?}"))),
        }
    }
}

impl fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Hyperparameters shared by the optimizer family.
#[derive(Debug, Clone)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub eta: f64,
    pub beta: BetaMode,
    pub beta2: f64,
    pub epsilon: f64,
    /// Decoupled weight decay; applied by AdamW only.
    pub weight_decay: f64,
    pub ns_iterations: usize,
    pub ns_coefficients: NsCoefficients,
}

impl OptimizerConfig {
    pub fn adam(eta: f64, beta: BetaMode) -> Self {
        Self {
            kind: OptimizerKind::Adam,
            eta,
            beta,
            beta2: 0.999,
            epsilon: 1e-8,
            weight_decay: 0.0,
            ns_iterations: 5,
            ns_coefficients: NsCoefficients::Hybrid,
        }
    }

    pub fn adamw(eta: f64, beta: BetaMode, weight_decay: f64) -> Self {
        Self {
            kind: OptimizerKind::AdamW,
            weight_decay,
            ..Self::adam(eta, beta)
        }
    }

    pub fn muon(eta: f64, beta: BetaMode, ns_iterations: usize) -> Self {
        Self {
            kind: OptimizerKind::Muon,
            ns_iterations,
            ..Self::adam(eta, beta)
        }
    }

    pub fn sgd(eta: f64) -> Self {
        Self {
            kind: OptimizerKind::Sgd,
            ..Self::adam(eta, BetaMode::Static(0.0))
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.beta.validate()?;
        if !self.eta.is_finite() || self.eta < 0.0 {
            return Err(Error::InvalidInput(format!("eta = {} invalid", self.eta)));
        }
        if !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::InvalidInput(format!(
                "beta2 = {} outside [0, 1)",
                self.beta2
            )));
        }
        if self.epsilon <= 0.0 || self.weight_decay < 0.0 {
            return Err(Error::InvalidInput(
                "epsilon must be > 0 and weight decay >= 0".into(),
            ));
        }
        if self.kind == OptimizerKind::Muon && self.ns_iterations == 0 {
            return Err(Error::InvalidInput("ns_iterations must be >= 1".into()));
        }
        Ok(())
    }
}

/// Mutable optimizer state over a block layout.
#[derive(Debug, Clone)]
pub struct OptimizerState {
    pub step: usize,
    /// First-moment accumulator, flattened over all blocks.
    pub m: Vec<f64>,
    /// Second-moment accumulator (Adam family and Muon's vector fallback).
    pub v: Vec<f64>,
    /// Combined gradient of the previous step.
    pub prev_combined: Option<Vec<f64>>,
    /// Running product of the beta_j, for the dynamic bias correction
    /// rho_{1,t} = 1 - prod(beta_j).
    pub beta_product: f64,
    pub last_beta: f64,
    pub config: OptimizerConfig,
    layout: BlockLayout,
}

/// Per-step measurements emitted by the update rules.
#[derive(Debug, Clone)]
pub struct StepReport {
    pub beta_used: f64,
    /// Curvature proxy cos(G_t, G_{t-1}); absent on the first step and when
    /// either adjacent gradient is zero.
    pub rho: Option<f64>,
    /// ||m_t - G_t||, the momentum tracking error.
    pub tracking_error_norm: f64,
    pub update_norm: f64,
    /// Matrix blocks skipped because their momentum was identically zero.
    pub degenerate_blocks: Vec<usize>,
}

impl OptimizerState {
    pub fn new(config: OptimizerConfig, layout: BlockLayout) -> Result<Self> {
        config.validate()?;
        let dim = layout.total_len();
        Ok(Self {
            step: 0,
            m: vec![0.0; dim],
            v: vec![0.0; dim],
            prev_combined: None,
            beta_product: 1.0,
            last_beta: config.beta.max_beta(),
            config,
            layout,
        })
    }

    pub fn layout(&self) -> &BlockLayout {
        &self.layout
    }

    /// Applies one update of the configured kind.
    pub fn apply(&mut self, params: &mut [f64], g: &AggregationResult) -> Result<StepReport> {
        match self.config.kind {
            OptimizerKind::Sgd => {
                let before: Vec<f64> = params.to_vec();
                sgd_step(params, g, self.config.eta)?;
                self.step += 1;
                let update_norm = diff_norm(params, &before);
                let rho = curvature_proxy(&g.combined, self.prev_combined.as_deref());
                self.prev_combined = Some(g.combined.clone());
                Ok(StepReport {
                    beta_used: 0.0,
                    rho,
                    tracking_error_norm: 0.0,
                    update_norm,
                    degenerate_blocks: Vec::new(),
                })
            }
            OptimizerKind::Adam | OptimizerKind::AdamW => adam_step(self, params, g),
            OptimizerKind::Muon => muon_step(self, params, g),
        }
    }

    /// Resolves this step's beta and curvature proxy, updating the running
    /// beta product and the previous-gradient cache.
    fn advance_beta(&mut self, g: &AggregationResult) -> (f64, Option<f64>) {
        let rho = curvature_proxy(&g.combined, self.prev_combined.as_deref());
        let beta = match self.config.beta {
            BetaMode::Static(b) => b,
            BetaMode::Adaptive(bounds) => match rho {
                Some(r) => beta_from_rho(r, bounds),
                None => bounds.beta_max,
            },
        };
        self.step += 1;
        self.beta_product *= beta;
        self.last_beta = beta;
        self.prev_combined = Some(g.combined.clone());
        (beta, rho)
    }
}

fn diff_norm(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

fn check_shapes(state: &OptimizerState, params: &[f64], g: &AggregationResult) -> Result<()> {
    let dim = state.layout.total_len();
    if params.len() != dim || g.combined.len() != dim {
        return Err(Error::InvalidInput(format!(
            "shape mismatch: layout {dim}, params {}, gradient {}",
            params.len(),
            g.combined.len()
        )));
    }
    Ok(())
}

/// One Adam/AdamW step over all blocks (elementwise).
///
/// `m_t = beta_t m_{t-1} + (1 - beta_t) G_t`, `v_t = beta2 v_{t-1} +
/// (1 - beta2) G_t^2`, bias corrections `rho_1 = 1 - prod(beta_j)` and
/// `rho_2 = 1 - beta2^t`, update `theta -= eta (m/rho_1) / (sqrt(v/rho_2) +
/// eps)`. AdamW applies decoupled decay `theta *= 1 - eta lambda` before the
/// adaptive step.
pub fn adam_step(
    state: &mut OptimizerState,
    params: &mut [f64],
    g: &AggregationResult,
) -> Result<StepReport> {
    check_shapes(state, params, g)?;
    let (beta, rho) = state.advance_beta(g);
    let cfg = &state.config;

    if cfg.kind == OptimizerKind::AdamW && cfg.weight_decay > 0.0 {
        let decay = 1.0 - cfg.eta * cfg.weight_decay;
        for p in params.iter_mut() {
            *p *= decay;
        }
    }

    let rho1 = 1.0 - state.beta_product;
    let rho2 = 1.0 - cfg.beta2.powi(state.step as i32);
    let before: Vec<f64> = params.to_vec();
    let mut tracking_sq = 0.0;
    for i in 0..params.len() {
        let gi = g.combined[i];
        state.m[i] = beta * state.m[i] + (1.0 - beta) * gi;
        state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * gi * gi;
        let m_hat = state.m[i] / rho1;
        let v_hat = state.v[i] / rho2;
        params[i] -= cfg.eta * m_hat / (v_hat.sqrt() + cfg.epsilon);
        let d = state.m[i] - gi;
        tracking_sq += d * d;
    }

    Ok(StepReport {
        beta_used: beta,
        rho,
        tracking_error_norm: tracking_sq.sqrt(),
        update_norm: diff_norm(params, &before),
        degenerate_blocks: Vec::new(),
    })
}

/// One Muon step: per matrix block, momentum then Newton-Schulz
/// orthogonalization, `theta -= eta O_t`. Vector blocks fall back to the
/// Adam update with the same learning rate. A matrix block whose momentum is
/// identically zero is skipped and flagged.
pub fn muon_step(
    state: &mut OptimizerState,
    params: &mut [f64],
    g: &AggregationResult,
) -> Result<StepReport> {
    check_shapes(state, params, g)?;
    let (beta, rho) = state.advance_beta(g);
    let cfg = state.config.clone();

    let rho1 = 1.0 - state.beta_product;
    let rho2 = 1.0 - cfg.beta2.powi(state.step as i32);
    let before: Vec<f64> = params.to_vec();
    let mut tracking_sq = 0.0;
    for i in 0..params.len() {
        let gi = g.combined[i];
        state.m[i] = beta * state.m[i] + (1.0 - beta) * gi;
        state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * gi * gi;
        let d = state.m[i] - gi;
        tracking_sq += d * d;
    }

    let mut degenerate = Vec::new();
    for (idx, (_, shape, range)) in state.layout.clone().blocks().enumerate() {
        match shape {
            BlockShape::Matrix(r, c) => {
                let m_block = Mat::new(r, c, state.m[range.clone()].to_vec())
                    .expect("momentum stays finite");
                if m_block.frob_norm() == 0.0 {
                    degenerate.push(idx);
                    continue;
                }
                let o = newton_schulz_with(&m_block, cfg.ns_iterations, cfg.ns_coefficients)?;
                for (offset, oi) in o.data().iter().enumerate() {
                    params[range.start + offset] -= cfg.eta * oi;
                }
            }
            BlockShape::Vector(_) => {
                for i in range {
                    let m_hat = state.m[i] / rho1;
                    let v_hat = state.v[i] / rho2;
                    params[i] -= cfg.eta * m_hat / (v_hat.sqrt() + cfg.epsilon);
                }
            }
        }
    }

    Ok(StepReport {
        beta_used: beta,
        rho,
        tracking_error_norm: tracking_sq.sqrt(),
        update_norm: diff_norm(params, &before),
        degenerate_blocks: degenerate,
    })
}

/// Plain gradient descent `theta -= eta G_t`.
pub fn sgd_step(params: &mut [f64], g: &AggregationResult, eta: f64) -> Result<()> {
    if params.len() != g.combined.len() {
        return Err(Error::InvalidInput(format!(
            "shape mismatch: params {}, gradient {}",
            params.len(),
            g.combined.len()
        )));
    }
    for (p, gi) in params.iter_mut().zip(&g.combined) {
        *p -= eta * gi;
    }
    Ok(())
}

/// One recorded optimizer step: the data needed to replay the momentum
/// recursion.
#[derive(Debug, Clone)]
pub struct StepTrace {
    pub beta: f64,
    /// Combined gradient G_t.
    pub combined: Vec<f64>,
    /// First moment m_t after the update.
    pub momentum: Vec<f64>,
}

/// Verifies the exact recursion `delta_t = beta_t (delta_{t-1} + G_{t-1} -
/// G_t)` with `delta_t = m_t - G_t`, over a history recorded from the
/// optimizer's first step (so the zero initial state closes the identity at
/// t = 1). Returns the largest residual norm.
pub fn tracking_error_recursion_check(history: &[StepTrace]) -> Result<f64> {
    if history.len() < 2 {
        return Err(Error::InvalidInput(
            "need at least 2 recorded steps".into(),
        ));
    }
    let dim = history[0].combined.len();
    let mut prev_g = vec![0.0; dim];
    let mut prev_delta = vec![0.0; dim];
    let mut max_resid: f64 = 0.0;
    for tr in history {
        let mut resid_sq = 0.0;
        for i in 0..dim {
            let delta = tr.momentum[i] - tr.combined[i];
            let predicted = tr.beta * (prev_delta[i] + prev_g[i] - tr.combined[i]);
            resid_sq += (delta - predicted) * (delta - predicted);
        }
        max_resid = max_resid.max(resid_sq.sqrt());
        for i in 0..dim {
            prev_delta[i] = tr.momentum[i] - tr.combined[i];
            prev_g[i] = tr.combined[i];
        }
    }
    Ok(max_resid)
}

/// Empirical tracking-error bound report.
#[derive(Debug, Clone, Copy)]
pub struct MonitorReport {
    /// `(1/T) sum ||delta_t||^2`.
    pub mean_delta_sq: f64,
    /// `(1/T) sum beta_t^2 ||G_t - G_{t-1}||^2`.
    pub mean_drive_sq: f64,
    /// `(beta_max / (1 - beta_max))^2 * 4`.
    pub bound_constant: f64,
    pub satisfied: bool,
}

/// Checks `(1/T) sum ||delta_t||^2 <= C (1/T) sum beta_t^2 ||G_t -
/// G_{t-1}||^2` with `C = (beta_max / (1 - beta_max))^2 * 4`. `beta_max`
/// must upper-bound every beta in the history and be at least 0.5 for the
/// geometric-summation argument behind C to apply; callers should pass
/// `max(0.9, run beta_max)`.
pub fn tracking_error_monitor(history: &[StepTrace], beta_max: f64) -> MonitorReport {
    let mut sum_delta = 0.0;
    let mut sum_drive = 0.0;
    let dim = history.first().map(|t| t.combined.len()).unwrap_or(0);
    let mut prev_g = vec![0.0; dim];
    for tr in history {
        let mut dsq = 0.0;
        let mut gsq = 0.0;
        for i in 0..dim {
            let delta = tr.momentum[i] - tr.combined[i];
            dsq += delta * delta;
            let dg = tr.combined[i] - prev_g[i];
            gsq += dg * dg;
        }
        sum_delta += dsq;
        sum_drive += tr.beta * tr.beta * gsq;
        prev_g.copy_from_slice(&tr.combined);
    }
    let t = history.len().max(1) as f64;
    let c = (beta_max / (1.0 - beta_max)).powi(2) * 4.0;
    let lhs = sum_delta / t;
    let rhs = c * sum_drive / t;
    MonitorReport {
        mean_delta_sq: lhs,
        mean_drive_sq: sum_drive / t,
        bound_constant: c,
        satisfied: lhs <= rhs * (1.0 + 1e-12) + 1e-300,
    }
}
