//! PatchNCE, WeightNCE and MoNCE losses with closed-form gradients.
//!
//! All three share one per-anchor term
//!
//! ```text
//! l_i = -log( e^{s_ii/τ} / (e^{s_ii/τ} + Q (N-1) Σ_{j≠i} w_ij e^{s_ij/τ}) )
//! ```
//!
//! PatchNCE is the case `w_ij = 1/(N-1)`, `Q = 1`; WeightNCE takes `w` from a
//! per-anchor softmax; MoNCE takes `w` from the transport plan. Every term is
//! evaluated as a log-sum-exp.

use std::fmt;
use std::str::FromStr;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::features::{similarity, FeatureSet, SimilarityMatrix};
use crate::ot::{build_cost, sinkhorn, SinkhornParams, TransportPlan};
use crate::weighting::{strategy_weights, Strategy, WeightMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mode {
    PatchNce,
    WeightNce,
    MoNce,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::PatchNce, Mode::WeightNce, Mode::MoNce];
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::PatchNce => "patchnce",
            Mode::WeightNce => "weightnce",
            Mode::MoNce => "monce",
        })
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "patchnce" => Ok(Mode::PatchNce),
            "weightnce" => Ok(Mode::WeightNce),
            "monce" => Ok(Mode::MoNce),
            other => Err(Error::InvalidParameter(format!(
                "unknown mode {other:?} (expected patchnce, weightnce or monce)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossConfig {
    /// Similarity temperature.
    pub tau: f64,
    /// Weighting softmax / transport cost temperature.
    pub beta: f64,
    /// Multiplier on the summed negative terms.
    pub q: f64,
    pub strategy: Strategy,
    pub mode: Mode,
    pub sinkhorn: SinkhornParams,
    pub bidirectional: bool,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            tau: 0.07,
            beta: 0.1,
            q: 1.0,
            strategy: Strategy::Hard,
            mode: Mode::MoNce,
            sinkhorn: SinkhornParams::default(),
            bidirectional: false,
        }
    }
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "{name} must be a finite positive number, got {v}"
        )))
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        positive("tau", self.tau)?;
        positive("beta", self.beta)?;
        positive("q", self.q)?;
        self.sinkhorn.validate()
    }

    pub fn with_mode(mut self, mode: Mode) -> Self {
        self.mode = mode;
        self
    }
}

/// Feature sets of several encoder layers over the same patches.
#[derive(Debug, Clone, PartialEq)]
pub struct LayeredFeatureSet {
    layers: Vec<FeatureSet>,
}

impl LayeredFeatureSet {
    /// Layers must be non-empty, in strictly increasing `layer_id` order, and
    /// share one patch count.
    pub fn new(layers: Vec<FeatureSet>) -> Result<Self> {
        let first = layers
            .first()
            .ok_or_else(|| Error::LayerMismatch("no layers".into()))?;
        let n = first.n_patches();
        for pair in layers.windows(2) {
            if pair[1].layer_id <= pair[0].layer_id {
                return Err(Error::LayerMismatch(format!(
                    "layer ids must be strictly increasing, got {} after {}",
                    pair[1].layer_id, pair[0].layer_id
                )));
            }
        }
        if let Some(bad) = layers.iter().find(|l| l.n_patches() != n) {
            return Err(Error::LayerMismatch(format!(
                "layer {} has {} patches, expected {n}",
                bad.layer_id,
                bad.n_patches()
            )));
        }
        Ok(LayeredFeatureSet { layers })
    }

    pub fn single(layer: FeatureSet) -> Self {
        LayeredFeatureSet {
            layers: vec![layer],
        }
    }

    pub fn layers(&self) -> &[FeatureSet] {
        &self.layers
    }

    pub fn layer_ids(&self) -> Vec<u32> {
        self.layers.iter().map(|l| l.layer_id).collect()
    }

    pub fn n_patches(&self) -> usize {
        self.layers[0].n_patches()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// Anchors from `x`, candidates from `y`.
    Forward,
    /// Anchors from `y`, candidates from `x`.
    Reverse,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverDiagnostics {
    pub layer_id: u32,
    pub direction: Direction,
    pub iterations: usize,
    pub marginal_error: f64,
    pub transport_cost: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossReport {
    pub total: f64,
    pub per_layer: Vec<(u32, f64)>,
    /// Per patch index, summed over layers and directions.
    pub per_anchor: Option<Vec<f64>>,
    pub solver: Vec<SolverDiagnostics>,
    pub warnings: Vec<String>,
}

impl LossReport {
    fn merge(mut self, other: LossReport) -> LossReport {
        self.total += other.total;
        for (id, v) in other.per_layer {
            match self.per_layer.iter_mut().find(|(l, _)| *l == id) {
                Some((_, acc)) => *acc += v,
                None => self.per_layer.push((id, v)),
            }
        }
        self.per_anchor = match (self.per_anchor, other.per_anchor) {
            (Some(a), Some(b)) if a.len() == b.len() => {
                Some(a.iter().zip(&b).map(|(p, q)| p + q).collect())
            }
            _ => None,
        };
        self.solver.extend(other.solver);
        self.warnings.extend(other.warnings);
        self
    }
}

/// Negative-pair weights fixed at one point. `None` means the unweighted
/// PatchNCE denominator.
#[derive(Debug, Clone, PartialEq)]
pub struct FrozenWeights {
    pub forward: Option<WeightMatrix>,
    pub reverse: Option<WeightMatrix>,
}

/// Log-coefficients of the denominator terms of anchor `i`, paired with the
/// column they belong to. The positive pair has coefficient 1.
fn log_terms(
    s: &SimilarityMatrix,
    w: Option<&WeightMatrix>,
    tau: f64,
    q: f64,
    i: usize,
) -> Vec<(usize, f64)> {
    let n = s.n();
    let mut out = Vec::with_capacity(n);
    out.push((i, s.get(i, i) / tau));
    match w {
        None => {
            for j in (0..n).filter(|&j| j != i) {
                out.push((j, s.get(i, j) / tau));
            }
        }
        Some(w) => {
            let scale = q * (n - 1) as f64;
            for j in (0..n).filter(|&j| j != i) {
                let wij = w.w[[i, j]];
                if wij > 0.0 {
                    out.push((j, (scale * wij).ln() + s.get(i, j) / tau));
                }
            }
        }
    }
    out
}

fn log_sum_exp(terms: &[(usize, f64)]) -> f64 {
    let peak = terms.iter().map(|t| t.1).fold(f64::NEG_INFINITY, f64::max);
    peak + terms.iter().map(|t| (t.1 - peak).exp()).sum::<f64>().ln()
}

/// Per-anchor contrastive terms for a given similarity matrix and weights.
pub fn anchor_terms(s: &SimilarityMatrix, w: Option<&WeightMatrix>, tau: f64, q: f64) -> Vec<f64> {
    (0..s.n())
        .map(|i| {
            let terms = log_terms(s, w, tau, q, i);
            // Never negative: the positive term is inside the log-sum-exp.
            (log_sum_exp(&terms) - s.get(i, i) / tau).max(0.0)
        })
        .collect()
}

/// `dL/dS` of the summed anchor terms, weights held fixed.
pub fn similarity_gradient(
    s: &SimilarityMatrix,
    w: Option<&WeightMatrix>,
    tau: f64,
    q: f64,
) -> Array2<f64> {
    let n = s.n();
    let mut g = Array2::zeros((n, n));
    for i in 0..n {
        let terms = log_terms(s, w, tau, q, i);
        let lse = log_sum_exp(&terms);
        for &(j, v) in &terms {
            g[[i, j]] += (v - lse).exp() / tau;
        }
        g[[i, i]] -= 1.0 / tau;
    }
    g
}

fn check_shapes(x: &FeatureSet, y: &FeatureSet) -> Result<()> {
    if x.n_patches() != y.n_patches() || x.dim() != y.dim() {
        return Err(Error::DimensionMismatch(format!(
            "x is {}x{}, y is {}x{}",
            x.n_patches(),
            x.dim(),
            y.n_patches(),
            y.dim()
        )));
    }
    Ok(())
}

fn report_from_terms(layer_id: u32, terms: Vec<f64>) -> LossReport {
    let total = terms.iter().sum();
    LossReport {
        total,
        per_layer: vec![(layer_id, total)],
        per_anchor: Some(terms),
        solver: Vec::new(),
        warnings: Vec::new(),
    }
}

/// Unweighted patch contrastive loss. A single patch has no negatives and
/// scores 0.
pub fn patchnce(x: &FeatureSet, y: &FeatureSet, tau: f64) -> Result<LossReport> {
    check_shapes(x, y)?;
    positive("tau", tau)?;
    let s = similarity(x, y)?;
    Ok(report_from_terms(
        x.layer_id,
        anchor_terms(&s, None, tau, 1.0),
    ))
}

/// Weights for one direction, plus solver diagnostics for MoNCE.
fn direction_weights(
    s: &SimilarityMatrix,
    cfg: &LossConfig,
    layer_id: u32,
    direction: Direction,
) -> Result<(Option<WeightMatrix>, Option<SolverDiagnostics>)> {
    match cfg.mode {
        Mode::PatchNce => Ok((None, None)),
        Mode::WeightNce => Ok((Some(strategy_weights(s, cfg.strategy, cfg.beta)?), None)),
        Mode::MoNce => {
            let cost = build_cost(s, cfg.strategy, cfg.beta)?;
            let plan: TransportPlan = match sinkhorn(&cost, &cfg.sinkhorn) {
                Ok(p) => p,
                Err(Error::NoConvergence { plan, .. }) => *plan,
                Err(e) => return Err(e),
            };
            let diag = SolverDiagnostics {
                layer_id,
                direction,
                iterations: plan.iterations,
                marginal_error: plan.marginal_error,
                transport_cost: plan.transport_cost,
                converged: plan.converged,
            };
            Ok((Some(plan.plan), Some(diag)))
        }
    }
}

fn require_negatives(n: usize, mode: Mode) -> Result<()> {
    if n < 2 && mode != Mode::PatchNce {
        return Err(Error::DegenerateAnchor(n));
    }
    Ok(())
}

/// One direction of the mode-selected loss on one layer.
fn directed(
    s: &SimilarityMatrix,
    cfg: &LossConfig,
    layer_id: u32,
    direction: Direction,
) -> Result<(LossReport, Option<WeightMatrix>)> {
    require_negatives(s.n(), cfg.mode)?;
    let (w, diag) = direction_weights(s, cfg, layer_id, direction)?;
    let q = if cfg.mode == Mode::PatchNce {
        1.0
    } else {
        cfg.q
    };
    let mut report = report_from_terms(layer_id, anchor_terms(s, w.as_ref(), cfg.tau, q));
    if let Some(d) = diag {
        if !d.converged {
            report.warnings.push(format!(
                "layer {layer_id} {direction:?}: sinkhorn stopped after {} iterations with marginal error {:e}",
                d.iterations, d.marginal_error
            ));
        }
        report.solver.push(d);
    }
    Ok((report, w))
}

fn single_direction(
    x: &FeatureSet,
    y: &FeatureSet,
    cfg: &LossConfig,
    mode: Mode,
) -> Result<LossReport> {
    check_shapes(x, y)?;
    cfg.validate()?;
    let cfg = cfg.with_mode(mode);
    let s = similarity(x, y)?;
    Ok(directed(&s, &cfg, x.layer_id, Direction::Forward)?.0)
}

/// Contrastive loss with per-anchor softmax weights over negatives.
pub fn weightnce(x: &FeatureSet, y: &FeatureSet, cfg: &LossConfig) -> Result<LossReport> {
    single_direction(x, y, cfg, Mode::WeightNce)
}

/// Contrastive loss weighted by the entropic transport plan. A plan that
/// misses the Sinkhorn tolerance is still used; the report carries a warning.
pub fn monce(x: &FeatureSet, y: &FeatureSet, cfg: &LossConfig) -> Result<LossReport> {
    single_direction(x, y, cfg, Mode::MoNce)
}

/// `loss(x -> y) + loss(y -> x)`. The reverse direction uses `y` patches as
/// anchors and computes its own weights from the transposed similarities.
pub fn bidirectional(x: &FeatureSet, y: &FeatureSet, cfg: &LossConfig) -> Result<LossReport> {
    if !cfg.bidirectional {
        return Err(Error::InvalidParameter(
            "bidirectional loss requested with bidirectional = false".into(),
        ));
    }
    layer_loss(x, y, cfg)
}

/// The loss `cfg` selects for one layer, including the reverse direction
/// when `cfg.bidirectional` is set.
pub fn layer_loss(x: &FeatureSet, y: &FeatureSet, cfg: &LossConfig) -> Result<LossReport> {
    check_shapes(x, y)?;
    cfg.validate()?;
    let s = similarity(x, y)?;
    let forward = directed(&s, cfg, x.layer_id, Direction::Forward)?.0;
    if !cfg.bidirectional {
        return Ok(forward);
    }
    let reverse = directed(&s.transpose(), cfg, x.layer_id, Direction::Reverse)?.0;
    Ok(forward.merge(reverse))
}

/// Sum of the per-layer losses.
pub fn multilayer(
    xl: &LayeredFeatureSet,
    yl: &LayeredFeatureSet,
    cfg: &LossConfig,
) -> Result<LossReport> {
    if xl.layer_ids() != yl.layer_ids() {
        return Err(Error::LayerMismatch(format!(
            "x layers {:?} vs y layers {:?}",
            xl.layer_ids(),
            yl.layer_ids()
        )));
    }
    let mut acc: Option<LossReport> = None;
    for (x, y) in xl.layers().iter().zip(yl.layers()) {
        let r = layer_loss(x, y, cfg)?;
        acc = Some(match acc {
            None => r,
            Some(a) => a.merge(r),
        });
    }
    // Non-empty by construction of LayeredFeatureSet.
    Ok(acc.expect("at least one layer"))
}

/// Computes the weights `cfg` would use at `(x, y)`, for later evaluation
/// with those weights held fixed.
pub fn freeze_weights(x: &FeatureSet, y: &FeatureSet, cfg: &LossConfig) -> Result<FrozenWeights> {
    check_shapes(x, y)?;
    cfg.validate()?;
    let s = similarity(x, y)?;
    let forward = directed(&s, cfg, x.layer_id, Direction::Forward)?.1;
    let reverse = if cfg.bidirectional {
        directed(&s.transpose(), cfg, x.layer_id, Direction::Reverse)?.1
    } else {
        None
    };
    Ok(FrozenWeights { forward, reverse })
}

fn effective_q(cfg: &LossConfig) -> f64 {
    if cfg.mode == Mode::PatchNce {
        1.0
    } else {
        cfg.q
    }
}

/// Loss value at `(x, y)` with previously frozen weights. Rows of `x` and `y`
/// are used as given, without renormalization.
pub fn frozen_loss(
    x: &FeatureSet,
    y: &FeatureSet,
    cfg: &LossConfig,
    frozen: &FrozenWeights,
) -> Result<f64> {
    check_shapes(x, y)?;
    require_negatives(x.n_patches(), cfg.mode)?;
    let s = similarity(x, y)?;
    let q = effective_q(cfg);
    let mut total: f64 = anchor_terms(&s, frozen.forward.as_ref(), cfg.tau, q)
        .iter()
        .sum();
    if cfg.bidirectional {
        total += anchor_terms(&s.transpose(), frozen.reverse.as_ref(), cfg.tau, q)
            .iter()
            .sum::<f64>();
    }
    Ok(total)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub dx: Array2<f64>,
    pub dy: Array2<f64>,
}

/// Gradient of [`frozen_loss`] with respect to the rows of `x` and `y`.
pub fn frozen_grad(
    x: &FeatureSet,
    y: &FeatureSet,
    cfg: &LossConfig,
    frozen: &FrozenWeights,
) -> Result<Gradients> {
    check_shapes(x, y)?;
    require_negatives(x.n_patches(), cfg.mode)?;
    let s = similarity(x, y)?;
    let q = effective_q(cfg);
    let mut g = similarity_gradient(&s, frozen.forward.as_ref(), cfg.tau, q);
    if cfg.bidirectional {
        // Reverse terms depend on Sᵀ, so their gradient enters transposed.
        let gr = similarity_gradient(&s.transpose(), frozen.reverse.as_ref(), cfg.tau, q);
        g += &gr.t();
    }
    Ok(Gradients {
        dx: g.dot(y.data()),
        dy: g.t().dot(x.data()),
    })
}

/// Analytic gradient of the `cfg` loss with respect to the (normalized) rows
/// of `x` and `y`. Weights are recomputed at `(x, y)` and then treated as
/// constants.
pub fn grad(x: &FeatureSet, y: &FeatureSet, cfg: &LossConfig) -> Result<Gradients> {
    let frozen = freeze_weights(x, y, cfg)?;
    frozen_grad(x, y, cfg, &frozen)
}

/// [`layer_loss`] and [`grad`] from a single weight computation.
pub fn loss_and_grad(
    x: &FeatureSet,
    y: &FeatureSet,
    cfg: &LossConfig,
) -> Result<(LossReport, Gradients)> {
    check_shapes(x, y)?;
    cfg.validate()?;
    let s = similarity(x, y)?;
    let (mut report, forward) = directed(&s, cfg, x.layer_id, Direction::Forward)?;
    let mut reverse = None;
    if cfg.bidirectional {
        let (r, w) = directed(&s.transpose(), cfg, x.layer_id, Direction::Reverse)?;
        report = report.merge(r);
        reverse = w;
    }
    let g = frozen_grad(x, y, cfg, &FrozenWeights { forward, reverse })?;
    Ok((report, g))
}
