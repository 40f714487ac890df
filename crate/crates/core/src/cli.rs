//! Experiment commands behind the `monce` binary: loss evaluation, parameter
//! sweeps, similarity histograms, gradient checks and an embedding
//! optimization demo. Each command validates its inputs before computing and
//! writes CSV output atomically.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::features::{normalize_rows, random_unit_rows, similarity, FeatureSet};
use crate::io::{read_features, write_csv, RunConfig, Table};
use crate::losses::{
    freeze_weights, frozen_grad, frozen_loss, loss_and_grad, multilayer, LossConfig, LossReport,
    Mode,
};
use crate::weighting::Strategy;

/// Finite-difference step used by [`cmd_gradcheck`].
pub const GRADCHECK_STEP: f64 = 1e-4;
/// Largest accepted relative gradient error.
pub const GRADCHECK_TOL: f64 = 1e-4;

fn load_config(path: Option<&Path>) -> Result<RunConfig> {
    match path {
        Some(p) => RunConfig::read(p),
        None => Ok(RunConfig::default()),
    }
}

pub fn cmd_loss(
    x_path: &Path,
    y_path: &Path,
    config_path: Option<&Path>,
    out: Option<&Path>,
) -> Result<LossReport> {
    let cfg = load_config(config_path)?;
    let x = read_features(x_path)?;
    let y = read_features(y_path)?;
    let report = multilayer(&x, &y, &cfg.loss)?;
    if let Some(out) = out {
        let mut t = Table::new(["layer_id", "loss"]);
        for &(id, v) in &report.per_layer {
            t.push(vec![(id as i64).into(), v.into()])?;
        }
        write_csv(out, &t)?;
    }
    Ok(report)
}

/// Human-readable summary of a report.
pub fn format_report(report: &LossReport) -> String {
    let mut s = format!("total {}\n", report.total);
    for (id, v) in &report.per_layer {
        s.push_str(&format!("layer {id} {v}\n"));
    }
    for d in &report.solver {
        s.push_str(&format!(
            "sinkhorn layer {} {:?}: iterations {} marginal_error {:e} transport_cost {} converged {}\n",
            d.layer_id, d.direction, d.iterations, d.marginal_error, d.transport_cost, d.converged
        ));
    }
    for w in &report.warnings {
        s.push_str(&format!("warning: {w}\n"));
    }
    s
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub beta_values: Vec<f64>,
    pub q_values: Vec<f64>,
    pub modes: Vec<Mode>,
    pub strategy: Strategy,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.beta_values.is_empty() || self.q_values.is_empty() || self.modes.is_empty() {
            return Err(Error::InvalidParameter(
                "sweep lists must be non-empty".into(),
            ));
        }
        for &v in self.beta_values.iter().chain(&self.q_values) {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "sweep values must be finite and positive, got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// One row per (beta, q, mode), in that nesting order.
pub fn sweep_table(
    x: &crate::losses::LayeredFeatureSet,
    y: &crate::losses::LayeredFeatureSet,
    base: &LossConfig,
    spec: &SweepSpec,
) -> Result<Table> {
    spec.validate()?;
    let mut t = Table::new(["beta", "q", "mode", "loss"]);
    for &beta in &spec.beta_values {
        for &q in &spec.q_values {
            for &mode in &spec.modes {
                let cfg = LossConfig {
                    beta,
                    q,
                    mode,
                    strategy: spec.strategy,
                    ..*base
                };
                let r = multilayer(x, y, &cfg)?;
                t.push(vec![
                    beta.into(),
                    q.into(),
                    mode.to_string().into(),
                    r.total.into(),
                ])?;
            }
        }
    }
    Ok(t)
}

pub fn cmd_sweep(
    x_path: &Path,
    y_path: &Path,
    config_path: Option<&Path>,
    spec: &SweepSpec,
    out: Option<&Path>,
) -> Result<Table> {
    spec.validate()?;
    let cfg = load_config(config_path)?;
    let x = read_features(x_path)?;
    let y = read_features(y_path)?;
    let t = sweep_table(&x, &y, &cfg.loss, spec)?;
    if let Some(out) = out {
        write_csv(out, &t)?;
    }
    Ok(t)
}

/// Bin index of `v` among `bins` equal-width bins over [-1, 1]. Values at or
/// beyond the edges land in the end bins.
pub fn bin_index(v: f64, bins: usize) -> usize {
    let pos = ((v + 1.0) / 2.0 * bins as f64).floor();
    if pos < 0.0 {
        0
    } else {
        (pos as usize).min(bins - 1)
    }
}

/// Positive (diagonal) and negative (off-diagonal) similarity counts per
/// bin, pooled over all layers.
pub fn similarity_histogram(
    x: &crate::losses::LayeredFeatureSet,
    y: &crate::losses::LayeredFeatureSet,
    bins: usize,
) -> Result<Table> {
    if bins < 2 {
        return Err(Error::InvalidParameter(format!(
            "bins must be at least 2, got {bins}"
        )));
    }
    if x.layer_ids() != y.layer_ids() {
        return Err(Error::LayerMismatch(format!(
            "x layers {:?} vs y layers {:?}",
            x.layer_ids(),
            y.layer_ids()
        )));
    }
    let mut pos = vec![0usize; bins];
    let mut neg = vec![0usize; bins];
    for (lx, ly) in x.layers().iter().zip(y.layers()) {
        let s = similarity(lx, ly)?;
        for ((i, j), &v) in s.as_array().indexed_iter() {
            let b = bin_index(v, bins);
            if i == j {
                pos[b] += 1;
            } else {
                neg[b] += 1;
            }
        }
    }
    let width = 2.0 / bins as f64;
    let mut t = Table::new(["bin_left", "bin_right", "pos_count", "neg_count"]);
    for b in 0..bins {
        let left = -1.0 + b as f64 * width;
        let right = if b + 1 == bins {
            1.0
        } else {
            -1.0 + (b + 1) as f64 * width
        };
        t.push(vec![
            left.into(),
            right.into(),
            pos[b].into(),
            neg[b].into(),
        ])?;
    }
    Ok(t)
}

pub fn cmd_hist(x_path: &Path, y_path: &Path, bins: usize, out: Option<&Path>) -> Result<Table> {
    if bins < 2 {
        return Err(Error::InvalidParameter(format!(
            "bins must be at least 2, got {bins}"
        )));
    }
    let x = read_features(x_path)?;
    let y = read_features(y_path)?;
    let t = similarity_histogram(&x, &y, bins)?;
    if let Some(out) = out {
        write_csv(out, &t)?;
    }
    Ok(t)
}

/// Largest gap between two gradients, relative to the larger of their
/// max-norms (floored at 1e-6 so vanishing gradients compare absolutely).
pub fn max_relative_error(analytic: &Array2<f64>, numeric: &Array2<f64>) -> f64 {
    let scale = analytic
        .iter()
        .chain(numeric.iter())
        .fold(1e-6f64, |m, v| m.max(v.abs()));
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, f)| (a - f).abs())
        .fold(0.0, f64::max)
        / scale
}

/// Central differences of the frozen-weight loss with respect to every entry
/// of `x` and `y`.
pub fn numeric_gradients(
    x: &FeatureSet,
    y: &FeatureSet,
    cfg: &LossConfig,
    frozen: &crate::losses::FrozenWeights,
    h: f64,
) -> Result<(Array2<f64>, Array2<f64>)> {
    let eval = |xd: &Array2<f64>, yd: &Array2<f64>| {
        frozen_loss(
            &FeatureSet::from_normalized_unchecked(xd.clone(), x.layer_id),
            &FeatureSet::from_normalized_unchecked(yd.clone(), y.layer_id),
            cfg,
            frozen,
        )
    };
    let (n, d) = x.data().dim();
    let mut gx = Array2::zeros((n, d));
    let mut gy = Array2::zeros((n, d));
    for i in 0..n {
        for k in 0..d {
            let mut xp = x.data().clone();
            let mut xm = x.data().clone();
            xp[[i, k]] += h;
            xm[[i, k]] -= h;
            gx[[i, k]] = (eval(&xp, y.data())? - eval(&xm, y.data())?) / (2.0 * h);

            let mut yp = y.data().clone();
            let mut ym = y.data().clone();
            yp[[i, k]] += h;
            ym[[i, k]] -= h;
            gy[[i, k]] = (eval(x.data(), &yp)? - eval(x.data(), &ym)?) / (2.0 * h);
        }
    }
    Ok((gx, gy))
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckRow {
    pub mode: Mode,
    pub max_rel_error: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckReport {
    pub rows: Vec<GradcheckRow>,
}

impl GradcheckReport {
    pub fn all_pass(&self) -> bool {
        self.rows.iter().all(|r| r.pass)
    }
}

impl fmt::Display for GradcheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "mode       max_rel_error  result")?;
        for r in &self.rows {
            writeln!(
                f,
                "{:<10} {:<14.3e} {}",
                r.mode.to_string(),
                r.max_rel_error,
                if r.pass { "PASS" } else { "FAIL" }
            )?;
        }
        Ok(())
    }
}

/// Compares analytic and central-difference gradients for every mode on one
/// random `n x d` instance drawn from `seed`. Weights are frozen at the
/// unperturbed point.
pub fn gradcheck(base: &LossConfig, n: usize, d: usize, seed: u64) -> Result<GradcheckReport> {
    if n < 2 {
        return Err(Error::InvalidParameter(format!(
            "gradcheck needs n >= 2, got {n}"
        )));
    }
    if d < 1 {
        return Err(Error::InvalidParameter("gradcheck needs d >= 1".into()));
    }
    base.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = random_unit_rows(&mut rng, n, d);
    let y = random_unit_rows(&mut rng, n, d);
    let mut rows = Vec::new();
    for mode in Mode::ALL {
        let cfg = base.with_mode(mode);
        let frozen = freeze_weights(&x, &y, &cfg)?;
        let g = frozen_grad(&x, &y, &cfg, &frozen)?;
        let (nx, ny) = numeric_gradients(&x, &y, &cfg, &frozen, GRADCHECK_STEP)?;
        let err = max_relative_error(&g.dx, &nx).max(max_relative_error(&g.dy, &ny));
        rows.push(GradcheckRow {
            mode,
            max_rel_error: err,
            pass: err <= GRADCHECK_TOL,
        });
    }
    Ok(GradcheckReport { rows })
}

pub fn cmd_gradcheck(
    config_path: Option<&Path>,
    n: usize,
    d: usize,
    seed: u64,
) -> Result<GradcheckReport> {
    let cfg = load_config(config_path)?;
    gradcheck(&cfg.loss, n, d, seed)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Generator {
    /// Points scattered around a handful of random unit centers.
    GaussianClusters,
    UniformSphere,
}

impl fmt::Display for Generator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Generator::GaussianClusters => "gaussian_clusters",
            Generator::UniformSphere => "uniform_sphere",
        })
    }
}

impl FromStr for Generator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "gaussian_clusters" => Ok(Generator::GaussianClusters),
            "uniform_sphere" => Ok(Generator::UniformSphere),
            other => Err(Error::InvalidParameter(format!(
                "unknown generator {other:?} (expected gaussian_clusters or uniform_sphere)"
            ))),
        }
    }
}

const CLUSTER_SPREAD: f64 = 0.35;
/// Steps over which the demo expects a non-increasing loss.
const DEMO_WATCH_STEPS: usize = 10;

pub fn synthetic_features<R: Rng + ?Sized>(
    rng: &mut R,
    generator: Generator,
    n: usize,
    d: usize,
) -> FeatureSet {
    match generator {
        Generator::UniformSphere => random_unit_rows(rng, n, d),
        Generator::GaussianClusters => {
            let k = (n / 8).clamp(2, 8).min(n);
            let centers = random_unit_rows(rng, k, d);
            let noise = CLUSTER_SPREAD / (d as f64).sqrt();
            loop {
                let data = Array2::from_shape_fn((n, d), |(i, c)| {
                    centers.data()[[i % k, c]] + noise * rng.sample::<f64, _>(StandardNormal)
                });
                if let Ok(fs) = normalize_rows(data.view()) {
                    return fs;
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DemoSpec {
    pub n_patches: usize,
    pub dim: usize,
    pub steps: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub loss: LossConfig,
    pub generator: Generator,
    /// Standard deviation of the Gaussian perturbation turning `x` into the
    /// initial `y`. Zero starts from `y = x`.
    pub init_noise: f64,
}

impl Default for DemoSpec {
    fn default() -> Self {
        DemoSpec {
            n_patches: 64,
            dim: 16,
            steps: 200,
            learning_rate: 0.05,
            seed: 0,
            loss: LossConfig::default(),
            generator: Generator::GaussianClusters,
            init_noise: 0.5,
        }
    }
}

impl DemoSpec {
    pub fn validate(&self) -> Result<()> {
        if self.steps < 1 {
            return Err(Error::InvalidParameter("steps must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "learning rate must be finite and positive, got {}",
                self.learning_rate
            )));
        }
        if !(self.init_noise >= 0.0 && self.init_noise.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "init noise must be finite and nonnegative, got {}",
                self.init_noise
            )));
        }
        if self.n_patches < 2 || self.dim < 1 {
            return Err(Error::InvalidParameter(format!(
                "demo needs at least 2 patches and 1 dimension, got {}x{}",
                self.n_patches, self.dim
            )));
        }
        self.loss.validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DemoResult {
    /// Columns `step, loss, mean_pos_sim, mean_neg_sim`; row `k` is the state
    /// after `k` updates. `loss` is the mean over anchors.
    pub trajectory: Table,
    pub losses: Vec<f64>,
    pub warnings: Vec<String>,
}

fn mean_sims(x: &FeatureSet, y: &FeatureSet) -> Result<(f64, f64)> {
    let s = similarity(x, y)?;
    let n = s.n();
    let (mut pos, mut neg) = (0.0, 0.0);
    for ((i, j), &v) in s.as_array().indexed_iter() {
        if i == j {
            pos += v;
        } else {
            neg += v;
        }
    }
    Ok((pos / n as f64, neg / (n * (n - 1)) as f64))
}

/// Gradient descent on free embeddings `y` against fixed `x`; rows of `y`
/// are projected back onto the unit sphere after each step. The objective
/// is the mean per-anchor loss, so the step size does not scale with N.
pub fn run_demo(spec: &DemoSpec) -> Result<DemoResult> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let x = synthetic_features(&mut rng, spec.generator, spec.n_patches, spec.dim);
    let start = Array2::from_shape_fn(x.data().dim(), |(i, c)| {
        x.data()[[i, c]] + spec.init_noise * rng.sample::<f64, _>(StandardNormal)
    });
    let mut y = normalize_rows(start.view())?;
    y.layer_id = x.layer_id;

    let mut trajectory = Table::new(["step", "loss", "mean_pos_sim", "mean_neg_sim"]);
    let scale = spec.n_patches as f64;
    let mut losses = Vec::with_capacity(spec.steps + 1);
    let mut warnings = Vec::new();
    for step in 0..=spec.steps {
        let (report, g) = loss_and_grad(&x, &y, &spec.loss)?;
        warnings.extend(report.warnings.iter().map(|w| format!("step {step}: {w}")));
        let (pos, neg) = mean_sims(&x, &y)?;
        let loss = report.total / scale;
        trajectory.push(vec![step.into(), loss.into(), pos.into(), neg.into()])?;
        losses.push(loss);
        if step == spec.steps {
            break;
        }
        let moved = y.data() - &((spec.learning_rate / scale) * &g.dy);
        y = normalize_rows(moved.view())?;
        y.layer_id = x.layer_id;
    }

    if spec.generator == Generator::GaussianClusters && spec.learning_rate <= 0.1 {
        let watch = &losses[..losses.len().min(DEMO_WATCH_STEPS + 1)];
        if let Some(k) = watch.windows(2).position(|w| w[1] > w[0]) {
            warnings.push(format!(
                "loss increased at step {} ({} -> {})",
                k + 1,
                watch[k],
                watch[k + 1]
            ));
        }
    }
    Ok(DemoResult {
        trajectory,
        losses,
        warnings,
    })
}

pub fn cmd_demo(spec: &DemoSpec, out: Option<&Path>) -> Result<DemoResult> {
    let result = run_demo(spec)?;
    if let Some(out) = out {
        write_csv(out, &result.trajectory)?;
    }
    Ok(result)
}
