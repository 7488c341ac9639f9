//! Batched regression of the control network against score targets.
//!
//! Each training batch simulates fresh paths, observes y = G(x_T) per path,
//! computes the per-node targets, and takes one Adam step on the summed
//! squared residual. Everything is a pure function of the config seed.

use ndarray::Array2;

use crate::conditioning::{observation_seed, ObservationOp};
use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::models::{make_model, ModelSpec};
use crate::net::{AdamState, DriftNet};
use crate::rng::{derive_seed, CounterRng};
use crate::schedule::AlphaSchedule;
use crate::sde::{simulate_path, PathBatch, SdeModel};
use crate::targets::{
    adjoint_score_targets, gaussian_step_targets, reparam_score_targets, ScoreTargetSet,
};

/// Starting-point policy for training paths.
#[derive(Debug, Clone)]
pub enum X0Policy {
    Fixed(Vec<f64>),
    /// Coordinatewise uniform draw from [lo, hi], fresh per path.
    UniformBox { lo: f64, hi: f64 },
}

impl X0Policy {
    fn draw(&self, dim: usize, seed: u64) -> Vec<f64> {
        match self {
            Self::Fixed(x0) => x0.clone(),
            Self::UniformBox { lo, hi } => {
                let rng = CounterRng::new(seed);
                (0..dim).map(|i| lo + (hi - lo) * rng.uniform_at(i as u64)).collect()
            }
        }
    }
}

/// Which target family the regression uses.
#[derive(Debug, Clone)]
pub enum TargetRule {
    Adjoint(AlphaSchedule),
    Reparam,
    GaussianStep,
}

impl TargetRule {
    pub fn descriptor(&self) -> String {
        match self {
            Self::Adjoint(s) => format!("adjoint:{}", s.descriptor()),
            Self::Reparam => "reparam".into(),
            Self::GaussianStep => "gaussian-step".into(),
        }
    }

    fn compute(&self, model: &dyn SdeModel, path: &crate::sde::PathSample) -> Result<ScoreTargetSet> {
        match self {
            Self::Adjoint(s) => adjoint_score_targets(model, path, s),
            Self::Reparam => reparam_score_targets(model, path, true),
            Self::GaussianStep => gaussian_step_targets(model, path),
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub model: ModelSpec,
    pub grid: TimeGrid,
    pub x0: X0Policy,
    pub observation: ObservationOp,
    pub target_rule: TargetRule,
    pub batch_size: usize,
    pub n_batches: usize,
    pub lr: f64,
    pub seed: u64,
    /// Optional cap on target vector norms.
    pub clip: Option<f64>,
    /// When set, each path contributes this many uniformly drawn time
    /// indices per batch instead of all M, an unbiased subsample of the
    /// full node sum that keeps large-grid training affordable.
    pub steps_per_batch: Option<usize>,
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Invalid("batch_size = 0".into()));
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(Error::Invalid(format!("lr = {}", self.lr)));
        }
        if let Some(c) = self.clip {
            if !(c.is_finite() && c > 0.0) {
                return Err(Error::Invalid(format!("clip = {c}")));
            }
        }
        if let Some(k) = self.steps_per_batch {
            if k == 0 {
                return Err(Error::Invalid("steps_per_batch = 0".into()));
            }
        }
        Ok(())
    }
}

/// One simulated training batch with observations and targets.
pub struct RegressionBatch {
    pub paths: PathBatch,
    pub ys: Vec<Vec<f64>>,
    pub targets: Vec<ScoreTargetSet>,
}

/// Simulate one batch and compute its observations and targets.
pub fn assemble_regression(
    model: &dyn SdeModel,
    config: &TrainConfig,
    batch_seed: u64,
) -> Result<RegressionBatch> {
    let n = model.dim();
    let mut paths = Vec::with_capacity(config.batch_size);
    let mut ys = Vec::with_capacity(config.batch_size);
    let mut targets = Vec::with_capacity(config.batch_size);
    for k in 0..config.batch_size {
        let x0 = config.x0.draw(n, derive_seed(batch_seed, "x0", k as u64));
        let path = simulate_path(model, &config.grid, &x0, crate::sde::path_seed(batch_seed, k))
            .map_err(|e| tag_path(e, k))?;
        let y = config.observation.observe(path.terminal(), observation_seed(batch_seed, k))?;
        let mut set = config.target_rule.compute(model, &path).map_err(|e| tag_path(e, k))?;
        if let Some(c) = config.clip {
            for tj in &mut set.targets {
                let norm = tj.iter().map(|v| v * v).sum::<f64>().sqrt();
                if norm > c {
                    let scale = c / norm;
                    for v in tj.iter_mut() {
                        *v *= scale;
                    }
                }
            }
        }
        paths.push(path);
        ys.push(y);
        targets.push(set);
    }
    Ok(RegressionBatch { paths: PathBatch { paths, master_seed: batch_seed }, ys, targets })
}

fn tag_path(e: Error, k: usize) -> Error {
    match e {
        Error::NonFinite { step, .. } => Error::NonFinite { step, path: Some(k) },
        other => other,
    }
}

/// Regression rows for a batch: one row per (path, node) pair, restricted to
/// `step_subset` when given.
fn regression_matrices(
    net: &DriftNet,
    batch: &RegressionBatch,
    step_subset: Option<&[Vec<usize>]>,
) -> (Array2<f64>, Array2<f64>) {
    let grid = batch.paths.paths[0].grid;
    let n = net.state_dim();
    let rows: usize = match step_subset {
        Some(subs) => subs.iter().map(Vec::len).sum(),
        None => batch.paths.paths.len() * grid.n_steps(),
    };
    let mut input = Array2::<f64>::zeros((rows, net.input_dim()));
    let mut target = Array2::<f64>::zeros((rows, n));
    let mut r = 0;
    for (k, path) in batch.paths.paths.iter().enumerate() {
        let all: Vec<usize>;
        let steps: &[usize] = match step_subset {
            Some(subs) => &subs[k],
            None => {
                all = (0..grid.n_steps()).collect();
                &all
            }
        };
        for &j in steps {
            input[(r, 0)] = grid.node(j);
            for i in 0..n {
                input[(r, 1 + i)] = path.states[j][i];
            }
            for (i, v) in batch.ys[k].iter().enumerate() {
                input[(r, 1 + n + i)] = *v;
            }
            for i in 0..n {
                target[(r, i)] = batch.targets[k].targets[j][i];
            }
            r += 1;
        }
    }
    (input, target)
}

/// Loss and parameter gradient of the full node sum
/// sum_i sum_{j < M} ||u(t_j, x^i_j, y^i) - S^i_j||^2.
pub fn batch_loss_and_grad(net: &DriftNet, batch: &RegressionBatch) -> Result<(f64, Vec<f64>)> {
    let (input, target) = regression_matrices(net, batch, None);
    net.loss_and_grad(&input, &target)
}

/// Full training loop. Returns the trained net and the per-batch loss,
/// normalised per regression row so histories with different subsampling
/// settings are comparable.
pub fn train(config: &TrainConfig) -> Result<(DriftNet, Vec<f64>)> {
    config.validate()?;
    let model = make_model(&config.model)?;
    let n = model.dim();
    let d = config.observation.out_dim();
    if config.observation.state_dim() != n {
        return Err(Error::DimMismatch { expected: n, got: config.observation.state_dim() });
    }
    let mut net = DriftNet::new(n, d, derive_seed(config.seed, "init", 0))?;
    let mut adam = AdamState::new(net.n_params(), config.lr);
    let mut params = net.params();
    let mut history = Vec::with_capacity(config.n_batches);
    let m = config.grid.n_steps();
    for b in 0..config.n_batches {
        // Cosine decay from lr to lr/10: the late-training iterates stop
        // bouncing around the minimum, which matters because the final
        // parameters (not an average) are what gets evaluated.
        if config.n_batches > 1 {
            let phase = std::f64::consts::PI * b as f64 / (config.n_batches - 1) as f64;
            adam.lr = config.lr * (0.55 + 0.45 * phase.cos());
        }
        let batch_seed = derive_seed(config.seed, "batch", b as u64);
        let batch = assemble_regression(model.as_ref(), config, batch_seed)?;
        let subset: Option<Vec<Vec<usize>>> = config.steps_per_batch.map(|kk| {
            (0..config.batch_size)
                .map(|k| {
                    let rng = CounterRng::new(derive_seed(batch_seed, "steps", k as u64));
                    (0..kk).map(|i| (rng.u64_at(i as u64) % m as u64) as usize).collect()
                })
                .collect()
        });
        let (input, target) = regression_matrices(&net, &batch, subset.as_deref());
        let (loss, grad) = net.loss_and_grad(&input, &target)?;
        adam.step(&mut params, &grad);
        net.set_params(&params)?;
        history.push(loss / input.nrows() as f64);
    }
    Ok((net, history))
}
