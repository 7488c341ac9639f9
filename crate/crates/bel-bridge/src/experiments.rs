//! Built-in benchmark experiments: train a control, steer a held-out batch
//! to the experiment's conditioning point, and score it against oracles.

use std::path::PathBuf;
use std::time::Instant;

use crate::conditioning::{controlled_simulate, controlled_simulate_batch, ControlField, ObservationOp};
use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::metrics::{dist_metric, marginal_stats, mv_metric, shape_distance};
use crate::models::{circle_landmarks, ModelSpec};
use crate::net::DriftNet;
use crate::oracles::{double_well_committor, CommittorTable};
use crate::rng::derive_seed;
use crate::schedule::AlphaSchedule;
use crate::sde::{path_seed, paths_to_csv, PathSample};
use crate::train::{train, TargetRule, TrainConfig, X0Policy};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentId {
    Brownian1d,
    Brownian10d,
    DoubleWell1d,
    DoubleWell10d,
    ShapeCircle,
}

impl ExperimentId {
    pub fn parse(name: &str) -> Result<Self> {
        Ok(match name {
            "brownian-1d" => Self::Brownian1d,
            "brownian-10d" => Self::Brownian10d,
            "doublewell-1d" => Self::DoubleWell1d,
            "doublewell-10d" => Self::DoubleWell10d,
            "shape-circle" => Self::ShapeCircle,
            other => {
                return Err(Error::Invalid(format!(
                    "unknown experiment '{other}' (expected brownian-1d, brownian-10d, \
                     doublewell-1d, doublewell-10d, or shape-circle)"
                )))
            }
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Brownian1d => "brownian-1d",
            Self::Brownian10d => "brownian-10d",
            Self::DoubleWell1d => "doublewell-1d",
            Self::DoubleWell10d => "doublewell-10d",
            Self::ShapeCircle => "shape-circle",
        }
    }
}

/// Fixed ingredients of a built-in experiment.
pub struct ExperimentSetup {
    pub model: ModelSpec,
    pub grid: TimeGrid,
    pub x0_train: X0Policy,
    pub y_init: Vec<f64>,
    pub y_final: Vec<f64>,
    pub observation: ObservationOp,
    pub default_rule: TargetRule,
    /// Target landmark configuration for shape runs.
    pub target_shape: Option<Vec<f64>>,
}

pub const DOUBLE_WELL_BARRIER: f64 = 5.0;
pub const DOUBLE_WELL_BALL: f64 = 0.3;

pub fn experiment_setup(id: ExperimentId) -> Result<ExperimentSetup> {
    let setup = match id {
        ExperimentId::Brownian1d | ExperimentId::Brownian10d => {
            let dim = if id == ExperimentId::Brownian1d { 1 } else { 10 };
            let mut y_final = vec![1.0; dim];
            y_final[0] = -1.0;
            ExperimentSetup {
                model: ModelSpec::Brownian { dim },
                grid: TimeGrid::unit(200)?,
                // Uniform starts cover the (x, y) slab the bridge drift is
                // queried on; evaluation itself starts from y_init.
                x0_train: X0Policy::UniformBox { lo: -2.0, hi: 2.0 },
                y_init: vec![1.0; dim],
                y_final,
                observation: ObservationOp::Identity { dim },
                default_rule: TargetRule::Adjoint(AlphaSchedule::Average),
                target_shape: None,
            }
        }
        ExperimentId::DoubleWell1d | ExperimentId::DoubleWell10d => {
            let dim = if id == ExperimentId::DoubleWell1d { 1 } else { 10 };
            let grid = TimeGrid::unit(200)?;
            let mut y_final = vec![1.0; dim];
            y_final[0] = -1.0;
            ExperimentSetup {
                model: ModelSpec::DoubleWell { dim, v: DOUBLE_WELL_BARRIER },
                grid,
                // Starts spread over both wells so the amortised net sees
                // conditioning values near the rare side during training.
                x0_train: X0Policy::UniformBox { lo: -1.5, hi: 1.5 },
                y_init: vec![1.0; dim],
                y_final,
                observation: ObservationOp::Identity { dim },
                default_rule: TargetRule::Adjoint(AlphaSchedule::first(grid.dt())?),
                target_shape: None,
            }
        }
        ExperimentId::ShapeCircle => {
            let n = 50;
            let start = circle_landmarks(n, 1.0, [0.0, 0.0]);
            let target = circle_landmarks(n, 1.5, [0.0, 0.0]);
            let noise_grid = start.chunks(2).map(|c| [c[0], c[1]]).collect();
            ExperimentSetup {
                model: ModelSpec::Shape { kappa: 0.1, beta: 1.0, noise_grid },
                grid: TimeGrid::unit(100)?,
                x0_train: X0Policy::Fixed(start.clone()),
                y_init: start,
                y_final: target.clone(),
                observation: ObservationOp::Identity { dim: 2 * n },
                default_rule: TargetRule::Adjoint(AlphaSchedule::Average),
                target_shape: Some(target),
            }
        }
    };
    Ok(setup)
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub id: ExperimentId,
    /// Overrides the experiment's default target family when set.
    pub target_rule: Option<TargetRule>,
    pub batch_size: usize,
    pub n_batches: usize,
    pub lr: f64,
    pub steps_per_batch: Option<usize>,
    pub clip: Option<f64>,
    pub n_eval_paths: usize,
    pub seed: u64,
    /// Artifact directory; nothing is written when unset.
    pub out_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn new(id: ExperimentId) -> Self {
        Self {
            id,
            target_rule: None,
            batch_size: 256,
            n_batches: 3000,
            lr: 1e-3,
            steps_per_batch: Some(24),
            clip: None,
            n_eval_paths: 1000,
            seed: 0,
            out_dir: None,
        }
    }

    pub fn train_config(&self) -> Result<TrainConfig> {
        let setup = experiment_setup(self.id)?;
        Ok(TrainConfig {
            model: setup.model,
            grid: setup.grid,
            x0: setup.x0_train,
            observation: setup.observation,
            target_rule: self.target_rule.clone().unwrap_or(setup.default_rule),
            batch_size: self.batch_size,
            n_batches: self.n_batches,
            lr: self.lr,
            seed: self.seed,
            clip: self.clip,
            steps_per_batch: self.steps_per_batch,
        })
    }
}

/// Everything a run produces. The serialised report deliberately excludes
/// the wall clock so identical (config, seed) pairs give identical files.
pub struct MetricReport {
    pub experiment: String,
    pub schedule: String,
    pub dist: f64,
    pub mv: Option<f64>,
    pub shape_dist: Option<f64>,
    pub nodes: Vec<f64>,
    pub marginal_mean: Vec<Vec<f64>>,
    pub marginal_std: Vec<Vec<f64>>,
    pub n_eval_paths: usize,
    pub batch_size: usize,
    pub n_batches: usize,
    pub seed: u64,
    pub wall_clock_s: f64,
}

fn json_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn json_table(rows: &[Vec<f64>]) -> String {
    let body: Vec<String> = rows
        .iter()
        .map(|r| {
            let cells: Vec<String> = r.iter().map(|&v| json_f64(v)).collect();
            format!("[{}]", cells.join(", "))
        })
        .collect();
    format!("[{}]", body.join(", "))
}

impl MetricReport {
    /// Flat JSON object, one key per line, fixed key order.
    pub fn to_text(&self) -> String {
        let mut s = String::from("{\n");
        let mut push = |key: &str, value: String| {
            s.push_str(&format!("  \"{key}\": {value},\n"));
        };
        push("experiment", format!("\"{}\"", self.experiment));
        push("schedule", format!("\"{}\"", self.schedule));
        push("dist", json_f64(self.dist));
        push("mv", self.mv.map_or("null".into(), json_f64));
        push("shape_dist", self.shape_dist.map_or("null".into(), json_f64));
        push("n_eval_paths", self.n_eval_paths.to_string());
        push("batch_size", self.batch_size.to_string());
        push("n_batches", self.n_batches.to_string());
        push("seed", self.seed.to_string());
        push(
            "nodes",
            format!("[{}]", self.nodes.iter().map(|&v| json_f64(v)).collect::<Vec<_>>().join(", ")),
        );
        push("marginal_mean", json_table(&self.marginal_mean));
        s.push_str(&format!("  \"marginal_std\": {}\n}}\n", json_table(&self.marginal_std)));
        s
    }
}

/// Per-coordinate double-well bridge drift from a committor table solved for
/// the ball around -1; targets at +1 use the table reflected in x. Queries
/// are clamped to the table's domain.
pub fn committor_control<'a>(
    table: &'a CommittorTable,
    y_final: &'a [f64],
) -> impl Fn(f64, &[f64], &[f64]) -> Vec<f64> + 'a {
    let (x_min, x_max) = (table.x_min, table.x_max);
    let margin = 1e-9 * (x_max - x_min);
    move |t: f64, x: &[f64], _y: &[f64]| {
        let t = t.min(1.0 - 1e-9).max(0.0);
        x.iter()
            .zip(y_final)
            .map(|(&xi, &ci)| {
                // ci is -1 or +1; the table targets -1, and the even potential
                // gives f_{+1}(t, x) = f_{-1}(t, -x).
                let flip = if ci > 0.0 { -1.0 } else { 1.0 };
                let q = (flip * xi).clamp(x_min + margin, x_max - margin);
                flip * table.log_gradient(t, q).unwrap_or(0.0)
            })
            .collect()
    }
}

/// Committor table backing the double-well oracle drift.
pub fn double_well_oracle_table() -> Result<CommittorTable> {
    double_well_committor(DOUBLE_WELL_BARRIER, -3.0, 3.0, 401, 1000, DOUBLE_WELL_BALL, -1.0)
}

/// Oracle-driven comparison ensemble for the experiment's conditioning, or
/// None when no closed-form/PDE oracle exists (shape runs).
pub fn oracle_paths(
    id: ExperimentId,
    setup: &ExperimentSetup,
    n_paths: usize,
    master_seed: u64,
) -> Result<Option<Vec<PathSample>>> {
    let model = crate::models::make_model(&setup.model)?;
    let control: ControlField = match id {
        ExperimentId::Brownian1d | ExperimentId::Brownian10d => {
            let t_end = setup.grid.t_end();
            ControlField::Oracle(Box::new(move |t: f64, x: &[f64], y: &[f64]| {
                x.iter().zip(y).map(|(&xi, &yi)| (yi - xi) / (t_end - t)).collect()
            }))
        }
        ExperimentId::DoubleWell1d | ExperimentId::DoubleWell10d => {
            let table = double_well_oracle_table()?;
            let y_final = setup.y_final.clone();
            ControlField::Oracle(Box::new(move |t: f64, x: &[f64], _y: &[f64]| {
                committor_control(&table, &y_final)(t, x, &[])
            }))
        }
        ExperimentId::ShapeCircle => return Ok(None),
    };
    let mut out = Vec::with_capacity(n_paths);
    for k in 0..n_paths {
        out.push(controlled_simulate(
            model.as_ref(),
            &control,
            &setup.y_final,
            &setup.grid,
            &setup.y_init,
            path_seed(master_seed, k),
        )?);
    }
    Ok(Some(out))
}

/// Evaluation half of a run: steer `n_eval_paths` with the given net from
/// y_init toward y_final and score them. Reused by the CLI on a loaded
/// checkpoint.
pub fn evaluate_experiment(config: &ExperimentConfig, net: &DriftNet) -> Result<MetricReport> {
    let start = Instant::now();
    let setup = experiment_setup(config.id)?;
    let model = crate::models::make_model(&setup.model)?;
    let ys = vec![setup.y_final.clone(); config.n_eval_paths];
    let eval_seed = derive_seed(config.seed, "eval", 0);
    let generated =
        controlled_simulate_batch(model.as_ref(), net, &ys, &setup.grid, &setup.y_init, eval_seed)?;
    let oracle = oracle_paths(config.id, &setup, config.n_eval_paths, derive_seed(config.seed, "oracle", 0))?;

    let dist = dist_metric(&generated, &setup.y_final)?;
    let mv = oracle.as_ref().map(|o| mv_metric(&generated, o)).transpose()?;
    let shape_dist =
        setup.target_shape.as_ref().map(|t| shape_distance(&generated, t)).transpose()?;
    let (marginal_mean, marginal_std) = marginal_stats(&generated)?;
    let rule = config.target_rule.clone().unwrap_or(setup.default_rule);

    let report = MetricReport {
        experiment: config.id.name().into(),
        schedule: rule.descriptor(),
        dist,
        mv,
        shape_dist,
        nodes: setup.grid.nodes().collect(),
        marginal_mean,
        marginal_std,
        n_eval_paths: config.n_eval_paths,
        batch_size: config.batch_size,
        n_batches: config.n_batches,
        seed: config.seed,
        wall_clock_s: start.elapsed().as_secs_f64(),
    };

    if let Some(dir) = &config.out_dir {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("report.txt"), report.to_text())?;
        std::fs::write(dir.join("paths.csv"), paths_to_csv(&generated, Some(&ys)))?;
        if let Some(o) = &oracle {
            std::fs::write(dir.join("oracle_paths.csv"), paths_to_csv(o, None))?;
        }
    }
    Ok(report)
}

/// Full run: train per the config, then evaluate and (optionally) write
/// artifacts. Returns the report, trained net, and loss history.
pub fn run_experiment(config: &ExperimentConfig) -> Result<(MetricReport, DriftNet, Vec<f64>)> {
    let start = Instant::now();
    let (net, history) = train(&config.train_config()?)?;
    let mut report = evaluate_experiment(config, &net)?;
    report.wall_clock_s = start.elapsed().as_secs_f64();
    Ok((report, net, history))
}

/// Fraction of paths whose first coordinate ends inside the ball around -1.
pub fn crossing_fraction(paths: &[PathSample]) -> f64 {
    let hits = paths
        .iter()
        .filter(|p| (p.terminal()[0] + 1.0).abs() <= DOUBLE_WELL_BALL)
        .count();
    hits as f64 / paths.len().max(1) as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sde::simulate_path;

    #[test]
    fn parses_all_ids_and_rejects_unknown() {
        for name in
            ["brownian-1d", "brownian-10d", "doublewell-1d", "doublewell-10d", "shape-circle"]
        {
            assert_eq!(ExperimentId::parse(name).unwrap().name(), name);
        }
        assert!(ExperimentId::parse("brownian-2d").is_err());
    }

    #[test]
    fn brownian_oracle_paths_pin_the_endpoint() {
        let setup = experiment_setup(ExperimentId::Brownian1d).unwrap();
        let paths = oracle_paths(ExperimentId::Brownian1d, &setup, 200, 11).unwrap().unwrap();
        let dist = dist_metric(&paths, &setup.y_final).unwrap();
        assert!(dist < 0.08, "dist {dist}");
    }

    #[test]
    fn unconditioned_double_well_rarely_crosses() {
        let setup = experiment_setup(ExperimentId::DoubleWell1d).unwrap();
        let model = crate::models::make_model(&setup.model).unwrap();
        let paths: Vec<PathSample> = (0..2000)
            .map(|k| {
                simulate_path(model.as_ref(), &setup.grid, &setup.y_init, path_seed(21, k)).unwrap()
            })
            .collect();
        let frac = crossing_fraction(&paths);
        assert!(frac < 0.01, "crossing fraction {frac}");
    }

    #[test]
    fn committor_steered_double_well_crosses() {
        let setup = experiment_setup(ExperimentId::DoubleWell1d).unwrap();
        let paths = oracle_paths(ExperimentId::DoubleWell1d, &setup, 300, 31).unwrap().unwrap();
        let frac = crossing_fraction(&paths);
        assert!(frac > 0.9, "crossing fraction {frac}");
    }

    #[test]
    fn untrained_shape_distance_has_untrained_magnitude() {
        let config = ExperimentConfig {
            n_batches: 0,
            n_eval_paths: 20,
            ..ExperimentConfig::new(ExperimentId::ShapeCircle)
        };
        let (report, _, _) = run_experiment(&config).unwrap();
        let sd = report.shape_dist.unwrap();
        assert!(report.mv.is_none());
        assert!(sd > 0.1 && sd < 5.0, "shape distance {sd}");
    }

    #[test]
    fn report_text_is_deterministic_and_flat() {
        let config = ExperimentConfig {
            n_batches: 0,
            n_eval_paths: 10,
            ..ExperimentConfig::new(ExperimentId::Brownian1d)
        };
        let (a, _, _) = run_experiment(&config).unwrap();
        let (b, _, _) = run_experiment(&config).unwrap();
        assert_eq!(a.to_text(), b.to_text());
        assert!(a.to_text().starts_with("{\n  \"experiment\": \"brownian-1d\""));
    }
}
