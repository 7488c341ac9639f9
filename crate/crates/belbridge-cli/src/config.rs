//! Flat `key = value` run configuration with `#` comments and dotted keys.
//!
//! A config either names a built-in experiment (plus training overrides) or
//! spells out model/grid/x0/observation/target directly. Unknown keys are
//! rejected with their line number; serialisation emits set keys in a fixed
//! order so parse -> serialise -> parse is the identity.

use std::collections::BTreeMap;

use bel_bridge::conditioning::ObservationOp;
use bel_bridge::experiments::{ExperimentConfig, ExperimentId};
use bel_bridge::schedule::AlphaSchedule;
use bel_bridge::train::{TargetRule, TrainConfig, X0Policy};
use bel_bridge::{Error, Result, TimeGrid};
use bel_bridge::models::ModelSpec;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunConfig {
    pub experiment: Option<String>,
    pub seed: Option<u64>,
    pub out: Option<String>,
    pub model_kind: Option<String>,
    pub model_dim: Option<usize>,
    pub model_rate: Option<f64>,
    pub model_v: Option<f64>,
    pub grid_steps: Option<usize>,
    pub x0_kind: Option<String>,
    pub x0_value: Option<Vec<f64>>,
    pub x0_lo: Option<f64>,
    pub x0_hi: Option<f64>,
    pub obs_kind: Option<String>,
    pub obs_indices: Option<Vec<usize>>,
    pub obs_sigma: Option<f64>,
    pub target_kind: Option<String>,
    pub target_width: Option<f64>,
    pub batch_size: Option<usize>,
    pub n_batches: Option<usize>,
    pub lr: Option<f64>,
    pub clip: Option<f64>,
    pub steps_per_batch: Option<usize>,
    pub eval_n_paths: Option<usize>,
}

fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::ConfigParse { line, msg: msg.into() }
}

fn num<T: std::str::FromStr>(line: usize, key: &str, raw: &str) -> Result<T> {
    raw.parse::<T>().map_err(|_| parse_err(line, format!("invalid value '{raw}' for {key}")))
}

fn num_list<T: std::str::FromStr>(line: usize, key: &str, raw: &str) -> Result<Vec<T>> {
    raw.split(',').map(|p| num(line, key, p.trim())).collect()
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut seen: BTreeMap<String, usize> = BTreeMap::new();
        let mut cfg = Self::default();
        for (idx, raw_line) in text.lines().enumerate() {
            let line = idx + 1;
            let stripped = match raw_line.find('#') {
                Some(p) => &raw_line[..p],
                None => raw_line,
            };
            if stripped.trim().is_empty() {
                continue;
            }
            let (key, value) = stripped
                .split_once('=')
                .ok_or_else(|| parse_err(line, format!("expected 'key = value', got '{}'", stripped.trim())))?;
            let key = key.trim();
            let value = value.trim();
            if value.is_empty() {
                return Err(parse_err(line, format!("empty value for key '{key}'")));
            }
            if let Some(first) = seen.insert(key.to_string(), line) {
                return Err(parse_err(line, format!("duplicate key '{key}' (first set on line {first})")));
            }
            match key {
                "experiment" => cfg.experiment = Some(value.into()),
                "seed" => cfg.seed = Some(num(line, key, value)?),
                "out" => cfg.out = Some(value.into()),
                "model.kind" => cfg.model_kind = Some(value.into()),
                "model.dim" => cfg.model_dim = Some(num(line, key, value)?),
                "model.rate" => cfg.model_rate = Some(num(line, key, value)?),
                "model.v" => cfg.model_v = Some(num(line, key, value)?),
                "grid.steps" => cfg.grid_steps = Some(num(line, key, value)?),
                "x0.kind" => cfg.x0_kind = Some(value.into()),
                "x0.value" => cfg.x0_value = Some(num_list(line, key, value)?),
                "x0.lo" => cfg.x0_lo = Some(num(line, key, value)?),
                "x0.hi" => cfg.x0_hi = Some(num(line, key, value)?),
                "observation.kind" => cfg.obs_kind = Some(value.into()),
                "observation.indices" => cfg.obs_indices = Some(num_list(line, key, value)?),
                "observation.sigma" => cfg.obs_sigma = Some(num(line, key, value)?),
                "target.kind" => cfg.target_kind = Some(value.into()),
                "target.width" => cfg.target_width = Some(num(line, key, value)?),
                "train.batch_size" => cfg.batch_size = Some(num(line, key, value)?),
                "train.n_batches" => cfg.n_batches = Some(num(line, key, value)?),
                "train.lr" => cfg.lr = Some(num(line, key, value)?),
                "train.clip" => cfg.clip = Some(num(line, key, value)?),
                "train.steps_per_batch" => cfg.steps_per_batch = Some(num(line, key, value)?),
                "eval.n_paths" => cfg.eval_n_paths = Some(num(line, key, value)?),
                other => return Err(parse_err(line, format!("unknown key '{other}'"))),
            }
        }
        Ok(cfg)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut kv = |key: &str, value: Option<String>| {
            if let Some(v) = value {
                s.push_str(&format!("{key} = {v}\n"));
            }
        };
        let floats = |xs: &[f64]| xs.iter().map(|v| format!("{v}")).collect::<Vec<_>>().join(",");
        kv("experiment", self.experiment.clone());
        kv("seed", self.seed.map(|v| v.to_string()));
        kv("out", self.out.clone());
        kv("model.kind", self.model_kind.clone());
        kv("model.dim", self.model_dim.map(|v| v.to_string()));
        kv("model.rate", self.model_rate.map(|v| v.to_string()));
        kv("model.v", self.model_v.map(|v| v.to_string()));
        kv("grid.steps", self.grid_steps.map(|v| v.to_string()));
        kv("x0.kind", self.x0_kind.clone());
        kv("x0.value", self.x0_value.as_deref().map(floats));
        kv("x0.lo", self.x0_lo.map(|v| v.to_string()));
        kv("x0.hi", self.x0_hi.map(|v| v.to_string()));
        kv("observation.kind", self.obs_kind.clone());
        kv(
            "observation.indices",
            self.obs_indices
                .as_ref()
                .map(|xs| xs.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")),
        );
        kv("observation.sigma", self.obs_sigma.map(|v| v.to_string()));
        kv("target.kind", self.target_kind.clone());
        kv("target.width", self.target_width.map(|v| v.to_string()));
        kv("train.batch_size", self.batch_size.map(|v| v.to_string()));
        kv("train.n_batches", self.n_batches.map(|v| v.to_string()));
        kv("train.lr", self.lr.map(|v| v.to_string()));
        kv("train.clip", self.clip.map(|v| v.to_string()));
        kv("train.steps_per_batch", self.steps_per_batch.map(|v| v.to_string()));
        kv("eval.n_paths", self.eval_n_paths.map(|v| v.to_string()));
        s
    }

    fn target_rule(&self) -> Result<Option<TargetRule>> {
        let Some(kind) = &self.target_kind else { return Ok(None) };
        let width = || {
            self.target_width
                .ok_or_else(|| Error::Invalid(format!("target.kind = {kind} needs target.width")))
        };
        Ok(Some(match kind.as_str() {
            "average" => TargetRule::Adjoint(AlphaSchedule::Average),
            "first" => TargetRule::Adjoint(AlphaSchedule::first(width()?)?),
            "last" => TargetRule::Adjoint(AlphaSchedule::last(width()?)?),
            "optimal-bm" => TargetRule::Adjoint(AlphaSchedule::OptimalBm),
            "reparam" => TargetRule::Reparam,
            "gaussian-step" => TargetRule::GaussianStep,
            other => return Err(Error::Invalid(format!("unknown target.kind '{other}'"))),
        }))
    }

    /// Experiment-backed runs: built-in setup plus the config's training
    /// overrides.
    pub fn experiment_config(&self) -> Result<Option<ExperimentConfig>> {
        let Some(name) = &self.experiment else { return Ok(None) };
        for (set, key) in [
            (self.model_kind.is_some(), "model.*"),
            (self.grid_steps.is_some(), "grid.steps"),
            (self.x0_kind.is_some(), "x0.*"),
            (self.obs_kind.is_some(), "observation.*"),
        ] {
            if set {
                return Err(Error::Invalid(format!(
                    "'{key}' keys conflict with 'experiment = {name}'"
                )));
            }
        }
        let mut ec = ExperimentConfig::new(ExperimentId::parse(name)?);
        ec.target_rule = self.target_rule()?;
        if let Some(v) = self.batch_size {
            ec.batch_size = v;
        }
        if let Some(v) = self.n_batches {
            ec.n_batches = v;
        }
        if let Some(v) = self.lr {
            ec.lr = v;
        }
        ec.clip = self.clip;
        if self.steps_per_batch.is_some() {
            ec.steps_per_batch = self.steps_per_batch;
        }
        if let Some(v) = self.eval_n_paths {
            ec.n_eval_paths = v;
        }
        ec.seed = self.seed.unwrap_or(0);
        Ok(Some(ec))
    }

    /// Resolve to the training configuration this run describes.
    pub fn train_config(&self) -> Result<TrainConfig> {
        if let Some(ec) = self.experiment_config()? {
            return ec.train_config();
        }
        let need = |opt: bool, key: &str| {
            if opt {
                Ok(())
            } else {
                Err(Error::Invalid(format!("missing required key '{key}'")))
            }
        };
        need(self.model_kind.is_some(), "model.kind")?;
        need(self.grid_steps.is_some(), "grid.steps")?;
        need(self.x0_kind.is_some(), "x0.kind")?;
        let dim = self.model_dim.ok_or_else(|| Error::Invalid("missing required key 'model.dim'".into()))?;
        let model = match self.model_kind.as_deref().unwrap() {
            "brownian" => ModelSpec::Brownian { dim },
            "ou" => ModelSpec::Ou {
                dim,
                rate: self.model_rate.ok_or_else(|| Error::Invalid("ou model needs model.rate".into()))?,
            },
            "double-well" => ModelSpec::DoubleWell {
                dim,
                v: self.model_v.ok_or_else(|| Error::Invalid("double-well model needs model.v".into()))?,
            },
            other => {
                return Err(Error::Invalid(format!(
                    "unknown model.kind '{other}' (shape runs go through 'experiment = shape-circle')"
                )))
            }
        };
        let x0 = match self.x0_kind.as_deref().unwrap() {
            "fixed" => {
                let value = self
                    .x0_value
                    .clone()
                    .ok_or_else(|| Error::Invalid("x0.kind = fixed needs x0.value".into()))?;
                if value.len() != dim {
                    return Err(Error::DimMismatch { expected: dim, got: value.len() });
                }
                X0Policy::Fixed(value)
            }
            "uniform" => X0Policy::UniformBox {
                lo: self.x0_lo.ok_or_else(|| Error::Invalid("x0.kind = uniform needs x0.lo".into()))?,
                hi: self.x0_hi.ok_or_else(|| Error::Invalid("x0.kind = uniform needs x0.hi".into()))?,
            },
            other => return Err(Error::Invalid(format!("unknown x0.kind '{other}'"))),
        };
        let observation = match self.obs_kind.as_deref().unwrap_or("identity") {
            "identity" => ObservationOp::Identity { dim },
            "project" => ObservationOp::coord_project(
                dim,
                self.obs_indices
                    .clone()
                    .ok_or_else(|| Error::Invalid("observation.kind = project needs observation.indices".into()))?,
            )?,
            "noisy" => ObservationOp::additive_noise(
                dim,
                self.obs_sigma
                    .ok_or_else(|| Error::Invalid("observation.kind = noisy needs observation.sigma".into()))?,
            )?,
            other => return Err(Error::Invalid(format!("unknown observation.kind '{other}'"))),
        };
        let target_rule = self
            .target_rule()?
            .ok_or_else(|| Error::Invalid("missing required key 'target.kind'".into()))?;
        Ok(TrainConfig {
            model,
            grid: TimeGrid::unit(self.grid_steps.unwrap())?,
            x0,
            observation,
            target_rule,
            batch_size: self.batch_size.unwrap_or(128),
            n_batches: self.n_batches.unwrap_or(500),
            lr: self.lr.unwrap_or(1e-3),
            seed: self.seed.unwrap_or(0),
            clip: self.clip,
            steps_per_batch: self.steps_per_batch,
        })
    }

    /// Starting point for `sample`: the experiment's entry state or the
    /// config's fixed x0.
    pub fn sample_x0(&self) -> Result<Vec<f64>> {
        if let Some(name) = &self.experiment {
            let setup = bel_bridge::experiments::experiment_setup(ExperimentId::parse(name)?)?;
            return Ok(setup.y_init);
        }
        match (self.x0_kind.as_deref(), &self.x0_value) {
            (Some("fixed"), Some(v)) => Ok(v.clone()),
            _ => Err(Error::Invalid("sampling needs an experiment or x0.kind = fixed".into())),
        }
    }

    pub fn model_spec(&self) -> Result<ModelSpec> {
        if let Some(ec) = self.experiment_config()? {
            return Ok(bel_bridge::experiments::experiment_setup(ec.id)?.model);
        }
        Ok(self.train_config()?.model)
    }

    pub fn grid(&self) -> Result<TimeGrid> {
        if let Some(ec) = self.experiment_config()? {
            return Ok(bel_bridge::experiments::experiment_setup(ec.id)?.grid);
        }
        self.train_config().map(|tc| tc.grid)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const FULL: &str = "\
# training run
seed = 7
model.kind = ou
model.dim = 2
model.rate = 1.5
grid.steps = 50
x0.kind = fixed
x0.value = 0.5, -0.5
observation.kind = project
observation.indices = 0
target.kind = first
target.width = 0.02
train.batch_size = 16
train.n_batches = 10
train.lr = 0.001
train.steps_per_batch = 5
eval.n_paths = 100
";

    #[test]
    fn round_trips() {
        let a = RunConfig::parse(FULL).unwrap();
        let b = RunConfig::parse(&a.to_text()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.to_text(), b.to_text());
    }

    #[test]
    fn unknown_key_names_line() {
        let err = RunConfig::parse("seed = 1\nalpha_knd = 3\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("alpha_knd") && msg.contains('2'), "{msg}");
    }

    #[test]
    fn duplicate_and_malformed_lines_rejected() {
        assert!(RunConfig::parse("seed = 1\nseed = 2\n").is_err());
        assert!(RunConfig::parse("seed\n").is_err());
        assert!(RunConfig::parse("seed =\n").is_err());
    }

    #[test]
    fn comments_and_blanks_ignored() {
        let cfg = RunConfig::parse("\n# note\nseed = 3 # trailing\n").unwrap();
        assert_eq!(cfg.seed, Some(3));
    }

    #[test]
    fn builds_train_config() {
        let tc = RunConfig::parse(FULL).unwrap().train_config().unwrap();
        assert_eq!(tc.batch_size, 16);
        assert_eq!(tc.seed, 7);
        assert!(matches!(tc.model, ModelSpec::Ou { dim: 2, .. }));
    }

    #[test]
    fn experiment_conflicts_with_model_keys() {
        let cfg = RunConfig::parse("experiment = brownian-1d\nmodel.kind = ou\nmodel.dim = 1\n").unwrap();
        assert!(cfg.train_config().is_err());
    }

    #[test]
    fn experiment_overrides_apply() {
        let cfg = RunConfig::parse(
            "experiment = doublewell-1d\nseed = 9\ntrain.n_batches = 3\neval.n_paths = 25\n",
        )
        .unwrap();
        let ec = cfg.experiment_config().unwrap().unwrap();
        assert_eq!(ec.n_batches, 3);
        assert_eq!(ec.n_eval_paths, 25);
        assert_eq!(ec.seed, 9);
    }
}
