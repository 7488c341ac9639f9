//! Observation operators and simulation of the steered process.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::net::DriftNet;
use crate::rng::{derive_seed, CounterRng};
use crate::sde::{draw_noise, PathSample, SdeModel};

/// The map G producing the conditioning value y = G(x_T).
#[derive(Debug, Clone)]
pub enum ObservationOp {
    Identity { dim: usize },
    CoordProject { dim: usize, indices: Vec<usize> },
    AdditiveNoise { dim: usize, sigma_obs: f64 },
}

impl ObservationOp {
    pub fn coord_project(dim: usize, indices: Vec<usize>) -> Result<Self> {
        let mut seen = vec![false; dim];
        for &i in &indices {
            if i >= dim {
                return Err(Error::Invalid(format!("projection index {i} >= dim {dim}")));
            }
            if seen[i] {
                return Err(Error::Invalid(format!("duplicate projection index {i}")));
            }
            seen[i] = true;
        }
        if indices.is_empty() {
            return Err(Error::Invalid("empty projection index set".into()));
        }
        Ok(Self::CoordProject { dim, indices })
    }

    pub fn additive_noise(dim: usize, sigma_obs: f64) -> Result<Self> {
        if !(sigma_obs.is_finite() && sigma_obs > 0.0) {
            return Err(Error::Invalid(format!("sigma_obs = {sigma_obs}")));
        }
        Ok(Self::AdditiveNoise { dim, sigma_obs })
    }

    pub fn state_dim(&self) -> usize {
        match self {
            Self::Identity { dim }
            | Self::CoordProject { dim, .. }
            | Self::AdditiveNoise { dim, .. } => *dim,
        }
    }

    pub fn out_dim(&self) -> usize {
        match self {
            Self::Identity { dim } | Self::AdditiveNoise { dim, .. } => *dim,
            Self::CoordProject { indices, .. } => indices.len(),
        }
    }

    /// Apply G to a terminal state. `obs_seed` feeds the noise draw for the
    /// stochastic variant and is ignored otherwise.
    pub fn observe(&self, x_t: &[f64], obs_seed: u64) -> Result<Vec<f64>> {
        if x_t.len() != self.state_dim() {
            return Err(Error::DimMismatch { expected: self.state_dim(), got: x_t.len() });
        }
        Ok(match self {
            Self::Identity { .. } => x_t.to_vec(),
            Self::CoordProject { indices, .. } => indices.iter().map(|&i| x_t[i]).collect(),
            Self::AdditiveNoise { sigma_obs, .. } => {
                let rng = CounterRng::new(obs_seed);
                x_t.iter()
                    .enumerate()
                    .map(|(i, &v)| v + sigma_obs * rng.normal_at(i as u64))
                    .collect()
            }
        })
    }
}

/// Observation seed for path `k` of a batch.
pub fn observation_seed(master_seed: u64, k: usize) -> u64 {
    derive_seed(master_seed, "obs", k as u64)
}

/// A control u(t, x, y): a trained network or a closed-form oracle.
pub enum ControlField<'a> {
    Net(&'a DriftNet),
    Oracle(Box<dyn Fn(f64, &[f64], &[f64]) -> Vec<f64> + 'a>),
}

impl ControlField<'_> {
    pub fn eval(&self, t: f64, x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
        match self {
            Self::Net(net) => net.forward(t, x, y),
            Self::Oracle(f) => Ok(f(t, x, y)),
        }
    }
}

/// Euler-Maruyama on the steered process
/// dX = b dt + sigma sigma^T u(t, X, y) dt + sigma dB.
/// The control is evaluated at grid nodes only; the last step uses t_{M-1}.
pub fn controlled_simulate(
    model: &dyn SdeModel,
    control: &ControlField,
    y: &[f64],
    grid: &TimeGrid,
    x0: &[f64],
    seed: u64,
) -> Result<PathSample> {
    let n = model.dim();
    if x0.len() != n {
        return Err(Error::DimMismatch { expected: n, got: x0.len() });
    }
    let noise = draw_noise(grid, n, seed);
    let dt = grid.dt();
    let mut states = Vec::with_capacity(grid.n_steps() + 1);
    states.push(x0.to_vec());
    for j in 0..grid.n_steps() {
        let t = grid.node(j);
        let x = &states[j];
        let b = model.drift(t, x);
        let u = control.eval(t, x, y)?;
        let su = model.sigma_transpose_apply(t, x, &u);
        let ssu = model.sigma_apply(t, x, &su);
        let s_db = model.sigma_apply(t, x, &noise[j]);
        let next: Vec<f64> = (0..n).map(|i| x[i] + dt * (b[i] + ssu[i]) + s_db[i]).collect();
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { step: j + 1, path: None });
        }
        states.push(next);
    }
    Ok(PathSample { grid: *grid, states, noise, seed })
}

/// Steered batch with a network control, advancing all paths in lockstep so
/// each time step is one batched network evaluation.
pub fn controlled_simulate_batch(
    model: &dyn SdeModel,
    net: &DriftNet,
    ys: &[Vec<f64>],
    grid: &TimeGrid,
    x0: &[f64],
    master_seed: u64,
) -> Result<Vec<PathSample>> {
    let n = model.dim();
    let n_paths = ys.len();
    let in_dim = net.input_dim();
    if x0.len() != n {
        return Err(Error::DimMismatch { expected: n, got: x0.len() });
    }
    let noise: Vec<Vec<Vec<f64>>> = (0..n_paths)
        .map(|k| draw_noise(grid, n, crate::sde::path_seed(master_seed, k)))
        .collect();
    let dt = grid.dt();
    let mut states: Vec<Vec<Vec<f64>>> =
        (0..n_paths).map(|_| vec![x0.to_vec()]).collect();
    let mut input = Array2::<f64>::zeros((n_paths, in_dim));
    for j in 0..grid.n_steps() {
        let t = grid.node(j);
        for k in 0..n_paths {
            let x = &states[k][j];
            input[(k, 0)] = t;
            for i in 0..n {
                input[(k, 1 + i)] = x[i];
            }
            for (i, v) in ys[k].iter().enumerate() {
                input[(k, 1 + n + i)] = *v;
            }
        }
        let out = net.forward_cached(&input)?.output;
        for k in 0..n_paths {
            let x = &states[k][j];
            let b = model.drift(t, x);
            let u: Vec<f64> = out.row(k).to_vec();
            let su = model.sigma_transpose_apply(t, x, &u);
            let ssu = model.sigma_apply(t, x, &su);
            let s_db = model.sigma_apply(t, x, &noise[k][j]);
            let next: Vec<f64> =
                (0..n).map(|i| x[i] + dt * (b[i] + ssu[i]) + s_db[i]).collect();
            if next.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite { step: j + 1, path: Some(k) });
            }
            states[k].push(next);
        }
    }
    Ok(states
        .into_iter()
        .zip(noise)
        .enumerate()
        .map(|(k, (st, nz))| PathSample {
            grid: *grid,
            states: st,
            noise: nz,
            seed: crate::sde::path_seed(master_seed, k),
        })
        .collect())
}
