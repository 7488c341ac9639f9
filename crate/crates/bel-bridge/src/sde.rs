//! Diffusion model interface and Euler-Maruyama simulation.
//!
//! A model exposes its drift and volatility only through the directional
//! products the backward target recursion needs; dense Jacobians are never
//! formed outside the test oracle [`jacobian_full`].

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::rng::{derive_seed, CounterRng};

/// A diffusion dX = b_t(X) dt + sigma_t(X) dB, evaluated pointwise in (t, x).
///
/// All methods are pure; outputs always have length `dim()`.
pub trait SdeModel: Send + Sync {
    fn dim(&self) -> usize;

    /// Drift b_t(x).
    fn drift(&self, t: f64, x: &[f64]) -> Vec<f64>;

    /// sigma_t(x) v.
    fn sigma_apply(&self, t: f64, x: &[f64], v: &[f64]) -> Vec<f64>;

    /// sigma_t(x)^T v. Defaults to `sigma_apply` (symmetric volatility).
    fn sigma_transpose_apply(&self, t: f64, x: &[f64], v: &[f64]) -> Vec<f64> {
        self.sigma_apply(t, x, v)
    }

    /// sigma_t(x)^{-1} v.
    fn sigma_inv_apply(&self, t: f64, x: &[f64], v: &[f64]) -> Vec<f64>;

    /// (sigma_t(x)^T)^{-1} v. Defaults to `sigma_inv_apply` (symmetric volatility).
    fn sigma_inv_transpose_apply(&self, t: f64, x: &[f64], v: &[f64]) -> Vec<f64> {
        self.sigma_inv_apply(t, x, v)
    }

    /// grad b_t(x)^T v.
    fn drift_grad_transpose_apply(&self, t: f64, x: &[f64], v: &[f64]) -> Vec<f64>;

    /// Transposed derivative in x of the map x -> sigma_t(x) db, applied to v.
    /// Must return the zero vector whenever `sigma_constant()` is true.
    fn sigma_grad_transpose_apply(&self, t: f64, x: &[f64], v: &[f64], db: &[f64]) -> Vec<f64>;

    fn sigma_constant(&self) -> bool;
}

/// One discretised trajectory together with the Brownian increments that
/// produced it.
#[derive(Debug, Clone)]
pub struct PathSample {
    pub grid: TimeGrid,
    /// M + 1 states of length n.
    pub states: Vec<Vec<f64>>,
    /// M increments of length n.
    pub noise: Vec<Vec<f64>>,
    pub seed: u64,
}

impl PathSample {
    pub fn dim(&self) -> usize {
        self.states[0].len()
    }

    pub fn terminal(&self) -> &[f64] {
        self.states.last().expect("states nonempty")
    }
}

/// A set of paths sharing one grid and model, with per-path derived seeds.
#[derive(Debug, Clone)]
pub struct PathBatch {
    pub paths: Vec<PathSample>,
    pub master_seed: u64,
}

/// Seed of path `k` in a batch with the given master seed.
pub fn path_seed(master_seed: u64, k: usize) -> u64 {
    derive_seed(master_seed, "path", k as u64)
}

/// Draw the Brownian increments for one path: i.i.d. N(0, dt * Id).
pub fn draw_noise(grid: &TimeGrid, dim: usize, seed: u64) -> Vec<Vec<f64>> {
    let rng = CounterRng::new(seed);
    let sd = grid.dt().sqrt();
    (0..grid.n_steps())
        .map(|j| {
            (0..dim)
                .map(|i| sd * rng.normal_at((j * dim + i) as u64))
                .collect()
        })
        .collect()
}

/// Euler-Maruyama with externally supplied increments. This is both the
/// replay check and the zero-noise test hook.
pub fn simulate_path_with_noise(
    model: &dyn SdeModel,
    grid: &TimeGrid,
    x0: &[f64],
    noise: Vec<Vec<f64>>,
    seed: u64,
) -> Result<PathSample> {
    let n = model.dim();
    if x0.len() != n {
        return Err(Error::DimMismatch { expected: n, got: x0.len() });
    }
    let dt = grid.dt();
    let mut states = Vec::with_capacity(grid.n_steps() + 1);
    states.push(x0.to_vec());
    for j in 0..grid.n_steps() {
        let t = grid.node(j);
        let x = &states[j];
        let b = model.drift(t, x);
        let s_db = model.sigma_apply(t, x, &noise[j]);
        let next: Vec<f64> = (0..n).map(|i| x[i] + dt * b[i] + s_db[i]).collect();
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { step: j + 1, path: None });
        }
        states.push(next);
    }
    Ok(PathSample { grid: *grid, states, noise, seed })
}

/// Simulate one path, drawing increments from the counter-based generator.
pub fn simulate_path(
    model: &dyn SdeModel,
    grid: &TimeGrid,
    x0: &[f64],
    seed: u64,
) -> Result<PathSample> {
    let noise = draw_noise(grid, model.dim(), seed);
    simulate_path_with_noise(model, grid, x0, noise, seed)
}

/// Simulate `n_paths` independent paths with seeds derived from `master_seed`.
pub fn simulate_batch(
    model: &dyn SdeModel,
    grid: &TimeGrid,
    x0: &[f64],
    n_paths: usize,
    master_seed: u64,
) -> Result<PathBatch> {
    let mut paths = Vec::with_capacity(n_paths);
    for k in 0..n_paths {
        let p = simulate_path(model, grid, x0, path_seed(master_seed, k)).map_err(|e| match e {
            Error::NonFinite { step, .. } => Error::NonFinite { step, path: Some(k) },
            other => other,
        })?;
        paths.push(p);
    }
    Ok(PathBatch { paths, master_seed })
}

/// Dense Jacobians J_{t_j | t_0} by Euler-Maruyama on the linearised flow.
///
/// Columns are assembled from the transposed directional products applied to
/// basis vectors, so this costs O(n^2) per step. Test-oracle use only.
pub fn jacobian_full(model: &dyn SdeModel, path: &PathSample) -> Vec<DMatrix<f64>> {
    let n = model.dim();
    let m = path.grid.n_steps();
    let dt = path.grid.dt();
    let mut out = Vec::with_capacity(m + 1);
    let mut j_cur = DMatrix::<f64>::identity(n, n);
    out.push(j_cur.clone());
    for step in 0..m {
        let t = path.grid.node(step);
        let x = &path.states[step];
        let db = &path.noise[step];
        // Row i of grad b is drift_grad_transpose_apply(e_i); same for the
        // derivative of x -> sigma(x) db.
        let mut grad_b = DMatrix::<f64>::zeros(n, n);
        let mut grad_sdb = DMatrix::<f64>::zeros(n, n);
        for i in 0..n {
            let mut e = vec![0.0; n];
            e[i] = 1.0;
            let row_b = model.drift_grad_transpose_apply(t, x, &e);
            let row_s = model.sigma_grad_transpose_apply(t, x, &e, db);
            for c in 0..n {
                grad_b[(i, c)] = row_b[c];
                grad_sdb[(i, c)] = row_s[c];
            }
        }
        let step_mat = DMatrix::<f64>::identity(n, n) + grad_b * dt + grad_sdb;
        j_cur = step_mat * j_cur;
        out.push(j_cur.clone());
    }
    out
}

/// One Euler factor Jtilde_{j+1|j}^T v = (Id + dt grad b + grad sigma dB)^T v,
/// built from the model's transposed directional products.
pub fn step_jacobian_transpose_apply(
    model: &dyn SdeModel,
    t: f64,
    x: &[f64],
    db: &[f64],
    dt: f64,
    v: &[f64],
) -> Vec<f64> {
    let gb = model.drift_grad_transpose_apply(t, x, v);
    let gs = model.sigma_grad_transpose_apply(t, x, v, db);
    (0..v.len()).map(|i| v[i] + dt * gb[i] + gs[i]).collect()
}

fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

/// Path CSV: `path_id,step,t,x_0..x_{n-1}`, 17 significant digits. When `ys`
/// is given, a `y_*` column block with the per-path conditioning value is
/// appended to every row.
pub fn paths_to_csv(paths: &[PathSample], ys: Option<&[Vec<f64>]>) -> String {
    let n = paths.first().map(|p| p.dim()).unwrap_or(0);
    let d = ys.and_then(|ys| ys.first().map(|y| y.len())).unwrap_or(0);
    let mut s = String::from("path_id,step,t");
    for i in 0..n {
        s.push_str(&format!(",x_{i}"));
    }
    for i in 0..d {
        s.push_str(&format!(",y_{i}"));
    }
    s.push('\n');
    for (k, p) in paths.iter().enumerate() {
        for (j, x) in p.states.iter().enumerate() {
            s.push_str(&format!("{k},{j},{}", fmt17(p.grid.node(j))));
            for v in x {
                s.push(',');
                s.push_str(&fmt17(*v));
            }
            if let Some(ys) = ys {
                for v in &ys[k] {
                    s.push(',');
                    s.push_str(&fmt17(*v));
                }
            }
            s.push('\n');
        }
    }
    s
}

/// Companion noise CSV: `path_id,step,db_0..db_{n-1}`.
pub fn noise_to_csv(paths: &[PathSample]) -> String {
    let n = paths.first().map(|p| p.dim()).unwrap_or(0);
    let mut s = String::from("path_id,step");
    for i in 0..n {
        s.push_str(&format!(",db_{i}"));
    }
    s.push('\n');
    for (k, p) in paths.iter().enumerate() {
        for (j, db) in p.noise.iter().enumerate() {
            s.push_str(&format!("{k},{j}"));
            for v in db {
                s.push(',');
                s.push_str(&fmt17(*v));
            }
            s.push('\n');
        }
    }
    s
}
