//! Built-in diffusion models.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::sde::SdeModel;

/// Zero drift, identity volatility.
#[derive(Debug, Clone)]
pub struct Brownian {
    dim: usize,
}

impl Brownian {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidModel("dim = 0".into()));
        }
        Ok(Self { dim })
    }
}

impl SdeModel for Brownian {
    fn dim(&self) -> usize {
        self.dim
    }

    fn drift(&self, _t: f64, x: &[f64]) -> Vec<f64> {
        vec![0.0; x.len()]
    }

    fn sigma_apply(&self, _t: f64, _x: &[f64], v: &[f64]) -> Vec<f64> {
        v.to_vec()
    }

    fn sigma_inv_apply(&self, _t: f64, _x: &[f64], v: &[f64]) -> Vec<f64> {
        v.to_vec()
    }

    fn drift_grad_transpose_apply(&self, _t: f64, _x: &[f64], v: &[f64]) -> Vec<f64> {
        vec![0.0; v.len()]
    }

    fn sigma_grad_transpose_apply(&self, _t: f64, _x: &[f64], v: &[f64], _db: &[f64]) -> Vec<f64> {
        vec![0.0; v.len()]
    }

    fn sigma_constant(&self) -> bool {
        true
    }
}

/// Mean-reverting linear drift b(x) = -rate * x, identity volatility.
#[derive(Debug, Clone)]
pub struct Ou {
    dim: usize,
    rate: f64,
}

impl Ou {
    pub fn new(dim: usize, rate: f64) -> Result<Self> {
        if dim == 0 || !rate.is_finite() || rate <= 0.0 {
            return Err(Error::InvalidModel(format!("dim = {dim}, rate = {rate}")));
        }
        Ok(Self { dim, rate })
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }
}

impl SdeModel for Ou {
    fn dim(&self) -> usize {
        self.dim
    }

    fn drift(&self, _t: f64, x: &[f64]) -> Vec<f64> {
        x.iter().map(|&xi| -self.rate * xi).collect()
    }

    fn sigma_apply(&self, _t: f64, _x: &[f64], v: &[f64]) -> Vec<f64> {
        v.to_vec()
    }

    fn sigma_inv_apply(&self, _t: f64, _x: &[f64], v: &[f64]) -> Vec<f64> {
        v.to_vec()
    }

    fn drift_grad_transpose_apply(&self, _t: f64, _x: &[f64], v: &[f64]) -> Vec<f64> {
        v.iter().map(|&vi| -self.rate * vi).collect()
    }

    fn sigma_grad_transpose_apply(&self, _t: f64, _x: &[f64], v: &[f64], _db: &[f64]) -> Vec<f64> {
        vec![0.0; v.len()]
    }

    fn sigma_constant(&self) -> bool {
        true
    }
}

/// Gradient flow of the per-coordinate potential U_v(x) = v (x^2 - 1)^2 plus
/// identity noise; coordinates are independent.
#[derive(Debug, Clone)]
pub struct DoubleWell {
    dim: usize,
    v: f64,
}

impl DoubleWell {
    pub fn new(dim: usize, v: f64) -> Result<Self> {
        if dim == 0 || !v.is_finite() || v <= 0.0 {
            return Err(Error::InvalidModel(format!("dim = {dim}, v = {v}")));
        }
        Ok(Self { dim, v })
    }

    pub fn barrier(&self) -> f64 {
        self.v
    }

    pub fn potential(&self, x: f64) -> f64 {
        let q = x * x - 1.0;
        self.v * q * q
    }
}

impl SdeModel for DoubleWell {
    fn dim(&self) -> usize {
        self.dim
    }

    fn drift(&self, _t: f64, x: &[f64]) -> Vec<f64> {
        x.iter().map(|&xi| -4.0 * self.v * xi * (xi * xi - 1.0)).collect()
    }

    fn sigma_apply(&self, _t: f64, _x: &[f64], v: &[f64]) -> Vec<f64> {
        v.to_vec()
    }

    fn sigma_inv_apply(&self, _t: f64, _x: &[f64], v: &[f64]) -> Vec<f64> {
        v.to_vec()
    }

    fn drift_grad_transpose_apply(&self, _t: f64, x: &[f64], v: &[f64]) -> Vec<f64> {
        // drift' = -4v (3x^2 - 1), diagonal.
        x.iter()
            .zip(v)
            .map(|(&xi, &vi)| -4.0 * self.v * (3.0 * xi * xi - 1.0) * vi)
            .collect()
    }

    fn sigma_grad_transpose_apply(&self, _t: f64, _x: &[f64], v: &[f64], _db: &[f64]) -> Vec<f64> {
        vec![0.0; v.len()]
    }

    fn sigma_constant(&self) -> bool {
        true
    }
}

/// Landmark dynamics in the plane: N points driven by spatially correlated
/// noise with zero drift. The state is (x^1_1, x^1_2, ..., x^N_1, x^N_2).
///
/// The volatility acts blockwise: (sigma dB)^i = sum_j k(x^i, y^j) dB^j with
/// dB^j in R^2, where {y^j} is a fixed noise grid with as many points as
/// landmarks, so sigma is square and (generically) invertible.
#[derive(Debug, Clone)]
pub struct ShapeSde {
    kappa: f64,
    beta: f64,
    /// N fixed points in R^2.
    noise_grid: Vec<[f64; 2]>,
}

impl ShapeSde {
    pub fn new(kappa: f64, beta: f64, noise_grid: Vec<[f64; 2]>) -> Result<Self> {
        if !(kappa.is_finite() && kappa > 0.0 && beta.is_finite() && beta > 0.0) {
            return Err(Error::InvalidModel(format!("kappa = {kappa}, beta = {beta}")));
        }
        if noise_grid.is_empty() {
            return Err(Error::InvalidModel("empty noise grid".into()));
        }
        for (a, pa) in noise_grid.iter().enumerate() {
            for pb in noise_grid.iter().skip(a + 1) {
                if pa == pb {
                    return Err(Error::InvalidModel(format!(
                        "duplicate noise grid point ({}, {})",
                        pa[0], pa[1]
                    )));
                }
            }
        }
        Ok(Self { kappa, beta, noise_grid })
    }

    pub fn n_landmarks(&self) -> usize {
        self.noise_grid.len()
    }

    pub fn kernel(&self, x: [f64; 2], y: [f64; 2]) -> f64 {
        let d0 = x[0] - y[0];
        let d1 = x[1] - y[1];
        self.kappa * (-(d0 * d0 + d1 * d1) / self.beta).exp()
    }

    fn landmark(x: &[f64], i: usize) -> [f64; 2] {
        [x[2 * i], x[2 * i + 1]]
    }

    /// N x N kernel matrix K_{ij} = k(x^i, y^j) between the current landmarks
    /// and the fixed noise grid.
    fn kernel_matrix(&self, x: &[f64]) -> DMatrix<f64> {
        let n = self.n_landmarks();
        DMatrix::from_fn(n, n, |i, j| self.kernel(Self::landmark(x, i), self.noise_grid[j]))
    }

    /// Solve op(K) w = v componentwise over the two planar coordinates.
    fn solve_blockwise(&self, x: &[f64], v: &[f64], transpose: bool) -> Result<Vec<f64>> {
        let n = self.n_landmarks();
        let k = self.kernel_matrix(x);
        let k = if transpose { k.transpose() } else { k };
        let lu = k.lu();
        let mut out = vec![0.0; 2 * n];
        for c in 0..2 {
            let rhs = DVector::from_fn(n, |i, _| v[2 * i + c]);
            let sol = lu
                .solve(&rhs)
                .ok_or_else(|| Error::Singular("shape kernel matrix".into()))?;
            for i in 0..n {
                out[2 * i + c] = sol[i];
            }
        }
        Ok(out)
    }
}

impl SdeModel for ShapeSde {
    fn dim(&self) -> usize {
        2 * self.n_landmarks()
    }

    fn drift(&self, _t: f64, x: &[f64]) -> Vec<f64> {
        vec![0.0; x.len()]
    }

    fn sigma_apply(&self, _t: f64, x: &[f64], v: &[f64]) -> Vec<f64> {
        let n = self.n_landmarks();
        let mut out = vec![0.0; 2 * n];
        for i in 0..n {
            let xi = Self::landmark(x, i);
            let (mut s0, mut s1) = (0.0, 0.0);
            for j in 0..n {
                let kij = self.kernel(xi, self.noise_grid[j]);
                s0 += kij * v[2 * j];
                s1 += kij * v[2 * j + 1];
            }
            out[2 * i] = s0;
            out[2 * i + 1] = s1;
        }
        out
    }

    fn sigma_transpose_apply(&self, _t: f64, x: &[f64], v: &[f64]) -> Vec<f64> {
        let n = self.n_landmarks();
        let mut out = vec![0.0; 2 * n];
        for j in 0..n {
            let yj = self.noise_grid[j];
            let (mut s0, mut s1) = (0.0, 0.0);
            for i in 0..n {
                let kij = self.kernel(Self::landmark(x, i), yj);
                s0 += kij * v[2 * i];
                s1 += kij * v[2 * i + 1];
            }
            out[2 * j] = s0;
            out[2 * j + 1] = s1;
        }
        out
    }

    fn sigma_inv_apply(&self, _t: f64, x: &[f64], v: &[f64]) -> Vec<f64> {
        self.solve_blockwise(x, v, false).expect("shape kernel matrix singular")
    }

    fn sigma_inv_transpose_apply(&self, _t: f64, x: &[f64], v: &[f64]) -> Vec<f64> {
        self.solve_blockwise(x, v, true).expect("shape kernel matrix singular")
    }

    fn drift_grad_transpose_apply(&self, _t: f64, _x: &[f64], v: &[f64]) -> Vec<f64> {
        vec![0.0; v.len()]
    }

    fn sigma_grad_transpose_apply(&self, _t: f64, x: &[f64], v: &[f64], db: &[f64]) -> Vec<f64> {
        // (sigma dB)^i depends only on x^i, so the derivative is block
        // diagonal with 2x2 blocks G_i = sum_j dB^j (grad_{x^i} k_{ij})^T,
        // grad_x k(x, y) = k * (-2/beta) (x - y). Transposed apply: G_i^T v^i.
        let n = self.n_landmarks();
        let mut out = vec![0.0; 2 * n];
        for i in 0..n {
            let xi = Self::landmark(x, i);
            let mut g = [[0.0f64; 2]; 2];
            for j in 0..n {
                let yj = self.noise_grid[j];
                let kij = self.kernel(xi, yj);
                let gk0 = kij * (-2.0 / self.beta) * (xi[0] - yj[0]);
                let gk1 = kij * (-2.0 / self.beta) * (xi[1] - yj[1]);
                let (db0, db1) = (db[2 * j], db[2 * j + 1]);
                g[0][0] += db0 * gk0;
                g[0][1] += db0 * gk1;
                g[1][0] += db1 * gk0;
                g[1][1] += db1 * gk1;
            }
            let (v0, v1) = (v[2 * i], v[2 * i + 1]);
            out[2 * i] = g[0][0] * v0 + g[1][0] * v1;
            out[2 * i + 1] = g[0][1] * v0 + g[1][1] * v1;
        }
        out
    }

    fn sigma_constant(&self) -> bool {
        false
    }
}

/// Landmarks evenly spaced on a circle, as pairs (x_1, x_2) flattened into a
/// state vector.
pub fn circle_landmarks(n: usize, radius: f64, center: [f64; 2]) -> Vec<f64> {
    let mut out = Vec::with_capacity(2 * n);
    for i in 0..n {
        let theta = 2.0 * std::f64::consts::PI * i as f64 / n as f64;
        out.push(center[0] + radius * theta.cos());
        out.push(center[1] + radius * theta.sin());
    }
    out
}

/// Constructor selector for the built-in models.
#[derive(Debug, Clone)]
pub enum ModelSpec {
    Brownian { dim: usize },
    Ou { dim: usize, rate: f64 },
    DoubleWell { dim: usize, v: f64 },
    Shape { kappa: f64, beta: f64, noise_grid: Vec<[f64; 2]> },
}

pub fn make_model(spec: &ModelSpec) -> Result<Box<dyn SdeModel>> {
    Ok(match spec {
        ModelSpec::Brownian { dim } => Box::new(Brownian::new(*dim)?),
        ModelSpec::Ou { dim, rate } => Box::new(Ou::new(*dim, *rate)?),
        ModelSpec::DoubleWell { dim, v } => Box::new(DoubleWell::new(*dim, *v)?),
        ModelSpec::Shape { kappa, beta, noise_grid } => {
            Box::new(ShapeSde::new(*kappa, *beta, noise_grid.clone())?)
        }
    })
}
