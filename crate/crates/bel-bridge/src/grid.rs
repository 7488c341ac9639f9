use crate::error::{Error, Result};

/// Uniform time grid t_0 < t_1 < ... < t_M on [t_start, t_end].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    t_start: f64,
    t_end: f64,
    n_steps: usize,
}

impl TimeGrid {
    pub fn new(t_start: f64, t_end: f64, n_steps: usize) -> Result<Self> {
        if n_steps < 2 {
            return Err(Error::InvalidGrid(format!("n_steps = {n_steps}, need >= 2")));
        }
        if !(t_end - t_start).is_finite() || t_end <= t_start {
            return Err(Error::InvalidGrid(format!(
                "need t_end > t_start, got [{t_start}, {t_end}]"
            )));
        }
        Ok(Self { t_start, t_end, n_steps })
    }

    /// Unit interval [0, 1] with `n_steps` steps.
    pub fn unit(n_steps: usize) -> Result<Self> {
        Self::new(0.0, 1.0, n_steps)
    }

    pub fn t_start(&self) -> f64 {
        self.t_start
    }

    pub fn t_end(&self) -> f64 {
        self.t_end
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn dt(&self) -> f64 {
        (self.t_end - self.t_start) / self.n_steps as f64
    }

    /// Node t_j = t_start + j * dt.
    pub fn node(&self, j: usize) -> f64 {
        debug_assert!(j <= self.n_steps);
        self.t_start + j as f64 * self.dt()
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..=self.n_steps).map(move |j| self.node(j))
    }
}
