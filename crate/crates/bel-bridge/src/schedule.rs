//! Weighting schedules for the stochastic-integral score targets.
//!
//! A schedule is a nonnegative weight density aprime(t) together with its
//! tail mass A(s) = integral of aprime over [s, T], used to normalise the
//! weighted increment sums. `First` weights a window at the start of the
//! remaining interval and is therefore relative to the query time; it is
//! handled separately in the target recursion.

use crate::error::{Error, Result};
use crate::grid::TimeGrid;

/// Exponent (1 + sqrt 5) / 2 of the variance-minimising tail mass.
pub const GOLDEN: f64 = 1.618033988749894848;

#[derive(Debug, Clone, PartialEq)]
pub enum AlphaSchedule {
    /// aprime = 1: average of the remaining increments.
    Average,
    /// Unit weight on [s, s + width) relative to the query time s.
    First { width: f64 },
    /// Unit weight on [T - width, T).
    Last { width: f64 },
    /// aprime(t) = GOLDEN * (1 - t)^(GOLDEN - 1) on T = 1; minimises the
    /// target second moment for Brownian motion.
    OptimalBm,
    /// Tabulated weight density on the nodes of a grid, integrated by
    /// trapezoid. Values are linearly interpolated between nodes.
    Custom { grid: TimeGrid, values: Vec<f64> },
}

impl AlphaSchedule {
    pub fn first(width: f64) -> Result<Self> {
        if !(width.is_finite() && width > 0.0) {
            return Err(Error::Invalid(format!("schedule width {width}")));
        }
        Ok(Self::First { width })
    }

    pub fn last(width: f64) -> Result<Self> {
        if !(width.is_finite() && width > 0.0) {
            return Err(Error::Invalid(format!("schedule width {width}")));
        }
        Ok(Self::Last { width })
    }

    pub fn custom(grid: TimeGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n_steps() + 1 {
            return Err(Error::Invalid(format!(
                "custom schedule needs {} node values, got {}",
                grid.n_steps() + 1,
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Invalid("custom schedule values must be finite and >= 0".into()));
        }
        Ok(Self::Custom { grid, values })
    }

    /// The weight density at absolute time t for query-independent kinds.
    /// `First` has no query-independent density; see the target recursion.
    pub fn aprime(&self, t: f64, t_end: f64) -> f64 {
        match self {
            Self::Average => 1.0,
            Self::First { .. } => {
                panic!("First schedule weight is query-relative; handled in the target recursion")
            }
            Self::Last { width } => {
                if t >= t_end - width {
                    1.0
                } else {
                    0.0
                }
            }
            Self::OptimalBm => GOLDEN * (1.0 - t).max(0.0).powf(GOLDEN - 1.0),
            Self::Custom { grid, values } => {
                let u = (t - grid.t_start()) / grid.dt();
                let j = (u.floor() as usize).min(grid.n_steps() - 1);
                let frac = (u - j as f64).clamp(0.0, 1.0);
                values[j] * (1.0 - frac) + values[j + 1] * frac
            }
        }
    }

    /// Tail mass A(s) = integral of aprime over [s, T]. Closed form except
    /// for Custom, which uses trapezoid quadrature over its table.
    pub fn normaliser(&self, s: f64, t_end: f64) -> f64 {
        match self {
            Self::Average => t_end - s,
            Self::First { width } => width.min(t_end - s),
            Self::Last { width } => width.min(t_end - s),
            Self::OptimalBm => (1.0 - s).max(0.0).powf(GOLDEN),
            Self::Custom { grid, values } => {
                let m = grid.n_steps();
                let dt = grid.dt();
                let u = ((s - grid.t_start()) / dt).max(0.0);
                let j0 = (u.floor() as usize).min(m);
                let mut total = 0.0;
                for j in j0..m {
                    total += 0.5 * (values[j] + values[j + 1]) * dt;
                }
                // Remove the partial cell [t_{j0}, s).
                if j0 < m && u > j0 as f64 {
                    let frac = u - j0 as f64;
                    let a_s = values[j0] * (1.0 - frac) + values[j0 + 1] * frac;
                    total -= 0.5 * (values[j0] + a_s) * frac * dt;
                }
                total
            }
        }
    }

    /// Checked normaliser: degenerate below 1e-12.
    pub fn normaliser_checked(&self, s: f64, t_end: f64) -> Result<f64> {
        let a = self.normaliser(s, t_end);
        if a < 1e-12 {
            return Err(Error::DegenerateSchedule { t: s });
        }
        Ok(a)
    }

    pub fn descriptor(&self) -> String {
        match self {
            Self::Average => "average".into(),
            Self::First { width } => format!("first({width})"),
            Self::Last { width } => format!("last({width})"),
            Self::OptimalBm => "optimal-bm".into(),
            Self::Custom { .. } => "custom".into(),
        }
    }
}

/// The alternative closed-form weight density sometimes quoted for the
/// optimal Brownian schedule, tabulated for side-by-side comparison:
/// aprime(t) = 1 - (1 - t)^GOLDEN on T = 1.
pub fn optimal_bm_variant_table(grid: TimeGrid) -> Result<AlphaSchedule> {
    let values = grid.nodes().map(|t| 1.0 - (1.0 - t).max(0.0).powf(GOLDEN)).collect();
    AlphaSchedule::custom(grid, values)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trapezoid_tail(sched: &AlphaSchedule, s: f64, t_end: f64, n: usize) -> f64 {
        let h = (t_end - s) / n as f64;
        let mut total = 0.0;
        for j in 0..n {
            let a = sched.aprime(s + j as f64 * h, t_end);
            let b = sched.aprime(s + (j + 1) as f64 * h, t_end);
            total += 0.5 * (a + b) * h;
        }
        total
    }

    #[test]
    fn average_normaliser_matches_quadrature() {
        let sched = AlphaSchedule::Average;
        for &s in &[0.0, 0.25, 0.9] {
            let q = trapezoid_tail(&sched, s, 1.0, 1000);
            assert!((sched.normaliser(s, 1.0) - q).abs() < 1e-10);
        }
    }

    #[test]
    fn last_normaliser_matches_quadrature() {
        // The weight jumps at t = 1 - w, so split the quadrature there;
        // trapezoid is exact on each constant piece.
        let sched = AlphaSchedule::last(0.25).unwrap();
        for &s in &[0.0, 0.5, 0.8, 0.9] {
            let cut = (1.0 - 0.25f64).max(s);
            let mut q = trapezoid_tail(&sched, cut, 1.0, 1000);
            if s < cut {
                // Left piece: weight identically zero (open at the jump).
                q += 0.0;
            }
            let a = sched.normaliser(s, 1.0);
            assert!((a - q).abs() < 1e-10, "s = {s}: {a} vs {q}");
        }
    }

    #[test]
    fn optimal_bm_normaliser_matches_quadrature() {
        let sched = AlphaSchedule::OptimalBm;
        assert!((sched.normaliser(0.0, 1.0) - 1.0).abs() < 1e-15);
        for &s in &[0.0, 0.3, 0.7] {
            let q = trapezoid_tail(&sched, s, 1.0, 4_000_000);
            let a = sched.normaliser(s, 1.0);
            assert!((a - q).abs() < 1e-10, "s = {s}: {a} vs {q}");
        }
    }

    #[test]
    fn custom_normaliser_consistent_with_its_own_table() {
        let grid = TimeGrid::unit(200).unwrap();
        let sched = optimal_bm_variant_table(grid).unwrap();
        // At node 0 the trapezoid of the table over [0, 1] is the definition.
        let dt = grid.dt();
        let mut expect = 0.0;
        for j in 0..200 {
            let a = sched.aprime(j as f64 * dt, 1.0);
            let b = sched.aprime((j + 1) as f64 * dt, 1.0);
            expect += 0.5 * (a + b) * dt;
        }
        assert!((sched.normaliser(0.0, 1.0) - expect).abs() < 1e-12);
        // Mid-cell query subtracts the partial cell consistently.
        let s = 0.3715;
        let q = sched.normaliser(0.37, 1.0)
            - 0.5 * (sched.aprime(0.37, 1.0) + sched.aprime(s, 1.0)) * (s - 0.37);
        assert!((sched.normaliser(s, 1.0) - q).abs() < 1e-12);
    }

    #[test]
    fn first_window_caps_at_remaining_time() {
        let sched = AlphaSchedule::first(0.1).unwrap();
        assert!((sched.normaliser(0.5, 1.0) - 0.1).abs() < 1e-15);
        assert!((sched.normaliser(0.95, 1.0) - 0.05).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(AlphaSchedule::first(0.0).is_err());
        assert!(AlphaSchedule::last(-1.0).is_err());
        let grid = TimeGrid::unit(10).unwrap();
        assert!(AlphaSchedule::custom(grid, vec![1.0; 5]).is_err());
        assert!(AlphaSchedule::custom(grid, vec![-1.0; 11]).is_err());
    }
}
