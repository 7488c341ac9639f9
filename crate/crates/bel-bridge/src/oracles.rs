//! Ground truths for the test suite: closed-form bridge scores, the
//! linear-model denoising identity, a finite-difference committor for the
//! double well, and the schedule second-moment formula with a Monte Carlo
//! counterpart evaluated under the conditioned law.

use crate::error::{Error, Result};
use crate::rng::{derive_seed, CounterRng};
use crate::schedule::{AlphaSchedule, GOLDEN};

/// Abramowitz-Stegun 7.1.26 rational erf approximation, |error| < 1.5e-7.
fn erf(x: f64) -> f64 {
    let sign = if x < 0.0 { -1.0 } else { 1.0 };
    let x = x.abs();
    let t = 1.0 / (1.0 + 0.3275911 * x);
    let poly = t
        * (0.254829592
            + t * (-0.284496736 + t * (1.421413741 + t * (-1.453152027 + t * 1.061405429))));
    sign * (1.0 - poly * (-x * x).exp())
}

/// Standard normal CDF.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * (1.0 + erf(z / std::f64::consts::SQRT_2))
}

/// Exact optimal control for pinning Brownian motion at y: (y - x)/(T - t).
pub fn brownian_bridge_score(t: f64, x: &[f64], y: &[f64], t_end: f64) -> Result<Vec<f64>> {
    if t >= t_end {
        return Err(Error::Invalid(format!("t = {t} >= T = {t_end}")));
    }
    if x.len() != y.len() {
        return Err(Error::DimMismatch { expected: x.len(), got: y.len() });
    }
    Ok(x.iter().zip(y).map(|(&xi, &yi)| (yi - xi) / (t_end - t)).collect())
}

/// Denoising target for the unit-rate-half mean-reverting linear SDE
/// dX = -X/2 dt + dB: (x - e^{-t/2} x0)/(1 - e^{-t}).
pub fn ou_tweedie_score(t: f64, x: f64, x0: f64) -> Result<f64> {
    if t <= 0.0 {
        return Err(Error::Invalid(format!("t = {t} <= 0")));
    }
    Ok((x - (-t / 2.0).exp() * x0) / (1.0 - (-t).exp()))
}

/// Probability that a Brownian point started at x at time t, with the
/// mollified-ball terminal functional of the committor solver, lands in
/// ball(center, r) at time 1. This is the exact v = 0 solution of the PDE
/// (the mollifier widens the Gaussian variance by r^2/4).
pub fn brownian_ball_probability(t: f64, x: f64, center: f64, r: f64) -> f64 {
    let s = (1.0 - t + r * r / 4.0).sqrt();
    normal_cdf((center + r - x) / s) - normal_cdf((center - r - x) / s)
}

/// Hitting probability f(t, x) of ball(center, r) at the terminal time for
/// the double-well diffusion, tabulated on a regular (t, x) grid.
#[derive(Debug, Clone)]
pub struct CommittorTable {
    pub x_min: f64,
    pub x_max: f64,
    /// Number of spatial nodes.
    pub n_x: usize,
    /// Number of time steps; rows hold t_i = i / n_t, i = 0..=n_t.
    pub n_t: usize,
    pub r: f64,
    pub v: f64,
    /// Center of the terminal target ball.
    pub center: f64,
    /// values[time][space].
    pub values: Vec<Vec<f64>>,
}

impl CommittorTable {
    fn dx(&self) -> f64 {
        (self.x_max - self.x_min) / (self.n_x - 1) as f64
    }

    fn dt(&self) -> f64 {
        1.0 / self.n_t as f64
    }

    /// Bilinear interpolation of f at (t, x).
    pub fn value(&self, t: f64, x: f64) -> Result<f64> {
        let (i, ft) = self.time_cell(t, x)?;
        let (k, fx) = self.space_cell(t, x)?;
        let f = |ti: usize, kk: usize| self.values[ti][kk];
        Ok((1.0 - ft) * ((1.0 - fx) * f(i, k) + fx * f(i, k + 1))
            + ft * ((1.0 - fx) * f(i + 1, k) + fx * f(i + 1, k + 1)))
    }

    fn time_cell(&self, t: f64, x: f64) -> Result<(usize, f64)> {
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::OutOfRange { t, x });
        }
        let u = t / self.dt();
        let i = (u.floor() as usize).min(self.n_t - 1);
        Ok((i, u - i as f64))
    }

    fn space_cell(&self, t: f64, x: f64) -> Result<(usize, f64)> {
        if x < self.x_min || x > self.x_max {
            return Err(Error::OutOfRange { t, x });
        }
        let u = (x - self.x_min) / self.dx();
        let k = (u.floor() as usize).min(self.n_x - 2);
        Ok((k, u - k as f64))
    }

    /// d/dx log f by centered differences on the table, bilinearly
    /// interpolated; the oracle steering drift.
    pub fn log_gradient(&self, t: f64, x: f64) -> Result<f64> {
        let (i, ft) = self.time_cell(t, x)?;
        let (k, fx) = self.space_cell(t, x)?;
        let h = self.dx();
        let grad = |ti: usize, kk: usize| -> f64 {
            let lo = kk.max(1) - 1;
            let hi = (kk + 1).min(self.n_x - 1);
            let fl = self.values[ti][lo].max(1e-300);
            let fh = self.values[ti][hi].max(1e-300);
            (fh.ln() - fl.ln()) / ((hi - lo) as f64 * h)
        };
        Ok((1.0 - ft) * ((1.0 - fx) * grad(i, k) + fx * grad(i, k + 1))
            + ft * ((1.0 - fx) * grad(i + 1, k) + fx * grad(i + 1, k + 1)))
    }

    /// Text serialisation: header line then row-major values.
    pub fn to_text(&self) -> String {
        let mut s = format!(
            "committor-v1 x_min {:.16e} x_max {:.16e} n_x {} n_t {} r {:.16e} v {:.16e} center {:.16e}\n",
            self.x_min, self.x_max, self.n_x, self.n_t, self.r, self.v, self.center
        );
        for row in &self.values {
            let mut first = true;
            for val in row {
                if !first {
                    s.push(' ');
                }
                s.push_str(&format!("{val:.16e}"));
                first = false;
            }
            s.push('\n');
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |msg: String| Error::Checkpoint(msg);
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| bad("empty committor file".into()))?;
        let toks: Vec<&str> = header.split_whitespace().collect();
        if toks.len() != 15 || toks[0] != "committor-v1" {
            return Err(bad(format!("bad committor header `{header}`")));
        }
        let get = |label: &str| -> Result<f64> {
            let pos = toks
                .iter()
                .position(|t| *t == label)
                .ok_or_else(|| bad(format!("missing `{label}`")))?;
            toks[pos + 1].parse().map_err(|_| bad(format!("bad `{label}` value")))
        };
        let (x_min, x_max, r, v) = (get("x_min")?, get("x_max")?, get("r")?, get("v")?);
        let center = get("center")?;
        let n_x = get("n_x")? as usize;
        let n_t = get("n_t")? as usize;
        let mut values = Vec::with_capacity(n_t + 1);
        for line in lines {
            let row: Vec<f64> = line
                .split_whitespace()
                .map(|t| t.parse().map_err(|_| bad(format!("bad value `{t}`"))))
                .collect::<Result<_>>()?;
            if row.len() != n_x {
                return Err(bad(format!("row has {} values, expected {n_x}", row.len())));
            }
            values.push(row);
        }
        if values.len() != n_t + 1 {
            return Err(bad(format!("{} rows, expected {}", values.len(), n_t + 1)));
        }
        Ok(Self { x_min, x_max, n_x, n_t, r, v, center, values })
    }
}

/// Thomas solve of a tridiagonal system (lower, diag, upper, rhs), in place.
fn solve_tridiagonal(lower: &[f64], diag: &[f64], upper: &[f64], rhs: &mut [f64]) {
    let n = rhs.len();
    let mut cp = vec![0.0; n];
    let mut dp = diag[0];
    cp[0] = upper[0] / dp;
    rhs[0] /= dp;
    for i in 1..n {
        dp = diag[i] - lower[i] * cp[i - 1];
        if i < n - 1 {
            cp[i] = upper[i] / dp;
        }
        rhs[i] = (rhs[i] - lower[i] * rhs[i - 1]) / dp;
    }
    for i in (0..n - 1).rev() {
        rhs[i] -= cp[i] * rhs[i + 1];
    }
}

/// Solve the backward equation f_t + b f_x + (1/2) f_xx = 0 on [0, 1] x
/// [x_min, x_max] with terminal data a Gaussian-mollified (width r/2)
/// indicator of ball(center, r), drift b = -4 v x (x^2 - 1), central
/// differences in space, trapezoidal (Crank-Nicolson) stepping with a
/// damped implicit startup, homogeneous Neumann boundaries.
pub fn double_well_committor(
    v: f64,
    x_min: f64,
    x_max: f64,
    n_x: usize,
    n_t: usize,
    r: f64,
    center: f64,
) -> Result<CommittorTable> {
    if x_min > -2.5 || x_max < 2.5 {
        return Err(Error::Invalid(format!(
            "spatial range [{x_min}, {x_max}] too narrow; need to cover [-2.5, 2.5]"
        )));
    }
    if n_x < 3 || n_t < 2 || r <= 0.0 || v < 0.0 {
        return Err(Error::Invalid("bad committor solver parameters".into()));
    }
    let h = (x_max - x_min) / (n_x - 1) as f64;
    let dt = 1.0 / n_t as f64;
    let xs: Vec<f64> = (0..n_x).map(|k| x_min + k as f64 * h).collect();
    let drift: Vec<f64> = xs.iter().map(|&x| -4.0 * v * x * (x * x - 1.0)).collect();
    // Terminal condition: indicator of [center-r, center+r] convolved with
    // a Gaussian of standard deviation r/2.
    let terminal: Vec<f64> = xs
        .iter()
        .map(|&x| {
            let s = r / 2.0;
            normal_cdf((center + r - x) / s) - normal_cdf((center - r - x) / s)
        })
        .collect();
    // Spatial operator L f = b f_x + (1/2) f_xx, rows (lower, diag, upper),
    // Neumann ends via reflected ghost nodes.
    let mut l_lo = vec![0.0; n_x];
    let mut l_di = vec![0.0; n_x];
    let mut l_up = vec![0.0; n_x];
    for k in 0..n_x {
        if k == 0 {
            l_di[0] = -1.0 / (h * h);
            l_up[0] = 1.0 / (h * h);
        } else if k == n_x - 1 {
            l_di[k] = -1.0 / (h * h);
            l_lo[k] = 1.0 / (h * h);
        } else {
            l_lo[k] = 0.5 / (h * h) - drift[k] / (2.0 * h);
            l_di[k] = -1.0 / (h * h);
            l_up[k] = 0.5 / (h * h) + drift[k] / (2.0 * h);
        }
    }
    let mut values = vec![Vec::new(); n_t + 1];
    values[n_t] = terminal;
    // March in remaining time tau = 1 - t. The first few steps are fully
    // implicit to damp the high-frequency content of the terminal data.
    let startup = 4.min(n_t);
    for m in 0..n_t {
        let cur = &values[n_t - m];
        let implicit = m < startup;
        let theta = if implicit { 1.0 } else { 0.5 };
        let mut rhs = vec![0.0; n_x];
        for k in 0..n_x {
            let lf = l_lo[k] * if k > 0 { cur[k - 1] } else { 0.0 }
                + l_di[k] * cur[k]
                + l_up[k] * if k + 1 < n_x { cur[k + 1] } else { 0.0 };
            rhs[k] = cur[k] + dt * (1.0 - theta) * lf;
        }
        let lower: Vec<f64> = l_lo.iter().map(|&a| -dt * theta * a).collect();
        let diag: Vec<f64> = l_di.iter().map(|&a| 1.0 - dt * theta * a).collect();
        let upper: Vec<f64> = l_up.iter().map(|&a| -dt * theta * a).collect();
        solve_tridiagonal(&lower, &diag, &upper, &mut rhs);
        // Genuine Crank-Nicolson instability overshoots by O(1); coarse
        // grids produce harmless micro-undershoots near the mollified
        // terminal data, so the guard allows a small band around [0, 1].
        for &val in rhs.iter() {
            if !val.is_finite() || !(-1e-3..=1.0 + 1e-3).contains(&val) {
                return Err(Error::SolverInstability { value: val, step: m });
            }
        }
        values[n_t - m - 1] = rhs;
    }
    Ok(CommittorTable { x_min, x_max, n_x, n_t, r, v, center, values })
}

/// Second-moment formula for the time-0 windowed-score estimator on
/// Brownian motion pinned at displacement d over [0, 1]:
/// int (a')^2 + int (a_1 - a_t)^2 / (1-t)^2 + d^2,
/// with the schedule rescaled to unit total mass.
#[derive(Debug, Clone, Copy)]
pub struct SecondMoment {
    pub value: f64,
    /// Whether (a_1 - a_s)/sqrt(1-s) -> 0 numerically as s -> 1.
    pub boundary_ok: bool,
}

pub fn bel_second_moment_formula(schedule: &AlphaSchedule, d: f64) -> Result<SecondMoment> {
    let mass = schedule.normaliser(0.0, 1.0);
    if mass < 1e-12 {
        return Err(Error::DegenerateSchedule { t: 0.0 });
    }
    let base = match schedule {
        AlphaSchedule::Average => 2.0,
        AlphaSchedule::OptimalBm => GOLDEN,
        AlphaSchedule::Last { width } => {
            let w = width.min(1.0);
            3.0 / w - 1.0
        }
        AlphaSchedule::First { width } => {
            let w = width.min(1.0);
            // Window [0, w): a' = 1/w there. First integral 1/w; the second
            // has the smooth integrand ((1 - t/w)/(1 - t))^2 on [0, w].
            let quad = midpoint(0.0, w, 20_000, |t| {
                let a = (1.0 - t / w) / (1.0 - t);
                a * a
            });
            1.0 / w + quad
        }
        AlphaSchedule::Custom { .. } => {
            let i1 = midpoint(0.0, 1.0, 200_000, |t| {
                let a = schedule.aprime(t, 1.0) / mass;
                a * a
            });
            let i2 = midpoint(0.0, 1.0, 200_000, |t| {
                let a = schedule.normaliser(t, 1.0) / (mass * (1.0 - t));
                a * a
            });
            i1 + i2
        }
    };
    // Boundary condition of the integration-by-parts step.
    let q = |s: f64| schedule.normaliser(s, 1.0) / mass / (1.0 - s).sqrt();
    let boundary_ok = {
        let (a, b, c) = (q(1.0 - 1e-4), q(1.0 - 1e-6), q(1.0 - 1e-8));
        c < 0.1 && c <= b + 1e-12 && b <= a + 1e-12
    };
    Ok(SecondMoment { value: base + d * d, boundary_ok })
}

fn midpoint(a: f64, b: f64, n: usize, f: impl Fn(f64) -> f64) -> f64 {
    let h = (b - a) / n as f64;
    (0..n).map(|i| f(a + (i as f64 + 0.5) * h)).sum::<f64>() * h
}

/// Monte Carlo counterpart of the second-moment formula, simulated under the
/// conditioned law: the pinned path is drawn exactly, and the driving noise
/// is reconstructed as an independent Brownian plus the pinning drift.
/// Returns (estimate, standard error).
pub fn mc_second_moment(
    schedule: &AlphaSchedule,
    d: f64,
    n_samples: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    if n_samples < 2 {
        return Err(Error::Invalid("need at least 2 samples".into()));
    }
    let mut sum = 0.0;
    let mut sum2 = 0.0;
    for s in 0..n_samples {
        let sample_seed = derive_seed(seed, "mc", s as u64);
        let v = match schedule {
            AlphaSchedule::Last { width } => last_window_sample(*width, d, sample_seed),
            _ => global_grid_sample(schedule, d, sample_seed),
        };
        let v2 = v * v;
        sum += v2;
        sum2 += v2 * v2;
    }
    let mean = sum / n_samples as f64;
    let var = (sum2 / n_samples as f64 - mean * mean).max(0.0);
    Ok((mean, (var / n_samples as f64).sqrt()))
}

/// One draw of sum_k a'(s_k) (dW_k + (d - Bhat_{s_k})/(1 - s_k) dt) on a
/// uniform grid with s_k the cell midpoints, Bhat an exactly sampled pinned
/// path independent of W. Midpoint evaluation matters: the drift-part second
/// moment is sum_{j,l} m(s_{j&l}) dt^2 with m(s) = s/(1 - s), and with left
/// endpoints the singular m leaves an O(dt log M) deficit (~0.015 at
/// M = 500); at midpoints the flat-schedule case integrates 2 m(s)(1 - s) =
/// 2s, linear, so the rule is exactly unbiased there and second-order
/// accurate for the other schedules.
fn global_grid_sample(schedule: &AlphaSchedule, d: f64, seed: u64) -> f64 {
    const M: usize = 500;
    let dt = 1.0 / M as f64;
    let sh = (dt / 2.0).sqrt();
    let rng = CounterRng::new(seed);
    let mass = schedule.normaliser(0.0, 1.0);
    // Counters: 0..2M for the pinned path's source motion on the half grid
    // (midpoints need exact marginals too), 2M..3M for the independent
    // reconstruction noise.
    let mut w_half = vec![0.0; 2 * M + 1];
    for i in 0..2 * M {
        w_half[i + 1] = w_half[i] + sh * rng.normal_at(i as u64);
    }
    let w1 = w_half[2 * M];
    let mut acc = 0.0;
    for k in 0..M {
        let t = (k as f64 + 0.5) * dt;
        let weight = match schedule {
            AlphaSchedule::First { width } => {
                if t < *width {
                    1.0 / width
                } else {
                    0.0
                }
            }
            _ => schedule.aprime(t, 1.0) / mass,
        };
        if weight == 0.0 {
            continue;
        }
        let bhat = w_half[2 * k + 1] - t * w1 + t * d;
        let dw = dt.sqrt() * rng.normal_at((2 * M + k) as u64);
        acc += weight * (dw + (d - bhat) / (1.0 - t) * dt);
    }
    acc
}

/// One draw for the terminal-window schedule, refined inside [1-w, 1] where
/// the pinning drift is singular: the pinned path enters the window with its
/// exact Gaussian marginal and is continued by sequential conditional draws.
fn last_window_sample(width: f64, d: f64, seed: u64) -> f64 {
    const K: usize = 400;
    let w = width.min(1.0);
    let t0 = 1.0 - w;
    let dtau = w / K as f64;
    let rng = CounterRng::new(seed);
    // Marginal of the pinned path at the window entrance.
    let mut bhat = t0 * d + (t0 * (1.0 - t0)).sqrt() * rng.normal_at(0);
    let mut acc = 0.0;
    for i in 0..K {
        let t = t0 + i as f64 * dtau;
        let dw = dtau.sqrt() * rng.normal_at((1 + 2 * i) as u64);
        acc += (1.0 / w) * (dw + (d - bhat) / (1.0 - t) * dtau);
        // Conditional step of the pinned path.
        let t_next = t + dtau;
        let mean = bhat + (d - bhat) * dtau / (1.0 - t);
        let var = dtau * (1.0 - t_next) / (1.0 - t);
        bhat = mean + var.max(0.0).sqrt() * rng.normal_at((2 + 2 * i) as u64);
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bridge_score_closed_form() {
        assert_eq!(brownian_bridge_score(0.0, &[1.0], &[-1.0], 1.0).unwrap(), vec![-2.0]);
        assert_eq!(brownian_bridge_score(0.5, &[0.0], &[1.0], 1.0).unwrap(), vec![2.0]);
        assert_eq!(brownian_bridge_score(0.3, &[0.7], &[0.7], 1.0).unwrap(), vec![0.0]);
        assert!(brownian_bridge_score(1.0, &[0.0], &[0.0], 1.0).is_err());
    }

    #[test]
    fn tweedie_closed_form() {
        let t: f64 = 0.8;
        assert!(ou_tweedie_score(t, (-t / 2.0f64).exp() * 0.4, 0.4).unwrap().abs() < 1e-15);
        let big = ou_tweedie_score(100.0, 1.3, 0.2).unwrap();
        assert!((big - 1.3).abs() < 1e-10);
        let val = ou_tweedie_score(1.0, 1.0, 0.0).unwrap();
        assert!((val - 1.0 / (1.0 - (-1.0f64).exp())).abs() < 1e-12);
        assert!((val - 1.5820).abs() < 1e-4);
        assert!(ou_tweedie_score(0.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn normal_cdf_reference_values() {
        assert!((normal_cdf(0.0) - 0.5).abs() < 1e-9);
        assert!((normal_cdf(1.0) - 0.8413447461).abs() < 1e-6);
        assert!((normal_cdf(-2.0) - 0.0227501319).abs() < 1e-6);
    }

    #[test]
    fn committor_v0_matches_gaussian_closed_form() {
        // Wide domain: without the confining potential, mass leaks past
        // x = +-3 at the 1e-2 level and the reflecting walls would spoil a
        // 1e-3 comparison.
        let table = double_well_committor(0.0, -4.5, 4.5, 801, 2000, 0.1, -1.0).unwrap();
        let mut sup = 0.0f64;
        for i in (0..=2000).step_by(100) {
            let t = i as f64 / 2000.0;
            for k in (0..801).step_by(8) {
                let x = -4.5 + 9.0 * k as f64 / 800.0;
                let exact = brownian_ball_probability(t, x, -1.0, 0.1);
                let got = table.values[i][k];
                sup = sup.max((exact - got).abs());
            }
        }
        assert!(sup < 1e-3, "sup error {sup}");
    }

    #[test]
    fn committor_symmetry_and_monotone_plausibility() {
        // The potential is even, so the -1-target solution reflected in x
        // must equal the +1-target solution.
        let minus = double_well_committor(5.0, -3.0, 3.0, 401, 1000, 0.1, -1.0).unwrap();
        let plus = double_well_committor(5.0, -3.0, 3.0, 401, 1000, 0.1, 1.0).unwrap();
        let mut sup = 0.0f64;
        for i in 0..=1000 {
            for k in 0..401 {
                sup = sup.max((minus.values[i][k] - plus.values[i][400 - k]).abs());
            }
        }
        assert!(sup < 1e-6, "symmetry residual {sup}");
        // Monotone plausibility: starting inside the target well beats
        // starting in the far well.
        for i in (0..1000).step_by(100) {
            assert!(minus.value(i as f64 / 1000.0, -1.0).unwrap()
                >= minus.value(i as f64 / 1000.0, 1.0).unwrap());
        }
    }

    #[test]
    fn committor_table_round_trips() {
        let table = double_well_committor(5.0, -3.0, 3.0, 101, 50, 0.1, -1.0).unwrap();
        let text = table.to_text();
        let back = CommittorTable::from_text(&text).unwrap();
        assert_eq!(table.values, back.values);
        assert_eq!(text, back.to_text());
    }

    #[test]
    fn second_moment_closed_forms() {
        let avg0 = bel_second_moment_formula(&AlphaSchedule::Average, 0.0).unwrap();
        assert!((avg0.value - 2.0).abs() < 1e-12 && avg0.boundary_ok);
        let avg2 = bel_second_moment_formula(&AlphaSchedule::Average, 2.0).unwrap();
        assert!((avg2.value - 6.0).abs() < 1e-12);
        let opt = bel_second_moment_formula(&AlphaSchedule::OptimalBm, 0.0).unwrap();
        assert!((opt.value - GOLDEN).abs() < 1e-12 && opt.boundary_ok);
        assert!(opt.value < avg0.value);
        let last = bel_second_moment_formula(&AlphaSchedule::last(0.002).unwrap(), 0.0).unwrap();
        assert!((last.value - (3.0 / 0.002 - 1.0)).abs() < 1e-9 && last.boundary_ok);
        let first = bel_second_moment_formula(&AlphaSchedule::first(0.002).unwrap(), 0.0).unwrap();
        // 1/w plus a second integral of roughly w/3.
        assert!((first.value - 500.0).abs() < 0.01, "{}", first.value);
    }

    #[test]
    fn mc_matches_formula_for_average() {
        let (est, se) = mc_second_moment(&AlphaSchedule::Average, 0.0, 20_000, 7).unwrap();
        assert!((est - 2.0).abs() < 3.0 * se + 0.02, "est {est}, se {se}");
        let (est2, se2) = mc_second_moment(&AlphaSchedule::Average, 2.0, 20_000, 8).unwrap();
        assert!((est2 - 6.0).abs() < 3.0 * se2 + 0.06, "est {est2}, se {se2}");
    }

    #[test]
    fn mc_matches_formula_for_window_and_optimal_schedules() {
        let cases = [
            AlphaSchedule::first(0.02).unwrap(),
            AlphaSchedule::last(0.02).unwrap(),
            AlphaSchedule::OptimalBm,
        ];
        for (i, schedule) in cases.iter().enumerate() {
            let want = bel_second_moment_formula(schedule, 1.0).unwrap().value;
            let (est, se) = mc_second_moment(schedule, 1.0, 20_000, 100 + i as u64).unwrap();
            assert!(
                (est - want).abs() < 3.0 * se + 0.05 * want,
                "{}: est {est}, want {want}, se {se}",
                schedule.descriptor()
            );
        }
    }
}
