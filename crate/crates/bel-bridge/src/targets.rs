//! Regression targets for the conditional score, built from recorded paths.
//!
//! Every target is a weighted stochastic-integral estimate of
//! grad log p(x_T | x_s) evaluated along the simulated path. The adjoint
//! route accumulates transposed Jacobian-vector products backward in one
//! sweep; the reparametrisation and Gaussian-step routes are alternative
//! estimators used for cross-validation and cheap training targets.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::schedule::AlphaSchedule;
use crate::sde::{step_jacobian_transpose_apply, PathSample, SdeModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TargetSource {
    Adjoint,
    Reparam,
    GaussianStep,
    Unconditional,
}

/// Targets S_{t_j}, j = 0..M-1, for one path. The terminal node has no
/// target (the normaliser vanishes there).
#[derive(Debug, Clone)]
pub struct ScoreTargetSet {
    pub grid: TimeGrid,
    pub targets: Vec<Vec<f64>>,
    pub schedule: String,
    pub source: TargetSource,
}

fn check_finite(v: &[f64], step: usize) -> Result<()> {
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite { step, path: None });
    }
    Ok(())
}

/// Backward difference sequence D_{t_j}:
/// D_j = (dt grad b^T + grad sigma^T dB) Stilde_{j+1} + sigma^{-T} dB_j,
/// Stilde_j = Stilde_{j+1} + D_j, Stilde_M = 0.
pub fn backward_differences(model: &dyn SdeModel, path: &PathSample) -> Result<Vec<Vec<f64>>> {
    let n = model.dim();
    let m = path.grid.n_steps();
    let dt = path.grid.dt();
    let mut ds = vec![Vec::new(); m];
    let mut stilde = vec![0.0; n];
    for j in (0..m).rev() {
        let t = path.grid.node(j);
        let x = &path.states[j];
        let db = &path.noise[j];
        let gb = model.drift_grad_transpose_apply(t, x, &stilde);
        let gs = model.sigma_grad_transpose_apply(t, x, &stilde, db);
        let c = model.sigma_inv_transpose_apply(t, x, db);
        let d: Vec<f64> = (0..n).map(|i| dt * gb[i] + gs[i] + c[i]).collect();
        check_finite(&d, j)?;
        for i in 0..n {
            stilde[i] += d[i];
        }
        ds[j] = d;
    }
    Ok(ds)
}

/// Weighted-sum targets S_{t_j} = A(t_j)^{-1} sum_{k>=j} aprime(t_k) D_{t_k}
/// for query-independent schedules; window-relative computation for `First`.
pub fn adjoint_score_targets(
    model: &dyn SdeModel,
    path: &PathSample,
    schedule: &AlphaSchedule,
) -> Result<ScoreTargetSet> {
    let targets = match schedule {
        AlphaSchedule::First { width } => first_window_targets(model, path, *width)?,
        _ => weighted_difference_targets(model, path, schedule)?,
    };
    Ok(ScoreTargetSet {
        grid: path.grid,
        targets,
        schedule: schedule.descriptor(),
        source: TargetSource::Adjoint,
    })
}

fn weighted_difference_targets(
    model: &dyn SdeModel,
    path: &PathSample,
    schedule: &AlphaSchedule,
) -> Result<Vec<Vec<f64>>> {
    let n = model.dim();
    let m = path.grid.n_steps();
    let dt = path.grid.dt();
    let t_end = path.grid.t_end();
    let mut out = vec![Vec::new(); m];
    let mut stilde = vec![0.0; n];
    let mut weighted = vec![0.0; n];
    for j in (0..m).rev() {
        let t = path.grid.node(j);
        let x = &path.states[j];
        let db = &path.noise[j];
        let gb = model.drift_grad_transpose_apply(t, x, &stilde);
        let gs = model.sigma_grad_transpose_apply(t, x, &stilde, db);
        let c = model.sigma_inv_transpose_apply(t, x, db);
        let w = schedule.aprime(t, t_end);
        let a = schedule.normaliser_checked(t, t_end)?;
        let mut tj = vec![0.0; n];
        for i in 0..n {
            let d = dt * gb[i] + gs[i] + c[i];
            stilde[i] += d;
            weighted[i] += w * d;
            tj[i] = weighted[i] / a;
        }
        check_finite(&tj, j)?;
        out[j] = tj;
    }
    Ok(out)
}

/// Targets for the query-relative window schedule: unit weight on
/// [t_j, t_j + w). The window sum uses the Jacobian up to the right endpoint
/// of each step, so the single-step window reproduces the Gaussian-step
/// target exactly.
fn first_window_targets(
    model: &dyn SdeModel,
    path: &PathSample,
    width: f64,
) -> Result<Vec<Vec<f64>>> {
    let n = model.dim();
    let m = path.grid.n_steps();
    let dt = path.grid.dt();
    let t_end = path.grid.t_end();
    // Steps per window, at least one.
    let span = ((width / dt).round() as usize).max(1);
    let mut out = vec![Vec::new(); m];
    for j in 0..m {
        let t_j = path.grid.node(j);
        let k_end = (j + span).min(m);
        let w_eff = width.min(t_end - t_j);
        if w_eff < 1e-12 {
            return Err(Error::DegenerateSchedule { t: t_j });
        }
        // R = sum_{k=j}^{k_end-1} (Jtilde_{k+1|j})^T sigma^{-T} dB_k, rolled
        // up backward one step-Jacobian factor at a time.
        let mut r = vec![0.0; n];
        for k in (j..k_end).rev() {
            let t = path.grid.node(k);
            let x = &path.states[k];
            let db = &path.noise[k];
            let c = model.sigma_inv_transpose_apply(t, x, db);
            for i in 0..n {
                r[i] += c[i];
            }
            r = step_jacobian_transpose_apply(model, t, x, db, dt, &r);
        }
        let tj: Vec<f64> = r.iter().map(|v| v / w_eff).collect();
        check_finite(&tj, j)?;
        out[j] = tj;
    }
    Ok(out)
}

/// Reparametrised targets with the linear deflation M_t = ((T - t)/T) Id:
/// S_{t_j} = M_{t_j}^{-1} sum_{k>=j} (m_k grad b^T + (1/T) Id) sigma^{-T} dB_k.
/// With `normalised = false` the leading M^{-1} factor is dropped, which is
/// the literal integral form; it agrees with the normalised one at t = 0.
pub fn reparam_score_targets(
    model: &dyn SdeModel,
    path: &PathSample,
    normalised: bool,
) -> Result<ScoreTargetSet> {
    let n = model.dim();
    let m = path.grid.n_steps();
    let t_end = path.grid.t_end();
    let t_start = path.grid.t_start();
    let horizon = t_end - t_start;
    let mut out = vec![Vec::new(); m];
    let mut run = vec![0.0; n];
    for j in (0..m).rev() {
        let t = path.grid.node(j);
        let x = &path.states[j];
        let db = &path.noise[j];
        let c = model.sigma_inv_transpose_apply(t, x, db);
        let mk = (t_end - t) / horizon;
        let gb = model.drift_grad_transpose_apply(t, x, &c);
        for i in 0..n {
            run[i] += mk * gb[i] + c[i] / horizon;
        }
        let tj: Vec<f64> = if normalised {
            let m_j = (t_end - t) / horizon;
            if m_j < 1e-12 {
                return Err(Error::Singular(format!("deflation factor at t = {t}")));
            }
            run.iter().map(|v| v / m_j).collect()
        } else {
            run.clone()
        };
        check_finite(&tj, j)?;
        out[j] = tj;
    }
    Ok(ScoreTargetSet {
        grid: path.grid,
        targets: out,
        schedule: if normalised { "reparam-linear".into() } else { "reparam-linear-literal".into() },
        source: TargetSource::Reparam,
    })
}

/// Score of the one-step Gaussian transition density at step j, with respect
/// to the step's starting point:
/// (Id + dt grad b^T) a^{-1} (x_{j+1} - x_j - dt b) / dt, a = sigma sigma^T.
pub fn gaussian_step_target(model: &dyn SdeModel, path: &PathSample, j: usize) -> Result<Vec<f64>> {
    let n = model.dim();
    let m = path.grid.n_steps();
    if j >= m {
        return Err(Error::Invalid(format!("step {j} out of range (M = {m})")));
    }
    let dt = path.grid.dt();
    let t = path.grid.node(j);
    let x = &path.states[j];
    let b = model.drift(t, x);
    let r: Vec<f64> =
        (0..n).map(|i| path.states[j + 1][i] - x[i] - dt * b[i]).collect();
    let u = model.sigma_inv_apply(t, x, &r);
    let u = model.sigma_inv_transpose_apply(t, x, &u);
    let u: Vec<f64> = u.iter().map(|v| v / dt).collect();
    let gb = model.drift_grad_transpose_apply(t, x, &u);
    let tj: Vec<f64> = (0..n).map(|i| u[i] + dt * gb[i]).collect();
    check_finite(&tj, j)?;
    Ok(tj)
}

/// All Gaussian-step targets for one path.
pub fn gaussian_step_targets(model: &dyn SdeModel, path: &PathSample) -> Result<ScoreTargetSet> {
    let targets = (0..path.grid.n_steps())
        .map(|j| gaussian_step_target(model, path, j))
        .collect::<Result<Vec<_>>>()?;
    Ok(ScoreTargetSet {
        grid: path.grid,
        targets,
        schedule: "gaussian-step".into(),
        source: TargetSource::GaussianStep,
    })
}

/// Stochastic-integral estimate of the unconditional score
/// grad log p_t(x_t | x_0) at node `t_index`, for constant-volatility models:
/// J_{t|0}^{-T} sum_{k < t_index} aprime(t_k) J_{t_k|0}^T sigma^{-T} dB_k.
/// The caller supplies `aprime` normalised to unit mass on [0, t].
pub fn unconditional_score_target(
    model: &dyn SdeModel,
    path: &PathSample,
    aprime: &dyn Fn(f64) -> f64,
    t_index: usize,
) -> Result<Vec<f64>> {
    if !model.sigma_constant() {
        return Err(Error::Invalid(
            "unconditional score targets require constant volatility".into(),
        ));
    }
    let n = model.dim();
    let m = path.grid.n_steps();
    if t_index == 0 || t_index > m {
        return Err(Error::Invalid(format!("t_index {t_index} out of range 1..={m}")));
    }
    let jac = crate::sde::jacobian_full(model, path);
    let mut acc = DVector::<f64>::zeros(n);
    for k in 0..t_index {
        let t = path.grid.node(k);
        let c = model.sigma_inv_transpose_apply(t, &path.states[k], &path.noise[k]);
        let w = aprime(t);
        acc += jac[k].transpose() * DVector::from_iterator(n, c.iter().map(|v| w * v));
    }
    let jt = jac[t_index].transpose();
    let sol = jt
        .lu()
        .solve(&acc)
        .ok_or_else(|| Error::Singular("transposed flow Jacobian".into()))?;
    let out: Vec<f64> = sol.iter().copied().collect();
    check_finite(&out, t_index)?;
    Ok(out)
}

/// Dense Jacobian oracle variant of the adjoint targets, forming every
/// J_{t_k|t_j} explicitly. O(M^2 n^3); test use only.
pub fn adjoint_targets_via_jacobians(
    model: &dyn SdeModel,
    path: &PathSample,
    schedule: &AlphaSchedule,
) -> Result<Vec<Vec<f64>>> {
    let n = model.dim();
    let m = path.grid.n_steps();
    let dt = path.grid.dt();
    let t_end = path.grid.t_end();
    let jac = crate::sde::jacobian_full(model, path);
    let mut out = vec![Vec::new(); m];
    for j in 0..m {
        let t_j = path.grid.node(j);
        let inv_j = jac[j]
            .clone()
            .lu()
            .try_inverse()
            .ok_or_else(|| Error::Singular("flow Jacobian".into()))?;
        let mut acc = DVector::<f64>::zeros(n);
        if let AlphaSchedule::First { width } = schedule {
            // Window sum with explicit right-endpoint relative Jacobians.
            let span = ((width / dt).round() as usize).max(1);
            let norm = width.min(t_end - t_j);
            for k in j..(j + span).min(m) {
                let t = path.grid.node(k);
                let c = model.sigma_inv_transpose_apply(t, &path.states[k], &path.noise[k]);
                let j_rel = &jac[k + 1] * &inv_j;
                acc += j_rel.transpose() * DVector::from_iterator(n, c.iter().copied());
            }
            out[j] = (acc / norm).iter().copied().collect();
            continue;
        }
        // Weighted difference sum built from dense matrices: the running tail
        // stilde_k = sum_{l >= k} (J_l J_k^{-1})^T c_l and the per-step
        // increment D_k = c_k + (F_k^T - Id) stilde_{k+1}, with F_k the dense
        // one-step factor.
        let norm = schedule.normaliser_checked(t_j, t_end)?;
        for k in j..m {
            let t = path.grid.node(k);
            let w = schedule.aprime(t, t_end);
            let c = DVector::from_iterator(
                n,
                model
                    .sigma_inv_transpose_apply(t, &path.states[k], &path.noise[k])
                    .iter()
                    .copied(),
            );
            let inv_next = jac[k + 1]
                .clone()
                .lu()
                .try_inverse()
                .ok_or_else(|| Error::Singular("flow Jacobian".into()))?;
            let mut stilde_next = DVector::<f64>::zeros(n);
            for l in (k + 1)..m {
                let tl = path.grid.node(l);
                let cl = model.sigma_inv_transpose_apply(tl, &path.states[l], &path.noise[l]);
                let j_rel = &jac[l] * &inv_next;
                stilde_next += j_rel.transpose() * DVector::from_iterator(n, cl.iter().copied());
            }
            let f_k = dense_step_factor(model, t, &path.states[k], &path.noise[k], dt);
            let d_k = &c + (f_k.transpose() - DMatrix::<f64>::identity(n, n)) * stilde_next;
            acc += w * d_k;
        }
        out[j] = (acc / norm).iter().copied().collect();
    }
    Ok(out)
}

/// Target CSV: `path_id,step,t,s_0..s_{n-1}`, 17 significant digits.
pub fn targets_to_csv(sets: &[ScoreTargetSet]) -> String {
    let n = sets.first().and_then(|s| s.targets.first()).map(|t| t.len()).unwrap_or(0);
    let mut s = String::from("path_id,step,t");
    for i in 0..n {
        s.push_str(&format!(",s_{i}"));
    }
    s.push('\n');
    for (k, set) in sets.iter().enumerate() {
        for (j, tj) in set.targets.iter().enumerate() {
            s.push_str(&format!("{k},{j},{:.16e}", set.grid.node(j)));
            for v in tj {
                s.push_str(&format!(",{v:.16e}"));
            }
            s.push('\n');
        }
    }
    s
}

/// Dense step factor for test oracles: Id + dt grad b + grad(sigma dB).
pub fn dense_step_factor(
    model: &dyn SdeModel,
    t: f64,
    x: &[f64],
    db: &[f64],
    dt: f64,
) -> DMatrix<f64> {
    let n = model.dim();
    let mut mat = DMatrix::<f64>::identity(n, n);
    for i in 0..n {
        let mut e = vec![0.0; n];
        e[i] = 1.0;
        let gb = model.drift_grad_transpose_apply(t, x, &e);
        let gs = model.sigma_grad_transpose_apply(t, x, &e, db);
        for c in 0..n {
            mat[(i, c)] += dt * gb[c] + gs[c];
        }
    }
    mat
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{Brownian, DoubleWell, Ou};
    use crate::sde::simulate_path;

    fn rel_err(a: &[f64], b: &[f64]) -> f64 {
        let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
        let den: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
        num / den.max(1e-300)
    }

    #[test]
    fn brownian_differences_are_increments_and_telescope() {
        let model = Brownian::new(3).unwrap();
        let grid = TimeGrid::unit(100).unwrap();
        let path = simulate_path(&model, &grid, &[0.0; 3], 11).unwrap();
        let ds = backward_differences(&model, &path).unwrap();
        for (d, db) in ds.iter().zip(&path.noise) {
            assert_eq!(d, db);
        }
        // Telescoping: summing D backward reproduces Stilde_0 bit-exactly.
        let mut stilde0 = vec![0.0; 3];
        for d in ds.iter().rev() {
            for i in 0..3 {
                stilde0[i] += d[i];
            }
        }
        let mut expect = vec![0.0; 3];
        for db in path.noise.iter().rev() {
            for i in 0..3 {
                expect[i] += db[i];
            }
        }
        assert_eq!(stilde0, expect);
    }

    #[test]
    fn ou_stilde_matches_forward_accumulated_euler_factors() {
        let model = Ou::new(1, 0.5).unwrap();
        let grid = TimeGrid::unit(200).unwrap();
        let path = simulate_path(&model, &grid, &[1.0], 5).unwrap();
        let ds = backward_differences(&model, &path).unwrap();
        let dt = grid.dt();
        let factor = 1.0 - 0.5 * dt;
        for j in 0..200 {
            let stilde_j: f64 = ds[j..].iter().map(|d| d[0]).sum();
            let mut oracle = 0.0;
            let mut jac = 1.0;
            for k in j..200 {
                oracle += jac * path.noise[k][0];
                jac *= factor;
            }
            assert!(
                (stilde_j - oracle).abs() <= 1e-12 * oracle.abs().max(1.0),
                "j = {j}: {stilde_j} vs {oracle}"
            );
        }
    }

    #[test]
    fn brownian_average_targets_are_bridge_scores() {
        let model = Brownian::new(2).unwrap();
        let grid = TimeGrid::unit(100).unwrap();
        let path = simulate_path(&model, &grid, &[0.3, -0.1], 21).unwrap();
        let set = adjoint_score_targets(&model, &path, &AlphaSchedule::Average).unwrap();
        for j in 0..100 {
            let t = grid.node(j);
            for i in 0..2 {
                let tail: f64 = path.noise[j..].iter().map(|db| db[i]).sum();
                let expect = tail / (1.0 - t);
                assert!((set.targets[j][i] - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn brownian_single_step_window_is_rescaled_increment() {
        let model = Brownian::new(2).unwrap();
        let grid = TimeGrid::unit(50).unwrap();
        let dt = grid.dt();
        let path = simulate_path(&model, &grid, &[0.0; 2], 3).unwrap();
        let sched = AlphaSchedule::first(dt).unwrap();
        let set = adjoint_score_targets(&model, &path, &sched).unwrap();
        for j in 0..50 {
            for i in 0..2 {
                assert_eq!(set.targets[j][i], path.noise[j][i] / dt);
            }
        }
    }

    #[test]
    fn gaussian_step_equals_single_step_window_on_double_well() {
        let model = DoubleWell::new(2, 5.0).unwrap();
        let grid = TimeGrid::unit(200).unwrap();
        let dt = grid.dt();
        let path = simulate_path(&model, &grid, &[-1.0, 1.0], 9).unwrap();
        let sched = AlphaSchedule::first(dt).unwrap();
        let set = adjoint_score_targets(&model, &path, &sched).unwrap();
        for j in 0..200 {
            let g = gaussian_step_target(&model, &path, j).unwrap();
            assert!(rel_err(&g, &set.targets[j]) < 1e-12, "step {j}");
        }
    }

    #[test]
    fn reparam_brownian_recovers_bridge_score_and_literal_form_at_origin() {
        let model = Brownian::new(1).unwrap();
        let grid = TimeGrid::unit(100).unwrap();
        let path = simulate_path(&model, &grid, &[0.0], 31).unwrap();
        let norm = reparam_score_targets(&model, &path, true).unwrap();
        let lit = reparam_score_targets(&model, &path, false).unwrap();
        for j in 0..100 {
            let t = grid.node(j);
            let tail: f64 = path.noise[j..].iter().map(|db| db[0]).sum();
            assert!((norm.targets[j][0] - tail / (1.0 - t)).abs() < 1e-12);
        }
        assert!((norm.targets[0][0] - lit.targets[0][0]).abs() < 1e-14);
    }

    #[test]
    fn unconditional_brownian_target_is_time_averaged_endpoint() {
        let model = Brownian::new(2).unwrap();
        let grid = TimeGrid::unit(100).unwrap();
        let path = simulate_path(&model, &grid, &[0.0; 2], 17).unwrap();
        let idx = 60;
        let t = grid.node(idx);
        let target = unconditional_score_target(&model, &path, &|_| 1.0 / t, idx).unwrap();
        for i in 0..2 {
            let bt: f64 = path.noise[..idx].iter().map(|db| db[i]).sum();
            assert!((target[i] - bt / t).abs() < 1e-12);
        }
    }

    #[test]
    fn fast_targets_match_dense_jacobian_oracle() {
        let model = Ou::new(2, 0.7).unwrap();
        let grid = TimeGrid::unit(100).unwrap();
        let dt = grid.dt();
        let path = simulate_path(&model, &grid, &[1.0, -0.5], 23).unwrap();
        let schedules = [
            AlphaSchedule::Average,
            AlphaSchedule::OptimalBm,
            AlphaSchedule::first(5.0 * dt).unwrap(),
            AlphaSchedule::last(0.2).unwrap(),
        ];
        for sched in &schedules {
            let fast = adjoint_score_targets(&model, &path, sched).unwrap();
            let dense = adjoint_targets_via_jacobians(&model, &path, sched).unwrap();
            for j in 0..100 {
                assert!(
                    rel_err(&fast.targets[j], &dense[j]) < 1e-10,
                    "{} step {j}",
                    sched.descriptor()
                );
            }
        }
    }

    #[test]
    fn target_mean_is_zero_within_monte_carlo_bands() {
        let model = Brownian::new(1).unwrap();
        let grid = TimeGrid::unit(50).unwrap();
        let n_paths = 4000;
        let batch = crate::sde::simulate_batch(&model, &grid, &[0.0], n_paths, 99).unwrap();
        for sched in [AlphaSchedule::Average, AlphaSchedule::OptimalBm] {
            for &j in &[0usize, 20, 40] {
                let vals: Vec<f64> = batch
                    .paths
                    .iter()
                    .map(|p| adjoint_score_targets(&model, p, &sched).unwrap().targets[j][0])
                    .collect();
                let mean = vals.iter().sum::<f64>() / n_paths as f64;
                let var =
                    vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n_paths as f64;
                let band = 3.0 * (var / n_paths as f64).sqrt();
                assert!(mean.abs() < band, "{} j={j}: mean {mean}, band {band}", sched.descriptor());
            }
        }
    }
}
