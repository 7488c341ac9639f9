//! Simulator-level behaviour: exact replay, determinism, marginal laws,
//! Jacobian consistency, and the built-in model derivatives.

use bel_bridge::models::{circle_landmarks, Brownian, DoubleWell, Ou, ShapeSde};
use bel_bridge::sde::{
    draw_noise, jacobian_full, noise_to_csv, path_seed, paths_to_csv, simulate_batch,
    simulate_path, simulate_path_with_noise, SdeModel,
};
use bel_bridge::TimeGrid;
use proptest::prelude::*;

fn shape_model(n: usize) -> ShapeSde {
    let grid_points = circle_landmarks(n, 1.0, [0.0, 0.0]).chunks(2).map(|c| [c[0], c[1]]).collect();
    ShapeSde::new(0.1, 1.0, grid_points).unwrap()
}

#[test]
fn zero_noise_keeps_brownian_constant() {
    let model = Brownian::new(3).unwrap();
    let grid = TimeGrid::unit(50).unwrap();
    let noise = vec![vec![0.0; 3]; 50];
    let p = simulate_path_with_noise(&model, &grid, &[0.4, -0.7, 2.0], noise, 0).unwrap();
    for x in &p.states {
        assert_eq!(x, &vec![0.4, -0.7, 2.0]);
    }
}

#[test]
fn zero_noise_ou_follows_exponential_decay() {
    let model = Ou::new(1, 0.5).unwrap();
    let grid = TimeGrid::unit(1000).unwrap();
    let noise = vec![vec![0.0]; 1000];
    let p = simulate_path_with_noise(&model, &grid, &[1.0], noise, 0).unwrap();
    let expect = (-0.5f64).exp();
    assert!((p.terminal()[0] - expect).abs() < 1e-3, "x_T = {}", p.terminal()[0]);
}

#[test]
fn same_seed_gives_bit_identical_paths() {
    let model = DoubleWell::new(2, 5.0).unwrap();
    let grid = TimeGrid::unit(100).unwrap();
    let a = simulate_path(&model, &grid, &[1.0, -1.0], 99).unwrap();
    let b = simulate_path(&model, &grid, &[1.0, -1.0], 99).unwrap();
    assert_eq!(a.states, b.states);
    assert_eq!(a.noise, b.noise);
}

#[test]
fn replaying_recorded_noise_reproduces_states_exactly() {
    let model = DoubleWell::new(1, 5.0).unwrap();
    let grid = TimeGrid::unit(200).unwrap();
    let p = simulate_path(&model, &grid, &[1.0], 7).unwrap();
    let replay =
        simulate_path_with_noise(&model, &grid, &p.states[0].clone(), p.noise.clone(), p.seed)
            .unwrap();
    assert_eq!(p.states, replay.states);
}

#[test]
fn single_path_batch_matches_derived_seed() {
    let model = Brownian::new(2).unwrap();
    let grid = TimeGrid::unit(20).unwrap();
    let batch = simulate_batch(&model, &grid, &[0.0, 0.0], 1, 3).unwrap();
    let solo = simulate_path(&model, &grid, &[0.0, 0.0], path_seed(3, 0)).unwrap();
    assert_eq!(batch.paths[0].states, solo.states);
}

#[test]
fn distinct_master_seeds_give_distinct_noise() {
    let grid = TimeGrid::unit(10).unwrap();
    assert_ne!(draw_noise(&grid, 1, 1), draw_noise(&grid, 1, 2));
}

#[test]
fn brownian_terminal_marginal_matches_normal_law() {
    let model = Brownian::new(1).unwrap();
    let grid = TimeGrid::unit(50).unwrap();
    let n = 100_000usize;
    let batch = simulate_batch(&model, &grid, &[0.0], n, 17).unwrap();
    let (mut s, mut s2) = (0.0, 0.0);
    for p in &batch.paths {
        let x = p.terminal()[0];
        s += x;
        s2 += x * x;
    }
    let mean = s / n as f64;
    let var = s2 / n as f64 - mean * mean;
    assert!(mean.abs() < 3.0 / (n as f64).sqrt(), "mean {mean}");
    assert!((var - 1.0).abs() < 0.05, "var {var}");
}

#[test]
fn jacobian_is_identity_for_brownian_and_exponential_for_linear_drift() {
    let grid = TimeGrid::unit(200).unwrap();
    let brownian = Brownian::new(2).unwrap();
    let p = simulate_path(&brownian, &grid, &[0.0, 0.0], 5).unwrap();
    for j in jacobian_full(&brownian, &p) {
        assert!((j - nalgebra::DMatrix::<f64>::identity(2, 2)).norm() < 1e-14);
    }
    // b(x) = -x is the OU drift with unit rate.
    let ou = Ou::new(1, 1.0).unwrap();
    let p = simulate_path(&ou, &grid, &[0.5], 6).unwrap();
    let jacs = jacobian_full(&ou, &p);
    for (j, jac) in jacs.iter().enumerate() {
        let t = grid.node(j);
        assert!((jac[(0, 0)] - (-t).exp()).abs() < 5e-3, "t = {t}: {}", jac[(0, 0)]);
    }
}

#[test]
fn jacobian_matches_path_perturbation_on_all_builtins() {
    let grid = TimeGrid::unit(200).unwrap();
    let models: Vec<(Box<dyn SdeModel>, Vec<f64>)> = vec![
        (Box::new(Brownian::new(1).unwrap()), vec![0.3]),
        (Box::new(Ou::new(2, 1.0).unwrap()), vec![0.5, -0.2]),
        (Box::new(DoubleWell::new(1, 5.0).unwrap()), vec![0.9]),
        (Box::new(shape_model(3)), circle_landmarks(3, 1.0, [0.0, 0.0])),
    ];
    let h = 1e-5;
    for (model, x0) in &models {
        let p = simulate_path(model.as_ref(), &grid, x0, 11).unwrap();
        let jacs = jacobian_full(model.as_ref(), &p);
        let n = model.dim();
        for col in 0..n {
            let mut up = x0.clone();
            let mut dn = x0.clone();
            up[col] += h;
            dn[col] -= h;
            let pu =
                simulate_path_with_noise(model.as_ref(), &grid, &up, p.noise.clone(), 0).unwrap();
            let pd =
                simulate_path_with_noise(model.as_ref(), &grid, &dn, p.noise.clone(), 0).unwrap();
            // Check the terminal node; earlier nodes are strictly easier.
            let last = grid.n_steps();
            for row in 0..n {
                let fd = (pu.states[last][row] - pd.states[last][row]) / (2.0 * h);
                let an = jacs[last][(row, col)];
                let denom = an.abs().max(1.0);
                assert!(
                    (fd - an).abs() / denom < 1e-3,
                    "entry ({row},{col}): fd {fd}, jacobian {an}"
                );
            }
        }
    }
}

#[test]
fn drift_and_volatility_derivatives_match_finite_differences() {
    let models: Vec<(Box<dyn SdeModel>, Vec<f64>)> = vec![
        (Box::new(Ou::new(2, 1.3).unwrap()), vec![0.4, -0.6]),
        (Box::new(DoubleWell::new(2, 5.0).unwrap()), vec![0.7, -0.3]),
        (Box::new(shape_model(3)), {
            let mut x = circle_landmarks(3, 1.1, [0.05, -0.02]);
            x[0] += 0.1;
            x
        }),
    ];
    let h = 1e-5;
    for (model, x) in &models {
        let n = model.dim();
        let db: Vec<f64> = (0..n).map(|i| 0.1 * (i as f64 + 1.0)).collect();
        for row in 0..n {
            let mut basis = vec![0.0; n];
            basis[row] = 1.0;
            let grad_b = model.drift_grad_transpose_apply(0.0, x, &basis);
            let grad_s = model.sigma_grad_transpose_apply(0.0, x, &basis, &db);
            for col in 0..n {
                let mut up = x.clone();
                let mut dn = x.clone();
                up[col] += h;
                dn[col] -= h;
                let fd_b =
                    (model.drift(0.0, &up)[row] - model.drift(0.0, &dn)[row]) / (2.0 * h);
                assert!(
                    (fd_b - grad_b[col]).abs() / fd_b.abs().max(1.0) < 1e-4,
                    "drift grad ({row},{col}): fd {fd_b}, analytic {}",
                    grad_b[col]
                );
                let fd_s = (model.sigma_apply(0.0, &up, &db)[row]
                    - model.sigma_apply(0.0, &dn, &db)[row])
                    / (2.0 * h);
                assert!(
                    (fd_s - grad_s[col]).abs() / fd_s.abs().max(1.0) < 1e-4,
                    "sigma grad ({row},{col}): fd {fd_s}, analytic {}",
                    grad_s[col]
                );
            }
        }
    }
}

#[test]
fn double_well_potential_and_drift_values() {
    let model = DoubleWell::new(1, 5.0).unwrap();
    assert_eq!(model.potential(0.0), 5.0);
    assert_eq!(model.potential(1.0), 0.0);
    assert_eq!(model.potential(-1.0), 0.0);
    assert_eq!(model.drift(0.0, &[1.0])[0], 0.0);
    assert_eq!(model.drift(0.0, &[-1.0])[0], 0.0);
    assert!((model.drift(0.0, &[0.5])[0] - 7.5).abs() < 1e-12);
}

#[test]
fn shape_kernel_is_kappa_at_coincident_points() {
    let model = shape_model(4);
    let x = circle_landmarks(4, 1.0, [0.0, 0.0]);
    // Unit noise on source 0 only; landmark 0 sits on that grid point, so
    // its displacement is k(x, x) = kappa.
    let mut db = vec![0.0; 8];
    db[0] = 1.0;
    let out = model.sigma_apply(0.0, &x, &db);
    assert!((out[0] - 0.1).abs() < 1e-12, "got {}", out[0]);
}

#[test]
fn csv_export_headers_and_precision() {
    let model = Brownian::new(2).unwrap();
    let grid = TimeGrid::unit(3).unwrap();
    let batch = simulate_batch(&model, &grid, &[1.0 / 3.0, 0.0], 2, 1).unwrap();
    let csv = paths_to_csv(&batch.paths, Some(&[vec![1.0], vec![2.0]]));
    assert!(csv.starts_with("path_id,step,t,x_0,x_1,y_0\n"), "{csv}");
    assert!(csv.contains("3.3333333333333331e-1"), "{csv}");
    let ncsv = noise_to_csv(&batch.paths);
    assert!(ncsv.starts_with("path_id,step,db_0,db_1\n"));
    assert_eq!(ncsv.lines().count(), 1 + 2 * 3);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn replay_is_exact_for_random_starts_and_seeds(
        x0 in -2.0f64..2.0,
        seed in any::<u64>(),
    ) {
        let model = DoubleWell::new(1, 5.0).unwrap();
        let grid = TimeGrid::unit(50).unwrap();
        let p = simulate_path(&model, &grid, &[x0], seed).unwrap();
        let replay = simulate_path_with_noise(&model, &grid, &[x0], p.noise.clone(), seed).unwrap();
        prop_assert_eq!(p.states, replay.states);
    }

    #[test]
    fn grid_nodes_reconstruct_exactly(m in 2usize..500) {
        let grid = TimeGrid::unit(m).unwrap();
        prop_assert_eq!(grid.node(0), 0.0);
        prop_assert!((grid.node(m) - 1.0).abs() < 1e-12);
        for j in 0..m {
            prop_assert!(grid.node(j + 1) > grid.node(j));
        }
    }

    #[test]
    fn noise_increments_have_step_variance(seed in any::<u64>()) {
        let grid = TimeGrid::unit(400).unwrap();
        let noise = draw_noise(&grid, 1, seed);
        let var: f64 = noise.iter().map(|db| db[0] * db[0]).sum::<f64>() / 400.0;
        // One-path chi-square band, generous.
        prop_assert!(var > 0.4 * grid.dt() && var < 1.8 * grid.dt(), "var {}", var);
    }
}
