//! Cross-module integration: simulate an epidemic on a sampled network,
//! compress, identify, forecast, and compare against both ground truth and
//! the surrogate-network route.

use ndarray::Array1;

use netdyn::dynamics::{integrate_rk4, sample_curing_rates, sample_initial_sis, sis_rhs, SisParams};
use netdyn::graph::{generate_sbm, SbmSpec};
use netdyn::pod::{mean_center, thin_svd, ModePolicy, SnapshotMatrix};
use netdyn::predict::{
    error_metrics, run_pipeline, surrogate_fit, surrogate_forecast, PipelineConfig,
    SurrogateParams,
};
use netdyn::scalar::Scalar;

fn sbm_sis_trajectory(
    sizes: Vec<usize>,
    edge_weight: f64,
    graph_seed: u64,
    dyn_seed: u64,
    dt: f64,
    k: usize,
) -> (netdyn::TrajectoryF64, SisParams<f64>) {
    let spec = SbmSpec {
        block_sizes: sizes,
        p_intra: 0.5,
        p_inter: 0.05,
        edge_weight,
        directed: true,
        seed: graph_seed,
    };
    let g = generate_sbm::<f64>(&spec).unwrap();
    let n = g.n();
    let delta = sample_curing_rates(n, dyn_seed ^ 0x9E37_79B9_7F4A_7C15);
    let x0 = sample_initial_sis(n, dyn_seed);
    let params = SisParams::new(delta, g).unwrap();
    let traj = integrate_rk4(|x| sis_rhs(&params, x).unwrap(), &x0, dt, k - 1).unwrap();
    (traj, params)
}

#[test]
fn sbm_sis_two_mode_fit_overlays_observations() {
    let (traj, _) = sbm_sis_trajectory(vec![20, 20, 20], 0.02, 7, 42, 0.05, 200);
    let cfg = PipelineConfig {
        mode_policy: ModePolicy::Fixed(2),
        clamp_outputs: true,
        ..PipelineConfig::default()
    };
    let run = run_pipeline(&traj, &cfg).unwrap();
    assert!(
        run.fit_metrics.relative_l2 <= 0.05,
        "fit-window relative L2 {}",
        run.fit_metrics.relative_l2
    );
    assert!(
        run.predicted_metrics.relative_l2 < run.baseline_metrics.relative_l2,
        "forecast {} not below baseline {}",
        run.predicted_metrics.relative_l2,
        run.baseline_metrics.relative_l2
    );
    // every RK4 snapshot of the probability dynamics stays in the unit box
    assert!(traj.states().iter().all(|&v| (-1e-9..=1.0 + 1e-9).contains(&v)));
}

#[test]
fn surrogate_and_reduced_model_both_beat_the_baseline() {
    let (traj, params) = sbm_sis_trajectory(vec![5, 5], 0.05, 3, 4, 0.05, 200);
    let k_obs = traj.len() / 2;

    let cfg = PipelineConfig {
        mode_policy: ModePolicy::Fixed(2),
        clamp_outputs: true,
        ..PipelineConfig::default()
    };
    let run = run_pipeline(&traj, &cfg).unwrap();

    let window = traj.window(k_obs).unwrap();
    let rho = 1e-3 * k_obs as f64;
    let sp = SurrogateParams::with_uniform_rho(params.delta().clone(), rho).unwrap();
    let a_hat = surrogate_fit(&window, &sp).unwrap();
    // underdetermination: the surrogate reproduces the dynamics without
    // matching the true topology
    let mut diff = 0.0f64;
    let mut scale = 0.0f64;
    for i in 0..a_hat.n() {
        for j in 0..a_hat.n() {
            diff += (a_hat.adjacency()[[i, j]] - params.graph().adjacency()[[i, j]]).powi(2);
            scale += params.graph().adjacency()[[i, j]].powi(2);
        }
    }
    assert!(diff.sqrt() > 0.2 * scale.sqrt(), "surrogate unexpectedly recovered the topology");

    let fc = surrogate_forecast(
        &a_hat,
        params.delta(),
        &traj.column(k_obs - 1),
        traj.time(k_obs - 1),
        traj.time(traj.len() - 1),
        traj.dt(),
    )
    .unwrap();
    let truth = traj
        .states()
        .slice(ndarray::s![.., k_obs..])
        .to_owned();
    let predicted = fc.states.slice(ndarray::s![.., 1..]).to_owned();
    let surrogate_metrics = error_metrics(&predicted, &truth).unwrap();

    assert!(surrogate_metrics.relative_l2 <= 0.1, "held-out {}", surrogate_metrics.relative_l2);
    let baseline = run.baseline_metrics.relative_l2;
    assert!(surrogate_metrics.relative_l2 < baseline);
    assert!(run.predicted_metrics.relative_l2 < baseline);
}

#[test]
fn mean_centering_shifts_and_preserves_shape() {
    let (traj, _) = sbm_sis_trajectory(vec![4, 4], 0.05, 1, 2, 0.05, 50);
    let snaps = SnapshotMatrix::from_trajectory(&traj);
    let (centered, mean) = mean_center(&snaps);
    for i in 0..snaps.n() {
        let row_mean: f64 =
            centered.matrix().row(i).iter().sum::<f64>() / centered.len() as f64;
        assert!(row_mean.abs() < 1e-12);
        let back = centered.matrix()[[i, 0]] + mean[i];
        assert!((back - snaps.matrix()[[i, 0]]).abs() < 1e-14);
    }
    // centering changes the leading mode, everything still decomposes
    let svd = thin_svd(centered.matrix()).unwrap();
    assert_eq!(svd.sigma.len(), snaps.n().min(snaps.len()));
}

/// The kernels stay generic over the scalar: a coarse f32 run goes through
/// the same pipeline end to end.
#[test]
fn f32_pipeline_smoke() {
    fn uniform_state<T: Scalar>(n: usize) -> Array1<T> {
        Array1::from_iter((0..n).map(|i| T::of(0.05 + 0.01 * i as f64)))
    }
    let g = netdyn::graph::generate_path::<f32>(6).unwrap();
    let delta = Array1::<f32>::from_elem(6, 0.1);
    let params = SisParams::new(delta, g).unwrap();
    let x0 = uniform_state::<f32>(6);
    let traj = integrate_rk4(|x| sis_rhs(&params, x).unwrap(), &x0, 0.05f32, 99).unwrap();
    let cfg = PipelineConfig {
        mode_policy: ModePolicy::Fixed(2),
        solver: netdyn::predict::SolverConfig::Stlsq {
            threshold: 0.05,
            ridge: 1e-6,
            normalize: true,
        },
        ..PipelineConfig::default()
    };
    let run = run_pipeline(&traj, &cfg).unwrap();
    assert!(run.fit_metrics.relative_l2.is_finite());
    assert!(run.predicted_metrics.relative_l2.is_finite());
}
