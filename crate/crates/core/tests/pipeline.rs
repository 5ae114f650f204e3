use cpm_core::dataset::{generate_augmented_swiss_roll, generate_ball_shell, load_csv_auto};
use cpm_core::embed::StopReason;
use cpm_core::pipeline::{run, Stage};
use cpm_core::{Dataset, Method, Metric, Rng, RunConfig, TargetDim};
use ndarray::Array2;

fn small_config() -> RunConfig {
    RunConfig { max_iters: 200, seed: 3, ..RunConfig::default() }
}

#[test]
fn cpm_run_is_deterministic() {
    let data = generate_ball_shell(4, 60, 60, 1.0, 1.3, &mut Rng::new(2)).unwrap();
    let a = run(&data, &small_config()).unwrap();
    let b = run(&data, &small_config()).unwrap();
    assert_eq!(a.embedding, b.embedding);
    assert_eq!(a.kl_history, b.kl_history);
    assert!(a.kl_history.windows(2).all(|w| w[1] <= w[0]));
    assert!(a.dimension_curve.is_some());
    assert_eq!(a.embedding.len(), 120);
    assert_eq!(a.embedding.dim(), 2);
}

#[test]
fn geodesic_three_dimensional_run() {
    let data = generate_augmented_swiss_roll(150, 4, 0.01, &mut Rng::new(8)).unwrap();
    let cfg = RunConfig {
        metric: Metric::Geodesic,
        knn: 8,
        target_dim: TargetDim::Three,
        ..small_config()
    };
    let out = run(&data, &cfg).unwrap();
    assert_eq!(out.embedding.dim(), 3);
    assert!(matches!(out.stop, Some(StopReason::Tolerance | StopReason::MaxIterations | StopReason::NoDescentStep)));
}

#[test]
fn disconnected_graph_is_bridged_with_warning() {
    let mut pts = Array2::zeros((40, 2));
    for i in 0..20 {
        pts[[i, 0]] = i as f64 * 0.1;
        pts[[20 + i, 0]] = 100.0 + i as f64 * 0.1;
        pts[[20 + i, 1]] = (i % 3) as f64 * 0.05;
    }
    let data = Dataset::new(pts, None).unwrap();
    let cfg = RunConfig { metric: Metric::Geodesic, knn: 3, method: Method::Mds, ..small_config() };
    let out = run(&data, &cfg).unwrap();
    assert!(out.bridged);
    assert!(out.warnings.iter().any(|w| w.contains("bridging")));
}

#[test]
fn coincident_points_fail_in_dimension_stage() {
    let data = Dataset::new(Array2::from_elem((5, 3), 1.5), None).unwrap();
    let err = run(&data, &small_config()).unwrap_err();
    assert_eq!(err.stage, Stage::DimensionEstimate);
    assert!(!err.source.is_numerical());
}

#[test]
fn invalid_config_is_rejected_before_work() {
    let data = generate_ball_shell(3, 5, 5, 1.0, 1.3, &mut Rng::new(2)).unwrap();
    let cfg = RunConfig { num_scales: 2, ..RunConfig::default() };
    assert!(run(&data, &cfg).is_err());
}

#[test]
fn csv_round_trip_preserves_labels_for_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bs.csv");
    let data = generate_ball_shell(3, 10, 10, 1.0, 1.3, &mut Rng::new(4)).unwrap();
    data.save_csv(&path).unwrap();
    let back = load_csv_auto(&path).unwrap();
    assert_eq!(back, data);
    let out = run(&back, &RunConfig { method: Method::Mds, ..RunConfig::default() }).unwrap();
    assert_eq!(out.embedding.len(), 20);
}
