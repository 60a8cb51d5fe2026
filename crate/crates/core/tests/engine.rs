use fusion_coag::config::RunConfig;
use fusion_coag::experiments::run_replicas;
use fusion_coag::kernels::sphere_area;
use fusion_coag::state::{in_region, Frame};

fn physical(seed: u64) -> RunConfig {
    let mut cfg = RunConfig::from_json(
        r#"{
          "kernel": { "k0": 1.0, "alpha": 0.5, "beta": 0.5 },
          "fusion": { "r": 0.5, "mu": 0.0 },
          "initial": { "kind": "two_point", "v2": 4.0, "fraction": 0.25, "n": 1000 },
          "engine": { "t_end": 3.0, "record_every": 0.5 },
          "replicas": 3
        }"#,
    )
    .unwrap();
    cfg.engine.seed = seed;
    cfg
}

fn selfsim(seed: u64) -> RunConfig {
    let mut cfg = RunConfig::from_json(
        r#"{
          "kernel": { "k0": 1.0, "alpha": 0.5, "beta": 0.5 },
          "fusion": { "r": 1.0, "mu": 1.0 },
          "truncation": { "eps": 0.001, "big_r": 1000.0, "delta": 0.001 },
          "initial": { "kind": "monodisperse_elongated", "ratio": 3.0, "n": 1000 },
          "engine": { "frame": "self_similar", "n_particles": 1000, "t_end": 1.0, "record_every": 0.25 },
          "replicas": 2
        }"#,
    )
    .unwrap();
    cfg.engine.seed = seed;
    cfg
}

#[test]
fn same_seed_same_result() {
    for make in [physical, selfsim] {
        let a = run_replicas(&make(5)).unwrap();
        let b = run_replicas(&make(5)).unwrap();
        assert_eq!(a.mean, b.mean);
        assert_eq!(a.log.accepted, b.log.accepted);
        let c = run_replicas(&make(6)).unwrap();
        assert_ne!(a.mean, c.mean);
    }
}

#[test]
fn replicas_are_distinct_streams() {
    let runs = run_replicas(&physical(1)).unwrap();
    assert_ne!(runs.outputs[0].series, runs.outputs[1].series);
    assert_eq!(runs.mean.len(), runs.outputs[0].series.len());
}

#[test]
fn physical_run_keeps_volume_and_region() {
    let runs = run_replicas(&physical(2)).unwrap();
    for (e0, out) in runs.initial.iter().zip(&runs.outputs) {
        let v0 = e0.moment(0.0, 1.0).unwrap();
        assert_eq!(out.ensemble.moment(0.0, 1.0).unwrap(), v0);
        assert!(out.ensemble.particles.iter().all(|p| in_region(p.a, p.v)));
        assert!(out.ensemble.len() < e0.len());
        let a = out.series.moment(1.0, 0.0).unwrap();
        assert!(a.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12)));
    }
}

#[test]
fn selfsim_run_keeps_unit_volume_and_support() {
    let runs = run_replicas(&selfsim(3)).unwrap();
    for out in &runs.outputs {
        assert_eq!(out.ensemble.frame, Frame::SelfSimilar);
        let m01 = out.series.moment(0.0, 1.0).unwrap();
        assert!(m01.iter().all(|m| (m - 1.0).abs() < 0.05), "{m01:?}");
        assert!(out.ensemble.particles.iter().all(|p| p.a >= sphere_area(p.v) * (1.0 - 1e-12)));
    }
}

#[test]
fn config_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.json");
    let cfg = selfsim(4);
    std::fs::write(&path, cfg.to_json().unwrap()).unwrap();
    assert_eq!(RunConfig::from_path(&path).unwrap(), cfg);
}
