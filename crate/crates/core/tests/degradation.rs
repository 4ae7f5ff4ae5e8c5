use modcast::metrics::hota_by_class;
use modcast::pipeline::{self, PipelineConfig};
use modcast::sim::NoiseConfig;

fn mean_hota(p_fn: f64) -> f64 {
    let cfg = PipelineConfig {
        n_models: 1,
        noise: NoiseConfig {
            p_fn,
            ..NoiseConfig::default()
        },
        ..PipelineConfig::default()
    };
    let m = &cfg.metrics;
    let total: f64 = (0..20)
        .map(|seed| {
            let (scene, dets) = pipeline::simulate(&cfg, seed).unwrap();
            let merged = pipeline::ensemble_frames(&dets, &cfg.ensemble).unwrap();
            let tracks = pipeline::run_tracker(&merged, &cfg.tracker).unwrap();
            let trk = pipeline::tracked_objects(&tracks, false, m.eval_range_m);
            let gts = pipeline::gt_objects(&scene.agents, m.eval_range_m);
            hota_by_class(&trk, &gts, m).unwrap().hota
        })
        .sum();
    total / 20.0
}

#[test]
fn more_missed_detections_never_raise_mean_hota() {
    let scores: Vec<f64> = [0.0, 0.1, 0.2, 0.4].into_iter().map(mean_hota).collect();
    for w in scores.windows(2) {
        assert!(w[1] <= w[0], "{scores:?}");
    }
}

#[test]
fn noiseless_oracle_reaches_every_ceiling() {
    for seed in 0..3 {
        let (_, r) = pipeline::run(&PipelineConfig::oracle(), seed).unwrap();
        for s in [r.mapf, r.hota, r.deta, r.assa, r.mota, r.amota] {
            assert!((s.0.unwrap() - 1.0).abs() < 1e-9, "seed {seed}: {r:?}");
        }
    }
}
