use formation_cp::harness::{run_calibration_campaign, CalibrationArtifacts, ExperimentConfig};
use formation_cp::perception::PerceptionModel;

#[test]
fn shipped_config_is_the_default() {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/configs/default.toml");
    let cfg = ExperimentConfig::load(std::path::Path::new(path)).unwrap();
    assert_eq!(cfg, ExperimentConfig::default());
}

#[test]
fn zero_noise_radii_are_within_half_a_bin() {
    let perception = PerceptionModel::noiseless(21, 1.52);
    let cfg = ExperimentConfig {
        perception: perception.clone(),
        ..Default::default()
    };
    let cal = run_calibration_campaign(&cfg, 120, None).unwrap();
    // Only the bearing is wrong, by at most half a bin, so the weighted norm
    // is at most sqrt(w_phi) times that.
    let bound = cfg.norm_weights.as_array()[2].sqrt() * perception.bin_width() / 2.0;
    for (g, q) in cal.table.quantiles.iter().enumerate() {
        assert!(*q <= bound + 1e-12, "B{}: {q} > {bound}", g + 1);
    }
    assert!(cal.baselines.global_high <= bound + 1e-12);
}

#[test]
fn artifacts_round_trip_through_files() {
    let cfg = ExperimentConfig::default();
    let cal = run_calibration_campaign(&cfg, 120, None).unwrap();
    let tmp = tempfile::tempdir().unwrap();
    cal.save(tmp.path()).unwrap();
    let (table, baselines) = CalibrationArtifacts::load(tmp.path()).unwrap();
    assert_eq!(table, cal.table);
    assert_eq!(baselines, cal.baselines);
    let scores = std::fs::read_to_string(tmp.path().join("calibration_scores.csv")).unwrap();
    let rows = scores.lines().count() - 1;
    assert_eq!(rows, cal.scores.iter().map(Vec::len).sum::<usize>());
}

#[test]
fn small_campaign_leaves_the_strict_group_unbounded() {
    // ceil((n + 1) * 0.99) > n for n < 99.
    let cfg = ExperimentConfig::default();
    let cal = run_calibration_campaign(&cfg, 40, None).unwrap();
    assert!(cal.table.counts[0] < 99);
    assert!(cal.table.quantiles[0].is_infinite());
    assert!(cal.table.quantiles[2].is_finite());
}
