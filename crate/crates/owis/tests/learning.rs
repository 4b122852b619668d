use owis::harness::generate_data;
use owis_core::incremental::Phase;
use owis_core::splits::split_frequency;
use owis_core::synthgen::GenConfig;
use owis_core::train::{Config, Learner};

/// 30 epochs on 200 generated scenes should learn the first task's classes well.
#[test]
fn task_one_known_map_at_half_iou() {
    let data = generate_data(&GenConfig { scenes: 200, ..GenConfig::default() }, 60).unwrap();
    let split = split_frequency(&data.catalog, [4, 4, 4]).unwrap();
    let cfg = Config::default();
    let mut learner = Learner::new(&cfg, split, 0).unwrap();
    learner.train(&data.train, Phase::Main, 30, &cfg).unwrap();
    assert_eq!(cfg.eval.map_thresholds, vec![0.5]);
    let report = learner.evaluate(&data.test, None, &cfg.eval).unwrap();
    let map = report.map_curr.unwrap();
    println!("task 1 known mAP@0.5 = {map:.3}");
    assert!(map > 0.5, "mAP@0.5 {map:.3}");
}
