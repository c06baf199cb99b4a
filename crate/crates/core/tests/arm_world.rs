mod common;

use common::mean_var;
use mmlab::arm::{generate_dataset, render, ArmConfig, ArmState, Dataset, WorldState};
use mmlab::nn::RngStream;

#[test]
fn dataset_is_a_pure_function_of_config_and_seed() {
    let cfg = ArmConfig::default();
    let a = generate_dataset(&cfg, 300, 4).unwrap();
    let b = generate_dataset(&cfg, 300, 4).unwrap();
    let c = generate_dataset(&cfg, 300, 5).unwrap();
    assert_eq!(a.images, b.images);
    assert_eq!(a.targets, b.targets);
    assert_ne!(a.targets, c.targets);
    let r = a.train_range();
    assert_eq!(r.end, a.eval_range().start);
}

#[test]
fn proprioception_is_z_scored() {
    let d = generate_dataset(&ArmConfig::default(), 5000, 1).unwrap();
    for c in 0..d.proprio.cols() {
        let col: Vec<f64> = (0..d.len()).map(|r| d.proprio.row(r)[c] as f64).collect();
        let (m, v) = mean_var(&col);
        assert!(m.abs() < 0.02, "column {c} mean {m}");
        assert!((v.sqrt() - 1.0).abs() < 0.05, "column {c} std {}", v.sqrt());
    }
}

#[test]
fn pixels_stay_in_range_on_random_states() {
    let cfg = ArmConfig::default();
    let mut rng = RngStream::new(3, 0);
    let mut draw = || ArmState::at_rest((0..cfg.joints).map(|_| rng.uniform(-cfg.joint_limit, cfg.joint_limit)).collect());
    let (mut lo, mut hi) = (f32::MAX, f32::MIN);
    for _ in 0..1000 {
        let img = render(&WorldState { left: draw(), right: draw() }, &cfg);
        lo = img.iter().copied().fold(lo, f32::min);
        hi = img.iter().copied().fold(hi, f32::max);
    }
    assert!(lo >= -1.0 && hi <= 1.0);
    assert_eq!(lo, -1.0);
    assert!(hi > 0.9, "arms reach full intensity");
}

#[test]
fn dataset_survives_the_container() {
    let d = generate_dataset(&ArmConfig::default(), 100, 2).unwrap();
    let mut buf = Vec::new();
    d.to_container().unwrap().write_to(&mut buf).unwrap();
    let back = Dataset::from_container(&mmlab::formats::Container::read_from(&mut buf.as_slice()).unwrap()).unwrap();
    assert_eq!(back.images, d.images);
    assert_eq!(back.targets, d.targets);
    assert_eq!(back.raw_targets, d.raw_targets);
    assert_eq!(back.n_train, d.n_train);
    assert_eq!(back.config, d.config);
}
