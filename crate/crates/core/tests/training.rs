//! Texture targets, determinism and convergence of the training loop.

use std::f64::consts::PI;

use mtt_core::audio::{pink_noise, AudioClip};
use mtt_core::colormap::{Colormap, RgbImage};
use mtt_core::loss::{LossNetConfig, LossNetwork};
use mtt_core::nn::TransferModel;
use mtt_core::pipeline::audio2img;
use mtt_core::train::{
    prepare_texture_targets, synthetic_content, synthetic_texture, train, TrainConfig, TrainLog,
};
use mtt_core::{Error, DEFAULT_SAMPLE_RATE as RATE};

fn content_images(cfg: &TrainConfig, count: usize) -> Vec<RgbImage> {
    let cm = Colormap::fire();
    synthetic_content(count, 1.0, RATE, 1)
        .unwrap()
        .iter()
        .map(|c| audio2img(c, &cfg.convert, &cm).unwrap().image)
        .collect()
}

fn run(cfg: &TrainConfig, images: &[RgbImage]) -> TrainLog {
    let cm = Colormap::fire();
    let texture = synthetic_texture(3.0, RATE, 2).unwrap();
    let mut net = LossNetwork::new(cfg.loss_net.clone()).unwrap();
    let targets = prepare_texture_targets(&texture, &cm, cfg, &mut net).unwrap();
    let mut model = TransferModel::new(&cfg.arch, cfg.seed).unwrap();
    train(&mut model, images, &targets, &mut net, cfg, |_| Ok(())).unwrap()
}

fn median(v: &[f64]) -> f64 {
    let mut v = v.to_vec();
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

#[test]
fn identical_runs_give_identical_curves_and_loss_falls() {
    let cfg = TrainConfig { steps_per_epoch: Some(40), batch_size: 2, seed: 3, ..TrainConfig::desk() };
    let images = content_images(&cfg, 4);
    let a = run(&cfg, &images);
    let b = run(&cfg, &images);
    assert_eq!(a, b);
    let totals = a.totals();
    assert_eq!(totals.len(), 40);
    assert!(median(&totals[30..]) < median(&totals[..10]), "{totals:?}");
}

#[test]
fn texture_targets_are_reproducible_and_discriminative() {
    let cfg = TrainConfig::desk();
    let cm = Colormap::fire();
    let mut net = LossNetwork::new(LossNetConfig::default()).unwrap();
    let noise = pink_noise(20.0, RATE, 4).unwrap();
    let first = noise.window(0, 10 * RATE as usize);
    let second = noise.window(10 * RATE as usize, 10 * RATE as usize);
    let sine = AudioClip::new(
        (0..10 * RATE as usize).map(|i| 0.5 * (2.0 * PI * 440.0 * i as f64 / RATE as f64).sin()).collect(),
        RATE,
    )
    .unwrap();
    let a = prepare_texture_targets(&first, &cm, &cfg, &mut net).unwrap();
    let again = prepare_texture_targets(&first, &cm, &cfg, &mut net).unwrap();
    assert_eq!(a, again);
    let b = prepare_texture_targets(&second, &cm, &cfg, &mut net).unwrap();
    let s = prepare_texture_targets(&sine, &cm, &cfg, &mut net).unwrap();
    let (same, different) = (a.relative_distance(&b), a.relative_distance(&s));
    assert!(same < different, "pink/pink {same} vs pink/sine {different}");

    let silence = AudioClip::silence(RATE as usize, RATE).unwrap();
    assert!(matches!(prepare_texture_targets(&silence, &cm, &cfg, &mut net), Err(Error::Silent(_))));
}

#[test]
fn zero_content_weight_drops_the_content_term() {
    let mut cfg = TrainConfig { steps_per_epoch: Some(2), batch_size: 1, ..TrainConfig::desk() };
    cfg.weights.alpha = 0.0;
    let images = content_images(&cfg, 1);
    let log = run(&cfg, &images);
    assert!(log.records.iter().all(|r| r.parts.content == 0.0));
}

#[test]
fn invalid_runs_are_rejected() {
    let cfg = TrainConfig { epochs: 0, ..TrainConfig::desk() };
    let mut net = LossNetwork::new(LossNetConfig::default()).unwrap();
    let mut model = TransferModel::new(&cfg.arch, 0).unwrap();
    let images = content_images(&TrainConfig::desk(), 1);
    let targets = prepare_texture_targets(&synthetic_texture(1.0, RATE, 1).unwrap(), &Colormap::fire(), &cfg, &mut net)
        .unwrap();
    assert!(train(&mut model, &images, &targets, &mut net, &cfg, |_| Ok(())).is_err());
    let cfg = TrainConfig::desk();
    assert!(train(&mut model, &[], &targets, &mut net, &cfg, |_| Ok(())).is_err());
}
