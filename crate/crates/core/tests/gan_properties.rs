//! Loss and training-loop invariants.

use num_complex::Complex64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sargan_core::gan::{
    content_loss, generator_loss, recover, train_epoch, GanMode, TrainConfig, TrainerState, TrainingPair,
};
use sargan_core::nn::MlpParams;
use sargan_core::signal::{dft_forward, dft_inverse};
use sargan_core::spectrum::gen_notch_mask;
use sargan_core::{RawSignal, Result};

fn random_signal(n: usize, rng: &mut ChaCha8Rng) -> RawSignal {
    RawSignal::time(
        (0..n)
            .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect(),
    )
    .unwrap()
}

fn pairs(n: usize, count: usize, seed: u64) -> Vec<TrainingPair> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = random_signal(n, &mut rng);
    (0..count)
        .map(|i| TrainingPair::from_reference(x.clone(), gen_notch_mask(n, 1, 0.4, seed + i as u64).unwrap()).unwrap())
        .collect()
}

fn small_cfg(mode: GanMode) -> TrainConfig {
    TrainConfig {
        mode,
        hidden: 12,
        batch_size: 4,
        epochs: 5,
        seed: 21,
        ..TrainConfig::default()
    }
}

#[test]
fn recover_takes_only_the_corrupted_signal() {
    let _: fn(&MlpParams, &RawSignal) -> Result<RawSignal> = recover;
}

#[test]
fn loss_is_linear_in_lambda() {
    let pair = &pairs(8, 1, 1)[0];
    for mode in [GanMode::Wgan, GanMode::StandardGan] {
        let state = TrainerState::new(8, &small_cfg(mode)).unwrap();
        for lambda in [0.0, 0.5, 1.0, 2.0] {
            let cfg = TrainConfig {
                lambda,
                ..small_cfg(mode)
            };
            let (loss, _) = generator_loss(pair, &state.gen, &state.disc, &cfg).unwrap();
            let (content, _) = content_loss(&recover(&state.gen, &pair.z).unwrap(), &pair.x, &pair.mask).unwrap();
            assert!((loss.content - content).abs() < 1e-12);
            assert!((loss.total - (loss.content + lambda * loss.adversarial)).abs() < 1e-12);
            if lambda == 0.0 {
                assert_eq!(loss.total, loss.content);
            }
        }
    }
}

#[test]
fn critic_stays_inside_the_clip_box() {
    let cfg = TrainConfig {
        disc_lr: 0.05,
        ..small_cfg(GanMode::Wgan)
    };
    let data = pairs(8, 10, 3);
    let mut state = TrainerState::new(8, &cfg).unwrap();
    assert!(state.disc.max_abs() <= cfg.clip_c);
    for _ in 0..cfg.epochs {
        train_epoch(&mut state, &data, &cfg).unwrap();
        assert!(state.disc.max_abs() <= cfg.clip_c);
    }
}

#[test]
fn training_is_deterministic() {
    for mode in [GanMode::Wgan, GanMode::StandardGan] {
        let cfg = small_cfg(mode);
        let data = pairs(8, 9, 4);
        let run = || {
            let mut s = TrainerState::new(8, &cfg).unwrap();
            for _ in 0..cfg.epochs {
                train_epoch(&mut s, &data, &cfg).unwrap();
            }
            s
        };
        let a = run();
        let b = run();
        assert_eq!(a.gen, b.gen);
        assert_eq!(a.disc, b.disc);
        assert_eq!(a.gen_opt, b.gen_opt);
        assert_eq!(format!("{:?}", a.loss_history), format!("{:?}", b.loss_history));
        assert_eq!(
            a.gen.to_flat().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            b.gen.to_flat().iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
    }
}

#[test]
fn zero_learning_rate_freezes_parameters() {
    for mode in [GanMode::Wgan, GanMode::StandardGan] {
        let cfg = TrainConfig {
            gen_lr: 0.0,
            disc_lr: 0.0,
            ..small_cfg(mode)
        };
        let data = pairs(8, 6, 5);
        let mut state = TrainerState::new(8, &cfg).unwrap();
        let gen = state.gen.clone();
        let disc = state.disc.clone();
        for _ in 0..3 {
            let m = train_epoch(&mut state, &data, &cfg).unwrap();
            assert!(m.content.is_finite() && m.adversarial.is_finite() && m.discriminator.is_finite());
        }
        assert_eq!(state.gen, gen);
        assert_eq!(state.disc, disc);
        assert_eq!(state.loss_history.len(), 3);
    }
}

#[test]
fn content_only_training_fits_a_single_pair() {
    let cfg = TrainConfig {
        lambda: 0.0,
        batch_size: 1,
        epochs: 200,
        mode: GanMode::Wgan,
        seed: 21,
        ..TrainConfig::default()
    };
    let data = pairs(8, 1, 6);
    let mut state = TrainerState::new(8, &cfg).unwrap();
    for _ in 0..cfg.epochs {
        train_epoch(&mut state, &data, &cfg).unwrap();
    }
    let first = state.loss_history[0].content;
    let last = state.loss_history.last().unwrap().content;
    assert!(last < 0.05 * first, "{first} -> {last}");
}

#[test]
fn wrong_length_pairs_are_rejected_without_side_effects() {
    let cfg = small_cfg(GanMode::Wgan);
    let mut state = TrainerState::new(8, &cfg).unwrap();
    let before = state.clone();
    assert!(train_epoch(&mut state, &pairs(4, 2, 7), &cfg).is_err());
    assert_eq!(state, before);
}

proptest! {
    #[test]
    fn content_loss_ignores_notched_bins(seed in any::<u64>(), frac in 0.1f64..0.9) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = 16;
        let x = random_signal(n, &mut rng);
        let g = random_signal(n, &mut rng);
        let m = gen_notch_mask(n, 2, frac, seed).unwrap();
        let (base, _) = content_loss(&g, &x, &m).unwrap();
        prop_assert!(base >= 0.0);

        let mut spec = dft_forward(&g).unwrap().into_samples();
        for (k, s) in spec.iter_mut().enumerate() {
            if !m.is_available(k) {
                *s += Complex64::new(rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0));
            }
        }
        let perturbed = dft_inverse(&RawSignal::new(spec, sargan_core::Domain::Frequency).unwrap()).unwrap();
        let (moved, _) = content_loss(&perturbed, &x, &m).unwrap();
        prop_assert!((moved - base).abs() < 1e-12);
    }

    #[test]
    fn content_loss_vanishes_at_the_reference(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = random_signal(8, &mut rng);
        let m = gen_notch_mask(8, 1, 0.5, seed).unwrap();
        let (loss, grad) = content_loss(&x, &x, &m).unwrap();
        prop_assert!(loss.abs() < 1e-12);
        prop_assert!(grad.energy() < 1e-24);
    }
}
