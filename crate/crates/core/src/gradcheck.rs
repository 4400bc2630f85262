//! Finite-difference checks of every training loss on tiny networks.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::gan::{
    adversarial_loss_g, build_discriminator, content_loss, discriminator_loss, generator_loss, recover, GanMode,
    TrainConfig, TrainingPair,
};
use crate::nn::{backward, forward, grad_check, init_params, Activation, GradBundle, GradCheckReport, MlpParams};
use crate::signal::{Domain, RawSignal};
use crate::spectrum::gen_notch_mask;

pub const FD_STEP: f64 = 1e-6;
pub const FD_TOLERANCE: f64 = 1e-4;

#[derive(Clone, Debug)]
pub struct NamedCheck {
    pub name: String,
    pub n_params: usize,
    pub report: GradCheckReport,
}

fn random_signal(n: usize, rng: &mut ChaCha8Rng) -> RawSignal {
    RawSignal::new(
        (0..n)
            .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect(),
        Domain::Time,
    )
    .expect("finite samples")
}

/// Gradient of the generator-side adversarial loss w.r.t. generator params.
fn adversarial_through_generator(
    gen: &MlpParams,
    disc: &MlpParams,
    z: &RawSignal,
    mode: GanMode,
) -> Result<(f64, GradBundle)> {
    let (out, tape) = forward(gen, &z.pack())?;
    let gen_out = RawSignal::unpack(&out, Domain::Time)?;
    let adv = adversarial_loss_g(disc, &gen_out, mode)?;
    Ok((adv.loss, backward(gen, &tape, &adv.grad.pack())?))
}

/// Runs the full suite for signals of length `n` and hidden width `hidden`.
pub fn gradient_suite(n: usize, hidden: usize, seed: u64) -> Result<Vec<NamedCheck>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gen = build_generator_small(n, hidden, rng.gen())?;
    let x = random_signal(n, &mut rng);
    let mask = gen_notch_mask(n, 1, 0.5, rng.gen())?;
    let pair = TrainingPair::from_reference(x, mask)?;

    let mut checks = Vec::new();
    let mut push = |name: String, p: &MlpParams, report: GradCheckReport| {
        checks.push(NamedCheck {
            name,
            n_params: p.num_params(),
            report,
        })
    };

    let content = |g: &MlpParams| -> Result<(f64, GradBundle)> {
        let (out, tape) = forward(g, &pair.z.pack())?;
        let gen_out = RawSignal::unpack(&out, Domain::Time)?;
        let (loss, grad) = content_loss(&gen_out, &pair.x, &pair.mask)?;
        Ok((loss, backward(g, &tape, &grad.pack())?))
    };
    let (_, analytic) = content(&gen)?;
    push(
        format!("content loss, N={n}"),
        &gen,
        grad_check(
            |g| content(g).map(|r| r.0).unwrap_or(f64::NAN),
            &analytic,
            &gen,
            FD_STEP,
            FD_TOLERANCE,
        ),
    );

    for mode in [GanMode::StandardGan, GanMode::Wgan] {
        let disc = build_discriminator(n, hidden.min(4), mode, rng.gen())?;

        let (_, analytic) = adversarial_through_generator(&gen, &disc, &pair.z, mode)?;
        push(
            format!("adversarial loss ({mode}), N={n}"),
            &gen,
            grad_check(
                |g| {
                    adversarial_through_generator(g, &disc, &pair.z, mode)
                        .map(|r| r.0)
                        .unwrap_or(f64::NAN)
                },
                &analytic,
                &gen,
                FD_STEP,
                FD_TOLERANCE,
            ),
        );

        let cfg = TrainConfig {
            lambda: 0.7,
            mode,
            ..TrainConfig::default()
        };
        let (_, analytic) = generator_loss(&pair, &gen, &disc, &cfg)?;
        push(
            format!("generator loss ({mode}, lambda=0.7), N={n}"),
            &gen,
            grad_check(
                |g| {
                    generator_loss(&pair, g, &disc, &cfg)
                        .map(|r| r.0.total)
                        .unwrap_or(f64::NAN)
                },
                &analytic,
                &gen,
                FD_STEP,
                FD_TOLERANCE,
            ),
        );

        let fake = recover(&gen, &pair.z)?;
        let (_, analytic) = discriminator_loss(&pair.x, &fake, &disc, mode)?;
        push(
            format!("discriminator loss ({mode}), N={n}"),
            &disc,
            grad_check(
                |d| {
                    discriminator_loss(&pair.x, &fake, d, mode)
                        .map(|r| r.0.loss)
                        .unwrap_or(f64::NAN)
                },
                &analytic,
                &disc,
                FD_STEP,
                FD_TOLERANCE,
            ),
        );
    }
    Ok(checks)
}

/// Two-layer generator `[2N, hidden, 2N]` keeping the check under 200 params.
fn build_generator_small(n: usize, hidden: usize, seed: u64) -> Result<MlpParams> {
    init_params(&[2 * n, hidden, 2 * n], &[Activation::Relu, Activation::Identity], seed)
}
