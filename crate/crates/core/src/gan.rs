//! Losses, adversarial training loop and mask-free recovery.
//!
//! The generator maps a packed notched signal (`2N` reals) to a packed
//! estimate of the full-spectrum signal. Its objective is the masked
//! frequency-domain L1 distance to the reference plus `lambda` times the
//! adversarial term. The discriminator is either a sigmoid classifier
//! (`StandardGan`) or a weight-clipped critic (`Wgan`).

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::eval::snr_db_many;
use crate::nn::{
    backward, backward_into, clip_weights, forward, init_params, optimizer_step, Activation, GradBundle, MlpParams,
    OptimizerState,
};
use crate::seed::{derive_seed, Stream};
use crate::signal::{fft_unitary, ifft_unitary, Domain, RawSignal};
use crate::spectrum::{apply_mask, NotchMask};

/// Probabilities are clamped to at least this before taking logs.
pub const LOG_CLAMP: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum GanMode {
    StandardGan,
    Wgan,
}

impl GanMode {
    pub fn tag(self) -> u8 {
        match self {
            GanMode::StandardGan => 0,
            GanMode::Wgan => 1,
        }
    }

    pub fn from_tag(tag: u8) -> Result<Self> {
        match tag {
            0 => Ok(GanMode::StandardGan),
            1 => Ok(GanMode::Wgan),
            _ => Err(Error::Format(format!("unknown mode tag {tag}"))),
        }
    }
}

impl fmt::Display for GanMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GanMode::StandardGan => "standard",
            GanMode::Wgan => "wgan",
        })
    }
}

impl FromStr for GanMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "standard" | "standard_gan" => Ok(GanMode::StandardGan),
            "wgan" => Ok(GanMode::Wgan),
            other => Err(Error::Config(format!("unknown mode '{other}'"))),
        }
    }
}

/// Full-spectrum reference, its notched copy, and the mask relating them.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainingPair {
    pub x: RawSignal,
    pub z: RawSignal,
    pub mask: NotchMask,
}

impl TrainingPair {
    /// Builds the pair by notching `x`.
    pub fn from_reference(x: RawSignal, mask: NotchMask) -> Result<Self> {
        let z = apply_mask(&x, &mask)?;
        Ok(TrainingPair { x, z, mask })
    }

    /// Accepts a stored pair after checking `z = apply_mask(x, mask)` to 1e-9.
    pub fn new(x: RawSignal, z: RawSignal, mask: NotchMask) -> Result<Self> {
        if x.len() != z.len() {
            return Err(Error::Dimension("pair signals differ in length".into()));
        }
        let expected = apply_mask(&x, &mask)?;
        z.expect_domain(Domain::Time)?;
        let worst = expected
            .samples()
            .iter()
            .zip(z.samples())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        if worst > 1e-9 {
            return Err(Error::Format(format!(
                "notched signal disagrees with its mask (max deviation {worst:e})"
            )));
        }
        Ok(TrainingPair { x, z, mask })
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub lambda: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub critic_steps: usize,
    pub mode: GanMode,
    pub clip_c: f64,
    pub hidden: usize,
    pub gen_lr: f64,
    pub disc_lr: f64,
    pub decay: f64,
    pub epsilon: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lambda: 0.01,
            epochs: 100,
            batch_size: 16,
            critic_steps: 5,
            mode: GanMode::Wgan,
            clip_c: 0.01,
            hidden: 128,
            gen_lr: 5e-4,
            disc_lr: 5e-4,
            decay: 0.9,
            epsilon: 1e-8,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad(format!("lambda must be nonnegative, got {}", self.lambda));
        }
        if self.batch_size == 0 || self.critic_steps == 0 || self.hidden == 0 {
            return bad("batch_size, critic_steps and hidden must be positive".into());
        }
        if self.mode == GanMode::Wgan && (self.clip_c.is_nan() || self.clip_c <= 0.0) {
            return bad(format!("clip_c must be positive in wgan mode, got {}", self.clip_c));
        }
        if !(0.0..1.0).contains(&self.decay) || self.epsilon.is_nan() || self.epsilon <= 0.0 {
            return bad("decay must lie in [0, 1) and epsilon be positive".into());
        }
        if !(self.gen_lr >= 0.0 && self.disc_lr >= 0.0) {
            return bad("learning rates must be nonnegative".into());
        }
        Ok(())
    }
}

/// Masked L1 distance between spectra, with its gradient w.r.t. `gen_out`.
///
/// Each available bin contributes the complex modulus of the spectral
/// residual. The gradient is the unit residual phasor on available bins
/// (zero where the residual vanishes) pulled back through the unitary DFT.
pub fn content_loss(gen_out: &RawSignal, x: &RawSignal, m: &NotchMask) -> Result<(f64, RawSignal)> {
    gen_out.expect_domain(Domain::Time)?;
    x.expect_domain(Domain::Time)?;
    if gen_out.len() != x.len() || x.len() != m.len() {
        return Err(Error::Dimension(format!(
            "content loss lengths: output {}, reference {}, mask {}",
            gen_out.len(),
            x.len(),
            m.len()
        )));
    }
    let mut residual: Vec<Complex64> = gen_out.samples().iter().zip(x.samples()).map(|(g, r)| g - r).collect();
    fft_unitary(&mut residual);
    let mut loss = 0.0;
    for (r, &bit) in residual.iter_mut().zip(m.bits()) {
        let modulus = r.norm();
        if bit == 1 && modulus > 0.0 {
            loss += modulus;
            *r /= modulus;
        } else {
            *r = Complex64::new(0.0, 0.0);
        }
    }
    ifft_unitary(&mut residual);
    Ok((loss, RawSignal::new(residual, Domain::Time)?))
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdversarialOutput {
    pub loss: f64,
    /// Gradient w.r.t. the generator output, as `∂/∂re + i ∂/∂im`.
    pub grad: RawSignal,
    /// Whether a probability hit [`LOG_CLAMP`].
    pub clamped: bool,
}

/// `-log D(gen_out)` in standard mode, `-critic(gen_out)` in WGAN mode.
pub fn adversarial_loss_g(disc: &MlpParams, gen_out: &RawSignal, mode: GanMode) -> Result<AdversarialOutput> {
    let packed = gen_out.pack();
    let (out, tape) = forward(disc, &packed)?;
    let score = out[0];
    let (loss, out_grad, clamped) = match mode {
        GanMode::Wgan => (-score, -1.0, false),
        GanMode::StandardGan => {
            if score < LOG_CLAMP {
                (-LOG_CLAMP.ln(), 0.0, true)
            } else {
                (-score.ln(), -1.0 / score, false)
            }
        }
    };
    let g = backward(disc, &tape, &[out_grad])?;
    Ok(AdversarialOutput {
        loss,
        grad: RawSignal::unpack(&g.input, Domain::Time)?,
        clamped,
    })
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct GeneratorLoss {
    pub content: f64,
    pub adversarial: f64,
    pub total: f64,
    pub clamped: bool,
}

/// Content loss plus `lambda` times the adversarial loss, differentiated
/// through the generator.
pub fn generator_loss(
    pair: &TrainingPair,
    gen: &MlpParams,
    disc: &MlpParams,
    cfg: &TrainConfig,
) -> Result<(GeneratorLoss, GradBundle)> {
    let mut grads = GradBundle::zeros_like(gen);
    let loss = generator_loss_into(pair, gen, disc, cfg, &mut grads)?;
    Ok((loss, grads))
}

fn generator_loss_into(
    pair: &TrainingPair,
    gen: &MlpParams,
    disc: &MlpParams,
    cfg: &TrainConfig,
    acc: &mut GradBundle,
) -> Result<GeneratorLoss> {
    let (out, tape) = forward(gen, &pair.z.pack())?;
    let gen_out = RawSignal::unpack(&out, Domain::Time)?;
    let (content, content_grad) = content_loss(&gen_out, &pair.x, &pair.mask)?;
    let mut out_grad = content_grad.pack();
    let mut adversarial = 0.0;
    let mut clamped = false;
    // With lambda = 0 the adversarial term is skipped so the total equals
    // the content loss exactly.
    if cfg.lambda != 0.0 {
        let adv = adversarial_loss_g(disc, &gen_out, cfg.mode)?;
        adversarial = adv.loss;
        clamped = adv.clamped;
        for (o, a) in out_grad.iter_mut().zip(adv.grad.pack()) {
            *o += cfg.lambda * a;
        }
    }
    let total = content + cfg.lambda * adversarial;
    if !total.is_finite() {
        return Err(Error::Training(format!(
            "non-finite generator loss (content {content}, adversarial {adversarial})"
        )));
    }
    acc.input = backward_into(gen, &tape, &out_grad, acc)?;
    Ok(GeneratorLoss {
        content,
        adversarial,
        total,
        clamped,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DiscriminatorLoss {
    pub loss: f64,
    pub clamped: bool,
}

/// Standard mode minimizes `-[log D(x) + log(1 - D(gen_out))]`; WGAN mode
/// minimizes `critic(gen_out) - critic(x)`. The generator output is a constant.
pub fn discriminator_loss(
    x: &RawSignal,
    gen_out: &RawSignal,
    disc: &MlpParams,
    mode: GanMode,
) -> Result<(DiscriminatorLoss, GradBundle)> {
    let mut grads = GradBundle::zeros_like(disc);
    let loss = discriminator_loss_into(x, gen_out, disc, mode, &mut grads)?;
    Ok((loss, grads))
}

fn discriminator_loss_into(
    x: &RawSignal,
    gen_out: &RawSignal,
    disc: &MlpParams,
    mode: GanMode,
    acc: &mut GradBundle,
) -> Result<DiscriminatorLoss> {
    if x.len() != gen_out.len() {
        return Err(Error::Dimension("real and generated signals differ in length".into()));
    }
    let (real_out, real_tape) = forward(disc, &x.pack())?;
    let (fake_out, fake_tape) = forward(disc, &gen_out.pack())?;
    let (real, fake) = (real_out[0], fake_out[0]);
    let (loss, real_grad, fake_grad, clamped) = match mode {
        GanMode::Wgan => (fake - real, -1.0, 1.0, false),
        GanMode::StandardGan => {
            let mut clamped = false;
            let (real_term, real_grad) = if real < LOG_CLAMP {
                clamped = true;
                (-LOG_CLAMP.ln(), 0.0)
            } else {
                (-real.ln(), -1.0 / real)
            };
            let rest = 1.0 - fake;
            let (fake_term, fake_grad) = if rest < LOG_CLAMP {
                clamped = true;
                (-LOG_CLAMP.ln(), 0.0)
            } else {
                (-rest.ln(), 1.0 / rest)
            };
            (real_term + fake_term, real_grad, fake_grad, clamped)
        }
    };
    if !loss.is_finite() {
        return Err(Error::Training(format!("non-finite discriminator loss {loss}")));
    }
    backward_into(disc, &real_tape, &[real_grad], acc)?;
    backward_into(disc, &fake_tape, &[fake_grad], acc)?;
    Ok(DiscriminatorLoss { loss, clamped })
}

/// Generator `[2N, h, h, 2N]`: two relu hidden layers, linear output.
pub fn build_generator(n_samples: usize, hidden: usize, seed: u64) -> Result<MlpParams> {
    init_params(
        &[2 * n_samples, hidden, hidden, 2 * n_samples],
        &[Activation::Relu, Activation::Relu, Activation::Identity],
        seed,
    )
}

/// Discriminator `[2N, h, 1]`: relu hidden layer, sigmoid output in standard
/// mode and a raw score in WGAN mode.
pub fn build_discriminator(n_samples: usize, hidden: usize, mode: GanMode, seed: u64) -> Result<MlpParams> {
    let out = match mode {
        GanMode::StandardGan => Activation::Sigmoid,
        GanMode::Wgan => Activation::Identity,
    };
    init_params(&[2 * n_samples, hidden, 1], &[Activation::Relu, out], seed)
}

/// Epoch means of the training losses.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochMetrics {
    pub content: f64,
    pub adversarial: f64,
    pub discriminator: f64,
    /// Validation SNR in dB, NaN when no validation split was given.
    pub val_snr_db: f64,
    /// Number of log-clamp events during the epoch.
    pub clamped: u64,
}

impl EpochMetrics {
    /// Generator objective: content plus weighted adversarial term.
    pub fn generator(&self, lambda: f64) -> f64 {
        self.content + lambda * self.adversarial
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainerState {
    pub gen: MlpParams,
    pub disc: MlpParams,
    pub gen_opt: OptimizerState,
    pub disc_opt: OptimizerState,
    pub epoch: usize,
    pub loss_history: Vec<EpochMetrics>,
}

impl TrainerState {
    /// Fresh networks for signals of length `n_samples`. In WGAN mode the
    /// critic starts clipped.
    pub fn new(n_samples: usize, cfg: &TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let gen = build_generator(n_samples, cfg.hidden, derive_seed(cfg.seed, Stream::InitGenerator, 0))?;
        let mut disc = build_discriminator(
            n_samples,
            cfg.hidden,
            cfg.mode,
            derive_seed(cfg.seed, Stream::InitDiscriminator, 0),
        )?;
        if cfg.mode == GanMode::Wgan {
            clip_weights(&mut disc, cfg.clip_c);
        }
        Ok(TrainerState {
            gen_opt: OptimizerState::new(&gen, cfg.gen_lr, cfg.decay, cfg.epsilon)?,
            disc_opt: OptimizerState::new(&disc, cfg.disc_lr, cfg.decay, cfg.epsilon)?,
            gen,
            disc,
            epoch: 0,
            loss_history: Vec::new(),
        })
    }

    pub fn n_samples(&self) -> usize {
        self.gen.input_dim() / 2
    }
}

/// Runs one epoch over `pairs` in a shuffled order fixed by `(seed, epoch)`.
///
/// Each minibatch takes `critic_steps` discriminator updates (clipping after
/// each in WGAN mode) and then one generator update. On error the state is
/// left as it was before the epoch.
pub fn train_epoch(state: &mut TrainerState, pairs: &[TrainingPair], cfg: &TrainConfig) -> Result<EpochMetrics> {
    if pairs.is_empty() {
        return Err(Error::Config("no training pairs".into()));
    }
    let n = state.n_samples();
    if let Some(p) = pairs.iter().find(|p| p.len() != n) {
        return Err(Error::Dimension(format!(
            "pair length {} does not match network length {n}",
            p.len()
        )));
    }
    let backup = state.clone();
    match run_epoch(state, pairs, cfg) {
        Ok(m) => {
            state.epoch += 1;
            state.loss_history.push(m);
            Ok(m)
        }
        Err(e) => {
            *state = backup;
            Err(match e {
                Error::Training(msg) => Error::Training(format!("epoch {}: {msg}", state.epoch + 1)),
                other => other,
            })
        }
    }
}

fn run_epoch(state: &mut TrainerState, pairs: &[TrainingPair], cfg: &TrainConfig) -> Result<EpochMetrics> {
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, Stream::Shuffle, state.epoch as u64));
    order.shuffle(&mut rng);

    let mut content_sum = 0.0;
    let mut adv_sum = 0.0;
    let mut gen_count = 0usize;
    let mut disc_sum = 0.0;
    let mut disc_count = 0usize;
    let mut clamped = 0u64;

    for batch in order.chunks(cfg.batch_size) {
        let scale = 1.0 / batch.len() as f64;

        let fakes = batch
            .iter()
            .map(|&i| recover(&state.gen, &pairs[i].z))
            .collect::<Result<Vec<_>>>()?;
        for _ in 0..cfg.critic_steps {
            let mut grads = GradBundle::zeros_like(&state.disc);
            for (&i, fake) in batch.iter().zip(&fakes) {
                let d = discriminator_loss_into(&pairs[i].x, fake, &state.disc, cfg.mode, &mut grads)?;
                disc_sum += d.loss;
                disc_count += 1;
                clamped += d.clamped as u64;
            }
            grads.scale(scale);
            optimizer_step(&mut state.disc, &grads, &mut state.disc_opt)?;
            if cfg.mode == GanMode::Wgan {
                clip_weights(&mut state.disc, cfg.clip_c);
            }
        }

        let mut grads = GradBundle::zeros_like(&state.gen);
        for &i in batch {
            let g = generator_loss_into(&pairs[i], &state.gen, &state.disc, cfg, &mut grads)?;
            content_sum += g.content;
            adv_sum += g.adversarial;
            gen_count += 1;
            clamped += g.clamped as u64;
        }
        grads.scale(scale);
        optimizer_step(&mut state.gen, &grads, &mut state.gen_opt)?;
    }

    Ok(EpochMetrics {
        content: content_sum / gen_count as f64,
        adversarial: adv_sum / gen_count as f64,
        discriminator: disc_sum / disc_count as f64,
        val_snr_db: f64::NAN,
        clamped,
    })
}

/// Trains until `state.epoch == cfg.epochs`, scoring the validation pairs
/// after each epoch. `on_epoch` sees the state after every epoch.
pub fn fit<F>(
    state: &mut TrainerState,
    train: &[TrainingPair],
    val: &[TrainingPair],
    cfg: &TrainConfig,
    mut on_epoch: F,
) -> Result<()>
where
    F: FnMut(&TrainerState) -> Result<()>,
{
    while state.epoch < cfg.epochs {
        train_epoch(state, train, cfg)?;
        if !val.is_empty() {
            let snr = validation_snr(&state.gen, val)?;
            if let Some(last) = state.loss_history.last_mut() {
                last.val_snr_db = snr;
            }
        }
        on_epoch(state)?;
    }
    Ok(())
}

/// SNR of the recovered validation set, pooled over all pairs.
pub fn validation_snr(gen: &MlpParams, val: &[TrainingPair]) -> Result<f64> {
    let recovered = val.iter().map(|p| recover(gen, &p.z)).collect::<Result<Vec<_>>>()?;
    let refs: Vec<&RawSignal> = val.iter().map(|p| &p.x).collect();
    let outs: Vec<&RawSignal> = recovered.iter().collect();
    snr_db_many(&refs, &outs)
}

/// Estimates the full-spectrum signal from notched data alone.
pub fn recover(gen: &MlpParams, z: &RawSignal) -> Result<RawSignal> {
    z.expect_domain(Domain::Time)?;
    if 2 * z.len() != gen.input_dim() || gen.output_dim() != gen.input_dim() {
        return Err(Error::Dimension(format!(
            "generator maps {} -> {} reals, signal packs to {}",
            gen.input_dim(),
            gen.output_dim(),
            2 * z.len()
        )));
    }
    let (out, _) = forward(gen, &z.pack())?;
    RawSignal::unpack(&out, Domain::Time)
}
