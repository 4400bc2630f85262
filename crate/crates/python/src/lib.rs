//! Python bindings for the signal, notching, training and metric code.
//!
//! Signals cross the boundary as lists of Python `complex`; masks as lists
//! of 0/1 ints covering every DFT bin.

use std::path::PathBuf;

use num_complex::Complex64;
use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;

use sargan_core::config::ExperimentConfig;
use sargan_core::format::{read_checkpoint, write_checkpoint, Checkpoint};
use sargan_core::{eval, gan, pipeline, signal, spectrum};
use sargan_core::{BandParams, Domain, Error, GanMode, NotchMask, RawSignal, TrainConfig, TrainerState, TrainingPair};

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Io(io) => PyIOError::new_err(io.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn time_signal(samples: Vec<Complex64>) -> PyResult<RawSignal> {
    RawSignal::new(samples, Domain::Time).map_err(to_py)
}

fn mask_from_bits(bits: Vec<u8>) -> PyResult<NotchMask> {
    let n = bits.len();
    NotchMask::from_bits(bits, 0..n, 1, 0.5).map_err(to_py)
}

/// Render a random point-target scene as a time-domain signal.
#[pyfunction]
#[pyo3(signature = (n_targets, n_samples, seed, f_low=380.0e6, f_high=2.08e9, freq_resolution=9.15e6))]
fn render_scene(
    n_targets: usize,
    n_samples: usize,
    seed: u64,
    f_low: f64,
    f_high: f64,
    freq_resolution: f64,
) -> PyResult<Vec<Complex64>> {
    let band = BandParams::new(f_low, f_high, freq_resolution).map_err(to_py)?;
    let scene = signal::synth_scene(n_targets, n_samples, band, seed).map_err(to_py)?;
    Ok(signal::render_raw(&scene).map_err(to_py)?.into_samples())
}

/// Unitary forward DFT.
#[pyfunction]
fn dft_forward(x: Vec<Complex64>) -> PyResult<Vec<Complex64>> {
    Ok(signal::dft_forward(&time_signal(x)?).map_err(to_py)?.into_samples())
}

/// Unitary inverse DFT.
#[pyfunction]
fn dft_inverse(s: Vec<Complex64>) -> PyResult<Vec<Complex64>> {
    let s = RawSignal::new(s, Domain::Frequency).map_err(to_py)?;
    Ok(signal::dft_inverse(&s).map_err(to_py)?.into_samples())
}

/// Random notch mask over `n_bins` bins; notches fall in `[0, band_bins)`.
#[pyfunction]
#[pyo3(signature = (n_bins, band_width_bins, missing_fraction, seed, band_bins=None))]
fn gen_notch_mask(
    n_bins: usize,
    band_width_bins: usize,
    missing_fraction: f64,
    seed: u64,
    band_bins: Option<usize>,
) -> PyResult<Vec<u8>> {
    let band = 0..band_bins.unwrap_or(n_bins);
    let m = spectrum::gen_notch_mask_in_band(n_bins, band, band_width_bins, missing_fraction, seed).map_err(to_py)?;
    Ok(m.bits().to_vec())
}

#[pyfunction]
fn apply_mask(x: Vec<Complex64>, mask: Vec<u8>) -> PyResult<Vec<Complex64>> {
    let m = mask_from_bits(mask)?;
    Ok(spectrum::apply_mask(&time_signal(x)?, &m)
        .map_err(to_py)?
        .into_samples())
}

#[pyfunction]
fn rms(x: Vec<Complex64>) -> PyResult<f64> {
    Ok(eval::rms(&time_signal(x)?))
}

#[pyfunction]
fn snr_db(x: Vec<Complex64>, xhat: Vec<Complex64>) -> PyResult<f64> {
    eval::snr_db(&time_signal(x)?, &time_signal(xhat)?).map_err(to_py)
}

/// Returns `(snr_corrupted_db, snr_recovered_db, gain_db)`.
#[pyfunction]
fn recovery_gain(x: Vec<Complex64>, z: Vec<Complex64>, zhat: Vec<Complex64>) -> PyResult<(f64, f64, f64)> {
    let r = eval::recovery_gain(&time_signal(x)?, &time_signal(z)?, &time_signal(zhat)?).map_err(to_py)?;
    Ok((r.snr_corrupted_db, r.snr_recovered_db, r.gain_db))
}

#[pyfunction]
fn downrange_profile_db(x: Vec<Complex64>) -> PyResult<Vec<f64>> {
    eval::downrange_profile_db(&time_signal(x)?).map_err(to_py)
}

/// Masked frequency-domain L1 loss.
#[pyfunction]
fn content_loss(gen_out: Vec<Complex64>, x: Vec<Complex64>, mask: Vec<u8>) -> PyResult<f64> {
    let m = mask_from_bits(mask)?;
    let (loss, _) = gan::content_loss(&time_signal(gen_out)?, &time_signal(x)?, &m).map_err(to_py)?;
    Ok(loss)
}

/// Adversarial trainer over `(x, z, mask)` training triples.
#[pyclass(module = "sargan")]
struct Trainer {
    cfg: TrainConfig,
    state: TrainerState,
}

fn to_pairs(pairs: Vec<(Vec<Complex64>, Vec<Complex64>, Vec<u8>)>) -> PyResult<Vec<TrainingPair>> {
    pairs
        .into_iter()
        .map(|(x, z, m)| TrainingPair::new(time_signal(x)?, time_signal(z)?, mask_from_bits(m)?).map_err(to_py))
        .collect()
}

#[pymethods]
impl Trainer {
    #[new]
    #[pyo3(signature = (n_samples, seed=0, mode="wgan", lambda_=0.01, hidden=128, batch_size=16, critic_steps=5, clip_c=0.01, gen_lr=5e-4, disc_lr=5e-4))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        n_samples: usize,
        seed: u64,
        mode: &str,
        lambda_: f64,
        hidden: usize,
        batch_size: usize,
        critic_steps: usize,
        clip_c: f64,
        gen_lr: f64,
        disc_lr: f64,
    ) -> PyResult<Self> {
        let cfg = TrainConfig {
            lambda: lambda_,
            mode: mode.parse::<GanMode>().map_err(to_py)?,
            hidden,
            batch_size,
            critic_steps,
            clip_c,
            gen_lr,
            disc_lr,
            seed,
            ..TrainConfig::default()
        };
        let state = TrainerState::new(n_samples, &cfg).map_err(to_py)?;
        Ok(Trainer { cfg, state })
    }

    /// Runs one epoch; returns `(content, adversarial, discriminator)` means.
    fn train_epoch(&mut self, pairs: Vec<(Vec<Complex64>, Vec<Complex64>, Vec<u8>)>) -> PyResult<(f64, f64, f64)> {
        let pairs = to_pairs(pairs)?;
        let m = gan::train_epoch(&mut self.state, &pairs, &self.cfg).map_err(to_py)?;
        Ok((m.content, m.adversarial, m.discriminator))
    }

    /// Estimates the full-spectrum signal. Takes no mask.
    fn recover(&self, z: Vec<Complex64>) -> PyResult<Vec<Complex64>> {
        Ok(gan::recover(&self.state.gen, &time_signal(z)?)
            .map_err(to_py)?
            .into_samples())
    }

    #[getter]
    fn epoch(&self) -> usize {
        self.state.epoch
    }

    #[getter]
    fn loss_history(&self) -> Vec<(f64, f64, f64)> {
        self.state
            .loss_history
            .iter()
            .map(|m| (m.content, m.adversarial, m.discriminator))
            .collect()
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        let ck = Checkpoint {
            mode: self.cfg.mode,
            config_hash: 0,
            state: self.state.clone(),
        };
        write_checkpoint(&path, &ck).map_err(to_py)
    }
}

/// Recovers with a checkpoint written by the CLI or `Trainer.save`.
#[pyfunction]
fn recover_with_checkpoint(checkpoint: PathBuf, z: Vec<Complex64>) -> PyResult<Vec<Complex64>> {
    let ck = read_checkpoint(&checkpoint).map_err(to_py)?;
    Ok(gan::recover(&ck.state.gen, &time_signal(z)?)
        .map_err(to_py)?
        .into_samples())
}

/// Writes train/val/test datasets for a config file; returns split sizes.
#[pyfunction]
#[pyo3(signature = (config, out_dir, seed=None))]
fn synth(config: PathBuf, out_dir: PathBuf, seed: Option<u64>) -> PyResult<(usize, usize, usize)> {
    let mut cfg = ExperimentConfig::load(&config).map_err(to_py)?;
    if let Some(s) = seed {
        cfg.set_seed(s);
    }
    let splits = pipeline::cmd_synth(&cfg, &out_dir).map_err(to_py)?;
    Ok((splits.train.len(), splits.val.len(), splits.test.len()))
}

#[pymodule]
fn sargan(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(render_scene, m)?)?;
    m.add_function(wrap_pyfunction!(dft_forward, m)?)?;
    m.add_function(wrap_pyfunction!(dft_inverse, m)?)?;
    m.add_function(wrap_pyfunction!(gen_notch_mask, m)?)?;
    m.add_function(wrap_pyfunction!(apply_mask, m)?)?;
    m.add_function(wrap_pyfunction!(rms, m)?)?;
    m.add_function(wrap_pyfunction!(snr_db, m)?)?;
    m.add_function(wrap_pyfunction!(recovery_gain, m)?)?;
    m.add_function(wrap_pyfunction!(downrange_profile_db, m)?)?;
    m.add_function(wrap_pyfunction!(content_loss, m)?)?;
    m.add_function(wrap_pyfunction!(recover_with_checkpoint, m)?)?;
    m.add_function(wrap_pyfunction!(synth, m)?)?;
    m.add_class::<Trainer>()?;
    Ok(())
}
