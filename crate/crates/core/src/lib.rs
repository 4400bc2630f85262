//! Recovery of notched ultra-wideband radar spectra with an adversarially
//! trained generator.
//!
//! The pipeline synthesizes point-target range profiles ([`signal`]),
//! notches random frequency sub-bands ([`spectrum`]), trains a fully
//! connected generator against a discriminator or WGAN critic ([`nn`],
//! [`gan`]), and scores recovery by SNR and down-range profiles ([`eval`]).
//! [`pipeline`] strings these into the `synth`/`train`/`recover`/`eval`
//! commands, with file formats in [`format`] and configuration in
//! [`config`].

pub mod config;
pub mod error;
pub mod eval;
pub mod format;
pub mod gan;
pub mod gradcheck;
pub mod nn;
pub mod pipeline;
pub mod seed;
pub mod signal;
pub mod spectrum;

pub use error::{Error, Result};
pub use gan::{GanMode, TrainConfig, TrainerState, TrainingPair};
pub use nn::MlpParams;
pub use signal::{BandParams, Domain, RawSignal};
pub use spectrum::NotchMask;
