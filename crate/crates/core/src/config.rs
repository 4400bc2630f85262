//! Experiment configuration.
//!
//! The file format is one `key = value` pair per line. Blank lines and
//! lines starting with `#` are ignored, and so is anything after a `#` on
//! a value line. Keys are case-sensitive. Unknown or repeated keys are
//! errors. Missing keys keep their defaults, except `seed`, which must be
//! set here or on the command line.
//!
//! | key | default | meaning |
//! |---|---|---|
//! | `n_samples` | 256 | signal length N |
//! | `f_low`, `f_high` | 380e6, 2.08e9 | band edges in Hz |
//! | `freq_resolution` | 9.15e6 | Hz per DFT bin |
//! | `n_targets_min`, `n_targets_max` | 1, 1 | targets per scene |
//! | `n_scenes` | 1 | distinct full-spectrum scenes shared by all splits |
//! | `band_width_bins` | 10 | width of one notch |
//! | `missing_fraction` | 0.9 | share of in-band bins to notch |
//! | `train_pairs`, `val_pairs`, `test_pairs` | 200, 20, 20 | split sizes |
//! | `mode` | wgan | `wgan` or `standard` |
//! | `lambda` | 0.01 | adversarial weight |
//! | `epochs` | 100 | |
//! | `batch_size` | 16 | |
//! | `critic_steps` | 5 | discriminator updates per generator update |
//! | `clip_c` | 0.01 | critic weight clip |
//! | `hidden` | 128 | hidden layer width |
//! | `gen_lr`, `disc_lr` | 5e-4, 5e-4 | RMSProp learning rates |
//! | `decay`, `epsilon` | 0.9, 1e-8 | RMSProp constants |
//! | `checkpoint_every` | 0 | extra checkpoint every K epochs (0 = final only) |
//! | `out_dir` | `runs/default` | output directory |
//! | `seed` | none | master seed, required |

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::gan::{GanMode, TrainConfig};
use crate::signal::BandParams;

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub n_samples: usize,
    pub band: BandParams,
    pub n_targets_min: usize,
    pub n_targets_max: usize,
    pub n_scenes: usize,
    pub band_width_bins: usize,
    pub missing_fraction: f64,
    pub train_pairs: usize,
    pub val_pairs: usize,
    pub test_pairs: usize,
    pub train: TrainConfig,
    pub checkpoint_every: usize,
    pub out_dir: PathBuf,
    pub seed: Option<u64>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            n_samples: 256,
            band: BandParams::UWB,
            n_targets_min: 1,
            n_targets_max: 1,
            n_scenes: 1,
            band_width_bins: 10,
            missing_fraction: 0.9,
            train_pairs: 200,
            val_pairs: 20,
            test_pairs: 20,
            train: TrainConfig::default(),
            checkpoint_every: 0,
            out_dir: PathBuf::from("runs/default"),
            seed: None,
        }
    }
}

fn parse_value<T: std::str::FromStr>(key: &str, value: &str, lineno: usize) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("line {lineno}: invalid value '{value}' for {key}")))
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = ExperimentConfig::default();
        let mut seen = std::collections::HashSet::new();
        for (i, raw) in text.lines().enumerate() {
            let lineno = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .map(|(k, v)| (k.trim(), v.trim()))
                .ok_or_else(|| Error::Config(format!("line {lineno}: expected key = value")))?;
            if !seen.insert(key.to_string()) {
                return Err(Error::Config(format!("line {lineno}: duplicate key {key}")));
            }
            let t = &mut cfg.train;
            match key {
                "n_samples" => cfg.n_samples = parse_value(key, value, lineno)?,
                "f_low" => cfg.band.f_low = parse_value(key, value, lineno)?,
                "f_high" => cfg.band.f_high = parse_value(key, value, lineno)?,
                "freq_resolution" => cfg.band.freq_resolution = parse_value(key, value, lineno)?,
                "n_targets_min" => cfg.n_targets_min = parse_value(key, value, lineno)?,
                "n_targets_max" => cfg.n_targets_max = parse_value(key, value, lineno)?,
                "n_scenes" => cfg.n_scenes = parse_value(key, value, lineno)?,
                "band_width_bins" => cfg.band_width_bins = parse_value(key, value, lineno)?,
                "missing_fraction" => cfg.missing_fraction = parse_value(key, value, lineno)?,
                "train_pairs" => cfg.train_pairs = parse_value(key, value, lineno)?,
                "val_pairs" => cfg.val_pairs = parse_value(key, value, lineno)?,
                "test_pairs" => cfg.test_pairs = parse_value(key, value, lineno)?,
                "mode" => t.mode = value.parse()?,
                "lambda" => t.lambda = parse_value(key, value, lineno)?,
                "epochs" => t.epochs = parse_value(key, value, lineno)?,
                "batch_size" => t.batch_size = parse_value(key, value, lineno)?,
                "critic_steps" => t.critic_steps = parse_value(key, value, lineno)?,
                "clip_c" => t.clip_c = parse_value(key, value, lineno)?,
                "hidden" => t.hidden = parse_value(key, value, lineno)?,
                "gen_lr" => t.gen_lr = parse_value(key, value, lineno)?,
                "disc_lr" => t.disc_lr = parse_value(key, value, lineno)?,
                "decay" => t.decay = parse_value(key, value, lineno)?,
                "epsilon" => t.epsilon = parse_value(key, value, lineno)?,
                "checkpoint_every" => cfg.checkpoint_every = parse_value(key, value, lineno)?,
                "out_dir" => cfg.out_dir = PathBuf::from(value),
                "seed" => cfg.seed = Some(parse_value(key, value, lineno)?),
                other => return Err(Error::Config(format!("line {lineno}: unknown key {other}"))),
            }
        }
        if let Some(seed) = cfg.seed {
            cfg.train.seed = seed;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn set_seed(&mut self, seed: u64) {
        self.seed = Some(seed);
        self.train.seed = seed;
    }

    pub fn seed(&self) -> Result<u64> {
        self.seed
            .ok_or_else(|| Error::Config("a seed is required (config key or --seed)".into()))
    }

    pub fn validate(&self) -> Result<()> {
        self.seed()?;
        self.band.validate()?;
        self.train.validate()?;
        if self.n_samples < 8 {
            return Err(Error::Config(format!(
                "n_samples must be at least 8, got {}",
                self.n_samples
            )));
        }
        if self.band.in_band_bins() > self.n_samples {
            return Err(Error::Config(format!(
                "band needs {} bins but n_samples is {}",
                self.band.in_band_bins(),
                self.n_samples
            )));
        }
        if self.n_targets_min == 0 || self.n_targets_min > self.n_targets_max {
            return Err(Error::Config("need 1 <= n_targets_min <= n_targets_max".into()));
        }
        if self.n_scenes == 0 || self.train_pairs == 0 {
            return Err(Error::Config("n_scenes and train_pairs must be positive".into()));
        }
        if !(self.missing_fraction > 0.0 && self.missing_fraction < 1.0) {
            return Err(Error::Config(format!(
                "missing_fraction must lie in (0, 1), got {}",
                self.missing_fraction
            )));
        }
        let n_band = self.band.in_band_bins();
        if self.band_width_bins == 0 || n_band < 2 * self.band_width_bins {
            return Err(Error::Config(format!(
                "notch width {} infeasible for {n_band} in-band bins",
                self.band_width_bins
            )));
        }
        Ok(())
    }

    /// Canonical text of everything that shapes training, except the epoch
    /// budget, so a run can be resumed with a larger `epochs`.
    pub fn training_fingerprint(&self) -> String {
        let t = &self.train;
        let mut s = String::new();
        let _ = write!(
            s,
            "n_samples={};mode={};lambda={:e};batch_size={};critic_steps={};clip_c={:e};hidden={};\
             gen_lr={:e};disc_lr={:e};decay={:e};epsilon={:e};seed={}",
            self.n_samples,
            t.mode,
            t.lambda,
            t.batch_size,
            t.critic_steps,
            t.clip_c,
            t.hidden,
            t.gen_lr,
            t.disc_lr,
            t.decay,
            t.epsilon,
            t.seed
        );
        s
    }

    pub fn training_hash(&self) -> u64 {
        fnv1a(self.training_fingerprint().as_bytes())
    }

    pub fn with_mode(mut self, mode: GanMode) -> Self {
        self.train.mode = mode;
        self
    }
}

/// 64-bit FNV-1a.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_known_keys() {
        let cfg = ExperimentConfig::parse(
            "# demo\nn_samples = 64\nmode = standard\nlambda = 0.5  # weight\nseed = 9\n\nepochs=3\n",
        )
        .unwrap();
        assert_eq!(cfg.n_samples, 64);
        assert_eq!(cfg.train.mode, GanMode::StandardGan);
        assert_eq!(cfg.train.lambda, 0.5);
        assert_eq!(cfg.train.epochs, 3);
        assert_eq!(cfg.seed, Some(9));
        assert_eq!(cfg.train.seed, 9);
    }

    #[test]
    fn unknown_and_duplicate_keys_fail() {
        assert!(matches!(
            ExperimentConfig::parse("learning_rate = 1"),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            ExperimentConfig::parse("seed = 1\nseed = 2"),
            Err(Error::Config(_))
        ));
        assert!(matches!(ExperimentConfig::parse("seed"), Err(Error::Config(_))));
        assert!(matches!(ExperimentConfig::parse("epochs = -1"), Err(Error::Config(_))));
    }

    #[test]
    fn seed_is_mandatory() {
        let cfg = ExperimentConfig::parse("").unwrap();
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        let mut cfg = cfg;
        cfg.set_seed(4);
        cfg.validate().unwrap();
    }

    #[test]
    fn fingerprint_ignores_epochs() {
        let mut a = ExperimentConfig::default();
        a.set_seed(1);
        let mut b = a.clone();
        b.train.epochs = 7;
        assert_eq!(a.training_hash(), b.training_hash());
        b.train.lambda = 0.2;
        assert_ne!(a.training_hash(), b.training_hash());
    }

    #[test]
    fn fnv_reference() {
        assert_eq!(fnv1a(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a(b"a"), 0xaf63dc4c8601ec8c);
    }
}
