//! The end-to-end commands: synthesize, train, recover, evaluate.
//!
//! Each `cmd_*` function is what the CLI subcommand of the same name runs.

use std::collections::HashSet;
use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::eval::{downrange_profile_db, evaluate, profiles_svg, write_profiles_csv, EvalReport, PROFILE_FLOOR_DB};
use crate::format::{
    metrics_csv, read_checkpoint, read_dataset, write_atomic, write_checkpoint, write_dataset, Checkpoint,
};
use crate::gan::{fit, recover, TrainerState, TrainingPair};
use crate::seed::{derive_seed, Stream};
use crate::signal::{render_raw, synth_scene, Domain, RawSignal};
use crate::spectrum::{gen_notch_mask_in_band, NotchMask};

pub const TRAIN_FILE: &str = "train.sgds";
pub const VAL_FILE: &str = "val.sgds";
pub const TEST_FILE: &str = "test.sgds";
pub const CHECKPOINT_FILE: &str = "checkpoint.sgck";
pub const METRICS_FILE: &str = "metrics.csv";

#[derive(Clone, Debug, PartialEq)]
pub struct Splits {
    pub train: Vec<TrainingPair>,
    pub val: Vec<TrainingPair>,
    pub test: Vec<TrainingPair>,
}

/// Renders the configured scenes and notches them into three splits.
///
/// Every split reuses the same full-spectrum scenes (pair `i` uses scene
/// `i mod n_scenes`); only the notch patterns differ. Validation and test
/// masks are redrawn until they differ from every training mask.
pub fn synthesize(cfg: &ExperimentConfig) -> Result<Splits> {
    cfg.validate()?;
    let seed = cfg.seed()?;
    let n = cfg.n_samples;
    let span = (cfg.n_targets_max - cfg.n_targets_min + 1) as u64;
    let scenes = (0..cfg.n_scenes as u64)
        .map(|j| {
            let s = derive_seed(seed, Stream::Scene, j);
            let n_targets = cfg.n_targets_min + ((s >> 32) % span) as usize;
            render_raw(&synth_scene(n_targets, n, cfg.band, s)?)
        })
        .collect::<Result<Vec<_>>>()?;

    let band = 0..cfg.band.in_band_bins();
    let mask = |stream, index| {
        gen_notch_mask_in_band(
            n,
            band.clone(),
            cfg.band_width_bins,
            cfg.missing_fraction,
            derive_seed(seed, stream, index),
        )
    };

    let train_masks = (0..cfg.train_pairs as u64)
        .map(|i| mask(Stream::MaskTrain, i))
        .collect::<Result<Vec<_>>>()?;
    let seen: HashSet<&[u8]> = train_masks.iter().map(NotchMask::bits).collect();
    let held_out = |stream, count: usize| -> Result<Vec<NotchMask>> {
        let mut out = Vec::with_capacity(count);
        let mut counter = 0u64;
        while out.len() < count {
            let m = mask(stream, counter)?;
            counter += 1;
            if !seen.contains(m.bits()) {
                out.push(m);
            }
        }
        Ok(out)
    };
    let val_masks = held_out(Stream::MaskVal, cfg.val_pairs)?;
    let test_masks = held_out(Stream::MaskTest, cfg.test_pairs)?;

    let build = |masks: Vec<NotchMask>| -> Result<Vec<TrainingPair>> {
        masks
            .into_iter()
            .enumerate()
            .map(|(i, m)| TrainingPair::from_reference(scenes[i % scenes.len()].clone(), m))
            .collect()
    };
    Ok(Splits {
        train: build(train_masks)?,
        val: build(val_masks)?,
        test: build(test_masks)?,
    })
}

/// Writes `train.sgds`, `val.sgds` and `test.sgds` under `out_dir`.
/// Empty splits are not written.
pub fn cmd_synth(cfg: &ExperimentConfig, out_dir: &Path) -> Result<Splits> {
    let splits = synthesize(cfg)?;
    fs::create_dir_all(out_dir)?;
    for (name, pairs) in [
        (TRAIN_FILE, &splits.train),
        (VAL_FILE, &splits.val),
        (TEST_FILE, &splits.test),
    ] {
        if !pairs.is_empty() {
            write_dataset(&out_dir.join(name), pairs)?;
        }
    }
    Ok(splits)
}

fn load_optional(path: &Path) -> Result<Vec<TrainingPair>> {
    if path.exists() {
        read_dataset(path)
    } else {
        Ok(Vec::new())
    }
}

/// Trains on `data_dir/train.sgds` (scoring `val.sgds` when present) and
/// writes `checkpoint.sgck` plus `metrics.csv` to `out_dir`.
pub fn cmd_train(
    cfg: &ExperimentConfig,
    data_dir: &Path,
    out_dir: &Path,
    resume: Option<&Path>,
) -> Result<TrainerState> {
    cfg.validate()?;
    let train = read_dataset(&data_dir.join(TRAIN_FILE))?;
    let val = load_optional(&data_dir.join(VAL_FILE))?;
    for p in train.iter().chain(&val) {
        if p.len() != cfg.n_samples {
            return Err(Error::Config(format!(
                "dataset has N = {} but config has n_samples = {}",
                p.len(),
                cfg.n_samples
            )));
        }
    }
    let hash = cfg.training_hash();
    let mut state = match resume {
        Some(path) => {
            let ck = read_checkpoint(path)?;
            if ck.config_hash != hash || ck.mode != cfg.train.mode {
                return Err(Error::Config(format!(
                    "checkpoint {} was written under a different training configuration",
                    path.display()
                )));
            }
            ck.state
        }
        None => TrainerState::new(cfg.n_samples, &cfg.train)?,
    };

    fs::create_dir_all(out_dir)?;
    let mode = cfg.train.mode;
    let every = cfg.checkpoint_every;
    fit(&mut state, &train, &val, &cfg.train, |s| {
        if every > 0 && s.epoch % every == 0 {
            let ck = Checkpoint {
                mode,
                config_hash: hash,
                state: s.clone(),
            };
            write_checkpoint(&out_dir.join(format!("checkpoint_epoch_{:04}.sgck", s.epoch)), &ck)?;
        }
        Ok(())
    })?;

    let ck = Checkpoint {
        mode,
        config_hash: hash,
        state,
    };
    write_checkpoint(&out_dir.join(CHECKPOINT_FILE), &ck)?;
    write_atomic(
        &out_dir.join(METRICS_FILE),
        metrics_csv(&ck.state.loss_history).as_bytes(),
    )?;
    Ok(ck.state)
}

/// Recovers the signal in `input` (an `index,real,imag` CSV) and writes the
/// estimate to `output` in the same format.
pub fn cmd_recover(checkpoint: &Path, input: &Path, output: &Path) -> Result<RawSignal> {
    let ck = read_checkpoint(checkpoint)?;
    let file = fs::File::open(input)?;
    let z = RawSignal::read_csv(BufReader::new(file), Domain::Time)?;
    if z.len() != ck.n_samples() {
        return Err(Error::Dimension(format!(
            "input has {} samples, model expects {}",
            z.len(),
            ck.n_samples()
        )));
    }
    let zhat = recover(&ck.state.gen, &z)?;
    let mut buf = Vec::new();
    zhat.write_csv(&mut buf)?;
    write_atomic(output, &buf)?;
    Ok(zhat)
}

/// Evaluates `checkpoint` on `data_dir/test.sgds`.
pub fn cmd_eval(checkpoint: &Path, data_dir: &Path, out_dir: &Path, svg: bool) -> Result<EvalReport> {
    let ck = read_checkpoint(checkpoint)?;
    let test = read_dataset(&data_dir.join(TEST_FILE))?;
    if let Some(p) = test.iter().find(|p| p.len() != ck.n_samples()) {
        return Err(Error::Dimension(format!(
            "test pairs have N = {}, model expects {}",
            p.len(),
            ck.n_samples()
        )));
    }
    let gen = ck.state.gen;
    eval_to_dir(&test, |z| recover(&gen, z), out_dir, svg)
}

/// Scores `recover` on `pairs` and writes `eval_report.csv`,
/// `eval_report.txt` and one profile CSV (plus SVG if asked) per pair.
pub fn eval_to_dir<F>(pairs: &[TrainingPair], recover: F, out_dir: &Path, svg: bool) -> Result<EvalReport>
where
    F: FnMut(&RawSignal) -> Result<RawSignal>,
{
    let (report, recovered) = evaluate(pairs, recover)?;
    let mut csv = Vec::new();
    report.write_csv(&mut csv)?;
    write_atomic(&out_dir.join("eval_report.csv"), &csv)?;
    write_atomic(&out_dir.join("eval_report.txt"), report.to_text().as_bytes())?;

    let profile_dir = out_dir.join("profiles");
    let profile = |s: &RawSignal| match downrange_profile_db(s) {
        Err(Error::UndefinedMetric(_)) => Ok(vec![PROFILE_FLOOR_DB; s.len()]),
        other => other,
    };
    for (i, (p, zhat)) in pairs.iter().zip(&recovered).enumerate() {
        let original = profile(&p.x)?;
        let corrupted = profile(&p.z)?;
        let rec = profile(zhat)?;
        let columns = [
            ("original_db", &original[..]),
            ("corrupted_db", &corrupted[..]),
            ("recovered_db", &rec[..]),
        ];
        let mut buf = Vec::new();
        write_profiles_csv(&mut buf, &columns)?;
        write_atomic(&profile_dir.join(format!("pair_{i:03}.csv")), &buf)?;
        if svg {
            let title = format!("Normalized down-range profile, test pair {i}");
            write_atomic(
                &profile_dir.join(format!("pair_{i:03}.svg")),
                profiles_svg(&title, &columns).as_bytes(),
            )?;
        }
    }
    Ok(report)
}

/// Default location for a run's artifacts.
pub fn run_dir(cfg: &ExperimentConfig, out: Option<&Path>) -> PathBuf {
    out.map(Path::to_path_buf).unwrap_or_else(|| cfg.out_dir.clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectrum::{apply_mask, missing_fraction};

    fn small_config() -> ExperimentConfig {
        let mut cfg = ExperimentConfig::parse(
            "n_samples = 32\nf_low = 0\nf_high = 24\nfreq_resolution = 1\nband_width_bins = 2\n\
             train_pairs = 12\nval_pairs = 3\ntest_pairs = 4\nhidden = 8\nbatch_size = 4\nepochs = 3\n",
        )
        .unwrap();
        cfg.set_seed(11);
        cfg
    }

    #[test]
    fn synthesized_pairs_satisfy_mask_relation() {
        let splits = synthesize(&small_config()).unwrap();
        assert_eq!((splits.train.len(), splits.val.len(), splits.test.len()), (12, 3, 4));
        for p in splits.train.iter().chain(&splits.test) {
            let z = apply_mask(&p.x, &p.mask).unwrap();
            assert_eq!(z, p.z);
            let f = missing_fraction(&p.mask);
            assert!((0.9..0.9 + 2.0 / 24.0).contains(&f));
            assert!(p.mask.bits()[24..].iter().all(|&b| b == 1));
        }
        for t in &splits.test {
            assert!(splits.train.iter().all(|p| p.mask.bits() != t.mask.bits()));
        }
    }

    #[test]
    fn train_rejects_length_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        cmd_synth(&small_config(), dir.path()).unwrap();
        let mut cfg = small_config();
        cfg.n_samples = 64;
        cfg.band.f_high = 48.0;
        assert!(matches!(
            cmd_train(&cfg, dir.path(), dir.path(), None),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn resume_refuses_other_config() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small_config();
        cmd_synth(&cfg, dir.path()).unwrap();
        cmd_train(&cfg, dir.path(), dir.path(), None).unwrap();
        let mut other = cfg.clone();
        other.train.lambda = 0.5;
        let ck = dir.path().join(CHECKPOINT_FILE);
        assert!(matches!(
            cmd_train(&other, dir.path(), dir.path(), Some(&ck)),
            Err(Error::Config(_))
        ));
    }
}
