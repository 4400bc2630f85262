//! Binary dataset (`SGDS`) and checkpoint (`SGCK`) files.
//!
//! Everything is little-endian; reals are IEEE-754 binary64.
//!
//! Dataset, version 1:
//!
//! ```text
//! "SGDS" | u32 version | u64 N | u64 pairs | u64 band_start | u64 band_end
//!        | u64 band_width_bins | f64 target_missing_fraction
//! per pair: N × (f64 re, f64 im) for x, the same for z, N × u8 mask bits
//! ```
//!
//! Checkpoint, version 1:
//!
//! ```text
//! "SGCK" | u32 version | u8 mode | u64 config_hash | u64 epoch
//!        | network(gen) | network(disc) | optimizer(gen) | optimizer(disc)
//!        | u64 history_len | history_len × (f64 content, f64 adv, f64 disc,
//!                                          f64 val_snr_db, u64 clamped)
//! network   = u32 layers | (layers+1) × u64 dims | layers × u8 activation
//!             | per layer: weights row-major (out × in), then bias
//! optimizer = f64 lr | f64 decay | f64 epsilon | accumulators as in network
//! ```

use std::fs;
use std::io::{self, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::gan::{EpochMetrics, GanMode, TrainerState, TrainingPair};
use crate::nn::{Activation, LayerTensors, MlpParams, OptimizerState};
use crate::signal::{Domain, RawSignal};
use crate::spectrum::NotchMask;

pub const DATASET_MAGIC: &[u8; 4] = b"SGDS";
pub const CHECKPOINT_MAGIC: &[u8; 4] = b"SGCK";
pub const FORMAT_VERSION: u32 = 1;

struct Writer<W: Write>(W);

impl<W: Write> Writer<W> {
    fn u8(&mut self, v: u8) -> io::Result<()> {
        self.0.write_all(&[v])
    }
    fn u32(&mut self, v: u32) -> io::Result<()> {
        self.0.write_all(&v.to_le_bytes())
    }
    fn u64(&mut self, v: u64) -> io::Result<()> {
        self.0.write_all(&v.to_le_bytes())
    }
    fn f64(&mut self, v: f64) -> io::Result<()> {
        self.0.write_all(&v.to_le_bytes())
    }
    fn f64s(&mut self, vs: &[f64]) -> io::Result<()> {
        vs.iter().try_for_each(|&v| self.f64(v))
    }
    fn signal(&mut self, x: &RawSignal) -> io::Result<()> {
        for c in x.samples() {
            self.f64(c.re)?;
            self.f64(c.im)?;
        }
        Ok(())
    }
    fn tensors(&mut self, layers: &[LayerTensors]) -> io::Result<()> {
        for l in layers {
            self.f64s(&l.weights)?;
            self.f64s(&l.bias)?;
        }
        Ok(())
    }
    fn network(&mut self, p: &MlpParams) -> io::Result<()> {
        self.u32(p.layers().len() as u32)?;
        for d in p.dims() {
            self.u64(d as u64)?;
        }
        for a in p.activations() {
            self.u8(a.tag())?;
        }
        self.tensors(p.layers())
    }
    fn optimizer(&mut self, s: &OptimizerState) -> io::Result<()> {
        self.f64(s.learning_rate)?;
        self.f64(s.decay)?;
        self.f64(s.epsilon)?;
        self.tensors(&s.accumulators)
    }
}

struct Reader<R: Read>(R);

impl<R: Read> Reader<R> {
    fn bytes<const K: usize>(&mut self) -> Result<[u8; K]> {
        let mut buf = [0u8; K];
        self.0.read_exact(&mut buf).map_err(|e| match e.kind() {
            io::ErrorKind::UnexpectedEof => Error::Format("file is truncated".into()),
            _ => Error::Io(e),
        })?;
        Ok(buf)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.bytes::<1>()?[0])
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.bytes()?))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.bytes()?))
    }
    fn usize(&mut self) -> Result<usize> {
        usize::try_from(self.u64()?).map_err(|_| Error::Format("size field overflows".into()))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.bytes()?))
    }
    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        (0..n).map(|_| self.f64()).collect()
    }
    fn header(&mut self, magic: &[u8; 4]) -> Result<()> {
        let found = self.bytes::<4>()?;
        if &found != magic {
            return Err(Error::Format(format!(
                "bad magic {:?}, expected {:?}",
                String::from_utf8_lossy(&found),
                String::from_utf8_lossy(magic)
            )));
        }
        let version = self.u32()?;
        if version != FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported format version {version}")));
        }
        Ok(())
    }
    fn signal(&mut self, n: usize) -> Result<RawSignal> {
        let samples = (0..n)
            .map(|_| Ok(num_complex::Complex64::new(self.f64()?, self.f64()?)))
            .collect::<Result<Vec<_>>>()?;
        RawSignal::new(samples, Domain::Time)
    }
    fn tensors_like(&mut self, shape: &[LayerTensors]) -> Result<Vec<LayerTensors>> {
        shape
            .iter()
            .map(|l| {
                Ok(LayerTensors {
                    in_dim: l.in_dim,
                    out_dim: l.out_dim,
                    weights: self.f64s(l.weights.len())?,
                    bias: self.f64s(l.bias.len())?,
                })
            })
            .collect()
    }
    fn network(&mut self) -> Result<MlpParams> {
        let n_layers = self.u32()? as usize;
        if n_layers == 0 || n_layers > 64 {
            return Err(Error::Format(format!("implausible layer count {n_layers}")));
        }
        let dims = (0..=n_layers).map(|_| self.usize()).collect::<Result<Vec<_>>>()?;
        if dims.iter().any(|&d| d == 0 || d > 1 << 24) {
            return Err(Error::Format(format!("implausible layer dims {dims:?}")));
        }
        let acts = (0..n_layers)
            .map(|_| Activation::from_tag(self.u8()?))
            .collect::<Result<Vec<_>>>()?;
        let shape: Vec<LayerTensors> = dims.windows(2).map(|d| LayerTensors::zeros(d[0], d[1])).collect();
        MlpParams::new(self.tensors_like(&shape)?, acts)
    }
    fn optimizer(&mut self, p: &MlpParams) -> Result<OptimizerState> {
        let learning_rate = self.f64()?;
        let decay = self.f64()?;
        let epsilon = self.f64()?;
        let mut s = OptimizerState::new(p, learning_rate, decay, epsilon)?;
        s.accumulators = self.tensors_like(&s.accumulators)?;
        Ok(s)
    }
    fn expect_eof(&mut self) -> Result<()> {
        let mut probe = [0u8; 1];
        match self.0.read(&mut probe)? {
            0 => Ok(()),
            _ => Err(Error::Format("trailing bytes after payload".into())),
        }
    }
}

/// Writes `bytes` to `path` through a temporary file and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn encode_dataset(pairs: &[TrainingPair]) -> Result<Vec<u8>> {
    let first = pairs
        .first()
        .ok_or_else(|| Error::Config("cannot write an empty dataset".into()))?;
    let n = first.len();
    let mask = &first.mask;
    let mut w = Writer(Vec::new());
    w.0.extend_from_slice(DATASET_MAGIC);
    w.u32(FORMAT_VERSION)?;
    w.u64(n as u64)?;
    w.u64(pairs.len() as u64)?;
    w.u64(mask.band().start as u64)?;
    w.u64(mask.band().end as u64)?;
    w.u64(mask.band_width_bins() as u64)?;
    w.f64(mask.target_missing_fraction())?;
    for p in pairs {
        if p.len() != n || p.mask.band() != mask.band() {
            return Err(Error::Dimension("dataset pairs must share N and band".into()));
        }
        w.signal(&p.x)?;
        w.signal(&p.z)?;
        w.0.extend_from_slice(p.mask.bits());
    }
    Ok(w.0)
}

/// Decodes a dataset and checks every pair's mask relation.
pub fn decode_dataset(bytes: &[u8]) -> Result<Vec<TrainingPair>> {
    let mut r = Reader(bytes);
    r.header(DATASET_MAGIC)?;
    let n = r.usize()?;
    let count = r.usize()?;
    let band = r.usize()?..r.usize()?;
    let width = r.usize()?;
    let target = r.f64()?;
    let per_pair = n.checked_mul(33).ok_or_else(|| Error::Format("N overflows".into()))?;
    if count.checked_mul(per_pair).is_none_or(|need| need > bytes.len()) {
        return Err(Error::Format("file is truncated".into()));
    }
    let mut pairs = Vec::with_capacity(count);
    for _ in 0..count {
        let x = r.signal(n)?;
        let z = r.signal(n)?;
        let bits = (0..n).map(|_| r.u8()).collect::<Result<Vec<_>>>()?;
        let mask = NotchMask::from_bits(bits, band.clone(), width, target)?;
        pairs.push(TrainingPair::new(x, z, mask)?);
    }
    r.expect_eof()?;
    Ok(pairs)
}

pub fn write_dataset(path: &Path, pairs: &[TrainingPair]) -> Result<()> {
    write_atomic(path, &encode_dataset(pairs)?)
}

pub fn read_dataset(path: &Path) -> Result<Vec<TrainingPair>> {
    decode_dataset(&fs::read(path)?)
}

/// Trainer state plus the identity of the configuration that produced it.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub mode: GanMode,
    pub config_hash: u64,
    pub state: TrainerState,
}

impl Checkpoint {
    pub fn n_samples(&self) -> usize {
        self.state.n_samples()
    }
}

pub fn encode_checkpoint(ck: &Checkpoint) -> Result<Vec<u8>> {
    let s = &ck.state;
    let mut w = Writer(Vec::new());
    w.0.extend_from_slice(CHECKPOINT_MAGIC);
    w.u32(FORMAT_VERSION)?;
    w.u8(ck.mode.tag())?;
    w.u64(ck.config_hash)?;
    w.u64(s.epoch as u64)?;
    w.network(&s.gen)?;
    w.network(&s.disc)?;
    w.optimizer(&s.gen_opt)?;
    w.optimizer(&s.disc_opt)?;
    w.u64(s.loss_history.len() as u64)?;
    for m in &s.loss_history {
        w.f64(m.content)?;
        w.f64(m.adversarial)?;
        w.f64(m.discriminator)?;
        w.f64(m.val_snr_db)?;
        w.u64(m.clamped)?;
    }
    Ok(w.0)
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Checkpoint> {
    let mut r = Reader(bytes);
    r.header(CHECKPOINT_MAGIC)?;
    let mode = GanMode::from_tag(r.u8()?)?;
    let config_hash = r.u64()?;
    let epoch = r.usize()?;
    let gen = r.network()?;
    let disc = r.network()?;
    if gen.input_dim() != disc.input_dim() || gen.output_dim() != gen.input_dim() {
        return Err(Error::Format("generator and discriminator shapes disagree".into()));
    }
    let gen_opt = r.optimizer(&gen)?;
    let disc_opt = r.optimizer(&disc)?;
    let history_len = r.usize()?;
    if history_len != epoch {
        return Err(Error::Format(format!(
            "history has {history_len} entries for epoch {epoch}"
        )));
    }
    let loss_history = (0..history_len)
        .map(|_| {
            Ok(EpochMetrics {
                content: r.f64()?,
                adversarial: r.f64()?,
                discriminator: r.f64()?,
                val_snr_db: r.f64()?,
                clamped: r.u64()?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    r.expect_eof()?;
    Ok(Checkpoint {
        mode,
        config_hash,
        state: TrainerState {
            gen,
            disc,
            gen_opt,
            disc_opt,
            epoch,
            loss_history,
        },
    })
}

pub fn write_checkpoint(path: &Path, ck: &Checkpoint) -> Result<()> {
    write_atomic(path, &encode_checkpoint(ck)?)
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint> {
    decode_checkpoint(&fs::read(path)?)
}

/// Per-epoch metrics as `epoch,content_loss,adv_loss,disc_loss,val_snr_db`.
pub fn metrics_csv(history: &[EpochMetrics]) -> String {
    let mut s = String::from("epoch,content_loss,adv_loss,disc_loss,val_snr_db\n");
    for (i, m) in history.iter().enumerate() {
        s.push_str(&format!(
            "{},{},{},{},{}\n",
            i + 1,
            m.content,
            m.adversarial,
            m.discriminator,
            m.val_snr_db
        ));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gan::TrainConfig;
    use crate::signal::{render_raw, synth_scene, BandParams};
    use crate::spectrum::gen_notch_mask;

    fn pairs(n: usize, count: usize) -> Vec<TrainingPair> {
        let band = BandParams::spanning(0.0, 1.0, n).unwrap();
        (0..count as u64)
            .map(|i| {
                let x = render_raw(&synth_scene(2, n, band, i).unwrap()).unwrap();
                let m = gen_notch_mask(n, 2, 0.5, 100 + i).unwrap();
                TrainingPair::from_reference(x, m).unwrap()
            })
            .collect()
    }

    #[test]
    fn dataset_round_trip_is_bit_exact() {
        let ps = pairs(16, 3);
        let bytes = encode_dataset(&ps).unwrap();
        assert_eq!(&bytes[..4], b"SGDS");
        let back = decode_dataset(&bytes).unwrap();
        assert_eq!(back, ps);
        assert_eq!(encode_dataset(&back).unwrap(), bytes);
    }

    #[test]
    fn dataset_rejects_bad_input() {
        let bytes = encode_dataset(&pairs(16, 2)).unwrap();
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(decode_dataset(&bad), Err(Error::Format(_))));
        assert!(matches!(
            decode_dataset(&bytes[..bytes.len() - 1]),
            Err(Error::Format(_))
        ));
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(matches!(decode_dataset(&extra), Err(Error::Format(_))));
        // corrupt one z sample so the mask relation breaks
        let mut tampered = bytes;
        let offset = 4 + 4 + 8 * 6 + 16 * 16 + 7;
        tampered[offset] ^= 0x40;
        assert!(decode_dataset(&tampered).is_err());
    }

    #[test]
    fn checkpoint_round_trip_is_bit_exact() {
        let cfg = TrainConfig {
            hidden: 6,
            epochs: 2,
            batch_size: 2,
            ..TrainConfig::default()
        };
        let ps = pairs(8, 4);
        let mut state = TrainerState::new(8, &cfg).unwrap();
        crate::gan::fit(&mut state, &ps, &ps[..1], &cfg, |_| Ok(())).unwrap();
        let ck = Checkpoint {
            mode: cfg.mode,
            config_hash: 77,
            state,
        };
        let bytes = encode_checkpoint(&ck).unwrap();
        let back = decode_checkpoint(&bytes).unwrap();
        assert_eq!(back.state.loss_history.len(), 2);
        assert_eq!(encode_checkpoint(&back).unwrap(), bytes);
        assert_eq!(back.config_hash, 77);
        assert!(matches!(decode_checkpoint(&bytes[..20]), Err(Error::Format(_))));
    }

    #[test]
    fn metrics_rows() {
        let m = EpochMetrics {
            content: 1.5,
            adversarial: -0.25,
            discriminator: 0.0,
            val_snr_db: f64::NAN,
            clamped: 0,
        };
        assert_eq!(
            metrics_csv(&[m, m]),
            "epoch,content_loss,adv_loss,disc_loss,val_snr_db\n1,1.5,-0.25,0,NaN\n2,1.5,-0.25,0,NaN\n"
        );
    }
}
