//! Random spectral notching and the zero-fill baseline.

use std::io::Write;
use std::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::signal::{dft_forward, dft_inverse, Domain, RawSignal};

/// Binary availability mask over DFT bins: 1 = available, 0 = notched.
///
/// Notches only ever fall inside `band`; bins outside it are marked
/// available and do not count toward the missing fraction.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct NotchMask {
    bits: Vec<u8>,
    band: Range<usize>,
    band_width_bins: usize,
    target_missing_fraction_bits: u64,
}

impl NotchMask {
    pub fn from_bits(
        bits: Vec<u8>,
        band: Range<usize>,
        band_width_bins: usize,
        target_missing_fraction: f64,
    ) -> Result<Self> {
        if bits.iter().any(|&b| b > 1) {
            return Err(Error::Format("mask bits must be 0 or 1".into()));
        }
        if band.start >= band.end || band.end > bits.len() {
            return Err(Error::Dimension(format!(
                "mask band {band:?} does not fit {} bins",
                bits.len()
            )));
        }
        if bits[..band.start].iter().chain(&bits[band.end..]).any(|&b| b == 0) {
            return Err(Error::Format("mask has notches outside its band".into()));
        }
        Ok(NotchMask {
            bits,
            band,
            band_width_bins,
            target_missing_fraction_bits: target_missing_fraction.to_bits(),
        })
    }

    pub fn all_ones(n: usize) -> Self {
        NotchMask {
            bits: vec![1; n],
            band: 0..n,
            band_width_bins: 1,
            target_missing_fraction_bits: 0f64.to_bits(),
        }
    }

    pub fn all_zeros(n: usize) -> Self {
        NotchMask {
            bits: vec![0; n],
            band: 0..n,
            band_width_bins: n,
            target_missing_fraction_bits: 1f64.to_bits(),
        }
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn bits(&self) -> &[u8] {
        &self.bits
    }

    pub fn is_available(&self, bin: usize) -> bool {
        self.bits[bin] == 1
    }

    pub fn band(&self) -> Range<usize> {
        self.band.clone()
    }

    pub fn band_width_bins(&self) -> usize {
        self.band_width_bins
    }

    pub fn target_missing_fraction(&self) -> f64 {
        f64::from_bits(self.target_missing_fraction_bits)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "bin,bit")?;
        for (i, b) in self.bits.iter().enumerate() {
            writeln!(w, "{i},{b}")?;
        }
        Ok(())
    }
}

/// Notches a mask over all `n_bins` bins.
pub fn gen_notch_mask(
    n_bins: usize,
    band_width_bins: usize,
    target_missing_fraction: f64,
    seed: u64,
) -> Result<NotchMask> {
    gen_notch_mask_in_band(n_bins, 0..n_bins, band_width_bins, target_missing_fraction, seed)
}

/// Places notch bands of `band_width_bins` at uniform random starts inside
/// `band` until the notched share of the band first reaches the target.
///
/// Bands may overlap. A band running past the top of `band` is truncated
/// there rather than wrapped.
pub fn gen_notch_mask_in_band(
    n_total: usize,
    band: Range<usize>,
    band_width_bins: usize,
    target_missing_fraction: f64,
    seed: u64,
) -> Result<NotchMask> {
    if !(target_missing_fraction > 0.0 && target_missing_fraction < 1.0) {
        return Err(Error::Config(format!(
            "missing fraction must lie in (0, 1), got {target_missing_fraction}"
        )));
    }
    if band.start >= band.end || band.end > n_total {
        return Err(Error::Config(format!(
            "notch band {band:?} does not fit {n_total} bins"
        )));
    }
    let n_bins = band.len();
    if band_width_bins == 0 || band_width_bins > n_bins {
        return Err(Error::Config(format!(
            "notch width {band_width_bins} infeasible for {n_bins} bins"
        )));
    }
    if n_bins < 2 * band_width_bins {
        return Err(Error::Config(format!(
            "need at least {} bins for notch width {band_width_bins}, got {n_bins}",
            2 * band_width_bins
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut bits = vec![1u8; n_total];
    let mut zeros = 0usize;
    while (zeros as f64) < target_missing_fraction * n_bins as f64 {
        let start = band.start + rng.gen_range(0..n_bins);
        let end = (start + band_width_bins).min(band.end);
        for b in &mut bits[start..end] {
            if *b == 1 {
                *b = 0;
                zeros += 1;
            }
        }
    }
    NotchMask::from_bits(bits, band, band_width_bins, target_missing_fraction)
}

/// Share of in-band bins that are notched.
pub fn missing_fraction(m: &NotchMask) -> f64 {
    let zeros = m.bits[m.band.clone()].iter().filter(|&&b| b == 0).count();
    zeros as f64 / m.band.len() as f64
}

/// Zeroes the notched bins of `x`'s spectrum.
pub fn apply_mask(x: &RawSignal, m: &NotchMask) -> Result<RawSignal> {
    x.expect_domain(Domain::Time)?;
    if x.len() != m.len() {
        return Err(Error::Dimension(format!(
            "signal has {} samples but mask has {} bins",
            x.len(),
            m.len()
        )));
    }
    let spectrum = dft_forward(x)?;
    let masked: Vec<_> = spectrum
        .samples()
        .iter()
        .zip(m.bits())
        .map(|(&s, &b)| if b == 1 { s } else { s * 0.0 })
        .collect();
    dft_inverse(&RawSignal::new(masked, Domain::Frequency)?)
}

/// Conventional recovery: keep the notched data as-is.
pub fn zerofill_baseline(z: &RawSignal) -> RawSignal {
    z.clone()
}
