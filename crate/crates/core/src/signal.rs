//! Point-target range profiles and the unitary DFT.
//!
//! A scene is a handful of point reflectors along a single down-range line.
//! Each reflector returns a band-limited impulse: an indicator over the
//! in-band DFT bins, delayed by a linear phase ramp so that fractional
//! positions are exact.

use std::cell::RefCell;
use std::f64::consts::PI;
use std::fmt;
use std::io::{BufRead, Write};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::FftPlanner;

use crate::error::{Error, Result};

/// Which side of the Fourier transform a signal lives on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Domain {
    Time,
    Frequency,
}

impl Domain {
    fn name(self) -> &'static str {
        match self {
            Domain::Time => "time",
            Domain::Frequency => "frequency",
        }
    }
}

/// Radar band: `[f_low, f_high)` sampled every `freq_resolution` Hz.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BandParams {
    pub f_low: f64,
    pub f_high: f64,
    pub freq_resolution: f64,
}

impl BandParams {
    /// 380 MHz to 2.08 GHz at 9.15 MHz per bin (186 bins).
    pub const UWB: BandParams = BandParams {
        f_low: 380.0e6,
        f_high: 2.08e9,
        freq_resolution: 9.15e6,
    };

    pub fn new(f_low: f64, f_high: f64, freq_resolution: f64) -> Result<Self> {
        let band = BandParams {
            f_low,
            f_high,
            freq_resolution,
        };
        band.validate()?;
        Ok(band)
    }

    /// Band that fills all `n_samples` DFT bins.
    pub fn spanning(f_low: f64, f_high: f64, n_samples: usize) -> Result<Self> {
        Self::new(f_low, f_high, (f_high - f_low) / n_samples as f64)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.f_low.is_finite() && self.f_high.is_finite() && self.f_low < self.f_high) {
            return Err(Error::Config(format!(
                "band requires f_low < f_high, got [{}, {}]",
                self.f_low, self.f_high
            )));
        }
        if !(self.freq_resolution.is_finite() && self.freq_resolution > 0.0) {
            return Err(Error::Config(format!(
                "frequency resolution must be positive, got {}",
                self.freq_resolution
            )));
        }
        if self.in_band_bins() < 2 {
            return Err(Error::Config("band must cover at least 2 bins".into()));
        }
        Ok(())
    }

    pub fn in_band_bins(&self) -> usize {
        ((self.f_high - self.f_low) / self.freq_resolution).round() as usize
    }

    /// Carrier frequency of DFT bin `k`.
    pub fn bin_frequency(&self, k: usize) -> f64 {
        self.f_low + k as f64 * self.freq_resolution
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PointTarget {
    /// Fractional sample index.
    pub position: f64,
    pub amplitude: f64,
    pub phase: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Scene {
    pub targets: Vec<PointTarget>,
    pub n_samples: usize,
    pub band: BandParams,
}

impl Scene {
    pub fn new(targets: Vec<PointTarget>, n_samples: usize, band: BandParams) -> Result<Self> {
        band.validate()?;
        if targets.is_empty() {
            return Err(Error::Config("scene needs at least one target".into()));
        }
        if band.in_band_bins() > n_samples {
            return Err(Error::Config(format!(
                "band spans {} bins but the signal has only {n_samples}",
                band.in_band_bins()
            )));
        }
        for t in &targets {
            let n = n_samples as f64;
            if !(t.position >= 0.0 && t.position < n) {
                return Err(Error::Config(format!(
                    "target position {} outside [0, {n_samples})",
                    t.position
                )));
            }
            if !t.amplitude.is_finite() || t.amplitude == 0.0 || !t.phase.is_finite() {
                return Err(Error::Config(format!(
                    "target amplitude must be finite and nonzero, got {}",
                    t.amplitude
                )));
            }
        }
        Ok(Scene {
            targets,
            n_samples,
            band,
        })
    }
}

/// Complex signal of fixed length, tagged with its domain.
#[derive(Clone, Debug, PartialEq)]
pub struct RawSignal {
    samples: Vec<Complex64>,
    domain: Domain,
}

impl RawSignal {
    pub fn new(samples: Vec<Complex64>, domain: Domain) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::Dimension("signal must be nonempty".into()));
        }
        if samples.iter().any(|c| !(c.re.is_finite() && c.im.is_finite())) {
            return Err(Error::Config("signal contains non-finite samples".into()));
        }
        Ok(RawSignal { samples, domain })
    }

    pub fn time(samples: Vec<Complex64>) -> Result<Self> {
        Self::new(samples, Domain::Time)
    }

    pub fn zeros(n: usize, domain: Domain) -> Self {
        RawSignal {
            samples: vec![Complex64::new(0.0, 0.0); n],
            domain,
        }
    }

    pub fn from_real(values: &[f64], domain: Domain) -> Result<Self> {
        Self::new(values.iter().map(|&v| Complex64::new(v, 0.0)).collect(), domain)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn samples(&self) -> &[Complex64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<Complex64> {
        self.samples
    }

    pub fn expect_domain(&self, expected: Domain) -> Result<()> {
        if self.domain == expected {
            Ok(())
        } else {
            Err(Error::Domain {
                expected: expected.name(),
                actual: self.domain.name(),
            })
        }
    }

    pub fn scale(&self, a: f64) -> RawSignal {
        RawSignal {
            samples: self.samples.iter().map(|c| c * a).collect(),
            domain: self.domain,
        }
    }

    /// Elementwise `self - other`.
    pub fn sub(&self, other: &RawSignal) -> Result<RawSignal> {
        self.check_compatible(other)?;
        Ok(RawSignal {
            samples: self.samples.iter().zip(&other.samples).map(|(a, b)| a - b).collect(),
            domain: self.domain,
        })
    }

    /// Elementwise `self + other`.
    pub fn add(&self, other: &RawSignal) -> Result<RawSignal> {
        self.check_compatible(other)?;
        Ok(RawSignal {
            samples: self.samples.iter().zip(&other.samples).map(|(a, b)| a + b).collect(),
            domain: self.domain,
        })
    }

    pub fn energy(&self) -> f64 {
        self.samples.iter().map(|c| c.norm_sqr()).sum()
    }

    /// Real parts followed by imaginary parts.
    pub fn pack(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(2 * self.len());
        out.extend(self.samples.iter().map(|c| c.re));
        out.extend(self.samples.iter().map(|c| c.im));
        out
    }

    pub fn unpack(packed: &[f64], domain: Domain) -> Result<RawSignal> {
        if packed.is_empty() || !packed.len().is_multiple_of(2) {
            return Err(Error::Dimension(format!(
                "packed signal length {} is not a positive even number",
                packed.len()
            )));
        }
        let n = packed.len() / 2;
        Self::new(
            (0..n).map(|i| Complex64::new(packed[i], packed[n + i])).collect(),
            domain,
        )
    }

    fn check_compatible(&self, other: &RawSignal) -> Result<()> {
        if self.len() != other.len() {
            return Err(Error::Dimension(format!(
                "signal lengths differ: {} vs {}",
                self.len(),
                other.len()
            )));
        }
        other.expect_domain(self.domain)
    }

    /// Writes `index,real,imag` rows under a header.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "index,real,imag")?;
        for (i, c) in self.samples.iter().enumerate() {
            writeln!(w, "{i},{},{}", c.re, c.im)?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R, domain: Domain) -> Result<RawSignal> {
        let mut samples = Vec::new();
        for (lineno, line) in r.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if lineno == 0 || line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            let bad = || Error::Format(format!("malformed signal row {}: {line}", lineno + 1));
            if fields.len() != 3 {
                return Err(bad());
            }
            let index: usize = fields[0].parse().map_err(|_| bad())?;
            if index != samples.len() {
                return Err(Error::Format(format!(
                    "signal rows out of order at line {}",
                    lineno + 1
                )));
            }
            let re: f64 = fields[1].parse().map_err(|_| bad())?;
            let im: f64 = fields[2].parse().map_err(|_| bad())?;
            samples.push(Complex64::new(re, im));
        }
        RawSignal::new(samples, domain)
    }
}

impl fmt::Display for RawSignal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "RawSignal({}, N={})", self.domain.name(), self.len())
    }
}

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

/// In-place unitary forward DFT.
pub fn fft_unitary(buf: &mut [Complex64]) {
    transform(buf, false);
}

/// In-place unitary inverse DFT.
pub fn ifft_unitary(buf: &mut [Complex64]) {
    transform(buf, true);
}

fn transform(buf: &mut [Complex64], inverse: bool) {
    let n = buf.len();
    if n == 0 {
        return;
    }
    let fft = PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        if inverse {
            p.plan_fft_inverse(n)
        } else {
            p.plan_fft_forward(n)
        }
    });
    fft.process(buf);
    let norm = 1.0 / (n as f64).sqrt();
    for c in buf.iter_mut() {
        *c *= norm;
    }
}

pub fn dft_forward(x: &RawSignal) -> Result<RawSignal> {
    x.expect_domain(Domain::Time)?;
    let mut buf = x.samples.clone();
    fft_unitary(&mut buf);
    Ok(RawSignal {
        samples: buf,
        domain: Domain::Frequency,
    })
}

pub fn dft_inverse(s: &RawSignal) -> Result<RawSignal> {
    s.expect_domain(Domain::Frequency)?;
    let mut buf = s.samples.clone();
    ifft_unitary(&mut buf);
    Ok(RawSignal {
        samples: buf,
        domain: Domain::Time,
    })
}

/// Draws a random scene: positions uniform on `[0, n_samples)`, amplitudes
/// uniform on `[0.5, 1.5]`, phases uniform on `[0, 2π)`.
pub fn synth_scene(n_targets: usize, n_samples: usize, band: BandParams, seed: u64) -> Result<Scene> {
    band.validate()?;
    if n_targets == 0 {
        return Err(Error::Config("scene needs at least one target".into()));
    }
    if n_samples < 8 {
        return Err(Error::Config(format!(
            "signal length must be at least 8, got {n_samples}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let targets = (0..n_targets)
        .map(|_| PointTarget {
            position: rng.gen_range(0.0..n_samples as f64),
            amplitude: rng.gen_range(0.5..=1.5),
            phase: rng.gen_range(0.0..2.0 * PI),
        })
        .collect();
    Scene::new(targets, n_samples, band)
}

/// Renders the scene's backscatter as a time-domain signal.
///
/// The unit impulse is scaled so that a target at an integer position
/// peaks at exactly its amplitude.
pub fn render_raw(scene: &Scene) -> Result<RawSignal> {
    let n = scene.n_samples;
    let n_band = scene.band.in_band_bins();
    if n_band > n {
        return Err(Error::Config(format!(
            "band spans {n_band} bins but the signal has only {n}"
        )));
    }
    let gain = (n as f64).sqrt() / n_band as f64;
    let mut spectrum = vec![Complex64::new(0.0, 0.0); n];
    for t in &scene.targets {
        let weight = Complex64::from_polar(t.amplitude * gain, t.phase);
        for (k, bin) in spectrum.iter_mut().enumerate().take(n_band) {
            let delay = -2.0 * PI * k as f64 * t.position / n as f64;
            *bin += weight * Complex64::from_polar(1.0, delay);
        }
    }
    dft_inverse(&RawSignal::new(spectrum, Domain::Frequency)?)
}
