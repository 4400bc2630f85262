//! Recovery metrics: RMS, SNR in dB, recovery gain, and normalized
//! down-range profiles.

use std::fmt::Write as _;
use std::io::Write;

use crate::error::{Error, Result};
use crate::gan::TrainingPair;
use crate::signal::RawSignal;
use crate::spectrum::zerofill_baseline;

/// Floor for zero-magnitude bins in dB profiles.
pub const PROFILE_FLOOR_DB: f64 = -120.0;

pub fn rms(x: &RawSignal) -> f64 {
    (x.energy() / x.len() as f64).sqrt()
}

/// `20 log10(rms(x) / rms(xhat - x))`, or `+inf` when `xhat == x`.
pub fn snr_db(x: &RawSignal, xhat: &RawSignal) -> Result<f64> {
    snr_db_many(&[x], &[xhat])
}

/// SNR over the concatenation of several signal pairs.
pub fn snr_db_many(xs: &[&RawSignal], xhats: &[&RawSignal]) -> Result<f64> {
    if xs.len() != xhats.len() || xs.is_empty() {
        return Err(Error::Dimension(format!(
            "{} references for {} estimates",
            xs.len(),
            xhats.len()
        )));
    }
    let mut signal = 0.0;
    let mut error = 0.0;
    for (x, xhat) in xs.iter().zip(xhats) {
        signal += x.energy();
        error += xhat.sub(x)?.energy();
    }
    if signal == 0.0 {
        return Err(Error::UndefinedMetric("reference signal is all zero".into()));
    }
    if error == 0.0 {
        return Ok(f64::INFINITY);
    }
    // Both sums cover the same number of elements, so the RMS ratio is the
    // square root of the energy ratio.
    Ok(10.0 * (signal / error).log10())
}

#[derive(Clone, Debug, PartialEq)]
pub struct PairReport {
    pub index: usize,
    pub snr_corrupted_db: f64,
    pub snr_baseline_db: f64,
    pub snr_recovered_db: f64,
    pub gain_db: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub snr_corrupted_db: f64,
    pub snr_recovered_db: f64,
    pub gain_db: f64,
    pub per_pair: Vec<PairReport>,
}

impl EvalReport {
    pub fn from_snrs(snr_corrupted_db: f64, snr_recovered_db: f64) -> Self {
        EvalReport {
            snr_corrupted_db,
            snr_recovered_db,
            gain_db: snr_recovered_db - snr_corrupted_db,
            per_pair: Vec::new(),
        }
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "pair,snr_corrupted_db,snr_baseline_db,snr_recovered_db,gain_db")?;
        for p in &self.per_pair {
            writeln!(
                w,
                "{},{},{},{},{}",
                p.index, p.snr_corrupted_db, p.snr_baseline_db, p.snr_recovered_db, p.gain_db
            )?;
        }
        writeln!(
            w,
            "pooled,{},{},{},{}",
            self.snr_corrupted_db, self.snr_corrupted_db, self.snr_recovered_db, self.gain_db
        )?;
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "Recovery performance on spectrally notched data");
        let _ = writeln!(s, "  pairs evaluated      : {}", self.per_pair.len());
        let _ = writeln!(s, "  corrupted SNR (dB)   : {:.2}", self.snr_corrupted_db);
        let _ = writeln!(s, "  zero-fill SNR (dB)   : {:.2}", self.snr_corrupted_db);
        let _ = writeln!(s, "  recovered SNR (dB)   : {:.2}", self.snr_recovered_db);
        let _ = writeln!(s, "  recovery gain (dB)   : {:.2}", self.gain_db);
        if !self.per_pair.is_empty() {
            let n = self.per_pair.len() as f64;
            let mean_gain = self.per_pair.iter().map(|p| p.gain_db).sum::<f64>() / n;
            let _ = writeln!(s, "  mean per-pair gain   : {mean_gain:.2}");
        }
        s
    }
}

/// SNR of the corrupted and recovered signals against `x`, and their difference.
pub fn recovery_gain(x: &RawSignal, z: &RawSignal, zhat: &RawSignal) -> Result<EvalReport> {
    Ok(EvalReport::from_snrs(snr_db(x, z)?, snr_db(x, zhat)?))
}

/// Scores `recover` on every pair; pooled figures use all pairs at once.
pub fn evaluate<F>(pairs: &[TrainingPair], mut recover: F) -> Result<(EvalReport, Vec<RawSignal>)>
where
    F: FnMut(&RawSignal) -> Result<RawSignal>,
{
    if pairs.is_empty() {
        return Err(Error::Config("no pairs to evaluate".into()));
    }
    let mut per_pair = Vec::with_capacity(pairs.len());
    let mut recovered = Vec::with_capacity(pairs.len());
    for (index, p) in pairs.iter().enumerate() {
        let zhat = recover(&p.z)?;
        let baseline = zerofill_baseline(&p.z);
        let r = recovery_gain(&p.x, &p.z, &zhat)?;
        per_pair.push(PairReport {
            index,
            snr_corrupted_db: r.snr_corrupted_db,
            snr_baseline_db: snr_db(&p.x, &baseline)?,
            snr_recovered_db: r.snr_recovered_db,
            gain_db: r.gain_db,
        });
        recovered.push(zhat);
    }
    let xs: Vec<&RawSignal> = pairs.iter().map(|p| &p.x).collect();
    let zs: Vec<&RawSignal> = pairs.iter().map(|p| &p.z).collect();
    let hats: Vec<&RawSignal> = recovered.iter().collect();
    let mut report = EvalReport::from_snrs(snr_db_many(&xs, &zs)?, snr_db_many(&xs, &hats)?);
    report.per_pair = per_pair;
    Ok((report, recovered))
}

/// `20 log10(|x_i| / max |x|)`, with zero bins at [`PROFILE_FLOOR_DB`].
pub fn downrange_profile_db(x: &RawSignal) -> Result<Vec<f64>> {
    let peak = x.samples().iter().map(|c| c.norm()).fold(0.0, f64::max);
    if peak == 0.0 {
        return Err(Error::UndefinedMetric("profile of an all-zero signal".into()));
    }
    Ok(x.samples()
        .iter()
        .map(|c| {
            let m = c.norm();
            if m == 0.0 {
                PROFILE_FLOOR_DB
            } else {
                (20.0 * (m / peak).log10()).max(PROFILE_FLOOR_DB)
            }
        })
        .collect())
}

/// Named profiles side by side as `bin,<name>...` rows.
pub fn write_profiles_csv<W: Write>(mut w: W, columns: &[(&str, &[f64])]) -> Result<()> {
    let len = columns.first().map_or(0, |c| c.1.len());
    if columns.iter().any(|c| c.1.len() != len) {
        return Err(Error::Dimension("profiles differ in length".into()));
    }
    write!(w, "bin")?;
    for (name, _) in columns {
        write!(w, ",{name}")?;
    }
    writeln!(w)?;
    for i in 0..len {
        write!(w, "{i}")?;
        for (_, values) in columns {
            write!(w, ",{}", values[i])?;
        }
        writeln!(w)?;
    }
    Ok(())
}

/// Self-contained SVG line plot of dB profiles.
pub fn profiles_svg(title: &str, columns: &[(&str, &[f64])]) -> String {
    const W: f64 = 640.0;
    const H: f64 = 320.0;
    const PAD: f64 = 40.0;
    const FLOOR: f64 = -60.0;
    const COLORS: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];
    let len = columns.first().map_or(0, |c| c.1.len()).max(2);
    let x_of = |i: usize| PAD + (W - 2.0 * PAD) * i as f64 / (len - 1) as f64;
    let y_of = |db: f64| PAD + (H - 2.0 * PAD) * (db.max(FLOOR) / FLOOR);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="20" font-family="sans-serif" font-size="14" text-anchor="middle">{title}</text>"#,
        W / 2.0
    );
    for db in [0.0, -20.0, -40.0, -60.0] {
        let y = y_of(db);
        let _ = writeln!(
            s,
            r##"<line x1="{PAD}" y1="{y}" x2="{}" y2="{y}" stroke="#ddd"/><text x="4" y="{}" font-family="sans-serif" font-size="10">{db} dB</text>"##,
            W - PAD,
            y + 3.0
        );
    }
    for (k, (name, values)) in columns.iter().enumerate() {
        let color = COLORS[k % COLORS.len()];
        let points: Vec<String> = values
            .iter()
            .enumerate()
            .map(|(i, &v)| format!("{:.2},{:.2}", x_of(i), y_of(v)))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1" points="{}"/>"#,
            points.join(" ")
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" font-family="sans-serif" font-size="11" fill="{color}">{name}</text>"#,
            W - PAD - 90.0,
            PAD + 14.0 * k as f64
        );
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::Domain;

    fn real(v: &[f64]) -> RawSignal {
        RawSignal::from_real(v, Domain::Time).unwrap()
    }

    #[test]
    fn rms_values() {
        assert_eq!(rms(&real(&[0.0; 4])), 0.0);
        assert!((rms(&real(&[1.0, -1.0, 1.0])) - 1.0).abs() < 1e-15);
        assert!((rms(&real(&[3.0, 4.0])) - 12.5f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn snr_reference_points() {
        let x = real(&[1.0, -1.0, 1.0, -1.0]);
        // error with the same RMS as x
        let xhat = real(&[2.0, -2.0, 2.0, -2.0]);
        assert!(snr_db(&x, &xhat).unwrap().abs() < 1e-12);
        let xhat = real(&[1.1, -0.9, 1.1, -0.9]);
        assert!((snr_db(&x, &xhat).unwrap() - 20.0).abs() < 1e-10);
        assert_eq!(snr_db(&x, &x).unwrap(), f64::INFINITY);
    }

    #[test]
    fn snr_undefined_for_zero_reference() {
        let x = real(&[0.0; 3]);
        assert!(matches!(snr_db(&x, &real(&[1.0; 3])), Err(Error::UndefinedMetric(_))));
    }

    #[test]
    fn table_gain_arithmetic() {
        let r = EvalReport::from_snrs(8.15, 23.99);
        assert!((r.gain_db - 15.84).abs() < 1e-12);
        assert_eq!(r.gain_db, r.snr_recovered_db - r.snr_corrupted_db);
    }

    #[test]
    fn gain_sentinels() {
        let x = real(&[1.0, 2.0, 3.0]);
        let z = real(&[1.0, 0.0, 3.0]);
        assert_eq!(recovery_gain(&x, &z, &z).unwrap().gain_db, 0.0);
        assert_eq!(recovery_gain(&x, &z, &x).unwrap().gain_db, f64::INFINITY);
    }

    #[test]
    fn profile_values() {
        let p = downrange_profile_db(&real(&[0.5, -1.0, 0.0])).unwrap();
        assert!((p[0] + 6.020599913279624).abs() < 1e-12);
        assert_eq!(p[1], 0.0);
        assert_eq!(p[2], PROFILE_FLOOR_DB);
        assert!(downrange_profile_db(&real(&[0.0; 2])).is_err());
    }

    #[test]
    fn profiles_csv_layout() {
        let a = [0.0, -6.0];
        let b = [-1.0, 0.0];
        let mut buf = Vec::new();
        write_profiles_csv(&mut buf, &[("original_db", &a), ("recovered_db", &b)]).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "bin,original_db,recovered_db\n0,0,-1\n1,-6,0\n"
        );
        let svg = profiles_svg("t", &[("a", &a)]);
        assert!(svg.starts_with("<svg") && svg.contains("polyline"));
    }
}
