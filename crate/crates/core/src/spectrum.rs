//! Azimuthally averaged radial log-power spectra, power-law fits, anchored
//! tail curves and the tail-uplift statistic.
//!
//! Radial frequency is normalized so that the image-axis Nyquist frequency sits
//! at `rho = 1`; corner frequencies beyond that are discarded, which keeps every
//! annulus in `(0, 1]` fully populated.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::plane::Plane;
use crate::transforms::{fft2d, signed_frequency};

pub const DEFAULT_BINS: usize = 128;
pub const LOG_FLOOR: f64 = 1e-12;
/// Tail band searched by [`tail_uplift`].
pub const TAIL_BAND: (f64, f64) = (0.7, 1.0);
pub const ANCHOR_RHO: f64 = 0.7;
pub const DEFAULT_FIT_BAND: (f64, f64) = (0.05, 0.5);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadialSpectrum {
    /// Bin centres, strictly increasing inside (0, 1].
    pub rho: Vec<f64>,
    /// log10 of the mean power in each annulus.
    pub log_power: Vec<f64>,
    /// Number of DFT bins averaged into each annulus.
    pub counts: Vec<usize>,
}

impl RadialSpectrum {
    pub fn len(&self) -> usize {
        self.rho.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rho.is_empty()
    }

    /// Linear interpolation of `log_power` at `rho0`.
    pub fn interpolate(&self, rho0: f64) -> Result<f64> {
        let n = self.len();
        if n == 0 || !(self.rho[0]..=self.rho[n - 1]).contains(&rho0) {
            return Err(Error::domain(format!(
                "rho {rho0} outside the spectrum range"
            )));
        }
        let i = match self.rho.iter().position(|&r| r >= rho0) {
            Some(0) => return Ok(self.log_power[0]),
            Some(i) => i,
            None => return Ok(self.log_power[n - 1]),
        };
        let (r0, r1) = (self.rho[i - 1], self.rho[i]);
        let t = (rho0 - r0) / (r1 - r0);
        Ok(self.log_power[i - 1] + t * (self.log_power[i] - self.log_power[i - 1]))
    }

    /// Writes `rho,log10_power,count` rows with 9 significant digits.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "rho,log10_power,count")?;
        for i in 0..self.len() {
            writeln!(
                w,
                "{},{},{}",
                crate::fmt::sig(self.rho[i], 9),
                crate::fmt::sig(self.log_power[i], 9),
                self.counts[i]
            )?;
        }
        Ok(())
    }
}

/// Radial log-power spectrum of a square power-of-two plane.
pub fn radial_log_power(plane: &Plane, bins: usize) -> Result<RadialSpectrum> {
    if !plane.is_square() {
        return Err(Error::dim(format!(
            "radial spectrum needs a square plane, got {}x{}",
            plane.width(),
            plane.height()
        )));
    }
    if bins < 16 {
        return Err(Error::domain(format!("need at least 16 bins, got {bins}")));
    }
    let n = plane.width();
    let mean = plane.mean();
    let centred = plane.map(|v| v - mean);
    let field = fft2d(&centred)?;

    let half = (n / 2) as f64;
    let mut sums = vec![0.0; bins];
    let mut counts = vec![0usize; bins];
    for v in 0..n {
        let fv = signed_frequency(v, n);
        for u in 0..n {
            let fu = signed_frequency(u, n);
            let r2 = fu * fu + fv * fv;
            if r2 == 0 {
                continue;
            }
            let scaled = (r2 as f64).sqrt() * bins as f64 / half;
            if scaled > bins as f64 {
                continue;
            }
            let idx = (scaled.ceil() as usize).saturating_sub(1);
            sums[idx] += field.get(u, v).norm_sqr();
            counts[idx] += 1;
        }
    }
    if let Some(empty) = counts.iter().position(|&c| c == 0) {
        return Err(Error::domain(format!(
            "{bins} bins is too fine for a {n}x{n} plane (bin {empty} is empty)"
        )));
    }
    let rho = (0..bins).map(|i| (i as f64 + 0.5) / bins as f64).collect();
    let log_power = sums
        .iter()
        .zip(&counts)
        .map(|(s, &c)| (s / c as f64).max(LOG_FLOOR).log10())
        .collect();
    Ok(RadialSpectrum {
        rho,
        log_power,
        counts,
    })
}

/// Mean of several log-spectra with identical binning (log first, then average).
pub fn mean_log_spectrum(spectra: &[RadialSpectrum]) -> Result<RadialSpectrum> {
    let first = spectra
        .first()
        .ok_or_else(|| Error::Data("no spectra to average".into()))?;
    if spectra.iter().any(|s| s.rho != first.rho) {
        return Err(Error::domain("spectra have different binning"));
    }
    let k = spectra.len() as f64;
    let log_power = (0..first.len())
        .map(|i| spectra.iter().map(|s| s.log_power[i]).sum::<f64>() / k)
        .collect();
    Ok(RadialSpectrum {
        rho: first.rho.clone(),
        log_power,
        counts: first.counts.clone(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerLawFit {
    /// Decay exponent in `S(rho) ~ rho^-alpha`.
    pub alpha: f64,
    /// log10 scale at rho = 1.
    pub intercept: f64,
    pub residual_rms: f64,
    pub band: (f64, f64),
}

/// Ordinary least squares of log10 power against log10 rho over `[rho_lo, rho_hi]`.
pub fn fit_power_law(spec: &RadialSpectrum, rho_lo: f64, rho_hi: f64) -> Result<PowerLawFit> {
    if !(rho_lo > 0.0 && rho_lo < rho_hi && rho_hi <= 1.0) {
        return Err(Error::Fit(format!(
            "invalid band ({rho_lo}, {rho_hi})"
        )));
    }
    let pts: Vec<(f64, f64)> = spec
        .rho
        .iter()
        .zip(&spec.log_power)
        .filter(|(r, _)| (rho_lo..=rho_hi).contains(*r))
        .map(|(r, p)| (r.log10(), *p))
        .collect();
    if pts.len() < 8 {
        return Err(Error::Fit(format!(
            "only {} bins inside ({rho_lo}, {rho_hi}); need at least 8",
            pts.len()
        )));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = pts
        .iter()
        .map(|p| (p.1 - (intercept + slope * p.0)).powi(2))
        .sum();
    Ok(PowerLawFit {
        alpha: -slope,
        intercept,
        residual_rms: (sse / n).sqrt(),
        band: (rho_lo, rho_hi),
    })
}

/// Subtracts the interpolated log-power at `rho0` from every bin.
pub fn normalize_anchor(spec: &RadialSpectrum, rho0: f64) -> Result<RadialSpectrum> {
    let anchor = spec.interpolate(rho0)?;
    Ok(RadialSpectrum {
        rho: spec.rho.clone(),
        log_power: spec.log_power.iter().map(|p| p - anchor).collect(),
        counts: spec.counts.clone(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailUplift {
    /// Location of the smoothed tail minimum.
    pub rho_min: f64,
    /// Rise in log10 power from the tail minimum to the last bin; never negative.
    pub delta: f64,
    pub band: (f64, f64),
}

/// Centred 3-bin moving average; the window shrinks at both ends of the slice.
fn smooth3(v: &[f64]) -> Vec<f64> {
    (0..v.len())
        .map(|i| {
            let lo = i.saturating_sub(1);
            let hi = (i + 2).min(v.len());
            v[lo..hi].iter().sum::<f64>() / (hi - lo) as f64
        })
        .collect()
}

/// Tail uplift over `rho` in [0.7, 1]: smooth, find the minimum, and measure
/// the rise from it to the last bin.
pub fn tail_uplift(spec: &RadialSpectrum) -> Result<TailUplift> {
    let start = spec.rho.iter().position(|&r| r >= TAIL_BAND.0);
    let last = spec.rho.last().copied().unwrap_or(0.0);
    let start = match start {
        Some(s) if last >= 0.99 && spec.len() - s >= 3 => s,
        _ => {
            return Err(Error::domain(format!(
                "spectrum must cover the tail band up to rho >= 0.99 (last bin {last})"
            )))
        }
    };
    let smoothed = smooth3(&spec.log_power[start..]);
    let (mut imin, mut vmin) = (0, f64::INFINITY);
    for (i, &v) in smoothed.iter().enumerate() {
        if v < vmin {
            imin = i;
            vmin = v;
        }
    }
    let end = *smoothed.last().expect("tail band is non-empty");
    Ok(TailUplift {
        rho_min: spec.rho[start + imin],
        delta: (end - vmin).max(0.0),
        band: TAIL_BAND,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harmonics::noise::power_law_field;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn synthetic(log_power: Vec<f64>) -> RadialSpectrum {
        let b = log_power.len();
        RadialSpectrum {
            rho: (0..b).map(|i| (i as f64 + 0.5) / b as f64).collect(),
            log_power,
            counts: vec![1; b],
        }
    }

    fn white_noise(n: usize, seed: u64) -> Plane {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Plane::from_fn(n, n, |_, _| StandardNormal.sample(&mut rng))
    }

    #[test]
    fn binning_contract() {
        let s = radial_log_power(&white_noise(256, 1), 128).unwrap();
        assert_eq!(s.len(), 128);
        assert!(s.rho[0] > 0.0 && *s.rho.last().unwrap() <= 1.0);
        assert!(s.rho.windows(2).all(|w| w[0] < w[1]));
        assert!(s.counts.iter().all(|&c| c > 0));
        // bin 0 covers radius (0, 1]: the four axis neighbours of DC
        assert_eq!(s.counts[0], 4);
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(matches!(
            radial_log_power(&Plane::zeros(64, 32), 16),
            Err(Error::Dimension(_))
        ));
        assert!(matches!(
            radial_log_power(&Plane::zeros(48, 48), 16),
            Err(Error::Dimension(_))
        ));
        assert!(matches!(
            radial_log_power(&Plane::zeros(64, 64), 8),
            Err(Error::Domain(_))
        ));
        // 128 bins on a 64x64 plane leaves annuli empty
        assert!(matches!(
            radial_log_power(&white_noise(64, 0), 128),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn white_noise_mean_curve_is_flat() {
        let spectra: Vec<_> = (0..64)
            .map(|s| radial_log_power(&white_noise(256, 1000 + s), 128).unwrap())
            .collect();
        let mean = mean_log_spectrum(&spectra).unwrap();
        let band: Vec<f64> = mean
            .rho
            .iter()
            .zip(&mean.log_power)
            .filter(|(r, _)| (0.1..=0.9).contains(*r))
            .map(|(_, p)| *p)
            .collect();
        let range = band.iter().cloned().fold(f64::MIN, f64::max)
            - band.iter().cloned().fold(f64::MAX, f64::min);
        assert!(range < 0.15, "range {range}");
    }

    #[test]
    fn grating_dominates_its_annulus() {
        let n = 256;
        let p = Plane::from_fn(n, n, |x, _| {
            (2.0 * std::f64::consts::PI * (n / 4) as f64 * x as f64 / n as f64).cos()
        });
        let s = radial_log_power(&p, 128).unwrap();
        // frequency n/4 = 64 -> rho 0.5 -> bin 63
        let peak = s.log_power[63];
        for (i, v) in s.log_power.iter().enumerate() {
            if i != 63 {
                assert!(peak - v > 3.0, "bin {i}: {v} vs peak {peak}");
            }
        }
    }

    #[test]
    fn dc_offset_does_not_change_spectrum() {
        let p = white_noise(64, 4);
        let shifted = p.map(|v| v + 17.5);
        let a = radial_log_power(&p, 32).unwrap();
        let b = radial_log_power(&shifted, 32).unwrap();
        for (x, y) in a.log_power.iter().zip(&b.log_power) {
            assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn rotation_and_flip_invariance() {
        let p = white_noise(128, 8);
        let base = radial_log_power(&p, 64).unwrap();
        for q in [p.rotate90(), p.flip_horizontal(), p.flip_vertical()] {
            let s = radial_log_power(&q, 64).unwrap();
            for (x, y) in base.log_power.iter().zip(&s.log_power) {
                assert!((x - y).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn exact_power_laws_are_fit_exactly() {
        let b = 128;
        let line = synthetic((0..b).map(|i| -2.0 * ((i as f64 + 0.5) / b as f64).log10()).collect());
        let fit = fit_power_law(&line, 0.05, 0.5).unwrap();
        assert!((fit.alpha - 2.0).abs() < 1e-9);
        assert!(fit.residual_rms < 1e-9);

        let flat = synthetic(vec![3.0; b]);
        let fit = fit_power_law(&flat, 0.05, 0.5).unwrap();
        assert!(fit.alpha.abs() < 1e-9);
        assert!((fit.intercept - 3.0).abs() < 1e-9);
    }

    #[test]
    fn fit_needs_eight_bins() {
        let s = synthetic(vec![0.0; 16]);
        assert!(matches!(fit_power_law(&s, 0.05, 0.3), Err(Error::Fit(_))));
        assert!(fit_power_law(&s, 0.01, 0.6).is_ok());
    }

    #[test]
    fn planted_exponents_are_recovered() {
        for alpha in [0.5, 1.0, 2.0, 3.0] {
            let field = power_law_field(256, alpha, 42).unwrap();
            let fit =
                fit_power_law(&radial_log_power(&field, 128).unwrap(), 0.05, 0.5).unwrap();
            assert!((fit.alpha - alpha).abs() < 0.1, "planted {alpha}, got {}", fit.alpha);
        }
    }

    #[test]
    fn anchoring() {
        let s = synthetic((0..64).map(|i| (i as f64 * 0.37).sin() * 2.0 - i as f64 * 0.01).collect());
        let a = normalize_anchor(&s, 0.7).unwrap();
        assert!(a.interpolate(0.7).unwrap().abs() < 1e-12);
        let again = normalize_anchor(&a, 0.7).unwrap();
        for (x, y) in a.log_power.iter().zip(&again.log_power) {
            assert!((x - y).abs() < 1e-12);
        }
        let shifted = synthetic(s.log_power.iter().map(|v| v + 5.0).collect());
        let b = normalize_anchor(&shifted, 0.7).unwrap();
        for (x, y) in a.log_power.iter().zip(&b.log_power) {
            assert!((x - y).abs() < 1e-12);
        }
        assert!(matches!(normalize_anchor(&s, 0.001), Err(Error::Domain(_))));
    }

    #[test]
    fn monotone_tail_has_no_uplift() {
        let b = 128;
        let s = synthetic((0..b).map(|i| -(i as f64) * 0.02).collect());
        let t = tail_uplift(&s).unwrap();
        assert_eq!(t.delta, 0.0);
        assert_eq!(t.rho_min, *s.rho.last().unwrap());
    }

    #[test]
    fn constructed_tail_uplift() {
        // flat at -3.0 around rho 0.85 and flat at -2.8 over the last bins, so
        // the 3-bin smoothing leaves both levels untouched
        let b = 128;
        let s = synthetic(
            (0..b)
                .map(|i| {
                    let r = (i as f64 + 0.5) / b as f64;
                    if r < 0.8 {
                        -3.0 + (0.8 - r) * 2.0
                    } else if r <= 0.9 {
                        -3.0
                    } else if r < 0.96 {
                        -3.0 + 0.2 * (r - 0.9) / 0.06
                    } else {
                        -2.8
                    }
                })
                .collect(),
        );
        let t = tail_uplift(&s).unwrap();
        assert!((t.delta - 0.2).abs() < 1e-9, "delta {}", t.delta);
        assert!((0.8..=0.9).contains(&t.rho_min));
    }

    #[test]
    fn tail_requires_coverage() {
        let s = synthetic(vec![0.0; 16]);
        assert!(matches!(tail_uplift(&s), Err(Error::Domain(_))));
    }

    #[test]
    fn csv_has_header_and_rows() {
        let s = synthetic(vec![1.0, 2.0, 3.0]);
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], "rho,log10_power,count");
        assert_eq!(lines[1], "0.166666667,1,1");
        assert_eq!(lines.len(), 4);
    }
}
