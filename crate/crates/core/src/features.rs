//! Fixed-length spectral feature vectors: anchored radial curve, tail and
//! power-law statistics, and blockwise DCT band statistics.

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::plane::Plane;
use crate::spectrum::{
    fit_power_law, normalize_anchor, radial_log_power, tail_uplift, RadialSpectrum, ANCHOR_RHO,
    DEFAULT_BINS, DEFAULT_FIT_BAND, LOG_FLOOR,
};
use crate::transforms::{dct8x8_array, for_each_block};

pub const FEATURE_LEN: usize = 74;
pub const RADIAL_LEN: usize = 64;
pub const TAIL_DELTA: usize = 64;
pub const TAIL_RHO_MIN: usize = 65;
pub const FIT_ALPHA: usize = 66;
pub const FIT_RESIDUAL: usize = 67;
pub const DCT_START: usize = 68;

/// Zigzag positions `(row, col)` of the 64 DCT coefficients, DC first.
pub fn zigzag() -> &'static [(usize, usize); 64] {
    static ORDER: OnceLock<[(usize, usize); 64]> = OnceLock::new();
    ORDER.get_or_init(|| {
        let mut order = [(0, 0); 64];
        let mut i = 0;
        for s in 0..15usize {
            let lo = s.saturating_sub(7);
            let hi = s.min(7);
            let rows: Vec<usize> = if s % 2 == 0 {
                (lo..=hi).rev().collect()
            } else {
                (lo..=hi).collect()
            };
            for r in rows {
                order[i] = (r, s - r);
                i += 1;
            }
        }
        order
    })
}

/// Zigzag index ranges of the low, mid and high bands (DC excluded).
pub const BANDS: [(usize, usize); 3] = [(1, 9), (10, 35), (36, 63)];

/// Mean and population variance of per-block log10 band energy, for the
/// low, mid and high zigzag bands.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DctStats {
    pub mean: [f64; 3],
    pub var: [f64; 3],
}

impl DctStats {
    /// `[low_mean, low_var, mid_mean, mid_var, high_mean, high_var]`.
    pub fn to_array(&self) -> [f64; 6] {
        [
            self.mean[0],
            self.var[0],
            self.mean[1],
            self.var[1],
            self.mean[2],
            self.var[2],
        ]
    }
}

pub fn dct_local_stats(plane: &Plane) -> Result<DctStats> {
    let zz = zigzag();
    let mut logs: [Vec<f64>; 3] = Default::default();
    for_each_block(plane, |b| {
        let c = dct8x8_array(b).coefficients;
        for (band, &(lo, hi)) in BANDS.iter().enumerate() {
            let e: f64 = zz[lo..=hi].iter().map(|&(k, l)| c[k][l] * c[k][l]).sum();
            logs[band].push(e.max(LOG_FLOOR).log10());
        }
    })?;
    let mut stats = DctStats {
        mean: [0.0; 3],
        var: [0.0; 3],
    };
    for band in 0..3 {
        let n = logs[band].len() as f64;
        let m = logs[band].iter().sum::<f64>() / n;
        stats.mean[band] = m;
        stats.var[band] = logs[band].iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n;
    }
    Ok(stats)
}

/// Pairwise-mean downsampling of a spectrum to half as many bins.
pub fn downsample_pairs(spec: &RadialSpectrum) -> RadialSpectrum {
    let half = spec.len() / 2;
    let pair = |v: &[f64], i: usize| 0.5 * (v[2 * i] + v[2 * i + 1]);
    RadialSpectrum {
        rho: (0..half).map(|i| pair(&spec.rho, i)).collect(),
        log_power: (0..half).map(|i| pair(&spec.log_power, i)).collect(),
        counts: (0..half)
            .map(|i| spec.counts[2 * i] + spec.counts[2 * i + 1])
            .collect(),
    }
}

/// Layout: 0..64 anchored radial curve, 64 tail delta, 65 tail rho_min,
/// 66 alpha, 67 fit residual, 68..74 DCT stats as in [`DctStats::to_array`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector(pub Vec<f64>);

impl FeatureVector {
    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn column_names() -> Vec<String> {
        (0..FEATURE_LEN).map(|i| format!("f{i}")).collect()
    }
}

/// Full feature vector of a square power-of-two Y plane of side at least 256.
pub fn extract_features(plane: &Plane) -> Result<FeatureVector> {
    let spec = radial_log_power(plane, DEFAULT_BINS)?;
    let radial = normalize_anchor(&downsample_pairs(&spec), ANCHOR_RHO)?;
    let tail = tail_uplift(&spec)?;
    let fit = fit_power_law(&spec, DEFAULT_FIT_BAND.0, DEFAULT_FIT_BAND.1)?;
    let dct = dct_local_stats(plane)?;

    let mut v = Vec::with_capacity(FEATURE_LEN);
    v.extend_from_slice(&radial.log_power);
    v.extend([tail.delta, tail.rho_min, fit.alpha, fit.residual_rms]);
    v.extend(dct.to_array());
    debug_assert_eq!(v.len(), FEATURE_LEN);
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numeric("non-finite feature".into()));
    }
    Ok(FeatureVector(v))
}
