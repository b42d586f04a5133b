//! Synthetic labeled corpora: pink-noise reals and cascade fakes, quantized
//! to 8 bits and optionally JPEG-degraded.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harmonics::{cascade2d, pink_noise, Activation2d, Cascade2dConfig, KernelInit};
use crate::plane::Plane;
use crate::transforms::jpeg_degrade;

/// Gray level per unit of standardized field value.
pub const PIXEL_SCALE: f64 = 40.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    /// Images per class.
    pub count: usize,
    pub size: usize,
    pub activation: Activation2d,
    pub depth: usize,
    pub init: KernelInit,
    /// Applied to both classes after quantization.
    pub jpeg_quality: Option<u8>,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            count: 16,
            size: 256,
            activation: Activation2d::Relu,
            depth: 4,
            init: KernelInit::default(),
            jpeg_quality: None,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.count == 0 {
            return Err(Error::Config("image count must be positive".into()));
        }
        if self.size < 16 || !self.size.is_power_of_two() {
            return Err(Error::Config(format!(
                "image size {} must be a power of two >= 16",
                self.size
            )));
        }
        if self.depth == 0 {
            return Err(Error::Config("cascade depth must be at least 1".into()));
        }
        if let Some(q) = self.jpeg_quality {
            if !(1..=100).contains(&q) {
                return Err(Error::Config(format!("JPEG quality {q} outside 1..=100")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthImage {
    /// File stem, e.g. `real_0007`.
    pub name: String,
    /// 0 real, 1 fake.
    pub label: u8,
    /// Integer gray levels in [0, 255].
    pub plane: Plane,
}

/// Independent per-image seed for a stream (0 real field, 1 fake field, 2 fake kernels).
pub fn derive_seed(seed: u64, stream: u64, index: u64) -> u64 {
    // splitmix64 finalizer over a combined key
    let mut z = seed
        .wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(stream.wrapping_mul(0xD1B5_4A32_D192_ED03))
        .wrapping_add(index.wrapping_mul(0x94D0_49BB_1331_11EB))
        .wrapping_add(0x2545_F491_4F6C_DD1D);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// `clamp(round(128 + 40 x), 0, 255)`.
pub fn quantize_8bit(plane: &Plane) -> Plane {
    plane.map(|x| (128.0 + PIXEL_SCALE * x).round().clamp(0.0, 255.0))
}

fn finish(plane: &Plane, cfg: &SynthConfig) -> Result<Plane> {
    let q = quantize_8bit(plane);
    match cfg.jpeg_quality {
        Some(quality) => Ok(jpeg_degrade(&q, quality)?.map(f64::round)),
        None => Ok(q),
    }
}

/// Standardized pink field of real image `index`, before quantization.
pub fn real_field(cfg: &SynthConfig, index: usize) -> Result<Plane> {
    pink_noise(cfg.size, derive_seed(cfg.seed, 0, index as u64))
}

/// Cascade output of fake image `index`, before quantization.
pub fn fake_field(cfg: &SynthConfig, index: usize) -> Result<Plane> {
    let base = pink_noise(cfg.size, derive_seed(cfg.seed, 1, index as u64))?;
    let cascade = Cascade2dConfig {
        init: cfg.init,
        ..Cascade2dConfig::new(cfg.activation.clone(), cfg.depth, derive_seed(cfg.seed, 2, index as u64))
    };
    cascade2d(&base, &cascade)
}

pub fn synth_image(cfg: &SynthConfig, label: u8, index: usize) -> Result<SynthImage> {
    let (prefix, field) = match label {
        0 => ("real", real_field(cfg, index)?),
        1 => ("fake", fake_field(cfg, index)?),
        _ => return Err(Error::Data(format!("label {label} is not 0 or 1"))),
    };
    Ok(SynthImage {
        name: format!("{prefix}_{index:04}"),
        label,
        plane: finish(&field, cfg)?,
    })
}

/// `count` reals followed by `count` fakes. Images are generated in parallel;
/// each depends only on its own derived seeds.
pub fn synth_corpus(cfg: &SynthConfig) -> Result<Vec<SynthImage>> {
    cfg.validate()?;
    (0..2 * cfg.count)
        .into_par_iter()
        .map(|i| synth_image(cfg, (i / cfg.count) as u8, i % cfg.count))
        .collect()
}

/// Writes an 8-bit grayscale PNG; values are rounded and clamped.
pub fn write_gray_png(plane: &Plane, path: &Path) -> Result<()> {
    let bytes: Vec<u8> = plane
        .data()
        .iter()
        .map(|v| v.round().clamp(0.0, 255.0) as u8)
        .collect();
    image::save_buffer(
        path,
        &bytes,
        plane.width() as u32,
        plane.height() as u32,
        image::ExtendedColorType::L8,
    )
    .map_err(|e| match e {
        image::ImageError::IoError(source) => Error::Io {
            path: path.to_path_buf(),
            source,
        },
        other => Error::Decode {
            path: path.to_path_buf(),
            message: other.to_string(),
        },
    })
}
