//! Desk-scale detector trained with auxiliary spectral supervision.
//!
//! A spatial branch (pixel summary to logit) is trained jointly with a
//! frequency teacher over [`crate::features`] vectors. Only the spatial
//! branch is used at inference.

mod loss;
mod metrics;
mod model;
mod schedule;
mod train;

pub use loss::{align_loss, bce, bce_grad, mean_bce, sigmoid, standardize_vector, supcon_loss, LossGrad};
pub use metrics::{balanced_accuracy, class_accuracy, ClassAccuracy};
pub use model::{
    objective, teacher_target, total_loss, Affine, LossReport, LossTerms, LossWeights, Params,
    SpatialDetector, Standardizer, ToyStalModel, EMBED_DIM, LN_EPS, PIXEL_DIM, PROJ_DIM,
    TAIL_SLICE,
};
pub use schedule::{curriculum_weight, CurriculumSchedule};
pub use train::{
    evaluate, predict, train, LogRow, SavedModel, TrainConfig, TrainOutcome, TrainingLog,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::extract_features;
use crate::ingest::{center_crop_pow2, DEFAULT_ANALYSIS_SIZE};
use crate::plane::Plane;

pub const POOL_GRID: usize = 16;

/// One labeled training example. Label 0 is real, 1 is fake.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub features: Vec<f64>,
    pub pixels: Vec<f64>,
    pub label: u8,
}

/// 256-value spatial summary: `|dx| + |dy|` forward differences (zero on the
/// last column/row), average-pooled on a 16x16 grid and divided by 255.
pub fn pixel_summary(plane: &Plane) -> Result<Vec<f64>> {
    let (w, h) = (plane.width(), plane.height());
    if w == 0 || h == 0 || w % POOL_GRID != 0 || h % POOL_GRID != 0 {
        return Err(Error::dim(format!(
            "{w}x{h} plane does not tile a {POOL_GRID}x{POOL_GRID} grid"
        )));
    }
    let (cw, ch) = (w / POOL_GRID, h / POOL_GRID);
    let mut out = vec![0.0; POOL_GRID * POOL_GRID];
    for y in 0..h {
        for x in 0..w {
            let v = plane.get(x, y);
            let dx = if x + 1 < w { (plane.get(x + 1, y) - v).abs() } else { 0.0 };
            let dy = if y + 1 < h { (plane.get(x, y + 1) - v).abs() } else { 0.0 };
            out[(y / ch) * POOL_GRID + x / cw] += dx + dy;
        }
    }
    let scale = 1.0 / (255.0 * (cw * ch) as f64);
    out.iter_mut().for_each(|v| *v *= scale);
    Ok(out)
}

/// Features from the centered 256x256 crop and the pixel summary of the whole plane.
pub fn sample_from_plane(plane: &Plane, label: u8) -> Result<Sample> {
    let crop = center_crop_pow2(plane, DEFAULT_ANALYSIS_SIZE)?;
    Ok(Sample {
        features: extract_features(&crop)?.0,
        pixels: pixel_summary(plane)?,
        label,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn summary_of_constant_and_ramp() {
        assert!(pixel_summary(&Plane::filled(32, 32, 9.0)).unwrap().iter().all(|&v| v == 0.0));
        // horizontal ramp of slope 1: every cell but the right column sees |dx| = 1
        let s = pixel_summary(&Plane::from_fn(32, 32, |x, _| x as f64)).unwrap();
        assert_eq!(s.len(), 256);
        assert!((s[0] - 1.0 / 255.0).abs() < 1e-15);
        assert!((s[15] - 0.5 / 255.0).abs() < 1e-15);
    }

    #[test]
    fn summary_rejects_untileable_planes() {
        assert!(matches!(pixel_summary(&Plane::zeros(24, 32)), Err(Error::Dimension(_))));
    }
}
