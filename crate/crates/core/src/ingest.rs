//! Image decoding, full-range BT.601 YCbCr conversion and centered
//! power-of-two cropping.

use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::plane::Plane;

/// Analysis crop used when nothing else is requested.
pub const DEFAULT_ANALYSIS_SIZE: usize = 256;

/// Interleaved-free 8-bit RGB image; all three planes share dimensions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbImage {
    width: usize,
    height: usize,
    r: Vec<u8>,
    g: Vec<u8>,
    b: Vec<u8>,
}

impl RgbImage {
    pub fn new(width: usize, height: usize, r: Vec<u8>, g: Vec<u8>, b: Vec<u8>) -> Result<Self> {
        let n = width * height;
        if r.len() != n || g.len() != n || b.len() != n {
            return Err(Error::dim(format!(
                "RGB planes must all hold {width}x{height} samples"
            )));
        }
        Ok(Self {
            width,
            height,
            r,
            g,
            b,
        })
    }

    pub fn from_gray(width: usize, height: usize, gray: Vec<u8>) -> Result<Self> {
        Self::new(width, height, gray.clone(), gray.clone(), gray)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixel(&self, x: usize, y: usize) -> (u8, u8, u8) {
        let i = y * self.width + x;
        (self.r[i], self.g[i], self.b[i])
    }

    pub fn channel(&self, channel: Channel) -> Plane {
        let src = match channel {
            Channel::R => &self.r,
            Channel::G => &self.g,
            Channel::B => &self.b,
            Channel::Y => return to_ycbcr(self).y,
        };
        Plane::new(
            self.width,
            self.height,
            src.iter().map(|&v| v as f64).collect(),
        )
        .expect("plane dimensions match the image")
    }
}

/// Which plane an analysis runs on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Channel {
    #[default]
    Y,
    R,
    G,
    B,
}

impl FromStr for Channel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "y" => Ok(Channel::Y),
            "r" => Ok(Channel::R),
            "g" => Ok(Channel::G),
            "b" => Ok(Channel::B),
            other => Err(Error::domain(format!("unknown channel {other:?}"))),
        }
    }
}

impl std::fmt::Display for Channel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Channel::Y => "y",
            Channel::R => "r",
            Channel::G => "g",
            Channel::B => "b",
        })
    }
}

/// Decodes a PNG or JPEG file. Grayscale sources are replicated to three channels.
pub fn decode(path: &Path) -> Result<RgbImage> {
    let bytes = std::fs::read(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    decode_bytes(&bytes).map_err(|message| Error::Decode {
        path: path.to_path_buf(),
        message,
    })
}

fn decode_bytes(bytes: &[u8]) -> std::result::Result<RgbImage, String> {
    let img = image::load_from_memory(bytes).map_err(|e| e.to_string())?;
    let rgb = img.to_rgb8();
    let (w, h) = (rgb.width() as usize, rgb.height() as usize);
    let mut r = Vec::with_capacity(w * h);
    let mut g = Vec::with_capacity(w * h);
    let mut b = Vec::with_capacity(w * h);
    for p in rgb.pixels() {
        r.push(p[0]);
        g.push(p[1]);
        b.push(p[2]);
    }
    RgbImage::new(w, h, r, g, b).map_err(|e| e.to_string())
}

/// Full-range BT.601 planes. Values are not clamped: pure blue gives Cb = 255.5.
#[derive(Debug, Clone, PartialEq)]
pub struct YCbCrPlanes {
    pub y: Plane,
    pub cb: Plane,
    pub cr: Plane,
}

pub fn to_ycbcr(img: &RgbImage) -> YCbCrPlanes {
    let n = img.width * img.height;
    let mut y = Vec::with_capacity(n);
    let mut cb = Vec::with_capacity(n);
    let mut cr = Vec::with_capacity(n);
    for i in 0..n {
        let (r, g, b) = (img.r[i] as f64, img.g[i] as f64, img.b[i] as f64);
        y.push(0.299 * r + 0.587 * g + 0.114 * b);
        cb.push(128.0 - 0.168736 * r - 0.331264 * g + 0.5 * b);
        cr.push(128.0 + 0.5 * r - 0.418688 * g - 0.081312 * b);
    }
    let plane = |v| Plane::new(img.width, img.height, v).expect("sizes match");
    YCbCrPlanes {
        y: plane(y),
        cb: plane(cb),
        cr: plane(cr),
    }
}

/// Exact inverse of the forward matrix in [`to_ycbcr`], returning real-valued RGB planes.
pub fn from_ycbcr(planes: &YCbCrPlanes) -> [Plane; 3] {
    const FWD: [[f64; 3]; 3] = [
        [0.299, 0.587, 0.114],
        [-0.168736, -0.331264, 0.5],
        [0.5, -0.418688, -0.081312],
    ];
    let inv = invert3(&FWD);
    let (w, h) = (planes.y.width(), planes.y.height());
    let mut out = [Plane::zeros(w, h), Plane::zeros(w, h), Plane::zeros(w, h)];
    for i in 0..w * h {
        let v = [
            planes.y.data()[i],
            planes.cb.data()[i] - 128.0,
            planes.cr.data()[i] - 128.0,
        ];
        for (c, plane) in out.iter_mut().enumerate() {
            plane.data_mut()[i] = inv[c][0] * v[0] + inv[c][1] * v[1] + inv[c][2] * v[2];
        }
    }
    out
}

fn invert3(m: &[[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
        - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
    let mut inv = [[0.0; 3]; 3];
    for (i, row) in inv.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            let (a, b) = ((j + 1) % 3, (j + 2) % 3);
            let (c, d) = ((i + 1) % 3, (i + 2) % 3);
            *v = (m[a][c] * m[b][d] - m[a][d] * m[b][c]) / det;
        }
    }
    inv
}

/// Centered `target`x`target` crop. Odd margins drop the extra row/column from
/// the bottom/right.
pub fn center_crop_pow2(plane: &Plane, target: usize) -> Result<Plane> {
    if target == 0 || !target.is_power_of_two() {
        return Err(Error::domain(format!(
            "crop target {target} must be a power of two"
        )));
    }
    let (w, h) = (plane.width(), plane.height());
    if w < target || h < target {
        return Err(Error::Size {
            width: w,
            height: h,
            target,
        });
    }
    let left = (w - target) / 2;
    let top = (h - target) / 2;
    Ok(Plane::from_fn(target, target, |x, y| plane.get(left + x, top + y)))
}
