//! Discrete transforms shared by every analysis path: the 2D FFT, the
//! orthonormal 8x8 DCT-II and a JPEG-style quantize/dequantize round trip.

use std::sync::OnceLock;

use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::plane::Plane;

/// Complex spectrum of a 2D field, row-major, DC at index (0, 0).
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexField {
    width: usize,
    height: usize,
    values: Vec<Complex64>,
}

impl ComplexField {
    pub fn new(width: usize, height: usize, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != width * height {
            return Err(Error::dim(format!(
                "{} values cannot fill a {width}x{height} field",
                values.len()
            )));
        }
        Ok(Self {
            width,
            height,
            values,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    /// Bin at horizontal frequency index `u` and vertical index `v`.
    #[inline]
    pub fn get(&self, u: usize, v: usize) -> Complex64 {
        self.values[v * self.width + u]
    }

    pub fn power(&self) -> Vec<f64> {
        self.values.iter().map(|c| c.norm_sqr()).collect()
    }

    /// Real parts as a plane; the caller asserts the imaginary parts are negligible.
    pub fn real_plane(&self) -> Plane {
        Plane::new(
            self.width,
            self.height,
            self.values.iter().map(|c| c.re).collect(),
        )
        .expect("field dimensions are consistent")
    }
}

/// Signed frequency for DFT index `k` on an axis of length `n`; `n/2` maps to `+n/2`.
#[inline]
pub fn signed_frequency(k: usize, n: usize) -> i64 {
    if k <= n / 2 {
        k as i64
    } else {
        k as i64 - n as i64
    }
}

fn check_pow2(width: usize, height: usize) -> Result<()> {
    for (name, n) in [("width", width), ("height", height)] {
        if n < 8 || !n.is_power_of_two() {
            return Err(Error::dim(format!(
                "{name} {n} must be a power of two and at least 8"
            )));
        }
    }
    Ok(())
}

fn transform_in_place(width: usize, height: usize, data: &mut [Complex64], inverse: bool) {
    let mut planner = FftPlanner::<f64>::new();
    let (row_fft, col_fft) = if inverse {
        (planner.plan_fft_inverse(width), planner.plan_fft_inverse(height))
    } else {
        (planner.plan_fft_forward(width), planner.plan_fft_forward(height))
    };
    row_fft.process(data);

    let mut column = vec![Complex64::new(0.0, 0.0); height];
    for x in 0..width {
        for (y, c) in column.iter_mut().enumerate() {
            *c = data[y * width + x];
        }
        col_fft.process(&mut column);
        for (y, c) in column.iter().enumerate() {
            data[y * width + x] = *c;
        }
    }
}

/// Forward unnormalized 2D DFT of a real plane.
pub fn fft2d(plane: &Plane) -> Result<ComplexField> {
    check_pow2(plane.width(), plane.height())?;
    let mut data: Vec<Complex64> = plane
        .data()
        .iter()
        .map(|&v| Complex64::new(v, 0.0))
        .collect();
    transform_in_place(plane.width(), plane.height(), &mut data, false);
    ComplexField::new(plane.width(), plane.height(), data)
}

/// Forward unnormalized 2D DFT of a complex field.
pub fn fft2d_complex(field: &ComplexField) -> Result<ComplexField> {
    check_pow2(field.width, field.height)?;
    let mut data = field.values.clone();
    transform_in_place(field.width, field.height, &mut data, false);
    ComplexField::new(field.width, field.height, data)
}

/// Inverse 2D DFT, scaled by `1/(W*H)` so that `ifft2d(fft2d(x)) == x`.
pub fn ifft2d(field: &ComplexField) -> Result<ComplexField> {
    check_pow2(field.width, field.height)?;
    let mut data = field.values.clone();
    transform_in_place(field.width, field.height, &mut data, true);
    let scale = 1.0 / (field.width * field.height) as f64;
    for c in &mut data {
        *c *= scale;
    }
    ComplexField::new(field.width, field.height, data)
}

/// 8x8 block of orthonormal DCT-II coefficients, `coefficients[k][l]` with
/// `k` the vertical and `l` the horizontal frequency.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DctBlock {
    pub coefficients: [[f64; 8]; 8],
}

impl DctBlock {
    pub fn dc(&self) -> f64 {
        self.coefficients[0][0]
    }

    pub fn energy(&self) -> f64 {
        self.coefficients.iter().flatten().map(|c| c * c).sum()
    }

    pub fn ac_energy(&self) -> f64 {
        self.energy() - self.dc() * self.dc()
    }
}

fn dct_basis() -> &'static [[f64; 8]; 8] {
    static BASIS: OnceLock<[[f64; 8]; 8]> = OnceLock::new();
    BASIS.get_or_init(|| {
        let mut c = [[0.0; 8]; 8];
        for (k, row) in c.iter_mut().enumerate() {
            let alpha = if k == 0 { (1.0f64 / 8.0).sqrt() } else { 0.5 };
            for (n, v) in row.iter_mut().enumerate() {
                *v = alpha
                    * (std::f64::consts::PI * (2 * n + 1) as f64 * k as f64 / 16.0).cos();
            }
        }
        c
    })
}

fn block_from_slice(block: &[f64]) -> Result<[[f64; 8]; 8]> {
    if block.len() != 64 {
        return Err(Error::dim(format!(
            "DCT block needs exactly 64 values, got {}",
            block.len()
        )));
    }
    let mut b = [[0.0; 8]; 8];
    for (i, v) in block.iter().enumerate() {
        b[i / 8][i % 8] = *v;
    }
    Ok(b)
}

/// Orthonormal 2D DCT-II of an 8x8 block given as 64 row-major values.
pub fn dct8x8(block: &[f64]) -> Result<DctBlock> {
    let b = block_from_slice(block)?;
    Ok(dct8x8_array(&b))
}

pub(crate) fn dct8x8_array(b: &[[f64; 8]; 8]) -> DctBlock {
    let c = dct_basis();
    // rows first: t = b * C^T, then out = C * t
    let mut t = [[0.0; 8]; 8];
    for y in 0..8 {
        for l in 0..8 {
            t[y][l] = (0..8).map(|x| b[y][x] * c[l][x]).sum();
        }
    }
    let mut out = [[0.0; 8]; 8];
    for k in 0..8 {
        for l in 0..8 {
            out[k][l] = (0..8).map(|y| c[k][y] * t[y][l]).sum();
        }
    }
    DctBlock { coefficients: out }
}

/// Inverse of [`dct8x8`]; returns 64 row-major pixel values.
pub fn idct8x8(block: &DctBlock) -> [f64; 64] {
    let c = dct_basis();
    let x = &block.coefficients;
    let mut t = [[0.0; 8]; 8];
    for y in 0..8 {
        for l in 0..8 {
            t[y][l] = (0..8).map(|k| c[k][y] * x[k][l]).sum();
        }
    }
    let mut out = [0.0; 64];
    for y in 0..8 {
        for n in 0..8 {
            out[y * 8 + n] = (0..8).map(|l| t[y][l] * c[l][n]).sum();
        }
    }
    out
}

/// Standard JPEG luminance table (ITU T.81, Table K.1), row-major.
pub const BASE_LUMINANCE_TABLE: [u16; 64] = [
    16, 11, 10, 16, 24, 40, 51, 61, //
    12, 12, 14, 19, 26, 58, 60, 55, //
    14, 13, 16, 24, 40, 57, 69, 56, //
    14, 17, 22, 29, 51, 87, 80, 62, //
    18, 22, 37, 56, 68, 109, 103, 77, //
    24, 35, 55, 64, 81, 104, 113, 92, //
    49, 64, 78, 87, 103, 121, 120, 101, //
    72, 92, 95, 98, 112, 100, 103, 99,
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QuantTable {
    pub steps: [u16; 64],
    pub quality: u8,
}

impl QuantTable {
    /// Luminance table scaled to `quality` with the IJG formula.
    pub fn luminance(quality: u8) -> Result<Self> {
        if !(1..=100).contains(&quality) {
            return Err(Error::domain(format!(
                "JPEG quality must be in 1..=100, got {quality}"
            )));
        }
        let q = quality as u32;
        let scale = if q < 50 { 5000 / q } else { 200 - 2 * q };
        let mut steps = [0u16; 64];
        for (s, &base) in steps.iter_mut().zip(BASE_LUMINANCE_TABLE.iter()) {
            *s = ((base as u32 * scale + 50) / 100).clamp(1, 255) as u16;
        }
        Ok(Self { steps, quality })
    }

    pub fn step(&self, k: usize, l: usize) -> f64 {
        self.steps[k * 8 + l] as f64
    }
}

/// Lossy JPEG-like round trip on a luminance plane: blockwise DCT, uniform
/// quantization with the scaled luminance table, dequantization, inverse DCT,
/// clamp to [0, 255]. No chroma handling and no entropy coding.
pub fn jpeg_degrade(plane: &Plane, quality: u8) -> Result<Plane> {
    Ok(jpeg_unclamped(plane, quality)?.map(|v| v.clamp(0.0, 255.0)))
}

/// [`jpeg_degrade`] without the final clamp.
pub(crate) fn jpeg_unclamped(plane: &Plane, quality: u8) -> Result<Plane> {
    let (w, h) = (plane.width(), plane.height());
    if w == 0 || h == 0 || w % 8 != 0 || h % 8 != 0 {
        return Err(Error::dim(format!(
            "JPEG blocks need dimensions that are multiples of 8, got {w}x{h}"
        )));
    }
    if let Some(bad) = plane.data().iter().find(|v| !(0.0..=255.0).contains(*v)) {
        return Err(Error::domain(format!(
            "pixel value {bad} outside [0, 255]"
        )));
    }
    let table = QuantTable::luminance(quality)?;
    let mut out = Plane::zeros(w, h);
    for by in (0..h).step_by(8) {
        for bx in (0..w).step_by(8) {
            let mut b = [[0.0; 8]; 8];
            for (y, row) in b.iter_mut().enumerate() {
                for (x, v) in row.iter_mut().enumerate() {
                    *v = plane.get(bx + x, by + y) - 128.0;
                }
            }
            let mut coeffs = dct8x8_array(&b);
            for k in 0..8 {
                for l in 0..8 {
                    let step = table.step(k, l);
                    coeffs.coefficients[k][l] = (coeffs.coefficients[k][l] / step).round() * step;
                }
            }
            let pixels = idct8x8(&coeffs);
            for y in 0..8 {
                for x in 0..8 {
                    out.set(bx + x, by + y, pixels[y * 8 + x] + 128.0);
                }
            }
        }
    }
    Ok(out)
}

/// Visits every aligned 8x8 block of a plane (dimensions must be multiples of 8).
pub(crate) fn for_each_block(plane: &Plane, mut f: impl FnMut(&[[f64; 8]; 8])) -> Result<()> {
    let (w, h) = (plane.width(), plane.height());
    if w == 0 || h == 0 || w % 8 != 0 || h % 8 != 0 {
        return Err(Error::dim(format!(
            "block statistics need dimensions that are multiples of 8, got {w}x{h}"
        )));
    }
    let mut b = [[0.0; 8]; 8];
    for by in (0..h).step_by(8) {
        for bx in (0..w).step_by(8) {
            for (y, row) in b.iter_mut().enumerate() {
                row.copy_from_slice(&plane.row(by + y)[bx..bx + 8]);
            }
            f(&b);
        }
    }
    Ok(())
}

/// Sum over all aligned blocks of the DCT AC energy.
pub fn total_ac_energy(plane: &Plane) -> Result<f64> {
    let mut total = 0.0;
    for_each_block(plane, |b| total += dct8x8_array(b).ac_energy())?;
    Ok(total)
}
