//! Single-channel convolution + pointwise activation stacks on 2D planes.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::plane::Plane;

pub const LEAKY_SLOPE: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Activation2d {
    Identity,
    Relu,
    LeakyRelu,
    Silu,
    /// `sum_q coeffs[q] z^q`.
    Polynomial { coeffs: Vec<f64> },
}

impl Activation2d {
    pub fn apply(&self, z: f64) -> f64 {
        match self {
            Activation2d::Identity => z,
            Activation2d::Relu => z.max(0.0),
            Activation2d::LeakyRelu => {
                if z > 0.0 {
                    z
                } else {
                    LEAKY_SLOPE * z
                }
            }
            Activation2d::Silu => z / (1.0 + (-z).exp()),
            Activation2d::Polynomial { coeffs } => coeffs.iter().rev().fold(0.0, |acc, a| acc * z + a),
        }
    }

    /// Accepts `identity`, `relu`, `leaky_relu` (or `leaky`) and `silu`.
    pub fn parse(name: &str) -> Result<Self> {
        match name.to_ascii_lowercase().as_str() {
            "identity" => Ok(Activation2d::Identity),
            "relu" => Ok(Activation2d::Relu),
            "leaky_relu" | "leaky" | "leakyrelu" => Ok(Activation2d::LeakyRelu),
            "silu" => Ok(Activation2d::Silu),
            other => Err(Error::domain(format!("unknown activation {other:?}"))),
        }
    }
}

/// How each layer's kernel is drawn.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum KernelInit {
    /// Zero-mean normal weights with variance `2 / fan_in`.
    Kaiming,
    /// Radial band-pass ring `cos(2 pi f r) exp(-r^2 / 2 sigma^2)`, made zero-mean
    /// and unit-norm, plus `jitter` times a Kaiming draw.
    TunedRing {
        frequency: f64,
        sigma: f64,
        jitter: f64,
    },
}

impl Default for KernelInit {
    fn default() -> Self {
        // a ring at 0.25 cycles/pixel passes rho = 0.5, whose second harmonic is Nyquist
        KernelInit::TunedRing {
            frequency: 0.25,
            sigma: 3.0,
            jitter: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cascade2dConfig {
    pub depth: usize,
    /// Odd kernel side length.
    pub kernel_size: usize,
    pub activation: Activation2d,
    pub init: KernelInit,
    pub seed: u64,
}

impl Cascade2dConfig {
    pub fn new(activation: Activation2d, depth: usize, seed: u64) -> Self {
        Self {
            depth,
            kernel_size: 19,
            activation,
            init: KernelInit::default(),
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.depth == 0 {
            return Err(Error::Config("cascade depth must be at least 1".into()));
        }
        if self.kernel_size.is_multiple_of(2) {
            return Err(Error::Config(format!(
                "kernel size {} must be odd",
                self.kernel_size
            )));
        }
        Ok(())
    }

    /// The kernels, drawn in layer order from one seeded stream.
    pub fn kernels(&self) -> Result<Vec<Vec<f64>>> {
        self.validate()?;
        let ks = self.kernel_size;
        let h = (ks / 2) as f64;
        let fan_in = (ks * ks) as f64;
        let normal = Normal::new(0.0, (2.0 / fan_in).sqrt()).expect("valid std");
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut out = Vec::with_capacity(self.depth);
        for _ in 0..self.depth {
            let k = match self.init {
                KernelInit::Kaiming => (0..ks * ks).map(|_| normal.sample(&mut rng)).collect(),
                KernelInit::TunedRing {
                    frequency,
                    sigma,
                    jitter,
                } => {
                    let mut k: Vec<f64> = (0..ks * ks)
                        .map(|i| {
                            let (x, y) = ((i % ks) as f64 - h, (i / ks) as f64 - h);
                            let r = (x * x + y * y).sqrt();
                            (std::f64::consts::TAU * frequency * r).cos()
                                * (-r * r / (2.0 * sigma * sigma)).exp()
                        })
                        .collect();
                    let mean = k.iter().sum::<f64>() / fan_in;
                    k.iter_mut().for_each(|v| *v -= mean);
                    let norm = k.iter().map(|v| v * v).sum::<f64>().sqrt();
                    k.iter_mut()
                        .for_each(|v| *v = *v / norm + jitter * normal.sample(&mut rng));
                    k
                }
            };
            out.push(k);
        }
        Ok(out)
    }
}

/// Index into `[0, n)` with mirror reflection that does not repeat the edge sample.
#[inline]
fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    let mut i = i;
    if i < 0 {
        i = -i;
    }
    if i >= n {
        i = 2 * (n - 1) - i;
    }
    i as usize
}

/// Same-size 2D convolution with reflect padding.
pub fn convolve_reflect(plane: &Plane, kernel: &[f64], ks: usize) -> Result<Plane> {
    let (w, h) = (plane.width(), plane.height());
    let r = ks / 2;
    if kernel.len() != ks * ks || ks.is_multiple_of(2) {
        return Err(Error::dim("kernel must be an odd square"));
    }
    if r >= w || r >= h {
        return Err(Error::dim(format!(
            "kernel {ks}x{ks} is too large for a {w}x{h} plane"
        )));
    }
    // padded copy, then a plain valid correlation against the flipped kernel
    let pw = w + 2 * r;
    let mut padded = vec![0.0; pw * (h + 2 * r)];
    for py in 0..h + 2 * r {
        let sy = reflect(py as isize - r as isize, h);
        for px in 0..pw {
            padded[py * pw + px] = plane.get(reflect(px as isize - r as isize, w), sy);
        }
    }
    let flipped: Vec<f64> = kernel.iter().rev().copied().collect();
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        let row = &mut out[y * w..(y + 1) * w];
        for i in 0..ks {
            let src = &padded[(y + i) * pw..(y + i) * pw + pw];
            for j in 0..ks {
                let k = flipped[i * ks + j];
                for (o, s) in row.iter_mut().zip(&src[j..j + w]) {
                    *o += k * s;
                }
            }
        }
    }
    Plane::new(w, h, out)
}

fn standardize(plane: &mut Plane) {
    let (mean, std) = (plane.mean(), plane.std());
    let scale = if std > 0.0 { 1.0 / std } else { 0.0 };
    plane
        .data_mut()
        .iter_mut()
        .for_each(|v| *v = (*v - mean) * scale);
}

/// Conv + activation stack. Each layer standardizes its pre-activation; the
/// output is rescaled to the input's mean and standard deviation.
pub fn cascade2d(plane: &Plane, cfg: &Cascade2dConfig) -> Result<Plane> {
    if !plane.is_square() || !plane.width().is_power_of_two() {
        return Err(Error::dim(format!(
            "cascade needs a square power-of-two plane, got {}x{}",
            plane.width(),
            plane.height()
        )));
    }
    let kernels = cfg.kernels()?;
    let (mean0, std0) = (plane.mean(), plane.std());
    let mut y = plane.clone();
    for k in &kernels {
        y = convolve_reflect(&y, k, cfg.kernel_size)?;
        standardize(&mut y);
        y.data_mut()
            .iter_mut()
            .for_each(|v| *v = cfg.activation.apply(*v));
    }
    standardize(&mut y);
    let out = y.map(|v| v * std0 + mean0);
    if out.data().iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("cascade produced non-finite values".into()));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harmonics::noise::pink_noise;
    use crate::spectrum::{radial_log_power, tail_uplift};

    fn uplift(p: &Plane) -> f64 {
        tail_uplift(&radial_log_power(p, 128).unwrap()).unwrap().delta
    }

    /// Direct definition: out(x, y) = sum_{i,j} k(i, j) in(x - j + r, y - i + r), mirrored at the borders.
    fn naive_conv(p: &Plane, k: &[f64], ks: usize) -> Plane {
        let r = ks as isize / 2;
        let (w, h) = (p.width() as isize, p.height() as isize);
        let mirror = |i: isize, n: isize| {
            if i < 0 {
                -i
            } else if i >= n {
                2 * (n - 1) - i
            } else {
                i
            }
        };
        Plane::from_fn(p.width(), p.height(), |x, y| {
            let mut acc = 0.0;
            for i in 0..ks as isize {
                for j in 0..ks as isize {
                    let sx = mirror(x as isize - j + r, w);
                    let sy = mirror(y as isize - i + r, h);
                    acc += k[(i * ks as isize + j) as usize] * p.get(sx as usize, sy as usize);
                }
            }
            acc
        })
    }

    #[test]
    fn convolution_matches_definition() {
        let p = pink_noise(16, 5).unwrap();
        let ks = 5;
        let k: Vec<f64> = (0..ks * ks).map(|i| (i as f64 * 0.7).sin()).collect();
        let fast = convolve_reflect(&p, &k, ks).unwrap();
        let slow = naive_conv(&p, &k, ks);
        for (a, b) in fast.data().iter().zip(slow.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn delta_kernel_is_identity() {
        let p = pink_noise(16, 6).unwrap();
        let mut k = vec![0.0; 9];
        k[4] = 1.0;
        assert_eq!(convolve_reflect(&p, &k, 3).unwrap(), p);
    }

    #[test]
    fn activations() {
        assert_eq!(Activation2d::Relu.apply(-2.0), 0.0);
        assert_eq!(Activation2d::LeakyRelu.apply(-2.0), -0.02);
        assert!((Activation2d::Silu.apply(1.0) - 1.0 / (1.0 + (-1.0f64).exp())).abs() < 1e-15);
        let poly = Activation2d::Polynomial {
            coeffs: vec![1.0, 0.0, 2.0],
        };
        assert_eq!(poly.apply(3.0), 19.0);
        assert!(Activation2d::parse("tanh").is_err());
    }

    #[test]
    fn kernels_are_seeded_and_kaiming_scaled() {
        let mut cfg = Cascade2dConfig::new(Activation2d::Relu, 3, 4);
        assert_eq!(cfg.kernels().unwrap(), cfg.kernels().unwrap());
        cfg.init = KernelInit::Kaiming;
        cfg.depth = 40;
        let ks = cfg.kernel_size;
        let all: Vec<f64> = cfg.kernels().unwrap().concat();
        let var = all.iter().map(|v| v * v).sum::<f64>() / all.len() as f64;
        let want = 2.0 / (ks * ks) as f64;
        assert!((var / want - 1.0).abs() < 0.05, "variance {var} vs {want}");
    }

    #[test]
    fn output_matches_input_moments() {
        let p = pink_noise(64, 1).unwrap().map(|v| 3.0 * v + 10.0);
        let out = cascade2d(&p, &Cascade2dConfig::new(Activation2d::Silu, 2, 1)).unwrap();
        assert!((out.mean() - p.mean()).abs() < 1e-9);
        assert!((out.std() - p.std()).abs() < 1e-9);
    }

    #[test]
    fn rejects_bad_configs() {
        let p = pink_noise(32, 0).unwrap();
        let mut cfg = Cascade2dConfig::new(Activation2d::Relu, 0, 0);
        assert!(matches!(cascade2d(&p, &cfg), Err(Error::Config(_))));
        cfg.depth = 1;
        cfg.kernel_size = 4;
        assert!(matches!(cascade2d(&p, &cfg), Err(Error::Config(_))));
        assert!(matches!(
            cascade2d(&Plane::zeros(32, 16), &Cascade2dConfig::new(Activation2d::Relu, 1, 0)),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn nonlinearity_lifts_the_tail_and_identity_does_not() {
        let p = pink_noise(256, 2).unwrap();
        let base = uplift(&p);
        let id = uplift(&cascade2d(&p, &Cascade2dConfig::new(Activation2d::Identity, 4, 2)).unwrap());
        let relu = uplift(&cascade2d(&p, &Cascade2dConfig::new(Activation2d::Relu, 4, 2)).unwrap());
        assert!((id - base).abs() < 0.02, "identity {id} vs input {base}");
        assert!(relu >= 0.03, "relu {relu}");
        assert!(id < relu);
    }
}
