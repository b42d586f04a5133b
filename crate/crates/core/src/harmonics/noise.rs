//! Random-phase power-law fields.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::plane::Plane;
use crate::transforms::{ifft2d, signed_frequency, ComplexField};

/// Real field whose DFT amplitude is exactly `rho^(-alpha/2)` (so power falls as
/// `rho^-alpha`) with uniform random phases. DC is zero; the output is
/// standardized to zero mean and unit variance.
pub fn power_law_field(size: usize, alpha: f64, seed: u64) -> Result<Plane> {
    if size < 8 || !size.is_power_of_two() {
        return Err(Error::dim(format!(
            "field size {size} must be a power of two >= 8"
        )));
    }
    if !alpha.is_finite() {
        return Err(Error::domain("alpha must be finite"));
    }
    let n = size;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values = vec![Complex64::new(0.0, 0.0); n * n];
    for v in 0..n {
        for u in 0..n {
            let i = v * n + u;
            let partner = ((n - v) % n) * n + (n - u) % n;
            if partner < i || i == 0 {
                continue;
            }
            let (fu, fv) = (signed_frequency(u, n) as f64, signed_frequency(v, n) as f64);
            let amp = (fu * fu + fv * fv).powf(-alpha / 4.0);
            if partner == i {
                // self-conjugate bins must be real
                values[i] = Complex64::new(if rng.random::<bool>() { amp } else { -amp }, 0.0);
            } else {
                let phase = rng.random::<f64>() * std::f64::consts::TAU;
                values[i] = Complex64::from_polar(amp, phase);
                values[partner] = values[i].conj();
            }
        }
    }
    let field = ComplexField::new(n, n, values)?;
    let plane = ifft2d(&field)?.real_plane();
    let (mean, std) = (plane.mean(), plane.std());
    Ok(plane.map(|x| (x - mean) / std))
}

/// 1/f ("pink") noise: amplitude proportional to 1/rho.
pub fn pink_noise(size: usize, seed: u64) -> Result<Plane> {
    power_law_field(size, 2.0, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectrum::{fit_power_law, radial_log_power, tail_uplift};
    use crate::transforms::fft2d;

    #[test]
    fn standardized_and_deterministic() {
        let a = pink_noise(64, 3).unwrap();
        let b = pink_noise(64, 3).unwrap();
        assert_eq!(a, b);
        assert!(a.mean().abs() < 1e-12);
        assert!((a.std() - 1.0).abs() < 1e-12);
        assert_ne!(a, pink_noise(64, 4).unwrap());
    }

    #[test]
    fn amplitude_follows_the_recipe() {
        let n = 32;
        let p = power_law_field(n, 1.0, 9).unwrap();
        let f = fft2d(&p).unwrap();
        // amplitude ratio between two bins is fixed by the recipe regardless of phase
        let a = f.get(1, 0).norm();
        let b = f.get(4, 3).norm();
        let expect = (1.0f64 / 25.0).powf(0.25);
        assert!((b / a - expect).abs() < 1e-9);
        assert!(f.get(0, 0).norm() < 1e-9);
    }

    #[test]
    fn pink_noise_is_a_clean_power_law() {
        let p = pink_noise(256, 11).unwrap();
        let s = radial_log_power(&p, 128).unwrap();
        let fit = fit_power_law(&s, 0.05, 0.5).unwrap();
        assert!((fit.alpha - 2.0).abs() < 0.1, "alpha {}", fit.alpha);
        assert!(tail_uplift(&s).unwrap().delta < 0.02);
    }

    #[test]
    fn rejects_bad_sizes() {
        assert!(matches!(pink_noise(100, 0), Err(Error::Dimension(_))));
        assert!(matches!(pink_noise(4, 0), Err(Error::Dimension(_))));
    }
}
