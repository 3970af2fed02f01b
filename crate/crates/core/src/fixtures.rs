//! Synthetic images with prescribed spectral tails.
//!
//! An image is built in the frequency domain: a DC term at the requested
//! mean, a low-frequency "body" `∝ (k_r/k_T)^body_exponent` scaled to a target
//! pixel standard deviation, and for `k_r >= k_T` a tail
//! `mean · b1 · (k_r/k_T)^b2`, all with random Hermitian phases. The inverse
//! transform yields a real image whose DC-normalized reduced spectrum has the
//! tail parameters `(b1, b2)` by construction.

use rand::Rng;
use rand_distr::{Distribution, Uniform};
use rustfft::num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::classifier::Label;
use crate::imageio::ImageTensor;
use crate::scalar::Scalar;
use crate::spectral::{idft2, radial_wavenumber, signed_frequency, Spectrum2D};

/// Shape of a synthetic spectrum, in DC-normalized units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralProfile {
    pub tail_level: f64,
    pub tail_exponent: f64,
    pub k_t: f64,
    pub body_exponent: f64,
    /// Pixel standard deviation carried by the `k_r < k_T` body. `None`
    /// continues the tail level into the body instead.
    pub body_std: Option<f64>,
    pub mean: f64,
}

impl SpectralProfile {
    /// A single power law `|F| = mean · level · (k_r/k_T)^exponent` over the
    /// whole frequency plane.
    pub fn pure_power_law(level: f64, exponent: f64, k_t: f64, mean: f64) -> Self {
        Self {
            tail_level: level,
            tail_exponent: exponent,
            k_t,
            body_exponent: exponent,
            body_std: None,
            mean,
        }
    }
}

/// Random phases with `θ(-k) = -θ(k)`; self-conjugate frequencies get a
/// real coefficient of random sign.
fn hermitian_phases<R: Rng + ?Sized>(width: usize, height: usize, rng: &mut R) -> Vec<f64> {
    let mut phase = vec![f64::NAN; width * height];
    let angle = Uniform::new(-std::f64::consts::PI, std::f64::consts::PI).expect("valid range");
    for j in 0..height {
        for i in 0..width {
            let idx = j * width + i;
            if !phase[idx].is_nan() {
                continue;
            }
            let pi = (width - i) % width;
            let pj = (height - j) % height;
            let partner = pj * width + pi;
            if partner == idx {
                phase[idx] = if rng.random::<bool>() { 0.0 } else { std::f64::consts::PI };
            } else {
                let t = angle.sample(rng);
                phase[idx] = t;
                phase[partner] = -t;
            }
        }
    }
    phase
}

/// Builds the Hermitian spectrum for `profile` at the given size.
pub fn synthesize_spectrum<T: Scalar, R: Rng + ?Sized>(
    profile: &SpectralProfile,
    width: usize,
    height: usize,
    rng: &mut R,
) -> Spectrum2D<T> {
    let phases = hermitian_phases(width, height, rng);
    let k_t = profile.k_t;
    let radius = |i: usize, j: usize| -> f64 {
        radial_wavenumber(signed_frequency(i, width), signed_frequency(j, height), width, height)
    };

    let body_energy: f64 = (0..height)
        .flat_map(|j| (0..width).map(move |i| (i, j)))
        .filter(|&(i, j)| (i, j) != (0, 0))
        .map(|(i, j)| radius(i, j))
        .filter(|&k| k < k_t)
        .map(|k| (k / k_t).powf(2.0 * profile.body_exponent))
        .sum();
    let body_scale = match profile.body_std {
        None => profile.mean * profile.tail_level,
        Some(std) if body_energy > 0.0 => std / body_energy.sqrt(),
        Some(_) => 0.0,
    };

    let mut coeffs = Vec::with_capacity(width * height);
    for j in 0..height {
        for i in 0..width {
            let magnitude = if (i, j) == (0, 0) {
                profile.mean
            } else {
                let k = radius(i, j);
                if k >= k_t {
                    profile.mean * profile.tail_level * (k / k_t).powf(profile.tail_exponent)
                } else {
                    body_scale * (k / k_t).powf(profile.body_exponent)
                }
            };
            let phase = if (i, j) == (0, 0) { 0.0 } else { phases[j * width + i] };
            let c = Complex::from_polar(magnitude, phase);
            coeffs.push(Complex::new(T::lit(c.re), T::lit(c.im)));
        }
    }
    Spectrum2D::from_coeffs(width, height, coeffs).expect("sized grid")
}

/// Real-valued (unquantized) single-channel image with the given profile.
pub fn synthesize_image<T: Scalar, R: Rng + ?Sized>(
    profile: &SpectralProfile,
    width: usize,
    height: usize,
    rng: &mut R,
) -> ImageTensor<T> {
    idft2(&synthesize_spectrum(profile, width, height, rng))
        .expect("Hermitian construction is real")
}

/// A labeled family of synthetic images.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Population {
    pub label: Label,
    pub tag: String,
    /// Log-uniform range of `b1` at 256 px; scaled by `256 / size`.
    pub tail_level: (f64, f64),
    /// Uniform range of `b2`.
    pub tail_exponent: (f64, f64),
    pub k_t: f64,
    pub body_exponent: f64,
    pub body_std: f64,
    pub mean: f64,
}

impl Population {
    /// Camera-like tails: steep `k_r^-4` decay, magnitude spread over a
    /// decade.
    pub fn real_like() -> Self {
        Self {
            label: Label::Real,
            tag: "real".into(),
            tail_level: (2e-4, 2e-3),
            tail_exponent: (-4.0, -4.0),
            k_t: 0.75,
            body_exponent: -1.0,
            body_std: 30.0,
            mean: 128.0,
        }
    }

    /// Generator-like tails: nearly flat.
    pub fn generated_like() -> Self {
        Self {
            label: Label::Fake,
            tag: "flat".into(),
            tail_level: (2e-4, 2e-3),
            tail_exponent: (-0.5, 0.0),
            ..Self::real_like()
        }
    }

    pub fn with_tag(mut self, tag: &str) -> Self {
        self.tag = tag.into();
        self
    }

    /// Draws one profile for an image of side `size`.
    pub fn draw_profile<R: Rng + ?Sized>(&self, size: usize, rng: &mut R) -> SpectralProfile {
        let (lo, hi) = self.tail_level;
        let scale = 256.0 / size as f64;
        let level = if lo < hi {
            (rng.random_range(lo.ln()..hi.ln())).exp()
        } else {
            lo
        };
        let (elo, ehi) = self.tail_exponent;
        let exponent = if elo < ehi { rng.random_range(elo..ehi) } else { elo };
        SpectralProfile {
            tail_level: level * scale,
            tail_exponent: exponent,
            k_t: self.k_t,
            body_exponent: self.body_exponent,
            body_std: Some(self.body_std),
            mean: self.mean,
        }
    }

    /// Draws an 8-bit grayscale image of side `size`, returning it with the
    /// profile it was built from.
    pub fn sample<T: Scalar, R: Rng + ?Sized>(
        &self,
        size: usize,
        rng: &mut R,
    ) -> (ImageTensor<T>, SpectralProfile) {
        let profile = self.draw_profile(size, rng);
        let img: ImageTensor<T> = synthesize_image(&profile, size, size, rng);
        (img.quantize().0, profile)
    }
}
