//! Spectrum spoofing: rescale the high-frequency tail of a source image so
//! its fitted decay matches a target, then transform back to pixels.
//!
//! The gain at radius `k_r` is
//! `s(k_r) = (1 - φ) + φ · (b1_t / b1_s) · (k_r / k_T)^(b2_t - b2_s)` with the
//! blend `φ(k_r) = ½ (tanh(α (k_r - k_T)) + 1)`. `α = 1` is the unscaled
//! tanh; larger `α` confines the change to `k_r > k_T`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fitting::{check_threshold, fit_decay, DecayParams, FitError};
use crate::imageio::{to_grayscale, ImageError, ImageTensor};
use crate::scalar::Scalar;
use crate::spectral::{
    default_bin_count, dft2, idft2, radial_wavenumber, reduced_spectrum, Normalization,
    SpectralError, Spectrum2D,
};

pub const DEFAULT_ALPHA: f64 = 50.0;

#[derive(Debug, Error)]
pub enum SynthesisError {
    #[error("source magnitude b1 = {0} must be positive")]
    NonPositiveSourceMagnitude(f64),
    #[error("target magnitude b1 = {0} must be positive")]
    NonPositiveTargetMagnitude(f64),
    #[error("blend sharpness {0} must be non-negative")]
    NegativeAlpha(f64),
    #[error("decay params fitted at k_T = {fitted} but spoofing uses k_T = {requested}")]
    ThresholdMismatch { fitted: f64, requested: f64 },
    #[error("reconstruction is not real-valued: {0}")]
    ReconstructionNotReal(SpectralError),
    #[error(transparent)]
    Fit(#[from] FitError),
    #[error(transparent)]
    Spectral(SpectralError),
    #[error(transparent)]
    Image(#[from] ImageError),
}

impl From<SpectralError> for SynthesisError {
    fn from(e: SpectralError) -> Self {
        match e {
            SpectralError::AsymmetricSpectrum { .. } => SynthesisError::ReconstructionNotReal(e),
            other => SynthesisError::Spectral(other),
        }
    }
}

/// Blend weight `½ (tanh(α (k_r - k_T)) + 1)`.
pub fn blend<T: Scalar>(k_r: T, k_t: T, alpha: T) -> T {
    T::lit(0.5) * ((alpha * (k_r - k_t)).tanh() + T::one())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpoofConfig<T> {
    pub k_t: T,
    pub alpha: T,
    pub source: DecayParams<T>,
    pub target: DecayParams<T>,
}

impl<T: Scalar> SpoofConfig<T> {
    pub fn new(
        source: DecayParams<T>,
        target: DecayParams<T>,
        k_t: T,
        alpha: T,
    ) -> Result<Self, SynthesisError> {
        check_threshold(k_t)?;
        if !(source.b1 > T::zero()) {
            return Err(SynthesisError::NonPositiveSourceMagnitude(source.b1.as_f64()));
        }
        if !(target.b1 > T::zero()) {
            return Err(SynthesisError::NonPositiveTargetMagnitude(target.b1.as_f64()));
        }
        if !(alpha >= T::zero()) {
            return Err(SynthesisError::NegativeAlpha(alpha.as_f64()));
        }
        for fitted in [source.k_t, target.k_t] {
            if (fitted - k_t).abs() > T::EDGE_TOL {
                return Err(SynthesisError::ThresholdMismatch {
                    fitted: fitted.as_f64(),
                    requested: k_t.as_f64(),
                });
            }
        }
        Ok(Self {
            k_t,
            alpha,
            source,
            target,
        })
    }

    /// Radial gain `s(k_r)`; the DC term (`k_r = 0`) is left untouched.
    pub fn gain(&self, k_r: T) -> T {
        if k_r <= T::zero() {
            return T::one();
        }
        let phi = blend(k_r, self.k_t, self.alpha);
        let ratio = self.target.b1 / self.source.b1
            * (k_r / self.k_t).powf(self.target.b2 - self.source.b2);
        (T::one() - phi) + phi * ratio
    }
}

/// Decay parameters supplied directly rather than fitted.
pub fn explicit_target<T: Scalar>(b1: T, b2: T, k_t: T) -> DecayParams<T> {
    DecayParams {
        b1,
        b2,
        k_t,
        n_points: 0,
        rss: T::zero(),
    }
}

/// Scales every coefficient by the radial gain. The gain is real and depends
/// only on `k_r`, so conjugate symmetry is preserved.
pub fn spoof_spectrum<T: Scalar>(spec: &Spectrum2D<T>, cfg: &SpoofConfig<T>) -> Spectrum2D<T> {
    let (m, n) = (spec.width(), spec.height());
    spec.scaled_by(|kx, ky| cfg.gain(radial_wavenumber(kx, ky, m, n)))
}

/// Fits the grayscale reduced spectrum of `img` with DC normalization.
pub fn fit_image<T: Scalar>(
    img: &ImageTensor<T>,
    k_t: T,
    n_bins: Option<usize>,
) -> Result<DecayParams<T>, SynthesisError> {
    let gray = to_grayscale(img)?;
    let spec = dft2(&gray)?;
    let bins = n_bins.unwrap_or_else(|| default_bin_count(gray.width(), gray.height()));
    let rs = reduced_spectrum(&spec, bins, Normalization::DcGain)?;
    Ok(fit_decay(&rs, k_t)?)
}

#[derive(Debug, Clone)]
pub struct SpoofOutcome<T> {
    pub image: ImageTensor<T>,
    pub config: SpoofConfig<T>,
    /// Samples clamped into `[0, 255]` before rounding.
    pub clipped: usize,
    pub max_abs_diff: T,
}

/// Spoofs every channel with the gain derived from the grayscale fit of
/// `src` and the given target, then clamps and rounds to 8 bits.
pub fn spoof_image<T: Scalar>(
    src: &ImageTensor<T>,
    target: DecayParams<T>,
    k_t: T,
    alpha: T,
) -> Result<SpoofOutcome<T>, SynthesisError> {
    let source = fit_image(src, k_t, None)?;
    let config = SpoofConfig::new(source, target, k_t, alpha)?;
    let planes = (0..src.channels())
        .map(|c| {
            let spec = dft2(&src.channel(c))?;
            Ok(idft2(&spoof_spectrum(&spec, &config))?)
        })
        .collect::<Result<Vec<_>, SynthesisError>>()?;
    let (image, clipped) = ImageTensor::from_planes(&planes)?.quantize();
    let max_abs_diff = src
        .data()
        .iter()
        .zip(image.data())
        .map(|(&a, &b)| (a - b).abs())
        .fold(T::zero(), T::max);
    Ok(SpoofOutcome {
        image,
        config,
        clipped,
        max_abs_diff,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rustfft::num_complex::Complex;

    fn params(b1: f64, b2: f64) -> DecayParams<f64> {
        explicit_target(b1, b2, 0.75)
    }

    #[test]
    fn blend_values() {
        assert_eq!(blend(0.75, 0.75, 1.0), 0.5);
        assert_eq!(blend(0.1, 0.75, 0.0), 0.5);
        assert_eq!(blend(0.9, 0.75, 0.0), 0.5);
        // ½(tanh(0.25) + 1), tanh(0.25) = 0.244918662403709...
        assert!((blend(1.0f64, 0.75, 1.0) - 0.622_459_331_201_854_6).abs() < 1e-15);
    }

    #[test]
    fn identical_params_give_unit_gain() {
        let p = params(2e-4, -0.3);
        let cfg = SpoofConfig::new(p, p, 0.75, 50.0).unwrap();
        for i in 0..=100 {
            let k = i as f64 / 100.0;
            assert!((cfg.gain(k) - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn gain_is_one_at_threshold_for_equal_magnitudes() {
        let cfg = SpoofConfig::new(params(1.0, 0.0), params(1.0, -3.5), 0.75, 1.0).unwrap();
        assert!((cfg.gain(0.75) - 1.0).abs() < 1e-15);
        assert_eq!(cfg.gain(0.0), 1.0);
    }

    #[test]
    fn low_frequencies_are_preserved_at_high_alpha() {
        let cfg = SpoofConfig::new(params(1e-3, 0.0), params(2e-3, -1.5), 0.75, 50.0).unwrap();
        let mut checked = 0;
        for i in 1..=375 {
            let k = i as f64 / 1000.0;
            let ratio = 2.0 * (k / 0.75f64).powf(-1.5);
            if ratio <= 10.0 {
                checked += 1;
                assert!((cfg.gain(k) - 1.0).abs() < 0.02, "k = {k}");
            }
        }
        assert!(checked > 100);
    }

    #[test]
    fn config_validation() {
        let ok = params(1.0, 0.0);
        assert!(matches!(
            SpoofConfig::new(params(0.0, 0.0), ok, 0.75, 1.0),
            Err(SynthesisError::NonPositiveSourceMagnitude(_))
        ));
        assert!(matches!(
            SpoofConfig::new(ok, params(-1.0, 0.0), 0.75, 1.0),
            Err(SynthesisError::NonPositiveTargetMagnitude(_))
        ));
        assert!(matches!(
            SpoofConfig::new(ok, ok, 0.75, -1.0),
            Err(SynthesisError::NegativeAlpha(_))
        ));
        assert!(matches!(
            SpoofConfig::new(ok, ok, 0.5, 1.0),
            Err(SynthesisError::ThresholdMismatch { .. })
        ));
    }

    #[test]
    fn gain_is_positive_everywhere() {
        let cfg = SpoofConfig::new(params(5.0, 1.0), params(1e-3, -6.0), 0.75, 1.0).unwrap();
        for i in 0..=1000 {
            assert!(cfg.gain(i as f64 / 1000.0) > 0.0);
        }
    }

    #[test]
    fn spoofed_spectrum_keeps_dc_and_symmetry() {
        let spec = Spectrum2D::from_fn(16, 12, |kx, ky| {
            let phase = (kx * 3 + ky * 5) as f64;
            if (kx, ky) == (0, 0) {
                Complex::new(100.0, 0.0)
            } else {
                Complex::from_polar(1.0, phase.sin())
            }
        });
        // Make it Hermitian by averaging with its mirrored conjugate.
        let sym = Spectrum2D::from_fn(16, 12, |kx, ky| (spec.get(kx, ky) + spec.get(-kx, -ky).conj()) * 0.5);
        let cfg = SpoofConfig::new(params(1.0, 0.0), params(0.5, -4.0), 0.75, 10.0).unwrap();
        let out = spoof_spectrum(&sym, &cfg);
        assert_eq!(out.get(0, 0), sym.get(0, 0));
        assert!(out.conjugate_asymmetry() < 1e-12);
    }
}
