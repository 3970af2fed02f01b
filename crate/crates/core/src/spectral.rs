//! Two-dimensional DFT with `1/(mn)` scaling, normalized polar wavenumbers
//! and the azimuthally averaged ("reduced") spectrum.
//!
//! Coefficients are stored in natural FFT order: row `j` holds the vertical
//! frequency `k_y = signed_frequency(j, n)` and column `i` the horizontal
//! frequency `k_x = signed_frequency(i, m)`, where `m` is the image width and
//! `n` its height. Signed frequencies cover `[-m/2, m/2)`.

use std::io::Write;

use num_traits::Zero;
use rustfft::num_complex::Complex;
use rustfft::{FftDirection, FftPlanner};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::imageio::{ImageTensor, PixelKind};
use crate::scalar::Scalar;

/// Smallest bin count accepted by [`reduced_spectrum`].
pub const MIN_BINS: usize = 8;

#[derive(Debug, Error)]
pub enum SpectralError {
    #[error("expected a single-channel image, got {0} channels")]
    NonGrayscaleInput(usize),
    #[error("spectrum is not conjugate symmetric: imaginary residual {residual:e} relative to peak")]
    AsymmetricSpectrum { residual: f64 },
    #[error("DC gain is zero (all-zero image); cannot normalize")]
    ZeroDcGain,
    #[error("reduced spectrum is zero at the threshold wavenumber {0}")]
    ZeroThresholdValue(f64),
    #[error("need at least {MIN_BINS} radial bins, got {0}")]
    TooFewBins(usize),
    #[error("coefficient grid has {actual} entries, expected {width}x{height}")]
    ShapeMismatch {
        width: usize,
        height: usize,
        actual: usize,
    },
}

/// Maps an FFT index in `0..len` to its signed frequency in `[-len/2, len/2)`.
pub fn signed_frequency(index: usize, len: usize) -> isize {
    if index >= len.div_ceil(2) {
        index as isize - len as isize
    } else {
        index as isize
    }
}

fn fft_index(freq: isize, len: usize) -> usize {
    freq.rem_euclid(len as isize) as usize
}

#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum2D<T> {
    width: usize,
    height: usize,
    coeffs: Vec<Complex<T>>,
    dc_gain: T,
}

impl<T: Scalar> Spectrum2D<T> {
    /// Wraps a coefficient grid in natural FFT order.
    pub fn from_coeffs(
        width: usize,
        height: usize,
        coeffs: Vec<Complex<T>>,
    ) -> Result<Self, SpectralError> {
        if coeffs.len() != width * height || width == 0 || height == 0 {
            return Err(SpectralError::ShapeMismatch {
                width,
                height,
                actual: coeffs.len(),
            });
        }
        let dc_gain = coeffs[0].norm();
        Ok(Self {
            width,
            height,
            coeffs,
            dc_gain,
        })
    }

    /// Builds a spectrum from a generator over signed frequencies.
    pub fn from_fn(
        width: usize,
        height: usize,
        mut f: impl FnMut(isize, isize) -> Complex<T>,
    ) -> Self {
        let mut coeffs = Vec::with_capacity(width * height);
        for j in 0..height {
            let ky = signed_frequency(j, height);
            for i in 0..width {
                coeffs.push(f(signed_frequency(i, width), ky));
            }
        }
        Self::from_coeffs(width, height, coeffs).expect("generated grid has the right shape")
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// `|F(0, 0)|`, the mean intensity of the source image.
    pub fn dc_gain(&self) -> T {
        self.dc_gain
    }

    pub fn coeffs(&self) -> &[Complex<T>] {
        &self.coeffs
    }

    pub fn get(&self, kx: isize, ky: isize) -> Complex<T> {
        self.coeffs[fft_index(ky, self.height) * self.width + fft_index(kx, self.width)]
    }

    /// Iterates `(k_x, k_y, coefficient)` in storage order.
    pub fn iter(&self) -> impl Iterator<Item = (isize, isize, Complex<T>)> + '_ {
        let (w, h) = (self.width, self.height);
        self.coeffs.iter().enumerate().map(move |(idx, &c)| {
            (signed_frequency(idx % w, w), signed_frequency(idx / w, h), c)
        })
    }

    /// Multiplies every coefficient by `gain(k_x, k_y)`.
    pub fn scaled_by(&self, mut gain: impl FnMut(isize, isize) -> T) -> Self {
        let (w, h) = (self.width, self.height);
        let coeffs = self
            .coeffs
            .iter()
            .enumerate()
            .map(|(idx, &c)| {
                c * gain(signed_frequency(idx % w, w), signed_frequency(idx / w, h))
            })
            .collect();
        Self::from_coeffs(w, h, coeffs).expect("same shape")
    }

    /// Largest `|F(k) - conj(F(-k))|` relative to the peak magnitude.
    pub fn conjugate_asymmetry(&self) -> T {
        let peak = self
            .coeffs
            .iter()
            .map(|c| c.norm())
            .fold(T::zero(), T::max);
        if peak.is_zero() {
            return T::zero();
        }
        self.iter()
            .map(|(kx, ky, c)| (c - self.get(-kx, -ky).conj()).norm())
            .fold(T::zero(), T::max)
            / peak
    }
}

fn transpose<T: Copy + Default>(width: usize, height: usize, src: &[T]) -> Vec<T> {
    let mut out = vec![T::default(); src.len()];
    for (y, row) in src.chunks_exact(width).enumerate() {
        for (x, &v) in row.iter().enumerate() {
            out[x * height + y] = v;
        }
    }
    out
}

/// Unnormalized separable 2D FFT over a row-major `width x height` buffer.
fn fft2_in_place<T: Scalar>(
    width: usize,
    height: usize,
    buf: &mut Vec<Complex<T>>,
    direction: FftDirection,
) {
    let mut planner = FftPlanner::<T>::new();
    let rows = planner.plan_fft(width, direction);
    let cols = planner.plan_fft(height, direction);
    let mut scratch = vec![
        Complex::zero();
        rows.get_inplace_scratch_len()
            .max(cols.get_inplace_scratch_len())
    ];
    for row in buf.chunks_exact_mut(width) {
        rows.process_with_scratch(row, &mut scratch);
    }
    let mut t = transpose(width, height, buf);
    for col in t.chunks_exact_mut(height) {
        cols.process_with_scratch(col, &mut scratch);
    }
    *buf = transpose(height, width, &t);
}

/// Forward DFT `F(k_x, k_y) = 1/(mn) Σ f(p, q) e^{-2πi (k_x p/m + k_y q/n)}`
/// with `p` the column and `q` the row index.
pub fn dft2<T: Scalar>(img: &ImageTensor<T>) -> Result<Spectrum2D<T>, SpectralError> {
    if img.channels() != 1 {
        return Err(SpectralError::NonGrayscaleInput(img.channels()));
    }
    let (w, h) = (img.width(), img.height());
    let mut buf: Vec<Complex<T>> = img.data().iter().map(|&v| Complex::new(v, T::zero())).collect();
    fft2_in_place(w, h, &mut buf, FftDirection::Forward);
    let norm = T::one() / T::from_count(w * h);
    for c in &mut buf {
        *c = *c * norm;
    }
    Spectrum2D::from_coeffs(w, h, buf)
}

/// Inverse of [`dft2`]. Fails if the reconstruction carries an imaginary
/// part beyond the scalar's reconstruction tolerance, which means the
/// spectrum was not conjugate symmetric.
pub fn idft2<T: Scalar>(spec: &Spectrum2D<T>) -> Result<ImageTensor<T>, SpectralError> {
    let (w, h) = (spec.width, spec.height);
    let mut buf = spec.coeffs.clone();
    fft2_in_place(w, h, &mut buf, FftDirection::Inverse);
    let peak = buf.iter().map(|c| c.norm()).fold(T::zero(), T::max);
    let worst_imag = buf.iter().map(|c| c.im.abs()).fold(T::zero(), T::max);
    if peak > T::zero() && worst_imag > T::RECONSTRUCTION_TOL * peak {
        return Err(SpectralError::AsymmetricSpectrum {
            residual: (worst_imag / peak).as_f64(),
        });
    }
    let data = buf.into_iter().map(|c| c.re).collect();
    Ok(ImageTensor::new(w, h, 1, data, PixelKind::Real).expect("spectrum dimensions are valid"))
}

/// Normalized radius `k_r = sqrt((k_x² + k_y²) / (¼(m² + n²)))`; the corner
/// `(m/2, n/2)` maps to 1.
pub fn radial_wavenumber<T: Scalar>(kx: isize, ky: isize, m: usize, n: usize) -> T {
    let (kx, ky) = (T::lit(kx as f64), T::lit(ky as f64));
    let (m, n) = (T::from_count(m), T::from_count(n));
    ((kx * kx + ky * ky) / (T::lit(0.25) * (m * m + n * n))).sqrt()
}

/// Normalized polar coordinates `(k_r, θ)` with `θ ∈ [0, 2π)`.
pub fn polar_coords<T: Scalar>(kx: isize, ky: isize, m: usize, n: usize) -> (T, T) {
    let k_r = radial_wavenumber(kx, ky, m, n);
    let mut theta = T::lit(ky as f64).atan2(T::lit(kx as f64));
    if theta < T::zero() {
        theta = theta + T::TAU();
    }
    if theta >= T::TAU() {
        theta = theta - T::TAU();
    }
    (k_r, theta)
}

/// How a reduced spectrum is scaled.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Normalization<T> {
    /// Magnitudes divided by the DC gain only.
    DcGain,
    /// Additionally divided by the curve's value interpolated at `k_t`.
    Threshold { k_t: T },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadialBin<T> {
    /// Bin center on the normalized radial axis.
    pub k_r: T,
    /// Mean coefficient magnitude in the bin.
    pub c: T,
    pub count: usize,
}

/// Azimuthally averaged magnitude curve `c(k_r)`; empty bins are omitted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReducedSpectrum<T> {
    pub bins: Vec<RadialBin<T>>,
    pub n_bins: usize,
    pub normalization: Normalization<T>,
}

/// One bin per integer radial frequency at native resolution, at least
/// [`MIN_BINS`].
pub fn default_bin_count(width: usize, height: usize) -> usize {
    (width.max(height) / 2).max(MIN_BINS)
}

/// Index of the half-open bin `(i/n, (i+1)/n]` holding radius `k_r > 0`.
fn bin_index<T: Scalar>(k_r: T, n_bins: usize) -> usize {
    let x = k_r * T::from_count(n_bins);
    let nearest = x.round();
    let upper = if (x - nearest).abs() <= T::EDGE_TOL * x.max(T::one()) {
        nearest
    } else {
        x.ceil()
    };
    upper
        .to_usize()
        .unwrap_or(0)
        .saturating_sub(1)
        .min(n_bins - 1)
}

/// Bins the DC-normalized magnitudes of all non-DC coefficients on uniform
/// radial edges over `(0, 1]` and averages each bin.
pub fn reduced_spectrum<T: Scalar>(
    spec: &Spectrum2D<T>,
    n_bins: usize,
    normalization: Normalization<T>,
) -> Result<ReducedSpectrum<T>, SpectralError> {
    if n_bins < MIN_BINS {
        return Err(SpectralError::TooFewBins(n_bins));
    }
    if !(spec.dc_gain > T::zero()) {
        return Err(SpectralError::ZeroDcGain);
    }
    let (m, n) = (spec.width, spec.height);
    let denom = T::lit(0.25) * (T::from_count(m * m) + T::from_count(n * n));
    let sq = |k: isize| T::lit((k * k) as f64);
    let row_sq: Vec<T> = (0..m).map(|i| sq(signed_frequency(i, m))).collect();

    let mut sums = vec![T::zero(); n_bins];
    let mut counts = vec![0usize; n_bins];
    for (j, row) in spec.coeffs.chunks_exact(m).enumerate() {
        let ky2 = sq(signed_frequency(j, n));
        for (i, c) in row.iter().enumerate() {
            if i == 0 && j == 0 {
                continue;
            }
            let k_r = ((row_sq[i] + ky2) / denom).sqrt();
            let b = bin_index(k_r, n_bins);
            sums[b] = sums[b] + c.norm();
            counts[b] += 1;
        }
    }

    let width = T::one() / T::from_count(n_bins);
    let half = T::lit(0.5);
    let dc = spec.dc_gain;
    let mut bins: Vec<RadialBin<T>> = sums
        .into_iter()
        .zip(counts)
        .enumerate()
        .filter(|(_, (_, count))| *count > 0)
        .map(|(i, (sum, count))| RadialBin {
            k_r: (T::from_count(i) + half) * width,
            c: sum / T::from_count(count) / dc,
            count,
        })
        .collect();

    if let Normalization::Threshold { k_t } = normalization {
        let at = interpolate(&bins, k_t);
        if !(at > T::zero()) {
            return Err(SpectralError::ZeroThresholdValue(k_t.as_f64()));
        }
        for b in &mut bins {
            b.c = b.c / at;
        }
    }

    Ok(ReducedSpectrum {
        bins,
        n_bins,
        normalization,
    })
}

/// Piecewise-linear interpolation of `c` at `k_r`, clamped at both ends.
fn interpolate<T: Scalar>(bins: &[RadialBin<T>], k_r: T) -> T {
    let Some(first) = bins.first() else {
        return T::zero();
    };
    if k_r <= first.k_r {
        return first.c;
    }
    for pair in bins.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        if k_r <= b.k_r {
            let t = (k_r - a.k_r) / (b.k_r - a.k_r);
            return a.c + t * (b.c - a.c);
        }
    }
    bins.last().map_or(T::zero(), |b| b.c)
}

impl<T: Scalar> ReducedSpectrum<T> {
    /// Value of the curve at `k_r` by linear interpolation between bin centers.
    pub fn value_at(&self, k_r: T) -> T {
        interpolate(&self.bins, k_r)
    }

    /// Mean of `c` over bins with `k_r >= from`.
    pub fn tail_mean(&self, from: T) -> T {
        let tail: Vec<T> = self
            .bins
            .iter()
            .filter(|b| b.k_r >= from)
            .map(|b| b.c)
            .collect();
        if tail.is_empty() {
            return T::zero();
        }
        tail.iter().fold(T::zero(), |a, &b| a + b) / T::from_count(tail.len())
    }

    /// Writes `k_r,c,count` rows.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        for b in &self.bins {
            w.serialize(b)?;
        }
        w.flush()?;
        Ok(())
    }
}
