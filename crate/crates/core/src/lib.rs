//! Detect deep-network-generated images from the decay of their
//! high-frequency Fourier spectrum, and spoof that decay.
//!
//! The pipeline for one image is
//! [`to_grayscale`](imageio::to_grayscale) →
//! [`dft2`](spectral::dft2) →
//! [`reduced_spectrum`](spectral::reduced_spectrum) →
//! [`fit_decay`](fitting::fit_decay), giving two features `(b1, b2)` that a
//! [`KnnModel`](classifier::KnnModel) classifies as real or fake.
//!
//! The numeric modules are generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below name the common instantiations. The experiment harness
//! works in `f64`.

// `!(x > 0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod classifier;
pub mod fitting;
pub mod fixtures;
pub mod harness;
pub mod imageio;
mod scalar;
pub mod spectral;
pub mod synthesis;

pub use scalar::Scalar;

pub use classifier::{Features, KnnModel, Label, LabeledSample};
pub use fitting::DecayParams;
pub use imageio::{CompressionQuality, ImageTensor, PixelKind};
pub use spectral::{Normalization, ReducedSpectrum, Spectrum2D};
pub use synthesis::SpoofConfig;

pub type Image = ImageTensor<f64>;
pub type Image32 = ImageTensor<f32>;
pub type Spectrum = Spectrum2D<f64>;
pub type Spectrum32 = Spectrum2D<f32>;
pub type Reduced = ReducedSpectrum<f64>;
pub type Reduced32 = ReducedSpectrum<f32>;
pub type Decay = DecayParams<f64>;
pub type Decay32 = DecayParams<f32>;
pub type Model = KnnModel<f64>;
pub type Model32 = KnnModel<f32>;
