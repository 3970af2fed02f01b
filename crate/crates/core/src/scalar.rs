//! Floating-point abstraction shared by the numeric modules.

use std::fmt::{Debug, Display};

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};
use rustfft::FftNum;
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Real scalar used throughout the spectral pipeline: `f32` or `f64`.
///
/// The associated constants carry precision-dependent tolerances so that
/// checks such as "imaginary residual is negligible" scale with the type.
pub trait Scalar:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + FftNum
    + Default
    + Debug
    + Display
    + Serialize
    + DeserializeOwned
    + Send
    + Sync
    + 'static
{
    /// Relative tolerance on the imaginary residual after an inverse transform.
    const RECONSTRUCTION_TOL: Self;
    /// Relative slack used when deciding whether a radius sits on a bin edge.
    const EDGE_TOL: Self;
    /// Magnitudes at or below this are treated as zero by the decay fit.
    const MAGNITUDE_FLOOR: Self;

    /// Lossless-enough conversion from `f64` literals.
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("finite literal")
    }

    fn from_count(n: usize) -> Self {
        Self::from_usize(n).expect("count fits in a float")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f64 {
    const RECONSTRUCTION_TOL: Self = 1e-9;
    const EDGE_TOL: Self = 1e-9;
    const MAGNITUDE_FLOOR: Self = 1e-15;
}

impl Scalar for f32 {
    const RECONSTRUCTION_TOL: Self = 1e-3;
    const EDGE_TOL: Self = 1e-5;
    // Smallest normal f32 is ~1.2e-38, so the f64 floor still applies.
    const MAGNITUDE_FLOOR: Self = 1e-15;
}
