//! Power-law decay fit `c(k_r) ≈ b1 (k_r / k_T)^b2` over the tail
//! `k_r ∈ [k_T, 1]` of a reduced spectrum.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;
use crate::spectral::ReducedSpectrum;

/// Threshold wavenumber used when none is given.
pub const DEFAULT_K_T: f64 = 0.75;

#[derive(Debug, Error, PartialEq)]
pub enum FitError {
    #[error("threshold wavenumber {0} outside (0, 1)")]
    InvalidThreshold(f64),
    #[error("only {usable} usable bins at or above k_T = {k_t} (need 2)")]
    InsufficientTailBins { usable: usize, k_t: f64 },
    #[error("every bin at or above k_T = {0} is zero")]
    AllZeroTail(f64),
}

/// Fitted tail parameters plus diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayParams<T> {
    /// Tail magnitude at `k_T`, in DC-normalized units.
    pub b1: T,
    /// Decay exponent; negative for decaying spectra.
    pub b2: T,
    pub k_t: T,
    pub n_points: usize,
    /// Residual sum of squares of the log-space fit.
    pub rss: T,
}

impl<T: Scalar> DecayParams<T> {
    /// Model value `b1 (k_r / k_T)^b2`.
    pub fn eval(&self, k_r: T) -> T {
        self.b1 * (k_r / self.k_t).powf(self.b2)
    }
}

pub fn check_threshold<T: Scalar>(k_t: T) -> Result<(), FitError> {
    if k_t > T::zero() && k_t < T::one() {
        Ok(())
    } else {
        Err(FitError::InvalidThreshold(k_t.as_f64()))
    }
}

/// Ordinary least squares of `ln c` against `ln(k_r / k_T)` over bins with
/// `k_r >= k_T` and `c` above the magnitude floor. `b1 = exp(intercept)`,
/// `b2 = slope`. Bin sample counts are not used as weights.
pub fn fit_decay<T: Scalar>(rs: &ReducedSpectrum<T>, k_t: T) -> Result<DecayParams<T>, FitError> {
    check_threshold(k_t)?;
    let tail: Vec<_> = rs.bins.iter().filter(|b| b.k_r >= k_t).collect();
    let points: Vec<(T, T)> = tail
        .iter()
        .filter(|b| b.c > T::MAGNITUDE_FLOOR)
        .map(|b| ((b.k_r / k_t).ln(), b.c.ln()))
        .collect();
    if points.len() < 2 {
        if !tail.is_empty() && points.is_empty() {
            return Err(FitError::AllZeroTail(k_t.as_f64()));
        }
        return Err(FitError::InsufficientTailBins {
            usable: points.len(),
            k_t: k_t.as_f64(),
        });
    }

    let n = T::from_count(points.len());
    let mean_x = points.iter().fold(T::zero(), |a, p| a + p.0) / n;
    let mean_y = points.iter().fold(T::zero(), |a, p| a + p.1) / n;
    let (sxx, sxy) = points.iter().fold((T::zero(), T::zero()), |(sxx, sxy), &(x, y)| {
        let dx = x - mean_x;
        (sxx + dx * dx, sxy + dx * (y - mean_y))
    });
    let slope = if sxx > T::zero() { sxy / sxx } else { T::zero() };
    let intercept = mean_y - slope * mean_x;
    let rss = points.iter().fold(T::zero(), |acc, &(x, y)| {
        let r = y - (intercept + slope * x);
        acc + r * r
    });

    Ok(DecayParams {
        b1: intercept.exp(),
        b2: slope,
        k_t,
        n_points: points.len(),
        rss,
    })
}
