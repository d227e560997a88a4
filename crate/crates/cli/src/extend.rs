//! Even reflection of half-period samples onto the torus.

use std::f64::consts::PI;

use thinfilm_core::spectral::{GridSamples, SpectralError};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ExtendError {
    #[error("half-width {0} is unsupported; only pi is (constants are not rescaled)")]
    HalfWidthUnsupported(f64),
    #[error("need at least two half-period samples, got {0}")]
    TooFewSamples(usize),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
}

/// Takes `m+1` samples at `x = πi/m`, `i = 0..=m`, and returns the `2m`
/// torus samples of `u(|x|)` at `x_j = −π + πj/m`.
pub fn even_extend(half: &[f64], half_width: f64) -> Result<GridSamples, ExtendError> {
    if (half_width - PI).abs() > 4.0 * f64::EPSILON * PI {
        return Err(ExtendError::HalfWidthUnsupported(half_width));
    }
    if half.len() < 2 {
        return Err(ExtendError::TooFewSamples(half.len()));
    }
    let m = half.len() - 1;
    let values = (0..2 * m).map(|j| half[j.abs_diff(m)]).collect();
    Ok(GridSamples::new(values)?)
}
