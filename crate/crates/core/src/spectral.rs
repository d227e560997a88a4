//! Real 2π-periodic functions represented by their Fourier coefficients.
//!
//! A [`SpectralField`] stores `û(k)` for `k = 0..=M`; negative wavenumbers
//! follow from the reality condition `û(-k) = conj(û(k))`. The physical
//! grid is `x_j = -π + 2πj/n`, so the discrete transforms carry a `(-1)^k`
//! phase relative to the usual `[0, 2π)` convention.

use std::cell::RefCell;
use std::f64::consts::PI;
use std::ops::{Add, Mul, Neg, Sub};
use std::sync::Arc;

use num_complex::Complex64;
use rand::Rng;
use realfft::{ComplexToReal, RealFftPlanner, RealToComplex};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpectralError {
    #[error("field has nonzero mean {mean:e} (tolerance {tolerance:e})")]
    NonZeroMean { mean: f64, tolerance: f64 },
    #[error("{n} grid points cannot resolve max_mode {max_mode} (need at least {})", 2 * max_mode + 1)]
    InsufficientResolution { n: usize, max_mode: usize },
    #[error("non-finite Fourier coefficient at k = {0}")]
    NonFinite(usize),
    #[error("zeroth coefficient has imaginary part {0:e}; field is not real")]
    NotReal(f64),
    #[error("empty sample set")]
    Empty,
}

thread_local! {
    static PLANNER: RefCell<RealFftPlanner<f64>> = RefCell::new(RealFftPlanner::new());
}

fn forward_plan(n: usize) -> Arc<dyn RealToComplex<f64>> {
    PLANNER.with(|p| p.borrow_mut().plan_fft_forward(n))
}

fn inverse_plan(n: usize) -> Arc<dyn ComplexToReal<f64>> {
    PLANNER.with(|p| p.borrow_mut().plan_fft_inverse(n))
}

#[inline]
fn alternating(k: usize) -> f64 {
    if k % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Fourier coefficients `û(0..=M)` of a real periodic function.
#[derive(Debug, Clone)]
pub struct SpectralField {
    coeffs: Vec<Complex64>,
}

impl SpectralField {
    pub fn zeros(max_mode: usize) -> Self {
        Self {
            coeffs: vec![Complex64::new(0.0, 0.0); max_mode + 1],
        }
    }

    /// Builds a field from the nonnegative-wavenumber half of its spectrum.
    ///
    /// `coeffs[k]` is `û(k)`. The imaginary part of `û(0)` must vanish up to
    /// roundoff; it is then set to exactly zero.
    pub fn from_coeffs(mut coeffs: Vec<Complex64>) -> Result<Self, SpectralError> {
        if coeffs.is_empty() {
            return Err(SpectralError::Empty);
        }
        if let Some(k) = coeffs.iter().position(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return Err(SpectralError::NonFinite(k));
        }
        let c0 = coeffs[0];
        if c0.im.abs() > 1e-14 * (1.0 + c0.re.abs()) {
            return Err(SpectralError::NotReal(c0.im));
        }
        coeffs[0].im = 0.0;
        Ok(Self { coeffs })
    }

    pub fn constant(value: f64, max_mode: usize) -> Self {
        let mut u = Self::zeros(max_mode);
        u.coeffs[0] = Complex64::new(value, 0.0);
        u
    }

    /// `amplitude * sin(k x)`, stored with at least `max_mode` modes.
    pub fn sine(k: usize, amplitude: f64, max_mode: usize) -> Self {
        assert!(k >= 1, "sin(0x) is identically zero");
        let mut u = Self::zeros(max_mode.max(k));
        u.coeffs[k] = Complex64::new(0.0, -0.5 * amplitude);
        u
    }

    /// `amplitude * cos(k x)`, stored with at least `max_mode` modes.
    pub fn cosine(k: usize, amplitude: f64, max_mode: usize) -> Self {
        let mut u = Self::zeros(max_mode.max(k));
        if k == 0 {
            u.coeffs[0] = Complex64::new(amplitude, 0.0);
        } else {
            u.coeffs[k] = Complex64::new(0.5 * amplitude, 0.0);
        }
        u
    }

    /// Random mean-free field with coefficients of modulus at most
    /// `amplitude * decay^(k-1)` and uniformly distributed phases.
    pub fn random<R: Rng + ?Sized>(rng: &mut R, max_mode: usize, amplitude: f64, decay: f64) -> Self {
        let mut u = Self::zeros(max_mode);
        let mut scale = amplitude;
        for c in u.coeffs.iter_mut().skip(1) {
            let r = scale * rng.gen::<f64>();
            let phase = 2.0 * PI * rng.gen::<f64>();
            *c = Complex64::from_polar(r, phase);
            scale *= decay;
        }
        u
    }

    pub fn max_mode(&self) -> usize {
        self.coeffs.len() - 1
    }

    /// Coefficients `û(0..=M)`.
    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub(crate) fn coeffs_mut(&mut self) -> &mut [Complex64] {
        &mut self.coeffs
    }

    /// `û(k)` for any integer `k`; zero outside `-M..=M`.
    pub fn coeff(&self, k: i64) -> Complex64 {
        let idx = k.unsigned_abs() as usize;
        match self.coeffs.get(idx) {
            Some(c) if k < 0 => c.conj(),
            Some(c) => *c,
            None => Complex64::new(0.0, 0.0),
        }
    }

    pub fn mean(&self) -> f64 {
        self.coeffs[0].re
    }

    /// `Σ_k |k|^s |û(k)|` over all `k ∈ ℤ`, with `|0|^0 = 1`.
    pub fn wiener_norm(&self, s: f64) -> f64 {
        debug_assert!(s >= 0.0);
        let zeroth = if s == 0.0 { self.coeffs[0].re.abs() } else { 0.0 };
        let tail: f64 = self
            .coeffs
            .iter()
            .enumerate()
            .skip(1)
            .map(|(k, c)| (k as f64).powf(s) * c.norm())
            .sum();
        zeroth + 2.0 * tail
    }

    /// Coefficients `(ik)^order û(k)`.
    pub fn derivative(&self, order: u32) -> Self {
        let factor = Complex64::new(0.0, 1.0).powu(order % 4);
        let mut out = self.clone();
        for (k, c) in out.coeffs.iter_mut().enumerate() {
            *c *= factor * (k as f64).powi(order as i32);
        }
        out
    }

    /// The mean-free antiderivative, `−(i/k) û(k)` for `k ≠ 0`.
    ///
    /// The mean must vanish up to `1e-12 · (1 + ‖u‖_{Ȧ⁰})`.
    pub fn antiderivative(&self) -> Result<Self, SpectralError> {
        let tolerance = 1e-12 * (1.0 + self.wiener_norm(0.0));
        let mean = self.mean();
        if mean.abs() > tolerance {
            return Err(SpectralError::NonZeroMean { mean, tolerance });
        }
        let mut out = Self::zeros(self.max_mode());
        for (k, (o, c)) in out.coeffs.iter_mut().zip(&self.coeffs).enumerate().skip(1) {
            *o = Complex64::new(0.0, -1.0 / k as f64) * c;
        }
        Ok(out)
    }

    /// `P_M u`: keeps `|k| ≤ M`, zero-padding when `M` exceeds the stored range.
    pub fn project(&self, max_mode: usize) -> Self {
        let mut coeffs = self.coeffs.clone();
        coeffs.resize(max_mode + 1, Complex64::new(0.0, 0.0));
        Self { coeffs }
    }

    /// The same field with its mean removed.
    pub fn without_mean(&self) -> Self {
        let mut out = self.clone();
        out.coeffs[0] = Complex64::new(0.0, 0.0);
        out
    }

    pub fn scale(&self, factor: f64) -> Self {
        Self {
            coeffs: self.coeffs.iter().map(|c| c * factor).collect(),
        }
    }

    /// Point evaluation by direct summation of the series.
    pub fn evaluate(&self, x: f64) -> f64 {
        let tail: f64 = self
            .coeffs
            .iter()
            .enumerate()
            .skip(1)
            .map(|(k, c)| (c * Complex64::from_polar(1.0, k as f64 * x)).re)
            .sum();
        self.coeffs[0].re + 2.0 * tail
    }

    pub fn is_finite(&self) -> bool {
        self.coeffs.iter().all(|c| c.re.is_finite() && c.im.is_finite())
    }

    /// Largest coefficient difference, treating missing modes as zero.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        let n = self.coeffs.len().max(other.coeffs.len());
        (0..n as i64)
            .map(|k| (self.coeff(k) - other.coeff(k)).norm())
            .fold(0.0, f64::max)
    }

    pub fn to_samples(&self, n: usize) -> Result<GridSamples, SpectralError> {
        to_samples(self, n)
    }
}

/// Fields compare equal when all coefficients agree, with missing modes
/// read as zero.
impl PartialEq for SpectralField {
    fn eq(&self, other: &Self) -> bool {
        let n = self.coeffs.len().max(other.coeffs.len());
        (0..n as i64).all(|k| self.coeff(k) == other.coeff(k))
    }
}

fn zip_with(a: &SpectralField, b: &SpectralField, op: impl Fn(Complex64, Complex64) -> Complex64) -> SpectralField {
    let n = a.coeffs.len().max(b.coeffs.len());
    SpectralField {
        coeffs: (0..n as i64).map(|k| op(a.coeff(k), b.coeff(k))).collect(),
    }
}

impl Add for &SpectralField {
    type Output = SpectralField;
    fn add(self, rhs: Self) -> SpectralField {
        zip_with(self, rhs, |x, y| x + y)
    }
}

impl Sub for &SpectralField {
    type Output = SpectralField;
    fn sub(self, rhs: Self) -> SpectralField {
        zip_with(self, rhs, |x, y| x - y)
    }
}

impl Mul<f64> for &SpectralField {
    type Output = SpectralField;
    fn mul(self, rhs: f64) -> SpectralField {
        self.scale(rhs)
    }
}

impl Neg for &SpectralField {
    type Output = SpectralField;
    fn neg(self) -> SpectralField {
        self.scale(-1.0)
    }
}

/// Real samples `u(x_j)` at `x_j = -π + 2πj/n`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSamples {
    values: Vec<f64>,
}

impl GridSamples {
    pub fn new(values: Vec<f64>) -> Result<Self, SpectralError> {
        if values.is_empty() {
            return Err(SpectralError::Empty);
        }
        Ok(Self { values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn point(&self, j: usize) -> f64 {
        grid_point(j, self.values.len())
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

pub fn grid_point(j: usize, n: usize) -> f64 {
    -PI + 2.0 * PI * j as f64 / n as f64
}

/// Smallest power of two that is at least `n`.
pub fn padded_len(n: usize) -> usize {
    n.max(2).next_power_of_two()
}

/// Synthesizes `n` grid samples of `u`. Requires `n ≥ 2M+1`.
pub fn to_samples(u: &SpectralField, n: usize) -> Result<GridSamples, SpectralError> {
    let m = u.max_mode();
    if n < 2 * m + 1 {
        return Err(SpectralError::InsufficientResolution { n, max_mode: m });
    }
    let plan = inverse_plan(n);
    let mut spectrum = plan.make_input_vec();
    for (k, c) in u.coeffs.iter().enumerate() {
        spectrum[k] = c * alternating(k);
    }
    let mut values = plan.make_output_vec();
    plan.process(&mut spectrum, &mut values)
        .expect("spectrum satisfies the real-signal symmetry");
    Ok(GridSamples { values })
}

/// Analyzes grid samples into `û(0..=M)`. Requires `n ≥ 2M+1`.
pub fn from_samples(g: &GridSamples, max_mode: usize) -> Result<SpectralField, SpectralError> {
    let n = g.len();
    if n < 2 * max_mode + 1 {
        return Err(SpectralError::InsufficientResolution { n, max_mode });
    }
    let plan = forward_plan(n);
    let mut input = g.values.clone();
    let mut spectrum = plan.make_output_vec();
    plan.process(&mut input, &mut spectrum)
        .expect("buffer lengths match the plan");
    let inv_n = 1.0 / n as f64;
    let mut coeffs: Vec<Complex64> = spectrum
        .iter()
        .take(max_mode + 1)
        .enumerate()
        .map(|(k, c)| c * (alternating(k) * inv_n))
        .collect();
    coeffs[0].im = 0.0;
    Ok(SpectralField { coeffs })
}

/// `P_M[a·b]` through the transform path: both factors are sampled on a
/// zero-padded grid of at least `2(M_a + M_b) + 1` points, multiplied
/// pointwise, and analyzed back.
pub fn multiply(a: &SpectralField, b: &SpectralField, max_mode: usize) -> SpectralField {
    let full = a.max_mode() + b.max_mode();
    let n = padded_len(2 * full + 1);
    let sa = to_samples(a, n).expect("padded grid resolves both factors");
    let sb = to_samples(b, n).expect("padded grid resolves both factors");
    let prod: Vec<f64> = sa.values.iter().zip(&sb.values).map(|(x, y)| x * y).collect();
    let g = GridSamples { values: prod };
    from_samples(&g, full.min(max_mode))
        .expect("padded grid resolves the product")
        .project(max_mode)
}

/// `P_M[a·b]` by the direct convolution sum `Σ_j â(j) b̂(k−j)`.
pub fn multiply_convolution(a: &SpectralField, b: &SpectralField, max_mode: usize) -> SpectralField {
    let ma = a.max_mode() as i64;
    let mb = b.max_mode() as i64;
    let coeffs = (0..=max_mode as i64)
        .map(|k| {
            let lo = (-ma).max(k - mb);
            let hi = ma.min(k + mb);
            (lo..=hi).map(|j| a.coeff(j) * b.coeff(k - j)).sum()
        })
        .collect::<Vec<Complex64>>();
    let mut out = SpectralField { coeffs };
    out.coeffs[0].im = 0.0;
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn wiener_norm_of_single_modes() {
        assert!(close(SpectralField::sine(1, 1.0, 1).wiener_norm(0.0), 1.0, 1e-15));
        let mu = 1e-3;
        assert!(close(SpectralField::sine(1000, mu, 1000).wiener_norm(0.0), mu, 1e-18));
        let u = &SpectralField::sine(1, 1.0, 2) + &SpectralField::cosine(2, 1.0, 2);
        assert!(close(u.wiener_norm(2.0), 5.0, 1e-14));
    }

    #[test]
    fn zeroth_mode_counts_only_for_s_zero() {
        let u = SpectralField::constant(3.0, 4);
        assert_eq!(u.wiener_norm(0.0), 3.0);
        assert_eq!(u.wiener_norm(0.5), 0.0);
        assert_eq!(u.mean(), 3.0);
        assert_eq!(SpectralField::sine(1, 1.0, 1).mean(), 0.0);
    }

    #[test]
    fn remark_profile_has_unit_mean() {
        let h = &SpectralField::constant(1.0, 1000) + &SpectralField::sine(1000, 1e-3, 1000);
        assert_eq!(h.mean(), 1.0);
    }

    #[test]
    fn derivatives_of_trig_modes() {
        let d2 = SpectralField::sine(1, 1.0, 1).derivative(2);
        assert!(d2.max_abs_diff(&SpectralField::sine(1, -1.0, 1)) < 1e-15);
        let d4 = SpectralField::cosine(2, 1.0, 2).derivative(4);
        assert!(d4.max_abs_diff(&SpectralField::cosine(2, 16.0, 2)) < 1e-13);
        let d1 = SpectralField::sine(3, 1.0, 3).derivative(1);
        assert!(d1.max_abs_diff(&SpectralField::cosine(3, 3.0, 3)) < 1e-15);
    }

    #[test]
    fn antiderivative_examples() {
        let s = SpectralField::cosine(1, 1.0, 1).antiderivative().unwrap();
        assert!(s.max_abs_diff(&SpectralField::sine(1, 1.0, 1)) < 1e-15);
        assert_eq!(SpectralField::zeros(3).antiderivative().unwrap(), SpectralField::zeros(3));
        let s2 = SpectralField::cosine(2, 2.0, 2).antiderivative().unwrap();
        assert!(s2.max_abs_diff(&SpectralField::sine(2, 1.0, 2)) < 1e-15);
        assert!(s2.derivative(1).max_abs_diff(&SpectralField::cosine(2, 2.0, 2)) < 1e-15);
    }

    #[test]
    fn antiderivative_rejects_mean() {
        let u = &SpectralField::constant(0.1, 2) + &SpectralField::cosine(1, 1.0, 2);
        assert!(matches!(u.antiderivative(), Err(SpectralError::NonZeroMean { .. })));
        // roundoff-sized means are forgiven
        let v = &SpectralField::constant(1e-14, 2) + &SpectralField::cosine(1, 1.0, 2);
        assert!(v.antiderivative().is_ok());
    }

    #[test]
    fn multiply_examples() {
        let s = SpectralField::sine(1, 1.0, 1);
        let c = SpectralField::cosine(1, 1.0, 1);
        let expected = &SpectralField::constant(0.5, 2) - &SpectralField::cosine(2, 0.5, 2);
        for m in [2, 5] {
            assert!(multiply(&s, &s, m).max_abs_diff(&expected) < 1e-15);
            assert!(multiply_convolution(&s, &s, m).max_abs_diff(&expected) < 1e-15);
        }
        assert!(multiply(&s, &c, 1).max_abs_diff(&SpectralField::zeros(1)) < 1e-16);
        assert_eq!(multiply_convolution(&s, &c, 1), SpectralField::zeros(1));

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let f = SpectralField::random(&mut rng, 7, 1.0, 0.8);
        let one = SpectralField::constant(1.0, 0);
        assert!(multiply(&one, &f, 7).max_abs_diff(&f) < 1e-15);
        assert_eq!(multiply_convolution(&one, &f, 7), f);
    }

    #[test]
    fn project_examples() {
        let u = &SpectralField::sine(1, 1.0, 5) + &SpectralField::sine(5, 1.0, 5);
        assert_eq!(u.project(2), SpectralField::sine(1, 1.0, 2));
        assert_eq!(u.project(2).project(2), u.project(2));
        assert_eq!(u.project(9), u);
        assert_eq!(u.project(9).max_mode(), 9);
    }

    #[test]
    fn sample_round_trips() {
        let u = SpectralField::sine(3, 1.0, 3);
        let back = from_samples(&to_samples(&u, 16).unwrap(), 3).unwrap();
        assert!(back.max_abs_diff(&u) < 1e-14);

        let one = from_samples(&GridSamples::new(vec![1.0; 8]).unwrap(), 3).unwrap();
        assert_eq!(one.mean(), 1.0);
        assert!(one.coeffs()[1..].iter().all(|c| c.norm() < 1e-16));

        // odd, non-power-of-two grids work too
        let g = to_samples(&u, 21).unwrap();
        assert!(from_samples(&g, 3).unwrap().max_abs_diff(&u) < 1e-14);
    }

    #[test]
    fn samples_match_pointwise_evaluation() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let u = SpectralField::random(&mut rng, 6, 1.0, 0.9);
        let g = to_samples(&u, 16).unwrap();
        for j in 0..16 {
            assert!((g.values()[j] - u.evaluate(g.point(j))).abs() < 1e-13);
        }
    }

    #[test]
    fn resolution_is_checked() {
        let u = SpectralField::sine(4, 1.0, 4);
        assert_eq!(
            to_samples(&u, 8),
            Err(SpectralError::InsufficientResolution { n: 8, max_mode: 4 })
        );
        let g = GridSamples::new(vec![0.0; 8]).unwrap();
        assert!(from_samples(&g, 4).is_err());
        assert!(from_samples(&g, 3).is_ok());
    }

    #[test]
    fn constructor_validation() {
        assert_eq!(
            SpectralField::from_coeffs(vec![Complex64::new(1.0, 0.5)]),
            Err(SpectralError::NotReal(0.5))
        );
        assert_eq!(
            SpectralField::from_coeffs(vec![Complex64::new(0.0, 0.0), Complex64::new(f64::NAN, 0.0)]),
            Err(SpectralError::NonFinite(1))
        );
        assert!(SpectralField::from_coeffs(vec![]).is_err());
    }
}
