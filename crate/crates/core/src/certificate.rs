//! Explicit constants of the global existence and decay estimates.
//!
//! Given mean-free initial perturbations and the physical parameters, a
//! [`Certificate`] records the evaluated constants, each hypothesis with its
//! margin, and the guaranteed exponential decay rate `δ`. All hypotheses
//! are strict inequalities; equality fails.

use thiserror::Error;

use crate::model::{mean_tolerance, PhysParams, Regime};
use crate::spectral::SpectralField;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CertificateError {
    #[error("energy {energy} is not below h♯ = {h_mean}")]
    EnergyTooLarge { energy: f64, h_mean: f64 },
    #[error("{field} is not mean-free (mean {mean:e})")]
    NonZeroMean { field: &'static str, mean: f64 },
    #[error("the shape has zero energy")]
    ZeroShape,
    #[error("certificate fails at zero amplitude ({0})")]
    NoPositiveAmplitude(String),
}

/// `(𝔠₁, 𝔠₂, 𝔠₃)`; `𝔠₃ = 0` when `𝒮 = 0`.
pub fn frak_constants(p: &PhysParams) -> (f64, f64, f64) {
    let (g, s, a, d, h, gm) = (p.gravity, p.capillarity, p.hamaker, p.diffusion, p.h_mean, p.gamma_mean);
    let h2 = h * h;
    let c1 = g / 3.0 * h2 * h - a / h - (1.5 * a * gm / h2 - gm * h2 * g / 2.0).abs();
    let c2 = h * gm + d - h2 / 2.0;
    let c3 = s / 3.0 * h2 * h - gm * h2 * s / 2.0;
    (c1, c2, c3)
}

fn inv_gap(p: &PhysParams, e: f64) -> Result<f64, CertificateError> {
    if e.is_nan() || e < 0.0 || e >= p.h_mean {
        return Err(CertificateError::EnergyTooLarge {
            energy: e,
            h_mean: p.h_mean,
        });
    }
    Ok(1.0 / (1.0 - e / p.h_mean))
}

pub fn lambda1(p: &PhysParams, e: f64) -> Result<f64, CertificateError> {
    let (g, a, h, gm) = (p.gravity, p.hamaker, p.h_mean, p.gamma_mean);
    let r = inv_gap(p, e)?;
    let h2 = h * h;
    Ok(h + 19.0 * h2 * g / 3.0
        + a / h2 * r * (2.0 + r)
        + gm
        + g * (4.0 * gm * h + 5.0 * h2)
        + 3.0 * a / (2.0 * h2 * h) * r * r * (7.0 * gm + 1.5 * h + r * 4.0 * gm))
}

pub fn lambda2(p: &PhysParams, e: f64) -> Result<f64, CertificateError> {
    let (g, a, h, gm) = (p.gravity, p.hamaker, p.h_mean, p.gamma_mean);
    let r = inv_gap(p, e)?;
    Ok(6.5 * h + 2.0 * gm + g * h * h + 3.0 * a / (2.0 * h * h * h) * r * r * (h / 2.0))
}

pub fn lambda3(p: &PhysParams) -> f64 {
    let (s, h, gm) = (p.capillarity, p.h_mean, p.gamma_mean);
    s / 2.0 * (14.0 * h * gm + 4.0 * h * h) + 19.0 / 3.0 * s * h * h
}

#[derive(Debug, Clone, PartialEq)]
pub struct Hypothesis {
    pub name: &'static str,
    pub passed: bool,
    /// Raw distance to failure; positive iff `passed`.
    pub margin: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Certificate {
    pub params: PhysParams,
    pub regime: Regime,
    pub e0: f64,
    pub frak_c1: f64,
    pub frak_c2: f64,
    pub frak_c3: f64,
    /// `Λ₁` at the initial energy; `+∞` when `ℰ⁰₀ ≥ h♯`.
    pub lambda1_0: f64,
    pub lambda2_0: f64,
    pub lambda3: f64,
    pub gamma1: f64,
    pub gamma2: f64,
    pub gamma3: f64,
    /// Minimum of the applicable `γᵢ`; meaningful only when [`Certificate::passed`].
    pub delta: f64,
    pub hypotheses: Vec<Hypothesis>,
}

impl Certificate {
    pub fn passed(&self) -> bool {
        self.hypotheses.iter().all(|h| h.passed)
    }

    pub fn failing(&self) -> impl Iterator<Item = &Hypothesis> {
        self.hypotheses.iter().filter(|h| !h.passed)
    }
}

/// Evaluates the certificate for a given initial energy `ℰ⁰₀`.
pub fn certify_energy(e0: f64, p: &PhysParams) -> Certificate {
    let regime = p.regime();
    let (c1, c2, c3) = frak_constants(p);
    let l1 = lambda1(p, e0).unwrap_or(f64::INFINITY);
    let l2 = lambda2(p, e0).unwrap_or(f64::INFINITY);
    let l3 = lambda3(p);
    let extra = match regime {
        Regime::Gravity => 0.0,
        Regime::Capillary => p.capillarity * p.h_mean * p.h_mean / 2.0,
    };
    let gamma = |c: f64, l: f64| if l.is_finite() { c - l * e0 } else { f64::NEG_INFINITY };
    let gamma1 = gamma(c1, l1);
    let gamma2 = gamma(c2, l2 + extra);
    let gamma3 = match regime {
        Regime::Gravity => 0.0,
        Regime::Capillary => c3 - l3 * e0,
    };
    let hyp = |name, margin: f64| Hypothesis {
        name,
        passed: margin > 0.0,
        margin,
    };
    let mut hypotheses = vec![
        hyp("energy_below_means", p.h_mean.min(p.gamma_mean) - e0),
        hyp("frak_c1", c1),
        hyp("frak_c2", c2),
    ];
    if regime == Regime::Capillary {
        hypotheses.push(hyp("frak_c3", c3));
    }
    hypotheses.push(hyp("gamma1", gamma1));
    hypotheses.push(hyp("gamma2", gamma2));
    let delta = match regime {
        Regime::Gravity => gamma1.min(gamma2),
        Regime::Capillary => {
            hypotheses.push(hyp("gamma3", gamma3));
            gamma1.min(gamma2).min(gamma3)
        }
    };
    Certificate {
        params: *p,
        regime,
        e0,
        frak_c1: c1,
        frak_c2: c2,
        frak_c3: c3,
        lambda1_0: l1,
        lambda2_0: l2,
        lambda3: l3,
        gamma1,
        gamma2,
        gamma3,
        delta,
        hypotheses,
    }
}

fn check_mean(field: &'static str, u: &SpectralField) -> Result<(), CertificateError> {
    if u.mean().abs() > mean_tolerance(u) {
        return Err(CertificateError::NonZeroMean { field, mean: u.mean() });
    }
    Ok(())
}

pub fn certify(f0: &SpectralField, theta0: &SpectralField, p: &PhysParams) -> Result<Certificate, CertificateError> {
    check_mean("f0", f0)?;
    check_mean("theta0", theta0)?;
    let e0 = f0.without_mean().wiener_norm(0.0) + theta0.without_mean().wiener_norm(0.0);
    Ok(certify_energy(e0, p))
}

/// Largest `μ` such that `μ·shape` is certified.
pub fn max_amplitude(p: &PhysParams, shape: (&SpectralField, &SpectralField)) -> Result<f64, CertificateError> {
    check_mean("f0", shape.0)?;
    check_mean("theta0", shape.1)?;
    let e_shape = shape.0.wiener_norm(0.0) + shape.1.wiener_norm(0.0);
    if e_shape == 0.0 {
        return Err(CertificateError::ZeroShape);
    }
    let at_zero = certify_energy(0.0, p);
    if !at_zero.passed() {
        let names: Vec<&str> = at_zero.failing().map(|h| h.name).collect();
        return Err(CertificateError::NoPositiveAmplitude(names.join(", ")));
    }
    let passes = |mu: f64| certify_energy(mu * e_shape, p).passed();
    let mut lo = 0.0;
    // the energy hypothesis alone already fails here
    let mut hi = p.h_mean.min(p.gamma_mean) / e_shape;
    while hi - lo > 1e-14 * hi {
        let mid = 0.5 * (lo + hi);
        if passes(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

/// The same constants in exact rational arithmetic, for reports.
pub mod exact {
    use num_bigint::BigInt;
    use num_rational::BigRational;
    use num_traits::{One, Signed, Zero};

    /// Parameters as exact rationals.
    #[derive(Debug, Clone, PartialEq)]
    pub struct RationalParams {
        pub gravity: BigRational,
        pub capillarity: BigRational,
        pub hamaker: BigRational,
        pub diffusion: BigRational,
        pub h_mean: BigRational,
        pub gamma_mean: BigRational,
    }

    #[derive(Debug, Clone, PartialEq)]
    pub struct ExactConstants {
        pub frak_c1: BigRational,
        pub frak_c2: BigRational,
        pub frak_c3: BigRational,
        pub lambda1_0: BigRational,
        pub lambda2_0: BigRational,
        pub lambda3: BigRational,
        pub gamma1: BigRational,
        pub gamma2: BigRational,
        pub gamma3: Option<BigRational>,
        pub delta: BigRational,
    }

    /// Parses a decimal literal such as `-1.25e-3` exactly.
    pub fn parse_decimal(s: &str) -> Option<BigRational> {
        let s = s.trim();
        let (mantissa, exponent) = match s.find(['e', 'E']) {
            Some(i) => (&s[..i], s[i + 1..].parse::<i32>().ok()?),
            None => (s, 0),
        };
        let (negative, digits) = match mantissa.strip_prefix('-') {
            Some(rest) => (true, rest),
            None => (false, mantissa.strip_prefix('+').unwrap_or(mantissa)),
        };
        let (int_part, frac_part) = match digits.split_once('.') {
            Some((i, f)) => (i, f),
            None => (digits, ""),
        };
        if int_part.is_empty() && frac_part.is_empty() {
            return None;
        }
        if !int_part.chars().chain(frac_part.chars()).all(|c| c.is_ascii_digit()) {
            return None;
        }
        let all = format!("{int_part}{frac_part}");
        let numer = BigInt::parse_bytes(all.as_bytes(), 10)?;
        let scale = exponent - frac_part.len() as i32;
        let ten = BigInt::from(10);
        let mut q = if scale >= 0 {
            BigRational::from_integer(numer * num_traits::pow(ten, scale as usize))
        } else {
            BigRational::new(numer, num_traits::pow(ten, (-scale) as usize))
        };
        if negative {
            q = -q;
        }
        Some(q)
    }

    fn r(n: i64, d: i64) -> BigRational {
        BigRational::new(BigInt::from(n), BigInt::from(d))
    }

    /// Exact constants at initial energy `e0`; `None` when `e0 ≥ h♯`.
    pub fn constants(p: &RationalParams, e0: &BigRational) -> Option<ExactConstants> {
        let (g, s, a, d, h, gm) = (&p.gravity, &p.capillarity, &p.hamaker, &p.diffusion, &p.h_mean, &p.gamma_mean);
        if e0 >= h {
            return None;
        }
        let h2 = h * h;
        let h3 = &h2 * h;
        let c1 = g * &h3 / r(3, 1) - a / h - (r(3, 2) * a * gm / &h2 - gm * &h2 * g / r(2, 1)).abs();
        let c2 = h * gm + d - &h2 / r(2, 1);
        let c3 = s * &h3 / r(3, 1) - gm * &h2 * s / r(2, 1);
        let inv = BigRational::one() / (BigRational::one() - e0 / h);
        let inv2 = &inv * &inv;
        let l1 = h
            + r(19, 3) * &h2 * g
            + a / &h2 * &inv * (r(2, 1) + &inv)
            + gm
            + g * (r(4, 1) * gm * h + r(5, 1) * &h2)
            + r(3, 2) * a / &h3 * &inv2 * (r(7, 1) * gm + r(3, 2) * h + &inv * r(4, 1) * gm);
        let l2 = r(13, 2) * h + r(2, 1) * gm + g * &h2 + r(3, 2) * a / &h3 * &inv2 * (h / r(2, 1));
        let l3 = s / r(2, 1) * (r(14, 1) * h * gm + r(4, 1) * &h2) + r(19, 3) * s * &h2;
        let capillary = s > &BigRational::zero();
        let extra = if capillary { s * &h2 / r(2, 1) } else { BigRational::zero() };
        let gamma1 = &c1 - &l1 * e0;
        let gamma2 = &c2 - (&l2 + extra) * e0;
        let gamma3 = capillary.then(|| &c3 - &l3 * e0);
        let mut delta = (&gamma1).min(&gamma2).clone();
        if let Some(g3) = &gamma3 {
            delta = delta.min(g3.clone());
        }
        Some(ExactConstants {
            frak_c1: c1,
            frak_c2: c2,
            frak_c3: c3,
            lambda1_0: l1,
            lambda2_0: l2,
            lambda3: l3,
            gamma1,
            gamma2,
            gamma3,
            delta,
        })
    }
}
