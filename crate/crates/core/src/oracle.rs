//! Independent reference evaluations used to cross-check the fast paths.
//!
//! Every polynomial nonlinearity, and the truncated-series van der Waals
//! terms, can be written with products and derivatives only. Here those
//! products are carried out by exact convolution sums in coefficient
//! space with no truncation until the final projection, so the result is
//! the true `P_M N_j` of the band-limited input. The sample-space
//! evaluator in [`crate::model`] must reproduce it whenever its grid is
//! fine enough to avoid aliasing.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::model::{series, ModelError, NonlinearForm, Nonlinearity, PhysParams, Term};
use crate::spectral::{multiply, multiply_convolution, padded_len, SpectralField};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("{0:?} in closed form is rational, not polynomial")]
    NotPolynomial(Term),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Full product with no truncation.
fn prod(a: &SpectralField, b: &SpectralField) -> SpectralField {
    multiply_convolution(a, b, a.max_mode() + b.max_mode())
}

fn prod_all(factors: &[&SpectralField]) -> SpectralField {
    let mut acc = factors[0].clone();
    for f in &factors[1..] {
        acc = prod(&acc, f);
    }
    acc
}

fn add(a: &SpectralField, b: &SpectralField) -> SpectralField {
    let m = a.max_mode().max(b.max_mode());
    &a.project(m) + &b.project(m)
}

fn lin(terms: &[(f64, &SpectralField)]) -> SpectralField {
    terms
        .iter()
        .map(|(c, u)| u.scale(*c))
        .reduce(|a, b| add(&a, &b))
        .expect("at least one term")
}

/// `Σ_m c_m r^m` for a field `r`, by Horner's rule with exact products.
fn poly(coeffs: &[f64], r: &SpectralField) -> SpectralField {
    let mut acc = SpectralField::zeros(0);
    for c in coeffs.iter().rev() {
        acc = add(&prod(&acc, r), &SpectralField::constant(*c, 0));
    }
    acc
}

/// `P_M N_j` computed by convolution sums. The series form is used for
/// `N₄`, `N₈` whenever `form` is `Series`; in closed form those two terms
/// are only available when `𝒜 = 0` (they vanish).
pub fn convolution_term(
    p: &PhysParams,
    term: Term,
    f: &SpectralField,
    theta: &SpectralField,
    form: NonlinearForm,
) -> Result<SpectralField, OracleError> {
    let m = f.max_mode();
    let h = p.h_mean;
    let gm = p.gamma_mean;
    let h2 = h * h;
    let fx = f.derivative(1);
    let thx = theta.derivative(1);
    let div = |flux: SpectralField| flux.project(m).derivative(1);
    let zero = SpectralField::zeros(m);
    // 3h²f + 3f²h + f³
    let cubic = || lin(&[(3.0 * h2, f), (3.0 * h, &prod(f, f)), (1.0, &prod_all(&[f, f, f]))]);
    // Γ♯f² + 2Γ♯h♯f + Θh♯² + Θf² + 2Θh♯f
    let surf = || {
        let ff = prod(f, f);
        lin(&[
            (gm, &ff),
            (2.0 * gm * h, f),
            (h2, theta),
            (1.0, &prod(theta, &ff)),
            (2.0 * h, &prod(theta, f)),
        ])
    };
    let out = match term {
        Term::N1 => div(prod(&lin(&[(0.5, &prod(f, f)), (h, f)]), &thx)),
        Term::N2 => div(prod(&cubic(), &fx).scale(p.gravity / 3.0)),
        Term::N3 if p.capillarity > 0.0 => div(prod(&cubic(), &f.derivative(3)).scale(-p.capillarity / 3.0)),
        Term::N5 => div(prod(&lin(&[(gm, f), (h, theta), (1.0, &prod(theta, f))]), &thx)),
        Term::N6 => div(prod(&surf(), &fx).scale(0.5 * p.gravity)),
        Term::N7 if p.capillarity > 0.0 => div(prod(&surf(), &f.derivative(3)).scale(-0.5 * p.capillarity)),
        Term::N3 | Term::N7 => zero,
        Term::N4 | Term::N8 if p.hamaker == 0.0 => zero,
        Term::N4 | Term::N8 => {
            let NonlinearForm::Series { terms } = form else {
                return Err(OracleError::NotPolynomial(term));
            };
            let a = p.hamaker;
            let r = f.scale(1.0 / h);
            let fxx = f.derivative(2);
            let s2 = poly(&series::coefficients(2, terms), &r);
            let out = if term == Term::N4 {
                let s1 = poly(&series::coefficients(1, terms), &r);
                let first = lin(&[(1.0 / h2, &prod(f, &fxx)), (1.0 / h2, &prod(&fx, &fx))]);
                let second = prod_all(&[f, &fx, &fx]).scale(1.0 / (h2 * h));
                add(&prod(&first, &s1), &prod(&second, &s2).scale(-1.0)).scale(a)
            } else {
                let s3 = poly(&series::coefficients(3, terms), &r);
                let h4 = h2 * h2;
                let q = lin(&[(2.0 * gm * h, f), (gm, &prod(f, f)), (-h2, theta)]);
                let qx = lin(&[(2.0 * gm * h, &fx), (2.0 * gm, &prod(f, &fx)), (-h2, &thx)]);
                let first = add(&prod(&q, &fxx), &prod(&qx, &fx));
                let second = prod_all(&[&q, &fx, &fx]).scale(1.0 / h);
                add(
                    &prod(&first, &s2).scale(1.5 * a / h4),
                    &prod(&second, &s3).scale(-3.0 * a / h4),
                )
            };
            let mut out = out.project(m);
            out.coeffs_mut()[0] = Default::default();
            out
        }
    };
    Ok(out)
}

/// Grid size on which the sample-space evaluator is alias-free for `term`
/// at truncation `m` (degree of the pointwise expression in the fields,
/// plus one for the projection).
pub fn alias_free_grid(term: Term, m: usize, form: NonlinearForm) -> usize {
    let degree = match (term, form) {
        (Term::N4 | Term::N8, NonlinearForm::Series { terms }) => terms + 2,
        _ => 4,
    };
    padded_len((degree + 1) * m + 1)
}

/// One comparison of the suite.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleCheck {
    pub name: String,
    pub discrepancy: f64,
    pub tolerance: f64,
}

impl OracleCheck {
    pub fn passed(&self) -> bool {
        self.discrepancy <= self.tolerance
    }
}

/// Relative Ȧ⁰ discrepancy of a multiply pair, scaled by `‖a‖‖b‖`.
pub fn multiply_discrepancy(a: &SpectralField, b: &SpectralField) -> f64 {
    let m = a.max_mode() + b.max_mode();
    let direct = multiply_convolution(a, b, m);
    let fast = multiply(a, b, m);
    let scale = a.wiener_norm(0.0) * b.wiener_norm(0.0);
    if scale == 0.0 {
        (&direct - &fast).wiener_norm(0.0)
    } else {
        (&direct - &fast).wiener_norm(0.0) / scale
    }
}

/// Relative Ȧ⁰ discrepancy between the convolution and sample-space
/// evaluations of one term, on an alias-free grid.
pub fn term_discrepancy(
    p: &PhysParams,
    term: Term,
    f: &SpectralField,
    theta: &SpectralField,
    form: NonlinearForm,
) -> Result<f64, OracleError> {
    let m = f.max_mode();
    let reference = convolution_term(p, term, f, theta, form)?;
    let fast = Nonlinearity::new(*p, m, form)
        .with_grid_len(alias_free_grid(term, m, form))
        .term(term, f, theta)?;
    let diff = (&reference - &fast).wiener_norm(0.0);
    let scale = reference.wiener_norm(0.0);
    Ok(if scale == 0.0 { diff } else { diff / scale })
}

/// Absolute Ȧ⁰ difference between series(`terms`) and closed-form
/// evaluations of `N₄` or `N₈`.
pub fn series_discrepancy(
    p: &PhysParams,
    term: Term,
    f: &SpectralField,
    theta: &SpectralField,
    terms: usize,
    grid_len: usize,
) -> Result<f64, ModelError> {
    let m = f.max_mode();
    let closed = Nonlinearity::new(*p, m, NonlinearForm::Closed)
        .with_grid_len(grid_len)
        .term(term, f, theta)?;
    let series = Nonlinearity::new(*p, m, NonlinearForm::Series { terms })
        .with_grid_len(grid_len)
        .term(term, f, theta)?;
    Ok((&closed - &series).wiener_norm(0.0))
}

/// Random mean-free pair rescaled so that `ℰ⁰₀(f, Θ) = energy`.
pub fn random_state<R: Rng + ?Sized>(rng: &mut R, max_mode: usize, energy: f64) -> (SpectralField, SpectralField) {
    let f = SpectralField::random(rng, max_mode, 1.0, 0.7);
    let theta = SpectralField::random(rng, max_mode, 1.0, 0.7);
    let total = f.wiener_norm(0.0) + theta.wiener_norm(0.0);
    let c = energy / total;
    (f.scale(c), theta.scale(c))
}

/// Parameters exercising all eight terms.
pub fn default_params() -> PhysParams {
    PhysParams {
        gravity: 1.0,
        capillarity: 1.0,
        hamaker: 0.2,
        diffusion: 1.0,
        h_mean: 1.0,
        gamma_mean: 0.5,
    }
}

pub const MULTIPLY_TOLERANCE: f64 = 1e-12;
pub const TERM_TOLERANCE: f64 = 1e-12;
pub const SERIES_TOLERANCE: f64 = 1e-8;
pub const SERIES_TERMS: usize = 64;

/// The full seeded suite: multiply paths, every term against its
/// convolution reference, and series(64) against the closed form at
/// `ℰ⁰₀ = h♯/2`. Tolerances are multiplied by `tolerance_scale`.
pub fn run_suite(p: &PhysParams, seed: u64, tolerance_scale: f64) -> Result<Vec<OracleCheck>, OracleError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut checks = Vec::new();

    let mut worst = 0.0f64;
    for i in 0..200 {
        let (ma, mb) = (1 + i % 64, 1 + (7 * i + 3) % 64);
        let a = SpectralField::random(&mut rng, ma, 1.0, 0.9);
        let b = SpectralField::random(&mut rng, mb, 1.0, 0.9);
        worst = worst.max(multiply_discrepancy(&a, &b));
    }
    checks.push(OracleCheck {
        name: "multiply/convolution-vs-transform".into(),
        discrepancy: worst,
        tolerance: MULTIPLY_TOLERANCE * tolerance_scale,
    });

    let series_form = NonlinearForm::Series { terms: 6 };
    for term in Term::ALL {
        let form = match term {
            Term::N4 | Term::N8 => series_form,
            _ => NonlinearForm::Closed,
        };
        let mut worst = 0.0f64;
        for m in [4usize, 16, 64] {
            for _ in 0..3 {
                let (f, theta) = random_state(&mut rng, m, 0.25 * p.h_mean.min(p.gamma_mean));
                worst = worst.max(term_discrepancy(p, term, &f, &theta, form)?);
            }
        }
        checks.push(OracleCheck {
            name: format!("{term:?}/convolution-vs-grid"),
            discrepancy: worst,
            tolerance: TERM_TOLERANCE * tolerance_scale,
        });
    }

    for term in [Term::N4, Term::N8] {
        let mut worst = 0.0f64;
        for m in [4usize, 8, 16] {
            let (f, theta) = random_state(&mut rng, m, 0.5 * p.h_mean);
            worst = worst.max(series_discrepancy(p, term, &f, &theta, SERIES_TERMS, 2048)?);
        }
        checks.push(OracleCheck {
            name: format!("{term:?}/series{SERIES_TERMS}-vs-closed"),
            discrepancy: worst,
            tolerance: SERIES_TOLERANCE * tolerance_scale,
        });
    }
    Ok(checks)
}
