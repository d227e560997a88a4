//! The perturbed thin-film/surfactant system around the flat state.
//!
//! With `f = h − h♯` and `Θ = Γ − Γ♯` the evolution splits into a per-mode
//! linear coupling (see [`linear_symbol`]) and eight nonlinear terms
//! `N₁..N₈`. The film equation collects `N₁..N₄`, the surfactant equation
//! `N₅..N₈`; `N₃` and `N₇` exist only when the capillary coefficient is
//! positive. The surface tension law is fixed to `σ(Γ) = 1 − Γ`.
//!
//! Nonlinear terms are evaluated pointwise on a padded grid. Divergence
//! terms are assembled as a flux that is transformed and then
//! differentiated spectrally, so their mean is exactly zero. The van der
//! Waals terms `N₄` and `N₈` come in two forms: the closed rational form
//! and the truncated Taylor-series form used by the Galerkin system.

use num_complex::Complex64;
use thiserror::Error;

use crate::spectral::{from_samples, padded_len, to_samples, GridSamples, SpectralError, SpectralField};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("series form needs ‖f‖_Ȧ⁰ < h♯, got {norm} ≥ {h_mean}")]
    SeriesDivergence { norm: f64, h_mean: f64 },
    #[error("film height reaches {min_height} ≤ 0 on the evaluation grid")]
    PointwiseDegeneracy { min_height: f64 },
    #[error("{field} is not mean-free (mean {mean:e})")]
    NonZeroMean { field: &'static str, mean: f64 },
    #[error("f has max_mode {f} but Θ has max_mode {theta}")]
    ModeMismatch { f: usize, theta: usize },
    #[error(transparent)]
    Spectral(#[from] SpectralError),
}

/// Physical constants and the means of the initial data.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysParams {
    /// Modified gravitational constant 𝒢.
    pub gravity: f64,
    /// Surface tension coefficient 𝒮.
    pub capillarity: f64,
    /// Hamaker constant 𝒜.
    pub hamaker: f64,
    /// Surface diffusion 𝒟.
    pub diffusion: f64,
    /// Mean film height h♯.
    pub h_mean: f64,
    /// Mean surfactant concentration Γ♯.
    pub gamma_mean: f64,
}

impl PhysParams {
    pub fn new(
        gravity: f64,
        capillarity: f64,
        hamaker: f64,
        diffusion: f64,
        h_mean: f64,
        gamma_mean: f64,
    ) -> Result<Self, ModelError> {
        let p = Self {
            gravity,
            capillarity,
            hamaker,
            diffusion,
            h_mean,
            gamma_mean,
        };
        p.validate()?;
        Ok(p)
    }

    /// 𝒢 = 𝒟 = 1, 𝒮 = 𝒜 = 0, h♯ = 1, Γ♯ = 1/2.
    pub fn remark() -> Self {
        Self {
            gravity: 1.0,
            capillarity: 0.0,
            hamaker: 0.0,
            diffusion: 1.0,
            h_mean: 1.0,
            gamma_mean: 0.5,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let all = [
            self.gravity,
            self.capillarity,
            self.hamaker,
            self.diffusion,
            self.h_mean,
            self.gamma_mean,
        ];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(ModelError::InvalidParams("non-finite value".into()));
        }
        let checks = [
            (self.h_mean > 0.0, "h_mean must be positive"),
            (self.diffusion > 0.0, "D must be positive"),
            (self.gravity >= 0.0, "G must be nonnegative"),
            (self.capillarity >= 0.0, "S must be nonnegative"),
            (self.hamaker >= 0.0, "A must be nonnegative"),
            (
                self.gamma_mean > 0.0 && self.gamma_mean <= 1.0,
                "gamma_mean must lie in (0, 1]",
            ),
        ];
        match checks.iter().find(|(ok, _)| !ok) {
            Some((_, msg)) => Err(ModelError::InvalidParams((*msg).into())),
            None => Ok(()),
        }
    }

    pub fn regime(&self) -> Regime {
        if self.capillarity > 0.0 {
            Regime::Capillary
        } else {
            Regime::Gravity
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    /// 𝒮 = 0: second order in both unknowns.
    Gravity,
    /// 𝒮 > 0: fourth order in the film height.
    Capillary,
}

impl Regime {
    pub fn name(&self) -> &'static str {
        match self {
            Regime::Gravity => "gravity",
            Regime::Capillary => "capillary",
        }
    }
}

/// Tolerance used for every mean-free check on perturbation fields.
pub fn mean_tolerance(u: &SpectralField) -> f64 {
    1e-12 * (1.0 + u.wiener_norm(0.0))
}

/// Perturbation `(f, Θ)` from the flat state at a given time.
#[derive(Debug, Clone, PartialEq)]
pub struct State {
    pub f: SpectralField,
    pub theta: SpectralField,
    pub time: f64,
}

impl State {
    pub fn new(f: SpectralField, theta: SpectralField, time: f64) -> Result<Self, ModelError> {
        if f.max_mode() != theta.max_mode() {
            return Err(ModelError::ModeMismatch {
                f: f.max_mode(),
                theta: theta.max_mode(),
            });
        }
        for (field, u) in [("f", &f), ("theta", &theta)] {
            if u.mean().abs() > mean_tolerance(u) {
                return Err(ModelError::NonZeroMean { field, mean: u.mean() });
            }
        }
        Ok(Self {
            f: f.without_mean(),
            theta: theta.without_mean(),
            time,
        })
    }

    pub fn flat(max_mode: usize) -> Self {
        Self {
            f: SpectralField::zeros(max_mode),
            theta: SpectralField::zeros(max_mode),
            time: 0.0,
        }
    }

    pub fn max_mode(&self) -> usize {
        self.f.max_mode()
    }

    /// Both fields truncated or padded to `max_mode`.
    pub fn project(&self, max_mode: usize) -> Self {
        Self {
            f: self.f.project(max_mode),
            theta: self.theta.project(max_mode),
            time: self.time,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.f.is_finite() && self.theta.is_finite() && self.time.is_finite()
    }
}

/// Physical fields `(h, Γ) = (f + h♯, Θ + Γ♯)`.
pub fn reconstruct(s: &State, p: &PhysParams) -> (SpectralField, SpectralField) {
    let m = s.max_mode();
    (
        &s.f + &SpectralField::constant(p.h_mean, m),
        &s.theta + &SpectralField::constant(p.gamma_mean, m),
    )
}

/// 2×2 coupling `L_k` with `d/dt (f̂, Θ̂)(k) = L_k (f̂, Θ̂)(k)` for the
/// linear part, rows indexed by equation.
pub type Symbol = [[f64; 2]; 2];

pub fn linear_symbol(p: &PhysParams, k: i64) -> Symbol {
    let k2 = (k * k) as f64;
    let k4 = k2 * k2;
    let h = p.h_mean;
    let g = p.gamma_mean;
    let h2 = h * h;
    let h3 = h2 * h;
    [
        [
            (p.hamaker / h - p.gravity * h3 / 3.0) * k2 - p.capillarity / 3.0 * h3 * k4,
            -0.5 * h2 * k2,
        ],
        [
            (1.5 * p.hamaker * g / h2 - 0.5 * p.gravity * g * h2) * k2 - 0.5 * p.capillarity * g * h2 * k4,
            -(h * g + p.diffusion) * k2,
        ],
    ]
}

/// Applies the linear part mode by mode.
pub fn apply_linear(p: &PhysParams, f: &SpectralField, theta: &SpectralField) -> (SpectralField, SpectralField) {
    let m = f.max_mode();
    let mut df = SpectralField::zeros(m);
    let mut dt = SpectralField::zeros(m);
    for k in 1..=m {
        let l = linear_symbol(p, k as i64);
        let (a, b) = (f.coeffs()[k], theta.coeffs()[k]);
        df.coeffs_mut()[k] = a * l[0][0] + b * l[0][1];
        dt.coeffs_mut()[k] = a * l[1][0] + b * l[1][1];
    }
    (df, dt)
}

/// How the van der Waals terms `N₄`, `N₈` are evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NonlinearForm {
    /// Rational closed form, divided pointwise on the grid.
    Closed,
    /// Taylor expansions in `f/h♯` truncated after `terms` summands.
    Series { terms: usize },
}

impl NonlinearForm {
    pub fn name(&self) -> &'static str {
        match self {
            NonlinearForm::Closed => "closed",
            NonlinearForm::Series { .. } => "series",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Term {
    N1,
    N2,
    N3,
    N4,
    N5,
    N6,
    N7,
    N8,
}

impl Term {
    pub const FILM: [Term; 4] = [Term::N1, Term::N2, Term::N3, Term::N4];
    pub const SURFACTANT: [Term; 4] = [Term::N5, Term::N6, Term::N7, Term::N8];
    pub const ALL: [Term; 8] = [
        Term::N1,
        Term::N2,
        Term::N3,
        Term::N4,
        Term::N5,
        Term::N6,
        Term::N7,
        Term::N8,
    ];
}

/// Truncated sums `Σ_{m<J} c_m r^m` for the three Taylor expansions.
pub(crate) mod series {
    /// `1/(1+r) ≈ Σ_{j=1}^{J} (−1)^{j+1} r^{j−1}`.
    pub fn inverse(r: f64, terms: usize) -> f64 {
        horner(r, terms, |m| if m % 2 == 0 { 1.0 } else { -1.0 })
    }

    /// `1/(1+r)² ≈ Σ_{j=1}^{J} j (−1)^{j+1} r^{j−1}`.
    pub fn inverse_square(r: f64, terms: usize) -> f64 {
        horner(r, terms, |m| sign(m) * (m + 1) as f64)
    }

    /// `1/(1+r)³ ≈ ½ Σ_{j=2}^{J} j(j−1) (−1)^j r^{j−2}`.
    pub fn inverse_cube(r: f64, terms: usize) -> f64 {
        horner(r, terms.saturating_sub(1), |m| sign(m) * ((m + 2) * (m + 1)) as f64 / 2.0)
    }

    /// Coefficients of the same three polynomials, lowest degree first.
    pub fn coefficients(which: usize, terms: usize) -> Vec<f64> {
        match which {
            1 => (0..terms).map(|m| sign(m)).collect(),
            2 => (0..terms).map(|m| sign(m) * (m + 1) as f64).collect(),
            _ => (0..terms.saturating_sub(1))
                .map(|m| sign(m) * ((m + 2) * (m + 1)) as f64 / 2.0)
                .collect(),
        }
    }

    fn sign(m: usize) -> f64 {
        if m % 2 == 0 {
            1.0
        } else {
            -1.0
        }
    }

    fn horner(r: f64, n: usize, coeff: impl Fn(usize) -> f64) -> f64 {
        (0..n).rev().fold(0.0, |acc, m| acc * r + coeff(m))
    }
}

/// Grid samples of the fields and derivatives the nonlinear terms need.
struct GridState {
    f: Vec<f64>,
    fx: Vec<f64>,
    fxx: Vec<f64>,
    fxxx: Vec<f64>,
    th: Vec<f64>,
    thx: Vec<f64>,
}

enum Contribution {
    /// Pointwise flux `F`; the term is `∂ₓ P_M F`.
    Flux(Vec<f64>),
    /// Pointwise value `G`; the term is `P_M G`.
    Direct(Vec<f64>),
}

/// Evaluator for the Galerkin nonlinearities `P_M N_j` on a fixed grid.
#[derive(Debug, Clone)]
pub struct Nonlinearity {
    params: PhysParams,
    max_mode: usize,
    form: NonlinearForm,
    grid_len: usize,
}

impl Nonlinearity {
    /// Uses [`Nonlinearity::default_grid_len`] points.
    pub fn new(params: PhysParams, max_mode: usize, form: NonlinearForm) -> Self {
        Self {
            params,
            max_mode,
            form,
            grid_len: Self::default_grid_len(max_mode),
        }
    }

    /// Smallest power of two that evaluates every polynomial flux (degree
    /// at most four in the fields) without aliasing into `|k| ≤ M`.
    pub fn default_grid_len(max_mode: usize) -> usize {
        padded_len(5 * max_mode + 1)
    }

    pub fn with_grid_len(mut self, n: usize) -> Self {
        assert!(n > 2 * self.max_mode, "grid of {n} points cannot resolve M = {}", self.max_mode);
        self.grid_len = n;
        self
    }

    pub fn params(&self) -> &PhysParams {
        &self.params
    }

    pub fn max_mode(&self) -> usize {
        self.max_mode
    }

    pub fn form(&self) -> NonlinearForm {
        self.form
    }

    pub fn grid_len(&self) -> usize {
        self.grid_len
    }

    fn check_inputs(&self, f: &SpectralField, theta: &SpectralField) -> Result<(), ModelError> {
        if f.max_mode() != theta.max_mode() {
            return Err(ModelError::ModeMismatch {
                f: f.max_mode(),
                theta: theta.max_mode(),
            });
        }
        if let NonlinearForm::Series { .. } = self.form {
            let norm = f.wiener_norm(0.0);
            if norm >= self.params.h_mean {
                return Err(ModelError::SeriesDivergence {
                    norm,
                    h_mean: self.params.h_mean,
                });
            }
        }
        Ok(())
    }

    fn sample(&self, f: &SpectralField, theta: &SpectralField) -> Result<GridState, ModelError> {
        let n = self.grid_len;
        let samples = |u: &SpectralField| to_samples(u, n).map(GridSamples::into_values);
        let needs_fxx = matches!(self.form, NonlinearForm::Series { .. }) && self.params.hamaker != 0.0;
        let gs = GridState {
            f: samples(f)?,
            fx: samples(&f.derivative(1))?,
            fxx: if needs_fxx { samples(&f.derivative(2))? } else { Vec::new() },
            fxxx: if self.params.capillarity > 0.0 {
                samples(&f.derivative(3))?
            } else {
                Vec::new()
            },
            th: samples(theta)?,
            thx: samples(&theta.derivative(1))?,
        };
        if self.form == NonlinearForm::Closed {
            let min_height = gs.f.iter().fold(f64::INFINITY, |m, v| m.min(self.params.h_mean + v));
            if min_height <= 0.0 {
                return Err(ModelError::PointwiseDegeneracy { min_height });
            }
        }
        Ok(gs)
    }

    /// Pointwise contribution of one term, `None` when it vanishes
    /// identically for these parameters.
    fn contribution(&self, term: Term, g: &GridState) -> Option<Contribution> {
        let p = &self.params;
        let h = p.h_mean;
        let gm = p.gamma_mean;
        let h2 = h * h;
        let n = g.f.len();
        let map = |op: &dyn Fn(usize) -> f64| (0..n).map(op).collect::<Vec<f64>>();
        let cubic = |f: f64| 3.0 * h2 * f + 3.0 * f * f * h + f * f * f;
        let surf_poly = |f: f64, th: f64| gm * f * f + 2.0 * gm * h * f + th * h2 + th * f * f + 2.0 * th * h * f;
        match term {
            Term::N1 => Some(Contribution::Flux(map(&|j| {
                let f = g.f[j];
                (0.5 * f * f + f * h) * g.thx[j]
            }))),
            Term::N2 if p.gravity != 0.0 => Some(Contribution::Flux(map(&|j| {
                p.gravity / 3.0 * cubic(g.f[j]) * g.fx[j]
            }))),
            Term::N3 if p.capillarity > 0.0 => Some(Contribution::Flux(map(&|j| {
                -p.capillarity / 3.0 * cubic(g.f[j]) * g.fxxx[j]
            }))),
            Term::N4 if p.hamaker != 0.0 => Some(match self.form {
                NonlinearForm::Closed => Contribution::Flux(map(&|j| {
                    let f = g.f[j];
                    p.hamaker * f / (h2 * (1.0 + f / h)) * g.fx[j]
                })),
                NonlinearForm::Series { terms } => Contribution::Direct(map(&|j| {
                    let (f, fx, fxx) = (g.f[j], g.fx[j], g.fxx[j]);
                    let r = f / h;
                    p.hamaker
                        * ((f * fxx / h2 + (fx / h) * (fx / h)) * series::inverse(r, terms)
                            - f / (h2 * h) * fx * fx * series::inverse_square(r, terms))
                })),
            }),
            Term::N5 => Some(Contribution::Flux(map(&|j| {
                let (f, th) = (g.f[j], g.th[j]);
                (gm * f + th * h + th * f) * g.thx[j]
            }))),
            Term::N6 if p.gravity != 0.0 => Some(Contribution::Flux(map(&|j| {
                0.5 * p.gravity * surf_poly(g.f[j], g.th[j]) * g.fx[j]
            }))),
            Term::N7 if p.capillarity > 0.0 => Some(Contribution::Flux(map(&|j| {
                -0.5 * p.capillarity * surf_poly(g.f[j], g.th[j]) * g.fxxx[j]
            }))),
            Term::N8 if p.hamaker != 0.0 => {
                let a = p.hamaker;
                Some(match self.form {
                    NonlinearForm::Closed => Contribution::Flux(map(&|j| {
                        let (f, th) = (g.f[j], g.th[j]);
                        let q = 2.0 * f * gm * h + f * f * gm - th * h2;
                        1.5 * a * q / (h2 * (f + h) * (f + h)) * g.fx[j]
                    })),
                    NonlinearForm::Series { terms } => Contribution::Direct(map(&|j| {
                        let (f, fx, fxx, th, thx) = (g.f[j], g.fx[j], g.fxx[j], g.th[j], g.thx[j]);
                        let r = f / h;
                        let h4 = h2 * h2;
                        let q = 2.0 * f * gm * h + f * f * gm - th * h2;
                        let qx = 2.0 * fx * gm * h + 2.0 * f * fx * gm - thx * h2;
                        1.5 * a / h4 * (q * fxx + qx * fx) * series::inverse_square(r, terms)
                            - 3.0 * a / h4 * (q * fx * fx / h) * series::inverse_cube(r, terms)
                    })),
                })
            }
            _ => None,
        }
    }

    fn assemble(&self, parts: impl Iterator<Item = Contribution>, n: usize) -> Result<SpectralField, ModelError> {
        let mut flux: Option<Vec<f64>> = None;
        let mut direct: Option<Vec<f64>> = None;
        for part in parts {
            let (acc, v) = match part {
                Contribution::Flux(v) => (&mut flux, v),
                Contribution::Direct(v) => (&mut direct, v),
            };
            match acc {
                Some(a) => a.iter_mut().zip(&v).for_each(|(x, y)| *x += y),
                None => *acc = Some(v),
            }
        }
        let mut out = SpectralField::zeros(self.max_mode);
        if let Some(v) = flux {
            let flux_hat = from_samples(&GridSamples::new(v)?, self.max_mode)?;
            out = flux_hat.derivative(1);
        }
        if let Some(v) = direct {
            let g = from_samples(&GridSamples::new(v)?, self.max_mode)?;
            out = &out + &g;
        }
        debug_assert_eq!(n, self.grid_len);
        // The truncated series are not exact derivatives; the Galerkin system
        // evolves mean-free fields only.
        out.coeffs_mut()[0] = Complex64::new(0.0, 0.0);
        Ok(out)
    }

    /// `P_M[N₁+…+N₄]` and `P_M[N₅+…+N₈]`.
    pub fn evaluate(&self, f: &SpectralField, theta: &SpectralField) -> Result<(SpectralField, SpectralField), ModelError> {
        self.check_inputs(f, theta)?;
        let g = self.sample(f, theta)?;
        let n = g.f.len();
        let nf = self.assemble(Term::FILM.iter().filter_map(|t| self.contribution(*t, &g)), n)?;
        let nt = self.assemble(Term::SURFACTANT.iter().filter_map(|t| self.contribution(*t, &g)), n)?;
        Ok((nf, nt))
    }

    /// `P_M N_j` for a single term.
    pub fn term(&self, term: Term, f: &SpectralField, theta: &SpectralField) -> Result<SpectralField, ModelError> {
        self.check_inputs(f, theta)?;
        let g = self.sample(f, theta)?;
        let n = g.f.len();
        self.assemble(self.contribution(term, &g).into_iter(), n)
    }

    /// Full right-hand side `(∂ₜf, ∂ₜΘ)`.
    pub fn rhs(&self, f: &SpectralField, theta: &SpectralField) -> Result<(SpectralField, SpectralField), ModelError> {
        let (nf, nt) = self.evaluate(f, theta)?;
        let (lf, lt) = apply_linear(&self.params, f, theta);
        Ok((&lf + &nf, &lt + &nt))
    }
}

pub fn nonlinear_f(s: &State, p: &PhysParams, max_mode: usize, form: NonlinearForm) -> Result<SpectralField, ModelError> {
    let s = s.project(max_mode);
    Ok(Nonlinearity::new(*p, max_mode, form).evaluate(&s.f, &s.theta)?.0)
}

pub fn nonlinear_theta(s: &State, p: &PhysParams, max_mode: usize, form: NonlinearForm) -> Result<SpectralField, ModelError> {
    let s = s.project(max_mode);
    Ok(Nonlinearity::new(*p, max_mode, form).evaluate(&s.f, &s.theta)?.1)
}

pub fn rhs(s: &State, p: &PhysParams, max_mode: usize, form: NonlinearForm) -> Result<(SpectralField, SpectralField), ModelError> {
    let s = s.project(max_mode);
    Nonlinearity::new(*p, max_mode, form).rhs(&s.f, &s.theta)
}
