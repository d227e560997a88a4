//! IMEX time stepping for the Galerkin system.
//!
//! The per-mode 2×2 linear coupling is treated implicitly and the
//! nonlinear terms explicitly. Each mode is solved independently, and the
//! zero mode is never touched, so both fields stay mean-free exactly.

use num_complex::Complex64;
use thiserror::Error;

use crate::model::{linear_symbol, ModelError, NonlinearForm, Nonlinearity, PhysParams, State, Symbol};
use crate::spectral::{to_samples, SpectralField};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IntegratorError {
    #[error("invalid stepper configuration: {0}")]
    InvalidConfig(String),
    #[error("implicit matrix is singular at wavenumber {k}")]
    LinearSolveSingular { k: usize },
    #[error("state has max_mode {found}, configuration expects {expected}")]
    ModeMismatch { expected: usize, found: usize },
    #[error("time step would drop below dt_min = {dt_min} with error estimate {estimate:e}")]
    StepsizeUnderflow { dt_min: f64, estimate: f64 },
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    /// Crank–Nicolson on the linear part, Adams–Bashforth 2 on the rest.
    ImexCnAb2,
    /// Backward Euler on the linear part, forward Euler on the rest.
    ImexEuler,
}

impl Scheme {
    pub fn name(&self) -> &'static str {
        match self {
            Scheme::ImexCnAb2 => "imex_cn_ab2",
            Scheme::ImexEuler => "imex_euler",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Safety {
    pub max_steps: usize,
    /// `None` means `10·(h♯ + Γ♯)`.
    pub blowup_norm_cap: Option<f64>,
    pub adapt: bool,
    /// Relative step-doubling tolerance on `ℰ⁰₀`.
    pub adapt_tol: f64,
    pub dt_min: f64,
}

impl Default for Safety {
    fn default() -> Self {
        Self {
            max_steps: usize::MAX,
            blowup_norm_cap: None,
            adapt: false,
            adapt_tol: 1e-6,
            dt_min: 1e-12,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepperConfig {
    pub max_mode: usize,
    pub dt: f64,
    pub scheme: Scheme,
    pub form: NonlinearForm,
    /// Evaluation grid for the nonlinear terms; `None` picks the alias-free
    /// default for degree-four fluxes.
    pub grid_len: Option<usize>,
    /// Drops the nonlinear terms entirely.
    pub linear_only: bool,
    pub safety: Safety,
}

impl StepperConfig {
    /// Crank–Nicolson/AB2 with the closed form and default safety.
    pub fn new(max_mode: usize, dt: f64) -> Self {
        Self {
            max_mode,
            dt,
            scheme: Scheme::ImexCnAb2,
            form: NonlinearForm::Closed,
            grid_len: None,
            linear_only: false,
            safety: Safety::default(),
        }
    }

    pub fn with_scheme(mut self, scheme: Scheme) -> Self {
        self.scheme = scheme;
        self
    }

    pub fn with_form(mut self, form: NonlinearForm) -> Self {
        self.form = form;
        self
    }

    pub fn validate(&self) -> Result<(), IntegratorError> {
        let bad = |m: &str| Err(IntegratorError::InvalidConfig(m.into()));
        if self.max_mode < 1 {
            return bad("M must be at least 1");
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return bad("dt must be positive and finite");
        }
        if let NonlinearForm::Series { terms } = self.form {
            if terms < 1 {
                return bad("series_terms must be at least 1");
            }
        }
        if let Some(n) = self.grid_len {
            if n < 2 * self.max_mode + 1 {
                return bad("grid_len must be at least 2M+1");
            }
        }
        if self.safety.adapt && !(self.safety.adapt_tol > 0.0 && self.safety.dt_min > 0.0) {
            return bad("adaptive stepping needs positive adapt_tol and dt_min");
        }
        if let Some(cap) = self.safety.blowup_norm_cap {
            if !(cap > 0.0) {
                return bad("blowup_norm_cap must be positive");
            }
        }
        Ok(())
    }

    pub fn blowup_cap(&self, p: &PhysParams) -> f64 {
        self.safety.blowup_norm_cap.unwrap_or(10.0 * (p.h_mean + p.gamma_mean))
    }
}

type Mat = [[f64; 2]; 2];

/// `(I − a·L_k)⁻¹` and `I + b·L_k` for every `k ≥ 1`.
#[derive(Debug, Clone)]
struct Factors {
    implicit_inv: Vec<Mat>,
    explicit: Vec<Mat>,
}

impl Factors {
    fn new(symbols: &[Symbol], a: f64, b: f64) -> Result<Self, IntegratorError> {
        let mut implicit_inv = Vec::with_capacity(symbols.len());
        let mut explicit = Vec::with_capacity(symbols.len());
        for (k, l) in symbols.iter().enumerate() {
            let m = [
                [1.0 - a * l[0][0], -a * l[0][1]],
                [-a * l[1][0], 1.0 - a * l[1][1]],
            ];
            let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
            let scale = m.iter().flatten().map(|v| v.abs()).fold(0.0, f64::max);
            if k > 0 && (!det.is_finite() || det.abs() <= 1e-14 * scale * scale) {
                return Err(IntegratorError::LinearSolveSingular { k });
            }
            implicit_inv.push([[m[1][1] / det, -m[0][1] / det], [-m[1][0] / det, m[0][0] / det]]);
            explicit.push([
                [1.0 + b * l[0][0], b * l[0][1]],
                [b * l[1][0], 1.0 + b * l[1][1]],
            ]);
        }
        Ok(Self { implicit_inv, explicit })
    }

    /// `u ← (I − aL)⁻¹ [(I + bL) u + c·g]` mode by mode.
    fn apply(&self, f: &SpectralField, th: &SpectralField, c: f64, gf: &[Complex64], gt: &[Complex64]) -> (SpectralField, SpectralField) {
        let m = f.max_mode();
        let mut nf = SpectralField::zeros(m);
        let mut nt = SpectralField::zeros(m);
        let (of, ot) = (nf.coeffs_mut(), nt.coeffs_mut());
        for k in 1..=m {
            let (a, b) = (f.coeffs()[k], th.coeffs()[k]);
            let e = &self.explicit[k];
            let r0 = a * e[0][0] + b * e[0][1] + gf[k] * c;
            let r1 = a * e[1][0] + b * e[1][1] + gt[k] * c;
            let inv = &self.implicit_inv[k];
            of[k] = r0 * inv[0][0] + r1 * inv[0][1];
            ot[k] = r0 * inv[1][0] + r1 * inv[1][1];
        }
        (nf, nt)
    }
}

/// Stateful stepper carrying the Adams–Bashforth history.
#[derive(Debug, Clone)]
pub struct Stepper {
    params: PhysParams,
    cfg: StepperConfig,
    eval: Nonlinearity,
    symbols: Vec<Symbol>,
    dt: f64,
    main: Factors,
    /// Quarter-step Crank–Nicolson factors for the AB2 bootstrap.
    half: Option<Factors>,
    history: Option<(SpectralField, SpectralField)>,
}

impl Stepper {
    pub fn new(params: PhysParams, cfg: StepperConfig) -> Result<Self, IntegratorError> {
        cfg.validate()?;
        let m = cfg.max_mode;
        let mut eval = Nonlinearity::new(params, m, cfg.form);
        if let Some(n) = cfg.grid_len {
            eval = eval.with_grid_len(n);
        }
        let symbols: Vec<Symbol> = (0..=m).map(|k| linear_symbol(&params, k as i64)).collect();
        let dt = cfg.dt;
        let (main, half) = Self::factors(&symbols, cfg.scheme, dt)?;
        Ok(Self {
            params,
            cfg,
            eval,
            symbols,
            dt,
            main,
            half,
            history: None,
        })
    }

    fn factors(symbols: &[Symbol], scheme: Scheme, dt: f64) -> Result<(Factors, Option<Factors>), IntegratorError> {
        Ok(match scheme {
            Scheme::ImexCnAb2 => (
                Factors::new(symbols, dt / 2.0, dt / 2.0)?,
                Some(Factors::new(symbols, dt / 4.0, dt / 4.0)?),
            ),
            Scheme::ImexEuler => (Factors::new(symbols, dt, 0.0)?, None),
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn config(&self) -> &StepperConfig {
        &self.cfg
    }

    pub fn params(&self) -> &PhysParams {
        &self.params
    }

    /// Changes the step size; the multistep history restarts.
    pub fn set_dt(&mut self, dt: f64) -> Result<(), IntegratorError> {
        if dt == self.dt {
            return Ok(());
        }
        if !(dt.is_finite() && dt > 0.0) {
            return Err(IntegratorError::InvalidConfig("dt must be positive and finite".into()));
        }
        let (main, half) = Self::factors(&self.symbols, self.cfg.scheme, dt)?;
        self.main = main;
        self.half = half;
        self.dt = dt;
        self.history = None;
        Ok(())
    }

    pub fn reset_history(&mut self) {
        self.history = None;
    }

    fn nonlinear(&self, f: &SpectralField, th: &SpectralField) -> Result<(SpectralField, SpectralField), IntegratorError> {
        if self.cfg.linear_only {
            let m = f.max_mode();
            return Ok((SpectralField::zeros(m), SpectralField::zeros(m)));
        }
        Ok(self.eval.evaluate(f, th)?)
    }

    pub fn step(&mut self, s: &State) -> Result<State, IntegratorError> {
        if s.max_mode() != self.cfg.max_mode {
            return Err(IntegratorError::ModeMismatch {
                expected: self.cfg.max_mode,
                found: s.max_mode(),
            });
        }
        let dt = self.dt;
        let (nf, nt) = self.nonlinear(&s.f, &s.theta)?;
        let (f, theta) = match self.cfg.scheme {
            Scheme::ImexEuler => self.main.apply(&s.f, &s.theta, dt, nf.coeffs(), nt.coeffs()),
            Scheme::ImexCnAb2 => match self.history.take() {
                Some((pf, pt)) => {
                    let ef = &(&nf * 1.5) - &(&pf * 0.5);
                    let et = &(&nt * 1.5) - &(&pt * 0.5);
                    self.main.apply(&s.f, &s.theta, dt, ef.coeffs(), et.coeffs())
                }
                None => {
                    let half = self.half.as_ref().expect("CN factors include the bootstrap");
                    let (mf, mt) = half.apply(&s.f, &s.theta, dt / 2.0, nf.coeffs(), nt.coeffs());
                    let (mnf, mnt) = self.nonlinear(&mf, &mt)?;
                    self.main.apply(&s.f, &s.theta, dt, mnf.coeffs(), mnt.coeffs())
                }
            },
        };
        self.history = Some((nf, nt));
        Ok(State {
            f,
            theta,
            time: s.time + dt,
        })
    }
}

/// One step from scratch (the CN/AB2 scheme takes its bootstrap step).
pub fn step(s: &State, p: &PhysParams, cfg: &StepperConfig) -> Result<State, IntegratorError> {
    Stepper::new(*p, cfg.clone())?.step(s)
}

/// Diagnostics at one recorded time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Record {
    pub time: f64,
    pub e00: f64,
    pub e22: f64,
    /// `‖f‖_{Ȧ⁴} + ‖Θ‖_{Ȧ²}`, recorded only when `𝒮 > 0`.
    pub e42: Option<f64>,
    /// `‖f‖_{Ȧ⁴}` alone, also only when `𝒮 > 0`.
    pub f_a4: Option<f64>,
    pub mass_f: f64,
    pub mass_theta: f64,
    pub min_h: f64,
    pub linf_f: f64,
    pub linf_theta: f64,
}

/// Number of points of the grid used for sup norms and `min h`.
pub fn diagnostic_grid_len(max_mode: usize) -> usize {
    4 * (2 * max_mode + 1)
}

pub fn record(s: &State, p: &PhysParams) -> Record {
    let n = diagnostic_grid_len(s.max_mode());
    let fs = to_samples(&s.f, n).expect("diagnostic grid resolves the state");
    let ts = to_samples(&s.theta, n).expect("diagnostic grid resolves the state");
    Record {
        time: s.time,
        e00: s.f.wiener_norm(0.0) + s.theta.wiener_norm(0.0),
        e22: s.f.wiener_norm(2.0) + s.theta.wiener_norm(2.0),
        e42: (p.capillarity > 0.0).then(|| s.f.wiener_norm(4.0) + s.theta.wiener_norm(2.0)),
        f_a4: (p.capillarity > 0.0).then(|| s.f.wiener_norm(4.0)),
        mass_f: s.f.mean(),
        mass_theta: s.theta.mean(),
        min_h: p.h_mean + fs.min(),
        linf_f: fs.max_abs(),
        linf_theta: ts.max_abs(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Termination {
    Completed,
    Blowup,
    TheoryExit(String),
    DegenerateFilm,
    /// The solver could not continue (singular implicit matrix, step size
    /// underflow, step limit).
    Failed(String),
}

impl Termination {
    pub fn name(&self) -> &'static str {
        match self {
            Termination::Completed => "completed",
            Termination::Blowup => "blowup",
            Termination::TheoryExit(_) => "theory_exit",
            Termination::DegenerateFilm => "degenerate_film",
            Termination::Failed(_) => "failed",
        }
    }

    pub fn reason(&self) -> String {
        match self {
            Termination::TheoryExit(r) | Termination::Failed(r) => r.clone(),
            Termination::Blowup => "norm above blowup cap or non-finite".into(),
            Termination::DegenerateFilm => "film height reached zero".into(),
            Termination::Completed => String::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub params: PhysParams,
    pub config: StepperConfig,
    /// States at the recorded times (empty when states were not kept).
    pub states: Vec<State>,
    pub diagnostics: Vec<Record>,
    pub termination: Termination,
    pub steps: usize,
}

impl Trajectory {
    pub fn final_state(&self) -> Option<&State> {
        self.states.last()
    }
}

/// Integrates and keeps the recorded states.
pub fn integrate(s0: &State, p: &PhysParams, cfg: &StepperConfig, t_end: f64, record_every: usize) -> Trajectory {
    integrate_with(s0, p, cfg, t_end, record_every, true)
}

fn check_state(s: &State, p: &PhysParams, cfg: &StepperConfig) -> Option<Termination> {
    let nf = s.f.wiener_norm(0.0);
    let nt = s.theta.wiener_norm(0.0);
    if !s.is_finite() || nf.max(nt) > cfg.blowup_cap(p) {
        return Some(Termination::Blowup);
    }
    if nf >= p.h_mean {
        if let NonlinearForm::Series { .. } = cfg.form {
            return Some(Termination::TheoryExit(format!(
                "wiener_norm(f,0) = {nf} reached h_mean = {}",
                p.h_mean
            )));
        }
        // Below h♯ in Ȧ⁰ the film is positive everywhere; only check the grid otherwise.
        let n = diagnostic_grid_len(s.max_mode());
        if let Ok(fs) = to_samples(&s.f, n) {
            if p.h_mean + fs.min() <= 0.0 {
                return Some(Termination::DegenerateFilm);
            }
        }
    }
    None
}

fn termination_of(err: IntegratorError) -> Termination {
    match err {
        IntegratorError::Model(ModelError::SeriesDivergence { norm, h_mean }) => {
            Termination::TheoryExit(format!("wiener_norm(f,0) = {norm} reached h_mean = {h_mean}"))
        }
        IntegratorError::Model(ModelError::PointwiseDegeneracy { .. }) => Termination::DegenerateFilm,
        e => Termination::Failed(e.to_string()),
    }
}

/// Integrates to `t_end`, recording every `record_every` steps plus the
/// first and last states. Termination conditions end the run early and
/// are reported in the trajectory.
pub fn integrate_with(
    s0: &State,
    p: &PhysParams,
    cfg: &StepperConfig,
    t_end: f64,
    record_every: usize,
    keep_states: bool,
) -> Trajectory {
    let record_every = record_every.max(1);
    let mut traj = Trajectory {
        params: *p,
        config: cfg.clone(),
        states: Vec::new(),
        diagnostics: Vec::new(),
        termination: Termination::Completed,
        steps: 0,
    };
    let push = |traj: &mut Trajectory, s: &State| {
        traj.diagnostics.push(record(s, p));
        if keep_states {
            traj.states.push(s.clone());
        }
    };
    let s0 = s0.project(cfg.max_mode);
    push(&mut traj, &s0);
    let mut stepper = match Stepper::new(*p, cfg.clone()) {
        Ok(st) => st,
        Err(e) => {
            traj.termination = termination_of(e);
            return traj;
        }
    };
    if let Some(t) = check_state(&s0, p, cfg) {
        traj.termination = t;
        return traj;
    }
    let t0 = s0.time;
    let span = t_end - t0;
    let fixed_steps = (span / cfg.dt - 1e-9).ceil().max(0.0) as usize;
    let mut s = s0;
    let mut last_recorded = true;
    loop {
        let remaining = t_end - s.time;
        if remaining <= 1e-12 * t_end.abs().max(1.0) || (!cfg.safety.adapt && traj.steps >= fixed_steps) {
            break;
        }
        if traj.steps >= cfg.safety.max_steps {
            traj.termination = Termination::Failed(format!("max_steps = {} reached", cfg.safety.max_steps));
            break;
        }
        let mut dt = stepper.dt();
        if cfg.safety.adapt {
            match adapt_dt_from(&s, p, cfg, dt) {
                Ok(d) => dt = d,
                Err(e) => {
                    traj.termination = termination_of(e);
                    break;
                }
            }
        }
        let dt = dt.min(remaining);
        if let Err(e) = stepper.set_dt(dt) {
            traj.termination = termination_of(e);
            break;
        }
        match stepper.step(&s) {
            Ok(mut next) => {
                traj.steps += 1;
                if !cfg.safety.adapt && dt == cfg.dt {
                    next.time = t0 + traj.steps as f64 * cfg.dt;
                }
                s = next;
            }
            Err(e) => {
                traj.termination = termination_of(e);
                break;
            }
        }
        last_recorded = false;
        if let Some(t) = check_state(&s, p, cfg) {
            traj.termination = t;
            break;
        }
        if traj.steps % record_every == 0 {
            push(&mut traj, &s);
            last_recorded = true;
        }
    }
    if !last_recorded {
        push(&mut traj, &s);
    }
    traj
}

/// Step-doubling error estimate on `ℰ⁰₀`, relative to its current value.
fn doubling_estimate(s: &State, p: &PhysParams, cfg: &StepperConfig, dt: f64) -> Result<f64, IntegratorError> {
    let mut c = cfg.clone();
    c.dt = dt;
    let big = step(s, p, &c)?;
    c.dt = dt / 2.0;
    let mut st = Stepper::new(*p, c)?;
    let mid = st.step(s)?;
    let small = st.step(&mid)?;
    let e = |u: &State| u.f.wiener_norm(0.0) + u.theta.wiener_norm(0.0);
    Ok((e(&big) - e(&small)).abs() / (e(s) + f64::MIN_POSITIVE))
}

fn adapt_dt_from(s: &State, p: &PhysParams, cfg: &StepperConfig, current: f64) -> Result<f64, IntegratorError> {
    let tol = cfg.safety.adapt_tol;
    let mut dt = current.min(cfg.dt);
    loop {
        let est = doubling_estimate(s, p, cfg, dt)?;
        if est > tol {
            if dt / 2.0 < cfg.safety.dt_min {
                return Err(IntegratorError::StepsizeUnderflow {
                    dt_min: cfg.safety.dt_min,
                    estimate: est,
                });
            }
            dt /= 2.0;
            continue;
        }
        if est < tol / 16.0 {
            dt = (2.0 * dt).min(cfg.dt);
        }
        return Ok(dt);
    }
}

/// Step size chosen by step doubling, starting from `cfg.dt`: halved while
/// the estimate exceeds `adapt_tol`, doubled (up to `cfg.dt`) when it is
/// below `adapt_tol/16`.
pub fn adapt_dt(s: &State, p: &PhysParams, cfg: &StepperConfig) -> Result<f64, IntegratorError> {
    adapt_dt_from(s, p, cfg, cfg.dt)
}
