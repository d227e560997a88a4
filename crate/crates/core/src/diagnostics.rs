//! Checks of computed trajectories against the theory: energy decay,
//! the dissipation inequality, strong and weak residuals, and continuous
//! dependence on the initial data.

use std::f64::consts::PI;

use num_complex::Complex64;
use thiserror::Error;

use crate::certificate::{certify, Certificate};
use crate::integrator::{integrate_with, StepperConfig, Termination, Trajectory};
use crate::model::{apply_linear, ModelError, Nonlinearity, PhysParams, State};
use crate::spectral::{SpectralError, SpectralField};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiagnosticsError {
    #[error("need at least {needed} recorded samples, found {found}")]
    InsufficientSamples { needed: usize, found: usize },
    #[error("certificate was computed for different parameters")]
    CertificateMismatch,
    #[error("certificate does not pass")]
    CertificateFailed,
    #[error("trajectory ended with {0}")]
    Incomplete(String),
    #[error("recorded states are not equally spaced at stride one")]
    IrregularSampling,
    #[error("initial state {0} is not certified")]
    NotCertified(&'static str),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
}

/// `‖f‖_{Ȧʳ} + ‖Θ‖_{Ȧˢ}`.
pub fn energy(s: &State, r: f64, sq: f64) -> f64 {
    s.f.wiener_norm(r) + s.theta.wiener_norm(sq)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecayReport {
    pub delta_certified: f64,
    /// Minus the least-squares slope of `ln ℰ⁰₀` over the trailing half;
    /// `+∞` when the energy there is identically zero.
    pub delta_fitted: f64,
    pub bound_satisfied: bool,
    /// `max_t ℰ⁰₀(t)/(ℰ⁰₀(0)e^{−δt}) − 1`.
    pub max_violation: f64,
    pub linf_satisfied: bool,
    /// Same ratio for `max|f| + max|Θ|` on the diagnostic grid.
    pub linf_max_violation: f64,
    pub rate_satisfied: bool,
}

impl DecayReport {
    pub fn passed(&self) -> bool {
        self.bound_satisfied && self.linf_satisfied && self.rate_satisfied
    }
}

fn violation(value: f64, bound: f64) -> f64 {
    if bound > 0.0 {
        value / bound - 1.0
    } else if value <= 0.0 {
        -1.0
    } else {
        f64::INFINITY
    }
}

/// Least-squares slope of `ln y` against `t` over the points with `y > 0`.
pub fn fitted_log_slope(points: impl Iterator<Item = (f64, f64)>) -> Option<f64> {
    let pts: Vec<(f64, f64)> = points.filter(|(_, y)| *y > 0.0).map(|(t, y)| (t, y.ln())).collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mt).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

fn check_cert(traj: &Trajectory, cert: &Certificate) -> Result<(), DiagnosticsError> {
    if traj.params != cert.params {
        return Err(DiagnosticsError::CertificateMismatch);
    }
    if !cert.passed() {
        return Err(DiagnosticsError::CertificateFailed);
    }
    Ok(())
}

pub fn verify_decay(traj: &Trajectory, cert: &Certificate, tol: f64) -> Result<DecayReport, DiagnosticsError> {
    check_cert(traj, cert)?;
    if traj.termination != Termination::Completed {
        return Err(DiagnosticsError::Incomplete(traj.termination.name().into()));
    }
    let first = traj.diagnostics.first().ok_or(DiagnosticsError::InsufficientSamples { needed: 1, found: 0 })?;
    let e0 = first.e00;
    let t0 = first.time;
    let delta = cert.delta;
    let bound = |t: f64| e0 * (-delta * (t - t0)).exp();
    let max_violation = traj
        .diagnostics
        .iter()
        .map(|r| violation(r.e00, bound(r.time)))
        .fold(f64::NEG_INFINITY, f64::max);
    let linf_max_violation = traj
        .diagnostics
        .iter()
        .map(|r| violation(r.linf_f + r.linf_theta, bound(r.time)))
        .fold(f64::NEG_INFINITY, f64::max);
    let t_last = traj.diagnostics.last().map_or(t0, |r| r.time);
    let t_half = t0 + 0.5 * (t_last - t0);
    let delta_fitted = match fitted_log_slope(
        traj.diagnostics
            .iter()
            .filter(|r| r.time >= t_half)
            .map(|r| (r.time, r.e00)),
    ) {
        Some(slope) => -slope,
        None => f64::INFINITY,
    };
    Ok(DecayReport {
        delta_certified: delta,
        delta_fitted,
        bound_satisfied: max_violation <= tol,
        max_violation,
        linf_satisfied: linf_max_violation <= tol,
        linf_max_violation,
        rate_satisfied: delta_fitted >= delta,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DissipationReport {
    pub pairs: usize,
    pub violations: usize,
    /// Index of the first recorded pair that violates the inequality.
    pub first_violation: Option<usize>,
    /// Largest `lhs − rhs` over all pairs (≤ 0 when every pair passes).
    pub worst_excess: f64,
    /// The pair attaining `worst_excess`: `(t_n, lhs, rhs)`.
    pub worst_pair: (f64, f64, f64),
}

impl DissipationReport {
    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

/// Checks `(ℰ⁰₀(t_{n+1}) − ℰ⁰₀(t_n))/(t_{n+1} − t_n) ≤ −δ·ℰ²₂(t_n)(1−tol) + tol·ℰ⁰₀(0)`
/// at every recorded pair. With `𝒮 > 0` the right side also carries
/// `−γ₃‖f(t_n)‖_{Ȧ⁴}(1−tol)`.
pub fn verify_dissipation(traj: &Trajectory, cert: &Certificate, tol: f64) -> Result<DissipationReport, DiagnosticsError> {
    const NEEDED: usize = 10;
    if traj.diagnostics.len() < NEEDED {
        return Err(DiagnosticsError::InsufficientSamples {
            needed: NEEDED,
            found: traj.diagnostics.len(),
        });
    }
    check_cert(traj, cert)?;
    let e0 = traj.diagnostics[0].e00;
    let mut report = DissipationReport {
        pairs: 0,
        violations: 0,
        first_violation: None,
        worst_excess: f64::NEG_INFINITY,
        worst_pair: (0.0, 0.0, 0.0),
    };
    for (n, w) in traj.diagnostics.windows(2).enumerate() {
        let (a, b) = (&w[0], &w[1]);
        let lhs = (b.e00 - a.e00) / (b.time - a.time);
        let mut sink = cert.delta * a.e22;
        if let Some(fa4) = a.f_a4 {
            sink += cert.gamma3 * fa4;
        }
        let rhs = -sink * (1.0 - tol) + tol * e0;
        let excess = lhs - rhs;
        report.pairs += 1;
        if excess > 0.0 {
            report.violations += 1;
            report.first_violation.get_or_insert(n);
        }
        if excess > report.worst_excess {
            report.worst_excess = excess;
            report.worst_pair = (a.time, lhs, rhs);
        }
    }
    Ok(report)
}

fn evaluator(traj: &Trajectory) -> Nonlinearity {
    let cfg = &traj.config;
    let ev = Nonlinearity::new(traj.params, cfg.max_mode, cfg.form);
    match cfg.grid_len {
        Some(n) => ev.with_grid_len(n),
        None => ev,
    }
}

fn full_rhs(ev: &Nonlinearity, cfg: &StepperConfig, s: &State) -> Result<(SpectralField, SpectralField), ModelError> {
    if cfg.linear_only {
        Ok(apply_linear(ev.params(), &s.f, &s.theta))
    } else {
        ev.rhs(&s.f, &s.theta)
    }
}

/// Max over interior recorded states of the Ȧ⁰ norm of the central
/// difference `(u_{n+1} − u_{n−1})/(t_{n+1} − t_{n−1})` minus the right-hand
/// side at `u_n`. States must be recorded at every step.
pub fn strong_residual(traj: &Trajectory) -> Result<f64, DiagnosticsError> {
    let states = &traj.states;
    if states.len() < 3 {
        return Err(DiagnosticsError::InsufficientSamples {
            needed: 3,
            found: states.len(),
        });
    }
    let dt = traj.config.dt;
    if states
        .windows(2)
        .any(|w| ((w[1].time - w[0].time) - dt).abs() > 1e-9 * dt)
    {
        return Err(DiagnosticsError::IrregularSampling);
    }
    let ev = evaluator(traj);
    let mut worst = 0.0f64;
    for w in states.windows(3) {
        let span = w[2].time - w[0].time;
        let (rf, rt) = full_rhs(&ev, &traj.config, &w[1])?;
        let df = &(&w[2].f - &w[0].f) * (1.0 / span);
        let dth = &(&w[2].theta - &w[0].theta) * (1.0 / span);
        let res = (&df - &rf).wiener_norm(0.0) + (&dth - &rt).wiener_norm(0.0);
        worst = worst.max(res);
    }
    Ok(worst)
}

/// Polynomial time bump `(1 − (2t/T − 1)²)³` and its derivative; zero at
/// both ends of `[0, T]`.
pub fn bump(t: f64, t_end: f64) -> (f64, f64) {
    let s = 2.0 * t / t_end - 1.0;
    if s.abs() >= 1.0 {
        return (0.0, 0.0);
    }
    let q = 1.0 - s * s;
    (q * q * q, 3.0 * q * q * (-2.0 * s) * (2.0 / t_end))
}

/// Max absolute defect of the two weak-form identities over test functions
/// `w(t)e^{ikx}`, `|k| ≤ n_test`, with the time integrals done by the
/// trapezoid rule over the recorded states.
pub fn weak_residual(traj: &Trajectory, n_test: usize) -> Result<f64, DiagnosticsError> {
    let states = &traj.states;
    if states.len() < 3 {
        return Err(DiagnosticsError::InsufficientSamples {
            needed: 3,
            found: states.len(),
        });
    }
    let p = traj.params;
    let (h, gm) = (p.h_mean, p.gamma_mean);
    let h2 = h * h;
    let t0 = states[0].time;
    let t_end = states.last().expect("nonempty").time - t0;
    let ev = evaluator(traj);
    let nk = n_test.min(traj.config.max_mode) as i64;
    let ks: Vec<i64> = (-nk..=nk).collect();
    // ∫_𝕋 u e^{ikx} dx = 2π û(−k)
    let pair = |u: &SpectralField, k: i64| 2.0 * PI * u.coeff(-k);
    let integrand = |s: &State| -> Result<Vec<(Complex64, Complex64)>, DiagnosticsError> {
        let (w, dw) = bump(s.time - t0, t_end);
        let (nf, nt) = if traj.config.linear_only {
            (SpectralField::zeros(s.max_mode()), SpectralField::zeros(s.max_mode()))
        } else {
            ev.evaluate(&s.f, &s.theta)?
        };
        let (inf, int) = (nf.antiderivative()?, nt.antiderivative()?);
        Ok(ks
            .iter()
            .map(|&k| {
                let kf = k as f64;
                let (d2, d4) = (-kf * kf, kf.powi(4));
                let dx = Complex64::new(0.0, kf);
                let (f, th) = (pair(&s.f, k), pair(&s.theta, k));
                let a = -dw * f
                    + w * d2 * (-h2 / 2.0 * th + (p.hamaker / h - p.gravity / 3.0 * h2 * h) * f)
                    + w * d4 * (p.capillarity / 3.0 * h2 * h) * f
                    + w * dx * pair(&inf, k);
                let b = -dw * th
                    + w * d2
                        * (-(h * gm + p.diffusion) * th + (1.5 * p.hamaker * gm / h2 - 0.5 * p.gravity * gm * h2) * f)
                    + w * d4 * (0.5 * p.capillarity * gm * h2) * f
                    + w * dx * pair(&int, k);
                (a, b)
            })
            .collect())
    };
    let mut acc = vec![(Complex64::default(), Complex64::default()); ks.len()];
    let mut prev: Option<(f64, Vec<(Complex64, Complex64)>)> = None;
    for s in states {
        let cur = integrand(s)?;
        if let Some((tp, vp)) = &prev {
            let half = 0.5 * (s.time - tp);
            for (a, (x, y)) in acc.iter_mut().zip(vp.iter().zip(&cur)) {
                a.0 += (x.0 + y.0) * half;
                a.1 += (x.1 + y.1) * half;
            }
        }
        prev = Some((s.time, cur));
    }
    // the initial-data terms vanish because w(0) = 0
    Ok(acc.iter().map(|(a, b)| a.norm().max(b.norm())).fold(0.0, f64::max))
}

#[derive(Debug, Clone, PartialEq)]
pub struct DependenceReport {
    pub times: Vec<f64>,
    /// `d(t) = ℰ⁰₀(f₁ − f₂, Θ₁ − Θ₂)(t)` at the recorded times.
    pub separation: Vec<f64>,
    pub d0: f64,
    pub d_end: f64,
    /// Smallest `C` with `d(t) ≤ d(0)e^{Ct}` at every recorded `t > 0`.
    pub c_fit: f64,
    /// `max_t d(t)/d(0)`.
    pub max_growth: f64,
    /// `(d(0), d(T))` for the original pair and three successive halvings
    /// of the initial separation.
    pub halvings: Vec<(f64, f64)>,
    /// `d_j(T)/d_{j−1}(T)`; nominally one half.
    pub halving_ratios: Vec<f64>,
}

fn separation(a: &State, b: &State) -> f64 {
    (&a.f - &b.f).wiener_norm(0.0) + (&a.theta - &b.theta).wiener_norm(0.0)
}

fn completed(traj: Trajectory) -> Result<Trajectory, DiagnosticsError> {
    match traj.termination {
        Termination::Completed => Ok(traj),
        ref t => Err(DiagnosticsError::Incomplete(format!("{} {}", t.name(), t.reason()))),
    }
}

pub fn continuous_dependence(
    s0a: &State,
    s0b: &State,
    p: &PhysParams,
    cfg: &StepperConfig,
    t_end: f64,
    record_every: usize,
) -> Result<DependenceReport, DiagnosticsError> {
    for (name, s) in [("a", s0a), ("b", s0b)] {
        let cert = certify(&s.f, &s.theta, p).map_err(|_| DiagnosticsError::NotCertified(name))?;
        if !cert.passed() {
            return Err(DiagnosticsError::NotCertified(name));
        }
    }
    let ta = completed(integrate_with(s0a, p, cfg, t_end, record_every, true))?;
    let tb = completed(integrate_with(s0b, p, cfg, t_end, record_every, true))?;
    let times: Vec<f64> = ta.states.iter().map(|s| s.time).collect();
    let sep: Vec<f64> = ta.states.iter().zip(&tb.states).map(|(a, b)| separation(a, b)).collect();
    let d0 = sep[0];
    let d_end = *sep.last().expect("nonempty");
    let t0 = times[0];
    let (mut c_fit, mut max_growth) = (0.0f64, if d0 > 0.0 { 1.0f64 } else { 0.0 });
    if d0 > 0.0 {
        for (t, d) in times.iter().zip(&sep).skip(1) {
            max_growth = max_growth.max(d / d0);
            if *d > 0.0 && *t > t0 {
                c_fit = c_fit.max((d / d0).ln() / (t - t0));
            }
        }
    }
    let a_end = ta.final_state().expect("states kept").clone();
    let mut halvings = vec![(d0, d_end)];
    let mut ratios = Vec::new();
    let df = &s0b.f - &s0a.f;
    let dth = &s0b.theta - &s0a.theta;
    for j in 1..=3 {
        let c = 0.5f64.powi(j);
        let sb = State::new(&s0a.f + &(&df * c), &s0a.theta + &(&dth * c), s0a.time)?;
        let tj = completed(integrate_with(&sb, p, cfg, t_end, usize::MAX, true))?;
        let dj0 = separation(&s0a.project(cfg.max_mode), &sb.project(cfg.max_mode));
        let djt = separation(&a_end, tj.final_state().expect("states kept"));
        ratios.push(djt / halvings.last().expect("nonempty").1);
        halvings.push((dj0, djt));
    }
    Ok(DependenceReport {
        times,
        separation: sep,
        d0,
        d_end,
        c_fit,
        max_growth,
        halvings,
        halving_ratios: ratios,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::certificate::certify_energy;
    use crate::integrator::integrate;

    #[test]
    fn energy_examples() {
        let s = State::new(SpectralField::sine(1, 1.0, 2), SpectralField::cosine(2, 1.0, 2), 0.0).unwrap();
        assert!((energy(&s, 2.0, 2.0) - 5.0).abs() < 1e-14);
        assert_eq!(energy(&State::flat(3), 0.0, 0.0), 0.0);
        let mu = 1e-3;
        let r = State::new(SpectralField::sine(1000, mu, 1000), SpectralField::cosine(1000, mu, 1000), 0.0).unwrap();
        assert!((energy(&r, 0.0, 0.0) - 2.0 * mu).abs() < 1e-18);
    }

    #[test]
    fn bump_vanishes_at_ends() {
        assert_eq!(bump(0.0, 2.0), (0.0, 0.0));
        assert_eq!(bump(2.0, 2.0).0, 0.0);
        assert_eq!(bump(1.0, 2.0), (1.0, 0.0));
        let (t, e) = (0.3, 1e-6);
        let fd = (bump(t + e, 1.0).0 - bump(t - e, 1.0).0) / (2.0 * e);
        assert!((fd - bump(t, 1.0).1).abs() < 1e-6);
    }

    fn flat_run(p: &PhysParams) -> Trajectory {
        let cfg = StepperConfig::new(4, 1e-2);
        integrate(&State::flat(4), p, &cfg, 0.2, 1)
    }

    #[test]
    fn flat_trajectory_checks() {
        let p = PhysParams::remark();
        let traj = flat_run(&p);
        let cert = certify_energy(0.0, &p);
        let rep = verify_decay(&traj, &cert, 1e-3).unwrap();
        assert!(rep.passed());
        let d = verify_dissipation(&traj, &cert, 5e-2).unwrap();
        assert!(d.passed());
        assert_eq!(strong_residual(&traj).unwrap(), 0.0);
        assert_eq!(weak_residual(&traj, 3).unwrap(), 0.0);
    }

    #[test]
    fn certificate_mismatch_is_reported() {
        let p = PhysParams::remark();
        let traj = flat_run(&p);
        let other = certify_energy(0.0, &PhysParams { diffusion: 2.0, ..p });
        assert_eq!(verify_decay(&traj, &other, 1e-3), Err(DiagnosticsError::CertificateMismatch));
    }

    #[test]
    fn corrupted_trajectory_violates_bound() {
        let p = PhysParams::remark();
        let s = State::new(SpectralField::sine(1, 1e-3, 4), SpectralField::zeros(4), 0.0).unwrap();
        let mut traj = integrate(&s, &p, &StepperConfig::new(4, 1e-2), 0.2, 1);
        for (i, r) in traj.diagnostics.iter_mut().enumerate() {
            r.e00 *= 1.0 + 0.1 * i as f64;
        }
        let cert = certify_energy(1e-3, &p);
        let rep = verify_decay(&traj, &cert, 1e-3).unwrap();
        assert!(!rep.bound_satisfied);
        assert!(rep.max_violation > 0.0);
        // monotone in the tolerance
        assert!(verify_decay(&traj, &cert, 10.0).unwrap().bound_satisfied);
    }

    #[test]
    fn dissipation_needs_samples() {
        let p = PhysParams::remark();
        let traj = integrate(&State::flat(4), &p, &StepperConfig::new(4, 1e-2), 0.0, 1);
        assert_eq!(
            verify_dissipation(&traj, &certify_energy(0.0, &p), 5e-2),
            Err(DiagnosticsError::InsufficientSamples { needed: 10, found: 1 })
        );
    }

    #[test]
    fn zero_mode_weak_test_is_mass_defect() {
        let p = PhysParams::remark();
        let s = State::new(
            &SpectralField::sine(1, 0.05, 8) + &SpectralField::cosine(3, 0.02, 8),
            SpectralField::sine(2, 0.03, 8),
            0.0,
        )
        .unwrap();
        let traj = integrate(&s, &p, &StepperConfig::new(8, 1e-2), 0.5, 1);
        assert!(weak_residual(&traj, 0).unwrap() <= 1e-12);
        assert!(weak_residual(&traj, 3).unwrap() < 1e-3);
    }

    #[test]
    fn identical_data_do_not_separate() {
        let p = PhysParams::remark();
        let s = State::new(SpectralField::sine(2, 1e-3, 8), SpectralField::cosine(2, 1e-3, 8), 0.0).unwrap();
        let rep = continuous_dependence(&s, &s, &p, &StepperConfig::new(8, 1e-2), 0.2, 1).unwrap();
        assert!(rep.separation.iter().all(|d| *d == 0.0));
        assert_eq!(rep.c_fit, 0.0);
    }

    #[test]
    fn fitted_slope() {
        let pts = (0..10).map(|i| {
            let t = i as f64 * 0.1;
            (t, 3.0 * (-0.7 * t).exp())
        });
        assert!((fitted_log_slope(pts).unwrap() + 0.7).abs() < 1e-12);
        assert_eq!(fitted_log_slope([(0.0, 0.0), (1.0, 0.0)].into_iter()), None);
    }
}
