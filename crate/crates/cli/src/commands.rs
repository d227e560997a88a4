//! The four user-facing commands.

use std::fmt::Write as _;
use std::path::Path;

use num_rational::BigRational;
use num_traits::{Signed, Zero};
use rayon::prelude::*;
use thinfilm_core::certificate::exact::{self, RationalParams};
use thinfilm_core::certificate::{certify, Certificate};
use thinfilm_core::diagnostics::{energy, verify_decay};
use thinfilm_core::integrator::{integrate_with, Record, StepperConfig, Termination};
use thinfilm_core::model::{reconstruct, PhysParams, State};
use thinfilm_core::oracle::{default_params, run_suite};
use thinfilm_core::spectral::{grid_point, padded_len};

use crate::config::{InitialData, RunConfig};
use crate::output::{fmt_f64, write_atomic, Report};

/// Tolerance of the decay bound checked after a certified run.
pub const DECAY_TOLERANCE: f64 = 1e-3;

pub const CSV_HEADER: &str = "time,E00,E22,E42,mass_f,mass_theta,min_h,linf_f,linf_theta";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitStatus {
    Success,
    InputError,
    /// Certificate hypotheses or oracle comparisons failed.
    VerificationFailed,
    /// The run ended early (blowup, theory exit, degenerate film, solver failure).
    DynamicalTermination,
}

impl ExitStatus {
    pub fn code(self) -> i32 {
        match self {
            ExitStatus::Success => 0,
            ExitStatus::InputError => 1,
            ExitStatus::VerificationFailed => 2,
            ExitStatus::DynamicalTermination => 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub status: ExitStatus,
    /// Report or table printed on stdout.
    pub output: String,
    /// Error message for stderr.
    pub error: Option<String>,
}

impl Outcome {
    fn ok(status: ExitStatus, output: String) -> Self {
        Self {
            status,
            output,
            error: None,
        }
    }

    fn input_error(message: impl Into<String>) -> Self {
        Self {
            status: ExitStatus::InputError,
            output: String::new(),
            error: Some(message.into()),
        }
    }
}

pub fn load_config(path: &Path) -> Result<RunConfig, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    RunConfig::parse(&text).map_err(|e| format!("{}: {e}", path.display()))
}

fn save(path: Option<&Path>, text: &str) -> Result<(), String> {
    match path {
        Some(p) => write_atomic(p, text).map_err(|e| format!("{}: {e}", p.display())),
        None => Ok(()),
    }
}

/// Exact means and initial energy when the data are given by decimal
/// literals and the energy is a sum of rational moduli.
fn exact_inputs(cfg: &RunConfig) -> Option<(BigRational, BigRational, BigRational)> {
    let two = BigRational::from_integer(2.into());
    match &cfg.initial {
        InitialData::Remark { mu, .. } => {
            let mu = exact::parse_decimal(mu)?;
            Some((BigRational::from_integer(1.into()), BigRational::new(1.into(), 2.into()), &two * mu))
        }
        InitialData::Coefficients { h, gamma } => {
            let m = cfg.stepper.max_mode;
            let mut e0 = BigRational::zero();
            let mut means = Vec::new();
            for field in [h, gamma] {
                let mut mean = BigRational::zero();
                for c in field.iter().filter(|c| c.k <= m) {
                    let re = exact::parse_decimal(&c.re)?;
                    let im = exact::parse_decimal(&c.im)?;
                    if c.k == 0 {
                        mean = re;
                    } else if re.is_zero() || im.is_zero() {
                        e0 += &two * (re.abs() + im.abs());
                    } else {
                        return None;
                    }
                }
                means.push(mean);
            }
            let gamma_mean = means.pop()?;
            Some((means.pop()?, gamma_mean, e0))
        }
        InitialData::Samples { .. } => None,
    }
}

fn certificate_report(report: &mut Report, cert: &Certificate, cfg: &RunConfig) {
    report.push("regime", cert.regime.name());
    report.num("h_mean", cert.params.h_mean);
    report.num("gamma_mean", cert.params.gamma_mean);
    report.num("e0", cert.e0);
    let values = [
        ("frak_c1", cert.frak_c1),
        ("frak_c2", cert.frak_c2),
        ("frak_c3", cert.frak_c3),
        ("lambda1_0", cert.lambda1_0),
        ("lambda2_0", cert.lambda2_0),
        ("lambda3", cert.lambda3),
        ("gamma1", cert.gamma1),
        ("gamma2", cert.gamma2),
        ("gamma3", cert.gamma3),
        ("delta", cert.delta),
    ];
    for (k, v) in values {
        report.num(k, v);
    }
    if let Some(ex) = exact_constants(cfg) {
        let mut exact_values = vec![
            ("frak_c1", ex.frak_c1),
            ("frak_c2", ex.frak_c2),
            ("frak_c3", ex.frak_c3),
            ("lambda1_0", ex.lambda1_0),
            ("lambda2_0", ex.lambda2_0),
            ("lambda3", ex.lambda3),
            ("gamma1", ex.gamma1),
            ("gamma2", ex.gamma2),
        ];
        if let Some(g3) = ex.gamma3 {
            exact_values.push(("gamma3", g3));
        }
        exact_values.push(("delta", ex.delta));
        for (k, v) in exact_values {
            report.push(format!("{k}_exact"), v);
        }
    }
    for h in &cert.hypotheses {
        let status = if h.passed { "pass" } else { "fail" };
        report.push(format!("hypothesis.{}", h.name), format!("{status} margin={}", fmt_f64(h.margin)));
    }
    let failing: Vec<&str> = cert.failing().map(|h| h.name).collect();
    report.push("certified", cert.passed());
    report.push("failing", if failing.is_empty() { "none".to_string() } else { failing.join(",") });
}

fn exact_constants(cfg: &RunConfig) -> Option<exact::ExactConstants> {
    let (h_mean, gamma_mean, e0) = exact_inputs(cfg)?;
    let p = RationalParams {
        gravity: exact::parse_decimal(&cfg.gravity)?,
        capillarity: exact::parse_decimal(&cfg.capillarity)?,
        hamaker: exact::parse_decimal(&cfg.hamaker)?,
        diffusion: exact::parse_decimal(&cfg.diffusion)?,
        h_mean,
        gamma_mean,
    };
    exact::constants(&p, &e0)
}

fn build_certificate(cfg: &RunConfig) -> Result<(PhysParams, State, Certificate), String> {
    let (p, s0) = cfg.build().map_err(|e| e.to_string())?;
    let cert = certify(&s0.f, &s0.theta, &p).map_err(|e| e.to_string())?;
    Ok((p, s0, cert))
}

pub fn cmd_certify(path: &Path) -> Outcome {
    let cfg = match load_config(path) {
        Ok(c) => c,
        Err(e) => return Outcome::input_error(e),
    };
    let (_, _, cert) = match build_certificate(&cfg) {
        Ok(x) => x,
        Err(e) => return Outcome::input_error(e),
    };
    let mut report = Report::new();
    certificate_report(&mut report, &cert, &cfg);
    let text = report.render();
    if let Err(e) = save(cfg.outputs.report.as_deref(), &text) {
        return Outcome::input_error(e);
    }
    let status = if cert.passed() {
        ExitStatus::Success
    } else {
        ExitStatus::VerificationFailed
    };
    Outcome::ok(status, text)
}

fn csv_row(r: &Record) -> String {
    let opt = |v: Option<f64>| v.map(fmt_f64).unwrap_or_default();
    [
        fmt_f64(r.time),
        fmt_f64(r.e00),
        fmt_f64(r.e22),
        opt(r.e42),
        fmt_f64(r.mass_f),
        fmt_f64(r.mass_theta),
        fmt_f64(r.min_h),
        fmt_f64(r.linf_f),
        fmt_f64(r.linf_theta),
    ]
    .join(",")
}

pub fn diagnostics_csv(records: &[Record]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in records {
        out.push_str(&csv_row(r));
        out.push('\n');
    }
    out
}

/// `x,h,Gamma` on the power-of-two grid resolving the state.
pub fn snapshot_csv(s: &State, p: &PhysParams) -> String {
    let (h, gamma) = reconstruct(s, p);
    let n = padded_len(2 * s.max_mode() + 1);
    let hs = h.to_samples(n).expect("grid resolves the state");
    let gs = gamma.to_samples(n).expect("grid resolves the state");
    let mut out = String::from("x,h,Gamma\n");
    for j in 0..n {
        let _ = writeln!(out, "{},{},{}", fmt_f64(grid_point(j, n)), fmt_f64(hs.values()[j]), fmt_f64(gs.values()[j]));
    }
    out
}

/// `<stem>_<index>.csv` next to `base`.
pub fn snapshot_path(base: &Path, index: usize) -> std::path::PathBuf {
    let stem = base.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    base.with_file_name(format!("{stem}_{index:06}.csv"))
}

pub fn cmd_run(path: &Path) -> Outcome {
    let cfg = match load_config(path) {
        Ok(c) => c,
        Err(e) => return Outcome::input_error(e),
    };
    let (p, s0, cert) = match build_certificate(&cfg) {
        Ok(x) => x,
        Err(e) => return Outcome::input_error(e),
    };
    let keep = cfg.outputs.snapshots.is_some();
    let traj = integrate_with(&s0, &p, &cfg.stepper, cfg.t_end, cfg.record_every, keep);

    let mut report = Report::new();
    report.push("termination", traj.termination.name());
    let reason = traj.termination.reason();
    if !reason.is_empty() {
        report.push("reason", reason);
    }
    report.push("steps", traj.steps);
    report.num("final_time", traj.diagnostics.last().map_or(0.0, |r| r.time));
    report.push("records", traj.diagnostics.len());
    report.push("certified", cert.passed());
    report.num("delta", cert.delta);
    if cert.passed() && traj.termination == Termination::Completed {
        match verify_decay(&traj, &cert, DECAY_TOLERANCE) {
            Ok(d) => {
                report.num("decay.tolerance", DECAY_TOLERANCE);
                report.num("decay.delta_certified", d.delta_certified);
                report.num("decay.delta_fitted", d.delta_fitted);
                report.push("decay.bound_satisfied", d.bound_satisfied);
                report.num("decay.max_violation", d.max_violation);
                report.push("decay.linf_satisfied", d.linf_satisfied);
                report.num("decay.linf_max_violation", d.linf_max_violation);
                report.push("decay.rate_satisfied", d.rate_satisfied);
                report.push("decay.passed", d.passed());
            }
            Err(e) => report.push("decay.error", e),
        }
    }

    let mut writes = vec![];
    if let Some(d) = &cfg.outputs.diagnostics {
        writes.push((d.clone(), diagnostics_csv(&traj.diagnostics)));
    }
    if let Some(base) = &cfg.outputs.snapshots {
        for (i, s) in traj.states.iter().enumerate() {
            if i % cfg.outputs.snapshot_stride == 0 || i + 1 == traj.states.len() {
                writes.push((snapshot_path(base, i), snapshot_csv(s, &p)));
            }
        }
    }
    let text = report.render();
    if let Some(r) = &cfg.outputs.report {
        writes.push((r.clone(), text.clone()));
    }
    for (path, contents) in writes {
        if let Err(e) = save(Some(&path), &contents) {
            return Outcome::input_error(e);
        }
    }
    let status = match traj.termination {
        Termination::Completed => ExitStatus::Success,
        _ => ExitStatus::DynamicalTermination,
    };
    Outcome::ok(status, text)
}

/// Runs the configuration at truncation `m` and step `dt`; returns the
/// final state or the termination name.
fn run_level(cfg: &RunConfig, m: usize, dt: f64) -> Result<State, String> {
    let (p, s0) = cfg.build_at(m).map_err(|e| e.to_string())?;
    let stepper = StepperConfig {
        max_mode: m,
        dt,
        ..cfg.stepper.clone()
    };
    let traj = integrate_with(&s0, &p, &stepper, cfg.t_end, usize::MAX, true);
    match traj.termination {
        Termination::Completed => Ok(traj.final_state().expect("first state is kept").clone()),
        t => Err(format!("level M={m} dt={} ended with {} {}", fmt_f64(dt), t.name(), t.reason())),
    }
}

/// `ℰ⁰₀` of the difference, compared at the smaller truncation.
fn difference(a: &State, b: &State) -> f64 {
    let m = a.max_mode().min(b.max_mode());
    let (a, b) = (a.project(m), b.project(m));
    let d = State {
        f: &a.f - &b.f,
        theta: &a.theta - &b.theta,
        time: a.time,
    };
    energy(&d, 0.0, 0.0)
}

/// Worker pool sized by `THINFILM_THREADS` when set.
pub fn thread_pool() -> Result<rayon::ThreadPool, String> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var("THINFILM_THREADS") {
        let n: usize = v
            .parse()
            .ok()
            .filter(|n| *n > 0)
            .ok_or_else(|| format!("THINFILM_THREADS must be a positive integer, got `{v}`"))?;
        b = b.num_threads(n);
    }
    b.build().map_err(|e| e.to_string())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceRow {
    pub max_mode: usize,
    pub dt: f64,
    /// Difference to the previous level; `None` on the first.
    pub difference: Option<f64>,
    /// `log(d_{i−1}/d_i)/log(factor)`.
    pub order: Option<f64>,
}

fn study(cfg: &RunConfig, levels: &[(usize, f64)], factor: f64, pool: &rayon::ThreadPool) -> Result<Vec<ConvergenceRow>, String> {
    let finals: Vec<Result<State, String>> =
        pool.install(|| levels.par_iter().map(|&(m, dt)| run_level(cfg, m, dt)).collect());
    let finals: Vec<State> = finals.into_iter().collect::<Result<_, _>>()?;
    let mut rows: Vec<ConvergenceRow> = Vec::new();
    for (i, &(m, dt)) in levels.iter().enumerate() {
        let d = (i > 0).then(|| difference(&finals[i], &finals[i - 1]));
        let order = match (i > 1, d, rows.last().and_then(|r| r.difference)) {
            (true, Some(d), Some(prev)) => Some((prev / d).ln() / factor.ln()),
            _ => None,
        };
        rows.push(ConvergenceRow {
            max_mode: m,
            dt,
            difference: d,
            order,
        });
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceTables {
    pub modes: Vec<ConvergenceRow>,
    pub steps: Vec<ConvergenceRow>,
}

/// Truncation study `M·m_factor^i` at fixed `dt` and step study
/// `dt/dt_factor^i` at fixed `M`.
pub fn convergence(cfg: &RunConfig, levels: usize, m_factor: usize, dt_factor: f64) -> Result<ConvergenceTables, String> {
    let pool = thread_pool()?;
    let (m, dt) = (cfg.stepper.max_mode, cfg.stepper.dt);
    let m_levels: Vec<(usize, f64)> = (0..levels).map(|i| (m * m_factor.pow(i as u32), dt)).collect();
    let dt_levels: Vec<(usize, f64)> = (0..levels).map(|i| (m, dt / dt_factor.powi(i as i32))).collect();
    Ok(ConvergenceTables {
        modes: study(cfg, &m_levels, m_factor as f64, &pool)?,
        steps: study(cfg, &dt_levels, dt_factor, &pool)?,
    })
}

fn render_table(out: &mut String, name: &str, rows: &[ConvergenceRow]) {
    let opt = |v: Option<f64>| v.map(fmt_f64).unwrap_or_default();
    let _ = writeln!(out, "study: {name}");
    let _ = writeln!(out, "level,M,dt,difference,order");
    for (i, r) in rows.iter().enumerate() {
        let _ = writeln!(out, "{i},{},{},{},{}", r.max_mode, fmt_f64(r.dt), opt(r.difference), opt(r.order));
    }
}

pub fn cmd_convergence(path: &Path, levels: usize, m_factor: usize, dt_factor: f64) -> Outcome {
    if levels < 2 {
        return Outcome::input_error("--levels must be at least 2");
    }
    if m_factor < 1 || !(dt_factor >= 1.0 && dt_factor.is_finite()) {
        return Outcome::input_error("refinement factors must be at least 1");
    }
    let cfg = match load_config(path) {
        Ok(c) => c,
        Err(e) => return Outcome::input_error(e),
    };
    let tables = match convergence(&cfg, levels, m_factor, dt_factor) {
        Ok(t) => t,
        Err(e) if e.starts_with("level") => {
            return Outcome {
                status: ExitStatus::DynamicalTermination,
                output: String::new(),
                error: Some(e),
            }
        }
        Err(e) => return Outcome::input_error(e),
    };
    let mut text = String::new();
    render_table(&mut text, "M", &tables.modes);
    render_table(&mut text, "dt", &tables.steps);
    if let Err(e) = save(cfg.outputs.report.as_deref(), &text) {
        return Outcome::input_error(e);
    }
    Outcome::ok(ExitStatus::Success, text)
}

pub fn cmd_oracle(path: Option<&Path>, seed: u64, tolerance_scale: f64) -> Outcome {
    if !(tolerance_scale >= 0.0) {
        return Outcome::input_error("--tolerance-scale must be nonnegative");
    }
    let params = match path {
        Some(p) => match load_config(p).and_then(|c| c.build().map(|b| b.0).map_err(|e| e.to_string())) {
            Ok(p) => p,
            Err(e) => return Outcome::input_error(e),
        },
        None => default_params(),
    };
    let checks = match run_suite(&params, seed, tolerance_scale) {
        Ok(c) => c,
        Err(e) => return Outcome::input_error(e.to_string()),
    };
    let mut report = Report::new();
    report.push("seed", seed);
    report.num("tolerance_scale", tolerance_scale);
    for c in &checks {
        let status = if c.passed() { "pass" } else { "fail" };
        report.push(
            c.name.clone(),
            format!("{status} discrepancy={} tolerance={}", fmt_f64(c.discrepancy), fmt_f64(c.tolerance)),
        );
    }
    let worst = checks
        .iter()
        .max_by(|a, b| (a.discrepancy / a.tolerance).total_cmp(&(b.discrepancy / b.tolerance)));
    if let Some(w) = worst {
        report.push("worst", &w.name);
        report.num("worst_discrepancy", w.discrepancy);
    }
    let passed = checks.iter().all(|c| c.passed());
    report.push("passed", passed);
    let status = if passed {
        ExitStatus::Success
    } else {
        ExitStatus::VerificationFailed
    };
    Outcome::ok(status, report.render())
}
