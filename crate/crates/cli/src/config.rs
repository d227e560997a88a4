//! Flat `key = value` run configuration with dotted section prefixes.
//!
//! ```text
//! # remark family
//! params.G = 1
//! initial.kind = remark
//! initial.mu = 0.001
//! stepper.M = 1024
//! stepper.dt = 1e-4
//! run.t_end = 20
//! ```

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;

use thinfilm_core::integrator::{Safety, Scheme, StepperConfig};
use thinfilm_core::model::{NonlinearForm, PhysParams, State};
use thinfilm_core::spectral::{from_samples, GridSamples, SpectralField};

use crate::extend::even_extend;
use crate::output::fmt_f64;

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "line {l}: {}", self.message),
            None => write!(f, "{}", self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

fn err<T>(line: Option<usize>, message: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError {
        line,
        message: message.into(),
    })
}

/// A mode `k` with complex coefficient `re + i·im`.
#[derive(Debug, Clone, PartialEq)]
pub struct Coefficient {
    pub k: usize,
    pub re: String,
    pub im: String,
}

#[derive(Debug, Clone, PartialEq)]
pub enum InitialData {
    /// `h = 1 + μ sin(kx)`, `Γ = 1/2 + μ cos(kx)`. `mu` keeps its literal
    /// text for exact reporting.
    Remark { mu: String, wavenumber: usize },
    Coefficients { h: Vec<Coefficient>, gamma: Vec<Coefficient> },
    /// Samples on the torus grid, or on `[0, half_width]` when
    /// `half_width` is set (even reflection).
    Samples {
        h: Vec<f64>,
        gamma: Vec<f64>,
        half_width: Option<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Outputs {
    pub diagnostics: Option<PathBuf>,
    pub snapshots: Option<PathBuf>,
    pub snapshot_stride: usize,
    pub report: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    /// Physical constants as written, for exact reporting.
    pub gravity: String,
    pub capillarity: String,
    pub hamaker: String,
    pub diffusion: String,
    pub initial: InitialData,
    pub stepper: StepperConfig,
    pub record_every: usize,
    pub t_end: f64,
    pub outputs: Outputs,
}

const KEYS: &[&str] = &[
    "params.G",
    "params.S",
    "params.A",
    "params.D",
    "initial.kind",
    "initial.mu",
    "initial.wavenumber",
    "initial.h",
    "initial.gamma",
    "initial.half_width",
    "stepper.M",
    "stepper.dt",
    "stepper.scheme",
    "stepper.form",
    "stepper.series_terms",
    "stepper.grid",
    "stepper.linear_only",
    "stepper.record_every",
    "stepper.max_steps",
    "stepper.blowup_cap",
    "stepper.adapt",
    "stepper.adapt_tol",
    "stepper.dt_min",
    "run.t_end",
    "outputs.diagnostics",
    "outputs.snapshots",
    "outputs.snapshot_stride",
    "outputs.report",
];

struct Table {
    entries: BTreeMap<String, (usize, String)>,
}

impl Table {
    fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let Some((key, value)) = content.split_once('=') else {
                return err(Some(line), format!("expected `key = value`, got `{content}`"));
            };
            let (key, value) = (key.trim(), value.trim());
            if !KEYS.contains(&key) {
                return err(Some(line), format!("unknown key `{key}`"));
            }
            if value.is_empty() {
                return err(Some(line), format!("empty value for `{key}`"));
            }
            if let Some((first, _)) = entries.insert(key.to_string(), (line, value.to_string())) {
                return err(Some(line), format!("duplicate key `{key}` (first set on line {first})"));
            }
        }
        Ok(Self { entries })
    }

    fn raw(&self, key: &str) -> Option<(usize, &str)> {
        self.entries.get(key).map(|(l, v)| (*l, v.as_str()))
    }

    fn get<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>, ConfigError> {
        match self.raw(key) {
            None => Ok(None),
            Some((line, v)) => match v.parse::<T>() {
                Ok(x) => Ok(Some(x)),
                Err(_) => err(Some(line), format!("cannot parse `{v}` for `{key}`")),
            },
        }
    }

    fn float(&self, key: &str) -> Result<Option<f64>, ConfigError> {
        let v: Option<f64> = self.get(key)?;
        if let Some(x) = v {
            if !x.is_finite() {
                return err(self.raw(key).map(|r| r.0), format!("`{key}` must be finite"));
            }
        }
        Ok(v)
    }

    /// A finite decimal literal kept as text.
    fn literal(&self, key: &str, default: &str) -> Result<String, ConfigError> {
        Ok(match self.float(key)? {
            Some(_) => self.raw(key).expect("present").1.to_string(),
            None => default.to_string(),
        })
    }

    fn line(&self, key: &str) -> Option<usize> {
        self.raw(key).map(|r| r.0)
    }
}

fn parse_coefficients(text: &str, line: usize) -> Result<Vec<Coefficient>, ConfigError> {
    let mut out: Vec<Coefficient> = Vec::new();
    for tok in text.split([',', ' ', '\t']).filter(|t| !t.is_empty()) {
        let parts: Vec<&str> = tok.split(':').collect();
        if !(2..=3).contains(&parts.len()) {
            return err(Some(line), format!("coefficient `{tok}` is not `k:re` or `k:re:im`"));
        }
        let Ok(k) = parts[0].parse::<usize>() else {
            return err(Some(line), format!("bad wavenumber in `{tok}`"));
        };
        let re = parts[1].to_string();
        let im = parts.get(2).map_or("0", |s| s).to_string();
        for v in [&re, &im] {
            if !v.parse::<f64>().is_ok_and(f64::is_finite) {
                return err(Some(line), format!("bad number in `{tok}`"));
            }
        }
        if k == 0 && im.parse::<f64>().unwrap() != 0.0 {
            return err(Some(line), "the k=0 coefficient of a real field must be real");
        }
        if out.iter().any(|c| c.k == k) {
            return err(Some(line), format!("wavenumber {k} listed twice"));
        }
        out.push(Coefficient { k, re, im });
    }
    if out.is_empty() {
        return err(Some(line), "no coefficients given");
    }
    Ok(out)
}

fn parse_samples(text: &str, line: usize) -> Result<Vec<f64>, ConfigError> {
    let mut out = Vec::new();
    for tok in text.split([',', ' ', '\t']).filter(|t| !t.is_empty()) {
        match tok.parse::<f64>() {
            Ok(v) if v.is_finite() => out.push(v),
            _ => return err(Some(line), format!("bad sample `{tok}`")),
        }
    }
    if out.is_empty() {
        return err(Some(line), "no samples given");
    }
    Ok(out)
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let t = Table::parse(text)?;
        let kind: String = t.get("initial.kind")?.unwrap_or_else(|| "remark".to_string());
        let kind_line = t.line("initial.kind");
        let initial = match kind.as_str() {
            "remark" => {
                for k in ["initial.h", "initial.gamma", "initial.half_width"] {
                    if let Some(l) = t.line(k) {
                        return err(Some(l), format!("`{k}` conflicts with initial.kind = remark"));
                    }
                }
                let mu = t.literal("initial.mu", "0.001")?;
                if mu.parse::<f64>().unwrap() < 0.0 {
                    return err(t.line("initial.mu"), "initial.mu must be nonnegative");
                }
                let wavenumber = t.get::<usize>("initial.wavenumber")?.unwrap_or(1000);
                if wavenumber == 0 {
                    return err(t.line("initial.wavenumber"), "initial.wavenumber must be positive");
                }
                InitialData::Remark { mu, wavenumber }
            }
            "coefficients" | "samples" => {
                for k in ["initial.mu", "initial.wavenumber"] {
                    if let Some(l) = t.line(k) {
                        return err(Some(l), format!("`{k}` only applies to initial.kind = remark"));
                    }
                }
                let (Some((lh, h)), Some((lg, g))) = (t.raw("initial.h"), t.raw("initial.gamma")) else {
                    return err(kind_line, format!("initial.kind = {kind} needs initial.h and initial.gamma"));
                };
                if kind == "coefficients" {
                    if let Some(l) = t.line("initial.half_width") {
                        return err(Some(l), "initial.half_width only applies to samples");
                    }
                    InitialData::Coefficients {
                        h: parse_coefficients(h, lh)?,
                        gamma: parse_coefficients(g, lg)?,
                    }
                } else {
                    let half_width = match t.raw("initial.half_width") {
                        None => None,
                        Some((_, "pi")) => Some(std::f64::consts::PI),
                        Some(_) => t.float("initial.half_width")?,
                    };
                    let (h, gamma) = (parse_samples(h, lh)?, parse_samples(g, lg)?);
                    if h.len() != gamma.len() {
                        return err(Some(lg), "initial.h and initial.gamma need the same number of samples");
                    }
                    InitialData::Samples { h, gamma, half_width }
                }
            }
            other => return err(kind_line, format!("unknown initial.kind `{other}`")),
        };

        let m: usize = t.get("stepper.M")?.unwrap_or(match &initial {
            InitialData::Remark { wavenumber, .. } => (*wavenumber).next_power_of_two().max(*wavenumber),
            _ => 64,
        });
        let dt = t.float("stepper.dt")?.unwrap_or(1e-4);
        let scheme = match t.raw("stepper.scheme") {
            None | Some((_, "imex_cn_ab2")) => Scheme::ImexCnAb2,
            Some((_, "imex_euler")) => Scheme::ImexEuler,
            Some((l, v)) => return err(Some(l), format!("unknown scheme `{v}`")),
        };
        let terms: Option<usize> = t.get("stepper.series_terms")?;
        let form = match t.raw("stepper.form") {
            None | Some((_, "closed")) => {
                if let Some(l) = t.line("stepper.series_terms") {
                    return err(Some(l), "stepper.series_terms needs stepper.form = series");
                }
                NonlinearForm::Closed
            }
            Some((_, "series")) => NonlinearForm::Series {
                terms: terms.unwrap_or(m),
            },
            Some((l, v)) => return err(Some(l), format!("unknown form `{v}`")),
        };
        let defaults = Safety::default();
        let safety = Safety {
            max_steps: t.get("stepper.max_steps")?.unwrap_or(defaults.max_steps),
            blowup_norm_cap: t.float("stepper.blowup_cap")?,
            adapt: t.get("stepper.adapt")?.unwrap_or(false),
            adapt_tol: t.float("stepper.adapt_tol")?.unwrap_or(defaults.adapt_tol),
            dt_min: t.float("stepper.dt_min")?.unwrap_or(defaults.dt_min),
        };
        let stepper = StepperConfig {
            max_mode: m,
            dt,
            scheme,
            form,
            grid_len: t.get("stepper.grid")?,
            linear_only: t.get("stepper.linear_only")?.unwrap_or(false),
            safety,
        };
        if let Err(e) = stepper.validate() {
            return err(None, e.to_string());
        }
        let record_every: usize = t.get("stepper.record_every")?.unwrap_or(1);
        if record_every == 0 {
            return err(t.line("stepper.record_every"), "stepper.record_every must be positive");
        }
        let t_end = t.float("run.t_end")?.unwrap_or(1.0);
        if t_end < 0.0 {
            return err(t.line("run.t_end"), "run.t_end must be nonnegative");
        }
        let outputs = Outputs {
            diagnostics: t.raw("outputs.diagnostics").map(|r| PathBuf::from(r.1)),
            snapshots: t.raw("outputs.snapshots").map(|r| PathBuf::from(r.1)),
            snapshot_stride: t.get("outputs.snapshot_stride")?.unwrap_or(1),
            report: t.raw("outputs.report").map(|r| PathBuf::from(r.1)),
        };
        if outputs.snapshot_stride == 0 {
            return err(t.line("outputs.snapshot_stride"), "outputs.snapshot_stride must be positive");
        }
        let cfg = Self {
            gravity: t.literal("params.G", "1")?,
            capillarity: t.literal("params.S", "0")?,
            hamaker: t.literal("params.A", "0")?,
            diffusion: t.literal("params.D", "1")?,
            initial,
            stepper,
            record_every,
            t_end,
            outputs,
        };
        cfg.build()?;
        Ok(cfg)
    }

    /// Serializes to text that parses back to an identical configuration.
    pub fn to_text(&self) -> String {
        let mut lines = vec![
            format!("params.G = {}", self.gravity),
            format!("params.S = {}", self.capillarity),
            format!("params.A = {}", self.hamaker),
            format!("params.D = {}", self.diffusion),
        ];
        let coeffs = |cs: &[Coefficient]| {
            cs.iter()
                .map(|c| format!("{}:{}:{}", c.k, c.re, c.im))
                .collect::<Vec<_>>()
                .join(" ")
        };
        let samples = |v: &[f64]| v.iter().map(|x| fmt_f64(*x)).collect::<Vec<_>>().join(" ");
        match &self.initial {
            InitialData::Remark { mu, wavenumber } => {
                lines.push("initial.kind = remark".into());
                lines.push(format!("initial.mu = {mu}"));
                lines.push(format!("initial.wavenumber = {wavenumber}"));
            }
            InitialData::Coefficients { h, gamma } => {
                lines.push("initial.kind = coefficients".into());
                lines.push(format!("initial.h = {}", coeffs(h)));
                lines.push(format!("initial.gamma = {}", coeffs(gamma)));
            }
            InitialData::Samples { h, gamma, half_width } => {
                lines.push("initial.kind = samples".into());
                lines.push(format!("initial.h = {}", samples(h)));
                lines.push(format!("initial.gamma = {}", samples(gamma)));
                if let Some(w) = half_width {
                    lines.push(format!("initial.half_width = {}", fmt_f64(*w)));
                }
            }
        }
        let s = &self.stepper;
        lines.push(format!("stepper.M = {}", s.max_mode));
        lines.push(format!("stepper.dt = {}", fmt_f64(s.dt)));
        lines.push(format!("stepper.scheme = {}", s.scheme.name()));
        lines.push(format!("stepper.form = {}", s.form.name()));
        if let NonlinearForm::Series { terms } = s.form {
            lines.push(format!("stepper.series_terms = {terms}"));
        }
        if let Some(n) = s.grid_len {
            lines.push(format!("stepper.grid = {n}"));
        }
        lines.push(format!("stepper.linear_only = {}", s.linear_only));
        lines.push(format!("stepper.record_every = {}", self.record_every));
        lines.push(format!("stepper.max_steps = {}", s.safety.max_steps));
        if let Some(c) = s.safety.blowup_norm_cap {
            lines.push(format!("stepper.blowup_cap = {}", fmt_f64(c)));
        }
        lines.push(format!("stepper.adapt = {}", s.safety.adapt));
        lines.push(format!("stepper.adapt_tol = {}", fmt_f64(s.safety.adapt_tol)));
        lines.push(format!("stepper.dt_min = {}", fmt_f64(s.safety.dt_min)));
        lines.push(format!("run.t_end = {}", fmt_f64(self.t_end)));
        let o = &self.outputs;
        for (k, v) in [
            ("outputs.diagnostics", &o.diagnostics),
            ("outputs.snapshots", &o.snapshots),
            ("outputs.report", &o.report),
        ] {
            if let Some(p) = v {
                lines.push(format!("{k} = {}", p.display()));
            }
        }
        lines.push(format!("outputs.snapshot_stride = {}", o.snapshot_stride));
        lines.join("\n") + "\n"
    }

    /// Parameters (means taken from the initial data) and the initial
    /// perturbation at truncation `max_mode`.
    pub fn build_at(&self, max_mode: usize) -> Result<(PhysParams, State), ConfigError> {
        let num = |s: &str| s.parse::<f64>().expect("validated at parse time");
        let (h, gamma) = match &self.initial {
            InitialData::Remark { mu, wavenumber } => {
                let mu = num(mu);
                let k = *wavenumber;
                if k > max_mode {
                    return err(None, format!("wavenumber {k} exceeds stepper.M = {max_mode}"));
                }
                (
                    &SpectralField::constant(1.0, max_mode) + &SpectralField::sine(k, mu, max_mode),
                    &SpectralField::constant(0.5, max_mode) + &SpectralField::cosine(k, mu, max_mode),
                )
            }
            InitialData::Coefficients { h, gamma } => {
                let field = |cs: &[Coefficient]| {
                    let top = cs.iter().map(|c| c.k).max().unwrap_or(0).max(max_mode);
                    let mut coeffs = vec![num_complex::Complex64::new(0.0, 0.0); top + 1];
                    for c in cs {
                        coeffs[c.k] = num_complex::Complex64::new(num(&c.re), num(&c.im));
                    }
                    SpectralField::from_coeffs(coeffs)
                        .map(|u| u.project(max_mode))
                        .map_err(|e| ConfigError {
                            line: None,
                            message: e.to_string(),
                        })
                };
                (field(h)?, field(gamma)?)
            }
            InitialData::Samples { h, gamma, half_width } => {
                let grid = |v: &[f64]| -> Result<GridSamples, ConfigError> {
                    let g = match half_width {
                        Some(w) => even_extend(v, *w).map_err(|e| ConfigError {
                            line: None,
                            message: e.to_string(),
                        })?,
                        None => GridSamples::new(v.to_vec()).map_err(|e| ConfigError {
                            line: None,
                            message: e.to_string(),
                        })?,
                    };
                    Ok(g)
                };
                let (gh, gg) = (grid(h)?, grid(gamma)?);
                let resolved = ((gh.len() - 1) / 2).min(max_mode);
                let back = |g: &GridSamples| {
                    from_samples(g, resolved)
                        .map(|u| u.project(max_mode))
                        .map_err(|e| ConfigError {
                            line: None,
                            message: e.to_string(),
                        })
                };
                (back(&gh)?, back(&gg)?)
            }
        };
        let params = PhysParams::new(
            num(&self.gravity),
            num(&self.capillarity),
            num(&self.hamaker),
            num(&self.diffusion),
            h.mean(),
            gamma.mean(),
        )
        .map_err(|e| ConfigError {
            line: None,
            message: e.to_string(),
        })?;
        let state = State::new(h.without_mean(), gamma.without_mean(), 0.0).map_err(|e| ConfigError {
            line: None,
            message: e.to_string(),
        })?;
        Ok((params, state))
    }

    pub fn build(&self) -> Result<(PhysParams, State), ConfigError> {
        self.build_at(self.stepper.max_mode)
    }
}
