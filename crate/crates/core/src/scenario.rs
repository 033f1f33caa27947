//! Scenario configuration and the batch runner behind the `dephlab` CLI.
//!
//! Units: frequencies in `omega_s`, times in `1/omega_s`, temperatures in `omega_s`.

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::asymptotics::{self, ExpansionSpec};
use crate::dynamics::{DephasingState, Evaluator, TimeGrid};
use crate::energy::{self, ModeDensity, QubitPreparation};
use crate::error::{Error, Result};
use crate::info_flow::{self, FlowReport};
use crate::quadrature;
use crate::spectral::{LowFreqTerm, ModelClass, SpectralModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Analysis {
    Trajectory,
    ShortTime,
    LongTime,
    Regimes,
    InfoFlow,
    Correspondence,
    MellinCheck,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    ExpCutoff,
    FiniteSupport,
    LogExpCutoff,
    Class1,
    Class2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub class: ModelKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub log_power: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega_c: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega_s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chi0: Option<f64>,
    /// `(alpha, log_power, coeff)` triples of the low-frequency expansion.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub terms: Option<Vec<[f64; 3]>>,
    /// `(nu, Omega(nu))` samples; makes the model tabulated.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub table: Option<Vec<[f64; 2]>>,
}

fn config(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

impl ModelSpec {
    fn canonical(&self) -> bool {
        matches!(
            self.class,
            ModelKind::ExpCutoff | ModelKind::FiniteSupport | ModelKind::LogExpCutoff
        )
    }

    /// All defaults filled in; user classes carry their expansion in `terms` only.
    pub fn resolve(&self) -> Result<ModelSpec> {
        let mut m = self.clone();
        if self.canonical() {
            if m.terms.is_some() || m.table.is_some() {
                return Err(config("model.terms and model.table apply to class1 and class2 only"));
            }
            if m.chi0.is_some() {
                return Err(config("model.chi0 applies to class1 and class2 only"));
            }
            let alpha0 = m.alpha0.ok_or_else(|| config("model.alpha0 is required"))?;
            m.alpha0 = Some(alpha0);
            m.lambda = Some(m.lambda.unwrap_or(1.0));
            m.omega_c = Some(m.omega_c.unwrap_or(1.0));
            m.omega_s = Some(m.omega_s.unwrap_or(m.omega_c.unwrap()));
            match (self.class, m.log_power) {
                (ModelKind::LogExpCutoff, q) => m.log_power = Some(q.unwrap_or(0.0)),
                (_, Some(q)) if q != 0.0 => {
                    return Err(config("model.log_power applies to log_exp_cutoff, class1 and class2"))
                }
                _ => m.log_power = None,
            }
            return Ok(m);
        }
        if m.terms.is_none() {
            let alpha0 = m
                .alpha0
                .ok_or_else(|| config("model.alpha0 or model.terms is required"))?;
            m.terms = Some(vec![[alpha0, m.log_power.unwrap_or(0.0), m.lambda.unwrap_or(1.0)]]);
        } else if m.alpha0.is_some() || m.log_power.is_some() || m.lambda.is_some() {
            return Err(config(
                "model.terms replaces model.alpha0, model.log_power and model.lambda; give one or the other",
            ));
        }
        m.alpha0 = None;
        m.log_power = None;
        m.lambda = None;
        m.omega_s = Some(m.omega_s.unwrap_or(1.0));
        m.chi0 = Some(m.chi0.unwrap_or(2.0));
        if m.table.is_some() {
            if m.omega_c.is_some() {
                return Err(config("model.omega_c is implied by the table for tabulated models"));
            }
        } else {
            m.omega_c = Some(m.omega_c.unwrap_or(1.0));
        }
        Ok(m)
    }

    /// Build from a resolved spec.
    pub fn build(&self) -> Result<SpectralModel> {
        let m = self.resolve()?;
        let get = |v: Option<f64>| v.expect("resolved");
        match m.class {
            ModelKind::ExpCutoff => {
                SpectralModel::exp_cutoff(get(m.alpha0), get(m.lambda), get(m.omega_c))?.with_scale_freq(get(m.omega_s))
            }
            ModelKind::FiniteSupport => {
                SpectralModel::finite_support(get(m.alpha0), get(m.lambda), get(m.omega_c))?
                    .with_scale_freq(get(m.omega_s))
            }
            ModelKind::LogExpCutoff => SpectralModel::log_exp_cutoff(
                get(m.alpha0),
                get(m.log_power),
                get(m.lambda),
                get(m.omega_c),
            )?
            .with_scale_freq(get(m.omega_s)),
            ModelKind::Class1 | ModelKind::Class2 => {
                let terms: Vec<LowFreqTerm> = m
                    .terms
                    .as_ref()
                    .expect("resolved")
                    .iter()
                    .map(|t| LowFreqTerm::new(t[0], t[1], t[2]))
                    .collect();
                let class = if m.class == ModelKind::Class1 {
                    ModelClass::Class1
                } else {
                    ModelClass::Class2
                };
                if let Some(table) = &m.table {
                    let table = table.iter().map(|p| (p[0], p[1])).collect();
                    SpectralModel::tabulated(class, terms, get(m.omega_s), get(m.chi0), table)
                } else if class == ModelClass::Class1 {
                    SpectralModel::class1(terms, get(m.omega_s), get(m.omega_c), get(m.chi0))
                } else {
                    SpectralModel::class2(terms, get(m.omega_s), get(m.omega_c), get(m.chi0))
                }
            }
        }
    }

    fn set_alpha0(&mut self, v: f64) {
        match &mut self.terms {
            Some(t) if !t.is_empty() => t[0][0] = v,
            _ => self.alpha0 = Some(v),
        }
    }

    fn set_log_power(&mut self, v: f64) {
        match &mut self.terms {
            Some(t) if !t.is_empty() => t[0][1] = v,
            _ => self.log_power = Some(v),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Numerics {
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    #[serde(default)]
    pub evaluator: Evaluator,
    /// Horizon of the negative-rate scan.
    #[serde(default = "default_t_max")]
    pub t_max: f64,
    #[serde(default = "default_mellin_points")]
    pub mellin_points: usize,
    #[serde(default = "default_mellin_seed")]
    pub mellin_seed: u64,
}

fn default_tolerance() -> f64 {
    quadrature::DEFAULT_TOLERANCE
}
fn default_t_max() -> f64 {
    info_flow::DEFAULT_T_MAX
}
fn default_mellin_points() -> usize {
    20
}
fn default_mellin_seed() -> u64 {
    2024
}

impl Default for Numerics {
    fn default() -> Self {
        Numerics {
            tolerance: default_tolerance(),
            evaluator: Evaluator::Auto,
            t_max: default_t_max(),
            mellin_points: default_mellin_points(),
            mellin_seed: default_mellin_seed(),
        }
    }
}

/// Value lists for the sweep axes.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha0: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub log_power: Option<Vec<f64>>,
    #[serde(rename = "T", default, skip_serializing_if = "Option::is_none")]
    pub temperature: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub z: Option<Vec<f64>>,
}

/// Optional inputs for absolute (rather than relative) energies.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnergySpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon_env: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode_density: Option<ModeDensitySpec>,
}

impl EnergySpec {
    fn is_empty(&self) -> bool {
        self.epsilon_env.is_none() && self.mode_density.is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModeDensitySpec {
    /// `r(w) = exp(-w / scale)`
    Exponential { scale: f64 },
    Discrete { frequencies: Vec<f64> },
}

impl ModeDensitySpec {
    fn build(&self) -> Result<ModeDensity> {
        match self {
            ModeDensitySpec::Exponential { scale } if *scale > 0.0 && scale.is_finite() => {
                Ok(ModeDensity::exponential(*scale))
            }
            ModeDensitySpec::Exponential { scale } => Err(config(format!("mode_density scale must be positive, got {scale}"))),
            ModeDensitySpec::Discrete { frequencies } => {
                if frequencies.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
                    return Err(config("mode_density frequencies must be finite and non-negative"));
                }
                Ok(ModeDensity::Discrete(frequencies.clone()))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    Alpha0,
    LogPower,
    Temperature,
    Z,
}

impl Axis {
    pub fn parse(name: &str) -> Result<Axis> {
        match name {
            "alpha0" => Ok(Axis::Alpha0),
            "log_power" | "n0" | "beta0" => Ok(Axis::LogPower),
            "T" => Ok(Axis::Temperature),
            "z" => Ok(Axis::Z),
            _ => Err(config(format!("unknown sweep axis `{name}`; expected alpha0, log_power, T or z"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Axis::Alpha0 => "alpha0",
            Axis::LogPower => "log_power",
            Axis::Temperature => "T",
            Axis::Z => "z",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default = "default_name")]
    pub name: String,
    pub analyses: Vec<Analysis>,
    #[serde(default = "default_output")]
    pub output: String,
    /// Temperature of the dephasing dynamics (factorized initial state).
    #[serde(rename = "T", default)]
    pub temperature: f64,
    pub model: ModelSpec,
    #[serde(default = "default_preparation")]
    pub preparation: QubitPreparation,
    #[serde(default = "default_grid")]
    pub grid: TimeGrid,
    #[serde(default, skip_serializing_if = "EnergySpec::is_empty")]
    pub energy: EnergySpec,
    #[serde(default)]
    pub numerics: Numerics,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSpec>,
}

fn default_name() -> String {
    "scenario".into()
}
fn default_output() -> String {
    "out".into()
}
fn default_preparation() -> QubitPreparation {
    QubitPreparation {
        omega0: 1.0,
        z: 0.0,
        t_prep: 1.0,
    }
}
fn default_grid() -> TimeGrid {
    TimeGrid::Log {
        start: 1e-3,
        end: 1e3,
        count: 200,
    }
}

impl Scenario {
    /// Parse and validate; the result has every default resolved.
    pub fn parse(text: &str) -> Result<Scenario> {
        let mut s: Scenario = toml::from_str(text).map_err(|e| config(e.to_string()))?;
        s.model = s.model.resolve()?;
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Scenario> {
        let text = std::fs::read_to_string(path).map_err(|e| config(format!("{}: {e}", path.display())))?;
        Scenario::parse(&text).map_err(|e| match e {
            Error::Config(m) => config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.analyses.is_empty() {
            return Err(config("at least one analysis must be requested"));
        }
        if !(self.temperature >= 0.0) || !self.temperature.is_finite() {
            return Err(config("T must be finite and non-negative"));
        }
        self.preparation.validate().map_err(|e| config(format!("preparation: {e}")))?;
        self.grid.points().map_err(|e| config(format!("grid: {e}")))?;
        let n = &self.numerics;
        if !(n.tolerance > 0.0) || !(n.t_max > 0.0) || n.mellin_points == 0 {
            return Err(config("numerics: tolerance, t_max and mellin_points must be positive"));
        }
        self.model.build().map_err(|e| config(format!("model: {e}")))?;
        if let Some(d) = &self.energy.mode_density {
            d.build()?;
        }
        if self.energy.epsilon_env.is_some_and(|e| !e.is_finite()) {
            return Err(config("energy: epsilon_env must be finite"));
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    fn wants(&self, a: Analysis) -> bool {
        self.analyses.contains(&a)
    }

    fn with_axis(&self, axis: Axis, v: f64) -> Scenario {
        let mut s = self.clone();
        match axis {
            Axis::Alpha0 => s.model.set_alpha0(v),
            Axis::LogPower => s.model.set_log_power(v),
            Axis::Temperature => s.temperature = v,
            Axis::Z => s.preparation.z = v,
        }
        s
    }

    pub fn axis_values(&self, axis: Axis) -> Option<&[f64]> {
        let sw = self.sweep.as_ref()?;
        match axis {
            Axis::Alpha0 => sw.alpha0.as_deref(),
            Axis::LogPower => sw.log_power.as_deref(),
            Axis::Temperature => sw.temperature.as_deref(),
            Axis::Z => sw.z.as_deref(),
        }
    }

    pub fn set_axis_values(&mut self, axis: Axis, values: Vec<f64>) {
        let sw = self.sweep.get_or_insert_with(SweepSpec::default);
        match axis {
            Axis::Alpha0 => sw.alpha0 = Some(values),
            Axis::LogPower => sw.log_power = Some(values),
            Axis::Temperature => sw.temperature = Some(values),
            Axis::Z => sw.z = Some(values),
        }
    }
}

/// A file produced by a run, relative to the output directory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Artifact {
    pub path: String,
    pub contents: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub artifacts: Vec<Artifact>,
    /// `(where, message)` for every failed analysis or grid point.
    pub failures: Vec<(String, String)>,
}

impl Outcome {
    pub fn exit_code(&self) -> i32 {
        if self.failures.is_empty() {
            0
        } else {
            2
        }
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        for a in &self.artifacts {
            let path = dir.join(&a.path);
            if let Some(parent) = path.parent() {
                std::fs::create_dir_all(parent)?;
            }
            std::fs::write(path, &a.contents)?;
        }
        Ok(())
    }
}

struct Table {
    header: Vec<&'static str>,
    rows: Vec<Vec<String>>,
}

impl Table {
    fn new(header: &[&'static str]) -> Table {
        Table {
            header: header.to_vec(),
            rows: Vec::new(),
        }
    }

    fn to_csv(&self) -> String {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        w.write_record(&self.header).expect("in-memory write");
        for r in &self.rows {
            w.write_record(r).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
    }
}

/// Shortest round-trip form; exponent notation for very small or large magnitudes.
fn num(v: f64) -> String {
    let a = v.abs();
    if a != 0.0 && a.is_finite() && !(1e-4..1e15).contains(&a) {
        format!("{v:e}")
    } else {
        format!("{v}")
    }
}

fn expansion_rows(table: &mut Table, e: &ExpansionSpec) {
    for (i, t) in e.terms.iter().enumerate() {
        table.rows.push(vec![
            match e.regime {
                asymptotics::Regime::ShortTime => "short_time".into(),
                asymptotics::Regime::LongTime => "long_time".into(),
            },
            e.case.as_str().into(),
            if i == 0 { "leading".into() } else { "subleading".into() },
            num(t.coeff),
            num(t.power),
            num(t.log_power),
            e.substituted.to_string(),
            e.warnings.join("; "),
        ]);
    }
}

const TRAJECTORY_HEADER: &[&str] = &["t", "Lambda", "gamma", "Xi", "coherence", "eps_E_delta", "eps_SE_delta"];
const EXPANSION_HEADER: &[&str] = &["regime", "case", "term", "coeff", "power", "log_power", "substituted", "warnings"];
const REGIMES_HEADER: &[&str] = &[
    "alpha0",
    "n0",
    "regime",
    "leading_coeff",
    "table_unconditional",
    "table_conditional",
    "flags",
];
const INFO_FLOW_HEADER: &[&str] = &["t_start", "t_end", "min_rate", "open_end", "contribution"];
const MELLIN_HEADER: &[&str] = &[
    "s_re",
    "s_im",
    "closed_re",
    "closed_im",
    "numeric_re",
    "numeric_im",
    "relative_error",
];
const SWEEP_HEADER: &[&str] = &[
    "point",
    "axis",
    "value",
    "status",
    "energy_regime",
    "flow_dir",
    "N",
    "n_intervals",
    "verdict",
    "message",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Status {
    Ok,
    Refused,
    Failed,
}

impl Status {
    fn as_str(&self) -> &'static str {
        match self {
            Status::Ok => "ok",
            Status::Refused => "refused",
            Status::Failed => "failed",
        }
    }
}

/// Results of one scenario point, kept in memory until assembly.
struct PointResult {
    artifacts: Vec<Artifact>,
    failures: Vec<(String, String)>,
    status: Status,
    regimes_row: Option<Vec<String>>,
    correspondence_row: Option<Vec<String>>,
    energy_regime: String,
    flow_dir: String,
    measure: String,
    n_intervals: String,
    verdict: String,
    summary: Vec<String>,
}

fn record(out: &mut PointResult, what: &str, e: Error) {
    if matches!(e, Error::Refused(_)) {
        if out.status == Status::Ok {
            out.status = Status::Refused;
        }
        out.summary.push(format!("{what}: refused ({e})"));
    } else {
        out.status = Status::Failed;
        out.failures.push((what.to_string(), e.to_string()));
    }
}

fn run_point(s: &Scenario) -> PointResult {
    let mut out = PointResult {
        artifacts: Vec::new(),
        failures: Vec::new(),
        status: Status::Ok,
        regimes_row: None,
        correspondence_row: None,
        energy_regime: String::new(),
        flow_dir: String::new(),
        measure: String::new(),
        n_intervals: String::new(),
        verdict: String::new(),
        summary: Vec::new(),
    };
    let model = match s.model.build() {
        Ok(m) => m,
        Err(e) => {
            out.status = Status::Failed;
            out.failures.push(("model".into(), e.to_string()));
            return out;
        }
    };
    let prep = s.preparation;
    let state = match DephasingState::new(&model, s.temperature)
        .and_then(|st| st.with_tolerance(s.numerics.tolerance))
        .map(|st| st.with_evaluator(s.numerics.evaluator))
    {
        Ok(st) => st,
        Err(e) => {
            out.status = Status::Failed;
            out.failures.push(("dynamics".into(), e.to_string()));
            return out;
        }
    };
    out.summary.push(format!(
        "model {} alpha0 = {} n0 = {} T = {} T_prep = {} z = {}",
        model.class_tag,
        model.alpha0(),
        model.log_power0(),
        s.temperature,
        prep.t_prep,
        prep.z
    ));

    if s.wants(Analysis::Trajectory) {
        let res = (|| -> Result<String> {
            let times = s.grid.points()?;
            let samples = state.trajectory(&times)?;
            let initial = match &s.energy.mode_density {
                Some(d) => Some(energy::bath_energy_initial(&model, &d.build()?, prep.t_prep)?),
                None => None,
            };
            let energy = energy::bath_energy(&prep, &state, &times, initial, s.energy.epsilon_env)?;
            let bath_abs = energy.bath_absolute();
            let corr_abs = energy.correlation_absolute();
            let mut t = Table::new(TRAJECTORY_HEADER);
            if bath_abs.is_some() {
                t.header.push("eps_E_abs");
            }
            if corr_abs.is_some() {
                t.header.push("eps_SE_abs");
            }
            for (i, smp) in samples.iter().enumerate() {
                let mut row = vec![
                    num(smp.t),
                    num(smp.lambda),
                    num(smp.gamma),
                    num(smp.xi),
                    num(smp.coherence),
                    num(energy.bath_delta[i]),
                    num(energy.correlation_delta[i]),
                ];
                row.extend(bath_abs.iter().chain(&corr_abs).map(|v| num(v[i])));
                t.rows.push(row);
            }
            Ok(t.to_csv())
        })();
        match res {
            Ok(csv) => {
                out.artifacts.push(Artifact {
                    path: "trajectory.csv".into(),
                    contents: csv,
                });
                out.artifacts.push(Artifact {
                    path: "plot.gp".into(),
                    contents: PLOT_SCRIPT.into(),
                });
            }
            Err(e) => record(&mut out, "trajectory", e),
        }
    }

    if s.wants(Analysis::ShortTime) || s.wants(Analysis::LongTime) {
        let mut table = Table::new(EXPANSION_HEADER);
        let mut ok = true;
        if s.wants(Analysis::ShortTime) {
            match asymptotics::short_time_expansion(&prep, &model) {
                Ok(e) => expansion_rows(&mut table, &e),
                Err(e) => {
                    ok = false;
                    record(&mut out, "short_time", e)
                }
            }
        }
        if s.wants(Analysis::LongTime) {
            match asymptotics::long_time_expansion(&prep, &model) {
                Ok(e) => expansion_rows(&mut table, &e),
                Err(e) => {
                    ok = !matches!(e, Error::Refused(_)) && ok;
                    record(&mut out, "long_time", e)
                }
            }
        }
        if ok || out.status == Status::Refused {
            out.artifacts.push(Artifact {
                path: "expansion.csv".into(),
                contents: table.to_csv(),
            });
        }
    }

    if s.wants(Analysis::Regimes) {
        let r = asymptotics::energy_regime_report(&prep, &model);
        if r.regime == asymptotics::EnergyRegime::Refused && out.status == Status::Ok {
            out.status = Status::Refused;
        }
        let lit = |f: fn(&asymptotics::LiteralReadings) -> asymptotics::EnergyRegime| {
            r.literal.as_ref().map_or("refused".to_string(), |l| f(l).to_string())
        };
        let row = vec![
            num(model.alpha0()),
            num(model.log_power0()),
            r.regime.to_string(),
            r.leading_coeff.map_or(String::new(), num),
            lit(|l| l.unconditional),
            lit(|l| l.conditional),
            r.flags.join("; "),
        ];
        out.energy_regime = r.regime.to_string();
        let mut t = Table::new(REGIMES_HEADER);
        t.rows.push(row.clone());
        out.artifacts.push(Artifact {
            path: "regimes.csv".into(),
            contents: t.to_csv(),
        });
        out.summary.push(format!("energy regime: {}", r.regime));
        out.summary.extend(r.flags.iter().map(|f| format!("  flag: {f}")));
        out.regimes_row = Some(row);
    }

    if s.wants(Analysis::InfoFlow) {
        let res = info_flow::find_negative_intervals(&state, s.numerics.t_max)
            .and_then(|iv| info_flow::measure_over(&state, &iv, s.numerics.t_max).map(|m| (iv, m)));
        match res {
            Ok((intervals, measure)) => {
                let mut t = Table::new(INFO_FLOW_HEADER);
                for (iv, c) in intervals.iter().zip(&measure.contributions) {
                    t.rows.push(vec![
                        num(iv.t_start),
                        num(iv.t_end),
                        num(iv.min_rate),
                        iv.open_end.to_string(),
                        num(*c),
                    ]);
                }
                out.artifacts.push(Artifact {
                    path: "info_flow.csv".into(),
                    contents: t.to_csv(),
                });
                out.measure = num(measure.value);
                out.n_intervals = intervals.len().to_string();
                out.summary.push(format!(
                    "non-Markovianity N = {}{} over {} interval(s) up to t = {}",
                    measure.value,
                    if measure.lower_bound {
                        format!(" (lower bound, tail estimate {:e})", measure.tail_estimate)
                    } else {
                        String::new()
                    },
                    intervals.len(),
                    s.numerics.t_max
                ));
            }
            Err(e) => record(&mut out, "info_flow", e),
        }
    }

    if s.wants(Analysis::Correspondence) {
        match info_flow::correspondence_report(&prep, &model, s.temperature, s.numerics.t_max) {
            Ok(r) => {
                let row = correspondence_fields(&r);
                out.energy_regime = r.energy_regime.to_string();
                out.flow_dir = r.flow.direction.to_string();
                out.measure = num(r.measure.value);
                out.n_intervals = r.intervals.len().to_string();
                out.verdict = r.verdict.as_str().into();
                let mut t = Table::new(CORRESPONDENCE_HEADER);
                t.rows.push(row.clone());
                out.artifacts.push(Artifact {
                    path: "correspondence.csv".into(),
                    contents: t.to_csv(),
                });
                out.summary.push(format!(
                    "correspondence: {} / {} -> {} ({})",
                    r.flow.direction,
                    r.energy_regime,
                    r.verdict.as_str(),
                    r.narrative
                ));
                out.summary.extend(r.flow.flags.iter().map(|f| format!("  flag: {f}")));
                out.correspondence_row = Some(row);
            }
            Err(e @ Error::Refused(_)) => {
                let row = vec![
                    num(model.alpha0()),
                    num(model.log_power0()),
                    num(s.temperature),
                    num(prep.t_prep),
                    String::new(),
                    String::new(),
                    "refused".into(),
                    "refused".into(),
                    "refused".into(),
                ];
                out.energy_regime = "refused".into();
                out.verdict = "refused".into();
                let mut t = Table::new(CORRESPONDENCE_HEADER);
                t.rows.push(row.clone());
                out.artifacts.push(Artifact {
                    path: "correspondence.csv".into(),
                    contents: t.to_csv(),
                });
                out.correspondence_row = Some(row);
                record(&mut out, "correspondence", e);
            }
            Err(e) => record(&mut out, "correspondence", e),
        }
    }

    if s.wants(Analysis::MellinCheck) {
        match asymptotics::mellin_cross_check(&model, s.numerics.mellin_points, s.numerics.mellin_seed) {
            Ok(samples) => {
                let mut t = Table::new(MELLIN_HEADER);
                let mut worst = 0.0f64;
                for m in &samples {
                    worst = worst.max(m.relative_error);
                    t.rows.push(vec![
                        num(m.s_re),
                        num(m.s_im),
                        num(m.closed.re),
                        num(m.closed.im),
                        num(m.numeric.re),
                        num(m.numeric.im),
                        num(m.relative_error),
                    ]);
                }
                out.artifacts.push(Artifact {
                    path: "mellin.csv".into(),
                    contents: t.to_csv(),
                });
                let data = asymptotics::mellin_data(&model);
                out.summary.push(format!(
                    "Mellin check: strip (0, {}), {} points, max relative error {worst:e}, decay {}",
                    data.strip_upper,
                    samples.len(),
                    if data.decay_verified { "verified" } else { "assumed" }
                ));
            }
            Err(e) => record(&mut out, "mellin_check", e),
        }
    }
    out
}

const CORRESPONDENCE_HEADER: &[&str] = &[
    "alpha0",
    "n0",
    "T_fact",
    "T_prep",
    "N",
    "n_intervals",
    "flow_dir",
    "energy_regime",
    "verdict",
];

fn correspondence_fields(r: &FlowReport) -> Vec<String> {
    r.csv_row().split(',').map(str::to_string).collect()
}

const PLOT_SCRIPT: &str = "set datafile separator ','
set key autotitle columnhead
set logscale x
set xlabel 't'
set terminal pngcairo size 900,600
set output 'trajectory.png'
plot 'trajectory.csv' using 1:2 with lines, '' using 1:3 with lines, '' using 1:6 with lines
";

/// Run a single scenario.
pub fn run(s: &Scenario) -> Outcome {
    let p = run_point(s);
    let mut artifacts = p.artifacts;
    let mut summary = format!("scenario {}\n", s.name);
    for line in &p.summary {
        let _ = writeln!(summary, "{line}");
    }
    for (what, msg) in &p.failures {
        let _ = writeln!(summary, "FAILED {what}: {msg}");
    }
    artifacts.push(Artifact {
        path: "summary.txt".into(),
        contents: summary,
    });
    artifacts.push(Artifact {
        path: "effective_config.toml".into(),
        contents: s.to_toml(),
    });
    Outcome {
        artifacts,
        failures: p.failures,
    }
}

/// Run every value of `axis`; points execute in parallel, output is assembled in order.
pub fn sweep(s: &Scenario, axis: Axis) -> Result<Outcome> {
    let values = s
        .axis_values(axis)
        .ok_or_else(|| config(format!("no values given for sweep axis {}", axis.name())))?
        .to_vec();
    if values.is_empty() {
        return Err(config(format!("sweep axis {} has no values", axis.name())));
    }
    let points: Vec<PointResult> = values.par_iter().map(|&v| run_point(&s.with_axis(axis, v))).collect();

    let mut artifacts = Vec::new();
    let mut failures = Vec::new();
    let mut rows = Table::new(SWEEP_HEADER);
    let mut regimes = Table::new(REGIMES_HEADER);
    let mut corr = Table::new(CORRESPONDENCE_HEADER);
    let mut summary = format!("sweep {} over {} ({} points)\n", s.name, axis.name(), values.len());
    for (i, (p, v)) in points.into_iter().zip(&values).enumerate() {
        let dir = format!("point_{i:03}");
        let message = p
            .failures
            .iter()
            .map(|(w, m)| format!("{w}: {m}"))
            .collect::<Vec<_>>()
            .join("; ");
        rows.rows.push(vec![
            i.to_string(),
            axis.name().into(),
            num(*v),
            p.status.as_str().into(),
            p.energy_regime.clone(),
            p.flow_dir.clone(),
            p.measure.clone(),
            p.n_intervals.clone(),
            p.verdict.clone(),
            message,
        ]);
        let _ = writeln!(summary, "[{dir}] {} = {v}: {}", axis.name(), p.status.as_str());
        for line in &p.summary {
            let _ = writeln!(summary, "  {line}");
        }
        if p.status == Status::Failed {
            for (w, m) in p.failures {
                failures.push((format!("{dir} {w}"), m));
            }
            continue;
        }
        if let Some(r) = p.regimes_row {
            regimes.rows.push(r);
        }
        if let Some(r) = p.correspondence_row {
            corr.rows.push(r);
        }
        for a in p.artifacts {
            if a.path == "regimes.csv" || a.path == "correspondence.csv" {
                continue;
            }
            artifacts.push(Artifact {
                path: format!("{dir}/{}", a.path),
                contents: a.contents,
            });
        }
    }
    artifacts.push(Artifact {
        path: "sweep.csv".into(),
        contents: rows.to_csv(),
    });
    if s.wants(Analysis::Regimes) {
        artifacts.push(Artifact {
            path: "regimes.csv".into(),
            contents: regimes.to_csv(),
        });
    }
    if s.wants(Analysis::Correspondence) {
        let _ = writeln!(summary, "\ncorrespondence table");
        let _ = writeln!(summary, "{:>8} {:>6} {:>9} {:>9} {:>10}", "alpha0", "n0", "flow", "energy", "verdict");
        for r in &corr.rows {
            let _ = writeln!(summary, "{:>8} {:>6} {:>9} {:>9} {:>10}", r[0], r[1], r[6], r[7], r[8]);
        }
        artifacts.push(Artifact {
            path: "correspondence.csv".into(),
            contents: corr.to_csv(),
        });
    }
    for (w, m) in &failures {
        let _ = writeln!(summary, "FAILED {w}: {m}");
    }
    artifacts.push(Artifact {
        path: "summary.txt".into(),
        contents: summary,
    });
    artifacts.push(Artifact {
        path: "effective_config.toml".into(),
        contents: s.to_toml(),
    });
    Ok(Outcome { artifacts, failures })
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
analyses = ["trajectory"]
[model]
class = "exp_cutoff"
alpha0 = 1.0
[grid]
kind = "log"
start = 0.01
end = 10.0
count = 5
"#;

    #[test]
    fn minimal_trajectory() {
        let s = Scenario::parse(MINIMAL).unwrap();
        let out = run(&s);
        assert_eq!(out.exit_code(), 0);
        let traj = out.artifacts.iter().find(|a| a.path == "trajectory.csv").unwrap();
        let mut lines = traj.contents.lines();
        assert_eq!(lines.next().unwrap(), "t,Lambda,gamma,Xi,coherence,eps_E_delta,eps_SE_delta");
        assert_eq!(lines.count(), 5);
        assert!(!traj.contents.contains('\r'));
    }

    #[test]
    fn absolute_energies_need_mode_density() {
        let text = format!("{MINIMAL}[energy]\nepsilon_env = 5.0\nmode_density = {{ kind = \"discrete\", frequencies = [] }}\n");
        let s = Scenario::parse(&text).unwrap();
        assert!(s.to_toml().contains("[energy"));
        let out = run(&s);
        let traj = out.artifacts.iter().find(|a| a.path == "trajectory.csv").unwrap();
        let mut lines = traj.contents.lines();
        assert!(lines.next().unwrap().ends_with(",eps_E_delta,eps_SE_delta,eps_E_abs,eps_SE_abs"));
        for l in lines {
            let v: Vec<f64> = l.split(',').map(|x| x.parse().unwrap()).collect();
            // no thermal modes, so eps_E(0) = eta_1 = 1
            assert!((v[7] - (1.0 + v[5])).abs() < 1e-14);
            assert!((v[7] + v[8] - 5.0).abs() < 1e-14);
        }
        let env_only = format!("{MINIMAL}[energy]\nepsilon_env = 5.0\n");
        let out = run(&Scenario::parse(&env_only).unwrap());
        let traj = out.artifacts.iter().find(|a| a.path == "trajectory.csv").unwrap();
        assert!(traj.contents.starts_with("t,Lambda,gamma,Xi,coherence,eps_E_delta,eps_SE_delta\n"));
        let bad = format!("{MINIMAL}[energy]\nmode_density = {{ kind = \"exponential\", scale = -1.0 }}\n");
        assert!(matches!(Scenario::parse(&bad), Err(Error::Config(_))));
    }

    #[test]
    fn effective_config_round_trips() {
        let s = Scenario::parse(MINIMAL).unwrap();
        let echo = s.to_toml();
        let again = Scenario::parse(&echo).unwrap();
        assert_eq!(s, again);
        assert_eq!(run(&s), run(&again));
    }

    #[test]
    fn unknown_key_is_a_config_error() {
        let text = MINIMAL.replace("alpha0 = 1.0", "alpha0 = 1.0\nalpha = 2.0");
        match Scenario::parse(&text) {
            Err(Error::Config(m)) => assert!(m.contains("alpha"), "{m}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn empty_analyses_rejected() {
        let text = MINIMAL.replace("[\"trajectory\"]", "[]");
        assert!(matches!(Scenario::parse(&text), Err(Error::Config(_))));
    }

    #[test]
    fn class_terms_resolve() {
        let text = r#"
analyses = ["regimes"]
[model]
class = "class1"
alpha0 = 2.5
log_power = 1.0
"#;
        let s = Scenario::parse(text).unwrap();
        assert_eq!(s.model.terms, Some(vec![[2.5, 1.0, 1.0]]));
        assert_eq!(s.model.alpha0, None);
        assert_eq!(Scenario::parse(&s.to_toml()).unwrap(), s);
    }
}
