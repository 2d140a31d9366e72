//! Scenario files: TOML with every block optional, plus `--set` overrides.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use lepra_core::analysis::{HeatmapSpec, SweepSpec};
use lepra_core::control::{
    ControlBounds, ControlFormula, ControlVector, DrugMask, FbsSettings, OptimalControlProblem,
    RelaxationSchedule, Weights, CONTROL_NAMES,
};
use lepra_core::effectiveness::{EfficacyProfile, HazardRatios};
use lepra_core::presets::{self, EFFICACY_LEVELS, HAZARD_RATIOS, SENSITIVITY_RANGES_RAW};
use lepra_core::sensitivity::{ConditionalMean, Output};
use lepra_core::{
    CytokineClearance, Error as CoreError, ParamName, ParameterRange, ParameterSet,
    SimulationConfig, State,
};
use serde::{Deserialize, Serialize};

/// A configuration problem, located by its key path.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub path: String,
    pub reason: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.reason)
    }
}

/// Raised for unreadable, unparsable or invalid configuration.
#[derive(Debug)]
pub struct ConfigError(pub Vec<Violation>);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let lines: Vec<String> = self.0.iter().map(|v| v.to_string()).collect();
        write!(f, "invalid configuration:\n  {}", lines.join("\n  "))
    }
}

impl std::error::Error for ConfigError {}

impl ConfigError {
    fn one(path: impl Into<String>, reason: impl Into<String>) -> Self {
        Self(vec![Violation {
            path: path.into(),
            reason: reason.into(),
        }])
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub params: ParamOverrides,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub simulation: Option<SimulationBlock>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepBlock>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub heatmap: Option<HeatmapBlock>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sensitivity: Option<SensitivityBlock>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub control: Option<ControlBlock>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub effectiveness: Option<EffectivenessBlock>,
}

/// Rates replacing the preset's values.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamOverrides {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub omega: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mu1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub y: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mu2: Option<f64>,
    /// Seven per-cytokine clearance rates, summed into `y`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cytokines: Option<[f64; 7]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulationBlock {
    pub t0: f64,
    pub tf: f64,
    pub step: f64,
    pub initial: [f64; 3],
}

impl Default for SimulationBlock {
    fn default() -> Self {
        Self {
            t0: 0.0,
            tf: 100.0,
            step: lepra_core::model::DEFAULT_STEP,
            initial: presets::THERAPY_INITIAL.to_array(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepBlock {
    pub param: ParamName,
    pub lo: f64,
    pub hi: f64,
    pub step: f64,
}

impl Default for SweepBlock {
    fn default() -> Self {
        Self {
            param: ParamName::Omega,
            lo: 0.0,
            hi: 0.25,
            step: 0.001,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HeatmapBlock {
    pub alpha: [f64; 2],
    pub gamma: [f64; 2],
    pub dims: [usize; 2],
    pub initial: [f64; 3],
    pub t_check: f64,
    pub step: f64,
}

impl Default for HeatmapBlock {
    fn default() -> Self {
        let d = HeatmapSpec::default();
        Self {
            alpha: [d.alpha.0, d.alpha.1],
            gamma: [d.gamma.0, d.gamma.1],
            dims: [d.dims.0, d.dims.1],
            initial: d.initial.to_array(),
            t_check: d.t_check,
            step: d.step,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RangeBlock {
    pub param: ParamName,
    pub lo: f64,
    pub hi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SensitivityBlock {
    pub n: usize,
    pub seed: Option<u64>,
    pub ranges: Vec<RangeBlock>,
    pub outputs: Vec<String>,
    /// Parameters to report; every sampled parameter when empty.
    pub params: Vec<ParamName>,
    /// Scatter probe time; the end of the horizon when absent.
    pub probe: Option<f64>,
    pub bins: Option<usize>,
    pub pair_bins: Option<usize>,
    pub mode: ConditionalMean,
    pub tf: f64,
    pub step: f64,
    pub initial: [f64; 3],
}

impl Default for SensitivityBlock {
    fn default() -> Self {
        Self {
            n: 1000,
            seed: None,
            ranges: SENSITIVITY_RANGES_RAW
                .iter()
                .map(|&(param, lo, hi)| RangeBlock { param, lo, hi })
                .collect(),
            outputs: vec!["S".into(), "I".into(), "B".into()],
            params: Vec::new(),
            probe: None,
            bins: None,
            pair_bins: None,
            mode: ConditionalMean::default(),
            tf: 60.0,
            step: 5e-4,
            initial: presets::THERAPY_INITIAL.to_array(),
        }
    }
}

/// Control maxima; absent entries keep the production-safe defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsBlock {
    pub d11: Option<f64>,
    pub d12: Option<f64>,
    pub d13: Option<f64>,
    pub d21: Option<f64>,
    pub d22: Option<f64>,
    pub d23: Option<f64>,
    pub d31: Option<f64>,
    pub d33: Option<f64>,
    pub c: Option<f64>,
}

impl BoundsBlock {
    fn as_array(&self) -> [Option<f64>; 9] {
        [
            self.d11, self.d12, self.d13, self.d21, self.d22, self.d23, self.d31, self.d33, self.c,
        ]
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightsBlock {
    pub p: Option<f64>,
    pub q: Option<f64>,
    pub r: Option<f64>,
    pub tc: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FbsBlock {
    pub max_iter: Option<usize>,
    pub tol: Option<f64>,
    pub relaxation: Option<f64>,
    pub step: Option<f64>,
    pub schedule: Option<String>,
    pub patience: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ControlBlock {
    pub mask: String,
    /// Masks for `compare`; the seven standard combinations when empty.
    pub masks: Vec<String>,
    pub horizon: f64,
    pub tau: f64,
    pub initial: [f64; 3],
    pub bounds: BoundsBlock,
    pub weights: WeightsBlock,
    pub fbs: FbsBlock,
    pub formula: ControlFormula,
}

impl Default for ControlBlock {
    fn default() -> Self {
        Self {
            mask: "mdt".into(),
            masks: Vec::new(),
            horizon: 100.0,
            tau: 0.0,
            initial: presets::THERAPY_INITIAL.to_array(),
            bounds: BoundsBlock::default(),
            weights: WeightsBlock::default(),
            fbs: FbsBlock::default(),
            formula: ControlFormula::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LevelBlock {
    pub name: String,
    pub base: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EffectivenessBlock {
    pub levels: Vec<LevelBlock>,
    pub hazard_ratios: HazardRatios,
    /// Clofazimine efficacy used at every level instead of the derived one.
    pub clofazimine: Option<f64>,
}

impl Default for EffectivenessBlock {
    fn default() -> Self {
        Self {
            levels: EFFICACY_LEVELS
                .iter()
                .map(|&(name, base)| LevelBlock {
                    name: name.into(),
                    base,
                })
                .collect(),
            hazard_ratios: HAZARD_RATIOS,
            clofazimine: None,
        }
    }
}

/// Reads `path` (if any), applies `--set` overrides and deserializes,
/// reporting the key path of the first type error.
pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<ScenarioConfig, ConfigError> {
    let mut table = match path {
        None => toml::Table::new(),
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| {
                ConfigError::one(p.display().to_string(), format!("unreadable: {e}"))
            })?;
            text.parse::<toml::Table>().map_err(|e| {
                ConfigError::one(p.display().to_string(), format!("not valid TOML: {e}"))
            })?
        }
    };
    for o in overrides {
        apply_override(&mut table, o)?;
    }
    serde_path_to_error::deserialize(toml::Value::Table(table)).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner().to_string();
        let reason = inner.lines().next().unwrap_or_default().to_string();
        ConfigError::one(if path == "." { "<root>".into() } else { path }, reason)
    })
}

fn apply_override(table: &mut toml::Table, spec: &str) -> Result<(), ConfigError> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| ConfigError::one(spec, "override must have the form key=value"))?;
    let key = key.trim();
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(ConfigError::one(key, "empty key segment"));
    }
    let value = format!("v = {}", raw.trim())
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.trim().to_string()));
    let (last, parents) = parts
        .split_last()
        .expect("split yields at least one segment");
    let mut cur = table;
    for (depth, p) in parents.iter().enumerate() {
        let entry = cur
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry.as_table_mut().ok_or_else(|| {
            ConfigError::one(
                parts[..=depth].join("."),
                "is not a table; cannot set a nested key",
            )
        })?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

/// Outcome of [`ScenarioConfig::check`].
#[derive(Debug, Default, Serialize)]
pub struct Report {
    pub violations: Vec<Violation>,
    pub warnings: Vec<String>,
}

impl Report {
    fn push(&mut self, path: impl Into<String>, reason: impl Into<String>) {
        self.violations.push(Violation {
            path: path.into(),
            reason: reason.into(),
        });
    }

    fn push_core(&mut self, block: &str, e: &CoreError) {
        match e {
            CoreError::InvalidParameter { name, reason } => {
                self.push(format!("{block}.{name}"), reason.clone())
            }
            other => self.push(block, other.to_string()),
        }
    }

    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

fn nonneg_state(a: [f64; 3]) -> bool {
    a.iter().all(|v| v.is_finite() && *v >= 0.0)
}

impl ScenarioConfig {
    pub fn preset_name<'a>(&'a self, fallback: &'a str) -> &'a str {
        self.preset.as_deref().unwrap_or(fallback)
    }

    /// The preset with `[params]` applied.
    pub fn params(&self, fallback_preset: &str) -> Result<ParameterSet, ConfigError> {
        let name = self.preset_name(fallback_preset);
        let mut p = presets::by_name(name).ok_or_else(|| {
            ConfigError::one(
                "preset",
                format!(
                    "unknown preset `{name}`; expected one of {:?}",
                    presets::PRESET_NAMES
                ),
            )
        })?;
        let o = &self.params;
        let scalar = [
            (ParamName::Omega, o.omega),
            (ParamName::Beta, o.beta),
            (ParamName::Gamma, o.gamma),
            (ParamName::Mu1, o.mu1),
            (ParamName::Delta, o.delta),
            (ParamName::Alpha, o.alpha),
            (ParamName::Y, o.y),
            (ParamName::Mu2, o.mu2),
        ];
        for (name, v) in scalar {
            if let Some(v) = v {
                p.set(name, v);
            }
        }
        if let Some(d) = o.cytokines {
            if o.y.is_some() {
                return Err(ConfigError::one(
                    "params.cytokines",
                    "give either `y` or `cytokines`, not both",
                ));
            }
            p.clearance = CytokineClearance::Individual(d);
        }
        Ok(p)
    }

    pub fn simulation(&self) -> SimulationBlock {
        self.simulation.clone().unwrap_or_default()
    }

    pub fn sweep(&self) -> SweepSpec {
        let b = self.sweep.clone().unwrap_or_default();
        SweepSpec {
            param: b.param,
            lo: b.lo,
            hi: b.hi,
            step: b.step,
        }
    }

    pub fn heatmap(&self) -> HeatmapSpec {
        let b = self.heatmap.clone().unwrap_or_default();
        HeatmapSpec {
            alpha: (b.alpha[0], b.alpha[1]),
            gamma: (b.gamma[0], b.gamma[1]),
            dims: (b.dims[0], b.dims[1]),
            initial: State::from_array(b.initial),
            t_check: b.t_check,
            step: b.step,
        }
    }

    pub fn sensitivity(&self) -> SensitivityBlock {
        self.sensitivity.clone().unwrap_or_default()
    }

    /// Sampling seed: the block's own, then the top-level one, then 0.
    pub fn sensitivity_seed(&self) -> u64 {
        self.sensitivity().seed.or(self.seed).unwrap_or(0)
    }

    pub fn ranges(&self) -> Result<Vec<ParameterRange>, ConfigError> {
        self.sensitivity()
            .ranges
            .iter()
            .enumerate()
            .map(|(k, r)| {
                ParameterRange::new(r.param, r.lo, r.hi).map_err(|e| {
                    ConfigError::one(format!("sensitivity.ranges[{k}]"), e.to_string())
                })
            })
            .collect()
    }

    pub fn outputs(&self) -> Result<Vec<Output>, ConfigError> {
        self.sensitivity()
            .outputs
            .iter()
            .enumerate()
            .map(|(k, s)| {
                Output::from_str(s).map_err(|e| {
                    ConfigError::one(format!("sensitivity.outputs[{k}]"), e.to_string())
                })
            })
            .collect()
    }

    pub fn control(&self) -> ControlBlock {
        self.control.clone().unwrap_or_default()
    }

    pub fn mask(&self) -> Result<DrugMask, ConfigError> {
        let c = self.control();
        DrugMask::from_str(&c.mask).map_err(|e| ConfigError::one("control.mask", e.to_string()))
    }

    pub fn masks(&self) -> Result<Vec<DrugMask>, ConfigError> {
        let c = self.control();
        if c.masks.is_empty() {
            return Ok(DrugMask::STANDARD.to_vec());
        }
        c.masks
            .iter()
            .enumerate()
            .map(|(k, m)| {
                DrugMask::from_str(m)
                    .map_err(|e| ConfigError::one(format!("control.masks[{k}]"), e.to_string()))
            })
            .collect()
    }

    /// The control problem for `mask`, not yet validated.
    pub fn problem(
        &self,
        params: ParameterSet,
        mask: DrugMask,
    ) -> Result<OptimalControlProblem, ConfigError> {
        let c = self.control();
        let mut bounds = ControlBounds::production_safe(params.alpha);
        let mut max = bounds.max.to_array();
        for (k, v) in c.bounds.as_array().into_iter().enumerate() {
            if let Some(v) = v {
                max[k] = v;
            }
        }
        bounds.max = ControlVector::from_array(max);
        let d = Weights::default();
        let w = &c.weights;
        let weights = Weights {
            p: w.p.unwrap_or(d.p),
            q: w.q.unwrap_or(d.q),
            r: w.r.unwrap_or(d.r),
            tc: w.tc.unwrap_or(d.tc),
        };
        let d = FbsSettings::default();
        let f = &c.fbs;
        let schedule = match f.schedule.as_deref() {
            None => d.schedule,
            Some("halving") => RelaxationSchedule::Halving,
            Some("fixed") => RelaxationSchedule::Fixed,
            Some(other) => {
                return Err(ConfigError::one(
                    "control.fbs.schedule",
                    format!("unknown schedule `{other}`; expected `halving` or `fixed`"),
                ))
            }
        };
        let fbs = FbsSettings {
            max_iter: f.max_iter.unwrap_or(d.max_iter),
            tol: f.tol.unwrap_or(d.tol),
            relaxation: f.relaxation.unwrap_or(d.relaxation),
            step: f.step.unwrap_or(d.step),
            schedule,
            patience: f.patience.unwrap_or(d.patience),
        };
        Ok(OptimalControlProblem {
            params,
            weights,
            mask,
            bounds,
            initial: State::from_array(c.initial),
            horizon: c.horizon,
            tau: c.tau,
            fbs,
            formula: c.formula,
        })
    }

    pub fn effectiveness(&self) -> EffectivenessBlock {
        self.effectiveness.clone().unwrap_or_default()
    }

    /// Full validation without running anything. Every block is checked,
    /// with defaults standing in for absent ones.
    pub fn check(&self, fallback_preset: &str) -> Report {
        let mut r = Report::default();
        let params = match self.params(fallback_preset) {
            Ok(p) => {
                let bad = p.violations();
                let clean = bad.is_empty();
                for (name, reason) in bad {
                    r.push(format!("params.{name}"), reason);
                }
                clean.then_some(p)
            }
            Err(ConfigError(v)) => {
                r.violations.extend(v);
                None
            }
        };

        let s = self.simulation();
        if !(s.t0.is_finite() && s.tf.is_finite()) || s.tf < s.t0 {
            r.push(
                "simulation.tf",
                format!("must be finite and >= t0 ({}), got {}", s.t0, s.tf),
            );
        }
        if !(s.step.is_finite() && s.step > 0.0) {
            r.push("simulation.step", format!("must be > 0, got {}", s.step));
        }
        if !nonneg_state(s.initial) {
            r.push(
                "simulation.initial",
                format!("must be finite and >= 0, got {:?}", s.initial),
            );
        }

        let sw = self.sweep();
        if !(sw.lo.is_finite() && sw.hi.is_finite() && sw.lo < sw.hi) {
            r.push(
                "sweep.hi",
                format!("need finite lo < hi, got [{}, {}]", sw.lo, sw.hi),
            );
        }
        if !(sw.step.is_finite() && sw.step > 0.0) {
            r.push("sweep.step", format!("must be > 0, got {}", sw.step));
        }
        if sw.lo < 0.0 {
            r.push("sweep.lo", format!("rates must be >= 0, got {}", sw.lo));
        }

        let h = self.heatmap();
        for (key, (lo, hi)) in [("heatmap.alpha", h.alpha), ("heatmap.gamma", h.gamma)] {
            if !(lo.is_finite() && hi.is_finite() && 0.0 <= lo && lo <= hi) {
                r.push(key, format!("need 0 <= lo <= hi, got [{lo}, {hi}]"));
            }
        }
        if h.dims.0 == 0 || h.dims.1 == 0 {
            r.push("heatmap.dims", "both dimensions must be >= 1");
        }
        if !(h.step.is_finite() && h.step > 0.0 && h.t_check.is_finite() && h.t_check > 0.0) {
            r.push("heatmap.step", "step and t_check must be > 0");
        }
        if !nonneg_state(h.initial.to_array()) {
            r.push("heatmap.initial", "must be finite and >= 0");
        }

        let sens = self.sensitivity();
        if sens.n < 2 {
            r.push(
                "sensitivity.n",
                format!("need at least 2 samples, got {}", sens.n),
            );
        }
        if sens.ranges.is_empty() {
            r.push("sensitivity.ranges", "at least one range is required");
        }
        for (k, range) in sens.ranges.iter().enumerate() {
            match ParameterRange::new(range.param, range.lo, range.hi) {
                Ok(_) if range.lo > range.hi => r.warnings.push(format!(
                    "sensitivity.ranges[{k}] ({}): bounds given as [{}, {}]; using [{}, {}]",
                    range.param, range.lo, range.hi, range.hi, range.lo
                )),
                Ok(_) => {}
                Err(e) => r.push(format!("sensitivity.ranges[{k}]"), e.to_string()),
            }
        }
        if let Err(ConfigError(v)) = self.outputs() {
            r.violations.extend(v);
        }
        let sampled: Vec<ParamName> = sens.ranges.iter().map(|x| x.param).collect();
        for (k, p) in sens.params.iter().enumerate() {
            if !sampled.contains(p) {
                r.push(
                    format!("sensitivity.params[{k}]"),
                    format!("`{p}` has no sampling range"),
                );
            }
        }
        for (key, b) in [
            ("sensitivity.bins", sens.bins),
            ("sensitivity.pair_bins", sens.pair_bins),
        ] {
            if b.is_some_and(|b| b < 2) {
                r.push(key, "need at least 2 bins");
            }
        }
        if !(sens.tf.is_finite()
            && sens.tf > 0.0
            && sens.step.is_finite()
            && sens.step > 0.0
            && sens.step <= sens.tf)
        {
            r.push(
                "sensitivity.step",
                format!(
                    "need 0 < step <= tf, got step {} and tf {}",
                    sens.step, sens.tf
                ),
            );
        }
        if sens.probe.is_some_and(|t| !(0.0..=sens.tf).contains(&t)) {
            r.push("sensitivity.probe", format!("must lie in [0, {}]", sens.tf));
        }
        if !nonneg_state(sens.initial) {
            r.push("sensitivity.initial", "must be finite and >= 0");
        }

        match (self.mask(), self.masks()) {
            (Ok(mask), Ok(masks)) => {
                if let Some(p) = params {
                    let mut all = vec![mask];
                    all.extend(masks.into_iter().filter(|m| *m != mask));
                    for m in all {
                        match self.problem(p, m) {
                            Ok(prob) => {
                                if let Err(e) = prob.validate() {
                                    let block = format!("control ({})", m.label());
                                    r.push_core(&block, &e);
                                }
                            }
                            Err(ConfigError(v)) => {
                                r.violations.extend(v);
                                break;
                            }
                        }
                    }
                }
            }
            (a, b) => {
                for e in [a.err(), b.err()].into_iter().flatten() {
                    r.violations.extend(e.0);
                }
            }
        }
        for (k, v) in self.control().bounds.as_array().into_iter().enumerate() {
            if v.is_some_and(|v| !(v.is_finite() && v >= 0.0)) {
                r.push(
                    format!("control.bounds.{}", CONTROL_NAMES[k]),
                    "must be finite and >= 0",
                );
            }
        }

        let eff = self.effectiveness();
        if eff.levels.is_empty() {
            r.push("effectiveness.levels", "at least one level is required");
        }
        for (k, l) in eff.levels.iter().enumerate() {
            if !(0.0..1.0).contains(&l.base) {
                r.push(
                    format!("effectiveness.levels[{k}].base"),
                    format!("must lie in [0, 1), got {}", l.base),
                );
            }
        }
        for (name, v) in [
            ("rifampin", eff.hazard_ratios.rifampin),
            ("dapsone", eff.hazard_ratios.dapsone),
            ("clofazimine", eff.hazard_ratios.clofazimine),
        ] {
            if !(v.is_finite() && v > 0.0) {
                r.push(
                    format!("effectiveness.hazard_ratios.{name}"),
                    format!("must be > 0, got {v}"),
                );
            }
        }
        if let Some(c) = eff.clofazimine {
            if let Err(e) = EfficacyProfile::new(0.0, 0.0, c) {
                r.push("effectiveness.clofazimine", e.to_string());
            }
        }
        r
    }
}

/// Converts a simulation block into a core config (zero horizons allowed by the caller).
pub fn simulation_config(b: &SimulationBlock) -> SimulationConfig {
    SimulationConfig::new(b.t0, b.tf, b.step, State::from_array(b.initial))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str, overrides: &[&str]) -> Result<ScenarioConfig, ConfigError> {
        let dir = std::env::temp_dir().join(format!("lepra-cfg-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join(format!("{:x}.toml", text.len() * 31 + overrides.len()));
        std::fs::write(&path, text).unwrap();
        let o: Vec<String> = overrides.iter().map(|s| s.to_string()).collect();
        load(Some(&path), &o)
    }

    #[test]
    fn empty_config_uses_defaults() {
        let c = load(None, &[]).unwrap();
        assert_eq!(c, ScenarioConfig::default());
        assert_eq!(c.params("table1").unwrap(), presets::table1());
        assert!(c.check("table1").is_valid());
    }

    #[test]
    fn unknown_keys_are_rejected_with_their_path() {
        let e = parse("[params]\nbetta = 1.0\n", &[]).unwrap_err();
        assert!(e.0[0].path.starts_with("params"), "{}", e.0[0].path);
        assert!(e.0[0].reason.contains("betta"), "{}", e.0[0].reason);
        let e = parse("[control.fbs]\ntol = \"small\"\n", &[]).unwrap_err();
        assert_eq!(e.0[0].path, "control.fbs.tol");
    }

    #[test]
    fn overrides_reach_nested_keys() {
        let c = parse(
            "preset = \"table2\"\n",
            &["params.beta=0.5", "control.mask=rifampin+steroid", "seed=9"],
        )
        .unwrap();
        assert_eq!(c.params("table1").unwrap().beta, 0.5);
        assert_eq!(c.mask().unwrap(), DrugMask::new(true, false, false, true));
        assert_eq!(c.seed, Some(9));
        assert!(load(None, &["params.beta".into()]).is_err());
        assert!(load(None, &["seed.x=1".into(), "seed=2".into()]).is_ok());
        assert!(load(None, &["seed=2".into(), "seed.x=1".into()]).is_err());
    }

    #[test]
    fn negative_rate_names_the_parameter() {
        let c = load(None, &["params.beta=-1".into()]).unwrap();
        let r = c.check("table1");
        assert_eq!(r.violations.len(), 1, "{:?}", r.violations);
        assert_eq!(r.violations[0].path, "params.beta");
    }

    #[test]
    fn reversed_range_is_a_warning() {
        let r = ScenarioConfig::default().check("table1");
        assert!(r.is_valid());
        assert_eq!(r.warnings.len(), 1);
        assert!(r.warnings[0].contains("(y)"));
    }

    #[test]
    fn unsafe_bounds_are_violations() {
        let c = load(None, &["control.bounds.d33=1.0".into()]).unwrap();
        let r = c.check("table3");
        assert!(r
            .violations
            .iter()
            .any(|v| v.reason.contains("negative bacterial production")));
    }
}
