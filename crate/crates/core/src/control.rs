//! Multi-drug therapy as an optimal control problem.
//!
//! Controls: rifampin `d11, d12, d13`, dapsone `d21, d22, d23`, clofazimine
//! `d31, d33` and an optional steroid `c`. MDT controls may act with a delay
//! `tau`; the steroid always acts immediately.
//!
//! ```text
//! dS/dt = ω − βSB − γS − μ1·S − d11·S − d21·S + d31·S + c·S
//! dI/dt = βSB − δI − μ1·I − d12·I − d22·I
//! dB/dt = (α − d23² − d33)·I − yB − μ2·B − d13²·B
//! ```
//!
//! The solver minimizes `∫ I + B + P(d11²+d12²+d13³) + Q(d21²+d22²+d23³)
//! + R(d31²+d33²) + tc·c² dt` with a forward-backward sweep.

use std::fmt;
use std::io::{self, Write};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};
use crate::model::{fmt_f64, grid_steps, ParameterSet, State, StateRate, Trajectory};
use crate::ode::rk4_step;
use crate::presets;

pub const CONTROL_NAMES: [&str; 9] = ["d11", "d12", "d13", "d21", "d22", "d23", "d31", "d33", "c"];

/// Drug intensities (1/day) at one instant. There is no `d32`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ControlVector {
    pub d11: f64,
    pub d12: f64,
    pub d13: f64,
    pub d21: f64,
    pub d22: f64,
    pub d23: f64,
    pub d31: f64,
    pub d33: f64,
    pub c: f64,
}

impl ControlVector {
    pub const ZERO: ControlVector = ControlVector::uniform(0.0);

    pub const fn uniform(v: f64) -> Self {
        Self {
            d11: v,
            d12: v,
            d13: v,
            d21: v,
            d22: v,
            d23: v,
            d31: v,
            d33: v,
            c: v,
        }
    }

    pub fn to_array(self) -> [f64; 9] {
        [
            self.d11, self.d12, self.d13, self.d21, self.d22, self.d23, self.d31, self.d33, self.c,
        ]
    }

    pub fn from_array(a: [f64; 9]) -> Self {
        let [d11, d12, d13, d21, d22, d23, d31, d33, c] = a;
        Self {
            d11,
            d12,
            d13,
            d21,
            d22,
            d23,
            d31,
            d33,
            c,
        }
    }

    fn zip(self, other: Self, f: impl Fn(f64, f64) -> f64) -> Self {
        let (a, b) = (self.to_array(), other.to_array());
        Self::from_array(std::array::from_fn(|k| f(a[k], b[k])))
    }

    pub fn midpoint(self, other: Self) -> Self {
        self.zip(other, |a, b| 0.5 * (a + b))
    }

    /// The eight MDT components with `c` zeroed.
    pub fn mdt_part(self) -> Self {
        Self { c: 0.0, ..self }
    }

    /// Errors on the first component outside `[0, max]`.
    pub fn check(&self, bounds: &ControlBounds) -> Result<()> {
        let (u, m) = (self.to_array(), bounds.max.to_array());
        for k in 0..9 {
            if !(u[k] >= 0.0 && u[k] <= m[k]) {
                return Err(Error::ControlBound {
                    name: CONTROL_NAMES[k],
                    value: u[k],
                    max: m[k],
                });
            }
        }
        Ok(())
    }
}

/// Per-control maxima.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlBounds {
    pub max: ControlVector,
}

impl ControlBounds {
    pub const fn uniform(v: f64) -> Self {
        Self {
            max: ControlVector::uniform(v),
        }
    }

    /// Maxima of 1.0 except `d23` and `d33`, which share the production rate
    /// `α` evenly (`d23max² = d33max = α/2`) so that `α − d23² − d33 ≥ 0`.
    pub fn production_safe(alpha: f64) -> Self {
        let mut b = Self::uniform(1.0);
        let half = (0.5 * alpha).clamp(0.0, 1.0);
        b.max.d23 = half.sqrt();
        b.max.d33 = half;
        b
    }

    /// Smallest bacterial production coefficient `α − d23max² − d33max`
    /// reachable under these bounds.
    pub fn min_production(&self, alpha: f64) -> f64 {
        alpha - self.max.d23 * self.max.d23 - self.max.d33
    }

    /// Maxima of disabled drugs forced to 0.
    pub fn masked(&self, mask: &DrugMask) -> Self {
        let m = self.max.to_array();
        Self {
            max: ControlVector::from_array(std::array::from_fn(|k| {
                if mask.enables(k) {
                    m[k]
                } else {
                    0.0
                }
            })),
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (k, v) in self.max.to_array().into_iter().enumerate() {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidParameter {
                    name: format!("bounds.{}", CONTROL_NAMES[k]),
                    reason: format!("maximum must be finite and >= 0, got {v}"),
                });
            }
        }
        Ok(())
    }
}

/// Which drugs are administered.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct DrugMask {
    pub rifampin: bool,
    pub dapsone: bool,
    pub clofazimine: bool,
    pub steroid: bool,
}

impl DrugMask {
    pub const NONE: DrugMask = DrugMask::new(false, false, false, false);
    pub const MDT: DrugMask = DrugMask::new(true, true, true, false);

    pub const fn new(rifampin: bool, dapsone: bool, clofazimine: bool, steroid: bool) -> Self {
        Self {
            rifampin,
            dapsone,
            clofazimine,
            steroid,
        }
    }

    /// Singles, pairs and MDT in table order.
    pub const STANDARD: [DrugMask; 7] = [
        DrugMask::new(true, false, false, false),
        DrugMask::new(false, true, false, false),
        DrugMask::new(false, false, true, false),
        DrugMask::new(true, true, false, false),
        DrugMask::new(true, false, true, false),
        DrugMask::new(false, true, true, false),
        DrugMask::MDT,
    ];

    pub fn with_steroid(self) -> Self {
        Self {
            steroid: true,
            ..self
        }
    }

    /// Whether control `k` (in [`CONTROL_NAMES`] order) is enabled.
    pub fn enables(&self, k: usize) -> bool {
        match k {
            0..=2 => self.rifampin,
            3..=5 => self.dapsone,
            6 | 7 => self.clofazimine,
            8 => self.steroid,
            _ => false,
        }
    }

    pub fn label(&self) -> String {
        let drugs = if self.rifampin && self.dapsone && self.clofazimine {
            vec!["MDT"]
        } else {
            [
                (self.rifampin, "rifampin"),
                (self.dapsone, "dapsone"),
                (self.clofazimine, "clofazimine"),
            ]
            .into_iter()
            .filter_map(|(on, n)| on.then_some(n))
            .collect()
        };
        let mut parts = drugs;
        if self.steroid {
            parts.push("steroid");
        }
        if parts.is_empty() {
            "none".into()
        } else {
            parts.join("+")
        }
    }
}

impl fmt::Display for DrugMask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

impl FromStr for DrugMask {
    type Err = Error;

    /// `+`-separated drug names, e.g. `rifampin+dapsone`, `mdt+steroid`, `none`.
    fn from_str(s: &str) -> Result<Self> {
        let mut m = DrugMask::NONE;
        let s = s.trim();
        if s.is_empty() || s.eq_ignore_ascii_case("none") {
            return Ok(m);
        }
        for part in s.split('+') {
            match part.trim().to_ascii_lowercase().as_str() {
                "rifampin" | "rif" => m.rifampin = true,
                "dapsone" | "dap" => m.dapsone = true,
                "clofazimine" | "clo" => m.clofazimine = true,
                "steroid" | "ster" => m.steroid = true,
                "mdt" => {
                    m.rifampin = true;
                    m.dapsone = true;
                    m.clofazimine = true;
                }
                other => return Err(Error::UnknownName(other.to_string())),
            }
        }
        Ok(m)
    }
}

/// Cost weights of the rifampin (`p`), dapsone (`q`), clofazimine (`r`) and steroid (`tc`) terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Weights {
    pub p: f64,
    pub q: f64,
    pub r: f64,
    pub tc: f64,
}

impl Default for Weights {
    fn default() -> Self {
        Self {
            p: 1.0,
            q: 1.99,
            r: 7.1,
            tc: 6.4230,
        }
    }
}

impl Weights {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("p", self.p), ("q", self.q), ("r", self.r), ("tc", self.tc)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParameter {
                    name: format!("weights.{name}"),
                    reason: format!("must be finite and > 0, got {v}"),
                });
            }
        }
        Ok(())
    }
}

/// Pointwise control characterization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControlFormula {
    /// Stationary point of the Hamiltonian in each control.
    #[default]
    Stationary,
    /// The formulas as originally tabulated: `d13 = 2Iλ3/3P`, `d23 = 2Bλ3/3Q`,
    /// `d33 = Iλ2/2R`, `c = Sλ1/2tc`. Kept for side-by-side comparison.
    Printed,
}

/// How the update weight evolves over the sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum RelaxationSchedule {
    /// Constant weight.
    Fixed,
    /// Halve the weight whenever the control change has not reached a new
    /// minimum for `patience` iterations. Damps the two-cycles that arise
    /// when the controls alternately eradicate and release the infection.
    #[default]
    Halving,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FbsSettings {
    pub max_iter: usize,
    /// Bound on the largest per-control relative L1 change between iterations.
    pub tol: f64,
    /// Weight of the new candidate in the control update.
    pub relaxation: f64,
    pub step: f64,
    #[serde(default)]
    pub schedule: RelaxationSchedule,
    #[serde(default = "default_patience")]
    pub patience: usize,
}

fn default_patience() -> usize {
    10
}

impl Default for FbsSettings {
    fn default() -> Self {
        Self {
            max_iter: 200,
            tol: 1e-3,
            relaxation: 0.5,
            step: 0.1,
            schedule: RelaxationSchedule::Halving,
            patience: default_patience(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct AdjointState {
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
}

impl AdjointState {
    pub const ZERO: AdjointState = AdjointState::new(0.0, 0.0, 0.0);

    pub const fn new(lambda1: f64, lambda2: f64, lambda3: f64) -> Self {
        Self {
            lambda1,
            lambda2,
            lambda3,
        }
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.lambda1, self.lambda2, self.lambda3]
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        Self::new(a[0], a[1], a[2])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimalControlProblem {
    pub params: ParameterSet,
    pub weights: Weights,
    pub mask: DrugMask,
    pub bounds: ControlBounds,
    pub initial: State,
    pub horizon: f64,
    /// Delay of the MDT controls in days. Values at or beyond the horizon
    /// leave only the steroid active.
    pub tau: f64,
    pub fbs: FbsSettings,
    pub formula: ControlFormula,
}

impl OptimalControlProblem {
    /// The drug-therapy setup: Table 3 rates, initial (520, 275, 250), 100 days.
    pub fn therapy(mask: DrugMask) -> Self {
        Self {
            params: presets::table3(),
            weights: Weights::default(),
            mask,
            bounds: ControlBounds::production_safe(presets::table3().alpha),
            initial: presets::THERAPY_INITIAL,
            horizon: 100.0,
            tau: 0.0,
            fbs: FbsSettings::default(),
            formula: ControlFormula::Stationary,
        }
    }

    pub fn with_mask(self, mask: DrugMask) -> Self {
        Self { mask, ..self }
    }

    pub fn n_steps(&self) -> usize {
        grid_steps(self.horizon, self.fbs.step)
    }

    /// Grid points covered by the delay.
    pub fn delay_steps(&self) -> usize {
        grid_steps(self.tau, self.fbs.step)
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        self.weights.validate()?;
        self.bounds.validate()?;
        let production = self
            .bounds
            .masked(&self.mask)
            .min_production(self.params.alpha);
        if production < -1e-12 {
            return Err(Error::InvalidConfig(format!(
                "bounds allow negative bacterial production: α − d23max² − d33max = {production}"
            )));
        }
        ensure_finite("initial state", &self.initial.to_array())?;
        if !self.initial.is_nonnegative() {
            return Err(Error::InvalidConfig(format!(
                "initial state must be nonnegative, got {:?}",
                self.initial
            )));
        }
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "horizon must be > 0, got {}",
                self.horizon
            )));
        }
        if !(self.tau.is_finite() && self.tau >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "tau must be >= 0, got {}",
                self.tau
            )));
        }
        let FbsSettings {
            max_iter,
            tol,
            relaxation,
            step,
            patience,
            ..
        } = self.fbs;
        if patience == 0 {
            return Err(Error::InvalidConfig("fbs.patience must be >= 1".into()));
        }
        if max_iter == 0 {
            return Err(Error::InvalidConfig("fbs.max_iter must be >= 1".into()));
        }
        if !(tol.is_finite() && tol > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "fbs.tol must be > 0, got {tol}"
            )));
        }
        if !(relaxation > 0.0 && relaxation <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "fbs.relaxation must lie in (0, 1], got {relaxation}"
            )));
        }
        if !(step.is_finite() && step > 0.0 && step <= self.horizon) {
            return Err(Error::InvalidConfig(format!(
                "fbs.step must lie in (0, horizon], got {step}"
            )));
        }
        let k = self.tau / step;
        if (k - k.round()).abs() > 1e-9 * k.max(1.0) {
            return Err(Error::InvalidConfig(format!(
                "tau {} must be a multiple of the step {step}",
                self.tau
            )));
        }
        Ok(())
    }
}

/// Controls on a time grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlSchedule {
    pub times: Vec<f64>,
    pub controls: Vec<ControlVector>,
}

impl ControlSchedule {
    pub fn zeros(times: Vec<f64>) -> Self {
        let controls = vec![ControlVector::ZERO; times.len()];
        Self { times, controls }
    }

    pub fn len(&self) -> usize {
        self.controls.len()
    }

    pub fn is_empty(&self) -> bool {
        self.controls.is_empty()
    }

    pub fn check(&self, bounds: &ControlBounds) -> Result<()> {
        self.controls.iter().try_for_each(|u| u.check(bounds))
    }

    /// Controls acting on the dynamics when MDT decisions take effect
    /// `shift` grid points later; the steroid is not shifted.
    pub fn applied(&self, shift: usize) -> ControlSchedule {
        let controls = (0..self.controls.len())
            .map(|k| {
                let mdt = if k >= shift {
                    self.controls[k - shift].mdt_part()
                } else {
                    ControlVector::ZERO
                };
                ControlVector {
                    c: self.controls[k].c,
                    ..mdt
                }
            })
            .collect();
        ControlSchedule {
            times: self.times.clone(),
            controls,
        }
    }
}

/// Controlled vector field without checks.
#[inline]
fn controlled_field(p: &ParameterSet, y: f64, x: &[f64; 3], u: &ControlVector) -> [f64; 3] {
    let [s, i, b] = *x;
    let infection = p.beta * s * b;
    [
        p.omega - infection - p.gamma * s - p.mu1 * s - u.d11 * s - u.d21 * s + u.d31 * s + u.c * s,
        infection - p.delta * i - p.mu1 * i - u.d12 * i - u.d22 * i,
        (p.alpha - u.d23 * u.d23 - u.d33) * i - y * b - p.mu2 * b - u.d13 * u.d13 * b,
    ]
}

/// The controlled right-hand side. `u` is the control acting at this instant.
pub fn controlled_derivative(
    params: &ParameterSet,
    state: State,
    u: &ControlVector,
    bounds: &ControlBounds,
) -> Result<StateRate> {
    params.validate()?;
    ensure_finite("state", &state.to_array())?;
    u.check(bounds)?;
    Ok(StateRate::from_array(controlled_field(
        params,
        params.y(),
        &state.to_array(),
        u,
    )))
}

/// Integrand of the cost functional.
pub fn running_cost(state: State, u: &ControlVector, w: &Weights) -> f64 {
    state.i
        + state.b
        + w.p * (u.d11 * u.d11 + u.d12 * u.d12 + u.d13.powi(3))
        + w.q * (u.d21 * u.d21 + u.d22 * u.d22 + u.d23.powi(3))
        + w.r * (u.d31 * u.d31 + u.d33 * u.d33)
        + w.tc * u.c * u.c
}

pub fn hamiltonian(
    params: &ParameterSet,
    state: State,
    u: &ControlVector,
    lam: AdjointState,
    w: &Weights,
) -> f64 {
    let f = controlled_field(params, params.y(), &state.to_array(), u);
    running_cost(state, u, w) + lam.lambda1 * f[0] + lam.lambda2 * f[1] + lam.lambda3 * f[2]
}

/// `J` by the trapezoidal rule. `schedule` holds decisions; MDT decisions
/// act `tau` later and contribute nothing before `tau`.
pub fn cost(
    states: &Trajectory,
    schedule: &ControlSchedule,
    weights: &Weights,
    tau: f64,
) -> Result<f64> {
    if states.len() != schedule.len() {
        return Err(Error::GridMismatch(format!(
            "{} states vs {} controls",
            states.len(),
            schedule.len()
        )));
    }
    if states
        .times
        .iter()
        .zip(&schedule.times)
        .any(|(a, b)| (a - b).abs() > 1e-9 * states.step)
    {
        return Err(Error::GridMismatch("state and control times differ".into()));
    }
    if tau < 0.0 {
        return Err(Error::InvalidConfig(format!("tau must be >= 0, got {tau}")));
    }
    Ok(trapezoid(
        states,
        &schedule.applied(grid_steps(tau, states.step)),
        weights,
    ))
}

fn trapezoid(states: &Trajectory, applied: &ControlSchedule, weights: &Weights) -> f64 {
    let vals: Vec<f64> = states
        .states
        .iter()
        .zip(&applied.controls)
        .map(|(x, u)| running_cost(*x, u, weights))
        .collect();
    states
        .times
        .windows(2)
        .zip(vals.windows(2))
        .map(|(t, v)| 0.5 * (t[1] - t[0]) * (v[0] + v[1]))
        .sum()
}

#[inline]
fn adjoint_field(
    p: &ParameterSet,
    y: f64,
    x: &[f64; 3],
    u: &ControlVector,
    lam: &[f64; 3],
) -> [f64; 3] {
    let [s, _, b] = *x;
    let [l1, l2, l3] = *lam;
    [
        (p.beta * b + p.mu1 + p.gamma + u.d11 + u.d21 - u.d31 - u.c) * l1 - p.beta * b * l2,
        (p.mu1 + p.delta + u.d12 + u.d22) * l2 - (p.alpha - u.d23 * u.d23 - u.d33) * l3 - 1.0,
        p.beta * s * l1 - p.beta * s * l2 + (y + p.mu2 + u.d13 * u.d13) * l3 - 1.0,
    ]
}

/// Costate rates `−∂H/∂(S, I, B)`.
pub fn adjoint_derivative(
    params: &ParameterSet,
    state: State,
    u: &ControlVector,
    lam: AdjointState,
) -> [f64; 3] {
    adjoint_field(params, params.y(), &state.to_array(), u, &lam.to_array())
}

/// Pointwise minimizer of the Hamiltonian, clamped to the (masked) bounds.
pub fn optimal_controls(
    state: State,
    lam: AdjointState,
    weights: &Weights,
    bounds: &ControlBounds,
    mask: &DrugMask,
    formula: ControlFormula,
) -> ControlVector {
    let State { s, i, b } = state;
    let AdjointState {
        lambda1: l1,
        lambda2: l2,
        lambda3: l3,
    } = lam;
    let Weights { p, q, r, tc } = *weights;
    let raw = match formula {
        ControlFormula::Stationary => [
            s * l1 / (2.0 * p),
            i * l2 / (2.0 * p),
            2.0 * b * l3 / (3.0 * p),
            s * l1 / (2.0 * q),
            i * l2 / (2.0 * q),
            2.0 * i * l3 / (3.0 * q),
            -s * l1 / (2.0 * r),
            i * l3 / (2.0 * r),
            -s * l1 / (2.0 * tc),
        ],
        ControlFormula::Printed => [
            s * l1 / (2.0 * p),
            i * l2 / (2.0 * p),
            2.0 * i * l3 / (3.0 * p),
            s * l1 / (2.0 * q),
            i * l2 / (2.0 * q),
            2.0 * b * l3 / (3.0 * q),
            -s * l1 / (2.0 * r),
            i * l2 / (2.0 * r),
            s * l1 / (2.0 * tc),
        ],
    };
    let max = bounds.masked(mask).max.to_array();
    ControlVector::from_array(std::array::from_fn(|k| {
        if max[k] > 0.0 {
            raw[k].max(0.0).min(max[k])
        } else {
            0.0
        }
    }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveResult {
    pub mask: DrugMask,
    /// Decisions per grid point; MDT entries act `tau` later.
    pub schedule: ControlSchedule,
    pub states: Trajectory,
    pub adjoints: Vec<AdjointState>,
    pub cost: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Relative control change of the last iteration.
    pub last_change: f64,
    pub averages: State,
    pub tau: f64,
}

impl SolveResult {
    /// Controls acting on the dynamics at each grid point.
    pub fn applied_schedule(&self) -> ControlSchedule {
        self.schedule
            .applied(grid_steps(self.tau, self.states.step))
    }

    /// `t,S,I,B,d11,...,d33,c` rows with the applied controls.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "t,S,I,B,{}", CONTROL_NAMES.join(","))?;
        let applied = self.applied_schedule();
        for ((t, x), u) in self
            .states
            .times
            .iter()
            .zip(&self.states.states)
            .zip(&applied.controls)
        {
            let mut row = vec![fmt_f64(*t), fmt_f64(x.s), fmt_f64(x.i), fmt_f64(x.b)];
            row.extend(u.to_array().iter().map(|v| fmt_f64(*v)));
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }

    pub fn summary(&self) -> SolveSummary {
        SolveSummary {
            mask: self.mask.label(),
            cost: self.cost,
            iterations: self.iterations,
            converged: self.converged,
            averages: Averages::from(self.averages),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Averages {
    #[serde(rename = "S")]
    pub s: f64,
    #[serde(rename = "I")]
    pub i: f64,
    #[serde(rename = "B")]
    pub b: f64,
}

impl From<State> for Averages {
    fn from(x: State) -> Self {
        Self {
            s: x.s,
            i: x.i,
            b: x.b,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveSummary {
    pub mask: String,
    #[serde(rename = "J")]
    pub cost: f64,
    pub iterations: usize,
    pub converged: bool,
    pub averages: Averages,
}

/// Mean S, I and B over the stored trajectory.
pub fn summarize(result: &SolveResult) -> State {
    result.states.mean()
}

fn forward(
    p: &ParameterSet,
    initial: State,
    times: &[f64],
    step: f64,
    applied: &[ControlVector],
) -> Result<Trajectory> {
    let y = p.y();
    let mut states = Vec::with_capacity(times.len());
    let mut x = initial.to_array();
    states.push(initial);
    for k in 0..times.len() - 1 {
        let (u0, u1) = (applied[k], applied[k + 1]);
        let um = u0.midpoint(u1);
        x = rk4_step(
            |t, x| {
                let u = if t == 0.0 {
                    &u0
                } else if t == step {
                    &u1
                } else {
                    &um
                };
                controlled_field(p, y, x, u)
            },
            0.0,
            &x,
            step,
        );
        if !x.iter().all(|v| v.is_finite()) {
            return Err(Error::Divergence {
                step: k + 1,
                time: times[k + 1],
            });
        }
        states.push(State::from_array(x));
    }
    Ok(Trajectory {
        times: times.to_vec(),
        states,
        step,
    })
}

fn backward(
    p: &ParameterSet,
    traj: &Trajectory,
    applied: &[ControlVector],
) -> Result<Vec<AdjointState>> {
    let y = p.y();
    let n = traj.len();
    let h = traj.step;
    let mut lam = vec![AdjointState::ZERO; n];
    let mut l = [0.0; 3];
    for k in (0..n - 1).rev() {
        let (x0, x1) = (traj.states[k].to_array(), traj.states[k + 1].to_array());
        let xm = [
            0.5 * (x0[0] + x1[0]),
            0.5 * (x0[1] + x1[1]),
            0.5 * (x0[2] + x1[2]),
        ];
        let (u0, u1) = (applied[k], applied[k + 1]);
        let um = u0.midpoint(u1);
        // Integrate from t_{k+1} down to t_k with local time running 0 → −h.
        l = rk4_step(
            |t, l| {
                let (x, u) = if t == 0.0 {
                    (&x1, &u1)
                } else if t == -h {
                    (&x0, &u0)
                } else {
                    (&xm, &um)
                };
                adjoint_field(p, y, x, u, l)
            },
            0.0,
            &l,
            -h,
        );
        if !l.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite(format!(
                "adjoint at t = {}",
                traj.times[k]
            )));
        }
        lam[k] = AdjointState::from_array(l);
    }
    Ok(lam)
}

/// Largest over controls of `Σ|new − old| / Σ|new|`, with 0/0 read as 0.
fn relative_change(new: &[ControlVector], old: &[ControlVector]) -> f64 {
    let mut diff = [0.0; 9];
    let mut size = [0.0; 9];
    for (a, b) in new.iter().zip(old) {
        let (a, b) = (a.to_array(), b.to_array());
        for k in 0..9 {
            diff[k] += (a[k] - b[k]).abs();
            size[k] += a[k].abs();
        }
    }
    (0..9)
        .map(|k| {
            if diff[k] == 0.0 {
                0.0
            } else {
                diff[k] / size[k]
            }
        })
        .fold(0.0, f64::max)
}

/// Forward-backward sweep from zero controls.
pub fn forward_backward_sweep(problem: &OptimalControlProblem) -> Result<SolveResult> {
    problem.validate()?;
    let p = &problem.params;
    let step = problem.fbs.step;
    let n = problem.n_steps();
    let shift = problem.delay_steps();
    let times = Trajectory::grid(0.0, step, n);
    let bounds = problem.bounds.masked(&problem.mask);
    let mut relax = problem.fbs.relaxation;
    let mut best_change = f64::INFINITY;
    let mut since_best = 0;

    let mut schedule = ControlSchedule::zeros(times.clone());
    let mut iterations = 0;
    let mut converged = false;
    let mut last_change = f64::INFINITY;
    while iterations < problem.fbs.max_iter {
        iterations += 1;
        let wrap = |e: Error| Error::Sweep {
            iteration: iterations,
            source: Box::new(e),
        };
        let applied = schedule.applied(shift);
        let traj = forward(p, problem.initial, &times, step, &applied.controls).map_err(wrap)?;
        let lam = backward(p, &traj, &applied.controls).map_err(wrap)?;
        let pointwise = |k: usize| {
            optimal_controls(
                traj.states[k],
                lam[k],
                &problem.weights,
                &bounds,
                &problem.mask,
                problem.formula,
            )
        };
        let next: Vec<ControlVector> = (0..=n)
            .map(|k| {
                // An MDT decision at k acts at k + shift.
                let mdt = if k + shift <= n {
                    pointwise(k + shift).mdt_part()
                } else {
                    ControlVector::ZERO
                };
                let candidate = ControlVector {
                    c: pointwise(k).c,
                    ..mdt
                };
                candidate.zip(schedule.controls[k], |c, o| relax * c + (1.0 - relax) * o)
            })
            .collect();
        last_change = relative_change(&next, &schedule.controls);
        schedule.controls = next;
        if last_change <= problem.fbs.tol {
            converged = true;
            break;
        }
        if last_change < best_change {
            best_change = last_change;
            since_best = 0;
        } else {
            since_best += 1;
        }
        if problem.fbs.schedule == RelaxationSchedule::Halving && since_best >= problem.fbs.patience
        {
            relax *= 0.5;
            since_best = 0;
            best_change = last_change;
        }
    }

    let applied = schedule.applied(shift);
    let wrap = |e: Error| Error::Sweep {
        iteration: iterations,
        source: Box::new(e),
    };
    let states = forward(p, problem.initial, &times, step, &applied.controls).map_err(wrap)?;
    let adjoints = backward(p, &states, &applied.controls).map_err(wrap)?;
    let cost = trapezoid(&states, &applied, &problem.weights);
    let averages = states.mean();
    Ok(SolveResult {
        mask: problem.mask,
        schedule,
        states,
        adjoints,
        cost,
        iterations,
        converged,
        last_change,
        averages,
        tau: problem.tau,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub mask: DrugMask,
    pub averages: State,
    pub cost: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// One solve per mask, rows in input order.
pub fn compare_combinations(
    problem: &OptimalControlProblem,
    masks: &[DrugMask],
) -> Result<Vec<ComparisonRow>> {
    if masks.is_empty() {
        return Err(Error::Precondition("no drug masks given".into()));
    }
    masks
        .par_iter()
        .map(|&mask| {
            let r = forward_backward_sweep(&problem.with_mask(mask)).map_err(|e| Error::Mask {
                mask: mask.label(),
                source: Box::new(e),
            })?;
            Ok(ComparisonRow {
                mask,
                averages: r.averages,
                cost: r.cost,
                iterations: r.iterations,
                converged: r.converged,
            })
        })
        .collect()
}

pub fn write_comparison_csv<W: Write>(rows: &[ComparisonRow], mut w: W) -> io::Result<()> {
    writeln!(w, "combination,mean_S,mean_I,mean_B,J,iterations,converged")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            r.mask.label(),
            fmt_f64(r.averages.s),
            fmt_f64(r.averages.i),
            fmt_f64(r.averages.b),
            fmt_f64(r.cost),
            r.iterations,
            r.converged
        )?;
    }
    Ok(())
}
