//! The three-compartment within-host model: susceptible Schwann cells `S`,
//! infected Schwann cells `I` and bacterial load `B`.
//!
//! ```text
//! dS/dt = ω − βSB − γS − μ1·S
//! dI/dt = βSB − δI − μ1·I
//! dB/dt = αI − yB − μ2·B
//! ```
//!
//! `y` is the aggregate cytokine clearance of the bacteria, the sum of the
//! seven per-cytokine rates d11..d17 when those are given individually.

use std::fmt;
use std::io::{self, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};
use crate::ode;

/// Components below `-POSITIVITY_TOL` count as a positivity violation.
pub const POSITIVITY_TOL: f64 = 1e-12;

/// Default integrator step in days.
pub const DEFAULT_STEP: f64 = 0.1;

/// Cytokine-mediated clearance of the bacterial load.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CytokineClearance {
    /// Single aggregate rate `y`.
    Aggregate(f64),
    /// Seven per-cytokine rates (IL-2, IL-7, TNF-α, IFN-γ, IL-12, IL-15, IL-17).
    Individual([f64; 7]),
}

impl CytokineClearance {
    pub fn total(&self) -> f64 {
        match self {
            Self::Aggregate(y) => *y,
            Self::Individual(d) => d.iter().sum(),
        }
    }
}

/// Identifies one scalar rate of [`ParameterSet`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamName {
    Omega,
    Beta,
    Gamma,
    Mu1,
    Delta,
    Alpha,
    Y,
    Mu2,
}

impl ParamName {
    pub const ALL: [ParamName; 8] = [
        ParamName::Omega,
        ParamName::Beta,
        ParamName::Gamma,
        ParamName::Mu1,
        ParamName::Delta,
        ParamName::Alpha,
        ParamName::Y,
        ParamName::Mu2,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ParamName::Omega => "omega",
            ParamName::Beta => "beta",
            ParamName::Gamma => "gamma",
            ParamName::Mu1 => "mu1",
            ParamName::Delta => "delta",
            ParamName::Alpha => "alpha",
            ParamName::Y => "y",
            ParamName::Mu2 => "mu2",
        }
    }
}

impl fmt::Display for ParamName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ParamName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ParamName::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| Error::UnknownName(s.to_string()))
    }
}

/// The biological rates driving the model (all per day, `omega` in cells/day).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParameterSet {
    pub omega: f64,
    pub beta: f64,
    pub gamma: f64,
    pub mu1: f64,
    pub delta: f64,
    pub alpha: f64,
    pub clearance: CytokineClearance,
    pub mu2: f64,
}

impl ParameterSet {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        omega: f64,
        beta: f64,
        gamma: f64,
        mu1: f64,
        delta: f64,
        alpha: f64,
        y: f64,
        mu2: f64,
    ) -> Self {
        Self {
            omega,
            beta,
            gamma,
            mu1,
            delta,
            alpha,
            clearance: CytokineClearance::Aggregate(y),
            mu2,
        }
    }

    /// A parameter set with every rate zero (the vector field vanishes).
    pub fn zero() -> Self {
        Self::new(0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0)
    }

    /// Aggregate cytokine clearance `y`.
    #[inline]
    pub fn y(&self) -> f64 {
        self.clearance.total()
    }

    pub fn get(&self, name: ParamName) -> f64 {
        match name {
            ParamName::Omega => self.omega,
            ParamName::Beta => self.beta,
            ParamName::Gamma => self.gamma,
            ParamName::Mu1 => self.mu1,
            ParamName::Delta => self.delta,
            ParamName::Alpha => self.alpha,
            ParamName::Y => self.y(),
            ParamName::Mu2 => self.mu2,
        }
    }

    /// Setting `y` collapses individual cytokine rates into the aggregate.
    pub fn set(&mut self, name: ParamName, value: f64) {
        match name {
            ParamName::Omega => self.omega = value,
            ParamName::Beta => self.beta = value,
            ParamName::Gamma => self.gamma = value,
            ParamName::Mu1 => self.mu1 = value,
            ParamName::Delta => self.delta = value,
            ParamName::Alpha => self.alpha = value,
            ParamName::Y => self.clearance = CytokineClearance::Aggregate(value),
            ParamName::Mu2 => self.mu2 = value,
        }
    }

    pub fn with(mut self, name: ParamName, value: f64) -> Self {
        self.set(name, value);
        self
    }

    /// Every violated invariant, as `(field, reason)` pairs.
    pub fn violations(&self) -> Vec<(String, String)> {
        let mut out = Vec::new();
        for name in ParamName::ALL {
            if name == ParamName::Y {
                continue;
            }
            check_rate(name.as_str(), self.get(name), &mut out);
        }
        match &self.clearance {
            CytokineClearance::Aggregate(y) => check_rate("y", *y, &mut out),
            CytokineClearance::Individual(d) => {
                for (k, v) in d.iter().enumerate() {
                    check_rate(&format!("d1{}", k + 1), *v, &mut out);
                }
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        match self.violations().into_iter().next() {
            None => Ok(()),
            Some((name, reason)) => Err(Error::InvalidParameter { name, reason }),
        }
    }

    /// Endemic-equilibrium operations additionally need β, α, ω > 0.
    pub fn validate_for_endemic(&self) -> Result<()> {
        self.validate()?;
        for name in [ParamName::Beta, ParamName::Alpha, ParamName::Omega] {
            if self.get(name) <= 0.0 {
                return Err(Error::InvalidParameter {
                    name: name.to_string(),
                    reason: "must be > 0 for the endemic equilibrium".into(),
                });
            }
        }
        Ok(())
    }
}

fn check_rate(name: &str, v: f64, out: &mut Vec<(String, String)>) {
    if !v.is_finite() {
        out.push((name.to_string(), format!("must be finite, got {v}")));
    } else if v < 0.0 {
        out.push((name.to_string(), format!("must be >= 0, got {v}")));
    }
}

/// A point `(S, I, B)` of the state space.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct State {
    pub s: f64,
    pub i: f64,
    pub b: f64,
}

impl State {
    pub const fn new(s: f64, i: f64, b: f64) -> Self {
        Self { s, i, b }
    }

    #[inline]
    pub fn to_array(self) -> [f64; 3] {
        [self.s, self.i, self.b]
    }

    #[inline]
    pub fn from_array(a: [f64; 3]) -> Self {
        Self::new(a[0], a[1], a[2])
    }

    pub fn is_finite(&self) -> bool {
        self.s.is_finite() && self.i.is_finite() && self.b.is_finite()
    }

    pub fn is_nonnegative(&self) -> bool {
        self.s >= 0.0 && self.i >= 0.0 && self.b >= 0.0
    }

    pub fn distance(&self, other: &State) -> f64 {
        ((self.s - other.s).powi(2) + (self.i - other.i).powi(2) + (self.b - other.b).powi(2))
            .sqrt()
    }

    pub fn norm(&self) -> f64 {
        self.distance(&State::default())
    }
}

/// Time derivative of a [`State`], in counts per day.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StateRate {
    pub ds: f64,
    pub di: f64,
    pub db: f64,
}

impl StateRate {
    #[inline]
    pub fn to_array(self) -> [f64; 3] {
        [self.ds, self.di, self.db]
    }

    #[inline]
    pub fn from_array(a: [f64; 3]) -> Self {
        Self {
            ds: a[0],
            di: a[1],
            db: a[2],
        }
    }

    pub fn norm(&self) -> f64 {
        (self.ds * self.ds + self.di * self.di + self.db * self.db).sqrt()
    }
}

/// Right-hand side without finiteness checks; the hot path of every integrator.
#[inline]
pub(crate) fn vector_field(p: &ParameterSet, y: f64, x: &[f64; 3]) -> [f64; 3] {
    let [s, i, b] = *x;
    let infection = p.beta * s * b;
    [
        p.omega - infection - p.gamma * s - p.mu1 * s,
        infection - p.delta * i - p.mu1 * i,
        p.alpha * i - y * b - p.mu2 * b,
    ]
}

/// Evaluates the uncontrolled vector field at `state`.
pub fn derivative(params: &ParameterSet, state: State) -> Result<StateRate> {
    ensure_finite("state", &state.to_array())?;
    params.validate()?;
    let rate = vector_field(params, params.y(), &state.to_array());
    ensure_finite("derivative", &rate)?;
    Ok(StateRate::from_array(rate))
}

/// Horizon, step and initial condition of a fixed-step run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub t0: f64,
    pub tf: f64,
    pub step: f64,
    pub initial: State,
}

impl SimulationConfig {
    pub fn new(t0: f64, tf: f64, step: f64, initial: State) -> Self {
        Self {
            t0,
            tf,
            step,
            initial,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let Self { t0, tf, step, .. } = *self;
        if !(t0.is_finite() && tf.is_finite() && step.is_finite()) {
            return Err(Error::InvalidConfig(
                "t0, tf and step must be finite".into(),
            ));
        }
        if tf <= t0 {
            return Err(Error::InvalidConfig(format!(
                "tf ({tf}) must exceed t0 ({t0})"
            )));
        }
        if step <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "step must be > 0, got {step}"
            )));
        }
        if step > tf - t0 {
            return Err(Error::InvalidConfig(format!(
                "step {step} exceeds the horizon {}",
                tf - t0
            )));
        }
        ensure_finite("initial state", &self.initial.to_array())?;
        if !self.initial.is_nonnegative() {
            return Err(Error::InvalidConfig(format!(
                "initial state must be nonnegative, got {:?}",
                self.initial
            )));
        }
        Ok(())
    }

    /// Number of steps needed so that the grid covers `[t0, tf]`.
    pub fn n_steps(&self) -> usize {
        grid_steps(self.tf - self.t0, self.step)
    }
}

pub(crate) fn grid_steps(span: f64, step: f64) -> usize {
    let raw = span / step;
    let rounded = raw.round();
    if (raw - rounded).abs() <= 1e-9 * raw.max(1.0) {
        rounded as usize
    } else {
        raw.ceil() as usize
    }
}

/// A state path on a uniform time grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<State>,
    pub step: f64,
}

impl Trajectory {
    /// Uniform grid `t0 + k·step`, `k = 0..=n`.
    pub fn grid(t0: f64, step: f64, n: usize) -> Vec<f64> {
        (0..=n).map(|k| t0 + k as f64 * step).collect()
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn last(&self) -> Option<&State> {
        self.states.last()
    }

    /// Index of the grid point nearest to `t`.
    pub fn nearest_index(&self, t: f64) -> Option<usize> {
        let t0 = *self.times.first()?;
        let k = ((t - t0) / self.step).round();
        Some((k.max(0.0) as usize).min(self.times.len() - 1))
    }

    /// Arithmetic mean of each component over all grid points.
    pub fn mean(&self) -> State {
        let n = self.states.len().max(1) as f64;
        let (s, i, b) = self
            .states
            .iter()
            .fold((0.0, 0.0, 0.0), |(s, i, b), x| (s + x.s, i + x.i, b + x.b));
        State::new(s / n, i / n, b / n)
    }

    /// Writes `t,S,I,B` rows at 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "t,S,I,B")?;
        for (t, x) in self.times.iter().zip(&self.states) {
            writeln!(
                w,
                "{},{},{},{}",
                fmt_f64(*t),
                fmt_f64(x.s),
                fmt_f64(x.i),
                fmt_f64(x.b)
            )?;
        }
        Ok(())
    }
}

/// Scientific notation with 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Classical fourth-order Runge-Kutta on the uncontrolled model.
pub fn integrate(params: &ParameterSet, config: &SimulationConfig) -> Result<Trajectory> {
    params.validate()?;
    config.validate()?;
    let n = config.n_steps();
    let y = params.y();
    let times = Trajectory::grid(config.t0, config.step, n);
    let mut states = Vec::with_capacity(n + 1);
    let mut x = config.initial.to_array();
    states.push(config.initial);
    for k in 0..n {
        x = ode::rk4_step(|_, x| vector_field(params, y, x), times[k], &x, config.step);
        if !x.iter().all(|v| v.is_finite()) {
            return Err(Error::Divergence {
                step: k + 1,
                time: times[k + 1],
            });
        }
        states.push(State::from_array(x));
    }
    Ok(Trajectory {
        times,
        states,
        step: config.step,
    })
}

/// Limsup bounds on `S + I` and on `B`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub cells: f64,
    pub load: f64,
}

/// `ω/k` and `αω/(k(y+μ2))` with `k = min(γ+μ1, δ+μ1)`.
pub fn asymptotic_bounds(params: &ParameterSet) -> Result<Bounds> {
    params.validate()?;
    let k = (params.gamma + params.mu1).min(params.delta + params.mu1);
    if k <= 0.0 {
        return Err(Error::UndefinedBound("min(γ+μ1, δ+μ1) is zero".into()));
    }
    let clearance = params.y() + params.mu2;
    if clearance <= 0.0 {
        return Err(Error::UndefinedBound("y + μ2 is zero".into()));
    }
    let cells = params.omega / k;
    Ok(Bounds {
        cells,
        load: params.alpha * cells / clearance,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PositivityReport {
    Clean,
    Violation { index: usize },
}

impl PositivityReport {
    pub fn is_clean(&self) -> bool {
        matches!(self, PositivityReport::Clean)
    }
}

/// First grid index with a component below `-POSITIVITY_TOL`.
pub fn check_positivity(traj: &Trajectory) -> PositivityReport {
    traj.states
        .iter()
        .position(|x| x.s < -POSITIVITY_TOL || x.i < -POSITIVITY_TOL || x.b < -POSITIVITY_TOL)
        .map_or(PositivityReport::Clean, |index| {
            PositivityReport::Violation { index }
        })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets;

    #[test]
    fn recruitment_only_at_origin() {
        let r = derivative(&presets::table2(), State::default()).unwrap();
        assert_eq!(r.to_array(), [1.090, 0.0, 0.0]);
    }

    #[test]
    fn endemic_point_annihilates_field() {
        let r = derivative(&presets::table3(), State::new(38.9006, 75.2748, 17.3046)).unwrap();
        for v in r.to_array() {
            assert!(v.abs() < 1e-3, "{r:?}");
        }
    }

    #[test]
    fn table1_hand_evaluation() {
        // ω=0.022 β=3.44 γ=0.1795 μ1=0.0018 δ=0.2681 α=0.063 y=0.0003 μ2=0.57 at (100,10,5)
        // dS = 0.022 - 1720 - 17.95 - 0.18
        // dI = 1720 - 2.681 - 0.018
        // dB = 0.63 - 0.0015 - 2.85
        let r = derivative(&presets::table1(), State::new(100.0, 10.0, 5.0)).unwrap();
        assert!((r.ds - (-1738.108)).abs() < 1e-9);
        assert!((r.di - 1717.301).abs() < 1e-9);
        assert!((r.db - (-2.2215)).abs() < 1e-12);
    }

    #[test]
    fn non_finite_state_rejected() {
        let err = derivative(&presets::table1(), State::new(f64::NAN, 0.0, 0.0)).unwrap_err();
        assert!(matches!(err, Error::NonFinite(_)));
    }

    #[test]
    fn individual_clearances_reduce_to_sum() {
        let mut p = presets::table1();
        p.clearance = CytokineClearance::Individual([1e-4, 2e-4, 0.0, 0.0, 0.0, 0.0, 5e-5]);
        assert!((p.y() - 3.5e-4).abs() < 1e-18);
        p.set(ParamName::Y, 0.01);
        assert_eq!(p.clearance, CytokineClearance::Aggregate(0.01));
    }

    #[test]
    fn negative_rate_is_named() {
        let p = presets::table1().with(ParamName::Beta, -1.0);
        let v = p.violations();
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].0, "beta");
    }

    #[test]
    fn zero_dynamics_constant_trajectory() {
        let x0 = State::new(3.0, 2.0, 1.0);
        let traj = integrate(
            &ParameterSet::zero(),
            &SimulationConfig::new(0.0, 10.0, 0.5, x0),
        )
        .unwrap();
        assert_eq!(traj.len(), 21);
        assert!(traj.states.iter().all(|x| *x == x0));
    }

    #[test]
    fn grid_is_uniform_and_covers_horizon() {
        let traj = integrate(
            &presets::table3(),
            &SimulationConfig::new(1.0, 2.05, 0.1, State::new(1.0, 1.0, 1.0)),
        )
        .unwrap();
        assert_eq!(traj.times[0], 1.0);
        assert!(*traj.times.last().unwrap() >= 2.05);
        for w in traj.times.windows(2) {
            assert!((w[1] - w[0] - 0.1).abs() < 1e-12);
        }
        assert_eq!(traj.times.len(), traj.states.len());
    }

    #[test]
    fn invalid_configs() {
        let x0 = State::default();
        for cfg in [
            SimulationConfig::new(0.0, 0.0, 0.1, x0),
            SimulationConfig::new(0.0, 1.0, 0.0, x0),
            SimulationConfig::new(0.0, 1.0, 2.0, x0),
            SimulationConfig::new(0.0, 1.0, 0.1, State::new(-1.0, 0.0, 0.0)),
        ] {
            assert!(cfg.validate().is_err(), "{cfg:?}");
        }
    }

    #[test]
    fn divergence_reports_first_bad_step() {
        // Table 1 with the heat-map initial load is far too stiff for a 0.1 day step.
        let cfg = SimulationConfig::new(0.0, 14.0, 0.1, State::new(5200.0, 0.0, 40.0));
        match integrate(&presets::table1(), &cfg) {
            Err(Error::Divergence { step, time }) => {
                assert!(step >= 1);
                assert!((time - step as f64 * 0.1).abs() < 1e-9);
            }
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn table1_bounds() {
        let b = asymptotic_bounds(&presets::table1()).unwrap();
        assert!((b.cells - 0.022 / 0.1813).abs() < 1e-15);
        assert!((b.load - 0.063 * 0.022 / (0.1813 * 0.5703)).abs() < 1e-15);
        assert!((b.cells - 0.12135).abs() < 1e-5);
        assert!((b.load - 0.0134049).abs() < 1e-7);
    }

    #[test]
    fn no_recruitment_zero_bounds() {
        let b = asymptotic_bounds(&presets::table1().with(ParamName::Omega, 0.0)).unwrap();
        assert_eq!((b.cells, b.load), (0.0, 0.0));
    }

    #[test]
    fn undefined_bounds() {
        let p = presets::table1()
            .with(ParamName::Gamma, 0.0)
            .with(ParamName::Mu1, 0.0);
        assert!(matches!(
            asymptotic_bounds(&p),
            Err(Error::UndefinedBound(_))
        ));
        let p = presets::table1()
            .with(ParamName::Y, 0.0)
            .with(ParamName::Mu2, 0.0);
        assert!(matches!(
            asymptotic_bounds(&p),
            Err(Error::UndefinedBound(_))
        ));
    }

    #[test]
    fn positivity_flags_constructed_violation() {
        let traj = Trajectory {
            times: vec![0.0, 1.0, 2.0],
            states: vec![
                State::new(1.0, 0.0, 0.0),
                State::new(-1.0, 0.0, 0.0),
                State::new(-2.0, 0.0, 0.0),
            ],
            step: 1.0,
        };
        assert_eq!(
            check_positivity(&traj),
            PositivityReport::Violation { index: 1 }
        );
    }

    #[test]
    fn roundoff_undershoot_tolerated() {
        let traj = Trajectory {
            times: vec![0.0],
            states: vec![State::new(0.0, -1e-13, 0.0)],
            step: 1.0,
        };
        assert!(check_positivity(&traj).is_clean());
    }

    #[test]
    fn csv_header_and_precision() {
        let traj = integrate(
            &presets::table2(),
            &SimulationConfig::new(0.0, 0.2, 0.1, State::new(1.0, 1.0, 1.0)),
        )
        .unwrap();
        let mut buf = Vec::new();
        traj.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("t,S,I,B"));
        let row: Vec<f64> = lines
            .next()
            .unwrap()
            .split(',')
            .map(|v| v.parse().unwrap())
            .collect();
        assert_eq!(row, vec![0.0, 1.0, 1.0, 1.0]);
        let row: Vec<f64> = text
            .lines()
            .nth(2)
            .unwrap()
            .split(',')
            .map(|v| v.parse().unwrap())
            .collect();
        assert_eq!(row[1], traj.states[1].s);
    }

    #[test]
    fn param_names_round_trip() {
        for p in ParamName::ALL {
            assert_eq!(p.as_str().parse::<ParamName>().unwrap(), p);
        }
        assert!("kappa".parse::<ParamName>().is_err());
    }
}
