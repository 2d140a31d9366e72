//! Reproduction number, equilibria, linear stability, Lyapunov descent,
//! transcritical bifurcation sweeps and the doubling-time heat map.

use std::fmt;
use std::io::{self, Write};

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    fmt_f64, integrate, vector_field, ParamName, ParameterSet, SimulationConfig, State,
};

/// Real parts within this distance of zero are classified as marginal.
pub const EIGEN_TOL: f64 = 1e-9;

/// Relative vector-field residual accepted as an equilibrium.
pub const EQUILIBRIUM_TOL: f64 = 1e-6;

/// Integrator step for the heat map; the initial load makes the system stiff.
pub const HEATMAP_STEP: f64 = 5e-4;

/// Days after which the heat map reads the bacterial load.
pub const DOUBLING_DAYS: f64 = 14.0;

fn denominators(p: &ParameterSet) -> Result<(f64, f64, f64)> {
    let s = p.gamma + p.mu1;
    let i = p.delta + p.mu1;
    let b = p.y() + p.mu2;
    for (v, label) in [(s, "γ + μ1"), (i, "δ + μ1"), (b, "y + μ2")] {
        if v <= 0.0 {
            return Err(Error::ZeroDenominator(label.to_string()));
        }
    }
    Ok((s, i, b))
}

/// `R0 = αβω / ((γ+μ1)(δ+μ1)(y+μ2))`.
pub fn reproduction_number(params: &ParameterSet) -> Result<f64> {
    params.validate()?;
    let (ds, di, db) = denominators(params)?;
    Ok(params.alpha * params.beta * params.omega / (ds * di * db))
}

/// Value of `target` at which `R0 = 1`, all other rates fixed.
///
/// Only defined for the numerator rates `ω`, `β`, `α` (where `R0` is linear).
pub fn critical_value(params: &ParameterSet, target: ParamName) -> Result<f64> {
    let current = params.get(target);
    if !matches!(
        target,
        ParamName::Omega | ParamName::Beta | ParamName::Alpha
    ) {
        return Err(Error::Precondition(format!(
            "R0 is not linear in `{target}`"
        )));
    }
    if current <= 0.0 {
        return Err(Error::Precondition(format!("`{target}` must be > 0")));
    }
    let r0 = reproduction_number(params)?;
    if r0 == 0.0 {
        return Err(Error::Precondition("R0 vanishes identically".into()));
    }
    Ok(current / r0)
}

/// Infection-free equilibrium `(ω/(γ+μ1), 0, 0)`.
pub fn disease_free_equilibrium(params: &ParameterSet) -> Result<State> {
    params.validate()?;
    let k = params.gamma + params.mu1;
    if k <= 0.0 {
        return Err(Error::ZeroDenominator("γ + μ1".into()));
    }
    Ok(State::new(params.omega / k, 0.0, 0.0))
}

/// Closed-form endemic point, evaluated regardless of sign.
///
/// Components are nonpositive (the unphysical branch) when `R0 ≤ 1`.
pub fn endemic_closed_form(params: &ParameterSet) -> Result<State> {
    params.validate_for_endemic()?;
    let (ds, di, db) = denominators(params)?;
    let ab = params.alpha * params.beta;
    let excess = ab * params.omega - ds * di * db;
    Ok(State::new(
        di * db / ab,
        excess / (ab * di),
        excess / (params.beta * di * db),
    ))
}

/// The endemic equilibrium, present iff `R0 > 1`.
pub fn endemic_equilibrium(params: &ParameterSet) -> Result<Option<State>> {
    let r0 = reproduction_number(params)?;
    if r0 <= 1.0 {
        return Ok(None);
    }
    let e = endemic_closed_form(params)?;
    Ok((e.s > 0.0 && e.i > 0.0 && e.b > 0.0).then_some(e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumReport {
    pub r0: f64,
    pub dfe: State,
    pub endemic: Option<State>,
}

pub fn equilibria(params: &ParameterSet) -> Result<EquilibriumReport> {
    Ok(EquilibriumReport {
        r0: reproduction_number(params)?,
        dfe: disease_free_equilibrium(params)?,
        endemic: endemic_equilibrium(params)?,
    })
}

pub type Matrix3 = [[f64; 3]; 3];

/// Analytic Jacobian of the uncontrolled vector field.
pub fn jacobian(params: &ParameterSet, state: State) -> Matrix3 {
    let State { s, b, .. } = state;
    let p = params;
    [
        [-p.beta * b - p.gamma - p.mu1, 0.0, -p.beta * s],
        [p.beta * b, -p.delta - p.mu1, p.beta * s],
        [0.0, p.alpha, -p.y() - p.mu2],
    ]
}

/// Coefficients `[a2, a1, a0]` of `λ³ + a2·λ² + a1·λ + a0 = det(λI − J)`.
pub fn characteristic_polynomial(j: &Matrix3) -> [f64; 3] {
    let trace = j[0][0] + j[1][1] + j[2][2];
    let minors = j[0][0] * j[1][1] - j[0][1] * j[1][0] + j[0][0] * j[2][2] - j[0][2] * j[2][0]
        + j[1][1] * j[2][2]
        - j[1][2] * j[2][1];
    let det = j[0][0] * (j[1][1] * j[2][2] - j[1][2] * j[2][1])
        - j[0][1] * (j[1][0] * j[2][2] - j[1][2] * j[2][0])
        + j[0][2] * (j[1][0] * j[2][1] - j[1][1] * j[2][0]);
    [-trace, minors, -det]
}

/// Roots of the monic cubic `λ³ + a2·λ² + a1·λ + a0`.
///
/// Cardano / trigonometric closed form, one real root deflated out, then
/// Newton polishing on the original polynomial.
pub fn cubic_roots(coeffs: [f64; 3]) -> [Complex64; 3] {
    let [a, b, c] = coeffs;
    let shift = a / 3.0;
    let p = b - a * a / 3.0;
    let q = 2.0 * a * a * a / 27.0 - a * b / 3.0 + c;
    let disc = (q / 2.0).powi(2) + (p / 3.0).powi(3);

    let real_root = if p == 0.0 && q == 0.0 {
        0.0
    } else if disc > 0.0 {
        let sq = disc.sqrt();
        // Pick the sign that avoids cancellation.
        let u = if q > 0.0 {
            (-q / 2.0 - sq).cbrt()
        } else {
            (-q / 2.0 + sq).cbrt()
        };
        if u == 0.0 {
            0.0
        } else {
            u - p / (3.0 * u)
        }
    } else {
        let r = 2.0 * (-p / 3.0).sqrt();
        let arg = if r == 0.0 {
            0.0
        } else {
            (3.0 * q / (p * r)).clamp(-1.0, 1.0)
        };
        r * (arg.acos() / 3.0).cos()
    } - shift;

    let real_root = polish_real(coeffs, real_root);
    // Deflate: λ³ + aλ² + bλ + c = (λ − r)(λ² + e·λ + f)
    let e = a + real_root;
    let f = if real_root.abs() > 1e-8 * (1.0 + b.abs()).sqrt() && c != 0.0 {
        -c / real_root
    } else {
        b + e * real_root
    };
    let quad_disc = Complex64::new(e * e - 4.0 * f, 0.0).sqrt();
    let mut r2 = (-e - quad_disc) / 2.0;
    let mut r3 = (-e + quad_disc) / 2.0;
    // Stable form for the smaller-magnitude root.
    if e >= 0.0 {
        if r2.norm() > 0.0 {
            r3 = Complex64::new(f, 0.0) / r2;
        }
    } else if r3.norm() > 0.0 {
        r2 = Complex64::new(f, 0.0) / r3;
    }
    let mut roots = [
        Complex64::new(real_root, 0.0),
        polish(coeffs, r2),
        polish(coeffs, r3),
    ];
    roots.sort_by(|x, y| x.re.total_cmp(&y.re).then(x.im.total_cmp(&y.im)));
    roots
}

fn polish_real(coeffs: [f64; 3], mut x: f64) -> f64 {
    let [a, b, c] = coeffs;
    for _ in 0..4 {
        let f = ((x + a) * x + b) * x + c;
        let df = (3.0 * x + 2.0 * a) * x + b;
        if df == 0.0 || !f.is_finite() {
            break;
        }
        let next = x - f / df;
        if !next.is_finite() {
            break;
        }
        x = next;
    }
    x
}

fn polish(coeffs: [f64; 3], mut z: Complex64) -> Complex64 {
    let [a, b, c] = coeffs;
    let eval = |z: Complex64| ((z + a) * z + b) * z + c;
    for _ in 0..4 {
        let f = eval(z);
        let df = (3.0 * z + 2.0 * a) * z + b;
        if df.norm() == 0.0 {
            break;
        }
        let next = z - f / df;
        if !(next.re.is_finite() && next.im.is_finite()) || eval(next).norm() > f.norm() {
            break;
        }
        z = next;
    }
    z
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StabilityClass {
    #[serde(rename = "LAS")]
    LocallyAsymptoticallyStable,
    #[serde(rename = "unstable")]
    Unstable,
    #[serde(rename = "marginal")]
    Marginal,
}

impl StabilityClass {
    pub fn from_eigenvalues(eigs: &[Complex64]) -> Self {
        if eigs.iter().all(|z| z.re < -EIGEN_TOL) {
            StabilityClass::LocallyAsymptoticallyStable
        } else if eigs.iter().any(|z| z.re > EIGEN_TOL) {
            StabilityClass::Unstable
        } else {
            StabilityClass::Marginal
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            StabilityClass::LocallyAsymptoticallyStable => "LAS",
            StabilityClass::Unstable => "unstable",
            StabilityClass::Marginal => "marginal",
        }
    }
}

impl fmt::Display for StabilityClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityVerdict {
    pub eigenvalues: [Complex64; 3],
    pub classification: StabilityClass,
}

/// Magnitude of the vector-field terms at `x`, the yardstick for residuals.
fn field_scale(p: &ParameterSet, x: &State) -> f64 {
    let State { s, i, b } = *x;
    p.omega.abs()
        + 2.0 * (p.beta * s * b).abs()
        + ((p.gamma + p.mu1) * s).abs()
        + ((p.delta + p.mu1) * i).abs()
        + (p.alpha * i).abs()
        + ((p.y() + p.mu2) * b).abs()
}

/// Eigenvalues of the Jacobian at an equilibrium, and their sign classification.
pub fn classify_stability(params: &ParameterSet, eq: State) -> Result<StabilityVerdict> {
    params.validate()?;
    let residual = crate::model::derivative(params, eq)?.norm();
    let scale = field_scale(params, &eq);
    if residual > EQUILIBRIUM_TOL * scale {
        return Err(Error::NotEquilibrium { residual, scale });
    }
    let eigenvalues = cubic_roots(characteristic_polynomial(&jacobian(params, eq)));
    Ok(StabilityVerdict {
        classification: StabilityClass::from_eigenvalues(&eigenvalues),
        eigenvalues,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LyapunovTarget {
    DiseaseFree,
    Endemic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LyapunovPoint {
    pub t: f64,
    pub u: f64,
    pub du_dt: f64,
}

/// `x̄(x/x̄ − ln(x/x̄))`, the Volterra-type term, and its derivative factor `1 − x̄/x`.
#[inline]
fn volterra(x: f64, bar: f64) -> (f64, f64) {
    let r = x / bar;
    (bar * (r - r.ln()), 1.0 - bar / x)
}

/// Evaluates the Korobeinikov-type Lyapunov function and its time derivative
/// (by the chain rule through the vector field) along `traj`.
pub fn lyapunov_descent(
    params: &ParameterSet,
    traj: &crate::model::Trajectory,
    target: LyapunovTarget,
) -> Result<Vec<LyapunovPoint>> {
    let r0 = reproduction_number(params)?;
    if params.alpha <= 0.0 {
        return Err(Error::Precondition("α must be > 0".into()));
    }
    let weight = (params.delta + params.mu1) / params.alpha;
    let y = params.y();
    let eq = match target {
        LyapunovTarget::DiseaseFree => {
            if r0 >= 1.0 {
                return Err(Error::Precondition(format!("R0 = {r0} is not < 1")));
            }
            disease_free_equilibrium(params)?
        }
        LyapunovTarget::Endemic => endemic_equilibrium(params)?
            .ok_or_else(|| Error::Precondition(format!("R0 = {r0} is not > 1")))?,
    };
    if eq.s <= 0.0 {
        return Err(Error::Precondition("equilibrium S must be > 0".into()));
    }

    traj.times
        .iter()
        .zip(&traj.states)
        .enumerate()
        .map(|(index, (&t, x))| {
            let bad = |what: &str| Error::LogarithmDomain {
                index,
                reason: format!("{what} is not positive"),
            };
            if x.s <= 0.0 {
                return Err(bad("S"));
            }
            let [ds, di, db] = vector_field(params, y, &x.to_array());
            let (us, gs) = volterra(x.s, eq.s);
            let (u, du_dt) = match target {
                LyapunovTarget::DiseaseFree => {
                    (us + x.i + weight * x.b, gs * ds + di + weight * db)
                }
                LyapunovTarget::Endemic => {
                    if x.i <= 0.0 {
                        return Err(bad("I"));
                    }
                    if x.b <= 0.0 {
                        return Err(bad("B"));
                    }
                    let (ui, gi) = volterra(x.i, eq.i);
                    let (ub, gb) = volterra(x.b, eq.b);
                    (us + ui + weight * ub, gs * ds + gi * di + weight * gb * db)
                }
            };
            Ok(LyapunovPoint { t, u, du_dt })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub param: ParamName,
    pub lo: f64,
    pub hi: f64,
    pub step: f64,
}

impl SweepSpec {
    pub fn values(&self) -> Vec<f64> {
        let n = crate::model::grid_steps(self.hi - self.lo, self.step);
        (0..=n)
            .map(|k| (self.lo + k as f64 * self.step).min(self.hi))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BifurcationRow {
    pub value: f64,
    pub r0: f64,
    pub dfe_class: StabilityClass,
    pub i_star: Option<f64>,
    pub endemic_class: Option<StabilityClass>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BifurcationCurve {
    pub param: ParamName,
    pub rows: Vec<BifurcationRow>,
}

impl BifurcationCurve {
    /// Consecutive swept values between which `R0` crosses 1.
    pub fn r0_crossings(&self) -> Vec<(f64, f64)> {
        self.rows
            .windows(2)
            .filter(|w| (w[0].r0 - 1.0).signum() != (w[1].r0 - 1.0).signum())
            .map(|w| (w[0].value, w[1].value))
            .collect()
    }

    /// Indices where the DFE classification changes.
    pub fn dfe_flips(&self) -> Vec<usize> {
        self.rows
            .windows(2)
            .enumerate()
            .filter(|(_, w)| w[0].dfe_class != w[1].dfe_class)
            .map(|(k, _)| k + 1)
            .collect()
    }

    /// CSV `<param>,R0,dfe_class,I_star,endemic_class`; absent endemic fields are empty.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "{},R0,dfe_class,I_star,endemic_class", self.param)?;
        for r in &self.rows {
            writeln!(
                w,
                "{},{},{},{},{}",
                fmt_f64(r.value),
                fmt_f64(r.r0),
                r.dfe_class,
                r.i_star.map(fmt_f64).unwrap_or_default(),
                r.endemic_class.map(|c| c.as_str()).unwrap_or_default()
            )?;
        }
        Ok(())
    }
}

/// Equilibria and their stability at every point of a one-parameter sweep.
pub fn bifurcation_sweep(params: &ParameterSet, sweep: &SweepSpec) -> Result<BifurcationCurve> {
    if sweep.lo.partial_cmp(&sweep.hi) != Some(std::cmp::Ordering::Less) {
        return Err(Error::Precondition(format!(
            "sweep lo ({}) must be < hi ({})",
            sweep.lo, sweep.hi
        )));
    }
    if sweep.step.is_nan() || sweep.step <= 0.0 {
        return Err(Error::Precondition("sweep step must be > 0".into()));
    }
    let rows = sweep
        .values()
        .into_par_iter()
        .map(|value| {
            let p = params.with(sweep.param, value);
            let r0 = reproduction_number(&p)?;
            let dfe = disease_free_equilibrium(&p)?;
            let dfe_class = classify_stability(&p, dfe)?.classification;
            let (i_star, endemic_class) = match endemic_equilibrium(&p)? {
                Some(e) => (Some(e.i), Some(classify_stability(&p, e)?.classification)),
                None => (None, None),
            };
            Ok(BifurcationRow {
                value,
                r0,
                dfe_class,
                i_star,
                endemic_class,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BifurcationCurve {
        param: sweep.param,
        rows,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeatmapSpec {
    pub alpha: (f64, f64),
    pub gamma: (f64, f64),
    pub dims: (usize, usize),
    pub initial: State,
    pub t_check: f64,
    pub step: f64,
}

impl Default for HeatmapSpec {
    fn default() -> Self {
        Self {
            alpha: (0.2263, 0.3099),
            gamma: (0.15, 0.2090),
            dims: (50, 50),
            initial: crate::presets::HEATMAP_INITIAL,
            t_check: DOUBLING_DAYS,
            step: HEATMAP_STEP,
        }
    }
}

/// Bacterial load at `t_check` on an `(α, γ)` grid. `load[a][g]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatGrid {
    pub alpha: Vec<f64>,
    pub gamma: Vec<f64>,
    pub load: Vec<Vec<f64>>,
}

impl HeatGrid {
    pub fn cells(&self) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        self.alpha
            .iter()
            .zip(&self.load)
            .flat_map(move |(&a, row)| self.gamma.iter().zip(row).map(move |(&g, &b)| (a, g, b)))
    }

    /// First row holds the γ axis, first column the α axis.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        write!(w, "alpha\\gamma")?;
        for g in &self.gamma {
            write!(w, ",{}", fmt_f64(*g))?;
        }
        writeln!(w)?;
        for (a, row) in self.alpha.iter().zip(&self.load) {
            write!(w, "{}", fmt_f64(*a))?;
            for b in row {
                write!(w, ",{}", fmt_f64(*b))?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

fn axis(range: (f64, f64), n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![range.0];
    }
    (0..n)
        .map(|k| range.0 + (range.1 - range.0) * k as f64 / (n - 1) as f64)
        .collect()
}

pub fn doubling_heatmap(params: &ParameterSet, spec: &HeatmapSpec) -> Result<HeatGrid> {
    for (label, (lo, hi)) in [("alpha", spec.alpha), ("gamma", spec.gamma)] {
        if !(lo >= 0.0 && hi >= lo && hi.is_finite()) {
            return Err(Error::Precondition(format!(
                "{label} range [{lo}, {hi}] must satisfy 0 <= lo <= hi"
            )));
        }
    }
    if spec.dims.0 == 0 || spec.dims.1 == 0 {
        return Err(Error::Precondition("grid dims must be >= 1".into()));
    }
    let alpha = axis(spec.alpha, spec.dims.0);
    let gamma = axis(spec.gamma, spec.dims.1);
    let config = SimulationConfig::new(0.0, spec.t_check, spec.step, spec.initial);
    let cells: Vec<(f64, f64)> = alpha
        .iter()
        .flat_map(|&a| gamma.iter().map(move |&g| (a, g)))
        .collect();
    let values = cells
        .par_iter()
        .map(|&(a, g)| {
            let p = params.with(ParamName::Alpha, a).with(ParamName::Gamma, g);
            let traj = integrate(&p, &config)?;
            Ok(traj.last().map_or(spec.initial.b, |x| x.b))
        })
        .collect::<Result<Vec<f64>>>()?;
    let load = values.chunks(gamma.len()).map(<[f64]>::to_vec).collect();
    Ok(HeatGrid { alpha, gamma, load })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{derivative, Trajectory};
    use crate::presets::{table1, table2, table3};

    #[test]
    fn r0_published_values() {
        assert!((reproduction_number(&table2()).unwrap() - 0.9939).abs() < 5e-4);
        assert!((reproduction_number(&table3()).unwrap() - 29.6341).abs() < 1e-3);
        assert_eq!(
            reproduction_number(&table3().with(ParamName::Alpha, 0.0)).unwrap(),
            0.0
        );
    }

    #[test]
    fn r0_zero_denominator() {
        let p = table1()
            .with(ParamName::Gamma, 0.0)
            .with(ParamName::Mu1, 0.0);
        assert!(matches!(
            reproduction_number(&p),
            Err(Error::ZeroDenominator(_))
        ));
    }

    #[test]
    fn dfe_values() {
        let e = disease_free_equilibrium(&table2()).unwrap();
        assert!((e.s - 55.1899).abs() < 1e-3);
        assert_eq!((e.i, e.b), (0.0, 0.0));
        let e = disease_free_equilibrium(&table3()).unwrap();
        assert!((e.s - 20.90 / (0.01795 + 0.00018)).abs() < 1e-9);
        assert!((e.s - 1152.785).abs() < 1e-2);
        let e = disease_free_equilibrium(&table3().with(ParamName::Omega, 0.0)).unwrap();
        assert_eq!(e, State::default());
    }

    #[test]
    fn endemic_values() {
        let e = endemic_equilibrium(&table3()).unwrap().unwrap();
        for (got, want) in [(e.s, 38.9006), (e.i, 75.2748), (e.b, 17.3046)] {
            assert!(((got - want) / want).abs() < 1e-3, "{got} vs {want}");
        }
        assert!(endemic_equilibrium(&table2()).unwrap().is_none());
    }

    #[test]
    fn endemic_absent_at_threshold() {
        let p = table1();
        let wc = critical_value(&p, ParamName::Omega).unwrap();
        let p = p.with(ParamName::Omega, wc);
        let r0 = reproduction_number(&p).unwrap();
        assert!((r0 - 1.0).abs() < 1e-14);
        let closed = endemic_closed_form(&p).unwrap();
        assert!(closed.i.abs() < 1e-12 && closed.b.abs() < 1e-12);
        // Exactly R0 = 1 is treated as absent; within roundoff either side must not give a
        // positive endemic point with I* away from zero.
        if let Some(e) = endemic_equilibrium(&p).unwrap() {
            assert!(e.i < 1e-12);
        }
    }

    #[test]
    fn endemic_requires_positive_numerator_rates() {
        assert!(endemic_closed_form(&table3().with(ParamName::Beta, 0.0)).is_err());
    }

    #[test]
    fn jacobian_at_dfe_matches_printed_form() {
        let p = table2();
        let e = disease_free_equilibrium(&p).unwrap();
        let j = jacobian(&p, e);
        assert!((j[0][2] - (-0.44 * 1.090 / 0.01975)).abs() < 1e-12);
        assert!((j[0][2] + 24.283).abs() < 1e-3);
        assert!((j[0][0] + 0.01975).abs() < 1e-15);
        assert!((j[1][1] + 0.2699).abs() < 1e-15);
        assert!((j[1][2] - 0.44 * 1.090 / 0.01975).abs() < 1e-12);
        assert_eq!(j[2][1], 0.0063);
        assert!((j[2][2] + 0.5703).abs() < 1e-15);
        assert_eq!(j[1][0], 0.0);
        assert_eq!(
            jacobian(&ParameterSet::zero(), State::new(1.0, 2.0, 3.0)),
            [[0.0; 3]; 3]
        );
    }

    #[test]
    fn cubic_roots_simple_cases() {
        // (λ+1)(λ+2)(λ+3)
        let r = cubic_roots([6.0, 11.0, 6.0]);
        for (z, want) in r.iter().zip([-3.0, -2.0, -1.0]) {
            assert!((z.re - want).abs() < 1e-12 && z.im.abs() < 1e-12, "{r:?}");
        }
        // (λ−1)(λ²+1)
        let r = cubic_roots([-1.0, 1.0, -1.0]);
        assert!(r
            .iter()
            .any(|z| (z.re - 1.0).abs() < 1e-12 && z.im.abs() < 1e-12));
        assert!(r
            .iter()
            .any(|z| z.re.abs() < 1e-12 && (z.im - 1.0).abs() < 1e-12));
        // λ³
        assert!(cubic_roots([0.0, 0.0, 0.0])
            .iter()
            .all(|z| z.norm() < 1e-12));
        // (λ−2)²(λ+1)
        let r = cubic_roots([-3.0, 0.0, 4.0]);
        assert!((r[0].re + 1.0).abs() < 1e-9);
        assert!((r[1].re - 2.0).abs() < 1e-6 && (r[2].re - 2.0).abs() < 1e-6);
    }

    #[test]
    fn published_stability_cases() {
        let p2 = table2();
        let v = classify_stability(&p2, disease_free_equilibrium(&p2).unwrap()).unwrap();
        assert_eq!(
            v.classification,
            StabilityClass::LocallyAsymptoticallyStable
        );
        let p3 = table3();
        let v = classify_stability(&p3, disease_free_equilibrium(&p3).unwrap()).unwrap();
        assert_eq!(v.classification, StabilityClass::Unstable);
        assert_eq!(v.eigenvalues.iter().filter(|z| z.re > 0.0).count(), 1);
        let e = endemic_equilibrium(&p3).unwrap().unwrap();
        let v = classify_stability(&p3, e).unwrap();
        assert_eq!(
            v.classification,
            StabilityClass::LocallyAsymptoticallyStable
        );
    }

    #[test]
    fn non_equilibrium_rejected() {
        let err = classify_stability(&table3(), State::new(100.0, 10.0, 5.0)).unwrap_err();
        assert!(matches!(err, Error::NotEquilibrium { .. }));
    }

    #[test]
    fn dfe_eigenvalue_product_identity() {
        for p in [table1(), table2(), table3()] {
            let e = disease_free_equilibrium(&p).unwrap();
            let v = classify_stability(&p, e).unwrap();
            let prod = v
                .eigenvalues
                .iter()
                .fold(Complex64::new(1.0, 0.0), |a, z| a * z);
            // det J(E0) = −(γ+μ1)·(δ+μ1)(y+μ2)(1−R0)
            let r0 = reproduction_number(&p).unwrap();
            let want = -(p.gamma + p.mu1) * (p.delta + p.mu1) * (p.y() + p.mu2) * (1.0 - r0);
            assert!(
                ((prod.re - want) / want).abs() < 1e-9,
                "{} vs {want}",
                prod.re
            );
            assert!(prod.im.abs() < 1e-9 * want.abs());
        }
    }

    fn traj_from(p: &ParameterSet, x0: State, tf: f64) -> Trajectory {
        integrate(p, &SimulationConfig::new(0.0, tf, 0.1, x0)).unwrap()
    }

    #[test]
    fn dfe_lyapunov_decreases() {
        let p = table2();
        let traj = traj_from(&p, State::new(100.0, 10.0, 5.0), 500.0);
        let e0 = disease_free_equilibrium(&p).unwrap();
        let series = lyapunov_descent(&p, &traj, LyapunovTarget::DiseaseFree).unwrap();
        for (pt, x) in series.iter().zip(&traj.states) {
            if x.distance(&e0) > 1e-9 {
                assert!(pt.du_dt < 0.0, "{pt:?} at {x:?}");
            }
        }
    }

    #[test]
    fn lyapunov_pinned_at_dfe() {
        let p = table2();
        let e0 = disease_free_equilibrium(&p).unwrap();
        let traj = Trajectory {
            times: vec![0.0, 1.0, 2.0],
            states: vec![e0; 3],
            step: 1.0,
        };
        let series = lyapunov_descent(&p, &traj, LyapunovTarget::DiseaseFree).unwrap();
        for pt in &series {
            assert_eq!(pt.u, e0.s);
            assert_eq!(pt.du_dt, 0.0);
        }
    }

    #[test]
    fn endemic_lyapunov_decreases_until_converged() {
        let p = table3();
        let traj = traj_from(&p, State::new(520.0, 275.0, 250.0), 400.0);
        let e = endemic_equilibrium(&p).unwrap().unwrap();
        let series = lyapunov_descent(&p, &traj, LyapunovTarget::Endemic).unwrap();
        for (w, x) in series.windows(2).zip(&traj.states) {
            let d = x.distance(&e);
            if d > 1e-6 {
                assert!(w[0].du_dt < 0.0, "{w:?}");
            }
            // Closer in, successive values of U agree to machine precision.
            if d > 1e-3 {
                assert!(w[1].u < w[0].u, "{w:?}");
            }
        }
    }

    #[test]
    fn lyapunov_preconditions() {
        let p = table3();
        let traj = traj_from(&p, State::new(1.0, 1.0, 1.0), 1.0);
        assert!(matches!(
            lyapunov_descent(&p, &traj, LyapunovTarget::DiseaseFree),
            Err(Error::Precondition(_))
        ));
        let traj = Trajectory {
            times: vec![0.0, 1.0],
            states: vec![State::new(1.0, 1.0, 1.0), State::new(1.0, 0.0, 1.0)],
            step: 1.0,
        };
        assert!(matches!(
            lyapunov_descent(&p, &traj, LyapunovTarget::Endemic),
            Err(Error::LogarithmDomain { index: 1, .. })
        ));
    }

    #[test]
    fn endemic_residual_tiny() {
        let p = table3();
        let e = endemic_equilibrium(&p).unwrap().unwrap();
        let r = derivative(&p, e).unwrap();
        assert!(r.norm() <= 1e-9 * field_scale(&p, &e));
    }

    #[test]
    fn sweep_crosses_at_closed_form() {
        let p = table1();
        let wc = critical_value(&p, ParamName::Omega).unwrap();
        assert!((wc - 0.12877).abs() < 1e-5, "{wc}");
        let curve = bifurcation_sweep(
            &p,
            &SweepSpec {
                param: ParamName::Omega,
                lo: 0.0,
                hi: 0.25,
                step: 0.001,
            },
        )
        .unwrap();
        assert_eq!(curve.rows.len(), 251);
        let crossings = curve.r0_crossings();
        assert_eq!(crossings.len(), 1);
        let (a, b) = crossings[0];
        assert!(a <= wc && wc <= b);
        assert_eq!(curve.dfe_flips().len(), 1);
        for r in &curve.rows {
            if r.r0 < 1.0 {
                assert_eq!(r.dfe_class, StabilityClass::LocallyAsymptoticallyStable);
                assert!(r.i_star.is_none());
            } else {
                assert_eq!(r.dfe_class, StabilityClass::Unstable);
                assert_eq!(
                    r.endemic_class,
                    Some(StabilityClass::LocallyAsymptoticallyStable)
                );
            }
        }
    }

    #[test]
    fn sweep_rejects_bad_spec() {
        let spec = SweepSpec {
            param: ParamName::Omega,
            lo: 1.0,
            hi: 0.0,
            step: 0.1,
        };
        assert!(bifurcation_sweep(&table1(), &spec).is_err());
    }

    #[test]
    fn heatmap_degenerate_grid_matches_single_run() {
        let p = table1();
        let spec = HeatmapSpec {
            alpha: (0.25, 0.25),
            gamma: (0.18, 0.18),
            dims: (1, 1),
            t_check: 2.0,
            ..HeatmapSpec::default()
        };
        let grid = doubling_heatmap(&p, &spec).unwrap();
        let p1 = p.with(ParamName::Alpha, 0.25).with(ParamName::Gamma, 0.18);
        let traj = integrate(
            &p1,
            &SimulationConfig::new(0.0, 2.0, HEATMAP_STEP, spec.initial),
        )
        .unwrap();
        assert_eq!(grid.load, vec![vec![traj.last().unwrap().b]]);
    }

    #[test]
    fn heatmap_without_production_decays() {
        let spec = HeatmapSpec {
            alpha: (0.0, 0.0),
            dims: (1, 3),
            ..HeatmapSpec::default()
        };
        let grid = doubling_heatmap(&table1(), &spec).unwrap();
        assert!(grid.cells().all(|(_, _, b)| (0.0..40.0).contains(&b)));
    }

    #[test]
    fn heatmap_csv_shape() {
        let spec = HeatmapSpec {
            dims: (2, 3),
            t_check: 0.5,
            ..HeatmapSpec::default()
        };
        let grid = doubling_heatmap(&table1(), &spec).unwrap();
        let mut buf = Vec::new();
        grid.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines.iter().all(|l| l.split(',').count() == 4));
    }
}
