//! Global sensitivity analysis: Latin hypercube sampling, ensemble runs,
//! Spearman / partial rank correlation, and correlation-form Sobol indices
//! `Corr(Y, E[Y | x])`.

use std::fmt;
use std::io::{self, Write};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::reproduction_number;
use crate::error::{Error, Result};
use crate::model::{fmt_f64, integrate, ParamName, ParameterSet, SimulationConfig, State};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParameterRange {
    pub name: ParamName,
    pub lo: f64,
    pub hi: f64,
}

impl ParameterRange {
    /// Bounds may be given in either order; they are stored as `lo < hi`.
    pub fn new(name: ParamName, a: f64, b: f64) -> Result<Self> {
        if !(a.is_finite() && b.is_finite()) {
            return Err(Error::InvalidParameter {
                name: name.to_string(),
                reason: "range bounds must be finite".into(),
            });
        }
        if a.min(b) < 0.0 {
            return Err(Error::InvalidParameter {
                name: name.to_string(),
                reason: format!("range [{a}, {b}] leaves the domain >= 0"),
            });
        }
        if a == b {
            return Err(Error::DegenerateRange {
                name: name.to_string(),
                value: a,
            });
        }
        Ok(Self {
            name,
            lo: a.min(b),
            hi: a.max(b),
        })
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }
}

/// `n_samples × n_params` Latin hypercube draws.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleMatrix {
    pub ranges: Vec<ParameterRange>,
    pub seed: u64,
    pub rows: Vec<Vec<f64>>,
}

impl SampleMatrix {
    pub fn n_samples(&self) -> usize {
        self.rows.len()
    }

    pub fn n_params(&self) -> usize {
        self.ranges.len()
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r[j]).collect()
    }

    pub fn columns(&self) -> Vec<Vec<f64>> {
        (0..self.n_params()).map(|j| self.column(j)).collect()
    }

    pub fn position(&self, name: ParamName) -> Option<usize> {
        self.ranges.iter().position(|r| r.name == name)
    }

    /// `base` with sample `k` overriding the sampled rates.
    pub fn params_for(&self, k: usize, base: &ParameterSet) -> ParameterSet {
        self.ranges
            .iter()
            .zip(&self.rows[k])
            .fold(*base, |p, (r, &v)| p.with(r.name, v))
    }
}

/// One draw per equal-width stratum in every column, strata independently
/// permuted per column. Deterministic in `seed`.
pub fn lhs_sample(ranges: &[ParameterRange], n: usize, seed: u64) -> Result<SampleMatrix> {
    if ranges.is_empty() {
        return Err(Error::Precondition("no parameter ranges".into()));
    }
    if n < 2 {
        return Err(Error::Precondition(format!("need n >= 2 samples, got {n}")));
    }
    for r in ranges {
        if r.lo == r.hi {
            return Err(Error::DegenerateRange {
                name: r.name.to_string(),
                value: r.lo,
            });
        }
        if r.lo.partial_cmp(&r.hi) != Some(std::cmp::Ordering::Less) {
            return Err(Error::InvalidParameter {
                name: r.name.to_string(),
                reason: format!("range lo {} must be < hi {}", r.lo, r.hi),
            });
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = vec![Vec::with_capacity(ranges.len()); n];
    for r in ranges {
        let mut strata: Vec<usize> = (0..n).collect();
        strata.shuffle(&mut rng);
        for (row, stratum) in rows.iter_mut().zip(strata) {
            let u: f64 = rng.random();
            let v = r.lo + r.width() * (stratum as f64 + u) / n as f64;
            row.push(v.min(r.hi));
        }
    }
    Ok(SampleMatrix {
        ranges: ranges.to_vec(),
        seed,
        rows,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Output {
    S,
    I,
    B,
}

impl Output {
    pub const ALL: [Output; 3] = [Output::S, Output::I, Output::B];

    pub fn of(&self, x: &State) -> f64 {
        match self {
            Output::S => x.s,
            Output::I => x.i,
            Output::B => x.b,
        }
    }
}

impl fmt::Display for Output {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Output::S => "S",
            Output::I => "I",
            Output::B => "B",
        })
    }
}

impl FromStr for Output {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "S" | "s" => Ok(Output::S),
            "I" | "i" => Ok(Output::I),
            "B" | "b" => Ok(Output::B),
            other => Err(Error::UnknownName(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleFailure {
    pub index: usize,
    pub error: String,
}

/// States at the probe times for every sample (`None` for failed samples).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleOutput {
    pub probe_times: Vec<f64>,
    pub outputs: Vec<Option<Vec<State>>>,
    pub failures: Vec<EnsembleFailure>,
}

impl EnsembleOutput {
    /// Sample indices and values of `output` at probe `p`, failed samples excluded.
    pub fn values(&self, output: Output, p: usize) -> (Vec<usize>, Vec<f64>) {
        self.outputs
            .iter()
            .enumerate()
            .filter_map(|(k, row)| row.as_ref().map(|r| (k, output.of(&r[p]))))
            .unzip()
    }
}

/// Default probes: every day over the horizon.
pub fn daily_probes(sim: &SimulationConfig) -> Vec<f64> {
    let days = (sim.tf - sim.t0).floor() as usize;
    (0..=days).map(|d| sim.t0 + d as f64).collect()
}

pub fn run_ensemble(
    samples: &SampleMatrix,
    base: &ParameterSet,
    sim: &SimulationConfig,
    probe_times: &[f64],
) -> Result<EnsembleOutput> {
    sim.validate()?;
    if let Some(t) = probe_times
        .iter()
        .find(|&&t| !(sim.t0..=sim.tf).contains(&t))
    {
        return Err(Error::Precondition(format!(
            "probe time {t} outside [{}, {}]",
            sim.t0, sim.tf
        )));
    }
    let results: Vec<std::result::Result<Vec<State>, String>> = (0..samples.n_samples())
        .into_par_iter()
        .map(|k| {
            let p = samples.params_for(k, base);
            let traj = integrate(&p, sim).map_err(|e| e.to_string())?;
            probe_times
                .iter()
                .map(|&t| {
                    let idx = traj.nearest_index(t).expect("non-empty trajectory");
                    let x = traj.states[idx];
                    if x.is_finite() {
                        Ok(x)
                    } else {
                        Err(format!("non-finite state at t = {t}"))
                    }
                })
                .collect()
        })
        .collect();
    let mut outputs = Vec::with_capacity(results.len());
    let mut failures = Vec::new();
    for (index, r) in results.into_iter().enumerate() {
        match r {
            Ok(v) => outputs.push(Some(v)),
            Err(error) => {
                failures.push(EnsembleFailure { index, error });
                outputs.push(None);
            }
        }
    }
    Ok(EnsembleOutput {
        probe_times: probe_times.to_vec(),
        outputs,
        failures,
    })
}

/// Ranks starting at 1; tied values share their average rank.
pub fn ranks(v: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut out = vec![0.0; v.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && v[order[end]] == v[order[start]] {
            end += 1;
        }
        // positions start..end (0-based) hold ranks start+1..=end
        let avg = (start + end + 1) as f64 / 2.0;
        for &k in &order[start..end] {
            out[k] = avg;
        }
        start = end;
    }
    out
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn centered(v: &[f64]) -> Vec<f64> {
    let m = mean(v);
    v.iter().map(|x| x - m).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Pearson correlation, clamped into `[-1, 1]` against roundoff.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::Precondition(format!(
            "length mismatch {} vs {}",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 2 {
        return Err(Error::UndefinedCorrelation("fewer than two points".into()));
    }
    let (cx, cy) = (centered(x), centered(y));
    let (sxx, syy) = (dot(&cx, &cx), dot(&cy, &cy));
    if sxx == 0.0 {
        return Err(Error::UndefinedCorrelation(
            "first vector is constant".into(),
        ));
    }
    if syy == 0.0 {
        return Err(Error::UndefinedCorrelation(
            "second vector is constant".into(),
        ));
    }
    Ok((dot(&cx, &cy) / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Spearman rank correlation.
pub fn srcc(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::Precondition(format!(
            "length mismatch {} vs {}",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 3 {
        return Err(Error::Precondition("need at least 3 points".into()));
    }
    pearson(&ranks(x), &ranks(y))
}

/// Partial rank correlation of column `target` of `x` with `y`, controlling
/// for every other column. Columns are named `x0, x1, ...` in errors.
pub fn prcc(x: &[Vec<f64>], y: &[f64], target: usize) -> Result<f64> {
    let names: Vec<String> = (0..x.len()).map(|j| format!("x{j}")).collect();
    prcc_named(x, &names, y, target)
}

pub fn prcc_named(x: &[Vec<f64>], names: &[String], y: &[f64], target: usize) -> Result<f64> {
    let p = x.len();
    if target >= p {
        return Err(Error::Precondition(format!(
            "target column {target} out of range (have {p})"
        )));
    }
    let n = y.len();
    if x.iter().any(|c| c.len() != n) {
        return Err(Error::Precondition(
            "column lengths differ from output".into(),
        ));
    }
    if n < p + 3 {
        return Err(Error::Precondition(format!(
            "need at least {} samples for {p} columns, got {n}",
            p + 3
        )));
    }
    let ranked: Vec<Vec<f64>> = x.iter().map(|c| centered(&ranks(c))).collect();
    for (j, c) in ranked.iter().enumerate() {
        if dot(c, c) == 0.0 {
            return Err(Error::UndefinedCorrelation(format!(
                "column `{}` is constant",
                names[j]
            )));
        }
    }

    // Orthonormal basis of the control columns (modified Gram-Schmidt, two passes).
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(p - 1);
    let mut basis_names: Vec<String> = Vec::new();
    for (j, c) in ranked.iter().enumerate() {
        if j == target {
            continue;
        }
        let v = residualize(c, &basis);
        let norm = dot(&v, &v).sqrt();
        if norm <= 1e-10 * dot(c, c).sqrt() {
            return Err(Error::RankDeficient {
                column: names[j].clone(),
                with: basis_names,
            });
        }
        basis.push(v.iter().map(|x| x / norm).collect());
        basis_names.push(names[j].clone());
    }
    let rt = &ranked[target];
    let resid_x = residualize(rt, &basis);
    if dot(&resid_x, &resid_x).sqrt() <= 1e-10 * dot(rt, rt).sqrt() {
        return Err(Error::RankDeficient {
            column: names[target].clone(),
            with: basis_names,
        });
    }
    let resid_y = residualize(&centered(&ranks(y)), &basis);
    pearson(&resid_x, &resid_y)
}

fn residualize(v: &[f64], basis: &[Vec<f64>]) -> Vec<f64> {
    let mut r = v.to_vec();
    for _ in 0..2 {
        for q in basis {
            let c = dot(&r, q);
            r.iter_mut().zip(q).for_each(|(x, qi)| *x -= c * qi);
        }
    }
    r
}

/// Estimator for the conditional expectation `E[Y | bin]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConditionalMean {
    /// Mean of the other members of the sample's bin. Removes the positive
    /// bias of in-sample bin means, so an independent input scores near zero.
    #[default]
    LeaveOneOut,
    /// Plain bin mean including the sample itself.
    InSample,
}

/// Equal-count bin of every sample by the rank order of `x` (ties by index).
pub fn equal_count_bins(x: &[f64], bins: usize) -> Vec<usize> {
    let n = x.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut out = vec![0; n];
    for (r, &k) in order.iter().enumerate() {
        out[k] = r * bins / n;
    }
    out
}

/// Conditional-mean vector from bin labels in `0..cells`.
pub fn conditional_means(
    labels: &[usize],
    cells: usize,
    y: &[f64],
    mode: ConditionalMean,
) -> Result<Vec<f64>> {
    let mut sum = vec![0.0; cells];
    let mut count = vec![0usize; cells];
    for (&c, &v) in labels.iter().zip(y) {
        sum[c] += v;
        count[c] += 1;
    }
    let min_count = match mode {
        ConditionalMean::LeaveOneOut => 2,
        ConditionalMean::InSample => 1,
    };
    if let Some(bin) = count.iter().position(|&c| c < min_count) {
        return Err(Error::EmptyBin { bin, bins: cells });
    }
    Ok(labels
        .iter()
        .zip(y)
        .map(|(&c, &v)| match mode {
            ConditionalMean::LeaveOneOut => (sum[c] - v) / (count[c] - 1) as f64,
            ConditionalMean::InSample => sum[c] / count[c] as f64,
        })
        .collect())
}

#[derive(Debug, Clone, Copy)]
pub enum SobolInput<'a> {
    Single(&'a [f64]),
    Pair(&'a [f64], &'a [f64]),
}

/// Correlation-form Sobol index `Corr(Y, E[Y | x])`. For pairs the
/// conditioning cells are a `bins × bins` grid of per-axis equal-count bins.
pub fn sobol_index(
    x: SobolInput<'_>,
    y: &[f64],
    bins: usize,
    mode: ConditionalMean,
) -> Result<f64> {
    if bins < 2 {
        return Err(Error::Precondition(format!("need bins >= 2, got {bins}")));
    }
    let n = y.len();
    let (labels, cells) = match x {
        SobolInput::Single(a) => {
            if a.len() != n {
                return Err(Error::Precondition("length mismatch".into()));
            }
            (equal_count_bins(a, bins), bins)
        }
        SobolInput::Pair(a, b) => {
            if a.len() != n || b.len() != n {
                return Err(Error::Precondition("length mismatch".into()));
            }
            let (la, lb) = (equal_count_bins(a, bins), equal_count_bins(b, bins));
            let labels = la.iter().zip(&lb).map(|(i, j)| i * bins + j).collect();
            (labels, bins * bins)
        }
    };
    if n < 5 * cells {
        return Err(Error::Precondition(format!(
            "{n} samples for {cells} bins; need at least 5 per bin on average"
        )));
    }
    let cond = conditional_means(&labels, cells, y, mode)?;
    pearson(y, &cond)
}

/// `round(sqrt(n))` bins for a single input.
pub fn default_bins(n: usize) -> usize {
    ((n as f64).sqrt().round() as usize).max(2)
}

/// Per-axis bins for a pair: `round(n^(1/4))`, keeping a full `bins²` grid populated.
pub fn default_pair_bins(n: usize) -> usize {
    ((n as f64).powf(0.25).round() as usize).max(2)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SobolResult {
    pub target: String,
    pub params: Vec<ParamName>,
    pub index: f64,
}

impl SobolResult {
    pub fn label(&self) -> String {
        self.params
            .iter()
            .map(ParamName::as_str)
            .collect::<Vec<_>>()
            .join("+")
    }
}

pub fn write_sobol_csv<W: Write>(results: &[SobolResult], mut w: W) -> io::Result<()> {
    writeln!(w, "target,params,index")?;
    for r in results {
        writeln!(w, "{},{},{}", r.target, r.label(), fmt_f64(r.index))?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SobolBins {
    pub single: Option<usize>,
    pub pair: Option<usize>,
    pub mode: ConditionalMean,
}

/// Sobol indices of `R0` for each listed parameter and parameter pair.
pub fn r0_sensitivity(
    samples: &SampleMatrix,
    base: &ParameterSet,
    singles: &[ParamName],
    pairs: &[(ParamName, ParamName)],
    bins: SobolBins,
) -> Result<Vec<SobolResult>> {
    let col = |name: ParamName| {
        samples
            .position(name)
            .map(|j| samples.column(j))
            .ok_or_else(|| {
                Error::Precondition(format!(
                    "parameter `{name}` is not among the sampled ranges"
                ))
            })
    };
    let r0: Vec<f64> = (0..samples.n_samples())
        .map(|k| reproduction_number(&samples.params_for(k, base)))
        .collect::<Result<_>>()?;
    let n = r0.len();
    let single_bins = bins.single.unwrap_or_else(|| default_bins(n));
    let pair_bins = bins.pair.unwrap_or_else(|| default_pair_bins(n));

    let mut out = Vec::with_capacity(singles.len() + pairs.len());
    for &name in singles {
        let x = col(name)?;
        out.push(SobolResult {
            target: "R0".into(),
            params: vec![name],
            index: sobol_index(SobolInput::Single(&x), &r0, single_bins, bins.mode)?,
        });
    }
    for &(a, b) in pairs {
        let (xa, xb) = (col(a)?, col(b)?);
        out.push(SobolResult {
            target: "R0".into(),
            params: vec![a, b],
            index: sobol_index(SobolInput::Pair(&xa, &xb), &r0, pair_bins, bins.mode)?,
        });
    }
    Ok(out)
}

/// Every unordered pair of `names`, in lexicographic index order.
pub fn all_pairs(names: &[ParamName]) -> Vec<(ParamName, ParamName)> {
    let mut out = Vec::new();
    for (i, &a) in names.iter().enumerate() {
        for &b in &names[i + 1..] {
            out.push((a, b));
        }
    }
    out
}

/// A coefficient per probe time for one (parameter, output) combination.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivitySeries {
    pub output: Output,
    pub param: String,
    pub times: Vec<f64>,
    pub coefficients: Vec<f64>,
}

impl SensitivitySeries {
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "t,coefficient")?;
        for (t, c) in self.times.iter().zip(&self.coefficients) {
            writeln!(w, "{},{}", fmt_f64(*t), fmt_f64(*c))?;
        }
        Ok(())
    }
}

/// Which time-resolved coefficient to compute.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum SeriesMethod {
    Srcc,
    Prcc,
    Sobol { bins: usize, mode: ConditionalMean },
}

/// Coefficient of `param` against `output` at every probe time. Failed
/// samples are dropped; probe times where the output is constant across
/// samples (e.g. the shared initial state) are skipped.
pub fn coefficient_series(
    samples: &SampleMatrix,
    ensemble: &EnsembleOutput,
    param: ParamName,
    output: Output,
    method: SeriesMethod,
) -> Result<SensitivitySeries> {
    let j = samples.position(param).ok_or_else(|| {
        Error::Precondition(format!(
            "parameter `{param}` is not among the sampled ranges"
        ))
    })?;
    let names: Vec<String> = samples.ranges.iter().map(|r| r.name.to_string()).collect();
    let mut times = Vec::new();
    let mut coefficients = Vec::new();
    for (p, &t) in ensemble.probe_times.iter().enumerate() {
        let (idx, y) = ensemble.values(output, p);
        let coef = match method {
            SeriesMethod::Srcc => {
                let x: Vec<f64> = idx.iter().map(|&k| samples.rows[k][j]).collect();
                srcc(&x, &y)
            }
            SeriesMethod::Prcc => {
                let cols: Vec<Vec<f64>> = (0..samples.n_params())
                    .map(|c| idx.iter().map(|&k| samples.rows[k][c]).collect())
                    .collect();
                prcc_named(&cols, &names, &y, j)
            }
            SeriesMethod::Sobol { bins, mode } => {
                let x: Vec<f64> = idx.iter().map(|&k| samples.rows[k][j]).collect();
                sobol_index(SobolInput::Single(&x), &y, bins, mode)
            }
        };
        match coef {
            Ok(c) => {
                times.push(t);
                coefficients.push(c);
            }
            Err(Error::UndefinedCorrelation(_)) => continue,
            Err(e) => return Err(e),
        }
    }
    Ok(SensitivitySeries {
        output,
        param: param.to_string(),
        times,
        coefficients,
    })
}

/// `param_value,output_value` rows for one parameter against one output at one probe.
pub fn write_scatter_csv<W: Write>(
    samples: &SampleMatrix,
    ensemble: &EnsembleOutput,
    param: ParamName,
    output: Output,
    probe: usize,
    mut w: W,
) -> io::Result<()> {
    let j = samples
        .position(param)
        .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidInput, "parameter not sampled"))?;
    writeln!(w, "param_value,output_value")?;
    let (idx, y) = ensemble.values(output, probe);
    for (k, v) in idx.into_iter().zip(y) {
        writeln!(w, "{},{}", fmt_f64(samples.rows[k][j]), fmt_f64(v))?;
    }
    Ok(())
}
