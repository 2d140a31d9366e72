//! Reproduction targets. Each rebuilds one published table or figure from
//! its fixed setup, writes the plot-ready data and checks it against the
//! tolerance the result is held to.

use anyhow::Result;
use lepra_core::analysis::{
    bifurcation_sweep, classify_stability, doubling_heatmap, endemic_closed_form, equilibria,
    HeatmapSpec, StabilityClass, SweepSpec,
};
use lepra_core::control::{
    compare_combinations, write_comparison_csv, DrugMask, OptimalControlProblem,
};
use lepra_core::effectiveness::{
    derive_efficacies, percent_reduction, rank_with_profiles, EfficacyProfile,
};
use lepra_core::presets::{self, EFFICACY_LEVELS, HAZARD_RATIOS};
use lepra_core::sensitivity::{
    all_pairs, coefficient_series, lhs_sample, prcc, r0_sensitivity, srcc, write_sobol_csv, Output,
    SeriesMethod, SobolBins,
};
use lepra_core::{integrate, ParamName, ParameterSet, SimulationConfig, State};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::commands;
use crate::config::ScenarioConfig;
use crate::output::OutDir;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Target {
    Table2Eq,
    Table3Eq,
    Fig3Bifurcation,
    Fig4Heatmap,
    Fig5Srcc,
    Fig6Prcc,
    Fig8R0Sobol,
    Table6Ordering,
    Table7Rank,
}

impl Target {
    pub fn id(&self) -> &'static str {
        match self {
            Target::Table2Eq => "table2-eq",
            Target::Table3Eq => "table3-eq",
            Target::Fig3Bifurcation => "fig3-bifurcation",
            Target::Fig4Heatmap => "fig4-heatmap",
            Target::Fig5Srcc => "fig5-srcc",
            Target::Fig6Prcc => "fig6-prcc",
            Target::Fig8R0Sobol => "fig8-r0-sobol",
            Target::Table6Ordering => "table6-ordering",
            Target::Table7Rank => "table7-rank",
        }
    }
}

#[derive(Debug, Serialize)]
pub struct Check {
    pub what: String,
    pub pass: bool,
}

#[derive(Debug, Serialize)]
pub struct Verdict {
    pub target: &'static str,
    pub pass: bool,
    pub checks: Vec<Check>,
}

impl Verdict {
    pub fn render(&self) -> String {
        let mut lines = vec![format!(
            "[{}] {}",
            if self.pass { "PASS" } else { "FAIL" },
            self.target
        )];
        for c in &self.checks {
            lines.push(format!(
                "  {} {}",
                if c.pass { "ok  " } else { "FAIL" },
                c.what
            ));
        }
        lines.join("\n")
    }
}

#[derive(Default)]
struct Checks(Vec<Check>);

impl Checks {
    fn add(&mut self, what: impl Into<String>, pass: bool) {
        self.0.push(Check {
            what: what.into(),
            pass,
        });
    }
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

pub fn run(target: Target, cfg: &ScenarioConfig, out: &mut OutDir) -> Result<Verdict> {
    let seed = cfg.seed.unwrap_or(42);
    let mut c = Checks::default();
    match target {
        Target::Table2Eq => table2(&mut c, out, seed)?,
        Target::Table3Eq => table3(&mut c, out, seed)?,
        Target::Fig3Bifurcation => fig3(&mut c, out)?,
        Target::Fig4Heatmap => fig4(&mut c, out)?,
        Target::Fig5Srcc => correlation_figure(&mut c, cfg, out, seed, SeriesMethod::Srcc)?,
        Target::Fig6Prcc => correlation_figure(&mut c, cfg, out, seed, SeriesMethod::Prcc)?,
        Target::Fig8R0Sobol => fig8(&mut c, cfg, out, seed)?,
        Target::Table6Ordering => table6(&mut c, out)?,
        Target::Table7Rank => table7(&mut c, out)?,
    }
    let verdict = Verdict {
        target: target.id(),
        pass: c.0.iter().all(|x| x.pass),
        checks: c.0,
    };
    out.write_json("verdict.json", &verdict)?;
    Ok(verdict)
}

/// Ten seeded random starts, integrated to `horizon`; returns the worst
/// final distance relative to `target`.
fn random_starts(
    p: &ParameterSet,
    target: State,
    horizon: f64,
    rng: &mut ChaCha8Rng,
) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for _ in 0..10 {
        let x0 = State::new(
            rng.random_range(1.0..200.0),
            rng.random_range(0.0..100.0),
            rng.random_range(0.0..100.0),
        );
        let traj = integrate(p, &SimulationConfig::new(0.0, horizon, 0.1, x0))?;
        let end = traj.last().copied().unwrap_or(x0);
        worst = worst.max(end.distance(&target) / target.norm());
    }
    Ok(worst)
}

fn table2(c: &mut Checks, out: &mut OutDir, seed: u64) -> Result<()> {
    let p = presets::table2();
    let rep = equilibria(&p)?;
    out.write_json("equilibria.json", &rep)?;
    c.add(
        format!("R0 = {:.6} vs 0.9939 ± 5e-4", rep.r0),
        close(rep.r0, 0.9939, 5e-4),
    );
    let d = rep.dfe;
    c.add(
        format!(
            "DFE = ({:.4}, {}, {}) vs (55.1899, 0, 0) ± 1e-3",
            d.s, d.i, d.b
        ),
        close(d.s, 55.1899, 1e-3) && d.i == 0.0 && d.b == 0.0,
    );
    let class = classify_stability(&p, d)?.classification;
    c.add(
        format!("DFE is {class}"),
        class == StabilityClass::LocallyAsymptoticallyStable,
    );
    c.add("no endemic equilibrium", rep.endemic.is_none());
    let worst = random_starts(&p, d, 10_000.0, &mut ChaCha8Rng::seed_from_u64(seed))?;
    c.add(
        format!("10 random starts reach the DFE within 0.5% (worst {worst:.2e})"),
        worst <= 0.005,
    );
    Ok(())
}

fn table3(c: &mut Checks, out: &mut OutDir, seed: u64) -> Result<()> {
    let p = presets::table3();
    let rep = equilibria(&p)?;
    out.write_json("equilibria.json", &rep)?;
    c.add(
        format!("R0 = {:.6} vs 29.6341 ± 1e-3", rep.r0),
        close(rep.r0, 29.6341, 1e-3),
    );
    let class = classify_stability(&p, rep.dfe)?.classification;
    c.add(format!("DFE is {class}"), class == StabilityClass::Unstable);
    let Some(e) = rep.endemic else {
        c.add("endemic equilibrium exists", false);
        return Ok(());
    };
    let want = [38.9006, 75.2748, 17.3046];
    let got = e.to_array();
    let rel = (0..3)
        .map(|k| ((got[k] - want[k]) / want[k]).abs())
        .fold(0.0, f64::max);
    c.add(
        format!(
            "E* = ({:.4}, {:.4}, {:.4}); max relative error {rel:.2e} <= 1e-3",
            got[0], got[1], got[2]
        ),
        rel <= 1e-3,
    );
    let class = classify_stability(&p, e)?.classification;
    c.add(
        format!("E* is {class}"),
        class == StabilityClass::LocallyAsymptoticallyStable,
    );
    let worst = random_starts(&p, e, 1_000.0, &mut ChaCha8Rng::seed_from_u64(seed))?;
    c.add(
        format!("10 random starts reach E* within 0.5% (worst {worst:.2e})"),
        worst <= 0.005,
    );
    Ok(())
}

fn fig3(c: &mut Checks, out: &mut OutDir) -> Result<()> {
    let p = presets::table1();
    let sweep = SweepSpec {
        param: ParamName::Omega,
        lo: 0.0,
        hi: 0.25,
        step: 0.001,
    };
    let curve = bifurcation_sweep(&p, &sweep)?;
    out.write("bifurcation.csv", |w| curve.write_csv(w))?;
    let omega_c = lepra_core::analysis::critical_value(&p, ParamName::Omega)?;
    let flips: Vec<f64> = curve
        .dfe_flips()
        .into_iter()
        .map(|k| curve.rows[k].value)
        .collect();
    c.add(
        format!(
            "DFE stability exchange at {flips:?}, within {} of ω_c = {omega_c:.6}",
            sweep.step
        ),
        flips.len() == 1 && (flips[0] - omega_c).abs() <= sweep.step,
    );
    let signs = curve.rows.iter().all(|r| {
        let i_star = endemic_closed_form(&p.with(ParamName::Omega, r.value))
            .map_or(f64::NEG_INFINITY, |e| e.i);
        if r.value < omega_c {
            i_star <= 0.0
        } else if r.value > omega_c {
            i_star > 0.0 && r.i_star.is_some()
        } else {
            true
        }
    });
    c.add("I* <= 0 below ω_c and > 0 above", signs);
    Ok(())
}

fn fig4(c: &mut Checks, out: &mut OutDir) -> Result<()> {
    let grid = doubling_heatmap(&presets::table1(), &HeatmapSpec::default())?;
    out.write("heatmap.csv", |w| grid.write_csv(w))?;
    let (lo, hi) = grid
        .cells()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (_, _, b)| {
            (lo.min(b), hi.max(b))
        });
    let hits = grid
        .cells()
        .filter(|&(_, _, b)| (78.0..=82.0).contains(&b))
        .count();
    c.add(
        format!("B(14 d) spans [{lo:.2}, {hi:.2}]; {hits} cells in [78, 82]"),
        hits > 0,
    );
    Ok(())
}

/// Oracle checks of the estimator on synthetic data at n = 1000.
fn estimator_oracles(c: &mut Checks, seed: u64, method: SeriesMethod) -> Result<()> {
    let n = 1000;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
    let z: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
    let e: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
    let up: Vec<f64> = x.iter().map(|v| v.exp()).collect();
    let down: Vec<f64> = x.iter().map(|v| -v.powi(3)).collect();
    let tx: Vec<f64> = x.iter().map(|v| (0.5 * v).exp()).collect();
    let tz: Vec<f64> = z.iter().map(|v| v.powi(3)).collect();
    let y: Vec<f64> = x.iter().zip(&e).map(|(a, b)| a + 0.1 * b).collect();
    let (mono_up, mono_down, null, moved) = match method {
        SeriesMethod::Prcc => (
            prcc(&[x.clone(), z.clone()], &up, 0)?,
            prcc(&[x.clone(), z.clone()], &down, 0)?,
            prcc(&[x.clone(), z.clone()], &e, 1)?,
            (prcc(&[tx, tz], &y, 0)? - prcc(&[x.clone(), z.clone()], &y, 0)?).abs(),
        ),
        _ => (
            srcc(&x, &up)?,
            srcc(&x, &down)?,
            srcc(&z, &e)?,
            (srcc(&tx, &y)? - srcc(&x, &y)?).abs(),
        ),
    };
    c.add(
        format!("monotone inputs give {mono_up} / {mono_down}"),
        close(mono_up, 1.0, 1e-12) && close(mono_down, -1.0, 1e-12),
    );
    c.add(
        format!("independent input gives |{null:.4}| < 0.1"),
        null.abs() < 0.1,
    );
    c.add(
        format!("monotone transforms change the coefficient by {moved:e}"),
        moved <= 1e-12,
    );
    Ok(())
}

fn correlation_figure(
    c: &mut Checks,
    cfg: &ScenarioConfig,
    out: &mut OutDir,
    seed: u64,
    method: SeriesMethod,
) -> Result<()> {
    estimator_oracles(c, seed, method)?;
    let mut cfg = cfg.clone();
    let mut block = cfg.sensitivity();
    block.seed = Some(block.seed.unwrap_or(seed));
    cfg.sensitivity = Some(block);
    let (samples, ens, _) = commands::ensemble(&cfg, "table1")?;
    c.add(
        format!(
            "{} of {} ensemble runs succeeded",
            ens.outputs.iter().flatten().count(),
            ens.outputs.len()
        ),
        ens.failures.is_empty(),
    );
    let tag = if method == SeriesMethod::Prcc {
        "prcc"
    } else {
        "srcc"
    };
    let mut in_range = true;
    for r in &samples.ranges {
        for output in Output::ALL {
            let s = coefficient_series(&samples, &ens, r.name, output, method)?;
            in_range &= s.coefficients.iter().all(|v| (-1.0..=1.0).contains(v));
            out.write(&format!("{tag}_{}_{output}.csv", r.name), |w| {
                s.write_csv(w)
            })?;
        }
    }
    c.add("every coefficient lies in [-1, 1]", in_range);
    Ok(())
}

fn fig8(c: &mut Checks, cfg: &ScenarioConfig, out: &mut OutDir, seed: u64) -> Result<()> {
    let n = cfg.sensitivity.as_ref().map_or(1000, |b| b.n);
    let ranges = presets::sensitivity_ranges();
    let samples = lhs_sample(&ranges, n, seed)?;
    let singles: Vec<ParamName> = ranges.iter().map(|r| r.name).collect();
    let res = r0_sensitivity(
        &samples,
        &presets::table1(),
        &singles,
        &all_pairs(&singles),
        SobolBins::default(),
    )?;
    out.write("r0_sobol.csv", |w| write_sobol_csv(&res, w))?;
    let (mut one, mut two): (Vec<_>, Vec<_>) = res.iter().partition(|r| r.params.len() == 1);
    one.sort_by(|a, b| b.index.abs().total_cmp(&a.index.abs()));
    two.sort_by(|a, b| b.index.abs().total_cmp(&a.index.abs()));
    let order: Vec<String> = one.iter().map(|r| r.label()).collect();
    c.add(
        format!("singles by |index|: {order:?}; alpha first, delta second"),
        one[0].params == [ParamName::Alpha] && one[1].params == [ParamName::Delta],
    );
    c.add(
        format!("strongest pair: {}", two[0].label()),
        two[0].params.contains(&ParamName::Alpha) && two[0].params.contains(&ParamName::Delta),
    );
    let y = one
        .iter()
        .find(|r| r.params == [ParamName::Y])
        .map_or(f64::NAN, |r| r.index);
    c.add(format!("y index {y:.4} < 0"), y < 0.0);
    Ok(())
}

fn table6(c: &mut Checks, out: &mut OutDir) -> Result<()> {
    let rows = compare_combinations(
        &OptimalControlProblem::therapy(DrugMask::MDT),
        &DrugMask::STANDARD,
    )?;
    out.write("comparison.csv", |w| write_comparison_csv(&rows, w))?;
    let get = |m: DrugMask| {
        rows.iter()
            .find(|r| r.mask == m)
            .expect("standard mask present")
    };
    let mdt = get(DrugMask::MDT);
    let pair = get(DrugMask::new(true, true, false, false));
    let singles: Vec<_> = DrugMask::STANDARD[..3].iter().map(|&m| get(m)).collect();
    let ordered = |f: fn(&State) -> f64| {
        f(&mdt.averages) < f(&pair.averages)
            && singles.iter().all(|s| f(&pair.averages) < f(&s.averages))
    };
    c.add(
        "mean I: MDT < rifampin+dapsone < each single drug",
        ordered(|x| x.i),
    );
    c.add(
        "mean B: MDT < rifampin+dapsone < each single drug",
        ordered(|x| x.b),
    );
    let worst = rows
        .iter()
        .max_by(|a, b| a.averages.b.total_cmp(&b.averages.b))
        .expect("rows");
    c.add(
        format!("largest mean B: {}", worst.mask),
        worst.mask == DrugMask::new(false, false, true, false),
    );
    let best = rows
        .iter()
        .min_by(|a, b| a.cost.total_cmp(&b.cost))
        .expect("rows");
    c.add(
        format!("smallest J: {} ({:.3})", best.mask, best.cost),
        best.mask == DrugMask::MDT,
    );
    Ok(())
}

fn table7(c: &mut Checks, out: &mut OutDir) -> Result<()> {
    let p = presets::table3();
    let levels: Vec<(String, EfficacyProfile)> = EFFICACY_LEVELS
        .iter()
        .map(|&(n, b)| Ok((n.to_string(), derive_efficacies(b, &HAZARD_RATIOS)?)))
        .collect::<Result<_>>()?;
    let table = rank_with_profiles(&p, &levels)?;
    out.write("ranking.csv", |w| table.write_csv(w))?;
    let dapsone_printed = [7.88, 15.75, 23.63];
    let rif = DrugMask::new(true, false, false, false);
    let dap = DrugMask::new(false, true, false, false);
    for (k, (name, prof)) in levels.iter().enumerate() {
        let r = percent_reduction(&p, prof, &rif)?;
        let want = EFFICACY_LEVELS[k].1 * 100.0;
        c.add(
            format!("rifampin {name} {r:.6} vs {want} ± 1e-6"),
            close(r, want, 1e-6),
        );
        let d = percent_reduction(&p, prof, &dap)?;
        c.add(
            format!("dapsone {name} {d:.6} vs {} ± 5e-3", dapsone_printed[k]),
            close(d, dapsone_printed[k], 5e-3),
        );
    }
    let both = percent_reduction(&p, &levels[0].1, &DrugMask::new(true, true, false, false))?;
    c.add(
        format!("rifampin+dapsone LE {both:.6} vs 35.516 ± 1e-3"),
        close(both, 35.516, 1e-3),
    );
    let printed_ranks = [4, 2, 1, 6, 5, 3, 7];
    let mut all = true;
    for k in 1..=40 {
        let cz = k as f64 * 1e-3;
        let swept: Vec<(String, EfficacyProfile)> = levels
            .iter()
            .map(|(n, q)| Ok((n.clone(), EfficacyProfile::new(q.rho, q.epsilon, cz)?)))
            .collect::<Result<_>>()?;
        let t = rank_with_profiles(&p, &swept)?;
        for l in 0..swept.len() {
            all &= t.rows.iter().map(|r| r.levels[l].rank).eq(printed_ranks);
        }
    }
    c.add(
        "rank columns match for clofazimine efficacy 0.001 ..= 0.040",
        all,
    );
    Ok(())
}
