//! One function per subcommand. Each writes its files into the output
//! directory and returns a short human-readable summary.

use std::io::Write as _;

use anyhow::{bail, Result};
use lepra_core::analysis::{
    bifurcation_sweep, classify_stability, critical_value, doubling_heatmap, equilibria,
    StabilityVerdict,
};
use lepra_core::control::{compare_combinations, forward_backward_sweep, write_comparison_csv};
use lepra_core::effectiveness::{
    derive_efficacies, rank_with_profiles, EfficacyProfile, RankingTable,
};
use lepra_core::model::{check_positivity, fmt_f64, integrate, PositivityReport};
use lepra_core::sensitivity::{
    all_pairs, coefficient_series, daily_probes, default_bins, lhs_sample, r0_sensitivity,
    run_ensemble, write_scatter_csv, write_sobol_csv, EnsembleOutput, SeriesMethod, SobolBins,
};
use lepra_core::{ParamName, ParameterSet, SampleMatrix, SimulationConfig, State, Trajectory};
use serde::Serialize;

use crate::config::{simulation_config, ConfigError, ScenarioConfig};
use crate::output::OutDir;

pub fn simulate(cfg: &ScenarioConfig, out: &mut OutDir, preset: &str) -> Result<String> {
    let params = cfg.params(preset)?;
    let block = cfg.simulation();
    let sim = simulation_config(&block);
    if block.tf == block.t0 {
        let empty = Trajectory {
            times: Vec::new(),
            states: Vec::new(),
            step: block.step,
        };
        out.write("trajectory.csv", |w| empty.write_csv(w))?;
        return Ok("zero horizon: wrote an empty trajectory".into());
    }
    let traj = integrate(&params, &sim)?;
    out.write("trajectory.csv", |w| traj.write_csv(w))?;
    let last = traj.last().copied().unwrap_or(sim.initial);
    let mut msg = format!(
        "{} points; final (S, I, B) = ({}, {}, {})",
        traj.len(),
        fmt_f64(last.s),
        fmt_f64(last.i),
        fmt_f64(last.b)
    );
    if let PositivityReport::Violation { index } = check_positivity(&traj) {
        msg.push_str(&format!(
            "\nwarning: negative component at t = {}",
            traj.times[index]
        ));
    }
    Ok(msg)
}

#[derive(Serialize)]
struct EquilibriaOut<'a> {
    preset: &'a str,
    params: ParameterSet,
    r0: f64,
    dfe: State,
    endemic: Option<State>,
}

pub fn equilibria_cmd(cfg: &ScenarioConfig, out: &mut OutDir, preset: &str) -> Result<String> {
    let params = cfg.params(preset)?;
    let rep = equilibria(&params)?;
    let doc = EquilibriaOut {
        preset: cfg.preset_name(preset),
        params,
        r0: rep.r0,
        dfe: rep.dfe,
        endemic: rep.endemic,
    };
    out.write_json("equilibria.json", &doc)?;
    Ok(serde_json::to_string_pretty(&doc)?)
}

#[derive(Serialize)]
struct PointStability {
    state: State,
    #[serde(flatten)]
    verdict: StabilityVerdict,
}

#[derive(Serialize)]
struct StabilityOut {
    r0: f64,
    dfe: PointStability,
    endemic: Option<PointStability>,
}

pub fn stability(cfg: &ScenarioConfig, out: &mut OutDir, preset: &str) -> Result<String> {
    let params = cfg.params(preset)?;
    let rep = equilibria(&params)?;
    let dfe = PointStability {
        state: rep.dfe,
        verdict: classify_stability(&params, rep.dfe)?,
    };
    let endemic = rep
        .endemic
        .map(|e| -> Result<PointStability> {
            Ok(PointStability {
                state: e,
                verdict: classify_stability(&params, e)?,
            })
        })
        .transpose()?;
    let mut msg = format!(
        "R0 = {}; DFE {}",
        fmt_f64(rep.r0),
        dfe.verdict.classification
    );
    if let Some(e) = &endemic {
        msg.push_str(&format!("; endemic {}", e.verdict.classification));
    }
    out.write_json(
        "stability.json",
        &StabilityOut {
            r0: rep.r0,
            dfe,
            endemic,
        },
    )?;
    Ok(msg)
}

#[derive(Serialize)]
struct BifurcationSummary {
    param: ParamName,
    critical_value: Option<f64>,
    r0_crossings: Vec<(f64, f64)>,
    dfe_flips_at: Vec<f64>,
}

pub fn bifurcate(cfg: &ScenarioConfig, out: &mut OutDir, preset: &str) -> Result<String> {
    let params = cfg.params(preset)?;
    let sweep = cfg.sweep();
    let curve = bifurcation_sweep(&params, &sweep)?;
    out.write("bifurcation.csv", |w| curve.write_csv(w))?;
    let summary = BifurcationSummary {
        param: sweep.param,
        critical_value: critical_value(&params, sweep.param).ok(),
        r0_crossings: curve.r0_crossings(),
        dfe_flips_at: curve
            .dfe_flips()
            .into_iter()
            .map(|k| curve.rows[k].value)
            .collect(),
    };
    out.write_json("bifurcation.json", &summary)?;
    Ok(format!(
        "{} values of {}; R0 = 1 at {:?}; DFE stability changes at {:?}",
        curve.rows.len(),
        sweep.param,
        summary.critical_value,
        summary.dfe_flips_at
    ))
}

pub fn heatmap(cfg: &ScenarioConfig, out: &mut OutDir, preset: &str) -> Result<String> {
    let params = cfg.params(preset)?;
    let grid = doubling_heatmap(&params, &cfg.heatmap())?;
    out.write("heatmap.csv", |w| grid.write_csv(w))?;
    let (lo, hi) = grid
        .cells()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (_, _, b)| {
            (lo.min(b), hi.max(b))
        });
    Ok(format!(
        "{}x{} grid; B ranges over [{}, {}]",
        grid.alpha.len(),
        grid.gamma.len(),
        fmt_f64(lo),
        fmt_f64(hi)
    ))
}

/// Which sensitivity product to compute.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum SensitivityKind {
    Scatter,
    Srcc,
    Prcc,
    Sobol,
    R0,
}

fn write_samples(out: &mut OutDir, samples: &SampleMatrix) -> Result<()> {
    out.write("samples.csv", |w| {
        let header: Vec<&str> = samples.ranges.iter().map(|r| r.name.as_str()).collect();
        writeln!(w, "{}", header.join(","))?;
        for row in &samples.rows {
            let cells: Vec<String> = row.iter().map(|v| fmt_f64(*v)).collect();
            writeln!(w, "{}", cells.join(","))?;
        }
        Ok(())
    })
}

/// Samples and ensemble for the configured scenario.
pub fn ensemble(
    cfg: &ScenarioConfig,
    preset: &str,
) -> Result<(SampleMatrix, EnsembleOutput, SimulationConfig)> {
    let base = cfg.params(preset)?;
    let block = cfg.sensitivity();
    let samples = lhs_sample(&cfg.ranges()?, block.n, cfg.sensitivity_seed())?;
    let sim = SimulationConfig::new(0.0, block.tf, block.step, State::from_array(block.initial));
    let ens = run_ensemble(&samples, &base, &sim, &daily_probes(&sim))?;
    Ok((samples, ens, sim))
}

fn reported_params(cfg: &ScenarioConfig, samples: &SampleMatrix) -> Vec<ParamName> {
    let listed = cfg.sensitivity().params;
    if listed.is_empty() {
        samples.ranges.iter().map(|r| r.name).collect()
    } else {
        listed
    }
}

pub fn sensitivity(
    cfg: &ScenarioConfig,
    out: &mut OutDir,
    preset: &str,
    kind: SensitivityKind,
) -> Result<String> {
    let block = cfg.sensitivity();
    if kind == SensitivityKind::R0 {
        let base = cfg.params(preset)?;
        let samples = lhs_sample(&cfg.ranges()?, block.n, cfg.sensitivity_seed())?;
        write_samples(out, &samples)?;
        let singles = reported_params(cfg, &samples);
        let pairs = all_pairs(&singles);
        let bins = SobolBins {
            single: block.bins,
            pair: block.pair_bins,
            mode: block.mode,
        };
        let res = r0_sensitivity(&samples, &base, &singles, &pairs, bins)?;
        out.write("r0_sobol.csv", |w| write_sobol_csv(&res, w))?;
        let lines: Vec<String> = res
            .iter()
            .map(|r| format!("{:>12} {}", r.label(), fmt_f64(r.index)))
            .collect();
        return Ok(lines.join("\n"));
    }

    let (samples, ens, sim) = ensemble(cfg, preset)?;
    write_samples(out, &samples)?;
    let outputs = cfg.outputs()?;
    let params = reported_params(cfg, &samples);
    let mut files = 0;
    for &param in &params {
        for &output in &outputs {
            match kind {
                SensitivityKind::Scatter => {
                    let t = block.probe.unwrap_or(sim.tf);
                    let probe = ens
                        .probe_times
                        .iter()
                        .position(|&p| (p - t).abs() < 1e-9)
                        .unwrap_or(ens.probe_times.len() - 1);
                    out.write(&format!("scatter_{param}_{output}.csv"), |w| {
                        write_scatter_csv(&samples, &ens, param, output, probe, w)
                    })?;
                }
                _ => {
                    let method = match kind {
                        SensitivityKind::Srcc => SeriesMethod::Srcc,
                        SensitivityKind::Prcc => SeriesMethod::Prcc,
                        _ => SeriesMethod::Sobol {
                            bins: block.bins.unwrap_or_else(|| {
                                default_bins(ens.outputs.iter().flatten().count())
                            }),
                            mode: block.mode,
                        },
                    };
                    let series = coefficient_series(&samples, &ens, param, output, method)?;
                    let tag = format!("{kind:?}").to_lowercase();
                    out.write(&format!("{tag}_{param}_{output}.csv"), |w| {
                        series.write_csv(w)
                    })?;
                }
            }
            files += 1;
        }
    }
    let mut msg = format!("{} samples, {files} files", samples.n_samples());
    if !ens.failures.is_empty() {
        msg.push_str(&format!(
            "; {} samples failed and were excluded",
            ens.failures.len()
        ));
    }
    Ok(msg)
}

pub fn optimize(cfg: &ScenarioConfig, out: &mut OutDir, preset: &str) -> Result<String> {
    let params = cfg.params(preset)?;
    let problem = cfg.problem(params, cfg.mask()?)?;
    let res = forward_backward_sweep(&problem)?;
    out.write("solution.csv", |w| res.write_csv(w))?;
    let summary = res.summary();
    out.write_json("summary.json", &summary)?;
    Ok(serde_json::to_string_pretty(&summary)?)
}

pub fn compare(cfg: &ScenarioConfig, out: &mut OutDir, preset: &str) -> Result<String> {
    let params = cfg.params(preset)?;
    let problem = cfg.problem(params, cfg.mask()?)?;
    let rows = compare_combinations(&problem, &cfg.masks()?)?;
    out.write("comparison.csv", |w| write_comparison_csv(&rows, w))?;
    let lines: Vec<String> = rows
        .iter()
        .map(|r| {
            format!(
                "{:>22}  mean I {:>10.4}  mean B {:>9.4}  J {:>11.3}{}",
                r.mask.label(),
                r.averages.i,
                r.averages.b,
                r.cost,
                if r.converged { "" } else { "  (not converged)" }
            )
        })
        .collect();
    Ok(lines.join("\n"))
}

/// Efficacy profiles of the configured levels.
pub fn level_profiles(cfg: &ScenarioConfig) -> Result<Vec<(String, EfficacyProfile)>> {
    let eff = cfg.effectiveness();
    eff.levels
        .iter()
        .map(|l| {
            let mut p = derive_efficacies(l.base, &eff.hazard_ratios)?;
            if let Some(c) = eff.clofazimine {
                p = EfficacyProfile::new(p.rho, p.epsilon, c)?;
            }
            Ok((l.name.clone(), p))
        })
        .collect()
}

pub fn ranking(cfg: &ScenarioConfig, preset: &str) -> Result<RankingTable> {
    let params = cfg.params(preset)?;
    Ok(rank_with_profiles(&params, &level_profiles(cfg)?)?)
}

pub fn rank(cfg: &ScenarioConfig, out: &mut OutDir, preset: &str) -> Result<String> {
    let table = ranking(cfg, preset)?;
    out.write("ranking.csv", |w| table.write_csv(w))?;
    out.write_json("ranking.json", &table)?;
    let mut buf = Vec::new();
    table.write_csv(&mut buf)?;
    let mut msg = String::from_utf8(buf)?;
    for l in table.levels.iter().filter(|l| l.degenerate) {
        msg.push_str(&format!(
            "warning: ties at level {}; tied ranks follow row order\n",
            l.name
        ));
    }
    Ok(msg.trim_end().to_string())
}

/// Prints the validation report; fails when any invariant is violated.
pub fn validate(cfg: &ScenarioConfig, preset: &str) -> Result<String> {
    let report = cfg.check(preset);
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    if !report.is_valid() {
        bail!(ConfigError(report.violations));
    }
    Ok("valid".into())
}
