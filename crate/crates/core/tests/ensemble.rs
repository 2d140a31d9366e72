use lepra_core::model::ParamName;
use lepra_core::presets;
use lepra_core::sensitivity::{
    coefficient_series, daily_probes, lhs_sample, run_ensemble, ConditionalMean, Output,
    SeriesMethod,
};
use lepra_core::SimulationConfig;

fn scenario() -> SimulationConfig {
    SimulationConfig::new(0.0, 10.0, 5e-4, presets::THERAPY_INITIAL)
}

#[test]
fn ensemble_over_sampled_ranges_is_finite_and_nonnegative() {
    let samples = lhs_sample(&presets::sensitivity_ranges(), 64, 7).unwrap();
    let sim = scenario();
    let probes = daily_probes(&sim);
    assert_eq!(probes.len(), 11);
    let ens = run_ensemble(&samples, &presets::table1(), &sim, &probes).unwrap();
    assert!(ens.failures.is_empty(), "{:?}", ens.failures);
    for row in ens.outputs.iter().map(|r| r.as_ref().unwrap()) {
        assert_eq!(row.len(), probes.len());
        assert!(row.iter().all(|x| x.is_finite() && x.is_nonnegative()));
        assert_eq!(row[0], presets::THERAPY_INITIAL);
    }
}

#[test]
fn series_skip_the_shared_initial_state() {
    let samples = lhs_sample(&presets::sensitivity_ranges(), 100, 11).unwrap();
    let sim = scenario();
    let probes = daily_probes(&sim);
    let ens = run_ensemble(&samples, &presets::table1(), &sim, &probes).unwrap();
    for method in [
        SeriesMethod::Srcc,
        SeriesMethod::Prcc,
        SeriesMethod::Sobol {
            bins: 10,
            mode: ConditionalMean::LeaveOneOut,
        },
    ] {
        let s = coefficient_series(&samples, &ens, ParamName::Alpha, Output::B, method).unwrap();
        assert_eq!(s.times.first(), Some(&1.0));
        assert_eq!(s.times.len(), probes.len() - 1);
        assert!(s.coefficients.iter().all(|c| (-1.0..=1.0).contains(c)));
    }
    // Bacterial production rises with α, so B at day 1 tracks α strongly.
    let s = coefficient_series(
        &samples,
        &ens,
        ParamName::Alpha,
        Output::B,
        SeriesMethod::Prcc,
    )
    .unwrap();
    assert!(s.coefficients[0] > 0.9, "{:?}", s.coefficients);
}

#[test]
fn same_seed_same_ensemble() {
    let a = lhs_sample(&presets::sensitivity_ranges(), 20, 3).unwrap();
    let b = lhs_sample(&presets::sensitivity_ranges(), 20, 3).unwrap();
    assert_eq!(a, b);
    let sim = SimulationConfig::new(0.0, 2.0, 5e-4, presets::THERAPY_INITIAL);
    let probes = daily_probes(&sim);
    let x = run_ensemble(&a, &presets::table1(), &sim, &probes).unwrap();
    let y = run_ensemble(&b, &presets::table1(), &sim, &probes).unwrap();
    assert_eq!(x, y);
}
