//! Published parameter sets, sensitivity ranges and clinical constants.

use crate::model::{ParamName, ParameterSet, State};
use crate::sensitivity::ParameterRange;

/// Rates compiled from clinical literature.
pub fn table1() -> ParameterSet {
    ParameterSet::new(0.022, 3.44, 0.1795, 0.0018, 0.2681, 0.063, 0.0003, 0.57)
}

/// Tuned so that `R0 < 1` (disease-free equilibrium stable).
pub fn table2() -> ParameterSet {
    ParameterSet::new(1.090, 0.44, 0.01795, 0.0018, 0.2681, 0.0063, 0.0003, 0.57)
}

/// Tuned so that `R0 > 1` (endemic equilibrium stable); also the drug-therapy setup.
pub fn table3() -> ParameterSet {
    ParameterSet::new(20.90, 0.030, 0.01795, 0.00018, 0.2681, 0.2, 0.3, 0.57)
}

pub fn by_name(name: &str) -> Option<ParameterSet> {
    match name {
        "table1" => Some(table1()),
        "table2" => Some(table2()),
        "table3" => Some(table3()),
        _ => None,
    }
}

pub const PRESET_NAMES: [&str; 3] = ["table1", "table2", "table3"];

/// Initial condition of the drug-therapy experiments.
pub const THERAPY_INITIAL: State = State::new(520.0, 275.0, 250.0);

/// Initial condition of the doubling-time heat map.
pub const HEATMAP_INITIAL: State = State::new(5200.0, 0.0, 40.0);

/// Sensitivity ranges `(name, bound, bound)` as tabulated; the `y` row lists
/// its bounds in reverse order and is normalized by [`ParameterRange::new`].
pub const SENSITIVITY_RANGES_RAW: [(ParamName, f64, f64); 5] = [
    (ParamName::Gamma, 0.0538, 0.0763),
    (ParamName::Mu1, 0.0305, 0.0405),
    (ParamName::Delta, 0.2263, 0.3099),
    (ParamName::Alpha, 0.0538, 0.0763),
    (ParamName::Y, 0.0005, 0.0001),
];

pub fn sensitivity_ranges() -> Vec<ParameterRange> {
    SENSITIVITY_RANGES_RAW
        .iter()
        .map(|&(name, a, b)| ParameterRange::new(name, a, b).expect("tabulated range is valid"))
        .collect()
}

/// Hazard ratios of rifampin, dapsone and clofazimine.
pub const HAZARD_RATIOS: crate::effectiveness::HazardRatios = crate::effectiveness::HazardRatios {
    rifampin: 0.26,
    dapsone: 0.99,
    clofazimine: 1.85,
};

/// Low, medium and high efficacy base levels.
pub const EFFICACY_LEVELS: [(&str, f64); 3] = [("LE", 0.3), ("ME", 0.6), ("HE", 0.9)];
