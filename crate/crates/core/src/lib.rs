//! Within-host leprosy dynamics: simulation, equilibrium and stability
//! analysis, global sensitivity, optimal multi-drug control and drug
//! effectiveness ranking.

pub mod analysis;
pub mod control;
pub mod effectiveness;
pub mod error;
pub mod model;
pub mod ode;
pub mod presets;
pub mod sensitivity;

pub use analysis::{
    bifurcation_sweep, classify_stability, disease_free_equilibrium, doubling_heatmap,
    endemic_equilibrium, equilibria, lyapunov_descent, reproduction_number, BifurcationCurve,
    EquilibriumReport, HeatGrid, HeatmapSpec, LyapunovTarget, StabilityClass, StabilityVerdict,
    SweepSpec,
};
pub use control::{
    compare_combinations, forward_backward_sweep, AdjointState, ControlBounds, ControlFormula,
    ControlSchedule, ControlVector, DrugMask, FbsSettings, OptimalControlProblem, SolveResult,
    Weights,
};
pub use effectiveness::{
    derive_efficacies, modified_r0, percent_reduction, rank_combinations, EffectivenessRow,
    EfficacyProfile, HazardRatios, RankingTable,
};
pub use error::{Error, Result};
pub use model::{
    integrate, CytokineClearance, ParamName, ParameterSet, SimulationConfig, State, StateRate,
    Trajectory,
};
pub use sensitivity::{
    lhs_sample, prcc, r0_sensitivity, run_ensemble, sobol_index, srcc, ParameterRange,
    SampleMatrix, SensitivitySeries, SobolResult,
};

/// Version of this crate, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
