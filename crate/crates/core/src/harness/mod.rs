//! Experiment configuration, seeded Monte Carlo orchestration and artifact
//! emission.

mod artifacts;
mod config;
mod experiment;

pub use artifacts::{emit_artifacts, Manifest, ManifestEntry};
pub use config::{derive_run_seed, ExperimentConfig, NoiseSpec, Options, SystemSpec};
pub use experiment::{
    run_experiment, stability_report, CurveRow, Divergence, ExperimentResult, ModeRateFit,
    Provenance, Quadrant, RunRecord, StabilityReport,
};
