//! End-to-end experiment protocols: simulation, training over a seed list,
//! per-seed analysis and an aggregate report with acceptance verdicts.
//!
//! A run directory holds `spec.json` (the resolved configuration), `manifest.json`
//! (hashes of every artifact, keyed by the job that produced it), `data/`, `runs/`,
//! `analysis/` and `report.json`.

mod data;
mod evaluate;
mod pipeline;
mod report;
mod spec;

pub use data::{chronological, generate, rewindow, DataSummary, ExperimentData, TEST_ORBIT_ID};
pub use evaluate::{
    analyze, reconstruction_folds, spectrum_summary, training_set, ArSummary, CondError, DimensionSummary,
    SeedAnalysis, SpectrumSummary, TargetPeak,
};
pub use pipeline::{
    Pipeline, RunManifest, StageOutcome, StageRecord, TrainStatus, DATA_DIR, MANIFEST_FILE, REPORT_FILE, SPEC_FILE,
};
pub use report::{
    reference, required, summarize, verdicts, Distribution, ExperimentReport, Reference, VariantSummary, Verdict,
};
pub use spec::{
    parse_seeds, Acceptance, EnsembleProtocol, ExperimentSpec, ExperimentTag, Family, OrbitProtocol, Protocol,
    SweepProtocol, TestOrbit, Variant,
};
