//! Protocol orchestration and detection-probability measurement.

pub mod association;
pub mod detection;
pub mod export;
pub mod montecarlo;
pub mod truth;

pub use association::{associate_ues, Association, AssociationMap, EstimateRecord, UeReport};
pub use detection::{evaluate_detection, AssignmentMode, ConfigPoint, DetectionStats, StatsRow, Tally};
pub use export::{export_results, read_stats_json, write_csv, ExportFormat, CSV_HEADER};
pub use montecarlo::{
    apply_overrides, assign_patterns, estimate_all, realize_drop, run_drop, run_monte_carlo, trace_protocol,
    Dictionaries, DropRealization, ProtocolTrace, RunConfig, RunSettings,
};
pub use truth::{compute_ground_truth, GroundTruth, PatternTruth};
