//! Simulation studies and report generation.

pub mod chromosome;
pub mod maxsd;
pub mod report;

pub use chromosome::{
    bundled_triples, load_triples, preprocess, run_chromosome_study, ChromosomeConfig,
    ChromosomeStudy, Triple,
};
pub use maxsd::{rejected_prefix_len, run_maxsd_study, MaxsdScenario, MaxsdStudy};
pub use report::{write_report, Render, ReportFormat};
