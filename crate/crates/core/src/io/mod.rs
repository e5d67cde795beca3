//! File formats, pipeline configuration, the synthetic benchmark generator
//! and report emission.

mod config;
mod embedding_file;
mod label_file;
mod match_file;
mod report;
mod score_file;
mod synth;

pub use config::{
    load_config, CalibrationSection, ConfigOverrides, FusionSection, LabelsSection, MuSection,
    PipelineConfig, ScoreSection, ScoreType, ShortlistSection, SplitSection, ZeroShotSection,
};
pub use embedding_file::{read_embedding_file, write_embedding_file};
pub use label_file::{read_label_file, write_label_file};
pub use match_file::{read_match_file, write_match_file};
pub use report::{
    build_report, emit_report, read_report, BudgetPoint, Report, ReportPaths, ScoreReport,
    SplitSummary,
};
pub use score_file::{read_score_file, write_score_file};
pub use synth::{generate_synthetic, generate_synthetic_in_memory, SynthDataset, SynthParams, SynthPaths};
