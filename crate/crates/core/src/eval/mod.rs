//! Evaluation metrics: conditional PDFs, total variation distance, level
//! error counting, pattern-conditional interference statistics, and report
//! assembly.

mod metrics;
mod report;

pub use metrics::{
    count_level_errors, estimate_pdf, ici_error_frequencies, rank_correlation_top_k, spearman,
    top_pattern_share, total_variation, total_variation_probs, LevelErrorTable, PatternFrequencyTable,
    StampStats,
};
pub use report::{build_report, DtvReference, DtvRow, ErrorRow, IciRow, PdfRow, Report, Source};
