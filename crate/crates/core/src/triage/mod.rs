//! Bug taxonomy, labeled-record analytics and agreement statistics.

mod records;
mod stats;
mod taxonomy;

pub use records::{
    crosstab, distribution, format_distribution, framework_commonality, load_records, write_records, Axis, Commonality,
    Crosstab, DistRow, RecordsError, TaxonomyRecord, HEADER,
};
pub use stats::{cohen_kappa, correlation_band, is_bug_fixing_title, spearman, Band, BandReading, Kappa, StatsError};
pub use taxonomy::{Cause, RootCause, Stage, SubCause, Symptom};
