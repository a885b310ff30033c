//! Load data: ingestion, synthetic generation and evaluation metrics.

pub mod dataset;
pub mod metrics;
pub mod synthetic;

pub use dataset::{ingest_csv, parse_csv, DayProfile, HouseholdSeries, IngestSchema, LoadDataset, RequestEvent};
pub use metrics::{compute_metrics, detect_rebound, spearman, ReboundInterval, ReboundReport, RunMetrics};
pub use synthetic::{generate_synthetic, RequestPattern, SyntheticProfileConfig};
