//! Run orchestration and output tables.
//!
//! [`cmd_pipeline`] runs ingest, identity resolution, geocoding and region
//! aggregation in one go and writes a run report with the funnel totals; the
//! per-stage commands run one stage from the previous stage's files.
//! [`cmd_analyze`] turns aggregate counts into the statistics tables.

mod analyze;
mod config;
mod pipeline;

pub use analyze::{
    agc_table, cmd_analyze, per_capita_table, AgcRow, AnalysisSpec, AnalysisSummary, Formula,
    PerCapitaRow, Term, ANALYSIS_KEYS, BUILTIN_VARIABLES,
};
pub use config::{scheme_tag, FlatConfig, ProviderKind, RunConfig, SchemeSpec, Setting, RUN_KEYS};
pub use pipeline::{
    aggregate_file, aggregate_stage, cmd_aggregate, cmd_geocode, cmd_ingest, cmd_pipeline,
    cmd_resolve, geocode_stage, ingest_stage, load_scheme, resolve_stage, summarize_locations,
    with_jobs, Funnel, GeocodeStage, GeocodeSummary, IdentitySummary, IngestStage, IngestSummary,
    ResolveStage, RunReport, SchemeOutput, SchemeSummary, Staging, ACCOUNTS_FILE, ACTIVITY_FILE,
    LOCATIONS_FILE, RESOLUTIONS_FILE, RUN_REPORT_FILE,
};
