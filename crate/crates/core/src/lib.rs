//! Locate highly active open-source contributors from commit event archives
//! and measure how they are distributed across countries and regions.
//!
//! The crate is organised as a pipeline of stages plus a statistics toolkit:
//!
//! * [`ingest`] parses push-event archives and counts distinct commits per email.
//! * [`identity`] resolves commit emails to platform accounts and merges them.
//! * [`geocode`] places accounts via profile location, microblog location, or
//!   email suffix, in that order.
//! * [`regions`] assigns located accounts to region schemes and aggregates counts.
//! * [`metrics`] holds the statistics: shares and ranks, per-capita rates,
//!   geographic concentration (GC / AGC), Spearman correlation, OLS with HC1
//!   standard errors, and optimal natural-breaks binning.
//! * [`report`] orchestrates runs and writes the CSV outputs.

pub mod error;
pub mod geocode;
pub mod identity;
pub mod ingest;
pub mod metrics;
pub mod regions;
pub mod report;
pub mod synthetic;
pub(crate) mod table;

pub use error::{Error, ProviderError, Result};
pub use geocode::{GeoResult, GeoSource, Precision};
pub use identity::{AccountResolution, Resolution};
pub use ingest::{CommitRecord, EmailActivity, ParseReport, Window};
pub use metrics::{BinBreaks, ConcentrationInput, ConcentrationResult, RegressionResult};
pub use regions::{AggregateCount, AssignOutcome, RegionRecord, RegionScheme, SchemeId};
