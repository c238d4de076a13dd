//! Statistics over region counts: shares and rank changes, per-capita
//! rates, geographic concentration, Spearman correlation, OLS with robust
//! standard errors, and natural-breaks binning.

mod concentration;
mod jenks;
mod ols;
mod rates;
mod spearman;

pub use concentration::{agc, gc, ConcentrationInput, ConcentrationResult};
pub use jenks::{jenks_breaks, BinBreaks};
pub use ols::{ols_robust, Column, RegressionResult, INTERCEPT};
pub use rates::{per_capita, shares_and_ranks, RankChange, Scale, ShareRow};
pub use spearman::{average_ranks, spearman, SpearmanResult};
