//! Statistical primitives used by every diagnostic.
//!
//! Tie conventions are fixed here: average ranks for Spearman, tau-b for
//! Kendall, half credit for tied scores in ROC AUC.

mod auc;
mod chi2;
mod ks;
mod logistic;
mod ols;
mod quantile;
mod rank;

pub use auc::{roc_auc, BinaryScoredSample};
pub use chi2::{chi_squared_independence, ChiSquared};
pub use ks::{kolmogorov_survival, ks_two_sample, KsTest};
pub use logistic::{fit_logistic, LogisticModel, LogisticOptions, Standardizer};
pub use ols::{fit_ols_r2, OlsFit};
pub use quantile::quantile_linear;
pub use rank::{average_ranks, kendall_tau, pearson, spearman, PairedSample, RankCorrelation};
