//! Gate diagnostics: rank alignment, inversion zones, abstention curves,
//! calibration, tier separation and variance decomposition.

mod c1;
mod calibration;
mod curve;
mod tiers;
mod variance;
mod zones;

pub use c1::{check_c1, within_tolerance_accuracy, C1Report, C1Thresholds};
pub use calibration::{ece, CalibrationBin, CalibrationReport};
pub use curve::{
    abstention_curve, abstention_curve_by_order, accuracy_abstention_curve, confidence_order,
    decomposition_identity_check, selective_accuracy_curve, AbstentionCurve, CurveMetric,
    SelectivePoint, DEFAULT_FRACTIONS, NEGLIGIBLE_STEP,
};
pub use tiers::{tier_report, Tier, TierReport, TierStat};
pub use variance::{variance_decomposition, VarianceDecomposition};
pub use zones::{
    band_tail_inversions, check_c2, check_c2_with_edges, selective_accuracy_is_monotone,
    tail_inversions, QualityMode, Zone, ZoneReport,
};
