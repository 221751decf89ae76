//! Boundary benchmark: NMS thinning, tolerance-radius correspondence,
//! precision/recall curves and ODS/OIS aggregation.

mod matching;
mod nms;
mod pr;

pub use matching::{correspond, match_boundaries, Correspondence, MatchCounts};
pub use nms::{nms_thin, NMS_SIGMA};
pub use pr::{
    default_thresholds, evaluate, f_measure, ods_ois, pr_curve, uniform_thresholds, EvalResult, PrPoint,
    DEFAULT_TOLERANCE,
};
