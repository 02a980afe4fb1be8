//! Scores, ROC, EER and HTER, and the cross-dataset protocol.
//!
//! Scores are spoof probabilities: a sample scored above the threshold is
//! called a spoof. FAR is the fraction of genuine samples called spoof and
//! FRR the fraction of spoofs that pass.

mod metrics;
mod protocol;
mod scores;

pub use metrics::{
    apply_threshold, eer, eer_from_roc, encode_roc_csv, hter, operating_point, roc_curve, EerPoint, EvalReport,
    RocPoint,
};
pub use protocol::{cross_eval_entry, CrossEvalEntry, CrossEvalReport};
pub use scores::{
    encode_scores, parse_scores, read_scores, write_scores, Aggregation, ScoreRecord, ScoreSet, SCORE_HEADER,
};
