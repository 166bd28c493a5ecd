//! Confidence gate over probe outputs and the metrics that score it.

pub mod audit;
pub mod decision;
pub mod eval;
pub mod intervals;

pub use audit::{vintage_audit, InferenceManifest, VintageRow};
pub use decision::{apply_gate, decide, ClassDistribution, GateConfig, GateDecision};
pub use eval::{
    evaluate, evaluate_gate, score_piece, sweep_csv, sweep_tau, Counts, EvalReport, GateInput,
    NoteScore, PieceEval, PieceScore, SweepRow, SWEEP_TAUS,
};
pub use intervals::{cluster_bootstrap, pooled_delta_pp, t_ci, TInterval, BOOTSTRAP_RESAMPLES};
