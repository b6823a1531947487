//! # decodelab
//!
//! Decoding strategies for autoregressive models, strategy-conditioned
//! calibration metrics, and empirical verification of greedy-optimality
//! conditions on synthetic answer-distribution worlds where the ground
//! truth posterior is known exactly.
//!
//! The crate covers:
//!
//! - candidate-set truncation rules (top-k, top-p, min-p, epsilon, eta),
//!   renormalized truncated sampling, greedy selection, and beam search;
//! - a tabular sequence model supporting exact enumeration of the answer
//!   posterior any strategy induces;
//! - synthetic world generation with head-heavy answer statistics and
//!   controllable miscalibration;
//! - exact and Monte-Carlo estimators for the decoding objective,
//!   calibration error, Brier score, the two optimality gap functionals,
//!   and the optimality verdict checker;
//! - a two-phase decoder for reasoning models (sampled trace, greedy
//!   answer);
//! - a sweep runner with deterministic seed derivation and byte-stable
//!   CSV/JSON reports, and a client-side decoding adapter for
//!   OpenAI-compatible logprob endpoints.
//!
//! Instance-level work runs on rayon by default; disable the `parallel`
//! feature for a fully sequential build. All reductions are ordered, so
//! results are identical either way.

pub mod answer;
pub mod calibration;
pub mod error;
pub mod exec;
pub mod gdrm;
pub mod model;
pub mod remote;
pub mod seeding;
pub mod strategy;
pub mod sweep;
pub mod vocab;
pub mod worlds;

pub use answer::{
    answers_match, canonicalize_answer, decode_answer, AnswerDist, AnswerSpace, CanonicalAnswer,
};
pub use calibration::{
    accuracy, brier, default_grid, ece, gap_g1, gap_g2, objective_j, verify_greedy_optimality,
    Estimate, EstimatorMode, StrategyRecord, TheoremReport, Verdict, WorldAnalysis,
};
pub use error::{Error, Result};
pub use gdrm::{gdrm_answer_posterior, gdrm_decode, gdrm_objective, GdrmConfig, GdrmResult};
pub use model::{
    answer_posterior, enumerate_sequence_probs, greedy_answer, rollout, InstanceRef,
    SequenceModel, TabularModel,
};
pub use remote::{remote_rollout, RemoteEndpoint, RemoteError, RemoteRollout};
pub use strategy::{
    beam_search, greedy_token, sample_token, select_candidates, truncate_renormalize,
    BeamResult, CandidateSet, Strategy, StrategySpec,
};
pub use sweep::{
    emit_rank_curves, emit_report, rank_curves, run_sweep, run_sweep_on, ReportFormat, ReportRow,
    ReportSet, SweepConfig, SweepMode, WorldSource,
};
pub use vocab::{
    sequence_probability, softmax_with_temperature, temperature_scale, LogitVector, ProbVector,
    TokenId, Vocabulary,
};
pub use worlds::{
    generate_reasoning_world, generate_world, miscalibrate, world_presets, Instance, MiscalSpec,
    ReasoningWorldSpec, World, WorldSpec,
};
