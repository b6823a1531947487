//! Two-phase decoding for reasoning models: a stochastically sampled
//! reasoning trace up to the think-end delimiter, then deterministic greedy
//! decoding of the answer tokens conditioned on that trace.
//!
//! Reasoning worlds must emit the think-end token to close phase one; eos
//! belongs to the answer phase only.

use rand::Rng;
use serde::Serialize;

use crate::answer::{decode_answer, AnswerDist, AnswerSpace, CanonicalAnswer};
use crate::error::{Error, Result};
use crate::model::{
    enumerate_sequence_probs_to, rollout_segment, InstanceRef, SequenceModel,
};
use crate::strategy::{beam_search_to, Strategy, StrategySpec};
use crate::vocab::TokenId;
use crate::worlds::World;

/// Configuration of the two-phase decoder.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GdrmConfig {
    /// Strategy for the reasoning phase; any family including beam.
    pub reasoning_spec: StrategySpec,
    pub max_reasoning_len: usize,
    pub max_answer_len: usize,
    /// Optional fixed token injected between the reasoning trace and the
    /// answer phase.
    pub separator: Option<TokenId>,
}

impl GdrmConfig {
    pub fn new(reasoning_spec: StrategySpec, max_reasoning_len: usize, max_answer_len: usize) -> Result<Self> {
        if max_reasoning_len < 1 || max_answer_len < 1 {
            return Err(Error::InvalidParameter(
                "reasoning and answer lengths must be >= 1".into(),
            ));
        }
        Ok(Self {
            reasoning_spec,
            max_reasoning_len,
            max_answer_len,
            separator: None,
        })
    }
}

/// One two-phase decode: the trace, the greedily decoded answer tokens, and
/// the decoded answer.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GdrmResult {
    /// Reasoning tokens; ends with think-end unless truncated.
    pub reasoning: Vec<TokenId>,
    /// Answer tokens, including eos when reached.
    pub answer_tokens: Vec<TokenId>,
    pub answer: CanonicalAnswer,
    pub truncated_reasoning: bool,
}

fn require_think_end<M: SequenceModel + ?Sized>(model: &M) -> Result<TokenId> {
    model.vocabulary().think_end().ok_or_else(|| {
        Error::Configuration("two-phase decoding requires a think_end token".into())
    })
}

/// Phase one: roll out (or beam-search) a reasoning trace until think-end
/// or the length cap.
fn reasoning_trace<M: SequenceModel + ?Sized, R: Rng + ?Sized>(
    model: &M,
    instance: &InstanceRef,
    cfg: &GdrmConfig,
    rng: &mut R,
) -> Result<(Vec<TokenId>, bool)> {
    let think_end = require_think_end(model)?;
    if let Strategy::Beam { width } = cfg.reasoning_spec.strategy() {
        let res = beam_search_to(model, instance, width, cfg.max_reasoning_len, think_end)?;
        return Ok((res.tokens, !res.truncated));
    }
    rollout_segment(
        model,
        instance,
        &[],
        &cfg.reasoning_spec,
        rng,
        cfg.max_reasoning_len,
        think_end,
    )
}

/// Phase two: greedy answer decoding conditioned on the reasoning trace.
/// Deterministic; consumes no randomness.
pub fn answer_phase<M: SequenceModel + ?Sized>(
    model: &M,
    instance: &InstanceRef,
    reasoning: &[TokenId],
    cfg: &GdrmConfig,
    space: &AnswerSpace,
) -> Result<(Vec<TokenId>, CanonicalAnswer)> {
    let mut context = reasoning.to_vec();
    if let Some(sep) = cfg.separator {
        context.push(sep);
    }
    let eos = model.vocabulary().eos();
    let mut no_rng = crate::model::NoRandomness;
    let (answer_tokens, _) = rollout_segment(
        model,
        instance,
        &context,
        &StrategySpec::greedy(),
        &mut no_rng,
        cfg.max_answer_len,
        eos,
    )?;
    let answer = decode_answer(&answer_tokens, model.vocabulary(), space)?;
    Ok((answer_tokens, answer))
}

/// Runs both phases. On reasoning truncation the answer phase proceeds
/// anyway and the result is flagged.
pub fn gdrm_decode<M: SequenceModel + ?Sized, R: Rng + ?Sized>(
    model: &M,
    instance: &InstanceRef,
    cfg: &GdrmConfig,
    space: &AnswerSpace,
    rng: &mut R,
) -> Result<GdrmResult> {
    let (reasoning, reached) = reasoning_trace(model, instance, cfg, rng)?;
    let (answer_tokens, answer) = answer_phase(model, instance, &reasoning, cfg, space)?;
    Ok(GdrmResult {
        reasoning,
        answer_tokens,
        answer,
        truncated_reasoning: !reached,
    })
}

/// Exact answer posterior of the two-phase decoder: enumerate reasoning
/// traces under the reasoning strategy, run the deterministic answer phase
/// on each, and marginalize.
pub fn gdrm_answer_posterior<M: SequenceModel + ?Sized>(
    model: &M,
    instance: &InstanceRef,
    cfg: &GdrmConfig,
    space: &AnswerSpace,
) -> Result<AnswerDist> {
    let think_end = require_think_end(model)?;
    let traces: Vec<(Vec<TokenId>, f64)> =
        if let Strategy::Beam { width } = cfg.reasoning_spec.strategy() {
            let res = beam_search_to(model, instance, width, cfg.max_reasoning_len, think_end)?;
            vec![(res.tokens, 1.0)]
        } else {
            enumerate_sequence_probs_to(
                model,
                instance,
                &cfg.reasoning_spec,
                cfg.max_reasoning_len,
                think_end,
            )?
            .into_iter()
            .collect()
        };
    let mut entries = std::collections::BTreeMap::new();
    for (trace, prob) in traces {
        let (_, answer) = answer_phase(model, instance, &trace, cfg, space)?;
        *entries.entry(answer).or_insert(0.0) += prob;
    }
    AnswerDist::new(entries)
}

/// Mean over instances of the exact two-phase objective: expected
/// ground-truth mass of the decoded answer, marginalized over traces.
pub fn gdrm_objective(world: &World, cfg: &GdrmConfig) -> Result<f64> {
    let mut total = 0.0;
    for inst in &world.instances {
        let posterior = gdrm_answer_posterior(&inst.model, &inst.id, cfg, &inst.space)?;
        total += posterior
            .iter()
            .map(|(a, w)| w * inst.p_true.get(a))
            .sum::<f64>();
    }
    Ok(total / world.instances.len() as f64)
}
