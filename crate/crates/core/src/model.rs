//! The autoregressive model abstraction: a tabular toy model supporting
//! exact enumeration, rollouts under any strategy, and exact computation of
//! the induced answer posterior.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::answer::{decode_answer, AnswerDist, AnswerSpace, CanonicalAnswer};
use crate::error::{Error, Result};
use crate::strategy::{sample_token, step_distribution, StrategySpec};
use crate::vocab::{ProbVector, TokenId, Vocabulary};

/// Leaf-count guard for exact enumeration.
pub const ENUMERATION_GUARD: u128 = 10_000_000;

/// Opaque identifier binding one instance (the abstract input pair) within
/// its world.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct InstanceRef(String);

impl InstanceRef {
    pub fn new(id: impl Into<String>) -> Self {
        Self(id.into())
    }

    pub fn id(&self) -> &str {
        &self.0
    }
}

/// An autoregressive next-token model: a deterministic map from
/// (instance, prefix) to a distribution over the next token.
pub trait SequenceModel {
    fn vocabulary(&self) -> &Vocabulary;

    fn next_distribution(&self, instance: &InstanceRef, prefix: &[TokenId]) -> Result<ProbVector>;
}

/// A fully tabulated model for one instance. Every reachable prefix short
/// of `max_len` has a stored row, which makes sequence probabilities
/// exactly enumerable.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularModel {
    vocab: Vocabulary,
    max_len: usize,
    rows: BTreeMap<Vec<TokenId>, ProbVector>,
}

impl TabularModel {
    pub fn new(vocab: Vocabulary, max_len: usize) -> Self {
        Self {
            vocab,
            max_len,
            rows: BTreeMap::new(),
        }
    }

    pub fn max_len(&self) -> usize {
        self.max_len
    }

    pub fn rows(&self) -> impl Iterator<Item = (&[TokenId], &ProbVector)> {
        self.rows.iter().map(|(k, v)| (k.as_slice(), v))
    }

    pub fn insert_row(&mut self, prefix: Vec<TokenId>, dist: ProbVector) -> Result<()> {
        if dist.len() != self.vocab.size() {
            return Err(Error::InvalidInput(format!(
                "row of length {} for vocabulary of size {}",
                dist.len(),
                self.vocab.size()
            )));
        }
        if prefix.len() >= self.max_len {
            return Err(Error::InvalidInput(format!(
                "prefix of length {} reaches max_len {}",
                prefix.len(),
                self.max_len
            )));
        }
        if prefix.contains(&self.vocab.eos()) {
            return Err(Error::InvalidInput(
                "prefix extends beyond an eos token".into(),
            ));
        }
        self.rows.insert(prefix, dist);
        Ok(())
    }

    /// Builder-style [`insert_row`](Self::insert_row) for tests and fixtures.
    pub fn with_row(mut self, prefix: &[u32], probs: &[f64]) -> Result<Self> {
        self.insert_row(
            prefix.iter().map(|&i| TokenId(i)).collect(),
            ProbVector::new(probs.to_vec())?,
        )?;
        Ok(self)
    }

    /// Checks that every reachable non-terminated prefix has a row and that
    /// rows at depth `max_len - 1` put all mass on eos, so sequences always
    /// terminate.
    pub fn validate(&self) -> Result<()> {
        let instance = InstanceRef::new("validate");
        let mut stack = vec![Vec::new()];
        while let Some(prefix) = stack.pop() {
            let row = self.next_distribution(&instance, &prefix)?;
            let last_step = prefix.len() + 1 == self.max_len;
            for (i, &p) in row.as_slice().iter().enumerate() {
                if p <= 0.0 {
                    continue;
                }
                let tok = TokenId(i as u32);
                if tok == self.vocab.eos() {
                    continue;
                }
                if last_step {
                    return Err(Error::InvalidInput(format!(
                        "row at depth {} leaks {p} mass past max_len onto token {i}",
                        prefix.len()
                    )));
                }
                let mut next = prefix.clone();
                next.push(tok);
                stack.push(next);
            }
        }
        Ok(())
    }
}

impl SequenceModel for TabularModel {
    fn vocabulary(&self) -> &Vocabulary {
        &self.vocab
    }

    fn next_distribution(&self, instance: &InstanceRef, prefix: &[TokenId]) -> Result<ProbVector> {
        if prefix.contains(&self.vocab.eos()) {
            return Err(Error::InvalidInput(
                "no continuation is defined past eos".into(),
            ));
        }
        self.rows
            .get(prefix)
            .cloned()
            .ok_or_else(|| Error::MissingEntry {
                instance: instance.id().to_string(),
                prefix: prefix.iter().map(|t| t.0).collect(),
            })
    }
}

// Wire shape of a tabular model inside world files.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TabularModelRepr {
    #[serde(rename = "type")]
    kind: String,
    max_len: usize,
    vocab: Vocabulary,
    rows: Vec<RowRepr>,
}

#[derive(Serialize, Deserialize)]
struct RowRepr {
    prefix: Vec<TokenId>,
    probs: ProbVector,
}

impl Serialize for TabularModel {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let repr = TabularModelRepr {
            kind: "tabular".to_string(),
            max_len: self.max_len,
            vocab: self.vocab.clone(),
            rows: self
                .rows
                .iter()
                .map(|(prefix, probs)| RowRepr {
                    prefix: prefix.clone(),
                    probs: probs.clone(),
                })
                .collect(),
        };
        repr.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for TabularModel {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let repr = TabularModelRepr::deserialize(deserializer)?;
        if repr.kind != "tabular" {
            return Err(D::Error::custom(format!(
                "unsupported model type {:?}",
                repr.kind
            )));
        }
        let mut model = TabularModel::new(repr.vocab, repr.max_len);
        for row in repr.rows {
            model
                .insert_row(row.prefix, row.probs)
                .map_err(D::Error::custom)?;
        }
        Ok(model)
    }
}

/// Rolls out one sequence under a (non-beam) strategy: temperature-scale,
/// select candidates, renormalize, draw. Stops after the eos token or at
/// `max_len` tokens. Greedy rollouts consume no randomness.
pub fn rollout<M: SequenceModel + ?Sized, R: Rng + ?Sized>(
    model: &M,
    instance: &InstanceRef,
    spec: &StrategySpec,
    rng: &mut R,
    max_len: usize,
) -> Result<Vec<TokenId>> {
    let eos = model.vocabulary().eos();
    let (tokens, _) = rollout_segment(model, instance, &[], spec, rng, max_len, eos)?;
    Ok(tokens)
}

/// Continues generation from `context`, returning only the newly generated
/// tokens (including `terminal` when reached) and whether the terminal was
/// reached within `max_new` tokens.
pub fn rollout_segment<M: SequenceModel + ?Sized, R: Rng + ?Sized>(
    model: &M,
    instance: &InstanceRef,
    context: &[TokenId],
    spec: &StrategySpec,
    rng: &mut R,
    max_new: usize,
    terminal: TokenId,
) -> Result<(Vec<TokenId>, bool)> {
    if spec.is_beam() {
        return Err(Error::InvalidParameter(
            "beam search has its own entry point".into(),
        ));
    }
    let mut prefix = context.to_vec();
    let mut generated = Vec::new();
    for _ in 0..max_new {
        let row = model.next_distribution(instance, &prefix)?;
        let step = step_distribution(&row, spec)?;
        let token = if spec.is_greedy() {
            step.argmax()
        } else {
            sample_token(&step, rng)
        };
        generated.push(token);
        if token == terminal {
            return Ok((generated, true));
        }
        prefix.push(token);
    }
    Ok((generated, false))
}

/// The answer produced by greedy decoding: decode of the greedy rollout.
pub fn greedy_answer<M: SequenceModel + ?Sized>(
    model: &M,
    instance: &InstanceRef,
    space: &AnswerSpace,
    max_len: usize,
) -> Result<CanonicalAnswer> {
    let mut rng = NoRandomness;
    let tokens = rollout(model, instance, &StrategySpec::greedy(), &mut rng, max_len)?;
    decode_answer(&tokens, model.vocabulary(), space)
}

// Greedy rollouts never draw; this rng makes that explicit.
pub(crate) struct NoRandomness;

impl rand::RngCore for NoRandomness {
    fn next_u32(&mut self) -> u32 {
        unreachable!("greedy rollout consumed randomness")
    }
    fn next_u64(&mut self) -> u64 {
        unreachable!("greedy rollout consumed randomness")
    }
    fn fill_bytes(&mut self, _dest: &mut [u8]) {
        unreachable!("greedy rollout consumed randomness")
    }
}

/// Exact probability of every terminating sequence under the truncated
/// sampling process. Values sum to 1.
pub fn enumerate_sequence_probs<M: SequenceModel + ?Sized>(
    model: &M,
    instance: &InstanceRef,
    spec: &StrategySpec,
    max_len: usize,
) -> Result<BTreeMap<Vec<TokenId>, f64>> {
    let eos = model.vocabulary().eos();
    enumerate_sequence_probs_to(model, instance, spec, max_len, eos)
}

/// [`enumerate_sequence_probs`] toward an arbitrary terminal token.
/// Sequences hitting `max_len` without the terminal appear as truncated
/// leaves, so values still sum to 1.
pub fn enumerate_sequence_probs_to<M: SequenceModel + ?Sized>(
    model: &M,
    instance: &InstanceRef,
    spec: &StrategySpec,
    max_len: usize,
    terminal: TokenId,
) -> Result<BTreeMap<Vec<TokenId>, f64>> {
    if spec.is_beam() {
        return Err(Error::InvalidParameter(
            "beam search is deterministic; it induces no sampling distribution".into(),
        ));
    }
    let vocab_size = model.vocabulary().size() as u128;
    let mut leaves: u128 = 1;
    for _ in 0..max_len {
        leaves = leaves.saturating_mul(vocab_size);
        if leaves > ENUMERATION_GUARD {
            return Err(Error::EnumerationTooLarge {
                leaves,
                limit: ENUMERATION_GUARD,
            });
        }
    }

    let mut out = BTreeMap::new();
    let mut prefix: Vec<TokenId> = Vec::new();
    walk(model, instance, spec, max_len, terminal, &mut prefix, 1.0, &mut out)?;
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
fn walk<M: SequenceModel + ?Sized>(
    model: &M,
    instance: &InstanceRef,
    spec: &StrategySpec,
    max_len: usize,
    terminal: TokenId,
    prefix: &mut Vec<TokenId>,
    prob: f64,
    out: &mut BTreeMap<Vec<TokenId>, f64>,
) -> Result<()> {
    let row = model.next_distribution(instance, prefix)?;
    let step = step_distribution(&row, spec)?;
    for (i, &p) in step.as_slice().iter().enumerate() {
        if p <= 0.0 {
            continue;
        }
        let token = TokenId(i as u32);
        prefix.push(token);
        let joint = prob * p;
        if token == terminal || prefix.len() == max_len {
            *out.entry(prefix.clone()).or_insert(0.0) += joint;
        } else {
            walk(model, instance, spec, max_len, terminal, prefix, joint, out)?;
        }
        prefix.pop();
    }
    Ok(())
}

/// The answer posterior a strategy induces: sequence probabilities pushed
/// through the decode function and summed per canonical answer.
pub fn answer_posterior<M: SequenceModel + ?Sized>(
    model: &M,
    instance: &InstanceRef,
    spec: &StrategySpec,
    space: &AnswerSpace,
    max_len: usize,
) -> Result<AnswerDist> {
    let seqs = enumerate_sequence_probs(model, instance, spec, max_len)?;
    let vocab = model.vocabulary();
    let mut entries: BTreeMap<CanonicalAnswer, f64> = BTreeMap::new();
    for (tokens, prob) in seqs {
        let answer = decode_answer(&tokens, vocab, space)?;
        *entries.entry(answer).or_insert(0.0) += prob;
    }
    AnswerDist::new(entries)
}
