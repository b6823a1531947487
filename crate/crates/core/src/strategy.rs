//! Candidate-set selection, renormalized truncated sampling, greedy
//! selection, and beam search.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::model::{InstanceRef, SequenceModel};
use crate::vocab::{temperature_scale, ProbVector, TokenId};

/// Slack on the top-p cumulative boundary so that exact-looking sums like
/// 0.5 + 0.3 >= 0.8 behave as written despite binary rounding.
const TOP_P_BOUNDARY_SLACK: f64 = 1e-9;

/// A decoding strategy family with its hyperparameter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Strategy {
    /// Argmax token at every step; deterministic.
    Greedy,
    /// No truncation; sample the full (temperature-scaled) distribution.
    TemperatureOnly,
    /// Keep the `k` most probable tokens.
    TopK { k: usize },
    /// Keep the shortest descending-probability prefix with cumulative
    /// mass >= p (the crossing token included).
    TopP { p: f64 },
    /// Keep tokens with probability >= p_base times the top probability.
    MinP { p_base: f64 },
    /// Keep tokens with probability >= epsilon.
    Epsilon { eps: f64 },
    /// Keep tokens with probability >= min(eta, sqrt(eta) * exp(-H)),
    /// entropy in nats.
    Eta { eta: f64 },
    /// Beam search over summed log-probabilities.
    Beam { width: usize },
}

impl Strategy {
    fn name(self) -> &'static str {
        match self {
            Strategy::Greedy => "greedy",
            Strategy::TemperatureOnly => "temp",
            Strategy::TopK { .. } => "top_k",
            Strategy::TopP { .. } => "top_p",
            Strategy::MinP { .. } => "min_p",
            Strategy::Epsilon { .. } => "epsilon",
            Strategy::Eta { .. } => "eta",
            Strategy::Beam { .. } => "beam",
        }
    }
}

/// A strategy plus its sampling temperature. Greedy and beam carry an
/// implied temperature of 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StrategySpec {
    strategy: Strategy,
    tau: f64,
}

impl StrategySpec {
    pub fn new(strategy: Strategy, tau: f64) -> Result<Self> {
        if tau <= 0.0 || !tau.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "temperature must be a positive finite real, got {tau}"
            )));
        }
        match strategy {
            Strategy::TopK { k } if k < 1 => {
                return Err(Error::InvalidParameter("top_k requires k >= 1".into()))
            }
            Strategy::TopP { p } if !(p > 0.0 && p <= 1.0) => {
                return Err(Error::InvalidParameter(format!(
                    "top_p requires 0 < p <= 1, got {p}"
                )))
            }
            Strategy::MinP { p_base } if !(p_base > 0.0 && p_base <= 1.0) => {
                return Err(Error::InvalidParameter(format!(
                    "min_p requires 0 < p_base <= 1, got {p_base}"
                )))
            }
            Strategy::Epsilon { eps } if !(eps > 0.0 && eps < 1.0) => {
                return Err(Error::InvalidParameter(format!(
                    "epsilon requires 0 < eps < 1, got {eps}"
                )))
            }
            Strategy::Eta { eta } if !(eta > 0.0 && eta < 1.0) => {
                return Err(Error::InvalidParameter(format!(
                    "eta requires 0 < eta < 1, got {eta}"
                )))
            }
            Strategy::Beam { width } if width < 1 => {
                return Err(Error::InvalidParameter("beam requires width >= 1".into()))
            }
            _ => {}
        }
        // greedy and beam temperatures are fixed at 1 by definition
        let tau = match strategy {
            Strategy::Greedy | Strategy::Beam { .. } => 1.0,
            _ => tau,
        };
        Ok(Self { strategy, tau })
    }

    pub fn greedy() -> Self {
        Self {
            strategy: Strategy::Greedy,
            tau: 1.0,
        }
    }

    pub fn temperature_only(tau: f64) -> Result<Self> {
        Self::new(Strategy::TemperatureOnly, tau)
    }

    pub fn top_k(k: usize, tau: f64) -> Result<Self> {
        Self::new(Strategy::TopK { k }, tau)
    }

    pub fn top_p(p: f64, tau: f64) -> Result<Self> {
        Self::new(Strategy::TopP { p }, tau)
    }

    pub fn min_p(p_base: f64, tau: f64) -> Result<Self> {
        Self::new(Strategy::MinP { p_base }, tau)
    }

    pub fn epsilon(eps: f64, tau: f64) -> Result<Self> {
        Self::new(Strategy::Epsilon { eps }, tau)
    }

    pub fn eta(eta: f64, tau: f64) -> Result<Self> {
        Self::new(Strategy::Eta { eta }, tau)
    }

    pub fn beam(width: usize) -> Result<Self> {
        Self::new(Strategy::Beam { width }, 1.0)
    }

    pub fn strategy(&self) -> Strategy {
        self.strategy
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn is_greedy(&self) -> bool {
        matches!(self.strategy, Strategy::Greedy)
    }

    pub fn is_beam(&self) -> bool {
        matches!(self.strategy, Strategy::Beam { .. })
    }

    /// True when every rollout under this spec yields the same sequence.
    pub fn is_deterministic(&self) -> bool {
        matches!(
            self.strategy,
            Strategy::Greedy | Strategy::Beam { .. } | Strategy::TopK { k: 1 }
        )
    }

    /// Family-and-parameter label without the temperature, e.g. `top_p:0.9`.
    pub fn family_label(&self) -> String {
        match self.strategy {
            Strategy::Greedy | Strategy::TemperatureOnly => self.strategy.name().to_string(),
            Strategy::TopK { k } => format!("top_k:{k}"),
            Strategy::TopP { p } => format!("top_p:{p}"),
            Strategy::MinP { p_base } => format!("min_p:{p_base}"),
            Strategy::Epsilon { eps } => format!("epsilon:{eps}"),
            Strategy::Eta { eta } => format!("eta:{eta}"),
            Strategy::Beam { width } => format!("beam:{width}"),
        }
    }

    /// Same family and parameter at a different temperature. Greedy and
    /// beam ignore the requested temperature.
    pub fn at_tau(&self, tau: f64) -> Result<Self> {
        Self::new(self.strategy, tau)
    }
}

impl fmt::Display for StrategySpec {
    /// Canonical textual encoding: `family:param@tau`, with `@tau` omitted
    /// at the default temperature of 1.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.family_label())?;
        if self.tau != 1.0 {
            write!(f, "@{}", self.tau)?;
        }
        Ok(())
    }
}

impl FromStr for StrategySpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = |msg: &str| Error::InvalidParameter(format!("strategy {s:?}: {msg}"));
        let (head, tau) = match s.split_once('@') {
            Some((head, tau_str)) => {
                let tau: f64 = tau_str
                    .parse()
                    .map_err(|_| bad("temperature is not a number"))?;
                (head, tau)
            }
            None => (s, 1.0),
        };
        let (family, param) = match head.split_once(':') {
            Some((family, param)) => (family, Some(param)),
            None => (head, None),
        };
        let parse_f = |p: Option<&str>| -> Result<f64> {
            p.ok_or_else(|| bad("missing parameter"))?
                .parse()
                .map_err(|_| bad("parameter is not a number"))
        };
        let parse_u = |p: Option<&str>| -> Result<usize> {
            p.ok_or_else(|| bad("missing parameter"))?
                .parse()
                .map_err(|_| bad("parameter is not a positive integer"))
        };
        let strategy = match family {
            "greedy" => Strategy::Greedy,
            "temp" => Strategy::TemperatureOnly,
            "top_k" => Strategy::TopK { k: parse_u(param)? },
            "top_p" => Strategy::TopP { p: parse_f(param)? },
            "min_p" => Strategy::MinP {
                p_base: parse_f(param)?,
            },
            "epsilon" => Strategy::Epsilon {
                eps: parse_f(param)?,
            },
            "eta" => Strategy::Eta {
                eta: parse_f(param)?,
            },
            "beam" => Strategy::Beam {
                width: parse_u(param)?,
            },
            other => return Err(bad(&format!("unknown family {other:?}"))),
        };
        if matches!(strategy, Strategy::Greedy | Strategy::TemperatureOnly)
            && param.is_some()
        {
            return Err(bad("family takes no parameter"));
        }
        StrategySpec::new(strategy, tau)
    }
}

impl Serialize for StrategySpec {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for StrategySpec {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(D::Error::custom)
    }
}

/// Non-empty set of candidate token ids, kept sorted ascending.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CandidateSet {
    members: Vec<TokenId>,
}

impl CandidateSet {
    pub fn new(mut members: Vec<TokenId>) -> Result<Self> {
        members.sort_unstable();
        members.dedup();
        if members.is_empty() {
            return Err(Error::InvalidInput("candidate set must be non-empty".into()));
        }
        Ok(Self { members })
    }

    pub fn full(vocab_size: usize) -> Self {
        Self {
            members: (0..vocab_size as u32).map(TokenId).collect(),
        }
    }

    pub fn singleton(id: TokenId) -> Self {
        Self { members: vec![id] }
    }

    pub fn contains(&self, id: TokenId) -> bool {
        self.members.binary_search(&id).is_ok()
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = TokenId> + '_ {
        self.members.iter().copied()
    }

    pub fn members(&self) -> &[TokenId] {
        &self.members
    }

    pub fn is_subset_of(&self, other: &CandidateSet) -> bool {
        self.members.iter().all(|&t| other.contains(t))
    }
}

/// Token indices sorted by descending probability, ties toward the lower id.
fn descending_order(dist: &ProbVector) -> Vec<usize> {
    let mut order: Vec<usize> = (0..dist.len()).collect();
    order.sort_by(|&a, &b| {
        dist.as_slice()[b]
            .partial_cmp(&dist.as_slice()[a])
            .unwrap_or(Ordering::Equal)
            .then_with(|| a.cmp(&b))
    });
    order
}

/// Applies a strategy's truncation rule to a distribution that has already
/// been temperature-scaled. Beam has no per-step candidate rule here.
pub fn select_candidates(dist: &ProbVector, spec: &StrategySpec) -> Result<CandidateSet> {
    let v = dist.len();
    match spec.strategy {
        Strategy::Greedy => Ok(CandidateSet::singleton(dist.argmax())),
        Strategy::TemperatureOnly => Ok(CandidateSet::full(v)),
        Strategy::TopK { k } => {
            if k < 1 || k > v {
                return Err(Error::InvalidParameter(format!(
                    "top_k k={k} out of range for vocabulary of size {v}"
                )));
            }
            let order = descending_order(dist);
            CandidateSet::new(order[..k].iter().map(|&i| TokenId(i as u32)).collect())
        }
        Strategy::TopP { p } => {
            let order = descending_order(dist);
            let mut kept = Vec::new();
            let mut cumulative = 0.0;
            for &i in &order {
                kept.push(TokenId(i as u32));
                cumulative += dist.as_slice()[i];
                if cumulative >= p - TOP_P_BOUNDARY_SLACK {
                    break;
                }
            }
            CandidateSet::new(kept)
        }
        Strategy::MinP { p_base } => {
            let max = dist.as_slice()[dist.argmax().index()];
            let threshold = p_base * max;
            CandidateSet::new(threshold_keep(dist, threshold))
        }
        Strategy::Epsilon { eps } => {
            let kept = threshold_keep(dist, eps);
            if kept.is_empty() {
                Ok(CandidateSet::singleton(dist.argmax()))
            } else {
                CandidateSet::new(kept)
            }
        }
        Strategy::Eta { eta } => {
            let entropy = dist.entropy_nats();
            let threshold = eta.min(eta.sqrt() * (-entropy).exp());
            let kept = threshold_keep(dist, threshold);
            if kept.is_empty() {
                Ok(CandidateSet::singleton(dist.argmax()))
            } else {
                CandidateSet::new(kept)
            }
        }
        Strategy::Beam { .. } => Err(Error::InvalidParameter(
            "beam search has no per-step candidate rule; use beam_search".into(),
        )),
    }
}

fn threshold_keep(dist: &ProbVector, threshold: f64) -> Vec<TokenId> {
    dist.as_slice()
        .iter()
        .enumerate()
        .filter(|(_, &p)| p >= threshold)
        .map(|(i, _)| TokenId(i as u32))
        .collect()
}

/// Restricts `dist` to `candidates` and renormalizes proportionally to the
/// original likelihoods.
pub fn truncate_renormalize(dist: &ProbVector, candidates: &CandidateSet) -> Result<ProbVector> {
    let mass: f64 = candidates.iter().map(|t| dist.get(t)).sum();
    if mass <= 0.0 {
        return Err(Error::DegenerateSupport);
    }
    let mut probs = vec![0.0; dist.len()];
    for t in candidates.iter() {
        probs[t.index()] = dist.get(t) / mass;
    }
    ProbVector::new(probs)
}

/// Temperature-scales, selects candidates, and renormalizes: the per-step
/// sampling distribution a strategy induces from a model row.
pub fn step_distribution(row: &ProbVector, spec: &StrategySpec) -> Result<ProbVector> {
    let scaled;
    let dist = if spec.tau() != 1.0 {
        scaled = temperature_scale(row, spec.tau())?;
        &scaled
    } else {
        row
    };
    let candidates = select_candidates(dist, spec)?;
    truncate_renormalize(dist, &candidates)
}

/// Draws one token: returns id `i` with probability `dist[i]`.
pub fn sample_token<R: Rng + ?Sized>(dist: &ProbVector, rng: &mut R) -> TokenId {
    let u: f64 = rng.random();
    let mut cumulative = 0.0;
    let mut last_positive = 0;
    for (i, &p) in dist.as_slice().iter().enumerate() {
        if p > 0.0 {
            last_positive = i;
        }
        cumulative += p;
        if u < cumulative {
            return TokenId(i as u32);
        }
    }
    // u landed in residual rounding mass
    TokenId(last_positive as u32)
}

/// Precomputed inverse-CDF sampler for repeated draws from one distribution.
/// Draws the same tokens as [`sample_token`] for the same rng stream.
pub struct TokenSampler {
    cdf: Vec<f64>,
    last_positive: usize,
}

impl TokenSampler {
    pub fn new(dist: &ProbVector) -> Self {
        let mut cdf = Vec::with_capacity(dist.len());
        let mut cumulative = 0.0;
        let mut last_positive = 0;
        for (i, &p) in dist.as_slice().iter().enumerate() {
            if p > 0.0 {
                last_positive = i;
            }
            cumulative += p;
            cdf.push(cumulative);
        }
        Self { cdf, last_positive }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> TokenId {
        let u: f64 = rng.random();
        let idx = self.cdf.partition_point(|&c| c <= u);
        if idx >= self.cdf.len() {
            TokenId(self.last_positive as u32)
        } else {
            TokenId(idx as u32)
        }
    }
}

/// Argmax token; ties break toward the lower token id.
pub fn greedy_token(dist: &ProbVector) -> TokenId {
    dist.argmax()
}

/// Outcome of a beam search: the best completed sequence, or the best
/// truncated beam when nothing reached the terminal token.
#[derive(Debug, Clone, PartialEq)]
pub struct BeamResult {
    pub tokens: Vec<TokenId>,
    pub log_prob: f64,
    pub truncated: bool,
}

/// Standard beam search over summed log-probabilities with no length
/// normalization. Beams ending in the terminal token are frozen; all ties
/// break lexicographically by token sequence, so width 1 reproduces a
/// greedy rollout exactly.
pub fn beam_search<M: SequenceModel + ?Sized>(
    model: &M,
    instance: &InstanceRef,
    width: usize,
    max_len: usize,
) -> Result<BeamResult> {
    let terminal = model.vocabulary().eos();
    beam_search_to(model, instance, width, max_len, terminal)
}

/// Beam search toward an arbitrary terminal token (the reasoning phase of
/// two-phase decoding terminates on the think-end delimiter instead of eos).
pub fn beam_search_to<M: SequenceModel + ?Sized>(
    model: &M,
    instance: &InstanceRef,
    width: usize,
    max_len: usize,
    terminal: TokenId,
) -> Result<BeamResult> {
    if width < 1 || max_len < 1 {
        return Err(Error::InvalidParameter(
            "beam search requires width >= 1 and max_len >= 1".into(),
        ));
    }

    #[derive(Clone)]
    struct Beam {
        tokens: Vec<TokenId>,
        log_prob: f64,
    }

    let mut active = vec![Beam {
        tokens: Vec::new(),
        log_prob: 0.0,
    }];
    let mut completed: Vec<Beam> = Vec::new();

    for _ in 0..max_len {
        if active.is_empty() {
            break;
        }
        let mut candidates: Vec<Beam> = Vec::new();
        for beam in &active {
            let dist = model.next_distribution(instance, &beam.tokens)?;
            for (i, &p) in dist.as_slice().iter().enumerate() {
                if p <= 0.0 {
                    continue;
                }
                let mut tokens = beam.tokens.clone();
                tokens.push(TokenId(i as u32));
                candidates.push(Beam {
                    tokens,
                    log_prob: beam.log_prob + p.ln(),
                });
            }
        }
        // higher score first, lexicographically smaller sequence on ties
        candidates.sort_by(|a, b| {
            b.log_prob
                .partial_cmp(&a.log_prob)
                .unwrap_or(Ordering::Equal)
                .then_with(|| a.tokens.cmp(&b.tokens))
        });
        // the top `width` candidates survive; completed ones freeze and
        // keep their slot, which makes width 1 coincide with greedy
        active.clear();
        for beam in candidates.into_iter().take(width) {
            if *beam.tokens.last().expect("candidate has a token") == terminal {
                completed.push(beam);
            } else {
                active.push(beam);
            }
        }
    }

    let best_of = |beams: &[Beam]| -> Option<Beam> {
        beams
            .iter()
            .min_by(|a, b| {
                b.log_prob
                    .partial_cmp(&a.log_prob)
                    .unwrap_or(Ordering::Equal)
                    .then_with(|| a.tokens.cmp(&b.tokens))
            })
            .cloned()
    };

    if let Some(best) = best_of(&completed) {
        return Ok(BeamResult {
            tokens: best.tokens,
            log_prob: best.log_prob,
            truncated: false,
        });
    }
    let best = best_of(&active).expect("beam search retains at least one beam");
    Ok(BeamResult {
        tokens: best.tokens,
        log_prob: best.log_prob,
        truncated: true,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn pv(xs: &[f64]) -> ProbVector {
        ProbVector::new(xs.to_vec()).unwrap()
    }

    fn ids(xs: &[u32]) -> Vec<TokenId> {
        xs.iter().map(|&i| TokenId(i)).collect()
    }

    const BASE: [f64; 4] = [0.5, 0.3, 0.15, 0.05];

    #[test]
    fn top_k_keeps_k_most_probable() {
        let s = select_candidates(&pv(&BASE), &StrategySpec::top_k(2, 1.0).unwrap()).unwrap();
        assert_eq!(s.members(), ids(&[0, 1]).as_slice());
    }

    #[test]
    fn top_p_includes_the_crossing_token() {
        let s = select_candidates(&pv(&BASE), &StrategySpec::top_p(0.8, 1.0).unwrap()).unwrap();
        assert_eq!(s.members(), ids(&[0, 1]).as_slice());
    }

    #[test]
    fn min_p_thresholds_against_top_probability() {
        let s = select_candidates(&pv(&BASE), &StrategySpec::min_p(0.2, 1.0).unwrap()).unwrap();
        assert_eq!(s.members(), ids(&[0, 1, 2]).as_slice());
    }

    #[test]
    fn epsilon_keeps_tokens_above_threshold() {
        let s = select_candidates(&pv(&BASE), &StrategySpec::epsilon(0.1, 1.0).unwrap()).unwrap();
        assert_eq!(s.members(), ids(&[0, 1, 2]).as_slice());
    }

    #[test]
    fn eta_threshold_oracle() {
        // H = -sum p ln p; threshold = min(eta, sqrt(eta) e^{-H}) must land
        // in (0.05, 0.15] so tokens {0,1,2} survive.
        let dist = pv(&BASE);
        let entropy: f64 = BASE.iter().map(|&p| -p * f64::ln(p)).sum();
        let eta = 0.09;
        let threshold = f64::min(eta, eta.sqrt() * (-entropy).exp());
        assert!(threshold > 0.05 && threshold <= 0.15, "threshold {threshold}");
        let s = select_candidates(&dist, &StrategySpec::eta(eta, 1.0).unwrap()).unwrap();
        assert_eq!(s.members(), ids(&[0, 1, 2]).as_slice());
    }

    #[test]
    fn epsilon_falls_back_to_argmax() {
        let s = select_candidates(&pv(&BASE), &StrategySpec::epsilon(0.9, 1.0).unwrap()).unwrap();
        assert_eq!(s.members(), ids(&[0]).as_slice());
    }

    #[test]
    fn greedy_limit_specs_yield_argmax_singleton() {
        let dist = pv(&BASE);
        for spec in [
            StrategySpec::greedy(),
            StrategySpec::top_k(1, 1.0).unwrap(),
            StrategySpec::top_p(0.5, 1.0).unwrap(),
            StrategySpec::min_p(1.0, 1.0).unwrap(),
        ] {
            let s = select_candidates(&dist, &spec).unwrap();
            assert_eq!(s.members(), ids(&[0]).as_slice(), "{spec}");
        }
    }

    #[test]
    fn truncate_renormalize_examples() {
        let dist = pv(&BASE);
        let s = CandidateSet::new(ids(&[0, 1])).unwrap();
        let t = truncate_renormalize(&dist, &s).unwrap();
        assert!((t.get(TokenId(0)) - 0.625).abs() < 1e-12);
        assert!((t.get(TokenId(1)) - 0.375).abs() < 1e-12);
        assert_eq!(t.get(TokenId(2)), 0.0);

        let full = truncate_renormalize(&dist, &CandidateSet::full(4)).unwrap();
        for i in 0..4 {
            assert!((full.get(TokenId(i)) - BASE[i as usize]).abs() < 1e-12);
        }

        let single = truncate_renormalize(&dist, &CandidateSet::singleton(TokenId(2))).unwrap();
        assert_eq!(single.get(TokenId(2)), 1.0);
    }

    #[test]
    fn truncate_zero_mass_is_degenerate() {
        let dist = pv(&[0.5, 0.5, 0.0]);
        let s = CandidateSet::singleton(TokenId(2));
        assert!(matches!(
            truncate_renormalize(&dist, &s),
            Err(Error::DegenerateSupport)
        ));
    }

    #[test]
    fn tie_break_is_by_lower_token_id() {
        let dist = pv(&[0.4, 0.4, 0.2]);
        assert_eq!(greedy_token(&dist), TokenId(0));
        let s = select_candidates(&dist, &StrategySpec::top_k(1, 1.0).unwrap()).unwrap();
        assert_eq!(s.members(), ids(&[0]).as_slice());
    }

    #[test]
    fn sampling_is_deterministic_per_seed() {
        let dist = pv(&BASE);
        let a = sample_token(&dist, &mut ChaCha8Rng::seed_from_u64(7));
        let b = sample_token(&dist, &mut ChaCha8Rng::seed_from_u64(7));
        assert_eq!(a, b);
        assert_eq!(
            sample_token(&pv(&[1.0, 0.0, 0.0]), &mut ChaCha8Rng::seed_from_u64(99)),
            TokenId(0)
        );
    }

    #[test]
    fn sampler_matches_sample_token_stream() {
        let dist = pv(&[0.2, 0.0, 0.5, 0.3]);
        let sampler = TokenSampler::new(&dist);
        let mut r1 = ChaCha8Rng::seed_from_u64(3);
        let mut r2 = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..500 {
            assert_eq!(sample_token(&dist, &mut r1), sampler.sample(&mut r2));
        }
    }

    #[test]
    fn sample_frequencies_match_binomial_band() {
        let dist = pv(&[0.5, 0.5]);
        let mut rng = ChaCha8Rng::seed_from_u64(12345);
        let n = 100_000;
        let mut zeros = 0u32;
        for _ in 0..n {
            if sample_token(&dist, &mut rng) == TokenId(0) {
                zeros += 1;
            }
        }
        let freq = zeros as f64 / n as f64;
        assert!((0.494..=0.506).contains(&freq), "freq {freq}");
    }

    #[test]
    fn spec_encoding_round_trips() {
        for s in [
            "greedy",
            "temp",
            "temp@0.7",
            "top_k:5",
            "top_k:50@2",
            "top_p:0.9@0.7",
            "min_p:0.05",
            "epsilon:0.0003",
            "eta:0.002@2",
            "beam:5",
        ] {
            let spec: StrategySpec = s.parse().unwrap();
            assert_eq!(spec.to_string(), s, "round trip of {s}");
        }
        assert!("top_q:0.5".parse::<StrategySpec>().is_err());
        assert!("top_p:1.5".parse::<StrategySpec>().is_err());
        assert!("top_p".parse::<StrategySpec>().is_err());
        assert!("greedy:2".parse::<StrategySpec>().is_err());
        assert!("temp@0".parse::<StrategySpec>().is_err());
    }

    #[test]
    fn invalid_parameters_are_rejected() {
        assert!(StrategySpec::top_p(0.0, 1.0).is_err());
        assert!(StrategySpec::epsilon(1.0, 1.0).is_err());
        assert!(StrategySpec::eta(0.0, 1.0).is_err());
        assert!(StrategySpec::min_p(1.2, 1.0).is_err());
        assert!(StrategySpec::beam(0).is_err());
        assert!(StrategySpec::top_k(0, 1.0).is_err());
        let d = pv(&BASE);
        assert!(select_candidates(&d, &StrategySpec::top_k(5, 1.0).unwrap()).is_err());
    }

    mod properties {
        use super::{
            select_candidates, temperature_scale, truncate_renormalize, ProbVector, StrategySpec,
        };
        use proptest::prelude::*;

        fn arb_dist() -> impl proptest::strategy::Strategy<Value = ProbVector> {
            proptest::collection::vec(0.01f64..1.0, 2..16).prop_map(|raw| {
                let sum: f64 = raw.iter().sum();
                ProbVector::new(raw.iter().map(|x| x / sum).collect()).unwrap()
            })
        }

        proptest! {
            #[test]
            fn candidate_set_always_contains_argmax(
                dist in arb_dist(),
                k in 1usize..4,
                p in 0.05f64..1.0,
                p_base in 0.01f64..1.0,
                eps in 0.0001f64..0.5,
                eta in 0.0001f64..0.5,
            ) {
                let v = dist.len();
                let argmax = dist.argmax();
                let specs = vec![
                    StrategySpec::greedy(),
                    StrategySpec::temperature_only(1.0).unwrap(),
                    StrategySpec::top_k(k.min(v), 1.0).unwrap(),
                    StrategySpec::top_p(p, 1.0).unwrap(),
                    StrategySpec::min_p(p_base, 1.0).unwrap(),
                    StrategySpec::epsilon(eps, 1.0).unwrap(),
                    StrategySpec::eta(eta, 1.0).unwrap(),
                ];
                for spec in specs {
                    let s = select_candidates(&dist, &spec).unwrap();
                    prop_assert!(s.contains(argmax), "{} lost the argmax", spec);
                }
            }

            #[test]
            fn truncation_families_nest(dist in arb_dist(), k in 1usize..8, p in 0.05f64..0.95, eps in 0.001f64..0.3) {
                let v = dist.len();
                let k = k.min(v - 1).max(1);
                let a = select_candidates(&dist, &StrategySpec::top_k(k, 1.0).unwrap()).unwrap();
                let b = select_candidates(&dist, &StrategySpec::top_k(k + 1, 1.0).unwrap()).unwrap();
                prop_assert!(a.is_subset_of(&b));

                let c = select_candidates(&dist, &StrategySpec::top_p(p, 1.0).unwrap()).unwrap();
                let d = select_candidates(&dist, &StrategySpec::top_p((p + 0.05).min(1.0), 1.0).unwrap()).unwrap();
                prop_assert!(c.is_subset_of(&d));

                let e = select_candidates(&dist, &StrategySpec::epsilon(eps * 2.0, 1.0).unwrap()).unwrap();
                let f = select_candidates(&dist, &StrategySpec::epsilon(eps, 1.0).unwrap()).unwrap();
                prop_assert!(e.is_subset_of(&f));
            }

            #[test]
            fn truncation_is_idempotent_and_valid(dist in arb_dist(), k in 1usize..6) {
                let k = k.min(dist.len());
                let s = select_candidates(&dist, &StrategySpec::top_k(k, 1.0).unwrap()).unwrap();
                let once = truncate_renormalize(&dist, &s).unwrap();
                let twice = truncate_renormalize(&once, &s).unwrap();
                for i in 0..once.len() {
                    prop_assert!((once.as_slice()[i] - twice.as_slice()[i]).abs() < 1e-12);
                }
                let total: f64 = once.as_slice().iter().sum();
                prop_assert!((total - 1.0).abs() < 1e-9);
            }

            #[test]
            fn argmax_survives_temperature(dist in arb_dist(), tau in 0.05f64..8.0) {
                let scaled = temperature_scale(&dist, tau).unwrap();
                prop_assert_eq!(scaled.argmax(), dist.argmax());
            }
        }
    }
}
