//! Token alphabet and probability vectors.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Index of a token in a [`Vocabulary`]. All tie-breaking in this crate is
/// by ascending token id.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TokenId(pub u32);

impl TokenId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// A token alphabet with an end-of-sequence token and an optional
/// reasoning-delimiter token.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vocabulary {
    size: usize,
    labels: Option<Vec<String>>,
    eos: TokenId,
    think_end: Option<TokenId>,
}

impl Vocabulary {
    pub fn new(
        size: usize,
        labels: Option<Vec<String>>,
        eos: TokenId,
        think_end: Option<TokenId>,
    ) -> Result<Self> {
        if size == 0 {
            return Err(Error::InvalidInput("vocabulary size must be positive".into()));
        }
        if eos.index() >= size {
            return Err(Error::InvalidInput(format!(
                "eos id {} out of range for vocabulary of size {size}",
                eos.0
            )));
        }
        if let Some(te) = think_end {
            if te.index() >= size || te == eos {
                return Err(Error::InvalidInput(format!(
                    "think_end id {} must be < {size} and distinct from eos",
                    te.0
                )));
            }
        }
        if let Some(ref ls) = labels {
            if ls.len() != size {
                return Err(Error::InvalidInput(format!(
                    "expected {size} labels, got {}",
                    ls.len()
                )));
            }
        }
        Ok(Self {
            size,
            labels,
            eos,
            think_end,
        })
    }

    /// Builds a labeled vocabulary whose eos is the last token. `labels`
    /// excludes the eos label (an empty string is appended for it).
    pub fn from_labels(labels: Vec<String>) -> Result<Self> {
        let mut all = labels;
        all.push(String::new());
        let size = all.len();
        Self::new(size, Some(all), TokenId(size as u32 - 1), None)
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn eos(&self) -> TokenId {
        self.eos
    }

    pub fn think_end(&self) -> Option<TokenId> {
        self.think_end
    }

    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }

    pub fn label(&self, id: TokenId) -> Option<&str> {
        self.labels.as_ref().map(|ls| ls[id.index()].as_str())
    }

    pub fn token_ids(&self) -> impl Iterator<Item = TokenId> {
        (0..self.size as u32).map(TokenId)
    }
}

/// A finite probability distribution over a vocabulary.
///
/// Entries are non-negative; the sum is validated to 1e-9 on construction
/// and silently renormalized when it is off by at most 1e-6.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ProbVector {
    probs: Vec<f64>,
}

const SUM_TOLERANCE: f64 = 1e-9;
const RENORM_TOLERANCE: f64 = 1e-6;

impl ProbVector {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::InvalidInput("empty probability vector".into()));
        }
        let mut sum = 0.0;
        for (i, &p) in probs.iter().enumerate() {
            if !p.is_finite() || p < 0.0 {
                return Err(Error::InvalidInput(format!(
                    "probability at index {i} is {p}, expected finite and >= 0"
                )));
            }
            sum += p;
        }
        if (sum - 1.0).abs() <= SUM_TOLERANCE {
            Ok(Self { probs })
        } else if (sum - 1.0).abs() <= RENORM_TOLERANCE {
            let probs = probs.iter().map(|p| p / sum).collect();
            Ok(Self { probs })
        } else {
            Err(Error::InvalidInput(format!(
                "probabilities sum to {sum}, expected 1 within {RENORM_TOLERANCE}"
            )))
        }
    }

    /// Uniform distribution over `n` tokens.
    pub fn uniform(n: usize) -> Result<Self> {
        Self::new(vec![1.0 / n as f64; n])
    }

    /// Point mass on `id`.
    pub fn point_mass(n: usize, id: TokenId) -> Result<Self> {
        if id.index() >= n {
            return Err(Error::InvalidInput(format!(
                "token id {} out of range for length {n}",
                id.0
            )));
        }
        let mut probs = vec![0.0; n];
        probs[id.index()] = 1.0;
        Ok(Self { probs })
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn get(&self, id: TokenId) -> f64 {
        self.probs[id.index()]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.probs
    }

    /// Index of the largest entry; ties break toward the lower token id.
    pub fn argmax(&self) -> TokenId {
        let mut best = 0usize;
        for (i, &p) in self.probs.iter().enumerate().skip(1) {
            if p > self.probs[best] {
                best = i;
            }
        }
        TokenId(best as u32)
    }

    /// Shannon entropy in nats. Zero entries contribute nothing.
    pub fn entropy_nats(&self) -> f64 {
        self.probs
            .iter()
            .filter(|&&p| p > 0.0)
            .map(|&p| -p * p.ln())
            .sum()
    }
}

impl TryFrom<Vec<f64>> for ProbVector {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<ProbVector> for Vec<f64> {
    fn from(p: ProbVector) -> Self {
        p.probs
    }
}

/// Raw (pre-softmax) scores over a vocabulary. All entries finite.
#[derive(Debug, Clone, PartialEq)]
pub struct LogitVector {
    logits: Vec<f64>,
}

impl LogitVector {
    pub fn new(logits: Vec<f64>) -> Result<Self> {
        if logits.is_empty() {
            return Err(Error::InvalidInput("empty logit vector".into()));
        }
        for (i, &x) in logits.iter().enumerate() {
            if !x.is_finite() {
                return Err(Error::InvalidInput(format!(
                    "logit at index {i} is {x}, expected finite"
                )));
            }
        }
        Ok(Self { logits })
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.logits
    }
}

/// Softmax over `logits / tau`. Preserves the argmax for every `tau > 0`.
pub fn softmax_with_temperature(logits: &LogitVector, tau: f64) -> Result<ProbVector> {
    if tau <= 0.0 || !tau.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "temperature must be a positive finite real, got {tau}"
        )));
    }
    let scaled: Vec<f64> = logits.logits.iter().map(|&x| x / tau).collect();
    let max = scaled.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scaled.iter().map(|&x| (x - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    ProbVector::new(exps.iter().map(|&e| e / sum).collect())
}

/// Temperature-scales a probability vector: `p_i^(1/tau)`, renormalized.
///
/// Equivalent to `softmax_with_temperature(ln p, tau)`; zero entries stay
/// zero. This is how temperature applies to stored model rows, which are
/// probabilities rather than logits.
pub fn temperature_scale(dist: &ProbVector, tau: f64) -> Result<ProbVector> {
    if tau <= 0.0 || !tau.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "temperature must be a positive finite real, got {tau}"
        )));
    }
    if tau == 1.0 {
        return Ok(dist.clone());
    }
    let scaled: Vec<f64> = dist
        .probs
        .iter()
        .map(|&p| if p > 0.0 { p.ln() / tau } else { f64::NEG_INFINITY })
        .collect();
    let max = scaled.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scaled
        .iter()
        .map(|&x| if x == f64::NEG_INFINITY { 0.0 } else { (x - max).exp() })
        .collect();
    let sum: f64 = exps.iter().sum();
    ProbVector::new(exps.iter().map(|&e| e / sum).collect())
}

/// Joint probability of `tokens` under per-step distributions.
pub fn sequence_probability(step_dists: &[ProbVector], tokens: &[TokenId]) -> Result<f64> {
    if step_dists.len() != tokens.len() {
        return Err(Error::InvalidInput(format!(
            "{} step distributions for {} tokens",
            step_dists.len(),
            tokens.len()
        )));
    }
    let mut prob = 1.0;
    for (dist, &tok) in step_dists.iter().zip(tokens) {
        if tok.index() >= dist.len() {
            return Err(Error::InvalidInput(format!(
                "token id {} out of range for step distribution of length {}",
                tok.0,
                dist.len()
            )));
        }
        prob *= dist.get(tok);
    }
    Ok(prob)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pv(xs: &[f64]) -> ProbVector {
        ProbVector::new(xs.to_vec()).unwrap()
    }

    #[test]
    fn softmax_uniform_on_equal_logits() {
        let p = softmax_with_temperature(&LogitVector::new(vec![0.0, 0.0, 0.0]).unwrap(), 1.0)
            .unwrap();
        for &x in p.as_slice() {
            assert!((x - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn softmax_ln2_gives_two_thirds() {
        let p = softmax_with_temperature(
            &LogitVector::new(vec![2.0f64.ln(), 0.0]).unwrap(),
            1.0,
        )
        .unwrap();
        assert!((p.get(TokenId(0)) - 2.0 / 3.0).abs() < 1e-12);
        assert!((p.get(TokenId(1)) - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn softmax_half_temperature_oracle() {
        // logits [1, 0] at tau=0.5 scale to [2, 0]: probs e^2/(e^2+1), 1/(e^2+1).
        let p = softmax_with_temperature(&LogitVector::new(vec![1.0, 0.0]).unwrap(), 0.5).unwrap();
        let e2 = 2.0f64.exp();
        assert!((p.get(TokenId(0)) - e2 / (e2 + 1.0)).abs() < 1e-12);
        assert!((p.get(TokenId(1)) - 1.0 / (e2 + 1.0)).abs() < 1e-12);
    }

    #[test]
    fn softmax_rejects_bad_inputs() {
        assert!(LogitVector::new(vec![f64::NAN, 0.0]).is_err());
        assert!(LogitVector::new(vec![f64::INFINITY]).is_err());
        let l = LogitVector::new(vec![0.0, 1.0]).unwrap();
        assert!(softmax_with_temperature(&l, 0.0).is_err());
        assert!(softmax_with_temperature(&l, -1.0).is_err());
    }

    #[test]
    fn prob_vector_validates_and_renormalizes() {
        assert!(ProbVector::new(vec![0.5, 0.6]).is_err());
        assert!(ProbVector::new(vec![-0.1, 1.1]).is_err());
        // off by 1e-7: accepted and renormalized
        let p = ProbVector::new(vec![0.5 + 1e-7, 0.5]).unwrap();
        let sum: f64 = p.as_slice().iter().sum();
        assert!((sum - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn temperature_scale_preserves_argmax_and_zeros() {
        let d = pv(&[0.5, 0.3, 0.0, 0.2]);
        for tau in [0.1, 0.5, 1.0, 2.0, 10.0] {
            let s = temperature_scale(&d, tau).unwrap();
            assert_eq!(s.argmax(), TokenId(0), "tau={tau}");
            assert_eq!(s.get(TokenId(2)), 0.0, "tau={tau}");
        }
    }

    #[test]
    fn sequence_probability_product_oracle() {
        let dists = vec![pv(&[0.6, 0.4]), pv(&[0.9, 0.1])];
        let p = sequence_probability(&dists, &[TokenId(1), TokenId(0)]).unwrap();
        assert!((p - 0.36).abs() < 1e-15);
    }

    #[test]
    fn sequence_probability_edge_cases() {
        let d = vec![pv(&[0.5, 0.5])];
        assert!((sequence_probability(&d, &[TokenId(0)]).unwrap() - 0.5).abs() < 1e-15);
        let z = vec![pv(&[1.0, 0.0])];
        assert_eq!(sequence_probability(&z, &[TokenId(1)]).unwrap(), 0.0);
        assert!(sequence_probability(&z, &[TokenId(0), TokenId(0)]).is_err());
    }

    #[test]
    fn sequence_probability_sums_to_one_by_enumeration() {
        // all length-T sequences under fixed per-step distributions
        for (v, t) in [(2usize, 4usize), (4, 3), (8, 2)] {
            let step = pv(&(0..v).map(|i| (i + 1) as f64).map(|x| x / (v * (v + 1) / 2) as f64).collect::<Vec<_>>());
            let dists = vec![step; t];
            let mut total = 0.0;
            let count = v.pow(t as u32);
            for mut idx in 0..count {
                let mut toks = Vec::with_capacity(t);
                for _ in 0..t {
                    toks.push(TokenId((idx % v) as u32));
                    idx /= v;
                }
                total += sequence_probability(&dists, &toks).unwrap();
            }
            assert!((total - 1.0).abs() < 1e-9, "V={v} T={t}: {total}");
        }
    }

    #[test]
    fn vocabulary_invariants() {
        assert!(Vocabulary::new(3, None, TokenId(3), None).is_err());
        assert!(Vocabulary::new(3, None, TokenId(2), Some(TokenId(2))).is_err());
        assert!(Vocabulary::new(3, Some(vec!["a".into()]), TokenId(2), None).is_err());
        let v = Vocabulary::from_labels(vec!["yes".into(), "no".into()]).unwrap();
        assert_eq!(v.size(), 3);
        assert_eq!(v.eos(), TokenId(2));
        assert_eq!(v.label(TokenId(0)), Some("yes"));
    }
}
