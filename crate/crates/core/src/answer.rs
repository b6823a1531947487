//! Canonical answers, answer spaces, answer-level distributions, and the
//! decode function mapping token sequences to answers.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::vocab::{TokenId, Vocabulary};

/// A normalized answer: lowercase trimmed text, a finite number, a yes/no
/// boolean, or an explicit abstention.
#[derive(Debug, Clone)]
pub enum CanonicalAnswer {
    Text(String),
    Numeric(f64),
    Boolean(bool),
    Abstain,
}

impl CanonicalAnswer {
    /// The designated out-of-space sentinel: the empty text answer. Ground
    /// truth never assigns it mass, so decodes that fall outside the answer
    /// space always score as incorrect.
    pub fn sentinel() -> Self {
        CanonicalAnswer::Text(String::new())
    }

    pub fn numeric(v: f64) -> Self {
        // normalize -0.0 so equality and hashing agree
        CanonicalAnswer::Numeric(if v == 0.0 { 0.0 } else { v })
    }

    pub fn text(s: impl Into<String>) -> Self {
        CanonicalAnswer::Text(s.into())
    }

    /// Canonical string rendering; feeding it back through
    /// [`canonicalize_answer`] reproduces the same answer.
    pub fn render(&self) -> String {
        match self {
            CanonicalAnswer::Text(s) => s.clone(),
            CanonicalAnswer::Numeric(v) => format!("{v}"),
            CanonicalAnswer::Boolean(true) => "yes".to_string(),
            CanonicalAnswer::Boolean(false) => "no".to_string(),
            CanonicalAnswer::Abstain => "unanswerable".to_string(),
        }
    }

    fn rank(&self) -> u8 {
        match self {
            CanonicalAnswer::Text(_) => 0,
            CanonicalAnswer::Numeric(_) => 1,
            CanonicalAnswer::Boolean(_) => 2,
            CanonicalAnswer::Abstain => 3,
        }
    }
}

impl PartialEq for CanonicalAnswer {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for CanonicalAnswer {}

impl Ord for CanonicalAnswer {
    fn cmp(&self, other: &Self) -> Ordering {
        use CanonicalAnswer::*;
        match (self, other) {
            (Text(a), Text(b)) => a.cmp(b),
            (Numeric(a), Numeric(b)) => a.total_cmp(b),
            (Boolean(a), Boolean(b)) => a.cmp(b),
            (Abstain, Abstain) => Ordering::Equal,
            _ => self.rank().cmp(&other.rank()),
        }
    }
}

impl PartialOrd for CanonicalAnswer {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl std::hash::Hash for CanonicalAnswer {
    fn hash<H: std::hash::Hasher>(&self, state: &mut H) {
        self.rank().hash(state);
        match self {
            CanonicalAnswer::Text(s) => s.hash(state),
            CanonicalAnswer::Numeric(v) => v.to_bits().hash(state),
            CanonicalAnswer::Boolean(b) => b.hash(state),
            CanonicalAnswer::Abstain => {}
        }
    }
}

impl fmt::Display for CanonicalAnswer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render())
    }
}

impl Serialize for CanonicalAnswer {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.render())
    }
}

impl<'de> Deserialize<'de> for CanonicalAnswer {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        Ok(canonicalize_answer(&s))
    }
}

/// Normalizes a raw answer string. Total: every string maps to some answer.
///
/// Rules: lowercase, trim, strip terminal punctuation and one leading
/// English article, collapse inner whitespace; then classify as boolean
/// (yes/no), abstention ("unanswerable"), numeric (plain numbers, grouped
/// thousands separators, trailing percent sign), or text.
pub fn canonicalize_answer(raw: &str) -> CanonicalAnswer {
    let mut s = raw.trim().to_lowercase();
    while let Some(last) = s.chars().last() {
        if matches!(last, '.' | ',' | '!' | '?' | ';' | ':') {
            s.pop();
        } else {
            break;
        }
    }
    let mut s = s.split_whitespace().collect::<Vec<_>>().join(" ");
    'articles: loop {
        for article in ["a ", "an ", "the "] {
            if let Some(rest) = s.strip_prefix(article) {
                s = rest.to_string();
                continue 'articles;
            }
        }
        break;
    }

    match s.as_str() {
        "yes" => return CanonicalAnswer::Boolean(true),
        "no" => return CanonicalAnswer::Boolean(false),
        "unanswerable" => return CanonicalAnswer::Abstain,
        _ => {}
    }
    if let Some(v) = parse_numeric(&s) {
        return CanonicalAnswer::numeric(v);
    }
    CanonicalAnswer::Text(s)
}

/// Parses numbers, accepting grouped thousands separators ("26,000") and a
/// trailing percent sign ("26%" reads as 26).
fn parse_numeric(s: &str) -> Option<f64> {
    let s = s.strip_suffix('%').map(str::trim_end).unwrap_or(s);
    if s.is_empty() || !s.bytes().any(|b| b.is_ascii_digit()) {
        return None;
    }
    if !s
        .bytes()
        .all(|b| b.is_ascii_digit() || matches!(b, b'+' | b'-' | b'.' | b',' | b'e' | b'E'))
    {
        return None;
    }
    let cleaned = if s.contains(',') {
        strip_thousands_separators(s)?
    } else {
        s.to_string()
    };
    match cleaned.parse::<f64>() {
        Ok(v) if v.is_finite() => Some(v),
        _ => None,
    }
}

/// Removes commas only when they form valid digit grouping: a leading group
/// of 1-3 digits followed by groups of exactly 3.
fn strip_thousands_separators(s: &str) -> Option<String> {
    let (sign, rest) = match s.as_bytes().first() {
        Some(b'+') | Some(b'-') => (&s[..1], &s[1..]),
        _ => ("", s),
    };
    let (int_part, frac_part) = match rest.split_once('.') {
        Some((i, f)) => (i, Some(f)),
        None => (rest, None),
    };
    let groups: Vec<&str> = int_part.split(',').collect();
    if groups.len() < 2 {
        return None;
    }
    if groups[0].is_empty() || groups[0].len() > 3 || !groups[0].bytes().all(|b| b.is_ascii_digit())
    {
        return None;
    }
    for g in &groups[1..] {
        if g.len() != 3 || !g.bytes().all(|b| b.is_ascii_digit()) {
            return None;
        }
    }
    if let Some(f) = frac_part {
        if f.contains(',') {
            return None;
        }
        Some(format!("{sign}{}.{f}", groups.concat()))
    } else {
        Some(format!("{sign}{}", groups.concat()))
    }
}

/// Soft match: text, boolean, and abstain compare by canonical equality;
/// numerics match when `|a - b| <= rel_tol * max(1, |b|)`.
pub fn answers_match(a: &CanonicalAnswer, b: &CanonicalAnswer, rel_tol: f64) -> bool {
    match (a, b) {
        (CanonicalAnswer::Numeric(x), CanonicalAnswer::Numeric(y)) => {
            (x - y).abs() <= rel_tol * y.abs().max(1.0)
        }
        _ => a == b,
    }
}

/// An ordered, duplicate-free, non-empty set of canonical answers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<CanonicalAnswer>", into = "Vec<CanonicalAnswer>")]
pub struct AnswerSpace {
    answers: Vec<CanonicalAnswer>,
}

impl AnswerSpace {
    pub fn new(answers: Vec<CanonicalAnswer>) -> Result<Self> {
        if answers.is_empty() {
            return Err(Error::InvalidInput("answer space must be non-empty".into()));
        }
        for (i, a) in answers.iter().enumerate() {
            if answers[..i].contains(a) {
                return Err(Error::InvalidInput(format!(
                    "duplicate answer {:?} in answer space",
                    a.render()
                )));
            }
        }
        Ok(Self { answers })
    }

    /// Builds a space by canonicalizing raw strings.
    pub fn from_raw<S: AsRef<str>>(raw: &[S]) -> Result<Self> {
        Self::new(raw.iter().map(|s| canonicalize_answer(s.as_ref())).collect())
    }

    pub fn len(&self) -> usize {
        self.answers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.answers.is_empty()
    }

    pub fn contains(&self, a: &CanonicalAnswer) -> bool {
        self.answers.contains(a)
    }

    pub fn answers(&self) -> &[CanonicalAnswer] {
        &self.answers
    }

    pub fn iter(&self) -> impl Iterator<Item = &CanonicalAnswer> {
        self.answers.iter()
    }
}

impl TryFrom<Vec<CanonicalAnswer>> for AnswerSpace {
    type Error = Error;
    fn try_from(v: Vec<CanonicalAnswer>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<AnswerSpace> for Vec<CanonicalAnswer> {
    fn from(s: AnswerSpace) -> Self {
        s.answers
    }
}

/// A probability distribution over canonical answers. Iteration order is
/// the answers' total order, so reductions over it are deterministic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BTreeMap<CanonicalAnswer, f64>", into = "BTreeMap<CanonicalAnswer, f64>")]
pub struct AnswerDist {
    entries: BTreeMap<CanonicalAnswer, f64>,
}

impl AnswerDist {
    pub fn new(entries: BTreeMap<CanonicalAnswer, f64>) -> Result<Self> {
        let mut sum = 0.0;
        for (a, &p) in &entries {
            if !p.is_finite() || p < 0.0 {
                return Err(Error::InvalidInput(format!(
                    "probability for {:?} is {p}, expected finite and >= 0",
                    a.render()
                )));
            }
            sum += p;
        }
        if (sum - 1.0).abs() <= 1e-9 {
            Ok(Self { entries })
        } else if (sum - 1.0).abs() <= 1e-6 {
            let entries = entries.into_iter().map(|(a, p)| (a, p / sum)).collect();
            Ok(Self { entries })
        } else {
            Err(Error::InvalidInput(format!(
                "answer probabilities sum to {sum}, expected 1 within 1e-6"
            )))
        }
    }

    /// Validates that every key lies in `space` (the sentinel is always
    /// admitted, since posteriors may place mass on out-of-space decodes).
    pub fn over_space(entries: BTreeMap<CanonicalAnswer, f64>, space: &AnswerSpace) -> Result<Self> {
        let sentinel = CanonicalAnswer::sentinel();
        for a in entries.keys() {
            if *a != sentinel && !space.contains(a) {
                return Err(Error::InvalidInput(format!(
                    "answer {:?} not in the answer space",
                    a.render()
                )));
            }
        }
        Self::new(entries)
    }

    /// Point mass on one answer.
    pub fn point_mass(a: CanonicalAnswer) -> Self {
        let mut entries = BTreeMap::new();
        entries.insert(a, 1.0);
        Self { entries }
    }

    /// Probability of `a`; zero when absent.
    pub fn get(&self, a: &CanonicalAnswer) -> f64 {
        self.entries.get(a).copied().unwrap_or(0.0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&CanonicalAnswer, f64)> {
        self.entries.iter().map(|(a, &p)| (a, p))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Highest-probability answer; ties break toward the smaller answer in
    /// canonical order. Distributions are non-empty by construction.
    pub fn argmax(&self) -> &CanonicalAnswer {
        let mut best: Option<(&CanonicalAnswer, f64)> = None;
        for (a, p) in self.iter() {
            match best {
                Some((_, bp)) if p <= bp => {}
                _ => best = Some((a, p)),
            }
        }
        best.expect("answer distribution is non-empty").0
    }
}

impl TryFrom<BTreeMap<CanonicalAnswer, f64>> for AnswerDist {
    type Error = Error;
    fn try_from(m: BTreeMap<CanonicalAnswer, f64>) -> Result<Self> {
        Self::new(m)
    }
}

impl From<AnswerDist> for BTreeMap<CanonicalAnswer, f64> {
    fn from(d: AnswerDist) -> Self {
        d.entries
    }
}

/// Decodes a token sequence into a canonical answer: concatenate labels up
/// to (excluding) the first eos, canonicalize, and map into the answer
/// space. Tokens up to and including a think-end delimiter are skipped.
/// Out-of-space answers map to the sentinel.
pub fn decode_answer(
    tokens: &[TokenId],
    vocab: &Vocabulary,
    space: &AnswerSpace,
) -> Result<CanonicalAnswer> {
    let labels = vocab
        .labels()
        .ok_or_else(|| Error::Configuration("decoding requires a labeled vocabulary".into()))?;
    let start = match vocab.think_end() {
        Some(te) => tokens.iter().position(|&t| t == te).map_or(0, |i| i + 1),
        None => 0,
    };
    let mut text = String::new();
    for &tok in &tokens[start..] {
        if tok == vocab.eos() {
            break;
        }
        text.push_str(&labels[tok.index()]);
    }
    let answer = canonicalize_answer(&text);
    if space.contains(&answer) {
        Ok(answer)
    } else {
        Ok(CanonicalAnswer::sentinel())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonicalize_strips_articles_case_and_punctuation() {
        assert_eq!(
            canonicalize_answer("The Light Blue "),
            CanonicalAnswer::text("light blue")
        );
        assert_eq!(canonicalize_answer("Yes."), CanonicalAnswer::Boolean(true));
        assert_eq!(canonicalize_answer("No!"), CanonicalAnswer::Boolean(false));
        assert_eq!(canonicalize_answer("Unanswerable"), CanonicalAnswer::Abstain);
        assert_eq!(canonicalize_answer("  a  dog  "), CanonicalAnswer::text("dog"));
    }

    #[test]
    fn canonicalize_parses_numbers() {
        assert_eq!(canonicalize_answer("26,000"), CanonicalAnswer::numeric(26000.0));
        assert_eq!(canonicalize_answer("2.6"), CanonicalAnswer::numeric(2.6));
        assert_eq!(canonicalize_answer("26%"), CanonicalAnswer::numeric(26.0));
        assert_eq!(canonicalize_answer("-3"), CanonicalAnswer::numeric(-3.0));
        // bad grouping stays text
        assert_eq!(canonicalize_answer("2,6"), CanonicalAnswer::text("2,6"));
        assert_eq!(canonicalize_answer("inf"), CanonicalAnswer::text("inf"));
        assert_eq!(canonicalize_answer("nan"), CanonicalAnswer::text("nan"));
    }

    #[test]
    fn soft_match_relative_tolerance() {
        let t = 0.05;
        assert!(!answers_match(
            &CanonicalAnswer::numeric(2.6),
            &CanonicalAnswer::numeric(26000.0),
            t
        ));
        assert!(answers_match(
            &CanonicalAnswer::numeric(100.0),
            &CanonicalAnswer::numeric(104.0),
            t
        ));
        assert!(answers_match(
            &CanonicalAnswer::text("yes"),
            &CanonicalAnswer::text("yes"),
            t
        ));
        assert!(!answers_match(
            &CanonicalAnswer::text("26000"),
            &CanonicalAnswer::numeric(26000.0),
            t
        ));
    }

    fn toy_space() -> AnswerSpace {
        AnswerSpace::from_raw(&["83", "light blue", "yes"]).unwrap()
    }

    fn digit_vocab() -> Vocabulary {
        Vocabulary::from_labels(vec!["8".into(), "3".into()]).unwrap()
    }

    #[test]
    fn decode_concatenates_and_maps_into_space() {
        let vocab = digit_vocab();
        let space = toy_space();
        let a = decode_answer(&[TokenId(0), TokenId(1), TokenId(2)], &vocab, &space).unwrap();
        assert_eq!(a, CanonicalAnswer::numeric(83.0));
    }

    #[test]
    fn decode_empty_and_out_of_space_hit_sentinel() {
        let vocab = digit_vocab();
        let space = toy_space();
        let empty = decode_answer(&[TokenId(2)], &vocab, &space).unwrap();
        assert_eq!(empty, CanonicalAnswer::sentinel());
        // "8" alone is not in the space
        let out = decode_answer(&[TokenId(0), TokenId(2)], &vocab, &space).unwrap();
        assert_eq!(out, CanonicalAnswer::sentinel());
    }

    #[test]
    fn decode_multi_token_text() {
        let vocab = Vocabulary::from_labels(vec!["light".into(), " blue".into()]).unwrap();
        let a = decode_answer(&[TokenId(0), TokenId(1), TokenId(2)], &vocab, &toy_space()).unwrap();
        assert_eq!(a, canonicalize_answer("light blue"));
    }

    #[test]
    fn decode_requires_labels() {
        let vocab = Vocabulary::new(3, None, TokenId(2), None).unwrap();
        assert!(decode_answer(&[TokenId(2)], &vocab, &toy_space()).is_err());
    }

    #[test]
    fn answer_dist_validation_and_argmax() {
        let mut m = BTreeMap::new();
        m.insert(CanonicalAnswer::text("x"), 0.4);
        m.insert(CanonicalAnswer::text("y"), 0.6);
        let d = AnswerDist::new(m).unwrap();
        assert_eq!(d.argmax(), &CanonicalAnswer::text("y"));
        assert_eq!(d.get(&CanonicalAnswer::text("z")), 0.0);

        let mut bad = BTreeMap::new();
        bad.insert(CanonicalAnswer::text("x"), 0.7);
        bad.insert(CanonicalAnswer::text("y"), 0.7);
        assert!(AnswerDist::new(bad).is_err());
    }

    #[test]
    fn answer_space_rejects_duplicates() {
        assert!(AnswerSpace::from_raw(&["Yes", "yes."]).is_err());
        assert!(AnswerSpace::new(vec![]).is_err());
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn canonicalize_is_idempotent(raw in ".{0,40}") {
                let once = canonicalize_answer(&raw);
                let twice = canonicalize_answer(&once.render());
                prop_assert_eq!(once, twice);
            }

            #[test]
            fn numeric_render_round_trips(v in -1e12f64..1e12) {
                let a = CanonicalAnswer::numeric(v);
                prop_assert_eq!(canonicalize_answer(&a.render()), a);
            }
        }
    }
}
