//! Synthetic benchmark worlds with a known ground-truth answer posterior
//! and controllable model miscalibration.
//!
//! Worlds are the unit of evaluation: each instance pairs a ground truth
//! `p_true` over a small answer space with a tabular model whose answer
//! posterior is a distorted copy of it. Presets reproduce the head-heavy
//! statistics typical of VQA-style benchmarks (a few high-frequency
//! answers — booleans, numbers, colors — absorbing most of the mass).

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::answer::{AnswerDist, AnswerSpace, CanonicalAnswer};
use crate::error::{Error, Result};
use crate::model::{InstanceRef, TabularModel};
use crate::vocab::{ProbVector, TokenId, Vocabulary};

/// Knobs that distort a ground-truth posterior into the model's posterior:
/// uniform mixing, sharpening/flattening, and argmax flips.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MiscalSpec {
    /// Weight of the uniform component, in [0, 1].
    pub lambda: f64,
    /// Temperature distortion: probabilities are raised to 1/gamma and
    /// renormalized before mixing. 1 is the identity.
    pub gamma: f64,
    /// Probability of swapping the two largest masses, in [0, 1].
    pub argmax_flip_rate: f64,
}

impl MiscalSpec {
    /// The identity distortion.
    pub fn identity() -> Self {
        Self {
            lambda: 0.0,
            gamma: 1.0,
            argmax_flip_rate: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::InvalidSpec(format!("lambda {} not in [0,1]", self.lambda)));
        }
        if self.gamma <= 0.0 || !self.gamma.is_finite() {
            return Err(Error::InvalidSpec(format!("gamma {} not positive", self.gamma)));
        }
        if !(0.0..=1.0).contains(&self.argmax_flip_rate) {
            return Err(Error::InvalidSpec(format!(
                "argmax_flip_rate {} not in [0,1]",
                self.argmax_flip_rate
            )));
        }
        Ok(())
    }
}

/// Which answer pool instances draw from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnswerPool {
    /// Booleans, numbers, colors, objects, and two-word phrases.
    Standard,
    /// Fixed multiple-choice letters a/b/c/d.
    McqLetters,
}

/// Parameters of a generated world.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorldSpec {
    pub num_instances: usize,
    /// Answers per instance, in [2, 12].
    pub answer_set_size: usize,
    /// Zipf-like exponent shaping each instance's ground truth; 0 is uniform.
    pub head_heaviness: f64,
    /// Expected ground-truth mass on single-token answers.
    pub single_token_fraction: f64,
    /// Expected ground-truth mass on boolean answers.
    pub boolean_fraction: f64,
    /// Expected ground-truth mass on numeric answers.
    pub numeric_fraction: f64,
    /// Mass on "yes" within boolean instances (drives the always-yes
    /// baseline accuracy).
    pub yes_share: f64,
    pub miscal: MiscalSpec,
    /// Expand multi-token answers into 2-3 token spellings (T > 1 worlds).
    pub token_level: bool,
    pub pool: AnswerPool,
}

impl WorldSpec {
    pub fn validate(&self) -> Result<()> {
        if self.num_instances == 0 {
            return Err(Error::InvalidSpec("num_instances must be >= 1".into()));
        }
        if !(2..=12).contains(&self.answer_set_size) {
            return Err(Error::InvalidSpec(format!(
                "answer_set_size {} not in [2, 12]",
                self.answer_set_size
            )));
        }
        if self.head_heaviness < 0.0 || !self.head_heaviness.is_finite() {
            return Err(Error::InvalidSpec("head_heaviness must be >= 0".into()));
        }
        for (name, v) in [
            ("single_token_fraction", self.single_token_fraction),
            ("boolean_fraction", self.boolean_fraction),
            ("numeric_fraction", self.numeric_fraction),
            ("yes_share", self.yes_share),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidSpec(format!("{name} {v} not in [0,1]")));
            }
        }
        if self.boolean_fraction > self.single_token_fraction {
            return Err(Error::InvalidSpec(
                "boolean_fraction exceeds single_token_fraction".into(),
            ));
        }
        if self.boolean_fraction + self.numeric_fraction > 1.0 {
            return Err(Error::InvalidSpec(
                "boolean_fraction + numeric_fraction exceeds 1".into(),
            ));
        }
        self.miscal.validate()
    }
}

/// One evaluation unit: an answer space, its ground-truth posterior, and a
/// tabular model whose full-sampling answer posterior is the miscalibrated
/// copy of the ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub id: InstanceRef,
    pub space: AnswerSpace,
    pub p_true: AnswerDist,
    pub model: TabularModel,
}

/// A generated (or loaded) collection of instances.
#[derive(Debug, Clone, PartialEq)]
pub struct World {
    pub spec: WorldSpec,
    pub seed: u64,
    pub instances: Vec<Instance>,
}

const FORMAT_VERSION: &str = "1";

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WorldFile {
    version: String,
    seed: u64,
    spec: WorldSpec,
    instances: Vec<InstanceFile>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct InstanceFile {
    id: InstanceRef,
    answers: Vec<String>,
    p_true: Vec<f64>,
    model: TabularModel,
}

impl World {
    /// Serializes to the world file format (version "1").
    pub fn to_json(&self) -> Result<String> {
        let file = WorldFile {
            version: FORMAT_VERSION.to_string(),
            seed: self.seed,
            spec: self.spec.clone(),
            instances: self
                .instances
                .iter()
                .map(|inst| InstanceFile {
                    id: inst.id.clone(),
                    answers: inst.space.answers().iter().map(|a| a.render()).collect(),
                    p_true: inst
                        .space
                        .answers()
                        .iter()
                        .map(|a| inst.p_true.get(a))
                        .collect(),
                    model: inst.model.clone(),
                })
                .collect(),
        };
        serde_json::to_string_pretty(&file).map_err(|e| Error::json("serializing world", e))
    }

    pub fn from_json(json: &str) -> Result<Self> {
        let file: WorldFile =
            serde_json::from_str(json).map_err(|e| Error::json("parsing world file", e))?;
        if file.version != FORMAT_VERSION {
            return Err(Error::InvalidSpec(format!(
                "unsupported world format version {:?}",
                file.version
            )));
        }
        let mut instances = Vec::with_capacity(file.instances.len());
        let mut seen = std::collections::BTreeSet::new();
        for rec in file.instances {
            if !seen.insert(rec.id.clone()) {
                return Err(Error::InvalidSpec(format!(
                    "duplicate instance id {:?}",
                    rec.id.id()
                )));
            }
            if rec.answers.len() != rec.p_true.len() {
                return Err(Error::InvalidSpec(format!(
                    "instance {:?}: {} answers but {} probabilities",
                    rec.id.id(),
                    rec.answers.len(),
                    rec.p_true.len()
                )));
            }
            let space = AnswerSpace::from_raw(&rec.answers)?;
            let mut entries = BTreeMap::new();
            for (a, &p) in space.answers().iter().zip(&rec.p_true) {
                entries.insert(a.clone(), p);
            }
            let p_true = AnswerDist::over_space(entries, &space)?;
            instances.push(Instance {
                id: rec.id,
                space,
                p_true,
                model: rec.model,
            });
        }
        if instances.is_empty() {
            return Err(Error::InvalidSpec("world has no instances".into()));
        }
        Ok(World {
            spec: file.spec,
            seed: file.seed,
            instances,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = self.to_json()?;
        fs::write(path, json).map_err(|e| Error::io(path.display().to_string(), e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let json =
            fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        Self::from_json(&json)
    }
}

/// Token spelling an answer would use in a token-level world: one token per
/// word for text, digit groups of up to three for large numbers. Answers
/// with a single-token spelling are the "single-token" population in world
/// statistics.
pub fn answer_token_spelling(a: &CanonicalAnswer) -> Vec<String> {
    match a {
        CanonicalAnswer::Boolean(_) | CanonicalAnswer::Abstain => vec![a.render()],
        CanonicalAnswer::Text(s) => {
            let words: Vec<&str> = s.split(' ').collect();
            words
                .iter()
                .enumerate()
                .map(|(i, w)| if i == 0 { (*w).to_string() } else { format!(" {w}") })
                .collect()
        }
        CanonicalAnswer::Numeric(v) => {
            if v.fract() == 0.0 && (0.0..100.0).contains(v) {
                return vec![a.render()];
            }
            // chunk the rendering from the right in groups of three
            let rendered = a.render();
            let bytes = rendered.as_bytes();
            let mut cuts = vec![bytes.len()];
            let mut pos = bytes.len();
            while pos > 3 {
                pos -= 3;
                cuts.push(pos);
            }
            cuts.push(0);
            cuts.reverse();
            cuts.windows(2)
                .map(|w| rendered[w[0]..w[1]].to_string())
                .collect()
        }
    }
}

pub fn is_single_token(a: &CanonicalAnswer) -> bool {
    answer_token_spelling(a).len() == 1
}

/// Mean ground-truth mass on single-token answers.
pub fn measured_single_token_fraction(world: &World) -> f64 {
    mean_mass(world, is_single_token)
}

/// Mean ground-truth mass on boolean answers.
pub fn measured_boolean_fraction(world: &World) -> f64 {
    mean_mass(world, |a| matches!(a, CanonicalAnswer::Boolean(_)))
}

/// Mean ground-truth mass on numeric answers.
pub fn measured_numeric_fraction(world: &World) -> f64 {
    mean_mass(world, |a| matches!(a, CanonicalAnswer::Numeric(_)))
}

fn mean_mass(world: &World, keep: impl Fn(&CanonicalAnswer) -> bool) -> f64 {
    let total: f64 = world
        .instances
        .iter()
        .map(|inst| {
            inst.p_true
                .iter()
                .filter(|(a, _)| keep(a))
                .map(|(_, p)| p)
                .sum::<f64>()
        })
        .sum();
    total / world.instances.len() as f64
}

/// Expected accuracy of always answering `answer`: the mean ground-truth
/// probability it carries.
pub fn constant_answer_accuracy(world: &World, answer: &CanonicalAnswer) -> f64 {
    let total: f64 = world.instances.iter().map(|i| i.p_true.get(answer)).sum();
    total / world.instances.len() as f64
}

/// Applies the miscalibration knobs:
/// `q = (1 - lambda) * normalize(p^(1/gamma)) + lambda * uniform`, then with
/// probability `argmax_flip_rate` the two largest masses swap. The uniform
/// component spreads over the distribution's full key set, so any lambda > 0
/// gives q full support.
pub fn miscalibrate<R: Rng + ?Sized>(
    p_true: &AnswerDist,
    miscal: &MiscalSpec,
    rng: &mut R,
) -> Result<AnswerDist> {
    miscal.validate()?;
    let n = p_true.len() as f64;
    let exponent = 1.0 / miscal.gamma;
    let powered: Vec<(CanonicalAnswer, f64)> = p_true
        .iter()
        .map(|(a, p)| (a.clone(), if p > 0.0 { p.powf(exponent) } else { 0.0 }))
        .collect();
    let z: f64 = powered.iter().map(|(_, w)| w).sum();
    let mut entries: BTreeMap<CanonicalAnswer, f64> = powered
        .into_iter()
        .map(|(a, w)| (a, (1.0 - miscal.lambda) * w / z + miscal.lambda / n))
        .collect();

    if miscal.argmax_flip_rate > 0.0 && entries.len() >= 2 {
        let flip = rng.random::<f64>() < miscal.argmax_flip_rate;
        if flip {
            let mut ranked: Vec<(CanonicalAnswer, f64)> =
                entries.iter().map(|(a, &p)| (a.clone(), p)).collect();
            ranked.sort_by(|x, y| y.1.partial_cmp(&x.1).unwrap().then_with(|| x.0.cmp(&y.0)));
            let (top, second) = (ranked[0].clone(), ranked[1].clone());
            entries.insert(top.0, second.1);
            entries.insert(second.0, top.1);
        }
    }
    AnswerDist::new(entries)
}

fn preset(name: &str) -> Option<WorldSpec> {
    let spec = match name {
        // Head-heavy VQA-like statistics: 89% single-token ground truth,
        // 38% boolean, and an always-yes baseline near 29.7%.
        "vqa-headheavy" => WorldSpec {
            num_instances: 10_000,
            answer_set_size: 8,
            head_heaviness: 2.0,
            single_token_fraction: 0.89,
            boolean_fraction: 0.38,
            numeric_fraction: 0.20,
            yes_share: 0.297 / 0.38,
            miscal: MiscalSpec {
                lambda: 0.02,
                gamma: 1.0,
                argmax_flip_rate: 0.0,
            },
            token_level: false,
            pool: AnswerPool::Standard,
        },
        // Four equiprobable multiple-choice options.
        "mcq4" => WorldSpec {
            num_instances: 1_000,
            answer_set_size: 4,
            head_heaviness: 0.0,
            single_token_fraction: 1.0,
            boolean_fraction: 0.0,
            numeric_fraction: 0.0,
            yes_share: 0.0,
            miscal: MiscalSpec {
                lambda: 0.05,
                gamma: 1.0,
                argmax_flip_rate: 0.0,
            },
            token_level: false,
            pool: AnswerPool::McqLetters,
        },
        // Chart-reading answer profile: 75.16% numeric ground truth.
        "chartqa-like" => WorldSpec {
            num_instances: 10_000,
            answer_set_size: 8,
            head_heaviness: 1.5,
            single_token_fraction: 0.45,
            boolean_fraction: 0.0292,
            numeric_fraction: 0.7516,
            yes_share: 0.5,
            miscal: MiscalSpec {
                lambda: 0.05,
                gamma: 1.0,
                argmax_flip_rate: 0.0,
            },
            token_level: false,
            pool: AnswerPool::Standard,
        },
        // Flat ground truth: the stress case where truncation matters most.
        "uniform-tail" => WorldSpec {
            num_instances: 1_000,
            answer_set_size: 8,
            head_heaviness: 0.0,
            single_token_fraction: 0.5,
            boolean_fraction: 0.1,
            numeric_fraction: 0.2,
            yes_share: 0.5,
            miscal: MiscalSpec {
                lambda: 0.1,
                gamma: 1.0,
                argmax_flip_rate: 0.0,
            },
            token_level: false,
            pool: AnswerPool::Standard,
        },
        _ => return None,
    };
    Some(spec)
}

/// Returns the documented fixed spec for a named preset.
pub fn world_presets(name: &str) -> Result<WorldSpec> {
    preset(name).ok_or_else(|| Error::UnknownPreset(name.to_string()))
}

pub const PRESET_NAMES: [&str; 4] = ["vqa-headheavy", "mcq4", "chartqa-like", "uniform-tail"];

const SINGLE_WORDS: [&str; 20] = [
    "red", "blue", "green", "gray", "black", "white", "brown", "pink", "orange", "purple", "dog",
    "cat", "bird", "car", "tree", "left", "right", "man", "woman", "table",
];

const MULTI_PHRASES: [&str; 12] = [
    "light blue",
    "dark green",
    "fire hydrant",
    "stop sign",
    "tennis racket",
    "hot dog",
    "traffic light",
    "parking meter",
    "baseball bat",
    "dining table",
    "wine glass",
    "potted plant",
];

#[derive(Clone, Copy, PartialEq)]
enum InstanceKind {
    Boolean,
    Numeric { single: bool },
    Text { single: bool },
}

/// Generates a world deterministically from `(spec, seed)`.
pub fn generate_world(spec: &WorldSpec, seed: u64) -> Result<World> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut instances = Vec::with_capacity(spec.num_instances);
    for i in 0..spec.num_instances {
        let id = InstanceRef::new(format!("inst-{i:05}"));
        instances.push(generate_instance(spec, id, &mut rng)?);
    }
    Ok(World {
        spec: spec.clone(),
        seed,
        instances,
    })
}

fn generate_instance<R: Rng + ?Sized>(
    spec: &WorldSpec,
    id: InstanceRef,
    rng: &mut R,
) -> Result<Instance> {
    let kind = draw_kind(spec, rng);
    let (answers, weights) = match spec.pool {
        AnswerPool::McqLetters => mcq_answers(spec, rng),
        AnswerPool::Standard => standard_answers(spec, kind, rng),
    };

    let space = AnswerSpace::new(answers)?;
    let mut entries = BTreeMap::new();
    for (a, w) in space.answers().iter().zip(&weights) {
        entries.insert(a.clone(), *w);
    }
    let p_true = AnswerDist::over_space(entries, &space)?;
    let q = miscalibrate(&p_true, &spec.miscal, rng)?;
    let model = if spec.token_level {
        token_level_model(&space, &q)?
    } else {
        answer_level_model(&space, &q)?
    };
    Ok(Instance {
        id,
        space,
        p_true,
        model,
    })
}

fn draw_kind<R: Rng + ?Sized>(spec: &WorldSpec, rng: &mut R) -> InstanceKind {
    let u: f64 = rng.random();
    if u < spec.boolean_fraction {
        return InstanceKind::Boolean;
    }
    // share of single-token instances among the non-boolean ones
    let rest = 1.0 - spec.boolean_fraction;
    let single_share = if rest > 0.0 {
        ((spec.single_token_fraction - spec.boolean_fraction) / rest).clamp(0.0, 1.0)
    } else {
        1.0
    };
    let single = rng.random::<f64>() < single_share;
    if u < spec.boolean_fraction + spec.numeric_fraction {
        InstanceKind::Numeric { single }
    } else {
        InstanceKind::Text { single }
    }
}

fn mcq_answers<R: Rng + ?Sized>(
    spec: &WorldSpec,
    rng: &mut R,
) -> (Vec<CanonicalAnswer>, Vec<f64>) {
    let letters = ["a", "b", "c", "d", "e", "f", "g", "h", "i", "j", "k", "l"];
    let answers: Vec<CanonicalAnswer> = letters[..spec.answer_set_size]
        .iter()
        .map(|s| CanonicalAnswer::text(*s))
        .collect();
    let weights = zipf_weights(spec.answer_set_size, spec.head_heaviness);
    // random head position, uniform over permutations of the weights
    let weights = shuffled(weights, rng);
    (answers, weights)
}

fn standard_answers<R: Rng + ?Sized>(
    spec: &WorldSpec,
    kind: InstanceKind,
    rng: &mut R,
) -> (Vec<CanonicalAnswer>, Vec<f64>) {
    let size = spec.answer_set_size;
    match kind {
        InstanceKind::Boolean => {
            // yes/no carry all ground-truth mass; the rest are distractors
            let mut answers = vec![CanonicalAnswer::Boolean(true), CanonicalAnswer::Boolean(false)];
            for w in sample_distinct(&SINGLE_WORDS, size - 2, rng) {
                answers.push(CanonicalAnswer::text(w));
            }
            let jitter = rng.random_range(-0.08..0.08);
            let yes = (spec.yes_share + jitter).clamp(0.02, 0.98);
            let mut weights = vec![yes, 1.0 - yes];
            weights.resize(size, 0.0);
            (answers, weights)
        }
        InstanceKind::Numeric { single } => {
            let values = if single {
                sample_distinct_ints(0, 99, size, rng)
            } else {
                // four digits and up spell as multiple tokens
                sample_distinct_ints(1_000, 99_999, size, rng)
            };
            let answers = values
                .into_iter()
                .map(|v| CanonicalAnswer::numeric(v as f64))
                .collect();
            let weights = shuffled(zipf_weights(size, spec.head_heaviness), rng);
            (answers, weights)
        }
        InstanceKind::Text { single } => {
            let pool: &[&str] = if single { &SINGLE_WORDS } else { &MULTI_PHRASES };
            let answers = sample_distinct(pool, size, rng)
                .into_iter()
                .map(CanonicalAnswer::text)
                .collect();
            let weights = shuffled(zipf_weights(size, spec.head_heaviness), rng);
            (answers, weights)
        }
    }
}

/// Normalized weights proportional to `(r+1)^(-s)`.
fn zipf_weights(n: usize, s: f64) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|r| ((r + 1) as f64).powf(-s)).collect();
    let z: f64 = raw.iter().sum();
    raw.into_iter().map(|w| w / z).collect()
}

fn shuffled<R: Rng + ?Sized>(mut xs: Vec<f64>, rng: &mut R) -> Vec<f64> {
    // Fisher-Yates
    for i in (1..xs.len()).rev() {
        let j = rng.random_range(0..=i);
        xs.swap(i, j);
    }
    xs
}

fn sample_distinct<'a, R: Rng + ?Sized>(pool: &[&'a str], n: usize, rng: &mut R) -> Vec<&'a str> {
    assert!(n <= pool.len(), "answer pool exhausted");
    let mut picked: Vec<usize> = Vec::with_capacity(n);
    while picked.len() < n {
        let idx = rng.random_range(0..pool.len());
        if !picked.contains(&idx) {
            picked.push(idx);
        }
    }
    picked.into_iter().map(|i| pool[i]).collect()
}

fn sample_distinct_ints<R: Rng + ?Sized>(lo: u64, hi: u64, n: usize, rng: &mut R) -> Vec<u64> {
    let mut picked: Vec<u64> = Vec::with_capacity(n);
    while picked.len() < n {
        let v = rng.random_range(lo..=hi);
        if !picked.contains(&v) {
            picked.push(v);
        }
    }
    picked
}

/// Answer-level model: one token per answer followed by a forced eos, so the
/// full-sampling answer posterior equals `q` exactly.
pub fn answer_level_model(space: &AnswerSpace, q: &AnswerDist) -> Result<TabularModel> {
    let labels: Vec<String> = space.answers().iter().map(|a| a.render()).collect();
    let vocab = Vocabulary::from_labels(labels)?;
    let v = vocab.size();
    let mut model = TabularModel::new(vocab, 2);
    let mut root = vec![0.0; v];
    for (j, a) in space.answers().iter().enumerate() {
        root[j] = q.get(a);
    }
    model.insert_row(Vec::new(), ProbVector::new(root.clone())?)?;
    for (j, &mass) in root.iter().enumerate().take(v - 1) {
        if mass > 0.0 {
            let mut eos_row = vec![0.0; v];
            eos_row[v - 1] = 1.0;
            model.insert_row(vec![TokenId(j as u32)], ProbVector::new(eos_row)?)?;
        }
    }
    Ok(model)
}

/// Token-level model: each answer expands into its token spelling; rows form
/// a trie whose edge masses are subtree sums of `q`. The full-sampling
/// answer posterior again equals `q` exactly.
pub fn token_level_model(space: &AnswerSpace, q: &AnswerDist) -> Result<TabularModel> {
    let spellings: Vec<Vec<String>> = space
        .answers()
        .iter()
        .map(answer_token_spelling)
        .collect();
    let mut label_set: Vec<String> = spellings.iter().flatten().cloned().collect();
    label_set.sort();
    label_set.dedup();
    let label_id = |label: &str| -> TokenId {
        TokenId(label_set.binary_search_by(|l| l.as_str().cmp(label)).unwrap() as u32)
    };
    let paths: Vec<Vec<TokenId>> = spellings
        .iter()
        .map(|sp| sp.iter().map(|l| label_id(l)).collect())
        .collect();
    let vocab = Vocabulary::from_labels(label_set.clone())?;
    let eos = vocab.eos();
    let max_len = paths.iter().map(|p| p.len()).max().unwrap_or(0) + 1;

    // weight of each trie edge and each end-of-answer position
    let mut nodes: BTreeMap<Vec<TokenId>, BTreeMap<TokenId, f64>> = BTreeMap::new();
    for (path, a) in paths.iter().zip(space.answers()) {
        let mass = q.get(a);
        if mass <= 0.0 {
            continue;
        }
        for depth in 0..path.len() {
            *nodes
                .entry(path[..depth].to_vec())
                .or_default()
                .entry(path[depth])
                .or_insert(0.0) += mass;
        }
        *nodes.entry(path.clone()).or_default().entry(eos).or_insert(0.0) += mass;
    }

    let mut model = TabularModel::new(vocab.clone(), max_len);
    for (prefix, edges) in nodes {
        let total: f64 = edges.values().sum();
        let mut row = vec![0.0; vocab.size()];
        for (tok, mass) in edges {
            row[tok.index()] = mass / total;
        }
        model.insert_row(prefix, ProbVector::new(row)?)?;
    }
    Ok(model)
}

/// Parameters for two-phase reasoning worlds: each instance draws a trace
/// distribution, emits a think-end delimiter, and then an answer
/// distribution conditioned on the trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReasoningWorldSpec {
    pub num_instances: usize,
    /// Answers per instance, in [2, 12].
    pub answer_set_size: usize,
    /// Reasoning traces per instance, in [1, 8].
    pub num_traces: usize,
    /// Probability the post-trace answer distribution puts on the modal
    /// ground-truth answer, in (1/answer_set_size, 1].
    pub post_confidence: f64,
    /// Zipf-like exponent of the ground truth.
    pub head_heaviness: f64,
}

impl ReasoningWorldSpec {
    fn validate(&self) -> Result<()> {
        if self.num_instances == 0 {
            return Err(Error::InvalidSpec("num_instances must be >= 1".into()));
        }
        if !(2..=12).contains(&self.answer_set_size) {
            return Err(Error::InvalidSpec("answer_set_size not in [2, 12]".into()));
        }
        if !(1..=8).contains(&self.num_traces) {
            return Err(Error::InvalidSpec("num_traces not in [1, 8]".into()));
        }
        let floor = 1.0 / self.answer_set_size as f64;
        if !(self.post_confidence > floor && self.post_confidence <= 1.0) {
            return Err(Error::InvalidSpec(format!(
                "post_confidence must lie in ({floor}, 1]"
            )));
        }
        Ok(())
    }
}

/// Generates a reasoning world where every post-trace answer distribution
/// concentrates `post_confidence` on the modal ground-truth answer. By
/// construction the greedy answer phase can only help, which is what the
/// two-phase decoder tests rely on.
pub fn generate_reasoning_world(spec: &ReasoningWorldSpec, seed: u64) -> Result<World> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = spec.answer_set_size;
    let m = spec.num_traces;
    let letters = ["a", "b", "c", "d", "e", "f", "g", "h", "i", "j", "k", "l"];

    // token layout: traces, think_end, answers, eos
    let mut labels: Vec<String> = (0..m).map(|t| format!("think{t} ")).collect();
    labels.push("</think>".to_string());
    for l in &letters[..n] {
        labels.push((*l).to_string());
    }
    labels.push(String::new());
    let size = labels.len();
    let eos = TokenId(size as u32 - 1);
    let think_end = TokenId(m as u32);
    let vocab = Vocabulary::new(size, Some(labels), eos, Some(think_end))?;
    let answer_base = m + 1;

    let mut instances = Vec::with_capacity(spec.num_instances);
    for i in 0..spec.num_instances {
        let id = InstanceRef::new(format!("inst-{i:05}"));
        let answers: Vec<CanonicalAnswer> = letters[..n]
            .iter()
            .map(|s| CanonicalAnswer::text(*s))
            .collect();
        let space = AnswerSpace::new(answers)?;
        let weights = shuffled(zipf_weights(n, spec.head_heaviness), &mut rng);
        let mut entries = BTreeMap::new();
        for (a, w) in space.answers().iter().zip(&weights) {
            entries.insert(a.clone(), *w);
        }
        let p_true = AnswerDist::over_space(entries, &space)?;
        let modal_idx = space
            .answers()
            .iter()
            .position(|a| a == p_true.argmax())
            .expect("modal answer is in the space");

        let mut model = TabularModel::new(vocab.clone(), 4);
        // trace distribution
        let raw: Vec<f64> = (0..m).map(|_| rng.random_range(0.2..1.0)).collect();
        let z: f64 = raw.iter().sum();
        let mut root = vec![0.0; size];
        for (t, w) in raw.iter().enumerate() {
            root[t] = w / z;
        }
        model.insert_row(Vec::new(), ProbVector::new(root)?)?;
        for t in 0..m {
            let trace = TokenId(t as u32);
            let mut te_row = vec![0.0; size];
            te_row[think_end.index()] = 1.0;
            model.insert_row(vec![trace], ProbVector::new(te_row)?)?;

            // post-trace answer distribution, anchored on the modal answer
            let spread = (1.0 - spec.post_confidence) / (n - 1) as f64;
            let mut ans_row = vec![0.0; size];
            for j in 0..n {
                ans_row[answer_base + j] = if j == modal_idx {
                    spec.post_confidence
                } else {
                    spread
                };
            }
            model.insert_row(vec![trace, think_end], ProbVector::new(ans_row)?)?;
            for j in 0..n {
                let mut eos_row = vec![0.0; size];
                eos_row[eos.index()] = 1.0;
                model.insert_row(
                    vec![trace, think_end, TokenId((answer_base + j) as u32)],
                    ProbVector::new(eos_row)?,
                )?;
            }
        }
        instances.push(Instance {
            id,
            space,
            p_true,
            model,
        });
    }

    // descriptive spec for the file header
    let world_spec = WorldSpec {
        num_instances: spec.num_instances,
        answer_set_size: n,
        head_heaviness: spec.head_heaviness,
        single_token_fraction: 1.0,
        boolean_fraction: 0.0,
        numeric_fraction: 0.0,
        yes_share: 0.0,
        miscal: MiscalSpec::identity(),
        token_level: true,
        pool: AnswerPool::McqLetters,
    };
    Ok(World {
        spec: world_spec,
        seed,
        instances,
    })
}
