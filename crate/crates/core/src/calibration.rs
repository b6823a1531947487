//! Exact and Monte-Carlo estimators for the decoding objective, the
//! strategy-conditioned calibration metrics, the two greedy-optimality gap
//! functionals, and the optimality verdict checker.
//!
//! Throughout, `p` is an instance's ground-truth answer posterior, `q` is
//! the model's answer posterior under full sampling at temperature 1, and
//! `q^alpha` is the posterior induced by a truncation strategy. The greedy
//! answer `a1` is the decode of the greedy rollout.

use std::collections::HashMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::answer::{decode_answer, AnswerDist, CanonicalAnswer};
use crate::error::{Error, Result};
use crate::exec::ordered_map;
use crate::model::{answer_posterior, greedy_answer, SequenceModel};
use crate::seeding::child_seed;
use crate::strategy::{step_distribution, StrategySpec, TokenSampler};
use crate::vocab::TokenId;
use crate::worlds::{Instance, World};

/// Absolute tolerance on objective comparisons in the verdict, absorbing
/// floating-point summation order effects.
pub const J_TOLERANCE: f64 = 1e-12;

/// Default Monte-Carlo seed protocol: four seeds, averaged.
pub const DEFAULT_MC_SEEDS: [u64; 4] = [0, 1, 2, 3];

/// How an estimator runs.
#[derive(Debug, Clone, PartialEq)]
pub enum EstimatorMode {
    Exact,
    MonteCarlo { n_samples: usize, seeds: Vec<u64> },
}

impl EstimatorMode {
    /// Monte Carlo with `n_samples` per seed under the default seed list.
    pub fn monte_carlo(n_samples: usize) -> Self {
        EstimatorMode::MonteCarlo {
            n_samples,
            seeds: DEFAULT_MC_SEEDS.to_vec(),
        }
    }
}

/// An estimated metric value. Exact estimates carry no sampling fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum Estimate {
    Exact {
        value: f64,
    },
    MonteCarlo {
        value: f64,
        n_samples: usize,
        std_error: f64,
    },
}

impl Estimate {
    pub fn value(&self) -> f64 {
        match self {
            Estimate::Exact { value } => *value,
            Estimate::MonteCarlo { value, .. } => *value,
        }
    }

    pub fn std_error(&self) -> Option<f64> {
        match self {
            Estimate::Exact { .. } => None,
            Estimate::MonteCarlo { std_error, .. } => Some(*std_error),
        }
    }
}

/// The metrics a strategy evaluates to on a world, all exact means over
/// instances.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StrategyTerms {
    /// Objective: expected ground-truth mass of the selected answer.
    pub j: f64,
    /// Expected |q(a) - p(a)| over a ~ q^alpha.
    pub ece: f64,
    /// Expected (q(a) - p(a))^2 / q(a) over a ~ q^alpha.
    pub bs: f64,
    /// Probability the selected answer is the modal ground-truth answer.
    pub accuracy: f64,
    /// Expected q(a1) - q(a) over a ~ q^alpha.
    pub gap1: f64,
    /// Expected q(a1) - (1 + q(a)^2) / (2 q(a)) over a ~ q^alpha.
    pub gap2: f64,
}

struct InstanceAnalysis {
    q_full: AnswerDist,
    q_a1: f64,
    p_a1: f64,
    modal: CanonicalAnswer,
}

/// Per-instance quantities shared by every metric: the model's full answer
/// posterior, the greedy answer, and the modal ground-truth answer.
pub struct WorldAnalysis<'w> {
    world: &'w World,
    instances: Vec<InstanceAnalysis>,
    ece1: f64,
    bs1: f64,
    j_greedy: f64,
}

impl<'w> WorldAnalysis<'w> {
    pub fn new(world: &'w World) -> Result<Self> {
        let full = StrategySpec::temperature_only(1.0).expect("tau 1 is valid");
        let per: Vec<Result<InstanceAnalysis>> = ordered_map(&world.instances, |inst| {
            let q_full = answer_posterior(
                &inst.model,
                &inst.id,
                &full,
                &inst.space,
                inst.model.max_len(),
            )?;
            let a1 = greedy_answer(&inst.model, &inst.id, &inst.space, inst.model.max_len())?;
            let q_a1 = q_full.get(&a1);
            let p_a1 = inst.p_true.get(&a1);
            let modal = inst.p_true.argmax().clone();
            Ok(InstanceAnalysis {
                q_full,
                q_a1,
                p_a1,
                modal,
            })
        });
        let mut instances = Vec::with_capacity(per.len());
        for r in per {
            instances.push(r?);
        }
        let n = instances.len() as f64;
        let ece1 = instances.iter().map(|a| (a.q_a1 - a.p_a1).abs()).sum::<f64>() / n;
        let bs1 = instances
            .iter()
            .map(|a| (a.q_a1 - a.p_a1).powi(2) / a.q_a1)
            .sum::<f64>()
            / n;
        let j_greedy = instances.iter().map(|a| a.p_a1).sum::<f64>() / n;
        Ok(Self {
            world,
            instances,
            ece1,
            bs1,
            j_greedy,
        })
    }

    /// Calibration error of the greedy strategy.
    pub fn ece1(&self) -> f64 {
        self.ece1
    }

    /// Brier score of the greedy strategy.
    pub fn bs1(&self) -> f64 {
        self.bs1
    }

    /// Objective of the greedy strategy.
    pub fn j_greedy(&self) -> f64 {
        self.j_greedy
    }

    /// Exact world-level metrics for one strategy.
    pub fn exact_terms(&self, spec: &StrategySpec) -> Result<StrategyTerms> {
        let pairs: Vec<(&Instance, &InstanceAnalysis)> =
            self.world.instances.iter().zip(&self.instances).collect();
        let per: Vec<Result<StrategyTerms>> = ordered_map(&pairs, |(inst, analysis)| {
            instance_terms(inst, analysis, spec)
        });
        let mut total = StrategyTerms {
            j: 0.0,
            ece: 0.0,
            bs: 0.0,
            accuracy: 0.0,
            gap1: 0.0,
            gap2: 0.0,
        };
        for r in per {
            let t = r?;
            total.j += t.j;
            total.ece += t.ece;
            total.bs += t.bs;
            total.accuracy += t.accuracy;
            total.gap1 += t.gap1;
            total.gap2 += t.gap2;
        }
        let n = self.instances.len() as f64;
        Ok(StrategyTerms {
            j: total.j / n,
            ece: total.ece / n,
            bs: total.bs / n,
            accuracy: total.accuracy / n,
            gap1: total.gap1 / n,
            gap2: total.gap2 / n,
        })
    }

    /// Gap functional of optimality condition 1 for `spec`.
    pub fn g1(&self, terms: &StrategyTerms) -> f64 {
        terms.gap1 - self.ece1 - terms.ece
    }

    /// Gap functional of optimality condition 2 for `spec`.
    pub fn g2(&self, terms: &StrategyTerms) -> f64 {
        terms.gap2 - self.ece1 + terms.bs / 2.0
    }
}

/// The answer posterior a strategy induces on one instance. Beam search is
/// deterministic, so its posterior is the point mass on its decode.
fn strategy_posterior(inst: &Instance, spec: &StrategySpec) -> Result<AnswerDist> {
    if let crate::strategy::Strategy::Beam { width } = spec.strategy() {
        let res = crate::strategy::beam_search(&inst.model, &inst.id, width, inst.model.max_len())?;
        let answer = decode_answer(&res.tokens, inst.model.vocabulary(), &inst.space)?;
        return Ok(AnswerDist::point_mass(answer));
    }
    answer_posterior(
        &inst.model,
        &inst.id,
        spec,
        &inst.space,
        inst.model.max_len(),
    )
}

fn instance_terms(
    inst: &Instance,
    analysis: &InstanceAnalysis,
    spec: &StrategySpec,
) -> Result<StrategyTerms> {
    let q_alpha = strategy_posterior(inst, spec)?;
    let mut t = StrategyTerms {
        j: 0.0,
        ece: 0.0,
        bs: 0.0,
        accuracy: 0.0,
        gap1: 0.0,
        gap2: 0.0,
    };
    for (a, w) in q_alpha.iter() {
        if w <= 0.0 {
            continue;
        }
        let q = analysis.q_full.get(a);
        let p = inst.p_true.get(a);
        t.j += w * p;
        t.ece += w * (q - p).abs();
        t.bs += w * (q - p).powi(2) / q;
        t.gap1 += w * (analysis.q_a1 - q);
        t.gap2 += w * (analysis.q_a1 - (1.0 + q * q) / (2.0 * q));
        if *a == analysis.modal {
            t.accuracy += w;
        }
    }
    Ok(t)
}

/// The decoding objective J: expected ground-truth probability of the
/// answer the strategy selects.
pub fn objective_j(world: &World, spec: &StrategySpec, mode: &EstimatorMode) -> Result<Estimate> {
    estimate_metric(world, spec, mode, Metric::J)
}

/// Strategy-conditioned expected calibration error. With the greedy spec
/// this is the greedy calibration error.
pub fn ece(world: &World, spec: &StrategySpec, mode: &EstimatorMode) -> Result<Estimate> {
    estimate_metric(world, spec, mode, Metric::Ece)
}

/// Strategy-conditioned Brier score with the model-confidence denominator.
/// Answers the strategy cannot produce contribute zero.
pub fn brier(world: &World, spec: &StrategySpec, mode: &EstimatorMode) -> Result<Estimate> {
    estimate_metric(world, spec, mode, Metric::Bs)
}

/// Probability of selecting the modal ground-truth answer.
pub fn accuracy(world: &World, spec: &StrategySpec, mode: &EstimatorMode) -> Result<Estimate> {
    estimate_metric(world, spec, mode, Metric::Accuracy)
}

#[derive(Clone, Copy, PartialEq, Eq)]
pub(crate) enum Metric {
    J,
    Ece,
    Bs,
    Accuracy,
}

impl Metric {
    fn pick(self, t: &StrategyTerms) -> f64 {
        match self {
            Metric::J => t.j,
            Metric::Ece => t.ece,
            Metric::Bs => t.bs,
            Metric::Accuracy => t.accuracy,
        }
    }

    fn index(self) -> usize {
        match self {
            Metric::J => 0,
            Metric::Ece => 1,
            Metric::Bs => 2,
            Metric::Accuracy => 3,
        }
    }
}

fn estimate_metric(
    world: &World,
    spec: &StrategySpec,
    mode: &EstimatorMode,
    metric: Metric,
) -> Result<Estimate> {
    let analysis = WorldAnalysis::new(world)?;
    match mode {
        EstimatorMode::Exact => {
            let terms = analysis.exact_terms(spec)?;
            Ok(Estimate::Exact {
                value: metric.pick(&terms),
            })
        }
        EstimatorMode::MonteCarlo { n_samples, seeds } => {
            let mc = mc_metrics(&analysis, spec, *n_samples, seeds)?;
            Ok(mc.estimate(metric))
        }
    }
}

/// Monte-Carlo summary over all (instance, seed) cells: per-seed estimates
/// of the four sampled metrics plus within-cell variances for standard
/// errors.
pub(crate) struct McMetrics {
    /// per seed, per metric: grand mean over instance cells
    pub per_seed: Vec<[f64; 4]>,
    /// per metric: sum over cells of var/m, divided by (cells)^2
    se2: [f64; 4],
    total_samples: usize,
}

impl McMetrics {
    pub fn estimate(&self, metric: Metric) -> Estimate {
        let i = metric.index();
        let value =
            self.per_seed.iter().map(|v| v[i]).sum::<f64>() / self.per_seed.len() as f64;
        Estimate::MonteCarlo {
            value,
            n_samples: self.total_samples,
            std_error: self.se2[i].sqrt(),
        }
    }
}

/// Sampled metric values for one decoded answer.
fn sample_values(
    inst: &Instance,
    analysis: &InstanceAnalysis,
    answer: &CanonicalAnswer,
) -> [f64; 4] {
    let q = analysis.q_full.get(answer);
    let p = inst.p_true.get(answer);
    [
        p,
        (q - p).abs(),
        (q - p).powi(2) / q,
        if *answer == analysis.modal { 1.0 } else { 0.0 },
    ]
}

pub(crate) fn mc_metrics(
    analysis: &WorldAnalysis<'_>,
    spec: &StrategySpec,
    n_samples: usize,
    seeds: &[u64],
) -> Result<McMetrics> {
    if spec.is_beam() {
        return Err(Error::InvalidParameter(
            "beam search induces no sampling distribution to estimate".into(),
        ));
    }
    if seeds.is_empty() || n_samples == 0 {
        return Err(Error::InvalidParameter(
            "monte carlo needs at least one seed and one sample".into(),
        ));
    }
    let world = analysis.world;
    let instances = world.instances.len();
    let m = (n_samples / instances).max(1);
    let spec_string = spec.to_string();

    struct Cell {
        mean: [f64; 4],
        var_over_m: [f64; 4],
    }

    let mut per_seed = Vec::with_capacity(seeds.len());
    let mut se2 = [0.0; 4];
    let cells_per_seed = instances as f64;
    for &seed in seeds {
        let pairs: Vec<(&Instance, &InstanceAnalysis)> =
            world.instances.iter().zip(&analysis.instances).collect();
        let cells: Vec<Result<Cell>> = ordered_map(&pairs, |(inst, ia)| {
            let mut rng =
                ChaCha8Rng::seed_from_u64(child_seed(seed, &spec_string, inst.id.id()));
            let mut process = CachedRollout::new(&inst.model, &inst.id, spec);
            let mut sums = [0.0; 4];
            let mut sumsqs = [0.0; 4];
            for _ in 0..m {
                let tokens = process.sample(&mut rng)?;
                let values = process.values_for(inst, ia, &tokens)?;
                for k in 0..4 {
                    sums[k] += values[k];
                    sumsqs[k] += values[k] * values[k];
                }
            }
            let mf = m as f64;
            let mut mean = [0.0; 4];
            let mut var_over_m = [0.0; 4];
            for k in 0..4 {
                mean[k] = sums[k] / mf;
                let var = if m > 1 {
                    ((sumsqs[k] - sums[k] * sums[k] / mf) / (mf - 1.0)).max(0.0)
                } else {
                    0.0
                };
                var_over_m[k] = var / mf;
            }
            Ok(Cell { mean, var_over_m })
        });
        let mut seed_mean = [0.0; 4];
        for cell in cells {
            let cell = cell?;
            for k in 0..4 {
                seed_mean[k] += cell.mean[k] / cells_per_seed;
                se2[k] += cell.var_over_m[k];
            }
        }
        per_seed.push(seed_mean);
    }
    let total_cells = (instances * seeds.len()) as f64;
    for v in &mut se2 {
        *v /= total_cells * total_cells;
    }
    Ok(McMetrics {
        per_seed,
        se2,
        total_samples: m * instances * seeds.len(),
    })
}

/// Rollout sampler that memoizes the per-prefix truncated distributions and
/// the per-sequence metric values. Sampling semantics are identical to
/// [`crate::model::rollout`]; only repeated deterministic work is cached.
struct CachedRollout<'m, M: SequenceModel + ?Sized> {
    model: &'m M,
    instance: &'m crate::model::InstanceRef,
    spec: StrategySpec,
    samplers: HashMap<Vec<TokenId>, TokenSampler>,
    values: HashMap<Vec<TokenId>, [f64; 4]>,
}

impl<'m, M: SequenceModel + ?Sized> CachedRollout<'m, M> {
    fn new(model: &'m M, instance: &'m crate::model::InstanceRef, spec: &StrategySpec) -> Self {
        Self {
            model,
            instance,
            spec: *spec,
            samplers: HashMap::new(),
            values: HashMap::new(),
        }
    }

    fn sample<R: rand::Rng + ?Sized>(&mut self, rng: &mut R) -> Result<Vec<TokenId>> {
        let eos = self.model.vocabulary().eos();
        let max_len = 64; // tabular models terminate well before this
        let mut prefix: Vec<TokenId> = Vec::new();
        for _ in 0..max_len {
            if !self.samplers.contains_key(&prefix) {
                let row = self.model.next_distribution(&self.instance, &prefix)?;
                let step = step_distribution(&row, &self.spec)?;
                self.samplers.insert(prefix.clone(), TokenSampler::new(&step));
            }
            let token = self.samplers[&prefix].sample(rng);
            prefix.push(token);
            if token == eos {
                break;
            }
        }
        Ok(prefix)
    }

    fn values_for(
        &mut self,
        inst: &Instance,
        ia: &InstanceAnalysis,
        tokens: &[TokenId],
    ) -> Result<[f64; 4]> {
        if let Some(v) = self.values.get(tokens) {
            return Ok(*v);
        }
        let answer = decode_answer(tokens, self.model.vocabulary(), &inst.space)?;
        let v = sample_values(inst, ia, &answer);
        self.values.insert(tokens.to_vec(), v);
        Ok(v)
    }
}

/// Condition-1 gap: E[q(a1) - q(a)] - ECE1 - ECE^alpha, exact.
pub fn gap_g1(world: &World, spec: &StrategySpec) -> Result<f64> {
    let analysis = WorldAnalysis::new(world)?;
    let terms = analysis.exact_terms(spec)?;
    Ok(analysis.g1(&terms))
}

/// Condition-2 gap: E[q(a1) - (1 + q(a)^2)/(2 q(a))] - ECE1 + BS^alpha / 2,
/// exact.
pub fn gap_g2(world: &World, spec: &StrategySpec) -> Result<f64> {
    let analysis = WorldAnalysis::new(world)?;
    let terms = analysis.exact_terms(spec)?;
    Ok(analysis.g2(&terms))
}

/// Per-strategy record in a [`TheoremReport`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyRecord {
    pub spec: StrategySpec,
    pub j: f64,
    pub g1: f64,
    pub g2: f64,
    pub cond1_holds: bool,
    pub cond2_holds: bool,
}

/// Verdict of a greedy-optimality check over a strategy grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    /// Every grid strategy satisfied a condition and none beat greedy.
    TheoremAppliesAndConfirmed,
    /// Every grid strategy satisfied a condition yet one beat greedy.
    TheoremAppliesAndViolated,
    /// Some grid strategy satisfied neither condition.
    TheoremSilent,
}

impl Verdict {
    pub fn as_str(&self) -> &'static str {
        match self {
            Verdict::TheoremAppliesAndConfirmed => "theorem_applies_and_confirmed",
            Verdict::TheoremAppliesAndViolated => "theorem_applies_and_VIOLATED",
            Verdict::TheoremSilent => "theorem_silent",
        }
    }
}

/// Per-world, per-strategy record of gaps, objectives, and the verdict.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoremReport {
    pub records: Vec<StrategyRecord>,
    pub j_greedy: f64,
    pub verdict: Verdict,
}

impl TheoremReport {
    pub fn best_j(&self) -> f64 {
        self.records.iter().map(|r| r.j).fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Evaluates both optimality conditions and the objective for every grid
/// strategy and issues the verdict. The grid should exclude specs that
/// reduce to greedy.
pub fn verify_greedy_optimality(world: &World, grid: &[StrategySpec]) -> Result<TheoremReport> {
    if grid.is_empty() {
        return Err(Error::InvalidParameter("empty strategy grid".into()));
    }
    let analysis = WorldAnalysis::new(world)?;
    let mut records = Vec::with_capacity(grid.len());
    for spec in grid {
        let terms = analysis.exact_terms(spec)?;
        let g1 = analysis.g1(&terms);
        let g2 = analysis.g2(&terms);
        records.push(StrategyRecord {
            spec: *spec,
            j: terms.j,
            g1,
            g2,
            cond1_holds: g1 >= 0.0,
            cond2_holds: g2 >= 0.0,
        });
    }
    let applies = records.iter().all(|r| r.cond1_holds || r.cond2_holds);
    let j_greedy = analysis.j_greedy();
    let beaten = records.iter().any(|r| r.j > j_greedy + J_TOLERANCE);
    let verdict = match (applies, beaten) {
        (true, true) => Verdict::TheoremAppliesAndViolated,
        (true, false) => Verdict::TheoremAppliesAndConfirmed,
        (false, _) => Verdict::TheoremSilent,
    };
    Ok(TheoremReport {
        records,
        j_greedy,
        verdict,
    })
}

/// The default hyperparameter grid, clamped to the vocabulary size:
/// temperature-only plus three parameter choices per truncation family,
/// each crossed with temperatures {0.7, 1.0, 2.0}.
pub fn default_grid(vocab_size: usize) -> Vec<StrategySpec> {
    let taus = [0.7, 1.0, 2.0];
    let mut ks: Vec<usize> = [5usize, 10, 50]
        .iter()
        .map(|&k| k.min(vocab_size))
        .collect();
    ks.dedup();
    let ps = [0.8, 0.9, 0.95];
    let p_bases = [0.05, 0.1, 0.2];
    let epss = [3e-4, 1e-3, 9e-3];
    let etas = [3e-4, 2e-3, 4e-3];

    let mut grid = Vec::new();
    for &tau in &taus {
        grid.push(StrategySpec::temperature_only(tau).expect("valid tau"));
        for &k in &ks {
            grid.push(StrategySpec::top_k(k, tau).expect("valid top_k"));
        }
        for &p in &ps {
            grid.push(StrategySpec::top_p(p, tau).expect("valid top_p"));
        }
        for &pb in &p_bases {
            grid.push(StrategySpec::min_p(pb, tau).expect("valid min_p"));
        }
        for &e in &epss {
            grid.push(StrategySpec::epsilon(e, tau).expect("valid epsilon"));
        }
        for &e in &etas {
            grid.push(StrategySpec::eta(e, tau).expect("valid eta"));
        }
    }
    grid
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::answer::AnswerSpace;
    use crate::worlds::{answer_level_model, world_presets, MiscalSpec, WorldSpec};
    use std::collections::BTreeMap;

    /// Single-instance answer-level world over two text answers.
    fn two_answer_world(p: [f64; 2], q: [f64; 2]) -> World {
        let space = AnswerSpace::from_raw(&["alpha", "bravo"]).unwrap();
        let dist = |xs: [f64; 2]| {
            let mut m = BTreeMap::new();
            for (a, x) in space.answers().iter().zip(xs) {
                m.insert(a.clone(), x);
            }
            AnswerDist::new(m).unwrap()
        };
        let p_true = dist(p);
        let q_dist = dist(q);
        let model = answer_level_model(&space, &q_dist).unwrap();
        World {
            spec: dummy_spec(),
            seed: 0,
            instances: vec![Instance {
                id: crate::model::InstanceRef::new("i0"),
                space,
                p_true,
                model,
            }],
        }
    }

    fn dummy_spec() -> WorldSpec {
        WorldSpec {
            num_instances: 1,
            ..world_presets("mcq4").unwrap()
        }
    }

    fn full() -> StrategySpec {
        StrategySpec::temperature_only(1.0).unwrap()
    }

    #[test]
    fn objective_examples() {
        let world = two_answer_world([0.6, 0.4], [0.7, 0.3]);
        let jg = objective_j(&world, &StrategySpec::greedy(), &EstimatorMode::Exact).unwrap();
        assert!((jg.value() - 0.6).abs() < 1e-12);
        let jf = objective_j(&world, &full(), &EstimatorMode::Exact).unwrap();
        assert!((jf.value() - 0.54).abs() < 1e-12);

        // uniform p and q: J = 1/|A| for any strategy
        let uniform = two_answer_world([0.5, 0.5], [0.5, 0.5]);
        for spec in [StrategySpec::greedy(), full(), StrategySpec::top_k(2, 1.0).unwrap()] {
            let j = objective_j(&uniform, &spec, &EstimatorMode::Exact).unwrap();
            assert!((j.value() - 0.5).abs() < 1e-12, "{spec}");
        }
    }

    #[test]
    fn ece_examples() {
        let world = two_answer_world([0.6, 0.4], [0.7, 0.3]);
        let e1 = ece(&world, &StrategySpec::greedy(), &EstimatorMode::Exact).unwrap();
        assert!((e1.value() - 0.1).abs() < 1e-12);
        let ef = ece(&world, &full(), &EstimatorMode::Exact).unwrap();
        assert!((ef.value() - 0.1).abs() < 1e-12);

        // q = p: ECE vanishes for every strategy
        let calibrated = two_answer_world([0.7, 0.3], [0.7, 0.3]);
        for spec in [StrategySpec::greedy(), full()] {
            let e = ece(&calibrated, &spec, &EstimatorMode::Exact).unwrap();
            assert!(e.value().abs() < 1e-12);
        }
    }

    #[test]
    fn brier_examples() {
        let world = two_answer_world([0.6, 0.4], [0.7, 0.3]);
        let b1 = brier(&world, &StrategySpec::greedy(), &EstimatorMode::Exact).unwrap();
        assert!((b1.value() - 0.01 / 0.7).abs() < 1e-12);

        let calibrated = two_answer_world([0.7, 0.3], [0.7, 0.3]);
        let b = brier(&calibrated, &full(), &EstimatorMode::Exact).unwrap();
        assert!(b.value().abs() < 1e-12);
    }

    #[test]
    fn brier_skips_zero_weight_answers() {
        // q places zero on bravo: the strategy cannot sample it, so it
        // contributes nothing despite q(bravo) = 0 in the denominator.
        let world = two_answer_world([0.6, 0.4], [1.0, 0.0]);
        let b = brier(&world, &full(), &EstimatorMode::Exact).unwrap();
        assert!((b.value() - (1.0f64 - 0.6).powi(2) / 1.0).abs() < 1e-12);
    }

    #[test]
    fn g1_examples() {
        let world = two_answer_world([0.9, 0.1], [0.9, 0.1]);
        let g1 = gap_g1(&world, &full()).unwrap();
        assert!((g1 - 0.08).abs() < 1e-12);
        let jg = objective_j(&world, &StrategySpec::greedy(), &EstimatorMode::Exact).unwrap();
        let jf = objective_j(&world, &full(), &EstimatorMode::Exact).unwrap();
        assert!((jg.value() - 0.9).abs() < 1e-12);
        assert!((jf.value() - 0.82).abs() < 1e-12);

        let adversarial = two_answer_world([0.3, 0.7], [0.6, 0.4]);
        let g1 = gap_g1(&adversarial, &full()).unwrap();
        assert!((g1 - (-0.52)).abs() < 1e-12);

        // alpha = top_k(1) is greedy in disguise: G1 = -2 ECE1
        let world = two_answer_world([0.6, 0.4], [0.7, 0.3]);
        let g1 = gap_g1(&world, &StrategySpec::top_k(1, 1.0).unwrap()).unwrap();
        assert!((g1 - (-0.2)).abs() < 1e-12);
    }

    #[test]
    fn g2_examples() {
        let world = two_answer_world([0.9, 0.1], [0.9, 0.1]);
        let g2 = gap_g2(&world, &full()).unwrap();
        assert!((g2 - (-0.51)).abs() < 1e-12);
        // condition 1 carries the disjunction here
        assert!(gap_g1(&world, &full()).unwrap() >= 0.0);

        let adversarial = two_answer_world([0.3, 0.7], [0.6, 0.4]);
        let g2 = gap_g2(&adversarial, &full()).unwrap();
        assert!((g2 - (-0.87)).abs() < 1e-12);

        // q = p point mass: the convex term hits its floor and G2 = 0
        let point = two_answer_world([1.0, 0.0], [1.0, 0.0]);
        let g2 = gap_g2(&point, &full()).unwrap();
        assert!(g2.abs() < 1e-12);
    }

    #[test]
    fn verdicts() {
        let calibrated = two_answer_world([0.9, 0.1], [0.9, 0.1]);
        let report = verify_greedy_optimality(&calibrated, &[full()]).unwrap();
        assert_eq!(report.verdict, Verdict::TheoremAppliesAndConfirmed);

        let adversarial = two_answer_world([0.3, 0.7], [0.6, 0.4]);
        let report = verify_greedy_optimality(&adversarial, &[full()]).unwrap();
        assert_eq!(report.verdict, Verdict::TheoremSilent);
        assert!((report.j_greedy - 0.3).abs() < 1e-12);
        assert!((report.best_j() - 0.46).abs() < 1e-12);
    }

    #[test]
    fn greedy_alpha_matches_greedy_metrics_exactly() {
        let world = two_answer_world([0.55, 0.45], [0.8, 0.2]);
        let k1 = StrategySpec::top_k(1, 1.0).unwrap();
        let e_k1 = ece(&world, &k1, &EstimatorMode::Exact).unwrap();
        let e_1 = ece(&world, &StrategySpec::greedy(), &EstimatorMode::Exact).unwrap();
        assert_eq!(e_k1.value(), e_1.value());
        let b_k1 = brier(&world, &k1, &EstimatorMode::Exact).unwrap();
        let b_1 = brier(&world, &StrategySpec::greedy(), &EstimatorMode::Exact).unwrap();
        assert_eq!(b_k1.value(), b_1.value());
    }

    #[test]
    fn monte_carlo_agrees_with_exact_within_three_sigma() {
        let spec = WorldSpec {
            num_instances: 10,
            miscal: MiscalSpec {
                lambda: 0.15,
                gamma: 1.3,
                argmax_flip_rate: 0.2,
            },
            ..world_presets("vqa-headheavy").unwrap()
        };
        let world = crate::worlds::generate_world(&spec, 5).unwrap();
        let alpha = StrategySpec::top_p(0.9, 1.0).unwrap();
        let mode = EstimatorMode::monte_carlo(40_000);
        for (exact_fn, name) in [
            (objective_j as fn(&World, &StrategySpec, &EstimatorMode) -> Result<Estimate>, "J"),
            (ece, "ECE"),
            (brier, "BS"),
        ] {
            let exact = exact_fn(&world, &alpha, &EstimatorMode::Exact).unwrap();
            let mc = exact_fn(&world, &alpha, &mode).unwrap();
            let se = mc.std_error().unwrap();
            assert!(
                (exact.value() - mc.value()).abs() <= 3.0 * se.max(1e-9),
                "{name}: exact {} vs mc {} (se {se})",
                exact.value(),
                mc.value()
            );
        }
    }

    #[test]
    fn mc_rejects_bad_modes() {
        let world = two_answer_world([0.6, 0.4], [0.7, 0.3]);
        let bad = EstimatorMode::MonteCarlo {
            n_samples: 0,
            seeds: vec![0],
        };
        assert!(objective_j(&world, &full(), &bad).is_err());
    }

    #[test]
    fn default_grid_clamps_and_parses() {
        let grid = default_grid(9);
        assert!(grid.iter().all(|s| !s.is_beam() && !s.is_greedy()));
        // 3 taus x (temp + ks {5, 9} after clamping + 3 p + 3 p_base + 3 eps + 3 eta)
        assert_eq!(grid.len(), 3 * 15);
        let wide = default_grid(64);
        assert_eq!(wide.len(), 3 * 16);
        for s in &grid {
            let round: StrategySpec = s.to_string().parse().unwrap();
            assert_eq!(&round, s);
        }
    }
}
