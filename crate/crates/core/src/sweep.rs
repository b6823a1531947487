//! Sweep runner: crosses a strategy grid with a temperature list, evaluates
//! the metric set per seed, and emits byte-stable CSV/JSON reports and
//! rank-curve files.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::calibration::{mc_metrics, StrategyTerms, WorldAnalysis};
use crate::error::{Error, Result};
use crate::strategy::StrategySpec;
use crate::worlds::{generate_world, world_presets, World};

pub const CONFIG_VERSION: &str = "1";
pub const CSV_HEADER: &str = "strategy,tau,metric,mean,std,n_seeds";

/// Where a sweep's world comes from: `{"file": "path"}` or
/// `{"preset": {"name": ..., "seed": ..., "instances": ...}}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum WorldSource {
    File(String),
    Preset {
        name: String,
        seed: u64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        instances: Option<usize>,
    },
}

impl WorldSource {
    pub fn load(&self) -> Result<World> {
        match self {
            WorldSource::File(file) => World::load(Path::new(file)),
            WorldSource::Preset {
                name,
                seed,
                instances,
            } => {
                let mut spec = world_presets(name)?;
                if let Some(n) = instances {
                    spec.num_instances = *n;
                }
                generate_world(&spec, *seed)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepMode {
    Exact,
    MonteCarlo,
}

fn default_samples() -> usize {
    100_000
}

/// A full sweep description; this is also the CLI's JSON config format.
/// Unknown fields are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub version: String,
    pub world: WorldSource,
    /// Strategy grid; the temperature of each entry is overridden by every
    /// value in `temperatures`.
    pub grid: Vec<StrategySpec>,
    pub temperatures: Vec<f64>,
    pub seeds: Vec<u64>,
    pub mode: SweepMode,
    /// Per-seed sample budget in monte-carlo mode, split across instances.
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        if self.version != CONFIG_VERSION {
            return Err(Error::Configuration(format!(
                "unsupported config version {:?}",
                self.version
            )));
        }
        if self.grid.is_empty() {
            return Err(Error::Configuration("empty strategy grid".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Configuration("empty seed list".into()));
        }
        if self.temperatures.is_empty() {
            return Err(Error::Configuration("empty temperature list".into()));
        }
        for &t in &self.temperatures {
            if t <= 0.0 || !t.is_finite() {
                return Err(Error::Configuration(format!("temperature {t} not positive")));
            }
        }
        if self.mode == SweepMode::MonteCarlo && self.samples == 0 {
            return Err(Error::Configuration("samples must be >= 1".into()));
        }
        Ok(())
    }

    pub fn from_json(json: &str) -> Result<Self> {
        let cfg: SweepConfig =
            serde_json::from_str(json).map_err(|e| Error::json("parsing sweep config", e))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Stable hash of the canonical JSON encoding, for report provenance.
    pub fn config_hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        format!("{:016x}", crate::seeding::child_seed(0, "sweep-config", &canonical))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub strategy: String,
    pub tau: f64,
    pub metric: String,
    pub mean: f64,
    pub std: f64,
    pub n_seeds: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub config_hash: String,
    pub tool_version: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportSet {
    pub rows: Vec<ReportRow>,
    pub provenance: Provenance,
}

const EXACT_METRICS: [&str; 6] = ["J", "ECE", "BS", "G1", "G2", "accuracy"];
const MC_METRICS: [&str; 4] = ["J", "ECE", "BS", "accuracy"];

/// Runs the sweep described by `cfg`, loading the world from its source.
pub fn run_sweep(cfg: &SweepConfig) -> Result<ReportSet> {
    cfg.validate()?;
    let world = cfg.world.load()?;
    run_sweep_on(&world, cfg)
}

/// Runs the sweep on an already-loaded world. Deterministic for a given
/// config, independent of worker count: per-seed work derives child seeds
/// from (seed, strategy, instance) and reductions are ordered.
pub fn run_sweep_on(world: &World, cfg: &SweepConfig) -> Result<ReportSet> {
    cfg.validate()?;
    let analysis = WorldAnalysis::new(world)?;
    let mut rows = Vec::new();
    for base in &cfg.grid {
        for &tau in &cfg.temperatures {
            let spec = base.at_tau(tau)?;
            let label = base.family_label();
            match cfg.mode {
                SweepMode::Exact => {
                    let terms = analysis.exact_terms(&spec)?;
                    push_exact_rows(&mut rows, &analysis, &terms, &label, tau, cfg.seeds.len());
                }
                SweepMode::MonteCarlo => {
                    if spec.is_beam() || spec.is_greedy() {
                        // deterministic strategies evaluate exactly; their
                        // seed spread is identically zero
                        let terms = analysis.exact_terms(&spec)?;
                        for name in MC_METRICS {
                            rows.push(ReportRow {
                                strategy: label.clone(),
                                tau,
                                metric: name.to_string(),
                                mean: pick_metric(&terms, name),
                                std: 0.0,
                                n_seeds: cfg.seeds.len(),
                            });
                        }
                    } else {
                        let mc = mc_metrics(&analysis, &spec, cfg.samples, &cfg.seeds)?;
                        for (idx, name) in MC_METRICS.iter().enumerate() {
                            let per_seed: Vec<f64> =
                                mc.per_seed.iter().map(|v| v[idx]).collect();
                            let mean = per_seed.iter().sum::<f64>() / per_seed.len() as f64;
                            rows.push(ReportRow {
                                strategy: label.clone(),
                                tau,
                                metric: (*name).to_string(),
                                mean,
                                std: sample_std(&per_seed, mean),
                                n_seeds: cfg.seeds.len(),
                            });
                        }
                    }
                }
            }
        }
    }
    rows.sort_by(|a, b| {
        a.strategy
            .cmp(&b.strategy)
            .then_with(|| a.tau.total_cmp(&b.tau))
            .then_with(|| a.metric.cmp(&b.metric))
    });
    Ok(ReportSet {
        rows,
        provenance: Provenance {
            config_hash: cfg.config_hash(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
        },
    })
}

fn pick_metric(terms: &StrategyTerms, name: &str) -> f64 {
    match name {
        "J" => terms.j,
        "ECE" => terms.ece,
        "BS" => terms.bs,
        "accuracy" => terms.accuracy,
        other => unreachable!("unknown metric {other}"),
    }
}

fn push_exact_rows(
    rows: &mut Vec<ReportRow>,
    analysis: &WorldAnalysis<'_>,
    terms: &StrategyTerms,
    label: &str,
    tau: f64,
    n_seeds: usize,
) {
    for name in EXACT_METRICS {
        let mean = match name {
            "G1" => analysis.g1(terms),
            "G2" => analysis.g2(terms),
            other => pick_metric(terms, other),
        };
        rows.push(ReportRow {
            strategy: label.to_string(),
            tau,
            metric: name.to_string(),
            mean,
            std: 0.0,
            n_seeds,
        });
    }
}

fn sample_std(values: &[f64], mean: f64) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    (ss / (values.len() - 1) as f64).sqrt()
}

/// Renders the fixed-header CSV. Float fields use the shortest round-trip
/// rendering, so equal inputs produce identical bytes.
pub fn report_csv(rs: &ReportSet) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in &rs.rows {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            r.strategy, r.tau, r.metric, r.mean, r.std, r.n_seeds
        )
        .expect("string write");
    }
    out
}

pub fn report_json(rs: &ReportSet) -> String {
    serde_json::to_string_pretty(rs).expect("report serializes")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Json,
}

/// Writes `report.csv` or `report.json` under `out_dir` and returns the
/// path.
pub fn emit_report(rs: &ReportSet, out_dir: &Path, format: ReportFormat) -> Result<PathBuf> {
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir.display().to_string(), e))?;
    let (name, contents) = match format {
        ReportFormat::Csv => ("report.csv", report_csv(rs)),
        ReportFormat::Json => ("report.json", report_json(rs)),
    };
    let path = out_dir.join(name);
    fs::write(&path, contents).map_err(|e| Error::io(path.display().to_string(), e))?;
    Ok(path)
}

/// One row of a rank curve: the condition-1 gap and calibration error of
/// plain top-k truncation at temperature 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RankCurveRow {
    pub k: usize,
    pub g1: f64,
    pub ece: f64,
}

/// Computes `{k, G1, ECE}` for k = 1..=k_max. Requires
/// `2 <= k_max <=` the smallest answer-set size in the world.
pub fn rank_curves(world: &World, k_max: usize) -> Result<Vec<RankCurveRow>> {
    let min_answers = world
        .instances
        .iter()
        .map(|i| i.space.len())
        .min()
        .unwrap_or(0);
    if k_max < 2 || k_max > min_answers {
        return Err(Error::InvalidParameter(format!(
            "k_max {k_max} must lie in [2, {min_answers}]"
        )));
    }
    let analysis = WorldAnalysis::new(world)?;
    let mut rows = Vec::with_capacity(k_max);
    for k in 1..=k_max {
        let spec = StrategySpec::top_k(k, 1.0)?;
        let terms = analysis.exact_terms(&spec)?;
        rows.push(RankCurveRow {
            k,
            g1: analysis.g1(&terms),
            ece: terms.ece,
        });
    }
    Ok(rows)
}

pub fn rank_curves_csv(rows: &[RankCurveRow]) -> String {
    let mut out = String::from("k,G1,ECE\n");
    for r in rows {
        writeln!(out, "{},{},{}", r.k, r.g1, r.ece).expect("string write");
    }
    out
}

/// Writes the rank-curve CSV to `path`.
pub fn emit_rank_curves(world: &World, k_max: usize, path: &Path) -> Result<()> {
    let rows = rank_curves(world, k_max)?;
    fs::write(path, rank_curves_csv(&rows))
        .map_err(|e| Error::io(path.display().to_string(), e))
}
