//! Command-line front end: generate worlds, run sweeps, check greedy
//! optimality, emit rank curves, decode with the two-phase strategy, and
//! evaluate against remote logprob endpoints.

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use decodelab::calibration::{default_grid, verify_greedy_optimality};
use decodelab::model::SequenceModel;
use decodelab::gdrm::{gdrm_decode, gdrm_objective, GdrmConfig};
use decodelab::remote::{remote_rollout, RemoteEndpoint};
use decodelab::strategy::StrategySpec;
use decodelab::sweep::{
    emit_rank_curves, emit_report, run_sweep_on, ReportFormat, SweepConfig, SweepMode,
    WorldSource, CONFIG_VERSION,
};
use decodelab::worlds::{
    generate_reasoning_world, generate_world, world_presets, ReasoningWorldSpec, World,
    PRESET_NAMES,
};

#[derive(Parser)]
#[command(name = "decodelab", version, about = "Decoding strategies, calibration metrics, and greedy-optimality checks on synthetic worlds")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic world and write it as JSON.
    GenWorld(GenWorldArgs),
    /// Run a strategy/temperature sweep and emit CSV + JSON reports.
    Sweep(SweepArgs),
    /// Check the greedy-optimality conditions over a strategy grid.
    VerifyTheorem(VerifyArgs),
    /// Emit per-k rank curves (G1 and ECE under top-k) as CSV.
    Curves(CurvesArgs),
    /// Decode instances with the two-phase reasoning strategy.
    Gdrm(GdrmArgs),
    /// Roll out against an OpenAI-compatible completions endpoint.
    RemoteEval(RemoteEvalArgs),
}

#[derive(Args)]
struct WorldArgs {
    /// World file produced by gen-world.
    #[arg(long, conflicts_with_all = ["preset", "world_seed", "instances"])]
    world: Option<PathBuf>,
    /// Generate from a preset instead of loading a file.
    #[arg(long)]
    preset: Option<String>,
    /// Generation seed when using --preset.
    #[arg(long, default_value_t = 0)]
    world_seed: u64,
    /// Override the preset's instance count.
    #[arg(long)]
    instances: Option<usize>,
}

impl WorldArgs {
    fn source(&self) -> Result<WorldSource, String> {
        match (&self.world, &self.preset) {
            (Some(path), None) => Ok(WorldSource::File(path.display().to_string())),
            (None, Some(preset)) => Ok(WorldSource::Preset {
                name: preset.clone(),
                seed: self.world_seed,
                instances: self.instances,
            }),
            _ => Err("provide exactly one of --world or --preset".to_string()),
        }
    }

    fn load(&self) -> Result<World, Box<dyn std::error::Error>> {
        Ok(self.source()?.load()?)
    }
}

#[derive(Args)]
struct GenWorldArgs {
    /// Preset name.
    #[arg(long, conflicts_with = "reasoning")]
    preset: Option<String>,
    /// Generate a two-phase reasoning world instead of a preset.
    #[arg(long)]
    reasoning: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Override the instance count.
    #[arg(long)]
    instances: Option<usize>,
    /// Answers per instance (reasoning worlds).
    #[arg(long, default_value_t = 4)]
    answers: usize,
    /// Traces per instance (reasoning worlds).
    #[arg(long, default_value_t = 3)]
    traces: usize,
    /// Post-trace confidence on the modal answer (reasoning worlds).
    #[arg(long, default_value_t = 0.95)]
    confidence: f64,
    /// Output file.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SweepArgs {
    /// JSON sweep config; flags below are ignored when present.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    world: WorldArgs,
    /// Comma-separated strategy grid, e.g. "greedy,top_p:0.9,top_k:5".
    #[arg(long, value_delimiter = ',')]
    grid: Vec<StrategySpec>,
    /// Comma-separated temperatures.
    #[arg(long, value_delimiter = ',', default_values_t = [0.7, 1.0, 2.0])]
    temps: Vec<f64>,
    /// Comma-separated seeds.
    #[arg(long, value_delimiter = ',', default_values_t = [0u64, 1, 2, 3])]
    seeds: Vec<u64>,
    /// exact or mc.
    #[arg(long, default_value = "exact")]
    mode: String,
    /// Per-seed sample budget in mc mode.
    #[arg(long, default_value_t = 100_000)]
    samples: usize,
    /// Output directory for report.csv and report.json.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    #[command(flatten)]
    world: WorldArgs,
    /// Comma-separated strategy grid; defaults to the built-in grid.
    #[arg(long, value_delimiter = ',')]
    grid: Vec<StrategySpec>,
    /// Directory for theorem.json (optional).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CurvesArgs {
    #[command(flatten)]
    world: WorldArgs,
    /// Largest k; defaults to the smallest answer-set size.
    #[arg(long)]
    k_max: Option<usize>,
    /// Output CSV path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct GdrmArgs {
    #[command(flatten)]
    world: WorldArgs,
    /// Reasoning-phase strategy, e.g. "top_p:0.9@0.7" or "beam:5".
    #[arg(long)]
    reasoning: StrategySpec,
    #[arg(long, default_value_t = 16)]
    max_think: usize,
    #[arg(long, default_value_t = 8)]
    max_answer: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Directory for per-instance results JSON (optional).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RemoteEvalArgs {
    /// Full URL of the completions route.
    #[arg(long)]
    url: String,
    #[arg(long)]
    model: Option<String>,
    /// Environment variable holding the bearer token.
    #[arg(long)]
    auth_env: Option<String>,
    #[arg(long)]
    prompt: String,
    #[arg(long, default_value = "greedy")]
    strategy: StrategySpec,
    #[arg(long, default_value_t = 16)]
    max_len: usize,
    /// Requested logprob depth per position.
    #[arg(long, default_value_t = 5)]
    depth: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 30)]
    timeout_secs: u64,
    #[arg(long, default_value_t = 3)]
    retries: u32,
    /// Write the full rollout record as JSON (only on success).
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<(), Box<dyn std::error::Error>> {
    match cli.command {
        Command::GenWorld(args) => gen_world(args),
        Command::Sweep(args) => sweep(args),
        Command::VerifyTheorem(args) => verify_theorem(args),
        Command::Curves(args) => curves(args),
        Command::Gdrm(args) => gdrm(args),
        Command::RemoteEval(args) => remote_eval(args),
    }
}

fn gen_world(args: GenWorldArgs) -> Result<(), Box<dyn std::error::Error>> {
    let world = if args.reasoning {
        let spec = ReasoningWorldSpec {
            num_instances: args.instances.unwrap_or(100),
            answer_set_size: args.answers,
            num_traces: args.traces,
            post_confidence: args.confidence,
            head_heaviness: 1.5,
        };
        generate_reasoning_world(&spec, args.seed)?
    } else {
        let preset = args.preset.ok_or_else(|| {
            format!("--preset or --reasoning required; presets: {}", PRESET_NAMES.join(", "))
        })?;
        let mut spec = world_presets(&preset)?;
        if let Some(n) = args.instances {
            spec.num_instances = n;
        }
        generate_world(&spec, args.seed)?
    };
    world.save(&args.out)?;
    println!(
        "wrote {} ({} instances, seed {})",
        args.out.display(),
        world.instances.len(),
        world.seed
    );
    Ok(())
}

fn sweep(args: SweepArgs) -> Result<(), Box<dyn std::error::Error>> {
    let cfg = if let Some(path) = &args.config {
        let json = std::fs::read_to_string(path)?;
        SweepConfig::from_json(&json)?
    } else {
        if args.grid.is_empty() {
            return Err("--grid (or --config) is required".into());
        }
        let mode = match args.mode.as_str() {
            "exact" => SweepMode::Exact,
            "mc" | "monte_carlo" => SweepMode::MonteCarlo,
            other => return Err(format!("unknown mode {other:?}; use exact or mc").into()),
        };
        SweepConfig {
            version: CONFIG_VERSION.to_string(),
            world: args.world.source()?,
            grid: args.grid.clone(),
            temperatures: args.temps.clone(),
            seeds: args.seeds.clone(),
            mode,
            samples: args.samples,
            out_dir: None,
        }
    };
    let out_dir = args
        .out
        .clone()
        .or_else(|| cfg.out_dir.clone())
        .unwrap_or_else(|| PathBuf::from("."));

    let world = cfg.world.load()?;
    let report = run_sweep_on(&world, &cfg)?;
    let csv_path = emit_report(&report, &out_dir, ReportFormat::Csv)?;
    let json_path = emit_report(&report, &out_dir, ReportFormat::Json)?;
    println!(
        "{} rows ({} instances); wrote {} and {}",
        report.rows.len(),
        world.instances.len(),
        csv_path.display(),
        json_path.display()
    );
    Ok(())
}

fn verify_theorem(args: VerifyArgs) -> Result<(), Box<dyn std::error::Error>> {
    let world = args.world.load()?;
    let grid = if args.grid.is_empty() {
        let min_vocab = world
            .instances
            .iter()
            .map(|i| i.model.vocabulary().size())
            .min()
            .ok_or("world has no instances")?;
        default_grid(min_vocab)
    } else {
        args.grid.clone()
    };
    let report = verify_greedy_optimality(&world, &grid)?;
    if let Some(dir) = &args.out {
        std::fs::create_dir_all(dir)?;
        let path = dir.join("theorem.json");
        std::fs::write(&path, serde_json::to_string_pretty(&report)?)?;
        eprintln!("wrote {}", path.display());
    }
    println!(
        "{}: J(greedy) = {:.6}, best stochastic J = {:.6} over {} grid strategies",
        report.verdict.as_str(),
        report.j_greedy,
        report.best_j(),
        report.records.len()
    );
    Ok(())
}

fn curves(args: CurvesArgs) -> Result<(), Box<dyn std::error::Error>> {
    let world = args.world.load()?;
    let k_max = args.k_max.unwrap_or_else(|| {
        world
            .instances
            .iter()
            .map(|i| i.space.len())
            .min()
            .unwrap_or(2)
    });
    emit_rank_curves(&world, k_max, &args.out)?;
    println!("wrote {} (k = 1..={k_max})", args.out.display());
    Ok(())
}

fn gdrm(args: GdrmArgs) -> Result<(), Box<dyn std::error::Error>> {
    let world = args.world.load()?;
    let cfg = GdrmConfig::new(args.reasoning, args.max_think, args.max_answer)?;

    let mut correct_mass = 0.0;
    let mut truncated = 0usize;
    let mut records = Vec::new();
    for inst in &world.instances {
        let child = decodelab::seeding::child_seed(args.seed, &args.reasoning.to_string(), inst.id.id());
        let mut rng = ChaCha8Rng::seed_from_u64(child);
        let res = gdrm_decode(&inst.model, &inst.id, &cfg, &inst.space, &mut rng)?;
        correct_mass += inst.p_true.get(&res.answer);
        truncated += res.truncated_reasoning as usize;
        records.push(serde_json::json!({
            "id": inst.id.id(),
            "answer": res.answer.render(),
            "truncated_reasoning": res.truncated_reasoning,
            "reasoning_len": res.reasoning.len(),
        }));
    }
    let n = world.instances.len();
    println!(
        "decoded {n} instances: mean ground-truth mass {:.4}, {truncated} truncated traces",
        correct_mass / n as f64
    );
    match gdrm_objective(&world, &cfg) {
        Ok(j) => println!("exact two-phase objective (trace-marginalized): {j:.6}"),
        Err(e) => eprintln!("exact objective unavailable: {e}"),
    }
    if let Some(dir) = &args.out {
        std::fs::create_dir_all(dir)?;
        let path = dir.join("gdrm.json");
        std::fs::write(&path, serde_json::to_string_pretty(&records)?)?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn remote_eval(args: RemoteEvalArgs) -> Result<(), Box<dyn std::error::Error>> {
    let endpoint = RemoteEndpoint {
        url: args.url.clone(),
        model: args.model.clone(),
        auth_env: args.auth_env.clone(),
        top_logprobs: args.depth,
        timeout: Duration::from_secs(args.timeout_secs),
        max_retries: args.retries,
        stop_token: "<|endoftext|>".to_string(),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let rollout = remote_rollout(&endpoint, &args.prompt, &args.strategy, &mut rng, args.max_len)?;
    let warnings = rollout.steps.iter().filter(|s| s.coverage_warning).count();
    println!("{}", rollout.text);
    if warnings > 0 {
        eprintln!(
            "coverage warning: {warnings}/{} steps may have needed tokens beyond depth {}",
            rollout.steps.len(),
            args.depth
        );
    }
    // written only after a fully successful rollout
    if let Some(path) = &args.out {
        std::fs::write(path, serde_json::to_string_pretty(&rollout)?)?;
        eprintln!("wrote {}", path.display());
    }
    Ok(())
}
