//! `xmopkit` command-line front end.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use xmopkit::collision::{gen_collision_dataset, CollisionDataConfig, SceneConfig};
use xmopkit::dataset::{config_hash, DatasetHeader, TOOL_NAME};
use xmopkit::mpc::{evaluate, evaluate_classical, scripted_expert, DiffusionPolicy, GeometricScorer, Metrics, RolloutConfig};
use xmopkit::planner::{gen_demos, DemoConfig, DemoDataset, PlannerConfig};
use xmopkit::policy::{train_tiny, Checkpoint, TrainConfig};
use xmopkit::robot::{compile_robot, export_urdf, sample_template, Family, Strategy, TemplateFile};

#[derive(Parser)]
#[command(name = "xmopkit", version, about = "Cross-embodiment motion planning toolkit")]
struct Cli {
    /// JSON file of defaults, overridden by any flag given.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a robot template and write it as JSON and URDF.
    SampleRobot(SampleRobotArgs),
    /// Generate demonstrations with the classical pipeline.
    GenDemos(GenDemosArgs),
    /// Build a class-balanced collision dataset from demonstrations.
    GenCollisionData(GenCollisionArgs),
    /// Train the tiny denoiser on demonstrations.
    TrainToy(TrainToyArgs),
    /// Evaluate a policy on the problems of a demonstration file.
    Benchmark(BenchmarkArgs),
}

#[derive(Args)]
struct SampleRobotArgs {
    #[arg(long)]
    family: Option<Family>,
    #[arg(long)]
    strategy: Option<Strategy>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GenDemosArgs {
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    family: Option<Family>,
    #[arg(long)]
    strategy: Option<Strategy>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    workers: Option<usize>,
    /// `empty`, `clutter`, or a JSON scene-generator config file.
    #[arg(long)]
    scene_config: Option<String>,
    /// Use the robot in this template file for every demonstration.
    #[arg(long)]
    robot: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GenCollisionArgs {
    #[arg(long)]
    demos: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TrainToyArgs {
    #[arg(long)]
    demos: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    workers: Option<usize>,
    /// Output directory for `checkpoint.json` and `loss.csv`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
enum PolicyKind {
    Checkpoint,
    ScriptedExpert,
    Classical,
}

#[derive(Args)]
struct BenchmarkArgs {
    /// Demonstration file whose records define the problems.
    #[arg(long)]
    problems: Option<PathBuf>,
    #[arg(long, value_enum)]
    policy: Option<PolicyKind>,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Evaluate only the first `n` problems.
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    workers: Option<usize>,
    /// Per-problem metrics CSV; the summary goes next to it.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct SampleRobotSettings {
    family: Option<Family>,
    strategy: Option<Strategy>,
    seed: Option<u64>,
    out: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct GenDemosSettings {
    n: Option<usize>,
    family: Option<Family>,
    strategy: Option<Strategy>,
    seed: Option<u64>,
    workers: Option<usize>,
    scene_config: Option<String>,
    robot: Option<PathBuf>,
    out: Option<PathBuf>,
    planner: Option<PlannerConfig>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct GenCollisionSettings {
    demos: Option<PathBuf>,
    seed: Option<u64>,
    out: Option<PathBuf>,
    collision: Option<CollisionDataConfig>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct TrainToySettings {
    demos: Option<PathBuf>,
    epochs: Option<usize>,
    seed: Option<u64>,
    workers: Option<usize>,
    out: Option<PathBuf>,
    train: Option<TrainConfig>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct BenchmarkSettings {
    problems: Option<PathBuf>,
    policy: Option<PolicyKind>,
    checkpoint: Option<PathBuf>,
    n: Option<usize>,
    seed: Option<u64>,
    workers: Option<usize>,
    out: Option<PathBuf>,
    rollout: Option<RolloutConfig>,
    planner: Option<PlannerConfig>,
}

/// Usage problems map to exit code 1, everything else to 2.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
struct UsageError(String);

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn load_settings<T: DeserializeOwned + Default>(path: Option<&Path>) -> anyhow::Result<T> {
    let Some(path) = path else { return Ok(T::default()) };
    let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| usage(format!("config {}: {e}", path.display())))
}

fn required<T>(v: Option<T>, name: &str) -> anyhow::Result<T> {
    v.ok_or_else(|| usage(format!("missing required option --{name}")))
}

fn pool(workers: usize) -> anyhow::Result<rayon::ThreadPool> {
    if workers == 0 {
        return Err(usage("--workers must be at least 1"));
    }
    Ok(rayon::ThreadPoolBuilder::new().num_threads(workers).build()?)
}

fn create(path: &Path) -> anyhow::Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

fn read_demos(path: &Path) -> anyhow::Result<DemoDataset> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    Ok(DemoDataset::read(BufReader::new(f))?)
}

/// `# key=value …` line opening every CSV the tool writes.
fn csv_metadata<W: Write>(w: &mut W, header: &DatasetHeader) -> std::io::Result<()> {
    writeln!(
        w,
        "# tool={} version={} kind={} config_hash={} seed={}",
        header.tool, header.version, header.kind, header.config_hash, header.seed
    )
}

fn sample_robot(a: SampleRobotArgs, s: SampleRobotSettings) -> anyhow::Result<()> {
    let family = required(a.family.or(s.family), "family")?;
    let strategy = a.strategy.or(s.strategy).unwrap_or(Strategy::Normal);
    let seed = a.seed.or(s.seed).unwrap_or(0);
    let out = a.out.or(s.out).unwrap_or_else(|| PathBuf::from("."));
    let template = sample_template(family, strategy, seed)?;
    let robot = compile_robot(&template)?;
    let mut file = TemplateFile::new(&template, Some(family), Some(strategy), Some(seed));
    let header = DatasetHeader::new("robot", &(family, strategy), seed)?;
    file.header = Some(serde_json::to_value(&header)?);
    fs::create_dir_all(&out)?;
    let stem = format!("{family}_{strategy}_{seed}");
    let json_path = out.join(format!("{stem}.json"));
    let urdf_path = out.join(format!("{stem}.urdf"));
    fs::write(&json_path, file.to_json()?)?;
    fs::write(&urdf_path, export_urdf(&robot, Some(&file), &stem)?)?;
    println!("wrote {} and {}", json_path.display(), urdf_path.display());
    Ok(())
}

fn scene_config(spec: Option<&str>) -> anyhow::Result<SceneConfig> {
    match spec {
        None | Some("empty") => Ok(SceneConfig::empty()),
        Some("clutter") => Ok(SceneConfig::default()),
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading scene config {path}"))?;
            let cfg: SceneConfig = serde_json::from_str(&text).map_err(|e| usage(format!("scene config {path}: {e}")))?;
            cfg.validate().map_err(|e| usage(e.to_string()))?;
            Ok(cfg)
        }
    }
}

fn gen_demos_cmd(a: GenDemosArgs, s: GenDemosSettings) -> anyhow::Result<()> {
    let n = required(a.n.or(s.n), "n")?;
    let family = required(a.family.or(s.family), "family")?;
    let out = required(a.out.or(s.out), "out")?;
    let mut cfg = DemoConfig::new(
        n,
        family,
        a.strategy.or(s.strategy).unwrap_or(Strategy::Normal),
        scene_config(a.scene_config.as_deref().or(s.scene_config.as_deref()))?,
    );
    if let Some(p) = s.planner {
        cfg.planner = p;
    }
    if let Some(path) = a.robot.or(s.robot) {
        let t = TemplateFile::from_json(&fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?)?;
        if t.template()?.dof() != family.dof() {
            return Err(usage(format!("robot in {} is not a {family}", path.display())));
        }
        cfg.embodiment = Some(t);
    }
    let seed = a.seed.or(s.seed).unwrap_or(0);
    let ds = gen_demos(&cfg, seed, a.workers.or(s.workers).unwrap_or(1).max(1))?;
    ds.write(create(&out)?)?;
    let partial = if ds.is_partial(n) { " (partial dataset)" } else { "" };
    println!("demos: {} succeeded, {} failed of {n} requested{partial}", ds.records.len(), n - ds.records.len());
    Ok(())
}

fn gen_collision_cmd(a: GenCollisionArgs, s: GenCollisionSettings) -> anyhow::Result<()> {
    let demos = read_demos(&required(a.demos.or(s.demos), "demos")?)?;
    let out = required(a.out.or(s.out), "out")?;
    let cfg = s.collision.unwrap_or_default();
    let ds = gen_collision_dataset(&demos.records, a.seed.or(s.seed).unwrap_or(0), &cfg)?;
    ds.write(create(&out)?)?;
    println!("collision records: {} ({} positive)", ds.records.len(), ds.positives());
    Ok(())
}

fn train_toy_cmd(a: TrainToyArgs, s: TrainToySettings) -> anyhow::Result<()> {
    let demos = read_demos(&required(a.demos.or(s.demos), "demos")?)?;
    let out = required(a.out.or(s.out), "out")?;
    let mut cfg = s.train.unwrap_or_default();
    if let Some(e) = a.epochs.or(s.epochs) {
        cfg.epochs = e;
    }
    let seed = a.seed.or(s.seed).unwrap_or(0);
    let report = pool(a.workers.or(s.workers).unwrap_or(1))?.install(|| train_tiny(&demos.records, &cfg, seed))?;
    fs::create_dir_all(&out)?;
    report.checkpoint.write(create(&out.join("checkpoint.json"))?)?;
    let mut w = create(&out.join("loss.csv"))?;
    csv_metadata(&mut w, &DatasetHeader::new("loss", &cfg, seed)?)?;
    report.write_loss_csv(&mut w)?;
    w.flush()?;
    println!("loss {:.5} -> {:.5} over {} epochs", report.initial_loss(), report.final_smoothed_loss(), cfg.epochs);
    Ok(())
}

#[derive(Serialize)]
struct BenchmarkIdentity<'a> {
    policy: PolicyKind,
    problems_hash: &'a str,
    checkpoint: Option<String>,
    rollout: &'a RolloutConfig,
}

fn benchmark_cmd(a: BenchmarkArgs, s: BenchmarkSettings) -> anyhow::Result<()> {
    let policy = required(a.policy.or(s.policy), "policy")?;
    let demos = read_demos(&required(a.problems.or(s.problems), "problems")?)?;
    let out = required(a.out.or(s.out), "out")?;
    let seed = a.seed.or(s.seed).unwrap_or(0);
    let count = a.n.or(s.n).unwrap_or(demos.records.len()).min(demos.records.len());
    let records = &demos.records[..count];
    let problems = records.iter().map(|r| r.problem()).collect::<xmopkit::Result<Vec<_>>>()?;
    let config = s.rollout.unwrap_or_default();
    config.validate().map_err(|e| usage(e.to_string()))?;
    let planner = s.planner.unwrap_or_default();
    let checkpoint_path = a.checkpoint.or(s.checkpoint);
    let scorer = GeometricScorer { points: config.score_points };
    let metrics: Metrics = pool(a.workers.or(s.workers).unwrap_or(1))?.install(|| -> anyhow::Result<Metrics> {
        Ok(match policy {
            PolicyKind::Classical => evaluate_classical(&problems, &planner, seed)?,
            PolicyKind::ScriptedExpert => evaluate(
                &problems,
                |i, p| scripted_expert(&p.robot()?, &p.frames, &records[i].waypoints),
                &scorer,
                &config,
                seed,
            )?,
            PolicyKind::Checkpoint => {
                let path = checkpoint_path.as_deref().ok_or_else(|| usage("--policy checkpoint needs --checkpoint"))?;
                let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
                let ckpt = Checkpoint::read(BufReader::new(f))?;
                let policy = DiffusionPolicy::new(ckpt.layout, ckpt.schedule()?, ckpt.denoiser(true)?);
                evaluate(&problems, |_, _| Ok(&policy), &scorer, &config, seed)?
            }
        })
    })?;
    let identity = BenchmarkIdentity {
        policy,
        problems_hash: &demos.header.config_hash,
        checkpoint: checkpoint_path.filter(|_| policy == PolicyKind::Checkpoint).map(|p| p.display().to_string()),
        rollout: &config,
    };
    let header = DatasetHeader {
        tool: TOOL_NAME.to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        config_hash: config_hash(&identity)?,
        seed,
        kind: "metrics".to_string(),
    };
    let mut w = create(&out)?;
    csv_metadata(&mut w, &header)?;
    metrics.write_csv(&mut w)?;
    w.flush()?;
    let summary_path = out.with_extension("summary.csv");
    let mut w = create(&summary_path)?;
    csv_metadata(&mut w, &DatasetHeader { kind: "summary".to_string(), ..header })?;
    metrics.write_summary_csv(&mut w)?;
    w.flush()?;
    println!("{policy:?}: SR {:.1}% over {} problems", metrics.success_rate(), metrics.rows.len());
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let cfg = cli.config.as_deref();
    match cli.command {
        Command::SampleRobot(a) => sample_robot(a, load_settings(cfg)?),
        Command::GenDemos(a) => gen_demos_cmd(a, load_settings(cfg)?),
        Command::GenCollisionData(a) => gen_collision_cmd(a, load_settings(cfg)?),
        Command::TrainToy(a) => train_toy_cmd(a, load_settings(cfg)?),
        Command::Benchmark(a) => benchmark_cmd(a, load_settings(cfg)?),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("XMOPKIT_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.is::<UsageError>() => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
