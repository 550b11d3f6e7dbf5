use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};

use knotsim::env::{EnvConfig, KnotEnv, Split, Task, TaskSpec};
use knotsim::geometry::{Action, KnotConfiguration, WorldState};
use knotsim::harness::{
    evaluate, export_observation, generalization_matrix, rollout, Episode, HarnessError,
    Policy, PolicyFactory, RandomPolicy, ReplayPolicy, ZeroPolicy,
};
use knotsim::physics::{PhysicsError, SimParams};
use knotsim::pool::{
    generate_pool, locate_pool, ConfigPool, GenerationOptions, PoolError, DEFAULT_COUNTS, TRAIN_FRACTION,
};
use knotsim::render::render_observation;

#[derive(Parser)]
#[command(name = "knotsim", version, about = "Knot-tying environment tools")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate and verify a configuration pool.
    GenPool(GenPoolArgs),
    /// Run one episode and print its step log.
    Rollout(RolloutArgs),
    /// Evaluate a policy over many seeded episodes.
    Eval(EvalArgs),
    /// Evaluate a policy over a grid of crossing settings on the test split.
    GenMatrix(MatrixArgs),
    /// Write an observation as PNG.
    Render(RenderArgs),
    /// Print the Gauss code of a configuration file.
    Gauss(GaussArgs),
}

#[derive(Args)]
struct Common {
    /// Master seed for all randomness.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Physics parameter file (`key = value` lines).
    #[arg(long)]
    params: Option<PathBuf>,
}

#[derive(Args)]
struct PoolArg {
    /// Pool directory; defaults to $KNOTSIM_DATA/pool.
    #[arg(long)]
    pool: Option<PathBuf>,
}

#[derive(Args)]
struct TaskArgs {
    #[arg(long, value_parser = parse_task)]
    task: Task,
    /// Crossing setting; omit for the task's full range.
    #[arg(long)]
    x: Option<u32>,
    #[arg(long, value_parser = parse_split, default_value = "train")]
    split: Split,
}

#[derive(Clone, Copy, ValueEnum)]
enum PolicyKind {
    Random,
    Zero,
    Replay,
}

#[derive(Args)]
struct PolicyArgs {
    #[arg(long, value_enum, default_value = "random")]
    policy: PolicyKind,
    /// Action source for the replay policy: an episode log or one
    /// whitespace-separated 6-vector per line.
    #[arg(long)]
    actions: Option<PathBuf>,
}

#[derive(Args)]
struct GenPoolArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    out: PathBuf,
    /// Environment-step budget per crossing count.
    #[arg(long, default_value_t = 1_000_000)]
    budget: u64,
}

#[derive(Args)]
struct RolloutArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    pool: PoolArg,
    #[command(flatten)]
    task: TaskArgs,
    #[command(flatten)]
    policy: PolicyArgs,
    /// Log file; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    pool: PoolArg,
    #[command(flatten)]
    task: TaskArgs,
    #[command(flatten)]
    policy: PolicyArgs,
    #[arg(long, default_value_t = 256)]
    episodes: usize,
    #[arg(long, default_value_t = default_workers())]
    workers: usize,
}

#[derive(Args)]
struct MatrixArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    pool: PoolArg,
    #[arg(long, value_parser = parse_task)]
    task: Task,
    #[arg(long, value_delimiter = ',', default_value = "2,3,4")]
    train_x: Vec<u32>,
    #[arg(long, value_delimiter = ',', default_value = "2,3,4")]
    eval_x: Vec<u32>,
    #[command(flatten)]
    policy: PolicyArgs,
    #[arg(long, default_value_t = 128)]
    episodes: usize,
    #[arg(long, default_value_t = default_workers())]
    workers: usize,
}

#[derive(Args)]
struct RenderArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    pool: PoolArg,
    #[arg(long, value_parser = parse_task, required_unless_present = "config")]
    task: Option<Task>,
    #[arg(long)]
    x: Option<u32>,
    #[arg(long, value_parser = parse_split, default_value = "train")]
    split: Split,
    /// Render this configuration in both panes instead of a reset state.
    #[arg(long, conflicts_with = "task")]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct GaussArgs {
    #[arg(long)]
    config: PathBuf,
}

fn default_workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

fn parse_task(s: &str) -> Result<Task, String> {
    s.parse()
}

fn parse_split(s: &str) -> Result<Split, String> {
    s.parse()
}

enum Failure {
    Args(String),
    Data(String),
    Diverged(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Args(_) => 2,
            Failure::Data(_) => 3,
            Failure::Diverged(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Args(m) | Failure::Data(m) | Failure::Diverged(m) => m,
        }
    }
}

impl From<PoolError> for Failure {
    fn from(e: PoolError) -> Self {
        match e {
            PoolError::Physics(PhysicsError::SimulationDiverged { .. }) => Failure::Diverged(e.to_string()),
            other => Failure::Data(other.to_string()),
        }
    }
}

impl From<HarnessError> for Failure {
    fn from(e: HarnessError) -> Self {
        Failure::Data(e.to_string())
    }
}

impl From<knotsim::env::EnvError> for Failure {
    fn from(e: knotsim::env::EnvError) -> Self {
        Failure::Data(e.to_string())
    }
}

fn io_failure(path: &Path, e: impl std::fmt::Display) -> Failure {
    Failure::Data(format!("{}: {e}", path.display()))
}

fn load_params(path: Option<&Path>) -> Result<SimParams, Failure> {
    let Some(path) = path else {
        return Ok(SimParams::default());
    };
    let text = fs::read_to_string(path).map_err(|e| io_failure(path, e))?;
    text.parse().map_err(|e| Failure::Args(format!("{}: {e}", path.display())))
}

fn env_config(common: &Common) -> Result<EnvConfig, Failure> {
    Ok(EnvConfig {
        params: load_params(common.params.as_deref())?,
        ..EnvConfig::default()
    })
}

fn load_pool(arg: &PoolArg) -> Result<Arc<ConfigPool>, Failure> {
    let dir = locate_pool(arg.pool.as_deref())?;
    Ok(Arc::new(ConfigPool::load(dir)?))
}

fn task_spec(t: &TaskArgs) -> TaskSpec {
    match t.x {
        Some(x) => TaskSpec::for_setting(t.task, x, t.split),
        None => TaskSpec::full(t.task, t.split),
    }
}

fn read_actions(path: &Path) -> Result<Vec<Action>, Failure> {
    let text = fs::read_to_string(path).map_err(|e| io_failure(path, e))?;
    if text.trim_start().starts_with('{') {
        let log = Episode::parse_ndjson(&text).map_err(|e| Failure::Args(format!("{}: {e}", path.display())))?;
        return Ok(ReplayPolicy::from_log(&log).actions().to_vec());
    }
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let values: Result<Vec<f64>, _> = line.split_whitespace().map(str::parse).collect();
        match values {
            Ok(v) if v.len() == 6 => out.push(Action::from_array([v[0], v[1], v[2], v[3], v[4], v[5]])),
            _ => {
                return Err(Failure::Args(format!(
                    "{}:{}: expected six numbers",
                    path.display(),
                    i + 1
                )))
            }
        }
    }
    Ok(out)
}

fn load_policy_actions(args: &PolicyArgs) -> Result<Vec<Action>, Failure> {
    match (args.policy, args.actions.as_deref()) {
        (PolicyKind::Replay, Some(path)) => read_actions(path),
        (PolicyKind::Replay, None) => Err(Failure::Args("--policy replay needs --actions".into())),
        _ => Ok(Vec::new()),
    }
}

fn make_factory(kind: PolicyKind, actions: Vec<Action>) -> Box<PolicyFactory<'static>> {
    match kind {
        PolicyKind::Random => Box::new(|s| Box::new(RandomPolicy::new(s)) as Box<dyn Policy>),
        PolicyKind::Zero => Box::new(|_| Box::new(ZeroPolicy) as Box<dyn Policy>),
        PolicyKind::Replay => Box::new(move |_| Box::new(ReplayPolicy::new(actions.clone())) as Box<dyn Policy>),
    }
}

fn policy_factory(args: &PolicyArgs) -> Result<Box<PolicyFactory<'static>>, Failure> {
    Ok(make_factory(args.policy, load_policy_actions(args)?))
}

fn write_output(path: Option<&Path>, text: &str) -> Result<(), Failure> {
    match path {
        Some(p) => fs::write(p, text).map_err(|e| io_failure(p, e)),
        None => io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| Failure::Data(format!("stdout: {e}"))),
    }
}

fn gen_pool(args: GenPoolArgs) -> Result<(), Failure> {
    let params = load_params(args.common.params.as_deref())?;
    let options = GenerationOptions { step_budget: args.budget, ..GenerationOptions::default() };
    let pool = generate_pool(&DEFAULT_COUNTS, &params, args.common.seed, &options, TRAIN_FRACTION)?;
    pool.save(&args.out)?;
    // Reload to verify every stored code.
    let back = ConfigPool::load(&args.out)?;
    for (x, split, entries) in back.groups() {
        println!("x={x} split={split} count={}", entries.len());
    }
    Ok(())
}

fn run_rollout(args: RolloutArgs) -> Result<(), Failure> {
    let config = env_config(&args.common)?;
    let pool = load_pool(&args.pool)?;
    let factory = policy_factory(&args.policy)?;
    let mut env = KnotEnv::new(task_spec(&args.task), pool, config);
    let mut policy = factory(args.common.seed);
    let episode = rollout(&mut env, policy.as_mut(), args.common.seed)?;
    write_output(args.out.as_deref(), &episode.to_ndjson())
}

fn run_eval(args: EvalArgs) -> Result<(), Failure> {
    if args.episodes == 0 {
        return Err(Failure::Args("--episodes must be at least 1".into()));
    }
    let config = env_config(&args.common)?;
    let pool = load_pool(&args.pool)?;
    let factory = policy_factory(&args.policy)?;
    let spec = task_spec(&args.task);
    let report = evaluate(
        &spec,
        args.task.x,
        &pool,
        &config,
        factory.as_ref(),
        args.episodes,
        args.common.seed,
        args.workers,
    )?;
    println!("{report}");
    println!("{}", report.record(true));
    Ok(())
}

fn run_matrix(args: MatrixArgs) -> Result<(), Failure> {
    if args.episodes == 0 {
        return Err(Failure::Args("--episodes must be at least 1".into()));
    }
    let config = env_config(&args.common)?;
    let pool = load_pool(&args.pool)?;
    let kind = args.policy.policy;
    let actions = load_policy_actions(&args.policy)?;
    // Every row gets the same policy; nothing is trained here.
    let rows = move |_: u32| make_factory(kind, actions.clone());
    let matrix = generalization_matrix(
        args.task,
        &args.train_x,
        &args.eval_x,
        &rows,
        &pool,
        &config,
        args.episodes,
        args.common.seed,
        args.workers,
    )?;
    print!("{:>8}", "train\\eval");
    for x in &args.eval_x {
        print!(" {x:>7}");
    }
    println!();
    for (tx, row) in args.train_x.iter().zip(&matrix) {
        print!("{tx:>10}");
        for r in row {
            print!(" {:>7.3}", r.success_rate);
        }
        println!();
    }
    for (tx, row) in args.train_x.iter().zip(&matrix) {
        for r in row {
            println!("train_x={tx} {}", r.record(true));
        }
    }
    Ok(())
}

fn run_render(args: RenderArgs) -> Result<(), Failure> {
    if let Some(path) = &args.config {
        let config = KnotConfiguration::load(path).map_err(|e| io_failure(path, e))?;
        let state = WorldState::at_rest(config.clone(), config);
        return render_observation(&state)
            .save_png(&args.out)
            .map_err(|e| io_failure(&args.out, e));
    }
    let task = args.task.expect("clap requires --task without --config");
    let spec = match args.x {
        Some(x) => TaskSpec::for_setting(task, x, args.split),
        None => TaskSpec::full(task, args.split),
    };
    let config = env_config(&args.common)?;
    let pool = load_pool(&args.pool)?;
    let info = export_observation(&spec, &pool, &config, args.common.seed, &args.out)?;
    println!("current={} goal={}", info.gauss_code_current, info.gauss_code_goal);
    Ok(())
}

fn run_gauss(args: GaussArgs) -> Result<(), Failure> {
    let config = KnotConfiguration::load(&args.config).map_err(|e| io_failure(&args.config, e))?;
    match knotsim::gauss::compute_gauss_code(&config) {
        Ok(code) => {
            println!("{code}");
            Ok(())
        }
        Err(e) => Err(Failure::Data(format!("{}: {e}", args.config.display()))),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::GenPool(a) => gen_pool(a),
        Command::Rollout(a) => run_rollout(a),
        Command::Eval(a) => run_eval(a),
        Command::GenMatrix(a) => run_matrix(a),
        Command::Render(a) => run_render(a),
        Command::Gauss(a) => run_gauss(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("knotsim: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
