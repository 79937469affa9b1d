//! Configuration resolution: one key table serves command-line flags,
//! `key = value` config files, and the emitted run manifest, so a manifest
//! can be fed straight back through `--config`.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;

use sobolev_td::train::{Algo, LossPath, Method, ModelKind};

pub const METRICS_HEADER: &str = "step,seed,q_mse,grad_a_mse,policy_err,mc_return";
pub const SUMMARY_HEADER: &str =
    "model,method,q_mse_mean,q_mse_std,grad_a_mse_mean,grad_a_mse_std,policy_err_mean,policy_err_std";
pub const SLICES_HEADER: &str = "step,s,a,q_sobolev,q_baseline,q_star";
/// Environment variable whose integer value offsets every seed in a plan.
pub const SEED_OFFSET_VAR: &str = "SOBOLEV_TD_SEED_OFFSET";
/// Hidden-layer widths used whenever `model = mlp`.
pub const MLP_HIDDEN: [usize; 3] = [128, 128, 128];

#[derive(Debug, Clone, PartialEq)]
pub enum CliError {
    /// Bad invocation: unknown key, type mismatch, constraint violation.
    Usage(String),
    /// Failure while executing a valid plan.
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "error: usage: {m}"),
            CliError::Runtime(m) => write!(f, "error: {m}"),
        }
    }
}

impl From<sobolev_td::Error> for CliError {
    fn from(e: sobolev_td::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Run,
    Table1,
    Slices,
}

impl Command {
    pub fn as_str(&self) -> &'static str {
        match self {
            Command::Run => "run",
            Command::Table1 => "table1",
            Command::Slices => "slices",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnvId {
    Toy1d,
    Lqr,
}

impl EnvId {
    pub fn as_str(&self) -> &'static str {
        match self {
            EnvId::Toy1d => "toy1d",
            EnvId::Lqr => "lqr",
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Kind {
    UInt,
    U64,
    Float,
    Text,
    Choice(&'static [&'static str]),
    UIntList,
    FloatList,
}

struct Key {
    name: &'static str,
    kind: Kind,
    /// None means the default is derived from other keys after parsing.
    default: Option<&'static str>,
    help: &'static str,
}

/// The single source of truth for configuration keys. Flag spelling is the
/// key name with underscores replaced by hyphens; file and manifest lines
/// use the name as written here.
const KEYS: &[Key] = &[
    Key { name: "env", kind: Kind::Choice(&["toy1d", "lqr"]), default: Some("toy1d"), help: "task environment" },
    Key { name: "algo", kind: Kind::Choice(&["q_learning", "actor_critic"]), default: None, help: "training algorithm (derived from env when omitted)" },
    Key { name: "method", kind: Kind::Choice(&["baseline", "sobolev"]), default: Some("sobolev"), help: "critic loss: value-only baseline or value+gradient" },
    Key { name: "model", kind: Kind::Choice(&["quadratic", "mlp"]), default: Some("quadratic"), help: "critic architecture" },
    Key { name: "loss_path", kind: Kind::Choice(&["tangent", "value_only"]), default: Some("tangent"), help: "gradient engine for the critic update" },
    Key { name: "seeds", kind: Kind::UInt, default: Some("5"), help: "number of seeds in the plan" },
    Key { name: "seed", kind: Kind::U64, default: Some("0"), help: "base seed; run i uses seed+i" },
    Key { name: "steps", kind: Kind::UInt, default: Some("20000"), help: "training steps per run" },
    Key { name: "lr", kind: Kind::Float, default: Some("1e-4"), help: "critic learning rate" },
    Key { name: "lr_actor", kind: Kind::Float, default: Some("1e-3"), help: "actor learning rate (actor_critic only)" },
    Key { name: "batch", kind: Kind::UInt, default: Some("50"), help: "batch size" },
    Key { name: "gamma", kind: Kind::Float, default: Some("0.9"), help: "discount factor" },
    Key { name: "lambda_s", kind: Kind::Float, default: None, help: "state-gradient weight (default 1 for sobolev, 0 for baseline)" },
    Key { name: "lambda_a", kind: Kind::Float, default: None, help: "action-gradient weight (default 1 for sobolev, 0 for baseline)" },
    Key { name: "polyak_rho", kind: Kind::Float, default: Some("0.995"), help: "target-network retention per step" },
    Key { name: "warmup_steps", kind: Kind::UInt, default: Some("0"), help: "linear ramp length for the gradient weights" },
    Key { name: "grid_points", kind: Kind::UInt, default: Some("100"), help: "action-grid nodes for grid-max targets" },
    Key { name: "eval_every", kind: Kind::UInt, default: Some("1000"), help: "metric cadence; 0 = initial and final only" },
    Key { name: "replay_capacity", kind: Kind::UInt, default: Some("10000"), help: "replay ring size (actor_critic only)" },
    Key { name: "explore_sigma", kind: Kind::Float, default: Some("0.3"), help: "exploration noise std (actor_critic only)" },
    Key { name: "episode_len", kind: Kind::UInt, default: Some("20"), help: "steps between episode resets (actor_critic only)" },
    Key { name: "out", kind: Kind::Text, default: Some("runs"), help: "output directory" },
    Key { name: "jobs", kind: Kind::UInt, default: Some("1"), help: "max concurrent seed runs" },
    Key { name: "slice_states", kind: Kind::FloatList, default: Some("0,0.5"), help: "states for slice dumps" },
    Key { name: "slice_steps", kind: Kind::UIntList, default: Some("200,400"), help: "checkpoint steps for slice dumps" },
];

fn find_key(name: &str) -> Option<&'static Key> {
    KEYS.iter().find(|k| k.name == name)
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Provenance {
    Default,
    File,
    Flag,
}

/// Fully resolved invocation.
#[derive(Debug, Clone, PartialEq)]
pub struct CliOptions {
    pub command: Command,
    pub env: EnvId,
    pub algo: Algo,
    pub method: Method,
    pub model: ModelKind,
    pub loss_path: LossPath,
    pub seeds: usize,
    pub seed_base: u64,
    /// Offset taken from the environment; applied when listing effective seeds.
    pub seed_offset: i64,
    pub steps: usize,
    pub lr: f64,
    pub lr_actor: f64,
    pub batch: usize,
    pub gamma: f64,
    pub lambda_s: f64,
    pub lambda_a: f64,
    pub polyak_rho: f64,
    pub warmup_steps: usize,
    pub grid_points: usize,
    pub eval_every: usize,
    pub replay_capacity: usize,
    pub explore_sigma: f64,
    pub episode_len: usize,
    pub out: PathBuf,
    pub jobs: usize,
    pub slice_states: Vec<f64>,
    pub slice_steps: Vec<usize>,
}

impl CliOptions {
    /// Seeds actually run: base + offset + index, in plan order.
    pub fn effective_seeds(&self) -> Vec<u64> {
        let start = self.seed_base.wrapping_add_signed(self.seed_offset);
        (0..self.seeds as u64).map(|i| start.wrapping_add(i)).collect()
    }
}

pub enum Parsed {
    Help,
    Options(Box<CliOptions>),
}

/// Parse an invocation, reading the seed offset from the environment.
pub fn parse_cli(args: &[String]) -> CliResult<Parsed> {
    let offset = match std::env::var(SEED_OFFSET_VAR) {
        Ok(v) => v.trim().parse::<i64>().map_err(|_| {
            usage(format!("{SEED_OFFSET_VAR} must be an integer, got `{v}`"))
        })?,
        Err(_) => 0,
    };
    parse_cli_with_offset(args, offset)
}

/// Parse with an explicit seed offset (testable without touching the
/// process environment).
pub fn parse_cli_with_offset(args: &[String], seed_offset: i64) -> CliResult<Parsed> {
    if args.iter().any(|a| a == "--help" || a == "-h") {
        return Ok(Parsed::Help);
    }
    let sub = args
        .first()
        .ok_or_else(|| usage("missing subcommand; expected run, table1, or slices"))?;
    let command = match sub.as_str() {
        "run" => Command::Run,
        "table1" => Command::Table1,
        "slices" => Command::Slices,
        other => {
            return Err(usage(format!(
                "unknown subcommand `{other}`; expected run, table1, or slices"
            )))
        }
    };

    // Collect flag assignments left to right; pull out --config.
    let mut flag_pairs: Vec<(&'static str, String)> = Vec::new();
    let mut config_path: Option<String> = None;
    let mut i = 1;
    while i < args.len() {
        let tok = &args[i];
        let Some(body) = tok.strip_prefix("--") else {
            return Err(usage(format!("unexpected positional argument `{tok}`")));
        };
        let (flag_name, inline) = match body.split_once('=') {
            Some((n, v)) => (n, Some(v.to_string())),
            None => (body, None),
        };
        let value = match inline {
            Some(v) => v,
            None => {
                i += 1;
                args.get(i)
                    .cloned()
                    .ok_or_else(|| usage(format!("flag --{flag_name} expects a value")))?
            }
        };
        if flag_name == "config" {
            if config_path.is_some() {
                return Err(usage("--config given more than once"));
            }
            config_path = Some(value);
        } else {
            let key_name = flag_name.replace('-', "_");
            let key = find_key(&key_name)
                .ok_or_else(|| usage(format!("unknown flag --{flag_name}")))?;
            flag_pairs.push((key.name, value));
        }
        i += 1;
    }

    let mut store: BTreeMap<&'static str, (String, Provenance)> = BTreeMap::new();
    for key in KEYS {
        if let Some(d) = key.default {
            store.insert(key.name, (d.to_string(), Provenance::Default));
        }
    }
    if let Some(path) = &config_path {
        for (name, value) in read_config_file(path)? {
            store.insert(name, (value, Provenance::File));
        }
    }
    for (name, value) in flag_pairs {
        store.insert(name, (value, Provenance::Flag));
    }
    build_options(command, &store, seed_offset).map(|o| Parsed::Options(Box::new(o)))
}

fn read_config_file(path: &str) -> CliResult<Vec<(&'static str, String)>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| usage(format!("cannot read config file `{path}`: {e}")))?;
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| {
            usage(format!("{path}:{}: expected `key = value`", idx + 1))
        })?;
        let name = k.trim();
        let key = find_key(name).ok_or_else(|| {
            usage(format!("{path}:{}: unknown key `{name}`", idx + 1))
        })?;
        out.push((key.name, v.trim().to_string()));
    }
    Ok(out)
}

struct Store<'a>(&'a BTreeMap<&'static str, (String, Provenance)>);

impl Store<'_> {
    fn raw(&self, name: &str) -> Option<&str> {
        self.0.get(name).map(|(v, _)| v.as_str())
    }

    fn explicit(&self, name: &str) -> bool {
        matches!(
            self.0.get(name).map(|(_, p)| *p),
            Some(Provenance::File) | Some(Provenance::Flag)
        )
    }

    fn text(&self, name: &'static str) -> String {
        self.raw(name).expect("key with default").to_string()
    }

    fn uint(&self, name: &'static str) -> CliResult<usize> {
        let v = self.raw(name).expect("key with default");
        v.parse().map_err(|_| {
            usage(format!("invalid value for `{name}`: `{v}` (expected a non-negative integer)"))
        })
    }

    fn u64(&self, name: &'static str) -> CliResult<u64> {
        let v = self.raw(name).expect("key with default");
        v.parse().map_err(|_| {
            usage(format!("invalid value for `{name}`: `{v}` (expected a non-negative integer)"))
        })
    }

    fn float_opt(&self, name: &'static str) -> CliResult<Option<f64>> {
        match self.raw(name) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|_| usage(format!("invalid value for `{name}`: `{v}` (expected a number)"))),
        }
    }

    fn float(&self, name: &'static str) -> CliResult<f64> {
        Ok(self.float_opt(name)?.expect("key with default"))
    }

    fn choice(&self, name: &'static str) -> CliResult<&str> {
        let key = find_key(name).expect("known key");
        let Kind::Choice(allowed) = key.kind else {
            unreachable!("choice() on non-choice key")
        };
        let v = self.raw(name).expect("key with default");
        if allowed.contains(&v) {
            Ok(v)
        } else {
            Err(usage(format!(
                "invalid value for `{name}`: `{v}` (expected one of {})",
                allowed.join(", ")
            )))
        }
    }

    fn uint_list(&self, name: &'static str) -> CliResult<Vec<usize>> {
        let v = self.raw(name).expect("key with default");
        v.split(',')
            .map(|p| p.trim().parse())
            .collect::<Result<Vec<usize>, _>>()
            .map_err(|_| {
                usage(format!(
                    "invalid value for `{name}`: `{v}` (expected comma-separated non-negative integers)"
                ))
            })
    }

    fn float_list(&self, name: &'static str) -> CliResult<Vec<f64>> {
        let v = self.raw(name).expect("key with default");
        v.split(',')
            .map(|p| p.trim().parse())
            .collect::<Result<Vec<f64>, _>>()
            .map_err(|_| {
                usage(format!(
                    "invalid value for `{name}`: `{v}` (expected comma-separated numbers)"
                ))
            })
    }
}

fn build_options(
    command: Command,
    map: &BTreeMap<&'static str, (String, Provenance)>,
    seed_offset: i64,
) -> CliResult<CliOptions> {
    let s = Store(map);

    let mut env = match s.choice("env")? {
        "toy1d" => EnvId::Toy1d,
        _ => EnvId::Lqr,
    };
    match command {
        Command::Table1 | Command::Slices => {
            if env == EnvId::Lqr {
                return Err(usage(format!(
                    "{} is defined on env toy1d",
                    command.as_str()
                )));
            }
            env = EnvId::Toy1d;
            if s.explicit("method") {
                return Err(usage(format!(
                    "{} runs both methods; drop --method",
                    command.as_str()
                )));
            }
            if command == Command::Table1 && s.explicit("model") {
                return Err(usage("table1 sweeps both models; drop --model"));
            }
        }
        Command::Run => {}
    }

    let derived_algo = match env {
        EnvId::Toy1d => Algo::QLearning,
        EnvId::Lqr => Algo::ActorCritic,
    };
    let algo = match s.raw("algo") {
        None => derived_algo,
        Some(v) => {
            let parsed = match v {
                "q_learning" => Algo::QLearning,
                "actor_critic" => Algo::ActorCritic,
                other => {
                    return Err(usage(format!(
                        "invalid value for `algo`: `{other}` (expected one of q_learning, actor_critic)"
                    )))
                }
            };
            if parsed != derived_algo {
                return Err(usage(format!(
                    "env {} trains with {}; got algo {v}",
                    env.as_str(),
                    match derived_algo {
                        Algo::QLearning => "q_learning",
                        Algo::ActorCritic => "actor_critic",
                    }
                )));
            }
            parsed
        }
    };

    let method = match s.choice("method")? {
        "baseline" => Method::Baseline,
        _ => Method::Sobolev,
    };
    let model = match s.choice("model")? {
        "quadratic" => ModelKind::Quadratic,
        _ => ModelKind::Mlp {
            hidden: MLP_HIDDEN.to_vec(),
        },
    };
    let loss_path = match s.choice("loss_path")? {
        "tangent" => LossPath::Tangent,
        _ => LossPath::ValueOnly,
    };

    let default_lambda = match method {
        Method::Sobolev => 1.0,
        Method::Baseline => 0.0,
    };
    let lambda_s = s.float_opt("lambda_s")?.unwrap_or(default_lambda);
    let lambda_a = s.float_opt("lambda_a")?.unwrap_or(default_lambda);
    for (name, lam) in [("lambda_s", lambda_s), ("lambda_a", lambda_a)] {
        if !(lam >= 0.0 && lam.is_finite()) {
            return Err(usage(format!(
                "`{name}` must be finite and non-negative, got {lam}"
            )));
        }
    }
    if method == Method::Baseline && (lambda_s != 0.0 || lambda_a != 0.0) {
        return Err(usage(
            "method baseline requires lambda_s = lambda_a = 0; use --method sobolev for nonzero gradient weights",
        ));
    }
    if loss_path == LossPath::ValueOnly && (lambda_s != 0.0 || lambda_a != 0.0) {
        return Err(usage(
            "loss_path value_only cannot carry nonzero gradient weights",
        ));
    }

    let seeds = s.uint("seeds")?;
    if seeds == 0 {
        return Err(usage("`seeds` must be at least 1"));
    }
    let steps = s.uint("steps")?;
    let lr = s.float("lr")?;
    if !(lr > 0.0 && lr.is_finite()) {
        return Err(usage(format!("`lr` must be positive, got {lr}")));
    }
    let lr_actor = s.float("lr_actor")?;
    if !(lr_actor > 0.0 && lr_actor.is_finite()) {
        return Err(usage(format!("`lr_actor` must be positive, got {lr_actor}")));
    }
    let batch = s.uint("batch")?;
    if batch == 0 {
        return Err(usage("`batch` must be at least 1"));
    }
    let gamma = s.float("gamma")?;
    if !((0.0..1.0).contains(&gamma)) {
        return Err(usage(format!("`gamma` must lie in [0, 1), got {gamma}")));
    }
    let polyak_rho = s.float("polyak_rho")?;
    if !((0.0..=1.0).contains(&polyak_rho)) {
        return Err(usage(format!(
            "`polyak_rho` must lie in [0, 1], got {polyak_rho}"
        )));
    }
    let warmup_steps = s.uint("warmup_steps")?;
    let grid_points = s.uint("grid_points")?;
    if grid_points < 2 {
        return Err(usage(format!(
            "`grid_points` must be at least 2, got {grid_points}"
        )));
    }
    let eval_every = s.uint("eval_every")?;
    let replay_capacity = s.uint("replay_capacity")?;
    if replay_capacity < batch {
        return Err(usage(format!(
            "`replay_capacity` ({replay_capacity}) must hold at least one batch ({batch})"
        )));
    }
    let explore_sigma = s.float("explore_sigma")?;
    if !(explore_sigma >= 0.0 && explore_sigma.is_finite()) {
        return Err(usage(format!(
            "`explore_sigma` must be non-negative, got {explore_sigma}"
        )));
    }
    let episode_len = s.uint("episode_len")?;
    if episode_len == 0 {
        return Err(usage("`episode_len` must be at least 1"));
    }
    let jobs = s.uint("jobs")?;
    if jobs == 0 {
        return Err(usage("`jobs` must be at least 1"));
    }
    let slice_states = s.float_list("slice_states")?;
    let slice_steps = s.uint_list("slice_steps")?;
    if command == Command::Slices {
        if slice_states.is_empty() || slice_steps.is_empty() {
            return Err(usage("`slice_states` and `slice_steps` must be non-empty"));
        }
        for &st in &slice_states {
            if !(-1.0..=1.0).contains(&st) {
                return Err(usage(format!(
                    "`slice_states` entries must lie in [-1, 1], got {st}"
                )));
            }
        }
        for &sp in &slice_steps {
            if sp > steps {
                return Err(usage(format!(
                    "`slice_steps` entry {sp} exceeds `steps` ({steps})"
                )));
            }
        }
    }

    Ok(CliOptions {
        command,
        env,
        algo,
        method,
        model,
        loss_path,
        seeds,
        seed_base: s.u64("seed")?,
        seed_offset,
        steps,
        lr,
        lr_actor,
        batch,
        gamma,
        lambda_s,
        lambda_a,
        polyak_rho,
        warmup_steps,
        grid_points,
        eval_every,
        replay_capacity,
        explore_sigma,
        episode_len,
        out: PathBuf::from(s.text("out")),
        jobs,
        slice_states,
        slice_steps,
    })
}

fn join_floats(xs: &[f64]) -> String {
    xs.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

fn join_uints(xs: &[usize]) -> String {
    xs.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

/// Render the fully resolved configuration as a manifest. The body is plain
/// `key = value` lines, so the file parses back through `--config`; the
/// header records provenance as comments.
pub fn manifest_text(opts: &CliOptions, oracle_note: &str, start_unix: u64) -> String {
    let mut out = String::new();
    out.push_str("# sobolev-td run manifest\n");
    out.push_str(&format!("# version: {}\n", env!("CARGO_PKG_VERSION")));
    out.push_str(&format!("# started_unix: {start_unix}\n"));
    out.push_str(&format!("# command: {}\n", opts.command.as_str()));
    out.push_str(&format!("# oracle: {oracle_note}\n"));
    out.push_str(&format!("# seed_offset_applied: {}\n", opts.seed_offset));
    let seeds: Vec<String> = opts
        .effective_seeds()
        .iter()
        .map(|s| s.to_string())
        .collect();
    out.push_str(&format!("# effective_seeds: {}\n", seeds.join(" ")));
    out.push('\n');
    let algo_str = match opts.algo {
        Algo::QLearning => "q_learning",
        Algo::ActorCritic => "actor_critic",
    };
    let method_str = match opts.method {
        Method::Baseline => "baseline",
        Method::Sobolev => "sobolev",
    };
    let model_str = match opts.model {
        ModelKind::Quadratic => "quadratic",
        ModelKind::Mlp { .. } => "mlp",
    };
    let loss_path_str = match opts.loss_path {
        LossPath::Tangent => "tangent",
        LossPath::ValueOnly => "value_only",
    };
    for key in KEYS {
        let value = match key.name {
            "env" => opts.env.as_str().to_string(),
            "algo" => algo_str.to_string(),
            "method" => method_str.to_string(),
            "model" => model_str.to_string(),
            "loss_path" => loss_path_str.to_string(),
            "seeds" => opts.seeds.to_string(),
            "seed" => opts.seed_base.to_string(),
            "steps" => opts.steps.to_string(),
            "lr" => opts.lr.to_string(),
            "lr_actor" => opts.lr_actor.to_string(),
            "batch" => opts.batch.to_string(),
            "gamma" => opts.gamma.to_string(),
            "lambda_s" => opts.lambda_s.to_string(),
            "lambda_a" => opts.lambda_a.to_string(),
            "polyak_rho" => opts.polyak_rho.to_string(),
            "warmup_steps" => opts.warmup_steps.to_string(),
            "grid_points" => opts.grid_points.to_string(),
            "eval_every" => opts.eval_every.to_string(),
            "replay_capacity" => opts.replay_capacity.to_string(),
            "explore_sigma" => opts.explore_sigma.to_string(),
            "episode_len" => opts.episode_len.to_string(),
            "out" => opts.out.display().to_string(),
            "jobs" => opts.jobs.to_string(),
            "slice_states" => join_floats(&opts.slice_states),
            "slice_steps" => join_uints(&opts.slice_steps),
            other => unreachable!("unhandled key {other}"),
        };
        out.push_str(&format!("{} = {}\n", key.name, value));
    }
    out
}

/// One line per key, for `--help`.
pub fn help_text() -> String {
    let mut out = String::new();
    out.push_str("sobolev-td <run|table1|slices> [--key value ...] [--config FILE]\n\n");
    out.push_str("  run     execute one (env, model, method) cell over the seed plan\n");
    out.push_str("  table1  run all four (model x method) cells on toy1d; write summary.csv\n");
    out.push_str("  slices  run sobolev and baseline; dump Q slices at checkpoints\n\n");
    out.push_str("Flags override --config file values override defaults.\n\n");
    for key in KEYS {
        let flag = format!("--{}", key.name.replace('_', "-"));
        let default = key.default.unwrap_or("(derived)");
        out.push_str(&format!("  {flag:<20} {} [default: {default}]\n", key.help));
    }
    out.push_str(&format!(
        "\nEnv var {SEED_OFFSET_VAR} (integer) shifts every seed in the plan.\n"
    ));
    out
}
