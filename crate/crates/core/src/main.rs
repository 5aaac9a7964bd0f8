use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use vtcot::reward::{total_reward, ConstantEvaluator, RewardWeights, StepEvaluator};
use vtcot::service::{self, ChatPolicy, ChatPolicyRunner, EpisodeLimits, EpisodeStore, ServiceConfig};
use vtcot::synthesis::{
    filter_rl_pool, synthesize_dataset, ChatConfig, FilterConfig, HttpChatProvider, Injection, NoisyOracleRunner,
    ReplayTransport, RolloutRunner, StubProvider, SynthesisConfig, ThoughtProvider,
};
use vtcot::taskgen::{self, derive_seed, read_tasks_jsonl, write_tasks_jsonl, GenParams, TaskKind};
use vtcot::trajectory;

type Result<T> = std::result::Result<T, Box<dyn std::error::Error>>;

#[derive(Parser)]
#[command(name = "vtcot", version, about = "Visual tool-use tasks, trajectories and rewards")]
struct Cli {
    /// Log progress to stderr.
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct ChatArgs {
    /// Chat-completions endpoint URL.
    #[arg(long, env = "VTCOT_ENDPOINT")]
    endpoint: Option<String>,
    #[arg(long, env = "VTCOT_MODEL")]
    model: Option<String>,
    /// Environment variable holding the bearer token.
    #[arg(long, default_value = "VTCOT_API_KEY")]
    token_env: String,
    /// Answer requests from a recorded exchange file instead of the network.
    #[arg(long)]
    replay: Option<PathBuf>,
}

impl ChatArgs {
    fn provider(&self) -> Result<HttpChatProvider> {
        let mut config = ChatConfig { token_env: self.token_env.clone(), ..ChatConfig::default() };
        if let Some(e) = &self.endpoint {
            config.endpoint = e.clone();
        }
        if let Some(m) = &self.model {
            config.model = m.clone();
        }
        Ok(match &self.replay {
            Some(path) => HttpChatProvider::with_transport(config, ReplayTransport::open(path)?),
            None => HttpChatProvider::from_config(config)?,
        })
    }
}

#[derive(Args)]
struct ParamArgs {
    /// Image side length in pixels.
    #[arg(long, default_value_t = 512)]
    resolution: u32,
    /// Size knob: maze side, search grid side or jigsaw side.
    #[arg(long)]
    n: Option<usize>,
}

impl ParamArgs {
    fn params(&self) -> GenParams {
        let mut p = GenParams { resolution: self.resolution, ..GenParams::default() };
        if let Some(n) = self.n {
            p.maze_n = n;
            p.search_grid = n;
            p.jigsaw_rows = n;
            p.jigsaw_cols = n;
        }
        p
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate task instances into a JSONL file.
    GenTasks {
        /// Task kind, or "all".
        #[arg(long)]
        kind: String,
        #[arg(long, default_value_t = 10)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        params: ParamArgs,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Synthesize cold-start trajectories.
    SynthSft {
        /// Per-kind counts, e.g. "maze=10,jigsaw=5".
        #[arg(long, conflicts_with = "per_kind")]
        counts: Option<String>,
        /// Same count for every kind.
        #[arg(long)]
        per_kind: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 4)]
        workers: usize,
        #[arg(long, default_value_t = 0.25)]
        injection_rate: f64,
        #[arg(long, default_value_t = 0.0)]
        reasoning_path_share: f64,
        /// "stub" or "http".
        #[arg(long, default_value = "stub")]
        provider: String,
        #[command(flatten)]
        chat: ChatArgs,
        #[command(flatten)]
        params: ParamArgs,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Keep tasks of moderate difficulty for RL.
    FilterRl {
        #[arg(long)]
        tasks: PathBuf,
        #[arg(long, default_value_t = 8)]
        k: usize,
        #[arg(long, default_value_t = 0.125)]
        lo: f64,
        #[arg(long, default_value_t = 0.875)]
        hi: f64,
        /// "noisy" (plan replay with random answers) or "chat".
        #[arg(long, default_value = "noisy")]
        runner: String,
        #[arg(long, default_value_t = 0.5)]
        p_correct: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        chat: ChatArgs,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Print the reward breakdown of each stored trajectory.
    Score {
        #[arg(long, short)]
        input: PathBuf,
        #[arg(long, default_value_t = 0.7)]
        alpha: f64,
        #[arg(long, default_value_t = 0.3)]
        beta: f64,
        /// "stub", "constant:<x>" or "http".
        #[arg(long, default_value = "stub")]
        evaluator: String,
        #[command(flatten)]
        chat: ChatArgs,
    },
    /// Render trajectories as PNG strips and HTML pages.
    Render {
        #[arg(long, short)]
        input: PathBuf,
        #[arg(long, short)]
        out: PathBuf,
        #[arg(long, default_value_t = service::DEFAULT_PANEL)]
        panel: u32,
        /// Only this trajectory id.
        #[arg(long)]
        id: Option<String>,
    },
    /// Run the rollout HTTP service.
    Serve {
        #[arg(long, env = "VTCOT_ADDR", default_value = "127.0.0.1:8080")]
        addr: SocketAddr,
        /// Where persisted episodes are written.
        #[arg(long, env = "VTCOT_OUTPUT_DIR")]
        output_dir: Option<PathBuf>,
        #[arg(long, default_value_t = 512)]
        resolution: u32,
        /// Judge endpoint for scoring with the "provider" evaluator.
        #[command(flatten)]
        chat: ChatArgs,
    },
}

fn parse_counts(spec: &str) -> Result<BTreeMap<TaskKind, usize>> {
    let mut out = BTreeMap::new();
    for part in spec.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let (k, n) = part.split_once('=').ok_or_else(|| format!("expected kind=count, got '{part}'"))?;
        out.insert(k.trim().parse::<TaskKind>()?, n.trim().parse::<usize>()?);
    }
    Ok(out)
}

fn evaluator(choice: &str, chat: &ChatArgs) -> Result<Box<dyn StepEvaluator>> {
    Ok(match choice {
        "stub" => Box::new(StubProvider),
        "http" => Box::new(chat.provider()?),
        other => match other.strip_prefix("constant:").map(str::parse::<f64>) {
            Some(Ok(x)) if (0.0..=1.0).contains(&x) => Box::new(ConstantEvaluator(x)),
            _ => return Err(format!("unknown evaluator '{other}'").into()),
        },
    })
}

fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::GenTasks { kind, count, seed, params, out } => {
            let kinds: Vec<TaskKind> = if kind == "all" { TaskKind::ALL.to_vec() } else { vec![kind.parse()?] };
            let params = params.params();
            let mut tasks = Vec::new();
            for kind in kinds {
                for _ in 0..count {
                    tasks.push(taskgen::generate(kind, &params, derive_seed(seed, tasks.len() as u64))?);
                }
            }
            write_tasks_jsonl(&out, &tasks)?;
            println!("{}", json!({"tasks": tasks.len(), "out": out}));
        }
        Command::SynthSft {
            counts,
            per_kind,
            seed,
            workers,
            injection_rate,
            reasoning_path_share,
            provider,
            chat,
            params,
            out,
        } => {
            let counts = match (counts, per_kind) {
                (Some(c), _) => parse_counts(&c)?,
                (None, Some(n)) => TaskKind::ALL.iter().map(|&k| (k, n)).collect(),
                (None, None) => return Err("give --counts or --per-kind".into()),
            };
            let config = SynthesisConfig {
                counts,
                injection: Injection { rate: injection_rate, reasoning_path_share },
                master_seed: seed,
                params: params.params(),
                output: out,
                workers,
            };
            let provider: Box<dyn ThoughtProvider> = match provider.as_str() {
                "stub" => Box::new(StubProvider),
                "http" => Box::new(chat.provider()?),
                other => return Err(format!("unknown provider '{other}'").into()),
            };
            let summary = synthesize_dataset(&config, provider.as_ref())?;
            println!("{}", serde_json::to_string(&summary)?);
            if summary.records == 0 && !summary.failures.is_empty() {
                return Err("every synthesis job failed".into());
            }
        }
        Command::FilterRl { tasks, k, lo, hi, runner, p_correct, seed, chat, out } => {
            let instances = read_tasks_jsonl(&tasks)?;
            let runner: Box<dyn RolloutRunner> = match runner.as_str() {
                "noisy" => Box::new(NoisyOracleRunner { p_correct, seed }),
                "chat" => Box::new(ChatPolicyRunner {
                    policy: ChatPolicy::new(Arc::new(chat.provider()?)),
                    limits: EpisodeLimits::default(),
                }),
                other => return Err(format!("unknown runner '{other}'").into()),
            };
            let report = filter_rl_pool(&instances, runner.as_ref(), FilterConfig { k, lo, hi })?;
            for o in &report.outcomes {
                println!("{}", serde_json::to_string(o)?);
            }
            for (id, error) in &report.skipped {
                eprintln!("skipped {id}: {error}");
            }
            write_tasks_jsonl(&out, &report.kept)?;
            println!("{}", json!({"kept": report.kept.len(), "total": instances.len(), "skipped": report.skipped.len()}));
        }
        Command::Score { input, alpha, beta, evaluator: choice, chat } => {
            let weights = RewardWeights::new(alpha, beta)?;
            let judge = evaluator(&choice, &chat)?;
            let trajs = trajectory::read_jsonl(&input)?;
            let mut sums = [0.0f64; 4];
            for t in &trajs {
                let b = total_reward(t, weights, judge.as_ref())?;
                for (s, v) in sums.iter_mut().zip([b.fmt, b.acc, b.step, b.total]) {
                    *s += v;
                }
                let mut line = serde_json::to_value(&b)?;
                line["id"] = json!(t.id);
                println!("{line}");
            }
            let n = trajs.len().max(1) as f64;
            println!(
                "{}",
                json!({"aggregate": {"count": trajs.len(), "fmt": sums[0] / n, "acc": sums[1] / n,
                    "step": sums[2] / n, "total": sums[3] / n}})
            );
        }
        Command::Render { input, out, panel, id } => {
            let trajs = trajectory::read_jsonl(&input)?;
            let mut written = 0;
            for t in trajs.iter().filter(|t| id.as_ref().is_none_or(|i| *i == t.id)) {
                let (png, html) = service::render_trajectory(t, &out, panel)?;
                println!("{} {}", png.display(), html.display());
                written += 1;
            }
            if written == 0 {
                return Err("no matching trajectories".into());
            }
        }
        Command::Serve { addr, output_dir, resolution, chat } => {
            let provider: Option<Arc<dyn StepEvaluator + Send + Sync>> = match (&chat.endpoint, &chat.replay) {
                (None, None) => None,
                _ => Some(Arc::new(chat.provider()?)),
            };
            let store = Arc::new(EpisodeStore::new(ServiceConfig {
                defaults: GenParams { resolution, ..GenParams::default() },
                output_dir,
                provider,
                ..ServiceConfig::default()
            }));
            let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
            rt.block_on(async {
                let listener = tokio::net::TcpListener::bind(addr).await?;
                eprintln!("listening on http://{}", listener.local_addr()?);
                service::serve(listener, store).await
            })?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .with_max_level(if cli.verbose { tracing::Level::DEBUG } else { tracing::Level::WARN })
        .init();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
