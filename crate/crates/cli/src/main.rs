use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use log::info;

use sgi_core::env::{CostModel, EnvConfig, RewardNoise, StepBudget};
use sgi_core::graph::{export_dot, generate_graph, parse_graph, serialize_graph, Preset, SopExpr, SubtaskGraph};
use sgi_core::harness::{
    derive_seed, precondition_prf, run_experiment, run_trial, AgentKind, ExperimentConfig, PrfMode, TrialConfig,
    BASELINE_EPISODES, SEPARATION_Z,
};

const GRAPH_EXT: &str = "graph";

#[derive(Parser)]
#[command(name = "sgi", version, about = "Subtask graph inference experiments")]
struct Args {
    #[command(subcommand)]
    command: Command,
}

/// Environment options shared by commands that roll out episodes.
#[derive(clap::Args, Debug, Clone)]
struct EnvArgs {
    /// Step budget per episode: `A-B` absolute steps, or `Xn` / `Xn-Yn`
    /// multiples of the subtask count.
    #[arg(long, default_value = "3n")]
    budget: String,
    /// Time cost per option execution: `C` or `A-B`.
    #[arg(long, default_value = "1")]
    cost: String,
    /// Reward noise model: none, gaussian or uniform.
    #[arg(long, default_value = "uniform")]
    noise: String,
}

impl EnvArgs {
    fn to_config(&self, test_episodes: usize) -> Result<EnvConfig> {
        Ok(EnvConfig {
            step_budget: parse_budget(&self.budget)?,
            cost_model: parse_cost(&self.cost)?,
            reward_noise: match self.noise.as_str() {
                "none" => RewardNoise::None,
                "gaussian" => RewardNoise::Gaussian,
                "uniform" => RewardNoise::UniformScale,
                other => bail!("unknown noise model {other:?}"),
            },
            test_episode_budget: test_episodes,
        })
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate random graphs from a preset.
    Gen {
        #[arg(long)]
        preset: Preset,
        #[arg(long)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run trials on every graph in a directory and write a CSV.
    Run {
        #[arg(long)]
        graphs: PathBuf,
        /// Comma-separated: random, msgi-rand, msgi-grprop, oracle.
        #[arg(long, value_delimiter = ',', default_value = "msgi-grprop")]
        policy: Vec<AgentKind>,
        /// Adaptation episodes K, comma-separated for a sweep.
        #[arg(long, value_delimiter = ',', default_value = "10")]
        episodes: Vec<usize>,
        #[arg(long, default_value_t = 4)]
        test_episodes: usize,
        /// Repetitions per (graph, policy, K).
        #[arg(long, default_value_t = 1)]
        seeds: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = BASELINE_EPISODES)]
        baseline_episodes: usize,
        #[arg(long, default_value_t = SEPARATION_Z)]
        separation: f64,
        /// Worker threads (0 = all cores). Output does not depend on this.
        #[arg(long, default_value_t = 0)]
        threads: usize,
        /// Record wall-clock time per trial; makes the CSV non-reproducible.
        #[arg(long)]
        timing: bool,
        #[command(flatten)]
        env: EnvArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Adapt on one graph and write the inferred graph.
    Infer {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long, default_value = "msgi-grprop")]
        policy: AgentKind,
        #[arg(long, default_value_t = 10)]
        episodes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        env: EnvArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Precision and recall of inferred preconditions against the truth.
    Eval {
        #[arg(long)]
        truth: PathBuf,
        #[arg(long)]
        inferred: PathBuf,
        /// Sample this many assignments instead of enumerating all of them.
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Export a graph in Graphviz DOT format.
    Dot {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

/// `A-B` or a single value `A` meaning `A-A`.
fn parse_range<T: std::str::FromStr + Copy>(s: &str) -> Option<(T, T)> {
    match s.split_once('-') {
        Some((a, b)) => Some((a.trim().parse().ok()?, b.trim().parse().ok()?)),
        None => s.trim().parse().ok().map(|v| (v, v)),
    }
}

fn parse_budget(s: &str) -> Result<StepBudget> {
    if s.contains('n') {
        let stripped = s.replace('n', "");
        let (lo, hi) = parse_range::<f64>(&stripped).with_context(|| format!("bad budget {s:?}"))?;
        Ok(StepBudget::PerSubtask(lo, hi))
    } else {
        let (lo, hi) = parse_range::<usize>(s).with_context(|| format!("bad budget {s:?}"))?;
        Ok(StepBudget::Range(lo, hi))
    }
}

fn parse_cost(s: &str) -> Result<CostModel> {
    let (lo, hi) = parse_range::<usize>(s).with_context(|| format!("bad cost {s:?}"))?;
    Ok(if lo == hi { CostModel::Fixed(lo) } else { CostModel::UniformInt(lo, hi) })
}

fn read_graph(path: &Path) -> Result<SubtaskGraph> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_graph(&text).with_context(|| format!("parsing {}", path.display()))
}

/// Graphs in `dir` with the graph extension, sorted by file name. The file
/// stem is the graph id.
fn read_graph_dir(dir: &Path) -> Result<Vec<(String, SubtaskGraph)>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("listing {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == GRAPH_EXT))
        .collect();
    paths.sort();
    if paths.is_empty() {
        bail!("no .{GRAPH_EXT} files in {}", dir.display());
    }
    paths
        .iter()
        .map(|p| {
            let id = p.file_stem().unwrap_or_default().to_string_lossy().into_owned();
            Ok((id, read_graph(p)?))
        })
        .collect()
}

fn write(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let args = Args::parse();
    match args.command {
        Command::Gen { preset, count, seed, out } => {
            fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
            let config = preset.config();
            for i in 0..count {
                let g = generate_graph(&config, derive_seed(seed, &[i as u64]))?;
                let path = out.join(format!("{}_{i:04}.{GRAPH_EXT}", preset.name()));
                write(&path, &serialize_graph(&g))?;
            }
            info!("wrote {count} {} graphs to {}", preset.name(), out.display());
        }
        Command::Run {
            graphs,
            policy,
            episodes,
            test_episodes,
            seeds,
            seed,
            baseline_episodes,
            separation,
            threads,
            timing,
            env,
            out,
        } => {
            let mut cfg = ExperimentConfig::new(read_graph_dir(&graphs)?, seed);
            cfg.policies = policy;
            cfg.adaptation_episodes = episodes;
            cfg.test_episodes = test_episodes;
            cfg.seeds = seeds;
            cfg.baseline_episodes = baseline_episodes;
            cfg.separation_z = separation;
            cfg.env = env.to_config(test_episodes)?;
            cfg.timing = timing;
            let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build()?;
            let output = pool.install(|| run_experiment(&cfg));
            for (graph_id, policy, k, si, err) in &output.failures {
                eprintln!("failed: {graph_id} {} K={k} seed#{si}: {err}", policy.name());
            }
            write(&out, &output.to_csv())?;
            info!("wrote {} rows to {}", output.rows.len(), out.display());
            if output.rows.is_empty() && !output.failures.is_empty() {
                bail!("every trial failed");
            }
        }
        Command::Infer { graph, policy, episodes, seed, env, out } => {
            let truth = read_graph(&graph)?;
            let mut tc = TrialConfig::new(policy, episodes, seed);
            tc.env = env.to_config(tc.test_episodes)?;
            let result = run_trial(&truth, &tc)?;
            write(&out, &serialize_graph(&result.inferred.to_graph()?))?;
            println!("test_return {:.6}", result.test_return);
        }
        Command::Eval { truth, inferred, samples, seed } => {
            let truth = read_graph(&truth)?;
            let inferred = read_graph(&inferred)?;
            if inferred.len() != truth.len() {
                bail!("truth has {} subtasks, inferred has {}", truth.len(), inferred.len());
            }
            let pre: Vec<SopExpr> = inferred.preconditions().cloned().collect();
            let mode = match samples {
                Some(m) => PrfMode { exhaustive_limit: 0, samples: m, seed },
                None => PrfMode { seed, ..PrfMode::default() },
            };
            let (p, r) = precondition_prf(&truth, &pre, mode)?;
            println!("precision {p:.6}");
            println!("recall {r:.6}");
        }
        Command::Dot { graph, out } => {
            write(&out, &export_dot(&read_graph(&graph)?))?;
        }
    }
    Ok(())
}
