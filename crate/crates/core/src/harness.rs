//! Trials, baselines, metrics and batch experiments.
//!
//! A trial runs `K` adaptation episodes, infers the graph from the collected
//! trajectory and scores GRProp on the inferred graph over a few test
//! episodes. Returns are normalized per graph between the Random agent
//! (0) and GRProp on the true graph (1).

use std::fmt::Write as _;
use std::time::Instant;

use log::{debug, warn};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::adapt::{MsgiGrpropExplorer, RandomPolicy, UcbState};
use crate::env::{rollout_episode, EnvConfig, Policy, Trajectory};
use crate::error::{Error, Result};
use crate::graph::{for_each_assignment, SopExpr, SubtaskGraph};
use crate::grprop::{GrpropParams, GrpropPolicy};
use crate::infer::{infer_graph, InferredGraph};

/// Episodes used to estimate each baseline.
pub const BASELINE_EPISODES: usize = 32;

/// Default baseline separation, in combined standard errors.
pub const SEPARATION_Z: f64 = 3.0;

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives an independent seed from `seed` and a list of coordinates:
/// `s <- mix64(s ^ mix64(c))` for each coordinate `c` in order.
pub fn derive_seed(seed: u64, coords: &[u64]) -> u64 {
    coords.iter().fold(mix64(seed), |s, &c| mix64(s ^ mix64(c)))
}

fn rng_from(seed: u64, stream: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, &[stream]))
}

const STREAM_ADAPT: u64 = 1;
const STREAM_TEST: u64 = 2;
const STREAM_BASE_RANDOM: u64 = 3;
const STREAM_BASE_ORACLE: u64 = 4;
const STREAM_PRF: u64 = 5;
const SALT_BASELINE: u64 = 0xBA5E_11E5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AgentKind {
    Random,
    MsgiRand,
    MsgiGrprop,
    Oracle,
}

impl AgentKind {
    pub const ALL: [AgentKind; 4] = [AgentKind::Random, AgentKind::MsgiRand, AgentKind::MsgiGrprop, AgentKind::Oracle];

    pub fn name(self) -> &'static str {
        match self {
            AgentKind::Random => "random",
            AgentKind::MsgiRand => "msgi-rand",
            AgentKind::MsgiGrprop => "msgi-grprop",
            AgentKind::Oracle => "oracle",
        }
    }
}

impl std::str::FromStr for AgentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        AgentKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidParam(format!("unknown policy {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialConfig {
    pub policy: AgentKind,
    pub adaptation_episodes: usize,
    pub test_episodes: usize,
    pub env: EnvConfig,
    /// Test-phase GRProp.
    pub grprop: GrpropParams,
    /// Adaptation-phase GRProp for the exploratory agent.
    pub explore: GrpropParams,
    pub seed: u64,
}

impl TrialConfig {
    pub fn new(policy: AgentKind, adaptation_episodes: usize, seed: u64) -> Self {
        let env = EnvConfig::default();
        TrialConfig {
            policy,
            adaptation_episodes,
            test_episodes: env.test_episode_budget,
            env,
            grprop: GrpropParams::default(),
            explore: GrpropParams { anneal: Some((1.0, 40.0)), ..GrpropParams::default() },
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialResult {
    pub policy: AgentKind,
    pub adaptation: Trajectory,
    pub inferred: InferredGraph,
    pub test_return: f64,
    pub precision: f64,
    pub recall: f64,
    pub coverage: f64,
    pub adaptation_steps: usize,
    /// Sum of UCB bonuses over the adaptation phase.
    pub intrinsic_return: f64,
    pub wall_ms: u128,
}

impl TrialResult {
    pub fn normalized(&self, baselines: &Baselines) -> Result<f64> {
        baselines.normalize(self.test_return)
    }
}

/// Mean episode return and its standard error.
fn mean_return(
    graph: &SubtaskGraph,
    env: &EnvConfig,
    policy: &mut dyn Policy,
    episodes: usize,
    rng: &mut dyn RngCore,
) -> Result<(f64, f64)> {
    let mut history = Trajectory::new();
    let mut returns = Vec::with_capacity(episodes);
    for k in 0..episodes {
        returns.push(rollout_episode(graph, env, policy, &mut history, episodes - k, rng)?);
    }
    let m = returns.len().max(1) as f64;
    let mean = returns.iter().sum::<f64>() / m;
    let stderr = if returns.len() > 1 {
        let var = returns.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (m - 1.0);
        (var / m).sqrt()
    } else {
        0.0
    };
    Ok((mean, stderr))
}

/// One adaptation phase, inference and test phase on `graph`.
pub fn run_trial(graph: &SubtaskGraph, config: &TrialConfig) -> Result<TrialResult> {
    let start = Instant::now();
    let n = graph.len();
    config.env.validate(n)?;
    config.grprop.validate()?;
    config.explore.validate()?;
    if config.test_episodes < 1 {
        return Err(Error::InvalidParam("test_episodes must be at least 1".into()));
    }
    let k = config.adaptation_episodes;

    let mut adapt_rng = rng_from(config.seed, STREAM_ADAPT);
    let mut adaptation = Trajectory::new();
    match config.policy {
        AgentKind::Oracle => {}
        AgentKind::Random | AgentKind::MsgiRand => {
            let mut p = RandomPolicy;
            for ep in 0..k {
                rollout_episode(graph, &config.env, &mut p, &mut adaptation, k - ep, &mut adapt_rng)?;
            }
        }
        AgentKind::MsgiGrprop => {
            let mut p = MsgiGrpropExplorer::new(n, config.explore, k);
            for ep in 0..k {
                rollout_episode(graph, &config.env, &mut p, &mut adaptation, k - ep, &mut adapt_rng)?;
            }
        }
    }

    let mut ucb = UcbState::new(n);
    let mut intrinsic_return = 0.0;
    for (x, e) in adaptation.states() {
        intrinsic_return += ucb.intrinsic_reward(x, e);
        ucb.update_counts(e, x)?;
    }

    let inferred = match config.policy {
        AgentKind::Oracle => InferredGraph {
            preconditions: graph.preconditions().cloned().collect(),
            reward_estimates: graph.rewards().into_iter().map(Some).collect(),
            observation_counts: vec![0; n],
        },
        _ => infer_graph(&adaptation, n)?,
    };

    let mut test_rng = rng_from(config.seed, STREAM_TEST);
    let test_return = match config.policy {
        AgentKind::Random => mean_return(graph, &config.env, &mut RandomPolicy, config.test_episodes, &mut test_rng)?.0,
        AgentKind::Oracle => {
            let mut p = GrpropPolicy::new(graph.clone(), config.grprop);
            mean_return(graph, &config.env, &mut p, config.test_episodes, &mut test_rng)?.0
        }
        AgentKind::MsgiRand | AgentKind::MsgiGrprop => {
            let mut p = GrpropPolicy::new(inferred.to_graph()?, config.grprop);
            mean_return(graph, &config.env, &mut p, config.test_episodes, &mut test_rng)?.0
        }
    };

    let (precision, recall) = precondition_prf(
        graph,
        &inferred.preconditions,
        PrfMode { seed: derive_seed(config.seed, &[STREAM_PRF]), ..PrfMode::default() },
    )?;
    let result = TrialResult {
        policy: config.policy,
        coverage: coverage(&adaptation, n),
        adaptation_steps: adaptation.num_steps(),
        adaptation,
        inferred,
        test_return,
        precision,
        recall,
        intrinsic_return,
        wall_ms: start.elapsed().as_millis(),
    };
    debug!(
        "trial {} K={k}: R={:.4} P={:.3} R={:.3} cov={:.3}",
        config.policy.name(),
        result.test_return,
        result.precision,
        result.recall,
        result.coverage
    );
    Ok(result)
}

/// `(R - R_min) / (R_max - R_min)`, unclamped.
pub fn normalized_return(r: f64, r_min: f64, r_max: f64) -> Result<f64> {
    if r_max == r_min {
        return Err(Error::DegenerateBaseline(r_min));
    }
    Ok((r - r_min) / (r_max - r_min))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Baselines {
    /// Mean return of the Random agent.
    pub r_min: f64,
    /// Mean return of GRProp on the true graph.
    pub r_max: f64,
    /// Standard error of `r_min`.
    pub stderr_min: f64,
    /// Standard error of `r_max`.
    pub stderr_max: f64,
}

impl Baselines {
    /// Exact baselines with no sampling error.
    pub fn exact(r_min: f64, r_max: f64) -> Self {
        Baselines { r_min, r_max, stderr_min: 0.0, stderr_max: 0.0 }
    }

    /// Whether `r_max` exceeds `r_min` by more than `z` combined standard
    /// errors. When it does not, the oracle is not measurably better than
    /// random on this graph and normalized returns are not reported.
    pub fn separated(&self, z: f64) -> bool {
        let se = self.stderr_min.hypot(self.stderr_max);
        self.r_max - self.r_min > z * se
    }

    pub fn normalize(&self, r: f64) -> Result<f64> {
        normalized_return(r, self.r_min, self.r_max)
    }
}

pub fn compute_baselines(
    graph: &SubtaskGraph,
    env: &EnvConfig,
    params: &GrpropParams,
    episodes: usize,
    seed: u64,
) -> Result<Baselines> {
    if episodes < 1 {
        return Err(Error::InvalidParam("baseline episodes must be at least 1".into()));
    }
    let mut rng = rng_from(seed, STREAM_BASE_RANDOM);
    let (r_min, stderr_min) = mean_return(graph, env, &mut RandomPolicy, episodes, &mut rng)?;
    let mut rng = rng_from(seed, STREAM_BASE_ORACLE);
    let mut oracle = GrpropPolicy::new(graph.clone(), *params);
    let (r_max, stderr_max) = mean_return(graph, env, &mut oracle, episodes, &mut rng)?;
    Ok(Baselines { r_min, r_max, stderr_min, stderr_max })
}

/// How assignments are chosen for precision/recall.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrfMode {
    /// Enumerate all `2^N` assignments when `N` is at most this.
    pub exhaustive_limit: usize,
    /// Uniform samples drawn above the limit.
    pub samples: usize,
    pub seed: u64,
}

impl Default for PrfMode {
    fn default() -> Self {
        PrfMode { exhaustive_limit: 20, samples: 1 << 16, seed: 0 }
    }
}

/// Micro-averaged precision and recall of inferred eligibility over
/// `(assignment, subtask)` pairs.
pub fn precondition_prf(truth: &SubtaskGraph, inferred: &[SopExpr], mode: PrfMode) -> Result<(f64, f64)> {
    let n = truth.len();
    if inferred.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: inferred.len() });
    }
    let (mut tp, mut fp, mut fneg) = (0u64, 0u64, 0u64);
    let mut tally = |x: &[bool]| {
        for (spec, guess) in truth.subtasks().iter().zip(inferred) {
            match (spec.precondition.eval(x), guess.eval(x)) {
                (true, true) => tp += 1,
                (false, true) => fp += 1,
                (true, false) => fneg += 1,
                (false, false) => {}
            }
        }
    };
    if n <= mode.exhaustive_limit {
        for_each_assignment(n, &mut tally);
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(mode.seed);
        let mut x = vec![false; n];
        for _ in 0..mode.samples {
            x.iter_mut().for_each(|b| *b = rng.random_bool(0.5));
            tally(&x);
        }
    }
    let precision = if tp + fp == 0 { 1.0 } else { tp as f64 / (tp + fp) as f64 };
    let recall = if tp + fneg == 0 { 1.0 } else { tp as f64 / (tp + fneg) as f64 };
    Ok((precision, recall))
}

/// Fraction of subtasks that were eligible or complete at some recorded state.
pub fn coverage(traj: &Trajectory, n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let mut hit = vec![false; n];
    for (x, e) in traj.states() {
        for i in 0..n {
            hit[i] |= x[i] || e[i];
        }
    }
    hit.iter().filter(|&&h| h).count() as f64 / n as f64
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    /// `(graph_id, graph)` pairs.
    pub graphs: Vec<(String, SubtaskGraph)>,
    pub policies: Vec<AgentKind>,
    pub adaptation_episodes: Vec<usize>,
    /// Trial repetitions per `(graph, policy, K)`.
    pub seeds: usize,
    pub master_seed: u64,
    pub test_episodes: usize,
    pub baseline_episodes: usize,
    /// Graphs whose baselines are not separated by this many standard
    /// errors get no normalized return (see [`Baselines::separated`]).
    pub separation_z: f64,
    pub env: EnvConfig,
    pub grprop: GrpropParams,
    pub explore: GrpropParams,
    /// Record wall-clock time per trial. Off by default so output is
    /// reproducible byte for byte.
    pub timing: bool,
}

impl ExperimentConfig {
    pub fn new(graphs: Vec<(String, SubtaskGraph)>, master_seed: u64) -> Self {
        let base = TrialConfig::new(AgentKind::MsgiGrprop, 10, 0);
        ExperimentConfig {
            graphs,
            policies: vec![AgentKind::MsgiGrprop],
            adaptation_episodes: vec![10],
            seeds: 1,
            master_seed,
            test_episodes: base.test_episodes,
            baseline_episodes: BASELINE_EPISODES,
            separation_z: SEPARATION_Z,
            env: base.env,
            grprop: base.grprop,
            explore: base.explore,
            timing: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CsvRow {
    pub trial_id: usize,
    pub graph_id: String,
    pub policy: AgentKind,
    pub k: usize,
    pub seed: u64,
    pub test_return: f64,
    pub normalized_return: Option<f64>,
    pub precision: f64,
    pub recall: f64,
    pub coverage: f64,
    pub adaptation_steps: usize,
    pub wall_ms: u128,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub rows: Vec<CsvRow>,
    pub baselines: Vec<Option<Baselines>>,
    /// Failed trials as `(graph_id, policy, K, seed index, error)`.
    pub failures: Vec<(String, AgentKind, usize, usize, Error)>,
}

pub const CSV_HEADER: &str =
    "trial_id,graph_id,policy,K,seed,test_return,normalized_return,precision,recall,coverage,adaptation_steps,wall_ms";

impl ExperimentOutput {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            let norm = r.normalized_return.map(|v| format!("{v:.6}")).unwrap_or_default();
            writeln!(
                out,
                "{},{},{},{},{},{:.6},{},{:.6},{:.6},{:.6},{},{}",
                r.trial_id,
                r.graph_id,
                r.policy.name(),
                r.k,
                r.seed,
                r.test_return,
                norm,
                r.precision,
                r.recall,
                r.coverage,
                r.adaptation_steps,
                r.wall_ms
            )
            .unwrap();
        }
        out
    }
}

/// Runs every `(graph, policy, K, seed)` combination in parallel.
///
/// The trial seed is `derive_seed(master, [graph index, seed index])`, so
/// policies and budgets on the same graph and repetition share random
/// streams. Baselines use seeds derived from `master ^ SALT_BASELINE`.
/// Rows come out ordered by graph, policy (in [`AgentKind::ALL`] order), K,
/// then seed index; duplicate policies and budgets are dropped.
pub fn run_experiment(cfg: &ExperimentConfig) -> ExperimentOutput {
    let baselines: Vec<Option<Baselines>> = cfg
        .graphs
        .par_iter()
        .enumerate()
        .map(|(gi, (id, g))| {
            let seed = derive_seed(cfg.master_seed ^ SALT_BASELINE, &[gi as u64]);
            match compute_baselines(g, &cfg.env, &cfg.grprop, cfg.baseline_episodes, seed) {
                Ok(b) => Some(b),
                Err(e) => {
                    warn!("baselines for {id} failed: {e}");
                    None
                }
            }
        })
        .collect();

    let mut policies = cfg.policies.clone();
    policies.sort();
    policies.dedup();
    let mut budgets = cfg.adaptation_episodes.clone();
    budgets.sort();
    budgets.dedup();
    let mut jobs = Vec::new();
    for gi in 0..cfg.graphs.len() {
        for &policy in &policies {
            for &k in &budgets {
                for si in 0..cfg.seeds {
                    jobs.push((gi, policy, k, si));
                }
            }
        }
    }
    let results: Vec<_> = jobs
        .par_iter()
        .map(|&(gi, policy, k, si)| {
            let (_, graph) = &cfg.graphs[gi];
            let seed = derive_seed(cfg.master_seed, &[gi as u64, si as u64]);
            let tc = TrialConfig {
                policy,
                adaptation_episodes: k,
                test_episodes: cfg.test_episodes,
                env: cfg.env.clone(),
                grprop: cfg.grprop,
                explore: cfg.explore,
                seed,
            };
            (seed, run_trial(graph, &tc))
        })
        .collect();

    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for (&(gi, policy, k, si), (seed, res)) in jobs.iter().zip(results) {
        let graph_id = cfg.graphs[gi].0.clone();
        match res {
            Ok(t) => {
                let normalized_return =
                    baselines[gi].filter(|b| b.separated(cfg.separation_z)).and_then(|b| t.normalized(&b).ok());
                rows.push(CsvRow {
                    trial_id: rows.len(),
                    graph_id,
                    policy,
                    k,
                    seed,
                    test_return: t.test_return,
                    normalized_return,
                    precision: t.precision,
                    recall: t.recall,
                    coverage: t.coverage,
                    adaptation_steps: t.adaptation_steps,
                    wall_ms: if cfg.timing { t.wall_ms } else { 0 },
                });
            }
            Err(e) => {
                warn!("trial {graph_id}/{}/K={k}/#{si} failed: {e}", policy.name());
                failures.push((graph_id, policy, k, si, e));
            }
        }
    }
    ExperimentOutput { rows, baselines, failures }
}
