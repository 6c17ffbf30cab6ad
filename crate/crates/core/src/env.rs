//! Episode engine for the factored MDP defined by a subtask graph.
//!
//! The agent acts at the subtask level: each action executes one option,
//! which completes its subtask, pays a time cost and yields a noisy reward.
//! Navigation inside an option is abstracted into the cost model.

use rand::{Rng, RngCore};
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::graph::SubtaskGraph;

/// Time steps consumed by one option execution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CostModel {
    Fixed(usize),
    /// Uniform over the inclusive range.
    UniformInt(usize, usize),
}

impl CostModel {
    pub fn min_cost(&self) -> usize {
        match *self {
            CostModel::Fixed(c) => c,
            CostModel::UniformInt(lo, _) => lo,
        }
    }

    fn sample(&self, rng: &mut dyn RngCore) -> usize {
        match *self {
            CostModel::Fixed(c) => c,
            CostModel::UniformInt(lo, hi) => rng.random_range(lo..=hi),
        }
    }
}

/// How a subtask's `reward_noise` perturbs its `reward_mean`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RewardNoise {
    None,
    /// `mean + noise * N(0, 1)`.
    Gaussian,
    /// `mean + noise * U[-1, 1]`; generated graphs use `noise = 0.2 * mean`,
    /// which gives rewards uniform on `[0.8 * mean, 1.2 * mean]`.
    UniformScale,
}

/// Per-episode step budget.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepBudget {
    /// Uniform over the inclusive range.
    Range(usize, usize),
    /// Uniform over `[round(lo * N), round(hi * N)]` for an `N`-subtask graph.
    PerSubtask(f64, f64),
}

impl StepBudget {
    pub fn resolve(&self, n: usize) -> (usize, usize) {
        match *self {
            StepBudget::Range(lo, hi) => (lo, hi),
            StepBudget::PerSubtask(lo, hi) => ((lo * n as f64).round() as usize, (hi * n as f64).round() as usize),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvConfig {
    pub step_budget: StepBudget,
    pub cost_model: CostModel,
    pub reward_noise: RewardNoise,
    pub test_episode_budget: usize,
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig {
            step_budget: StepBudget::PerSubtask(3.0, 3.0),
            cost_model: CostModel::Fixed(1),
            reward_noise: RewardNoise::UniformScale,
            test_episode_budget: 4,
        }
    }
}

impl EnvConfig {
    pub fn validate(&self, n: usize) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidEnvConfig(m));
        let (lo, hi) = self.step_budget.resolve(n);
        if lo < 1 || lo > hi {
            return bad(format!("step budget range [{lo}, {hi}] is empty or below 1"));
        }
        match self.cost_model {
            CostModel::Fixed(c) if c < 1 => return bad("cost must be at least 1".into()),
            CostModel::UniformInt(a, b) if a < 1 || a > b => {
                return bad(format!("cost range [{a}, {b}] is empty or below 1"))
            }
            _ => {}
        }
        if self.test_episode_budget < 1 {
            return bad("test episode budget must be at least 1".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Observation {
    /// Completion bits.
    pub x: Vec<bool>,
    /// Eligibility bits, always equal to the graph's eligibility at `x`.
    pub e: Vec<bool>,
    pub step_remaining: usize,
    pub epi_remaining: usize,
}

impl Observation {
    #[inline]
    pub fn is_legal(&self, i: usize) -> bool {
        self.e[i] && !self.x[i]
    }

    /// Subtasks that are eligible and not yet complete.
    pub fn legal_options(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.x.len()).filter(|&i| self.is_legal(i))
    }

    pub fn has_legal(&self) -> bool {
        (0..self.x.len()).any(|i| self.is_legal(i))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub reward: f64,
    pub done: bool,
}

/// State of one running episode.
#[derive(Debug, Clone)]
pub struct EpisodeState<'g> {
    graph: &'g SubtaskGraph,
    config: &'g EnvConfig,
    obs: Observation,
    done: bool,
}

impl<'g> EpisodeState<'g> {
    /// Starts an episode from the all-zero completion vector.
    pub fn reset(
        graph: &'g SubtaskGraph,
        config: &'g EnvConfig,
        epi_remaining: usize,
        rng: &mut dyn RngCore,
    ) -> Result<Self> {
        let n = graph.len();
        config.validate(n)?;
        let (lo, hi) = config.step_budget.resolve(n);
        let step_remaining = rng.random_range(lo..=hi);
        let x = vec![false; n];
        let mut e = vec![false; n];
        graph.fill_eligibility(&x, &mut e);
        let obs = Observation { x, e, step_remaining, epi_remaining };
        let done = !obs.has_legal();
        Ok(EpisodeState { graph, config, obs, done })
    }

    pub fn observation(&self) -> &Observation {
        &self.obs
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    /// Executes the option for subtask `option`.
    pub fn step(&mut self, option: usize, rng: &mut dyn RngCore) -> Result<StepOutcome> {
        if self.done {
            return Err(Error::EpisodeFinished);
        }
        let n = self.graph.len();
        if option >= n {
            return Err(Error::IndexOutOfRange { index: option, n });
        }
        if self.obs.x[option] {
            return Err(Error::AlreadyComplete(option));
        }
        if !self.obs.e[option] {
            return Err(Error::IneligibleOption(option));
        }

        let spec = self.graph.subtask(option);
        let reward = match self.config.reward_noise {
            RewardNoise::None => spec.reward_mean,
            RewardNoise::Gaussian => {
                let z: f64 = StandardNormal.sample(rng);
                spec.reward_mean + spec.reward_noise * z
            }
            RewardNoise::UniformScale => spec.reward_mean + spec.reward_noise * rng.random_range(-1.0..=1.0),
        };
        let cost = self.config.cost_model.sample(rng);

        self.obs.x[option] = true;
        self.graph.fill_eligibility(&self.obs.x, &mut self.obs.e);
        self.obs.step_remaining = self.obs.step_remaining.saturating_sub(cost);
        self.done = self.obs.step_remaining == 0 || !self.obs.has_legal();
        if self.done {
            self.obs.epi_remaining = self.obs.epi_remaining.saturating_sub(1);
        }
        Ok(StepOutcome { reward, done: self.done })
    }
}

/// One executed option together with the state it was taken in.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub x: Vec<bool>,
    pub e: Vec<bool>,
    pub option: usize,
    pub reward: f64,
    pub done: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EpisodeRecord {
    pub steps: Vec<Transition>,
    /// Completion and eligibility after the last step.
    pub terminal: Option<(Vec<bool>, Vec<bool>)>,
}

impl EpisodeRecord {
    pub fn total_reward(&self) -> f64 {
        self.steps.iter().map(|s| s.reward).sum()
    }
}

/// Everything observed during an adaptation phase, episode by episode.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trajectory {
    pub episodes: Vec<EpisodeRecord>,
}

impl Trajectory {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn num_steps(&self) -> usize {
        self.episodes.iter().map(|ep| ep.steps.len()).sum()
    }

    pub fn steps(&self) -> impl Iterator<Item = &Transition> {
        self.episodes.iter().flat_map(|ep| ep.steps.iter())
    }

    /// Every recorded `(x, e)` pair: the state before each step plus each
    /// episode's terminal state.
    pub fn states(&self) -> impl Iterator<Item = (&[bool], &[bool])> {
        self.episodes.iter().flat_map(|ep| {
            ep.steps
                .iter()
                .map(|s| (s.x.as_slice(), s.e.as_slice()))
                .chain(ep.terminal.iter().map(|(x, e)| (x.as_slice(), e.as_slice())))
        })
    }
}

/// An agent that picks one option per decision.
pub trait Policy {
    /// `history` holds previous episodes and the steps taken so far in the
    /// current one (its last episode).
    fn act(&mut self, obs: &Observation, history: &Trajectory, rng: &mut dyn RngCore) -> Result<usize>;

    /// Called once for every observation of the episode, terminal included.
    fn observe(&mut self, _obs: &Observation) {}

    /// Called before an episode starts, with the index of the episode.
    fn begin_episode(&mut self, _episode: usize, _history: &Trajectory) -> Result<()> {
        Ok(())
    }
}

/// Runs one episode, appending it to `history`. Returns the episode return.
pub fn rollout_episode(
    graph: &SubtaskGraph,
    config: &EnvConfig,
    policy: &mut dyn Policy,
    history: &mut Trajectory,
    epi_remaining: usize,
    rng: &mut dyn RngCore,
) -> Result<f64> {
    let mut state = EpisodeState::reset(graph, config, epi_remaining, rng)?;
    policy.begin_episode(history.episodes.len(), history)?;
    history.episodes.push(EpisodeRecord::default());
    let mut total = 0.0;
    while !state.is_done() {
        let obs = state.observation().clone();
        policy.observe(&obs);
        let option = policy.act(&obs, history, rng)?;
        let out = state.step(option, rng)?;
        total += out.reward;
        let ep = history.episodes.last_mut().expect("episode pushed above");
        ep.steps.push(Transition { x: obs.x, e: obs.e, option, reward: out.reward, done: out.done });
    }
    let last = state.observation();
    policy.observe(last);
    history.episodes.last_mut().expect("episode pushed above").terminal = Some((last.x.clone(), last.e.clone()));
    Ok(total)
}
