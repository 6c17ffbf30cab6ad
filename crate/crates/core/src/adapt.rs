//! Adaptation-phase policies and count-based exploration bookkeeping.
//!
//! The UCB-style bonus for observing eligibility vector `e` at a completion
//! vector `x` is
//!
//! ```text
//! w_ucb = sum_i ln(n_i(0) + n_i(1)) / n_i(e_i)
//! r_ucb = w_ucb * [x not seen before in this adaptation phase]
//! ```
//!
//! where `n_i(v)` counts how often subtask `i` had eligibility `v`.

use std::collections::HashSet;

use log::debug;
use rand::{Rng, RngCore};

use crate::env::{Observation, Policy, Trajectory};
use crate::error::{Error, Result};
use crate::graph::SubtaskGraph;
use crate::grprop::{choose_by_gradient, completion_gradient, ActionMode, GrpropParams};
use crate::infer::{infer_graph, InferredGraph};

/// Initial value of every eligibility count.
pub const COUNT_INIT: u64 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct UcbState {
    /// `counts[i] = [n_i(0), n_i(1)]`.
    counts: Vec<[u64; 2]>,
    seen_x: HashSet<Vec<bool>>,
    /// `w_ucb` for the most recent observation.
    pub weight_coeff: f64,
}

impl UcbState {
    pub fn new(n: usize) -> Self {
        UcbState { counts: vec![[COUNT_INIT; 2]; n], seen_x: HashSet::new(), weight_coeff: 0.0 }
    }

    /// Starts from explicit counts, mostly useful for tests.
    pub fn with_counts(counts: Vec<[u64; 2]>) -> Self {
        UcbState { counts, seen_x: HashSet::new(), weight_coeff: 0.0 }
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn counts(&self) -> &[[u64; 2]] {
        &self.counts
    }

    pub fn num_seen(&self) -> usize {
        self.seen_x.len()
    }

    pub fn is_novel(&self, x: &[bool]) -> bool {
        !self.seen_x.contains(x)
    }

    /// Bumps `n_i(e_i)` for every subtask and records `x`. Returns whether
    /// `x` was new.
    pub fn update_counts(&mut self, e: &[bool], x: &[bool]) -> Result<bool> {
        let n = self.counts.len();
        if e.len() != n || x.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: e.len().min(x.len()) });
        }
        for (c, &ei) in self.counts.iter_mut().zip(e) {
            c[ei as usize] += 1;
        }
        let novel = if self.seen_x.contains(x) {
            false
        } else {
            self.seen_x.insert(x.to_vec());
            true
        };
        Ok(novel)
    }

    pub fn ucb_weight(&self, e: &[bool]) -> f64 {
        let w = self.counts.iter().zip(e).map(|(c, &ei)| ((c[0] + c[1]) as f64).ln() / c[ei as usize] as f64).sum();
        w
    }

    /// `w_ucb` if `x` is novel, else 0. Does not record `x`.
    pub fn intrinsic_reward(&self, x: &[bool], e: &[bool]) -> f64 {
        if self.is_novel(x) {
            self.ucb_weight(e)
        } else {
            0.0
        }
    }

    /// Per-subtask pseudo-rewards `ln(n_i(0) + n_i(1)) / n_i(1)`: the bonus
    /// term a state with `e_i = 1` would earn. Large for subtasks that have
    /// rarely been eligible, small for ones that are eligible everywhere.
    pub fn exploration_rewards(&self) -> Vec<f64> {
        self.counts.iter().map(|c| ((c[0] + c[1]) as f64).ln() / c[1] as f64).collect()
    }
}

/// Uniform over legal options.
pub fn random_policy(obs: &Observation, rng: &mut dyn RngCore) -> Result<usize> {
    let legal: Vec<usize> = obs.legal_options().collect();
    if legal.is_empty() {
        return Err(Error::NoLegalOption);
    }
    Ok(legal[rng.random_range(0..legal.len())])
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RandomPolicy;

impl Policy for RandomPolicy {
    fn act(&mut self, obs: &Observation, _history: &Trajectory, rng: &mut dyn RngCore) -> Result<usize> {
        random_policy(obs, rng)
    }
}

/// When the explorer re-infers the graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RefitPeriod {
    EveryEpisode,
    EverySteps(usize),
}

/// Exploratory adaptation policy: GRProp on the graph inferred so far, with
/// exploration pseudo-rewards in place of the estimated rewards.
#[derive(Debug, Clone)]
pub struct MsgiGrpropExplorer {
    pub ucb: UcbState,
    pub params: GrpropParams,
    pub refit: RefitPeriod,
    /// Number of adaptation episodes, for the temperature schedule.
    pub total_episodes: usize,
    n: usize,
    episode: usize,
    steps_since_refit: usize,
    model: Option<InferredGraph>,
    pub intrinsic_return: f64,
}

impl MsgiGrpropExplorer {
    /// `params.anneal` drives the temperature over the adaptation phase.
    pub fn new(n: usize, params: GrpropParams, total_episodes: usize) -> Self {
        MsgiGrpropExplorer {
            ucb: UcbState::new(n),
            params,
            refit: RefitPeriod::EveryEpisode,
            total_episodes,
            n,
            episode: 0,
            steps_since_refit: 0,
            model: None,
            intrinsic_return: 0.0,
        }
    }

    pub fn model(&self) -> Option<&InferredGraph> {
        self.model.as_ref()
    }

    fn refit_model(&mut self, history: &Trajectory) -> Result<()> {
        self.model = Some(infer_graph(history, self.n)?);
        self.steps_since_refit = 0;
        Ok(())
    }

    fn temperature(&self) -> f64 {
        let progress =
            if self.total_episodes > 1 { self.episode as f64 / (self.total_episodes - 1) as f64 } else { 1.0 };
        self.params.temperature_at(progress)
    }
}

impl Policy for MsgiGrpropExplorer {
    fn begin_episode(&mut self, episode: usize, history: &Trajectory) -> Result<()> {
        self.episode = episode;
        if self.refit == RefitPeriod::EveryEpisode || self.model.is_none() {
            self.refit_model(history)?;
        }
        Ok(())
    }

    fn observe(&mut self, obs: &Observation) {
        let bonus = self.ucb.intrinsic_reward(&obs.x, &obs.e);
        self.ucb.weight_coeff = self.ucb.ucb_weight(&obs.e);
        self.intrinsic_return += bonus;
        if self.ucb.update_counts(&obs.e, &obs.x).is_err() {
            debug!("observation dimension does not match the explorer");
        }
    }

    fn act(&mut self, obs: &Observation, history: &Trajectory, rng: &mut dyn RngCore) -> Result<usize> {
        if let RefitPeriod::EverySteps(k) = self.refit {
            if self.model.is_none() || self.steps_since_refit >= k.max(1) {
                self.refit_model(history)?;
            }
        }
        self.steps_since_refit += 1;
        let model = match &self.model {
            Some(m) if !m.all_false() => m,
            _ => return random_policy(obs, rng),
        };
        let graph: SubtaskGraph = model.to_graph_with_rewards(&self.ucb.exploration_rewards())?;
        let grad = completion_gradient(&graph, &obs.x, &self.params)?;
        choose_by_gradient(&grad, obs, self.temperature(), ActionMode::Sample, rng)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn novelty() {
        let mut s = UcbState::new(2);
        assert!(s.update_counts(&[true, false], &[false, false]).unwrap());
        assert!(!s.update_counts(&[true, false], &[false, false]).unwrap());
        assert_eq!(s.counts(), &[[1, 3], [3, 1]]);
    }

    #[test]
    fn weight_examples() {
        let s = UcbState::new(13);
        let w = s.ucb_weight(&[true; 13]);
        assert!((w - 13.0 * 2f64.ln()).abs() < 1e-12);
        assert!((w - 9.0109).abs() < 1e-4);

        let s = UcbState::with_counts(vec![[1, 9]]);
        assert!((s.ucb_weight(&[true]) - 10f64.ln() / 9.0).abs() < 1e-12);
        assert!((s.ucb_weight(&[true]) - 0.2558).abs() < 1e-4);

        let s = UcbState::with_counts(vec![[5, 5]]);
        assert_eq!(s.ucb_weight(&[false]), s.ucb_weight(&[true]));
    }

    #[test]
    fn intrinsic_examples() {
        let mut s = UcbState::new(2);
        let x = [false, false];
        let e = [true, false];
        assert!((s.intrinsic_reward(&x, &e) - 2.0 * 2f64.ln()).abs() < 1e-12);
        s.update_counts(&e, &x).unwrap();
        assert_eq!(s.intrinsic_reward(&x, &e), 0.0);
    }

    #[test]
    fn exploration_reward_examples() {
        let s = UcbState::with_counts(vec![[1, 1], [9, 1], [1, 9]]);
        let r = s.exploration_rewards();
        assert!((r[0] - 2f64.ln()).abs() < 1e-12);
        assert!((r[1] - 10f64.ln()).abs() < 1e-12);
        assert!((r[2] - 10f64.ln() / 9.0).abs() < 1e-12);
        let uniform = UcbState::with_counts(vec![[3, 4]; 5]).exploration_rewards();
        assert!(uniform.iter().all(|&v| v == uniform[0]));
    }

    #[test]
    fn random_policy_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let single = Observation { x: vec![true, false], e: vec![true, true], step_remaining: 1, epi_remaining: 1 };
        for _ in 0..20 {
            assert_eq!(random_policy(&single, &mut rng).unwrap(), 1);
        }
        let none = Observation { x: vec![true, false], e: vec![true, false], step_remaining: 1, epi_remaining: 1 };
        assert_eq!(random_policy(&none, &mut rng).unwrap_err(), Error::NoLegalOption);
    }
}
