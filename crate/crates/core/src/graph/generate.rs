//! Random layered subtask graphs.
//!
//! Layer 0 subtasks are always eligible. A subtask in layer `l > 0` gets an OR
//! of AND terms; each term has at least one positive literal on layer `l - 1`
//! and its other literals on any lower layer. Distractors are ordinary
//! subtasks that additionally appear negated in terms of higher layers.

use std::collections::HashSet;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Literal, SopExpr, SubtaskGraph, SubtaskSpec, MAX_ENUMERATION_VARS};
use crate::error::{Error, Result};

const MAX_RESAMPLES: usize = 200;

#[derive(Debug, Clone, PartialEq)]
pub struct GenConfig {
    pub subtasks_per_layer: Vec<usize>,
    /// Trailing subtasks of each layer that act as distractors.
    pub distractors_per_layer: Vec<usize>,
    /// Positive literals per AND term.
    pub and_fan_in: (usize, usize),
    /// AND terms per precondition.
    pub or_fan_in: (usize, usize),
    /// Probability that a term also gets one negated literal on a
    /// non-distractor lower-layer subtask.
    pub not_probability: f64,
    /// Number of higher-layer terms each distractor is negated into.
    pub distractor_parents: (usize, usize),
    pub reward_range_per_layer: Vec<(f64, f64)>,
    /// Reward noise as a fraction of the reward mean.
    pub reward_noise_frac: f64,
}

impl GenConfig {
    pub fn layers(&self) -> usize {
        self.subtasks_per_layer.len()
    }

    pub fn num_subtasks(&self) -> usize {
        self.subtasks_per_layer.iter().sum()
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InfeasibleConfig(m.to_string()));
        let layers = self.layers();
        if layers == 0 || self.subtasks_per_layer.contains(&0) {
            return bad("every layer needs at least one subtask");
        }
        if self.distractors_per_layer.len() != layers || self.reward_range_per_layer.len() != layers {
            return bad("per-layer lists must all have one entry per layer");
        }
        if self.and_fan_in.0 < 1 || self.or_fan_in.0 < 1 {
            return bad("fan-in minima must be at least 1");
        }
        if self.and_fan_in.0 > self.and_fan_in.1
            || self.or_fan_in.0 > self.or_fan_in.1
            || self.distractor_parents.0 > self.distractor_parents.1
        {
            return bad("fan-in range with min > max");
        }
        if !(0.0..=1.0).contains(&self.not_probability) {
            return bad("not_probability must lie in [0, 1]");
        }
        if self.reward_noise_frac.is_nan() || self.reward_noise_frac < 0.0 {
            return bad("reward_noise_frac must be non-negative");
        }
        for (l, (&c, &d)) in self.subtasks_per_layer.iter().zip(&self.distractors_per_layer).enumerate() {
            if d > c || (d == c && l + 1 < layers) {
                return Err(Error::InfeasibleConfig(format!("layer {l} needs at least one non-distractor subtask")));
            }
        }
        for &(lo, hi) in &self.reward_range_per_layer {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return bad("reward range with min > max");
            }
        }
        let mut below = 0;
        for l in 1..layers {
            below += self.subtasks_per_layer[l - 1] - self.distractors_per_layer[l - 1];
            if self.and_fan_in.0 > below {
                return Err(Error::InfeasibleConfig(format!(
                    "AND fan-in minimum {} exceeds the {below} candidate subtasks below layer {l}",
                    self.and_fan_in.0
                )));
            }
        }
        Ok(())
    }
}

/// Named settings for the benchmark task families.
///
/// Depth and subtask counts per layer follow the Playground D1-D4 settings;
/// `Mining` is a deeper, wider task without distractors.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    D1,
    D2,
    D3,
    D4,
    Mining,
}

impl Preset {
    pub fn name(self) -> &'static str {
        match self {
            Preset::D1 => "D1",
            Preset::D2 => "D2",
            Preset::D3 => "D3",
            Preset::D4 => "D4",
            Preset::Mining => "mining",
        }
    }

    pub fn config(self) -> GenConfig {
        let (per_layer, distractors, rewards): (Vec<usize>, Vec<usize>, Vec<(f64, f64)>) = match self {
            Preset::D1 => (vec![6, 4, 2, 1], vec![2, 1, 0, 0], vec![(0.1, 0.2), (0.3, 0.4), (0.7, 0.9), (1.8, 2.0)]),
            Preset::D2 => (vec![7, 5, 2, 1], vec![2, 2, 0, 0], vec![(0.1, 0.2), (0.3, 0.4), (0.7, 0.9), (1.8, 2.0)]),
            Preset::D3 => (
                vec![5, 4, 4, 2, 1],
                vec![1, 1, 1, 0, 0],
                vec![(0.1, 0.2), (0.3, 0.4), (0.6, 0.7), (1.0, 1.2), (2.0, 2.2)],
            ),
            Preset::D4 => (
                vec![4, 3, 3, 3, 2, 1],
                vec![0; 6],
                vec![(0.1, 0.2), (0.3, 0.4), (0.6, 0.7), (1.0, 1.2), (1.4, 1.6), (2.4, 2.6)],
            ),
            Preset::Mining => (
                vec![6, 5, 4, 3, 2, 1],
                vec![0; 6],
                vec![(0.1, 0.2), (0.3, 0.4), (0.6, 0.7), (1.0, 1.2), (1.4, 1.6), (2.4, 2.6)],
            ),
        };
        GenConfig {
            subtasks_per_layer: per_layer,
            distractors_per_layer: distractors,
            and_fan_in: (1, 3),
            or_fan_in: (1, 2),
            not_probability: 0.25,
            distractor_parents: (1, 3),
            reward_range_per_layer: rewards,
            reward_noise_frac: 0.2,
        }
    }
}

impl std::str::FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "d1" => Ok(Preset::D1),
            "d2" => Ok(Preset::D2),
            "d3" => Ok(Preset::D3),
            "d4" => Ok(Preset::D4),
            "mining" => Ok(Preset::Mining),
            _ => Err(Error::InvalidParam(format!("unknown preset {s:?}"))),
        }
    }
}

struct Slot {
    layer: usize,
    distractor: bool,
}

/// Generates a layered graph; a pure function of `(config, seed)`.
///
/// Draws are repeated until every subtask can actually be completed from
/// the initial state (checked for graphs of up to
/// [`MAX_ENUMERATION_VARS`] subtasks).
pub fn generate_graph(config: &GenConfig, seed: u64) -> Result<SubtaskGraph> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..MAX_RESAMPLES {
        let g = draw_graph(config, &mut rng)?;
        if g.len() > MAX_ENUMERATION_VARS || g.attainable()?.iter().all(|&a| a) {
            return Ok(g);
        }
    }
    Err(Error::InfeasibleConfig("no draw had every subtask attainable".into()))
}

fn draw_graph(config: &GenConfig, rng: &mut ChaCha8Rng) -> Result<SubtaskGraph> {
    let mut slots = Vec::with_capacity(config.num_subtasks());
    for (layer, (&count, &d)) in config.subtasks_per_layer.iter().zip(&config.distractors_per_layer).enumerate() {
        for k in 0..count {
            slots.push(Slot { layer, distractor: k >= count - d });
        }
    }
    let n = slots.len();
    let real_in =
        |l: usize| -> Vec<usize> { (0..n).filter(|&i| slots[i].layer == l && !slots[i].distractor).collect() };

    let mut terms_of: Vec<Vec<Vec<Literal>>> = vec![Vec::new(); n];
    for layer in 1..config.layers() {
        let prev = real_in(layer - 1);
        let below: Vec<usize> = (0..layer).flat_map(&real_in).collect();
        let mut used: HashSet<SopExpr> = HashSet::new();
        for i in (0..n).filter(|&i| slots[i].layer == layer) {
            let mut attempt = 0;
            let terms = loop {
                attempt += 1;
                if attempt > MAX_RESAMPLES {
                    return Err(Error::InfeasibleConfig(format!(
                        "could not draw a distinct precondition for subtask {i}"
                    )));
                }
                let terms = draw_precondition(config, &prev, &below, rng);
                let canon = SopExpr::from_terms(terms.clone());
                if canon.terms().len() == terms.len() && used.insert(canon) {
                    break terms;
                }
            };
            terms_of[i] = terms;
        }
    }

    // Distractors disable some higher-layer terms once completed.
    for d in (0..n).filter(|&i| slots[i].distractor) {
        let mut targets: Vec<(usize, usize)> = (0..n)
            .filter(|&i| slots[i].layer > slots[d].layer)
            .flat_map(|i| (0..terms_of[i].len()).map(move |t| (i, t)))
            .collect();
        targets.shuffle(rng);
        let want = rng.random_range(config.distractor_parents.0..=config.distractor_parents.1);
        for (i, t) in targets.into_iter().take(want) {
            let term = &mut terms_of[i][t];
            if term.iter().all(|l| l.index != d) {
                term.push(Literal::neg(d));
            }
        }
    }

    let mut subtasks = Vec::with_capacity(n);
    let mut counters = vec![(0usize, 0usize); config.layers()];
    for (i, slot) in slots.iter().enumerate() {
        let (lo, hi) = config.reward_range_per_layer[slot.layer];
        let reward = if hi > lo { rng.random_range(lo..=hi) } else { lo };
        let reward = (reward * 1e4).round() / 1e4;
        let c = &mut counters[slot.layer];
        let name = if slot.distractor {
            c.1 += 1;
            format!("L{}D{}", slot.layer, c.1 - 1)
        } else {
            c.0 += 1;
            format!("L{}T{}", slot.layer, c.0 - 1)
        };
        let precondition = if slot.layer == 0 { SopExpr::True } else { SopExpr::from_terms(terms_of[i].clone()) };
        subtasks.push(SubtaskSpec {
            id: i,
            name,
            reward_mean: reward,
            reward_noise: ((reward * config.reward_noise_frac).abs() * 1e6).round() / 1e6,
            precondition,
        });
    }
    let layer_of = slots.iter().map(|s| s.layer).collect();
    SubtaskGraph::new(subtasks, Some(layer_of))
}

fn draw_precondition(config: &GenConfig, prev: &[usize], below: &[usize], rng: &mut ChaCha8Rng) -> Vec<Vec<Literal>> {
    let n_terms = rng.random_range(config.or_fan_in.0..=config.or_fan_in.1);
    (0..n_terms)
        .map(|_| {
            let anchor = *prev.choose(rng).expect("non-empty previous layer");
            let size = rng.random_range(config.and_fan_in.0..=config.and_fan_in.1).min(below.len());
            let mut pool: Vec<usize> = below.iter().copied().filter(|&k| k != anchor).collect();
            pool.shuffle(rng);
            let mut pos: Vec<usize> = std::iter::once(anchor).chain(pool.iter().copied().take(size - 1)).collect();
            pos.sort_unstable();
            let mut lits: Vec<Literal> = pos.iter().map(|&k| Literal::pos(k)).collect();
            if rng.random_bool(config.not_probability) {
                let rest: Vec<usize> = pool.into_iter().filter(|k| !pos.contains(k)).collect();
                if let Some(&k) = rest.choose(rng) {
                    lits.push(Literal::neg(k));
                }
            }
            lits
        })
        .collect()
}
