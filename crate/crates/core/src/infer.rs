//! Maximum-likelihood subtask-graph inference from an adaptation trajectory.
//!
//! Eligibility is a deterministic function of the completion vector, so the
//! likelihood of a precondition is 1 exactly when it reproduces every observed
//! `(x, e^i)` pair. Each precondition is induced independently with a CART
//! decision tree (Gini splits) and then flattened into sum-of-products form.
//! Reward means are the empirical means of rewards received for eligible
//! executions.

use std::collections::HashMap;

use crate::env::Trajectory;
use crate::error::{Error, Result};
use crate::graph::{topological_order, Literal, SopExpr, SubtaskGraph, SubtaskSpec};

/// Deduplicated `(x, e^i)` rows for one subtask.
#[derive(Debug, Clone, PartialEq)]
pub struct EligibilityDataset {
    pub subtask: usize,
    pub num_vars: usize,
    pub rows: Vec<(Vec<bool>, bool)>,
}

impl EligibilityDataset {
    pub fn new(subtask: usize, num_vars: usize) -> Self {
        EligibilityDataset { subtask, num_vars, rows: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

/// Splits the observed states into one dataset per subtask, in first-seen
/// order, dropping repeated completion vectors.
pub fn build_datasets(traj: &Trajectory, n: usize) -> Result<Vec<EligibilityDataset>> {
    let mut seen: HashMap<&[bool], &[bool]> = HashMap::new();
    let mut order: Vec<(&[bool], &[bool])> = Vec::new();
    for (x, e) in traj.states() {
        if x.len() != n || e.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: x.len().min(e.len()) });
        }
        match seen.get(x) {
            Some(prev) => {
                if let Some(i) = (0..n).find(|&i| prev[i] != e[i]) {
                    return Err(Error::ConflictingLabels { subtask: i });
                }
            }
            None => {
                seen.insert(x, e);
                order.push((x, e));
            }
        }
    }
    Ok((0..n)
        .map(|i| EligibilityDataset {
            subtask: i,
            num_vars: n,
            rows: order.iter().map(|(x, e)| (x.to_vec(), e[i])).collect(),
        })
        .collect())
}

/// A binary decision tree over completion bits.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DecisionTree {
    Leaf(bool),
    /// `zero` is followed when the variable is 0, `one` when it is 1.
    Split {
        var: usize,
        zero: Box<DecisionTree>,
        one: Box<DecisionTree>,
    },
}

impl DecisionTree {
    pub fn eval(&self, x: &[bool]) -> bool {
        match self {
            DecisionTree::Leaf(v) => *v,
            DecisionTree::Split { var, zero, one } => {
                if x[*var] {
                    one.eval(x)
                } else {
                    zero.eval(x)
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            DecisionTree::Leaf(_) => 0,
            DecisionTree::Split { zero, one, .. } => 1 + zero.depth().max(one.depth()),
        }
    }

    pub fn num_leaves(&self) -> usize {
        match self {
            DecisionTree::Leaf(_) => 1,
            DecisionTree::Split { zero, one, .. } => zero.num_leaves() + one.num_leaves(),
        }
    }
}

/// Weighted Gini impurity of splitting `rows` on `var`, or `None` when one
/// side would be empty.
pub fn split_impurity(rows: &[&(Vec<bool>, bool)], var: usize) -> Option<f64> {
    let (mut n1, mut pos1, mut pos0) = (0usize, 0usize, 0usize);
    for (x, y) in rows {
        if x[var] {
            n1 += 1;
            pos1 += *y as usize;
        } else {
            pos0 += *y as usize;
        }
    }
    let n = rows.len();
    let n0 = n - n1;
    if n0 == 0 || n1 == 0 {
        return None;
    }
    // n_side * gini(side) = 2 * pos * neg / n_side
    let side = |pos: usize, cnt: usize| 2.0 * pos as f64 * (cnt - pos) as f64 / cnt as f64;
    Some((side(pos0, n0) + side(pos1, n1)) / n as f64)
}

const TIE_EPS: f64 = 1e-12;

/// CART over every variable of the dataset.
pub fn fit_cart(ds: &EligibilityDataset) -> DecisionTree {
    let candidates: Vec<usize> = (0..ds.num_vars).collect();
    fit_cart_with(ds, &candidates)
}

/// CART restricted to the given candidate split variables.
///
/// Each node splits on the candidate with the lowest weighted Gini impurity
/// (lowest index on ties) and recursion stops at pure nodes or when no
/// remaining candidate separates the rows. No depth limit or pruning.
pub fn fit_cart_with(ds: &EligibilityDataset, candidates: &[usize]) -> DecisionTree {
    let rows: Vec<&(Vec<bool>, bool)> = ds.rows.iter().collect();
    let mut available = candidates.to_vec();
    available.sort_unstable();
    available.dedup();
    grow(&rows, &mut available)
}

fn grow(rows: &[&(Vec<bool>, bool)], available: &mut Vec<usize>) -> DecisionTree {
    let pos = rows.iter().filter(|r| r.1).count();
    if pos == 0 {
        return DecisionTree::Leaf(false);
    }
    if pos == rows.len() {
        return DecisionTree::Leaf(true);
    }
    let mut best: Option<(usize, f64)> = None;
    for (slot, &var) in available.iter().enumerate() {
        if let Some(g) = split_impurity(rows, var) {
            if best.is_none_or(|(_, b)| g < b - TIE_EPS) {
                best = Some((slot, g));
            }
        }
    }
    let Some((slot, _)) = best else {
        // Unseparable with the remaining variables: majority, ties to 0.
        return DecisionTree::Leaf(2 * pos > rows.len());
    };
    let var = available.remove(slot);
    let (ones, zeros): (Vec<_>, Vec<_>) = rows.iter().partition(|r| r.0[var]);
    let zero = grow(&zeros, available);
    let one = grow(&ones, available);
    available.insert(slot, var);
    DecisionTree::Split { var, zero: Box::new(zero), one: Box::new(one) }
}

/// Flattens a tree into sum-of-products: one term per positive leaf, built
/// from the path (1-branch positive, 0-branch negated).
pub fn tree_to_sop(tree: &DecisionTree) -> SopExpr {
    fn walk(t: &DecisionTree, path: &mut Vec<Literal>, out: &mut Vec<Vec<Literal>>, all_true: &mut bool) {
        match t {
            DecisionTree::Leaf(true) => out.push(path.clone()),
            DecisionTree::Leaf(false) => *all_true = false,
            DecisionTree::Split { var, zero, one } => {
                path.push(Literal::neg(*var));
                walk(zero, path, out, all_true);
                path.pop();
                path.push(Literal::pos(*var));
                walk(one, path, out, all_true);
                path.pop();
            }
        }
    }
    let mut terms = Vec::new();
    let mut all_true = true;
    walk(tree, &mut Vec::new(), &mut terms, &mut all_true);
    if all_true {
        return SopExpr::True;
    }
    SopExpr::from_terms(terms)
}

/// Empirical reward mean per subtask over eligible executions; `None` where
/// the subtask was never executed.
pub fn infer_rewards(traj: &Trajectory, n: usize) -> (Vec<Option<f64>>, Vec<usize>) {
    let mut sums = vec![0.0; n];
    let mut counts = vec![0usize; n];
    for s in traj.steps() {
        if s.option < n && s.e[s.option] {
            sums[s.option] += s.reward;
            counts[s.option] += 1;
        }
    }
    let est = sums.iter().zip(&counts).map(|(&s, &c)| (c > 0).then(|| s / c as f64)).collect();
    (est, counts)
}

#[derive(Debug, Clone, PartialEq)]
pub struct InferredGraph {
    pub preconditions: Vec<SopExpr>,
    pub reward_estimates: Vec<Option<f64>>,
    pub observation_counts: Vec<usize>,
}

impl InferredGraph {
    pub fn len(&self) -> usize {
        self.preconditions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.preconditions.is_empty()
    }

    /// Reward estimates with unobserved subtasks set to `default`.
    pub fn rewards_or(&self, default: f64) -> Vec<f64> {
        self.reward_estimates.iter().map(|r| r.unwrap_or(default)).collect()
    }

    /// True when no subtask is believed to be ever eligible.
    pub fn all_false(&self) -> bool {
        self.preconditions.iter().all(|p| *p == SopExpr::False)
    }

    /// Builds an executable graph with the given rewards.
    ///
    /// Induced preconditions can reference each other cyclically; such cycles
    /// are broken by dropping the literals that close them, starting from the
    /// stuck subtask with the fewest unresolved references.
    pub fn to_graph_with_rewards(&self, rewards: &[f64]) -> Result<SubtaskGraph> {
        let n = self.len();
        if rewards.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: rewards.len() });
        }
        let preconditions = break_cycles(&self.preconditions);
        let specs = preconditions
            .into_iter()
            .zip(rewards)
            .enumerate()
            .map(|(id, (precondition, &reward_mean))| SubtaskSpec {
                id,
                name: format!("S{id}"),
                reward_mean,
                reward_noise: 0.0,
                precondition,
            })
            .collect();
        SubtaskGraph::new(specs, None)
    }

    /// Executable graph with estimated rewards, unobserved ones set to 0.
    pub fn to_graph(&self) -> Result<SubtaskGraph> {
        self.to_graph_with_rewards(&self.rewards_or(0.0))
    }
}

fn break_cycles(pre: &[SopExpr]) -> Vec<SopExpr> {
    let n = pre.len();
    let mut out = pre.to_vec();
    let deps = |out: &[SopExpr]| -> Vec<Vec<usize>> { out.iter().map(SopExpr::referenced).collect() };
    if topological_order(&deps(&out)).is_some() {
        return out;
    }
    let mut resolved = vec![false; n];
    loop {
        // Resolve everything reachable without cycles.
        let mut progress = true;
        while progress {
            progress = false;
            for i in 0..n {
                if !resolved[i] && out[i].referenced().iter().all(|&k| resolved[k] && k != i) {
                    resolved[i] = true;
                    progress = true;
                }
            }
        }
        if resolved.iter().all(|&r| r) {
            return out;
        }
        let victim = (0..n)
            .filter(|&i| !resolved[i])
            .min_by_key(|&i| (out[i].referenced().iter().filter(|&&k| !resolved[k] || k == i).count(), i))
            .expect("some node unresolved");
        let terms = out[victim]
            .terms()
            .iter()
            .map(|t| {
                t.literals().iter().copied().filter(|l| resolved[l.index] && l.index != victim).collect::<Vec<_>>()
            })
            .collect::<Vec<_>>();
        out[victim] = SopExpr::from_terms(terms);
        resolved[victim] = true;
    }
}

/// Infers preconditions and rewards for all `n` subtasks. A subtask's own
/// completion bit is never used to explain its eligibility.
pub fn infer_graph(traj: &Trajectory, n: usize) -> Result<InferredGraph> {
    let datasets = build_datasets(traj, n)?;
    let preconditions = datasets
        .iter()
        .map(|ds| {
            let candidates: Vec<usize> = (0..n).filter(|&k| k != ds.subtask).collect();
            tree_to_sop(&fit_cart_with(ds, &candidates))
        })
        .collect();
    let (reward_estimates, observation_counts) = infer_rewards(traj, n);
    Ok(InferredGraph { preconditions, reward_estimates, observation_counts })
}
