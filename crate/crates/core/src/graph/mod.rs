//! Subtask graphs: preconditions in sum-of-products form plus per-subtask rewards.
//!
//! A precondition is an OR over AND terms whose literals read the completion
//! vector, optionally through a NOT. Eligibility of subtask `i` is the value of
//! its precondition at the current completion vector.

mod dot;
mod generate;
mod text;

use std::fmt;

pub use dot::export_dot;
pub use generate::{generate_graph, GenConfig, Preset};
pub use text::{parse_graph, serialize_graph};

use crate::error::{Error, Result};

/// Largest `n` accepted by [`logical_equivalence`].
pub const MAX_ENUMERATION_VARS: usize = 24;

/// A possibly negated reference to another subtask's completion bit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Literal {
    pub index: usize,
    pub negated: bool,
}

impl Literal {
    pub fn pos(index: usize) -> Self {
        Literal { index, negated: false }
    }

    pub fn neg(index: usize) -> Self {
        Literal { index, negated: true }
    }

    #[inline]
    pub fn eval(&self, x: &[bool]) -> bool {
        x[self.index] != self.negated
    }
}

impl fmt::Display for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.negated {
            write!(f, "!{}", self.index)
        } else {
            write!(f, "{}", self.index)
        }
    }
}

/// A conjunction of literals, kept sorted by subtask index.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Term(Vec<Literal>);

impl Term {
    /// Builds a canonical term. Returns `None` when the term is contradictory
    /// (contains `k` and `!k`), since such a term can never be satisfied.
    pub fn new(mut literals: Vec<Literal>) -> Option<Term> {
        literals.sort();
        literals.dedup();
        if literals.windows(2).any(|w| w[0].index == w[1].index) {
            return None;
        }
        Some(Term(literals))
    }

    pub fn literals(&self) -> &[Literal] {
        &self.0
    }

    #[inline]
    pub fn eval(&self, x: &[bool]) -> bool {
        self.0.iter().all(|l| l.eval(x))
    }

    pub fn max_index(&self) -> Option<usize> {
        self.0.iter().map(|l| l.index).max()
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, lit) in self.0.iter().enumerate() {
            if k > 0 {
                f.write_str("&")?;
            }
            write!(f, "{lit}")?;
        }
        Ok(())
    }
}

/// A precondition in canonical sum-of-products form.
///
/// `Or` always holds at least one term and none of its terms is empty;
/// [`SopExpr::from_terms`] folds those cases into `False` and `True`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum SopExpr {
    True,
    False,
    Or(Vec<Term>),
}

impl SopExpr {
    /// Canonicalizes a list of conjunctions: literals sorted, contradictory
    /// terms dropped, duplicate terms removed, terms sorted.
    pub fn from_terms<I>(terms: I) -> SopExpr
    where
        I: IntoIterator<Item = Vec<Literal>>,
    {
        let mut out: Vec<Term> = Vec::new();
        for lits in terms {
            let Some(term) = Term::new(lits) else { continue };
            if term.0.is_empty() {
                return SopExpr::True;
            }
            out.push(term);
        }
        out.sort();
        out.dedup();
        if out.is_empty() {
            SopExpr::False
        } else {
            SopExpr::Or(out)
        }
    }

    pub fn terms(&self) -> &[Term] {
        match self {
            SopExpr::Or(t) => t,
            _ => &[],
        }
    }

    #[inline]
    pub fn eval(&self, x: &[bool]) -> bool {
        match self {
            SopExpr::True => true,
            SopExpr::False => false,
            SopExpr::Or(terms) => terms.iter().any(|t| t.eval(x)),
        }
    }

    /// Subtask indices referenced by any literal, ascending and deduplicated.
    pub fn referenced(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self.terms().iter().flat_map(|t| t.literals().iter().map(|l| l.index)).collect();
        v.sort_unstable();
        v.dedup();
        v
    }

    pub fn max_index(&self) -> Option<usize> {
        self.terms().iter().filter_map(Term::max_index).max()
    }
}

impl fmt::Display for SopExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SopExpr::True => f.write_str("TRUE"),
            SopExpr::False => f.write_str("FALSE"),
            SopExpr::Or(terms) => {
                for (k, t) in terms.iter().enumerate() {
                    if k > 0 {
                        f.write_str(" | ")?;
                    }
                    write!(f, "{t}")?;
                }
                Ok(())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubtaskSpec {
    pub id: usize,
    pub name: String,
    pub reward_mean: f64,
    pub reward_noise: f64,
    pub precondition: SopExpr,
}

/// An immutable, validated subtask graph.
///
/// Construction checks that ids are `0..N` in order, every literal points
/// inside the graph, and the precondition references are acyclic.
#[derive(Debug, Clone, PartialEq)]
pub struct SubtaskGraph {
    subtasks: Vec<SubtaskSpec>,
    layer_of: Option<Vec<usize>>,
    topo: Vec<usize>,
}

impl SubtaskGraph {
    pub fn new(subtasks: Vec<SubtaskSpec>, layer_of: Option<Vec<usize>>) -> Result<Self> {
        let n = subtasks.len();
        if n == 0 {
            return Err(Error::InvalidGraph("graph needs at least one subtask".into()));
        }
        for (pos, s) in subtasks.iter().enumerate() {
            if s.id != pos {
                return Err(Error::InvalidGraph(format!("subtask at position {pos} has id {}", s.id)));
            }
            if s.name.is_empty() || s.name.chars().any(|c| c.is_whitespace() || c == '#') {
                return Err(Error::InvalidGraph(format!("subtask {pos}: invalid name {:?}", s.name)));
            }
            if s.reward_noise.is_nan() || s.reward_noise < 0.0 || !s.reward_mean.is_finite() {
                return Err(Error::InvalidGraph(format!("subtask {pos}: bad reward parameters")));
            }
            if let Some(m) = s.precondition.max_index() {
                if m >= n {
                    return Err(Error::IndexOutOfRange { index: m, n });
                }
            }
        }
        if let Some(layers) = &layer_of {
            if layers.len() != n {
                return Err(Error::DimensionMismatch { expected: n, got: layers.len() });
            }
            for s in &subtasks {
                for k in s.precondition.referenced() {
                    if layers[k] >= layers[s.id] {
                        return Err(Error::InvalidGraph(format!(
                            "subtask {} (layer {}) references subtask {k} (layer {})",
                            s.id, layers[s.id], layers[k]
                        )));
                    }
                }
            }
        }
        let deps: Vec<Vec<usize>> = subtasks.iter().map(|s| s.precondition.referenced()).collect();
        let topo = topological_order(&deps).ok_or(Error::Cycle)?;
        Ok(SubtaskGraph { subtasks, layer_of, topo })
    }

    pub fn len(&self) -> usize {
        self.subtasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subtasks.is_empty()
    }

    pub fn subtasks(&self) -> &[SubtaskSpec] {
        &self.subtasks
    }

    pub fn subtask(&self, i: usize) -> &SubtaskSpec {
        &self.subtasks[i]
    }

    pub fn layer_of(&self) -> Option<&[usize]> {
        self.layer_of.as_deref()
    }

    /// Number of layers when a layering is attached.
    pub fn depth(&self) -> Option<usize> {
        self.layer_of.as_ref().map(|l| l.iter().max().map_or(0, |m| m + 1))
    }

    /// A topological order of the precondition DAG (dependencies first).
    pub fn topo_order(&self) -> &[usize] {
        &self.topo
    }

    pub fn preconditions(&self) -> impl Iterator<Item = &SopExpr> {
        self.subtasks.iter().map(|s| &s.precondition)
    }

    pub fn rewards(&self) -> Vec<f64> {
        self.subtasks.iter().map(|s| s.reward_mean).collect()
    }

    /// Same structure with the reward means replaced.
    pub fn with_rewards(&self, rewards: &[f64]) -> Result<SubtaskGraph> {
        if rewards.len() != self.len() {
            return Err(Error::DimensionMismatch { expected: self.len(), got: rewards.len() });
        }
        let mut g = self.clone();
        for (s, &r) in g.subtasks.iter_mut().zip(rewards) {
            s.reward_mean = r;
        }
        Ok(g)
    }

    /// Exact eligibility of every subtask at completion vector `x`.
    pub fn eval_eligibility(&self, x: &[bool]) -> Result<Vec<bool>> {
        if x.len() != self.len() {
            return Err(Error::DimensionMismatch { expected: self.len(), got: x.len() });
        }
        Ok(self.subtasks.iter().map(|s| s.precondition.eval(x)).collect())
    }

    /// Which subtasks can be completed by some sequence of executions from
    /// the all-incomplete state, found by search over reachable completion
    /// vectors. Errors above [`MAX_ENUMERATION_VARS`] subtasks.
    pub fn attainable(&self) -> Result<Vec<bool>> {
        let n = self.len();
        if n > MAX_ENUMERATION_VARS {
            return Err(Error::EnumerationBound { n, max: MAX_ENUMERATION_VARS });
        }
        let mut visited = vec![false; 1usize << n];
        let mut stack = vec![0usize];
        visited[0] = true;
        let mut reached = 0usize;
        let mut x = vec![false; n];
        while let Some(code) = stack.pop() {
            reached |= code;
            for (k, slot) in x.iter_mut().enumerate() {
                *slot = (code >> k) & 1 == 1;
            }
            for (i, s) in self.subtasks.iter().enumerate() {
                let next = code | (1 << i);
                if !x[i] && !visited[next] && s.precondition.eval(&x) {
                    visited[next] = true;
                    stack.push(next);
                }
            }
        }
        Ok((0..n).map(|i| (reached >> i) & 1 == 1).collect())
    }

    /// Allocation-free variant of [`eval_eligibility`](Self::eval_eligibility).
    pub(crate) fn fill_eligibility(&self, x: &[bool], e: &mut [bool]) {
        for (slot, s) in e.iter_mut().zip(&self.subtasks) {
            *slot = s.precondition.eval(x);
        }
    }
}

/// Kahn's algorithm with a smallest-index-first frontier. `deps[i]` lists the
/// nodes `i` depends on. Returns `None` on a cycle.
pub(crate) fn topological_order(deps: &[Vec<usize>]) -> Option<Vec<usize>> {
    use std::cmp::Reverse;
    use std::collections::BinaryHeap;

    let n = deps.len();
    let mut indeg = vec![0usize; n];
    let mut users: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (i, ds) in deps.iter().enumerate() {
        for &d in ds {
            indeg[i] += 1;
            users[d].push(i);
        }
    }
    let mut ready: BinaryHeap<Reverse<usize>> = (0..n).filter(|&i| indeg[i] == 0).map(Reverse).collect();
    let mut order = Vec::with_capacity(n);
    while let Some(Reverse(i)) = ready.pop() {
        order.push(i);
        for &u in &users[i] {
            indeg[u] -= 1;
            if indeg[u] == 0 {
                ready.push(Reverse(u));
            }
        }
    }
    (order.len() == n).then_some(order)
}

/// Iterates over every assignment of `n` boolean variables, bit `k` of the
/// counter giving variable `k`.
pub fn for_each_assignment(n: usize, mut f: impl FnMut(&[bool])) {
    let mut x = vec![false; n];
    for code in 0u64..(1u64 << n) {
        for (k, slot) in x.iter_mut().enumerate() {
            *slot = (code >> k) & 1 == 1;
        }
        f(&x);
    }
}

/// Counts assignments over `n` variables where the two expressions disagree.
pub fn logical_equivalence(a: &SopExpr, b: &SopExpr, n: usize) -> Result<(bool, u64)> {
    if n > MAX_ENUMERATION_VARS {
        return Err(Error::EnumerationBound { n, max: MAX_ENUMERATION_VARS });
    }
    for e in [a, b] {
        if let Some(m) = e.max_index() {
            if m >= n {
                return Err(Error::IndexOutOfRange { index: m, n });
            }
        }
    }
    let mut mismatches = 0u64;
    for_each_assignment(n, |x| {
        if a.eval(x) != b.eval(x) {
            mismatches += 1;
        }
    });
    Ok((mismatches == 0, mismatches))
}
