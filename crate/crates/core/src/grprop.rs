//! Graph reward propagation (GRProp).
//!
//! The boolean circuit of a subtask graph is replaced by smooth surrogates:
//!
//! ```text
//! p^i      = lambda_or * e~^i + (1 - lambda_or) * x^i
//! e~^i     = OR~ over the AND terms of subtask i
//! y~^j     = AND~ over the literals of term j
//! literal  = p^k for k, NOT~(p^k) for !k
//!
//! OR~(v)   = softmax(w_or * v) . v
//! AND~(v)  = zeta(sum(v), w_and) / zeta(d, w_and),  zeta(s, b) = ln(1 + exp(b s)) / b
//! NOT~(v)  = -w_not * v
//! ```
//!
//! The smoothed return is `U~ = r . p`. Its gradient with respect to the
//! completion vector scores how much completing each subtask helps, and the
//! policy is a softmax over `T * grad` restricted to legal options.

use rand::{Rng, RngCore};

use crate::env::{Observation, Policy, Trajectory};
use crate::error::{Error, Result};
use crate::graph::{SopExpr, SubtaskGraph};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GrpropParams {
    pub lambda_or: f64,
    pub w_or: f64,
    pub w_and: f64,
    pub w_not: f64,
    pub temperature: f64,
    /// Linear schedule `(start, end)` replacing `temperature` when set.
    pub anneal: Option<(f64, f64)>,
}

impl Default for GrpropParams {
    fn default() -> Self {
        GrpropParams { lambda_or: 0.6, w_or: 2.0, w_and: 3.0, w_not: 2.0, temperature: 40.0, anneal: None }
    }
}

impl GrpropParams {
    pub fn validate(&self) -> Result<()> {
        let ok = (0.0..=1.0).contains(&self.lambda_or)
            && self.w_or > 0.0
            && self.w_and > 0.0
            && self.w_not > 0.0
            && self.temperature > 0.0
            && self.anneal.is_none_or(|(a, b)| a > 0.0 && b > 0.0);
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParam(format!("invalid GRProp parameters {self:?}")))
        }
    }

    /// Temperature at `progress` in `[0, 1]` through the phase.
    pub fn temperature_at(&self, progress: f64) -> f64 {
        match self.anneal {
            Some((start, end)) => start + (end - start) * progress.clamp(0.0, 1.0),
            None => self.temperature,
        }
    }
}

/// Soft-plus `zeta(s, beta) = ln(1 + exp(beta * s)) / beta`, overflow-safe.
pub fn softplus(s: f64, beta: f64) -> f64 {
    let z = beta * s;
    (z.max(0.0) + (-z.abs()).exp().ln_1p()) / beta
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let ez = z.exp();
        ez / (1.0 + ez)
    }
}

fn softmax_weights(values: &[f64], w: f64) -> Vec<f64> {
    let m = values.iter().fold(f64::NEG_INFINITY, |a, &v| a.max(w * v));
    let mut ws: Vec<f64> = values.iter().map(|&v| (w * v - m).exp()).collect();
    let z: f64 = ws.iter().sum();
    ws.iter_mut().for_each(|v| *v /= z);
    ws
}

pub fn soft_or(values: &[f64], w_or: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::InvalidParam("soft OR of an empty vector".into()));
    }
    Ok(softmax_weights(values, w_or).iter().zip(values).map(|(s, v)| s * v).sum())
}

pub fn soft_and(values: &[f64], w_and: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::InvalidParam("soft AND of an empty vector".into()));
    }
    let sum: f64 = values.iter().sum();
    Ok(softplus(sum, w_and) / softplus(values.len() as f64, w_and))
}

pub fn soft_not(value: f64, w_not: f64) -> f64 {
    -w_not * value
}

#[derive(Debug, Clone)]
struct TermEval {
    /// `(subtask, negated)` per literal.
    literals: Vec<(usize, bool)>,
    inputs: Vec<f64>,
    output: f64,
}

/// Forward values of the smoothed circuit, kept for the reverse sweep.
#[derive(Debug, Clone)]
pub struct SmoothEval {
    params: GrpropParams,
    rewards: Vec<f64>,
    order: Vec<usize>,
    terms: Vec<Vec<TermEval>>,
    progress: Vec<f64>,
    soft_elig: Vec<f64>,
}

impl SmoothEval {
    /// `p^i` per subtask.
    pub fn progress(&self) -> &[f64] {
        &self.progress
    }

    /// `e~^i` per subtask.
    pub fn soft_eligibility(&self) -> &[f64] {
        &self.soft_elig
    }

    /// AND-term outputs `y~` of subtask `i`.
    pub fn term_outputs(&self, i: usize) -> Vec<f64> {
        self.terms[i].iter().map(|t| t.output).collect()
    }

    /// Smoothed return `U~ = r . p`.
    pub fn utility(&self) -> f64 {
        self.rewards.iter().zip(&self.progress).map(|(r, p)| r * p).sum()
    }
}

pub fn smooth_forward(graph: &SubtaskGraph, x: &[f64], params: &GrpropParams) -> Result<SmoothEval> {
    let n = graph.len();
    if x.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: x.len() });
    }
    let lam = params.lambda_or;
    let mut progress = vec![0.0; n];
    let mut soft_elig = vec![0.0; n];
    let mut terms: Vec<Vec<TermEval>> = vec![Vec::new(); n];
    for &i in graph.topo_order() {
        let pre = &graph.subtask(i).precondition;
        let e = match pre {
            SopExpr::True => 1.0,
            SopExpr::False => 0.0,
            SopExpr::Or(ts) => {
                let evals: Vec<TermEval> = ts
                    .iter()
                    .map(|t| {
                        let literals: Vec<(usize, bool)> = t.literals().iter().map(|l| (l.index, l.negated)).collect();
                        let inputs: Vec<f64> = literals
                            .iter()
                            .map(|&(k, neg)| if neg { soft_not(progress[k], params.w_not) } else { progress[k] })
                            .collect();
                        let output = soft_and(&inputs, params.w_and).expect("canonical terms are non-empty");
                        TermEval { literals, inputs, output }
                    })
                    .collect();
                let ys: Vec<f64> = evals.iter().map(|t| t.output).collect();
                terms[i] = evals;
                soft_or(&ys, params.w_or).expect("canonical OR is non-empty")
            }
        };
        soft_elig[i] = e;
        progress[i] = lam * e + (1.0 - lam) * x[i];
    }
    Ok(SmoothEval {
        params: *params,
        rewards: graph.rewards(),
        order: graph.topo_order().to_vec(),
        terms,
        progress,
        soft_elig,
    })
}

/// Reverse-mode gradient of `U~` with respect to the completion vector.
pub fn smooth_backward(eval: &SmoothEval) -> Vec<f64> {
    let p = &eval.params;
    let lam = p.lambda_or;
    let mut adj_progress = eval.rewards.clone();
    let mut grad = vec![0.0; adj_progress.len()];
    let and_norm = |d: usize| softplus(d as f64, p.w_and);
    for &i in eval.order.iter().rev() {
        let a = adj_progress[i];
        grad[i] = (1.0 - lam) * a;
        let a_elig = lam * a;
        let terms = &eval.terms[i];
        if a_elig == 0.0 || terms.is_empty() {
            continue;
        }
        let ys: Vec<f64> = terms.iter().map(|t| t.output).collect();
        let s = softmax_weights(&ys, p.w_or);
        let out = eval.soft_elig[i];
        for (j, term) in terms.iter().enumerate() {
            let a_y = a_elig * s[j] * (1.0 + p.w_or * (ys[j] - out));
            let sum: f64 = term.inputs.iter().sum();
            let a_in = a_y * sigmoid(p.w_and * sum) / and_norm(term.inputs.len());
            for &(k, neg) in &term.literals {
                adj_progress[k] += if neg { -p.w_not * a_in } else { a_in };
            }
        }
    }
    grad
}

/// `grad_x U~` at a binary completion vector.
pub fn completion_gradient(graph: &SubtaskGraph, x: &[bool], params: &GrpropParams) -> Result<Vec<f64>> {
    let xf: Vec<f64> = x.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
    Ok(smooth_backward(&smooth_forward(graph, &xf, params)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActionMode {
    Sample,
    Argmax,
}

/// Masked softmax over `temperature * grad`; argmax ties go to the lowest index.
pub fn choose_by_gradient(
    grad: &[f64],
    obs: &Observation,
    temperature: f64,
    mode: ActionMode,
    rng: &mut dyn RngCore,
) -> Result<usize> {
    let legal: Vec<usize> = obs.legal_options().collect();
    if legal.is_empty() {
        return Err(Error::NoLegalOption);
    }
    let logits: Vec<f64> = legal.iter().map(|&i| temperature * grad[i]).collect();
    match mode {
        ActionMode::Argmax => {
            let mut best = 0;
            for k in 1..legal.len() {
                if logits[k] > logits[best] {
                    best = k;
                }
            }
            Ok(legal[best])
        }
        ActionMode::Sample => {
            let probs = softmax_weights(&logits, 1.0);
            let u: f64 = rng.random();
            let mut acc = 0.0;
            for (k, pk) in probs.iter().enumerate() {
                acc += pk;
                if u < acc {
                    return Ok(legal[k]);
                }
            }
            Ok(*legal.last().expect("non-empty"))
        }
    }
}

pub fn grprop_policy(
    graph: &SubtaskGraph,
    obs: &Observation,
    params: &GrpropParams,
    mode: ActionMode,
    rng: &mut dyn RngCore,
) -> Result<usize> {
    if !obs.has_legal() {
        return Err(Error::NoLegalOption);
    }
    let grad = completion_gradient(graph, &obs.x, params)?;
    choose_by_gradient(&grad, obs, params.temperature, mode, rng)
}

/// GRProp as an executable [`Policy`] over a fixed graph.
#[derive(Debug, Clone)]
pub struct GrpropPolicy {
    pub graph: SubtaskGraph,
    pub params: GrpropParams,
    pub mode: ActionMode,
}

impl GrpropPolicy {
    pub fn new(graph: SubtaskGraph, params: GrpropParams) -> Self {
        GrpropPolicy { graph, params, mode: ActionMode::Sample }
    }
}

impl Policy for GrpropPolicy {
    fn act(&mut self, obs: &Observation, _history: &Trajectory, rng: &mut dyn RngCore) -> Result<usize> {
        grprop_policy(&self.graph, obs, &self.params, self.mode, rng)
    }
}
