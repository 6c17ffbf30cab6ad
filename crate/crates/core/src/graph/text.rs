//! Line-oriented text format for subtask graphs.
//!
//! ```text
//! # comment
//! N 3
//! SUBTASK 0 name=A reward=0.1 noise=0
//! SUBTASK 1 name=B reward=0.2 noise=0
//! SUBTASK 2 name=C reward=1 noise=0.2
//! PRECOND 0 TRUE
//! PRECOND 1 TRUE
//! PRECOND 2 (0&!1) | 1
//! LAYERS 0 0 1
//! ```
//!
//! `LAYERS` is optional and records the layer of every subtask.

use std::fmt::Write as _;

use super::{Literal, SopExpr, SubtaskGraph, SubtaskSpec};
use crate::error::{Error, Result};

pub fn serialize_graph(graph: &SubtaskGraph) -> String {
    let mut out = String::new();
    writeln!(out, "N {}", graph.len()).unwrap();
    for s in graph.subtasks() {
        writeln!(out, "SUBTASK {} name={} reward={} noise={}", s.id, s.name, s.reward_mean, s.reward_noise).unwrap();
    }
    for s in graph.subtasks() {
        writeln!(out, "PRECOND {} {}", s.id, s.precondition).unwrap();
    }
    if let Some(layers) = graph.layer_of() {
        out.push_str("LAYERS");
        for l in layers {
            write!(out, " {l}").unwrap();
        }
        out.push('\n');
    }
    out
}

struct PartialSubtask {
    name: String,
    reward: f64,
    noise: f64,
}

pub fn parse_graph(text: &str) -> Result<SubtaskGraph> {
    let mut n: Option<usize> = None;
    let mut subtasks: Vec<Option<PartialSubtask>> = Vec::new();
    let mut preconds: Vec<Option<SopExpr>> = Vec::new();
    let mut layers: Option<Vec<usize>> = None;

    for (lineno, raw) in text.lines().enumerate() {
        let line_no = lineno + 1;
        let syntax = |msg: String| Error::Syntax { line: line_no, msg };
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (keyword, rest) = match line.split_once(char::is_whitespace) {
            Some((k, r)) => (k, r.trim()),
            None => (line, ""),
        };

        if keyword == "N" {
            if n.is_some() {
                return Err(syntax("duplicate N header".into()));
            }
            let count = parse_usize(rest).ok_or_else(|| syntax(format!("bad count {rest:?}")))?;
            if count == 0 {
                return Err(syntax("N must be at least 1".into()));
            }
            n = Some(count);
            subtasks = (0..count).map(|_| None).collect();
            preconds = vec![None; count];
            continue;
        }
        let Some(count) = n else {
            return Err(syntax(format!("{keyword} before N header")));
        };

        match keyword {
            "SUBTASK" => {
                let mut fields = rest.split_whitespace();
                let id = fields.next().and_then(parse_usize).ok_or_else(|| syntax("missing subtask id".into()))?;
                check_id(id, count, line_no)?;
                let (mut name, mut reward, mut noise) = (None, None, None);
                for kv in fields {
                    let (k, v) = kv.split_once('=').ok_or_else(|| syntax(format!("expected key=value, got {kv:?}")))?;
                    match k {
                        "name" => name = Some(v.to_string()),
                        "reward" => reward = Some(parse_real(v).ok_or_else(|| syntax(format!("bad reward {v:?}")))?),
                        "noise" => noise = Some(parse_real(v).ok_or_else(|| syntax(format!("bad noise {v:?}")))?),
                        _ => return Err(syntax(format!("unknown field {k:?}"))),
                    }
                }
                if subtasks[id].is_some() {
                    return Err(syntax(format!("duplicate SUBTASK {id}")));
                }
                subtasks[id] = Some(PartialSubtask {
                    name: name.ok_or_else(|| syntax("missing name".into()))?,
                    reward: reward.ok_or_else(|| syntax("missing reward".into()))?,
                    noise: noise.ok_or_else(|| syntax("missing noise".into()))?,
                });
            }
            "PRECOND" => {
                let (id_str, expr) = match rest.split_once(char::is_whitespace) {
                    Some((a, b)) => (a, b.trim()),
                    None => (rest, ""),
                };
                let id = parse_usize(id_str).ok_or_else(|| syntax(format!("bad subtask id {id_str:?}")))?;
                check_id(id, count, line_no)?;
                if preconds[id].is_some() {
                    return Err(syntax(format!("duplicate PRECOND {id}")));
                }
                preconds[id] = Some(parse_expr(expr, count, line_no)?);
            }
            "LAYERS" => {
                let ls = rest
                    .split_whitespace()
                    .map(|t| parse_usize(t).ok_or_else(|| syntax(format!("bad layer {t:?}"))))
                    .collect::<Result<Vec<_>>>()?;
                if ls.len() != count {
                    return Err(syntax(format!("expected {count} layers, got {}", ls.len())));
                }
                layers = Some(ls);
            }
            other => return Err(syntax(format!("unknown keyword {other:?}"))),
        }
    }

    let eof = text.lines().count().max(1);
    let n = n.ok_or(Error::Syntax { line: eof, msg: "missing N header".into() })?;
    let mut specs = Vec::with_capacity(n);
    for (id, (s, p)) in subtasks.into_iter().zip(preconds).enumerate() {
        let s = s.ok_or(Error::Syntax { line: eof, msg: format!("missing SUBTASK {id}") })?;
        let p = p.ok_or(Error::Syntax { line: eof, msg: format!("missing PRECOND {id}") })?;
        specs.push(SubtaskSpec { id, name: s.name, reward_mean: s.reward, reward_noise: s.noise, precondition: p });
    }
    SubtaskGraph::new(specs, layers)
}

fn check_id(id: usize, n: usize, line: usize) -> Result<()> {
    if id >= n {
        return Err(Error::Syntax { line, msg: format!("subtask id {id} out of range for N={n}") });
    }
    Ok(())
}

fn parse_usize(s: &str) -> Option<usize> {
    if s.is_empty() || !s.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    s.parse().ok()
}

fn parse_real(s: &str) -> Option<f64> {
    s.parse::<f64>().ok().filter(|v| v.is_finite())
}

fn parse_expr(expr: &str, n: usize, line: usize) -> Result<SopExpr> {
    let syntax = |msg: String| Error::Syntax { line, msg };
    match expr {
        "TRUE" => return Ok(SopExpr::True),
        "FALSE" => return Ok(SopExpr::False),
        "" => return Err(syntax("missing precondition expression".into())),
        _ => {}
    }
    let mut terms = Vec::new();
    for term_str in expr.split('|') {
        let mut t = term_str.trim();
        if let Some(inner) = t.strip_prefix('(') {
            t = inner
                .strip_suffix(')')
                .ok_or_else(|| syntax(format!("unbalanced parenthesis in {term_str:?}")))?
                .trim();
        }
        if t.is_empty() {
            return Err(syntax("empty term".into()));
        }
        let mut lits = Vec::new();
        for lit_str in t.split('&') {
            let l = lit_str.trim();
            let (negated, digits) = match l.strip_prefix('!') {
                Some(d) => (true, d.trim()),
                None => (false, l),
            };
            let index = parse_usize(digits).ok_or_else(|| syntax(format!("bad literal {l:?}")))?;
            if index >= n {
                return Err(syntax(format!("literal index {index} out of range for N={n}")));
            }
            lits.push(Literal { index, negated });
        }
        terms.push(lits);
    }
    Ok(SopExpr::from_terms(terms))
}
