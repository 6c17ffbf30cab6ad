use std::fmt::Write as _;

use super::{SopExpr, SubtaskGraph};

/// Renders the graph as a DOT digraph.
///
/// Every AND term becomes its own small node feeding the subtask it enables;
/// several terms on one subtask form the OR. Negated literals use dashed red
/// edges with an `odot` head and carry `negated=true`.
pub fn export_dot(graph: &SubtaskGraph) -> String {
    let mut out = String::from("digraph subtask_graph {\n  rankdir=LR;\n");
    out.push_str("  node [shape=box, style=rounded];\n");
    for s in graph.subtasks() {
        let extra = match s.precondition {
            SopExpr::False => ", color=gray, fontcolor=gray",
            _ => "",
        };
        writeln!(out, "  s{} [label=\"{}\\nr={}\"{}];", s.id, s.name, s.reward_mean, extra).unwrap();
    }
    for s in graph.subtasks() {
        for (j, term) in s.precondition.terms().iter().enumerate() {
            let and_id = format!("and_{}_{}", s.id, j);
            writeln!(out, "  {and_id} [shape=circle, label=\"AND\", width=0.3, fontsize=8];").unwrap();
            for lit in term.literals() {
                if lit.negated {
                    writeln!(
                        out,
                        "  s{} -> {and_id} [style=dashed, color=red, arrowhead=odot, negated=true];",
                        lit.index
                    )
                    .unwrap();
                } else {
                    writeln!(out, "  s{} -> {and_id};", lit.index).unwrap();
                }
            }
            writeln!(out, "  {and_id} -> s{};", s.id).unwrap();
        }
    }
    out.push_str("}\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{Literal, SubtaskSpec};

    fn spec(id: usize, pre: SopExpr) -> SubtaskSpec {
        SubtaskSpec { id, name: format!("t{id}"), reward_mean: 1.0, reward_noise: 0.0, precondition: pre }
    }

    fn edges(dot: &str) -> Vec<&str> {
        dot.lines().filter(|l| l.contains("->")).collect()
    }

    #[test]
    fn single_node() {
        let g = SubtaskGraph::new(vec![spec(0, SopExpr::True)], None).unwrap();
        let dot = export_dot(&g);
        assert!(dot.starts_with("digraph"));
        assert!(dot.trim_end().ends_with('}'));
        assert_eq!(dot.matches("s0 [").count(), 1);
        assert!(edges(&dot).is_empty());
    }

    #[test]
    fn and_node_structure() {
        let pre = SopExpr::from_terms([vec![Literal::pos(0), Literal::pos(1)]]);
        let g = SubtaskGraph::new(vec![spec(0, SopExpr::True), spec(1, SopExpr::True), spec(2, pre)], None).unwrap();
        let dot = export_dot(&g);
        assert_eq!(dot.matches("[shape=circle, label=\"AND\"").count(), 1);
        let es = edges(&dot);
        assert_eq!(es.iter().filter(|l| l.contains("-> and_2_0")).count(), 2);
        assert_eq!(es.iter().filter(|l| l.trim_start().starts_with("and_2_0 ->")).count(), 1);
    }

    #[test]
    fn negation_attribute() {
        let pre = SopExpr::from_terms([vec![Literal::neg(0)]]);
        let g = SubtaskGraph::new(vec![spec(0, SopExpr::True), spec(1, pre)], None).unwrap();
        let dot = export_dot(&g);
        let e = edges(&dot).into_iter().find(|l| l.contains("s0 -> and_1_0")).unwrap();
        assert!(e.contains("negated=true"));
        assert!(e.contains("style=dashed"));
    }
}
