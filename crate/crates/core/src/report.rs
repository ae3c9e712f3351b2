//! Result rows, speedups and Graphviz exports.

use std::fmt::Write as _;

use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::frontend::{build_sdfg, dense_counterpart, SparseBlock};
use crate::model::{Binding, CgraConfig, Mapping, Metrics, NodeKind, Schedule, Sdfg};
use crate::scheduler::calculate_mii;

/// MII of the block's dense counterpart over the achieved II.
pub fn compute_speedup(block: &SparseBlock, final_ii: u32, cfg: &CgraConfig) -> Ratio<u32> {
    assert!(final_ii >= 1, "II must be positive");
    let dense = build_sdfg(&dense_counterpart(block)).expect("dense blocks are well formed");
    Ratio::new(calculate_mii(&dense, cfg), final_ii)
}

/// Speedup rounded to two decimals, the way result tables print it.
pub fn format_speedup(s: Ratio<u32>) -> String {
    let v = *s.numer() as f64 / *s.denom() as f64;
    let text = format!("{v:.2}");
    text.trim_end_matches('0').trim_end_matches('.').to_string()
}

/// One line of a result table.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReportRow {
    pub block: String,
    pub method: String,
    pub mii: u32,
    pub ii0: Option<u32>,
    pub cops: u32,
    pub mcids: u32,
    pub success: bool,
    pub ii: Option<u32>,
    pub speedup: Option<String>,
}

impl ReportRow {
    pub fn new(block: &str, method: &str, m: &Metrics) -> Self {
        ReportRow {
            block: block.to_string(),
            method: method.to_string(),
            mii: m.mii,
            ii0: m.ii_first_attempt,
            cops: m.cops,
            mcids: m.mcids,
            success: m.first_attempt_success,
            ii: m.final_ii,
            speedup: m.speedup.map(format_speedup),
        }
    }
}

fn label(sdfg: &Sdfg, v: crate::model::NodeId) -> String {
    let n = sdfg.node(v);
    match n.kind {
        NodeKind::InputRead => format!("c{}", n.channel.unwrap_or(0)),
        NodeKind::OutputWrite => format!("o{}", n.kernel.unwrap_or(0)),
        k => format!("{}{}", k.short(), v.0),
    }
}

/// The scheduled s-DFG, one rank per cycle; multi-cycle dependencies are dashed.
pub fn schedule_dot(sdfg: &Sdfg, schedule: &Schedule) -> String {
    let mut s = String::from("digraph sdfg {\n  rankdir=TB;\n  node [shape=circle, fontsize=10];\n");
    let mut by_time: std::collections::BTreeMap<u32, Vec<_>> = Default::default();
    for v in sdfg.ids() {
        by_time.entry(schedule.time(v).unwrap_or(u32::MAX)).or_default().push(v);
    }
    for (t, vs) in &by_time {
        let _ = write!(s, "  {{ rank=same; t{t} [shape=plaintext, label=\"t={t}\"];");
        for v in vs {
            let shape = match sdfg.kind(*v) {
                NodeKind::InputRead | NodeKind::OutputWrite => "box",
                NodeKind::Cop => "diamond",
                _ => "circle",
            };
            let _ = write!(s, " n{} [label=\"{}\", shape={shape}];", v.0, label(sdfg, *v));
        }
        s.push_str(" }\n");
    }
    let times: Vec<u32> = by_time.keys().copied().collect();
    for w in times.windows(2) {
        let _ = writeln!(s, "  t{} -> t{} [style=invis];", w[0], w[1]);
    }
    for e in &sdfg.edges {
        let dist = match (schedule.time(e.src), schedule.time(e.dst)) {
            (Some(p), Some(c)) => c.saturating_sub(p),
            _ => 0,
        };
        let internal = sdfg.kind(e.src) != NodeKind::InputRead && sdfg.kind(e.dst) != NodeKind::OutputWrite;
        let style = if internal && dist > 1 { " [style=dashed, color=red]" } else { "" };
        let _ = writeln!(s, "  n{} -> n{}{style};", e.src.0, e.dst.0);
    }
    s.push_str("}\n");
    s
}

/// Per-layer placement on the PE grid with I/O bus assignments.
pub fn placement_dot(sdfg: &Sdfg, mapping: &Mapping, cfg: &CgraConfig, ii: u32) -> String {
    let mut s = String::from("digraph tec {\n  node [shape=box, fontsize=10, width=0.6];\n");
    for layer in 0..ii {
        let _ = writeln!(s, "  subgraph cluster_{layer} {{\n    label=\"layer {layer}\";");
        let mut io = Vec::new();
        for b in mapping.bindings.iter().filter(|b| b.layer() == layer) {
            match *b {
                Binding::Read { node, bus, .. } => io.push(format!("{}@in{bus}", label(sdfg, node))),
                Binding::Write { node, bus, .. } => io.push(format!("{}@out{bus}", label(sdfg, node))),
                Binding::Op { .. } => {}
            }
        }
        let _ = writeln!(s, "    io{layer} [shape=plaintext, label=\"{}\"];", io.join(" "));
        for row in 0..cfg.rows {
            let cells: Vec<String> = (0..cfg.cols)
                .map(|col| {
                    let op = mapping.bindings.iter().find_map(|b| match *b {
                        Binding::Op { node, layer: l, row: r, col: c, .. } if l == layer && (r, c) == (row, col) => {
                            Some(label(sdfg, node))
                        }
                        _ => None,
                    });
                    let name = format!("l{layer}r{row}c{col}");
                    match op {
                        Some(op) => format!("{name} [label=\"{op}\", style=filled, fillcolor=lightblue];"),
                        None => format!("{name} [label=\"\"];"),
                    }
                })
                .collect();
            let _ = writeln!(s, "    {{ rank=same; {} }}", cells.join(" "));
            for col in 1..cfg.cols {
                let _ = writeln!(s, "    l{layer}r{row}c{} -> l{layer}r{row}c{col} [style=invis];", col - 1);
            }
        }
        for row in 1..cfg.rows {
            let _ = writeln!(s, "    l{layer}r{}c0 -> l{layer}r{row}c0 [style=invis];", row - 1);
        }
        s.push_str("  }\n");
    }
    s.push_str("}\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::binder::{map_with_retries, MapOptions};
    use crate::frontend::generate_block;

    fn shaped(n: usize, m: usize) -> SparseBlock {
        SparseBlock::from_mask("b", vec![vec![true; m]; n]).unwrap()
    }

    #[test]
    fn speedup_examples() {
        let cfg = CgraConfig::default();
        assert_eq!(compute_speedup(&shaped(8, 8), 3, &cfg), Ratio::new(8, 3));
        assert_eq!(compute_speedup(&shaped(4, 6), 2, &cfg), Ratio::new(3, 2));
        assert_eq!(compute_speedup(&shaped(4, 6), 3, &cfg), Ratio::from_integer(1));
        assert_eq!(format_speedup(Ratio::new(8, 3)), "2.67");
        assert_eq!(format_speedup(Ratio::new(3, 2)), "1.5");
        assert_eq!(format_speedup(Ratio::new(2, 1)), "2");
    }

    #[test]
    fn dot_exports_mention_every_node() {
        let block = generate_block(4, 6, 0.33, 3).unwrap();
        let g = build_sdfg(&block).unwrap();
        let cfg = CgraConfig::default();
        let out = map_with_retries(&g, &cfg, &MapOptions::default()).unwrap();
        let m = out.mapped.unwrap();
        let dot = schedule_dot(&m.sdfg, &m.schedule);
        assert!(dot.starts_with("digraph"));
        for v in m.sdfg.ids() {
            assert!(dot.contains(&format!("n{} [", v.0)));
        }
        let tec = placement_dot(&m.sdfg, &m.mapping, &cfg, m.schedule.ii);
        assert_eq!(tec.matches("subgraph cluster_").count(), m.schedule.ii as usize);
        let row = ReportRow::new("b", "sparsemap", &out.metrics);
        assert_eq!(row.ii, out.metrics.final_ii);
    }
}
