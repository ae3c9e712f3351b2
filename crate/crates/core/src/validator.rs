//! Independent legality checks for a scheduled and bound s-DFG.
//!
//! Everything here is re-derived from the schedule, the bindings and the routes;
//! nothing is taken from the scheduler's tables or the binder's route plan.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::frontend::SparseBlock;
use crate::model::{Binding, CgraConfig, Edge, Mapping, Metrics, NodeId, NodeKind, Route, Schedule, Sdfg};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    Unscheduled { node: NodeId },
    Timing { edge: Edge, producer: u32, consumer: u32, rule: String },
    ModuloBound { layer: u32, resource: String, used: u32, limit: u32 },
    Unbound { node: NodeId },
    DoubleBinding { node: NodeId },
    WrongBindingKind { node: NodeId },
    WrongLayer { node: NodeId, bound: u32, scheduled: u32 },
    OutOfRange { node: NodeId },
    /// Two nodes claim one PE or bus in the same layer.
    Exclusivity { layer: u32, resource: String, nodes: Vec<NodeId> },
    IllegalDrive { node: NodeId },
    MissingRoute { edge: Edge },
    ExtraRoute { edge: Edge },
    IllegalRoute { edge: Edge, route: Route, reason: String },
    GrfPort { layer: u32, port: String, used: u32, limit: u32 },
    GrfRegister { register: u32, layer: u32, edges: Vec<Edge> },
    GrfCapacity { edge: Edge },
    LrfCapacity { row: u32, col: u32, layer: u32, used: u32, limit: u32 },
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
    pub cops: u32,
    pub mcids: u32,
}

impl ValidationReport {
    pub fn is_legal(&self) -> bool {
        self.violations.is_empty()
    }

    /// Whether the recounted COPs and MCIDs agree with the final mapping's metrics.
    pub fn agrees_with(&self, metrics: &Metrics) -> bool {
        self.cops == metrics.final_cops && self.mcids == metrics.final_mcids
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

pub fn validate(sdfg: &Sdfg, cfg: &CgraConfig, schedule: &Schedule, mapping: &Mapping) -> ValidationReport {
    let mut out = Vec::new();
    let ii = schedule.ii.max(1);
    let times: Vec<Option<u32>> = sdfg.ids().map(|v| schedule.times.get(v.index()).copied().flatten()).collect();
    for v in sdfg.ids() {
        if times[v.index()].is_none() {
            out.push(Violation::Unscheduled { node: v });
        }
    }
    let time = |v: NodeId| times[v.index()];

    check_timing(sdfg, &time, &mut out);
    check_modulo_bounds(sdfg, cfg, ii, &time, &mut out);
    let bound = check_bindings(sdfg, cfg, ii, &time, mapping, &mut out);
    check_routes(sdfg, cfg, ii, &time, mapping, &bound, &mut out);

    let cops = sdfg.nodes.iter().filter(|n| n.kind == NodeKind::Cop).count() as u32;
    let mcids = sdfg
        .edges
        .iter()
        .filter(|e| is_internal(sdfg, e))
        .filter(|e| matches!((time(e.src), time(e.dst)), (Some(p), Some(c)) if c > p + 1))
        .count() as u32;
    ValidationReport { violations: out, cops, mcids }
}

fn is_internal(sdfg: &Sdfg, e: &Edge) -> bool {
    sdfg.kind(e.src) != NodeKind::InputRead && sdfg.kind(e.dst) != NodeKind::OutputWrite
}

fn check_timing(sdfg: &Sdfg, time: &dyn Fn(NodeId) -> Option<u32>, out: &mut Vec<Violation>) {
    for &e in &sdfg.edges {
        let (Some(p), Some(c)) = (time(e.src), time(e.dst)) else { continue };
        let (ok, rule) = if sdfg.kind(e.src) == NodeKind::InputRead {
            (c == p, "reading and consumer share a cycle")
        } else if sdfg.kind(e.dst) == NodeKind::OutputWrite {
            (c == p + 1, "writing one cycle after its producer")
        } else {
            (c > p, "consumer after producer")
        };
        if !ok {
            out.push(Violation::Timing { edge: e, producer: p, consumer: c, rule: rule.to_string() });
        }
    }
}

fn check_modulo_bounds(
    sdfg: &Sdfg,
    cfg: &CgraConfig,
    ii: u32,
    time: &dyn Fn(NodeId) -> Option<u32>,
    out: &mut Vec<Violation>,
) {
    let mut counts = vec![[0u32; 3]; ii as usize];
    for n in &sdfg.nodes {
        let Some(t) = time(n.id) else { continue };
        let slot = match n.kind {
            NodeKind::InputRead => 0,
            NodeKind::OutputWrite => 1,
            _ => 2,
        };
        counts[(t % ii) as usize][slot] += 1;
    }
    let limits = [(cfg.cols, "input buses"), (cfg.rows, "output buses"), (cfg.rows * cfg.cols, "PEs")];
    for (layer, c) in counts.iter().enumerate() {
        for (k, &(limit, name)) in limits.iter().enumerate() {
            if c[k] > limit {
                out.push(Violation::ModuloBound { layer: layer as u32, resource: name.to_string(), used: c[k], limit });
            }
        }
    }
}

fn check_bindings(
    sdfg: &Sdfg,
    cfg: &CgraConfig,
    ii: u32,
    time: &dyn Fn(NodeId) -> Option<u32>,
    mapping: &Mapping,
    out: &mut Vec<Violation>,
) -> BTreeMap<NodeId, Binding> {
    let mut bound: BTreeMap<NodeId, Binding> = BTreeMap::new();
    for &b in &mapping.bindings {
        let v = b.node();
        if v.index() >= sdfg.len() {
            out.push(Violation::OutOfRange { node: v });
            continue;
        }
        if bound.insert(v, b).is_some() {
            out.push(Violation::DoubleBinding { node: v });
        }
    }
    // resource name -> layer -> users
    let mut users: HashMap<(String, u32), Vec<NodeId>> = HashMap::new();
    for v in sdfg.ids() {
        let Some(&b) = bound.get(&v) else {
            out.push(Violation::Unbound { node: v });
            continue;
        };
        let kind = sdfg.kind(v);
        let (layer, claims) = match b {
            Binding::Read { layer, bus, .. } if kind == NodeKind::InputRead => {
                if bus >= cfg.cols {
                    out.push(Violation::OutOfRange { node: v });
                }
                (layer, vec![format!("column bus {bus}")])
            }
            Binding::Write { layer, bus, .. } if kind == NodeKind::OutputWrite => {
                if bus >= cfg.rows {
                    out.push(Violation::OutOfRange { node: v });
                }
                (layer, vec![format!("row bus {bus}")])
            }
            Binding::Op { layer, row, col, bus_x, bus_y, .. }
                if !matches!(kind, NodeKind::InputRead | NodeKind::OutputWrite) =>
            {
                if row >= cfg.rows || col >= cfg.cols {
                    out.push(Violation::OutOfRange { node: v });
                }
                if bus_x.is_some_and(|x| x != row) || bus_y.is_some_and(|y| y != col) {
                    out.push(Violation::IllegalDrive { node: v });
                }
                let mut claims = vec![format!("PE ({row},{col})")];
                claims.extend(bus_x.map(|x| format!("row bus {x}")));
                claims.extend(bus_y.map(|y| format!("column bus {y}")));
                (layer, claims)
            }
            _ => {
                out.push(Violation::WrongBindingKind { node: v });
                continue;
            }
        };
        if let Some(t) = time(v) {
            if layer != t % ii {
                out.push(Violation::WrongLayer { node: v, bound: layer, scheduled: t % ii });
            }
        }
        for c in claims {
            users.entry((c, layer)).or_default().push(v);
        }
    }
    let mut clashes: Vec<_> = users.into_iter().filter(|(_, u)| u.len() > 1).collect();
    clashes.sort();
    for ((resource, layer), nodes) in clashes {
        out.push(Violation::Exclusivity { layer, resource, nodes });
    }
    bound
}

fn check_routes(
    sdfg: &Sdfg,
    cfg: &CgraConfig,
    ii: u32,
    time: &dyn Fn(NodeId) -> Option<u32>,
    mapping: &Mapping,
    bound: &BTreeMap<NodeId, Binding>,
    out: &mut Vec<Violation>,
) {
    let mut routes: BTreeMap<Edge, Route> = BTreeMap::new();
    for r in &mapping.routes {
        let e = Edge::new(r.src, r.dst);
        if !sdfg.edges.contains(&e) || routes.insert(e, r.route).is_some() {
            out.push(Violation::ExtraRoute { edge: e });
        }
    }
    let mut grf_writes = vec![0u32; ii as usize];
    let mut grf_reads = vec![0u32; ii as usize];
    let mut registers: BTreeMap<(u32, u32), Vec<Edge>> = BTreeMap::new();
    let mut lrf: BTreeMap<(u32, u32, u32), u32> = BTreeMap::new();
    for &e in &sdfg.edges {
        let Some(&route) = routes.get(&e) else {
            out.push(Violation::MissingRoute { edge: e });
            continue;
        };
        let (Some(&p), Some(&c), Some(tp), Some(tc)) = (bound.get(&e.src), bound.get(&e.dst), time(e.src), time(e.dst))
        else {
            continue;
        };
        let mut bad = |reason: &str| {
            out.push(Violation::IllegalRoute { edge: e, route, reason: reason.to_string() });
        };
        let distance = tc.saturating_sub(tp);
        match (sdfg.kind(e.src), sdfg.kind(e.dst)) {
            (NodeKind::InputRead, _) => match (route, p, c.pe()) {
                (Route::InputBusDirect(i), Binding::Read { bus, .. }, Some((_, col))) => {
                    if i != bus || col != bus {
                        bad("consumer must sit in the column of the reading's bus");
                    }
                }
                _ => bad("a reading reaches its consumer only over its input bus"),
            },
            (_, NodeKind::OutputWrite) => match (route, p.pe(), c) {
                (Route::OutputBusDirect(j), Some((row, _)), Binding::Write { bus, .. }) => {
                    if j != bus || row != bus {
                        bad("producer must sit in the row of the writing's bus");
                    }
                }
                _ => bad("a writing takes its value only from its output bus"),
            },
            _ => {
                let (Some(pp), Some(cp)) = (p.pe(), c.pe()) else {
                    bad("internal dependency between non-PE bindings");
                    continue;
                };
                let (bus_x, bus_y) = match p {
                    Binding::Op { bus_x, bus_y, .. } => (bus_x, bus_y),
                    _ => (None, None),
                };
                match route {
                    Route::Grf(slot) => {
                        if distance < 1 {
                            bad("GRF value consumed before it is produced");
                            continue;
                        }
                        grf_writes[(tp % ii) as usize] += 1;
                        grf_reads[(tc % ii) as usize] += 1;
                        for cyc in tp + 1..=tc {
                            let reg = slot + (cyc - tp - 1) / ii;
                            if reg >= cfg.grf_capacity {
                                out.push(Violation::GrfCapacity { edge: e });
                                break;
                            }
                            registers.entry((reg, cyc % ii)).or_default().push(e);
                        }
                    }
                    Route::SamePeLrf => {
                        if pp != cp {
                            bad("LRF route between different PEs");
                        } else if distance > 1 && tp % ii == tc % ii {
                            bad("LRF route with equal producer and consumer modulo time");
                        } else {
                            for cyc in tp + 1..=tc {
                                *lrf.entry((cp.0, cp.1, cyc % ii)).or_default() += 1;
                            }
                        }
                    }
                    _ if distance != 1 => bad("interconnect routes only carry distance-1 dependencies"),
                    Route::Neighbor => {
                        let manhattan = pp.0.abs_diff(cp.0) + pp.1.abs_diff(cp.1);
                        if !cfg.neighbor_links || manhattan != 1 {
                            bad("neighbour route between non-adjacent PEs");
                        }
                    }
                    Route::RowBus(i) => {
                        if bus_x != Some(i) || pp.0 != i || cp.0 != i {
                            bad("row bus not driven by the producer or consumer off the row");
                        }
                    }
                    Route::ColBus(j) => {
                        if bus_y != Some(j) || pp.1 != j || cp.1 != j {
                            bad("column bus not driven by the producer or consumer off the column");
                        }
                    }
                    Route::InputBusDirect(_) | Route::OutputBusDirect(_) => bad("I/O bus used for internal data"),
                }
            }
        }
    }
    for layer in 0..ii {
        let (w, r) = (grf_writes[layer as usize], grf_reads[layer as usize]);
        if w > cfg.grf_write_ports {
            out.push(Violation::GrfPort { layer, port: "write".into(), used: w, limit: cfg.grf_write_ports });
        }
        if r > cfg.grf_read_ports {
            out.push(Violation::GrfPort { layer, port: "read".into(), used: r, limit: cfg.grf_read_ports });
        }
    }
    for ((register, layer), edges) in registers {
        if edges.len() > 1 {
            out.push(Violation::GrfRegister { register, layer, edges });
        }
    }
    for ((row, col, layer), used) in lrf {
        if used > cfg.lrf_capacity {
            out.push(Violation::LrfCapacity { row, col, layer, used, limit: cfg.lrf_capacity });
        }
    }
}

/// Runs the mapped dataflow on integer data and compares every kernel output
/// with the masked dense dot product. `inputs[c]` is channel `c`'s value and
/// `weights[c][k]` the weight of channel `c` in kernel `k`.
pub fn functional_check(block: &SparseBlock, sdfg: &Sdfg, mapping: &Mapping, inputs: &[i64], weights: &[Vec<i64>]) -> bool {
    let expected: Vec<i64> = (0..block.m)
        .map(|k| (0..block.n).filter(|&c| block.mask[c][k]).map(|c| inputs[c] * weights[c][k]).sum())
        .collect();
    // operands come from the mapping's routes, not from the s-DFG edges
    let mut operands: BTreeMap<NodeId, Vec<NodeId>> = BTreeMap::new();
    for r in &mapping.routes {
        operands.entry(r.dst).or_default().push(r.src);
    }
    let Some(order) = sdfg.topo_order() else { return false };
    let mut value: BTreeMap<NodeId, i64> = BTreeMap::new();
    let mut produced = vec![None; block.m];
    for v in order {
        let node = sdfg.node(v);
        let args: Vec<i64> = operands.get(&v).map(|ps| ps.iter().filter_map(|p| value.get(p).copied()).collect()).unwrap_or_default();
        let want = operands.get(&v).map_or(0, Vec::len);
        if args.len() != want {
            return false;
        }
        let result = match (node.kind, args.as_slice()) {
            (NodeKind::InputRead, []) => {
                let src = node.clone_of.map_or(node, |o| sdfg.node(o));
                match src.channel {
                    Some(c) if (c as usize) < inputs.len() => inputs[c as usize],
                    _ => return false,
                }
            }
            (NodeKind::Cop, [x]) => *x,
            (NodeKind::Mul, [x]) => match (node.channel, node.kernel) {
                (Some(c), Some(k)) => x * weights[c as usize][k as usize],
                _ => return false,
            },
            (NodeKind::Add, [a, b]) => a + b,
            (NodeKind::OutputWrite, [x]) => {
                match node.kernel {
                    Some(k) if (k as usize) < block.m && produced[k as usize].is_none() => produced[k as usize] = Some(*x),
                    _ => return false,
                }
                *x
            }
            _ => return false,
        };
        value.insert(v, result);
    }
    produced.iter().zip(&expected).all(|(got, want)| *got == Some(*want))
}
