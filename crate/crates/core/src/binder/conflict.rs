use std::collections::HashMap;

use thiserror::Error;

use crate::model::{Binding, CgraConfig, Edge, EdgeKind, ModelError, NodeId, NodeKind, Schedule, Sdfg};

use super::mis::Graph;
use super::routes::{RouteClass, RoutePlan};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ConflictError {
    #[error("node {0} has no binding candidate")]
    NoCandidate(NodeId),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Physical bus, input and output buses included.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Bus {
    Row(u32),
    Col(u32),
}

/// Buses a binding occupies, with the layer it occupies them in.
///
/// A PE driving its row or column bus holds it in its own layer, the same layer
/// in which a reading or writing on that wire would use it.
pub fn bus_use(b: &Binding) -> Vec<(u32, Bus)> {
    match *b {
        Binding::Read { layer, bus, .. } => vec![(layer, Bus::Col(bus))],
        Binding::Write { layer, bus, .. } => vec![(layer, Bus::Row(bus))],
        Binding::Op { layer, bus_x, bus_y, .. } => {
            bus_x.map(|r| (layer, Bus::Row(r))).into_iter().chain(bus_y.map(|c| (layer, Bus::Col(c)))).collect()
        }
    }
}

/// Whether a value produced by `p` reaches the PE of `c` one cycle later.
pub fn reaches(p: &Binding, c: &Binding, cfg: &CgraConfig) -> bool {
    match (*p, *c) {
        (Binding::Op { row: r1, col: c1, bus_x, bus_y, .. }, Binding::Op { row: r2, col: c2, .. }) => {
            (r1, c1) == (r2, c2)
                || cfg.adjacent((r1, c1), (r2, c2))
                || (r1 == r2 && bus_x.is_some())
                || (c1 == c2 && bus_y.is_some())
        }
        _ => false,
    }
}

fn same_pe(p: &Binding, c: &Binding) -> bool {
    p.pe().is_some() && p.pe() == c.pe()
}

#[derive(Debug, Clone)]
pub struct ConflictGraph {
    pub vertices: Vec<Binding>,
    pub graph: Graph,
    /// Candidate vertices of every node, indexed by node id.
    pub candidates: Vec<Vec<u32>>,
}

impl ConflictGraph {
    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn has_edge(&self, a: u32, b: u32) -> bool {
        self.graph.has_edge(a, b)
    }

    pub fn candidates_of(&self, v: NodeId) -> &[u32] {
        &self.candidates[v.index()]
    }
}

/// Builds the binding candidates of every node and their pairwise conflicts.
///
/// An operation drives a bus only when some distance-1 dependency leaves it; with
/// a single such dependency driving both buses is never needed. LRF-routed
/// dependencies keep both endpoints on one PE.
pub fn build_conflict_graph(
    sdfg: &Sdfg,
    schedule: &Schedule,
    cfg: &CgraConfig,
    plan: &RoutePlan,
) -> Result<ConflictGraph, ConflictError> {
    let ii = schedule.ii;
    let mut vertices = Vec::new();
    let mut candidates = vec![Vec::new(); sdfg.len()];
    for node in &sdfg.nodes {
        let v = node.id;
        let layer = schedule.require(v)? % ii;
        let start = vertices.len();
        match node.kind {
            NodeKind::InputRead => {
                vertices.extend((0..cfg.input_buses()).map(|bus| Binding::Read { node: v, layer, bus }));
            }
            NodeKind::OutputWrite => {
                vertices.extend((0..cfg.output_buses()).map(|bus| Binding::Write { node: v, layer, bus }));
            }
            _ => {
                let routed = sdfg.succs(v).filter(|&c| plan.class(Edge::new(v, c)) == RouteClass::Near).count();
                for row in 0..cfg.rows {
                    for col in 0..cfg.cols {
                        let mut drives = vec![(None, None)];
                        if routed > 0 {
                            drives.push((Some(row), None));
                            drives.push((None, Some(col)));
                        }
                        if routed > 1 {
                            drives.push((Some(row), Some(col)));
                        }
                        vertices.extend(
                            drives.into_iter().map(|(bus_x, bus_y)| Binding::Op { node: v, layer, row, col, bus_x, bus_y }),
                        );
                    }
                }
            }
        }
        if vertices.len() == start {
            return Err(ConflictError::NoCandidate(v));
        }
        candidates[v.index()] = (start as u32..vertices.len() as u32).collect();
    }

    let mut edges: Vec<(u32, u32)> = Vec::new();
    let clique = |set: &[u32], edges: &mut Vec<(u32, u32)>| {
        for (i, &a) in set.iter().enumerate() {
            for &b in &set[i + 1..] {
                if vertices[a as usize].node() != vertices[b as usize].node() {
                    edges.push((a, b));
                }
            }
        }
    };
    // one binding per node
    for set in &candidates {
        for (i, &a) in set.iter().enumerate() {
            edges.extend(set[i + 1..].iter().map(|&b| (a, b)));
        }
    }
    // one operation per PE and layer; one driver per bus and layer
    let mut pe_slots: HashMap<(u32, u32, u32), Vec<u32>> = HashMap::new();
    let mut bus_slots: HashMap<(u32, Bus), Vec<u32>> = HashMap::new();
    for (i, b) in vertices.iter().enumerate() {
        if let Binding::Op { layer, row, col, .. } = *b {
            pe_slots.entry((layer, row, col)).or_default().push(i as u32);
        }
        for key in bus_use(b) {
            bus_slots.entry(key).or_default().push(i as u32);
        }
    }
    for set in pe_slots.values().chain(bus_slots.values()) {
        clique(set, &mut edges);
    }
    // endpoint placement rules per dependency
    for &e in &sdfg.edges {
        let (ps, cs) = (&candidates[e.src.index()], &candidates[e.dst.index()]);
        let class = plan.class(e);
        for &a in ps {
            let pb = &vertices[a as usize];
            for &b in cs {
                let cb = &vertices[b as usize];
                let ok = match sdfg.edge_kind(e) {
                    EdgeKind::Input => match (*pb, *cb) {
                        (Binding::Read { bus, .. }, Binding::Op { col, .. }) => bus == col,
                        _ => false,
                    },
                    EdgeKind::Output => match (*pb, *cb) {
                        (Binding::Op { row, .. }, Binding::Write { bus, .. }) => bus == row,
                        _ => false,
                    },
                    EdgeKind::Internal => match class {
                        RouteClass::Near => reaches(pb, cb, cfg),
                        RouteClass::Local => same_pe(pb, cb),
                        _ => true,
                    },
                };
                if !ok {
                    edges.push((a, b));
                }
            }
        }
    }
    let graph = Graph::from_edges(vertices.len(), edges);
    Ok(ConflictGraph { vertices, graph, candidates })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::binder::preallocate_routes;

    /// One reading feeding one multiplication feeding a writing, all at II 1.
    fn tiny() -> (Sdfg, Schedule) {
        let mut g = Sdfg::new();
        let r = g.add_node(NodeKind::InputRead, None, Some(0));
        let m = g.add_node(NodeKind::Mul, Some(0), Some(0));
        let w = g.add_node(NodeKind::OutputWrite, Some(0), None);
        g.add_edge(r, m);
        g.add_edge(m, w);
        let mut s = Schedule::new(1, 3);
        s.set_time(r, 0);
        s.set_time(m, 0);
        s.set_time(w, 1);
        (g, s)
    }

    fn find(cg: &ConflictGraph, b: Binding) -> u32 {
        cg.vertices.iter().position(|&v| v == b).expect("candidate exists") as u32
    }

    #[test]
    fn input_bus_must_match_column() {
        let (g, s) = tiny();
        let cfg = CgraConfig::default();
        let plan = preallocate_routes(&g, &s, &cfg).unwrap();
        let cg = build_conflict_graph(&g, &s, &cfg, &plan).unwrap();
        let r = find(&cg, Binding::Read { node: NodeId(0), layer: 0, bus: 1 });
        let same = find(&cg, Binding::Op { node: NodeId(1), layer: 0, row: 2, col: 1, bus_x: None, bus_y: None });
        let other = find(&cg, Binding::Op { node: NodeId(1), layer: 0, row: 2, col: 3, bus_x: None, bus_y: None });
        assert!(!cg.has_edge(r, same));
        assert!(cg.has_edge(r, other));
    }

    #[test]
    fn output_bus_must_match_row() {
        let (g, s) = tiny();
        let cfg = CgraConfig::default();
        let plan = preallocate_routes(&g, &s, &cfg).unwrap();
        let cg = build_conflict_graph(&g, &s, &cfg, &plan).unwrap();
        let w = find(&cg, Binding::Write { node: NodeId(2), layer: 0, bus: 3 });
        let same = find(&cg, Binding::Op { node: NodeId(1), layer: 0, row: 3, col: 0, bus_x: None, bus_y: None });
        let other = find(&cg, Binding::Op { node: NodeId(1), layer: 0, row: 0, col: 0, bus_x: None, bus_y: None });
        assert!(!cg.has_edge(w, same));
        assert!(cg.has_edge(w, other));
    }

    #[test]
    fn candidates_of_a_node_form_a_clique() {
        let (g, s) = tiny();
        let cfg = CgraConfig::default();
        let plan = preallocate_routes(&g, &s, &cfg).unwrap();
        let cg = build_conflict_graph(&g, &s, &cfg, &plan).unwrap();
        for v in g.ids() {
            let c = cg.candidates_of(v);
            assert!(!c.is_empty());
            for (i, &a) in c.iter().enumerate() {
                assert!(c[i + 1..].iter().all(|&b| cg.has_edge(a, b)));
            }
        }
        // the multiplication feeds only a writing, so it never drives a bus
        assert_eq!(cg.candidates_of(NodeId(1)).len(), 16);
    }

    /// Two readings at the same layer plus two independent operations.
    fn pair() -> (Sdfg, Schedule) {
        let mut g = Sdfg::new();
        for _ in 0..2 {
            let r = g.add_node(NodeKind::InputRead, None, Some(0));
            let c = g.add_node(NodeKind::Cop, None, None);
            let m = g.add_node(NodeKind::Mul, Some(0), Some(0));
            g.add_edge(r, c);
            g.add_edge(c, m);
        }
        let mut s = Schedule::new(2, g.len());
        for v in 0..6u32 {
            s.set_time(NodeId(v), if v % 3 == 2 { 1 } else { 0 });
        }
        (g, s)
    }

    #[test]
    fn shared_bus_and_pe_conflict() {
        let (g, s) = pair();
        let cfg = CgraConfig::default();
        let plan = preallocate_routes(&g, &s, &cfg).unwrap();
        let cg = build_conflict_graph(&g, &s, &cfg, &plan).unwrap();
        let r1 = find(&cg, Binding::Read { node: NodeId(0), layer: 0, bus: 2 });
        let r2 = find(&cg, Binding::Read { node: NodeId(3), layer: 0, bus: 2 });
        let r3 = find(&cg, Binding::Read { node: NodeId(3), layer: 0, bus: 1 });
        assert!(cg.has_edge(r1, r2));
        assert!(!cg.has_edge(r1, r3));
        let c1 = find(&cg, Binding::Op { node: NodeId(1), layer: 0, row: 1, col: 1, bus_x: None, bus_y: None });
        let c2 = find(&cg, Binding::Op { node: NodeId(4), layer: 0, row: 1, col: 1, bus_x: None, bus_y: None });
        assert!(cg.has_edge(c1, c2));
        // both COPs driving row bus 1 in the same cycle
        let d1 = find(&cg, Binding::Op { node: NodeId(1), layer: 0, row: 1, col: 0, bus_x: Some(1), bus_y: None });
        let d2 = find(&cg, Binding::Op { node: NodeId(4), layer: 0, row: 1, col: 3, bus_x: Some(1), bus_y: None });
        assert!(cg.has_edge(d1, d2));
    }

    #[test]
    fn internal_drive_blocks_io_on_same_bus() {
        let (g, s) = pair();
        let cfg = CgraConfig::default();
        let plan = preallocate_routes(&g, &s, &cfg).unwrap();
        let cg = build_conflict_graph(&g, &s, &cfg, &plan).unwrap();
        let d = find(&cg, Binding::Op { node: NodeId(1), layer: 0, row: 0, col: 2, bus_x: None, bus_y: Some(2) });
        let r = find(&cg, Binding::Read { node: NodeId(3), layer: 0, bus: 2 });
        let r_other = find(&cg, Binding::Read { node: NodeId(3), layer: 0, bus: 1 });
        assert!(cg.has_edge(d, r));
        assert!(!cg.has_edge(d, r_other));
        assert_eq!(bus_use(&cg.vertices[d as usize]), vec![(0, Bus::Col(2))]);
    }

    #[test]
    fn distance_one_needs_reachability() {
        let (g, s) = pair();
        let cfg = CgraConfig::default();
        let plan = preallocate_routes(&g, &s, &cfg).unwrap();
        assert_eq!(plan.class(Edge::new(NodeId(1), NodeId(2))), RouteClass::Near);
        let cg = build_conflict_graph(&g, &s, &cfg, &plan).unwrap();
        let quiet = find(&cg, Binding::Op { node: NodeId(1), layer: 0, row: 0, col: 0, bus_x: None, bus_y: None });
        let row = find(&cg, Binding::Op { node: NodeId(1), layer: 0, row: 0, col: 0, bus_x: Some(0), bus_y: None });
        let here = find(&cg, Binding::Op { node: NodeId(2), layer: 1, row: 0, col: 0, bus_x: None, bus_y: None });
        let same_row = find(&cg, Binding::Op { node: NodeId(2), layer: 1, row: 0, col: 3, bus_x: None, bus_y: None });
        let elsewhere = find(&cg, Binding::Op { node: NodeId(2), layer: 1, row: 1, col: 3, bus_x: None, bus_y: None });
        assert!(!cg.has_edge(quiet, here));
        assert!(cg.has_edge(quiet, same_row));
        assert!(!cg.has_edge(row, same_row));
        assert!(cg.has_edge(row, elsewhere));
        let next_door = find(&cg, Binding::Op { node: NodeId(2), layer: 1, row: 1, col: 0, bus_x: None, bus_y: None });
        assert!(!cg.has_edge(quiet, next_door));
    }

    #[test]
    fn bus_only_fabric_has_no_mesh() {
        let (g, s) = pair();
        let cfg = CgraConfig { neighbor_links: false, ..Default::default() };
        let plan = preallocate_routes(&g, &s, &cfg).unwrap();
        let cg = build_conflict_graph(&g, &s, &cfg, &plan).unwrap();
        let quiet = find(&cg, Binding::Op { node: NodeId(1), layer: 0, row: 0, col: 0, bus_x: None, bus_y: None });
        let next_door = find(&cg, Binding::Op { node: NodeId(2), layer: 1, row: 1, col: 0, bus_x: None, bus_y: None });
        assert!(cg.has_edge(quiet, next_door));
    }

    #[test]
    fn lrf_route_pins_both_ends_to_one_pe() {
        let mut g = Sdfg::new();
        let a = g.add_node(NodeKind::Mul, Some(0), Some(0));
        let b = g.add_node(NodeKind::Cop, None, None);
        g.add_edge(a, b);
        let mut s = Schedule::new(4, 2);
        s.set_time(a, 0);
        s.set_time(b, 3);
        let cfg = CgraConfig { grf_capacity: 0, ..Default::default() };
        let plan = preallocate_routes(&g, &s, &cfg).unwrap();
        assert_eq!(plan.class(Edge::new(a, b)), RouteClass::Local);
        let cg = build_conflict_graph(&g, &s, &cfg, &plan).unwrap();
        let p = find(&cg, Binding::Op { node: a, layer: 0, row: 2, col: 2, bus_x: None, bus_y: None });
        let same = find(&cg, Binding::Op { node: b, layer: 3, row: 2, col: 2, bus_x: None, bus_y: None });
        let adjacent = find(&cg, Binding::Op { node: b, layer: 3, row: 2, col: 3, bus_x: None, bus_y: None });
        assert!(!cg.has_edge(p, same));
        assert!(cg.has_edge(p, adjacent));
    }
}
