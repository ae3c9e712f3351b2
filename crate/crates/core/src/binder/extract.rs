use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Binding, CgraConfig, Edge, Mapping, ModelError, NodeId, Route, RouteEntry, Schedule, Sdfg};

use super::conflict::ConflictGraph;
use super::routes::{RouteClass, RoutePlan};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Extracted {
    Complete(Mapping),
    Incomplete { unbound: Vec<NodeId> },
    /// Every node is bound but some PE's LRF would hold more values than it has words.
    LrfOverflow { row: u32, col: u32, layer: u32 },
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ExtractError {
    #[error("node {0} is bound more than once")]
    DoubleBinding(NodeId),
    #[error("bindings {0} and {1} conflict")]
    NotIndependent(u32, u32),
    #[error("dependency {0} has no route between its bindings")]
    Unroutable(Edge),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Turns an independent set into a mapping with a concrete route per dependency.
pub fn extract_mapping(
    cg: &ConflictGraph,
    mis: &[u32],
    sdfg: &Sdfg,
    schedule: &Schedule,
    plan: &RoutePlan,
    cfg: &CgraConfig,
) -> Result<Extracted, ExtractError> {
    for (i, &a) in mis.iter().enumerate() {
        if let Some(&b) = mis[i + 1..].iter().find(|&&b| cg.has_edge(a, b)) {
            return Err(ExtractError::NotIndependent(a, b));
        }
    }
    let mut chosen: BTreeMap<NodeId, Binding> = BTreeMap::new();
    for &v in mis {
        let b = cg.vertices[v as usize];
        if chosen.insert(b.node(), b).is_some() {
            return Err(ExtractError::DoubleBinding(b.node()));
        }
    }
    let unbound: Vec<NodeId> = sdfg.ids().filter(|v| !chosen.contains_key(v)).collect();
    if !unbound.is_empty() {
        return Ok(Extracted::Incomplete { unbound });
    }
    let mut routes = Vec::with_capacity(sdfg.edges.len());
    let mut lrf: BTreeMap<(u32, u32, u32), u32> = BTreeMap::new();
    let ii = schedule.ii;
    for &e in &sdfg.edges {
        let (p, c) = (chosen[&e.src], chosen[&e.dst]);
        let route = match (plan.class(e), p, c) {
            (RouteClass::Input, Binding::Read { bus, .. }, _) => Route::InputBusDirect(bus),
            (RouteClass::Output, _, Binding::Write { bus, .. }) => Route::OutputBusDirect(bus),
            (RouteClass::Grf { slot }, _, _) => Route::Grf(slot),
            (
                class @ (RouteClass::Near | RouteClass::Local),
                Binding::Op { row: r1, col: c1, bus_x, bus_y, .. },
                Binding::Op { row: r2, col: c2, .. },
            ) => {
                let route = if (r1, c1) == (r2, c2) {
                    Route::SamePeLrf
                } else if class == RouteClass::Local {
                    return Err(ExtractError::Unroutable(e));
                } else if cfg.adjacent((r1, c1), (r2, c2)) {
                    Route::Neighbor
                } else if r1 == r2 && bus_x.is_some() {
                    Route::RowBus(r1)
                } else if c1 == c2 && bus_y.is_some() {
                    Route::ColBus(c1)
                } else {
                    return Err(ExtractError::Unroutable(e));
                };
                if route == Route::SamePeLrf {
                    let (tp, tc) = (schedule.require(e.src)?, schedule.require(e.dst)?);
                    for cyc in tp + 1..=tc {
                        *lrf.entry((r2, c2, cyc % ii)).or_default() += 1;
                    }
                }
                route
            }
            _ => return Err(ExtractError::Unroutable(e)),
        };
        routes.push(RouteEntry { src: e.src, dst: e.dst, route });
    }
    if let Some((&(row, col, layer), _)) = lrf.iter().find(|(_, &n)| n > cfg.lrf_capacity) {
        return Ok(Extracted::LrfOverflow { row, col, layer });
    }
    let bindings = chosen.into_values().collect();
    Ok(Extracted::Complete(Mapping { bindings, routes }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::binder::{build_conflict_graph, preallocate_routes};
    use crate::model::NodeKind;

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

    fn pick(cg: &ConflictGraph, b: Binding) -> u32 {
        cg.vertices.iter().position(|&v| v == b).unwrap() as u32
    }

    #[test]
    fn full_cover_is_complete() {
        let (g, s) = tiny();
        let cfg = CgraConfig::default();
        let plan = preallocate_routes(&g, &s, &cfg).unwrap();
        let cg = build_conflict_graph(&g, &s, &cfg, &plan).unwrap();
        let mis = vec![
            pick(&cg, Binding::Read { node: NodeId(0), layer: 0, bus: 2 }),
            pick(&cg, Binding::Op { node: NodeId(1), layer: 0, row: 1, col: 2, bus_x: None, bus_y: None }),
            pick(&cg, Binding::Write { node: NodeId(2), layer: 0, bus: 1 }),
        ];
        match extract_mapping(&cg, &mis, &g, &s, &plan, &cfg).unwrap() {
            Extracted::Complete(m) => {
                assert_eq!(m.bindings.len(), 3);
                let routes: Vec<Route> = m.routes.iter().map(|r| r.route).collect();
                assert_eq!(routes, vec![Route::InputBusDirect(2), Route::OutputBusDirect(1)]);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn missing_node_is_incomplete() {
        let (g, s) = tiny();
        let cfg = CgraConfig::default();
        let plan = preallocate_routes(&g, &s, &cfg).unwrap();
        let cg = build_conflict_graph(&g, &s, &cfg, &plan).unwrap();
        let mis = vec![
            pick(&cg, Binding::Read { node: NodeId(0), layer: 0, bus: 2 }),
            pick(&cg, Binding::Op { node: NodeId(1), layer: 0, row: 1, col: 2, bus_x: None, bus_y: None }),
        ];
        assert_eq!(
            extract_mapping(&cg, &mis, &g, &s, &plan, &cfg).unwrap(),
            Extracted::Incomplete { unbound: vec![NodeId(2)] }
        );
    }

    #[test]
    fn conflicting_set_is_rejected() {
        let (g, s) = tiny();
        let cfg = CgraConfig::default();
        let plan = preallocate_routes(&g, &s, &cfg).unwrap();
        let cg = build_conflict_graph(&g, &s, &cfg, &plan).unwrap();
        let a = pick(&cg, Binding::Read { node: NodeId(0), layer: 0, bus: 2 });
        let b = pick(&cg, Binding::Read { node: NodeId(0), layer: 0, bus: 3 });
        assert_eq!(extract_mapping(&cg, &[a, b], &g, &s, &plan, &cfg), Err(ExtractError::NotIndependent(a, b)));
    }

    #[test]
    fn empty_graph_maps_trivially() {
        let g = Sdfg::new();
        let s = Schedule::new(1, 0);
        let cfg = CgraConfig::default();
        let plan = preallocate_routes(&g, &s, &cfg).unwrap();
        let cg = build_conflict_graph(&g, &s, &cfg, &plan).unwrap();
        assert_eq!(extract_mapping(&cg, &[], &g, &s, &plan, &cfg).unwrap(), Extracted::Complete(Mapping::default()));
    }
}
