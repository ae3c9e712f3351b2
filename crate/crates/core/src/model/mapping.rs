use std::collections::BTreeMap;

use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use super::sdfg::{Edge, NodeId};

/// A candidate (or chosen) placement of one s-DFG node on the TEC.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(tag = "type")]
pub enum Binding {
    /// Reading carried by input bus `bus` at layer `layer`.
    Read { node: NodeId, layer: u32, bus: u32 },
    /// Writing carried by output bus `bus` at layer `layer`.
    Write { node: NodeId, layer: u32, bus: u32 },
    /// Operation on PE `(row, col)`. `bus_x` is `Some(row)` when the PE drives its
    /// row bus, `bus_y` is `Some(col)` when it drives its column bus.
    Op { node: NodeId, layer: u32, row: u32, col: u32, bus_x: Option<u32>, bus_y: Option<u32> },
}

impl Binding {
    pub fn node(&self) -> NodeId {
        match *self {
            Binding::Read { node, .. } | Binding::Write { node, .. } | Binding::Op { node, .. } => node,
        }
    }

    pub fn layer(&self) -> u32 {
        match *self {
            Binding::Read { layer, .. } | Binding::Write { layer, .. } | Binding::Op { layer, .. } => layer,
        }
    }

    pub fn pe(&self) -> Option<(u32, u32)> {
        match *self {
            Binding::Op { row, col, .. } => Some((row, col)),
            _ => None,
        }
    }
}

/// How a dependency's datum travels from producer to consumer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Route {
    /// Kept in the local register file of the PE running both endpoints.
    SamePeLrf,
    /// Read from the output register of an adjacent PE.
    Neighbor,
    /// Driven on row bus `i` into a PE of that row.
    RowBus(u32),
    /// Driven on column bus `j` into a PE of that column.
    ColBus(u32),
    InputBusDirect(u32),
    OutputBusDirect(u32),
    /// Parked in the global register file starting at register `slot`.
    Grf(u32),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RouteEntry {
    pub src: NodeId,
    pub dst: NodeId,
    pub route: Route,
}

/// Placement of every s-DFG node plus a route for every dependency.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mapping {
    pub bindings: Vec<Binding>,
    pub routes: Vec<RouteEntry>,
}

impl Mapping {
    pub fn binding_of(&self) -> BTreeMap<NodeId, Binding> {
        self.bindings.iter().map(|b| (b.node(), *b)).collect()
    }

    pub fn route_of(&self) -> BTreeMap<Edge, Route> {
        self.routes.iter().map(|r| (Edge::new(r.src, r.dst), r.route)).collect()
    }
}

/// Per-block mapping statistics.
///
/// `cops`/`mcids` describe the first mapping attempt; `final_cops`/`final_mcids`
/// the schedule that was finally bound.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Metrics {
    pub mii: u32,
    pub ii_first_attempt: Option<u32>,
    pub cops: u32,
    pub mcids: u32,
    pub first_attempt_success: bool,
    pub final_ii: Option<u32>,
    pub final_cops: u32,
    pub final_mcids: u32,
    pub speedup: Option<Ratio<u32>>,
}

impl Metrics {
    pub fn success(&self) -> bool {
        self.final_ii.is_some()
    }
}
