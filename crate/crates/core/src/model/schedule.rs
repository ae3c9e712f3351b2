use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::sdfg::{Edge, EdgeKind, NodeId, NodeKind, Sdfg};
use super::ModelError;

/// Per-layer occupancy counters maintained while scheduling.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModuloTables {
    /// PE slots used by multiplications, additions and caching operations.
    pub pe: Vec<u32>,
    /// Input buses used by readings, multicast clones included.
    pub input: Vec<u32>,
    /// Output buses used by writings.
    pub output: Vec<u32>,
}

impl ModuloTables {
    pub fn new(ii: u32) -> Self {
        let n = ii as usize;
        ModuloTables { pe: vec![0; n], input: vec![0; n], output: vec![0; n] }
    }
}

/// Scheduling and modulo scheduling times plus I/O annotations of an s-DFG.
///
/// The modulo time of a node is always derived from its scheduling time, so the
/// two can never disagree.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schedule {
    pub ii: u32,
    pub times: Vec<Option<u32>>,
    /// `c_r`: the reading is cached by a COP.
    pub cached: Vec<bool>,
    /// `mc_r`: the reading is multicast through the crossbar.
    pub multicast: Vec<bool>,
    /// Bus ordinal handed out while scheduling (the binder picks the physical bus).
    pub bus_alloc: BTreeMap<NodeId, u32>,
    pub tables: ModuloTables,
}

impl Schedule {
    pub fn new(ii: u32, node_count: usize) -> Self {
        Schedule {
            ii,
            times: vec![None; node_count],
            cached: vec![false; node_count],
            multicast: vec![false; node_count],
            bus_alloc: BTreeMap::new(),
            tables: ModuloTables::new(ii),
        }
    }

    /// Grows the per-node vectors after new nodes were appended to the s-DFG.
    pub fn resize(&mut self, node_count: usize) {
        if self.times.len() < node_count {
            self.times.resize(node_count, None);
            self.cached.resize(node_count, false);
            self.multicast.resize(node_count, false);
        }
    }

    pub fn time(&self, v: NodeId) -> Option<u32> {
        self.times.get(v.index()).copied().flatten()
    }

    pub fn set_time(&mut self, v: NodeId, t: u32) {
        self.resize(v.index() + 1);
        self.times[v.index()] = Some(t);
    }

    pub fn modulo(&self, v: NodeId) -> Option<u32> {
        self.time(v).map(|t| t % self.ii)
    }

    pub fn is_cached(&self, v: NodeId) -> bool {
        self.cached.get(v.index()).copied().unwrap_or(false)
    }

    pub fn is_multicast(&self, v: NodeId) -> bool {
        self.multicast.get(v.index()).copied().unwrap_or(false)
    }

    pub fn require(&self, v: NodeId) -> Result<u32, ModelError> {
        self.time(v).ok_or(ModelError::Unscheduled(v))
    }

    pub fn is_complete(&self, sdfg: &Sdfg) -> bool {
        sdfg.ids().all(|v| self.time(v).is_some())
    }

    /// Latest scheduling time, i.e. the length of one iteration minus one.
    pub fn makespan(&self) -> u32 {
        self.times.iter().flatten().copied().max().unwrap_or(0)
    }
}

/// The five per-layer node sets a schedule induces.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModuloSets {
    /// Readings (clones included) modulo scheduled at the layer.
    pub reads: Vec<NodeId>,
    pub writes: Vec<NodeId>,
    /// Multiplications and additions.
    pub ops: Vec<NodeId>,
    /// Readings cached by a COP.
    pub cached: Vec<NodeId>,
    /// Readings multicast to extra buses.
    pub multicast: Vec<NodeId>,
}

/// Computes the per-layer node sets at layer `layer`.
pub fn derive_modulo_sets(sdfg: &Sdfg, schedule: &Schedule, layer: u32) -> Result<ModuloSets, ModelError> {
    if layer >= schedule.ii {
        return Err(ModelError::LayerOutOfRange { layer, ii: schedule.ii });
    }
    let mut sets = ModuloSets::default();
    for node in &sdfg.nodes {
        let m = schedule.require(node.id)? % schedule.ii;
        if m != layer {
            continue;
        }
        match node.kind {
            NodeKind::InputRead => {
                sets.reads.push(node.id);
                if schedule.is_cached(node.id) {
                    sets.cached.push(node.id);
                }
                if schedule.is_multicast(node.id) {
                    sets.multicast.push(node.id);
                }
            }
            NodeKind::OutputWrite => sets.writes.push(node.id),
            NodeKind::Mul | NodeKind::Add => sets.ops.push(node.id),
            NodeKind::Cop => {}
        }
    }
    Ok(sets)
}

/// Internal dependencies whose scheduling distance exceeds one cycle.
pub fn mcid_set(sdfg: &Sdfg, schedule: &Schedule) -> Result<Vec<Edge>, ModelError> {
    let mut out = Vec::new();
    for e in sdfg.edges_of(EdgeKind::Internal) {
        let (ts, td) = (schedule.require(e.src)?, schedule.require(e.dst)?);
        if td > ts + 1 {
            out.push(e);
        }
    }
    out.sort();
    Ok(out)
}
