use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{mcid_set, CgraConfig, Edge, EdgeKind, ModelError, Schedule, Sdfg};

/// Routing resource class decided before binding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RouteClass {
    /// Reading to consumer over the input bus.
    Input,
    /// Producer to writing over the output bus.
    Output,
    /// Distance-1 internal dependency: same PE, row bus or column bus.
    Near,
    /// Multi-cycle dependency parked in the consumer PE's LRF.
    Local,
    /// Multi-cycle dependency parked in the GRF starting at register `slot`.
    Grf { slot: u32 },
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PreallocError {
    #[error("MCID {edge} needs the GRF but no write port is free at layer {layer}")]
    WritePort { edge: Edge, layer: u32 },
    #[error("MCID {edge} needs the GRF but no read port is free at layer {layer}")]
    ReadPort { edge: Edge, layer: u32 },
    #[error("MCID {edge} needs the GRF but no register is free over its live range")]
    Capacity { edge: Edge },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// GRF bookkeeping: port use per layer and rotating-register occupancy.
///
/// A value produced at `tp` and consumed at `tc` is written at layer `tp mod II`,
/// read at layer `tc mod II` and is live over cycles `tp+1 ..= tc`. Cycle `c` of
/// the live range holds register `slot + (c - tp - 1) / II` at layer `c mod II`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GrfPlan {
    pub ii: u32,
    pub capacity: u32,
    pub write_ports: u32,
    pub read_ports: u32,
    pub writes: Vec<u32>,
    pub reads: Vec<u32>,
    /// `busy[register][layer]`.
    pub busy: Vec<Vec<bool>>,
}

impl GrfPlan {
    pub fn new(cfg: &CgraConfig, ii: u32) -> Self {
        GrfPlan {
            ii,
            capacity: cfg.grf_capacity,
            write_ports: cfg.grf_write_ports,
            read_ports: cfg.grf_read_ports,
            writes: vec![0; ii as usize],
            reads: vec![0; ii as usize],
            busy: vec![vec![false; ii as usize]; cfg.grf_capacity as usize],
        }
    }

    /// Books ports and registers for one value, returning its first register.
    pub fn assign(&mut self, edge: Edge, tp: u32, tc: u32) -> Result<u32, PreallocError> {
        let (wl, rl) = (tp % self.ii, tc % self.ii);
        if self.writes[wl as usize] >= self.write_ports {
            return Err(PreallocError::WritePort { edge, layer: wl });
        }
        if self.reads[rl as usize] >= self.read_ports {
            return Err(PreallocError::ReadPort { edge, layer: rl });
        }
        let span = (tc - tp - 1) / self.ii + 1;
        let fits = |slot: u32, busy: &Vec<Vec<bool>>| {
            (tp + 1..=tc).all(|c| !busy[(slot + (c - tp - 1) / self.ii) as usize][(c % self.ii) as usize])
        };
        let slot = (0..(self.capacity + 1).saturating_sub(span))
            .find(|&s| fits(s, &self.busy))
            .ok_or(PreallocError::Capacity { edge })?;
        for c in tp + 1..=tc {
            self.busy[(slot + (c - tp - 1) / self.ii) as usize][(c % self.ii) as usize] = true;
        }
        self.writes[wl as usize] += 1;
        self.reads[rl as usize] += 1;
        Ok(slot)
    }

    pub fn used_registers(&self) -> usize {
        self.busy.iter().filter(|r| r.iter().any(|&b| b)).count()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoutePlan {
    pub classes: BTreeMap<Edge, RouteClass>,
    pub grf: GrfPlan,
}

impl RoutePlan {
    pub fn class(&self, e: Edge) -> RouteClass {
        self.classes[&e]
    }

    pub fn grf_edges(&self) -> impl Iterator<Item = (Edge, u32)> + '_ {
        self.classes.iter().filter_map(|(&e, &c)| match c {
            RouteClass::Grf { slot } => Some((e, slot)),
            _ => None,
        })
    }
}

/// Classifies every dependency and reserves GRF space for multi-cycle ones.
///
/// MCIDs whose endpoints share a modulo time cannot stay in an LRF and are
/// assigned first. LRF routing pins producer and consumer to one PE, so nodes
/// joined by LRF routes need pairwise distinct layers; MCIDs that would break
/// this come next and also need the GRF. The rest take the GRF while it has
/// room and fall back to LRF routing otherwise. Each group goes in
/// producer-time order.
pub fn preallocate_routes(sdfg: &Sdfg, schedule: &Schedule, cfg: &CgraConfig) -> Result<RoutePlan, PreallocError> {
    let ii = schedule.ii;
    let mut classes = BTreeMap::new();
    for &e in &sdfg.edges {
        let class = match sdfg.edge_kind(e) {
            EdgeKind::Input => RouteClass::Input,
            EdgeKind::Output => RouteClass::Output,
            EdgeKind::Internal => RouteClass::Near,
        };
        classes.insert(e, class);
    }
    let mut mandatory = Vec::new();
    let mut optional = Vec::new();
    for e in mcid_set(sdfg, schedule)? {
        let (tp, tc) = (schedule.require(e.src)?, schedule.require(e.dst)?);
        if tp % ii == tc % ii {
            mandatory.push((tp, tc, e));
        } else {
            optional.push((tp, tc, e));
        }
    }
    mandatory.sort_unstable();
    optional.sort_unstable();
    let mut pinned = PeGroups::new(sdfg, schedule)?;
    let (clashing, optional): (Vec<_>, Vec<_>) = optional.into_iter().partition(|&(_, _, e)| !pinned.join(e));
    let mut grf = GrfPlan::new(cfg, ii);
    for (tp, tc, e) in mandatory.into_iter().chain(clashing) {
        let slot = grf.assign(e, tp, tc)?;
        classes.insert(e, RouteClass::Grf { slot });
    }
    for (tp, tc, e) in optional {
        let class = match grf.assign(e, tp, tc) {
            Ok(slot) => RouteClass::Grf { slot },
            Err(_) => RouteClass::Local,
        };
        classes.insert(e, class);
    }
    Ok(RoutePlan { classes, grf })
}

/// Union-find over nodes forced onto one PE, tracking the layers each group uses.
struct PeGroups {
    parent: Vec<usize>,
    layers: Vec<Vec<u32>>,
}

impl PeGroups {
    fn new(sdfg: &Sdfg, schedule: &Schedule) -> Result<Self, ModelError> {
        let layers = sdfg.ids().map(|v| Ok(vec![schedule.require(v)? % schedule.ii])).collect::<Result<_, ModelError>>()?;
        Ok(PeGroups { parent: (0..sdfg.len()).collect(), layers })
    }

    fn find(&mut self, mut v: usize) -> usize {
        while self.parent[v] != v {
            self.parent[v] = self.parent[self.parent[v]];
            v = self.parent[v];
        }
        v
    }

    /// Merges the groups of `e`'s endpoints unless they share a layer.
    fn join(&mut self, e: Edge) -> bool {
        let (a, b) = (self.find(e.src.index()), self.find(e.dst.index()));
        if a == b {
            return true;
        }
        if self.layers[a].iter().any(|l| self.layers[b].contains(l)) {
            return false;
        }
        let moved = std::mem::take(&mut self.layers[b]);
        self.layers[a].extend(moved);
        self.parent[b] = a;
        true
    }
}
