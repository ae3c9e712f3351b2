use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

/// Index of a node inside its [`Sdfg`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u32);

impl NodeId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "v{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum NodeKind {
    Mul,
    Add,
    InputRead,
    OutputWrite,
    /// Caching operation: occupies a PE slot and forwards its operand one cycle later.
    Cop,
}

impl NodeKind {
    /// Multiplications and additions (the `V_OP` set).
    pub fn is_arith(self) -> bool {
        matches!(self, NodeKind::Mul | NodeKind::Add)
    }

    /// Anything executed on a PE, i.e. arithmetic plus caching operations.
    pub fn on_pe(self) -> bool {
        matches!(self, NodeKind::Mul | NodeKind::Add | NodeKind::Cop)
    }

    pub fn short(self) -> &'static str {
        match self {
            NodeKind::Mul => "mul",
            NodeKind::Add => "add",
            NodeKind::InputRead => "rd",
            NodeKind::OutputWrite => "wr",
            NodeKind::Cop => "cop",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Node {
    pub id: NodeId,
    pub kind: NodeKind,
    pub kernel: Option<u32>,
    pub channel: Option<u32>,
    /// Original reading a multicast clone was split from.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clone_of: Option<NodeId>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Edge {
    pub src: NodeId,
    pub dst: NodeId,
}

impl Edge {
    pub fn new(src: NodeId, dst: NodeId) -> Self {
        Edge { src, dst }
    }
}

impl fmt::Display for Edge {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}->{}", self.src, self.dst)
    }
}

/// Dependency classes: input (`E_R`), output (`E_W`) and internal (`E_I`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EdgeKind {
    Input,
    Output,
    Internal,
}

/// Per-kernel bookkeeping: its multiplications, adder-tree additions and output writing.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KernelGroup {
    pub kernel: u32,
    pub muls: Vec<NodeId>,
    pub adds: Vec<NodeId>,
    pub write: NodeId,
}

/// Sparse data-flow graph: the loop body of one sparse block.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sdfg {
    pub nodes: Vec<Node>,
    pub edges: Vec<Edge>,
    pub kernels: Vec<KernelGroup>,
}

impl Sdfg {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id.index()]
    }

    pub fn kind(&self, id: NodeId) -> NodeKind {
        self.nodes[id.index()].kind
    }

    pub fn add_node(&mut self, kind: NodeKind, kernel: Option<u32>, channel: Option<u32>) -> NodeId {
        let id = NodeId(self.nodes.len() as u32);
        self.nodes.push(Node { id, kind, kernel, channel, clone_of: None });
        id
    }

    pub fn add_edge(&mut self, src: NodeId, dst: NodeId) {
        self.edges.push(Edge::new(src, dst));
    }

    /// Removes the edge if present; returns whether it existed.
    pub fn remove_edge(&mut self, src: NodeId, dst: NodeId) -> bool {
        match self.edges.iter().position(|e| e.src == src && e.dst == dst) {
            Some(pos) => {
                self.edges.remove(pos);
                true
            }
            None => false,
        }
    }

    pub fn ids(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.nodes.iter().map(|n| n.id)
    }

    pub fn ids_of(&self, kind: NodeKind) -> impl Iterator<Item = NodeId> + '_ {
        self.nodes.iter().filter(move |n| n.kind == kind).map(|n| n.id)
    }

    pub fn count(&self, kind: NodeKind) -> usize {
        self.nodes.iter().filter(|n| n.kind == kind).count()
    }

    /// `|V_OP|`: multiplications plus additions.
    pub fn op_count(&self) -> usize {
        self.nodes.iter().filter(|n| n.kind.is_arith()).count()
    }

    /// Input readings that are not multicast clones.
    pub fn original_reads(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.nodes
            .iter()
            .filter(|n| n.kind == NodeKind::InputRead && n.clone_of.is_none())
            .map(|n| n.id)
    }

    pub fn succs(&self, id: NodeId) -> impl Iterator<Item = NodeId> + '_ {
        self.edges.iter().filter(move |e| e.src == id).map(|e| e.dst)
    }

    pub fn preds(&self, id: NodeId) -> impl Iterator<Item = NodeId> + '_ {
        self.edges.iter().filter(move |e| e.dst == id).map(|e| e.src)
    }

    /// Multiplications fed directly by a node.
    pub fn fanout_muls(&self, id: NodeId) -> Vec<NodeId> {
        let mut out: Vec<NodeId> = self.succs(id).filter(|&s| self.kind(s) == NodeKind::Mul).collect();
        out.sort();
        out
    }

    pub fn edge_kind(&self, e: Edge) -> EdgeKind {
        if self.kind(e.src) == NodeKind::InputRead {
            EdgeKind::Input
        } else if self.kind(e.dst) == NodeKind::OutputWrite {
            EdgeKind::Output
        } else {
            EdgeKind::Internal
        }
    }

    pub fn edges_of(&self, kind: EdgeKind) -> impl Iterator<Item = Edge> + '_ {
        self.edges.iter().copied().filter(move |&e| self.edge_kind(e) == kind)
    }

    /// Node ids in a topological order, or `None` when the graph has a cycle.
    pub fn topo_order(&self) -> Option<Vec<NodeId>> {
        let n = self.nodes.len();
        let mut indeg = vec![0usize; n];
        let mut out: Vec<Vec<usize>> = vec![Vec::new(); n];
        for e in &self.edges {
            indeg[e.dst.index()] += 1;
            out[e.src.index()].push(e.dst.index());
        }
        let mut stack: Vec<usize> = (0..n).filter(|&i| indeg[i] == 0).rev().collect();
        let mut order = Vec::with_capacity(n);
        while let Some(v) = stack.pop() {
            order.push(NodeId(v as u32));
            for &w in &out[v] {
                indeg[w] -= 1;
                if indeg[w] == 0 {
                    stack.push(w);
                }
            }
        }
        (order.len() == n).then_some(order)
    }

    /// Checks the structural invariants of a (possibly scheduled) s-DFG.
    pub fn check_structure(&self) -> Result<(), String> {
        for (i, n) in self.nodes.iter().enumerate() {
            if n.id.index() != i {
                return Err(format!("node at position {i} carries id {}", n.id));
            }
        }
        let mut seen = BTreeSet::new();
        for e in &self.edges {
            if e.src.index() >= self.nodes.len() || e.dst.index() >= self.nodes.len() {
                return Err(format!("edge {e} references a missing node"));
            }
            if !seen.insert(*e) {
                return Err(format!("duplicate edge {e}"));
            }
            let (ks, kd) = (self.kind(e.src), self.kind(e.dst));
            let ok = match (ks, kd) {
                (NodeKind::InputRead, d) => d.on_pe(),
                (s, NodeKind::OutputWrite) => s.on_pe(),
                (s, d) => s.on_pe() && d.on_pe(),
            };
            if !ok {
                return Err(format!("edge {e} joins {ks:?} to {kd:?}"));
            }
        }
        for n in &self.nodes {
            let indeg = self.preds(n.id).count();
            let outdeg = self.succs(n.id).count();
            let bad = match n.kind {
                NodeKind::Add => indeg != 2 || outdeg != 1,
                NodeKind::Mul => indeg != 1 || outdeg != 1,
                NodeKind::Cop => indeg != 1 || outdeg == 0,
                NodeKind::OutputWrite => indeg != 1 || outdeg != 0,
                NodeKind::InputRead => indeg != 0,
            };
            if bad {
                return Err(format!("{} ({:?}) has in-degree {indeg}, out-degree {outdeg}", n.id, n.kind));
            }
        }
        for k in &self.kernels {
            if k.muls.is_empty() {
                return Err(format!("kernel {} has no multiplication", k.kernel));
            }
            if k.adds.len() + 1 != k.muls.len() {
                return Err(format!(
                    "kernel {} has {} multiplications but {} additions",
                    k.kernel,
                    k.muls.len(),
                    k.adds.len()
                ));
            }
        }
        if self.topo_order().is_none() {
            return Err("graph has a cycle".into());
        }
        Ok(())
    }
}
