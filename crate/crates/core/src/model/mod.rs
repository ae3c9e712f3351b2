//! Domain types shared by every stage: the s-DFG, the machine, schedules and mappings.

mod cgra;
mod mapping;
mod schedule;
mod sdfg;

use thiserror::Error;

pub use cgra::{CgraConfig, Resource, Tec, TecNode};
pub use mapping::{Binding, Mapping, Metrics, Route, RouteEntry};
pub use schedule::{derive_modulo_sets, mcid_set, ModuloSets, ModuloTables, Schedule};
pub use sdfg::{Edge, EdgeKind, KernelGroup, Node, NodeId, NodeKind, Sdfg};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ModelError {
    #[error("node {0} has no scheduling time")]
    Unscheduled(NodeId),
    #[error("layer {layer} is outside [0, {ii})")]
    LayerOutOfRange { layer: u32, ii: u32 },
    #[error("initiation interval must be positive")]
    ZeroIi,
    #[error("invalid CGRA configuration: {0}")]
    InvalidConfig(String),
}
