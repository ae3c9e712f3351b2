use serde::{Deserialize, Serialize};

use super::ModelError;

/// Machine description of an `rows × cols` streaming CGRA.
///
/// Input bus `i` feeds the `rows` PEs of column `i` and doubles as that column's
/// routing bus; output bus `j` drains the `cols` PEs of row `j` and doubles as that
/// row's routing bus. With `neighbor_links` every PE also reads the output
/// register of its four mesh neighbours.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct CgraConfig {
    pub rows: u32,
    pub cols: u32,
    pub lrf_capacity: u32,
    pub grf_capacity: u32,
    pub grf_write_ports: u32,
    pub grf_read_ports: u32,
    pub neighbor_links: bool,
}

impl Default for CgraConfig {
    fn default() -> Self {
        CgraConfig {
            rows: 4,
            cols: 4,
            lrf_capacity: 8,
            grf_capacity: 8,
            grf_write_ports: 1,
            grf_read_ports: 1,
            neighbor_links: true,
        }
    }
}

impl CgraConfig {
    pub fn new(rows: u32, cols: u32) -> Result<Self, ModelError> {
        let cfg = CgraConfig { rows, cols, ..Default::default() };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.rows == 0 || self.cols == 0 {
            return Err(ModelError::InvalidConfig(format!("PEA must be non-empty, got {}x{}", self.rows, self.cols)));
        }
        if self.grf_write_ports == 0 || self.grf_read_ports == 0 {
            return Err(ModelError::InvalidConfig("GRF needs at least one read and one write port".into()));
        }
        Ok(())
    }

    /// One input bus per column.
    pub fn input_buses(&self) -> u32 {
        self.cols
    }

    /// One output bus per row.
    pub fn output_buses(&self) -> u32 {
        self.rows
    }

    pub fn pe_count(&self) -> u32 {
        self.rows * self.cols
    }

    /// Whether a value leaving PE `a` reaches PE `b` over a mesh link.
    pub fn adjacent(&self, a: (u32, u32), b: (u32, u32)) -> bool {
        self.neighbor_links && a.0.abs_diff(b.0) + a.1.abs_diff(b.1) == 1
    }
}

/// A resource replicated in every time layer of the TEC.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Resource {
    Pe { row: u32, col: u32 },
    InputBus(u32),
    OutputBus(u32),
    RowBus(u32),
    ColBus(u32),
    GrfWritePort(u32),
    GrfReadPort(u32),
}

impl Resource {
    /// Physical wire a bus resource drives. Input bus `i` is column bus `i`,
    /// output bus `j` is row bus `j`.
    pub fn physical(self) -> Resource {
        match self {
            Resource::InputBus(i) => Resource::ColBus(i),
            Resource::OutputBus(j) => Resource::RowBus(j),
            other => other,
        }
    }
}

/// Resource instance `resource` at time layer `layer`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TecNode {
    pub resource: Resource,
    pub layer: u32,
}

/// Time-extended CGRA: the machine replicated over `ii` layers, each layer linked
/// to the next with the last wrapping to layer 0.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Tec {
    pub ii: u32,
    per_layer: Vec<Resource>,
}

impl Tec {
    pub fn new(cfg: &CgraConfig, ii: u32) -> Result<Self, ModelError> {
        if ii == 0 {
            return Err(ModelError::ZeroIi);
        }
        let mut per_layer = Vec::new();
        for row in 0..cfg.rows {
            for col in 0..cfg.cols {
                per_layer.push(Resource::Pe { row, col });
            }
        }
        per_layer.extend((0..cfg.input_buses()).map(Resource::InputBus));
        per_layer.extend((0..cfg.output_buses()).map(Resource::OutputBus));
        per_layer.extend((0..cfg.rows).map(Resource::RowBus));
        per_layer.extend((0..cfg.cols).map(Resource::ColBus));
        per_layer.extend((0..cfg.grf_write_ports).map(Resource::GrfWritePort));
        per_layer.extend((0..cfg.grf_read_ports).map(Resource::GrfReadPort));
        Ok(Tec { ii, per_layer })
    }

    pub fn resources_per_layer(&self) -> &[Resource] {
        &self.per_layer
    }

    pub fn nodes(&self) -> impl Iterator<Item = TecNode> + '_ {
        (0..self.ii).flat_map(move |layer| self.per_layer.iter().map(move |&resource| TecNode { resource, layer }))
    }

    pub fn next_layer(&self, layer: u32) -> u32 {
        if layer + 1 == self.ii {
            0
        } else {
            layer + 1
        }
    }

    /// Every resource is linked to its own instance in the following layer.
    pub fn edges(&self) -> impl Iterator<Item = (TecNode, TecNode)> + '_ {
        self.nodes().map(move |n| {
            let to = TecNode { resource: n.resource, layer: self.next_layer(n.layer) };
            (n, to)
        })
    }

    /// Whether `(from, to)` is a legal TEC edge under the wrap rule.
    pub fn is_edge(&self, from: TecNode, to: TecNode) -> bool {
        if from.layer >= self.ii || to.layer >= self.ii {
            return false;
        }
        let forward = from.layer + 1 < self.ii && to.layer == from.layer + 1;
        let wrap = from.layer == self.ii - 1 && to.layer == 0;
        (forward || wrap) && from.resource == to.resource
    }
}
