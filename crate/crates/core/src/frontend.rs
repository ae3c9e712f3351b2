//! Sparse blocks and their s-DFGs: random generation, JSON ingestion, association
//! analysis and dense counterparts.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{KernelGroup, NodeId, NodeKind, Sdfg};

/// Upper bound on row/column resampling before generation gives up.
const MAX_RESAMPLES: u32 = 10_000;

#[derive(Debug, Error)]
pub enum FrontendError {
    #[error("block must have at least one channel and one kernel (got {n}x{m})")]
    EmptyShape { n: usize, m: usize },
    #[error("zero probability {0} outside [0, 1)")]
    BadProbability(f64),
    #[error("mask is {rows}x{cols}, expected {n}x{m}")]
    MaskShape { rows: usize, cols: usize, n: usize, m: usize },
    #[error("kernel {0} has no nonzero weight")]
    EmptyKernel(usize),
    #[error("mask entry ({row}, {col}) is {value}, expected 0 or 1")]
    MaskValue { row: usize, col: usize, value: u8 },
    #[error("gave up after {0} resamples")]
    GenerationFailed(u32),
    #[error("i/o error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("malformed block json: {0}")]
    Json(#[from] serde_json::Error),
}

/// Nonzero pattern of `n` channels × `m` kernels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SparseBlock {
    pub name: String,
    pub n: usize,
    pub m: usize,
    /// `mask[channel][kernel]`, true for a nonzero weight.
    pub mask: Vec<Vec<bool>>,
    pub seed: Option<u64>,
    /// Rows or columns redrawn by the generator to avoid empty kernels/channels.
    pub resamples: u32,
}

#[derive(Serialize, Deserialize)]
struct BlockFile {
    name: String,
    n: usize,
    m: usize,
    mask: Vec<Vec<u8>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
}

impl SparseBlock {
    pub fn from_mask(name: impl Into<String>, mask: Vec<Vec<bool>>) -> Result<Self, FrontendError> {
        let n = mask.len();
        let m = mask.first().map_or(0, Vec::len);
        let block = SparseBlock { name: name.into(), n, m, mask, seed: None, resamples: 0 };
        block.validate()?;
        Ok(block)
    }

    pub fn validate(&self) -> Result<(), FrontendError> {
        if self.n == 0 || self.m == 0 {
            return Err(FrontendError::EmptyShape { n: self.n, m: self.m });
        }
        let cols = self.mask.first().map_or(0, Vec::len);
        if self.mask.len() != self.n || self.mask.iter().any(|r| r.len() != self.m) {
            return Err(FrontendError::MaskShape { rows: self.mask.len(), cols, n: self.n, m: self.m });
        }
        if let Some(k) = (0..self.m).find(|&k| self.mask.iter().all(|row| !row[k])) {
            return Err(FrontendError::EmptyKernel(k));
        }
        Ok(())
    }

    pub fn nnz(&self) -> usize {
        self.mask.iter().flatten().filter(|&&b| b).count()
    }

    pub fn sparsity(&self) -> f64 {
        1.0 - self.nnz() as f64 / (self.n * self.m) as f64
    }

    /// Kernels using channel `c`.
    pub fn fanout(&self, c: usize) -> usize {
        self.mask[c].iter().filter(|&&b| b).count()
    }

    pub fn to_json(&self) -> String {
        let file = BlockFile {
            name: self.name.clone(),
            n: self.n,
            m: self.m,
            mask: self.mask.iter().map(|r| r.iter().map(|&b| u8::from(b)).collect()).collect(),
            seed: self.seed,
        };
        serde_json::to_string(&file).expect("block serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, FrontendError> {
        let file: BlockFile = serde_json::from_str(text)?;
        let mut mask = Vec::with_capacity(file.mask.len());
        for (row, values) in file.mask.iter().enumerate() {
            let mut out = Vec::with_capacity(values.len());
            for (col, &value) in values.iter().enumerate() {
                match value {
                    0 => out.push(false),
                    1 => out.push(true),
                    _ => return Err(FrontendError::MaskValue { row, col, value }),
                }
            }
            mask.push(out);
        }
        let block = SparseBlock { name: file.name, n: file.n, m: file.m, mask, seed: file.seed, resamples: 0 };
        block.validate()?;
        Ok(block)
    }

    pub fn load(path: &Path) -> Result<Self, FrontendError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| FrontendError::Io { path: path.display().to_string(), source })?;
        Self::from_json(&text)
    }

    pub fn save(&self, path: &Path) -> Result<(), FrontendError> {
        std::fs::write(path, self.to_json())
            .map_err(|source| FrontendError::Io { path: path.display().to_string(), source })
    }
}

/// Draws an `n × m` block where each weight is zero with probability `zero_probability`.
///
/// Empty kernel columns and empty channel rows are redrawn until none remain.
pub fn generate_block(n: usize, m: usize, zero_probability: f64, seed: u64) -> Result<SparseBlock, FrontendError> {
    if n == 0 || m == 0 {
        return Err(FrontendError::EmptyShape { n, m });
    }
    if !(0.0..1.0).contains(&zero_probability) {
        return Err(FrontendError::BadProbability(zero_probability));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draw = |rng: &mut ChaCha8Rng| rng.gen::<f64>() >= zero_probability;
    let mut mask: Vec<Vec<bool>> = (0..n).map(|_| (0..m).map(|_| draw(&mut rng)).collect()).collect();
    let mut resamples = 0u32;
    loop {
        let empty_col = (0..m).find(|&k| mask.iter().all(|row| !row[k]));
        let empty_row = (0..n).find(|&c| mask[c].iter().all(|&b| !b));
        if empty_col.is_none() && empty_row.is_none() {
            break;
        }
        if resamples >= MAX_RESAMPLES {
            return Err(FrontendError::GenerationFailed(resamples));
        }
        resamples += 1;
        if let Some(k) = empty_col {
            for row in mask.iter_mut() {
                row[k] = draw(&mut rng);
            }
        } else if let Some(c) = empty_row {
            for cell in mask[c].iter_mut() {
                *cell = draw(&mut rng);
            }
        }
    }
    Ok(SparseBlock { name: format!("C{n}K{m}_s{seed}"), n, m, mask, seed: Some(seed), resamples })
}

/// The same shape with every weight nonzero.
pub fn dense_counterpart(block: &SparseBlock) -> SparseBlock {
    SparseBlock {
        name: format!("{}_dense", block.name.trim_end_matches("_dense")),
        n: block.n,
        m: block.m,
        mask: vec![vec![true; block.m]; block.n],
        seed: block.seed,
        resamples: 0,
    }
}

/// Builds the s-DFG of a block.
///
/// Node ids are laid out as readings (channel order), multiplications (kernel-major),
/// additions (kernel-major) and writings (kernel order). Each kernel's adder tree is
/// balanced, pairing neighbours left to right by channel index, level by level.
pub fn build_sdfg(block: &SparseBlock) -> Result<Sdfg, FrontendError> {
    block.validate()?;
    let mut g = Sdfg::new();
    let mut read_of = vec![None; block.n];
    for (c, slot) in read_of.iter_mut().enumerate() {
        if block.fanout(c) > 0 {
            *slot = Some(g.add_node(NodeKind::InputRead, None, Some(c as u32)));
        }
    }
    let mut muls_of: Vec<Vec<NodeId>> = Vec::with_capacity(block.m);
    for k in 0..block.m {
        let mut muls = Vec::new();
        for (c, read) in read_of.iter().enumerate() {
            if block.mask[c][k] {
                let mul = g.add_node(NodeKind::Mul, Some(k as u32), Some(c as u32));
                g.add_edge(read.expect("channel with a nonzero has a reading"), mul);
                muls.push(mul);
            }
        }
        muls_of.push(muls);
    }
    let mut roots = Vec::with_capacity(block.m);
    let mut adds_of = Vec::with_capacity(block.m);
    for (k, muls) in muls_of.iter().enumerate() {
        let mut level = muls.clone();
        let mut adds = Vec::new();
        while level.len() > 1 {
            let mut next = Vec::with_capacity(level.len().div_ceil(2));
            for pair in level.chunks(2) {
                if let [a, b] = *pair {
                    let add = g.add_node(NodeKind::Add, Some(k as u32), None);
                    g.add_edge(a, add);
                    g.add_edge(b, add);
                    adds.push(add);
                    next.push(add);
                } else {
                    next.push(pair[0]);
                }
            }
            level = next;
        }
        roots.push(level[0]);
        adds_of.push(adds);
    }
    for (k, (muls, adds)) in muls_of.into_iter().zip(adds_of).enumerate() {
        let write = g.add_node(NodeKind::OutputWrite, Some(k as u32), None);
        g.add_edge(roots[k], write);
        g.kernels.push(KernelGroup { kernel: k as u32, muls, adds, write });
    }
    Ok(g)
}

/// Pairwise association of the original readings: the number of kernels needing
/// both channels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AssociationMatrix {
    pub readings: Vec<NodeId>,
    index: Vec<Option<usize>>,
    assoc: Vec<Vec<u32>>,
}

impl AssociationMatrix {
    fn slot(&self, r: NodeId) -> Option<usize> {
        self.index.get(r.index()).copied().flatten()
    }

    /// Association of two readings; zero for nodes outside the matrix.
    pub fn get(&self, a: NodeId, b: NodeId) -> u32 {
        match (self.slot(a), self.slot(b)) {
            (Some(i), Some(j)) => self.assoc[i][j],
            _ => 0,
        }
    }

    /// Number of kernels a reading feeds.
    pub fn fanout(&self, r: NodeId) -> u32 {
        self.get(r, r)
    }

    pub fn rows(&self) -> &[Vec<u32>] {
        &self.assoc
    }
}

pub fn association_matrix(sdfg: &Sdfg) -> AssociationMatrix {
    let readings: Vec<NodeId> = sdfg.original_reads().collect();
    let kernel_count = sdfg.kernels.len().max(
        sdfg.nodes.iter().filter_map(|n| n.kernel).map(|k| k as usize + 1).max().unwrap_or(0),
    );
    let mut index = vec![None; sdfg.len()];
    let mut support: Vec<Vec<bool>> = Vec::with_capacity(readings.len());
    for (i, &r) in readings.iter().enumerate() {
        index[r.index()] = Some(i);
        let mut row = vec![false; kernel_count];
        for mul in sdfg.fanout_muls(r) {
            if let Some(k) = sdfg.node(mul).kernel {
                row[k as usize] = true;
            }
        }
        support.push(row);
    }
    let assoc = support
        .iter()
        .map(|a| support.iter().map(|b| a.iter().zip(b).filter(|(x, y)| **x && **y).count() as u32).collect())
        .collect();
    AssociationMatrix { readings, index, assoc }
}

/// Block statistics in the shape of a feature table row.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BlockFeatures {
    pub name: String,
    pub sparsity: f64,
    pub shape: String,
    pub ops: usize,
    pub reads: usize,
    pub writes: usize,
    /// Readings feeding more than four multiplications.
    pub n_fg4: usize,
}

pub fn block_features(block: &SparseBlock) -> Result<BlockFeatures, FrontendError> {
    let g = build_sdfg(block)?;
    Ok(BlockFeatures {
        name: block.name.clone(),
        sparsity: block.sparsity(),
        shape: format!("C{}K{}", block.n, block.m),
        ops: g.op_count(),
        reads: g.count(NodeKind::InputRead),
        writes: g.count(NodeKind::OutputWrite),
        n_fg4: (0..block.n).filter(|&c| block.fanout(c) > 4).count(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mask(rows: &[&[u8]]) -> Vec<Vec<bool>> {
        rows.iter().map(|r| r.iter().map(|&v| v == 1).collect()).collect()
    }

    #[test]
    fn zero_probability_gives_dense_block() {
        let b = generate_block(4, 6, 0.0, 17).unwrap();
        assert_eq!(b.nnz(), 24);
        assert_eq!(b.resamples, 0);
    }

    #[test]
    fn generation_is_deterministic() {
        let a = generate_block(4, 6, 0.4, 1).unwrap();
        let b = generate_block(4, 6, 0.4, 1).unwrap();
        assert_eq!(a.mask, b.mask);
        assert_ne!(a.mask, generate_block(4, 6, 0.4, 2).unwrap().mask);
    }

    #[test]
    fn generated_blocks_have_no_empty_rows_or_columns() {
        for seed in 0..50 {
            let b = generate_block(8, 8, 0.62, seed).unwrap();
            assert!((0..8).all(|c| b.fanout(c) > 0));
            assert!((0..8).all(|k| b.mask.iter().any(|r| r[k])));
        }
    }

    #[test]
    fn bad_generator_arguments() {
        assert!(matches!(generate_block(0, 3, 0.1, 0), Err(FrontendError::EmptyShape { .. })));
        assert!(matches!(generate_block(3, 3, 1.0, 0), Err(FrontendError::BadProbability(_))));
        assert!(matches!(generate_block(3, 3, -0.1, 0), Err(FrontendError::BadProbability(_))));
    }

    #[test]
    fn near_certain_zeros_exhaust_resampling() {
        assert!(matches!(generate_block(2, 2, 0.999_999_9, 3), Err(FrontendError::GenerationFailed(_))));
    }

    #[test]
    fn block5_statistics_give_58_ops() {
        let b = (0..)
            .map(|seed| generate_block(8, 8, 0.48, seed).unwrap())
            .find(|b| b.nnz() == 33)
            .unwrap();
        assert_eq!(build_sdfg(&b).unwrap().op_count(), 58);
    }

    #[test]
    fn minimal_kernel() {
        let b = SparseBlock::from_mask("one", mask(&[&[1]])).unwrap();
        let g = build_sdfg(&b).unwrap();
        assert_eq!(g.count(NodeKind::Mul), 1);
        assert_eq!(g.count(NodeKind::Add), 0);
        assert_eq!(g.count(NodeKind::InputRead), 1);
        assert_eq!(g.count(NodeKind::OutputWrite), 1);
        g.check_structure().unwrap();
    }

    #[test]
    fn balanced_tree_pairs_left_to_right() {
        let b = SparseBlock::from_mask("k5", mask(&[&[1], &[1], &[1], &[1], &[1]])).unwrap();
        let g = build_sdfg(&b).unwrap();
        let k = &g.kernels[0];
        let (m, a) = (&k.muls, &k.adds);
        assert_eq!(a.len(), 4);
        let preds = |v| {
            let mut p: Vec<NodeId> = g.preds(v).collect();
            p.sort();
            p
        };
        assert_eq!(preds(a[0]), vec![m[0], m[1]]);
        assert_eq!(preds(a[1]), vec![m[2], m[3]]);
        assert_eq!(preds(a[2]), vec![a[0], a[1]]);
        assert_eq!(preds(a[3]), vec![m[4], a[2]]);
        assert_eq!(g.preds(k.write).collect::<Vec<_>>(), vec![a[3]]);
    }

    #[test]
    fn empty_channel_drops_its_reading() {
        let b = SparseBlock::from_mask("gap", mask(&[&[1, 0], &[0, 0], &[1, 1]])).unwrap();
        let g = build_sdfg(&b).unwrap();
        assert_eq!(g.count(NodeKind::InputRead), 2);
        assert_eq!(g.op_count(), 2 * 3 - 2);
    }

    #[test]
    fn empty_kernel_rejected() {
        assert!(matches!(
            SparseBlock::from_mask("bad", mask(&[&[1, 0], &[1, 0]])),
            Err(FrontendError::EmptyKernel(1))
        ));
    }

    #[test]
    fn json_round_trip_and_errors() {
        let b = generate_block(3, 5, 0.3, 9).unwrap();
        let back = SparseBlock::from_json(&b.to_json()).unwrap();
        assert_eq!(back.mask, b.mask);
        assert_eq!(back.name, b.name);
        let bad = r#"{"name":"x","n":1,"m":2,"mask":[[1,2]]}"#;
        assert!(matches!(SparseBlock::from_json(bad), Err(FrontendError::MaskValue { .. })));
        let shape = r#"{"name":"x","n":2,"m":2,"mask":[[1,1]]}"#;
        assert!(matches!(SparseBlock::from_json(shape), Err(FrontendError::MaskShape { .. })));
    }

    #[test]
    fn association_counts_shared_kernels() {
        let b = SparseBlock::from_mask(
            "a",
            mask(&[&[1, 1, 0, 0], &[0, 0, 1, 1], &[1, 1, 1, 0], &[1, 1, 1, 1]]),
        )
        .unwrap();
        let g = build_sdfg(&b).unwrap();
        let a = association_matrix(&g);
        let r: Vec<NodeId> = g.original_reads().collect();
        // popcount of pairwise AND over mask rows
        for i in 0..4 {
            for j in 0..4 {
                let expect = (0..4).filter(|&k| b.mask[i][k] && b.mask[j][k]).count() as u32;
                assert_eq!(a.get(r[i], r[j]), expect);
            }
        }
        assert_eq!(a.get(r[0], r[1]), 0);
        assert_eq!(a.get(r[2], r[3]), 3);
        assert_eq!(a.fanout(r[3]), 4);
    }

    #[test]
    fn dense_counterpart_sizes() {
        let b = generate_block(8, 8, 0.5, 4).unwrap();
        let d = dense_counterpart(&b);
        assert_eq!(build_sdfg(&d).unwrap().op_count(), 120);
        let b = generate_block(4, 6, 0.5, 4).unwrap();
        let d = dense_counterpart(&b);
        assert_eq!(build_sdfg(&d).unwrap().op_count(), 42);
        assert_eq!(dense_counterpart(&d).mask, d.mask);
        assert_eq!(dense_counterpart(&d).name, d.name);
    }

    #[test]
    fn features_of_dense_c8k8() {
        let d = dense_counterpart(&generate_block(8, 8, 0.5, 0).unwrap());
        let f = block_features(&d).unwrap();
        assert_eq!((f.ops, f.reads, f.writes, f.n_fg4), (120, 8, 8, 8));
        assert_eq!(f.shape, "C8K8");
    }
}
