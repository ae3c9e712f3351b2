//! Modulo scheduling of an s-DFG with association-aware input bus allocation,
//! input multicasting, COP fallback, adder-tree reconstruction and output-writing
//! scheduling.
//!
//! The scheduler starts from the MII and restarts from scratch with `II + 1`
//! whenever any stage runs out of modulo resources.

mod adder_tree;
mod input;
mod output;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::frontend::{association_matrix, AssociationMatrix};
use crate::model::{mcid_set, CgraConfig, NodeId, NodeKind, Schedule, Sdfg};

pub use adder_tree::{asap_fixed_tree, rid_at};
pub use input::{aiba_select, mul_ci, sched_remain_mults, sched_with_caching};
pub use output::sched_writings;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SchedulerOptions {
    pub enable_aiba: bool,
    pub enable_mulci: bool,
    pub enable_ridat: bool,
    pub max_ii: u32,
    /// Association-blind, multicast-free scheduling over the fixed adder trees.
    pub baseline_mode: bool,
}

impl Default for SchedulerOptions {
    fn default() -> Self {
        SchedulerOptions { enable_aiba: true, enable_mulci: true, enable_ridat: true, max_ii: 16, baseline_mode: false }
    }
}

impl SchedulerOptions {
    pub fn baseline(max_ii: u32) -> Self {
        SchedulerOptions {
            enable_aiba: false,
            enable_mulci: false,
            enable_ridat: false,
            max_ii,
            baseline_mode: true,
        }
    }

    pub fn aiba(&self) -> bool {
        self.enable_aiba && !self.baseline_mode
    }

    pub fn mulci(&self) -> bool {
        self.enable_mulci && !self.baseline_mode
    }

    pub fn ridat(&self) -> bool {
        self.enable_ridat && !self.baseline_mode
    }
}

/// Stage that ran out of modulo resources during one attempt.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Stall {
    InputBuses,
    Caching,
    RemainingMuls,
    AdderTree,
    OutputWriting,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ScheduleError {
    #[error("no schedule up to II={last_ii} (last stall: {stall:?})")]
    Exhausted { last_ii: u32, stall: Stall },
    #[error("max II {max_ii} is below the MII {mii}")]
    MaxIiBelowMii { max_ii: u32, mii: u32 },
    #[error("malformed s-DFG: {0}")]
    InvalidGraph(String),
}

/// Working state of one scheduling attempt at a fixed II.
#[derive(Debug, Clone)]
pub struct SchedState {
    pub cfg: CgraConfig,
    pub sdfg: Sdfg,
    pub schedule: Schedule,
}

impl SchedState {
    pub fn new(sdfg: Sdfg, cfg: CgraConfig, ii: u32) -> Self {
        let schedule = Schedule::new(ii, sdfg.len());
        SchedState { cfg, sdfg, schedule }
    }

    pub fn ii(&self) -> u32 {
        self.schedule.ii
    }

    pub fn slot(&self, t: u32) -> usize {
        (t % self.schedule.ii) as usize
    }

    /// Free PE slots at the layer of time `t`.
    pub fn pe_free(&self, t: u32) -> u32 {
        self.cfg.pe_count().saturating_sub(self.schedule.tables.pe[self.slot(t)])
    }

    /// Assigns time `t` to a PE-executed node and books its PE slot.
    pub fn place_op(&mut self, v: NodeId, t: u32) {
        debug_assert!(self.sdfg.kind(v).on_pe());
        self.schedule.set_time(v, t);
        let s = self.slot(t);
        self.schedule.tables.pe[s] += 1;
    }

    /// Assigns time `t` to a reading (original or clone) and books an input bus.
    pub fn place_read(&mut self, r: NodeId, t: u32) {
        let s = self.slot(t);
        self.schedule.set_time(r, t);
        self.schedule.bus_alloc.insert(r, self.schedule.tables.input[s]);
        self.schedule.tables.input[s] += 1;
    }

    pub fn place_write(&mut self, w: NodeId, t: u32) {
        let s = self.slot(t);
        self.schedule.set_time(w, t);
        self.schedule.bus_alloc.insert(w, self.schedule.tables.output[s]);
        self.schedule.tables.output[s] += 1;
    }

    pub(crate) fn new_node(&mut self, kind: NodeKind, kernel: Option<u32>, channel: Option<u32>) -> NodeId {
        let v = self.sdfg.add_node(kind, kernel, channel);
        self.schedule.resize(self.sdfg.len());
        v
    }

    /// Moves the producer of `consumer` from `from` to `to`.
    pub(crate) fn redirect(&mut self, from: NodeId, to: NodeId, consumer: NodeId) {
        let removed = self.sdfg.remove_edge(from, consumer);
        debug_assert!(removed, "missing edge {from}->{consumer}");
        self.sdfg.add_edge(to, consumer);
    }
}

/// A scheduled (and possibly rewritten) s-DFG.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Scheduled {
    pub mii: u32,
    pub sdfg: Sdfg,
    pub schedule: Schedule,
}

impl Scheduled {
    pub fn cops(&self) -> u32 {
        self.sdfg.count(NodeKind::Cop) as u32
    }

    pub fn mcids(&self) -> u32 {
        mcid_set(&self.sdfg, &self.schedule).map_or(0, |s| s.len() as u32)
    }
}

/// `max(⌈|V_OP|/(N·M)⌉, ⌈|V_R|/M⌉, ⌈|V_W|/N⌉)`, at least 1.
pub fn calculate_mii(sdfg: &Sdfg, cfg: &CgraConfig) -> u32 {
    mii_from_counts(sdfg.op_count() as u32, sdfg.original_reads().count() as u32, sdfg.count(NodeKind::OutputWrite) as u32, cfg)
}

pub fn mii_from_counts(ops: u32, reads: u32, writes: u32, cfg: &CgraConfig) -> u32 {
    ops.div_ceil(cfg.pe_count())
        .max(reads.div_ceil(cfg.input_buses()))
        .max(writes.div_ceil(cfg.output_buses()))
        .max(1)
}

/// MII of the dense block with the same channels and kernels.
pub fn dense_mii(sdfg: &Sdfg, cfg: &CgraConfig) -> u32 {
    let n = sdfg.original_reads().count() as u32;
    let m = sdfg.kernels.len() as u32;
    mii_from_counts((2 * n * m).saturating_sub(m), n, m, cfg)
}

pub fn schedule_loop(sdfg: &Sdfg, cfg: &CgraConfig, opts: &SchedulerOptions) -> Result<Scheduled, ScheduleError> {
    schedule_loop_from(sdfg, cfg, opts, 1)
}

/// Like [`schedule_loop`] but never tries an II below `start_ii`.
pub fn schedule_loop_from(
    sdfg: &Sdfg,
    cfg: &CgraConfig,
    opts: &SchedulerOptions,
    start_ii: u32,
) -> Result<Scheduled, ScheduleError> {
    sdfg.check_structure().map_err(ScheduleError::InvalidGraph)?;
    if sdfg.nodes.iter().any(|n| n.kind == NodeKind::Cop || n.clone_of.is_some()) {
        return Err(ScheduleError::InvalidGraph("input already carries COPs or multicast clones".into()));
    }
    let mii = calculate_mii(sdfg, cfg);
    if opts.max_ii < mii {
        return Err(ScheduleError::MaxIiBelowMii { max_ii: opts.max_ii, mii });
    }
    let assoc = association_matrix(sdfg);
    let mut ii = mii.max(start_ii);
    let mut stall = Stall::InputBuses;
    while ii <= opts.max_ii {
        match attempt(sdfg, cfg, opts, &assoc, ii) {
            Ok(state) => return Ok(Scheduled { mii, sdfg: state.sdfg, schedule: state.schedule }),
            Err(s) => stall = s,
        }
        ii += 1;
    }
    Err(ScheduleError::Exhausted { last_ii: ii - 1, stall })
}

/// Association-blind, multicast-free scheduling over the fixed balanced adder trees.
pub fn baseline_schedule(sdfg: &Sdfg, cfg: &CgraConfig, max_ii: u32) -> Result<Scheduled, ScheduleError> {
    schedule_loop(sdfg, cfg, &SchedulerOptions::baseline(max_ii))
}

/// One pass over all readings at a fixed II; every attempt starts from a fresh
/// copy of the s-DFG so nothing from a failed II survives.
fn attempt(
    sdfg: &Sdfg,
    cfg: &CgraConfig,
    opts: &SchedulerOptions,
    assoc: &AssociationMatrix,
    ii: u32,
) -> Result<SchedState, Stall> {
    let mut st = SchedState::new(sdfg.clone(), *cfg, ii);
    let mut unscheduled: Vec<NodeId> = sdfg.original_reads().collect();
    let (rows, pes, buses) = (cfg.rows as usize, cfg.pe_count() as usize, cfg.input_buses());
    let mut t = 0u32;
    while !unscheduled.is_empty() {
        let m = st.slot(t);
        // a layer without a free bus or a free PE cannot take another reading
        let tables = &st.schedule.tables;
        if tables.input[m] + 1 > buses || tables.pe[m] as usize >= pes {
            let any_open = (0..ii as usize).any(|s| tables.input[s] < buses && (tables.pe[s] as usize) < pes);
            if !any_open {
                return Err(Stall::InputBuses);
            }
            t += 1;
            continue;
        }
        let r = if opts.aiba() {
            let at_t: Vec<NodeId> = st.sdfg.original_reads().filter(|&s| st.schedule.time(s) == Some(t)).collect();
            aiba_select(&unscheduled, &at_t, assoc)
        } else {
            unscheduled[0]
        };
        unscheduled.retain(|&u| u != r);
        st.place_read(r, t);
        let fanout = st.sdfg.fanout_muls(r);
        if fanout.len() + st.schedule.tables.pe[m] as usize <= pes {
            if fanout.len() <= rows {
                for mul in fanout {
                    st.place_op(mul, t);
                }
                continue;
            }
            if opts.mulci() && mul_ci(&mut st, r, t) {
                continue;
            }
        }
        if sched_with_caching(&mut st, r, t) {
            continue;
        }
        return Err(Stall::Caching);
    }
    sched_remain_mults(&mut st)?;
    for k in 0..st.sdfg.kernels.len() {
        if opts.ridat() {
            rid_at(&mut st, k)?;
        } else {
            asap_fixed_tree(&mut st, k)?;
        }
    }
    sched_writings(&mut st)?;
    Ok(st)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::{build_sdfg, dense_counterpart, generate_block, SparseBlock};
    use crate::model::{EdgeKind, Edge};

    fn cfg() -> CgraConfig {
        CgraConfig::default()
    }

    #[test]
    fn mii_examples() {
        let c = cfg();
        assert_eq!(mii_from_counts(58, 8, 8, &c), 4);
        assert_eq!(mii_from_counts(26, 4, 6, &c), 2);
        assert_eq!(mii_from_counts(120, 8, 8, &c), 8);
        let dense = dense_counterpart(&generate_block(8, 8, 0.5, 1).unwrap());
        assert_eq!(calculate_mii(&build_sdfg(&dense).unwrap(), &c), 8);
    }

    #[test]
    fn minimal_kernel_schedules_at_ii_one() {
        let b = SparseBlock::from_mask("one", vec![vec![true]]).unwrap();
        let g = build_sdfg(&b).unwrap();
        for opts in [SchedulerOptions::default(), SchedulerOptions::baseline(4)] {
            let s = schedule_loop(&g, &cfg(), &opts).unwrap();
            assert_eq!(s.schedule.ii, 1);
            assert_eq!(s.schedule.times, vec![Some(0), Some(0), Some(1)]);
            assert_eq!((s.cops(), s.mcids()), (0, 0));
        }
    }

    #[test]
    fn max_ii_below_mii_rejected() {
        let g = build_sdfg(&generate_block(8, 8, 0.0, 0).unwrap()).unwrap();
        let opts = SchedulerOptions { max_ii: 3, ..Default::default() };
        assert_eq!(schedule_loop(&g, &cfg(), &opts), Err(ScheduleError::MaxIiBelowMii { max_ii: 3, mii: 8 }));
    }

    #[test]
    fn exhaustion_reports_last_ii() {
        let g = build_sdfg(&generate_block(8, 8, 0.0, 0).unwrap()).unwrap();
        let opts = SchedulerOptions { max_ii: 8, ..Default::default() };
        match schedule_loop(&g, &cfg(), &opts) {
            Ok(s) => assert_eq!(s.schedule.ii, 8),
            Err(ScheduleError::Exhausted { last_ii, .. }) => assert_eq!(last_ii, 8),
            Err(e) => panic!("{e}"),
        }
    }

    fn check_dependencies(s: &Scheduled) {
        let t = |v| s.schedule.time(v).unwrap();
        for &e in &s.sdfg.edges {
            match s.sdfg.edge_kind(e) {
                EdgeKind::Input => assert_eq!(t(e.dst), t(e.src), "{e}"),
                EdgeKind::Output => assert_eq!(t(e.dst), t(e.src) + 1, "{e}"),
                EdgeKind::Internal => assert!(t(e.dst) > t(e.src), "{e}"),
            }
        }
    }

    fn check_tables(s: &Scheduled, c: &CgraConfig) {
        let ii = s.schedule.ii;
        let mut pe = vec![0; ii as usize];
        let mut inp = vec![0; ii as usize];
        let mut out = vec![0; ii as usize];
        for n in &s.sdfg.nodes {
            let m = s.schedule.modulo(n.id).unwrap() as usize;
            match n.kind {
                NodeKind::InputRead => inp[m] += 1,
                NodeKind::OutputWrite => out[m] += 1,
                _ => pe[m] += 1,
            }
        }
        assert_eq!(pe, s.schedule.tables.pe);
        assert_eq!(inp, s.schedule.tables.input);
        assert_eq!(out, s.schedule.tables.output);
        assert!(pe.iter().all(|&x| x <= c.pe_count()));
        assert!(inp.iter().all(|&x| x <= c.input_buses()));
        assert!(out.iter().all(|&x| x <= c.output_buses()));
    }

    #[test]
    fn random_blocks_satisfy_schedule_invariants() {
        let c = cfg();
        for seed in 0..40 {
            for (n, m, p) in [(4, 6, 0.33), (6, 6, 0.42), (8, 8, 0.48), (8, 8, 0.62)] {
                let g = build_sdfg(&generate_block(n, m, p, seed).unwrap()).unwrap();
                for opts in [SchedulerOptions::default(), SchedulerOptions::baseline(16)] {
                    let s = schedule_loop(&g, &c, &opts).unwrap();
                    s.sdfg.check_structure().unwrap();
                    assert!(s.schedule.ii >= s.mii);
                    check_dependencies(&s);
                    check_tables(&s, &c);
                    // uncached, non-multicast readings have every mul co-timed
                    for r in s.sdfg.original_reads() {
                        if !s.schedule.is_cached(r) && !s.schedule.is_multicast(r) {
                            for mul in s.sdfg.fanout_muls(r) {
                                assert_eq!(s.schedule.time(mul), s.schedule.time(r));
                            }
                        }
                    }
                    // each kernel's tree still sums exactly its multiplications
                    for k in &s.sdfg.kernels {
                        let mut leaves = Vec::new();
                        let mut stack = vec![k.write];
                        while let Some(v) = stack.pop() {
                            for p in s.sdfg.preds(v) {
                                match s.sdfg.kind(p) {
                                    NodeKind::Mul => leaves.push(p),
                                    NodeKind::Add | NodeKind::Cop => stack.push(p),
                                    other => panic!("unexpected {other:?} in adder tree"),
                                }
                            }
                        }
                        leaves.sort();
                        let mut expect = k.muls.clone();
                        expect.sort();
                        assert_eq!(leaves, expect);
                    }
                }
            }
        }
    }

    #[test]
    fn restart_leaves_no_stale_annotations() {
        let c = cfg();
        for seed in 0..30 {
            let g = build_sdfg(&generate_block(8, 8, 0.48, seed).unwrap()).unwrap();
            let s = schedule_loop(&g, &c, &SchedulerOptions::default()).unwrap();
            // a fresh run at the final II reproduces the result exactly
            let again = schedule_loop_from(&g, &c, &SchedulerOptions::default(), s.schedule.ii).unwrap();
            assert_eq!(again, s);
            assert_eq!(s.schedule.times.len(), s.sdfg.len());
            assert!(s.schedule.times.iter().all(Option::is_some));
        }
    }

    #[test]
    fn scheduling_is_deterministic() {
        let g = build_sdfg(&generate_block(6, 6, 0.42, 11).unwrap()).unwrap();
        let a = schedule_loop(&g, &cfg(), &SchedulerOptions::default()).unwrap();
        let b = schedule_loop(&g, &cfg(), &SchedulerOptions::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn mcids_are_derived_from_times() {
        let g = build_sdfg(&generate_block(8, 8, 0.48, 3).unwrap()).unwrap();
        let s = schedule_loop(&g, &cfg(), &SchedulerOptions::default()).unwrap();
        let manual: Vec<Edge> = s
            .sdfg
            .edges_of(EdgeKind::Internal)
            .filter(|e| s.schedule.time(e.dst).unwrap() - s.schedule.time(e.src).unwrap() > 1)
            .collect();
        assert_eq!(s.mcids() as usize, manual.len());
    }
}
