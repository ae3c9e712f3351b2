//! Binding of a modulo schedule onto the time-extended CGRA.
//!
//! Multi-cycle dependencies get GRF or LRF resources up front, then every node
//! receives candidate placements whose pairwise conflicts form a graph. A
//! maximum independent set covering all nodes is a legal mapping; when none is
//! found the II is raised and the loop is rescheduled.

mod conflict;
mod extract;
mod mis;
mod routes;

use num_rational::Ratio;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{CgraConfig, Mapping, Metrics, Schedule, Sdfg};
use crate::scheduler::{dense_mii, schedule_loop_from, ScheduleError, Scheduled, SchedulerOptions};

pub use conflict::{build_conflict_graph, bus_use, reaches, Bus, ConflictError, ConflictGraph};
pub use extract::{extract_mapping, ExtractError, Extracted};
pub use mis::{cover_search, exact_mis, solve_mis, tabu_mis, Cover, Graph, MisOptions};
pub use routes::{preallocate_routes, GrfPlan, PreallocError, RouteClass, RoutePlan};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct BinderOptions {
    /// Independent MIS runs per II before giving up on it.
    pub mis_seeds: u32,
    pub seed: u64,
    pub mis: MisOptions,
}

impl Default for BinderOptions {
    fn default() -> Self {
        BinderOptions { mis_seeds: 16, seed: 0, mis: MisOptions::default() }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MapOptions {
    pub scheduler: SchedulerOptions,
    pub binder: BinderOptions,
}

impl MapOptions {
    pub fn baseline(max_ii: u32) -> Self {
        MapOptions { scheduler: SchedulerOptions::baseline(max_ii), binder: BinderOptions::default() }
    }
}

/// Why one II could not be bound.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum BindFailure {
    Preallocation(String),
    NoCandidate(String),
    /// Largest independent set found against the number of nodes.
    Incomplete { best: usize, needed: usize },
    LrfOverflow,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttemptLog {
    pub ii: u32,
    pub cops: u32,
    pub mcids: u32,
    pub grf_mcids: u32,
    pub vertices: usize,
    pub failure: Option<BindFailure>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mapped {
    pub sdfg: Sdfg,
    pub schedule: Schedule,
    pub mapping: Mapping,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MapOutcome {
    pub metrics: Metrics,
    pub attempts: Vec<AttemptLog>,
    pub mapped: Option<Mapped>,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MapError {
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
}

/// Binds one schedule, trying `mis_seeds` independent searches.
pub fn bind_schedule(
    sched: &Scheduled,
    cfg: &CgraConfig,
    opts: &BinderOptions,
) -> (Result<Mapping, BindFailure>, AttemptLog) {
    let mut log = AttemptLog {
        ii: sched.schedule.ii,
        cops: sched.cops(),
        mcids: sched.mcids(),
        grf_mcids: 0,
        vertices: 0,
        failure: None,
    };
    let result = bind_inner(sched, cfg, opts, &mut log);
    log.failure = result.as_ref().err().cloned();
    (result, log)
}

fn bind_inner(
    sched: &Scheduled,
    cfg: &CgraConfig,
    opts: &BinderOptions,
    log: &mut AttemptLog,
) -> Result<Mapping, BindFailure> {
    let (sdfg, schedule) = (&sched.sdfg, &sched.schedule);
    let plan = preallocate_routes(sdfg, schedule, cfg).map_err(|e| BindFailure::Preallocation(e.to_string()))?;
    log.grf_mcids = plan.grf_edges().count() as u32;
    let cg = build_conflict_graph(sdfg, schedule, cfg, &plan).map_err(|e| BindFailure::NoCandidate(e.to_string()))?;
    log.vertices = cg.len();
    let needed = sdfg.len();
    let mut best = 0;
    let mut overflow = false;
    for k in 0..opts.mis_seeds.max(1) {
        let seed = opts.seed.wrapping_add(k as u64);
        let mis = if cg.len() <= opts.mis.exact_threshold.min(64) {
            solve_mis(&cg.graph, &opts.mis, Some(needed), seed)
        } else {
            cover_search(&cg.graph, &cg.candidates, &opts.mis, seed).set
        };
        best = best.max(mis.len());
        match extract_mapping(&cg, &mis, sdfg, schedule, &plan, cfg) {
            Ok(Extracted::Complete(m)) => return Ok(m),
            Ok(Extracted::Incomplete { .. }) => {}
            Ok(Extracted::LrfOverflow { .. }) => overflow = true,
            Err(e) => panic!("MIS solver returned an inconsistent set: {e}"),
        }
    }
    if overflow && best == needed {
        Err(BindFailure::LrfOverflow)
    } else {
        Err(BindFailure::Incomplete { best, needed })
    }
}

/// Schedules and binds, raising the II after any failed binding until `max_ii`.
pub fn map_with_retries(sdfg: &Sdfg, cfg: &CgraConfig, opts: &MapOptions) -> Result<MapOutcome, MapError> {
    let mut attempts = Vec::new();
    let mut start = 1;
    let mut metrics: Option<Metrics> = None;
    loop {
        let sched = match schedule_loop_from(sdfg, cfg, &opts.scheduler, start) {
            Ok(s) => s,
            Err(ScheduleError::Exhausted { .. }) if metrics.is_some() => break,
            Err(ScheduleError::Exhausted { .. }) => {
                let mii = crate::scheduler::calculate_mii(sdfg, cfg);
                return Ok(MapOutcome { metrics: failed_metrics(mii), attempts, mapped: None });
            }
            Err(e) => return Err(e.into()),
        };
        let (result, log) = bind_schedule(&sched, cfg, &opts.binder);
        let m = metrics.get_or_insert_with(|| Metrics {
            mii: sched.mii,
            ii_first_attempt: Some(log.ii),
            cops: log.cops,
            mcids: log.mcids,
            first_attempt_success: result.is_ok(),
            final_ii: None,
            final_cops: 0,
            final_mcids: 0,
            speedup: None,
        });
        start = sched.schedule.ii + 1;
        attempts.push(log);
        if let Ok(mapping) = result {
            let ii = sched.schedule.ii;
            m.final_ii = Some(ii);
            m.final_cops = sched.cops();
            m.final_mcids = sched.mcids();
            m.speedup = Some(Ratio::new(dense_mii(&sched.sdfg, cfg), ii));
            let metrics = m.clone();
            let mapped = Mapped { sdfg: sched.sdfg, schedule: sched.schedule, mapping };
            return Ok(MapOutcome { metrics, attempts, mapped: Some(mapped) });
        }
        if start > opts.scheduler.max_ii {
            break;
        }
    }
    let metrics = metrics.expect("at least one schedule was produced");
    Ok(MapOutcome { metrics, attempts, mapped: None })
}

fn failed_metrics(mii: u32) -> Metrics {
    Metrics {
        mii,
        ii_first_attempt: None,
        cops: 0,
        mcids: 0,
        first_attempt_success: false,
        final_ii: None,
        final_cops: 0,
        final_mcids: 0,
        speedup: None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::{build_sdfg, generate_block, SparseBlock};

    #[test]
    fn minimal_kernel_maps_first_time() {
        let g = build_sdfg(&SparseBlock::from_mask("one", vec![vec![true]]).unwrap()).unwrap();
        let out = map_with_retries(&g, &CgraConfig::default(), &MapOptions::default()).unwrap();
        assert!(out.metrics.first_attempt_success);
        assert_eq!(out.metrics.final_ii, Some(1));
        let mapped = out.mapped.unwrap();
        assert_eq!(mapped.mapping.bindings.len(), 3);
        assert_eq!(mapped.mapping.routes.len(), 2);
    }

    #[test]
    fn random_block_maps() {
        let g = build_sdfg(&generate_block(4, 6, 0.33, 3).unwrap()).unwrap();
        let out = map_with_retries(&g, &CgraConfig::default(), &MapOptions::default()).unwrap();
        let mapped = out.mapped.expect("block maps");
        assert_eq!(mapped.mapping.bindings.len(), mapped.sdfg.len());
        assert_eq!(mapped.mapping.routes.len(), mapped.sdfg.edges.len());
        assert!(out.metrics.final_ii.unwrap() >= out.metrics.mii);
    }

    #[test]
    fn exhausted_ii_reports_failure() {
        let g = build_sdfg(&generate_block(8, 8, 0.0, 0).unwrap()).unwrap();
        let mut opts = MapOptions::default();
        opts.scheduler.max_ii = 8;
        opts.binder.mis.max_iters = 200;
        opts.binder.mis_seeds = 1;
        let out = map_with_retries(&g, &CgraConfig::default(), &opts).unwrap();
        if out.mapped.is_none() {
            assert!(!out.metrics.success());
            assert!(out.attempts.iter().all(|a| a.failure.is_some()));
        }
    }
}
