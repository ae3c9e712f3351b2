use proptest::prelude::*;
use sparsemap::binder::{tabu_mis, Graph, MisOptions};
use sparsemap::frontend::{build_sdfg, generate_block};
use sparsemap::model::{CgraConfig, Mapping, NodeKind};
use sparsemap::scheduler::{schedule_loop, SchedulerOptions};
use sparsemap::validator::{validate, Violation};

fn any_options() -> impl Strategy<Value = SchedulerOptions> {
    (any::<bool>(), any::<bool>(), any::<bool>(), any::<bool>()).prop_map(|(aiba, mulci, ridat, baseline)| {
        if baseline {
            SchedulerOptions::baseline(16)
        } else {
            SchedulerOptions { enable_aiba: aiba, enable_mulci: mulci, enable_ridat: ridat, ..Default::default() }
        }
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn sdfg_shape_follows_the_mask(n in 1usize..9, m in 1usize..9, p in 0.0f64..0.8, seed in any::<u64>()) {
        let block = generate_block(n, m, p, seed).unwrap();
        let g = build_sdfg(&block).unwrap();
        prop_assert_eq!(g.op_count(), 2 * block.nnz() - m);
        prop_assert_eq!(g.count(NodeKind::OutputWrite), m);
        prop_assert!(g.topo_order().is_some());
        prop_assert!(g.check_structure().is_ok());
    }

    #[test]
    fn schedules_respect_timing(n in 1usize..7, m in 1usize..7, p in 0.0f64..0.7, seed in 0u64..1000, opts in any_options()) {
        let block = generate_block(n, m, p, seed).unwrap();
        let g = build_sdfg(&block).unwrap();
        let cfg = CgraConfig::default();
        let s = schedule_loop(&g, &cfg, &opts).unwrap();
        prop_assert!(s.schedule.ii >= s.mii);
        prop_assert!(s.sdfg.check_structure().is_ok());
        prop_assert_eq!(s.sdfg.op_count(), g.op_count());
        let report = validate(&s.sdfg, &cfg, &s.schedule, &Mapping::default());
        let timing: Vec<_> = report
            .violations
            .iter()
            .filter(|v| matches!(v, Violation::Unscheduled { .. } | Violation::Timing { .. } | Violation::ModuloBound { .. }))
            .collect();
        prop_assert!(timing.is_empty(), "{:?}", timing);
    }

    #[test]
    fn tabu_sets_are_independent(n in 1usize..60, edges in prop::collection::vec((0u32..60, 0u32..60), 0..300), seed in any::<u64>()) {
        let edges: Vec<(u32, u32)> = edges.into_iter().filter(|&(a, b)| a != b && (a as usize) < n && (b as usize) < n).collect();
        let g = Graph::from_edges(n, edges);
        let set = tabu_mis(&g, &MisOptions { max_iters: 2_000, ..Default::default() }, None, seed);
        prop_assert!(!set.is_empty());
        for &v in &set {
            prop_assert!(g.neighbors(v).iter().all(|u| !set.contains(u)));
        }
    }
}
