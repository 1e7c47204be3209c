use std::time::Instant;

use ddbd::engine::{solve, SolverConfig};
use ddbd::genio::{generate, GeneratorParams};
use ddbd::oracle::{solve_exhaustive, OracleConfig};
use ddbd::report::Termination;
use ddbd::transform::NsnmIndexing;

fn compare(nodes: usize, scenarios: usize, seed: u64, width: Option<usize>) {
    let inst = generate(&GeneratorParams::new(nodes, scenarios, seed)).unwrap();
    let t = Instant::now();
    let oracle = solve_exhaustive(&inst, &OracleConfig::default()).unwrap();
    let to = t.elapsed();
    let t = Instant::now();
    let config = SolverConfig {
        width_limit: width,
        ..SolverConfig::default()
    };
    let engine = solve(&inst, &config).unwrap();
    let te = t.elapsed();
    let idx = NsnmIndexing::new(&inst.network);
    eprintln!(
        "n={nodes} s={scenarios} seed={seed} w={width:?} matchings={} oracle={:?} ({to:?}) engine={:?} ({te:?}) nodes={} iters={} cuts={}+{}",
        idx.total_matching_count(),
        oracle.value,
        engine.value,
        engine.stats.nodes_explored,
        engine.stats.iterations,
        engine.stats.optimality_cuts,
        engine.stats.feasibility_cuts
    );
    assert_eq!(engine.termination, oracle.termination);
    if oracle.termination == Termination::Optimal {
        assert!((engine.value.unwrap() - oracle.value.unwrap()).abs() <= 1e-6);
    }
}

#[test]
fn small_instances_agree_with_enumeration() {
    for seed in 0..6 {
        for (n, s) in [(8, 1), (10, 3), (12, 5)] {
            for width in [Some(2), Some(8), None] {
                compare(n, s, seed, width);
            }
        }
    }
}
