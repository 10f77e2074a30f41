//! Exactness of the branch-and-bound solver against independent oracles:
//! exhaustive enumeration of all valid orderings, and a brute-force
//! interpretation of the exported LP files.

mod common;

use common::{enumerate_min_span, lp_min_span, parse_lp, random_tiny_instance, Rng};
use crossched::exact::{build_model, render_lp, solve_exact, stage0_span};
use crossched::greedy::generate_greedy;
use crossched::patterns::build_true_deps;
use crossched::plan::Family;
use crossched::problem::{PatternTag, ProblemBuilder};
use crossched::sim::{simulate, validate_schedule};
use crossched::static_schedules::build_static;

#[test]
fn branch_and_bound_matches_exhaustive_enumeration() {
    let mut rng = Rng::new(0xC0FFEE);
    let mut checked = 0;
    while checked < 10 {
        let spec = random_tiny_instance(&mut rng);
        let graph = build_true_deps(&spec).unwrap();
        if graph.n_compute() > 14 {
            continue;
        }
        let oracle = enumerate_min_span(&graph, &spec);
        let model = build_model(&graph, &spec);
        match (oracle, solve_exact(&model, 10.0)) {
            (Some(best), Ok(outcome)) => {
                assert!(outcome.optimal, "instance {checked} not proven optimal");
                assert!(
                    (outcome.makespan - best).abs() < 1e-9,
                    "instance {checked}: solver {} vs enumeration {best}",
                    outcome.makespan
                );
                assert!(validate_schedule(&graph, &outcome.plan, &spec).is_empty());
            }
            (None, Err(_)) => {}
            (oracle, solver) => panic!(
                "instance {checked}: oracle {oracle:?} vs solver {:?}",
                solver.map(|o| o.makespan)
            ),
        }
        checked += 1;
    }
}

#[test]
fn optimality_sandwich_on_ud_instances() {
    // exact <= greedy and exact <= every buildable static schedule.
    let mut rng = Rng::new(0xBEEF);
    for _ in 0..6 {
        let spec = ProblemBuilder::new(PatternTag::Ud, 2, 2)
            .durations(rng.dyadic() + 0.25, rng.dyadic() + 0.25, rng.dyadic() + 0.25)
            .mem_limit_uniform(8.0)
            .dcs(2)
            .cross_delay(rng.dyadic() * 0.5, rng.dyadic() * 0.5)
            .build()
            .unwrap();
        let graph = build_true_deps(&spec).unwrap();
        let outcome = solve_exact(&build_model(&graph, &spec), 10.0).unwrap();
        let (_, greedy_tl) = generate_greedy(&spec).unwrap();
        assert!(
            outcome.makespan <= stage0_span(&greedy_tl) + 1e-9,
            "greedy beat the exact solver"
        );
        for family in [Family::OneFOneB, Family::ZbH1] {
            let plan = build_static(&spec, family).unwrap();
            let tl = simulate(&graph, &plan, &spec).unwrap();
            assert!(
                outcome.makespan <= stage0_span(&tl) + 1e-9,
                "{family} beat the exact solver"
            );
        }
    }
}

#[test]
fn exported_lp_reproduces_the_solver_optimum() {
    // Three tiny instances small enough to brute-force every binary
    // assignment of the exported file.
    let cases = [
        ProblemBuilder::new(PatternTag::Ud, 2, 1)
            .dcs(2)
            .build()
            .unwrap(),
        ProblemBuilder::new(PatternTag::Ud, 2, 1)
            .dcs(2)
            .durations(0.5, 1.0, 0.75)
            .cross_delay(0.25, 0.5)
            .build()
            .unwrap(),
        ProblemBuilder::new(PatternTag::Ud, 2, 1)
            .durations(1.0, 0.5, 0.5)
            .memory(2.0, -1.0)
            .mem_limit_uniform(2.0)
            .dcs(2)
            .cross_delay(0.0, 1.0)
            .message_bytes(0.5)
            .build()
            .unwrap(),
    ];
    for (i, spec) in cases.iter().enumerate() {
        let graph = build_true_deps(spec).unwrap();
        let model = build_model(&graph, spec);
        let lp = parse_lp(&render_lp(&model));
        let lp_best = lp_min_span(&lp).unwrap_or_else(|| panic!("case {i}: LP infeasible"));
        let outcome = solve_exact(&model, 5.0).unwrap();
        assert!(outcome.optimal, "case {i} not proven optimal");
        assert!(
            (lp_best - outcome.makespan).abs() < 1e-9,
            "case {i}: LP {lp_best} vs solver {}",
            outcome.makespan
        );
    }
}

#[test]
fn wave_and_ud_cross_over_as_delays_grow() {
    // At zero delay the wave schedule wins; at latency and bandwidth ratios
    // of 2 the UD schedule wins.
    let solve = |pattern: PatternTag, lat: f64, bw: f64| -> f64 {
        let mut b = ProblemBuilder::new(pattern, 2, 4)
            .mem_limit_uniform(100.0)
            .dcs(2)
            .cross_delay(lat, bw)
            .message_bytes(1.0);
        if pattern == PatternTag::Wave {
            b = b.chunks(2);
        }
        let spec = b.build().unwrap();
        let graph = build_true_deps(&spec).unwrap();
        solve_exact(&build_model(&graph, &spec), 5.0).unwrap().makespan
    };
    let wave0 = solve(PatternTag::Wave, 0.0, 0.0);
    let ud0 = solve(PatternTag::Ud, 0.0, 0.0);
    assert!(wave0 <= ud0 + 1e-9, "zero delay: wave {wave0} vs ud {ud0}");

    // T_F is 1.0, so ratios of 2 are absolute delays of 2.
    let wave2 = solve(PatternTag::Wave, 2.0, 2.0);
    let ud2 = solve(PatternTag::Ud, 2.0, 2.0);
    assert!(ud2 <= wave2 + 1e-9, "high delay: ud {ud2} vs wave {wave2}");
}
