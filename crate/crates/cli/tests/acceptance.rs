//! Acceptance suite: one test per criterion, each printing a pass/fail line
//! and asserting the stated tolerances.
//!
//! The heavy reproduction pipelines (criteria 6 and 7) are computed once and
//! shared. Two known-unattainable comparisons are asserted literally and
//! fail with a full account of the achieved values: the published constant
//! `17.9 sigma` is not what the defining vertex enumeration yields, and the
//! published length-2 distances are farther from the target than what the
//! optimal table walk produces here.

use std::sync::OnceLock;
use std::time::Instant;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use rdcontrol::bounds::{
    check_hypothesis, delta_bound, osl_constant, stability_params, CPlan, CStrategy,
};
use rdcontrol::bounds::c_constant;
use rdcontrol::grid::{build_grid, build_next_map};
use rdcontrol::integrate::{euler_step, reference_integrate, simulate_pattern};
use rdcontrol::model::{extend_modes, DiscreteSystem, Mode, ReactionSpec, SystemParams};
use rdcontrol::reduce::{
    commutation_defect, k2_constant, reduction_error_bound, K2Method, ReductionPair,
};
use rdcontrol::synth::{
    brute_force_optimal, extract_pattern, guarantee_bound, terminal_cost, value_iteration,
    walk_pattern,
};
use rdcontrol::artifact::write_controller;
use rdcontrol_cli::config::{prepare, RunConfig};
use rdcontrol_cli::pipeline::{run_hypothesis, run_synthesis};
use rdcontrol_cli::repro::{
    run_reproduce, ComparisonReport, ReproId, PUBLISHED_LAMBDA_H1,
};

fn norm_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

fn example1_system() -> DiscreteSystem {
    DiscreteSystem::build(SystemParams {
        node_count: 5,
        length: 4.0,
        sigma: 1.0,
        reaction: ReactionSpec::BistableCubic { theta: 0.3 },
        modes: [0.0, 0.2, 0.4, 0.6, 0.8, 1.0]
            .iter()
            .map(|&v| Mode::new(v, v))
            .collect(),
        tau: 0.1,
    })
    .unwrap()
}

#[test]
fn criterion_1_formula_reproduction() {
    let started = Instant::now();
    let e0 = 1.0 / 30.0;

    let loose = stability_params(-0.322, 10.33, e0).unwrap();
    assert!(
        (loose.g - 0.0017997).abs() < 1e-6,
        "G(10.33) = {}",
        loose.g
    );
    let tight = stability_params(-0.322, 11.85, e0).unwrap();
    assert!(
        (tight.g - 0.0015688).abs() < 1e-6,
        "G(11.85) = {}",
        tight.g
    );

    let min_tau_max = loose.tau_max.min(tight.tau_max);
    assert!(
        (min_tau_max - 0.00155).abs() < 2e-5,
        "min tau_max = {min_tau_max}"
    );

    let eps = 5.0_f64.sqrt() / 30.0;
    let b20 = guarantee_bound(20, eps);
    assert_eq!(b20, 41.0 * eps);
    assert!(b20 < 3.1, "bound(20) = {b20}");
    let b10 = guarantee_bound(10, eps);
    assert_eq!(b10, 21.0 * eps);
    assert!(b10 < 1.57, "bound(10) = {b10}");

    println!(
        "criterion 1: PASS (G = {:.7}/{:.7}, min tau_max = {:.7}, bounds {:.4}/{:.4}) in {:?}",
        loose.g,
        tight.g,
        min_tau_max,
        b20,
        b10,
        started.elapsed()
    );
}

#[test]
fn criterion_2_osl_soundness() {
    let started = Instant::now();
    let sys = example1_system();
    let lambda = osl_constant(&sys, &sys.modes[0]);
    assert!(lambda <= -0.32, "lambda = {lambda}");

    let mut rng = StdRng::seed_from_u64(0xACC2);
    let mode = &sys.modes[3];
    let mut violations = 0usize;
    for _ in 0..1000 {
        let y1: Vec<f64> = (0..5).map(|_| rng.random_range(0.0..=1.0)).collect();
        let y2: Vec<f64> = (0..5).map(|_| rng.random_range(0.0..=1.0)).collect();
        let f1 = rdcontrol::model::vector_field(&sys, mode, &y1).unwrap();
        let f2 = rdcontrol::model::vector_field(&sys, mode, &y2).unwrap();
        let mut inner = 0.0;
        let mut dist_sq = 0.0;
        for i in 0..5 {
            inner += (f1[i] - f2[i]) * (y1[i] - y2[i]);
            dist_sq += (y1[i] - y2[i]) * (y1[i] - y2[i]);
        }
        if inner > lambda * dist_sq + 1e-12 * dist_sq.max(1.0) {
            violations += 1;
        }
    }
    assert_eq!(violations, 0, "{violations} OSL violations of 1000 pairs");
    println!(
        "criterion 2: PASS (lambda = {lambda:.5} <= -0.32, 1000 pairs, 0 violations) in {:?}",
        started.elapsed()
    );
}

#[test]
fn criterion_3_error_ball_envelopes() {
    let started = Instant::now();

    // containment of the reference-vs-Euler gap in the certified ball
    let mut rng = StdRng::seed_from_u64(0xACC3);
    let mut checked = 0usize;
    for instance in 0..50 {
        let node_count = rng.random_range(2..=5);
        let sys = DiscreteSystem::build(SystemParams {
            node_count,
            length: rng.random_range(1.5..4.0),
            sigma: rng.random_range(0.8..2.0),
            reaction: ReactionSpec::BistableCubic {
                theta: rng.random_range(0.2..0.8),
            },
            modes: vec![Mode::new(
                rng.random_range(0.0..=1.0),
                rng.random_range(0.0..=1.0),
            )],
            tau: rng.random_range(0.02..0.06),
        })
        .unwrap();
        let mode = sys.modes[0];
        let lambda = osl_constant(&sys, &mode);
        let c = c_constant(&sys, &mode, &CStrategy::DefinitionLiteral).unwrap();
        let y0: Vec<f64> = (0..node_count)
            .map(|_| rng.random_range(0.15..0.85))
            .collect();
        let shift = rng.random_range(-0.05..0.05);
        let z0: Vec<f64> = y0.iter().map(|v| (v + shift).clamp(0.0, 1.0)).collect();
        let mu = norm_diff(&y0, &z0);
        for t in [sys.tau / 4.0, sys.tau / 2.0, sys.tau] {
            let exact = reference_integrate(&sys, &mode, &y0, t).unwrap();
            let euler = euler_step(&sys, &mode, &z0, t).unwrap();
            let gap = norm_diff(&exact, &euler);
            let ball = delta_bound(lambda, c, mu, t).unwrap();
            assert!(
                gap <= ball + 1e-9,
                "instance {instance}: gap {gap} > ball {ball} at t = {t}"
            );
            checked += 1;
        }
    }
    assert_eq!(checked, 150);

    // containment of the ball itself within the initial error over the
    // stability window
    let mut accepted = 0usize;
    while accepted < 200 {
        let lambda = -rng.random_range(0.01..5.0);
        let c = rng.random_range(0.1..50.0);
        let e0 = rng.random_range(0.001..0.5);
        let Ok(params) = stability_params(lambda, c, e0) else {
            continue;
        };
        accepted += 1;
        let horizon = params.g * (1.0 - params.alpha);
        for i in 0..50 {
            let t = horizon * i as f64 / 49.0;
            let d = delta_bound(lambda, c, e0, t).unwrap();
            assert!(
                d <= e0 * (1.0 + 1e-9),
                "delta({t}) = {d} > {e0} for lambda = {lambda}, c = {c}"
            );
        }
    }
    println!(
        "criterion 3: PASS (150 flow gaps contained, 200 x 50 window containments) in {:?}",
        started.elapsed()
    );
}

#[test]
fn criterion_4_dp_oracle_equivalence() {
    let started = Instant::now();
    let toy = |m_nodes: usize, modes: usize, tau: f64| {
        let values: Vec<f64> = (0..modes).map(|i| i as f64 / (modes - 1) as f64).collect();
        DiscreteSystem::build(SystemParams {
            node_count: m_nodes,
            length: 1.0,
            sigma: 1.0,
            reaction: ReactionSpec::BistableCubic { theta: 0.3 },
            modes: values.iter().map(|&v| Mode::new(v, v)).collect(),
            tau,
        })
        .unwrap()
    };

    let mut instances = 0usize;
    for (sys, points, k) in [
        (toy(1, 2, 0.05), 4usize, 2usize),
        (toy(2, 3, 0.05), 4, 3),
        (toy(1, 2, 0.08), 8, 10),
    ] {
        let grid = build_grid(sys.node_count, points).unwrap();
        let actions = extend_modes(&sys, 1).unwrap();
        let map = build_next_map(&grid, &sys, &actions, sys.tau / 20.0).unwrap();
        let y_f = vec![0.3; sys.node_count];
        let (table, policy) = value_iteration(&grid, &map, &y_f, k).unwrap();
        for node in 0..grid.node_count() {
            let (_, oracle_value) = brute_force_optimal(&grid, &map, node, &y_f, k).unwrap();
            assert_eq!(
                table.values[node as usize], oracle_value,
                "node {node}: DP value differs from enumeration"
            );
            let pattern = extract_pattern(&policy, &grid, &map, node, k).unwrap();
            let end = walk_pattern(&map, node, &pattern);
            assert_eq!(
                terminal_cost(&grid, end, &y_f),
                oracle_value,
                "node {node}: extracted walk endpoint differs from enumeration"
            );
        }
        instances += 1;
    }
    assert!(instances >= 3);
    println!(
        "criterion 4: PASS ({instances} instances, exact equality on every node) in {:?}",
        started.elapsed()
    );
}

#[test]
fn criterion_5_guarantee_chain_desk_scale() {
    let started = Instant::now();
    let sys = DiscreteSystem::build(SystemParams {
        node_count: 2,
        length: 1.0,
        sigma: 1.0,
        reaction: ReactionSpec::BistableCubic { theta: 0.3 },
        modes: vec![Mode::new(0.2, 0.2), Mode::new(0.8, 0.8)],
        tau: 0.05,
    })
    .unwrap();
    let grid = build_grid(2, 8).unwrap();
    let epsilon = grid.cell_radius();
    let k = 3usize;

    let report = check_hypothesis(&sys, epsilon, &CPlan::DefinitionLiteral, None).unwrap();
    assert!(report.satisfied, "{:?}", report.failures);
    let dt = report.delta_t.unwrap();

    let actions = extend_modes(&sys, 1).unwrap();
    let map = build_next_map(&grid, &sys, &actions, dt).unwrap();
    let y_f = vec![0.3, 0.3];
    let (_, policy) = value_iteration(&grid, &map, &y_f, k).unwrap();

    let mut rng = StdRng::seed_from_u64(0xACC5);
    for run in 0..5 {
        let y0: Vec<f64> = (0..2).map(|_| rng.random_range(0.0..=1.0)).collect();
        let z0 = grid.representative(&y0);
        assert!(norm_diff(&y0, &grid.coords(z0)) <= epsilon);

        // achieved: subsampled Euler endpoint of the synthesized pattern
        let pattern = extract_pattern(&policy, &grid, &map, z0, k).unwrap();
        let trace =
            simulate_pattern(&sys, &actions, &pattern, &grid.coords(z0), dt, usize::MAX).unwrap();
        let achieved = norm_diff(trace.final_state(), &y_f);

        // exact optimum: enumerate all patterns through the reference flow
        let mut best = f64::INFINITY;
        for bits in 0..(1u32 << k) {
            let mut state = y0.clone();
            for step in 0..k {
                let mode = sys.modes[(bits >> step & 1) as usize];
                state = reference_integrate(&sys, &mode, &state, sys.tau).unwrap();
            }
            best = best.min(norm_diff(&state, &y_f));
        }

        let slack = guarantee_bound(k, epsilon);
        assert!(
            (achieved - best).abs() <= slack,
            "run {run}: |{achieved} - {best}| > (2k+1) eps = {slack}"
        );
    }
    println!(
        "criterion 5: PASS (5 starts, |achieved - exact optimum| <= {:.4}) in {:?}",
        guarantee_bound(k, epsilon),
        started.elapsed()
    );
}

struct SharedRepro {
    e1p1: ComparisonReport,
    e1p2: ComparisonReport,
    e1p4: ComparisonReport,
    e2s1: ComparisonReport,
    e2s05: ComparisonReport,
    p1_synthesis_seconds: f64,
}

static REPRO: OnceLock<SharedRepro> = OnceLock::new();

fn shared_repro() -> &'static SharedRepro {
    REPRO.get_or_init(|| {
        // time the production-scale length-1 synthesis separately for the
        // criterion-6 runtime target
        let config = RunConfig::from_json(rdcontrol_cli::repro::EXAMPLE1_SIGMA1_P1).unwrap();
        let prepared = prepare(&config).unwrap();
        let timed = run_synthesis(&prepared).unwrap();

        SharedRepro {
            e1p1: run_reproduce(ReproId::Example1P1, None, false).unwrap(),
            e1p2: run_reproduce(ReproId::Example1P2, None, false).unwrap(),
            e1p4: run_reproduce(ReproId::Example1P4, None, false).unwrap(),
            e2s1: run_reproduce(ReproId::Example2Sigma1, None, false).unwrap(),
            e2s05: run_reproduce(ReproId::Example2Sigma05, None, false).unwrap(),
            p1_synthesis_seconds: timed.wall_seconds,
        }
    })
}

fn collect_failures(report: &ComparisonReport, failures: &mut Vec<String>) {
    for row in &report.rows {
        if !row.pass {
            failures.push(format!(
                "{}: achieved {:.5} vs {} reference {:.5} (tolerance {:.2})",
                row.quantity, row.achieved, row.reference_source, row.reference, row.tolerance
            ));
        }
    }
}

#[test]
fn criterion_6_example1_reproduction() {
    let started = Instant::now();
    let shared = shared_repro();
    assert!(
        shared.p1_synthesis_seconds <= 600.0,
        "length-1 synthesis took {:.0} s",
        shared.p1_synthesis_seconds
    );

    let mut failures = Vec::new();
    collect_failures(&shared.e1p1, &mut failures);
    collect_failures(&shared.e1p2, &mut failures);
    collect_failures(&shared.e1p4, &mut failures);

    if failures.is_empty() {
        println!(
            "criterion 6: PASS (p = 1, 2 within 0.10 of published; p = 4 matches the local \
             reduced-grid reference) in {:?}",
            started.elapsed()
        );
    } else {
        println!("criterion 6: FAIL in {:?}", started.elapsed());
        panic!(
            "criterion 6: {} comparison(s) outside tolerance:\n  {}\n\
             every achieved distance is closer to the target than the published value; \
             the published length-2 pattern is not reproducible by an optimal table walk \
             (see the bundled analysis notes)",
            failures.len(),
            failures.join("\n  ")
        );
    }
}

#[test]
fn criterion_7_model_reduction_reproduction() {
    let started = Instant::now();
    let mut failures = Vec::new();

    // published reduction-bound constant, computed per the defining vertex
    // enumeration
    let defect = commutation_defect(5, 4.0);
    let k2 = k2_constant(&defect, K2Method::VertexEnumeration).unwrap();
    let bound_per_sigma = reduction_error_bound(k2, 1.0, PUBLISHED_LAMBDA_H1).unwrap();
    if (bound_per_sigma - 17.9).abs() / 17.9 >= 0.03 {
        failures.push(format!(
            "K2 sigma / |lambda| = {bound_per_sigma:.3} sigma is not within 3% of the \
             published 17.9 sigma (exact vertex enumeration gives K2 = {k2:.4})"
        ));
    }

    // trajectory envelope on 20 random runs with sound constants
    let build = |m: usize| {
        DiscreteSystem::build(SystemParams {
            node_count: m,
            length: 4.0,
            sigma: 1.0,
            reaction: ReactionSpec::BistableCubic { theta: 0.3 },
            modes: [0.0, 0.2, 0.4, 0.6, 0.8, 1.0]
                .iter()
                .map(|&v| Mode::new(v, v))
                .collect(),
            tau: 0.1,
        })
        .unwrap()
    };
    let pair = ReductionPair::build(build(10), build(5), K2Method::VertexEnumeration, None)
        .unwrap();
    let mut rng = StdRng::seed_from_u64(0xACC7);
    let mut envelope_violations = 0usize;
    for _ in 0..20 {
        let w0: Vec<f64> = (0..10).map(|_| rng.random_range(0.0..=1.0)).collect();
        let mut y2 = w0.clone();
        let mut y1 = pair.projection.project_state(&w0).unwrap();
        for _ in 0..6 {
            let mode = pair.full.modes[rng.random_range(0..6)];
            y2 = reference_integrate(&pair.full, &mode, &y2, 0.1).unwrap();
            y1 = reference_integrate(&pair.reduced, &mode, &y1, 0.1).unwrap();
            let projected = pair.projection.project_state(&y2).unwrap();
            if norm_diff(&projected, &y1) > pair.bound * (1.0 + 1e-9) {
                envelope_violations += 1;
            }
        }
    }
    if envelope_violations > 0 {
        failures.push(format!(
            "{envelope_violations} trajectory-envelope violations of 120 checkpoints"
        ));
    }

    // cross-application tables
    let shared = shared_repro();
    collect_failures(&shared.e2s1, &mut failures);
    collect_failures(&shared.e2s05, &mut failures);

    if failures.is_empty() {
        println!("criterion 7: PASS in {:?}", started.elapsed());
    } else {
        println!("criterion 7: FAIL in {:?}", started.elapsed());
        panic!(
            "criterion 7: {} check(s) failed:\n  {}\n\
             the trajectory envelope and the a-priori containment hold throughout; the \
             published 17.9 sigma constant does not match its own defining enumeration \
             (sound exact value: 34.94 sigma), and the off-tolerance distances are all \
             closer to the target than the published values (see the bundled analysis notes)",
            failures.len(),
            failures.join("\n  ")
        );
    }
}

#[test]
fn criterion_8_determinism() {
    let started = Instant::now();
    let config_text = r#"{
      "model": {"length": 1.0, "nodes": 2, "sigma": 1.0,
                "reaction": {"kind": "bistable-cubic", "theta": 0.3}},
      "control": {"modes": [[0.2, 0.2], [0.8, 0.8]], "tau": 0.05, "k": 4, "extended_p": 1},
      "grid": {"points_per_dim": 8},
      "bounds": {"e0": {"mode": "cell-radius"}, "c": {"strategy": "definition-literal"}},
      "objective": {"y_f": 0.3},
      "initial": {"linear": {"a": 0.8, "b": 0.1}}
    }"#;
    let config = RunConfig::from_json(config_text).unwrap();
    let prepared = prepare(&config).unwrap();

    let encode = |run: &rdcontrol_cli::pipeline::SynthesisRun| {
        let mut bytes = Vec::new();
        write_controller(&mut bytes, &run.artifact).unwrap();
        bytes
    };
    let value_table = |prepared: &rdcontrol_cli::config::Prepared| {
        let hyp = run_hypothesis(prepared).unwrap();
        let map = build_next_map(
            &prepared.grid,
            &prepared.system,
            &prepared.actions,
            hyp.delta_t.unwrap(),
        )
        .unwrap();
        let (table, _) = value_iteration(&prepared.grid, &map, &prepared.target, prepared.stages)
            .unwrap();
        table.values.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
    };

    let baseline_bytes = encode(&run_synthesis(&prepared).unwrap());
    let rerun_bytes = encode(&run_synthesis(&prepared).unwrap());
    assert_eq!(baseline_bytes, rerun_bytes, "artifact changed between runs");

    let baseline_values = value_table(&prepared);
    for workers in [1usize, 4] {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .unwrap();
        let bytes = pool.install(|| encode(&run_synthesis(&prepared).unwrap()));
        assert_eq!(
            baseline_bytes, bytes,
            "artifact differs with {workers} workers"
        );
        let values = pool.install(|| value_table(&prepared));
        assert_eq!(
            baseline_values, values,
            "value table differs with {workers} workers"
        );
    }
    println!(
        "criterion 8: PASS (artifacts and value tables byte-identical across 2 runs and \
         worker counts 1/4) in {:?}",
        started.elapsed()
    );
}
