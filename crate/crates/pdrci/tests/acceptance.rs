//! Acceptance suite: one test per criterion, each printing a PASS line
//! on success. Expensive synthesis runs are shared across criteria.

use nalgebra::{DMatrix, DVector};
use pdrci::cli::{self, ProblemSource, RunConfig};
use pdrci::geometry::{
    self, hpolytope_bounding_box, membership, robust_intersection, vertex_enumerate_2d,
    BoundingBox, HPolytope,
};
use pdrci::lmi::{self, FixedPoint, MultiplierFloors, ProblemDims};
use pdrci::model::{evaluate_system, preset, ProblemSpec, SimplexPoint};
use pdrci::polya;
use pdrci::synthesis::{self, run_synthesis, SynthesisOptions, SynthesisResult};
use pdrci::verify::{
    check_assembly_oracle, check_invariance, check_linearization_bound, check_performance,
    simulate_closed_loop, DisturbanceMode, Schedule, ScheduleMode,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::sync::OnceLock;

struct Run {
    problem: ProblemSpec,
    result: SynthesisResult,
    wall_s: f64,
}

fn run_with(problem: ProblemSpec, options: SynthesisOptions) -> Run {
    let started = std::time::Instant::now();
    let result = run_synthesis(&problem, &options).expect("synthesis must complete");
    Run { problem, result, wall_s: started.elapsed().as_secs_f64() }
}

fn scalar_run() -> &'static Run {
    static RUN: OnceLock<Run> = OnceLock::new();
    RUN.get_or_init(|| {
        let problem = preset("demo-1d", None).unwrap();
        let options = SynthesisOptions { n_p: 1, ..Default::default() };
        run_with(problem, options)
    })
}

fn integrator_run() -> &'static Run {
    static RUN: OnceLock<Run> = OnceLock::new();
    RUN.get_or_init(|| {
        let problem = preset("demo-double-integrator", None).unwrap();
        run_with(problem, SynthesisOptions::default())
    })
}

fn energy_run() -> &'static Run {
    static RUN: OnceLock<Run> = OnceLock::new();
    RUN.get_or_init(|| {
        let problem = preset("demo-double-integrator", Some(10.0)).unwrap();
        run_with(problem, SynthesisOptions::default())
    })
}

fn oscillator_run() -> &'static Run {
    static RUN: OnceLock<Run> = OnceLock::new();
    RUN.get_or_init(|| {
        let problem = preset("demo-van-der-pol", None).unwrap();
        run_with(problem, SynthesisOptions::default())
    })
}

fn statuses_ok(run: &Run) -> bool {
    run.result
        .trace
        .iter()
        .all(|r| r.solver_status == "optimal" || r.solver_status == "feasible")
}

fn breve_of(run: &Run) -> HPolytope {
    robust_intersection(&run.result.polytope).expect("intersection")
}

#[test]
fn criterion_1_scalar_interval() {
    let run = scalar_run();
    let breve = breve_of(run);
    let bb = hpolytope_bounding_box(&breve).unwrap();
    let half_width = 0.5 * (bb.hi[0] - bb.lo[0]);
    assert!(half_width >= 0.9, "criterion 1: FAIL — half-width {half_width:.4} < 0.9");

    let inv = check_invariance(&run.result, &run.problem, 10_000, 11, DisturbanceMode::Uniform, 1e-6)
        .unwrap();
    assert_eq!(inv.violations, 0, "criterion 1: FAIL — invariance violations {inv:?}");

    // closed-loop contraction |x+| <= |x| across the embedded parameter
    // range, sampled over the certified interval
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for step in 0..=400 {
        let theta = -2.0 + 4.0 * step as f64 / 400.0;
        let xi = SimplexPoint::new(vec![(2.0 - theta) / 4.0, (theta + 2.0) / 4.0]).unwrap();
        let mats = evaluate_system(&run.problem.system, &xi).unwrap();
        let mut gain = DMatrix::zeros(1, 1);
        for (w, g) in xi.weights().iter().zip(&run.result.gains) {
            gain += g * *w;
        }
        let a_closed = (&mats.a + &mats.b * &gain)[(0, 0)];
        for _ in 0..20 {
            let x = rng.gen_range(-half_width..half_width);
            let x_next = a_closed * x;
            assert!(
                x_next.abs() <= x.abs() * (1.0 + 1e-9) + 1e-12,
                "criterion 1: FAIL — |x+| = {} > |x| = {} at theta = {theta}",
                x_next.abs(),
                x.abs()
            );
        }
    }

    assert!(run.wall_s < 30.0, "criterion 1: FAIL — runtime {:.1}s >= 30s", run.wall_s);
    println!(
        "criterion 1 (scalar interval): PASS — half-width {half_width:.4}, 0/10000 invariance violations, {:.1}s",
        run.wall_s
    );
}

#[test]
fn criterion_2_double_integrator() {
    let run = integrator_run();
    let breve = breve_of(run);
    let (_, area) = vertex_enumerate_2d(&breve).unwrap();
    assert!(area >= 19.37, "criterion 2: FAIL — area {area:.4} < 19.37");
    assert!(
        (area - 21.7907).abs() <= 0.1 * 21.7907,
        "criterion 2: FAIL — area {area:.4} outside +-10% of 21.7907"
    );
    // 2 n_p N_xi rows = face pairs * 2
    assert_eq!(
        breve.num_rows(),
        16,
        "criterion 2: FAIL — intersection complexity {} rows, expected 8 face pairs",
        breve.num_rows()
    );
    let max_wall = run.result.trace.iter().map(|r| r.wall_s).fold(0.0, f64::max);
    assert!(max_wall <= 60.0, "criterion 2: FAIL — slowest iteration {max_wall:.1}s > 60s");

    let inv =
        check_invariance(&run.result, &run.problem, 100_000, 23, DisturbanceMode::Uniform, 1e-6)
            .unwrap();
    assert_eq!(inv.violations, 0, "criterion 2: FAIL — invariance violations {inv:?}");
    println!(
        "criterion 2 (double integrator): PASS — area {area:.4} in [19.61, 23.97], complexity 8 pairs, 0/100000 invariance violations"
    );
}

/// Known-red clause of criterion 2, kept faithful: the stage-two passes
/// must add at least 15% area over the stage-one set. This
/// implementation's stage one already converges to a 20.5-area set
/// within its 10-pass budget (the paper's stage one stops near 17.7),
/// and stage two then plateaus near 21.4 for every legitimate knob, so
/// the measured gain stays near 4-5%. See the decisions ledger for the
/// sweep evidence.
#[test]
fn criterion_2_stage2_area_gain() {
    let run = integrator_run();
    let stage1_area = run
        .result
        .trace
        .iter()
        .filter(|r| r.stage == 1)
        .last()
        .expect("stage-one records")
        .exact_area;
    let final_area = run.result.trace.last().unwrap().exact_area;
    let gain = final_area / stage1_area - 1.0;
    assert!(
        gain >= 0.15,
        "criterion 2 (stage-2 gain): FAIL — stage-1 area {stage1_area:.4}, final {final_area:.4}, gain {:.1}% < 15%",
        gain * 100.0
    );
    println!("criterion 2 (stage-2 gain): PASS — gain {:.1}%", gain * 100.0);
}

#[test]
fn criterion_3_determinant_monotonicity() {
    let run = integrator_run();
    let dets: Vec<f64> =
        run.result.trace.iter().filter(|r| r.stage == 1).map(|r| r.det_w).collect();
    assert!(dets.len() >= 2, "criterion 3: FAIL — too few stage-one records");
    for pair in dets.windows(2) {
        assert!(
            pair[1] >= pair[0] - 1e-6,
            "criterion 3: FAIL — |det W| shrank from {} to {}",
            pair[0],
            pair[1]
        );
    }
    println!(
        "criterion 3 (determinant monotonicity): PASS — {} stage-one passes, {:.4} -> {:.4}",
        dets.len(),
        dets[0],
        dets.last().unwrap()
    );
}

#[test]
fn criterion_4_feasibility_preservation() {
    for (name, run) in [
        ("scalar", scalar_run()),
        ("integrator", integrator_run()),
        ("oscillator", oscillator_run()),
        ("energy", energy_run()),
    ] {
        assert!(
            statuses_ok(run),
            "criterion 4: FAIL — {name} run has non-feasible solver status: {:?}",
            run.result
                .trace
                .iter()
                .map(|r| r.solver_status.clone())
                .collect::<Vec<_>>()
        );
    }
    println!("criterion 4 (feasibility preservation): PASS — every solver call optimal/feasible");
}

#[test]
fn criterion_5_energy_bound() {
    let run = energy_run();
    assert!(statuses_ok(run), "criterion 5: FAIL — synthesis did not stay feasible");
    let report = check_performance(
        &run.result,
        &run.problem,
        10.0,
        100,
        200,
        31,
        ScheduleMode::Uniform,
        1e-6,
    )
    .unwrap();
    let energy = report.checks.iter().find(|c| c.name == "performance-energy").unwrap();
    assert_eq!(
        energy.violations, 0,
        "criterion 5: FAIL — {} of {} runs exceeded the bound (worst margin {:+.3e})",
        energy.violations, energy.trials, energy.worst_margin
    );
    println!(
        "criterion 5 (energy bound): PASS — 100 runs, worst accumulated energy {:.3} of 10",
        10.0 + energy.worst_margin
    );
}

#[test]
fn criterion_6_oscillator_qlpv() {
    let run = oscillator_run();
    let breve = breve_of(run);
    let (vertices, area) = vertex_enumerate_2d(&breve).unwrap();
    assert!(area > 0.0, "criterion 6: FAIL — empty set");
    for v in &vertices {
        assert!(
            v.amax() <= 1.0 + 1e-9,
            "criterion 6: FAIL — vertex {v:?} outside the unit box"
        );
    }
    let map = run.problem.qlpv.as_ref().unwrap();
    for v in &vertices {
        let x0: DVector<f64> = v.clone();
        let traj =
            simulate_closed_loop(&run.problem, &run.result.gains, &x0, Schedule::Qlpv(map), None, 300)
                .unwrap();
        for (t, x) in traj.x.iter().enumerate() {
            assert!(
                membership(&breve, x, 1e-6),
                "criterion 6: FAIL — trajectory from {x0:?} left the set at step {t}"
            );
        }
        for u in &traj.u {
            assert!(
                u.amax() <= 1.0 + 1e-6,
                "criterion 6: FAIL — input bound violated: |u| = {}",
                u.amax()
            );
        }
    }
    assert!(run.wall_s < 600.0, "criterion 6: FAIL — runtime {:.1}s >= 10 min", run.wall_s);
    println!(
        "criterion 6 (oscillator qLPV): PASS — area {area:.4}, {} vertex trajectories stay inside, {:.1}s",
        vertices.len(),
        run.wall_s
    );
}

#[test]
fn criterion_7_property_suites() {
    // exact coefficient-matching oracle
    let oracle = check_assembly_oracle(3, 3, 41);
    assert!(oracle.passed(), "criterion 7: FAIL — coefficient oracle: {oracle:?}");

    // linearization lower bound on random instances
    let bound = check_linearization_bound(200, 43);
    assert!(bound.passed(), "criterion 7: FAIL — linearization bound: {bound:?}");

    // vertex-slice intersection is contained in every slice
    let mut rng = ChaCha8Rng::seed_from_u64(47);
    let pp = geometry::ParamPolytope {
        p: vec![
            DMatrix::from_fn(4, 2, |_, _| rng.gen_range(-1.0..1.0)),
            DMatrix::from_fn(4, 2, |_, _| rng.gen_range(-1.0..1.0)),
            DMatrix::from_fn(4, 2, |_, _| rng.gen_range(-1.0..1.0)),
        ],
        w: DMatrix::from_row_slice(2, 2, &[1.4, -0.2, 0.3, 0.9]),
    };
    let breve = robust_intersection(&pp).unwrap();
    let mut checked = 0usize;
    let mut draws = 0usize;
    while checked < 10_000 && draws < 4_000_000 {
        draws += 1;
        let x = DVector::from_fn(2, |_, _| rng.gen_range(-4.0..4.0));
        if membership(&breve, &x, 0.0) {
            checked += 1;
            let xi = SimplexPoint::sample_uniform(&mut rng, 3);
            let s = geometry::slice(&pp, &xi).unwrap();
            assert!(
                membership(&s, &x, 1e-9),
                "criterion 7: FAIL — intersection point {x:?} escaped slice at {xi:?}"
            );
        }
    }
    assert_eq!(checked, 10_000, "criterion 7: FAIL — containment sampling starved");

    // Monte-Carlo volume vs exact areas on three known polytopes
    let cases: [(HPolytope, BoundingBox, f64); 3] = [
        (
            HPolytope {
                f: DMatrix::from_row_slice(4, 2, &[1.0, 0.0, -1.0, 0.0, 0.0, 1.0, 0.0, -1.0]),
                g: DVector::from_element(4, 1.0),
            },
            BoundingBox { lo: DVector::from_vec(vec![-2.0, -2.0]), hi: DVector::from_vec(vec![2.0, 2.0]) },
            4.0,
        ),
        (
            HPolytope {
                f: DMatrix::from_row_slice(3, 2, &[-1.0, 0.0, 0.0, -1.0, 1.0, 1.0]),
                g: DVector::from_vec(vec![0.0, 0.0, 1.0]),
            },
            BoundingBox { lo: DVector::from_vec(vec![0.0, 0.0]), hi: DVector::from_vec(vec![1.0, 1.0]) },
            0.5,
        ),
        (
            HPolytope {
                f: DMatrix::from_row_slice(4, 2, &[1.0, 1.0, -1.0, -1.0, 1.0, -1.0, -1.0, 1.0]),
                g: DVector::from_element(4, 1.0),
            },
            BoundingBox { lo: DVector::from_vec(vec![-1.0, -1.0]), hi: DVector::from_vec(vec![1.0, 1.0]) },
            2.0,
        ),
    ];
    for (i, (poly, outer, exact)) in cases.iter().enumerate() {
        let est = geometry::mc_volume(poly, outer, 200_000, 53 + i as u64);
        assert!(
            (est.value - exact).abs() <= 4.0 * est.std_error,
            "criterion 7: FAIL — volume case {i}: {} vs {exact} (se {})",
            est.value,
            est.std_error
        );
    }

    // constraint-count formulas against an assembled stage-two program
    let problem = preset("demo-double-integrator", Some(10.0)).unwrap();
    let n_p = 4usize;
    let d = 1u32;
    let dims = ProblemDims::new(&problem, n_p);
    let mut prog = pdrci::conic::ConicProgram::new();
    let layout = lmi::stage2_layout(&mut prog, &dims, true, &MultiplierFloors::default());
    let lin_rows_before = prog.num_lin_ge();
    let mut rng2 = ChaCha8Rng::seed_from_u64(59);
    let fixed = FixedPoint {
        p0: (0..dims.n_vertices)
            .map(|_| DMatrix::from_fn(n_p, dims.n_x, |_, _| rng2.gen_range(-1.0..1.0)))
            .collect(),
        w: Some(DMatrix::identity(dims.n_x, dims.n_x)),
        y: (0..n_p).map(|_| DMatrix::identity(dims.n_x, dims.n_x)).collect(),
        lambda0: (0..n_p).map(|_| DVector::from_element(n_p, 1.0)).collect(),
        pi0: (0..dims.n_h).map(|_| DVector::from_element(n_p, 1.0)).collect(),
        upsilon0: Some(DVector::from_element(n_p, 1.0)),
    };
    let conds = lmi::assemble_theorem2(&prog, &problem, &layout, &fixed, d, 1e-7).unwrap();
    let counts = lmi::count_conditions(&conds);
    let l_count = polya::tuple_count(d + 2, dims.n_vertices).unwrap() as usize;
    assert_eq!(
        counts.invariance,
        n_p * (dims.n_vertices + 1 + l_count),
        "criterion 7: FAIL — invariance condition count"
    );
    assert_eq!(counts.system, dims.n_h * l_count, "criterion 7: FAIL — system condition count");
    assert_eq!(counts.performance, 2 * l_count, "criterion 7: FAIL — performance condition count");

    // volume surrogate: 2 n_p N_m inequality rows per sample
    let grid = synthesis::make_simplex_grid(dims.n_vertices, 1);
    assert_eq!(grid.len(), dims.n_vertices); // vertex grid: N_m = N_xi
    let outer = geometry::bounding_box(&problem.constraints).unwrap();
    let samples = geometry::box_vertices_and_boundary_samples(&outer, 0, 0);
    let w = DMatrix::identity(2, 2);
    synthesis::build_volume_cost(&mut prog, &layout, &w, &grid, &samples).unwrap();
    let vol_rows = prog.num_lin_ge() - lin_rows_before;
    assert_eq!(
        vol_rows,
        2 * n_p * dims.n_vertices * samples.len(),
        "criterion 7: FAIL — volume constraint count"
    );

    println!("criterion 7 (property suites): PASS — oracle, bound, containment, volumes, counts");
}

#[test]
fn criterion_8_determinism() {
    let base = std::env::temp_dir().join(format!("pdrci-acc-det-{}", std::process::id()));
    let dir_a = base.join("a");
    let dir_b = base.join("b");
    let _ = std::fs::remove_dir_all(&base);
    let mut config = RunConfig {
        source: ProblemSource::Preset("demo-double-integrator".into()),
        gamma: None,
        options: SynthesisOptions::default(),
        out_dir: dir_a.clone(),
        trials: 1000,
    };
    assert_eq!(cli::cmd_synthesize(&config), cli::EXIT_OK, "criterion 8: FAIL — first run");
    config.out_dir = dir_b.clone();
    assert_eq!(cli::cmd_synthesize(&config), cli::EXIT_OK, "criterion 8: FAIL — second run");

    // wall-clock data is the one timestamp-class exclusion
    let strip_json = |dir: &std::path::Path| -> String {
        std::fs::read_to_string(dir.join("result.json"))
            .unwrap()
            .lines()
            .filter(|l| !l.contains("timestamp") && !l.contains("wall_s"))
            .collect::<Vec<_>>()
            .join("\n")
    };
    assert_eq!(strip_json(&dir_a), strip_json(&dir_b), "criterion 8: FAIL — result.json differs");

    let strip_csv = |dir: &std::path::Path| -> String {
        std::fs::read_to_string(dir.join("trace.csv"))
            .unwrap()
            .lines()
            .map(|l| l.rsplit_once(',').map(|(head, _)| head.to_string()).unwrap_or_default())
            .collect::<Vec<_>>()
            .join("\n")
    };
    assert_eq!(strip_csv(&dir_a), strip_csv(&dir_b), "criterion 8: FAIL — trace.csv differs");

    let polygons_a = std::fs::read_to_string(dir_a.join("polygons.csv")).unwrap();
    let polygons_b = std::fs::read_to_string(dir_b.join("polygons.csv")).unwrap();
    assert_eq!(polygons_a, polygons_b, "criterion 8: FAIL — polygons.csv differs");

    let _ = std::fs::remove_dir_all(&base);
    println!("criterion 8 (determinism): PASS — identical artifacts up to wall-clock fields");
}
