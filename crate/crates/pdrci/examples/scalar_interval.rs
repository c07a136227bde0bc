//! Scalar plant `x+ = theta x + u` with `|theta| <= 2`, `|u| <= 1`:
//! treated robustly only the origin is invariant, but scheduling the
//! gain over the embedded parameter certifies the interval `[-1, 1]`.

use pdrci::geometry::{hpolytope_bounding_box, robust_intersection};
use pdrci::model::preset;
use pdrci::synthesis::{run_synthesis, SynthesisOptions};
use pdrci::verify::{check_invariance, DisturbanceMode};

fn main() {
    let problem = preset("demo-1d", None).expect("preset");
    let options = SynthesisOptions { n_p: 1, ..Default::default() };
    let result = run_synthesis(&problem, &options).expect("synthesis");

    let breve = robust_intersection(&result.polytope).expect("intersection");
    let bb = hpolytope_bounding_box(&breve).expect("bounded");
    println!("certified interval: [{:.6}, {:.6}]", bb.lo[0], bb.hi[0]);
    println!(
        "scheduled gains: K1 = {:.4}, K2 = {:.4}",
        result.gains[0][(0, 0)],
        result.gains[1][(0, 0)]
    );

    let report = check_invariance(&result, &problem, 10_000, 7, DisturbanceMode::Uniform, 1e-6)
        .expect("verification");
    println!(
        "one-step invariance: {}/{} violations (worst margin {:+.2e})",
        report.violations, report.trials, report.worst_margin
    );

    for row in &result.trace {
        println!(
            "  pass {:2} stage {}: |det W| = {:.6}, width = {:.6}, {}",
            row.iter,
            row.stage,
            row.det_w,
            row.exact_area,
            row.solver_status
        );
    }
}
