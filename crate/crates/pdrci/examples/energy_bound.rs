//! Double integrator with a guaranteed output-energy level: the
//! synthesis adds decay and level conditions so that every closed-loop
//! run started inside the set accumulates `sum ||z||^2 <= gamma`
//! (`Q_x = I`, `Q_u = 0.1`, `gamma = 10`; the bound presumes no
//! disturbance). One hundred randomly scheduled simulations check the
//! certificate.

use pdrci::geometry::{robust_intersection, vertex_enumerate_2d};
use pdrci::model::preset;
use pdrci::synthesis::{run_synthesis, SynthesisOptions};
use pdrci::verify::{check_performance, ScheduleMode};

fn main() {
    let gamma = 10.0;
    let problem = preset("demo-double-integrator", Some(gamma)).expect("preset");
    let result = run_synthesis(&problem, &SynthesisOptions::default()).expect("synthesis");

    let breve = robust_intersection(&result.polytope).expect("intersection");
    let (_, area) = vertex_enumerate_2d(&breve).expect("area");
    println!("energy-certified set: area {:.4} (bound gamma = {gamma})", area);

    for mode in [ScheduleMode::Uniform, ScheduleMode::Vertices] {
        let report = check_performance(&result, &problem, gamma, 100, 200, 17, mode, 1e-6)
            .expect("performance check");
        let energy = report.checks.iter().find(|c| c.name == "performance-energy").unwrap();
        let tail = report.checks.iter().find(|c| c.name == "performance-tail").unwrap();
        println!(
            "{mode:?} scheduling: {}/{} runs above the bound, worst energy {:.4}; worst tail norm {:.2e}",
            energy.violations,
            energy.trials,
            gamma + energy.worst_margin,
            1e-3 + tail.worst_margin
        );
    }
}
