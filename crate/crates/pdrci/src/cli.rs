//! File-based pipeline behind the `pdrci` binary: synthesis with
//! bit-stable artifact emission, verification of stored results, and
//! plot-data export.
//!
//! Artifacts written to the output directory:
//! - `result.json` — face matrices `P`, shape transform `W`, gains `K`
//!   (all row-major nested arrays), the run options and the iteration
//!   trace, plus a `timestamp` field. Identical config and seed produce
//!   byte-identical files up to the timestamp line.
//! - `trace.csv` — `iter,stage,detW,sigma_sum,mc_volume,exact_area,solver_status,wall_s`.
//! - `polygons.csv` — `xi_index,slice_id,vertex_id,x1,x2`; one polygon
//!   per scheduling grid point (`slice_id` 0) and the vertex-slice
//!   intersection (`slice_id` 1, `xi_index` = grid size). 2-D only.
//! - `report.json` — verification report.
//! - `trajectories.csv` — `run,t,x1,x2,u`; scheduled closed-loop runs
//!   from the intersection vertices (quasi-LPV problems only).

use crate::geometry::{self, ParamPolytope};
use crate::model::{self, ProblemSpec};
use crate::synthesis::{self, IterationRecord, SynthesisOptions, SynthesisResult};
use crate::verify::{self, DisturbanceMode, ScheduleMode, VerificationReport};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

/// Exit code conventions: 0 success, 1 synthesis failure or verification
/// violation, 2 configuration or file errors.
pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Clone)]
pub enum ProblemSource {
    Preset(String),
    File(PathBuf),
}

impl ProblemSource {
    fn label(&self) -> String {
        match self {
            ProblemSource::Preset(name) => name.clone(),
            ProblemSource::File(path) => path.display().to_string(),
        }
    }
}

/// Resolved invocation of one subcommand.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub source: ProblemSource,
    pub gamma: Option<f64>,
    pub options: SynthesisOptions,
    pub out_dir: PathBuf,
    /// Monte-Carlo trial count of the verification checks.
    pub trials: usize,
}

fn load_problem(config: &RunConfig) -> Result<ProblemSpec, String> {
    match &config.source {
        ProblemSource::Preset(name) => {
            model::preset(name, config.gamma).map_err(|e| e.to_string())
        }
        ProblemSource::File(path) => {
            let mut spec = model::load_problem(path).map_err(|e| e.to_string())?;
            if let Some(gamma) = config.gamma {
                spec.performance = model::PerformanceSpec::with_gamma(gamma);
            }
            Ok(spec)
        }
    }
}

fn emit_error(kind: &str, message: &str) {
    println!("{{\"error\":{:?},\"kind\":{:?}}}", message, kind);
}

// --- result.json -------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunOptions {
    pub problem: String,
    pub gamma: Option<f64>,
    #[serde(flatten)]
    pub synthesis: SynthesisOptions,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResultFile {
    pub timestamp: String,
    #[serde(rename = "P")]
    pub p: Vec<Vec<Vec<f64>>>,
    #[serde(rename = "W")]
    pub w: Vec<Vec<f64>>,
    #[serde(rename = "K")]
    pub k: Vec<Vec<Vec<f64>>>,
    pub options: RunOptions,
    pub trace: Vec<IterationRecord>,
}

fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|r| (0..m.ncols()).map(|c| m[(r, c)]).collect()).collect()
}

fn rows_matrix(rows: &[Vec<f64>]) -> Result<DMatrix<f64>, String> {
    if rows.is_empty() || rows[0].is_empty() {
        return Err("empty matrix in result file".into());
    }
    let ncols = rows[0].len();
    if rows.iter().any(|r| r.len() != ncols) {
        return Err("ragged matrix in result file".into());
    }
    Ok(DMatrix::from_fn(rows.len(), ncols, |r, c| rows[r][c]))
}

impl ResultFile {
    pub fn from_result(result: &SynthesisResult, options: RunOptions) -> Self {
        Self {
            timestamp: std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_secs().to_string())
                .unwrap_or_default(),
            p: result.polytope.p.iter().map(matrix_rows).collect(),
            w: matrix_rows(&result.polytope.w),
            k: result.gains.iter().map(matrix_rows).collect(),
            options,
            trace: result.trace.clone(),
        }
    }

    pub fn to_result(&self) -> Result<SynthesisResult, String> {
        let p = self.p.iter().map(|m| rows_matrix(m)).collect::<Result<Vec<_>, _>>()?;
        let w = rows_matrix(&self.w)?;
        let gains = self.k.iter().map(|m| rows_matrix(m)).collect::<Result<Vec<_>, _>>()?;
        Ok(SynthesisResult {
            polytope: ParamPolytope { p, w },
            gains,
            gamma_certified: self.options.gamma,
            trace: self.trace.clone(),
            min_singular_value: f64::NAN,
            w_condition: f64::NAN,
        })
    }
}

// --- csv artifacts -------------------------------------------------------------

pub fn trace_csv(trace: &[IterationRecord]) -> String {
    let mut out = String::from("iter,stage,detW,sigma_sum,mc_volume,exact_area,solver_status,wall_s\n");
    for r in trace {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.iter, r.stage, r.det_w, r.sigma_sum, r.mc_volume, r.exact_area, r.solver_status, r.wall_s
        )
        .unwrap();
    }
    out
}

/// Per-grid-point slice polygons plus the vertex-slice intersection,
/// 2-D problems only.
pub fn polygons_csv(
    polytope: &ParamPolytope,
    grid_resolution: u32,
) -> Result<String, geometry::GeometryError> {
    let mut out = String::from("xi_index,slice_id,vertex_id,x1,x2\n");
    let grid = synthesis::make_simplex_grid(polytope.num_vertices(), grid_resolution);
    for (m, xi) in grid.iter().enumerate() {
        let s = geometry::slice(polytope, xi)?;
        let (vertices, _) = geometry::vertex_enumerate_2d(&s)?;
        for (vid, v) in vertices.iter().enumerate() {
            writeln!(out, "{},0,{},{},{}", m, vid, v[0], v[1]).unwrap();
        }
    }
    let breve = geometry::robust_intersection(polytope)?;
    let (vertices, _) = geometry::vertex_enumerate_2d(&breve)?;
    for (vid, v) in vertices.iter().enumerate() {
        writeln!(out, "{},1,{},{},{}", grid.len(), vid, v[0], v[1]).unwrap();
    }
    Ok(out)
}

/// Scheduled closed-loop runs from every intersection vertex
/// (quasi-LPV problems).
pub fn trajectories_csv(
    result: &SynthesisResult,
    problem: &ProblemSpec,
    steps: usize,
) -> Result<String, String> {
    let map = problem.qlpv.as_ref().ok_or("problem has no scheduling map")?;
    let breve = geometry::robust_intersection(&result.polytope).map_err(|e| e.to_string())?;
    let (vertices, _) = geometry::vertex_enumerate_2d(&breve).map_err(|e| e.to_string())?;
    let mut out = String::from("run,t,x1,x2,u\n");
    for (run, v) in vertices.iter().enumerate() {
        let x0: DVector<f64> = v.clone();
        let traj = verify::simulate_closed_loop(
            problem,
            &result.gains,
            &x0,
            verify::Schedule::Qlpv(map),
            None,
            steps,
        )
        .map_err(|e| e.to_string())?;
        for t in 0..traj.len() {
            writeln!(out, "{},{},{},{},{}", run, t, traj.x[t][0], traj.x[t][1], traj.u[t][0]).unwrap();
        }
    }
    Ok(out)
}

fn write_file(path: &Path, contents: &str) -> Result<(), String> {
    std::fs::write(path, contents).map_err(|e| format!("{}: {e}", path.display()))
}

// --- subcommands ---------------------------------------------------------------

/// Full pipeline plus artifact emission.
pub fn cmd_synthesize(config: &RunConfig) -> i32 {
    let problem = match load_problem(config) {
        Ok(p) => p,
        Err(msg) => {
            emit_error("config", &msg);
            return EXIT_USAGE;
        }
    };
    if let Err(e) = std::fs::create_dir_all(&config.out_dir) {
        emit_error("io", &format!("{}: {e}", config.out_dir.display()));
        return EXIT_USAGE;
    }
    let result = match synthesis::run_synthesis(&problem, &config.options) {
        Ok(r) => r,
        Err(e) => {
            emit_error("infeasible", &e.to_string());
            return EXIT_FAILED;
        }
    };
    let options = RunOptions {
        problem: config.source.label(),
        gamma: config.gamma,
        synthesis: config.options.clone(),
    };
    let file = ResultFile::from_result(&result, options);
    let json = serde_json::to_string_pretty(&file).expect("result serialization");
    if let Err(msg) = write_file(&config.out_dir.join("result.json"), &json) {
        emit_error("io", &msg);
        return EXIT_USAGE;
    }
    if let Err(msg) = write_file(&config.out_dir.join("trace.csv"), &trace_csv(&result.trace)) {
        emit_error("io", &msg);
        return EXIT_USAGE;
    }
    if problem.system.n_x == 2 {
        match polygons_csv(&result.polytope, config.options.grid_resolution) {
            Ok(csv) => {
                if let Err(msg) = write_file(&config.out_dir.join("polygons.csv"), &csv) {
                    emit_error("io", &msg);
                    return EXIT_USAGE;
                }
            }
            Err(e) => {
                emit_error("geometry", &e.to_string());
                return EXIT_FAILED;
            }
        }
    }
    let last = result.trace.last();
    println!(
        "{{\"status\":\"ok\",\"iterations\":{},\"det_w\":{},\"exact_area\":{},\"mc_volume\":{}}}",
        result.trace.len(),
        last.map_or(f64::NAN, |r| r.det_w),
        last.map_or(f64::NAN, |r| r.exact_area),
        last.map_or(f64::NAN, |r| r.mc_volume),
    );
    EXIT_OK
}

fn read_result(config: &RunConfig) -> Result<(ResultFile, SynthesisResult), (i32, String)> {
    let path = config.out_dir.join("result.json");
    let text = std::fs::read_to_string(&path)
        .map_err(|e| (EXIT_USAGE, format!("{}: {e}", path.display())))?;
    let file: ResultFile =
        serde_json::from_str(&text).map_err(|e| (EXIT_USAGE, format!("corrupt result file: {e}")))?;
    let result = file.to_result().map_err(|e| (EXIT_USAGE, e))?;
    Ok((file, result))
}

/// Run all verification checks against a stored result; nonzero exit
/// on any violation.
pub fn cmd_verify(config: &RunConfig) -> i32 {
    let problem = match load_problem(config) {
        Ok(p) => p,
        Err(msg) => {
            emit_error("config", &msg);
            return EXIT_USAGE;
        }
    };
    let (_, result) = match read_result(config) {
        Ok(pair) => pair,
        Err((code, msg)) => {
            emit_error("io", &msg);
            return code;
        }
    };
    let tol = 1e-6;
    let mut checks = Vec::new();
    match verify::check_invariance(
        &result,
        &problem,
        config.trials,
        config.options.seed,
        DisturbanceMode::Uniform,
        tol,
    ) {
        Ok(rep) => checks.extend(rep.checks),
        Err(e) => {
            emit_error("verify", &e.to_string());
            return EXIT_FAILED;
        }
    }
    match verify::check_system_constraints(
        &result,
        &problem,
        config.options.grid_resolution,
        200,
        config.options.seed,
        tol,
    ) {
        Ok(rep) => checks.extend(rep.checks),
        Err(e) => {
            emit_error("verify", &e.to_string());
            return EXIT_FAILED;
        }
    }
    if let Some(gamma) = result.gamma_certified {
        match verify::check_performance(
            &result,
            &problem,
            gamma,
            100,
            200,
            config.options.seed,
            ScheduleMode::Uniform,
            tol,
        ) {
            Ok(rep) => checks.extend(rep.checks),
            Err(e) => {
                emit_error("verify", &e.to_string());
                return EXIT_FAILED;
            }
        }
    }
    let report = merge_checks(checks, config.options.seed);
    let json = serde_json::to_string_pretty(&report).expect("report serialization");
    if let Err(msg) = write_file(&config.out_dir.join("report.json"), &json) {
        emit_error("io", &msg);
        return EXIT_USAGE;
    }
    println!("{json}");
    if report.passed() {
        EXIT_OK
    } else {
        EXIT_FAILED
    }
}

fn merge_checks(checks: Vec<verify::CheckReport>, seed: u64) -> VerificationReport {
    let trials = checks.iter().map(|c| c.trials).sum();
    let violations = checks.iter().map(|c| c.violations).sum();
    let worst = checks.iter().map(|c| c.worst_margin).fold(f64::NEG_INFINITY, f64::max);
    VerificationReport { trials, violations, worst_margin: worst, checks, seed }
}

/// Emit plot-ready CSV artifacts from a stored result.
pub fn cmd_export_plot(config: &RunConfig) -> i32 {
    let problem = match load_problem(config) {
        Ok(p) => p,
        Err(msg) => {
            emit_error("config", &msg);
            return EXIT_USAGE;
        }
    };
    let (file, result) = match read_result(config) {
        Ok(pair) => pair,
        Err((code, msg)) => {
            emit_error("io", &msg);
            return code;
        }
    };
    if let Err(msg) = write_file(&config.out_dir.join("trace.csv"), &trace_csv(&file.trace)) {
        emit_error("io", &msg);
        return EXIT_USAGE;
    }
    if problem.system.n_x == 2 {
        match polygons_csv(&result.polytope, config.options.grid_resolution) {
            Ok(csv) => {
                if let Err(msg) = write_file(&config.out_dir.join("polygons.csv"), &csv) {
                    emit_error("io", &msg);
                    return EXIT_USAGE;
                }
            }
            Err(e) => {
                emit_error("geometry", &e.to_string());
                return EXIT_FAILED;
            }
        }
    }
    if problem.qlpv.is_some() {
        match trajectories_csv(&result, &problem, 300) {
            Ok(csv) => {
                if let Err(msg) = write_file(&config.out_dir.join("trajectories.csv"), &csv) {
                    emit_error("io", &msg);
                    return EXIT_USAGE;
                }
            }
            Err(msg) => {
                emit_error("verify", &msg);
                return EXIT_FAILED;
            }
        }
    }
    println!("{{\"status\":\"ok\"}}");
    EXIT_OK
}

#[cfg(test)]
mod tests {
    use super::*;

    fn demo_config(dir: &Path) -> RunConfig {
        RunConfig {
            source: ProblemSource::Preset("demo-1d".into()),
            gamma: None,
            options: SynthesisOptions {
                n_p: 1,
                iters_stage1: 3,
                iters_stage2: 3,
                mc_samples: 1_000,
                ..Default::default()
            },
            out_dir: dir.to_path_buf(),
            trials: 2_000,
        }
    }

    #[test]
    fn synthesize_verify_round_trip() {
        let dir = std::env::temp_dir().join(format!("pdrci-cli-test-{}", std::process::id()));
        let _ = std::fs::remove_dir_all(&dir);
        let config = demo_config(&dir);
        assert_eq!(cmd_synthesize(&config), EXIT_OK);
        assert!(dir.join("result.json").exists());
        assert!(dir.join("trace.csv").exists());
        // trace rows = stage-1 budget + stage-2 budget
        let trace = std::fs::read_to_string(dir.join("trace.csv")).unwrap();
        assert_eq!(trace.lines().count(), 1 + 3 + 3);

        assert_eq!(cmd_verify(&config), EXIT_OK);
        assert!(dir.join("report.json").exists());

        // tampering with the shape transform must break verification
        let text = std::fs::read_to_string(dir.join("result.json")).unwrap();
        let mut file: ResultFile = serde_json::from_str(&text).unwrap();
        for row in &mut file.w {
            for v in row {
                *v *= 2.0;
            }
        }
        std::fs::write(dir.join("result.json"), serde_json::to_string_pretty(&file).unwrap())
            .unwrap();
        assert_eq!(cmd_verify(&config), EXIT_FAILED);

        // missing file
        std::fs::remove_file(dir.join("result.json")).unwrap();
        assert_eq!(cmd_verify(&config), EXIT_USAGE);
        let _ = std::fs::remove_dir_all(&dir);
    }

    #[test]
    fn result_json_is_deterministic_up_to_timestamp() {
        let dir_a = std::env::temp_dir().join(format!("pdrci-det-a-{}", std::process::id()));
        let dir_b = std::env::temp_dir().join(format!("pdrci-det-b-{}", std::process::id()));
        for d in [&dir_a, &dir_b] {
            let _ = std::fs::remove_dir_all(d);
        }
        let mut config = demo_config(&dir_a);
        assert_eq!(cmd_synthesize(&config), EXIT_OK);
        config.out_dir = dir_b.clone();
        assert_eq!(cmd_synthesize(&config), EXIT_OK);
        // wall-clock data is timestamp-class and excluded, like the
        // timestamp field itself
        let strip = |p: &Path| -> String {
            std::fs::read_to_string(p.join("result.json"))
                .unwrap()
                .lines()
                .filter(|l| !l.contains("timestamp") && !l.contains("wall_s"))
                .collect::<Vec<_>>()
                .join("\n")
        };
        assert_eq!(strip(&dir_a), strip(&dir_b));
        let wall_free = |p: &Path| -> String {
            std::fs::read_to_string(p.join("trace.csv"))
                .unwrap()
                .lines()
                .map(|l| l.rsplit_once(',').map(|(head, _)| head.to_string()).unwrap_or_default())
                .collect::<Vec<_>>()
                .join("\n")
        };
        assert_eq!(wall_free(&dir_a), wall_free(&dir_b));
        for d in [&dir_a, &dir_b] {
            let _ = std::fs::remove_dir_all(d);
        }
    }
}
