//! Two-stage iterative synthesis of the invariant set and its
//! scheduled gains.
//!
//! Stage one keeps the face matrix at `P_init`, solves one feasibility
//! pass maximizing `logdet(W + W')`, then grows `|det W|` through
//! determinant-increase passes: maximize `logdet(Z)` subject to
//! `W' W0 + W0' W - W0' W0 >= Z > 0`, which is satisfied by the
//! previous iterate and therefore never shrinks the determinant.
//!
//! Stage two fixes `W`, frees the per-vertex face matrices, and
//! minimizes a Monte-Carlo volume surrogate: slack `sigma_n^m >= 0`
//! per (grid slice, boundary sample) pair, driven by
//! `[P~ W^-1; -P~ W^-1] x_n - 1 <= sigma`, summed over all pairs.
//! Each pass re-linearizes at the previous solution, which keeps every
//! pass feasible and the surrogate cost nonincreasing.

use crate::conic::{
    ConicProgram, LinExpr, MatExpr, Objective, SolveStatus, Solution, SolverConfig, VarId,
};
use crate::geometry::{self, BoundingBox, ParamPolytope};
use crate::lmi::{self, DecisionLayout, FixedPoint, ProblemDims};
use crate::model::{ProblemSpec, SimplexPoint};
use crate::polya;
use nalgebra::{DMatrix, DVector};
use std::time::Instant;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SynthesisError {
    #[error("invalid options: {0}")]
    InvalidOptions(String),
    #[error("stage {stage} iteration {iter}: infeasible{hint}")]
    Infeasible { stage: u8, iter: usize, hint: String },
    #[error("stage {stage} iteration {iter}: solver failed ({status})")]
    SolverFailed { stage: u8, iter: usize, status: String },
    #[error("shape transform is singular")]
    SingularW,
    #[error(transparent)]
    Lmi(#[from] lmi::LmiError),
    #[error(transparent)]
    Geometry(#[from] geometry::GeometryError),
}

/// Knobs of the synthesis pipeline.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct SynthesisOptions {
    /// Face-pair count of the set description.
    pub n_p: usize,
    /// Relaxation order of the simplex conditions.
    pub d: u32,
    /// Stage-one solve count (first pass is the feasibility pass).
    pub iters_stage1: usize,
    /// Stage-two solve count.
    pub iters_stage2: usize,
    /// Strictness margin replacing strict inequalities.
    pub epsilon: f64,
    /// Simplex lattice density for the volume grid (vertices always
    /// included).
    pub grid_resolution: u32,
    /// Boundary samples added beyond the bounding-box corners.
    pub extra_boundary_samples: usize,
    /// Sample count of the per-iteration volume estimate.
    pub mc_samples: usize,
    pub seed: u64,
    /// Relative surrogate-cost change that stops stage two early.
    pub convergence_tol: Option<f64>,
}

impl Default for SynthesisOptions {
    fn default() -> Self {
        Self {
            n_p: 4,
            d: 1,
            iters_stage1: 10,
            iters_stage2: 60,
            epsilon: 1e-7,
            grid_resolution: 4,
            extra_boundary_samples: 0,
            mc_samples: 20_000,
            seed: 0,
            convergence_tol: None,
        }
    }
}

impl SynthesisOptions {
    fn validate(&self, n_x: usize) -> Result<(), SynthesisError> {
        if self.n_p < n_x {
            return Err(SynthesisError::InvalidOptions(format!(
                "face-pair count {} must be at least the state dimension {n_x}",
                self.n_p
            )));
        }
        if self.iters_stage1 == 0 || self.iters_stage2 == 0 {
            return Err(SynthesisError::InvalidOptions("iteration budgets must be >= 1".into()));
        }
        if self.grid_resolution == 0 {
            return Err(SynthesisError::InvalidOptions("grid resolution must be >= 1".into()));
        }
        if !(self.epsilon > 0.0) {
            return Err(SynthesisError::InvalidOptions("epsilon must be positive".into()));
        }
        Ok(())
    }
}

/// JSON stores not-a-number trace entries as `null`.
mod nan_as_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_some(v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
    }
}

/// One row of the iteration trace.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct IterationRecord {
    pub iter: usize,
    pub stage: u8,
    pub det_w: f64,
    /// Stage-two surrogate cost (NaN in stage one).
    #[serde(with = "nan_as_null")]
    pub sigma_sum: f64,
    #[serde(with = "nan_as_null")]
    pub mc_volume: f64,
    /// Exact area of the vertex-slice intersection (NaN unless n_x = 2).
    #[serde(with = "nan_as_null")]
    pub exact_area: f64,
    pub solver_status: String,
    pub wall_s: f64,
}

/// Decision/linearization data carried across iterations.
#[derive(Debug, Clone)]
pub struct SynthesisState {
    pub p: Vec<DMatrix<f64>>,
    pub w: DMatrix<f64>,
    pub kbar: Vec<DMatrix<f64>>,
    pub x: Vec<DMatrix<f64>>,
    /// Linearization matrices for the next pass (`X_i^-1 W`).
    pub y: Vec<DMatrix<f64>>,
    pub lambda0: Vec<DVector<f64>>,
    pub pi0: Vec<DVector<f64>>,
    pub upsilon0: Option<DVector<f64>>,
    /// Recovered invariance multiplier scales (reporting).
    pub phi: Vec<f64>,
    /// Recovered disturbance multipliers (reporting, seeding checks).
    pub gamma_mult: Vec<DVector<f64>>,
    /// Dynamics-row slack multipliers of the last pass, `[i][k]`.
    pub v: Vec<Vec<DMatrix<f64>>>,
    pub records: Vec<IterationRecord>,
}

/// Synthesized set, gains and run evidence.
#[derive(Debug, Clone)]
pub struct SynthesisResult {
    pub polytope: ParamPolytope,
    pub gains: Vec<DMatrix<f64>>,
    pub gamma_certified: Option<f64>,
    pub trace: Vec<IterationRecord>,
    /// Smallest singular value of `P(xi)` over the volume grid.
    pub min_singular_value: f64,
    pub w_condition: f64,
}

// --- initial face matrix -----------------------------------------------------

/// Unit-norm face normals distributed over the sphere: the standard
/// half-turn fan in 2-D, a Fibonacci hemisphere in 3-D, seeded unit
/// vectors beyond.
pub fn select_initial_p(n_p: usize, n_x: usize) -> Result<DMatrix<f64>, SynthesisError> {
    if n_p < n_x {
        return Err(SynthesisError::InvalidOptions(format!(
            "face-pair count {n_p} must be at least the state dimension {n_x}"
        )));
    }
    let p = match n_x {
        1 => DMatrix::from_element(n_p, 1, 1.0),
        2 => DMatrix::from_fn(n_p, 2, |i, c| {
            let angle = std::f64::consts::PI * i as f64 / n_p as f64;
            if c == 0 {
                angle.cos()
            } else {
                angle.sin()
            }
        }),
        3 => DMatrix::from_fn(n_p, 3, |i, c| {
            let z = (i as f64 + 0.5) / n_p as f64;
            let r = (1.0 - z * z).sqrt();
            let golden = std::f64::consts::PI * (3.0 - 5.0f64.sqrt());
            let theta = golden * i as f64;
            match c {
                0 => r * theta.cos(),
                1 => r * theta.sin(),
                _ => z,
            }
        }),
        _ => {
            use rand::Rng;
            use rand::SeedableRng;
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
            let mut m = DMatrix::zeros(n_p, n_x);
            for i in 0..n_p {
                loop {
                    // Box-Muller pairs give a rotation-invariant direction
                    let v = DVector::from_fn(n_x, |_, _| {
                        let (u1, u2) = (rng.gen::<f64>().max(1e-12), rng.gen::<f64>());
                        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
                    });
                    let norm = v.norm();
                    if norm > 1e-6 {
                        m.row_mut(i).copy_from(&(v / norm).transpose());
                        break;
                    }
                }
            }
            m
        }
    };
    let rank = p.clone().svd(false, false).rank(1e-9);
    if rank < n_x {
        return Err(SynthesisError::InvalidOptions(format!(
            "initial face matrix is rank {rank}, needs {n_x}"
        )));
    }
    Ok(p)
}

/// Uniform simplex lattice `{beta / resolution}` including all
/// vertices; size `(resolution + n - 1 choose resolution)`.
pub fn make_simplex_grid(n_vertices: usize, resolution: u32) -> Vec<SimplexPoint> {
    polya::enumerate_exponents(resolution, n_vertices)
        .iter()
        .map(|t| {
            SimplexPoint::new(
                t.entries().iter().map(|&b| b as f64 / resolution as f64).collect(),
            )
            .expect("lattice points lie on the simplex")
        })
        .collect()
}

// --- solver plumbing ----------------------------------------------------------

struct BuiltProgram {
    prog: ConicProgram,
    layout: DecisionLayout,
}

fn solve_with_retry<F>(
    build: F,
    eps: f64,
    stage: u8,
    iter: usize,
) -> Result<(BuiltProgram, Solution), SynthesisError>
where
    F: Fn(f64) -> Result<BuiltProgram, SynthesisError>,
{
    // transient accuracy dips on intermediate passes are harmless for
    // the iterates; the verification suite judges the final result
    let cfg = SolverConfig { feas_tol: 1e-6, ..SolverConfig::default() };
    let built = build(eps)?;
    let sol = built.prog.solve(&cfg);
    if sol.status == SolveStatus::NumericalFailure {
        let built = build(eps * 10.0)?;
        let sol = built.prog.solve(&cfg);
        return Ok((built, sol));
    }
    let _ = (stage, iter);
    Ok((built, sol))
}

struct Stage1Values {
    w: DMatrix<f64>,
    kbar: Vec<DMatrix<f64>>,
    x: Vec<DMatrix<f64>>,
    lambda: Vec<DVector<f64>>,
    gamma: Vec<DVector<f64>>,
    pi: Vec<DVector<f64>>,
    upsilon: Option<DVector<f64>>,
    phi: Vec<f64>,
    v: Vec<Vec<DMatrix<f64>>>,
}

fn extract_stage1(prog: &ConicProgram, layout: &DecisionLayout, x: &[f64]) -> Stage1Values {
    Stage1Values {
        w: prog.value(layout.w.expect("stage-one layout"), x),
        kbar: layout.kbar.iter().map(|&id| prog.value(id, x)).collect(),
        x: layout.x.iter().map(|&id| prog.value(id, x)).collect(),
        lambda: layout.lambda.iter().map(|&id| prog.diag_value(id, x)).collect(),
        gamma: layout.gamma.iter().map(|&id| prog.diag_value(id, x)).collect(),
        pi: layout.pi.iter().map(|&id| prog.diag_value(id, x)).collect(),
        upsilon: layout.upsilon.map(|id| prog.diag_value(id, x)),
        phi: layout.phi.iter().map(|&id| prog.scalar_value(id, x)).collect(),
        v: layout
            .v
            .iter()
            .map(|row| row.iter().map(|&id| prog.value(id, x)).collect())
            .collect(),
    }
}

fn linearization_matrices(
    x_blocks: &[DMatrix<f64>],
    w: &DMatrix<f64>,
) -> Result<Vec<DMatrix<f64>>, SynthesisError> {
    x_blocks
        .iter()
        .map(|xb| {
            xb.clone()
                .try_inverse()
                .map(|inv| inv * w)
                .ok_or(SynthesisError::SingularW)
        })
        .collect()
}

/// Volume bookkeeping of the current vertex-slice intersection.
fn record_volumes(
    pp: &ParamPolytope,
    outer: &BoundingBox,
    mc_samples: usize,
    seed: u64,
) -> (f64, f64) {
    let breve = match geometry::robust_intersection(pp) {
        Ok(b) => b,
        Err(_) => return (f64::NAN, f64::NAN),
    };
    let mc = geometry::mc_volume(&breve, outer, mc_samples, seed).value;
    let exact = if pp.n_x() == 2 {
        geometry::vertex_enumerate_2d(&breve).map(|(_, a)| a).unwrap_or(f64::NAN)
    } else if pp.n_x() == 1 {
        match geometry::hpolytope_bounding_box(&breve) {
            Ok(bb) => bb.hi[0] - bb.lo[0],
            Err(_) => f64::NAN,
        }
    } else {
        f64::NAN
    };
    (mc, exact)
}

fn push_record(
    state: &mut SynthesisState,
    outer: &BoundingBox,
    opts: &SynthesisOptions,
    stage: u8,
    sigma_sum: f64,
    status: &str,
    wall_s: f64,
) {
    let iter = state.records.len() + 1;
    let pp = ParamPolytope { p: state.p.clone(), w: state.w.clone() };
    let (mc, exact) =
        record_volumes(&pp, outer, opts.mc_samples, opts.seed.wrapping_add(0x5eed + iter as u64));
    state.records.push(IterationRecord {
        iter,
        stage,
        det_w: state.w.determinant().abs(),
        sigma_sum,
        mc_volume: mc,
        exact_area: exact,
        solver_status: status.to_string(),
        wall_s,
    });
}

// --- stage one ----------------------------------------------------------------

fn stage1_fixed_point(p_init: &DMatrix<f64>, y: Vec<DMatrix<f64>>, n_vertices: usize) -> FixedPoint {
    FixedPoint {
        p0: vec![p_init.clone(); n_vertices],
        w: None,
        y,
        lambda0: Vec::new(),
        pi0: Vec::new(),
        upsilon0: None,
    }
}

/// Feasibility pass: maximize `logdet(W + W')` under the stage-one
/// conditions with identity linearization matrices.
pub fn solve_stage1_initial(
    problem: &ProblemSpec,
    p_init: &DMatrix<f64>,
    opts: &SynthesisOptions,
) -> Result<SynthesisState, SynthesisError> {
    opts.validate(problem.system.n_x)?;
    let dims = ProblemDims::new(problem, opts.n_p);
    let outer = geometry::bounding_box(&problem.constraints)?;
    let n = dims.n_vertices;
    let y_init: Vec<DMatrix<f64>> = vec![DMatrix::identity(dims.n_x, dims.n_x); opts.n_p];

    let build = |eps: f64| -> Result<BuiltProgram, SynthesisError> {
        let mut prog = ConicProgram::new();
        let layout = lmi::stage1_layout(&mut prog, &dims, problem.performance.enabled, false, lmi::MultiplierFloors::default().direct);
        let fixed = stage1_fixed_point(p_init, y_init.clone(), n);
        for cond in lmi::assemble_theorem1(&prog, problem, &layout, &fixed, opts.d, eps)? {
            lmi::add_condition(&mut prog, &cond);
        }
        let w_expr = prog.var_expr(layout.w.expect("stage-one layout"));
        prog.set_objective(Objective::MaximizeLogDet(w_expr.he()));
        Ok(BuiltProgram { prog, layout })
    };

    let started = Instant::now();
    let (built, sol) = solve_with_retry(build, opts.epsilon, 1, 1)?;
    let wall = started.elapsed().as_secs_f64();
    match sol.status {
        SolveStatus::Optimal | SolveStatus::Feasible => {}
        SolveStatus::Infeasible => {
            return Err(SynthesisError::Infeasible {
                stage: 1,
                iter: 1,
                hint: " (consider raising the face-pair count or the relaxation order)".into(),
            });
        }
        other => {
            return Err(SynthesisError::SolverFailed { stage: 1, iter: 1, status: other.as_str().into() })
        }
    }

    let vals = extract_stage1(&built.prog, &built.layout, &sol.x);
    let y = linearization_matrices(&vals.x, &vals.w)?;
    let mut state = SynthesisState {
        p: vec![p_init.clone(); n],
        w: vals.w,
        kbar: vals.kbar,
        x: vals.x,
        y,
        lambda0: vals.lambda,
        pi0: vals.pi,
        upsilon0: vals.upsilon,
        phi: vals.phi,
        gamma_mult: vals.gamma,
        v: vals.v,
        records: Vec::new(),
    };
    push_record(&mut state, &outer, opts, 1, f64::NAN, sol.status.as_str(), wall);
    Ok(state)
}

/// One determinant-increase pass; `|det W|` never shrinks because the
/// previous iterate with `Z = W0' W0` stays feasible.
pub fn iterate_stage1(
    problem: &ProblemSpec,
    state: &mut SynthesisState,
    opts: &SynthesisOptions,
) -> Result<SolveStatus, SynthesisError> {
    let dims = ProblemDims::new(problem, opts.n_p);
    let outer = geometry::bounding_box(&problem.constraints)?;
    let n = dims.n_vertices;
    let w0 = state.w.clone();
    let y = state.y.clone();
    let p_init = state.p[0].clone();

    let build = |eps: f64| -> Result<BuiltProgram, SynthesisError> {
        let mut prog = ConicProgram::new();
        let layout = lmi::stage1_layout(&mut prog, &dims, problem.performance.enabled, true, lmi::MultiplierFloors::default().direct);
        let fixed = stage1_fixed_point(&p_init, y.clone(), n);
        for cond in lmi::assemble_theorem1(&prog, problem, &layout, &fixed, opts.d, eps)? {
            lmi::add_condition(&mut prog, &cond);
        }
        let w_expr = prog.var_expr(layout.w.expect("stage-one layout"));
        let z_expr = prog.var_expr(layout.z.expect("determinant target"));
        // W' W0 + W0' W - W0' W0 - Z >= 0
        let cross = w_expr.transpose().mul_right(&w0).he();
        let shift = MatExpr::from_const(&(w0.transpose() * &w0));
        prog.add_psd("det-increase", cross.sub(&shift).sub(&z_expr), 0.0);
        prog.add_psd("det-target-pos", z_expr.clone(), eps);
        prog.set_objective(Objective::MaximizeLogDet(z_expr));
        Ok(BuiltProgram { prog, layout })
    };

    let iter = state.records.len() + 1;
    let started = Instant::now();
    let (built, sol) = solve_with_retry(build, opts.epsilon, 1, iter)?;
    let wall = started.elapsed().as_secs_f64();
    match sol.status {
        SolveStatus::Optimal | SolveStatus::Feasible => {}
        SolveStatus::Infeasible => {
            return Err(SynthesisError::Infeasible { stage: 1, iter, hint: String::new() })
        }
        other => {
            return Err(SynthesisError::SolverFailed { stage: 1, iter, status: other.as_str().into() })
        }
    }

    let vals = extract_stage1(&built.prog, &built.layout, &sol.x);
    state.y = linearization_matrices(&vals.x, &vals.w)?;
    state.w = vals.w;
    state.kbar = vals.kbar;
    state.x = vals.x;
    state.lambda0 = vals.lambda;
    state.pi0 = vals.pi;
    state.upsilon0 = vals.upsilon;
    state.phi = vals.phi;
    state.gamma_mult = vals.gamma;
    state.v = vals.v;
    push_record(state, &outer, opts, 1, f64::NAN, sol.status.as_str(), wall);
    Ok(sol.status)
}

// --- stage two ----------------------------------------------------------------

/// Volume-surrogate slacks and constraints of one stage-two pass:
/// nonnegative `sigma[m][n]` per (grid slice, sample) with
/// `+-row_a(P(xi_m) W^-1) x_n - 1 <= sigma[m][n]` for every face row,
/// and the linear objective `sum sigma`.
pub fn build_volume_cost(
    prog: &mut ConicProgram,
    layout: &DecisionLayout,
    w: &DMatrix<f64>,
    grid: &[SimplexPoint],
    samples: &[DVector<f64>],
) -> Result<(Vec<Vec<VarId>>, LinExpr), SynthesisError> {
    let w_inv = w.clone().try_inverse().ok_or(SynthesisError::SingularW)?;
    let n_p = prog.var_shape(layout.p[0]).0;
    let mut objective = LinExpr::zero();
    let mut sigma = Vec::with_capacity(grid.len());
    for (m, xi) in grid.iter().enumerate() {
        let mut row_vars = Vec::with_capacity(samples.len());
        for (n_idx, x_n) in samples.iter().enumerate() {
            let s_var = prog.scalar_var(&format!("sigma[{m}][{n_idx}]"), Some(0.0));
            let s_expr = prog.scalar_expr(s_var);
            objective = objective.add(&s_expr);
            let y_n = &w_inv * x_n;
            for a in 0..n_p {
                // row = sum_k xi_k e_a' P^k y_n
                let mut row = LinExpr::zero();
                for (k, &weight) in xi.weights().iter().enumerate() {
                    if weight == 0.0 {
                        continue;
                    }
                    for b in 0..y_n.len() {
                        if y_n[b] != 0.0 {
                            row = row.add(&LinExpr::term(
                                prog.entry_slot(layout.p[k], a, b),
                                weight * y_n[b],
                            ));
                        }
                    }
                }
                // row - 1 <= sigma  and  -row - 1 <= sigma
                prog.add_lin_ge(
                    &format!("vol[m={m},n={n_idx},a={a},+]"),
                    s_expr.sub(&row).add_constant(1.0),
                );
                prog.add_lin_ge(
                    &format!("vol[m={m},n={n_idx},a={a},-]"),
                    s_expr.add(&row).add_constant(1.0),
                );
            }
            row_vars.push(s_var);
        }
        sigma.push(row_vars);
    }
    Ok((sigma, objective))
}

struct Stage2Values {
    p: Vec<DMatrix<f64>>,
    kbar: Vec<DMatrix<f64>>,
    x: Vec<DMatrix<f64>>,
    psi: Vec<f64>,
    lambda_tilde: Vec<DVector<f64>>,
    gamma_bar: Vec<DVector<f64>>,
    pi: Vec<DVector<f64>>,
    upsilon: Option<DVector<f64>>,
    v: Vec<Vec<DMatrix<f64>>>,
}

fn extract_stage2(prog: &ConicProgram, layout: &DecisionLayout, x: &[f64]) -> Stage2Values {
    Stage2Values {
        p: layout.p.iter().map(|&id| prog.value(id, x)).collect(),
        kbar: layout.kbar.iter().map(|&id| prog.value(id, x)).collect(),
        x: layout.x.iter().map(|&id| prog.value(id, x)).collect(),
        psi: layout.phi.iter().map(|&id| prog.scalar_value(id, x)).collect(),
        lambda_tilde: layout.lambda.iter().map(|&id| prog.diag_value(id, x)).collect(),
        gamma_bar: layout.gamma.iter().map(|&id| prog.diag_value(id, x)).collect(),
        pi: layout.pi.iter().map(|&id| prog.diag_value(id, x)).collect(),
        upsilon: layout.upsilon.map(|id| prog.diag_value(id, x)),
        v: layout
            .v
            .iter()
            .map(|row| row.iter().map(|&id| prog.value(id, x)).collect())
            .collect(),
    }
}

/// Stage-two loop: volume-surrogate SDP, then re-linearize
/// (`Y_i <- X_i^-1 W`, face matrices, multiplier weights) and repeat
/// until the budget or the convergence threshold.
pub fn run_algorithm1(
    problem: &ProblemSpec,
    mut state: SynthesisState,
    opts: &SynthesisOptions,
) -> Result<(SynthesisResult, SynthesisState), SynthesisError> {
    opts.validate(problem.system.n_x)?;
    let dims = ProblemDims::new(problem, opts.n_p);
    let n = dims.n_vertices;
    let outer = geometry::bounding_box(&problem.constraints)?;
    let grid = make_simplex_grid(n, opts.grid_resolution);
    let samples =
        geometry::box_vertices_and_boundary_samples(&outer, opts.extra_boundary_samples, opts.seed);
    let w = state.w.clone();
    let mut prev_sigma = f64::INFINITY;

    for pass in 0..opts.iters_stage2 {
        let iter = state.records.len() + 1;
        let fixed = FixedPoint {
            p0: state.p.clone(),
            w: Some(w.clone()),
            y: state.y.clone(),
            lambda0: state.lambda0.clone(),
            pi0: state.pi0.clone(),
            upsilon0: state.upsilon0.clone(),
        };
        let build = |eps: f64| -> Result<BuiltProgram, SynthesisError> {
            let mut prog = ConicProgram::new();
            let layout = lmi::stage2_layout(&mut prog, &dims, problem.performance.enabled, &lmi::MultiplierFloors::default());
            for cond in lmi::assemble_theorem2(&prog, problem, &layout, &fixed, opts.d, eps)? {
                lmi::add_condition(&mut prog, &cond);
            }
            let (_, objective) = build_volume_cost(&mut prog, &layout, &w, &grid, &samples)?;
            prog.set_objective(Objective::Minimize(objective));
            Ok(BuiltProgram { prog, layout })
        };

        let started = Instant::now();
        let (built, sol) = solve_with_retry(build, opts.epsilon, 2, iter)?;
        let wall = started.elapsed().as_secs_f64();
        match sol.status {
            SolveStatus::Optimal | SolveStatus::Feasible => {}
            SolveStatus::Infeasible if pass == 0 => {
                return Err(SynthesisError::Infeasible {
                    stage: 2,
                    iter,
                    hint: " (the seeded first pass is feasible by construction; this indicates an internal defect)"
                        .into(),
                });
            }
            other => {
                // mid-run failure: keep the last certified iterate
                state.records.push(IterationRecord {
                    iter,
                    stage: 2,
                    det_w: state.w.determinant().abs(),
                    sigma_sum: f64::NAN,
                    mc_volume: f64::NAN,
                    exact_area: f64::NAN,
                    solver_status: other.as_str().to_string(),
                    wall_s: wall,
                });
                break;
            }
        }

        let vals = extract_stage2(&built.prog, &built.layout, &sol.x);
        state.y = linearization_matrices(&vals.x, &w)?;
        state.p = vals.p;
        state.kbar = vals.kbar;
        state.x = vals.x;
        state.lambda0 = vals
            .lambda_tilde
            .iter()
            .map(|lt| DVector::from_fn(lt.len(), |r, _| 1.0 / lt[r]))
            .collect();
        state.pi0 = vals.pi;
        state.upsilon0 = vals.upsilon;
        state.phi = vals.psi.iter().map(|&psi| 1.0 / psi).collect();
        state.gamma_mult = vals
            .gamma_bar
            .iter()
            .zip(&state.phi)
            .map(|(gb, &phi)| gb * (phi * phi))
            .collect();
        state.v = vals.v;
        let sigma_sum = sol.objective;
        push_record(&mut state, &outer, opts, 2, sigma_sum, sol.status.as_str(), wall);

        if let Some(tol) = opts.convergence_tol {
            if (prev_sigma - sigma_sum).abs() <= tol * prev_sigma.abs().max(1.0) {
                break;
            }
        }
        prev_sigma = sigma_sum;
    }

    let polytope = ParamPolytope { p: state.p.clone(), w: w.clone() };
    let w_inv = w.clone().try_inverse().ok_or(SynthesisError::SingularW)?;
    let gains = state.kbar.iter().map(|kb| kb * &w_inv).collect();
    let min_sv = grid
        .iter()
        .map(|xi| {
            let p_xi = polytope.p_at(xi).expect("grid matches vertex count");
            p_xi.svd(false, false).singular_values.iter().cloned().fold(f64::INFINITY, f64::min)
        })
        .fold(f64::INFINITY, f64::min);
    let w_svd = w.clone().svd(false, false);
    let w_cond = w_svd.singular_values.max() / w_svd.singular_values.min();
    let result = SynthesisResult {
        polytope,
        gains,
        gamma_certified: problem.performance.enabled.then_some(problem.performance.gamma),
        trace: state.records.clone(),
        min_singular_value: min_sv,
        w_condition: w_cond,
    };
    Ok((result, state))
}

/// Full pipeline: initial face matrix, stage-one passes, stage-two
/// passes.
pub fn run_synthesis(
    problem: &ProblemSpec,
    opts: &SynthesisOptions,
) -> Result<SynthesisResult, SynthesisError> {
    opts.validate(problem.system.n_x)?;
    let p_init = select_initial_p(opts.n_p, problem.system.n_x)?;
    let mut state = solve_stage1_initial(problem, &p_init, opts)?;
    for _ in 1..opts.iters_stage1 {
        match iterate_stage1(problem, &mut state, opts) {
            Ok(_) => {}
            Err(SynthesisError::SolverFailed { .. }) => break, // keep the last certified iterate
            Err(e) => return Err(e),
        }
    }
    let (result, _) = run_algorithm1(problem, state, opts)?;
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::preset;
    use approx::assert_relative_eq;

    #[test]
    fn initial_faces_two_dimensional_fan() {
        let p = select_initial_p(4, 2).unwrap();
        assert_relative_eq!(p[(0, 0)], 1.0, epsilon = 1e-12);
        assert_relative_eq!(p[(0, 1)], 0.0, epsilon = 1e-12);
        let s = std::f64::consts::FRAC_1_SQRT_2;
        assert_relative_eq!(p[(1, 0)], s, epsilon = 1e-12);
        assert_relative_eq!(p[(1, 1)], s, epsilon = 1e-12);
        assert_relative_eq!(p[(2, 0)], 0.0, epsilon = 1e-12);
        assert_relative_eq!(p[(2, 1)], 1.0, epsilon = 1e-12);
        assert_relative_eq!(p[(3, 0)], -s, epsilon = 1e-12);
        assert_relative_eq!(p[(3, 1)], s, epsilon = 1e-12);

        let p2 = select_initial_p(2, 2).unwrap();
        assert_relative_eq!(p2, DMatrix::identity(2, 2), epsilon = 1e-12);
    }

    #[test]
    fn initial_faces_three_dimensional_hemisphere() {
        let p = select_initial_p(6, 3).unwrap();
        for i in 0..6 {
            assert_relative_eq!(p.row(i).norm(), 1.0, epsilon = 1e-12);
            for j in (i + 1)..6 {
                assert!((p.row(i) - p.row(j)).norm() > 1e-6, "rows {i},{j} coincide");
            }
        }
        assert_eq!(p.clone().svd(false, false).rank(1e-9), 3);
        assert!(select_initial_p(2, 3).is_err());
    }

    #[test]
    fn simplex_grid_lattice() {
        let grid = make_simplex_grid(2, 4);
        assert_eq!(grid.len(), 5);
        let firsts: Vec<f64> = grid.iter().map(|p| p.weights()[0]).collect();
        assert_eq!(firsts, vec![0.0, 0.25, 0.5, 0.75, 1.0]);

        assert_eq!(make_simplex_grid(2, 1).len(), 2); // exactly the vertices
        assert_eq!(make_simplex_grid(3, 2).len(), 6);
        // vertices included
        let g3 = make_simplex_grid(3, 2);
        for k in 0..3 {
            assert!(g3.iter().any(|p| p.weights()[k] == 1.0));
        }
    }

    #[test]
    fn one_dimensional_pipeline_reaches_unit_interval() {
        let problem = preset("demo-1d", None).unwrap();
        let opts = SynthesisOptions {
            n_p: 1,
            iters_stage1: 4,
            iters_stage2: 6,
            mc_samples: 2_000,
            ..Default::default()
        };
        let result = run_synthesis(&problem, &opts).unwrap();
        // every solve reported usable
        for rec in &result.trace {
            assert!(
                rec.solver_status == "optimal" || rec.solver_status == "feasible",
                "{rec:?}"
            );
        }
        // the input bound caps the certified interval at |x| <= 1
        let breve = geometry::robust_intersection(&result.polytope).unwrap();
        let bb = geometry::hpolytope_bounding_box(&breve).unwrap();
        let half_width = 0.5 * (bb.hi[0] - bb.lo[0]);
        assert!(half_width > 0.9, "half-width {half_width}");
        assert!(half_width < 1.0 + 1e-4, "half-width {half_width}");
    }

    #[test]
    fn stage1_determinant_is_monotone() {
        let problem = preset("demo-double-integrator", None).unwrap();
        let opts = SynthesisOptions {
            iters_stage1: 5,
            iters_stage2: 1,
            mc_samples: 2_000,
            ..Default::default()
        };
        let p_init = select_initial_p(opts.n_p, 2).unwrap();
        let mut state = solve_stage1_initial(&problem, &p_init, &opts).unwrap();
        for _ in 1..opts.iters_stage1 {
            iterate_stage1(&problem, &mut state, &opts).unwrap();
        }
        let dets: Vec<f64> = state.records.iter().map(|r| r.det_w).collect();
        for pair in dets.windows(2) {
            assert!(pair[1] >= pair[0] - 1e-6, "determinant shrank: {pair:?}");
        }
    }
}
