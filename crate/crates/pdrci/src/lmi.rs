//! Assembly of the block matrices and simplex-relaxed matrix
//! inequality families that certify invariance, system constraints and
//! output-energy performance, as affine expressions over a declared
//! decision-variable layout.
//!
//! Two stages share the block structure. Stage one keeps the face
//! matrix fixed at `P_init` and optimizes the shape transform `W`;
//! all multipliers enter linearly. Stage two fixes `W`, frees the
//! per-vertex face matrices `P^k`, and keeps the conditions linear by
//! switching to inverse multipliers (`psi = 1/phi`,
//! `lambda_tilde = Lambda^-1`, `gamma_bar = phi^-2 Gamma`). Multipliers
//! that appear both directly and inverted (`Pi_j`, `Upsilon`) get a
//! paired proxy variable with the coupling block
//! `[[Pi, I], [I, Pi_tilde]] >= 0`, which enforces
//! `Pi_tilde >= Pi^-1` and therefore keeps the substituted condition
//! sufficient (the inverse enters with a negative sign); the proxy is
//! tight at `Pi_tilde = Pi^-1`.

use crate::conic::{ConicProgram, LinExpr, MatExpr, VarId};
use crate::model::ProblemSpec;
use crate::polya::{self, ExponentTuple};
use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LmiError {
    #[error("relaxation degree {0} exceeds the exact-arithmetic cap ({max})", max = polya::MAX_DEGREE - 2)]
    DegreeTooLarge(u32),
    #[error("layout stage does not match the requested assembly")]
    StageMismatch,
    #[error("dimension mismatch: {0}")]
    Dimension(String),
}

/// Problem dimensions plus the face-pair count of the set.
#[derive(Debug, Clone, Copy)]
pub struct ProblemDims {
    pub n_x: usize,
    pub n_u: usize,
    pub n_w: usize,
    pub n_z: usize,
    pub n_p: usize,
    pub n_h: usize,
    pub n_g: usize,
    pub n_vertices: usize,
}

impl ProblemDims {
    pub fn new(problem: &ProblemSpec, n_p: usize) -> Self {
        Self {
            n_x: problem.system.n_x,
            n_u: problem.system.n_u,
            n_w: problem.system.n_w,
            n_z: problem.system.n_z,
            n_p,
            n_h: problem.constraints.num_rows(),
            n_g: problem.constraints.g.nrows(),
            n_vertices: problem.system.num_vertices(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    One,
    Two,
}

/// Registry handles of every decision variable of one synthesis stage.
///
/// Stage one: `phi`, `lambda`, `gamma` are the direct multipliers.
/// Stage two: `phi` holds `psi = phi^-1`, `lambda` holds
/// `Lambda^-1`, `gamma` holds `phi^-2 Gamma`, and the paired
/// `pi_tilde`/`upsilon_tilde` proxies stand in for the inverses.
#[derive(Debug, Clone)]
pub struct DecisionLayout {
    pub stage: Stage,
    /// Shape transform (stage one only; constant in stage two).
    pub w: Option<VarId>,
    /// Determinant-increase target (stage-one iterations only).
    pub z: Option<VarId>,
    /// Per-vertex face matrices (stage two only).
    pub p: Vec<VarId>,
    /// Per-vertex gains premultiplied by the shape transform.
    pub kbar: Vec<VarId>,
    /// Slack multipliers of the dynamics row, `[i][k]`.
    pub v: Vec<Vec<VarId>>,
    /// Symmetric successor-bound blocks, per face pair.
    pub x: Vec<VarId>,
    pub phi: Vec<VarId>,
    pub lambda: Vec<VarId>,
    pub gamma: Vec<VarId>,
    pub pi: Vec<VarId>,
    pub pi_tilde: Vec<VarId>,
    /// Storage blocks of the performance certificate, per vertex.
    pub q: Vec<VarId>,
    pub s: Vec<VarId>,
    pub f: Vec<VarId>,
    pub upsilon: Option<VarId>,
    pub upsilon_tilde: Option<VarId>,
}

/// Values held fixed during one stage: previous-iterate face matrices,
/// linearization matrices `Y_i`, fixed multiplier weights, and the
/// constant shape transform in stage two.
#[derive(Debug, Clone)]
pub struct FixedPoint {
    pub p0: Vec<DMatrix<f64>>,
    pub w: Option<DMatrix<f64>>,
    pub y: Vec<DMatrix<f64>>,
    pub lambda0: Vec<DVector<f64>>,
    pub pi0: Vec<DVector<f64>>,
    pub upsilon0: Option<DVector<f64>>,
}

/// Condition family tags used for counting and reporting.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    InvCorner,
    InvBudget,
    InvRelax,
    SysRelax,
    PerfDecay,
    PerfLevel,
    Coupling,
}

#[derive(Debug, Clone)]
pub enum CondExpr {
    Matrix(MatExpr),
    Scalar(LinExpr),
}

#[derive(Debug, Clone, Copy)]
pub enum Cone {
    /// Matrix expression minus `margin * I` is PSD.
    PsdMargin(f64),
    /// Scalar expression is at least the margin.
    ScalarGe(f64),
}

#[derive(Debug, Clone)]
pub struct AssembledCondition {
    pub label: String,
    pub family: Family,
    pub expr: CondExpr,
    pub cone: Cone,
}

impl AssembledCondition {
    fn matrix(label: String, family: Family, expr: MatExpr, margin: f64) -> Self {
        debug_assert!(expr.is_symmetric_expr(), "{label}: assembled expression must be symmetric");
        Self { label, family, expr: CondExpr::Matrix(expr), cone: Cone::PsdMargin(margin) }
    }

    fn scalar(label: String, family: Family, expr: LinExpr, margin: f64) -> Self {
        Self { label, family, expr: CondExpr::Scalar(expr), cone: Cone::ScalarGe(margin) }
    }

    /// Violation of this condition at a raw scalar assignment
    /// (0 when satisfied with margin).
    pub fn violation(&self, x: &[f64]) -> f64 {
        match (&self.expr, self.cone) {
            (CondExpr::Matrix(m), Cone::PsdMargin(margin)) => {
                let v = m.eval(x);
                let sym = (&v + v.transpose()) * 0.5;
                let shifted = sym - DMatrix::identity(v.nrows(), v.nrows()) * margin;
                let min_eig =
                    shifted.symmetric_eigenvalues().iter().cloned().fold(f64::INFINITY, f64::min);
                (-min_eig).max(0.0)
            }
            (CondExpr::Scalar(e), Cone::ScalarGe(margin)) => (margin - e.eval(x)).max(0.0),
            _ => unreachable!("cone/expression mismatch"),
        }
    }
}

/// Push a condition into a conic program.
pub fn add_condition(prog: &mut ConicProgram, cond: &AssembledCondition) {
    match (&cond.expr, cond.cone) {
        (CondExpr::Matrix(m), Cone::PsdMargin(margin)) => prog.add_psd(&cond.label, m.clone(), margin),
        (CondExpr::Scalar(e), Cone::ScalarGe(margin)) => {
            prog.add_lin_ge(&cond.label, e.add_constant(-margin))
        }
        _ => unreachable!("cone/expression mismatch"),
    }
}

/// Condition totals per named family.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConditionCounts {
    pub invariance: usize,
    pub system: usize,
    pub performance: usize,
    pub coupling: usize,
}

pub fn count_conditions(conds: &[AssembledCondition]) -> ConditionCounts {
    let mut out = ConditionCounts { invariance: 0, system: 0, performance: 0, coupling: 0 };
    for c in conds {
        match c.family {
            Family::InvCorner | Family::InvBudget | Family::InvRelax => out.invariance += 1,
            Family::SysRelax => out.system += 1,
            Family::PerfDecay | Family::PerfLevel => out.performance += 1,
            Family::Coupling => out.coupling += 1,
        }
    }
    out
}

/// Selects which multiplier family weights a face-product block.
#[derive(Debug, Clone, Copy)]
pub enum Multiplier {
    /// Set multiplier of face pair `i`.
    Face(usize),
    /// Constraint-row multiplier of row `j`.
    Row(usize),
    /// Performance-level multiplier.
    Level,
}

// --- layout construction ----------------------------------------------------

/// Positivity floors of the multiplier variables. Direct multipliers
/// stay at or above `direct`, so their stage-two inverses stay at or
/// below `1/direct`; the inverse variables get the loose floor `tilde`
/// plus a cap at `1/direct`. This pins all multiplier scales into
/// `[direct, 1/direct]` across iterations, which the interior-point
/// backend needs, and keeps the cross-stage substitution exact.
#[derive(Debug, Clone, Copy)]
pub struct MultiplierFloors {
    pub direct: f64,
    pub tilde: f64,
}

impl Default for MultiplierFloors {
    fn default() -> Self {
        Self { direct: 1e-3, tilde: 1e-9 }
    }
}

/// Stage-one decision variables. `eps_pos` is the lower bound of every
/// positive multiplier.
pub fn stage1_layout(
    prog: &mut ConicProgram,
    dims: &ProblemDims,
    performance: bool,
    with_det_target: bool,
    eps_pos: f64,
) -> DecisionLayout {
    let n = dims.n_vertices;
    let w = Some(prog.free_var("W", dims.n_x, dims.n_x));
    let z = with_det_target.then(|| prog.symmetric_var("Z", dims.n_x));
    let kbar = (0..n).map(|k| prog.free_var(&format!("Kbar[{k}]"), dims.n_u, dims.n_x)).collect();
    let v = (0..dims.n_p)
        .map(|i| {
            (0..n).map(|k| prog.free_var(&format!("V[{i}][{k}]"), dims.n_x, dims.n_x)).collect()
        })
        .collect();
    let x = (0..dims.n_p).map(|i| prog.symmetric_var(&format!("X[{i}]"), dims.n_x)).collect();
    let phi = (0..dims.n_p).map(|i| prog.scalar_var(&format!("phi[{i}]"), Some(eps_pos))).collect();
    let lambda =
        (0..dims.n_p).map(|i| prog.diag_pos_var(&format!("Lambda[{i}]"), dims.n_p, eps_pos)).collect();
    let gamma =
        (0..dims.n_p).map(|i| prog.diag_pos_var(&format!("Gamma[{i}]"), dims.n_g, eps_pos)).collect();
    let pi =
        (0..dims.n_h).map(|j| prog.diag_pos_var(&format!("Pi[{j}]"), dims.n_p, eps_pos)).collect();
    let (q, s, f, upsilon) = if performance {
        (
            (0..n).map(|k| prog.symmetric_var(&format!("Q[{k}]"), dims.n_x)).collect(),
            (0..n).map(|k| prog.free_var(&format!("S[{k}]"), dims.n_x, dims.n_x)).collect(),
            (0..n).map(|k| prog.free_var(&format!("F[{k}]"), dims.n_z, dims.n_z)).collect(),
            Some(prog.diag_pos_var("Upsilon", dims.n_p, eps_pos)),
        )
    } else {
        (Vec::new(), Vec::new(), Vec::new(), None)
    };
    DecisionLayout {
        stage: Stage::One,
        w,
        z,
        p: Vec::new(),
        kbar,
        v,
        x,
        phi,
        lambda,
        gamma,
        pi,
        pi_tilde: Vec::new(),
        q,
        s,
        f,
        upsilon,
        upsilon_tilde: None,
    }
}

/// Stage-two decision variables (inverse-multiplier parameterization).
/// Inverse variables are capped at `1/floors.direct` so that recovered
/// direct multipliers never fall below the stage-one floor.
pub fn stage2_layout(
    prog: &mut ConicProgram,
    dims: &ProblemDims,
    performance: bool,
    floors: &MultiplierFloors,
) -> DecisionLayout {
    let n = dims.n_vertices;
    let cap = 1.0 / floors.direct;
    let p = (0..n).map(|k| prog.free_var(&format!("P[{k}]"), dims.n_p, dims.n_x)).collect();
    let kbar = (0..n).map(|k| prog.free_var(&format!("Kbar[{k}]"), dims.n_u, dims.n_x)).collect();
    let v = (0..dims.n_p)
        .map(|i| {
            (0..n).map(|k| prog.free_var(&format!("V[{i}][{k}]"), dims.n_x, dims.n_x)).collect()
        })
        .collect();
    let x = (0..dims.n_p).map(|i| prog.symmetric_var(&format!("X[{i}]"), dims.n_x)).collect();
    let phi: Vec<VarId> = (0..dims.n_p)
        .map(|i| prog.scalar_var(&format!("psi[{i}]"), Some(floors.tilde)))
        .collect();
    let lambda: Vec<VarId> = (0..dims.n_p)
        .map(|i| prog.diag_pos_var(&format!("LambdaTilde[{i}]"), dims.n_p, floors.tilde))
        .collect();
    let gamma = (0..dims.n_p)
        .map(|i| prog.diag_pos_var(&format!("GammaBar[{i}]"), dims.n_g, floors.tilde))
        .collect();
    let pi: Vec<VarId> = (0..dims.n_h)
        .map(|j| prog.diag_pos_var(&format!("Pi[{j}]"), dims.n_p, floors.direct))
        .collect();
    let pi_tilde: Vec<VarId> = (0..dims.n_h)
        .map(|j| prog.diag_pos_var(&format!("PiTilde[{j}]"), dims.n_p, floors.tilde))
        .collect();
    let (q, s, f, upsilon, upsilon_tilde) = if performance {
        (
            (0..n).map(|k| prog.symmetric_var(&format!("Q[{k}]"), dims.n_x)).collect(),
            (0..n).map(|k| prog.free_var(&format!("S[{k}]"), dims.n_x, dims.n_x)).collect(),
            (0..n).map(|k| prog.free_var(&format!("F[{k}]"), dims.n_z, dims.n_z)).collect(),
            Some(prog.diag_pos_var("Upsilon", dims.n_p, floors.direct)),
            Some(prog.diag_pos_var("UpsilonTilde", dims.n_p, floors.tilde)),
        )
    } else {
        (Vec::new(), Vec::new(), Vec::new(), None, None)
    };
    for (i, &id) in phi.iter().enumerate() {
        prog.add_lin_ge(&format!("cap-psi[{i}]"), prog.scalar_expr(id).scale(-1.0).add_constant(cap));
    }
    for (i, &id) in lambda.iter().enumerate() {
        for dd in 0..dims.n_p {
            prog.add_lin_ge(
                &format!("cap-lambda[{i},{dd}]"),
                LinExpr::term(prog.entry_slot(id, dd, dd), -1.0).add_constant(cap),
            );
        }
    }
    for (j, &id) in pi_tilde.iter().enumerate() {
        for dd in 0..dims.n_p {
            prog.add_lin_ge(
                &format!("cap-pit[{j},{dd}]"),
                LinExpr::term(prog.entry_slot(id, dd, dd), -1.0).add_constant(cap),
            );
        }
    }
    if let Some(id) = upsilon_tilde {
        for dd in 0..dims.n_p {
            prog.add_lin_ge(
                &format!("cap-upst[{dd}]"),
                LinExpr::term(prog.entry_slot(id, dd, dd), -1.0).add_constant(cap),
            );
        }
    }
    DecisionLayout {
        stage: Stage::Two,
        w: None,
        z: None,
        p,
        kbar,
        v,
        x,
        phi,
        lambda,
        gamma,
        pi,
        pi_tilde,
        q,
        s,
        f,
        upsilon,
        upsilon_tilde,
    }
}

// --- block builders ---------------------------------------------------------

fn mult_var(layout: &DecisionLayout, mult: Multiplier) -> VarId {
    match (layout.stage, mult) {
        (_, Multiplier::Face(i)) => layout.lambda[i],
        (Stage::One, Multiplier::Row(j)) => layout.pi[j],
        (Stage::Two, Multiplier::Row(j)) => layout.pi_tilde[j],
        (Stage::One, Multiplier::Level) => layout.upsilon.expect("performance disabled"),
        (Stage::Two, Multiplier::Level) => layout.upsilon_tilde.expect("performance disabled"),
    }
}

fn fixed_weight<'a>(fixed: &'a FixedPoint, mult: Multiplier) -> &'a DVector<f64> {
    match mult {
        Multiplier::Face(i) => &fixed.lambda0[i],
        Multiplier::Row(j) => &fixed.pi0[j],
        Multiplier::Level => fixed.upsilon0.as_ref().expect("performance disabled"),
    }
}

/// Face-product block. Stage one: `P_init' D P_init`, linear in the
/// diagonal multiplier `D`. Stage two:
/// `He(P_k' D0 P0_l) - (D0 P0_k)' Dtilde (D0 P0_l)`, linear in `P_k`
/// and the inverse proxy `Dtilde`; equals `P0' D0 P0` at the
/// linearization point `P_k = P0_k`, `Dtilde = D0^-1`.
pub fn build_pkl(
    prog: &ConicProgram,
    layout: &DecisionLayout,
    fixed: &FixedPoint,
    mult: Multiplier,
    k: usize,
    l: usize,
) -> MatExpr {
    let d_var = prog.var_expr(mult_var(layout, mult));
    match layout.stage {
        Stage::One => {
            let p_init = &fixed.p0[k];
            debug_assert_eq!(fixed.p0[k], fixed.p0[l], "stage one shares one face matrix");
            d_var.mul_left(&p_init.transpose()).mul_right(p_init)
        }
        Stage::Two => {
            let d0 = DMatrix::from_diagonal(fixed_weight(fixed, mult));
            let first = prog
                .var_expr(layout.p[k])
                .transpose()
                .mul_right(&(&d0 * &fixed.p0[l]))
                .he();
            let left = (&d0 * &fixed.p0[k]).transpose();
            let right = &d0 * &fixed.p0[l];
            let second = d_var.mul_left(&left).mul_right(&right);
            first.sub(&second)
        }
    }
}

/// `A^k W + B^k Kbar^l`, variable or constant `W` per stage.
fn dynamics_row(
    prog: &ConicProgram,
    layout: &DecisionLayout,
    fixed: &FixedPoint,
    problem: &ProblemSpec,
    k: usize,
    l: usize,
) -> MatExpr {
    let bk = &problem.system.b[k];
    let kterm = prog.var_expr(layout.kbar[l]).mul_left(bk);
    match layout.stage {
        Stage::One => {
            let w = prog.var_expr(layout.w.expect("stage-one layout carries W"));
            w.mul_left(&problem.system.a[k]).add(&kterm)
        }
        Stage::Two => {
            let w = fixed.w.as_ref().expect("stage-two fixed point carries W");
            MatExpr::from_const(&(&problem.system.a[k] * w)).add(&kterm)
        }
    }
}

/// `C^k W + D^k Kbar^l` for the output row of the performance block.
fn output_row(
    prog: &ConicProgram,
    layout: &DecisionLayout,
    fixed: &FixedPoint,
    problem: &ProblemSpec,
    k: usize,
    l: usize,
) -> MatExpr {
    let dk = &problem.system.d[k];
    let kterm = prog.var_expr(layout.kbar[l]).mul_left(dk);
    match layout.stage {
        Stage::One => {
            let w = prog.var_expr(layout.w.expect("stage-one layout carries W"));
            w.mul_left(&problem.system.c[k]).add(&kterm)
        }
        Stage::Two => {
            let w = fixed.w.as_ref().expect("stage-two fixed point carries W");
            MatExpr::from_const(&(&problem.system.c[k] * w)).add(&kterm)
        }
    }
}

/// Invariance block of vertex pair (k, l) and face pair `i`:
/// 4x4 block grid of sizes `[n_x, n_w, n_x, n_x]` with the
/// face product corner, the disturbance multiplier, the dynamics row
/// and the slack/successor blocks. Stage two scales the disturbance
/// column by `psi_i`.
pub fn build_m_block(
    prog: &ConicProgram,
    layout: &DecisionLayout,
    fixed: &FixedPoint,
    problem: &ProblemSpec,
    k: usize,
    l: usize,
    i: usize,
) -> MatExpr {
    let (n_x, n_w) = (problem.system.n_x, problem.system.n_w);
    let size = 3 * n_x + n_w;
    let (o2, o3, o4) = (n_x, n_x + n_w, 2 * n_x + n_w);
    let mut m = MatExpr::zeros(size, size);

    m.set_block(0, 0, &build_pkl(prog, layout, fixed, Multiplier::Face(i), k, l));

    let g = &problem.constraints.g;
    let gamma_block = prog.var_expr(layout.gamma[i]).mul_left(&g.transpose()).mul_right(g);
    m.set_block(o2, o2, &gamma_block);

    let dyn_row = dynamics_row(prog, layout, fixed, problem, k, l);
    m.set_block(o3, 0, &dyn_row);
    m.set_block(0, o3, &dyn_row.transpose());

    let e_block = match layout.stage {
        Stage::One => MatExpr::from_const(&problem.system.e[k]),
        Stage::Two => prog.scalar_times_const(layout.phi[i], &problem.system.e[k]),
    };
    m.set_block(o3, o2, &e_block);
    m.set_block(o2, o3, &e_block.transpose());

    let v = prog.var_expr(layout.v[i][k]);
    m.set_block(o3, o3, &v.he());
    m.set_block(o4, o3, &v);
    m.set_block(o3, o4, &v.transpose());
    m.set_block(o4, o4, &prog.var_expr(layout.x[i]));
    m
}

/// Constraint-row block of vertex pair (k, l) and row `j`:
/// `[[2 - 1'Pi_j 1, row_j(H_x W + H_u Kbar^l)], [*, face product]]`.
pub fn build_r_block(
    prog: &ConicProgram,
    layout: &DecisionLayout,
    fixed: &FixedPoint,
    problem: &ProblemSpec,
    k: usize,
    l: usize,
    j: usize,
) -> MatExpr {
    let n_x = problem.system.n_x;
    let mut r = MatExpr::zeros(1 + n_x, 1 + n_x);
    let budget = LinExpr::constant(2.0).sub(&prog.diag_sum(layout.pi[j]));
    r.set(0, 0, budget);

    let hx_row = DMatrix::from_fn(1, n_x, |_, c| problem.constraints.h_x[(j, c)]);
    let hu_row =
        DMatrix::from_fn(1, problem.system.n_u, |_, c| problem.constraints.h_u[(j, c)]);
    let kterm = prog.var_expr(layout.kbar[l]).mul_left(&hu_row);
    let row = match layout.stage {
        Stage::One => {
            let w = prog.var_expr(layout.w.expect("stage-one layout carries W"));
            w.mul_left(&hx_row).add(&kterm)
        }
        Stage::Two => {
            let w = fixed.w.as_ref().expect("stage-two fixed point carries W");
            MatExpr::from_const(&(&hx_row * w)).add(&kterm)
        }
    };
    r.set_block(0, 1, &row);
    r.set_block(1, 0, &row.transpose());
    r.set_block(1, 1, &build_pkl(prog, layout, fixed, Multiplier::Row(j), k, l));
    r
}

/// Performance-decay block of vertex pair (k, l): 5x5 block grid of
/// sizes `[n_x, n_x, n_x, n_z, n_z]`.
pub fn build_n_block(
    prog: &ConicProgram,
    layout: &DecisionLayout,
    fixed: &FixedPoint,
    problem: &ProblemSpec,
    k: usize,
    l: usize,
) -> MatExpr {
    let (n_x, n_z) = (problem.system.n_x, problem.system.n_z);
    let size = 3 * n_x + 2 * n_z;
    let (o2, o3, o4, o5) = (n_x, 2 * n_x, 3 * n_x, 3 * n_x + n_z);
    let mut n = MatExpr::zeros(size, size);

    let he_w = match layout.stage {
        Stage::One => prog.var_expr(layout.w.expect("stage-one layout carries W")).he(),
        Stage::Two => {
            let w = fixed.w.as_ref().expect("stage-two fixed point carries W");
            MatExpr::from_const(&(w + w.transpose()))
        }
    };
    n.set_block(0, 0, &he_w.sub(&prog.var_expr(layout.q[k])));

    let dyn_row = dynamics_row(prog, layout, fixed, problem, k, l);
    n.set_block(o2, 0, &dyn_row);
    n.set_block(0, o2, &dyn_row.transpose());

    let s = prog.var_expr(layout.s[k]);
    n.set_block(o2, o2, &s.he());
    n.set_block(o3, o2, &s);
    n.set_block(o2, o3, &s.transpose());
    n.set_block(o3, o3, &prog.var_expr(layout.q[k]));

    let out_row = output_row(prog, layout, fixed, problem, k, l);
    n.set_block(o4, 0, &out_row);
    n.set_block(0, o4, &out_row.transpose());

    let f = prog.var_expr(layout.f[k]);
    n.set_block(o4, o4, &f.he());
    n.set_block(o5, o4, &f);
    n.set_block(o4, o5, &f.transpose());
    n.set_block(o5, o5, &MatExpr::identity(n_z));
    n
}

/// Performance-level block of vertex pair (k, l): sizes `[1, n_x, n_x]`
/// with the multiplier budget corner and the face product.
pub fn build_l_block(
    prog: &ConicProgram,
    layout: &DecisionLayout,
    fixed: &FixedPoint,
    problem: &ProblemSpec,
    k: usize,
    l: usize,
    gamma_bound: f64,
) -> MatExpr {
    let n_x = problem.system.n_x;
    let mut lb = MatExpr::zeros(1 + 2 * n_x, 1 + 2 * n_x);
    let upsilon = layout.upsilon.expect("performance disabled");
    lb.set(0, 0, LinExpr::constant(gamma_bound).sub(&prog.diag_sum(upsilon)));
    lb.set_block(1, 1, &build_pkl(prog, layout, fixed, Multiplier::Level, k, l));
    let w_block = match layout.stage {
        Stage::One => prog.var_expr(layout.w.expect("stage-one layout carries W")),
        Stage::Two => MatExpr::from_const(fixed.w.as_ref().expect("stage-two fixed point carries W")),
    };
    lb.set_block(1 + n_x, 1, &w_block);
    lb.set_block(1, 1 + n_x, &w_block.transpose());
    lb.set_block(1 + n_x, 1 + n_x, &prog.var_expr(layout.q[k]));
    lb
}

// --- relaxed family assembly -------------------------------------------------

/// Relaxed coefficient conditions of one degree-2 homogeneous block
/// family: one condition per degree-`d+2` monomial, weighted by the
/// exact relaxation coefficients.
fn relax_family<F: Fn(usize, usize) -> MatExpr>(
    block: F,
    d: u32,
    n_vertices: usize,
) -> Vec<MatExpr> {
    let blocks: Vec<Vec<MatExpr>> = (0..n_vertices)
        .map(|k| (0..n_vertices).map(|l| block(k, l)).collect())
        .collect();
    let size = blocks[0][0].nrows();
    let tuples: Vec<ExponentTuple> = polya::enumerate_exponents(d + 2, n_vertices);
    let mut out = Vec::with_capacity(tuples.len());
    for beta in &tuples {
        let mut expr = MatExpr::zeros(size, size);
        for k in 0..n_vertices {
            let c = polya::relax_weight_single(beta, k, 2);
            if c > 0 {
                expr = expr.add(&blocks[k][k].scale(c as f64));
            }
        }
        for k in 0..n_vertices {
            for l in (k + 1)..n_vertices {
                let c = polya::relax_weight_pair(beta, k, l, 1, 1);
                if c > 0 {
                    expr = expr.add(&blocks[k][l].add(&blocks[l][k]).scale(c as f64));
                }
            }
        }
        out.push(expr);
    }
    out
}

fn check_degree(d: u32) -> Result<(), LmiError> {
    if d + 2 > polya::MAX_DEGREE {
        return Err(LmiError::DegreeTooLarge(d));
    }
    Ok(())
}

/// Stage-one conditions: per-face corner and multiplier-budget
/// conditions plus the relaxed invariance/system/performance families,
/// all linear for fixed `Y_i` and shared face matrix.
pub fn assemble_theorem1(
    prog: &ConicProgram,
    problem: &ProblemSpec,
    layout: &DecisionLayout,
    fixed: &FixedPoint,
    d: u32,
    eps: f64,
) -> Result<Vec<AssembledCondition>, LmiError> {
    if layout.stage != Stage::One {
        return Err(LmiError::StageMismatch);
    }
    check_degree(d)?;
    let dims_np = layout.phi.len();
    let n = problem.system.num_vertices();
    let n_x = problem.system.n_x;
    let mut out = Vec::new();

    let w_expr = prog.var_expr(layout.w.expect("stage-one layout carries W"));
    for i in 0..dims_np {
        let y = &fixed.y[i];
        let corner = w_expr
            .transpose()
            .mul_right(y)
            .he()
            .sub(&prog.var_expr(layout.x[i]).mul_left(&y.transpose()).mul_right(y));
        let p_init = &fixed.p0[0];
        let row_const = DMatrix::from_fn(1, n_x, |_, c| p_init[(i, c)]);
        let row = prog.scalar_times_const(layout.phi[i], &row_const);
        let mut blk = MatExpr::zeros(n_x + 1, n_x + 1);
        blk.set_block(0, 0, &corner);
        blk.set_block(n_x, 0, &row);
        blk.set_block(0, n_x, &row.transpose());
        blk.set(n_x, n_x, prog.scalar_expr(layout.phi[i]));
        out.push(AssembledCondition::matrix(
            format!("inv-corner[i={i}]"),
            Family::InvCorner,
            blk,
            eps,
        ));
    }

    for i in 0..dims_np {
        let budget = prog
            .scalar_expr(layout.phi[i])
            .sub(&prog.diag_sum(layout.lambda[i]))
            .sub(&prog.diag_sum(layout.gamma[i]));
        out.push(AssembledCondition::scalar(
            format!("inv-budget[i={i}]"),
            Family::InvBudget,
            budget,
            eps,
        ));
    }

    for i in 0..dims_np {
        let family =
            relax_family(|k, l| build_m_block(prog, layout, fixed, problem, k, l, i), d, n);
        for (q_idx, expr) in family.into_iter().enumerate() {
            out.push(AssembledCondition::matrix(
                format!("inv-relax[i={i},q={q_idx}]"),
                Family::InvRelax,
                expr,
                eps,
            ));
        }
    }

    for j in 0..problem.constraints.num_rows() {
        let family =
            relax_family(|k, l| build_r_block(prog, layout, fixed, problem, k, l, j), d, n);
        for (q_idx, expr) in family.into_iter().enumerate() {
            out.push(AssembledCondition::matrix(
                format!("sys-relax[j={j},q={q_idx}]"),
                Family::SysRelax,
                expr,
                eps,
            ));
        }
    }

    if problem.performance.enabled {
        let family = relax_family(|k, l| build_n_block(prog, layout, fixed, problem, k, l), d, n);
        for (q_idx, expr) in family.into_iter().enumerate() {
            out.push(AssembledCondition::matrix(
                format!("perf-decay[q={q_idx}]"),
                Family::PerfDecay,
                expr,
                eps,
            ));
        }
        let gamma_bound = problem.performance.gamma;
        let family = relax_family(
            |k, l| build_l_block(prog, layout, fixed, problem, k, l, gamma_bound),
            d,
            n,
        );
        for (q_idx, expr) in family.into_iter().enumerate() {
            out.push(AssembledCondition::matrix(
                format!("perf-level[q={q_idx}]"),
                Family::PerfLevel,
                expr,
                eps,
            ));
        }
    }
    Ok(out)
}

/// Stage-two conditions with variable per-vertex face matrices: the
/// per-vertex corner conditions, the inverse-parameterized budget
/// blocks, the relaxed families, and the proxy coupling blocks.
pub fn assemble_theorem2(
    prog: &ConicProgram,
    problem: &ProblemSpec,
    layout: &DecisionLayout,
    fixed: &FixedPoint,
    d: u32,
    eps: f64,
) -> Result<Vec<AssembledCondition>, LmiError> {
    if layout.stage != Stage::Two {
        return Err(LmiError::StageMismatch);
    }
    check_degree(d)?;
    let dims_np = layout.phi.len();
    let n = problem.system.num_vertices();
    let n_x = problem.system.n_x;
    let n_p = dims_np;
    let w = fixed.w.as_ref().expect("stage-two fixed point carries W");
    let mut out = Vec::new();

    for i in 0..n_p {
        let y = &fixed.y[i];
        let he_wy = w.transpose() * y;
        let corner = MatExpr::from_const(&(&he_wy + he_wy.transpose()))
            .sub(&prog.var_expr(layout.x[i]).mul_left(&y.transpose()).mul_right(y));
        for k in 0..n {
            let e_row = DMatrix::from_fn(1, n_p, |_, c| if c == i { 1.0 } else { 0.0 });
            let row = prog.var_expr(layout.p[k]).mul_left(&e_row);
            let mut blk = MatExpr::zeros(n_x + 1, n_x + 1);
            blk.set_block(0, 0, &corner);
            blk.set_block(n_x, 0, &row);
            blk.set_block(0, n_x, &row.transpose());
            blk.set(n_x, n_x, prog.scalar_expr(layout.phi[i]));
            out.push(AssembledCondition::matrix(
                format!("inv-corner[i={i},k={k}]"),
                Family::InvCorner,
                blk,
                eps,
            ));
        }
    }

    for i in 0..n_p {
        // [[psi_i - 1' gamma_bar 1, psi_i 1'], [psi_i 1, lambda_tilde]] >= 0
        let mut blk = MatExpr::zeros(1 + n_p, 1 + n_p);
        blk.set(0, 0, prog.scalar_expr(layout.phi[i]).sub(&prog.diag_sum(layout.gamma[i])));
        let ones = DMatrix::from_element(n_p, 1, 1.0);
        let col = prog.scalar_times_const(layout.phi[i], &ones);
        blk.set_block(1, 0, &col);
        blk.set_block(0, 1, &col.transpose());
        blk.set_block(1, 1, &prog.var_expr(layout.lambda[i]));
        out.push(AssembledCondition::matrix(
            format!("inv-budget[i={i}]"),
            Family::InvBudget,
            blk,
            0.0,
        ));
    }

    for i in 0..n_p {
        let family =
            relax_family(|k, l| build_m_block(prog, layout, fixed, problem, k, l, i), d, n);
        for (q_idx, expr) in family.into_iter().enumerate() {
            out.push(AssembledCondition::matrix(
                format!("inv-relax[i={i},q={q_idx}]"),
                Family::InvRelax,
                expr,
                eps,
            ));
        }
    }

    for j in 0..problem.constraints.num_rows() {
        let family =
            relax_family(|k, l| build_r_block(prog, layout, fixed, problem, k, l, j), d, n);
        for (q_idx, expr) in family.into_iter().enumerate() {
            out.push(AssembledCondition::matrix(
                format!("sys-relax[j={j},q={q_idx}]"),
                Family::SysRelax,
                expr,
                eps,
            ));
        }
        let mut couple = MatExpr::zeros(2 * n_p, 2 * n_p);
        couple.set_block(0, 0, &prog.var_expr(layout.pi[j]));
        couple.set_block(0, n_p, &MatExpr::identity(n_p));
        couple.set_block(n_p, 0, &MatExpr::identity(n_p));
        couple.set_block(n_p, n_p, &prog.var_expr(layout.pi_tilde[j]));
        out.push(AssembledCondition::matrix(
            format!("couple-row[j={j}]"),
            Family::Coupling,
            couple,
            0.0,
        ));
    }

    if problem.performance.enabled {
        let family = relax_family(|k, l| build_n_block(prog, layout, fixed, problem, k, l), d, n);
        for (q_idx, expr) in family.into_iter().enumerate() {
            out.push(AssembledCondition::matrix(
                format!("perf-decay[q={q_idx}]"),
                Family::PerfDecay,
                expr,
                eps,
            ));
        }
        let gamma_bound = problem.performance.gamma;
        let family = relax_family(
            |k, l| build_l_block(prog, layout, fixed, problem, k, l, gamma_bound),
            d,
            n,
        );
        for (q_idx, expr) in family.into_iter().enumerate() {
            out.push(AssembledCondition::matrix(
                format!("perf-level[q={q_idx}]"),
                Family::PerfLevel,
                expr,
                eps,
            ));
        }
        let upsilon = layout.upsilon.expect("performance enabled");
        let upsilon_tilde = layout.upsilon_tilde.expect("performance enabled");
        let mut couple = MatExpr::zeros(2 * n_p, 2 * n_p);
        couple.set_block(0, 0, &prog.var_expr(upsilon));
        couple.set_block(0, n_p, &MatExpr::identity(n_p));
        couple.set_block(n_p, 0, &MatExpr::identity(n_p));
        couple.set_block(n_p, n_p, &prog.var_expr(upsilon_tilde));
        out.push(AssembledCondition::matrix(
            "couple-level".to_string(),
            Family::Coupling,
            couple,
            0.0,
        ));
    }
    Ok(out)
}
