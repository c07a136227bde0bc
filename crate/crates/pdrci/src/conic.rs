//! Solver-agnostic semidefinite program model and the interior-point
//! backend behind it.
//!
//! A [`ConicProgram`] owns a registry of matrix/scalar decision
//! variables, affine constraints (PSD with margin, linear inequality,
//! linear equality, exponential cones) and one objective. Affine matrix
//! expressions are dense grids of [`LinExpr`] scalars; all products with
//! constant matrices stay affine in the registered scalars.
//!
//! Log-determinant objectives are reduced to a linear objective plus a
//! PSD coupling block and per-diagonal exponential cones before the
//! backend sees the problem (see [`ConicProgram::reduce_logdet`]).

use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettings, DefaultSolver, IPSolver, SolverStatus, SupportedConeT,
};
use nalgebra::{DMatrix, DVector};
use thiserror::Error;

pub type VarId = usize;

#[derive(Debug, Error)]
pub enum ConicError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("variable {0} is not a {1} variable")]
    Kind(VarId, &'static str),
}

#[derive(Debug, Clone)]
pub enum VarKind {
    /// Rectangular matrix, row-major scalar layout.
    Free { rows: usize, cols: usize },
    /// Symmetric matrix, lower-triangle row-major scalar layout.
    Symmetric { dim: usize },
    /// Diagonal matrix with entries bounded below (elementwise).
    DiagPos { dim: usize, lower: f64 },
    /// Single scalar, optionally bounded below.
    Scalar { lower: Option<f64> },
}

impl VarKind {
    fn num_scalars(&self) -> usize {
        match self {
            VarKind::Free { rows, cols } => rows * cols,
            VarKind::Symmetric { dim } => dim * (dim + 1) / 2,
            VarKind::DiagPos { dim, .. } => *dim,
            VarKind::Scalar { .. } => 1,
        }
    }

    fn shape(&self) -> (usize, usize) {
        match self {
            VarKind::Free { rows, cols } => (*rows, *cols),
            VarKind::Symmetric { dim } | VarKind::DiagPos { dim, .. } => (*dim, *dim),
            VarKind::Scalar { .. } => (1, 1),
        }
    }
}

#[derive(Debug, Clone)]
struct VarDef {
    name: String,
    kind: VarKind,
    offset: usize,
}

/// Affine scalar `constant + sum coeff_j * x_j` over registry scalars.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LinExpr {
    pub constant: f64,
    /// Sorted by scalar slot, one entry per slot.
    pub terms: Vec<(usize, f64)>,
}

impl LinExpr {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn constant(c: f64) -> Self {
        Self { constant: c, terms: Vec::new() }
    }

    pub fn term(slot: usize, coeff: f64) -> Self {
        Self { constant: 0.0, terms: vec![(slot, coeff)] }
    }

    pub fn add(&self, other: &LinExpr) -> LinExpr {
        let mut out = LinExpr {
            constant: self.constant + other.constant,
            terms: Vec::with_capacity(self.terms.len() + other.terms.len()),
        };
        let (mut i, mut j) = (0, 0);
        while i < self.terms.len() || j < other.terms.len() {
            let pick_left = j >= other.terms.len()
                || (i < self.terms.len() && self.terms[i].0 <= other.terms[j].0);
            if pick_left && j < other.terms.len() && i < self.terms.len()
                && self.terms[i].0 == other.terms[j].0
            {
                let c = self.terms[i].1 + other.terms[j].1;
                if c != 0.0 {
                    out.terms.push((self.terms[i].0, c));
                }
                i += 1;
                j += 1;
            } else if pick_left {
                out.terms.push(self.terms[i]);
                i += 1;
            } else {
                out.terms.push(other.terms[j]);
                j += 1;
            }
        }
        out
    }

    pub fn sub(&self, other: &LinExpr) -> LinExpr {
        self.add(&other.scale(-1.0))
    }

    pub fn scale(&self, s: f64) -> LinExpr {
        if s == 0.0 {
            return LinExpr::zero();
        }
        LinExpr {
            constant: self.constant * s,
            terms: self.terms.iter().map(|&(k, c)| (k, c * s)).collect(),
        }
    }

    pub fn add_constant(&self, c: f64) -> LinExpr {
        LinExpr { constant: self.constant + c, terms: self.terms.clone() }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.constant + self.terms.iter().map(|&(k, c)| c * x[k]).sum::<f64>()
    }

    pub fn is_zero(&self) -> bool {
        self.constant == 0.0 && self.terms.is_empty()
    }
}

/// Dense affine matrix expression (row-major grid of [`LinExpr`]).
#[derive(Debug, Clone, PartialEq)]
pub struct MatExpr {
    rows: usize,
    cols: usize,
    entries: Vec<LinExpr>,
}

impl MatExpr {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, entries: vec![LinExpr::zero(); rows * cols] }
    }

    pub fn from_const(m: &DMatrix<f64>) -> Self {
        let mut out = Self::zeros(m.nrows(), m.ncols());
        for r in 0..m.nrows() {
            for c in 0..m.ncols() {
                out.entries[r * m.ncols() + c] = LinExpr::constant(m[(r, c)]);
            }
        }
        out
    }

    pub fn identity(n: usize) -> Self {
        Self::from_const(&DMatrix::identity(n, n))
    }

    pub fn nrows(&self) -> usize {
        self.rows
    }

    pub fn ncols(&self) -> usize {
        self.cols
    }

    pub fn at(&self, r: usize, c: usize) -> &LinExpr {
        &self.entries[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, e: LinExpr) {
        self.entries[r * self.cols + c] = e;
    }

    pub fn transpose(&self) -> MatExpr {
        let mut out = MatExpr::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.entries[c * self.rows + r] = self.at(r, c).clone();
            }
        }
        out
    }

    pub fn add(&self, other: &MatExpr) -> MatExpr {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols), "shape mismatch in add");
        let mut out = MatExpr::zeros(self.rows, self.cols);
        for (o, (a, b)) in out.entries.iter_mut().zip(self.entries.iter().zip(&other.entries)) {
            *o = a.add(b);
        }
        out
    }

    pub fn sub(&self, other: &MatExpr) -> MatExpr {
        self.add(&other.scale(-1.0))
    }

    pub fn scale(&self, s: f64) -> MatExpr {
        let mut out = self.clone();
        for e in &mut out.entries {
            *e = e.scale(s);
        }
        out
    }

    /// `c * self` for a constant left factor.
    pub fn mul_left(&self, c: &DMatrix<f64>) -> MatExpr {
        assert_eq!(c.ncols(), self.rows, "shape mismatch in mul_left");
        let mut out = MatExpr::zeros(c.nrows(), self.cols);
        for r in 0..c.nrows() {
            for k in 0..self.rows {
                let w = c[(r, k)];
                if w == 0.0 {
                    continue;
                }
                for cc in 0..self.cols {
                    let cur = out.at(r, cc).add(&self.at(k, cc).scale(w));
                    out.set(r, cc, cur);
                }
            }
        }
        out
    }

    /// `self * c` for a constant right factor.
    pub fn mul_right(&self, c: &DMatrix<f64>) -> MatExpr {
        assert_eq!(self.cols, c.nrows(), "shape mismatch in mul_right");
        let mut out = MatExpr::zeros(self.rows, c.ncols());
        for r in 0..self.rows {
            for k in 0..self.cols {
                let e = self.at(r, k);
                if e.is_zero() {
                    continue;
                }
                for cc in 0..c.ncols() {
                    let w = c[(k, cc)];
                    if w == 0.0 {
                        continue;
                    }
                    let cur = out.at(r, cc).add(&e.scale(w));
                    out.set(r, cc, cur);
                }
            }
        }
        out
    }

    /// `self + self^T` (square only).
    pub fn he(&self) -> MatExpr {
        assert_eq!(self.rows, self.cols, "he() needs a square expression");
        self.add(&self.transpose())
    }

    pub fn set_block(&mut self, r0: usize, c0: usize, block: &MatExpr) {
        assert!(r0 + block.rows <= self.rows && c0 + block.cols <= self.cols, "block out of range");
        for r in 0..block.rows {
            for c in 0..block.cols {
                self.set(r0 + r, c0 + c, block.at(r, c).clone());
            }
        }
    }

    pub fn eval(&self, x: &[f64]) -> DMatrix<f64> {
        DMatrix::from_fn(self.rows, self.cols, |r, c| self.at(r, c).eval(x))
    }

    /// Exact expression-level symmetry: entry (i,j) equals entry (j,i)
    /// term by term.
    pub fn is_symmetric_expr(&self) -> bool {
        if self.rows != self.cols {
            return false;
        }
        for r in 0..self.rows {
            for c in (r + 1)..self.cols {
                if self.at(r, c) != self.at(c, r) {
                    return false;
                }
            }
        }
        true
    }
}

#[derive(Debug, Clone)]
pub enum Objective {
    Feasibility,
    Minimize(LinExpr),
    Maximize(LinExpr),
    MaximizeLogDet(MatExpr),
}

#[derive(Debug, Clone)]
struct PsdBlock {
    label: String,
    expr: MatExpr,
    margin: f64,
}

/// Solver behaviour knobs; `feas_tol` is the post-solve residual gate.
#[derive(Debug, Clone)]
pub struct SolverConfig {
    pub feas_tol: f64,
    pub max_iter: u32,
    pub verbose: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self { feas_tol: 1e-7, max_iter: 400, verbose: false }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    Feasible,
    Infeasible,
    Unbounded,
    NumericalFailure,
}

impl SolveStatus {
    pub fn is_ok(&self) -> bool {
        matches!(self, SolveStatus::Optimal | SolveStatus::Feasible)
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            SolveStatus::Optimal => "optimal",
            SolveStatus::Feasible => "feasible",
            SolveStatus::Infeasible => "infeasible",
            SolveStatus::Unbounded => "unbounded",
            SolveStatus::NumericalFailure => "numerical-failure",
        }
    }
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub status: SolveStatus,
    pub x: Vec<f64>,
    pub objective: f64,
    pub iterations: u32,
    pub solve_time: f64,
    /// Worst constraint violation found when substituting `x` back.
    pub worst_residual: f64,
}

#[derive(Debug, Clone, Default)]
pub struct ConicProgram {
    defs: Vec<VarDef>,
    n_scalars: usize,
    psd: Vec<PsdBlock>,
    lin_ge: Vec<(String, LinExpr)>,
    lin_eq: Vec<(String, LinExpr)>,
    exp_cones: Vec<[LinExpr; 3]>,
    objective: Option<Objective>,
}

impl ConicProgram {
    pub fn new() -> Self {
        Self::default()
    }

    fn push_var(&mut self, name: &str, kind: VarKind) -> VarId {
        let id = self.defs.len();
        let offset = self.n_scalars;
        self.n_scalars += kind.num_scalars();
        self.defs.push(VarDef { name: name.to_string(), kind, offset });
        id
    }

    pub fn free_var(&mut self, name: &str, rows: usize, cols: usize) -> VarId {
        self.push_var(name, VarKind::Free { rows, cols })
    }

    pub fn symmetric_var(&mut self, name: &str, dim: usize) -> VarId {
        self.push_var(name, VarKind::Symmetric { dim })
    }

    pub fn diag_pos_var(&mut self, name: &str, dim: usize, lower: f64) -> VarId {
        self.push_var(name, VarKind::DiagPos { dim, lower })
    }

    pub fn scalar_var(&mut self, name: &str, lower: Option<f64>) -> VarId {
        self.push_var(name, VarKind::Scalar { lower })
    }

    pub fn num_scalars(&self) -> usize {
        self.n_scalars
    }

    pub fn num_vars(&self) -> usize {
        self.defs.len()
    }

    pub fn var_name(&self, id: VarId) -> &str {
        &self.defs[id].name
    }

    pub fn var_shape(&self, id: VarId) -> (usize, usize) {
        self.defs[id].kind.shape()
    }

    /// Scalar slot of entry (r, c); symmetric variables map the upper
    /// mirror onto the lower triangle.
    pub fn entry_slot(&self, id: VarId, r: usize, c: usize) -> usize {
        let def = &self.defs[id];
        match &def.kind {
            VarKind::Free { rows, cols } => {
                assert!(r < *rows && c < *cols);
                def.offset + r * cols + c
            }
            VarKind::Symmetric { dim } => {
                assert!(r < *dim && c < *dim);
                let (i, j) = if r >= c { (r, c) } else { (c, r) };
                def.offset + i * (i + 1) / 2 + j
            }
            VarKind::DiagPos { dim, .. } => {
                assert!(r < *dim && r == c, "diagonal variable has no off-diagonal slots");
                def.offset + r
            }
            VarKind::Scalar { .. } => {
                assert!(r == 0 && c == 0);
                def.offset
            }
        }
    }

    /// Full-shape affine expression of a variable.
    pub fn var_expr(&self, id: VarId) -> MatExpr {
        let def = &self.defs[id];
        let (rows, cols) = def.kind.shape();
        let mut out = MatExpr::zeros(rows, cols);
        match &def.kind {
            VarKind::Free { .. } | VarKind::Symmetric { .. } => {
                for r in 0..rows {
                    for c in 0..cols {
                        out.set(r, c, LinExpr::term(self.entry_slot(id, r, c), 1.0));
                    }
                }
            }
            VarKind::DiagPos { dim, .. } => {
                for k in 0..*dim {
                    out.set(k, k, LinExpr::term(def.offset + k, 1.0));
                }
            }
            VarKind::Scalar { .. } => {
                out.set(0, 0, LinExpr::term(def.offset, 1.0));
            }
        }
        out
    }

    pub fn scalar_expr(&self, id: VarId) -> LinExpr {
        match self.defs[id].kind {
            VarKind::Scalar { .. } => LinExpr::term(self.defs[id].offset, 1.0),
            _ => panic!("scalar_expr on non-scalar variable"),
        }
    }

    /// `scalar_var * c` as a matrix expression.
    pub fn scalar_times_const(&self, id: VarId, c: &DMatrix<f64>) -> MatExpr {
        let slot = self.entry_slot(id, 0, 0);
        let mut out = MatExpr::zeros(c.nrows(), c.ncols());
        for r in 0..c.nrows() {
            for cc in 0..c.ncols() {
                if c[(r, cc)] != 0.0 {
                    out.set(r, cc, LinExpr::term(slot, c[(r, cc)]));
                }
            }
        }
        out
    }

    /// Sum of all diagonal entries of a diagonal-positive variable.
    pub fn diag_sum(&self, id: VarId) -> LinExpr {
        let (dim, _) = self.var_shape(id);
        let mut e = LinExpr::zero();
        for k in 0..dim {
            e = e.add(&LinExpr::term(self.entry_slot(id, k, k), 1.0));
        }
        e
    }

    pub fn add_psd(&mut self, label: &str, expr: MatExpr, margin: f64) {
        assert_eq!(expr.nrows(), expr.ncols(), "PSD constraint must be square");
        self.psd.push(PsdBlock { label: label.to_string(), expr, margin });
    }

    /// `expr >= 0`.
    pub fn add_lin_ge(&mut self, label: &str, expr: LinExpr) {
        self.lin_ge.push((label.to_string(), expr));
    }

    /// `expr == 0`.
    pub fn add_lin_eq(&mut self, label: &str, expr: LinExpr) {
        self.lin_eq.push((label.to_string(), expr));
    }

    pub fn set_objective(&mut self, obj: Objective) {
        self.objective = Some(obj);
    }

    pub fn num_psd(&self) -> usize {
        self.psd.len()
    }

    pub fn num_lin_ge(&self) -> usize {
        self.lin_ge.len()
    }

    pub fn psd_labels(&self) -> impl Iterator<Item = &str> {
        self.psd.iter().map(|b| b.label.as_str())
    }

    /// Replaces a log-determinant objective target by its conic
    /// epigraph: a lower-triangular factor `T`, the coupling block
    /// `[[expr, T], [T', diag(T)]] >= 0`, and one exponential cone
    /// `t_i <= log T_ii` per diagonal. Returns the linear objective
    /// term `sum t_i`, which equals `logdet(expr)` at the optimum.
    pub fn reduce_logdet(&mut self, expr: &MatExpr) -> LinExpr {
        let m = expr.nrows();
        assert_eq!(m, expr.ncols(), "logdet target must be square");
        let tri = self.free_var("logdet.T", m * (m + 1) / 2, 1);
        let t = self.free_var("logdet.t", m, 1);

        let mut t_mat = MatExpr::zeros(m, m);
        let mut idx = 0;
        for i in 0..m {
            for j in 0..=i {
                t_mat.set(i, j, LinExpr::term(self.entry_slot(tri, idx, 0), 1.0));
                idx += 1;
            }
        }
        let mut coupling = MatExpr::zeros(2 * m, 2 * m);
        coupling.set_block(0, 0, expr);
        coupling.set_block(0, m, &t_mat);
        coupling.set_block(m, 0, &t_mat.transpose());
        let mut diag_t = MatExpr::zeros(m, m);
        for i in 0..m {
            diag_t.set(i, i, t_mat.at(i, i).clone());
        }
        coupling.set_block(m, m, &diag_t);
        self.add_psd("logdet.coupling", coupling, 0.0);

        let mut obj = LinExpr::zero();
        for i in 0..m {
            let ti = LinExpr::term(self.entry_slot(t, i, 0), 1.0);
            self.exp_cones.push([ti.clone(), LinExpr::constant(1.0), t_mat.at(i, i).clone()]);
            obj = obj.add(&ti);
        }
        obj
    }

    /// Debug dump: variable list then one line per constraint with cone
    /// tag, dimension and the nonzero triplets `entry:slot:coeff`.
    pub fn dump(&self) -> String {
        use std::fmt::Write;
        let mut s = String::new();
        for (id, def) in self.defs.iter().enumerate() {
            let (r, c) = def.kind.shape();
            writeln!(s, "var {} {} {}x{} offset {} len {}", id, def.name, r, c, def.offset, def.kind.num_scalars()).unwrap();
        }
        let fmt_lin = |e: &LinExpr| {
            let mut out = format!("const:{:.17e}", e.constant);
            for (k, c) in &e.terms {
                out.push_str(&format!(" {k}:{c:.17e}"));
            }
            out
        };
        for (label, e) in &self.lin_eq {
            writeln!(s, "zero 1 {} | {}", label, fmt_lin(e)).unwrap();
        }
        for (label, e) in &self.lin_ge {
            writeln!(s, "nonneg 1 {} | {}", label, fmt_lin(e)).unwrap();
        }
        for blk in &self.psd {
            write!(s, "psd {} margin {:.3e} {} |", blk.expr.nrows(), blk.margin, blk.label).unwrap();
            for r in 0..blk.expr.nrows() {
                for c in 0..blk.expr.ncols() {
                    let e = blk.expr.at(r, c);
                    if !e.is_zero() {
                        write!(s, " ({r},{c})[{}]", fmt_lin(e)).unwrap();
                    }
                }
            }
            writeln!(s).unwrap();
        }
        for cone in &self.exp_cones {
            writeln!(s, "exp 3 | {} ; {} ; {}", fmt_lin(&cone[0]), fmt_lin(&cone[1]), fmt_lin(&cone[2])).unwrap();
        }
        s
    }

    pub fn solve(&self, config: &SolverConfig) -> Solution {
        if let Some(Objective::MaximizeLogDet(target)) = &self.objective {
            let target = target.clone();
            let mut lowered = self.clone();
            let obj = lowered.reduce_logdet(&target);
            lowered.objective = Some(Objective::Maximize(obj));
            return lowered.solve(config);
        }
        self.solve_lowered(config)
    }

    fn solve_lowered(&self, config: &SolverConfig) -> Solution {
        let n = self.n_scalars;
        let mut q = vec![0.0; n];
        let mut obj_expr = LinExpr::zero();
        let mut obj_sign = 0.0;
        match &self.objective {
            Some(Objective::Minimize(e)) => {
                for &(k, c) in &e.terms {
                    q[k] += c;
                }
                obj_expr = e.clone();
                obj_sign = 1.0;
            }
            Some(Objective::Maximize(e)) => {
                for &(k, c) in &e.terms {
                    q[k] -= c;
                }
                obj_expr = e.clone();
                obj_sign = -1.0;
            }
            Some(Objective::MaximizeLogDet(_)) => unreachable!("reduced before lowering"),
            Some(Objective::Feasibility) | None => {}
        }
        let _ = obj_sign;

        // rows in cone order: zero, nonneg (constraints then bounds), psd, exp
        let mut triplets: Vec<(usize, usize, f64)> = Vec::new();
        let mut b: Vec<f64> = Vec::new();
        let mut cones: Vec<SupportedConeT<f64>> = Vec::new();
        let mut row = 0usize;

        let push_expr = |expr: &LinExpr, scale: f64, triplets: &mut Vec<(usize, usize, f64)>, b: &mut Vec<f64>, row: &mut usize| {
            // s_row = scale * expr  =>  b = scale*const, A = -scale*coeff
            b.push(scale * expr.constant);
            for &(k, c) in &expr.terms {
                triplets.push((*row, k, -scale * c));
            }
            *row += 1;
        };

        if !self.lin_eq.is_empty() {
            for (_, e) in &self.lin_eq {
                push_expr(e, 1.0, &mut triplets, &mut b, &mut row);
            }
            cones.push(SupportedConeT::ZeroConeT(self.lin_eq.len()));
        }

        let mut bound_rows = 0usize;
        for def in &self.defs {
            match def.kind {
                VarKind::DiagPos { dim, lower } => {
                    for k in 0..dim {
                        let e = LinExpr::term(def.offset + k, 1.0).add_constant(-lower);
                        push_expr(&e, 1.0, &mut triplets, &mut b, &mut row);
                        bound_rows += 1;
                    }
                }
                VarKind::Scalar { lower: Some(lower) } => {
                    let e = LinExpr::term(def.offset, 1.0).add_constant(-lower);
                    push_expr(&e, 1.0, &mut triplets, &mut b, &mut row);
                    bound_rows += 1;
                }
                _ => {}
            }
        }
        let nonneg_total = self.lin_ge.len() + bound_rows;
        for (_, e) in &self.lin_ge {
            push_expr(e, 1.0, &mut triplets, &mut b, &mut row);
        }
        if nonneg_total > 0 {
            cones.push(SupportedConeT::NonnegativeConeT(nonneg_total));
        }

        let sqrt2 = 2.0f64.sqrt();
        for blk in &self.psd {
            let m = blk.expr.nrows();
            // svec: upper triangle column-major, off-diagonals scaled by sqrt(2)
            for c in 0..m {
                for r in 0..=c {
                    let e = blk.expr.at(r, c);
                    let (scale, shift) = if r == c { (1.0, -blk.margin) } else { (sqrt2, 0.0) };
                    let shifted = e.add_constant(shift);
                    push_expr(&shifted, scale, &mut triplets, &mut b, &mut row);
                }
            }
            cones.push(SupportedConeT::PSDTriangleConeT(m));
        }

        for cone in &self.exp_cones {
            for e in cone {
                push_expr(e, 1.0, &mut triplets, &mut b, &mut row);
            }
            cones.push(SupportedConeT::ExponentialConeT());
        }

        let a = csc_from_triplets(row, n, &mut triplets);
        let p = CscMatrix::zeros((n, n));
        // tightened below the 1e-7 residual contract, with the stock
        // reduced-accuracy thresholds as a fallback
        let settings = DefaultSettings {
            verbose: config.verbose,
            max_iter: config.max_iter,
            tol_feas: 1e-9,
            tol_gap_abs: 1e-9,
            tol_gap_rel: 1e-9,
            ..DefaultSettings::default()
        };
        let mut solver = DefaultSolver::new(&p, &q, &a, &b, &cones, settings);
        solver.solve();

        let raw = solver.solution.status;
        let x = solver.solution.x.clone();
        let mut status = match raw {
            SolverStatus::Solved => SolveStatus::Optimal,
            SolverStatus::AlmostSolved => SolveStatus::Feasible,
            SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => {
                SolveStatus::Infeasible
            }
            SolverStatus::DualInfeasible | SolverStatus::AlmostDualInfeasible => {
                SolveStatus::Unbounded
            }
            _ => SolveStatus::NumericalFailure,
        };

        let mut worst = 0.0f64;
        if status.is_ok() {
            worst = self.worst_violation(&x);
            if worst > config.feas_tol {
                status = SolveStatus::NumericalFailure;
            }
        }

        let objective = if status.is_ok() { obj_expr.eval(&x) } else { f64::NAN };
        Solution {
            status,
            x,
            objective,
            iterations: solver.solution.iterations,
            solve_time: solver.solution.solve_time,
            worst_residual: worst,
        }
    }

    /// Largest constraint violation when substituting `x`, measured
    /// relative to the constraint's evaluated magnitude
    /// (`violation / (1 + |value|)`), matching the scaled accuracy an
    /// interior-point backend actually delivers.
    pub fn worst_violation(&self, x: &[f64]) -> f64 {
        let mut worst = 0.0f64;
        for (_, e) in &self.lin_eq {
            let v = e.eval(x);
            worst = worst.max(v.abs() / (1.0 + v.abs()));
        }
        for (_, e) in &self.lin_ge {
            let v = e.eval(x);
            worst = worst.max(-v / (1.0 + v.abs()));
        }
        for def in &self.defs {
            match def.kind {
                VarKind::DiagPos { dim, lower } => {
                    for k in 0..dim {
                        worst = worst.max(lower - x[def.offset + k]);
                    }
                }
                VarKind::Scalar { lower: Some(lower) } => {
                    worst = worst.max(lower - x[def.offset]);
                }
                _ => {}
            }
        }
        for blk in &self.psd {
            let v = blk.expr.eval(x);
            let sym = (&v + v.transpose()) * 0.5;
            let m = sym.nrows();
            let scale = 1.0 + sym.amax();
            let shifted = sym - DMatrix::identity(m, m) * blk.margin;
            let eig = shifted.symmetric_eigenvalues();
            let min_eig = eig.iter().cloned().fold(f64::INFINITY, f64::min);
            worst = worst.max(-min_eig / scale);
        }
        for cone in &self.exp_cones {
            let (xx, yy, zz) = (cone[0].eval(x), cone[1].eval(x), cone[2].eval(x));
            if yy > 0.0 {
                worst = worst.max((yy * (xx / yy).exp() - zz) / (1.0 + zz.abs()));
            } else {
                worst = worst.max(-yy);
            }
        }
        worst
    }

    /// Extract a variable's value as a full matrix.
    pub fn value(&self, id: VarId, x: &[f64]) -> DMatrix<f64> {
        let def = &self.defs[id];
        let (rows, cols) = def.kind.shape();
        match &def.kind {
            VarKind::Free { .. } => {
                DMatrix::from_fn(rows, cols, |r, c| x[def.offset + r * cols + c])
            }
            VarKind::Symmetric { dim } => DMatrix::from_fn(*dim, *dim, |r, c| {
                let (i, j) = if r >= c { (r, c) } else { (c, r) };
                x[def.offset + i * (i + 1) / 2 + j]
            }),
            VarKind::DiagPos { dim, .. } => {
                DMatrix::from_diagonal(&DVector::from_fn(*dim, |k, _| x[def.offset + k]))
            }
            VarKind::Scalar { .. } => DMatrix::from_element(1, 1, x[def.offset]),
        }
    }

    pub fn scalar_value(&self, id: VarId, x: &[f64]) -> f64 {
        x[self.defs[id].offset]
    }

    pub fn diag_value(&self, id: VarId, x: &[f64]) -> DVector<f64> {
        let def = &self.defs[id];
        match def.kind {
            VarKind::DiagPos { dim, .. } => DVector::from_fn(dim, |k, _| x[def.offset + k]),
            _ => panic!("diag_value on non-diagonal variable"),
        }
    }
}

fn csc_from_triplets(m: usize, n: usize, triplets: &mut Vec<(usize, usize, f64)>) -> CscMatrix<f64> {
    triplets.sort_by(|a, b| (a.1, a.0).cmp(&(b.1, b.0)));
    let mut colptr = Vec::with_capacity(n + 1);
    let mut rowval = Vec::with_capacity(triplets.len());
    let mut nzval = Vec::with_capacity(triplets.len());
    let mut idx = 0usize;
    for col in 0..n {
        colptr.push(rowval.len());
        while idx < triplets.len() && triplets[idx].1 == col {
            // merge duplicates
            let (r, c, mut v) = triplets[idx];
            idx += 1;
            while idx < triplets.len() && triplets[idx].1 == c && triplets[idx].0 == r {
                v += triplets[idx].2;
                idx += 1;
            }
            if v != 0.0 {
                rowval.push(r);
                nzval.push(v);
            }
        }
    }
    colptr.push(rowval.len());
    CscMatrix::new(m, n, colptr, rowval, nzval)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn scalar_lower_bound_minimum() {
        let mut prog = ConicProgram::new();
        let x = prog.scalar_var("x", None);
        prog.add_lin_ge("x>=1", prog.scalar_expr(x).add_constant(-1.0));
        prog.set_objective(Objective::Minimize(prog.scalar_expr(x)));
        let sol = prog.solve(&SolverConfig::default());
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert_relative_eq!(sol.objective, 1.0, epsilon = 1e-6);
    }

    #[test]
    fn infeasible_pair_detected() {
        let mut prog = ConicProgram::new();
        let x = prog.scalar_var("x", None);
        prog.add_lin_ge("x>=1", prog.scalar_expr(x).add_constant(-1.0));
        prog.add_lin_ge("x<=0", prog.scalar_expr(x).scale(-1.0));
        prog.set_objective(Objective::Feasibility);
        let sol = prog.solve(&SolverConfig::default());
        assert_eq!(sol.status, SolveStatus::Infeasible);
    }

    #[test]
    fn logdet_diagonal_cap() {
        // maximize logdet(Z) s.t. Z <= diag(4, 9), Z >= 0: optimum diag(4,9), ln 36
        let mut prog = ConicProgram::new();
        let z = prog.symmetric_var("Z", 2);
        let z_expr = prog.var_expr(z);
        let cap = MatExpr::from_const(&DMatrix::from_diagonal(&DVector::from_vec(vec![4.0, 9.0])));
        prog.add_psd("Z<=cap", cap.sub(&z_expr), 0.0);
        prog.add_psd("Z>=0", z_expr.clone(), 0.0);
        prog.set_objective(Objective::MaximizeLogDet(z_expr));
        let sol = prog.solve(&SolverConfig::default());
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert_relative_eq!(sol.objective, 36.0f64.ln(), epsilon = 1e-5);
        let z_val = prog.value(z, &sol.x);
        assert_relative_eq!(z_val[(0, 0)], 4.0, epsilon = 1e-4);
        assert_relative_eq!(z_val[(1, 1)], 9.0, epsilon = 1e-4);
    }

    #[test]
    fn logdet_constant_identity_is_zero() {
        let mut prog = ConicProgram::new();
        prog.set_objective(Objective::MaximizeLogDet(MatExpr::identity(3)));
        let sol = prog.solve(&SolverConfig::default());
        assert!(sol.status.is_ok());
        assert_relative_eq!(sol.objective, 0.0, epsilon = 1e-5);
    }

    #[test]
    fn logdet_one_dimensional_reduces_to_log() {
        // max t s.t. t <= log z, z <= 7
        let mut prog = ConicProgram::new();
        let z = prog.scalar_var("z", Some(1e-9));
        prog.add_lin_ge("z<=7", prog.scalar_expr(z).scale(-1.0).add_constant(7.0));
        let z_mat = prog.var_expr(z);
        prog.set_objective(Objective::MaximizeLogDet(z_mat));
        let sol = prog.solve(&SolverConfig::default());
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert_relative_eq!(sol.objective, 7.0f64.ln(), epsilon = 1e-5);
    }

    #[test]
    fn logdet_exact_on_random_constant_psd() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for n in 1..=5usize {
            let a = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
            let m = &a * a.transpose() + DMatrix::identity(n, n) * 0.5;
            let mut prog = ConicProgram::new();
            prog.set_objective(Objective::MaximizeLogDet(MatExpr::from_const(&m)));
            let sol = prog.solve(&SolverConfig::default());
            assert!(sol.status.is_ok(), "n={n}");
            let expect = m.determinant().ln();
            assert_relative_eq!(sol.objective, expect, epsilon = 1e-6, max_relative = 1e-6);
        }
    }

    #[test]
    fn psd_offdiagonal_orientation() {
        // min x22 s.t. X >= C with C = [[2,1],[1,2]] forces X12 = 1 exactly at optimum corner.
        let c = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]);
        let mut prog = ConicProgram::new();
        let xv = prog.symmetric_var("X", 2);
        let xe = prog.var_expr(xv);
        prog.add_psd("X>=C", xe.sub(&MatExpr::from_const(&c)), 0.0);
        let mut trace = LinExpr::zero();
        for k in 0..2 {
            trace = trace.add(&LinExpr::term(prog.entry_slot(xv, k, k), 1.0));
        }
        prog.set_objective(Objective::Minimize(trace));
        let sol = prog.solve(&SolverConfig::default());
        assert!(sol.status.is_ok());
        let x_val = prog.value(xv, &sol.x);
        assert_relative_eq!(x_val[(0, 1)], 1.0, epsilon = 1e-5);
        assert_relative_eq!(x_val[(0, 0)], 2.0, epsilon = 1e-5);
    }

    #[test]
    fn solution_round_trip_within_tolerance() {
        let mut prog = ConicProgram::new();
        let x = prog.symmetric_var("X", 3);
        let xe = prog.var_expr(x);
        prog.add_psd("X-I>=0", xe.sub(&MatExpr::identity(3)), 0.0);
        let mut trace = LinExpr::zero();
        for k in 0..3 {
            trace = trace.add(&LinExpr::term(prog.entry_slot(x, k, k), 1.0));
        }
        prog.set_objective(Objective::Minimize(trace));
        let sol = prog.solve(&SolverConfig::default());
        assert!(sol.status.is_ok());
        assert!(sol.worst_residual <= 1e-7, "residual {}", sol.worst_residual);
    }

    #[test]
    fn unbounded_detected() {
        let mut prog = ConicProgram::new();
        let x = prog.scalar_var("x", None);
        prog.set_objective(Objective::Maximize(prog.scalar_expr(x)));
        let sol = prog.solve(&SolverConfig::default());
        assert_eq!(sol.status, SolveStatus::Unbounded);
    }

    #[test]
    fn expression_symmetry_detection() {
        let mut prog = ConicProgram::new();
        let w = prog.free_var("W", 2, 2);
        let we = prog.var_expr(w);
        assert!(!we.is_symmetric_expr());
        assert!(we.he().is_symmetric_expr());
        let s = prog.symmetric_var("S", 3);
        assert!(prog.var_expr(s).is_symmetric_expr());
    }
}
