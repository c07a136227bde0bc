//! The conic layer on its own: a determinant-maximization program is
//! reduced to a linear objective with a triangular-factor coupling
//! block and per-diagonal exponential cones, then handed to the
//! interior-point backend.

use nalgebra::{DMatrix, DVector};
use pdrci::conic::{ConicProgram, MatExpr, Objective, SolverConfig};

fn main() {
    // maximize logdet(Z) s.t. 0 <= Z <= diag(4, 9): optimum diag(4, 9)
    let mut prog = ConicProgram::new();
    let z = prog.symmetric_var("Z", 2);
    let z_expr = prog.var_expr(z);
    let cap = MatExpr::from_const(&DMatrix::from_diagonal(&DVector::from_vec(vec![4.0, 9.0])));
    prog.add_psd("upper", cap.sub(&z_expr), 0.0);
    prog.add_psd("lower", z_expr.clone(), 0.0);
    prog.set_objective(Objective::MaximizeLogDet(z_expr));

    let sol = prog.solve(&SolverConfig::default());
    let z_val = prog.value(z, &sol.x);
    println!("status {:?} after {} iterations", sol.status, sol.iterations);
    println!("objective {:.6} (ln 36 = {:.6})", sol.objective, 36f64.ln());
    println!("Z = [[{:.4}, {:.4}], [{:.4}, {:.4}]]", z_val[(0, 0)], z_val[(0, 1)], z_val[(1, 0)], z_val[(1, 1)]);
    println!("worst residual {:.2e}", sol.worst_residual);

    // the same interface expresses plain linear programs
    let mut lp = ConicProgram::new();
    let x = lp.scalar_var("x", None);
    lp.add_lin_ge("x >= 1", lp.scalar_expr(x).add_constant(-1.0));
    lp.set_objective(Objective::Minimize(lp.scalar_expr(x)));
    let sol = lp.solve(&SolverConfig::default());
    println!("LP sanity: min x s.t. x >= 1 -> {:.6} ({:?})", sol.objective, sol.status);
}
