//! Polytope representations and computations: parameter-dependent set
//! slices, membership, the vertex-slice intersection, bounding boxes,
//! Monte-Carlo volume, boundary sampling and 2-D vertex enumeration.

use crate::conic::{ConicProgram, LinExpr, Objective, SolveStatus, SolverConfig};
use crate::model::{ConstraintData, SimplexPoint};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("shape matrix W is singular")]
    SingularW,
    #[error("polytope is unbounded")]
    Unbounded,
    #[error("polytope is empty or degenerate")]
    EmptyOrDegenerate,
    #[error("rejection sampling cap of {0} attempts exceeded")]
    SamplingCap(usize),
    #[error("linear program failed: {0}")]
    Lp(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
}

/// Halfspace intersection `{x : F x <= g}`.
#[derive(Debug, Clone, PartialEq)]
pub struct HPolytope {
    pub f: DMatrix<f64>,
    pub g: DVector<f64>,
}

impl HPolytope {
    pub fn dim(&self) -> usize {
        self.f.ncols()
    }

    pub fn num_rows(&self) -> usize {
        self.f.nrows()
    }
}

/// Parameter-dependent polytope `{x : -1 <= P(xi) W^-1 x <= 1}` with
/// `P(xi)` affine over the simplex vertices.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamPolytope {
    pub p: Vec<DMatrix<f64>>,
    pub w: DMatrix<f64>,
}

impl ParamPolytope {
    pub fn n_p(&self) -> usize {
        self.p[0].nrows()
    }

    pub fn n_x(&self) -> usize {
        self.w.nrows()
    }

    pub fn num_vertices(&self) -> usize {
        self.p.len()
    }

    /// `P(xi)`, the convex combination of the face matrices.
    pub fn p_at(&self, xi: &SimplexPoint) -> Result<DMatrix<f64>, GeometryError> {
        if xi.len() != self.p.len() {
            return Err(GeometryError::Dimension(format!(
                "expected {} simplex weights, got {}",
                self.p.len(),
                xi.len()
            )));
        }
        let mut acc = DMatrix::zeros(self.n_p(), self.n_x());
        for (w, pk) in xi.weights().iter().zip(&self.p) {
            acc += pk * *w;
        }
        Ok(acc)
    }

    pub fn w_inverse(&self) -> Result<DMatrix<f64>, GeometryError> {
        self.w.clone().try_inverse().ok_or(GeometryError::SingularW)
    }
}

/// Axis-aligned box.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundingBox {
    pub lo: DVector<f64>,
    pub hi: DVector<f64>,
}

impl BoundingBox {
    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn volume(&self) -> f64 {
        self.lo.iter().zip(self.hi.iter()).map(|(l, h)| h - l).product()
    }

    pub fn contains(&self, x: &DVector<f64>, tol: f64) -> bool {
        (0..self.dim()).all(|i| x[i] >= self.lo[i] - tol && x[i] <= self.hi[i] + tol)
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> DVector<f64> {
        DVector::from_fn(self.dim(), |i, _| rng.gen_range(self.lo[i]..=self.hi[i]))
    }
}

// --- linear programs over H-polytopes --------------------------------------

enum LpOutcome {
    Optimal(f64),
    Unbounded,
    Infeasible,
    Failure(String),
}

/// max c'x s.t. Fx <= g
fn solve_lp(c: &DVector<f64>, f: &DMatrix<f64>, g: &DVector<f64>) -> LpOutcome {
    let mut prog = ConicProgram::new();
    let x = prog.free_var("x", f.ncols(), 1);
    for r in 0..f.nrows() {
        let mut e = LinExpr::constant(g[r]);
        for cidx in 0..f.ncols() {
            if f[(r, cidx)] != 0.0 {
                e = e.add(&LinExpr::term(prog.entry_slot(x, cidx, 0), -f[(r, cidx)]));
            }
        }
        prog.add_lin_ge(&format!("row{r}"), e);
    }
    let mut obj = LinExpr::zero();
    for cidx in 0..f.ncols() {
        if c[cidx] != 0.0 {
            obj = obj.add(&LinExpr::term(prog.entry_slot(x, cidx, 0), c[cidx]));
        }
    }
    prog.set_objective(Objective::Maximize(obj));
    let sol = prog.solve(&SolverConfig::default());
    match sol.status {
        SolveStatus::Optimal | SolveStatus::Feasible => LpOutcome::Optimal(sol.objective),
        SolveStatus::Unbounded => LpOutcome::Unbounded,
        SolveStatus::Infeasible => LpOutcome::Infeasible,
        SolveStatus::NumericalFailure => LpOutcome::Failure("numerical failure".into()),
    }
}

/// Whether `{x : h_x x <= 1}` is bounded (per-axis LPs).
pub fn state_set_bounded(h_x: &DMatrix<f64>) -> bool {
    let n = h_x.ncols();
    let ones = DVector::from_element(h_x.nrows(), 1.0);
    for i in 0..n {
        for sign in [1.0, -1.0] {
            let mut c = DVector::zeros(n);
            c[i] = sign;
            match solve_lp(&c, h_x, &ones) {
                LpOutcome::Optimal(_) => {}
                _ => return false,
            }
        }
    }
    true
}

/// Tight axis-aligned box around `{x : F x <= g}`.
pub fn hpolytope_bounding_box(poly: &HPolytope) -> Result<BoundingBox, GeometryError> {
    let n = poly.dim();
    let mut lo = DVector::zeros(n);
    let mut hi = DVector::zeros(n);
    for i in 0..n {
        for (sign, out) in [(1.0, &mut hi), (-1.0, &mut lo)] {
            let mut c = DVector::zeros(n);
            c[i] = sign;
            match solve_lp(&c, &poly.f, &poly.g) {
                LpOutcome::Optimal(v) => out[i] = sign * v,
                LpOutcome::Unbounded => return Err(GeometryError::Unbounded),
                LpOutcome::Infeasible => return Err(GeometryError::EmptyOrDegenerate),
                LpOutcome::Failure(msg) => return Err(GeometryError::Lp(msg)),
            }
        }
    }
    Ok(BoundingBox { lo, hi })
}

/// Outer box around the state constraint set `{x : H_x x <= 1}`.
pub fn bounding_box(constraints: &ConstraintData) -> Result<BoundingBox, GeometryError> {
    let ones = DVector::from_element(constraints.h_x.nrows(), 1.0);
    hpolytope_bounding_box(&HPolytope { f: constraints.h_x.clone(), g: ones })
}

/// The slice `S(xi) = {x : -1 <= P(xi) W^-1 x <= 1}` in H-form
/// (2 n_p rows).
pub fn slice(pp: &ParamPolytope, xi: &SimplexPoint) -> Result<HPolytope, GeometryError> {
    let w_inv = pp.w_inverse()?;
    let rows = pp.p_at(xi)? * w_inv;
    let n_p = rows.nrows();
    let mut f = DMatrix::zeros(2 * n_p, pp.n_x());
    f.view_mut((0, 0), (n_p, pp.n_x())).copy_from(&rows);
    f.view_mut((n_p, 0), (n_p, pp.n_x())).copy_from(&(-&rows));
    Ok(HPolytope { f, g: DVector::from_element(2 * n_p, 1.0) })
}

/// The parameter-independent set obtained by intersecting all vertex
/// slices (2 n_p N_xi rows). Intersecting the vertex slices equals
/// intersecting over the whole simplex, since each row of
/// `P(xi) W^-1` is a convex combination of the vertex rows.
pub fn robust_intersection(pp: &ParamPolytope) -> Result<HPolytope, GeometryError> {
    let n = pp.num_vertices();
    let mut blocks = Vec::with_capacity(n);
    for k in 0..n {
        blocks.push(slice(pp, &SimplexPoint::vertex(k, n))?);
    }
    let rows: usize = blocks.iter().map(|b| b.num_rows()).sum();
    let mut f = DMatrix::zeros(rows, pp.n_x());
    let mut g = DVector::zeros(rows);
    let mut at = 0;
    for b in blocks {
        f.view_mut((at, 0), (b.num_rows(), pp.n_x())).copy_from(&b.f);
        g.view_mut((at, 0), (b.num_rows(), 1)).copy_from(&b.g);
        at += b.num_rows();
    }
    Ok(HPolytope { f, g })
}

/// `F x <= g + tol` elementwise.
pub fn membership(poly: &HPolytope, x: &DVector<f64>, tol: f64) -> bool {
    let vals = &poly.f * x;
    (0..poly.num_rows()).all(|r| vals[r] <= poly.g[r] + tol)
}

/// The 2^n box corners plus `extra` boundary points uniform on the box
/// surface, deterministic per seed.
pub fn box_vertices_and_boundary_samples(
    b: &BoundingBox,
    extra: usize,
    seed: u64,
) -> Vec<DVector<f64>> {
    let n = b.dim();
    let mut out = Vec::with_capacity((1usize << n) + extra);
    for mask in 0..(1usize << n) {
        out.push(DVector::from_fn(n, |i, _| {
            if mask >> i & 1 == 1 {
                b.hi[i]
            } else {
                b.lo[i]
            }
        }));
    }
    if extra == 0 {
        return out;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // area-weighted face choice keeps the surface measure uniform
    let mut face_area = Vec::with_capacity(n);
    for i in 0..n {
        let area: f64 = (0..n).filter(|&j| j != i).map(|j| b.hi[j] - b.lo[j]).product();
        face_area.push(area.max(0.0));
    }
    let total: f64 = 2.0 * face_area.iter().sum::<f64>();
    for _ in 0..extra {
        let mut pick = rng.gen::<f64>() * total;
        let mut axis = 0;
        let mut side_hi = false;
        'outer: for i in 0..n {
            for hi in [false, true] {
                if pick < face_area[i] {
                    axis = i;
                    side_hi = hi;
                    break 'outer;
                }
                pick -= face_area[i];
            }
        }
        out.push(DVector::from_fn(n, |j, _| {
            if j == axis {
                if side_hi {
                    b.hi[j]
                } else {
                    b.lo[j]
                }
            } else {
                rng.gen_range(b.lo[j]..=b.hi[j])
            }
        }));
    }
    out
}

/// Monte-Carlo volume estimate with its binomial standard error.
#[derive(Debug, Clone, Copy)]
pub struct VolumeEstimate {
    pub value: f64,
    pub std_error: f64,
}

/// Unbiased hit-or-miss volume estimator over a covering box,
/// deterministic per seed.
pub fn mc_volume(poly: &HPolytope, b: &BoundingBox, n: usize, seed: u64) -> VolumeEstimate {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut hits = 0usize;
    for _ in 0..n {
        let x = b.sample(&mut rng);
        if membership(poly, &x, 0.0) {
            hits += 1;
        }
    }
    let p = hits as f64 / n as f64;
    let vol = b.volume();
    VolumeEstimate { value: vol * p, std_error: vol * (p * (1.0 - p) / n as f64).sqrt() }
}

/// Counterclockwise vertices and exact shoelace area of a bounded
/// 2-D polytope.
pub fn vertex_enumerate_2d(poly: &HPolytope) -> Result<(Vec<DVector<f64>>, f64), GeometryError> {
    if poly.dim() != 2 {
        return Err(GeometryError::Dimension("vertex enumeration requires n_x = 2".into()));
    }
    let bb = hpolytope_bounding_box(poly)?; // errors on empty/unbounded
    let span = (bb.hi - bb.lo).amax().max(1.0);
    let m = poly.num_rows();
    let mut pts: Vec<DVector<f64>> = Vec::new();
    for i in 0..m {
        for j in (i + 1)..m {
            let det = poly.f[(i, 0)] * poly.f[(j, 1)] - poly.f[(i, 1)] * poly.f[(j, 0)];
            let scale = poly.f.row(i).amax().max(poly.f.row(j).amax());
            if det.abs() <= 1e-12 * scale * scale {
                continue;
            }
            let x = (poly.g[i] * poly.f[(j, 1)] - poly.f[(i, 1)] * poly.g[j]) / det;
            let y = (poly.f[(i, 0)] * poly.g[j] - poly.g[i] * poly.f[(j, 0)]) / det;
            let cand = DVector::from_vec(vec![x, y]);
            if membership(poly, &cand, 1e-7 * span.max(1.0)) {
                pts.push(cand);
            }
        }
    }
    // dedupe
    let mut vertices: Vec<DVector<f64>> = Vec::new();
    for p in pts {
        if !vertices.iter().any(|q| (&p - q).amax() <= 1e-7 * span) {
            vertices.push(p);
        }
    }
    if vertices.len() < 3 {
        return Err(GeometryError::EmptyOrDegenerate);
    }
    let cx = vertices.iter().map(|v| v[0]).sum::<f64>() / vertices.len() as f64;
    let cy = vertices.iter().map(|v| v[1]).sum::<f64>() / vertices.len() as f64;
    vertices.sort_by(|a, b| {
        let ta = (a[1] - cy).atan2(a[0] - cx);
        let tb = (b[1] - cy).atan2(b[0] - cx);
        ta.partial_cmp(&tb).unwrap()
    });
    let mut area = 0.0;
    for i in 0..vertices.len() {
        let a = &vertices[i];
        let b = &vertices[(i + 1) % vertices.len()];
        area += a[0] * b[1] - b[0] * a[1];
    }
    Ok((vertices, area.abs() / 2.0))
}

/// Rejection-sample `count` points inside `S(xi)`, deterministic per
/// seed. Falls back to convex combinations of enumerated vertices in
/// 2-D when the acceptance rate starves the attempt cap.
pub fn sample_in_slice(
    pp: &ParamPolytope,
    xi: &SimplexPoint,
    count: usize,
    seed: u64,
) -> Result<Vec<DVector<f64>>, GeometryError> {
    const CAP: usize = 1_000_000;
    if count == 0 {
        return Ok(Vec::new());
    }
    let poly = slice(pp, xi)?;
    let bb = hpolytope_bounding_box(&poly)?; // empty slice -> Infeasible error here
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    let mut attempts = 0usize;
    while out.len() < count && attempts < CAP {
        attempts += 1;
        let x = bb.sample(&mut rng);
        if membership(&poly, &x, 0.0) {
            out.push(x);
        }
    }
    if out.len() == count {
        return Ok(out);
    }
    if poly.dim() == 2 {
        let (vertices, _) = vertex_enumerate_2d(&poly)?;
        while out.len() < count {
            let mut weights: Vec<f64> =
                (0..vertices.len()).map(|_| -(1.0 - rng.gen::<f64>()).ln()).collect();
            let total: f64 = weights.iter().sum();
            weights.iter_mut().for_each(|w| *w /= total);
            let mut x = DVector::zeros(2);
            for (w, v) in weights.iter().zip(&vertices) {
                x += v * *w;
            }
            out.push(x);
        }
        return Ok(out);
    }
    Err(GeometryError::SamplingCap(CAP))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::preset;
    use approx::assert_relative_eq;

    fn unit_box_2d() -> HPolytope {
        HPolytope {
            f: DMatrix::from_row_slice(4, 2, &[1.0, 0.0, -1.0, 0.0, 0.0, 1.0, 0.0, -1.0]),
            g: DVector::from_element(4, 1.0),
        }
    }

    #[test]
    fn identity_polytope_slices_to_unit_box() {
        let pp = ParamPolytope {
            p: vec![DMatrix::identity(2, 2), DMatrix::identity(2, 2)],
            w: DMatrix::identity(2, 2),
        };
        let xi = SimplexPoint::new(vec![0.3, 0.7]).unwrap();
        let s = slice(&pp, &xi).unwrap();
        assert!(membership(&s, &DVector::from_vec(vec![0.99, -0.99]), 0.0));
        assert!(!membership(&s, &DVector::from_vec(vec![1.1, 0.0]), 1e-9));
        assert!(membership(&s, &DVector::from_vec(vec![1.0, 1.0]), 0.0)); // boundary at tol 0
    }

    #[test]
    fn slice_rows_are_affine_in_xi() {
        let pp = ParamPolytope {
            p: vec![
                DMatrix::from_row_slice(3, 2, &[1.0, 0.2, 0.0, 1.0, 0.5, 0.5]),
                DMatrix::from_row_slice(3, 2, &[0.8, -0.1, 0.3, 1.1, 0.4, 0.9]),
            ],
            w: DMatrix::from_row_slice(2, 2, &[2.0, 0.3, -0.1, 1.5]),
        };
        let xi1 = SimplexPoint::new(vec![0.2, 0.8]).unwrap();
        let xi2 = SimplexPoint::new(vec![0.9, 0.1]).unwrap();
        let lam = 0.35;
        let mix = SimplexPoint::new(vec![
            lam * 0.2 + (1.0 - lam) * 0.9,
            lam * 0.8 + (1.0 - lam) * 0.1,
        ])
        .unwrap();
        let s1 = slice(&pp, &xi1).unwrap();
        let s2 = slice(&pp, &xi2).unwrap();
        let sm = slice(&pp, &mix).unwrap();
        let blend = &s1.f * lam + &s2.f * (1.0 - lam);
        assert_relative_eq!(sm.f, blend, epsilon = 1e-12);
    }

    #[test]
    fn intersection_of_equal_faces_is_single_slice() {
        let p = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.3, 1.0]);
        let pp = ParamPolytope { p: vec![p.clone(), p.clone()], w: DMatrix::identity(2, 2) };
        let s = robust_intersection(&pp).unwrap();
        let single = slice(&pp, &SimplexPoint::vertex(0, 2)).unwrap();
        // same membership behaviour even though rows are duplicated
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let x = DVector::from_fn(2, |_, _| rng.gen_range(-2.0..2.0));
            assert_eq!(membership(&s, &x, 0.0), membership(&single, &x, 0.0));
        }
    }

    #[test]
    fn intersection_contains_implies_every_slice_contains() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let pp = ParamPolytope {
            p: vec![
                DMatrix::from_fn(4, 2, |_, _| rng.gen_range(-1.0..1.0)),
                DMatrix::from_fn(4, 2, |_, _| rng.gen_range(-1.0..1.0)),
                DMatrix::from_fn(4, 2, |_, _| rng.gen_range(-1.0..1.0)),
            ],
            w: DMatrix::identity(2, 2),
        };
        let breve = robust_intersection(&pp).unwrap();
        let mut tested = 0;
        for _ in 0..10_000 {
            let x = DVector::from_fn(2, |_, _| rng.gen_range(-3.0..3.0));
            if membership(&breve, &x, 0.0) {
                tested += 1;
                let xi = SimplexPoint::sample_uniform(&mut rng, 3);
                let s = slice(&pp, &xi).unwrap();
                assert!(membership(&s, &x, 1e-9));
            }
        }
        assert!(tested > 0, "no interior points drawn");
    }

    #[test]
    fn bounding_box_of_scaled_box_constraints() {
        let spec = preset("demo-double-integrator", None).unwrap();
        let bb = bounding_box(&spec.constraints).unwrap();
        assert_relative_eq!(bb.lo, DVector::from_vec(vec![-5.0, -5.0]), epsilon = 1e-5);
        assert_relative_eq!(bb.hi, DVector::from_vec(vec![5.0, 5.0]), epsilon = 1e-5);
    }

    #[test]
    fn bounding_box_rotated_constraints_is_tight() {
        // |x1 + x2| <= 1, |x1 - x2| <= 1 -> box [-1, 1]^2
        let f = DMatrix::from_row_slice(4, 2, &[1.0, 1.0, -1.0, -1.0, 1.0, -1.0, -1.0, 1.0]);
        let poly = HPolytope { f, g: DVector::from_element(4, 1.0) };
        let bb = hpolytope_bounding_box(&poly).unwrap();
        assert_relative_eq!(bb.hi, DVector::from_vec(vec![1.0, 1.0]), epsilon = 1e-5);
        assert_relative_eq!(bb.lo, DVector::from_vec(vec![-1.0, -1.0]), epsilon = 1e-5);
    }

    #[test]
    fn one_dimensional_box_endpoints() {
        let poly = HPolytope {
            f: DMatrix::from_row_slice(2, 1, &[1.0, -1.0]),
            g: DVector::from_element(2, 1.0),
        };
        let bb = hpolytope_bounding_box(&poly).unwrap();
        assert_relative_eq!(bb.lo[0], -1.0, epsilon = 1e-6);
        assert_relative_eq!(bb.hi[0], 1.0, epsilon = 1e-6);
        let pts = box_vertices_and_boundary_samples(&bb, 0, 0);
        assert_eq!(pts.len(), 2);
    }

    #[test]
    fn boundary_samples_lie_on_the_boundary() {
        let bb = BoundingBox {
            lo: DVector::from_vec(vec![-1.0, -1.0]),
            hi: DVector::from_vec(vec![1.0, 1.0]),
        };
        let pts = box_vertices_and_boundary_samples(&bb, 8, 42);
        assert_eq!(pts.len(), 12);
        for p in &pts {
            let on_face = (0..2).any(|i| (p[i] - bb.lo[i]).abs() < 1e-12 || (p[i] - bb.hi[i]).abs() < 1e-12);
            assert!(on_face, "{p}");
            assert!(bb.contains(p, 1e-12));
        }
        // deterministic per seed
        let again = box_vertices_and_boundary_samples(&bb, 8, 42);
        assert_eq!(pts, again);
    }

    #[test]
    fn mc_volume_full_box_is_exact() {
        let b = BoundingBox {
            lo: DVector::from_vec(vec![-2.0, -2.0]),
            hi: DVector::from_vec(vec![2.0, 2.0]),
        };
        let est = mc_volume(&unit_box_2d(), &b, 1000, 5);
        assert!(est.value <= 16.0);
        let full = HPolytope {
            f: DMatrix::from_row_slice(1, 2, &[0.0, 0.0]),
            g: DVector::from_element(1, 1.0),
        };
        let est_full = mc_volume(&full, &b, 1000, 5);
        assert_relative_eq!(est_full.value, 16.0, epsilon = 1e-12);
        assert_eq!(est_full.std_error, 0.0);
    }

    #[test]
    fn mc_volume_matches_known_areas_within_4_sigma() {
        let b = BoundingBox {
            lo: DVector::from_vec(vec![-2.0, -2.0]),
            hi: DVector::from_vec(vec![2.0, 2.0]),
        };
        let est = mc_volume(&unit_box_2d(), &b, 200_000, 17);
        assert!((est.value - 4.0).abs() <= 4.0 * est.std_error, "{} {}", est.value, est.std_error);

        // triangle x1 >= 0, x2 >= 0, x1 + x2 <= 1: area 0.5
        let tri = HPolytope {
            f: DMatrix::from_row_slice(3, 2, &[-1.0, 0.0, 0.0, -1.0, 1.0, 1.0]),
            g: DVector::from_vec(vec![0.0, 0.0, 1.0]),
        };
        let bt = BoundingBox {
            lo: DVector::from_vec(vec![0.0, 0.0]),
            hi: DVector::from_vec(vec![1.0, 1.0]),
        };
        let est_t = mc_volume(&tri, &bt, 200_000, 19);
        assert!((est_t.value - 0.5).abs() <= 4.0 * est_t.std_error);
    }

    #[test]
    fn vertex_enumeration_unit_box() {
        let (verts, area) = vertex_enumerate_2d(&unit_box_2d()).unwrap();
        assert_eq!(verts.len(), 4);
        assert_relative_eq!(area, 4.0, epsilon = 1e-9);
    }

    #[test]
    fn vertex_enumeration_rejects_empty() {
        let f = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, -1.0, 0.0]);
        let g = DVector::from_vec(vec![-2.0, 1.0]); // x1 <= -2 and x1 >= -1: empty
        assert!(matches!(
            vertex_enumerate_2d(&HPolytope { f, g }),
            Err(GeometryError::EmptyOrDegenerate)
        ));
    }

    #[test]
    fn vertex_enumeration_rejects_unbounded() {
        let f = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, -1.0, 0.0]); // strip
        let g = DVector::from_element(2, 1.0);
        assert!(matches!(
            vertex_enumerate_2d(&HPolytope { f, g }),
            Err(GeometryError::Unbounded)
        ));
    }

    #[test]
    fn sampled_slice_points_are_members() {
        let pp = ParamPolytope {
            p: vec![
                DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 0.7, 0.7]),
                DMatrix::from_row_slice(3, 2, &[1.0, 0.1, -0.1, 1.0, 0.7, 0.6]),
            ],
            w: DMatrix::from_row_slice(2, 2, &[1.5, 0.2, 0.0, 0.9]),
        };
        let xi = SimplexPoint::new(vec![0.4, 0.6]).unwrap();
        let pts = sample_in_slice(&pp, &xi, 64, 9).unwrap();
        assert_eq!(pts.len(), 64);
        let s = slice(&pp, &xi).unwrap();
        for x in &pts {
            assert!(membership(&s, x, 1e-12));
        }
        // determinism
        let again = sample_in_slice(&pp, &xi, 64, 9).unwrap();
        assert_eq!(pts, again);
        assert!(sample_in_slice(&pp, &xi, 0, 9).unwrap().is_empty());
    }

    #[test]
    fn zero_symmetry_of_slices() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let pp = ParamPolytope {
            p: vec![
                DMatrix::from_fn(4, 2, |_, _| rng.gen_range(-1.0..1.0)),
                DMatrix::from_fn(4, 2, |_, _| rng.gen_range(-1.0..1.0)),
            ],
            w: DMatrix::from_row_slice(2, 2, &[1.2, -0.3, 0.4, 0.8]),
        };
        for _ in 0..200 {
            let xi = SimplexPoint::sample_uniform(&mut rng, 2);
            let s = slice(&pp, &xi).unwrap();
            let x = DVector::from_fn(2, |_, _| rng.gen_range(-2.0..2.0));
            assert_eq!(membership(&s, &x, 0.0), membership(&s, &(-&x), 0.0));
        }
    }
}
