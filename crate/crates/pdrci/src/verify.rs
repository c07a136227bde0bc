//! Empirical certification of invariance, constraint and performance
//! properties by randomized simulation, plus numeric property checks
//! of the matrix-inequality machinery.
//!
//! Verification here is statistical evidence on top of the SDP
//! certificates, not exact set arithmetic: sampled states, scheduling
//! parameters and disturbances drive the closed loop and every
//! violation of the certified property is counted with its margin.

use crate::geometry::{self, BoundingBox};
use crate::model::{evaluate_system, ProblemSpec, QlpvMap, SimplexPoint};
use crate::polya;
use crate::synthesis::SynthesisResult;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum VerifyError {
    #[error(transparent)]
    Geometry(#[from] geometry::GeometryError),
    #[error("model: {0}")]
    Model(#[from] crate::model::ModelError),
    #[error("slice sampling starved (acceptance rate too low)")]
    SamplingStarved,
    #[error("schedule ran out of entries at step {0}")]
    ScheduleExhausted(usize),
}

/// Outcome of one named check.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckReport {
    pub name: String,
    pub trials: usize,
    pub violations: usize,
    /// Largest violation amount observed (negative means slack).
    pub worst_margin: f64,
}

/// Aggregated verification evidence.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VerificationReport {
    pub trials: usize,
    pub violations: usize,
    pub worst_margin: f64,
    pub checks: Vec<CheckReport>,
    pub seed: u64,
}

impl VerificationReport {
    fn from_checks(checks: Vec<CheckReport>, seed: u64) -> Self {
        let trials = checks.iter().map(|c| c.trials).sum();
        let violations = checks.iter().map(|c| c.violations).sum();
        let worst =
            checks.iter().map(|c| c.worst_margin).fold(f64::NEG_INFINITY, f64::max);
        Self { trials, violations, worst_margin: worst, checks, seed }
    }

    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

/// Closed-loop signal record over one horizon.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub x: Vec<DVector<f64>>,
    pub u: Vec<DVector<f64>>,
    pub w: Vec<DVector<f64>>,
    pub z: Vec<DVector<f64>>,
    pub xi: Vec<SimplexPoint>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.u.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u.is_empty()
    }

    /// Accumulated output energy `sum ||z||^2`.
    pub fn output_energy(&self) -> f64 {
        self.z.iter().map(|z| z.norm_squared()).sum()
    }
}

/// Scheduling source of a closed-loop run.
pub enum Schedule<'a> {
    Sequence(&'a [SimplexPoint]),
    Qlpv(&'a QlpvMap),
}

/// Exact closed-loop recursion `x+ = (A + B K)(xi) x + E(xi) w` with the
/// scheduled gain `K(xi) = sum xi_k K^k`.
pub fn simulate_closed_loop(
    problem: &ProblemSpec,
    gains: &[DMatrix<f64>],
    x0: &DVector<f64>,
    schedule: Schedule<'_>,
    w_seq: Option<&[DVector<f64>]>,
    steps: usize,
) -> Result<Trajectory, VerifyError> {
    let sys = &problem.system;
    let mut traj = Trajectory {
        x: Vec::with_capacity(steps + 1),
        u: Vec::with_capacity(steps),
        w: Vec::with_capacity(steps),
        z: Vec::with_capacity(steps),
        xi: Vec::with_capacity(steps),
    };
    traj.x.push(x0.clone());
    let mut x = x0.clone();
    for t in 0..steps {
        let xi = match &schedule {
            Schedule::Sequence(seq) => {
                seq.get(t).cloned().ok_or(VerifyError::ScheduleExhausted(t))?
            }
            Schedule::Qlpv(map) => map.xi(&x)?,
        };
        let mats = evaluate_system(sys, &xi)?;
        let mut gain = DMatrix::zeros(sys.n_u, sys.n_x);
        for (wk, g) in xi.weights().iter().zip(gains) {
            gain += g * *wk;
        }
        let u = &gain * &x;
        let w = match w_seq {
            Some(seq) => seq.get(t).cloned().ok_or(VerifyError::ScheduleExhausted(t))?,
            None => DVector::zeros(sys.n_w),
        };
        let z = &mats.c * &x + &mats.d * &u;
        let x_next = &mats.a * &x + &mats.b * &u + &mats.e * &w;
        traj.u.push(u);
        traj.w.push(w);
        traj.z.push(z);
        traj.xi.push(xi);
        traj.x.push(x_next.clone());
        x = x_next;
    }
    Ok(traj)
}

// --- sampling helpers --------------------------------------------------------

/// Covering box of one slice from the l1 norms of the pseudo-inverse
/// rows: `|e_i' x| = |e_i' R^+ (R x)| <= ||e_i' R^+||_1` on the slice.
fn slice_cover_box(rows: &DMatrix<f64>) -> Result<BoundingBox, VerifyError> {
    let pinv = rows
        .clone()
        .pseudo_inverse(1e-12)
        .map_err(|_| VerifyError::Geometry(geometry::GeometryError::SingularW))?;
    let n = rows.ncols();
    let mut hi = DVector::zeros(n);
    for i in 0..n {
        hi[i] = pinv.row(i).iter().map(|v| v.abs()).sum();
    }
    Ok(BoundingBox { lo: -hi.clone(), hi })
}

/// Draw a state inside `{x : |rows x|_inf <= 1}`; with probability 1/2
/// the draw is pushed onto the boundary, which exercises the tight
/// case of the invariance inequality.
fn sample_in_rows<R: Rng>(
    rows: &DMatrix<f64>,
    cover: &BoundingBox,
    rng: &mut R,
) -> Result<DVector<f64>, VerifyError> {
    const CAP: usize = 100_000;
    for _ in 0..CAP {
        let x = cover.sample(rng);
        let image = rows * &x;
        let sup = image.amax();
        if sup <= 1.0 {
            if sup > 1e-9 && rng.gen::<bool>() {
                return Ok(x / sup);
            }
            return Ok(x);
        }
    }
    Err(VerifyError::SamplingStarved)
}

/// Bounding box of the disturbance set `{w : -1 <= G w <= 1}`.
fn disturbance_box(g: &DMatrix<f64>) -> Result<BoundingBox, VerifyError> {
    let n_w = g.ncols();
    let stacked = {
        let mut f = DMatrix::zeros(2 * g.nrows(), n_w);
        f.view_mut((0, 0), (g.nrows(), n_w)).copy_from(g);
        f.view_mut((g.nrows(), 0), (g.nrows(), n_w)).copy_from(&(-g));
        f
    };
    let poly = geometry::HPolytope { f: stacked, g: DVector::from_element(2 * g.nrows(), 1.0) };
    Ok(geometry::hpolytope_bounding_box(&poly)?)
}

/// How disturbances are drawn during invariance checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DisturbanceMode {
    /// Uniform over the admissible set.
    Uniform,
    /// Random sign corners of the admissible box (worst-case pushes).
    Extreme,
}

fn sample_disturbance<R: Rng>(
    g: &DMatrix<f64>,
    wbox: &BoundingBox,
    mode: DisturbanceMode,
    rng: &mut R,
) -> DVector<f64> {
    const CAP: usize = 10_000;
    match mode {
        DisturbanceMode::Extreme => {
            for _ in 0..CAP {
                let w = DVector::from_fn(wbox.dim(), |i, _| {
                    if rng.gen::<bool>() {
                        wbox.hi[i]
                    } else {
                        wbox.lo[i]
                    }
                });
                if (g * &w).amax() <= 1.0 + 1e-9 {
                    return w;
                }
            }
            DVector::zeros(wbox.dim())
        }
        DisturbanceMode::Uniform => {
            for _ in 0..CAP {
                let w = wbox.sample(rng);
                if (g * &w).amax() <= 1.0 {
                    return w;
                }
            }
            DVector::zeros(wbox.dim())
        }
    }
}

// --- checks -------------------------------------------------------------------

/// One-step invariance: for sampled `(xi, x in S(xi), w, xi+)`, the
/// successor `A_K(xi) x + E(xi) w` must lie in `S(xi+)` within `tol`.
pub fn check_invariance(
    result: &SynthesisResult,
    problem: &ProblemSpec,
    trials: usize,
    seed: u64,
    mode: DisturbanceMode,
    tol: f64,
) -> Result<VerificationReport, VerifyError> {
    let pp = &result.polytope;
    let w_inv = pp.w_inverse()?;
    let n = pp.num_vertices();
    let wbox = disturbance_box(&problem.constraints.g)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut violations = 0usize;
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..trials {
        let xi = SimplexPoint::sample_uniform(&mut rng, n);
        let rows = pp.p_at(&xi)? * &w_inv;
        let cover = slice_cover_box(&rows)?;
        let x = sample_in_rows(&rows, &cover, &mut rng)?;
        let mats = evaluate_system(&problem.system, &xi)?;
        let mut gain = DMatrix::zeros(problem.system.n_u, problem.system.n_x);
        for (wk, g) in xi.weights().iter().zip(&result.gains) {
            gain += g * *wk;
        }
        let w = sample_disturbance(&problem.constraints.g, &wbox, mode, &mut rng);
        let x_next = (&mats.a + &mats.b * &gain) * &x + &mats.e * &w;
        let xi_next = SimplexPoint::sample_uniform(&mut rng, n);
        let image = (pp.p_at(&xi_next)? * &w_inv) * &x_next;
        let margin = image.amax() - 1.0;
        worst = worst.max(margin);
        if margin > tol {
            violations += 1;
        }
    }
    let check = CheckReport { name: "invariance".into(), trials, violations, worst_margin: worst };
    Ok(VerificationReport::from_checks(vec![check], seed))
}

/// Slice-by-slice containment in the gain-dependent admissible set:
/// every tested point of `S(xi_m)` must satisfy
/// `(H_x + H_u K(xi_m)) x <= 1 + tol`. Uses exact slice vertices in
/// 2-D, sampled points otherwise.
pub fn check_system_constraints(
    result: &SynthesisResult,
    problem: &ProblemSpec,
    grid_resolution: u32,
    samples_per_slice: usize,
    seed: u64,
    tol: f64,
) -> Result<VerificationReport, VerifyError> {
    let pp = &result.polytope;
    let w_inv = pp.w_inverse()?;
    let n = pp.num_vertices();
    let grid = crate::synthesis::make_simplex_grid(n, grid_resolution);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut trials = 0usize;
    let mut violations = 0usize;
    let mut worst = f64::NEG_INFINITY;
    for xi in &grid {
        let mut gain = DMatrix::zeros(problem.system.n_u, problem.system.n_x);
        for (wk, g) in xi.weights().iter().zip(&result.gains) {
            gain += g * *wk;
        }
        let closed = &problem.constraints.h_x + &problem.constraints.h_u * &gain;
        let test_point = |x: &DVector<f64>, trials: &mut usize, violations: &mut usize, worst: &mut f64| {
            *trials += 1;
            let vals = &closed * x;
            let margin = vals.max() - 1.0;
            *worst = f64::max(*worst, margin);
            if margin > tol {
                *violations += 1;
            }
        };
        if problem.system.n_x == 2 {
            let s = geometry::slice(pp, xi)?;
            let (vertices, _) = geometry::vertex_enumerate_2d(&s)?;
            for v in &vertices {
                test_point(v, &mut trials, &mut violations, &mut worst);
            }
        } else {
            let rows = pp.p_at(xi)? * &w_inv;
            let cover = slice_cover_box(&rows)?;
            for _ in 0..samples_per_slice {
                let x = sample_in_rows(&rows, &cover, &mut rng)?;
                test_point(&x, &mut trials, &mut violations, &mut worst);
            }
        }
    }
    let check =
        CheckReport { name: "system-constraints".into(), trials, violations, worst_margin: worst };
    Ok(VerificationReport::from_checks(vec![check], seed))
}

/// How scheduling sequences are drawn during performance runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScheduleMode {
    /// Fresh uniform draw each step.
    Uniform,
    /// Random vertex each step (stresses the polytopic bound hardest).
    Vertices,
}

/// Closed-loop output energy: `runs` simulations from states sampled in
/// `S(xi_0)` with `w = 0` must each accumulate at most `gamma + tol`.
/// The terminal state norm is reported as a separate line.
pub fn check_performance(
    result: &SynthesisResult,
    problem: &ProblemSpec,
    gamma: f64,
    runs: usize,
    horizon: usize,
    seed: u64,
    mode: ScheduleMode,
    tol: f64,
) -> Result<VerificationReport, VerifyError> {
    let pp = &result.polytope;
    let w_inv = pp.w_inverse()?;
    let n = pp.num_vertices();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut violations = 0usize;
    let mut worst = f64::NEG_INFINITY;
    let mut tail_violations = 0usize;
    let mut worst_tail = f64::NEG_INFINITY;
    for _ in 0..runs {
        let xi0 = SimplexPoint::sample_uniform(&mut rng, n);
        let rows = pp.p_at(&xi0)? * &w_inv;
        let cover = slice_cover_box(&rows)?;
        let x0 = sample_in_rows(&rows, &cover, &mut rng)?;
        let mut schedule = Vec::with_capacity(horizon);
        schedule.push(xi0);
        for _ in 1..horizon {
            schedule.push(match mode {
                ScheduleMode::Uniform => SimplexPoint::sample_uniform(&mut rng, n),
                ScheduleMode::Vertices => SimplexPoint::vertex(rng.gen_range(0..n), n),
            });
        }
        let traj =
            simulate_closed_loop(problem, &result.gains, &x0, Schedule::Sequence(&schedule), None, horizon)?;
        let energy = traj.output_energy();
        let margin = if energy.is_finite() { energy - gamma } else { f64::INFINITY };
        worst = worst.max(margin);
        if margin > tol {
            violations += 1;
        }
        let tail = traj.x.last().expect("horizon at least one step").norm();
        let tail_margin = tail - 1e-3;
        worst_tail = worst_tail.max(tail_margin);
        if tail_margin > 0.0 {
            tail_violations += 1;
        }
    }
    let checks = vec![
        CheckReport { name: "performance-energy".into(), trials: runs, violations, worst_margin: worst },
        CheckReport {
            name: "performance-tail".into(),
            trials: runs,
            violations: tail_violations,
            worst_margin: worst_tail,
        },
    ];
    Ok(VerificationReport::from_checks(checks, seed))
}

/// Numeric check of the linearization lower bound
/// `L' M^-1 L >= L'Y + Y'L - Y'MY` on random instances: the smallest
/// eigenvalue of the difference must stay above `-1e-9`.
pub fn check_linearization_bound(samples: usize, seed: u64) -> VerificationReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut violations = 0usize;
    let mut worst = f64::NEG_INFINITY;
    for trial in 0..samples {
        let n = 2 + (trial % 4); // sizes 2..=5
        let l = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-2.0..2.0));
        let y = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-2.0..2.0));
        let a = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
        let m = &a * a.transpose() + DMatrix::identity(n, n) * 0.1;
        let m_inv = m.clone().try_inverse().expect("positive definite");
        let lhs = l.transpose() * &m_inv * &l;
        let rhs = l.transpose() * &y + y.transpose() * &l - y.transpose() * &m * &y;
        let diff = lhs - rhs;
        let sym = (&diff + diff.transpose()) * 0.5;
        let min_eig = sym.symmetric_eigenvalues().iter().cloned().fold(f64::INFINITY, f64::min);
        let margin = -min_eig - 1e-9;
        worst = worst.max(margin);
        if margin > 0.0 {
            violations += 1;
        }
    }
    let check = CheckReport {
        name: "linearization-bound".into(),
        trials: samples,
        violations,
        worst_margin: worst,
    };
    VerificationReport::from_checks(vec![check], seed)
}

/// Exact coefficient-matching oracle: relaxing random integer symmetric
/// blocks through the modified-coefficient assembly must reproduce the
/// coefficients of the brute-force symbolic expansion of
/// `(sum xi)^d * (degree-2 block polynomial)`, in integer arithmetic.
pub fn check_assembly_oracle(d_max: u32, n_max: usize, seed: u64) -> VerificationReport {
    use std::collections::HashMap;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut trials = 0usize;
    let mut violations = 0usize;
    let dim = 2usize;
    for n in 1..=n_max {
        for d in 0..=d_max {
            // random integer symmetric blocks S[k][l] (S[k][l] + S[l][k] enters)
            let blocks: Vec<Vec<DMatrix<f64>>> = (0..n)
                .map(|_| {
                    (0..n)
                        .map(|_| {
                            let raw = DMatrix::from_fn(dim, dim, |_, _| {
                                rng.gen_range(-4i64..=4) as f64
                            });
                            (&raw + raw.transpose()) * 0.5 * 2.0 // keep entries integral
                        })
                        .collect()
                })
                .collect();
            let mut expansion: HashMap<Vec<u32>, DMatrix<f64>> = HashMap::new();
            for alpha in polya::enumerate_exponents(d, n) {
                let w = polya::multinomial(&alpha) as f64;
                let mut add = |shift: Vec<u32>, m: DMatrix<f64>| {
                    let combined: Vec<u32> =
                        alpha.entries().iter().zip(shift.iter()).map(|(a, b)| a + b).collect();
                    *expansion.entry(combined).or_insert_with(|| DMatrix::zeros(dim, dim)) +=
                        m * w;
                };
                for k in 0..n {
                    let mut e = vec![0u32; n];
                    e[k] = 2;
                    add(e, blocks[k][k].clone());
                }
                for k in 0..n {
                    for l in (k + 1)..n {
                        let mut e = vec![0u32; n];
                        e[k] = 1;
                        e[l] = 1;
                        add(e, &blocks[k][l] + &blocks[l][k]);
                    }
                }
            }
            for beta in polya::enumerate_exponents(d + 2, n) {
                trials += 1;
                let mut assembled = DMatrix::zeros(dim, dim);
                for k in 0..n {
                    let c = polya::relax_weight_single(&beta, k, 2);
                    if c > 0 {
                        assembled += &blocks[k][k] * c as f64;
                    }
                }
                for k in 0..n {
                    for l in (k + 1)..n {
                        let c = polya::relax_weight_pair(&beta, k, l, 1, 1);
                        if c > 0 {
                            assembled += (&blocks[k][l] + &blocks[l][k]) * c as f64;
                        }
                    }
                }
                let expected = expansion
                    .get(beta.entries())
                    .cloned()
                    .unwrap_or_else(|| DMatrix::zeros(dim, dim));
                if (assembled - expected).amax() != 0.0 {
                    violations += 1;
                }
            }
        }
    }
    let check = CheckReport {
        name: "assembly-oracle".into(),
        trials,
        violations,
        worst_margin: if violations == 0 { -1.0 } else { 1.0 },
    };
    VerificationReport::from_checks(vec![check], seed)
}
