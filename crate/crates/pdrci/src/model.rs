//! Problem-description data types, validation, and ingestion of LPV
//! synthesis problems from JSON files.
//!
//! The vertex form of the plant is
//! `x+ = A(xi) x + B(xi) u + E(xi) w`, `z = C(xi) x + D(xi) u`, with
//! `xi` on the unit simplex and every matrix an affine combination of
//! per-vertex data. Constraints are `[H_x H_u][x; u] <= 1` and
//! `-1 <= G w <= 1`. Problems without disturbance keep the channel
//! shape with `n_w = 1`, `E = 0`, `G = 1`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("{field}: {message}")]
    Invalid { field: String, message: String },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

fn invalid(field: &str, message: impl Into<String>) -> ModelError {
    ModelError::Invalid { field: field.to_string(), message: message.into() }
}

/// Point on the unit simplex: nonnegative entries summing to one
/// (within 1e-12).
#[derive(Debug, Clone, PartialEq)]
pub struct SimplexPoint {
    xi: Vec<f64>,
}

impl SimplexPoint {
    pub const SUM_TOL: f64 = 1e-12;

    pub fn new(xi: Vec<f64>) -> Result<Self, ModelError> {
        if xi.is_empty() {
            return Err(invalid("xi", "must be non-empty"));
        }
        let mut clean = xi;
        for (k, v) in clean.iter_mut().enumerate() {
            if !v.is_finite() {
                return Err(invalid("xi", format!("entry {k} is not finite")));
            }
            if *v < 0.0 {
                if *v < -Self::SUM_TOL {
                    return Err(invalid("xi", format!("entry {k} is negative ({v})")));
                }
                *v = 0.0;
            }
        }
        let sum: f64 = clean.iter().sum();
        if (sum - 1.0).abs() > Self::SUM_TOL {
            return Err(invalid("xi", format!("entries sum to {sum}, expected 1")));
        }
        Ok(Self { xi: clean })
    }

    /// The `k`-th vertex of the simplex in `n` variables.
    pub fn vertex(k: usize, n: usize) -> Self {
        let mut xi = vec![0.0; n];
        xi[k] = 1.0;
        Self { xi }
    }

    /// Uniform sample on the simplex (normalized exponentials).
    pub fn sample_uniform<R: Rng>(rng: &mut R, n: usize) -> Self {
        let draws: Vec<f64> = (0..n).map(|_| -(1.0 - rng.gen::<f64>()).ln()).collect();
        let total: f64 = draws.iter().sum();
        Self { xi: draws.iter().map(|v| v / total).collect() }
    }

    pub fn weights(&self) -> &[f64] {
        &self.xi
    }

    pub fn len(&self) -> usize {
        self.xi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xi.is_empty()
    }
}

/// Vertex matrices and dimensions of the polytopic LPV plant.
#[derive(Debug, Clone, PartialEq)]
pub struct LpvSystem {
    pub n_x: usize,
    pub n_u: usize,
    pub n_w: usize,
    pub n_z: usize,
    pub a: Vec<DMatrix<f64>>,
    pub b: Vec<DMatrix<f64>>,
    pub e: Vec<DMatrix<f64>>,
    pub c: Vec<DMatrix<f64>>,
    pub d: Vec<DMatrix<f64>>,
}

impl LpvSystem {
    pub fn num_vertices(&self) -> usize {
        self.a.len()
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.a.is_empty() {
            return Err(invalid("N_xi", "N_xi must be >= 1"));
        }
        if self.n_x == 0 || self.n_u == 0 || self.n_w == 0 || self.n_z == 0 {
            return Err(invalid("dimensions", "all dimensions must be positive"));
        }
        let n = self.num_vertices();
        let fams: [(&str, &Vec<DMatrix<f64>>, usize, usize); 5] = [
            ("A", &self.a, self.n_x, self.n_x),
            ("B", &self.b, self.n_x, self.n_u),
            ("E", &self.e, self.n_x, self.n_w),
            ("C", &self.c, self.n_z, self.n_x),
            ("D", &self.d, self.n_z, self.n_u),
        ];
        for (name, fam, rows, cols) in fams {
            if fam.len() != n {
                return Err(invalid(name, format!("expected {n} vertex matrices, got {}", fam.len())));
            }
            for (k, m) in fam.iter().enumerate() {
                if m.nrows() != rows || m.ncols() != cols {
                    return Err(invalid(
                        &format!("{name}[{k}]"),
                        format!("expected {rows}x{cols}, got {}x{}", m.nrows(), m.ncols()),
                    ));
                }
                if m.iter().any(|v| !v.is_finite()) {
                    return Err(invalid(&format!("{name}[{k}]"), "entries must be finite"));
                }
            }
        }
        Ok(())
    }
}

/// Matrix bundle at a fixed scheduling point.
#[derive(Debug, Clone)]
pub struct SystemMatrices {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub e: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub d: DMatrix<f64>,
}

/// Convex combination of the vertex matrices at `xi`.
pub fn evaluate_system(sys: &LpvSystem, xi: &SimplexPoint) -> Result<SystemMatrices, ModelError> {
    if xi.len() != sys.num_vertices() {
        return Err(invalid(
            "xi",
            format!("expected {} weights, got {}", sys.num_vertices(), xi.len()),
        ));
    }
    let combine = |fam: &Vec<DMatrix<f64>>| -> DMatrix<f64> {
        let mut acc = DMatrix::zeros(fam[0].nrows(), fam[0].ncols());
        for (w, m) in xi.weights().iter().zip(fam) {
            acc += m * *w;
        }
        acc
    };
    Ok(SystemMatrices {
        a: combine(&sys.a),
        b: combine(&sys.b),
        e: combine(&sys.e),
        c: combine(&sys.c),
        d: combine(&sys.d),
    })
}

/// State/input constraint rows and disturbance shape (`[H_x H_u][x;u] <= 1`,
/// `-1 <= G w <= 1`).
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintData {
    pub h_x: DMatrix<f64>,
    pub h_u: DMatrix<f64>,
    pub g: DMatrix<f64>,
}

impl ConstraintData {
    pub fn num_rows(&self) -> usize {
        self.h_x.nrows()
    }

    pub fn validate(&self, n_x: usize, n_u: usize, n_w: usize) -> Result<(), ModelError> {
        if self.h_x.ncols() != n_x {
            return Err(invalid("H_x", format!("expected {n_x} columns, got {}", self.h_x.ncols())));
        }
        if self.h_u.ncols() != n_u {
            return Err(invalid("H_u", format!("expected {n_u} columns, got {}", self.h_u.ncols())));
        }
        if self.h_x.nrows() != self.h_u.nrows() {
            return Err(invalid("H_u", "H_x and H_u must have the same number of rows"));
        }
        if self.h_x.nrows() == 0 {
            return Err(invalid("H_x", "at least one constraint row is required"));
        }
        if self.g.ncols() != n_w {
            return Err(invalid("G", format!("expected {n_w} columns, got {}", self.g.ncols())));
        }
        for (name, m) in [("H_x", &self.h_x), ("H_u", &self.h_u), ("G", &self.g)] {
            if m.iter().any(|v| !v.is_finite()) {
                return Err(invalid(name, "entries must be finite"));
            }
        }
        // {w : -1 <= Gw <= 1} bounded iff G has full column rank
        let rank = self.g.clone().svd(false, false).rank(1e-10);
        if rank < n_w {
            return Err(invalid("G", format!("must have full column rank {n_w}, got rank {rank}")));
        }
        // {x : H_x x <= 1} bounded, checked by per-axis LPs
        if !crate::geometry::state_set_bounded(&self.h_x) {
            return Err(invalid("H_x", "state set {x : H_x x <= 1} must be bounded"));
        }
        Ok(())
    }
}

/// Quadratic output-energy bound `sum ||z||^2 <= gamma` (requires w = 0).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerformanceSpec {
    pub gamma: f64,
    pub enabled: bool,
}

impl PerformanceSpec {
    pub fn disabled() -> Self {
        Self { gamma: 0.0, enabled: false }
    }

    pub fn with_gamma(gamma: f64) -> Self {
        Self { gamma, enabled: true }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.enabled && !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(invalid("performance.gamma", "gamma must be finite and >= 0"));
        }
        Ok(())
    }
}

/// One monomial of a polynomial scheduling map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolyTerm {
    pub c: f64,
    pub powers: Vec<u32>,
}

/// State-to-parameter scheduling map of a quasi-LPV embedding, with the
/// state-space region on which it stays on the simplex.
#[derive(Debug, Clone, PartialEq)]
pub enum QlpvMap {
    /// `xi_1 = (2 - mu(1 - x1^2))/2`, `xi_2 = mu(1 - x1^2)/2`;
    /// valid for `mu (1 - x1^2) in [0, 2]`.
    VanDerPol { mu: f64 },
    /// One polynomial in the state per simplex vertex.
    Polynomial { terms: Vec<Vec<PolyTerm>>, region_lo: Vec<f64>, region_hi: Vec<f64> },
}

impl QlpvMap {
    /// Scheduling parameter at state `x`; error when outside the
    /// validity region.
    pub fn xi(&self, x: &DVector<f64>) -> Result<SimplexPoint, ModelError> {
        match self {
            QlpvMap::VanDerPol { mu } => {
                let x1 = x[0];
                let xi2 = mu * (1.0 - x1 * x1) / 2.0;
                SimplexPoint::new(vec![1.0 - xi2, xi2]).map_err(|_| {
                    invalid("qlpv", format!("state x1={x1} leaves the validity region"))
                })
            }
            QlpvMap::Polynomial { terms, region_lo, region_hi } => {
                for (i, (&lo, &hi)) in region_lo.iter().zip(region_hi).enumerate() {
                    if x[i] < lo - 1e-12 || x[i] > hi + 1e-12 {
                        return Err(invalid("qlpv", format!("state axis {i} leaves [{lo}, {hi}]")));
                    }
                }
                let eval = |poly: &Vec<PolyTerm>| -> f64 {
                    poly.iter()
                        .map(|t| {
                            t.c * t
                                .powers
                                .iter()
                                .enumerate()
                                .map(|(i, &p)| x[i].powi(p as i32))
                                .product::<f64>()
                        })
                        .sum()
                };
                SimplexPoint::new(terms.iter().map(eval).collect())
                    .map_err(|e| invalid("qlpv", format!("map leaves the simplex: {e}")))
            }
        }
    }

    /// Axis-aligned validity region (lo, hi per state axis).
    pub fn region(&self, n_x: usize) -> (Vec<f64>, Vec<f64>) {
        match self {
            QlpvMap::VanDerPol { .. } => (vec![-1.0; n_x], vec![1.0; n_x]),
            QlpvMap::Polynomial { region_lo, region_hi, .. } => {
                (region_lo.clone(), region_hi.clone())
            }
        }
    }
}

/// A complete synthesis problem.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemSpec {
    pub system: LpvSystem,
    pub constraints: ConstraintData,
    pub performance: PerformanceSpec,
    pub qlpv: Option<QlpvMap>,
}

impl ProblemSpec {
    pub fn validate(&self) -> Result<(), ModelError> {
        self.system.validate()?;
        self.constraints.validate(self.system.n_x, self.system.n_u, self.system.n_w)?;
        self.performance.validate()?;
        if let Some(map) = &self.qlpv {
            let (lo, hi) = map.region(self.system.n_x);
            if lo.len() != self.system.n_x || hi.len() != self.system.n_x {
                return Err(invalid("qlpv.region", "region must match the state dimension"));
            }
            // the map must land on the simplex across the region
            let steps = 7usize;
            let mut idx = vec![0usize; self.system.n_x];
            loop {
                let x = DVector::from_fn(self.system.n_x, |i, _| {
                    lo[i] + (hi[i] - lo[i]) * idx[i] as f64 / (steps - 1) as f64
                });
                let xi = map.xi(&x)?;
                if xi.len() != self.system.num_vertices() {
                    return Err(invalid("qlpv", "map dimension must match N_xi"));
                }
                let mut carry = 0;
                while carry < idx.len() {
                    idx[carry] += 1;
                    if idx[carry] < steps {
                        break;
                    }
                    idx[carry] = 0;
                    carry += 1;
                }
                if carry == idx.len() {
                    break;
                }
            }
        }
        Ok(())
    }
}

// --- file schema -----------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct PerformanceFile {
    gamma: f64,
}

#[derive(Serialize, Deserialize)]
struct PolyMapFile {
    terms: Vec<Vec<PolyTerm>>,
    region_lo: Vec<f64>,
    region_hi: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct QlpvFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    preset: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    mu: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    poly: Option<PolyMapFile>,
}

#[derive(Serialize, Deserialize)]
struct ProblemFile {
    n_x: usize,
    n_u: usize,
    n_w: usize,
    n_z: usize,
    #[serde(rename = "N_xi")]
    n_xi: usize,
    #[serde(rename = "A")]
    a: Vec<Vec<Vec<f64>>>,
    #[serde(rename = "B")]
    b: Vec<Vec<Vec<f64>>>,
    #[serde(rename = "E")]
    e: Vec<Vec<Vec<f64>>>,
    #[serde(rename = "C")]
    c: Vec<Vec<Vec<f64>>>,
    #[serde(rename = "D")]
    d: Vec<Vec<Vec<f64>>>,
    #[serde(rename = "H_x")]
    h_x: Vec<Vec<f64>>,
    #[serde(rename = "H_u")]
    h_u: Vec<Vec<f64>>,
    #[serde(rename = "G")]
    g: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    performance: Option<PerformanceFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    qlpv: Option<QlpvFile>,
}

fn rows_to_matrix(field: &str, rows: &[Vec<f64>], nrows: usize, ncols: usize) -> Result<DMatrix<f64>, ModelError> {
    if rows.len() != nrows {
        return Err(invalid(field, format!("expected {nrows} rows, got {}", rows.len())));
    }
    let mut m = DMatrix::zeros(nrows, ncols);
    for (r, row) in rows.iter().enumerate() {
        if row.len() != ncols {
            return Err(invalid(
                &format!("{field}[{r}]"),
                format!("expected {ncols} columns, got {}", row.len()),
            ));
        }
        for (c, v) in row.iter().enumerate() {
            m[(r, c)] = *v;
        }
    }
    Ok(m)
}

fn matrix_to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|r| (0..m.ncols()).map(|c| m[(r, c)]).collect()).collect()
}

fn vertex_family(
    field: &str,
    data: &[Vec<Vec<f64>>],
    n_xi: usize,
    nrows: usize,
    ncols: usize,
) -> Result<Vec<DMatrix<f64>>, ModelError> {
    if data.len() != n_xi {
        return Err(invalid(field, format!("expected {n_xi} vertex matrices, got {}", data.len())));
    }
    data.iter()
        .enumerate()
        .map(|(k, rows)| rows_to_matrix(&format!("{field}[{k}]"), rows, nrows, ncols))
        .collect()
}

/// Parse and validate a problem from its JSON text.
pub fn parse_problem(text: &str) -> Result<ProblemSpec, ModelError> {
    let file: ProblemFile = serde_json::from_str(text).map_err(|e| ModelError::Parse(e.to_string()))?;
    if file.n_xi == 0 {
        return Err(invalid("N_xi", "N_xi must be >= 1"));
    }
    let system = LpvSystem {
        n_x: file.n_x,
        n_u: file.n_u,
        n_w: file.n_w,
        n_z: file.n_z,
        a: vertex_family("A", &file.a, file.n_xi, file.n_x, file.n_x)?,
        b: vertex_family("B", &file.b, file.n_xi, file.n_x, file.n_u)?,
        e: vertex_family("E", &file.e, file.n_xi, file.n_x, file.n_w)?,
        c: vertex_family("C", &file.c, file.n_xi, file.n_z, file.n_x)?,
        d: vertex_family("D", &file.d, file.n_xi, file.n_z, file.n_u)?,
    };
    let n_h = file.h_x.len();
    let n_g = file.g.len();
    let constraints = ConstraintData {
        h_x: rows_to_matrix("H_x", &file.h_x, n_h, file.n_x)?,
        h_u: rows_to_matrix("H_u", &file.h_u, n_h, file.n_u)?,
        g: rows_to_matrix("G", &file.g, n_g, file.n_w)?,
    };
    let performance = match file.performance {
        Some(p) => PerformanceSpec::with_gamma(p.gamma),
        None => PerformanceSpec::disabled(),
    };
    let qlpv = match file.qlpv {
        None => None,
        Some(q) => Some(match (q.preset.as_deref(), q.poly) {
            (Some("van-der-pol"), None) => QlpvMap::VanDerPol { mu: q.mu.unwrap_or(2.0) },
            (Some(other), _) => {
                return Err(invalid("qlpv.preset", format!("unknown preset '{other}'")));
            }
            (None, Some(p)) => QlpvMap::Polynomial {
                terms: p.terms,
                region_lo: p.region_lo,
                region_hi: p.region_hi,
            },
            (None, None) => return Err(invalid("qlpv", "needs either 'preset' or 'poly'")),
        }),
    };
    let spec = ProblemSpec { system, constraints, performance, qlpv };
    spec.validate()?;
    Ok(spec)
}

/// Serialize a problem back to its JSON file form.
pub fn serialize_problem(spec: &ProblemSpec) -> String {
    let sys = &spec.system;
    let file = ProblemFile {
        n_x: sys.n_x,
        n_u: sys.n_u,
        n_w: sys.n_w,
        n_z: sys.n_z,
        n_xi: sys.num_vertices(),
        a: sys.a.iter().map(matrix_to_rows).collect(),
        b: sys.b.iter().map(matrix_to_rows).collect(),
        e: sys.e.iter().map(matrix_to_rows).collect(),
        c: sys.c.iter().map(matrix_to_rows).collect(),
        d: sys.d.iter().map(matrix_to_rows).collect(),
        h_x: matrix_to_rows(&spec.constraints.h_x),
        h_u: matrix_to_rows(&spec.constraints.h_u),
        g: matrix_to_rows(&spec.constraints.g),
        performance: spec.performance.enabled.then(|| PerformanceFile { gamma: spec.performance.gamma }),
        qlpv: spec.qlpv.as_ref().map(|q| match q {
            QlpvMap::VanDerPol { mu } => QlpvFile { preset: Some("van-der-pol".into()), mu: Some(*mu), poly: None },
            QlpvMap::Polynomial { terms, region_lo, region_hi } => QlpvFile {
                preset: None,
                mu: None,
                poly: Some(PolyMapFile {
                    terms: terms.clone(),
                    region_lo: region_lo.clone(),
                    region_hi: region_hi.clone(),
                }),
            },
        }),
    };
    serde_json::to_string_pretty(&file).expect("problem serialization cannot fail")
}

/// Load, parse and validate a problem file.
pub fn load_problem(path: &Path) -> Result<ProblemSpec, ModelError> {
    let text = std::fs::read_to_string(path)?;
    parse_problem(&text)
}

// --- presets ---------------------------------------------------------------

/// Named built-in problems.
pub fn preset(name: &str, gamma: Option<f64>) -> Result<ProblemSpec, ModelError> {
    let spec = match name {
        "demo-1d" => demo_1d(gamma),
        "demo-double-integrator" => demo_double_integrator(gamma),
        "demo-van-der-pol" => demo_van_der_pol(gamma),
        other => return Err(invalid("preset", format!("unknown preset '{other}'"))),
    };
    spec.validate()?;
    Ok(spec)
}

pub const PRESET_NAMES: [&str; 3] = ["demo-1d", "demo-double-integrator", "demo-van-der-pol"];

/// Scalar plant `x+ = theta x + u`, `|theta| <= 2`, `|u| <= 1`, embedded
/// with `xi_1 = (2 - theta)/4`, `xi_2 = (theta + 2)/4`. A slack state
/// bound `|x| <= 5` keeps the state set bounded; the input constraint is
/// the binding one.
fn demo_1d(gamma: Option<f64>) -> ProblemSpec {
    let m = |v: &[f64], r: usize, c: usize| DMatrix::from_row_slice(r, c, v);
    ProblemSpec {
        system: LpvSystem {
            n_x: 1,
            n_u: 1,
            n_w: 1,
            n_z: 2,
            a: vec![m(&[-2.0], 1, 1), m(&[2.0], 1, 1)],
            b: vec![m(&[1.0], 1, 1), m(&[1.0], 1, 1)],
            e: vec![DMatrix::zeros(1, 1), DMatrix::zeros(1, 1)],
            c: vec![m(&[1.0, 0.0], 2, 1), m(&[1.0, 0.0], 2, 1)],
            d: vec![m(&[0.0, 1.0], 2, 1), m(&[0.0, 1.0], 2, 1)],
        },
        constraints: ConstraintData {
            h_x: m(&[0.0, 0.0, 0.2, -0.2], 4, 1),
            h_u: m(&[1.0, -1.0, 0.0, 0.0], 4, 1),
            g: m(&[1.0], 1, 1),
        },
        performance: gamma.map_or(PerformanceSpec::disabled(), PerformanceSpec::with_gamma),
        qlpv: None,
    }
}

/// Parameter-varying double integrator with `|theta| <= 0.25` embedded
/// as two vertices, box state/input constraints and `|w| <= 0.25`.
/// The output channel carries `Q_x = I`, `Q_u = 0.1` for the optional
/// energy bound. The energy bound itself requires `w = 0`, so the
/// bounded variant nulls the disturbance channel (shape-preserving
/// `E = 0`, `G = 1`).
fn demo_double_integrator(gamma: Option<f64>) -> ProblemSpec {
    let m = |v: &[f64], r: usize, c: usize| DMatrix::from_row_slice(r, c, v);
    let qu_sqrt = 0.1f64.sqrt();
    let (e, g) = if gamma.is_some() {
        (vec![DMatrix::zeros(2, 1), DMatrix::zeros(2, 1)], m(&[1.0], 1, 1))
    } else {
        (vec![m(&[1.0, 0.0], 2, 1), m(&[1.0, 0.0], 2, 1)], m(&[4.0], 1, 1))
    };
    ProblemSpec {
        system: LpvSystem {
            n_x: 2,
            n_u: 1,
            n_w: 1,
            n_z: 3,
            a: vec![
                m(&[0.75, 0.75, 0.0, 0.75], 2, 2),
                m(&[1.25, 1.25, 0.0, 1.25], 2, 2),
            ],
            b: vec![m(&[0.0, 0.75], 2, 1), m(&[0.0, 1.25], 2, 1)],
            e,
            c: vec![
                m(&[1.0, 0.0, 0.0, 1.0, 0.0, 0.0], 3, 2),
                m(&[1.0, 0.0, 0.0, 1.0, 0.0, 0.0], 3, 2),
            ],
            d: vec![m(&[0.0, 0.0, qu_sqrt], 3, 1), m(&[0.0, 0.0, qu_sqrt], 3, 1)],
        },
        constraints: ConstraintData {
            h_x: m(
                &[0.2, 0.0, -0.2, 0.0, 0.0, 0.2, 0.0, -0.2, 0.0, 0.0, 0.0, 0.0],
                6,
                2,
            ),
            h_u: m(&[0.0, 0.0, 0.0, 0.0, 1.0, -1.0], 6, 1),
            g,
        },
        performance: gamma.map_or(PerformanceSpec::disabled(), PerformanceSpec::with_gamma),
        qlpv: None,
    }
}

/// Euler-discretized controlled Van der Pol oscillator (`mu = 2`,
/// sampling time 0.1) in quasi-LPV form; the scheduling map is exact,
/// so scheduled simulation reproduces the nonlinear dynamics.
fn demo_van_der_pol(gamma: Option<f64>) -> ProblemSpec {
    let m = |v: &[f64], r: usize, c: usize| DMatrix::from_row_slice(r, c, v);
    ProblemSpec {
        system: LpvSystem {
            n_x: 2,
            n_u: 1,
            n_w: 1,
            n_z: 1,
            a: vec![
                m(&[1.0, 0.1, -0.1, 1.0], 2, 2),
                m(&[1.0, 0.1, -0.1, 1.2], 2, 2),
            ],
            b: vec![m(&[0.0, 0.1], 2, 1), m(&[0.0, 0.1], 2, 1)],
            e: vec![DMatrix::zeros(2, 1), DMatrix::zeros(2, 1)],
            c: vec![DMatrix::zeros(1, 2), DMatrix::zeros(1, 2)],
            d: vec![DMatrix::zeros(1, 1), DMatrix::zeros(1, 1)],
        },
        constraints: ConstraintData {
            h_x: m(
                &[1.0, 0.0, -1.0, 0.0, 0.0, 1.0, 0.0, -1.0, 0.0, 0.0, 0.0, 0.0],
                6,
                2,
            ),
            h_u: m(&[0.0, 0.0, 0.0, 0.0, 1.0, -1.0], 6, 1),
            g: m(&[1.0], 1, 1),
        },
        performance: gamma.map_or(PerformanceSpec::disabled(), PerformanceSpec::with_gamma),
        qlpv: Some(QlpvMap::VanDerPol { mu: 2.0 }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn vertex_weights_return_vertex_matrices() {
        let spec = preset("demo-double-integrator", None).unwrap();
        for k in 0..2 {
            let xi = SimplexPoint::vertex(k, 2);
            let m = evaluate_system(&spec.system, &xi).unwrap();
            assert_eq!(m.a, spec.system.a[k]);
            assert_eq!(m.b, spec.system.b[k]);
        }
    }

    #[test]
    fn midpoint_recovers_nominal_double_integrator() {
        let spec = preset("demo-double-integrator", None).unwrap();
        let xi = SimplexPoint::new(vec![0.5, 0.5]).unwrap();
        let m = evaluate_system(&spec.system, &xi).unwrap();
        let expect = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0]);
        assert_relative_eq!(m.a, expect, epsilon = 1e-15);
    }

    #[test]
    fn scalar_embedding_matches_parameter() {
        // theta = 1: xi = ((2-1)/4, (2+1)/4) = (0.25, 0.75) -> A = 1
        let spec = preset("demo-1d", None).unwrap();
        let xi = SimplexPoint::new(vec![0.25, 0.75]).unwrap();
        let m = evaluate_system(&spec.system, &xi).unwrap();
        assert_relative_eq!(m.a[(0, 0)], 1.0, epsilon = 1e-15);
    }

    #[test]
    fn evaluate_is_affine_in_xi() {
        let spec = preset("demo-double-integrator", None).unwrap();
        let xi1 = SimplexPoint::new(vec![0.3, 0.7]).unwrap();
        let xi2 = SimplexPoint::new(vec![0.9, 0.1]).unwrap();
        let lambda = 0.4;
        let mixed = SimplexPoint::new(
            xi1.weights()
                .iter()
                .zip(xi2.weights())
                .map(|(a, b)| lambda * a + (1.0 - lambda) * b)
                .collect(),
        )
        .unwrap();
        let m1 = evaluate_system(&spec.system, &xi1).unwrap();
        let m2 = evaluate_system(&spec.system, &xi2).unwrap();
        let mm = evaluate_system(&spec.system, &mixed).unwrap();
        let blend = &m1.a * lambda + &m2.a * (1.0 - lambda);
        assert_relative_eq!(mm.a, blend, epsilon = 1e-12);
        let blend_b = &m1.b * lambda + &m2.b * (1.0 - lambda);
        assert_relative_eq!(mm.b, blend_b, epsilon = 1e-12);
    }

    #[test]
    fn simplex_point_rejects_bad_sums() {
        assert!(SimplexPoint::new(vec![0.5, 0.6]).is_err());
        assert!(SimplexPoint::new(vec![-0.1, 1.1]).is_err());
        assert!(SimplexPoint::new(vec![0.5, 0.5]).is_ok());
    }

    #[test]
    fn zero_vertex_count_is_rejected() {
        let text = r#"{"n_x":1,"n_u":1,"n_w":1,"n_z":1,"N_xi":0,
            "A":[],"B":[],"E":[],"C":[],"D":[],
            "H_x":[[1.0]],"H_u":[[0.0]],"G":[[1.0]]}"#;
        let err = parse_problem(text).unwrap_err();
        assert!(err.to_string().contains("N_xi must be >= 1"), "{err}");
    }

    #[test]
    fn malformed_json_is_a_parse_error() {
        let err = parse_problem("{not json").unwrap_err();
        assert!(matches!(err, ModelError::Parse(_)));
    }

    #[test]
    fn round_trip_is_idempotent() {
        for name in PRESET_NAMES {
            let spec = preset(name, Some(10.0)).unwrap();
            let text = serialize_problem(&spec);
            let reloaded = parse_problem(&text).unwrap();
            assert_eq!(spec, reloaded, "{name}");
            let text2 = serialize_problem(&reloaded);
            assert_eq!(text, text2, "{name}");
        }
    }

    #[test]
    fn unbounded_state_set_is_rejected() {
        let mut spec = preset("demo-1d", None).unwrap();
        // drop the state rows, leaving only input constraints
        spec.constraints.h_x = DMatrix::from_row_slice(2, 1, &[0.0, 0.0]);
        spec.constraints.h_u = DMatrix::from_row_slice(2, 1, &[1.0, -1.0]);
        let err = spec.validate().unwrap_err();
        assert!(err.to_string().contains("bounded"), "{err}");
    }

    #[test]
    fn van_der_pol_map_is_exact_on_the_region() {
        let spec = preset("demo-van-der-pol", None).unwrap();
        let map = spec.qlpv.as_ref().unwrap();
        for &x1 in &[-1.0, -0.5, 0.0, 0.3, 1.0] {
            let x = DVector::from_vec(vec![x1, 0.2]);
            let xi = map.xi(&x).unwrap();
            // the embedding reproduces the nonlinear vector field exactly
            let m = evaluate_system(&spec.system, &xi).unwrap();
            let x2 = 0.2;
            let truth = DVector::from_vec(vec![
                x1 + 0.1 * x2,
                x2 + 0.1 * (-x1 + 2.0 * (1.0 - x1 * x1) * x2),
            ]);
            let embedded = &m.a * &x;
            assert_relative_eq!(embedded, truth, epsilon = 1e-12);
        }
        assert!(map.xi(&DVector::from_vec(vec![1.2, 0.0])).is_err());
    }
}
