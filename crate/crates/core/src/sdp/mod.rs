//! Semidefinite programs over named matrix variables.
//!
//! A problem collects variables, linear matrix inequalities `E(y) ⪰ m·I` or
//! `E(y) ⪯ −m·I`, linear equalities and a linear objective. It is compiled to
//! the block-diagonal dual form `max bᵀy s.t. C − Σ y_i A_i ⪰ 0` and solved by
//! the primal-dual interior-point method in [`ipm`]. Every returned point is
//! re-checked with a dense symmetric eigensolver.

mod expr;
mod ipm;
mod sdpa;

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

pub use expr::AffExpr;
pub use sdpa::write_sdpa;

use crate::error::{Error, Result};
use crate::linalg::{self, Mat};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarShape {
    Scalar,
    Symmetric(usize),
    Full(usize, usize),
}

impl VarShape {
    pub fn coords(&self) -> usize {
        match *self {
            VarShape::Scalar => 1,
            VarShape::Symmetric(n) => n * (n + 1) / 2,
            VarShape::Full(r, c) => r * c,
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        match *self {
            VarShape::Scalar => (1, 1),
            VarShape::Symmetric(n) => (n, n),
            VarShape::Full(r, c) => (r, c),
        }
    }
}

/// Handle to a declared decision variable.
#[derive(Debug, Clone, PartialEq)]
pub struct Var {
    name: String,
    offset: usize,
    shape: VarShape,
}

impl Var {
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn shape(&self) -> VarShape {
        self.shape
    }

    pub fn offset(&self) -> usize {
        self.offset
    }

    /// Coordinate of entry `(i, j)`, mirrored for symmetric variables.
    fn coord(&self, i: usize, j: usize) -> usize {
        match self.shape {
            VarShape::Scalar => self.offset,
            VarShape::Symmetric(n) => {
                let (a, b) = if i <= j { (i, j) } else { (j, i) };
                // Row-major packing of the upper triangle.
                self.offset + a * n - a * (a + 1) / 2 + b
            }
            VarShape::Full(_, c) => self.offset + i * c + j,
        }
    }

    pub fn expr(&self) -> AffExpr {
        let (r, c) = self.shape.dims();
        let mut terms = Vec::with_capacity(r * c);
        for i in 0..r {
            for j in 0..c {
                terms.push((self.coord(i, j), i, j, 1.0));
            }
        }
        AffExpr::from_terms(r, c, terms)
    }

    /// Reads the variable's value out of a coordinate vector.
    pub fn value(&self, y: &[f64]) -> Mat {
        let (r, c) = self.shape.dims();
        Mat::from_fn(r, c, |i, j| y[self.coord(i, j)])
    }

    /// Writes a value into a coordinate vector (upper triangle for symmetric).
    pub fn store(&self, m: &Mat, y: &mut [f64]) {
        let (r, c) = self.shape.dims();
        for i in 0..r {
            for j in 0..c {
                if matches!(self.shape, VarShape::Symmetric(_)) && j < i {
                    continue;
                }
                y[self.coord(i, j)] = m[(i, j)];
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sense {
    /// `E ⪰ margin·I`
    Psd,
    /// `E ⪯ −margin·I`
    Nsd,
}

#[derive(Debug, Clone)]
pub struct LmiConstraint {
    pub name: String,
    pub expr: AffExpr,
    pub sense: Sense,
    pub margin: f64,
}

#[derive(Debug, Clone, Default)]
pub struct SdpProblem {
    vars: Vec<Var>,
    n_coords: usize,
    lmis: Vec<LmiConstraint>,
    equalities: Vec<(AffExpr, Mat)>,
    objective: Option<AffExpr>,
}

impl SdpProblem {
    pub fn new() -> Self {
        Self::default()
    }

    fn add_var(&mut self, name: &str, shape: VarShape) -> Var {
        assert!(self.vars.iter().all(|v| v.name != name), "variable `{name}` declared twice");
        let v = Var { name: name.to_string(), offset: self.n_coords, shape };
        self.n_coords += shape.coords();
        self.vars.push(v.clone());
        v
    }

    pub fn scalar(&mut self, name: &str) -> Var {
        self.add_var(name, VarShape::Scalar)
    }

    pub fn symmetric(&mut self, name: &str, n: usize) -> Var {
        self.add_var(name, VarShape::Symmetric(n))
    }

    pub fn full(&mut self, name: &str, rows: usize, cols: usize) -> Var {
        self.add_var(name, VarShape::Full(rows, cols))
    }

    pub fn var(&self, name: &str) -> Option<&Var> {
        self.vars.iter().find(|v| v.name == name)
    }

    pub fn vars(&self) -> &[Var] {
        &self.vars
    }

    pub fn n_coords(&self) -> usize {
        self.n_coords
    }

    pub fn lmis(&self) -> &[LmiConstraint] {
        &self.lmis
    }

    pub fn objective(&self) -> Option<&AffExpr> {
        self.objective.as_ref()
    }

    /// Adds `expr ⪰ margin·I` (`Sense::Psd`) or `expr ⪯ −margin·I` (`Sense::Nsd`).
    pub fn add_lmi(&mut self, name: impl Into<String>, expr: AffExpr, sense: Sense, margin: f64) {
        self.lmis.push(LmiConstraint { name: name.into(), expr, sense, margin });
    }

    /// Adds the entrywise equality `expr = rhs`.
    pub fn add_equality(&mut self, expr: AffExpr, rhs: Mat) {
        self.equalities.push((expr, rhs));
    }

    /// Sets a 1×1 expression to minimize. Without one the problem is a
    /// feasibility problem.
    pub fn minimize(&mut self, objective: AffExpr) {
        self.objective = Some(objective);
    }

    /// Structural checks run before every solve.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::MalformedProblem(msg));
        for c in &self.lmis {
            if c.expr.rows() != c.expr.cols() || c.expr.rows() == 0 {
                return bad(format!("constraint `{}` is not square", c.name));
            }
            if c.expr.coord_bound() > self.n_coords {
                return bad(format!("constraint `{}` references an undeclared variable", c.name));
            }
            if !(c.margin >= 0.0 && c.margin.is_finite()) {
                return bad(format!("constraint `{}` has invalid margin {}", c.name, c.margin));
            }
            if !asymmetry_ok(&c.expr) {
                return bad(format!("constraint `{}` is not symmetric", c.name));
            }
            if c.expr.constant_part().iter().chain(c.expr.terms().iter().map(|t| &t.3)).any(|v| !v.is_finite()) {
                return bad(format!("constraint `{}` has non-finite data", c.name));
            }
        }
        for (e, rhs) in &self.equalities {
            if e.shape() != rhs.shape() {
                return bad("equality shape mismatch".into());
            }
            if e.coord_bound() > self.n_coords {
                return bad("equality references an undeclared variable".into());
            }
        }
        if let Some(obj) = &self.objective {
            if obj.shape() != (1, 1) {
                return bad("objective must be scalar".into());
            }
            if obj.coord_bound() > self.n_coords {
                return bad("objective references an undeclared variable".into());
            }
        }
        Ok(())
    }
}

fn asymmetry_ok(e: &AffExpr) -> bool {
    let d = e - &e.t();
    let scale = e.terms().iter().map(|t| t.3.abs()).fold(linalg::max_abs(e.constant_part()), f64::max).max(1.0);
    let worst = d.terms().iter().map(|t| t.3.abs()).fold(linalg::max_abs(d.constant_part()), f64::max);
    worst <= 1e-12 * scale
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SdpSettings {
    /// Relative primal and dual residual tolerance.
    pub feas_tol: f64,
    /// Relative complementarity gap tolerance.
    pub gap_tol: f64,
    pub max_iter: usize,
    /// Threshold on the normalized Farkas residual used to declare
    /// infeasibility or unboundedness.
    pub infeas_tol: f64,
    /// Relative slack allowed when re-checking constraints after a solve.
    pub verify_tol: f64,
}

impl Default for SdpSettings {
    fn default() -> Self {
        Self { feas_tol: 1e-8, gap_tol: 1e-8, max_iter: 200, infeas_tol: 1e-8, verify_tol: 1e-7 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SdpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    NumericalFailure,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct SolverDiagnostics {
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub relative_gap: f64,
    pub message: String,
}

/// Independent check of one constraint at the returned point.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConstraintCheck {
    pub name: String,
    /// `λmin(E) − margin` for `Psd`, `−λmax(E) − margin` for `Nsd`; nonnegative
    /// means satisfied.
    pub slack: f64,
    pub scale: f64,
    pub satisfied: bool,
}

#[derive(Debug, Clone)]
pub struct SdpSolution {
    pub status: SdpStatus,
    values: Option<Vec<f64>>,
    pub objective: Option<f64>,
    pub diagnostics: SolverDiagnostics,
    pub checks: Vec<ConstraintCheck>,
}

impl SdpSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == SdpStatus::Optimal
    }

    pub fn coords(&self) -> Option<&[f64]> {
        self.values.as_deref()
    }

    pub fn value(&self, v: &Var) -> Option<Mat> {
        self.values.as_ref().map(|y| v.value(y))
    }

    pub fn scalar(&self, v: &Var) -> Option<f64> {
        self.value(v).map(|m| m[(0, 0)])
    }

    fn failed(status: SdpStatus, diagnostics: SolverDiagnostics) -> Self {
        Self { status, values: None, objective: None, diagnostics, checks: Vec::new() }
    }
}

/// Evaluates every constraint of `problem` at `y`.
pub fn check_constraints(problem: &SdpProblem, y: &[f64], rel_tol: f64) -> Vec<ConstraintCheck> {
    problem
        .lmis
        .iter()
        .map(|c| {
            let m = linalg::symmetrize(&c.expr.eval(y));
            let slack = match c.sense {
                Sense::Psd => linalg::lambda_min(&m) - c.margin,
                Sense::Nsd => -linalg::lambda_max(&m) - c.margin,
            };
            let scale = 1.0 + m.norm();
            ConstraintCheck { name: c.name.clone(), slack, scale, satisfied: slack >= -rel_tol * scale }
        })
        .collect()
}

/// Affine parametrization `y = y0 + N t` of the equality-constrained
/// coordinates.
struct Reduction {
    y0: Vec<f64>,
    basis: Option<Mat>,
}

impl Reduction {
    fn lift(&self, t: &[f64]) -> Vec<f64> {
        match &self.basis {
            None => t.to_vec(),
            Some(b) => {
                let tv = nalgebra::DVector::from_column_slice(t);
                let y = b * tv;
                self.y0.iter().zip(y.iter()).map(|(a, b)| a + b).collect()
            }
        }
    }
}

fn reduce_equalities(problem: &SdpProblem) -> std::result::Result<Reduction, SdpStatus> {
    let n = problem.n_coords;
    if problem.equalities.is_empty() {
        return Ok(Reduction { y0: vec![0.0; n], basis: None });
    }
    let rows: usize = problem.equalities.iter().map(|(e, _)| e.rows() * e.cols()).sum();
    let mut a = Mat::zeros(rows, n);
    let mut b = nalgebra::DVector::zeros(rows);
    let mut r0 = 0;
    for (e, rhs) in &problem.equalities {
        let cols = e.cols();
        for &(k, i, j, v) in e.terms() {
            a[(r0 + i * cols + j, k)] += v;
        }
        for i in 0..e.rows() {
            for j in 0..cols {
                b[r0 + i * cols + j] = rhs[(i, j)] - e.constant_part()[(i, j)];
            }
        }
        r0 += e.rows() * cols;
    }
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let tol = smax.max(1.0) * 1e-12 * (n.max(rows) as f64);
    let y0 = svd.solve(&b, tol).map_err(|_| SdpStatus::NumericalFailure)?;
    let resid = (&a * &y0 - &b).norm();
    if resid > 1e-9 * (1.0 + b.norm()) {
        return Err(SdpStatus::Infeasible);
    }
    // Null space from the full right singular basis.
    let full = a.transpose() * &a;
    let eig = nalgebra::SymmetricEigen::new(full);
    let keep: Vec<usize> = (0..n).filter(|&i| eig.eigenvalues[i].abs() <= tol * smax.max(1.0)).collect();
    let basis = Mat::from_fn(n, keep.len(), |i, j| eig.eigenvectors[(i, keep[j])]);
    Ok(Reduction { y0: y0.iter().copied().collect(), basis: Some(basis) })
}

/// Solves `problem`. Only structural problems are errors; solver trouble is
/// reported through [`SdpStatus`].
pub fn solve(problem: &SdpProblem, settings: &SdpSettings) -> Result<SdpSolution> {
    problem.validate()?;
    let red = match reduce_equalities(problem) {
        Ok(r) => r,
        Err(status) => {
            let d = SolverDiagnostics { message: "linear equalities are inconsistent or degenerate".into(), ..Default::default() };
            return Ok(SdpSolution::failed(status, d));
        }
    };

    let mut objective = vec![0.0; problem.n_coords];
    let mut obj_const = 0.0;
    if let Some(o) = &problem.objective {
        obj_const = o.constant_part()[(0, 0)];
        for &(k, _, _, v) in o.terms() {
            objective[k] += v;
        }
    }

    let conic = ipm::Conic::build(problem, &red.y0, red.basis.as_ref(), &objective);
    // Coordinates that appear in no constraint are pinned to zero unless the
    // objective pushes on them, in which case the problem is unbounded.
    let used: HashSet<usize> = conic.used_coords();
    if (0..conic.m).any(|k| !used.contains(&k) && conic.b[k].abs() > 0.0) {
        let d = SolverDiagnostics { message: "objective depends on an unconstrained coordinate".into(), ..Default::default() };
        return Ok(SdpSolution::failed(SdpStatus::Unbounded, d));
    }

    let out = ipm::run(&conic, settings);
    let diagnostics = SolverDiagnostics {
        iterations: out.iterations,
        primal_residual: out.pinf,
        dual_residual: out.dinf,
        relative_gap: out.gap,
        message: out.message.clone(),
    };
    if out.status != SdpStatus::Optimal {
        return Ok(SdpSolution::failed(out.status, diagnostics));
    }
    let y = red.lift(&out.y);
    let checks = check_constraints(problem, &y, settings.verify_tol);
    if let Some(bad) = checks.iter().find(|c| !c.satisfied) {
        let mut d = diagnostics;
        d.message = format!("independent check failed for `{}` (slack {:.3e})", bad.name, bad.slack);
        return Ok(SdpSolution::failed(SdpStatus::NumericalFailure, d));
    }
    let obj = obj_const + objective.iter().zip(&y).map(|(c, v)| c * v).sum::<f64>();
    Ok(SdpSolution { status: SdpStatus::Optimal, values: Some(y), objective: Some(obj), diagnostics, checks })
}
