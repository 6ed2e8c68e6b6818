//! Small dense deterministic solvers over linear inequality systems
//! `<g_j, theta> <= h_j` restricted to a normalization slice.

mod nnls;
mod qp;
mod simplex;
mod support;

pub use qp::{solve_min_norm_qp, solve_min_norm_qp_with, QpMethod, QpOptions};
pub use simplex::{feasibility_certificate, solve_lp};
pub use support::{count_support_constraints, SolverChoice};

use crate::error::{Error, Result};
use crate::linalg::{axpy, dot, norm};
use crate::model::{Action, Parameter, Slice};

/// Primal feasibility tolerance for status `Optimal`.
pub const FEAS_TOL: f64 = 1e-7;
/// Activity tolerance, multiplied by the row norm.
pub const ACT_TOL: f64 = 1e-7;
/// Distance above which a re-solve counts as a changed optimizer.
pub const SUPPORT_TOL: f64 = 1e-6;

/// Where a row came from: demonstration `demo` and the competing action.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RowOrigin {
    pub demo: usize,
    pub action: Option<Action>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub g: Vec<f64>,
    pub h: f64,
    pub origin: RowOrigin,
}

/// `<g_j, theta> <= h_j` for every row, plus the slice equality.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintSystem {
    pub dim: usize,
    pub slice: Slice,
    pub rows: Vec<Row>,
}

impl ConstraintSystem {
    pub fn new(dim: usize, slice: Slice) -> Self {
        Self {
            dim,
            slice,
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, g: Vec<f64>, h: f64, origin: RowOrigin) -> Result<()> {
        if g.len() != self.dim {
            return Err(Error::InvalidArgument(format!(
                "row has length {}, system dimension is {}",
                g.len(),
                self.dim
            )));
        }
        if !h.is_finite() || g.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidArgument("non-finite constraint row".into()));
        }
        self.rows.push(Row { g, h, origin });
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Distinct demonstration indices, in first-appearance order.
    pub fn demos(&self) -> Vec<usize> {
        let mut out: Vec<usize> = Vec::new();
        for r in &self.rows {
            if out.last() != Some(&r.origin.demo) && !out.contains(&r.origin.demo) {
                out.push(r.origin.demo);
            }
        }
        out
    }

    /// The system with every row of demonstration `demo` removed.
    pub fn without_demo(&self, demo: usize) -> Self {
        Self {
            dim: self.dim,
            slice: self.slice,
            rows: self.rows.iter().filter(|r| r.origin.demo != demo).cloned().collect(),
        }
    }

    /// Largest violation `max_j (<g_j, theta> - h_j)`, floored at zero.
    pub fn residual(&self, theta: &[f64]) -> f64 {
        self.rows
            .iter()
            .map(|r| dot(&r.g, theta) - r.h)
            .fold(0.0, f64::max)
    }

    pub fn active_rows(&self, theta: &[f64]) -> Vec<usize> {
        self.rows
            .iter()
            .enumerate()
            .filter(|(_, r)| (dot(&r.g, theta) - r.h).abs() <= ACT_TOL * norm(&r.g).max(1.0))
            .map(|(j, _)| j)
            .collect()
    }

    /// Eliminates the slice: `theta = anchor + Z y` with orthonormal `Z`.
    pub fn reduce(&self) -> Reduced {
        let anchor = self.slice.anchor(self.dim);
        let basis = self.slice.basis(self.dim);
        let k = basis.len();
        let m = self.rows.len();
        let mut g = Vec::with_capacity(m * k);
        let mut h = Vec::with_capacity(m);
        for r in &self.rows {
            g.extend(basis.iter().map(|z| dot(&r.g, z)));
            h.push(r.h - dot(&r.g, &anchor));
        }
        Reduced { anchor, basis, k, g, h }
    }
}

/// A constraint system in slice coordinates `y`: `G y <= h`, row-major `G`.
#[derive(Debug, Clone)]
pub struct Reduced {
    pub anchor: Vec<f64>,
    pub basis: Vec<Vec<f64>>,
    pub k: usize,
    pub g: Vec<f64>,
    pub h: Vec<f64>,
}

impl Reduced {
    pub fn m(&self) -> usize {
        self.h.len()
    }

    pub fn row(&self, j: usize) -> &[f64] {
        &self.g[j * self.k..(j + 1) * self.k]
    }

    pub fn lift(&self, y: &[f64]) -> Vec<f64> {
        let mut theta = self.anchor.clone();
        for (yi, z) in y.iter().zip(&self.basis) {
            axpy(*yi, z, &mut theta);
        }
        theta
    }

    /// `Z^T v`
    pub fn project(&self, v: &[f64]) -> Vec<f64> {
        self.basis.iter().map(|z| dot(z, v)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    MaxIterations,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub status: SolveStatus,
    /// Present unless the problem is infeasible or unbounded.
    pub solution: Option<Parameter>,
    /// Largest constraint violation at `solution`.
    pub residual: f64,
    /// Sweeps (QP) or pivots (LP).
    pub iterations: usize,
    pub active_rows: Vec<usize>,
    /// Row multipliers `mu_j >= 0` of the KKT system.
    pub multipliers: Vec<f64>,
    /// Multiplier of the slice equality, when a slice is active.
    pub slice_multiplier: Option<f64>,
    /// More active rows than free coordinates, or a zero basic variable.
    pub degenerate: bool,
}

impl SolveReport {
    pub(crate) fn failed(status: SolveStatus, iterations: usize) -> Self {
        Self {
            status,
            solution: None,
            residual: f64::INFINITY,
            iterations,
            active_rows: Vec::new(),
            multipliers: Vec::new(),
            slice_multiplier: None,
            degenerate: false,
        }
    }

    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }

    /// The optimal parameter, or the status as an error.
    pub fn into_parameter(self) -> Result<Parameter> {
        match (self.status, self.solution) {
            (SolveStatus::Optimal, Some(p)) => Ok(p),
            (status, _) => Err(Error::Solver(status)),
        }
    }
}

/// Builds the report for a candidate optimum in full coordinates.
pub(crate) fn finish_report(
    system: &ConstraintSystem,
    theta: Vec<f64>,
    multipliers: Vec<f64>,
    stationarity_base: &[f64],
    iterations: usize,
    status: SolveStatus,
) -> Result<SolveReport> {
    let residual = system.residual(&theta);
    let active_rows = system.active_rows(&theta);
    let free = system.slice.basis(system.dim).len();
    // v = base + sum mu_j g_j must lie in span(e); its component along e is
    // minus the slice multiplier.
    let slice_multiplier = system.slice.normal(system.dim).map(|e| {
        let mut v = stationarity_base.to_vec();
        for (mu, r) in multipliers.iter().zip(&system.rows) {
            if *mu != 0.0 {
                axpy(*mu, &r.g, &mut v);
            }
        }
        -dot(&e, &v) / dot(&e, &e)
    });
    let degenerate = active_rows.len() > free;
    let solution = Parameter::new(theta, system.slice)?;
    Ok(SolveReport {
        status,
        solution: Some(solution),
        residual,
        iterations,
        active_rows,
        multipliers,
        slice_multiplier,
        degenerate,
    })
}
