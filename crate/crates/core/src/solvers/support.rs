use super::{solve_lp, solve_min_norm_qp, ConstraintSystem, SolveReport, SolveStatus, SUPPORT_TOL};
use crate::error::{Error, Result};
use crate::linalg::dist;

/// Which program a support count refers to.
#[derive(Debug, Clone, PartialEq)]
pub enum SolverChoice {
    Qp,
    /// Minimize `<c, theta>`.
    Lp(Vec<f64>),
}

impl SolverChoice {
    pub fn solve(&self, system: &ConstraintSystem) -> Result<SolveReport> {
        match self {
            SolverChoice::Qp => solve_min_norm_qp(system),
            SolverChoice::Lp(c) => solve_lp(c, system),
        }
    }
}

/// Number of demonstrations whose rows, removed together, move the optimizer
/// by more than `SUPPORT_TOL`. A removal that makes the program unbounded
/// counts as a move.
///
/// Demonstrations with no active row at the optimum are skipped: dropping
/// constraints that are slack at a convex optimum leaves it optimal, and
/// the optimum is unique for the QP and for generic LP data.
pub fn count_support_constraints(system: &ConstraintSystem, choice: &SolverChoice) -> Result<usize> {
    let base = choice.solve(system)?;
    if base.status != SolveStatus::Optimal {
        return Err(Error::Solver(base.status));
    }
    let theta = base.solution.as_ref().map(|p| p.coords().to_vec()).unwrap_or_default();
    let mut candidates: Vec<usize> = base.active_rows.iter().map(|&j| system.rows[j].origin.demo).collect();
    candidates.sort_unstable();
    candidates.dedup();
    let mut count = 0;
    for demo in candidates {
        let rep = choice.solve(&system.without_demo(demo))?;
        let moved = match rep.status {
            SolveStatus::Optimal => {
                let other = rep.solution.as_ref().map(|p| p.coords()).unwrap_or(&[]);
                dist(&theta, other) > SUPPORT_TOL
            }
            SolveStatus::Unbounded => true,
            status => return Err(Error::Solver(status)),
        };
        if moved {
            count += 1;
        }
    }
    Ok(count)
}
