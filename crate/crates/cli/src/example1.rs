//! Deterministic checks on the two-state example: the boundary parameter
//! `(1, 0, 0)` is consistent but not an incenter point, while `(2, -2, 6)`
//! is a feasible incenter point with unique greedy actions.

use std::fmt;

use ioscen_core::estimators::{assemble_constraints, ConstraintMode};
use ioscen_core::instances::make_example_one;
use ioscen_core::linalg::dot;
use ioscen_core::losses::{consistency_residual, expert_in_greedy_set, incenter_loss};
use ioscen_core::solvers::ConstraintSystem;
use ioscen_core::{delta_features, greedy_action_set, Action, Context, Dataset, Instance, Result, DEFAULT_TIE_TOL};

/// Faults injected to show that the checks can fail.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fault {
    /// Flip the sign of every incenter margin `h = -||delta||`.
    IncenterRowSign,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{tag} {}: {}", self.name, self.detail)
    }
}

/// Largest `<theta, g> - h` over the rows of demonstration `demo`.
fn row_violation(system: &ConstraintSystem, theta: &[f64], demo: usize) -> f64 {
    system
        .rows
        .iter()
        .filter(|r| r.origin.demo == demo)
        .map(|r| dot(&r.g, theta) - r.h)
        .fold(f64::NEG_INFINITY, f64::max)
}

fn incenter_rows(ex: &Instance, ds: &Dataset, fault: Option<Fault>) -> Result<ConstraintSystem> {
    let mut sys = assemble_constraints(ex, ds, ConstraintMode::Incenter)?;
    if fault == Some(Fault::IncenterRowSign) {
        for r in &mut sys.rows {
            r.h = -r.h;
        }
    }
    Ok(sys)
}

pub fn verify_example_one(fault: Option<Fault>) -> Result<Vec<Check>> {
    let ex = make_example_one();
    let ds = Dataset::from_contexts(&ex, vec![Context::Label(0), Context::Label(1)])?;
    let boundary = [1.0, 0.0, 0.0];
    let inner = [2.0, -2.0, 6.0];
    let rows = incenter_rows(&ex, &ds, fault)?;
    let mut checks = Vec::with_capacity(4);

    let f = consistency_residual(&ex, &boundary, &ds)?.value;
    checks.push(Check {
        name: "consistency-of-boundary-point",
        passed: f <= DEFAULT_TIE_TOL,
        detail: format!("f_T(1,0,0) = {f}"),
    });

    // Two equiprobable states, so the set-level mismatch is exact.
    let mut misses = 0;
    for demo in &ds.demos {
        if !expert_in_greedy_set(&ex, &boundary, &demo.context, &demo.expert_action)? {
            misses += 1;
        }
    }
    let rate = misses as f64 / 2.0;
    checks.push(Check {
        name: "set-level-mismatch-zero",
        passed: misses == 0,
        detail: format!("P(expert not greedy under (1,0,0)) = {rate}"),
    });

    let n = match ex.action_space {
        ioscen_core::ActionSpace::TwoStateSquare { grid } => grid - 1,
        _ => unreachable!(),
    };
    let s0 = Context::Label(0);
    let delta = delta_features(&ex, &s0, &Action::Grid(n, n), &Action::Grid(n, 0))?;
    let violation = row_violation(&rows, &boundary, 0);
    let loss = incenter_loss(&ex, &boundary, &s0, &ds.demos[0].expert_action)?.value;
    checks.push(Check {
        name: "incenter-infeasibility-of-boundary-point",
        passed: delta == vec![0.0, 2.0, 0.0] && (violation - 2.0).abs() <= 1e-12 && loss >= 2.0,
        detail: format!("delta(0,(1,1)) = {delta:?}, row violation {violation}, incenter loss {loss}"),
    });

    let worst = (0..2).map(|t| row_violation(&rows, &inner, t)).fold(f64::NEG_INFINITY, f64::max);
    let mut singletons = true;
    for demo in &ds.demos {
        let set = greedy_action_set(&ex, &inner, &demo.context, DEFAULT_TIE_TOL)?;
        singletons &= set.is_singleton() && set.actions[0] == demo.expert_action;
    }
    checks.push(Check {
        name: "incenter-feasible-point-has-unique-actions",
        passed: worst <= 1e-12 && singletons,
        detail: format!("max incenter row violation at (2,-2,6) = {worst}, singleton expert sets: {singletons}"),
    });
    Ok(checks)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nominal_build_passes() {
        let checks = verify_example_one(None).unwrap();
        assert_eq!(checks.len(), 4);
        assert!(checks.iter().all(|c| c.passed), "{checks:?}");
    }

    #[test]
    fn flipped_incenter_sign_is_caught() {
        let checks = verify_example_one(Some(Fault::IncenterRowSign)).unwrap();
        let failed: Vec<_> = checks.iter().filter(|c| !c.passed).map(|c| c.name).collect();
        assert!(failed.contains(&"incenter-infeasibility-of-boundary-point"));
    }
}
