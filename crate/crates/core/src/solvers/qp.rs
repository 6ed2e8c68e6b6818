//! Minimum-norm QP: `min ||theta||^2` over `{theta on the slice : G theta <= h}`.
//!
//! After eliminating the slice with an orthonormal basis the problem is the
//! least-distance program `min 1/2 ||y||^2 s.t. G y <= h`. The default
//! method solves it exactly through Lawson–Hanson NNLS. The alternative is
//! Hildreth's dual coordinate
//! ascent: `y = -G^T mu` and each sweep takes exact coordinate maximization
//! steps `mu_j <- max(0, mu_j + (g_j . y - h_j) / ||g_j||^2)`.
//!
//! Whenever the support of `mu` changes, the active rows are solved as
//! equalities (a pseudo-inverse "polish"); the polished point is accepted
//! only if it is primal feasible with non-negative multipliers, which makes
//! it an exact KKT point.

use nalgebra::{DMatrix, DVector};

use super::nnls::{ldp, LdpOutcome};
use super::simplex::feasibility_certificate;
use super::{finish_report, ConstraintSystem, Reduced, SolveReport, SolveStatus, FEAS_TOL};
use crate::error::Result;
use crate::linalg::{axpy, dot};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum QpMethod {
    /// Finite active-set method (least distance via NNLS).
    #[default]
    ActiveSet,
    /// Dual coordinate ascent; slow on nearly parallel rows.
    Hildreth,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QpOptions {
    pub method: QpMethod,
    /// Converged when no multiplier moves by more than this in a sweep.
    pub update_tol: f64,
    pub max_sweeps: usize,
    pub feas_tol: f64,
    /// Sweeps between Farkas infeasibility checks.
    pub infeasibility_check_every: usize,
}

impl Default for QpOptions {
    fn default() -> Self {
        Self {
            method: QpMethod::ActiveSet,
            update_tol: 1e-10,
            max_sweeps: 100_000,
            feas_tol: FEAS_TOL,
            infeasibility_check_every: 2_000,
        }
    }
}

pub fn solve_min_norm_qp(system: &ConstraintSystem) -> Result<SolveReport> {
    solve_min_norm_qp_with(system, &QpOptions::default(), None)
}

/// `warm_start` gives initial row multipliers (e.g. from a solve on a
/// subset of the rows); missing entries start at zero.
pub fn solve_min_norm_qp_with(
    system: &ConstraintSystem,
    opts: &QpOptions,
    warm_start: Option<&[f64]>,
) -> Result<SolveReport> {
    let red = system.reduce();
    let m = red.m();
    let k = red.k;
    let norms2: Vec<f64> = (0..m).map(|j| dot(red.row(j), red.row(j))).collect();

    // Rows with no free component are either vacuous or infeasible.
    if (0..m).any(|j| norms2[j] <= 1e-24 && red.h[j] < -opts.feas_tol) {
        return Ok(SolveReport::failed(SolveStatus::Infeasible, 0));
    }

    let mut warm = warm_start.map(|w| w.to_vec());
    if opts.method == QpMethod::ActiveSet {
        let keep: Vec<usize> = (0..m).filter(|&j| norms2[j] > 1e-24).collect();
        let g: Vec<f64> = keep.iter().flat_map(|&j| red.row(j).iter().copied()).collect();
        let h: Vec<f64> = keep.iter().map(|&j| red.h[j]).collect();
        match ldp(&g, &h, k) {
            LdpOutcome::Solved { y, mu: mk, iterations } => {
                let mut mu = vec![0.0; m];
                for (&j, v) in keep.iter().zip(mk) {
                    mu[j] = v;
                }
                let violation = (0..m).map(|j| dot(red.row(j), &y) - red.h[j]).fold(0f64, f64::max);
                if violation <= opts.feas_tol {
                    return report(system, &red, &y, mu, iterations, SolveStatus::Optimal);
                }
                // Round-off on a badly conditioned system: refine below.
                warm = Some(mu);
            }
            LdpOutcome::Infeasible { iterations } => {
                if feasibility_certificate(&red.g, &red.h, k) < -1e-9 {
                    return Ok(SolveReport::failed(SolveStatus::Infeasible, iterations));
                }
            }
            LdpOutcome::IterationLimit => {}
        }
    }

    let mut mu = vec![0.0; m];
    if let Some(w) = warm.as_deref() {
        for (dst, src) in mu.iter_mut().zip(w) {
            *dst = src.max(0.0);
        }
    }
    let mut y = vec![0.0; k];
    for j in 0..m {
        if mu[j] > 0.0 && norms2[j] > 1e-24 {
            axpy(-mu[j], red.row(j), &mut y);
        } else {
            mu[j] = 0.0;
        }
    }

    let mut last_support: Option<Vec<usize>> = None;
    let mut sweeps = 0;
    loop {
        let support: Vec<usize> = (0..m).filter(|&j| mu[j] > 0.0).collect();
        if last_support.as_ref() != Some(&support) {
            if let Some((py, pmu)) = polish(&red, &support, opts.feas_tol) {
                return report(system, &red, &py, pmu, sweeps, SolveStatus::Optimal);
            }
            last_support = Some(support);
        }
        if sweeps >= opts.max_sweeps {
            let status = if feasibility_certificate(&red.g, &red.h, k) < -1e-9 {
                SolveStatus::Infeasible
            } else {
                SolveStatus::MaxIterations
            };
            return Ok(SolveReport::failed(status, sweeps));
        }
        let mut max_update = 0f64;
        for j in 0..m {
            if norms2[j] <= 1e-24 {
                continue;
            }
            let row = red.row(j);
            let r = dot(row, &y) - red.h[j];
            let next = (mu[j] + r / norms2[j]).max(0.0);
            let step = next - mu[j];
            if step != 0.0 {
                axpy(-step, row, &mut y);
                mu[j] = next;
                max_update = max_update.max(step.abs());
            }
        }
        sweeps += 1;
        if max_update < opts.update_tol {
            let violation = (0..m).map(|j| dot(red.row(j), &y) - red.h[j]).fold(0f64, f64::max);
            if violation <= opts.feas_tol {
                return report(system, &red, &y, mu, sweeps, SolveStatus::Optimal);
            }
        }
        if sweeps % opts.infeasibility_check_every == 0 && feasibility_certificate(&red.g, &red.h, k) < -1e-9 {
            return Ok(SolveReport::failed(SolveStatus::Infeasible, sweeps));
        }
    }
}

/// Solves the rows in `support` as equalities:
/// `y = pinv(G_A) h_A`, `mu_A = -pinv(G_A^T) y`.
fn polish(red: &Reduced, support: &[usize], feas_tol: f64) -> Option<(Vec<f64>, Vec<f64>)> {
    let k = red.k;
    let m = red.m();
    let mut mu = vec![0.0; m];
    let y = if support.is_empty() || k == 0 {
        vec![0.0; k]
    } else {
        let ga = DMatrix::from_fn(support.len(), k, |r, c| red.g[support[r] * k + c]);
        let ha = DVector::from_iterator(support.len(), support.iter().map(|&j| red.h[j]));
        let svd = ga.clone().svd(true, true);
        let eps = 1e-12 * svd.singular_values.max().max(1.0);
        let y = svd.solve(&ha, eps).ok()?;
        if (&ga * &y - &ha).amax() > feas_tol {
            return None;
        }
        let svd_t = ga.transpose().svd(true, true);
        let mu_a = svd_t.solve(&(-&y), eps).ok()?;
        if (ga.transpose() * &mu_a + &y).amax() > 1e-9 * (1.0 + y.amax()) {
            return None;
        }
        for (r, &j) in support.iter().enumerate() {
            if mu_a[r] < -1e-12 {
                return None;
            }
            mu[j] = mu_a[r].max(0.0);
        }
        y.iter().copied().collect()
    };
    let feasible = (0..m).all(|j| dot(red.row(j), &y) - red.h[j] <= feas_tol);
    feasible.then_some((y, mu))
}

fn report(
    system: &ConstraintSystem,
    red: &Reduced,
    y: &[f64],
    mu: Vec<f64>,
    sweeps: usize,
    status: SolveStatus,
) -> Result<SolveReport> {
    let theta = red.lift(y);
    // Stationarity of 1/2 ||theta||^2: theta + sum mu_j g_j + nu e = 0.
    let base = theta.clone();
    finish_report(system, theta, mu, &base, sweeps, status)
}
