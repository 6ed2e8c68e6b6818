//! Dense two-phase simplex with Bland's rule.
//!
//! The inequality LPs here have few variables (`k <= 30`) and many rows, so
//! `min <c, y> s.t. G y <= h` is solved through its standard-form dual
//! `min <h, mu> s.t. G^T mu = -c, mu >= 0`, whose tableau has only `k` rows.
//! The primal optimizer is recovered as the simplex multipliers of the dual.

use nalgebra::{DMatrix, DVector};

use super::{finish_report, ConstraintSystem, SolveReport, SolveStatus};
use crate::error::{Error, Result};
use crate::linalg::{dot, norm};

/// Phase-one objective above which a standard-form LP is infeasible.
const PHASE1_TOL: f64 = 1e-7;
const PIVOT_TOL: f64 = 1e-11;
const COST_TOL: f64 = 1e-11;
const MAX_PIVOTS: usize = 50_000;

#[derive(Debug, Clone)]
pub(crate) enum StandardOutcome {
    Optimal {
        x: Vec<f64>,
        /// Multipliers `pi` with `B^T pi = c_B` (in the caller's row signs).
        duals: Vec<f64>,
        pivots: usize,
        degenerate: bool,
    },
    Infeasible {
        pivots: usize,
    },
    Unbounded {
        pivots: usize,
    },
    PivotLimit {
        pivots: usize,
    },
}

struct Tableau {
    m: usize,
    /// Number of structural columns; artificials follow.
    width: usize,
    t: Vec<f64>,
    obj: Vec<f64>,
    basis: Vec<usize>,
    pivots: usize,
}

impl Tableau {
    fn at(&self, i: usize, j: usize) -> f64 {
        self.t[i * self.width + j]
    }

    fn rhs(&self, i: usize) -> f64 {
        self.at(i, self.width - 1)
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let w = self.width;
        let p = self.t[r * w + c];
        for j in 0..w {
            self.t[r * w + j] /= p;
        }
        let (before, rest) = self.t.split_at_mut(r * w);
        let (prow, after) = rest.split_at_mut(w);
        for row in before.chunks_exact_mut(w).chain(after.chunks_exact_mut(w)) {
            let f = row[c];
            if f != 0.0 {
                for (x, y) in row.iter_mut().zip(prow.iter()) {
                    *x -= f * y;
                }
            }
        }
        let f = self.obj[c];
        if f != 0.0 {
            for (x, y) in self.obj.iter_mut().zip(prow.iter()) {
                *x -= f * y;
            }
        }
        self.basis[r] = c;
        self.pivots += 1;
    }

    /// Bland's rule iterations over columns `< allowed`. Errs on an
    /// unbounded ray or at the pivot limit.
    fn run(&mut self, allowed: usize) -> std::result::Result<(), StandardOutcome> {
        loop {
            if self.pivots >= MAX_PIVOTS {
                return Err(StandardOutcome::PivotLimit { pivots: self.pivots });
            }
            let Some(enter) = (0..allowed).find(|&j| self.obj[j] < -COST_TOL) else {
                return Ok(());
            };
            let mut leave: Option<(usize, f64)> = None;
            for i in 0..self.m {
                let a = self.at(i, enter);
                if a > PIVOT_TOL {
                    let ratio = self.rhs(i) / a;
                    leave = match leave {
                        None => Some((i, ratio)),
                        Some((li, lr)) => {
                            let tie = (ratio - lr).abs() <= 1e-12 * (1.0 + lr.abs());
                            if ratio < lr && !tie || tie && self.basis[i] < self.basis[li] {
                                Some((i, ratio))
                            } else {
                                Some((li, lr))
                            }
                        }
                    };
                }
            }
            match leave {
                Some((r, _)) => self.pivot(r, enter),
                None => return Err(StandardOutcome::Unbounded { pivots: self.pivots }),
            }
        }
    }
}

/// `min c^T x s.t. A x = b, x >= 0` with dense row-major `A` (`m x n`).
pub(crate) fn solve_standard(a: &[f64], m: usize, n: usize, b: &[f64], c: &[f64]) -> StandardOutcome {
    debug_assert_eq!(a.len(), m * n);
    let width = n + m + 1;
    let mut t = vec![0.0; m * width];
    let mut sign = vec![1.0; m];
    for i in 0..m {
        sign[i] = if b[i] < 0.0 { -1.0 } else { 1.0 };
        for j in 0..n {
            t[i * width + j] = sign[i] * a[i * n + j];
        }
        t[i * width + n + i] = 1.0;
        t[i * width + width - 1] = sign[i] * b[i];
    }
    // Phase one: minimize the sum of artificials.
    let mut obj = vec![0.0; width];
    for i in 0..m {
        for j in 0..n {
            obj[j] -= t[i * width + j];
        }
        obj[width - 1] -= t[i * width + width - 1];
    }
    let mut tab = Tableau {
        m,
        width,
        t,
        obj,
        basis: (n..n + m).collect(),
        pivots: 0,
    };
    if let Err(out) = tab.run(n) {
        // Phase one is bounded below by zero; only the pivot limit can stop it.
        return out;
    }
    let phase1 = -tab.obj[width - 1];
    if phase1 > PHASE1_TOL {
        return StandardOutcome::Infeasible { pivots: tab.pivots };
    }
    // Drive remaining artificials out where a structural column allows it;
    // rows where none does are redundant and keep their zero artificial.
    for i in 0..m {
        if tab.basis[i] >= n {
            if let Some(j) = (0..n).find(|&j| tab.at(i, j).abs() > 1e-9) {
                tab.pivot(i, j);
            }
        }
    }
    // Phase two.
    let mut obj = vec![0.0; width];
    obj[..n].copy_from_slice(c);
    for i in 0..m {
        let cb = if tab.basis[i] < n { c[tab.basis[i]] } else { 0.0 };
        if cb != 0.0 {
            for j in 0..width {
                obj[j] -= cb * tab.at(i, j);
            }
        }
    }
    tab.obj = obj;
    if let Err(out) = tab.run(n) {
        return out;
    }
    let mut x = vec![0.0; n];
    let mut degenerate = false;
    for i in 0..m {
        if tab.basis[i] < n {
            let v = tab.rhs(i).max(0.0);
            x[tab.basis[i]] = v;
            degenerate |= v <= 1e-12;
        }
    }
    // B^T pi = c_B over the original (sign-flipped) columns.
    let bmat = DMatrix::from_fn(m, m, |i, r| {
        let j = tab.basis[r];
        if j < n {
            sign[i] * a[i * n + j]
        } else if j - n == i {
            1.0
        } else {
            0.0
        }
    });
    let cb = DVector::from_fn(m, |r, _| if tab.basis[r] < n { c[tab.basis[r]] } else { 0.0 });
    let duals = match bmat.transpose().lu().solve(&cb) {
        Some(pi) => (0..m).map(|i| sign[i] * pi[i]).collect(),
        None => vec![f64::NAN; m],
    };
    StandardOutcome::Optimal {
        x,
        duals,
        pivots: tab.pivots,
        degenerate,
    }
}

/// Farkas test for `{y : G y <= h}` (row-major `G`, `m x k`). Returns the
/// optimal value of `min <h, mu> s.t. G^T mu = 0, sum(mu) <= 1, mu >= 0` over
/// row-normalized data; a negative value certifies infeasibility.
pub fn feasibility_certificate(g: &[f64], h: &[f64], k: usize) -> f64 {
    let m = h.len();
    // Columns: mu_1..mu_m, sigma. Rows: k equations, then the budget.
    let n = m + 1;
    let rows = k + 1;
    let mut a = vec![0.0; rows * n];
    let mut cost = vec![0.0; n];
    let mut worst_zero_row = 0f64;
    for j in 0..m {
        let gj = &g[j * k..(j + 1) * k];
        let scale = norm(gj);
        if scale <= 1e-14 {
            // 0 <= h_j
            worst_zero_row = worst_zero_row.min(h[j]);
            continue;
        }
        for i in 0..k {
            a[i * n + j] = gj[i] / scale;
        }
        a[k * n + j] = 1.0;
        cost[j] = h[j] / scale;
    }
    a[k * n + m] = 1.0;
    let mut b = vec![0.0; rows];
    b[k] = 1.0;
    let lp_value = match solve_standard(&a, rows, n, &b, &cost) {
        StandardOutcome::Optimal { x, .. } => dot(&x, &cost),
        _ => 0.0,
    };
    lp_value.min(worst_zero_row)
}

/// `min <c, theta>` over the polytope `{theta on the slice : G theta <= h}`.
///
/// Returns a vertex optimizer chosen deterministically by Bland's rule.
pub fn solve_lp(c: &[f64], system: &ConstraintSystem) -> Result<SolveReport> {
    if c.len() != system.dim {
        return Err(Error::InvalidArgument("objective dimension mismatch".into()));
    }
    let red = system.reduce();
    let k = red.k;
    let m = red.m();
    let cr = red.project(c);
    if k == 0 || norm(&cr) == 0.0 {
        return Err(Error::InvalidArgument(
            "objective must be non-zero on the free coordinates of the slice".into(),
        ));
    }
    // Dual: rows are coordinates of y, columns are constraint rows.
    let mut a = vec![0.0; k * m];
    for j in 0..m {
        for i in 0..k {
            a[i * m + j] = red.g[j * k + i];
        }
    }
    let b: Vec<f64> = cr.iter().map(|x| -x).collect();
    match solve_standard(&a, k, m, &b, &red.h) {
        StandardOutcome::Optimal {
            x,
            duals,
            pivots,
            degenerate,
        } => {
            if duals.iter().any(|v| !v.is_finite()) {
                return Ok(SolveReport::failed(SolveStatus::MaxIterations, pivots));
            }
            let theta = red.lift(&duals);
            // Stationarity of <c, theta>: c + sum mu_j g_j + nu e = 0.
            let mut report = finish_report(system, theta, x, c, pivots, SolveStatus::Optimal)?;
            report.degenerate |= degenerate;
            if report.residual > super::FEAS_TOL * (1.0 + red.h.iter().fold(0f64, |s, v| s.max(v.abs()))) {
                report.status = SolveStatus::MaxIterations;
            }
            Ok(report)
        }
        // A bounded dual means the primal has no optimum: either unbounded
        // (primal feasible) or infeasible.
        StandardOutcome::Infeasible { pivots } => {
            let status = if feasibility_certificate(&red.g, &red.h, k) < -1e-9 {
                SolveStatus::Infeasible
            } else {
                SolveStatus::Unbounded
            };
            Ok(SolveReport::failed(status, pivots))
        }
        StandardOutcome::Unbounded { pivots } => Ok(SolveReport::failed(SolveStatus::Infeasible, pivots)),
        StandardOutcome::PivotLimit { pivots } => Ok(SolveReport::failed(SolveStatus::MaxIterations, pivots)),
    }
}
