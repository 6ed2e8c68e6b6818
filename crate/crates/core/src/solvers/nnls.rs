//! Lawson–Hanson non-negative least squares and the least-distance program
//! built on it.

use nalgebra::{DMatrix, DVector};

pub(crate) enum NnlsOutcome {
    Solved { u: DVector<f64>, iterations: usize },
    IterationLimit,
}

/// `min ||E u - f||` over `u >= 0`.
pub(crate) fn nnls(e: &DMatrix<f64>, f: &DVector<f64>, max_iter: usize) -> NnlsOutcome {
    let n = e.ncols();
    let mut u = DVector::zeros(n);
    let mut passive = vec![false; n];
    let scale = e.iter().fold(0f64, |m, x| m.max(x.abs())).max(1.0) * f.amax().max(1.0);
    let tol = 1e-12 * scale * (e.nrows() as f64);
    let mut iterations = 0;
    loop {
        let resid = f - e * &u;
        let w = e.tr_mul(&resid);
        let mut best = None;
        for j in 0..n {
            if !passive[j] && w[j] > tol && best.is_none_or(|(_, v)| w[j] > v) {
                best = Some((j, w[j]));
            }
        }
        let Some((j, _)) = best else {
            return NnlsOutcome::Solved { u, iterations };
        };
        passive[j] = true;
        let mut entered = Some(j);
        loop {
            iterations += 1;
            if iterations > max_iter {
                return NnlsOutcome::IterationLimit;
            }
            let idx: Vec<usize> = (0..n).filter(|&i| passive[i]).collect();
            let z = least_squares(e, f, &idx);
            if idx.iter().zip(z.iter()).all(|(_, &zi)| zi > 0.0) {
                for (&i, &zi) in idx.iter().zip(z.iter()) {
                    u[i] = zi;
                }
                break;
            }
            // A column that re-enters with a non-positive coefficient
            // cannot improve the fit: drop it and stop.
            if let Some(jn) = entered {
                let pos = idx.iter().position(|&i| i == jn).expect("entered column is passive");
                if z[pos] <= 0.0 && idx.len() == 1 {
                    passive[jn] = false;
                    return NnlsOutcome::Solved { u, iterations };
                }
            }
            let mut alpha = f64::INFINITY;
            for (&i, &zi) in idx.iter().zip(z.iter()) {
                if zi <= 0.0 {
                    let denom = u[i] - zi;
                    if denom > 0.0 {
                        alpha = alpha.min(u[i] / denom);
                    }
                }
            }
            if !alpha.is_finite() {
                alpha = 0.0;
            }
            for (&i, &zi) in idx.iter().zip(z.iter()) {
                u[i] += alpha * (zi - u[i]);
                if u[i] <= tol.min(1e-15) || (zi <= 0.0 && u[i] <= 1e-14 * (1.0 + zi.abs())) {
                    u[i] = 0.0;
                    passive[i] = false;
                }
            }
            entered = None;
        }
    }
}

fn least_squares(e: &DMatrix<f64>, f: &DVector<f64>, idx: &[usize]) -> DVector<f64> {
    let sub = e.select_columns(idx);
    let svd = sub.svd(true, true);
    let eps = 1e-13 * svd.singular_values.max().max(1e-300);
    svd.solve(f, eps).unwrap_or_else(|_| DVector::zeros(idx.len()))
}

pub(crate) enum LdpOutcome {
    /// `y` and multipliers `mu >= 0` with `y + G^T mu = 0`.
    Solved { y: Vec<f64>, mu: Vec<f64>, iterations: usize },
    Infeasible { iterations: usize },
    IterationLimit,
}

/// Least-distance program `min ||y||` s.t. `G y <= h`, `G` row-major
/// `m x k`, through the NNLS problem with `E = [-G^T; -h^T]` and
/// `f = e_{k+1}`. Rows are normalized first.
pub(crate) fn ldp(g: &[f64], h: &[f64], k: usize) -> LdpOutcome {
    let m = h.len();
    let norms: Vec<f64> = (0..m)
        .map(|j| g[j * k..(j + 1) * k].iter().map(|x| x * x).sum::<f64>().sqrt())
        .collect();
    let e = DMatrix::from_fn(k + 1, m, |r, c| {
        let s = 1.0 / norms[c];
        if r < k {
            -g[c * k + r] * s
        } else {
            -h[c] * s
        }
    });
    let mut f = DVector::zeros(k + 1);
    f[k] = 1.0;
    match nnls(&e, &f, 10 * (m + k + 1)) {
        NnlsOutcome::IterationLimit => LdpOutcome::IterationLimit,
        NnlsOutcome::Solved { u, iterations } => {
            let r = &e * &u - &f;
            // rho = -r_{k+1} = 1 + h^T u (scaled rows).
            let rho = -r[k];
            if r.norm() <= 1e-10 || rho <= 1e-14 {
                return LdpOutcome::Infeasible { iterations };
            }
            let y: Vec<f64> = (0..k).map(|i| -r[i] / r[k]).collect();
            let mu: Vec<f64> = (0..m).map(|j| u[j] / rho / norms[j]).collect();
            LdpOutcome::Solved { y, mu, iterations }
        }
    }
}
