//! Sample-complexity calculus: binomial tails, `N(eps, beta)`, the explicit
//! `eps(T)`, action-level and regret bounds, and the covariance-diversity
//! diagnostic.

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::sub;
use crate::model::Instance;
use crate::rng::{derive_seed, rng_from_seed};

/// `sum_{i=0}^{d-1} C(T, i) eps^i (1 - eps)^(T - i)`: the probability that
/// fewer than `d` of `T` independent `eps`-events occur.
///
/// Terms are formed in log space, with `ln C(T, i)` built incrementally,
/// and summed with Kahan compensation.
pub fn binomial_tail(t: u64, d: u64, eps: f64) -> f64 {
    if d == 0 {
        return 0.0;
    }
    let top = (d - 1).min(t);
    if eps <= 0.0 {
        return 1.0;
    }
    if eps >= 1.0 {
        // Only the i = T term can survive, and only when T < d.
        return if t < d { 1.0 } else { 0.0 };
    }
    let ln_e = eps.ln();
    let ln_q = (-eps).ln_1p();
    let tf = t as f64;
    let mut ln_c = 0.0;
    let mut sum = 0.0;
    let mut comp = 0.0;
    for i in 0..=top {
        if i > 0 {
            ln_c += ((tf - i as f64 + 1.0) / i as f64).ln();
        }
        let term = (ln_c + i as f64 * ln_e + (tf - i as f64) * ln_q).exp();
        let y = term - comp;
        let next = sum + y;
        comp = (next - sum) - y;
        sum = next;
    }
    sum.clamp(0.0, 1.0)
}

/// Outcome of [`sample_complexity_n`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleSize {
    Exact(u64),
    /// No finite sample size reaches the confidence level (`eps = 0`), or
    /// the search cap was exceeded.
    NotInformative,
}

impl SampleSize {
    pub fn value(self) -> Option<u64> {
        match self {
            SampleSize::Exact(n) => Some(n),
            SampleSize::NotInformative => None,
        }
    }
}

const SEARCH_CAP: u64 = 1 << 40;

/// `N(eps, beta) = min { n >= d : binomial_tail(n, d, eps) <= beta }`.
///
/// The tail is non-increasing in `n` for `n >= d`, so an exponential
/// bracket followed by bisection finds the minimum.
pub fn sample_complexity_n(d: u64, eps: f64, beta: f64) -> SampleSize {
    if !(eps > 0.0) || d == 0 || !(beta > 0.0 && beta < 1.0) {
        return SampleSize::NotInformative;
    }
    let ok = |n: u64| binomial_tail(n, d, eps) <= beta;
    if ok(d) {
        return SampleSize::Exact(d);
    }
    let mut lo = d;
    let mut hi = d.max(1) * 2;
    while !ok(hi) {
        if hi >= SEARCH_CAP {
            return SampleSize::NotInformative;
        }
        lo = hi;
        hi *= 2;
    }
    // Invariant: !ok(lo), ok(hi).
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if ok(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    SampleSize::Exact(hi)
}

/// Sample size below which [`epsilon_explicit`] is unavailable:
/// `2 (d + ln(1/beta))`.
pub fn low_data_threshold(d: usize, beta: f64) -> f64 {
    2.0 * (d as f64 + (1.0 / beta).ln())
}

/// `eps(T) = 2 (d + ln(1/beta)) / T`, valid for `T >= 2 (d + ln(1/beta))`.
pub fn epsilon_explicit(t: usize, d: usize, beta: f64) -> Result<f64> {
    if !(beta > 0.0 && beta < 1.0) {
        return Err(Error::InvalidArgument(format!("beta must lie in (0, 1), got {beta}")));
    }
    let required = low_data_threshold(d, beta);
    // Relative slack absorbs rounding in ln(1/beta) at the boundary.
    if (t as f64) < required * (1.0 - 1e-12) {
        return Err(Error::LowDataRegime { t, required });
    }
    Ok((required / t as f64).min(1.0))
}

/// `eps B^2 / lambda`, clamped to `[0, 1]`.
pub fn action_level_bound(eps: f64, b: f64, lambda: f64) -> Result<f64> {
    check_positive(b, lambda)?;
    Ok((eps * b * b / lambda).clamp(0.0, 1.0))
}

/// Slack variant: `eps B^2 / lambda + gamma^2 / (lambda ||theta||^2)`,
/// clamped to `[0, 1]`.
pub fn action_level_bound_with_slack(eps: f64, b: f64, lambda: f64, gamma: f64, theta_norm: f64) -> Result<f64> {
    check_positive(b, lambda)?;
    if !(theta_norm > 0.0) {
        return Err(Error::InvalidArgument("theta norm must be positive".into()));
    }
    let v = eps * b * b / lambda + gamma * gamma / (lambda * theta_norm * theta_norm);
    Ok(v.clamp(0.0, 1.0))
}

fn check_positive(b: f64, lambda: f64) -> Result<()> {
    if !(b > 0.0) {
        return Err(Error::InvalidArgument(format!("B must be positive, got {b}")));
    }
    if !(lambda > 0.0) {
        return Err(Error::InvalidArgument(format!("lambda must be positive, got {lambda}")));
    }
    Ok(())
}

/// `d ln((T + 1) / (d + 1))`, the expected cumulative regret any consistent
/// linear-objective learner suffers on the tightness instance.
pub fn regret_lower_bound(t: usize, d: usize) -> Result<f64> {
    if t < d + 1 {
        return Err(Error::InvalidArgument(format!("regret lower bound needs T >= d + 1 (T={t}, d={d})")));
    }
    Ok(d as f64 * ((t as f64 + 1.0) / (d as f64 + 1.0)).ln())
}

/// `E[X_N] <= d / (N + 1)` for the mismatch probability after `N` samples.
pub fn expected_mismatch_bound(n: usize, d: usize) -> f64 {
    d as f64 / (n as f64 + 1.0)
}

/// `E[r_t] <= ||theta*|| B d / t` for `t >= d + 1`.
pub fn expected_regret_bound(t: usize, d: usize, theta_star_norm: f64, b: f64) -> Result<f64> {
    if t < d + 1 {
        return Err(Error::InvalidArgument(format!("needs t >= d + 1 (t={t}, d={d})")));
    }
    Ok(theta_star_norm * b * d as f64 / t as f64)
}

const DIVERSITY_CHUNK: usize = 1024;

/// Smallest eigenvalue of `E[delta delta^T | a_theta(s) != a_theta*(s)]`,
/// with `delta = psi(s, a_theta(s)) - psi(s, a_theta*(s))`, estimated from
/// `n_samples` contexts. Returns `+inf` when no disagreement is sampled.
///
/// Contexts are drawn in fixed-size chunks with per-chunk seeds and the
/// partial moments are summed in chunk order, so the estimate does not
/// depend on the thread count.
pub fn estimate_covariance_diversity(instance: &Instance, theta: &[f64], n_samples: usize, seed: u64) -> Result<f64> {
    let d = instance.dim();
    if n_samples < 50 * d {
        return Err(Error::InvalidArgument(format!("need at least 50 d = {} samples", 50 * d)));
    }
    if theta.len() != d {
        return Err(Error::InvalidParameter("theta has the wrong dimension".into()));
    }
    let n_chunks = n_samples.div_ceil(DIVERSITY_CHUNK);
    let partials: Vec<Result<(DMatrix<f64>, usize)>> = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = rng_from_seed(derive_seed(seed, c as u64));
            let len = DIVERSITY_CHUNK.min(n_samples - c * DIVERSITY_CHUNK);
            let mut m = DMatrix::zeros(d, d);
            let mut count = 0;
            for _ in 0..len {
                let s = instance.sample_context(&mut rng);
                let a = instance.policy_action(theta, &s)?;
                let star = instance.expert_action(&s)?;
                if a != star {
                    let delta = sub(&instance.features(&s, &a)?, &instance.features(&s, &star)?);
                    let v = nalgebra::DVector::from_vec(delta);
                    m += &v * v.transpose();
                    count += 1;
                }
            }
            Ok((m, count))
        })
        .collect();
    let mut total = DMatrix::zeros(d, d);
    let mut count = 0;
    for p in partials {
        let (m, c) = p?;
        total += m;
        count += c;
    }
    if count == 0 {
        return Ok(f64::INFINITY);
    }
    total /= count as f64;
    let eig = SymmetricEigen::new(total);
    Ok(eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min).max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances::{make_example_one, make_synthetic};
    use crate::model::{ActionSpace, ContextModel, FeatureMap, Parameter, Slice, TieBreak};
    use proptest::prelude::*;

    /// Direct sum with exact binomial coefficients, for small `T`.
    fn naive_tail(t: u64, d: u64, eps: f64) -> f64 {
        let mut s = 0.0;
        let mut c = 1.0;
        for i in 0..d.min(t + 1) {
            if i > 0 {
                c = c * (t - i + 1) as f64 / i as f64;
            }
            s += c * eps.powi(i as i32) * (1.0 - eps).powi((t - i) as i32);
        }
        s
    }

    #[test]
    fn tail_edge_cases() {
        assert_eq!(binomial_tail(17, 3, 0.0), 1.0);
        assert_eq!(binomial_tail(17, 3, 1.0), 0.0);
        assert_eq!(binomial_tail(3, 3, 1.0), 0.0);
        assert!((binomial_tail(10, 1, 0.1) - 0.9f64.powi(10)).abs() < 1e-15);
        assert!((binomial_tail(10, 1, 0.1) - 0.348678).abs() < 1e-6);
        // 0.8^20 + 20 * 0.2 * 0.8^19
        assert!((binomial_tail(20, 2, 0.2) - 0.069175).abs() < 1e-6);
    }

    #[test]
    fn tail_matches_naive_sum() {
        for t in [1u64, 5, 20, 60] {
            for d in [1u64, 2, 5, 10] {
                for eps in [0.01, 0.1, 0.37, 0.9] {
                    let (a, b) = (binomial_tail(t, d, eps), naive_tail(t, d, eps));
                    assert!((a - b).abs() < 1e-12, "t={t} d={d} eps={eps}: {a} vs {b}");
                }
            }
        }
    }

    #[test]
    fn tail_is_stable_at_large_t() {
        let v = binomial_tail(1_000_000, 20, 1e-5);
        assert!(v.is_finite() && (0.0..=1.0).contains(&v));
        // Poisson(10) CDF at 19, to 1e-6.
        assert!((v - 0.996546).abs() < 1e-4);
    }

    #[test]
    fn sample_complexity_examples() {
        assert_eq!(sample_complexity_n(4, 1.0, 0.1), SampleSize::Exact(4));
        assert_eq!(sample_complexity_n(1, 0.1, 0.1), SampleSize::Exact(22));
        assert!(0.9f64.powi(22) <= 0.1 && 0.9f64.powi(21) > 0.1);
        assert_eq!(sample_complexity_n(3, 0.0, 0.1), SampleSize::NotInformative);
        let eps = 2.0 * (5.0 + 10f64.ln()) / 15.0;
        assert!((eps - 0.9737).abs() < 1e-4);
        assert!(binomial_tail(15, 5, eps) <= 0.1);
        assert!(sample_complexity_n(5, eps, 0.1).value().unwrap() <= 15);
    }

    #[test]
    fn epsilon_explicit_examples() {
        assert!((epsilon_explicit(300, 5, 0.1).unwrap() - 0.048684).abs() < 1e-6);
        let beta = (-1f64).exp();
        assert!((epsilon_explicit(12, 5, beta).unwrap() - 1.0).abs() < 1e-12);
        assert!(matches!(epsilon_explicit(14, 5, 0.1), Err(Error::LowDataRegime { .. })));
    }

    #[test]
    fn action_level_examples() {
        assert_eq!(action_level_bound(0.0, 2.0, 1.0).unwrap(), 0.0);
        assert_eq!(action_level_bound(0.3, 2.0, 4.0).unwrap(), 0.3);
        assert_eq!(action_level_bound(0.5, 10.0, 1.0).unwrap(), 1.0);
        assert!(action_level_bound(0.1, 1.0, 0.0).is_err());
        let v = action_level_bound_with_slack(0.01, 1.0, 0.5, 0.1, 2.0).unwrap();
        assert!((v - (0.02 + 0.01 / 2.0)).abs() < 1e-15);
    }

    #[test]
    fn regret_lower_bound_examples() {
        assert!((regret_lower_bound(3, 2).unwrap() - 0.575364).abs() < 1e-6);
        assert!((regret_lower_bound(99, 2).unwrap() - 7.013116).abs() < 1e-6);
        assert!(regret_lower_bound(2, 2).is_err());
        let mut prev = 0.0;
        for t in 3..200 {
            let v = regret_lower_bound(t, 2).unwrap();
            assert!(v > prev);
            prev = v;
        }
    }

    #[test]
    fn diversity_is_infinite_without_disagreement() {
        let inst = make_synthetic(3, 6, 1).unwrap();
        let theta = inst.theta_star.coords().to_vec();
        assert_eq!(estimate_covariance_diversity(&inst, &theta, 500, 0).unwrap(), f64::INFINITY);
    }

    /// One-dimensional features `+-c`: every disagreement has `delta^2 = 4c^2`.
    #[test]
    fn diversity_one_dimensional() {
        let c = 0.7;
        let inst = Instance::new(
            "pm",
            ActionSpace::finite(vec![vec![0.0], vec![1.0]]).unwrap(),
            FeatureMap::Table(vec![vec![vec![c], vec![-c]], vec![vec![-c], vec![c]]]),
            ContextModel::Discrete { probs: vec![0.5, 0.5] },
            Parameter::new(vec![1.0], Slice::Unconstrained).unwrap(),
            TieBreak::SmallestIndex,
            c,
        )
        .unwrap();
        let lam = estimate_covariance_diversity(&inst, &[-1.0], 1000, 3).unwrap();
        assert!((lam - 4.0 * c * c).abs() < 1e-12);
    }

    #[test]
    fn diversity_is_degenerate_on_example_one() {
        let ex = make_example_one();
        let lam = estimate_covariance_diversity(&ex, &[1.0, 0.0, 0.0], 10_000, 5).unwrap();
        assert!(lam.abs() < 1e-9);
    }

    #[test]
    fn diversity_is_bounded_and_reproducible() {
        let inst = make_synthetic(3, 8, 2).unwrap();
        let theta = [0.2, 0.5, 0.3];
        let a = estimate_covariance_diversity(&inst, &theta, 3000, 9).unwrap();
        let b = estimate_covariance_diversity(&inst, &theta, 3000, 9).unwrap();
        assert_eq!(a, b);
        assert!(a <= inst.delta_bound().powi(2));
    }

    proptest! {
        #[test]
        fn tail_monotonicity(t in 1u64..200, d in 1u64..12, e1 in 0.0f64..1.0, e2 in 0.0f64..1.0) {
            let (lo, hi) = if e1 < e2 { (e1, e2) } else { (e2, e1) };
            prop_assert!(binomial_tail(t, d, hi) <= binomial_tail(t, d, lo) + 1e-12);
            prop_assert!(binomial_tail(t, d, lo) <= binomial_tail(t, d + 1, lo) + 1e-12);
            if t >= d {
                prop_assert!(binomial_tail(t + 1, d, lo) <= binomial_tail(t, d, lo) + 1e-12);
            }
        }

        #[test]
        fn explicit_epsilon_is_sufficient(d in 1usize..30, t in 1usize..5000, beta in 0.001f64..0.5) {
            if let Ok(eps) = epsilon_explicit(t, d, beta) {
                let n = sample_complexity_n(d as u64, eps, beta).value().unwrap();
                prop_assert!(n <= t as u64);
            }
        }
    }
}
