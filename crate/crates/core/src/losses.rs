//! Loss functionals over parameters: suboptimality gap, incenter loss and
//! the max-violation objective `f_T`.
//!
//! All inner maximizations are exact. Finite spaces are scanned; on the
//! segment and the square the features are affine on each linearity piece,
//! so every `max_a <theta, delta> (+ ||delta||)` is attained at one of
//! [`Instance::vertices`].

use crate::error::{Error, Result};
use crate::linalg::{dot, norm, sub};
use crate::model::{Action, ActionSpace, Context, Dataset, Instance, DEFAULT_TIE_TOL};

#[derive(Debug, Clone, PartialEq)]
pub struct LossEvaluation {
    pub value: f64,
    /// Action attaining the inner maximum (first in scan order).
    pub witness: Action,
    /// Demonstration attaining the outer maximum, for dataset-level losses.
    pub witness_index: Option<usize>,
}

fn check(instance: &Instance, theta: &[f64], a: &Action) -> Result<()> {
    if theta.len() != instance.dim() {
        return Err(Error::InvalidParameter(format!(
            "theta has dimension {}, instance expects {}",
            theta.len(),
            instance.dim()
        )));
    }
    if !instance.action_space.contains(a) {
        return Err(Error::InfeasibleAction(format!("{a:?}")));
    }
    Ok(())
}

/// `max_{a'} <theta, psi(s, a') - psi(s, a)>`.
pub fn suboptimality_gap(instance: &Instance, theta: &[f64], s: &Context, a: &Action) -> Result<LossEvaluation> {
    check(instance, theta, a)?;
    if let (ActionSpace::Finite { .. }, Action::Index(i)) = (&instance.action_space, a) {
        instance.features(s, a)?;
        // Both terms from the same score vector, so the expert gap under
        // the expert's own parameter is exactly zero.
        let scores = instance.finite_scores(theta, s);
        let base = scores[*i];
        let (k, best) = first_max(scores.iter().copied());
        return Ok(LossEvaluation {
            value: best - base,
            witness: Action::Index(k),
            witness_index: None,
        });
    }
    let base = instance.score(theta, s, a)?;
    let vertices = instance.vertices();
    let (k, best) = first_max(vertices.iter().map(|v| dot(theta, &instance.features_unchecked(s, v))));
    Ok(LossEvaluation {
        value: best - base,
        witness: vertices[k],
        witness_index: None,
    })
}

/// `max_a (<theta, delta(s, a)> + ||delta(s, a)||)` with
/// `delta(s, a) = psi(s, a) - psi(s, a_star)`.
///
/// The `a = a_star` term is exactly zero, so the value is always `>= 0` and
/// a parameter satisfies the incenter constraint iff the value is zero.
pub fn incenter_loss(instance: &Instance, theta: &[f64], s: &Context, a_star: &Action) -> Result<LossEvaluation> {
    check(instance, theta, a_star)?;
    let reference = instance.features(s, a_star)?;
    let candidates = match instance.action_space {
        ActionSpace::Finite { .. } => instance.vertices(),
        _ => {
            // The expert term first so it wins exact ties at zero.
            let mut v = vec![*a_star];
            v.extend(instance.vertices().into_iter().filter(|x| x != a_star));
            v
        }
    };
    let (k, best) = first_max(candidates.iter().map(|a| {
        let delta = sub(&instance.features_unchecked(s, a), &reference);
        dot(theta, &delta) + norm(&delta)
    }));
    Ok(LossEvaluation {
        value: best,
        witness: candidates[k],
        witness_index: None,
    })
}

/// `f_T(theta) = max_t suboptimality_gap(theta, s_t, a_t*)`.
pub fn consistency_residual(instance: &Instance, theta: &[f64], dataset: &Dataset) -> Result<LossEvaluation> {
    let mut best: Option<LossEvaluation> = None;
    for (t, demo) in dataset.demos.iter().enumerate() {
        let mut e = suboptimality_gap(instance, theta, &demo.context, &demo.expert_action)?;
        if best.as_ref().is_none_or(|b| e.value > b.value) {
            e.witness_index = Some(t);
            best = Some(e);
        }
    }
    best.ok_or(Error::EmptyDataset)
}

/// `theta` is in the consistency set when `f_T(theta) <= tol`.
pub fn is_consistent(instance: &Instance, theta: &[f64], dataset: &Dataset, tol: f64) -> Result<bool> {
    Ok(consistency_residual(instance, theta, dataset)?.value <= tol)
}

/// Set-level membership test: the expert action is greedy under `theta` up
/// to the default relative tie tolerance.
pub fn expert_in_greedy_set(instance: &Instance, theta: &[f64], s: &Context, expert: &Action) -> Result<bool> {
    let gap = suboptimality_gap(instance, theta, s, expert)?;
    let max = gap.value + instance.score(theta, s, expert)?;
    Ok(gap.value <= DEFAULT_TIE_TOL * (1.0 + max.abs()))
}

fn first_max(values: impl Iterator<Item = f64>) -> (usize, f64) {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, v) in values.enumerate() {
        if v > best.1 {
            best = (i, v);
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances::{make_example_one, make_synthetic, make_tightness};
    use crate::model::Parameter;
    use crate::rng::rng_from_seed;
    use proptest::prelude::*;
    use rand::Rng as _;

    /// Independent brute force: form every feature vector and rescan.
    fn brute_gap(inst: &Instance, theta: &[f64], s: &Context, a: &Action) -> f64 {
        let base = dot(theta, &inst.features(s, a).unwrap());
        (0..inst.action_space.len())
            .map(|k| dot(theta, &inst.features(s, &Action::Index(k)).unwrap()) - base)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    #[test]
    fn tightness_gap_closed_form() {
        let inst = make_tightness(1, 0).unwrap();
        let s = Context::sphere(vec![1.0]).unwrap();
        let e = suboptimality_gap(&inst, &[1.0, 2.0], &s, &Action::Segment(0)).unwrap();
        assert_eq!(e.value, 1.0);
        assert_eq!(e.witness, Action::Segment(1));
    }

    #[test]
    fn expert_has_zero_gap() {
        let inst = make_synthetic(5, 15, 4).unwrap();
        let mut rng = rng_from_seed(1);
        for _ in 0..100 {
            let s = inst.sample_context(&mut rng);
            let a = inst.expert_action(&s).unwrap();
            let e = suboptimality_gap(&inst, inst.theta_star.coords(), &s, &a).unwrap();
            assert_eq!(e.value, 0.0);
        }
    }

    #[test]
    fn gap_matches_brute_force_enumeration() {
        let inst = make_synthetic(5, 15, 8).unwrap();
        let mut rng = rng_from_seed(2);
        for _ in 0..200 {
            let theta: Vec<f64> = (0..5).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let s = inst.sample_context(&mut rng);
            let a = Action::Index(rng.gen_range(0..15));
            let e = suboptimality_gap(&inst, &theta, &s, &a).unwrap();
            // Independent arithmetic order: agree to rounding.
            assert!((e.value - brute_gap(&inst, &theta, &s, &a)).abs() <= 1e-12);
            assert!(e.value >= 0.0);
        }
    }

    #[test]
    fn infeasible_action_is_rejected() {
        let inst = make_synthetic(3, 4, 0).unwrap();
        let mut rng = rng_from_seed(0);
        let s = inst.sample_context(&mut rng);
        let err = suboptimality_gap(&inst, &[1.0, 0.0, 0.0], &s, &Action::Index(4)).unwrap_err();
        assert!(matches!(err, Error::InfeasibleAction(_)));
        let err = suboptimality_gap(&inst, &[1.0, 0.0, 0.0], &s, &Action::Segment(0)).unwrap_err();
        assert!(matches!(err, Error::InfeasibleAction(_)));
    }

    #[test]
    fn example_one_incenter_values() {
        let ex = make_example_one();
        let n = 200;
        let e = incenter_loss(&ex, &[1.0, 0.0, 0.0], &Context::Label(0), &Action::Grid(n, 0)).unwrap();
        assert!(e.value >= 2.0);
        // The (1,1) competitor alone contributes 0 + 2.
        let d = crate::model::delta_features(&ex, &Context::Label(0), &Action::Grid(n, n), &Action::Grid(n, 0)).unwrap();
        assert_eq!(dot(&[1.0, 0.0, 0.0], &d) + norm(&d), 2.0);
        for s in [0, 1] {
            let star = ex.expert_action(&Context::Label(s)).unwrap();
            let e = incenter_loss(&ex, &[2.0, -2.0, 6.0], &Context::Label(s), &star).unwrap();
            assert!(e.value <= 0.0, "s={s}: {}", e.value);
            assert_eq!(e.witness, star);
        }
    }

    #[test]
    fn tightness_incenter_closed_form() {
        // With a* = 0: max{0, (x - 1) + sqrt 2, -(3 + x) + sqrt 10} for unit s.
        let inst = make_tightness(2, 0).unwrap();
        let s = Context::sphere(vec![0.6, 0.8]).unwrap();
        for theta_rest in [[0.0, 0.0], [1.0, 2.0], [-3.0, -1.0]] {
            let theta = [1.0, theta_rest[0], theta_rest[1]];
            let x = 0.6 * theta_rest[0] + 0.8 * theta_rest[1];
            let want = 0f64.max(x - 1.0 + 2f64.sqrt()).max(-(3.0 + x) + 10f64.sqrt());
            let got = incenter_loss(&inst, &theta, &s, &Action::Segment(0)).unwrap().value;
            assert!((got - want).abs() < 1e-12);
        }
    }

    #[test]
    fn example_one_consistency_of_boundary_point() {
        let ex = make_example_one();
        let ds = Dataset::from_contexts(&ex, vec![Context::Label(0), Context::Label(1)]).unwrap();
        let r = consistency_residual(&ex, &[1.0, 0.0, 0.0], &ds).unwrap();
        assert_eq!(r.value, 0.0);
        assert_eq!(consistency_residual(&ex, ex.theta_star.coords(), &ds).unwrap().value, 0.0);
    }

    #[test]
    fn residual_is_max_of_per_demo_gaps() {
        let inst = make_synthetic(5, 15, 21).unwrap();
        let ds = Dataset::sample(&inst, 30, 5).unwrap();
        let mut rng = rng_from_seed(9);
        for _ in 0..20 {
            let theta: Vec<f64> = (0..5).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let r = consistency_residual(&inst, &theta, &ds).unwrap();
            let (t, want) = ds
                .demos
                .iter()
                .enumerate()
                .map(|(t, d)| (t, brute_gap(&inst, &theta, &d.context, &d.expert_action)))
                .fold((0, f64::NEG_INFINITY), |acc, x| if x.1 > acc.1 { x } else { acc });
            assert!((r.value - want).abs() <= 1e-12);
            assert_eq!(r.witness_index, Some(t));
        }
        assert_eq!(consistency_residual(&inst, inst.theta_star.coords(), &ds).unwrap().value, 0.0);
        assert_eq!(
            consistency_residual(&inst, &[0.2; 5], &ds.prefix(0)).unwrap_err(),
            Error::EmptyDataset
        );
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn gap_is_positively_homogeneous(seed in 0u64..1000, alpha in 0.01f64..50.0) {
            let inst = make_synthetic(4, 10, 3).unwrap();
            let mut rng = rng_from_seed(seed);
            let theta: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let scaled = Parameter::unconstrained(theta.clone()).unwrap().scaled(alpha).unwrap();
            let s = inst.sample_context(&mut rng);
            let a = Action::Index(rng.gen_range(0..10));
            let g1 = suboptimality_gap(&inst, &theta, &s, &a).unwrap().value;
            let g2 = suboptimality_gap(&inst, scaled.coords(), &s, &a).unwrap().value;
            prop_assert!((g2 - alpha * g1).abs() <= 1e-9 * (1.0 + (alpha * g1).abs()));
        }

        #[test]
        fn residual_is_convex(seed in 0u64..1000, lambda in 0.0f64..1.0) {
            let inst = make_synthetic(4, 10, 6).unwrap();
            let ds = Dataset::sample(&inst, 15, seed).unwrap();
            let mut rng = rng_from_seed(seed + 1);
            let t1: Vec<f64> = (0..4).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let t2: Vec<f64> = (0..4).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let mix: Vec<f64> = t1.iter().zip(&t2).map(|(a, b)| lambda * a + (1.0 - lambda) * b).collect();
            let f = |t: &[f64]| consistency_residual(&inst, t, &ds).unwrap().value;
            prop_assert!(f(&mix) <= lambda * f(&t1) + (1.0 - lambda) * f(&t2) + 1e-9);
        }

        #[test]
        fn incenter_dominates_gap(seed in 0u64..1000) {
            let inst = make_synthetic(5, 15, 12).unwrap();
            let mut rng = rng_from_seed(seed);
            let theta: Vec<f64> = (0..5).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let s = inst.sample_context(&mut rng);
            let star = inst.expert_action(&s).unwrap();
            let inc = incenter_loss(&inst, &theta, &s, &star).unwrap().value;
            let gap = suboptimality_gap(&inst, &theta, &s, &star).unwrap().value;
            prop_assert!(inc >= gap);
            prop_assert!(inc >= 0.0);
        }
    }
}
