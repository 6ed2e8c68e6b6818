//! Monte Carlo evaluation: set- and action-level mismatch, the online
//! regret protocol and the tail experiment on the tightness instance.

use rayon::prelude::*;

use crate::bounds::binomial_tail;
use crate::error::{Error, Result};
use crate::estimators::{assemble_constraints, default_polyak_init, fit, ConstraintMode, EstimatorConfig, EstimatorKind};
use crate::linalg::{dot, norm, sub};
use crate::losses::expert_in_greedy_set;
use crate::model::{ActionSpace, ContextModel, Dataset, Demonstration, Instance};
use crate::rng::{derive_seed, rng_from_seed};

/// `z` for a two-sided 90% normal band.
pub const Z90: f64 = 1.6448536269514722;

/// `rate +- z sqrt(rate (1 - rate) / n)`, clipped to `[0, 1]`.
pub fn wald_band(rate: f64, n: usize) -> (f64, f64) {
    let half = Z90 * (rate * (1.0 - rate) / n as f64).sqrt();
    ((rate - half).max(0.0), (rate + half).min(1.0))
}

/// Held-out contexts with their expert actions.
#[derive(Debug, Clone, PartialEq)]
pub struct TestSet {
    pub demos: Vec<Demonstration>,
    pub seed: u64,
}

impl TestSet {
    pub fn sample(instance: &Instance, n: usize, seed: u64) -> Result<Self> {
        let ds = Dataset::sample(instance, n, seed)?;
        Ok(Self { demos: ds.demos, seed })
    }

    pub fn len(&self) -> usize {
        self.demos.len()
    }

    pub fn is_empty(&self) -> bool {
        self.demos.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MismatchReport {
    pub n_test: usize,
    /// Fraction of contexts whose expert action is outside the greedy set.
    pub set_rate: f64,
    /// Fraction of contexts whose tie-broken greedy action is not the
    /// expert's.
    pub action_rate: f64,
    /// Wald 90% band on `action_rate`.
    pub ci90_lower: f64,
    pub ci90_upper: f64,
    pub seed: u64,
    /// Contexts counted as set failures but not action failures. Always
    /// zero; kept so callers can check the per-sample inclusion.
    pub set_without_action: usize,
}

/// Mismatch rates of `theta_hat` on `n_test` fresh contexts drawn with `seed`.
pub fn evaluate_mismatch(instance: &Instance, theta_hat: &[f64], n_test: usize, seed: u64) -> Result<MismatchReport> {
    if n_test == 0 {
        return Err(Error::InvalidArgument("n_test must be at least 1".into()));
    }
    evaluate_on(instance, theta_hat, &TestSet::sample(instance, n_test, seed)?)
}

/// Mismatch rates of `theta_hat` on a fixed test set.
pub fn evaluate_on(instance: &Instance, theta_hat: &[f64], test: &TestSet) -> Result<MismatchReport> {
    if test.is_empty() {
        return Err(Error::InvalidArgument("empty test set".into()));
    }
    let mut set_fail = 0;
    let mut action_fail = 0;
    let mut set_without_action = 0;
    for demo in &test.demos {
        let in_set = expert_in_greedy_set(instance, theta_hat, &demo.context, &demo.expert_action)?;
        let played = instance.policy_action(theta_hat, &demo.context)?;
        let action_miss = played != demo.expert_action;
        set_fail += usize::from(!in_set);
        action_fail += usize::from(action_miss);
        set_without_action += usize::from(!in_set && !action_miss);
    }
    let n = test.len();
    let action_rate = action_fail as f64 / n as f64;
    let (ci90_lower, ci90_upper) = wald_band(action_rate, n);
    Ok(MismatchReport {
        n_test: n,
        set_rate: set_fail as f64 / n as f64,
        action_rate,
        ci90_lower,
        ci90_upper,
        seed: test.seed,
        set_without_action,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RefitSchedule {
    EveryRound,
    /// Refit when the dataset size is a power of two.
    Doubling,
}

impl RefitSchedule {
    pub fn name(self) -> &'static str {
        match self {
            RefitSchedule::EveryRound => "every-round",
            RefitSchedule::Doubling => "doubling",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "every-round" | "every" => Ok(RefitSchedule::EveryRound),
            "doubling" => Ok(RefitSchedule::Doubling),
            other => Err(Error::InvalidArgument(format!("unknown refit schedule '{other}'"))),
        }
    }

    fn due(self, n: usize) -> bool {
        match self {
            RefitSchedule::EveryRound => true,
            RefitSchedule::Doubling => n.is_power_of_two(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegretTrace {
    /// `r_t = <theta*, psi(s_t, a_t*) - psi(s_t, a_t)>`.
    pub per_round: Vec<f64>,
    /// `R_t = r_1 + ... + r_t`.
    pub cumulative: Vec<f64>,
    pub mismatch_flags: Vec<bool>,
    /// Rounds (1-based) whose refit failed; the stale estimate was kept.
    pub refit_failures: Vec<usize>,
    /// Refits actually solved.
    pub refits: usize,
}

/// Stochastic online protocol: at round `t` draw `s_t`, play the greedy
/// action of the current estimate, observe the expert action and refit.
///
/// Before any successful fit the estimate is the default Polyak start (or
/// `config.polyak_init`). For the scenario-program estimators a refit is
/// skipped when the current optimum already satisfies the new rows: it
/// stays feasible and optimal for the larger program, whose optimizer is
/// unique.
pub fn run_online(
    instance: &Instance,
    config: &EstimatorConfig,
    t_max: usize,
    schedule: RefitSchedule,
    seed: u64,
) -> Result<RegretTrace> {
    if t_max == 0 {
        return Err(Error::InvalidArgument("T must be at least 1".into()));
    }
    config.validate(instance)?;
    let mut theta = match &config.polyak_init {
        Some(p) => p.coords().to_vec(),
        None => default_polyak_init(instance, config.seed)?.into_coords(),
    };
    let mode = match config.kind {
        EstimatorKind::Suboptimality => Some(ConstraintMode::Suboptimality),
        EstimatorKind::Incenter => Some(ConstraintMode::Incenter),
        EstimatorKind::Polyak | EstimatorKind::Slack => None,
    };
    let star = instance.theta_star.coords();
    let mut rng = rng_from_seed(derive_seed(seed, 0));
    let mut data = Dataset::new(instance, seed);
    let mut trace = RegretTrace {
        per_round: Vec::with_capacity(t_max),
        cumulative: Vec::with_capacity(t_max),
        mismatch_flags: Vec::with_capacity(t_max),
        refit_failures: Vec::new(),
        refits: 0,
    };
    let mut fitted = false;
    let mut total = 0.0;
    for t in 1..=t_max {
        let s = instance.sample_context(&mut rng);
        let played = instance.policy_action(&theta, &s)?;
        let demo = instance.demonstration(s)?;
        let miss = played != demo.expert_action;
        let r = if miss {
            let gap = dot(
                star,
                &sub(&instance.features(&demo.context, &demo.expert_action)?, &instance.features(&demo.context, &played)?),
            );
            gap.max(0.0)
        } else {
            0.0
        };
        total += r;
        trace.per_round.push(r);
        trace.cumulative.push(total);
        trace.mismatch_flags.push(miss);

        data.demos.push(demo);
        if !schedule.due(data.len()) {
            continue;
        }
        if let (true, Some(mode), RefitSchedule::EveryRound) = (fitted, mode, schedule) {
            let single = Dataset {
                demos: vec![data.demos[data.len() - 1].clone()],
                seed,
                instance: data.instance.clone(),
            };
            let rows = assemble_constraints(instance, &single, mode)?;
            if rows.rows.iter().all(|r| dot(&r.g, &theta) <= r.h) {
                continue;
            }
        }
        match fit(instance, &data, config) {
            Ok(res) => {
                theta = res.parameter.into_coords();
                fitted = true;
                trace.refits += 1;
            }
            Err(Error::Solver(_)) => trace.refit_failures.push(t),
            Err(e) => return Err(e),
        }
    }
    Ok(trace)
}

/// `runs` independent online runs with derived seeds, in run order.
pub fn run_online_many(
    instance: &Instance,
    config: &EstimatorConfig,
    t_max: usize,
    schedule: RefitSchedule,
    runs: usize,
    seed: u64,
) -> Result<Vec<RegretTrace>> {
    (0..runs)
        .into_par_iter()
        .map(|r| {
            let s = derive_seed(seed, r as u64);
            let cfg = EstimatorConfig {
                seed: derive_seed(s, 1),
                ..config.clone()
            };
            run_online(instance, &cfg, t_max, schedule, s)
        })
        .collect()
}

/// Linear objective used on the tightness instance: minimize the first free
/// coordinate of `theta_{-1}`.
pub fn tightness_objective(instance: &Instance) -> Vec<f64> {
    let mut c = vec![0.0; instance.dim()];
    if c.len() > 1 {
        c[1] = 1.0;
    }
    c
}

fn tightness_dim(instance: &Instance) -> Result<usize> {
    match (&instance.action_space, &instance.contexts) {
        (ActionSpace::SegmentOracle, ContextModel::UniformSphere { dim }) => Ok(*dim),
        _ => Err(Error::InvalidArgument("instance is not the tightness instance".into())),
    }
}

/// Inner Monte Carlo sample count for the violation probability when `d >= 3`.
pub const VIOLATION_MC_SAMPLES: usize = 10_000;

/// `P_s(expert 0 not greedy)` for `theta = (1, v)` on the tightness
/// instance, i.e. `P(s.v > 1) + P(s.v < -3)` for `s` uniform on the sphere.
///
/// Exact for `d <= 2` (two points, or arc length on the circle:
/// `P(s.v > c) = arccos(c / |v|) / pi` for `|v| > c`); otherwise estimated
/// from `VIOLATION_MC_SAMPLES` seeded samples.
pub fn tightness_violation_probability(instance: &Instance, theta: &[f64], seed: u64) -> Result<f64> {
    let d = tightness_dim(instance)?;
    if theta.len() != d + 1 {
        return Err(Error::InvalidParameter("theta has the wrong dimension".into()));
    }
    let v = &theta[1..];
    let r = norm(v);
    match d {
        1 => {
            let x = v[0];
            let bad = |x: f64| x > 1.0 || x < -3.0;
            Ok(0.5 * (f64::from(u8::from(bad(x))) + f64::from(u8::from(bad(-x)))))
        }
        2 => {
            let arc = |c: f64| if r > c { (c / r).acos() / std::f64::consts::PI } else { 0.0 };
            Ok(arc(1.0) + arc(3.0))
        }
        _ => {
            let mut rng = rng_from_seed(seed);
            let mut bad = 0usize;
            for _ in 0..VIOLATION_MC_SAMPLES {
                let s = crate::model::sample_sphere(d, &mut rng);
                let x = dot(&s, v);
                bad += usize::from(x > 1.0 || x < -3.0);
            }
            Ok(bad as f64 / VIOLATION_MC_SAMPLES as f64)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TailRow {
    pub eps: f64,
    /// Fraction of kept trials with violation probability above `eps`.
    pub empirical: f64,
    pub theoretical: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TailTable {
    pub rows: Vec<TailRow>,
    pub n_trials: usize,
    /// Trials whose fit failed.
    pub discarded: usize,
    /// Violation probability of every kept trial, in trial order.
    pub violations: Vec<f64>,
    /// Whether the violation probabilities are exact or inner Monte Carlo.
    pub exact: bool,
}

impl TailTable {
    pub fn discard_rate(&self) -> f64 {
        self.discarded as f64 / self.n_trials.max(1) as f64
    }

    pub fn mean_violation(&self) -> f64 {
        self.violations.iter().sum::<f64>() / self.violations.len().max(1) as f64
    }
}

/// Fits `n_trials` independent size-`t` datasets on the tightness instance
/// and compares the exceedance frequency of the violation probability with
/// `binomial_tail(t, d, eps)`.
pub fn tail_experiment(
    instance: &Instance,
    config: &EstimatorConfig,
    t: usize,
    n_trials: usize,
    eps_grid: &[f64],
    seed: u64,
) -> Result<TailTable> {
    let d = tightness_dim(instance)?;
    if t < d {
        return Err(Error::InvalidArgument(format!("tail experiment needs T >= d (T={t}, d={d})")));
    }
    let outcomes: Vec<Result<Option<f64>>> = (0..n_trials)
        .into_par_iter()
        .map(|i| {
            let trial_seed = derive_seed(seed, i as u64);
            let ds = Dataset::sample(instance, t, trial_seed)?;
            match fit(instance, &ds, config) {
                Ok(res) => tightness_violation_probability(instance, res.parameter.coords(), derive_seed(trial_seed, 1))
                    .map(Some),
                Err(Error::Solver(_)) => Ok(None),
                Err(e) => Err(e),
            }
        })
        .collect();
    let mut violations = Vec::with_capacity(n_trials);
    let mut discarded = 0;
    for o in outcomes {
        match o? {
            Some(v) => violations.push(v),
            None => discarded += 1,
        }
    }
    let kept = violations.len().max(1) as f64;
    let rows = eps_grid
        .iter()
        .map(|&eps| TailRow {
            eps,
            empirical: violations.iter().filter(|&&v| v > eps).count() as f64 / kept,
            theoretical: binomial_tail(t as u64, d as u64, eps),
        })
        .collect();
    Ok(TailTable {
        rows,
        n_trials,
        discarded,
        violations,
        exact: d <= 2,
    })
}
