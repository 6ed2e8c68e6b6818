//! Estimators: suboptimality and incenter scenario programs, the Polyak
//! subgradient method on `f_T`, and a slack variant for inconsistent data.

use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg::{axpy, dot, norm, sub};
use crate::losses::consistency_residual;
use crate::model::{ActionSpace, Dataset, Instance, Parameter, Slice};
use crate::rng::rng_from_seed;
use crate::solvers::{
    solve_lp, solve_min_norm_qp, ConstraintSystem, RowOrigin, SolveReport, SolveStatus, FEAS_TOL,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EstimatorKind {
    Suboptimality,
    Incenter,
    Polyak,
    Slack,
}

impl EstimatorKind {
    pub fn name(self) -> &'static str {
        match self {
            EstimatorKind::Suboptimality => "sub",
            EstimatorKind::Incenter => "incenter",
            EstimatorKind::Polyak => "polyak",
            EstimatorKind::Slack => "slack",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "sub" | "suboptimality" => Ok(EstimatorKind::Suboptimality),
            "incenter" | "in" => Ok(EstimatorKind::Incenter),
            "polyak" | "pol" => Ok(EstimatorKind::Polyak),
            "slack" => Ok(EstimatorKind::Slack),
            other => Err(Error::InvalidArgument(format!("unknown estimator '{other}'"))),
        }
    }
}

/// Selection rule `J` among consistent parameters.
#[derive(Debug, Clone, PartialEq)]
pub enum Objective {
    MinNorm,
    /// Minimize `<c, theta>`.
    Linear(Vec<f64>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConstraintMode {
    /// `<theta, delta> <= 0`
    Suboptimality,
    /// `<theta, delta> <= -||delta||`
    Incenter,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorConfig {
    pub kind: EstimatorKind,
    pub objective: Objective,
    /// Polyak iterations; `None` means `T`.
    pub polyak_iters: Option<usize>,
    /// Polyak starting point; `None` means [`default_polyak_init`].
    pub polyak_init: Option<Parameter>,
    pub seed: u64,
    /// Fit the incenter program on the instance slice instead of `R^d`.
    pub incenter_on_slice: bool,
}

impl EstimatorConfig {
    pub fn new(kind: EstimatorKind) -> Self {
        Self {
            kind,
            objective: Objective::MinNorm,
            polyak_iters: None,
            polyak_init: None,
            seed: 0,
            incenter_on_slice: false,
        }
    }

    pub fn with_objective(mut self, objective: Objective) -> Self {
        self.objective = objective;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_polyak_iters(mut self, n: usize) -> Self {
        self.polyak_iters = Some(n);
        self
    }

    pub fn validate(&self, instance: &Instance) -> Result<()> {
        if let Some(init) = &self.polyak_init {
            if init.dim() != instance.dim() {
                return Err(Error::InvalidArgument("polyak_init has the wrong dimension".into()));
            }
            if init.norm() == 0.0 {
                return Err(Error::InvalidArgument("polyak_init must be non-zero".into()));
            }
        }
        if let Objective::Linear(c) = &self.objective {
            if c.len() != instance.dim() || c.iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidArgument("linear objective has the wrong dimension".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorResult {
    pub kind: EstimatorKind,
    pub parameter: Parameter,
    /// `f_T` at the returned parameter.
    pub residual: f64,
    /// Solver sweeps/pivots, or Polyak steps taken.
    pub iterations: usize,
    pub active_rows: Vec<usize>,
    /// Solver report for the scenario-program estimators.
    pub report: Option<SolveReport>,
    /// Slack level: `gamma` for the slack program, `f_T(theta_N)` for Polyak.
    pub slack: Option<f64>,
    /// Polyak: `f_T` of every iterate, starting point included.
    pub trace: Vec<f64>,
}

/// Scenario constraints of `dataset`: one row per demonstration and
/// competing vertex action, `g = delta(s_t, a)`.
///
/// Finite spaces use every non-expert action. On the segment and the square
/// the competing actions are the remaining vertices, which is exact since
/// the inner maximum of the gap is attained there.
pub fn assemble_constraints(instance: &Instance, dataset: &Dataset, mode: ConstraintMode) -> Result<ConstraintSystem> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if mode == ConstraintMode::Incenter && matches!(instance.action_space, ActionSpace::SegmentOracle) {
        return Err(Error::IncenterUnsupportedOracle);
    }
    let vertices = instance.vertices();
    let mut system = ConstraintSystem::new(instance.dim(), instance.slice());
    for (t, demo) in dataset.demos.iter().enumerate() {
        let reference = instance.features(&demo.context, &demo.expert_action)?;
        for a in vertices.iter().filter(|a| **a != demo.expert_action) {
            let g = sub(&instance.features_unchecked(&demo.context, a), &reference);
            let h = match mode {
                ConstraintMode::Suboptimality => 0.0,
                ConstraintMode::Incenter => -norm(&g),
            };
            system.push(
                g,
                h,
                RowOrigin {
                    demo: t,
                    action: Some(*a),
                },
            )?;
        }
    }
    Ok(system)
}

/// Slice anchor plus a seeded tangent perturbation of norm 0.1.
pub fn default_polyak_init(instance: &Instance, seed: u64) -> Result<Parameter> {
    let d = instance.dim();
    let slice = instance.slice();
    let mut rng = rng_from_seed(seed);
    let mut v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
    slice.project_direction(&mut v);
    let n = norm(&v);
    let mut theta = slice.anchor(d);
    if n > 0.0 {
        axpy(0.1 / n, &v, &mut theta);
    } else if !slice.is_active() {
        theta[0] = 0.1;
    }
    Parameter::new(theta, slice)
}

pub fn fit(instance: &Instance, dataset: &Dataset, config: &EstimatorConfig) -> Result<EstimatorResult> {
    config.validate(instance)?;
    match config.kind {
        EstimatorKind::Suboptimality => {
            let system = assemble_constraints(instance, dataset, ConstraintMode::Suboptimality)?;
            solve_program(instance, dataset, config, system)
        }
        EstimatorKind::Incenter => {
            let mut system = assemble_constraints(instance, dataset, ConstraintMode::Incenter)?;
            if !config.incenter_on_slice {
                system.slice = Slice::Unconstrained;
            }
            solve_program(instance, dataset, config, system)
        }
        EstimatorKind::Polyak => fit_polyak(instance, dataset, config),
        EstimatorKind::Slack => fit_slack(instance, dataset, config),
    }
}

fn solve_program(
    instance: &Instance,
    dataset: &Dataset,
    config: &EstimatorConfig,
    system: ConstraintSystem,
) -> Result<EstimatorResult> {
    let report = match &config.objective {
        Objective::MinNorm => solve_min_norm_qp(&system)?,
        Objective::Linear(c) => solve_lp(c, &system)?,
    };
    if report.status != SolveStatus::Optimal {
        return Err(Error::Solver(report.status));
    }
    let parameter = report.solution.clone().ok_or(Error::Solver(report.status))?;
    let residual = consistency_residual(instance, parameter.coords(), dataset)?.value;
    Ok(EstimatorResult {
        kind: config.kind,
        residual,
        iterations: report.iterations,
        active_rows: report.active_rows.clone(),
        parameter,
        report: Some(report),
        slack: None,
        trace: Vec::new(),
    })
}

/// Polyak subgradient method on `f_T`:
/// `theta <- theta - f_T(theta) / ||delta||^2 * delta`, with `delta` the
/// feature difference of the most violated (demonstration, action) pair,
/// followed by projection onto the slice. Stops early once `f_T <= 0` and
/// returns the iterate with the smallest `f_T`.
pub fn fit_polyak(instance: &Instance, dataset: &Dataset, config: &EstimatorConfig) -> Result<EstimatorResult> {
    config.validate(instance)?;
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let slice = instance.slice();
    let init = match &config.polyak_init {
        Some(p) => p.clone(),
        None => default_polyak_init(instance, config.seed)?,
    };
    let n_iters = config.polyak_iters.unwrap_or(dataset.len());
    let mut theta = init.into_coords();
    slice.project(&mut theta);

    let mut trace = Vec::with_capacity(n_iters + 1);
    let mut best = (f64::INFINITY, theta.clone());
    let mut steps = 0;
    loop {
        let eval = consistency_residual(instance, &theta, dataset)?;
        let f = eval.value;
        trace.push(f);
        if f < best.0 {
            best = (f, theta.clone());
        }
        if f <= 0.0 || steps == n_iters {
            break;
        }
        let t = eval.witness_index.unwrap_or(0);
        let demo = &dataset.demos[t];
        let delta = sub(
            &instance.features_unchecked(&demo.context, &eval.witness),
            &instance.features_unchecked(&demo.context, &demo.expert_action),
        );
        let n2 = dot(&delta, &delta);
        if n2 == 0.0 {
            return Err(Error::ZeroSubgradient { demo: t });
        }
        axpy(-f / n2, &delta, &mut theta);
        slice.project(&mut theta);
        steps += 1;
    }
    let (residual, theta) = best;
    Ok(EstimatorResult {
        kind: EstimatorKind::Polyak,
        parameter: Parameter::new(theta, slice)?,
        residual,
        iterations: steps,
        active_rows: Vec::new(),
        report: None,
        slack: Some(residual.max(0.0)),
        trace,
    })
}

/// Slack scenario program: rows `<theta, delta> <= gamma` with `gamma >= 0`.
///
/// The objective is lexicographic: first the smallest feasible `gamma`
/// (an LP over `(theta, gamma)`), then the minimum-norm `theta` at that
/// slack level. A joint `||theta||^2 + gamma^2` objective would trade
/// `gamma > 0` for a smaller norm even on consistent data.
pub fn fit_slack(instance: &Instance, dataset: &Dataset, config: &EstimatorConfig) -> Result<EstimatorResult> {
    config.validate(instance)?;
    let system = assemble_constraints(instance, dataset, ConstraintMode::Suboptimality)?;
    let mut result = fit_with_slack(&system)?;
    result.residual = consistency_residual(instance, result.parameter.coords(), dataset)?.value;
    Ok(result)
}

/// [`fit_slack`] on an explicit constraint system.
pub fn fit_with_slack(system: &ConstraintSystem) -> Result<EstimatorResult> {
    let direct = solve_min_norm_qp(system)?;
    let (gamma, report) = if direct.status == SolveStatus::Optimal {
        (0.0, direct)
    } else {
        let gamma = min_slack(system)?;
        let mut relaxed = system.clone();
        // Rounding room so the second stage stays feasible at the LP value.
        let level = gamma + FEAS_TOL * 0.1 * (1.0 + gamma);
        for r in &mut relaxed.rows {
            r.h += level;
        }
        let rep = solve_min_norm_qp(&relaxed)?;
        if rep.status != SolveStatus::Optimal {
            return Err(Error::Solver(rep.status));
        }
        (gamma, rep)
    };
    let parameter = report.solution.clone().ok_or(Error::Solver(report.status))?;
    Ok(EstimatorResult {
        kind: EstimatorKind::Slack,
        residual: system.residual(parameter.coords()),
        iterations: report.iterations,
        active_rows: report.active_rows.clone(),
        parameter,
        report: Some(report),
        slack: Some(gamma),
        trace: Vec::new(),
    })
}

/// `min gamma` over `(y, gamma)` with `G y - gamma <= h` and `gamma >= 0`,
/// in slice coordinates `theta = anchor + Z y`.
fn min_slack(system: &ConstraintSystem) -> Result<f64> {
    let red = system.reduce();
    let k = red.k;
    let mut aug = ConstraintSystem::new(k + 1, Slice::Unconstrained);
    for (j, r) in system.rows.iter().enumerate() {
        let mut g = red.row(j).to_vec();
        g.push(-1.0);
        aug.push(g, red.h[j], r.origin)?;
    }
    let mut floor = vec![0.0; k + 1];
    floor[k] = -1.0;
    aug.push(floor, 0.0, RowOrigin { demo: usize::MAX, action: None })?;
    let mut c = vec![0.0; k + 1];
    c[k] = 1.0;
    let rep = solve_lp(&c, &aug)?;
    match rep.status {
        SolveStatus::Optimal => Ok(rep.solution.map(|p| p.coords()[k]).unwrap_or(0.0).max(0.0)),
        status => Err(Error::Solver(status)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances::{make_example_one, make_synthetic, make_tightness};
    use crate::losses::incenter_loss;
    use crate::model::{greedy_action_set, Action, Context, DEFAULT_TIE_TOL};

    #[test]
    fn row_counts() {
        let inst = make_synthetic(4, 15, 1).unwrap();
        let ds = Dataset::sample(&inst, 7, 2).unwrap();
        let sys = assemble_constraints(&inst, &ds, ConstraintMode::Suboptimality).unwrap();
        assert_eq!(sys.len(), 7 * 14);
        assert!(sys.rows.iter().all(|r| r.h == 0.0));
    }

    #[test]
    fn tightness_rows_are_the_strip() {
        let inst = make_tightness(2, 0).unwrap();
        let s = Context::sphere(vec![0.6, -0.8]).unwrap();
        let ds = Dataset::from_contexts(&inst, vec![s]).unwrap();
        let sys = assemble_constraints(&inst, &ds, ConstraintMode::Suboptimality).unwrap();
        let mut rows: Vec<(Vec<f64>, f64)> = sys.rows.iter().map(|r| (r.g.clone(), r.h)).collect();
        rows.sort_by(|a, b| a.0[0].partial_cmp(&b.0[0]).unwrap());
        // With theta_0 = 1: -3 - s.x <= 0 and -1 + s.x <= 0.
        assert_eq!(rows[0], (vec![-3.0, -0.6, 0.8], 0.0));
        assert_eq!(rows[1], (vec![-1.0, 0.6, -0.8], 0.0));
        assert_eq!(
            assemble_constraints(&inst, &ds, ConstraintMode::Incenter).unwrap_err(),
            Error::IncenterUnsupportedOracle
        );
    }

    #[test]
    fn example_one_incenter_row() {
        let ex = make_example_one();
        let ds = Dataset::from_contexts(&ex, vec![Context::Label(0)]).unwrap();
        let sys = assemble_constraints(&ex, &ds, ConstraintMode::Incenter).unwrap();
        let n = 200;
        let row = sys.rows.iter().find(|r| r.origin.action == Some(Action::Grid(n, n))).unwrap();
        assert_eq!(row.g, vec![0.0, 2.0, 0.0]);
        assert_eq!(row.h, -2.0);
    }

    #[test]
    fn polyak_single_step_lands_on_the_violated_row() {
        let inst = make_synthetic(3, 5, 3).unwrap();
        let ds = Dataset::sample(&inst, 1, 4).unwrap();
        let mut cfg = EstimatorConfig::new(EstimatorKind::Polyak).with_polyak_iters(1);
        // Unconstrained start so no projection follows the step.
        let inst = Instance {
            theta_star: Parameter::unconstrained(inst.theta_star.coords().to_vec()).unwrap(),
            ..inst
        };
        // The reversed expert parameter ranks the expert action last.
        let theta0: Vec<f64> = inst.theta_star.coords().iter().map(|x| -x).collect();
        cfg.polyak_init = Some(Parameter::unconstrained(theta0.clone()).unwrap());
        let f0 = consistency_residual(&inst, &theta0, &ds).unwrap();
        assert!(f0.value > 0.0);
        let res = fit_polyak(&inst, &ds, &cfg).unwrap();
        let demo = &ds.demos[0];
        let g = sub(
            &inst.features(&demo.context, &f0.witness).unwrap(),
            &inst.features(&demo.context, &demo.expert_action).unwrap(),
        );
        let mut theta1 = theta0.clone();
        axpy(-f0.value / dot(&g, &g), &g, &mut theta1);
        assert!(dot(&theta1, &g).abs() < 1e-12);
        assert_eq!(res.trace.len(), 2);
        assert!((res.trace[1] - consistency_residual(&inst, &theta1, &ds).unwrap().value).abs() < 1e-12);
    }

    #[test]
    fn tightness_linear_fit_matches_hand_lp() {
        let inst = make_tightness(1, 0).unwrap();
        let ctx = vec![Context::sphere(vec![1.0]).unwrap(), Context::sphere(vec![-1.0]).unwrap()];
        let ds = Dataset::from_contexts(&inst, ctx).unwrap();
        let cfg = EstimatorConfig::new(EstimatorKind::Suboptimality).with_objective(Objective::Linear(vec![0.0, 1.0]));
        let res = fit(&inst, &ds, &cfg).unwrap();
        assert!((res.parameter.coords()[1] + 1.0).abs() < 1e-12);
    }

    #[test]
    fn example_one_incenter_fit() {
        let ex = make_example_one();
        let ds = Dataset::from_contexts(&ex, vec![Context::Label(0), Context::Label(1)]).unwrap();
        let res = fit(&ex, &ds, &EstimatorConfig::new(EstimatorKind::Incenter)).unwrap();
        let theta = res.parameter.coords();
        for demo in &ds.demos {
            let e = incenter_loss(&ex, theta, &demo.context, &demo.expert_action).unwrap();
            assert!(e.value <= 1e-7);
            let set = greedy_action_set(&ex, theta, &demo.context, DEFAULT_TIE_TOL).unwrap();
            assert!(set.is_singleton());
            assert_eq!(set.actions[0], demo.expert_action);
        }
    }

    #[test]
    fn scenario_fits_are_consistent() {
        let inst = make_synthetic(5, 15, 11).unwrap();
        let ds = Dataset::sample(&inst, 40, 12).unwrap();
        for kind in [EstimatorKind::Suboptimality, EstimatorKind::Incenter, EstimatorKind::Slack] {
            let res = fit(&inst, &ds, &EstimatorConfig::new(kind)).unwrap();
            assert!(res.residual <= 1e-6, "{kind:?}: {}", res.residual);
        }
        let sys = assemble_constraints(&inst, &ds, ConstraintMode::Incenter).unwrap();
        let res = fit(&inst, &ds, &EstimatorConfig::new(EstimatorKind::Incenter)).unwrap();
        for r in &sys.rows {
            assert!(dot(&r.g, res.parameter.coords()) <= r.h + 1e-6);
        }
    }

    #[test]
    fn slack_is_zero_on_consistent_data() {
        let inst = make_synthetic(5, 15, 13).unwrap();
        let ds = Dataset::sample(&inst, 30, 1).unwrap();
        let res = fit_slack(&inst, &ds, &EstimatorConfig::new(EstimatorKind::Slack)).unwrap();
        assert!(res.slack.unwrap() <= 1e-6);
    }

    /// `theta_0 <= gamma` with `theta_0` pinned to one forces `gamma = 1`.
    #[test]
    fn slack_one_dimensional() {
        let mut sys = ConstraintSystem::new(1, Slice::FirstCoordOne);
        sys.push(vec![1.0], 0.0, RowOrigin { demo: 0, action: None }).unwrap();
        let res = fit_with_slack(&sys).unwrap();
        assert!((res.slack.unwrap() - 1.0).abs() < 1e-9);
        assert_eq!(res.parameter.coords(), &[1.0]);
    }

    #[test]
    fn fits_are_deterministic() {
        let inst = make_synthetic(5, 15, 2).unwrap();
        let ds = Dataset::sample(&inst, 25, 3).unwrap();
        for kind in [EstimatorKind::Suboptimality, EstimatorKind::Incenter, EstimatorKind::Polyak] {
            let cfg = EstimatorConfig::new(kind).with_seed(4);
            assert_eq!(fit(&inst, &ds, &cfg).unwrap(), fit(&inst, &ds, &cfg).unwrap());
        }
    }

    #[test]
    fn polyak_best_residual_is_non_increasing() {
        let inst = make_synthetic(5, 15, 6).unwrap();
        let ds = Dataset::sample(&inst, 100, 7).unwrap();
        let res = fit(&inst, &ds, &EstimatorConfig::new(EstimatorKind::Polyak)).unwrap();
        let mut best = f64::INFINITY;
        for f in &res.trace {
            best = best.min(*f);
        }
        assert_eq!(best.max(0.0), res.slack.unwrap());
        assert!(res.trace[0] > res.residual || res.trace[0] <= 0.0);
    }

    #[test]
    fn polyak_rejects_zero_init() {
        let inst = make_synthetic(3, 4, 0).unwrap();
        let ds = Dataset::sample(&inst, 3, 0).unwrap();
        let mut cfg = EstimatorConfig::new(EstimatorKind::Polyak);
        cfg.polyak_init = Some(Parameter::unconstrained(vec![0.0; 3]).unwrap());
        assert!(fit(&inst, &ds, &cfg).is_err());
    }
}
