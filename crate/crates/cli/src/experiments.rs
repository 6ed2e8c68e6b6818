//! Experiment runners behind the CLI subcommands. Each returns its raw
//! per-run numbers; the `*_table` functions shape them into CSV tables.

use rayon::prelude::*;

use ioscen_core::bounds::{epsilon_explicit, regret_lower_bound};
use ioscen_core::estimators::{fit, EstimatorConfig, EstimatorKind, Objective};
use ioscen_core::evaluation::{
    evaluate_on, run_online_many, tail_experiment, tightness_objective, RefitSchedule, RegretTrace, TailTable,
    TestSet, Z90,
};
use ioscen_core::instances::{audit_feature_bound, make_synthetic, make_tightness};
use ioscen_core::rng::derive_seed_path;
use ioscen_core::{Dataset, Instance, Result};

use crate::output::{fmt_f64, fmt_opt, Table};

/// Default sample sizes: the figure's log-spaced ticks.
pub const DEFAULT_T_GRID: [usize; 21] = [2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 21, 31, 41, 51, 61, 71, 81, 91, 101, 201, 300];
pub const DEFAULT_BETA: f64 = 0.1;
pub const DEFAULT_N_TEST: usize = 1000;
pub const DEFAULT_K: usize = 15;
pub const DEFAULT_EPS_GRID: [f64; 4] = [0.05, 0.1, 0.2, 0.3];

/// Samples used to audit the feature bound `C` of an instance.
pub const AUDIT_SAMPLES: usize = 10_000;

/// Mean and two-sided 90% normal band across runs. With one run the band
/// collapses to the mean.
pub fn mean_band(xs: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, mean, mean);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    let half = Z90 * (var / n).sqrt();
    (mean, (mean - half).max(0.0), (mean + half).min(1.0))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurveParams {
    pub d_list: Vec<usize>,
    pub t_grid: Vec<usize>,
    pub runs: usize,
    pub estimators: Vec<EstimatorKind>,
    pub beta: f64,
    pub n_test: usize,
    pub k: usize,
    pub seed: u64,
}

impl Default for CurveParams {
    fn default() -> Self {
        Self {
            d_list: vec![5, 10],
            t_grid: DEFAULT_T_GRID.to_vec(),
            runs: 10,
            estimators: vec![EstimatorKind::Suboptimality, EstimatorKind::Incenter, EstimatorKind::Polyak],
            beta: DEFAULT_BETA,
            n_test: DEFAULT_N_TEST,
            k: DEFAULT_K,
            seed: 0,
        }
    }
}

/// One `(d, estimator, T)` cell across runs.
#[derive(Debug, Clone, PartialEq)]
pub struct CurvePoint {
    pub t: usize,
    pub action_rates: Vec<f64>,
    pub set_rates: Vec<f64>,
    /// `f_T` at the fitted parameter, per run.
    pub residuals: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurveSeries {
    pub d: usize,
    pub estimator: EstimatorKind,
    pub points: Vec<CurvePoint>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurveResult {
    pub params: CurveParams,
    pub series: Vec<CurveSeries>,
    /// Audited `B = 2 max ||psi||` per entry of `d_list`.
    pub audited_b: Vec<f64>,
    pub instance_names: Vec<String>,
}

/// Seed of the synthetic instance used for dimension `d`.
pub fn curve_instance(d: usize, k: usize, seed: u64) -> Result<Instance> {
    make_synthetic(d, k, derive_seed_path(seed, &[d as u64, 0]))
}

/// Mismatch curves on the synthetic instance. The instance is fixed per
/// `d`; every run draws its own `T_max` demonstrations and test set, and
/// the estimators see nested prefixes of that one dataset.
pub fn run_curve(p: &CurveParams) -> Result<CurveResult> {
    let t_max = p.t_grid.iter().copied().max().unwrap_or(0);
    let mut series = Vec::new();
    let mut audited_b = Vec::new();
    let mut instance_names = Vec::new();
    for &d in &p.d_list {
        let inst = curve_instance(d, p.k, p.seed)?;
        audited_b.push(2.0 * audit_feature_bound(&inst, AUDIT_SAMPLES, derive_seed_path(p.seed, &[d as u64, 1])));
        instance_names.push(inst.name.clone());
        let per_run: Vec<(Dataset, TestSet)> = (0..p.runs)
            .into_par_iter()
            .map(|r| {
                let ds = Dataset::sample(&inst, t_max, derive_seed_path(p.seed, &[d as u64, 2, r as u64]))?;
                let ts = TestSet::sample(&inst, p.n_test, derive_seed_path(p.seed, &[d as u64, 3, r as u64]))?;
                Ok((ds, ts))
            })
            .collect::<Result<_>>()?;
        let cells: Vec<(usize, usize, usize)> = (0..p.estimators.len())
            .flat_map(|e| (0..p.t_grid.len()).flat_map(move |ti| (0..p.runs).map(move |r| (e, ti, r))))
            .collect();
        let out: Vec<(f64, f64, f64)> = cells
            .par_iter()
            .map(|&(e, ti, r)| {
                let (ds, ts) = &per_run[r];
                let cfg = EstimatorConfig::new(p.estimators[e])
                    .with_seed(derive_seed_path(p.seed, &[d as u64, 4, r as u64]));
                let res = fit(&inst, &ds.prefix(p.t_grid[ti]), &cfg)?;
                let rep = evaluate_on(&inst, res.parameter.coords(), ts)?;
                Ok((rep.action_rate, rep.set_rate, res.residual))
            })
            .collect::<Result<_>>()?;
        let mut it = out.into_iter();
        for &estimator in &p.estimators {
            let mut points = Vec::with_capacity(p.t_grid.len());
            for &t in &p.t_grid {
                let mut pt = CurvePoint {
                    t,
                    action_rates: Vec::with_capacity(p.runs),
                    set_rates: Vec::with_capacity(p.runs),
                    residuals: Vec::with_capacity(p.runs),
                };
                for _ in 0..p.runs {
                    let (a, s, f) = it.next().expect("one result per cell");
                    pt.action_rates.push(a);
                    pt.set_rates.push(s);
                    pt.residuals.push(f);
                }
                points.push(pt);
            }
            series.push(CurveSeries { d, estimator, points });
        }
    }
    Ok(CurveResult {
        params: p.clone(),
        series,
        audited_b,
        instance_names,
    })
}

pub fn curve_table(s: &CurveSeries) -> Table {
    let mut t = Table::new(vec!["T", "avg_gen_prob", "ci90_lower", "ci90_upper"]);
    for p in &s.points {
        let (m, lo, hi) = mean_band(&p.action_rates);
        t.push(vec![p.t.to_string(), fmt_f64(m), fmt_f64(lo), fmt_f64(hi)]);
    }
    t
}

/// `T,epsilon` rows; sample sizes in the low-data regime are omitted.
pub fn theory_table(d: usize, t_grid: &[usize], beta: f64) -> Table {
    let mut t = Table::new(vec!["T", "epsilon"]);
    for &n in t_grid {
        if let Ok(eps) = epsilon_explicit(n, d, beta) {
            t.push(vec![n.to_string(), fmt_f64(eps)]);
        }
    }
    t
}

pub fn curve_file_name(d: usize, estimator: EstimatorKind) -> String {
    format!("curve_d{d}_{}.csv", estimator.name())
}

pub fn theory_file_name(d: usize) -> String {
    format!("theory_d{d}.csv")
}

#[derive(Debug, Clone, PartialEq)]
pub struct TightnessParams {
    pub d: usize,
    pub t: usize,
    pub trials: usize,
    pub eps_grid: Vec<f64>,
    pub seed: u64,
}

impl Default for TightnessParams {
    fn default() -> Self {
        Self {
            d: 2,
            t: 20,
            trials: 2000,
            eps_grid: DEFAULT_EPS_GRID.to_vec(),
            seed: 0,
        }
    }
}

/// Linear-objective suboptimality estimator used on the tightness instance.
pub fn tightness_config(instance: &Instance) -> EstimatorConfig {
    EstimatorConfig::new(EstimatorKind::Suboptimality).with_objective(Objective::Linear(tightness_objective(instance)))
}

pub fn run_tightness(p: &TightnessParams) -> Result<TailTable> {
    let inst = make_tightness(p.d, p.seed)?;
    tail_experiment(&inst, &tightness_config(&inst), p.t, p.trials, &p.eps_grid, p.seed)
}

pub fn tightness_table(table: &TailTable) -> Table {
    let mut t = Table::new(vec!["eps", "empirical", "theoretical", "discarded"]);
    for r in &table.rows {
        t.push(vec![
            fmt_f64(r.eps),
            fmt_f64(r.empirical),
            fmt_f64(r.theoretical),
            table.discarded.to_string(),
        ]);
    }
    t
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OnlineInstance {
    Synthetic,
    Tightness,
}

impl OnlineInstance {
    pub fn name(self) -> &'static str {
        match self {
            OnlineInstance::Synthetic => "synthetic",
            OnlineInstance::Tightness => "tightness",
        }
    }

    pub fn parse(s: &str) -> anyhow::Result<Self> {
        match s {
            "synthetic" => Ok(OnlineInstance::Synthetic),
            "tightness" => Ok(OnlineInstance::Tightness),
            other => anyhow::bail!("unknown instance '{other}' (expected synthetic or tightness)"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OnlineParams {
    pub instance: OnlineInstance,
    pub d: usize,
    pub k: usize,
    pub t: usize,
    pub runs: usize,
    pub estimator: EstimatorKind,
    pub refit: RefitSchedule,
    pub seed: u64,
}

impl Default for OnlineParams {
    fn default() -> Self {
        Self {
            instance: OnlineInstance::Synthetic,
            d: 5,
            k: DEFAULT_K,
            t: 1000,
            runs: 10,
            estimator: EstimatorKind::Incenter,
            refit: RefitSchedule::EveryRound,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OnlineResult {
    pub params: OnlineParams,
    pub traces: Vec<RegretTrace>,
    pub instance_name: String,
}

impl OnlineResult {
    /// Per-round mean of `r_t` and `R_t`, and the standard error of `R_t`.
    pub fn summary(&self) -> Vec<(f64, f64, f64)> {
        let n = self.traces.len() as f64;
        (0..self.params.t)
            .map(|i| {
                let r = self.traces.iter().map(|tr| tr.per_round[i]).sum::<f64>() / n;
                let cum: Vec<f64> = self.traces.iter().map(|tr| tr.cumulative[i]).collect();
                let m = cum.iter().sum::<f64>() / n;
                let se = if cum.len() > 1 {
                    (cum.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0) / n).sqrt()
                } else {
                    0.0
                };
                (r, m, se)
            })
            .collect()
    }
}

/// On the tightness instance the estimator is the linear-objective
/// suboptimality program whatever `estimator` says.
pub fn run_online_experiment(p: &OnlineParams) -> Result<OnlineResult> {
    let (inst, cfg) = match p.instance {
        OnlineInstance::Synthetic => {
            let inst = make_synthetic(p.d, p.k, derive_seed_path(p.seed, &[p.d as u64, 0]))?;
            (inst, EstimatorConfig::new(p.estimator))
        }
        OnlineInstance::Tightness => {
            let inst = make_tightness(p.d, p.seed)?;
            let cfg = tightness_config(&inst);
            (inst, cfg)
        }
    };
    let traces = run_online_many(&inst, &cfg, p.t, p.refit, p.runs, derive_seed_path(p.seed, &[p.d as u64, 5]))?;
    Ok(OnlineResult {
        params: p.clone(),
        traces,
        instance_name: inst.name,
    })
}

pub fn online_table(res: &OnlineResult) -> Table {
    let mut t = Table::new(vec!["t", "mean_regret", "mean_cum_regret", "lower_bound"]);
    for (i, (r, m, _)) in res.summary().into_iter().enumerate() {
        let step = i + 1;
        let lb = regret_lower_bound(step, res.params.d).ok();
        t.push(vec![step.to_string(), fmt_f64(r), fmt_f64(m), fmt_opt(lb)]);
    }
    t
}

/// Least-squares slope of `ln y` against `ln x`, skipping non-positive `y`.
pub fn log_log_slope(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = xs
        .iter()
        .zip(ys)
        .filter(|(x, y)| **x > 0.0 && **y > 0.0)
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
    linear_fit(&pts).map(|(_, b, _)| b)
}

/// Ordinary least squares `y = a + b x`; returns `(a, b, R^2)`.
pub fn linear_fit(pts: &[(f64, f64)]) -> Option<(f64, f64, f64)> {
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return None;
    }
    let b = sxy / sxx;
    let a = my - b * mx;
    let r2 = if syy == 0.0 { 1.0 } else { (sxy * sxy) / (sxx * syy) };
    Some((a, b, r2))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn band_of_one_run_is_degenerate() {
        assert_eq!(mean_band(&[0.25]), (0.25, 0.25, 0.25));
        let (m, lo, hi) = mean_band(&[0.1, 0.3]);
        assert!((m - 0.2).abs() < 1e-15 && lo < m && m < hi);
    }

    #[test]
    fn theory_rows_skip_low_data() {
        // Threshold for d = 5, beta = 0.1 is 2 (5 + ln 10) = 14.605.
        let t = theory_table(5, &[2, 10, 14, 15, 300], 0.1);
        assert_eq!(t.rows.len(), 2);
        assert_eq!(t.rows[0][0], "15");
        assert!((t.rows[0][1].parse::<f64>().unwrap() - 0.9737).abs() < 1e-4);
        assert_eq!(t.rows[1][0], "300");
        assert!((t.rows[1][1].parse::<f64>().unwrap() - 0.048684).abs() < 1e-6);
    }

    #[test]
    fn fits() {
        let pts: Vec<(f64, f64)> = (1..10).map(|i| (i as f64, 2.0 + 3.0 * i as f64)).collect();
        let (a, b, r2) = linear_fit(&pts).unwrap();
        assert!((a - 2.0).abs() < 1e-12 && (b - 3.0).abs() < 1e-12 && (r2 - 1.0).abs() < 1e-12);
        let xs = [10.0, 100.0, 1000.0];
        let ys = [0.1, 0.01, 0.001];
        assert!((log_log_slope(&xs, &ys).unwrap() + 1.0).abs() < 1e-12);
    }
}
