//! Domain types shared by every other module: parameters and their
//! normalization slices, contexts, action spaces, instances and datasets,
//! plus the greedy-action machinery.

use std::cmp::Ordering;

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal, Uniform};

use crate::error::{Error, Result};
use crate::linalg::{dot, norm, sub};
use crate::rng::{rng_from_seed, Rng};

/// Default relative tie tolerance: an action is greedy when its score is
/// within `DEFAULT_TIE_TOL * (1 + |max score|)` of the maximum.
pub const DEFAULT_TIE_TOL: f64 = 1e-9;

/// Normalization applied to the parameter. Removes the positive-scaling
/// ambiguity of the greedy policy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Slice {
    /// `sum_i theta_i = 1`
    SumToOne,
    /// `theta_0 = 1`
    FirstCoordOne,
    Unconstrained,
}

impl Slice {
    pub fn is_active(self) -> bool {
        !matches!(self, Slice::Unconstrained)
    }

    pub fn name(self) -> &'static str {
        match self {
            Slice::SumToOne => "sum-to-one",
            Slice::FirstCoordOne => "first-coordinate-one",
            Slice::Unconstrained => "unconstrained",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "sum-to-one" => Ok(Slice::SumToOne),
            "first-coordinate-one" => Ok(Slice::FirstCoordOne),
            "unconstrained" => Ok(Slice::Unconstrained),
            other => Err(Error::InvalidArgument(format!("unknown slice '{other}'"))),
        }
    }

    /// Equality row `e` with `<e, theta> = 1` on the slice.
    pub fn normal(self, dim: usize) -> Option<Vec<f64>> {
        match self {
            Slice::SumToOne => Some(vec![1.0; dim]),
            Slice::FirstCoordOne => {
                let mut e = vec![0.0; dim];
                e[0] = 1.0;
                Some(e)
            }
            Slice::Unconstrained => None,
        }
    }

    /// Point of the slice closest to the origin.
    pub fn anchor(self, dim: usize) -> Vec<f64> {
        match self {
            Slice::SumToOne => vec![1.0 / dim as f64; dim],
            Slice::FirstCoordOne => {
                let mut a = vec![0.0; dim];
                a[0] = 1.0;
                a
            }
            Slice::Unconstrained => vec![0.0; dim],
        }
    }

    /// Orthonormal basis of the slice's tangent space. The anchor is
    /// orthogonal to every basis vector, so `||anchor + Z y||^2 =
    /// ||anchor||^2 + ||y||^2`.
    pub fn basis(self, dim: usize) -> Vec<Vec<f64>> {
        match self {
            Slice::Unconstrained => (0..dim)
                .map(|i| {
                    let mut e = vec![0.0; dim];
                    e[i] = 1.0;
                    e
                })
                .collect(),
            Slice::FirstCoordOne => (1..dim)
                .map(|i| {
                    let mut e = vec![0.0; dim];
                    e[i] = 1.0;
                    e
                })
                .collect(),
            // Helmert basis.
            Slice::SumToOne => (1..dim)
                .map(|k| {
                    let scale = 1.0 / ((k * (k + 1)) as f64).sqrt();
                    let mut v = vec![0.0; dim];
                    for x in v.iter_mut().take(k) {
                        *x = scale;
                    }
                    v[k] = -(k as f64) * scale;
                    v
                })
                .collect(),
        }
    }

    /// Euclidean projection onto the slice, in place.
    pub fn project(self, coords: &mut [f64]) {
        match self {
            Slice::SumToOne => {
                let shift = (coords.iter().sum::<f64>() - 1.0) / coords.len() as f64;
                coords.iter_mut().for_each(|x| *x -= shift);
            }
            Slice::FirstCoordOne => coords[0] = 1.0,
            Slice::Unconstrained => {}
        }
    }

    /// Projection of a direction onto the tangent space, in place.
    pub fn project_direction(self, v: &mut [f64]) {
        match self {
            Slice::SumToOne => {
                let mean = v.iter().sum::<f64>() / v.len() as f64;
                v.iter_mut().for_each(|x| *x -= mean);
            }
            Slice::FirstCoordOne => v[0] = 0.0,
            Slice::Unconstrained => {}
        }
    }
}

/// A parameter vector together with the slice it lives on.
#[derive(Debug, Clone, PartialEq)]
pub struct Parameter {
    coords: Vec<f64>,
    slice: Slice,
}

impl Parameter {
    pub fn new(coords: Vec<f64>, slice: Slice) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::InvalidParameter("empty coordinate vector".into()));
        }
        if coords.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidParameter("non-finite coordinate".into()));
        }
        if slice.is_active() && coords.iter().all(|&x| x == 0.0) {
            return Err(Error::InvalidParameter(
                "zero vector is excluded by the normalization".into(),
            ));
        }
        match slice {
            Slice::SumToOne => {
                let s: f64 = coords.iter().sum();
                if (s - 1.0).abs() > 1e-9 {
                    return Err(Error::InvalidParameter(format!(
                        "coordinates sum to {s}, expected 1"
                    )));
                }
            }
            Slice::FirstCoordOne => {
                if coords[0] != 1.0 {
                    return Err(Error::InvalidParameter(format!(
                        "first coordinate is {}, expected exactly 1",
                        coords[0]
                    )));
                }
            }
            Slice::Unconstrained => {}
        }
        Ok(Self { coords, slice })
    }

    pub fn unconstrained(coords: Vec<f64>) -> Result<Self> {
        Self::new(coords, Slice::Unconstrained)
    }

    /// Projects `coords` onto `slice` before validating.
    pub fn projected(mut coords: Vec<f64>, slice: Slice) -> Result<Self> {
        slice.project(&mut coords);
        Self::new(coords, slice)
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn into_coords(self) -> Vec<f64> {
        self.coords
    }

    pub fn slice(&self) -> Slice {
        self.slice
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn norm(&self) -> f64 {
        norm(&self.coords)
    }

    /// Positive rescaling, dropping the slice (a rescaled parameter is no
    /// longer on it).
    pub fn scaled(&self, alpha: f64) -> Result<Self> {
        Self::unconstrained(self.coords.iter().map(|x| alpha * x).collect())
    }
}

/// A decision context.
#[derive(Debug, Clone, PartialEq)]
pub enum Context {
    /// Row-major `rows x cols` matrix acting on action vectors.
    Matrix {
        rows: usize,
        cols: usize,
        data: Vec<f64>,
    },
    /// Unit vector.
    Sphere(Vec<f64>),
    /// Discrete state label.
    Label(usize),
}

impl Context {
    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::InvalidContext(format!(
                "matrix data has {} entries, expected {}",
                data.len(),
                rows * cols
            )));
        }
        Ok(Context::Matrix { rows, cols, data })
    }

    pub fn sphere(v: Vec<f64>) -> Result<Self> {
        let n = norm(&v);
        if (n - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidContext(format!("sphere context has norm {n}")));
        }
        Ok(Context::Sphere(v))
    }
}

/// Reference to an action. Finite spaces use indices; the segment oracle
/// uses the closed-form values {-1, 0, 1}; the square uses grid indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Action {
    Index(usize),
    Segment(i8),
    Grid(usize, usize),
}

#[derive(Debug, Clone, PartialEq)]
pub enum ActionSpace {
    Finite { actions: Vec<Vec<f64>> },
    /// `A = [-1, 1]` handled in closed form.
    SegmentOracle,
    /// `A = [-1, 1]^2` with a `grid x grid` evaluation grid for argmax-set
    /// reporting.
    TwoStateSquare { grid: usize },
}

impl ActionSpace {
    pub fn finite(actions: Vec<Vec<f64>>) -> Result<Self> {
        if actions.is_empty() {
            return Err(Error::EmptyActionSpace);
        }
        if actions.len() < 2 {
            return Err(Error::InvalidArgument(
                "finite action space needs at least 2 actions".into(),
            ));
        }
        for (i, a) in actions.iter().enumerate() {
            if actions[..i].iter().any(|b| b == a) {
                return Err(Error::InvalidArgument(format!("action {i} is a duplicate")));
            }
        }
        Ok(ActionSpace::Finite { actions })
    }

    pub fn square(grid: usize) -> Result<Self> {
        if grid < 2 {
            return Err(Error::InvalidArgument("grid needs at least 2 points".into()));
        }
        Ok(ActionSpace::TwoStateSquare { grid })
    }

    pub fn len(&self) -> usize {
        match self {
            ActionSpace::Finite { actions } => actions.len(),
            ActionSpace::SegmentOracle => 3,
            ActionSpace::TwoStateSquare { grid } => grid * grid,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn contains(&self, a: &Action) -> bool {
        match (self, a) {
            (ActionSpace::Finite { actions }, Action::Index(k)) => *k < actions.len(),
            (ActionSpace::SegmentOracle, Action::Segment(v)) => (-1..=1).contains(v),
            (ActionSpace::TwoStateSquare { grid }, Action::Grid(i, j)) => *i < *grid && *j < *grid,
            _ => false,
        }
    }

    /// Position in the space's stored order (used by smallest-index
    /// tie-breaking).
    pub fn order_key(&self, a: &Action) -> usize {
        match (self, a) {
            (ActionSpace::TwoStateSquare { grid }, Action::Grid(i, j)) => i * grid + j,
            (_, Action::Index(k)) => *k,
            (_, Action::Segment(v)) => (*v + 1) as usize,
            (_, Action::Grid(i, j)) => i * 1_000_000 + j,
        }
    }

    /// The action as a real vector.
    pub fn action_vector(&self, a: &Action) -> Vec<f64> {
        match (self, a) {
            (ActionSpace::Finite { actions }, Action::Index(k)) => actions[*k].clone(),
            (ActionSpace::TwoStateSquare { grid }, Action::Grid(i, j)) => {
                vec![grid_value(*grid, *i), grid_value(*grid, *j)]
            }
            (_, Action::Segment(v)) => vec![*v as f64],
            _ => Vec::new(),
        }
    }
}

/// `-1 + 2 i / (n - 1)`; exact at both endpoints and at the midpoint.
pub fn grid_value(n: usize, i: usize) -> f64 {
    if i == n - 1 {
        1.0
    } else {
        -1.0 + 2.0 * i as f64 / (n - 1) as f64
    }
}

/// Feature map `psi(s, a)`.
#[derive(Debug, Clone, PartialEq)]
pub enum FeatureMap {
    /// `psi(s, a) = s a` for a matrix context and a vector action.
    MatrixAction,
    /// `psi(s, a) = (-2|a| + a, a s)` for a sphere context and scalar action.
    AsymmetricStrip,
    /// `psi(s, (a1, a2)) = (a1, a2, s a2)` for a label context.
    StateCoupled,
    /// Explicit table `features[label][action]`.
    Table(Vec<Vec<Vec<f64>>>),
}

/// Context distribution.
#[derive(Debug, Clone, PartialEq)]
pub enum ContextModel {
    /// i.i.d. `Unif[-half_width, half_width]` entries.
    UniformMatrix {
        rows: usize,
        cols: usize,
        half_width: f64,
    },
    /// Uniform on the unit sphere of `R^dim` (normalized Gaussian).
    UniformSphere { dim: usize },
    /// Labels `0..probs.len()` with the given probabilities.
    Discrete { probs: Vec<f64> },
}

impl ContextModel {
    pub fn sample(&self, rng: &mut Rng) -> Context {
        match self {
            ContextModel::UniformMatrix {
                rows,
                cols,
                half_width,
            } => {
                let u = Uniform::new_inclusive(-half_width, *half_width);
                let data = (0..rows * cols).map(|_| u.sample(rng)).collect();
                Context::Matrix {
                    rows: *rows,
                    cols: *cols,
                    data,
                }
            }
            ContextModel::UniformSphere { dim } => Context::Sphere(sample_sphere(*dim, rng)),
            ContextModel::Discrete { probs } => {
                let u: f64 = rng.gen();
                let mut acc = 0.0;
                for (i, p) in probs.iter().enumerate() {
                    acc += p;
                    if u < acc {
                        return Context::Label(i);
                    }
                }
                Context::Label(probs.len() - 1)
            }
        }
    }
}

/// Uniform draw from the unit sphere in `R^dim`.
pub fn sample_sphere(dim: usize, rng: &mut Rng) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
        let n = norm(&v);
        if n > 1e-12 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TieBreak {
    SmallestIndex,
    Lexicographic,
}

/// Result of [`greedy_action_set`].
#[derive(Debug, Clone, PartialEq)]
pub struct GreedySet {
    pub actions: Vec<Action>,
    pub max_score: f64,
    /// The true argmax set is a continuum (segment or face) and `actions`
    /// lists its boundary or grid representatives.
    pub continuum: bool,
}

impl GreedySet {
    pub fn contains(&self, a: &Action) -> bool {
        self.actions.contains(a)
    }

    pub fn is_singleton(&self) -> bool {
        self.actions.len() == 1 && !self.continuum
    }
}

/// One contextual decision problem: actions, features, context law and the
/// ground-truth parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub name: String,
    pub action_space: ActionSpace,
    pub feature_map: FeatureMap,
    pub contexts: ContextModel,
    pub theta_star: Parameter,
    pub tie_break: TieBreak,
    /// Bound `C` on `||psi(s, a)||_2`.
    pub feature_bound: f64,
}

impl Instance {
    pub fn new(
        name: impl Into<String>,
        action_space: ActionSpace,
        feature_map: FeatureMap,
        contexts: ContextModel,
        theta_star: Parameter,
        tie_break: TieBreak,
        feature_bound: f64,
    ) -> Result<Self> {
        let d = theta_star.dim();
        let ok = match (&action_space, &feature_map, &contexts) {
            (
                ActionSpace::Finite { actions },
                FeatureMap::MatrixAction,
                ContextModel::UniformMatrix { rows, cols, .. },
            ) => *rows == d && actions.iter().all(|a| a.len() == *cols),
            (ActionSpace::SegmentOracle, FeatureMap::AsymmetricStrip, ContextModel::UniformSphere { dim }) => {
                *dim + 1 == d
            }
            (
                ActionSpace::TwoStateSquare { .. },
                FeatureMap::StateCoupled,
                ContextModel::Discrete { probs },
            ) => d == 3 && probs.len() == 2,
            (ActionSpace::Finite { actions }, FeatureMap::Table(table), ContextModel::Discrete { probs }) => {
                table.len() == probs.len()
                    && table
                        .iter()
                        .all(|row| row.len() == actions.len() && row.iter().all(|f| f.len() == d))
            }
            _ => false,
        };
        if !ok {
            return Err(Error::InvalidArgument(
                "incompatible action space, feature map, context model and parameter dimension"
                    .into(),
            ));
        }
        if !(feature_bound >= 0.0) {
            return Err(Error::InvalidArgument("feature bound must be >= 0".into()));
        }
        Ok(Self {
            name: name.into(),
            action_space,
            feature_map,
            contexts,
            theta_star,
            tie_break,
            feature_bound,
        })
    }

    /// Parameter dimension.
    pub fn dim(&self) -> usize {
        self.theta_star.dim()
    }

    pub fn slice(&self) -> Slice {
        self.theta_star.slice()
    }

    /// `B = 2C`.
    pub fn delta_bound(&self) -> f64 {
        2.0 * self.feature_bound
    }

    pub fn sample_context(&self, rng: &mut Rng) -> Context {
        self.contexts.sample(rng)
    }

    fn check_context(&self, s: &Context) -> Result<()> {
        let ok = match (&self.contexts, s) {
            (ContextModel::UniformMatrix { rows, cols, .. }, Context::Matrix { rows: r, cols: c, .. }) => {
                rows == r && cols == c
            }
            (ContextModel::UniformSphere { dim }, Context::Sphere(v)) => v.len() == *dim,
            (ContextModel::Discrete { probs }, Context::Label(l)) => *l < probs.len(),
            _ => false,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidContext(format!("context {s:?} does not match instance")))
        }
    }

    /// `psi(s, a)`.
    pub fn features(&self, s: &Context, a: &Action) -> Result<Vec<f64>> {
        if !self.action_space.contains(a) {
            return Err(Error::InfeasibleAction(format!("{a:?}")));
        }
        self.check_context(s)?;
        Ok(self.features_unchecked(s, a))
    }

    pub(crate) fn features_unchecked(&self, s: &Context, a: &Action) -> Vec<f64> {
        match (&self.feature_map, s, a) {
            (FeatureMap::MatrixAction, Context::Matrix { rows, cols, data }, Action::Index(k)) => {
                let ActionSpace::Finite { actions } = &self.action_space else {
                    unreachable!()
                };
                crate::linalg::mat_vec(data, *rows, *cols, &actions[*k])
            }
            (FeatureMap::AsymmetricStrip, Context::Sphere(v), Action::Segment(a)) => {
                let a = *a as f64;
                let mut f = Vec::with_capacity(v.len() + 1);
                f.push(-2.0 * a.abs() + a);
                f.extend(v.iter().map(|x| a * x));
                f
            }
            (FeatureMap::StateCoupled, Context::Label(l), Action::Grid(i, j)) => {
                let ActionSpace::TwoStateSquare { grid } = self.action_space else {
                    unreachable!()
                };
                let a1 = grid_value(grid, *i);
                let a2 = grid_value(grid, *j);
                vec![a1, a2, *l as f64 * a2]
            }
            (FeatureMap::Table(t), Context::Label(l), Action::Index(k)) => t[*l][*k].clone(),
            _ => unreachable!("context/action kinds checked at construction"),
        }
    }

    /// `<theta, psi(s, a)>`.
    pub fn score(&self, theta: &[f64], s: &Context, a: &Action) -> Result<f64> {
        Ok(dot(theta, &self.features(s, a)?))
    }

    /// Actions over which every inner maximum of a linear or
    /// piecewise-convex function of `psi(s, .)` is attained: all actions for
    /// finite spaces, `{-1, 0, 1}` for the segment (features are affine on
    /// `[-1, 0]` and `[0, 1]`), the four corners for the square (features are
    /// linear in `a`).
    pub fn vertices(&self) -> Vec<Action> {
        match &self.action_space {
            ActionSpace::Finite { actions } => (0..actions.len()).map(Action::Index).collect(),
            ActionSpace::SegmentOracle => vec![Action::Segment(-1), Action::Segment(0), Action::Segment(1)],
            ActionSpace::TwoStateSquare { grid } => {
                let n = grid - 1;
                vec![
                    Action::Grid(0, 0),
                    Action::Grid(0, n),
                    Action::Grid(n, 0),
                    Action::Grid(n, n),
                ]
            }
        }
    }

    /// Scores of all finite actions at `s`. Uses `<s^T theta, a_k>` for
    /// matrix contexts to avoid forming every feature vector.
    pub(crate) fn finite_scores(&self, theta: &[f64], s: &Context) -> Vec<f64> {
        match (&self.action_space, &self.feature_map, s) {
            (ActionSpace::Finite { actions }, FeatureMap::MatrixAction, Context::Matrix { rows, cols, data }) => {
                let w = crate::linalg::mat_t_vec(data, *rows, *cols, theta);
                actions.iter().map(|a| dot(&w, a)).collect()
            }
            (ActionSpace::Finite { .. }, FeatureMap::Table(t), Context::Label(l)) => {
                t[*l].iter().map(|f| dot(theta, f)).collect()
            }
            _ => unreachable!("finite_scores on a non-finite space"),
        }
    }

    /// Expert demonstration at `s`: tie-broken greedy action of `theta_star`.
    pub fn expert_action(&self, s: &Context) -> Result<Action> {
        self.policy_action(self.theta_star.coords(), s)
    }

    /// Tie-broken greedy action of `theta` at `s`.
    pub fn policy_action(&self, theta: &[f64], s: &Context) -> Result<Action> {
        if let ActionSpace::Finite { .. } = self.action_space {
            if self.tie_break == TieBreak::SmallestIndex {
                self.check_context(s)?;
                if theta.len() != self.dim() {
                    return Err(Error::InvalidParameter("dimension mismatch".into()));
                }
                return Ok(Action::Index(argmax_smallest_index(&self.finite_scores(theta, s), DEFAULT_TIE_TOL)));
            }
        }
        let set = greedy_action_set(self, theta, s, DEFAULT_TIE_TOL)?;
        tie_break(self, &set.actions, self.tie_break)
    }

    pub fn demonstration(&self, s: Context) -> Result<Demonstration> {
        let expert_action = self.expert_action(&s)?;
        Ok(Demonstration {
            context: s,
            expert_action,
        })
    }
}

fn tol_for(max: f64, tie_tol: f64) -> f64 {
    tie_tol * (1.0 + max.abs())
}

/// First index whose score is within the tie tolerance of the maximum.
pub(crate) fn argmax_smallest_index(scores: &[f64], tie_tol: f64) -> usize {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let tol = tol_for(max, tie_tol);
    scores.iter().position(|&v| v >= max - tol).unwrap_or(0)
}

/// All actions whose score under `theta` is within the tie tolerance of the
/// maximum. The square reports its grid approximation; the segment oracle
/// reports `{-1}`, `{0}`, `{1}`, or a boundary pair with `continuum = true`.
pub fn greedy_action_set(instance: &Instance, theta: &[f64], s: &Context, tie_tol: f64) -> Result<GreedySet> {
    if !(tie_tol >= 0.0) {
        return Err(Error::InvalidArgument("tie_tol must be >= 0".into()));
    }
    if theta.len() != instance.dim() || theta.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidParameter("theta must be finite with the instance dimension".into()));
    }
    if instance.action_space.is_empty() {
        return Err(Error::EmptyActionSpace);
    }
    instance.check_context(s)?;
    match &instance.action_space {
        ActionSpace::Finite { .. } => {
            let scores = instance.finite_scores(theta, s);
            let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let tol = tol_for(max, tie_tol);
            let actions = scores
                .iter()
                .enumerate()
                .filter(|(_, &v)| v >= max - tol)
                .map(|(k, _)| Action::Index(k))
                .collect();
            Ok(GreedySet {
                actions,
                max_score: max,
                continuum: false,
            })
        }
        ActionSpace::SegmentOracle => {
            let Context::Sphere(v) = s else { unreachable!() };
            Ok(segment_greedy(theta[0], dot(&theta[1..], v), tie_tol))
        }
        ActionSpace::TwoStateSquare { grid } => {
            let Context::Label(l) = s else { unreachable!() };
            let c1 = theta[0];
            let c2 = theta[1] + *l as f64 * theta[2];
            // Linear score: the maximum sits at a corner, which is a grid point.
            let max = c1.abs() + c2.abs();
            let tol = tol_for(max, tie_tol);
            let n = *grid;
            let vals: Vec<f64> = (0..n).map(|i| grid_value(n, i)).collect();
            let mut actions = Vec::new();
            for (i, a1) in vals.iter().enumerate() {
                for (j, a2) in vals.iter().enumerate() {
                    if c1 * a1 + c2 * a2 >= max - tol {
                        actions.push(Action::Grid(i, j));
                    }
                }
            }
            let continuum = actions.len() > 1;
            Ok(GreedySet {
                actions,
                max_score: max,
                continuum,
            })
        }
    }
}

/// Closed-form argmax of `theta_0 (-2|a| + a) + a x` over `a in [-1, 1]`.
///
/// On `[0, 1]` the score is `a (x - theta_0)`, on `[-1, 0]` it is
/// `a (3 theta_0 + x)`; both are linear, so the candidates are the endpoints
/// and `0`, and a zero slope makes a whole half-segment optimal.
fn segment_greedy(theta0: f64, x: f64, tie_tol: f64) -> GreedySet {
    let up = x - theta0; // score at a = 1
    let down = -(3.0 * theta0 + x); // score at a = -1
    let max = 0f64.max(up).max(down);
    let tol = tol_for(max, tie_tol);
    let mut actions = Vec::with_capacity(3);
    for (v, score) in [(-1i8, down), (0, 0.0), (1, up)] {
        if score >= max - tol {
            actions.push(Action::Segment(v));
        }
    }
    // Two optimal endpoints of one half-segment mean the score is flat on it.
    let continuum = actions.len() > 1 && actions.contains(&Action::Segment(0));
    GreedySet {
        actions,
        max_score: max,
        continuum,
    }
}

/// Deterministic selection from a non-empty action set.
pub fn tie_break(instance: &Instance, actions: &[Action], rule: TieBreak) -> Result<Action> {
    let space = &instance.action_space;
    let best = match rule {
        TieBreak::SmallestIndex => actions.iter().min_by_key(|a| space.order_key(a)),
        TieBreak::Lexicographic => actions.iter().min_by(|a, b| {
            let (va, vb) = (space.action_vector(a), space.action_vector(b));
            va.iter()
                .zip(&vb)
                .map(|(x, y)| x.partial_cmp(y).unwrap_or(Ordering::Equal))
                .find(|o| *o != Ordering::Equal)
                .unwrap_or(Ordering::Equal)
                .then_with(|| space.order_key(a).cmp(&space.order_key(b)))
        }),
    };
    best.copied().ok_or(Error::EmptyActionSpace)
}

/// `psi(s, a) - psi(s, a_ref)`.
pub fn delta_features(instance: &Instance, s: &Context, a: &Action, a_ref: &Action) -> Result<Vec<f64>> {
    let f = instance.features(s, a)?;
    let g = instance.features(s, a_ref)?;
    Ok(sub(&f, &g))
}

/// A context paired with the expert's action on it.
#[derive(Debug, Clone, PartialEq)]
pub struct Demonstration {
    pub context: Context,
    pub expert_action: Action,
}

/// Ordered demonstrations with their provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub demos: Vec<Demonstration>,
    pub seed: u64,
    pub instance: String,
}

impl Dataset {
    pub fn new(instance: &Instance, seed: u64) -> Self {
        Self {
            demos: Vec::new(),
            seed,
            instance: instance.name.clone(),
        }
    }

    /// `t` i.i.d. demonstrations drawn with `seed`.
    pub fn sample(instance: &Instance, t: usize, seed: u64) -> Result<Self> {
        let mut rng = rng_from_seed(seed);
        let mut ds = Self::new(instance, seed);
        for _ in 0..t {
            let s = instance.sample_context(&mut rng);
            ds.demos.push(instance.demonstration(s)?);
        }
        Ok(ds)
    }

    pub fn from_contexts(instance: &Instance, contexts: Vec<Context>) -> Result<Self> {
        let mut ds = Self::new(instance, 0);
        for s in contexts {
            ds.demos.push(instance.demonstration(s)?);
        }
        Ok(ds)
    }

    /// The first `t` demonstrations.
    pub fn prefix(&self, t: usize) -> Self {
        Self {
            demos: self.demos[..t.min(self.demos.len())].to_vec(),
            seed: self.seed,
            instance: self.instance.clone(),
        }
    }

    pub fn len(&self) -> usize {
        self.demos.len()
    }

    pub fn is_empty(&self) -> bool {
        self.demos.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances::{make_example_one, make_synthetic, make_tightness};

    fn toy_finite() -> Instance {
        // psi(s, a) = a through a 2x2 identity context.
        let actions = vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0]];
        Instance::new(
            "toy",
            ActionSpace::finite(actions).unwrap(),
            FeatureMap::MatrixAction,
            ContextModel::UniformMatrix {
                rows: 2,
                cols: 2,
                half_width: 1.0,
            },
            Parameter::new(vec![1.0, 0.0], Slice::SumToOne).unwrap(),
            TieBreak::SmallestIndex,
            1.0,
        )
        .unwrap()
    }

    fn identity2() -> Context {
        Context::matrix(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap()
    }

    #[test]
    fn parameter_invariants() {
        assert!(Parameter::new(vec![0.5, 0.5], Slice::SumToOne).is_ok());
        assert!(Parameter::new(vec![0.5, 0.6], Slice::SumToOne).is_err());
        assert!(Parameter::new(vec![1.0, 3.0], Slice::FirstCoordOne).is_ok());
        assert!(Parameter::new(vec![1.0 + 1e-15, 3.0], Slice::FirstCoordOne).is_err());
        assert!(Parameter::new(vec![f64::NAN, 1.0], Slice::Unconstrained).is_err());
        assert!(Parameter::new(vec![0.0, 0.0], Slice::Unconstrained).is_ok());
        assert!(matches!(
            Parameter::new(vec![0.0, 0.0], Slice::SumToOne),
            Err(Error::InvalidParameter(_))
        ));
    }

    #[test]
    fn slice_basis_is_orthonormal_and_orthogonal_to_anchor() {
        for slice in [Slice::SumToOne, Slice::FirstCoordOne, Slice::Unconstrained] {
            let d = 6;
            let z = slice.basis(d);
            let anchor = slice.anchor(d);
            for (i, u) in z.iter().enumerate() {
                assert!(dot(u, &anchor).abs() < 1e-14);
                for (j, v) in z.iter().enumerate() {
                    let want = if i == j { 1.0 } else { 0.0 };
                    assert!((dot(u, v) - want).abs() < 1e-14);
                }
                if let Some(e) = slice.normal(d) {
                    assert!(dot(u, &e).abs() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn finite_greedy_picks_first_coordinate() {
        let inst = toy_finite();
        let set = greedy_action_set(&inst, &[1.0, 0.0], &identity2(), 0.0).unwrap();
        assert_eq!(set.actions, vec![Action::Index(1)]);
    }

    #[test]
    fn tie_break_rules() {
        let inst = make_synthetic(3, 8, 1).unwrap();
        let set = [Action::Index(3), Action::Index(7), Action::Index(1)];
        assert_eq!(tie_break(&inst, &set, TieBreak::SmallestIndex).unwrap(), Action::Index(1));
        assert_eq!(tie_break(&inst, &[Action::Index(5)], TieBreak::SmallestIndex).unwrap(), Action::Index(5));
        assert_eq!(tie_break(&inst, &[], TieBreak::SmallestIndex), Err(Error::EmptyActionSpace));

        let ex = make_example_one();
        let n = 200;
        // (1, 0) vs (1, -1): componentwise order puts (1, -1) first.
        let set = [Action::Grid(n, n / 2), Action::Grid(n, 0)];
        assert_eq!(tie_break(&ex, &set, TieBreak::Lexicographic).unwrap(), Action::Grid(n, 0));
    }

    #[test]
    fn example_one_greedy_sets() {
        let ex = make_example_one();
        let n = 200;
        let set = greedy_action_set(&ex, &[1.0, -1.0, 2.0], &Context::Label(0), DEFAULT_TIE_TOL).unwrap();
        assert_eq!(set.actions, vec![Action::Grid(n, 0)]);
        for s in [0, 1] {
            let set = greedy_action_set(&ex, &[1.0, 0.0, 0.0], &Context::Label(s), DEFAULT_TIE_TOL).unwrap();
            assert_eq!(set.actions.len(), 201);
            assert!(set.continuum);
            assert!(set.actions.iter().all(|a| matches!(a, Action::Grid(i, _) if *i == n)));
        }
    }

    #[test]
    fn delta_example_one() {
        let ex = make_example_one();
        let d = delta_features(&ex, &Context::Label(0), &Action::Grid(200, 200), &Action::Grid(200, 0)).unwrap();
        assert_eq!(d, vec![0.0, 2.0, 0.0]);
        let z = delta_features(&ex, &Context::Label(1), &Action::Grid(3, 7), &Action::Grid(3, 7)).unwrap();
        assert!(z.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn delta_matches_direct_subtraction() {
        let inst = make_synthetic(5, 15, 3).unwrap();
        let mut rng = rng_from_seed(11);
        for _ in 0..50 {
            let s = inst.sample_context(&mut rng);
            let (a, b) = (Action::Index(rng.gen_range(0..15)), Action::Index(rng.gen_range(0..15)));
            let d = delta_features(&inst, &s, &a, &b).unwrap();
            let (Context::Matrix { data, .. }, ActionSpace::Finite { actions }) = (&s, &inst.action_space) else {
                unreachable!()
            };
            for i in 0..5 {
                let direct: f64 = (0..5).map(|j| data[i * 5 + j] * (actions[a_idx(a)][j] - actions[a_idx(b)][j])).sum();
                assert!((d[i] - direct).abs() < 1e-12);
            }
        }
        fn a_idx(a: Action) -> usize {
            match a {
                Action::Index(k) => k,
                _ => unreachable!(),
            }
        }
    }

    #[test]
    fn segment_oracle_cases() {
        let inst = make_tightness(1, 0).unwrap();
        let plus = Context::sphere(vec![1.0]).unwrap();
        let g = |x: f64| greedy_action_set(&inst, &[1.0, x], &plus, DEFAULT_TIE_TOL).unwrap();
        assert_eq!(g(0.0).actions, vec![Action::Segment(0)]);
        assert_eq!(g(2.0).actions, vec![Action::Segment(1)]);
        assert_eq!(g(-4.0).actions, vec![Action::Segment(-1)]);
        let b = g(1.0);
        assert_eq!(b.actions, vec![Action::Segment(0), Action::Segment(1)]);
        assert!(b.continuum);
        let b = g(-3.0);
        assert_eq!(b.actions, vec![Action::Segment(-1), Action::Segment(0)]);
    }

    #[test]
    fn empty_and_bad_inputs() {
        assert_eq!(ActionSpace::finite(vec![]), Err(Error::EmptyActionSpace));
        let inst = toy_finite();
        assert!(greedy_action_set(&inst, &[1.0, 0.0], &identity2(), -1.0).is_err());
        assert!(greedy_action_set(&inst, &[1.0, f64::INFINITY], &identity2(), 0.0).is_err());
        assert!(matches!(
            inst.features(&identity2(), &Action::Index(9)),
            Err(Error::InfeasibleAction(_))
        ));
    }
}
