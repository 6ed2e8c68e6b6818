//! Generators for the three concrete problem families.

use std::fmt;

use rand_distr::{Distribution, StandardNormal, Uniform};

use crate::error::{Error, Result};
use crate::linalg::norm;
use crate::model::{
    ActionSpace, ContextModel, FeatureMap, Instance, Parameter, Slice, TieBreak,
};
use crate::rng::rng_from_seed;

/// Grid resolution per axis for argmax-set reporting on the square.
pub const EXAMPLE_ONE_GRID: usize = 201;

/// Linear contextual model with `k` fixed unit-norm actions, `d x d`
/// contexts with `Unif[-3, 3]` entries and `psi(s, a) = s a`.
///
/// `theta_star` has i.i.d. `Unif[0, 1]` coordinates rescaled to sum to one.
/// The feature bound is `C = 3d`: each row of `s a` is at most
/// `3 ||a||_1 <= 3 sqrt(d)` in magnitude.
pub fn make_synthetic(d: usize, k: usize, seed: u64) -> Result<Instance> {
    if d < 1 || k < 2 {
        return Err(Error::InvalidArgument(format!("synthetic needs d >= 1 and K >= 2 (got d={d}, K={k})")));
    }
    let mut rng = rng_from_seed(seed);
    let mut actions = Vec::with_capacity(k);
    while actions.len() < k {
        let a: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
        let n = norm(&a);
        if n > 1e-12 {
            actions.push(a.into_iter().map(|x| x / n).collect());
        }
    }
    let unit = Uniform::new(0.0, 1.0);
    let raw: Vec<f64> = (0..d).map(|_| unit.sample(&mut rng)).collect();
    let total: f64 = raw.iter().sum();
    let theta_star = Parameter::projected(raw.into_iter().map(|x| x / total).collect(), Slice::SumToOne)?;
    Instance::new(
        format!("synthetic-d{d}-K{k}-seed{seed}"),
        ActionSpace::finite(actions)?,
        FeatureMap::MatrixAction,
        ContextModel::UniformMatrix {
            rows: d,
            cols: d,
            half_width: 3.0,
        },
        theta_star,
        TieBreak::SmallestIndex,
        3.0 * d as f64,
    )
}

/// Fully supported instance: contexts uniform on the sphere of `R^d`,
/// `A = [-1, 1]`, `psi(s, a) = (-2|a| + a, a s)` and `theta_star = (1, 0)`.
/// Parameters live on the slice `theta_0 = 1`, so the full dimension is
/// `d + 1`. The expert always plays `0`.
///
/// `seed` only labels the instance; the construction is deterministic.
pub fn make_tightness(d: usize, seed: u64) -> Result<Instance> {
    if d < 1 {
        return Err(Error::InvalidArgument("tightness needs d >= 1".into()));
    }
    let mut star = vec![0.0; d + 1];
    star[0] = 1.0;
    Instance::new(
        format!("tightness-d{d}-seed{seed}"),
        ActionSpace::SegmentOracle,
        FeatureMap::AsymmetricStrip,
        ContextModel::UniformSphere { dim: d },
        Parameter::new(star, Slice::FirstCoordOne)?,
        TieBreak::SmallestIndex,
        // a = -1 gives psi = (-3, -s), the largest norm.
        10f64.sqrt(),
    )
}

/// Two equiprobable states, `A = [-1, 1]^2`, `psi(s, a) = (a1, a2, s a2)`,
/// `theta_star = (1, -1, 2)`.
pub fn make_example_one() -> Instance {
    make_example_one_with_grid(EXAMPLE_ONE_GRID).expect("default grid is valid")
}

pub fn make_example_one_with_grid(grid: usize) -> Result<Instance> {
    Instance::new(
        "example-one",
        ActionSpace::square(grid)?,
        FeatureMap::StateCoupled,
        ContextModel::Discrete { probs: vec![0.5, 0.5] },
        Parameter::new(vec![1.0, -1.0, 2.0], Slice::FirstCoordOne)?,
        TieBreak::SmallestIndex,
        3f64.sqrt(),
    )
}

/// Largest `||psi(s, a)||` seen over `n_contexts` sampled contexts and all
/// vertex actions. Used as the audited `C` (and `B = 2C`).
pub fn audit_feature_bound(instance: &Instance, n_contexts: usize, seed: u64) -> f64 {
    let mut rng = rng_from_seed(seed);
    let vertices = instance.vertices();
    let mut best = 0f64;
    for _ in 0..n_contexts {
        let s = instance.sample_context(&mut rng);
        for a in &vertices {
            best = best.max(norm(&instance.features_unchecked(&s, a)));
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum InstanceKind {
    SyntheticLinear,
    Tightness,
    ExampleOne,
}

impl InstanceKind {
    pub fn name(self) -> &'static str {
        match self {
            InstanceKind::SyntheticLinear => "synthetic-linear",
            InstanceKind::Tightness => "tightness",
            InstanceKind::ExampleOne => "example-one",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "synthetic-linear" => Ok(InstanceKind::SyntheticLinear),
            "tightness" => Ok(InstanceKind::Tightness),
            "example-one" => Ok(InstanceKind::ExampleOne),
            other => Err(Error::InvalidArgument(format!("unknown instance kind '{other}'"))),
        }
    }
}

/// Serializable recipe for an [`Instance`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InstanceSpec {
    pub kind: InstanceKind,
    pub d: usize,
    /// Action count (synthetic only).
    pub k: usize,
    pub seed: u64,
}

impl InstanceSpec {
    pub fn build(&self) -> Result<Instance> {
        if self.d < 1 {
            return Err(Error::InvalidArgument("d must be >= 1".into()));
        }
        match self.kind {
            InstanceKind::SyntheticLinear => make_synthetic(self.d, self.k, self.seed),
            InstanceKind::Tightness => make_tightness(self.d, self.seed),
            InstanceKind::ExampleOne => Ok(make_example_one()),
        }
    }

    /// Plain-text `key=value` block, one pair per line.
    pub fn to_kv(&self) -> String {
        self.to_string()
    }

    pub fn from_kv(text: &str) -> Result<Self> {
        let mut kind = None;
        let mut d = None;
        let mut k = 15;
        let mut seed = 0;
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::InvalidArgument(format!("expected key=value, got '{line}'")))?;
            let value = value.trim();
            let bad = |_| Error::InvalidArgument(format!("bad value for {}: '{value}'", key.trim()));
            match key.trim() {
                "kind" => kind = Some(InstanceKind::parse(value)?),
                "d" => d = Some(value.parse().map_err(bad)?),
                "K" | "k" => k = value.parse().map_err(bad)?,
                "seed" => seed = value.parse().map_err(bad)?,
                other => return Err(Error::InvalidArgument(format!("unknown key '{other}'"))),
            }
        }
        let kind = kind.ok_or_else(|| Error::InvalidArgument("missing key 'kind'".into()))?;
        let d = match (d, kind) {
            (Some(d), _) => d,
            (None, InstanceKind::ExampleOne) => 3,
            (None, _) => return Err(Error::InvalidArgument("missing key 'd'".into())),
        };
        let spec = Self { kind, d, k, seed };
        if d < 1 || (kind == InstanceKind::SyntheticLinear && k < 2) {
            return Err(Error::InvalidArgument(format!("invalid instance spec {spec:?}")));
        }
        Ok(spec)
    }
}

impl fmt::Display for InstanceSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "kind={}", self.kind.name())?;
        writeln!(f, "d={}", self.d)?;
        writeln!(f, "K={}", self.k)?;
        writeln!(f, "seed={}", self.seed)
    }
}
