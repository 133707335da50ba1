//! Mixed discrete/continuous configuration space and the probabilistic
//! sampling model over it.
//!
//! A space is a three-level tree: fine-tuning method -> model -> per-arm
//! hyperparameters. The sampler keeps one probability vector per categorical
//! node and a truncated normal per continuous node (on a log10 axis for
//! log-scaled parameters). Pull updates mix the model toward the empirical
//! distribution induced by a past configuration; push updates move it away.
//! Extending the pull/push rule from categorical vectors to the truncated
//! normals (convex mixtures of mean/stddev on pull, clamped affine moves on
//! push) is this engine's own treatment of continuous hyperparameters.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Probability floor applied when renormalizing categorical vectors.
pub const EPS_PROB: f64 = 1e-6;

/// Divisor turning a (transformed) range width into the uniform-init stddev.
const INIT_STD_DIV: f64 = 4.0;
/// Divisor for the stddev assigned to an observed continuous value.
const EMPIRICAL_STD_DIV: f64 = 8.0;
/// Divisor for the smallest stddev a push update may leave behind.
const STD_MIN_DIV: f64 = 100.0;

/// Axis on which a continuous parameter is sampled and updated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scale {
    Linear,
    Log,
}

/// Domain of a single hyperparameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamDomain {
    Categorical { values: Vec<String> },
    Continuous { lo: f64, hi: f64, scale: Scale },
}

/// Named hyperparameter spec attached to one (method, model) arm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSpec {
    pub name: String,
    pub domain: ParamDomain,
}

impl ParamSpec {
    /// Transformed (sampling-axis) bounds of a continuous spec.
    fn transformed_bounds(&self) -> Option<(f64, f64)> {
        match &self.domain {
            ParamDomain::Continuous { lo, hi, scale } => Some(match scale {
                Scale::Linear => (*lo, *hi),
                Scale::Log => (lo.log10(), hi.log10()),
            }),
            ParamDomain::Categorical { .. } => None,
        }
    }

    fn transform(&self, raw: f64) -> f64 {
        match &self.domain {
            ParamDomain::Continuous {
                scale: Scale::Log, ..
            } => raw.log10(),
            _ => raw,
        }
    }

    fn untransform(&self, t: f64) -> f64 {
        match &self.domain {
            ParamDomain::Continuous {
                scale: Scale::Log, ..
            } => 10f64.powf(t),
            _ => t,
        }
    }
}

/// One (method, model) pair with its hyperparameter specs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Arm {
    pub method_idx: usize,
    pub model_idx: usize,
    pub params: Vec<ParamSpec>,
}

/// The full configuration space: methods, per-method models, per-arm params.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    methods: Vec<String>,
    models: Vec<Vec<String>>,
    arms: Vec<Arm>,
}

/// Value assigned to one hyperparameter in a concrete configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamValue {
    Continuous(f64),
    Categorical(String),
}

/// A concrete pipeline: method, model, and hyperparameter assignments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Configuration {
    pub method: String,
    pub model: String,
    pub params: BTreeMap<String, ParamValue>,
}

/// Sampler parameters for one node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamState {
    Categorical { probs: Vec<f64> },
    Continuous { mean: f64, stddev: f64 },
}

/// The probabilistic model over a [`SearchSpace`].
///
/// Shapes mirror the space exactly: one vector over methods, one vector per
/// method over its models, and per-arm parameter states in spec order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerState {
    method_probs: Vec<f64>,
    model_probs: Vec<Vec<f64>>,
    arm_params: Vec<Vec<ParamState>>,
}

/// Empirical distribution induced by one configuration: one-hot on the
/// realized path, uniform-init elsewhere. Updates touch only the path.
#[derive(Debug, Clone)]
pub struct InducedDistribution {
    state: SamplerState,
    method_idx: usize,
    model_idx: usize,
}

impl InducedDistribution {
    /// The full induced state (one-hot on path, uniform off path).
    pub fn state(&self) -> &SamplerState {
        &self.state
    }

    pub fn method_idx(&self) -> usize {
        self.method_idx
    }
}

// ---------------------------------------------------------------------------
// Parsing
// ---------------------------------------------------------------------------

#[derive(Deserialize)]
struct RawSpace {
    methods: Vec<String>,
    models: RawModels,
    #[serde(default, rename = "param")]
    params: Vec<RawParam>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum RawModels {
    Global(Vec<String>),
    PerMethod(BTreeMap<String, Vec<String>>),
}

#[derive(Deserialize)]
struct RawParam {
    name: String,
    #[serde(rename = "type")]
    kind: String,
    lo: Option<f64>,
    hi: Option<f64>,
    scale: Option<String>,
    values: Option<Vec<String>>,
    method: Option<String>,
    model: Option<String>,
}

fn check_unique<'a>(ids: impl Iterator<Item = &'a str>, level: &str) -> Result<()> {
    let mut seen = BTreeSet::new();
    for id in ids {
        if !seen.insert(id) {
            return Err(Error::Invalid(format!("duplicate {level} id `{id}`")));
        }
    }
    Ok(())
}

impl SearchSpace {
    /// Parse a space definition document (TOML; grammar documented in the
    /// repository README and exercised by golden tests).
    pub fn parse(text: &str) -> Result<SearchSpace> {
        let raw: RawSpace = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;

        if raw.methods.is_empty() {
            return Err(Error::Invalid("no methods".into()));
        }
        check_unique(raw.methods.iter().map(String::as_str), "method")?;

        let models: Vec<Vec<String>> = match &raw.models {
            RawModels::Global(list) => vec![list.clone(); raw.methods.len()],
            RawModels::PerMethod(table) => {
                for key in table.keys() {
                    if !raw.methods.iter().any(|m| m == key) {
                        return Err(Error::Invalid(format!(
                            "models declared for unknown method `{key}`"
                        )));
                    }
                }
                raw.methods
                    .iter()
                    .map(|m| {
                        table.get(m).cloned().ok_or_else(|| {
                            Error::Invalid(format!("no models declared for method `{m}`"))
                        })
                    })
                    .collect::<Result<_>>()?
            }
        };
        for (m, list) in raw.methods.iter().zip(&models) {
            if list.is_empty() {
                return Err(Error::Invalid(format!("no models for method `{m}`")));
            }
            check_unique(list.iter().map(String::as_str), "model")?;
        }

        let specs: Vec<ParamSpec> = raw
            .params
            .iter()
            .map(|p| {
                let domain = match p.kind.as_str() {
                    "continuous" => {
                        let lo = p.lo.ok_or_else(|| {
                            Error::Invalid(format!("param `{}`: missing `lo`", p.name))
                        })?;
                        let hi = p.hi.ok_or_else(|| {
                            Error::Invalid(format!("param `{}`: missing `hi`", p.name))
                        })?;
                        if !lo.is_finite() || !hi.is_finite() || lo >= hi {
                            return Err(Error::Invalid(format!(
                                "param `{}`: bounds must be finite with {lo} < {hi}",
                                p.name
                            )));
                        }
                        let scale = match p.scale.as_deref() {
                            None | Some("linear") => Scale::Linear,
                            Some("log") => Scale::Log,
                            Some(other) => {
                                return Err(Error::Invalid(format!(
                                    "param `{}`: unknown scale `{other}`",
                                    p.name
                                )))
                            }
                        };
                        if scale == Scale::Log && lo <= 0.0 {
                            return Err(Error::Invalid(format!(
                                "param `{}`: log scale requires a positive lower bound",
                                p.name
                            )));
                        }
                        ParamDomain::Continuous { lo, hi, scale }
                    }
                    "categorical" => {
                        let values = p.values.clone().unwrap_or_default();
                        if values.is_empty() {
                            return Err(Error::Invalid(format!(
                                "param `{}`: categorical needs at least one value",
                                p.name
                            )));
                        }
                        check_unique(values.iter().map(String::as_str), "value")?;
                        ParamDomain::Categorical { values }
                    }
                    other => {
                        return Err(Error::Invalid(format!(
                            "param `{}`: unknown type `{other}`",
                            p.name
                        )))
                    }
                };
                Ok(ParamSpec {
                    name: p.name.clone(),
                    domain,
                })
            })
            .collect::<Result<_>>()?;

        for p in &raw.params {
            if let Some(m) = &p.method {
                if !raw.methods.iter().any(|x| x == m) {
                    return Err(Error::Invalid(format!(
                        "param `{}` scoped to unknown method `{m}`",
                        p.name
                    )));
                }
            }
            if let Some(mo) = &p.model {
                if !models.iter().flatten().any(|x| x == mo) {
                    return Err(Error::Invalid(format!(
                        "param `{}` scoped to unknown model `{mo}`",
                        p.name
                    )));
                }
            }
        }

        let mut arms = Vec::new();
        for (mi, method) in raw.methods.iter().enumerate() {
            for (oi, model) in models[mi].iter().enumerate() {
                let params: Vec<ParamSpec> = raw
                    .params
                    .iter()
                    .zip(&specs)
                    .filter(|(p, _)| {
                        p.method.as_ref().is_none_or(|m| m == method)
                            && p.model.as_ref().is_none_or(|o| o == model)
                    })
                    .map(|(_, s)| s.clone())
                    .collect();
                check_unique(params.iter().map(|s| s.name.as_str()), "param")?;
                arms.push(Arm {
                    method_idx: mi,
                    model_idx: oi,
                    params,
                });
            }
        }

        Ok(SearchSpace {
            methods: raw.methods,
            models,
            arms,
        })
    }

    pub fn methods(&self) -> &[String] {
        &self.methods
    }

    pub fn models(&self, method_idx: usize) -> &[String] {
        &self.models[method_idx]
    }

    pub fn arms(&self) -> &[Arm] {
        &self.arms
    }

    /// Flat arm index for a (method, model) pair.
    pub fn arm_index(&self, method_idx: usize, model_idx: usize) -> usize {
        self.models[..method_idx]
            .iter()
            .map(Vec::len)
            .sum::<usize>()
            + model_idx
    }

    pub fn method_index(&self, id: &str) -> Option<usize> {
        self.methods.iter().position(|m| m == id)
    }

    /// Resolve a configuration to (method_idx, model_idx), checking that the
    /// assignment is complete and every value lies in its spec's domain.
    pub fn resolve(&self, config: &Configuration) -> Result<(usize, usize)> {
        let mi = self
            .method_index(&config.method)
            .ok_or_else(|| Error::Invalid(format!("unknown method `{}`", config.method)))?;
        let oi = self.models[mi]
            .iter()
            .position(|m| *m == config.model)
            .ok_or_else(|| Error::Invalid(format!("unknown model `{}`", config.model)))?;
        let arm = &self.arms[self.arm_index(mi, oi)];
        if config.params.len() != arm.params.len() {
            return Err(Error::Invalid(format!(
                "configuration assigns {} params, arm has {}",
                config.params.len(),
                arm.params.len()
            )));
        }
        for spec in &arm.params {
            let value = config
                .params
                .get(&spec.name)
                .ok_or_else(|| Error::Invalid(format!("missing param `{}`", spec.name)))?;
            match (&spec.domain, value) {
                (ParamDomain::Categorical { values }, ParamValue::Categorical(v)) => {
                    if !values.contains(v) {
                        return Err(Error::Invalid(format!(
                            "param `{}`: value `{v}` not in domain",
                            spec.name
                        )));
                    }
                }
                (ParamDomain::Continuous { lo, hi, .. }, ParamValue::Continuous(v)) => {
                    if !(v.is_finite() && *lo <= *v && *v <= *hi) {
                        return Err(Error::Invalid(format!(
                            "param `{}`: value {v} outside [{lo}, {hi}]",
                            spec.name
                        )));
                    }
                }
                _ => {
                    return Err(Error::Invalid(format!(
                        "param `{}`: value kind does not match spec",
                        spec.name
                    )))
                }
            }
        }
        Ok((mi, oi))
    }

    /// Uniform initial sampler state: uniform categorical vectors, continuous
    /// nodes at the transformed midpoint with stddev = range width / 4.
    pub fn init_uniform(&self) -> SamplerState {
        let uniform = |n: usize| vec![1.0 / n as f64; n];
        SamplerState {
            method_probs: uniform(self.methods.len()),
            model_probs: self.models.iter().map(|m| uniform(m.len())).collect(),
            arm_params: self
                .arms
                .iter()
                .map(|arm| {
                    arm.params
                        .iter()
                        .map(|spec| match &spec.domain {
                            ParamDomain::Categorical { values } => ParamState::Categorical {
                                probs: uniform(values.len()),
                            },
                            ParamDomain::Continuous { .. } => {
                                let (lo, hi) = spec.transformed_bounds().unwrap();
                                ParamState::Continuous {
                                    mean: (lo + hi) / 2.0,
                                    stddev: (hi - lo) / INIT_STD_DIV,
                                }
                            }
                        })
                        .collect()
                })
                .collect(),
        }
    }

    /// Empirical distribution induced by `config`: one-hot categorical vectors
    /// along the chosen path, observed mean with stddev = range/8 on the
    /// chosen arm's continuous nodes, uniform-init everywhere else.
    pub fn empirical(&self, config: &Configuration) -> Result<InducedDistribution> {
        let (mi, oi) = self.resolve(config)?;
        let mut state = self.init_uniform();

        let one_hot = |n: usize, at: usize| {
            let mut v = vec![0.0; n];
            v[at] = 1.0;
            v
        };
        state.method_probs = one_hot(self.methods.len(), mi);
        state.model_probs[mi] = one_hot(self.models[mi].len(), oi);

        let ai = self.arm_index(mi, oi);
        let arm = &self.arms[ai];
        for (slot, spec) in state.arm_params[ai].iter_mut().zip(&arm.params) {
            let value = &config.params[&spec.name];
            match (&spec.domain, value) {
                (ParamDomain::Categorical { values }, ParamValue::Categorical(v)) => {
                    let at = values.iter().position(|x| x == v).unwrap();
                    *slot = ParamState::Categorical {
                        probs: one_hot(values.len(), at),
                    };
                }
                (ParamDomain::Continuous { .. }, ParamValue::Continuous(v)) => {
                    let (lo, hi) = spec.transformed_bounds().unwrap();
                    *slot = ParamState::Continuous {
                        mean: spec.transform(*v),
                        stddev: (hi - lo) / EMPIRICAL_STD_DIV,
                    };
                }
                _ => unreachable!("resolve() checked value kinds"),
            }
        }
        Ok(InducedDistribution {
            state,
            method_idx: mi,
            model_idx: oi,
        })
    }
}

// ---------------------------------------------------------------------------
// Categorical renormalization
// ---------------------------------------------------------------------------

/// Clamp entries to the `EPS_PROB` floor and renormalize to sum 1.
///
/// Entries that would fall below the floor are pinned at it and the remaining
/// mass is redistributed proportionally over the free entries; this keeps
/// every entry >= EPS_PROB, which a single clamp-then-divide pass would not.
pub(crate) fn clamp_normalize(v: &mut [f64]) {
    let n = v.len();
    if n == 1 {
        v[0] = 1.0;
        return;
    }
    let mut pinned = vec![false; n];
    loop {
        for (i, p) in pinned.iter_mut().enumerate() {
            if v[i] <= EPS_PROB {
                *p = true;
            }
        }
        let pinned_count = pinned.iter().filter(|&&p| p).count();
        if pinned_count == n {
            let u = 1.0 / n as f64;
            v.fill(u);
            return;
        }
        let free_sum: f64 = (0..n).filter(|&i| !pinned[i]).map(|i| v[i]).sum();
        let scale = (1.0 - EPS_PROB * pinned_count as f64) / free_sum;
        let mut changed = false;
        for (i, &p) in pinned.iter().enumerate() {
            if !p && v[i] * scale < EPS_PROB {
                // pinning happens at the top of the next pass
                v[i] = 0.0;
                changed = true;
            }
        }
        if !changed {
            for (i, &p) in pinned.iter().enumerate() {
                v[i] = if p { EPS_PROB } else { v[i] * scale };
            }
            break;
        }
    }
    // Park fp residue on the largest entry so the sum is exactly 1.
    let residue = v.iter().sum::<f64>() - 1.0;
    if residue != 0.0 {
        let imax = (0..v.len())
            .max_by(|&a, &b| v[a].partial_cmp(&v[b]).unwrap())
            .unwrap();
        v[imax] -= residue;
    }
}

// ---------------------------------------------------------------------------
// Sampler state operations
// ---------------------------------------------------------------------------

impl SamplerState {
    /// Check that this state's shape matches `space`.
    pub fn check_space(&self, space: &SearchSpace) -> Result<()> {
        let ok = self.method_probs.len() == space.methods.len()
            && self.model_probs.len() == space.models.len()
            && self
                .model_probs
                .iter()
                .zip(&space.models)
                .all(|(p, m)| p.len() == m.len())
            && self.arm_params.len() == space.arms.len()
            && self.arm_params.iter().zip(&space.arms).all(|(ps, arm)| {
                ps.len() == arm.params.len()
                    && ps.iter().zip(&arm.params).all(|(st, spec)| {
                        matches!(
                            (st, &spec.domain),
                            (
                                ParamState::Categorical { .. },
                                ParamDomain::Categorical { .. }
                            ) | (
                                ParamState::Continuous { .. },
                                ParamDomain::Continuous { .. }
                            )
                        )
                    })
            });
        if ok {
            Ok(())
        } else {
            Err(Error::SpaceMismatch(
                "sampler state shape does not match the search space".into(),
            ))
        }
    }

    /// The sampling distribution over fine-tuning methods.
    pub fn method_marginal(&self) -> Vec<f64> {
        self.method_probs.clone()
    }

    /// Every categorical vector in the state, for invariant checks.
    pub fn categorical_vectors(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = vec![&self.method_probs];
        out.extend(self.model_probs.iter().map(Vec::as_slice));
        for arm in &self.arm_params {
            for p in arm {
                if let ParamState::Categorical { probs } = p {
                    out.push(probs);
                }
            }
        }
        out
    }

    /// Pull update (positive experience): convex mixture toward the induced
    /// distribution with rate `alpha`, applied on the induced path only.
    pub fn pulled(
        &self,
        space: &SearchSpace,
        induced: &InducedDistribution,
        alpha: f64,
    ) -> Result<SamplerState> {
        self.update(space, induced, alpha, UpdateKind::Pull)
    }

    /// Push update (negative experience): affine move away from the induced
    /// distribution with rate magnitude `alpha`, applied on the path only.
    pub fn pushed_away(
        &self,
        space: &SearchSpace,
        induced: &InducedDistribution,
        alpha: f64,
    ) -> Result<SamplerState> {
        self.update(space, induced, alpha, UpdateKind::Push)
    }

    fn update(
        &self,
        space: &SearchSpace,
        induced: &InducedDistribution,
        alpha: f64,
        kind: UpdateKind,
    ) -> Result<SamplerState> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::Invalid(format!("alpha {alpha} outside [0, 1]")));
        }
        self.check_space(space)?;
        induced.state.check_space(space)?;

        let mix_cat = |p: &[f64], q: &[f64]| -> Vec<f64> {
            let mut out: Vec<f64> = p
                .iter()
                .zip(q)
                .map(|(&a, &b)| match kind {
                    UpdateKind::Pull => (1.0 - alpha) * a + alpha * b,
                    UpdateKind::Push => (1.0 + alpha) * a - alpha * b,
                })
                .collect();
            clamp_normalize(&mut out);
            out
        };

        let mut next = self.clone();
        next.method_probs = mix_cat(&self.method_probs, &induced.state.method_probs);

        let mi = induced.method_idx;
        next.model_probs[mi] = mix_cat(&self.model_probs[mi], &induced.state.model_probs[mi]);

        let ai = space.arm_index(mi, induced.model_idx);
        let arm = &space.arms[ai];
        for ((slot, from), spec) in next.arm_params[ai]
            .iter_mut()
            .zip(&induced.state.arm_params[ai])
            .zip(&arm.params)
        {
            match (&mut *slot, from) {
                (ParamState::Categorical { probs }, ParamState::Categorical { probs: q }) => {
                    *probs = mix_cat(probs, q);
                }
                (
                    ParamState::Continuous { mean, stddev },
                    ParamState::Continuous {
                        mean: m_i,
                        stddev: s_i,
                    },
                ) => {
                    let (lo, hi) = spec.transformed_bounds().unwrap();
                    match kind {
                        UpdateKind::Pull => {
                            *mean = (1.0 - alpha) * *mean + alpha * m_i;
                            *stddev = (1.0 - alpha) * *stddev + alpha * s_i;
                        }
                        UpdateKind::Push => {
                            *mean = ((1.0 + alpha) * *mean - alpha * m_i).clamp(lo, hi);
                            let floor = (hi - lo) / STD_MIN_DIV;
                            *stddev = ((1.0 + alpha) * *stddev - alpha * s_i).max(floor);
                        }
                    }
                }
                _ => unreachable!("check_space() verified node kinds"),
            }
        }
        Ok(next)
    }

    /// Draw one configuration. Draw order is method, model, then the chosen
    /// arm's parameters in spec order, so traces are reproducible per seed.
    pub fn sample<R: Rng>(&self, space: &SearchSpace, rng: &mut R) -> Result<Configuration> {
        self.check_space(space)?;
        let mi = sample_categorical(&self.method_probs, rng);
        let oi = sample_categorical(&self.model_probs[mi], rng);
        let ai = space.arm_index(mi, oi);
        let arm = &space.arms[ai];

        let mut params = BTreeMap::new();
        for (state, spec) in self.arm_params[ai].iter().zip(&arm.params) {
            let value = match (state, &spec.domain) {
                (ParamState::Categorical { probs }, ParamDomain::Categorical { values }) => {
                    ParamValue::Categorical(values[sample_categorical(probs, rng)].clone())
                }
                (ParamState::Continuous { mean, stddev }, ParamDomain::Continuous { .. }) => {
                    let (lo, hi) = spec.transformed_bounds().unwrap();
                    let t = sample_truncated_normal(*mean, *stddev, lo, hi, rng);
                    ParamValue::Continuous(spec.untransform(t))
                }
                _ => unreachable!("check_space() verified node kinds"),
            };
            params.insert(spec.name.clone(), value);
        }
        Ok(Configuration {
            method: space.methods[mi].clone(),
            model: space.models[mi][oi].clone(),
            params,
        })
    }
}

#[derive(Clone, Copy)]
enum UpdateKind {
    Pull,
    Push,
}

fn sample_categorical<R: Rng>(probs: &[f64], rng: &mut R) -> usize {
    let r: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if r < acc {
            return i;
        }
    }
    probs.len() - 1
}

/// Truncated normal via rejection; falls back to a clamped draw after 64
/// misses so the function stays total for extreme stddev/range ratios.
fn sample_truncated_normal<R: Rng>(mean: f64, stddev: f64, lo: f64, hi: f64, rng: &mut R) -> f64 {
    for _ in 0..64 {
        let z: f64 = StandardNormal.sample(rng);
        let x = mean + stddev * z;
        if (lo..=hi).contains(&x) {
            return x;
        }
    }
    let z: f64 = StandardNormal.sample(rng);
    (mean + stddev * z).clamp(lo, hi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    pub(crate) const BASIC_SPACE: &str = r#"
methods = ["full", "partial", "lora"]
models = ["bert", "t5"]

[[param]]
name = "lr"
type = "continuous"
lo = 1e-5
hi = 1e-3
scale = "log"
"#;

    fn basic_space() -> SearchSpace {
        SearchSpace::parse(BASIC_SPACE).unwrap()
    }

    fn config(space: &SearchSpace, method: &str, model: &str, lr: f64) -> Configuration {
        let _ = space;
        let mut params = BTreeMap::new();
        params.insert("lr".to_string(), ParamValue::Continuous(lr));
        Configuration {
            method: method.into(),
            model: model.into(),
            params,
        }
    }

    #[test]
    fn parse_basic_space_has_six_arms() {
        let space = basic_space();
        assert_eq!(space.methods().len(), 3);
        assert_eq!(space.arms().len(), 6);
        assert_eq!(space.arms()[0].params.len(), 1);
    }

    #[test]
    fn shipped_space_fixture_parses_to_documented_shape() {
        let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR"))
            .join("fixtures")
            .join("space.toml");
        let space = SearchSpace::parse(&std::fs::read_to_string(path).unwrap()).unwrap();
        assert_eq!(space.methods(), ["full", "partial", "lora"]);
        assert_eq!(space.models(0), ["tiny", "small", "base", "large"]);
        assert_eq!(space.arms().len(), 12);
        for arm in space.arms() {
            let names: Vec<&str> = arm.params.iter().map(|p| p.name.as_str()).collect();
            assert_eq!(names, ["lr", "dropout", "batch_size"]);
        }
        match &space.arms()[0].params[0].domain {
            ParamDomain::Continuous { lo, hi, scale } => {
                assert_eq!((*lo, *hi), (1e-5, 1e-1));
                assert_eq!(*scale, Scale::Log);
            }
            other => panic!("lr must be log-continuous, got {other:?}"),
        }
    }

    #[test]
    fn parse_rejects_empty_methods() {
        let err = SearchSpace::parse("methods = []\nmodels = [\"m\"]\n").unwrap_err();
        assert!(err.to_string().contains("no methods"), "{err}");
    }

    #[test]
    fn parse_rejects_inverted_bounds() {
        let text = r#"
methods = ["a"]
models = ["m"]
[[param]]
name = "x"
type = "continuous"
lo = 2.0
hi = 1.0
"#;
        let err = SearchSpace::parse(text).unwrap_err();
        assert!(matches!(err, Error::Invalid(_)), "{err}");
    }

    #[test]
    fn parse_rejects_duplicate_method() {
        let err = SearchSpace::parse("methods = [\"a\", \"a\"]\nmodels = [\"m\"]\n").unwrap_err();
        assert!(err.to_string().contains("duplicate method"), "{err}");
    }

    #[test]
    fn parse_syntax_error_reports_line() {
        let err = SearchSpace::parse("methods = [\n\"a\",\n!!!\n").unwrap_err();
        // toml's diagnostic carries the offending line number
        assert!(err.to_string().contains('3'), "{err}");
    }

    #[test]
    fn per_method_models_table() {
        let text = r#"
methods = ["full", "lora"]
[models]
full = ["bert"]
lora = ["bert", "gpt2"]
"#;
        let space = SearchSpace::parse(text).unwrap();
        assert_eq!(space.models(0), ["bert"]);
        assert_eq!(space.models(1), ["bert", "gpt2"]);
        assert_eq!(space.arms().len(), 3);
        assert_eq!(space.arm_index(1, 1), 2);
    }

    #[test]
    fn init_uniform_matches_stated_rule() {
        let space = basic_space();
        let state = space.init_uniform();
        for p in state.method_marginal() {
            assert!((p - 1.0 / 3.0).abs() < 1e-15);
        }
        match &state.arm_params[0][0] {
            ParamState::Continuous { mean, stddev } => {
                assert!((mean - (-4.0)).abs() < 1e-12, "log10 midpoint");
                assert!((stddev - 0.5).abs() < 1e-12, "log10 span / 4");
            }
            other => panic!("expected continuous node, got {other:?}"),
        }
    }

    #[test]
    fn init_uniform_single_method() {
        let space = SearchSpace::parse("methods = [\"only\"]\nmodels = [\"m\"]\n").unwrap();
        assert_eq!(space.init_uniform().method_marginal(), vec![1.0]);
    }

    #[test]
    fn empirical_is_one_hot_with_transformed_mean() {
        let space = basic_space();
        let induced = space
            .empirical(&config(&space, "lora", "bert", 1e-4))
            .unwrap();
        assert_eq!(induced.state().method_probs, vec![0.0, 0.0, 1.0]);
        let ai = space.arm_index(2, 0);
        match &induced.state().arm_params[ai][0] {
            ParamState::Continuous { mean, stddev } => {
                assert!((mean - (-4.0)).abs() < 1e-12);
                assert!((stddev - 2.0 / 8.0).abs() < 1e-12);
            }
            other => panic!("unexpected {other:?}"),
        }
        // off-path arm untouched from init
        let off = space.arm_index(0, 0);
        assert_eq!(
            induced.state().arm_params[off],
            space.init_uniform().arm_params[off]
        );
    }

    #[test]
    fn empirical_rejects_unknown_model() {
        let space = basic_space();
        let err = space
            .empirical(&config(&space, "lora", "nope", 1e-4))
            .unwrap_err();
        assert!(err.to_string().contains("unknown model"), "{err}");
    }

    #[test]
    fn pull_is_convex_mixture() {
        let space =
            SearchSpace::parse("methods = [\"a\",\"b\",\"c\",\"d\"]\nmodels = [\"m\"]\n").unwrap();
        let state = space.init_uniform();
        let cfg = Configuration {
            method: "a".into(),
            model: "m".into(),
            params: BTreeMap::new(),
        };
        let induced = space.empirical(&cfg).unwrap();
        let pulled = state.pulled(&space, &induced, 0.2).unwrap();
        let expect = [0.40, 0.20, 0.20, 0.20];
        for (got, want) in pulled.method_marginal().iter().zip(expect) {
            assert!((got - want).abs() < 1e-12, "{got} vs {want}");
        }
    }

    #[test]
    fn zero_alpha_updates_are_identities() {
        let space = basic_space();
        let state = space.init_uniform();
        let induced = space
            .empirical(&config(&space, "full", "t5", 3e-4))
            .unwrap();
        assert_eq!(state.pulled(&space, &induced, 0.0).unwrap(), state);
        assert_eq!(state.pushed_away(&space, &induced, 0.0).unwrap(), state);
    }

    #[test]
    fn full_alpha_pull_replaces_with_induced() {
        let space = basic_space();
        let state = space.init_uniform();
        let induced = space
            .empirical(&config(&space, "partial", "bert", 1e-4))
            .unwrap();
        let out = state.pulled(&space, &induced, 1.0).unwrap();
        let marginal = out.method_marginal();
        assert!(marginal[1] > 1.0 - 3.0 * EPS_PROB);
        assert!(marginal[0] >= EPS_PROB && marginal[2] >= EPS_PROB);
        assert!((marginal.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn push_matches_affine_arithmetic() {
        let space =
            SearchSpace::parse("methods = [\"a\",\"b\",\"c\",\"d\"]\nmodels = [\"m\"]\n").unwrap();
        let state = space.init_uniform();
        let cfg = Configuration {
            method: "a".into(),
            model: "m".into(),
            params: BTreeMap::new(),
        };
        let induced = space.empirical(&cfg).unwrap();
        let pushed = state.pushed_away(&space, &induced, 0.2).unwrap();
        let expect = [0.10, 0.30, 0.30, 0.30];
        for (got, want) in pushed.method_marginal().iter().zip(expect) {
            assert!((got - want).abs() < 1e-12, "{got} vs {want}");
        }
    }

    #[test]
    fn push_clamps_negative_mass_to_floor() {
        // P = [0.05, 0.95], one-hot induced at index 0, alpha = 0.2:
        // raw = [-0.14, 1.14] -> floor at EPS_PROB, rest renormalized.
        let mut v = vec![-0.14, 1.14];
        clamp_normalize(&mut v);
        assert_eq!(v[0], EPS_PROB);
        assert!((v[1] - (1.0 - EPS_PROB)).abs() < 1e-15);
        assert!((v.iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn pull_then_push_is_not_an_inverse() {
        let space =
            SearchSpace::parse("methods = [\"a\",\"b\",\"c\",\"d\"]\nmodels = [\"m\"]\n").unwrap();
        let state = space.init_uniform();
        let cfg = Configuration {
            method: "a".into(),
            model: "m".into(),
            params: BTreeMap::new(),
        };
        let induced = space.empirical(&cfg).unwrap();
        let round = state
            .pulled(&space, &induced, 0.2)
            .unwrap()
            .pushed_away(&space, &induced, 0.2)
            .unwrap();
        assert_ne!(round.method_marginal(), state.method_marginal());
        let sum: f64 = round.method_marginal().iter().sum();
        assert!((sum - 1.0).abs() < 1e-9);
    }

    #[test]
    fn sample_is_deterministic_per_seed() {
        let space = basic_space();
        let state = space.init_uniform();
        let mut a = ChaCha8Rng::seed_from_u64(42);
        let mut b = ChaCha8Rng::seed_from_u64(42);
        let ca = state.sample(&space, &mut a).unwrap();
        let cb = state.sample(&space, &mut b).unwrap();
        assert_eq!(ca, cb);
    }

    #[test]
    fn sample_respects_near_degenerate_vector() {
        let space =
            SearchSpace::parse("methods = [\"a\",\"b\",\"c\",\"d\"]\nmodels = [\"m\"]\n").unwrap();
        let cfg = Configuration {
            method: "a".into(),
            model: "m".into(),
            params: BTreeMap::new(),
        };
        let induced = space.empirical(&cfg).unwrap();
        let state = space.init_uniform().pulled(&space, &induced, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            assert_eq!(state.sample(&space, &mut rng).unwrap().method, "a");
        }
    }

    #[test]
    fn sample_frequencies_match_half_half() {
        let space = SearchSpace::parse("methods = [\"a\", \"b\"]\nmodels = [\"m\"]\n").unwrap();
        let state = space.init_uniform();
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let n = 100_000;
        let hits = (0..n)
            .filter(|_| state.sample(&space, &mut rng).unwrap().method == "a")
            .count();
        let freq = hits as f64 / n as f64;
        assert!((freq - 0.5).abs() < 0.01, "freq {freq}");
    }

    #[test]
    fn sample_tracks_method_marginal_within_three_sigma() {
        let space = basic_space();
        // bias the state away from uniform first
        let mut state = space.init_uniform();
        let mut seed_rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..6 {
            let cfg = state.sample(&space, &mut seed_rng).unwrap();
            let induced = space.empirical(&cfg).unwrap();
            state = state.pulled(&space, &induced, 0.3).unwrap();
        }
        let marginal = state.method_marginal();
        let n = 100_000usize;
        let mut counts = vec![0usize; marginal.len()];
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..n {
            let cfg = state.sample(&space, &mut rng).unwrap();
            counts[space.method_index(&cfg.method).unwrap()] += 1;
        }
        for (i, &p) in marginal.iter().enumerate() {
            let freq = counts[i] as f64 / n as f64;
            let sigma = (p * (1.0 - p) / n as f64).sqrt();
            assert!(
                (freq - p).abs() <= 3.0 * sigma.max(1e-6),
                "method {i}: freq {freq} vs p {p} (3 sigma = {})",
                3.0 * sigma
            );
        }
    }

    #[test]
    fn sampled_configs_resolve_in_space() {
        let space = basic_space();
        let state = space.init_uniform();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..500 {
            let cfg = state.sample(&space, &mut rng).unwrap();
            space.resolve(&cfg).unwrap();
        }
    }

    #[test]
    fn update_rejects_shape_mismatch() {
        let space = basic_space();
        let other = SearchSpace::parse("methods = [\"x\"]\nmodels = [\"m\"]\n").unwrap();
        let state = other.init_uniform();
        let induced = space
            .empirical(&config(&space, "full", "bert", 1e-4))
            .unwrap();
        assert!(matches!(
            state.pulled(&space, &induced, 0.1),
            Err(Error::SpaceMismatch(_))
        ));
    }
}
