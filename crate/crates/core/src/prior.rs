//! Experience-aware warm starting of the sampler.
//!
//! Given a store of past evaluations and the meta-features of the task at
//! hand, this module standardizes feature vectors, turns task distances into
//! an exponential decay kernel with an auto-scaled beta, scores positive
//! experiences with one of several utility schemes, and applies pull/push
//! sweeps to the sampler state. It also houses the naive k-nearest-neighbour
//! baseline and the total-variation stratification of candidate priors.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::meta::{self, DistanceMetric, MetaFeatureVector, RawScaler};
use crate::space::{SamplerState, SearchSpace};
use crate::store::{label, Direction, Experience, FitnessVector, Label, SystemProfile};

/// Epsilon in the beta denominator.
pub const BETA_EPS: f64 = 1e-8;
/// Cap applied when the distance spread is (near) zero.
pub const BETA_MAX: f64 = 1e6;

/// How positive experiences are scored relative to each other.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UtilityScheme {
    WeightedSum,
    LinearFront,
    LogFront,
    /// Constant utility 1 for every positive; the setting that collapses the
    /// framework onto the plain nearest-neighbour rule.
    Uniform,
}

/// Which denominator the auto-scaled beta uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BetaVariant {
    StdOnly,
    StdPlusMean,
}

/// Maximum learning rates, fixed or derived from experience counts.
/// Magnitudes only; push updates run on absolute values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum RateScheme {
    Fixed {
        alpha_pos_max: f64,
        alpha_neg_max: f64,
    },
    Adaptive,
}

/// Feature space used for retrieval distances.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistanceSpace {
    /// Task meta-features only (the default).
    TaskFeatures,
    /// Positives measured on [features | system | metrics] against a query
    /// holding the best observed metric values; negatives on
    /// [features | system]. This is the space the kNN baseline queries.
    FeaturesSystemMetrics,
}

/// Full parameterization of a warm-start prior.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorParams {
    pub distance_metric: DistanceMetric,
    #[serde(default = "default_distance_space")]
    pub distance_space: DistanceSpace,
    pub utility_scheme: UtilityScheme,
    pub beta_scale: f64,
    pub beta_variant: BetaVariant,
    /// Pull limit; `"all"` (or omitted) uses every positive.
    #[serde(default, with = "k_limit")]
    pub k_pos: Option<usize>,
    /// Push limit; `"all"` (or omitted) uses every negative.
    #[serde(default, with = "k_limit")]
    pub k_neg: Option<usize>,
    pub rate_scheme: RateScheme,
    /// Weighted-sum metric weights. Empty means every metric weighs 1.
    #[serde(default)]
    pub metric_weights: BTreeMap<String, f64>,
}

fn default_distance_space() -> DistanceSpace {
    DistanceSpace::TaskFeatures
}

/// Pull/push limits appear as an integer or the word "all" in documents.
mod k_limit {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &Option<usize>, s: S) -> Result<S::Ok, S::Error> {
        match v {
            Some(n) => s.serialize_u64(*n as u64),
            None => s.serialize_str("all"),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<usize>, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Count(usize),
            Word(String),
        }
        match Repr::deserialize(d)? {
            Repr::Count(n) => Ok(Some(n)),
            Repr::Word(w) if w == "all" => Ok(None),
            Repr::Word(w) => Err(serde::de::Error::custom(format!(
                "k limit must be an integer or \"all\", got `{w}`"
            ))),
        }
    }
}

impl Default for PriorParams {
    fn default() -> Self {
        PriorParams {
            distance_metric: DistanceMetric::Euclidean,
            distance_space: DistanceSpace::TaskFeatures,
            utility_scheme: UtilityScheme::WeightedSum,
            beta_scale: 1.0,
            beta_variant: BetaVariant::StdPlusMean,
            rate_scheme: RateScheme::Fixed {
                alpha_pos_max: 0.05,
                alpha_neg_max: 0.02,
            },
            k_pos: None,
            k_neg: None,
            metric_weights: BTreeMap::new(),
        }
    }
}

impl PriorParams {
    /// Parse from a TOML document.
    pub fn parse(text: &str) -> Result<PriorParams> {
        let params: PriorParams = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        params.validate()?;
        Ok(params)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Serde(e.to_string()))
    }

    /// beta_scale 0 is allowed and disables the decay kernel entirely.
    pub fn validate(&self) -> Result<()> {
        if !(self.beta_scale >= 0.0 && self.beta_scale.is_finite()) {
            return Err(Error::Invalid(format!(
                "beta_scale must be finite and >= 0, got {}",
                self.beta_scale
            )));
        }
        if let RateScheme::Fixed {
            alpha_pos_max,
            alpha_neg_max,
        } = self.rate_scheme
        {
            for (name, a) in [
                ("alpha_pos_max", alpha_pos_max),
                ("alpha_neg_max", alpha_neg_max),
            ] {
                if !(0.0..=1.0).contains(&a) {
                    return Err(Error::Invalid(format!("{name} {a} outside [0, 1]")));
                }
            }
        }
        if self
            .metric_weights
            .values()
            .any(|w| *w < 0.0 || !w.is_finite())
        {
            return Err(Error::Invalid(
                "metric weights must be finite and >= 0".into(),
            ));
        }
        Ok(())
    }
}

/// Per-experience quantities that went into a warmed state.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PriorReportEntry {
    pub experience_id: u64,
    pub task_id: String,
    pub positive: bool,
    pub distance: f64,
    /// Utility score; absent for negatives.
    pub utility: Option<f64>,
    pub alpha: f64,
}

/// Report of a warm-start application, in sweep order.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct PriorReport {
    pub entries: Vec<PriorReportEntry>,
}

// ---------------------------------------------------------------------------
// Beta scale
// ---------------------------------------------------------------------------

/// Auto-scaled decay factor from the spread of distances: beta_scale over
/// (sigma + eps) or (sigma + mean + eps), capped at [`BETA_MAX`].
pub fn compute_beta(distances: &[f64], beta_scale: f64, variant: BetaVariant) -> Result<f64> {
    if distances.is_empty() {
        return Err(Error::Invalid(
            "compute_beta needs at least one distance".into(),
        ));
    }
    if distances.iter().any(|d| *d < 0.0 || !d.is_finite()) {
        return Err(Error::Invalid("distances must be finite and >= 0".into()));
    }
    let n = distances.len() as f64;
    let mean = distances.iter().sum::<f64>() / n;
    let std = (distances.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / n).sqrt();
    let denom = match variant {
        BetaVariant::StdOnly => std + BETA_EPS,
        BetaVariant::StdPlusMean => std + mean + BETA_EPS,
    };
    Ok((beta_scale / denom).min(BETA_MAX))
}

// ---------------------------------------------------------------------------
// Utility schemes
// ---------------------------------------------------------------------------

fn metric_schema(f: &FitnessVector) -> Vec<(&str, Direction)> {
    f.metrics()
        .iter()
        .map(|m| (m.name.as_str(), m.direction))
        .collect()
}

fn check_consistent_metrics(fitness: &[&FitnessVector]) -> Result<()> {
    if let Some((first, rest)) = fitness.split_first() {
        let schema = metric_schema(first);
        for f in rest {
            if metric_schema(f) != schema {
                return Err(Error::Invalid(
                    "positives disagree on metric names or directions".into(),
                ));
            }
        }
    }
    Ok(())
}

/// Weighted-sum utility: per-metric min-max normalization (flipped for
/// minimized metrics), then a weight-normalized sum. Metrics constant across
/// the positives contribute a neutral 0.5.
pub fn utility_weighted_sum(
    positives: &[&FitnessVector],
    weights: &BTreeMap<String, f64>,
) -> Result<Vec<f64>> {
    if positives.is_empty() {
        return Err(Error::Invalid(
            "weighted-sum utility needs positives".into(),
        ));
    }
    check_consistent_metrics(positives)?;
    let template = positives[0];
    let weight_of = |name: &str| -> f64 {
        if weights.is_empty() {
            1.0
        } else {
            weights.get(name).copied().unwrap_or(0.0)
        }
    };
    let total_weight: f64 = template.metrics().iter().map(|m| weight_of(&m.name)).sum();
    if total_weight <= 0.0 {
        return Err(Error::Invalid("weighted-sum weights sum to zero".into()));
    }

    let mut utilities = vec![0.0; positives.len()];
    for metric in template.metrics() {
        let w = weight_of(&metric.name);
        if w == 0.0 {
            continue;
        }
        let values: Vec<f64> = positives
            .iter()
            .map(|f| f.get(&metric.name).expect("consistent metrics"))
            .collect();
        let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        for (u, v) in utilities.iter_mut().zip(&values) {
            let normalized = if hi == lo {
                0.5
            } else {
                let scaled = (v - lo) / (hi - lo);
                match metric.direction {
                    Direction::Maximize => scaled,
                    Direction::Minimize => 1.0 - scaled,
                }
            };
            *u += w * normalized;
        }
    }
    for u in &mut utilities {
        *u /= total_weight;
    }
    Ok(utilities)
}

/// Direction-adjusted value: larger is always better.
fn signed(value: f64, direction: Direction) -> f64 {
    match direction {
        Direction::Maximize => value,
        Direction::Minimize => -value,
    }
}

fn dominates(a: &FitnessVector, b: &FitnessVector) -> bool {
    let mut strictly_better = false;
    for m in a.metrics() {
        let av = signed(m.value, m.direction);
        let bv = signed(b.get(&m.name).expect("consistent metrics"), m.direction);
        if av < bv {
            return false;
        }
        if av > bv {
            strictly_better = true;
        }
    }
    strictly_better
}

/// Fast non-dominated sorting: returns the front index of every point and
/// the number of fronts. Front 0 is the non-dominated set.
pub fn non_dominated_sort(points: &[&FitnessVector]) -> Result<(Vec<usize>, usize)> {
    if points.is_empty() {
        return Err(Error::Invalid(
            "non-dominated sort needs at least one point".into(),
        ));
    }
    check_consistent_metrics(points)?;
    let n = points.len();
    let mut dominated_by: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut domination_count = vec![0usize; n];
    for i in 0..n {
        for j in (i + 1)..n {
            if dominates(points[i], points[j]) {
                dominated_by[i].push(j);
                domination_count[j] += 1;
            } else if dominates(points[j], points[i]) {
                dominated_by[j].push(i);
                domination_count[i] += 1;
            }
        }
    }
    let mut front = vec![0usize; n];
    let mut current: Vec<usize> = (0..n).filter(|&i| domination_count[i] == 0).collect();
    let mut level = 0;
    while !current.is_empty() {
        let mut next = Vec::new();
        for &p in &current {
            front[p] = level;
            for &q in &dominated_by[p] {
                domination_count[q] -= 1;
                if domination_count[q] == 0 {
                    next.push(q);
                }
            }
        }
        current = next;
        level += 1;
    }
    Ok((front, level))
}

/// Front-rank utilities: linear u = (N - f) / N, logarithmic
/// u = ln(N - f + 1) / ln(N + 1).
pub fn utility_front(positives: &[&FitnessVector], logarithmic: bool) -> Result<Vec<f64>> {
    let (fronts, n_fronts) = non_dominated_sort(positives)?;
    let n = n_fronts as f64;
    Ok(fronts
        .iter()
        .map(|&f| {
            if logarithmic {
                ((n - f as f64 + 1.0).ln()) / ((n + 1.0).ln())
            } else {
                (n - f as f64) / n
            }
        })
        .collect())
}

// ---------------------------------------------------------------------------
// Learning rates
// ---------------------------------------------------------------------------

/// Per-experience learning rates: alpha+ = alpha_max+ * u * exp(-beta d),
/// alpha- = |alpha_max-| * exp(-beta d). Adaptive maxima are 1/N over the
/// experiences the rates are computed for.
pub fn learning_rates(
    pos_distances: &[f64],
    pos_utilities: &[f64],
    neg_distances: &[f64],
    scheme: &RateScheme,
    beta: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if pos_utilities.len() != pos_distances.len() {
        return Err(Error::Invalid(format!(
            "{} positives but {} utilities",
            pos_distances.len(),
            pos_utilities.len()
        )));
    }
    let (alpha_pos_max, alpha_neg_max) = match scheme {
        RateScheme::Fixed {
            alpha_pos_max,
            alpha_neg_max,
        } => (*alpha_pos_max, *alpha_neg_max),
        RateScheme::Adaptive => (
            if pos_distances.is_empty() {
                0.0
            } else {
                1.0 / pos_distances.len() as f64
            },
            if neg_distances.is_empty() {
                0.0
            } else {
                1.0 / neg_distances.len() as f64
            },
        ),
    };
    let pos = pos_distances
        .iter()
        .zip(pos_utilities)
        .map(|(d, u)| alpha_pos_max * u * (-beta * d).exp())
        .collect();
    let neg = neg_distances
        .iter()
        .map(|d| alpha_neg_max * (-beta * d).exp())
        .collect();
    Ok((pos, neg))
}

// ---------------------------------------------------------------------------
// Prior construction
// ---------------------------------------------------------------------------

struct Retrieved<'a> {
    positives: Vec<&'a Experience>,
    negatives: Vec<&'a Experience>,
}

fn split_by_label(experiences: &[Experience]) -> Retrieved<'_> {
    let mut positives = Vec::new();
    let mut negatives = Vec::new();
    for e in experiences {
        match label(e) {
            Label::Positive => positives.push(e),
            Label::Negative => negatives.push(e),
        }
    }
    Retrieved {
        positives,
        negatives,
    }
}

/// Best observed value per metric (direction-aware) across positives,
/// in the metric order of the first positive.
fn best_metrics(positives: &[&Experience]) -> Result<FitnessVector> {
    let fitness: Vec<&FitnessVector> = positives
        .iter()
        .map(|e| match &e.outcome {
            crate::store::Outcome::Success(m) => Ok(m),
            _ => Err(Error::Invalid("negative experience has no metrics".into())),
        })
        .collect::<Result<_>>()?;
    check_consistent_metrics(&fitness)?;
    let template = fitness[0];
    let metrics = template
        .metrics()
        .iter()
        .map(|m| {
            let best = fitness
                .iter()
                .map(|f| f.get(&m.name).expect("consistent metrics"))
                .reduce(|acc, v| {
                    if signed(v, m.direction) > signed(acc, m.direction) {
                        v
                    } else {
                        acc
                    }
                })
                .expect("at least one positive");
            crate::store::Metric {
                name: m.name.clone(),
                value: best,
                direction: m.direction,
            }
        })
        .collect();
    FitnessVector::from_metrics(metrics)
}

/// Standardized distances from a query to each row: scaler fitted on the
/// rows plus the query, as the warm-start pipeline prescribes.
fn standardized_distances(
    query: &[f64],
    rows: &[Vec<f64>],
    metric: DistanceMetric,
) -> Result<Vec<f64>> {
    if query
        .iter()
        .chain(rows.iter().flatten())
        .any(|v| !v.is_finite())
    {
        return Err(Error::Invalid(
            "feature vectors must be finite to take distances".into(),
        ));
    }
    let mut fit_set: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
    fit_set.push(query);
    let scaler = RawScaler::fit(&fit_set)?;
    let std_query = scaler.transform(query)?;
    rows.iter()
        .map(|r| meta::distance(&std_query, &scaler.transform(r)?, metric))
        .collect()
}

fn feature_row(e: &Experience) -> Vec<f64> {
    e.task_features.values.clone()
}

fn feature_system_row(e: &Experience) -> Vec<f64> {
    let mut row = e.task_features.values.clone();
    row.extend(e.system.as_features());
    row
}

fn feature_system_metric_row(e: &Experience) -> Result<Vec<f64>> {
    let mut row = feature_system_row(e);
    match &e.outcome {
        crate::store::Outcome::Success(m) => {
            row.extend(m.metrics().iter().map(|mm| mm.value));
            Ok(row)
        }
        _ => Err(Error::Invalid(
            "metric row requested for a negative experience".into(),
        )),
    }
}

/// Distances of positives and negatives from the current task under the
/// chosen distance space.
fn retrieval_distances(
    retrieved: &Retrieved<'_>,
    current_features: &MetaFeatureVector,
    current_system: &SystemProfile,
    params: &PriorParams,
    knn_best_metrics: Option<&FitnessVector>,
) -> Result<(Vec<f64>, Vec<f64>)> {
    match params.distance_space {
        DistanceSpace::TaskFeatures => {
            // one joint scaler over every experience plus the current task
            let mut all_rows: Vec<Vec<f64>> = Vec::new();
            all_rows.extend(retrieved.positives.iter().map(|e| feature_row(e)));
            all_rows.extend(retrieved.negatives.iter().map(|e| feature_row(e)));
            if all_rows.is_empty() {
                return Ok((Vec::new(), Vec::new()));
            }
            let query = current_features.values.clone();
            let distances = standardized_distances(&query, &all_rows, params.distance_metric)?;
            let (pos, neg) = distances.split_at(retrieved.positives.len());
            Ok((pos.to_vec(), neg.to_vec()))
        }
        DistanceSpace::FeaturesSystemMetrics => {
            let pos = if retrieved.positives.is_empty() {
                Vec::new()
            } else {
                let best = match knn_best_metrics {
                    Some(b) => b.clone(),
                    None => best_metrics(&retrieved.positives)?,
                };
                let rows: Vec<Vec<f64>> = retrieved
                    .positives
                    .iter()
                    .map(|e| feature_system_metric_row(e))
                    .collect::<Result<_>>()?;
                let mut query = current_features.values.clone();
                query.extend(current_system.as_features());
                query.extend(best.metrics().iter().map(|m| m.value));
                standardized_distances(&query, &rows, params.distance_metric)?
            };
            let neg = if retrieved.negatives.is_empty() {
                Vec::new()
            } else {
                let rows: Vec<Vec<f64>> = retrieved
                    .negatives
                    .iter()
                    .map(|e| feature_system_row(e))
                    .collect();
                let mut query = current_features.values.clone();
                query.extend(current_system.as_features());
                standardized_distances(&query, &rows, params.distance_metric)?
            };
            Ok((pos, neg))
        }
    }
}

/// Indices of the k nearest entries, ascending by distance with insertion
/// order breaking ties. `None` keeps everything (still sorted).
fn nearest_k(distances: &[f64], k: Option<usize>) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..distances.len()).collect();
    idx.sort_by(|&a, &b| {
        distances[a]
            .partial_cmp(&distances[b])
            .unwrap()
            .then(a.cmp(&b))
    });
    if let Some(k) = k {
        idx.truncate(k);
    }
    idx
}

/// Build the experience-aware prior: standardize, measure distances, derive
/// beta, keep the nearest k per side, score utilities, then pull and push.
/// Returns the warmed state and a per-experience report in sweep order.
pub fn build_prior(
    space: &SearchSpace,
    state: &SamplerState,
    experiences: &[Experience],
    current_features: &MetaFeatureVector,
    current_system: &SystemProfile,
    params: &PriorParams,
) -> Result<(SamplerState, PriorReport)> {
    params.validate()?;
    if experiences.is_empty() {
        return Ok((state.clone(), PriorReport::default()));
    }
    let retrieved = split_by_label(experiences);
    let (pos_d, neg_d) =
        retrieval_distances(&retrieved, current_features, current_system, params, None)?;

    let all_d: Vec<f64> = pos_d.iter().chain(neg_d.iter()).copied().collect();
    let beta = if all_d.is_empty() {
        0.0
    } else {
        compute_beta(&all_d, params.beta_scale, params.beta_variant)?
    };

    let kept_pos = nearest_k(&pos_d, params.k_pos);
    let kept_neg = nearest_k(&neg_d, params.k_neg);

    let kept_fitness: Vec<&FitnessVector> = kept_pos
        .iter()
        .map(|&i| match &retrieved.positives[i].outcome {
            crate::store::Outcome::Success(m) => m,
            _ => unreachable!("positives carry metrics"),
        })
        .collect();
    let utilities: Vec<f64> = if kept_fitness.is_empty() {
        Vec::new()
    } else {
        match params.utility_scheme {
            UtilityScheme::WeightedSum => {
                utility_weighted_sum(&kept_fitness, &params.metric_weights)?
            }
            UtilityScheme::LinearFront => utility_front(&kept_fitness, false)?,
            UtilityScheme::LogFront => utility_front(&kept_fitness, true)?,
            UtilityScheme::Uniform => vec![1.0; kept_fitness.len()],
        }
    };

    let kept_pos_d: Vec<f64> = kept_pos.iter().map(|&i| pos_d[i]).collect();
    let kept_neg_d: Vec<f64> = kept_neg.iter().map(|&i| neg_d[i]).collect();
    let (alpha_pos, alpha_neg) = learning_rates(
        &kept_pos_d,
        &utilities,
        &kept_neg_d,
        &params.rate_scheme,
        beta,
    )?;

    let mut warmed = state.clone();
    let mut report = PriorReport::default();
    for ((&i, alpha), utility) in kept_pos.iter().zip(&alpha_pos).zip(&utilities) {
        let e = retrieved.positives[i];
        let induced = space.empirical(&e.config)?;
        warmed = warmed.pulled(space, &induced, *alpha)?;
        report.entries.push(PriorReportEntry {
            experience_id: e.id,
            task_id: e.task_id.clone(),
            positive: true,
            distance: pos_d[i],
            utility: Some(*utility),
            alpha: *alpha,
        });
    }
    for (&i, alpha) in kept_neg.iter().zip(&alpha_neg) {
        let e = retrieved.negatives[i];
        let induced = space.empirical(&e.config)?;
        warmed = warmed.pushed_away(space, &induced, *alpha)?;
        report.entries.push(PriorReportEntry {
            experience_id: e.id,
            task_id: e.task_id.clone(),
            positive: false,
            distance: neg_d[i],
            utility: None,
            alpha: *alpha,
        });
    }
    Ok((warmed, report))
}

/// Naive kNN warm start: query [features | system | best metrics] against
/// positives, [features | system] against negatives, pull/push the k nearest
/// of each side with the same fixed rate 1/k.
///
/// Implemented independently of [`build_prior`] so the reduction equivalence
/// between the two stays a meaningful check.
#[allow(clippy::too_many_arguments)]
pub fn knn_prior(
    space: &SearchSpace,
    state: &SamplerState,
    experiences: &[Experience],
    k: usize,
    current_features: &MetaFeatureVector,
    current_system: &SystemProfile,
    metric: DistanceMetric,
    best: Option<&FitnessVector>,
) -> Result<(SamplerState, PriorReport)> {
    if k == 0 {
        return Err(Error::Invalid("kNN prior needs k >= 1".into()));
    }
    let alpha = 1.0 / k as f64;
    let retrieved = split_by_label(experiences);

    let pos_d = if retrieved.positives.is_empty() {
        Vec::new()
    } else {
        let best = match best {
            Some(b) => b.clone(),
            None => best_metrics(&retrieved.positives)?,
        };
        let rows: Vec<Vec<f64>> = retrieved
            .positives
            .iter()
            .map(|e| feature_system_metric_row(e))
            .collect::<Result<_>>()?;
        let mut query = current_features.values.clone();
        query.extend(current_system.as_features());
        query.extend(best.metrics().iter().map(|m| m.value));
        standardized_distances(&query, &rows, metric)?
    };
    let neg_d = if retrieved.negatives.is_empty() {
        Vec::new()
    } else {
        let rows: Vec<Vec<f64>> = retrieved
            .negatives
            .iter()
            .map(|e| feature_system_row(e))
            .collect();
        let mut query = current_features.values.clone();
        query.extend(current_system.as_features());
        standardized_distances(&query, &rows, metric)?
    };

    // top-k per side; fewer available than k just uses all of them
    let kept_pos = nearest_k(&pos_d, Some(k));
    let kept_neg = nearest_k(&neg_d, Some(k));

    let mut warmed = state.clone();
    let mut report = PriorReport::default();
    for &i in &kept_pos {
        let e = retrieved.positives[i];
        warmed = warmed.pulled(space, &space.empirical(&e.config)?, alpha)?;
        report.entries.push(PriorReportEntry {
            experience_id: e.id,
            task_id: e.task_id.clone(),
            positive: true,
            distance: pos_d[i],
            utility: Some(1.0),
            alpha,
        });
    }
    for &i in &kept_neg {
        let e = retrieved.negatives[i];
        warmed = warmed.pushed_away(space, &space.empirical(&e.config)?, alpha)?;
        report.entries.push(PriorReportEntry {
            experience_id: e.id,
            task_id: e.task_id.clone(),
            positive: false,
            distance: neg_d[i],
            utility: None,
            alpha,
        });
    }
    Ok((warmed, report))
}

// ---------------------------------------------------------------------------
// Total variation and prior stratification
// ---------------------------------------------------------------------------

/// Total-variation distance between probability vectors: half the L1 gap.
pub fn tv_distance(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::DimensionMismatch {
            expected: p.len(),
            got: q.len(),
        });
    }
    for v in [p, q] {
        if v.iter().any(|x| *x < -1e-12 || !x.is_finite()) {
            return Err(Error::Invalid("negative or non-finite probability".into()));
        }
        let sum: f64 = v.iter().sum();
        if (sum - 1.0).abs() > 1e-6 {
            return Err(Error::Invalid(format!("probabilities sum to {sum}, not 1")));
        }
    }
    Ok(0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>())
}

/// One bias stratum: member candidate indices in ascending-TV order plus the
/// median-TV and max-TV representatives.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Stratum {
    pub members: Vec<usize>,
    pub median: usize,
    pub max: usize,
}

/// Result of [`stratify_priors`]: per-candidate TV distances to uniform and
/// the low/moderate/high strata.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Stratification {
    pub tvs: Vec<f64>,
    pub strata: [Stratum; 3],
}

/// Sort candidate priors by the TV distance of their induced method marginal
/// from uniform and cut into low/moderate/high bias strata at the two most
/// prominent TV gaps (ratio gaps >= 2 preferred, largest absolute gaps as
/// the fallback; all-equal TVs fall back to equal thirds by rank).
pub fn stratify_priors(marginals: &[Vec<f64>]) -> Result<Stratification> {
    if marginals.len() < 3 {
        return Err(Error::Invalid(format!(
            "stratification needs at least 3 candidates, got {}",
            marginals.len()
        )));
    }
    let n_methods = marginals[0].len();
    let uniform = vec![1.0 / n_methods as f64; n_methods];
    let tvs: Vec<f64> = marginals
        .iter()
        .map(|m| tv_distance(m, &uniform))
        .collect::<Result<_>>()?;

    let mut order: Vec<usize> = (0..tvs.len()).collect();
    order.sort_by(|&a, &b| tvs[a].partial_cmp(&tvs[b]).unwrap().then(a.cmp(&b)));
    let sorted_tvs: Vec<f64> = order.iter().map(|&i| tvs[i]).collect();
    let n = order.len();

    let gaps: Vec<(usize, f64, f64)> = (0..n - 1)
        .map(|j| {
            let abs = sorted_tvs[j + 1] - sorted_tvs[j];
            let ratio = if sorted_tvs[j] > 1e-12 {
                sorted_tvs[j + 1] / sorted_tvs[j]
            } else if sorted_tvs[j + 1] > 1e-12 {
                f64::INFINITY
            } else {
                1.0
            };
            (j, abs, ratio)
        })
        .collect();

    let max_abs_gap = gaps.iter().map(|g| g.1).fold(0.0, f64::max);
    let (cut_a, cut_b) = if max_abs_gap < 1e-15 {
        // all TVs equal: thirds by rank
        (n / 3 - 1, 2 * n / 3 - 1)
    } else {
        let mut prominent: Vec<&(usize, f64, f64)> = gaps.iter().filter(|g| g.2 >= 2.0).collect();
        prominent.sort_by(|a, b| b.2.partial_cmp(&a.2).unwrap().then(a.0.cmp(&b.0)));
        let mut cuts: Vec<usize> = prominent.iter().take(2).map(|g| g.0).collect();
        if cuts.len() < 2 {
            let mut rest: Vec<&(usize, f64, f64)> =
                gaps.iter().filter(|g| !cuts.contains(&g.0)).collect();
            rest.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
            for g in rest {
                if cuts.len() == 2 {
                    break;
                }
                cuts.push(g.0);
            }
        }
        cuts.sort_unstable();
        (cuts[0], cuts[1])
    };

    let ranges = [0..=cut_a, cut_a + 1..=cut_b, cut_b + 1..=n - 1];
    let strata = ranges.map(|r| {
        let members: Vec<usize> = r.map(|j| order[j]).collect();
        let median = members[(members.len() - 1) / 2];
        let max = *members.last().unwrap();
        Stratum {
            members,
            median,
            max,
        }
    });
    Ok(Stratification { tvs, strata })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::meta::Template;
    use crate::space::Configuration;
    use crate::store::{ExperienceDraft, FailureKind, Metric, Outcome};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::collections::BTreeMap;

    fn fitness(pairs: &[(&str, f64, Direction)], et: f64) -> FitnessVector {
        FitnessVector::new(
            pairs
                .iter()
                .map(|(n, v, d)| Metric {
                    name: n.to_string(),
                    value: *v,
                    direction: *d,
                })
                .collect(),
            et,
        )
    }

    #[test]
    fn beta_hand_values() {
        let b = compute_beta(&[1.0, 2.0, 3.0], 1.0, BetaVariant::StdOnly).unwrap();
        assert!((b - 1.2247448).abs() < 1e-4, "{b}");
        let b2 = compute_beta(&[1.0, 2.0, 3.0], 1.0, BetaVariant::StdPlusMean).unwrap();
        assert!((b2 - 0.3550).abs() < 1e-4, "{b2}");
    }

    #[test]
    fn beta_zero_variance_is_capped() {
        let b = compute_beta(&[2.0, 2.0, 2.0], 1.0, BetaVariant::StdOnly).unwrap();
        assert_eq!(b, BETA_MAX);
        assert!(compute_beta(&[], 1.0, BetaVariant::StdOnly).is_err());
    }

    #[test]
    fn weighted_sum_two_objective_example() {
        let f: Vec<FitnessVector> = [(0.2, 10.0), (0.4, 20.0), (0.6, 30.0)]
            .iter()
            .map(|&(f1, et)| fitness(&[("f1", f1, Direction::Maximize)], et))
            .collect();
        let refs: Vec<&FitnessVector> = f.iter().collect();
        let u = utility_weighted_sum(&refs, &BTreeMap::new()).unwrap();
        assert!((u[1] - 0.5).abs() < 1e-12, "middle experience u = {}", u[1]);
        // here every u is 0.5: f1 and et normalizations cancel exactly
        assert!(u.iter().all(|x| (x - 0.5).abs() < 1e-12));
    }

    #[test]
    fn weighted_sum_single_objective_weights() {
        let f: Vec<FitnessVector> = [(0.2, 10.0), (0.4, 20.0), (0.6, 30.0)]
            .iter()
            .map(|&(f1, et)| fitness(&[("f1", f1, Direction::Maximize)], et))
            .collect();
        let refs: Vec<&FitnessVector> = f.iter().collect();
        let mut weights = BTreeMap::new();
        weights.insert("f1".to_string(), 1.0);
        weights.insert(crate::store::EVALUATION_TIME.to_string(), 0.0);
        let u = utility_weighted_sum(&refs, &weights).unwrap();
        for (got, want) in u.iter().zip([0.0, 0.5, 1.0]) {
            assert!((got - want).abs() < 1e-12, "normalized f1 alone: {u:?}");
        }
    }

    #[test]
    fn weighted_sum_constant_metrics_are_neutral() {
        let f: Vec<FitnessVector> = (0..4)
            .map(|_| fitness(&[("f1", 0.7, Direction::Maximize)], 12.0))
            .collect();
        let refs: Vec<&FitnessVector> = f.iter().collect();
        let u = utility_weighted_sum(&refs, &BTreeMap::new()).unwrap();
        assert!(u.iter().all(|&x| x == 0.5));
    }

    #[test]
    fn sort_non_dominated_set_is_single_front() {
        let f: Vec<FitnessVector> = [(0.9, 100.0), (0.8, 50.0), (0.7, 20.0)]
            .iter()
            .map(|&(q, et)| fitness(&[("q", q, Direction::Maximize)], et))
            .collect();
        let refs: Vec<&FitnessVector> = f.iter().collect();
        let (fronts, n) = non_dominated_sort(&refs).unwrap();
        assert_eq!(fronts, vec![0, 0, 0]);
        assert_eq!(n, 1);
    }

    #[test]
    fn sort_strictly_dominated_chain() {
        let f: Vec<FitnessVector> = [(0.9, 10.0), (0.8, 20.0), (0.7, 30.0)]
            .iter()
            .map(|&(q, et)| fitness(&[("q", q, Direction::Maximize)], et))
            .collect();
        let refs: Vec<&FitnessVector> = f.iter().collect();
        let (fronts, n) = non_dominated_sort(&refs).unwrap();
        assert_eq!(fronts, vec![0, 1, 2]);
        assert_eq!(n, 3);
    }

    #[test]
    fn sort_matches_brute_force_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..30 {
            let n = rng.random_range(2..30);
            let f: Vec<FitnessVector> = (0..n)
                .map(|_| {
                    fitness(
                        &[(
                            "q",
                            (rng.random::<f64>() * 10.0).round() / 10.0,
                            Direction::Maximize,
                        )],
                        (rng.random::<f64>() * 10.0).round() / 10.0 + 0.1,
                    )
                })
                .collect();
            let refs: Vec<&FitnessVector> = f.iter().collect();
            let (fronts, n_fronts) = non_dominated_sort(&refs).unwrap();

            // oracle: peel non-dominated sets one at a time, O(n^2 * fronts)
            let mut expected = vec![usize::MAX; refs.len()];
            let mut remaining: Vec<usize> = (0..refs.len()).collect();
            let mut level = 0;
            while !remaining.is_empty() {
                let front: Vec<usize> = remaining
                    .iter()
                    .copied()
                    .filter(|&i| !remaining.iter().any(|&j| dominates(refs[j], refs[i])))
                    .collect();
                for &i in &front {
                    expected[i] = level;
                }
                remaining.retain(|i| !front.contains(i));
                level += 1;
            }
            assert_eq!(fronts, expected);
            assert_eq!(n_fronts, level);
        }
    }

    #[test]
    fn front_utilities_match_formulae() {
        // three-front chain
        let f: Vec<FitnessVector> = [(0.9, 10.0), (0.8, 20.0), (0.7, 30.0)]
            .iter()
            .map(|&(q, et)| fitness(&[("q", q, Direction::Maximize)], et))
            .collect();
        let refs: Vec<&FitnessVector> = f.iter().collect();
        let linear = utility_front(&refs, false).unwrap();
        let log = utility_front(&refs, true).unwrap();
        assert!((linear[0] - 1.0).abs() < 1e-15);
        assert!((linear[2] - 1.0 / 3.0).abs() < 1e-15);
        assert!((log[0] - 1.0).abs() < 1e-15);
        assert!(
            (log[2] - 0.5).abs() < 1e-15,
            "ln2/ln4 = 0.5, got {}",
            log[2]
        );
        // single front: both schemes give 1
        let single = vec![&f[0]];
        assert_eq!(utility_front(&single, false).unwrap(), vec![1.0]);
        assert_eq!(utility_front(&single, true).unwrap(), vec![1.0]);
        // linear and log rank fronts identically
        let mut rank_l: Vec<usize> = (0..3).collect();
        rank_l.sort_by(|&a, &b| linear[b].partial_cmp(&linear[a]).unwrap());
        let mut rank_g: Vec<usize> = (0..3).collect();
        rank_g.sort_by(|&a, &b| log[b].partial_cmp(&log[a]).unwrap());
        assert_eq!(rank_l, rank_g);
    }

    #[test]
    fn learning_rate_examples() {
        let fixed = RateScheme::Fixed {
            alpha_pos_max: 0.05,
            alpha_neg_max: 0.02,
        };
        let (p, n) = learning_rates(&[0.0], &[1.0], &[0.0], &fixed, 3.0).unwrap();
        assert_eq!(p, vec![0.05]);
        assert_eq!(n, vec![0.02]);

        // beta*d = ln 2 halves the pull
        let (p, _) = learning_rates(&[2.0_f64.ln()], &[1.0], &[], &fixed, 1.0).unwrap();
        assert!((p[0] - 0.025).abs() < 1e-12);

        let (p, n) = learning_rates(
            &[0.0; 10],
            &[1.0; 10],
            &vec![0.0; 160],
            &RateScheme::Adaptive,
            0.0,
        )
        .unwrap();
        assert!((p[0] - 0.1).abs() < 1e-15);
        assert!((n[0] - 0.00625).abs() < 1e-15);
    }

    #[test]
    fn learning_rates_monotone_in_distance() {
        let fixed = RateScheme::Fixed {
            alpha_pos_max: 0.05,
            alpha_neg_max: 0.02,
        };
        let d = [0.0, 0.5, 1.0, 2.0, 5.0];
        let (p, n) = learning_rates(&d, &[1.0; 5], &d, &fixed, 0.7).unwrap();
        for w in p.windows(2) {
            assert!(w[0] >= w[1]);
        }
        for w in n.windows(2) {
            assert!(w[0] >= w[1]);
        }
        assert!(p.iter().all(|&a| (0.0..=0.05).contains(&a)));
        assert!(n.iter().all(|&a| (0.0..=0.02).contains(&a)));
    }

    #[test]
    fn tv_hand_values() {
        assert_eq!(tv_distance(&[0.2, 0.8], &[0.2, 0.8]).unwrap(), 0.0);
        let d = tv_distance(&[1.0, 0.0, 0.0], &[1.0 / 3.0; 3]).unwrap();
        assert!((d - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(tv_distance(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 1.0);
        assert!(tv_distance(&[1.0], &[0.5, 0.5]).is_err());
        assert!(tv_distance(&[0.7, 0.7], &[0.5, 0.5]).is_err());
    }

    #[test]
    fn tv_metric_properties() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let random_dist = |rng: &mut ChaCha8Rng| -> Vec<f64> {
            let mut v: Vec<f64> = (0..4).map(|_| rng.random::<f64>() + 1e-3).collect();
            let s: f64 = v.iter().sum();
            v.iter_mut().for_each(|x| *x /= s);
            v
        };
        for _ in 0..200 {
            let (p, q, r) = (
                random_dist(&mut rng),
                random_dist(&mut rng),
                random_dist(&mut rng),
            );
            let d = |a: &[f64], b: &[f64]| tv_distance(a, b).unwrap();
            assert!((d(&p, &q) - d(&q, &p)).abs() < 1e-15);
            assert_eq!(d(&p, &p), 0.0);
            assert!(d(&p, &r) <= d(&p, &q) + d(&q, &r) + 1e-12);
            assert!((0.0..=1.0).contains(&d(&p, &q)));
        }
    }

    #[test]
    fn stratify_gap_example() {
        // TVs 0.01, 0.012, 0.05, 0.06, 0.2, 0.22: ratio gaps ~4.2x and ~3.3x
        let marginals: Vec<Vec<f64>> = [0.01, 0.012, 0.05, 0.06, 0.2, 0.22]
            .iter()
            .map(|&tv| vec![0.5 + tv, 0.5 - tv])
            .collect();
        let s = stratify_priors(&marginals).unwrap();
        let sizes: Vec<usize> = s.strata.iter().map(|st| st.members.len()).collect();
        assert_eq!(sizes, vec![2, 2, 2]);
        assert_eq!(s.strata[0].members, vec![0, 1]);
        assert_eq!(s.strata[1].members, vec![2, 3]);
        assert_eq!(s.strata[2].members, vec![4, 5]);
        assert_eq!(s.strata[2].max, 5);
        assert_eq!(s.strata[2].median, 4);
    }

    #[test]
    fn stratify_equal_tvs_fall_back_to_thirds() {
        let marginals: Vec<Vec<f64>> = (0..9).map(|_| vec![0.6, 0.4]).collect();
        let s = stratify_priors(&marginals).unwrap();
        let sizes: Vec<usize> = s.strata.iter().map(|st| st.members.len()).collect();
        assert_eq!(sizes, vec![3, 3, 3]);
    }

    #[test]
    fn stratify_partitions_candidates() {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let marginals: Vec<Vec<f64>> = (0..180)
            .map(|_| {
                let mut v: Vec<f64> = (0..3).map(|_| rng.random::<f64>() + 1e-3).collect();
                let s: f64 = v.iter().sum();
                v.iter_mut().for_each(|x| *x /= s);
                v
            })
            .collect();
        let s = stratify_priors(&marginals).unwrap();
        let mut seen = vec![0usize; 180];
        for st in &s.strata {
            assert!(!st.members.is_empty());
            assert!(st.members.contains(&st.median));
            assert!(st.members.contains(&st.max));
            for &m in &st.members {
                seen[m] += 1;
            }
        }
        assert!(
            seen.iter().all(|&c| c == 1),
            "every candidate in exactly one stratum"
        );
    }

    // ---- prior construction on a small synthetic store ----

    fn toy_space() -> SearchSpace {
        SearchSpace::parse(
            "methods = [\"full\", \"partial\", \"lora\"]\nmodels = [\"bert\", \"t5\"]\n",
        )
        .unwrap()
    }

    fn toy_config(method: &str, model: &str) -> Configuration {
        Configuration {
            method: method.into(),
            model: model.into(),
            params: BTreeMap::new(),
        }
    }

    fn toy_features(seedling: f64) -> MetaFeatureVector {
        MetaFeatureVector {
            template: Template::LabelBased,
            values: vec![seedling, seedling * 2.0, 1.0],
        }
    }

    fn toy_system() -> SystemProfile {
        SystemProfile {
            cpu_cores: 8,
            cpu_freq_mhz: 3000.0,
            ram_total_mb: 16000,
            gpu_vram_mb: 8000,
        }
    }

    fn toy_experience(id: u64, method: &str, positive: bool, feat: f64) -> Experience {
        let draft = ExperienceDraft {
            task_id: format!("task{feat}"),
            family: "classification".into(),
            config: toy_config(method, "bert"),
            outcome: if positive {
                Outcome::Success(fitness(
                    &[("f1", 0.5 + feat / 100.0, Direction::Maximize)],
                    10.0 + feat,
                ))
            } else {
                Outcome::Failure(FailureKind::Timeout)
            },
            task_features: toy_features(feat),
            system: toy_system(),
        };
        Experience {
            id,
            task_id: draft.task_id,
            family: draft.family,
            config: draft.config,
            outcome: draft.outcome,
            task_features: draft.task_features,
            system: draft.system,
            timestamp: "2026-01-01T00:00:00.000Z".into(),
        }
    }

    #[test]
    fn prior_params_fixtures_parse_and_roundtrip() {
        let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
        let default_text = std::fs::read_to_string(dir.join("prior_default.toml")).unwrap();
        let params = PriorParams::parse(&default_text).unwrap();
        assert_eq!(params.k_pos, None, "\"all\" means no limit");
        assert_eq!(params.k_neg, None);
        assert_eq!(
            params.rate_scheme,
            RateScheme::Fixed {
                alpha_pos_max: 0.05,
                alpha_neg_max: 0.02
            }
        );
        let reparsed = PriorParams::parse(&params.to_toml().unwrap()).unwrap();
        assert_eq!(reparsed, params);

        let no_neg = PriorParams::parse(
            &std::fs::read_to_string(dir.join("prior_no_negatives.toml")).unwrap(),
        )
        .unwrap();
        assert_eq!(no_neg.k_neg, Some(0));
    }

    #[test]
    fn empty_store_is_zero_shot() {
        let space = toy_space();
        let state = space.init_uniform();
        let (warmed, report) = build_prior(
            &space,
            &state,
            &[],
            &toy_features(1.0),
            &toy_system(),
            &PriorParams::default(),
        )
        .unwrap();
        assert_eq!(warmed, state);
        assert!(report.entries.is_empty());
    }

    #[test]
    fn zero_limits_are_identity() {
        let space = toy_space();
        let state = space.init_uniform();
        let experiences = vec![
            toy_experience(0, "full", true, 1.0),
            toy_experience(1, "lora", false, 2.0),
        ];
        let params = PriorParams {
            k_pos: Some(0),
            k_neg: Some(0),
            ..PriorParams::default()
        };
        let (warmed, report) = build_prior(
            &space,
            &state,
            &experiences,
            &toy_features(1.0),
            &toy_system(),
            &params,
        )
        .unwrap();
        assert_eq!(warmed, state);
        assert!(report.entries.is_empty());
    }

    #[test]
    fn single_positive_full_rate_dominates_marginal() {
        let space = toy_space();
        let state = space.init_uniform();
        // same features as the current task: d = 0, kernel = 1
        let experiences = vec![toy_experience(0, "partial", true, 1.0)];
        let params = PriorParams {
            utility_scheme: UtilityScheme::Uniform,
            rate_scheme: RateScheme::Fixed {
                alpha_pos_max: 1.0,
                alpha_neg_max: 0.0,
            },
            ..PriorParams::default()
        };
        let (warmed, report) = build_prior(
            &space,
            &state,
            &experiences,
            &toy_features(1.0),
            &toy_system(),
            &params,
        )
        .unwrap();
        let marginal = warmed.method_marginal();
        assert!(
            marginal[1] > 0.999,
            "one-hot after full-rate pull, got {marginal:?}"
        );
        assert_eq!(report.entries.len(), 1);
        assert_eq!(report.entries[0].distance, 0.0);
        assert_eq!(report.entries[0].alpha, 1.0);
    }

    #[test]
    fn non_finite_features_error_instead_of_poisoning_distances() {
        let space = toy_space();
        let state = space.init_uniform();
        let mut bad = toy_experience(0, "full", true, 1.0);
        bad.task_features.values[0] = f64::NAN;
        let err = knn_prior(
            &space,
            &state,
            &[bad],
            1,
            &toy_features(1.0),
            &toy_system(),
            DistanceMetric::Euclidean,
            None,
        )
        .unwrap_err();
        assert!(err.to_string().contains("finite"), "{err}");
    }

    #[test]
    fn knn_with_k_one_pulls_and_pushes_at_full_rate() {
        let space = toy_space();
        let state = space.init_uniform();
        let experiences = vec![
            toy_experience(0, "partial", true, 1.0),
            toy_experience(1, "lora", false, 2.0),
        ];
        let (_, report) = knn_prior(
            &space,
            &state,
            &experiences,
            1,
            &toy_features(1.5),
            &toy_system(),
            DistanceMetric::Euclidean,
            None,
        )
        .unwrap();
        assert_eq!(report.entries.len(), 2, "one pull, one push");
        assert!(report.entries.iter().all(|e| e.alpha == 1.0));
        assert!(report.entries[0].positive && !report.entries[1].positive);
    }

    #[test]
    fn knn_without_negatives_is_pull_only() {
        let space = toy_space();
        let state = space.init_uniform();
        let experiences = vec![toy_experience(0, "partial", true, 1.0)];
        let (_, report) = knn_prior(
            &space,
            &state,
            &experiences,
            5,
            &toy_features(1.5),
            &toy_system(),
            DistanceMetric::Euclidean,
            None,
        )
        .unwrap();
        assert_eq!(report.entries.len(), 1);
        assert!(report.entries[0].positive);
        assert_eq!(
            report.entries[0].alpha, 0.2,
            "alpha stays 1/k even when fewer exist"
        );
    }

    #[test]
    fn knn_reduction_equivalence_small() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let space = toy_space();
        let state = space.init_uniform();
        for trial in 0..20 {
            let n = rng.random_range(2..25);
            let experiences: Vec<Experience> = (0..n)
                .map(|i| {
                    let method = ["full", "partial", "lora"][rng.random_range(0..3)];
                    let positive = rng.random::<bool>();
                    toy_experience(i as u64, method, positive, rng.random_range(0.0..50.0))
                })
                .collect();
            let k = rng.random_range(1..8);
            let reduction = PriorParams {
                distance_metric: DistanceMetric::Euclidean,
                distance_space: DistanceSpace::FeaturesSystemMetrics,
                utility_scheme: UtilityScheme::Uniform,
                beta_scale: 0.0,
                beta_variant: BetaVariant::StdOnly,
                rate_scheme: RateScheme::Fixed {
                    alpha_pos_max: 1.0 / k as f64,
                    alpha_neg_max: 1.0 / k as f64,
                },
                k_pos: Some(k),
                k_neg: Some(k),
                metric_weights: BTreeMap::new(),
            };
            let current = toy_features(7.0);
            let (via_framework, _) = build_prior(
                &space,
                &state,
                &experiences,
                &current,
                &toy_system(),
                &reduction,
            )
            .unwrap();
            let (via_knn, _) = knn_prior(
                &space,
                &state,
                &experiences,
                k,
                &current,
                &toy_system(),
                DistanceMetric::Euclidean,
                None,
            )
            .unwrap();
            let a = via_framework.method_marginal();
            let b = via_knn.method_marginal();
            for (x, y) in a.iter().zip(&b) {
                assert!((x - y).abs() < 1e-12, "trial {trial}: {a:?} vs {b:?}");
            }
        }
    }
}
