//! Deterministic surrogate tasks for desk-scale studies.
//!
//! A surrogate task scores configurations against a hidden per-arm quality
//! surface (concave bumps over the continuous hyperparameters), charges a
//! per-arm cost surface, and injects failures through two channels: a
//! resource rule (arms demanding more VRAM than the rig has always go
//! out-of-memory) and a per-arm stochastic timeout hazard. Families of tasks
//! share failure and cost structure; quality optima are shared in proportion
//! to a relatedness knob, which is what makes cross-task transfer studies
//! possible without training anything.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::meta::{MetaFeatureVector, Template, LABEL_FEATURE_NAMES};
use crate::search::Evaluator;
use crate::space::{Configuration, ParamDomain, ParamValue, SearchSpace};
use crate::store::{Direction, FailureKind, FitnessVector, Metric, Outcome, SystemProfile};

/// Name of the quality metric surrogates report.
pub const QUALITY_METRIC: &str = "quality";

/// Mismatched categorical choices multiply quality by this factor.
const CATEGORICAL_PENALTY: f64 = 0.9;

/// Reproducible recipe for a task family: seeds and knobs, never sampled
/// values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilySpec {
    pub family_seed: u64,
    pub n_tasks: usize,
    /// 1 = identical quality optima across tasks, 0 = independent.
    pub relatedness: f64,
    /// Gaussian noise applied to quality and (relatively) to cost.
    #[serde(default)]
    pub noise: f64,
}

impl FamilySpec {
    pub fn parse(text: &str) -> Result<FamilySpec> {
        let spec: FamilySpec = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_tasks < 1 {
            return Err(Error::Invalid("family needs at least one task".into()));
        }
        if !(0.0..=1.0).contains(&self.relatedness) {
            return Err(Error::Invalid("relatedness must lie in [0, 1]".into()));
        }
        if self.noise < 0.0 {
            return Err(Error::Invalid("noise must be >= 0".into()));
        }
        Ok(())
    }

    /// Family name all tasks of this spec carry.
    pub fn family_name(&self) -> String {
        format!("surrogate-{:08x}", self.family_seed)
    }
}

/// Hidden response surface of one (method, model) arm.
#[derive(Debug, Clone, PartialEq)]
pub struct ArmSurface {
    pub peak_quality: f64,
    /// Optimum position per continuous param, on the normalized \[0,1\] axis.
    pub optima: Vec<f64>,
    pub widths: Vec<f64>,
    /// Preferred value index per categorical param.
    pub preferred: Vec<usize>,
    pub base_et_secs: f64,
    /// Cost growth per continuous param over its normalized axis.
    pub cost_slopes: Vec<f64>,
    /// Probability that an evaluation times out on this arm.
    pub hazard: f64,
    /// Arms demanding more VRAM than the rig has always go out-of-memory.
    pub vram_required_mb: u64,
}

/// One synthetic task bound to a search space.
#[derive(Debug, Clone)]
pub struct SurrogateTask {
    pub task_id: String,
    pub family: String,
    pub noise: f64,
    pub system: SystemProfile,
    pub features: MetaFeatureVector,
    space: SearchSpace,
    arms: BTreeMap<(String, String), ArmSurface>,
}

fn mix(seed: u64, salt: u64) -> u64 {
    let mut x = seed ^ salt.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

struct QualityDraw {
    peak: f64,
    optima: Vec<f64>,
    widths: Vec<f64>,
    preferred: Vec<usize>,
}

fn draw_quality(rng: &mut ChaCha8Rng, sweet: bool, spec: &crate::space::Arm) -> QualityDraw {
    let peak = if sweet {
        rng.random_range(0.85..0.95)
    } else {
        rng.random_range(0.60..0.80)
    };
    let n_cont = spec
        .params
        .iter()
        .filter(|p| matches!(p.domain, ParamDomain::Continuous { .. }))
        .count();
    let optima = (0..n_cont).map(|_| rng.random_range(0.15..0.85)).collect();
    let widths = (0..n_cont).map(|_| rng.random_range(0.25..0.45)).collect();
    let preferred = spec
        .params
        .iter()
        .filter_map(|p| match &p.domain {
            ParamDomain::Categorical { values } => Some(rng.random_range(0..values.len())),
            ParamDomain::Continuous { .. } => None,
        })
        .collect();
    QualityDraw {
        peak,
        optima,
        widths,
        preferred,
    }
}

/// Generate `n_tasks` surrogate tasks over `space`.
///
/// Failure hazards, VRAM demands and cost surfaces are family-level (they
/// model the rig and the arms' heaviness, which do not change from task to
/// task); quality peaks and optimum positions interpolate between a shared
/// family draw and per-task independent draws with weight `relatedness`.
/// Synthetic meta-feature vectors are blended the same way, so pairwise
/// feature distances scale with (1 - relatedness).
pub fn make_task_family(space: &SearchSpace, spec: &FamilySpec) -> Result<Vec<SurrogateTask>> {
    spec.validate()?;
    let family = spec.family_name();
    let mut base_rng = ChaCha8Rng::seed_from_u64(spec.family_seed);
    let r = spec.relatedness;

    let system = SystemProfile {
        cpu_cores: 16,
        cpu_freq_mhz: 3600.0,
        ram_total_mb: 32768,
        gpu_vram_mb: 8192,
    };

    let n_arms = space.arms().len();
    let sweet_arm = base_rng.random_range(0..n_arms);

    // family-shared structure
    struct FamilyArm {
        sweet: bool,
        base_et: f64,
        cost_slopes: Vec<f64>,
        hazard: f64,
        vram_required_mb: u64,
        base_quality: QualityDraw,
    }
    let family_arms: Vec<FamilyArm> = space
        .arms()
        .iter()
        .enumerate()
        .map(|(ai, arm)| {
            let sweet = ai == sweet_arm;
            // cost magnitudes sized so a virtual multi-hour budget buys tens
            // to hundreds of evaluations, not thousands
            let base_et = if sweet {
                base_rng.random_range(200.0..400.0)
            } else {
                base_rng.random_range(2500.0..7000.0)
            };
            let n_cont = arm
                .params
                .iter()
                .filter(|p| matches!(p.domain, ParamDomain::Continuous { .. }))
                .count();
            let cost_slopes = (0..n_cont)
                .map(|_| base_rng.random_range(0.0..1.0))
                .collect();
            let hazard = if sweet {
                base_rng.random_range(0.02..0.08)
            } else {
                base_rng.random_range(0.65..0.95)
            };
            let heavy = !sweet && base_rng.random_range(0..2u8) == 0;
            let vram_required_mb = if heavy { 16384 } else { 0 };
            let base_quality = draw_quality(&mut base_rng, sweet, arm);
            FamilyArm {
                sweet,
                base_et,
                cost_slopes,
                hazard,
                vram_required_mb,
                base_quality,
            }
        })
        .collect();

    let base_features: Vec<f64> = synthetic_features(&mut base_rng);

    let tasks = (0..spec.n_tasks)
        .map(|ti| {
            let mut task_rng = ChaCha8Rng::seed_from_u64(mix(spec.family_seed, ti as u64 + 1));
            let arms = space
                .arms()
                .iter()
                .zip(&family_arms)
                .map(|(arm, fam)| {
                    let own = draw_quality(&mut task_rng, fam.sweet, arm);
                    let base = &fam.base_quality;
                    let blend = |a: f64, b: f64| r * a + (1.0 - r) * b;
                    let surface = ArmSurface {
                        peak_quality: blend(base.peak, own.peak),
                        optima: base
                            .optima
                            .iter()
                            .zip(&own.optima)
                            .map(|(&a, &b)| blend(a, b))
                            .collect(),
                        widths: base
                            .widths
                            .iter()
                            .zip(&own.widths)
                            .map(|(&a, &b)| blend(a, b))
                            .collect(),
                        preferred: base
                            .preferred
                            .iter()
                            .zip(&own.preferred)
                            .map(|(&a, &b)| if task_rng.random::<f64>() < r { a } else { b })
                            .collect(),
                        base_et_secs: fam.base_et,
                        cost_slopes: fam.cost_slopes.clone(),
                        hazard: fam.hazard,
                        vram_required_mb: fam.vram_required_mb,
                    };
                    let key = (
                        space.methods()[arm.method_idx].clone(),
                        space.models(arm.method_idx)[arm.model_idx].clone(),
                    );
                    (key, surface)
                })
                .collect();

            let own_features = synthetic_features(&mut task_rng);
            let values: Vec<f64> = base_features
                .iter()
                .zip(&own_features)
                .map(|(&a, &b)| r * a + (1.0 - r) * b)
                .collect();

            SurrogateTask {
                task_id: format!("{family}-t{ti}"),
                family: family.clone(),
                noise: spec.noise,
                system: system.clone(),
                features: MetaFeatureVector {
                    template: Template::LabelBased,
                    values,
                },
                space: space.clone(),
                arms,
            }
        })
        .collect();
    Ok(tasks)
}

/// Plausible label-based feature values for a synthetic task.
fn synthetic_features(rng: &mut ChaCha8Rng) -> Vec<f64> {
    let n_samples = rng.random_range(1_000.0..50_000.0);
    let n_classes = rng.random_range(2.0..10.0_f64).floor();
    let entropy = rng.random_range(0.5..n_classes.log2().max(0.6));
    let min_prob = rng.random_range(0.02..1.0 / n_classes);
    let max_prob = rng.random_range(1.0 / n_classes..0.9);
    let avg_len = rng.random_range(40.0..2_000.0);
    let std_len = rng.random_range(5.0..avg_len / 2.0);
    let values = vec![
        n_samples,
        n_classes,
        entropy,
        min_prob,
        max_prob,
        max_prob / min_prob,
        avg_len,
        std_len,
        std_len / avg_len,
        rng.random_range(0.3..0.95),
    ];
    debug_assert_eq!(values.len(), LABEL_FEATURE_NAMES.len());
    values
}

impl SurrogateTask {
    /// Assemble a task from explicit parts (fixtures and bindings).
    pub fn from_parts(
        task_id: String,
        family: String,
        noise: f64,
        system: SystemProfile,
        features: MetaFeatureVector,
        space: SearchSpace,
        arms: BTreeMap<(String, String), ArmSurface>,
    ) -> SurrogateTask {
        SurrogateTask {
            task_id,
            family,
            noise,
            system,
            features,
            space,
            arms,
        }
    }

    pub fn space(&self) -> &SearchSpace {
        &self.space
    }

    pub fn arm_surface(&self, method: &str, model: &str) -> Option<&ArmSurface> {
        self.arms.get(&(method.to_string(), model.to_string()))
    }

    /// The configuration at the best arm's optimum (handy in tests: with
    /// zero noise it evaluates exactly to that arm's peak quality).
    pub fn best_config(&self) -> Configuration {
        let ((method, model), surface) = self
            .arms
            .iter()
            .filter(|(_, s)| s.vram_required_mb <= self.system.gpu_vram_mb)
            .max_by(|a, b| a.1.peak_quality.partial_cmp(&b.1.peak_quality).unwrap())
            .expect("task has at least one feasible arm");
        let mi = self.space.method_index(method).unwrap();
        let oi = self
            .space
            .models(mi)
            .iter()
            .position(|m| m == model)
            .unwrap();
        let arm = &self.space.arms()[self.space.arm_index(mi, oi)];
        let mut params = BTreeMap::new();
        let mut cont_i = 0;
        let mut cat_i = 0;
        for p in &arm.params {
            match &p.domain {
                ParamDomain::Continuous { lo, hi, scale } => {
                    let (lo_t, hi_t) = match scale {
                        crate::space::Scale::Linear => (*lo, *hi),
                        crate::space::Scale::Log => (lo.log10(), hi.log10()),
                    };
                    let t = lo_t + surface.optima[cont_i] * (hi_t - lo_t);
                    let raw = match scale {
                        crate::space::Scale::Linear => t,
                        crate::space::Scale::Log => 10f64.powf(t),
                    };
                    params.insert(p.name.clone(), ParamValue::Continuous(raw));
                    cont_i += 1;
                }
                ParamDomain::Categorical { values } => {
                    params.insert(
                        p.name.clone(),
                        ParamValue::Categorical(values[surface.preferred[cat_i]].clone()),
                    );
                    cat_i += 1;
                }
            }
        }
        Configuration {
            method: method.clone(),
            model: model.clone(),
            params,
        }
    }

    /// Score one configuration. Failure rules fire first: the VRAM rule
    /// deterministically, then one hazard draw; the surface plus noise
    /// otherwise. Fully determined by (config, rng state).
    pub fn evaluate(&self, config: &Configuration, rng: &mut ChaCha8Rng) -> Result<Outcome> {
        let (mi, oi) = self
            .space
            .resolve(config)
            .map_err(|e| Error::Contract(e.to_string()))?;
        let key = (config.method.clone(), config.model.clone());
        let surface = self
            .arms
            .get(&key)
            .ok_or_else(|| Error::Contract(format!("no surface for arm {key:?}")))?;

        if surface.vram_required_mb > self.system.gpu_vram_mb {
            return Ok(Outcome::Failure(FailureKind::OutOfMemory));
        }
        if rng.random::<f64>() < surface.hazard {
            return Ok(Outcome::Failure(FailureKind::Timeout));
        }

        let arm = &self.space.arms()[self.space.arm_index(mi, oi)];
        let mut quality = surface.peak_quality;
        let mut cost_factor = 1.0;
        let mut cont_i = 0;
        let mut cat_i = 0;
        for p in &arm.params {
            match (&p.domain, &config.params[&p.name]) {
                (ParamDomain::Continuous { lo, hi, scale }, ParamValue::Continuous(v)) => {
                    let (lo_t, hi_t) = match scale {
                        crate::space::Scale::Linear => (*lo, *hi),
                        crate::space::Scale::Log => (lo.log10(), hi.log10()),
                    };
                    let t = match scale {
                        crate::space::Scale::Linear => *v,
                        crate::space::Scale::Log => v.log10(),
                    };
                    let x = (t - lo_t) / (hi_t - lo_t);
                    let z = (x - surface.optima[cont_i]) / surface.widths[cont_i];
                    quality *= (-z * z).exp();
                    cost_factor += surface.cost_slopes[cont_i] * x;
                    cont_i += 1;
                }
                (ParamDomain::Categorical { values }, ParamValue::Categorical(v)) => {
                    let idx = values.iter().position(|x| x == v).unwrap();
                    if idx != surface.preferred[cat_i] {
                        quality *= CATEGORICAL_PENALTY;
                    }
                    cat_i += 1;
                }
                _ => unreachable!("resolve() checked value kinds"),
            }
        }
        let mut et = surface.base_et_secs * cost_factor;
        if self.noise > 0.0 {
            let zq: f64 = StandardNormal.sample(rng);
            let zc: f64 = StandardNormal.sample(rng);
            quality += self.noise * zq;
            et *= 1.0 + self.noise * zc;
        }
        let quality = quality.clamp(0.0, 1.0);
        let et = et.max(1e-3);
        Ok(Outcome::Success(FitnessVector::new(
            vec![Metric {
                name: QUALITY_METRIC.into(),
                value: quality,
                direction: Direction::Maximize,
            }],
            et,
        )))
    }
}

impl Evaluator for SurrogateTask {
    fn evaluate(&self, config: &Configuration, rng: &mut ChaCha8Rng) -> Result<Outcome> {
        SurrogateTask::evaluate(self, config, rng)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::meta::distance;
    use crate::meta::DistanceMetric;

    fn space() -> SearchSpace {
        SearchSpace::parse(
            r#"
methods = ["full", "partial", "lora"]
models = ["small", "large"]

[[param]]
name = "lr"
type = "continuous"
lo = 1e-5
hi = 1e-1
scale = "log"

[[param]]
name = "dropout"
type = "continuous"
lo = 0.0
hi = 0.5
"#,
        )
        .unwrap()
    }

    fn spec(seed: u64, n: usize, r: f64) -> FamilySpec {
        FamilySpec {
            family_seed: seed,
            n_tasks: n,
            relatedness: r,
            noise: 0.0,
        }
    }

    #[test]
    fn full_relatedness_means_identical_tasks() {
        let space = space();
        let tasks = make_task_family(&space, &spec(9, 2, 1.0)).unwrap();
        assert_eq!(tasks[0].arms, tasks[1].arms);
        let d = distance(
            &tasks[0].features.values,
            &tasks[1].features.values,
            DistanceMetric::Euclidean,
        )
        .unwrap();
        assert_eq!(d, 0.0);
    }

    #[test]
    fn zero_relatedness_draws_independent_optima() {
        let space = space();
        let tasks = make_task_family(&space, &spec(9, 2, 0.0)).unwrap();
        assert_ne!(tasks[0].arms, tasks[1].arms);
        // failure/cost structure stays family-shared even at zero relatedness
        for (key, a) in &tasks[0].arms {
            let b = &tasks[1].arms[key];
            assert_eq!(a.hazard, b.hazard);
            assert_eq!(a.base_et_secs, b.base_et_secs);
            assert_eq!(a.vram_required_mb, b.vram_required_mb);
        }
    }

    #[test]
    fn feature_distance_monotone_in_relatedness() {
        let space = space();
        let mean_pairwise = |r: f64| -> f64 {
            let mut total = 0.0;
            let mut count = 0;
            for seed in 100..110 {
                let tasks = make_task_family(&space, &spec(seed, 4, r)).unwrap();
                for i in 0..tasks.len() {
                    for j in (i + 1)..tasks.len() {
                        total += distance(
                            &tasks[i].features.values,
                            &tasks[j].features.values,
                            DistanceMetric::Euclidean,
                        )
                        .unwrap();
                        count += 1;
                    }
                }
            }
            total / count as f64
        };
        let d0 = mean_pairwise(0.0);
        let d_half = mean_pairwise(0.5);
        let d1 = mean_pairwise(1.0);
        assert_eq!(d1, 0.0);
        assert!(d_half > 0.0 && d_half < d0, "expected 0 < {d_half} < {d0}");
    }

    #[test]
    fn noiseless_optimum_hits_peak_quality() {
        let space = space();
        let task = &make_task_family(&space, &spec(3, 1, 1.0)).unwrap()[0];
        let best = task.best_config();
        let surface = task.arm_surface(&best.method, &best.model).unwrap();
        // hazard can fire; scan seeds for a clean draw
        let mut rng = (0..200)
            .map(ChaCha8Rng::seed_from_u64)
            .find(|r| {
                let mut probe = r.clone();
                probe.random::<f64>() >= surface.hazard
            })
            .unwrap();
        match task.evaluate(&best, &mut rng).unwrap() {
            Outcome::Success(m) => {
                let q = m.get(QUALITY_METRIC).unwrap();
                assert!(
                    (q - surface.peak_quality).abs() < 1e-12,
                    "{q} vs {}",
                    surface.peak_quality
                );
                assert!(m.evaluation_time() > 0.0);
            }
            other => panic!("expected success, got {other:?}"),
        }
    }

    #[test]
    fn heavy_arm_without_vram_always_oom() {
        let space = space();
        let mut tasks = make_task_family(&space, &spec(5, 1, 1.0)).unwrap();
        let task = &mut tasks[0];
        task.system.gpu_vram_mb = 0;
        let (key, _) = task
            .arms
            .iter()
            .find(|(_, s)| s.vram_required_mb > 0)
            .expect("family draws at least one heavy arm for this seed");
        let config = Configuration {
            method: key.0.clone(),
            model: key.1.clone(),
            params: task.best_config_params_for(key),
        };
        for seed in 0..50 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            assert_eq!(
                task.evaluate(&config, &mut rng).unwrap(),
                Outcome::Failure(FailureKind::OutOfMemory)
            );
        }
    }

    #[test]
    fn hazard_frequency_matches_rate() {
        let space = space();
        let tasks = make_task_family(&space, &spec(5, 1, 1.0)).unwrap();
        let task = &tasks[0];
        // pick a feasible hazardous arm and probe its timeout frequency
        let (key, surface) = task
            .arms
            .iter()
            .find(|(_, s)| s.vram_required_mb == 0 && s.hazard > 0.3 && s.hazard < 0.9)
            .unwrap();
        let config = Configuration {
            method: key.0.clone(),
            model: key.1.clone(),
            params: task.best_config_params_for(key),
        };
        let n = 1000;
        let failures = (0..n)
            .filter(|&i| {
                let mut rng = ChaCha8Rng::seed_from_u64(10_000 + i);
                matches!(
                    task.evaluate(&config, &mut rng).unwrap(),
                    Outcome::Failure(FailureKind::Timeout)
                )
            })
            .count();
        let freq = failures as f64 / n as f64;
        assert!(
            (freq - surface.hazard).abs() < 0.05,
            "freq {freq} vs hazard {}",
            surface.hazard
        );
    }

    #[test]
    fn evaluation_is_deterministic() {
        let space = space();
        let spec = FamilySpec {
            family_seed: 8,
            n_tasks: 1,
            relatedness: 0.5,
            noise: 0.05,
        };
        let task = &make_task_family(&space, &spec).unwrap()[0];
        let config = task.best_config();
        let a = task
            .evaluate(&config, &mut ChaCha8Rng::seed_from_u64(4))
            .unwrap();
        let b = task
            .evaluate(&config, &mut ChaCha8Rng::seed_from_u64(4))
            .unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn unknown_arm_is_contract_error() {
        let space = space();
        let task = &make_task_family(&space, &spec(2, 1, 1.0)).unwrap()[0];
        let bogus = Configuration {
            method: "nope".into(),
            model: "small".into(),
            params: BTreeMap::new(),
        };
        assert!(matches!(
            task.evaluate(&bogus, &mut ChaCha8Rng::seed_from_u64(0)),
            Err(Error::Contract(_))
        ));
    }

    impl SurrogateTask {
        /// Optimum parameter assignment for an arbitrary arm (test helper).
        fn best_config_params_for(&self, key: &(String, String)) -> BTreeMap<String, ParamValue> {
            let surface = &self.arms[key];
            let mi = self.space.method_index(&key.0).unwrap();
            let oi = self
                .space
                .models(mi)
                .iter()
                .position(|m| *m == key.1)
                .unwrap();
            let arm = &self.space.arms()[self.space.arm_index(mi, oi)];
            let mut params = BTreeMap::new();
            let mut cont_i = 0;
            let mut cat_i = 0;
            for p in &arm.params {
                match &p.domain {
                    ParamDomain::Continuous { lo, hi, scale } => {
                        let (lo_t, hi_t) = match scale {
                            crate::space::Scale::Linear => (*lo, *hi),
                            crate::space::Scale::Log => (lo.log10(), hi.log10()),
                        };
                        let t = lo_t + surface.optima[cont_i] * (hi_t - lo_t);
                        let raw = match scale {
                            crate::space::Scale::Linear => t,
                            crate::space::Scale::Log => 10f64.powf(t),
                        };
                        params.insert(p.name.clone(), ParamValue::Continuous(raw));
                        cont_i += 1;
                    }
                    ParamDomain::Categorical { values } => {
                        params.insert(
                            p.name.clone(),
                            ParamValue::Categorical(values[surface.preferred[cat_i]].clone()),
                        );
                        cat_i += 1;
                    }
                }
            }
            params
        }
    }
}
