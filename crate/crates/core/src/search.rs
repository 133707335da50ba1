//! The sample-evaluate-update loop.
//!
//! Each generation samples a batch of configurations, evaluates them against
//! an [`Evaluator`], advances a virtual clock by the reported evaluation
//! times, and updates the sampler: batch successes on the non-dominated front
//! pull, failures push. Budgets are evaluation counts and/or (virtual)
//! wall-clock seconds, with a per-pipeline timeout hook.

use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prior::utility_front;
use crate::space::{Configuration, SamplerState, SearchSpace};
use crate::store::{FailureKind, FitnessVector, Outcome};

/// Fraction of the per-pipeline timeout charged to the clock by failures
/// that abort quickly (out-of-memory, runtime errors). Timeouts charge the
/// full cap.
pub const FAST_FAILURE_CHARGE: f64 = 0.05;

/// Default batch size of the loop.
pub const DEFAULT_BATCH_SIZE: usize = 5;

/// Evaluation-count and/or wall-clock budget plus the per-pipeline cap.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Budget {
    pub max_evaluations: Option<u64>,
    pub wall_clock_limit_secs: Option<f64>,
    pub per_pipeline_timeout_secs: f64,
}

impl Budget {
    pub fn validate(&self) -> Result<()> {
        if self.max_evaluations.is_none() && self.wall_clock_limit_secs.is_none() {
            return Err(Error::Invalid("budget needs at least one limit".into()));
        }
        if self.per_pipeline_timeout_secs.is_nan() || self.per_pipeline_timeout_secs <= 0.0 {
            return Err(Error::Invalid(
                "per-pipeline timeout must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Something that can score a configuration. Must be pure given the
/// configuration and the state of the supplied rng.
pub trait Evaluator {
    fn evaluate(&self, config: &Configuration, rng: &mut ChaCha8Rng) -> Result<Outcome>;
}

impl<F> Evaluator for F
where
    F: Fn(&Configuration, &mut ChaCha8Rng) -> Result<Outcome>,
{
    fn evaluate(&self, config: &Configuration, rng: &mut ChaCha8Rng) -> Result<Outcome> {
        self(config, rng)
    }
}

/// One evaluated configuration in a trace.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalRecord {
    pub index: u64,
    pub config: Configuration,
    pub outcome: Outcome,
    /// Virtual seconds elapsed since the start of the run when this
    /// evaluation completed.
    pub timestamp_secs: f64,
}

/// Full record of a search run.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchTrace {
    pub records: Vec<EvalRecord>,
    pub final_state: SamplerState,
    pub seed: u64,
}

/// Pull/push rates applied inside a run, where every experience is from the
/// current task (distance 0, no decay kernel).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunRates {
    pub alpha_pos: f64,
    pub alpha_neg: f64,
}

impl Default for RunRates {
    fn default() -> Self {
        RunRates {
            alpha_pos: 0.05,
            alpha_neg: 0.02,
        }
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Per-evaluation rng seed, independent of batch layout so concurrent batch
/// evaluation cannot change outcomes.
pub fn evaluation_seed(run_seed: u64, eval_index: u64) -> u64 {
    splitmix64(run_seed ^ splitmix64(eval_index.wrapping_add(1)))
}

/// Run the loop until a budget limit trips. Deterministic for a fixed seed
/// and a pure evaluator: configurations are sampled in order from one
/// seeded stream and each evaluation gets its own derived rng.
pub fn run_search(
    space: &SearchSpace,
    initial_state: &SamplerState,
    evaluator: &dyn Evaluator,
    budget: &Budget,
    batch_size: usize,
    seed: u64,
    rates: RunRates,
) -> Result<SearchTrace> {
    budget.validate()?;
    if batch_size == 0 {
        return Err(Error::Invalid("batch size must be >= 1".into()));
    }
    let mut state = initial_state.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut records: Vec<EvalRecord> = Vec::new();
    let mut clock = 0.0_f64;

    let clock_exceeded = |clock: f64| {
        budget
            .wall_clock_limit_secs
            .is_some_and(|limit| clock >= limit)
    };

    'generations: loop {
        let remaining = budget.max_evaluations.map_or(batch_size, |m| {
            (m - records.len() as u64).min(batch_size as u64) as usize
        });
        if remaining == 0 || clock_exceeded(clock) {
            break;
        }
        let configs: Vec<Configuration> = (0..remaining)
            .map(|_| state.sample(space, &mut rng))
            .collect::<Result<_>>()?;

        let mut batch: Vec<EvalRecord> = Vec::new();
        let mut tripped = false;
        for config in configs {
            let index = records.len() as u64 + batch.len() as u64;
            let mut eval_rng = ChaCha8Rng::seed_from_u64(evaluation_seed(seed, index));
            let outcome = evaluator.evaluate(&config, &mut eval_rng)?;

            let outcome = match outcome {
                Outcome::Success(m) => {
                    if m.metrics().iter().any(|x| !x.value.is_finite()) {
                        return Err(Error::Contract(format!(
                            "evaluator returned a non-finite metric for {config:?}"
                        )));
                    }
                    if m.evaluation_time() <= 0.0 {
                        return Err(Error::Contract(format!(
                            "evaluator reported evaluation_time {} <= 0",
                            m.evaluation_time()
                        )));
                    }
                    if m.evaluation_time() > budget.per_pipeline_timeout_secs {
                        Outcome::Failure(FailureKind::Timeout)
                    } else {
                        Outcome::Success(m)
                    }
                }
                failure => failure,
            };
            let charge = match &outcome {
                Outcome::Success(m) => m.evaluation_time(),
                Outcome::Failure(FailureKind::Timeout) => budget.per_pipeline_timeout_secs,
                Outcome::Failure(_) => budget.per_pipeline_timeout_secs * FAST_FAILURE_CHARGE,
            };
            clock += charge;
            batch.push(EvalRecord {
                index,
                config,
                outcome,
                timestamp_secs: clock,
            });
            if clock_exceeded(clock) {
                tripped = true;
                break;
            }
        }
        state = update_from_batch(space, &state, &batch, rates)?;
        records.extend(batch);
        if tripped {
            break 'generations;
        }
    }
    Ok(SearchTrace {
        records,
        final_state: state,
        seed,
    })
}

/// Update the sampler from one evaluated batch: successes on the batch's
/// non-dominated front pull (linear-front utility), failures push, dominated
/// successes are left alone.
pub fn update_from_batch(
    space: &SearchSpace,
    state: &SamplerState,
    batch: &[EvalRecord],
    rates: RunRates,
) -> Result<SamplerState> {
    let successes: Vec<&EvalRecord> = batch
        .iter()
        .filter(|r| matches!(r.outcome, Outcome::Success(_)))
        .collect();
    let mut next = state.clone();
    if !successes.is_empty() {
        let fitness: Vec<&FitnessVector> = successes
            .iter()
            .map(|r| match &r.outcome {
                Outcome::Success(m) => m,
                _ => unreachable!(),
            })
            .collect();
        let utilities = utility_front(&fitness, false)?;
        let (fronts, _) = crate::prior::non_dominated_sort(&fitness)?;
        for ((record, &front), utility) in successes.iter().zip(&fronts).zip(&utilities) {
            if front == 0 {
                let induced = space.empirical(&record.config)?;
                next = next.pulled(space, &induced, rates.alpha_pos * utility)?;
            }
        }
    }
    for record in batch {
        if matches!(record.outcome, Outcome::Failure(_)) {
            let induced = space.empirical(&record.config)?;
            next = next.pushed_away(space, &induced, rates.alpha_neg)?;
        }
    }
    Ok(next)
}

/// Non-dominated (quality, evaluation time) points among the trace's
/// successes, first occurrence kept for exact duplicates, in trace order.
pub fn pareto_archive(trace: &SearchTrace) -> Vec<(f64, f64)> {
    let points: Vec<(f64, f64)> = trace
        .records
        .iter()
        .filter_map(|r| match &r.outcome {
            Outcome::Success(m) => m.primary_quality().map(|q| (q, m.evaluation_time())),
            _ => None,
        })
        .collect();
    let mut front = Vec::new();
    for (i, &(q, et)) in points.iter().enumerate() {
        let dominated = points.iter().enumerate().any(|(j, &(oq, oet))| {
            let strictly = (oq >= q && oet <= et) && (oq > q || oet < et);
            let duplicate_earlier = j < i && oq == q && oet == et;
            strictly || duplicate_earlier
        });
        if !dominated {
            front.push((q, et));
        }
    }
    front
}

// ---------------------------------------------------------------------------
// Trace files
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum TraceLine {
    Header {
        schema_version: u32,
        seed: u64,
        config_hash: String,
    },
    Record {
        index: u64,
        config: Configuration,
        metrics: Option<FitnessVector>,
        failure: Option<FailureKind>,
        timestamp_secs: f64,
    },
    FinalState {
        state: SamplerState,
    },
}

/// Write a trace as newline-delimited self-describing records.
pub fn write_trace<W: Write>(out: &mut W, trace: &SearchTrace, config_hash: &str) -> Result<()> {
    let header = TraceLine::Header {
        schema_version: crate::store::SCHEMA_VERSION,
        seed: trace.seed,
        config_hash: config_hash.to_string(),
    };
    writeln!(out, "{}", serde_json::to_string(&header)?)?;
    for r in &trace.records {
        let (metrics, failure) = match &r.outcome {
            Outcome::Success(m) => (Some(m.clone()), None),
            Outcome::Failure(f) => (None, Some(*f)),
        };
        let line = TraceLine::Record {
            index: r.index,
            config: r.config.clone(),
            metrics,
            failure,
            timestamp_secs: r.timestamp_secs,
        };
        writeln!(out, "{}", serde_json::to_string(&line)?)?;
    }
    let fin = TraceLine::FinalState {
        state: trace.final_state.clone(),
    };
    writeln!(out, "{}", serde_json::to_string(&fin)?)?;
    Ok(())
}

/// Read a trace file written by [`write_trace`]; returns the trace and the
/// embedded config hash.
pub fn read_trace<P: AsRef<Path>>(path: P) -> Result<(SearchTrace, String)> {
    let reader = BufReader::new(File::open(path)?);
    let mut seed = None;
    let mut hash = String::new();
    let mut records = Vec::new();
    let mut final_state = None;
    for line in reader.lines() {
        let line = line?;
        match serde_json::from_str::<TraceLine>(&line)? {
            TraceLine::Header {
                seed: s,
                config_hash,
                ..
            } => {
                seed = Some(s);
                hash = config_hash;
            }
            TraceLine::Record {
                index,
                config,
                metrics,
                failure,
                timestamp_secs,
            } => {
                let outcome = match (metrics, failure) {
                    (Some(m), None) => Outcome::Success(m),
                    (None, Some(f)) => Outcome::Failure(f),
                    _ => {
                        return Err(Error::Invalid(
                            "trace record must set exactly one of metrics/failure".into(),
                        ))
                    }
                };
                records.push(EvalRecord {
                    index,
                    config,
                    outcome,
                    timestamp_secs,
                });
            }
            TraceLine::FinalState { state } => final_state = Some(state),
        }
    }
    let seed = seed.ok_or_else(|| Error::Invalid("trace lacks a header line".into()))?;
    let final_state =
        final_state.ok_or_else(|| Error::Invalid("trace lacks a final_state line".into()))?;
    Ok((
        SearchTrace {
            records,
            final_state,
            seed,
        },
        hash,
    ))
}
