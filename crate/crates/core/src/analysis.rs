//! Post-hoc metrics over search traces: Pareto-front hypervolume, win
//! ratios against a baseline front, and per-trace summary rows.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::search::{pareto_archive, SearchTrace};
use crate::store::Outcome;

/// Result of a 2-D hypervolume computation: the dominated area plus the
/// indices of input points that failed to dominate the reference and were
/// excluded.
#[derive(Debug, Clone, PartialEq)]
pub struct HvResult {
    pub area: f64,
    pub excluded: Vec<usize>,
}

/// Area dominated by `points` (quality maximized, evaluation time minimized)
/// relative to `reference = (quality_ref, et_ref)`, by a sorted sweep.
/// Points that do not strictly dominate the reference are excluded.
pub fn hypervolume_2d(points: &[(f64, f64)], reference: (f64, f64)) -> HvResult {
    let (q_ref, et_ref) = reference;
    let mut excluded = Vec::new();
    let mut kept: Vec<(f64, f64)> = Vec::new();
    for (i, &(q, et)) in points.iter().enumerate() {
        if q > q_ref && et < et_ref {
            kept.push((q, et));
        } else {
            excluded.push(i);
        }
    }
    // sweep quality downward, tracking the best (lowest) ET seen so far;
    // dominated points contribute nothing through the prefix minimum
    kept.sort_by(|a, b| {
        b.0.partial_cmp(&a.0)
            .unwrap()
            .then(a.1.partial_cmp(&b.1).unwrap())
    });
    let mut area = 0.0;
    let mut best_et = f64::INFINITY;
    for (i, &(q, et)) in kept.iter().enumerate() {
        best_et = best_et.min(et);
        let next_q = kept.get(i + 1).map_or(q_ref, |p| p.0);
        area += (q - next_q) * (et_ref - best_et);
    }
    HvResult { area, excluded }
}

/// Comparison of a trace against a baseline Pareto front.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrontComparison {
    pub baseline_front: Vec<(f64, f64)>,
    /// Successful evaluations not strictly dominated by any baseline point.
    pub wins: u64,
    /// Successful evaluations in the trace.
    pub total: u64,
}

impl FrontComparison {
    pub fn ratio(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.wins as f64 / self.total as f64
        }
    }
}

fn strictly_dominates(a: (f64, f64), b: (f64, f64)) -> bool {
    a.0 >= b.0 && a.1 <= b.1 && (a.0 > b.0 || a.1 < b.1)
}

/// Count the trace's successes that no baseline-front point strictly
/// dominates. Ties sit on the front and count as wins.
pub fn compare_to_front(
    trace: &SearchTrace,
    baseline_front: &[(f64, f64)],
) -> Result<FrontComparison> {
    for (i, &a) in baseline_front.iter().enumerate() {
        for &b in &baseline_front[i + 1..] {
            if strictly_dominates(a, b) || strictly_dominates(b, a) {
                return Err(Error::Invalid("baseline front is not non-dominated".into()));
            }
        }
    }
    let mut wins = 0;
    let mut total = 0;
    for record in &trace.records {
        if let Outcome::Success(m) = &record.outcome {
            if let Some(q) = m.primary_quality() {
                total += 1;
                let point = (q, m.evaluation_time());
                if !baseline_front.iter().any(|&b| strictly_dominates(b, point)) {
                    wins += 1;
                }
            }
        }
    }
    Ok(FrontComparison {
        baseline_front: baseline_front.to_vec(),
        wins,
        total,
    })
}

pub fn win_ratio(trace: &SearchTrace, baseline_front: &[(f64, f64)]) -> Result<f64> {
    Ok(compare_to_front(trace, baseline_front)?.ratio())
}

/// Table-row summary of one trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub n_eval: u64,
    pub error_ratio: f64,
    pub max_quality: Option<f64>,
    pub mean_quality: Option<f64>,
    pub min_et: Option<f64>,
    pub mean_et: Option<f64>,
    pub hypervolume: Option<f64>,
}

/// Summarize a trace. Quality and evaluation-time statistics cover
/// successful evaluations only; failures show up in the error ratio. The
/// optional reference computes hypervolume over the trace's Pareto archive.
pub fn summarize(trace: &SearchTrace, hv_reference: Option<(f64, f64)>) -> Summary {
    let mut qualities = Vec::new();
    let mut times = Vec::new();
    for record in &trace.records {
        if let Outcome::Success(m) = &record.outcome {
            times.push(m.evaluation_time());
            if let Some(q) = m.primary_quality() {
                qualities.push(q);
            }
        }
    }
    let n_eval = trace.records.len() as u64;
    let failures = n_eval - times.len() as u64;
    let mean = |xs: &[f64]| xs.iter().sum::<f64>() / xs.len() as f64;
    let hypervolume =
        hv_reference.map(|reference| hypervolume_2d(&pareto_archive(trace), reference).area);
    Summary {
        n_eval,
        error_ratio: if n_eval == 0 {
            0.0
        } else {
            failures as f64 / n_eval as f64
        },
        max_quality: qualities.iter().cloned().reduce(f64::max),
        mean_quality: (!qualities.is_empty()).then(|| mean(&qualities)),
        min_et: times.iter().cloned().reduce(f64::min),
        mean_et: (!times.is_empty()).then(|| mean(&times)),
        hypervolume,
    }
}

/// Hypervolumes of several traces on a shared normalized scale: quality is
/// already in \[0,1\]; evaluation time is min-max normalized over the whole
/// comparison group and the reference sits at (quality 0, normalized ET 1).
pub fn normalized_group_hypervolumes(traces: &[&SearchTrace]) -> Vec<f64> {
    let mut all_et = Vec::new();
    for t in traces {
        for r in &t.records {
            if let Outcome::Success(m) = &r.outcome {
                all_et.push(m.evaluation_time());
            }
        }
    }
    let lo = all_et.iter().cloned().reduce(f64::min).unwrap_or(0.0);
    let hi = all_et.iter().cloned().reduce(f64::max).unwrap_or(1.0);
    let span = hi - lo;
    let normalize = |et: f64| if span > 0.0 { (et - lo) / span } else { 0.0 };
    traces
        .iter()
        .map(|t| {
            let front: Vec<(f64, f64)> = pareto_archive(t)
                .into_iter()
                .map(|(q, et)| (q, normalize(et)))
                .collect();
            hypervolume_2d(&front, (0.0, 1.0)).area
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Plot-data documents
// ---------------------------------------------------------------------------

/// One x/y series; for Pareto plots x is evaluation time, y is quality.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlotSeries {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

/// Probability-per-method bars for one prior or state.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MarginalSeries {
    pub label: String,
    pub methods: Vec<String>,
    pub probs: Vec<f64>,
}

/// Plot-ready document emitted next to report tables.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct PlotData {
    pub pareto_fronts: Vec<PlotSeries>,
    pub method_marginals: Vec<MarginalSeries>,
}
