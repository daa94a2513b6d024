use serde::{Deserialize, Serialize};

use super::execute::ExecutionResult;
use crate::error::{Error, Result};

/// Per-scene scores.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub success: bool,
    pub completion: f64,
    pub step_ratio: f64,
    /// Mean over placed objects, meters.
    pub pos_error: f64,
    pub orn_error: f64,
}

impl MetricsReport {
    pub fn of(r: &ExecutionResult) -> Self {
        let n = r.n.max(1) as f64;
        let placed: Vec<_> = r.errors.iter().flatten().collect();
        let within = placed.iter().filter(|e| e.within_tolerance()).count();
        let mean = |f: &dyn Fn(&super::execute::ObjectError) -> f64| {
            if placed.is_empty() {
                0.0
            } else {
                placed.iter().map(|e| f(e)).sum::<f64>() / placed.len() as f64
            }
        };
        MetricsReport {
            success: !r.circular_dependency && within == r.n,
            completion: if r.n == 0 { 1.0 } else { within as f64 / n },
            step_ratio: r.steps as f64 / n,
            pos_error: mean(&|e| e.pos),
            orn_error: mean(&|e| e.orn),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    /// Population statistics; `None` for an empty sample.
    pub fn of(xs: &[f64]) -> Option<Self> {
        if xs.is_empty() {
            return None;
        }
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        Some(MeanStd { mean, std: var.sqrt() })
    }
}

/// Scores over a set of scenes. Steps and pose errors cover successful scenes only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub scenes: usize,
    pub successes: usize,
    pub success_rate: f64,
    pub completion: MeanStd,
    pub step_ratio: Option<MeanStd>,
    pub pos_error: Option<MeanStd>,
    pub orn_error: Option<MeanStd>,
    pub circular_dependencies: usize,
    pub budget_exhausted: usize,
}

pub fn evaluate(results: &[ExecutionResult]) -> Result<Aggregate> {
    if results.is_empty() {
        return Err(Error::InvalidArgument("no results to evaluate".into()));
    }
    let m: Vec<MetricsReport> = results.iter().map(MetricsReport::of).collect();
    let ok: Vec<&MetricsReport> = m.iter().filter(|r| r.success).collect();
    let field = |f: fn(&MetricsReport) -> f64| MeanStd::of(&ok.iter().map(|r| f(r)).collect::<Vec<_>>());
    Ok(Aggregate {
        scenes: m.len(),
        successes: ok.len(),
        success_rate: ok.len() as f64 / m.len() as f64,
        completion: MeanStd::of(&m.iter().map(|r| r.completion).collect::<Vec<_>>()).expect("nonempty"),
        step_ratio: field(|r| r.step_ratio),
        pos_error: field(|r| r.pos_error),
        orn_error: field(|r| r.orn_error),
        circular_dependencies: results.iter().filter(|r| r.circular_dependency).count(),
        budget_exhausted: results.iter().filter(|r| r.budget_exhausted).count(),
    })
}

/// Inclusive range of object or level counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bucket {
    pub lo: usize,
    pub hi: usize,
    /// `None` when no scene falls in the range.
    pub metrics: Option<Aggregate>,
}

pub const OBJECT_BUCKETS: [(usize, usize); 3] = [(8, 10), (11, 14), (15, 20)];
pub const LEVEL_BUCKETS: [(usize, usize); 5] = [(1, 1), (2, 2), (3, 3), (4, 4), (5, 5)];

/// Aggregates per bucket of `key(result)`.
pub fn bucketize(results: &[ExecutionResult], ranges: &[(usize, usize)], key: impl Fn(&ExecutionResult) -> usize) -> Vec<Bucket> {
    ranges
        .iter()
        .map(|&(lo, hi)| {
            let sel: Vec<ExecutionResult> = results
                .iter()
                .filter(|r| (lo..=hi).contains(&key(r)))
                .cloned()
                .collect();
            Bucket {
                lo,
                hi,
                metrics: evaluate(&sel).ok(),
            }
        })
        .collect()
}
