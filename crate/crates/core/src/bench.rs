//! Benchmark runs of the index structures against a query stream.

use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::ann_const::{AnnIndex, Answer};
use crate::online_avd::{OnlineAvd, OnlineStats};
use crate::oracle::{exact_nn, ratio, ratio_ok};

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct RatioSummary {
    pub count: usize,
    pub max: f64,
    pub mean: f64,
    pub p99: f64,
}

pub fn summarize(ratios: &[f64]) -> RatioSummary {
    if ratios.is_empty() {
        return RatioSummary::default();
    }
    let mut sorted = ratios.to_vec();
    sorted.sort_by(f64::total_cmp);
    let k = ((0.99 * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    RatioSummary {
        count: sorted.len(),
        max: sorted[sorted.len() - 1],
        mean: sorted.iter().sum::<f64>() / sorted.len() as f64,
        p99: sorted[k - 1],
    }
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct OracleCheck {
    pub bound: f64,
    pub ratios: RatioSummary,
    pub failures: usize,
    pub first_failure: Option<usize>,
    pub pass: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct RegionCounts {
    pub first_type: u64,
    pub second_type: u64,
    pub cache_hits: u64,
    pub far_queries: u64,
    pub exact_hits: u64,
    pub cache_hit_rate: f64,
}

impl From<&OnlineStats> for RegionCounts {
    fn from(s: &OnlineStats) -> Self {
        Self {
            first_type: s.first_type,
            second_type: s.second_type,
            cache_hits: s.cache_hits,
            far_queries: s.far_queries,
            exact_hits: s.exact_hits,
            cache_hit_rate: s.cache_hit_rate(),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct BenchReport {
    pub index: String,
    pub config: serde_json::Value,
    pub n: usize,
    pub queries: usize,
    pub build_seconds: f64,
    pub build_distance_evals: u64,
    pub query_seconds: f64,
    pub query_distance_evals: u64,
    pub mean_query_distance_evals: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub oracle: Option<OracleCheck>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub regions: Option<RegionCounts>,
}

#[derive(Clone, Debug, Serialize)]
pub struct BuildInfo {
    pub index: String,
    pub config: serde_json::Value,
    pub seconds: f64,
    pub distance_evals: u64,
}

fn check(instance: &crate::metric::MetricInstance, queries: &[Vec<f64>], answers: &[f64], bound: f64) -> OracleCheck {
    let exact: Vec<f64> = queries.par_iter().map(|q| exact_nn(instance, q).1).collect();
    let ratios: Vec<f64> = answers.iter().zip(&exact).map(|(&a, &e)| ratio(a, e)).collect();
    let fails: Vec<usize> = answers
        .iter()
        .zip(&exact)
        .enumerate()
        .filter(|(_, (&a, &e))| !ratio_ok(a, e, bound))
        .map(|(i, _)| i)
        .collect();
    OracleCheck {
        bound,
        ratios: summarize(&ratios),
        failures: fails.len(),
        first_failure: fails.first().copied(),
        pass: fails.is_empty(),
    }
}

/// Answers every query (in parallel, results in query order) and optionally
/// checks each ratio against `bound`.
pub fn bench_index(
    build: BuildInfo,
    index: &dyn AnnIndex,
    queries: &[Vec<f64>],
    bound: Option<f64>,
) -> (BenchReport, Vec<Answer>) {
    let instance = index.instance().clone();
    let before = instance.evals();
    let start = Instant::now();
    let answers: Vec<Answer> = queries.par_iter().map(|q| index.query(q)).collect();
    let query_seconds = start.elapsed().as_secs_f64();
    let evals = instance.evals() - before;
    let dists: Vec<f64> = answers.iter().map(|a| a.distance).collect();
    let oracle = bound.map(|b| check(&instance, queries, &dists, b));
    let report = BenchReport {
        index: build.index,
        config: build.config,
        n: instance.len(),
        queries: queries.len(),
        build_seconds: build.seconds,
        build_distance_evals: build.distance_evals,
        query_seconds,
        query_distance_evals: evals,
        mean_query_distance_evals: evals as f64 / queries.len().max(1) as f64,
        oracle,
        regions: None,
    };
    (report, answers)
}

/// Runs the online structure sequentially over the stream.
pub fn bench_online(
    state: &mut OnlineAvd,
    queries: &[Vec<f64>],
    bound: Option<f64>,
) -> (BenchReport, Vec<Answer>) {
    let instance = state.instance().clone();
    let before = instance.evals();
    let start = Instant::now();
    let answers: Vec<Answer> = queries
        .iter()
        .map(|q| {
            let (id, _) = state.query(q);
            Answer {
                id,
                distance: instance.raw_distance(q, &instance.point(id).coords),
            }
        })
        .collect();
    let query_seconds = start.elapsed().as_secs_f64();
    let evals = instance.evals() - before;
    let dists: Vec<f64> = answers.iter().map(|a| a.distance).collect();
    let oracle = bound.map(|b| check(&instance, queries, &dists, b));
    let report = BenchReport {
        index: "online".into(),
        config: serde_json::json!({ "eps": state.eps(), "diam_approx": state.diam_approx() }),
        n: instance.len(),
        queries: queries.len(),
        build_seconds: 0.0,
        build_distance_evals: 0,
        query_seconds,
        query_distance_evals: evals,
        mean_query_distance_evals: evals as f64 / queries.len().max(1) as f64,
        oracle,
        regions: Some(RegionCounts::from(state.stats())),
    };
    (report, answers)
}
