//! Online approximate Voronoi cells built from the query stream.
//!
//! No subspace oracle is needed. Every fresh query computes an approximate
//! nearest neighbor by scanning the data and caches a region around itself
//! for which that answer stays valid; later queries falling into a cached
//! region are answered from it. Queries far from the data (relative to an
//! approximate diameter) are answered with a fixed anchor point.

use std::io::{BufRead, Write};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{check_eps, Error, Result};
use crate::metric::{MetricInstance, PointId};

pub const MAX_EPS: f64 = 0.2;

/// `ball(outer_center, outer_radius)` minus `ball(inner_center, inner_radius)`,
/// where the inner center itself is kept when `keep_inner_center` is set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AvdRegion {
    pub outer_center: Vec<f64>,
    pub outer_radius: f64,
    pub inner_center: Option<Vec<f64>>,
    pub inner_radius: f64,
    pub keep_inner_center: bool,
    pub answer_id: PointId,
}

impl AvdRegion {
    pub fn is_first_type(&self) -> bool {
        self.inner_center.is_none()
    }
}

pub fn region_contains(instance: &MetricInstance, region: &AvdRegion, x: &[f64]) -> bool {
    if instance.distance(x, &region.outer_center) > region.outer_radius {
        return false;
    }
    match &region.inner_center {
        None => true,
        Some(c) => {
            let d = instance.distance(x, c);
            if d > region.inner_radius {
                true
            } else {
                region.keep_inner_center && d == 0.0
            }
        }
    }
}

/// Strategy for the `(1+eps/10)`-approximate subqueries; `exclude` removes
/// every point within the given radius of the given center.
pub trait InnerSearch: Send + Sync {
    fn search(
        &self,
        instance: &MetricInstance,
        q: &[f64],
        exclude: Option<(&[f64], f64)>,
    ) -> Option<(PointId, f64)>;
}

/// Exact linear scan.
#[derive(Clone, Copy, Debug, Default)]
pub struct BruteForce;

impl InnerSearch for BruteForce {
    fn search(
        &self,
        instance: &MetricInstance,
        q: &[f64],
        exclude: Option<(&[f64], f64)>,
    ) -> Option<(PointId, f64)> {
        let mut best: Option<(PointId, f64)> = None;
        for p in instance.points() {
            if let Some((c, r)) = exclude {
                if instance.distance(&p.coords, c) <= r {
                    continue;
                }
            }
            let d = instance.distance(q, &p.coords);
            if best.is_none_or(|b| d < b.1) {
                best = Some((p.id, d));
            }
        }
        best
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct OnlineStats {
    pub queries: u64,
    pub cache_hits: u64,
    pub far_queries: u64,
    pub exact_hits: u64,
    pub first_type: u64,
    pub second_type: u64,
    /// `(queries issued, regions stored)` after each region creation.
    pub curve: Vec<(u64, u64)>,
}

impl OnlineStats {
    pub fn regions(&self) -> u64 {
        self.first_type + self.second_type
    }

    pub fn cache_hit_rate(&self) -> f64 {
        if self.queries == 0 {
            0.0
        } else {
            self.cache_hits as f64 / self.queries as f64
        }
    }

    /// Regions stored after the first `queries` queries.
    pub fn regions_after(&self, queries: u64) -> u64 {
        self.curve
            .iter()
            .take_while(|c| c.0 <= queries)
            .last()
            .map_or(0, |c| c.1)
    }
}

/// How a query was answered.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Far,
    CacheHit,
    Exact,
    FirstType,
    SecondType,
}

pub struct OnlineAvd {
    instance: Arc<MetricInstance>,
    regions: Vec<AvdRegion>,
    anchor: PointId,
    diam_approx: f64,
    eps: f64,
    stats: OnlineStats,
    inner: Box<dyn InnerSearch>,
}

impl OnlineAvd {
    pub fn new(instance: Arc<MetricInstance>, eps: f64) -> Result<Self> {
        Self::with_search(instance, eps, Box::new(BruteForce))
    }

    pub fn with_search(
        instance: Arc<MetricInstance>,
        eps: f64,
        inner: Box<dyn InnerSearch>,
    ) -> Result<Self> {
        check_eps(eps, 0.0, MAX_EPS)?;
        let anchor = 0;
        let a = &instance.point(anchor).coords;
        let diam_approx = instance
            .points()
            .iter()
            .map(|p| instance.distance(a, &p.coords))
            .fold(0.0, f64::max);
        Ok(Self {
            instance,
            regions: Vec::new(),
            anchor,
            diam_approx,
            eps,
            stats: OnlineStats::default(),
            inner,
        })
    }

    pub fn instance(&self) -> &Arc<MetricInstance> {
        &self.instance
    }

    pub fn anchor(&self) -> PointId {
        self.anchor
    }

    pub fn diam_approx(&self) -> f64 {
        self.diam_approx
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn regions(&self) -> &[AvdRegion] {
        &self.regions
    }

    pub fn stats(&self) -> &OnlineStats {
        &self.stats
    }

    pub fn query(&mut self, q: &[f64]) -> (PointId, Outcome) {
        let inst = self.instance.clone();
        self.stats.queries += 1;
        let eps = self.eps;
        let diam = self.diam_approx;

        let to_anchor = inst.distance(q, &inst.point(self.anchor).coords);
        if to_anchor >= 2.0 * diam + 2.0 * diam / eps {
            self.stats.far_queries += 1;
            return (self.anchor, Outcome::Far);
        }
        if let Some(r) = self.regions.iter().find(|r| region_contains(&inst, r, q)) {
            self.stats.cache_hits += 1;
            return (r.answer_id, Outcome::CacheHit);
        }

        let (ann, d1) = self
            .inner
            .search(&inst, q, None)
            .expect("instance is nonempty");
        if d1 == 0.0 {
            self.stats.exact_hits += 1;
            return (ann, Outcome::Exact);
        }
        let ann_pos = inst.point(ann).coords.clone();
        let excl = eps * d1 / 3.0;
        let (region, outcome) = match self.inner.search(&inst, q, Some((&ann_pos, excl))) {
            None => (
                AvdRegion {
                    outer_center: q.to_vec(),
                    outer_radius: diam / 4.0,
                    inner_center: None,
                    inner_radius: 0.0,
                    keep_inner_center: true,
                    answer_id: ann,
                },
                Outcome::FirstType,
            ),
            Some((_, d2)) => {
                let t = inst
                    .points()
                    .iter()
                    .map(|p| inst.distance(&ann_pos, &p.coords))
                    .filter(|&d| d <= excl)
                    .fold(0.0, f64::max);
                (
                    AvdRegion {
                        outer_center: q.to_vec(),
                        outer_radius: eps * d2 / 5.0,
                        inner_center: Some(ann_pos),
                        inner_radius: 5.0 * t / (4.0 * eps),
                        keep_inner_center: true,
                        answer_id: ann,
                    },
                    Outcome::SecondType,
                )
            }
        };
        match outcome {
            Outcome::FirstType => self.stats.first_type += 1,
            _ => self.stats.second_type += 1,
        }
        self.regions.push(region);
        self.stats
            .curve
            .push((self.stats.queries, self.regions.len() as u64));
        (ann, outcome)
    }

    /// One region per line, in creation order.
    pub fn save_regions<W: Write>(&self, mut out: W) -> Result<()> {
        for r in &self.regions {
            serde_json::to_writer(&mut out, r)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    /// Appends previously saved regions; answers must refer to data points.
    pub fn load_regions<R: BufRead>(&mut self, input: R) -> Result<usize> {
        let mut count = 0;
        for line in input.lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let r: AvdRegion = serde_json::from_str(&line)?;
            if r.answer_id >= self.instance.len() {
                return Err(Error::InvalidParameter(format!(
                    "region answer {} is not a data point",
                    r.answer_id
                )));
            }
            self.regions.push(r);
            count += 1;
        }
        Ok(count)
    }
}
