//! The product space `M x R+` and the map `a -> (project(a), height(a))`.
//!
//! Distances in the product space are `d(base, base') + |height - height'|`.
//! For `x` on `M` and any `y` this is within a factor 3 of `d(x, y)`, and it
//! agrees with `d` exactly on `M x {0}`.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metric::{Metric, MetricInstance, PointId};

/// A point of the product space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmbeddedPoint {
    pub base: Vec<f64>,
    pub height: f64,
    /// Data point this was mapped from; `None` for queries.
    pub source: Option<PointId>,
}

/// Maps `a` to `(project(a), d(a, project(a)))`.
pub fn embed(instance: &MetricInstance, a: &[f64], source: Option<PointId>) -> EmbeddedPoint {
    let base = instance.project(a);
    let height = instance.distance(a, &base);
    EmbeddedPoint {
        base,
        height,
        source,
    }
}

/// Embeds every data point, in id order.
pub fn embed_all(instance: &MetricInstance) -> Vec<EmbeddedPoint> {
    instance
        .points()
        .iter()
        .map(|p| embed(instance, &p.coords, Some(p.id)))
        .collect()
}

pub fn dist_b(instance: &MetricInstance, u: &EmbeddedPoint, v: &EmbeddedPoint) -> f64 {
    instance.distance(&u.base, &v.base) + (u.height - v.height).abs()
}

/// Product-space distance as a tree metric.
#[derive(Clone, Debug)]
pub struct EmbeddedMetric(pub Arc<MetricInstance>);

impl Metric<EmbeddedPoint> for EmbeddedMetric {
    #[inline]
    fn distance(&self, a: &EmbeddedPoint, b: &EmbeddedPoint) -> f64 {
        dist_b(&self.0, a, b)
    }
}

/// Chart coordinates of `project(a)` followed by the height.
///
/// For an affine flat the Euclidean distance between `affine_embed(x)` and
/// `affine_embed(y)` equals `|x - y|` whenever `x` lies on the flat.
pub fn affine_embed(instance: &MetricInstance, a: &[f64]) -> Result<Vec<f64>> {
    let flat = instance.subspace().as_affine().ok_or(Error::NotAffine)?;
    let mut out = flat.chart(a);
    let base = flat.chart_point(&out);
    out.push(instance.distance(a, &base));
    Ok(out)
}
