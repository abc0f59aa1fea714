//! Constant-factor nearest neighbor for queries on the subspace.
//!
//! The data set is embedded into the product space and stored in a net tree;
//! a query is embedded the same way and answered by a 2-approximate search in
//! the tree. For queries on the subspace the result is a 6-approximate
//! nearest neighbor in the original metric.

use std::sync::Arc;

use serde::Serialize;

use crate::embedding::{embed, embed_all, EmbeddedMetric, EmbeddedPoint};
use crate::error::Result;
use crate::metric::{MetricInstance, PointId};
use crate::net_tree::{NetTree, Neighbor};

/// A returned data point and its distance to the query.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Answer {
    pub id: PointId,
    pub distance: f64,
}

/// Common query interface of the index structures.
pub trait AnnIndex: Send + Sync {
    fn query(&self, q: &[f64]) -> Answer;
    fn instance(&self) -> &Arc<MetricInstance>;
}

pub struct ConstAnnIndex {
    instance: Arc<MetricInstance>,
    tree: NetTree<EmbeddedPoint, EmbeddedMetric>,
}

impl ConstAnnIndex {
    pub fn build(instance: Arc<MetricInstance>) -> Result<Self> {
        let embedded = embed_all(&instance);
        let tree = NetTree::build(embedded, EmbeddedMetric(instance.clone()))?;
        Ok(Self { instance, tree })
    }

    pub fn tree(&self) -> &NetTree<EmbeddedPoint, EmbeddedMetric> {
        &self.tree
    }

    pub fn embedded(&self) -> &[EmbeddedPoint] {
        self.tree.items()
    }

    /// 2-approximate neighbor of `q` in the product space.
    pub fn query_embedded(&self, q: &EmbeddedPoint) -> Neighbor {
        self.tree.ann_query(q, 2.0)
    }
}

impl AnnIndex for ConstAnnIndex {
    fn query(&self, q: &[f64]) -> Answer {
        let qe = embed(&self.instance, q, None);
        let nb = self.query_embedded(&qe);
        let id = self.tree.item(nb.item).source.unwrap_or(nb.item);
        Answer {
            id,
            distance: self.instance.distance(q, &self.instance.point(id).coords),
        }
    }

    fn instance(&self) -> &Arc<MetricInstance> {
        &self.instance
    }
}
