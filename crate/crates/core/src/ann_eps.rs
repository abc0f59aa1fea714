//! `(1+eps)`-approximate nearest neighbor for queries on the subspace.
//!
//! Around the projection of every data point `p` with height `h > 0` we place
//! a net of `ball(project(p), c1 h / eps)` on the subspace with spacing
//! `eps h / (20 c1)`. Each net point remembers the distance to `p`, its reach.
//! All net points go into one net tree annotated with the minimum reach of
//! every subtree. A query first finds a 6-approximate distance `delta`, then
//! extracts a net of the tree around the query and compares the
//! minimum-reach sources of the extracted subtrees.

use std::collections::HashMap;
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::ann_const::{AnnIndex, Answer, ConstAnnIndex};
use crate::error::{check_eps, Error, Result};
use crate::metric::subspace::coord_bits;
use crate::metric::{MetricInstance, PointId};
use crate::net_tree::NetTree;

pub const DEFAULT_C1: f64 = 40.0;

/// Heights below this fraction of the point's scale count as zero.
const ZERO_HEIGHT_REL: f64 = 1e-12;

/// A point of the subspace and the distance to the data point it serves.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReachPoint {
    pub pos: Vec<f64>,
    pub reach: f64,
    pub source: PointId,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct EpsBuildStats {
    /// Net points generated before merging coincident positions.
    pub generated: usize,
    pub zero_height: usize,
    pub reach_points: usize,
}

pub struct EpsAnnIndex {
    const_index: ConstAnnIndex,
    reach_points: Vec<ReachPoint>,
    tree: NetTree<Vec<f64>, Arc<MetricInstance>>,
    eps: f64,
    c1: f64,
    stats: EpsBuildStats,
}

pub(crate) fn is_zero_height(h: f64, base: &[f64]) -> bool {
    let scale = base.iter().map(|x| x * x).sum::<f64>().sqrt().max(1.0);
    h <= ZERO_HEIGHT_REL * scale
}

fn better(a: (f64, PointId), b: (f64, PointId)) -> bool {
    a.0 < b.0 || (a.0 == b.0 && a.1 < b.1)
}

type Generated = Vec<(Vec<u64>, ReachPoint)>;

fn reach_net(instance: &MetricInstance, id: PointId, eps: f64, c1: f64) -> Result<(Generated, bool)> {
    let coords = &instance.point(id).coords;
    let base = instance.project(coords);
    let h = instance.distance(coords, &base);
    if is_zero_height(h, &base) {
        let key = coord_bits(&base);
        return Ok((vec![(key, ReachPoint { pos: base, reach: h, source: id })], true));
    }
    let outer = c1 * h / eps;
    let inner = eps * h / (20.0 * c1);
    let net = instance.subspace_net(&base, outer, inner)?;
    let mut out = Vec::with_capacity(net.len() + 1);
    // the projection itself is always a useful witness
    out.push((coord_bits(&base), ReachPoint { pos: base, reach: h, source: id }));
    for pos in net {
        let reach = instance.distance(&pos, coords);
        out.push((coord_bits(&pos), ReachPoint { pos, reach, source: id }));
    }
    Ok((out, false))
}

impl EpsAnnIndex {
    pub fn build(instance: Arc<MetricInstance>, eps: f64) -> Result<Self> {
        Self::build_with(instance, eps, DEFAULT_C1)
    }

    pub fn build_with(instance: Arc<MetricInstance>, eps: f64, c1: f64) -> Result<Self> {
        check_eps(eps, 0.0, 1.0)?;
        if !(c1.is_finite() && c1 >= 1.0) {
            return Err(Error::InvalidParameter(format!("c1 must be at least 1, got {c1}")));
        }
        let const_index = ConstAnnIndex::build(instance.clone())?;
        let mut stats = EpsBuildStats::default();
        let mut merged: HashMap<Vec<u64>, ReachPoint> = HashMap::new();
        let ids: Vec<PointId> = (0..instance.len()).collect();
        let batch = 4 * rayon::current_num_threads().max(1);
        for chunk in ids.chunks(batch) {
            let nets: Vec<Result<(Generated, bool)>> = chunk
                .par_iter()
                .map(|&id| reach_net(&instance, id, eps, c1))
                .collect();
            for net in nets {
                let (net, zero) = net?;
                stats.generated += net.len();
                stats.zero_height += zero as usize;
                for (key, rp) in net {
                    match merged.get_mut(&key) {
                        Some(cur) if better((rp.reach, rp.source), (cur.reach, cur.source)) => *cur = rp,
                        Some(_) => {}
                        None => {
                            merged.insert(key, rp);
                        }
                    }
                }
            }
        }
        let mut keyed: Vec<(Vec<u64>, ReachPoint)> = merged.into_iter().collect();
        keyed.sort_by(|a, b| a.1.source.cmp(&b.1.source).then_with(|| a.0.cmp(&b.0)));
        let reach_points: Vec<ReachPoint> = keyed.into_iter().map(|(_, rp)| rp).collect();
        stats.reach_points = reach_points.len();
        log::debug!(
            "eps index: {} net points generated, {} after merging",
            stats.generated,
            stats.reach_points
        );
        let positions: Vec<Vec<f64>> = reach_points.iter().map(|r| r.pos.clone()).collect();
        let mut tree = NetTree::build(positions, instance.clone())?;
        let reach: Vec<(f64, usize)> = reach_points.iter().map(|r| (r.reach, r.source)).collect();
        tree.annotate_min_reach(&reach)?;
        Ok(Self {
            const_index,
            reach_points,
            tree,
            eps,
            c1,
            stats,
        })
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn c1(&self) -> f64 {
        self.c1
    }

    pub fn stats(&self) -> &EpsBuildStats {
        &self.stats
    }

    pub fn reach_points(&self) -> &[ReachPoint] {
        &self.reach_points
    }

    pub fn tree(&self) -> &NetTree<Vec<f64>, Arc<MetricInstance>> {
        &self.tree
    }

    pub fn const_index(&self) -> &ConstAnnIndex {
        &self.const_index
    }

    /// Summary for inspection; reach points are listed only when asked.
    pub fn to_json(&self, with_points: bool) -> serde_json::Value {
        let mut v = serde_json::json!({
            "eps": self.eps,
            "c1": self.c1,
            "stats": self.stats,
            "tree_nodes": self.tree.nodes().len(),
        });
        if with_points {
            v["reach_points"] = serde_json::to_value(&self.reach_points).expect("serializable");
        }
        v
    }
}

impl AnnIndex for EpsAnnIndex {
    fn query(&self, q: &[f64]) -> Answer {
        let inst = self.const_index.instance();
        let mut best = self.const_index.query(q);
        let delta = best.distance;
        if delta == 0.0 {
            return best;
        }
        let net = self
            .tree
            .extract_net(&q.to_vec(), self.eps * delta / 20.0, 20.0 * delta)
            .expect("radii are positive");
        let mut seen = Vec::new();
        for e in net.entries {
            let entry = self.tree.node(e.node).min_reach.expect("annotated");
            let source = self.reach_points[entry.item].source;
            if source == best.id || seen.contains(&source) {
                continue;
            }
            seen.push(source);
            let d = inst.distance(q, &inst.point(source).coords);
            if better((d, source), (best.distance, best.id)) {
                best = Answer { id: source, distance: d };
            }
        }
        best
    }

    fn instance(&self) -> &Arc<MetricInstance> {
        self.const_index.instance()
    }
}
