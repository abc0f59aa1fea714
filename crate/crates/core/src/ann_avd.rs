//! Approximate Voronoi structure on the subspace.
//!
//! An 8-separated pair decomposition of the embedded data set yields, for
//! every pair, a net on the subspace around the projections of both
//! representatives at scales proportional to the pair extent
//! `L = ell + hmax_a + hmax_b`. Each net point (center) is given an
//! approximate nearest data point at build time; a query returns the stored
//! answer of a 2-approximate nearest center.

use std::io::Write;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ann_const::{AnnIndex, Answer};
use crate::ann_eps::EpsAnnIndex;
use crate::error::{check_eps, Error, Result};
use crate::metric::{MetricInstance, NetRequest, PointId};
use crate::net_tree::NetTree;
use crate::wspd::{build_wspd, Wspd};

pub const DEFAULT_C2: f64 = 320.0;
pub const WSPD_SEPARATION: f64 = 8.0;
/// Above this many data points centers are associated through an eps index.
pub const BRUTE_FORCE_LIMIT: usize = 5000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CenterEntry {
    pub pos: Vec<f64>,
    pub answer_id: PointId,
    pub answer_dist: f64,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct AvdBuildStats {
    pub pairs: usize,
    pub centers: usize,
    pub brute_force_association: bool,
}

pub struct AvdIndex {
    instance: Arc<MetricInstance>,
    centers: Vec<CenterEntry>,
    tree: NetTree<Vec<f64>, Arc<MetricInstance>>,
    wspd: Option<Wspd>,
    eps: f64,
    c2: f64,
    stats: AvdBuildStats,
}

fn brute_nn(instance: &MetricInstance, q: &[f64]) -> (PointId, f64) {
    let mut best = (0, f64::INFINITY);
    for p in instance.points() {
        let d = instance.distance(q, &p.coords);
        if d < best.1 {
            best = (p.id, d);
        }
    }
    best
}

impl AvdIndex {
    pub fn build(instance: Arc<MetricInstance>, eps: f64) -> Result<Self> {
        Self::build_with(instance, eps, DEFAULT_C2)
    }

    /// Built at `eps / 5`, so answers are within `1 + eps` under the
    /// `1 + 5 eps` bound of the plain structure.
    pub fn build_for_target(instance: Arc<MetricInstance>, eps: f64) -> Result<Self> {
        check_eps(eps, 0.0, 1.0)?;
        Self::build(instance, eps / 5.0)
    }

    pub fn build_with(instance: Arc<MetricInstance>, eps: f64, c2: f64) -> Result<Self> {
        check_eps(eps, 0.0, 1.0)?;
        if !(c2.is_finite() && c2 >= 1.0) {
            return Err(Error::InvalidParameter(format!("c2 must be at least 1, got {c2}")));
        }
        let mut stats = AvdBuildStats::default();
        let (positions, wspd) = if instance.len() == 1 {
            (vec![instance.project(&instance.point(0).coords)], None)
        } else {
            let wspd = build_wspd(&instance, WSPD_SEPARATION)?;
            let tree = wspd.tree();
            let mut requests = Vec::with_capacity(2 * wspd.len());
            for pair in &wspd.pairs {
                if pair.big_l <= 0.0 {
                    let id = |i: usize| tree.item(i).source.unwrap_or(i);
                    return Err(Error::DegeneratePair {
                        a: id(pair.rep_a),
                        b: id(pair.rep_b),
                    });
                }
                let outer = c2 * pair.big_l / eps;
                let inner = eps * pair.big_l / c2;
                for rep in [pair.rep_a, pair.rep_b] {
                    requests.push(NetRequest {
                        center: tree.item(rep).base.clone(),
                        outer,
                        inner,
                    });
                }
            }
            stats.pairs = wspd.len();
            (instance.subspace().net_union(&requests)?, Some(wspd))
        };
        if positions.is_empty() {
            return Err(Error::EmptyInput);
        }
        stats.centers = positions.len();
        stats.brute_force_association = instance.len() <= BRUTE_FORCE_LIMIT;
        let answers: Vec<(PointId, f64)> = if stats.brute_force_association {
            positions.par_iter().map(|c| brute_nn(&instance, c)).collect()
        } else {
            let eps_index = EpsAnnIndex::build(instance.clone(), eps / 10.0)?;
            positions
                .par_iter()
                .map(|c| {
                    let a = eps_index.query(c);
                    (a.id, a.distance)
                })
                .collect()
        };
        let centers: Vec<CenterEntry> = positions
            .iter()
            .zip(&answers)
            .map(|(pos, &(answer_id, answer_dist))| CenterEntry {
                pos: pos.clone(),
                answer_id,
                answer_dist,
            })
            .collect();
        log::debug!("avd index: {} pairs, {} centers", stats.pairs, stats.centers);
        let tree = NetTree::build(positions, instance.clone())?;
        Ok(Self {
            instance,
            centers,
            tree,
            wspd,
            eps,
            c2,
            stats,
        })
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn c2(&self) -> f64 {
        self.c2
    }

    pub fn centers(&self) -> &[CenterEntry] {
        &self.centers
    }

    pub fn tree(&self) -> &NetTree<Vec<f64>, Arc<MetricInstance>> {
        &self.tree
    }

    pub fn wspd(&self) -> Option<&Wspd> {
        self.wspd.as_ref()
    }

    pub fn stats(&self) -> &AvdBuildStats {
        &self.stats
    }

    /// One JSON object per line: `{pos, answer_id, answer_dist}`.
    pub fn write_centers<W: Write>(&self, mut out: W) -> Result<()> {
        for c in &self.centers {
            serde_json::to_writer(&mut out, c)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }
}

impl AnnIndex for AvdIndex {
    fn query(&self, q: &[f64]) -> Answer {
        let nb = self.tree.ann_query(&q.to_vec(), 2.0);
        let id = self.centers[nb.item].answer_id;
        Answer {
            id,
            distance: self.instance.distance(q, &self.instance.point(id).coords),
        }
    }

    fn instance(&self) -> &Arc<MetricInstance> {
        &self.instance
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metric::{AffineFlat, Polyline, SubspaceOracle};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn segment(len: f64) -> Arc<dyn SubspaceOracle> {
        Arc::new(Polyline::new(vec![vec![0.0, 0.0], vec![len, 0.0]]).unwrap())
    }

    fn exact(inst: &MetricInstance, q: &[f64]) -> f64 {
        inst.points()
            .iter()
            .map(|p| inst.raw_distance(q, &p.coords))
            .fold(f64::INFINITY, f64::min)
    }

    #[test]
    fn single_point_single_center() {
        let inst = Arc::new(MetricInstance::euclidean(vec![vec![1.0, 2.0]], segment(4.0)).unwrap());
        let idx = AvdIndex::build(inst, 0.5).unwrap();
        assert_eq!(idx.centers().len(), 1);
        assert_eq!(idx.centers()[0].pos, vec![1.0, 0.0]);
        assert_eq!(idx.query(&[3.0, 0.0]).id, 0);
    }

    #[test]
    fn two_points_every_center_checked() {
        let inst = Arc::new(
            MetricInstance::euclidean(vec![vec![0.5, 1.0], vec![3.0, 0.5]], segment(4.0)).unwrap(),
        );
        let eps = 0.5;
        let idx = AvdIndex::build(inst.clone(), eps).unwrap();
        assert_eq!(idx.wspd().unwrap().len(), 1);
        for c in idx.centers() {
            let e = exact(&inst, &c.pos);
            assert!(c.answer_id <= 1);
            assert!(c.answer_dist <= (1.0 + eps / 10.0) * e);
        }
    }

    #[test]
    fn net_radii_ratio() {
        let inst = Arc::new(
            MetricInstance::euclidean(vec![vec![0.0, 1.0], vec![2.0, 1.0]], segment(2.0)).unwrap(),
        );
        let (eps, c2) = (0.5, 320.0);
        let idx = AvdIndex::build(inst, eps).unwrap();
        let pair = &idx.wspd().unwrap().pairs[0];
        let (outer, inner) = (c2 * pair.big_l / eps, eps * pair.big_l / c2);
        assert!(((outer / inner) / (c2 / eps).powi(2) - 1.0).abs() < 1e-12);
        assert_eq!(pair.big_l, 4.0);
    }

    #[test]
    fn far_point_example() {
        let line: Arc<dyn SubspaceOracle> =
            Arc::new(AffineFlat::new(vec![0.0, 0.0], vec![vec![1.0, 0.0]]).unwrap());
        let inst = Arc::new(
            MetricInstance::euclidean(vec![vec![0.0, 1.0], vec![100.0, 2.0]], line).unwrap(),
        );
        let idx = AvdIndex::build_with(inst, 0.2, 20.0).unwrap();
        assert!(idx.query(&[0.0, 0.0]).distance <= 2.0);
    }

    #[test]
    fn degenerate_pair_is_rejected() {
        let inst = Arc::new(
            MetricInstance::euclidean(vec![vec![1.0, 0.0], vec![1.0, 0.0]], segment(2.0)).unwrap(),
        );
        assert!(matches!(
            AvdIndex::build(inst, 0.5),
            Err(Error::DegeneratePair { .. })
        ));
    }

    #[test]
    fn random_queries_within_slack() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let pts: Vec<Vec<f64>> = (0..80)
            .map(|_| vec![rng.gen_range(0.0..2.0), rng.gen_range(0.5..1.0)])
            .collect();
        let inst = Arc::new(MetricInstance::euclidean(pts, segment(2.0)).unwrap());
        for eps in [0.5, 0.2] {
            let idx = AvdIndex::build(inst.clone(), eps).unwrap();
            let mut buf = Vec::new();
            idx.write_centers(&mut buf).unwrap();
            assert_eq!(buf.iter().filter(|&&b| b == b'\n').count(), idx.centers().len());
            for _ in 0..300 {
                let q = vec![rng.gen_range(0.0..2.0), 0.0];
                assert!(idx.query(&q).distance <= (1.0 + 5.0 * eps) * exact(&inst, &q));
            }
        }
    }
}
