//! Well-separated pair decomposition over a net tree.
//!
//! Every unordered pair of distinct stored points is split by at least one
//! pair of subtrees `(A, B)` with `max(diam A, diam B) <= d(A, B) / s`. Built
//! over the embedded points, each pair also carries the height statistics
//! used to size the nets of the fast structure.

use std::sync::Arc;

use serde::Serialize;

use crate::embedding::{dist_b, embed_all, EmbeddedMetric, EmbeddedPoint};
use crate::error::{Error, Result};
use crate::metric::{Metric, MetricInstance};
use crate::net_tree::{NetTree, NodeId};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WspdPair {
    pub a_node: NodeId,
    pub b_node: NodeId,
    pub rep_a: usize,
    pub rep_b: usize,
    /// Product-space distance between the representatives.
    pub ell: f64,
    pub hmax_a: f64,
    pub hmax_b: f64,
    /// `ell + hmax_a + hmax_b`.
    pub big_l: f64,
}

pub struct Wspd {
    pub pairs: Vec<WspdPair>,
    pub separation: f64,
    tree: NetTree<EmbeddedPoint, EmbeddedMetric>,
}

fn separated(s: f64, d: f64, ru: f64, rv: f64) -> bool {
    s * 2.0 * ru.max(rv) <= d - ru - rv
}

/// Pairs of tree nodes forming an `s`-separated decomposition of the stored
/// points. Coincident points end up as a pair of single-point leaves.
pub fn decompose<T, M: Metric<T>>(tree: &NetTree<T, M>, s: f64) -> Result<Vec<(NodeId, NodeId)>> {
    if !(s >= 1.0 && s.is_finite()) {
        return Err(Error::InvalidSeparation(s));
    }
    let mut out = Vec::new();
    let mut stack: Vec<(NodeId, NodeId)> = Vec::new();
    for id in tree.node_ids() {
        let children = &tree.node(id).children;
        for (i, &u) in children.iter().enumerate() {
            for &v in &children[i + 1..] {
                stack.push((u, v));
            }
        }
        while let Some((u, v)) = stack.pop() {
            let (nu, nv) = (tree.node(u), tree.node(v));
            let d = tree
                .metric()
                .distance(tree.item(nu.rep), tree.item(nv.rep));
            if (nu.is_leaf() && nv.is_leaf()) || separated(s, d, nu.radius, nv.radius) {
                out.push((u, v));
                continue;
            }
            let split_u = if nu.is_leaf() {
                false
            } else if nv.is_leaf() {
                true
            } else {
                nu.radius >= nv.radius
            };
            let (split, other) = if split_u { (nu, v) } else { (nv, u) };
            for &c in split.children.iter().rev() {
                if split_u {
                    stack.push((c, other));
                } else {
                    stack.push((other, c));
                }
            }
        }
    }
    Ok(out)
}

/// Maximum of `f` over every subtree, indexed by node id.
pub fn subtree_max<T, M: Metric<T>>(tree: &NetTree<T, M>, f: impl Fn(&T) -> f64) -> Vec<f64> {
    let mut out = vec![f64::NEG_INFINITY; tree.nodes().len()];
    for i in (0..out.len()).rev() {
        let node = &tree.nodes()[i];
        out[i] = if node.is_leaf() {
            f(tree.item(node.rep))
        } else {
            node.children
                .iter()
                .map(|c| out[c.0])
                .fold(f64::NEG_INFINITY, f64::max)
        };
    }
    out
}

pub fn compute_pair_stats(
    tree: &NetTree<EmbeddedPoint, EmbeddedMetric>,
    a: NodeId,
    b: NodeId,
    hmax: &[f64],
) -> WspdPair {
    let (rep_a, rep_b) = (tree.node(a).rep, tree.node(b).rep);
    let ell = dist_b(&tree.metric().0, tree.item(rep_a), tree.item(rep_b));
    WspdPair {
        a_node: a,
        b_node: b,
        rep_a,
        rep_b,
        ell,
        hmax_a: hmax[a.0],
        hmax_b: hmax[b.0],
        big_l: ell + hmax[a.0] + hmax[b.0],
    }
}

impl Wspd {
    /// Decomposition of the given product-space points.
    pub fn from_embedded(
        instance: Arc<MetricInstance>,
        points: Vec<EmbeddedPoint>,
        separation: f64,
    ) -> Result<Self> {
        if !(separation >= 1.0 && separation.is_finite()) {
            return Err(Error::InvalidSeparation(separation));
        }
        let tree = NetTree::build(points, EmbeddedMetric(instance))?;
        let raw = decompose(&tree, separation)?;
        let hmax = subtree_max(&tree, |p| p.height);
        let pairs = raw
            .into_iter()
            .map(|(a, b)| compute_pair_stats(&tree, a, b, &hmax))
            .collect();
        Ok(Self {
            pairs,
            separation,
            tree,
        })
    }

    pub fn tree(&self) -> &NetTree<EmbeddedPoint, EmbeddedMetric> {
        &self.tree
    }

    /// Data point ids of the canonical set of `node`.
    pub fn members(&self, node: NodeId) -> Vec<usize> {
        self.tree
            .subtree(node)
            .iter()
            .map(|&i| self.tree.item(i).source.unwrap_or(i))
            .collect()
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

/// Decomposition of the embedded data set of `instance`.
pub fn build_wspd(instance: &Arc<MetricInstance>, separation: f64) -> Result<Wspd> {
    Wspd::from_embedded(instance.clone(), embed_all(instance), separation)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metric::{euclidean, AffineFlat, Euclidean, SubspaceOracle};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn brute_check<T, M: Metric<T>>(tree: &NetTree<T, M>, pairs: &[(NodeId, NodeId)], s: f64) {
        let n = tree.len();
        let mut covered = vec![false; n * n];
        for &(a, b) in pairs {
            let (sa, sb) = (tree.subtree(a), tree.subtree(b));
            let m = tree.metric();
            let diam = |set: &[usize]| {
                let mut best: f64 = 0.0;
                for &x in set {
                    for &y in set {
                        best = best.max(m.distance(tree.item(x), tree.item(y)));
                    }
                }
                best
            };
            let mut gap = f64::INFINITY;
            for &x in sa {
                for &y in sb {
                    assert_ne!(x, y);
                    gap = gap.min(m.distance(tree.item(x), tree.item(y)));
                    covered[x * n + y] = true;
                    covered[y * n + x] = true;
                }
            }
            assert!(diam(sa).max(diam(sb)) <= gap / s + 1e-9);
        }
        for x in 0..n {
            for y in 0..n {
                if x != y {
                    assert!(covered[x * n + y], "pair ({x}, {y}) not separated");
                }
            }
        }
    }

    #[test]
    fn two_points_one_pair() {
        let tree = NetTree::build(vec![0.0, 5.0], Euclidean).unwrap();
        let pairs = decompose(&tree, 8.0).unwrap();
        assert_eq!(pairs.len(), 1);
        brute_check(&tree, &pairs, 8.0);
    }

    #[test]
    fn two_clusters_on_a_line() {
        let tree = NetTree::build(vec![0.0, 1.0, 100.0, 101.0], Euclidean).unwrap();
        let pairs = decompose(&tree, 8.0).unwrap();
        brute_check(&tree, &pairs, 8.0);
        let mut sets: Vec<(Vec<usize>, Vec<usize>)> = pairs
            .iter()
            .map(|&(a, b)| {
                let mut sa = tree.subtree(a).to_vec();
                let mut sb = tree.subtree(b).to_vec();
                sa.sort();
                sb.sort();
                if sa > sb {
                    (sb, sa)
                } else {
                    (sa, sb)
                }
            })
            .collect();
        sets.sort();
        assert_eq!(
            sets,
            vec![
                (vec![0], vec![1]),
                (vec![0, 1], vec![2, 3]),
                (vec![2], vec![3]),
            ]
        );
    }

    #[test]
    fn random_plane_exhaustive() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let pts: Vec<Vec<f64>> = (0..500)
            .map(|_| vec![rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)])
            .collect();
        let tree = NetTree::build(pts, Euclidean).unwrap();
        let pairs = decompose(&tree, 8.0).unwrap();
        brute_check(&tree, &pairs, 8.0);
    }

    #[test]
    fn coincident_points_form_a_pair() {
        let tree = NetTree::build(vec![3.0, 3.0, 7.0], Euclidean).unwrap();
        let pairs = decompose(&tree, 2.0).unwrap();
        brute_check(&tree, &pairs, 2.0);
    }

    #[test]
    fn rejects_small_separation() {
        let tree = NetTree::build(vec![0.0, 1.0], Euclidean).unwrap();
        assert!(matches!(decompose(&tree, 0.5), Err(Error::InvalidSeparation(_))));
    }

    #[test]
    fn pair_stats_arithmetic() {
        let line: Arc<dyn SubspaceOracle> =
            Arc::new(AffineFlat::new(vec![0.0, 0.0], vec![vec![1.0, 0.0]]).unwrap());
        let inst = Arc::new(MetricInstance::euclidean(vec![vec![0.0, 3.0], vec![10.0, 1.0]], line).unwrap());
        let w = build_wspd(&inst, 8.0).unwrap();
        assert_eq!(w.len(), 1);
        let p = &w.pairs[0];
        assert_eq!(p.ell, 12.0);
        assert_eq!(p.big_l, 16.0);
        let mut h = [p.hmax_a, p.hmax_b];
        h.sort_by(f64::total_cmp);
        assert_eq!(h, [1.0, 3.0]);
    }

    #[test]
    fn stats_on_subspace_points() {
        let plane: Arc<dyn SubspaceOracle> = Arc::new(
            AffineFlat::new(vec![0.0; 3], vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0]]).unwrap(),
        );
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let pts: Vec<Vec<f64>> = (0..60)
            .map(|_| vec![rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0), 0.0])
            .collect();
        let inst = Arc::new(MetricInstance::euclidean(pts, plane).unwrap());
        let w = build_wspd(&inst, 8.0).unwrap();
        for p in &w.pairs {
            assert_eq!(p.big_l, p.ell);
            let a = &w.tree().item(p.rep_a).base;
            let b = &w.tree().item(p.rep_b).base;
            assert_eq!(p.ell, euclidean(a, b));
            assert!(w.members(p.a_node).iter().all(|m| !w.members(p.b_node).contains(m)));
        }
    }
}
