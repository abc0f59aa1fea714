//! A compressed hierarchical net over a finite point set.
//!
//! Built top-down: a node at level `l` holds points within `2^l` of its
//! representative, and its children are a greedy `2^(l-1)`-net of those
//! points, the first child keeping the parent's representative. Levels whose
//! net would be a single point are skipped, so every internal node has at
//! least two children and the tree has fewer than `2n` nodes. Each node keeps
//! the exact maximum distance from its representative to its subtree, which
//! bounds the subtree diameter by twice that radius.
//!
//! Coincident points are kept as separate leaves under a zero-radius node.
//! Ties are broken by item index everywhere.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::Serialize;

use crate::error::{check_radii, Error, Result};
use crate::metric::subspace::{ceil_log2, pow2};
use crate::metric::Metric;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct NodeId(pub usize);

/// Minimum-reach point of a subtree: the item, its reach and its tie key.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ReachEntry {
    pub item: usize,
    pub reach: f64,
    pub key: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct NetNode {
    pub rep: usize,
    /// `radius <= 2^level`; `None` for zero-radius nodes.
    pub level: Option<i32>,
    /// Maximum distance from `rep` to any point of the subtree.
    pub radius: f64,
    pub children: Vec<NodeId>,
    pub parent: Option<NodeId>,
    #[serde(skip)]
    start: usize,
    #[serde(skip)]
    end: usize,
    pub min_reach: Option<ReachEntry>,
}

impl NetNode {
    pub fn subtree_diam_bound(&self) -> f64 {
        2.0 * self.radius
    }

    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end == self.start
    }
}

/// Result of a nearest-neighbor query.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Neighbor {
    pub item: usize,
    pub distance: f64,
}

/// One net point of an extraction and the node whose subtree it stands for.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NetEntry {
    pub node: NodeId,
    pub rep: usize,
    pub distance: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct AnnotatedNet {
    pub entries: Vec<NetEntry>,
}

pub struct NetTree<T, M> {
    items: Vec<T>,
    metric: M,
    nodes: Vec<NetNode>,
    order: Vec<usize>,
}

struct Frontier {
    bound: f64,
    node: NodeId,
    dist: f64,
}

impl PartialEq for Frontier {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Frontier {}

impl PartialOrd for Frontier {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Frontier {
    // min-heap on the lower bound
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .bound
            .total_cmp(&self.bound)
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl<T, M: Metric<T>> NetTree<T, M> {
    pub fn build(items: Vec<T>, metric: M) -> Result<Self> {
        if items.is_empty() {
            return Err(Error::EmptyInput);
        }
        let mut tree = Self {
            items,
            metric,
            nodes: Vec::new(),
            order: Vec::new(),
        };
        tree.construct();
        tree.assign_ranges();
        Ok(tree)
    }

    fn new_node(&mut self, rep: usize, parent: Option<NodeId>) -> NodeId {
        self.nodes.push(NetNode {
            rep,
            level: None,
            radius: 0.0,
            children: Vec::new(),
            parent,
            start: 0,
            end: 0,
            min_reach: None,
        });
        NodeId(self.nodes.len() - 1)
    }

    fn construct(&mut self) {
        let n = self.items.len();
        let root = self.new_node(0, None);
        let members: Vec<(usize, f64)> = (0..n)
            .map(|i| {
                let d = if i == 0 {
                    0.0
                } else {
                    self.metric.distance(&self.items[0], &self.items[i])
                };
                (i, d)
            })
            .collect();
        // each task: a node and its members, members[0] being the node rep
        let mut tasks = vec![(root, members)];
        while let Some((node, members)) = tasks.pop() {
            let radius = members.iter().map(|m| m.1).fold(0.0, f64::max);
            self.nodes[node.0].radius = radius;
            if members.len() == 1 {
                continue;
            }
            if radius == 0.0 {
                for &(item, _) in &members {
                    let leaf = self.new_node(item, Some(node));
                    self.nodes[node.0].children.push(leaf);
                }
                continue;
            }
            let level = ceil_log2(radius);
            self.nodes[node.0].level = Some(level);
            let child_radius = pow2(level - 1);
            let mut centers: Vec<(usize, Vec<(usize, f64)>)> = vec![(members[0].0, vec![(members[0].0, 0.0)])];
            for &(item, _) in &members[1..] {
                let mut placed = false;
                for (c, group) in centers.iter_mut() {
                    let d = self.metric.distance(&self.items[*c], &self.items[item]);
                    if d <= child_radius {
                        group.push((item, d));
                        placed = true;
                        break;
                    }
                }
                if !placed {
                    centers.push((item, vec![(item, 0.0)]));
                }
            }
            let mut pending = Vec::with_capacity(centers.len());
            for (rep, group) in centers {
                let child = self.new_node(rep, Some(node));
                self.nodes[node.0].children.push(child);
                pending.push((child, group));
            }
            // reversed so children are expanded in order
            tasks.extend(pending.into_iter().rev());
        }
    }

    fn assign_ranges(&mut self) {
        self.order.clear();
        self.order.reserve(self.items.len());
        enum Step {
            Enter(NodeId),
            Exit(NodeId),
        }
        let mut stack = vec![Step::Enter(self.root())];
        while let Some(step) = stack.pop() {
            match step {
                Step::Enter(id) => {
                    self.nodes[id.0].start = self.order.len();
                    if self.nodes[id.0].is_leaf() {
                        self.order.push(self.nodes[id.0].rep);
                        self.nodes[id.0].end = self.order.len();
                    } else {
                        stack.push(Step::Exit(id));
                        for &c in self.nodes[id.0].children.iter().rev() {
                            stack.push(Step::Enter(c));
                        }
                    }
                }
                Step::Exit(id) => self.nodes[id.0].end = self.order.len(),
            }
        }
    }

    pub fn root(&self) -> NodeId {
        NodeId(0)
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn items(&self) -> &[T] {
        &self.items
    }

    pub fn item(&self, i: usize) -> &T {
        &self.items[i]
    }

    pub fn metric(&self) -> &M {
        &self.metric
    }

    pub fn node(&self, id: NodeId) -> &NetNode {
        &self.nodes[id.0]
    }

    pub fn nodes(&self) -> &[NetNode] {
        &self.nodes
    }

    pub fn node_ids(&self) -> impl Iterator<Item = NodeId> {
        (0..self.nodes.len()).map(NodeId)
    }

    /// Items stored below `id`.
    pub fn subtree(&self, id: NodeId) -> &[usize] {
        let n = &self.nodes[id.0];
        &self.order[n.start..n.end]
    }

    /// A point within `c` times the nearest distance from `q` (`c >= 1`).
    pub fn ann_query(&self, q: &T, c: f64) -> Neighbor {
        assert!(c >= 1.0, "approximation factor must be at least 1, got {c}");
        let root = self.root();
        let rep = self.nodes[0].rep;
        let d = self.metric.distance(q, &self.items[rep]);
        let mut best = Neighbor {
            item: rep,
            distance: d,
        };
        let mut heap = BinaryHeap::new();
        heap.push(Frontier {
            bound: (d - self.nodes[0].radius).max(0.0),
            node: root,
            dist: d,
        });
        while let Some(top) = heap.pop() {
            if best.distance <= c * top.bound {
                break;
            }
            let node = &self.nodes[top.node.0];
            for &child_id in &node.children {
                let child = &self.nodes[child_id.0];
                let d = if child.rep == node.rep {
                    top.dist
                } else {
                    self.metric.distance(q, &self.items[child.rep])
                };
                if d < best.distance || (d == best.distance && child.rep < best.item) {
                    best = Neighbor {
                        item: child.rep,
                        distance: d,
                    };
                }
                let bound = (d - child.radius).max(0.0);
                if !child.is_leaf() && best.distance > c * bound {
                    heap.push(Frontier {
                        bound,
                        node: child_id,
                        dist: d,
                    });
                }
            }
        }
        best
    }

    pub fn nearest(&self, q: &T) -> Neighbor {
        self.ann_query(q, 1.0)
    }

    /// Nodes whose subtrees have diameter at most `inner` and jointly cover
    /// every stored point of `ball(q, outer)`; each entry's representative is
    /// within `inner` of the points it covers.
    pub fn extract_net(&self, q: &T, inner: f64, outer: f64) -> Result<AnnotatedNet> {
        check_radii(outer, inner)?;
        let mut entries = Vec::new();
        let root = self.root();
        let d = self.metric.distance(q, &self.items[self.nodes[0].rep]);
        let mut stack = vec![(root, d)];
        while let Some((id, d)) = stack.pop() {
            let node = &self.nodes[id.0];
            if d - node.radius > outer {
                continue;
            }
            if node.subtree_diam_bound() <= inner {
                entries.push(NetEntry {
                    node: id,
                    rep: node.rep,
                    distance: d,
                });
                continue;
            }
            for &child_id in node.children.iter().rev() {
                let child = &self.nodes[child_id.0];
                let dc = if child.rep == node.rep {
                    d
                } else {
                    self.metric.distance(q, &self.items[child.rep])
                };
                stack.push((child_id, dc));
            }
        }
        Ok(AnnotatedNet { entries })
    }

    /// Stores in every node the item of minimum `(reach, key)` below it.
    pub fn annotate_min_reach(&mut self, reach: &[(f64, usize)]) -> Result<()> {
        if reach.len() != self.items.len() {
            return Err(Error::PartialReach {
                expected: self.items.len(),
                got: reach.len(),
            });
        }
        if let Some(bad) = reach.iter().position(|r| !(r.0.is_finite() && r.0 >= 0.0)) {
            return Err(Error::InvalidReach(bad));
        }
        // children always have larger ids than their parent
        for i in (0..self.nodes.len()).rev() {
            let entry = if self.nodes[i].is_leaf() {
                let item = self.nodes[i].rep;
                ReachEntry {
                    item,
                    reach: reach[item].0,
                    key: reach[item].1,
                }
            } else {
                self.nodes[i]
                    .children
                    .iter()
                    .map(|c| self.nodes[c.0].min_reach.expect("child annotated"))
                    .min_by(|a, b| a.reach.total_cmp(&b.reach).then(a.key.cmp(&b.key)))
                    .expect("internal node has children")
            };
            self.nodes[i].min_reach = Some(entry);
        }
        Ok(())
    }

    /// Checks the covering, packing and partition invariants, returning a
    /// description of the first violation.
    pub fn check_invariants(&self) -> std::result::Result<(), String> {
        let mut seen = vec![false; self.items.len()];
        for (i, node) in self.nodes.iter().enumerate() {
            let pts = self.subtree(NodeId(i));
            if pts.is_empty() {
                return Err(format!("node {i} has an empty subtree"));
            }
            if node.is_leaf() {
                if pts != [node.rep] {
                    return Err(format!("leaf {i} does not store exactly its rep"));
                }
                if seen[node.rep] {
                    return Err(format!("item {} stored twice", node.rep));
                }
                seen[node.rep] = true;
            } else {
                if node.children.len() < 2 {
                    return Err(format!("internal node {i} has a single child"));
                }
                if self.nodes[node.children[0].0].rep != node.rep {
                    return Err(format!("first child of node {i} does not keep the rep"));
                }
                let covered: usize = node.children.iter().map(|c| self.nodes[c.0].len()).sum();
                if covered != pts.len() {
                    return Err(format!("children of node {i} do not partition its points"));
                }
            }
            if !pts.contains(&node.rep) {
                return Err(format!("rep of node {i} is not in its subtree"));
            }
            let tol = 1e-9 * (1.0 + node.radius);
            for &p in pts {
                let d = self.metric.distance(&self.items[node.rep], &self.items[p]);
                if d > node.radius + tol {
                    return Err(format!(
                        "item {p} at distance {d} exceeds radius {} of node {i}",
                        node.radius
                    ));
                }
            }
            if let Some(level) = node.level {
                if node.radius > pow2(level) {
                    return Err(format!("node {i} radius exceeds its level radius"));
                }
                let child_radius = pow2(level - 1);
                for (a, ca) in node.children.iter().enumerate() {
                    for cb in &node.children[a + 1..] {
                        let d = self.metric.distance(
                            &self.items[self.nodes[ca.0].rep],
                            &self.items[self.nodes[cb.0].rep],
                        );
                        if d <= child_radius {
                            return Err(format!("children of node {i} violate packing"));
                        }
                    }
                }
            } else if node.radius != 0.0 {
                return Err(format!("node {i} has no level but positive radius"));
            }
            for c in &node.children {
                if self.nodes[c.0].parent != Some(NodeId(i)) {
                    return Err(format!("parent link of node {} broken", c.0));
                }
            }
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(format!("item {missing} is not stored in any leaf"));
        }
        Ok(())
    }

    /// Structure dump for debugging; items are referenced by index.
    pub fn to_json(&self) -> serde_json::Value {
        let nodes: Vec<serde_json::Value> = self
            .nodes
            .iter()
            .enumerate()
            .map(|(i, n)| {
                serde_json::json!({
                    "id": i,
                    "rep": n.rep,
                    "level": n.level,
                    "radius": n.radius,
                    "children": n.children,
                    "size": n.len(),
                    "min_reach": n.min_reach,
                })
            })
            .collect();
        serde_json::json!({ "root": 0, "items": self.items.len(), "nodes": nodes })
    }
}
