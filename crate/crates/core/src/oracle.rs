//! Brute-force ground truth used by the tests, the benchmark and `verify`.
//!
//! Everything here is a plain linear or quadratic scan over the data and uses
//! uncounted distances, so running a check does not change benchmark counts.

use serde::Serialize;

use crate::metric::{Metric, MetricInstance, PointId};
use crate::net_tree::{AnnotatedNet, NetTree, NodeId};

/// Size above which `exact_diameter` logs a warning.
pub const DIAMETER_WARN_LIMIT: usize = 5000;

/// Exact nearest neighbor, ties broken by the smaller id.
pub fn exact_nn(instance: &MetricInstance, q: &[f64]) -> (PointId, f64) {
    let mut best_id = 0;
    let mut best = f64::INFINITY;
    for p in instance.points() {
        let d = instance.raw_distance(q, &p.coords);
        if d < best {
            best = d;
            best_id = p.id;
        }
    }
    (best_id, best)
}

/// Second, independently written scan: all distances first, then the argmin
/// over `(distance, id)` walking from the back.
pub fn exact_nn_alt(instance: &MetricInstance, q: &[f64]) -> (PointId, f64) {
    let ds: Vec<f64> = instance
        .points()
        .iter()
        .map(|p| instance.raw_distance(&p.coords, q))
        .collect();
    let mut i = ds.len();
    let mut arg = ds.len() - 1;
    while i > 0 {
        i -= 1;
        if ds[i] <= ds[arg] {
            arg = i;
        }
    }
    (arg, ds[arg])
}

/// `exact_nn` cross-checked against `exact_nn_alt`.
pub fn checked_nn(instance: &MetricInstance, q: &[f64]) -> (PointId, f64) {
    let a = exact_nn(instance, q);
    let b = exact_nn_alt(instance, q);
    assert_eq!(a, b, "oracle scans disagree at {q:?}");
    a
}

pub fn exact_diameter(instance: &MetricInstance) -> f64 {
    let n = instance.len();
    if n > DIAMETER_WARN_LIMIT {
        log::warn!("exact diameter over {n} points is quadratic");
    }
    let pts = instance.points();
    let mut best: f64 = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            best = best.max(instance.raw_distance(&pts[i].coords, &pts[j].coords));
        }
    }
    best
}

/// `answer <= bound * exact`; an exact distance of zero demands a zero answer.
pub fn ratio_ok(answer: f64, exact: f64, bound: f64) -> bool {
    assert!(bound >= 1.0, "bound must be at least 1");
    if exact == 0.0 {
        answer == 0.0
    } else {
        answer <= bound * exact
    }
}

/// `answer / exact`, defined as 1 when both vanish.
pub fn ratio(answer: f64, exact: f64) -> f64 {
    if exact == 0.0 {
        if answer == 0.0 {
            1.0
        } else {
            f64::INFINITY
        }
    } else {
        answer / exact
    }
}

pub fn verify_ratio(instance: &MetricInstance, q: &[f64], answer: PointId, bound: f64) -> bool {
    let d = instance.raw_distance(q, &instance.point(answer).coords);
    ratio_ok(d, exact_nn(instance, q).1, bound)
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct WspdReport {
    pub ok: bool,
    pub pairs: usize,
    pub points: usize,
    /// An unordered pair of stored items not separated by any pair.
    pub uncovered: Option<(usize, usize)>,
    /// Index of a pair violating separation, with its diameters and gap.
    pub separation_violation: Option<(usize, f64, f64)>,
    /// Index of a pair whose two sides share an item.
    pub overlap: Option<usize>,
}

pub fn verify_wspd<T, M: Metric<T>>(
    tree: &NetTree<T, M>,
    pairs: &[(NodeId, NodeId)],
    separation: f64,
) -> WspdReport {
    let n = tree.len();
    let m = tree.metric();
    let d = |a: usize, b: usize| m.distance(tree.item(a), tree.item(b));
    let mut report = WspdReport {
        pairs: pairs.len(),
        points: n,
        ..Default::default()
    };
    let mut covered = vec![false; n * n];
    for (k, &(a, b)) in pairs.iter().enumerate() {
        let (sa, sb) = (tree.subtree(a), tree.subtree(b));
        let mut gap = f64::INFINITY;
        for &x in sa {
            for &y in sb {
                if x == y && report.overlap.is_none() {
                    report.overlap = Some(k);
                }
                gap = gap.min(d(x, y));
                covered[x * n + y] = true;
                covered[y * n + x] = true;
            }
        }
        let diam = |s: &[usize]| {
            let mut best: f64 = 0.0;
            for (i, &x) in s.iter().enumerate() {
                for &y in &s[i + 1..] {
                    best = best.max(d(x, y));
                }
            }
            best
        };
        let dm = diam(sa).max(diam(sb));
        if dm * separation > gap * (1.0 + 1e-12) && report.separation_violation.is_none() {
            report.separation_violation = Some((k, dm, gap));
        }
    }
    'outer: for x in 0..n {
        for y in x + 1..n {
            if !covered[x * n + y] {
                report.uncovered = Some((x, y));
                break 'outer;
            }
        }
    }
    report.ok = report.uncovered.is_none()
        && report.separation_violation.is_none()
        && report.overlap.is_none();
    report
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct NetReport {
    pub ok: bool,
    pub samples: usize,
    pub net_size: usize,
    /// Largest sampled distance to the nearest net point.
    pub max_gap: f64,
    pub counterexample: Option<Vec<f64>>,
}

/// Samples points of the covered region and checks each is within `inner`
/// of some net point.
pub fn verify_net(
    net: &[Vec<f64>],
    inner: f64,
    samples: usize,
    mut sampler: impl FnMut() -> Option<Vec<f64>>,
    dist: impl Fn(&[f64], &[f64]) -> f64,
) -> NetReport {
    let mut report = NetReport {
        net_size: net.len(),
        ok: true,
        ..Default::default()
    };
    for _ in 0..samples {
        let Some(x) = sampler() else { continue };
        report.samples += 1;
        let gap = net.iter().map(|u| dist(&x, u)).fold(f64::INFINITY, f64::min);
        report.max_gap = report.max_gap.max(gap);
        if gap > inner && report.counterexample.is_none() {
            report.ok = false;
            report.counterexample = Some(x);
        }
    }
    report
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct ExtractionReport {
    pub ok: bool,
    pub entries: usize,
    pub in_ball: usize,
    /// A point of the ball farther than `inner` from every entry.
    pub uncovered_a: Option<usize>,
    pub size_bound: f64,
    /// A point of the ball in none of the entry subtrees.
    pub uncovered_c: Option<usize>,
    /// An entry whose subtree is wider than `inner`.
    pub wide_d: Option<(usize, f64)>,
}

/// Exhaustive check of an extracted net: covering by the entry points,
/// size at most `size_bound`, covering by the entry subtrees and the
/// diameter of every entry subtree.
pub fn verify_extraction<T, M: Metric<T>>(
    tree: &NetTree<T, M>,
    q: &T,
    inner: f64,
    outer: f64,
    net: &AnnotatedNet,
    size_bound: f64,
) -> ExtractionReport {
    let m = tree.metric();
    let mut report = ExtractionReport {
        entries: net.entries.len(),
        size_bound,
        ..Default::default()
    };
    let mut in_subtree = vec![false; tree.len()];
    for (k, e) in net.entries.iter().enumerate() {
        let sub = tree.subtree(e.node);
        let mut diam: f64 = 0.0;
        for (i, &x) in sub.iter().enumerate() {
            in_subtree[x] = true;
            for &y in &sub[i + 1..] {
                diam = diam.max(m.distance(tree.item(x), tree.item(y)));
            }
        }
        if diam > inner && report.wide_d.is_none() {
            report.wide_d = Some((k, diam));
        }
    }
    for p in 0..tree.len() {
        if m.distance(q, tree.item(p)) > outer {
            continue;
        }
        report.in_ball += 1;
        let near = net
            .entries
            .iter()
            .any(|e| m.distance(tree.item(e.rep), tree.item(p)) <= inner);
        if !near && report.uncovered_a.is_none() {
            report.uncovered_a = Some(p);
        }
        if !in_subtree[p] && report.uncovered_c.is_none() {
            report.uncovered_c = Some(p);
        }
    }
    report.ok = report.uncovered_a.is_none()
        && report.uncovered_c.is_none()
        && report.wide_d.is_none()
        && (report.entries as f64) <= size_bound;
    report
}
