//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on failure.
//!
//! Run with `cargo test -p subspace-ann --test acceptance`; pass criterion
//! numbers as arguments to run a subset.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use subspace_ann::ann_avd::AvdIndex;
use subspace_ann::ann_const::{AnnIndex, ConstAnnIndex};
use subspace_ann::ann_eps::EpsAnnIndex;
use subspace_ann::datagen::{generate, Generated, HeightDist, InstanceSpec, SubspaceKind};
use subspace_ann::embedding::{affine_embed, dist_b, embed};
use subspace_ann::metric::{euclidean, Euclidean};
use subspace_ann::net_tree::NetTree;
use subspace_ann::online_avd::OnlineAvd;
use subspace_ann::oracle::{checked_nn, exact_diameter, ratio, verify_extraction, verify_wspd};
use subspace_ann::wspd::build_wspd;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn inst(kind: SubspaceKind, d: usize, n: usize, queries: usize, h: (f64, f64), seed: u64) -> Generated {
    generate(&InstanceSpec {
        ambient_dim: d,
        n,
        queries,
        subspace: kind,
        heights: HeightDist { min: h.0, max: h.1 },
        seed,
    })
    .expect("valid spec")
}

fn families(n: usize, queries: usize) -> Vec<(&'static str, Generated)> {
    vec![
        ("affine", inst(SubspaceKind::Affine { k: 2, extent: 1.0 }, 20, n, queries, (0.0, 1.0), 101)),
        ("sphere", inst(SubspaceKind::Sphere { k: 3, radius: 1.0 }, 20, n, queries, (0.0, 1.0), 102)),
        (
            "curve",
            inst(SubspaceKind::Polyline { vertices: 10, length: 5.0 }, 20, n, queries, (0.0, 1.0), 103),
        ),
    ]
}

/// Largest answer/exact ratio of `index` over `queries`.
fn ratios(index: &dyn AnnIndex, queries: &[Vec<f64>]) -> Vec<f64> {
    let inst = index.instance();
    queries
        .iter()
        .map(|q| {
            let a = index.query(q);
            let e = checked_nn(inst, q).1;
            ratio(inst.raw_distance(q, &inst.point(a.id).coords), e)
        })
        .collect()
}

fn max(v: &[f64]) -> f64 {
    v.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn embedding_bounds() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut violations = 0;
    let mut worst: f64 = 0.0;
    for (_, g) in families(2000, 10_000) {
        let inst = &g.instance;
        for x in &g.queries {
            let y = &g.points[rng.gen_range(0..g.points.len())];
            let da = inst.raw_distance(x, y);
            let db = dist_b(inst, &embed(inst, x, None), &embed(inst, y, None));
            worst = worst.max(db / da);
            if !(da <= db && db <= 3.0 * da) {
                violations += 1;
            }
        }
    }
    let t = start.elapsed();
    outcome(
        violations == 0 && t < Duration::from_secs(5),
        format!("3 x 10^4 pairs, {violations} violations, max dist_B/d = {worst:.4}, {t:.2?}"),
    )
}

fn isometry_on_subspace() -> Outcome {
    let mut worst: f64 = 0.0;
    for (_, g) in families(10, 10_001) {
        let inst = &g.instance;
        for w in g.queries.windows(2) {
            let da = inst.raw_distance(&w[0], &w[1]);
            let db = dist_b(inst, &embed(inst, &w[0], None), &embed(inst, &w[1], None));
            worst = worst.max((db - da).abs() / da);
        }
    }
    outcome(worst <= 1e-9, format!("3 x 10^4 pairs, max relative error {worst:.2e}"))
}

fn affine_exact() -> Outcome {
    let g = inst(SubspaceKind::Affine { k: 3, extent: 2.0 }, 20, 2000, 10_000, (0.0, 1.5), 104);
    let inst = &g.instance;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst: f64 = 0.0;
    for x in &g.queries {
        let y = &g.points[rng.gen_range(0..g.points.len())];
        let da = inst.raw_distance(x, y);
        let de = euclidean(&affine_embed(inst, x).unwrap(), &affine_embed(inst, y).unwrap());
        worst = worst.max((de - da).abs() / da);
    }
    outcome(worst <= 1e-9, format!("10^4 pairs, max relative error {worst:.2e}"))
}

fn six_ann() -> Outcome {
    let start = Instant::now();
    let mut all = Vec::new();
    let mut parts = Vec::new();
    for (name, g) in families(2000, 1000) {
        let idx = ConstAnnIndex::build(g.instance.clone()).unwrap();
        let r = ratios(&idx, &g.queries);
        parts.push(format!("{name} max {:.3}", max(&r)));
        all.extend(r);
    }
    let t = start.elapsed();
    outcome(
        max(&all) <= 6.0 && t < Duration::from_secs(30),
        format!("{}, {t:.2?}", parts.join(", ")),
    )
}

/// Data within heights [0.5, 1] of a segment of length 2 in R^20.
fn eps_instance() -> Generated {
    inst(SubspaceKind::Segment { length: 2.0 }, 20, 1000, 500, (0.5, 1.0), 105)
}

fn eps_structure() -> Outcome {
    let start = Instant::now();
    let g = eps_instance();
    let mut pass = true;
    let mut parts = Vec::new();
    for eps in [0.5, 0.2, 0.1] {
        let idx = EpsAnnIndex::build(g.instance.clone(), eps).unwrap();
        let r = ratios(&idx, &g.queries);
        pass &= max(&r) <= 1.0 + eps;
        parts.push(format!(
            "eps {eps}: max {:.5} (|Q| = {})",
            max(&r),
            idx.reach_points().len()
        ));
    }
    let t = start.elapsed();
    outcome(
        pass && t < Duration::from_secs(300),
        format!("{}, {t:.2?}", parts.join("; ")),
    )
}

fn avd_structure() -> Outcome {
    let start = Instant::now();
    let g = eps_instance();
    let mut pass = true;
    let mut parts = Vec::new();
    for eps in [0.5, 0.2, 0.1] {
        let idx = AvdIndex::build(g.instance.clone(), eps).unwrap();
        let r = ratios(&idx, &g.queries);
        pass &= max(&r) <= 1.0 + 5.0 * eps;
        parts.push(format!(
            "eps {eps}: max {:.5}, mean {:.5}{} ({} centers)",
            max(&r),
            mean(&r),
            if mean(&r) <= 1.0 + eps { "" } else { " above 1+eps" },
            idx.centers().len()
        ));
    }
    outcome(pass, format!("{}, {:.2?}", parts.join("; "), start.elapsed()))
}

fn wspd_exhaustive() -> Outcome {
    let start = Instant::now();
    let g = inst(SubspaceKind::Sphere { k: 3, radius: 1.0 }, 20, 600, 0, (0.0, 1.0), 106);
    let w = build_wspd(&g.instance, 8.0).unwrap();
    let pairs: Vec<_> = w.pairs.iter().map(|p| (p.a_node, p.b_node)).collect();
    let report = verify_wspd(w.tree(), &pairs, 8.0);
    let t = start.elapsed();
    outcome(
        report.ok && report.points == 600 && t < Duration::from_secs(60),
        format!("{} pairs over 600 points, report ok = {}, {t:.2?}", report.pairs, report.ok),
    )
}

fn net_extraction() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let line: Vec<Vec<f64>> = (0..1000).map(|_| vec![rng.gen_range(0.0..100.0)]).collect();
    let grid: Vec<Vec<f64>> = (0..1000).map(|i| vec![(i % 40) as f64, (i / 40) as f64]).collect();
    let mut failures = Vec::new();
    let mut sizes = Vec::new();
    for (name, pts, k, span) in [("line", line, 1, 100.0), ("grid", grid, 2, 40.0)] {
        let tree = NetTree::build(pts, Euclidean).unwrap();
        let mut worst_size: f64 = 0.0;
        for trial in 0..100 {
            let q: Vec<f64> = (0..k).map(|_| rng.gen_range(-0.1 * span..1.1 * span)).collect();
            let inner = rng.gen_range(0.5..0.1 * span);
            let outer = inner * rng.gen_range(1.0..20.0);
            let net = tree.extract_net(&q, inner, outer).unwrap();
            // size regression bound: (16 (R / r + 1))^k
            let bound = (16.0 * (outer / inner + 1.0)).powi(k);
            worst_size = worst_size.max(net.entries.len() as f64 / (outer / inner + 1.0).powi(k));
            let report = verify_extraction(&tree, &q, inner, outer, &net, bound);
            if !report.ok {
                failures.push(format!("{name} trial {trial}: {report:?}"));
            }
        }
        sizes.push(format!("{name} {worst_size:.2}"));
    }
    outcome(
        failures.is_empty(),
        format!(
            "200 triples, {} failures, max |N| / (R/r + 1)^k: {}{}",
            failures.len(),
            sizes.join(", "),
            failures.first().map(|f| format!(", first: {f}")).unwrap_or_default()
        ),
    )
}

struct OnlineRun {
    max_ratio: f64,
    at_half: u64,
    at_full: u64,
    first_type: u64,
    hits: u64,
    elapsed: Duration,
}

fn online_run() -> OnlineRun {
    let g = inst(
        SubspaceKind::Polyline { vertices: 10, length: 4.0 },
        20,
        500,
        10_000,
        (0.2, 1.0),
        107,
    );
    let start = Instant::now();
    let mut state = OnlineAvd::new(g.instance.clone(), 0.2).unwrap();
    let inst = &g.instance;
    let mut max_ratio: f64 = 0.0;
    for q in &g.queries {
        let (id, _) = state.query(q);
        let e = checked_nn(inst, q).1;
        max_ratio = max_ratio.max(ratio(inst.raw_distance(q, &inst.point(id).coords), e));
    }
    let s = state.stats();
    OnlineRun {
        max_ratio,
        at_half: s.regions_after(5000),
        at_full: s.regions_after(10_000),
        first_type: s.first_type,
        hits: s.cache_hits,
        elapsed: start.elapsed(),
    }
}

fn online_validity(run: &OnlineRun) -> Outcome {
    outcome(
        run.max_ratio <= 1.2 && run.elapsed < Duration::from_secs(60),
        format!(
            "10^4 queries, max ratio {:.5}, {} cache hits, {:.2?}",
            run.max_ratio, run.hits, run.elapsed
        ),
    )
}

fn online_saturation(run: &OnlineRun) -> Outcome {
    let growth = run.at_full - run.at_half;
    outcome(
        (growth as f64) <= 0.05 * run.at_half as f64 && run.first_type <= 100,
        format!(
            "regions {} after 5000, {} after 10^4 (+{:.2}%), first type {}",
            run.at_half,
            run.at_full,
            100.0 * growth as f64 / run.at_half.max(1) as f64,
            run.first_type
        ),
    )
}

fn min_reach() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut mismatches = 0;
    let mut nodes = 0;
    for _ in 0..50 {
        let n = rng.gen_range(1..400);
        let d = rng.gen_range(1..5);
        let pts: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..d).map(|_| rng.gen_range(-3.0..3.0)).collect())
            .collect();
        let reach: Vec<(f64, usize)> = (0..n)
            .map(|i| (rng.gen_range(0..20) as f64 / 4.0, (i * 7919) % 1009))
            .collect();
        let mut tree = NetTree::build(pts, Euclidean).unwrap();
        tree.annotate_min_reach(&reach).unwrap();
        for id in tree.node_ids() {
            nodes += 1;
            let mut best = tree.subtree(id)[0];
            for &i in tree.subtree(id) {
                if reach[i].0 < reach[best].0 || (reach[i].0 == reach[best].0 && reach[i].1 < reach[best].1) {
                    best = i;
                }
            }
            let got = tree.node(id).min_reach.unwrap();
            if (got.reach, got.key) != reach[best] {
                mismatches += 1;
            }
        }
    }
    outcome(mismatches == 0, format!("50 trees, {nodes} nodes, {mismatches} mismatches"))
}

fn diameter_approx() -> Outcome {
    let mut bad = 0;
    let mut worst: f64 = 1.0;
    for i in 0..20u64 {
        let kind = match i % 3 {
            0 => SubspaceKind::Affine { k: 2, extent: 1.0 },
            1 => SubspaceKind::Sphere { k: 3, radius: 1.0 },
            _ => SubspaceKind::Polyline { vertices: 6, length: 3.0 },
        };
        let n = 100 * (i as usize + 1);
        let g = inst(kind, 20, n, 0, (0.0, 1.0), 200 + i);
        let approx = OnlineAvd::new(g.instance.clone(), 0.2).unwrap().diam_approx();
        let diam = exact_diameter(&g.instance);
        worst = worst.max(diam / approx);
        if !(approx <= diam && diam <= 2.0 * approx) {
            bad += 1;
        }
    }
    outcome(bad == 0, format!("20 instances (n up to 2000), max diam/diam' = {worst:.4}"))
}

fn main() {
    let selected: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let want = |k: usize| selected.is_empty() || selected.contains(&k);
    let mut failed = 0;
    let mut report = |k: usize, name: &str, f: &dyn Fn() -> Outcome| {
        if !want(k) {
            return;
        }
        let o = f();
        if !o.pass {
            failed += 1;
        }
        println!("{} [{k:>2}] {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
    };
    report(1, "embedding bounds", &embedding_bounds);
    report(2, "isometry on the subspace", &isometry_on_subspace);
    report(3, "affine embedding exact", &affine_exact);
    report(4, "6-ANN guarantee", &six_ann);
    report(5, "(1+eps)-ANN net structure", &eps_structure);
    report(6, "(1+eps)-ANN Voronoi structure", &avd_structure);
    report(7, "WSPD coverage and separation", &wspd_exhaustive);
    report(8, "net extraction contract", &net_extraction);
    if want(9) || want(10) {
        let run = online_run();
        report(9, "online answer validity", &|| online_validity(&run));
        report(10, "online region saturation", &|| online_saturation(&run));
    }
    report(11, "min-reach annotation", &min_reach);
    report(12, "diameter 2-approximation", &diameter_approx);
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
