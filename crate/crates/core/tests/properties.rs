use std::sync::Arc;

use proptest::prelude::*;
use subspace_ann::datagen::{generate, HeightDist, InstanceSpec, SubspaceKind};
use subspace_ann::metric::Euclidean;
use subspace_ann::net_tree::NetTree;
use subspace_ann::oracle::{exact_nn, exact_nn_alt, ratio_ok, verify_extraction, verify_wspd};
use subspace_ann::wspd::{build_wspd, decompose};
use subspace_ann::{AnnIndex, ConstAnnIndex, EpsAnnIndex, OnlineAvd};

fn kind() -> impl Strategy<Value = SubspaceKind> {
    prop_oneof![
        (1usize..=2).prop_map(|k| SubspaceKind::Affine { k, extent: 1.0 }),
        Just(SubspaceKind::Sphere { k: 2, radius: 1.0 }),
        (0.5f64..3.0).prop_map(|length| SubspaceKind::Segment { length }),
        (2usize..6).prop_map(|vertices| SubspaceKind::Polyline { vertices, length: 2.0 }),
    ]
}

fn instance(n: std::ops::Range<usize>) -> impl Strategy<Value = InstanceSpec> {
    (kind(), n, 0.0f64..0.5, 0.0f64..1.0, any::<u64>()).prop_map(|(subspace, n, min, span, seed)| {
        InstanceSpec {
            ambient_dim: 5,
            n,
            queries: 30,
            subspace,
            heights: HeightDist { min, max: min + span },
            seed,
        }
    })
}

fn points(n: std::ops::Range<usize>) -> impl Strategy<Value = Vec<Vec<f64>>> {
    let coord = prop_oneof![(-4i32..4).prop_map(f64::from), -4.0f64..4.0];
    prop::collection::vec(prop::collection::vec(coord, 2), n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn net_tree_invariants_and_nearest(pts in points(1..80), q in prop::collection::vec(-5.0f64..5.0, 2)) {
        let tree = NetTree::build(pts.clone(), Euclidean).unwrap();
        prop_assert_eq!(tree.check_invariants(), Ok(()));
        let mut seen: Vec<usize> = tree.subtree(tree.root()).to_vec();
        seen.sort_unstable();
        prop_assert_eq!(seen, (0..pts.len()).collect::<Vec<_>>());
        let exact = pts
            .iter()
            .map(|p| subspace_ann::metric::euclidean(p, &q))
            .fold(f64::INFINITY, f64::min);
        prop_assert!((tree.nearest(&q).distance - exact).abs() <= 1e-12);
        for c in [1.5, 2.0, 4.0] {
            prop_assert!(ratio_ok(tree.ann_query(&q, c).distance, exact, c));
        }
    }

    #[test]
    fn min_reach_matches_brute_force(pts in points(1..60), seed in any::<u64>()) {
        let mut tree = NetTree::build(pts.clone(), Euclidean).unwrap();
        let reach: Vec<(f64, usize)> = (0..pts.len())
            .map(|i| (((seed >> (i % 16)) & 7) as f64, i))
            .collect();
        tree.annotate_min_reach(&reach).unwrap();
        for id in tree.node_ids() {
            let best = tree
                .subtree(id)
                .iter()
                .map(|&i| reach[i])
                .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
                .unwrap();
            let got = tree.node(id).min_reach.unwrap();
            prop_assert_eq!((got.reach, got.key), best);
        }
    }

    #[test]
    fn extraction_covers_and_stays_local(pts in points(1..120), q in prop::collection::vec(-5.0f64..5.0, 2), outer in 0.5f64..4.0, frac in 0.02f64..0.5) {
        let tree = NetTree::build(pts, Euclidean).unwrap();
        let inner = outer * frac;
        let net = tree.extract_net(&q, inner, outer).unwrap();
        let r = verify_extraction(&tree, &q, inner, outer, &net, f64::INFINITY);
        prop_assert!(r.ok, "{:?}", r);
    }

    #[test]
    fn wspd_is_separated_cover(pts in points(2..50), s in 1.0f64..8.0) {
        let tree = NetTree::build(pts, Euclidean).unwrap();
        let pairs = decompose(&tree, s).unwrap();
        let r = verify_wspd(&tree, &pairs, s);
        prop_assert!(r.ok, "{:?}", r);
    }

    #[test]
    fn instance_wspd_is_separated_cover(spec in instance(2..60)) {
        let g = generate(&spec).unwrap();
        let w = build_wspd(&g.instance, 2.0).unwrap();
        let pairs: Vec<_> = w.pairs.iter().map(|p| (p.a_node, p.b_node)).collect();
        let r = verify_wspd(w.tree(), &pairs, 2.0);
        prop_assert!(r.ok, "{:?}", r);
        for p in &w.pairs {
            prop_assert!(p.big_l >= p.ell - 1e-9);
        }
    }

    #[test]
    fn oracles_agree(spec in instance(1..100)) {
        let g = generate(&spec).unwrap();
        for q in &g.queries {
            let (a, da) = exact_nn(&g.instance, q);
            let (b, db) = exact_nn_alt(&g.instance, q);
            prop_assert_eq!(da, db);
            prop_assert_eq!(g.instance.raw_distance(q, &g.instance.point(b).coords), da);
            prop_assert_eq!(g.instance.raw_distance(q, &g.instance.point(a).coords), db);
        }
    }

    #[test]
    fn const_index_within_six(spec in instance(1..150)) {
        let g = generate(&spec).unwrap();
        let idx = ConstAnnIndex::build(g.instance.clone()).unwrap();
        for q in &g.queries {
            let a = idx.query(q);
            prop_assert_eq!(a.distance, g.instance.raw_distance(q, &g.instance.point(a.id).coords));
            prop_assert!(ratio_ok(a.distance, exact_nn(&g.instance, q).1, 6.0));
        }
    }

    #[test]
    fn online_within_bound_and_replays_from_cache(spec in instance(1..80), eps in 0.05f64..=0.2) {
        let g = generate(&spec).unwrap();
        let mut online = OnlineAvd::new(g.instance.clone(), eps).unwrap();
        let first: Vec<usize> = g.queries.iter().map(|q| online.query(q).0).collect();
        for (q, &id) in g.queries.iter().zip(&first) {
            let d = g.instance.raw_distance(q, &g.instance.point(id).coords);
            prop_assert!(ratio_ok(d, exact_nn(&g.instance, q).1, 1.0 + eps));
        }
        let regions = online.regions().len();
        for q in &g.queries {
            online.query(q);
        }
        prop_assert_eq!(online.regions().len(), regions);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn eps_index_within_bound(length in 0.5f64..1.5, n in 5usize..40, seed in any::<u64>()) {
        let g = generate(&InstanceSpec {
            ambient_dim: 4,
            n,
            queries: 30,
            subspace: SubspaceKind::Segment { length },
            heights: HeightDist { min: 0.3, max: 1.0 },
            seed,
        })
        .unwrap();
        let idx = EpsAnnIndex::build(Arc::clone(&g.instance), 0.5).unwrap();
        for q in &g.queries {
            prop_assert!(ratio_ok(idx.query(q).distance, exact_nn(&g.instance, q).1, 1.5));
        }
    }
}
