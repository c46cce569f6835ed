use proptest::prelude::*;

use horolab::horo::{build_dl_window, build_product, EdgeKind};
use horolab::iso::{
    anchored_constant_exact, folner_ratio, iso_ratio, BoundaryMode, SubsetSelection,
};
use horolab::tree::{leaf_count_formula, level_counts, sample_window_tree};
use horolab::{BitSource, Exact, LevelCounts, TreeParams};

fn tree_params() -> impl Strategy<Value = TreeParams> {
    (1u32..=3, 0u32..=2, 0.0f64..=1.0)
        .prop_map(|(a, extra, p)| TreeParams::new(a, a + extra, p).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn sampling_is_deterministic(t in tree_params(), seed: u64, h in 0i64..=3) {
        let bits = BitSource::new(seed, 0);
        let a = sample_window_tree(&t, -h, (2 * h) as u32, &bits).unwrap();
        let b = sample_window_tree(&t, -h, (2 * h) as u32, &bits).unwrap();
        prop_assert_eq!(a.to_canonical_json(), b.to_canonical_json());
    }

    #[test]
    fn retention_is_monotone(a in 1u32..=2, extra in 1u32..=2, p in 0.0f64..=1.0, q in 0.0f64..=1.0, seed: u64) {
        let (lo, hi) = if p <= q { (p, q) } else { (q, p) };
        let bits = BitSource::new(seed, 0);
        let small = sample_window_tree(&TreeParams::new(a, a + extra, lo).unwrap(), -2, 4, &bits).unwrap();
        let large = sample_window_tree(&TreeParams::new(a, a + extra, hi).unwrap(), -2, 4, &bits).unwrap();
        for v in small.iter_nodes() {
            prop_assert!(large.find(&small.address(v)).is_some());
        }
    }

    #[test]
    fn offspring_in_support(t in tree_params(), seed: u64) {
        let tree = sample_window_tree(&t, 0, 4, &BitSource::new(seed, 0)).unwrap();
        for v in tree.iter_nodes().filter(|v| v.level < tree.max_level()) {
            let k = tree.offspring(v);
            prop_assert!(k >= t.alpha_min && k <= t.alpha_max);
        }
    }

    #[test]
    fn oracle_matches_sampler(t in tree_params(), seed: u64, h in 0i64..=2) {
        let bits = BitSource::new(seed, 1);
        let counts = level_counts(&sample_window_tree(&t, -h, (2 * h) as u32, &bits).unwrap());
        for j in -h..=h {
            prop_assert_eq!(leaf_count_formula(&t, &bits, h, j).unwrap(), counts.get(j).unwrap());
        }
    }

    #[test]
    fn product_edges_follow_factors(l in tree_params(), r in tree_params(), seed: u64, h in 1i64..=2) {
        let lt = sample_window_tree(&l, -h, (2 * h) as u32, &BitSource::new(seed, 1)).unwrap();
        let rt = sample_window_tree(&r, -h, (2 * h) as u32, &BitSource::new(seed, 0)).unwrap();
        let g = build_product(&lt, &rt).unwrap();
        prop_assert!(g.max_degree() <= (l.alpha_max + r.alpha_max) as usize);
        for v in 0..g.vertex_count() as u32 {
            let a = g.vertex(v);
            for &(w, kind) in g.neighbors(v) {
                let b = g.vertex(w);
                prop_assert_eq!((a.level - b.level).abs(), 1);
                let (lo, hi) = if a.level < b.level { (v, w) } else { (w, v) };
                let (ll, lr) = (g.left_node(lo), g.right_node(lo));
                let (hl, hr) = (g.left_node(hi), g.right_node(hi));
                // going up: right coordinate to a child, left to its parent
                let right_child = g.right().get(hr).unwrap();
                prop_assert_eq!(right_child.parent, Some(lr.index));
                let left_child = g.left().get(ll).unwrap();
                prop_assert_eq!(left_child.parent, Some(hl.index));
                let marked = right_child.marked || left_child.marked;
                prop_assert_eq!(kind == EdgeKind::Percolative, marked);
            }
        }
    }

    #[test]
    fn anchored_constant_non_increasing(a in 1u32..=2, b in 1u32..=2) {
        let g = build_dl_window(a, b, 5).unwrap();
        let root = g.root().unwrap();
        let values: Vec<Exact> = (1..=5)
            .map(|n| anchored_constant_exact(&g, root, n).unwrap().best.ratio)
            .collect();
        for w in values.windows(2) {
            prop_assert!(w[1] <= w[0]);
        }
    }

    #[test]
    fn deterministic_folner_ratio(beta in 1u64..=4, h in 0i64..=8) {
        let c = LevelCounts { base_level: -h, counts: (0..=2 * h as u32).map(|d| beta.pow(d)).collect() };
        prop_assert_eq!(folner_ratio(&c, &c, h).unwrap(), Exact::new(2, 2 * h as u128 + 1));
    }

    #[test]
    fn outer_ratio_matches_direct_count(raw in proptest::collection::vec(any::<u32>(), 1..20)) {
        let g = build_dl_window(2, 1, 2).unwrap();
        let members: Vec<u32> = raw.iter().map(|v| v % g.vertex_count() as u32).collect();
        let sel = SubsetSelection::new(&g, members.clone()).unwrap();
        let mut outside: Vec<u32> = members
            .iter()
            .flat_map(|&v| g.neighbor_ids(v))
            .filter(|w| !members.contains(w))
            .collect();
        outside.sort_unstable();
        outside.dedup();
        let r = iso_ratio(&g, &sel, BoundaryMode::Outer).unwrap();
        prop_assert_eq!(r.boundary as usize, outside.len());
        prop_assert_eq!(r.volume as usize, sel.len());
    }
}
