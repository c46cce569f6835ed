//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each,
//! and exits non-zero if any criterion fails or overruns its time bound.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use horolab::bits::derive_seed;
use horolab::horo::{build_dl_window, build_product, union_product_check, Bridge, Part};
use horolab::iso::{
    anchored_constant_exact, bfs_ball, cut_lower_bound_check, folner_ratio,
    is_regular_product_piece, iso_ratio, random_connected_subset, tetraeder_ratio_regular,
    tetraeder_subset, window_boundary_crosscheck, BoundaryMode, SubsetSelection,
};
use horolab::stats::{
    all_closed_probability, all_closed_probability_exact, m_n, martingale_track,
    run_folner_experiment, simulate_window_counts, DEFAULT_COUNT_CAP,
};
use horolab::tree::{leaf_count_formula, level_counts, offspring_pmf, sample_window_tree};
use horolab::{BitSource, Exact, NodeId, TreeParams, VertexAddress};
use num_traits::{One, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

type Outcome = Result<String, String>;
type Criterion = (&'static str, u64, fn() -> Outcome);

/// Anchored constant of `DL(1,2)` at `n_max = 8`, rooted at level 0.
const DL12_ANCHORED_8: (u128, u128) = (5, 4);

fn params(a: u32, b: u32, p: f64) -> TreeParams {
    TreeParams::new(a, b, p).unwrap()
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn tetraeder_exactness() -> Outcome {
    let mut explicit = 0;
    for beta in [2u32, 3] {
        for n in 0..=6u32 {
            let want = Exact::new(2, u128::from(n) + 1);
            let closed = tetraeder_ratio_regular(beta, n).map_err(err)?;
            ensure(closed == want, || {
                format!("closed form beta={beta} N={n}: {closed}")
            })?;
            if beta == 2 && n <= 4 {
                let h = n.div_ceil(2) + 1;
                let host = build_dl_window(beta, beta, h).map_err(err)?;
                let a = -i64::from(n / 2);
                let right = host.right().find(&VertexAddress::chain(a)).unwrap();
                let left = host
                    .left()
                    .find(&VertexAddress::chain(-(a + i64::from(n))))
                    .unwrap();
                let set = tetraeder_subset(&host, right, left, n).map_err(err)?;
                let r = iso_ratio(&host, &set, BoundaryMode::Inner).map_err(err)?;
                ensure(r.ratio == want, || {
                    format!("explicit beta={beta} N={n}: {}", r.ratio)
                })?;
                explicit += 1;
            }
        }
    }
    Ok(format!("14 ratios exact, {explicit} from explicit graphs"))
}

fn folner_identity() -> Outcome {
    for beta in [2u32, 3] {
        let t = TreeParams::regular(beta);
        for h in 0..=12i64 {
            let c = simulate_window_counts(&t, -h, (2 * h) as u32, 0, DEFAULT_COUNT_CAP)
                .map_err(err)?
                .counts;
            let r = folner_ratio(&c, &c, h).map_err(err)?;
            ensure(r == Exact::new(2, 2 * h as u128 + 1), || {
                format!("beta={beta} h={h}: {r}")
            })?;
        }
        for h in 0..=2i64 {
            let bl = BitSource::new(h as u64, BitSource::LEFT_TAG);
            let br = BitSource::new(h as u64, BitSource::RIGHT_TAG);
            let l = sample_window_tree(&t, -h, (2 * h) as u32, &bl).map_err(err)?;
            let r = sample_window_tree(&t, -h, (2 * h) as u32, &br).map_err(err)?;
            let rep = window_boundary_crosscheck(&l, &r, h, (&bl, &br)).map_err(err)?;
            ensure(rep.holds, || {
                format!("crosscheck beta={beta} h={h}: {rep:?}")
            })?;
            let exact = Exact::new(u128::from(rep.inner_boundary), u128::from(rep.volume));
            ensure(exact == Exact::new(2, 2 * h as u128 + 1), || {
                format!("crosscheck ratio beta={beta} h={h}: {exact}")
            })?;
        }
    }
    Ok("h <= 12 exact, crosscheck h <= 2".into())
}

fn oracle_equivalence() -> Outcome {
    let mut compared = 0u64;
    for (a, b) in [(1u32, 2u32), (2, 3)] {
        for p in [0.3, 0.7] {
            let t = params(a, b, p);
            for seed in 0..100u64 {
                let bits = BitSource::new(seed, BitSource::RIGHT_TAG);
                for h in 0..=3i64 {
                    let tree = sample_window_tree(&t, -h, (2 * h) as u32, &bits).map_err(err)?;
                    let counts = level_counts(&tree);
                    for j in -h..=h {
                        let oracle = leaf_count_formula(&t, &bits, h, j).map_err(err)?;
                        let sampled = counts.get(j).unwrap();
                        ensure(oracle == sampled, || {
                            format!("({a},{b},{p}) seed={seed} h={h} j={j}: {oracle} vs {sampled}")
                        })?;
                        compared += 1;
                    }
                }
            }
        }
    }
    Ok(format!("{compared} level counts identical"))
}

fn offspring_law() -> Outcome {
    let t = params(2, 3, 0.5);
    let target = 100_000usize;
    let mut hist = [0u64; 2];
    let mut seed = 0u64;
    let mut draws = 0usize;
    while draws < target {
        let bits = BitSource::new(derive_seed(4, &[seed]), BitSource::RIGHT_TAG);
        seed += 1;
        let tree = sample_window_tree(&t, 0, 6, &bits).map_err(err)?;
        for v in tree.iter_nodes().filter(|v| v.level < tree.max_level()) {
            if draws == target {
                break;
            }
            hist[(tree.offspring(v) - 2) as usize] += 1;
            draws += 1;
        }
    }
    let stat: f64 = (2..=3u32)
        .map(|k| {
            let expected = offspring_pmf(&t, k) * draws as f64;
            (hist[(k - 2) as usize] as f64 - expected).powi(2) / expected
        })
        .sum();
    let p_value = 1.0 - ChiSquared::new(1.0).unwrap().cdf(stat);
    ensure(p_value > 0.001, || {
        format!("chi2={stat:.3}, p={p_value:.2e}")
    })?;
    Ok(format!("{draws} draws, chi2={stat:.3}, p={p_value:.3}"))
}

fn martingale() -> Outcome {
    let mut worst = 0.0f64;
    for t in [params(2, 3, 0.5), params(1, 3, 0.5)] {
        let track = martingale_track(&t, 8, 10_000, 2024, false).map_err(err)?;
        for (j, e) in track.increments.iter().enumerate() {
            ensure(e.within(0.0, 3.0), || {
                format!("({t}) step {j}: mean {} se {}", e.mean, e.se)
            })?;
            if e.se > 0.0 {
                worst = worst.max(e.mean.abs() / e.se);
            }
        }
    }
    Ok(format!("max |mean|/SE = {worst:.2}"))
}

fn folner_decay() -> Outcome {
    let t = params(1, 3, 0.5);
    let s = run_folner_experiment(&t, &t, 3..=10, 1000, 7).map_err(err)?;
    ensure(!s.exploratory, || {
        "growth condition reported violated".into()
    })?;
    ensure(s.medians_strictly_decreasing(), || {
        let m: Vec<String> = s.rows.iter().map(|r| r.median.to_string()).collect();
        format!("medians not decreasing: {}", m.join(" "))
    })?;
    let spread = s.scaled_spread();
    ensure(spread <= 4.0, || {
        format!("median_scaled spread {spread:.3}")
    })?;
    Ok(format!(
        "medians decreasing, median_scaled spread {spread:.3}"
    ))
}

fn lemma_union() -> Outcome {
    let ambient_params = params(1, 3, 0.6);
    let left_params = params(1, 2, 0.5);
    for i in 0..20u64 {
        let bits = BitSource::new(derive_seed(11, &[i]), BitSource::RIGHT_TAG);
        let lbits = BitSource::new(derive_seed(11, &[i]), BitSource::LEFT_TAG);
        let ambient = sample_window_tree(&ambient_params, -2, 4, &bits).map_err(err)?;
        let left = sample_window_tree(&left_params, -2, 4, &lbits).map_err(err)?;
        let marked: Vec<NodeId> = ambient
            .iter_nodes()
            .filter(|&v| v.level > ambient.root_level() && ambient.node(v).marked)
            .collect();
        ensure(!marked.is_empty(), || {
            format!("instance {i}: no marked vertex")
        })?;
        let c = marked[(derive_seed(12, &[i]) % marked.len() as u64) as usize];
        let first = ambient.without_branch(c).map_err(err)?;
        let second = ambient.subtree(c).map_err(err)?;
        let parent = first
            .find(&ambient.address(ambient.parent(c).unwrap()))
            .unwrap();
        let bridge = Bridge {
            from: Part::First,
            parent,
        };
        let rep = union_product_check(&left, &first, &second, Some(bridge)).map_err(err)?;
        ensure(
            rep.components_union == 2 && rep.components_bridged == Some(1) && rep.holds,
            || format!("instance {i}: {rep:?}"),
        )?;
    }
    Ok("20 instances: 2 components, 1 after bridging".into())
}

fn degrees() -> Outcome {
    let interior = |g: &horolab::horo::HoroGraph, h: i64| -> Vec<usize> {
        (1 - h..h)
            .flat_map(|l| g.level_ids(l))
            .map(|v| g.neighbors(v).len())
            .collect()
    };
    for h in 1..=2u32 {
        let hh = i64::from(h);
        for (lo_l, lo_r) in [(1u32, 1u32), (2, 2), (1, 2)] {
            let lp = params(lo_l, 3, 0.0);
            let rp = params(lo_r, 3, 0.0);
            let l = sample_window_tree(&lp, -hh, 2 * h, &BitSource::new(1, 1)).map_err(err)?;
            let r = sample_window_tree(&rp, -hh, 2 * h, &BitSource::new(1, 0)).map_err(err)?;
            let g = build_product(&l, &r).map_err(err)?;
            let want = (lo_l + lo_r) as usize;
            ensure(interior(&g, hh).iter().all(|&d| d == want), || {
                format!("closed ({lo_l},{lo_r}) h={h}: expected {want}")
            })?;
        }
        for a in 1..=3u32 {
            for b in 1..=3u32 {
                let g = build_dl_window(a, b, h).map_err(err)?;
                ensure(
                    interior(&g, hh).iter().all(|&d| d == (a + b) as usize),
                    || format!("DL({a},{b}) h={h}"),
                )?;
                ensure(g.max_degree() == (a + b) as usize, || {
                    format!("DL({a},{b}) max")
                })?;
            }
        }
    }
    Ok("closed interior 2*alpha_o, regular interior alpha'+alpha".into())
}

fn cut_comparison() -> Outcome {
    let line = TreeParams::regular(1);
    let right_params = params(2, 3, 0.5);
    let h = 3i64;
    let mut subsets = 0usize;
    let mut pieces = 0usize;
    let mut non_additive = 0usize;
    for i in 0..100u64 {
        let seed = derive_seed(9, &[i]);
        let l = sample_window_tree(&line, -h, 6, &BitSource::new(seed, 1)).map_err(err)?;
        let r = sample_window_tree(&right_params, -h, 6, &BitSource::new(seed, 0)).map_err(err)?;
        let host = build_product(&l, &r).map_err(err)?;
        let cluster = host.component_of(host.root().unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut samples: Vec<SubsetSelection> = (0..100)
            .map(|_| {
                let start = cluster[rng.random_range(0..cluster.len())];
                let size = rng.random_range(2..=60);
                random_connected_subset(&host, start, size, &mut rng)
            })
            .collect();
        for radius in 1..=3 {
            let centre = cluster[rng.random_range(0..cluster.len())];
            samples.push(bfs_ball(&host, centre, radius));
        }
        let rep = cut_lower_bound_check(&host, &samples);
        ensure(rep.holds, || format!("cluster {i}: inequality fails"))?;
        subsets += samples.len();
        non_additive += rep.samples.iter().filter(|s| !s.additive).count();
        let reduced = host.remanent_subgraph();
        for comp in reduced.components() {
            ensure(is_regular_product_piece(&reduced, &comp, 1, 2), || {
                format!(
                    "cluster {i}: component of size {} is not a DL(1,2) piece",
                    comp.len()
                )
            })?;
            pieces += 1;
        }
    }
    Ok(format!(
        "{subsets} subsets hold, {pieces} pieces regular, {non_additive} with overlapping piece boundaries"
    ))
}

fn anchored_exhaustive() -> Outcome {
    for n in 1..=10usize {
        let g = build_dl_window(1, 1, n as u32).map_err(err)?;
        let rep = anchored_constant_exact(&g, g.root().unwrap(), n).map_err(err)?;
        ensure(rep.best.ratio == Exact::new(2, n as u128), || {
            format!("DL(1,1) n_max={n}: {}", rep.best.ratio)
        })?;
    }
    let g = build_dl_window(1, 2, 8).map_err(err)?;
    let rep = anchored_constant_exact(&g, g.root().unwrap(), 8).map_err(err)?;
    let r = rep.best.ratio;
    ensure(r > Exact::zero(), || "DL(1,2) value not positive".into())?;
    ensure(
        r == Exact::new(DL12_ANCHORED_8.0, DL12_ANCHORED_8.1),
        || format!("DL(1,2) n_max=8: {r} differs from pinned value"),
    )?;
    Ok(format!(
        "DL(1,1) 2/n for n <= 10; DL(1,2) n_max=8 = {r} over {} subsets",
        rep.subsets_visited
    ))
}

fn closed_probability() -> Outcome {
    let t = params(2, 3, 0.5);
    ensure(m_n(&t, 1).map_err(err)? == 9, || "M_1 != 9".into())?;
    let closed = params(2, 3, 0.0);
    let open = params(2, 3, 1.0);
    for n in 0..=4 {
        ensure(
            all_closed_probability_exact(&closed, &closed, n)
                .map_err(err)?
                .is_one(),
            || format!("p=0, N={n}"),
        )?;
        ensure(
            all_closed_probability_exact(&open, &open, n)
                .map_err(err)?
                .is_zero(),
            || format!("p=1, N={n}"),
        )?;
        ensure(
            all_closed_probability(&closed, &closed, n).map_err(err)? == 1.0,
            || format!("float p=0, N={n}"),
        )?;
    }
    Ok("M_1 = 9; p=0 gives 1, p=1 gives 0".into())
}

fn main() -> ExitCode {
    let criteria: [Criterion; 11] = [
        ("tetraeder exactness", 10, tetraeder_exactness),
        ("folner identity", 10, folner_identity),
        ("oracle equivalence", 30, oracle_equivalence),
        ("offspring law", 5, offspring_law),
        ("martingale", 60, martingale),
        ("folner decay", 60, folner_decay),
        ("union of parts", 5, lemma_union),
        ("degrees", 5, degrees),
        ("cut comparison", 120, cut_comparison),
        ("anchored exhaustive", 60, anchored_exhaustive),
        ("all-closed probability", 1, closed_probability),
    ];
    let mut failed = 0;
    for (i, (name, bound, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = run();
        let elapsed = start.elapsed();
        let over = elapsed > Duration::from_secs(*bound);
        let line = match (&outcome, over) {
            (Ok(detail), false) => format!("PASS {:>2} {name}: {detail}", i + 1),
            (Ok(detail), true) => format!("FAIL {:>2} {name}: over {bound} s ({detail})", i + 1),
            (Err(why), _) => format!("FAIL {:>2} {name}: {why}", i + 1),
        };
        if line.starts_with("FAIL") {
            failed += 1;
        }
        println!("{line} [{:.2} s]", elapsed.as_secs_f64());
    }
    if failed == 0 {
        println!("acceptance: all {} criteria passed", criteria.len());
        ExitCode::SUCCESS
    } else {
        println!("acceptance: {failed} of {} criteria failed", criteria.len());
        ExitCode::FAILURE
    }
}
