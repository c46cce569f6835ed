use anyhow::{anyhow, Result};
use horolab::bits::derive_seed;
use horolab::horo::{build_dl_window, build_product, union_product_check, Bridge, HoroGraph, Part};
use horolab::iso::{
    anchored_constant_exact_with, bfs_ball, cut_lower_bound_check, is_regular_product_piece,
    iso_ratio, random_connected_subset, tetraeder_counts, tetraeder_subset, BoundaryMode,
    EnumerationLimits, SubsetSelection, DEFAULT_MAX_SUBSET_SIZE,
};
use horolab::stats::{
    all_closed_probability, all_closed_probability_exact, growth_condition_check, m_n,
    martingale_track, run_folner_experiment,
};
use horolab::tree::{level_counts, sample_window_tree};
use horolab::{BitSource, Exact, LeveledTree, NodeId, TreeParams, VertexAddress};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::json;

use crate::output::Artifact;
use crate::{Cli, Command, Side, Status};

/// Largest explicit host the tetraeder command builds before switching to
/// level counts.
const TETRAEDER_EXPLICIT_LIMIT: u128 = 1_000_000;

struct Run {
    artifact: Artifact,
    summary: Option<String>,
    status: Status,
}

impl Run {
    fn ok(artifact: Artifact) -> Self {
        Self {
            artifact,
            summary: None,
            status: Status::Ok,
        }
    }

    fn with_summary(mut self, line: String) -> Self {
        self.summary = Some(line);
        self
    }

    fn check(mut self, passed: bool) -> Self {
        if !passed {
            self.status = Status::CheckFailed;
        }
        self
    }
}

pub fn run(cli: &Cli) -> Result<Status> {
    let seed = cli.seed;
    let r = match &cli.command {
        Command::SampleTree(a) => sample_tree(&a.params, a.h, a.side, seed)?,
        Command::BuildWindow(a) => build_window(&a.left, &a.right, a.h, seed)?,
        Command::Folner(a) => {
            let s = run_folner_experiment(&a.left, &a.right, a.h.lo..=a.h.hi, a.trials, seed)?;
            let mut r = Run::ok(Artifact::new(s.to_csv(), &s));
            if s.exploratory {
                let g = growth_condition_check(&a.left, &a.right, 1e-12);
                r = r.with_summary(format!("exploratory run, growth condition {g}"));
            }
            r
        }
        Command::Martingale(a) => martingale(a, seed)?,
        Command::Tetraeder(a) => tetraeder(a.beta, a.n, a.closed_form)?,
        Command::Anchored(a) => anchored(a, seed)?,
        Command::Cutcheck(a) => cutcheck(a, seed)?,
        Command::Lemma11(a) => lemma11(a, seed)?,
        Command::Growthcheck(a) => {
            let g = growth_condition_check(&a.left, &a.right, a.tolerance);
            let csv = format!(
                "z_left,z_right,tolerance,satisfied\n{},{},{},{}\n",
                g.z_left, g.z_right, g.tolerance, g.satisfied
            );
            Run::ok(Artifact::new(csv, &g))
                .with_summary(g.to_string())
                .check(g.satisfied)
        }
        Command::Allclosed(a) => allclosed(&a.left, &a.right, a.n)?,
    };
    r.artifact.emit(cli)?;
    if let Some(line) = r.summary {
        if cli.out.is_some() {
            println!("{line}");
        } else {
            eprintln!("{line}");
        }
    }
    Ok(r.status)
}

fn bits(seed: u64, side: Side) -> BitSource {
    let tag = match side {
        Side::Left => BitSource::LEFT_TAG,
        Side::Right => BitSource::RIGHT_TAG,
    };
    BitSource::new(seed, tag)
}

fn window(params: &TreeParams, h: u32, seed: u64, side: Side) -> Result<LeveledTree> {
    Ok(sample_window_tree(
        params,
        -i64::from(h),
        2 * h,
        &bits(seed, side),
    )?)
}

fn host(left: &TreeParams, right: &TreeParams, h: u32, seed: u64) -> Result<HoroGraph> {
    let l = window(left, h, seed, Side::Left)?;
    let r = window(right, h, seed, Side::Right)?;
    Ok(build_product(&l, &r)?)
}

fn sample_tree(params: &TreeParams, h: u32, side: Side, seed: u64) -> Result<Run> {
    let tree = window(params, h, seed, side)?;
    let counts = level_counts(&tree);
    let mut csv = String::from("level,count\n");
    for (d, c) in counts.counts.iter().enumerate() {
        csv.push_str(&format!("{},{c}\n", counts.base_level + d as i64));
    }
    Ok(Run::ok(Artifact::new(csv, tree.record()))
        .with_summary(format!("{} vertices", tree.vertex_count())))
}

fn build_window(left: &TreeParams, right: &TreeParams, h: u32, seed: u64) -> Result<Run> {
    let g = host(left, right, h, seed)?;
    let summary = format!(
        "{} vertices, {} edges, {} components",
        g.vertex_count(),
        g.edge_count(),
        g.component_count()
    );
    Ok(Run::ok(Artifact::new(g.edge_list_csv(), g.adjacency_json())).with_summary(summary))
}

fn martingale(a: &crate::MartingaleArgs, seed: u64) -> Result<Run> {
    let track = martingale_track(&a.params, a.height, a.trials, seed, a.condition)?;
    let mut csv = String::from("level,mean_y,se_y,mean_increment,se_increment\n");
    for (d, y) in track.y.iter().enumerate() {
        let (m, s) = track
            .increments
            .get(d)
            .map(|e| (e.mean.to_string(), e.se.to_string()))
            .unwrap_or_default();
        csv.push_str(&format!(
            "{},{},{},{m},{s}\n",
            track.root_level + d as i64,
            y.mean,
            y.se
        ));
    }
    let worst = track
        .increments
        .iter()
        .filter(|e| e.se > 0.0)
        .map(|e| e.mean.abs() / e.se)
        .fold(0.0, f64::max);
    let centered = track.increments_centered(3.0);
    let summary = format!(
        "{}: max |mean increment|/SE = {worst:.3}, sup 1/Y q99 = {:.4}, discarded {}",
        if centered { "centered" } else { "not centered" },
        track.sup_inverse_quantile(0.99),
        track.discarded
    );
    Ok(Run::ok(Artifact::new(csv, &track))
        .with_summary(summary)
        .check(centered))
}

#[derive(Serialize)]
struct TetraederResult {
    beta: u32,
    n: u32,
    method: &'static str,
    boundary: u128,
    volume: u128,
    ratio: String,
    expected: String,
}

fn tetraeder(beta: u32, n: u32, closed_form: bool) -> Result<Run> {
    if beta == 0 {
        return Err(anyhow!("--beta must be at least 1"));
    }
    let h = n.div_ceil(2) + 1;
    let host_size = (2 * u128::from(h) + 1).saturating_mul(u128::from(beta).saturating_pow(2 * h));
    let (method, boundary, volume) = if closed_form || host_size > TETRAEDER_EXPLICIT_LIMIT {
        let sizes: Vec<u64> = (0..=n)
            .map(|k| u64::from(beta).checked_pow(k))
            .collect::<Option<_>>()
            .ok_or_else(|| anyhow!("beta^N overflows"))?;
        let (b, v) = tetraeder_counts(&sizes, &sizes)?;
        ("closed-form", b, v)
    } else {
        let g = build_dl_window(beta, beta, h)?;
        let a = -i64::from(n / 2);
        let right = g
            .right()
            .find(&VertexAddress::chain(a))
            .expect("apex in window");
        let left = g
            .left()
            .find(&VertexAddress::chain(-(a + i64::from(n))))
            .expect("apex in window");
        let set = tetraeder_subset(&g, right, left, n)?;
        let r = iso_ratio(&g, &set, BoundaryMode::Inner)?;
        ("explicit", u128::from(r.boundary), u128::from(r.volume))
    };
    let ratio = Exact::new(boundary, volume);
    let expected = Exact::new(2, u128::from(n) + 1);
    let res = TetraederResult {
        beta,
        n,
        method,
        boundary,
        volume,
        ratio: ratio.to_string(),
        expected: expected.to_string(),
    };
    let csv = format!(
        "beta,N,method,boundary,volume,ratio\n{beta},{n},{method},{boundary},{volume},{ratio}\n"
    );
    Ok(Run::ok(Artifact::new(csv, &res))
        .with_summary(format!("ratio {ratio}"))
        .check(ratio == expected))
}

fn anchored(a: &crate::AnchoredArgs, seed: u64) -> Result<Run> {
    let g = host(&a.left, &a.right, a.h, seed)?;
    let root = g
        .root()
        .ok_or_else(|| anyhow!("window has no level-0 root"))?;
    let limits = EnumerationLimits {
        max_size: DEFAULT_MAX_SUBSET_SIZE,
        max_subsets: a.max_subsets,
    };
    let rep = anchored_constant_exact_with(&g, root, a.n_max, limits)?;
    let b = &rep.best;
    let witness: Vec<_> = b
        .witness
        .iter()
        .flatten()
        .map(|&v| {
            json!({
                "id": v,
                "level": g.vertex(v).level,
                "left_path": g.left_label(v),
                "right_path": g.right_label(v),
            })
        })
        .collect();
    let csv = format!(
        "n_max,boundary,volume,ratio_num,ratio_den,subsets_visited\n{},{},{},{},{},{}\n",
        rep.n_max,
        b.boundary,
        b.volume,
        b.ratio.numer(),
        b.ratio.denom(),
        rep.subsets_visited
    );
    let json = json!({ "report": rep, "witness_vertices": witness });
    Ok(Run::ok(Artifact::new(csv, json)).with_summary(format!(
        "anchored ratio {} over {} subsets",
        b.ratio, rep.subsets_visited
    )))
}

#[derive(Serialize)]
struct ClusterRow {
    cluster: u64,
    vertices: usize,
    subsets: usize,
    holds: bool,
    non_additive: usize,
    pieces: usize,
    pieces_regular: usize,
}

fn cutcheck(a: &crate::CutcheckArgs, seed: u64) -> Result<Run> {
    // the piece shape is only asserted when the left factor is a line
    let line_regime = a.left.alpha_min == 1 && a.left.alpha_max == 1;
    let mut rows = Vec::new();
    for i in 0..a.clusters {
        let s = derive_seed(seed, &[i]);
        let g = host(&a.left, &a.right, a.h, s)?;
        let root = g
            .root()
            .ok_or_else(|| anyhow!("window has no level-0 root"))?;
        let cluster = g.component_of(root);
        let mut rng = ChaCha8Rng::seed_from_u64(s);
        let mut samples: Vec<SubsetSelection> = (0..a.subsets)
            .map(|_| {
                let start = cluster[rng.random_range(0..cluster.len())];
                let size = rng.random_range(2..=a.max_size.max(2));
                random_connected_subset(&g, start, size, &mut rng)
            })
            .collect();
        for radius in 1..=3 {
            let centre = cluster[rng.random_range(0..cluster.len())];
            samples.push(bfs_ball(&g, centre, radius));
        }
        let rep = cut_lower_bound_check(&g, &samples);
        let reduced = g.remanent_subgraph();
        let comps = reduced.components();
        let regular = comps
            .iter()
            .filter(|c| is_regular_product_piece(&reduced, c, a.left.alpha_min, a.right.alpha_min))
            .count();
        rows.push(ClusterRow {
            cluster: i,
            vertices: cluster.len(),
            subsets: samples.len(),
            holds: rep.holds,
            non_additive: rep.samples.iter().filter(|s| !s.additive).count(),
            pieces: comps.len(),
            pieces_regular: regular,
        });
    }
    let passed = rows
        .iter()
        .all(|r| r.holds && (!line_regime || r.pieces == r.pieces_regular));
    let mut csv =
        String::from("cluster,vertices,subsets,holds,non_additive,pieces,pieces_regular\n");
    for r in &rows {
        csv.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.cluster, r.vertices, r.subsets, r.holds, r.non_additive, r.pieces, r.pieces_regular
        ));
    }
    let failing = rows.iter().filter(|r| !r.holds).count();
    Ok(Run::ok(Artifact::new(csv, &rows))
        .with_summary(format!(
            "{} clusters, {failing} with a failing inequality",
            rows.len()
        ))
        .check(passed))
}

#[derive(Serialize)]
struct UnionRow {
    instance: u64,
    split_at: Option<String>,
    components_first: usize,
    components_second: usize,
    components_union: usize,
    components_bridged: Option<usize>,
    holds: bool,
}

fn lemma11(a: &crate::Lemma11Args, seed: u64) -> Result<Run> {
    let mut rows = Vec::new();
    for i in 0..a.instances {
        let s = derive_seed(seed, &[i]);
        let ambient = window(&a.ambient, a.h, s, Side::Right)?;
        let left = window(&a.left, a.h, s, Side::Left)?;
        let marked: Vec<NodeId> = ambient
            .iter_nodes()
            .filter(|&v| v.level > ambient.root_level() && ambient.node(v).marked)
            .collect();
        if marked.is_empty() {
            rows.push(UnionRow {
                instance: i,
                split_at: None,
                components_first: 0,
                components_second: 0,
                components_union: 0,
                components_bridged: None,
                holds: true,
            });
            continue;
        }
        let c = marked[(derive_seed(s, &[1]) % marked.len() as u64) as usize];
        let first = ambient.without_branch(c)?;
        let second = ambient.subtree(c)?;
        let parent = first
            .find(&ambient.address(ambient.parent(c).expect("non-root")))
            .expect("parent survives the split");
        let bridge = Bridge {
            from: Part::First,
            parent,
        };
        let rep = union_product_check(&left, &first, &second, Some(bridge))?;
        rows.push(UnionRow {
            instance: i,
            split_at: Some(ambient.address(c).label()),
            components_first: rep.components_first,
            components_second: rep.components_second,
            holds: rep.holds && rep.components_union == 2 && rep.components_bridged == Some(1),
            components_union: rep.components_union,
            components_bridged: rep.components_bridged,
        });
    }
    let mut csv = String::from(
        "instance,split_at,components_first,components_second,components_union,components_bridged,holds\n",
    );
    for r in &rows {
        csv.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.instance,
            r.split_at.as_deref().unwrap_or(""),
            r.components_first,
            r.components_second,
            r.components_union,
            r.components_bridged
                .map(|b| b.to_string())
                .unwrap_or_default(),
            r.holds
        ));
    }
    let skipped = rows.iter().filter(|r| r.split_at.is_none()).count();
    let passed = rows.iter().all(|r| r.holds);
    Ok(Run::ok(Artifact::new(csv, &rows))
        .with_summary(format!(
            "{} instances, {skipped} without a marked vertex, {}",
            rows.len(),
            if passed { "all hold" } else { "some fail" }
        ))
        .check(passed))
}

fn allclosed(left: &TreeParams, right: &TreeParams, n: u32) -> Result<Run> {
    let ml = m_n(left, n)?;
    let mr = m_n(right, n)?;
    let p = all_closed_probability(left, right, n)?;
    let exact = all_closed_probability_exact(left, right, n)?;
    let csv =
        format!("N,M_left,M_right,probability,probability_exact\n{n},{ml},{mr},{p},{exact}\n");
    let json = json!({
        "N": n,
        "M_left": ml.to_string(),
        "M_right": mr.to_string(),
        "probability": p,
        "probability_exact": exact.to_string(),
    });
    Ok(Run::ok(Artifact::new(csv, json)).with_summary(format!("M_N = {ml} (left), {mr} (right)")))
}
