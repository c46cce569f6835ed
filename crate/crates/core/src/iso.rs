//! Exact boundary counts and isoperimetric ratios inside a host product.
//!
//! Two boundary conventions are used. The outer boundary of `W` is the set of
//! non-members adjacent to `W`. The inner count looks at the levels: a member
//! is exposed upward if it has a non-member neighbour one level up, exposed
//! downward likewise, and the inner count is the number of upward-exposed
//! plus downward-exposed members. On windows of height at least one this
//! equals the size of the inner vertex boundary; a lone vertex exposed on
//! both sides counts twice.

use std::cmp::Ordering;
use std::collections::{HashSet, VecDeque};

use num_traits::Zero;
use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Serialize, Serializer};

use crate::bits::{BitSource, VertexAddress};
use crate::error::{HoroError, Result};
use crate::horo::{build_product, HoroGraph, LevelForest, VertexIdx};
use crate::tree::{extend_window, level_counts, LevelCounts, LeveledTree, NodeId};
use crate::Exact;

/// Largest subset size the exhaustive anchored search accepts by default.
pub const DEFAULT_MAX_SUBSET_SIZE: usize = 12;
/// Default cap on subsets visited by the exhaustive anchored search.
pub const DEFAULT_MAX_SUBSETS: u64 = 200_000_000;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubsetSelection {
    members: Vec<VertexIdx>,
}

impl SubsetSelection {
    pub fn new(host: &HoroGraph, members: impl IntoIterator<Item = VertexIdx>) -> Result<Self> {
        let mut members: Vec<VertexIdx> = members.into_iter().collect();
        members.sort_unstable();
        members.dedup();
        if let Some(&bad) = members.iter().find(|&&v| v as usize >= host.vertex_count()) {
            return Err(HoroError::UnknownVertex(format!("vertex index {bad}")));
        }
        Ok(Self { members })
    }

    pub fn all(host: &HoroGraph) -> Self {
        Self {
            members: (0..host.vertex_count() as VertexIdx).collect(),
        }
    }

    pub fn members(&self) -> &[VertexIdx] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn contains(&self, v: VertexIdx) -> bool {
        self.members.binary_search(&v).is_ok()
    }

    fn mask(&self, host: &HoroGraph) -> Vec<bool> {
        let mut m = vec![false; host.vertex_count()];
        for &v in &self.members {
            m[v as usize] = true;
        }
        m
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundaryMode {
    Outer,
    Inner,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IsoReport {
    pub mode: BoundaryMode,
    pub boundary: u64,
    pub volume: u64,
    pub ratio: Exact,
    pub witness: Option<Vec<VertexIdx>>,
}

impl IsoReport {
    fn new(mode: BoundaryMode, boundary: u64, volume: u64) -> Self {
        Self {
            mode,
            boundary,
            volume,
            ratio: Exact::new(u128::from(boundary), u128::from(volume)),
            witness: None,
        }
    }
}

impl Serialize for IsoReport {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct Wire<'a> {
            mode: BoundaryMode,
            boundary: u64,
            volume: u64,
            ratio_num: String,
            ratio_den: String,
            #[serde(skip_serializing_if = "Option::is_none")]
            witness: Option<&'a Vec<VertexIdx>>,
        }
        Wire {
            mode: self.mode,
            boundary: self.boundary,
            volume: self.volume,
            ratio_num: self.ratio.numer().to_string(),
            ratio_den: self.ratio.denom().to_string(),
            witness: self.witness.as_ref(),
        }
        .serialize(s)
    }
}

/// Non-members adjacent to some member.
pub fn outer_boundary(host: &HoroGraph, sel: &SubsetSelection) -> Vec<VertexIdx> {
    let mask = sel.mask(host);
    let mut out: Vec<VertexIdx> = sel
        .members
        .iter()
        .flat_map(|&v| host.neighbor_ids(v))
        .filter(|&w| !mask[w as usize])
        .collect();
    out.sort_unstable();
    out.dedup();
    out
}

/// Members exposed upward and members exposed downward.
pub fn inner_boundary_sides(
    host: &HoroGraph,
    sel: &SubsetSelection,
) -> (Vec<VertexIdx>, Vec<VertexIdx>) {
    let mask = sel.mask(host);
    let mut up = Vec::new();
    let mut down = Vec::new();
    for &v in &sel.members {
        let level = host.vertex(v).level;
        let mut exposed = (false, false);
        for w in host.neighbor_ids(v).filter(|&w| !mask[w as usize]) {
            if host.vertex(w).level > level {
                exposed.0 = true;
            } else {
                exposed.1 = true;
            }
        }
        if exposed.0 {
            up.push(v);
        }
        if exposed.1 {
            down.push(v);
        }
    }
    (up, down)
}

/// Members adjacent to at least one non-member.
pub fn inner_boundary(host: &HoroGraph, sel: &SubsetSelection) -> Vec<VertexIdx> {
    let (mut up, down) = inner_boundary_sides(host, sel);
    up.extend(down);
    up.sort_unstable();
    up.dedup();
    up
}

pub fn iso_ratio(host: &HoroGraph, sel: &SubsetSelection, mode: BoundaryMode) -> Result<IsoReport> {
    if sel.is_empty() {
        return Err(HoroError::EmptySelection);
    }
    let boundary = match mode {
        BoundaryMode::Outer => outer_boundary(host, sel).len(),
        BoundaryMode::Inner => {
            let (up, down) = inner_boundary_sides(host, sel);
            up.len() + down.len()
        }
    };
    Ok(IsoReport::new(mode, boundary as u64, sel.len() as u64))
}

/// Numerator and denominator of the window ratio: extreme-level counts
/// `X'_h + X_h` over `sum_j X'_{-j} X_j`, with `X'` indexed by the left
/// factor's own level.
pub fn folner_counts(left: &LevelCounts, right: &LevelCounts, h: i64) -> Result<(u128, u128)> {
    let get = |c: &LevelCounts, level: i64, side: &str| {
        c.get(level).map(u128::from).ok_or_else(|| {
            HoroError::InvalidParams(format!("{side} counts do not cover level {level}"))
        })
    };
    let boundary = get(left, h, "left")? + get(right, h, "right")?;
    let mut volume = 0u128;
    for j in -h..=h {
        let term = get(left, -j, "left")? * get(right, j, "right")?;
        if term == 0 {
            return Err(HoroError::ZeroVolume { level: j });
        }
        volume = volume
            .checked_add(term)
            .ok_or(HoroError::Overflow { level: j })?;
    }
    Ok((boundary, volume))
}

pub fn folner_ratio(left: &LevelCounts, right: &LevelCounts, h: i64) -> Result<Exact> {
    let (b, v) = folner_counts(left, right, h)?;
    Ok(Exact::new(b, v))
}

/// One row of a per-h Følner table.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FolnerRow {
    pub h: i64,
    pub x_left_top: u64,
    pub x_right_top: u64,
    pub volume: u128,
    pub ratio_num: u128,
    pub ratio_den: u128,
}

impl FolnerRow {
    pub fn new(left: &LevelCounts, right: &LevelCounts, h: i64) -> Result<Self> {
        let (_, volume) = folner_counts(left, right, h)?;
        let r = folner_ratio(left, right, h)?;
        Ok(Self {
            h,
            x_left_top: left.get(h).unwrap(),
            x_right_top: right.get(h).unwrap(),
            volume,
            ratio_num: *r.numer(),
            ratio_den: *r.denom(),
        })
    }
}

pub fn folner_table_csv(rows: &[FolnerRow]) -> String {
    let mut out = String::from("h,X_left_top,X_right_top,volume,ratio_num,ratio_den\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.h, r.x_left_top, r.x_right_top, r.volume, r.ratio_num, r.ratio_den
        ));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CrosscheckReport {
    pub h: i64,
    /// The window is the chain-child subtree of the enlarged window.
    pub window_embedded: bool,
    /// One more level grown by extension agrees with the enlarged window.
    pub extension_consistent: bool,
    pub inner_boundary: u64,
    pub expected_boundary: u128,
    pub volume: u64,
    pub expected_volume: u128,
    pub holds: bool,
}

/// Embeds the `h`-windows in the `(h+1)`-windows drawn from the same bits,
/// builds their product, and compares the inner boundary of the embedded
/// window with `X'_h + X_h` and its size with the counted volume.
pub fn window_boundary_crosscheck(
    left: &LeveledTree,
    right: &LeveledTree,
    h: i64,
    bits: (&BitSource, &BitSource),
) -> Result<CrosscheckReport> {
    for (name, t) in [("left", left), ("right", right)] {
        if t.root_level() != -h || i64::from(t.height()) != 2 * h || !t.origin().path.is_empty() {
            return Err(HoroError::InvalidParams(format!(
                "{name} factor is not the window rooted at level {} of height {}",
                -h,
                2 * h
            )));
        }
        t.params().require_survival()?;
    }
    let enlarge = |t: &LeveledTree, b: &BitSource| -> Result<(LeveledTree, bool, bool)> {
        let big = LeveledTree::sample(
            t.params(),
            &VertexAddress::chain(-h - 1),
            (2 * h + 2) as u32,
            b,
            crate::tree::DEFAULT_VERTEX_CAP,
        )?;
        let inner = big
            .find(&VertexAddress::chain(-h))
            .ok_or_else(|| HoroError::InvalidParams("chain vertex missing".into()))?;
        let sub = big.subtree(inner)?;
        let embedded = sub.truncated((2 * h) as u32) == *t;
        let extended = extend_window(t, 1, b)? == sub;
        Ok((big, embedded, extended))
    };
    let (big_left, el, xl) = enlarge(left, bits.0)?;
    let (big_right, er, xr) = enlarge(right, bits.1)?;
    let host = build_product(&big_left, &big_right)?;
    let in_left = window_mask(host.left(), h);
    let in_right = window_mask(host.right(), h);
    let members = (0..host.vertex_count() as VertexIdx).filter(|&v| {
        in_left.contains(&host.left_node(v)) && in_right.contains(&host.right_node(v))
    });
    let sel = SubsetSelection::new(&host, members)?;
    let report = iso_ratio(&host, &sel, BoundaryMode::Inner)?;
    let (expected_boundary, expected_volume) =
        folner_counts(&level_counts(left), &level_counts(right), h)?;
    let holds = el
        && er
        && xl
        && xr
        && u128::from(report.boundary) == expected_boundary
        && u128::from(report.volume) == expected_volume;
    Ok(CrosscheckReport {
        h,
        window_embedded: el && er,
        extension_consistent: xl && xr,
        inner_boundary: report.boundary,
        expected_boundary,
        volume: report.volume,
        expected_volume,
        holds,
    })
}

/// Factor vertices below the chain vertex at `-h`, down to level `h`.
fn window_mask(forest: &LevelForest, h: i64) -> HashSet<NodeId> {
    let mut out = HashSet::new();
    let Some(top) = forest.find(&VertexAddress::chain(-h)) else {
        return out;
    };
    let mut queue = VecDeque::from([top]);
    while let Some(v) = queue.pop_front() {
        out.insert(v);
        if v.level < h {
            for &c in &forest.get(v).unwrap().children {
                queue.push_back(NodeId::new(v.level + 1, c));
            }
        }
    }
    out
}

fn descends_from(forest: &LevelForest, apex: NodeId, mut v: NodeId) -> bool {
    while v.level > apex.level {
        match forest.get(v).and_then(|n| n.parent) {
            Some(p) => v = NodeId::new(v.level - 1, p),
            None => return false,
        }
    }
    v == apex
}

/// Pairs `<u', u>` of the host with `apex_right <= u` and `apex_left <= u'`
/// (ancestor or equal), over the `n + 1` product levels from the level of
/// `apex_right` up.
pub fn tetraeder_subset(
    host: &HoroGraph,
    apex_right: NodeId,
    apex_left: NodeId,
    n: u32,
) -> Result<SubsetSelection> {
    let n = i64::from(n);
    if host.right().get(apex_right).is_none() {
        return Err(HoroError::InvalidApex(format!(
            "{apex_right:?} not in right factor"
        )));
    }
    if host.left().get(apex_left).is_none() {
        return Err(HoroError::InvalidApex(format!(
            "{apex_left:?} not in left factor"
        )));
    }
    let a = apex_right.level;
    if apex_left.level != -(a + n) {
        return Err(HoroError::InvalidApex(format!(
            "left apex level {} must equal {}",
            apex_left.level,
            -(a + n)
        )));
    }
    let (lo, hi) = host.level_range();
    if a < lo || a + n > hi {
        return Err(HoroError::InvalidApex(format!(
            "levels {a}..={} exceed host levels {lo}..={hi}",
            a + n
        )));
    }
    let members: Vec<VertexIdx> = (a..=a + n)
        .flat_map(|l| host.level_ids(l))
        .filter(|&v| {
            descends_from(host.right(), apex_right, host.right_node(v))
                && descends_from(host.left(), apex_left, host.left_node(v))
        })
        .collect();
    let members = match host.root() {
        Some(root) => {
            let comp = host.component_of(root);
            members
                .into_iter()
                .filter(|v| comp.binary_search(v).is_ok())
                .collect()
        }
        None => members,
    };
    SubsetSelection::new(host, members)
}

/// Inner boundary and size of a tetraeder from the level sizes below each
/// apex: `right[k]` vertices `k` levels under the right apex and `left[k]`
/// under the left one, `k = 0..=n`. Product level `a + k` pairs `right[k]`
/// with `left[n - k]`; only the two extreme levels are exposed.
pub fn tetraeder_counts(left: &[u64], right: &[u64]) -> Result<(u128, u128)> {
    if left.is_empty() || left.len() != right.len() {
        return Err(HoroError::InvalidParams(
            "apex level sizes must cover the same n + 1 levels".into(),
        ));
    }
    let n = left.len() - 1;
    let pair = |k: usize| u128::from(right[k]) * u128::from(left[n - k]);
    let volume: u128 = (0..=n).map(pair).sum();
    if volume == 0 {
        return Err(HoroError::EmptySelection);
    }
    let boundary = if n == 0 {
        2 * pair(0)
    } else {
        pair(0) + pair(n)
    };
    Ok((boundary, volume))
}

/// Closed-form tetraeder ratio in `DL(beta, beta)`.
pub fn tetraeder_ratio_regular(beta: u32, n: u32) -> Result<Exact> {
    let sizes: Vec<u64> = (0..=n).map(|k| u64::from(beta).pow(k)).collect();
    let (b, v) = tetraeder_counts(&sizes, &sizes)?;
    Ok(Exact::new(b, v))
}

#[derive(Debug, Clone, Copy)]
pub struct EnumerationLimits {
    pub max_size: usize,
    pub max_subsets: u64,
}

impl Default for EnumerationLimits {
    fn default() -> Self {
        Self {
            max_size: DEFAULT_MAX_SUBSET_SIZE,
            max_subsets: DEFAULT_MAX_SUBSETS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AnchoredReport {
    pub n_max: usize,
    pub best: IsoReport,
    pub subsets_visited: u64,
}

/// Minimum outer ratio over connected subsets of size at most `n_max`
/// containing `root`; ties go to the lexicographically least sorted witness.
pub fn anchored_constant_exact(
    host: &HoroGraph,
    root: VertexIdx,
    n_max: usize,
) -> Result<AnchoredReport> {
    anchored_constant_exact_with(host, root, n_max, EnumerationLimits::default())
}

pub fn anchored_constant_exact_with(
    host: &HoroGraph,
    root: VertexIdx,
    n_max: usize,
    limits: EnumerationLimits,
) -> Result<AnchoredReport> {
    if root as usize >= host.vertex_count() {
        return Err(HoroError::UnknownVertex(format!("vertex index {root}")));
    }
    if n_max == 0 {
        return Err(HoroError::EmptySelection);
    }
    if n_max > limits.max_size {
        return Err(HoroError::Budget {
            what: "subset size",
            budget: limits.max_size as u64,
        });
    }
    let mut search = AnchoredSearch::new(host, n_max, limits.max_subsets);
    search.add(root);
    let mut ext = Vec::new();
    for w in host.neighbor_ids(root) {
        if search.status[w as usize] == Status::Free {
            search.status[w as usize] = Status::Ext;
            ext.push(w);
        }
    }
    search.recurse(&ext)?;
    let (b, v, witness) = search.best.expect("root alone is visited");
    let mut best = IsoReport::new(BoundaryMode::Outer, b, v);
    best.witness = Some(witness);
    Ok(AnchoredReport {
        n_max,
        best,
        subsets_visited: search.visited,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Status {
    Free,
    Member,
    Ext,
    Banned,
}

struct AnchoredSearch<'a> {
    host: &'a HoroGraph,
    n_max: usize,
    budget: u64,
    status: Vec<Status>,
    /// Number of members adjacent to each vertex.
    touching: Vec<u32>,
    members: Vec<VertexIdx>,
    boundary: u64,
    visited: u64,
    best: Option<(u64, u64, Vec<VertexIdx>)>,
}

impl<'a> AnchoredSearch<'a> {
    fn new(host: &'a HoroGraph, n_max: usize, budget: u64) -> Self {
        Self {
            host,
            n_max,
            budget,
            status: vec![Status::Free; host.vertex_count()],
            touching: vec![0; host.vertex_count()],
            members: Vec::new(),
            boundary: 0,
            visited: 0,
            best: None,
        }
    }

    fn add(&mut self, w: VertexIdx) {
        if self.touching[w as usize] > 0 {
            self.boundary -= 1;
        }
        self.status[w as usize] = Status::Member;
        self.members.push(w);
        for x in self.host.neighbor_ids(w) {
            self.touching[x as usize] += 1;
            if self.touching[x as usize] == 1 && self.status[x as usize] != Status::Member {
                self.boundary += 1;
            }
        }
    }

    fn remove(&mut self, w: VertexIdx) {
        self.members.pop();
        for x in self.host.neighbor_ids(w) {
            self.touching[x as usize] -= 1;
            if self.touching[x as usize] == 0 && self.status[x as usize] != Status::Member {
                self.boundary -= 1;
            }
        }
        if self.touching[w as usize] > 0 {
            self.boundary += 1;
        }
    }

    fn visit(&mut self) -> Result<()> {
        self.visited += 1;
        if self.visited > self.budget {
            return Err(HoroError::Budget {
                what: "connected subsets",
                budget: self.budget,
            });
        }
        let (b, v) = (self.boundary, self.members.len() as u64);
        let better = match &self.best {
            None => true,
            Some((bb, bv, witness)) => {
                match (u128::from(b) * u128::from(*bv)).cmp(&(u128::from(*bb) * u128::from(v))) {
                    Ordering::Less => true,
                    Ordering::Greater => false,
                    Ordering::Equal => {
                        let mut sorted = self.members.clone();
                        sorted.sort_unstable();
                        sorted < *witness
                    }
                }
            }
        };
        if better {
            let mut sorted = self.members.clone();
            sorted.sort_unstable();
            self.best = Some((b, v, sorted));
        }
        Ok(())
    }

    /// Each connected superset is reached once: candidates earlier in `ext`
    /// are banned for the later branches.
    fn recurse(&mut self, ext: &[VertexIdx]) -> Result<()> {
        self.visit()?;
        if self.members.len() == self.n_max {
            return Ok(());
        }
        for (i, &w) in ext.iter().enumerate() {
            self.add(w);
            let mut next: Vec<VertexIdx> = ext[i + 1..].to_vec();
            let fresh_from = next.len();
            for x in self.host.neighbor_ids(w) {
                if self.status[x as usize] == Status::Free {
                    self.status[x as usize] = Status::Ext;
                    next.push(x);
                }
            }
            let result = self.recurse(&next);
            for &x in &next[fresh_from..] {
                self.status[x as usize] = Status::Free;
            }
            self.status[w as usize] = Status::Banned;
            self.remove(w);
            result?;
        }
        for &w in ext {
            self.status[w as usize] = Status::Ext;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ComponentRatio {
    pub boundary: u64,
    pub volume: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CutSample {
    pub volume: u64,
    pub boundary_host: u64,
    pub boundary_reduced: u64,
    /// Components of the reduced graph restricted to the sample, with their
    /// boundaries in the reduced graph.
    pub components: Vec<ComponentRatio>,
    /// Whether the component boundaries add up to the reduced boundary
    /// (they can overlap when components share outside neighbours).
    pub additive: bool,
    pub host_dominates: bool,
    pub mediant_holds: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CutReport {
    pub samples: Vec<CutSample>,
    pub holds: bool,
}

/// Compares each sample's outer ratio in the host with its ratio after
/// removing the percolative edges, and checks the mediant bound over the
/// pieces the removal splits it into.
pub fn cut_lower_bound_check(host: &HoroGraph, samples: &[SubsetSelection]) -> CutReport {
    let reduced = host.remanent_subgraph();
    let samples: Vec<CutSample> = samples
        .iter()
        .map(|sel| {
            let boundary_host = outer_boundary(host, sel).len() as u64;
            let boundary_reduced = outer_boundary(&reduced, sel).len() as u64;
            let components: Vec<ComponentRatio> = components_within(&reduced, sel)
                .into_iter()
                .map(|c| {
                    let volume = c.len() as u64;
                    let s = SubsetSelection { members: c };
                    ComponentRatio {
                        boundary: outer_boundary(&reduced, &s).len() as u64,
                        volume,
                    }
                })
                .collect();
            let total_b: u64 = components.iter().map(|c| c.boundary).sum();
            let total_v: u64 = components.iter().map(|c| c.volume).sum();
            let pooled = Exact::new(u128::from(total_b), u128::from(total_v));
            let min = components
                .iter()
                .map(|c| Exact::new(u128::from(c.boundary), u128::from(c.volume)))
                .min()
                .unwrap_or_else(Exact::zero);
            CutSample {
                volume: sel.len() as u64,
                boundary_host,
                boundary_reduced,
                additive: total_b == boundary_reduced,
                components,
                host_dominates: boundary_host >= boundary_reduced,
                mediant_holds: pooled >= min,
            }
        })
        .collect();
    let holds = samples.iter().all(|s| s.host_dominates && s.mediant_holds);
    CutReport { samples, holds }
}

/// Connected components of the subgraph of `graph` induced by `sel`.
pub fn components_within(graph: &HoroGraph, sel: &SubsetSelection) -> Vec<Vec<VertexIdx>> {
    let mut seen: HashSet<VertexIdx> = HashSet::new();
    let mut comps = Vec::new();
    for &s in sel.members() {
        if !seen.insert(s) {
            continue;
        }
        let mut comp = vec![s];
        let mut queue = VecDeque::from([s]);
        while let Some(u) = queue.pop_front() {
            for w in graph.neighbor_ids(u) {
                if sel.contains(w) && seen.insert(w) {
                    comp.push(w);
                    queue.push_back(w);
                }
            }
        }
        comp.sort_unstable();
        comps.push(comp);
    }
    comps
}

/// Whether a vertex set of `graph` is exactly the horocyclic product of its
/// two projections, each a rooted tree in which every vertex above the
/// bottom has `alpha_left` (resp. `alpha_right`) unmarked children, i.e. a
/// window piece of `DL(alpha_left, alpha_right)`.
pub fn is_regular_product_piece(
    graph: &HoroGraph,
    members: &[VertexIdx],
    alpha_left: u32,
    alpha_right: u32,
) -> bool {
    if members.is_empty() {
        return false;
    }
    let (lp, rp) = crate::horo::projections(graph, members);
    let regular_tree =
        |forest: &LevelForest, nodes: &std::collections::BTreeSet<NodeId>, alpha: u32| {
            let top = nodes.iter().map(|v| v.level).min().unwrap();
            let bottom = nodes.iter().map(|v| v.level).max().unwrap();
            if nodes.iter().filter(|v| v.level == top).count() != 1 {
                return false;
            }
            nodes.iter().all(|&v| {
                let node = forest.get(v).unwrap();
                if v.level > top {
                    let Some(p) = node.parent else { return false };
                    if node.marked || !nodes.contains(&NodeId::new(v.level - 1, p)) {
                        return false;
                    }
                }
                let kids = node
                    .children
                    .iter()
                    .filter(|&&c| nodes.contains(&NodeId::new(v.level + 1, c)))
                    .count();
                if v.level < bottom {
                    kids == alpha as usize
                } else {
                    kids == 0
                }
            })
        };
    if !regular_tree(graph.left(), &lp, alpha_left)
        || !regular_tree(graph.right(), &rp, alpha_right)
    {
        return false;
    }
    let paired: usize = (rp.iter().map(|v| v.level).min().unwrap()
        ..=rp.iter().map(|v| v.level).max().unwrap())
        .map(|l| {
            lp.iter().filter(|v| v.level == -l).count() * rp.iter().filter(|v| v.level == l).count()
        })
        .sum();
    paired == members.len()
}

/// Connected subset of `size` vertices grown from `start` by repeatedly
/// adding a uniformly chosen outer-boundary vertex. Stops early if the
/// component of `start` is smaller.
pub fn random_connected_subset<R: Rng + ?Sized>(
    host: &HoroGraph,
    start: VertexIdx,
    size: usize,
    rng: &mut R,
) -> SubsetSelection {
    let mut members = vec![start];
    let mut inside: HashSet<VertexIdx> = HashSet::from([start]);
    let mut frontier: Vec<VertexIdx> = Vec::new();
    let mut in_frontier: HashSet<VertexIdx> = HashSet::new();
    let push_nbrs = |v: VertexIdx,
                     frontier: &mut Vec<VertexIdx>,
                     in_frontier: &mut HashSet<VertexIdx>,
                     inside: &HashSet<VertexIdx>| {
        for w in host.neighbor_ids(v) {
            if !inside.contains(&w) && in_frontier.insert(w) {
                frontier.push(w);
            }
        }
    };
    push_nbrs(start, &mut frontier, &mut in_frontier, &inside);
    while members.len() < size && !frontier.is_empty() {
        let i = rng.random_range(0..frontier.len());
        let w = frontier.swap_remove(i);
        in_frontier.remove(&w);
        inside.insert(w);
        members.push(w);
        push_nbrs(w, &mut frontier, &mut in_frontier, &inside);
    }
    SubsetSelection::new(host, members).expect("members come from the host")
}

/// Vertices within graph distance `radius` of `center`.
pub fn bfs_ball(host: &HoroGraph, center: VertexIdx, radius: u32) -> SubsetSelection {
    let mut dist = std::collections::HashMap::from([(center, 0u32)]);
    let mut queue = VecDeque::from([center]);
    while let Some(u) = queue.pop_front() {
        let d = dist[&u];
        if d == radius {
            continue;
        }
        for w in host.neighbor_ids(u) {
            if let std::collections::hash_map::Entry::Vacant(e) = dist.entry(w) {
                e.insert(d + 1);
                queue.push_back(w);
            }
        }
    }
    SubsetSelection::new(host, dist.into_keys()).expect("members come from the host")
}

/// Uniformly chosen vertex of the host.
pub fn random_vertex<R: Rng + ?Sized>(host: &HoroGraph, rng: &mut R) -> VertexIdx {
    let ids: Vec<VertexIdx> = (0..host.vertex_count() as VertexIdx).collect();
    *ids.choose(rng).expect("host is non-empty")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::horo::{build_dl_window, HoroVertex};
    use crate::tree::{sample_window_tree, TreeParams};

    fn ratio(a: u128, b: u128) -> Exact {
        Exact::new(a, b)
    }

    #[test]
    fn boundaries_of_full_set_vanish() {
        let g = build_dl_window(2, 3, 1).unwrap();
        let all = SubsetSelection::all(&g);
        assert!(outer_boundary(&g, &all).is_empty());
        assert!(inner_boundary(&g, &all).is_empty());
        let r = iso_ratio(&g, &all, BoundaryMode::Outer).unwrap();
        assert_eq!(r.ratio, Exact::zero());
    }

    #[test]
    fn singleton_boundaries() {
        let g = build_dl_window(3, 2, 2).unwrap();
        let root = g.root().unwrap();
        let s = SubsetSelection::new(&g, [root]).unwrap();
        assert_eq!(outer_boundary(&g, &s).len(), 5);
        assert_eq!(inner_boundary(&g, &s), vec![root]);
        let inner = iso_ratio(&g, &s, BoundaryMode::Inner).unwrap();
        assert_eq!((inner.boundary, inner.volume), (2, 1));
    }

    #[test]
    fn path_segments() {
        let g = build_dl_window(1, 1, 5).unwrap();
        for n in 1..=9u32 {
            // segment of n vertices centred away from the path ends
            let lo = g.level_ids(-4).start;
            let sel = SubsetSelection::new(&g, lo..lo + n).unwrap();
            assert_eq!(outer_boundary(&g, &sel).len(), 2);
            let r = iso_ratio(&g, &sel, BoundaryMode::Outer).unwrap();
            assert_eq!(r.ratio, ratio(2, u128::from(n)));
            if n >= 2 {
                assert_eq!(inner_boundary(&g, &sel), vec![lo, lo + n - 1]);
            }
        }
        let empty = SubsetSelection::new(&g, []).unwrap();
        assert_eq!(
            iso_ratio(&g, &empty, BoundaryMode::Outer).unwrap_err(),
            HoroError::EmptySelection
        );
        assert!(SubsetSelection::new(&g, [99]).is_err());
    }

    #[test]
    fn folner_examples() {
        let one = LevelCounts {
            base_level: 0,
            counts: vec![1],
        };
        assert_eq!(folner_ratio(&one, &one, 0).unwrap(), ratio(2, 1));
        for beta in [2u64, 3] {
            for h in 0..=6i64 {
                let c = LevelCounts {
                    base_level: -h,
                    counts: (0..=2 * h as u32).map(|d| beta.pow(d)).collect(),
                };
                assert_eq!(
                    folner_ratio(&c, &c, h).unwrap(),
                    ratio(2, 2 * h as u128 + 1)
                );
            }
        }
        let extinct = LevelCounts {
            base_level: -1,
            counts: vec![1, 0, 0],
        };
        let full = LevelCounts {
            base_level: -1,
            counts: vec![1, 2, 4],
        };
        assert!(matches!(
            folner_ratio(&full, &extinct, 1),
            Err(HoroError::ZeroVolume { .. })
        ));
        assert!(folner_ratio(&full, &full, 2).is_err());
    }

    #[test]
    fn crosscheck_small_cases() {
        let bl = BitSource::new(3, BitSource::LEFT_TAG);
        let br = BitSource::new(3, BitSource::RIGHT_TAG);
        let p = TreeParams::regular(2);
        let l = sample_window_tree(&p, -1, 2, &bl).unwrap();
        let r = sample_window_tree(&p, -1, 2, &br).unwrap();
        let rep = window_boundary_crosscheck(&l, &r, 1, (&bl, &br)).unwrap();
        assert_eq!(rep.inner_boundary, 8);
        assert!(rep.holds, "{rep:?}");
        let l0 = sample_window_tree(&p, 0, 0, &bl).unwrap();
        let r0 = sample_window_tree(&p, 0, 0, &br).unwrap();
        let rep = window_boundary_crosscheck(&l0, &r0, 0, (&bl, &br)).unwrap();
        assert_eq!(rep.inner_boundary, 2);
        assert!(rep.holds);
        assert!(window_boundary_crosscheck(&l, &r, 2, (&bl, &br)).is_err());
    }

    #[test]
    fn tetraeder_in_regular_window() {
        for beta in [2u32, 3] {
            for n in 0..=4u32 {
                let h = n / 2 + 1 + n % 2;
                let g = build_dl_window(beta, beta, h).unwrap();
                let a = -((n / 2) as i64);
                let right = g.right().find(&VertexAddress::chain(a)).unwrap();
                let left = g
                    .left()
                    .find(&VertexAddress::chain(-(a + i64::from(n))))
                    .unwrap();
                let t = tetraeder_subset(&g, right, left, n).unwrap();
                let b = u128::from(beta);
                assert_eq!(t.len() as u128, (u128::from(n) + 1) * b.pow(n));
                let r = iso_ratio(&g, &t, BoundaryMode::Inner).unwrap();
                assert_eq!(r.ratio, ratio(2, u128::from(n) + 1), "beta {beta} N {n}");
                assert_eq!(tetraeder_ratio_regular(beta, n).unwrap(), r.ratio);
            }
        }
        let g = build_dl_window(2, 2, 2).unwrap();
        let right = g.right().find(&VertexAddress::chain(0)).unwrap();
        let left = g.left().find(&VertexAddress::chain(0)).unwrap();
        assert!(tetraeder_subset(&g, right, left, 1).is_err());
    }

    #[test]
    fn anchored_on_path() {
        for n in 1..=6usize {
            let g = build_dl_window(1, 1, n as u32).unwrap();
            let rep = anchored_constant_exact(&g, g.root().unwrap(), n).unwrap();
            assert_eq!(rep.best.ratio, ratio(2, n as u128), "n = {n}");
            assert_eq!(rep.best.witness.as_ref().unwrap().len(), n);
        }
    }

    #[test]
    fn anchored_singleton_is_degree() {
        let g = build_dl_window(2, 3, 2).unwrap();
        let root = g.root().unwrap();
        let rep = anchored_constant_exact(&g, root, 1).unwrap();
        assert_eq!(rep.best.ratio, ratio(5, 1));
        assert_eq!(rep.subsets_visited, 1);
        assert!(anchored_constant_exact(&g, root, 13).is_err());
        let tight = EnumerationLimits {
            max_size: 12,
            max_subsets: 10,
        };
        assert!(matches!(
            anchored_constant_exact_with(&g, root, 6, tight),
            Err(HoroError::Budget { .. })
        ));
    }

    #[test]
    fn enumeration_counts_connected_subsets() {
        // brute force over all subsets of a small host
        let g = build_dl_window(1, 2, 1).unwrap();
        let n = g.vertex_count();
        assert!(n <= 16);
        let root = g.root().unwrap();
        for k in 1..=5 {
            let mut brute = 0u64;
            for mask in 0u32..(1 << n) {
                if mask & (1 << root) == 0 || mask.count_ones() as usize > k {
                    continue;
                }
                let sel =
                    SubsetSelection::new(&g, (0..n as u32).filter(|i| mask >> i & 1 == 1)).unwrap();
                if components_within(&g, &sel).len() == 1 {
                    brute += 1;
                }
            }
            let rep = anchored_constant_exact(&g, root, k).unwrap();
            assert_eq!(rep.subsets_visited, brute, "k = {k}");
        }
    }

    #[test]
    fn cut_check_without_percolative_edges() {
        let g = build_dl_window(2, 2, 2).unwrap();
        let sel = SubsetSelection::new(&g, g.level_ids(0)).unwrap();
        let rep = cut_lower_bound_check(&g, &[sel]);
        assert!(rep.holds);
        let s = &rep.samples[0];
        assert_eq!(s.boundary_host, s.boundary_reduced);
    }

    #[test]
    fn regular_piece_detection() {
        let g = build_dl_window(1, 2, 2).unwrap();
        let all: Vec<VertexIdx> = (0..g.vertex_count() as VertexIdx).collect();
        assert!(is_regular_product_piece(&g, &all, 1, 2));
        assert!(!is_regular_product_piece(&g, &all, 1, 3));
        assert!(!is_regular_product_piece(&g, &all[1..], 1, 2));
        let v = HoroVertex {
            level: 0,
            left: 0,
            right: 0,
        };
        let one = [g.id(&v).unwrap()];
        assert!(is_regular_product_piece(&g, &one, 1, 2));
    }

    #[test]
    fn iso_report_json() {
        let g = build_dl_window(1, 1, 2).unwrap();
        let sel = SubsetSelection::new(&g, [1, 2]).unwrap();
        let r = iso_ratio(&g, &sel, BoundaryMode::Outer).unwrap();
        let json = serde_json::to_string(&r).unwrap();
        assert_eq!(
            json,
            r#"{"mode":"outer","boundary":2,"volume":2,"ratio_num":"1","ratio_den":"1"}"#
        );
    }
}
