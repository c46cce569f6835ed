//! Finite windows of percolation subtrees of a regular tree with a fixed end.
//!
//! Levels follow the Busemann coordinate: a parent sits one level below its
//! children. Each vertex enumerates its potential children `1..=alpha_max`;
//! indices `1..=alpha_min` are unmarked and always kept, the rest are marked
//! and kept iff their edge is open.

use std::fmt;
use std::str::FromStr;

use serde::ser::SerializeTuple;
use serde::{Deserialize, Serialize, Serializer};

use crate::bits::{BitSource, EdgeAddress, PathKey, VertexAddress};
use crate::error::{HoroError, Result};

/// Default cap on the number of vertices of one explicit tree.
pub const DEFAULT_VERTEX_CAP: u64 = 10_000_000;

/// Default cap on the number of index tuples the nested-sum oracle visits.
pub const DEFAULT_ENUMERATION_BUDGET: u64 = 1 << 22;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeParams {
    pub alpha_min: u32,
    pub alpha_max: u32,
    pub retention: f64,
}

impl TreeParams {
    pub fn new(alpha_min: u32, alpha_max: u32, retention: f64) -> Result<Self> {
        if alpha_max == 0 {
            return Err(HoroError::InvalidParams(
                "alpha_max must be at least 1".into(),
            ));
        }
        if alpha_min > alpha_max {
            return Err(HoroError::InvalidParams(format!(
                "alpha_min {alpha_min} exceeds alpha_max {alpha_max}"
            )));
        }
        if !(0.0..=1.0).contains(&retention) {
            return Err(HoroError::InvalidParams(format!(
                "retention {retention} outside [0, 1]"
            )));
        }
        Ok(Self {
            alpha_min,
            alpha_max,
            retention,
        })
    }

    /// Full `alpha`-ary tree: no marked edges.
    pub fn regular(alpha: u32) -> Self {
        Self::new(alpha, alpha, 1.0).expect("alpha >= 1")
    }

    pub fn is_marked(&self, child_index: u32) -> bool {
        child_index > self.alpha_min
    }

    pub fn require_survival(&self) -> Result<()> {
        if self.alpha_min == 0 {
            return Err(HoroError::InvalidParams(
                "alpha_min = 0 allows extinction; this operation needs alpha_min >= 1".into(),
            ));
        }
        Ok(())
    }
}

impl fmt::Display for TreeParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{},{},{}",
            self.alpha_min, self.alpha_max, self.retention
        )
    }
}

impl FromStr for TreeParams {
    type Err = HoroError;

    /// `alpha_min,alpha_max,p`
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        let bad = || HoroError::InvalidParams(format!("expected alpha_min,alpha_max,p; got {s:?}"));
        if parts.len() != 3 {
            return Err(bad());
        }
        let alpha_min = parts[0].parse().map_err(|_| bad())?;
        let alpha_max = parts[1].parse().map_err(|_| bad())?;
        let p = parts[2].parse().map_err(|_| bad())?;
        Self::new(alpha_min, alpha_max, p)
    }
}

fn binomial_coefficient(n: u32, k: u32) -> f64 {
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * f64::from(n - i) / f64::from(i + 1))
}

/// Probability that a vertex has exactly `k` children.
pub fn offspring_pmf(params: &TreeParams, k: u32) -> f64 {
    if k < params.alpha_min || k > params.alpha_max {
        return 0.0;
    }
    let trials = params.alpha_max - params.alpha_min;
    let kept = k - params.alpha_min;
    let p = params.retention;
    binomial_coefficient(trials, kept)
        * p.powi(kept as i32)
        * (1.0 - p).powi((trials - kept) as i32)
}

/// Mean offspring `alpha_min + p (alpha_max - alpha_min)`.
pub fn mean_offspring(params: &TreeParams) -> f64 {
    f64::from(params.alpha_min) + params.retention * f64::from(params.alpha_max - params.alpha_min)
}

#[inline]
fn key_open(bits: &BitSource, params: &TreeParams, index: u32, key: PathKey) -> bool {
    !params.is_marked(index) || bits.uniform(key) < params.retention
}

/// Whether the edge at `addr` is present. Unmarked edges are always open.
pub fn edge_open(bits: &BitSource, params: &TreeParams, addr: &EdgeAddress) -> bool {
    key_open(bits, params, addr.last_index(), addr.key())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct NodeId {
    pub level: i64,
    pub index: u32,
}

impl NodeId {
    pub fn new(level: i64, index: u32) -> Self {
        Self { level, index }
    }
}

/// One vertex: index of its parent on the level below (none for the window
/// root), its child index among the parent's potential children, and whether
/// the edge to the parent is marked.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TreeNode {
    pub parent: Option<u32>,
    pub child_index: u32,
    pub marked: bool,
}

impl Serialize for TreeNode {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let mut t = serializer.serialize_tuple(3)?;
        t.serialize_element(&self.parent)?;
        t.serialize_element(&self.child_index)?;
        t.serialize_element(&self.marked)?;
        t.end()
    }
}

impl<'de> Deserialize<'de> for TreeNode {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let (parent, child_index, marked) = <(Option<u32>, u32, bool)>::deserialize(d)?;
        Ok(Self {
            parent,
            child_index,
            marked,
        })
    }
}

/// Canonical serialised form of a window.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeRecord {
    pub root_level: i64,
    pub height: u32,
    pub levels: Vec<Vec<TreeNode>>,
}

#[derive(Debug, Clone)]
pub struct LeveledTree {
    params: TreeParams,
    origin: VertexAddress,
    levels: Vec<Vec<TreeNode>>,
    /// `child_offsets[d][i]..child_offsets[d][i + 1]` are the children of
    /// vertex `i` at depth `d`, as indices into depth `d + 1`.
    child_offsets: Vec<Vec<u32>>,
    keys: Vec<Vec<PathKey>>,
}

impl PartialEq for LeveledTree {
    fn eq(&self, other: &Self) -> bool {
        self.origin == other.origin && self.levels == other.levels
    }
}

impl Eq for LeveledTree {}

/// Samples the window of depth `height` below the chain apex at `root_level`.
pub fn sample_window_tree(
    params: &TreeParams,
    root_level: i64,
    height: u32,
    bits: &BitSource,
) -> Result<LeveledTree> {
    LeveledTree::sample(
        params,
        &VertexAddress::chain(root_level),
        height,
        bits,
        DEFAULT_VERTEX_CAP,
    )
}

/// Extends `tree` by `extra` levels using the same bits; `tree` is a
/// level-prefix of the result.
pub fn extend_window(tree: &LeveledTree, extra: u32, bits: &BitSource) -> Result<LeveledTree> {
    tree.extended(extra, bits, DEFAULT_VERTEX_CAP)
}

/// `counts[j]` = number of vertices of `tree` at level `j`.
pub fn level_counts(tree: &LeveledTree) -> LevelCounts {
    LevelCounts {
        base_level: tree.root_level(),
        counts: tree.levels.iter().map(|l| l.len() as u64).collect(),
    }
}

/// Strict ancestry: `u` lies on the parent path from `v` toward the root.
pub fn is_ancestor(tree: &LeveledTree, u: NodeId, v: NodeId) -> Result<bool> {
    tree.check(u)?;
    tree.check(v)?;
    if u.level >= v.level {
        return Ok(false);
    }
    let mut cur = v;
    while cur.level > u.level {
        cur = tree.parent(cur).expect("non-root vertex has a parent");
    }
    Ok(cur == u)
}

/// Counts the vertices at level `j` of the window rooted at `-h` by summing,
/// over every index tuple of length `h + j`, the product of per-step
/// indicators (unmarked, or marked and open). Shares no state with the
/// sampler beyond the bit source.
pub fn leaf_count_formula(params: &TreeParams, bits: &BitSource, h: i64, j: i64) -> Result<u64> {
    leaf_count_formula_with_budget(params, bits, h, j, DEFAULT_ENUMERATION_BUDGET)
}

pub fn leaf_count_formula_with_budget(
    params: &TreeParams,
    bits: &BitSource,
    h: i64,
    j: i64,
    budget: u64,
) -> Result<u64> {
    if h < 0 || j < -h {
        return Err(HoroError::InvalidParams(format!(
            "need h >= 0 and j >= -h, got h={h}, j={j}"
        )));
    }
    let depth = (h + j) as u32;
    let alpha = params.alpha_max;
    let tuples = u64::from(alpha)
        .checked_pow(depth)
        .filter(|&t| t <= budget)
        .ok_or(HoroError::Budget {
            what: "index tuples",
            budget,
        })?;
    let mut ks = vec![1u32; depth as usize];
    let mut total = 0u64;
    for _ in 0..tuples {
        let term = (1..=ks.len()).all(|l| {
            let k = ks[l - 1];
            if k <= params.alpha_min {
                return true;
            }
            let addr = EdgeAddress {
                root_level: -h,
                path: ks[..l].to_vec(),
            };
            edge_open(bits, params, &addr)
        });
        total += u64::from(term);
        // odometer over {1..=alpha}^depth
        for slot in ks.iter_mut().rev() {
            if *slot < alpha {
                *slot += 1;
                break;
            }
            *slot = 1;
        }
    }
    Ok(total)
}

impl LeveledTree {
    /// Samples the subtree of depth `height` hanging from `origin`.
    pub fn sample(
        params: &TreeParams,
        origin: &VertexAddress,
        height: u32,
        bits: &BitSource,
        cap: u64,
    ) -> Result<Self> {
        let root = TreeNode {
            parent: None,
            child_index: 0,
            marked: false,
        };
        let tree = Self {
            params: *params,
            origin: origin.canonical(),
            levels: vec![vec![root]],
            child_offsets: vec![],
            keys: vec![vec![origin.key()]],
        };
        tree.extended(height, bits, cap)
    }

    pub fn extended(&self, extra: u32, bits: &BitSource, cap: u64) -> Result<Self> {
        let mut out = self.clone();
        let mut total: u64 = out.levels.iter().map(|l| l.len() as u64).sum();
        // the bottom level has no offsets yet
        out.child_offsets.truncate(out.levels.len() - 1);
        for _ in 0..extra {
            let depth = out.levels.len() - 1;
            let parents = &out.keys[depth];
            let mut next = Vec::new();
            let mut next_keys = Vec::new();
            let mut offsets = Vec::with_capacity(parents.len() + 1);
            offsets.push(0u32);
            for (pi, &pkey) in parents.iter().enumerate() {
                for k in 1..=out.params.alpha_max {
                    let key = pkey.child(k);
                    if key_open(bits, &out.params, k, key) {
                        next.push(TreeNode {
                            parent: Some(pi as u32),
                            child_index: k,
                            marked: out.params.is_marked(k),
                        });
                        next_keys.push(key);
                    }
                }
                total += (next.len() - *offsets.last().unwrap() as usize) as u64;
                if total > cap {
                    return Err(HoroError::ResourceCap {
                        what: "tree vertices",
                        cap,
                    });
                }
                offsets.push(next.len() as u32);
            }
            out.child_offsets.push(offsets);
            out.levels.push(next);
            out.keys.push(next_keys);
        }
        let bottom = out.levels.last().unwrap().len();
        out.child_offsets.push(vec![0; bottom + 1]);
        Ok(out)
    }

    pub fn params(&self) -> &TreeParams {
        &self.params
    }

    pub fn origin(&self) -> &VertexAddress {
        &self.origin
    }

    pub fn root_level(&self) -> i64 {
        self.origin.level()
    }

    pub fn height(&self) -> u32 {
        (self.levels.len() - 1) as u32
    }

    pub fn max_level(&self) -> i64 {
        self.root_level() + i64::from(self.height())
    }

    pub fn root(&self) -> NodeId {
        NodeId::new(self.root_level(), 0)
    }

    pub fn vertex_count(&self) -> usize {
        self.levels.iter().map(Vec::len).sum()
    }

    fn depth_of(&self, level: i64) -> Option<usize> {
        let d = level - self.root_level();
        (d >= 0 && (d as usize) < self.levels.len()).then_some(d as usize)
    }

    pub fn level_len(&self, level: i64) -> usize {
        self.depth_of(level).map_or(0, |d| self.levels[d].len())
    }

    pub fn nodes_at(&self, level: i64) -> &[TreeNode] {
        self.depth_of(level).map_or(&[], |d| &self.levels[d])
    }

    pub fn contains(&self, v: NodeId) -> bool {
        (v.index as usize) < self.level_len(v.level)
    }

    fn check(&self, v: NodeId) -> Result<()> {
        if self.contains(v) {
            Ok(())
        } else {
            Err(HoroError::UnknownVertex(format!("{v:?}")))
        }
    }

    pub fn node(&self, v: NodeId) -> &TreeNode {
        &self.levels[self.depth_of(v.level).unwrap()][v.index as usize]
    }

    pub fn parent(&self, v: NodeId) -> Option<NodeId> {
        self.node(v).parent.map(|p| NodeId::new(v.level - 1, p))
    }

    pub fn children(&self, v: NodeId) -> impl Iterator<Item = NodeId> + '_ {
        let d = self.depth_of(v.level).unwrap();
        let offs = &self.child_offsets[d];
        let (lo, hi) = (offs[v.index as usize], offs[v.index as usize + 1]);
        (lo..hi).map(move |i| NodeId::new(v.level + 1, i))
    }

    pub fn offspring(&self, v: NodeId) -> u32 {
        let d = self.depth_of(v.level).unwrap();
        let offs = &self.child_offsets[d];
        offs[v.index as usize + 1] - offs[v.index as usize]
    }

    /// Child indices on the path from the window root to `v`.
    pub fn relative_path(&self, v: NodeId) -> Vec<u32> {
        let mut path = Vec::new();
        let mut cur = v;
        while let Some(p) = self.parent(cur) {
            path.push(self.node(cur).child_index);
            cur = p;
        }
        path.reverse();
        path
    }

    /// Position of `v` in the ambient tree.
    pub fn address(&self, v: NodeId) -> VertexAddress {
        let mut addr = self.origin.clone();
        addr.path.extend(self.relative_path(v));
        addr.canonical()
    }

    /// Finds the vertex at a given ambient position, if it is in the window.
    pub fn find(&self, addr: &VertexAddress) -> Option<NodeId> {
        if !self.origin.is_ancestor_or_equal(addr) {
            return None;
        }
        let base = self.origin.base_level.min(addr.base_level);
        let o = self.origin.rebased(base);
        let a = addr.rebased(base);
        let mut cur = self.root();
        for &k in &a.path[o.path.len()..] {
            cur = self
                .children(cur)
                .find(|&c| self.node(c).child_index == k)?;
        }
        Some(cur)
    }

    /// Window cut back to `height` levels below the root.
    pub fn truncated(&self, height: u32) -> Self {
        let keep = (height as usize + 1).min(self.levels.len());
        let mut out = self.clone();
        out.levels.truncate(keep);
        out.keys.truncate(keep);
        out.child_offsets.truncate(keep);
        let bottom = out.levels.last().unwrap().len();
        *out.child_offsets.last_mut().unwrap() = vec![0; bottom + 1];
        out
    }

    /// Window of the descendants of `v` (down to the same bottom level).
    pub fn subtree(&self, v: NodeId) -> Result<Self> {
        self.check(v)?;
        let keep = |_: NodeId| true;
        Ok(self.restrict(v, keep))
    }

    /// The window with the edge above `v` closed, i.e. `v` and its
    /// descendants removed. Only marked edges can close.
    pub fn without_branch(&self, v: NodeId) -> Result<Self> {
        self.check(v)?;
        let node = self.node(v);
        if node.parent.is_none() {
            return Err(HoroError::InvalidParams(
                "cannot remove the window root".into(),
            ));
        }
        if !node.marked {
            return Err(HoroError::InvalidParams(
                "unmarked edges are never removed".into(),
            ));
        }
        let root = self.root();
        Ok(self.restrict(root, |u| u != v))
    }

    /// Rebuilds the window below `top`, skipping any vertex for which `keep`
    /// is false together with its descendants.
    fn restrict(&self, top: NodeId, keep: impl Fn(NodeId) -> bool) -> Self {
        let mut levels = vec![vec![TreeNode {
            parent: None,
            child_index: 0,
            marked: false,
        }]];
        let mut keys = vec![vec![
            self.keys[self.depth_of(top.level).unwrap()][top.index as usize],
        ]];
        let mut child_offsets = Vec::new();
        let mut frontier = vec![top];
        for _ in 0..(self.max_level() - top.level) {
            let mut next = Vec::new();
            let mut next_nodes = Vec::new();
            let mut next_keys = Vec::new();
            let mut offsets = vec![0u32];
            for (pi, &u) in frontier.iter().enumerate() {
                for c in self.children(u).filter(|&c| keep(c)) {
                    next_nodes.push(TreeNode {
                        parent: Some(pi as u32),
                        ..*self.node(c)
                    });
                    next_keys.push(self.keys[self.depth_of(c.level).unwrap()][c.index as usize]);
                    next.push(c);
                }
                offsets.push(next_nodes.len() as u32);
            }
            child_offsets.push(offsets);
            levels.push(next_nodes);
            keys.push(next_keys);
            frontier = next;
        }
        let bottom = levels.last().unwrap().len();
        child_offsets.push(vec![0; bottom + 1]);
        Self {
            params: self.params,
            origin: self.address(top),
            levels,
            child_offsets,
            keys,
        }
    }

    pub fn record(&self) -> TreeRecord {
        TreeRecord {
            root_level: self.root_level(),
            height: self.height(),
            levels: self.levels.clone(),
        }
    }

    pub fn to_canonical_json(&self) -> String {
        serde_json::to_string(&self.record()).expect("tree record serialises")
    }

    pub fn iter_nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        let root = self.root_level();
        self.levels.iter().enumerate().flat_map(move |(d, l)| {
            (0..l.len() as u32).map(move |i| NodeId::new(root + d as i64, i))
        })
    }
}

/// Per-level vertex counts `X_j` of a window.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LevelCounts {
    pub base_level: i64,
    pub counts: Vec<u64>,
}

impl LevelCounts {
    pub fn get(&self, level: i64) -> Option<u64> {
        let d = level - self.base_level;
        if d < 0 {
            return None;
        }
        self.counts.get(d as usize).copied()
    }

    pub fn max_level(&self) -> i64 {
        self.base_level + self.counts.len() as i64 - 1
    }
}
