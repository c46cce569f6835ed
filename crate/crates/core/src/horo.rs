//! Explicit horocyclic products of two leveled factors.
//!
//! A product vertex at level `l` pairs a right-factor vertex at level `l`
//! with a left-factor vertex at level `-l`. Going up one product level moves
//! the right coordinate to a child and the left coordinate to its parent.

use std::collections::{BTreeSet, HashMap, HashSet, VecDeque};

use serde::Serialize;

use crate::bits::VertexAddress;
use crate::error::{HoroError, Result};
use crate::tree::{LeveledTree, NodeId, TreeParams};

/// Default cap on the number of product vertices.
pub const DEFAULT_PRODUCT_CAP: u64 = 10_000_000;

#[derive(Debug, Clone)]
pub struct ForestNode {
    pub parent: Option<u32>,
    pub children: Vec<u32>,
    /// Whether the edge to the parent is marked.
    pub marked: bool,
    pub address: VertexAddress,
}

/// A leveled forest, the general shape of one product factor.
#[derive(Debug, Clone)]
pub struct LevelForest {
    base_level: i64,
    levels: Vec<Vec<ForestNode>>,
    alpha_min: u32,
    lookup: HashMap<VertexAddress, NodeId>,
}

impl LevelForest {
    pub fn from_tree(tree: &LeveledTree) -> Self {
        Self::from_parts(&[tree]).expect("a single tree is disjoint from nothing")
    }

    /// Disjoint union of the given windows, which must all live in the same
    /// ambient tree and share no vertex.
    pub fn from_parts(parts: &[&LeveledTree]) -> Result<Self> {
        let base_level = parts.iter().map(|t| t.root_level()).min().ok_or_else(|| {
            HoroError::InvalidParams("at least one factor part is required".into())
        })?;
        let top = parts.iter().map(|t| t.max_level()).max().unwrap();
        let alpha_min = parts[0].params().alpha_min;
        let mut forest = Self {
            base_level,
            levels: vec![Vec::new(); (top - base_level + 1) as usize],
            alpha_min,
            lookup: HashMap::new(),
        };
        for tree in parts {
            let mut remap: HashMap<NodeId, u32> = HashMap::new();
            for v in tree.iter_nodes() {
                let address = tree.address(v);
                let level = (v.level - base_level) as usize;
                let idx = forest.levels[level].len() as u32;
                let id = NodeId::new(v.level, idx);
                if forest.lookup.insert(address.clone(), id).is_some() {
                    return Err(HoroError::NotDisjoint);
                }
                let parent = tree.parent(v).map(|p| remap[&p]);
                if let Some(p) = parent {
                    forest.levels[level - 1][p as usize].children.push(idx);
                }
                let marked = match parent {
                    Some(_) => tree.node(v).marked,
                    None => tree
                        .params()
                        .is_marked(address.path.last().copied().unwrap_or(1)),
                };
                forest.levels[level].push(ForestNode {
                    parent,
                    children: Vec::new(),
                    marked,
                    address,
                });
                remap.insert(v, idx);
            }
        }
        Ok(forest)
    }

    /// Adds the ambient tree edge between `parent` and the root `child`.
    pub fn attach(&mut self, child: NodeId, parent: NodeId) -> Result<()> {
        let c = self
            .get(child)
            .ok_or_else(|| HoroError::UnknownVertex(format!("{child:?}")))?;
        let p = self
            .get(parent)
            .ok_or_else(|| HoroError::UnknownVertex(format!("{parent:?}")))?;
        if c.parent.is_some() {
            return Err(HoroError::InvalidBridge(
                "child already has a parent".into(),
            ));
        }
        if child.level != parent.level + 1 || !p.address.is_ancestor_or_equal(&c.address) {
            return Err(HoroError::InvalidBridge(format!(
                "{} at level {} is not a child of {} at level {}",
                c.address.label(),
                child.level,
                p.address.label(),
                parent.level
            )));
        }
        let d = (child.level - self.base_level) as usize;
        self.levels[d][child.index as usize].parent = Some(parent.index);
        self.levels[d - 1][parent.index as usize]
            .children
            .push(child.index);
        Ok(())
    }

    pub fn base_level(&self) -> i64 {
        self.base_level
    }

    pub fn max_level(&self) -> i64 {
        self.base_level + self.levels.len() as i64 - 1
    }

    pub fn alpha_min(&self) -> u32 {
        self.alpha_min
    }

    pub fn level_len(&self, level: i64) -> usize {
        self.level(level).map_or(0, Vec::len)
    }

    fn level(&self, level: i64) -> Option<&Vec<ForestNode>> {
        let d = level - self.base_level;
        if d < 0 {
            return None;
        }
        self.levels.get(d as usize)
    }

    pub fn get(&self, v: NodeId) -> Option<&ForestNode> {
        self.level(v.level)?.get(v.index as usize)
    }

    pub fn find(&self, address: &VertexAddress) -> Option<NodeId> {
        self.lookup.get(&address.canonical()).copied()
    }

    pub fn vertex_count(&self) -> usize {
        self.levels.iter().map(Vec::len).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct HoroVertex {
    pub level: i64,
    /// Index within the left factor at level `-level`.
    pub left: u32,
    /// Index within the right factor at level `level`.
    pub right: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum EdgeKind {
    Remanent,
    Percolative,
}

pub type VertexIdx = u32;

#[derive(Debug, Clone)]
pub struct HoroGraph {
    left: LevelForest,
    right: LevelForest,
    level_lo: i64,
    level_hi: i64,
    offsets: Vec<usize>,
    adjacency: Vec<Vec<(VertexIdx, EdgeKind)>>,
    root: Option<VertexIdx>,
}

/// Product of two windows.
pub fn build_product(left: &LeveledTree, right: &LeveledTree) -> Result<HoroGraph> {
    HoroGraph::from_forests(
        LevelForest::from_tree(left),
        LevelForest::from_tree(right),
        DEFAULT_PRODUCT_CAP,
    )
}

/// Deterministic window of `DL(alpha_left, alpha_right)` with `|level| <= h`
/// on both factors.
pub fn build_dl_window(alpha_left: u32, alpha_right: u32, h: u32) -> Result<HoroGraph> {
    if alpha_left == 0 || alpha_right == 0 {
        return Err(HoroError::InvalidParams(
            "tree degrees must be at least 1".into(),
        ));
    }
    let bits = crate::BitSource::new(0, 0);
    let h = i64::from(h);
    let height = 2 * h as u32;
    let window = |alpha| {
        LeveledTree::sample(
            &TreeParams::regular(alpha),
            &VertexAddress::chain(-h),
            height,
            &bits,
            DEFAULT_PRODUCT_CAP,
        )
    };
    build_product(&window(alpha_left)?, &window(alpha_right)?)
}

pub fn degree(graph: &HoroGraph, v: &HoroVertex) -> Result<usize> {
    Ok(graph.neighbors(graph.require(v)?).len())
}

/// Vertices reachable from `start`, sorted by index.
pub fn connected_component(graph: &HoroGraph, start: &HoroVertex) -> Result<Vec<VertexIdx>> {
    Ok(graph.component_of(graph.require(start)?))
}

impl HoroGraph {
    pub fn from_forests(left: LevelForest, right: LevelForest, cap: u64) -> Result<Self> {
        let level_lo = right.base_level().max(-left.max_level());
        let level_hi = right.max_level().min(-left.base_level());
        if level_lo > level_hi {
            return Err(HoroError::EmptyOverlap);
        }
        let mut offsets = Vec::with_capacity((level_hi - level_lo + 2) as usize);
        let mut total = 0usize;
        for l in level_lo..=level_hi {
            offsets.push(total);
            total += left.level_len(-l) * right.level_len(l);
            if total as u64 > cap {
                return Err(HoroError::ResourceCap {
                    what: "product vertices",
                    cap,
                });
            }
        }
        offsets.push(total);
        let mut graph = Self {
            left,
            right,
            level_lo,
            level_hi,
            offsets,
            adjacency: vec![Vec::new(); total],
            root: None,
        };
        for l in level_lo..level_hi {
            for li in 0..graph.left.level_len(-l) as u32 {
                let lnode = graph.left.get(NodeId::new(-l, li)).unwrap();
                let Some(lp) = lnode.parent else { continue };
                let lmarked = lnode.marked;
                for ri in 0..graph.right.level_len(l) as u32 {
                    let from = graph.id_unchecked(l, li, ri);
                    let rnode = graph.right.get(NodeId::new(l, ri)).unwrap();
                    for &rc in &rnode.children {
                        let rmarked = graph.right.get(NodeId::new(l + 1, rc)).unwrap().marked;
                        let kind = if lmarked || rmarked {
                            EdgeKind::Percolative
                        } else {
                            EdgeKind::Remanent
                        };
                        let to = graph.id_unchecked(l + 1, lp, rc);
                        graph.adjacency[from as usize].push((to, kind));
                        graph.adjacency[to as usize].push((from, kind));
                    }
                }
            }
        }
        for adj in &mut graph.adjacency {
            adj.sort_unstable_by_key(|&(n, _)| n);
        }
        graph.root = graph.chain_root();
        Ok(graph)
    }

    fn chain_root(&self) -> Option<VertexIdx> {
        let l = 0i64.clamp(self.level_lo, self.level_hi);
        let left = self.left.find(&VertexAddress::chain(-l))?;
        let right = self.right.find(&VertexAddress::chain(l))?;
        self.id(&HoroVertex {
            level: l,
            left: left.index,
            right: right.index,
        })
    }

    fn id_unchecked(&self, level: i64, left: u32, right: u32) -> VertexIdx {
        let width = self.right.level_len(level);
        (self.offsets[(level - self.level_lo) as usize] + left as usize * width + right as usize)
            as VertexIdx
    }

    pub fn id(&self, v: &HoroVertex) -> Option<VertexIdx> {
        let ok = (self.level_lo..=self.level_hi).contains(&v.level)
            && (v.left as usize) < self.left.level_len(-v.level)
            && (v.right as usize) < self.right.level_len(v.level);
        ok.then(|| self.id_unchecked(v.level, v.left, v.right))
    }

    pub fn require(&self, v: &HoroVertex) -> Result<VertexIdx> {
        self.id(v)
            .ok_or_else(|| HoroError::UnknownVertex(format!("{v:?}")))
    }

    pub fn vertex(&self, id: VertexIdx) -> HoroVertex {
        let id = id as usize;
        let slot = self.offsets.partition_point(|&o| o <= id) - 1;
        let level = self.level_lo + slot as i64;
        let width = self.right.level_len(level);
        let rel = id - self.offsets[slot];
        HoroVertex {
            level,
            left: (rel / width) as u32,
            right: (rel % width) as u32,
        }
    }

    pub fn vertex_count(&self) -> usize {
        self.adjacency.len()
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum::<usize>() / 2
    }

    pub fn level_range(&self) -> (i64, i64) {
        (self.level_lo, self.level_hi)
    }

    /// Indices of the vertices at product level `level`.
    pub fn level_ids(&self, level: i64) -> std::ops::Range<VertexIdx> {
        if !(self.level_lo..=self.level_hi).contains(&level) {
            return 0..0;
        }
        let s = (level - self.level_lo) as usize;
        self.offsets[s] as VertexIdx..self.offsets[s + 1] as VertexIdx
    }

    pub fn neighbors(&self, id: VertexIdx) -> &[(VertexIdx, EdgeKind)] {
        &self.adjacency[id as usize]
    }

    pub fn neighbor_ids(&self, id: VertexIdx) -> impl Iterator<Item = VertexIdx> + '_ {
        self.adjacency[id as usize].iter().map(|&(n, _)| n)
    }

    pub fn root(&self) -> Option<VertexIdx> {
        self.root
    }

    pub fn with_root(mut self, root: VertexIdx) -> Self {
        self.root = Some(root);
        self
    }

    pub fn left(&self) -> &LevelForest {
        &self.left
    }

    pub fn right(&self) -> &LevelForest {
        &self.right
    }

    pub fn left_node(&self, id: VertexIdx) -> NodeId {
        let v = self.vertex(id);
        NodeId::new(-v.level, v.left)
    }

    pub fn right_node(&self, id: VertexIdx) -> NodeId {
        let v = self.vertex(id);
        NodeId::new(v.level, v.right)
    }

    pub fn max_degree(&self) -> usize {
        self.adjacency.iter().map(Vec::len).max().unwrap_or(0)
    }

    /// Same vertices, only the remanent edges.
    pub fn remanent_subgraph(&self) -> Self {
        let mut out = self.clone();
        for adj in &mut out.adjacency {
            adj.retain(|&(_, k)| k == EdgeKind::Remanent);
        }
        out
    }

    pub fn component_of(&self, start: VertexIdx) -> Vec<VertexIdx> {
        let mut seen = vec![false; self.vertex_count()];
        let mut out = Vec::new();
        let mut queue = VecDeque::from([start]);
        seen[start as usize] = true;
        while let Some(u) = queue.pop_front() {
            out.push(u);
            for w in self.neighbor_ids(u) {
                if !seen[w as usize] {
                    seen[w as usize] = true;
                    queue.push_back(w);
                }
            }
        }
        out.sort_unstable();
        out
    }

    /// Connected components, each sorted, ordered by smallest member.
    pub fn components(&self) -> Vec<Vec<VertexIdx>> {
        let mut label = vec![usize::MAX; self.vertex_count()];
        let mut comps = Vec::new();
        for s in 0..self.vertex_count() {
            if label[s] != usize::MAX {
                continue;
            }
            let comp = self.component_of(s as VertexIdx);
            for &v in &comp {
                label[v as usize] = comps.len();
            }
            comps.push(comp);
        }
        comps
    }

    pub fn component_count(&self) -> usize {
        self.components().len()
    }

    pub fn left_label(&self, id: VertexIdx) -> String {
        self.left.get(self.left_node(id)).unwrap().address.label()
    }

    pub fn right_label(&self, id: VertexIdx) -> String {
        self.right.get(self.right_node(id)).unwrap().address.label()
    }

    /// One row per edge, listed from its lower endpoint.
    pub fn edge_list_csv(&self) -> String {
        let mut out = String::from(
            "level,left_path,right_path,neighbor_left_path,neighbor_right_path,edge_kind\n",
        );
        for u in 0..self.vertex_count() as VertexIdx {
            let level = self.vertex(u).level;
            for &(w, kind) in self.neighbors(u) {
                if self.vertex(w).level != level + 1 {
                    continue;
                }
                let kind = match kind {
                    EdgeKind::Remanent => "remanent",
                    EdgeKind::Percolative => "percolative",
                };
                out.push_str(&format!(
                    "{level},{},{},{},{},{kind}\n",
                    self.left_label(u),
                    self.right_label(u),
                    self.left_label(w),
                    self.right_label(w)
                ));
            }
        }
        out
    }

    pub fn adjacency_json(&self) -> serde_json::Value {
        #[derive(Serialize)]
        struct Vertex {
            id: VertexIdx,
            level: i64,
            left_path: String,
            right_path: String,
            neighbors: Vec<VertexIdx>,
            edge_kinds: Vec<EdgeKind>,
        }
        let vertices: Vec<Vertex> = (0..self.vertex_count() as VertexIdx)
            .map(|u| Vertex {
                id: u,
                level: self.vertex(u).level,
                left_path: self.left_label(u),
                right_path: self.right_label(u),
                neighbors: self.neighbor_ids(u).collect(),
                edge_kinds: self.neighbors(u).iter().map(|&(_, k)| k).collect(),
            })
            .collect();
        serde_json::json!({
            "root": self.root,
            "level_range": [self.level_lo, self.level_hi],
            "vertex_count": self.vertex_count(),
            "edge_count": self.edge_count(),
            "vertices": vertices,
        })
    }
}

/// Which of the two parts a bridge leaves from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Part {
    First,
    Second,
}

/// A factor edge joining `parent` (a vertex of `from`) to the root of the
/// other part.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Bridge {
    pub from: Part,
    pub parent: NodeId,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct UnionReport {
    pub components_first: usize,
    pub components_second: usize,
    pub components_union: usize,
    pub components_bridged: Option<usize>,
    pub holds: bool,
}

/// Components of `left ∘ (part1 + part2)` against those of the two separate
/// products, and after adding `bridge`.
pub fn union_product_check(
    left: &LeveledTree,
    part1: &LeveledTree,
    part2: &LeveledTree,
    bridge: Option<Bridge>,
) -> Result<UnionReport> {
    let lf = LevelForest::from_tree(left);
    let count = |parts: &[&LeveledTree]| -> Result<usize> {
        let f = LevelForest::from_parts(parts)?;
        Ok(HoroGraph::from_forests(lf.clone(), f, DEFAULT_PRODUCT_CAP)?.component_count())
    };
    let union = LevelForest::from_parts(&[part1, part2])?;
    let components_first = count(&[part1])?;
    let components_second = count(&[part2])?;
    let components_union =
        HoroGraph::from_forests(lf.clone(), union.clone(), DEFAULT_PRODUCT_CAP)?.component_count();
    let components_bridged = match bridge {
        None => None,
        Some(b) => {
            let (from, to) = match b.from {
                Part::First => (part1, part2),
                Part::Second => (part2, part1),
            };
            let mut forest = union;
            let parent = forest
                .find(&from.address(b.parent))
                .ok_or_else(|| HoroError::InvalidBridge("parent vertex not in its part".into()))?;
            let child = forest.find(to.origin()).unwrap();
            forest.attach(child, parent)?;
            Some(HoroGraph::from_forests(lf, forest, DEFAULT_PRODUCT_CAP)?.component_count())
        }
    };
    let mut holds = components_union == components_first + components_second;
    if let Some(b) = components_bridged {
        if components_first == 1 && components_second == 1 {
            holds &= b == 1;
        }
    }
    Ok(UnionReport {
        components_first,
        components_second,
        components_union,
        components_bridged,
        holds,
    })
}

/// Vertex-disjointness of two windows of the same ambient tree.
pub fn parts_disjoint(a: &LeveledTree, b: &LeveledTree) -> bool {
    let seen: HashSet<VertexAddress> = a.iter_nodes().map(|v| a.address(v)).collect();
    !b.iter_nodes().any(|v| seen.contains(&b.address(v)))
}

/// Levels visited along a walk, for the parity property.
pub fn walk_levels(graph: &HoroGraph, walk: &[VertexIdx]) -> Vec<i64> {
    walk.iter().map(|&v| graph.vertex(v).level).collect()
}

/// Distinct projections of a vertex set onto the two factors.
pub fn projections(
    graph: &HoroGraph,
    members: &[VertexIdx],
) -> (BTreeSet<NodeId>, BTreeSet<NodeId>) {
    let left = members.iter().map(|&v| graph.left_node(v)).collect();
    let right = members.iter().map(|&v| graph.right_node(v)).collect();
    (left, right)
}
