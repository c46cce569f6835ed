//! Counter-based edge randomness.
//!
//! A configuration of open and closed edges is never stored. Instead every
//! edge of the ambient regular tree has a fixed uniform variate derived by
//! hashing `(master_seed, tree_tag, address)`, and an edge is open at
//! retention `p` iff its variate is below `p`. Coupling across `p` and the
//! agreement between the sampler and the nested-sum oracle both follow.
//!
//! Addresses are relative to a chain of apexes: the window root at level
//! `r - 1` has the window root at level `r` as its child number 1. A path is
//! canonicalised by stripping leading 1s, so the same edge gets the same bit
//! whichever window it is seen from.

use serde::{Deserialize, Serialize};

use crate::error::{HoroError, Result};

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;
const TAG_SALT: u64 = 0xD1B5_4A32_D192_ED03;
const CHAIN_SALT: u64 = 0x8CB9_2BA7_2F3D_8DD7;
const LEAVE_SALT: u64 = 0xABC9_8388_FB8F_AC03;
const STEP_MUL: u64 = 0xFF51_AFD7_ED55_8CCD;
const EDGE_SALT: u64 = 0xC4CE_B9FE_1A85_EC53;
const TRIAL_SALT: u64 = 0x2545_F491_4F6C_DD1D;

/// splitmix64 finaliser.
#[inline]
pub fn mix64(mut x: u64) -> u64 {
    x = x.wrapping_add(GOLDEN);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Derives an independent 64-bit seed from a master seed and a list of
/// counters (trial index, window size, factor, ...).
pub fn derive_seed(master: u64, counters: &[u64]) -> u64 {
    counters
        .iter()
        .fold(mix64(master ^ TRIAL_SALT), |acc, &c| mix64(acc ^ mix64(c)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BitSource {
    pub master_seed: u64,
    pub tree_tag: u64,
}

impl BitSource {
    pub const RIGHT_TAG: u64 = 0;
    pub const LEFT_TAG: u64 = 1;

    pub fn new(master_seed: u64, tree_tag: u64) -> Self {
        Self {
            master_seed,
            tree_tag,
        }
    }

    /// Bits for an independent trial; the trial index is folded into the seed.
    pub fn for_trial(master_seed: u64, tree_tag: u64, trial: u64) -> Self {
        Self::new(derive_seed(master_seed, &[trial]), tree_tag)
    }

    fn base(&self) -> u64 {
        mix64(self.master_seed ^ mix64(self.tree_tag ^ TAG_SALT))
    }

    /// Uniform variate in `[0, 1)` attached to the edge entering the vertex
    /// with key `key`.
    pub fn uniform(&self, key: PathKey) -> f64 {
        let raw = match key {
            PathKey::Chain(level) => {
                mix64(self.base() ^ mix64((level as u64).wrapping_mul(STEP_MUL) ^ CHAIN_SALT))
            }
            PathKey::Off(h) => mix64(h ^ self.base() ^ EDGE_SALT),
        };
        (raw >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }
}

/// Canonical position of a vertex: either on the apex chain at some level,
/// or a hash of (level where the path leaves the chain, remaining indices).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PathKey {
    Chain(i64),
    Off(u64),
}

impl PathKey {
    /// Key of child number `index` of the vertex with this key.
    pub fn child(self, index: u32) -> PathKey {
        match self {
            PathKey::Chain(level) if index == 1 => PathKey::Chain(level + 1),
            PathKey::Chain(level) => {
                let leave = mix64((level as u64).wrapping_mul(STEP_MUL) ^ LEAVE_SALT);
                PathKey::Off(mix64(leave ^ u64::from(index)))
            }
            PathKey::Off(h) => PathKey::Off(mix64(h.wrapping_mul(STEP_MUL) ^ u64::from(index))),
        }
    }
}

/// A vertex of the ambient tree: the chain apex at `base_level` followed by
/// `path` child indices.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct VertexAddress {
    pub base_level: i64,
    pub path: Vec<u32>,
}

impl VertexAddress {
    pub fn chain(level: i64) -> Self {
        Self {
            base_level: level,
            path: Vec::new(),
        }
    }

    pub fn level(&self) -> i64 {
        self.base_level + self.path.len() as i64
    }

    pub fn child(&self, index: u32) -> Self {
        let mut path = self.path.clone();
        path.push(index);
        Self {
            base_level: self.base_level,
            path,
        }
    }

    pub fn key(&self) -> PathKey {
        self.path
            .iter()
            .fold(PathKey::Chain(self.base_level), |k, &i| k.child(i))
    }

    /// Leading 1s move onto the chain.
    pub fn canonical(&self) -> Self {
        let ones = self.path.iter().take_while(|&&k| k == 1).count();
        Self {
            base_level: self.base_level + ones as i64,
            path: self.path[ones..].to_vec(),
        }
    }

    /// Re-expresses the address from the chain apex at `level`, which must
    /// not exceed `self.base_level`.
    pub fn rebased(&self, level: i64) -> Self {
        assert!(level <= self.base_level);
        let mut path = vec![1u32; (self.base_level - level) as usize];
        path.extend_from_slice(&self.path);
        Self {
            base_level: level,
            path,
        }
    }

    /// Ancestor-or-equal in the ambient tree.
    pub fn is_ancestor_or_equal(&self, other: &VertexAddress) -> bool {
        let base = self.base_level.min(other.base_level);
        let a = self.rebased(base);
        let b = other.rebased(base);
        b.path.starts_with(&a.path)
    }

    /// `/`-separated label relative to the chain apex; `/` alone for the apex.
    pub fn label(&self) -> String {
        if self.path.is_empty() {
            return "/".to_string();
        }
        self.path.iter().map(|k| format!("/{k}")).collect()
    }
}

/// The edge joining the vertex at the end of `path` to its parent.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EdgeAddress {
    pub root_level: i64,
    pub path: Vec<u32>,
}

impl EdgeAddress {
    pub fn new(root_level: i64, path: Vec<u32>, alpha_max: u32) -> Result<Self> {
        if path.is_empty() {
            return Err(HoroError::InvalidAddress(
                "edge path must be non-empty".into(),
            ));
        }
        if let Some(bad) = path.iter().find(|&&k| k == 0 || k > alpha_max) {
            return Err(HoroError::InvalidAddress(format!(
                "child index {bad} outside 1..={alpha_max}"
            )));
        }
        Ok(Self { root_level, path })
    }

    pub fn last_index(&self) -> u32 {
        *self.path.last().expect("edge path is non-empty")
    }

    pub fn child_vertex(&self) -> VertexAddress {
        VertexAddress {
            base_level: self.root_level,
            path: self.path.clone(),
        }
    }

    /// Computes the key from scratch, independently of any stored tree state.
    pub fn key(&self) -> PathKey {
        self.child_vertex().key()
    }
}
