use rayon::prelude::*;

use super::MrConfig;
use crate::blocks::{BlockCollection, LookupCache, Role};
use crate::error::MrError;
use crate::morton::{CellGeometry, Dim, NodeKey, Tag};

/// Where a node's values live.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NodeRef {
    Leaf(u32),
    Internal(u32),
}

/// Per-task lookup caches for both collections.
#[derive(Clone, Debug, Default)]
pub struct Caches {
    pub leaf: LookupCache,
    pub internal: LookupCache,
}

/// A graded tree with `m` cell-average values at every node.
///
/// Values are stored species-major (`values[species][slot]`). In the clean
/// state reached after construction and after every adaptation, both
/// collections are sorted, every slot equals the node's Morton rank, and
/// [`leaf_values`](Self::leaf_values) is the structure-of-arrays unknown
/// vector in Morton order.
#[derive(Clone, Debug)]
pub struct TreeField {
    pub(crate) cfg: MrConfig,
    pub(crate) m: usize,
    pub(crate) leaves: BlockCollection,
    pub(crate) internal: BlockCollection,
    pub(crate) leaf_vals: Vec<Vec<f64>>,
    pub(crate) int_vals: Vec<Vec<f64>>,
    pub(crate) leaf_keys: Vec<NodeKey>,
    pub(crate) int_keys: Vec<NodeKey>,
}

impl TreeField {
    /// Builds a tree from its leaves; internal nodes are all strict ancestors
    /// and receive projected values.
    pub fn from_leaves(
        cfg: MrConfig,
        m: usize,
        mut leaves: Vec<(NodeKey, Vec<f64>)>,
    ) -> Result<Self, MrError> {
        cfg.validate()?;
        let dim = cfg.dim;
        leaves.par_sort_by_key(|(k, _)| k.id());
        if leaves.is_empty() {
            return Err(MrError::Config("a tree needs at least one leaf".into()));
        }
        for w in leaves.windows(2) {
            if w[0].0 == w[1].0 {
                return Err(MrError::Config(format!("duplicate leaf {:?}", w[0].0)));
            }
        }
        for (k, v) in &leaves {
            if k.level() < cfg.jmin || k.level() > cfg.levels {
                return Err(MrError::Config(format!(
                    "leaf {k:?} outside levels {}..={}",
                    cfg.jmin, cfg.levels
                )));
            }
            if v.len() != m {
                return Err(MrError::Config(format!("leaf {k:?} carries {} values", v.len())));
            }
        }
        let mut internal: Vec<NodeKey> = leaves
            .par_iter()
            .flat_map_iter(|(k, _)| (0..k.level()).map(move |l| k.untagged().ancestor(dim, l)))
            .collect();
        internal.par_sort_unstable();
        internal.dedup();
        let leaf_keys: Vec<NodeKey> = leaves.iter().map(|(k, _)| k.untagged()).collect();
        if let Some(k) = leaf_keys.iter().find(|k| internal.binary_search(k).is_ok()) {
            return Err(MrError::Config(format!("leaf {k:?} overlaps a finer leaf")));
        }

        let mut leaf_vals = vec![Vec::with_capacity(leaves.len()); m];
        for (_, v) in &leaves {
            for (s, x) in v.iter().enumerate() {
                leaf_vals[s].push(*x);
            }
        }
        let mut tree = TreeField {
            cfg,
            m,
            leaves: BlockCollection::new(Role::Leaves, cfg.blocks),
            internal: BlockCollection::new(Role::Internal, cfg.blocks),
            leaf_vals,
            int_vals: vec![vec![0.0; internal.len()]; m],
            leaf_keys: Vec::new(),
            int_keys: Vec::new(),
        };
        tree.leaves.insert_batch(
            leaf_keys
                .iter()
                .enumerate()
                .map(|(i, &k)| (k, i as u32))
                .collect(),
        )?;
        tree.internal.insert_batch(
            internal
                .iter()
                .enumerate()
                .map(|(i, &k)| (k, i as u32))
                .collect(),
        )?;
        tree.finalize();
        tree.check_structure()?;
        tree.check_graded()?;
        tree.project_up()?;
        Ok(tree)
    }

    /// Full uniform grid at `level` with values from `f`.
    pub fn uniform<F>(cfg: MrConfig, m: usize, level: u8, f: F) -> Result<Self, MrError>
    where
        F: Fn(&CellGeometry, &mut [f64]) + Sync,
    {
        let leaves = uniform_keys(cfg.dim, level)
            .into_par_iter()
            .map(|k| {
                let mut v = vec![0.0; m];
                f(&k.decode(cfg.dim), &mut v);
                (k, v)
            })
            .collect();
        Self::from_leaves(cfg, m, leaves)
    }

    pub fn config(&self) -> &MrConfig {
        &self.cfg
    }

    pub fn dim(&self) -> Dim {
        self.cfg.dim
    }

    pub fn species(&self) -> usize {
        self.m
    }

    pub fn n_leaves(&self) -> usize {
        self.leaf_keys.len()
    }

    pub fn n_internal(&self) -> usize {
        self.int_keys.len()
    }

    /// Leaf keys in Morton order.
    pub fn leaf_keys(&self) -> &[NodeKey] {
        &self.leaf_keys
    }

    /// Internal keys in Morton order.
    pub fn internal_keys(&self) -> &[NodeKey] {
        &self.int_keys
    }

    /// Species-major leaf values in Morton order.
    pub fn leaf_values(&self) -> &[Vec<f64>] {
        &self.leaf_vals
    }

    /// Mutable leaf values; internal values go stale until [`project_up`](Self::project_up).
    pub fn leaf_values_mut(&mut self) -> &mut [Vec<f64>] {
        &mut self.leaf_vals
    }

    pub fn internal_values(&self) -> &[Vec<f64>] {
        &self.int_vals
    }

    pub fn leaf_collection(&self) -> &BlockCollection {
        &self.leaves
    }

    pub fn internal_collection(&self) -> &BlockCollection {
        &self.internal
    }

    /// `1 - leaves / 2^{dJ}`.
    pub fn compression_ratio(&self) -> f64 {
        compression_ratio(self.cfg.dim, self.cfg.levels, self.n_leaves())
    }

    /// Finds a live node in either collection.
    #[inline]
    pub fn locate(&self, key: NodeKey, caches: &mut Caches) -> Option<NodeRef> {
        if let Some(loc) = self.leaves.find_live(key, &mut caches.leaf) {
            return Some(NodeRef::Leaf(self.leaves.slot_at(loc)));
        }
        self.internal
            .find_live(key, &mut caches.internal)
            .map(|loc| NodeRef::Internal(self.internal.slot_at(loc)))
    }

    #[inline]
    pub fn value(&self, node: NodeRef, species: usize) -> f64 {
        match node {
            NodeRef::Leaf(s) => self.leaf_vals[species][s as usize],
            NodeRef::Internal(s) => self.int_vals[species][s as usize],
        }
    }

    pub fn read(&self, node: NodeRef, out: &mut [f64]) {
        for (s, o) in out.iter_mut().enumerate() {
            *o = self.value(node, s);
        }
    }

    /// Values of any stored node.
    pub fn values_of(&self, key: NodeKey) -> Option<Vec<f64>> {
        let mut caches = Caches::default();
        let r = self.locate(key, &mut caches)?;
        let mut v = vec![0.0; self.m];
        self.read(r, &mut v);
        Some(v)
    }

    /// Recomputes every internal value as the mean of its children.
    ///
    /// Each level-`J_min` subtree is an independent task walking its nodes in
    /// reverse Morton order; the few nodes above `J_min` follow sequentially.
    pub fn project_up(&mut self) -> Result<(), MrError> {
        let n = self.int_keys.len();
        let m = self.m;
        if n == 0 {
            return Ok(());
        }
        let jmin = self.cfg.jmin;
        let mut ranges = Vec::new();
        let mut top = Vec::new();
        let mut i = 0;
        while i < n {
            if self.int_keys[i].level() < jmin {
                top.push(i);
                i += 1;
            } else {
                let start = i;
                i += 1;
                while i < n && self.int_keys[i].level() > jmin {
                    i += 1;
                }
                ranges.push((start, i));
            }
        }

        let mut buf = vec![0.0; n * m];
        {
            let mut chunks = Vec::with_capacity(ranges.len());
            let mut rest: &mut [f64] = &mut buf;
            let mut consumed = 0;
            for &(a, b) in &ranges {
                let (_, tail) = rest.split_at_mut((a - consumed) * m);
                let (mine, tail) = tail.split_at_mut((b - a) * m);
                chunks.push((a, b, mine));
                rest = tail;
                consumed = b;
            }
            let this = &*self;
            chunks
                .par_iter_mut()
                .map(|(a, b, chunk)| this.project_range(*a, *b, chunk))
                .collect::<Result<Vec<()>, MrError>>()?;
        }
        let mut caches = Caches::default();
        let nc = self.cfg.dim.children();
        let inv = 1.0 / nc as f64;
        let mut acc = vec![0.0; m];
        for &idx in top.iter().rev() {
            let p = self.int_keys[idx];
            acc.iter_mut().for_each(|a| *a = 0.0);
            for c in 0..nc {
                let child = p.child(self.cfg.dim, c)?;
                match self.locate(child, &mut caches) {
                    Some(NodeRef::Leaf(s)) => {
                        for (sp, a) in acc.iter_mut().enumerate() {
                            *a += self.leaf_vals[sp][s as usize];
                        }
                    }
                    Some(NodeRef::Internal(s)) => {
                        for (sp, a) in acc.iter_mut().enumerate() {
                            *a += buf[s as usize * m + sp];
                        }
                    }
                    None => {
                        return Err(MrError::Grading {
                            node: p,
                            missing: child,
                        })
                    }
                }
            }
            for (sp, a) in acc.iter().enumerate() {
                buf[idx * m + sp] = a * inv;
            }
        }
        let buf = &buf;
        self.int_vals
            .par_iter_mut()
            .enumerate()
            .for_each(|(sp, vals)| {
                for (i, v) in vals.iter_mut().enumerate() {
                    *v = buf[i * m + sp];
                }
            });
        Ok(())
    }

    fn project_range(&self, a: usize, b: usize, chunk: &mut [f64]) -> Result<(), MrError> {
        let m = self.m;
        let dim = self.cfg.dim;
        let nc = dim.children();
        let inv = 1.0 / nc as f64;
        let mut caches = Caches::default();
        let mut acc = vec![0.0; m];
        for idx in (a..b).rev() {
            let p = self.int_keys[idx];
            acc.iter_mut().for_each(|x| *x = 0.0);
            for c in 0..nc {
                let child = p.child(dim, c)?;
                match self.locate(child, &mut caches) {
                    Some(NodeRef::Leaf(s)) => {
                        for (sp, x) in acc.iter_mut().enumerate() {
                            *x += self.leaf_vals[sp][s as usize];
                        }
                    }
                    Some(NodeRef::Internal(s)) if (s as usize) > idx && (s as usize) < b => {
                        let off = (s as usize - a) * m;
                        for (sp, x) in acc.iter_mut().enumerate() {
                            *x += chunk[off + sp];
                        }
                    }
                    _ => {
                        return Err(MrError::Grading {
                            node: p,
                            missing: child,
                        })
                    }
                }
            }
            let off = (idx - a) * m;
            for (sp, x) in acc.iter().enumerate() {
                chunk[off + sp] = x * inv;
            }
        }
        Ok(())
    }

    /// Returns the collections to the clean state: garbage collection,
    /// tag clearing, rebalancing, Morton sort, slot renumbering and value
    /// permutation.
    pub(crate) fn finalize(&mut self) {
        for coll in [&mut self.leaves, &mut self.internal] {
            coll.garbage_collect();
            coll.clear_tag(Tag::Created);
            coll.clear_tag(Tag::Refine);
            coll.rebalance();
            coll.sort();
        }
        let old = self.leaves.renumber();
        self.leaf_vals = permute(&self.leaf_vals, &old);
        let old = self.internal.renumber();
        self.int_vals = permute(&self.int_vals, &old);
        self.leaf_keys = self.leaves.keys();
        self.int_keys = self.internal.keys();
    }

    /// Every internal node has all children; no leaf is also internal.
    pub fn check_structure(&self) -> Result<(), MrError> {
        let dim = self.cfg.dim;
        let bad = self
            .int_keys
            .par_iter()
            .map_init(Caches::default, |caches, &p| {
                for c in 0..dim.children() {
                    let child = p.child(dim, c).ok()?;
                    if self.locate(child, caches).is_none() {
                        return Some(MrError::Grading {
                            node: p,
                            missing: child,
                        });
                    }
                }
                None
            })
            .find_first(Option::is_some)
            .flatten();
        if let Some(e) = bad {
            return Err(e);
        }
        let mut cache = LookupCache::new();
        if let Some(k) = self
            .leaf_keys
            .iter()
            .find(|k| self.internal.find_live(**k, &mut cache).is_some())
        {
            return Err(MrError::Config(format!("{k:?} is both a leaf and internal")));
        }
        Ok(())
    }

    /// Exhaustive stencil-existence scan: every internal node sees its full
    /// `3^d` same-level neighbourhood (cells outside the domain excepted).
    pub fn check_graded(&self) -> Result<(), MrError> {
        let dim = self.cfg.dim;
        let offsets = super::predict::stencil_offsets(dim);
        let bad = self
            .int_keys
            .par_iter()
            .map_init(Caches::default, |caches, &p| {
                for off in offsets {
                    if let Some(nb) = p.offset(dim, *off) {
                        if self.locate(nb, caches).is_none() {
                            return Some(MrError::Grading {
                                node: p,
                                missing: nb,
                            });
                        }
                    }
                }
                None
            })
            .find_first(Option::is_some)
            .flatten();
        bad.map_or(Ok(()), Err)
    }

    /// Volume-weighted mean of a species over the leaves.
    pub fn leaf_mean(&self, species: usize) -> f64 {
        let d = self.cfg.dim.n() as i32;
        self.leaf_keys
            .iter()
            .zip(&self.leaf_vals[species])
            .map(|(k, v)| v * 0.5f64.powi(d * i32::from(k.level())))
            .sum()
    }
}

pub fn compression_ratio(dim: Dim, levels: u8, leaves: usize) -> f64 {
    let full = (dim.n() as f64 * f64::from(levels)).exp2();
    1.0 - leaves as f64 / full
}

/// All keys of a full grid at `level`, in Morton order.
pub fn uniform_keys(dim: Dim, level: u8) -> Vec<NodeKey> {
    let n = 1u64 << (dim.n() as u32 * u32::from(level));
    (0..n)
        .into_par_iter()
        .map(|digits| NodeKey::from_abscissa(dim, level, digits).expect("level within cap"))
        .collect()
}

fn permute(vals: &[Vec<f64>], old: &[u32]) -> Vec<Vec<f64>> {
    vals.par_iter()
        .map(|v| old.iter().map(|&s| v[s as usize]).collect())
        .collect()
}
