//! Interval-partitioned node storage.
//!
//! A [`BlockCollection`] splits the Morton abscissa range into consecutive
//! half-open intervals `[s_min, s_max)`, one per [`Block`]. Each block owns the
//! keys whose abscissa falls in its interval, with a payload slot index per
//! key. New keys are appended without sorting; [`BlockCollection::sort`]
//! restores Morton order inside every block, after which iterating the blocks
//! in order visits keys in Morton order.

use std::cmp::Ordering;

use rayon::prelude::*;

use crate::error::BlockError;
use crate::morton::{NodeKey, Tag};

/// Number of recently used blocks remembered by a [`LookupCache`].
pub const CACHE_SIZE: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BlockConfig {
    pub max_size: usize,
    pub min_size: usize,
}

impl Default for BlockConfig {
    fn default() -> Self {
        BlockConfig::with_max(1024)
    }
}

impl BlockConfig {
    pub fn with_max(max_size: usize) -> Self {
        let max_size = max_size.max(2);
        BlockConfig {
            max_size,
            min_size: (max_size / 4).max(1),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Role {
    Leaves,
    Internal,
}

/// Storage for every key whose abscissa lies in `[s_min, s_max)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Block {
    s_min: u64,
    s_max: u64,
    keys: Vec<NodeKey>,
    slots: Vec<u32>,
    /// `keys[..sorted_len]` is sorted; the tail holds unsorted appends.
    sorted_len: usize,
}

impl Block {
    fn new(s_min: u64, s_max: u64) -> Self {
        Block {
            s_min,
            s_max,
            keys: Vec::new(),
            slots: Vec::new(),
            sorted_len: 0,
        }
    }

    pub fn s_min(&self) -> u64 {
        self.s_min
    }

    pub fn s_max(&self) -> u64 {
        self.s_max
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.keys.capacity()
    }

    pub fn keys(&self) -> &[NodeKey] {
        &self.keys
    }

    pub fn slots(&self) -> &[u32] {
        &self.slots
    }

    #[inline]
    fn covers(&self, abscissa: u64) -> bool {
        self.s_min <= abscissa && abscissa < self.s_max
    }

    fn push(&mut self, key: NodeKey, slot: u32) {
        if self.keys.len() == self.keys.capacity() {
            let grow = self.keys.capacity().max(4);
            self.keys.reserve_exact(grow);
        }
        if self.slots.len() == self.slots.capacity() {
            let grow = self.slots.capacity().max(4);
            self.slots.reserve_exact(grow);
        }
        self.keys.push(key);
        self.slots.push(slot);
    }

    fn locate(&self, key: NodeKey) -> Option<usize> {
        let id = key.id();
        let mut deleted = None;
        let sorted = &self.keys[..self.sorted_len];
        let start = sorted.partition_point(|k| k.id() < id);
        for (i, k) in sorted[start..].iter().enumerate() {
            if k.id() != id {
                break;
            }
            if !k.has_tag(Tag::Deleted) {
                return Some(start + i);
            }
            deleted.get_or_insert(start + i);
        }
        for (i, k) in self.keys[self.sorted_len..].iter().enumerate() {
            if k.id() == id {
                if !k.has_tag(Tag::Deleted) {
                    return Some(self.sorted_len + i);
                }
                deleted.get_or_insert(self.sorted_len + i);
            }
        }
        deleted
    }

    fn sort(&mut self) {
        if self.sorted_len == self.keys.len() {
            return;
        }
        let mut pairs: Vec<(NodeKey, u32)> = self
            .keys
            .iter()
            .copied()
            .zip(self.slots.iter().copied())
            .collect();
        pairs.sort_by_key(|p| p.0.id());
        for (i, (k, s)) in pairs.into_iter().enumerate() {
            self.keys[i] = k;
            self.slots[i] = s;
        }
        self.sorted_len = self.keys.len();
    }

    fn retain_live(&mut self) {
        let mut w = 0;
        let mut sorted = 0;
        for r in 0..self.keys.len() {
            let k = self.keys[r];
            if !k.has_tag(Tag::Deleted) {
                self.keys[w] = k;
                self.slots[w] = self.slots[r];
                if r < self.sorted_len {
                    sorted += 1;
                }
                w += 1;
            }
        }
        self.keys.truncate(w);
        self.slots.truncate(w);
        self.sorted_len = sorted;
    }

    fn shrink(&mut self) {
        let len = self.keys.len();
        if self.keys.capacity() > 4 * len.max(1) {
            self.keys.shrink_to(2 * len);
            self.slots.shrink_to(2 * len);
        }
    }

    /// Appends `other`, whose interval must start where this one ends.
    fn absorb(&mut self, other: Block) {
        debug_assert_eq!(self.s_max, other.s_min);
        let fully_sorted = self.sorted_len == self.keys.len();
        let base = self.keys.len();
        self.keys.extend_from_slice(&other.keys);
        self.slots.extend_from_slice(&other.slots);
        self.s_max = other.s_max;
        if fully_sorted {
            self.sorted_len = base + other.sorted_len;
        }
    }

    /// Splits at a median abscissa; keys sharing an abscissa stay together.
    fn split(mut self) -> (Block, Option<Block>) {
        self.sort();
        let n = self.keys.len();
        let mid = self.keys[n / 2].abscissa();
        let mut pos = self.keys.partition_point(|k| k.abscissa() < mid);
        if pos == 0 {
            pos = self.keys.partition_point(|k| k.abscissa() <= mid);
        }
        if pos == 0 || pos == n {
            return (self, None);
        }
        let cut = self.keys[pos].abscissa();
        let right = Block {
            s_min: cut,
            s_max: self.s_max,
            keys: self.keys.split_off(pos),
            slots: self.slots.split_off(pos),
            sorted_len: n - pos,
        };
        self.s_max = cut;
        self.sorted_len = pos;
        (self, Some(right))
    }
}

/// Position of a stored key.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Location {
    pub block: usize,
    pub pos: usize,
}

/// Remembers the last blocks touched by one task.
#[derive(Clone, Debug)]
pub struct LookupCache {
    ring: [usize; CACHE_SIZE],
    next: usize,
    probes: usize,
    hits: usize,
}

impl Default for LookupCache {
    fn default() -> Self {
        LookupCache {
            ring: [usize::MAX; CACHE_SIZE],
            next: 0,
            probes: 0,
            hits: 0,
        }
    }
}

impl LookupCache {
    pub fn new() -> Self {
        Self::default()
    }

    /// Dichotomic probes spent by the last lookup that missed the cache.
    pub fn last_probes(&self) -> usize {
        self.probes
    }

    pub fn hits(&self) -> usize {
        self.hits
    }

    fn remember(&mut self, block: usize) {
        self.ring[self.next] = block;
        self.next = (self.next + 1) % CACHE_SIZE;
    }
}

/// Ordered blocks partitioning `[lo, hi)` of the abscissa range.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockCollection {
    role: Role,
    config: BlockConfig,
    blocks: Vec<Block>,
    lo: u64,
    hi: u64,
}

impl BlockCollection {
    /// A collection covering the whole abscissa range with one empty block.
    pub fn new(role: Role, config: BlockConfig) -> Self {
        Self::with_range(role, config, 0, u64::MAX)
    }

    pub fn with_range(role: Role, config: BlockConfig, lo: u64, hi: u64) -> Self {
        assert!(lo < hi, "empty abscissa range");
        BlockCollection {
            role,
            config,
            blocks: vec![Block::new(lo, hi)],
            lo,
            hi,
        }
    }

    pub fn role(&self) -> Role {
        self.role
    }

    pub fn config(&self) -> BlockConfig {
        self.config
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn n_blocks(&self) -> usize {
        self.blocks.len()
    }

    /// Stored slots, including keys marked deleted.
    pub fn len(&self) -> usize {
        self.blocks.iter().map(Block::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.iter().all(Block::is_empty)
    }

    pub fn live_len(&self) -> usize {
        self.blocks
            .par_iter()
            .map(|b| b.keys.iter().filter(|k| !k.has_tag(Tag::Deleted)).count())
            .sum()
    }

    /// Index of the block whose interval holds `abscissa`.
    pub fn find_block(&self, abscissa: u64, cache: &mut LookupCache) -> Option<usize> {
        if abscissa < self.lo || abscissa >= self.hi {
            return None;
        }
        for &b in &cache.ring {
            if b < self.blocks.len() && self.blocks[b].covers(abscissa) {
                cache.hits += 1;
                return Some(b);
            }
        }
        // largest index with s_min <= abscissa
        let (mut lo, mut hi) = (0usize, self.blocks.len());
        let mut probes = 0;
        while hi - lo > 1 {
            let mid = lo + (hi - lo) / 2;
            probes += 1;
            if self.blocks[mid].s_min <= abscissa {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        cache.probes = probes;
        cache.remember(lo);
        Some(lo)
    }

    pub fn find(&self, key: NodeKey, cache: &mut LookupCache) -> Option<Location> {
        let block = self.find_block(key.abscissa(), cache)?;
        self.blocks[block]
            .locate(key)
            .map(|pos| Location { block, pos })
    }

    pub fn contains(&self, key: NodeKey, cache: &mut LookupCache) -> bool {
        self.find(key, cache).is_some()
    }

    /// Like [`find`](Self::find) but ignores keys marked deleted.
    pub fn find_live(&self, key: NodeKey, cache: &mut LookupCache) -> Option<Location> {
        self.find(key, cache)
            .filter(|loc| !self.key_at(*loc).has_tag(Tag::Deleted))
    }

    #[inline]
    pub fn key_at(&self, loc: Location) -> NodeKey {
        self.blocks[loc.block].keys[loc.pos]
    }

    #[inline]
    pub fn slot_at(&self, loc: Location) -> u32 {
        self.blocks[loc.block].slots[loc.pos]
    }

    /// Appends `key` to its block without sorting.
    pub fn insert(&mut self, key: NodeKey, slot: u32) -> Result<Location, BlockError> {
        let mut cache = LookupCache::new();
        let block = self
            .find_block(key.abscissa(), &mut cache)
            .ok_or(BlockError::Coverage {
                abscissa: key.abscissa(),
            })?;
        let b = &mut self.blocks[block];
        b.push(key, slot);
        Ok(Location {
            block,
            pos: b.len() - 1,
        })
    }

    /// Inserts many keys: the batch is partitioned by block interval, then each
    /// block appends its own share in parallel.
    pub fn insert_batch(&mut self, mut items: Vec<(NodeKey, u32)>) -> Result<(), BlockError> {
        if items.is_empty() {
            return Ok(());
        }
        if let Some(bad) = items
            .iter()
            .find(|(k, _)| k.abscissa() < self.lo || k.abscissa() >= self.hi)
        {
            return Err(BlockError::Coverage {
                abscissa: bad.0.abscissa(),
            });
        }
        items.par_sort_by_key(|(k, _)| k.abscissa());
        let bounds: Vec<usize> = self
            .blocks
            .iter()
            .map(|b| items.partition_point(|(k, _)| k.abscissa() < b.s_min))
            .chain(std::iter::once(items.len()))
            .collect();
        let items = &items;
        self.blocks
            .par_iter_mut()
            .enumerate()
            .for_each(|(i, b)| {
                let share = &items[bounds[i]..bounds[i + 1]];
                let need = b.len() + share.len();
                let mut cap = b.keys.capacity().max(4);
                while cap < need {
                    cap *= 2;
                }
                b.keys.reserve_exact(cap - b.len());
                b.slots.reserve_exact(cap - b.len());
                for &(k, s) in share {
                    b.keys.push(k);
                    b.slots.push(s);
                }
            });
        Ok(())
    }

    pub fn mark_deleted(&mut self, key: NodeKey, cache: &mut LookupCache) -> Result<(), BlockError> {
        let loc = self
            .find_live(key, cache)
            .ok_or(BlockError::NotFound(key))?;
        self.mark_at(loc);
        Ok(())
    }

    pub fn mark_at(&mut self, loc: Location) {
        self.blocks[loc.block].keys[loc.pos].set_tag(Tag::Deleted);
    }

    pub fn set_tag_at(&mut self, loc: Location, tag: Tag) {
        self.blocks[loc.block].keys[loc.pos].set_tag(tag);
    }

    /// Marks every key of `keys`; lookups run in parallel, writes sequentially.
    pub fn mark_batch(&mut self, keys: &[NodeKey]) -> Result<(), BlockError> {
        let locs: Vec<Result<Location, BlockError>> = keys
            .par_iter()
            .map_init(LookupCache::new, |cache, &k| {
                self.find_live(k, cache).ok_or(BlockError::NotFound(k))
            })
            .collect();
        for loc in locs {
            self.mark_at(loc?);
        }
        Ok(())
    }

    /// Removes every marked key, preserving the order of survivors.
    pub fn garbage_collect(&mut self) {
        self.blocks.par_iter_mut().for_each(Block::retain_live);
    }

    /// Clears `tag` on every stored key.
    pub fn clear_tag(&mut self, tag: Tag) {
        self.blocks.par_iter_mut().for_each(|b| {
            for k in &mut b.keys {
                *k = k.without_tag(tag);
            }
        });
    }

    /// Sorts every block so that block order then storage order is Morton order.
    pub fn sort(&mut self) {
        self.blocks.par_iter_mut().for_each(Block::sort);
    }

    pub fn is_sorted(&self) -> bool {
        self.blocks.iter().all(|b| b.sorted_len == b.len())
    }

    /// Splits oversized blocks, fuses undersized ones and trims vector
    /// capacities, until every block size lies in `[min_size, max_size]`
    /// (a lone block may hold fewer keys).
    pub fn rebalance(&mut self) {
        let cfg = self.config;
        for _ in 0..8 {
            let before = self.blocks.len();
            let mut changed = false;

            let mut fused: Vec<Block> = Vec::with_capacity(self.blocks.len());
            for b in std::mem::take(&mut self.blocks) {
                match fused.last_mut() {
                    Some(last) if last.len() < cfg.min_size || b.len() < cfg.min_size => {
                        last.absorb(b);
                        changed = true;
                    }
                    _ => fused.push(b),
                }
            }
            if fused.len() > 1 && fused.last().is_some_and(|b| b.len() < cfg.min_size) {
                let tail = fused.pop().unwrap();
                fused.last_mut().unwrap().absorb(tail);
                changed = true;
            }

            let mut out = Vec::with_capacity(fused.len());
            let mut stack: Vec<Block> = Vec::new();
            for b in fused {
                stack.push(b);
                while let Some(b) = stack.pop() {
                    if b.len() > cfg.max_size {
                        match b.split() {
                            (left, Some(right)) => {
                                changed = true;
                                stack.push(right);
                                stack.push(left);
                            }
                            (whole, None) => out.push(whole),
                        }
                    } else {
                        out.push(b);
                    }
                }
            }
            self.blocks = out;
            if !changed && self.blocks.len() == before {
                break;
            }
        }
        self.blocks.par_iter_mut().for_each(Block::shrink);
    }

    /// Iterates `(key, slot)` over blocks in order.
    pub fn iter(&self) -> impl Iterator<Item = (NodeKey, u32)> + '_ {
        self.blocks
            .iter()
            .flat_map(|b| b.keys.iter().copied().zip(b.slots.iter().copied()))
    }

    /// Keys in block order (Morton order once sorted).
    pub fn keys(&self) -> Vec<NodeKey> {
        self.iter().map(|(k, _)| k).collect()
    }

    /// Start rank of each block; `offsets()[b] + pos` is a key's global rank.
    pub fn offsets(&self) -> Vec<usize> {
        let mut acc = 0;
        self.blocks
            .iter()
            .map(|b| {
                let o = acc;
                acc += b.len();
                o
            })
            .collect()
    }

    /// Replaces every slot by the key's global rank and returns the old slots
    /// in rank order. Requires a sorted, garbage-collected collection.
    pub fn renumber(&mut self) -> Vec<u32> {
        debug_assert!(self.is_sorted());
        let offsets = self.offsets();
        let old: Vec<u32> = self.iter().map(|(_, s)| s).collect();
        self.blocks
            .par_iter_mut()
            .zip(offsets.par_iter())
            .for_each(|(b, &o)| {
                for (i, s) in b.slots.iter_mut().enumerate() {
                    *s = (o + i) as u32;
                }
            });
        old
    }

    /// Checks the interval partition and per-block containment.
    pub fn check_invariants(&self) -> Result<(), String> {
        let first = self.blocks.first().ok_or("no blocks")?;
        if first.s_min != self.lo {
            return Err(format!("first block starts at {:#x}", first.s_min));
        }
        if self.blocks.last().unwrap().s_max != self.hi {
            return Err("last block does not reach the range end".into());
        }
        for w in self.blocks.windows(2) {
            if w[0].s_max != w[1].s_min || w[0].s_min.cmp(&w[1].s_min) != Ordering::Less {
                return Err(format!(
                    "blocks [{:#x},{:#x}) and [{:#x},{:#x}) do not tile",
                    w[0].s_min, w[0].s_max, w[1].s_min, w[1].s_max
                ));
            }
        }
        for (i, b) in self.blocks.iter().enumerate() {
            if let Some(k) = b.keys.iter().find(|k| !b.covers(k.abscissa())) {
                return Err(format!("block {i} holds out-of-range key {k:?}"));
            }
            if b.keys[..b.sorted_len].windows(2).any(|w| w[0] > w[1]) {
                return Err(format!("block {i} sorted prefix is out of order"));
            }
        }
        Ok(())
    }
}
