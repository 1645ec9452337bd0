//! 64-bit Morton keys for quad-tree (d = 2) and oct-tree (d = 3) nodes.
//!
//! Bit layout of a [`NodeKey`], most significant bit first:
//!
//! ```text
//!  63                                   8  7  6  5  4     0
//! +--------------------------------------+--+--+--+--------+
//! | abscissa, d*level bits, left-aligned |C |R |D | level  |
//! | (remaining bits zero)                |  |  |  | 5 bits |
//! +--------------------------------------+--+--+--+--------+
//! ```
//!
//! `D` marks a node for deletion, `R` for refinement, `C` flags a node created
//! during the current adaptation pass. Tag bits are ignored by equality and
//! ordering. Because the abscissa is left-aligned, comparing two keys as
//! integers compares their Morton abscissas `r = 0.s` first and their levels
//! second, which is the depth-first (pre-order) traversal order of the tree.
//!
//! The abscissa of level `j` interleaves the `j` binary digits of the `d`
//! integer lattice coordinates, axis 0 first inside each digit group.

use std::cmp::Ordering;
use std::fmt;
use std::hash::{Hash, Hasher};

use crate::error::MortonError;

const LEVEL_BITS: u32 = 5;
const LEVEL_MASK: u64 = (1 << LEVEL_BITS) - 1;
const TAG_DELETED: u64 = 1 << 5;
const TAG_REFINE: u64 = 1 << 6;
const TAG_CREATED: u64 = 1 << 7;
const TAG_MASK: u64 = TAG_DELETED | TAG_REFINE | TAG_CREATED;
const LOW_MASK: u64 = 0xFF;

/// Spatial dimension of the tree.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Dim {
    Two,
    Three,
}

impl Dim {
    pub fn from_usize(d: usize) -> Option<Dim> {
        match d {
            2 => Some(Dim::Two),
            3 => Some(Dim::Three),
            _ => None,
        }
    }

    #[inline]
    pub const fn n(self) -> usize {
        match self {
            Dim::Two => 2,
            Dim::Three => 3,
        }
    }

    /// Number of children of an internal node, `2^d`.
    #[inline]
    pub const fn children(self) -> usize {
        1 << self.n()
    }

    /// Size of the prediction stencil, `3^d`.
    #[inline]
    pub const fn stencil_len(self) -> usize {
        match self {
            Dim::Two => 9,
            Dim::Three => 27,
        }
    }

    /// Deepest level addressable within the 64-bit key budget.
    #[inline]
    pub const fn level_cap(self) -> u8 {
        match self {
            Dim::Two => 21,
            Dim::Three => 16,
        }
    }
}

/// A tree node packed in one 64-bit word (see the module docs for the layout).
#[derive(Clone, Copy, Default)]
pub struct NodeKey(u64);

/// Tag bits carried by a [`NodeKey`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Tag {
    Deleted,
    Refine,
    Created,
}

impl Tag {
    #[inline]
    const fn bit(self) -> u64 {
        match self {
            Tag::Deleted => TAG_DELETED,
            Tag::Refine => TAG_REFINE,
            Tag::Created => TAG_CREATED,
        }
    }
}

impl NodeKey {
    /// The root node, level 0 with an empty abscissa.
    pub const ROOT: NodeKey = NodeKey(0);

    /// Interleaves the `level` low bits of each coordinate into a key.
    pub fn encode(dim: Dim, level: u8, coords: [u32; 3]) -> Result<NodeKey, MortonError> {
        if level > dim.level_cap() {
            return Err(MortonError::LevelCap {
                level,
                cap: dim.level_cap(),
            });
        }
        let d = dim.n();
        for (axis, &c) in coords.iter().enumerate().take(d) {
            if level < 32 && u64::from(c) >= (1u64 << level) {
                return Err(MortonError::CoordinateRange {
                    axis,
                    coord: c,
                    level,
                });
            }
        }
        Ok(Self::encode_unchecked(dim, level, coords))
    }

    #[inline]
    pub(crate) fn encode_unchecked(dim: Dim, level: u8, coords: [u32; 3]) -> NodeKey {
        let d = dim.n();
        let mut s: u64 = 0;
        for bit in (0..level).rev() {
            for c in coords.iter().take(d) {
                s = (s << 1) | u64::from((c >> bit) & 1);
            }
        }
        let used = d as u32 * u32::from(level);
        let abscissa = if used == 0 { 0 } else { s << (64 - used) };
        NodeKey(abscissa | u64::from(level))
    }

    /// Builds a key from a raw abscissa bit string of `d * level` digits.
    pub fn from_abscissa(dim: Dim, level: u8, digits: u64) -> Result<NodeKey, MortonError> {
        if level > dim.level_cap() {
            return Err(MortonError::LevelCap {
                level,
                cap: dim.level_cap(),
            });
        }
        let used = dim.n() as u32 * u32::from(level);
        if used < 64 && digits >> used != 0 {
            return Err(MortonError::AbscissaWidth { level });
        }
        let abscissa = if used == 0 { 0 } else { digits << (64 - used) };
        Ok(NodeKey(abscissa | u64::from(level)))
    }

    /// Reinterprets a raw 64-bit word, as stored in snapshot files.
    pub fn from_raw(dim: Dim, raw: u64) -> Result<NodeKey, MortonError> {
        let key = NodeKey(raw);
        let level = key.level();
        if level > dim.level_cap() {
            return Err(MortonError::LevelCap {
                level,
                cap: dim.level_cap(),
            });
        }
        let used = dim.n() as u32 * u32::from(level);
        let low = if used >= 64 { 0 } else { u64::MAX >> used };
        if raw & low & !LOW_MASK != 0 {
            return Err(MortonError::AbscissaWidth { level });
        }
        Ok(key)
    }

    #[inline]
    pub const fn raw(self) -> u64 {
        self.0
    }

    /// The key without tag bits; equality and ordering use this value.
    #[inline]
    pub const fn id(self) -> u64 {
        self.0 & !TAG_MASK
    }

    #[inline]
    pub const fn level(self) -> u8 {
        (self.0 & LEVEL_MASK) as u8
    }

    /// Left-aligned abscissa bits; `abscissa() / 2^64` is the Morton abscissa `0.s`.
    #[inline]
    pub const fn abscissa(self) -> u64 {
        self.0 & !LOW_MASK
    }

    /// The `d * level` significant abscissa digits, right-aligned.
    #[inline]
    pub fn digits(self, dim: Dim) -> u64 {
        let used = dim.n() as u32 * u32::from(self.level());
        if used == 0 {
            0
        } else {
            self.abscissa() >> (64 - used)
        }
    }

    /// Morton abscissa as a binary fraction in `[0, 1)`.
    pub fn fraction(self) -> f64 {
        self.abscissa() as f64 / 18_446_744_073_709_551_616.0
    }

    #[inline]
    pub const fn has_tag(self, tag: Tag) -> bool {
        self.0 & tag.bit() != 0
    }

    #[inline]
    #[must_use]
    pub const fn with_tag(self, tag: Tag) -> NodeKey {
        NodeKey(self.0 | tag.bit())
    }

    #[inline]
    #[must_use]
    pub const fn without_tag(self, tag: Tag) -> NodeKey {
        NodeKey(self.0 & !tag.bit())
    }

    #[inline]
    #[must_use]
    pub const fn untagged(self) -> NodeKey {
        NodeKey(self.id())
    }

    #[inline]
    pub(crate) fn set_tag(&mut self, tag: Tag) {
        self.0 |= tag.bit();
    }

    /// Integer lattice coordinates of the node at its own level.
    pub fn coords(self, dim: Dim) -> [u32; 3] {
        let d = dim.n();
        let level = self.level();
        let digits = self.digits(dim);
        let mut k = [0u32; 3];
        for bit in 0..level {
            let group = digits >> (d as u32 * u32::from(bit));
            for (axis, kk) in k.iter_mut().enumerate().take(d) {
                let b = (group >> (d - 1 - axis)) & 1;
                *kk |= (b as u32) << bit;
            }
        }
        k
    }

    pub fn decode(self, dim: Dim) -> CellGeometry {
        CellGeometry::new(dim, self.level(), self.coords(dim))
    }

    /// Parent node; the root has none.
    pub fn parent(self, dim: Dim) -> Result<NodeKey, MortonError> {
        let level = self.level();
        if level == 0 {
            return Err(MortonError::RootParent);
        }
        let used = dim.n() as u32 * u32::from(level - 1);
        let mask = if used == 0 { 0 } else { u64::MAX << (64 - used) };
        Ok(NodeKey((self.abscissa() & mask) | u64::from(level - 1)))
    }

    /// Ancestor at level `level` (which must not exceed this key's level).
    pub fn ancestor(self, dim: Dim, level: u8) -> NodeKey {
        debug_assert!(level <= self.level());
        let used = dim.n() as u32 * u32::from(level);
        let mask = if used == 0 { 0 } else { u64::MAX << (64 - used) };
        NodeKey((self.abscissa() & mask) | u64::from(level))
    }

    /// Child with Morton suffix `index` in `0..2^d`.
    pub fn child(self, dim: Dim, index: usize) -> Result<NodeKey, MortonError> {
        let level = self.level();
        if level >= dim.level_cap() {
            return Err(MortonError::LevelCap {
                level: level + 1,
                cap: dim.level_cap(),
            });
        }
        debug_assert!(index < dim.children());
        let d = dim.n() as u32;
        let shift = 64 - d * (u32::from(level) + 1);
        Ok(NodeKey(
            self.abscissa() | ((index as u64) << shift) | u64::from(level + 1),
        ))
    }

    /// All `2^d` children in Morton order.
    pub fn children(self, dim: Dim) -> Result<Vec<NodeKey>, MortonError> {
        (0..dim.children()).map(|i| self.child(dim, i)).collect()
    }

    /// Index of this node among its siblings (its last `d` abscissa digits).
    pub fn child_index(self, dim: Dim) -> usize {
        (self.digits(dim) & ((1 << dim.n()) - 1)) as usize
    }

    /// Same-level face neighbour, or `None` when the step leaves `[0,1]^d`.
    pub fn neighbor(self, dim: Dim, axis: usize, dir: i32) -> Option<NodeKey> {
        self.offset(dim, [
            if axis == 0 { dir } else { 0 },
            if axis == 1 { dir } else { 0 },
            if axis == 2 { dir } else { 0 },
        ])
    }

    /// Same-level node shifted by a lattice offset, or `None` outside the domain.
    pub fn offset(self, dim: Dim, delta: [i32; 3]) -> Option<NodeKey> {
        let level = self.level();
        let n = 1i64 << level;
        let mut k = self.coords(dim);
        for axis in 0..dim.n() {
            let v = i64::from(k[axis]) + i64::from(delta[axis]);
            if v < 0 || v >= n {
                return None;
            }
            k[axis] = v as u32;
        }
        Some(Self::encode_unchecked(dim, level, k))
    }

    /// End (exclusive) of the abscissa interval covered by this node's subtree.
    pub fn subtree_end(self, dim: Dim) -> u64 {
        let used = dim.n() as u32 * u32::from(self.level());
        if used == 0 {
            u64::MAX
        } else {
            self.abscissa().saturating_add(1u64 << (64 - used))
        }
    }

    /// Whether `other` lies in this node's subtree (including itself).
    pub fn contains(self, dim: Dim, other: NodeKey) -> bool {
        other.level() >= self.level() && other.ancestor(dim, self.level()) == self
    }
}

impl PartialEq for NodeKey {
    #[inline]
    fn eq(&self, other: &Self) -> bool {
        self.id() == other.id()
    }
}

impl Eq for NodeKey {}

impl PartialOrd for NodeKey {
    #[inline]
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for NodeKey {
    #[inline]
    fn cmp(&self, other: &Self) -> Ordering {
        self.id().cmp(&other.id())
    }
}

impl Hash for NodeKey {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.id().hash(state);
    }
}

impl fmt::Debug for NodeKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "NodeKey(level={}, s={:#018x}", self.level(), self.abscissa())?;
        for (tag, name) in [
            (Tag::Deleted, "D"),
            (Tag::Refine, "R"),
            (Tag::Created, "C"),
        ] {
            if self.has_tag(tag) {
                write!(f, " {name}")?;
            }
        }
        write!(f, ")")
    }
}

/// Geometry of a dyadic cell.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CellGeometry {
    pub dim: Dim,
    pub level: u8,
    pub coords: [u32; 3],
    pub center: [f64; 3],
    pub width: f64,
}

impl CellGeometry {
    pub fn new(dim: Dim, level: u8, coords: [u32; 3]) -> Self {
        let width = 1.0 / (1u64 << level) as f64;
        let mut center = [0.0; 3];
        for axis in 0..dim.n() {
            center[axis] = (f64::from(coords[axis]) + 0.5) * width;
        }
        CellGeometry {
            dim,
            level,
            coords,
            center,
            width,
        }
    }

    pub fn volume(&self) -> f64 {
        self.width.powi(self.dim.n() as i32)
    }

    /// Lower corner of the cell.
    pub fn origin(&self) -> [f64; 3] {
        let mut o = [0.0; 3];
        for axis in 0..self.dim.n() {
            o[axis] = f64::from(self.coords[axis]) * self.width;
        }
        o
    }
}
