//! Finite-volume diffusion operator on the leaves of a graded tree.
//!
//! Every face carries a two-point flux `eps (u_j - u_i) / dist` with `dist`
//! the normal distance between the two cell centres, divided by the volume
//! of the row's cell. For a leaf of level `l` this yields three coefficient
//! types, all proportional to `4^l`:
//!
//! * same level: `eps`,
//! * neighbour one level coarser (fine row): `2 eps / 3`,
//! * each of the `2^{d-1}` neighbours one level finer (coarse row): `8 eps / (3 2^d)`.
//!
//! The coarse and fine rows see the same face flux, so the operator is
//! conservative, and boundary faces carry no flux (homogeneous Neumann).
//! Rows follow the Morton order of the leaves; within a row entries are
//! diagonal, same-level, finer, coarser.

use std::io::{self, Write};

use rayon::prelude::*;

use crate::error::DiffusionError;
use crate::morton::{Dim, NodeKey};
use crate::mr::{Caches, NodeRef, TreeField};

/// Rows per parallel task in matrix-vector products.
const ROW_CHUNK: usize = 2048;

/// Per-cell diffusion coefficient of one species.
#[derive(Clone, Debug, PartialEq)]
pub enum Coefficient {
    Constant(f64),
    /// One value per leaf in Morton order; faces use the harmonic mean.
    PerLeaf(Vec<f64>),
}

impl Coefficient {
    fn face(&self, i: usize, j: usize) -> f64 {
        match self {
            Coefficient::Constant(e) => *e,
            Coefficient::PerLeaf(v) => {
                let (a, b) = (v[i], v[j]);
                if a + b == 0.0 {
                    0.0
                } else {
                    2.0 * a * b / (a + b)
                }
            }
        }
    }
}

/// Base coefficients of the three line types, before the `4^l` factor.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LineTypes {
    pub same: f64,
    pub finer: f64,
    pub coarser: f64,
}

impl LineTypes {
    pub fn new(dim: Dim, eps: f64) -> Self {
        LineTypes {
            same: eps,
            finer: eps * 8.0 / (3.0 * dim.children() as f64),
            coarser: eps * 2.0 / 3.0,
        }
    }

    /// Diagonal coefficient of a line with the given counts at `level`.
    pub fn diagonal(&self, level: u8, counts: [u8; 3]) -> f64 {
        let s = f64::from(counts[0]) * self.same
            + f64::from(counts[1]) * self.finer
            + f64::from(counts[2]) * self.coarser;
        -s * level_factor(level)
    }
}

/// `4^l`, exact in binary floating point.
#[inline]
pub fn level_factor(level: u8) -> f64 {
    (2.0 * f64::from(level)).exp2()
}

/// Face neighbours of one leaf, grouped by type.
#[derive(Clone, Copy, Debug)]
pub struct Neighbourhood {
    pub level: u8,
    pub same: [u32; 6],
    pub finer: [u32; 24],
    pub coarser: [u32; 6],
    pub counts: [u8; 3],
}

impl Neighbourhood {
    fn push(&mut self, ty: usize, rank: u32) {
        let c = self.counts[ty] as usize;
        match ty {
            0 => self.same[c] = rank,
            1 => self.finer[c] = rank,
            _ => self.coarser[c] = rank,
        }
        self.counts[ty] += 1;
    }

    pub fn len(&self) -> usize {
        self.counts.iter().map(|&c| c as usize).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `(type, rank)` in line order.
    pub fn entries(&self) -> impl Iterator<Item = (usize, u32)> + '_ {
        let s = self.same[..self.counts[0] as usize].iter().map(|&r| (0, r));
        let f = self.finer[..self.counts[1] as usize].iter().map(|&r| (1, r));
        let c = self.coarser[..self.counts[2] as usize].iter().map(|&r| (2, r));
        s.chain(f).chain(c)
    }
}

fn leaf_rank(tree: &TreeField, key: NodeKey, caches: &mut Caches) -> Option<Option<u32>> {
    match tree.locate(key, caches) {
        Some(NodeRef::Leaf(r)) => Some(Some(r)),
        Some(NodeRef::Internal(_)) => Some(None),
        None => None,
    }
}

/// Classifies the face neighbours of leaf `key`.
pub fn neighbourhood(
    tree: &TreeField,
    key: NodeKey,
    caches: &mut Caches,
) -> Result<Neighbourhood, DiffusionError> {
    let dim = tree.dim();
    let d = dim.n();
    let mut nb = Neighbourhood {
        level: key.level(),
        same: [0; 6],
        finer: [0; 24],
        coarser: [0; 6],
        counts: [0; 3],
    };
    let mut coarse_queue: [u32; 6] = [0; 6];
    let mut n_coarse = 0;
    let mut finer_queue: [u32; 24] = [0; 24];
    let mut n_finer = 0;
    for axis in 0..d {
        for dir in [-1, 1] {
            let Some(n) = key.neighbor(dim, axis, dir) else {
                continue;
            };
            match leaf_rank(tree, n, caches) {
                Some(Some(r)) => nb.push(0, r),
                Some(None) => {
                    // the children of `n` facing `key`
                    let facing = usize::from(dir < 0);
                    for c in 0..dim.children() {
                        if (c >> (d - 1 - axis)) & 1 != facing {
                            continue;
                        }
                        let ck = n.child(dim, c).map_err(|_| DiffusionError::Grading { a: key, b: n })?;
                        match leaf_rank(tree, ck, caches) {
                            Some(Some(r)) => {
                                finer_queue[n_finer] = r;
                                n_finer += 1;
                            }
                            _ => return Err(DiffusionError::Grading { a: key, b: ck }),
                        }
                    }
                }
                None => {
                    let p = n.parent(dim).map_err(|_| DiffusionError::Grading { a: key, b: n })?;
                    match leaf_rank(tree, p, caches) {
                        Some(Some(r)) => {
                            coarse_queue[n_coarse] = r;
                            n_coarse += 1;
                        }
                        _ => return Err(DiffusionError::Grading { a: key, b: n }),
                    }
                }
            }
        }
    }
    for &r in &finer_queue[..n_finer] {
        nb.push(1, r);
    }
    for &r in &coarse_queue[..n_coarse] {
        nb.push(2, r);
    }
    Ok(nb)
}

/// All leaf neighbourhoods, in parallel.
pub fn neighbourhoods(tree: &TreeField) -> Result<Vec<Neighbourhood>, DiffusionError> {
    tree.leaf_keys()
        .par_iter()
        .map_init(Caches::default, |caches, &k| neighbourhood(tree, k, caches))
        .collect()
}

/// Compressed sparse rows.
#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix {
    pub row_ptr: Vec<usize>,
    pub cols: Vec<u32>,
    pub vals: Vec<f64>,
}

impl CsrMatrix {
    pub fn n(&self) -> usize {
        self.row_ptr.len() - 1
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn row(&self, i: usize) -> (&[u32], &[f64]) {
        let (a, b) = (self.row_ptr[i], self.row_ptr[i + 1]);
        (&self.cols[a..b], &self.vals[a..b])
    }

    /// Builds a matrix from per-row `(col, value)` lists, keeping their order.
    pub fn from_rows(rows: &[Vec<(u32, f64)>]) -> Self {
        let mut row_ptr = Vec::with_capacity(rows.len() + 1);
        row_ptr.push(0);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        for r in rows {
            for &(c, v) in r {
                cols.push(c);
                vals.push(v);
            }
            row_ptr.push(cols.len());
        }
        CsrMatrix { row_ptr, cols, vals }
    }

    /// Diagonal matrix.
    pub fn diagonal(d: &[f64]) -> Self {
        CsrMatrix {
            row_ptr: (0..=d.len()).collect(),
            cols: (0..d.len() as u32).collect(),
            vals: d.to_vec(),
        }
    }

    /// `y = A x`, parallel over row chunks, summing each row in storage order.
    pub fn matvec(&self, x: &[f64], y: &mut [f64]) -> Result<(), DiffusionError> {
        let n = self.n();
        if x.len() != n || y.len() != n {
            return Err(DiffusionError::Dimension {
                expected: n,
                got: if x.len() != n { x.len() } else { y.len() },
            });
        }
        y.par_chunks_mut(ROW_CHUNK).enumerate().for_each(|(c, out)| {
            let base = c * ROW_CHUNK;
            for (k, yi) in out.iter_mut().enumerate() {
                let i = base + k;
                let (a, b) = (self.row_ptr[i], self.row_ptr[i + 1]);
                let mut acc = 0.0;
                for p in a..b {
                    acc += self.vals[p] * x[self.cols[p] as usize];
                }
                *yi = acc;
            }
        });
        Ok(())
    }

    /// `max_i sum_j |a_ij|`, an upper bound on the spectral radius.
    pub fn gershgorin(&self) -> f64 {
        (0..self.n())
            .into_par_iter()
            .with_min_len(ROW_CHUNK)
            .map(|i| self.row(i).1.iter().map(|v| v.abs()).sum::<f64>())
            .reduce(|| 0.0, f64::max)
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.n())
            .into_par_iter()
            .map(|i| self.row(i).1.iter().sum())
            .collect()
    }

    /// Bytes held by the three arrays.
    pub fn footprint_bytes(&self) -> usize {
        self.row_ptr.len() * std::mem::size_of::<usize>()
            + self.cols.len() * std::mem::size_of::<u32>()
            + self.vals.len() * std::mem::size_of::<f64>()
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let n = self.n();
        let mut out = vec![vec![0.0; n]; n];
        for (i, row) in out.iter_mut().enumerate() {
            let (c, v) = self.row(i);
            for (&j, &a) in c.iter().zip(v) {
                row[j as usize] += a;
            }
        }
        out
    }

    /// One `row col value` triplet per line.
    pub fn dump_triplets<W: Write>(&self, mut w: W) -> io::Result<()> {
        for i in 0..self.n() {
            let (c, v) = self.row(i);
            for (&j, &a) in c.iter().zip(v) {
                writeln!(w, "{i} {j} {a:?}")?;
            }
        }
        Ok(())
    }
}

/// Assembles the diffusion operator in CSR form (two passes: count, fill).
pub fn assemble_csr(tree: &TreeField, eps: &Coefficient) -> Result<CsrMatrix, DiffusionError> {
    let dim = tree.dim();
    let n = tree.n_leaves();
    if let Coefficient::PerLeaf(v) = eps {
        if v.len() != n {
            return Err(DiffusionError::Dimension {
                expected: n,
                got: v.len(),
            });
        }
    }
    let nbs = neighbourhoods(tree)?;
    let mut row_ptr = Vec::with_capacity(n + 1);
    row_ptr.push(0);
    for nb in &nbs {
        row_ptr.push(row_ptr.last().unwrap() + 1 + nb.len());
    }
    let nnz = row_ptr[n];
    let mut cols = vec![0u32; nnz];
    let mut vals = vec![0.0; nnz];
    // disjoint row segments for the parallel fill
    let mut segs = Vec::with_capacity(n);
    let (mut rc, mut rv) = (cols.as_mut_slice(), vals.as_mut_slice());
    for nb in &nbs {
        let len = 1 + nb.len();
        let (c, rest_c) = rc.split_at_mut(len);
        let (v, rest_v) = rv.split_at_mut(len);
        segs.push((c, v));
        rc = rest_c;
        rv = rest_v;
    }
    segs.into_par_iter()
        .zip(nbs.par_iter())
        .enumerate()
        .for_each(|(i, ((c, v), nb))| fill_row(dim, eps, i, nb, c, v));
    Ok(CsrMatrix { row_ptr, cols, vals })
}

fn fill_row(dim: Dim, eps: &Coefficient, i: usize, nb: &Neighbourhood, c: &mut [u32], v: &mut [f64]) {
    let lf = level_factor(nb.level);
    c[0] = i as u32;
    match eps {
        Coefficient::Constant(e) => {
            let types = LineTypes::new(dim, *e);
            let base = [types.same, types.finer, types.coarser];
            for (k, (ty, r)) in nb.entries().enumerate() {
                c[k + 1] = r;
                v[k + 1] = base[ty] * lf;
            }
            v[0] = types.diagonal(nb.level, nb.counts);
        }
        Coefficient::PerLeaf(_) => {
            let mut diag = 0.0;
            for (k, (ty, r)) in nb.entries().enumerate() {
                let types = LineTypes::new(dim, eps.face(i, r as usize));
                let a = [types.same, types.finer, types.coarser][ty] * lf;
                c[k + 1] = r;
                v[k + 1] = a;
                diag += a;
            }
            v[0] = -diag;
        }
    }
}

/// Line-stream storage: `p[i]` is the start of line `i` in `k`; each line is
/// a header `level | n_same << 8 | n_finer << 16 | n_coarser << 24` followed
/// by the neighbour ranks. Coefficients are rebuilt from the line types.
#[derive(Clone, Debug, PartialEq)]
pub struct CompactDiffusion {
    pub dim: Dim,
    pub types: LineTypes,
    pub p: Vec<usize>,
    pub k: Vec<u32>,
}

pub fn pack_header(level: u8, counts: [u8; 3]) -> u32 {
    u32::from(level) | u32::from(counts[0]) << 8 | u32::from(counts[1]) << 16 | u32::from(counts[2]) << 24
}

pub fn unpack_header(h: u32) -> (u8, [u8; 3]) {
    (
        (h & 0xff) as u8,
        [(h >> 8) as u8, (h >> 16) as u8, (h >> 24) as u8],
    )
}

impl CompactDiffusion {
    pub fn n(&self) -> usize {
        self.p.len() - 1
    }

    pub fn line(&self, i: usize) -> (u8, [u8; 3], &[u32]) {
        let (a, b) = (self.p[i], self.p[i + 1]);
        let (level, counts) = unpack_header(self.k[a]);
        (level, counts, &self.k[a + 1..b])
    }

    /// `y = A x` with the same per-row summation order as the CSR form.
    pub fn matvec(&self, x: &[f64], y: &mut [f64]) -> Result<(), DiffusionError> {
        let n = self.n();
        if x.len() != n || y.len() != n {
            return Err(DiffusionError::Dimension {
                expected: n,
                got: if x.len() != n { x.len() } else { y.len() },
            });
        }
        let t = self.types;
        y.par_chunks_mut(ROW_CHUNK).enumerate().for_each(|(c, out)| {
            let base = c * ROW_CHUNK;
            for (k, yi) in out.iter_mut().enumerate() {
                let i = base + k;
                let (level, counts, ranks) = self.line(i);
                let lf = level_factor(level);
                let coef = [t.same * lf, t.finer * lf, t.coarser * lf];
                let mut acc = t.diagonal(level, counts) * x[i];
                let mut pos = 0;
                for (ty, &cnt) in counts.iter().enumerate() {
                    for &r in &ranks[pos..pos + cnt as usize] {
                        acc += coef[ty] * x[r as usize];
                    }
                    pos += cnt as usize;
                }
                *yi = acc;
            }
        });
        Ok(())
    }

    pub fn footprint_bytes(&self) -> usize {
        self.p.len() * std::mem::size_of::<usize>()
            + self.k.len() * std::mem::size_of::<u32>()
            + std::mem::size_of::<LineTypes>()
    }

    pub fn to_csr(&self) -> CsrMatrix {
        let n = self.n();
        let mut row_ptr = Vec::with_capacity(n + 1);
        row_ptr.push(0);
        let mut cols = Vec::with_capacity(self.k.len());
        let mut vals = Vec::with_capacity(self.k.len());
        let t = self.types;
        for i in 0..n {
            let (level, counts, ranks) = self.line(i);
            let lf = level_factor(level);
            let coef = [t.same * lf, t.finer * lf, t.coarser * lf];
            cols.push(i as u32);
            vals.push(t.diagonal(level, counts));
            let mut pos = 0;
            for (ty, &cnt) in counts.iter().enumerate() {
                for &r in &ranks[pos..pos + cnt as usize] {
                    cols.push(r);
                    vals.push(coef[ty]);
                }
                pos += cnt as usize;
            }
            row_ptr.push(cols.len());
        }
        CsrMatrix { row_ptr, cols, vals }
    }
}

pub fn assemble_compact(tree: &TreeField, eps: &Coefficient) -> Result<CompactDiffusion, DiffusionError> {
    let Coefficient::Constant(e) = eps else {
        return Err(DiffusionError::VariableCoefficient);
    };
    let nbs = neighbourhoods(tree)?;
    let mut p = Vec::with_capacity(nbs.len() + 1);
    p.push(0);
    let mut k = Vec::with_capacity(nbs.iter().map(|nb| 1 + nb.len()).sum());
    for nb in &nbs {
        k.push(pack_header(nb.level, nb.counts));
        k.extend(nb.entries().map(|(_, r)| r));
        p.push(k.len());
    }
    Ok(CompactDiffusion {
        dim: tree.dim(),
        types: LineTypes::new(tree.dim(), *e),
        p,
        k,
    })
}

/// Converts a constant-coefficient CSR operator assembled on `tree`,
/// checking every value against the three line types.
pub fn csr_to_compact(csr: &CsrMatrix, tree: &TreeField, eps: f64) -> Result<CompactDiffusion, DiffusionError> {
    let n = csr.n();
    if n != tree.n_leaves() {
        return Err(DiffusionError::Dimension {
            expected: tree.n_leaves(),
            got: n,
        });
    }
    let dim = tree.dim();
    let types = LineTypes::new(dim, eps);
    let mut p = Vec::with_capacity(n + 1);
    p.push(0);
    let mut k = Vec::with_capacity(csr.nnz());
    for (i, key) in tree.leaf_keys().iter().enumerate() {
        let level = key.level();
        let lf = level_factor(level);
        let coef = [types.same * lf, types.finer * lf, types.coarser * lf];
        let (c, v) = csr.row(i);
        if c.first() != Some(&(i as u32)) {
            return Err(DiffusionError::Format {
                row: i,
                value: v.first().copied().unwrap_or(f64::NAN),
            });
        }
        let mut counts = [0u8; 3];
        let mut last = 0;
        let start = k.len();
        k.push(0);
        // in 2D the finer and coarser values coincide; the neighbour level decides
        for (&j, &a) in c[1..].iter().zip(&v[1..]) {
            let nl = tree.leaf_keys().get(j as usize).map(|nk| nk.level());
            let ty = match nl {
                Some(l) if l == level => 0,
                Some(l) if l == level + 1 => 1,
                Some(l) if l + 1 == level => 2,
                _ => 3,
            };
            if ty == 3 || ty < last || a.to_bits() != coef[ty].to_bits() {
                return Err(DiffusionError::Format { row: i, value: a });
            }
            last = ty;
            counts[ty] += 1;
            k.push(j);
        }
        if v[0].to_bits() != types.diagonal(level, counts).to_bits() {
            return Err(DiffusionError::Format { row: i, value: v[0] });
        }
        k[start] = pack_header(level, counts);
        p.push(k.len());
    }
    Ok(CompactDiffusion { dim, types, p, k })
}

pub fn compact_to_csr(c: &CompactDiffusion) -> CsrMatrix {
    c.to_csr()
}

/// The classical 5/7-point stencil on a full `n^d` grid in lexicographic
/// order (axis 0 slowest), with the same summation order as the assembled
/// rows: diagonal, then axis by axis the `-1` and `+1` neighbours.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CartesianLaplacian {
    pub dim: Dim,
    pub level: u8,
    pub eps: f64,
}

impl CartesianLaplacian {
    pub fn new(dim: Dim, level: u8, eps: f64) -> Self {
        CartesianLaplacian { dim, level, eps }
    }

    pub fn n_side(&self) -> usize {
        1 << self.level
    }

    pub fn len(&self) -> usize {
        self.n_side().pow(self.dim.n() as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Lexicographic index of integer coordinates.
    pub fn index(&self, c: [u32; 3]) -> usize {
        let n = self.n_side();
        (0..self.dim.n()).fold(0, |acc, a| acc * n + c[a] as usize)
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) -> Result<(), DiffusionError> {
        let len = self.len();
        if x.len() != len || y.len() != len {
            return Err(DiffusionError::Dimension {
                expected: len,
                got: if x.len() != len { x.len() } else { y.len() },
            });
        }
        let d = self.dim.n();
        let n = self.n_side();
        let types = LineTypes::new(self.dim, self.eps);
        let off = types.same * level_factor(self.level);
        let strides: Vec<usize> = (0..d).map(|a| n.pow((d - 1 - a) as u32)).collect();
        y.par_chunks_mut(ROW_CHUNK).enumerate().for_each(|(ch, out)| {
            let base = ch * ROW_CHUNK;
            for (k, yi) in out.iter_mut().enumerate() {
                let i = base + k;
                let mut cnt = 0u8;
                let mut nbr = [0usize; 6];
                for &st in &strides {
                    let ca = (i / st) % n;
                    if ca > 0 {
                        nbr[cnt as usize] = i - st;
                        cnt += 1;
                    }
                    if ca + 1 < n {
                        nbr[cnt as usize] = i + st;
                        cnt += 1;
                    }
                }
                let mut acc = types.diagonal(self.level, [cnt, 0, 0]) * x[i];
                for &j in &nbr[..cnt as usize] {
                    acc += off * x[j];
                }
                *yi = acc;
            }
        });
        Ok(())
    }

    /// `2 (2d) eps 4^l`.
    pub fn gershgorin(&self) -> f64 {
        2.0 * (2 * self.dim.n()) as f64 * self.eps * level_factor(self.level)
    }
}

/// Leaf ranks of a uniform tree listed in lexicographic order.
pub fn lexicographic_permutation(tree: &TreeField) -> Vec<usize> {
    let dim = tree.dim();
    let mut order: Vec<(usize, usize)> = tree
        .leaf_keys()
        .iter()
        .enumerate()
        .map(|(r, k)| {
            let c = k.coords(dim);
            let n = 1usize << k.level();
            ((0..dim.n()).fold(0, |acc, a| acc * n + c[a] as usize), r)
        })
        .collect();
    order.sort_unstable();
    order.into_iter().map(|(_, r)| r).collect()
}
