use std::sync::OnceLock;

use rayon::prelude::*;

use super::tree::{Caches, TreeField};
use crate::error::MrError;
use crate::morton::{Dim, NodeKey};

/// One-dimensional prediction weights for offsets `(-1, 0, 1)`: row 0 gives
/// the left child `u_k + (u_{k-1} - u_{k+1})/8`, row 1 the mirrored right child.
pub const PREDICT_WEIGHTS: [[f64; 3]; 2] = [[0.125, 1.0, -0.125], [-0.125, 1.0, 0.125]];

/// Children `(left, right)` of a 1D cell from its values `(u_{k-1}, u_k, u_{k+1})`.
pub fn predict_1d(u: [f64; 3]) -> [f64; 2] {
    let w = PREDICT_WEIGHTS;
    [
        w[0][0] * u[0] + w[0][1] * u[1] + w[0][2] * u[2],
        w[1][0] * u[0] + w[1][1] * u[1] + w[1][2] * u[2],
    ]
}

static OFFSETS_2: OnceLock<Vec<[i32; 3]>> = OnceLock::new();
static OFFSETS_3: OnceLock<Vec<[i32; 3]>> = OnceLock::new();
static WEIGHTS_2: OnceLock<Vec<f64>> = OnceLock::new();
static WEIGHTS_3: OnceLock<Vec<f64>> = OnceLock::new();

/// The `3^d` lattice offsets; entry index is `sum (delta_a + 1) 3^{d-1-a}`.
pub(crate) fn stencil_offsets(dim: Dim) -> &'static [[i32; 3]] {
    let cell = match dim {
        Dim::Two => &OFFSETS_2,
        Dim::Three => &OFFSETS_3,
    };
    cell.get_or_init(|| {
        let d = dim.n();
        (0..dim.stencil_len())
            .map(|mut idx| {
                let mut off = [0i32; 3];
                for axis in (0..d).rev() {
                    off[axis] = (idx % 3) as i32 - 1;
                    idx /= 3;
                }
                off
            })
            .collect()
    })
}

/// Tensor-product weight table, `[child][stencil index]`.
fn weight_table(dim: Dim) -> &'static [f64] {
    let cell = match dim {
        Dim::Two => &WEIGHTS_2,
        Dim::Three => &WEIGHTS_3,
    };
    cell.get_or_init(|| {
        let d = dim.n();
        let offsets = stencil_offsets(dim);
        let mut w = Vec::with_capacity(dim.children() * offsets.len());
        for c in 0..dim.children() {
            for off in offsets {
                let mut x = 1.0;
                for axis in 0..d {
                    let bit = (c >> (d - 1 - axis)) & 1;
                    x *= PREDICT_WEIGHTS[bit][(off[axis] + 1) as usize];
                }
                w.push(x);
            }
        }
        w
    })
}

/// Predicts the `2^d` children of one species from its `3^d` stencil values.
pub fn predict_tensor(dim: Dim, stencil: &[f64], out: &mut [f64]) {
    let w = weight_table(dim);
    let n = dim.stencil_len();
    for (c, o) in out.iter_mut().enumerate().take(dim.children()) {
        let row = &w[c * n..(c + 1) * n];
        *o = row.iter().zip(stencil).map(|(a, b)| a * b).sum();
    }
}

impl TreeField {
    /// Gathers `[stencil index][species]` values around `node`; cells outside
    /// the domain take the value of their mirror image.
    pub(crate) fn gather_stencil(
        &self,
        node: NodeKey,
        caches: &mut Caches,
        out: &mut [f64],
    ) -> Result<(), MrError> {
        let dim = self.cfg.dim;
        let level = node.level();
        let last = (1i64 << level) - 1;
        let coords = node.coords(dim);
        let m = self.m;
        for (idx, off) in stencil_offsets(dim).iter().enumerate() {
            let mut k = coords;
            for axis in 0..dim.n() {
                let v = (i64::from(coords[axis]) + i64::from(off[axis])).clamp(0, last);
                k[axis] = v as u32;
            }
            let nb = NodeKey::encode_unchecked(dim, level, k);
            let r = self.locate(nb, caches).ok_or(MrError::Grading {
                node,
                missing: nb,
            })?;
            self.read(r, &mut out[idx * m..(idx + 1) * m]);
        }
        Ok(())
    }

    /// Predicted children of `node` as `[child][species]`.
    pub(crate) fn predict_into(
        &self,
        node: NodeKey,
        caches: &mut Caches,
        stencil: &mut [f64],
        out: &mut [f64],
    ) -> Result<(), MrError> {
        let dim = self.cfg.dim;
        let m = self.m;
        let n = dim.stencil_len();
        self.gather_stencil(node, caches, stencil)?;
        let w = weight_table(dim);
        for c in 0..dim.children() {
            let row = &w[c * n..(c + 1) * n];
            for s in 0..m {
                let mut acc = 0.0;
                for (i, wi) in row.iter().enumerate() {
                    acc += wi * stencil[i * m + s];
                }
                out[c * m + s] = acc;
            }
        }
        Ok(())
    }

    /// Predicted values of the `2^d` children of `node`, `[child][species]`.
    pub fn predict(&self, node: NodeKey) -> Result<Vec<f64>, MrError> {
        let dim = self.cfg.dim;
        let mut stencil = vec![0.0; dim.stencil_len() * self.m];
        let mut out = vec![0.0; dim.children() * self.m];
        self.predict_into(node, &mut Caches::default(), &mut stencil, &mut out)?;
        Ok(out)
    }

    /// Details of every internal node's children against their prediction.
    pub fn compute_details(&self) -> Result<DetailField, MrError> {
        let dim = self.cfg.dim;
        let m = self.m;
        let nc = dim.children();
        let n = self.int_keys.len();
        let mut details = vec![0.0; n * nc * m];
        let mut norms = vec![0.0; n * m];
        details
            .par_chunks_mut(nc * m)
            .zip(norms.par_chunks_mut(m))
            .zip(self.int_keys.par_iter())
            .try_for_each_init(
                || {
                    (
                        Caches::default(),
                        vec![0.0; dim.stencil_len() * m],
                        vec![0.0; m],
                    )
                },
                |(caches, stencil, child), ((group, norm), &p)| {
                    self.predict_into(p, caches, stencil, group)?;
                    for c in 0..nc {
                        let key = p.child(dim, c)?;
                        let r = self.locate(key, caches).ok_or(MrError::Grading {
                            node: p,
                            missing: key,
                        })?;
                        self.read(r, child);
                        for s in 0..m {
                            group[c * m + s] = child[s] - group[c * m + s];
                        }
                    }
                    for s in 0..m {
                        let mut acc = 0.0;
                        for c in 0..nc {
                            acc += group[c * m + s] * group[c * m + s];
                        }
                        norm[s] = acc.sqrt();
                    }
                    Ok::<(), MrError>(())
                },
            )?;
        let scales = (0..m)
            .map(|s| {
                self.leaf_vals[s]
                    .par_iter()
                    .map(|v| v.abs())
                    .reduce(|| 0.0, f64::max)
                    .max(1.0)
            })
            .collect();
        Ok(DetailField {
            dim,
            m,
            keys: self.int_keys.clone(),
            details,
            norms,
            scales,
        })
    }
}

/// Details grouped by parent: for internal node `p` (Morton rank `r`) the
/// `2^d` children's details and their per-species Euclidean norm.
#[derive(Clone, Debug)]
pub struct DetailField {
    dim: Dim,
    m: usize,
    keys: Vec<NodeKey>,
    details: Vec<f64>,
    norms: Vec<f64>,
    scales: Vec<f64>,
}

impl DetailField {
    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    /// Parents in Morton order.
    pub fn keys(&self) -> &[NodeKey] {
        &self.keys
    }

    pub fn rank(&self, parent: NodeKey) -> Option<usize> {
        self.keys.binary_search(&parent).ok()
    }

    /// `[child][species]` details of the children of parent `rank`.
    pub fn group(&self, rank: usize) -> &[f64] {
        let w = self.dim.children() * self.m;
        &self.details[rank * w..(rank + 1) * w]
    }

    pub fn norm(&self, rank: usize, species: usize) -> f64 {
        self.norms[rank * self.m + species]
    }

    /// Per-species normalisation: max-norm over the leaves, floored at 1.
    pub fn scales(&self) -> &[f64] {
        &self.scales
    }

    /// Largest normalised group norm over the species.
    pub fn significance(&self, rank: usize) -> f64 {
        (0..self.m)
            .map(|s| self.norm(rank, s) / self.scales[s])
            .fold(0.0, f64::max)
    }

    /// Detail vector of a non-root node.
    pub fn detail_of(&self, key: NodeKey) -> Option<&[f64]> {
        let parent = key.parent(self.dim).ok()?;
        let r = self.rank(parent)?;
        let c = key.child_index(self.dim);
        Some(&self.group(r)[c * self.m..(c + 1) * self.m])
    }

    /// Largest absolute detail.
    pub fn max_abs(&self) -> f64 {
        self.details.iter().fold(0.0, |a, d| a.max(d.abs()))
    }
}
