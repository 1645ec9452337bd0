use rayon::prelude::*;

use super::predict::{stencil_offsets, DetailField};
use super::tree::{Caches, NodeRef, TreeField};
use super::MrConfig;
use crate::error::MrError;
use crate::morton::{CellGeometry, Dim, NodeKey, Tag};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct AdaptStats {
    /// Leaves refined because of a significant detail.
    pub refined: usize,
    /// Extra leaves refined to keep the tree graded.
    pub graded: usize,
    /// Internal nodes turned back into leaves.
    pub coarsened: usize,
    /// Coarsening rounds, each followed by garbage collection.
    pub rounds: usize,
}

impl AdaptStats {
    pub fn changed(&self) -> bool {
        self.refined + self.graded + self.coarsened > 0
    }
}

const GAUSS3: [(f64, f64); 3] = [
    (-0.774_596_669_241_483_4, 5.0 / 18.0),
    (0.0, 8.0 / 18.0),
    (0.774_596_669_241_483_4, 5.0 / 18.0),
];

/// Cell average of a point function by tensor 3-point Gauss quadrature.
pub(crate) fn cell_average<G>(dim: Dim, cell: &CellGeometry, g: &G, out: &mut [f64])
where
    G: Fn(&[f64; 3], &mut [f64]),
{
    let d = dim.n();
    let pts = 3usize.pow(d as u32);
    let mut val = vec![0.0; out.len()];
    out.iter_mut().for_each(|o| *o = 0.0);
    for p in 0..pts {
        let mut x = cell.center;
        let mut w = 1.0;
        let mut q = p;
        for xa in x.iter_mut().take(d) {
            let (node, weight) = GAUSS3[q % 3];
            q /= 3;
            *xa += 0.5 * cell.width * node;
            w *= weight;
        }
        g(&x, &mut val);
        for (o, v) in out.iter_mut().zip(&val) {
            *o += w * v;
        }
    }
}

impl TreeField {
    /// Builds an adapted tree for a field given pointwise: starting from the
    /// full `J_min` floor, leaves receive exact cell averages and the tree is
    /// re-adapted until its leaf set stops changing.
    pub fn initialize<G>(cfg: MrConfig, m: usize, g: G) -> Result<Self, MrError>
    where
        G: Fn(&[f64; 3], &mut [f64]) + Sync,
    {
        let dim = cfg.dim;
        let mut tree = Self::uniform(cfg, m, cfg.jmin, |c, out| cell_average(dim, c, &g, out))?;
        let thresholds = cfg.thresholds();
        let max_iter = 2 * usize::from(cfg.levels - cfg.jmin) + 4;
        for _ in 0..max_iter {
            let details = tree.compute_details()?;
            let stats = tree.adapt(&details, &thresholds)?;
            tree.fill_from(&g);
            tree.project_up()?;
            if !stats.changed() {
                break;
            }
        }
        Ok(tree)
    }

    /// Overwrites every leaf with the cell average of `g`.
    pub fn fill_from<G>(&mut self, g: &G)
    where
        G: Fn(&[f64; 3], &mut [f64]) + Sync,
    {
        let dim = self.cfg.dim;
        let m = self.m;
        let rows: Vec<Vec<f64>> = self
            .leaf_keys
            .par_iter()
            .map(|k| {
                let mut out = vec![0.0; m];
                cell_average(dim, &k.decode(dim), g, &mut out);
                out
            })
            .collect();
        for (i, row) in rows.iter().enumerate() {
            for (s, v) in row.iter().enumerate() {
                self.leaf_vals[s][i] = *v;
            }
        }
    }

    /// Projection, details and adaptation with the configured thresholds.
    pub fn remesh(&mut self) -> Result<AdaptStats, MrError> {
        self.project_up()?;
        let details = self.compute_details()?;
        let stats = self.adapt(&details, &self.cfg.thresholds())?;
        self.project_up()?;
        Ok(stats)
    }

    /// One adaptation pass driven by `details` (computed on the current tree).
    ///
    /// A leaf at level `j < J` is refined when the detail group it belongs to
    /// reaches `ε_j`; tags are then closed under the grading constraint and
    /// applied from coarse to fine, new children receiving predicted values.
    /// Coarsening rounds follow: an internal node whose children are all
    /// pre-existing leaves becomes a leaf when both its children's group and
    /// its own group are below threshold and no finer internal node depends on
    /// its children. Collections are compacted after each round and the tree
    /// returns to the clean state at the end.
    pub fn adapt(
        &mut self,
        details: &DetailField,
        thresholds: &[f64],
    ) -> Result<AdaptStats, MrError> {
        let dim = self.cfg.dim;
        let levels = self.cfg.levels;
        let jmin = self.cfg.jmin;
        let mut stats = AdaptStats::default();

        let tagged: Vec<NodeKey> = self
            .leaf_keys
            .par_iter()
            .filter_map(|&leaf| {
                let j = leaf.level();
                if j < jmin || j >= levels {
                    return None;
                }
                let r = details.rank(leaf.parent(dim).ok()?)?;
                (details.significance(r) >= thresholds[usize::from(j)]).then_some(leaf)
            })
            .collect();
        stats.refined = tagged.len();
        let total = self.refine_graded(tagged)?;
        stats.graded = total - stats.refined;

        let candidates: Vec<NodeKey> = details
            .keys()
            .par_iter()
            .enumerate()
            .filter_map(|(r, &p)| {
                let l = p.level();
                if l < jmin || l >= levels {
                    return None;
                }
                if details.significance(r) >= thresholds[usize::from(l) + 1] {
                    return None;
                }
                let rp = details.rank(p.parent(dim).ok()?)?;
                (details.significance(rp) < thresholds[usize::from(l)]).then_some(p)
            })
            .collect();
        let mut remaining = candidates;
        while !remaining.is_empty() {
            let verdict: Vec<bool> = remaining
                .par_iter()
                .map_init(Caches::default, |caches, &p| self.can_coarsen(p, caches))
                .collect();
            let (go, stay): (Vec<_>, Vec<_>) = remaining
                .into_iter()
                .zip(verdict)
                .partition(|(_, ok)| *ok);
            if go.is_empty() {
                break;
            }
            let go: Vec<NodeKey> = go.into_iter().map(|(p, _)| p).collect();
            remaining = stay.into_iter().map(|(p, _)| p).collect();
            self.coarsen(&go)?;
            stats.coarsened += go.len();
            stats.rounds += 1;
        }

        self.finalize();
        Ok(stats)
    }

    /// Refines the given leaves plus whatever grading requires; returns the
    /// number of leaves refined. Leaves the tree in the clean state.
    pub fn refine_keys(&mut self, keys: Vec<NodeKey>) -> Result<usize, MrError> {
        let n = self.refine_graded(keys)?;
        self.finalize();
        self.project_up()?;
        Ok(n)
    }

    fn refine_graded(&mut self, tagged: Vec<NodeKey>) -> Result<usize, MrError> {
        let dim = self.cfg.dim;
        let offsets = stencil_offsets(dim);
        let mut total = 0;
        let mut pending = tagged;
        while !pending.is_empty() {
            let by_level = self.grading_closure(pending)?;
            let done: Vec<NodeKey> = by_level.iter().flatten().copied().collect();
            total += done.len();
            self.refine_levels(by_level)?;
            // every new internal node must see its full neighbourhood
            let missing: Vec<NodeKey> = done
                .par_iter()
                .map_init(Caches::default, |caches, &l| {
                    let mut out = Vec::new();
                    for off in offsets {
                        if let Some(nb) = l.offset(dim, *off) {
                            if self.locate(nb, caches).is_none() {
                                if let Ok(p) = nb.parent(dim) {
                                    out.push(p);
                                }
                            }
                        }
                    }
                    out
                })
                .flatten()
                .collect();
            pending = missing;
            pending.sort();
            pending.dedup();
        }
        Ok(total)
    }

    /// Groups tags by level and adds, from fine to coarse, the parents of
    /// stencil cells that must exist for a tagged leaf to be refined.
    fn grading_closure(&self, tagged: Vec<NodeKey>) -> Result<Vec<Vec<NodeKey>>, MrError> {
        let dim = self.cfg.dim;
        let levels = usize::from(self.cfg.levels);
        let jmin = usize::from(self.cfg.jmin);
        let offsets = stencil_offsets(dim);
        let mut by_level: Vec<Vec<NodeKey>> = vec![Vec::new(); levels + 1];
        for k in tagged {
            if usize::from(k.level()) < levels {
                by_level[usize::from(k.level())].push(k.untagged());
            }
        }
        for j in (jmin..levels).rev() {
            by_level[j].sort();
            by_level[j].dedup();
            if j == jmin {
                break;
            }
            let extra: Vec<Vec<NodeKey>> = by_level[j]
                .par_iter()
                .map_init(Caches::default, |caches, &l| {
                    let mut out = Vec::new();
                    for off in offsets {
                        let Some(nb) = l.offset(dim, *off) else {
                            continue;
                        };
                        if self.locate(nb, caches).is_some() {
                            continue;
                        }
                        let p = nb.parent(dim)?;
                        match self.locate(p, caches) {
                            Some(NodeRef::Leaf(_)) => out.push(p),
                            _ => {
                                return Err(MrError::Grading {
                                    node: l,
                                    missing: p,
                                })
                            }
                        }
                    }
                    Ok(out)
                })
                .collect::<Result<_, MrError>>()?;
            by_level[j - 1].extend(extra.into_iter().flatten());
        }
        Ok(by_level)
    }

    fn refine_levels(&mut self, by_level: Vec<Vec<NodeKey>>) -> Result<(), MrError> {
        let dim = self.cfg.dim;
        let m = self.m;
        let nc = dim.children();
        for keys in by_level {
            if keys.is_empty() {
                continue;
            }
            let this = &*self;
            let preds: Vec<(u32, Vec<f64>)> = keys
                .par_iter()
                .map_init(
                    || (Caches::default(), vec![0.0; dim.stencil_len() * m]),
                    |(caches, stencil), &l| {
                        let slot = match this.locate(l, caches) {
                            Some(NodeRef::Leaf(s)) => s,
                            _ => {
                                return Err(MrError::Grading {
                                    node: l,
                                    missing: l,
                                })
                            }
                        };
                        let mut kids = vec![0.0; nc * m];
                        this.predict_into(l, caches, stencil, &mut kids)?;
                        Ok((slot, kids))
                    },
                )
                .collect::<Result<_, MrError>>()?;

            let mut int_items = Vec::with_capacity(keys.len());
            let mut leaf_items = Vec::with_capacity(keys.len() * nc);
            for (&l, (slot, kids)) in keys.iter().zip(&preds) {
                let islot = self.int_vals[0].len() as u32;
                for s in 0..m {
                    let v = self.leaf_vals[s][*slot as usize];
                    self.int_vals[s].push(v);
                }
                int_items.push((l, islot));
                for c in 0..nc {
                    let lslot = self.leaf_vals[0].len() as u32;
                    for s in 0..m {
                        self.leaf_vals[s].push(kids[c * m + s]);
                    }
                    leaf_items.push((l.child(dim, c)?.with_tag(Tag::Created), lslot));
                }
            }
            self.leaves.mark_batch(&keys)?;
            self.internal.insert_batch(int_items)?;
            self.leaves.insert_batch(leaf_items)?;
            self.leaves.sort();
            self.internal.sort();
        }
        Ok(())
    }

    fn can_coarsen(&self, p: NodeKey, caches: &mut Caches) -> bool {
        let dim = self.cfg.dim;
        if self.internal.find_live(p, &mut caches.internal).is_none() {
            return false;
        }
        for c in 0..dim.children() {
            let Ok(child) = p.child(dim, c) else {
                return false;
            };
            match self.leaves.find_live(child, &mut caches.leaf) {
                Some(loc) if !self.leaves.key_at(loc).has_tag(Tag::Created) => {}
                _ => return false,
            }
        }
        for c in 0..dim.children() {
            let child = p.child(dim, c).expect("checked above");
            for off in stencil_offsets(dim) {
                let Some(nb) = child.offset(dim, *off) else {
                    continue;
                };
                if nb.parent(dim).ok() == Some(p) {
                    continue;
                }
                if self.internal.find_live(nb, &mut caches.internal).is_some() {
                    return false;
                }
            }
        }
        true
    }

    fn coarsen(&mut self, parents: &[NodeKey]) -> Result<(), MrError> {
        let dim = self.cfg.dim;
        let m = self.m;
        let mut children = Vec::with_capacity(parents.len() * dim.children());
        let mut items = Vec::with_capacity(parents.len());
        let mut caches = Caches::default();
        for &p in parents {
            for c in 0..dim.children() {
                children.push(p.child(dim, c)?);
            }
            let Some(NodeRef::Internal(islot)) = self.locate(p, &mut caches) else {
                return Err(MrError::Grading { node: p, missing: p });
            };
            let lslot = self.leaf_vals[0].len() as u32;
            for s in 0..m {
                let v = self.int_vals[s][islot as usize];
                self.leaf_vals[s].push(v);
            }
            items.push((p, lslot));
        }
        self.leaves.mark_batch(&children)?;
        self.internal.mark_batch(parents)?;
        self.leaves.garbage_collect();
        self.internal.garbage_collect();
        self.leaves.insert_batch(items)?;
        self.leaves.sort();
        Ok(())
    }
}

/// A random graded tree: the `J_min` floor refined `rounds` times at random
/// leaves (each leaf below `J` picked with probability `fraction`, grading
/// closure applied), then filled with uniform random leaf values in `[-1, 1)`.
pub fn random_graded<R: rand::Rng>(
    cfg: MrConfig,
    m: usize,
    rng: &mut R,
    rounds: usize,
    fraction: f64,
) -> Result<TreeField, MrError> {
    let mut tree = TreeField::uniform(cfg, m, cfg.jmin, |_, out| out.fill(0.0))?;
    for _ in 0..rounds {
        let picks: Vec<NodeKey> = tree
            .leaf_keys
            .iter()
            .copied()
            .filter(|k| k.level() < cfg.levels && rng.random_bool(fraction))
            .collect();
        tree.refine_keys(picks)?;
    }
    for vals in tree.leaf_vals.iter_mut() {
        for v in vals.iter_mut() {
            *v = rng.random_range(-1.0..1.0);
        }
    }
    tree.project_up()?;
    Ok(tree)
}
