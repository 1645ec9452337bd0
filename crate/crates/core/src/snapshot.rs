//! Line-oriented text snapshots.
//!
//! ```text
//! # mrrd snapshot
//! config model=bz
//! config dim=2
//! ...
//! dim 2
//! step 20
//! time 0.02
//! leaves 5312
//! cr 0.9797
//! species u v w
//! 3076 4 0.03125 0.03125 0.0004 0.8 0.0004
//! ...
//! ```
//!
//! One record per leaf in Morton order: the raw 64-bit key in decimal (level
//! in bits 0 to 4, no tags), the level, the `d` centre coordinates and the
//! `m` values. Floats use the shortest decimal that parses back to the same
//! bits.

use std::fmt::Write as _;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::SnapshotError;
use crate::morton::{Dim, NodeKey};
use crate::splitting::Grid;

const MAGIC: &str = "# mrrd snapshot";

#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot {
    pub config: Vec<(String, String)>,
    pub dim: Dim,
    pub step: usize,
    pub time: f64,
    pub cr: f64,
    pub species: Vec<String>,
    pub keys: Vec<NodeKey>,
    /// Species-major, `values[s][i]` belongs to `keys[i]`.
    pub values: Vec<Vec<f64>>,
}

fn io(path: &Path, source: std::io::Error) -> SnapshotError {
    SnapshotError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn bad(line: usize, reason: impl Into<String>) -> SnapshotError {
    SnapshotError::Parse {
        line,
        reason: reason.into(),
    }
}

impl Snapshot {
    /// Copies the leaves of `grid` in Morton order.
    pub fn capture<K, V>(grid: &Grid, species: Vec<String>, config: Vec<(K, V)>, step: usize, time: f64) -> Self
    where
        K: Into<String>,
        V: Into<String>,
    {
        let n = grid.n_cells();
        let mut order: Vec<(u64, u8, usize)> = (0..n)
            .map(|i| {
                let k = grid.key(i);
                (k.abscissa(), k.level(), i)
            })
            .collect();
        if order.windows(2).any(|w| w[0] > w[1]) {
            order.sort_unstable();
        }
        let keys = order.iter().map(|&(_, _, i)| grid.key(i).untagged()).collect();
        let values = grid
            .values()
            .iter()
            .map(|col| order.iter().map(|&(_, _, i)| col[i]).collect())
            .collect();
        Snapshot {
            config: config.into_iter().map(|(k, v)| (k.into(), v.into())).collect(),
            dim: grid.dim(),
            step,
            time,
            cr: grid.compression_ratio(),
            species,
            keys,
            values,
        }
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn to_text(&self) -> Result<String, SnapshotError> {
        if self.keys.is_empty() {
            return Err(SnapshotError::Empty);
        }
        let d = self.dim.n();
        let mut s = String::with_capacity(self.keys.len() * (24 + 24 * (d + self.values.len())));
        let _ = writeln!(s, "{MAGIC}");
        for (k, v) in &self.config {
            let _ = writeln!(s, "config {k}={v}");
        }
        let _ = writeln!(s, "dim {d}");
        let _ = writeln!(s, "step {}", self.step);
        let _ = writeln!(s, "time {}", self.time);
        let _ = writeln!(s, "leaves {}", self.keys.len());
        let _ = writeln!(s, "cr {}", self.cr);
        let _ = writeln!(s, "species {}", self.species.join(" "));
        for (i, key) in self.keys.iter().enumerate() {
            let g = key.decode(self.dim);
            let _ = write!(s, "{} {}", key.raw(), key.level());
            for c in &g.center[..d] {
                let _ = write!(s, " {c}");
            }
            for col in &self.values {
                let _ = write!(s, " {}", col[i]);
            }
            s.push('\n');
        }
        Ok(s)
    }

    pub fn write(&self, path: &Path) -> Result<(), SnapshotError> {
        let text = self.to_text()?;
        if let Some(dir) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
        }
        let f = std::fs::File::create(path).map_err(|e| io(path, e))?;
        let mut w = BufWriter::new(f);
        w.write_all(text.as_bytes()).and_then(|_| w.flush()).map_err(|e| io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self, SnapshotError> {
        let text = std::fs::read_to_string(path).map_err(|e| io(path, e))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, SnapshotError> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        match lines.next() {
            Some((_, MAGIC)) => {}
            _ => return Err(bad(1, "missing snapshot header")),
        }
        let mut config = Vec::new();
        let mut header = |want: &str, lines: &mut dyn Iterator<Item = (usize, &str)>| -> Result<(usize, String), SnapshotError> {
            loop {
                let (n, l) = lines.next().ok_or_else(|| bad(0, format!("missing `{want}` line")))?;
                if let Some(kv) = l.strip_prefix("config ") {
                    let (k, v) = kv.split_once('=').ok_or_else(|| bad(n, "config entry without `=`"))?;
                    config.push((k.to_string(), v.to_string()));
                    continue;
                }
                let (tag, rest) = l.split_once(' ').unwrap_or((l, ""));
                if tag != want {
                    return Err(bad(n, format!("expected `{want}`, found `{tag}`")));
                }
                return Ok((n, rest.to_string()));
            }
        };
        let field = |n: usize, key: &str, v: &str| bad(n, format!("bad {key} `{v}`"));
        let (n, v) = header("dim", &mut lines)?;
        let dim = v
            .parse::<usize>()
            .ok()
            .and_then(Dim::from_usize)
            .ok_or_else(|| field(n, "dim", &v))?;
        let (n, v) = header("step", &mut lines)?;
        let step = v.parse().map_err(|_| field(n, "step", &v))?;
        let (n, v) = header("time", &mut lines)?;
        let time = v.parse().map_err(|_| field(n, "time", &v))?;
        let (n, v) = header("leaves", &mut lines)?;
        let leaves: usize = v.parse().map_err(|_| field(n, "leaves", &v))?;
        let (n, v) = header("cr", &mut lines)?;
        let cr = v.parse().map_err(|_| field(n, "cr", &v))?;
        let (_, v) = header("species", &mut lines)?;
        let species: Vec<String> = v.split_whitespace().map(String::from).collect();
        let m = species.len();
        let d = dim.n();

        let mut keys = Vec::with_capacity(leaves);
        let mut values = vec![Vec::with_capacity(leaves); m];
        for (n, l) in lines {
            if l.trim().is_empty() {
                continue;
            }
            let tok: Vec<&str> = l.split_whitespace().collect();
            if tok.len() != 2 + d + m {
                return Err(bad(n, format!("expected {} fields, found {}", 2 + d + m, tok.len())));
            }
            let raw: u64 = tok[0].parse().map_err(|_| field(n, "key", tok[0]))?;
            let key = NodeKey::from_raw(dim, raw).map_err(|e| bad(n, e.to_string()))?;
            let level: u8 = tok[1].parse().map_err(|_| field(n, "level", tok[1]))?;
            if level != key.level() {
                return Err(bad(n, format!("level {level} disagrees with key level {}", key.level())));
            }
            for (s, t) in tok[2 + d..].iter().enumerate() {
                values[s].push(t.parse().map_err(|_| field(n, "value", t))?);
            }
            keys.push(key);
        }
        if keys.len() != leaves {
            return Err(bad(0, format!("header announces {leaves} leaves, found {}", keys.len())));
        }
        if keys.is_empty() {
            return Err(SnapshotError::Empty);
        }
        Ok(Snapshot {
            config,
            dim,
            step,
            time,
            cr,
            species,
            keys,
            values,
        })
    }

    /// Piecewise-constant values on the uniform grid at `level`, axis 0
    /// fastest. Leaves finer than `level` are averaged.
    pub fn rasterize(&self, level: u8) -> Vec<Vec<f64>> {
        let d = self.dim.n();
        let n = 1usize << level;
        let len = n.pow(d as u32);
        let mut out = vec![vec![0.0; len]; self.values.len()];
        let mut weight = vec![0.0; len];
        for (i, key) in self.keys.iter().enumerate() {
            let l = key.level();
            let c = key.coords(self.dim);
            let (lo, span, w) = if l <= level {
                let sh = level - l;
                (c.map(|x| (x as usize) << sh), 1usize << sh, 1.0)
            } else {
                let sh = l - level;
                (c.map(|x| (x as usize) >> sh), 1, 0.5f64.powi((sh as usize * d) as i32))
            };
            let ext = [span, if d > 1 { span } else { 1 }, if d > 2 { span } else { 1 }];
            for z in 0..ext[2] {
                for y in 0..ext[1] {
                    for x in 0..ext[0] {
                        let mut idx = lo[0] + x + n * (lo[1] + y);
                        if d > 2 {
                            idx += n * n * (lo[2] + z);
                        }
                        weight[idx] += w;
                        for (o, col) in out.iter_mut().zip(&self.values) {
                            o[idx] += w * col[i];
                        }
                    }
                }
            }
        }
        for o in &mut out {
            for (v, w) in o.iter_mut().zip(&weight) {
                if *w > 0.0 {
                    *v /= w;
                }
            }
        }
        out
    }

    /// Legacy ASCII VTK structured-points file of [`Snapshot::rasterize`].
    pub fn write_vtk(&self, path: &Path, level: u8) -> Result<(), SnapshotError> {
        let d = self.dim.n();
        let n = 1usize << level;
        let h = 1.0 / n as f64;
        let cells = self.rasterize(level);
        let f = std::fs::File::create(path).map_err(|e| io(path, e))?;
        let mut w = BufWriter::new(f);
        let dims = [n + 1, n + 1, if d > 2 { n + 1 } else { 2 }];
        let mut body = String::new();
        let _ = writeln!(body, "# vtk DataFile Version 3.0");
        let _ = writeln!(body, "mrrd step {} time {}", self.step, self.time);
        let _ = writeln!(body, "ASCII\nDATASET STRUCTURED_POINTS");
        let _ = writeln!(body, "DIMENSIONS {} {} {}", dims[0], dims[1], dims[2]);
        let _ = writeln!(body, "ORIGIN 0 0 0\nSPACING {h} {h} {}", if d > 2 { h } else { 1.0 });
        let _ = writeln!(body, "CELL_DATA {}", cells.first().map_or(0, Vec::len));
        for (name, col) in self.species.iter().zip(&cells) {
            let _ = writeln!(body, "SCALARS {name} double 1\nLOOKUP_TABLE default");
            for v in col {
                let _ = writeln!(body, "{v}");
            }
        }
        w.write_all(body.as_bytes()).and_then(|_| w.flush()).map_err(|e| io(path, e))
    }
}
