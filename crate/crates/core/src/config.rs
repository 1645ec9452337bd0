//! Run configuration: `key=value` text plus command-line overrides.
//!
//! Keys accept `-` or `_` as separator. Lines starting with `#` and
//! trailing `# ...` are comments. Later sources override earlier ones in the
//! order environment, file, flags.
//!
//! | key | default |
//! |---|---|
//! | `model` | required (`nagumo`, `bz`) |
//! | `dim` | 2 |
//! | `levels` | 8 |
//! | `jmin` | 5 in 2D, 3 in 3D, capped at `levels - 1` |
//! | `eps` | model default |
//! | `dt` | model default |
//! | `tend` | `50 dt` |
//! | `threads` | `MRRD_THREADS`, else the available parallelism |
//! | `mode` | `mr` (`mr`, `cartesian`) |
//! | `matrix_format` | `csr` (`csr`, `compact`) |
//! | `out` | none, no snapshots are written |
//! | `snapshot_every` | 0, only the final state |
//! | `seed` | 0 |
//! | `rtol`, `atol` | `1e-6`, `1e-8` |
//! | `adapt_every` | 1, 0 freezes the initial mesh |
//! | `diffusion_control` | `false`, `true` steps diffusion under `rtol`/`atol` |
//! | `ic_radius`, `ic_width`, `ic_center` | model default |
//! | `bz_pattern` | `spiral` (`spiral`, `target`), BZ only |
//! | `ic_noise` | 0, amplitude of a seeded perturbation of the initial state |

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{ConfigError, SolverError};
use crate::models::{self, Bz, BzPattern, IcParams, ModelKind, Nagumo, ReactionModel};
use crate::morton::Dim;
use crate::mr::MrConfig;
use crate::splitting::{perturb, MatrixFormat, Mode, Solver, SplitConfig};

pub const THREADS_ENV: &str = "MRRD_THREADS";

pub const KEYS: &[&str] = &[
    "model",
    "dim",
    "levels",
    "jmin",
    "eps",
    "dt",
    "tend",
    "threads",
    "mode",
    "matrix_format",
    "out",
    "snapshot_every",
    "seed",
    "rtol",
    "atol",
    "adapt_every",
    "diffusion_control",
    "ic_radius",
    "ic_width",
    "ic_center",
    "bz_pattern",
    "ic_noise",
];

pub const DEFAULT_LEVELS: u8 = 8;
pub const DEFAULT_STEPS: f64 = 50.0;

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub model: ModelKind,
    pub dim: Dim,
    pub levels: u8,
    pub jmin: u8,
    pub eps: f64,
    pub dt: f64,
    pub t_end: f64,
    pub threads: usize,
    pub mode: Mode,
    pub format: MatrixFormat,
    pub out: Option<PathBuf>,
    pub snapshot_every: usize,
    pub seed: u64,
    pub rtol: f64,
    pub atol: f64,
    pub adapt_every: usize,
    pub diffusion_control: bool,
    pub ic: IcParams,
    pub ic_noise: f64,
}

fn canonical(key: &str) -> String {
    key.trim().to_ascii_lowercase().replace('-', "_")
}

/// Splits `key=value` text into pairs; keys are canonicalised but not checked.
pub fn parse_pairs(text: &str) -> Result<Vec<(String, String)>, ConfigError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(ConfigError::Syntax { line: i + 1 });
        };
        let k = canonical(k);
        if k.is_empty() {
            return Err(ConfigError::Syntax { line: i + 1 });
        }
        out.push((k, v.trim().to_string()));
    }
    Ok(out)
}

fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    v.parse::<T>().map_err(|e| ConfigError::invalid(key, format!("`{v}`: {e}")))
}

fn positive(key: &str, v: f64) -> Result<f64, ConfigError> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(ConfigError::invalid(key, format!("must be positive, got {v}")))
    }
}

fn default_ic(kind: ModelKind) -> IcParams {
    match kind {
        ModelKind::Bz => Bz::default().ic,
        _ => Nagumo::default().ic,
    }
}

fn default_threads(env: Option<&str>) -> Result<usize, ConfigError> {
    match env {
        Some(v) => {
            let n: usize = num(THREADS_ENV, v)?;
            if n == 0 {
                return Err(ConfigError::invalid(THREADS_ENV, "must be at least 1"));
            }
            Ok(n)
        }
        None => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
    }
}

impl RunConfig {
    /// Resolves the file entries, then the flag overrides, on top of the
    /// defaults. `env_threads` is the value of [`THREADS_ENV`], if set.
    pub fn resolve(
        file: &[(String, String)],
        flags: &[(String, String)],
        env_threads: Option<&str>,
    ) -> Result<Self, ConfigError> {
        let mut map: BTreeMap<String, String> = BTreeMap::new();
        for (src, pairs) in [("file", file), ("flags", flags)] {
            let mut seen = Vec::new();
            for (k, v) in pairs {
                let k = canonical(k);
                if !KEYS.contains(&k.as_str()) {
                    return Err(ConfigError::UnknownKey(k));
                }
                if seen.contains(&k) {
                    return Err(ConfigError::invalid(&k, format!("given twice in {src}")));
                }
                seen.push(k.clone());
                map.insert(k, v.clone());
            }
        }
        let get = |k: &str| map.get(k).map(String::as_str);

        let model: ModelKind = match get("model") {
            Some(v) => v.parse().map_err(|e: String| ConfigError::invalid("model", e))?,
            None => return Err(ConfigError::Missing("model".into())),
        };
        let dim = match get("dim") {
            Some(v) => {
                let d: usize = num("dim", v)?;
                Dim::from_usize(d).ok_or_else(|| ConfigError::invalid("dim", format!("must be 2 or 3, got {d}")))?
            }
            None => Dim::Two,
        };
        let levels: u8 = match get("levels") {
            Some(v) => num("levels", v)?,
            None => DEFAULT_LEVELS,
        };
        if levels > dim.level_cap() {
            return Err(ConfigError::invalid(
                "levels",
                format!("{levels} exceeds the key capacity of {} levels in {}D", dim.level_cap(), dim.n()),
            ));
        }
        if levels < 2 {
            return Err(ConfigError::invalid("levels", "needs at least 2 levels"));
        }
        let jmin: u8 = match get("jmin") {
            Some(v) => num("jmin", v)?,
            None => MrConfig::default_jmin(dim).min(levels - 1),
        };
        if !(0 < jmin && jmin < levels) {
            return Err(ConfigError::invalid("jmin", format!("need 0 < jmin < levels = {levels}, got {jmin}")));
        }

        // defaults from the kinetics; STROKE is rejected here rather than at build time
        let kinetics: Box<dyn ReactionModel> =
            models::build(model, None).map_err(|e| ConfigError::invalid("model", e.to_string()))?;
        let eps = match get("eps") {
            Some(v) => positive("eps", num("eps", v)?)?,
            None => kinetics.default_eps_mr(),
        };
        let dt = match get("dt") {
            Some(v) => positive("dt", num("dt", v)?)?,
            None => kinetics.default_dt(),
        };
        let t_end = match get("tend") {
            Some(v) => {
                let t: f64 = num("tend", v)?;
                if !(t >= 0.0 && t.is_finite()) {
                    return Err(ConfigError::invalid("tend", format!("must be non-negative, got {t}")));
                }
                t
            }
            None => DEFAULT_STEPS * dt,
        };
        let threads = match get("threads") {
            Some(v) => {
                let n: usize = num("threads", v)?;
                if n == 0 {
                    return Err(ConfigError::invalid("threads", "must be at least 1"));
                }
                n
            }
            None => default_threads(env_threads)?,
        };
        let mode: Mode = match get("mode") {
            Some(v) => v.parse().map_err(|e: String| ConfigError::invalid("mode", e))?,
            None => Mode::Multiresolution,
        };
        if mode == Mode::Cartesian {
            for k in ["matrix_format", "adapt_every"] {
                if map.contains_key(k) {
                    return Err(ConfigError::Conflict(format!(
                        "`{k}` has no effect in cartesian mode, which uses the direct stencil on a fixed grid"
                    )));
                }
            }
        }
        let format: MatrixFormat = match get("matrix_format") {
            Some(v) => v.parse().map_err(|e: String| ConfigError::invalid("matrix_format", e))?,
            None => MatrixFormat::Csr,
        };
        let out = get("out").map(PathBuf::from);
        let snapshot_every: usize = match get("snapshot_every") {
            Some(v) => num("snapshot_every", v)?,
            None => 0,
        };
        let seed: u64 = match get("seed") {
            Some(v) => num("seed", v)?,
            None => 0,
        };
        let rtol = match get("rtol") {
            Some(v) => positive("rtol", num("rtol", v)?)?,
            None => 1e-6,
        };
        let atol = match get("atol") {
            Some(v) => positive("atol", num("atol", v)?)?,
            None => 1e-8,
        };
        let adapt_every: usize = match get("adapt_every") {
            Some(v) => num("adapt_every", v)?,
            None => 1,
        };
        let diffusion_control = match get("diffusion_control") {
            Some(v) => v
                .parse()
                .map_err(|_| ConfigError::invalid("diffusion_control", format!("expected true or false, got `{v}`")))?,
            None => false,
        };

        let mut ic = default_ic(model);
        if let Some(v) = get("ic_radius") {
            ic.radius = positive("ic_radius", num("ic_radius", v)?)?;
        }
        if let Some(v) = get("ic_width") {
            ic.width = positive("ic_width", num("ic_width", v)?)?;
        }
        if let Some(v) = get("ic_center") {
            let parts: Vec<&str> = v.split(',').map(str::trim).collect();
            if parts.len() != 3 {
                return Err(ConfigError::invalid("ic_center", format!("expected x,y,z, got `{v}`")));
            }
            for (c, p) in ic.center.iter_mut().zip(parts) {
                *c = num("ic_center", p)?;
            }
        }
        if let Some(v) = get("bz_pattern") {
            if model != ModelKind::Bz {
                return Err(ConfigError::Conflict(format!("`bz_pattern` given for model {model}")));
            }
            ic.bz_pattern = v.parse().map_err(|e: String| ConfigError::invalid("bz_pattern", e))?;
        }
        let ic_noise = match get("ic_noise") {
            Some(v) => {
                let a: f64 = num("ic_noise", v)?;
                if !(a >= 0.0 && a.is_finite()) {
                    return Err(ConfigError::invalid("ic_noise", format!("must be non-negative, got {a}")));
                }
                a
            }
            None => 0.0,
        };

        let cfg = RunConfig {
            model,
            dim,
            levels,
            jmin,
            eps,
            dt,
            t_end,
            threads,
            mode,
            format,
            out,
            snapshot_every,
            seed,
            rtol,
            atol,
            adapt_every,
            diffusion_control,
            ic,
            ic_noise,
        };
        cfg.split().validate()?;
        Ok(cfg)
    }

    /// Reads `path` (if any) and the environment, then applies `flags`.
    pub fn load(path: Option<&Path>, flags: &[(String, String)]) -> Result<Self, ConfigError> {
        let file = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| ConfigError::Read {
                    path: p.to_path_buf(),
                    reason: e.to_string(),
                })?;
                parse_pairs(&text)?
            }
            None => Vec::new(),
        };
        let env = std::env::var(THREADS_ENV).ok();
        Self::resolve(&file, flags, env.as_deref())
    }

    pub fn parse_str(text: &str) -> Result<Self, ConfigError> {
        Self::resolve(&parse_pairs(text)?, &[], None)
    }

    pub fn mr(&self) -> MrConfig {
        MrConfig::with_jmin(self.dim, self.levels, self.jmin, self.eps).expect("validated at parse time")
    }

    pub fn split(&self) -> SplitConfig {
        SplitConfig {
            rtol: self.rtol,
            atol: self.atol,
            mode: self.mode,
            format: self.format,
            adapt_every: if self.mode == Mode::Cartesian { 0 } else { self.adapt_every },
            diffusion_control: self.diffusion_control,
            ..SplitConfig::new(self.dt, self.t_end)
        }
    }

    pub fn build_model(&self) -> Result<Box<dyn ReactionModel>, SolverError> {
        models::build(self.model, Some(self.ic))
    }

    /// Model, initial mesh and optional seeded perturbation.
    pub fn build_solver(&self) -> Result<Solver, SolverError> {
        let mut solver = Solver::new(self.build_model()?, self.mr(), self.split())?;
        if self.ic_noise > 0.0 {
            perturb(solver.grid_mut(), self.ic_noise, self.seed);
        }
        Ok(solver)
    }

    fn pairs(&self, with_host: bool) -> Vec<(&'static str, String)> {
        let mut v = vec![
            ("model", self.model.to_string()),
            ("dim", self.dim.n().to_string()),
            ("levels", self.levels.to_string()),
            ("jmin", self.jmin.to_string()),
            ("eps", self.eps.to_string()),
            ("dt", self.dt.to_string()),
            ("tend", self.t_end.to_string()),
        ];
        if with_host {
            v.push(("threads", self.threads.to_string()));
        }
        v.push(("mode", self.mode.to_string()));
        if self.mode != Mode::Cartesian {
            v.push(("matrix_format", self.format.to_string()));
            v.push(("adapt_every", self.adapt_every.to_string()));
        }
        if with_host {
            if let Some(out) = &self.out {
                v.push(("out", out.display().to_string()));
            }
        }
        v.push(("snapshot_every", self.snapshot_every.to_string()));
        v.push(("seed", self.seed.to_string()));
        v.push(("rtol", self.rtol.to_string()));
        v.push(("atol", self.atol.to_string()));
        v.push(("diffusion_control", self.diffusion_control.to_string()));
        v.push(("ic_radius", self.ic.radius.to_string()));
        v.push(("ic_width", self.ic.width.to_string()));
        let c = self.ic.center;
        v.push(("ic_center", format!("{},{},{}", c[0], c[1], c[2])));
        if self.model == ModelKind::Bz {
            let p = match self.ic.bz_pattern {
                BzPattern::Spiral => "spiral",
                BzPattern::Target => "target",
            };
            v.push(("bz_pattern", p.to_string()));
        }
        v.push(("ic_noise", self.ic_noise.to_string()));
        v
    }

    /// Effective configuration as parseable text.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (k, v) in self.pairs(true) {
            let _ = writeln!(s, "{k}={v}");
        }
        s
    }

    /// The entries that determine the simulated state. Thread count and
    /// output path are left out so snapshots compare across hosts.
    pub fn echo(&self) -> Vec<(&'static str, String)> {
        self.pairs(false)
    }
}
