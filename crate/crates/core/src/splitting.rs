//! Strang-split time loop `R(dt/2) D(dt) R(dt/2)` over the adapted mesh.
//!
//! Each step remeshes (project, details, adapt), reassembles one diffusion
//! operator per species and advances the three substeps. Reaction runs
//! Radau IIA independently on every leaf; diffusion runs the linear ROCK4
//! step per species. Both phases are bitwise independent of the thread
//! count.
//!
//! The Cartesian mode keeps a full uniform grid at level `J` in
//! lexicographic order and applies the direct-index stencil of
//! [`CartesianLaplacian`] instead of an assembled matrix.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use nalgebra::{SMatrix, SVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::diffusion::{
    assemble_compact, assemble_csr, CartesianLaplacian, Coefficient, CompactDiffusion, CsrMatrix,
};
use crate::error::{ConfigError, DiffusionError, OdeError, RockError, SolverError};
use crate::models::ReactionModel;
use crate::morton::{CellGeometry, Dim, NodeKey};
use crate::mr::{cell_average, AdaptStats, MrConfig, TreeField};
use crate::radau::{radau5_integrate, RadauOptions};
use crate::rock4::{self, RockWork, DEFAULT_SAFETY};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Mode {
    Multiresolution,
    Cartesian,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Multiresolution => "mr",
            Mode::Cartesian => "cartesian",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "mr" | "multiresolution" => Ok(Mode::Multiresolution),
            "cartesian" => Ok(Mode::Cartesian),
            _ => Err(format!("unknown mode `{s}` (expected mr or cartesian)")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum MatrixFormat {
    Csr,
    Compact,
}

impl MatrixFormat {
    pub fn as_str(self) -> &'static str {
        match self {
            MatrixFormat::Csr => "csr",
            MatrixFormat::Compact => "compact",
        }
    }
}

impl fmt::Display for MatrixFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MatrixFormat {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "csr" => Ok(MatrixFormat::Csr),
            "compact" => Ok(MatrixFormat::Compact),
            _ => Err(format!("unknown matrix format `{s}` (expected csr or compact)")),
        }
    }
}

/// Composition of the substeps. `Lie` is `D(dt) R(dt)` and only serves as a
/// first-order reference in tests.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scheme {
    Strang,
    Lie,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SplitConfig {
    pub dt: f64,
    pub t_end: f64,
    pub rtol: f64,
    pub atol: f64,
    pub mode: Mode,
    pub format: MatrixFormat,
    /// Remesh before every `adapt_every`-th step; 0 freezes the mesh.
    pub adapt_every: usize,
    pub rock_safety: f64,
    /// Diffusion under the embedded error estimate with `rtol`/`atol`
    /// instead of one stability-sized step.
    pub diffusion_control: bool,
    pub scheme: Scheme,
}

impl SplitConfig {
    pub fn new(dt: f64, t_end: f64) -> Self {
        SplitConfig {
            dt,
            t_end,
            rtol: 1e-6,
            atol: 1e-8,
            mode: Mode::Multiresolution,
            format: MatrixFormat::Csr,
            adapt_every: 1,
            rock_safety: DEFAULT_SAFETY,
            diffusion_control: false,
            scheme: Scheme::Strang,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(ConfigError::invalid("dt", format!("must be positive, got {}", self.dt)));
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return Err(ConfigError::invalid("tend", format!("must be non-negative, got {}", self.t_end)));
        }
        if !(self.rtol > 0.0 && self.atol > 0.0) {
            return Err(ConfigError::invalid("rtol", "tolerances must be positive"));
        }
        if !(self.rock_safety > 0.0 && self.rock_safety <= 1.0) {
            return Err(ConfigError::invalid("rock_safety", "must lie in (0, 1]"));
        }
        Ok(())
    }

    /// Steps needed to reach `t_end`; the last one may be shorter.
    pub fn n_steps(&self) -> usize {
        let q = self.t_end / self.dt;
        let r = q.round();
        if (q - r).abs() <= 1e-9 * r.max(1.0) {
            r as usize
        } else {
            q.ceil() as usize
        }
    }

    pub fn radau(&self) -> RadauOptions {
        RadauOptions {
            rtol: self.rtol,
            atol: self.atol,
            ..RadauOptions::default()
        }
    }
}

/// Wall seconds per phase of one step.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct PhaseTimes {
    pub adaptation: f64,
    pub reaction: f64,
    pub diffusion: f64,
    pub total: f64,
}

impl std::ops::AddAssign for PhaseTimes {
    fn add_assign(&mut self, o: Self) {
        self.adaptation += o.adaptation;
        self.reaction += o.reaction;
        self.diffusion += o.diffusion;
        self.total += o.total;
    }
}

impl PhaseTimes {
    pub fn scaled(&self, f: f64) -> Self {
        PhaseTimes {
            adaptation: self.adaptation * f,
            reaction: self.reaction * f,
            diffusion: self.diffusion * f,
            total: self.total * f,
        }
    }

    pub fn covered(&self) -> f64 {
        self.adaptation + self.reaction + self.diffusion
    }
}

/// Stage plan used for one species in the diffusion substep.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DiffusionPlan {
    pub rho: f64,
    pub substeps: usize,
    pub stages: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepReport {
    pub step: usize,
    /// Time reached at the end of the step.
    pub time: f64,
    pub dt: f64,
    pub times: PhaseTimes,
    pub leaves: usize,
    pub cr: f64,
    pub adapt: AdaptStats,
    /// Per-leaf complexity of the closing reaction substep, in leaf order.
    pub complexity: Vec<u32>,
    /// `None` for species without diffusion.
    pub diffusion: Vec<Option<DiffusionPlan>>,
}

/// Lower bound on the complexity of one reaction substep: one accepted
/// step with a single Newton iteration.
pub fn min_complexity(m: usize) -> u32 {
    (4 + m) as u32
}

/// Full uniform grid in lexicographic order (axis 0 slowest).
#[derive(Clone, Debug, PartialEq)]
pub struct CartesianField {
    pub cfg: MrConfig,
    pub values: Vec<Vec<f64>>,
}

impl CartesianField {
    pub fn level(&self) -> u8 {
        self.cfg.levels
    }

    pub fn len(&self) -> usize {
        self.values.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn coords(&self, i: usize) -> [u32; 3] {
        let d = self.cfg.dim.n();
        let n = 1usize << self.level();
        let mut c = [0u32; 3];
        let mut r = i;
        for a in (0..d).rev() {
            c[a] = (r % n) as u32;
            r /= n;
        }
        c
    }

    pub fn key(&self, i: usize) -> NodeKey {
        NodeKey::encode(self.cfg.dim, self.level(), self.coords(i)).expect("level within capacity")
    }

    /// Equivalent tree on the same cells (Morton order).
    pub fn to_tree(&self) -> Result<TreeField, SolverError> {
        let m = self.values.len();
        let leaves = (0..self.len())
            .map(|i| (self.key(i), self.values.iter().map(|v| v[i]).collect()))
            .collect();
        Ok(TreeField::from_leaves(self.cfg, m, leaves)?)
    }
}

#[derive(Clone, Debug)]
pub enum Grid {
    Adaptive(TreeField),
    Cartesian(CartesianField),
}

impl Grid {
    pub fn n_cells(&self) -> usize {
        match self {
            Grid::Adaptive(t) => t.n_leaves(),
            Grid::Cartesian(c) => c.len(),
        }
    }

    pub fn dim(&self) -> Dim {
        match self {
            Grid::Adaptive(t) => t.dim(),
            Grid::Cartesian(c) => c.cfg.dim,
        }
    }

    pub fn compression_ratio(&self) -> f64 {
        match self {
            Grid::Adaptive(t) => t.compression_ratio(),
            Grid::Cartesian(_) => 0.0,
        }
    }

    /// Species-major cell values.
    pub fn values(&self) -> &[Vec<f64>] {
        match self {
            Grid::Adaptive(t) => t.leaf_values(),
            Grid::Cartesian(c) => &c.values,
        }
    }

    pub fn values_mut(&mut self) -> &mut [Vec<f64>] {
        match self {
            Grid::Adaptive(t) => t.leaf_values_mut(),
            Grid::Cartesian(c) => &mut c.values,
        }
    }

    pub fn key(&self, i: usize) -> NodeKey {
        match self {
            Grid::Adaptive(t) => t.leaf_keys()[i],
            Grid::Cartesian(c) => c.key(i),
        }
    }

    /// Volume-weighted total of a species.
    pub fn total(&self, species: usize) -> f64 {
        let d = self.dim().n() as i32;
        match self {
            Grid::Adaptive(t) => t
                .leaf_keys()
                .iter()
                .zip(&t.leaf_values()[species])
                .map(|(k, v)| v * 0.5f64.powi(d * i32::from(k.level())))
                .sum(),
            Grid::Cartesian(c) => c.values[species].iter().sum::<f64>() * 0.5f64.powi(d * i32::from(c.level())),
        }
    }

    /// The grid as a tree; the Cartesian grid is converted.
    pub fn to_tree(&self) -> Result<TreeField, SolverError> {
        match self {
            Grid::Adaptive(t) => Ok(t.clone()),
            Grid::Cartesian(c) => c.to_tree(),
        }
    }
}

/// Diffusion operator of one species on the current grid.
#[derive(Clone, Debug)]
pub enum Operator {
    Zero,
    Csr(CsrMatrix),
    Compact(CompactDiffusion),
    Cartesian(CartesianLaplacian),
}

impl Operator {
    pub fn matvec(&self, x: &[f64], y: &mut [f64]) -> Result<(), DiffusionError> {
        match self {
            Operator::Zero => {
                y.fill(0.0);
                Ok(())
            }
            Operator::Csr(a) => a.matvec(x, y),
            Operator::Compact(a) => a.matvec(x, y),
            Operator::Cartesian(a) => a.matvec(x, y),
        }
    }

    pub fn gershgorin(&self) -> f64 {
        match self {
            Operator::Zero => 0.0,
            Operator::Csr(a) => rock4::gershgorin_radius(a),
            Operator::Compact(a) => rock4::gershgorin_radius_compact(a),
            Operator::Cartesian(a) => a.gershgorin(),
        }
    }
}

/// One operator per species for coefficients `eps`.
pub fn assemble_operators(grid: &Grid, eps: &[f64], format: MatrixFormat) -> Result<Vec<Operator>, DiffusionError> {
    eps.iter()
        .map(|&e| {
            if e == 0.0 {
                return Ok(Operator::Zero);
            }
            match grid {
                Grid::Cartesian(c) => Ok(Operator::Cartesian(CartesianLaplacian::new(c.cfg.dim, c.level(), e))),
                Grid::Adaptive(t) => match format {
                    MatrixFormat::Csr => assemble_csr(t, &Coefficient::Constant(e)).map(Operator::Csr),
                    MatrixFormat::Compact => assemble_compact(t, &Coefficient::Constant(e)).map(Operator::Compact),
                },
            }
        })
        .collect()
}

fn react_cells<const M: usize>(
    model: &dyn ReactionModel,
    values: &mut [Vec<f64>],
    dt: f64,
    opts: &RadauOptions,
) -> Result<Vec<u32>, (usize, OdeError)> {
    let n = values[0].len();
    let mut cells: Vec<SVector<f64, M>> = (0..n).map(|i| SVector::from_fn(|s, _| values[s][i])).collect();
    let complexity = cells
        .par_iter_mut()
        .enumerate()
        .map(|(i, u)| {
            let f = |y: &SVector<f64, M>| {
                let mut out = SVector::<f64, M>::zeros();
                model.rhs(y.as_slice(), out.as_mut_slice());
                out
            };
            let j = |y: &SVector<f64, M>| {
                let mut buf = [0.0; 9];
                model.jacobian(y.as_slice(), &mut buf[..M * M]);
                SMatrix::<f64, M, M>::from_row_slice(&buf[..M * M])
            };
            let (y, stats) = radau5_integrate(f, Some(j), *u, dt, opts).map_err(|e| (i, e))?;
            *u = y;
            Ok((stats.n_rhs + M * stats.n_jac) as u32)
        })
        .collect::<Result<Vec<u32>, _>>()?;
    for (s, vals) in values.iter_mut().enumerate() {
        vals.par_iter_mut().zip(cells.par_iter()).for_each(|(v, u)| *v = u[s]);
    }
    Ok(complexity)
}

/// Integrates every cell's reaction ODE over `dt`; returns the per-cell
/// complexity `n_rhs + m n_jac` (an analytic Jacobian is charged as `m`
/// evaluations) or the first failing cell.
pub fn reaction_substep(
    model: &dyn ReactionModel,
    values: &mut [Vec<f64>],
    dt: f64,
    opts: &RadauOptions,
) -> Result<Vec<u32>, (usize, OdeError)> {
    match model.species() {
        1 => react_cells::<1>(model, values, dt, opts),
        2 => react_cells::<2>(model, values, dt, opts),
        3 => react_cells::<3>(model, values, dt, opts),
        m => panic!("reaction dispatch supports 1 to 3 species, got {m}"),
    }
}

/// Advances each species by `dt` of `v' = A_i v` with the linear ROCK4
/// step, substepping when `dt rho` exceeds the largest stability interval.
pub fn diffusion_substep(
    ops: &[Operator],
    values: &mut [Vec<f64>],
    works: &mut [RockWork],
    dt: f64,
    safety: f64,
) -> Result<Vec<Option<DiffusionPlan>>, (usize, RockError)> {
    values
        .par_iter_mut()
        .zip(ops.par_iter())
        .zip(works.par_iter_mut())
        .enumerate()
        .map(|(s, ((v, op), work))| {
            if matches!(op, Operator::Zero) {
                return Ok(None);
            }
            let rho = op.gershgorin();
            let (substeps, stages) = rock4::plan(rho, dt, safety).map_err(|e| (s, e))?;
            let h = dt / substeps as f64;
            for _ in 0..substeps {
                let mv = |x: &[f64], y: &mut [f64]| op.matvec(x, y).expect("operator matches the grid");
                rock4::rock4_linear_step(mv, v, h, stages, work).map_err(|e| (s, e))?;
            }
            Ok(Some(DiffusionPlan { rho, substeps, stages }))
        })
        .collect()
}

/// As [`diffusion_substep`] with step sizes from the embedded estimate;
/// `substeps` reports the accepted steps and `stages` the widest one.
pub fn diffusion_substep_controlled(
    ops: &[Operator],
    values: &mut [Vec<f64>],
    works: &mut [RockWork],
    dt: f64,
    safety: f64,
    atol: f64,
    rtol: f64,
) -> Result<Vec<Option<DiffusionPlan>>, (usize, RockError)> {
    values
        .par_iter_mut()
        .zip(ops.par_iter())
        .zip(works.par_iter_mut())
        .enumerate()
        .map(|(s, ((v, op), work))| {
            if matches!(op, Operator::Zero) {
                return Ok(None);
            }
            let rho = op.gershgorin();
            let mv = |x: &[f64], y: &mut [f64]| op.matvec(x, y).expect("operator matches the grid");
            let st = rock4::rock4_adaptive(mv, v, dt, rho, safety, atol, rtol, work).map_err(|e| (s, e))?;
            Ok(Some(DiffusionPlan {
                rho,
                substeps: st.accepted,
                stages: st.stages,
            }))
        })
        .collect()
}

fn wall(t: Instant) -> f64 {
    t.elapsed().as_secs_f64()
}

/// Adds `amp` times a uniform `[-1, 1)` draw to every value; the draw of a
/// cell depends only on `seed` and its key.
pub fn perturb(grid: &mut Grid, amp: f64, seed: u64) {
    if amp == 0.0 {
        return;
    }
    let keys: Vec<NodeKey> = (0..grid.n_cells()).map(|i| grid.key(i)).collect();
    for (s, vals) in grid.values_mut().iter_mut().enumerate() {
        vals.par_iter_mut().zip(keys.par_iter()).for_each(|(v, k)| {
            let mix = seed ^ k.id().wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ (s as u64).rotate_left(32);
            let mut rng = ChaCha8Rng::seed_from_u64(mix);
            *v += amp * rng.random_range(-1.0..1.0);
        });
    }
}

/// Time loop state: model, grid, clock and reusable work vectors.
#[derive(Debug)]
pub struct Solver {
    model: Box<dyn ReactionModel>,
    cfg: SplitConfig,
    grid: Grid,
    time: f64,
    step: usize,
    works: Vec<RockWork>,
    ops: Option<Vec<Operator>>,
    opts: RadauOptions,
}

impl Solver {
    /// Builds the initial grid from the model's initial condition.
    pub fn new(model: Box<dyn ReactionModel>, mr: MrConfig, cfg: SplitConfig) -> Result<Self, SolverError> {
        cfg.validate()?;
        let dim = mr.dim;
        let m = model.species();
        let ic = |x: &[f64; 3], out: &mut [f64]| model.initial_condition(dim, x, out);
        let grid = match cfg.mode {
            Mode::Multiresolution => Grid::Adaptive(TreeField::initialize(mr, m, ic)?),
            Mode::Cartesian => {
                mr.validate()?;
                let level = mr.levels;
                let n = 1usize << level;
                let len = n.pow(dim.n() as u32);
                let mut field = CartesianField {
                    cfg: mr,
                    values: vec![vec![0.0; len]; m],
                };
                let rows: Vec<Vec<f64>> = (0..len)
                    .into_par_iter()
                    .map(|i| {
                        let cell = CellGeometry::new(dim, level, field.coords(i));
                        let mut out = vec![0.0; m];
                        cell_average(dim, &cell, &ic, &mut out);
                        out
                    })
                    .collect();
                for (i, row) in rows.iter().enumerate() {
                    for (s, v) in row.iter().enumerate() {
                        field.values[s][i] = *v;
                    }
                }
                Grid::Cartesian(field)
            }
        };
        Self::with_grid(model, grid, cfg)
    }

    /// Starts from a prepared grid.
    pub fn with_grid(model: Box<dyn ReactionModel>, grid: Grid, cfg: SplitConfig) -> Result<Self, SolverError> {
        cfg.validate()?;
        let m = model.species();
        if grid.values().len() != m {
            return Err(ConfigError::Conflict(format!(
                "grid carries {} species, model {} has {m}",
                grid.values().len(),
                model.name()
            ))
            .into());
        }
        let opts = cfg.radau();
        Ok(Solver {
            model,
            cfg,
            grid,
            time: 0.0,
            step: 0,
            works: (0..m).map(|_| RockWork::new()).collect(),
            ops: None,
            opts,
        })
    }

    pub fn model(&self) -> &dyn ReactionModel {
        self.model.as_ref()
    }

    pub fn config(&self) -> &SplitConfig {
        &self.cfg
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn grid_mut(&mut self) -> &mut Grid {
        self.ops = None;
        &mut self.grid
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn steps_taken(&self) -> usize {
        self.step
    }

    pub fn finished(&self) -> bool {
        self.step >= self.cfg.n_steps()
    }

    fn fail_reaction(&self, (i, source): (usize, OdeError)) -> SolverError {
        SolverError::Reaction {
            key: self.grid.key(i),
            source,
        }
    }

    fn react(&mut self, dt: f64) -> Result<Vec<u32>, SolverError> {
        let opts = self.opts;
        let model = self.model.as_ref();
        reaction_substep(model, self.grid.values_mut(), dt, &opts).map_err(|e| self.fail_reaction(e))
    }

    fn diffuse(&mut self, dt: f64) -> Result<Vec<Option<DiffusionPlan>>, SolverError> {
        let ops = self.ops.as_ref().expect("operators assembled");
        let (safety, values) = (self.cfg.rock_safety, self.grid.values_mut());
        if self.cfg.diffusion_control {
            let (atol, rtol) = (self.cfg.atol, self.cfg.rtol);
            diffusion_substep_controlled(ops, values, &mut self.works, dt, safety, atol, rtol)
        } else {
            diffusion_substep(ops, values, &mut self.works, dt, safety)
        }
        .map_err(|(species, source)| SolverError::Diffusion { species, source })
    }

    /// One step of the configured scheme; the last step is shortened to land
    /// on `t_end`.
    pub fn step(&mut self) -> Result<StepReport, SolverError> {
        let dt = if self.step + 1 == self.cfg.n_steps() {
            self.cfg.t_end - self.time
        } else {
            self.cfg.dt
        };
        self.step_by(dt)
    }

    /// One step of size `dt`, ignoring `t_end`.
    pub fn step_by(&mut self, dt: f64) -> Result<StepReport, SolverError> {
        let t0 = Instant::now();
        let mut times = PhaseTimes::default();
        let mut adapt = AdaptStats::default();

        let ta = Instant::now();
        let remesh = self.cfg.adapt_every > 0 && self.step.is_multiple_of(self.cfg.adapt_every);
        if let Grid::Adaptive(tree) = &mut self.grid {
            if remesh {
                adapt = tree.remesh()?;
                if adapt.changed() {
                    self.ops = None;
                }
            }
        }
        times.adaptation = wall(ta);

        let td = Instant::now();
        if self.ops.is_none() {
            let ops = assemble_operators(&self.grid, self.model.diffusion(), self.cfg.format)?;
            self.ops = Some(ops);
        }
        times.diffusion = wall(td);

        let (complexity, diffusion) = match self.cfg.scheme {
            Scheme::Strang => {
                let tr = Instant::now();
                self.react(0.5 * dt)?;
                times.reaction += wall(tr);
                let td = Instant::now();
                let plans = self.diffuse(dt)?;
                times.diffusion += wall(td);
                let tr = Instant::now();
                let c = self.react(0.5 * dt)?;
                times.reaction += wall(tr);
                (c, plans)
            }
            Scheme::Lie => {
                let td = Instant::now();
                let plans = self.diffuse(dt)?;
                times.diffusion += wall(td);
                let tr = Instant::now();
                let c = self.react(dt)?;
                times.reaction += wall(tr);
                (c, plans)
            }
        };

        self.step += 1;
        self.time = if self.step == self.cfg.n_steps() {
            self.cfg.t_end
        } else {
            self.time + dt
        };
        times.total = wall(t0);
        Ok(StepReport {
            step: self.step,
            time: self.time,
            dt,
            times,
            leaves: self.grid.n_cells(),
            cr: self.grid.compression_ratio(),
            adapt,
            complexity,
            diffusion,
        })
    }

    /// Steps to `t_end`, calling `observe` after every step.
    pub fn run<F>(&mut self, mut observe: F) -> Result<Vec<StepReport>, SolverError>
    where
        F: FnMut(&Solver, &StepReport) -> Result<(), SolverError>,
    {
        let mut reports = Vec::new();
        while !self.finished() {
            let r = self.step()?;
            observe(self, &r)?;
            reports.push(r);
        }
        Ok(reports)
    }
}
