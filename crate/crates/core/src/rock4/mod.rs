//! Stabilised explicit order-4 integrator.
//!
//! A step with `s` stages runs `s - 4` stages of a damped three-term
//! recurrence followed by a 4-stage explicit finish. The stability interval
//! `beta(s)` grows like `0.35 s^2`; [`stage_count`] picks the smallest `s`
//! covering `dt * rho`. [`rock4_linear_step`] evaluates the finish of a
//! linear problem as a quartic in `dt A` by Horner's rule.
//!
//! Coefficients are built on first use from the frozen design lengths in
//! `table.rs` (regenerated by `examples/rock4_design.rs`).

pub mod design;
mod table;

use std::sync::OnceLock;

use rayon::prelude::*;

pub use design::{RockCoefficients, STABILITY_SLACK};

use crate::diffusion::{CompactDiffusion, CsrMatrix};
use crate::error::RockError;

pub const S_MIN: usize = 5;
pub const S_MAX: usize = 152;
pub const DEFAULT_SAFETY: f64 = 0.9;

/// Vectors used by the finish of [`rock4_step`] (four stage slopes and a stage value).
pub const NONLINEAR_FINISH_VECTORS: usize = 5;
/// Vectors used by the Horner finish of [`rock4_linear_step`].
pub const LINEAR_FINISH_VECTORS: usize = 2;

const PAR_MIN: usize = 1 << 14;

static COEFFS: [OnceLock<RockCoefficients>; S_MAX - S_MIN + 1] =
    [const { OnceLock::new() }; S_MAX - S_MIN + 1];

fn check_s(s: usize) -> Result<(), RockError> {
    if (S_MIN..=S_MAX).contains(&s) {
        Ok(())
    } else {
        Err(RockError::StageCount(s))
    }
}

/// Stability interval length `beta(s)`.
pub fn beta(s: usize) -> Result<f64, RockError> {
    check_s(s)?;
    Ok(table::TABLE[s - S_MIN].1)
}

/// Coefficients for `s` stages.
pub fn coefficients(s: usize) -> Result<&'static RockCoefficients, RockError> {
    check_s(s)?;
    let cell = &COEFFS[s - S_MIN];
    if let Some(c) = cell.get() {
        return Ok(c);
    }
    let c = RockCoefficients::build(s, table::TABLE[s - S_MIN].0)?;
    Ok(cell.get_or_init(|| c))
}

/// `R(z)` of the `s`-stage method.
pub fn stability_polynomial(s: usize, z: f64) -> Result<f64, RockError> {
    Ok(coefficients(s)?.stability(z))
}

/// Upper bound on the spectral radius from Gershgorin discs.
pub fn gershgorin_radius(a: &CsrMatrix) -> f64 {
    a.gershgorin()
}

/// Same sums as [`gershgorin_radius`] on the expanded operator, term by term.
pub fn gershgorin_radius_compact(a: &CompactDiffusion) -> f64 {
    (0..a.n())
        .into_par_iter()
        .with_min_len(2048)
        .map(|i| {
            let (level, counts, _) = a.line(i);
            let lf = crate::diffusion::level_factor(level);
            let t = a.types;
            let coef = [t.same * lf, t.finer * lf, t.coarser * lf];
            let mut acc = t.diagonal(level, counts).abs();
            for (c, &n) in coef.iter().zip(&counts) {
                for _ in 0..n {
                    acc += c.abs();
                }
            }
            acc
        })
        .reduce(|| 0.0, f64::max)
}

/// Smallest supported `s` with `dt rho <= safety beta(s)`.
pub fn stage_count(rho: f64, dt: f64, safety: f64) -> Result<usize, RockError> {
    let need = dt * rho;
    let top = safety * table::TABLE[S_MAX - S_MIN].1;
    if !need.is_finite() {
        return Err(RockError::NonFinite);
    }
    if need > top {
        return Err(RockError::NeedsSubsteps {
            required: need,
            available: top,
            substeps: (need / top).ceil() as usize,
        });
    }
    let idx = table::TABLE.partition_point(|&(_, b)| safety * b < need);
    Ok(S_MIN + idx)
}

/// Splits `dt` into equal substeps that each fit `beta(S_MAX)`; returns
/// `(substeps, s)`.
pub fn plan(rho: f64, dt: f64, safety: f64) -> Result<(usize, usize), RockError> {
    match stage_count(rho, dt, safety) {
        Ok(s) => Ok((1, s)),
        Err(RockError::NeedsSubsteps { substeps, .. }) => {
            let s = stage_count(rho, dt / substeps as f64, safety)?;
            Ok((substeps, s))
        }
        Err(e) => Err(e),
    }
}

/// Work vectors, reused across steps.
#[derive(Clone, Debug, Default)]
pub struct RockWork {
    bufs: Vec<Vec<f64>>,
}

impl RockWork {
    pub fn new() -> Self {
        RockWork::default()
    }

    /// Number of allocated vectors.
    pub fn vectors(&self) -> usize {
        self.bufs.len()
    }

    fn take(&mut self, count: usize, n: usize) -> &mut [Vec<f64>] {
        while self.bufs.len() < count {
            self.bufs.push(Vec::new());
        }
        for b in &mut self.bufs[..count] {
            b.resize(n, 0.0);
        }
        &mut self.bufs[..count]
    }
}

/// `out = a x + b y + c z`, elementwise.
fn combine3(out: &mut [f64], a: f64, x: &[f64], b: f64, y: &[f64], c: f64, z: &[f64]) {
    let op = |(o, ((xi, yi), zi)): (&mut f64, ((&f64, &f64), &f64))| *o = a * xi + b * yi + c * zi;
    if out.len() >= PAR_MIN {
        out.par_iter_mut()
            .zip(x.par_iter().zip(y.par_iter()).zip(z.par_iter()))
            .for_each(op);
    } else {
        out.iter_mut().zip(x.iter().zip(y).zip(z)).for_each(op);
    }
}

/// Recurrence stage `g_{j+1} = g_j + nu dt f(g_j) + kappa (g_j - g_{j-1})`, in place of `gm`.
fn stage_update(gm: &mut [f64], g: &[f64], fg: &[f64], nudt: f64, kappa: f64) {
    let op = |(o, (gi, fi)): (&mut f64, (&f64, &f64))| *o = gi + nudt * fi + kappa * (gi - *o);
    if gm.len() >= PAR_MIN {
        gm.par_iter_mut().zip(g.par_iter().zip(fg.par_iter())).for_each(op);
    } else {
        gm.iter_mut().zip(g.iter().zip(fg)).for_each(op);
    }
}

fn all_finite(y: &[f64]) -> bool {
    if y.len() >= PAR_MIN {
        y.par_iter().all(|v| v.is_finite())
    } else {
        y.iter().all(|v| v.is_finite())
    }
}

/// Runs the recurrence from `y`; leaves `g_n` in `bufs[0]` and uses
/// `bufs[1]`, `bufs[2]` as scratch.
fn recurrence<F>(f: &mut F, y: &[f64], dt: f64, coef: &RockCoefficients, bufs: &mut [Vec<f64>])
where
    F: FnMut(&[f64], &mut [f64]),
{
    let rec = &coef.recurrence;
    let [g, gm, fg, ..] = bufs else {
        unreachable!("three buffers")
    };
    g.copy_from_slice(y);
    gm.fill(0.0);
    for j in 0..rec.len() {
        f(g, fg);
        stage_update(gm, g, fg, rec.nu[j] * dt, rec.kappa[j]);
        std::mem::swap(g, gm);
    }
}

/// One step of size `dt` with `s` stages, in place.
pub fn rock4_step<F>(mut f: F, y: &mut [f64], dt: f64, s: usize, work: &mut RockWork) -> Result<(), RockError>
where
    F: FnMut(&[f64], &mut [f64]),
{
    let coef = coefficients(s)?;
    let n = y.len();
    let bufs = work.take(3 + NONLINEAR_FINISH_VECTORS - 2, n);
    recurrence(&mut f, y, dt, coef, bufs);
    finish(&mut f, y, dt, coef, bufs);
    if all_finite(y) {
        Ok(())
    } else {
        Err(RockError::NonFinite)
    }
}

/// Explicit 4-stage finish from `bufs[0]`; `bufs[1]` holds the stage value
/// and `bufs[2..6]` the slopes.
fn finish<F>(f: &mut F, y: &mut [f64], dt: f64, coef: &RockCoefficients, bufs: &mut [Vec<f64>])
where
    F: FnMut(&[f64], &mut [f64]),
{
    let (head, ks) = bufs.split_at_mut(2);
    let (p, stage) = head.split_at_mut(1);
    let (p, stage) = (&p[0], &mut stage[0]);
    let a = &coef.a;
    f(p, &mut ks[0]);
    combine_scaled(stage, 1.0, p, dt * a[1][0], &ks[0]);
    f(stage, &mut ks[1]);
    combine3(stage, 1.0, p, dt * a[2][0], &ks[0], dt * a[2][1], &ks[1]);
    f(stage, &mut ks[2]);
    combine3(stage, 1.0, p, dt * a[3][0], &ks[0], dt * a[3][1], &ks[1]);
    axpy(stage, dt * a[3][2], &ks[2]);
    f(stage, &mut ks[3]);
    let b = &coef.b;
    combine3(stage, 1.0, p, dt * b[0], &ks[0], dt * b[1], &ks[1]);
    combine3(y, 1.0, stage, dt * b[2], &ks[2], dt * b[3], &ks[3]);
}

/// `out += a x`.
fn axpy(out: &mut [f64], a: f64, x: &[f64]) {
    let op = |(o, xi): (&mut f64, &f64)| *o += a * xi;
    if out.len() >= PAR_MIN {
        out.par_iter_mut().zip(x.par_iter()).for_each(op);
    } else {
        out.iter_mut().zip(x).for_each(op);
    }
}

/// As [`rock4_step`] and also returns the RMS of the embedded order-3
/// error estimate under `atol + rtol |y_{n+1}|`.
pub fn rock4_step_embedded<F>(
    mut f: F,
    y: &mut [f64],
    dt: f64,
    s: usize,
    atol: f64,
    rtol: f64,
    work: &mut RockWork,
) -> Result<f64, RockError>
where
    F: FnMut(&[f64], &mut [f64]),
{
    let coef = coefficients(s)?;
    rock4_step(&mut f, y, dt, s, work)?;
    let n = y.len();
    let bufs = work.take(3 + NONLINEAR_FINISH_VECTORS - 2 + 1, n);
    let (ks, last) = bufs.split_at_mut(6);
    f(y, &mut last[0]);
    let (b, bh) = (&coef.b, &coef.bhat);
    let w: [f64; 4] = std::array::from_fn(|i| dt * (b[i] - bh[i]));
    let w5 = -dt * bh[4];
    let sum: f64 = (0..n)
        .into_par_iter()
        .with_min_len(PAR_MIN)
        .map(|i| {
            let e = w[0] * ks[2][i] + w[1] * ks[3][i] + w[2] * ks[4][i] + w[3] * ks[5][i] + w5 * last[0][i];
            let sc = atol + rtol * y[i].abs();
            (e / sc) * (e / sc)
        })
        .sum();
    Ok((sum / n.max(1) as f64).sqrt())
}

/// Outcome of [`rock4_adaptive`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct AdaptiveStats {
    pub accepted: usize,
    pub rejected: usize,
    /// Largest stage count used.
    pub stages: usize,
}

/// Integrates `y' = f(y)` over `[0, t_span]` with step sizes chosen from the
/// embedded estimate, `rho` bounding the spectral radius. The first trial
/// step is the whole span (or the largest stable one).
#[allow(clippy::too_many_arguments)]
pub fn rock4_adaptive<F>(
    mut f: F,
    y: &mut [f64],
    t_span: f64,
    rho: f64,
    safety: f64,
    atol: f64,
    rtol: f64,
    work: &mut RockWork,
) -> Result<AdaptiveStats, RockError>
where
    F: FnMut(&[f64], &mut [f64]),
{
    let mut stats = AdaptiveStats::default();
    let h_max = if rho > 0.0 {
        safety * table::TABLE[S_MAX - S_MIN].1 / rho
    } else {
        f64::INFINITY
    };
    let mut backup = y.to_vec();
    let (mut t, mut h) = (0.0, t_span.min(h_max));
    let mut rejected_last = false;
    while t < t_span {
        let last = t + h >= t_span * (1.0 - 1e-12);
        let step = if last { t_span - t } else { h };
        if step <= 1e-14 * t_span.max(1.0) {
            return Err(RockError::StepTooSmall { t, h: step });
        }
        let s = stage_count(rho, step, safety)?;
        stats.stages = stats.stages.max(s);
        backup.copy_from_slice(y);
        let err = rock4_step_embedded(&mut f, y, step, s, atol, rtol, work)?;
        // order-3 estimate
        let fac = if err > 0.0 { 0.8 * err.powf(-0.25) } else { 5.0 };
        if err <= 1.0 {
            stats.accepted += 1;
            t = if last { t_span } else { t + step };
            let grow = if rejected_last { 1.0 } else { 5.0 };
            h = (step * fac.clamp(0.1, grow)).min(h_max);
            rejected_last = false;
        } else {
            stats.rejected += 1;
            y.copy_from_slice(&backup);
            h = step * fac.clamp(0.1, 0.9);
            rejected_last = true;
        }
    }
    Ok(stats)
}

/// One step of `y' = A y` with the finish evaluated by Horner's rule on the
/// quartic `1 + w_1 Z + ... + w_4 Z^4`, `Z = dt A`.
///
/// The finish is applied before the recurrence. Both are polynomials in `Z`
/// so the order does not matter in exact arithmetic, but roundoff from the
/// finish is amplified by `|W(z)|` on stiff modes and the recurrence damps it
/// only if it comes second.
pub fn rock4_linear_step<A>(mut matvec: A, y: &mut [f64], dt: f64, s: usize, work: &mut RockWork) -> Result<(), RockError>
where
    A: FnMut(&[f64], &mut [f64]),
{
    let coef = coefficients(s)?;
    let n = y.len();
    let bufs = work.take(3, n);
    {
        let [v, tmp, _] = &mut *bufs else {
            unreachable!("three buffers")
        };
        let w = &coef.finish_poly;
        combine_scaled(v, w[4], y, 0.0, y);
        for k in (1..=3).rev() {
            matvec(v, tmp);
            combine_scaled(v, dt, tmp, w[k], y);
        }
        matvec(v, tmp);
        combine_scaled(v, dt, tmp, 1.0, y);
        y.copy_from_slice(v);
    }
    recurrence(&mut matvec, y, dt, coef, bufs);
    y.copy_from_slice(&bufs[0]);
    if all_finite(y) {
        Ok(())
    } else {
        Err(RockError::NonFinite)
    }
}

/// `out = a x + b y`.
fn combine_scaled(out: &mut [f64], a: f64, x: &[f64], b: f64, y: &[f64]) {
    let op = |(o, (xi, yi)): (&mut f64, (&f64, &f64))| *o = a * xi + b * yi;
    if out.len() >= PAR_MIN {
        out.par_iter_mut().zip(x.par_iter().zip(y.par_iter())).for_each(op);
    } else {
        out.iter_mut().zip(x.iter().zip(y)).for_each(op);
    }
}
