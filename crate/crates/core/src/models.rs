//! Benchmark reaction models on `[0, 1]^d`.
//!
//! Initial conditions are stand-ins: a smoothed spherical front for NAGUMO
//! and a broken wave segment (spiral) or a disk (target) on top of the
//! reaction equilibrium for BZ.

use std::fmt;
use std::str::FromStr;

use crate::error::SolverError;
use crate::morton::Dim;

/// Uniform interface of a reaction model `u' = f(u)` with per-species
/// diffusion coefficients.
pub trait ReactionModel: Send + Sync + fmt::Debug {
    fn name(&self) -> &'static str;
    fn species(&self) -> usize;
    fn species_names(&self) -> Vec<String>;
    fn rhs(&self, u: &[f64], f: &mut [f64]);
    /// Row-major `m x m` Jacobian.
    fn jacobian(&self, u: &[f64], jac: &mut [f64]);
    fn diffusion(&self) -> &[f64];
    fn default_dt(&self) -> f64;
    fn default_eps_mr(&self) -> f64;
    /// Initial value at point `x`; unused coordinates are zero.
    fn initial_condition(&self, dim: Dim, x: &[f64; 3], out: &mut [f64]);
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ModelKind {
    Nagumo,
    Bz,
    Stroke,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Nagumo => "nagumo",
            ModelKind::Bz => "bz",
            ModelKind::Stroke => "stroke",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "nagumo" => Ok(ModelKind::Nagumo),
            "bz" => Ok(ModelKind::Bz),
            "stroke" => Ok(ModelKind::Stroke),
            other => Err(format!("unknown model `{other}` (nagumo, bz, stroke)")),
        }
    }
}

/// Parameters of the built-in initial conditions.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IcParams {
    pub center: [f64; 3],
    pub radius: f64,
    /// Transition width of the smoothed interfaces.
    pub width: f64,
    pub bz_pattern: BzPattern,
}

impl Default for IcParams {
    fn default() -> Self {
        IcParams {
            center: [0.0; 3],
            radius: 0.25,
            width: 0.01,
            bz_pattern: BzPattern::Spiral,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BzPattern {
    Spiral,
    Target,
}

impl FromStr for BzPattern {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "spiral" => Ok(BzPattern::Spiral),
            "target" => Ok(BzPattern::Target),
            other => Err(format!("unknown BZ pattern `{other}` (spiral, target)")),
        }
    }
}

fn smooth_step(s: f64, width: f64) -> f64 {
    0.5 * (1.0 - (s / width).tanh())
}

fn dist(dim: Dim, x: &[f64; 3], c: &[f64; 3]) -> f64 {
    (0..dim.n()).map(|a| (x[a] - c[a]).powi(2)).sum::<f64>().sqrt()
}

/// `f(u) = k u^2 (1 - u)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Nagumo {
    pub k: f64,
    pub eps: [f64; 1],
    pub ic: IcParams,
}

impl Default for Nagumo {
    fn default() -> Self {
        Nagumo {
            k: 10.0,
            eps: [0.1],
            ic: IcParams::default(),
        }
    }
}

impl Nagumo {
    pub fn rhs_jac(&self, u: f64) -> (f64, f64) {
        (
            self.k * u * u * (1.0 - u),
            self.k * (2.0 * u - 3.0 * u * u),
        )
    }
}

impl ReactionModel for Nagumo {
    fn name(&self) -> &'static str {
        "NAGUMO"
    }
    fn species(&self) -> usize {
        1
    }
    fn species_names(&self) -> Vec<String> {
        vec!["u".into()]
    }
    fn rhs(&self, u: &[f64], f: &mut [f64]) {
        f[0] = self.rhs_jac(u[0]).0;
    }
    fn jacobian(&self, u: &[f64], jac: &mut [f64]) {
        jac[0] = self.rhs_jac(u[0]).1;
    }
    fn diffusion(&self) -> &[f64] {
        &self.eps
    }
    fn default_dt(&self) -> f64 {
        1e-2
    }
    fn default_eps_mr(&self) -> f64 {
        1e-2
    }
    fn initial_condition(&self, dim: Dim, x: &[f64; 3], out: &mut [f64]) {
        // signed distance through r^2, smooth at the centre
        let (r, rad) = (dist(dim, x, &self.ic.center), self.ic.radius);
        out[0] = smooth_step((r * r - rad * rad) / (2.0 * rad), self.ic.width);
    }
}

/// Three-species Oregonator kinetics.
#[derive(Clone, Debug, PartialEq)]
pub struct Bz {
    pub eps: [f64; 3],
    pub ic: IcParams,
}

impl Default for Bz {
    fn default() -> Self {
        Bz {
            eps: [2.5e-3, 2.5e-3, 1.5e-3],
            ic: IcParams {
                center: [0.5, 0.5, 0.5],
                radius: 0.05,
                width: 0.005,
                bz_pattern: BzPattern::Spiral,
            },
        }
    }
}

impl Bz {
    pub fn rhs_jac(u: [f64; 3]) -> ([f64; 3], [[f64; 3]; 3]) {
        let [a, b, c] = u;
        let f = [
            1e5 * (-0.02 * a - b * a + 1.6 * c),
            1e2 * (b - b * b - a * (b - 0.02)),
            b - c,
        ];
        let j = [
            [1e5 * (-0.02 - b), -1e5 * a, 1.6e5],
            [-1e2 * (b - 0.02), 1e2 * (1.0 - 2.0 * b - a), 0.0],
            [0.0, 1.0, -1.0],
        ];
        (f, j)
    }

    /// The homogeneous steady state, from Newton on the reduced scalar equation.
    pub fn equilibrium() -> [f64; 3] {
        // u3 = u2, u1 = 1.6 u2 / (0.02 + u2), then g(u2) = 0
        let g = |b: f64| {
            let a = 1.6 * b / (0.02 + b);
            b - b * b - a * (b - 0.02)
        };
        let mut b = 0.07;
        for _ in 0..60 {
            let h = 1e-7;
            let d = (g(b + h) - g(b - h)) / (2.0 * h);
            let step = g(b) / d;
            b -= step;
            if step.abs() < 1e-16 {
                break;
            }
        }
        [1.6 * b / (0.02 + b), b, b]
    }

    /// `u1` slaved to `(u2, u3)` by `f1 = 0`.
    fn slaved(b: f64, c: f64) -> f64 {
        1.6 * c / (0.02 + b)
    }
}

impl ReactionModel for Bz {
    fn name(&self) -> &'static str {
        "BZ"
    }
    fn species(&self) -> usize {
        3
    }
    fn species_names(&self) -> Vec<String> {
        vec!["u1".into(), "u2".into(), "u3".into()]
    }
    fn rhs(&self, u: &[f64], f: &mut [f64]) {
        let (r, _) = Bz::rhs_jac([u[0], u[1], u[2]]);
        f[..3].copy_from_slice(&r);
    }
    fn jacobian(&self, u: &[f64], jac: &mut [f64]) {
        let (_, j) = Bz::rhs_jac([u[0], u[1], u[2]]);
        for (row, out) in j.iter().zip(jac.chunks_mut(3)) {
            out.copy_from_slice(row);
        }
    }
    fn diffusion(&self) -> &[f64] {
        &self.eps
    }
    fn default_dt(&self) -> f64 {
        1e-3
    }
    fn default_eps_mr(&self) -> f64 {
        1e-2
    }
    fn initial_condition(&self, dim: Dim, x: &[f64; 3], out: &mut [f64]) {
        let eq = Bz::equilibrium();
        let w = self.ic.width;
        let c = self.ic.center;
        let (b, cc) = match self.ic.bz_pattern {
            BzPattern::Target => {
                let r = dist(dim, x, &c);
                let s = smooth_step(r - self.ic.radius, w);
                (eq[1] + (0.8 - eq[1]) * s, eq[2])
            }
            BzPattern::Spiral => {
                // excited strip ending at the centre, refractory band below it
                let half = self.ic.radius;
                let along = smooth_step(x[0] - c[0], w);
                let excited = along
                    * smooth_step(x[1] - (c[1] + half), w)
                    * (1.0 - smooth_step(x[1] - c[1], w));
                let refractory = along
                    * smooth_step(x[1] - c[1], w)
                    * (1.0 - smooth_step(x[1] - (c[1] - 2.0 * half), w));
                (
                    eq[1] + (0.8 - eq[1]) * excited,
                    eq[2] + (0.4 - eq[2]) * refractory,
                )
            }
        };
        out[0] = if b == eq[1] && cc == eq[2] {
            eq[0]
        } else {
            Bz::slaved(b, cc)
        };
        out[1] = b;
        out[2] = cc;
    }
}

/// Default run setup of a model.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Setup {
    pub dt: f64,
    pub eps_mr: f64,
    pub levels: u8,
}

pub fn default_setup(model: &dyn ReactionModel, dim: Dim, levels: u8) -> Setup {
    let _ = dim;
    Setup {
        dt: model.default_dt(),
        eps_mr: model.default_eps_mr(),
        levels,
    }
}

/// Builds a model; STROKE is a reserved slot without kinetics.
pub fn build(kind: ModelKind, ic: Option<IcParams>) -> Result<Box<dyn ReactionModel>, SolverError> {
    match kind {
        ModelKind::Nagumo => {
            let mut m = Nagumo::default();
            if let Some(ic) = ic {
                m.ic = ic;
            }
            Ok(Box::new(m))
        }
        ModelKind::Bz => {
            let mut m = Bz::default();
            if let Some(ic) = ic {
                m.ic = ic;
            }
            Ok(Box::new(m))
        }
        ModelKind::Stroke => Err(SolverError::Unsupported(
            "the 21-species STROKE kinetics are not implemented".into(),
        )),
    }
}

/// Largest relative deviation of the analytic Jacobian from central
/// differences at `u`.
pub fn jacobian_fd_error(model: &dyn ReactionModel, u: &[f64]) -> f64 {
    let m = model.species();
    let mut jac = vec![0.0; m * m];
    model.jacobian(u, &mut jac);
    let mut fp = vec![0.0; m];
    let mut fm = vec![0.0; m];
    let scale = jac.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(1e-300);
    let mut worst = 0.0f64;
    for k in 0..m {
        let h = f64::EPSILON.cbrt() * u[k].abs().max(1.0);
        let mut up = u.to_vec();
        let mut um = u.to_vec();
        up[k] += h;
        um[k] -= h;
        model.rhs(&up, &mut fp);
        model.rhs(&um, &mut fm);
        for i in 0..m {
            let fd = (fp[i] - fm[i]) / (up[k] - um[k]);
            worst = worst.max((fd - jac[i * m + k]).abs() / scale);
        }
    }
    worst
}
