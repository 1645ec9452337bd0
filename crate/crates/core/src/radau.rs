//! Three-stage Radau IIA (order 5) for small stiff autonomous systems.
//!
//! The collocation system is solved by simplified Newton iterations in the
//! eigenbasis of `A^{-1}`: one real `M x M` system and one complex `M x M`
//! system per iteration. Step sizes follow an embedded order-3 estimate.

use std::sync::OnceLock;

use nalgebra::{Complex, ComplexField, Matrix3, SMatrix, SVector, Vector3};

use crate::error::OdeError;

const SQ6: f64 = 2.449_489_742_783_178;
const UROUND: f64 = f64::EPSILON;

/// Butcher tableau of the 3-stage Radau IIA method.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RadauTableau {
    pub a: [[f64; 3]; 3],
    pub b: [f64; 3],
    pub c: [f64; 3],
}

pub fn tableau() -> RadauTableau {
    let a = [
        [
            (88.0 - 7.0 * SQ6) / 360.0,
            (296.0 - 169.0 * SQ6) / 1800.0,
            (-2.0 + 3.0 * SQ6) / 225.0,
        ],
        [
            (296.0 + 169.0 * SQ6) / 1800.0,
            (88.0 + 7.0 * SQ6) / 360.0,
            (-2.0 - 3.0 * SQ6) / 225.0,
        ],
        [(16.0 - SQ6) / 36.0, (16.0 + SQ6) / 36.0, 1.0 / 9.0],
    ];
    RadauTableau {
        a,
        b: a[2],
        c: [(4.0 - SQ6) / 10.0, (4.0 + SQ6) / 10.0, 1.0],
    }
}

/// Stability function `R(z)` of Radau IIA order 5, the (2,3) Padé
/// approximant of `e^z`.
pub fn stability_function(z: Complex<f64>) -> Complex<f64> {
    let num = 1.0 + z * 0.4 + z * z / 20.0;
    let den = 1.0 - z * 0.6 + z * z * 0.15 - z * z * z / 60.0;
    num / den
}

/// Embedded error weights applied to the stage increments, divided by `h`.
const DD: [f64; 3] = [
    -(13.0 + 7.0 * SQ6) / 3.0,
    (-13.0 + 7.0 * SQ6) / 3.0,
    -1.0 / 3.0,
];

/// `T`, `T^{-1}` and the real block form of `T^{-1} A^{-1} T`:
/// `[[gamma, 0, 0], [0, alpha, beta], [0, -beta, alpha]]`.
#[derive(Clone, Debug)]
pub struct Transform {
    pub t: Matrix3<f64>,
    pub ti: Matrix3<f64>,
    pub gamma: f64,
    pub alpha: f64,
    pub beta: f64,
}

static TRANSFORM: OnceLock<Transform> = OnceLock::new();

fn cross<T: ComplexField + Copy>(a: [T; 3], b: [T; 3]) -> [T; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

/// Null vector of a rank-2 3x3 matrix, from the best-conditioned row pair.
fn null_vector<T: ComplexField<RealField = f64> + Copy>(rows: [[T; 3]; 3]) -> [T; 3] {
    let mut best = cross(rows[0], rows[1]);
    let norm = |v: &[T; 3]| v.iter().map(|x| x.modulus_squared()).sum::<f64>();
    for (i, j) in [(0, 2), (1, 2)] {
        let v = cross(rows[i], rows[j]);
        if norm(&v) > norm(&best) {
            best = v;
        }
    }
    best
}

pub fn transform() -> &'static Transform {
    TRANSFORM.get_or_init(|| {
        let tab = tableau();
        let a = Matrix3::from_fn(|i, j| tab.a[i][j]);
        let ainv = a.try_inverse().expect("Radau matrix is invertible");
        let eig = ainv.complex_eigenvalues();
        let mut gamma = 0.0;
        let mut lam = Complex::new(0.0, 0.0);
        for e in eig.iter() {
            if e.im.abs() < 1e-8 {
                gamma = e.re;
            } else if e.im > 0.0 {
                lam = *e;
            }
        }
        let real_rows: [[f64; 3]; 3] = std::array::from_fn(|i| {
            std::array::from_fn(|j| ainv[(i, j)] - if i == j { gamma } else { 0.0 })
        });
        let v1 = null_vector(real_rows);
        let cplx_rows: [[Complex<f64>; 3]; 3] = std::array::from_fn(|i| {
            std::array::from_fn(|j| {
                Complex::new(ainv[(i, j)], 0.0) - if i == j { lam } else { Complex::new(0.0, 0.0) }
            })
        });
        let v = null_vector(cplx_rows);
        let t = Matrix3::from_columns(&[
            Vector3::from(v1),
            Vector3::new(v[0].re, v[1].re, v[2].re),
            Vector3::new(v[0].im, v[1].im, v[2].im),
        ]);
        let ti = t.try_inverse().expect("eigenvector basis is invertible");
        let lam_block = ti * ainv * t;
        Transform {
            t,
            ti,
            gamma,
            alpha: lam_block[(1, 1)],
            beta: lam_block[(1, 2)],
        }
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RadauOptions {
    pub rtol: f64,
    pub atol: f64,
    pub max_newton: usize,
    /// Recompute the Jacobian after a step whose contraction rate exceeds this.
    pub jac_refresh: f64,
    pub safety: f64,
    pub fac_min: f64,
    pub fac_max: f64,
    /// Initial step; defaults to the whole interval.
    pub h_init: Option<f64>,
    /// Take this many equal steps without error control.
    pub fixed_steps: Option<usize>,
}

impl Default for RadauOptions {
    fn default() -> Self {
        RadauOptions {
            rtol: 1e-6,
            atol: 1e-8,
            max_newton: 7,
            jac_refresh: 0.25,
            safety: 0.9,
            fac_min: 0.2,
            fac_max: 8.0,
            h_init: None,
            fixed_steps: None,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct IntegrationStats {
    pub n_rhs: usize,
    pub n_jac: usize,
    pub n_newton_iters: usize,
    pub n_steps: usize,
    pub n_rejected: usize,
}

impl std::ops::AddAssign for IntegrationStats {
    fn add_assign(&mut self, o: Self) {
        self.n_rhs += o.n_rhs;
        self.n_jac += o.n_jac;
        self.n_newton_iters += o.n_newton_iters;
        self.n_steps += o.n_steps;
        self.n_rejected += o.n_rejected;
    }
}

/// Outcome of the step-size controller.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepDecision {
    pub accept: bool,
    pub h_next: f64,
}

/// `h * clamp(safety * err^{-1/(order+1)}, fac_min, fac_max)`; rejects when `err > 1`.
pub fn step_control(err: f64, h: f64, order: u32, opts: &RadauOptions) -> StepDecision {
    let fac = if err <= 0.0 {
        opts.fac_max
    } else {
        (opts.safety * err.powf(-1.0 / f64::from(order + 1))).clamp(opts.fac_min, opts.fac_max)
    };
    StepDecision {
        accept: err <= 1.0,
        h_next: h * fac,
    }
}

/// Partially pivoted LU of a small dense matrix.
#[derive(Clone, Debug)]
struct Lu<T: ComplexField, const M: usize> {
    lu: SMatrix<T, M, M>,
    perm: [usize; M],
}

impl<T: ComplexField<RealField = f64> + Copy, const M: usize> Lu<T, M> {
    fn new(mut a: SMatrix<T, M, M>) -> Option<Self> {
        let mut perm = [0; M];
        for k in 0..M {
            let mut p = k;
            for i in k + 1..M {
                if a[(i, k)].modulus() > a[(p, k)].modulus() {
                    p = i;
                }
            }
            let piv = a[(p, k)];
            if !piv.modulus().is_finite() || piv.modulus() <= 0.0 {
                return None;
            }
            perm[k] = p;
            if p != k {
                a.swap_rows(p, k);
            }
            for i in k + 1..M {
                let l = a[(i, k)] / piv;
                a[(i, k)] = l;
                for j in k + 1..M {
                    let ukj = a[(k, j)];
                    a[(i, j)] -= l * ukj;
                }
            }
        }
        Some(Lu { lu: a, perm })
    }

    fn solve(&self, b: &SVector<T, M>) -> SVector<T, M> {
        let mut x = *b;
        for k in 0..M {
            x.swap_rows(k, self.perm[k]);
        }
        for i in 0..M {
            for j in 0..i {
                let v = self.lu[(i, j)] * x[j];
                x[i] -= v;
            }
        }
        for i in (0..M).rev() {
            for j in i + 1..M {
                let v = self.lu[(i, j)] * x[j];
                x[i] -= v;
            }
            x[i] /= self.lu[(i, i)];
        }
        x
    }
}

/// Frozen iteration matrices for one `(J, h)` pair.
struct Matrices<const M: usize> {
    e1: Lu<f64, M>,
    e2: Lu<Complex<f64>, M>,
    fac1: f64,
    alphn: f64,
    betan: f64,
}

impl<const M: usize> Matrices<M> {
    fn new(jac: &SMatrix<f64, M, M>, h: f64) -> Option<Self> {
        let tr = transform();
        let fac1 = tr.gamma / h;
        let alphn = tr.alpha / h;
        let betan = tr.beta / h;
        let e1 = SMatrix::<f64, M, M>::from_diagonal_element(fac1) - jac;
        let shift = Complex::new(alphn, -betan);
        let e2 = SMatrix::<Complex<f64>, M, M>::from_fn(|i, j| {
            let d = if i == j { shift } else { Complex::new(0.0, 0.0) };
            d - Complex::new(jac[(i, j)], 0.0)
        });
        let e1 = Lu::new(e1)?;
        let e2 = Lu::new(e2)?;
        Some(Matrices {
            e1,
            e2,
            fac1,
            alphn,
            betan,
        })
    }
}

/// Result of one simplified Newton solve.
#[derive(Clone, Debug)]
pub struct NewtonResult<const M: usize> {
    pub z: [SVector<f64, M>; 3],
    pub iterations: usize,
    /// Scaled RMS norm of each Newton correction.
    pub increments: Vec<f64>,
    pub theta: f64,
    pub n_rhs: usize,
}

/// Why a Newton solve gave up, with the suggested step factor.
#[derive(Clone, Debug, PartialEq)]
pub enum NewtonFailure {
    Diverged { h_factor: f64, n_rhs: usize, iterations: usize },
    Singular,
    NonFinite { n_rhs: usize, iterations: usize },
}

fn rms<const M: usize>(v: &[SVector<f64, M>], sc: &SVector<f64, M>) -> f64 {
    let mut acc = 0.0;
    for x in v {
        for k in 0..M {
            let q = x[k] / sc[k];
            acc += q * q;
        }
    }
    (acc / (v.len() * M) as f64).sqrt()
}

struct NewtonState {
    faccon: f64,
    fnewt: f64,
}

fn newton<const M: usize, F>(
    f: &mut F,
    y: &SVector<f64, M>,
    mats: &Matrices<M>,
    sc: &SVector<f64, M>,
    max_iter: usize,
    state: &mut NewtonState,
) -> Result<NewtonResult<M>, NewtonFailure>
where
    F: FnMut(&SVector<f64, M>) -> SVector<f64, M>,
{
    let tr = transform();
    let mut z = [SVector::<f64, M>::zeros(); 3];
    let mut w = [SVector::<f64, M>::zeros(); 3];
    let mut increments = Vec::new();
    let mut n_rhs = 0;
    let mut theta = 0.0;
    let mut thqold = 0.0;
    let mut dynold = 0.0;
    let mut faccon = state.faccon.max(UROUND).powf(0.8);
    for newt in 0..max_iter {
        let fz: [SVector<f64, M>; 3] = std::array::from_fn(|i| f(&(y + z[i])));
        n_rhs += 3;
        if fz.iter().any(|v| v.iter().any(|x| !x.is_finite())) {
            return Err(NewtonFailure::NonFinite {
                n_rhs,
                iterations: newt + 1,
            });
        }
        let t: [SVector<f64, M>; 3] = std::array::from_fn(|i| {
            fz[0] * tr.ti[(i, 0)] + fz[1] * tr.ti[(i, 1)] + fz[2] * tr.ti[(i, 2)]
        });
        let r1 = t[0] - w[0] * mats.fac1;
        let r2 = t[1] - w[1] * mats.alphn - w[2] * mats.betan;
        let r3 = t[2] + w[1] * mats.betan - w[2] * mats.alphn;
        let dw1 = mats.e1.solve(&r1);
        let rc = SVector::<Complex<f64>, M>::from_fn(|k, _| Complex::new(r2[k], r3[k]));
        let dv = mats.e2.solve(&rc);
        let dw2 = dv.map(|c| c.re);
        let dw3 = dv.map(|c| c.im);
        let dw = [dw1, dw2, dw3];
        let dyno = rms(&dw, sc);
        increments.push(dyno);
        if !dyno.is_finite() {
            return Err(NewtonFailure::NonFinite {
                n_rhs,
                iterations: newt + 1,
            });
        }
        if newt >= 1 {
            let thq = dyno / dynold;
            theta = if newt == 1 { thq } else { (thq * thqold).sqrt() };
            thqold = thq;
            if theta < 0.99 {
                faccon = theta / (1.0 - theta);
                let left = (max_iter - 1 - newt) as i32;
                let dyth = faccon * dyno * theta.powi(left) / state.fnewt;
                if dyth >= 1.0 {
                    let qnewt = dyth.clamp(1e-4, 20.0);
                    let h_factor = 0.8 * qnewt.powf(-1.0 / (4.0 + f64::from(left)));
                    return Err(NewtonFailure::Diverged {
                        h_factor,
                        n_rhs,
                        iterations: newt + 1,
                    });
                }
            } else {
                return Err(NewtonFailure::Diverged {
                    h_factor: 0.5,
                    n_rhs,
                    iterations: newt + 1,
                });
            }
        }
        dynold = dyno.max(UROUND);
        for i in 0..3 {
            w[i] += dw[i];
        }
        for (i, zi) in z.iter_mut().enumerate() {
            *zi = w[0] * tr.t[(i, 0)] + w[1] * tr.t[(i, 1)] + w[2] * tr.t[(i, 2)];
        }
        if faccon * dyno <= state.fnewt {
            state.faccon = faccon;
            return Ok(NewtonResult {
                z,
                iterations: newt + 1,
                increments,
                theta,
                n_rhs,
            });
        }
    }
    Err(NewtonFailure::Diverged {
        h_factor: 0.5,
        n_rhs,
        iterations: max_iter,
    })
}

fn newton_tolerance(rtol: f64) -> f64 {
    (10.0 * UROUND / rtol).max(0.03f64.min(rtol.sqrt()))
}

/// Solves the stage equations of one step of size `h` from `y` with a frozen
/// Jacobian, starting from zero stage increments.
pub fn newton_solve_stages<const M: usize, F>(
    mut f: F,
    jac: &SMatrix<f64, M, M>,
    y: &SVector<f64, M>,
    h: f64,
    opts: &RadauOptions,
) -> Result<NewtonResult<M>, NewtonFailure>
where
    F: FnMut(&SVector<f64, M>) -> SVector<f64, M>,
{
    let mats = Matrices::new(jac, h).ok_or(NewtonFailure::Singular)?;
    let sc = y.map(|v| opts.atol + opts.rtol * v.abs());
    let mut state = NewtonState {
        faccon: 1.0,
        fnewt: newton_tolerance(opts.rtol),
    };
    newton(&mut f, y, &mats, &sc, opts.max_newton, &mut state)
}

/// Forward-difference Jacobian; costs `M` right-hand-side calls.
pub fn fd_jacobian<const M: usize, F>(
    f: &mut F,
    y: &SVector<f64, M>,
    fy: &SVector<f64, M>,
) -> SMatrix<f64, M, M>
where
    F: FnMut(&SVector<f64, M>) -> SVector<f64, M>,
{
    let mut jac = SMatrix::<f64, M, M>::zeros();
    for k in 0..M {
        let delt = (UROUND * 1e-5f64.max(y[k].abs())).sqrt();
        let mut yk = *y;
        yk[k] += delt;
        let col = (f(&yk) - fy) / delt;
        jac.set_column(k, &col);
    }
    jac
}

/// Integrates `y' = f(y)` over `[0, t_span]`.
///
/// `jac` supplies the analytic Jacobian; without it a finite-difference
/// Jacobian is formed (its `M` calls count towards `n_rhs`).
pub fn radau5_integrate<const M: usize, F, J>(
    mut f: F,
    mut jac: Option<J>,
    y0: SVector<f64, M>,
    t_span: f64,
    opts: &RadauOptions,
) -> Result<(SVector<f64, M>, IntegrationStats), OdeError>
where
    F: FnMut(&SVector<f64, M>) -> SVector<f64, M>,
    J: FnMut(&SVector<f64, M>) -> SMatrix<f64, M, M>,
{
    if !(t_span > 0.0 && t_span.is_finite()) {
        return Err(OdeError::Interval(t_span));
    }
    let mut stats = IntegrationStats::default();
    let mut y = y0;
    let mut t = 0.0;
    let fixed = opts.fixed_steps;
    let mut h = match fixed {
        Some(n) => t_span / n.max(1) as f64,
        None => opts.h_init.unwrap_or(t_span).min(t_span),
    };
    let mut newton_state = NewtonState {
        faccon: 1.0,
        fnewt: newton_tolerance(opts.rtol),
    };
    let mut f0: Option<SVector<f64, M>> = None;
    let mut jmat = SMatrix::<f64, M, M>::zeros();
    let mut need_jac = true;
    let mut jac_fresh = false;
    let mut first = true;
    let mut last_rejected = false;
    let mut reductions = 0usize;
    let mut steps_done = 0usize;
    let mut mats: Option<(f64, Matrices<M>)> = None;

    loop {
        let remaining = t_span - t;
        if remaining <= 1e-14 * t_span || fixed.is_some_and(|n| steps_done >= n) {
            break;
        }
        if fixed.is_none() && (h >= remaining || remaining - h < 1e-10 * t_span) {
            h = remaining;
        }
        if h <= 1e-14 * t_span.max(1e-300) {
            return Err(OdeError::StepUnderflow { t, h });
        }
        let fy = match f0 {
            Some(v) => v,
            None => {
                let v = f(&y);
                stats.n_rhs += 1;
                if v.iter().any(|x| !x.is_finite()) {
                    return Err(OdeError::NonFinite { t });
                }
                f0 = Some(v);
                v
            }
        };
        if need_jac {
            jmat = match jac.as_mut() {
                Some(j) => j(&y),
                None => {
                    stats.n_rhs += M;
                    fd_jacobian(&mut f, &y, &fy)
                }
            };
            stats.n_jac += 1;
            need_jac = false;
            jac_fresh = true;
            mats = None;
        }
        if mats.as_ref().is_none_or(|(hm, _)| *hm != h) {
            match Matrices::new(&jmat, h) {
                Some(mm) => mats = Some((h, mm)),
                None => {
                    stats.n_rejected += 1;
                    h *= 0.5;
                    reductions += 1;
                    if reductions > 40 {
                        return Err(OdeError::StiffFailure { t, reductions });
                    }
                    continue;
                }
            }
        }
        let (_, mm) = mats.as_ref().unwrap();
        let sc = y.map(|v| opts.atol + opts.rtol * v.abs());
        let res = newton(&mut f, &y, mm, &sc, opts.max_newton, &mut newton_state);
        let nr = match res {
            Ok(nr) => {
                stats.n_rhs += nr.n_rhs;
                stats.n_newton_iters += nr.iterations;
                nr
            }
            Err(fail) => {
                let factor = match fail {
                    NewtonFailure::Diverged {
                        h_factor,
                        n_rhs,
                        iterations,
                    } => {
                        stats.n_rhs += n_rhs;
                        stats.n_newton_iters += iterations;
                        h_factor
                    }
                    NewtonFailure::NonFinite { n_rhs, iterations } => {
                        stats.n_rhs += n_rhs;
                        stats.n_newton_iters += iterations;
                        0.5
                    }
                    NewtonFailure::Singular => 0.5,
                };
                stats.n_rejected += 1;
                reductions += 1;
                if reductions > 40 {
                    return Err(OdeError::StiffFailure { t, reductions });
                }
                if fixed.is_some() {
                    return Err(OdeError::StiffFailure { t, reductions });
                }
                h *= factor;
                if !jac_fresh {
                    need_jac = true;
                }
                last_rejected = true;
                continue;
            }
        };
        let y1 = y + nr.z[2];

        let accept_h = if fixed.is_some() {
            Some(h)
        } else {
            let (_, mm) = mats.as_ref().unwrap();
            let sce = SVector::<f64, M>::from_fn(|k, _| {
                opts.atol + opts.rtol * y[k].abs().max(y1[k].abs())
            });
            let f2 = (nr.z[0] * DD[0] + nr.z[1] * DD[1] + nr.z[2] * DD[2]) / h;
            let mut e = mm.e1.solve(&(fy + f2));
            let mut err = rms(&[e], &sce);
            if err >= 1.0 && (first || last_rejected) {
                let fe = f(&(y + e));
                stats.n_rhs += 1;
                e = mm.e1.solve(&(fe + f2));
                err = rms(&[e], &sce);
            }
            let err = if err.is_finite() { err.max(1e-10) } else { f64::INFINITY };
            let dec = step_control(err, h, 3, opts);
            if dec.accept {
                let mut h_next = dec.h_next;
                if last_rejected {
                    h_next = h_next.min(h);
                }
                Some(h_next)
            } else {
                stats.n_rejected += 1;
                h = if first { h * 0.1 } else { dec.h_next };
                if !jac_fresh {
                    need_jac = true;
                }
                last_rejected = true;
                reductions += 1;
                if reductions > 40 {
                    return Err(OdeError::StiffFailure { t, reductions });
                }
                None
            }
        };
        let Some(h_next) = accept_h else {
            continue;
        };
        t += h;
        y = y1;
        f0 = None;
        stats.n_steps += 1;
        steps_done += 1;
        first = false;
        last_rejected = false;
        reductions = 0;
        if nr.theta > opts.jac_refresh {
            need_jac = true;
        }
        jac_fresh = false;
        if fixed.is_none() {
            h = h_next;
        }
    }
    Ok((y, stats))
}
