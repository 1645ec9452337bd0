//! Construction of the stage coefficients for a given stage count.
//!
//! The stability polynomial is `R(z) = P_n(z) W(z)` with `n = s - 4`. `P_n`
//! is orthogonal on `[-ell, 0]` for the weight `W^2 / sqrt(1 - x^2)` and
//! `W` is the quartic with `P_n W = e^z + O(z^5)`; the two are found by a
//! damped fixed point. A 4-stage explicit finish realises `W` and fixes the
//! eight order conditions of the composed method.

use nalgebra::{SMatrix, SVector};

use crate::error::RockError;

/// Rooted trees up to order 4, as lists of subtree indices.
const TREES: [&[usize]; 8] = [&[], &[0], &[0, 0], &[1], &[0, 0, 0], &[0, 1], &[2], &[3]];
/// Tree densities; an exact B-series has coefficient `1 / GAMMA[t]`.
pub const GAMMA: [f64; 8] = [1.0, 2.0, 3.0, 6.0, 4.0, 8.0, 12.0, 24.0];

/// Coefficients of the B-series of `h f(B(a))`.
pub fn fmap(a: &[f64; 8]) -> [f64; 8] {
    std::array::from_fn(|t| TREES[t].iter().map(|&c| a[c]).product())
}

fn add_scaled(acc: &mut [f64; 8], x: &[f64; 8], c: f64) {
    for (a, v) in acc.iter_mut().zip(x) {
        *a += c * v;
    }
}

/// Three-term stage recurrence in increment form:
/// `g_{j+1} = g_j + nu_j h f(g_j) + kappa_j (g_j - g_{j-1})`.
#[derive(Clone, Debug, PartialEq)]
pub struct Recurrence {
    pub nu: Vec<f64>,
    pub kappa: Vec<f64>,
}

impl Recurrence {
    fn from_jacobi(alpha: &[f64], beta: &[f64], ell: f64) -> Self {
        let n = alpha.len();
        let (mut nu, mut kappa) = (vec![0.0; n], vec![0.0; n]);
        let mut r_prev = 1.0;
        for j in 0..n {
            let damp = if j == 0 { 0.0 } else { beta[j] / r_prev };
            let r = (1.0 - alpha[j]) - damp;
            nu[j] = 2.0 / (ell * r);
            kappa[j] = damp / r;
            r_prev = r;
        }
        Recurrence { nu, kappa }
    }

    pub fn len(&self) -> usize {
        self.nu.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nu.is_empty()
    }

    /// `P_n(z)`.
    pub fn eval(&self, z: f64) -> f64 {
        let (mut pm, mut p) = (0.0, 1.0);
        for j in 0..self.len() {
            let next = p + self.nu[j] * z * p + self.kappa[j] * (p - pm);
            pm = p;
            p = next;
        }
        p
    }

    /// Taylor coefficients of `P_n` up to `z^4`.
    fn taylor(&self) -> [f64; 5] {
        let mut pm = [0.0; 5];
        let mut p = [1.0, 0.0, 0.0, 0.0, 0.0];
        for j in 0..self.len() {
            let mut next = [0.0; 5];
            for k in 0..5 {
                next[k] = p[k] + self.kappa[j] * (p[k] - pm[k]);
                if k > 0 {
                    next[k] += self.nu[j] * p[k - 1];
                }
            }
            pm = p;
            p = next;
        }
        p
    }

    /// B-series of the recurrence output.
    fn bseries(&self) -> [f64; 8] {
        let mut km = [0.0; 8];
        let mut k = [0.0; 8];
        for j in 0..self.len() {
            let mut next = [0.0; 8];
            add_scaled(&mut next, &k, 1.0 + self.kappa[j]);
            add_scaled(&mut next, &fmap(&k), self.nu[j]);
            add_scaled(&mut next, &km, -self.kappa[j]);
            km = k;
            k = next;
        }
        k
    }
}

fn horner(c: &[f64; 5], z: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, &v| acc * z + v)
}

/// Jacobi coefficients of the monic orthogonal family for `W^2` on the
/// Chebyshev nodes of `[-1, 1]` mapped to `z = ell (x - 1) / 2`; the
/// quadrature is exact for the degrees involved.
fn stieltjes(w: &[f64; 5], ell: f64, n: usize) -> (Vec<f64>, Vec<f64>) {
    let nodes = n + 12;
    let x: Vec<f64> = (1..=nodes)
        .map(|k| ((2 * k - 1) as f64 * std::f64::consts::PI / (2 * nodes) as f64).cos())
        .collect();
    let wt: Vec<f64> = x
        .iter()
        .map(|&xi| horner(w, ell * (xi - 1.0) / 2.0).powi(2))
        .collect();
    let norm0: f64 = wt.iter().sum::<f64>().sqrt();
    let mut qm = vec![0.0; nodes];
    let mut q: Vec<f64> = vec![1.0 / norm0; nodes];
    let mut alpha = Vec::with_capacity(n);
    let mut beta = Vec::with_capacity(n);
    let mut b = 0.0f64;
    for _ in 0..n {
        let a: f64 = (0..nodes).map(|k| wt[k] * x[k] * q[k] * q[k]).sum();
        alpha.push(a);
        beta.push(b);
        let sb = b.sqrt();
        let v: Vec<f64> = (0..nodes).map(|k| (x[k] - a) * q[k] - sb * qm[k]).collect();
        let b_next: f64 = (0..nodes).map(|k| wt[k] * v[k] * v[k]).sum();
        let s = b_next.sqrt();
        qm = q;
        q = v.into_iter().map(|vk| vk / s).collect();
        b = b_next;
    }
    (alpha, beta)
}

/// Damped fixed point for `(P_n, W)` at the given interval length.
pub(crate) fn fixed_point(ell: f64, n: usize) -> Result<(Recurrence, [f64; 5]), RockError> {
    let exp = [1.0, 1.0, 0.5, 1.0 / 6.0, 1.0 / 24.0];
    let mut w = exp;
    for _ in 0..600 {
        let (alpha, beta) = stieltjes(&w, ell, n);
        let rec = Recurrence::from_jacobi(&alpha, &beta, ell);
        let p = rec.taylor();
        let mut next = [0.0; 5];
        for i in 0..5 {
            let conv: f64 = (0..i).map(|k| p[i - k] * next[k]).sum();
            next[i] = (exp[i] - conv) / p[0];
        }
        let diff = (0..5).map(|i| (next[i] - w[i]).abs()).fold(0.0, f64::max);
        let size = next.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        if !diff.is_finite() {
            break;
        }
        if diff <= 1e-14 * size {
            let (alpha, beta) = stieltjes(&next, ell, n);
            return Ok((Recurrence::from_jacobi(&alpha, &beta, ell), next));
        }
        for i in 0..5 {
            w[i] = 0.5 * w[i] + 0.5 * next[i];
        }
    }
    Err(RockError::StageCount(n + 4))
}

/// Finish tableau `(a21, a31, a32, a41, a42, a43, b1, b2, b3, b4)`.
fn finish_residual(v: &SVector<f64, 10>, p: &[f64; 8]) -> SVector<f64, 8> {
    let a = [[0.0; 3], [v[0], 0.0, 0.0], [v[1], v[2], 0.0], [v[3], v[4], v[5]]];
    let mut gp: Vec<[f64; 8]> = Vec::with_capacity(4);
    for row in a.iter() {
        let mut g = *p;
        for (j, k) in gp.iter().enumerate() {
            add_scaled(&mut g, k, row[j]);
        }
        gp.push(fmap(&g));
    }
    let mut y = *p;
    for i in 0..4 {
        add_scaled(&mut y, &gp[i], v[6 + i]);
    }
    SVector::from_fn(|t, _| y[t] - 1.0 / GAMMA[t])
}

fn finish_jacobian(v: &SVector<f64, 10>, p: &[f64; 8]) -> SMatrix<f64, 8, 10> {
    let mut jac = SMatrix::<f64, 8, 10>::zeros();
    for k in 0..10 {
        let h = 1e-7 * v[k].abs().max(1.0);
        let mut vp = v.clone_owned();
        let mut vm = v.clone_owned();
        vp[k] += h;
        vm[k] -= h;
        let col = (finish_residual(&vp, p) - finish_residual(&vm, p)) / (2.0 * h);
        jac.set_column(k, &col);
    }
    jac
}

/// Levenberg-Marquardt on the eight order conditions, then minimum-norm
/// Gauss-Newton polishing.
fn solve_finish(p: &[f64; 8]) -> Result<SVector<f64, 10>, RockError> {
    let x0 = SVector::<f64, 10>::from_column_slice(&[
        0.5,
        0.0,
        0.5,
        0.0,
        0.0,
        1.0,
        1.0 / 6.0,
        1.0 / 3.0,
        1.0 / 3.0,
        1.0 / 6.0,
    ]);
    let mut v = x0;
    let mut lambda = 1e-3;
    let mut cost = finish_residual(&v, p).norm_squared();
    for _ in 0..2000 {
        if cost < 1e-30 {
            break;
        }
        let r = finish_residual(&v, p);
        let jac = finish_jacobian(&v, p);
        let jtj = jac.transpose() * jac;
        let g = jac.transpose() * r;
        let mut improved = false;
        for _ in 0..30 {
            let mut m = jtj;
            for k in 0..10 {
                m[(k, k)] += lambda * (1.0 + jtj[(k, k)]);
            }
            let Some(step) = m.lu().solve(&g) else {
                lambda *= 10.0;
                continue;
            };
            let cand = v - step;
            let c = finish_residual(&cand, p).norm_squared();
            if c.is_finite() && c < cost {
                v = cand;
                cost = c;
                lambda = (lambda * 0.3).max(1e-12);
                improved = true;
                break;
            }
            lambda *= 10.0;
        }
        if !improved {
            break;
        }
    }
    for _ in 0..5 {
        let r = finish_residual(&v, p);
        let jac = finish_jacobian(&v, p);
        let Some(y) = (jac * jac.transpose()).lu().solve(&r) else {
            break;
        };
        v -= jac.transpose() * y;
    }
    let r = finish_residual(&v, p);
    if r.amax() < 1e-13 && v.iter().all(|x| x.is_finite()) {
        Ok(v)
    } else {
        Err(RockError::NonFinite)
    }
}

/// Weight of the extra stage `h f(y_{n+1})` in the embedded order-3 formula.
pub(crate) const BHAT_FSAL: f64 = 0.25;

/// Complete coefficient set for one stage count.
#[derive(Clone, Debug, PartialEq)]
pub struct RockCoefficients {
    pub s: usize,
    /// Stability interval length: `|R| <= 1` on `[-ell, 0]`.
    pub ell: f64,
    pub recurrence: Recurrence,
    /// Finish `a_{ij}` (strictly lower triangular) and `b_i`.
    pub a: [[f64; 4]; 4],
    pub b: [f64; 4],
    /// Embedded order-3 weights; entry 4 multiplies `h f(y_{n+1})`.
    pub bhat: [f64; 5],
    /// Monomial coefficients of the finish on `y' = Ay`.
    pub finish_poly: [f64; 5],
}

impl RockCoefficients {
    pub fn build(s: usize, ell: f64) -> Result<Self, RockError> {
        if s < 5 {
            return Err(RockError::StageCount(s));
        }
        let (recurrence, w) = fixed_point(ell, s - 4)?;
        let p = recurrence.bseries();
        let v = solve_finish(&p)?;
        let mut a = [[0.0; 4]; 4];
        a[1][0] = v[0];
        a[2][0] = v[1];
        a[2][1] = v[2];
        a[3][0] = v[3];
        a[3][1] = v[4];
        a[3][2] = v[5];
        let b = [v[6], v[7], v[8], v[9]];
        let c: [f64; 4] = std::array::from_fn(|i| a[i].iter().sum());
        let ac: [f64; 4] = std::array::from_fn(|i| (0..4).map(|j| a[i][j] * c[j]).sum());
        let aac: [f64; 4] = std::array::from_fn(|i| (0..4).map(|j| a[i][j] * ac[j]).sum());
        let dot = |x: &[f64; 4]| (0..4).map(|i| b[i] * x[i]).sum::<f64>();
        let finish_poly = [1.0, b.iter().sum(), dot(&c), dot(&ac), dot(&aac)];
        debug_assert!((0..5).all(|k| (finish_poly[k] - w[k]).abs() < 1e-8 * w[k].abs().max(1.0)));
        let bhat = embedded_weights(&p, &a, &b)?;
        Ok(RockCoefficients {
            s,
            ell,
            recurrence,
            a,
            b,
            bhat,
            finish_poly,
        })
    }

    pub fn stages(&self) -> usize {
        self.s
    }

    /// `R(z)` evaluated as recurrence times finish polynomial.
    pub fn stability(&self, z: f64) -> f64 {
        self.recurrence.eval(z) * horner(&self.finish_poly, z)
    }
}

/// Order-3 weights `bhat_1..4` with `bhat_5` fixed, from the four conditions
/// on trees of order at most 3.
fn embedded_weights(p: &[f64; 8], a: &[[f64; 4]; 4], b: &[f64; 4]) -> Result<[f64; 5], RockError> {
    let mut gp: Vec<[f64; 8]> = Vec::with_capacity(4);
    for row in a.iter() {
        let mut g = *p;
        for (j, k) in gp.iter().enumerate() {
            add_scaled(&mut g, k, row[j]);
        }
        gp.push(fmap(&g));
    }
    let mut y = *p;
    for i in 0..4 {
        add_scaled(&mut y, &gp[i], b[i]);
    }
    let fsal = fmap(&y);
    let m = SMatrix::<f64, 4, 4>::from_fn(|t, i| gp[i][t]);
    let rhs = SVector::<f64, 4>::from_fn(|t, _| 1.0 / GAMMA[t] - p[t] - BHAT_FSAL * fsal[t]);
    let x = m.lu().solve(&rhs).ok_or(RockError::NonFinite)?;
    Ok([x[0], x[1], x[2], x[3], BHAT_FSAL])
}

/// Rounding allowance when testing `|R| <= 1`.
pub const STABILITY_SLACK: f64 = 1e-12;

/// Length of the stability interval actually attained: the first exit of
/// `|R|` from `[0, 1]` when scanning `[-2 ell, 0]` leftwards on `n` points.
pub fn stable_length(coef: &RockCoefficients, n: usize) -> f64 {
    let span = 2.0 * coef.ell;
    let at = |k: usize| -span * k as f64 / n as f64;
    let r = |z: f64| coef.stability(z).abs();
    let mut last = 0.0;
    let (mut r0, mut r1) = (1.0, r(at(1)));
    for k in 1..=n {
        let r2 = if k < n { r(at(k + 1)) } else { 0.0 };
        if r1 > 1.0 + STABILITY_SLACK {
            return last;
        }
        // narrow bumps touching 1 fall between samples
        if r1 >= r0 && r1 >= r2 && r1 > 0.9 {
            let (z, peak) = refine_max(&r, at(k + 1), at(k - 1));
            if peak > 1.0 + STABILITY_SLACK {
                return last.max(-z).min(-at(k - 1));
            }
        }
        last = -at(k);
        (r0, r1) = (r1, r2);
    }
    span
}

/// Bound on `|R|` away from the origin, on `[-ell, -1]`.
pub const DAMPING: f64 = 0.95;

/// Largest `|R|` on `[-ell, -1]`, sampled on `n` points with every local
/// maximum refined.
pub fn damping(coef: &RockCoefficients, ell: f64, n: usize) -> f64 {
    if ell <= 1.0 {
        return 0.0;
    }
    let at = |k: usize| -1.0 - (ell - 1.0) * k as f64 / n as f64;
    let r = |z: f64| coef.stability(z).abs();
    let vals: Vec<f64> = (0..=n).map(|k| r(at(k))).collect();
    let mut worst = vals[0].max(vals[n]);
    for k in 1..n {
        if vals[k] >= vals[k - 1] && vals[k] >= vals[k + 1] {
            worst = worst.max(refine_max(&r, at(k + 1), at(k - 1)).1);
        }
    }
    worst
}

/// Golden-section maximiser of `r` on `[a, b]`.
fn refine_max(r: &impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> (f64, f64) {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = b - g * (b - a);
    let mut x2 = a + g * (b - a);
    let (mut f1, mut f2) = (r(x1), r(x2));
    for _ in 0..80 {
        if f1 > f2 {
            b = x2;
            (x2, f2) = (x1, f1);
            x1 = b - g * (b - a);
            f1 = r(x1);
        } else {
            a = x1;
            (x1, f1) = (x2, f2);
            x2 = a + g * (b - a);
            f2 = r(x2);
        }
    }
    if f1 > f2 { (x1, f1) } else { (x2, f2) }
}

/// Largest `|R(z)|` on `n` equispaced points of `[-ell, 0]`.
pub fn max_abs_on(coef: &RockCoefficients, ell: f64, n: usize) -> f64 {
    (0..=n)
        .map(|k| coef.stability(-ell * k as f64 / n as f64).abs())
        .fold(0.0, f64::max)
}

/// Searches the largest design length `ell = fac s^2` whose construction
/// succeeds, stays stable on all of `[-ell, 0]` and keeps `|R| <= DAMPING`
/// on `[-ell, -1]`; returns the design length and the attained stable
/// length.
pub fn search_ell(s: usize, samples: usize) -> Option<(f64, f64)> {
    let s2 = (s * s) as f64;
    let ok = |fac: f64| {
        let ell = fac * s2;
        RockCoefficients::build(s, ell)
            .ok()
            .filter(|c| damping(c, ell, samples / 4) <= DAMPING)
            .map(|c| stable_length(&c, samples))
            .filter(|&b| b >= ell * (1.0 - 1e-9))
    };
    let mut hi = 0.45;
    let mut lo = hi - 0.01;
    while ok(lo).is_none() {
        hi = lo;
        lo -= 0.01;
        if lo < 0.02 {
            return None;
        }
    }
    for _ in 0..20 {
        let mid = 0.5 * (lo + hi);
        if ok(mid).is_some() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    ok(lo).map(|b| (lo * s2, b))
}
