//! Acceptance criteria 1 to 12, one PASS/FAIL line each.
//!
//! Runs without the libtest harness so the criteria execute one after the
//! other (the timing criteria must not share the machine with each other) and
//! the verdict lines are never captured.

use std::time::Instant;

use mrrd::config::RunConfig;
use mrrd::diffusion::{assemble_compact, assemble_csr, Coefficient, CsrMatrix};
use mrrd::mr::{random_graded, MrConfig, TreeField};
use mrrd::radau::{radau5_integrate, stability_function, RadauOptions};
use mrrd::report::{efficiency, Histogram, RunTimes};
use mrrd::rock4::{
    beta, gershgorin_radius, rock4_linear_step, rock4_step, stability_polynomial, stage_count, RockWork,
    S_MAX, S_MIN,
};
use mrrd::snapshot::Snapshot;
use mrrd::splitting::{Mode, StepReport};
use mrrd::{Dim, NodeKey};
use nalgebra::{Complex, Matrix1, Vector1};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Verdict {
    pass: bool,
    detail: String,
    /// Reported only, never fails the target.
    soft: bool,
}

fn hard(pass: bool, detail: String) -> Verdict {
    Verdict {
        pass,
        detail,
        soft: false,
    }
}

fn interior(dim: Dim, key: NodeKey) -> bool {
    let n = 1u32 << key.level();
    key.coords(dim)[..dim.n()].iter().all(|&k| k >= 1 && k + 1 < n)
}

fn mono_avg(p: i32, a: f64, b: f64) -> f64 {
    (b.powi(p + 1) - a.powi(p + 1)) / ((p + 1) as f64 * (b - a))
}

fn fmt_list(v: &[f64]) -> String {
    v.iter().map(|e| format!("{e:.3e}")).collect::<Vec<_>>().join(", ")
}

fn slope_fit(levels: &[f64], errs: &[f64]) -> f64 {
    let y: Vec<f64> = errs.iter().map(|e| -e.log2()).collect();
    let n = levels.len() as f64;
    let mx = levels.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = levels.iter().zip(&y).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = levels.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

fn c1_projection_of_prediction() -> Verdict {
    let mut worst = 0.0f64;
    let mut nodes = 0usize;
    for t in 0..1000u64 {
        let (dim, levels) = if t % 2 == 0 { (Dim::Two, 7) } else { (Dim::Three, 5) };
        let cfg = MrConfig::with_jmin(dim, levels, 2, 1e-3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + t);
        let tree = random_graded(cfg, 1, &mut rng, 4, 0.25).unwrap();
        for &p in tree.internal_keys() {
            let kids = tree.predict(p).unwrap();
            let mean = kids.iter().sum::<f64>() / kids.len() as f64;
            worst = worst.max((mean - tree.values_of(p).unwrap()[0]).abs());
            nodes += 1;
        }
    }
    hard(worst <= 1e-13, format!("max |P(Phat u) - u| = {worst:.3e} over {nodes} nodes of 1000 trees"))
}

fn quadratic_avg(dim: Dim, key: NodeKey) -> f64 {
    let g = key.decode(dim);
    let o = g.origin();
    let m = |p: i32, a: usize| mono_avg(p, o[a], o[a] + g.width);
    // every monomial of total degree <= 2
    let mut u = 1.0 + 2.0 * m(1, 0) - m(1, 1) + 3.0 * m(2, 0) + m(1, 0) * m(1, 1) - 2.0 * m(2, 1);
    if dim == Dim::Three {
        u += 0.5 * m(1, 2) - m(2, 2) + m(1, 0) * m(1, 2) - 0.7 * m(1, 1) * m(1, 2);
    }
    u
}

fn sin_avg(a: f64, b: f64) -> f64 {
    let w = 2.0 * std::f64::consts::PI;
    ((w * a).cos() - (w * b).cos()) / (w * (b - a))
}

fn c2_polynomial_exactness() -> Verdict {
    let mut worst = 0.0f64;
    for (dim, levels) in [(Dim::Two, 7u8), (Dim::Three, 5)] {
        for seed in 0..10 {
            let cfg = MrConfig::with_jmin(dim, levels, 2, 1e-3).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut tree = random_graded(cfg, 1, &mut rng, 4, 0.3).unwrap();
            let vals: Vec<f64> = tree.leaf_keys().iter().map(|&k| quadratic_avg(dim, k)).collect();
            let scale = vals.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            tree.leaf_values_mut()[0].copy_from_slice(&vals);
            tree.project_up().unwrap();
            let det = tree.compute_details().unwrap();
            for (r, &p) in det.keys().iter().enumerate() {
                if interior(dim, p) {
                    worst = worst.max(det.norm(r, 0) / scale);
                }
            }
        }
    }
    let levels = [5u8, 6, 7, 8, 9];
    let errs: Vec<f64> = levels
        .iter()
        .map(|&j| {
            let cfg = MrConfig::with_jmin(Dim::Two, j, 2, 1e-3).unwrap();
            let tree = TreeField::uniform(cfg, 1, j, |g, o| {
                let lo = g.origin();
                o[0] = sin_avg(lo[0], lo[0] + g.width) * sin_avg(lo[1], lo[1] + g.width);
            })
            .unwrap();
            let mut e = 0.0f64;
            for &p in tree.internal_keys() {
                if p.level() + 1 != j || !interior(Dim::Two, p) {
                    continue;
                }
                let pred = tree.predict(p).unwrap();
                for (c, v) in p.children(Dim::Two).unwrap().iter().zip(&pred) {
                    e = e.max((tree.values_of(*c).unwrap()[0] - v).abs());
                }
            }
            e
        })
        .collect();
    let lv: Vec<f64> = levels.iter().map(|&l| f64::from(l)).collect();
    let slope = slope_fit(&lv, &errs);
    hard(
        worst <= 1e-12 && (slope - 3.0).abs() <= 0.2,
        format!("max relative quadratic detail {worst:.3e}; sin-product prediction slope {slope:.3} (errors {})", fmt_list(&errs)),
    )
}

fn c3_radau() -> Verdict {
    let err = |n: usize| {
        let opts = RadauOptions {
            fixed_steps: Some(n),
            rtol: 1e-13,
            atol: 1e-15,
            ..RadauOptions::default()
        };
        let (y, _) = radau5_integrate(
            |y: &Vector1<f64>| -y,
            Some(|_: &Vector1<f64>| Matrix1::new(-1.0)),
            Vector1::new(1.0),
            1.0,
            &opts,
        )
        .unwrap();
        (y[0] - (-1f64).exp()).abs()
    };
    let slope = (err(4) / err(8)).log2();
    let r_inf = stability_function(Complex::new(-1e8, 0.0)).norm();
    let mut worst = 0.0f64;
    for k in 0..=4000 {
        let y = 10f64.powf(-4.0 + 12.0 * k as f64 / 4000.0);
        for s in [-1.0, 1.0] {
            worst = worst.max(stability_function(Complex::new(0.0, s * y)).norm());
        }
    }
    worst = worst.max(stability_function(Complex::new(0.0, 0.0)).norm());
    hard(
        (slope - 5.0).abs() <= 0.3 && r_inf < 1e-6 && worst <= 1.0 + 1e-12,
        format!("order slope {slope:.3}; |R(-1e8)| = {r_inf:.3e}; max |R(iy)| = 1 + {:.3e}", worst - 1.0),
    )
}

fn random_sparse(rng: &mut ChaCha8Rng, n: usize) -> CsrMatrix {
    let rows: Vec<Vec<(u32, f64)>> = (0..n)
        .map(|i| {
            let mut r = vec![(i as u32, -rng.random_range(1.0..4.0))];
            for _ in 0..3 {
                r.push((rng.random_range(0..n as u32), rng.random_range(-1.0..1.0)));
            }
            r
        })
        .collect();
    CsrMatrix::from_rows(&rows)
}

fn c4_rock4() -> Verdict {
    let err = |s: usize, n: usize| {
        let mut y = [1.0];
        let mut work = RockWork::new();
        for _ in 0..n {
            rock4_step(|u: &[f64], o: &mut [f64]| o[0] = -u[0], &mut y, 1.0 / n as f64, s, &mut work).unwrap();
        }
        (y[0] - (-1f64).exp()).abs()
    };
    let slopes: Vec<f64> = [5, 8, 20].iter().map(|&s| (err(s, 16) / err(s, 32)).log2()).collect();
    let mut worst = 0.0f64;
    let mut worst_s = 0;
    for s in S_MIN..=S_MAX {
        let b = beta(s).unwrap();
        for k in 0..10_000 {
            let z = -0.9 * b * k as f64 / 9_999.0;
            let r = stability_polynomial(s, z).unwrap().abs();
            if r > worst {
                worst = r;
                worst_s = s;
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut dev = 0.0f64;
    for trial in 0..20 {
        let n = 30 + 17 * trial;
        let a = random_sparse(&mut rng, n);
        let dt = rng.random_range(0.05..2.0);
        let s = stage_count(gershgorin_radius(&a), dt, 0.9).unwrap();
        let y0: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mv = |u: &[f64], o: &mut [f64]| a.matvec(u, o).unwrap();
        let (mut y1, mut y2) = (y0.clone(), y0);
        rock4_step(mv, &mut y1, dt, s, &mut RockWork::new()).unwrap();
        rock4_linear_step(mv, &mut y2, dt, s, &mut RockWork::new()).unwrap();
        let scale = y1.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for (p, q) in y1.iter().zip(&y2) {
            dev = dev.max((p - q).abs() / scale);
        }
    }
    let slopes_ok = slopes.iter().all(|p| (p - 4.0).abs() <= 0.3);
    hard(
        slopes_ok && worst <= 1.0 && dev <= 1e-12,
        format!(
            "order slopes {slopes:.3?} (s = 5, 8, 20); max |R| on [-0.9 beta, 0] = {worst:.17} (s = {worst_s}); Horner vs stage path {dev:.3e}"
        ),
    )
}

fn nagumo_j7(dt: f64, t_end: f64) -> Vec<f64> {
    // diffusion under error control so only the splitting error is left; a
    // front a few cells wide, the default one is under-resolved at J = 7
    let text = format!(
        "model=nagumo\nlevels=7\nmode=cartesian\ndt={dt}\ntend={t_end}\nrtol=1e-11\natol=1e-13\n\
         diffusion_control=true\nic_width=0.05\n"
    );
    let cfg = RunConfig::parse_str(&text).unwrap();
    let mut s = cfg.build_solver().unwrap();
    s.run(|_, _| Ok(())).unwrap();
    s.grid().values()[0].clone()
}

fn c5_strang_order() -> Verdict {
    let dt = 0.01;
    let t_end = 0.16;
    let reference = nagumo_j7(dt / 64.0, t_end);
    let err = |h: f64| {
        let u = nagumo_j7(h, t_end);
        u.iter().zip(&reference).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    };
    let (e2, e1) = (err(2.0 * dt), err(dt));
    let p = (e2 / e1).log2();
    hard(
        (p - 2.0).abs() <= 0.3,
        format!("observed order {p:.3} (max error {e2:.3e} at dt = {}, {e1:.3e} at dt = {dt})", 2.0 * dt),
    )
}

fn c6_gershgorin() -> Verdict {
    let eps = 2.5e-3;
    let formula = 2.0 * 4.0 * eps * 1024f64.powi(2);
    let cfg = MrConfig::with_jmin(Dim::Two, 7, 2, 1e-2).unwrap();
    let tree = TreeField::uniform(cfg, 1, 7, |_, o| o[0] = 0.0).unwrap();
    let a = assemble_csr(&tree, &Coefficient::Constant(eps)).unwrap();
    let scaled = gershgorin_radius(&a) * (1024.0f64 / 128.0).powi(2);
    let inside = |v: f64| (1.9e4..=2.2e4).contains(&v);
    hard(
        inside(formula) && inside(scaled) && (formula - scaled).abs() <= 1e-9 * formula,
        format!("formula {formula:.1}, J=7 assembly scaled to h = 1/1024: {scaled:.1}"),
    )
}

fn c7_compression() -> Verdict {
    let cfg = RunConfig::parse_str("model=nagumo\ndim=2\nlevels=9\n").unwrap();
    let mut s = cfg.build_solver().unwrap();
    let first = s.grid().compression_ratio();
    let reports = s.run(|_, _| Ok(())).unwrap();
    let lo = reports.iter().map(|r| r.cr).fold(first, f64::min);
    let last = reports.last().unwrap();
    hard(
        lo >= 0.75,
        format!(
            "min cr over {} steps {lo:.4} (initial {first:.4}, final {:.4} with {} leaves, eps = {})",
            reports.len(),
            last.cr,
            last.leaves,
            cfg.eps
        ),
    )
}

fn bz_run(mode: Mode, steps: usize) -> (RunTimes, Vec<StepReport>) {
    let mode = match mode {
        Mode::Cartesian => "cartesian",
        Mode::Multiresolution => "mr",
    };
    let text = format!("model=bz\ndim=2\nlevels=9\nmode={mode}\ntend={}\n", steps as f64 * 1e-3);
    let cfg = RunConfig::parse_str(&text).unwrap();
    let mut s = cfg.build_solver().unwrap();
    let reports = s.run(|_, _| Ok(())).unwrap();
    assert_eq!(reports.len(), steps);
    (RunTimes::from_reports(&reports, steps / 2), reports)
}

fn c8_mr_vs_cartesian(mr: &RunTimes, cart: &RunTimes) -> Verdict {
    let (m, c) = (mr.per_step().total, cart.per_step().total);
    let ratio = m / c;
    hard(
        ratio <= 0.7,
        format!(
            "MR {m:.4e} s/step, Cartesian {c:.4e} s/step, ratio {ratio:.3} over the last {} steps (cr {:.4})",
            mr.steps, mr.cr
        ),
    )
}

fn c9_formats() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut mismatches = 0;
    let mut bigger = 0;
    let mut ratios = Vec::new();
    for t in 0..100 {
        let (dim, levels) = if t % 2 == 0 { (Dim::Two, 8) } else { (Dim::Three, 6) };
        let cfg = MrConfig::with_jmin(dim, levels, 2, 1e-3).unwrap();
        let tree = random_graded(cfg, 1, &mut rng, 4, 0.25).unwrap();
        let eps = Coefficient::Constant(rng.random_range(1e-3..1.0));
        let csr = assemble_csr(&tree, &eps).unwrap();
        let compact = assemble_compact(&tree, &eps).unwrap();
        let x: Vec<f64> = (0..csr.n()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let (mut y1, mut y2) = (vec![0.0; csr.n()], vec![0.0; csr.n()]);
        csr.matvec(&x, &mut y1).unwrap();
        compact.matvec(&x, &mut y2).unwrap();
        if y1.iter().zip(&y2).any(|(a, b)| a.to_bits() != b.to_bits()) {
            mismatches += 1;
        }
        if dim == Dim::Three {
            let r = compact.footprint_bytes() as f64 / csr.footprint_bytes() as f64;
            ratios.push(r);
            if r >= 1.0 {
                bigger += 1;
            }
        }
    }
    let worst = ratios.iter().copied().fold(0.0, f64::max);
    hard(
        mismatches == 0 && bigger == 0,
        format!("{mismatches} of 100 matvecs differ bitwise; 3D compact/CSR bytes worst {worst:.3}, {bigger} not smaller"),
    )
}

fn c10_determinism() -> Verdict {
    let cfg = RunConfig::parse_str("model=bz\ndim=2\nlevels=8\ntend=0.02\n").unwrap();
    let snap = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| {
            let mut s = cfg.build_solver().unwrap();
            s.run(|_, _| Ok(())).unwrap();
            assert_eq!(s.steps_taken(), 20);
            Snapshot::capture(s.grid(), s.model().species_names(), cfg.echo(), s.steps_taken(), s.time())
                .to_text()
                .unwrap()
        })
    };
    let texts: Vec<String> = [1, 2, 8].iter().map(|&k| snap(k)).collect();
    let same = texts.iter().all(|t| *t == texts[0]);
    let leaves = texts[0].lines().count();
    hard(same, format!("20-step BZ snapshots at 1, 2, 8 threads identical: {same} ({leaves} lines)"))
}

fn c11_scaling() -> Verdict {
    let cfg = RunConfig::parse_str("model=bz\ndim=3\nlevels=6\ntend=0.004\n").unwrap();
    let cores = std::thread::available_parallelism().map_or(1, |n| n.get());
    let mut rows = Vec::new();
    for k in [1, 2, 4, 8] {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(k).build().unwrap();
        let times = pool.install(|| {
            let mut s = cfg.build_solver().unwrap();
            let reports = s.run(|_, _| Ok(())).unwrap();
            RunTimes::from_reports(&reports, 1)
        });
        rows.push((k, times.per_step().reaction, times.leaves));
    }
    let t1 = rows[0].1;
    let eff: Vec<(usize, f64)> = rows.iter().map(|&(k, t, _)| (k, efficiency(t1, t, k, cores))).collect();
    let pass = eff.iter().all(|&(_, e)| e >= 0.7);
    let table: Vec<String> = eff.iter().map(|(k, e)| format!("{k}: {e:.2}")).collect();
    Verdict {
        pass,
        detail: format!(
            "reaction efficiency {} on {cores} core(s), {} leaves (report only)",
            table.join(", "),
            rows[0].2
        ),
        soft: true,
    }
}

fn c12_histogram(cart: &[StepReport], mr: &[StepReport]) -> Verdict {
    let h = Histogram::from_counts(&cart.last().unwrap().complexity);
    let hm = Histogram::from_counts(&mr.last().unwrap().complexity);
    let share = h.lowest_quartile_share();
    let (lo, hi) = h.range().unwrap();
    hard(
        share >= 0.6 && hi > lo,
        format!(
            "uniform 512^2: {:.1}% of {} cells in the lowest quartile of [{lo}, {hi}], {:.1}% of the work above it; adapted mesh: {:.1}% of {} leaves",
            100.0 * share,
            h.total(),
            100.0 * h.upper_work_share(),
            100.0 * hm.lowest_quartile_share(),
            hm.total()
        ),
    )
}

fn main() {
    let only: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let want = |n: usize| only.is_empty() || only.contains(&n);
    let mut failed = Vec::new();
    let mut report = |n: usize, name: &str, f: &mut dyn FnMut() -> Verdict| {
        if !want(n) {
            return;
        }
        let t = Instant::now();
        let v = f();
        let tag = if v.pass { "PASS" } else { "FAIL" };
        println!("criterion {n:>2} {tag} {name}: {} [{:.1} s]", v.detail, t.elapsed().as_secs_f64());
        if !v.pass && !v.soft {
            failed.push(n);
        }
    };
    report(1, "projection of prediction", &mut c1_projection_of_prediction);
    report(2, "polynomial exactness", &mut c2_polynomial_exactness);
    report(3, "Radau IIA", &mut c3_radau);
    report(4, "ROCK4", &mut c4_rock4);
    report(5, "Strang order", &mut c5_strang_order);
    report(6, "Gershgorin bound", &mut c6_gershgorin);
    report(7, "compression", &mut c7_compression);
    if want(8) || want(12) {
        let (mr, mr_reports) = bz_run(Mode::Multiresolution, 20);
        let (cart, cart_reports) = bz_run(Mode::Cartesian, 20);
        report(8, "MR vs Cartesian", &mut || c8_mr_vs_cartesian(&mr, &cart));
        report(12, "complexity histogram", &mut || c12_histogram(&cart_reports, &mr_reports));
    }
    report(9, "format equivalence", &mut c9_formats);
    report(10, "determinism", &mut c10_determinism);
    report(11, "scaling", &mut c11_scaling);
    if failed.is_empty() {
        println!("acceptance: all hard criteria pass");
    } else {
        println!("acceptance: failed {failed:?}");
        std::process::exit(1);
    }
}
