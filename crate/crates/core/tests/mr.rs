use mrrd::mr::{predict_1d, random_graded, thresholds, MrConfig, TreeField};
use mrrd::{Dim, NodeKey};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn cfg(dim: Dim, levels: u8, jmin: u8, eps: f64) -> MrConfig {
    MrConfig::with_jmin(dim, levels, jmin, eps).unwrap()
}

/// Exact average of `x^p` over `[a, b]`.
fn mono_avg(p: i32, a: f64, b: f64) -> f64 {
    (b.powi(p + 1) - a.powi(p + 1)) / ((p + 1) as f64 * (b - a))
}

#[test]
fn constant_field_projects_to_constant() {
    let c = cfg(Dim::Two, 6, 2, 1e-3);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut tree = random_graded(c, 2, &mut rng, 3, 0.3).unwrap();
    for vals in tree.leaf_values_mut() {
        vals.fill(4.25);
    }
    tree.project_up().unwrap();
    assert!(tree
        .internal_values()
        .iter()
        .all(|v| v.iter().all(|&x| x == 4.25)));
}

#[test]
fn parent_is_mean_of_four_children() {
    let c = cfg(Dim::Two, 3, 1, 1e-3);
    let leaves = [0.0, 2.0, 4.0, 6.0]
        .iter()
        .enumerate()
        .flat_map(|(i, &v)| {
            NodeKey::ROOT
                .child(Dim::Two, i)
                .unwrap()
                .children(Dim::Two)
                .unwrap()
                .into_iter()
                .map(move |k| (k, vec![v]))
        })
        .collect();
    let tree = TreeField::from_leaves(c, 1, leaves).unwrap();
    assert_eq!(tree.values_of(NodeKey::ROOT).unwrap(), vec![3.0]);
}

#[test]
fn root_is_volume_weighted_leaf_mean() {
    for (dim, levels) in [(Dim::Two, 7u8), (Dim::Three, 5)] {
        let c = cfg(dim, levels, 2, 1e-3);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let tree = random_graded(c, 1, &mut rng, 4, 0.25).unwrap();
        let d = dim.n() as i32;
        // brute force: every leaf's share of the unit cube
        let mut brute = 0.0;
        for (k, v) in tree.leaf_keys().iter().zip(&tree.leaf_values()[0]) {
            brute += v / 2f64.powi(d * i32::from(k.level()));
        }
        let root = tree.values_of(NodeKey::ROOT).unwrap()[0];
        assert!((root - brute).abs() < 1e-13, "{root} vs {brute}");
    }
}

#[test]
fn prediction_examples() {
    assert_eq!(predict_1d([0.0, 1.0, 2.0]), [0.75, 1.25]);
    assert_eq!(predict_1d([3.0, 3.0, 3.0]), [3.0, 3.0]);
}

#[test]
fn prediction_exact_on_quadratic_cell_averages() {
    let h = 1.0 / 16.0;
    for k in 1..15 {
        let avg = |i: i32| mono_avg(2, i as f64 * h, (i + 1) as f64 * h);
        let pred = predict_1d([avg(k - 1), avg(k), avg(k + 1)]);
        let x0 = k as f64 * h;
        let left = mono_avg(2, x0, x0 + h / 2.0);
        let right = mono_avg(2, x0 + h / 2.0, x0 + h);
        assert!((pred[0] - left).abs() < 1e-15);
        assert!((pred[1] - right).abs() < 1e-15);
    }
}

#[test]
fn prediction_consistency_2d() {
    let c = cfg(Dim::Two, 6, 3, 1e-3);
    let tree = TreeField::uniform(c, 1, 5, |_, o| o[0] = 7.0).unwrap();
    let node = NodeKey::encode(Dim::Two, 4, [3, 9, 0]).unwrap();
    let kids = tree.predict(node).unwrap();
    assert_eq!(kids, vec![7.0; 4]);
}

#[test]
fn details_of_constant_field_vanish() {
    let c = cfg(Dim::Three, 4, 2, 1e-3);
    let tree = TreeField::uniform(c, 2, 4, |_, o| o.fill(-1.5)).unwrap();
    let det = tree.compute_details().unwrap();
    assert_eq!(det.max_abs(), 0.0);
}

fn interior(dim: Dim, key: NodeKey) -> bool {
    let n = 1u32 << key.level();
    key.coords(dim)[..dim.n()].iter().all(|&k| k >= 1 && k + 1 < n)
}

#[test]
fn details_vanish_for_quadratic_in_interior() {
    let c = cfg(Dim::Two, 6, 2, 1e-3);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut tree = random_graded(c, 1, &mut rng, 4, 0.3).unwrap();
    let vals: Vec<f64> = tree
        .leaf_keys()
        .iter()
        .map(|k| {
            let g = k.decode(Dim::Two);
            let o = g.origin();
            let (x0, x1) = (o[0], o[0] + g.width);
            let (y0, y1) = (o[1], o[1] + g.width);
            // u = 1 + 2x - y + 3x^2 + xy - 2y^2 + 5 x^2 y^2
            1.0 + 2.0 * mono_avg(1, x0, x1) - mono_avg(1, y0, y1)
                + 3.0 * mono_avg(2, x0, x1)
                + mono_avg(1, x0, x1) * mono_avg(1, y0, y1)
                - 2.0 * mono_avg(2, y0, y1)
                + 5.0 * mono_avg(2, x0, x1) * mono_avg(2, y0, y1)
        })
        .collect();
    tree.leaf_values_mut()[0].copy_from_slice(&vals);
    tree.project_up().unwrap();
    let det = tree.compute_details().unwrap();
    let mut checked = 0;
    for (r, &p) in det.keys().iter().enumerate() {
        if interior(Dim::Two, p) {
            assert!(det.norm(r, 0) <= 1e-12, "{p:?}: {}", det.norm(r, 0));
            checked += 1;
        }
    }
    assert!(checked > 10);
}

#[test]
fn spike_details_stay_in_ancestor_stencils() {
    let c = cfg(Dim::Two, 6, 2, 1e-3);
    let mut tree = TreeField::uniform(c, 1, 6, |_, o| o[0] = 0.0).unwrap();
    let spike = NodeKey::encode(Dim::Two, 6, [37, 12, 0]).unwrap();
    let pos = tree.leaf_keys().binary_search(&spike).unwrap();
    tree.leaf_values_mut()[0][pos] = 1.0;
    tree.project_up().unwrap();
    let det = tree.compute_details().unwrap();
    for (r, &p) in det.keys().iter().enumerate() {
        let anc = spike.ancestor(Dim::Two, p.level());
        let pc = p.coords(Dim::Two);
        let ac = anc.coords(Dim::Two);
        let n = 1i64 << p.level();
        // stencil cells after the mirror clamp
        let near = (0..2).all(|a| {
            (-1i64..=1).any(|o| (i64::from(pc[a]) + o).clamp(0, n - 1) == i64::from(ac[a]))
        });
        if det.norm(r, 0) > 0.0 {
            assert!(near, "nonzero detail at {p:?} far from the spike");
        }
        if p == anc {
            assert!(det.norm(r, 0) > 0.0);
        }
    }
}

#[test]
fn constant_field_collapses_to_floor() {
    let c = cfg(Dim::Two, 7, 3, 1e-2);
    let mut tree = TreeField::uniform(c, 1, 7, |_, o| o[0] = 0.5).unwrap();
    tree.remesh().unwrap();
    assert!(tree.leaf_keys().iter().all(|k| k.level() == 3));
    assert_eq!(tree.n_leaves(), 64);
    tree.check_graded().unwrap();
}

#[test]
fn vanishing_threshold_gives_full_grid() {
    let c = cfg(Dim::Two, 6, 3, 1e-14);
    let tree = TreeField::initialize(c, 1, |x, o| o[0] = (5.0 * x[0]).sin() * (3.0 * x[1]).exp()).unwrap();
    assert_eq!(tree.n_leaves(), 1 << 12);
    assert_eq!(tree.compression_ratio(), 0.0);
}

#[test]
fn compression_ratio_counts() {
    let c = cfg(Dim::Two, 6, 3, 1e-3);
    let t = TreeField::uniform(c, 1, 5, |_, o| o[0] = 0.0).unwrap();
    assert_eq!(t.compression_ratio(), 1.0 - 0.25);
    assert_eq!(mrrd::mr::compression_ratio(Dim::Two, 10, 1), 1.0 - 2f64.powi(-20));
}

fn front(x: &[f64; 3], o: &mut [f64]) {
    let r = ((x[0] - 0.3).powi(2) + (x[1] - 0.4).powi(2)).sqrt();
    o[0] = 1.0 / (1.0 + (60.0 * (r - 0.25)).exp());
}

#[test]
fn adapt_reaches_fixed_point_and_stays_graded() {
    let c = cfg(Dim::Two, 8, 3, 1e-3);
    let mut tree = TreeField::initialize(c, 1, front).unwrap();
    tree.check_graded().unwrap();
    tree.check_structure().unwrap();
    assert!(tree.compression_ratio() > 0.5);
    let keys = tree.leaf_keys().to_vec();
    let stats = tree.remesh().unwrap();
    assert!(!stats.changed(), "{stats:?}");
    assert_eq!(keys, tree.leaf_keys());
    let th = thresholds(Dim::Two, 8, 1e-3);
    assert_eq!(th.len(), 9);
}

#[test]
fn adapt_is_thread_count_independent() {
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| {
            let c = cfg(Dim::Two, 8, 3, 1e-3);
            let mut tree = TreeField::initialize(c, 1, front).unwrap();
            // perturb so the next pass both refines and coarsens
            for v in tree.leaf_values_mut()[0].iter_mut() {
                *v = *v * *v;
            }
            tree.remesh().unwrap();
            (
                tree.leaf_keys().iter().map(|k| k.raw()).collect::<Vec<_>>(),
                tree.leaf_values()[0].iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            )
        })
    };
    let one = run(1);
    assert_eq!(one, run(3));
    assert_eq!(one, run(8));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn random_trees_are_graded_and_consistent(seed in any::<u64>(), three in any::<bool>()) {
        let (dim, levels) = if three { (Dim::Three, 5) } else { (Dim::Two, 7) };
        let c = cfg(dim, levels, 2, 1e-3);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let tree = random_graded(c, 1, &mut rng, 4, 0.2).unwrap();
        prop_assert!(tree.check_graded().is_ok());
        prop_assert!(tree.check_structure().is_ok());
        let vol: f64 = tree.leaf_keys().iter()
            .map(|k| 2f64.powi(-(dim.n() as i32) * i32::from(k.level()))).sum();
        prop_assert!((vol - 1.0).abs() < 1e-12);
        for &p in tree.internal_keys() {
            let kids = tree.predict(p).unwrap();
            let mean = kids.iter().sum::<f64>() / kids.len() as f64;
            let v = tree.values_of(p).unwrap()[0];
            prop_assert!((mean - v).abs() <= 1e-13);
        }
    }

    #[test]
    fn adapt_preserves_grading(seed in any::<u64>()) {
        let c = cfg(Dim::Two, 7, 2, 5e-2);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut tree = random_graded(c, 2, &mut rng, 4, 0.2).unwrap();
        tree.remesh().unwrap();
        prop_assert!(tree.check_graded().is_ok());
        prop_assert!(tree.check_structure().is_ok());
    }
}

mod internals {
    use mrrd::mr::*;
    use mrrd::Dim;

    #[test]
    fn threshold_examples() {
        let t = thresholds(Dim::Two, 10, 0.01);
        assert_eq!(t[8], 0.0025);
        assert_eq!(t[10], 0.01);
        assert_eq!(thresholds(Dim::Three, 9, 1.0)[7], 0.125);
    }

    #[test]
    fn config_validation() {
        assert!(MrConfig::new(Dim::Three, 17, 1e-2).is_err());
        assert!(MrConfig::with_jmin(Dim::Two, 6, 6, 1e-2).is_err());
        assert!(MrConfig::with_jmin(Dim::Two, 6, 2, 0.0).is_err());
        assert_eq!(MrConfig::new(Dim::Two, 9, 1e-2).unwrap().jmin, 5);
        assert_eq!(MrConfig::new(Dim::Three, 6, 1e-2).unwrap().jmin, 3);
        assert_eq!(MrConfig::new(Dim::Two, 4, 1e-2).unwrap().jmin, 3);
    }
}
