use mrrd::config::RunConfig;
use mrrd::report::{efficiency, phase_table, scaling_table, speed_ratio, Histogram, RunTimes, ScalingRow};
use mrrd::splitting::PhaseTimes;
use proptest::prelude::*;

fn times(a: f64, r: f64, d: f64, s: f64) -> PhaseTimes {
    PhaseTimes {
        adaptation: a,
        reaction: r,
        diffusion: d,
        total: s,
    }
}

#[test]
fn single_thread_efficiency_is_one() {
    assert_eq!(efficiency(2.5, 2.5, 1, 8), 1.0);
    // more threads than cores
    assert_eq!(efficiency(4.0, 2.0, 8, 2), 1.0);
    assert_eq!(efficiency(4.0, 1.0, 4, 8), 1.0);
}

#[test]
fn scaling_table_first_row_reads_one() {
    let rows = [
        ScalingRow {
            threads: 1,
            per_step: times(1.0, 2.0, 3.0, 6.0),
        },
        ScalingRow {
            threads: 2,
            per_step: times(0.5, 1.0, 3.0, 4.5),
        },
    ];
    let t = scaling_table(&rows, 2);
    let lines: Vec<&str> = t.lines().collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[1].trim_end().ends_with("1.00   1.00   1.00   1.00"), "{t}");
    assert!(lines[2].contains("0.50"), "{t}");
}

#[test]
fn histogram_quartile() {
    let h = Histogram::from_counts(&[7, 7, 7, 8, 9, 11, 19]);
    assert_eq!(h.total(), 7);
    assert_eq!(h.range(), Some((7, 19)));
    // cut at 7 + 12/4 = 10
    assert!((h.lowest_quartile_share() - 5.0 / 7.0).abs() < 1e-15);
    assert!((h.upper_work_share() - 30.0 / 68.0).abs() < 1e-15);
    assert_eq!(Histogram::default().lowest_quartile_share(), 0.0);
    assert_eq!(Histogram::default().upper_work_share(), 0.0);
}

#[test]
fn phase_table_lists_every_phase() {
    let t = phase_table("x", &times(1e-3, 2e-3, 3e-3, 6.5e-3));
    for p in ["A adaptation", "R reaction", "D diffusion", "S step"] {
        assert!(t.contains(p));
    }
}

#[test]
fn ratio_of_equal_runs_is_one() {
    let r = RunTimes {
        steps: 4,
        sum: times(0.0, 1.0, 1.0, 2.0),
        leaves: 10,
        cr: 0.5,
    };
    assert_eq!(speed_ratio(&r, &r), 1.0);
}

#[test]
fn short_run_histogram_and_phases() {
    let cfg = RunConfig::parse_str("model=bz\nlevels=6\ndt=0.001\ntend=0.004\nthreads=1").unwrap();
    let mut s = cfg.build_solver().unwrap();
    let reports = s.run(|_, _| Ok(())).unwrap();
    let last = reports.last().unwrap();
    let h = Histogram::from_counts(&last.complexity);
    assert_eq!(h.total(), last.leaves);
    assert_eq!(h.total(), s.grid().n_cells());
    let rt = RunTimes::from_reports(&reports, 1);
    assert_eq!(rt.steps, reports.len() - 1);
    for r in &reports {
        let t = r.times;
        let parts = t.adaptation + t.reaction + t.diffusion;
        assert!(parts <= t.total * 1.1, "{t:?}");
    }
}

proptest! {
    #[test]
    fn histogram_counts_every_leaf(counts in prop::collection::vec(7u32..40, 1..200)) {
        let h = Histogram::from_counts(&counts);
        prop_assert_eq!(h.total(), counts.len());
        let q = h.lowest_quartile_share();
        prop_assert!(q > 0.0 && q <= 1.0);
        let w = h.upper_work_share();
        prop_assert!((0.0..1.0).contains(&w));
    }
}
