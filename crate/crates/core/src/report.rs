//! Benchmark tables: phase times, strong-scaling efficiency, MR/Cartesian
//! ratio and the per-leaf complexity histogram.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};

use crate::splitting::{PhaseTimes, StepReport};

/// Leaves per reaction complexity.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Histogram {
    pub buckets: BTreeMap<u32, usize>,
}

impl Histogram {
    pub fn from_counts(counts: &[u32]) -> Self {
        let mut buckets = BTreeMap::new();
        for &c in counts {
            *buckets.entry(c).or_insert(0) += 1;
        }
        Histogram { buckets }
    }

    pub fn total(&self) -> usize {
        self.buckets.values().sum()
    }

    pub fn range(&self) -> Option<(u32, u32)> {
        Some((*self.buckets.keys().next()?, *self.buckets.keys().next_back()?))
    }

    /// Fraction of leaves at or below `min + (max - min) / 4`.
    pub fn lowest_quartile_share(&self) -> f64 {
        let Some((lo, hi)) = self.range() else {
            return 0.0;
        };
        let cut = lo as f64 + 0.25 * (hi - lo) as f64;
        let low: usize = self.buckets.range(..=cut.floor() as u32).map(|(_, n)| n).sum();
        low as f64 / self.total() as f64
    }

    /// Share of the total work (sum of complexities) spent in the leaves
    /// above the lowest quartile.
    pub fn upper_work_share(&self) -> f64 {
        let Some((lo, hi)) = self.range() else {
            return 0.0;
        };
        let cut = (lo as f64 + 0.25 * (hi - lo) as f64).floor() as u32;
        let work = |it: &mut dyn Iterator<Item = (&u32, &usize)>| it.fold(0.0, |s, (&c, &n)| s + c as f64 * n as f64);
        let all = work(&mut self.buckets.iter());
        let upper = work(&mut self.buckets.range(cut + 1..));
        if all > 0.0 {
            upper / all
        } else {
            0.0
        }
    }
}

impl fmt::Display for Histogram {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let total = self.total().max(1);
        let widest = self.buckets.values().copied().max().unwrap_or(1).max(1);
        writeln!(f, "{:>6} {:>9} {:>7}", "n_rhs", "leaves", "share")?;
        for (&c, &n) in &self.buckets {
            let bar = "#".repeat((40 * n).div_ceil(widest));
            writeln!(f, "{c:>6} {n:>9} {:>6.2}% {bar}", 100.0 * n as f64 / total as f64)?;
        }
        Ok(())
    }
}

/// `s_k = T_1 / (n_k T_k)` with `n_k = min(k, cores)`.
pub fn efficiency(t1: f64, tk: f64, threads: usize, cores: usize) -> f64 {
    let nk = threads.min(cores).max(1) as f64;
    t1 / (nk * tk)
}

/// Accumulated wall times of one run.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunTimes {
    pub steps: usize,
    pub sum: PhaseTimes,
    pub leaves: usize,
    pub cr: f64,
}

impl RunTimes {
    /// Sums the reports after skipping the first `warmup` steps.
    pub fn from_reports(reports: &[StepReport], warmup: usize) -> Self {
        let mut out = RunTimes::default();
        for r in reports.iter().skip(warmup) {
            out.sum += r.times;
            out.steps += 1;
        }
        if let Some(last) = reports.last() {
            out.leaves = last.leaves;
            out.cr = last.cr;
        }
        out
    }

    pub fn per_step(&self) -> PhaseTimes {
        self.sum.scaled(1.0 / self.steps.max(1) as f64)
    }
}

pub fn phase_table(label: &str, t: &PhaseTimes) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{label}");
    let total = if t.total > 0.0 { t.total } else { 1.0 };
    for (name, v) in [
        ("A adaptation", t.adaptation),
        ("R reaction", t.reaction),
        ("D diffusion", t.diffusion),
        ("S step", t.total),
    ] {
        let _ = writeln!(s, "  {name:<14} {v:>12.4e} s {:>6.1}%", 100.0 * v / total);
    }
    s
}

/// One row of a strong-scaling table.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalingRow {
    pub threads: usize,
    pub per_step: PhaseTimes,
}

/// Efficiency per phase relative to the first row.
pub fn scaling_table(rows: &[ScalingRow], cores: usize) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:>7} {:>11} {:>11} {:>11} {:>11} {:>6} {:>6} {:>6} {:>6}",
        "threads", "A [s]", "R [s]", "D [s]", "S [s]", "e_A", "e_R", "e_D", "e_S"
    );
    let Some(base) = rows.first() else {
        return s;
    };
    let b = base.per_step;
    let base_n = base.threads.min(cores).max(1) as f64;
    for r in rows {
        let t = r.per_step;
        // normalise to the first row so a first row with k > 1 still reads 1.0
        let e = |t1: f64, tk: f64| efficiency(t1 * base_n, tk, r.threads, cores);
        let _ = writeln!(
            s,
            "{:>7} {:>11.4e} {:>11.4e} {:>11.4e} {:>11.4e} {:>6.2} {:>6.2} {:>6.2} {:>6.2}",
            r.threads,
            t.adaptation,
            t.reaction,
            t.diffusion,
            t.total,
            e(b.adaptation, t.adaptation),
            e(b.reaction, t.reaction),
            e(b.diffusion, t.diffusion),
            e(b.total, t.total),
        );
    }
    s
}

/// Per-step ratio MR / Cartesian of the step time.
pub fn speed_ratio(mr: &RunTimes, cartesian: &RunTimes) -> f64 {
    mr.per_step().total / cartesian.per_step().total
}
