use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mrrd::config::RunConfig;
use mrrd::report::{phase_table, scaling_table, speed_ratio, Histogram, RunTimes, ScalingRow};
use mrrd::snapshot::Snapshot;
use mrrd::splitting::{Mode, Solver, StepReport};
use mrrd::{ConfigError, SolverError};

#[derive(Parser, Debug)]
#[command(name = "mrrd", version, about = "Adaptive multiresolution reaction-diffusion solver")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Run a simulation and write snapshots.
    Run {
        #[command(flatten)]
        flags: RunFlags,
        /// Also write a VTK raster of the final state at this level.
        #[arg(long, value_name = "LEVEL")]
        vtk: Option<u8>,
        /// Only print the final summary.
        #[arg(long, short)]
        quiet: bool,
    },
    /// Time the run at several thread counts, optionally against the Cartesian mode.
    Bench {
        #[command(flatten)]
        flags: RunFlags,
        /// Comma-separated thread counts; the first is the efficiency baseline.
        #[arg(long, value_delimiter = ',', default_value = "1")]
        thread_list: Vec<usize>,
        /// Repeat the first thread count in cartesian mode and report the ratio.
        #[arg(long)]
        compare_cartesian: bool,
        /// Steps excluded from the timings.
        #[arg(long, default_value_t = 0)]
        warmup: usize,
    },
    /// Print the effective configuration.
    Config {
        #[command(flatten)]
        flags: RunFlags,
    },
}

/// Values stay strings so the config layer reports errors with the key name.
#[derive(Args, Debug, Default)]
struct RunFlags {
    /// key=value file; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    dim: Option<String>,
    #[arg(long)]
    levels: Option<String>,
    #[arg(long)]
    jmin: Option<String>,
    #[arg(long)]
    eps: Option<String>,
    #[arg(long)]
    dt: Option<String>,
    #[arg(long)]
    tend: Option<String>,
    #[arg(long)]
    threads: Option<String>,
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    matrix_format: Option<String>,
    #[arg(long)]
    out: Option<String>,
    #[arg(long)]
    snapshot_every: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    /// Extra `key=value` settings, e.g. `--set rtol=1e-8`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl RunFlags {
    fn load(&self) -> Result<RunConfig, ConfigError> {
        let named = [
            ("model", &self.model),
            ("dim", &self.dim),
            ("levels", &self.levels),
            ("jmin", &self.jmin),
            ("eps", &self.eps),
            ("dt", &self.dt),
            ("tend", &self.tend),
            ("threads", &self.threads),
            ("mode", &self.mode),
            ("matrix_format", &self.matrix_format),
            ("out", &self.out),
            ("snapshot_every", &self.snapshot_every),
            ("seed", &self.seed),
        ];
        let mut pairs: Vec<(String, String)> = named
            .iter()
            .filter_map(|(k, v)| v.as_ref().map(|v| (k.to_string(), v.clone())))
            .collect();
        for s in &self.set {
            let (k, v) = s
                .split_once('=')
                .ok_or_else(|| ConfigError::invalid("set", format!("expected KEY=VALUE, got `{s}`")))?;
            pairs.push((k.to_string(), v.to_string()));
        }
        RunConfig::load(self.config.as_deref(), &pairs)
    }
}

#[derive(Debug)]
enum Failure {
    Config(ConfigError),
    Solver(SolverError),
    Other(String),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e)
    }
}

impl From<SolverError> for Failure {
    fn from(e: SolverError) -> Self {
        match e {
            SolverError::Config(c) => Failure::Config(c),
            SolverError::Snapshot(s) => Failure::Other(s.to_string()),
            e => Failure::Solver(e),
        }
    }
}

fn pool(threads: usize) -> Result<rayon::ThreadPool, Failure> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Failure::Other(format!("thread pool: {e}")))
}

fn snapshot_path(dir: &Path, step: usize) -> PathBuf {
    dir.join(format!("snap_{step:06}.txt"))
}

fn write_snapshot(cfg: &RunConfig, s: &Solver) -> Result<Option<Snapshot>, SolverError> {
    let Some(dir) = &cfg.out else {
        return Ok(None);
    };
    let snap = Snapshot::capture(s.grid(), s.model().species_names(), cfg.echo(), s.steps_taken(), s.time());
    snap.write(&snapshot_path(dir, s.steps_taken()))?;
    Ok(Some(snap))
}

fn simulate(cfg: &RunConfig, quiet: bool) -> Result<(Solver, Vec<StepReport>), SolverError> {
    let mut solver = cfg.build_solver()?;
    if cfg.snapshot_every > 0 {
        write_snapshot(cfg, &solver)?;
    }
    let reports = solver.run(|s, r| {
        if !quiet {
            println!(
                "step {:>6}  t = {:<12.6}  leaves = {:>9}  cr = {:.4}  S = {:.3e} s",
                r.step, r.time, r.leaves, r.cr, r.times.total
            );
        }
        let every = cfg.snapshot_every;
        if every > 0 && r.step.is_multiple_of(every) && !s.finished() {
            write_snapshot(cfg, s)?;
        }
        Ok(())
    })?;
    Ok((solver, reports))
}

fn summary(reports: &[StepReport], warmup: usize) {
    let times = RunTimes::from_reports(reports, warmup);
    print!("{}", phase_table(&format!("per-step wall time over {} steps", times.steps), &times.per_step()));
    if let Some(last) = reports.last() {
        let h = Histogram::from_counts(&last.complexity);
        println!("complexity of the last reaction substep ({} leaves)", h.total());
        print!("{h}");
        println!(
            "lowest-quartile share {:.3}, work above it {:.3}",
            h.lowest_quartile_share(),
            h.upper_work_share()
        );
    }
}

fn cmd_run(flags: &RunFlags, vtk: Option<u8>, quiet: bool) -> Result<(), Failure> {
    let cfg = flags.load()?;
    let (solver, reports) = pool(cfg.threads)?.install(|| simulate(&cfg, quiet))?;
    let snap = write_snapshot(&cfg, &solver)?;
    if let Some(level) = vtk {
        let snap = match snap {
            Some(s) => s,
            None => Snapshot::capture(solver.grid(), solver.model().species_names(), cfg.echo(), solver.steps_taken(), solver.time()),
        };
        let dir = cfg.out.clone().unwrap_or_else(|| PathBuf::from("."));
        std::fs::create_dir_all(&dir).map_err(|e| Failure::Other(format!("{}: {e}", dir.display())))?;
        let path = dir.join(format!("snap_{:06}.vtk", solver.steps_taken()));
        snap.write_vtk(&path, level).map_err(|e| Failure::Other(e.to_string()))?;
    }
    println!(
        "finished {} steps at t = {} with {} leaves (cr = {:.4})",
        solver.steps_taken(),
        solver.time(),
        solver.grid().n_cells(),
        solver.grid().compression_ratio()
    );
    summary(&reports, 0);
    Ok(())
}

fn cmd_bench(flags: &RunFlags, list: &[usize], compare: bool, warmup: usize) -> Result<(), Failure> {
    let cfg = flags.load()?;
    if list.is_empty() || list.contains(&0) {
        return Err(ConfigError::invalid("thread_list", "needs positive thread counts").into());
    }
    let cores = std::thread::available_parallelism().map_or(1, |n| n.get());
    let mut rows = Vec::new();
    let mut first: Option<(RunTimes, Vec<StepReport>)> = None;
    for &k in list {
        let (_, reports) = pool(k)?.install(|| simulate(&cfg, true))?;
        let t = RunTimes::from_reports(&reports, warmup);
        println!("threads {k}: {} steps, S = {:.4e} s/step", t.steps, t.per_step().total);
        rows.push(ScalingRow {
            threads: k,
            per_step: t.per_step(),
        });
        if first.is_none() {
            first = Some((t, reports));
        }
    }
    let (base, reports) = first.expect("non-empty thread list");
    println!("{} mode, {} available cores", cfg.mode, cores);
    print!("{}", scaling_table(&rows, cores));
    summary(&reports, warmup);
    if compare && cfg.mode != Mode::Cartesian {
        let cart = RunConfig {
            mode: Mode::Cartesian,
            ..cfg.clone()
        };
        let (_, creports) = pool(list[0])?.install(|| simulate(&cart, true))?;
        let ct = RunTimes::from_reports(&creports, warmup);
        print!("{}", phase_table("cartesian per-step wall time", &ct.per_step()));
        println!(
            "MR / cartesian step time {:.3} (MR {:.4e} s, cartesian {:.4e} s, cr {:.4})",
            speed_ratio(&base, &ct),
            base.per_step().total,
            ct.per_step().total,
            base.cr
        );
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match &cli.cmd {
        Cmd::Run { flags, vtk, quiet } => cmd_run(flags, *vtk, *quiet),
        Cmd::Bench {
            flags,
            thread_list,
            compare_cartesian,
            warmup,
        } => cmd_bench(flags, thread_list, *compare_cartesian, *warmup),
        Cmd::Config { flags } => flags.load().map(|c| print!("{}", c.to_text())).map_err(Failure::from),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(e)) => {
            eprintln!("config error: {e}");
            ExitCode::from(2)
        }
        Err(Failure::Solver(e)) => {
            eprintln!("solver error: {e}");
            ExitCode::from(3)
        }
        Err(Failure::Other(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
