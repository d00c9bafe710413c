//! Benchmark and experiment driver.
//!
//! Exit codes: 0 success, 2 configuration problems, 1 runtime failures.
//! The stats CSV goes to --stats-out when given, otherwise to stdout with
//! the human summary diverted to stderr so the CSV stays machine-readable.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};

use flatgp::engine;
use flatgp::error::Error;
use flatgp::report;
use flatgp::runspec::RunSpec;
use flatgp::tree::format_tree;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Toggle {
    On,
    Off,
}

impl From<Toggle> for bool {
    fn from(t: Toggle) -> bool {
        t == Toggle::On
    }
}

#[derive(Parser, Debug)]
#[command(
    name = "flatgp",
    version,
    about = "Genetic programming over flat byte-coded trees",
    after_help = "Problems: sextic (regression on x^6 - 2x^4 + x^2), mux6 (6-way \
                  boolean multiplexer), or a path to a CSV suite whose header names \
                  the variables and whose last column is the target."
)]
struct Cli {
    /// sextic | mux6 | path to a suite CSV
    #[arg(long)]
    problem: Option<String>,
    /// Fitness cases for generated numeric suites
    #[arg(long)]
    cases: Option<usize>,
    /// Population size
    #[arg(long)]
    pop: Option<usize>,
    /// Generations to breed after generation 0
    #[arg(long)]
    gens: Option<usize>,
    /// Hard cap on tree size in nodes (also the buffer size)
    #[arg(long)]
    max_size: Option<usize>,
    /// Worker threads
    #[arg(long)]
    threads: Option<usize>,
    /// Seed for the single master random stream
    #[arg(long)]
    seed: Option<u64>,
    /// Tournament size
    #[arg(long)]
    tournament: Option<usize>,
    /// Fraction of children bred by crossover
    #[arg(long)]
    xo_rate: Option<f64>,
    /// Fraction bred by subtree mutation; must sum to 1 with --xo-rate
    #[arg(long)]
    mutation_rate: Option<f64>,
    /// Score children from recipes, climbing only while the change survives
    #[arg(long, value_enum)]
    incremental: Option<Toggle>,
    /// Evaluate before materializing; skip children that got no selections
    #[arg(long, value_enum)]
    fitness_first: Option<Toggle>,
    /// Let a mother's last child reuse her buffer
    #[arg(long, value_enum)]
    in_place: Option<Toggle>,
    /// Copy fragments out of fathers so their buffers retire early
    #[arg(long, value_enum)]
    fatherless: Option<Toggle>,
    /// Reserve slot 0 for a copy of the best citizen
    #[arg(long, value_enum)]
    elitism: Option<Toggle>,
    /// Write the per-generation stats CSV here instead of stdout
    #[arg(long)]
    stats_out: Option<PathBuf>,
    /// Write a disruption-climb CSV (one row per evaluated child)
    #[arg(long)]
    trace_out: Option<PathBuf>,
    /// Write the breeding decisions CSV (one row per child slot)
    #[arg(long)]
    plan_dump: Option<PathBuf>,
    /// Load settings from a TOML file; explicit flags override it
    #[arg(long)]
    config: Option<PathBuf>,
    /// Write the effective settings as TOML and continue
    #[arg(long)]
    save_config: Option<PathBuf>,
}

impl Cli {
    fn effective_spec(&self) -> Result<RunSpec, Error> {
        let mut spec = match &self.config {
            Some(path) => RunSpec::load(path)?,
            None => RunSpec::default(),
        };
        macro_rules! over {
            ($($field:ident),+) => {
                $(if let Some(v) = &self.$field { spec.$field = v.clone().into(); })+
            };
        }
        over!(problem, cases, pop, gens, max_size, threads, seed, tournament, xo_rate, mutation_rate);
        if let Some(t) = self.incremental {
            spec.incremental = t.into();
        }
        if let Some(t) = self.fitness_first {
            spec.fitness_first = t.into();
        }
        if let Some(t) = self.in_place {
            spec.in_place = t.into();
        }
        if let Some(t) = self.fatherless {
            spec.fatherless = t.into();
        }
        if let Some(t) = self.elitism {
            spec.elitism = t.into();
        }
        Ok(spec)
    }
}

fn real_main() -> u8 {
    let cli = Cli::parse();
    let spec = match cli.effective_spec() {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return 2;
        }
    };
    if let Some(path) = &cli.save_config {
        if let Err(e) = spec.save(path) {
            eprintln!("error: {e}");
            return 1;
        }
    }
    let (mut cfg, kind) = match spec.to_engine() {
        Ok(pair) => pair,
        Err(e) => {
            eprintln!("error: {e}");
            return 2;
        }
    };
    cfg.collect_trace = cli.trace_out.is_some();
    cfg.collect_plan = cli.plan_dump.is_some();

    let report = match engine::run(&cfg, &kind) {
        Ok(r) => r,
        Err(e @ Error::Config(_)) => {
            eprintln!("error: {e}");
            return 2;
        }
        Err(e) => {
            eprintln!("error: {e}");
            return 1;
        }
    };

    let mut summary = Vec::with_capacity(4);
    summary.push(format!(
        "problem={} pop={} gens={} seed={} threads={} pool_capacity={} pool_peak={}",
        report.problem, spec.pop, spec.gens, spec.seed, spec.threads, report.pool_capacity, report.pool_peak
    ));
    summary.push(report::summary_line(&report));
    summary.push(format!(
        "best_fitness={} best_size={}",
        report.best_fitness,
        report.best_genome.len()
    ));
    if report.best_genome.len() <= 200 {
        if let Ok(problem) = engine::build_problem(&kind, &mut seed_rng(spec.seed)) {
            summary.push(format!("best_tree={}", format_tree(&problem.table, &report.best_genome)));
        }
    }

    let stats = report::stats_csv(&report.stats);
    match &cli.stats_out {
        Some(path) => {
            if let Err(e) = std::fs::write(path, &stats) {
                eprintln!("error: writing {}: {e}", path.display());
                return 1;
            }
            for line in &summary {
                println!("{line}");
            }
        }
        None => {
            print!("{stats}");
            for line in &summary {
                eprintln!("{line}");
            }
        }
    }
    if let Some(path) = &cli.trace_out {
        if let Err(e) = std::fs::write(path, report::trace_csv(&report.traces)) {
            eprintln!("error: writing {}: {e}", path.display());
            return 1;
        }
    }
    if let Some(path) = &cli.plan_dump {
        if let Err(e) = std::fs::write(path, report::plan_csv(&report.plans)) {
            eprintln!("error: writing {}: {e}", path.display());
            return 1;
        }
    }
    0
}

/// The problem is rebuilt only to print the best tree with its real
/// variable and constant names, so this replays the run's stream head.
fn seed_rng(seed: u64) -> rand_chacha::ChaCha8Rng {
    use rand::SeedableRng;
    rand_chacha::ChaCha8Rng::seed_from_u64(seed)
}

fn main() -> ExitCode {
    ExitCode::from(real_main())
}
