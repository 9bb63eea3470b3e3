use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use clr_core::generator::{self, GenParams, Level};
use clr_core::io::{self, ReportRow};
use clr_core::lowerbounds::{self, BoundMode};
use clr_core::model::{evaluate, validate_instance};
use clr_core::oracle::{brute_force_opt, OracleCaps};
use clr_core::pipeline::{self, BoundPolicy, Variant, VariantConfig};
use clr_core::rational::{self, Rational};
use clr_core::Instance;

#[derive(Parser)]
#[command(name = "clr", version, about = "Capacitated location routing solver")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write generated instances.
    Generate(GenerateArgs),
    /// Run one variant on one instance.
    Solve(SolveArgs),
    /// Print both lower bounds.
    Bounds(BoundsArgs),
    /// Exact optimum of a tiny instance.
    Oracle(OracleArgs),
    /// Run variants over every instance in a directory.
    Bench(BenchArgs),
    /// Check a solution file against an instance.
    Verify(VerifyArgs),
    /// Gap/excess scatter series from a CSV report.
    Plotdata(PlotArgs),
}

#[derive(Args)]
struct GenerateArgs {
    /// Output directory.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    #[arg(long, default_value_t = 100)]
    n: usize,
    /// Number of conglomerate cells.
    #[arg(long, default_value_t = 3)]
    conglomerates: usize,
    /// Vehicle capacity level (S, M or L).
    #[arg(long, default_value = "S", value_parser = parse_level)]
    vehicle_capacity: Level,
    #[arg(long, default_value = "S", value_parser = parse_level)]
    facility_cost: Level,
    #[arg(long, default_value = "S", value_parser = parse_level)]
    facility_capacity: Level,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Emit the 27 instances of the large-instance design instead.
    #[arg(long, conflicts_with = "lemma3")]
    xl_design: bool,
    /// Emit the lower-bound gap family with `n` clients instead.
    #[arg(long)]
    lemma3: Option<usize>,
    /// Write the structured (JSON) format.
    #[arg(long)]
    json: bool,
}

#[derive(Args, Clone)]
struct RunArgs {
    #[arg(long, default_value = "ls-dts")]
    variant: Variant,
    #[arg(long, default_value = "1", value_parser = parse_rational)]
    epsilon: Rational,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Seconds; defaults depend on the instance size.
    #[arg(long)]
    time_limit_total: Option<f64>,
    /// Seconds without improvement before a search stops.
    #[arg(long)]
    time_limit_improve: Option<f64>,
    /// Largest facilities × clients product solved exactly for the bound.
    #[arg(long, default_value_t = lowerbounds::EXACT_CFL_CAP)]
    exact_cfl_cap: usize,
    /// Lower bound computation: exact, heuristic or skip.
    #[arg(long, default_value = "exact", value_parser = parse_bound_policy)]
    bounds: BoundPolicy,
}

#[derive(Args)]
struct SolveArgs {
    instance: PathBuf,
    #[command(flatten)]
    run: RunArgs,
    /// Solution file to write.
    #[arg(long)]
    out: Option<PathBuf>,
    /// CSV report with one row.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct BoundsArgs {
    instance: PathBuf,
    #[arg(long, default_value_t = lowerbounds::EXACT_CFL_CAP)]
    exact_cfl_cap: usize,
    /// Local search estimate instead of the exact facility location bound.
    #[arg(long)]
    heuristic: bool,
    #[arg(long)]
    time_limit_total: Option<f64>,
}

#[derive(Args)]
struct OracleArgs {
    instance: PathBuf,
    /// Write the optimal solution here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    /// Directory with `.clr` or `.json` instances.
    dir: PathBuf,
    #[command(flatten)]
    run: RunArgs,
    /// Additional variants; `--variant` is always included.
    #[arg(long = "also", value_delimiter = ',')]
    also: Vec<Variant>,
    #[arg(long, default_value_t = 1)]
    workers: usize,
    /// CSV report path; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    json: Option<PathBuf>,
    /// Keep measured runtimes in the report.
    #[arg(long)]
    timings: bool,
}

#[derive(Args)]
struct VerifyArgs {
    instance: PathBuf,
    solution: PathBuf,
    /// Facility slack in multiples of the vehicle capacity; 0 is strict.
    #[arg(long, default_value = "0", value_parser = parse_rational)]
    epsilon: Rational,
}

#[derive(Args)]
struct PlotArgs {
    report: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_level(s: &str) -> std::result::Result<Level, String> {
    let mut chars = s.chars();
    match (chars.next().and_then(|c| Level::from_letter(c.to_ascii_lowercase())), chars.next()) {
        (Some(l), None) => Ok(l),
        _ => Err(format!("expected S, M or L, got {s:?}")),
    }
}

fn parse_rational(s: &str) -> std::result::Result<Rational, String> {
    rational::parse(s).map_err(|e| e.to_string())
}

fn parse_bound_policy(s: &str) -> std::result::Result<BoundPolicy, String> {
    match s {
        "exact" => Ok(BoundPolicy::Exact),
        "heuristic" => Ok(BoundPolicy::Heuristic),
        "skip" => Ok(BoundPolicy::Skip),
        _ => Err(format!("expected exact, heuristic or skip, got {s:?}")),
    }
}

fn seconds(s: Option<f64>) -> Result<Option<Duration>> {
    s.map(|x| Duration::try_from_secs_f64(x).context("time limits must be non-negative seconds"))
        .transpose()
}

fn load(path: &Path) -> Result<Instance> {
    let inst = io::read_instance(path).with_context(|| format!("reading {}", path.display()))?;
    if let Some(v) = validate_instance(&inst).first() {
        bail!("{}: invalid instance: {}", path.display(), v.detail);
    }
    Ok(inst)
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

impl RunArgs {
    fn config(&self, variant: Variant, inst: &Instance) -> Result<VariantConfig> {
        let (total, improve) = pipeline::default_time_limits(inst.num_clients());
        let total = seconds(self.time_limit_total)?.unwrap_or(total);
        let improve = seconds(self.time_limit_improve)?.unwrap_or(improve);
        let mut cfg = variant.config().with_time_limits(Some(total), Some(improve));
        cfg.epsilon = self.epsilon;
        cfg.seed = self.seed;
        cfg.exact_cfl_cap = self.exact_cfl_cap;
        cfg.bounds = self.bounds;
        cfg.bound_budget.total = Some(total);
        cfg.validate()?;
        Ok(cfg)
    }
}

fn generate(a: GenerateArgs) -> Result<()> {
    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    let ext = if a.json { "json" } else { "clr" };
    let mut instances = Vec::new();
    if let Some(n) = a.lemma3 {
        if n < 2 {
            bail!("--lemma3 needs at least 2 clients");
        }
        instances.push(generator::lemma3_family(n));
    } else {
        let params = if a.xl_design {
            generator::xl_design(a.seed)
        } else {
            vec![GenParams {
                n: a.n,
                conglomerates: a.conglomerates,
                vehicle_capacity: a.vehicle_capacity,
                facility_cost: a.facility_cost,
                facility_capacity: a.facility_capacity,
                seed: a.seed,
            }]
        };
        for p in &params {
            instances.push(generator::generate(p)?.instance);
        }
    }
    for inst in &instances {
        let path = a.out.join(format!("{}.{ext}", inst.name));
        io::write_instance_file(&path, inst)?;
        println!("{}", path.display());
    }
    Ok(())
}

fn solve(a: SolveArgs) -> Result<()> {
    let inst = load(&a.instance)?;
    let cfg = a.run.config(a.run.variant, &inst)?;
    let r = pipeline::run(&inst, &cfg)?;
    if let Some(out) = &a.out {
        write(out, &io::write_solution(&inst, &r.solution))?;
    }
    let row = ReportRow::new(&inst.name, &a.run.variant.to_string(), &cfg.epsilon, &r);
    if let Some(path) = &a.report {
        write(path, &io::write_report_csv(&[row.clone()])?)?;
    }
    println!("cost {}", io::sig9(r.evaluation.total_cost));
    println!("feasible_strict {}", r.evaluation.feasible_strict);
    println!("feasible_relaxed {}", r.evaluation.feasible_relaxed);
    println!("max_relative_excess {}", io::sig9(r.evaluation.max_relative_excess));
    if let Some(b) = &r.bounds {
        println!("lower_bound {} ({:?})", io::sig9(b.best_bound), b.which);
    }
    if let Some(g) = row.gap_lb {
        println!("gap_lb {}", io::sig9(g));
    }
    if r.interrupted {
        println!("interrupted true");
    }
    Ok(())
}

fn bounds(a: BoundsArgs) -> Result<()> {
    let inst = load(&a.instance)?;
    let mode = if a.heuristic { BoundMode::Heuristic } else { BoundMode::Exact };
    let (total, _) = pipeline::default_time_limits(inst.num_clients());
    let budget = clr_core::cfl::CflBudget::with_total(seconds(a.time_limit_total)?.unwrap_or(total));
    let report = lowerbounds::bounds(&inst, mode, a.exact_cfl_cap, &budget)?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

fn oracle(a: OracleArgs) -> Result<()> {
    let inst = load(&a.instance)?;
    let r = brute_force_opt(&inst, &OracleCaps::default())?;
    println!("opt {}", io::sig9(r.opt));
    println!("exact {}", r.exact);
    if let Some(out) = &a.out {
        write(out, &io::write_solution(&inst, &r.solution))?;
    }
    Ok(())
}

fn bench(a: BenchArgs) -> Result<()> {
    let mut paths: Vec<PathBuf> = fs::read_dir(&a.dir)
        .with_context(|| format!("reading {}", a.dir.display()))?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<_>>()?;
    paths.retain(|p| p.extension().is_some_and(|e| e == "clr" || e == "json"));
    paths.sort();
    if paths.is_empty() {
        bail!("no instance files in {}", a.dir.display());
    }
    let mut variants = vec![a.run.variant];
    for v in &a.also {
        if !variants.contains(v) {
            variants.push(*v);
        }
    }
    let jobs: Vec<(&PathBuf, Variant)> =
        paths.iter().flat_map(|p| variants.iter().map(move |&v| (p, v))).collect();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(a.workers.max(1)).build()?;
    let rows: Vec<ReportRow> = pool.install(|| {
        jobs.par_iter()
            .map(|&(path, variant)| -> Result<ReportRow> {
                let inst = load(path)?;
                let cfg = a.run.config(variant, &inst)?;
                let r = pipeline::run(&inst, &cfg).with_context(|| format!("solving {}", path.display()))?;
                let row = ReportRow::new(&inst.name, &variant.to_string(), &cfg.epsilon, &r);
                Ok(if a.timings { row } else { row.without_timings() })
            })
            .collect::<Result<_>>()
    })?;
    let csv = io::write_report_csv(&rows)?;
    match &a.out {
        Some(path) => write(path, &csv)?,
        None => print!("{csv}"),
    }
    if let Some(path) = &a.json {
        write(path, &serde_json::to_string_pretty(&rows)?)?;
    }
    Ok(())
}

fn verify(a: VerifyArgs) -> Result<bool> {
    let inst = load(&a.instance)?;
    let text = fs::read_to_string(&a.solution).with_context(|| format!("reading {}", a.solution.display()))?;
    let sol = io::parse_solution(&text, &inst)?;
    let e = evaluate(&inst, &sol, &a.epsilon)?;
    let ok = e.within_slack(&inst, &a.epsilon);
    println!("cost {}", io::sig9(e.total_cost));
    println!("feasible_strict {}", e.feasible_strict);
    println!("within_slack {ok}");
    for p in &e.violations {
        eprintln!("violation: {p}");
    }
    Ok(ok)
}

fn plotdata(a: PlotArgs) -> Result<()> {
    let text = fs::read_to_string(&a.report).with_context(|| format!("reading {}", a.report.display()))?;
    let rows = io::read_report_csv(&text)?;
    let out = io::plot_data(&rows);
    match &a.out {
        Some(path) => write(path, &out),
        None => {
            print!("{out}");
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Generate(a) => generate(a),
        Command::Solve(a) => solve(a),
        Command::Bounds(a) => bounds(a),
        Command::Oracle(a) => oracle(a),
        Command::Bench(a) => bench(a),
        Command::Verify(a) => match verify(a) {
            Ok(true) => Ok(()),
            Ok(false) => return ExitCode::from(1),
            Err(e) => Err(e),
        },
        Command::Plotdata(a) => plotdata(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
