//! Experiment harness CLI: runs the solver and baselines over seeds and
//! parameter sweeps and exports plot-ready CSV/JSON tables.
//!
//! Identical (config, seed) invocations produce byte-identical CSV files:
//! results come out in a fixed order regardless of worker count, and floats
//! are printed with a fixed format.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, ValueEnum};

use uavshare::harness::{parse_grid, run_batch, sweep, Method, SummaryRow, SweepParam};
use uavshare::model::{ScenarioTemplate, TemplateDocument};
use uavshare::pipeline::{SolveParams, SolveReport};
use uavshare::power::Prop1Mode;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Debug, Parser)]
#[command(name = "uavshare", about = "Resource-sharing experiments for UAV-assisted networks")]
struct Args {
    /// Scenario template document (JSON); defaults to the built-in reference setup.
    #[arg(long)]
    config: Option<PathBuf>,

    /// Single seed to run.
    #[arg(long, default_value_t = 0)]
    seed: u64,

    /// Inclusive seed range `A..B`; overrides --seed.
    #[arg(long)]
    seeds: Option<String>,

    /// Comma-separated methods: proposed,rcop,ecop,rpoc,epoc,es. Default: all.
    #[arg(long)]
    methods: Option<String>,

    /// Sweep parameter: theta, beta, delta, num_subchannels.
    #[arg(long)]
    sweep: Option<String>,

    /// Inclusive sweep grid `a:b:step`; required with --sweep.
    #[arg(long)]
    grid: Option<String>,

    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,

    /// Output format.
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,

    /// Use the printed closed-form power expression (omits the 1/ln2 factor).
    #[arg(long)]
    verbatim_prop1: bool,

    /// Worker threads for parallel solves; defaults to all cores.
    #[arg(long)]
    jobs: Option<usize>,

    /// Exit with code 3 when any run fails to converge.
    #[arg(long)]
    strict: bool,
}

fn main() -> ExitCode {
    let args = Args::parse();
    match run(&args) {
        Ok(converged) => {
            if args.strict && !converged {
                eprintln!("strict mode: at least one run did not converge");
                ExitCode::from(3)
            } else {
                ExitCode::SUCCESS
            }
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn load_template(args: &Args) -> anyhow::Result<ScenarioTemplate> {
    let template = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading config {}", path.display()))?;
            let doc: TemplateDocument =
                serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
            doc.template
        }
        None => ScenarioTemplate::default(),
    };
    // validate early so bad configs exit before any work
    uavshare::model::generate_scenario(&template, 0).context("invalid scenario template")?;
    Ok(template)
}

fn parse_seeds(args: &Args) -> anyhow::Result<Vec<u64>> {
    match &args.seeds {
        None => Ok(vec![args.seed]),
        Some(spec) => {
            let (a, b) = spec
                .split_once("..")
                .with_context(|| format!("seed range '{spec}' is not A..B"))?;
            let a: u64 = a.trim().parse().with_context(|| format!("bad seed '{a}'"))?;
            let b: u64 = b.trim().parse().with_context(|| format!("bad seed '{b}'"))?;
            if b < a {
                bail!("seed range '{spec}' is descending");
            }
            Ok((a..=b).collect())
        }
    }
}

fn parse_methods(args: &Args) -> anyhow::Result<Vec<Method>> {
    match &args.methods {
        None => Ok(Method::ALL.to_vec()),
        Some(list) => list
            .split(',')
            .map(|name| name.trim().parse::<Method>().map_err(anyhow::Error::from))
            .collect(),
    }
}

fn run(args: &Args) -> anyhow::Result<bool> {
    if let Some(jobs) = args.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .context("initializing worker pool")?;
    }
    let template = load_template(args)?;
    let seeds = parse_seeds(args)?;
    let methods = parse_methods(args)?;
    let mode = if args.verbatim_prop1 { Prop1Mode::PaperVerbatim } else { Prop1Mode::CorrectDerivation };
    let mut params = SolveParams::default();
    params.power.mode = mode;
    // full traces are only worth carrying when reports are exported
    params.record_traces = args.format == Format::Json && args.sweep.is_none();

    std::fs::create_dir_all(&args.out)
        .with_context(|| format!("creating output directory {}", args.out.display()))?;

    match &args.sweep {
        Some(name) => {
            let param: SweepParam = name.parse()?;
            let grid_spec = args.grid.as_ref().context("--sweep requires --grid a:b:step")?;
            let grid = parse_grid(grid_spec)?;
            let (rows, cells) = sweep(&template, param, &grid, &methods, &seeds, &params)?;
            let csv_path = args.out.join(format!("sweep_{}.csv", param.name()));
            write_csv(&rows, &csv_path)?;
            if args.format == Format::Json {
                let json_path = args.out.join(format!("sweep_{}.json", param.name()));
                std::fs::write(&json_path, serde_json::to_string_pretty(&cells)?)?;
            }
            println!("sweep {} over {} points x {} seeds x {} methods", param.name(), grid.len(), seeds.len(), methods.len());
            println!("{:>12} {:>10} {:>14} {:>14}", "value", "method", "mean_utility", "median");
            for cell in &cells {
                println!(
                    "{:>12} {:>10} {:>14.4} {:>14.4}",
                    cell.value, cell.method, cell.mean_total_utility, cell.median_total_utility
                );
            }
            Ok(true)
        }
        None => {
            let (mut rows, reports) = run_batch(&template, &methods, &seeds, &params)?;
            // keep row order independent of how the batch was parallelized
            rows.sort_by(|a, b| {
                (&a.method, a.seed, a.sp_index).cmp(&(&b.method, b.seed, b.sp_index))
            });
            let csv_path = args.out.join("results.csv");
            write_csv(&rows, &csv_path)?;
            if args.format == Format::Json {
                write_reports(&reports, &args.out)?;
                let rows_json = args.out.join("results.json");
                std::fs::write(&rows_json, serde_json::to_string_pretty(&rows)?)?;
            }
            print_run_summary(&rows, &methods);
            Ok(reports.iter().all(|r| r.converged))
        }
    }
}

fn print_run_summary(rows: &[SummaryRow], methods: &[Method]) {
    println!("{:>10} {:>14} {:>10}", "method", "mean_utility", "converged");
    for method in methods {
        let totals: Vec<&SummaryRow> = rows
            .iter()
            .filter(|r| r.method == method.name() && r.sp_index == 0)
            .collect();
        if totals.is_empty() {
            continue;
        }
        let mean = totals.iter().map(|r| r.total_utility).sum::<f64>() / totals.len() as f64;
        let converged = totals.iter().filter(|r| r.converged).count();
        println!("{:>10} {:>14.4} {:>7}/{}", method.name(), mean, converged, totals.len());
    }
}

fn write_reports(reports: &[SolveReport], out: &Path) -> anyhow::Result<()> {
    for report in reports {
        let path = out.join(format!("report_{}_{}.json", report.method, report.seed));
        std::fs::write(&path, serde_json::to_string_pretty(report)?)
            .with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

fn write_csv(rows: &[SummaryRow], path: &Path) -> anyhow::Result<()> {
    let mut out = String::from(
        "figure_id,method,seed,param_name,param_value,sp_index,revenue,cost,utility,total_utility,iterations,converged\n",
    );
    for r in rows {
        let param_value = match r.param_value {
            Some(v) => format!("{v}"),
            None => String::new(),
        };
        out.push_str(&format!(
            "{},{},{},{},{},{},{:.6},{:.6},{:.6},{:.6},{},{}\n",
            r.figure_id,
            r.method,
            r.seed,
            r.param_name,
            param_value,
            r.sp_index,
            r.revenue,
            r.cost,
            r.utility,
            r.total_utility,
            r.iterations,
            r.converged
        ));
    }
    std::fs::write(path, out).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}
