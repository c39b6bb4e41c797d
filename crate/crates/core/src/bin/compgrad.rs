use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use compgrad::experiments::{
    fit_scaling, fit::mean_queries, read_csv, run, scaling_fits, summarize, write_csv,
    ExperimentConfig, Format, Predictor, Suite, Summary,
};
use compgrad::{Error, Result};

/// Comparison-oracle gradient testing and estimation experiments.
#[derive(Parser)]
#[command(name = "compgrad", version)]
struct Cli {
    /// Caps the worker threads used for trials.
    #[arg(long, env = "COMPGRAD_THREADS", global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a suite and write its per-trial records.
    Run(RunArgs),
    /// Fit mean query counts from a records CSV against a size predictor.
    Fit(FitArgs),
    /// Summarize a records CSV: per-cell success rates and scaling fits.
    Report(ReportArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Suite to run with its default grid.
    #[arg(long, conflicts_with = "config", required_unless_present = "config")]
    suite: Option<String>,
    /// TOML experiment configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Base seed; overrides the configuration.
    #[arg(long)]
    seed: Option<u64>,
    /// Replicas per cell; overrides the configuration.
    #[arg(long)]
    replicas: Option<usize>,
    /// Output path; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// `csv` writes records (and a `.summary.json` next to `--out`);
    /// `json` writes records and summary as one document.
    #[arg(long)]
    format: Option<String>,
}

#[derive(Args)]
struct FitArgs {
    /// Records CSV written by `run`.
    input: PathBuf,
    /// `n`, `log_inv_eps` or `n_log_inv_eps`.
    #[arg(long, default_value = "n")]
    predictor: String,
}

#[derive(Args)]
struct ReportArgs {
    /// Records CSV written by `run`.
    input: PathBuf,
    /// `csv` prints a table, `json` the full summary.
    #[arg(long, default_value = "csv")]
    format: String,
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn command_run(args: RunArgs) -> Result<()> {
    let mut config = match (&args.config, &args.suite) {
        (Some(path), _) => ExperimentConfig::from_path(path)?,
        (None, Some(suite)) => ExperimentConfig::for_suite(suite.parse::<Suite>()?),
        (None, None) => return Err(Error::Config("need --suite or --config".into())),
    };
    if let Some(seed) = args.seed {
        config.seeds.base = seed;
    }
    if let Some(replicas) = args.replicas {
        config.seeds.replicas = replicas;
    }
    if let Some(out) = args.out {
        config.output.path = Some(out);
    }
    if let Some(format) = &args.format {
        config.output.format = format.parse()?;
    }
    config.validate()?;
    let out = run(&config)?;
    let path = config.output.path.as_deref();
    match config.output.format {
        Format::Csv => {
            let mut w = output(path)?;
            write_csv(&out.records, &mut w)?;
            w.flush()?;
            let summary = out.summary.to_json()?;
            match path {
                Some(p) => std::fs::write(p.with_extension("summary.json"), summary)?,
                None => eprintln!("{summary}"),
            }
        }
        Format::Json => {
            let mut w = output(path)?;
            let doc = serde_json::json!({ "records": out.records, "summary": out.summary });
            serde_json::to_writer_pretty(&mut w, &doc)?;
            writeln!(w)?;
            w.flush()?;
        }
    }
    let errors: u64 = out.summary.cells.iter().map(|c| c.errors).sum();
    if errors > 0 {
        eprintln!(
            "{errors} trial(s) failed in cells {:?}",
            out.summary.failed_cells
        );
    }
    Ok(())
}

fn load(path: &Path) -> Result<Vec<compgrad::experiments::RunRecord>> {
    read_csv(BufReader::new(File::open(path)?))
}

fn command_fit(args: FitArgs) -> Result<()> {
    let records = load(&args.input)?;
    let predictor: Predictor = args.predictor.parse()?;
    let fit = fit_scaling(&records, predictor)?;
    let points = mean_queries(&records, predictor)?;
    let doc = serde_json::json!({ "predictor": predictor, "points": points, "fit": fit });
    println!("{}", serde_json::to_string_pretty(&doc)?);
    Ok(())
}

fn print_table(summary: &Summary) {
    println!(
        "{:>5} {:>6} {:>8} {:>10} {:>11} {:>4} {:>7} {:>8} {:>17} {:>10}",
        "cell", "n", "epsilon", "model", "tie_policy", "case", "trials", "success", "95% interval", "queries"
    );
    let opt = |v: &Option<String>| v.clone().unwrap_or_else(|| "-".into());
    for c in &summary.cells {
        println!(
            "{:>5} {:>6} {:>8} {:>10} {:>11} {:>4} {:>7} {:>8.4} {:>17} {:>10.1}",
            c.cell,
            c.n,
            c.epsilon.map_or_else(|| "-".into(), |e| e.to_string()),
            opt(&c.model),
            opt(&c.tie_policy),
            opt(&c.case),
            c.trials,
            c.success_rate,
            format!("[{:.3}, {:.3}]", c.interval.lower, c.interval.upper),
            c.queries.mean,
        );
    }
    for f in &summary.fits {
        match &f.fit {
            Some(fit) => println!(
                "fit queries ~ {} ({}): slope {:.4}, intercept {:.2}, R^2 {:.4}",
                f.predictor, f.group, fit.slope, fit.intercept, fit.r_squared
            ),
            None => println!(
                "fit queries ~ {} ({}): skipped, {}",
                f.predictor,
                f.group,
                f.skipped.as_deref().unwrap_or("")
            ),
        }
    }
    if !summary.failed_cells.is_empty() {
        println!("cells with failed trials: {:?}", summary.failed_cells);
    }
}

fn command_report(args: ReportArgs) -> Result<()> {
    let records = load(&args.input)?;
    let suite = records.first().map(|r| r.suite.clone()).unwrap_or_default();
    let summary = summarize(&suite, &records, scaling_fits(&suite, &records));
    match args.format.parse::<Format>()? {
        Format::Json => println!("{}", summary.to_json()?),
        Format::Csv => print_table(&summary),
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(threads) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(threads.max(1))
            .build_global()
        {
            eprintln!("error: {e}");
            return ExitCode::FAILURE;
        }
    }
    let result = match cli.command {
        Command::Run(args) => command_run(args),
        Command::Fit(args) => command_fit(args),
        Command::Report(args) => command_report(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
