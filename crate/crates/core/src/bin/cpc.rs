//! `cpc` command-line interface.
//!
//! Exit codes: 0 success, 1 usage or input error, 2 numerical failure.

use std::fs::File;
use std::io::{self, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use nalgebra::DMatrix;

use cpc::alignment::{align_rdms, compute_rdm_labeled, AlignOptions, DistanceMetric, GwOptions, Rdm};
use cpc::experiments::{load_records, run_and_write, summarize, ExperimentConfig};
use cpc::{CpcError, Result};

#[derive(Parser, Debug)]
#[command(name = "cpc", version, about = "Collective predictive coding simulations and representational alignment")]
struct Cli {
    /// Base seed (overrides the config's seed for `simulate`).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output path: a directory for `simulate`/`summarize`, a file otherwise.
    #[arg(long, short, global = true)]
    output: Option<PathBuf>,
    /// Suppress informational output.
    #[arg(long, short, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run an experiment described by a TOML config.
    Simulate { config: PathBuf },
    /// Compare two RDM CSV files (RSA and GW alignment).
    Align {
        a: PathBuf,
        b: PathBuf,
        /// GW regularization; default is scale-adaptive.
        #[arg(long)]
        epsilon: Option<f64>,
        #[arg(long, default_value_t = 10)]
        n_init: usize,
        /// Match items by label rather than by row position.
        #[arg(long)]
        supervised: bool,
    },
    /// Build an RDM from a CSV of points (header row; optional leading
    /// non-numeric label column).
    Rdm {
        points: PathBuf,
        #[arg(long, value_enum, default_value_t = Metric::Euclidean)]
        metric: Metric,
    },
    /// Aggregate run records found in a directory.
    Summarize { dir: PathBuf },
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum Metric {
    Euclidean,
    Cosine,
}

impl From<Metric> for DistanceMetric {
    fn from(m: Metric) -> Self {
        match m {
            Metric::Euclidean => DistanceMetric::Euclidean,
            Metric::Cosine => DistanceMetric::Cosine,
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numerical() { 2 } else { 1 })
        }
    }
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Simulate { config } => simulate(cli, config),
        Command::Align {
            a,
            b,
            epsilon,
            n_init,
            supervised,
        } => align(cli, a, b, *epsilon, *n_init, *supervised),
        Command::Rdm { points, metric } => rdm(cli, points, *metric),
        Command::Summarize { dir } => summarize_dir(cli, dir),
    }
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|e| CpcError::io(path, e))
}

fn emit(cli: &Cli, text: &str) -> Result<()> {
    match &cli.output {
        Some(p) => std::fs::write(p, text).map_err(|e| CpcError::io(p, e)),
        None => {
            let mut out = io::stdout().lock();
            out.write_all(text.as_bytes()).map_err(|e| CpcError::io("<stdout>", e))
        }
    }
}

fn simulate(cli: &Cli, path: &Path) -> Result<()> {
    let mut config = ExperimentConfig::load(path)?;
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(dir) = &cli.output {
        config.output_dir = dir.clone();
    }
    let record = run_and_write(&config)?;
    let report = summarize(std::slice::from_ref(&record))?;
    report.write_to(&config.output_dir)?;
    if !cli.quiet {
        eprintln!(
            "{} series in {:.2}s -> {}",
            record.series.len(),
            record.wall_clock_seconds,
            config.output_dir.display()
        );
        for c in &report.conditions {
            let ari = &c.final_metrics["ari"];
            eprintln!(
                "  {:<17} final ARI {:.3} ± {:.3} (n={})",
                c.condition.as_str(),
                ari.mean.unwrap_or(f64::NAN),
                ari.std.unwrap_or(f64::NAN),
                ari.n
            );
        }
    }
    Ok(())
}

fn align(cli: &Cli, a: &Path, b: &Path, epsilon: Option<f64>, n_init: usize, supervised: bool) -> Result<()> {
    let ra = Rdm::read_csv(open(a)?)?;
    let rb = Rdm::read_csv(open(b)?)?;
    let opts = AlignOptions {
        gw: GwOptions {
            epsilon,
            n_init,
            seed: cli.seed.unwrap_or(0),
            ..GwOptions::default()
        },
        supervised,
        ..AlignOptions::default()
    };
    let report = align_rdms(&ra, &rb, &opts)?;
    emit(cli, &(report.to_json()? + "\n"))
}

fn read_points(path: &Path) -> Result<(DMatrix<f64>, Vec<String>)> {
    let mut reader = csv::Reader::from_reader(open(path)?);
    let mut labels = Vec::new();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec?;
        let first_numeric = rec.get(0).is_some_and(|f| f.trim().parse::<f64>().is_ok());
        let (label, fields) = if first_numeric {
            (i.to_string(), rec.iter().collect::<Vec<_>>())
        } else {
            (rec.get(0).unwrap_or_default().to_string(), rec.iter().skip(1).collect())
        };
        let row = fields
            .iter()
            .map(|f| {
                f.trim()
                    .parse::<f64>()
                    .map_err(|_| CpcError::InvalidInput(format!("row {}: '{f}' is not a number", i + 1)))
            })
            .collect::<Result<Vec<_>>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(CpcError::DimensionMismatch(format!(
                    "row {} has {} values, expected {}",
                    i + 1,
                    row.len(),
                    first.len()
                )));
            }
        }
        labels.push(label);
        rows.push(row);
    }
    let d = rows.first().map_or(0, |r| r.len());
    if d == 0 {
        return Err(CpcError::InvalidInput(format!("{} has no numeric columns", path.display())));
    }
    Ok((DMatrix::from_fn(rows.len(), d, |i, j| rows[i][j]), labels))
}

fn rdm(cli: &Cli, points: &Path, metric: Metric) -> Result<()> {
    let (x, labels) = read_points(points)?;
    let r = compute_rdm_labeled(&x, labels, metric.into())?;
    let mut buf = Vec::new();
    r.write_csv(&mut buf)?;
    emit(cli, &String::from_utf8(buf).expect("csv output is utf-8"))
}

fn summarize_dir(cli: &Cli, dir: &Path) -> Result<()> {
    let records = load_records(dir)?;
    let report = summarize(&records)?;
    let out = cli.output.clone().unwrap_or_else(|| dir.to_path_buf());
    report.write_to(&out)?;
    if !cli.quiet {
        println!("{}", report.to_json()?);
    }
    Ok(())
}
