//! `cocluster`: sample bipartite graphs, fit co-clustering models and run the rate experiments.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use cocluster_core::harness::parse_graphon_spec;
use cocluster_core::{
    emit_report, fit_blockmodel_als, fit_dot_product_model, matrix_from_csv, matrix_to_csv, parse_results_csv,
    run_experiment, sample_bipartite, spectral_cocluster, Error, Experiment, ExperimentConfig, ModelFamily,
    RateResult, Result,
};
use cocluster_core::nalgebra::DMatrix;

#[derive(Parser)]
#[command(name = "cocluster", version, about = "Co-clustering of bipartite graphs sampled from step graphons")]
struct Cli {
    /// Experiment configuration (`key = value` lines).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed; overrides the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw one bipartite graph; writes x.csv, y.csv, w.csv and a.csv.
    Sample {
        /// `four_block`, `constant <p>`, `steps <rows> | <cols> | <values>` or a graphon file.
        #[arg(long, default_value = "four_block")]
        graphon: String,
        #[arg(long)]
        m: usize,
        #[arg(long)]
        n: usize,
    },
    /// Fit a co-clustering model to an adjacency matrix CSV.
    Fit {
        /// Adjacency matrix, one row per line.
        #[arg(long)]
        input: PathBuf,
        #[arg(long, short = 'k')]
        k: usize,
        #[arg(long, short = 'd', default_value_t = 0)]
        d: usize,
        /// Model family 1..4.
        #[arg(long, default_value_t = 1)]
        family: u8,
        #[arg(long, default_value_t = 50)]
        max_iters: usize,
    },
    /// Population-matching error of candidate labellings across sample sizes.
    #[command(name = "verify-th1")]
    MatchingRate,
    /// Centering-corrected risk gap across sample sizes.
    #[command(name = "verify-th2")]
    RiskGap,
    /// Concentration of block densities over a family of labellings.
    #[command(name = "lemma-suite")]
    Concentration,
    /// Rebuild summary.csv and rate.svg from an existing results.csv.
    Report {
        /// Directory holding results.csv (defaults to --out).
        #[arg(long)]
        input: Option<PathBuf>,
    },
}

fn out_dir(cli: &Cli, fallback: &str) -> PathBuf {
    cli.out.clone().unwrap_or_else(|| PathBuf::from(fallback))
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text)?;
    Ok(())
}

fn column(values: impl IntoIterator<Item = f64>) -> DMatrix<f64> {
    let v: Vec<f64> = values.into_iter().collect();
    DMatrix::from_column_slice(v.len(), 1, &v)
}

fn print_summary(result: &RateResult, dir: &Path) {
    println!("experiment {}: {} rows written to {}", result.experiment, result.rows.len(), dir.display());
    println!("n,reps,median_max_error (max over candidates is a lower bound on the sup)");
    for s in &result.summary {
        println!("{},{},{:.6e}", s.n, s.reps, s.median_max_error);
    }
    match result.slope {
        Some((slope, se)) => println!("slope {slope:.4} ± {se:.4}"),
        None => println!("slope unavailable (fewer than 3 sample sizes)"),
    }
}

fn run_suite(cli: &Cli, experiment: Experiment) -> Result<()> {
    let (mut cfg, configured_out) = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)?;
            let cfg = ExperimentConfig::parse(&text, experiment, path.parent())?;
            (cfg, ExperimentConfig::output_path(&text))
        }
        None => (ExperimentConfig::defaults(experiment), None),
    };
    if let Some(seed) = cli.seed {
        cfg.master_seed = seed;
    }
    let dir = cli
        .out
        .clone()
        .or(configured_out.map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out").join(experiment.name()));
    let result = run_experiment(&cfg, cli.jobs)?;
    emit_report(&result, &dir)?;
    print_summary(&result, &dir);
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Sample { graphon, m, n } => {
            let g = parse_graphon_spec(graphon, None)?;
            let sample = sample_bipartite(&g, *m, *n, cli.seed.unwrap_or(0))?;
            let dir = out_dir(cli, "out/sample");
            std::fs::create_dir_all(&dir)?;
            write(&dir.join("x.csv"), &matrix_to_csv(&column(sample.x.iter().copied())))?;
            write(&dir.join("y.csv"), &matrix_to_csv(&column(sample.y.iter().copied())))?;
            write(&dir.join("w.csv"), &matrix_to_csv(&sample.w))?;
            write(&dir.join("a.csv"), &matrix_to_csv(&sample.a))?;
            println!("sampled {m}x{n} graph into {}", dir.display());
            Ok(())
        }
        Command::Fit {
            input,
            k,
            d,
            family,
            max_iters,
        } => {
            let a = matrix_from_csv(&std::fs::read_to_string(input)?)?;
            let family = ModelFamily::from_id(*family)?;
            let seed = cli.seed.unwrap_or(0);
            let dir = out_dir(cli, "out/fit");
            std::fs::create_dir_all(&dir)?;
            let (rows, cols, theta, trace, vectors) = if family == ModelFamily::Blockmodel {
                let init = spectral_cocluster(&a, *k, seed)?;
                let fit = fit_blockmodel_als(&a, *k, &init, *max_iters)?;
                (fit.labels.rows, fit.labels.cols, fit.theta.into_inner(), fit.trace, None)
            } else {
                let fit = fit_dot_product_model(&a, *k, *d, family, seed, *max_iters)?;
                let vecs = |l: &cocluster_core::GeneralLatent| {
                    DMatrix::from_row_slice(l.len(), l.d(), l.vectors())
                };
                let v = (vecs(&fit.row), vecs(&fit.col));
                (fit.row.labels().to_vec(), fit.col.labels().to_vec(), fit.theta.into_inner(), fit.trace, Some(v))
            };
            write(&dir.join("row_labels.csv"), &matrix_to_csv(&column(rows.iter().map(|&l| l as f64))))?;
            write(&dir.join("col_labels.csv"), &matrix_to_csv(&column(cols.iter().map(|&l| l as f64))))?;
            write(&dir.join("theta.csv"), &matrix_to_csv(&theta))?;
            write(&dir.join("trace.csv"), &matrix_to_csv(&column(trace.iter().copied())))?;
            if let Some((rv, cv)) = vectors {
                write(&dir.join("row_vectors.csv"), &matrix_to_csv(&rv))?;
                write(&dir.join("col_vectors.csv"), &matrix_to_csv(&cv))?;
            }
            println!(
                "fitted family {} with K={k}: risk {:.6e} after {} sweeps, outputs in {}",
                family.id(),
                trace.last().copied().unwrap_or(f64::NAN),
                trace.len().saturating_sub(1),
                dir.display()
            );
            Ok(())
        }
        Command::MatchingRate => run_suite(cli, Experiment::MatchingRate),
        Command::RiskGap => run_suite(cli, Experiment::RiskGap),
        Command::Concentration => run_suite(cli, Experiment::Concentration),
        Command::Report { input } => {
            let src = input.clone().or_else(|| cli.out.clone()).ok_or_else(|| {
                Error::InvalidArgument("report needs --input or --out pointing at a results directory".into())
            })?;
            let rows = parse_results_csv(&std::fs::read_to_string(src.join("results.csv"))?)?;
            let name = rows.first().map(|r| r.experiment.clone()).unwrap_or_default();
            let result = RateResult::from_rows(&name, rows);
            let dir = cli.out.clone().unwrap_or(src);
            emit_report(&result, &dir)?;
            print_summary(&result, &dir);
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
