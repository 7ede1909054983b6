//! `gatecheck`: batch runner for the confidence-gate diagnostics.
//!
//! Every subcommand writes a report bundle (`<command>.json`, `<command>.txt`
//! and one CSV per table) into the output directory and prints the report
//! to stdout in the chosen format. Exit status is 0 on success (acceptance
//! band misses only print WARN lines), 2 when a hard invariant fails, and 1
//! on any error.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use gatecheck::config::ExperimentConfig;
use gatecheck::dataset::{load_outcome_stream, load_ratings, write_outcome_stream, write_ratings_csv};
use gatecheck::experiments::{
    config_value, curve_report, diagnose, load_records, run_adaptive, run_claims, run_confidence, run_exceptions,
    run_fit, run_split, run_synth, stream_curve, StreamMode,
};
use gatecheck::report::{num, Format, Report, Table};
use gatecheck::synthetic::generate;
use gatecheck::{Error, Result};

#[derive(Parser, Debug)]
#[command(name = "gatecheck", version, about = "Check whether a confidence gate is monotonically beneficial")]
struct Cli {
    /// TOML experiment config; built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override every seed in the config (split, backbone, ensemble, half split, synthetic).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory for report bundles (overrides `output.dir`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// What to print on stdout.
    #[arg(long, global = true, value_enum, default_value_t = FormatArg::Text)]
    format: FormatArg,
    /// Directory that relative dataset paths resolve against.
    #[arg(long, global = true, env = "GATECHECK_DATA_DIR", default_value = "data")]
    data_dir: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum FormatArg {
    Json,
    Csv,
    Text,
}

impl From<FormatArg> for Format {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Json => Format::Json,
            FormatArg::Csv => Format::Csv,
            FormatArg::Text => Format::Text,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ModeArg {
    Accuracy,
    Regression,
}

impl From<ModeArg> for StreamMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Accuracy => StreamMode::Accuracy,
            ModeArg::Regression => StreamMode::Regression,
        }
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Validate a ratings file and rewrite it as normalized CSV.
    Ingest {
        /// Ratings file (MovieLens tab-separated or CSV); defaults to the configured dataset.
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Build the configured splits and write train/test CSVs.
    Split,
    /// Fit the factorization per split, save models, report RMSE against baselines.
    Fit,
    /// Compute confidence signals on the first configured split and write them as streams.
    Confidence,
    /// Abstention curve of a confidence,outcome stream.
    Curve {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_enum, default_value_t = ModeArg::Regression)]
        mode: ModeArg,
    },
    /// C1 / C2 / ECE / tier checks on a confidence,outcome stream with a one-line verdict.
    Diagnose {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_enum, default_value_t = ModeArg::Accuracy)]
        mode: ModeArg,
        /// Zone count for the inversion check and ECE (default: diagnostics.c2_bins).
        #[arg(long)]
        bins: Option<usize>,
    },
    /// Residual shift, exception classifier AUC and FP/FN ratios per split.
    Exceptions,
    /// Sequential-block static vs adaptive recalibrated gate on the temporal split.
    Adaptive {
        /// Override adaptive.n_blocks.
        #[arg(long)]
        blocks: Option<usize>,
    },
    /// Simulated structural and contextual worlds over the configured seeds.
    Synth {
        /// Also write the first seed's worlds as rating CSVs into this directory.
        #[arg(long)]
        export: Option<PathBuf>,
    },
    /// Every claim table on the configured dataset.
    Claims,
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.override_seed(s);
    }
    if let Some(o) = &cli.out {
        cfg.output.dir = o.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::InvalidArgument(format!("cannot create {}: {e}", path.display())))
}

fn write_failed(path: &Path, e: std::io::Error) -> Error {
    Error::InvalidArgument(format!("cannot write {}: {e}", path.display()))
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::InvalidArgument(format!("cannot create {}: {e}", dir.display())))
}

fn run(cli: &Cli) -> Result<Report> {
    let cfg = load_config(cli)?;
    let out = cfg.output.dir.clone();
    let report = match &cli.command {
        Command::Ingest { input } => {
            let path = input.clone().unwrap_or_else(|| cfg.data_path(&cli.data_dir));
            let recs = load_ratings(&path)?;
            ensure_dir(&out)?;
            let dest = out.join("ratings.csv");
            write_ratings_csv(create(&dest)?, &recs).map_err(|e| write_failed(&dest, e))?;
            let users: std::collections::BTreeSet<u32> = recs.iter().map(|r| r.user).collect();
            let items: std::collections::BTreeSet<u32> = recs.iter().map(|r| r.item).collect();
            let mut t = Table::new(&["ratings", "users", "items", "first_timestamp", "last_timestamp", "mean_rating"]);
            t.push(vec![
                json!(recs.len()),
                json!(users.len()),
                json!(items.len()),
                json!(recs.iter().map(|r| r.timestamp).min()),
                json!(recs.iter().map(|r| r.timestamp).max()),
                num(recs.iter().map(|r| r.rating).sum::<f64>() / recs.len() as f64),
            ]);
            let mut r = Report::new("ingest", config_value(&cfg), cfg.seeds());
            r.table("dataset", t);
            r.summary.push(format!("NOTE read {}", path.display()));
            r
        }
        Command::Split => {
            let recs = load_records(&cfg, &cli.data_dir)?;
            let (splits, r) = run_split(&recs, &cfg)?;
            ensure_dir(&out)?;
            for s in &splits {
                for (side, rows) in [("train", &s.train), ("test", &s.test)] {
                    let p = out.join(format!("{}_{side}.csv", s.spec.kind.as_str()));
                    write_ratings_csv(create(&p)?, rows).map_err(|e| write_failed(&p, e))?;
                }
            }
            r
        }
        Command::Fit => {
            let recs = load_records(&cfg, &cli.data_dir)?;
            let (fitted, r) = run_fit(&recs, &cfg)?;
            ensure_dir(&out)?;
            for f in &fitted {
                f.model.save(out.join(format!("{}.mf", f.split.spec.kind.as_str())))?;
            }
            r
        }
        Command::Confidence => {
            let recs = load_records(&cfg, &cli.data_dir)?;
            let (streams, r) = run_confidence(&recs, &cfg)?;
            ensure_dir(&out)?;
            for (kind, rows) in &streams {
                let p = out.join(format!("confidence_{}.csv", kind.as_str()));
                write_outcome_stream(create(&p)?, rows).map_err(|e| write_failed(&p, e))?;
            }
            r
        }
        Command::Curve { input, mode } => {
            let stream = load_outcome_stream(input)?;
            let curve = stream_curve(&stream, (*mode).into(), &cfg.diagnostics.fractions)?;
            curve_report(
                &curve,
                json!({"input": input, "mode": StreamMode::from(*mode), "fractions": cfg.diagnostics.fractions}),
            )
        }
        Command::Diagnose { input, mode, bins } => {
            let stream = load_outcome_stream(input)?;
            let bins = bins.unwrap_or(cfg.diagnostics.c2_bins);
            let d = diagnose(&stream, (*mode).into(), bins, &cfg.diagnostics.c1)?;
            d.to_report(json!({"input": input, "mode": d.mode, "bins": bins, "c1": cfg.diagnostics.c1}))
        }
        Command::Exceptions => {
            let recs = load_records(&cfg, &cli.data_dir)?;
            run_exceptions(&recs, &cfg)?
        }
        Command::Adaptive { blocks } => {
            let mut cfg = cfg.clone();
            if let Some(b) = blocks {
                cfg.adaptive.n_blocks = *b;
                cfg.validate()?;
            }
            let recs = load_records(&cfg, &cli.data_dir)?;
            run_adaptive(&recs, &cfg)?.1
        }
        Command::Synth { export } => {
            let (_, r) = run_synth(&cfg)?;
            if let Some(dir) = export {
                ensure_dir(dir)?;
                let seed = cfg.synthetic.seeds.first().copied().unwrap_or(0);
                for (name, spec) in [("structural", cfg.synthetic.structural), ("contextual", cfg.synthetic.contextual)] {
                    let (train, test) = generate(&spec.with_seed(seed))?.to_records();
                    for (side, rows) in [("train", &train), ("test", &test)] {
                        let p = dir.join(format!("{name}_{side}.csv"));
                        write_ratings_csv(create(&p)?, rows).map_err(|e| write_failed(&p, e))?;
                    }
                }
            }
            r
        }
        Command::Claims => {
            let recs = load_records(&cfg, &cli.data_dir)?;
            run_claims(&recs, &cfg)?.1
        }
    };
    let mut report = report;
    report.header.generated_at = SystemTime::now().duration_since(UNIX_EPOCH).ok().map(|d| d.as_secs());
    report.write_bundle(&out)?;
    Ok(report)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(report) => {
            match report.render(cli.format.into()) {
                Ok(s) => print!("{s}"),
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(1);
                }
            }
            if report.passed_invariants() {
                ExitCode::SUCCESS
            } else {
                for f in &report.invariant_failures {
                    eprintln!("invariant failed: {f}");
                }
                ExitCode::from(2)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
