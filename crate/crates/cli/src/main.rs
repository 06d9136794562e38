//! `sensdetect` command-line tool.

mod exit;
mod output;

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use sensdetect::detector::{sample_for, DEFAULT_MAX_N, DEFAULT_SEED};
use sensdetect::forest::ForestConfig;
use sensdetect::synth::{generate, NoiseKind, Planted, SynthSpec};
use sensdetect::validation::{kernel_consistency, validate, ValidationConfig};
use sensdetect::{
    audit, encode, load_dataset_path, DependenceConfig, DependenceReport, DetectorConfig,
    EncodedDataset, KernelKind, Schema, Threshold,
};

use exit::ConfigError;
use output::Outputs;

#[derive(Debug, Parser)]
#[command(name = "sensdetect", version, about = "Detect sensitive features with kernel dependence measures")]
struct Cli {
    /// Worker threads (default: all available cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(tag = "command", rename_all = "lowercase")]
enum Command {
    /// Score every feature against the label and flag sensitive ones.
    Audit {
        #[command(flatten)]
        #[serde(flatten)]
        data: DataArgs,
        #[command(flatten)]
        #[serde(flatten)]
        detect: DetectArgs,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Audit, then cross-validate a random forest and measure group fairness.
    Validate {
        #[command(flatten)]
        #[serde(flatten)]
        data: DataArgs,
        #[command(flatten)]
        #[serde(flatten)]
        detect: DetectArgs,
        #[command(flatten)]
        #[serde(flatten)]
        forest: ForestArgs,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Audit with both kernels and compare the detections.
    Consistency {
        #[command(flatten)]
        #[serde(flatten)]
        data: DataArgs,
        #[command(flatten)]
        #[serde(flatten)]
        detect: DetectArgs,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Write the one-hot encoded dataset as CSV.
    Encode {
        #[command(flatten)]
        #[serde(flatten)]
        data: DataArgs,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Generate a synthetic dataset with planted group/label dependence.
    Synth {
        #[arg(long, default_value_t = 1000)]
        n: usize,
        /// Corruption probability of each planted indicator, comma separated.
        #[arg(long, value_delimiter = ',', default_value = "0.1,0.25,0.5")]
        planted: Vec<f64>,
        /// Expected share of rows in each planted group.
        #[arg(long)]
        group_fraction: Option<f64>,
        #[arg(long, default_value_t = 3)]
        noise: usize,
        #[arg(long, value_enum, default_value_t = NoiseArg::Binary)]
        noise_kind: NoiseArg,
        #[arg(long, default_value_t = 0.5)]
        positive_rate: f64,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

#[derive(Debug, Args, Serialize)]
struct DataArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    schema: PathBuf,
    /// Rescale numeric columns to zero mean and unit variance.
    #[arg(long)]
    standardize: bool,
}

#[derive(Debug, Args, Serialize)]
struct DetectArgs {
    #[arg(long, default_value_t = KernelKind::Rbf)]
    kernel: KernelKind,
    #[arg(long, default_value_t = sensdetect::dependence::DEFAULT_EPSILON)]
    epsilon: f64,
    /// `median` or a fixed score.
    #[arg(long, default_value = "median")]
    threshold: Threshold,
    /// Row cap for the label-stratified subsample; 0 analyses every row.
    #[arg(long, default_value_t = DEFAULT_MAX_N)]
    max_n: usize,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
}

#[derive(Debug, Args, Serialize)]
struct ForestArgs {
    #[arg(long, default_value_t = 10)]
    folds: usize,
    #[arg(long, default_value_t = 100)]
    trees: usize,
    /// Train the classifier without the detected sensitive features.
    #[arg(long)]
    exclude_sensitive_from_training: bool,
}

#[derive(Debug, Clone, Copy, clap::ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum NoiseArg {
    Binary,
    Numeric,
}

#[derive(Serialize)]
struct RunRecord<'a> {
    version: &'static str,
    threads: usize,
    #[serde(flatten)]
    command: &'a Command,
}

impl DetectArgs {
    fn config(&self, kernel: KernelKind) -> Result<DetectorConfig> {
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(ConfigError::new(format!("--epsilon must be positive, got {}", self.epsilon)).into());
        }
        if self.max_n == 1 {
            return Err(ConfigError::new("--max-n must be 0 (no cap) or at least 2").into());
        }
        Ok(DetectorConfig {
            dependence: DependenceConfig::new(kernel, self.epsilon),
            threshold: self.threshold,
            max_n: (self.max_n > 0).then_some(self.max_n),
            seed: self.seed,
        })
    }
}

fn load(args: &DataArgs) -> Result<EncodedDataset> {
    let schema = Schema::from_path(&args.schema)
        .with_context(|| format!("reading schema {}", args.schema.display()))?;
    let dataset = load_dataset_path(&args.data, &schema)
        .with_context(|| format!("reading data {}", args.data.display()))?;
    if dataset.dropped_rows() > 0 {
        eprintln!("dropped {} rows with missing values", dataset.dropped_rows());
    }
    let mut encoded = encode(&dataset);
    if args.standardize {
        encoded.standardize_numeric();
    }
    Ok(encoded)
}

fn audited(encoded: &EncodedDataset, config: &DetectorConfig) -> Result<(EncodedDataset, DependenceReport)> {
    let report = audit(encoded, config)?;
    Ok((sample_for(encoded, config), report))
}

fn run(cli: &Cli) -> Result<()> {
    let threads = match cli.threads {
        Some(0) => return Err(ConfigError::new("--threads must be at least 1").into()),
        Some(t) => {
            rayon::ThreadPoolBuilder::new()
                .num_threads(t)
                .build_global()
                .context("starting worker pool")?;
            t
        }
        None => rayon::current_num_threads(),
    };
    let mut outputs = Outputs::default();
    let out: &Path = match &cli.command {
        Command::Audit { data, detect, out } => {
            let config = detect.config(detect.kernel)?;
            let (_, report) = audited(&load(data)?, &config)?;
            let table = report.to_table();
            print!("{table}");
            outputs.add("report.json", report.to_json());
            outputs.add("report.txt", table);
            out
        }
        Command::Validate { data, detect, forest, out } => {
            if forest.trees == 0 {
                return Err(ConfigError::new("--trees must be at least 1").into());
            }
            let config = detect.config(detect.kernel)?;
            let (sample, report) = audited(&load(data)?, &config)?;
            let vconfig = ValidationConfig {
                folds: forest.folds,
                forest: ForestConfig { trees: forest.trees, ..Default::default() },
                exclude_sensitive: forest.exclude_sensitive_from_training,
                seed: detect.seed,
            };
            let validation = validate(&sample, &report, &vconfig)?;
            let table = report.to_table();
            print!("{table}");
            println!("mean accuracy {:.4}", validation.mean_accuracy);
            let rho = validation.spearman.values();
            for (name, r) in sensdetect::fairness::MEASURE_NAMES.iter().zip(rho) {
                match r {
                    Some(r) => println!("spearman(nocco, {name}) = {r:.3}"),
                    None => println!("spearman(nocco, {name}) undefined"),
                }
            }
            if validation.low_signal {
                println!("warning: every group scores below {}", sensdetect::validation::LOW_SIGNAL_NOCCO);
            }
            let mut scatter = Vec::new();
            validation.write_scatter(&mut scatter).context("formatting scatter.csv")?;
            outputs.add("report.json", report.to_json());
            outputs.add("report.txt", table);
            outputs.add("validation.json", validation.to_json());
            outputs.add("scatter.csv", scatter);
            out
        }
        Command::Consistency { data, detect, out } => {
            let encoded = load(data)?;
            let (_, rbf) = audited(&encoded, &detect.config(KernelKind::Rbf)?)?;
            let (_, linear) = audited(&encoded, &detect.config(KernelKind::Linear)?)?;
            let consistency = kernel_consistency(&rbf, &linear)?;
            match consistency.spearman {
                Some(r) => println!("spearman(rbf, linear) = {r:.3}"),
                None => println!("spearman(rbf, linear) undefined"),
            }
            println!("rbf:    {}", rbf.sensitive_groups.join(", "));
            println!("linear: {}", linear.sensitive_groups.join(", "));
            println!("consistent: {}", consistency.consistent);
            outputs.add("report_rbf.json", rbf.to_json());
            outputs.add("report_linear.json", linear.to_json());
            outputs.add("consistency.json", serde_json::to_string_pretty(&consistency)?);
            out
        }
        Command::Encode { data, out } => {
            let encoded = load(data)?;
            let mut csv = Vec::new();
            encoded.write_csv(&mut csv)?;
            outputs.add("encoded.csv", csv);
            out
        }
        Command::Synth {
            n,
            planted,
            group_fraction,
            noise,
            noise_kind,
            positive_rate,
            seed,
            out,
        } => {
            let spec = SynthSpec {
                n: *n,
                planted: planted
                    .iter()
                    .map(|&p| Planted { p, group_fraction: *group_fraction })
                    .collect(),
                noise: *noise,
                noise_kind: match noise_kind {
                    NoiseArg::Binary => NoiseKind::Binary,
                    NoiseArg::Numeric => NoiseKind::Numeric,
                },
                positive_rate: *positive_rate,
                seed: *seed,
            };
            let synthetic = generate(&spec).map_err(|e| ConfigError::new(e.to_string()))?;
            outputs.add("data.csv", synthetic.csv);
            outputs.add("schema.json", synthetic.schema.to_json());
            outputs.add("truth.json", serde_json::to_string_pretty(&synthetic.truth)?);
            out
        }
    };
    let record = RunRecord {
        version: env!("CARGO_PKG_VERSION"),
        threads,
        command: &cli.command,
    };
    outputs.add("run.json", serde_json::to_string_pretty(&record)? + "\n");
    outputs.write(out)?;
    eprintln!("wrote {}", out.display());
    Ok(())
}

fn main() {
    let cli = Cli::parse();
    if let Err(err) = run(&cli) {
        eprintln!("error: {err:#}");
        std::process::exit(exit::code(&err));
    }
}
