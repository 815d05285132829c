//! Command-line experiment runner: corpus ingestion, synthetic data,
//! splitting, augmentation, training, evaluation, ablations, sweeps, and
//! run reports.
//!
//! Exit codes: 0 success, 1 configuration error, 2 data error, 3 numerical
//! error.

use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use intentrec::adjacency::{build_successor_index, SuccessorMode};
use intentrec::augment::{augment_dataset, AugmentOptions};
use intentrec::corpus::{
    build_index, dataset_stats, kcore_filter, parse_interactions, synth_generate, user_sequences,
    ParseOptions, SynthSpec,
};
use intentrec::encoder::EncoderParams;
use intentrec::error::{Error, Result, StageExt};
use intentrec::evaluator::{evaluate, EvalOptions, SplitKind};
use intentrec::experiment::{
    emit_report, run_ablation, run_experiment, run_sweep, DataSource, ExperimentSpec,
};
use intentrec::objective::ContrastiveVariant;
use intentrec::seqprep::{chrono_split, SplitDataset};
use intentrec::trainer::{Ablation, TrainConfig};

#[derive(Parser)]
#[command(name = "intentrec", version, about = "Intent-insertion augmentation for sequential recommendation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse, filter, and index an interaction log; write corpus statistics.
    Ingest(IngestArgs),
    /// Generate a synthetic interaction log with planted intent clusters.
    Synth(SynthArgs),
    /// Freeze train/validation/test splits from an interaction log.
    Split(SplitArgs),
    /// Build the successor index and generate augmented samples for frozen splits.
    Augment(AugmentArgs),
    /// Run the full pipeline: data, splits, augmentation, training, evaluation.
    Train(TrainArgs),
    /// Evaluate a checkpoint against frozen splits.
    Eval(EvalArgs),
    /// Train every requested ablation variant over shared frozen splits.
    Ablate(AblateArgs),
    /// Cartesian lambda/tau sweep over shared frozen splits.
    Sweep(SweepArgs),
    /// Summarize a finished run directory.
    Report(ReportArgs),
}

#[derive(Args)]
struct ParseArgs {
    /// Field delimiter of the input file.
    #[arg(long, default_value_t = ',')]
    delimiter: char,
    /// Skip the first line of the input file.
    #[arg(long)]
    header: bool,
    /// k-core threshold: drop users and items with fewer occurrences.
    #[arg(long, default_value_t = 5)]
    min_count: usize,
}

#[derive(Args)]
struct SourceArgs {
    /// Interaction log, one `user,item[,rating],timestamp` per line.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Generate a synthetic corpus instead of reading a file.
    #[arg(long)]
    synth: bool,
    #[arg(long, default_value_t = 500)]
    synth_users: usize,
    #[arg(long, default_value_t = 50)]
    synth_items: usize,
    #[arg(long, default_value_t = 5)]
    synth_clusters: usize,
    #[arg(long, default_value_t = 3)]
    chain_min: usize,
    #[arg(long, default_value_t = 6)]
    chain_max: usize,
    #[arg(long, default_value_t = 2)]
    segments: usize,
    #[arg(long, default_value_t = 0.1)]
    noise: f64,
    #[command(flatten)]
    parse: ParseArgs,
}

impl SourceArgs {
    fn synth_spec(&self) -> SynthSpec {
        SynthSpec {
            n_users: self.synth_users,
            n_items: self.synth_items,
            n_intent_clusters: self.synth_clusters,
            chain_length_range: (self.chain_min, self.chain_max),
            segments_per_user: self.segments,
            noise_rate: self.noise,
        }
    }

    fn to_source(&self) -> Result<DataSource> {
        match (&self.input, self.synth) {
            (Some(path), false) => Ok(DataSource::File {
                path: path.clone(),
                delimiter: self.parse.delimiter,
                skip_header: self.parse.header,
            }),
            (None, true) => Ok(DataSource::Synth {
                spec: self.synth_spec(),
            }),
            (Some(_), true) => Err(Error::Config(
                "choose exactly one of --input and --synth".into(),
            )),
            (None, false) => Err(Error::Config(
                "a data source is required: --input FILE or --synth".into(),
            )),
        }
    }
}

/// Every training field, overridable on top of `--config` / defaults.
#[derive(Args)]
struct ConfigArgs {
    /// Declarative key-value (TOML) config file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    embedding_dim: Option<usize>,
    #[arg(long)]
    n_heads: Option<usize>,
    #[arg(long)]
    n_layers: Option<usize>,
    #[arg(long)]
    ffn_dim: Option<usize>,
    #[arg(long)]
    dropout: Option<f64>,
    #[arg(long)]
    max_len: Option<usize>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    retry_budget: Option<usize>,
    #[arg(long)]
    patience: Option<usize>,
    #[arg(long)]
    max_epochs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// One of: full, no_ps, no_cl, no_both.
    #[arg(long)]
    ablation: Option<String>,
    /// One of: immediate, any_later.
    #[arg(long)]
    successor_mode: Option<String>,
    #[arg(long)]
    weighted_sampling: bool,
    /// One of: ratio, info_nce.
    #[arg(long)]
    contrastive_variant: Option<String>,
    #[arg(long)]
    regen_per_epoch: bool,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<TrainConfig> {
        let mut cfg = match &self.config {
            Some(path) => TrainConfig::load(path)?,
            None => TrainConfig::default(),
        };
        macro_rules! set {
            ($field:ident) => {
                if let Some(v) = self.$field {
                    cfg.$field = v;
                }
            };
        }
        set!(learning_rate);
        set!(batch_size);
        set!(embedding_dim);
        set!(n_heads);
        set!(n_layers);
        set!(ffn_dim);
        set!(dropout);
        set!(max_len);
        set!(lambda);
        set!(tau);
        set!(k);
        set!(retry_budget);
        set!(patience);
        set!(max_epochs);
        set!(seed);
        if let Some(a) = &self.ablation {
            cfg.ablation = Ablation::parse(a)?;
        }
        if let Some(m) = &self.successor_mode {
            cfg.successor_mode = match m.as_str() {
                "immediate" => SuccessorMode::Immediate,
                "any_later" => SuccessorMode::AnyLater,
                other => {
                    return Err(Error::Config(format!("unknown successor mode {other:?}")))
                }
            };
        }
        if self.weighted_sampling {
            cfg.weighted_sampling = true;
        }
        if let Some(v) = &self.contrastive_variant {
            cfg.contrastive_variant = match v.as_str() {
                "ratio" => ContrastiveVariant::Ratio,
                "info_nce" => ContrastiveVariant::InfoNce,
                other => {
                    return Err(Error::Config(format!(
                        "unknown contrastive variant {other:?}"
                    )))
                }
            };
        }
        if self.regen_per_epoch {
            cfg.regen_per_epoch = true;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct IngestArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    parse: ParseArgs,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 500)]
    users: usize,
    #[arg(long, default_value_t = 50)]
    items: usize,
    #[arg(long, default_value_t = 5)]
    clusters: usize,
    #[arg(long, default_value_t = 3)]
    chain_min: usize,
    #[arg(long, default_value_t = 6)]
    chain_max: usize,
    #[arg(long, default_value_t = 2)]
    segments: usize,
    #[arg(long, default_value_t = 0.1)]
    noise: f64,
    #[arg(long, default_value_t = 42)]
    seed: u64,
}

#[derive(Args)]
struct SplitArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 50)]
    max_len: usize,
    #[command(flatten)]
    parse: ParseArgs,
}

#[derive(Args)]
struct AugmentArgs {
    /// Directory holding frozen train/validation/test split files.
    #[arg(long)]
    splits: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 1)]
    k: usize,
    #[arg(long, default_value_t = 10)]
    retry_budget: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// One of: immediate, any_later.
    #[arg(long, default_value = "immediate")]
    successor_mode: String,
    #[arg(long)]
    weighted: bool,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    source: SourceArgs,
    #[arg(long)]
    out: PathBuf,
    /// Ranking cutoffs, comma separated.
    #[arg(long, default_value = "10,20,50")]
    ks: String,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    splits: PathBuf,
    /// Which split to evaluate: test or validation.
    #[arg(long, default_value = "test")]
    split: String,
    #[arg(long, default_value = "10,20,50")]
    ks: String,
    /// Mask each user's input items (except the target) out of the ranking.
    #[arg(long)]
    mask_history: bool,
}

#[derive(Args)]
struct AblateArgs {
    #[command(flatten)]
    source: SourceArgs,
    #[arg(long)]
    out: PathBuf,
    /// Comma-separated subset of: full, no_ps, no_cl, no_both.
    #[arg(long, default_value = "full,no_ps,no_cl,no_both")]
    variants: String,
    #[arg(long, default_value = "10,20,50")]
    ks: String,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    source: SourceArgs,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "0.05,0.1,0.2,0.5,1.0")]
    lambda_grid: String,
    #[arg(long, default_value = "0.1,0.5,1.0,2.0")]
    tau_grid: String,
    #[arg(long, default_value = "10,20,50")]
    ks: String,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Args)]
struct ReportArgs {
    /// Run directory produced by `train`.
    #[arg(long)]
    run: PathBuf,
}

fn parse_ks(s: &str) -> Result<Vec<usize>> {
    let ks: Vec<usize> = s
        .split(',')
        .map(|v| {
            v.trim()
                .parse::<usize>()
                .map_err(|_| Error::Config(format!("bad cutoff {v:?} in --ks")))
        })
        .collect::<Result<_>>()?;
    if ks.is_empty() {
        return Err(Error::Config("--ks must list at least one cutoff".into()));
    }
    Ok(ks)
}

fn parse_grid(s: &str, name: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|v| {
            v.trim()
                .parse::<f64>()
                .map_err(|_| Error::Config(format!("bad value {v:?} in --{name}")))
        })
        .collect()
}

fn load_log(path: &Path, parse: &ParseArgs) -> Result<intentrec::corpus::InteractionLog> {
    if !path.exists() {
        return Err(Error::Data(format!("input file {} does not exist", path.display())));
    }
    let file = fs::File::open(path)?;
    let opts = ParseOptions {
        delimiter: parse.delimiter,
        skip_header: parse.header,
    };
    parse_interactions(BufReader::new(file), &opts)
}

fn cmd_ingest(args: IngestArgs) -> Result<()> {
    let log = load_log(&args.input, &args.parse).stage("parse")?;
    let filtered = kcore_filter(&log, args.parse.min_count);
    let stats = dataset_stats(&filtered).stage("filter")?;
    let index = build_index(&filtered);
    let sequences = user_sequences(&filtered, &index).stage("index")?;
    fs::create_dir_all(&args.out)?;
    fs::write(args.out.join("stats.txt"), stats.to_record())?;
    let mut seq_text = String::new();
    for (u, seq) in sequences.iter().enumerate() {
        let items: Vec<String> = seq.iter().map(|i| i.to_string()).collect();
        seq_text.push_str(&format!("{u}\t{}\n", items.join(" ")));
    }
    fs::write(args.out.join("sequences.txt"), seq_text)?;
    let users: Vec<String> = (0..index.n_users())
        .map(|u| index.user_label(u as u32).unwrap_or_default().to_string())
        .collect();
    fs::write(args.out.join("users.txt"), users.join("\n") + "\n")?;
    let items: Vec<String> = (1..=index.n_items())
        .map(|i| index.item_label(i as u32).unwrap_or_default().to_string())
        .collect();
    fs::write(args.out.join("items.txt"), items.join("\n") + "\n")?;
    print!("{}", stats.to_record());
    Ok(())
}

fn cmd_synth(args: SynthArgs) -> Result<()> {
    let spec = SynthSpec {
        n_users: args.users,
        n_items: args.items,
        n_intent_clusters: args.clusters,
        chain_length_range: (args.chain_min, args.chain_max),
        segments_per_user: args.segments,
        noise_rate: args.noise,
    };
    let log = synth_generate(&spec, args.seed)?;
    let stats = dataset_stats(&log)?;
    fs::create_dir_all(&args.out)?;
    let mut csv = String::new();
    for it in &log.interactions {
        csv.push_str(&format!("{},{},{}\n", it.user, it.item, it.timestamp));
    }
    fs::write(args.out.join("interactions.csv"), csv)?;
    fs::write(args.out.join("stats.txt"), stats.to_record())?;
    print!("{}", stats.to_record());
    Ok(())
}

fn cmd_split(args: SplitArgs) -> Result<()> {
    let log = load_log(&args.input, &args.parse).stage("parse")?;
    let filtered = kcore_filter(&log, args.parse.min_count);
    let index = build_index(&filtered);
    let sequences = user_sequences(&filtered, &index).stage("index")?;
    let splits = chrono_split(&sequences, args.max_len);
    splits.write_dir(&args.out).stage("split")?;
    println!(
        "train={} validation={} test={} dropped_users={}",
        splits.train.len(),
        splits.validation.len(),
        splits.test.len(),
        splits.dropped_users
    );
    Ok(())
}

fn cmd_augment(args: AugmentArgs) -> Result<()> {
    let splits = SplitDataset::read_dir(&args.splits).stage("split")?;
    let mode = match args.successor_mode.as_str() {
        "immediate" => SuccessorMode::Immediate,
        "any_later" => SuccessorMode::AnyLater,
        other => return Err(Error::Config(format!("unknown successor mode {other:?}"))),
    };
    let n_items = splits.max_item() as usize;
    let index = build_successor_index(&splits.train, n_items, mode);
    let opts = AugmentOptions {
        k: args.k,
        retry_budget: args.retry_budget,
        weighted: args.weighted,
    };
    let data = augment_dataset(&splits.train, &index, &opts, args.seed);
    fs::create_dir_all(&args.out)?;
    index.write_to(&args.out.join("successors.txt"))?;
    data.write_to(&args.out.join("augmented.txt"))?;
    fs::write(args.out.join("coverage.txt"), data.coverage.to_record())?;
    print!("{}", data.coverage.to_record());
    Ok(())
}

fn cmd_train(args: TrainArgs) -> Result<()> {
    let spec = ExperimentSpec {
        source: args.source.to_source()?,
        min_count: args.source.parse.min_count,
        train: args.config.resolve()?,
        out_dir: args.out,
        ks: parse_ks(&args.ks)?,
    };
    let artifacts = run_experiment(&spec)?;
    println!("run directory: {}", artifacts.dir.display());
    print!("{}", artifacts.validation.format_grid());
    print!("{}", artifacts.test.format_grid());
    Ok(())
}

fn cmd_eval(args: EvalArgs) -> Result<()> {
    let params = EncoderParams::load(&args.checkpoint).stage("checkpoint")?;
    let splits = SplitDataset::read_dir(&args.splits).stage("split")?;
    let (instances, kind) = match args.split.as_str() {
        "test" => (&splits.test, SplitKind::Test),
        "validation" => (&splits.validation, SplitKind::Validation),
        other => return Err(Error::Config(format!("unknown split {other:?}"))),
    };
    let opts = EvalOptions {
        ks: parse_ks(&args.ks)?,
        max_len: params.config.max_len,
        mask_history: args.mask_history,
    };
    let report = evaluate(&params, instances, kind, &opts).stage("evaluate")?;
    print!("{}", report.format_grid());
    Ok(())
}

fn cmd_ablate(args: AblateArgs) -> Result<()> {
    let variants: Vec<Ablation> = args
        .variants
        .split(',')
        .map(|v| Ablation::parse(v.trim()))
        .collect::<Result<_>>()?;
    let spec = ExperimentSpec {
        source: args.source.to_source()?,
        min_count: args.source.parse.min_count,
        train: args.config.resolve()?,
        out_dir: args.out,
        ks: parse_ks(&args.ks)?,
    };
    let table = run_ablation(&spec, &variants)?;
    print!("{}", table.format_table());
    Ok(())
}

fn cmd_sweep(args: SweepArgs) -> Result<()> {
    let lambda_grid = parse_grid(&args.lambda_grid, "lambda-grid")?;
    let tau_grid = parse_grid(&args.tau_grid, "tau-grid")?;
    let spec = ExperimentSpec {
        source: args.source.to_source()?,
        min_count: args.source.parse.min_count,
        train: args.config.resolve()?,
        out_dir: args.out,
        ks: parse_ks(&args.ks)?,
    };
    let table = run_sweep(&spec, &lambda_grid, &tau_grid)?;
    print!("{}", table.format_table());
    Ok(())
}

fn cmd_report(args: ReportArgs) -> Result<()> {
    print!("{}", emit_report(&args.run)?);
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Ingest(args) => cmd_ingest(args),
        Command::Synth(args) => cmd_synth(args),
        Command::Split(args) => cmd_split(args),
        Command::Augment(args) => cmd_augment(args),
        Command::Train(args) => cmd_train(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Ablate(args) => cmd_ablate(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::Report(args) => cmd_report(args),
    }
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            use clap::error::ErrorKind;
            if matches!(err.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{err}");
                std::process::exit(0);
            }
            eprintln!("{err}");
            std::process::exit(1);
        }
    };
    if let Err(err) = run(cli) {
        eprintln!("error: {err}");
        std::process::exit(err.exit_code());
    }
}
