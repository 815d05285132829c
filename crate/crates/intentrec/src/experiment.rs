//! Experiment runner: single runs, ablation suites, and lambda/tau sweeps
//! over frozen splits, with every artifact persisted under the run
//! directory.

use std::fmt::Write as _;
use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use crate::corpus::{
    build_index, dataset_stats, kcore_filter, parse_interactions, synth_generate, user_sequences,
    ParseOptions, StatsReport, SynthSpec,
};
use crate::error::{Error, Result, StageExt};
use crate::evaluator::{evaluate, EvalOptions, MetricsReport, SplitKind};
use crate::seqprep::{chrono_split, SplitDataset};
use crate::trainer::{fit, Ablation, TrainConfig, TrainHistory};

/// Where the interaction log comes from.
#[derive(Debug, Clone)]
pub enum DataSource {
    File {
        path: PathBuf,
        delimiter: char,
        skip_header: bool,
    },
    Synth {
        spec: SynthSpec,
    },
}

/// A complete experiment description: exactly one data source, training
/// configuration, and an output directory.
#[derive(Debug, Clone)]
pub struct ExperimentSpec {
    pub source: DataSource,
    /// k-core threshold applied before indexing.
    pub min_count: usize,
    pub train: TrainConfig,
    pub out_dir: PathBuf,
    pub ks: Vec<usize>,
}

impl ExperimentSpec {
    pub fn new(source: DataSource, out_dir: impl Into<PathBuf>) -> ExperimentSpec {
        ExperimentSpec {
            source,
            min_count: 5,
            train: TrainConfig::default(),
            out_dir: out_dir.into(),
            ks: vec![10, 20, 50],
        }
    }
}

/// Splits plus catalog size, ready for training.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub splits: SplitDataset,
    pub n_items: usize,
    pub stats: StatsReport,
}

/// FNV-1a over file bytes; used to pin frozen split files.
pub fn file_checksum(path: &Path) -> Result<u64> {
    let bytes = fs::read(path)?;
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    Ok(h)
}

/// Parse or synthesize the corpus, filter, index, and split it.
pub fn prepare_corpus(spec: &ExperimentSpec) -> Result<PreparedData> {
    let log = match &spec.source {
        DataSource::File {
            path,
            delimiter,
            skip_header,
        } => {
            if !path.exists() {
                return Err(Error::Data(format!(
                    "input file {} does not exist",
                    path.display()
                ))
                .in_stage("data-source"));
            }
            let file = fs::File::open(path).stage("data-source")?;
            let opts = ParseOptions {
                delimiter: *delimiter,
                skip_header: *skip_header,
            };
            parse_interactions(BufReader::new(file), &opts).stage("parse")?
        }
        DataSource::Synth { spec: synth } => {
            synth_generate(synth, spec.train.seed).stage("synth")?
        }
    };
    let filtered = kcore_filter(&log, spec.min_count);
    let stats = dataset_stats(&filtered).stage("filter")?;
    let index = build_index(&filtered);
    let sequences = user_sequences(&filtered, &index).stage("index")?;
    let splits = chrono_split(&sequences, spec.train.max_len);
    Ok(PreparedData {
        splits,
        n_items: index.n_items(),
        stats,
    })
}

/// Everything a finished run leaves on disk, plus the in-memory reports.
#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub dir: PathBuf,
    pub validation: MetricsReport,
    pub test: MetricsReport,
    pub history: TrainHistory,
    pub split_checksums: Vec<(String, u64)>,
}

fn write_split_checksums(dir: &Path, splits_dir: &Path) -> Result<Vec<(String, u64)>> {
    let mut sums = Vec::new();
    let mut out = String::new();
    for name in ["train.txt", "validation.txt", "test.txt"] {
        let checksum = file_checksum(&splits_dir.join(name))?;
        let _ = writeln!(out, "{name}={checksum:016x}");
        sums.push((name.to_string(), checksum));
    }
    fs::write(dir.join("split_checksums.txt"), out)?;
    Ok(sums)
}

/// Train and evaluate against already-frozen splits, persisting artifacts
/// into `dir`.
pub fn run_with_splits(
    dir: &Path,
    cfg: &TrainConfig,
    prepared: &PreparedData,
    ks: &[usize],
    splits_dir: &Path,
) -> Result<RunArtifacts> {
    fs::create_dir_all(dir)?;
    cfg.save(&dir.join("config.toml")).stage("config")?;
    fs::write(dir.join("stats.txt"), prepared.stats.to_record()).stage("config")?;
    let split_checksums = write_split_checksums(dir, splits_dir).stage("split")?;

    let outcome = fit(cfg, &prepared.splits, prepared.n_items).stage("train")?;
    outcome
        .index
        .write_to(&dir.join("successors.txt"))
        .stage("train")?;
    outcome
        .augmented
        .write_to(&dir.join("augmented.txt"))
        .stage("train")?;
    fs::write(dir.join("coverage.txt"), outcome.augmented.coverage.to_record()).stage("train")?;
    outcome.history.write_to(&dir.join("history.txt")).stage("train")?;
    outcome
        .history
        .write_timings(&dir.join("timings.txt"))
        .stage("train")?;
    outcome
        .params
        .save(&dir.join("checkpoint.txt"))
        .stage("train")?;

    let eval_opts = EvalOptions {
        ks: ks.to_vec(),
        max_len: cfg.max_len,
        mask_history: false,
    };
    let validation = evaluate(
        &outcome.params,
        &prepared.splits.validation,
        SplitKind::Validation,
        &eval_opts,
    )
    .stage("evaluate")?;
    validation
        .write_to(&dir.join("metrics_validation.txt"))
        .stage("evaluate")?;
    let test = evaluate(
        &outcome.params,
        &prepared.splits.test,
        SplitKind::Test,
        &eval_opts,
    )
    .stage("evaluate")?;
    test.write_to(&dir.join("metrics_test.txt")).stage("evaluate")?;

    let artifacts = RunArtifacts {
        dir: dir.to_path_buf(),
        validation,
        test,
        history: outcome.history,
        split_checksums,
    };
    fs::write(dir.join("summary.txt"), summarize(&artifacts)).stage("report")?;
    Ok(artifacts)
}

fn summarize(artifacts: &RunArtifacts) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "run: {}", artifacts.dir.display());
    if let Some(best) = artifacts.history.best_epoch {
        let _ = writeln!(
            out,
            "best_epoch={best} stopped_early={}",
            artifacts.history.stopped_early
        );
    }
    for (name, sum) in &artifacts.split_checksums {
        let _ = writeln!(out, "split {name} checksum={sum:016x}");
    }
    out.push('\n');
    out.push_str(&artifacts.validation.format_grid());
    out.push('\n');
    out.push_str(&artifacts.test.format_grid());
    out
}

/// Full pipeline: corpus -> splits -> successor index -> augmentation ->
/// training -> evaluation, all artifacts under `spec.out_dir`. Reruns with
/// the same spec and seed reproduce the persisted artifacts byte for byte
/// (timing records live in a separate file).
pub fn run_experiment(spec: &ExperimentSpec) -> Result<RunArtifacts> {
    let prepared = prepare_corpus(spec)?;
    fs::create_dir_all(&spec.out_dir)?;
    let splits_dir = spec.out_dir.join("splits");
    prepared.splits.write_dir(&splits_dir).stage("split")?;
    run_with_splits(
        &spec.out_dir,
        &spec.train,
        &prepared,
        &spec.ks,
        &splits_dir,
    )
}

/// One ablation row: test HR@20 and NDCG@20 (falling back to the largest
/// configured cutoff when 20 is absent).
#[derive(Debug, Clone)]
pub struct AblationRow {
    pub variant: Ablation,
    pub k: usize,
    pub hr: f64,
    pub ndcg: f64,
}

#[derive(Debug, Clone)]
pub struct AblationTable {
    pub rows: Vec<AblationRow>,
}

impl AblationTable {
    pub fn format_table(&self) -> String {
        let mut out = String::new();
        let k = self.rows.first().map(|r| r.k).unwrap_or(20);
        let _ = writeln!(out, "{:<10} {:<12} {:<12}", "variant", format!("HR@{k}"), format!("NDCG@{k}"));
        for row in &self.rows {
            let _ = writeln!(
                out,
                "{:<10} {:<12.4} {:<12.4}",
                row.variant.as_str(),
                row.hr,
                row.ndcg
            );
        }
        out
    }
}

fn table_cutoff(report: &MetricsReport) -> usize {
    if report.hr.contains_key(&20) {
        20
    } else {
        report.hr.keys().max().copied().unwrap_or(20)
    }
}

/// One run per variant over shared frozen splits and one seed; emits a
/// variant-by-metric grid.
pub fn run_ablation(spec: &ExperimentSpec, variants: &[Ablation]) -> Result<AblationTable> {
    if variants.is_empty() {
        return Err(Error::Config("no ablation variants requested".into()));
    }
    let prepared = prepare_corpus(spec)?;
    fs::create_dir_all(&spec.out_dir)?;
    let splits_dir = spec.out_dir.join("splits");
    prepared.splits.write_dir(&splits_dir).stage("split")?;

    let mut rows = Vec::with_capacity(variants.len());
    for &variant in variants {
        let cfg = TrainConfig {
            ablation: variant,
            ..spec.train.clone()
        };
        let dir = spec.out_dir.join(variant.as_str());
        let artifacts = run_with_splits(&dir, &cfg, &prepared, &spec.ks, &splits_dir)?;
        let k = table_cutoff(&artifacts.test);
        rows.push(AblationRow {
            variant,
            k,
            hr: artifacts.test.hr[&k],
            ndcg: artifacts.test.ndcg[&k],
        });
    }
    let table = AblationTable { rows };
    fs::write(spec.out_dir.join("ablation.txt"), table.format_table()).stage("report")?;
    Ok(table)
}

/// One sweep cell.
#[derive(Debug, Clone)]
pub struct SweepCell {
    pub lambda: f64,
    pub tau: f64,
    pub k: usize,
    pub hr: f64,
    pub ndcg: f64,
}

#[derive(Debug, Clone)]
pub struct SweepTable {
    pub cells: Vec<SweepCell>,
}

impl SweepTable {
    /// Plot-ready tabular records: `lambda tau hr ndcg` per line.
    pub fn format_table(&self) -> String {
        let mut out = String::new();
        let k = self.cells.first().map(|c| c.k).unwrap_or(20);
        let _ = writeln!(out, "lambda\ttau\thr@{k}\tndcg@{k}");
        for c in &self.cells {
            let _ = writeln!(out, "{}\t{}\t{:.4}\t{:.4}", c.lambda, c.tau, c.hr, c.ndcg);
        }
        out
    }
}

/// Cartesian-product lambda/tau runs over shared frozen splits.
pub fn run_sweep(
    spec: &ExperimentSpec,
    lambda_grid: &[f64],
    tau_grid: &[f64],
) -> Result<SweepTable> {
    if lambda_grid.is_empty() || tau_grid.is_empty() {
        return Err(Error::Config("sweep grids must be non-empty".into()));
    }
    let prepared = prepare_corpus(spec)?;
    fs::create_dir_all(&spec.out_dir)?;
    let splits_dir = spec.out_dir.join("splits");
    prepared.splits.write_dir(&splits_dir).stage("split")?;

    let mut cells = Vec::with_capacity(lambda_grid.len() * tau_grid.len());
    for &lambda in lambda_grid {
        for &tau in tau_grid {
            let cfg = TrainConfig {
                lambda,
                tau,
                ..spec.train.clone()
            };
            let dir = spec.out_dir.join(format!("lambda_{lambda}_tau_{tau}"));
            let artifacts = run_with_splits(&dir, &cfg, &prepared, &spec.ks, &splits_dir)?;
            let k = table_cutoff(&artifacts.test);
            cells.push(SweepCell {
                lambda,
                tau,
                k,
                hr: artifacts.test.hr[&k],
                ndcg: artifacts.test.ndcg[&k],
            });
        }
    }
    let table = SweepTable { cells };
    fs::write(spec.out_dir.join("sweep.txt"), table.format_table()).stage("report")?;
    Ok(table)
}

/// Read-only summary of a run directory: metric grids, coverage rates, and
/// the early-stop epoch. Missing artifacts are listed, never fatal.
pub fn emit_report(dir: &Path) -> Result<String> {
    if !dir.is_dir() {
        return Err(Error::Data(format!(
            "run directory {} does not exist",
            dir.display()
        )));
    }
    let mut out = String::new();
    let mut missing: Vec<&str> = Vec::new();
    let _ = writeln!(out, "run report: {}", dir.display());

    match fs::read_to_string(dir.join("stats.txt")) {
        Ok(stats) => {
            let _ = writeln!(out, "\n[corpus]");
            out.push_str(&stats);
        }
        Err(_) => missing.push("stats.txt"),
    }
    match fs::read_to_string(dir.join("coverage.txt")) {
        Ok(coverage) => {
            let _ = writeln!(out, "\n[augmentation coverage]");
            out.push_str(&coverage);
        }
        Err(_) => missing.push("coverage.txt"),
    }
    match fs::read_to_string(dir.join("history.txt")) {
        Ok(history) => {
            let _ = writeln!(out, "\n[training]");
            let epochs = history.lines().filter(|l| l.starts_with("epoch=")).count();
            let _ = writeln!(out, "epochs={epochs}");
            for line in history.lines() {
                if line.starts_with("best_epoch=") || line.starts_with("stopped_early=") {
                    let _ = writeln!(out, "{line}");
                }
            }
        }
        Err(_) => missing.push("history.txt"),
    }
    for (name, label) in [
        ("metrics_validation.txt", "validation metrics"),
        ("metrics_test.txt", "test metrics"),
    ] {
        match MetricsReport::read_from(&dir.join(name)) {
            Ok(report) => {
                let _ = writeln!(out, "\n[{label}]");
                out.push_str(&report.format_grid());
            }
            Err(_) => missing.push(name),
        }
    }
    if !dir.join("checkpoint.txt").exists() {
        missing.push("checkpoint.txt");
    }
    if !missing.is_empty() {
        let _ = writeln!(out, "\n[incomplete run]");
        for name in missing {
            let _ = writeln!(out, "MISSING: {name}");
        }
    }
    Ok(out)
}
