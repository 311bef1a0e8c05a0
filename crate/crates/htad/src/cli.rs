//! Command implementations behind the `htad` binary: training, evaluation,
//! attention export, and synthetic data generation. The binary itself only
//! parses flags and maps errors to exit codes.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{
    generate_synthetic, load_grouping, read_records_jsonl, read_series_dir, read_targets_jsonl,
    write_grouping, write_records_jsonl, write_series_dir, write_targets_jsonl, DiagnosisVocab,
    SeriesTable, SyntheticSeriesSpec, SyntheticSpec,
};
use crate::error::{Error, Result};
use crate::eval::{attention_report, auc_roc, map_at_k, AucMode, AucReport, MetricsReport};
use crate::hin::{build_graph, ClinicalRecord, HinGraph};
use crate::model::{HtadModel, ModelConfig, SeriesConfig};
use crate::numerics::checkpoint;
use crate::train::{
    collect_traces, phenotype_scores, prepare, ranking_lists, train, CheckpointMeta, RowMap,
    TaskKind, TrainLogRecord, TrainingConfig,
};

/// The single JSON configuration document for a run. Flags override fields.
#[derive(Debug, Clone, Serialize, Deserialize, Default)]
pub struct RunConfig {
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub training: TrainingConfig,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }
}

fn require_file(path: &Path, what: &str) -> Result<()> {
    if !path.is_file() {
        return Err(Error::Config(format!(
            "{what} file not found: {}",
            path.display()
        )));
    }
    Ok(())
}

fn require_dir(path: &Path, what: &str) -> Result<()> {
    if !path.is_dir() {
        return Err(Error::Config(format!(
            "{what} directory not found: {}",
            path.display()
        )));
    }
    Ok(())
}

/// Patient universe in first-seen order across records, targets, and series.
fn patient_universe(
    records: &[ClinicalRecord],
    targets: &[(String, String)],
    series: Option<&BTreeMap<String, SeriesTable>>,
) -> Vec<String> {
    let mut seen = std::collections::HashSet::new();
    let mut out = Vec::new();
    let mut push = |p: &str| {
        if seen.insert(p.to_string()) {
            out.push(p.to_string());
        }
    };
    for r in records {
        push(&r.patient);
    }
    for (p, _) in targets {
        push(p);
    }
    if let Some(tables) = series {
        for p in tables.keys() {
            push(p);
        }
    }
    out
}

pub struct TrainArgs {
    pub config: PathBuf,
    pub records: PathBuf,
    pub targets: PathBuf,
    pub grouping: PathBuf,
    pub series: Option<PathBuf>,
    pub out: PathBuf,
    pub seed: Option<u64>,
    pub task: Option<TaskKind>,
}

struct LoadedData {
    graph: HinGraph,
    vocab: DiagnosisVocab,
    series: Option<BTreeMap<String, SeriesTable>>,
}

fn load_inputs(
    context_types: &[String],
    records_path: &Path,
    targets_path: &Path,
    series_path: Option<&Path>,
    vocab: DiagnosisVocab,
) -> Result<LoadedData> {
    let records = read_records_jsonl(records_path)?;
    let targets = read_targets_jsonl(targets_path)?;
    let series = match series_path {
        Some(dir) => Some(read_series_dir(dir)?),
        None => None,
    };
    let patients = patient_universe(&records, &targets, series.as_ref());
    let graph = build_graph(context_types, &patients, &records, &targets)?;
    Ok(LoadedData {
        graph,
        vocab,
        series,
    })
}

/// Train a model from data files and write checkpoint plus training log.
pub fn cmd_train(args: &TrainArgs) -> Result<()> {
    require_file(&args.config, "config")?;
    require_file(&args.records, "records")?;
    require_file(&args.targets, "targets")?;
    require_file(&args.grouping, "grouping")?;
    if let Some(dir) = &args.series {
        require_dir(dir, "series")?;
    }

    let mut run = RunConfig::load(&args.config)?;
    if let Some(seed) = args.seed {
        run.training.seed = seed;
    }
    if let Some(task) = args.task {
        run.training.task = task;
    }
    run.training.validate()?;

    let vocab = load_grouping(&args.grouping)?;
    let loaded = load_inputs(
        &run.model.context_types,
        &args.records,
        &args.targets,
        args.series.as_deref(),
        vocab,
    )?;

    // The grouping file decides |D'|.
    if run.model.group_count != 0 && run.model.group_count != loaded.vocab.group_count() {
        return Err(Error::Config(format!(
            "config group_count {} does not match the grouping file's {}",
            run.model.group_count,
            loaded.vocab.group_count()
        )));
    }
    run.model.group_count = loaded.vocab.group_count();

    // Series configuration: derive channel names from the data when absent.
    match (&run.model.series, &loaded.series) {
        (Some(_), None) => {
            return Err(Error::Config(
                "model configures a series encoder but no --series directory was given".into(),
            ))
        }
        (None, Some(tables)) => {
            if let Some(first) = tables.values().next() {
                run.model.series = Some(SeriesConfig {
                    channels: first.channels.clone(),
                    hidden: 64,
                });
            }
        }
        _ => {}
    }
    run.model.validate()?;

    let (model, mut store) = HtadModel::init(
        run.model.clone(),
        loaded.graph.node_count(),
        run.training.metapaths.len(),
        run.training.seed,
    )?;
    let prepared = prepare(
        &loaded.graph,
        &loaded.vocab,
        model.config(),
        loaded.series.as_ref(),
        None,
    )?;

    let meta = CheckpointMeta::new(
        model.config(),
        &loaded.graph,
        &loaded.vocab,
        &run.training.metapaths,
    );
    let meta_json = meta.to_json()?;

    let mut log_lines = vec!["step,objective,loss,ms".to_string()];
    let out = args.out.clone();
    let meta_for_periodic = meta_json.clone();
    train(
        &model,
        &mut store,
        &loaded.graph,
        &prepared,
        &run.training,
        |rec: TrainLogRecord| {
            log_lines.push(format!(
                "{},{},{:.6},{}",
                rec.step, rec.objective, rec.loss, rec.millis
            ));
        },
        |step, snapshot| {
            let path = PathBuf::from(format!("{}.step{step}", out.display()));
            checkpoint::save(snapshot, &meta_for_periodic, &path)
        },
    )?;

    checkpoint::save(&store, &meta_json, &args.out)?;
    let log_path = PathBuf::from(format!("{}.log.csv", args.out.display()));
    let mut f = fs::File::create(&log_path)?;
    for line in log_lines {
        writeln!(f, "{line}")?;
    }
    Ok(())
}

pub struct EvalArgs {
    pub checkpoint: PathBuf,
    pub records: PathBuf,
    pub targets: PathBuf,
    pub grouping: Option<PathBuf>,
    pub series: Option<PathBuf>,
    pub task: TaskKind,
    pub out: Option<PathBuf>,
    pub seed: u64,
}

/// Candidate-list length for the ranking task: 100 codes, clamped to the
/// vocabulary when it is smaller (desk-scale datasets).
pub const RANKING_LIST_LEN: usize = 100;
pub const MAP_CUTOFFS: [usize; 4] = [4, 6, 8, 10];

struct LoadedCheckpoint {
    model: HtadModel,
    store: crate::numerics::ParameterStore,
    meta: CheckpointMeta,
}

fn load_checkpoint(path: &Path) -> Result<LoadedCheckpoint> {
    require_file(path, "checkpoint")?;
    let (store, meta_json) = checkpoint::load(path)?;
    let meta = CheckpointMeta::from_json(&meta_json)?;
    let model = HtadModel::resolve(
        meta.model.clone(),
        meta.n_graph_nodes,
        meta.metapaths.len(),
        &store,
    )?;
    Ok(LoadedCheckpoint { model, store, meta })
}

fn eval_vocab(meta: &CheckpointMeta, grouping: Option<&Path>) -> Result<DiagnosisVocab> {
    let trained = meta.vocab()?;
    match grouping {
        None => Ok(trained),
        Some(path) => {
            require_file(path, "grouping")?;
            let given = load_grouping(path)?;
            if given != trained {
                return Err(Error::VocabMismatch(
                    "grouping file differs from the vocabulary the checkpoint was trained on"
                        .into(),
                ));
            }
            Ok(given)
        }
    }
}

/// Score a dataset with a trained checkpoint and write the metrics report.
pub fn cmd_eval(args: &EvalArgs) -> Result<MetricsReport> {
    let loaded = load_checkpoint(&args.checkpoint)?;
    require_file(&args.records, "records")?;
    require_file(&args.targets, "targets")?;
    if let Some(dir) = &args.series {
        require_dir(dir, "series")?;
    }
    let vocab = eval_vocab(&loaded.meta, args.grouping.as_deref())?;
    let data = load_inputs(
        &loaded.meta.model.context_types,
        &args.records,
        &args.targets,
        args.series.as_deref(),
        vocab,
    )?;
    let row_map = RowMap::from_meta(&loaded.meta);
    let prepared = prepare(
        &data.graph,
        &data.vocab,
        loaded.model.config(),
        data.series.as_ref(),
        Some(&row_map),
    )?;

    let report = match args.task {
        TaskKind::Phenotype => {
            let groups = phenotype_scores(&loaded.model, &loaded.store, &prepared)?;
            MetricsReport {
                auc: Some(AucReport {
                    micro: auc_roc(&groups, AucMode::Micro)?,
                    macro_: auc_roc(&groups, AucMode::Macro)?,
                    weighted: auc_roc(&groups, AucMode::Weighted)?,
                }),
                map: None,
            }
        }
        TaskKind::Rank => {
            let list_len = RANKING_LIST_LEN.min(prepared.vocab.len());
            let lists = ranking_lists(
                &loaded.model,
                &loaded.store,
                &prepared,
                list_len,
                args.seed,
            )?;
            let mut map = BTreeMap::new();
            for k in MAP_CUTOFFS {
                map.insert(k.to_string(), map_at_k(&lists, k)?);
            }
            MetricsReport {
                auc: None,
                map: Some(map),
            }
        }
    };
    if let Some(out) = &args.out {
        fs::write(out, report.to_json())?;
    }
    Ok(report)
}

pub struct ExportArgs {
    pub checkpoint: PathBuf,
    pub records: PathBuf,
    pub targets: PathBuf,
    pub series: Option<PathBuf>,
    pub out: PathBuf,
}

/// Export one attention trace per `(patient, linked diagnosis)` as JSON
/// Lines, plus an aggregate report alongside.
pub fn cmd_export_attention(args: &ExportArgs) -> Result<()> {
    let loaded = load_checkpoint(&args.checkpoint)?;
    require_file(&args.records, "records")?;
    require_file(&args.targets, "targets")?;
    if let Some(dir) = &args.series {
        require_dir(dir, "series")?;
    }
    let vocab = loaded.meta.vocab()?;
    let data = load_inputs(
        &loaded.meta.model.context_types,
        &args.records,
        &args.targets,
        args.series.as_deref(),
        vocab,
    )?;
    let row_map = RowMap::from_meta(&loaded.meta);
    let prepared = prepare(
        &data.graph,
        &data.vocab,
        loaded.model.config(),
        data.series.as_ref(),
        Some(&row_map),
    )?;
    let labels = loaded.meta.row_labels();
    let traces = collect_traces(&loaded.model, &loaded.store, &prepared, &labels)?;

    let mut f = fs::File::create(&args.out)?;
    for trace in &traces {
        let line = serde_json::to_string(trace).map_err(|e| Error::Data(e.to_string()))?;
        writeln!(f, "{line}")?;
    }
    let report = attention_report(&traces)?;
    let report_path = PathBuf::from(format!("{}.report.json", args.out.display()));
    fs::write(
        &report_path,
        serde_json::to_string_pretty(&report).map_err(|e| Error::Data(e.to_string()))?,
    )?;
    Ok(())
}

/// Configuration for the synthetic data generator command.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GenerateConfig {
    pub train_patients: usize,
    pub test_patients: usize,
    pub diagnoses: usize,
    pub groups: usize,
    #[serde(default)]
    pub indicator_counts: Option<Vec<usize>>,
    #[serde(default = "default_p_signal")]
    pub p_signal: f64,
    #[serde(default = "default_background_items")]
    pub background_items: usize,
    #[serde(default = "default_background_rate")]
    pub background_rate: f64,
    #[serde(default = "default_max_diag")]
    pub max_diagnoses_per_patient: usize,
    #[serde(default)]
    pub diagnosis_skew: f64,
    #[serde(default)]
    pub series: Option<SyntheticSeriesSpec>,
    #[serde(default = "default_gen_seed")]
    pub seed: u64,
}

fn default_p_signal() -> f64 {
    0.9
}
fn default_background_items() -> usize {
    18
}
fn default_background_rate() -> f64 {
    0.3
}
fn default_max_diag() -> usize {
    3
}
fn default_gen_seed() -> u64 {
    42
}

pub struct GenerateArgs {
    pub config: PathBuf,
    pub out: PathBuf,
    pub seed: Option<u64>,
}

/// Generate a train/test synthetic dataset under `out/`.
pub fn cmd_generate(args: &GenerateArgs) -> Result<()> {
    require_file(&args.config, "config")?;
    let text = fs::read_to_string(&args.config)?;
    let mut gen: GenerateConfig = serde_json::from_str(&text)
        .map_err(|e| Error::Config(format!("{}: {e}", args.config.display())))?;
    if let Some(seed) = args.seed {
        gen.seed = seed;
    }

    let mut spec = SyntheticSpec::new(
        gen.train_patients + gen.test_patients,
        gen.diagnoses,
        gen.groups,
        gen.seed,
    );
    if let Some(counts) = gen.indicator_counts {
        spec.indicator_counts = counts;
    }
    spec.p_signal = gen.p_signal;
    spec.background_items = gen.background_items;
    spec.background_rate = gen.background_rate;
    spec.max_diagnoses_per_patient = gen.max_diagnoses_per_patient;
    spec.diagnosis_skew = gen.diagnosis_skew;
    spec.series = gen.series;

    let data = generate_synthetic(&spec)?;
    fs::create_dir_all(&args.out)?;

    let is_train: std::collections::HashSet<&str> = data
        .patients
        .iter()
        .take(gen.train_patients)
        .map(|p| p.as_str())
        .collect();
    let split =
        |items: &[ClinicalRecord]| -> (Vec<ClinicalRecord>, Vec<ClinicalRecord>) {
            items
                .iter()
                .cloned()
                .partition(|r| is_train.contains(r.patient.as_str()))
        };
    let (train_records, test_records) = split(&data.records);
    let (train_targets, test_targets): (Vec<_>, Vec<_>) = data
        .targets
        .iter()
        .cloned()
        .partition(|(p, _)| is_train.contains(p.as_str()));

    write_records_jsonl(&args.out.join("records.train.jsonl"), &train_records)?;
    write_records_jsonl(&args.out.join("records.test.jsonl"), &test_records)?;
    write_targets_jsonl(&args.out.join("targets.train.jsonl"), &train_targets)?;
    write_targets_jsonl(&args.out.join("targets.test.jsonl"), &test_targets)?;
    write_grouping(&args.out.join("grouping.jsonl"), &data.vocab)?;
    if spec.series.is_some() {
        let (mut train_series, mut test_series) = (BTreeMap::new(), BTreeMap::new());
        for (p, table) in data.series {
            if is_train.contains(p.as_str()) {
                train_series.insert(p, table);
            } else {
                test_series.insert(p, table);
            }
        }
        write_series_dir(&args.out.join("series.train"), &train_series)?;
        write_series_dir(&args.out.join("series.test"), &test_series)?;
    }
    Ok(())
}

/// Exit code for an error, per the CLI contract: 2 usage/config, 3 data.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) => 2,
        Error::Data(_)
        | Error::Io(_)
        | Error::VocabMismatch(_)
        | Error::Checkpoint(_)
        | Error::UnknownPatient(_)
        | Error::UndeclaredType(_)
        | Error::NoPathInstance(_)
        | Error::EmptySupport(_) => 3,
        _ => 1,
    }
}
