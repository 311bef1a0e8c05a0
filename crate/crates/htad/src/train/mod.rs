//! Training orchestration: dataset preparation, the joint/pre-training loops,
//! inference passes for evaluation, and checkpoint metadata.

use std::collections::{BTreeMap, HashMap};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::data::{DiagnosisVocab, SeriesTable};
use crate::error::{Error, Result};
use crate::eval::AttentionTrace;
use crate::hin::{dest_set, sample_metapath_pair, HinGraph, MetaPathSchema, NodeIdentity};
use crate::model::{HtadModel, ModelConfig, PatientInputs, Target, TypeKey};
use crate::numerics::{AdamParams, GradContext, ParameterStore, VarId};
use crate::objectives::{
    classification_forward, classification_loss, hinge_loss, joint_step_selector, l2_penalty,
    ranking_score, unsup_ns_loss, NegativeSampler, StepKind,
};

/// Which prediction task supervised steps train.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    /// Multi-label diagnosis-group classification.
    #[default]
    Phenotype,
    /// Exact-code ranking with the hinge objective.
    Rank,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum TrainMode {
    /// Sample between objectives each step with probability `omega`.
    #[default]
    #[serde(rename = "joint")]
    Joint,
    /// Unsupervised-only phase first, then supervised-only fine-tuning.
    #[serde(rename = "pretrain-unsup")]
    PretrainUnsup,
}

fn default_omega() -> f64 {
    0.5
}
fn default_lambda() -> f64 {
    1e-5
}
fn default_margin() -> f64 {
    1.0
}
fn default_negatives() -> usize {
    5
}
fn default_lr() -> f64 {
    0.001
}
fn default_batch() -> usize {
    32
}
fn default_epochs() -> usize {
    10
}
fn default_seed() -> u64 {
    42
}
fn default_clip() -> f64 {
    5.0
}

fn default_metapaths() -> Vec<Vec<String>> {
    vec![
        vec!["lab".into(), "patient".into(), "diagnosis".into()],
        vec!["diagnosis".into(), "patient".into(), "symptom".into()],
        vec!["lab".into(), "patient".into(), "symptom".into()],
    ]
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainingConfig {
    /// Probability of an unsupervised step under joint training.
    #[serde(default = "default_omega")]
    pub omega: f64,
    /// L2 coefficient on touched embedding rows.
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    /// Hinge margin for the ranking objective.
    #[serde(default = "default_margin")]
    pub margin: f64,
    /// Negative samples per positive pair in the unsupervised objective.
    #[serde(default = "default_negatives")]
    pub negatives: usize,
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    /// Unsupervised epochs under `pretrain-unsup`; defaults to `epochs`.
    #[serde(default)]
    pub pretrain_epochs: Option<usize>,
    /// Next-step pre-training epochs for the series encoder (0 = off).
    #[serde(default)]
    pub lstm_pretrain_epochs: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub mode: TrainMode,
    #[serde(default)]
    pub task: TaskKind,
    /// Global gradient-norm clip.
    #[serde(default = "default_clip")]
    pub clip_norm: f64,
    /// Write a checkpoint every N steps (0 = final only).
    #[serde(default)]
    pub checkpoint_every: usize,
    /// Metapath schemas for the unsupervised objective.
    #[serde(default = "default_metapaths")]
    pub metapaths: Vec<Vec<String>>,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("defaults deserialize")
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.omega) {
            return Err(Error::Config("omega must be in [0, 1]".into()));
        }
        if self.lambda < 0.0 {
            return Err(Error::Config("lambda must be >= 0".into()));
        }
        if self.margin <= 0.0 {
            return Err(Error::Config("hinge margin must be > 0".into()));
        }
        if self.negatives == 0 {
            return Err(Error::Config("negatives must be >= 1".into()));
        }
        if self.learning_rate <= 0.0 {
            return Err(Error::Config("learning_rate must be > 0".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        Ok(())
    }

    pub fn schemas(&self) -> Result<Vec<MetaPathSchema>> {
        self.metapaths
            .iter()
            .map(|types| MetaPathSchema::new(types.clone()))
            .collect()
    }
}

/// Identity of one embedding row, stored in checkpoint metadata so a later
/// process can map its own graph onto the trained rows.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NodeMeta {
    Patient {
        id: String,
    },
    Context {
        item: String,
        value: Option<String>,
        #[serde(rename = "type")]
        type_name: String,
    },
    Diagnosis {
        id: String,
    },
}

/// Everything a checkpoint needs besides tensors: the model configuration,
/// the embedding-row vocabulary, and the diagnosis grouping.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub model: ModelConfig,
    pub n_graph_nodes: usize,
    pub nodes: Vec<NodeMeta>,
    pub diagnoses: Vec<String>,
    pub groups: Vec<String>,
    pub diag_groups: Vec<usize>,
    pub metapaths: Vec<Vec<String>>,
}

impl CheckpointMeta {
    pub fn new(
        model: &ModelConfig,
        graph: &HinGraph,
        vocab: &DiagnosisVocab,
        metapaths: &[Vec<String>],
    ) -> Self {
        let nodes = (0..graph.node_count())
            .map(|i| {
                let info = graph.node(crate::hin::NodeId(i));
                match &info.identity {
                    NodeIdentity::Patient(id) => NodeMeta::Patient { id: id.clone() },
                    NodeIdentity::Context { item, value } => NodeMeta::Context {
                        item: item.clone(),
                        value: value.clone(),
                        type_name: graph.type_name(info.type_idx).to_string(),
                    },
                    NodeIdentity::Diagnosis(id) => NodeMeta::Diagnosis { id: id.clone() },
                }
            })
            .collect();
        CheckpointMeta {
            model: model.clone(),
            n_graph_nodes: graph.node_count(),
            nodes,
            diagnoses: vocab.diagnoses().to_vec(),
            groups: vocab.group_names().to_vec(),
            diag_groups: vocab.group_assignments().to_vec(),
            metapaths: metapaths.to_vec(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string(self).map_err(|e| Error::Checkpoint(e.to_string()))
    }

    pub fn from_json(json: &str) -> Result<Self> {
        serde_json::from_str(json).map_err(|e| Error::Checkpoint(e.to_string()))
    }

    pub fn vocab(&self) -> Result<DiagnosisVocab> {
        let pairs: Vec<(String, String)> = self
            .diagnoses
            .iter()
            .zip(&self.diag_groups)
            .map(|(d, g)| (d.clone(), self.groups[*g].clone()))
            .collect();
        DiagnosisVocab::from_pairs(&pairs)
    }

    /// Display label per embedding row (graph rows only).
    pub fn row_labels(&self) -> Vec<String> {
        self.nodes
            .iter()
            .map(|n| match n {
                NodeMeta::Patient { id } => id.clone(),
                NodeMeta::Diagnosis { id } => id.clone(),
                NodeMeta::Context { item, value, .. } => match value {
                    Some(v) => format!("{item}={v}"),
                    None => item.clone(),
                },
            })
            .collect()
    }
}

/// Maps node identities of a freshly built graph onto checkpoint rows.
pub struct RowMap {
    ctx: HashMap<(String, Option<String>), usize>,
    diag: HashMap<String, usize>,
}

impl RowMap {
    pub fn from_meta(meta: &CheckpointMeta) -> Self {
        let mut ctx = HashMap::new();
        let mut diag = HashMap::new();
        for (row, node) in meta.nodes.iter().enumerate() {
            match node {
                NodeMeta::Context { item, value, .. } => {
                    ctx.insert((item.clone(), value.clone()), row);
                }
                NodeMeta::Diagnosis { id } => {
                    diag.insert(id.clone(), row);
                }
                NodeMeta::Patient { .. } => {}
            }
        }
        RowMap { ctx, diag }
    }

    pub fn context_row(&self, item: &str, value: Option<&str>) -> Option<usize> {
        self.ctx
            .get(&(item.to_string(), value.map(str::to_string)))
            .copied()
    }

    pub fn diagnosis_row(&self, diag: &str) -> Option<usize> {
        self.diag.get(diag).copied()
    }
}

/// Model-ready view of one dataset split.
#[derive(Debug)]
pub struct PreparedData {
    pub patient_ids: Vec<String>,
    pub inputs: Vec<PatientInputs>,
    /// Multi-hot group labels per patient, length `|D'|`.
    pub group_labels: Vec<Vec<f64>>,
    /// `(patient index, vocabulary index)` per target link.
    pub positive_pairs: Vec<(usize, usize)>,
    /// Sorted positive vocabulary indices per patient.
    pub patient_positives: Vec<Vec<usize>>,
    /// Embedding row per vocabulary index.
    pub diag_rows: Vec<usize>,
    pub vocab: DiagnosisVocab,
    /// Human-readable label per embedding row (graph rows only).
    pub row_labels: Vec<String>,
    /// Context nodes dropped because the checkpoint never saw them.
    pub dropped_context_nodes: usize,
    /// Patients without any usable context (skipped in batches).
    pub empty_patients: usize,
}

impl PreparedData {
    fn usable_patients(&self) -> Vec<usize> {
        (0..self.patient_ids.len())
            .filter(|&p| !self.inputs[p].is_empty())
            .collect()
    }

    pub fn code_target(&self, model: &HtadModel, vocab_idx: usize) -> Result<Target> {
        model.code_target(self.diag_rows[vocab_idx], self.vocab.group_of_index(vocab_idx))
    }
}

/// Assemble model inputs from a graph and its side data.
///
/// With `row_map` given (evaluation against a checkpoint), node identities
/// are translated onto checkpoint rows; unseen context nodes are dropped and
/// counted, while unseen target diagnoses are a vocabulary mismatch.
pub fn prepare(
    graph: &HinGraph,
    vocab: &DiagnosisVocab,
    cfg: &ModelConfig,
    series: Option<&BTreeMap<String, SeriesTable>>,
    row_map: Option<&RowMap>,
) -> Result<PreparedData> {
    // Graph type registry index -> model context type index.
    let mut type_map: Vec<Option<usize>> = vec![None; graph.types().len()];
    for (model_idx, name) in cfg.context_types.iter().enumerate() {
        if let Some(graph_idx) = graph.type_index(name) {
            type_map[graph_idx] = Some(model_idx);
        }
    }

    let mut patient_ids = Vec::new();
    let mut inputs = Vec::new();
    let mut group_labels = Vec::new();
    let mut positive_pairs = Vec::new();
    let mut patient_positives = Vec::new();
    let mut dropped = 0usize;

    let patients: Vec<(String, crate::hin::NodeId)> = graph
        .patients()
        .map(|(id, node)| (id.to_string(), node))
        .collect();

    for (patient, _) in &patients {
        let hood = graph.typed_neighborhood(patient)?;
        let mut context = Vec::new();
        for (graph_type, nodes) in &hood.by_type {
            let Some(model_type) = type_map[*graph_type] else {
                return Err(Error::Data(format!(
                    "record type `{}` has no transform in the model configuration",
                    graph.type_name(*graph_type)
                )));
            };
            let mut rows = Vec::with_capacity(nodes.len());
            for node in nodes {
                match row_map {
                    None => rows.push(node.0),
                    Some(map) => {
                        let NodeIdentity::Context { item, value } = &graph.node(*node).identity
                        else {
                            continue;
                        };
                        match map.context_row(item, value.as_deref()) {
                            Some(row) => rows.push(row),
                            None => dropped += 1,
                        }
                    }
                }
            }
            if !rows.is_empty() {
                context.push((model_type, rows));
            }
        }

        let patient_series = match (cfg.series.as_ref(), series) {
            (Some(scfg), Some(tables)) => match tables.get(patient) {
                Some(table) => {
                    if table.channels != scfg.channels {
                        return Err(Error::Data(format!(
                            "series channels {:?} for `{patient}` do not match the model's {:?}",
                            table.channels, scfg.channels
                        )));
                    }
                    Some(table.rows.clone())
                }
                None => None,
            },
            _ => None,
        };

        let mut labels = vec![0.0; vocab.group_count()];
        let mut positives = Vec::new();
        for target in &hood.targets {
            let NodeIdentity::Diagnosis(diag) = &graph.node(*target).identity else {
                continue;
            };
            let Some(vocab_idx) = vocab.diagnosis_index(diag) else {
                return Err(Error::VocabMismatch(format!(
                    "diagnosis `{diag}` is not in the grouping vocabulary"
                )));
            };
            labels[vocab.group_of_index(vocab_idx)] = 1.0;
            positives.push(vocab_idx);
        }
        positives.sort_unstable();
        positives.dedup();
        let patient_idx = patient_ids.len();
        for &v in &positives {
            positive_pairs.push((patient_idx, v));
        }

        patient_ids.push(patient.clone());
        inputs.push(PatientInputs {
            context,
            series: patient_series,
        });
        group_labels.push(labels);
        patient_positives.push(positives);
    }

    // Embedding row per vocabulary diagnosis.
    let mut diag_rows = Vec::with_capacity(vocab.len());
    for diag in vocab.diagnoses() {
        let row = match row_map {
            None => graph.diagnosis(diag).map(|n| n.0),
            Some(map) => map.diagnosis_row(diag),
        };
        match row {
            Some(r) => diag_rows.push(r),
            None => {
                return Err(Error::VocabMismatch(format!(
                    "diagnosis `{diag}` has no trained embedding row"
                )))
            }
        }
    }

    let row_labels = match row_map {
        None => (0..graph.node_count())
            .map(|i| graph.label(crate::hin::NodeId(i)))
            .collect(),
        Some(_) => Vec::new(),
    };

    let empty = inputs.iter().filter(|i| i.is_empty()).count();
    Ok(PreparedData {
        patient_ids,
        inputs,
        group_labels,
        positive_pairs,
        patient_positives,
        diag_rows,
        vocab: vocab.clone(),
        row_labels,
        dropped_context_nodes: dropped,
        empty_patients: empty,
    })
}

/// One training-log line.
#[derive(Debug, Clone)]
pub struct TrainLogRecord {
    pub step: u64,
    pub objective: &'static str,
    pub loss: f64,
    pub millis: u128,
}

/// First- and last-epoch mean loss of one objective.
#[derive(Debug, Default, Clone)]
pub struct ObjectiveStats {
    pub first_epoch_mean: Option<f64>,
    pub last_epoch_mean: Option<f64>,
}

#[derive(Debug, Default, Clone)]
pub struct TrainStats {
    pub steps: u64,
    pub supervised: ObjectiveStats,
    pub unsupervised: ObjectiveStats,
}

#[derive(Default)]
struct LossBuckets {
    entries: Vec<(usize, f64)>,
}

impl LossBuckets {
    fn push(&mut self, bucket: usize, loss: f64) {
        self.entries.push((bucket, loss));
    }

    fn stats(&self) -> ObjectiveStats {
        let mean_of = |bucket: usize| {
            let vals: Vec<f64> = self
                .entries
                .iter()
                .filter(|(b, _)| *b == bucket)
                .map(|(_, l)| *l)
                .collect();
            vals.iter().sum::<f64>() / vals.len() as f64
        };
        let first = self.entries.iter().map(|(b, _)| *b).min();
        let last = self.entries.iter().map(|(b, _)| *b).max();
        ObjectiveStats {
            first_epoch_mean: first.map(mean_of),
            last_epoch_mean: last.map(mean_of),
        }
    }
}

struct SupStream {
    units: Vec<usize>,
    cursor: usize,
}

impl SupStream {
    fn new(units: Vec<usize>) -> Self {
        SupStream { units, cursor: 0 }
    }

    fn next_batch(&mut self, batch: usize, rng: &mut impl Rng) -> Vec<usize> {
        let mut out = Vec::with_capacity(batch);
        while out.len() < batch && !self.units.is_empty() {
            if self.cursor == 0 {
                self.units.shuffle(rng);
            }
            out.push(self.units[self.cursor]);
            self.cursor = (self.cursor + 1) % self.units.len();
        }
        out
    }
}

/// Train `model` in place. `log` receives one record per step; `periodic`
/// fires every `checkpoint_every` steps when configured.
pub fn train(
    model: &HtadModel,
    store: &mut ParameterStore,
    graph: &HinGraph,
    data: &PreparedData,
    tcfg: &TrainingConfig,
    mut log: impl FnMut(TrainLogRecord),
    mut periodic: impl FnMut(u64, &ParameterStore) -> Result<()>,
) -> Result<TrainStats> {
    tcfg.validate()?;
    let mut rng = ChaCha20Rng::seed_from_u64(tcfg.seed);
    let adam = AdamParams {
        lr: tcfg.learning_rate,
        ..AdamParams::default()
    };

    let phases: Vec<(usize, f64)> = match tcfg.mode {
        TrainMode::Joint => vec![(tcfg.epochs, tcfg.omega)],
        TrainMode::PretrainUnsup => vec![
            (tcfg.pretrain_epochs.unwrap_or(tcfg.epochs), 1.0),
            (tcfg.epochs, 0.0),
        ],
    };
    let needs_unsup = phases.iter().any(|(e, omega)| *e > 0 && *omega > 0.0);

    // Unsupervised machinery: one sampler per metapath schema.
    let schemas = tcfg.schemas()?;
    let mut samplers = Vec::new();
    if needs_unsup {
        if schemas.is_empty() {
            return Err(Error::Config(
                "unsupervised training needs at least one metapath".into(),
            ));
        }
        for schema in &schemas {
            let dests = dest_set(graph, schema)?;
            if dests.is_empty() {
                return Err(Error::NoPathInstance(schema.label()));
            }
            samplers.push(NegativeSampler::from_dest_set(
                graph,
                &dests,
                tcfg.negatives,
            )?);
        }
    }

    let sup_units: Vec<usize> = match tcfg.task {
        TaskKind::Phenotype => data.usable_patients(),
        TaskKind::Rank => (0..data.positive_pairs.len())
            .filter(|&i| !data.inputs[data.positive_pairs[i].0].is_empty())
            .collect(),
    };
    if sup_units.is_empty() {
        return Err(Error::Data("no usable supervised training units".into()));
    }
    let steps_per_epoch = sup_units.len().div_ceil(tcfg.batch_size);
    let mut stream = SupStream::new(sup_units);

    let mut global_step = 0u64;
    let mut sup_losses = LossBuckets::default();
    let mut unsup_losses = LossBuckets::default();
    let mut epoch_base = 0usize;

    if tcfg.lstm_pretrain_epochs > 0 {
        pretrain_sequence_encoder(
            model, store, data, tcfg, &adam, &mut rng, &mut global_step, &mut log,
        )?;
    }

    for (epochs, omega) in phases {
        let total_steps = epochs * steps_per_epoch;
        for step_in_phase in 0..total_steps {
            let started = Instant::now();
            let kind = joint_step_selector(omega, &mut rng);
            let mut tape = GradContext::new();
            let (loss_id, objective) = match kind {
                StepKind::Unsupervised => (
                    unsup_batch_loss(model, store, graph, &schemas, &samplers, tcfg, &mut rng, &mut tape)?,
                    "unsup",
                ),
                StepKind::Supervised => {
                    let batch = stream.next_batch(tcfg.batch_size, &mut rng);
                    (
                        sup_batch_loss(model, store, data, tcfg, &batch, &mut rng, &mut tape)?,
                        "sup",
                    )
                }
            };
            let loss = tape.scalar(loss_id);
            if !loss.is_finite() {
                return Err(Error::NonFinite(format!("training loss at step {global_step}")));
            }
            store.zero_grads();
            tape.backward(loss_id, store)?;
            store.clip_global_norm(tcfg.clip_norm);
            store.adam_step(&adam)?;

            global_step += 1;
            let bucket = epoch_base + step_in_phase / steps_per_epoch;
            match objective {
                "sup" => sup_losses.push(bucket, loss),
                _ => unsup_losses.push(bucket, loss),
            }
            log(TrainLogRecord {
                step: global_step,
                objective,
                loss,
                millis: started.elapsed().as_millis(),
            });
            if tcfg.checkpoint_every > 0 && global_step % tcfg.checkpoint_every as u64 == 0 {
                periodic(global_step, store)?;
            }
        }
        epoch_base += epochs;
    }
    Ok(TrainStats {
        steps: global_step,
        supervised: sup_losses.stats(),
        unsupervised: unsup_losses.stats(),
    })
}

#[allow(clippy::too_many_arguments)]
fn unsup_batch_loss(
    model: &HtadModel,
    store: &ParameterStore,
    graph: &HinGraph,
    schemas: &[MetaPathSchema],
    samplers: &[NegativeSampler],
    tcfg: &TrainingConfig,
    rng: &mut impl Rng,
    tape: &mut GradContext,
) -> Result<VarId> {
    let mut terms = Vec::with_capacity(tcfg.batch_size);
    for _ in 0..tcfg.batch_size {
        let r = rng.random_range(0..schemas.len());
        let (src, dst) = sample_metapath_pair(graph, &schemas[r], rng)?;
        let negatives = samplers[r].sample(rng, |row| row == dst.0)?;
        terms.push(unsup_ns_loss(
            model, store, tape, src.0, dst.0, r, &negatives,
        )?);
    }
    let mean = tape.mean(&terms)?;
    let penalty = l2_penalty(tape, model.embed_param(), tcfg.lambda)?;
    tape.add(mean, penalty)
}

fn sup_batch_loss(
    model: &HtadModel,
    store: &ParameterStore,
    data: &PreparedData,
    tcfg: &TrainingConfig,
    batch: &[usize],
    rng: &mut impl Rng,
    tape: &mut GradContext,
) -> Result<VarId> {
    let mut terms = Vec::with_capacity(batch.len());
    match tcfg.task {
        TaskKind::Phenotype => {
            for &p in batch {
                let enc = model.encode_context(store, tape, &data.inputs[p])?;
                let mut reps = Vec::with_capacity(model.config().group_count);
                for g in 0..model.config().group_count {
                    let target = model.group_target(g)?;
                    reps.push(model.attend(store, tape, &enc, &target)?.f);
                }
                let logits = classification_forward(model, store, tape, &reps)?;
                terms.push(classification_loss(tape, &logits, &data.group_labels[p])?);
            }
        }
        TaskKind::Rank => {
            for &pair_idx in batch {
                let (p, pos_idx) = data.positive_pairs[pair_idx];
                let enc = model.encode_context(store, tape, &data.inputs[p])?;

                let neg_idx = sample_hinge_negative(data, p, rng)?;
                let pos_target = data.code_target(model, pos_idx)?;
                let neg_target = data.code_target(model, neg_idx)?;

                let rep_pos = model.attend(store, tape, &enc, &pos_target)?.f;
                let rep_neg = model.attend(store, tape, &enc, &neg_target)?.f;
                let s_pos = ranking_score(model, store, tape, rep_pos, data.diag_rows[pos_idx])?;
                let s_neg = ranking_score(model, store, tape, rep_neg, data.diag_rows[neg_idx])?;
                terms.push(hinge_loss(tape, s_pos, s_neg, tcfg.margin)?);
            }
        }
    }
    let mean = tape.mean(&terms)?;
    let penalty = l2_penalty(tape, model.embed_param(), tcfg.lambda)?;
    tape.add(mean, penalty)
}

/// Uniform draw from the diagnoses not linked to the patient.
fn sample_hinge_negative(data: &PreparedData, patient: usize, rng: &mut impl Rng) -> Result<usize> {
    let positives = &data.patient_positives[patient];
    let vocab = data.vocab.len();
    if positives.len() >= vocab {
        return Err(Error::EmptySupport(
            "patient is linked to every diagnosis".into(),
        ));
    }
    loop {
        let cand = rng.random_range(0..vocab);
        if positives.binary_search(&cand).is_err() {
            return Ok(cand);
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn pretrain_sequence_encoder(
    model: &HtadModel,
    store: &mut ParameterStore,
    data: &PreparedData,
    tcfg: &TrainingConfig,
    adam: &AdamParams,
    rng: &mut impl Rng,
    global_step: &mut u64,
    log: &mut impl FnMut(TrainLogRecord),
) -> Result<()> {
    let Some(encoder) = model.sequence_encoder() else {
        return Ok(());
    };
    let with_series: Vec<usize> = (0..data.inputs.len())
        .filter(|&p| {
            data.inputs[p]
                .series
                .as_ref()
                .is_some_and(|s| s.len() >= 2)
        })
        .collect();
    if with_series.is_empty() {
        return Ok(());
    }
    let mut stream = SupStream::new(with_series);
    let steps = tcfg.lstm_pretrain_epochs * stream.units.len().div_ceil(tcfg.batch_size);
    for _ in 0..steps {
        let started = Instant::now();
        let batch = stream.next_batch(tcfg.batch_size, rng);
        let mut tape = GradContext::new();
        let terms: Vec<VarId> = batch
            .iter()
            .map(|&p| {
                encoder.next_step_loss(
                    store,
                    &mut tape,
                    data.inputs[p].series.as_ref().expect("series present"),
                )
            })
            .collect::<Result<_>>()?;
        let loss_id = tape.mean(&terms)?;
        let loss = tape.scalar(loss_id);
        store.zero_grads();
        tape.backward(loss_id, store)?;
        store.clip_global_norm(tcfg.clip_norm);
        store.adam_step(adam)?;
        *global_step += 1;
        log(TrainLogRecord {
            step: *global_step,
            objective: "unsup",
            loss,
            millis: started.elapsed().as_millis(),
        });
    }
    Ok(())
}

/// Per-group `(score, label)` pairs over all usable patients, for AUC.
pub fn phenotype_scores(
    model: &HtadModel,
    store: &ParameterStore,
    data: &PreparedData,
) -> Result<Vec<Vec<(f64, bool)>>> {
    let groups = model.config().group_count;
    let mut out = vec![Vec::new(); groups];
    for p in data.usable_patients() {
        let mut tape = GradContext::new();
        let enc = model.encode_context(store, &mut tape, &data.inputs[p])?;
        let mut reps = Vec::with_capacity(groups);
        for g in 0..groups {
            let target = model.group_target(g)?;
            reps.push(model.attend(store, &mut tape, &enc, &target)?.f);
        }
        let logits = classification_forward(model, store, &mut tape, &reps)?;
        for g in 0..groups {
            out[g].push((tape.scalar(logits[g]), data.group_labels[p][g] == 1.0));
        }
    }
    Ok(out)
}

/// Scored candidate lists for the ranking task, one per patient with at
/// least one positive. Candidates are vocabulary indices sampled by
/// [`crate::eval::build_ranking_candidates`].
pub fn ranking_lists(
    model: &HtadModel,
    store: &ParameterStore,
    data: &PreparedData,
    list_len: usize,
    seed: u64,
) -> Result<Vec<Vec<(f64, bool)>>> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut lists = Vec::new();
    for p in data.usable_patients() {
        let positives = &data.patient_positives[p];
        if positives.is_empty() {
            continue;
        }
        let candidates =
            crate::eval::build_ranking_candidates(positives, data.vocab.len(), list_len, &mut rng)?;
        let mut tape = GradContext::new();
        let enc = model.encode_context(store, &mut tape, &data.inputs[p])?;
        let mut list = Vec::with_capacity(candidates.len());
        for cand in candidates {
            let target = data.code_target(model, cand)?;
            let rep = model.attend(store, &mut tape, &enc, &target)?.f;
            let score = ranking_score(model, store, &mut tape, rep, data.diag_rows[cand])?;
            list.push((tape.scalar(score), positives.binary_search(&cand).is_ok()));
        }
        lists.push(list);
    }
    Ok(lists)
}

/// Attention traces for every `(patient, linked diagnosis)` pair.
pub fn collect_traces(
    model: &HtadModel,
    store: &ParameterStore,
    data: &PreparedData,
    row_labels: &[String],
) -> Result<Vec<AttentionTrace>> {
    let cfg = model.config();
    let type_label = |key: TypeKey| -> String {
        match key {
            TypeKey::Context(i) => cfg.context_types[i].clone(),
            TypeKey::Series => cfg.series_type_label.clone(),
        }
    };
    let mut traces = Vec::new();
    for p in data.usable_patients() {
        for &v in &data.patient_positives[p] {
            let mut tape = GradContext::new();
            let target = data.code_target(model, v)?;
            let out = model.forward(store, &mut tape, &data.inputs[p], &target)?;
            let weights = crate::model::extract_trace(&tape, &out);
            let alpha = weights
                .alpha
                .iter()
                .map(|(key, entries)| {
                    (
                        type_label(*key),
                        entries
                            .iter()
                            .map(|(row, w)| (row_labels[*row].clone(), *w))
                            .collect(),
                    )
                })
                .collect();
            let beta = weights
                .beta
                .iter()
                .map(|(key, w)| (type_label(*key), *w))
                .collect();
            traces.push(AttentionTrace {
                patient: data.patient_ids[p].clone(),
                diagnosis: data.vocab.diagnoses()[v].clone(),
                beta,
                alpha,
            });
        }
    }
    Ok(traces)
}
