//! Hierarchical target-attentive aggregation.
//!
//! A patient's context nodes are embedded, transformed per type, and combined
//! in two attention stages, both conditioned on the target diagnosis: node
//! level (within a type) and type level (across types). Measurement series
//! enter as one more type representation through a recurrent encoder. The
//! result is a diagnosis-specific patient vector plus the attention weights
//! that produced it.

mod sequence;

pub use sequence::SequenceEncoder;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{GradContext, ParamId, ParameterStore, Tensor, VarId};

/// How attention vectors are obtained for a target diagnosis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum AttentionMode {
    /// Look the vector up from a per-group table (shared within a group).
    #[default]
    Group,
    /// Transform the raw diagnosis embedding with a learned affine map.
    Transform,
    /// Ablation: uniform weights at both levels, no attention at all.
    Mean,
}

/// Nonlinearity applied after each aggregation stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Tanh,
    Identity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesConfig {
    pub channels: Vec<String>,
    #[serde(default = "default_series_hidden")]
    pub hidden: usize,
}

fn default_series_hidden() -> usize {
    64
}

fn default_embed_dim() -> usize {
    256
}

fn default_attn_dim() -> usize {
    128
}

fn default_series_label() -> String {
    "vitals".into()
}

fn default_context_types() -> Vec<String> {
    crate::data::context_types()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Embedding width F.
    #[serde(default = "default_embed_dim")]
    pub embed_dim: usize,
    /// Attention-space width F'.
    #[serde(default = "default_attn_dim")]
    pub attn_dim: usize,
    #[serde(default)]
    pub attention_mode: AttentionMode,
    #[serde(default)]
    pub activation: Activation,
    /// Declared categorical context types, each with its own transform.
    #[serde(default = "default_context_types")]
    pub context_types: Vec<String>,
    /// Number of diagnosis groups |D'|; filled from the grouping file when 0.
    #[serde(default)]
    pub group_count: usize,
    /// Hidden width of the classification head; defaults to `attn_dim`.
    #[serde(default)]
    pub classifier_hidden: Option<usize>,
    #[serde(default)]
    pub series: Option<SeriesConfig>,
    /// Type label under which the series representation appears in traces.
    #[serde(default = "default_series_label")]
    pub series_type_label: String,
}

impl Default for ModelConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("defaults deserialize")
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.embed_dim == 0 || self.attn_dim == 0 {
            return Err(Error::Config("embed_dim and attn_dim must be > 0".into()));
        }
        if self.group_count == 0 {
            return Err(Error::Config("group_count must be > 0".into()));
        }
        if self.context_types.is_empty() {
            return Err(Error::Config("at least one context type required".into()));
        }
        if let Some(s) = &self.series {
            if s.channels.is_empty() || s.hidden == 0 {
                return Err(Error::Config("series needs channels and hidden > 0".into()));
            }
        }
        Ok(())
    }

    pub fn classifier_hidden(&self) -> usize {
        self.classifier_hidden.unwrap_or(self.attn_dim)
    }
}

/// The diagnosis (or diagnosis group) a forward pass is conditioned on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Target {
    /// Row of the embedding matrix holding this target's embedding.
    pub embed_row: usize,
    /// Dense group id used for table-based attention.
    pub group: usize,
}

/// Which type a representation belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TypeKey {
    /// Index into [`ModelConfig::context_types`].
    Context(usize),
    Series,
}

/// Target-independent encoding of one patient: transformed context
/// embeddings per type, plus the series representation if present.
pub struct EncodedPatient {
    pub per_type: Vec<(usize, Vec<usize>, Vec<VarId>)>,
    pub series_z: Option<VarId>,
}

/// One aggregated type representation with its node-attention weights.
pub struct TypeSlot {
    pub key: TypeKey,
    pub rows: Vec<usize>,
    /// Softmax weights over `rows`; absent for the series type.
    pub alpha: Option<VarId>,
    pub z: VarId,
}

/// A finished diagnosis-conditioned forward pass.
pub struct AttendOutput {
    /// The comprehensive patient representation for this target.
    pub f: VarId,
    pub slots: Vec<TypeSlot>,
    /// Softmax weights over `slots`, in order.
    pub beta: VarId,
}

/// Attention weights of one forward pass, read back off the tape.
#[derive(Debug, Clone)]
pub struct TraceWeights {
    pub alpha: Vec<(TypeKey, Vec<(usize, f64)>)>,
    pub beta: Vec<(TypeKey, f64)>,
}

/// One per-type representation with its node weights, as plain values.
#[derive(Debug, Clone)]
pub struct TypeRepresentation {
    pub key: TypeKey,
    pub vector: Vec<f64>,
    pub alpha: Option<Vec<(usize, f64)>>,
}

/// The diagnosis-specific patient vector and its provenance.
#[derive(Debug, Clone)]
pub struct PatientRepresentation {
    pub vector: Vec<f64>,
    pub types: Vec<TypeRepresentation>,
    pub beta: Vec<f64>,
}

/// Per-patient model inputs as embedding rows.
#[derive(Debug, Clone, Default)]
pub struct PatientInputs {
    /// `(context type index, embedding rows)`; lists must be non-empty.
    pub context: Vec<(usize, Vec<usize>)>,
    /// Measurement series, ticks by channels.
    pub series: Option<Vec<Vec<f64>>>,
}

impl PatientInputs {
    pub fn is_empty(&self) -> bool {
        self.context.is_empty() && self.series.is_none()
    }
}

struct ClassifierParams {
    shared_w: ParamId,
    shared_b: ParamId,
    out_w: ParamId,
    out_b: ParamId,
}

/// The model: a configuration plus resolved parameter handles.
pub struct HtadModel {
    cfg: ModelConfig,
    n_graph_nodes: usize,
    n_relations: usize,
    embed: ParamId,
    node_table: ParamId,
    type_table: ParamId,
    ctx_transforms: Vec<(ParamId, ParamId)>,
    attn_node_w: ParamId,
    attn_node_b: ParamId,
    attn_type_w: ParamId,
    attn_type_b: ParamId,
    diag_w: ParamId,
    diag_b: ParamId,
    classifier: ClassifierParams,
    rel_bias: ParamId,
    sequence: Option<SequenceEncoder>,
}

impl HtadModel {
    /// Create a fresh parameter store for `cfg` over a graph with
    /// `n_graph_nodes` nodes and `n_relations` unsupervised relations.
    ///
    /// The embedding matrix has one row per graph node plus one pseudo-row
    /// per diagnosis group so group-level targets can be conditioned on in
    /// transform mode.
    pub fn init(
        cfg: ModelConfig,
        n_graph_nodes: usize,
        n_relations: usize,
        seed: u64,
    ) -> Result<(Self, ParameterStore)> {
        cfg.validate()?;
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let mut store = ParameterStore::new();
        let f = cfg.embed_dim;
        let fp = cfg.attn_dim;
        let rows = n_graph_nodes + cfg.group_count;

        let embed = store.insert("embed", Tensor::uniform(&[rows, f], -0.05, 0.05, &mut rng))?;
        let node_table = store.insert(
            "attn_node_table",
            Tensor::uniform(&[cfg.group_count, fp], -0.05, 0.05, &mut rng),
        )?;
        let type_table = store.insert(
            "attn_type_table",
            Tensor::uniform(&[cfg.group_count, fp], -0.05, 0.05, &mut rng),
        )?;
        let mut ctx_transforms = Vec::new();
        for ty in &cfg.context_types {
            let w = store.insert(&format!("ctx_w.{ty}"), Tensor::fan_scaled(fp, f, &mut rng))?;
            let b = store.insert(&format!("ctx_b.{ty}"), Tensor::zeros(&[fp]))?;
            ctx_transforms.push((w, b));
        }
        let attn_node_w = store.insert("attn_node_w", Tensor::fan_scaled(fp, f, &mut rng))?;
        let attn_node_b = store.insert("attn_node_b", Tensor::zeros(&[fp]))?;
        let attn_type_w = store.insert("attn_type_w", Tensor::fan_scaled(fp, f, &mut rng))?;
        let attn_type_b = store.insert("attn_type_b", Tensor::zeros(&[fp]))?;
        let diag_w = store.insert("diag_w", Tensor::fan_scaled(fp, f, &mut rng))?;
        let diag_b = store.insert("diag_b", Tensor::zeros(&[fp]))?;

        let hidden = cfg.classifier_hidden();
        let classifier = ClassifierParams {
            shared_w: store.insert("cls_shared_w", Tensor::fan_scaled(hidden, fp, &mut rng))?,
            shared_b: store.insert("cls_shared_b", Tensor::zeros(&[hidden]))?,
            out_w: store.insert(
                "cls_out_w",
                Tensor::fan_scaled(cfg.group_count, hidden, &mut rng),
            )?,
            out_b: store.insert("cls_out_b", Tensor::zeros(&[cfg.group_count]))?,
        };
        let rel_bias = store.insert("rel_bias", Tensor::zeros(&[n_relations]))?;
        let sequence = match &cfg.series {
            Some(s) => Some(SequenceEncoder::init(
                &mut store,
                s.channels.len(),
                s.hidden,
                fp,
                &mut rng,
            )?),
            None => None,
        };

        let model = HtadModel {
            cfg,
            n_graph_nodes,
            n_relations,
            embed,
            node_table,
            type_table,
            ctx_transforms,
            attn_node_w,
            attn_node_b,
            attn_type_w,
            attn_type_b,
            diag_w,
            diag_b,
            classifier,
            rel_bias,
            sequence,
        };
        Ok((model, store))
    }

    /// Rebind parameter handles against a store loaded from a checkpoint.
    pub fn resolve(
        cfg: ModelConfig,
        n_graph_nodes: usize,
        n_relations: usize,
        store: &ParameterStore,
    ) -> Result<Self> {
        cfg.validate()?;
        let embed = store.id("embed")?;
        let rows = n_graph_nodes + cfg.group_count;
        let et = store.value(embed);
        if et.rows() != rows || et.cols() != cfg.embed_dim {
            return Err(Error::Checkpoint(format!(
                "embedding has shape {:?}, expected {rows}x{}",
                et.shape(),
                cfg.embed_dim
            )));
        }
        let mut ctx_transforms = Vec::new();
        for ty in &cfg.context_types {
            ctx_transforms.push((
                store.id(&format!("ctx_w.{ty}"))?,
                store.id(&format!("ctx_b.{ty}"))?,
            ));
        }
        let sequence = match &cfg.series {
            Some(s) => Some(SequenceEncoder::resolve(
                store,
                s.channels.len(),
                s.hidden,
                cfg.attn_dim,
            )?),
            None => None,
        };
        let rel_bias = store.id("rel_bias")?;
        if store.value(rel_bias).len() != n_relations {
            return Err(Error::Checkpoint(format!(
                "rel_bias has {} entries, expected {n_relations}",
                store.value(rel_bias).len()
            )));
        }
        Ok(HtadModel {
            node_table: store.id("attn_node_table")?,
            type_table: store.id("attn_type_table")?,
            attn_node_w: store.id("attn_node_w")?,
            attn_node_b: store.id("attn_node_b")?,
            attn_type_w: store.id("attn_type_w")?,
            attn_type_b: store.id("attn_type_b")?,
            diag_w: store.id("diag_w")?,
            diag_b: store.id("diag_b")?,
            classifier: ClassifierParams {
                shared_w: store.id("cls_shared_w")?,
                shared_b: store.id("cls_shared_b")?,
                out_w: store.id("cls_out_w")?,
                out_b: store.id("cls_out_b")?,
            },
            cfg,
            n_graph_nodes,
            n_relations,
            embed,
            ctx_transforms,
            rel_bias,
            sequence,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    pub fn embed_param(&self) -> ParamId {
        self.embed
    }

    pub fn rel_bias_param(&self) -> ParamId {
        self.rel_bias
    }

    pub fn n_graph_nodes(&self) -> usize {
        self.n_graph_nodes
    }

    pub fn n_relations(&self) -> usize {
        self.n_relations
    }

    /// Target for a low-level diagnosis code at embedding row `row`.
    pub fn code_target(&self, row: usize, group: usize) -> Result<Target> {
        self.check_target(row, group)?;
        Ok(Target {
            embed_row: row,
            group,
        })
    }

    /// Target for a diagnosis group, conditioned on its pseudo-row.
    pub fn group_target(&self, group: usize) -> Result<Target> {
        let row = self.n_graph_nodes + group;
        self.check_target(row, group)?;
        Ok(Target {
            embed_row: row,
            group,
        })
    }

    fn check_target(&self, row: usize, group: usize) -> Result<()> {
        if group >= self.cfg.group_count {
            return Err(Error::InvalidInput(format!(
                "group {group} has no attention row (|D'| = {})",
                self.cfg.group_count
            )));
        }
        if row >= self.n_graph_nodes + self.cfg.group_count {
            return Err(Error::InvalidInput(format!(
                "embedding row {row} out of range"
            )));
        }
        Ok(())
    }

    fn activate(&self, tape: &mut GradContext, x: VarId) -> VarId {
        match self.cfg.activation {
            Activation::Tanh => tape.tanh(x),
            Activation::Identity => x,
        }
    }

    /// Look up a node embedding row.
    pub fn embedding(&self, store: &ParameterStore, tape: &mut GradContext, row: usize) -> VarId {
        tape.param_row(store, self.embed, row)
    }

    /// Project a context node embedding into the attention space with its
    /// type-specific transform.
    pub fn transform_context(
        &self,
        store: &ParameterStore,
        tape: &mut GradContext,
        type_idx: usize,
        h: VarId,
    ) -> Result<VarId> {
        let (w, b) = *self
            .ctx_transforms
            .get(type_idx)
            .ok_or_else(|| Error::InvalidInput(format!("unregistered context type {type_idx}")))?;
        tape.linear(store, w, b, h)
    }

    /// Node-level attention vector for a target.
    pub fn attention_vector_node(
        &self,
        store: &ParameterStore,
        tape: &mut GradContext,
        target: &Target,
    ) -> Result<VarId> {
        self.check_target(target.embed_row, target.group)?;
        match self.cfg.attention_mode {
            AttentionMode::Group => Ok(tape.param_row(store, self.node_table, target.group)),
            AttentionMode::Transform => {
                let h_d = tape.param_row(store, self.embed, target.embed_row);
                tape.linear(store, self.attn_node_w, self.attn_node_b, h_d)
            }
            AttentionMode::Mean => Err(Error::InvalidInput(
                "mean aggregation has no attention vectors".into(),
            )),
        }
    }

    /// Type-level attention vector for a target.
    pub fn attention_vector_type(
        &self,
        store: &ParameterStore,
        tape: &mut GradContext,
        target: &Target,
    ) -> Result<VarId> {
        self.check_target(target.embed_row, target.group)?;
        match self.cfg.attention_mode {
            AttentionMode::Group => Ok(tape.param_row(store, self.type_table, target.group)),
            AttentionMode::Transform => {
                let h_d = tape.param_row(store, self.embed, target.embed_row);
                tape.linear(store, self.attn_type_w, self.attn_type_b, h_d)
            }
            AttentionMode::Mean => Err(Error::InvalidInput(
                "mean aggregation has no attention vectors".into(),
            )),
        }
    }

    /// Transform every context node once; series encoded once. Both are
    /// target-independent, so one encoding serves many targets on one tape.
    pub fn encode_context(
        &self,
        store: &ParameterStore,
        tape: &mut GradContext,
        inputs: &PatientInputs,
    ) -> Result<EncodedPatient> {
        if inputs.is_empty() {
            return Err(Error::InvalidInput(
                "patient has no context data at all".into(),
            ));
        }
        let mut per_type = Vec::new();
        for (type_idx, rows) in &inputs.context {
            if rows.is_empty() {
                return Err(Error::InvalidInput(
                    "empty neighborhood list; omit the type instead".into(),
                ));
            }
            let mut transformed = Vec::with_capacity(rows.len());
            for &row in rows {
                let h = self.embedding(store, tape, row);
                transformed.push(self.transform_context(store, tape, *type_idx, h)?);
            }
            per_type.push((*type_idx, rows.clone(), transformed));
        }
        let series_z = match (&inputs.series, &self.sequence) {
            (Some(series), Some(enc)) => Some(enc.encode(store, tape, series)?),
            (Some(_), None) => {
                return Err(Error::Config(
                    "series provided but the model has no series encoder".into(),
                ))
            }
            (None, _) => None,
        };
        Ok(EncodedPatient { per_type, series_z })
    }

    /// Encode a measurement series into a type representation (Eq-style
    /// projection of the last hidden state; not diagnosis specific).
    pub fn encode_time_series(
        &self,
        store: &ParameterStore,
        tape: &mut GradContext,
        series: &[Vec<f64>],
    ) -> Result<VarId> {
        let enc = self
            .sequence
            .as_ref()
            .ok_or_else(|| Error::Config("model has no series encoder".into()))?;
        enc.encode(store, tape, series)
    }

    pub fn sequence_encoder(&self) -> Option<&SequenceEncoder> {
        self.sequence.as_ref()
    }

    fn aggregate_transformed(
        &self,
        store: &ParameterStore,
        tape: &mut GradContext,
        type_idx: usize,
        rows: &[usize],
        transformed: &[VarId],
        target: &Target,
    ) -> Result<TypeSlot> {
        let alpha = match self.cfg.attention_mode {
            AttentionMode::Mean => {
                let n = transformed.len() as f64;
                tape.input(vec![1.0 / n; transformed.len()])
            }
            _ => {
                let q = self.attention_vector_node(store, tape, target)?;
                let scores: Vec<VarId> = transformed
                    .iter()
                    .map(|&hp| tape.scaled_dot(q, hp, self.cfg.attn_dim))
                    .collect::<Result<_>>()?;
                let stacked = tape.stack(&scores)?;
                tape.softmax(stacked)?
            }
        };
        let combined = tape.weighted_sum(alpha, transformed)?;
        let z = self.activate(tape, combined);
        Ok(TypeSlot {
            key: TypeKey::Context(type_idx),
            rows: rows.to_vec(),
            alpha: Some(alpha),
            z,
        })
    }

    /// Aggregate one non-empty same-type neighborhood for a target.
    pub fn node_level_aggregate(
        &self,
        store: &ParameterStore,
        tape: &mut GradContext,
        type_idx: usize,
        rows: &[usize],
        target: &Target,
    ) -> Result<TypeSlot> {
        if rows.is_empty() {
            return Err(Error::InvalidInput(
                "empty neighborhood; the type must be omitted".into(),
            ));
        }
        let mut transformed = Vec::with_capacity(rows.len());
        for &row in rows {
            let h = self.embedding(store, tape, row);
            transformed.push(self.transform_context(store, tape, type_idx, h)?);
        }
        self.aggregate_transformed(store, tape, type_idx, rows, &transformed, target)
    }

    /// Combine type representations into the patient representation.
    /// The softmax runs over present types only.
    pub fn type_level_aggregate(
        &self,
        store: &ParameterStore,
        tape: &mut GradContext,
        slots: Vec<TypeSlot>,
        target: &Target,
    ) -> Result<AttendOutput> {
        if slots.is_empty() {
            return Err(Error::InvalidInput("no type representations present".into()));
        }
        let beta = match self.cfg.attention_mode {
            AttentionMode::Mean => {
                let n = slots.len() as f64;
                tape.input(vec![1.0 / n; slots.len()])
            }
            _ => {
                let s = self.attention_vector_type(store, tape, target)?;
                let scores: Vec<VarId> = slots
                    .iter()
                    .map(|slot| tape.scaled_dot(s, slot.z, self.cfg.attn_dim))
                    .collect::<Result<_>>()?;
                let stacked = tape.stack(&scores)?;
                tape.softmax(stacked)?
            }
        };
        let zs: Vec<VarId> = slots.iter().map(|s| s.z).collect();
        let combined = tape.weighted_sum(beta, &zs)?;
        let f = self.activate(tape, combined);
        Ok(AttendOutput { f, slots, beta })
    }

    /// Run both attention stages against an already-encoded patient.
    pub fn attend(
        &self,
        store: &ParameterStore,
        tape: &mut GradContext,
        enc: &EncodedPatient,
        target: &Target,
    ) -> Result<AttendOutput> {
        let mut slots = Vec::with_capacity(enc.per_type.len() + 1);
        for (type_idx, rows, transformed) in &enc.per_type {
            slots.push(self.aggregate_transformed(
                store,
                tape,
                *type_idx,
                rows,
                transformed,
                target,
            )?);
        }
        if let Some(z) = enc.series_z {
            slots.push(TypeSlot {
                key: TypeKey::Series,
                rows: Vec::new(),
                alpha: None,
                z,
            });
        }
        self.type_level_aggregate(store, tape, slots, target)
    }

    /// Full forward pass for one `(patient, target)` pair.
    pub fn forward(
        &self,
        store: &ParameterStore,
        tape: &mut GradContext,
        inputs: &PatientInputs,
        target: &Target,
    ) -> Result<AttendOutput> {
        let enc = self.encode_context(store, tape, inputs)?;
        self.attend(store, tape, &enc, target)
    }

    /// Forward pass returning plain-value representation and trace.
    pub fn patient_representation(
        &self,
        store: &ParameterStore,
        tape: &mut GradContext,
        inputs: &PatientInputs,
        target: &Target,
    ) -> Result<(PatientRepresentation, TraceWeights)> {
        let out = self.forward(store, tape, inputs, target)?;
        Ok((extract_representation(tape, &out), extract_trace(tape, &out)))
    }

    pub(crate) fn classifier_shared(&self) -> (ParamId, ParamId) {
        (self.classifier.shared_w, self.classifier.shared_b)
    }

    pub(crate) fn classifier_out(&self) -> (ParamId, ParamId) {
        (self.classifier.out_w, self.classifier.out_b)
    }

    pub(crate) fn diag_transform(&self) -> (ParamId, ParamId) {
        (self.diag_w, self.diag_b)
    }
}

/// Read the attention weights of a finished pass back off the tape.
pub fn extract_trace(tape: &GradContext, out: &AttendOutput) -> TraceWeights {
    let mut alpha = Vec::new();
    for slot in &out.slots {
        if let Some(a) = slot.alpha {
            let weights = tape.value(a);
            alpha.push((
                slot.key,
                slot.rows
                    .iter()
                    .copied()
                    .zip(weights.iter().copied())
                    .collect(),
            ));
        }
    }
    let beta_vals = tape.value(out.beta);
    let beta = out
        .slots
        .iter()
        .map(|s| s.key)
        .zip(beta_vals.iter().copied())
        .collect();
    TraceWeights { alpha, beta }
}

/// Read the representation vectors of a finished pass back off the tape.
pub fn extract_representation(tape: &GradContext, out: &AttendOutput) -> PatientRepresentation {
    let types = out
        .slots
        .iter()
        .map(|slot| TypeRepresentation {
            key: slot.key,
            vector: tape.value(slot.z).to_vec(),
            alpha: slot.alpha.map(|a| {
                slot.rows
                    .iter()
                    .copied()
                    .zip(tape.value(a).iter().copied())
                    .collect()
            }),
        })
        .collect();
    PatientRepresentation {
        vector: tape.value(out.f).to_vec(),
        types,
        beta: tape.value(out.beta).to_vec(),
    }
}
