//! Training objectives: multi-label classification, pairwise ranking with a
//! hinge margin, and unsupervised neighbor prediction with negative sampling,
//! plus the stochastic selector that mixes them and the embedding L2 penalty.

use rand::Rng;

use crate::error::{Error, Result};
use crate::hin::{HinGraph, NodeId};
use crate::model::HtadModel;
use crate::numerics::{GradContext, ParamId, ParameterStore, VarId};

/// Classification head logits: a shared layer feeding one output row per
/// diagnosis group. `reps[g]` must be the representation conditioned on
/// group `g`.
pub fn classification_forward(
    model: &HtadModel,
    store: &ParameterStore,
    tape: &mut GradContext,
    reps: &[VarId],
) -> Result<Vec<VarId>> {
    let groups = model.config().group_count;
    if reps.len() != groups {
        return Err(Error::InvalidInput(format!(
            "expected one representation per group ({groups}), got {}",
            reps.len()
        )));
    }
    let (shared_w, shared_b) = model.classifier_shared();
    let (out_w, out_b) = model.classifier_out();
    let mut logits = Vec::with_capacity(groups);
    for (g, &rep) in reps.iter().enumerate() {
        let hidden = tape.linear(store, shared_w, shared_b, rep)?;
        let hidden = tape.tanh(hidden);
        let row = tape.param_row(store, out_w, g);
        let bias = tape.param_elem(store, out_b, g);
        let dot = tape.dot(row, hidden)?;
        logits.push(tape.add(dot, bias)?);
    }
    Ok(logits)
}

/// Mean over groups of binary cross-entropy with logits.
pub fn classification_loss(
    tape: &mut GradContext,
    logits: &[VarId],
    labels: &[f64],
) -> Result<VarId> {
    if logits.len() != labels.len() {
        return Err(Error::InvalidInput(format!(
            "{} logits vs {} labels",
            logits.len(),
            labels.len()
        )));
    }
    let terms: Vec<VarId> = logits
        .iter()
        .zip(labels)
        .map(|(&x, &y)| tape.bce_with_logits(x, y))
        .collect::<Result<_>>()?;
    tape.mean(&terms)
}

/// Dot-product score between a patient representation and the transformed
/// embedding of the diagnosis at `target_row`.
pub fn ranking_score(
    model: &HtadModel,
    store: &ParameterStore,
    tape: &mut GradContext,
    rep: VarId,
    target_row: usize,
) -> Result<VarId> {
    let (w, b) = model.diag_transform();
    let h_d = tape.param_row(store, model.embed_param(), target_row);
    let h_d = tape.linear(store, w, b, h_d)?;
    tape.dot(rep, h_d)
}

/// `max(0, -pos + neg + margin)`.
pub fn hinge_loss(
    tape: &mut GradContext,
    pos: VarId,
    neg: VarId,
    margin: f64,
) -> Result<VarId> {
    tape.hinge(pos, neg, margin)
}

/// Negative-sampling loss for one `(src, dst)` pair under relation
/// `relation_idx`:
/// `-[log s(h_i . h_j + b_r) + sum_k log s(-h_i . h_k - b_r)]`.
pub fn unsup_ns_loss(
    model: &HtadModel,
    store: &ParameterStore,
    tape: &mut GradContext,
    src_row: usize,
    dst_row: usize,
    relation_idx: usize,
    negative_rows: &[usize],
) -> Result<VarId> {
    let embed = model.embed_param();
    let h_i = tape.param_row(store, embed, src_row);
    let h_j = tape.param_row(store, embed, dst_row);
    let b_r = tape.param_elem(store, model.rel_bias_param(), relation_idx);

    let pos_dot = tape.dot(h_i, h_j)?;
    let pos_logit = tape.add(pos_dot, b_r)?;
    let mut terms = vec![tape.log_sigmoid(pos_logit)?];
    for &neg in negative_rows {
        let h_k = tape.param_row(store, embed, neg);
        let neg_dot = tape.dot(h_i, h_k)?;
        let neg_logit = tape.add(neg_dot, b_r)?;
        let negated = tape.neg(neg_logit);
        terms.push(tape.log_sigmoid(negated)?);
    }
    let total = tape.sum(&terms)?;
    Ok(tape.neg(total))
}

/// L2 penalty over the embedding rows touched on this tape:
/// `lambda * sum_i ||h_i||^2`, each distinct row counted once.
pub fn l2_penalty(
    tape: &mut GradContext,
    embed: ParamId,
    lambda: f64,
) -> Result<VarId> {
    if lambda == 0.0 {
        return Ok(tape.scalar_input(0.0));
    }
    let touched = tape.touched_rows(embed);
    if touched.is_empty() {
        return Ok(tape.scalar_input(0.0));
    }
    let norms: Vec<VarId> = touched
        .iter()
        .map(|(_, var)| tape.dot(*var, *var))
        .collect::<Result<_>>()?;
    let total = tape.sum(&norms)?;
    Ok(tape.scale(total, lambda))
}

/// Which objective a training step runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepKind {
    Unsupervised,
    Supervised,
}

/// Pick the objective for one step: unsupervised with probability `omega`.
pub fn joint_step_selector(omega: f64, rng: &mut impl Rng) -> StepKind {
    if rng.random_range(0.0..1.0) < omega {
        StepKind::Unsupervised
    } else {
        StepKind::Supervised
    }
}

/// Draws negatives from a fixed support under a normalized noise
/// distribution, never returning an excluded row.
#[derive(Debug, Clone)]
pub struct NegativeSampler {
    support: Vec<usize>,
    cdf: Vec<f64>,
    k: usize,
}

impl NegativeSampler {
    /// Build from `(row, weight)` pairs; weights are normalized into a
    /// sampling distribution.
    pub fn new(weighted: Vec<(usize, f64)>, k: usize) -> Result<Self> {
        if weighted.is_empty() {
            return Err(Error::EmptySupport("negative sampler".into()));
        }
        if k == 0 {
            return Err(Error::Config("negative sample count must be >= 1".into()));
        }
        let total: f64 = weighted.iter().map(|(_, w)| w).sum();
        if total <= 0.0 || !total.is_finite() {
            return Err(Error::InvalidInput(
                "negative sampler weights must be positive".into(),
            ));
        }
        let mut support = Vec::with_capacity(weighted.len());
        let mut cdf = Vec::with_capacity(weighted.len());
        let mut acc = 0.0;
        for (row, w) in weighted {
            acc += w / total;
            support.push(row);
            cdf.push(acc);
        }
        Ok(NegativeSampler { support, cdf, k })
    }

    /// Unigram degree distribution over a destination set raised to 0.75.
    pub fn from_dest_set(graph: &HinGraph, dest: &[NodeId], k: usize) -> Result<Self> {
        let weighted = dest
            .iter()
            .map(|n| (n.0, (graph.neighbors(*n).len() as f64).powf(0.75)))
            .collect();
        Self::new(weighted, k)
    }

    /// Uniform distribution over explicit rows.
    pub fn uniform(rows: Vec<usize>, k: usize) -> Result<Self> {
        let weighted = rows.into_iter().map(|r| (r, 1.0)).collect();
        Self::new(weighted, k)
    }

    pub fn support(&self) -> &[usize] {
        &self.support
    }

    fn draw(&self, rng: &mut impl Rng) -> usize {
        let u = rng.random_range(0.0..1.0);
        let idx = self.cdf.partition_point(|c| *c <= u);
        self.support[idx.min(self.support.len() - 1)]
    }

    /// Draw `k` negatives, never equal to a row for which `exclude` is true.
    pub fn sample(
        &self,
        rng: &mut impl Rng,
        exclude: impl Fn(usize) -> bool,
    ) -> Result<Vec<usize>> {
        if self.support.iter().all(|r| exclude(*r)) {
            return Err(Error::EmptySupport(
                "every support row is excluded".into(),
            ));
        }
        let mut out = Vec::with_capacity(self.k);
        let mut attempts = 0usize;
        while out.len() < self.k {
            let row = self.draw(rng);
            if !exclude(row) {
                out.push(row);
            }
            attempts += 1;
            if attempts > 10_000 * self.k {
                return Err(Error::EmptySupport(
                    "rejection sampling failed to find negatives".into(),
                ));
            }
        }
        Ok(out)
    }
}
