//! Evaluation: AUC-ROC in micro/macro/weighted modes, MAP@K over sampled
//! candidate lists, and attention-weight summaries.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AucMode {
    Micro,
    Macro,
    Weighted,
}

/// AUC of one pooled `(score, label)` set via average ranks, which awards
/// ties 0.5 credit. Errors when either class is missing.
pub fn binary_auc(pairs: &[(f64, bool)]) -> Result<f64> {
    let positives = pairs.iter().filter(|(_, y)| *y).count();
    let negatives = pairs.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(Error::InvalidInput(
            "AUC needs at least one positive and one negative".into(),
        ));
    }
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    order.sort_by(|&a, &b| pairs[a].0.partial_cmp(&pairs[b].0).expect("finite scores"));

    // Average ranks over tie groups, 1-based.
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && pairs[order[j + 1]].0 == pairs[order[i]].0 {
            j += 1;
        }
        let avg_rank = (i + 1 + j + 1) as f64 / 2.0;
        for &idx in &order[i..=j] {
            if pairs[idx].1 {
                rank_sum_pos += avg_rank;
            }
        }
        i = j + 1;
    }
    let p = positives as f64;
    let n = negatives as f64;
    Ok((rank_sum_pos - p * (p + 1.0) / 2.0) / (p * n))
}

/// Multi-group AUC. `groups[g]` holds the `(score, label)` pairs of group `g`.
///
/// Micro pools everything; macro averages per-group AUCs; weighted averages
/// per-group AUCs weighted by positive count. Macro and weighted error on a
/// single-class group.
pub fn auc_roc(groups: &[Vec<(f64, bool)>], mode: AucMode) -> Result<f64> {
    if groups.is_empty() {
        return Err(Error::InvalidInput("no groups to score".into()));
    }
    match mode {
        AucMode::Micro => {
            let pooled: Vec<(f64, bool)> = groups.iter().flatten().copied().collect();
            binary_auc(&pooled)
        }
        AucMode::Macro => {
            let per: Vec<f64> = groups
                .iter()
                .map(|g| binary_auc(g))
                .collect::<Result<_>>()?;
            Ok(per.iter().sum::<f64>() / per.len() as f64)
        }
        AucMode::Weighted => {
            let mut total = 0.0;
            let mut weight = 0.0;
            for g in groups {
                let auc = binary_auc(g)?;
                let pos = g.iter().filter(|(_, y)| *y).count() as f64;
                total += auc * pos;
                weight += pos;
            }
            Ok(total / weight)
        }
    }
}

/// Assemble a fixed-size candidate list: all positives plus uniformly
/// sampled distinct negatives, then shuffled so score ties carry no
/// positional information. Entries are vocabulary indices.
pub fn build_ranking_candidates(
    positives: &[usize],
    vocab_size: usize,
    list_len: usize,
    rng: &mut impl Rng,
) -> Result<Vec<usize>> {
    if vocab_size < list_len {
        return Err(Error::InvalidInput(format!(
            "vocabulary of {vocab_size} codes cannot fill a {list_len}-item list"
        )));
    }
    if positives.len() >= list_len {
        return Err(Error::InvalidInput(format!(
            "{} positives do not fit a {list_len}-item list",
            positives.len()
        )));
    }
    let is_positive: Vec<bool> = {
        let mut v = vec![false; vocab_size];
        for &p in positives {
            if p >= vocab_size {
                return Err(Error::InvalidInput(format!(
                    "positive index {p} outside vocabulary"
                )));
            }
            v[p] = true;
        }
        v
    };
    let mut list: Vec<usize> = positives.to_vec();
    let mut taken = vec![false; vocab_size];
    while list.len() < list_len {
        let cand = rng.random_range(0..vocab_size);
        if !is_positive[cand] && !taken[cand] {
            taken[cand] = true;
            list.push(cand);
        }
    }
    use rand::seq::SliceRandom;
    list.shuffle(rng);
    Ok(list)
}

/// Average precision truncated at `k` for one ranked relevance list.
/// Denominator is `min(k, number of relevant items in the list)`.
pub fn average_precision_at_k(ranked_relevance: &[bool], k: usize) -> Result<f64> {
    if ranked_relevance.is_empty() {
        return Err(Error::InvalidInput("empty ranked list".into()));
    }
    if k == 0 {
        return Err(Error::InvalidInput("K must be >= 1".into()));
    }
    let total_relevant = ranked_relevance.iter().filter(|r| **r).count();
    if total_relevant == 0 {
        return Ok(0.0);
    }
    let mut hits = 0usize;
    let mut precision_sum = 0.0;
    for (i, rel) in ranked_relevance.iter().take(k).enumerate() {
        if *rel {
            hits += 1;
            precision_sum += hits as f64 / (i + 1) as f64;
        }
    }
    Ok(precision_sum / k.min(total_relevant) as f64)
}

/// Mean of AP@K over patients. Each list is `(score, relevant)` per
/// candidate; ranking is by descending score with ties kept in candidate
/// order (stable sort).
pub fn map_at_k(lists: &[Vec<(f64, bool)>], k: usize) -> Result<f64> {
    if lists.is_empty() {
        return Err(Error::InvalidInput("no ranked lists".into()));
    }
    let mut total = 0.0;
    for list in lists {
        if list.is_empty() {
            return Err(Error::InvalidInput("empty ranked list".into()));
        }
        let mut order: Vec<usize> = (0..list.len()).collect();
        order.sort_by(|&a, &b| {
            list[b].0.partial_cmp(&list[a].0).expect("finite scores")
        });
        let ranked: Vec<bool> = order.iter().map(|&i| list[i].1).collect();
        total += average_precision_at_k(&ranked, k)?;
    }
    Ok(total / lists.len() as f64)
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct AucReport {
    pub micro: f64,
    #[serde(rename = "macro")]
    pub macro_: f64,
    pub weighted: f64,
}

/// The metrics report written by evaluation runs.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct MetricsReport {
    pub auc: Option<AucReport>,
    pub map: Option<BTreeMap<String, f64>>,
}

impl MetricsReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// One exported attention trace: every weight used in the forward pass that
/// produced `f_{p,d}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AttentionTrace {
    pub patient: String,
    pub diagnosis: String,
    pub beta: BTreeMap<String, f64>,
    pub alpha: BTreeMap<String, BTreeMap<String, f64>>,
}

/// Shannon entropy of a weight vector (natural log; `0 ln 0 = 0`).
pub fn entropy(weights: &[f64]) -> f64 {
    -weights
        .iter()
        .filter(|w| **w > 0.0)
        .map(|w| w * w.ln())
        .sum::<f64>()
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] * (1.0 - frac) + sorted[hi] * frac
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BetaQuantiles {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TraceEntropy {
    pub patient: String,
    pub diagnosis: String,
    /// Node-attention entropy per context type.
    pub alpha_entropy: BTreeMap<String, f64>,
}

/// Aggregated view over a set of traces: strongest nodes per diagnosis,
/// the spread of type weights, and per-trace attention entropies.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AttentionReport {
    /// Per diagnosis: nodes by mean attention weight, strongest first.
    pub top_nodes: BTreeMap<String, Vec<(String, f64)>>,
    /// Per type: distribution of its beta weight across traces.
    pub beta_quantiles: BTreeMap<String, BetaQuantiles>,
    pub entropies: Vec<TraceEntropy>,
}

const TOP_NODES_PER_DIAGNOSIS: usize = 10;

pub fn attention_report(traces: &[AttentionTrace]) -> Result<AttentionReport> {
    if traces.is_empty() {
        return Err(Error::InvalidInput("no attention traces".into()));
    }
    // Mean alpha per (diagnosis, node) over all traces mentioning it.
    let mut sums: BTreeMap<String, BTreeMap<String, (f64, usize)>> = BTreeMap::new();
    let mut beta_per_type: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    let mut entropies = Vec::with_capacity(traces.len());
    for trace in traces {
        let diag_acc = sums.entry(trace.diagnosis.clone()).or_default();
        let mut alpha_entropy = BTreeMap::new();
        for (ty, weights) in &trace.alpha {
            for (node, w) in weights {
                let slot = diag_acc.entry(node.clone()).or_insert((0.0, 0));
                slot.0 += w;
                slot.1 += 1;
            }
            let vals: Vec<f64> = weights.values().copied().collect();
            alpha_entropy.insert(ty.clone(), entropy(&vals));
        }
        for (ty, w) in &trace.beta {
            beta_per_type.entry(ty.clone()).or_default().push(*w);
        }
        entropies.push(TraceEntropy {
            patient: trace.patient.clone(),
            diagnosis: trace.diagnosis.clone(),
            alpha_entropy,
        });
    }

    let top_nodes = sums
        .into_iter()
        .map(|(diag, nodes)| {
            let mut means: Vec<(String, f64)> = nodes
                .into_iter()
                .map(|(node, (total, count))| (node, total / count as f64))
                .collect();
            means.sort_by(|a, b| b.1.partial_cmp(&a.1).expect("finite").then(a.0.cmp(&b.0)));
            means.truncate(TOP_NODES_PER_DIAGNOSIS);
            (diag, means)
        })
        .collect();

    let beta_quantiles = beta_per_type
        .into_iter()
        .map(|(ty, mut vals)| {
            vals.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
            (
                ty,
                BetaQuantiles {
                    min: vals[0],
                    q1: quantile(&vals, 0.25),
                    median: quantile(&vals, 0.5),
                    q3: quantile(&vals, 0.75),
                    max: vals[vals.len() - 1],
                },
            )
        })
        .collect();

    Ok(AttentionReport {
        top_nodes,
        beta_quantiles,
        entropies,
    })
}
