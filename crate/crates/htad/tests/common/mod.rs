//! Shared test support: a straight-line reimplementation of the forward
//! pass, written with plain loops against raw parameter tensors so it shares
//! no code with the tape-based path it checks, plus dataset helpers.

#![allow(dead_code)]

use std::collections::BTreeMap;

use htad::data::SyntheticData;
use htad::hin::ClinicalRecord;
use htad::model::{Activation, AttentionMode, ModelConfig, PatientInputs};
use htad::numerics::{ParameterStore, Tensor};

fn affine(w: &Tensor, b: &Tensor, x: &[f64]) -> Vec<f64> {
    let (rows, cols) = (w.rows(), w.cols());
    let mut out = vec![0.0; rows];
    for r in 0..rows {
        let mut acc = 0.0;
        for c in 0..cols {
            acc += w.data()[r * cols + c] * x[c];
        }
        out[r] = b.data()[r] + acc;
    }
    out
}

fn matvec(w: &Tensor, x: &[f64]) -> Vec<f64> {
    let (rows, cols) = (w.rows(), w.cols());
    let mut out = vec![0.0; rows];
    for r in 0..rows {
        for c in 0..cols {
            out[r] += w.data()[r * cols + c] * x[c];
        }
    }
    out
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn softmax(scores: &[f64]) -> Vec<f64> {
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn activate(cfg: &ModelConfig, v: Vec<f64>) -> Vec<f64> {
    match cfg.activation {
        Activation::Tanh => v.into_iter().map(|x| x.tanh()).collect(),
        Activation::Identity => v,
    }
}

pub struct OracleForward {
    pub f: Vec<f64>,
    pub alpha: Vec<Vec<f64>>,
    pub beta: Vec<f64>,
}

fn param<'s>(store: &'s ParameterStore, name: &str) -> &'s Tensor {
    store.value(store.id(name).expect("parameter exists"))
}

fn lstm_oracle(store: &ParameterStore, cfg: &ModelConfig, series: &[Vec<f64>]) -> Vec<f64> {
    let hidden = cfg.series.as_ref().expect("series config").hidden;
    let gates = ["in", "forget", "cell", "out"];
    let mut h = vec![0.0; hidden];
    let mut c = vec![0.0; hidden];
    for tick in series {
        let mut acts: Vec<Vec<f64>> = Vec::with_capacity(4);
        for g in gates {
            let wx = param(store, &format!("seq_wx_{g}"));
            let wh = param(store, &format!("seq_wh_{g}"));
            let b = param(store, &format!("seq_b_{g}"));
            let from_x = affine(wx, b, tick);
            let from_h = matvec(wh, &h);
            let pre: Vec<f64> = from_x.iter().zip(&from_h).map(|(a, b)| a + b).collect();
            let act: Vec<f64> = if g == "cell" {
                pre.into_iter().map(|v| v.tanh()).collect()
            } else {
                pre.into_iter().map(sigmoid).collect()
            };
            acts.push(act);
        }
        let (i, f, g, o) = (&acts[0], &acts[1], &acts[2], &acts[3]);
        for k in 0..hidden {
            c[k] = f[k] * c[k] + i[k] * g[k];
        }
        for k in 0..hidden {
            h[k] = o[k] * c[k].tanh();
        }
    }
    affine(param(store, "seq_out_w"), param(store, "seq_out_b"), &h)
}

/// Full forward pass: per-type transforms, target-conditioned node and type
/// attention, activations, in the same slot order as the model (context
/// types in input order, series last).
pub fn forward_oracle(
    store: &ParameterStore,
    cfg: &ModelConfig,
    inputs: &PatientInputs,
    target_row: usize,
    target_group: usize,
) -> OracleForward {
    let embed = param(store, "embed");
    let scale = 1.0 / (cfg.attn_dim as f64).sqrt();

    let attention_vector = |table: &str, w: &str, b: &str| -> Vec<f64> {
        match cfg.attention_mode {
            AttentionMode::Group => param(store, table).row(target_group).to_vec(),
            AttentionMode::Transform => affine(
                param(store, w),
                param(store, b),
                embed.row(target_row),
            ),
            AttentionMode::Mean => Vec::new(),
        }
    };
    let q = attention_vector("attn_node_table", "attn_node_w", "attn_node_b");
    let s = attention_vector("attn_type_table", "attn_type_w", "attn_type_b");

    let mut zs: Vec<Vec<f64>> = Vec::new();
    let mut alphas: Vec<Vec<f64>> = Vec::new();
    for (type_idx, rows) in &inputs.context {
        let ty = &cfg.context_types[*type_idx];
        let w = param(store, &format!("ctx_w.{ty}"));
        let b = param(store, &format!("ctx_b.{ty}"));
        let transformed: Vec<Vec<f64>> =
            rows.iter().map(|r| affine(w, b, embed.row(*r))).collect();
        let alpha = match cfg.attention_mode {
            AttentionMode::Mean => vec![1.0 / rows.len() as f64; rows.len()],
            _ => {
                let scores: Vec<f64> = transformed
                    .iter()
                    .map(|h| dot(&q, h) * scale)
                    .collect();
                softmax(&scores)
            }
        };
        let mut combined = vec![0.0; cfg.attn_dim];
        for (k, h) in transformed.iter().enumerate() {
            for (o, v) in combined.iter_mut().zip(h) {
                *o += alpha[k] * v;
            }
        }
        zs.push(activate(cfg, combined));
        alphas.push(alpha);
    }
    if let Some(series) = &inputs.series {
        zs.push(lstm_oracle(store, cfg, series));
    }

    let beta = match cfg.attention_mode {
        AttentionMode::Mean => vec![1.0 / zs.len() as f64; zs.len()],
        _ => {
            let scores: Vec<f64> = zs.iter().map(|z| dot(&s, z) * scale).collect();
            softmax(&scores)
        }
    };
    let mut combined = vec![0.0; cfg.attn_dim];
    for (k, z) in zs.iter().enumerate() {
        for (o, v) in combined.iter_mut().zip(z) {
            *o += beta[k] * v;
        }
    }
    OracleForward {
        f: activate(cfg, combined),
        alpha: alphas,
        beta,
    }
}

/// Dot-product ranking score against the transformed diagnosis embedding.
pub fn ranking_score_oracle(store: &ParameterStore, f: &[f64], target_row: usize) -> f64 {
    let embed = param(store, "embed");
    let h_d = affine(
        param(store, "diag_w"),
        param(store, "diag_b"),
        embed.row(target_row),
    );
    dot(f, &h_d)
}

/// One half of a train/test split of synthetic data.
pub struct SplitPart {
    pub patients: Vec<String>,
    pub records: Vec<ClinicalRecord>,
    pub targets: Vec<(String, String)>,
    pub series: BTreeMap<String, htad::data::SeriesTable>,
}

/// Split generated data into the first `n_train` patients and the rest.
pub fn split_synthetic(data: &SyntheticData, n_train: usize) -> (SplitPart, SplitPart) {
    let is_train: std::collections::HashSet<&str> = data
        .patients
        .iter()
        .take(n_train)
        .map(|p| p.as_str())
        .collect();
    let mut train = SplitPart {
        patients: Vec::new(),
        records: Vec::new(),
        targets: Vec::new(),
        series: BTreeMap::new(),
    };
    let mut test = SplitPart {
        patients: Vec::new(),
        records: Vec::new(),
        targets: Vec::new(),
        series: BTreeMap::new(),
    };
    for p in &data.patients {
        if is_train.contains(p.as_str()) {
            train.patients.push(p.clone());
        } else {
            test.patients.push(p.clone());
        }
    }
    for r in &data.records {
        if is_train.contains(r.patient.as_str()) {
            train.records.push(r.clone());
        } else {
            test.records.push(r.clone());
        }
    }
    for t in &data.targets {
        if is_train.contains(t.0.as_str()) {
            train.targets.push(t.clone());
        } else {
            test.targets.push(t.clone());
        }
    }
    for (p, table) in &data.series {
        if is_train.contains(p.as_str()) {
            train.series.insert(p.clone(), table.clone());
        } else {
            test.series.insert(p.clone(), table.clone());
        }
    }
    (train, test)
}
