//! Quantile binning of numeric record values into categorical bins.

use std::collections::BTreeMap;

use crate::error::{Error, Result};

/// Per-item quantile bin edges learned from training values.
///
/// An item's edges are strictly increasing and exclude the minimum training
/// value, so a constant-valued item has no edges and maps everything to bin 0.
/// Binning is exhaustive over the real line: values below every edge fall in
/// bin 0, values at or above the last edge in the highest bin.
#[derive(Debug, Clone)]
pub struct ValueBinner {
    bins: usize,
    edges: BTreeMap<String, Vec<f64>>,
}

impl ValueBinner {
    /// Learn `bins`-quantile edges per item. Deterministic given sorted input.
    pub fn fit(training: &BTreeMap<String, Vec<f64>>, bins: usize) -> Result<Self> {
        if bins == 0 {
            return Err(Error::Config("bin count must be at least 1".into()));
        }
        let mut edges = BTreeMap::new();
        for (item, values) in training {
            if values.is_empty() {
                return Err(Error::Data(format!(
                    "item `{item}` has no observed values to bin"
                )));
            }
            let mut sorted = values.clone();
            sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite values"));
            let n = sorted.len();
            let mut item_edges: Vec<f64> = Vec::new();
            for q in 1..bins {
                let cut = sorted[(n * q) / bins];
                if cut > sorted[0] && item_edges.last().is_none_or(|last| cut > *last) {
                    item_edges.push(cut);
                }
            }
            edges.insert(item.clone(), item_edges);
        }
        Ok(ValueBinner { bins, edges })
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    /// Map a raw value to its bin index for a fitted item.
    pub fn categorize(&self, item: &str, raw: f64) -> Result<usize> {
        let edges = self
            .edges
            .get(item)
            .ok_or_else(|| Error::Data(format!("no binner fitted for item `{item}`")))?;
        Ok(edges.partition_point(|e| *e <= raw))
    }
}
