//! Synthetic clinical-record generator with planted diagnostic signals.
//!
//! Each diagnosis owns a small set of indicative items; an assigned diagnosis
//! emits each of its indicative items with its positive value with probability
//! `p_signal` (and with a background value otherwise). Background items are
//! emitted independently of diagnoses, and an optional measurement series
//! drifts for patients carrying a designated diagnosis group. Everything is
//! deterministic given the seed.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::data::{DiagnosisVocab, SeriesTable};
use crate::error::{Error, Result};
use crate::hin::ClinicalRecord;

pub const INDICATOR_POSITIVE_VALUE: &str = "high";
pub const INDICATOR_BACKGROUND_VALUE: &str = "normal";

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct SyntheticSeriesSpec {
    pub channels: usize,
    pub len: usize,
    /// Slope added to channel 0 for patients with a diagnosis in `drift_group`.
    pub drift: f64,
    pub drift_group: usize,
}

#[derive(Debug, Clone)]
pub struct SyntheticSpec {
    pub patients: usize,
    pub diagnoses: usize,
    pub groups: usize,
    /// Indicative items per diagnosis; length must equal `diagnoses`.
    pub indicator_counts: Vec<usize>,
    /// Probability that an assigned diagnosis emits an indicative item with
    /// its positive value; must be in (0.5, 1].
    pub p_signal: f64,
    /// Size of the diagnosis-independent background item pool.
    pub background_items: usize,
    /// Per-patient emission probability for each background item.
    pub background_rate: f64,
    pub max_diagnoses_per_patient: usize,
    /// Frequency imbalance across diagnoses: code `d` is assigned with
    /// weight `(d+1)^-skew`. 0 keeps assignment uniform.
    pub diagnosis_skew: f64,
    pub series: Option<SyntheticSeriesSpec>,
    pub seed: u64,
}

impl SyntheticSpec {
    /// Small default: one single-indicator diagnosis, the rest with 2..=3.
    pub fn new(patients: usize, diagnoses: usize, groups: usize, seed: u64) -> Self {
        let indicator_counts = (0..diagnoses)
            .map(|d| if d == 0 { 1 } else { 2 + d % 2 })
            .collect();
        SyntheticSpec {
            patients,
            diagnoses,
            groups,
            indicator_counts,
            p_signal: 0.9,
            background_items: 18,
            background_rate: 0.3,
            max_diagnoses_per_patient: 3,
            diagnosis_skew: 0.0,
            series: None,
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.patients == 0 || self.diagnoses == 0 || self.groups == 0 {
            return Err(Error::Config("all synthetic counts must be >= 1".into()));
        }
        if self.groups > self.diagnoses {
            return Err(Error::Config(
                "cannot have more groups than diagnoses".into(),
            ));
        }
        if !(self.p_signal > 0.5 && self.p_signal <= 1.0) {
            return Err(Error::Config("p_signal must be in (0.5, 1]".into()));
        }
        if self.indicator_counts.len() != self.diagnoses {
            return Err(Error::Config(
                "indicator_counts length must equal diagnosis count".into(),
            ));
        }
        if self.indicator_counts.iter().any(|c| *c == 0) {
            return Err(Error::Config(
                "every diagnosis needs at least one indicative item".into(),
            ));
        }
        if self.max_diagnoses_per_patient == 0 || self.max_diagnoses_per_patient > self.diagnoses {
            return Err(Error::Config(
                "max_diagnoses_per_patient must be in 1..=diagnoses".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.background_rate) {
            return Err(Error::Config("background_rate must be in [0, 1]".into()));
        }
        if self.diagnosis_skew < 0.0 {
            return Err(Error::Config("diagnosis_skew must be >= 0".into()));
        }
        if let Some(s) = &self.series {
            if s.channels == 0 || s.len == 0 {
                return Err(Error::Config("series needs channels >= 1, len >= 1".into()));
            }
            if s.drift_group >= self.groups {
                return Err(Error::Config("series drift_group out of range".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug)]
pub struct SyntheticData {
    pub patients: Vec<String>,
    pub records: Vec<ClinicalRecord>,
    pub targets: Vec<(String, String)>,
    pub series: BTreeMap<String, SeriesTable>,
    pub vocab: DiagnosisVocab,
    /// Per diagnosis: the indicative item names carrying its signal.
    pub indicators: Vec<Vec<String>>,
}

pub fn diagnosis_name(d: usize) -> String {
    format!("d{d:02}")
}

pub fn indicator_item(diagnosis: usize, j: usize) -> String {
    format!("marker_{diagnosis}_{j}")
}

/// Names of the three context types the generator emits.
pub fn context_types() -> Vec<String> {
    vec!["lab".into(), "symptom".into(), "prescription".into()]
}

pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<SyntheticData> {
    spec.validate()?;
    let mut rng = ChaCha20Rng::seed_from_u64(spec.seed);

    let vocab_pairs: Vec<(String, String)> = (0..spec.diagnoses)
        .map(|d| (diagnosis_name(d), format!("g{}", d % spec.groups)))
        .collect();
    let vocab = DiagnosisVocab::from_pairs(&vocab_pairs)?;

    let indicators: Vec<Vec<String>> = (0..spec.diagnoses)
        .map(|d| {
            (0..spec.indicator_counts[d])
                .map(|j| indicator_item(d, j))
                .collect()
        })
        .collect();

    // Background pool rotates over the three context types; symptoms are
    // value-less, the rest carry one of three levels.
    let bg_types = context_types();
    let background: Vec<(String, String)> = (0..spec.background_items)
        .map(|k| {
            let ty = bg_types[k % bg_types.len()].clone();
            (format!("bg_{ty}_{}", k / bg_types.len()), ty)
        })
        .collect();

    let mut patients = Vec::with_capacity(spec.patients);
    let mut records = Vec::new();
    let mut targets = Vec::new();
    let mut series = BTreeMap::new();

    let diag_weights: Vec<f64> = (0..spec.diagnoses)
        .map(|d| ((d + 1) as f64).powf(-spec.diagnosis_skew))
        .collect();
    let weight_total: f64 = diag_weights.iter().sum();

    for p in 0..spec.patients {
        let patient = format!("p{p:05}");
        patients.push(patient.clone());

        let n_diag = rng.random_range(1..=spec.max_diagnoses_per_patient);
        let mut assigned: Vec<usize> = Vec::with_capacity(n_diag);
        while assigned.len() < n_diag {
            let mut u = rng.random_range(0.0..weight_total);
            let mut pick = spec.diagnoses - 1;
            for (d, w) in diag_weights.iter().enumerate() {
                if u < *w {
                    pick = d;
                    break;
                }
                u -= w;
            }
            if !assigned.contains(&pick) {
                assigned.push(pick);
            }
        }
        assigned.sort_unstable();

        for &d in &assigned {
            targets.push((patient.clone(), diagnosis_name(d)));
            for item in &indicators[d] {
                let value = if rng.random_range(0.0..1.0) < spec.p_signal {
                    INDICATOR_POSITIVE_VALUE
                } else {
                    INDICATOR_BACKGROUND_VALUE
                };
                records.push(ClinicalRecord {
                    patient: patient.clone(),
                    item: item.clone(),
                    record_type: "lab".into(),
                    value: Some(value.into()),
                });
            }
        }

        for (item, ty) in &background {
            if rng.random_range(0.0..1.0) < spec.background_rate {
                let value = if ty == "symptom" {
                    None
                } else {
                    Some(format!("v{}", rng.random_range(0..3)))
                };
                records.push(ClinicalRecord {
                    patient: patient.clone(),
                    item: item.clone(),
                    record_type: ty.clone(),
                    value,
                });
            }
        }

        if let Some(sspec) = &spec.series {
            let drifts = assigned
                .iter()
                .any(|&d| vocab.group_of_index(d) == sspec.drift_group);
            let mut rows = Vec::with_capacity(sspec.len);
            for t in 0..sspec.len {
                let mut row: Vec<f64> = (0..sspec.channels)
                    .map(|_| rng.random_range(-0.25..0.25))
                    .collect();
                if drifts {
                    row[0] += sspec.drift * t as f64 / sspec.len as f64;
                }
                rows.push(row);
            }
            series.insert(
                patient.clone(),
                SeriesTable {
                    channels: (0..sspec.channels).map(|c| format!("ch{c}")).collect(),
                    rows,
                },
            );
        }
    }

    Ok(SyntheticData {
        patients,
        records,
        targets,
        series,
        vocab,
        indicators,
    })
}
