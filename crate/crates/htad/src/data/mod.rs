//! Data ingestion: record and target files, diagnosis grouping, value
//! binning, series tables, and the synthetic generator.

mod binner;
mod synthetic;

pub use binner::ValueBinner;
pub use synthetic::{
    context_types, diagnosis_name, generate_synthetic, indicator_item, SyntheticData,
    SyntheticSeriesSpec, SyntheticSpec, INDICATOR_BACKGROUND_VALUE, INDICATOR_POSITIVE_VALUE,
};

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hin::ClinicalRecord;

/// Diagnosis code list with a dense code-to-group mapping.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DiagnosisVocab {
    diagnoses: Vec<String>,
    group_names: Vec<String>,
    group_of: Vec<usize>,
    index: HashMap<String, usize>,
}

impl DiagnosisVocab {
    /// Build from `(diagnosis, group)` pairs. Group ids are dense in first
    /// appearance order; a diagnosis may appear only once.
    pub fn from_pairs(pairs: &[(String, String)]) -> Result<Self> {
        let mut diagnoses = Vec::new();
        let mut group_names: Vec<String> = Vec::new();
        let mut group_of = Vec::new();
        let mut index = HashMap::new();
        for (diag, group) in pairs {
            if index.contains_key(diag) {
                return Err(Error::Data(format!(
                    "diagnosis `{diag}` mapped to more than one group"
                )));
            }
            let gid = match group_names.iter().position(|g| g == group) {
                Some(g) => g,
                None => {
                    group_names.push(group.clone());
                    group_names.len() - 1
                }
            };
            index.insert(diag.clone(), diagnoses.len());
            diagnoses.push(diag.clone());
            group_of.push(gid);
        }
        Ok(DiagnosisVocab {
            diagnoses,
            group_names,
            group_of,
            index,
        })
    }

    pub fn len(&self) -> usize {
        self.diagnoses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diagnoses.is_empty()
    }

    pub fn group_count(&self) -> usize {
        self.group_names.len()
    }

    pub fn diagnoses(&self) -> &[String] {
        &self.diagnoses
    }

    pub fn group_names(&self) -> &[String] {
        &self.group_names
    }

    pub fn diagnosis_index(&self, diag: &str) -> Option<usize> {
        self.index.get(diag).copied()
    }

    pub fn group_of_index(&self, idx: usize) -> usize {
        self.group_of[idx]
    }

    pub fn group_of(&self, diag: &str) -> Option<usize> {
        self.diagnosis_index(diag).map(|i| self.group_of[i])
    }

    pub fn group_assignments(&self) -> &[usize] {
        &self.group_of
    }
}

#[derive(Serialize, Deserialize)]
struct RecordLine {
    patient: String,
    item: String,
    #[serde(rename = "type")]
    record_type: String,
    value: Option<String>,
}

#[derive(Serialize, Deserialize)]
struct TargetLine {
    patient: String,
    diagnosis: String,
}

#[derive(Serialize, Deserialize)]
struct GroupingLine {
    diagnosis: String,
    group: String,
}

fn jsonl_lines(path: &Path) -> Result<impl Iterator<Item = (usize, std::io::Result<String>)>> {
    let file = File::open(path)
        .map_err(|e| Error::Data(format!("cannot open {}: {e}", path.display())))?;
    Ok(BufReader::new(file).lines().enumerate())
}

fn parse_line<T: for<'de> Deserialize<'de>>(path: &Path, lineno: usize, line: &str) -> Result<T> {
    serde_json::from_str(line)
        .map_err(|e| Error::Data(format!("{}:{}: {e}", path.display(), lineno + 1)))
}

/// Read clinical records from a JSON Lines file
/// (`{"patient", "item", "type", "value"}` per line).
pub fn read_records_jsonl(path: &Path) -> Result<Vec<ClinicalRecord>> {
    let mut out = Vec::new();
    for (lineno, line) in jsonl_lines(path)? {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: RecordLine = parse_line(path, lineno, &line)?;
        out.push(ClinicalRecord {
            patient: parsed.patient,
            item: parsed.item,
            record_type: parsed.record_type,
            value: parsed.value,
        });
    }
    Ok(out)
}

pub fn write_records_jsonl(path: &Path, records: &[ClinicalRecord]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for r in records {
        let line = RecordLine {
            patient: r.patient.clone(),
            item: r.item.clone(),
            record_type: r.record_type.clone(),
            value: r.value.clone(),
        };
        serde_json::to_writer(&mut w, &line).map_err(|e| Error::Data(e.to_string()))?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// Read `(patient, diagnosis)` target pairs from a JSON Lines file.
pub fn read_targets_jsonl(path: &Path) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (lineno, line) in jsonl_lines(path)? {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: TargetLine = parse_line(path, lineno, &line)?;
        out.push((parsed.patient, parsed.diagnosis));
    }
    Ok(out)
}

pub fn write_targets_jsonl(path: &Path, targets: &[(String, String)]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for (patient, diagnosis) in targets {
        let line = TargetLine {
            patient: patient.clone(),
            diagnosis: diagnosis.clone(),
        };
        serde_json::to_writer(&mut w, &line).map_err(|e| Error::Data(e.to_string()))?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// Load a diagnosis-to-group mapping file (`{"diagnosis", "group"}` lines).
pub fn load_grouping(path: &Path) -> Result<DiagnosisVocab> {
    let mut pairs = Vec::new();
    for (lineno, line) in jsonl_lines(path)? {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: GroupingLine = parse_line(path, lineno, &line)?;
        pairs.push((parsed.diagnosis, parsed.group));
    }
    DiagnosisVocab::from_pairs(&pairs)
}

pub fn write_grouping(path: &Path, vocab: &DiagnosisVocab) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for (i, diag) in vocab.diagnoses().iter().enumerate() {
        let line = GroupingLine {
            diagnosis: diag.clone(),
            group: vocab.group_names()[vocab.group_of_index(i)].clone(),
        };
        serde_json::to_writer(&mut w, &line).map_err(|e| Error::Data(e.to_string()))?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// One patient's measurement series: a header of channel names and one row
/// of channel values per tick.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesTable {
    pub channels: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

/// Read every `<patient>.csv` under `dir` into a patient-keyed map.
pub fn read_series_dir(dir: &Path) -> Result<std::collections::BTreeMap<String, SeriesTable>> {
    let mut out = std::collections::BTreeMap::new();
    let mut entries: Vec<_> = std::fs::read_dir(dir)
        .map_err(|e| Error::Data(format!("cannot open series dir {}: {e}", dir.display())))?
        .collect::<std::io::Result<_>>()?;
    entries.sort_by_key(|e| e.file_name());
    for entry in entries {
        let path = entry.path();
        if path.extension().and_then(|e| e.to_str()) != Some("csv") {
            continue;
        }
        let patient = path
            .file_stem()
            .and_then(|s| s.to_str())
            .ok_or_else(|| Error::Data(format!("bad series file name {}", path.display())))?
            .to_string();
        out.insert(patient, read_series_csv(&path)?);
    }
    Ok(out)
}

fn read_series_csv(path: &Path) -> Result<SeriesTable> {
    let file = File::open(path)?;
    let mut lines = BufReader::new(file).lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Data(format!("{}: empty series file", path.display())))??;
    let channels: Vec<String> = header.split(',').map(str::to_string).collect();
    let mut rows = Vec::new();
    for (lineno, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let row: Vec<f64> = line
            .split(',')
            .map(|v| {
                v.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Data(format!("{}:{}: {e}", path.display(), lineno + 2)))
            })
            .collect::<Result<_>>()?;
        if row.len() != channels.len() {
            return Err(Error::Data(format!(
                "{}:{}: expected {} columns, got {}",
                path.display(),
                lineno + 2,
                channels.len(),
                row.len()
            )));
        }
        rows.push(row);
    }
    Ok(SeriesTable { channels, rows })
}

pub fn write_series_dir(
    dir: &Path,
    series: &std::collections::BTreeMap<String, SeriesTable>,
) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    for (patient, table) in series {
        let path = dir.join(format!("{patient}.csv"));
        let mut w = BufWriter::new(File::create(path)?);
        writeln!(w, "{}", table.channels.join(","))?;
        for row in &table.rows {
            let line: Vec<String> = row.iter().map(|v| format!("{v:.6}")).collect();
            writeln!(w, "{}", line.join(","))?;
        }
        w.flush()?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vocab_dense_group_ids() {
        let v = DiagnosisVocab::from_pairs(&[
            ("d1".into(), "g1".into()),
            ("d2".into(), "g2".into()),
            ("d3".into(), "g1".into()),
        ])
        .unwrap();
        assert_eq!(v.group_count(), 2);
        assert_eq!(v.group_of("d1"), Some(0));
        assert_eq!(v.group_of("d2"), Some(1));
        assert_eq!(v.group_of("d3"), Some(0));
    }

    #[test]
    fn one_code_per_group() {
        let pairs: Vec<(String, String)> = (0..7)
            .map(|i| (format!("d{i}"), format!("g{i}")))
            .collect();
        let v = DiagnosisVocab::from_pairs(&pairs).unwrap();
        assert_eq!(v.group_count(), 7);
    }

    #[test]
    fn duplicate_diagnosis_mapping_is_error() {
        let res = DiagnosisVocab::from_pairs(&[
            ("d1".into(), "g1".into()),
            ("d1".into(), "g2".into()),
        ]);
        assert!(res.is_err());
    }

    #[test]
    fn grouping_file_matching_paper_scale() {
        // 6016 codes spread over 25 groups.
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("grouping.jsonl");
        let pairs: Vec<(String, String)> = (0..6016)
            .map(|i| (format!("icd{i:04}"), format!("grp{:02}", i % 25)))
            .collect();
        let v = DiagnosisVocab::from_pairs(&pairs).unwrap();
        write_grouping(&path, &v).unwrap();
        let loaded = load_grouping(&path).unwrap();
        assert_eq!(loaded.len(), 6016);
        assert_eq!(loaded.group_count(), 25);
    }

    #[test]
    fn records_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("records.jsonl");
        let records = vec![
            ClinicalRecord {
                patient: "p1".into(),
                item: "glucose".into(),
                record_type: "lab".into(),
                value: Some("high".into()),
            },
            ClinicalRecord {
                patient: "p1".into(),
                item: "fever".into(),
                record_type: "symptom".into(),
                value: None,
            },
        ];
        write_records_jsonl(&path, &records).unwrap();
        assert_eq!(read_records_jsonl(&path).unwrap(), records);
    }

    #[test]
    fn malformed_record_line_reports_position() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.jsonl");
        std::fs::write(&path, "{\"patient\": \"p1\"}\n").unwrap();
        let err = read_records_jsonl(&path).unwrap_err();
        assert!(err.to_string().contains(":1"));
    }

    #[test]
    fn series_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let sdir = dir.path().join("series");
        let mut map = std::collections::BTreeMap::new();
        map.insert(
            "p1".to_string(),
            SeriesTable {
                channels: vec!["hr".into(), "bp".into()],
                rows: vec![vec![0.5, 1.25], vec![-0.75, 2.0]],
            },
        );
        write_series_dir(&sdir, &map).unwrap();
        let loaded = read_series_dir(&sdir).unwrap();
        assert_eq!(loaded["p1"].channels, vec!["hr", "bp"]);
        assert_eq!(loaded["p1"].rows, map["p1"].rows);
    }
}
