//! Typed clinical-record graph.
//!
//! Patients, diagnosis targets, and deduplicated context nodes with undirected
//! typed adjacency. The graph is immutable once built; readers may share it
//! freely.

use std::collections::HashMap;

use crate::error::{Error, Result};

/// Dense node handle; doubles as the embedding row for this node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(pub usize);

pub const PATIENT_TYPE: &str = "patient";
pub const DIAGNOSIS_TYPE: &str = "diagnosis";

/// One input record: `(item, type, value)` observed for a patient.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClinicalRecord {
    pub patient: String,
    pub item: String,
    pub record_type: String,
    /// Absent for value-less record types such as symptoms.
    pub value: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeKind {
    Patient,
    Context,
    Target,
}

/// Identity key of a node. Context nodes sharing `(item, value)` are the
/// same node regardless of which patients reference them.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum NodeIdentity {
    Patient(String),
    Context {
        item: String,
        value: Option<String>,
    },
    Diagnosis(String),
}

#[derive(Debug, Clone)]
pub struct NodeInfo {
    pub kind: NodeKind,
    /// Index into the graph's type registry.
    pub type_idx: usize,
    pub identity: NodeIdentity,
}

/// A patient's neighbors partitioned by context type, targets listed apart.
#[derive(Debug, Clone)]
pub struct TypedNeighborhood {
    pub patient: NodeId,
    /// `(type registry index, sorted neighbor list)` for each non-empty type.
    pub by_type: Vec<(usize, Vec<NodeId>)>,
    pub targets: Vec<NodeId>,
}

impl TypedNeighborhood {
    pub fn is_empty(&self) -> bool {
        self.by_type.is_empty() && self.targets.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct HinGraph {
    types: Vec<String>,
    patient_type: usize,
    diagnosis_type: usize,
    nodes: Vec<NodeInfo>,
    adjacency: Vec<Vec<NodeId>>,
    by_type: Vec<Vec<NodeId>>,
    patient_index: HashMap<String, NodeId>,
    context_index: HashMap<(String, Option<String>), NodeId>,
    diagnosis_index: HashMap<String, NodeId>,
}

impl HinGraph {
    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().map(|a| a.len()).sum::<usize>() / 2
    }

    pub fn node(&self, id: NodeId) -> &NodeInfo {
        &self.nodes[id.0]
    }

    pub fn neighbors(&self, id: NodeId) -> &[NodeId] {
        &self.adjacency[id.0]
    }

    /// Registered node types, patient and diagnosis included.
    pub fn types(&self) -> &[String] {
        &self.types
    }

    pub fn type_name(&self, idx: usize) -> &str {
        &self.types[idx]
    }

    pub fn type_index(&self, name: &str) -> Option<usize> {
        self.types.iter().position(|t| t == name)
    }

    pub fn patient_type_idx(&self) -> usize {
        self.patient_type
    }

    pub fn diagnosis_type_idx(&self) -> usize {
        self.diagnosis_type
    }

    pub fn nodes_of_type(&self, type_idx: usize) -> &[NodeId] {
        &self.by_type[type_idx]
    }

    pub fn patient(&self, id: &str) -> Option<NodeId> {
        self.patient_index.get(id).copied()
    }

    pub fn diagnosis(&self, id: &str) -> Option<NodeId> {
        self.diagnosis_index.get(id).copied()
    }

    pub fn context(&self, item: &str, value: Option<&str>) -> Option<NodeId> {
        self.context_index
            .get(&(item.to_string(), value.map(str::to_string)))
            .copied()
    }

    /// Patient ids in insertion order.
    pub fn patients(&self) -> impl Iterator<Item = (&str, NodeId)> {
        self.by_type[self.patient_type].iter().map(|id| {
            match &self.nodes[id.0].identity {
                NodeIdentity::Patient(p) => (p.as_str(), *id),
                _ => unreachable!("patient type holds only patient nodes"),
            }
        })
    }

    /// Human-readable node label: patient/diagnosis id, or `item=value`.
    pub fn label(&self, id: NodeId) -> String {
        match &self.nodes[id.0].identity {
            NodeIdentity::Patient(p) => p.clone(),
            NodeIdentity::Diagnosis(d) => d.clone(),
            NodeIdentity::Context { item, value } => match value {
                Some(v) => format!("{item}={v}"),
                None => item.clone(),
            },
        }
    }

    /// Partition a patient's neighbors by node type.
    pub fn typed_neighborhood(&self, patient: &str) -> Result<TypedNeighborhood> {
        let pid = self
            .patient(patient)
            .ok_or_else(|| Error::UnknownPatient(patient.to_string()))?;
        let mut per_type: Vec<Vec<NodeId>> = vec![Vec::new(); self.types.len()];
        for &n in self.neighbors(pid) {
            per_type[self.nodes[n.0].type_idx].push(n);
        }
        let targets = std::mem::take(&mut per_type[self.diagnosis_type]);
        let by_type = per_type
            .into_iter()
            .enumerate()
            .filter(|(idx, list)| *idx != self.patient_type && !list.is_empty())
            .collect();
        Ok(TypedNeighborhood {
            patient: pid,
            by_type,
            targets,
        })
    }
}

/// Single-writer builder realizing the record-to-node mapping.
pub struct GraphBuilder {
    graph: HinGraph,
    edge_seen: HashMap<(NodeId, NodeId), ()>,
}

impl GraphBuilder {
    /// `context_types` is the declared finite set of context record types.
    pub fn new(context_types: &[String]) -> Result<Self> {
        let mut types = vec![PATIENT_TYPE.to_string()];
        for t in context_types {
            if t == PATIENT_TYPE || t == DIAGNOSIS_TYPE {
                return Err(Error::Config(format!(
                    "`{t}` cannot be declared as a context type"
                )));
            }
            if types.contains(t) {
                return Err(Error::Config(format!("duplicate context type `{t}`")));
            }
            types.push(t.clone());
        }
        types.push(DIAGNOSIS_TYPE.to_string());
        let n_types = types.len();
        Ok(GraphBuilder {
            graph: HinGraph {
                patient_type: 0,
                diagnosis_type: n_types - 1,
                types,
                nodes: Vec::new(),
                adjacency: Vec::new(),
                by_type: vec![Vec::new(); n_types],
                patient_index: HashMap::new(),
                context_index: HashMap::new(),
                diagnosis_index: HashMap::new(),
            },
            edge_seen: HashMap::new(),
        })
    }

    fn push_node(&mut self, kind: NodeKind, type_idx: usize, identity: NodeIdentity) -> NodeId {
        let id = NodeId(self.graph.nodes.len());
        self.graph.nodes.push(NodeInfo {
            kind,
            type_idx,
            identity,
        });
        self.graph.adjacency.push(Vec::new());
        self.graph.by_type[type_idx].push(id);
        id
    }

    pub fn add_patient(&mut self, id: &str) -> NodeId {
        if let Some(existing) = self.graph.patient_index.get(id) {
            return *existing;
        }
        let node = self.push_node(
            NodeKind::Patient,
            self.graph.patient_type,
            NodeIdentity::Patient(id.to_string()),
        );
        self.graph.patient_index.insert(id.to_string(), node);
        node
    }

    fn add_edge(&mut self, a: NodeId, b: NodeId) {
        let key = if a <= b { (a, b) } else { (b, a) };
        if self.edge_seen.insert(key, ()).is_none() {
            self.graph.adjacency[a.0].push(b);
            self.graph.adjacency[b.0].push(a);
        }
    }

    pub fn add_record(&mut self, record: &ClinicalRecord) -> Result<NodeId> {
        let pid = self
            .graph
            .patient(&record.patient)
            .ok_or_else(|| Error::UnknownPatient(record.patient.clone()))?;
        let type_idx = self
            .graph
            .type_index(&record.record_type)
            .filter(|&t| t != self.graph.patient_type && t != self.graph.diagnosis_type)
            .ok_or_else(|| Error::UndeclaredType(record.record_type.clone()))?;
        let key = (record.item.clone(), record.value.clone());
        let node = match self.graph.context_index.get(&key) {
            Some(&n) => {
                if self.graph.nodes[n.0].type_idx != type_idx {
                    return Err(Error::Data(format!(
                        "context node `{}` seen with conflicting types `{}` and `{}`",
                        self.graph.label(n),
                        self.graph.types[self.graph.nodes[n.0].type_idx],
                        record.record_type
                    )));
                }
                n
            }
            None => {
                let n = self.push_node(
                    NodeKind::Context,
                    type_idx,
                    NodeIdentity::Context {
                        item: record.item.clone(),
                        value: record.value.clone(),
                    },
                );
                self.graph.context_index.insert(key, n);
                n
            }
        };
        self.add_edge(pid, node);
        Ok(node)
    }

    pub fn add_target(&mut self, patient: &str, diagnosis: &str) -> Result<NodeId> {
        let pid = self
            .graph
            .patient(patient)
            .ok_or_else(|| Error::UnknownPatient(patient.to_string()))?;
        let node = match self.graph.diagnosis_index.get(diagnosis) {
            Some(&n) => n,
            None => {
                let n = self.push_node(
                    NodeKind::Target,
                    self.graph.diagnosis_type,
                    NodeIdentity::Diagnosis(diagnosis.to_string()),
                );
                self.graph
                    .diagnosis_index
                    .insert(diagnosis.to_string(), n);
                n
            }
        };
        self.add_edge(pid, node);
        Ok(node)
    }

    pub fn build(mut self) -> HinGraph {
        for adj in &mut self.graph.adjacency {
            adj.sort_unstable();
        }
        self.graph
    }
}

/// Build a graph from declared patients, a record stream, and target pairs.
pub fn build_graph(
    context_types: &[String],
    patients: &[String],
    records: &[ClinicalRecord],
    targets: &[(String, String)],
) -> Result<HinGraph> {
    let mut builder = GraphBuilder::new(context_types)?;
    for p in patients {
        builder.add_patient(p);
    }
    for r in records {
        builder.add_record(r)?;
    }
    for (p, d) in targets {
        builder.add_target(p, d)?;
    }
    Ok(builder.build())
}
