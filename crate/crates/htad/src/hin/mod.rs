//! Heterogeneous clinical-record graph: typed nodes, neighborhoods, metapaths.

mod graph;
mod metapath;

pub use graph::{
    build_graph, ClinicalRecord, GraphBuilder, HinGraph, NodeId, NodeIdentity, NodeInfo, NodeKind,
    TypedNeighborhood, DIAGNOSIS_TYPE, PATIENT_TYPE,
};
pub use metapath::{dest_set, metapath_connected, sample_metapath_pair, MetaPathSchema};
