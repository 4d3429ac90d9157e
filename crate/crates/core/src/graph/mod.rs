//! Knowledge-enhanced interaction graph: ingestion, construction, expansion
//! and on-disk export.

mod build;
mod ingest;
mod io;
mod store;

pub use build::{build_interaction_graph, build_split_graph, collect_knowledge, expand_knowledge, ExpansionParams, ExpansionReport, GraphBuilder};
pub use ingest::{
    binarize_ratings, filter_low_frequency, read_interactions, read_linkage, read_pairs, read_triples, sample_unseen_negatives,
    split_dataset, write_pairs, DatasetSplit, Interaction, RawRecord, Rejected, Triple,
};
pub use io::{export_graph, import_graph, read_graph_binary, write_graph_binary, GraphManifest, GRAPH_MAGIC};
pub use store::{KigGraph, LabeledPair, NodeId, NodeInfo, NodeRole, FEEDBACK_RELATION};
