//! Graph export.
//!
//! A graph directory holds four files:
//!
//! * `graph.bin`: little-endian adjacency. `b"KIGB"`, `u32` version (1),
//!   `u32` node count, then per node a `u32` degree followed by that many
//!   `(u32 neighbor, u32 relation)` pairs.
//! * `nodes.tsv`: `index<TAB>role<TAB>key<TAB>linked_entity_or_-`.
//! * `relations.tsv`: `id<TAB>name`.
//! * `graph.manifest`: `key = value` counts.

use std::fs::{self, File};
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use super::store::{KigGraph, NodeInfo, NodeRole};
use crate::error::{Error, Result};

pub const GRAPH_MAGIC: &[u8; 4] = b"KIGB";
const GRAPH_VERSION: u32 = 1;

pub fn write_graph_binary<W: Write>(g: &KigGraph, mut w: W) -> Result<()> {
    let ioe = |e| Error::io("<graph stream>", e);
    w.write_all(GRAPH_MAGIC).map_err(ioe)?;
    w.write_all(&GRAPH_VERSION.to_le_bytes()).map_err(ioe)?;
    w.write_all(&(g.node_count() as u32).to_le_bytes()).map_err(ioe)?;
    for i in 0..g.node_count() {
        let list = g.edges(super::NodeId(i as u32));
        w.write_all(&(list.len() as u32).to_le_bytes()).map_err(ioe)?;
        for &(n, r) in list {
            w.write_all(&n.to_le_bytes()).map_err(ioe)?;
            w.write_all(&r.to_le_bytes()).map_err(ioe)?;
        }
    }
    Ok(())
}

/// Reads adjacency lists written by [`write_graph_binary`].
pub fn read_graph_binary<R: Read>(mut r: R) -> Result<Vec<Vec<(u32, u32)>>> {
    let ioe = |e| Error::io("<graph stream>", e);
    let mut buf = Vec::new();
    r.read_to_end(&mut buf).map_err(ioe)?;
    let mut pos = 0usize;
    let next = |pos: &mut usize| -> Result<u32> {
        let b = buf
            .get(*pos..*pos + 4)
            .ok_or_else(|| Error::Format("truncated graph binary".into()))?;
        *pos += 4;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    };
    if buf.get(0..4) != Some(GRAPH_MAGIC.as_slice()) {
        return Err(Error::Format("graph magic mismatch".into()));
    }
    pos += 4;
    let version = next(&mut pos)?;
    if version != GRAPH_VERSION {
        return Err(Error::Format(format!("unsupported graph version {version}")));
    }
    let n = next(&mut pos)? as usize;
    let mut adj = Vec::with_capacity(n);
    for _ in 0..n {
        let deg = next(&mut pos)? as usize;
        let mut list = Vec::with_capacity(deg);
        for _ in 0..deg {
            let a = next(&mut pos)?;
            let b = next(&mut pos)?;
            list.push((a, b));
        }
        adj.push(list);
    }
    if pos != buf.len() {
        return Err(Error::Format("trailing bytes after graph binary".into()));
    }
    Ok(adj)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GraphManifest {
    pub nodes: usize,
    pub users: usize,
    pub items: usize,
    pub entities: usize,
    pub relations: usize,
    pub feedback_edges: usize,
    pub kg_edges: usize,
}

impl GraphManifest {
    pub fn of(g: &KigGraph) -> Self {
        GraphManifest {
            nodes: g.node_count(),
            users: g.user_count(),
            items: g.item_count(),
            entities: g.entity_node_count(),
            relations: g.relations().len(),
            feedback_edges: g.feedback_edge_count(),
            kg_edges: g.kg_edge_count(),
        }
    }

    pub fn to_text(&self) -> String {
        format!(
            "[graph]\nnodes = {}\nusers = {}\nitems = {}\nentities = {}\nrelations = {}\nfeedback_edges = {}\nkg_edges = {}\n",
            self.nodes, self.users, self.items, self.entities, self.relations, self.feedback_edges, self.kg_edges
        )
    }
}

pub fn export_graph(dir: &Path, g: &KigGraph) -> Result<GraphManifest> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let bin = dir.join("graph.bin");
    let f = File::create(&bin).map_err(|e| Error::io(&bin, e))?;
    let mut w = BufWriter::new(f);
    write_graph_binary(g, &mut w)?;
    w.flush().map_err(|e| Error::io(&bin, e))?;

    let mut nodes = String::new();
    for (i, n) in g.nodes().iter().enumerate() {
        nodes.push_str(&format!(
            "{i}\t{}\t{}\t{}\n",
            n.role.as_str(),
            n.key,
            n.entity.as_deref().unwrap_or("-")
        ));
    }
    let path = dir.join("nodes.tsv");
    fs::write(&path, nodes).map_err(|e| Error::io(&path, e))?;

    let rels: String = g.relations().iter().enumerate().map(|(i, r)| format!("{i}\t{r}\n")).collect();
    let path = dir.join("relations.tsv");
    fs::write(&path, rels).map_err(|e| Error::io(&path, e))?;

    let manifest = GraphManifest::of(g);
    let path = dir.join("graph.manifest");
    fs::write(&path, manifest.to_text()).map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}

pub fn import_graph(dir: &Path) -> Result<KigGraph> {
    let bin = dir.join("graph.bin");
    let f = File::open(&bin).map_err(|e| Error::io(&bin, e))?;
    let adjacency = read_graph_binary(std::io::BufReader::new(f))?;

    let path = dir.join("nodes.tsv");
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let mut nodes = Vec::new();
    for (no, line) in text.lines().enumerate() {
        let bad = |m: &str| Error::Parse {
            file: path.display().to_string(),
            line: no + 1,
            message: m.to_string(),
        };
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 4 {
            return Err(bad("expected 4 fields"));
        }
        if f[0].parse::<usize>().ok() != Some(nodes.len()) {
            return Err(bad("node indices must be dense and ordered"));
        }
        let role = NodeRole::parse(f[1]).ok_or_else(|| bad("unknown role"))?;
        nodes.push(NodeInfo {
            role,
            key: f[2].to_string(),
            entity: (f[3] != "-").then(|| f[3].to_string()),
        });
    }
    if nodes.len() != adjacency.len() {
        return Err(Error::Format(format!(
            "nodes.tsv has {} rows but graph.bin has {} nodes",
            nodes.len(),
            adjacency.len()
        )));
    }

    let path = dir.join("relations.tsv");
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let relations: Vec<String> = text
        .lines()
        .map(|l| l.split_once('\t').map(|(_, r)| r.to_string()).unwrap_or_default())
        .collect();

    let g = KigGraph::from_parts(nodes, adjacency, relations);
    g.validate().map_err(Error::Format)?;
    Ok(g)
}
