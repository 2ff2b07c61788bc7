//! Readers and writers for graph files.
//!
//! Edge lists: one edge per line, `u<TAB>v[<TAB>label]`, 0-based ids.
//! An optional `#nodes=N` line fixes the node count; otherwise it is the
//! largest id plus one. Other lines starting with `#` are comments.
//!
//! Collections: one JSON object per line,
//! `{"nodes": 5, "edges": [[0, 1], [1, 2]], "label": 1}`. `label` may be an
//! integer, a list of integers, or absent (then no record may carry one).

use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{GdgnnError, Result};
use crate::graph::{Edge, Graph, GraphCollection, GraphLabel, NodeId};
use crate::tensor::Matrix;

fn parse_err(line: usize, message: impl Into<String>) -> GdgnnError {
    GdgnnError::Parse {
        line,
        message: message.into(),
    }
}

/// Parses an undirected edge list.
pub fn parse_edge_list<R: BufRead>(reader: R) -> Result<Graph> {
    let mut declared: Option<usize> = None;
    let mut edges: Vec<Edge> = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('#') {
            if let Some(n) = rest.trim().strip_prefix("nodes=") {
                declared = Some(n.trim().parse().map_err(|_| parse_err(i + 1, format!("bad node count '{n}'")))?);
            }
            continue;
        }
        let fields: Vec<&str> = line.split(['\t', ' ']).filter(|f| !f.is_empty()).collect();
        if !(2..=3).contains(&fields.len()) {
            return Err(parse_err(i + 1, format!("expected 'u<TAB>v[<TAB>label]', got '{line}'")));
        }
        let id = |f: &str| f.parse::<NodeId>().map_err(|_| parse_err(i + 1, format!("bad node id '{f}'")));
        let (u, v) = (id(fields[0])?, id(fields[1])?);
        edges.push(match fields.get(2) {
            Some(l) => {
                let label = l.parse::<i64>().map_err(|_| parse_err(i + 1, format!("bad edge label '{l}'")))?;
                (u, v, label).into()
            }
            None => (u, v).into(),
        });
    }
    let max_id = edges.iter().map(|e| e.src.max(e.dst) + 1).max().unwrap_or(0);
    let n = match declared {
        Some(n) if n < max_id => {
            return Err(GdgnnError::NodeOutOfRange {
                node: max_id - 1,
                num_nodes: n,
            })
        }
        Some(n) => n,
        None => max_id,
    };
    Graph::build(n, edges, true)
}

pub fn read_edge_list(path: impl AsRef<Path>) -> Result<Graph> {
    parse_edge_list(std::io::BufReader::new(std::fs::File::open(path)?))
}

pub fn write_edge_list<W: Write>(g: &Graph, mut w: W) -> Result<()> {
    writeln!(w, "#nodes={}", g.num_nodes())?;
    for (u, v) in g.edges() {
        writeln!(w, "{u}\t{v}")?;
    }
    Ok(())
}

/// Per-node class labels, one `node<TAB>label` per line.
pub fn parse_node_labels<R: BufRead>(reader: R, num_nodes: usize) -> Result<Vec<usize>> {
    let mut labels = vec![None; num_nodes];
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut it = line.split(['\t', ' ']).filter(|f| !f.is_empty());
        let (Some(a), Some(b), None) = (it.next(), it.next(), it.next()) else {
            return Err(parse_err(i + 1, format!("expected 'node<TAB>label', got '{line}'")));
        };
        let v: usize = a.parse().map_err(|_| parse_err(i + 1, format!("bad node id '{a}'")))?;
        let c: usize = b.parse().map_err(|_| parse_err(i + 1, format!("bad label '{b}'")))?;
        if v >= num_nodes {
            return Err(GdgnnError::NodeOutOfRange { node: v, num_nodes });
        }
        labels[v] = Some(c);
    }
    labels
        .into_iter()
        .enumerate()
        .map(|(v, l)| l.ok_or_else(|| GdgnnError::InvalidParameter(format!("node {v} has no label"))))
        .collect()
}

pub fn read_node_labels(path: impl AsRef<Path>, num_nodes: usize) -> Result<Vec<usize>> {
    parse_node_labels(std::io::BufReader::new(std::fs::File::open(path)?), num_nodes)
}

#[derive(Debug, Serialize, Deserialize)]
struct GraphRecord {
    nodes: usize,
    edges: Vec<(NodeId, NodeId)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    label: Option<GraphLabel>,
}

pub fn parse_collection<R: BufRead>(reader: R) -> Result<GraphCollection> {
    let mut graphs = Vec::new();
    let mut labels = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: GraphRecord = serde_json::from_str(&line).map_err(|e| parse_err(i + 1, e.to_string()))?;
        graphs.push(Graph::build(rec.nodes, rec.edges, true)?);
        labels.push(rec.label);
    }
    let labels = if labels.iter().all(Option::is_none) {
        None
    } else if labels.iter().all(Option::is_some) {
        Some(labels.into_iter().flatten().collect())
    } else {
        return Err(GdgnnError::InvalidParameter("either every record has a label or none does".into()));
    };
    GraphCollection::new(graphs, labels)
}

pub fn read_collection(path: impl AsRef<Path>) -> Result<GraphCollection> {
    parse_collection(std::io::BufReader::new(std::fs::File::open(path)?))
}

pub fn write_collection<W: Write>(c: &GraphCollection, mut w: W) -> Result<()> {
    for (i, g) in c.graphs.iter().enumerate() {
        let rec = GraphRecord {
            nodes: g.num_nodes(),
            edges: g.edges(),
            label: c.labels.as_ref().map(|l| l[i].clone()),
        };
        serde_json::to_writer(&mut w, &rec)?;
        writeln!(w)?;
    }
    Ok(())
}

/// A citation graph with bag-of-words features and class labels.
#[derive(Debug, Clone)]
pub struct CitationData {
    pub graph: Graph,
    pub labels: Vec<usize>,
    pub class_names: Vec<String>,
}

/// Loads the LINQS Cora layout: `cora.content` rows are
/// `paper_id <TAB> 0/1 ... <TAB> class`, `cora.cites` rows are
/// `cited <TAB> citing`. Nodes are numbered in content order, classes in
/// sorted name order. Citations to unknown papers are skipped.
pub fn load_cora(dir: impl AsRef<Path>) -> Result<CitationData> {
    let dir = dir.as_ref();
    let content = std::fs::read_to_string(dir.join("cora.content"))?;
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut raw_labels: Vec<String> = Vec::new();
    for (i, line) in content.lines().enumerate() {
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        if fields.len() < 3 {
            return Err(parse_err(i + 1, "content row needs id, features and class"));
        }
        let feats = fields[1..fields.len() - 1]
            .iter()
            .map(|f| f.parse::<f64>().map_err(|_| parse_err(i + 1, format!("bad feature '{f}'"))))
            .collect::<Result<Vec<_>>>()?;
        if let Some(first) = rows.first() {
            if first.len() != feats.len() {
                return Err(parse_err(i + 1, "feature width changes between rows"));
            }
        }
        index.insert(fields[0].to_string(), rows.len());
        rows.push(feats);
        raw_labels.push(fields[fields.len() - 1].to_string());
    }
    if rows.is_empty() {
        return Err(GdgnnError::EmptyGraph);
    }
    let classes: BTreeMap<&str, usize> = {
        let mut names: Vec<&str> = raw_labels.iter().map(String::as_str).collect();
        names.sort_unstable();
        names.dedup();
        names.into_iter().enumerate().map(|(i, n)| (n, i)).collect()
    };
    let labels = raw_labels.iter().map(|l| classes[l.as_str()]).collect();
    let class_names = classes.keys().map(|s| s.to_string()).collect();

    let cites = std::fs::read_to_string(dir.join("cora.cites"))?;
    let mut edges = Vec::new();
    for (i, line) in cites.lines().enumerate() {
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.is_empty() {
            continue;
        }
        if f.len() != 2 {
            return Err(parse_err(i + 1, "citation row needs two ids"));
        }
        if let (Some(&a), Some(&b)) = (index.get(f[0]), index.get(f[1])) {
            edges.push((a, b));
        }
    }
    let n = rows.len();
    let graph = Graph::build(n, edges, true)?.with_features(Matrix::from_rows(&rows)?)?;
    Ok(CitationData {
        graph,
        labels,
        class_names,
    })
}
