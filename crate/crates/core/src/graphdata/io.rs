//! Plain-text graph files.
//!
//! * edges: whitespace-separated `src dst` integer pairs, one per line, `#`
//!   starts a comment;
//! * features: headerless CSV, one row per node;
//! * labels: headerless CSV `node_id,class_id`; absent nodes are unlabelled.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::graph::Graph;
use super::labels::LabelState;
use crate::error::{Error, Result};
use crate::linalg::{DenseMatrix, SparseAdjacency};

/// Paths of one on-disk dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphFiles {
    pub edges: PathBuf,
    pub features: PathBuf,
    pub labels: PathBuf,
    /// Class count; inferred as `max class id + 1` when absent.
    #[serde(default)]
    pub classes: Option<usize>,
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

fn read_edges(path: &Path) -> Result<Vec<(usize, usize, usize)>> {
    let text = fs::read_to_string(path)?;
    let mut edges = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let mut next = |what: &str| -> Result<usize> {
            let tok = parts
                .next()
                .ok_or_else(|| parse_err(path, line_no, format!("missing {what} node id")))?;
            tok.parse::<usize>()
                .map_err(|_| parse_err(path, line_no, format!("bad {what} node id `{tok}`")))
        };
        let src = next("source")?;
        let dst = next("target")?;
        if parts.next().is_some() {
            return Err(parse_err(path, line_no, "expected exactly two node ids"));
        }
        edges.push((line_no, src, dst));
    }
    Ok(edges)
}

fn csv_reader(path: &Path) -> Result<csv::Reader<fs::File>> {
    let file = fs::File::open(path)?;
    Ok(csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(file))
}

fn csv_line(pos: Option<&csv::Position>) -> usize {
    pos.map_or(0, |p| p.line() as usize)
}

fn read_features(path: &Path) -> Result<DenseMatrix> {
    let mut rdr = csv_reader(path)?;
    let mut data = Vec::new();
    let mut rows = 0usize;
    let mut cols: Option<usize> = None;
    for rec in rdr.records() {
        let rec = rec.map_err(|e| parse_err(path, csv_line(e.position()), e.to_string()))?;
        let line = csv_line(rec.position());
        if rec.len() == 1 && rec[0].is_empty() {
            continue;
        }
        match cols {
            None => cols = Some(rec.len()),
            Some(c) if c != rec.len() => {
                return Err(parse_err(
                    path,
                    line,
                    format!("ragged row: {} columns, expected {c}", rec.len()),
                ))
            }
            _ => {}
        }
        for field in rec.iter() {
            let v: f64 = field
                .parse()
                .map_err(|_| parse_err(path, line, format!("bad number `{field}`")))?;
            if !v.is_finite() {
                return Err(parse_err(path, line, "non-finite feature"));
            }
            data.push(v);
        }
        rows += 1;
    }
    DenseMatrix::from_vec(rows, cols.unwrap_or(0), data)
}

fn read_labels(path: &Path) -> Result<Vec<(usize, usize, usize)>> {
    let mut rdr = csv_reader(path)?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| parse_err(path, csv_line(e.position()), e.to_string()))?;
        let line = csv_line(rec.position());
        if rec.len() == 1 && rec[0].is_empty() {
            continue;
        }
        if rec.len() != 2 {
            return Err(parse_err(path, line, "expected `node_id,class_id`"));
        }
        let node: usize = rec[0]
            .parse()
            .map_err(|_| parse_err(path, line, format!("bad node id `{}`", &rec[0])))?;
        let class: usize = rec[1]
            .parse()
            .map_err(|_| parse_err(path, line, format!("unknown class `{}`", &rec[1])))?;
        out.push((line, node, class));
    }
    Ok(out)
}

/// Loads a graph and its labels. Edges are symmetrized and deduplicated
/// with weight 1; self-loop lines are dropped.
pub fn load_graph(files: &GraphFiles) -> Result<(Graph, LabelState)> {
    let features = read_features(&files.features)?;
    let edges = read_edges(&files.edges)?;
    let labels = read_labels(&files.labels)?;
    let n = features.rows();

    let mut triplets = Vec::with_capacity(edges.len() * 2);
    for &(line, a, b) in &edges {
        if a >= n || b >= n {
            return Err(parse_err(
                &files.edges,
                line,
                format!("node id {} out of range for {n} feature rows", a.max(b)),
            ));
        }
        if a != b {
            triplets.push((a, b, 1.0));
            triplets.push((b, a, 1.0));
        }
    }
    let adjacency = SparseAdjacency::from_triplets(n, &triplets)?;

    let classes = match files.classes {
        Some(c) => c,
        None => labels.iter().map(|&(_, _, c)| c + 1).max().unwrap_or(0),
    };
    let mut state = LabelState::unlabelled(n, classes);
    for &(line, node, class) in &labels {
        if node >= n {
            return Err(parse_err(
                &files.labels,
                line,
                format!("node id {node} out of range for {n} nodes"),
            ));
        }
        if class >= classes {
            return Err(parse_err(
                &files.labels,
                line,
                format!("class {class} outside [0, {classes})"),
            ));
        }
        state.set_original(node, class)?;
    }
    Ok((Graph::new(features, adjacency)?, state))
}

/// Writes a graph in the format [`load_graph`] reads. Each undirected edge
/// is written once; every node with a supervising label is written.
pub fn save_graph(graph: &Graph, labels: &LabelState, files: &GraphFiles) -> Result<()> {
    let mut edges = fs::File::create(&files.edges)?;
    for (r, c, _) in graph.adjacency().iter() {
        if r < c {
            writeln!(edges, "{r} {c}")?;
        }
    }
    let mut feats = fs::File::create(&files.features)?;
    let x = graph.features();
    for r in 0..x.rows() {
        let row: Vec<String> = x.row(r).iter().map(|v| format!("{v:?}")).collect();
        writeln!(feats, "{}", row.join(","))?;
    }
    let mut lab = fs::File::create(&files.labels)?;
    for (i, y) in labels.supervising() {
        writeln!(lab, "{i},{y}")?;
    }
    Ok(())
}

/// Writes a dense matrix as headerless CSV.
pub fn write_matrix_csv(m: &DenseMatrix, path: &Path) -> Result<()> {
    let mut f = fs::File::create(path)?;
    for r in 0..m.rows() {
        let row: Vec<String> = m.row(r).iter().map(|v| format!("{v:?}")).collect();
        writeln!(f, "{}", row.join(","))?;
    }
    Ok(())
}
