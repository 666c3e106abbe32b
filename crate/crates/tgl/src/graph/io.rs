//! JSONL wire format for temporal graphs.
//!
//! One JSON object per line, one line per snapshot:
//!
//! ```json
//! {"t": 0.0, "nodes": [1, 2], "edges": [[1, 2]], "x": [[0.5], [1.5]],
//!  "w": [[1.0]], "y": [0, 1], "z": [0], "g": 1, "directed": false}
//! ```
//!
//! `x`, `w`, `y`, `z`, `g` are optional; `directed` defaults to false.
//! Lines must be ordered by strictly increasing `t`.

use crate::{Error, GraphSnapshot, Matrix, Result, TemporalGraph};
use serde::{Deserialize, Serialize};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

#[derive(Debug, Serialize, Deserialize)]
struct SnapshotRecord {
    t: f64,
    nodes: Vec<u64>,
    edges: Vec<(u64, u64)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    x: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    w: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    y: Option<Vec<i64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    z: Option<Vec<i64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    g: Option<i64>,
    #[serde(default)]
    directed: bool,
}

fn matrix_from_nested(rows: Vec<Vec<f64>>) -> Result<Matrix> {
    Matrix::from_rows(&rows)
}

fn matrix_to_nested(m: &Matrix) -> Vec<Vec<f64>> {
    (0..m.rows()).map(|i| m.row(i).to_vec()).collect()
}

pub fn read_jsonl_from<R: Read>(reader: R) -> Result<TemporalGraph> {
    let mut snapshots = Vec::new();
    for (lineno, line) in BufReader::new(reader).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: SnapshotRecord = serde_json::from_str(&line)
            .map_err(|e| Error::Format(format!("line {}: {}", lineno + 1, e)))?;
        let mut snap = GraphSnapshot::new(
            rec.t,
            rec.nodes,
            rec.edges,
            rec.x.map(matrix_from_nested).transpose()?,
            rec.w.map(matrix_from_nested).transpose()?,
            rec.directed,
        )
        .map_err(|e| Error::Format(format!("line {}: {}", lineno + 1, e)))?;
        if let Some(y) = rec.y {
            snap = snap.with_node_classes(y)?;
        }
        if let Some(z) = rec.z {
            snap = snap.with_edge_classes(z)?;
        }
        if let Some(g) = rec.g {
            snap = snap.with_graph_class(g);
        }
        snapshots.push(snap);
    }
    TemporalGraph::new(snapshots)
}

pub fn read_jsonl<P: AsRef<Path>>(path: P) -> Result<TemporalGraph> {
    read_jsonl_from(File::open(path)?)
}

pub fn write_jsonl_to<W: Write>(tg: &TemporalGraph, writer: W) -> Result<()> {
    let mut w = BufWriter::new(writer);
    for snap in tg.snapshots() {
        let rec = SnapshotRecord {
            t: snap.timestamp(),
            nodes: snap.nodes().to_vec(),
            edges: snap.edges().to_vec(),
            x: snap.node_features().map(matrix_to_nested),
            w: snap.edge_features().map(matrix_to_nested),
            y: snap.node_classes().map(<[i64]>::to_vec),
            z: snap.edge_classes().map(<[i64]>::to_vec),
            g: snap.graph_class(),
            directed: snap.is_directed(),
        };
        serde_json::to_writer(&mut w, &rec)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_jsonl<P: AsRef<Path>>(tg: &TemporalGraph, path: P) -> Result<()> {
    write_jsonl_to(tg, File::create(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_preserves_structure() {
        let x = Matrix::from_rows(&[vec![0.5, 1.0], vec![-1.0, 2.0]]).unwrap();
        let w = Matrix::from_rows(&[vec![0.25]]).unwrap();
        let s0 = GraphSnapshot::new(0.0, vec![1, 2], vec![(1, 2)], Some(x), Some(w), false)
            .unwrap()
            .with_node_classes(vec![0, 1])
            .unwrap()
            .with_graph_class(1);
        let s1 = GraphSnapshot::new(1.5, vec![1, 2, 3], vec![(2, 3)], None, None, false).unwrap();
        let tg = TemporalGraph::new(vec![s0, s1]).unwrap();

        let mut buf = Vec::new();
        write_jsonl_to(&tg, &mut buf).unwrap();
        let back = read_jsonl_from(buf.as_slice()).unwrap();

        assert_eq!(back.len(), 2);
        let b0 = back.get(0).unwrap();
        assert_eq!(b0.timestamp(), 0.0);
        assert_eq!(b0.nodes(), tg.get(0).unwrap().nodes());
        assert_eq!(b0.edges(), tg.get(0).unwrap().edges());
        assert_eq!(
            b0.node_features().unwrap().data(),
            tg.get(0).unwrap().node_features().unwrap().data()
        );
        assert_eq!(b0.node_classes().unwrap(), &[0, 1]);
        assert_eq!(b0.graph_class(), Some(1));
        assert_eq!(back.get(1).unwrap().num_edges(), 1);
    }

    #[test]
    fn unsorted_timestamps_rejected() {
        let lines = r#"{"t": 1.0, "nodes": [1], "edges": []}
{"t": 0.5, "nodes": [1], "edges": []}"#;
        assert!(matches!(
            read_jsonl_from(lines.as_bytes()),
            Err(Error::Format(_))
        ));
    }

    #[test]
    fn multigraph_rejected_at_parse() {
        let line = r#"{"t": 0.0, "nodes": [1, 2], "edges": [[1, 2], [1, 2]]}"#;
        assert!(matches!(
            read_jsonl_from(line.as_bytes()),
            Err(Error::Format(_))
        ));
    }

    #[test]
    fn directed_defaults_to_false() {
        let line = r#"{"t": 0.0, "nodes": [1, 2], "edges": [[2, 1]]}"#;
        let tg = read_jsonl_from(line.as_bytes()).unwrap();
        let snap = tg.get(0).unwrap();
        assert!(!snap.is_directed());
        // canonical storage with the smaller id first
        assert_eq!(snap.edges(), &[(1, 2)]);
    }
}
