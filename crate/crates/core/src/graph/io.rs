//! JSON Lines persistence: one unpadded graph per line.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Dataset, Graph, GraphError, Label};

/// On-disk form of one graph.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphRecord {
    pub n: usize,
    pub adj: Vec<Vec<u8>>,
    pub x: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y: Option<Label>,
}

impl GraphRecord {
    pub fn from_graph(g: &Graph) -> Self {
        let adj = (0..g.n)
            .map(|i| (0..g.n).map(|j| g.adj[i * g.n_max + j]).collect())
            .collect();
        let x = (0..g.n).map(|i| g.feature_row(i).to_vec()).collect();
        GraphRecord {
            n: g.n,
            adj,
            x,
            y: g.label,
        }
    }

    /// Unpadded graph; `d` is the expected width (needed when `n = 0`).
    pub fn to_graph(&self, d: usize) -> Result<Graph, GraphError> {
        if self.adj.len() != self.n {
            return Err(GraphError::Shape(format!(
                "\"n\" is {} but adjacency has {} rows",
                self.n,
                self.adj.len()
            )));
        }
        Graph::from_dense(&self.adj, &self.x, d, self.y)
    }
}

/// Parses JSON Lines from any reader. Blank lines are skipped.
pub fn read_dataset<R: Read>(
    reader: R,
    source: &str,
    n_max: Option<usize>,
) -> Result<Dataset, GraphError> {
    let mut records = Vec::new();
    for (idx, line) in BufReader::new(reader).lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|source_err| GraphError::Io {
            path: source.to_string(),
            source: source_err,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let record: GraphRecord =
            serde_json::from_str(&line).map_err(|e| GraphError::Parse {
                path: source.to_string(),
                line: line_no,
                message: e.to_string(),
            })?;
        records.push((line_no, record));
    }

    let d = records
        .iter()
        .find_map(|(_, r)| r.x.first().map(Vec::len))
        .unwrap_or(0);
    let mut graphs = Vec::with_capacity(records.len());
    for (index, (line_no, record)) in records.iter().enumerate() {
        let g = record.to_graph(d).map_err(|e| match e {
            GraphError::Invalid(violations) => GraphError::InvalidMember { index, violations },
            other => GraphError::Parse {
                path: source.to_string(),
                line: *line_no,
                message: format!("graph {index}: {other}"),
            },
        })?;
        graphs.push(g);
    }
    let n_max = n_max.unwrap_or_else(|| graphs.iter().map(|g| g.n).max().unwrap_or(0));
    let mut padded = Vec::with_capacity(graphs.len());
    for (index, g) in graphs.iter().enumerate() {
        padded.push(g.pad_to(n_max).map_err(|e| GraphError::Parse {
            path: source.to_string(),
            line: records[index].0,
            message: format!("graph {index}: {e}"),
        })?);
    }
    Dataset::new(padded, n_max, d)
}

pub fn load_dataset(path: impl AsRef<Path>, n_max: Option<usize>) -> Result<Dataset, GraphError> {
    let path = path.as_ref();
    let display = path.display().to_string();
    let file = File::open(path).map_err(|source| GraphError::Io {
        path: display.clone(),
        source,
    })?;
    read_dataset(file, &display, n_max)
}

pub fn write_dataset<W: Write>(dataset: &Dataset, writer: &mut W) -> std::io::Result<()> {
    for g in dataset {
        serde_json::to_writer(&mut *writer, &GraphRecord::from_graph(g))?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

pub fn save_dataset(dataset: &Dataset, path: impl AsRef<Path>) -> Result<(), GraphError> {
    let path = path.as_ref();
    let io_err = |source| GraphError::Io {
        path: path.display().to_string(),
        source,
    };
    let mut out = BufWriter::new(File::create(path).map_err(io_err)?);
    write_dataset(dataset, &mut out).map_err(io_err)?;
    out.flush().map_err(io_err)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Dataset {
        let a = Graph::from_edges(3, &[(0, 1), (1, 2)], vec![0.1, -2.5, 1e-17, 3.0, 0.3, 7.25], 2, Some(Label::Pos))
            .unwrap();
        let b = Graph::from_edges(2, &[], vec![1.0 / 3.0, 2.0 / 7.0, -0.0, 5.5], 2, Some(Label::Neg)).unwrap();
        let c = Graph::from_edges(4, &[(0, 3), (2, 3)], vec![0.0; 8], 2, None).unwrap();
        Dataset::from_graphs(vec![a, b, c], Some(5)).unwrap()
    }

    #[test]
    fn round_trip_is_exact() {
        let ds = sample();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.jsonl");
        save_dataset(&ds, &path).unwrap();
        let back = load_dataset(&path, Some(5)).unwrap();
        assert_eq!(back, ds);
        for (a, b) in back.iter().zip(ds.iter()) {
            for (x, y) in a.features.iter().zip(&b.features) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
    }

    #[test]
    fn default_pad_is_largest_graph() {
        let mut buf = Vec::new();
        write_dataset(&sample(), &mut buf).unwrap();
        let ds = read_dataset(buf.as_slice(), "mem", None).unwrap();
        assert_eq!(ds.n_max(), 4);
        assert_eq!(ds.d(), 2);
    }

    #[test]
    fn malformed_line_is_named() {
        let good = r#"{"n":1,"adj":[[0]],"x":[[0.5]],"y":1}"#;
        let mut text = String::new();
        for _ in 0..6 {
            text.push_str(good);
            text.push('\n');
        }
        text.push_str("{\"n\": 2, \"adj\": [[0,1],\n");
        let err = read_dataset(text.as_bytes(), "bad.jsonl", None).unwrap_err();
        match err {
            GraphError::Parse { line, ref path, .. } => {
                assert_eq!(line, 7);
                assert_eq!(path, "bad.jsonl");
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(err.to_string().contains("line 7"));
    }

    #[test]
    fn asymmetric_graph_names_index() {
        let text = concat!(
            r#"{"n":2,"adj":[[0,1],[1,0]],"x":[[0.0],[1.0]],"y":1}"#,
            "\n",
            r#"{"n":2,"adj":[[0,1],[0,0]],"x":[[0.0],[1.0]],"y":-1}"#,
            "\n"
        );
        let err = read_dataset(text.as_bytes(), "m", None).unwrap_err();
        match err {
            GraphError::InvalidMember { index, violations } => {
                assert_eq!(index, 1);
                assert!(violations
                    .iter()
                    .any(|v| matches!(v, super::super::Violation::Asymmetric { .. })));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn oversized_graph_rejected_against_pad() {
        let text = r#"{"n":3,"adj":[[0,1,0],[1,0,0],[0,0,0]],"x":[[],[],[]]}"#;
        assert!(read_dataset(text.as_bytes(), "m", Some(2)).is_err());
    }

    #[test]
    fn bad_label_is_parse_error() {
        let text = r#"{"n":1,"adj":[[0]],"x":[[]],"y":0}"#;
        assert!(matches!(
            read_dataset(text.as_bytes(), "m", None),
            Err(GraphError::Parse { line: 1, .. })
        ));
    }
}
