//! Precomputed predictions keyed by `(instance_id, probe_id)`.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use super::{Adapter, AdapterError, Capabilities, Perturbation, Prediction, Probe, ProbeKind};
use crate::knn::Metric;

#[derive(Debug, Clone, PartialEq)]
pub struct DumpRow {
    pub instance_id: String,
    pub probe_id: String,
    pub answer: String,
    pub embedding: Option<Vec<f64>>,
}

impl From<Prediction> for DumpRow {
    fn from(p: Prediction) -> Self {
        DumpRow { instance_id: p.instance_id, probe_id: p.probe_id, answer: p.answer, embedding: p.embedding }
    }
}

/// A parsed dump: `dim` is 0 when rows carry no embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct DumpFile {
    pub dim: usize,
    pub rows: Vec<DumpRow>,
}

fn bad(line: usize, message: impl Into<String>) -> AdapterError {
    AdapterError::DumpFormat { line, message: message.into() }
}

pub fn parse_dump(text: &str) -> Result<DumpFile, AdapterError> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let (_, header) = lines.next().ok_or_else(|| bad(1, "empty dump"))?;
    let dim = match header.split(' ').collect::<Vec<_>>()[..] {
        ["dump", "v1", d] => d.parse::<usize>().map_err(|_| bad(1, format!("bad embedding dim {d:?}")))?,
        _ => return Err(bad(1, format!("expected header \"dump v1 <dim>\", found {header:?}"))),
    };
    let mut rows = Vec::new();
    for (n, line) in lines {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        let expected = if dim == 0 { 3 } else { 4 };
        if fields.len() != expected {
            return Err(bad(n, format!("expected {expected} tab-separated fields, found {}", fields.len())));
        }
        fields[1].parse::<Perturbation>().map_err(|e| bad(n, e))?;
        let embedding = if dim == 0 {
            None
        } else {
            let v = fields[3]
                .split(' ')
                .map(|s| s.parse::<f64>().ok().filter(|x| x.is_finite()))
                .collect::<Option<Vec<f64>>>()
                .ok_or_else(|| bad(n, "non-numeric embedding component"))?;
            if v.len() != dim {
                return Err(bad(n, format!("expected {dim} embedding components, found {}", v.len())));
            }
            Some(v)
        };
        rows.push(DumpRow {
            instance_id: fields[0].to_string(),
            probe_id: fields[1].to_string(),
            answer: fields[2].to_string(),
            embedding,
        });
    }
    Ok(DumpFile { dim, rows })
}

pub fn format_dump(dump: &DumpFile) -> Result<String, AdapterError> {
    let mut out = format!("dump v1 {}\n", dump.dim);
    for (i, row) in dump.rows.iter().enumerate() {
        let line = i + 2;
        for field in [&row.instance_id, &row.probe_id, &row.answer] {
            if field.contains(['\t', '\n', '\r']) {
                return Err(bad(line, format!("field {field:?} contains a tab or newline")));
            }
        }
        write!(out, "{}\t{}\t{}", row.instance_id, row.probe_id, row.answer).unwrap();
        match (&row.embedding, dump.dim) {
            (None, 0) => {}
            (Some(v), d) if v.len() == d && d > 0 => {
                out.push('\t');
                for (j, x) in v.iter().enumerate() {
                    if j > 0 {
                        out.push(' ');
                    }
                    write!(out, "{x}").unwrap();
                }
            }
            _ => return Err(bad(line, "embedding presence or length disagrees with header")),
        }
        out.push('\n');
    }
    Ok(out)
}

pub fn read_dump(path: &Path) -> Result<DumpFile, AdapterError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| AdapterError::Unreachable(format!("{}: {e}", path.display())))?;
    parse_dump(&text)
}

pub fn write_dump(path: &Path, dump: &DumpFile) -> Result<(), AdapterError> {
    std::fs::write(path, format_dump(dump)?)?;
    Ok(())
}

/// Serves predictions straight out of a dump.
#[derive(Debug, Clone)]
pub struct DumpAdapter {
    label: String,
    dump: DumpFile,
    index: HashMap<(String, String), usize>,
    metric: Metric,
}

impl DumpAdapter {
    pub fn new(label: impl Into<String>, dump: DumpFile) -> Result<DumpAdapter, AdapterError> {
        let mut index = HashMap::with_capacity(dump.rows.len());
        for (i, row) in dump.rows.iter().enumerate() {
            if index.insert((row.instance_id.clone(), row.probe_id.clone()), i).is_some() {
                return Err(bad(i + 2, format!("duplicate row ({}, {})", row.instance_id, row.probe_id)));
            }
        }
        Ok(DumpAdapter { label: label.into(), dump, index, metric: Metric::Euclidean })
    }

    pub fn open(path: &Path) -> Result<DumpAdapter, AdapterError> {
        DumpAdapter::new(format!("dump:{}", path.display()), read_dump(path)?)
    }

    /// Dumps do not record a preferred metric; the caller supplies one.
    pub fn with_metric(mut self, metric: Metric) -> Self {
        self.metric = metric;
        self
    }

    fn has_kind(&self, kind: ProbeKind) -> bool {
        self.dump.rows.iter().any(|r| r.probe_id.parse::<Perturbation>().is_ok_and(|p| p.kind() == kind))
    }
}

impl Adapter for DumpAdapter {
    fn identity(&self) -> String {
        self.label.clone()
    }

    fn handshake(&mut self) -> Result<Capabilities, AdapterError> {
        let both = self.has_kind(ProbeKind::BothMean);
        Ok(Capabilities {
            has_embedding: self.dump.dim > 0,
            embedding_dim: (self.dump.dim > 0).then_some(self.dump.dim),
            supports_mean_image: both || self.has_kind(ProbeKind::ImageMean),
            supports_mean_question: both || self.has_kind(ProbeKind::QuestionMean),
            preferred_metric: self.metric,
            supports_prefix: self.has_kind(ProbeKind::Prefix),
            supports_pos_drop: self.has_kind(ProbeKind::Drop),
        })
    }

    fn predict(&mut self, probes: &[Probe], want_embedding: bool) -> Result<Vec<Prediction>, AdapterError> {
        probes
            .iter()
            .map(|p| {
                let i = self.index.get(&(p.instance_id.clone(), p.probe_id.clone())).ok_or_else(|| {
                    AdapterError::DumpMiss { instance_id: p.instance_id.clone(), probe_id: p.probe_id.clone() }
                })?;
                let row = &self.dump.rows[*i];
                Ok(Prediction {
                    instance_id: row.instance_id.clone(),
                    probe_id: row.probe_id.clone(),
                    answer: row.answer.clone(),
                    embedding: if want_embedding { row.embedding.clone() } else { None },
                })
            })
            .collect()
    }
}
