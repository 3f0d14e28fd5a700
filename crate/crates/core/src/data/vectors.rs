use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::DataError;

/// Named dense vectors of one fixed dimension, in insertion order.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorTable {
    dim: usize,
    keys: Vec<String>,
    data: Vec<f64>,
    index: HashMap<String, usize>,
}

impl VectorTable {
    pub fn new(dim: usize) -> Result<Self, DataError> {
        if dim == 0 {
            return Err(DataError::InvalidVectors("dimension must be positive".into()));
        }
        Ok(VectorTable { dim, keys: Vec::new(), data: Vec::new(), index: HashMap::new() })
    }

    pub fn from_rows(dim: usize, rows: impl IntoIterator<Item = (String, Vec<f64>)>) -> Result<Self, DataError> {
        let mut table = VectorTable::new(dim)?;
        for (key, v) in rows {
            table.insert(key, &v)?;
        }
        Ok(table)
    }

    pub fn insert(&mut self, key: String, vector: &[f64]) -> Result<(), DataError> {
        if vector.len() != self.dim {
            return Err(DataError::InvalidVectors(format!(
                "{key}: expected {} components, found {}",
                self.dim,
                vector.len()
            )));
        }
        if let Some(bad) = vector.iter().find(|x| !x.is_finite()) {
            return Err(DataError::InvalidVectors(format!("{key}: non-finite component {bad}")));
        }
        if self.index.contains_key(&key) {
            return Err(DataError::DuplicateKey { key, line: self.keys.len() + 2 });
        }
        self.index.insert(key.clone(), self.keys.len());
        self.keys.push(key);
        self.data.extend_from_slice(vector);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn contains(&self, key: &str) -> bool {
        self.index.contains_key(key)
    }

    pub fn get(&self, key: &str) -> Option<&[f64]> {
        self.index.get(key).map(|&i| self.row(i))
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn keys(&self) -> &[String] {
        &self.keys
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[f64])> + '_ {
        self.keys.iter().enumerate().map(move |(i, k)| (k.as_str(), self.row(i)))
    }
}

fn malformed(path: &Path, line: usize, message: impl Into<String>) -> DataError {
    DataError::Malformed { path: path.to_path_buf(), line, message: message.into() }
}

/// Parses the `<count> <dim>` header format. Line numbers in errors are 1-based.
pub fn parse_vector_file(path: &Path, text: &str) -> Result<VectorTable, DataError> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or_else(|| malformed(path, 1, "missing \"<count> <dim>\" header"))?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    let (count, dim) = match fields.as_slice() {
        [c, d] => (
            c.parse::<usize>().map_err(|_| malformed(path, 1, format!("bad count {c:?}")))?,
            d.parse::<usize>().map_err(|_| malformed(path, 1, format!("bad dimension {d:?}")))?,
        ),
        _ => return Err(malformed(path, 1, "header must be \"<count> <dim>\"")),
    };
    if dim == 0 {
        return Err(malformed(path, 1, "dimension must be positive"));
    }
    let mut table = VectorTable::new(dim)?;
    let mut row = Vec::with_capacity(dim);
    for (idx, line) in lines {
        let lineno = idx + 1;
        let mut parts = line.split_whitespace();
        let key = parts.next().expect("nonblank line has a field");
        row.clear();
        for tok in parts {
            let x: f64 = tok.parse().map_err(|_| malformed(path, lineno, format!("bad number {tok:?}")))?;
            if !x.is_finite() {
                return Err(malformed(path, lineno, format!("non-finite component {tok}")));
            }
            row.push(x);
        }
        if row.len() != dim {
            return Err(DataError::DimensionMismatch {
                path: path.to_path_buf(),
                line: lineno,
                expected: dim,
                found: row.len(),
            });
        }
        if table.contains(key) {
            return Err(DataError::DuplicateKey { key: key.to_string(), line: lineno });
        }
        table.insert(key.to_string(), &row)?;
    }
    if table.len() != count {
        return Err(malformed(path, 1, format!("header declares {count} rows, found {}", table.len())));
    }
    Ok(table)
}

pub fn read_vector_file(path: &Path) -> Result<VectorTable, DataError> {
    let text = fs::read_to_string(path).map_err(|source| DataError::Io { path: path.to_path_buf(), source })?;
    parse_vector_file(path, &text)
}

/// Canonical text form: shortest round-trip decimal for every component.
pub fn format_vector_file(table: &VectorTable) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{} {}", table.len(), table.dim());
    for (key, v) in table.iter() {
        out.push_str(key);
        for x in v {
            let _ = write!(out, " {x}");
        }
        out.push('\n');
    }
    out
}

pub fn write_vector_file(path: &Path, table: &VectorTable) -> Result<(), DataError> {
    fs::write(path, format_vector_file(table)).map_err(|source| DataError::Io { path: path.to_path_buf(), source })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_formats_canonically() {
        let text = "2 3\nimg0 1 0.5 -2\nimg1 0 0 0.25\n";
        let t = parse_vector_file(Path::new("f.vec"), text).unwrap();
        assert_eq!(t.len(), 2);
        assert_eq!(t.get("img0").unwrap(), &[1.0, 0.5, -2.0]);
        assert_eq!(format_vector_file(&t), text);
    }

    #[test]
    fn short_row_reports_dimension_mismatch_with_line() {
        let text = "2 4\na 1 2 3 4\nb 1 2 3\n";
        match parse_vector_file(Path::new("f.vec"), text) {
            Err(DataError::DimensionMismatch { line, expected, found, .. }) => {
                assert_eq!((line, expected, found), (3, 4, 3));
            }
            other => panic!("expected dimension mismatch, got {other:?}"),
        }
    }

    #[test]
    fn rejects_duplicates_bad_numbers_and_count_mismatch() {
        let p = Path::new("f.vec");
        assert!(matches!(parse_vector_file(p, "2 1\na 1\na 2\n"), Err(DataError::DuplicateKey { line: 3, .. })));
        assert!(matches!(parse_vector_file(p, "1 1\na x\n"), Err(DataError::Malformed { line: 2, .. })));
        assert!(matches!(parse_vector_file(p, "1 1\na NaN\n"), Err(DataError::Malformed { line: 2, .. })));
        assert!(matches!(parse_vector_file(p, "3 1\na 1\n"), Err(DataError::Malformed { line: 1, .. })));
        assert!(matches!(parse_vector_file(p, "1 0\n"), Err(DataError::Malformed { line: 1, .. })));
    }
}
