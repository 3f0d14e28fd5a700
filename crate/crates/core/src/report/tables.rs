//! CSV views of a report, built from its rounded JSON tree so both formats
//! carry the same digits.

use serde_json::Value;

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    /// File stem.
    pub name: String,
    pub headers: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    fn new(name: impl Into<String>, headers: &[&str]) -> Table {
        Table { name: name.into(), headers: headers.iter().map(|h| h.to_string()).collect(), rows: Vec::new() }
    }

    pub fn to_csv(&self) -> Result<Vec<u8>, csv::Error> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.headers)?;
        for row in &self.rows {
            w.write_record(row)?;
        }
        w.into_inner().map_err(|e| e.into_error().into())
    }
}

/// Cell text for a JSON scalar; null is empty.
pub(crate) fn cell(v: &Value) -> String {
    match v {
        Value::Null => String::new(),
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

fn items<'a>(v: &'a Value, key: &str) -> &'a [Value] {
    v.get(key).and_then(Value::as_array).map(Vec::as_slice).unwrap_or(&[])
}

fn push_rows(t: &mut Table, rows: &[Value], lead: &[String], cols: &[&str]) {
    for r in rows {
        let mut row = lead.to_vec();
        row.extend(cols.iter().map(|c| cell(&r[*c])));
        t.rows.push(row);
    }
}

/// One row holding every scalar field.
fn scalar_row(name: &str, v: &Value) -> Table {
    let map = v.as_object().expect("report serializes to an object");
    let keys: Vec<&str> = map.iter().filter(|(_, x)| !x.is_array() && !x.is_object()).map(|(k, _)| k.as_str()).collect();
    let mut t = Table::new(name, &keys);
    t.rows.push(keys.iter().map(|k| cell(&map[*k])).collect());
    t
}

pub fn tables_for(stem: &str, v: &Value) -> Vec<Table> {
    match stem {
        "novelty" | "answer_novelty" => {
            let cols = ["k", "effective_k", "pearson_raw", "pearson_binned", "bin_seed", "n_bins"];
            let mut per_k = Table::new(stem, &cols);
            push_rows(&mut per_k, items(v, "per_k"), &[], &cols);
            let cols = ["instance_id", "avg_knn_distance", "accuracy"];
            let mut inst = Table::new(format!("{stem}_instances"), &cols);
            push_rows(&mut inst, items(v, "per_instance"), &[], &cols);
            let mut bins = Table::new(format!("{stem}_bins"), &["mean_distance", "mean_accuracy"]);
            for b in items(v, "binned") {
                bins.rows.push(vec![cell(&b[0]), cell(&b[1])]);
            }
            vec![per_k, inst, bins]
        }
        "question" => {
            let cols = ["pct", "fraction_same_as_full", "mean_accuracy"];
            let mut t = Table::new(stem, &["qtype", cols[0], cols[1], cols[2]]);
            push_rows(&mut t, items(v, "per_point"), &["all".into()], &cols);
            for b in items(v, "per_qtype") {
                push_rows(&mut t, items(b, "per_point"), &[cell(&b["qtype"])], &cols);
            }
            vec![t]
        }
        "pos" => {
            let cols = ["group", "fraction_unchanged", "n_questions_affected", "n_excluded"];
            let mut t = Table::new(stem, &["qtype", cols[0], cols[1], cols[2], cols[3]]);
            push_rows(&mut t, items(v, "per_group"), &["all".into()], &cols);
            for b in items(v, "per_qtype") {
                push_rows(&mut t, items(b, "per_group"), &[cell(&b["qtype"])], &cols);
            }
            vec![t]
        }
        "image" => {
            let cols = ["question_text", "n_images", "mode_answer", "x", "mean_accuracy"];
            let mut groups = Table::new(stem, &cols);
            push_rows(&mut groups, items(v, "per_question"), &[], &cols);
            let h = &v["histogram"];
            let edges = items(h, "edges");
            let mut hist = Table::new("image_histogram", &["bin_low", "bin_high", "count"]);
            for (i, c) in items(h, "counts").iter().enumerate() {
                hist.rows.push(vec![cell(&edges[i]), cell(&edges[i + 1]), cell(c)]);
            }
            let mut cum = Table::new("image_cumulative", &["threshold", "fraction_at_least"]);
            for p in items(h, "cumulative_at_least") {
                cum.rows.push(vec![cell(&p[0]), cell(&p[1])]);
            }
            vec![groups, hist, cum]
        }
        _ => vec![scalar_row(stem, v)],
    }
}
