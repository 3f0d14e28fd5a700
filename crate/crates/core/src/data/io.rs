use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{read_vector_file, write_vector_file, DataError, Dataset, Instance, PosGroup, PosSource, Split};

/// One line of the instance file. Field order here is the canonical
/// serialization order.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct InstanceRecord {
    id: String,
    question: String,
    tokens: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pos: Option<Vec<PosGroup>>,
    image_id: String,
    annotator_answers: Vec<String>,
    gt_answer: String,
    split: Split,
}

impl From<&Instance> for InstanceRecord {
    fn from(i: &Instance) -> Self {
        InstanceRecord {
            id: i.id.clone(),
            question: i.question.clone(),
            tokens: i.tokens.clone(),
            pos: (i.pos_source == PosSource::Supplied).then(|| i.pos.clone()),
            image_id: i.image_id.clone(),
            annotator_answers: i.annotator_answers.clone(),
            gt_answer: i.gt_answer.clone(),
            split: i.split,
        }
    }
}

/// Standard file names inside a dataset directory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetFiles {
    pub instances: PathBuf,
    pub image_features: PathBuf,
    pub word_vectors: Option<PathBuf>,
}

impl DatasetFiles {
    pub const INSTANCES: &'static str = "instances.jsonl";
    pub const IMAGE_FEATURES: &'static str = "image_features.vec";
    pub const WORD_VECTORS: &'static str = "word_vectors.vec";

    /// Paths inside `dir`; the word-vector file is optional and only used if present.
    pub fn in_dir(dir: &Path) -> Self {
        let wv = dir.join(Self::WORD_VECTORS);
        DatasetFiles {
            instances: dir.join(Self::INSTANCES),
            image_features: dir.join(Self::IMAGE_FEATURES),
            word_vectors: wv.exists().then_some(wv),
        }
    }

    pub fn load(&self) -> Result<Dataset, DataError> {
        load_dataset(&self.instances, &self.image_features, self.word_vectors.as_deref())
    }

    pub fn all(&self) -> Vec<&Path> {
        let mut v = vec![self.instances.as_path(), self.image_features.as_path()];
        v.extend(self.word_vectors.as_deref());
        v
    }
}

fn parse_instances(path: &Path, text: &str) -> Result<Vec<Instance>, DataError> {
    let mut out = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let lineno = idx + 1;
        let rec: InstanceRecord = serde_json::from_str(line).map_err(|e| DataError::Malformed {
            path: path.to_path_buf(),
            line: lineno,
            message: e.to_string(),
        })?;
        let inst = Instance::new(
            rec.id,
            rec.question,
            rec.tokens,
            rec.pos,
            rec.image_id,
            rec.annotator_answers,
            rec.gt_answer,
            rec.split,
        )
        .map_err(|e| DataError::Malformed { path: path.to_path_buf(), line: lineno, message: e.to_string() })?;
        out.push(inst);
    }
    Ok(out)
}

/// Loads and validates a dataset from its instance file and vector files.
pub fn load_dataset(
    instances_path: &Path,
    features_path: &Path,
    word_vectors_path: Option<&Path>,
) -> Result<Dataset, DataError> {
    let text = fs::read_to_string(instances_path)
        .map_err(|source| DataError::Io { path: instances_path.to_path_buf(), source })?;
    let instances = parse_instances(instances_path, &text)?;
    let image_features = read_vector_file(features_path)?;
    let word_vectors = word_vectors_path.map(read_vector_file).transpose()?;
    Dataset::new(instances, image_features, word_vectors)
}

/// Canonical JSON-lines text for the instance file.
pub fn format_instances(instances: &[Instance]) -> String {
    let mut out = String::new();
    for inst in instances {
        let line = serde_json::to_string(&InstanceRecord::from(inst)).expect("instance record serializes");
        out.push_str(&line);
        out.push('\n');
    }
    out
}

pub fn write_instances(path: &Path, instances: &[Instance]) -> Result<(), DataError> {
    fs::write(path, format_instances(instances)).map_err(|source| DataError::Io { path: path.to_path_buf(), source })
}

impl Dataset {
    pub fn load_dir(dir: &Path) -> Result<Dataset, DataError> {
        DatasetFiles::in_dir(dir).load()
    }

    /// Writes the standard files into `dir`, creating it if needed.
    pub fn write_dir(&self, dir: &Path) -> Result<DatasetFiles, DataError> {
        fs::create_dir_all(dir).map_err(|source| DataError::Io { path: dir.to_path_buf(), source })?;
        let files = DatasetFiles {
            instances: dir.join(DatasetFiles::INSTANCES),
            image_features: dir.join(DatasetFiles::IMAGE_FEATURES),
            word_vectors: self.word_vectors.as_ref().map(|_| dir.join(DatasetFiles::WORD_VECTORS)),
        };
        write_instances(&files.instances, &self.instances)?;
        write_vector_file(&files.image_features, &self.image_features)?;
        if let (Some(path), Some(table)) = (&files.word_vectors, &self.word_vectors) {
            write_vector_file(path, table)?;
        }
        Ok(files)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const FEATURES: &str = "2 2\nimg0 1 0\nimg1 0 1\n";
    const INSTANCES: &str = concat!(
        r#"{"id":"q0","question":"what covers the ground","tokens":["what","covers","the","ground"],"pos":["WH","VERB","DETERMINER","NOUN"],"image_id":"img0","annotator_answers":["snow","snow","grass"],"gt_answer":"snow","split":"train"}"#,
        "\n",
        r#"{"id":"q1","question":"how many zebras","tokens":["how","many","zebras"],"image_id":"img1","annotator_answers":["2","2","3"],"gt_answer":"2","split":"test"}"#,
        "\n",
        r#"{"id":"q2","question":"is it snowing","tokens":["is","it","snowing"],"image_id":"img0","annotator_answers":["yes"],"gt_answer":"yes","split":"test"}"#,
        "\n",
    );

    fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
        let p = dir.join(name);
        fs::write(&p, text).unwrap();
        p
    }

    #[test]
    fn smallest_well_formed_dataset() {
        let dir = tempfile::tempdir().unwrap();
        let i = write(dir.path(), "i.jsonl", INSTANCES);
        let f = write(dir.path(), "f.vec", FEATURES);
        let ds = load_dataset(&i, &f, None).unwrap();
        assert_eq!(ds.instances.len(), 3);
        assert_eq!(ds.test().len(), 2);
        // tags filled in by the tagger when the file omits them
        assert_eq!(ds.instances[1].pos, vec![PosGroup::Wh, PosGroup::Adjective, PosGroup::Noun]);
        assert_eq!(ds.instances[1].pos_source, PosSource::Tagged);
    }

    #[test]
    fn reserialization_is_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let i = write(dir.path(), "i.jsonl", INSTANCES);
        let f = write(dir.path(), "f.vec", FEATURES);
        let ds = load_dataset(&i, &f, None).unwrap();
        assert_eq!(format_instances(&ds.instances), INSTANCES);
        let out = dir.path().join("out");
        let files = ds.write_dir(&out).unwrap();
        assert_eq!(fs::read_to_string(files.image_features).unwrap(), FEATURES);
    }

    #[test]
    fn dangling_image_names_the_id() {
        let dir = tempfile::tempdir().unwrap();
        let i = write(dir.path(), "i.jsonl", &INSTANCES.replace("\"img1\"", "\"img9\""));
        let f = write(dir.path(), "f.vec", FEATURES);
        let err = load_dataset(&i, &f, None).unwrap_err();
        assert!(matches!(&err, DataError::DanglingImage { image_id, .. } if image_id == "img9"), "{err}");
    }

    #[test]
    fn feature_row_too_short() {
        let dir = tempfile::tempdir().unwrap();
        let i = write(dir.path(), "i.jsonl", INSTANCES);
        let f = write(dir.path(), "f.vec", "2 4\nimg0 1 0 0 0\nimg1 0 1 0\n");
        let err = load_dataset(&i, &f, None).unwrap_err();
        assert!(matches!(err, DataError::DimensionMismatch { line: 3, expected: 4, found: 3, .. }));
    }

    #[test]
    fn duplicate_instance_id() {
        let dir = tempfile::tempdir().unwrap();
        let i = write(dir.path(), "i.jsonl", &INSTANCES.replace("\"q2\"", "\"q1\""));
        let f = write(dir.path(), "f.vec", FEATURES);
        assert!(matches!(load_dataset(&i, &f, None), Err(DataError::DuplicateInstance(id)) if id == "q1"));
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let dir = tempfile::tempdir().unwrap();
        let mut text = INSTANCES.to_string();
        text.push_str("{not json}\n");
        let i = write(dir.path(), "i.jsonl", &text);
        let f = write(dir.path(), "f.vec", FEATURES);
        assert!(matches!(load_dataset(&i, &f, None), Err(DataError::Malformed { line: 4, .. })));
    }

    #[test]
    fn invariant_violations_are_rejected_at_load() {
        let dir = tempfile::tempdir().unwrap();
        let f = write(dir.path(), "f.vec", FEATURES);
        let cases = [
            INSTANCES.replace(r#""gt_answer":"2""#, r#""gt_answer":"3""#),
            INSTANCES.replace(r#""pos":["WH","VERB","DETERMINER","NOUN"]"#, r#""pos":["WH"]"#),
            INSTANCES.replace(r#""tokens":["is","it","snowing"]"#, r#""tokens":[]"#),
            INSTANCES.replace(r#""split":"test""#, r#""split":"dev""#),
        ];
        for text in cases {
            let i = write(dir.path(), "i.jsonl", &text);
            assert!(matches!(load_dataset(&i, &f, None), Err(DataError::Malformed { .. })));
        }
    }
}
