use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::Deserialize;

use super::{LabeledDocument, Origin};
use crate::error::{Error, Result};

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Record {
    id: String,
    label: u8,
    text: String,
    origin: Origin,
}

/// Reads one document per non-blank line.
pub fn load_jsonl(path: impl AsRef<Path>) -> Result<Vec<LabeledDocument>> {
    let path = path.as_ref();
    let reader = BufReader::new(File::open(path)?);
    let mut docs = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message,
        };
        let rec: Record = serde_json::from_str(&line).map_err(|e| parse_err(e.to_string()))?;
        let doc = LabeledDocument {
            id: rec.id,
            label: rec.label,
            text: rec.text,
            origin: rec.origin,
        };
        doc.validate().map_err(|e| parse_err(e.to_string()))?;
        docs.push(doc);
    }
    Ok(docs)
}

/// Writes via a temporary sibling file and renames it into place.
pub fn save_jsonl(docs: &[LabeledDocument], path: impl AsRef<Path>) -> Result<()> {
    crate::io::write_atomic(path.as_ref(), |w| {
        let mut w = BufWriter::new(w);
        for doc in docs {
            serde_json::to_writer(&mut w, doc)?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
        Ok(())
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.jsonl");
        let docs = vec![
            LabeledDocument::new("a", 1, "pt admitted \"quoted\"", Origin::Original).unwrap(),
            LabeledDocument::new("b", 0, "ünïcode text", Origin::Synthetic).unwrap(),
        ];
        save_jsonl(&docs, &path).unwrap();
        assert_eq!(load_jsonl(&path).unwrap(), docs);
        let first = std::fs::read_to_string(&path).unwrap();
        assert!(first.starts_with(r#"{"id":"a","label":1,"text":"#));
    }

    #[test]
    fn missing_label_names_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.jsonl");
        std::fs::write(
            &path,
            "{\"id\":\"a\",\"label\":0,\"text\":\"x\",\"origin\":\"original\"}\n{\"id\":\"b\",\"text\":\"y\",\"origin\":\"original\"}\n",
        )
        .unwrap();
        let err = load_jsonl(&path).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
        assert!(err.to_string().contains("label"));
    }

    #[test]
    fn invalid_label_value_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.jsonl");
        std::fs::write(&path, "{\"id\":\"a\",\"label\":3,\"text\":\"x\",\"origin\":\"original\"}\n").unwrap();
        assert!(matches!(load_jsonl(&path), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn empty_file_is_empty_list() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.jsonl");
        std::fs::write(&path, "").unwrap();
        assert!(load_jsonl(&path).unwrap().is_empty());
    }
}
