//! Shared JSON-lines persistence: every artifact starts with a one-line
//! header carrying a schema tag, a format version, the experiment config
//! hash and the master seed, followed by one record per line. Writers are
//! byte-deterministic for fixed inputs.

use std::fs;
use std::io::Write as _;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};

use crate::error::{Error, Result};

/// Provenance stamped into every artifact.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ArtifactMeta {
    pub config_hash: String,
    pub seed: u64,
}

/// Header of a loaded artifact: the meta fields plus any extra entries the
/// writer added (for example the victim checkpoint fingerprint).
#[derive(Clone, Debug)]
pub struct ArtifactHeader {
    pub schema: String,
    pub version: u32,
    pub meta: ArtifactMeta,
    pub extra: Map<String, Value>,
}

impl ArtifactHeader {
    /// Extra field as a string, or a schema error naming it.
    pub fn extra_str(&self, key: &str) -> Result<&str> {
        self.extra
            .get(key)
            .and_then(Value::as_str)
            .ok_or_else(|| Error::Schema(format!("header missing string field {key:?}")))
    }
}

pub fn write_jsonl<T: Serialize>(
    path: &Path,
    schema: &str,
    version: u32,
    meta: &ArtifactMeta,
    extra: &[(&str, Value)],
    rows: &[T],
) -> Result<()> {
    let mut header = Map::new();
    header.insert("schema".to_string(), Value::from(schema));
    header.insert("version".to_string(), Value::from(version));
    header.insert("config_hash".to_string(), Value::from(meta.config_hash.clone()));
    header.insert("seed".to_string(), Value::from(meta.seed));
    for (k, v) in extra {
        header.insert((*k).to_string(), v.clone());
    }
    let mut out = Vec::new();
    serde_json::to_writer(&mut out, &Value::Object(header)).expect("header serializes");
    out.push(b'\n');
    for row in rows {
        serde_json::to_writer(&mut out, row)
            .map_err(|e| Error::Schema(format!("row does not serialize: {e}")))?;
        out.push(b'\n');
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&out).map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn read_jsonl<T: DeserializeOwned>(
    path: &Path,
    expected_schema: &str,
    expected_version: u32,
) -> Result<(ArtifactHeader, Vec<T>)> {
    let raw = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = raw.lines().enumerate();
    let (_, header_line) = lines
        .next()
        .ok_or_else(|| Error::Schema(format!("{}: empty artifact", path.display())))?;
    let mut header: Map<String, Value> = serde_json::from_str(header_line)
        .map_err(|e| Error::parse(path, 1, format!("bad artifact header: {e}")))?;
    let schema = header
        .remove("schema")
        .and_then(|v| v.as_str().map(str::to_string))
        .ok_or_else(|| Error::Schema(format!("{}: header lacks schema tag", path.display())))?;
    if schema != expected_schema {
        return Err(Error::Schema(format!(
            "{}: artifact is {schema:?}, expected {expected_schema:?}",
            path.display()
        )));
    }
    let version = header
        .remove("version")
        .and_then(|v| v.as_u64())
        .ok_or_else(|| Error::Schema(format!("{}: header lacks version", path.display())))?
        as u32;
    if version != expected_version {
        return Err(Error::Schema(format!(
            "{}: {schema} version {version} unsupported, expected {expected_version}",
            path.display()
        )));
    }
    let config_hash = header
        .remove("config_hash")
        .and_then(|v| v.as_str().map(str::to_string))
        .ok_or_else(|| Error::Schema(format!("{}: header lacks config_hash", path.display())))?;
    let seed = header
        .remove("seed")
        .and_then(|v| v.as_u64())
        .ok_or_else(|| Error::Schema(format!("{}: header lacks seed", path.display())))?;
    let mut rows = Vec::new();
    for (idx, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let row: T = serde_json::from_str(line)
            .map_err(|e| Error::parse(path, idx + 1, format!("bad record: {e}")))?;
        rows.push(row);
    }
    Ok((
        ArtifactHeader {
            schema,
            version,
            meta: ArtifactMeta { config_hash, seed },
            extra: header,
        },
        rows,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde::Deserialize;

    #[derive(Serialize, Deserialize, PartialEq, Debug)]
    struct Row {
        name: String,
        value: u32,
    }

    fn meta() -> ArtifactMeta {
        ArtifactMeta {
            config_hash: "abc123".to_string(),
            seed: 7,
        }
    }

    #[test]
    fn round_trip_with_extra_fields() {
        let rows = vec![
            Row { name: "a".into(), value: 1 },
            Row { name: "b".into(), value: 2 },
        ];
        let f = tempfile::NamedTempFile::new().unwrap();
        write_jsonl(f.path(), "test_rows", 1, &meta(), &[("note", Value::from("x"))], &rows)
            .unwrap();
        let (header, loaded): (_, Vec<Row>) = read_jsonl(f.path(), "test_rows", 1).unwrap();
        assert_eq!(loaded, rows);
        assert_eq!(header.meta, meta());
        assert_eq!(header.extra_str("note").unwrap(), "x");
    }

    #[test]
    fn schema_and_version_are_enforced() {
        let f = tempfile::NamedTempFile::new().unwrap();
        write_jsonl::<Row>(f.path(), "test_rows", 1, &meta(), &[], &[]).unwrap();
        assert!(read_jsonl::<Row>(f.path(), "other", 1).is_err());
        assert!(read_jsonl::<Row>(f.path(), "test_rows", 2).is_err());
    }

    #[test]
    fn writes_are_byte_deterministic() {
        let rows = vec![Row { name: "a".into(), value: 1 }];
        let f1 = tempfile::NamedTempFile::new().unwrap();
        let f2 = tempfile::NamedTempFile::new().unwrap();
        write_jsonl(f1.path(), "test_rows", 1, &meta(), &[], &rows).unwrap();
        write_jsonl(f2.path(), "test_rows", 1, &meta(), &[], &rows).unwrap();
        assert_eq!(
            fs::read(f1.path()).unwrap(),
            fs::read(f2.path()).unwrap()
        );
    }
}
