use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fsutil::{read_file, write_atomic};

pub const MANIFEST_HEADER: [&str; 5] = ["path", "label", "subject", "attack_type", "split"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AttackType {
    Print,
    Replay,
    Mask,
    SyntheticMoire,
    SyntheticRecapture,
    None,
}

impl AttackType {
    pub const ALL: [AttackType; 6] = [
        AttackType::Print,
        AttackType::Replay,
        AttackType::Mask,
        AttackType::SyntheticMoire,
        AttackType::SyntheticRecapture,
        AttackType::None,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AttackType::Print => "print",
            AttackType::Replay => "replay",
            AttackType::Mask => "mask",
            AttackType::SyntheticMoire => "synthetic-moire",
            AttackType::SyntheticRecapture => "synthetic-recapture",
            AttackType::None => "none",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|a| a.as_str() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Dev, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|a| a.as_str() == s)
    }
}

/// One labelled face image. Label 0 is genuine, 1 is spoof.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestRecord {
    /// The path as written in the manifest; doubles as the record id.
    pub id: String,
    /// `id` resolved against the manifest's directory.
    pub path: PathBuf,
    pub label: u8,
    pub subject: String,
    pub attack_type: AttackType,
    pub split: Split,
}

impl ManifestRecord {
    pub fn new(id: impl Into<String>, label: u8, subject: impl Into<String>, attack_type: AttackType, split: Split) -> Result<Self> {
        let id = id.into();
        let record = ManifestRecord {
            path: PathBuf::from(&id),
            id,
            label,
            subject: subject.into(),
            attack_type,
            split,
        };
        record.validate()?;
        Ok(record)
    }

    pub fn is_spoof(&self) -> bool {
        self.label == 1
    }

    pub fn validate(&self) -> Result<()> {
        if self.id.is_empty() {
            return Err(Error::Validation("empty image path".into()));
        }
        if self.label > 1 {
            return Err(Error::Validation(format!("{}: label {} is not 0 or 1", self.id, self.label)));
        }
        let genuine = self.label == 0;
        if genuine != (self.attack_type == AttackType::None) {
            return Err(Error::Validation(format!(
                "{}: label {} disagrees with attack type {}",
                self.id,
                self.label,
                self.attack_type.as_str()
            )));
        }
        Ok(())
    }
}

fn parse_error(line: u64, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

/// Parses manifest CSV text. Relative paths are resolved against `base`.
pub fn parse_manifest(text: &str, base: &Path) -> Result<Vec<ManifestRecord>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(text.as_bytes());
    let mut rows = reader.records();
    let header = match rows.next() {
        Some(row) => row.map_err(|e| parse_error(1, e.to_string()))?,
        None => return Err(parse_error(1, "missing header")),
    };
    if header.iter().map(str::trim).ne(MANIFEST_HEADER) {
        return Err(parse_error(
            1,
            format!("expected header {}, got {}", MANIFEST_HEADER.join(","), header.iter().collect::<Vec<_>>().join(",")),
        ));
    }
    let mut records = Vec::new();
    let mut seen = HashSet::new();
    for row in rows {
        let row = row.map_err(|e| parse_error(e.position().map_or(0, |p| p.line()), e.to_string()))?;
        let line = row.position().map_or(0, |p| p.line());
        if row.len() != MANIFEST_HEADER.len() {
            return Err(parse_error(line, format!("expected 5 fields, got {}", row.len())));
        }
        let field = |i: usize| row[i].trim();
        let label = match field(1) {
            "0" => 0,
            "1" => 1,
            other => return Err(Error::Validation(format!("line {line}: unknown label {other:?}"))),
        };
        let attack_type = AttackType::parse(field(3))
            .ok_or_else(|| Error::Validation(format!("line {line}: unknown attack type {:?}", field(3))))?;
        let split =
            Split::parse(field(4)).ok_or_else(|| Error::Validation(format!("line {line}: unknown split {:?}", field(4))))?;
        let mut record = ManifestRecord::new(field(0), label, field(2), attack_type, split)
            .map_err(|e| Error::Validation(format!("line {line}: {e}")))?;
        if !seen.insert(record.id.clone()) {
            return Err(Error::Validation(format!("line {line}: duplicate path {}", record.id)));
        }
        record.path = base.join(&record.id);
        records.push(record);
    }
    Ok(records)
}

pub fn load_manifest(path: &Path) -> Result<Vec<ManifestRecord>> {
    let bytes = read_file(path)?;
    let text = String::from_utf8(bytes).map_err(|e| parse_error(0, format!("not UTF-8: {e}")))?;
    parse_manifest(&text, path.parent().unwrap_or(Path::new("")))
}

pub fn encode_manifest(records: &[ManifestRecord]) -> Result<Vec<u8>> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| Error::Serialization(e.to_string());
    writer.write_record(MANIFEST_HEADER).map_err(io)?;
    for r in records {
        let label = r.label.to_string();
        writer
            .write_record([r.id.as_str(), &label, &r.subject, r.attack_type.as_str(), r.split.as_str()])
            .map_err(io)?;
    }
    writer.into_inner().map_err(|e| Error::Serialization(e.to_string()))
}

pub fn write_manifest(path: &Path, records: &[ManifestRecord]) -> Result<()> {
    write_atomic(path, &encode_manifest(records)?)
}

/// Records of one split, in manifest order.
pub fn split_records(records: &[ManifestRecord], split: Split) -> Vec<ManifestRecord> {
    records.iter().filter(|r| r.split == split).cloned().collect()
}

/// Subjects that appear in more than one split, with the splits they span.
pub fn subject_overlap(records: &[ManifestRecord]) -> BTreeMap<String, BTreeSet<Split>> {
    let mut by_subject: BTreeMap<String, BTreeSet<Split>> = BTreeMap::new();
    for r in records {
        by_subject.entry(r.subject.clone()).or_default().insert(r.split);
    }
    by_subject.retain(|_, splits| splits.len() > 1);
    by_subject
}
