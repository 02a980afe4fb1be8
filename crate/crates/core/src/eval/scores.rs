use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fsutil::{read_file, write_atomic};

pub const SCORE_HEADER: [&str; 4] = ["identifier", "group", "label", "score"];

/// One scored sample. Higher scores mean more likely spoof.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub id: String,
    /// Samples sharing a group (a video, a capture session) can be averaged.
    pub group: String,
    pub label: u8,
    pub score: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ScoreSet {
    pub records: Vec<ScoreRecord>,
}

/// How frame scores become evaluation samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregation {
    /// Every frame is a sample.
    #[default]
    Frame,
    /// Frames of a group are replaced by their mean score.
    Video,
}

impl Aggregation {
    pub fn as_str(self) -> &'static str {
        match self {
            Aggregation::Frame => "frame",
            Aggregation::Video => "video",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "frame" => Some(Aggregation::Frame),
            "video" => Some(Aggregation::Video),
            _ => None,
        }
    }
}

impl ScoreSet {
    pub fn new(records: Vec<ScoreRecord>) -> Result<Self> {
        let set = ScoreSet { records };
        set.validate()?;
        Ok(set)
    }

    /// Builds a set from parallel slices, using the id as group.
    pub fn from_scores(labels: &[u8], scores: &[f64]) -> Result<Self> {
        if labels.len() != scores.len() {
            return Err(Error::InvalidInput(format!(
                "{} labels for {} scores",
                labels.len(),
                scores.len()
            )));
        }
        let records = labels
            .iter()
            .zip(scores)
            .enumerate()
            .map(|(i, (&label, &score))| ScoreRecord {
                id: i.to_string(),
                group: i.to_string(),
                label,
                score,
            })
            .collect();
        ScoreSet::new(records)
    }

    pub fn validate(&self) -> Result<()> {
        for r in &self.records {
            if r.label > 1 {
                return Err(Error::InvalidLabel(format!("{}: label {} is not 0 or 1", r.id, r.label)));
            }
            if !r.score.is_finite() || !(0.0..=1.0).contains(&r.score) {
                return Err(Error::InvalidInput(format!("{}: score {} is outside [0, 1]", r.id, r.score)));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// `(genuine, spoof)` counts.
    pub fn counts(&self) -> (usize, usize) {
        let spoof = self.records.iter().filter(|r| r.label == 1).count();
        (self.records.len() - spoof, spoof)
    }

    pub fn genuine_scores(&self) -> Vec<f64> {
        self.records.iter().filter(|r| r.label == 0).map(|r| r.score).collect()
    }

    pub fn spoof_scores(&self) -> Vec<f64> {
        self.records.iter().filter(|r| r.label == 1).map(|r| r.score).collect()
    }

    /// Applies `f` to every score. The result is not revalidated, so `f`
    /// may leave `[0, 1]`.
    pub fn map_scores(&self, f: impl Fn(f64) -> f64) -> ScoreSet {
        ScoreSet {
            records: self
                .records
                .iter()
                .map(|r| ScoreRecord {
                    score: f(r.score),
                    ..r.clone()
                })
                .collect(),
        }
    }

    /// One record per group carrying the mean score, in order of first
    /// appearance. A group mixing labels is rejected.
    pub fn aggregate(&self, mode: Aggregation) -> Result<ScoreSet> {
        if mode == Aggregation::Frame {
            return Ok(self.clone());
        }
        let mut index: HashMap<&str, usize> = HashMap::new();
        let mut groups: Vec<(ScoreRecord, usize)> = Vec::new();
        for r in &self.records {
            match index.get(r.group.as_str()) {
                Some(&i) => {
                    let (g, n) = &mut groups[i];
                    if g.label != r.label {
                        return Err(Error::Validation(format!("group {} mixes labels", r.group)));
                    }
                    g.score += r.score;
                    *n += 1;
                }
                None => {
                    index.insert(&r.group, groups.len());
                    groups.push((
                        ScoreRecord {
                            id: r.group.clone(),
                            group: r.group.clone(),
                            label: r.label,
                            score: r.score,
                        },
                        1,
                    ));
                }
            }
        }
        Ok(ScoreSet {
            records: groups
                .into_iter()
                .map(|(mut g, n)| {
                    g.score /= n as f64;
                    g
                })
                .collect(),
        })
    }
}

pub fn encode_scores(set: &ScoreSet) -> Result<Vec<u8>> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    let ser = |e: csv::Error| Error::Serialization(e.to_string());
    writer.write_record(SCORE_HEADER).map_err(ser)?;
    for r in &set.records {
        writer
            .write_record([r.id.as_str(), &r.group, &r.label.to_string(), &r.score.to_string()])
            .map_err(ser)?;
    }
    writer.into_inner().map_err(|e| Error::Serialization(e.to_string()))
}

pub fn parse_scores(text: &str) -> Result<ScoreSet> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let parse = |line: u64, message: String| Error::Parse { line, message };
    let header = reader.headers().map_err(|e| parse(1, e.to_string()))?;
    if header.iter().ne(SCORE_HEADER) {
        return Err(parse(1, format!("expected header {}", SCORE_HEADER.join(","))));
    }
    let mut records = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| parse(e.position().map_or(0, |p| p.line()), e.to_string()))?;
        let line = row.position().map_or(0, |p| p.line());
        let label = row[2].parse::<u8>().map_err(|e| parse(line, format!("label: {e}")))?;
        let score = row[3].parse::<f64>().map_err(|e| parse(line, format!("score: {e}")))?;
        records.push(ScoreRecord {
            id: row[0].to_string(),
            group: row[1].to_string(),
            label,
            score,
        });
    }
    ScoreSet::new(records)
}

pub fn write_scores(path: &Path, set: &ScoreSet) -> Result<()> {
    write_atomic(path, &encode_scores(set)?)
}

pub fn read_scores(path: &Path) -> Result<ScoreSet> {
    let text = String::from_utf8(read_file(path)?).map_err(|e| Error::Parse {
        line: 0,
        message: format!("not UTF-8: {e}"),
    })?;
    parse_scores(&text)
}
