use std::collections::BTreeSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::metrics::{extended_f64, hter};
use super::scores::{Aggregation, ScoreSet};
use crate::error::{Error, Result};

/// One (training set, evaluation set, model variant, aggregation) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossEvalEntry {
    pub train: String,
    pub eval: String,
    pub variant: String,
    pub aggregation: Aggregation,
    pub eer: f64,
    pub hter: f64,
    #[serde(with = "extended_f64")]
    pub threshold: f64,
    pub far: f64,
    pub frr: f64,
    pub genuine: usize,
    pub spoof: usize,
}

/// Scores one cell. `dev` holds the training set's dev-split scores, which
/// fix the operating threshold; `test` holds the evaluation set's scores.
pub fn cross_eval_entry(
    train: &str,
    eval: &str,
    variant: &str,
    aggregation: Aggregation,
    dev: &ScoreSet,
    test: &ScoreSet,
) -> Result<CrossEvalEntry> {
    let report = hter(&dev.aggregate(aggregation)?, &test.aggregate(aggregation)?)?;
    Ok(CrossEvalEntry {
        train: train.into(),
        eval: eval.into(),
        variant: variant.into(),
        aggregation,
        eer: report.eer,
        hter: report.hter,
        threshold: report.threshold,
        far: report.far,
        frr: report.frr,
        genuine: report.genuine,
        spoof: report.spoof,
    })
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CrossEvalReport {
    pub entries: Vec<CrossEvalEntry>,
}

fn unique<'a>(it: impl Iterator<Item = &'a String>) -> Vec<String> {
    let mut seen = BTreeSet::new();
    it.filter(|s| seen.insert(s.as_str())).cloned().collect()
}

fn pct(v: f64) -> String {
    format!("{:.2}", 100.0 * v)
}

impl CrossEvalReport {
    pub fn get(&self, train: &str, eval: &str, variant: &str, aggregation: Aggregation) -> Option<&CrossEvalEntry> {
        self.entries
            .iter()
            .find(|e| e.train == train && e.eval == eval && e.variant == variant && e.aggregation == aggregation)
    }

    pub fn train_sets(&self) -> Vec<String> {
        unique(self.entries.iter().map(|e| &e.train))
    }

    pub fn eval_sets(&self) -> Vec<String> {
        unique(self.entries.iter().map(|e| &e.eval))
    }

    pub fn variants(&self) -> Vec<String> {
        unique(self.entries.iter().map(|e| &e.variant))
    }

    /// Training set by evaluation set, `EER / HTER` in percent, for one
    /// variant. Missing cells (eval-only sets have no training row) print `-`.
    pub fn train_eval_table(&self, variant: &str, aggregation: Aggregation) -> String {
        let evals = self.eval_sets();
        let mut out = format!("{variant} ({} scores), EER / HTER %\n", aggregation.as_str());
        let _ = write!(out, "{:<12}", "train \\ eval");
        for e in &evals {
            let _ = write!(out, " | {e:>15}");
        }
        out.push('\n');
        for t in self.train_sets() {
            let _ = write!(out, "{t:<12}");
            for e in &evals {
                let cell = self
                    .get(&t, e, variant, aggregation)
                    .map_or("-".to_string(), |c| format!("{} / {}", pct(c.eer), pct(c.hter)));
                let _ = write!(out, " | {cell:>15}");
            }
            out.push('\n');
        }
        out
    }

    /// Variant by evaluation set, EER in percent, for one training set.
    pub fn variant_table(&self, train: &str, aggregation: Aggregation) -> String {
        let evals = self.eval_sets();
        let mut out = format!("trained on {train} ({} scores), EER %\n", aggregation.as_str());
        let _ = write!(out, "{:<12}", "variant");
        for e in &evals {
            let _ = write!(out, " | {e:>8}");
        }
        out.push('\n');
        for v in self.variants() {
            let _ = write!(out, "{v:<12}");
            for e in &evals {
                let cell = self.get(train, e, &v, aggregation).map_or("-".to_string(), |c| pct(c.eer));
                let _ = write!(out, " | {cell:>8}");
            }
            out.push('\n');
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Serialization(e.to_string()))
    }
}
