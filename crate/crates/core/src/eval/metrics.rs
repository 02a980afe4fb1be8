use serde::{Deserialize, Serialize};

use super::scores::ScoreSet;
use crate::error::{Error, Result};

/// Serializes infinite thresholds as the strings `"inf"` / `"-inf"`, which
/// JSON numbers cannot represent.
pub(crate) mod extended_f64 {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Number(f64),
        Text(String),
    }

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if *v == f64::INFINITY {
            "inf".serialize(s)
        } else if *v == f64::NEG_INFINITY {
            "-inf".serialize(s)
        } else {
            v.serialize(s)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Number(v) => Ok(v),
            Repr::Text(t) if t == "inf" => Ok(f64::INFINITY),
            Repr::Text(t) if t == "-inf" => Ok(f64::NEG_INFINITY),
            Repr::Text(t) => Err(serde::de::Error::custom(format!("invalid threshold {t:?}"))),
        }
    }
}

/// Error rates when scores above `threshold` are called spoof.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    #[serde(with = "extended_f64")]
    pub threshold: f64,
    /// Fraction of genuine samples scored above the threshold.
    pub far: f64,
    /// Fraction of spoof samples scored at or below the threshold.
    pub frr: f64,
}

fn require_both_labels(set: &ScoreSet) -> Result<(usize, usize)> {
    set.validate()?;
    let (g, s) = set.counts();
    if g == 0 || s == 0 {
        return Err(Error::InsufficientData(format!(
            "need both labels, got {g} genuine and {s} spoof scores"
        )));
    }
    Ok((g, s))
}

/// ROC at `-inf`, every distinct score in increasing order, and `+inf`.
/// FAR is non-increasing and FRR non-decreasing along the list.
pub fn roc_curve(set: &ScoreSet) -> Result<Vec<RocPoint>> {
    let (n_genuine, n_spoof) = require_both_labels(set)?;
    let mut genuine = set.genuine_scores();
    let mut spoof = set.spoof_scores();
    genuine.sort_by(f64::total_cmp);
    spoof.sort_by(f64::total_cmp);
    let mut thresholds: Vec<f64> = genuine.iter().chain(&spoof).copied().collect();
    thresholds.sort_by(f64::total_cmp);
    thresholds.dedup();

    let (g_total, s_total) = (n_genuine as f64, n_spoof as f64);
    let mut points = Vec::with_capacity(thresholds.len() + 2);
    points.push(RocPoint {
        threshold: f64::NEG_INFINITY,
        far: 1.0,
        frr: 0.0,
    });
    let (mut g_at_or_below, mut s_at_or_below) = (0usize, 0usize);
    for t in thresholds {
        while g_at_or_below < genuine.len() && genuine[g_at_or_below] <= t {
            g_at_or_below += 1;
        }
        while s_at_or_below < spoof.len() && spoof[s_at_or_below] <= t {
            s_at_or_below += 1;
        }
        points.push(RocPoint {
            threshold: t,
            far: (n_genuine - g_at_or_below) as f64 / g_total,
            frr: s_at_or_below as f64 / s_total,
        });
    }
    points.push(RocPoint {
        threshold: f64::INFINITY,
        far: 0.0,
        frr: 1.0,
    });
    Ok(points)
}

/// Equal error rate and the threshold where it occurs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EerPoint {
    pub rate: f64,
    pub threshold: f64,
}

/// Crossing of FAR and FRR along an ROC from [`roc_curve`].
///
/// A run of points with FAR equal to FRR yields that rate at the midpoint of
/// the run's thresholds. Otherwise the two points bracketing the sign change
/// of FAR - FRR are interpolated linearly, in rate and in threshold (an
/// infinite endpoint leaves the finite one as the threshold).
pub fn eer_from_roc(roc: &[RocPoint]) -> Result<EerPoint> {
    let d = |p: &RocPoint| p.far - p.frr;
    let k = roc
        .iter()
        .position(|p| d(p) <= 0.0)
        .ok_or_else(|| Error::InsufficientData("ROC never reaches FAR <= FRR".into()))?;
    if k == 0 {
        return Err(Error::InsufficientData("ROC must start at FAR 1, FRR 0".into()));
    }
    if d(&roc[k]) == 0.0 {
        let last = k + roc[k..].iter().take_while(|p| d(p) == 0.0).count() - 1;
        return Ok(EerPoint {
            rate: roc[k].far,
            threshold: 0.5 * (roc[k].threshold + roc[last].threshold),
        });
    }
    let (a, b) = (&roc[k - 1], &roc[k]);
    let alpha = d(a) / (d(a) - d(b));
    let rate = a.far + alpha * (b.far - a.far);
    let threshold = match (a.threshold.is_finite(), b.threshold.is_finite()) {
        (true, true) => a.threshold + alpha * (b.threshold - a.threshold),
        (true, false) => a.threshold,
        (false, _) => b.threshold,
    };
    Ok(EerPoint { rate, threshold })
}

pub fn eer(set: &ScoreSet) -> Result<EerPoint> {
    eer_from_roc(&roc_curve(set)?)
}

/// The ROC point closest to the EER crossing, `min |FAR - FRR|` with ties
/// going to the lower threshold. Because it is one of the observed scores,
/// applying it elsewhere commutes with monotone rescaling of all scores.
pub fn operating_point(roc: &[RocPoint]) -> Result<RocPoint> {
    roc.iter()
        .copied()
        .reduce(|best, p| if (p.far - p.frr).abs() < (best.far - best.frr).abs() { p } else { best })
        .ok_or_else(|| Error::InsufficientData("empty ROC".into()))
}

/// `(FAR, FRR)` of `set` at a fixed threshold.
pub fn apply_threshold(set: &ScoreSet, threshold: f64) -> Result<(f64, f64)> {
    let (g, s) = require_both_labels(set)?;
    let false_accepts = set.records.iter().filter(|r| r.label == 0 && r.score > threshold).count();
    let false_rejects = set.records.iter().filter(|r| r.label == 1 && r.score <= threshold).count();
    Ok((false_accepts as f64 / g as f64, false_rejects as f64 / s as f64))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// EER of the evaluated set.
    pub eer: f64,
    pub eer_threshold: f64,
    /// EER of the set that fixed the operating threshold.
    pub dev_eer: f64,
    /// Operating threshold taken from the dev set.
    #[serde(with = "extended_f64")]
    pub threshold: f64,
    pub far: f64,
    pub frr: f64,
    /// `(far + frr) / 2` at `threshold`.
    pub hter: f64,
    pub genuine: usize,
    pub spoof: usize,
    pub roc: Vec<RocPoint>,
}

/// EER of `test`, plus HTER of `test` at the operating threshold of `dev`.
pub fn hter(dev: &ScoreSet, test: &ScoreSet) -> Result<EvalReport> {
    let dev_roc = roc_curve(dev)?;
    let dev_eer = eer_from_roc(&dev_roc)?;
    let threshold = operating_point(&dev_roc)?.threshold;
    let roc = roc_curve(test)?;
    let test_eer = eer_from_roc(&roc)?;
    let (far, frr) = apply_threshold(test, threshold)?;
    let (genuine, spoof) = test.counts();
    Ok(EvalReport {
        eer: test_eer.rate,
        eer_threshold: test_eer.threshold,
        dev_eer: dev_eer.rate,
        threshold,
        far,
        frr,
        hter: 0.5 * (far + frr),
        genuine,
        spoof,
        roc,
    })
}

/// ROC as CSV `threshold,far,frr`.
pub fn encode_roc_csv(roc: &[RocPoint]) -> Vec<u8> {
    let mut out = String::from("threshold,far,frr\n");
    for p in roc {
        out.push_str(&format!("{},{},{}\n", p.threshold, p.far, p.frr));
    }
    out.into_bytes()
}
