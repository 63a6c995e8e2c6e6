//! Grounded-QA evaluation: mIoU/mIoG/mIoP, recall at IoU thresholds,
//! answer accuracy, Acc@GQA, rec.@IoU and acc.@IoU.
//!
//! Thresholded recall uses a strict `IoU > τ`; Acc@GQA uses `IoP ≥ 0.5`.
//! A prediction with no spans scores IoU = IoG = 0, is left out of mIoP, and
//! never counts as grounded.

use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interval::{self, IntervalSet};
use crate::reward::GroundTruth;

/// Thresholds averaged by rec.@IoU and acc.@IoU.
pub const IOU_SWEEP: [f64; 5] = [0.1, 0.2, 0.3, 0.4, 0.5];
/// Thresholds reported individually as `R@τ`.
pub const RECALL_THRESHOLDS: [f64; 2] = [0.3, 0.5];
pub const GQA_IOP_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub id: String,
    #[serde(default)]
    pub answer: String,
    #[serde(rename = "spans_s", default)]
    pub spans: IntervalSet,
}

/// Per-item overlap and correctness, kept for CSV dumps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemScore {
    pub id: String,
    pub correct: bool,
    pub iou: f64,
    pub iog: f64,
    /// `None` when the prediction is empty.
    pub iop: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub miou: f64,
    pub miog: f64,
    pub miop: f64,
    /// Keyed by threshold, e.g. `"0.3"`.
    pub recall_at: BTreeMap<String, f64>,
    pub acc: f64,
    pub acc_gqa: f64,
    pub rec_at_iou: f64,
    pub acc_at_iou: f64,
    pub n: usize,
}

pub fn threshold_key(tau: f64) -> String {
    format!("{tau}")
}

/// Scores every prediction against its ground truth.
pub fn score_items(preds: &[PredictionRecord], gts: &[GroundTruth]) -> Result<Vec<ItemScore>> {
    if preds.is_empty() {
        return Err(Error::domain("no predictions to evaluate"));
    }
    let by_id: HashMap<&str, &GroundTruth> = gts.iter().map(|g| (g.id.as_str(), g)).collect();
    let mut seen = HashSet::new();
    preds
        .iter()
        .map(|p| {
            if !seen.insert(p.id.as_str()) {
                return Err(Error::domain(format!("duplicate prediction id {}", p.id)));
            }
            let gt = by_id.get(p.id.as_str()).ok_or_else(|| Error::domain(format!("no ground truth for {}", p.id)))?;
            let iou = interval::iou(&p.spans, &gt.gt_spans)?;
            let iog = interval::iog(&p.spans, &gt.gt_spans)?;
            let iop = if p.spans.is_empty() { None } else { Some(interval::iop(&p.spans, &gt.gt_spans)?) };
            Ok(ItemScore { id: p.id.clone(), correct: p.answer == gt.answer, iou, iog, iop })
        })
        .collect()
}

fn fraction(items: &[ItemScore], pred: impl Fn(&ItemScore) -> bool) -> f64 {
    items.iter().filter(|i| pred(i)).count() as f64 / items.len() as f64
}

pub fn recall_at(items: &[ItemScore], tau: f64) -> f64 {
    fraction(items, |i| i.iou > tau)
}

pub fn acc_gqa_of(items: &[ItemScore]) -> f64 {
    fraction(items, |i| i.correct && i.iop.is_some_and(|p| p >= GQA_IOP_THRESHOLD))
}

pub fn rec_at_iou_of(items: &[ItemScore]) -> f64 {
    IOU_SWEEP.iter().map(|&t| recall_at(items, t)).sum::<f64>() / IOU_SWEEP.len() as f64
}

pub fn acc_at_iou_of(items: &[ItemScore]) -> f64 {
    IOU_SWEEP.iter().map(|&t| fraction(items, |i| i.correct && i.iou > t)).sum::<f64>() / IOU_SWEEP.len() as f64
}

pub fn report(items: &[ItemScore]) -> Result<MetricReport> {
    if items.is_empty() {
        return Err(Error::domain("no items to report"));
    }
    let n = items.len();
    let mean = |f: &dyn Fn(&ItemScore) -> f64| items.iter().map(f).sum::<f64>() / n as f64;
    let iops: Vec<f64> = items.iter().filter_map(|i| i.iop).collect();
    let miop = if iops.is_empty() { 0.0 } else { iops.iter().sum::<f64>() / iops.len() as f64 };
    let mut thresholds: Vec<f64> = RECALL_THRESHOLDS.iter().chain(&IOU_SWEEP).copied().collect();
    thresholds.sort_by(f64::total_cmp);
    thresholds.dedup();
    Ok(MetricReport {
        miou: mean(&|i| i.iou),
        miog: mean(&|i| i.iog),
        miop,
        recall_at: thresholds.iter().map(|&t| (threshold_key(t), recall_at(items, t))).collect(),
        acc: fraction(items, |i| i.correct),
        acc_gqa: acc_gqa_of(items),
        rec_at_iou: rec_at_iou_of(items),
        acc_at_iou: acc_at_iou_of(items),
        n,
    })
}

pub fn evaluate(preds: &[PredictionRecord], gts: &[GroundTruth]) -> Result<MetricReport> {
    report(&score_items(preds, gts)?)
}

pub fn acc_gqa(preds: &[PredictionRecord], gts: &[GroundTruth]) -> Result<f64> {
    Ok(acc_gqa_of(&score_items(preds, gts)?))
}

pub fn rec_at_iou(preds: &[PredictionRecord], gts: &[GroundTruth]) -> Result<f64> {
    Ok(rec_at_iou_of(&score_items(preds, gts)?))
}

pub fn acc_at_iou(preds: &[PredictionRecord], gts: &[GroundTruth]) -> Result<f64> {
    Ok(acc_at_iou_of(&score_items(preds, gts)?))
}

/// Metric names accepted by [`MetricReport::select`].
pub const METRIC_NAMES: &[&str] = &[
    "miou", "miog", "miop", "r@0.1", "r@0.2", "r@0.3", "r@0.4", "r@0.5", "acc", "acc_gqa", "rec_at_iou", "acc_at_iou",
];

impl MetricReport {
    pub fn get(&self, name: &str) -> Option<f64> {
        match name {
            "miou" => Some(self.miou),
            "miog" => Some(self.miog),
            "miop" => Some(self.miop),
            "acc" => Some(self.acc),
            "acc_gqa" => Some(self.acc_gqa),
            "rec_at_iou" => Some(self.rec_at_iou),
            "acc_at_iou" => Some(self.acc_at_iou),
            _ => name.strip_prefix("r@").and_then(|t| self.recall_at.get(t).copied()),
        }
    }

    /// Named metrics in the order given; unknown names are an error.
    pub fn select(&self, names: &[&str]) -> Result<Vec<(String, f64)>> {
        names
            .iter()
            .map(|n| {
                self.get(n).map(|v| (n.to_string(), v)).ok_or_else(|| Error::domain(format!("unknown metric {n}")))
            })
            .collect()
    }

    /// Two-column aligned text table.
    pub fn table(&self, names: &[&str]) -> Result<String> {
        let rows = self.select(names)?;
        let width = rows.iter().map(|(n, _)| n.len()).max().unwrap_or(0).max("metric".len());
        let mut out = format!("{:<width$}  {:>10}\n", "metric", "value");
        for (name, value) in rows {
            out.push_str(&format!("{name:<width$}  {:>10}\n", format_sig(value, 6)));
        }
        out.push_str(&format!("{:<width$}  {:>10}\n", "n", self.n));
        Ok(out)
    }
}

/// Up to `digits` significant digits, trailing zeros removed.
pub fn format_sig(x: f64, digits: usize) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let magnitude = x.abs().log10().floor() as i32;
    let decimals = (digits as i32 - 1 - magnitude).max(0) as usize;
    let s = format!("{x:.decimals$}");
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gt(id: &str) -> GroundTruth {
        GroundTruth {
            id: id.into(),
            duration: 100.0,
            question: "q".into(),
            options: [("A", "a"), ("B", "b")].map(|(k, v)| (k.to_string(), v.to_string())).into(),
            answer: "A".into(),
            gt_spans: IntervalSet::single(0.0, 10.0).unwrap(),
        }
    }

    /// Prediction `[0, 10·iou]` has exactly the requested IoU with `[0, 10]`.
    fn pred(id: &str, answer: &str, iou: f64) -> PredictionRecord {
        PredictionRecord { id: id.into(), answer: answer.into(), spans: IntervalSet::single(0.0, 10.0 * iou).unwrap() }
    }

    #[test]
    fn three_item_fixture() {
        let gts = vec![gt("a"), gt("b"), gt("c")];
        let preds = vec![pred("a", "A", 0.6), pred("b", "A", 0.2), pred("c", "B", 0.35)];
        let r = evaluate(&preds, &gts).unwrap();
        assert!((r.miou - 0.383_333).abs() < 1e-4);
        assert!((r.recall_at["0.3"] - 2.0 / 3.0).abs() < 1e-12);
        assert!((r.recall_at["0.5"] - 1.0 / 3.0).abs() < 1e-12);
        assert!((r.acc - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn gqa_fixture() {
        let gts = vec![gt("a"), gt("b"), gt("c")];
        // IoP 0.6, 0.4, 0.9 from predictions partially outside [0, 10].
        let span = |lo: f64, hi: f64| IntervalSet::single(lo, hi).unwrap();
        let preds = vec![
            PredictionRecord { id: "a".into(), answer: "A".into(), spans: span(4.0, 14.0) },
            PredictionRecord { id: "b".into(), answer: "A".into(), spans: span(6.0, 16.0) },
            PredictionRecord { id: "c".into(), answer: "B".into(), spans: span(1.0, 11.0) },
        ];
        assert!((acc_gqa(&preds, &gts).unwrap() - 1.0 / 3.0).abs() < 1e-12);
        let empty = vec![PredictionRecord { id: "a".into(), answer: "A".into(), spans: IntervalSet::empty() }];
        assert_eq!(acc_gqa(&empty, &gts).unwrap(), 0.0);
        let r = evaluate(&empty, &gts).unwrap();
        assert_eq!((r.miou, r.miog, r.miop), (0.0, 0.0, 0.0));
    }

    #[test]
    fn sweep_fixtures() {
        let gts = vec![gt("a"), gt("b")];
        let preds = vec![pred("a", "B", 0.45), pred("b", "B", 0.05)];
        assert!((rec_at_iou(&preds, &gts).unwrap() - 0.4).abs() < 1e-12);
        assert_eq!(acc_at_iou(&preds, &gts).unwrap(), 0.0);
        let single = vec![pred("a", "A", 0.45)];
        assert!((acc_at_iou(&single, &gts).unwrap() - 0.8).abs() < 1e-12);
    }

    #[test]
    fn perfect_predictions() {
        let gts = vec![gt("a"), gt("b")];
        let preds = vec![pred("a", "A", 1.0), pred("b", "A", 1.0)];
        let r = evaluate(&preds, &gts).unwrap();
        for v in [r.miou, r.miog, r.miop, r.acc, r.acc_gqa, r.rec_at_iou, r.acc_at_iou] {
            assert_eq!(v, 1.0);
        }
        assert!(r.recall_at.values().all(|v| *v == 1.0));
    }

    #[test]
    fn errors() {
        let gts = vec![gt("a")];
        assert!(evaluate(&[], &gts).is_err());
        assert!(evaluate(&[pred("zz", "A", 0.5)], &gts).is_err());
        assert!(evaluate(&[pred("a", "A", 0.5), pred("a", "A", 0.5)], &gts).is_err());
        let r = evaluate(&[pred("a", "A", 0.5)], &gts).unwrap();
        assert!(r.select(&["miou", "bogus"]).is_err());
        assert_eq!(r.get("r@0.3"), Some(1.0));
    }

    #[test]
    fn table_rendering() {
        let r = evaluate(&[pred("a", "A", 0.5)], &[gt("a")]).unwrap();
        let t = r.table(&["miou", "acc"]).unwrap();
        assert!(t.contains("miou"));
        assert!(t.lines().count() == 4);
        assert_eq!(format_sig(1.0 / 3.0, 6), "0.333333");
        assert_eq!(format_sig(1.0, 6), "1");
    }
}
