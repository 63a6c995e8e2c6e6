//! Exact set algebra over time intervals (seconds) and the overlap ratios
//! built on it.
//!
//! An [`IntervalSet`] is always kept in canonical form: sorted by start,
//! pairwise disjoint, with overlapping or abutting members merged and
//! zero-length members dropped. Every ratio (IoU, IoG, IoP) is computed from
//! exact interval arithmetic, never from a rasterized timeline.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Absolute tolerance in seconds for merging and emptiness tests.
pub const EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "(f64, f64)", into = "(f64, f64)")]
pub struct TimeInterval {
    pub start: f64,
    pub end: f64,
}

impl TimeInterval {
    /// Builds an interval, swapping the endpoints if they arrive reversed.
    pub fn new(a: f64, b: f64) -> Self {
        if a <= b {
            Self { start: a, end: b }
        } else {
            Self { start: b, end: a }
        }
    }

    pub fn measure(&self) -> f64 {
        (self.end - self.start).max(0.0)
    }

    pub fn contains(&self, t: f64) -> bool {
        t >= self.start && t <= self.end
    }
}

impl From<(f64, f64)> for TimeInterval {
    fn from((a, b): (f64, f64)) -> Self {
        TimeInterval::new(a, b)
    }
}

impl From<TimeInterval> for (f64, f64) {
    fn from(iv: TimeInterval) -> Self {
        (iv.start, iv.end)
    }
}

impl fmt::Display for TimeInterval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.start, self.end)
    }
}

/// Canonical disjoint union of time intervals.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
#[serde(transparent)]
pub struct IntervalSet {
    intervals: Vec<TimeInterval>,
}

impl<'de> Deserialize<'de> for IntervalSet {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = Vec::<(f64, f64)>::deserialize(d)?;
        IntervalSet::normalize(raw).map_err(serde::de::Error::custom)
    }
}

impl IntervalSet {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Canonicalizes arbitrary `(start, end)` pairs: reversed pairs are
    /// swapped, overlapping and abutting pairs merged, zero-length pairs
    /// dropped.
    pub fn normalize<I>(raw: I) -> Result<Self>
    where
        I: IntoIterator<Item = (f64, f64)>,
    {
        let mut spans = Vec::new();
        for (a, b) in raw {
            if !a.is_finite() || !b.is_finite() {
                return Err(Error::domain(format!("non-finite interval endpoint ({a}, {b})")));
            }
            spans.push(TimeInterval::new(a, b));
        }
        Ok(Self::from_valid(spans))
    }

    /// Single-interval convenience constructor.
    pub fn single(a: f64, b: f64) -> Result<Self> {
        Self::normalize([(a, b)])
    }

    fn from_valid(mut spans: Vec<TimeInterval>) -> Self {
        spans.retain(|iv| iv.measure() > EPS);
        spans.sort_by(|x, y| x.start.total_cmp(&y.start));
        let mut merged: Vec<TimeInterval> = Vec::with_capacity(spans.len());
        for iv in spans {
            match merged.last_mut() {
                Some(last) if iv.start <= last.end + EPS => {
                    if iv.end > last.end {
                        last.end = iv.end;
                    }
                }
                _ => merged.push(iv),
            }
        }
        Self { intervals: merged }
    }

    pub fn intervals(&self) -> &[TimeInterval] {
        &self.intervals
    }

    pub fn len(&self) -> usize {
        self.intervals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    /// Total length in seconds.
    pub fn measure(&self) -> f64 {
        self.intervals.iter().map(TimeInterval::measure).sum()
    }

    pub fn contains(&self, t: f64) -> bool {
        self.intervals.iter().any(|iv| iv.contains(t))
    }

    pub fn intersect(&self, other: &IntervalSet) -> IntervalSet {
        let (a, b) = (&self.intervals, &other.intervals);
        let (mut i, mut j) = (0, 0);
        let mut out = Vec::new();
        while i < a.len() && j < b.len() {
            let lo = a[i].start.max(b[j].start);
            let hi = a[i].end.min(b[j].end);
            if hi - lo > EPS {
                out.push(TimeInterval { start: lo, end: hi });
            }
            if a[i].end < b[j].end {
                i += 1;
            } else {
                j += 1;
            }
        }
        // Pieces come out sorted and disjoint; re-canonicalize to merge
        // pieces that only abut.
        IntervalSet::from_valid(out)
    }

    pub fn union(&self, other: &IntervalSet) -> IntervalSet {
        let mut all = self.intervals.clone();
        all.extend_from_slice(&other.intervals);
        IntervalSet::from_valid(all)
    }

    /// Restricts the set to `[lo, hi]`.
    pub fn clamp(&self, lo: f64, hi: f64) -> IntervalSet {
        let window = IntervalSet::from_valid(vec![TimeInterval::new(lo, hi)]);
        self.intersect(&window)
    }

    /// Set equality up to [`EPS`] on every endpoint.
    pub fn approx_eq(&self, other: &IntervalSet) -> bool {
        self.len() == other.len()
            && self
                .intervals
                .iter()
                .zip(&other.intervals)
                .all(|(x, y)| (x.start - y.start).abs() <= EPS && (x.end - y.end).abs() <= EPS)
    }

    pub fn to_pairs(&self) -> Vec<(f64, f64)> {
        self.intervals.iter().map(|iv| (iv.start, iv.end)).collect()
    }
}

impl fmt::Display for IntervalSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("[")?;
        for (k, iv) in self.intervals.iter().enumerate() {
            if k > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{iv}")?;
        }
        f.write_str("]")
    }
}

/// Intersection over union. The ground truth must have positive measure.
pub fn iou(pred: &IntervalSet, gt: &IntervalSet) -> Result<f64> {
    let gt_len = gt.measure();
    if gt_len <= EPS {
        return Err(Error::domain("IoU undefined for an empty ground truth"));
    }
    let inter = pred.intersect(gt).measure();
    let union = pred.measure() + gt_len - inter;
    Ok((inter / union).clamp(0.0, 1.0))
}

/// Intersection over ground truth: how much of the evidence is covered.
pub fn iog(pred: &IntervalSet, gt: &IntervalSet) -> Result<f64> {
    let gt_len = gt.measure();
    if gt_len <= EPS {
        return Err(Error::domain("IoG undefined for an empty ground truth"));
    }
    Ok((pred.intersect(gt).measure() / gt_len).clamp(0.0, 1.0))
}

/// Intersection over prediction: how much of the prediction is evidence.
pub fn iop(pred: &IntervalSet, gt: &IntervalSet) -> Result<f64> {
    let pred_len = pred.measure();
    if pred_len <= EPS {
        return Err(Error::domain("IoP undefined for an empty prediction"));
    }
    Ok((pred.intersect(gt).measure() / pred_len).clamp(0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(pairs: &[(f64, f64)]) -> IntervalSet {
        IntervalSet::normalize(pairs.iter().copied()).unwrap()
    }

    #[test]
    fn normalize_sorts_merges_and_swaps() {
        assert_eq!(set(&[(4.0, 6.0), (0.0, 2.0)]).to_pairs(), vec![(0.0, 2.0), (4.0, 6.0)]);
        assert_eq!(set(&[(0.0, 3.0), (2.0, 5.0)]).to_pairs(), vec![(0.0, 5.0)]);
        let swapped = set(&[(30.8, 20.3)]);
        assert_eq!(swapped.to_pairs(), vec![(20.3, 30.8)]);
        assert!((swapped.measure() - 10.5).abs() < 1e-12);
        assert_eq!(set(&[(0.0, 2.0), (2.0, 4.0)]).to_pairs(), vec![(0.0, 4.0)]);
    }

    #[test]
    fn normalize_rejects_non_finite() {
        assert!(matches!(IntervalSet::normalize([(0.0, f64::NAN)]), Err(Error::Domain(_))));
        assert!(IntervalSet::normalize([(f64::NEG_INFINITY, 1.0)]).is_err());
    }

    #[test]
    fn zero_length_spans_vanish() {
        let s = set(&[(3.0, 3.0)]);
        assert!(s.is_empty());
        assert_eq!(s.measure(), 0.0);
    }

    #[test]
    fn intersection_examples() {
        assert!(set(&[(0.0, 2.0)]).intersect(&set(&[(5.0, 7.0)])).is_empty());
        let a = set(&[(0.0, 2.0), (4.0, 6.0)]);
        assert_eq!(a.intersect(&a), a);
        assert_eq!(a.intersect(&set(&[(1.0, 5.0)])).to_pairs(), vec![(1.0, 2.0), (4.0, 5.0)]);
    }

    #[test]
    fn measure_examples() {
        assert_eq!(IntervalSet::empty().measure(), 0.0);
        assert_eq!(set(&[(0.0, 2.0), (4.0, 6.0)]).measure(), 4.0);
    }

    #[test]
    fn ratio_examples() {
        let p = set(&[(0.0, 10.0)]);
        let g = set(&[(5.0, 15.0)]);
        assert!((iou(&p, &g).unwrap() - 1.0 / 3.0).abs() < 1e-12);
        assert!((iog(&p, &g).unwrap() - 0.5).abs() < 1e-12);
        assert!((iop(&p, &g).unwrap() - 0.5).abs() < 1e-12);
        let two = set(&[(0.0, 2.0), (4.0, 6.0)]);
        assert!((iou(&two, &set(&[(1.0, 5.0)])).unwrap() - 1.0 / 3.0).abs() < 1e-12);
        let exact = set(&[(20.3, 30.8)]);
        assert_eq!(iou(&exact, &exact).unwrap(), 1.0);
        assert_eq!(iog(&IntervalSet::empty(), &g).unwrap(), 0.0);
        assert_eq!(iog(&set(&[(0.0, 20.0)]), &g).unwrap(), 1.0);
        assert_eq!(iop(&set(&[(6.0, 7.0)]), &g).unwrap(), 1.0);
    }

    #[test]
    fn ratio_domain_errors() {
        let g = set(&[(5.0, 15.0)]);
        assert!(iou(&g, &IntervalSet::empty()).is_err());
        assert!(iog(&g, &IntervalSet::empty()).is_err());
        assert!(iop(&IntervalSet::empty(), &g).is_err());
    }

    #[test]
    fn serde_uses_pair_lists() {
        let s = set(&[(1.0, 3.0), (2.0, 6.0)]);
        assert_eq!(serde_json::to_string(&s).unwrap(), "[[1.0,6.0]]");
        let back: IntervalSet = serde_json::from_str("[[6,2],[0,1]]").unwrap();
        assert_eq!(back.to_pairs(), vec![(0.0, 1.0), (2.0, 6.0)]);
    }
}
