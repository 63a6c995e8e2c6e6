//! Visual-token budgeting for the coarse and fine passes, and the window
//! schedule used for long videos.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interval::{IntervalSet, TimeInterval, EPS};

/// Video-token budget shared by every pass.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BudgetConfig {
    /// Total visual tokens available for one pass (`L_v`).
    pub total_tokens: u32,
    pub min_tokens_per_frame: u32,
    pub max_tokens_per_frame: u32,
    /// Coarse sampling rate in frames per second.
    pub fps: f64,
}

impl Default for BudgetConfig {
    fn default() -> Self {
        Self { total_tokens: 8192, min_tokens_per_frame: 16, max_tokens_per_frame: 768, fps: 1.0 }
    }
}

impl BudgetConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = 0 < self.min_tokens_per_frame
            && self.min_tokens_per_frame <= self.max_tokens_per_frame
            && self.max_tokens_per_frame <= self.total_tokens;
        if !ok {
            return Err(Error::domain(format!(
                "budget requires 0 < V_min ({}) <= V_max ({}) <= L_v ({})",
                self.min_tokens_per_frame, self.max_tokens_per_frame, self.total_tokens
            )));
        }
        if !(self.fps.is_finite() && self.fps > 0.0) {
            return Err(Error::domain(format!("sampling rate must be positive, got {}", self.fps)));
        }
        Ok(())
    }

    /// Most frames the budget can hold at minimum resolution.
    pub fn max_frames(&self) -> u32 {
        self.total_tokens / self.min_tokens_per_frame
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pass {
    Coarse,
    Fine,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZoomPlan {
    pub pass: Pass,
    #[serde(rename = "frame_times_s")]
    pub frame_times: Vec<f64>,
    pub tokens_per_frame: u32,
}

impl ZoomPlan {
    pub fn n_frames(&self) -> usize {
        self.frame_times.len()
    }

    pub fn total_tokens(&self) -> u64 {
        self.n_frames() as u64 * u64::from(self.tokens_per_frame)
    }
}

/// Places `n` frames uniformly over the chronological concatenation of
/// `spans`, each at the midpoint of its slot, so every frame lies strictly
/// inside a span.
pub fn place_frames(spans: &IntervalSet, n: usize) -> Vec<f64> {
    let total = spans.measure();
    if n == 0 || total <= EPS {
        return Vec::new();
    }
    let step = total / n as f64;
    let ivs = spans.intervals();
    let mut out = Vec::with_capacity(n);
    let (mut k, mut consumed) = (0, 0.0);
    for j in 0..n {
        let target = (j as f64 + 0.5) * step;
        while k + 1 < ivs.len() && target > consumed + ivs[k].measure() {
            consumed += ivs[k].measure();
            k += 1;
        }
        let t = (ivs[k].start + (target - consumed)).min(ivs[k].end);
        out.push(t);
    }
    out
}

/// Frame count implied by sampling `measure` seconds at `fps`.
pub fn frames_at_rate(measure: f64, fps: f64) -> usize {
    // The epsilon absorbs rounding when fps was itself derived as n / measure.
    ((measure * fps + 1e-9).floor() as usize).max(1)
}

/// Whole-video pass: as many frames as the rate and minimum resolution allow,
/// then the per-frame resolution that fits the budget.
pub fn coarse_plan(duration: f64, cfg: &BudgetConfig) -> Result<ZoomPlan> {
    cfg.validate()?;
    if !(duration.is_finite() && duration > 0.0) {
        return Err(Error::domain(format!("duration must be positive, got {duration}")));
    }
    let by_rate = (duration * cfg.fps).floor() as u64;
    let n = by_rate.min(u64::from(cfg.max_frames())).max(1) as u32;
    let tokens_per_frame = (cfg.total_tokens / n).min(cfg.max_tokens_per_frame).max(cfg.min_tokens_per_frame);
    let whole = IntervalSet::single(0.0, duration)?;
    Ok(ZoomPlan { pass: Pass::Coarse, frame_times: place_frames(&whole, n as usize), tokens_per_frame })
}

/// Zoomed pass over the predicted spans: fewer frames, so each frame gets a
/// larger share of the same budget (capped at the per-frame maximum).
pub fn fine_plan(spans: &IntervalSet, cfg: &BudgetConfig, fine_fps: f64) -> Result<ZoomPlan> {
    cfg.validate()?;
    if !(fine_fps.is_finite() && fine_fps > 0.0) {
        return Err(Error::domain(format!("fine sampling rate must be positive, got {fine_fps}")));
    }
    let measure = spans.measure();
    if measure <= EPS {
        return Err(Error::domain("fine pass needs spans with positive measure"));
    }
    let n = frames_at_rate(measure, fine_fps).min(cfg.max_frames() as usize);
    let tokens_per_frame = (cfg.total_tokens / n as u32).min(cfg.max_tokens_per_frame);
    Ok(ZoomPlan { pass: Pass::Fine, frame_times: place_frames(spans, n), tokens_per_frame })
}

/// Splits `[0, duration]` into consecutive windows of `window_frames / fps`
/// seconds; the last window may be shorter.
pub fn divide_windows(duration: f64, window_frames: u32, cfg: &BudgetConfig) -> Result<Vec<TimeInterval>> {
    if window_frames == 0 {
        return Err(Error::domain("window must hold at least one frame"));
    }
    if !(cfg.fps.is_finite() && cfg.fps > 0.0) {
        return Err(Error::domain(format!("sampling rate must be positive, got {}", cfg.fps)));
    }
    let width = f64::from(window_frames) / cfg.fps;
    let mut windows = Vec::new();
    let mut k = 0u64;
    loop {
        let start = k as f64 * width;
        if start >= duration - EPS {
            break;
        }
        let end = ((k + 1) as f64 * width).min(duration);
        windows.push(TimeInterval { start, end });
        k += 1;
    }
    Ok(windows)
}

/// Per-window coarse prediction used by divide-and-conquer inference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowResult {
    pub window: TimeInterval,
    pub predicted_spans: IntervalSet,
    pub answer: String,
    pub confidence: f64,
}

impl WindowResult {
    /// Clips the spans to the window and checks the confidence range.
    pub fn new(window: TimeInterval, spans: IntervalSet, answer: String, confidence: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&confidence) {
            return Err(Error::domain(format!("confidence {confidence} outside [0, 1]")));
        }
        let predicted_spans = spans.clamp(window.start, window.end);
        Ok(Self { window, predicted_spans, answer, confidence })
    }
}

/// Union of the spans from the `k` most confident windows. Ties go to the
/// earlier window.
pub fn aggregate_top_spans(results: &[WindowResult], k: usize) -> Result<IntervalSet> {
    if results.is_empty() {
        return Err(Error::domain("no window results to aggregate"));
    }
    if k == 0 {
        return Err(Error::domain("k must be at least 1"));
    }
    let mut order: Vec<&WindowResult> = results.iter().collect();
    order.sort_by(|a, b| {
        b.confidence.total_cmp(&a.confidence).then(a.window.start.total_cmp(&b.window.start))
    });
    Ok(order
        .into_iter()
        .take(k)
        .fold(IntervalSet::empty(), |acc, r| acc.union(&r.predicted_spans)))
}

pub const DEFAULT_WINDOW_FRAMES: u32 = 256;
pub const DEFAULT_TOP_K: usize = 4;
pub const DEFAULT_FINE_FPS: f64 = 1.0;

/// Budget plus fine-pass rate: everything needed to turn glue spans into a
/// second-pass frame request.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZoomPlanner {
    pub budget: BudgetConfig,
    pub fine_fps: f64,
}

impl Default for ZoomPlanner {
    fn default() -> Self {
        Self { budget: BudgetConfig::default(), fine_fps: DEFAULT_FINE_FPS }
    }
}

impl ZoomPlanner {
    pub fn new(budget: BudgetConfig, fine_fps: f64) -> Result<Self> {
        budget.validate()?;
        if !(fine_fps.is_finite() && fine_fps > 0.0) {
            return Err(Error::domain(format!("fine sampling rate must be positive, got {fine_fps}")));
        }
        Ok(Self { budget, fine_fps })
    }

    pub fn coarse(&self, duration: f64) -> Result<ZoomPlan> {
        coarse_plan(duration, &self.budget)
    }

    pub fn fine(&self, spans: &IntervalSet) -> Result<ZoomPlan> {
        fine_plan(spans, &self.budget, self.fine_fps)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> BudgetConfig {
        BudgetConfig::default()
    }

    #[test]
    fn coarse_examples() {
        let p = coarse_plan(1024.0, &cfg()).unwrap();
        assert_eq!((p.n_frames(), p.tokens_per_frame), (512, 16));
        let p = coarse_plan(4.0, &cfg()).unwrap();
        assert_eq!((p.n_frames(), p.tokens_per_frame), (4, 768));
        let p = coarse_plan(100.0, &cfg()).unwrap();
        assert_eq!((p.n_frames(), p.tokens_per_frame), (100, 81));
        assert!(p.frame_times.iter().all(|t| (0.0..=100.0).contains(t)));
        assert!(coarse_plan(0.0, &cfg()).is_err());
        assert!(coarse_plan(-3.0, &cfg()).is_err());
    }

    #[test]
    fn fine_examples() {
        let spans = IntervalSet::normalize([(100.0, 132.0), (200.0, 232.0)]).unwrap();
        let p = fine_plan(&spans, &cfg(), 1.0).unwrap();
        assert_eq!((p.n_frames(), p.tokens_per_frame, p.pass), (64, 128, Pass::Fine));
        assert!(p.frame_times.iter().all(|t| spans.contains(*t)));
        let p = fine_plan(&IntervalSet::single(3.0, 7.0).unwrap(), &cfg(), 1.0).unwrap();
        assert_eq!((p.n_frames(), p.tokens_per_frame), (4, 768));
        assert!(fine_plan(&IntervalSet::empty(), &cfg(), 1.0).is_err());
    }

    #[test]
    fn fine_frames_capped_by_budget() {
        let small = BudgetConfig { total_tokens: 64, min_tokens_per_frame: 4, max_tokens_per_frame: 32, fps: 1.0 };
        let p = fine_plan(&IntervalSet::single(0.0, 100.0).unwrap(), &small, 1.0).unwrap();
        assert_eq!((p.n_frames(), p.tokens_per_frame), (16, 4));
    }

    #[test]
    fn invalid_budget_ordering() {
        let bad = BudgetConfig { min_tokens_per_frame: 800, ..cfg() };
        assert!(coarse_plan(10.0, &bad).is_err());
        let bad = BudgetConfig { min_tokens_per_frame: 0, ..cfg() };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn window_examples() {
        let w = divide_windows(1024.0, 256, &cfg()).unwrap();
        assert_eq!(w.len(), 4);
        assert!(w.iter().all(|iv| (iv.measure() - 256.0).abs() < 1e-12));
        let w = divide_windows(100.0, 256, &cfg()).unwrap();
        assert_eq!(w, vec![TimeInterval { start: 0.0, end: 100.0 }]);
        let w = divide_windows(300.0, 256, &cfg()).unwrap();
        assert_eq!(w[1], TimeInterval { start: 256.0, end: 300.0 });
        assert!(divide_windows(10.0, 0, &cfg()).is_err());
    }

    fn result(start: f64, conf: f64) -> WindowResult {
        let window = TimeInterval { start, end: start + 10.0 };
        let spans = IntervalSet::single(start + 1.0, start + 3.0).unwrap();
        WindowResult::new(window, spans, "A".into(), conf).unwrap()
    }

    #[test]
    fn top_span_examples() {
        let rs = vec![result(0.0, 0.9), result(10.0, 0.2), result(20.0, 0.8), result(30.0, 0.1)];
        let agg = aggregate_top_spans(&rs, 2).unwrap();
        assert_eq!(agg.to_pairs(), vec![(1.0, 3.0), (21.0, 23.0)]);
        let all = aggregate_top_spans(&rs, 10).unwrap();
        assert_eq!(all.len(), 4);
        assert!(aggregate_top_spans(&[], 4).is_err());
        let tied = vec![result(10.0, 0.5), result(0.0, 0.5)];
        assert_eq!(aggregate_top_spans(&tied, 1).unwrap().to_pairs(), vec![(1.0, 3.0)]);
    }

    #[test]
    fn window_result_clips_and_validates() {
        let w = TimeInterval { start: 0.0, end: 5.0 };
        let r = WindowResult::new(w, IntervalSet::single(3.0, 9.0).unwrap(), "B".into(), 1.0).unwrap();
        assert_eq!(r.predicted_spans.to_pairs(), vec![(3.0, 5.0)]);
        assert!(WindowResult::new(w, IntervalSet::empty(), "B".into(), 1.5).is_err());
    }

    #[test]
    fn plan_json_shape() {
        let p = coarse_plan(4.0, &cfg()).unwrap();
        let v: serde_json::Value = serde_json::to_value(&p).unwrap();
        assert_eq!(v["pass"], "coarse");
        assert_eq!(v["tokens_per_frame"], 768);
        assert_eq!(v["frame_times_s"].as_array().unwrap().len(), 4);
    }

    #[test]
    fn defaults_match_ablation_choices() {
        assert_eq!(DEFAULT_WINDOW_FRAMES, 256);
        assert_eq!(DEFAULT_TOP_K, 4);
    }
}
