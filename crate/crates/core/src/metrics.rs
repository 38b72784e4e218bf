//! Geometric and statistical kernels for tracking evaluation.
//!
//! Short-term protocol: precision rate (PR) at a 20 px center-error
//! threshold, its ground-truth-size-normalized variant (NPR) at 0.20, and
//! success rate (SR) as the area under the IoU success curve sampled at 101
//! thresholds with a strict `iou > tau` test. Frames whose ground truth is
//! invisible are excluded from short-term statistics.
//!
//! Long-term protocol: precision/recall over confidence thresholds and their
//! best harmonic mean (F-score). Invisible ground truth counts as IoU 0
//! against any confident prediction.
//!
//! All operations are pure; sequences can be evaluated concurrently.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Center-error threshold (pixels) read off the precision curve.
pub const PR_THRESHOLD_PX: f64 = 20.0;
/// Normalized center-error threshold read off the normalized curve.
pub const NPR_THRESHOLD: f64 = 0.20;

const PR_INDEX: usize = 20;
const NPR_INDEX: usize = 20;

/// Axis-aligned box: left, top, width, height. Width and height are
/// strictly positive and every field is finite.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BBox {
    x: f64,
    y: f64,
    w: f64,
    h: f64,
}

impl BBox {
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Result<Self> {
        if !(x.is_finite() && y.is_finite() && w.is_finite() && h.is_finite()) {
            return Err(Error::Invalid(format!(
                "box has non-finite coordinates: ({x},{y},{w},{h})"
            )));
        }
        if w <= 0.0 || h <= 0.0 {
            return Err(Error::Invalid(format!(
                "box needs positive extent, got w={w} h={h}"
            )));
        }
        Ok(BBox { x, y, w, h })
    }

    pub fn x(&self) -> f64 {
        self.x
    }

    pub fn y(&self) -> f64 {
        self.y
    }

    pub fn w(&self) -> f64 {
        self.w
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    pub fn center(&self) -> (f64, f64) {
        (self.x + self.w / 2.0, self.y + self.h / 2.0)
    }
}

/// Ground truth for one frame. Visibility and box presence are locked
/// together: a frame is visible exactly when it has a box.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FrameAnnotation {
    bbox: Option<BBox>,
}

impl FrameAnnotation {
    pub fn visible(bbox: BBox) -> Self {
        FrameAnnotation { bbox: Some(bbox) }
    }

    pub fn invisible() -> Self {
        FrameAnnotation { bbox: None }
    }

    pub fn is_visible(&self) -> bool {
        self.bbox.is_some()
    }

    pub fn bbox(&self) -> Option<&BBox> {
        self.bbox.as_ref()
    }
}

/// Tracker output for one frame. An absent box must carry confidence 0.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FramePrediction {
    bbox: Option<BBox>,
    confidence: f64,
}

impl FramePrediction {
    pub fn new(bbox: Option<BBox>, confidence: f64) -> Result<Self> {
        if !confidence.is_finite() || !(0.0..=1.0).contains(&confidence) {
            return Err(Error::Invalid(format!(
                "confidence must lie in [0,1], got {confidence}"
            )));
        }
        if bbox.is_none() && confidence != 0.0 {
            return Err(Error::Invalid(format!(
                "absent box requires confidence 0, got {confidence}"
            )));
        }
        Ok(FramePrediction { bbox, confidence })
    }

    pub fn bbox(&self) -> Option<&BBox> {
        self.bbox.as_ref()
    }

    pub fn confidence(&self) -> f64 {
        self.confidence
    }
}

/// A metric curve: strictly ascending thresholds with one value in [0,1]
/// per threshold.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Curve {
    thresholds: Vec<f64>,
    values: Vec<f64>,
}

impl Curve {
    pub fn new(thresholds: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if thresholds.is_empty() {
            return Err(Error::Invalid("curve needs at least one threshold".into()));
        }
        if thresholds.len() != values.len() {
            return Err(Error::Invalid(format!(
                "curve with {} thresholds but {} values",
                thresholds.len(),
                values.len()
            )));
        }
        if thresholds.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::Invalid(
                "curve thresholds must be strictly ascending".into(),
            ));
        }
        if thresholds.iter().any(|t| !t.is_finite()) {
            return Err(Error::Invalid("curve thresholds must be finite".into()));
        }
        if values.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::Invalid("curve values must lie in [0,1]".into()));
        }
        Ok(Curve { thresholds, values })
    }

    pub fn thresholds(&self) -> &[f64] {
        &self.thresholds
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.thresholds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.thresholds.is_empty()
    }
}

/// Evaluation protocol selector.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Protocol {
    ShortTerm,
    LongTerm,
}

impl std::str::FromStr for Protocol {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "shortterm" => Ok(Protocol::ShortTerm),
            "longterm" => Ok(Protocol::LongTerm),
            other => Err(Error::Invalid(format!(
                "unknown protocol {other:?}, expected shortterm or longterm"
            ))),
        }
    }
}

/// Scalar metrics plus the curves they were read from.
///
/// Short-term fills `pr`/`npr`/`sr` from the curves and leaves `re` and
/// `f_score` unset. Long-term additionally runs the confidence sweep and
/// stores the best-F operating point in `pr`/`re`/`f_score`; `npr`, `sr`,
/// and the curves remain the geometric statistics over visible frames.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricSet {
    pub pr: f64,
    pub npr: f64,
    pub sr: f64,
    pub re: Option<f64>,
    pub f_score: Option<f64>,
    pub pr_curve: Curve,
    pub npr_curve: Curve,
    pub sr_curve: Curve,
    /// Frames that contributed to the curves (visible ground truth).
    pub n_frames: usize,
}

impl MetricSet {
    /// Wrap externally reported scalars (e.g. published benchmark tables)
    /// so they can flow through degradation reports. Curves degenerate to a
    /// single point.
    pub fn from_reported(pr: f64, npr: f64, sr: f64) -> Result<Self> {
        for (name, v) in [("pr", pr), ("npr", npr), ("sr", sr)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Invalid(format!("{name} must lie in [0,1], got {v}")));
            }
        }
        Ok(MetricSet {
            pr,
            npr,
            sr,
            re: None,
            f_score: None,
            pr_curve: Curve::new(vec![PR_THRESHOLD_PX], vec![pr])?,
            npr_curve: Curve::new(vec![NPR_THRESHOLD], vec![npr])?,
            sr_curve: Curve::new(vec![0.5], vec![sr])?,
            n_frames: 0,
        })
    }
}

/// Standard precision-curve sweep: 0..=50 px in 1 px steps.
pub fn pr_thresholds() -> Vec<f64> {
    (0..=50).map(|i| i as f64).collect()
}

/// Standard normalized-precision sweep: 0.00..=0.50 in 0.01 steps.
pub fn npr_thresholds() -> Vec<f64> {
    (0..=50).map(|i| i as f64 / 100.0).collect()
}

/// Standard success sweep: 101 IoU thresholds 0.00..=1.00.
pub fn sr_thresholds() -> Vec<f64> {
    (0..=100).map(|i| i as f64 / 100.0).collect()
}

/// Intersection over union of two boxes. Symmetric, in [0,1].
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    if a == b {
        return 1.0;
    }
    let ix = (a.x + a.w).min(b.x + b.w) - a.x.max(b.x);
    let iy = (a.y + a.h).min(b.y + b.h) - a.y.max(b.y);
    if ix <= 0.0 || iy <= 0.0 {
        return 0.0;
    }
    let inter = ix * iy;
    // the clamp absorbs round-off on near-total overlaps
    (inter / (a.area() + b.area() - inter)).clamp(0.0, 1.0)
}

/// Euclidean distance between box centers, in pixels.
pub fn center_error(p: &BBox, g: &BBox) -> f64 {
    let (pcx, pcy) = p.center();
    let (gcx, gcy) = g.center();
    ((pcx - gcx).powi(2) + (pcy - gcy).powi(2)).sqrt()
}

/// Center error normalized by the ground-truth box extent.
pub fn norm_center_error(p: &BBox, g: &BBox) -> f64 {
    let (pcx, pcy) = p.center();
    let (gcx, gcy) = g.center();
    (((pcx - gcx) / g.w).powi(2) + ((pcy - gcy) / g.h).powi(2)).sqrt()
}

/// Fraction of frames with error <= tau, per threshold. Nondecreasing in tau.
///
/// Errors may be +inf (sentinel for a missing prediction: never within any
/// threshold) but not NaN.
pub fn precision_curve(errors: &[f64], thresholds: &[f64]) -> Result<Curve> {
    if errors.is_empty() {
        return Err(Error::NoEvaluableFrames);
    }
    if errors.iter().any(|e| e.is_nan() || *e < 0.0) {
        return Err(Error::Invalid("errors must be nonnegative and not NaN".into()));
    }
    let mut sorted = errors.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("no NaN after validation"));
    let n = sorted.len() as f64;
    let values = thresholds
        .iter()
        .map(|&tau| sorted.partition_point(|&e| e <= tau) as f64 / n)
        .collect();
    Curve::new(thresholds.to_vec(), values)
}

/// Fraction of frames with IoU strictly above tau over the 101-point sweep.
/// Nonincreasing in tau.
pub fn success_curve(ious: &[f64]) -> Result<Curve> {
    if ious.is_empty() {
        return Err(Error::NoEvaluableFrames);
    }
    if ious.iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(Error::Invalid("IoU values must lie in [0,1]".into()));
    }
    let mut sorted = ious.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("no NaN after validation"));
    let n = sorted.len() as f64;
    let thresholds = sr_thresholds();
    let values = thresholds
        .iter()
        .map(|&tau| (sorted.len() - sorted.partition_point(|&v| v <= tau)) as f64 / n)
        .collect();
    Curve::new(thresholds, values)
}

/// Scalar reduction of a curve: the arithmetic mean of its values.
pub fn auc(curve: &Curve) -> f64 {
    curve.values.iter().sum::<f64>() / curve.values.len() as f64
}

/// Best long-term operating point.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LongTermScore {
    pub pr: f64,
    pub re: f64,
    pub f_score: f64,
    /// Lowest confidence threshold attaining the best F-score.
    pub tau: f64,
}

/// Long-term precision/recall/F sweep over confidence thresholds.
///
/// At threshold tau: Pr = sum of IoU over frames with confidence >= tau
/// divided by their count (IoU counts as 0 when the ground truth is
/// invisible or the box is absent); Re = sum of IoU over visible frames
/// with confidence >= tau divided by the number of visible frames. The
/// sweep covers every observed confidence plus {0, 1}; between observed
/// confidences the scores are constant.
pub fn longterm_pr_re_f(
    preds: &[FramePrediction],
    gts: &[FrameAnnotation],
) -> Result<LongTermScore> {
    if preds.len() != gts.len() {
        return Err(Error::Invalid(format!(
            "prediction/annotation length mismatch: {} vs {}",
            preds.len(),
            gts.len()
        )));
    }
    if preds.is_empty() {
        return Err(Error::NoEvaluableFrames);
    }
    let n_visible = gts.iter().filter(|g| g.is_visible()).count();
    if n_visible == 0 {
        return Err(Error::RecallUndefined);
    }

    let frame_iou: Vec<f64> = preds
        .iter()
        .zip(gts)
        .map(|(p, g)| match (p.bbox(), g.bbox()) {
            (Some(pb), Some(gb)) => iou(pb, gb),
            _ => 0.0,
        })
        .collect();

    let mut taus: Vec<f64> = preds.iter().map(|p| p.confidence).collect();
    taus.push(0.0);
    taus.push(1.0);
    taus.sort_by(|a, b| a.partial_cmp(b).expect("confidences are finite"));
    taus.dedup();

    let mut best: Option<LongTermScore> = None;
    for &tau in &taus {
        let mut kept = 0usize;
        let mut iou_sum = 0.0;
        let mut recall_sum = 0.0;
        for ((p, g), &v) in preds.iter().zip(gts).zip(&frame_iou) {
            if p.confidence >= tau {
                kept += 1;
                iou_sum += v;
                if g.is_visible() {
                    recall_sum += v;
                }
            }
        }
        let pr = if kept == 0 { 0.0 } else { iou_sum / kept as f64 };
        let re = recall_sum / n_visible as f64;
        let f = if pr + re == 0.0 {
            0.0
        } else {
            2.0 * pr * re / (pr + re)
        };
        // strict > keeps the lowest tau on ties
        if best.map_or(true, |b| f > b.f_score) {
            best = Some(LongTermScore {
                pr,
                re,
                f_score: f,
                tau,
            });
        }
    }
    Ok(best.expect("tau sweep is nonempty"))
}

/// Evaluate one sequence under the chosen protocol.
pub fn evaluate_sequence(
    preds: &[FramePrediction],
    gts: &[FrameAnnotation],
    protocol: Protocol,
) -> Result<MetricSet> {
    if preds.len() != gts.len() {
        return Err(Error::Invalid(format!(
            "prediction/annotation length mismatch: {} vs {}",
            preds.len(),
            gts.len()
        )));
    }

    // geometric statistics over frames with visible ground truth; a missing
    // prediction counts as an unbounded error and IoU 0
    let mut errors = Vec::new();
    let mut norm_errors = Vec::new();
    let mut ious = Vec::new();
    for (p, g) in preds.iter().zip(gts) {
        let Some(gb) = g.bbox() else { continue };
        match p.bbox() {
            Some(pb) => {
                errors.push(center_error(pb, gb));
                norm_errors.push(norm_center_error(pb, gb));
                ious.push(iou(pb, gb));
            }
            None => {
                errors.push(f64::INFINITY);
                norm_errors.push(f64::INFINITY);
                ious.push(0.0);
            }
        }
    }

    if ious.is_empty() {
        return Err(match protocol {
            Protocol::ShortTerm => Error::NoEvaluableFrames,
            Protocol::LongTerm => Error::RecallUndefined,
        });
    }

    let pr_curve = precision_curve(&errors, &pr_thresholds())?;
    let npr_curve = precision_curve(&norm_errors, &npr_thresholds())?;
    let sr_curve = success_curve(&ious)?;
    let npr = npr_curve.values[NPR_INDEX];
    let sr = auc(&sr_curve);
    let n_frames = ious.len();

    match protocol {
        Protocol::ShortTerm => Ok(MetricSet {
            pr: pr_curve.values[PR_INDEX],
            npr,
            sr,
            re: None,
            f_score: None,
            pr_curve,
            npr_curve,
            sr_curve,
            n_frames,
        }),
        Protocol::LongTerm => {
            let lt = longterm_pr_re_f(preds, gts)?;
            Ok(MetricSet {
                pr: lt.pr,
                npr,
                sr,
                re: Some(lt.re),
                f_score: Some(lt.f_score),
                pr_curve,
                npr_curve,
                sr_curve,
                n_frames,
            })
        }
    }
}

/// Aggregation weighting.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WeightMode {
    /// Pool per frame: each sequence weighted by its evaluable frame count.
    /// Equivalent to evaluating the concatenation of all frames.
    FrameCounts,
    /// Plain mean of per-sequence values.
    Uniform,
}

/// Aggregate per-sequence metric sets into a benchmark-level set.
pub fn aggregate(reports: &[MetricSet], mode: WeightMode) -> Result<MetricSet> {
    if reports.is_empty() {
        return Err(Error::EmptyInput("aggregate needs at least one report".into()));
    }
    let first = &reports[0];
    for r in reports {
        if r.pr_curve.thresholds != first.pr_curve.thresholds
            || r.npr_curve.thresholds != first.npr_curve.thresholds
            || r.sr_curve.thresholds != first.sr_curve.thresholds
        {
            return Err(Error::Invalid(
                "aggregate requires identical curve thresholds".into(),
            ));
        }
    }

    let weight = |r: &MetricSet| -> f64 {
        match mode {
            WeightMode::FrameCounts => r.n_frames as f64,
            WeightMode::Uniform => 1.0,
        }
    };
    let total: f64 = reports.iter().map(weight).sum();
    if total <= 0.0 {
        return Err(Error::EmptyInput("aggregate weights sum to zero".into()));
    }

    let pool_curve = |get: &dyn Fn(&MetricSet) -> &Curve| -> Result<Curve> {
        let thresholds = get(first).thresholds.clone();
        let mut values = vec![0.0; thresholds.len()];
        for r in reports {
            let w = weight(r);
            for (acc, v) in values.iter_mut().zip(&get(r).values) {
                *acc += w * v;
            }
        }
        for v in &mut values {
            *v /= total;
            // guard rounding drift out of [0,1]
            *v = v.clamp(0.0, 1.0);
        }
        Curve::new(thresholds, values)
    };

    let wmean = |get: &dyn Fn(&MetricSet) -> f64| -> f64 {
        reports.iter().map(|r| weight(r) * get(r)).sum::<f64>() / total
    };
    let wmean_opt = |get: &dyn Fn(&MetricSet) -> Option<f64>| -> Option<f64> {
        let picked: Vec<(f64, f64)> = reports
            .iter()
            .filter_map(|r| get(r).map(|v| (weight(r), v)))
            .collect();
        if picked.is_empty() {
            return None;
        }
        let wsum: f64 = picked.iter().map(|(w, _)| w).sum();
        if wsum <= 0.0 {
            return None;
        }
        Some(picked.iter().map(|(w, v)| w * v).sum::<f64>() / wsum)
    };

    Ok(MetricSet {
        pr: wmean(&|r| r.pr),
        npr: wmean(&|r| r.npr),
        sr: wmean(&|r| r.sr),
        re: wmean_opt(&|r| r.re),
        f_score: wmean_opt(&|r| r.f_score),
        pr_curve: pool_curve(&|r| &r.pr_curve)?,
        npr_curve: pool_curve(&|r| &r.npr_curve)?,
        sr_curve: pool_curve(&|r| &r.sr_curve)?,
        n_frames: reports.iter().map(|r| r.n_frames).sum(),
    })
}

/// Signed time delta of one unified pass against the summed separate passes,
/// in percent. Negative means the unified pass is faster.
pub fn time_savings(separate_minutes: &[f64], unified_minutes: f64) -> Result<f64> {
    if separate_minutes.is_empty() {
        return Err(Error::EmptyInput("no separate timings".into()));
    }
    if separate_minutes.iter().any(|&t| !t.is_finite() || t <= 0.0)
        || !unified_minutes.is_finite()
        || unified_minutes <= 0.0
    {
        return Err(Error::Invalid("timings must be positive and finite".into()));
    }
    let total: f64 = separate_minutes.iter().sum();
    Ok((unified_minutes - total) / total * 100.0)
}
