//! Loss factors derived from quadratic loss curves.
//!
//! Linear factors are the secant through zero flow and the median of the
//! non-zero historical flows. Piecewise factors are per-segment continuous
//! least-squares lines on an equal-width grid over the rated capacity.

use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::market::{LinearFactors, LossModel, Segment};

#[derive(Debug, Error, PartialEq)]
pub enum CalibrationError {
    #[error("flow {flow} MW is outside the rated range +/-{rated} MW")]
    OutOfRange { flow: f64, rated: f64 },
    #[error("line {0} has no non-zero historical flow")]
    NoNonzeroFlows(String),
    #[error("segment length must be positive, got {0}")]
    InvalidSegmentLength(f64),
    #[error("csv output failed: {0}")]
    Csv(String),
}

/// Signed hourly flows observed on one line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowHistory {
    pub line: String,
    pub samples: Vec<f64>,
}

/// `a f^2 + b |f| + c`, without range checking.
pub fn loss_at(model: &LossModel, flow: f64) -> f64 {
    let f = flow.abs();
    model.quad_a * f * f + model.quad_b * f + model.quad_c
}

pub fn quadratic_loss(model: &LossModel, flow: f64, rated_capacity: f64) -> Result<f64, CalibrationError> {
    if !(flow.abs() <= rated_capacity * (1.0 + 1e-9) + 1e-9) {
        return Err(CalibrationError::OutOfRange { flow, rated: rated_capacity });
    }
    Ok(loss_at(model, flow))
}

/// Median of `|f|` over the non-zero samples (mean of the middle pair for
/// an even count).
pub fn median_abs_nonzero(samples: &[f64]) -> Option<f64> {
    let mut v: Vec<f64> = samples.iter().map(|f| f.abs()).filter(|&f| f > 0.0).collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) })
}

/// Secant through `(0, c)` and `(m, loss(m))` for a given median flow `m > 0`.
pub fn linear_factors_at_median(model: &LossModel, median: f64) -> LinearFactors {
    LinearFactors { alpha: model.quad_a * median + model.quad_b, beta: model.quad_c }
}

pub fn linear_factors(model: &LossModel, history: &FlowHistory) -> Result<LinearFactors, CalibrationError> {
    let m = median_abs_nonzero(&history.samples)
        .ok_or_else(|| CalibrationError::NoNonzeroFlows(history.line.clone()))?;
    Ok(linear_factors_at_median(model, m))
}

/// Least-squares line for `a f^2 + b f + c` over `[lo, hi]`.
fn fit_segment(model: &LossModel, lo: f64, hi: f64) -> Segment {
    let a = model.quad_a;
    let h = hi - lo;
    Segment {
        lo,
        hi,
        alpha: a * (lo + hi) + model.quad_b,
        beta: model.quad_c - a * (lo * hi + h * h / 6.0),
    }
}

/// Equal-width segments of `segment_len` starting at zero; the last one is
/// truncated at the rated capacity.
pub fn piecewise_factors(
    model: &LossModel,
    rated_capacity: f64,
    segment_len: f64,
) -> Result<Vec<Segment>, CalibrationError> {
    if !(segment_len > 0.0) || !segment_len.is_finite() {
        return Err(CalibrationError::InvalidSegmentLength(segment_len));
    }
    let mut segs = Vec::new();
    let mut k = 0usize;
    loop {
        let lo = k as f64 * segment_len;
        let mut hi = (k + 1) as f64 * segment_len;
        // Snap a sliver shorter than a micro-MW onto the previous segment's end.
        if hi >= rated_capacity - 1e-9 * rated_capacity.max(1.0) {
            hi = rated_capacity;
        }
        segs.push(fit_segment(model, lo, hi));
        if hi >= rated_capacity {
            return Ok(segs);
        }
        k += 1;
    }
}

/// Loss from a piecewise approximation at `|f|`, using the segment that
/// contains it (the lower one at a shared breakpoint, the first one at zero).
pub fn piecewise_loss(segments: &[Segment], flow: f64) -> f64 {
    let f = flow.abs();
    let seg = segments.iter().find(|s| f <= s.hi).unwrap_or(&segments[segments.len() - 1]);
    seg.loss(f)
}

pub fn linear_loss(factors: &LinearFactors, flow: f64) -> f64 {
    factors.alpha * flow.abs() + factors.beta
}

/// Largest jump of a piecewise approximation at an interior breakpoint.
pub fn max_discontinuity(segments: &[Segment]) -> f64 {
    segments
        .windows(2)
        .map(|w| (w[0].loss(w[0].hi) - w[1].loss(w[1].lo)).abs())
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy)]
pub enum Factors<'a> {
    Linear(&'a LinearFactors),
    Piecewise(&'a [Segment]),
}

impl Factors<'_> {
    pub fn loss(&self, flow: f64) -> f64 {
        match self {
            Factors::Linear(l) => linear_loss(l, flow),
            Factors::Piecewise(s) => piecewise_loss(s, flow),
        }
    }
}

/// Root-mean-square error of the approximation against the quadratic curve
/// on the grid `0, step, 2 step, ..` up to and including the rated capacity.
pub fn approximation_rmse(model: &LossModel, factors: Factors<'_>, rated_capacity: f64, step: f64) -> f64 {
    assert!(step > 0.0, "grid step must be positive");
    let mut sum = 0.0;
    let mut n = 0usize;
    let mut k = 0usize;
    loop {
        let f = (k as f64 * step).min(rated_capacity);
        let e = factors.loss(f) - loss_at(model, f);
        sum += e * e;
        n += 1;
        if f >= rated_capacity {
            break;
        }
        k += 1;
    }
    (sum / n as f64).sqrt()
}

/// A line of the reference HVDC fleet with its published linear factors.
#[derive(Debug, Clone, PartialEq)]
pub struct FleetLine {
    pub id: &'static str,
    pub model: LossModel,
    pub rated_capacity: f64,
    pub published: LinearFactors,
}

impl FleetLine {
    /// Median flow implied by the published slope.
    pub fn implied_median(&self) -> f64 {
        (self.published.alpha - self.model.quad_b) / self.model.quad_a
    }
}

/// Loss coefficients of the Nordic HVDC interconnectors with their published
/// linear factors. Ratings are nominal cable ratings; NorNed is listed at
/// 750 MW so that its implied median flow fits inside the rating.
pub fn nordic_hvdc_fleet() -> Vec<FleetLine> {
    let row = |id, a, b, c, rated, alpha| FleetLine {
        id,
        model: LossModel::quadratic(a, b, c),
        rated_capacity: rated,
        published: LinearFactors { alpha, beta: c },
    };
    vec![
        row("Storebaelt", 0.000025, 0.0, 1.7590, 600.0, 0.0142),
        row("Skagerrak", 0.000017, 0.0, 8.2405, 1700.0, 0.0159),
        row("Konti-Skan", 0.000035, 0.0, 2.1616, 740.0, 0.0156),
        row("Baltic Cable", 0.000041, 0.0, 1.6633, 600.0, 0.0184),
        row("SwePol", 0.000045, 0.0, 1.5907, 600.0, 0.0266),
        row("Kontek", 0.000031, 0.0, 1.9659, 600.0, 0.0184),
        row("Fenno-Skan", 0.000026, 0.0, 4.6490, 1200.0, 0.0124),
        row("Estlink", 0.000033, 0.0, 4.4000, 1000.0, 0.0090),
        row("NordBalt", 0.000022, 0.0, 2.6478, 700.0, 0.0132),
        row("NorNed", 0.000043, 0.0062, 1.4971, 750.0, 0.0373),
    ]
}

/// Calibrated factors of one line, as exported to CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineFactors {
    pub line: String,
    pub rated_capacity: f64,
    pub linear: Option<LinearFactors>,
    pub piecewise: Option<Vec<Segment>>,
}

/// Writes `line,k,lo,hi,alpha,beta` rows; the linear factor uses `k = 0`
/// spanning the whole rating, segments are numbered from 1.
pub fn write_factors_csv<W: Write>(out: W, lines: &[LineFactors]) -> Result<(), CalibrationError> {
    let mut w = csv::Writer::from_writer(out);
    let err = |e: csv::Error| CalibrationError::Csv(e.to_string());
    w.write_record(["line", "k", "lo", "hi", "alpha", "beta"]).map_err(err)?;
    for l in lines {
        if let Some(lin) = &l.linear {
            w.write_record([
                l.line.clone(),
                "0".into(),
                "0".into(),
                l.rated_capacity.to_string(),
                lin.alpha.to_string(),
                lin.beta.to_string(),
            ])
            .map_err(err)?;
        }
        for (k, s) in l.piecewise.iter().flatten().enumerate() {
            w.write_record([
                l.line.clone(),
                (k + 1).to_string(),
                s.lo.to_string(),
                s.hi.to_string(),
                s.alpha.to_string(),
                s.beta.to_string(),
            ])
            .map_err(err)?;
        }
    }
    w.flush().map_err(|e| CalibrationError::Csv(e.to_string()))
}
