//! Diarization error rate with a no-score collar around reference boundaries.
//!
//! Times are converted to integer microseconds, so every duration below is
//! exact; the only rounding is the seconds -> microseconds conversion.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::hungarian::max_weight_assignment;
use super::{ScoringError, SegmentationHypothesis};

const US: f64 = 1e6;

fn to_us(t: f64) -> i64 {
    (t * US).round() as i64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DerBreakdown {
    pub missed_s: f64,
    pub falarm_s: f64,
    pub confusion_s: f64,
    pub scored_speech_s: f64,
    pub der: f64,
    /// Reference speaker -> mapped hypothesis speaker.
    pub mapping: BTreeMap<String, String>,
}

/// Per-label sorted, merged activity intervals.
fn activity(h: &SegmentationHypothesis) -> (Vec<String>, Vec<Vec<(i64, i64)>>) {
    let mut by_label: BTreeMap<&str, Vec<(i64, i64)>> = BTreeMap::new();
    for s in &h.segments {
        by_label
            .entry(s.speaker.as_str())
            .or_default()
            .push((to_us(s.start), to_us(s.end)));
    }
    let labels = by_label.keys().map(|s| s.to_string()).collect();
    (labels, by_label.into_values().map(merge).collect())
}

fn merge(mut v: Vec<(i64, i64)>) -> Vec<(i64, i64)> {
    v.sort_unstable();
    let mut out: Vec<(i64, i64)> = Vec::with_capacity(v.len());
    for (a, b) in v {
        match out.last_mut() {
            Some(last) if a <= last.1 => last.1 = last.1.max(b),
            _ => out.push((a, b)),
        }
    }
    out
}

/// Which intervals of `spans` cover each elementary interval `[cuts[k], cuts[k+1])`.
fn coverage(spans: &[(i64, i64)], cuts: &[i64]) -> Vec<bool> {
    let mut out = vec![false; cuts.len().saturating_sub(1)];
    for &(a, b) in spans {
        let lo = cuts.partition_point(|&c| c < a);
        let hi = cuts.partition_point(|&c| c < b);
        for x in &mut out[lo..hi] {
            *x = true;
        }
    }
    out
}

pub fn der(
    reference: &SegmentationHypothesis,
    hypothesis: &SegmentationHypothesis,
    collar_s: f64,
) -> Result<DerBreakdown, ScoringError> {
    reference.validate()?;
    hypothesis.validate()?;
    if !(collar_s >= 0.0 && collar_s.is_finite()) {
        return Err(ScoringError::Invalid(format!("collar {collar_s} must be >= 0")));
    }
    let collar = to_us(collar_s);
    let (ref_labels, ref_spans) = activity(reference);
    let (hyp_labels, hyp_spans) = activity(hypothesis);

    let no_score = merge(
        reference
            .segments
            .iter()
            .flat_map(|s| [to_us(s.start), to_us(s.end)])
            .map(|b| (b - collar, b + collar))
            .filter(|(a, b)| b > a)
            .collect(),
    );

    let mut cuts: Vec<i64> = ref_spans
        .iter()
        .chain(&hyp_spans)
        .flatten()
        .chain(&no_score)
        .flat_map(|&(a, b)| [a, b])
        .collect();
    cuts.sort_unstable();
    cuts.dedup();
    let n_int = cuts.len().saturating_sub(1);
    let excluded = coverage(&no_score, &cuts);
    let ref_cov: Vec<Vec<bool>> = ref_spans.iter().map(|s| coverage(s, &cuts)).collect();
    let hyp_cov: Vec<Vec<bool>> = hyp_spans.iter().map(|s| coverage(s, &cuts)).collect();

    // scored overlap between every reference and hypothesis speaker
    let mut overlap = vec![vec![0i64; hyp_labels.len()]; ref_labels.len()];
    let mut scored = 0i64;
    let mut missed = 0i64;
    let mut falarm = 0i64;
    let mut matched_min = 0i64;
    for k in 0..n_int {
        if excluded[k] {
            continue;
        }
        let dur = cuts[k + 1] - cuts[k];
        let r: Vec<usize> = (0..ref_labels.len()).filter(|&i| ref_cov[i][k]).collect();
        let h: Vec<usize> = (0..hyp_labels.len()).filter(|&j| hyp_cov[j][k]).collect();
        let (nr, nh) = (r.len() as i64, h.len() as i64);
        scored += nr * dur;
        missed += (nr - nh).max(0) * dur;
        falarm += (nh - nr).max(0) * dur;
        matched_min += nr.min(nh) * dur;
        for &i in &r {
            for &j in &h {
                overlap[i][j] += dur;
            }
        }
    }
    if scored == 0 {
        return Err(ScoringError::NothingToScore);
    }

    let assign = max_weight_assignment(&overlap);
    let correct: i64 = assign
        .iter()
        .enumerate()
        .filter_map(|(i, j)| j.map(|j| overlap[i][j]))
        .sum();
    let mapping = assign
        .iter()
        .enumerate()
        .filter_map(|(i, j)| j.map(|j| (ref_labels[i].clone(), hyp_labels[j].clone())))
        .collect();
    let confusion = matched_min - correct;
    let secs = |us: i64| us as f64 / US;
    Ok(DerBreakdown {
        missed_s: secs(missed),
        falarm_s: secs(falarm),
        confusion_s: secs(confusion),
        scored_speech_s: secs(scored),
        der: (missed + falarm + confusion) as f64 / scored as f64,
        mapping,
    })
}
