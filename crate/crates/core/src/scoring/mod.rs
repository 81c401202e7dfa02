//! Diarization error rate, speaker-counting accuracy and SI-SNR.

mod der;
mod hungarian;
mod rttm;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audio::Waveform;

pub use der::{der, DerBreakdown};
pub use hungarian::max_weight_assignment;
pub use rttm::{format_rttm, parse_rttm, read_rttm, write_rttm};

#[derive(Debug, Error)]
pub enum ScoringError {
    #[error("nothing to score: the reference has no speech outside the collars")]
    NothingToScore,
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("reference signal is silent")]
    SilentReference,
    #[error("RTTM line {line}: {message}")]
    Rttm { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub speaker: String,
    pub start: f64,
    pub end: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentationHypothesis {
    pub session_id: String,
    pub segments: Vec<Segment>,
}

impl SegmentationHypothesis {
    pub fn validate(&self) -> Result<(), ScoringError> {
        for (i, s) in self.segments.iter().enumerate() {
            if s.speaker.is_empty() {
                return Err(ScoringError::Invalid(format!("segment {i} has an empty label")));
            }
            if !(s.start.is_finite() && s.end.is_finite() && s.end > s.start) {
                return Err(ScoringError::Invalid(format!(
                    "segment {i} ({}, {}) is empty or not finite",
                    s.start, s.end
                )));
            }
        }
        Ok(())
    }

    pub fn speakers(&self) -> std::collections::BTreeSet<&str> {
        self.segments.iter().map(|s| s.speaker.as_str()).collect()
    }
}

/// Percentage of sessions whose estimated count equals the truth.
pub fn counting_accuracy(truths: &[usize], estimates: &[usize]) -> Result<f64, ScoringError> {
    if truths.len() != estimates.len() {
        return Err(ScoringError::LengthMismatch(truths.len(), estimates.len()));
    }
    if truths.is_empty() {
        return Err(ScoringError::Invalid("no sessions".into()));
    }
    let hits = truths.iter().zip(estimates).filter(|(a, b)| a == b).count();
    Ok(100.0 * hits as f64 / truths.len() as f64)
}

/// Scale-invariant SNR in dB after removing the means; `+inf` when the
/// estimate is exactly a scaled copy of the reference.
pub fn si_snr_samples(reference: &[f64], estimate: &[f64]) -> Result<f64, ScoringError> {
    if reference.len() != estimate.len() {
        return Err(ScoringError::LengthMismatch(reference.len(), estimate.len()));
    }
    let n = reference.len().max(1) as f64;
    let mr = reference.iter().sum::<f64>() / n;
    let me = estimate.iter().sum::<f64>() / n;
    let r: Vec<f64> = reference.iter().map(|x| x - mr).collect();
    let e: Vec<f64> = estimate.iter().map(|x| x - me).collect();
    let rr: f64 = r.iter().map(|x| x * x).sum();
    if rr == 0.0 {
        return Err(ScoringError::SilentReference);
    }
    let alpha = e.iter().zip(&r).map(|(a, b)| a * b).sum::<f64>() / rr;
    let mut target = 0.0;
    let mut noise = 0.0;
    for (ei, ri) in e.iter().zip(&r) {
        let t = alpha * ri;
        target += t * t;
        noise += (ei - t) * (ei - t);
    }
    if noise == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (target / noise).log10())
}

pub fn si_snr(reference: &Waveform, estimate: &Waveform) -> Result<f64, ScoringError> {
    si_snr_samples(&reference.to_f64(), &estimate.to_f64())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counting_accuracy_examples() {
        assert_eq!(counting_accuracy(&[1, 2, 3], &[1, 2, 3]).unwrap(), 100.0);
        assert_eq!(counting_accuracy(&[1, 2], &[2, 1]).unwrap(), 0.0);
        assert_eq!(counting_accuracy(&[4, 4, 4, 4], &[4, 4, 3, 4]).unwrap(), 75.0);
        assert!(counting_accuracy(&[1], &[1, 2]).is_err());
        assert!(counting_accuracy(&[], &[]).is_err());
    }

    #[test]
    fn si_snr_examples() {
        let r: Vec<f64> = (0..1000).map(|i| (i as f64 * 0.1).sin() + 0.3).collect();
        assert_eq!(si_snr_samples(&r, &r).unwrap(), f64::INFINITY);
        let twice: Vec<f64> = r.iter().map(|x| 2.0 * x).collect();
        assert_eq!(si_snr_samples(&r, &twice).unwrap(), f64::INFINITY);
        assert!(matches!(si_snr_samples(&[0.5; 10], &[1.0; 10]), Err(ScoringError::SilentReference)));
        assert!(si_snr_samples(&r, &r[1..]).is_err());
    }
}
