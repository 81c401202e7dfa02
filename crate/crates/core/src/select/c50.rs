//! Clarity index C50 from a room impulse response.

use crate::audio::Waveform;

use super::SelectError;

/// Early/late boundary after the direct-path onset.
pub const EARLY_WINDOW_S: f64 = 0.050;

/// Onset threshold relative to the peak magnitude.
pub const ONSET_FRACTION: f64 = 0.01;

/// First sample whose magnitude reaches 1 % of the peak.
pub fn onset_index(h: &[f64]) -> Option<usize> {
    let peak = h.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak <= 0.0 {
        return None;
    }
    h.iter().position(|v| v.abs() >= ONSET_FRACTION * peak)
}

/// C50 in dB: energy up to 50 ms after the onset over the energy after it.
///
/// Returns `f64::INFINITY` when the late part carries no energy.
pub fn c50_from_samples(h: &[f64], sample_rate: u32) -> Result<f64, SelectError> {
    let onset = onset_index(h).ok_or(SelectError::SilentRir)?;
    let split = onset + (EARLY_WINDOW_S * f64::from(sample_rate)).round() as usize;
    let split = split.min(h.len());
    let early: f64 = h[..split].iter().map(|v| v * v).sum();
    let late: f64 = h[split..].iter().map(|v| v * v).sum();
    if late <= 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (early / late).log10())
}

pub fn c50_from_rir(rir: &Waveform) -> Result<f64, SelectError> {
    c50_from_samples(&rir.to_f64(), rir.sample_rate)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn impulse_is_infinite() {
        let mut h = vec![0.0; 4000];
        h[10] = 1.0;
        assert_eq!(c50_from_samples(&h, 16000).unwrap(), f64::INFINITY);
    }

    #[test]
    fn all_zero_errors() {
        assert!(matches!(
            c50_from_samples(&[0.0; 100], 16000),
            Err(SelectError::SilentRir)
        ));
    }

    #[test]
    fn deterministic_exponential_envelope_matches_integral() {
        // h^2(t) = exp(-2 delta t): early/late = exp(2 delta 0.05) - 1
        let sr = 16000u32;
        let t60 = 0.5;
        let delta = 3.0 * 10f64.ln() / t60;
        let h: Vec<f64> = (0..sr as usize * 2)
            .map(|i| (-delta * i as f64 / f64::from(sr)).exp())
            .collect();
        let analytic = 10.0 * ((2.0 * delta * 0.05).exp() - 1.0).log10();
        assert!((analytic - 4.74).abs() < 0.01);
        let c50 = c50_from_samples(&h, sr).unwrap();
        assert!((c50 - analytic).abs() < 0.1, "{c50} vs {analytic}");
    }

    #[test]
    fn leading_zeros_do_not_matter() {
        let h: Vec<f64> = (0..8000).map(|i| (-(i as f64) / 900.0).exp()).collect();
        let mut shifted = vec![0.0; 100];
        shifted.extend_from_slice(&h);
        let a = c50_from_samples(&h, 16000).unwrap();
        let b = c50_from_samples(&shifted, 16000).unwrap();
        assert_eq!(a, b);
    }
}
