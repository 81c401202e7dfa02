//! Envelope variance (EV) of mel sub-band envelopes.
//!
//! Each band envelope is cube-root compressed and divided by its temporal
//! mean before the variance is taken, so the score does not depend on the
//! overall gain of the channel. Reverberation smears the envelope and lowers
//! its variance; a higher EV indicates a cleaner channel.

use serde::{Deserialize, Serialize};

use crate::audio::Waveform;
use crate::fft::RealFft;

use super::SelectError;

/// Analysis parameters for [`envelope_variance`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvConfig {
    pub bands: usize,
    pub window_s: f64,
    pub hop_s: f64,
    pub min_duration_s: f64,
    /// Bands whose mean compressed envelope falls below this fraction of the
    /// strongest band are skipped; they carry only leakage.
    pub band_floor: f64,
}

impl Default for EvConfig {
    fn default() -> Self {
        Self {
            bands: 20,
            window_s: 0.040,
            hop_s: 0.010,
            min_duration_s: 2.0,
            band_floor: 1e-2,
        }
    }
}

fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Triangular mel filters as `(first_bin, weights)` pairs.
fn mel_filters(bands: usize, fft_len: usize, sample_rate: f64) -> Vec<(usize, Vec<f64>)> {
    let n_bins = fft_len / 2 + 1;
    let top = hz_to_mel(sample_rate / 2.0);
    let edges: Vec<f64> = (0..bands + 2)
        .map(|i| mel_to_hz(top * i as f64 / (bands + 1) as f64))
        .collect();
    let bin_hz = sample_rate / fft_len as f64;
    (0..bands)
        .map(|b| {
            let (lo, mid, hi) = (edges[b], edges[b + 1], edges[b + 2]);
            let first = (lo / bin_hz).ceil() as usize;
            let last = ((hi / bin_hz).floor() as usize).min(n_bins - 1);
            let weights: Vec<f64> = (first..=last.max(first))
                .map(|k| {
                    let f = k as f64 * bin_hz;
                    if f <= mid {
                        ((f - lo) / (mid - lo)).max(0.0)
                    } else {
                        ((hi - f) / (hi - mid)).max(0.0)
                    }
                })
                .collect();
            (first, weights)
        })
        .collect()
}

/// Envelope variance of one channel. See [`EvConfig`] for the analysis.
pub fn envelope_variance_samples(
    samples: &[f64],
    sample_rate: u32,
    cfg: &EvConfig,
) -> Result<f64, SelectError> {
    let sr = f64::from(sample_rate);
    let duration = samples.len() as f64 / sr;
    if duration < cfg.min_duration_s {
        return Err(SelectError::TooShort {
            duration_s: duration,
            min_s: cfg.min_duration_s,
        });
    }
    let rms = (samples.iter().map(|x| x * x).sum::<f64>() / samples.len() as f64).sqrt();
    if rms <= 1e-6 {
        return Err(SelectError::DegenerateSignal { rms });
    }

    let win_len = (cfg.window_s * sr).round() as usize;
    let hop = ((cfg.hop_s * sr).round() as usize).max(1);
    let fft = RealFft::new(win_len.next_power_of_two());
    let window: Vec<f64> = (0..win_len)
        .map(|n| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * n as f64 / win_len as f64).cos())
        .collect();
    let filters = mel_filters(cfg.bands, fft.len(), sr);

    let frames = (samples.len() - win_len) / hop + 1;
    // envelopes[band][frame]
    let mut envelopes = vec![Vec::with_capacity(frames); cfg.bands];
    let mut buf = vec![0.0; win_len];
    for t in 0..frames {
        let seg = &samples[t * hop..t * hop + win_len];
        for ((b, x), w) in buf.iter_mut().zip(seg).zip(&window) {
            *b = x * w;
        }
        let spec = fft.forward(&buf);
        for (band, (first, weights)) in filters.iter().enumerate() {
            let energy: f64 = weights
                .iter()
                .enumerate()
                .map(|(i, w)| w * spec[first + i].norm_sqr())
                .sum();
            envelopes[band].push(energy.sqrt().cbrt());
        }
    }

    let means: Vec<f64> = envelopes
        .iter()
        .map(|e| e.iter().sum::<f64>() / e.len() as f64)
        .collect();
    let strongest = means.iter().copied().fold(0.0, f64::max);
    let mut total = 0.0;
    let mut used = 0usize;
    for (env, &mean) in envelopes.iter().zip(&means) {
        if mean <= cfg.band_floor * strongest || mean <= 0.0 {
            continue;
        }
        let var = env
            .iter()
            .map(|v| {
                let d = v / mean - 1.0;
                d * d
            })
            .sum::<f64>()
            / env.len() as f64;
        total += var;
        used += 1;
    }
    if used == 0 {
        return Err(SelectError::DegenerateSignal { rms });
    }
    Ok(total / used as f64)
}

pub fn envelope_variance(wave: &Waveform, bands: usize) -> Result<f64, SelectError> {
    let cfg = EvConfig {
        bands,
        ..EvConfig::default()
    };
    envelope_variance_samples(&wave.to_f64(), wave.sample_rate, &cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    const SR: u32 = 16000;

    fn am_noise(seconds: f64, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = (seconds * f64::from(SR)) as usize;
        (0..n)
            .map(|i| {
                let t = i as f64 / f64::from(SR);
                let env = 0.5 * (1.0 + (2.0 * std::f64::consts::PI * 4.0 * t).sin());
                let z: f64 = StandardNormal.sample(&mut rng);
                0.1 * env * z
            })
            .collect()
    }

    #[test]
    fn constant_tone_has_no_envelope_variance() {
        let x: Vec<f64> = (0..3 * SR)
            .map(|i| 0.3 * (2.0 * std::f64::consts::PI * 440.0 * f64::from(i) / f64::from(SR)).sin())
            .collect();
        let ev = envelope_variance_samples(&x, SR, &EvConfig::default()).unwrap();
        assert!(ev <= 1e-3, "ev = {ev}");
    }

    #[test]
    fn gain_invariant() {
        let x = am_noise(3.0, 1);
        let base = envelope_variance_samples(&x, SR, &EvConfig::default()).unwrap();
        for gain in [0.1, 2.0, 10.0] {
            let y: Vec<f64> = x.iter().map(|v| v * gain).collect();
            let ev = envelope_variance_samples(&y, SR, &EvConfig::default()).unwrap();
            assert!((ev - base).abs() <= 1e-9 * base, "gain {gain}: {ev} vs {base}");
        }
    }

    #[test]
    fn reverberation_lowers_ev() {
        let dry = am_noise(4.0, 2);
        // 0.5 s exponential-decay tail (T60 = 0.5 s)
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let delta = 3.0 * 10f64.ln() / 0.5;
        let tail: Vec<f64> = (0..SR / 2)
            .map(|i| {
                let z: f64 = StandardNormal.sample(&mut rng);
                if i == 0 {
                    1.0
                } else {
                    z * (-delta * f64::from(i) / f64::from(SR)).exp()
                }
            })
            .collect();
        let mut wet = crate::fft::convolve(&dry, &tail);
        wet.truncate(dry.len());
        let cfg = EvConfig::default();
        let ev_dry = envelope_variance_samples(&dry, SR, &cfg).unwrap();
        let ev_wet = envelope_variance_samples(&wet, SR, &cfg).unwrap();
        assert!(ev_dry > ev_wet, "dry {ev_dry} wet {ev_wet}");
    }

    #[test]
    fn silent_and_short_inputs_error() {
        let cfg = EvConfig::default();
        assert!(matches!(
            envelope_variance_samples(&vec![0.0; 3 * SR as usize], SR, &cfg),
            Err(SelectError::DegenerateSignal { .. })
        ));
        assert!(matches!(
            envelope_variance_samples(&am_noise(1.0, 4), SR, &cfg),
            Err(SelectError::TooShort { .. })
        ));
    }
}
