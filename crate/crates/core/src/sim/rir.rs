use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::audio::Waveform;

use super::{stream_rng, SceneError};

/// Decay rate `delta = 3 ln 10 / t60` of the energy envelope `e^{-2 delta t}`.
pub fn decay_rate(t60_s: f64) -> f64 {
    3.0 * std::f64::consts::LN_10 / t60_s
}

/// Analytic C50 of a purely exponential energy decay: `10 log10(e^{0.1 delta} - 1)`.
pub fn analytic_c50(t60_s: f64) -> f64 {
    10.0 * ((2.0 * decay_rate(t60_s) * 0.05).exp() - 1.0).log10()
}

/// Builds `delay + tail` into `out`: a unit impulse at `delay` followed by
/// `env(t) * noise(t)` with a unit-variance start, where `noise` is supplied.
pub(crate) fn shape_rir(delay: usize, t60_s: f64, sample_rate: u32, noise: &[f64], out: &mut [f64]) {
    out.iter_mut().for_each(|v| *v = 0.0);
    if delay >= out.len() {
        return;
    }
    out[delay] = 1.0;
    if t60_s <= 0.0 {
        return;
    }
    let a = (-decay_rate(t60_s) / f64::from(sample_rate)).exp();
    let mut env = a;
    for (o, z) in out[delay + 1..].iter_mut().zip(noise) {
        *o = env * z;
        env *= a;
    }
}

/// Rescales to unit energy.
pub(crate) fn normalize(h: &mut [f64]) {
    let e: f64 = h.iter().map(|v| v * v).sum();
    if e > 0.0 {
        let g = 1.0 / e.sqrt();
        h.iter_mut().for_each(|v| *v *= g);
    }
}

pub(crate) fn rir_len(delay_ms: f64, t60_s: f64, sample_rate: u32, length_s: Option<f64>) -> usize {
    let sr = f64::from(sample_rate);
    let len_s = length_s.unwrap_or(delay_ms * 1e-3 + t60_s);
    ((len_s * sr).ceil() as usize).max((delay_ms * 1e-3 * sr).round() as usize + 1)
}

/// Synthetic room impulse response with unit energy.
///
/// A direct-path impulse at `delay_ms` is followed by Gaussian noise whose
/// energy decays as `e^{-2 delta t}`, `delta = 3 ln 10 / t60`. The default
/// length covers the delay plus one T60. `t60 = 0` gives a pure impulse.
pub fn make_rir(
    delay_ms: f64,
    t60_s: f64,
    sample_rate: u32,
    length_s: Option<f64>,
    seed: u64,
) -> Result<Waveform, SceneError> {
    if !(t60_s >= 0.0 && delay_ms >= 0.0) || sample_rate == 0 {
        return Err(SceneError::Invalid(format!(
            "rir needs t60 >= 0, delay >= 0 and a sample rate (t60 = {t60_s}, delay = {delay_ms} ms)"
        )));
    }
    let len = rir_len(delay_ms, t60_s, sample_rate, length_s);
    let delay = (delay_ms * 1e-3 * f64::from(sample_rate)).round() as usize;
    let mut rng = stream_rng(seed, 0, 0, 0);
    let noise: Vec<f64> = (0..len).map(|_| StandardNormal.sample(&mut rng)).collect();
    let mut h = vec![0.0; len];
    shape_rir(delay, t60_s, sample_rate, &noise, &mut h);
    normalize(&mut h);
    Ok(Waveform::from_f64(&h, sample_rate, "rir")?)
}

pub(crate) fn gaussian(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(&mut *rng)).collect()
}
