//! Deterministic fixtures shared by the benchmarks.

use farmic::audio::{MultichannelRecording, Spectrogram, StftConfig, Waveform};
use farmic::beamform::{MaskRole, TfMask};
use farmic::scoring::{Segment, SegmentationHypothesis};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn recording(channels: usize, seconds: f64, seed: u64) -> MultichannelRecording {
    let mut rng = rng(seed);
    let n = (seconds * 16000.0) as usize;
    let waves = (0..channels)
        .map(|c| {
            let x: Vec<f32> = (0..n).map(|_| rng.random_range(-0.5..0.5)).collect();
            Waveform::new(x, 16000, format!("{c:02}")).unwrap()
        })
        .collect();
    MultichannelRecording::new(waves).unwrap()
}

pub fn spectrogram(frames: usize, channels: usize, seed: u64) -> Spectrogram {
    let mut rng = rng(seed);
    let cfg = StftConfig::default();
    let ids = (0..channels).map(|c| format!("{c:02}")).collect();
    let mut s = Spectrogram::zeros(frames, ids, cfg, 16000, frames * cfg.hop);
    for v in s.data_mut() {
        *v = Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
    }
    s
}

pub fn masks(frames: usize, bins: usize, seed: u64) -> (TfMask, TfMask) {
    let mut rng = rng(seed);
    let v: Vec<f32> = (0..frames * bins).map(|_| rng.random_range(0.05..0.95)).collect();
    let t = TfMask::new(v, frames, bins, MaskRole::Target).unwrap();
    let n = t.complement();
    (t, n)
}

/// `k` well separated clusters of `per` unit-ish vectors.
pub fn clusters(k: usize, per: usize, dim: usize, seed: u64) -> Vec<Vec<f32>> {
    let mut rng = rng(seed);
    let mut out = Vec::new();
    for c in 0..k {
        for _ in 0..per {
            out.push(
                (0..dim)
                    .map(|d| f32::from(u8::from(d % k == c)) + rng.random_range(-0.1..0.1))
                    .collect(),
            );
        }
    }
    out
}

/// Reference and a jittered, partly relabelled hypothesis over `seconds`.
pub fn sessions(speakers: usize, seconds: f64, seed: u64) -> (SegmentationHypothesis, SegmentationHypothesis) {
    let mut rng = rng(seed);
    let (mut r, mut h) = (Vec::new(), Vec::new());
    let mut t = 0.0;
    while t < seconds - 10.0 {
        let spk = rng.random_range(0..speakers);
        let len = rng.random_range(0.5..6.0);
        r.push(Segment { speaker: format!("spk{spk}"), start: t, end: t + len });
        let j = rng.random_range(-0.2..0.2);
        let other = if rng.random_bool(0.1) { (spk + 1) % speakers } else { spk };
        h.push(Segment { speaker: format!("h{other}"), start: (t + j).max(0.0), end: t + len + j });
        t += len - rng.random_range(0.0..0.4);
    }
    let wrap = |segments| SegmentationHypothesis { session_id: "bench".into(), segments };
    (wrap(r), wrap(h))
}
