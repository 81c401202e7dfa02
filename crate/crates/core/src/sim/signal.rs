use num_complex::Complex64;
use rand::Rng;

use crate::fft::RealFft;
use crate::scoring::Segment;

use super::rir::gaussian;
use super::SceneError;

/// Pink (1/f power) Gaussian noise with unit RMS; frequencies below 50 Hz are
/// held flat so the signal has no drift.
pub(crate) fn pink_noise(rng: &mut impl Rng, n: usize, sample_rate: u32) -> Vec<f64> {
    let fft = RealFft::new(n.next_power_of_two().max(2));
    let white = gaussian(rng, fft.len());
    let df = f64::from(sample_rate) / fft.len() as f64;
    let shaped: Vec<Complex64> = fft
        .forward(&white)
        .into_iter()
        .enumerate()
        .map(|(k, c)| if k == 0 { Complex64::new(0.0, 0.0) } else { c / (k as f64 * df).max(50.0).sqrt() })
        .collect();
    let mut x = fft.inverse(&shaped);
    x.truncate(n);
    let rms = (x.iter().map(|v| v * v).sum::<f64>() / n.max(1) as f64).sqrt();
    if rms > 0.0 {
        x.iter_mut().for_each(|v| *v /= rms);
    }
    x
}

/// Pink noise amplitude-modulated at 4 Hz with a random phase: a stand-in
/// for the syllabic envelope of speech.
pub(crate) fn speech_surrogate(rng: &mut impl Rng, n: usize, sample_rate: u32) -> Vec<f64> {
    let phase = rng.random_range(0.0..std::f64::consts::TAU);
    let w = std::f64::consts::TAU * 4.0 / f64::from(sample_rate);
    pink_noise(rng, n, sample_rate)
        .into_iter()
        .enumerate()
        .map(|(i, v)| v * 0.5 * (1.0 + 0.9 * (w * i as f64 + phase).sin()))
        .collect()
}

/// Round-robin conversation turns. Consecutive turns of different speakers
/// overlap by `overlap_s`; a speaker following itself pauses 0.5 s instead.
pub(crate) fn conversation(
    rng: &mut impl Rng,
    labels: &[String],
    duration_s: f64,
    turn_s: f64,
    overlap_s: f64,
) -> Result<Vec<Segment>, SceneError> {
    if !(turn_s > 0.0) || !(overlap_s >= 0.0) || overlap_s >= 0.75 * turn_s {
        return Err(SceneError::Infeasible(format!(
            "turns of {turn_s} s cannot overlap by {overlap_s} s (need 0 <= overlap < 0.75 * turn)"
        )));
    }
    if overlap_s > duration_s {
        return Err(SceneError::Infeasible(format!(
            "overlap {overlap_s} s exceeds the scene duration {duration_s} s"
        )));
    }
    let n = labels.len();
    let mut order: Vec<usize> = Vec::new();
    let mut segments: Vec<Segment> = Vec::new();
    let mut t = 0.25;
    let mut prev: Option<usize> = None;
    while t < duration_s - 0.5 {
        if order.is_empty() {
            order = (0..n).collect();
            for i in (1..n).rev() {
                order.swap(i, rng.random_range(0..=i));
            }
            // keep the same speaker from talking twice in a row across cycles
            if n > 1 && Some(order[n - 1]) == prev {
                order.swap(0, n - 1);
            }
        }
        let spk = order.pop().expect("non-empty order");
        let len = turn_s * rng.random_range(0.75..1.25);
        let start = match prev {
            Some(p) if p != spk => t - overlap_s,
            Some(_) => t + 0.5,
            None => t,
        }
        .max(0.0);
        let end = (start + len).min(duration_s);
        if end - start < 0.2 {
            break;
        }
        segments.push(Segment {
            speaker: labels[spk].clone(),
            start: (start * 1000.0).round() / 1000.0,
            end: (end * 1000.0).round() / 1000.0,
        });
        t = end;
        prev = Some(spk);
    }
    if let Some(missing) = labels.iter().find(|l| !segments.iter().any(|s| &s.speaker == *l)) {
        return Err(SceneError::Infeasible(format!(
            "speaker {missing} gets no turn in {duration_s} s with {turn_s} s turns"
        )));
    }
    Ok(segments)
}

/// Activity gate with 20 ms raised-cosine ramps at each turn edge.
pub(crate) fn activity_gate(segments: &[Segment], speaker: &str, n: usize, sample_rate: u32) -> Vec<f64> {
    let sr = f64::from(sample_rate);
    let ramp = (0.02 * sr) as usize;
    let mut g = vec![0.0; n];
    for s in segments.iter().filter(|s| s.speaker == speaker) {
        let a = ((s.start * sr).round() as usize).min(n);
        let b = ((s.end * sr).round() as usize).min(n);
        let len = b - a;
        let r = ramp.min(len / 2);
        for i in 0..len {
            let edge = i.min(len - 1 - i);
            let v = if edge < r {
                0.5 - 0.5 * (std::f64::consts::PI * (edge as f64 + 0.5) / r as f64).cos()
            } else {
                1.0
            };
            g[a + i] = f64::max(g[a + i], v);
        }
    }
    g
}
