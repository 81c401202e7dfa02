use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{AudioError, MultichannelRecording, Waveform};
use crate::fft::RealFft;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Window {
    /// Periodic Hann for both analysis and synthesis.
    Hann,
    /// Square-root periodic Hann for both analysis and synthesis.
    SqrtHann,
}

impl Window {
    pub fn coefficients(self, len: usize) -> Vec<f64> {
        (0..len)
            .map(|n| {
                let hann = 0.5 - 0.5 * (2.0 * PI * n as f64 / len as f64).cos();
                match self {
                    Window::Hann => hann,
                    Window::SqrtHann => hann.sqrt(),
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct StftConfig {
    pub frame_len: usize,
    pub hop: usize,
    pub window: Window,
}

impl Default for StftConfig {
    fn default() -> Self {
        Self {
            frame_len: 1024,
            hop: 256,
            window: Window::Hann,
        }
    }
}

impl StftConfig {
    pub fn bins(&self) -> usize {
        self.frame_len / 2 + 1
    }

    /// Leading zeros added before the first sample so that every input
    /// sample is covered by the full set of overlapping frames.
    pub fn front_pad(&self) -> usize {
        self.frame_len - self.hop
    }

    /// Number of frames produced for a signal of `len` samples.
    ///
    /// The signal is padded with `frame_len - hop` zeros at the front and
    /// zeros at the tail until the last frame starts at or after the final
    /// sample. With `padded_len = (frames - 1) * hop + frame_len`, this equals
    /// `floor((padded_len - frame_len) / hop) + 1`.
    pub fn num_frames(&self, len: usize) -> usize {
        (self.front_pad() + len - 1) / self.hop + 1
    }

    pub fn validate(&self) -> Result<(), AudioError> {
        if self.frame_len < 2 || !self.frame_len.is_power_of_two() {
            return Err(AudioError::InvalidConfig(format!(
                "frame_len {} is not a power of two >= 2",
                self.frame_len
            )));
        }
        if self.hop == 0 || self.hop > self.frame_len {
            return Err(AudioError::InvalidConfig(format!(
                "hop {} must satisfy 0 < hop <= frame_len ({})",
                self.hop, self.frame_len
            )));
        }
        let max_deviation = self.cola_deviation();
        if max_deviation > 1e-9 {
            return Err(AudioError::NotCola { max_deviation });
        }
        Ok(())
    }

    /// Relative deviation from constant of the overlap-added
    /// analysis x synthesis window product.
    fn cola_deviation(&self) -> f64 {
        let w = self.window.coefficients(self.frame_len);
        let mut env = vec![0.0; self.hop];
        for (n, &v) in w.iter().enumerate() {
            env[n % self.hop] += v * v;
        }
        let (lo, hi) = env
            .iter()
            .fold((f64::INFINITY, 0.0f64), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        if hi <= 0.0 {
            return f64::INFINITY;
        }
        (hi - lo) / hi
    }
}

/// Complex time-frequency data indexed `[frame][bin][channel]`.
///
/// The channel axis is innermost, so the observation vector `y(t, f)` of all
/// microphones is a contiguous slice (see [`Spectrogram::vector`]).
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    data: Vec<Complex64>,
    frames: usize,
    channels: usize,
    config: StftConfig,
    sample_rate: u32,
    signal_len: usize,
    channel_ids: Vec<String>,
}

impl Spectrogram {
    /// All-zero spectrogram with the given shape.
    pub fn zeros(
        frames: usize,
        channel_ids: Vec<String>,
        config: StftConfig,
        sample_rate: u32,
        signal_len: usize,
    ) -> Self {
        let channels = channel_ids.len();
        Self {
            data: vec![Complex64::new(0.0, 0.0); frames * config.bins() * channels],
            frames,
            channels,
            config,
            sample_rate,
            signal_len,
            channel_ids,
        }
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn bins(&self) -> usize {
        self.config.bins()
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn config(&self) -> &StftConfig {
        &self.config
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    /// Length in samples of the signal this spectrogram was computed from.
    pub fn signal_len(&self) -> usize {
        self.signal_len
    }

    pub fn channel_ids(&self) -> &[String] {
        &self.channel_ids
    }

    fn offset(&self, frame: usize, bin: usize) -> usize {
        (frame * self.bins() + bin) * self.channels
    }

    pub fn get(&self, frame: usize, bin: usize, channel: usize) -> Complex64 {
        self.data[self.offset(frame, bin) + channel]
    }

    pub fn set(&mut self, frame: usize, bin: usize, channel: usize, value: Complex64) {
        let i = self.offset(frame, bin) + channel;
        self.data[i] = value;
    }

    /// Observation vector across channels at one TF point.
    pub fn vector(&self, frame: usize, bin: usize) -> &[Complex64] {
        let i = self.offset(frame, bin);
        &self.data[i..i + self.channels]
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    /// Copies one channel out as a single-channel spectrogram.
    pub fn channel(&self, channel: usize) -> Spectrogram {
        let mut out = Spectrogram::zeros(
            self.frames,
            vec![self.channel_ids[channel].clone()],
            self.config,
            self.sample_rate,
            self.signal_len,
        );
        for (dst, src) in out
            .data
            .iter_mut()
            .zip(self.data.iter().skip(channel).step_by(self.channels))
        {
            *dst = *src;
        }
        out
    }

    /// Frames `start..end` with the same bins and channels.
    pub fn slice_frames(&self, start: usize, end: usize) -> Spectrogram {
        let stride = self.bins() * self.channels;
        Spectrogram {
            data: self.data[start * stride..end * stride].to_vec(),
            frames: end - start,
            ..self.clone_meta()
        }
    }

    fn clone_meta(&self) -> Spectrogram {
        Spectrogram {
            data: Vec::new(),
            frames: 0,
            channels: self.channels,
            config: self.config,
            sample_rate: self.sample_rate,
            signal_len: self.signal_len,
            channel_ids: self.channel_ids.clone(),
        }
    }

    /// Centre of frame `t` in seconds on the signal's time axis.
    pub fn frame_center_s(&self, t: usize) -> f64 {
        let c = (t * self.config.hop) as f64 - self.config.front_pad() as f64
            + self.config.frame_len as f64 / 2.0;
        c / f64::from(self.sample_rate)
    }

    pub fn map(&self, f: impl Fn(Complex64) -> Complex64) -> Spectrogram {
        let mut out = self.clone();
        out.data.iter_mut().for_each(|v| *v = f(*v));
        out
    }
}

/// Planned analysis/synthesis transform for one [`StftConfig`].
#[derive(Debug, Clone)]
pub struct Stft {
    config: StftConfig,
    window: Vec<f64>,
    fft: RealFft,
}

impl Stft {
    pub fn new(config: StftConfig) -> Result<Self, AudioError> {
        config.validate()?;
        Ok(Self {
            config,
            window: config.window.coefficients(config.frame_len),
            fft: RealFft::new(config.frame_len),
        })
    }

    pub fn config(&self) -> &StftConfig {
        &self.config
    }

    /// Frame-major one-sided spectra (`frames * bins` values).
    pub fn forward(&self, signal: &[f64]) -> Result<Vec<Complex64>, AudioError> {
        let cfg = &self.config;
        if signal.len() < cfg.frame_len {
            return Err(AudioError::TooShort {
                len: signal.len(),
                frame_len: cfg.frame_len,
            });
        }
        let pad = cfg.front_pad();
        let frames = cfg.num_frames(signal.len());
        let mut out = Vec::with_capacity(frames * cfg.bins());
        let mut buf = vec![0.0; cfg.frame_len];
        for t in 0..frames {
            let start = t * cfg.hop;
            for (n, b) in buf.iter_mut().enumerate() {
                let idx = (start + n).wrapping_sub(pad);
                let x = if start + n >= pad {
                    signal.get(idx).copied().unwrap_or(0.0)
                } else {
                    0.0
                };
                *b = x * self.window[n];
            }
            out.extend(self.fft.forward(&buf));
        }
        Ok(out)
    }

    /// Weighted overlap-add synthesis back to `len` samples.
    pub fn inverse(&self, spectra: &[Complex64], len: usize) -> Vec<f64> {
        let cfg = &self.config;
        let bins = cfg.bins();
        let frames = spectra.len() / bins;
        let pad = cfg.front_pad();
        let total = (frames.max(1) - 1) * cfg.hop + cfg.frame_len;
        let mut acc = vec![0.0; total];
        let mut env = vec![0.0; total];
        for t in 0..frames {
            let frame = self.fft.inverse(&spectra[t * bins..(t + 1) * bins]);
            let start = t * cfg.hop;
            for n in 0..cfg.frame_len {
                acc[start + n] += frame[n] * self.window[n];
                env[start + n] += self.window[n] * self.window[n];
            }
        }
        (0..len)
            .map(|i| {
                let j = i + pad;
                match (acc.get(j), env.get(j)) {
                    (Some(a), Some(e)) if *e > 1e-12 => a / e,
                    _ => 0.0,
                }
            })
            .collect()
    }
}

/// Single-channel STFT of a waveform.
pub fn stft(wave: &Waveform, config: StftConfig) -> Result<Spectrogram, AudioError> {
    let plan = Stft::new(config)?;
    let data = plan.forward(&wave.to_f64())?;
    let frames = data.len() / config.bins();
    Ok(Spectrogram {
        data,
        frames,
        channels: 1,
        config,
        sample_rate: wave.sample_rate,
        signal_len: wave.len(),
        channel_ids: vec![wave.channel_id.clone()],
    })
}

/// STFT of every channel, interleaved on the innermost axis. Channels are
/// transformed in parallel; the output does not depend on scheduling.
pub fn stft_multichannel(
    rec: &MultichannelRecording,
    config: StftConfig,
) -> Result<Spectrogram, AudioError> {
    let plan = Stft::new(config)?;
    let per_channel: Vec<Vec<Complex64>> = rec
        .channels()
        .par_iter()
        .map(|w| plan.forward(&w.to_f64()))
        .collect::<Result<_, _>>()?;
    let channels = per_channel.len();
    let n = per_channel[0].len();
    let mut data = vec![Complex64::new(0.0, 0.0); n * channels];
    for (c, spec) in per_channel.iter().enumerate() {
        for (i, v) in spec.iter().enumerate() {
            data[i * channels + c] = *v;
        }
    }
    Ok(Spectrogram {
        data,
        frames: n / config.bins(),
        channels,
        config,
        sample_rate: rec.sample_rate(),
        signal_len: rec.num_samples(),
        channel_ids: rec.channel_ids(),
    })
}

/// Inverse STFT of a single-channel spectrogram, trimmed to the analyzed
/// signal length.
pub fn istft(spec: &Spectrogram) -> Result<Waveform, AudioError> {
    if spec.channels != 1 {
        return Err(AudioError::Mismatch(format!(
            "istft expects one channel, got {}",
            spec.channels
        )));
    }
    let plan = Stft::new(spec.config)?;
    let samples = plan.inverse(&spec.data, spec.signal_len);
    Waveform::from_f64(&samples, spec.sample_rate, spec.channel_ids[0].clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn noise(len: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..len).map(|_| rng.random_range(-0.5..0.5)).collect()
    }

    fn rel_err(a: &[f64], b: &[f64]) -> f64 {
        let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum();
        let den: f64 = a.iter().map(|x| x * x).sum();
        (num / den).sqrt()
    }

    const CONFIGS: [StftConfig; 4] = [
        StftConfig { frame_len: 1024, hop: 256, window: Window::Hann },
        StftConfig { frame_len: 512, hop: 128, window: Window::Hann },
        StftConfig { frame_len: 1024, hop: 512, window: Window::SqrtHann },
        StftConfig { frame_len: 256, hop: 64, window: Window::SqrtHann },
    ];

    #[test]
    fn validation() {
        assert!(StftConfig::default().validate().is_ok());
        let bad_hop = StftConfig { hop: 0, ..Default::default() };
        assert!(matches!(bad_hop.validate(), Err(AudioError::InvalidConfig(_))));
        let not_pow2 = StftConfig { frame_len: 1000, hop: 250, window: Window::Hann };
        assert!(not_pow2.validate().is_err());
        // hann x hann does not overlap-add to a constant at 50 %
        let half = StftConfig { frame_len: 1024, hop: 512, window: Window::Hann };
        assert!(matches!(half.validate(), Err(AudioError::NotCola { .. })));
    }

    #[test]
    fn too_short_is_an_error() {
        let plan = Stft::new(StftConfig::default()).unwrap();
        assert!(matches!(
            plan.forward(&[0.0; 1023]),
            Err(AudioError::TooShort { len: 1023, .. })
        ));
    }

    #[test]
    fn frame_count_policy() {
        let cfg = StftConfig::default();
        let plan = Stft::new(cfg).unwrap();
        for len in [1024, 1025, 1280, 16000] {
            let frames = plan.forward(&vec![0.0; len]).unwrap().len() / cfg.bins();
            let padded = (frames - 1) * cfg.hop + cfg.frame_len;
            assert_eq!(frames, (padded - cfg.frame_len) / cfg.hop + 1);
            assert_eq!(frames, cfg.num_frames(len));
            // the last frame reaches past the final sample
            assert!(padded >= cfg.front_pad() + len + cfg.front_pad());
        }
    }

    #[test]
    fn zero_in_zero_out() {
        let plan = Stft::new(StftConfig::default()).unwrap();
        let spec = plan.forward(&vec![0.0; 4000]).unwrap();
        assert!(spec.iter().all(|c| c.norm() == 0.0));
        assert!(plan.inverse(&spec, 4000).iter().all(|&x| x == 0.0));
    }

    #[test]
    fn sine_peaks_at_its_bin() {
        let cfg = StftConfig::default();
        let plan = Stft::new(cfg).unwrap();
        let sr = 16000.0;
        let k = 37;
        let f = k as f64 * sr / cfg.frame_len as f64;
        let x: Vec<f64> = (0..16000)
            .map(|n| (2.0 * PI * f * n as f64 / sr).sin())
            .collect();
        let spec = plan.forward(&x).unwrap();
        let bins = cfg.bins();
        let frames = spec.len() / bins;
        // interior frames only: the first/last three touch the zero padding
        for t in 3..frames - 4 {
            let row = &spec[t * bins..(t + 1) * bins];
            let peak = (0..bins)
                .max_by(|&a, &b| row[a].norm().total_cmp(&row[b].norm()))
                .unwrap();
            assert_eq!(peak, k, "frame {t}");
            // closed form: |X_k| = A * N / 4 for a periodic-Hann windowed sine
            let expected = cfg.frame_len as f64 / 4.0;
            assert!((row[k].norm() - expected).abs() / expected < 1e-6);
        }
    }

    #[test]
    fn round_trip_all_configs() {
        for cfg in CONFIGS {
            let plan = Stft::new(cfg).unwrap();
            for (seed, len) in [(1u64, 16000usize), (2, 16001), (3, cfg.frame_len)] {
                let x = noise(len, seed);
                let y = plan.inverse(&plan.forward(&x).unwrap(), len);
                assert!(rel_err(&x, &y) <= 1e-6, "{cfg:?} len {len}");
            }
        }
    }

    #[test]
    fn identity_mask_is_transparent() {
        let x = noise(8000, 9);
        let wave = Waveform::from_f64(&x, 16000, "0").unwrap();
        let spec = stft(&wave, StftConfig::default()).unwrap();
        let masked = spec.map(|v| v * 1.0);
        assert_eq!(istft(&masked).unwrap(), istft(&spec).unwrap());
    }

    #[test]
    fn linearity() {
        let plan = Stft::new(StftConfig::default()).unwrap();
        let x = noise(5000, 4);
        let y = noise(5000, 5);
        let (a, b) = (0.7, -1.3);
        let mix: Vec<f64> = x.iter().zip(&y).map(|(p, q)| a * p + b * q).collect();
        let sx = plan.forward(&x).unwrap();
        let sy = plan.forward(&y).unwrap();
        let sm = plan.forward(&mix).unwrap();
        for i in 0..sm.len() {
            assert!((sm[i] - (sx[i] * a + sy[i] * b)).norm() < 1e-10);
        }
    }

    #[test]
    fn energy_matches_window_constant() {
        // Parseval per frame: sum_k |X_k|^2 (two-sided) = N * sum_n |w x|^2,
        // and sum_t w^2(n - t hop) = 3N / (8 hop) for periodic Hann.
        let cfg = StftConfig::default();
        let plan = Stft::new(cfg).unwrap();
        let x = noise(12000, 6);
        let spec = plan.forward(&x).unwrap();
        let bins = cfg.bins();
        let two_sided: f64 = spec
            .iter()
            .enumerate()
            .map(|(i, v)| {
                let k = i % bins;
                let weight = if k == 0 || k == bins - 1 { 1.0 } else { 2.0 };
                weight * v.norm_sqr()
            })
            .sum();
        let n = cfg.frame_len as f64;
        let constant = n * 3.0 * n / (8.0 * cfg.hop as f64);
        let energy: f64 = x.iter().map(|v| v * v).sum();
        assert!((two_sided - constant * energy).abs() / (constant * energy) < 1e-6);
    }

    #[test]
    fn multichannel_layout() {
        let a = Waveform::from_f64(&noise(3000, 1), 16000, "a").unwrap();
        let b = Waveform::from_f64(&noise(3000, 2), 16000, "b").unwrap();
        let rec = MultichannelRecording::new(vec![a.clone(), b.clone()]).unwrap();
        let cfg = StftConfig::default();
        let multi = stft_multichannel(&rec, cfg).unwrap();
        assert_eq!(multi.channel(0), stft(&a, cfg).unwrap());
        assert_eq!(multi.channel(1), stft(&b, cfg).unwrap());
        assert_eq!(multi.vector(3, 10), &[multi.get(3, 10, 0), multi.get(3, 10, 1)]);
    }

    #[test]
    fn istft_rejects_multichannel() {
        let spec = Spectrogram::zeros(4, vec!["a".into(), "b".into()], StftConfig::default(), 16000, 1024);
        assert!(istft(&spec).is_err());
    }
}
