//! Waveform containers, WAV I/O and the short-time Fourier transform.

mod stft;
mod wav;

pub use stft::{istft, stft, stft_multichannel, Spectrogram, Stft, StftConfig, Window};
pub use wav::{parse_wav, read_wav, write_wav, write_wav_multichannel, SampleFormat};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum AudioError {
    #[error("sample rate must be positive")]
    InvalidSampleRate,
    #[error("channel `{channel}` has a non-finite sample at index {index}")]
    NonFinite { channel: String, index: usize },
    #[error("signal of {len} samples is shorter than one frame ({frame_len} samples)")]
    TooShort { len: usize, frame_len: usize },
    #[error("invalid STFT configuration: {0}")]
    InvalidConfig(String),
    #[error("window/hop pair is not COLA (max envelope deviation {max_deviation:.3e})")]
    NotCola { max_deviation: f64 },
    #[error("recording mismatch: {0}")]
    Mismatch(String),
    #[error("malformed WAV at byte offset {offset} ({field}): {message}")]
    Wav {
        offset: u64,
        field: &'static str,
        message: String,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One microphone signal.
///
/// Samples are stored as `f32`; numeric code converts to `f64` before
/// accumulating.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    pub samples: Vec<f32>,
    pub sample_rate: u32,
    pub channel_id: String,
}

impl Waveform {
    pub fn new(
        samples: Vec<f32>,
        sample_rate: u32,
        channel_id: impl Into<String>,
    ) -> Result<Self, AudioError> {
        let channel_id = channel_id.into();
        if sample_rate == 0 {
            return Err(AudioError::InvalidSampleRate);
        }
        if let Some(index) = samples.iter().position(|s| !s.is_finite()) {
            return Err(AudioError::NonFinite {
                channel: channel_id,
                index,
            });
        }
        Ok(Self {
            samples,
            sample_rate,
            channel_id,
        })
    }

    /// Builds a waveform from `f64` samples, rounding to `f32` storage.
    pub fn from_f64(
        samples: &[f64],
        sample_rate: u32,
        channel_id: impl Into<String>,
    ) -> Result<Self, AudioError> {
        Self::new(
            samples.iter().map(|&s| s as f32).collect(),
            sample_rate,
            channel_id,
        )
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.samples.iter().map(|&s| f64::from(s)).collect()
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / f64::from(self.sample_rate)
    }
}

/// Sample-aligned set of microphone signals sharing one sample rate.
#[derive(Debug, Clone, PartialEq)]
pub struct MultichannelRecording {
    channels: Vec<Waveform>,
}

impl MultichannelRecording {
    pub fn new(channels: Vec<Waveform>) -> Result<Self, AudioError> {
        let Some(first) = channels.first() else {
            return Err(AudioError::Mismatch("recording has no channels".into()));
        };
        let (sr, len) = (first.sample_rate, first.len());
        for ch in &channels {
            if ch.sample_rate != sr {
                return Err(AudioError::Mismatch(format!(
                    "channel `{}` has sample rate {} (expected {sr})",
                    ch.channel_id, ch.sample_rate
                )));
            }
            if ch.len() != len {
                return Err(AudioError::Mismatch(format!(
                    "channel `{}` has {} samples (expected {len})",
                    ch.channel_id,
                    ch.len()
                )));
            }
        }
        let mut ids: Vec<&str> = channels.iter().map(|c| c.channel_id.as_str()).collect();
        ids.sort_unstable();
        if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
            return Err(AudioError::Mismatch(format!(
                "duplicate channel id `{}`",
                w[0]
            )));
        }
        Ok(Self { channels })
    }

    pub fn channels(&self) -> &[Waveform] {
        &self.channels
    }

    pub fn into_channels(self) -> Vec<Waveform> {
        self.channels
    }

    pub fn num_channels(&self) -> usize {
        self.channels.len()
    }

    pub fn sample_rate(&self) -> u32 {
        self.channels[0].sample_rate
    }

    pub fn num_samples(&self) -> usize {
        self.channels[0].len()
    }

    pub fn channel_ids(&self) -> Vec<String> {
        self.channels.iter().map(|c| c.channel_id.clone()).collect()
    }

    /// Keeps only the listed channels, in the recording's original order.
    pub fn subset(&self, ids: &[String]) -> Result<Self, AudioError> {
        for id in ids {
            if !self.channels.iter().any(|c| &c.channel_id == id) {
                return Err(AudioError::Mismatch(format!("unknown channel `{id}`")));
            }
        }
        Self::new(
            self.channels
                .iter()
                .filter(|c| ids.contains(&c.channel_id))
                .cloned()
                .collect(),
        )
    }
}
