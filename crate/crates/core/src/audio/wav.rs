//! Minimal RIFF/WAVE codec: PCM16, PCM24 and IEEE float32, 1..=64 channels.

use std::fs;
use std::io::Write;
use std::path::Path;

use super::{AudioError, MultichannelRecording, Waveform};

const FORMAT_PCM: u16 = 1;
const FORMAT_FLOAT: u16 = 3;
const FORMAT_EXTENSIBLE: u16 = 0xFFFE;
const MAX_CHANNELS: u16 = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleFormat {
    Pcm16,
    Pcm24,
    Float32,
}

impl SampleFormat {
    fn bytes(self) -> usize {
        match self {
            SampleFormat::Pcm16 => 2,
            SampleFormat::Pcm24 => 3,
            SampleFormat::Float32 => 4,
        }
    }

    fn tag(self) -> u16 {
        match self {
            SampleFormat::Float32 => FORMAT_FLOAT,
            _ => FORMAT_PCM,
        }
    }
}

fn malformed(offset: usize, field: &'static str, message: impl Into<String>) -> AudioError {
    AudioError::Wav {
        offset: offset as u64,
        field,
        message: message.into(),
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, field: &'static str) -> Result<&'a [u8], AudioError> {
        if self.bytes.len() - self.pos < n {
            return Err(malformed(
                self.pos,
                field,
                format!("need {n} bytes, {} left", self.bytes.len() - self.pos),
            ));
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u16(&mut self, field: &'static str) -> Result<u16, AudioError> {
        let b = self.take(2, field)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    fn u32(&mut self, field: &'static str) -> Result<u32, AudioError> {
        let b = self.take(4, field)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

struct Format {
    channels: u16,
    sample_rate: u32,
    sample: SampleFormat,
}

fn parse_fmt(chunk: &[u8], base: usize) -> Result<Format, AudioError> {
    let mut c = Cursor { bytes: chunk, pos: 0 };
    let field_err = |pos: usize, field, msg: String| malformed(base + pos, field, msg);
    let mut tag = c.u16("fmt.audio_format")?;
    let channels = c.u16("fmt.channels")?;
    let sample_rate = c.u32("fmt.sample_rate")?;
    let _byte_rate = c.u32("fmt.byte_rate")?;
    let block_align = c.u16("fmt.block_align")?;
    let bits = c.u16("fmt.bits_per_sample")?;
    if tag == FORMAT_EXTENSIBLE {
        let _cb_size = c.u16("fmt.cb_size")?;
        let _valid_bits = c.u16("fmt.valid_bits")?;
        let _mask = c.u32("fmt.channel_mask")?;
        let guid = c.take(16, "fmt.sub_format")?;
        tag = u16::from_le_bytes([guid[0], guid[1]]);
    }
    if channels == 0 || channels > MAX_CHANNELS {
        return Err(field_err(2, "fmt.channels", format!("{channels} channels (supported 1..=64)")));
    }
    if sample_rate == 0 {
        return Err(field_err(4, "fmt.sample_rate", "sample rate is zero".into()));
    }
    let sample = match (tag, bits) {
        (FORMAT_PCM, 16) => SampleFormat::Pcm16,
        (FORMAT_PCM, 24) => SampleFormat::Pcm24,
        (FORMAT_FLOAT, 32) => SampleFormat::Float32,
        _ => {
            return Err(field_err(
                0,
                "fmt.audio_format",
                format!("unsupported codec (format tag {tag}, {bits} bits)"),
            ))
        }
    };
    if usize::from(block_align) != sample.bytes() * usize::from(channels) {
        return Err(field_err(
            12,
            "fmt.block_align",
            format!("block_align {block_align} inconsistent with {channels} x {bits} bits"),
        ));
    }
    Ok(Format {
        channels,
        sample_rate,
        sample,
    })
}

fn decode(bytes: &[u8], fmt: SampleFormat) -> f32 {
    match fmt {
        SampleFormat::Pcm16 => f32::from(i16::from_le_bytes([bytes[0], bytes[1]])) / 32768.0,
        SampleFormat::Pcm24 => {
            let v = i32::from_le_bytes([0, bytes[0], bytes[1], bytes[2]]) >> 8;
            v as f32 / 8_388_608.0
        }
        SampleFormat::Float32 => f32::from_le_bytes([bytes[0], bytes[1], bytes[2], bytes[3]]),
    }
}

/// Parses WAV bytes. Channel ids default to `"0"`, `"1"`, ...
pub fn parse_wav(bytes: &[u8]) -> Result<MultichannelRecording, AudioError> {
    let mut c = Cursor { bytes, pos: 0 };
    if c.take(4, "riff.id")? != b"RIFF" {
        return Err(malformed(0, "riff.id", "missing RIFF magic"));
    }
    let _riff_size = c.u32("riff.size")?;
    if c.take(4, "riff.wave")? != b"WAVE" {
        return Err(malformed(8, "riff.wave", "missing WAVE form type"));
    }
    let mut format: Option<Format> = None;
    loop {
        let chunk_start = c.pos;
        if chunk_start == bytes.len() {
            return Err(malformed(chunk_start, "data", "no data chunk"));
        }
        let id = c.take(4, "chunk.id")?;
        let size = c.u32("chunk.size")? as usize;
        let body_start = c.pos;
        match id {
            b"fmt " => {
                let body = c.take(size, "fmt")?;
                format = Some(parse_fmt(body, body_start)?);
            }
            b"data" => {
                let fmt = format
                    .ok_or_else(|| malformed(chunk_start, "data", "data chunk before fmt chunk"))?;
                let body = c.take(size, "data")?;
                let block = fmt.sample.bytes() * usize::from(fmt.channels);
                if size % block != 0 {
                    return Err(malformed(
                        chunk_start + 4,
                        "data.size",
                        format!("{size} bytes is not a whole number of {block}-byte frames"),
                    ));
                }
                let frames = size / block;
                let width = fmt.sample.bytes();
                let mut channels = Vec::with_capacity(usize::from(fmt.channels));
                for ch in 0..usize::from(fmt.channels) {
                    let samples: Vec<f32> = (0..frames)
                        .map(|i| {
                            let at = i * block + ch * width;
                            decode(&body[at..at + width], fmt.sample)
                        })
                        .collect();
                    channels.push(Waveform::new(samples, fmt.sample_rate, ch.to_string())?);
                }
                return MultichannelRecording::new(channels);
            }
            _ => {
                c.take(size, "chunk.body")?;
            }
        }
        // chunks are word aligned
        if size % 2 == 1 && c.pos < bytes.len() {
            c.take(1, "chunk.pad")?;
        }
    }
}

pub fn read_wav(path: impl AsRef<Path>) -> Result<MultichannelRecording, AudioError> {
    parse_wav(&fs::read(path)?)
}

fn encode(channels: &[&Waveform], format: SampleFormat) -> Vec<u8> {
    let frames = channels[0].len();
    let n_ch = channels.len();
    let block = format.bytes() * n_ch;
    let data_len = frames * block;
    let mut out = Vec::with_capacity(44 + data_len);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&((36 + data_len) as u32).to_le_bytes());
    out.extend_from_slice(b"WAVEfmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&format.tag().to_le_bytes());
    out.extend_from_slice(&(n_ch as u16).to_le_bytes());
    let sr = channels[0].sample_rate;
    out.extend_from_slice(&sr.to_le_bytes());
    out.extend_from_slice(&(sr * block as u32).to_le_bytes());
    out.extend_from_slice(&(block as u16).to_le_bytes());
    out.extend_from_slice(&((format.bytes() * 8) as u16).to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&(data_len as u32).to_le_bytes());
    for i in 0..frames {
        for ch in channels {
            let s = ch.samples[i];
            match format {
                SampleFormat::Float32 => out.extend_from_slice(&s.to_le_bytes()),
                SampleFormat::Pcm16 => {
                    let v = (f64::from(s) * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
                    out.extend_from_slice(&v.to_le_bytes());
                }
                SampleFormat::Pcm24 => {
                    let v = (f64::from(s) * 8_388_608.0)
                        .round()
                        .clamp(-8_388_608.0, 8_388_607.0) as i32;
                    out.extend_from_slice(&v.to_le_bytes()[..3]);
                }
            }
        }
    }
    out
}

/// Writes a mono float32 WAV.
pub fn write_wav(path: impl AsRef<Path>, wave: &Waveform) -> Result<(), AudioError> {
    let mut f = fs::File::create(path)?;
    f.write_all(&encode(&[wave], SampleFormat::Float32))?;
    Ok(())
}

pub fn write_wav_multichannel(
    path: impl AsRef<Path>,
    rec: &MultichannelRecording,
    format: SampleFormat,
) -> Result<(), AudioError> {
    let chans: Vec<&Waveform> = rec.channels().iter().collect();
    if chans.len() > usize::from(MAX_CHANNELS) {
        return Err(AudioError::Mismatch(format!("{} channels exceed 64", chans.len())));
    }
    fs::write(path, encode(&chans, format))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn wave(samples: Vec<f32>, id: &str) -> Waveform {
        Waveform::new(samples, 16000, id).unwrap()
    }

    #[test]
    fn float32_round_trip_is_bit_exact() {
        let w = wave(vec![0.0, 0.1, -0.333_333_34, 1.0, -1.0, 1e-30, 0.75], "0");
        let bytes = encode(&[&w], SampleFormat::Float32);
        let rec = parse_wav(&bytes).unwrap();
        assert_eq!(rec.channels()[0], w);
    }

    #[test]
    fn pcm16_full_scale() {
        let mut bytes = encode(&[&wave(vec![0.0; 2], "0")], SampleFormat::Pcm16);
        let n = bytes.len();
        bytes[n - 2..].copy_from_slice(&32767i16.to_le_bytes());
        bytes[n - 4..n - 2].copy_from_slice(&(-32768i16).to_le_bytes());
        let rec = parse_wav(&bytes).unwrap();
        assert_eq!(rec.channels()[0].samples, vec![-1.0, 32767.0 / 32768.0]);
    }

    #[test]
    fn pcm24_and_channel_order() {
        let a = wave(vec![0.5, -0.25, 0.0], "0");
        let b = wave(vec![-0.5, 0.125, 1.0 - 1.0 / 8_388_608.0], "1");
        let rec = MultichannelRecording::new(vec![a.clone(), b.clone()]).unwrap();
        for fmt in [SampleFormat::Pcm24, SampleFormat::Pcm16, SampleFormat::Float32] {
            let back = parse_wav(&encode(&rec.channels().iter().collect::<Vec<_>>(), fmt)).unwrap();
            assert_eq!(back.num_channels(), 2);
            for (x, y) in back.channels().iter().zip([&a, &b]) {
                for (u, v) in x.samples.iter().zip(&y.samples) {
                    assert!((u - v).abs() <= 1.0 / 32768.0);
                }
            }
        }
    }

    #[test]
    fn truncated_file_is_rejected() {
        let bytes = encode(&[&wave(vec![0.25; 100], "0")], SampleFormat::Float32);
        for cut in [3, 20, 40, bytes.len() - 1] {
            let err = parse_wav(&bytes[..cut]).unwrap_err();
            assert!(matches!(err, AudioError::Wav { .. }), "cut {cut}: {err}");
        }
    }

    #[test]
    fn unsupported_codec_names_field() {
        let mut bytes = encode(&[&wave(vec![0.0; 4], "0")], SampleFormat::Pcm16);
        // bits_per_sample = 8
        bytes[34..36].copy_from_slice(&8u16.to_le_bytes());
        bytes[32..34].copy_from_slice(&1u16.to_le_bytes());
        match parse_wav(&bytes).unwrap_err() {
            AudioError::Wav { field, offset, .. } => {
                assert_eq!(field, "fmt.audio_format");
                assert_eq!(offset, 20);
            }
            e => panic!("unexpected {e}"),
        }
        let mut bad_magic = bytes.clone();
        bad_magic[0] = b'X';
        assert!(matches!(
            parse_wav(&bad_magic),
            Err(AudioError::Wav { field: "riff.id", .. })
        ));
    }

    #[test]
    fn skips_unknown_chunks() {
        let w = wave(vec![0.5, -0.5], "0");
        let plain = encode(&[&w], SampleFormat::Float32);
        let mut bytes = plain[..36].to_vec();
        bytes.extend_from_slice(b"LIST");
        bytes.extend_from_slice(&3u32.to_le_bytes());
        bytes.extend_from_slice(&[1, 2, 3, 0]);
        bytes.extend_from_slice(&plain[36..]);
        assert_eq!(parse_wav(&bytes).unwrap().channels()[0], w);
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.wav");
        let w = wave(vec![0.1, 0.2, -0.3], "0");
        write_wav(&p, &w).unwrap();
        assert_eq!(read_wav(&p).unwrap().channels()[0], w);
    }
}
