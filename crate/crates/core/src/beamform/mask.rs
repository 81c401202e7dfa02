//! Time-frequency masks and the `MSK1` file format: magic, little-endian
//! `u32` frames, `u32` bins, then `frames * bins` little-endian `f32` values
//! row-major.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::BeamformError;

const MAGIC: &[u8; 4] = b"MSK1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskRole {
    Target,
    Noise,
}

/// Mask values in `[0, 1]` indexed `[frame][bin]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TfMask {
    values: Vec<f32>,
    frames: usize,
    bins: usize,
    role: MaskRole,
}

impl TfMask {
    pub fn new(values: Vec<f32>, frames: usize, bins: usize, role: MaskRole) -> Result<Self, BeamformError> {
        if values.len() != frames * bins {
            return Err(BeamformError::Shape(format!(
                "{} mask values for {frames} x {bins}",
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !(0.0..=1.0).contains(v)) {
            return Err(BeamformError::InvalidMask(format!(
                "value {} at frame {}, bin {} is outside [0, 1]",
                values[i],
                i / bins,
                i % bins
            )));
        }
        Ok(Self { values, frames, bins, role })
    }

    pub fn constant(value: f32, frames: usize, bins: usize, role: MaskRole) -> Result<Self, BeamformError> {
        Self::new(vec![value; frames * bins], frames, bins, role)
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn role(&self) -> MaskRole {
        self.role
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn get(&self, frame: usize, bin: usize) -> f32 {
        self.values[frame * self.bins + bin]
    }

    /// `1 - m` as a noise mask.
    pub fn complement(&self) -> TfMask {
        TfMask {
            values: self.values.iter().map(|v| 1.0 - v).collect(),
            frames: self.frames,
            bins: self.bins,
            role: match self.role {
                MaskRole::Target => MaskRole::Noise,
                MaskRole::Noise => MaskRole::Target,
            },
        }
    }

    /// Frames `start..end` as a new mask.
    pub fn slice_frames(&self, start: usize, end: usize) -> TfMask {
        TfMask {
            values: self.values[start * self.bins..end * self.bins].to_vec(),
            frames: end - start,
            bins: self.bins,
            role: self.role,
        }
    }

    pub fn check_shape(&self, frames: usize, bins: usize) -> Result<(), BeamformError> {
        if (self.frames, self.bins) != (frames, bins) {
            return Err(BeamformError::Shape(format!(
                "{:?} mask is {} x {}, spectrogram is {frames} x {bins}",
                self.role, self.frames, self.bins
            )));
        }
        Ok(())
    }
}

pub fn write_mask(path: impl AsRef<Path>, mask: &TfMask) -> Result<(), BeamformError> {
    let mut bytes = Vec::with_capacity(12 + 4 * mask.values.len());
    bytes.extend_from_slice(MAGIC);
    bytes.extend_from_slice(&(mask.frames as u32).to_le_bytes());
    bytes.extend_from_slice(&(mask.bins as u32).to_le_bytes());
    for v in &mask.values {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    std::fs::write(path, bytes)?;
    Ok(())
}

pub fn read_mask(path: impl AsRef<Path>, role: MaskRole) -> Result<TfMask, BeamformError> {
    let path = path.as_ref();
    let bytes = std::fs::read(path)?;
    if bytes.len() < 12 || &bytes[..4] != MAGIC {
        return Err(BeamformError::InvalidMask(format!(
            "{}: missing MSK1 header",
            path.display()
        )));
    }
    let frames = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let bins = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    if bytes.len() != 12 + 4 * frames * bins {
        return Err(BeamformError::InvalidMask(format!(
            "{}: {} bytes do not hold {frames} x {bins} values",
            path.display(),
            bytes.len()
        )));
    }
    let values = bytes[12..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    TfMask::new(values, frames, bins, role)
        .map_err(|e| BeamformError::InvalidMask(format!("{}: {e}", path.display())))
}
