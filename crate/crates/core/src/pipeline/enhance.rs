use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::audio::{istft, stft_multichannel, write_wav, Spectrogram};
use crate::beamform::{
    apply_filter, estimate_covariances, mask_postfilter, read_mask, select_reference, spmwf_weights_loaded,
    BeamformConfig, BeamformError, MaskRole, TfMask,
};
use crate::scoring::{read_rttm, Segment};

use super::{load_session, micsel_recording, write_json, PipelineConfig, PipelineError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnhanceConfig {
    /// Frames within this many seconds of a segment also feed its covariances.
    pub context_s: f64,
    /// Beamform only the channels kept by microphone selection.
    pub use_selection: bool,
    /// Also write each speaker's session-level filter weights as JSON.
    pub dump_filters: bool,
}

impl Default for EnhanceConfig {
    fn default() -> Self {
        Self { context_s: 2.0, use_selection: true, dump_filters: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeakerOutput {
    pub speaker: String,
    pub file: String,
    pub reference_channel: String,
    pub segments: usize,
    /// Segments whose own statistics were unusable and took the session-level filter.
    pub fallback_segments: usize,
    pub degenerate_bins: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnhanceReport {
    pub channels: Vec<String>,
    pub speakers: Vec<SpeakerOutput>,
}

fn load_masks(dir: &Path, speaker: &str, frames: usize, bins: usize) -> Result<(TfMask, TfMask), PipelineError> {
    let target_path = dir.join(format!("{speaker}-target.msk"));
    if !target_path.exists() {
        return Err(PipelineError::Data(format!("missing mask {}", target_path.display())));
    }
    let target = read_mask(&target_path, MaskRole::Target).map_err(|e| PipelineError::data(target_path.display(), e))?;
    let noise_path = dir.join(format!("{speaker}-noise.msk"));
    let noise = if noise_path.exists() {
        read_mask(&noise_path, MaskRole::Noise).map_err(|e| PipelineError::data(noise_path.display(), e))?
    } else {
        target.complement()
    };
    for (m, p) in [(&target, &target_path), (&noise, &noise_path)] {
        m.check_shape(frames, bins).map_err(|e| PipelineError::data(p.display(), e))?;
    }
    Ok((target, noise))
}

/// Speakers named by `*-target.msk` files, for sessions without segments.
fn mask_speakers(dir: &Path) -> Result<Vec<String>, PipelineError> {
    let entries = std::fs::read_dir(dir).map_err(|e| PipelineError::data(dir.display(), e))?;
    let mut out = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| PipelineError::data(dir.display(), e))?.path();
        if let Some(s) = path.file_name().and_then(|n| n.to_str()).and_then(|n| n.strip_suffix("-target.msk")) {
            out.push(s.to_string());
        }
    }
    out.sort();
    if out.is_empty() {
        return Err(PipelineError::Data(format!("{}: no target masks", dir.display())));
    }
    Ok(out)
}

fn frame_range(spec: &Spectrogram, start: f64, end: f64) -> (usize, usize) {
    let a = (0..spec.frames()).find(|&t| spec.frame_center_s(t) >= start).unwrap_or(spec.frames());
    let b = (a..spec.frames()).find(|&t| spec.frame_center_s(t) >= end).unwrap_or(spec.frames());
    (a, b)
}

struct SpeakerJob<'a> {
    label: &'a str,
    segments: Vec<(f64, f64)>,
    target: TfMask,
    noise: TfMask,
}

struct SpeakerResult {
    spec: Spectrogram,
    output: SpeakerOutput,
    filters: serde_json::Value,
}

fn enhance_speaker(
    spec: &Spectrogram,
    job: &SpeakerJob,
    cfg: &BeamformConfig,
    context_s: f64,
) -> Result<SpeakerResult, PipelineError> {
    let session = estimate_covariances(spec, &job.target, &job.noise)?;
    let r = match cfg.reference {
        Some(r) if r >= spec.channels() => {
            return Err(PipelineError::Config(format!(
                "reference {r} out of range for {} channels",
                spec.channels()
            )))
        }
        Some(r) => r,
        None => select_reference(&session),
    };
    let session_fb = spmwf_weights_loaded(&session, r, cfg.mu, cfg.diagonal_loading)?;

    let mut out = Spectrogram::zeros(
        spec.frames(),
        vec![spec.channel_ids()[r].clone()],
        *spec.config(),
        spec.sample_rate(),
        spec.signal_len(),
    );
    let bins = spec.bins();
    let mut fallback = 0;
    let mut degenerate = 0;
    for &(start, end) in &job.segments {
        let (a, b) = frame_range(spec, start, end);
        if a == b {
            continue;
        }
        let (ca, cb) = frame_range(spec, start - context_s, end + context_s);
        let (ca, cb) = (ca.min(a), cb.max(b));
        let local = spec.slice_frames(ca, cb);
        let fb = match estimate_covariances(&local, &job.target.slice_frames(ca, cb), &job.noise.slice_frames(ca, cb))
            .and_then(|cov| spmwf_weights_loaded(&cov, r, cfg.mu, cfg.diagonal_loading))
        {
            Ok(fb) => fb,
            Err(BeamformError::EmptyMask { .. } | BeamformError::SingularNoise { .. }) => {
                fallback += 1;
                session_fb.clone()
            }
            Err(e) => return Err(e.into()),
        };
        degenerate += fb.degenerate_bins.len();
        let seg = spec.slice_frames(a, b);
        let filtered = apply_filter(&seg, &fb)?;
        let post = mask_postfilter(&filtered, &job.target.slice_frames(a, b), cfg.mask_floor)?;
        out.data_mut()[a * bins..b * bins].copy_from_slice(post.data());
    }
    Ok(SpeakerResult {
        spec: out,
        output: SpeakerOutput {
            speaker: job.label.to_string(),
            file: format!("enhanced/{}.wav", job.label),
            reference_channel: spec.channel_ids()[r].clone(),
            segments: job.segments.len(),
            fallback_segments: fallback,
            degenerate_bins: degenerate,
        },
        filters: session_fb.to_json(),
    })
}

/// Microphone selection, then per speaker: session-level reference choice,
/// SP-MWF on each of its segments (covariances over the segment plus
/// context), TF-mask postfilter and resynthesis to `enhanced/<speaker>.wav`.
/// Without a segment file every speaker spans the whole session.
pub fn run_enhance(dir: &Path, cfg: &PipelineConfig) -> Result<EnhanceReport, PipelineError> {
    cfg.validate()?;
    let rec = load_session(dir)?;
    let rec = if cfg.enhance.use_selection {
        let sel = micsel_recording(dir, &rec, cfg)?;
        let ids: Vec<String> = sel.selection.selected.into_iter().collect();
        rec.subset(&ids).map_err(|e| PipelineError::data(dir.display(), e))?
    } else {
        rec
    };
    let spec = stft_multichannel(&rec, cfg.stft).map_err(|e| PipelineError::Config(e.to_string()))?;
    let mask_dir = dir.join(&cfg.paths.masks_dir);
    let seg_path = dir.join(&cfg.paths.segments);
    let whole = (f64::NEG_INFINITY, f64::INFINITY);

    let plan: Vec<(String, Vec<(f64, f64)>)> = if seg_path.exists() {
        let sessions = read_rttm(&seg_path).map_err(|e| PipelineError::data(seg_path.display(), e))?;
        let segments: Vec<&Segment> = sessions.iter().flat_map(|s| &s.segments).collect();
        let mut speakers: Vec<String> = segments.iter().map(|s| s.speaker.clone()).collect();
        speakers.sort();
        speakers.dedup();
        speakers
            .into_iter()
            .map(|label| {
                let mut segs: Vec<(f64, f64)> = segments
                    .iter()
                    .filter(|s| s.speaker == label)
                    .map(|s| (s.start, s.end))
                    .collect();
                segs.sort_by(|a, b| a.0.total_cmp(&b.0));
                (label, segs)
            })
            .collect()
    } else {
        mask_speakers(&mask_dir)?.into_iter().map(|l| (l, vec![whole])).collect()
    };
    if plan.is_empty() {
        return Err(PipelineError::Data(format!("{}: no speakers to enhance", seg_path.display())));
    }

    let jobs = plan
        .iter()
        .map(|(label, segments)| {
            let (target, noise) = load_masks(&mask_dir, label, spec.frames(), spec.bins())?;
            Ok(SpeakerJob { label, segments: segments.clone(), target, noise })
        })
        .collect::<Result<Vec<_>, PipelineError>>()?;
    let results = jobs
        .par_iter()
        .map(|job| enhance_speaker(&spec, job, &cfg.beamform, cfg.enhance.context_s))
        .collect::<Result<Vec<_>, _>>()?;

    let out_dir = dir.join("enhanced");
    std::fs::create_dir_all(&out_dir).map_err(|e| PipelineError::data(out_dir.display(), e))?;
    let mut speakers = Vec::new();
    for res in results {
        let wave = istft(&res.spec).map_err(|e| PipelineError::Data(e.to_string()))?;
        let path = dir.join(&res.output.file);
        write_wav(&path, &wave).map_err(|e| PipelineError::data(path.display(), e))?;
        if cfg.enhance.dump_filters {
            write_json(&out_dir.join(format!("{}-filters.json", res.output.speaker)), &res.filters)?;
        }
        speakers.push(res.output);
    }
    Ok(EnhanceReport {
        channels: rec.channel_ids(),
        speakers,
    })
}

