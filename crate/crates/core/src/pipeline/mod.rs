//! Session-level orchestration behind the command-line tool.
//!
//! A session directory holds `ch-<id>.wav` per microphone plus optional
//! `masks/`, `emb/`, `c50.json`, `ref.rttm` and `manifest.json`. Results are
//! written next to the inputs.

mod enhance;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audio::{read_wav, AudioError, MultichannelRecording, StftConfig};
use crate::beamform::{BeamformConfig, BeamformError};
use crate::count::{count_session, read_embeddings, CountConfig, CountError, CountEstimate};
use crate::scoring::{der, read_rttm, DerBreakdown, ScoringError, SegmentationHypothesis};
use crate::select::{
    envelope_variance_samples, read_c50_scores, select_subset, ChannelScore, EvConfig,
    SelectError, SelectionPolicy, SelectionResult,
};
use crate::sim::{simulate_scene, write_scene, Manifest, SceneError, SceneSpec};

pub use enhance::{run_enhance, EnhanceConfig, EnhanceReport, SpeakerOutput};

/// Errors split by who has to fix them: the configuration (exit code 2) or
/// the session data (exit code 3).
#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
}

impl PipelineError {
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) => 2,
            PipelineError::Data(_) => 3,
        }
    }

    fn data(context: impl std::fmt::Display, e: impl std::fmt::Display) -> Self {
        PipelineError::Data(format!("{context}: {e}"))
    }
}

impl From<SelectError> for PipelineError {
    fn from(e: SelectError) -> Self {
        match e {
            SelectError::InvalidPolicy(_) => PipelineError::Config(e.to_string()),
            _ => PipelineError::Data(e.to_string()),
        }
    }
}

impl From<CountError> for PipelineError {
    fn from(e: CountError) -> Self {
        PipelineError::Data(e.to_string())
    }
}

impl From<BeamformError> for PipelineError {
    fn from(e: BeamformError) -> Self {
        match e {
            BeamformError::InvalidParameter(_) => PipelineError::Config(e.to_string()),
            _ => PipelineError::Data(e.to_string()),
        }
    }
}

impl From<SceneError> for PipelineError {
    fn from(e: SceneError) -> Self {
        match e {
            SceneError::Invalid(_) | SceneError::Infeasible(_) => PipelineError::Config(e.to_string()),
            SceneError::Audio(AudioError::InvalidConfig(_) | AudioError::NotCola { .. }) => {
                PipelineError::Config(e.to_string())
            }
            _ => PipelineError::Data(e.to_string()),
        }
    }
}

impl From<ScoringError> for PipelineError {
    fn from(e: ScoringError) -> Self {
        PipelineError::Data(e.to_string())
    }
}

/// Session-relative input locations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InputPaths {
    pub masks_dir: String,
    pub embeddings: String,
    pub c50: String,
    pub segments: String,
}

impl Default for InputPaths {
    fn default() -> Self {
        Self {
            masks_dir: "masks".into(),
            embeddings: "emb/embeddings.emb".into(),
            c50: "c50.json".into(),
            segments: "ref.rttm".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub stft: StftConfig,
    pub selection: SelectionPolicy,
    pub ev: EvConfig,
    pub count: CountConfig,
    pub beamform: BeamformConfig,
    pub enhance: EnhanceConfig,
    pub paths: InputPaths,
}

impl PipelineConfig {
    pub fn from_json(text: &str) -> Result<Self, PipelineError> {
        let cfg: PipelineConfig =
            serde_json::from_str(text).map_err(|e| PipelineError::Config(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, PipelineError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: String| Err(PipelineError::Config(m));
        self.stft.validate().map_err(|e| PipelineError::Config(e.to_string()))?;
        self.selection.validate()?;
        if self.ev.bands == 0 || !(self.ev.window_s > 0.0 && self.ev.hop_s > 0.0) {
            return bad("ev needs bands >= 1 and positive window/hop".into());
        }
        let c = &self.count;
        if !(-1.0..=1.0).contains(&c.corr_threshold) {
            return bad(format!("corr_threshold {} outside [-1, 1]", c.corr_threshold));
        }
        if c.nmesc.max_speakers == 0 || c.nmesc.max_p_values == 0 {
            return bad("max_speakers and max_p_values must be >= 1".into());
        }
        if !(c.seg_len_s > 0.0 && c.correlation.window_s > 0.0 && c.correlation.max_lag_ms >= 0.0) {
            return bad("seg_len_s and correlation window must be positive, max_lag_ms >= 0".into());
        }
        let b = &self.beamform;
        if !(b.mu >= 0.0 && b.mu.is_finite()) {
            return bad(format!("mu {} must be >= 0", b.mu));
        }
        if !(0.0..=1.0).contains(&b.mask_floor) {
            return bad(format!("mask floor {} outside [0, 1]", b.mask_floor));
        }
        if !(b.diagonal_loading >= 0.0 && b.diagonal_loading.is_finite()) {
            return bad(format!("diagonal loading {} must be >= 0", b.diagonal_loading));
        }
        if !(self.enhance.context_s >= 0.0 && self.enhance.context_s.is_finite()) {
            return bad(format!("context {} s must be >= 0", self.enhance.context_s));
        }
        Ok(())
    }
}

/// Reads every `ch-<id>.wav` in `dir`, ordered by channel id.
pub fn load_session(dir: impl AsRef<Path>) -> Result<MultichannelRecording, PipelineError> {
    let dir = dir.as_ref();
    let entries = std::fs::read_dir(dir).map_err(|e| PipelineError::data(dir.display(), e))?;
    let mut files: Vec<(String, PathBuf)> = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| PipelineError::data(dir.display(), e))?.path();
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("");
        if let Some(id) = name.strip_prefix("ch-").and_then(|n| n.strip_suffix(".wav")) {
            files.push((id.to_string(), path.clone()));
        }
    }
    if files.is_empty() {
        return Err(PipelineError::Data(format!("{}: no ch-<id>.wav files", dir.display())));
    }
    files.sort();
    let channels = files
        .par_iter()
        .map(|(id, path)| {
            let rec = read_wav(path).map_err(|e| PipelineError::data(path.display(), e))?;
            if rec.num_channels() != 1 {
                return Err(PipelineError::Data(format!(
                    "{}: expected a mono file, found {} channels",
                    path.display(),
                    rec.num_channels()
                )));
            }
            let mut w = rec.into_channels().remove(0);
            w.channel_id = id.clone();
            Ok(w)
        })
        .collect::<Result<Vec<_>, _>>()?;
    MultichannelRecording::new(channels).map_err(|e| PipelineError::data(dir.display(), e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), PipelineError> {
    let text = serde_json::to_string_pretty(value).expect("report serializes");
    std::fs::write(path, text + "\n").map_err(|e| PipelineError::data(path.display(), e))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum C50Source {
    File,
    /// No C50 scores were available; the EV ranking stands in for them.
    EvFallback,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MicselReport {
    pub scores: Vec<ChannelScore>,
    pub c50_source: C50Source,
    pub selection: SelectionResult,
}

/// Envelope-variance and C50 scores for every channel, then the selection rule.
pub fn run_micsel(dir: impl AsRef<Path>, cfg: &PipelineConfig) -> Result<MicselReport, PipelineError> {
    let dir = dir.as_ref();
    let rec = load_session(dir)?;
    micsel_recording(dir, &rec, cfg)
}

pub(crate) fn micsel_recording(
    dir: &Path,
    rec: &MultichannelRecording,
    cfg: &PipelineConfig,
) -> Result<MicselReport, PipelineError> {
    cfg.selection.validate()?;
    let evs: Vec<f64> = rec
        .channels()
        .par_iter()
        .map(|w| match envelope_variance_samples(&w.to_f64(), w.sample_rate, &cfg.ev) {
            Ok(v) => Ok(v),
            // a dead microphone ranks last instead of failing the session
            Err(SelectError::DegenerateSignal { .. }) => Ok(0.0),
            Err(e) => Err(PipelineError::data(format!("channel {}", w.channel_id), e)),
        })
        .collect::<Result<_, _>>()?;
    let c50_path = dir.join(&cfg.paths.c50);
    let (c50, c50_source) = if c50_path.exists() {
        (Some(read_c50_scores(&c50_path)?), C50Source::File)
    } else {
        (None, C50Source::EvFallback)
    };
    let scores = rec
        .channels()
        .iter()
        .zip(&evs)
        .map(|(w, &ev)| {
            let c50_db = match &c50 {
                Some(map) => *map.get(&w.channel_id).ok_or_else(|| {
                    PipelineError::Data(format!(
                        "{}: no C50 score for channel {}",
                        c50_path.display(),
                        w.channel_id
                    ))
                })?,
                None => ev,
            };
            Ok(ChannelScore { channel_id: w.channel_id.clone(), ev, c50_db })
        })
        .collect::<Result<Vec<_>, PipelineError>>()?;
    let selection = select_subset(&scores, &cfg.selection)?;
    Ok(MicselReport {
        scores,
        c50_source,
        selection,
    })
}

pub fn cmd_micsel(dir: impl AsRef<Path>, cfg: &PipelineConfig) -> Result<MicselReport, PipelineError> {
    let report = run_micsel(dir.as_ref(), cfg)?;
    write_json(&dir.as_ref().join("micsel.json"), &report)?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountReport {
    #[serde(flatten)]
    pub estimate: CountEstimate,
}

pub fn run_count(dir: impl AsRef<Path>, cfg: &PipelineConfig) -> Result<CountReport, PipelineError> {
    let dir = dir.as_ref();
    let rec = load_session(dir)?;
    let emb_path = dir.join(&cfg.paths.embeddings);
    let emb = read_embeddings(&emb_path).map_err(|e| PipelineError::data(emb_path.display(), e))?;
    let estimate = count_session(&rec, &emb, &cfg.count)?;
    Ok(CountReport { estimate })
}

pub fn cmd_count(dir: impl AsRef<Path>, cfg: &PipelineConfig) -> Result<CountReport, PipelineError> {
    let report = run_count(dir.as_ref(), cfg)?;
    write_json(&dir.as_ref().join("count.json"), &report)?;
    Ok(report)
}

pub fn cmd_enhance(dir: impl AsRef<Path>, cfg: &PipelineConfig) -> Result<EnhanceReport, PipelineError> {
    let report = run_enhance(dir.as_ref(), cfg)?;
    write_json(&dir.as_ref().join("enhance.json"), &report)?;
    Ok(report)
}

/// Reads a scene spec, applies an optional seed override, and writes the scene.
pub fn cmd_simulate(
    spec_path: impl AsRef<Path>,
    out_dir: impl AsRef<Path>,
    seed: Option<u64>,
) -> Result<Manifest, PipelineError> {
    let spec_path = spec_path.as_ref();
    let text = std::fs::read_to_string(spec_path)
        .map_err(|e| PipelineError::Config(format!("{}: {e}", spec_path.display())))?;
    let mut spec: SceneSpec = serde_json::from_str(&text)
        .map_err(|e| PipelineError::Config(format!("{}: {e}", spec_path.display())))?;
    if let Some(s) = seed {
        spec.seed = s;
    }
    let truth = simulate_scene(&spec)?;
    std::fs::create_dir_all(out_dir.as_ref()).map_err(|e| PipelineError::data(out_dir.as_ref().display(), e))?;
    Ok(write_scene(out_dir, &truth)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionScore {
    pub session_id: String,
    #[serde(flatten)]
    pub breakdown: DerBreakdown,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub collar_s: f64,
    pub sessions: Vec<SessionScore>,
    pub missed_s: f64,
    pub falarm_s: f64,
    pub confusion_s: f64,
    pub scored_speech_s: f64,
    pub der: f64,
}

/// Scores every reference session; a session absent from the hypothesis
/// counts as entirely missed. Hypothesis-only sessions are ignored.
pub fn cmd_score(
    reference: impl AsRef<Path>,
    hypothesis: impl AsRef<Path>,
    collar_s: f64,
) -> Result<ScoreReport, PipelineError> {
    if !(collar_s >= 0.0 && collar_s.is_finite()) {
        return Err(PipelineError::Config(format!("collar {collar_s} must be >= 0")));
    }
    let read = |p: &Path| read_rttm(p).map_err(|e| PipelineError::data(p.display(), e));
    let refs = read(reference.as_ref())?;
    let hyps: BTreeMap<String, SegmentationHypothesis> = read(hypothesis.as_ref())?
        .into_iter()
        .map(|h| (h.session_id.clone(), h))
        .collect();
    if refs.is_empty() {
        return Err(PipelineError::Data(format!(
            "{}: no SPEAKER lines",
            reference.as_ref().display()
        )));
    }
    let sessions = refs
        .par_iter()
        .map(|r| {
            let empty = SegmentationHypothesis { session_id: r.session_id.clone(), segments: Vec::new() };
            let h = hyps.get(&r.session_id).unwrap_or(&empty);
            let breakdown = der(r, h, collar_s).map_err(|e| PipelineError::data(&r.session_id, e))?;
            Ok(SessionScore { session_id: r.session_id.clone(), breakdown })
        })
        .collect::<Result<Vec<_>, PipelineError>>()?;
    let sum = |f: fn(&DerBreakdown) -> f64| sessions.iter().map(|s| f(&s.breakdown)).sum::<f64>();
    let (missed_s, falarm_s, confusion_s, scored_speech_s) = (
        sum(|b| b.missed_s),
        sum(|b| b.falarm_s),
        sum(|b| b.confusion_s),
        sum(|b| b.scored_speech_s),
    );
    Ok(ScoreReport {
        collar_s,
        der: (missed_s + falarm_s + confusion_s) / scored_speech_s,
        sessions,
        missed_s,
        falarm_s,
        confusion_s,
        scored_speech_s,
    })
}
