//! Deterministic synthetic scenes: speech surrogates in simulated reverberant
//! rooms with grouped microphones, plus every ground truth the other modules
//! need (images, masks, RTTM, C50, embeddings).

mod rir;
mod signal;
mod writer;

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audio::{AudioError, MultichannelRecording, Stft, StftConfig, Waveform};
use crate::beamform::{MaskRole, TfMask};
use crate::count::{EmbeddingMeta, EmbeddingSet};
use crate::fft::convolve;
use crate::scoring::SegmentationHypothesis;
use crate::select::c50_from_samples;

pub use rir::{analytic_c50, decay_rate, make_rir};
pub use writer::{write_scene, Manifest, ManifestFiles, MaskFiles};

use rir::{gaussian, normalize, rir_len, shape_rir};
use signal::{activity_gate, conversation, pink_noise, speech_surrogate};

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("invalid scene spec: {0}")]
    Invalid(String),
    #[error("infeasible scene: {0}")]
    Infeasible(String),
    #[error(transparent)]
    Audio(#[from] AudioError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Counter-based generator: independent draws per `(kind, a, b)` stream.
pub(crate) fn stream_rng(seed: u64, kind: u64, a: u64, b: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((kind << 48) | (a << 24) | b);
    rng
}

mod stream {
    pub const SOURCE: u64 = 1;
    pub const TAIL_SHARED: u64 = 2;
    pub const TAIL_OWN: u64 = 3;
    pub const NOISE_SHARED: u64 = 4;
    pub const NOISE_OWN: u64 = 5;
    pub const TURNS: u64 = 6;
    pub const CENTROIDS: u64 = 7;
    pub const EMBEDDING: u64 = 8;
    pub const DELAY: u64 = 9;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MicGroup {
    pub mics: Vec<usize>,
    #[serde(default)]
    pub delay_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneSpec {
    pub seed: u64,
    pub session_id: String,
    pub n_speakers: usize,
    pub n_mics: usize,
    /// Partition of mic indices; empty means one group with every mic.
    pub mic_groups: Vec<MicGroup>,
    /// One value for all mics or one per mic.
    pub t60_s: Vec<f64>,
    /// Source image power over unit-power noise, one value or one per
    /// source; `None` leaves the scene noise-free.
    pub snr_db: Option<Vec<f64>>,
    pub duration_s: f64,
    pub sample_rate: u32,
    pub turn_s: f64,
    pub overlap_s: f64,
    /// Share of reverb tail and noise common to a mic group.
    pub group_coherence: f64,
    pub emb_dim: usize,
    pub stft: StftConfig,
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self {
            seed: 0,
            session_id: "sim".into(),
            n_speakers: 2,
            n_mics: 4,
            mic_groups: Vec::new(),
            t60_s: vec![0.3],
            snr_db: Some(vec![5.0]),
            duration_s: 20.0,
            sample_rate: 16000,
            turn_s: 4.0,
            overlap_s: 0.5,
            group_coherence: 0.8,
            emb_dim: 32,
            stft: StftConfig::default(),
        }
    }
}

impl SceneSpec {
    pub fn validate(&self) -> Result<(), SceneError> {
        let bad = |m: String| Err(SceneError::Invalid(m));
        if !(1..=8).contains(&self.n_speakers) {
            return bad(format!("n_speakers = {} is outside 1..=8", self.n_speakers));
        }
        if !(1..=64).contains(&self.n_mics) {
            return bad(format!("n_mics = {} is outside 1..=64", self.n_mics));
        }
        if !(self.duration_s >= 2.0 && self.duration_s.is_finite()) {
            return bad(format!("duration {} s is shorter than 2 s", self.duration_s));
        }
        if self.sample_rate == 0 {
            return bad("sample_rate must be positive".into());
        }
        if self.session_id.is_empty() || self.session_id.contains(char::is_whitespace) {
            return bad(format!("session id `{}` must be one non-empty word", self.session_id));
        }
        if ![1, self.n_mics].contains(&self.t60_s.len()) {
            return bad(format!("{} t60 values for {} mics", self.t60_s.len(), self.n_mics));
        }
        if let Some(t) = self.t60_s.iter().find(|t| !(**t >= 0.0 && t.is_finite())) {
            return bad(format!("t60 = {t} must be >= 0"));
        }
        if let Some(snr) = &self.snr_db {
            if ![1, self.n_speakers].contains(&snr.len()) || snr.iter().any(|v| !v.is_finite()) {
                return bad(format!("snr_db needs 1 or {} finite values", self.n_speakers));
            }
        }
        if !self.mic_groups.is_empty() {
            let mut seen = vec![false; self.n_mics];
            for g in &self.mic_groups {
                if !(g.delay_ms >= 0.0 && g.delay_ms.is_finite()) {
                    return bad(format!("group delay {} ms must be >= 0", g.delay_ms));
                }
                for &m in &g.mics {
                    if m >= self.n_mics || seen[m] {
                        return bad(format!("mic {m} is out of range or in two groups"));
                    }
                    seen[m] = true;
                }
            }
            if seen.iter().any(|s| !s) {
                return bad("mic groups do not cover every mic".into());
            }
        }
        if !(0.0..=1.0).contains(&self.group_coherence) {
            return bad(format!("group_coherence {} is outside [0, 1]", self.group_coherence));
        }
        if self.emb_dim <= self.n_speakers {
            return bad(format!(
                "emb_dim {} must exceed n_speakers {}",
                self.emb_dim, self.n_speakers
            ));
        }
        self.stft.validate()?;
        Ok(())
    }

    pub fn channel_ids(&self) -> Vec<String> {
        (0..self.n_mics).map(|m| format!("{m:02}")).collect()
    }

    pub fn speaker_labels(&self) -> Vec<String> {
        (0..self.n_speakers).map(|s| format!("spk{s}")).collect()
    }

    pub fn groups(&self) -> Vec<MicGroup> {
        if self.mic_groups.is_empty() {
            vec![MicGroup { mics: (0..self.n_mics).collect(), delay_ms: 0.0 }]
        } else {
            self.mic_groups.clone()
        }
    }

    pub fn t60(&self, mic: usize) -> f64 {
        self.t60_s[if self.t60_s.len() == 1 { 0 } else { mic }]
    }

    pub fn snr(&self, source: usize) -> Option<f64> {
        self.snr_db
            .as_ref()
            .map(|v| v[if v.len() == 1 { 0 } else { source }])
    }

    pub fn num_samples(&self) -> usize {
        (self.duration_s * f64::from(self.sample_rate)).round() as usize
    }
}

#[derive(Debug, Clone)]
pub struct SceneTruth {
    pub spec: SceneSpec,
    pub mixture: MultichannelRecording,
    /// Per source: its reverberant image at every mic.
    pub images: Vec<MultichannelRecording>,
    pub noise: Option<MultichannelRecording>,
    /// `[source][mic]`, unit energy.
    pub rirs: Vec<Vec<Waveform>>,
    /// Per source: oracle (target, noise) masks.
    pub masks: Vec<(TfMask, TfMask)>,
    pub rttm: SegmentationHypothesis,
    pub n_speakers: usize,
    /// Per channel: C50 averaged over the sources' RIRs.
    pub c50_db: BTreeMap<String, f64>,
    pub embeddings: EmbeddingSet,
    /// Common gain applied to every signal to keep the mixture within ±0.9.
    pub gain: f64,
}

struct SourceSynthesis {
    images: Vec<Vec<f64>>,
    rirs: Vec<Vec<f64>>,
}

fn synthesize_source(spec: &SceneSpec, s: usize, gate: &[f64], groups: &[MicGroup]) -> SourceSynthesis {
    let n = spec.num_samples();
    let sr = spec.sample_rate;
    let mut rng = stream_rng(spec.seed, stream::SOURCE, s as u64, 0);
    let dry: Vec<f64> = speech_surrogate(&mut rng, n, sr)
        .into_iter()
        .zip(gate)
        .map(|(x, g)| x * g)
        .collect();

    let mut rirs = vec![Vec::new(); spec.n_mics];
    let coh = spec.group_coherence;
    for (g, group) in groups.iter().enumerate() {
        let mut delay_rng = stream_rng(spec.seed, stream::DELAY, s as u64, g as u64);
        let source_offset = delay_rng.random_range(0.0..8.0);
        let longest = group
            .mics
            .iter()
            .map(|&m| rir_len(group.delay_ms + 10.0, spec.t60(m), sr, None))
            .max()
            .unwrap_or(1);
        let shared = gaussian(&mut stream_rng(spec.seed, stream::TAIL_SHARED, s as u64, g as u64), longest);
        for &m in &group.mics {
            let delay_ms = group.delay_ms + source_offset + delay_rng.random_range(0.0..1.0);
            let len = rir_len(delay_ms, spec.t60(m), sr, None);
            let own = gaussian(&mut stream_rng(spec.seed, stream::TAIL_OWN, s as u64, m as u64), len);
            let tail: Vec<f64> = own
                .iter()
                .zip(&shared)
                .map(|(o, c)| coh.sqrt() * c + (1.0 - coh).sqrt() * o)
                .collect();
            let delay = (delay_ms * 1e-3 * f64::from(sr)).round() as usize;
            let mut h = vec![0.0; len];
            shape_rir(delay, spec.t60(m), sr, &tail, &mut h);
            normalize(&mut h);
            rirs[m] = h;
        }
    }
    let images = rirs
        .iter()
        .map(|h| {
            let mut y = convolve(&dry, h);
            y.truncate(n);
            y
        })
        .collect();
    SourceSynthesis { images, rirs }
}

fn synthesize_noise(spec: &SceneSpec, groups: &[MicGroup]) -> Vec<Vec<f64>> {
    let n = spec.num_samples();
    let coh = spec.group_coherence;
    let mut out = vec![Vec::new(); spec.n_mics];
    for (g, group) in groups.iter().enumerate() {
        let shared = pink_noise(&mut stream_rng(spec.seed, stream::NOISE_SHARED, g as u64, 0), n, spec.sample_rate);
        for &m in &group.mics {
            let own = pink_noise(&mut stream_rng(spec.seed, stream::NOISE_OWN, m as u64, 0), n, spec.sample_rate);
            out[m] = shared
                .iter()
                .zip(&own)
                .map(|(c, o)| coh.sqrt() * c + (1.0 - coh).sqrt() * o)
                .collect();
        }
    }
    out
}

/// Centroids with pairwise cosine 0.2; members are centroid plus isotropic
/// noise (expected member-member cosine about 0.86).
fn synthetic_embeddings(spec: &SceneSpec, rttm: &SegmentationHypothesis, labels: &[String]) -> Result<EmbeddingSet, SceneError> {
    let d = spec.emb_dim;
    let mut rng = stream_rng(spec.seed, stream::CENTROIDS, 0, 0);
    let mut basis: Vec<Vec<f64>> = Vec::new();
    while basis.len() <= spec.n_speakers {
        let mut v = gaussian(&mut rng, d);
        for b in &basis {
            let dot: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
            v.iter_mut().zip(b).for_each(|(x, y)| *x -= dot * y);
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        basis.push(v.into_iter().map(|x| x / norm).collect());
    }
    let centroids: Vec<Vec<f64>> = (1..=spec.n_speakers)
        .map(|i| {
            basis[0]
                .iter()
                .zip(&basis[i])
                .map(|(a, b)| 0.2f64.sqrt() * a + 0.8f64.sqrt() * b)
                .collect()
        })
        .collect();
    let sigma = 0.4 / (d as f64).sqrt();
    let ids = spec.channel_ids();
    let mut vectors = Vec::new();
    let mut meta = Vec::new();
    for (t, seg) in rttm.segments.iter().enumerate() {
        let s = labels.iter().position(|l| *l == seg.speaker).expect("known label");
        for (m, id) in ids.iter().enumerate() {
            let mut rng = stream_rng(spec.seed, stream::EMBEDDING, t as u64, m as u64);
            let noise = gaussian(&mut rng, d);
            vectors.push(
                centroids[s]
                    .iter()
                    .zip(&noise)
                    .map(|(c, z)| (c + sigma * z) as f32)
                    .collect(),
            );
            meta.push(EmbeddingMeta { start: seg.start, end: seg.end, channel: id.clone() });
        }
    }
    EmbeddingSet::new(d, vectors, meta).map_err(|e| SceneError::Invalid(e.to_string()))
}

/// `sum_c |S_c| / (sum_c |S_c| + sum_c |mixture_c - S_c|)` per TF bin, 0
/// where both vanish.
fn oracle_masks(
    spec: &SceneSpec,
    image: &[Vec<f64>],
    mixture: &[Vec<f64>],
) -> Result<(TfMask, TfMask), SceneError> {
    let stft = Stft::new(spec.stft)?;
    let mut target: Option<Vec<f64>> = None;
    let mut other: Option<Vec<f64>> = None;
    for (s, x) in image.iter().zip(mixture) {
        let interference: Vec<f64> = x.iter().zip(s).map(|(a, b)| a - b).collect();
        let fs = stft.forward(s)?;
        let fi = stft.forward(&interference)?;
        let acc_s = target.get_or_insert_with(|| vec![0.0; fs.len()]);
        acc_s.iter_mut().zip(&fs).for_each(|(a, c)| *a += c.norm());
        let acc_i = other.get_or_insert_with(|| vec![0.0; fi.len()]);
        acc_i.iter_mut().zip(&fi).for_each(|(a, c)| *a += c.norm());
    }
    let (ts, is) = (target.unwrap_or_default(), other.unwrap_or_default());
    let values: Vec<f32> = ts
        .iter()
        .zip(&is)
        .map(|(s, i)| if s + i > 0.0 { (s / (s + i)).clamp(0.0, 1.0) as f32 } else { 0.0 })
        .collect();
    let bins = spec.stft.bins();
    let frames = values.len() / bins;
    let t = TfMask::new(values, frames, bins, MaskRole::Target).map_err(|e| SceneError::Invalid(e.to_string()))?;
    let n = t.complement();
    Ok((t, n))
}

pub fn simulate_scene(spec: &SceneSpec) -> Result<SceneTruth, SceneError> {
    spec.validate()?;
    let n = spec.num_samples();
    let sr = spec.sample_rate;
    let labels = spec.speaker_labels();
    let ids = spec.channel_ids();
    let groups = spec.groups();

    let segments = conversation(
        &mut stream_rng(spec.seed, stream::TURNS, 0, 0),
        &labels,
        spec.duration_s,
        spec.turn_s,
        spec.overlap_s,
    )?;
    let rttm = SegmentationHypothesis { session_id: spec.session_id.clone(), segments };

    let gates: Vec<Vec<f64>> = labels.iter().map(|l| activity_gate(&rttm.segments, l, n, sr)).collect();
    let mut sources: Vec<SourceSynthesis> = (0..spec.n_speakers)
        .into_par_iter()
        .map(|s| synthesize_source(spec, s, &gates[s], &groups))
        .collect();

    // level each source against unit-power noise over its active samples
    for (s, src) in sources.iter_mut().enumerate() {
        let active: Vec<usize> = (0..n).filter(|&i| gates[s][i] >= 0.5).collect();
        let power = src
            .images
            .iter()
            .map(|y| active.iter().map(|&i| y[i] * y[i]).sum::<f64>() / active.len().max(1) as f64)
            .sum::<f64>()
            / spec.n_mics as f64;
        let want = spec.snr(s).map_or(1.0, |db| 10f64.powf(db / 10.0));
        if power > 0.0 {
            let g = (want / power).sqrt();
            src.images.iter_mut().flatten().for_each(|v| *v *= g);
        }
    }
    let mut noise = spec.snr_db.as_ref().map(|_| synthesize_noise(spec, &groups));

    let mut mixture: Vec<Vec<f64>> = (0..spec.n_mics)
        .map(|m| {
            let mut x = noise.as_ref().map_or_else(|| vec![0.0; n], |v| v[m].clone());
            for src in &sources {
                x.iter_mut().zip(&src.images[m]).for_each(|(a, b)| *a += b);
            }
            x
        })
        .collect();
    let peak = mixture.iter().flatten().fold(0.0f64, |p, v| p.max(v.abs()));
    let gain = if peak > 0.9 { 0.9 / peak } else { 1.0 };
    if gain != 1.0 {
        let scale = |v: &mut Vec<Vec<f64>>| v.iter_mut().flatten().for_each(|x| *x *= gain);
        scale(&mut mixture);
        sources.iter_mut().for_each(|s| scale(&mut s.images));
        if let Some(v) = noise.as_mut() {
            scale(v);
        }
    }

    let masks: Vec<(TfMask, TfMask)> = sources
        .par_iter()
        .map(|src| oracle_masks(spec, &src.images, &mixture))
        .collect::<Result<_, _>>()?;

    let to_rec = |chans: &[Vec<f64>]| -> Result<MultichannelRecording, SceneError> {
        let waves = chans
            .iter()
            .zip(&ids)
            .map(|(x, id)| Waveform::from_f64(x, sr, id.clone()))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(MultichannelRecording::new(waves)?)
    };

    let mut c50_db = BTreeMap::new();
    for (m, id) in ids.iter().enumerate() {
        let mut sum = 0.0;
        for src in &sources {
            sum += c50_from_samples(&src.rirs[m], sr).map_err(|e| SceneError::Invalid(e.to_string()))?;
        }
        c50_db.insert(id.clone(), sum / sources.len() as f64);
    }

    Ok(SceneTruth {
        spec: spec.clone(),
        mixture: to_rec(&mixture)?,
        images: sources.iter().map(|s| to_rec(&s.images)).collect::<Result<_, _>>()?,
        noise: noise.as_deref().map(to_rec).transpose()?,
        rirs: sources
            .iter()
            .map(|s| {
                s.rirs
                    .iter()
                    .zip(&ids)
                    .map(|(h, id)| Waveform::from_f64(h, sr, id.clone()))
                    .collect::<Result<Vec<_>, _>>()
            })
            .collect::<Result<_, _>>()?,
        masks,
        embeddings: synthetic_embeddings(spec, &rttm, &labels)?,
        rttm,
        n_speakers: spec.n_speakers,
        c50_db,
        gain,
    })
}
