use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::audio::{write_wav, write_wav_multichannel, SampleFormat, StftConfig};
use crate::beamform::write_mask;
use crate::count::write_embeddings;
use crate::scoring::write_rttm;
use crate::select::write_c50_scores;

use super::{SceneError, SceneSpec, SceneTruth};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskFiles {
    pub target: String,
    pub noise: String,
}

/// Paths relative to the session directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestFiles {
    pub channels: Vec<String>,
    pub references: BTreeMap<String, String>,
    pub noise: Option<String>,
    pub masks: BTreeMap<String, MaskFiles>,
    pub rttm: String,
    pub c50: String,
    pub embeddings: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub session_id: String,
    pub sample_rate: u32,
    pub num_samples: usize,
    pub channel_ids: Vec<String>,
    pub speakers: Vec<String>,
    pub n_speakers: usize,
    pub stft: StftConfig,
    pub gain: f64,
    pub files: ManifestFiles,
    pub spec: SceneSpec,
}

/// Writes the scene in the session layout: `ch-<id>.wav`, `refs/`, `masks/`,
/// `emb/`, `ref.rttm`, `c50.json` and `manifest.json`.
pub fn write_scene(dir: impl AsRef<Path>, truth: &SceneTruth) -> Result<Manifest, SceneError> {
    let dir = dir.as_ref();
    for sub in ["refs", "masks", "emb"] {
        std::fs::create_dir_all(dir.join(sub))?;
    }
    let labels = truth.spec.speaker_labels();
    let mut channels = Vec::new();
    for w in truth.mixture.channels() {
        let name = format!("ch-{}.wav", w.channel_id);
        write_wav(dir.join(&name), w)?;
        channels.push(name);
    }
    let mut references = BTreeMap::new();
    let mut masks = BTreeMap::new();
    for (s, label) in labels.iter().enumerate() {
        let name = format!("refs/{label}.wav");
        write_wav_multichannel(dir.join(&name), &truth.images[s], SampleFormat::Float32)?;
        references.insert(label.clone(), name);
        let files = MaskFiles {
            target: format!("masks/{label}-target.msk"),
            noise: format!("masks/{label}-noise.msk"),
        };
        let io = |e: crate::beamform::BeamformError| SceneError::Invalid(e.to_string());
        write_mask(dir.join(&files.target), &truth.masks[s].0).map_err(io)?;
        write_mask(dir.join(&files.noise), &truth.masks[s].1).map_err(io)?;
        masks.insert(label.clone(), files);
    }
    let noise = match &truth.noise {
        Some(rec) => {
            write_wav_multichannel(dir.join("refs/noise.wav"), rec, SampleFormat::Float32)?;
            Some("refs/noise.wav".to_string())
        }
        None => None,
    };
    write_rttm(dir.join("ref.rttm"), std::slice::from_ref(&truth.rttm))
        .map_err(|e| SceneError::Invalid(e.to_string()))?;
    write_c50_scores(dir.join("c50.json"), &truth.c50_db)?;
    write_embeddings(dir.join("emb/embeddings.emb"), &truth.embeddings)
        .map_err(|e| SceneError::Invalid(e.to_string()))?;

    let manifest = Manifest {
        session_id: truth.spec.session_id.clone(),
        sample_rate: truth.spec.sample_rate,
        num_samples: truth.mixture.num_samples(),
        channel_ids: truth.mixture.channel_ids(),
        speakers: labels,
        n_speakers: truth.n_speakers,
        stft: truth.spec.stft,
        gain: truth.gain,
        files: ManifestFiles {
            channels,
            references,
            noise,
            masks,
            rttm: "ref.rttm".into(),
            c50: "c50.json".into(),
            embeddings: "emb/embeddings.emb".into(),
        },
        spec: truth.spec.clone(),
    };
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| SceneError::Invalid(e.to_string()))?;
    std::fs::write(dir.join("manifest.json"), text + "\n")?;
    Ok(manifest)
}
