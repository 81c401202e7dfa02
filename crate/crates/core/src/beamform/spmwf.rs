use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::audio::Spectrogram;

use super::linalg::cholesky_solve;
use super::{estimate_covariances, BeamformError, CovariancePair, MaskRole, TfMask};

/// Relative diagonal loading of `R_n`: `R_n + eps * tr(R_n) / M * I`.
pub const DIAGONAL_LOADING: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BeamformConfig {
    pub mu: f64,
    pub mask_floor: f64,
    pub diagonal_loading: f64,
    /// Fixed reference channel index; `None` selects one per call.
    pub reference: Option<usize>,
}

impl Default for BeamformConfig {
    fn default() -> Self {
        Self {
            mu: 0.0,
            mask_floor: 0.1,
            diagonal_loading: DIAGONAL_LOADING,
            reference: None,
        }
    }
}

/// Per-bin filter weights `w_f` (applied as `w_f^H y`).
#[derive(Debug, Clone, PartialEq)]
pub struct FilterBank {
    pub weights: Vec<Vec<Complex64>>,
    pub reference: usize,
    pub mu: f64,
    /// Bins where `R_x e_r = 0`; their weights are zero.
    pub degenerate_bins: Vec<usize>,
}

#[derive(Serialize)]
struct FilterBankDump<'a> {
    reference: usize,
    mu: f64,
    degenerate_bins: &'a [usize],
    /// `[bin][channel] = [re, im]`
    weights: Vec<Vec<[f64; 2]>>,
}

impl FilterBank {
    pub fn channels(&self) -> usize {
        self.weights.first().map_or(0, Vec::len)
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(FilterBankDump {
            reference: self.reference,
            mu: self.mu,
            degenerate_bins: &self.degenerate_bins,
            weights: self
                .weights
                .iter()
                .map(|w| w.iter().map(|c| [c.re, c.im]).collect())
                .collect(),
        })
        .expect("filter bank serializes")
    }
}

fn loaded(rn: &[Complex64], m: usize, eps: f64) -> Vec<Complex64> {
    let tr: f64 = (0..m).map(|i| rn[i * m + i].re).sum();
    let mut out = rn.to_vec();
    for i in 0..m {
        out[i * m + i] += eps * tr / m as f64;
    }
    out
}

/// SP-MWF weights for reference `r`:
/// `w = a R_n^{-1} v / (mu a + v^H R_n^{-1} v)` with `v = R_x e_r`,
/// `a = e_r^H R_x e_r`.
pub fn spmwf_weights(cov: &CovariancePair, r: usize, mu: f64) -> Result<FilterBank, BeamformError> {
    spmwf_weights_loaded(cov, r, mu, DIAGONAL_LOADING)
}

pub fn spmwf_weights_loaded(
    cov: &CovariancePair,
    r: usize,
    mu: f64,
    eps: f64,
) -> Result<FilterBank, BeamformError> {
    let m = cov.channels;
    if r >= m {
        return Err(BeamformError::InvalidParameter(format!(
            "reference {r} out of range for {m} channels"
        )));
    }
    if !(mu >= 0.0 && mu.is_finite()) {
        return Err(BeamformError::InvalidParameter(format!("mu = {mu} must be >= 0")));
    }
    let per_bin: Vec<Option<Vec<Complex64>>> = (0..cov.bins())
        .into_par_iter()
        .map(|f| {
            let rx = &cov.rx[f];
            let v: Vec<Complex64> = (0..m).map(|i| rx[i * m + r]).collect();
            let a = rx[r * m + r].re;
            let u = cholesky_solve(&loaded(&cov.rn[f], m, eps), &v)
                .map_err(|_| BeamformError::SingularNoise { bin: f })?;
            let quad: f64 = v.iter().zip(&u).map(|(vi, ui)| (vi.conj() * ui).re).sum();
            let den = mu * a + quad;
            if !(den > 0.0) || !den.is_finite() || v.iter().all(|x| x.norm_sqr() == 0.0) {
                return Ok(None);
            }
            Ok(Some(u.into_iter().map(|ui| ui * (a / den)).collect()))
        })
        .collect::<Result<_, BeamformError>>()?;
    let degenerate_bins = per_bin
        .iter()
        .enumerate()
        .filter(|(_, w)| w.is_none())
        .map(|(f, _)| f)
        .collect();
    Ok(FilterBank {
        weights: per_bin
            .into_iter()
            .map(|w| w.unwrap_or_else(|| vec![Complex64::new(0.0, 0.0); m]))
            .collect(),
        reference: r,
        mu,
        degenerate_bins,
    })
}

/// `argmax_r sum_f R_x[r,r] / R_n[r,r]` (loaded noise diagonal), lowest
/// index on ties. Bins are summed in ascending order.
pub fn select_reference(cov: &CovariancePair) -> usize {
    let m = cov.channels;
    let score = |r: usize| -> f64 {
        let mut s = 0.0;
        for f in 0..cov.bins() {
            let rn = &cov.rn[f];
            let tr: f64 = (0..m).map(|i| rn[i * m + i].re).sum();
            let den = rn[r * m + r].re + DIAGONAL_LOADING * tr / m as f64;
            if den > 0.0 {
                s += cov.rx[f][r * m + r].re / den;
            }
        }
        s
    };
    let mut best = 0;
    let mut best_score = f64::NEG_INFINITY;
    for r in 0..m {
        let s = score(r);
        if s > best_score {
            best = r;
            best_score = s;
        }
    }
    best
}

/// `out(t, f) = w_f^H y(t, f)` as a single-channel spectrogram labelled with
/// the reference channel.
pub fn apply_filter(spec: &Spectrogram, fb: &FilterBank) -> Result<Spectrogram, BeamformError> {
    if fb.weights.len() != spec.bins() || fb.channels() != spec.channels() {
        return Err(BeamformError::Shape(format!(
            "filter is {} bins x {} channels, spectrogram is {} x {}",
            fb.weights.len(),
            fb.channels(),
            spec.bins(),
            spec.channels()
        )));
    }
    let mut out = Spectrogram::zeros(
        spec.frames(),
        vec![spec.channel_ids()[fb.reference].clone()],
        *spec.config(),
        spec.sample_rate(),
        spec.signal_len(),
    );
    let bins = spec.bins();
    out.data_mut()
        .par_iter_mut()
        .enumerate()
        .for_each(|(k, o)| {
            let (t, f) = (k / bins, k % bins);
            *o = fb.weights[f]
                .iter()
                .zip(spec.vector(t, f))
                .map(|(w, y)| w.conj() * y)
                .sum();
        });
    Ok(out)
}

/// `out = max(mask, floor) * in`, element-wise on a single-channel spectrogram.
pub fn mask_postfilter(
    spec: &Spectrogram,
    mask: &TfMask,
    floor: f64,
) -> Result<Spectrogram, BeamformError> {
    if spec.channels() != 1 {
        return Err(BeamformError::Shape(format!(
            "postfilter expects one channel, got {}",
            spec.channels()
        )));
    }
    mask.check_shape(spec.frames(), spec.bins())?;
    let mut out = spec.clone();
    for (o, &m) in out.data_mut().iter_mut().zip(mask.values()) {
        *o *= f64::from(m).max(floor);
    }
    Ok(out)
}

/// Full per-speaker chain: covariances, reference, SP-MWF, TF-mask postfilter.
/// Without an explicit noise mask, `1 - target` is used.
pub fn beamform_speaker(
    spec: &Spectrogram,
    target: &TfMask,
    noise: Option<&TfMask>,
    cfg: &BeamformConfig,
) -> Result<(Spectrogram, FilterBank), BeamformError> {
    if target.role() != MaskRole::Target {
        return Err(BeamformError::InvalidMask("first mask must be a target mask".into()));
    }
    let complement;
    let noise = match noise {
        Some(n) => n,
        None => {
            complement = target.complement();
            &complement
        }
    };
    let cov = estimate_covariances(spec, target, noise)?;
    let r = match cfg.reference {
        Some(r) => r,
        None => select_reference(&cov),
    };
    let fb = spmwf_weights_loaded(&cov, r, cfg.mu, cfg.diagonal_loading)?;
    let filtered = apply_filter(spec, &fb)?;
    Ok((mask_postfilter(&filtered, target, cfg.mask_floor)?, fb))
}
