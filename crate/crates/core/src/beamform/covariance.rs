use num_complex::Complex64;
use rayon::prelude::*;

use crate::audio::Spectrogram;

use super::{BeamformError, MaskRole, TfMask};

/// Per-bin `M x M` target and noise spatial covariances, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct CovariancePair {
    pub channels: usize,
    pub rx: Vec<Vec<Complex64>>,
    pub rn: Vec<Vec<Complex64>>,
    pub frame_count: usize,
}

impl CovariancePair {
    pub fn bins(&self) -> usize {
        self.rx.len()
    }
}

/// `R_f = sum_t m(t,f) y y^H / sum_t m(t,f)` for one mask and bin.
fn weighted_covariance(
    spec: &Spectrogram,
    mask: &TfMask,
    bin: usize,
) -> Result<Vec<Complex64>, BeamformError> {
    let m = spec.channels();
    let mut r = vec![Complex64::new(0.0, 0.0); m * m];
    let mut total = 0.0;
    for t in 0..spec.frames() {
        let w = f64::from(mask.get(t, bin));
        if w == 0.0 {
            continue;
        }
        total += w;
        let y = spec.vector(t, bin);
        for i in 0..m {
            let wy = y[i] * w;
            for j in i..m {
                r[i * m + j] += wy * y[j].conj();
            }
        }
    }
    if total <= 0.0 {
        return Err(BeamformError::EmptyMask { role: mask.role(), bin });
    }
    for i in 0..m {
        r[i * m + i] = Complex64::new(r[i * m + i].re / total, 0.0);
        for j in i + 1..m {
            let v = r[i * m + j] / total;
            r[i * m + j] = v;
            r[j * m + i] = v.conj();
        }
    }
    Ok(r)
}

pub fn estimate_covariances(
    spec: &Spectrogram,
    target: &TfMask,
    noise: &TfMask,
) -> Result<CovariancePair, BeamformError> {
    target.check_shape(spec.frames(), spec.bins())?;
    noise.check_shape(spec.frames(), spec.bins())?;
    if target.role() == noise.role() {
        return Err(BeamformError::InvalidMask(format!(
            "both masks have role {:?}",
            target.role()
        )));
    }
    let (target, noise) = match target.role() {
        MaskRole::Target => (target, noise),
        MaskRole::Noise => (noise, target),
    };
    let pairs: Vec<(Vec<Complex64>, Vec<Complex64>)> = (0..spec.bins())
        .into_par_iter()
        .map(|f| Ok((weighted_covariance(spec, target, f)?, weighted_covariance(spec, noise, f)?)))
        .collect::<Result<_, BeamformError>>()?;
    let (rx, rn) = pairs.into_iter().unzip();
    Ok(CovariancePair {
        channels: spec.channels(),
        rx,
        rn,
        frame_count: spec.frames(),
    })
}
