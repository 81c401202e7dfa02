use num_complex::{Complex32, Complex64};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::audio::MultichannelRecording;
use crate::fft::RealFft;

use super::CountError;

/// Symmetric matrix of inter-channel correlations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationMatrix {
    pub channel_ids: Vec<String>,
    /// Row-major `n x n`.
    pub values: Vec<f64>,
    /// Channels whose analysis window was silent; their rows are zero.
    pub silent: Vec<String>,
}

impl CorrelationMatrix {
    /// Builds a matrix from explicit values, checking shape, range and
    /// symmetry. The diagonal is forced to 1.
    pub fn from_values(channel_ids: Vec<String>, mut values: Vec<f64>) -> Result<Self, CountError> {
        let n = channel_ids.len();
        if values.len() != n * n {
            return Err(CountError::InvalidInput(format!(
                "{} values for {n} channels",
                values.len()
            )));
        }
        for i in 0..n {
            values[i * n + i] = 1.0;
            for j in 0..n {
                let v = values[i * n + j];
                if !(-1.0..=1.0).contains(&v) || (v - values[j * n + i]).abs() > 1e-12 {
                    return Err(CountError::InvalidInput(format!(
                        "correlation ({i}, {j}) = {v} is out of range or asymmetric"
                    )));
                }
            }
        }
        Ok(Self {
            channel_ids,
            values,
            silent: Vec::new(),
        })
    }

    pub fn len(&self) -> usize {
        self.channel_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.channel_ids.is_empty()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.len() + j]
    }
}

/// Lag-searched normalized cross-correlation settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CorrelationConfig {
    pub window_s: f64,
    pub max_lag_ms: f64,
}

impl Default for CorrelationConfig {
    fn default() -> Self {
        Self {
            window_s: 120.0,
            max_lag_ms: 100.0,
        }
    }
}

/// `corr[i][j] = max_{|l| <= max_lag} |sum_t x_i(t) x_j(t + l)| / sqrt(E_i E_j)`
/// over the first `window_s` seconds (all audio when the session is shorter).
pub fn channel_correlation(
    rec: &MultichannelRecording,
    cfg: &CorrelationConfig,
) -> Result<CorrelationMatrix, CountError> {
    let n_ch = rec.num_channels();
    if n_ch < 2 {
        return Err(CountError::InvalidInput(
            "channel correlation needs at least two channels".into(),
        ));
    }
    let sr = f64::from(rec.sample_rate());
    let len = rec.num_samples().min((cfg.window_s * sr).round() as usize);
    if len == 0 {
        return Err(CountError::InvalidInput("recording is empty".into()));
    }
    let max_lag = ((cfg.max_lag_ms * 1e-3 * sr).round() as usize).min(len - 1);
    let fft = RealFft::new((len + max_lag).next_power_of_two());

    let signals: Vec<Vec<f64>> = rec
        .channels()
        .iter()
        .map(|w| w.samples[..len].iter().map(|&s| f64::from(s)).collect())
        .collect();
    let energies: Vec<f64> = signals.iter().map(|x| x.iter().map(|v| v * v).sum()).collect();
    let silent: Vec<bool> = energies.iter().map(|&e| e <= 1e-12 * len as f64).collect();
    let spectra: Vec<Vec<Complex32>> = signals
        .par_iter()
        .map(|x| {
            fft.forward(x)
                .into_iter()
                .map(|c| Complex32::new(c.re as f32, c.im as f32))
                .collect()
        })
        .collect();

    let pairs: Vec<(usize, usize)> = (0..n_ch)
        .flat_map(|i| (i + 1..n_ch).map(move |j| (i, j)))
        .filter(|&(i, j)| !silent[i] && !silent[j])
        .collect();
    let peaks: Vec<f64> = pairs
        .par_iter()
        .map(|&(i, j)| {
            let cross: Vec<Complex64> = spectra[i]
                .iter()
                .zip(&spectra[j])
                .map(|(a, b)| {
                    let (a, b) = (
                        Complex64::new(a.re.into(), a.im.into()),
                        Complex64::new(b.re.into(), b.im.into()),
                    );
                    a.conj() * b
                })
                .collect();
            let xc = fft.inverse(&cross);
            let n = xc.len();
            let mut peak = xc[0].abs();
            for l in 1..=max_lag {
                peak = peak.max(xc[l].abs()).max(xc[n - l].abs());
            }
            // exact zero-lag term keeps identical channels at exactly 1
            let dot: f64 = signals[i].iter().zip(&signals[j]).map(|(a, b)| a * b).sum();
            let norm = (energies[i] * energies[j]).sqrt();
            (peak.max(dot.abs()) / norm).min(1.0)
        })
        .collect();

    let mut values = vec![0.0; n_ch * n_ch];
    for i in 0..n_ch {
        values[i * n_ch + i] = 1.0;
    }
    for (&(i, j), &v) in pairs.iter().zip(&peaks) {
        values[i * n_ch + j] = v;
        values[j * n_ch + i] = v;
    }
    Ok(CorrelationMatrix {
        channel_ids: rec.channel_ids(),
        values,
        silent: rec
            .channel_ids()
            .into_iter()
            .zip(&silent)
            .filter(|(_, &s)| s)
            .map(|(id, _)| id)
            .collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audio::Waveform;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    const SR: u32 = 16000;

    fn white(n: usize, seed: u64) -> Vec<f32> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                (0.1 * z) as f32
            })
            .collect()
    }

    fn rec(chans: Vec<Vec<f32>>) -> MultichannelRecording {
        MultichannelRecording::new(
            chans
                .into_iter()
                .enumerate()
                .map(|(i, s)| Waveform::new(s, SR, format!("{i}")).unwrap())
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn duplicate_channel_is_exactly_one() {
        let x = white(SR as usize * 2, 1);
        let m = channel_correlation(&rec(vec![x.clone(), x]), &CorrelationConfig::default()).unwrap();
        assert_eq!(m.get(0, 1), 1.0);
        assert_eq!(m.get(1, 0), 1.0);
    }

    #[test]
    fn delayed_copy_is_found_by_lag_search() {
        let x = white(SR as usize * 3, 2);
        let delay = (0.05 * f64::from(SR)) as usize;
        let mut y = vec![0.0f32; delay];
        y.extend_from_slice(&x[..x.len() - delay]);
        let m = channel_correlation(&rec(vec![x, y]), &CorrelationConfig::default()).unwrap();
        assert!(m.get(0, 1) >= 0.99, "{}", m.get(0, 1));
    }

    #[test]
    fn silent_channel_row_is_zero_and_flagged() {
        let x = white(SR as usize, 3);
        let m = channel_correlation(
            &rec(vec![x, vec![0.0; SR as usize]]),
            &CorrelationConfig::default(),
        )
        .unwrap();
        assert_eq!(m.get(0, 1), 0.0);
        assert_eq!(m.get(1, 1), 1.0);
        assert_eq!(m.silent, vec!["1".to_string()]);
        assert!(m.values.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn window_limits_the_analysis() {
        // identical for the first second, independent afterwards
        let x = white(SR as usize * 4, 4);
        let mut y = x.clone();
        y[SR as usize..].copy_from_slice(&white(SR as usize * 3, 5));
        let cfg = CorrelationConfig { window_s: 1.0, ..Default::default() };
        let m = channel_correlation(&rec(vec![x, y]), &cfg).unwrap();
        assert_eq!(m.get(0, 1), 1.0);
    }

    #[test]
    fn rejects_single_channel() {
        assert!(channel_correlation(&rec(vec![white(100, 1)]), &CorrelationConfig::default()).is_err());
    }
}
