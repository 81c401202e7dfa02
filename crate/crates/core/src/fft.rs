//! Real-signal FFT helpers on top of `rustfft`.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

/// Forward/inverse transform pair for real signals of a fixed length.
#[derive(Clone)]
pub struct RealFft {
    len: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for RealFft {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RealFft").field("len", &self.len).finish()
    }
}

impl RealFft {
    pub fn new(len: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            len,
            forward: planner.plan_fft_forward(len),
            inverse: planner.plan_fft_inverse(len),
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn bins(&self) -> usize {
        self.len / 2 + 1
    }

    /// One-sided spectrum of `input`, zero-padded (or truncated) to the
    /// transform length.
    pub fn forward(&self, input: &[f64]) -> Vec<Complex64> {
        let mut buf: Vec<Complex64> = (0..self.len)
            .map(|i| Complex64::new(input.get(i).copied().unwrap_or(0.0), 0.0))
            .collect();
        self.forward.process(&mut buf);
        buf.truncate(self.bins());
        buf
    }

    /// Inverse of [`RealFft::forward`], scaled by `1/len`.
    pub fn inverse(&self, spectrum: &[Complex64]) -> Vec<f64> {
        debug_assert_eq!(spectrum.len(), self.bins());
        let n = self.len;
        let mut buf = vec![Complex64::new(0.0, 0.0); n];
        buf[..spectrum.len()].copy_from_slice(spectrum);
        for k in 1..(n + 1) / 2 {
            buf[n - k] = spectrum[k].conj();
        }
        // the DC and Nyquist bins of a real signal are real
        buf[0].im = 0.0;
        if n % 2 == 0 {
            buf[n / 2].im = 0.0;
        }
        self.inverse.process(&mut buf);
        let scale = 1.0 / n as f64;
        buf.iter().map(|c| c.re * scale).collect()
    }
}

/// Linear convolution via FFT; output length is `a.len() + b.len() - 1`.
pub fn convolve(a: &[f64], b: &[f64]) -> Vec<f64> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let out_len = a.len() + b.len() - 1;
    let fft = RealFft::new(out_len.next_power_of_two());
    let fa = fft.forward(a);
    let fb = fft.forward(b);
    let prod: Vec<Complex64> = fa.iter().zip(&fb).map(|(x, y)| x * y).collect();
    let mut out = fft.inverse(&prod);
    out.truncate(out_len);
    out
}
