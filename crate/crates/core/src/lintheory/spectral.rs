use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use super::ARModel;
use crate::error::{Error, Result};
use crate::tensor::Mat;

pub const DEFAULT_WINDOW_LEN: usize = 64;
pub const DEFAULT_HOP: usize = 8;
const WELCH_SEGMENT: usize = 256;

/// One-sided power spectral density on `[0, Nyquist]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralDensity {
    pub freqs: Vec<f64>,
    pub power: Vec<f64>,
}

impl SpectralDensity {
    pub fn bin_width(&self) -> f64 {
        if self.freqs.len() < 2 {
            0.0
        } else {
            self.freqs[1] - self.freqs[0]
        }
    }

    /// `Σ S(f) Δf`, the variance captured by the estimate.
    pub fn total_power(&self) -> f64 {
        self.power.iter().sum::<f64>() * self.bin_width()
    }

    pub fn argmax(&self) -> Option<(f64, f64)> {
        self.power
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, &p)| (self.freqs[i], p))
    }
}

/// Periodic Hann taper.
pub fn hann(n: usize) -> Vec<f64> {
    (0..n)
        .map(|k| 0.5 * (1.0 - (2.0 * PI * k as f64 / n as f64).cos()))
        .collect()
}

/// `S(f) = σ² Δt / |1 − Σ c_k e^{−i2πfkΔt}|²` on `n_freqs` points spanning `[0, 1/(2Δt)]`.
///
/// A model with zero innovation variance (an exact discretisation) is evaluated
/// with `σ² = 1`, giving the spectral shape.
pub fn ar_spectrum(model: &ARModel, n_freqs: usize) -> Result<SpectralDensity> {
    if n_freqs < 2 {
        return Err(Error::invalid("ar_spectrum needs n_freqs >= 2"));
    }
    let nyq = 0.5 / model.dt;
    let var = if model.noise_var > 0.0 { model.noise_var } else { 1.0 };
    let mut freqs = Vec::with_capacity(n_freqs);
    let mut power = Vec::with_capacity(n_freqs);
    for i in 0..n_freqs {
        let f = nyq * i as f64 / (n_freqs - 1) as f64;
        let mut denom = Complex64::new(1.0, 0.0);
        for (k, &c) in model.coeffs.iter().enumerate() {
            let ang = -2.0 * PI * f * (k + 1) as f64 * model.dt;
            denom -= c * Complex64::from_polar(1.0, ang);
        }
        freqs.push(f);
        power.push(var * model.dt / denom.norm_sqr());
    }
    Ok(SpectralDensity { freqs, power })
}

/// Windowed one-sided PSD of a single segment, scaled so `Σ S Δf` equals the mean
/// square of the tapered signal normalised by the taper energy.
fn segment_psd(seg: &[f64], window: &[f64], dt: f64, planner: &mut FftPlanner<f64>) -> Vec<f64> {
    let n = seg.len();
    let fft = planner.plan_fft_forward(n);
    let mut buf: Vec<Complex64> = seg
        .iter()
        .zip(window)
        .map(|(x, w)| Complex64::new(x * w, 0.0))
        .collect();
    fft.process(&mut buf);
    let wss: f64 = window.iter().map(|w| w * w).sum();
    let scale = dt / wss;
    let nbins = n / 2 + 1;
    (0..nbins)
        .map(|k| {
            let mut p = buf[k].norm_sqr() * scale;
            if k != 0 && !(n.is_multiple_of(2) && k == n / 2) {
                p *= 2.0;
            }
            p
        })
        .collect()
}

/// Mean-removed (per segment) Hann periodogram; Welch-averaged (50% overlap) when the series
/// is at least four segments long, segment length `min(256, len)`.
pub fn periodogram(series: &[f64], dt: f64) -> Result<SpectralDensity> {
    if series.len() < 8 {
        return Err(Error::invalid("periodogram needs at least 8 samples"));
    }
    if !(dt > 0.0) {
        return Err(Error::invalid("dt must be positive"));
    }
    let x = series;
    let seg_len = WELCH_SEGMENT.min(x.len());
    let nseg_len = if x.len() >= 4 * seg_len { seg_len } else { x.len() };
    let window = hann(nseg_len);
    let mut planner = FftPlanner::new();
    let hop = nseg_len / 2;
    let mut acc = vec![0.0; nseg_len / 2 + 1];
    let mut count = 0usize;
    let mut start = 0;
    while start + nseg_len <= x.len() {
        let seg = &x[start..start + nseg_len];
        let seg_mean = seg.iter().sum::<f64>() / nseg_len as f64;
        let seg: Vec<f64> = seg.iter().map(|v| v - seg_mean).collect();
        let p = segment_psd(&seg, &window, dt, &mut planner);
        for (a, v) in acc.iter_mut().zip(p) {
            *a += v;
        }
        count += 1;
        if nseg_len == x.len() {
            break;
        }
        start += hop;
    }
    let power = acc.into_iter().map(|v| v / count as f64).collect();
    let freqs = (0..nseg_len / 2 + 1)
        .map(|k| k as f64 / (nseg_len as f64 * dt))
        .collect();
    Ok(SpectralDensity { freqs, power })
}

/// Short-time power. `power` has one row per frequency bin and one column per frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrogram {
    pub freqs: Vec<f64>,
    /// Centre time (s) of every frame, relative to the first sample.
    pub times: Vec<f64>,
    pub power: Mat,
}

impl Spectrogram {
    pub fn n_frames(&self) -> usize {
        self.times.len()
    }

    /// Frequency bin with maximal power in each frame, and that power.
    pub fn ridge(&self) -> Vec<(usize, f64)> {
        (0..self.n_frames())
            .map(|c| {
                (0..self.freqs.len())
                    .map(|r| (r, self.power[(r, c)]))
                    .max_by(|a, b| a.1.total_cmp(&b.1))
                    .unwrap_or((0, 0.0))
            })
            .collect()
    }
}

/// Hann-windowed STFT power with `⌊(len − window_len)/hop⌋ + 1` frames (no mean removal).
pub fn spectrogram(series: &[f64], dt: f64, window_len: usize, hop: usize) -> Result<Spectrogram> {
    if window_len == 0 || window_len > series.len() {
        return Err(Error::invalid(format!(
            "window length {window_len} exceeds series length {}",
            series.len()
        )));
    }
    if hop == 0 {
        return Err(Error::invalid("hop must be >= 1"));
    }
    let frames = (series.len() - window_len) / hop + 1;
    let window = hann(window_len);
    let nbins = window_len / 2 + 1;
    let mut planner = FftPlanner::new();
    let mut power = Mat::zeros(nbins, frames);
    let mut times = Vec::with_capacity(frames);
    for c in 0..frames {
        let s = c * hop;
        let p = segment_psd(&series[s..s + window_len], &window, dt, &mut planner);
        for (r, v) in p.into_iter().enumerate() {
            power[(r, c)] = v;
        }
        times.push((s as f64 + 0.5 * (window_len - 1) as f64) * dt);
    }
    let freqs = (0..nbins).map(|k| k as f64 / (window_len as f64 * dt)).collect();
    Ok(Spectrogram { freqs, times, power })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Peak {
    pub freq: f64,
    pub power: f64,
    /// Peak power divided by the median power of the spectrum.
    pub prominence: f64,
}

/// Local maxima of `s`, strongest first, keeping those whose power is at least
/// `min_prominence` times the median power. Values below `1e-12 · max` are
/// treated as numerical zero and never reported.
pub fn dominant_peaks(s: &SpectralDensity, n: usize, min_prominence: f64) -> Vec<Peak> {
    let p = &s.power;
    let len = p.len();
    if len == 0 || n == 0 {
        return Vec::new();
    }
    let mut sorted = p.clone();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let median = if len % 2 == 1 {
        sorted[len / 2]
    } else {
        0.5 * (sorted[len / 2 - 1] + sorted[len / 2])
    };
    let pmax = sorted[len - 1];
    if !(pmax > 0.0) {
        return Vec::new();
    }
    let floor = 1e-12 * pmax;
    let mut peaks: Vec<Peak> = (0..len)
        .filter(|&i| {
            let left = i == 0 || p[i] > p[i - 1];
            let right = i + 1 == len || p[i] > p[i + 1];
            len > 1 && left && right && p[i] > floor
        })
        .map(|i| Peak {
            freq: s.freqs[i],
            power: p[i],
            prominence: if median > 0.0 { p[i] / median } else { f64::INFINITY },
        })
        .filter(|pk| pk.prominence >= min_prominence)
        .collect();
    peaks.sort_by(|a, b| b.power.total_cmp(&a.power));
    peaks.truncate(n);
    peaks
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::SdofParams;
    use crate::lintheory::sdof_ar2_closed_form;

    fn tone(f: f64, dt: f64, n: usize) -> Vec<f64> {
        (0..n).map(|k| (2.0 * PI * f * k as f64 * dt).sin()).collect()
    }

    #[test]
    fn single_tone_peak_location() {
        let s = periodogram(&tone(7.12, 0.04, 512), 0.04).unwrap();
        let (f, _) = s.argmax().unwrap();
        assert!((f - 7.12).abs() <= s.bin_width(), "{f}");
        let peaks = dominant_peaks(&s, 5, 3.0);
        assert!((peaks[0].freq - f).abs() < 1e-12);
        assert!(peaks[1..].iter().all(|p| p.power < 1e-4 * peaks[0].power), "{peaks:?}");
    }

    #[test]
    fn two_tones_give_two_peaks() {
        let a = tone(3.26, 0.04, 512);
        let b = tone(9.52, 0.04, 512);
        let x: Vec<f64> = a.iter().zip(&b).map(|(u, v)| u + v).collect();
        let s = periodogram(&x, 0.04).unwrap();
        let peaks = dominant_peaks(&s, 2, 3.0);
        assert_eq!(peaks.len(), 2);
        let mut fs: Vec<f64> = peaks.iter().map(|p| p.freq).collect();
        fs.sort_by(f64::total_cmp);
        assert!((fs[0] - 3.26).abs() <= s.bin_width());
        assert!((fs[1] - 9.52).abs() <= s.bin_width());
    }

    #[test]
    fn zero_series_has_zero_power() {
        let s = periodogram(&[0.0; 64], 0.1).unwrap();
        assert!(s.power.iter().all(|p| *p == 0.0));
        assert!(dominant_peaks(&s, 3, 3.0).is_empty());
    }

    #[test]
    fn flat_spectrum_has_no_peaks() {
        let s = SpectralDensity {
            freqs: (0..50).map(|i| i as f64).collect(),
            power: vec![1.0; 50],
        };
        assert!(dominant_peaks(&s, 3, 3.0).is_empty());
    }

    #[test]
    fn white_ar_spectrum_is_flat() {
        let m = ARModel::new(vec![0.0, 0.0], 0.04, 2.0).unwrap();
        let s = ar_spectrum(&m, 33).unwrap();
        assert!(s.power.iter().all(|p| (p - 0.08).abs() < 1e-15));
        assert!((s.freqs[32] - 12.5).abs() < 1e-12);
    }

    #[test]
    fn closed_form_sdof_spectra_peak_at_natural_frequency() {
        for (k, fnat) in [(2000.0, 7.118), (500.0, 3.559)] {
            let m = sdof_ar2_closed_form(&SdofParams::new(1.0, 0.5, k).unwrap(), 0.04).unwrap();
            let s = ar_spectrum(&m, 1001).unwrap();
            let (f, _) = s.argmax().unwrap();
            assert!((f - fnat).abs() < 0.3, "k={k}: {f}");
        }
    }

    #[test]
    fn spectrogram_frame_count_and_short_series() {
        let x = tone(2.0, 0.05, 200);
        let sg = spectrogram(&x, 0.05, 40, 40).unwrap();
        assert_eq!(sg.n_frames(), 5);
        let sg = spectrogram(&x, 0.05, DEFAULT_WINDOW_LEN, DEFAULT_HOP).unwrap();
        assert_eq!(sg.n_frames(), (200 - 64) / 8 + 1);
        assert!(spectrogram(&x[..10], 0.05, 64, 8).is_err());
    }

    #[test]
    fn constant_series_confined_to_dc_mainlobe() {
        let sg = spectrogram(&[3.0; 128], 0.1, 32, 8).unwrap();
        for c in 0..sg.n_frames() {
            let total: f64 = (0..sg.freqs.len()).map(|r| sg.power[(r, c)]).sum();
            let dc = sg.power[(0, c)];
            assert!(dc > 0.5 * total);
            let outside: f64 = (2..sg.freqs.len()).map(|r| sg.power[(r, c)]).sum();
            assert!(outside < 1e-20 * total, "{outside}");
        }
    }

    #[test]
    fn decaying_tone_ridge() {
        let dt = 0.04;
        let x: Vec<f64> = (0..600)
            .map(|k| {
                let t = k as f64 * dt;
                (-0.25 * t).exp() * (2.0 * PI * 7.12 * t).cos()
            })
            .collect();
        let sg = spectrogram(&x, dt, DEFAULT_WINDOW_LEN, DEFAULT_HOP).unwrap();
        let ridge = sg.ridge();
        let bin0 = ridge[0].0;
        assert!(ridge.iter().all(|(b, _)| *b == bin0));
        let smooth: Vec<f64> = ridge.windows(3).map(|w| (w[0].1 + w[1].1 + w[2].1) / 3.0).collect();
        assert!(smooth.windows(2).all(|w| w[1] < w[0]));
    }
}
