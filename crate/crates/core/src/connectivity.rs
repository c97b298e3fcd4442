//! Coherence connectivity between channels of a multichannel recording.
//!
//! Each channel is band-pass filtered to `f ± 5 Hz`, convolved with a complex
//! Morlet wavelet centred at `f`, and the pairwise weight is
//!
//! ```text
//! w_ab = | Σ E_a E_b e^{j(ψ_a − ψ_b)} | / ( sqrt(Σ E_a²) · sqrt(Σ E_b²) )
//! ```
//!
//! with the sums taken away from the convolution transients at both ends.

use std::f64::consts::PI;

use nalgebra::Complex;

use crate::error::{Error, Result};
use crate::graph::{Adjacency, Matrix};

/// Half-width of the analysis band.
pub const HALF_BAND_HZ: f64 = 5.0;
/// Distance from the centre frequency at which the filter must reach its stopband.
pub const STOPBAND_OFFSET_HZ: f64 = 10.0;
pub const DEFAULT_CYCLES: f64 = 7.0;

/// Hamming-window transition width in units of `fs / taps`.
const HAMMING_TRANSITION: f64 = 3.3;

type C64 = Complex<f64>;

#[derive(Clone, Debug, PartialEq)]
pub struct TimeSeriesSet {
    /// Sampling rate in Hz.
    pub fs: f64,
    /// One channel per row.
    pub data: Matrix,
}

impl TimeSeriesSet {
    pub fn new(data: Matrix, fs: f64) -> Result<Self> {
        if !(fs > 0.0 && fs.is_finite()) {
            return Err(Error::InvalidParameter(format!("sampling rate {fs} must be positive")));
        }
        if data.nrows() == 0 || data.ncols() == 0 {
            return Err(Error::InvalidParameter("time series set is empty".into()));
        }
        crate::lowrank::check_finite(&data, "time series")?;
        Ok(TimeSeriesSet { fs, data })
    }

    pub fn channels(&self) -> usize {
        self.data.nrows()
    }

    pub fn samples(&self) -> usize {
        self.data.ncols()
    }

    pub fn channel(&self, i: usize) -> Vec<f64> {
        self.data.row(i).iter().copied().collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AnalyticSignal {
    pub amplitude: Vec<f64>,
    /// Wrapped to (−π, π].
    pub phase: Vec<f64>,
}

impl AnalyticSignal {
    fn from_complex(z: &[C64]) -> Self {
        AnalyticSignal {
            amplitude: z.iter().map(|c| c.norm()).collect(),
            phase: z.iter().map(|c| c.arg()).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.amplitude.len()
    }

    pub fn is_empty(&self) -> bool {
        self.amplitude.is_empty()
    }

    /// Phase with 2π jumps removed.
    pub fn unwrapped_phase(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.phase.len());
        let mut offset = 0.0;
        let mut prev: Option<f64> = None;
        for &ph in &self.phase {
            if let Some(p) = prev {
                let mut d = ph - p;
                while d > PI {
                    d -= 2.0 * PI;
                    offset -= 2.0 * PI;
                }
                while d < -PI {
                    d += 2.0 * PI;
                    offset += 2.0 * PI;
                }
            }
            out.push(ph + offset);
            prev = Some(ph);
        }
        out
    }
}

/// Centre frequency, sampling rate and wavelet width for the coherence pipeline.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CoherenceConfig {
    pub freq: f64,
    pub fs: f64,
    pub cycles: f64,
}

impl CoherenceConfig {
    pub fn new(freq: f64, fs: f64) -> Result<Self> {
        let cfg = CoherenceConfig {
            freq,
            fs,
            cycles: DEFAULT_CYCLES,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_cycles(mut self, cycles: f64) -> Result<Self> {
        self.cycles = cycles;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        check_band(self.freq, self.fs)?;
        if !(self.cycles > 0.0 && self.cycles.is_finite()) {
            return Err(Error::InvalidParameter(format!("cycle count {} must be positive", self.cycles)));
        }
        Ok(())
    }

    /// Temporal standard deviation of the wavelet envelope, in seconds.
    pub fn sigma_t(&self) -> f64 {
        self.cycles / (2.0 * PI * self.freq)
    }

    /// Samples dropped from each end before summing.
    pub fn edge_samples(&self) -> usize {
        (2.0 * self.sigma_t() * self.fs).ceil() as usize
    }
}

fn check_band(freq: f64, fs: f64) -> Result<()> {
    if !(fs > 0.0 && fs.is_finite()) {
        return Err(Error::InvalidParameter(format!("sampling rate {fs} must be positive")));
    }
    if !(freq > 0.0 && freq.is_finite()) {
        return Err(Error::InvalidParameter(format!("frequency {freq} must be positive")));
    }
    if freq + HALF_BAND_HZ >= fs / 2.0 {
        return Err(Error::InvalidParameter(format!(
            "band {freq} ± {HALF_BAND_HZ} Hz reaches the Nyquist frequency {} Hz",
            fs / 2.0
        )));
    }
    Ok(())
}

/// Windowed-sinc low-pass taps with cutoff `fc` (Hz); a unit impulse when the
/// cutoff is at or beyond Nyquist.
fn lowpass_taps(fc: f64, fs: f64, taps: usize) -> Vec<f64> {
    let mid = (taps / 2) as f64;
    if fc >= fs / 2.0 {
        let mut h = vec![0.0; taps];
        h[taps / 2] = 1.0;
        return h;
    }
    if fc <= 0.0 {
        return vec![0.0; taps];
    }
    let wc = 2.0 * fc / fs;
    (0..taps)
        .map(|k| {
            let t = k as f64 - mid;
            let sinc = if t == 0.0 { wc } else { (PI * wc * t).sin() / (PI * t) };
            let window = 0.54 - 0.46 * (2.0 * PI * k as f64 / (taps - 1) as f64).cos();
            sinc * window
        })
        .collect()
}

/// Band-pass taps for `freq ± 5 Hz`; the cutoffs sit midway between the
/// passband edge and the stopband at `freq ± 10 Hz`.
pub fn bandpass_taps(freq: f64, fs: f64) -> Result<Vec<f64>> {
    check_band(freq, fs)?;
    let transition = STOPBAND_OFFSET_HZ - HALF_BAND_HZ;
    let mut taps = (HAMMING_TRANSITION * fs / transition).ceil() as usize;
    if taps.is_multiple_of(2) {
        taps += 1;
    }
    let edge = 0.5 * (HALF_BAND_HZ + STOPBAND_OFFSET_HZ);
    let hi = lowpass_taps(freq + edge, fs, taps);
    let lo = lowpass_taps(freq - edge, fs, taps);
    Ok(hi.iter().zip(&lo).map(|(h, l)| h - l).collect())
}

/// Centred ("same") convolution with an odd-length symmetric kernel.
fn convolve_same(x: &[f64], h: &[f64]) -> Vec<f64> {
    let half = h.len() / 2;
    let n = x.len() as isize;
    (0..x.len())
        .map(|i| {
            let mut acc = 0.0;
            for (k, &hk) in h.iter().enumerate() {
                let j = i as isize + half as isize - k as isize;
                if j >= 0 && j < n {
                    acc += hk * x[j as usize];
                }
            }
            acc
        })
        .collect()
}

/// Zero-phase band-pass between `freq − 5` and `freq + 5` Hz.
///
/// The FIR is applied forward and then backward over an odd reflection of the
/// signal, so the output has the input's length and no phase shift.
pub fn bandpass(x: &[f64], freq: f64, fs: f64) -> Result<Vec<f64>> {
    let h = bandpass_taps(freq, fs)?;
    if x.len() <= h.len() {
        return Err(Error::InvalidParameter(format!(
            "signal of {} samples is not longer than the {}-tap filter",
            x.len(),
            h.len()
        )));
    }
    let pad = h.len().min(x.len() - 1);
    let first = x[0];
    let last = x[x.len() - 1];
    let mut ext = Vec::with_capacity(x.len() + 2 * pad);
    ext.extend((1..=pad).rev().map(|k| 2.0 * first - x[k]));
    ext.extend_from_slice(x);
    ext.extend((1..=pad).map(|k| 2.0 * last - x[x.len() - 1 - k]));

    let mut y = convolve_same(&ext, &h);
    y.reverse();
    let mut y = convolve_same(&y, &h);
    y.reverse();
    Ok(y[pad..pad + x.len()].to_vec())
}

/// Unit-energy complex Morlet wavelet sampled on ±4σ_t.
pub fn morlet_wavelet(freq: f64, fs: f64, cycles: f64) -> Vec<C64> {
    let sigma = cycles / (2.0 * PI * freq);
    let half = (4.0 * sigma * fs).ceil() as isize;
    let mut w: Vec<C64> = (-half..=half)
        .map(|k| {
            let t = k as f64 / fs;
            let envelope = (-t * t / (2.0 * sigma * sigma)).exp();
            C64::from_polar(envelope, 2.0 * PI * freq * t)
        })
        .collect();
    let norm = w.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
    for c in &mut w {
        *c /= norm;
    }
    w
}

fn morlet_transform(x: &[f64], freq: f64, fs: f64, cycles: f64) -> Vec<C64> {
    let w = morlet_wavelet(freq, fs, cycles);
    let half = (w.len() / 2) as isize;
    let n = x.len() as isize;
    (0..n)
        .map(|i| {
            let mut acc = C64::new(0.0, 0.0);
            for (k, wk) in w.iter().enumerate() {
                let j = i + half - k as isize;
                if j >= 0 && j < n {
                    acc += wk * x[j as usize];
                }
            }
            acc
        })
        .collect()
}

/// Instantaneous amplitude and phase at `freq` from a 7-cycle Morlet wavelet.
pub fn morlet_phase_amplitude(x: &[f64], freq: f64, fs: f64) -> Result<AnalyticSignal> {
    morlet_phase_amplitude_with(x, freq, fs, DEFAULT_CYCLES)
}

pub fn morlet_phase_amplitude_with(x: &[f64], freq: f64, fs: f64, cycles: f64) -> Result<AnalyticSignal> {
    if !(fs > 0.0) || !(freq > 0.0) || freq >= fs / 2.0 {
        return Err(Error::InvalidParameter(format!(
            "frequency {freq} Hz must lie strictly between 0 and Nyquist ({} Hz)",
            fs / 2.0
        )));
    }
    if !(cycles > 0.0) {
        return Err(Error::InvalidParameter(format!("cycle count {cycles} must be positive")));
    }
    Ok(AnalyticSignal::from_complex(&morlet_transform(x, freq, fs, cycles)))
}

/// Band-pass then wavelet-transform one channel.
fn analytic(x: &[f64], cfg: &CoherenceConfig) -> Result<Vec<C64>> {
    let filtered = bandpass(x, cfg.freq, cfg.fs)?;
    Ok(morlet_transform(&filtered, cfg.freq, cfg.fs, cfg.cycles))
}

fn coherence_of(a: &[C64], b: &[C64], edge: usize) -> Result<f64> {
    if a.len() <= 2 * edge {
        return Err(Error::InvalidParameter(format!(
            "signal of {} samples leaves nothing after dropping {edge} edge samples at each end",
            a.len()
        )));
    }
    let (a, b) = (&a[edge..a.len() - edge], &b[edge..b.len() - edge]);
    let mut cross = C64::new(0.0, 0.0);
    let (mut ea, mut eb) = (0.0, 0.0);
    for (za, zb) in a.iter().zip(b) {
        cross += za * zb.conj();
        ea += za.norm_sqr();
        eb += zb.norm_sqr();
    }
    if !(ea > 0.0) || !(eb > 0.0) {
        return Err(Error::ZeroEnergy);
    }
    Ok((cross.norm() / (ea.sqrt() * eb.sqrt())).min(1.0))
}

/// Coherence weight between two equally long signals.
pub fn coherence_edge(a: &[f64], b: &[f64], freq: f64, fs: f64) -> Result<f64> {
    coherence_edge_with(a, b, &CoherenceConfig::new(freq, fs)?)
}

pub fn coherence_edge_with(a: &[f64], b: &[f64], cfg: &CoherenceConfig) -> Result<f64> {
    cfg.validate()?;
    if a.len() != b.len() {
        return Err(Error::Dimension(format!(
            "signals have different lengths ({} vs {})",
            a.len(),
            b.len()
        )));
    }
    coherence_of(&analytic(a, cfg)?, &analytic(b, cfg)?, cfg.edge_samples())
}

#[derive(Clone, Debug)]
pub struct CoherenceGraph {
    pub adjacency: Adjacency,
    /// Pairs whose weight could not be computed and were set to zero.
    pub failed_pairs: Vec<(usize, usize)>,
}

/// All pairwise coherence weights of a recording.
pub fn coherence_graph(ts: &TimeSeriesSet, freq: f64) -> Result<CoherenceGraph> {
    coherence_graph_with(ts, &CoherenceConfig::new(freq, ts.fs)?)
}

pub fn coherence_graph_with(ts: &TimeSeriesSet, cfg: &CoherenceConfig) -> Result<CoherenceGraph> {
    cfg.validate()?;
    let p = ts.channels();
    let signals = (0..p)
        .map(|i| analytic(&ts.channel(i), cfg))
        .collect::<Result<Vec<_>>>()?;
    let edge = cfg.edge_samples();
    let mut weights = Matrix::zeros(p, p);
    let mut failed_pairs = Vec::new();
    for i in 0..p {
        for j in (i + 1)..p {
            match coherence_of(&signals[i], &signals[j], edge) {
                Ok(w) => {
                    weights[(i, j)] = w;
                    weights[(j, i)] = w;
                }
                Err(e) => {
                    log::warn!("coherence between channels {i} and {j} set to 0: {e}");
                    failed_pairs.push((i, j));
                }
            }
        }
    }
    Ok(CoherenceGraph {
        adjacency: Adjacency::new(weights)?,
        failed_pairs,
    })
}
