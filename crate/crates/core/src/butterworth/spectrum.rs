//! FFT amplitude spectrum and energy-fraction cutoff selection.

use std::f64::consts::PI;

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::io::fmt_g9;

pub const MIN_SPECTRUM_SAMPLES: usize = 16;

/// Suggested cutoffs never exceed this fraction of Nyquist.
const NYQUIST_CLAMP: f64 = 0.99;

/// One-sided amplitude spectrum `(ω rad/s, amplitude)` of a uniformly
/// sampled real signal, rectangular window, DC included as the first bin.
/// Amplitudes are scaled so a unit sinusoid on a bin reads 1.
pub fn amplitude_spectrum(samples: &[f64], sample_rate: f64) -> Result<Vec<(f64, f64)>> {
    if samples.len() < MIN_SPECTRUM_SAMPLES {
        return Err(Error::TooFewSamples { need: MIN_SPECTRUM_SAMPLES, got: samples.len() });
    }
    if !(sample_rate.is_finite() && sample_rate > 0.0) {
        return Err(Error::InvalidSpec(format!("sample rate must be positive, got {sample_rate}")));
    }
    if samples.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("signal sample"));
    }
    let n = samples.len();
    let mut buf: Vec<Complex64> = samples.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let bin = 2.0 * PI * sample_rate / n as f64;
    Ok((0..=n / 2)
        .map(|k| {
            let edge = k == 0 || (n.is_multiple_of(2) && k == n / 2);
            let scale = if edge { 1.0 } else { 2.0 } / n as f64;
            (k as f64 * bin, buf[k].norm() * scale)
        })
        .collect())
}

/// Smallest frequency at which the cumulative squared amplitude (DC
/// excluded) reaches `energy_fraction` of the total, clamped below Nyquist.
///
/// Each bin stands for the band `[k − ½, k + ½]·Δω`, so the reported value
/// is the upper edge of the bin where the fraction is reached. A tone that
/// falls on a bin therefore yields a cutoff at most half a bin above it.
/// A signal with no energy away from DC has no meaningful cutoff; the
/// clamped Nyquist value is returned so filtering is a near no-op.
pub fn suggest_cutoff(samples: &[f64], sample_rate: f64, energy_fraction: f64) -> Result<f64> {
    suggest_cutoff_pooled(&[samples], sample_rate, energy_fraction)
}

/// [`suggest_cutoff`] over the summed energy of several equally long
/// channels, e.g. the three coordinates of a position track.
pub fn suggest_cutoff_pooled(channels: &[&[f64]], sample_rate: f64, energy_fraction: f64) -> Result<f64> {
    if !(energy_fraction > 0.0 && energy_fraction <= 1.0) {
        return Err(Error::InvalidParameter(format!("energy fraction must lie in (0, 1], got {energy_fraction}")));
    }
    let Some(first) = channels.first() else {
        return Err(Error::EmptyInput);
    };
    let mut energy: Vec<f64> = Vec::new();
    let mut bin = 0.0;
    for ch in channels {
        if ch.len() != first.len() {
            return Err(Error::DimensionMismatch(first.len(), ch.len()));
        }
        let spectrum = amplitude_spectrum(ch, sample_rate)?;
        bin = spectrum[1].0;
        energy.resize(spectrum.len(), 0.0);
        for (e, (_, a)) in energy.iter_mut().zip(&spectrum) {
            *e += a * a;
        }
    }
    let ceiling = NYQUIST_CLAMP * PI * sample_rate;
    let total: f64 = energy[1..].iter().sum();
    if total <= 0.0 {
        return Ok(ceiling);
    }
    let target = energy_fraction * total;
    let mut acc = 0.0;
    for (k, e) in energy.iter().enumerate().skip(1) {
        acc += e;
        // Tolerate rounding so fraction 1.0 stops at the last non-empty bin.
        if acc >= target * (1.0 - 1e-12) {
            return Ok(((k as f64 + 0.5) * bin).min(ceiling));
        }
    }
    Ok(ceiling)
}

/// Spectrum table as CSV: `omega_rad_s,amplitude`.
pub fn spectrum_to_csv(spectrum: &[(f64, f64)]) -> String {
    let mut s = String::from("omega_rad_s,amplitude\n");
    for (w, a) in spectrum {
        s.push_str(&format!("{},{}\n", fmt_g9(*w), fmt_g9(*a)));
    }
    s
}
