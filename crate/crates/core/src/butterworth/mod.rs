//! Butterworth low-pass filtering.
//!
//! The analog filter with cutoff `ω_c` is `H(s) = 1 / B_n(s/ω_c)` where
//! `B_n(s) = Σ a_k s^k` is the normalized Butterworth polynomial (all roots
//! on the left half of the unit circle). Scaling by the cutoff turns the
//! coefficients into `a_k / ω_c^k`.
//!
//! Sampled signals are filtered by a discrete realization obtained from the
//! bilinear transform. The analog cutoff is pre-warped to
//! `2·f_s·tan(ω_c / 2f_s)` so the discrete −3 dB point lands exactly on
//! `ω_c`. The result is stored as a cascade of second-order sections.
//!
//! Filtering is causal and therefore delays the signal; the delay is not
//! compensated. [`filtfilt`] offers a non-causal zero-phase variant for
//! offline evaluation only.

mod smooth;
mod spectrum;

use std::f64::consts::PI;

use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use smooth::{
    auto_cutoff, filter_trajectory, CutoffPolicy, FilterMode, SmoothingConfig, DEFAULT_CUTOFF_MARGIN,
    DEFAULT_ENERGY_FRACTION,
};
pub use spectrum::{amplitude_spectrum, spectrum_to_csv, suggest_cutoff, suggest_cutoff_pooled, MIN_SPECTRUM_SAMPLES};

/// Order, cutoff (rad/s) and sample rate (Hz) of a low-pass filter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterSpec {
    pub order: usize,
    pub cutoff: f64,
    pub sample_rate: f64,
}

/// Second order, the lowest-delay choice for smoothing pose tracks.
pub const DEFAULT_ORDER: usize = 2;
/// Camera frame rate used as the default sample rate.
pub const DEFAULT_SAMPLE_RATE: f64 = 30.0;

impl FilterSpec {
    pub fn new(order: usize, cutoff: f64, sample_rate: f64) -> Result<Self> {
        let spec = FilterSpec { order, cutoff, sample_rate };
        spec.validate()?;
        Ok(spec)
    }

    /// Nyquist frequency in rad/s.
    pub fn nyquist(&self) -> f64 {
        PI * self.sample_rate
    }

    pub fn validate(&self) -> Result<()> {
        if self.order < 1 {
            return Err(Error::InvalidSpec(format!("order must be at least 1, got {}", self.order)));
        }
        if !(self.sample_rate.is_finite() && self.sample_rate > 0.0) {
            return Err(Error::InvalidSpec(format!("sample rate must be positive, got {}", self.sample_rate)));
        }
        if !(self.cutoff.is_finite() && self.cutoff > 0.0 && self.cutoff < self.nyquist()) {
            return Err(Error::InvalidSpec(format!(
                "cutoff {} rad/s must lie in (0, {}) (Nyquist at {} Hz sampling)",
                self.cutoff,
                self.nyquist(),
                self.sample_rate
            )));
        }
        Ok(())
    }
}

/// Normalized Butterworth polynomial `B_n(s)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalogPrototype {
    /// `a_0 … a_n`, ascending powers of `s`.
    pub coefficients: Vec<f64>,
}

impl AnalogPrototype {
    pub fn new(order: usize) -> Self {
        let mut poly = vec![Complex64::new(1.0, 0.0)];
        for p in prototype_poles(order) {
            // poly ← poly · (s − p)
            let mut next = vec![Complex64::new(0.0, 0.0); poly.len() + 1];
            for (k, c) in poly.iter().enumerate() {
                next[k + 1] += c;
                next[k] -= c * p;
            }
            poly = next;
        }
        AnalogPrototype { coefficients: poly.into_iter().map(|c| c.re).collect() }
    }

    pub fn order(&self) -> usize {
        self.coefficients.len() - 1
    }

    /// Denominator coefficients `a_k / ω_c^k` of the filter with cutoff `ω_c`.
    pub fn scaled(&self, cutoff: f64) -> Vec<f64> {
        self.coefficients.iter().enumerate().map(|(k, a)| a / cutoff.powi(k as i32)).collect()
    }

    pub fn roots(&self) -> Vec<Complex64> {
        prototype_poles(self.order())
    }

    /// `B_n(s)` by Horner's rule.
    pub fn eval(&self, s: Complex64) -> Complex64 {
        self.coefficients.iter().rev().fold(Complex64::new(0.0, 0.0), |acc, a| acc * s + a)
    }
}

/// Poles of the normalized prototype, `exp(jπ(2k + n − 1) / 2n)` for
/// `k = 1 … n`.
fn prototype_poles(order: usize) -> Vec<Complex64> {
    let n = order as f64;
    (1..=order).map(|k| Complex64::from_polar(1.0, PI * (2.0 * k as f64 + n - 1.0) / (2.0 * n))).collect()
}

/// Analog magnitude (dB) and unwrapped phase (degrees) of `1 / B_n(jω/ω_c)`.
///
/// Phase is the negated sum of the continuous angles of each first- and
/// second-order factor, so it decreases monotonically from 0 toward
/// `−n·90°`.
pub fn frequency_response(spec: &FilterSpec, omegas: &[f64]) -> Vec<(f64, f64)> {
    let n = spec.order;
    let dampings: Vec<f64> = (1..=n / 2).map(|k| 2.0 * (PI * (2 * k - 1) as f64 / (2.0 * n as f64)).sin()).collect();
    omegas
        .iter()
        .map(|&w| {
            let r = w / spec.cutoff;
            let mut phase = 0.0;
            for &d in &dampings {
                phase -= (d * r).atan2(1.0 - r * r);
            }
            if n % 2 == 1 {
                phase -= r.atan();
            }
            // |B_n(jr)|² = 1 + r^2n; ln_1p keeps the far passband resolvable.
            let db = -10.0 * (r.powi(2 * n as i32)).ln_1p() / std::f64::consts::LN_10;
            (db, phase.to_degrees())
        })
        .collect()
}

/// One direct-form-II-transposed biquad:
/// `y = (b0 + b1 z⁻¹ + b2 z⁻²) / (1 + a1 z⁻¹ + a2 z⁻²) · x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Section {
    pub b: [f64; 3],
    pub a: [f64; 2],
    state: [f64; 2],
}

impl Section {
    fn new(b: [f64; 3], a: [f64; 2]) -> Self {
        Section { b, a, state: [0.0; 2] }
    }

    pub fn dc_gain(&self) -> f64 {
        self.b.iter().sum::<f64>() / (1.0 + self.a[0] + self.a[1])
    }

    /// Largest pole modulus.
    pub fn pole_radius(&self) -> f64 {
        let [a1, a2] = self.a;
        let disc = Complex64::new(a1 * a1 - 4.0 * a2, 0.0).sqrt();
        let r1 = ((-a1 + disc) / 2.0).norm();
        let r2 = ((-a1 - disc) / 2.0).norm();
        r1.max(r2)
    }

    fn response(&self, z_inv: Complex64) -> Complex64 {
        let num = self.b[0] + z_inv * (self.b[1] + z_inv * self.b[2]);
        let den = 1.0 + z_inv * (self.a[0] + z_inv * self.a[1]);
        num / den
    }

    #[inline]
    fn process(&mut self, x: f64) -> f64 {
        let y = self.b[0] * x + self.state[0];
        self.state[0] = self.b[1] * x - self.a[0] * y + self.state[1];
        self.state[1] = self.b[2] * x - self.a[1] * y;
        y
    }

    /// Sets the delay registers to the steady state for constant input `x`.
    fn prime(&mut self, x: f64) -> f64 {
        let y = self.dc_gain() * x;
        self.state[1] = self.b[2] * x - self.a[1] * y;
        self.state[0] = y - self.b[0] * x;
        y
    }
}

/// A designed filter with its running state. One instance filters one
/// stream; clone it (or [`DiscreteFilter::reset`]) for another.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteFilter {
    spec: FilterSpec,
    pub gain: f64,
    pub sections: Vec<Section>,
}

/// Discretizes the Butterworth low-pass described by `spec`.
pub fn design(spec: &FilterSpec) -> Result<DiscreteFilter> {
    spec.validate()?;
    let fs2 = 2.0 * spec.sample_rate;
    let warped = fs2 * (spec.cutoff / fs2).tan();
    let bilinear = |s: Complex64| (fs2 + s) / (fs2 - s);
    let mut sections = Vec::new();
    let mut gain = 1.0;
    for p in prototype_poles(spec.order) {
        // Upper-half-plane member of each conjugate pair, plus the real pole.
        if p.im > 1e-12 {
            let z = bilinear(p * warped);
            let a = [-2.0 * z.re, z.norm_sqr()];
            let s = Section::new([1.0, 2.0, 1.0], a);
            gain /= s.dc_gain();
            sections.push(s);
        } else if p.im.abs() <= 1e-12 {
            let z = bilinear(p * warped).re;
            let s = Section::new([1.0, 1.0, 0.0], [-z, 0.0]);
            gain /= s.dc_gain();
            sections.push(s);
        }
    }
    Ok(DiscreteFilter { spec: *spec, gain, sections })
}

impl DiscreteFilter {
    pub fn spec(&self) -> &FilterSpec {
        &self.spec
    }

    pub fn reset(&mut self) {
        for s in &mut self.sections {
            s.state = [0.0; 2];
        }
    }

    pub fn dc_gain(&self) -> f64 {
        self.gain * self.sections.iter().map(Section::dc_gain).product::<f64>()
    }

    /// Complex response at `omega` rad/s (`z = e^{jω/f_s}`).
    pub fn response(&self, omega: f64) -> Complex64 {
        let z_inv = Complex64::from_polar(1.0, -omega / self.spec.sample_rate);
        self.sections.iter().fold(Complex64::new(self.gain, 0.0), |acc, s| acc * s.response(z_inv))
    }

    pub fn magnitude_db(&self, omega: f64) -> f64 {
        20.0 * self.response(omega).norm().log10()
    }

    /// Initializes every section as if `x` had been applied forever.
    pub fn prime(&mut self, x: f64) {
        let mut v = self.gain * x;
        for s in &mut self.sections {
            v = s.prime(v);
        }
    }

    #[inline]
    pub fn process(&mut self, x: f64) -> f64 {
        let mut v = self.gain * x;
        for s in &mut self.sections {
            v = s.process(v);
        }
        v
    }

    /// Causal filtering with the state primed on the first sample.
    pub fn filter(&mut self, samples: &[f64]) -> Result<Vec<f64>> {
        let first = *samples.first().ok_or(Error::EmptyInput)?;
        self.prime(first);
        Ok(samples.iter().map(|&x| self.process(x)).collect())
    }
}

/// Causal filtering of a uniformly sampled signal; see
/// [`DiscreteFilter::filter`].
pub fn filter_signal(filter: &mut DiscreteFilter, samples: &[f64]) -> Result<Vec<f64>> {
    filter.filter(samples)
}

/// Forward-backward filtering. Zero phase but non-causal: every output
/// depends on future samples, so this is for offline evaluation only.
pub fn filtfilt(filter: &DiscreteFilter, samples: &[f64]) -> Result<Vec<f64>> {
    let mut f = filter.clone();
    let mut forward = f.filter(samples)?;
    forward.reverse();
    let mut back = f.filter(&forward)?;
    back.reverse();
    Ok(back)
}

/// Bode table as CSV: `omega_rad_s,magnitude_db,phase_deg`.
pub fn bode_to_csv(omegas: &[f64], response: &[(f64, f64)]) -> String {
    use crate::io::fmt_g9;
    let mut s = String::from("omega_rad_s,magnitude_db,phase_deg\n");
    for (w, (m, p)) in omegas.iter().zip(response) {
        s.push_str(&format!("{},{},{}\n", fmt_g9(*w), fmt_g9(*m), fmt_g9(*p)));
    }
    s
}

/// `n` log-spaced frequencies from `lo` to `hi` inclusive.
pub fn log_space(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..n).map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp()).collect()
}
