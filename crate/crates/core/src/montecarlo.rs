//! Time-domain Monte Carlo of a pulsed balanced homodyne detector.
//!
//! Each LO pulse draws a fluctuating intensity, Poisson photoelectron counts
//! in both arms, and renders the weighted difference as a Gaussian voltage
//! pulse on a uniformly sampled trace. Neighbouring pulses superpose, white
//! electronic noise is added per sample, and quadratures are recovered by
//! integrating a window around each pulse centre (or by reading the peak).
//!
//! Randomness comes from ChaCha8 streams keyed by `(seed, task, purpose)`,
//! so a scan run level-by-level in parallel reproduces the serial result and
//! toggling electronic noise leaves the photon draws untouched.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};

use crate::error::{Error, Result};
use crate::model::ArmBalance;

/// Photoelectron means at or above this use a moment-matched Gaussian.
pub const GAUSSIAN_POISSON_THRESHOLD: f64 = 1e4;

/// Largest tolerated relative bias of the mean LO intensity caused by
/// truncating the Gaussian fluctuation at zero.
pub const MAX_TRUNCATION_BIAS: f64 = 1e-6;

/// Rendered pulse extent on each side of the centre, in widths.
const KERNEL_HALF_WIDTHS: f64 = 8.0;

const ELEMENTARY_CHARGE: f64 = 1.602_176_634e-19;

/// How a quadrature is read from each pulse.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Readout {
    /// Sum of the window samples times the sample period.
    Window,
    /// The sample at the pulse centre.
    Peak,
}

/// Monte Carlo configuration for one LO level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimConfig {
    /// Mean LO photon number per pulse (0 allowed).
    pub lo_photons_per_pulse: f64,
    /// Relative RMS fluctuation of the LO intensity.
    pub lo_fluctuation: f64,
    pub arms: ArmBalance,
    /// Gaussian electrical pulse width `tau`.
    pub pulse_width_s: f64,
    pub repetition_hz: f64,
    pub sample_rate_hz: f64,
    pub window_s: f64,
    pub n_pulses: usize,
    pub seed: u64,
    /// Standard deviation of the white noise added to each sample.
    pub electronic_noise_rms_volts: f64,
    /// Peak voltage of the rendered pulse per net photoelectron.
    pub volts_per_photoelectron: f64,
    pub readout: Readout,
}

impl SimConfig {
    /// Oscilloscope-style defaults: 20 GS/s, 20 ns window, 32 MHz pulses,
    /// `tau = 1/B` for a 100 MHz detector, a balanced detector and a
    /// 22 kV/A transimpedance.
    pub fn oscilloscope_default() -> Self {
        let tau = 1.0 / 100e6;
        Self {
            lo_photons_per_pulse: 1e8,
            lo_fluctuation: 0.0,
            arms: ArmBalance::BALANCED,
            pulse_width_s: tau,
            repetition_hz: 32e6,
            sample_rate_hz: 20e9,
            window_s: 20e-9,
            n_pulses: 640,
            seed: 0,
            electronic_noise_rms_volts: 0.0,
            volts_per_photoelectron: peak_volts_per_photoelectron(22e3, tau),
            readout: Readout::Window,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidSimConfig(msg.into()));
        if !(self.lo_photons_per_pulse >= 0.0) || !self.lo_photons_per_pulse.is_finite() {
            return bad("lo_photons_per_pulse must be finite and >= 0");
        }
        if !(self.lo_fluctuation >= 0.0) {
            return bad("lo_fluctuation must be >= 0");
        }
        if !(self.pulse_width_s > 0.0) {
            return bad("pulse_width_s must be > 0");
        }
        if !(self.repetition_hz > 0.0) || !(self.sample_rate_hz > 0.0) {
            return bad("repetition_hz and sample_rate_hz must be > 0");
        }
        if !(self.window_s > 0.0) || self.window_s > 1.0 / self.repetition_hz * (1.0 + 1e-12) {
            return bad("window must satisfy 0 < window <= 1/R");
        }
        if self.window_samples() < 2 {
            return bad("fewer than 2 samples per integration window");
        }
        if self.window_samples() as f64 > self.period_samples() {
            return bad("window holds more samples than one repetition period");
        }
        if self.n_pulses < 2 {
            return bad("n_pulses must be >= 2");
        }
        if !(self.electronic_noise_rms_volts >= 0.0) {
            return bad("electronic_noise_rms_volts must be >= 0");
        }
        if !(self.volts_per_photoelectron > 0.0) {
            return bad("volts_per_photoelectron must be > 0");
        }
        let arms = self.arms;
        ArmBalance::new(arms.t2, arms.r2, arms.g1, arms.g2)?;
        let bias = truncation_bias(self.lo_fluctuation);
        if bias > MAX_TRUNCATION_BIAS {
            return Err(Error::InvalidSimConfig(format!(
                "LO fluctuation f = {} truncates the intensity distribution (relative mean bias {:.2e} > {:.0e})",
                self.lo_fluctuation, bias, MAX_TRUNCATION_BIAS
            )));
        }
        Ok(())
    }

    pub fn sample_period_s(&self) -> f64 {
        1.0 / self.sample_rate_hz
    }

    /// Samples per repetition period (may be fractional).
    pub fn period_samples(&self) -> f64 {
        self.sample_rate_hz / self.repetition_hz
    }

    pub fn window_samples(&self) -> usize {
        libm::round(self.window_s * self.sample_rate_hz) as usize
    }

    fn tau_samples(&self) -> f64 {
        self.pulse_width_s * self.sample_rate_hz
    }

    fn integer_period(&self) -> Option<usize> {
        let p = self.period_samples();
        let r = libm::round(p);
        ((p - r).abs() < 1e-9 * p).then_some(r as usize)
    }

    /// Pulse centre of pulse `k`, in samples.
    fn center(&self, k: usize) -> f64 {
        match self.integer_period() {
            Some(p) => (k * p + p / 2) as f64,
            None => {
                let p = self.period_samples();
                k as f64 * p + libm::floor(p / 2.0)
            }
        }
    }

    fn window_start(&self, k: usize) -> usize {
        libm::floor(self.center(k)) as usize - self.window_samples() / 2
    }

    pub fn trace_len(&self) -> usize {
        libm::ceil(self.n_pulses as f64 * self.period_samples()) as usize
    }

    /// Per-pulse weights `w_j`: the quadrature of pulse `k` picks up
    /// `w_j * d_{k+j}` from the difference signal `d` of pulse `k + j`.
    /// Index `j` runs over `-J..=J`; the returned vector is centred at `J`.
    pub fn readout_weights(&self) -> Vec<f64> {
        let p = self.period_samples();
        let reach = libm::ceil(KERNEL_HALF_WIDTHS * self.tau_samples() / p) as isize + 1;
        let k0 = self.n_pulses / 2;
        let c0 = self.center(k0);
        let start = self.window_start(k0) as f64;
        let m = self.window_samples();
        let two_tau2 = 2.0 * self.tau_samples() * self.tau_samples();
        (-reach..=reach)
            .map(|j| {
                let cj = c0 + j as f64 * p;
                match self.readout {
                    Readout::Window => {
                        (0..m)
                            .map(|s| {
                                let dt = start + s as f64 - cj;
                                libm::exp(-dt * dt / two_tau2)
                            })
                            .sum::<f64>()
                            * self.volts_per_photoelectron
                            * self.sample_period_s()
                    }
                    Readout::Peak => {
                        let dt = libm::floor(c0) - cj;
                        libm::exp(-dt * dt / two_tau2) * self.volts_per_photoelectron
                    }
                }
            })
            .collect()
    }

    /// Variance contributed to one quadrature by the white sample noise.
    pub fn electronic_quadrature_variance(&self) -> f64 {
        let s2 = self.electronic_noise_rms_volts * self.electronic_noise_rms_volts;
        match self.readout {
            Readout::Window => {
                let dt = self.sample_period_s();
                self.window_samples() as f64 * s2 * dt * dt
            }
            Readout::Peak => s2,
        }
    }

    /// Sum of squared readout weights (quadrature variance per unit
    /// difference-signal variance, neighbours included).
    pub fn weight_energy(&self) -> f64 {
        self.readout_weights().iter().map(|w| w * w).sum()
    }

    /// Analytic coefficients of quadrature variance versus mean LO photon
    /// number, `(a, b, c)` in `a I^2 + b I + c`.
    pub fn predicted_variance_coefficients(&self) -> (f64, f64, f64) {
        let w2 = self.weight_energy();
        let f = self.lo_fluctuation;
        let mean = self.arms.mean_response();
        (
            w2 * f * f * mean * mean,
            w2 * self.arms.shot_response(),
            self.electronic_quadrature_variance(),
        )
    }

    pub fn predicted_variance(&self) -> f64 {
        let (a, b, c) = self.predicted_variance_coefficients();
        let i = self.lo_photons_per_pulse;
        (a * i + b) * i + c
    }

    /// Analytic lag-1 correlation of interior quadratures.
    pub fn predicted_cc(&self) -> f64 {
        let w = self.readout_weights();
        let i = self.lo_photons_per_pulse;
        let f = self.lo_fluctuation;
        let mean = self.arms.mean_response();
        let var_d = i * self.arms.shot_response() + i * i * f * f * mean * mean;
        let lag: f64 = w.windows(2).map(|p| p[0] * p[1]).sum();
        let energy: f64 = w.iter().map(|x| x * x).sum();
        var_d * lag / (var_d * energy + self.electronic_quadrature_variance())
    }

    /// Per-sample electronic noise RMS whose integrated variance equals
    /// `c_ele` photons' worth of shot noise, i.e. `N_ele = c_ele / I_LO`.
    pub fn electronic_rms_for_coefficient(&self, c_ele: f64) -> f64 {
        let shot_per_photon = self.weight_energy() * self.arms.shot_response();
        let per_unit = match self.readout {
            Readout::Window => {
                let dt = self.sample_period_s();
                self.window_samples() as f64 * dt * dt
            }
            Readout::Peak => 1.0,
        };
        libm::sqrt(c_ele * shot_per_photon / per_unit)
    }
}

/// Peak pulse voltage per photoelectron for a transimpedance gain (V/A) and
/// Gaussian pulse width: `gain * e / (tau sqrt(2 pi))`.
pub fn peak_volts_per_photoelectron(transimpedance_ohm: f64, tau_s: f64) -> f64 {
    transimpedance_ohm * ELEMENTARY_CHARGE / (tau_s * libm::sqrt(2.0 * core::f64::consts::PI))
}

/// Relative upward bias of the mean of `1 + f g` (g standard normal) after
/// discarding draws with `1 + f g <= 0`.
pub fn truncation_bias(f: f64) -> f64 {
    if f == 0.0 {
        return 0.0;
    }
    let z = 1.0 / f;
    let pdf = libm::exp(-0.5 * z * z) / libm::sqrt(2.0 * core::f64::consts::PI);
    let tail = 0.5 * libm::erfc(z / core::f64::consts::SQRT_2);
    f * pdf / (1.0 - tail)
}

/// Sampled detector output with the integration window of every pulse.
#[derive(Debug, Clone, PartialEq)]
pub struct PulseTrace {
    pub sample_period_s: f64,
    pub samples: Vec<f64>,
    /// First sample index of each pulse window, strictly increasing.
    pub pulse_starts: Vec<usize>,
    pub window_len: usize,
}

impl PulseTrace {
    /// Segment raw samples into pulse windows: pulse `k` is centred at
    /// `offset_s + k / R` and its window spans `window_s` around the centre.
    /// Windows that would run past the end are dropped.
    pub fn segment(
        sample_period_s: f64,
        samples: Vec<f64>,
        repetition_hz: f64,
        window_s: f64,
        offset_s: f64,
    ) -> Result<Self> {
        if !(sample_period_s > 0.0) || !(repetition_hz > 0.0) || !(window_s > 0.0) || !(offset_s >= 0.0) {
            return Err(Error::InvalidSimConfig(
                "segmentation needs positive sample period, repetition rate and window".into(),
            ));
        }
        let window_len = libm::round(window_s / sample_period_s) as usize;
        if window_len < 2 {
            return Err(Error::InvalidSimConfig("fewer than 2 samples per window".into()));
        }
        let period = 1.0 / (repetition_hz * sample_period_s);
        if (window_len as f64) > period + 1e-9 {
            return Err(Error::InvalidSimConfig(
                "window longer than the repetition period".into(),
            ));
        }
        let offset = offset_s / sample_period_s;
        let mut pulse_starts = Vec::new();
        for k in 0.. {
            let center = libm::floor(offset + k as f64 * period);
            let half = (window_len / 2) as f64;
            if center < half {
                continue;
            }
            let start = (center - half) as usize;
            if start + window_len > samples.len() {
                break;
            }
            pulse_starts.push(start);
        }
        let trace = Self {
            sample_period_s,
            samples,
            pulse_starts,
            window_len,
        };
        trace.validate()?;
        Ok(trace)
    }

    pub fn validate(&self) -> Result<()> {
        if self.pulse_starts.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidSimConfig(
                "pulse_starts must be strictly increasing".into(),
            ));
        }
        for (index, &start) in self.pulse_starts.iter().enumerate() {
            let end = start + self.window_len;
            if end > self.samples.len() {
                return Err(Error::WindowOutOfBounds {
                    index,
                    start,
                    end,
                    len: self.samples.len(),
                });
            }
        }
        Ok(())
    }
}

/// One real quadrature per pulse window.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct QuadratureSeries {
    pub values: Vec<f64>,
}

impl QuadratureSeries {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    /// Unbiased sample variance; NaN with fewer than two values.
    pub fn variance(&self) -> f64 {
        let n = self.values.len();
        if n < 2 {
            return f64::NAN;
        }
        let m = self.mean();
        self.values.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1) as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
enum Purpose {
    Photons = 0,
    Electronic = 1,
}

fn stream(seed: u64, task: u64, purpose: Purpose) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(task.wrapping_mul(4).wrapping_add(purpose as u64));
    rng
}

fn photoelectrons<R: Rng>(rng: &mut R, mean: f64) -> Result<f64> {
    if mean <= 0.0 {
        return Ok(0.0);
    }
    if mean >= GAUSSIAN_POISSON_THRESHOLD {
        let g: f64 = rng.sample(StandardNormal);
        return Ok(mean + libm::sqrt(mean) * g);
    }
    let dist = Poisson::new(mean).map_err(|e| Error::InvalidSimConfig(format!("poisson({mean}): {e}")))?;
    Ok(dist.sample(rng))
}

/// Difference signal `G1 n1 - G2 n2` of every pulse.
fn difference_signals(cfg: &SimConfig, task: u64) -> Result<Vec<f64>> {
    let mut rng = stream(cfg.seed, task, Purpose::Photons);
    let arms = cfg.arms;
    let mut out = Vec::with_capacity(cfg.n_pulses);
    for _ in 0..cfg.n_pulses {
        let intensity = if cfg.lo_fluctuation > 0.0 {
            loop {
                let g: f64 = rng.sample(StandardNormal);
                let i = cfg.lo_photons_per_pulse * (1.0 + cfg.lo_fluctuation * g);
                if i > 0.0 || cfg.lo_photons_per_pulse == 0.0 {
                    break i.max(0.0);
                }
            }
        } else {
            cfg.lo_photons_per_pulse
        };
        let n1 = photoelectrons(&mut rng, intensity * arms.t2)?;
        let n2 = photoelectrons(&mut rng, intensity * arms.r2)?;
        out.push(arms.g1 * n1 - arms.g2 * n2);
    }
    Ok(out)
}

fn render(cfg: &SimConfig, diffs: &[f64], samples: &mut [f64]) {
    let len = samples.len() as isize;
    let tau = cfg.tau_samples();
    let two_tau2 = 2.0 * tau * tau;
    let half = libm::ceil(KERNEL_HALF_WIDTHS * tau) as isize;
    let scale = cfg.volts_per_photoelectron;

    if cfg.integer_period().is_some() {
        // integer centres: one shared kernel
        let kernel: Vec<f64> = (-half..=half)
            .map(|s| {
                let s = s as f64;
                libm::exp(-s * s / two_tau2)
            })
            .collect();
        for (k, &d) in diffs.iter().enumerate() {
            if d == 0.0 {
                continue;
            }
            let c = cfg.center(k) as isize;
            let lo = (c - half).max(0);
            let hi = (c + half).min(len - 1);
            let amp = d * scale;
            for s in lo..=hi {
                samples[s as usize] += amp * kernel[(s - c + half) as usize];
            }
        }
    } else {
        for (k, &d) in diffs.iter().enumerate() {
            if d == 0.0 {
                continue;
            }
            let c = cfg.center(k);
            let lo = (libm::floor(c) as isize - half).max(0);
            let hi = (libm::floor(c) as isize + half + 1).min(len - 1);
            let amp = d * scale;
            for s in lo..=hi {
                let dt = s as f64 - c;
                samples[s as usize] += amp * libm::exp(-dt * dt / two_tau2);
            }
        }
    }
}

/// Simulate one trace. `task` selects the random stream so that independent
/// runs sharing a seed (e.g. the levels of a scan) stay uncorrelated.
pub fn simulate_trace_task(cfg: &SimConfig, task: u64) -> Result<PulseTrace> {
    cfg.validate()?;
    let diffs = difference_signals(cfg, task)?;
    let mut samples = vec![0.0; cfg.trace_len()];
    render(cfg, &diffs, &mut samples);
    if cfg.electronic_noise_rms_volts > 0.0 {
        let mut rng = stream(cfg.seed, task, Purpose::Electronic);
        let rms = cfg.electronic_noise_rms_volts;
        for s in samples.iter_mut() {
            let g: f64 = rng.sample(StandardNormal);
            *s += rms * g;
        }
    }
    let pulse_starts = (0..cfg.n_pulses).map(|k| cfg.window_start(k)).collect();
    let trace = PulseTrace {
        sample_period_s: cfg.sample_period_s(),
        samples,
        pulse_starts,
        window_len: cfg.window_samples(),
    };
    trace.validate()?;
    Ok(trace)
}

/// Simulate a trace on task stream 0.
pub fn simulate_trace(cfg: &SimConfig) -> Result<PulseTrace> {
    simulate_trace_task(cfg, 0)
}

/// Per-pulse window integral: sum of the window samples times the sample period.
pub fn integrate_quadratures(trace: &PulseTrace, window_len: usize) -> Result<QuadratureSeries> {
    let len = trace.samples.len();
    let mut values = Vec::with_capacity(trace.pulse_starts.len());
    for (index, &start) in trace.pulse_starts.iter().enumerate() {
        let end = start + window_len;
        if end > len {
            return Err(Error::WindowOutOfBounds { index, start, end, len });
        }
        values.push(trace.samples[start..end].iter().sum::<f64>() * trace.sample_period_s);
    }
    Ok(QuadratureSeries { values })
}

/// Per-pulse sample at the window centre.
pub fn peak_quadratures(trace: &PulseTrace, window_len: usize) -> Result<QuadratureSeries> {
    let len = trace.samples.len();
    let mut values = Vec::with_capacity(trace.pulse_starts.len());
    for (index, &start) in trace.pulse_starts.iter().enumerate() {
        let end = start + window_len;
        if end > len {
            return Err(Error::WindowOutOfBounds { index, start, end, len });
        }
        values.push(trace.samples[start + window_len / 2]);
    }
    Ok(QuadratureSeries { values })
}

/// Quadratures of a trace using the configured readout.
pub fn read_quadratures(trace: &PulseTrace, readout: Readout) -> Result<QuadratureSeries> {
    match readout {
        Readout::Window => integrate_quadratures(trace, trace.window_len),
        Readout::Peak => peak_quadratures(trace, trace.window_len),
    }
}

/// Simulate and read out one configuration on the given task stream.
pub fn simulate_quadratures(cfg: &SimConfig, task: u64) -> Result<QuadratureSeries> {
    let trace = simulate_trace_task(cfg, task)?;
    read_quadratures(&trace, cfg.readout)
}

/// Lag-1 correlation of consecutive quadratures.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Correlation {
    Defined(f64),
    /// One of the two subsequences has zero variance.
    Undefined,
}

impl Correlation {
    pub fn value(&self) -> Option<f64> {
        match *self {
            Correlation::Defined(v) => Some(v),
            Correlation::Undefined => None,
        }
    }
}

/// Pearson correlation between `X(n)` and `X(n+1)` over all consecutive pairs,
/// each subsequence using its own mean and standard deviation.
pub fn correlation_coefficient(series: &QuadratureSeries) -> Result<Correlation> {
    let x = &series.values;
    if x.len() < 3 {
        return Err(Error::InvalidRange("correlation needs at least 3 values"));
    }
    let (lead, lag) = (&x[..x.len() - 1], &x[1..]);
    let n = lead.len() as f64;
    let m0 = lead.iter().sum::<f64>() / n;
    let m1 = lag.iter().sum::<f64>() / n;
    let (mut cov, mut v0, mut v1) = (0.0, 0.0, 0.0);
    for (a, b) in lead.iter().zip(lag) {
        let (da, db) = (a - m0, b - m1);
        cov += da * db;
        v0 += da * da;
        v1 += db * db;
    }
    // spread at the rounding level of the mean counts as constant
    let floor = |m: f64| n * (64.0 * f64::EPSILON * m) * (64.0 * f64::EPSILON * m);
    if v0 <= floor(m0) || v1 <= floor(m1) {
        return Ok(Correlation::Undefined);
    }
    Ok(Correlation::Defined((cov / libm::sqrt(v0 * v1)).clamp(-1.0, 1.0)))
}

/// One level of an LO scan.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoScanPoint {
    pub photons_per_pulse: f64,
    pub variance: f64,
    pub mean: f64,
    pub n: usize,
}

/// Simulate level `index` of an LO scan (task stream = `index`).
pub fn simulate_level(template: &SimConfig, lo_levels: &[f64], index: usize) -> Result<LoScanPoint> {
    let photons = *lo_levels
        .get(index)
        .ok_or(Error::InvalidRange("level index out of range"))?;
    let cfg = SimConfig {
        lo_photons_per_pulse: photons,
        ..*template
    };
    let q = simulate_quadratures(&cfg, index as u64)?;
    Ok(LoScanPoint {
        photons_per_pulse: photons,
        variance: q.variance(),
        mean: q.mean(),
        n: q.len(),
    })
}

pub(crate) fn check_levels(lo_levels: &[f64]) -> Result<()> {
    let mut sorted = lo_levels.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    sorted.dedup();
    if sorted.len() < 3 {
        return Err(Error::InvalidRange("LO scan needs at least 3 distinct levels"));
    }
    Ok(())
}

/// Quadrature variance at every LO level, ready for a quadratic fit.
pub fn noise_vs_lo_scan(template: &SimConfig, lo_levels: &[f64]) -> Result<Vec<LoScanPoint>> {
    check_levels(lo_levels)?;
    template.validate()?;
    (0..lo_levels.len())
        .map(|i| simulate_level(template, lo_levels, i))
        .collect()
}
