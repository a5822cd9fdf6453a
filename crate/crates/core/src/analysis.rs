//! Parameter sweeps over the key-rate model and the LO-level optimizer.
//!
//! A sweep evaluates the key rate on a sorted grid, keeps negative rates so
//! that zero crossings can be located, and refines each crossing by bisection
//! between the bracketing grid points.

use alloc::vec::Vec;

use crate::error::{positive, Error, Result};
use crate::keyrate::{secret_key_rate, KeyRateResult, OverlapModel, SystemParams};
use crate::model::{ChannelParams, Imbalance, NloPath};
use crate::optimize::{golden_section_max, maximize, Boundary, Spacing};

/// Default number of grid points per sweep.
pub const DEFAULT_GRID_POINTS: usize = 200;

/// Relative tolerance on the LO photon number for [`optimize_lo`].
pub const LO_REL_TOL: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    Repetition,
    Cmrr,
    Lo,
    Distance,
}

impl SweepAxis {
    pub fn name(&self) -> &'static str {
        match self {
            SweepAxis::Repetition => "repetition_hz",
            SweepAxis::Cmrr => "cmrr_db",
            SweepAxis::Lo => "lo_photons_per_pulse",
            SweepAxis::Distance => "distance_km",
        }
    }

    pub fn unit(&self) -> &'static str {
        match self {
            SweepAxis::Repetition => "Hz",
            SweepAxis::Cmrr => "dB",
            SweepAxis::Lo => "photons/pulse",
            SweepAxis::Distance => "km",
        }
    }

    /// The rate each axis is judged by: per second where the repetition
    /// rate is part of the figure, per pulse otherwise.
    pub fn metric(&self) -> RateMetric {
        match self {
            SweepAxis::Repetition | SweepAxis::Distance => RateMetric::PerSecond,
            SweepAxis::Cmrr | SweepAxis::Lo => RateMetric::PerPulse,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RateMetric {
    PerPulse,
    PerSecond,
}

impl RateMetric {
    pub fn of(&self, r: &KeyRateResult) -> f64 {
        match self {
            RateMetric::PerPulse => r.delta_i,
            RateMetric::PerSecond => r.delta_i_per_second.unwrap_or(f64::NAN),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepPoint {
    pub x: f64,
    /// LO level used at this point (differs per point when re-optimized).
    pub lo_photons: f64,
    pub result: KeyRateResult,
}

/// Where the swept rate crosses a level, refined by bisection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LevelCrossing {
    pub label: &'static str,
    pub level: f64,
    pub x: f64,
    /// Grid points bracketing the crossing.
    pub bracket: (f64, f64),
    /// `true` when the rate goes from below to above `level` as `x` increases.
    pub rising: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub axis: SweepAxis,
    pub metric: RateMetric,
    /// Sorted by `x`.
    pub points: Vec<SweepPoint>,
    /// Index of the grid point with the largest rate.
    pub argmax: usize,
    /// Golden-section refinement of the maximum between the grid neighbours
    /// of `argmax`; equals the grid point when it lies on an end.
    pub peak: (f64, f64),
    /// Zero crossings of the rate (positive-key boundaries).
    pub zero_crossings: Vec<LevelCrossing>,
    /// Extra level crossings requested by the sweep (e.g. 90% of maximum).
    pub level_crossings: Vec<LevelCrossing>,
}

impl SweepResult {
    pub fn rate(&self, i: usize) -> f64 {
        self.metric.of(&self.points[i].result)
    }

    pub fn rates(&self) -> impl Iterator<Item = f64> + '_ {
        self.points.iter().map(move |p| self.metric.of(&p.result))
    }

    pub fn max_rate(&self) -> f64 {
        self.rate(self.argmax)
    }

    /// Largest grid `x` with a positive rate.
    pub fn last_positive_x(&self) -> Option<f64> {
        self.points
            .iter()
            .rev()
            .find(|p| self.metric.of(&p.result) > 0.0)
            .map(|p| p.x)
    }

    /// First crossing with the given direction.
    pub fn first_zero_crossing(&self, rising: bool) -> Option<&LevelCrossing> {
        self.zero_crossings.iter().find(|c| c.rising == rising)
    }
}

fn sorted_axis(xs: &[f64]) -> Result<Vec<f64>> {
    if xs.is_empty() {
        return Err(Error::InvalidRange("sweep range is empty"));
    }
    if xs.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidRange("sweep range contains non-finite values"));
    }
    let mut xs = xs.to_vec();
    xs.sort_by(|a, b| a.total_cmp(b));
    xs.dedup();
    Ok(xs)
}

/// Bisection for `g(x) = level` given a sign change on `[a, b]`.
fn bisect<F>(mut g: F, mut a: f64, mut b: f64, level: f64) -> Result<f64>
where
    F: FnMut(f64) -> Result<f64>,
{
    let above_a = g(a)? > level;
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if m <= a || m >= b || (b - a) <= 1e-13 * m.abs().max(1e-300) {
            break;
        }
        if (g(m)? > level) == above_a {
            a = m;
        } else {
            b = m;
        }
    }
    Ok(0.5 * (a + b))
}

fn crossings<F>(xs: &[f64], values: &[f64], level: f64, label: &'static str, mut g: F) -> Result<Vec<LevelCrossing>>
where
    F: FnMut(f64) -> Result<f64>,
{
    let mut out = Vec::new();
    for i in 0..xs.len().saturating_sub(1) {
        let (va, vb) = (values[i], values[i + 1]);
        if (va > level) != (vb > level) {
            let x = bisect(&mut g, xs[i], xs[i + 1], level)?;
            out.push(LevelCrossing {
                label,
                level,
                x,
                bracket: (xs[i], xs[i + 1]),
                rising: vb > level,
            });
        }
    }
    Ok(out)
}

/// Evaluate `eval` on every grid point and assemble a [`SweepResult`].
///
/// `fractions` lists extra levels as fractions of the grid maximum whose
/// crossings should be located (e.g. `0.9` for the 90%-of-max point).
pub fn run_sweep<F>(axis: SweepAxis, xs: &[f64], fractions: &[(&'static str, f64)], mut eval: F) -> Result<SweepResult>
where
    F: FnMut(f64) -> Result<SweepPoint>,
{
    let xs = sorted_axis(xs)?;
    let metric = axis.metric();
    let mut points = Vec::with_capacity(xs.len());
    for &x in &xs {
        points.push(eval(x)?);
    }
    let values: Vec<f64> = points.iter().map(|p| metric.of(&p.result)).collect();
    if values.iter().any(|v| v.is_nan()) {
        return Err(Error::InvalidParameter {
            name: "repetition_hz",
            value: f64::NAN,
            reason: "per-second sweep needs a repetition rate",
        });
    }
    let argmax = values
        .iter()
        .enumerate()
        .fold(0, |best, (i, v)| if *v > values[best] { i } else { best });

    let mut rate_at = |x: f64| eval(x).map(|p| metric.of(&p.result));

    let peak = if argmax == 0 || argmax == xs.len() - 1 {
        (xs[argmax], values[argmax])
    } else {
        let (a, b) = (xs[argmax - 1], xs[argmax + 1]);
        let m = golden_section_max(&mut rate_at, a, b, 1e-9 * xs[argmax].abs().max(1e-300))?;
        if m.value >= values[argmax] {
            (m.x, m.value)
        } else {
            (xs[argmax], values[argmax])
        }
    };

    let zero_crossings = crossings(&xs, &values, 0.0, "zero", &mut rate_at)?;
    let mut level_crossings = Vec::new();
    for &(label, frac) in fractions {
        let level = frac * values[argmax];
        level_crossings.extend(crossings(&xs, &values, level, label, &mut rate_at)?);
    }

    Ok(SweepResult {
        axis,
        metric,
        points,
        argmax,
        peak,
        zero_crossings,
        level_crossings,
    })
}

/// Key rate per second versus laser repetition rate, with the pulse-overlap
/// noise recomputed from the detector bandwidth at each rate.
pub fn sweep_repetition(params: &SystemParams, repetition_hz: &[f64]) -> Result<SweepResult> {
    if repetition_hz.iter().any(|&r| !(r > 0.0)) {
        return Err(Error::InvalidRange("repetition rates must be positive"));
    }
    let mut base = *params;
    base.overlap = OverlapModel::Gaussian;
    run_sweep(SweepAxis::Repetition, repetition_hz, &[], |r| {
        let p = base.with_repetition(r);
        Ok(SweepPoint {
            x: r,
            lo_photons: p.lo.photons_per_pulse(),
            result: secret_key_rate(&p)?,
        })
    })
}

/// Key rate per pulse versus detector CMRR, with `N_LO = I_LO f^2 delta^2`.
/// Also locates the 90%-of-maximum point.
pub fn sweep_cmrr(params: &SystemParams, cmrr_db: &[f64]) -> Result<SweepResult> {
    let mut base = *params;
    base.nlo_path = Some(NloPath::Physical);
    run_sweep(SweepAxis::Cmrr, cmrr_db, &[("90% of max", 0.9)], |db| {
        let mut p = base;
        p.bhd.imbalance = Some(Imbalance::CmrrDb(db));
        Ok(SweepPoint {
            x: db,
            lo_photons: p.lo.photons_per_pulse(),
            result: secret_key_rate(&p)?,
        })
    })
}

/// Key rate per pulse versus LO photon number.
pub fn sweep_lo(params: &SystemParams, photons: &[f64]) -> Result<SweepResult> {
    if photons.iter().any(|&n| !(n > 0.0)) {
        return Err(Error::InvalidRange("LO photon numbers must be positive"));
    }
    run_sweep(SweepAxis::Lo, photons, &[], |n| {
        let p = params.with_lo_photons(n)?;
        Ok(SweepPoint {
            x: n,
            lo_photons: n,
            result: secret_key_rate(&p)?,
        })
    })
}

/// Result of [`optimize_lo`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoOptimum {
    pub photons_per_pulse: f64,
    pub result: KeyRateResult,
    /// Set when the objective is monotone over the range and an end was returned.
    pub boundary: Option<Boundary>,
}

/// Maximize the per-pulse key rate over the LO photon number on
/// `[lo_min, hi_max]` (log-spaced bracketing grid, then golden section to
/// relative tolerance [`LO_REL_TOL`]).
pub fn optimize_lo(params: &SystemParams, lo_min: f64, lo_max: f64) -> Result<LoOptimum> {
    optimize_lo_grid(params, lo_min, lo_max, 61)
}

pub fn optimize_lo_grid(params: &SystemParams, lo_min: f64, lo_max: f64, n_grid: usize) -> Result<LoOptimum> {
    if !(lo_min > 0.0) || !(lo_min < lo_max) || !lo_max.is_finite() {
        return Err(Error::InvalidRange("LO range must satisfy 0 < min < max"));
    }
    let m = maximize(
        |n| Ok(secret_key_rate(&params.with_lo_photons(n)?)?.delta_i),
        lo_min,
        lo_max,
        n_grid,
        Spacing::Log,
        LO_REL_TOL,
    )?;
    let p = params.with_lo_photons(m.x)?;
    Ok(LoOptimum {
        photons_per_pulse: m.x,
        result: secret_key_rate(&p)?,
        boundary: m.boundary,
    })
}

/// Key rate per second versus fiber length, re-optimizing the LO level at
/// every distance.
pub fn sweep_distance(
    params: &SystemParams,
    distance_km: &[f64],
    loss_db_per_km: f64,
    lo_range: (f64, f64),
) -> Result<SweepResult> {
    positive("loss_db_per_km", loss_db_per_km)?;
    if distance_km.iter().any(|&d| !(d >= 0.0)) {
        return Err(Error::InvalidRange("distances must be non-negative"));
    }
    if params.repetition_hz.is_none() {
        return Err(Error::InvalidParameter {
            name: "repetition_hz",
            value: f64::NAN,
            reason: "distance sweep reports bits/s and needs a repetition rate",
        });
    }
    run_sweep(SweepAxis::Distance, distance_km, &[], |d| {
        let mut p = *params;
        p.channel = ChannelParams::from_distance(d, loss_db_per_km)?;
        let best = optimize_lo(&p, lo_range.0, lo_range.1)?;
        Ok(SweepPoint {
            x: d,
            lo_photons: best.photons_per_pulse,
            result: best.result,
        })
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{BhdParams, ElectronicNoise, LoParams, ModulationParams, ReceiverParams};
    use crate::optimize::grid;

    fn fig2() -> SystemParams {
        SystemParams {
            modulation: ModulationParams::new(16.9).unwrap(),
            channel: ChannelParams::from_transmittance(0.758).unwrap(),
            receiver: ReceiverParams::new(0.44, 0.898).unwrap(),
            lo: LoParams::new(1e8, 0.01).unwrap(),
            bhd: BhdParams::new(100e6, ElectronicNoise::Fixed(0.045)).unwrap(),
            eps_a: 0.056,
            n_leak: 0.0,
            overlap: OverlapModel::Gaussian,
            repetition_hz: None,
            nlo_path: None,
        }
    }

    fn table1() -> SystemParams {
        let mut p = fig2();
        p.bhd = BhdParams::new(100e6, ElectronicNoise::PerLo(4.0e7))
            .unwrap()
            .with_nlo_coeff(1.1e-10);
        p.overlap = OverlapModel::Fixed(0.044);
        p
    }

    #[test]
    fn repetition_sweep_peak_and_cutoff() {
        let xs = grid(1e6, 60e6, 200, Spacing::Linear).unwrap();
        let s = sweep_repetition(&fig2(), &xs).unwrap();
        assert!((s.peak.0 - 35.66e6).abs() < 0.05e6, "{:?}", s.peak);
        let cut = s.first_zero_crossing(false).unwrap();
        assert!((cut.x - 45.79e6).abs() < 0.05e6, "{:?}", cut);
        assert!(cut.bracket.0 <= cut.x && cut.x <= cut.bracket.1);
    }

    #[test]
    fn infinite_bandwidth_rate_strictly_increasing() {
        let mut p = fig2();
        p.bhd.bandwidth_hz = 1e15;
        let xs = grid(1e6, 60e6, 50, Spacing::Linear).unwrap();
        let s = sweep_repetition(&p, &xs).unwrap();
        let rates: Vec<f64> = s.rates().collect();
        assert!(rates.windows(2).all(|w| w[1] > w[0]));
        assert_eq!(s.argmax, rates.len() - 1);
    }

    #[test]
    fn smaller_modulation_moves_cutoff_up() {
        let xs = grid(1e6, 120e6, 300, Spacing::Linear).unwrap();
        let mut prev = 0.0;
        for v_a in [16.9, 8.0, 4.0] {
            let mut p = fig2();
            p.modulation = ModulationParams::new(v_a).unwrap();
            let s = sweep_repetition(&p, &xs).unwrap();
            let cut = s.first_zero_crossing(false).unwrap().x;
            assert!(cut > prev, "V_A = {v_a}: cutoff {cut} <= {prev}");
            prev = cut;
        }
    }

    #[test]
    fn cmrr_sweep_threshold_and_ninety_percent() {
        let mut p = fig2();
        p.overlap = OverlapModel::Fixed(0.0);
        let xs = grid(30.0, 80.0, 200, Spacing::Linear).unwrap();
        let s = sweep_cmrr(&p, &xs).unwrap();
        let thr = s.first_zero_crossing(true).unwrap().x;
        assert!((thr - 43.92).abs() < 0.05, "{thr}");
        let ninety = s.level_crossings.iter().find(|c| c.rising).unwrap().x;
        assert!((ninety - 55.14).abs() < 0.2, "{ninety}");
    }

    #[test]
    fn cmrr_plateau_is_eps_a_limited() {
        let mut p = fig2();
        p.overlap = OverlapModel::Fixed(0.0);
        let s = sweep_cmrr(&p, &[200.0, 300.0]).unwrap();
        let mut clean = p;
        clean.nlo_path = None;
        clean.bhd.imbalance = None;
        let limit = secret_key_rate(&clean).unwrap().delta_i;
        assert!((s.max_rate() - limit).abs() < 1e-12);
    }

    #[test]
    fn optimize_lo_table1() {
        let o = optimize_lo(&table1(), 1e6, 1e10).unwrap();
        assert!(o.boundary.is_none());
        assert!(
            (o.photons_per_pulse - 1.265e8).abs() < 0.01e8,
            "{}",
            o.photons_per_pulse
        );
        for k in [1.0 - 1e-3, 1.0 + 1e-3] {
            let r = secret_key_rate(&table1().with_lo_photons(o.photons_per_pulse * k).unwrap()).unwrap();
            assert!(r.delta_i <= o.result.delta_i);
        }
    }

    #[test]
    fn optimize_lo_monotone_cases() {
        let mut p = table1();
        p.bhd.nlo_empirical_coeff = Some(0.0);
        let o = optimize_lo(&p, 1e6, 1e10).unwrap();
        assert_eq!(o.boundary, Some(Boundary::Upper));
        assert_eq!(o.photons_per_pulse, 1e10);

        let mut p = table1();
        p.bhd.electronic_noise = ElectronicNoise::PerLo(0.0);
        let o = optimize_lo(&p, 1e6, 1e10).unwrap();
        assert_eq!(o.boundary, Some(Boundary::Lower));
        assert_eq!(o.photons_per_pulse, 1e6);

        assert!(optimize_lo(&p, 1e8, 1e6).is_err());
        assert!(optimize_lo(&p, 0.0, 1e6).is_err());
    }

    #[test]
    fn distance_sweep_short_table() {
        let p = table1().with_repetition(32e6);
        let s = sweep_distance(&p, &[0.0, 5.0, 10.0, 25.0], 0.21, (1e6, 1e10)).unwrap();
        assert_eq!(s.argmax, 0);
        assert!(s.rate(1) > 1e6);
        assert!(s.rate(3) < 0.0);
        assert_eq!(s.zero_crossings.len(), 1);
        assert!(sweep_distance(&p, &[1.0], 0.0, (1e6, 1e10)).is_err());
        assert!(sweep_distance(&table1(), &[1.0], 0.21, (1e6, 1e10)).is_err());
    }

    #[test]
    fn empty_range_rejected() {
        assert!(sweep_repetition(&fig2(), &[]).is_err());
        assert!(sweep_lo(&fig2(), &[]).is_err());
        assert!(sweep_repetition(&fig2(), &[-1.0, 2.0]).is_err());
    }

    #[test]
    fn unsorted_input_is_sorted() {
        let s = sweep_lo(&table1(), &[1e9, 1e7, 1e8, 1e7]).unwrap();
        let xs: Vec<f64> = s.points.iter().map(|p| p.x).collect();
        assert_eq!(xs, [1e7, 1e8, 1e9]);
    }
}
