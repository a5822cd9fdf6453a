//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use gmcs_core::analysis::{optimize_lo, sweep_cmrr, sweep_distance, sweep_repetition};
use gmcs_core::fit::{decompose_noise, fit_linear, fit_quadratic, QuadraticFit};
use gmcs_core::model::{
    cmrr_from_delta, delta_from_cmrr, lo_fluctuation_noise, overlap_noise, ArmBalance, BhdParams, ChannelParams,
    ElectronicNoise, Imbalance, LoParams, ModulationParams, NloPath, ReceiverParams,
};
use gmcs_core::montecarlo::{noise_vs_lo_scan, simulate_level, SimConfig};
use gmcs_core::optimize::{grid, Spacing};
use gmcs_core::{secret_key_rate, OverlapModel, SystemParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, Duration, fn() -> Outcome);

fn check(cond: bool, detail: String) -> Outcome {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn timed(limit: Duration, f: impl FnOnce() -> Outcome) -> Outcome {
    let start = Instant::now();
    let out = f();
    let elapsed = start.elapsed();
    let tag = format!("{:.3} s (limit {} s)", elapsed.as_secs_f64(), limit.as_secs());
    match out {
        Ok(d) if elapsed <= limit => Ok(format!("{d}; {tag}")),
        Ok(d) => Err(format!("{d}; too slow: {tag}")),
        Err(d) => Err(format!("{d}; {tag}")),
    }
}

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

fn repetition_sweep() -> Outcome {
    let xs = grid(1e6, 60e6, 300, Spacing::Linear).map_err(|e| e.to_string())?;
    let s = sweep_repetition(&fig2(), &xs).map_err(|e| e.to_string())?;
    let peak = s.peak.0 / 1e6;
    let cut = s.first_zero_crossing(false).ok_or("no cutoff")?.x / 1e6;
    check(
        (peak - 36.0).abs() <= 2.0 && (cut - 46.0).abs() <= 2.0,
        format!("argmax {peak:.2} MHz (36 +- 2), cutoff {cut:.2} MHz (46 +- 2)"),
    )
}

fn cmrr_sweep() -> Outcome {
    let mut p = fig2();
    p.overlap = OverlapModel::Fixed(0.0);
    let xs = grid(30.0, 80.0, 300, Spacing::Linear).map_err(|e| e.to_string())?;
    let s = sweep_cmrr(&p, &xs).map_err(|e| e.to_string())?;
    let thr = s.first_zero_crossing(true).ok_or("no threshold")?.x;
    let ninety = s.level_crossings.iter().find(|c| c.rising).ok_or("no 90% point")?.x;
    check(
        (thr - 44.0).abs() <= 1.0 && (ninety - 55.0).abs() <= 2.0,
        format!("threshold {thr:.2} dB (44 +- 1), 90% point {ninety:.2} dB (55 +- 2)"),
    )
}

fn lo_optimum() -> Outcome {
    let o = optimize_lo(&table1(), 1e6, 1e10).map_err(|e| e.to_string())?;
    check(
        o.boundary.is_none() && (o.photons_per_pulse - 1.3e8).abs() <= 0.2e8,
        format!("I_LO* = {:.4e} (1.3e8 +- 0.2e8)", o.photons_per_pulse),
    )
}

fn distance_sweep() -> Outcome {
    let p = table1().with_repetition(32e6);
    let d = grid(0.0, 30.0, 121, Spacing::Linear).map_err(|e| e.to_string())?;
    let s = sweep_distance(&p, &d, 0.21, (1e6, 1e10)).map_err(|e| e.to_string())?;
    let reach = s.first_zero_crossing(false).ok_or("no distance cutoff")?.x;
    let short = s
        .points
        .iter()
        .filter(|pt| pt.x <= 5.0)
        .map(|pt| pt.result.rate())
        .fold(f64::INFINITY, f64::min);
    check(
        (reach - 20.0).abs() <= 2.0 && short > 1e6,
        format!("max distance {reach:.2} km (20 +- 2), min rate over 0-5 km {short:.3e} b/s (> 1e6)"),
    )
}

fn decomposition() -> Outcome {
    let fit = QuadraticFit {
        a: 8.0e-20,
        b: 7.0e-10,
        c: 0.028,
        se_a: 0.0,
        se_b: 0.0,
        se_c: 0.0,
        r_squared: 1.0,
        n: 0,
    };
    let d = decompose_noise(&fit).map_err(|e| e.to_string())?;
    let ratio = d.shot_to_electronic_db(8.5e8);
    check(
        ((d.c_ele - 4.0e7) / 4.0e7).abs() <= 0.02
            && ((d.c_lo - 1.1e-10) / 1.1e-10).abs() <= 0.05
            && (ratio - 13.0).abs() <= 0.5,
        format!(
            "c_ele {:.4e}, c_lo {:.4e}, shot/electronic {ratio:.2} dB",
            d.c_ele, d.c_lo
        ),
    )
}

/// Variance-vs-LO scan over one decade; the seed and sizing are fixed here.
fn monte_carlo() -> Outcome {
    let mut cfg = SimConfig::oscilloscope_default();
    cfg.n_pulses = 50_000;
    cfg.seed = 1;
    cfg.arms = ArmBalance::from_delta(delta_from_cmrr(36.0).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    cfg.lo_fluctuation = 0.01;
    cfg.electronic_noise_rms_volts = cfg.electronic_rms_for_coefficient(4.0e7);
    let levels = grid(1e8, 1e9, 20, Spacing::Linear).map_err(|e| e.to_string())?;

    let scan = noise_vs_lo_scan(&cfg, &levels).map_err(|e| e.to_string())?;
    let pts: Vec<(f64, f64)> = scan.iter().map(|p| (p.photons_per_pulse, p.variance)).collect();
    let q = fit_quadratic(&pts).map_err(|e| e.to_string())?;
    let (a, b, _) = cfg.predicted_variance_coefficients();
    let a_err = (q.a - a) / a;

    let mut shot = cfg;
    shot.arms = ArmBalance::BALANCED;
    shot.lo_fluctuation = 0.0;
    shot.n_pulses = 20_000;
    let shot_scan = noise_vs_lo_scan(&shot, &levels).map_err(|e| e.to_string())?;
    let shot_pts: Vec<(f64, f64)> = shot_scan.iter().map(|p| (p.photons_per_pulse, p.variance)).collect();
    let lin = fit_linear(&shot_pts).map_err(|e| e.to_string())?;

    let repeat = [0, levels.len() - 1]
        .iter()
        .map(|&i| simulate_level(&cfg, &levels, i).map(|p| p == scan[i]))
        .collect::<Result<Vec<bool>, _>>()
        .map_err(|e| e.to_string())?;
    let deterministic = repeat.iter().all(|&same| same);

    check(
        a_err.abs() <= 0.10 && q.r_squared >= 0.999 && lin.r_squared >= 0.999 && deterministic,
        format!(
            "a/a_pred - 1 = {a_err:+.4} (|.| <= 0.10), quadratic R2 {:.6}, shot-only linear R2 {:.6} \
             (slope/b {:.4}), reruns identical: {deterministic}",
            q.r_squared,
            lin.r_squared,
            lin.slope / b
        ),
    )
}

fn trivial_limits() -> Outcome {
    let mut notes = Vec::new();
    let mut ok = true;

    let mut p = fig2();
    p.channel = ChannelParams::from_transmittance(1.0).unwrap();
    p.receiver = ReceiverParams::new(1.0, 0.95).unwrap();
    p.bhd = BhdParams::new(100e6, ElectronicNoise::Fixed(0.0)).unwrap();
    p.eps_a = 0.0;
    p.overlap = OverlapModel::Fixed(0.0);
    let r = secret_key_rate(&p).map_err(|e| e.to_string())?;
    let expect = 0.95 * 0.5 * (16.9f64 + 1.0).log2();
    let lossless = r.i_be.abs() < 1e-12 && (r.delta_i - expect).abs() < 1e-12;
    ok &= lossless;
    notes.push(format!(
        "lossless I_BE {:.1e}, dI err {:.1e}",
        r.i_be,
        r.delta_i - expect
    ));

    let lo = LoParams::new(1e9, 0.05).unwrap();
    let quiet = LoParams::new(1e9, 0.0).unwrap();
    let zero = lo_fluctuation_noise(&lo, 0.0) == 0.0 && lo_fluctuation_noise(&quiet, 0.1) == 0.0;
    ok &= zero;
    notes.push(format!("N_LO zero at delta=0 / f=0: {zero}"));

    let m = ModulationParams::new(16.9).unwrap();
    let ov = overlap_noise(&m, 100e6, 20e6).map_err(|e| e.to_string())?;
    ok &= ov < 1e-6;
    notes.push(format!("eps_overlap(R = B/5) {ov:.2e}"));

    let mut worst: f64 = 0.0;
    for k in 0..=600 {
        let delta = 10f64.powf(-6.0 + k as f64 * (6.0 + 0.5f64.log10()) / 600.0);
        let db = cmrr_from_delta(delta).map_err(|e| e.to_string())?.db();
        let back = delta_from_cmrr(db).map_err(|e| e.to_string())?;
        worst = worst.max(((back - delta) / delta).abs());
    }
    ok &= worst < 1e-9;
    notes.push(format!("CMRR round trip worst rel err {worst:.1e}"));

    check(ok, notes.join(", "))
}

/// Straight-line evaluation of the key rate from the model formulas.
struct Oracle {
    v_a: f64,
    g: f64,
    eta: f64,
    beta: f64,
    eps_a: f64,
    bandwidth: f64,
    rep: f64,
    photons: f64,
    f: f64,
    delta: f64,
    c_ele: f64,
    n_leak: f64,
}

impl Oracle {
    /// `(chi, i_ab, i_be, delta_i, per_second)`, or `None` when Eve's
    /// information is undefined.
    fn eval(&self) -> Option<(f64, f64, f64, f64, f64)> {
        let v = self.v_a + 1.0;
        let eg = self.eta * self.g;
        let eps_overlap = 2.0 * v * (-(self.bandwidth * self.bandwidth) / (self.rep * self.rep)).exp();
        let n_lo = self.photons * self.f * self.f * self.delta * self.delta;
        let n_bob = self.c_ele / self.photons;
        let eps_e = self.eps_a + eps_overlap + n_lo / eg + self.n_leak / eg;
        let eps = eps_e + n_bob / eg;
        let chi = (1.0 - eg) / eg + eps;
        let i_ab = 0.5 * ((v + chi) / (1.0 + chi)).log2();
        let inner = 1.0 - self.g + self.g * eps_e + self.g / v;
        let den = self.eta / inner + 1.0 - self.eta + n_bob;
        let num = eg * self.v_a + 1.0 + eg * eps;
        if !(inner > 0.0 && den > 0.0 && num > 0.0) {
            return None;
        }
        let i_be = 0.5 * (num / den).log2();
        let di = self.beta * i_ab - i_be;
        Some((chi, i_ab, i_be, di, di * self.rep))
    }

    fn params(&self) -> SystemParams {
        SystemParams {
            modulation: ModulationParams::new(self.v_a).unwrap(),
            channel: ChannelParams::from_transmittance(self.g).unwrap(),
            receiver: ReceiverParams::new(self.eta, self.beta).unwrap(),
            lo: LoParams::new(self.photons, self.f).unwrap(),
            bhd: BhdParams::new(self.bandwidth, ElectronicNoise::PerLo(self.c_ele))
                .unwrap()
                .with_imbalance(Imbalance::Delta(self.delta)),
            eps_a: self.eps_a,
            n_leak: self.n_leak,
            overlap: OverlapModel::Gaussian,
            repetition_hz: Some(self.rep),
            nlo_path: Some(NloPath::Physical),
        }
    }
}

fn oracle_equivalence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let (mut compared, mut undefined, mut worst) = (0usize, 0usize, 0.0f64);
    while compared < 1000 {
        let bandwidth = rng.random_range(20e6..500e6);
        let o = Oracle {
            v_a: rng.random_range(0.5..40.0),
            g: rng.random_range(0.01..=1.0),
            eta: rng.random_range(0.1..=1.0),
            beta: rng.random_range(0.8..=1.0),
            eps_a: rng.random_range(0.0..0.2),
            bandwidth,
            rep: rng.random_range(0.05..1.0) * bandwidth,
            photons: 10f64.powf(rng.random_range(6.0..10.0)),
            f: rng.random_range(0.0..0.05),
            delta: rng.random_range(-0.05..0.05),
            c_ele: rng.random_range(0.0..1e8),
            n_leak: rng.random_range(0.0..0.1),
        };
        let got = secret_key_rate(&o.params());
        match (o.eval(), got) {
            (None, Err(_)) => undefined += 1,
            (Some((chi, i_ab, i_be, di, dis)), Ok(r)) => {
                let rel = |x: f64, y: f64, scale: f64| ((x - y) / scale.max(f64::MIN_POSITIVE)).abs();
                let scale = (o.beta * i_ab).abs().max(i_be.abs());
                let errs = [
                    rel(r.chi, chi, chi.abs()),
                    rel(r.i_ab, i_ab, i_ab.abs()),
                    rel(r.i_be, i_be, i_be.abs()),
                    rel(r.delta_i, di, scale),
                    rel(r.delta_i_per_second.unwrap_or(f64::NAN), dis, scale * o.rep),
                ];
                let e = errs.iter().cloned().fold(0.0, f64::max);
                if e.is_nan() {
                    return Err(format!("NaN comparison at set {compared}"));
                }
                worst = worst.max(e);
                compared += 1;
            }
            (a, b) => return Err(format!("disagreement on definedness: oracle {a:?}, library {b:?}")),
        }
    }
    check(
        worst <= 1e-12,
        format!("{compared} sets, worst rel err {worst:.2e} (<= 1e-12), {undefined} undefined sets skipped by both"),
    )
}

fn main() -> ExitCode {
    let criteria: [Criterion; 8] = [
        ("1 repetition sweep", Duration::from_secs(1), repetition_sweep),
        ("2 CMRR sweep", Duration::from_secs(1), cmrr_sweep),
        ("3 LO optimum", Duration::from_secs(1), lo_optimum),
        ("4 distance sweep", Duration::from_secs(10), distance_sweep),
        ("5 noise decomposition", Duration::from_secs(60), decomposition),
        ("6 Monte Carlo vs analytic", Duration::from_secs(60), monte_carlo),
        ("7 trivial limits", Duration::from_secs(60), trivial_limits),
        ("8 oracle equivalence", Duration::from_secs(60), oracle_equivalence),
    ];
    let mut failed = 0;
    for (name, limit, run) in criteria {
        match timed(limit, run) {
            Ok(d) => println!("PASS criterion {name}: {d}"),
            Err(d) => {
                failed += 1;
                println!("FAIL criterion {name}: {d}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", 8 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
