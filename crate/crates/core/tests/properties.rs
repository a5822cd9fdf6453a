use gmcs_core::analysis::{optimize_lo, sweep_repetition};
use gmcs_core::fit::{decompose_noise, fit_linear, fit_quadratic};
use gmcs_core::keyrate::mutual_information_ab;
use gmcs_core::model::{
    cmrr_from_delta, delta_from_cmrr, equivalent_input_noise, imbalance_delta, lo_fluctuation_noise, overlap_noise,
    BhdParams, ChannelParams, ElectronicNoise, LoParams, ModulationParams, NoiseBudget, ReceiverParams,
};
use gmcs_core::optimize::{grid, Spacing};
use gmcs_core::{secret_key_rate, OverlapModel, SystemParams};
use proptest::prelude::*;

fn params(v_a: f64, g: f64, eta: f64, beta: f64, eps_a: f64, n_ele: f64, eps_overlap: f64) -> SystemParams {
    SystemParams {
        modulation: ModulationParams::new(v_a).unwrap(),
        channel: ChannelParams::from_transmittance(g).unwrap(),
        receiver: ReceiverParams::new(eta, beta).unwrap(),
        lo: LoParams::new(1e8, 0.0).unwrap(),
        bhd: BhdParams::new(100e6, ElectronicNoise::Fixed(n_ele)).unwrap(),
        eps_a,
        n_leak: 0.0,
        overlap: OverlapModel::Fixed(eps_overlap),
        repetition_hz: None,
        nlo_path: None,
    }
}

fn table1() -> SystemParams {
    let mut p = params(16.9, 0.758, 0.44, 0.898, 0.056, 0.0, 0.044);
    p.bhd = BhdParams::new(100e6, ElectronicNoise::PerLo(4.0e7))
        .unwrap()
        .with_nlo_coeff(1.1e-10);
    p
}

fn budget() -> impl Strategy<Value = NoiseBudget> {
    (0.0..0.2f64, 0.0..0.2f64, 0.0..0.2f64, 0.0..0.2f64, 0.0..0.2f64).prop_map(|(a, o, l, k, e)| NoiseBudget {
        eps_a: a,
        eps_overlap: o,
        n_lo: l,
        n_leak: k,
        n_ele: e,
    })
}

proptest! {
    #[test]
    fn chi_decreases_with_transmission(b in budget(), g in 0.05..0.95f64, eta in 0.05..0.95f64, k in 1.01..1.5f64) {
        let chi = |g: f64, eta: f64| {
            let ch = ChannelParams::from_transmittance(g).unwrap();
            let rx = ReceiverParams::new(eta, 0.9).unwrap();
            equivalent_input_noise(&b, &ch, &rx).unwrap().chi
        };
        let base = chi(g, eta);
        let more_g = chi((g * k).min(1.0), eta);
        let more_eta = chi(g, (eta * k).min(1.0));
        prop_assert!(more_g < base);
        prop_assert!(more_eta < base);
    }

    #[test]
    fn overlap_grows_with_rate_and_modulation(v_a in 0.0..50.0f64, bw in 10e6..1e9f64, r in 0.05..2.0f64, k in 1.01..2.0f64) {
        let m = ModulationParams::new(v_a).unwrap();
        let base = overlap_noise(&m, bw, r * bw).unwrap();
        prop_assert!(overlap_noise(&m, bw, r * k * bw).unwrap() >= base);
        let bigger = ModulationParams::new(v_a + 1.0).unwrap();
        prop_assert!(overlap_noise(&bigger, bw, r * bw).unwrap() > base);
    }

    #[test]
    fn lo_noise_grows_with_every_factor(i in 1e5..1e10f64, f in 0.001..0.1f64, d in 1e-4..0.2f64, k in 1.01..2.0f64) {
        let lo = LoParams::new(i, f).unwrap();
        let base = lo_fluctuation_noise(&lo, d);
        prop_assert!(lo_fluctuation_noise(&LoParams::new(i * k, f).unwrap(), d) > base);
        prop_assert!(lo_fluctuation_noise(&LoParams::new(i, f * k).unwrap(), d) > base);
        prop_assert!(lo_fluctuation_noise(&lo, d * k) > base);
    }

    #[test]
    fn cmrr_round_trip(log_d in -6.0..(0.5f64.log10())) {
        let d = 10f64.powf(log_d);
        let back = delta_from_cmrr(cmrr_from_delta(d).unwrap().db()).unwrap();
        prop_assert!(((back - d) / d).abs() < 1e-9);
    }

    #[test]
    fn swapping_arms_flips_delta(t2 in 0.3..0.7f64, g1 in 0.5..2.0f64, g2 in 0.5..2.0f64) {
        let r2 = 1.0 - t2;
        let a = imbalance_delta(t2, r2, g1, g2).unwrap();
        let b = imbalance_delta(r2, t2, g2, g1).unwrap();
        prop_assert!((a.delta + b.delta).abs() < 1e-15);
        prop_assert_eq!(cmrr_from_delta(a.delta).unwrap(), cmrr_from_delta(b.delta).unwrap());
    }

    #[test]
    fn key_rate_never_improves_with_more_noise(
        v_a in 1.0..40.0f64, g in 0.2..1.0f64, eta in 0.2..1.0f64,
        eps_a in 0.0..0.1f64, n_ele in 0.0..0.1f64, ov in 0.0..0.1f64, which in 0usize..3, bump in 1e-4..0.05f64,
    ) {
        let p = params(v_a, g, eta, 0.9, eps_a, n_ele, ov);
        let mut q = p;
        match which {
            0 => q.eps_a += bump,
            1 => q.bhd.electronic_noise = ElectronicNoise::Fixed(n_ele + bump),
            _ => q.overlap = OverlapModel::Fixed(ov + bump),
        }
        if let (Ok(a), Ok(b)) = (secret_key_rate(&p), secret_key_rate(&q)) {
            // trusted noise can raise a negative rate when beta < 1
            if which != 1 || a.delta_i > 0.0 {
                prop_assert!(b.delta_i <= a.delta_i + 1e-12, "{} -> {}", a.delta_i, b.delta_i);
            }
        }
    }

    #[test]
    fn key_rate_affine_in_beta(v_a in 1.0..40.0f64, g in 0.2..1.0f64, eta in 0.2..1.0f64, b1 in 0.5..1.0f64, b2 in 0.5..1.0f64) {
        let r1 = secret_key_rate(&params(v_a, g, eta, b1, 0.05, 0.04, 0.0)).unwrap();
        let r2 = secret_key_rate(&params(v_a, g, eta, b2, 0.05, 0.04, 0.0)).unwrap();
        prop_assert!(((r1.delta_i - r2.delta_i) - (b1 - b2) * r1.i_ab).abs() < 1e-12);
        prop_assert_eq!(r1.i_be, r2.i_be);
    }

    #[test]
    fn eve_information_is_non_negative(v_a in 0.5..40.0f64, g in 0.01..1.0f64, eta in 0.1..1.0f64, b in budget()) {
        let mut p = params(v_a, g, eta, 0.9, b.eps_a, b.n_ele, b.eps_overlap);
        p.n_leak = b.n_leak;
        if let Ok(r) = secret_key_rate(&p) {
            prop_assert!(r.i_be >= -1e-12);
            prop_assert!(r.i_ab >= 0.0);
        }
    }

    #[test]
    fn mutual_information_falls_with_noise(v_a in 0.5..40.0f64, chi in 0.0..10.0f64, k in 0.01..1.0f64) {
        let m = ModulationParams::new(v_a).unwrap();
        prop_assert!(mutual_information_ab(&m, chi + k).unwrap() < mutual_information_ab(&m, chi).unwrap());
    }

    #[test]
    fn quadratic_fit_is_exact_on_clean_data(a in 1e-22..1e-18f64, b in 1e-11..1e-9f64, c in 0.0..0.1f64) {
        let pts: Vec<(f64, f64)> = (1..=10).map(|k| {
            let x = k as f64 * 1e8;
            (x, a * x * x + b * x + c)
        }).collect();
        let f = fit_quadratic(&pts).unwrap();
        prop_assert!(((f.a - a) / a).abs() < 1e-6);
        prop_assert!(((f.b - b) / b).abs() < 1e-6);
        let d = decompose_noise(&f).unwrap();
        prop_assert!(((d.c_lo - a / b) / (a / b)).abs() < 1e-6);
        prop_assert!((d.c_ele - c / b).abs() < 1e-6 * (c / b).max(1e6));
    }

    #[test]
    fn linear_fit_is_exact_on_clean_data(m in -5.0..5.0f64, k in -5.0..5.0f64) {
        let pts: Vec<(f64, f64)> = (0..8).map(|i| (i as f64, m * i as f64 + k)).collect();
        let f = fit_linear(&pts).unwrap();
        prop_assert!((f.slope - m).abs() < 1e-9);
        prop_assert!((f.intercept - k).abs() < 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn lo_optimum_is_stationary(c_ele in 1e6..1e8f64, c_lo in 1e-11..1e-9f64) {
        let mut p = table1();
        p.bhd = BhdParams::new(100e6, ElectronicNoise::PerLo(c_ele)).unwrap().with_nlo_coeff(c_lo);
        let o = optimize_lo(&p, 1e5, 1e11).unwrap();
        if o.boundary.is_none() {
            for k in [0.99, 1.01] {
                let r = secret_key_rate(&p.with_lo_photons(o.photons_per_pulse * k).unwrap()).unwrap();
                prop_assert!(r.delta_i <= o.result.delta_i + 1e-12);
            }
        }
    }
}

#[test]
fn trusted_noise_can_lift_a_negative_rate() {
    let p = params(32.6, 0.2, 0.2, 0.9, 0.0, 0.0, 0.0);
    let q = params(32.6, 0.2, 0.2, 0.9, 0.0, 0.1, 0.0);
    let (a, b) = (secret_key_rate(&p).unwrap(), secret_key_rate(&q).unwrap());
    assert!(a.delta_i < b.delta_i && b.delta_i < 0.0);
    let mut p1 = p;
    p1.receiver = ReceiverParams::new(0.2, 1.0).unwrap();
    let mut q1 = q;
    q1.receiver = p1.receiver;
    assert!(secret_key_rate(&q1).unwrap().delta_i <= secret_key_rate(&p1).unwrap().delta_i);
}

#[test]
fn repetition_sweep_agrees_with_finer_sweep() {
    let mut p = params(16.9, 0.758, 0.44, 0.898, 0.056, 0.045, 0.0);
    p.overlap = OverlapModel::Gaussian;
    let coarse = sweep_repetition(&p, &grid(1e6, 60e6, 60, Spacing::Linear).unwrap()).unwrap();
    let fine = sweep_repetition(&p, &grid(1e6, 60e6, 600, Spacing::Linear).unwrap()).unwrap();
    let cut = |s: &gmcs_core::analysis::SweepResult| s.first_zero_crossing(false).unwrap().x;
    assert!((coarse.peak.0 - fine.peak.0).abs() < 1e-3 * fine.peak.0);
    assert!((cut(&coarse) - cut(&fine)).abs() < 1e-6 * cut(&fine));
    assert!(((coarse.peak.1 - fine.peak.1) / fine.peak.1).abs() < 1e-9);
}
