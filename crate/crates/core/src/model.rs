//! Domain types and closed-form excess-noise formulas for a GMCS QKD link
//! read out by a practical balanced homodyne detector (BHD).
//!
//! Every noise figure is a dimensionless value in shot-noise units. Each
//! budget component is either *input-referred* (quoted at the channel input,
//! before losses) or *output-referred* (quoted at Bob's detector); the two are
//! related by the overall transmission `eta * G`.

use crate::error::{non_negative, positive, unit_interval, Error, Result};

/// Alice's Gaussian modulation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModulationParams {
    v_a: f64,
}

impl ModulationParams {
    /// `v_a` is Alice's modulation variance in shot-noise units.
    ///
    /// `v_a = 0` (vacuum) is accepted as a limit case.
    pub fn new(v_a: f64) -> Result<Self> {
        non_negative("v_a", v_a).map(|v_a| Self { v_a })
    }

    pub fn v_a(&self) -> f64 {
        self.v_a
    }

    /// Quadrature variance of Alice's coherent state, `V = V_A + 1`.
    pub fn variance(&self) -> f64 {
        self.v_a + 1.0
    }
}

/// Channel transmittance, either given directly or derived from a fiber span.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelParams {
    transmittance: f64,
    span: Option<FiberSpan>,
}

/// Fiber length and attenuation from which the transmittance is derived.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FiberSpan {
    pub distance_km: f64,
    pub loss_db_per_km: f64,
}

impl ChannelParams {
    pub fn from_transmittance(g: f64) -> Result<Self> {
        Ok(Self {
            transmittance: unit_interval("transmittance_g", g)?,
            span: None,
        })
    }

    /// `G = 10^(-loss * L / 10)`.
    pub fn from_distance(distance_km: f64, loss_db_per_km: f64) -> Result<Self> {
        non_negative("distance_km", distance_km)?;
        non_negative("loss_db_per_km", loss_db_per_km)?;
        let g = libm::pow(10.0, -loss_db_per_km * distance_km / 10.0);
        if g <= 0.0 {
            return Err(Error::InvalidParameter {
                name: "distance_km",
                value: distance_km,
                reason: "transmittance underflows to zero",
            });
        }
        Ok(Self {
            transmittance: g,
            span: Some(FiberSpan {
                distance_km,
                loss_db_per_km,
            }),
        })
    }

    pub fn transmittance(&self) -> f64 {
        self.transmittance
    }

    pub fn span(&self) -> Option<FiberSpan> {
        self.span
    }
}

/// Bob's total detection efficiency and the reconciliation efficiency.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReceiverParams {
    eta: f64,
    beta: f64,
}

impl ReceiverParams {
    pub fn new(eta: f64, beta: f64) -> Result<Self> {
        Ok(Self {
            eta: unit_interval("eta", eta)?,
            beta: unit_interval("beta", beta)?,
        })
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }
}

/// Local oscillator pulse: photon number per pulse and relative RMS fluctuation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoParams {
    photons_per_pulse: f64,
    fractional_fluctuation: f64,
}

impl LoParams {
    pub fn new(photons_per_pulse: f64, fractional_fluctuation: f64) -> Result<Self> {
        Ok(Self {
            photons_per_pulse: positive("photons_per_pulse", photons_per_pulse)?,
            fractional_fluctuation: non_negative("fractional_fluctuation", fractional_fluctuation)?,
        })
    }

    pub fn photons_per_pulse(&self) -> f64 {
        self.photons_per_pulse
    }

    pub fn fractional_fluctuation(&self) -> f64 {
        self.fractional_fluctuation
    }

    pub fn with_photons(self, photons_per_pulse: f64) -> Result<Self> {
        Self::new(photons_per_pulse, self.fractional_fluctuation)
    }
}

/// Beam-splitter and amplifier-gain description of the two detector arms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArmBalance {
    /// Splitter power transmittance `t^2`.
    pub t2: f64,
    /// Splitter power reflectance `r^2`.
    pub r2: f64,
    /// Time-integrated gain of arm 1.
    pub g1: f64,
    /// Time-integrated gain of arm 2.
    pub g2: f64,
}

impl ArmBalance {
    pub const BALANCED: ArmBalance = ArmBalance {
        t2: 0.5,
        r2: 0.5,
        g1: 1.0,
        g2: 1.0,
    };

    pub fn new(t2: f64, r2: f64, g1: f64, g2: f64) -> Result<Self> {
        let arms = Self { t2, r2, g1, g2 };
        arms.validate()?;
        Ok(arms)
    }

    fn validate(&self) -> Result<()> {
        non_negative("t2", self.t2)?;
        non_negative("r2", self.r2)?;
        if (self.t2 + self.r2 - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParameter {
                name: "t2 + r2",
                value: self.t2 + self.r2,
                reason: "splitter must be lossless (t2 + r2 = 1)",
            });
        }
        positive("g1", self.g1)?;
        positive("g2", self.g2)?;
        Ok(())
    }

    /// Mean difference signal per LO photon, `G1 t^2 - G2 r^2`.
    pub fn mean_response(&self) -> f64 {
        self.g1 * self.t2 - self.g2 * self.r2
    }

    /// Shot-noise variance per LO photon, `G1^2 t^2 + G2^2 r^2`.
    pub fn shot_response(&self) -> f64 {
        self.g1 * self.g1 * self.t2 + self.g2 * self.g2 * self.r2
    }

    /// Pick a lossless splitter and gains that realize imbalance `delta`
    /// with equal gains.
    ///
    /// With `G1 = G2 = 1` the exact imbalance is `(t^2 - r^2)/sqrt(t^2 + r^2)
    /// = t^2 - r^2`, so `t^2 = (1 + delta)/2`.
    pub fn from_delta(delta: f64) -> Result<Self> {
        if !(delta.abs() <= 1.0) {
            return Err(Error::InvalidParameter {
                name: "delta",
                value: delta,
                reason: "|delta| must be <= 1",
            });
        }
        let t2 = (1.0 + delta) / 2.0;
        Ok(Self {
            t2,
            r2: 1.0 - t2,
            g1: 1.0,
            g2: 1.0,
        })
    }
}

/// Exact imbalance and its near-balance diagnostic split.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImbalanceDecomposition {
    /// `(G1 t^2 - G2 r^2) / sqrt(G1^2 t^2 + G2^2 r^2)`.
    pub delta: f64,
    /// Optical part, `t^2 - r^2`.
    pub delta_opt: f64,
    /// Electronic part, `(G1 - G2)/(G1 + G2)`.
    pub delta_el: f64,
}

impl ImbalanceDecomposition {
    /// `delta_opt + delta_el`, valid only for a nearly balanced detector.
    pub fn approximate(&self) -> f64 {
        self.delta_opt + self.delta_el
    }
}

/// Normalized imbalance of the two detector arms.
pub fn imbalance_delta(t2: f64, r2: f64, g1: f64, g2: f64) -> Result<ImbalanceDecomposition> {
    if (t2 + r2 - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidParameter {
            name: "t2 + r2",
            value: t2 + r2,
            reason: "splitter must be lossless (t2 + r2 = 1)",
        });
    }
    non_negative("t2", t2)?;
    non_negative("r2", r2)?;
    non_negative("g1", g1)?;
    non_negative("g2", g2)?;
    let denom = libm::sqrt(g1 * g1 * t2 + g2 * g2 * r2);
    if denom == 0.0 || g1 + g2 == 0.0 {
        return Err(Error::InvalidParameter {
            name: "g1, g2",
            value: 0.0,
            reason: "both arm gains are zero",
        });
    }
    Ok(ImbalanceDecomposition {
        delta: (g1 * t2 - g2 * r2) / denom,
        delta_opt: t2 - r2,
        delta_el: (g1 - g2) / (g1 + g2),
    })
}

/// Common-mode rejection ratio in dB, with perfect subtraction kept distinct.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Cmrr {
    Finite(f64),
    /// `delta = 0`: the arms cancel exactly.
    Infinite,
}

impl Cmrr {
    pub fn db(&self) -> f64 {
        match *self {
            Cmrr::Finite(db) => db,
            Cmrr::Infinite => f64::INFINITY,
        }
    }

    pub fn is_infinite(&self) -> bool {
        matches!(self, Cmrr::Infinite)
    }
}

/// `CMRR = -20 log10(2 |delta|)`.
///
/// Noise depends only on `delta^2`, so the sign of `delta` is dropped.
pub fn cmrr_from_delta(delta: f64) -> Result<Cmrr> {
    if delta.is_nan() {
        return Err(Error::InvalidParameter {
            name: "delta",
            value: delta,
            reason: "not a number",
        });
    }
    let d = delta.abs();
    if d == 0.0 {
        Ok(Cmrr::Infinite)
    } else {
        Ok(Cmrr::Finite(-20.0 * libm::log10(2.0 * d)))
    }
}

/// Inverse of [`cmrr_from_delta`]: `delta = 10^(-CMRR/20) / 2`, always `>= 0`.
///
/// `+inf` maps to `delta = 0`.
pub fn delta_from_cmrr(cmrr_db: f64) -> Result<f64> {
    if cmrr_db.is_nan() || cmrr_db == f64::NEG_INFINITY {
        return Err(Error::InvalidParameter {
            name: "cmrr_db",
            value: cmrr_db,
            reason: "must be finite or +inf",
        });
    }
    if cmrr_db == f64::INFINITY {
        return Ok(0.0);
    }
    Ok(libm::pow(10.0, -cmrr_db / 20.0) / 2.0)
}

/// Any of the three interchangeable ways to specify detector imbalance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Imbalance {
    Delta(f64),
    Arms(ArmBalance),
    CmrrDb(f64),
}

impl Imbalance {
    pub fn delta(&self) -> Result<f64> {
        match *self {
            Imbalance::Delta(d) => {
                if d.abs() <= 1.0 {
                    Ok(d)
                } else {
                    Err(Error::InvalidParameter {
                        name: "delta",
                        value: d,
                        reason: "|delta| must be <= 1",
                    })
                }
            }
            Imbalance::Arms(a) => {
                a.validate()?;
                imbalance_delta(a.t2, a.r2, a.g1, a.g2).map(|d| d.delta)
            }
            Imbalance::CmrrDb(db) => delta_from_cmrr(db),
        }
    }

    pub fn cmrr(&self) -> Result<Cmrr> {
        match *self {
            Imbalance::CmrrDb(db) if db == f64::INFINITY => Ok(Cmrr::Infinite),
            Imbalance::CmrrDb(db) => {
                delta_from_cmrr(db)?;
                Ok(Cmrr::Finite(db))
            }
            _ => cmrr_from_delta(self.delta()?),
        }
    }

    /// Arm description realizing this imbalance. For `Arms` this is the
    /// stored tuple; otherwise an equal-gain splitter via [`ArmBalance::from_delta`].
    pub fn arms(&self) -> Result<ArmBalance> {
        match *self {
            Imbalance::Arms(a) => {
                a.validate()?;
                Ok(a)
            }
            _ => ArmBalance::from_delta(self.delta()?),
        }
    }
}

/// Electronic-noise specification of the detector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ElectronicNoise {
    /// `N_ele = c_ele / I_LO` (output-referred), as measured from an LO scan.
    PerLo(f64),
    /// A fixed output-referred `N_ele`, independent of the LO level.
    Fixed(f64),
}

impl ElectronicNoise {
    pub fn evaluate(&self, lo: &LoParams) -> Result<f64> {
        match *self {
            ElectronicNoise::PerLo(c_ele) => electronic_noise(lo, c_ele),
            ElectronicNoise::Fixed(n) => non_negative("n_ele", n),
        }
    }
}

/// Which formula produces `N_LO`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NloPath {
    /// `I_LO * f^2 * delta^2` from the arm imbalance.
    Physical,
    /// `c_lo * I_LO` from a fitted LO scan.
    Empirical,
}

/// Balanced homodyne detector description.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BhdParams {
    pub bandwidth_hz: f64,
    pub imbalance: Option<Imbalance>,
    pub electronic_noise: ElectronicNoise,
    /// `c_lo` such that `N_LO = c_lo * I_LO` (output-referred).
    pub nlo_empirical_coeff: Option<f64>,
    /// Electrical pulse width; `1/B` when unset.
    pub pulse_width_s: Option<f64>,
}

impl BhdParams {
    pub fn new(bandwidth_hz: f64, electronic_noise: ElectronicNoise) -> Result<Self> {
        positive("bandwidth_hz", bandwidth_hz)?;
        Ok(Self {
            bandwidth_hz,
            imbalance: None,
            electronic_noise,
            nlo_empirical_coeff: None,
            pulse_width_s: None,
        })
    }

    pub fn with_imbalance(mut self, imbalance: Imbalance) -> Self {
        self.imbalance = Some(imbalance);
        self
    }

    pub fn with_nlo_coeff(mut self, c_lo: f64) -> Self {
        self.nlo_empirical_coeff = Some(c_lo);
        self
    }

    pub fn pulse_width_s(&self) -> f64 {
        self.pulse_width_s.unwrap_or(1.0 / self.bandwidth_hz)
    }

    /// Default path: physical when an imbalance is configured, empirical
    /// when only `c_lo` is known, `None` when neither is present.
    pub fn default_nlo_path(&self) -> Option<NloPath> {
        if self.imbalance.is_some() {
            Some(NloPath::Physical)
        } else if self.nlo_empirical_coeff.is_some() {
            Some(NloPath::Empirical)
        } else {
            None
        }
    }

    /// Output-referred `N_LO` along `path` (or the default path when `None`).
    pub fn lo_noise(&self, lo: &LoParams, path: Option<NloPath>) -> Result<f64> {
        match path.or_else(|| self.default_nlo_path()) {
            None => Ok(0.0),
            Some(NloPath::Physical) => {
                let delta = self.imbalance.ok_or(Error::InvalidParameter {
                    name: "imbalance",
                    value: f64::NAN,
                    reason: "physical N_LO path requires an imbalance",
                })?;
                Ok(lo_fluctuation_noise(lo, delta.delta()?))
            }
            Some(NloPath::Empirical) => {
                let c_lo = self.nlo_empirical_coeff.ok_or(Error::InvalidParameter {
                    name: "nlo_empirical_coeff",
                    value: f64::NAN,
                    reason: "empirical N_LO path requires c_lo",
                })?;
                lo_fluctuation_noise_empirical(lo, c_lo)
            }
        }
    }
}

/// Whether a budget component is quoted at the channel input or at the detector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Referral {
    Input,
    Output,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseComponent {
    EpsA,
    EpsOverlap,
    NLo,
    NLeak,
    NEle,
}

impl NoiseComponent {
    pub const ALL: [NoiseComponent; 5] = [
        NoiseComponent::EpsA,
        NoiseComponent::EpsOverlap,
        NoiseComponent::NLo,
        NoiseComponent::NLeak,
        NoiseComponent::NEle,
    ];

    pub fn referral(&self) -> Referral {
        match self {
            NoiseComponent::EpsA | NoiseComponent::EpsOverlap => Referral::Input,
            NoiseComponent::NLo | NoiseComponent::NLeak | NoiseComponent::NEle => Referral::Output,
        }
    }

    /// Eve-controllable under the refined model; only `N_ele` is trusted.
    pub fn eve_controlled(&self) -> bool {
        !matches!(self, NoiseComponent::NEle)
    }

    pub fn label(&self) -> &'static str {
        match self {
            NoiseComponent::EpsA => "eps_A",
            NoiseComponent::EpsOverlap => "eps_overlap",
            NoiseComponent::NLo => "N_LO",
            NoiseComponent::NLeak => "N_leak",
            NoiseComponent::NEle => "N_ele",
        }
    }
}

/// Excess-noise ledger. Each field is stored in its native referral.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct NoiseBudget {
    /// Input-referred.
    pub eps_a: f64,
    /// Input-referred.
    pub eps_overlap: f64,
    /// Output-referred.
    pub n_lo: f64,
    /// Output-referred.
    pub n_leak: f64,
    /// Output-referred.
    pub n_ele: f64,
}

impl NoiseBudget {
    pub fn validate(&self) -> Result<()> {
        non_negative("eps_a", self.eps_a)?;
        non_negative("eps_overlap", self.eps_overlap)?;
        non_negative("n_lo", self.n_lo)?;
        non_negative("n_leak", self.n_leak)?;
        non_negative("n_ele", self.n_ele)?;
        Ok(())
    }

    /// Stored value of one component, in its native referral.
    pub fn native(&self, component: NoiseComponent) -> f64 {
        match component {
            NoiseComponent::EpsA => self.eps_a,
            NoiseComponent::EpsOverlap => self.eps_overlap,
            NoiseComponent::NLo => self.n_lo,
            NoiseComponent::NLeak => self.n_leak,
            NoiseComponent::NEle => self.n_ele,
        }
    }

    pub fn input_referred(&self, component: NoiseComponent, eta_g: f64) -> f64 {
        match component.referral() {
            Referral::Input => self.native(component),
            Referral::Output => self.native(component) / eta_g,
        }
    }

    pub fn output_referred(&self, component: NoiseComponent, eta_g: f64) -> f64 {
        match component.referral() {
            Referral::Input => self.native(component) * eta_g,
            Referral::Output => self.native(component),
        }
    }
}

/// Equivalent input noise and the excess-noise intermediates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EquivalentNoise {
    /// `chi = (1 - eta G)/(eta G) + eps`.
    pub chi: f64,
    /// Total input-referred excess noise, `eps_E + N_Bob/(eta G)`.
    pub eps: f64,
    /// Eve-controllable part, `eps_A + eps_overlap + (N_LO + N_leak)/(eta G)`.
    pub eps_e: f64,
}

pub fn equivalent_input_noise(
    budget: &NoiseBudget,
    channel: &ChannelParams,
    rx: &ReceiverParams,
) -> Result<EquivalentNoise> {
    budget.validate()?;
    let eta_g = rx.eta() * channel.transmittance();
    if eta_g == 0.0 {
        return Err(Error::ZeroTransmission);
    }
    let eps_e = budget.eps_a + budget.eps_overlap + budget.n_lo / eta_g + budget.n_leak / eta_g;
    let eps = eps_e + budget.n_ele / eta_g;
    let chi = (1.0 - eta_g) / eta_g + eps;
    Ok(EquivalentNoise { chi, eps, eps_e })
}

/// Input-referred excess noise from overlapping Gaussian electrical pulses
/// of width `1/B`, read at their peaks: `2 (V_A + 1) exp(-B^2/R^2)`.
pub fn overlap_noise(modulation: &ModulationParams, bandwidth_hz: f64, repetition_hz: f64) -> Result<f64> {
    positive("bandwidth_hz", bandwidth_hz)?;
    positive("repetition_hz", repetition_hz)?;
    let ratio = bandwidth_hz / repetition_hz;
    Ok(2.0 * modulation.variance() * libm::exp(-ratio * ratio))
}

/// Overlap-noise bound from a measured lag-1 correlation coefficient:
/// `neighbors * (V_A + 1) * cc^2`.
pub fn overlap_noise_from_cc(modulation: &ModulationParams, cc: f64, neighbors: u8) -> Result<f64> {
    if !(cc.abs() <= 1.0) {
        return Err(Error::InvalidParameter {
            name: "cc",
            value: cc,
            reason: "|cc| must be <= 1",
        });
    }
    if !(1..=2).contains(&neighbors) {
        return Err(Error::InvalidParameter {
            name: "neighbors",
            value: neighbors as f64,
            reason: "must be 1 or 2",
        });
    }
    Ok(neighbors as f64 * modulation.variance() * cc * cc)
}

/// Output-referred LO-fluctuation noise, `I_LO * f^2 * delta^2`.
pub fn lo_fluctuation_noise(lo: &LoParams, delta: f64) -> f64 {
    let f = lo.fractional_fluctuation();
    lo.photons_per_pulse() * f * f * delta * delta
}

/// Output-referred LO-fluctuation noise from a fitted coefficient, `c_lo * I_LO`.
pub fn lo_fluctuation_noise_empirical(lo: &LoParams, c_lo: f64) -> Result<f64> {
    Ok(non_negative("c_lo", c_lo)? * lo.photons_per_pulse())
}

/// Output-referred electronic noise, `c_ele / I_LO`.
pub fn electronic_noise(lo: &LoParams, c_ele: f64) -> Result<f64> {
    non_negative("c_ele", c_ele)?;
    let i_lo = positive("photons_per_pulse", lo.photons_per_pulse())?;
    Ok(c_ele / i_lo)
}

/// Shot-to-electronic noise ratio in dB for an output-referred `N_ele`.
pub fn shot_to_electronic_db(n_ele: f64) -> f64 {
    -10.0 * libm::log10(n_ele)
}
