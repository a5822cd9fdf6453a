//! Shannon mutual informations and the reverse-reconciliation secret key
//! rate under the refined realistic noise model (individual attacks).

use crate::error::{positive, Error, Result};
use crate::model::{
    equivalent_input_noise, overlap_noise, BhdParams, ChannelParams, LoParams, ModulationParams, NloPath, NoiseBudget,
    ReceiverParams,
};

/// How `eps_overlap` is obtained for an operating point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OverlapModel {
    /// A fixed input-referred value (e.g. a bound measured from pulse correlations).
    Fixed(f64),
    /// Gaussian pulses of width `1/B` at repetition rate `R`; needs `repetition_hz`.
    Gaussian,
}

/// One complete GMCS QKD operating point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SystemParams {
    pub modulation: ModulationParams,
    pub channel: ChannelParams,
    pub receiver: ReceiverParams,
    pub lo: LoParams,
    pub bhd: BhdParams,
    /// Input-referred excess noise originating outside Bob's system.
    pub eps_a: f64,
    /// Output-referred LO leakage noise, carried as given.
    pub n_leak: f64,
    pub overlap: OverlapModel,
    pub repetition_hz: Option<f64>,
    /// Overrides [`BhdParams::default_nlo_path`] when set.
    pub nlo_path: Option<NloPath>,
}

impl SystemParams {
    /// Assemble the excess-noise ledger for this operating point.
    pub fn noise_budget(&self) -> Result<NoiseBudget> {
        let eps_overlap = match self.overlap {
            OverlapModel::Fixed(v) => v,
            OverlapModel::Gaussian => {
                let r = self.repetition_hz.ok_or(Error::InvalidParameter {
                    name: "repetition_hz",
                    value: f64::NAN,
                    reason: "Gaussian overlap model needs a repetition rate",
                })?;
                overlap_noise(&self.modulation, self.bhd.bandwidth_hz, r)?
            }
        };
        let budget = NoiseBudget {
            eps_a: self.eps_a,
            eps_overlap,
            n_lo: self.bhd.lo_noise(&self.lo, self.nlo_path)?,
            n_leak: self.n_leak,
            n_ele: self.bhd.electronic_noise.evaluate(&self.lo)?,
        };
        budget.validate()?;
        Ok(budget)
    }

    pub fn with_repetition(mut self, repetition_hz: f64) -> Self {
        self.repetition_hz = Some(repetition_hz);
        self
    }

    pub fn with_lo_photons(mut self, photons: f64) -> Result<Self> {
        self.lo = self.lo.with_photons(photons)?;
        Ok(self)
    }
}

/// Key-rate figures for one operating point, with the noise diagnostics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KeyRateResult {
    /// Bits per pulse.
    pub i_ab: f64,
    /// Bits per pulse.
    pub i_be: f64,
    /// `beta * i_ab - i_be`, bits per pulse. May be negative.
    pub delta_i: f64,
    /// Bits per second, present when a repetition rate is known.
    pub delta_i_per_second: Option<f64>,
    pub chi: f64,
    pub eps: f64,
    pub eps_e: f64,
    pub eta_g: f64,
    pub budget: NoiseBudget,
}

impl KeyRateResult {
    pub fn has_key(&self) -> bool {
        self.delta_i > 0.0
    }

    /// Per-second rate when available, per-pulse otherwise.
    pub fn rate(&self) -> f64 {
        self.delta_i_per_second.unwrap_or(self.delta_i)
    }
}

/// `I_AB = 1/2 log2[(V + chi)/(1 + chi)]`, bits per pulse.
pub fn mutual_information_ab(modulation: &ModulationParams, chi: f64) -> Result<f64> {
    if !(chi >= 0.0) {
        return Err(Error::InvalidParameter {
            name: "chi",
            value: chi,
            reason: "must be >= 0",
        });
    }
    if chi.is_infinite() {
        return Ok(0.0);
    }
    let v = modulation.variance();
    Ok(0.5 * libm::log2((v + chi) / (1.0 + chi)))
}

/// Bob-Eve mutual information for reverse reconciliation, bits per pulse.
///
/// `eps_e` is the Eve-controllable input-referred excess noise, `eps` the total,
/// and `n_bob` the trusted output-referred detector noise.
pub fn eve_information(
    modulation: &ModulationParams,
    channel: &ChannelParams,
    rx: &ReceiverParams,
    eps_e: f64,
    n_bob: f64,
    eps: f64,
) -> Result<f64> {
    let g = channel.transmittance();
    let eta = rx.eta();
    let eta_g = eta * g;
    let v = modulation.variance();

    let numerator = eta_g * modulation.v_a() + 1.0 + eta_g * eps;
    if !(numerator > 0.0) {
        return Err(Error::EveInformation {
            which: "numerator",
            value: numerator,
        });
    }
    let inner = 1.0 - g + g * eps_e + g / v;
    if !(inner > 0.0) {
        return Err(Error::EveInformation {
            which: "inner denominator (1 - G + G eps_E + G/V)",
            value: inner,
        });
    }
    let denominator = eta / inner + 1.0 - eta + n_bob;
    if !(denominator > 0.0) {
        return Err(Error::EveInformation {
            which: "denominator",
            value: denominator,
        });
    }
    Ok(0.5 * libm::log2(numerator / denominator))
}

/// Secret key rate of an operating point. Negative rates are returned as-is.
pub fn secret_key_rate(params: &SystemParams) -> Result<KeyRateResult> {
    let budget = params.noise_budget()?;
    let noise = equivalent_input_noise(&budget, &params.channel, &params.receiver)?;
    let i_ab = mutual_information_ab(&params.modulation, noise.chi)?;
    let i_be = eve_information(
        &params.modulation,
        &params.channel,
        &params.receiver,
        noise.eps_e,
        budget.n_ele,
        noise.eps,
    )?;
    let delta_i = params.receiver.beta() * i_ab - i_be;
    let delta_i_per_second = match params.repetition_hz {
        Some(r) => Some(delta_i * positive("repetition_hz", r)?),
        None => None,
    };
    Ok(KeyRateResult {
        i_ab,
        i_be,
        delta_i,
        delta_i_per_second,
        chi: noise.chi,
        eps: noise.eps,
        eps_e: noise.eps_e,
        eta_g: params.receiver.eta() * params.channel.transmittance(),
        budget,
    })
}
