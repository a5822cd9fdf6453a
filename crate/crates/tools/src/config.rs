//! Run configuration: a strict TOML schema whose key names carry units.
//!
//! `snu` stands for shot-noise units. Unknown keys are rejected so that a
//! misspelt or wrongly-united key cannot silently fall back to a default.

use std::path::{Path, PathBuf};

use gmcs_core::model::{
    ArmBalance, BhdParams, ChannelParams, ElectronicNoise, Imbalance, LoParams, ModulationParams, NloPath,
    ReceiverParams,
};
use gmcs_core::montecarlo::{peak_volts_per_photoelectron, Readout, SimConfig};
use gmcs_core::optimize::{grid, Spacing};
use gmcs_core::{OverlapModel, SystemParams};
use serde::{Deserialize, Serialize};

/// Environment variable naming the directory searched for config names.
pub const CONFIG_DIR_ENV: &str = "GMCS_CONFIG_DIR";

/// Configs compiled into the binary, looked up by file name.
pub const BUNDLED: [(&str, &str); 5] = [
    ("fig2.cfg", include_str!("../configs/fig2.cfg")),
    ("fig3.cfg", include_str!("../configs/fig3.cfg")),
    ("fig8.cfg", include_str!("../configs/fig8.cfg")),
    ("fig9.cfg", include_str!("../configs/fig9.cfg")),
    ("table1.cfg", include_str!("../configs/table1.cfg")),
];

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{origin}: {message}")]
    Parse { origin: String, message: String },
    #[error("invalid `{key}`: {message}")]
    Invalid { key: String, message: String },
    #[error("bad override `{0}`: expected section.key=value")]
    Override(String),
    #[error("config `{name}` not found (looked in: {searched})")]
    NotFound { name: String, searched: String },
    #[error("reading {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

type Result<T> = std::result::Result<T, ConfigError>;

fn invalid(key: &str, message: impl std::fmt::Display) -> ConfigError {
    ConfigError::Invalid {
        key: key.to_string(),
        message: message.to_string(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub modulation: Modulation,
    pub channel: Channel,
    pub receiver: Receiver,
    pub bhd: Bhd,
    pub lo: Lo,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sim: Option<Sim>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Modulation {
    pub variance_snu: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub repetition_mhz: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Channel {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transmittance: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub distance_km: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub loss_db_per_km: Option<f64>,
    #[serde(default)]
    pub excess_noise_snu: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Receiver {
    pub efficiency: f64,
    pub reconciliation_efficiency: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LoNoiseModel {
    Physical,
    Empirical,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bhd {
    pub bandwidth_mhz: f64,
    /// Fixed output-referred electronic noise.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub electronic_noise_snu: Option<f64>,
    /// `c_ele` in `N_ele = c_ele / I_LO`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub electronic_noise_coeff_photons: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cmrr_db: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub imbalance_delta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub arm_transmission_t2: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub arm_reflection_r2: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub arm_gain_1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub arm_gain_2: Option<f64>,
    /// `c_lo` in `N_LO = c_lo * I_LO`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lo_noise_coeff_per_photon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lo_noise_model: Option<LoNoiseModel>,
    /// Fixed pulse-overlap noise; when absent it follows from bandwidth and
    /// repetition rate.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub overlap_noise_snu: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pulse_width_ns: Option<f64>,
    #[serde(default)]
    pub leakage_noise_snu: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Lo {
    pub photons_per_pulse: f64,
    #[serde(default)]
    pub fluctuation_fraction: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReadoutKind {
    Window,
    Peak,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LevelSpacing {
    Linear,
    Log,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sim {
    #[serde(default)]
    pub seed: u64,
    pub pulses_per_level: usize,
    pub sample_rate_ghz: f64,
    pub window_ns: f64,
    pub transimpedance_kohm: f64,
    #[serde(default = "default_readout")]
    pub readout: ReadoutKind,
    /// Per-sample white noise; overrides the coefficient below.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub electronic_noise_rms_mv: Option<f64>,
    /// Electronic noise expressed as `c_ele`; falls back to the detector's.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub electronic_noise_coeff_photons: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lo_levels_photons_per_pulse: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lo_min_photons_per_pulse: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lo_max_photons_per_pulse: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lo_level_count: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lo_level_spacing: Option<LevelSpacing>,
    /// Time of the first pulse centre in an imported trace.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace_offset_ns: Option<f64>,
}

fn default_readout() -> ReadoutKind {
    ReadoutKind::Window
}

impl RunConfig {
    /// Parse config text; `origin` labels errors (usually the file name).
    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| ConfigError::Parse {
            origin: origin.to_string(),
            message: e.to_string().trim_end().to_string(),
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Apply `section.key=value` overrides; values use TOML syntax.
    pub fn with_overrides(&self, overrides: &[String]) -> Result<Self> {
        if overrides.is_empty() {
            return Ok(self.clone());
        }
        let mut table: toml::Table = toml::from_str(&self.to_toml()).expect("own output parses");
        for item in overrides {
            let (path, raw) = item
                .split_once('=')
                .ok_or_else(|| ConfigError::Override(item.clone()))?;
            let (section, key) = path
                .trim()
                .split_once('.')
                .ok_or_else(|| ConfigError::Override(item.clone()))?;
            let value = parse_value(raw.trim());
            let entry = table
                .entry(section.to_string())
                .or_insert_with(|| toml::Value::Table(toml::Table::new()));
            let toml::Value::Table(section_table) = entry else {
                return Err(ConfigError::Override(item.clone()));
            };
            section_table.insert(key.to_string(), value);
        }
        toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| ConfigError::Parse {
                origin: "override".into(),
                message: e.to_string().trim_end().to_string(),
            })
    }

    fn channel(&self) -> Result<ChannelParams> {
        let c = &self.channel;
        match (c.transmittance, c.distance_km) {
            (Some(_), Some(_)) => Err(invalid(
                "channel.transmittance",
                "give either transmittance or distance_km, not both",
            )),
            (Some(g), None) => ChannelParams::from_transmittance(g).map_err(|e| invalid("channel.transmittance", e)),
            (None, Some(d)) => {
                let loss = c
                    .loss_db_per_km
                    .ok_or_else(|| invalid("channel.loss_db_per_km", "required with distance_km"))?;
                ChannelParams::from_distance(d, loss).map_err(|e| invalid("channel.distance_km", e))
            }
            (None, None) => Err(invalid("channel.transmittance", "missing (or give distance_km)")),
        }
    }

    /// The configured imbalance, if any.
    pub fn imbalance(&self) -> Result<Option<Imbalance>> {
        let b = &self.bhd;
        let arms = [b.arm_transmission_t2, b.arm_reflection_r2, b.arm_gain_1, b.arm_gain_2];
        let any_arm = arms.iter().any(Option::is_some);
        let given = b.cmrr_db.is_some() as u8 + b.imbalance_delta.is_some() as u8 + any_arm as u8;
        if given > 1 {
            return Err(invalid(
                "bhd.cmrr_db",
                "give only one of cmrr_db, imbalance_delta or the arm_* group",
            ));
        }
        let imbalance = if let Some(db) = b.cmrr_db {
            Imbalance::CmrrDb(db)
        } else if let Some(d) = b.imbalance_delta {
            Imbalance::Delta(d)
        } else if any_arm {
            match arms {
                [Some(t2), Some(r2), Some(g1), Some(g2)] => {
                    Imbalance::Arms(ArmBalance::new(t2, r2, g1, g2).map_err(|e| invalid("bhd.arm_*", e))?)
                }
                _ => return Err(invalid("bhd.arm_*", "all four arm_* keys are required together")),
            }
        } else {
            return Ok(None);
        };
        imbalance.delta().map_err(|e| invalid("bhd imbalance", e))?;
        Ok(Some(imbalance))
    }

    fn bhd(&self) -> Result<BhdParams> {
        let b = &self.bhd;
        let electronic = match (b.electronic_noise_snu, b.electronic_noise_coeff_photons) {
            (Some(_), Some(_)) => {
                return Err(invalid(
                    "bhd.electronic_noise_snu",
                    "give either electronic_noise_snu or electronic_noise_coeff_photons",
                ))
            }
            (Some(n), None) => ElectronicNoise::Fixed(n),
            (None, Some(c)) => ElectronicNoise::PerLo(c),
            (None, None) => {
                return Err(invalid(
                    "bhd.electronic_noise_snu",
                    "missing (or give electronic_noise_coeff_photons)",
                ))
            }
        };
        let mut params =
            BhdParams::new(b.bandwidth_mhz * 1e6, electronic).map_err(|e| invalid("bhd.bandwidth_mhz", e))?;
        if let Some(imbalance) = self.imbalance()? {
            params = params.with_imbalance(imbalance);
        }
        if let Some(c_lo) = b.lo_noise_coeff_per_photon {
            params = params.with_nlo_coeff(c_lo);
        }
        if let Some(w) = b.pulse_width_ns {
            if !(w > 0.0) {
                return Err(invalid("bhd.pulse_width_ns", "must be > 0"));
            }
            params.pulse_width_s = Some(w * 1e-9);
        }
        Ok(params)
    }

    pub fn system_params(&self) -> Result<SystemParams> {
        let bhd = self.bhd()?;
        let nlo_path = self.bhd.lo_noise_model.map(|m| match m {
            LoNoiseModel::Physical => NloPath::Physical,
            LoNoiseModel::Empirical => NloPath::Empirical,
        });
        match nlo_path {
            Some(NloPath::Physical) if bhd.imbalance.is_none() => {
                return Err(invalid(
                    "bhd.lo_noise_model",
                    "physical model needs an imbalance (e.g. cmrr_db)",
                ))
            }
            Some(NloPath::Empirical) if bhd.nlo_empirical_coeff.is_none() => {
                return Err(invalid(
                    "bhd.lo_noise_model",
                    "empirical model needs lo_noise_coeff_per_photon",
                ))
            }
            _ => {}
        }
        let repetition_hz = match self.modulation.repetition_mhz {
            Some(r) if !(r > 0.0) => return Err(invalid("modulation.repetition_mhz", "must be > 0")),
            r => r.map(|r| r * 1e6),
        };
        let params = SystemParams {
            modulation: ModulationParams::new(self.modulation.variance_snu)
                .map_err(|e| invalid("modulation.variance_snu", e))?,
            channel: self.channel()?,
            receiver: ReceiverParams::new(self.receiver.efficiency, self.receiver.reconciliation_efficiency)
                .map_err(|e| invalid("receiver", e))?,
            lo: LoParams::new(self.lo.photons_per_pulse, self.lo.fluctuation_fraction).map_err(|e| invalid("lo", e))?,
            bhd,
            eps_a: self.channel.excess_noise_snu,
            n_leak: self.bhd.leakage_noise_snu,
            overlap: match self.bhd.overlap_noise_snu {
                Some(v) => OverlapModel::Fixed(v),
                None => OverlapModel::Gaussian,
            },
            repetition_hz,
            nlo_path,
        };
        params.noise_budget().map_err(|e| invalid("noise budget", e))?;
        Ok(params)
    }

    fn sim_section(&self) -> Result<&Sim> {
        self.sim
            .as_ref()
            .ok_or_else(|| invalid("sim", "section required for simulation"))
    }

    /// Simulator configuration at the `[lo]` photon number.
    pub fn sim_config(&self) -> Result<SimConfig> {
        let s = self.sim_section()?;
        let bhd = self.bhd()?;
        let arms = match self.imbalance()? {
            Some(i) => i.arms().map_err(|e| invalid("bhd imbalance", e))?,
            None => ArmBalance::BALANCED,
        };
        let repetition_hz = self
            .modulation
            .repetition_mhz
            .ok_or_else(|| invalid("modulation.repetition_mhz", "required for simulation"))?
            * 1e6;
        if !(s.transimpedance_kohm > 0.0) {
            return Err(invalid("sim.transimpedance_kohm", "must be > 0"));
        }
        let tau = bhd.pulse_width_s();
        let mut cfg = SimConfig {
            lo_photons_per_pulse: self.lo.photons_per_pulse,
            lo_fluctuation: self.lo.fluctuation_fraction,
            arms,
            pulse_width_s: tau,
            repetition_hz,
            sample_rate_hz: s.sample_rate_ghz * 1e9,
            window_s: s.window_ns * 1e-9,
            n_pulses: s.pulses_per_level,
            seed: s.seed,
            electronic_noise_rms_volts: 0.0,
            volts_per_photoelectron: peak_volts_per_photoelectron(s.transimpedance_kohm * 1e3, tau),
            readout: match s.readout {
                ReadoutKind::Window => Readout::Window,
                ReadoutKind::Peak => Readout::Peak,
            },
        };
        cfg.electronic_noise_rms_volts = match (s.electronic_noise_rms_mv, s.electronic_noise_coeff_photons) {
            (Some(_), Some(_)) => {
                return Err(invalid(
                    "sim.electronic_noise_rms_mv",
                    "give either electronic_noise_rms_mv or electronic_noise_coeff_photons",
                ))
            }
            (Some(mv), None) => mv * 1e-3,
            (None, Some(c)) => cfg.electronic_rms_for_coefficient(c),
            (None, None) => match bhd.electronic_noise {
                ElectronicNoise::PerLo(c) => cfg.electronic_rms_for_coefficient(c),
                ElectronicNoise::Fixed(_) => 0.0,
            },
        };
        cfg.validate().map_err(|e| invalid("sim", e))?;
        Ok(cfg)
    }

    /// `c_ele` the simulation was configured with, when it is expressed that way.
    pub fn sim_electronic_coeff(&self) -> Option<f64> {
        let s = self.sim.as_ref()?;
        if s.electronic_noise_rms_mv.is_some() {
            return None;
        }
        s.electronic_noise_coeff_photons
            .or(match self.bhd.electronic_noise_coeff_photons {
                Some(c) if self.bhd.electronic_noise_snu.is_none() => Some(c),
                _ => None,
            })
    }

    /// LO levels of a Monte Carlo scan, ascending.
    pub fn sim_levels(&self) -> Result<Vec<f64>> {
        let s = self.sim_section()?;
        if let Some(levels) = &s.lo_levels_photons_per_pulse {
            let range = [
                s.lo_min_photons_per_pulse,
                s.lo_max_photons_per_pulse,
                s.lo_level_count.map(|c| c as f64),
            ];
            if range.iter().any(Option::is_some) {
                return Err(invalid(
                    "sim.lo_levels_photons_per_pulse",
                    "give either an explicit level list or lo_min/lo_max/lo_level_count",
                ));
            }
            let mut levels = levels.clone();
            levels.sort_by(f64::total_cmp);
            return Ok(levels);
        }
        let need = |v: Option<f64>, key: &str| v.ok_or_else(|| invalid(key, "required when no level list is given"));
        let lo = need(s.lo_min_photons_per_pulse, "sim.lo_min_photons_per_pulse")?;
        let hi = need(s.lo_max_photons_per_pulse, "sim.lo_max_photons_per_pulse")?;
        let n = need(s.lo_level_count.map(|c| c as f64), "sim.lo_level_count")? as usize;
        let spacing = match s.lo_level_spacing.unwrap_or(LevelSpacing::Linear) {
            LevelSpacing::Linear => Spacing::Linear,
            LevelSpacing::Log => Spacing::Log,
        };
        grid(lo, hi, n, spacing).map_err(|e| invalid("sim.lo_min_photons_per_pulse", e))
    }

    pub fn trace_offset_s(&self) -> Option<f64> {
        self.sim.as_ref()?.trace_offset_ns.map(|t| t * 1e-9)
    }
}

fn parse_value(raw: &str) -> toml::Value {
    let doc = format!("v = {raw}");
    match toml::from_str::<toml::Table>(&doc) {
        Ok(mut t) => t.remove("v").expect("key present"),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

/// Where a config came from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Source {
    File(PathBuf),
    Bundled(&'static str),
}

impl std::fmt::Display for Source {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Source::File(p) => write!(f, "{}", p.display()),
            Source::Bundled(name) => write!(f, "bundled:{name}"),
        }
    }
}

/// Resolve a config name: an existing path, then `$GMCS_CONFIG_DIR/<name>`
/// (with `.cfg` appended if missing), then the bundled set.
pub fn locate(name: &str, config_dir: Option<&Path>) -> Result<(Source, String)> {
    let read = |p: &Path| {
        std::fs::read_to_string(p).map_err(|source| ConfigError::Io {
            path: p.to_path_buf(),
            source,
        })
    };
    let direct = Path::new(name);
    if direct.is_file() {
        return Ok((Source::File(direct.to_path_buf()), read(direct)?));
    }
    let with_ext = if name.ends_with(".cfg") {
        name.to_string()
    } else {
        format!("{name}.cfg")
    };
    let mut searched = vec![name.to_string()];
    if let Some(dir) = config_dir {
        for candidate in [dir.join(name), dir.join(&with_ext)] {
            if candidate.is_file() {
                return Ok((Source::File(candidate.clone()), read(&candidate)?));
            }
            searched.push(candidate.display().to_string());
        }
    }
    if let Some((bundled, text)) = BUNDLED.iter().find(|(n, _)| *n == with_ext) {
        return Ok((Source::Bundled(bundled), text.to_string()));
    }
    searched.push("bundled configs".into());
    Err(ConfigError::NotFound {
        name: name.to_string(),
        searched: searched.join(", "),
    })
}

/// Locate, parse and apply overrides.
pub fn load(name: &str, config_dir: Option<&Path>, overrides: &[String]) -> Result<(Source, RunConfig)> {
    let (source, text) = locate(name, config_dir)?;
    let cfg = RunConfig::parse(&text, &source.to_string())?.with_overrides(overrides)?;
    Ok((source, cfg))
}
