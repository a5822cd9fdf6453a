//! The `gmcs` command line: argument model and the subcommand bodies.
//!
//! Exit-code contract: 0 success or positive key, 2 valid run without a key
//! (or an undefined statistic), 1 any error.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use gmcs_core::analysis::{
    optimize_lo, sweep_cmrr, sweep_distance, sweep_lo, sweep_repetition, SweepAxis, SweepResult, DEFAULT_GRID_POINTS,
};
use gmcs_core::fit::{decompose_noise, fit_quadratic};
use gmcs_core::model::{overlap_noise_from_cc, ModulationParams, NoiseComponent};
use gmcs_core::montecarlo::{
    correlation_coefficient, read_quadratures, simulate_level, simulate_quadratures, simulate_trace_task, Correlation,
    PulseTrace, Readout,
};
use gmcs_core::optimize::{grid, Boundary, Spacing};
use gmcs_core::{secret_key_rate, KeyRateResult, SystemParams};
use rayon::prelude::*;

use crate::config::{self, RunConfig, Source, CONFIG_DIR_ENV};
use crate::io::{read_trace, read_two_column, write_table, write_trace, write_values, Metadata};
use crate::plot::{Plot, Scale};

/// Overlap bound quoted for the reference detector, for comparison.
const REFERENCE_OVERLAP: f64 = 0.044;

#[derive(Debug, Parser)]
#[command(
    name = "gmcs",
    version,
    about = "Excess noise and key rate of GMCS QKD with a practical homodyne detector"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct ConfigArgs {
    /// Config file, or a name looked up in the config directory and then
    /// among the bundled configs (fig2, fig3, fig8, fig9, table1).
    #[arg(short, long)]
    pub config: String,
    /// Override a config value, e.g. `--set modulation.repetition_mhz=50`.
    #[arg(long = "set", value_name = "SECTION.KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Directory searched for config names.
    #[arg(long, env = CONFIG_DIR_ENV)]
    pub config_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Axis {
    Repetition,
    Cmrr,
    Lo,
    Distance,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ReadoutArg {
    Window,
    Peak,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Key rate and noise budget at one operating point.
    Keyrate {
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Key rate along one axis; writes a data file and reports the maximum
    /// and the positive-key boundaries.
    Sweep {
        #[arg(value_enum)]
        axis: Axis,
        #[command(flatten)]
        config: ConfigArgs,
        /// Range start in the axis unit (MHz, dB, photons/pulse, km).
        #[arg(long)]
        from: Option<f64>,
        /// Range end in the axis unit.
        #[arg(long)]
        to: Option<f64>,
        #[arg(long, default_value_t = DEFAULT_GRID_POINTS)]
        points: usize,
        /// Log-spaced grid (default for the LO axis).
        #[arg(long, conflicts_with = "linear")]
        log: bool,
        /// Linear grid (default for the other axes).
        #[arg(long)]
        linear: bool,
        /// LO search range for the distance axis, photons/pulse.
        #[arg(long, default_value_t = 1e6)]
        lo_min: f64,
        #[arg(long, default_value_t = 1e10)]
        lo_max: f64,
        /// Data file; standard output when omitted.
        #[arg(short, long)]
        output: Option<PathBuf>,
        /// Also write an SVG plot of the rate.
        #[arg(long)]
        plot: Option<PathBuf>,
    },
    /// LO photon number maximizing the key rate.
    OptimizeLo {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long, default_value_t = 1e6)]
        lo_min: f64,
        #[arg(long, default_value_t = 1e10)]
        lo_max: f64,
    },
    /// Simulated variance-versus-LO scan, quadratic fit and noise decomposition.
    Montecarlo {
        #[command(flatten)]
        config: ConfigArgs,
        /// Overrides `sim.seed`.
        #[arg(long)]
        seed: Option<u64>,
        /// Per-level data file.
        #[arg(short, long)]
        output: Option<PathBuf>,
        /// Raw trace of one level (see --level).
        #[arg(long)]
        trace_out: Option<PathBuf>,
        /// Quadratures of one level, one per line.
        #[arg(long)]
        quadratures_out: Option<PathBuf>,
        /// Level index for --trace-out/--quadratures-out; defaults to the last.
        #[arg(long)]
        level: Option<usize>,
    },
    /// Lag-1 correlation of consecutive quadratures and the implied overlap bound.
    Cc {
        /// Config; without --trace or --value the `[sim]` section is simulated
        /// at the `[lo]` photon number.
        #[arg(short, long)]
        config: Option<String>,
        #[arg(long = "set", value_name = "SECTION.KEY=VALUE")]
        overrides: Vec<String>,
        #[arg(long, env = CONFIG_DIR_ENV)]
        config_dir: Option<PathBuf>,
        /// Two-column trace file (time_seconds, volts).
        #[arg(long, conflicts_with = "value")]
        trace: Option<PathBuf>,
        /// Use a known correlation coefficient instead of data.
        #[arg(long)]
        value: Option<f64>,
        /// Modulation variance for the overlap bound (else from the config).
        #[arg(long)]
        variance_snu: Option<f64>,
        #[arg(long)]
        repetition_mhz: Option<f64>,
        #[arg(long)]
        window_ns: Option<f64>,
        /// Time of the first pulse centre after the first sample; half a
        /// period when omitted.
        #[arg(long)]
        offset_ns: Option<f64>,
        #[arg(long, value_enum)]
        readout: Option<ReadoutArg>,
        #[arg(long)]
        seed: Option<u64>,
        /// Write the quadratures, one per line.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Quadratic least-squares fit of a two-column file (x, y).
    Fit {
        input: PathBuf,
        /// Report the shot-to-electronic ratio at this LO photon number.
        #[arg(long)]
        at_photons: Option<f64>,
        /// Data with fitted values and residuals.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
}

/// Successful-run exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Success,
    NoKey,
}

impl Status {
    pub fn code(self) -> u8 {
        match self {
            Status::Success => 0,
            Status::NoKey => 2,
        }
    }

    fn from_rate(rate: f64) -> Self {
        if rate > 0.0 {
            Status::Success
        } else {
            Status::NoKey
        }
    }
}

struct Loaded {
    source: Source,
    cfg: RunConfig,
}

impl Loaded {
    fn new(name: &str, dir: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let (source, cfg) = config::load(name, dir, overrides)?;
        Ok(Self { source, cfg })
    }

    fn from_args(args: &ConfigArgs) -> Result<Self> {
        Self::new(&args.config, args.config_dir.as_deref(), &args.overrides)
    }

    fn meta(&self, command: &str) -> Metadata {
        Metadata {
            config_source: Some(self.source.to_string()),
            config_toml: Some(self.cfg.to_toml()),
            ..Metadata::new(command)
        }
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

pub fn run(cli: Cli, out: &mut dyn Write) -> Result<Status> {
    match cli.command {
        Command::Keyrate { config } => keyrate(&Loaded::from_args(&config)?, out),
        Command::Sweep {
            axis,
            config,
            from,
            to,
            points,
            log,
            linear,
            lo_min,
            lo_max,
            output,
            plot,
        } => {
            let spacing = match (log, linear) {
                (true, _) => Some(Spacing::Log),
                (_, true) => Some(Spacing::Linear),
                _ => None,
            };
            let opts = SweepOpts {
                axis,
                from,
                to,
                points,
                spacing,
                lo_range: (lo_min, lo_max),
                output,
                plot,
            };
            sweep(&Loaded::from_args(&config)?, &opts, out)
        }
        Command::OptimizeLo { config, lo_min, lo_max } => optimize(&Loaded::from_args(&config)?, lo_min, lo_max, out),
        Command::Montecarlo {
            config,
            seed,
            output,
            trace_out,
            quadratures_out,
            level,
        } => {
            let mut loaded = Loaded::from_args(&config)?;
            if let (Some(seed), Some(sim)) = (seed, loaded.cfg.sim.as_mut()) {
                sim.seed = seed;
            }
            montecarlo(&loaded, output, trace_out, quadratures_out, level, out)
        }
        Command::Cc {
            config,
            overrides,
            config_dir,
            trace,
            value,
            variance_snu,
            repetition_mhz,
            window_ns,
            offset_ns,
            readout,
            seed,
            output,
        } => {
            let mut loaded = config
                .map(|c| Loaded::new(&c, config_dir.as_deref(), &overrides))
                .transpose()?;
            if let (Some(seed), Some(sim)) = (seed, loaded.as_mut().and_then(|l| l.cfg.sim.as_mut())) {
                sim.seed = seed;
            }
            let opts = CcOpts {
                trace,
                value,
                variance_snu,
                repetition_mhz,
                window_ns,
                offset_ns,
                readout,
                output,
            };
            cc(loaded.as_ref(), &opts, out)
        }
        Command::Fit {
            input,
            at_photons,
            output,
        } => fit(&input, at_photons, output, out),
    }
}

fn print_result(out: &mut dyn Write, r: &KeyRateResult) -> Result<()> {
    writeln!(out, "chi (input-referred)     {:.6}", r.chi)?;
    writeln!(out, "eps (total excess)       {:.6}", r.eps)?;
    writeln!(out, "eps_E (Eve-controlled)   {:.6}", r.eps_e)?;
    writeln!(out, "I_AB                     {:.6} bits/pulse", r.i_ab)?;
    writeln!(out, "I_BE                     {:.6} bits/pulse", r.i_be)?;
    writeln!(out, "Delta I                  {:.6} bits/pulse", r.delta_i)?;
    match r.delta_i_per_second {
        Some(s) => writeln!(out, "Delta I                  {s:.6e} bits/s")?,
        None => writeln!(out, "Delta I                  (no repetition rate configured)")?,
    }
    Ok(())
}

fn keyrate(l: &Loaded, out: &mut dyn Write) -> Result<Status> {
    let params = l.cfg.system_params()?;
    let r = secret_key_rate(&params)?;
    writeln!(out, "config: {}", l.source)?;
    writeln!(out, "eta*G = {:.6}", r.eta_g)?;
    writeln!(out)?;
    writeln!(
        out,
        "{:<12} {:>14} {:>14}  controlled by",
        "noise (SNU)", "input-referred", "output-referred"
    )?;
    for c in NoiseComponent::ALL {
        writeln!(
            out,
            "{:<12} {:>14.6e} {:>15.6e}  {}",
            c.label(),
            r.budget.input_referred(c, r.eta_g),
            r.budget.output_referred(c, r.eta_g),
            if c.eve_controlled() { "Eve" } else { "Bob (trusted)" }
        )?;
    }
    writeln!(out)?;
    print_result(out, &r)?;
    let status = Status::from_rate(r.delta_i);
    writeln!(
        out,
        "{}",
        if status == Status::Success {
            "secure key: yes"
        } else {
            "secure key: no"
        }
    )?;
    Ok(status)
}

struct SweepOpts {
    axis: Axis,
    from: Option<f64>,
    to: Option<f64>,
    points: usize,
    spacing: Option<Spacing>,
    lo_range: (f64, f64),
    output: Option<PathBuf>,
    plot: Option<PathBuf>,
}

/// Axis defaults: (from, to, spacing, SI factor, column name).
fn axis_defaults(axis: Axis) -> (f64, f64, Spacing, f64, &'static str) {
    match axis {
        Axis::Repetition => (1.0, 60.0, Spacing::Linear, 1e6, "repetition_mhz"),
        Axis::Cmrr => (30.0, 80.0, Spacing::Linear, 1.0, "cmrr_db"),
        Axis::Lo => (1e6, 1e10, Spacing::Log, 1.0, "lo_photons_per_pulse"),
        Axis::Distance => (0.0, 30.0, Spacing::Linear, 1.0, "distance_km"),
    }
}

fn run_axis(params: &SystemParams, cfg: &RunConfig, o: &SweepOpts, xs: &[f64]) -> Result<SweepResult> {
    Ok(match o.axis {
        Axis::Repetition => sweep_repetition(params, xs)?,
        Axis::Cmrr => {
            if !(cfg.lo.fluctuation_fraction > 0.0) {
                bail!("CMRR sweep needs lo.fluctuation_fraction > 0");
            }
            sweep_cmrr(params, xs)?
        }
        Axis::Lo => sweep_lo(params, xs)?,
        Axis::Distance => {
            let loss = cfg
                .channel
                .loss_db_per_km
                .ok_or_else(|| anyhow!("distance sweep needs channel.loss_db_per_km"))?;
            if params.repetition_hz.is_none() {
                bail!("distance sweep needs modulation.repetition_mhz");
            }
            sweep_distance(params, xs, loss, o.lo_range)?
        }
    })
}

fn sweep(l: &Loaded, o: &SweepOpts, out: &mut dyn Write) -> Result<Status> {
    let params = l.cfg.system_params()?;
    let (d_from, d_to, d_spacing, si, column) = axis_defaults(o.axis);
    let (from, to) = (o.from.unwrap_or(d_from), o.to.unwrap_or(d_to));
    let spacing = o.spacing.unwrap_or(d_spacing);
    if !(from < to) || o.points < 2 {
        bail!("empty sweep range: need from < to and at least 2 points");
    }
    let xs: Vec<f64> = grid(from, to, o.points, spacing)?.into_iter().map(|x| x * si).collect();
    let s = run_axis(&params, &l.cfg, o, &xs)?;

    let unit = |x: f64| x / si;
    let per_second = matches!(o.axis, Axis::Repetition | Axis::Distance);
    let rate_unit = if per_second { "bits/s" } else { "bits/pulse" };
    let columns = [
        column,
        "operating_lo_photons_per_pulse",
        "chi",
        "eps",
        "eps_overlap",
        "n_lo",
        "n_ele",
        "i_ab",
        "i_be",
        "delta_i",
        "delta_i_per_second",
    ];
    let rows: Vec<Vec<f64>> = s
        .points
        .iter()
        .map(|p| {
            let r = &p.result;
            vec![
                unit(p.x),
                p.lo_photons,
                r.chi,
                r.eps,
                r.budget.eps_overlap,
                r.budget.n_lo,
                r.budget.n_ele,
                r.i_ab,
                r.i_be,
                r.delta_i,
                r.delta_i_per_second.unwrap_or(f64::NAN),
            ]
        })
        .collect();
    let meta = l
        .meta(&format!("sweep {}", SweepAxis::name(&s.axis)))
        .option("from", from)
        .option("to", to)
        .option("points", o.points)
        .option("spacing", format!("{spacing:?}").to_lowercase())
        .option(
            "lo_search_photons_per_pulse",
            format!("{:e}..{:e}", o.lo_range.0, o.lo_range.1),
        );

    // with data on stdout the summary moves to stderr
    let mut stderr = std::io::stderr();
    let summary: &mut dyn Write = match &o.output {
        Some(path) => {
            write_table(create(path)?, &meta, &columns, &rows)?;
            out
        }
        None => {
            write_table(&mut *out, &meta, &columns, &rows)?;
            &mut stderr
        }
    };
    let argmax = &s.points[s.argmax];
    writeln!(
        summary,
        "grid maximum: {column} = {} ({rate_unit} {:.6e})",
        unit(argmax.x),
        s.max_rate()
    )?;
    writeln!(
        summary,
        "refined peak: {column} = {:.6} ({rate_unit} {:.6e})",
        unit(s.peak.0),
        s.peak.1
    )?;
    for c in &s.zero_crossings {
        writeln!(
            summary,
            "zero crossing ({}): {column} = {:.6} in [{}, {}]",
            if c.rising { "key appears" } else { "key vanishes" },
            unit(c.x),
            unit(c.bracket.0),
            unit(c.bracket.1)
        )?;
    }
    for c in &s.level_crossings {
        writeln!(
            summary,
            "{} ({}): {column} = {:.6}",
            c.label,
            if c.rising { "rising" } else { "falling" },
            unit(c.x)
        )?;
    }
    match s.last_positive_x() {
        Some(x) => writeln!(summary, "last positive-rate row: {column} = {}", unit(x))?,
        None => writeln!(summary, "no positive-rate row")?,
    }
    if let Some(path) = &o.plot {
        let pts: Vec<(f64, f64)> = s.points.iter().zip(s.rates()).map(|(p, r)| (unit(p.x), r)).collect();
        let svg = Plot {
            title: &format!("Key rate versus {}", SweepAxis::name(&s.axis)),
            x_label: column,
            y_label: rate_unit,
            x_scale: if spacing == Spacing::Log {
                Scale::Log
            } else {
                Scale::Linear
            },
            points: &pts,
        }
        .to_svg();
        std::fs::write(path, svg).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(Status::from_rate(s.max_rate()))
}

fn optimize(l: &Loaded, lo_min: f64, lo_max: f64, out: &mut dyn Write) -> Result<Status> {
    let params = l.cfg.system_params()?;
    let o = optimize_lo(&params, lo_min, lo_max)?;
    writeln!(out, "config: {}", l.source)?;
    writeln!(out, "search range: {lo_min:e} .. {lo_max:e} photons/pulse")?;
    writeln!(out, "optimal LO: {:.6e} photons/pulse", o.photons_per_pulse)?;
    match o.boundary {
        Some(Boundary::Lower) => writeln!(
            out,
            "note: rate decreases over the whole range; optimum at the lower bound"
        )?,
        Some(Boundary::Upper) => writeln!(
            out,
            "note: rate increases over the whole range; optimum at the upper bound"
        )?,
        None => {}
    }
    writeln!(
        out,
        "N_ele {:.6e}, N_LO {:.6e} (output-referred)",
        o.result.budget.n_ele, o.result.budget.n_lo
    )?;
    print_result(out, &o.result)?;
    Ok(Status::from_rate(o.result.delta_i))
}

fn montecarlo(
    l: &Loaded,
    output: Option<PathBuf>,
    trace_out: Option<PathBuf>,
    quadratures_out: Option<PathBuf>,
    level: Option<usize>,
    out: &mut dyn Write,
) -> Result<Status> {
    let template = l.cfg.sim_config()?;
    let levels = l.cfg.sim_levels()?;
    if levels.len() < 3 {
        bail!("a scan needs at least 3 LO levels");
    }
    // independent per-level streams: parallel and serial runs agree exactly
    let scan = (0..levels.len())
        .into_par_iter()
        .map(|i| simulate_level(&template, &levels, i))
        .collect::<Result<Vec<_>, _>>()?;
    let pts: Vec<(f64, f64)> = scan.iter().map(|p| (p.photons_per_pulse, p.variance)).collect();
    let q = fit_quadratic(&pts)?;
    let (pa, pb, pc) = template.predicted_variance_coefficients();
    let meta = l.meta("montecarlo").option("seed", template.seed);

    writeln!(out, "config: {}", l.source)?;
    writeln!(
        out,
        "seed {}, {} levels x {} pulses, readout {:?}",
        template.seed,
        levels.len(),
        template.n_pulses,
        template.readout
    )?;
    writeln!(out, "fit: variance = a I^2 + b I + c, R^2 = {:.6}", q.r_squared)?;
    writeln!(
        out,
        "{:<4} {:>14} {:>12} {:>14} {:>8}",
        "", "fitted", "std err", "predicted", "ratio"
    )?;
    for (name, v, se, p) in [("a", q.a, q.se_a, pa), ("b", q.b, q.se_b, pb), ("c", q.c, q.se_c, pc)] {
        writeln!(out, "{name:<4} {v:>14.6e} {se:>12.3e} {p:>14.6e} {:>8.4}", v / p)?;
    }
    let status = match decompose_noise(&q) {
        Ok(d) => {
            let true_c_lo = pa / pb;
            let true_c_ele = pc / pb;
            writeln!(
                out,
                "c_lo  fitted {:.6e} +- {:.2e}, expected {:.6e} (I f^2 delta^2 per photon)",
                d.c_lo, d.c_lo_se, true_c_lo
            )?;
            writeln!(
                out,
                "c_ele fitted {:.6e} +- {:.2e}, configured {:.6e}",
                d.c_ele,
                d.c_ele_se,
                l.cfg.sim_electronic_coeff().unwrap_or(true_c_ele)
            )?;
            let at = l.cfg.lo.photons_per_pulse;
            if d.c_ele > 0.0 && true_c_ele > 0.0 {
                writeln!(
                    out,
                    "shot/electronic at I_LO = {at:e}: fitted {:.3} dB, configured {:.3} dB",
                    d.shot_to_electronic_db(at),
                    10.0 * (at / true_c_ele).log10()
                )?;
            } else {
                writeln!(out, "shot/electronic ratio undefined (non-positive electronic term)")?;
            }
            Status::Success
        }
        Err(e) => {
            writeln!(out, "decomposition undefined: {e}")?;
            Status::NoKey
        }
    };

    if let Some(path) = output {
        let rows: Vec<Vec<f64>> = scan
            .iter()
            .map(|p| {
                let i = p.photons_per_pulse;
                vec![i, p.variance, p.mean, p.n as f64, (pa * i + pb) * i + pc, q.eval(i)]
            })
            .collect();
        write_table(
            create(&path)?,
            &meta,
            &[
                "lo_photons_per_pulse",
                "variance",
                "mean",
                "pulses",
                "predicted_variance",
                "fitted_variance",
            ],
            &rows,
        )?;
    }
    if trace_out.is_some() || quadratures_out.is_some() {
        let index = level.unwrap_or(levels.len() - 1);
        if index >= levels.len() {
            bail!("--level {index} out of range (0..{})", levels.len());
        }
        let cfg = gmcs_core::montecarlo::SimConfig {
            lo_photons_per_pulse: levels[index],
            ..template
        };
        let trace = simulate_trace_task(&cfg, index as u64)?;
        let meta = meta
            .option("level", index)
            .option("level_photons_per_pulse", levels[index]);
        if let Some(path) = trace_out {
            write_trace(create(&path)?, &meta, trace.sample_period_s, &trace.samples)?;
        }
        if let Some(path) = quadratures_out {
            let q = read_quadratures(&trace, cfg.readout)?;
            write_values(create(&path)?, &meta, &q.values)?;
        }
    }
    Ok(status)
}

struct CcOpts {
    trace: Option<PathBuf>,
    value: Option<f64>,
    variance_snu: Option<f64>,
    repetition_mhz: Option<f64>,
    window_ns: Option<f64>,
    offset_ns: Option<f64>,
    readout: Option<ReadoutArg>,
    output: Option<PathBuf>,
}

fn report_cc(out: &mut dyn Write, label: &str, c: Correlation, pairs: usize) -> Result<Option<f64>> {
    match c {
        Correlation::Defined(v) => {
            if pairs > 0 {
                writeln!(
                    out,
                    "{label}: {v:.6} ({pairs} pairs, 1/sqrt(n) = {:.4})",
                    1.0 / (pairs as f64).sqrt()
                )?;
            } else {
                writeln!(out, "{label}: {v:.6}")?;
            }
            Ok(Some(v))
        }
        Correlation::Undefined => {
            writeln!(out, "{label}: undefined (constant quadratures)")?;
            Ok(None)
        }
    }
}

fn cc(l: Option<&Loaded>, o: &CcOpts, out: &mut dyn Write) -> Result<Status> {
    let cfg = l.map(|l| &l.cfg);
    let readout = |fallback: Readout| match o.readout {
        Some(ReadoutArg::Window) => Readout::Window,
        Some(ReadoutArg::Peak) => Readout::Peak,
        None => fallback,
    };
    let mut meta = match l {
        Some(l) => l.meta("cc"),
        None => Metadata::new("cc"),
    };
    let (value, quadratures) = if let Some(v) = o.value {
        (report_cc(out, "CC (given)", Correlation::Defined(v), 0)?, None)
    } else if let Some(path) = &o.trace {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let raw = read_trace(&text).with_context(|| format!("parsing {}", path.display()))?;
        let sim = cfg.and_then(|c| c.sim.as_ref());
        let rep = o
            .repetition_mhz
            .or(cfg.and_then(|c| c.modulation.repetition_mhz))
            .ok_or_else(|| anyhow!("trace analysis needs --repetition-mhz (or modulation.repetition_mhz)"))?
            * 1e6;
        let window = o
            .window_ns
            .or(sim.map(|s| s.window_ns))
            .ok_or_else(|| anyhow!("trace analysis needs --window-ns (or sim.window_ns)"))?
            * 1e-9;
        let offset = o
            .offset_ns
            .map(|t| t * 1e-9)
            .or(cfg.and_then(|c| c.trace_offset_s()))
            .unwrap_or(0.5 / rep);
        let default_readout = match sim.map(|s| s.readout) {
            Some(config::ReadoutKind::Peak) => Readout::Peak,
            _ => Readout::Window,
        };
        let trace = PulseTrace::segment(raw.sample_period_s, raw.samples, rep, window, offset)?;
        let q = read_quadratures(&trace, readout(default_readout))?;
        writeln!(out, "trace: {} ({} pulses)", path.display(), q.len())?;
        meta = meta
            .option("trace", path.display())
            .option("repetition_hz", rep)
            .option("window_s", window)
            .option("offset_s", offset);
        let c = correlation_coefficient(&q)?;
        (report_cc(out, "CC", c, q.len().saturating_sub(1))?, Some(q))
    } else {
        let l = l.ok_or_else(|| anyhow!("give --config, --trace or --value"))?;
        let mut sim = l.cfg.sim_config()?;
        sim.readout = readout(sim.readout);
        let q = simulate_quadratures(&sim, 0)?;
        writeln!(
            out,
            "simulated: {} pulses at {:e} photons/pulse, seed {}",
            q.len(),
            sim.lo_photons_per_pulse,
            sim.seed
        )?;
        meta = meta.option("seed", sim.seed);
        let total = report_cc(out, "CC (total)", correlation_coefficient(&q)?, q.len() - 1)?;
        if sim.electronic_noise_rms_volts > 0.0 {
            let shot = simulate_quadratures(
                &gmcs_core::montecarlo::SimConfig {
                    electronic_noise_rms_volts: 0.0,
                    ..sim
                },
                0,
            )?;
            report_cc(out, "CC (shot only)", correlation_coefficient(&shot)?, shot.len() - 1)?;
        }
        writeln!(out, "analytic CC: {:.6}", sim.predicted_cc())?;
        (total, Some(q))
    };

    if let (Some(path), Some(q)) = (&o.output, &quadratures) {
        write_values(create(path)?, &meta, &q.values)?;
    }
    let Some(v) = value else {
        return Ok(Status::NoKey);
    };
    let v_a = o.variance_snu.or(cfg.map(|c| c.modulation.variance_snu));
    match v_a {
        Some(v_a) => {
            let m = ModulationParams::new(v_a)?;
            writeln!(
                out,
                "overlap bound (V_A + 1) CC^2, 1 neighbor:  {:.6}",
                overlap_noise_from_cc(&m, v, 1)?
            )?;
            writeln!(
                out,
                "overlap bound (V_A + 1) CC^2, 2 neighbors: {:.6}",
                overlap_noise_from_cc(&m, v, 2)?
            )?;
            writeln!(out, "reference overlap estimate: {REFERENCE_OVERLAP}")?;
        }
        None => writeln!(out, "overlap bound: give --variance-snu or a config")?,
    }
    Ok(Status::Success)
}

fn fit(input: &Path, at_photons: Option<f64>, output: Option<PathBuf>, out: &mut dyn Write) -> Result<Status> {
    let text = std::fs::read_to_string(input).with_context(|| format!("reading {}", input.display()))?;
    let pts = read_two_column(&text).with_context(|| format!("parsing {}", input.display()))?;
    let q = fit_quadratic(&pts)?;
    writeln!(out, "{} points, y = a x^2 + b x + c", q.n)?;
    writeln!(out, "a = {:.6e} +- {:.3e}", q.a, q.se_a)?;
    writeln!(out, "b = {:.6e} +- {:.3e}", q.b, q.se_b)?;
    writeln!(out, "c = {:.6e} +- {:.3e}", q.c, q.se_c)?;
    writeln!(out, "R^2 = {:.6}", q.r_squared)?;
    match decompose_noise(&q) {
        Ok(d) => {
            writeln!(out, "c_ele = c/b = {:.6e} +- {:.3e}", d.c_ele, d.c_ele_se)?;
            writeln!(out, "c_lo  = a/b = {:.6e} +- {:.3e}", d.c_lo, d.c_lo_se)?;
            if let Some(i) = at_photons {
                writeln!(
                    out,
                    "shot/electronic at x = {i:e}: {:.3} dB",
                    d.shot_to_electronic_db(i)
                )?;
            }
        }
        Err(e) => writeln!(out, "no noise decomposition: {e}")?,
    }
    if let Some(path) = output {
        let rows: Vec<Vec<f64>> = pts.iter().map(|&(x, y)| vec![x, y, q.eval(x), y - q.eval(x)]).collect();
        let meta = Metadata::new("fit")
            .option("input", input.display())
            .option("a", q.a)
            .option("b", q.b)
            .option("c", q.c)
            .option("r_squared", q.r_squared);
        write_table(create(&path)?, &meta, &["x", "y", "fitted", "residual"], &rows)?;
    }
    Ok(Status::Success)
}
