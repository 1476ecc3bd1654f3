use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use num_complex::Complex64;
use serde::Serialize;
use serde_json::json;

use cvwitness::epr::{read_samples_csv, verdict_with_threshold, write_samples_csv, EXACT_VIOLATION_THRESHOLD};
use cvwitness::teleport::{fidelity_via_characteristic, TeleportInput};
use cvwitness::{
    apply_loss_thermal, detection_time, duan_test, empirical_witness, exact_expectation, figure_sweep, make_tmss,
    optimize_empirical, optimize_witness, sample_homodyne, separability_bounds, simon_test, Criterion,
    DetectionTimeSpec, EprMeasurementConfig, Figure, Mode, NoiseSpec, NoiseStage, OptimizationSpec, PmChannel,
    StateSpec, SweepConfig, TestFunction, TmssOperation, TmssSpec, TwoModeState,
};

mod config;

/// Bad arguments or configuration; exits with status 2.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct InvalidInput(pub String);

#[derive(Parser)]
#[command(name = "cvwitness", version, about = "Entanglement witnesses from EPR-type homodyne data")]
struct Cli {
    /// TOML file overriding the command's defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// RNG seed for sampling.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Write the result here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Separability bounds O_n of F(z) = e^{-Cz}(1 + Dz) as CSV.
    Bounds {
        #[arg(long = "C", visible_alias = "c", allow_hyphen_values = true)]
        c: f64,
        #[arg(long = "D", visible_alias = "d", default_value_t = 0.0, allow_hyphen_values = true)]
        d: f64,
        #[arg(long, default_value_t = 32)]
        nmax: usize,
    },
    /// Evaluate or optimize the witness on a state or on recorded data.
    Witness(WitnessArgs),
    /// Covariance-matrix criteria.
    Baseline {
        #[arg(long, value_enum)]
        criterion: Baseline,
        #[arg(long, value_parser = parse_state)]
        state: StateSpec,
        /// Local gain g of the Duan combination.
        #[arg(long, default_value_t = 1.0, allow_hyphen_values = true)]
        g: f64,
        #[arg(long = "phiA", visible_alias = "phi-a", default_value_t = 0.0, allow_hyphen_values = true)]
        phi_a: f64,
        #[arg(long = "phiB", visible_alias = "phi-b", default_value_t = 0.0, allow_hyphen_values = true)]
        phi_b: f64,
        #[command(flatten)]
        noise: NoiseArgs,
    },
    /// Braunstein-Kimble teleportation fidelity.
    Teleport {
        /// `tmss:s=<s>`, `pm:m=<m>` or `vacuum`.
        #[arg(long)]
        channel: String,
        /// `vacuum`, `coherent:<beta>` or `fock:<n>`.
        #[arg(long, default_value = "vacuum")]
        input: String,
    },
    /// Data table for one figure.
    Sweep {
        #[arg(long, value_parser = parse_figure)]
        figure: Figure,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
    },
    /// Largest log(1/eta) at which a criterion still detects entanglement.
    DetectTime {
        #[arg(long, value_parser = parse_state)]
        state: StateSpec,
        /// Occupation of the thermal reservoir.
        #[arg(long, default_value_t = 0.0)]
        nth: f64,
        #[arg(long, value_parser = parse_criterion, default_value = "ours")]
        criterion: Criterion,
    },
}

#[derive(Args)]
struct WitnessArgs {
    #[arg(long, value_parser = parse_state, required_unless_present = "data")]
    state: Option<StateSpec>,
    /// Homodyne records `x1,p2,o_epr` to evaluate instead of a state.
    #[arg(long, conflicts_with_all = ["state", "noise"])]
    data: Option<PathBuf>,
    #[arg(long = "C", visible_alias = "c", default_value_t = 1.0)]
    c: f64,
    #[arg(long = "D", visible_alias = "d", default_value_t = 0.0, allow_hyphen_values = true)]
    d: f64,
    #[arg(long = "phiA", visible_alias = "phi-a", default_value_t = 0.0, allow_hyphen_values = true)]
    phi_a: f64,
    #[arg(long = "phiB", visible_alias = "phi-b", default_value_t = 0.0, allow_hyphen_values = true)]
    phi_b: f64,
    /// Record length N.
    #[arg(long = "N", visible_alias = "samples", default_value_t = 100_000)]
    samples: usize,
    /// Draw N samples and report the empirical estimate.
    #[arg(long)]
    empirical: bool,
    /// Search (C, D) and, for states, the phases.
    #[arg(long)]
    optimize: bool,
    /// Significance required for an empirical verdict.
    #[arg(long, default_value_t = cvwitness::epr::DEFAULT_SIGNIFICANCE)]
    threshold: f64,
    /// Write the drawn samples as CSV.
    #[arg(long)]
    samples_out: Option<PathBuf>,
    #[command(flatten)]
    noise: NoiseArgs,
}

#[derive(Args)]
#[group(id = "noise", multiple = true)]
struct NoiseArgs {
    /// Transmissivity of the thermal attenuator on both modes.
    #[arg(long, default_value_t = 1.0)]
    eta: f64,
    #[arg(long, default_value_t = 0.0)]
    nth: f64,
    #[arg(long, value_enum, default_value_t = Stage::Channel)]
    stage: Stage,
}

#[derive(Clone, Copy, ValueEnum)]
enum Stage {
    Channel,
    Detection,
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum Baseline {
    Simon,
    Duan,
}

#[derive(Clone, Copy, ValueEnum, PartialEq)]
enum Format {
    Csv,
    Json,
}

fn parse_state(s: &str) -> Result<StateSpec, cvwitness::Error> {
    s.parse()
}

fn parse_figure(s: &str) -> Result<Figure, cvwitness::Error> {
    s.parse()
}

fn parse_criterion(s: &str) -> Result<Criterion, cvwitness::Error> {
    s.parse()
}

impl NoiseArgs {
    fn spec(&self) -> anyhow::Result<Option<NoiseSpec>> {
        let stage = match self.stage {
            Stage::Channel => NoiseStage::Channel,
            Stage::Detection => NoiseStage::Detection,
        };
        let spec = NoiseSpec::new(self.eta, self.nth, stage)?;
        Ok((!spec.is_identity()).then_some(spec))
    }

    /// Channel-stage noise applied to the state; detection-stage noise returned for the detectors.
    fn apply(&self, state: TwoModeState) -> anyhow::Result<(TwoModeState, Option<NoiseSpec>)> {
        match self.spec()? {
            Some(n) if n.stage == NoiseStage::Channel => Ok((apply_loss_thermal(&state, &n, &[Mode::A, Mode::B])?, None)),
            other => Ok((state, other)),
        }
    }
}

fn sink(out: Option<&Path>) -> anyhow::Result<Box<dyn Write>> {
    Ok(match out {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("cannot create {}", p.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn emit_json(out: Option<&Path>, value: &impl Serialize) -> anyhow::Result<()> {
    let mut w = sink(out)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn test_function(c: f64, d: f64) -> anyhow::Result<TestFunction> {
    Ok(if d == 0.0 {
        TestFunction::exponential(c, vec![])?
    } else {
        TestFunction::linear(c, d)?
    })
}

fn run_bounds(cli: &Cli, c: f64, d: f64, nmax: usize) -> anyhow::Result<()> {
    let b = separability_bounds(&test_function(c, d)?, nmax)?;
    let mut w = sink(cli.out.as_deref())?;
    writeln!(w, "kind,n,value")?;
    for (n, v) in b.values.iter().enumerate() {
        writeln!(w, "o_n,{n},{v}")?;
    }
    writeln!(w, "f_min,{},{}", b.n_at_min, b.f_min)?;
    writeln!(w, "f_max,{},{}", b.n_at_max, b.f_max)?;
    writeln!(w, "tail_bound,,{}", b.tail_bound)?;
    writeln!(w, "converged,,{}", b.converged)?;
    w.flush()?;
    Ok(())
}

fn run_witness(cli: &Cli, a: &WitnessArgs) -> anyhow::Result<()> {
    let seed = cli.seed.unwrap_or(0);
    if a.optimize {
        let mut spec = config::load(cli.config.as_deref(), OptimizationSpec::default())?;
        spec.samples = a.samples;
        return match (&a.data, &a.state) {
            (Some(path), _) => {
                let samples = read_data(path)?;
                let opt = optimize_empirical(&samples, (a.phi_a, a.phi_b), &spec)?;
                emit_json(cli.out.as_deref(), &json!({ "data": path, "optimum": opt }))
            }
            (None, Some(state_spec)) => {
                let (state, detector) = a.noise.apply(state_spec.build()?)?;
                spec.detection_noise = detector.or(spec.detection_noise);
                let opt = if a.empirical {
                    let cfg = measurement(a, seed, spec.detection_noise);
                    let samples = sample_homodyne(&state, &cfg)?;
                    write_samples(a, &samples)?;
                    optimize_empirical(&samples, (a.phi_a, a.phi_b), &spec)?
                } else {
                    optimize_witness(&state, &spec)?
                };
                emit_json(cli.out.as_deref(), &json!({ "state": state_spec.to_string(), "optimum": opt }))
            }
            (None, None) => unreachable!("clap requires --state or --data"),
        };
    }
    let f = test_function(a.c, a.d)?;
    let bounds = separability_bounds(&f, 32)?;
    let (label, est, threshold) = match (&a.data, &a.state) {
        (Some(path), _) => {
            let samples = read_data(path)?;
            (json!({ "data": path }), empirical_witness(&samples, &f)?, Some(a.threshold))
        }
        (None, Some(state_spec)) => {
            let (state, detector) = a.noise.apply(state_spec.build()?)?;
            let cfg = measurement(a, seed, detector);
            let label = json!({ "state": state_spec.to_string() });
            if a.empirical {
                let samples = sample_homodyne(&state, &cfg)?;
                write_samples(a, &samples)?;
                (label, empirical_witness(&samples, &f)?, Some(a.threshold))
            } else {
                (label, exact_expectation(&state, &f, &cfg)?, None)
            }
        }
        (None, None) => unreachable!("clap requires --state or --data"),
    };
    let v = if let Some(threshold) = threshold {
        verdict_with_threshold(&est, &bounds, threshold)?
    } else {
        let violation = (est.mean - bounds.f_max).max(bounds.f_min - est.mean);
        cvwitness::Verdict {
            violation,
            significance: est.delta_e.filter(|&e| e > 0.0).map(|e| violation / e),
            entangled: bounds.converged && violation > EXACT_VIOLATION_THRESHOLD,
        }
    };
    let report = json!({
        "source": label,
        "c": a.c,
        "d": a.d,
        "phi_a": a.phi_a,
        "phi_b": a.phi_b,
        "estimate": est,
        "f_min": bounds.f_min,
        "f_max": bounds.f_max,
        "bounds_converged": bounds.converged,
        "verdict": v,
    });
    emit_json(cli.out.as_deref(), &report)
}

fn measurement(a: &WitnessArgs, seed: u64, detection_noise: Option<NoiseSpec>) -> EprMeasurementConfig {
    EprMeasurementConfig {
        samples: a.samples,
        seed,
        detection_noise,
        ..EprMeasurementConfig::with_phases(a.phi_a, a.phi_b)
    }
}

fn read_data(path: &Path) -> anyhow::Result<Vec<cvwitness::HomodyneSample>> {
    let f = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    Ok(read_samples_csv(BufReader::new(f))?)
}

fn write_samples(a: &WitnessArgs, samples: &[cvwitness::HomodyneSample]) -> anyhow::Result<()> {
    if let Some(p) = &a.samples_out {
        let f = File::create(p).with_context(|| format!("cannot create {}", p.display()))?;
        write_samples_csv(samples, BufWriter::new(f))?;
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn run_baseline(
    cli: &Cli,
    criterion: Baseline,
    state_spec: &StateSpec,
    g: f64,
    phi_a: f64,
    phi_b: f64,
    noise: &NoiseArgs,
) -> anyhow::Result<()> {
    let mut state = state_spec.build()?;
    if let Some(n) = noise.spec()? {
        state = apply_loss_thermal(&state, &n, &[Mode::A, Mode::B])?;
    }
    let report = match criterion {
        Baseline::Simon => serde_json::to_value(simon_test(&state)?)?,
        Baseline::Duan => serde_json::to_value(duan_test(&state, g, phi_a, phi_b)?)?,
    };
    emit_json(
        cli.out.as_deref(),
        &json!({ "state": state_spec.to_string(), "criterion": criterion, "report": report }),
    )
}

enum Channel {
    Tmss(f64),
    Pm(PmChannel),
}

fn parse_channel(s: &str) -> anyhow::Result<Channel> {
    let num = |v: &str| -> anyhow::Result<f64> {
        v.parse().map_err(|_| InvalidInput(format!("channel parameter `{v}` is not a number")).into())
    };
    if s == "vacuum" {
        return Ok(Channel::Tmss(0.0));
    }
    if let Some(v) = s.strip_prefix("tmss:s=") {
        return Ok(Channel::Tmss(num(v)?));
    }
    if let Some(v) = s.strip_prefix("pm:m=") {
        let m: u32 = v.parse().map_err(|_| InvalidInput(format!("pm: m must be a positive integer, got `{v}`")))?;
        return Ok(Channel::Pm(PmChannel::new(m)?));
    }
    bail!(InvalidInput(format!("unknown channel `{s}` (expected tmss:s=..., pm:m=... or vacuum)")))
}

fn parse_input(s: &str) -> anyhow::Result<TeleportInput> {
    if s == "vacuum" {
        return Ok(TeleportInput::Coherent(Complex64::new(0.0, 0.0)));
    }
    if let Some(v) = s.strip_prefix("coherent:") {
        let beta: Complex64 = v.parse().map_err(|_| InvalidInput(format!("bad coherent amplitude `{v}`")))?;
        return Ok(TeleportInput::Coherent(beta));
    }
    if let Some(v) = s.strip_prefix("fock:") {
        let n: usize = v.parse().map_err(|_| InvalidInput(format!("bad photon number `{v}`")))?;
        return Ok(TeleportInput::Fock(n));
    }
    bail!(InvalidInput(format!("unknown input `{s}` (expected vacuum, coherent:<beta> or fock:<n>)")))
}

/// Gauss-Hermite nodes per axis for Fock inputs.
const CHARACTERISTIC_NODES: usize = 48;

fn run_teleport(cli: &Cli, channel: &str, input: &str) -> anyhow::Result<()> {
    let ch = parse_channel(channel)?;
    let inp = parse_input(input)?;
    let (fidelity, e1) = match ch {
        Channel::Tmss(s) => {
            let state = make_tmss(TmssSpec { s, operation: TmssOperation::None })?;
            let report = cvwitness::fidelity_via_epr(&state)?;
            let fidelity = match inp {
                TeleportInput::Coherent(_) => report.fidelity,
                TeleportInput::Fock(_) => fidelity_via_characteristic(inp, &state, CHARACTERISTIC_NODES),
            };
            (fidelity, report.e1)
        }
        Channel::Pm(p) => {
            let fidelity = match inp {
                TeleportInput::Coherent(_) => p.vacuum_fidelity()?,
                TeleportInput::Fock(n) => p.fock_input_fidelity(n)?,
            };
            (fidelity, p.e1()?)
        }
    };
    emit_json(
        cli.out.as_deref(),
        &json!({
            "channel": channel,
            "input": input,
            "fidelity": fidelity,
            "E1": e1,
            "bound": 1.0 - e1,
        }),
    )
}

fn run_sweep(cli: &Cli, figure: Figure, format: Format) -> anyhow::Result<()> {
    let mut cfg = config::load(cli.config.as_deref(), SweepConfig::for_figure(figure))?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    let result = figure_sweep(figure, &cfg)?;
    let mut w = sink(cli.out.as_deref())?;
    match format {
        Format::Csv => result.write_csv(&mut w)?,
        Format::Json => writeln!(w, "{}", result.to_json()?)?,
    }
    w.flush()?;
    Ok(())
}

fn run_detect_time(cli: &Cli, state_spec: &StateSpec, nth: f64, criterion: Criterion) -> anyhow::Result<()> {
    let spec = config::load(cli.config.as_deref(), DetectionTimeSpec::default())?;
    let state = state_spec.build()?;
    let t = detection_time(&state, nth, criterion, &spec)?;
    emit_json(
        cli.out.as_deref(),
        &json!({
            "state": state_spec.to_string(),
            "n_th": nth,
            "criterion": criterion,
            "time": t,
            "resolution": spec.resolution,
            "reached_t_max": t >= spec.t_max,
        }),
    )
}

fn run(cli: &Cli) -> anyhow::Result<()> {
    match &cli.command {
        Command::Bounds { c, d, nmax } => run_bounds(cli, *c, *d, *nmax),
        Command::Witness(a) => run_witness(cli, a),
        Command::Baseline { criterion, state, g, phi_a, phi_b, noise } => {
            run_baseline(cli, *criterion, state, *g, *phi_a, *phi_b, noise)
        }
        Command::Teleport { channel, input } => run_teleport(cli, channel, input),
        Command::Sweep { figure, format } => run_sweep(cli, *figure, *format),
        Command::DetectTime { state, nth, criterion } => run_detect_time(cli, state, *nth, *criterion),
    }
}

fn is_invalid_input(err: &anyhow::Error) -> bool {
    if err.downcast_ref::<InvalidInput>().is_some() {
        return true;
    }
    matches!(
        err.downcast_ref::<cvwitness::Error>(),
        Some(cvwitness::Error::InvalidParameter(_) | cvwitness::Error::Parse(_))
    )
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => e.exit(),
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if is_invalid_input(&e) {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
