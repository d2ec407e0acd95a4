//! Command-line front end.
//!
//! `design.json` schema:
//!
//! ```json
//! {
//!   "order": 8,
//!   "n_iter": 2,
//!   "conv_tol": 1e-4,
//!   "eps_margin": 1e-6,
//!   "stroke": { "limit_m": 5e-8, "interpretation": "THREE_SIGMA" },
//!   "weights": { "s_vcm": "weights_s_vcm.csv", "s_dsa": "weights_s_dsa.csv",
//!                "u_vcm": "weights_u_vcm.csv", "u_dsa": "weights_u_dsa.csv" },
//!   "spectra": { "dp": "dp.csv", "df": "df.csv" },
//!   "ts": 1.984126984126984e-5,
//!   "plants": "plants.csv"
//! }
//! ```
//!
//! Paths are relative to the config file. `n_iter`, `conv_tol`,
//! `eps_margin` and the stroke interpretation are optional. Weight entries
//! may be omitted, in which case synthesis reports a missing weight. `plants`
//! is optional and only used when `--plants` is not given to `eval` or `sim`.
//! Curves on a grid other than the plant grid are interpolated onto it.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::benchgen::{self, BenchConfig, Manifest};
use crate::error::{Error, Result};
use crate::evalsim::{self, CaseMetrics, NoiseKind, SimulationConfig};
use crate::freqdata::{self, PlantSet, WeightCurve};
use crate::io::{write_atomic, write_json};
use crate::polysys::Controller;
use crate::synth::{
    self, StrokeInterpretation, StrokeLimit, SynthesisSpec, WeightSet, DEFAULT_CONV_TOL, DEFAULT_EPS_MARGIN,
    DEFAULT_N_ITER, UNSTABLE_CERTIFICATE,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_INFEASIBLE: i32 = 3;
pub const EXIT_UNSTABLE: i32 = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignConfig {
    pub order: usize,
    #[serde(default = "default_n_iter")]
    pub n_iter: usize,
    #[serde(default = "default_conv_tol")]
    pub conv_tol: f64,
    #[serde(default = "default_eps_margin")]
    pub eps_margin: f64,
    pub stroke: StrokeLimit,
    pub weights: WeightPaths,
    pub spectra: SpectraPaths,
    /// Sample time of the discrete-time loop, in seconds.
    pub ts: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plants: Option<PathBuf>,
}

fn default_n_iter() -> usize {
    DEFAULT_N_ITER
}

fn default_conv_tol() -> f64 {
    DEFAULT_CONV_TOL
}

fn default_eps_margin() -> f64 {
    DEFAULT_EPS_MARGIN
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightPaths {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s_vcm: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s_dsa: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub u_vcm: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub u_dsa: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectraPaths {
    pub dp: PathBuf,
    pub df: PathBuf,
}

/// Config file contents with every path resolved against its directory.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: DesignConfig,
    pub dir: PathBuf,
}

impl LoadedConfig {
    pub fn read(path: &Path) -> Result<Self> {
        let config: DesignConfig = crate::io::read_json(path)?;
        if !(config.ts.is_finite() && config.ts > 0.0) {
            return Err(Error::Config(format!("{}: ts must be positive", path.display())));
        }
        let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(Self { config, dir })
    }

    fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.dir.join(p)
        }
    }

    pub fn plants_path(&self, explicit: Option<&Path>) -> Result<PathBuf> {
        match (explicit, &self.config.plants) {
            (Some(p), _) => Ok(p.to_path_buf()),
            (None, Some(p)) => Ok(self.resolve(p)),
            (None, None) => Err(Error::Config("no plant data: pass --plants or set \"plants\" in the config".into())),
        }
    }

    pub fn spec(&self, plants: PlantSet) -> Result<SynthesisSpec> {
        let c = &self.config;
        let grid = plants.grid().clone();
        let weight = |p: &Option<PathBuf>| -> Result<Option<WeightCurve>> {
            p.as_ref()
                .map(|p| freqdata::resample_weight(&freqdata::load_weight(self.resolve(p), c.ts)?, &grid))
                .transpose()
        };
        let spectrum = |p: &Path| freqdata::resample(&freqdata::load_spectrum(self.resolve(p), c.ts)?, &grid);
        let spec = SynthesisSpec {
            order: c.order,
            weights: WeightSet {
                s_vcm: weight(&c.weights.s_vcm)?,
                s_dsa: weight(&c.weights.s_dsa)?,
                u_vcm: weight(&c.weights.u_vcm)?,
                u_dsa: weight(&c.weights.u_dsa)?,
            },
            dp: spectrum(&c.spectra.dp)?,
            df: spectrum(&c.spectra.df)?,
            stroke: c.stroke,
            eps_margin: c.eps_margin,
            n_iter: c.n_iter,
            conv_tol: c.conv_tol,
            plants,
        };
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Debug, Parser)]
#[command(name = "ddtrack", version, about = "Fixed-order dual-stage controller synthesis from frequency-response data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate the synthetic benchmark and a matching design.json
    GenBench(GenBenchArgs),
    /// Synthesize a controller
    Synth(SynthArgs),
    /// Evaluate a controller against the design constraints
    Eval(EvalArgs),
    /// Simulate the dual-stage loop under white-noise disturbances
    Sim(SimArgs),
}

#[derive(Debug, clap::Args)]
struct GenBenchArgs {
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Output directory
    #[arg(long)]
    out: PathBuf,
    /// Frequency points from 0 Hz to Nyquist
    #[arg(long, default_value_t = 300)]
    points: usize,
    /// Sensitivity weight bandwidth in Hz
    #[arg(long, default_value_t = 600.0)]
    bw: f64,
    /// Relative spread of the mode frequencies
    #[arg(long, default_value_t = 0.05)]
    perturbation: f64,
    /// Controller order written to design.json
    #[arg(long, default_value_t = 8)]
    order: usize,
    /// Stroke limit in m written to design.json
    #[arg(long, default_value_t = 50e-9)]
    mu: f64,
}

#[derive(Debug, clap::Args)]
struct Overrides {
    /// Controller order
    #[arg(long)]
    order: Option<usize>,
    /// Number of sequential iterations
    #[arg(long)]
    n_iter: Option<usize>,
    /// Relative objective decrease that stops iterating
    #[arg(long)]
    conv_tol: Option<f64>,
    /// Stroke limit in m
    #[arg(long)]
    mu: Option<f64>,
    /// Stroke limit reading
    #[arg(long, value_enum)]
    stroke: Option<StrokeArg>,
    /// Positivity margin
    #[arg(long)]
    eps: Option<f64>,
}

impl Overrides {
    fn apply(&self, c: &mut DesignConfig) {
        if let Some(v) = self.order {
            c.order = v;
        }
        if let Some(v) = self.n_iter {
            c.n_iter = v;
        }
        if let Some(v) = self.conv_tol {
            c.conv_tol = v;
        }
        if let Some(v) = self.mu {
            c.stroke.limit_m = v;
        }
        if let Some(v) = self.stroke {
            c.stroke.interpretation = v.into();
        }
        if let Some(v) = self.eps {
            c.eps_margin = v;
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum StrokeArg {
    VarianceBound,
    ThreeSigma,
}

impl From<StrokeArg> for StrokeInterpretation {
    fn from(v: StrokeArg) -> Self {
        match v {
            StrokeArg::VarianceBound => StrokeInterpretation::VarianceBound,
            StrokeArg::ThreeSigma => StrokeInterpretation::ThreeSigma,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum NoiseArg {
    Uniform,
    Gaussian,
}

impl From<NoiseArg> for NoiseKind {
    fn from(v: NoiseArg) -> Self {
        match v {
            NoiseArg::Uniform => NoiseKind::Uniform,
            NoiseArg::Gaussian => NoiseKind::Gaussian,
        }
    }
}

#[derive(Debug, clap::Args)]
struct SynthArgs {
    #[arg(long, default_value = "design.json")]
    config: PathBuf,
    /// Plant frequency responses
    #[arg(long)]
    plants: PathBuf,
    /// Controller JSON
    #[arg(long)]
    out: PathBuf,
    /// Design report JSON
    #[arg(long)]
    report: Option<PathBuf>,
    /// Constraint audit CSV
    #[arg(long)]
    audit: Option<PathBuf>,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Debug, clap::Args)]
struct EvalArgs {
    #[arg(long, default_value = "design.json")]
    config: PathBuf,
    /// Plant frequency responses, defaults to the config entry
    #[arg(long)]
    plants: Option<PathBuf>,
    #[arg(long)]
    controller: PathBuf,
    /// Evaluation JSON
    #[arg(long)]
    out: PathBuf,
    /// Closed-loop Bode CSV
    #[arg(long)]
    bode: Option<PathBuf>,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Debug, clap::Args)]
struct SimArgs {
    #[arg(long, default_value = "design.json")]
    config: PathBuf,
    /// Plant frequency responses, defaults to the config entry
    #[arg(long)]
    plants: Option<PathBuf>,
    #[arg(long)]
    controller: PathBuf,
    /// Case id or 1-based index; all cases when omitted
    #[arg(long)]
    case: Option<String>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Record length, a power of two
    #[arg(long, default_value_t = 1 << 18)]
    samples: usize,
    #[arg(long, value_enum, default_value_t = NoiseArg::Uniform)]
    noise: NoiseArg,
    /// Track width in m
    #[arg(long, default_value_t = 100e-9)]
    track_width: f64,
    /// Metrics JSON
    #[arg(long, default_value = "metrics.json")]
    out: PathBuf,
    /// Time series CSV, needs a single case
    #[arg(long)]
    series: Option<PathBuf>,
}

/// Runs the CLI and returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    let result = match cli.command {
        Command::GenBench(a) => gen_bench(a),
        Command::Synth(a) => synth_cmd(a),
        Command::Eval(a) => eval_cmd(a),
        Command::Sim(a) => sim_cmd(a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Parse { .. }
        | Error::Invariant(_)
        | Error::Extrapolation { .. }
        | Error::GridMismatch(_)
        | Error::MissingWeight(_)
        | Error::Config(_)
        | Error::Io { .. }
        | Error::Json { .. } => EXIT_CONFIG,
        Error::Infeasible(_) => EXIT_INFEASIBLE,
        Error::SingularDenominator { .. } | Error::Winding(_) | Error::Solver { .. } => EXIT_FAILURE,
    }
}

fn gen_bench(a: GenBenchArgs) -> Result<i32> {
    let cfg = BenchConfig {
        seed: a.seed,
        n_points: a.points,
        target_bw_hz: a.bw,
        perturbation: a.perturbation,
        ..BenchConfig::default()
    };
    cfg.validate()?;
    std::fs::create_dir_all(&a.out).map_err(|e| Error::Io {
        path: a.out.clone(),
        source: e,
    })?;
    let plants = benchgen::gen_plants(&cfg)?;
    let (dp, df, df_gain) = benchgen::scaled_spectra(&cfg)?;
    let weights = benchgen::gen_weights(&cfg, cfg.target_bw_hz)?;

    let mut files = Vec::new();
    let mut put = |name: &str| -> PathBuf {
        files.push(name.to_string());
        a.out.join(name)
    };
    freqdata::save_plant_set(&plants, put("plants.csv"))?;
    freqdata::save_spectrum(&dp, put("dp.csv"))?;
    freqdata::save_spectrum(&df, put("df.csv"))?;
    let slots = [
        ("weights_s_vcm.csv", &weights.s_vcm),
        ("weights_s_dsa.csv", &weights.s_dsa),
        ("weights_u_vcm.csv", &weights.u_vcm),
        ("weights_u_dsa.csv", &weights.u_dsa),
    ];
    for (name, w) in slots {
        let w = w.as_ref().expect("benchmark defines every weight");
        freqdata::save_weight(w, put(name))?;
    }
    let design = DesignConfig {
        order: a.order,
        n_iter: DEFAULT_N_ITER,
        conv_tol: DEFAULT_CONV_TOL,
        eps_margin: DEFAULT_EPS_MARGIN,
        stroke: StrokeLimit {
            limit_m: a.mu,
            interpretation: StrokeInterpretation::ThreeSigma,
        },
        weights: WeightPaths {
            s_vcm: Some("weights_s_vcm.csv".into()),
            s_dsa: Some("weights_s_dsa.csv".into()),
            u_vcm: Some("weights_u_vcm.csv".into()),
            u_dsa: Some("weights_u_dsa.csv".into()),
        },
        spectra: SpectraPaths {
            dp: "dp.csv".into(),
            df: "df.csv".into(),
        },
        ts: cfg.ts,
        plants: Some("plants.csv".into()),
    };
    write_json(&put("design.json"), &design)?;
    files.push("manifest.json".into());
    let manifest = Manifest {
        variants: benchgen::draw_variants(&cfg),
        df_gain,
        cases: plants.cases().iter().map(|c| c.id.clone()).collect(),
        files,
        config: cfg,
    };
    write_json(&a.out.join("manifest.json"), &manifest)?;
    Ok(EXIT_OK)
}

fn load_spec(config: &Path, plants: Option<&Path>, overrides: &Overrides) -> Result<SynthesisSpec> {
    let mut loaded = LoadedConfig::read(config)?;
    overrides.apply(&mut loaded.config);
    let path = loaded.plants_path(plants)?;
    let set = freqdata::load_plant_set(&path, loaded.config.ts)?;
    loaded.spec(set)
}

fn synth_cmd(a: SynthArgs) -> Result<i32> {
    let spec = load_spec(&a.config, Some(&a.plants), &a.overrides)?;
    let report = synth::synthesize(&spec)?;
    report.controller.save(&a.out)?;
    if let Some(p) = &a.report {
        let mut text = report.to_json();
        text.push('\n');
        write_atomic(p, text.as_bytes())?;
    }
    if let Some(p) = &a.audit {
        write_atomic(p, synth::format_audit_csv(&report.audit).as_bytes())?;
    }
    for f in &report.flags {
        eprintln!("warning: {f}");
    }
    if report.is_flagged(UNSTABLE_CERTIFICATE) {
        for (plant, cfg, m) in report.positivity.iter().filter(|(_, _, m)| *m <= 0.0) {
            eprintln!("  positivity margin {m:.3e} on {plant} ({})", cfg.as_str());
        }
        return Ok(EXIT_UNSTABLE);
    }
    Ok(EXIT_OK)
}

fn eval_cmd(a: EvalArgs) -> Result<i32> {
    let spec = load_spec(&a.config, a.plants.as_deref(), &a.overrides)?;
    let k = Controller::load(&a.controller)?;
    check_ts(&k, &spec)?;
    let report = evalsim::evaluate(&k, &spec)?;
    write_json(&a.out, &report)?;
    if let Some(p) = &a.bode {
        write_atomic(p, evalsim::bode_csv(&k, &spec)?.as_bytes())?;
    }
    Ok(EXIT_OK)
}

fn check_ts(k: &Controller, spec: &SynthesisSpec) -> Result<()> {
    let ts = spec.grid().ts();
    if (k.ts() - ts).abs() > 1e-9 * ts {
        return Err(Error::Config(format!("controller ts {} differs from data ts {}", k.ts(), ts)));
    }
    Ok(())
}

fn pick_cases<'a>(set: &'a PlantSet, sel: Option<&str>) -> Result<Vec<&'a freqdata::PlantCase>> {
    let Some(sel) = sel else {
        return Ok(set.cases().iter().collect());
    };
    if let Some(c) = set.case(sel) {
        return Ok(vec![c]);
    }
    match sel.parse::<usize>() {
        Ok(i) if (1..=set.len()).contains(&i) => Ok(vec![&set.cases()[i - 1]]),
        _ => Err(Error::Config(format!("no case '{sel}' among {} cases", set.len()))),
    }
}

fn sim_cmd(a: SimArgs) -> Result<i32> {
    let loaded = LoadedConfig::read(&a.config)?;
    let path = loaded.plants_path(a.plants.as_deref())?;
    let set = freqdata::load_plant_set(&path, loaded.config.ts)?;
    let spec = loaded.spec(set)?;
    let k = Controller::load(&a.controller)?;
    check_ts(&k, &spec)?;
    let cfg = SimulationConfig {
        seed: a.seed,
        samples: a.samples,
        noise: a.noise.into(),
        track_width_m: a.track_width,
    };
    cfg.validate()?;
    let cases = pick_cases(&spec.plants, a.case.as_deref())?;
    if a.series.is_some() && cases.len() != 1 {
        return Err(Error::Config("--series needs a single --case".into()));
    }
    let mut out = Vec::with_capacity(cases.len());
    for case in cases {
        let sim = evalsim::simulate(&k, case, &spec.dp, &spec.df, &cfg)?;
        if let Some(p) = &a.series {
            write_atomic(p, sim.to_csv().as_bytes())?;
        }
        out.push(CaseMetrics {
            case: case.id.clone(),
            seed: cfg.seed,
            samples: cfg.samples,
            noise: cfg.noise,
            track_width_m: cfg.track_width_m,
            metrics: sim.metrics,
        });
    }
    write_json(&a.out, &out)?;
    let mut summary = String::new();
    for m in &out {
        let _ = writeln!(
            summary,
            "{}: 3sigma(e) = {:.3e} m ({:.2}% of track), max|ycp| = {:.3e} m",
            m.case, m.metrics.sigma3_e_m, m.metrics.sigma3_e_pct, m.metrics.max_abs_ycp_m
        );
    }
    eprint!("{summary}");
    Ok(EXIT_OK)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_round_trips_with_defaults() {
        let text = r#"{"order": 4, "stroke": {"limit_m": 5e-8}, "weights": {},
            "spectra": {"dp": "dp.csv", "df": "df.csv"}, "ts": 1e-4}"#;
        let c: DesignConfig = serde_json::from_str(text).unwrap();
        assert_eq!(c.n_iter, DEFAULT_N_ITER);
        assert_eq!(c.eps_margin, DEFAULT_EPS_MARGIN);
        assert_eq!(c.stroke.interpretation, StrokeInterpretation::ThreeSigma);
        assert!(c.plants.is_none());
        let back: DesignConfig = serde_json::from_str(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = r#"{"order": 4, "stroke": {"limit_m": 5e-8}, "weights": {}, "gamma": 2,
            "spectra": {"dp": "dp.csv", "df": "df.csv"}, "ts": 1e-4}"#;
        assert!(serde_json::from_str::<DesignConfig>(text).is_err());
    }

    #[test]
    fn usage_errors_exit_2_and_help_exits_0() {
        assert_eq!(run(["ddtrack", "synth", "--out", "K.json"]), EXIT_CONFIG);
        assert_eq!(run(["ddtrack", "bogus"]), EXIT_CONFIG);
        assert_eq!(run(["ddtrack", "sim", "--help"]), EXIT_OK);
    }

    #[test]
    fn error_kinds_map_to_codes() {
        assert_eq!(exit_code(&Error::Config("x".into())), EXIT_CONFIG);
        assert_eq!(exit_code(&Error::MissingWeight("x".into())), EXIT_CONFIG);
        assert_eq!(exit_code(&Error::Winding("x".into())), EXIT_FAILURE);
        let info = crate::error::InfeasibleInfo {
            iteration: 0,
            plant: "case1".into(),
            config: "DSA".into(),
            channel: "S_de".into(),
            freq_hz: 10.0,
        };
        assert_eq!(exit_code(&Error::Infeasible(info)), EXIT_INFEASIBLE);
    }
}
