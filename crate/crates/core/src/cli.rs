//! Command-line front end: argument parsing, configuration, and emission of
//! CSV / JSON data files.
//!
//! Every emitted file starts with `#` comment lines recording the tool
//! version, the SHA-256 of the effective configuration, and the seed.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rand::Rng;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bayes::{run_experiment, Estimator, ExperimentSetup, DEFAULT_GRID};
use crate::error::Error;
use crate::hilbert::{make_coherent, make_fock, make_scs, make_squeezed, tensor, SingleModeState, Truncation, TwoModeState, C64, MAX_AMPLITUDE, MAX_SQUEEZING};
use crate::metrology::{qfi_lossy_pair, qfi_pure, snl_baseline, sv_baseline, MeritReport};
use crate::operators::apply_beam_splitter;
use crate::search::{
    archive_jsonl, evaluate, nelder_mead, refine_template, refine_template_lossy, refine_template_with, run_search, summary_csv, FitnessKind,
    Genome, SearchConfig, Template,
};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Failure of a command, mapped to the process exit code.
#[derive(Debug)]
pub enum CliError {
    /// Bad arguments or configuration: exit code 2.
    Usage(String),
    /// Anything that went wrong while computing or writing: exit code 1.
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Runtime(m) => write!(f, "error: {m}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(m) => CliError::Usage(m),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "qsearch", version, about = "Heralded optical states for phase estimation")]
pub struct Cli {
    /// Master seed; drawn from entropy and recorded when absent.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// JSON file with the command's parameters; flags override it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    pub out: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Figures of merit of one state.
    EvalState(EvalStateArgs),
    /// QFI and Gamma against total photon number.
    Sweep(SweepArgs),
    /// Scaled precision against transmissivity.
    LossSweep(LossSweepArgs),
    /// Evolutionary circuit search.
    Search(SearchArgs),
    /// Bayesian phase-estimation simulation.
    Bayes(BayesArgs),
}

#[derive(Debug, Args, Default)]
pub struct EvalStateArgs {
    /// t1..t6, sv, snl, or scs.
    #[arg(long)]
    pub state: Option<String>,
    /// Total photon number of the two-arm probe.
    #[arg(long)]
    pub nbar: Option<f64>,
    /// Genome JSON file to evaluate instead of a named state.
    #[arg(long)]
    pub genome: Option<PathBuf>,
    /// Refinement starting points for T-states.
    #[arg(long)]
    pub starts: Option<usize>,
}

#[derive(Debug, Args, Default)]
pub struct SweepArgs {
    /// Comma-separated labels; sv and snl are always added.
    #[arg(long, value_delimiter = ',')]
    pub states: Option<Vec<String>>,
    #[arg(long)]
    pub nbar_min: Option<f64>,
    #[arg(long)]
    pub nbar_max: Option<f64>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub starts: Option<usize>,
}

#[derive(Debug, Args, Default)]
pub struct LossSweepArgs {
    /// Comma-separated labels: t1..t6, snl, scs, or sv:<r> for a squeezed pair of squeezing r.
    #[arg(long, value_delimiter = ',')]
    pub states: Option<Vec<String>>,
    /// Photon number at which T-states and the SNL are taken.
    #[arg(long)]
    pub nbar: Option<f64>,
    #[arg(long)]
    pub eta_min: Option<f64>,
    #[arg(long)]
    pub eta_max: Option<f64>,
    #[arg(long)]
    pub eta_step: Option<f64>,
    /// Transmissivity at which T-states are refined.
    #[arg(long)]
    pub design_eta: Option<f64>,
    #[arg(long)]
    pub starts: Option<usize>,
}

#[derive(Debug, Args, Default)]
pub struct SearchArgs {
    /// Operators per circuit.
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long)]
    pub restarts: Option<usize>,
    #[arg(long)]
    pub max_failed: Option<usize>,
    #[arg(long)]
    pub herald_floor: Option<f64>,
    /// qfi, gamma, or target (with --target-nbar).
    #[arg(long)]
    pub fitness: Option<String>,
    #[arg(long)]
    pub target_nbar: Option<f64>,
    #[arg(long)]
    pub target_tolerance: Option<f64>,
    /// Refine each champion's continuous parameters.
    #[arg(long)]
    pub refine: bool,
}

#[derive(Debug, Args, Default)]
pub struct BayesArgs {
    #[arg(long)]
    pub state: Option<String>,
    #[arg(long)]
    pub nbar: Option<f64>,
    /// Repeats per run.
    #[arg(long)]
    pub mu: Option<usize>,
    /// Independent runs averaged into the summary row.
    #[arg(long)]
    pub runs: Option<usize>,
    #[arg(long)]
    pub phi_true: Option<f64>,
    #[arg(long)]
    pub grid: Option<usize>,
    /// Report the posterior maximum instead of the posterior mean.
    #[arg(long)]
    pub map: bool,
    #[arg(long)]
    pub starts: Option<usize>,
}

fn default_state() -> String {
    "snl".into()
}
fn default_nbar() -> f64 {
    1.5
}
fn default_starts() -> usize {
    4
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalStateConfig {
    #[serde(default = "default_state")]
    pub state: String,
    #[serde(default = "default_nbar")]
    pub nbar: f64,
    #[serde(default)]
    pub genome: Option<Genome>,
    #[serde(default = "default_starts")]
    pub starts: usize,
}

fn default_sweep_states() -> Vec<String> {
    vec!["t1".into(), "t2".into()]
}
fn default_nbar_min() -> f64 {
    0.5
}
fn default_nbar_max() -> f64 {
    3.0
}
fn default_steps() -> usize {
    6
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    #[serde(default = "default_sweep_states")]
    pub states: Vec<String>,
    #[serde(default = "default_nbar_min")]
    pub nbar_min: f64,
    #[serde(default = "default_nbar_max")]
    pub nbar_max: f64,
    #[serde(default = "default_steps")]
    pub steps: usize,
    #[serde(default = "default_starts")]
    pub starts: usize,
}

fn default_loss_states() -> Vec<String> {
    vec!["t3".into(), "sv:0.42".into(), "sv:0.62".into(), "snl".into()]
}
fn default_loss_nbar() -> f64 {
    2.0 * 0.42f64.sinh().powi(2)
}
fn default_eta_min() -> f64 {
    0.5
}
fn default_eta_max() -> f64 {
    1.0
}
fn default_eta_step() -> f64 {
    0.05
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossSweepConfig {
    #[serde(default = "default_loss_states")]
    pub states: Vec<String>,
    #[serde(default = "default_loss_nbar")]
    pub nbar: f64,
    #[serde(default = "default_eta_min")]
    pub eta_min: f64,
    #[serde(default = "default_eta_max")]
    pub eta_max: f64,
    #[serde(default = "default_eta_step")]
    pub eta_step: f64,
    /// Transmissivity at which T-states are refined for the sweep.
    #[serde(default = "default_design_eta")]
    pub design_eta: f64,
    #[serde(default = "default_starts")]
    pub starts: usize,
}

fn default_design_eta() -> f64 {
    0.75
}

fn default_mu() -> usize {
    100
}
fn default_runs() -> usize {
    100
}
fn default_grid() -> usize {
    DEFAULT_GRID
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BayesConfig {
    #[serde(default = "default_state")]
    pub state: String,
    #[serde(default = "default_nbar")]
    pub nbar: f64,
    #[serde(default = "default_mu")]
    pub mu: usize,
    #[serde(default = "default_runs")]
    pub runs: usize,
    /// Defaults to pi/3 when identifiable, else the middle of the phase domain.
    #[serde(default)]
    pub phi_true: Option<f64>,
    #[serde(default = "default_grid")]
    pub grid: usize,
    #[serde(default)]
    pub map: bool,
    #[serde(default = "default_starts")]
    pub starts: usize,
}

fn load_config<T: DeserializeOwned>(path: Option<&Path>) -> CliResult<T> {
    let text = match path {
        Some(p) => fs::read_to_string(p).map_err(|e| CliError::Usage(format!("cannot read {}: {e}", p.display())))?,
        None => "{}".into(),
    };
    serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("bad config: {e}")))
}

/// Header lines shared by every output file.
pub fn metadata_header(command: &str, config_json: &str, seed: u64, notes: &[String]) -> String {
    let digest = Sha256::digest(config_json.as_bytes());
    let hex: String = digest.iter().map(|b| format!("{b:02x}")).collect();
    let mut out = String::new();
    let _ = writeln!(out, "# qsearch {VERSION}");
    let _ = writeln!(out, "# command: {command}");
    let _ = writeln!(out, "# config_sha256: {hex}");
    let _ = writeln!(out, "# seed: {seed}");
    let _ = writeln!(out, "# config: {config_json}");
    for n in notes {
        let _ = writeln!(out, "# {n}");
    }
    out
}

/// Writes through a temporary file in the same directory, then renames.
pub fn write_atomic(path: &Path, contents: &str) -> CliResult<()> {
    let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir).map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", dir.display())))?;
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp = dir.join(format!(".{name}.tmp-{}", std::process::id()));
    fs::write(&tmp, contents).map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", tmp.display())))?;
    fs::rename(&tmp, path).map_err(|e| CliError::Runtime(format!("cannot rename to {}: {e}", path.display())))
}

/// Named single-arm states.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StateLabel {
    Template(Template),
    Sv,
    Snl,
    Scs,
}

impl StateLabel {
    pub fn parse(label: &str) -> CliResult<Self> {
        match label.to_ascii_lowercase().as_str() {
            "sv" => Ok(StateLabel::Sv),
            "snl" => Ok(StateLabel::Snl),
            "scs" => Ok(StateLabel::Scs),
            other => Template::parse(other)
                .map(StateLabel::Template)
                .ok_or_else(|| CliError::Usage(format!("unknown state label '{label}'"))),
        }
    }
}

/// A probe ready for evaluation.
#[derive(Debug, Clone)]
pub struct BuiltProbe {
    pub label: String,
    pub probe: TwoModeState,
    /// Arm state when the probe is `psi ⊗ psi`.
    pub arm: Option<SingleModeState>,
    pub herald_prob: Option<f64>,
    pub genome: Option<Genome>,
}

fn template_cache_path(out: &Path, t: Template, nbar: f64, design_eta: Option<f64>, starts: usize, seed: u64) -> PathBuf {
    let eta = design_eta.map(|e| format!("_eta{e}")).unwrap_or_default();
    out.join(format!("refined_{}_n{nbar}{eta}_s{starts}_seed{seed}.json", t.label()))
}

/// Refined genome for a template, read from the output directory when an
/// earlier run cached it. With `design_eta` the QFI after that loss is
/// maximized instead of the lossless one.
pub fn refined_template(
    out: &Path,
    t: Template,
    nbar: f64,
    design_eta: Option<f64>,
    starts: usize,
    seed: u64,
) -> CliResult<Genome> {
    let path = template_cache_path(out, t, nbar, design_eta, starts, seed);
    if let Ok(text) = fs::read_to_string(&path) {
        let body: String = text.lines().filter(|l| !l.starts_with('#')).collect();
        if let Ok(g) = serde_json::from_str::<Genome>(&body) {
            return Ok(g);
        }
    }
    let (g, _) = match design_eta {
        Some(eta) => refine_template_lossy(t, nbar, eta, starts, seed),
        None => refine_template(t, nbar, starts, seed),
    };
    let json = serde_json::to_string(&g).expect("genome serializes");
    let eta = design_eta.map(|e| format!(r#","design_eta":{e}"#)).unwrap_or_default();
    let cfg = format!(r#"{{"template":"{}","nbar":{nbar}{eta},"starts":{starts}}}"#, t.label());
    let header = metadata_header("refine", &cfg, seed, &[]);
    write_atomic(&path, &format!("{header}{json}\n"))?;
    Ok(g)
}

/// Even squeezed cat with `(r, |alpha|)` optimized for QFI at `nbar`.
pub fn optimized_scs(nbar: f64) -> CliResult<SingleModeState> {
    let score = |x: &[f64]| -> f64 {
        match make_scs(x[0], 0.0, C64::new(x[1], 0.0), Truncation::Auto) {
            Ok(psi) => {
                let (m, v) = match (psi.mean_photon(), psi.photon_variance()) {
                    (Ok(m), Ok(v)) => (m, v),
                    _ => return 0.0,
                };
                FitnessKind::QfiAtTargetNbar {
                    target: nbar,
                    tolerance: 0.005 * nbar,
                }
                .score(2.0 * v, 2.0 * m)
            }
            Err(_) => 0.0,
        }
    };
    let mut f = score;
    let lo = [0.0, 0.0];
    let hi = [MAX_SQUEEZING, MAX_AMPLITUDE];
    let mut best = (vec![0.3, 0.5], f64::NEG_INFINITY);
    for start in [[0.3, 0.5], [0.6, 1.0], [0.2, 1.5], [0.9, 2.0]] {
        let (x, v) = nelder_mead(&mut f, &start, &lo, &hi, 600);
        if v > best.1 {
            best = (x, v);
        }
    }
    make_scs(best.0[0], 0.0, C64::new(best.0[1], 0.0), Truncation::Auto).map_err(CliError::from)
}

pub fn build_probe(label: StateLabel, nbar: f64, starts: usize, seed: u64, out: &Path) -> CliResult<BuiltProbe> {
    if !(nbar > 0.0) {
        return Err(CliError::Usage(format!("nbar must be positive, got {nbar}")));
    }
    match label {
        StateLabel::Snl => {
            let alpha = C64::new(nbar.sqrt(), 0.0);
            let s = tensor(&make_coherent(alpha, Truncation::Auto)?, &make_fock(0, 2)?);
            Ok(BuiltProbe {
                label: "snl".into(),
                probe: apply_beam_splitter(50.0, &s)?,
                arm: None,
                herald_prob: None,
                genome: None,
            })
        }
        StateLabel::Sv => {
            let r = crate::metrology::sv_squeezing_for_nbar(nbar)?;
            let arm = make_squeezed(r, 0.0, Truncation::Auto)?;
            Ok(pair("sv", arm, None, None))
        }
        StateLabel::Scs => Ok(pair("scs", optimized_scs(nbar)?, None, None)),
        StateLabel::Template(t) => {
            let g = refined_template(out, t, nbar, None, starts, seed)?;
            genome_probe(t.label(), g)
        }
    }
}

fn pair(label: &str, arm: SingleModeState, herald_prob: Option<f64>, genome: Option<Genome>) -> BuiltProbe {
    BuiltProbe {
        label: label.into(),
        probe: tensor(&arm, &arm),
        arm: Some(arm),
        herald_prob,
        genome,
    }
}

fn genome_probe(label: &str, g: Genome) -> CliResult<BuiltProbe> {
    let report = evaluate(&g, &SearchConfig { herald_floor: 0.0, ..SearchConfig::default() });
    let arm = report
        .heralded
        .ok_or_else(|| CliError::Runtime(format!("{label}: {}", report.diagnostic.unwrap_or_default())))?;
    Ok(pair(label, arm, Some(report.herald_prob), Some(g)))
}

fn merit_of(p: &BuiltProbe) -> CliResult<MeritReport> {
    Ok(crate::metrology::merit(&crate::metrology::ProbeState::Pure(p.probe.clone()))?)
}

fn resolve_seed(seed: Option<u64>) -> u64 {
    seed.unwrap_or_else(|| rand::rng().random())
}

fn to_json<T: Serialize>(v: &T) -> String {
    serde_json::to_string(v).expect("config serializes")
}

/// Effective configuration and outputs of one invocation.
pub struct Outcome {
    pub files: Vec<PathBuf>,
    pub stdout: String,
}

pub fn run(cli: Cli) -> CliResult<Outcome> {
    let seed = resolve_seed(cli.seed);
    let cfg_path = cli.config.as_deref();
    match cli.command {
        Command::EvalState(a) => {
            let mut c: EvalStateConfig = load_config(cfg_path)?;
            if let Some(s) = a.state {
                c.state = s;
            }
            if let Some(n) = a.nbar {
                c.nbar = n;
            }
            if let Some(n) = a.starts {
                c.starts = n;
            }
            if let Some(p) = a.genome {
                let text = fs::read_to_string(&p).map_err(|e| CliError::Usage(format!("cannot read {}: {e}", p.display())))?;
                let g: Genome = serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("bad genome: {e}")))?;
                c.genome = Some(g);
                c.state = "genome".into();
            }
            cmd_eval_state(&c, seed, &cli.out)
        }
        Command::Sweep(a) => {
            let mut c: SweepConfig = load_config(cfg_path)?;
            if let Some(s) = a.states {
                c.states = s;
            }
            if let Some(v) = a.nbar_min {
                c.nbar_min = v;
            }
            if let Some(v) = a.nbar_max {
                c.nbar_max = v;
            }
            if let Some(v) = a.steps {
                c.steps = v;
            }
            if let Some(v) = a.starts {
                c.starts = v;
            }
            cmd_sweep(&c, seed, &cli.out)
        }
        Command::LossSweep(a) => {
            let mut c: LossSweepConfig = load_config(cfg_path)?;
            if let Some(s) = a.states {
                c.states = s;
            }
            if let Some(v) = a.nbar {
                c.nbar = v;
            }
            if let Some(v) = a.eta_min {
                c.eta_min = v;
            }
            if let Some(v) = a.eta_max {
                c.eta_max = v;
            }
            if let Some(v) = a.eta_step {
                c.eta_step = v;
            }
            if let Some(v) = a.design_eta {
                c.design_eta = v;
            }
            if let Some(v) = a.starts {
                c.starts = v;
            }
            cmd_loss_sweep(&c, seed, &cli.out)
        }
        Command::Search(a) => {
            let mut c: SearchConfig = load_config(cfg_path)?;
            if let Some(v) = a.m {
                c.m = v;
            }
            if let Some(v) = a.restarts {
                c.max_restarts = v;
            }
            if let Some(v) = a.max_failed {
                c.max_failed_mutations = v;
            }
            if let Some(v) = a.herald_floor {
                c.herald_floor = v;
            }
            if a.refine {
                c.refinement = true;
            }
            if let Some(f) = a.fitness {
                c.fitness_kind = match f.as_str() {
                    "qfi" => FitnessKind::Qfi,
                    "gamma" => FitnessKind::Gamma,
                    "target" => FitnessKind::QfiAtTargetNbar {
                        target: a
                            .target_nbar
                            .ok_or_else(|| CliError::Usage("--fitness target needs --target-nbar".into()))?,
                        tolerance: a.target_tolerance.unwrap_or(0.05),
                    },
                    other => return Err(CliError::Usage(format!("unknown fitness '{other}'"))),
                };
            }
            if cli.seed.is_some() || cfg_path.is_none() {
                c.rng_seed = seed;
            }
            cmd_search(&c, &cli.out)
        }
        Command::Bayes(a) => {
            let mut c: BayesConfig = load_config(cfg_path)?;
            if let Some(s) = a.state {
                c.state = s;
            }
            if let Some(v) = a.nbar {
                c.nbar = v;
            }
            if let Some(v) = a.mu {
                c.mu = v;
            }
            if let Some(v) = a.runs {
                c.runs = v;
            }
            if a.phi_true.is_some() {
                c.phi_true = a.phi_true;
            }
            if let Some(v) = a.grid {
                c.grid = v;
            }
            if a.map {
                c.map = true;
            }
            if let Some(v) = a.starts {
                c.starts = v;
            }
            cmd_bayes(&c, seed, &cli.out)
        }
    }
}

#[derive(Debug, Serialize)]
struct EvalOutput<'a> {
    state: &'a str,
    qfi: f64,
    nbar: f64,
    gamma: f64,
    herald_prob: Option<f64>,
    genome: Option<&'a Genome>,
}

pub fn cmd_eval_state(c: &EvalStateConfig, seed: u64, out: &Path) -> CliResult<Outcome> {
    let built = match &c.genome {
        Some(g) => {
            g.validate().map_err(|e| CliError::Usage(format!("invalid genome: {e}")))?;
            genome_probe("genome", g.clone())?
        }
        None => build_probe(StateLabel::parse(&c.state)?, c.nbar, c.starts, seed, out)?,
    };
    let m = merit_of(&built)?;
    let body = EvalOutput {
        state: &built.label,
        qfi: m.qfi,
        nbar: m.nbar,
        gamma: m.gamma,
        herald_prob: built.herald_prob,
        genome: built.genome.as_ref(),
    };
    let json = serde_json::to_string_pretty(&body).expect("report serializes");
    let path = out.join(format!("eval_{}.json", built.label));
    write_atomic(&path, &format!("{}{json}\n", metadata_header("eval-state", &to_json(c), seed, &[])))?;
    Ok(Outcome {
        files: vec![path],
        stdout: format!("{json}\n"),
    })
}

fn grid(lo: f64, hi: f64, steps: usize) -> Vec<f64> {
    if steps <= 1 {
        return vec![lo];
    }
    (0..steps).map(|i| lo + (hi - lo) * i as f64 / (steps - 1) as f64).collect()
}

pub const SWEEP_HEADER: &str = "nbar,state,qfi,gamma";

pub fn cmd_sweep(c: &SweepConfig, seed: u64, out: &Path) -> CliResult<Outcome> {
    if !(c.nbar_min > 0.0 && c.nbar_max >= c.nbar_min) || c.steps == 0 {
        return Err(CliError::Usage("need 0 < nbar_min <= nbar_max and steps >= 1".into()));
    }
    let mut labels: Vec<String> = c.states.iter().map(|s| s.to_ascii_lowercase()).collect();
    for base in ["sv", "snl"] {
        if !labels.iter().any(|l| l == base) {
            labels.push(base.into());
        }
    }
    let parsed: Vec<StateLabel> = labels.iter().map(|l| StateLabel::parse(l)).collect::<CliResult<_>>()?;
    let nbars = grid(c.nbar_min, c.nbar_max, c.steps);
    let mut csv = String::from(SWEEP_HEADER);
    csv.push('\n');
    for (label, parsed) in labels.iter().zip(&parsed) {
        let mut warm: Option<Genome> = None;
        for &nbar in &nbars {
            let row = match parsed {
                StateLabel::Snl => snl_baseline(nbar).map(|m| (m.qfi, m.gamma)).map_err(CliError::from),
                StateLabel::Sv => match sv_baseline(nbar) {
                    Ok(m) => Ok((m.qfi, m.gamma)),
                    Err(Error::ParameterBound(_)) => {
                        let _ = writeln!(csv, "{nbar},{label},unavailable,unavailable");
                        continue;
                    }
                    Err(e) => Err(CliError::from(e)),
                },
                StateLabel::Scs => {
                    let arm = optimized_scs(nbar)?;
                    let p = pair("scs", arm, None, None);
                    merit_of(&p).map(|m| (m.qfi, m.gamma))
                }
                StateLabel::Template(t) => {
                    let g = match &warm {
                        None => refined_template(out, *t, nbar, None, c.starts, seed)?,
                        Some(prev) => {
                            let cfg = SearchConfig {
                                fitness_kind: FitnessKind::QfiAtTargetNbar {
                                    target: nbar,
                                    tolerance: 0.01 * nbar,
                                },
                                herald_floor: 0.0,
                                ..SearchConfig::default()
                            };
                            refine_template_with(prev.clone(), &cfg, 1, seed, t.frozen()).0
                        }
                    };
                    warm = Some(g.clone());
                    let p = genome_probe(t.label(), g)?;
                    merit_of(&p).map(|m| (m.qfi, m.gamma))
                }
            };
            let (qfi, gamma) = row?;
            let _ = writeln!(csv, "{nbar},{label},{qfi},{gamma}");
        }
    }
    let path = out.join("sweep.csv");
    write_atomic(&path, &format!("{}{csv}", metadata_header("sweep", &to_json(c), seed, &[])))?;
    Ok(Outcome {
        files: vec![path],
        stdout: csv,
    })
}

pub const LOSS_HEADER: &str = "eta,state,sqrt_mu_delta_phi";

/// Scaled precision of a named loss-sweep entry at each transmissivity.
pub fn loss_curve(label: &str, c: &LossSweepConfig, etas: &[f64], seed: u64, out: &Path) -> CliResult<Vec<f64>> {
    let nbar = c.nbar;
    let lower = label.to_ascii_lowercase();
    if let Some(r) = lower.strip_prefix("sv:") {
        let r: f64 = r.parse().map_err(|_| CliError::Usage(format!("bad squeezing in '{label}'")))?;
        let arm = make_squeezed(r, 0.0, Truncation::Auto)?;
        return etas.iter().map(|&eta| Ok(1.0 / qfi_lossy_pair(&arm, eta)?.sqrt())).collect();
    }
    let parsed = StateLabel::parse(&lower)?;
    if parsed == StateLabel::Snl {
        // coherent light keeps F_Q = eta nbar under loss
        return Ok(etas.iter().map(|&eta| 1.0 / (eta * nbar).sqrt()).collect());
    }
    let built = match parsed {
        StateLabel::Template(t) => genome_probe(t.label(), refined_template(out, t, nbar, Some(c.design_eta), c.starts, seed)?)?,
        other => build_probe(other, nbar, c.starts, seed, out)?,
    };
    let arm = built.arm.expect("paired probe");
    etas.iter().map(|&eta| Ok(1.0 / qfi_lossy_pair(&arm, eta)?.sqrt())).collect()
}

pub fn cmd_loss_sweep(c: &LossSweepConfig, seed: u64, out: &Path) -> CliResult<Outcome> {
    if !(c.design_eta > 0.0 && c.design_eta <= 1.0) {
        return Err(CliError::Usage(format!("design_eta {} outside (0, 1]", c.design_eta)));
    }
    if !(0.0..=1.0).contains(&c.eta_min) || !(0.0..=1.0).contains(&c.eta_max) || c.eta_min > c.eta_max || !(c.eta_step > 0.0) {
        return Err(CliError::Usage("eta grid must lie in [0, 1] with a positive step".into()));
    }
    let count = ((c.eta_max - c.eta_min) / c.eta_step + 1e-9).floor() as usize + 1;
    let etas: Vec<f64> = (0..count)
        .map(|i| ((c.eta_min + i as f64 * c.eta_step) * 1e9).round() / 1e9)
        .collect();
    let mut csv = String::from(LOSS_HEADER);
    csv.push('\n');
    for label in &c.states {
        let curve = loss_curve(label, c, &etas, seed, out)?;
        for (eta, v) in etas.iter().zip(curve) {
            let _ = writeln!(csv, "{eta},{label},{v}");
        }
    }
    let notes = ["sqrt_mu_delta_phi = sqrt(mu) * delta_phi = 1 / sqrt(F_Q); eta is the per-arm transmissivity".to_string()];
    let path = out.join("loss_sweep.csv");
    write_atomic(&path, &format!("{}{csv}", metadata_header("loss-sweep", &to_json(c), seed, &notes)))?;
    Ok(Outcome {
        files: vec![path],
        stdout: csv,
    })
}

pub fn cmd_search(c: &SearchConfig, out: &Path) -> CliResult<Outcome> {
    c.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let champions = run_search(c)?;
    let header = metadata_header("search", &to_json(c), c.rng_seed, &[]);
    let jsonl = out.join("champions.jsonl");
    let csv = out.join("champions.csv");
    write_atomic(&jsonl, &format!("{header}{}", archive_jsonl(&champions)))?;
    write_atomic(&csv, &format!("{header}{}", summary_csv(&champions)))?;
    let mut stdout = String::new();
    for (i, ch) in champions.iter().take(5).enumerate() {
        let r = &ch.report;
        let _ = writeln!(
            stdout,
            "{}. fitness {:.4} gamma {:.4} nbar {:.4} herald {:.4}  {}",
            i + 1,
            r.fitness,
            r.gamma,
            r.nbar,
            r.herald_prob,
            ch.genome.structure_key()
        );
    }
    Ok(Outcome {
        files: vec![jsonl, csv],
        stdout,
    })
}

pub const BAYES_HEADER: &str = "mu,phi_true,estimate,spread,crb";

pub fn cmd_bayes(c: &BayesConfig, seed: u64, out: &Path) -> CliResult<Outcome> {
    let label = StateLabel::parse(&c.state)?;
    let built = build_probe(label, c.nbar, c.starts, seed, out)?;
    let phi_max = crate::bayes::phase_domain(&built.probe);
    let phi_true = c.phi_true.unwrap_or({
        let third = std::f64::consts::FRAC_PI_3;
        if third < phi_max {
            third
        } else {
            0.5 * phi_max
        }
    });
    let setup = ExperimentSetup {
        phi_true,
        mu: c.mu,
        runs: c.runs,
        grid: c.grid,
        seed,
        estimator: if c.map { Estimator::Map } else { Estimator::Mean },
    };
    let (exp, _) = run_experiment(&built.probe, &setup).map_err(|e| match e {
        Error::Config(m) | Error::ParameterBound(m) => CliError::Usage(m),
        other => CliError::Runtime(other.to_string()),
    })?;
    let qfi = qfi_pure(&built.probe)?;
    let crb = 1.0 / (c.mu as f64 * qfi).sqrt();
    let csv = format!("{BAYES_HEADER}\n{},{},{},{},{}\n", exp.mu, exp.phi_true, exp.estimate, exp.spread, crb);
    let probe_desc = format!(
        r#"probe: {{"state":"{}","nbar":{},"qfi":{qfi},"phase_domain":[0,{phi_max}],"runs":{},"estimator":"{}"}}"#,
        built.label,
        c.nbar,
        c.runs,
        if c.map { "map" } else { "mean" }
    );
    let path = out.join(format!("bayes_{}.csv", built.label));
    write_atomic(&path, &format!("{}{csv}", metadata_header("bayes", &to_json(c), seed, &[probe_desc])))?;
    Ok(Outcome {
        files: vec![path],
        stdout: csv,
    })
}

/// Parses arguments, runs, prints, and returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(cli) {
        Ok(o) => {
            print!("{}", o.stdout);
            for f in &o.files {
                eprintln!("wrote {}", f.display());
            }
            0
        }
        Err(e) => {
            eprintln!("{e}");
            e.exit_code()
        }
    }
}
