//! Hill-climbing evolutionary search over heralded circuits.
//!
//! A genome is two input states, a fixed-length operator sequence, and a final
//! measurement on mode `a`. The heralded mode-`b` state `psi` is scored as the
//! interferometer probe `psi ⊗ psi`.

use std::collections::BTreeMap;
use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::hilbert::{tensor, SingleModeState, StateSpec, Truncation, MAX_AMPLITUDE, MAX_FOCK_INPUT, MAX_SQUEEZING};
use crate::metrology::qfi_lossy_pair;
use crate::operators::{Mode, OperatorSpec};
use crate::postselect::{project, MeasurementSpec, MAX_HERALD_PHOTONS};

pub const MIN_OPS: usize = 2;
pub const MAX_OPS: usize = 12;
/// Transmissivities sampled by the search, in percent.
pub const T_MIN: f64 = 5.0;
pub const T_MAX: f64 = 95.0;
pub const T_STEP: f64 = 5.0;
/// Range of heralding quadrature values.
pub const QUADRATURE_RANGE: f64 = 3.0;

/// A circuit: inputs, operators in application order, final herald on mode `a`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Genome {
    pub input_a: StateSpec,
    pub input_b: StateSpec,
    pub ops: Vec<OperatorSpec>,
    pub final_meas: MeasurementSpec,
}

/// How a continuous parameter moves.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ParamKind {
    /// Bounded interval, reflected at the ends.
    Linear,
    /// Periodic on `[0, 2 pi)`.
    Angle,
    /// Beam-splitter transmissivity: steps of 5 under mutation.
    Transmissivity,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParamInfo {
    pub lo: f64,
    pub hi: f64,
    pub kind: ParamKind,
}

const ANGLE: ParamInfo = ParamInfo {
    lo: 0.0,
    hi: TAU,
    kind: ParamKind::Angle,
};
const AMPLITUDE: ParamInfo = ParamInfo {
    lo: 0.0,
    hi: MAX_AMPLITUDE,
    kind: ParamKind::Linear,
};
const SQUEEZING: ParamInfo = ParamInfo {
    lo: 0.0,
    hi: MAX_SQUEEZING,
    kind: ParamKind::Linear,
};
const TRANSMISSIVITY: ParamInfo = ParamInfo {
    lo: T_MIN,
    hi: T_MAX,
    kind: ParamKind::Transmissivity,
};
const QUADRATURE: ParamInfo = ParamInfo {
    lo: -QUADRATURE_RANGE,
    hi: QUADRATURE_RANGE,
    kind: ParamKind::Linear,
};

fn state_params(s: &mut StateSpec, f: &mut dyn FnMut(&mut f64, ParamInfo)) {
    match s {
        StateSpec::Fock { .. } => {}
        StateSpec::Coherent { mag, theta_c } => {
            f(mag, AMPLITUDE);
            f(theta_c, ANGLE);
        }
        StateSpec::SqueezedVacuum { r, theta_s } => {
            f(r, SQUEEZING);
            f(theta_s, ANGLE);
        }
    }
}

fn meas_params(m: &mut MeasurementSpec, f: &mut dyn FnMut(&mut f64, ParamInfo)) {
    if let MeasurementSpec::Quadrature { x, lambda } = m {
        f(x, QUADRATURE);
        f(lambda, ANGLE);
    }
}

fn op_params(op: &mut OperatorSpec, f: &mut dyn FnMut(&mut f64, ParamInfo)) {
    match op {
        OperatorSpec::BeamSplitter { t } => f(t, TRANSMISSIVITY),
        OperatorSpec::Displacement { mag, theta, .. } => {
            f(mag, AMPLITUDE);
            f(theta, ANGLE);
        }
        OperatorSpec::PhaseShift { theta_p, .. } => f(theta_p, ANGLE),
        OperatorSpec::Identity => {}
        OperatorSpec::MeasureReplace { meas, new_input, .. } => {
            meas_params(meas, f);
            state_params(new_input, f);
        }
    }
}

impl Genome {
    pub fn m(&self) -> usize {
        self.ops.len()
    }

    pub fn validate(&self) -> Result<()> {
        if !(MIN_OPS..=MAX_OPS).contains(&self.ops.len()) {
            return Err(Error::Config(format!(
                "operator count {} outside {MIN_OPS}..={MAX_OPS}",
                self.ops.len()
            )));
        }
        self.input_a.validate()?;
        self.input_b.validate()?;
        for op in &self.ops {
            op.validate()?;
        }
        self.final_meas.validate_final()
    }

    /// Number of slots: two inputs, the operators, the measurement.
    pub fn slot_count(&self) -> usize {
        self.ops.len() + 3
    }

    fn visit_params(&mut self, f: &mut dyn FnMut(&mut f64, ParamInfo)) {
        state_params(&mut self.input_a, f);
        state_params(&mut self.input_b, f);
        for op in &mut self.ops {
            op_params(op, f);
        }
        meas_params(&mut self.final_meas, f);
    }

    /// Continuous parameters in slot order.
    pub fn params(&self) -> Vec<(f64, ParamInfo)> {
        let mut out = Vec::new();
        self.clone().visit_params(&mut |v, info| out.push((*v, info)));
        out
    }

    /// Copy with parameter `index` set to `value` (no bound handling).
    pub fn with_param(&self, index: usize, value: f64) -> Genome {
        let mut out = self.clone();
        let mut i = 0;
        out.visit_params(&mut |v, _| {
            if i == index {
                *v = value;
            }
            i += 1;
        });
        out
    }

    /// Variant labels with mode tags and discrete values; continuous
    /// parameters are ignored.
    pub fn structure_key(&self) -> String {
        let ops: Vec<String> = self.ops.iter().map(|o| o.kind_label()).collect();
        format!(
            "{}|{}|{}|{}",
            self.input_a.kind_label(),
            self.input_b.kind_label(),
            ops.join(","),
            self.final_meas.kind_label()
        )
    }

    /// First 16 hex digits of the SHA-256 of the genome's JSON form.
    pub fn digest(&self) -> String {
        let json = serde_json::to_string(self).expect("genome serializes");
        let hash = Sha256::digest(json.as_bytes());
        hash.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    /// Runs the circuit, returning the heralded mode-`b` state, the product
    /// of all herald weights, and whether every herald was a photon count.
    pub fn herald(&self) -> Result<(SingleModeState, f64, bool)> {
        self.validate()?;
        let a = self.input_a.build(Truncation::Auto)?;
        let b = self.input_b.build(Truncation::Auto)?;
        let mut state = tensor(&a, &b);
        let mut prob = 1.0;
        let mut counted = self.final_meas.is_number();
        for op in &self.ops {
            let (next, p) = op.apply(&state)?;
            state = next;
            prob *= p;
            if let OperatorSpec::MeasureReplace { meas, .. } = op {
                counted &= meas.is_number();
            }
        }
        let heralded = project(&self.final_meas, Mode::A, &state)?;
        Ok((heralded.state, prob * heralded.prob, counted))
    }
}

/// What the search maximizes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FitnessKind {
    Qfi,
    Gamma,
    /// QFI, scaled by `(tolerance / |nbar - target|)^2` outside the window.
    QfiAtTargetNbar { target: f64, tolerance: f64 },
    /// As `QfiAtTargetNbar`, but the QFI is that of the pair after loss with
    /// transmissivity `eta` in each arm.
    LossyQfiAtTargetNbar { target: f64, tolerance: f64, eta: f64 },
}

impl FitnessKind {
    pub fn score(&self, qfi: f64, nbar: f64) -> f64 {
        match *self {
            FitnessKind::Qfi => qfi,
            FitnessKind::Gamma => {
                if nbar > 0.0 {
                    qfi / nbar
                } else {
                    0.0
                }
            }
            FitnessKind::QfiAtTargetNbar { target, tolerance }
            | FitnessKind::LossyQfiAtTargetNbar { target, tolerance, .. } => {
                let off = (nbar - target).abs();
                if off <= tolerance {
                    qfi
                } else {
                    qfi * (tolerance / off).powi(2)
                }
            }
        }
    }
}

fn default_m() -> usize {
    2
}
fn default_fitness() -> FitnessKind {
    FitnessKind::Gamma
}
fn default_failed() -> usize {
    50
}
fn default_restarts() -> usize {
    500
}
fn default_floor() -> f64 {
    0.01
}
fn default_max_evaluations() -> usize {
    5000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchConfig {
    #[serde(default = "default_m")]
    pub m: usize,
    #[serde(default = "default_fitness")]
    pub fitness_kind: FitnessKind,
    #[serde(default = "default_failed")]
    pub max_failed_mutations: usize,
    #[serde(default = "default_restarts")]
    pub max_restarts: usize,
    #[serde(default = "default_floor")]
    pub herald_floor: f64,
    #[serde(default)]
    pub rng_seed: u64,
    #[serde(default)]
    pub refinement: bool,
    /// Cap on evaluations within one hill climb.
    #[serde(default = "default_max_evaluations")]
    pub max_evaluations: usize,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            m: default_m(),
            fitness_kind: default_fitness(),
            max_failed_mutations: default_failed(),
            max_restarts: default_restarts(),
            herald_floor: default_floor(),
            rng_seed: 0,
            refinement: false,
            max_evaluations: default_max_evaluations(),
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<()> {
        if !(MIN_OPS..=MAX_OPS).contains(&self.m) {
            return Err(Error::Config(format!("m = {} outside {MIN_OPS}..={MAX_OPS}", self.m)));
        }
        if self.max_failed_mutations == 0 || self.max_restarts == 0 || self.max_evaluations == 0 {
            return Err(Error::Config("counts must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.herald_floor) {
            return Err(Error::Config(format!("herald_floor {} outside [0, 1)", self.herald_floor)));
        }
        match self.fitness_kind {
            FitnessKind::QfiAtTargetNbar { target, tolerance } | FitnessKind::LossyQfiAtTargetNbar { target, tolerance, .. }
                if !(target > 0.0 && tolerance > 0.0) =>
            {
                return Err(Error::Config("target and tolerance must be positive".into()));
            }
            FitnessKind::LossyQfiAtTargetNbar { eta, .. } if !(eta > 0.0 && eta <= 1.0) => {
                return Err(Error::Config(format!("eta {eta} outside (0, 1]")));
            }
            _ => {}
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitnessReport {
    pub heralded: Option<SingleModeState>,
    pub herald_prob: f64,
    pub nbar: f64,
    pub qfi: f64,
    pub gamma: f64,
    pub fitness: f64,
    /// Why the fitness was forced to zero, if it was.
    pub diagnostic: Option<String>,
}

impl FitnessReport {
    fn failed(diagnostic: String) -> Self {
        Self {
            heralded: None,
            herald_prob: 0.0,
            nbar: 0.0,
            qfi: 0.0,
            gamma: 0.0,
            fitness: 0.0,
            diagnostic: Some(diagnostic),
        }
    }
}

/// Scores a genome. Failures of the circuit give fitness 0 instead of an error.
pub fn evaluate(g: &Genome, cfg: &SearchConfig) -> FitnessReport {
    let (psi, prob, counted) = match g.herald() {
        Ok(v) => v,
        Err(e) => return FitnessReport::failed(e.to_string()),
    };
    // psi ⊗ psi: total nbar = 2 <n>, F_Q = 4 Var((n_a - n_b)/2) = 2 Var(n)
    let (nbar, qfi) = match (psi.mean_photon(), psi.photon_variance()) {
        (Ok(m), Ok(v)) => (2.0 * m, 2.0 * v),
        (Err(e), _) | (_, Err(e)) => return FitnessReport::failed(e.to_string()),
    };
    let gamma = if nbar > 0.0 { qfi / nbar } else { 0.0 };
    let scored = match cfg.fitness_kind {
        FitnessKind::LossyQfiAtTargetNbar { eta, .. } => match qfi_lossy_pair(&psi, eta) {
            Ok(q) => q,
            Err(e) => return FitnessReport::failed(e.to_string()),
        },
        _ => qfi,
    };
    let mut report = FitnessReport {
        heralded: Some(psi),
        herald_prob: prob,
        nbar,
        qfi,
        gamma,
        fitness: cfg.fitness_kind.score(scored, nbar),
        diagnostic: None,
    };
    if nbar <= 1e-12 {
        report.fitness = 0.0;
        report.diagnostic = Some(Error::ZeroPhoton.to_string());
    } else if counted && prob < cfg.herald_floor {
        report.fitness = 0.0;
        report.diagnostic = Some(format!("herald probability {prob:.3e} below floor"));
    }
    report
}

fn uniform_angle(rng: &mut impl Rng) -> f64 {
    rng.random_range(0.0..TAU)
}

pub fn random_state(rng: &mut impl Rng) -> StateSpec {
    match rng.random_range(0..3) {
        0 => StateSpec::Fock {
            n: rng.random_range(0..=MAX_FOCK_INPUT),
        },
        1 => StateSpec::Coherent {
            mag: rng.random_range(0.0..=MAX_AMPLITUDE),
            theta_c: uniform_angle(rng),
        },
        _ => StateSpec::SqueezedVacuum {
            r: rng.random_range(0.0..=MAX_SQUEEZING),
            theta_s: uniform_angle(rng),
        },
    }
}

fn random_mode(rng: &mut impl Rng) -> Mode {
    if rng.random_bool(0.5) {
        Mode::A
    } else {
        Mode::B
    }
}

fn random_quadrature(rng: &mut impl Rng) -> MeasurementSpec {
    MeasurementSpec::Quadrature {
        x: rng.random_range(-QUADRATURE_RANGE..=QUADRATURE_RANGE),
        lambda: uniform_angle(rng),
    }
}

pub fn random_transmissivity(rng: &mut impl Rng) -> f64 {
    T_STEP * rng.random_range(1..=19) as f64
}

pub fn random_operator(rng: &mut impl Rng) -> OperatorSpec {
    match rng.random_range(0..5) {
        0 => OperatorSpec::BeamSplitter {
            t: random_transmissivity(rng),
        },
        1 => OperatorSpec::Displacement {
            mag: rng.random_range(0.0..=MAX_AMPLITUDE),
            theta: uniform_angle(rng),
            mode: random_mode(rng),
        },
        2 => OperatorSpec::PhaseShift {
            theta_p: uniform_angle(rng),
            mode: random_mode(rng),
        },
        3 => OperatorSpec::Identity,
        _ => OperatorSpec::MeasureReplace {
            meas: if rng.random_bool(0.5) {
                MeasurementSpec::Number {
                    k: rng.random_range(0..=MAX_HERALD_PHOTONS),
                }
            } else {
                random_quadrature(rng)
            },
            new_input: random_state(rng),
            mode: random_mode(rng),
        },
    }
}

pub fn random_measurement(rng: &mut impl Rng) -> MeasurementSpec {
    if rng.random_bool(0.5) {
        MeasurementSpec::Number {
            k: rng.random_range(1..=MAX_HERALD_PHOTONS),
        }
    } else {
        random_quadrature(rng)
    }
}

pub fn random_genome(cfg: &SearchConfig, rng: &mut impl Rng) -> Genome {
    Genome {
        input_a: random_state(rng),
        input_b: random_state(rng),
        ops: (0..cfg.m).map(|_| random_operator(rng)).collect(),
        final_meas: random_measurement(rng),
    }
}

fn reflect(mut v: f64, lo: f64, hi: f64) -> f64 {
    let width = hi - lo;
    if width <= 0.0 {
        return lo;
    }
    // fold onto [lo, lo + 2 width) and mirror the upper half
    v = (v - lo).rem_euclid(2.0 * width);
    if v > width {
        v = 2.0 * width - v;
    }
    lo + v
}

fn perturb(value: f64, info: ParamInfo, rng: &mut impl Rng) -> f64 {
    match info.kind {
        ParamKind::Transmissivity => {
            let step = if rng.random_bool(0.5) { T_STEP } else { -T_STEP };
            let v = value + step;
            if v < info.lo || v > info.hi {
                value - step
            } else {
                v
            }
        }
        ParamKind::Linear | ParamKind::Angle => {
            let sigma = 0.1 * (info.hi - info.lo);
            let v = value + Normal::new(0.0, sigma).expect("positive sigma").sample(rng);
            if info.kind == ParamKind::Angle {
                v.rem_euclid(TAU)
            } else {
                reflect(v, info.lo, info.hi)
            }
        }
    }
}

/// One mutation event: a parameter nudge or a fresh spec in one slot.
pub fn mutate(g: &Genome, rng: &mut impl Rng) -> Genome {
    let params = g.params();
    if rng.random_bool(0.5) && !params.is_empty() {
        let i = rng.random_range(0..params.len());
        let (value, info) = params[i];
        return g.with_param(i, perturb(value, info, rng));
    }
    let mut out = g.clone();
    let slot = rng.random_range(0..g.slot_count());
    match slot {
        0 => out.input_a = random_state(rng),
        1 => out.input_b = random_state(rng),
        s if s == g.slot_count() - 1 => out.final_meas = random_measurement(rng),
        s => out.ops[s - 2] = random_operator(rng),
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Champion {
    pub genome: Genome,
    pub report: FitnessReport,
    /// Accepted fitness values from the first parent to this genome.
    pub lineage: Vec<f64>,
    pub restart: usize,
}

impl Champion {
    pub fn lineage_length(&self) -> usize {
        self.lineage.len()
    }
}

/// RNG of restart `index`, derived from the master seed.
pub fn restart_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

/// Mutate-evaluate-accept until `max_failed_mutations` offspring in a row
/// fail to beat the parent.
pub fn hill_climb(cfg: &SearchConfig, rng: &mut impl Rng, restart: usize) -> Champion {
    let mut genome = random_genome(cfg, rng);
    let mut report = evaluate(&genome, cfg);
    let mut lineage = vec![report.fitness];
    let mut failures = 0;
    let mut evaluations = 1;
    while failures < cfg.max_failed_mutations && evaluations < cfg.max_evaluations {
        let child = mutate(&genome, rng);
        let child_report = evaluate(&child, cfg);
        evaluations += 1;
        if child_report.fitness > report.fitness {
            genome = child;
            report = child_report;
            lineage.push(report.fitness);
            failures = 0;
        } else {
            failures += 1;
        }
    }
    if cfg.refinement && report.fitness > 0.0 {
        let refined = refine(&genome, cfg, &RefineOptions::default());
        let refined_report = evaluate(&refined, cfg);
        if refined_report.fitness > report.fitness {
            genome = refined;
            report = refined_report;
            lineage.push(report.fitness);
        }
    }
    Champion {
        genome,
        report,
        lineage,
        restart,
    }
}

/// Independent restarts, deduplicated by structure and sorted best first.
pub fn run_search(cfg: &SearchConfig) -> Result<Vec<Champion>> {
    cfg.validate()?;
    let all: Vec<Champion> = (0..cfg.max_restarts)
        .into_par_iter()
        .map(|i| hill_climb(cfg, &mut restart_rng(cfg.rng_seed, i), i))
        .collect();
    Ok(dedup_and_sort(all))
}

pub fn dedup_and_sort(all: Vec<Champion>) -> Vec<Champion> {
    let mut best: BTreeMap<String, Champion> = BTreeMap::new();
    for c in all {
        let key = c.genome.structure_key();
        match best.get(&key) {
            Some(old) if old.report.fitness >= c.report.fitness => {}
            _ => {
                best.insert(key, c);
            }
        }
    }
    let mut out: Vec<Champion> = best.into_values().collect();
    out.sort_by(|x, y| {
        y.report
            .fitness
            .total_cmp(&x.report.fitness)
            .then(x.restart.cmp(&y.restart))
    });
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct RefineOptions {
    pub sweeps: usize,
    /// Keep beam-splitter transmissivities fixed.
    pub freeze_transmissivity: bool,
    /// Golden-section iterations per interval.
    pub iterations: usize,
    /// Parameter indices left untouched.
    pub frozen: Vec<usize>,
}

impl Default for RefineOptions {
    fn default() -> Self {
        Self {
            sweeps: 3,
            freeze_transmissivity: false,
            iterations: 40,
            frozen: Vec::new(),
        }
    }
}

const INV_PHI: f64 = 0.618_033_988_749_894_8;

fn golden_max(f: &mut impl FnMut(f64) -> f64, mut lo: f64, mut hi: f64, iterations: usize) -> (f64, f64) {
    let mut x1 = hi - INV_PHI * (hi - lo);
    let mut x2 = lo + INV_PHI * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    for _ in 0..iterations {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INV_PHI * (hi - lo);
            f2 = f(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INV_PHI * (hi - lo);
            f1 = f(x1);
        }
    }
    if f1 >= f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}

/// Coordinate ascent over the continuous parameters. Each coordinate gets a
/// golden-section search over its full range and over a window around the
/// current value; a move is kept only if it raises the fitness.
pub fn refine(g: &Genome, cfg: &SearchConfig, opts: &RefineOptions) -> Genome {
    let mut best = g.clone();
    let mut best_fit = evaluate(&best, cfg).fitness;
    let infos: Vec<ParamInfo> = g.params().into_iter().map(|(_, i)| i).collect();
    for _ in 0..opts.sweeps {
        for (i, info) in infos.iter().enumerate() {
            if (info.kind == ParamKind::Transmissivity && opts.freeze_transmissivity) || opts.frozen.contains(&i) {
                continue;
            }
            let hi = if info.kind == ParamKind::Transmissivity { 100.0 } else { info.hi };
            let lo = if info.kind == ParamKind::Transmissivity { 1.0 } else { info.lo };
            let current = best.params()[i].0;
            let base = best.clone();
            let mut f = |v: f64| evaluate(&base.with_param(i, v), cfg).fitness;
            let width = 0.1 * (hi - lo);
            let windows = [(lo, hi), ((current - width).max(lo), (current + width).min(hi))];
            for (a, b) in windows {
                if b <= a {
                    continue;
                }
                let (x, fx) = golden_max(&mut f, a, b, opts.iterations);
                if fx > best_fit {
                    best = base.with_param(i, x);
                    best_fit = fx;
                }
            }
        }
    }
    best
}

/// The named circuits T1-T6.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Template {
    T1,
    T2,
    T3,
    T4,
    T5,
    T6,
}

impl Template {
    pub const ALL: [Template; 6] = [Template::T1, Template::T2, Template::T3, Template::T4, Template::T5, Template::T6];

    pub fn label(self) -> &'static str {
        match self {
            Template::T1 => "t1",
            Template::T2 => "t2",
            Template::T3 => "t3",
            Template::T4 => "t4",
            Template::T5 => "t5",
            Template::T6 => "t6",
        }
    }

    pub fn parse(label: &str) -> Option<Template> {
        Template::ALL.into_iter().find(|t| t.label() == label.to_ascii_lowercase())
    }

    /// Circuit structure with placeholder continuous parameters.
    /// Parameter indices held fixed during template refinement.
    pub fn frozen(self) -> &'static [usize] {
        match self {
            // squeezing of the input in arm b
            Template::T3 => &[0],
            _ => &[],
        }
    }

    pub fn genome(self) -> Genome {
        let sv = |r: f64, theta_s: f64| StateSpec::SqueezedVacuum { r, theta_s };
        let bs = |t: f64| OperatorSpec::BeamSplitter { t };
        let disp = |mag: f64, theta: f64, mode: Mode| OperatorSpec::Displacement { mag, theta, mode };
        let count = |k: u32| MeasurementSpec::Number { k };
        match self {
            Template::T1 => Genome {
                input_a: sv(1.08, 3.29),
                input_b: sv(1.24, 4.5),
                ops: vec![bs(15.0), OperatorSpec::Identity],
                final_meas: count(2),
            },
            Template::T2 => Genome {
                input_a: sv(0.28, 2.71),
                input_b: sv(1.3, 5.85),
                ops: vec![disp(1.45, 4.49, Mode::A), bs(65.0)],
                final_meas: count(3),
            },
            Template::T3 => Genome {
                input_a: StateSpec::VACUUM,
                input_b: sv(0.62, 2.07),
                ops: vec![bs(25.0), disp(0.48, 2.37, Mode::A), disp(0.73, 2.76, Mode::B)],
                final_meas: count(3),
            },
            Template::T4 => Genome {
                input_a: sv(0.8, 0.0),
                input_b: sv(0.8, 1.0),
                ops: vec![disp(1.0, 0.0, Mode::A), bs(55.0)],
                final_meas: count(4),
            },
            Template::T5 => Genome {
                input_a: StateSpec::Fock { n: 2 },
                input_b: sv(0.6, 0.0),
                ops: vec![bs(95.0), OperatorSpec::Identity],
                final_meas: MeasurementSpec::Quadrature { x: 0.0, lambda: 0.0 },
            },
            Template::T6 => Genome {
                input_a: StateSpec::Coherent { mag: 1.0, theta_c: 0.0 },
                input_b: sv(0.6, 0.0),
                ops: vec![bs(75.0), OperatorSpec::Identity],
                final_meas: count(1),
            },
        }
    }
}

/// Nelder-Mead maximization of `f` over a box; points are clamped into the box
/// before evaluation.
pub fn nelder_mead(
    f: &mut impl FnMut(&[f64]) -> f64,
    start: &[f64],
    lo: &[f64],
    hi: &[f64],
    max_evals: usize,
) -> (Vec<f64>, f64) {
    let n = start.len();
    let clamp = |x: &[f64]| -> Vec<f64> { x.iter().enumerate().map(|(i, v)| v.clamp(lo[i], hi[i])).collect() };
    let mut evals = 0;
    let mut eval = |x: &[f64], evals: &mut usize| {
        *evals += 1;
        -f(&clamp(x))
    };
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    let x0 = clamp(start);
    let v0 = eval(&x0, &mut evals);
    simplex.push((x0.clone(), v0));
    for i in 0..n {
        let mut x = x0.clone();
        let step = 0.1 * (hi[i] - lo[i]);
        x[i] = if x[i] + step <= hi[i] { x[i] + step } else { x[i] - step };
        let v = eval(&x, &mut evals);
        simplex.push((x, v));
    }
    while evals < max_evals {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        if (simplex[n].1 - simplex[0].1).abs() <= 1e-12 * simplex[0].1.abs().max(1e-12) {
            break;
        }
        let centroid: Vec<f64> = (0..n).map(|j| simplex[..n].iter().map(|p| p.0[j]).sum::<f64>() / n as f64).collect();
        let along = |t: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&simplex[n].0)
                .map(|(c, w)| c + t * (w - c))
                .collect()
        };
        let xr = along(-1.0);
        let vr = eval(&xr, &mut evals);
        if vr < simplex[0].1 {
            let xe = along(-2.0);
            let ve = eval(&xe, &mut evals);
            simplex[n] = if ve < vr { (xe, ve) } else { (xr, vr) };
        } else if vr < simplex[n - 1].1 {
            simplex[n] = (xr, vr);
        } else {
            let t = if vr < simplex[n].1 { -0.5 } else { 0.5 };
            let xc = along(t);
            let vc = eval(&xc, &mut evals);
            if vc < simplex[n].1.min(vr) {
                simplex[n] = (xc, vc);
            } else {
                let best = simplex[0].0.clone();
                for p in simplex.iter_mut().skip(1) {
                    let x: Vec<f64> = best.iter().zip(&p.0).map(|(b, v)| b + 0.5 * (v - b)).collect();
                    let v = eval(&x, &mut evals);
                    *p = (x, v);
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    (clamp(&simplex[0].0), -simplex[0].1)
}

/// Refines a template at a target total photon number, keeping its
/// transmissivities and measurement type fixed. Each of `starts`
/// deterministic starting points runs Nelder-Mead over the free parameters
/// followed by `refine`; the best result is returned.
pub fn refine_template(template: Template, target_nbar: f64, starts: usize, seed: u64) -> (Genome, FitnessReport) {
    let cfg = SearchConfig {
        fitness_kind: FitnessKind::QfiAtTargetNbar {
            target: target_nbar,
            tolerance: 0.01 * target_nbar,
        },
        herald_floor: 0.0,
        ..SearchConfig::default()
    };
    refine_template_with(template.genome(), &cfg, starts, seed, template.frozen())
}

/// Template refinement for use under loss: maximizes the pair's QFI after
/// loss `eta` per arm at the target photon number.
pub fn refine_template_lossy(
    template: Template,
    target_nbar: f64,
    eta: f64,
    starts: usize,
    seed: u64,
) -> (Genome, FitnessReport) {
    let cfg = SearchConfig {
        fitness_kind: FitnessKind::LossyQfiAtTargetNbar {
            target: target_nbar,
            tolerance: 0.01 * target_nbar,
            eta,
        },
        herald_floor: 0.0,
        ..SearchConfig::default()
    };
    refine_template_with(template.genome(), &cfg, starts, seed, template.frozen())
}

/// Multi-start Nelder-Mead followed by coordinate refinement; transmissivities
/// and the `frozen` parameter indices keep their values from `base`.
pub fn refine_template_with(
    base: Genome,
    cfg: &SearchConfig,
    starts: usize,
    seed: u64,
    frozen: &[usize],
) -> (Genome, FitnessReport) {
    let opts = RefineOptions {
        freeze_transmissivity: true,
        frozen: frozen.to_vec(),
        ..RefineOptions::default()
    };
    let params = base.params();
    let free: Vec<usize> = (0..params.len())
        .filter(|&i| params[i].1.kind != ParamKind::Transmissivity && !frozen.contains(&i))
        .collect();
    let lo: Vec<f64> = free.iter().map(|&i| params[i].1.lo).collect();
    let hi: Vec<f64> = free.iter().map(|&i| params[i].1.hi).collect();
    let assemble = |x: &[f64]| {
        free.iter()
            .zip(x)
            .fold(base.clone(), |g, (&i, &v)| g.with_param(i, v))
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<(Genome, FitnessReport)> = None;
    for start in 0..starts.max(1) {
        let x0: Vec<f64> = if start == 0 {
            free.iter().map(|&i| params[i].0).collect()
        } else {
            lo.iter().zip(&hi).map(|(l, h)| rng.random_range(*l..*h)).collect()
        };
        let mut f = |x: &[f64]| evaluate(&assemble(x), cfg).fitness;
        let (x, _) = nelder_mead(&mut f, &x0, &lo, &hi, 150 * (free.len() + 1));
        let (x, _) = nelder_mead(&mut f, &x, &lo, &hi, 100 * (free.len() + 1));
        let g = refine(&assemble(&x), cfg, &opts);
        let report = evaluate(&g, cfg);
        if best.as_ref().is_none_or(|(_, b)| report.fitness > b.fitness) {
            best = Some((g, report));
        }
    }
    best.expect("at least one start")
}

/// One JSON object per line.
pub fn archive_jsonl(champions: &[Champion]) -> String {
    let mut out = String::new();
    for c in champions {
        out.push_str(&serde_json::to_string(c).expect("champion serializes"));
        out.push('\n');
    }
    out
}

pub const SUMMARY_HEADER: &str = "fitness,qfi,nbar,gamma,herald_prob,genome_digest";

pub fn summary_csv(champions: &[Champion]) -> String {
    let mut out = String::from(SUMMARY_HEADER);
    out.push('\n');
    for c in champions {
        let r = &c.report;
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.fitness,
            r.qfi,
            r.nbar,
            r.gamma,
            r.herald_prob,
            c.genome.digest()
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::make_coherent;
    use crate::hilbert::C64;
    use crate::metrology::qfi_pure;

    fn cfg() -> SearchConfig {
        SearchConfig {
            max_restarts: 4,
            max_failed_mutations: 10,
            ..SearchConfig::default()
        }
    }

    #[test]
    fn seeded_genomes_repeat() {
        let c = cfg();
        let a = random_genome(&c, &mut ChaCha8Rng::seed_from_u64(42));
        let b = random_genome(&c, &mut ChaCha8Rng::seed_from_u64(42));
        assert_eq!(a, b);
    }

    #[test]
    fn random_genomes_cover_kinds_and_validate() {
        let c = SearchConfig { m: 3, ..cfg() };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut kinds = std::collections::BTreeSet::new();
        let mut ts = std::collections::BTreeSet::new();
        for _ in 0..10_000 {
            let g = random_genome(&c, &mut rng);
            g.validate().unwrap();
            assert_eq!(g.m(), 3);
            kinds.insert(g.input_a.kind_label());
            kinds.insert(g.input_b.kind_label());
            for op in &g.ops {
                if let OperatorSpec::BeamSplitter { t } = op {
                    ts.insert(*t as i64);
                }
            }
        }
        for k in ["fock0", "fock1", "fock2", "coherent", "sv"] {
            assert!(kinds.contains(k), "{k} never sampled");
        }
        assert_eq!(ts.len(), 19);
        assert!(ts.iter().all(|t| t % 5 == 0 && (5..=95).contains(t)));
    }

    fn differing_slots(a: &Genome, b: &Genome) -> usize {
        let mut n = (a.input_a != b.input_a) as usize + (a.input_b != b.input_b) as usize;
        n += a.ops.iter().zip(&b.ops).filter(|(x, y)| x != y).count();
        n + (a.final_meas != b.final_meas) as usize
    }

    #[test]
    fn mutation_touches_at_most_one_slot() {
        let c = SearchConfig { m: 4, ..cfg() };
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut g = random_genome(&c, &mut rng);
        for _ in 0..5000 {
            let child = mutate(&g, &mut rng);
            assert!(differing_slots(&g, &child) <= 1);
            child.validate().unwrap();
            g = child;
        }
    }

    #[test]
    fn mutation_is_reproducible() {
        let g = Template::T2.genome();
        let a = mutate(&g, &mut ChaCha8Rng::seed_from_u64(5));
        let b = mutate(&g, &mut ChaCha8Rng::seed_from_u64(5));
        assert_eq!(a, b);
    }

    #[test]
    fn reflection_stays_in_bounds() {
        for v in [-3.1, -0.2, 0.0, 0.7, 1.3, 1.9, 4.4] {
            let r = reflect(v, 0.0, 1.3);
            assert!((0.0..=1.3).contains(&r), "{v} -> {r}");
        }
        assert!((reflect(1.5, 0.0, 1.3) - 1.1).abs() < 1e-12);
        assert!((reflect(-0.2, 0.0, 1.3) - 0.2).abs() < 1e-12);
    }

    #[test]
    fn params_round_trip() {
        let g = Template::T3.genome();
        let p = g.params();
        // sv (2) + bs + 2 displacements (2 each)
        assert_eq!(p.len(), 7);
        let h = g.with_param(2, 40.0);
        assert_eq!(h.ops[0], OperatorSpec::BeamSplitter { t: 40.0 });
        assert_eq!(h.params()[2].0, 40.0);
    }

    #[test]
    fn vacuum_inputs_cannot_herald_a_photon() {
        let g = Genome {
            input_a: StateSpec::VACUUM,
            input_b: StateSpec::VACUUM,
            ops: vec![OperatorSpec::BeamSplitter { t: 50.0 }, OperatorSpec::Identity],
            final_meas: MeasurementSpec::Number { k: 1 },
        };
        let r = evaluate(&g, &cfg());
        assert_eq!(r.fitness, 0.0);
        assert!(r.diagnostic.is_some());
    }

    #[test]
    fn separable_herald_leaves_mode_b_alone() {
        let g = Genome {
            input_a: StateSpec::Coherent { mag: 1.0, theta_c: 0.0 },
            input_b: StateSpec::Coherent { mag: 0.7, theta_c: 0.4 },
            ops: vec![OperatorSpec::Identity, OperatorSpec::Identity],
            final_meas: MeasurementSpec::Number { k: 1 },
        };
        let r = evaluate(&g, &cfg());
        let psi = r.heralded.clone().unwrap();
        let expected = make_coherent(C64::from_polar(0.7, 0.4), Truncation::Auto).unwrap();
        assert!((psi.fidelity(&expected) - 1.0).abs() < 1e-10);
        // herald <1|alpha=1> = e^{-1}
        assert!((r.herald_prob - (-1.0f64).exp()).abs() < 1e-10);
        assert!((r.gamma - 1.0).abs() < 1e-9);
    }

    #[test]
    fn fitness_agrees_with_two_mode_qfi() {
        let g = Template::T1.genome();
        let r = evaluate(&g, &cfg());
        let psi = r.heralded.clone().unwrap();
        let f = qfi_pure(&tensor(&psi, &psi)).unwrap();
        assert!((f - r.qfi).abs() < 1e-9 * f.max(1.0));
        assert!((r.fitness - r.gamma).abs() < 1e-15);
    }

    #[test]
    fn herald_floor_zeroes_rare_heralds() {
        let g = Template::T1.genome();
        let strict = SearchConfig {
            herald_floor: 0.99,
            ..cfg()
        };
        assert_eq!(evaluate(&g, &strict).fitness, 0.0);
        // quadrature heralds report a density and bypass the floor
        let q = Template::T5.genome();
        assert!(evaluate(&q, &strict).fitness > 0.0);
    }

    #[test]
    fn target_window_scoring() {
        let k = FitnessKind::QfiAtTargetNbar {
            target: 1.5,
            tolerance: 0.1,
        };
        assert_eq!(k.score(10.0, 1.55), 10.0);
        assert!((k.score(10.0, 1.7) - 2.5).abs() < 1e-12);
        assert_eq!(FitnessKind::Gamma.score(6.0, 2.0), 3.0);
        assert_eq!(FitnessKind::Qfi.score(6.0, 2.0), 6.0);
    }

    #[test]
    fn hill_climb_is_monotone_and_reproducible() {
        let c = cfg();
        for restart in 0..3 {
            let a = hill_climb(&c, &mut restart_rng(3, restart), restart);
            let b = hill_climb(&c, &mut restart_rng(3, restart), restart);
            assert_eq!(a, b);
            assert!(a.lineage.windows(2).all(|w| w[1] > w[0]));
            assert_eq!(*a.lineage.last().unwrap(), a.report.fitness);
            assert!(a.report.fitness >= a.lineage[0]);
        }
    }

    #[test]
    fn search_sorted_and_deduplicated() {
        let c = SearchConfig {
            max_restarts: 6,
            rng_seed: 11,
            ..cfg()
        };
        let champs = run_search(&c).unwrap();
        assert!(champs.windows(2).all(|w| w[0].report.fitness >= w[1].report.fitness));
        let keys: std::collections::BTreeSet<_> = champs.iter().map(|c| c.genome.structure_key()).collect();
        assert_eq!(keys.len(), champs.len());
        let again = run_search(&c).unwrap();
        assert_eq!(archive_jsonl(&champs), archive_jsonl(&again));
        for ch in &champs {
            let r = evaluate(&ch.genome, &c);
            assert!((r.fitness - ch.report.fitness).abs() <= 1e-9);
        }
        let one = run_search(&SearchConfig { max_restarts: 1, ..c }).unwrap();
        assert_eq!(one.len(), 1);
    }

    #[test]
    fn refine_never_lowers_fitness() {
        let c = cfg();
        let opts = RefineOptions {
            sweeps: 1,
            iterations: 20,
            ..RefineOptions::default()
        };
        let g = Template::T6.genome();
        let before = evaluate(&g, &c).fitness;
        let refined = refine(&g, &c, &opts);
        assert_eq!(refined.structure_key(), g.structure_key());
        assert!(evaluate(&refined, &c).fitness >= before);
    }

    #[test]
    fn config_json_defaults() {
        let c: SearchConfig = serde_json::from_str(r#"{"rng_seed": 3}"#).unwrap();
        assert_eq!(c.max_failed_mutations, 50);
        assert_eq!(c.max_restarts, 500);
        assert_eq!(c.herald_floor, 0.01);
        assert_eq!(c.fitness_kind, FitnessKind::Gamma);
        let t: SearchConfig =
            serde_json::from_str(r#"{"fitness_kind": {"kind": "qfi_at_target_nbar", "target": 1.5, "tolerance": 0.1}}"#)
                .unwrap();
        assert!(matches!(t.fitness_kind, FitnessKind::QfiAtTargetNbar { .. }));
        assert!(SearchConfig { herald_floor: 1.0, ..c.clone() }.validate().is_err());
        assert!(SearchConfig { m: 1, ..c }.validate().is_err());
    }

    #[test]
    fn template_labels() {
        for t in Template::ALL {
            assert_eq!(Template::parse(t.label()), Some(t));
            t.genome().validate().unwrap();
        }
        assert_eq!(Template::parse("bogus"), None);
    }
}
