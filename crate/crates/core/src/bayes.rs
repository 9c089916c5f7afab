//! Grid Bayesian phase estimation with the balanced-beam-splitter,
//! photon-counting readout.
//!
//! The relative phase sits on arm `a` as `exp(i phi n_a)`. Both arms are then
//! mixed on a 50:50 beam splitter and counted.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hilbert::TwoModeState;
use crate::operators::{apply_beam_splitter, apply_phase, Mode};
use crate::search::restart_rng;

pub const DEFAULT_GRID: usize = 1024;
pub const MIN_GRID: usize = 512;

/// Joint photon-count distribution `P(n_a, n_b | phi)`.
#[derive(Debug, Clone, PartialEq)]
pub struct OutcomeTable {
    dim_a: usize,
    dim_b: usize,
    probs: Vec<f64>,
}

impl OutcomeTable {
    pub fn dims(&self) -> (usize, usize) {
        (self.dim_a, self.dim_b)
    }

    /// Zero outside the table.
    pub fn get(&self, outcome: (usize, usize)) -> f64 {
        let (a, b) = outcome;
        if a < self.dim_a && b < self.dim_b {
            self.probs[a * self.dim_b + b]
        } else {
            0.0
        }
    }

    pub fn total(&self) -> f64 {
        self.probs.iter().sum()
    }

    /// Draws one outcome by inverting the cumulative distribution.
    pub fn sample(&self, rng: &mut impl Rng) -> (usize, usize) {
        let u: f64 = rng.random::<f64>() * self.total();
        let mut acc = 0.0;
        let mut last = 0;
        for (i, p) in self.probs.iter().enumerate() {
            if *p > 0.0 {
                last = i;
                acc += p;
                if u < acc {
                    return (i / self.dim_b, i % self.dim_b);
                }
            }
        }
        (last / self.dim_b, last % self.dim_b)
    }
}

/// Phase on arm `a`, 50:50 beam splitter, Born probabilities.
pub fn outcome_distribution(probe: &TwoModeState, phi: f64) -> Result<OutcomeTable> {
    let shifted = apply_phase(phi, Mode::A, probe);
    let out = apply_beam_splitter(50.0, &shifted)?;
    Ok(OutcomeTable {
        dim_a: out.dim_a(),
        dim_b: out.dim_b(),
        probs: out.amps().iter().map(|z| z.norm_sqr()).collect(),
    })
}

/// Largest `phi_max` such that `[0, phi_max]` holds one copy of every
/// distinguishable phase: `pi / p`, where `p` is the gcd of the photon-number
/// differences occupied in arm `a`.
pub fn phase_domain(probe: &TwoModeState) -> f64 {
    let marginal = probe.marginal_a();
    let occupied: Vec<usize> = (0..marginal.len()).filter(|&n| marginal[n] > 1e-14).collect();
    let mut g = 0usize;
    for w in occupied.windows(2) {
        g = gcd(g, w[1] - occupied[0]);
    }
    std::f64::consts::PI / g.max(1) as f64
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Posterior weights on a uniform grid of cell centres over `[0, phi_max]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Posterior {
    phi_max: f64,
    grid: Vec<f64>,
    weights: Vec<f64>,
}

impl Posterior {
    /// Flat prior.
    pub fn uniform(points: usize, phi_max: f64) -> Result<Self> {
        if points < MIN_GRID {
            return Err(Error::Config(format!("grid of {points} points is below {MIN_GRID}")));
        }
        if !(phi_max > 0.0 && phi_max <= std::f64::consts::PI) {
            return Err(Error::Config(format!("phase domain {phi_max} outside (0, pi]")));
        }
        let h = phi_max / points as f64;
        Ok(Self {
            phi_max,
            grid: (0..points).map(|k| (k as f64 + 0.5) * h).collect(),
            weights: vec![1.0 / points as f64; points],
        })
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn phi_max(&self) -> f64 {
        self.phi_max
    }

    pub fn mean(&self) -> f64 {
        self.grid.iter().zip(&self.weights).map(|(p, w)| p * w).sum()
    }

    pub fn std_dev(&self) -> f64 {
        let m = self.mean();
        let var: f64 = self.grid.iter().zip(&self.weights).map(|(p, w)| w * (p - m).powi(2)).sum();
        var.max(0.0).sqrt()
    }

    /// Grid point of largest weight.
    pub fn map(&self) -> f64 {
        let mut best = 0;
        for (k, w) in self.weights.iter().enumerate() {
            if *w > self.weights[best] {
                best = k;
            }
        }
        self.grid[best]
    }
}

/// Outcome tables at every grid point of a posterior.
#[derive(Debug, Clone)]
pub struct LikelihoodCache {
    grid: Vec<f64>,
    tables: Vec<OutcomeTable>,
}

impl LikelihoodCache {
    pub fn new(probe: &TwoModeState, posterior: &Posterior) -> Result<Self> {
        let tables = posterior
            .grid
            .par_iter()
            .map(|&phi| outcome_distribution(probe, phi))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            grid: posterior.grid.clone(),
            tables,
        })
    }

    pub fn likelihood(&self, k: usize, outcome: (usize, usize)) -> f64 {
        self.tables[k].get(outcome)
    }

    pub fn tables(&self) -> &[OutcomeTable] {
        &self.tables
    }
}

/// Multiplies by the likelihood of `outcome` and renormalizes.
pub fn bayesian_update(post: &Posterior, outcome: (usize, usize), cache: &LikelihoodCache) -> Result<Posterior> {
    if cache.grid != post.grid {
        return Err(Error::Dimension("likelihood cache built on a different grid".into()));
    }
    let mut weights: Vec<f64> = post
        .weights
        .iter()
        .enumerate()
        .map(|(k, w)| w * cache.likelihood(k, outcome))
        .collect();
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) || !total.is_finite() {
        return Err(Error::DegeneratePosterior);
    }
    for w in &mut weights {
        *w /= total;
    }
    Ok(Posterior {
        phi_max: post.phi_max,
        grid: post.grid.clone(),
        weights,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Estimator {
    Mean,
    Map,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub estimate: f64,
    pub spread: f64,
}

/// `mu` sampled outcomes at `phi_true`, folded into a flat prior.
pub fn simulate_run(
    probe: &TwoModeState,
    phi_true: f64,
    mu: usize,
    cache: &LikelihoodCache,
    prior: &Posterior,
    estimator: Estimator,
    rng: &mut impl Rng,
) -> Result<(Posterior, RunResult)> {
    if !(phi_true > 0.0 && phi_true < std::f64::consts::PI) {
        return Err(Error::ParameterBound(format!("phi_true {phi_true} outside (0, pi)")));
    }
    if mu == 0 {
        return Err(Error::ParameterBound("mu must be at least 1".into()));
    }
    let truth = outcome_distribution(probe, phi_true)?;
    let mut post = prior.clone();
    for _ in 0..mu {
        let outcome = truth.sample(rng);
        post = bayesian_update(&post, outcome, cache)?;
    }
    let estimate = match estimator {
        Estimator::Mean => post.mean(),
        Estimator::Map => post.map(),
    };
    let spread = post.std_dev();
    Ok((post, RunResult { estimate, spread }))
}

/// Summary over independent seeded runs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Experiment {
    pub mu: usize,
    pub phi_true: f64,
    pub runs: usize,
    /// Mean of the per-run estimates.
    pub estimate: f64,
    /// Mean posterior standard deviation.
    pub spread: f64,
    /// Standard error of `spread`.
    pub spread_se: f64,
    /// Root-mean-square estimation error.
    pub rmse: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSetup {
    pub phi_true: f64,
    pub mu: usize,
    pub runs: usize,
    pub grid: usize,
    pub seed: u64,
    pub estimator: Estimator,
}

/// Run `i` uses the RNG derived from `(seed, i)`.
pub fn run_experiment(probe: &TwoModeState, setup: &ExperimentSetup) -> Result<(Experiment, Vec<RunResult>)> {
    if setup.runs == 0 {
        return Err(Error::ParameterBound("runs must be at least 1".into()));
    }
    let prior = Posterior::uniform(setup.grid, phase_domain(probe))?;
    if setup.phi_true >= prior.phi_max() {
        return Err(Error::ParameterBound(format!(
            "phi_true {} outside the identifiable range (0, {})",
            setup.phi_true,
            prior.phi_max()
        )));
    }
    let cache = LikelihoodCache::new(probe, &prior)?;
    let results = (0..setup.runs)
        .into_par_iter()
        .map(|i| {
            let mut rng = restart_rng(setup.seed, i);
            simulate_run(probe, setup.phi_true, setup.mu, &cache, &prior, setup.estimator, &mut rng).map(|(_, r)| r)
        })
        .collect::<Result<Vec<_>>>()?;
    let n = results.len() as f64;
    let estimate = results.iter().map(|r| r.estimate).sum::<f64>() / n;
    let spread = results.iter().map(|r| r.spread).sum::<f64>() / n;
    let var = if results.len() > 1 {
        results.iter().map(|r| (r.spread - spread).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    let rmse = (results.iter().map(|r| (r.estimate - setup.phi_true).powi(2)).sum::<f64>() / n).sqrt();
    Ok((
        Experiment {
            mu: setup.mu,
            phi_true: setup.phi_true,
            runs: setup.runs,
            estimate,
            spread,
            spread_se: (var / n).sqrt(),
            rmse,
        },
        results,
    ))
}
