//! Heralded projections of one mode onto number states or quadrature
//! eigenstates.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hilbert::{keep_levels, SingleModeState, TwoModeState, C64, TRIM_TOL};
use crate::operators::Mode;

/// Largest photon number a final herald may resolve.
pub const MAX_HERALD_PHOTONS: u32 = 4;
/// Projections with less squared norm than this are treated as impossible.
pub const HERALD_ZERO_TOL: f64 = 1e-12;

/// A projective post-selection on one mode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum MeasurementSpec {
    /// `<k|`. `k = 0` is only legal inside a measure-and-replace operator.
    #[serde(rename = "number")]
    Number { k: u32 },
    /// `<x_lambda|` at quadrature eigenvalue `x`.
    #[serde(rename = "quadrature")]
    Quadrature { x: f64, lambda: f64 },
}

impl MeasurementSpec {
    /// Validity as the final herald of a circuit.
    pub fn validate_final(&self) -> Result<()> {
        match *self {
            MeasurementSpec::Number { k } if (1..=MAX_HERALD_PHOTONS).contains(&k) => Ok(()),
            MeasurementSpec::Number { k } => Err(Error::ParameterBound(format!(
                "final number herald <{k}| outside 1..={MAX_HERALD_PHOTONS}"
            ))),
            MeasurementSpec::Quadrature { x, lambda } => check_quadrature(x, lambda),
        }
    }

    /// Validity inside a measure-and-replace operator, where `<0|` is allowed.
    pub fn validate_intermediate(&self) -> Result<()> {
        match *self {
            MeasurementSpec::Number { k } if k <= MAX_HERALD_PHOTONS => Ok(()),
            MeasurementSpec::Number { k } => Err(Error::ParameterBound(format!(
                "number herald <{k}| exceeds <{MAX_HERALD_PHOTONS}|"
            ))),
            MeasurementSpec::Quadrature { x, lambda } => check_quadrature(x, lambda),
        }
    }

    pub fn is_number(&self) -> bool {
        matches!(self, MeasurementSpec::Number { .. })
    }

    pub fn kind_label(&self) -> String {
        match self {
            MeasurementSpec::Number { k } => format!("n{k}"),
            MeasurementSpec::Quadrature { .. } => "x".into(),
        }
    }
}

fn check_quadrature(x: f64, lambda: f64) -> Result<()> {
    if !x.is_finite() || !lambda.is_finite() {
        return Err(Error::ParameterBound("quadrature parameters must be finite".into()));
    }
    Ok(())
}

/// The unmeasured mode after a successful herald.
#[derive(Debug, Clone, PartialEq)]
pub struct HeraldedState {
    pub state: SingleModeState,
    /// Squared norm of the projected state: a probability for number
    /// heralds, a probability density in `x` for quadrature heralds.
    pub prob: f64,
    pub is_density: bool,
}

fn herald(amps: Vec<C64>, is_density: bool) -> Result<HeraldedState> {
    let raw = SingleModeState::from_amps(amps)?;
    let prob = raw.norm_sqr();
    if prob < HERALD_ZERO_TOL {
        return Err(Error::ZeroState);
    }
    let (state, _) = raw.normalize()?;
    let keep = keep_levels(&state.probabilities(), TRIM_TOL);
    Ok(HeraldedState {
        state: state.resized(keep),
        prob,
        is_density,
    })
}

/// `(<k| ⊗ I)|s>` for `mode = A`, or `(I ⊗ <k|)|s>` for `mode = B`.
pub fn project_number(k: usize, mode: Mode, s: &TwoModeState) -> Result<HeraldedState> {
    let amps: Vec<C64> = match mode {
        Mode::A => {
            if k >= s.dim_a() {
                return Err(Error::ZeroState);
            }
            s.row(k).to_vec()
        }
        Mode::B => {
            if k >= s.dim_b() {
                return Err(Error::ZeroState);
            }
            (0..s.dim_a()).map(|i| s.get(i, k)).collect()
        }
    };
    herald(amps, false)
}

/// Normalized Hermite functions `pi^{-1/4} (2^n n!)^{-1/2} e^{-x^2/2} H_n(x)`
/// for `n < count`, via the bounded three-term recurrence.
pub fn hermite_functions(x: f64, count: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(count);
    if count == 0 {
        return out;
    }
    let psi0 = std::f64::consts::PI.powf(-0.25) * (-0.5 * x * x).exp();
    out.push(psi0);
    if count == 1 {
        return out;
    }
    out.push(std::f64::consts::SQRT_2 * x * psi0);
    for n in 1..count - 1 {
        let nf = n as f64;
        let next = (2.0 / (nf + 1.0)).sqrt() * x * out[n] - (nf / (nf + 1.0)).sqrt() * out[n - 1];
        out.push(next);
    }
    out
}

/// `<x_lambda|n> = pi^{-1/4} (2^n n!)^{-1/2} e^{-x^2/2} H_n(x) e^{-i n lambda}`.
pub fn quadrature_amp(n: usize, x: f64, lambda: f64) -> C64 {
    let psi = hermite_functions(x, n + 1)[n];
    C64::from_polar(1.0, -(n as f64) * lambda) * psi
}

/// `(<x_lambda| ⊗ I)|s>` (or on mode `b`).
pub fn project_quadrature(x: f64, lambda: f64, mode: Mode, s: &TwoModeState) -> Result<HeraldedState> {
    check_quadrature(x, lambda)?;
    let measured = match mode {
        Mode::A => s.dim_a(),
        Mode::B => s.dim_b(),
    };
    let weights: Vec<C64> = hermite_functions(x, measured)
        .into_iter()
        .enumerate()
        .map(|(n, psi)| C64::from_polar(psi, -(n as f64) * lambda))
        .collect();
    let amps: Vec<C64> = match mode {
        Mode::A => {
            let mut acc = vec![C64::new(0.0, 0.0); s.dim_b()];
            for (n, w) in weights.iter().enumerate() {
                for (a, v) in acc.iter_mut().zip(s.row(n)) {
                    *a += w * v;
                }
            }
            acc
        }
        Mode::B => (0..s.dim_a())
            .map(|i| s.row(i).iter().zip(&weights).map(|(v, w)| w * v).sum())
            .collect(),
    };
    herald(amps, true)
}

/// Dispatches on the measurement kind.
pub fn project(meas: &MeasurementSpec, mode: Mode, s: &TwoModeState) -> Result<HeraldedState> {
    match *meas {
        MeasurementSpec::Number { k } => project_number(k as usize, mode, s),
        MeasurementSpec::Quadrature { x, lambda } => project_quadrature(x, lambda, mode, s),
    }
}
