//! Pure optical states on a truncated Fock basis.
//!
//! Single-mode states are amplitude vectors indexed by photon number; two-mode
//! states are dense `dim_a x dim_b` amplitude matrices stored row-major, with
//! row index `n_a` and column index `n_b`.
//!
//! Generators either take an explicit truncation (and fail if the state does
//! not fit) or pick the smallest dimension whose omitted mass is negligible.

use std::f64::consts::TAU;
use std::sync::OnceLock;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::operators;

pub type C64 = Complex64;

/// Upper bound on the squeezing amplitude `r` of an input state.
pub const MAX_SQUEEZING: f64 = 1.3;
/// Upper bound on `|alpha|` for coherent inputs (and `|beta|` for displacements).
pub const MAX_AMPLITUDE: f64 = 4.0;
/// Largest Fock number accepted as an input state.
pub const MAX_FOCK_INPUT: u32 = 2;

/// Mass allowed in the top 10% of indices, and mass allowed to fall off the
/// end of an explicitly truncated state.
pub const TAIL_TOL: f64 = 1e-8;
/// Omitted-mass target when the truncation is chosen automatically.
pub const AUTO_TOL: f64 = 1e-13;
/// Trailing rows/columns of two-mode states are dropped while their
/// cumulative mass stays below this.
pub const TRIM_TOL: f64 = 1e-15;
/// Per-mode dimension cap.
pub const MAX_DIM: usize = 200;
/// Deviation of the squared norm from one tolerated by moment calculations.
pub const NORM_TOL: f64 = 1e-6;

/// Length of the scratch expansion used by analytic generators.
const SCRATCH_DIM: usize = 640;

/// How many Fock levels a generated state keeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Truncation {
    /// Smallest dimension with omitted mass below [`AUTO_TOL`], capped at [`MAX_DIM`].
    #[default]
    Auto,
    /// Exactly this many levels; fails if the state does not fit.
    Fixed(usize),
}

impl From<usize> for Truncation {
    fn from(dim: usize) -> Self {
        Truncation::Fixed(dim)
    }
}

fn log_factorial_table() -> &'static [f64] {
    static TABLE: OnceLock<Vec<f64>> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut table = Vec::with_capacity(4096);
        let mut acc = 0.0;
        table.push(0.0);
        for k in 1..4096 {
            acc += (k as f64).ln();
            table.push(acc);
        }
        table
    })
}

/// `ln(n!)`, exact up to rounding for `n < 4096`.
pub fn ln_factorial(n: usize) -> f64 {
    let table = log_factorial_table();
    if n < table.len() {
        table[n]
    } else {
        // Stirling with the first two corrections; only reached far outside MAX_DIM.
        let x = n as f64;
        x * x.ln() - x + 0.5 * (TAU * x).ln() + 1.0 / (12.0 * x) - 1.0 / (360.0 * x.powi(3))
    }
}

/// Mass held by the top 10% of indices (at least one index).
pub fn tail_mass(amps: &[C64]) -> f64 {
    let dim = amps.len();
    let count = dim.div_ceil(10).max(1);
    amps[dim - count..].iter().map(|a| a.norm_sqr()).sum()
}

fn norm_sqr(amps: &[C64]) -> f64 {
    amps.iter().map(|a| a.norm_sqr()).sum()
}

/// A single optical mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SingleModeState {
    amps: Vec<C64>,
}

impl SingleModeState {
    /// Wraps raw amplitudes; no normalization is applied.
    pub fn from_amps(amps: Vec<C64>) -> Result<Self> {
        if amps.is_empty() {
            return Err(Error::Dimension("single-mode state needs dim >= 1".into()));
        }
        Ok(Self { amps })
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn amps(&self) -> &[C64] {
        &self.amps
    }

    pub fn amp(&self, n: usize) -> C64 {
        self.amps.get(n).copied().unwrap_or_default()
    }

    pub fn norm_sqr(&self) -> f64 {
        norm_sqr(&self.amps)
    }

    pub fn probabilities(&self) -> Vec<f64> {
        self.amps.iter().map(|a| a.norm_sqr()).collect()
    }

    pub fn tail_mass(&self) -> f64 {
        tail_mass(&self.amps)
    }

    /// Returns the unit-norm state together with the squared norm it had.
    pub fn normalize(&self) -> Result<(Self, f64)> {
        let n2 = self.norm_sqr();
        if !(n2.sqrt() > 1e-30) {
            return Err(Error::ZeroState);
        }
        let scale = 1.0 / n2.sqrt();
        let amps = self.amps.iter().map(|a| a * scale).collect();
        Ok((Self { amps }, n2))
    }

    fn check_normalized(&self) -> Result<()> {
        let n2 = self.norm_sqr();
        if (n2 - 1.0).abs() > NORM_TOL {
            return Err(Error::Normalization(n2));
        }
        Ok(())
    }

    /// `<n>`.
    pub fn mean_photon(&self) -> Result<f64> {
        self.check_normalized()?;
        Ok(self
            .amps
            .iter()
            .enumerate()
            .map(|(n, a)| n as f64 * a.norm_sqr())
            .sum())
    }

    /// `<n^2> - <n>^2`.
    pub fn photon_variance(&self) -> Result<f64> {
        let mean = self.mean_photon()?;
        let second: f64 = self
            .amps
            .iter()
            .enumerate()
            .map(|(n, a)| (n * n) as f64 * a.norm_sqr())
            .sum();
        Ok((second - mean * mean).max(0.0))
    }

    /// `<self|other>`, zero-padding the shorter vector.
    pub fn inner(&self, other: &Self) -> C64 {
        self.amps
            .iter()
            .zip(other.amps.iter())
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    /// `|<self|other>|^2` for unit vectors; insensitive to global phase.
    pub fn fidelity(&self, other: &Self) -> f64 {
        self.inner(other).norm_sqr()
    }

    /// Copy resized to `dim` levels, zero-padding or dropping the top.
    pub fn resized(&self, dim: usize) -> Self {
        let mut amps = self.amps.clone();
        amps.resize(dim.max(1), C64::new(0.0, 0.0));
        Self { amps }
    }

    /// Smallest parity period of the occupied photon numbers: 2 when only
    /// even (or only odd) numbers appear, 1 otherwise.
    pub fn number_period(&self, floor: f64) -> usize {
        let occupied: Vec<usize> = self
            .amps
            .iter()
            .enumerate()
            .filter(|(_, a)| a.norm_sqr() > floor)
            .map(|(n, _)| n)
            .collect();
        let Some(&first) = occupied.first() else {
            return 1;
        };
        let gcd = occupied
            .iter()
            .fold(0usize, |g, &n| num_gcd(g, n - first));
        if gcd == 0 {
            1
        } else {
            gcd
        }
    }
}

fn num_gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        num_gcd(b, a % b)
    }
}

/// Two optical modes `a` and `b`.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoModeState {
    dim_a: usize,
    dim_b: usize,
    amps: Vec<C64>,
}

impl TwoModeState {
    pub fn from_amps(dim_a: usize, dim_b: usize, amps: Vec<C64>) -> Result<Self> {
        if dim_a == 0 || dim_b == 0 {
            return Err(Error::Dimension("two-mode state needs non-zero dims".into()));
        }
        if amps.len() != dim_a * dim_b {
            return Err(Error::Dimension(format!(
                "{} amplitudes for a {dim_a}x{dim_b} state",
                amps.len()
            )));
        }
        Ok(Self { dim_a, dim_b, amps })
    }

    pub fn zeros(dim_a: usize, dim_b: usize) -> Self {
        Self {
            dim_a,
            dim_b,
            amps: vec![C64::new(0.0, 0.0); dim_a * dim_b],
        }
    }

    pub fn dim_a(&self) -> usize {
        self.dim_a
    }

    pub fn dim_b(&self) -> usize {
        self.dim_b
    }

    pub fn amps(&self) -> &[C64] {
        &self.amps
    }

    pub(crate) fn amps_mut(&mut self) -> &mut [C64] {
        &mut self.amps
    }

    /// Amplitude of `|n_a, n_b>`, zero outside the stored block.
    pub fn get(&self, n_a: usize, n_b: usize) -> C64 {
        if n_a < self.dim_a && n_b < self.dim_b {
            self.amps[n_a * self.dim_b + n_b]
        } else {
            C64::new(0.0, 0.0)
        }
    }

    pub fn row(&self, n_a: usize) -> &[C64] {
        &self.amps[n_a * self.dim_b..(n_a + 1) * self.dim_b]
    }

    pub fn norm_sqr(&self) -> f64 {
        norm_sqr(&self.amps)
    }

    pub fn normalize(&self) -> Result<(Self, f64)> {
        let n2 = self.norm_sqr();
        if !(n2.sqrt() > 1e-30) {
            return Err(Error::ZeroState);
        }
        let scale = 1.0 / n2.sqrt();
        let mut out = self.clone();
        out.amps.iter_mut().for_each(|a| *a *= scale);
        Ok((out, n2))
    }

    fn check_normalized(&self) -> Result<()> {
        let n2 = self.norm_sqr();
        if (n2 - 1.0).abs() > NORM_TOL {
            return Err(Error::Normalization(n2));
        }
        Ok(())
    }

    /// Photon-number distribution of mode `a`.
    pub fn marginal_a(&self) -> Vec<f64> {
        (0..self.dim_a)
            .map(|i| norm_sqr(self.row(i)))
            .collect()
    }

    /// Photon-number distribution of mode `b`.
    pub fn marginal_b(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.dim_b];
        for i in 0..self.dim_a {
            for (j, a) in self.row(i).iter().enumerate() {
                out[j] += a.norm_sqr();
            }
        }
        out
    }

    /// Distribution of the total photon number `n_a + n_b`.
    pub fn total_number_distribution(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.dim_a + self.dim_b - 1];
        for i in 0..self.dim_a {
            for (j, a) in self.row(i).iter().enumerate() {
                out[i + j] += a.norm_sqr();
            }
        }
        out
    }

    /// `<n_a + n_b>`.
    pub fn mean_photon(&self) -> Result<f64> {
        self.check_normalized()?;
        let mut mean = 0.0;
        for i in 0..self.dim_a {
            for (j, a) in self.row(i).iter().enumerate() {
                mean += (i + j) as f64 * a.norm_sqr();
            }
        }
        Ok(mean)
    }

    /// Copy re-shaped to `dim_a x dim_b`, zero-padding or dropping levels.
    pub fn resized(&self, dim_a: usize, dim_b: usize) -> Self {
        let mut out = Self::zeros(dim_a, dim_b);
        for i in 0..dim_a.min(self.dim_a) {
            for j in 0..dim_b.min(self.dim_b) {
                out.amps[i * dim_b + j] = self.amps[i * self.dim_b + j];
            }
        }
        out
    }

    /// Mass outside the leading `dim_a x dim_b` block.
    pub fn mass_outside(&self, dim_a: usize, dim_b: usize) -> f64 {
        let mut mass = 0.0;
        for i in 0..self.dim_a {
            for (j, a) in self.row(i).iter().enumerate() {
                if i >= dim_a || j >= dim_b {
                    mass += a.norm_sqr();
                }
            }
        }
        mass
    }

    /// Drops trailing levels of negligible mass, then enforces [`MAX_DIM`].
    pub fn trimmed(&self) -> Result<Self> {
        let keep_a = keep_levels(&self.marginal_a(), TRIM_TOL);
        let keep_b = keep_levels(&self.marginal_b(), TRIM_TOL);
        let (keep_a, keep_b) = (keep_a.min(MAX_DIM), keep_b.min(MAX_DIM));
        if keep_a == self.dim_a && keep_b == self.dim_b {
            return Ok(self.clone());
        }
        let lost = self.mass_outside(keep_a, keep_b);
        if lost >= TAIL_TOL {
            return Err(Error::Truncation(format!(
                "two-mode state needs more than {MAX_DIM} levels per mode (lost mass {lost:.3e})"
            )));
        }
        Ok(self.resized(keep_a, keep_b))
    }

    /// `<self|other>` over the common block.
    pub fn inner(&self, other: &Self) -> C64 {
        let mut acc = C64::new(0.0, 0.0);
        for i in 0..self.dim_a.min(other.dim_a) {
            for j in 0..self.dim_b.min(other.dim_b) {
                acc += self.get(i, j).conj() * other.get(i, j);
            }
        }
        acc
    }

    /// Largest elementwise distance after zero-padding both to a common shape.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        let da = self.dim_a.max(other.dim_a);
        let db = self.dim_b.max(other.dim_b);
        let mut worst: f64 = 0.0;
        for i in 0..da {
            for j in 0..db {
                worst = worst.max((self.get(i, j) - other.get(i, j)).norm());
            }
        }
        worst
    }
}

/// Number of leading levels to keep so that the dropped top levels carry
/// less than `tol` in total.
pub(crate) fn keep_levels(dist: &[f64], tol: f64) -> usize {
    let mut dropped = 0.0;
    let mut keep = dist.len();
    while keep > 1 {
        let next = dropped + dist[keep - 1];
        if next >= tol {
            break;
        }
        dropped = next;
        keep -= 1;
    }
    keep
}

/// `a ⊗ b`.
pub fn tensor(a: &SingleModeState, b: &SingleModeState) -> TwoModeState {
    let mut amps = Vec::with_capacity(a.dim() * b.dim());
    for x in a.amps() {
        for y in b.amps() {
            amps.push(x * y);
        }
    }
    TwoModeState {
        dim_a: a.dim(),
        dim_b: b.dim(),
        amps,
    }
}

/// Cuts an analytic expansion down to the requested truncation and normalizes it.
fn truncate_expansion(full: Vec<C64>, trunc: Truncation, what: &str) -> Result<SingleModeState> {
    let len = full.len();
    let mut suffix = vec![0.0; len + 1];
    for n in (0..len).rev() {
        suffix[n] = suffix[n + 1] + full[n].norm_sqr();
    }
    let dim = match trunc {
        Truncation::Fixed(dim) => {
            if dim == 0 {
                return Err(Error::Dimension("dim must be >= 1".into()));
            }
            let omitted = suffix[dim.min(len)];
            if omitted >= TAIL_TOL {
                return Err(Error::Truncation(format!(
                    "{what}: mass {omitted:.3e} lies beyond dim {dim}"
                )));
            }
            dim
        }
        Truncation::Auto => {
            let fits = |d: usize| suffix[d] < AUTO_TOL && tail_mass(&full[..d]) < TAIL_TOL;
            match (2..=MAX_DIM.min(len)).find(|&d| fits(d)) {
                Some(d) => d,
                None if suffix[MAX_DIM] < TAIL_TOL => MAX_DIM,
                None => {
                    return Err(Error::Truncation(format!(
                        "{what}: does not fit in {MAX_DIM} levels"
                    )))
                }
            }
        }
    };
    let mut amps: Vec<C64> = full.into_iter().take(dim).collect();
    amps.resize(dim, C64::new(0.0, 0.0));
    let tail = tail_mass(&amps);
    if tail >= TAIL_TOL {
        return Err(Error::Truncation(format!(
            "{what}: top-decile mass {tail:.3e} at dim {dim}"
        )));
    }
    let (state, _) = SingleModeState { amps }.normalize()?;
    Ok(state)
}

/// `|n>`.
pub fn make_fock(n: usize, trunc: impl Into<Truncation>) -> Result<SingleModeState> {
    let trunc = trunc.into();
    if let Truncation::Fixed(dim) = trunc {
        if n >= dim {
            return Err(Error::Truncation(format!("|{n}> needs dim > {n}, got {dim}")));
        }
    }
    let len = match trunc {
        Truncation::Fixed(dim) => dim,
        Truncation::Auto => n + 2,
    };
    let mut amps = vec![C64::new(0.0, 0.0); len.max(n + 1)];
    amps[n] = C64::new(1.0, 0.0);
    truncate_expansion(amps, trunc, "fock state")
}

/// Coherent amplitudes `e^{-|a|^2/2} a^n / sqrt(n!)` for `n < len`.
pub(crate) fn coherent_expansion(alpha: C64, len: usize) -> Vec<C64> {
    let mag = alpha.norm();
    if mag == 0.0 {
        let mut v = vec![C64::new(0.0, 0.0); len];
        v[0] = C64::new(1.0, 0.0);
        return v;
    }
    let phase = alpha.arg();
    let ln_mag = mag.ln();
    (0..len)
        .map(|n| {
            let ln_abs = -0.5 * mag * mag + n as f64 * ln_mag - 0.5 * ln_factorial(n);
            C64::from_polar(ln_abs.exp(), n as f64 * phase)
        })
        .collect()
}

/// `|alpha> = D(alpha)|0>`.
pub fn make_coherent(alpha: C64, trunc: impl Into<Truncation>) -> Result<SingleModeState> {
    check_amplitude(alpha.norm(), "coherent amplitude")?;
    truncate_expansion(coherent_expansion(alpha, SCRATCH_DIM), trunc.into(), "coherent state")
}

/// Squeezed vacuum amplitudes for `S(z) = exp[(z* a^2 - z a†^2)/2]`, `z = r e^{i theta}`:
/// `<2k|z> = (-e^{i theta} tanh r)^k sqrt((2k)!) / (2^k k! sqrt(cosh r))`.
pub(crate) fn squeezed_expansion(r: f64, theta: f64, len: usize) -> Vec<C64> {
    let mut v = vec![C64::new(0.0, 0.0); len];
    if r == 0.0 {
        v[0] = C64::new(1.0, 0.0);
        return v;
    }
    let ln_t = r.tanh().ln();
    let ln_c = -0.5 * r.cosh().ln();
    let ratio = C64::from_polar(1.0, theta) * -1.0;
    let mut phase = C64::new(1.0, 0.0);
    for k in 0..len.div_ceil(2) {
        let n = 2 * k;
        if n >= len {
            break;
        }
        let ln_abs = ln_c + k as f64 * ln_t + 0.5 * ln_factorial(n)
            - k as f64 * std::f64::consts::LN_2
            - ln_factorial(k);
        v[n] = phase * ln_abs.exp();
        phase *= ratio;
    }
    v
}

/// `|z> = S(z)|0>` with `z = r e^{i theta_s}`.
pub fn make_squeezed(r: f64, theta_s: f64, trunc: impl Into<Truncation>) -> Result<SingleModeState> {
    check_squeezing(r)?;
    truncate_expansion(squeezed_expansion(r, theta_s, SCRATCH_DIM), trunc.into(), "squeezed vacuum")
}

/// Even squeezed cat `N S(z)(|alpha> + |-alpha>)`.
///
/// Uses `S(z)|alpha> = D(gamma)|z>` with `gamma = alpha cosh r - alpha* e^{i theta} sinh r`.
pub fn make_scs(r: f64, theta_s: f64, alpha: C64, trunc: impl Into<Truncation>) -> Result<SingleModeState> {
    check_squeezing(r)?;
    check_amplitude(alpha.norm(), "cat amplitude")?;
    let trunc = trunc.into();
    let gamma = alpha * r.cosh() - alpha.conj() * C64::from_polar(r.sinh(), theta_s);
    let vacuum_sq = squeezed_expansion(r, theta_s, SCRATCH_DIM);
    let cut = crate::hilbert::keep_levels(
        &vacuum_sq.iter().map(|a| a.norm_sqr()).collect::<Vec<_>>(),
        AUTO_TOL * 1e-3,
    );
    let base = &vacuum_sq[..cut];
    let rows = SCRATCH_DIM;
    let plus = operators::displacement_matrix(gamma, rows, cut);
    let minus = operators::displacement_matrix(-gamma, rows, cut);
    let mut full = vec![C64::new(0.0, 0.0); rows];
    for (k, out) in full.iter_mut().enumerate() {
        let mut acc = C64::new(0.0, 0.0);
        for (n, b) in base.iter().enumerate() {
            acc += (plus.get(k, n) + minus.get(k, n)) * b;
        }
        *out = acc;
    }
    let n2 = norm_sqr(&full);
    if !(n2 > 1e-30) {
        return Err(Error::ZeroState);
    }
    let scale = 1.0 / n2.sqrt();
    full.iter_mut().for_each(|a| *a *= scale);
    truncate_expansion(full, trunc, "squeezed cat state")
}

fn check_squeezing(r: f64) -> Result<()> {
    if !(0.0..=MAX_SQUEEZING).contains(&r) {
        return Err(Error::ParameterBound(format!(
            "squeezing r = {r} outside [0, {MAX_SQUEEZING}]"
        )));
    }
    Ok(())
}

pub(crate) fn check_amplitude(mag: f64, what: &str) -> Result<()> {
    if !(0.0..=MAX_AMPLITUDE).contains(&mag) {
        return Err(Error::ParameterBound(format!(
            "{what} {mag} outside [0, {MAX_AMPLITUDE}]"
        )));
    }
    Ok(())
}

/// Input state of one mode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum StateSpec {
    /// `|n>`, `n ∈ {0, 1, 2}`; `n = 0` is the vacuum.
    #[serde(rename = "fock")]
    Fock { n: u32 },
    /// `|alpha>`, `alpha = mag e^{i theta_c}`.
    #[serde(rename = "coherent")]
    Coherent { mag: f64, theta_c: f64 },
    /// `S(z)|0>`, `z = r e^{i theta_s}`.
    #[serde(rename = "sv")]
    SqueezedVacuum { r: f64, theta_s: f64 },
}

impl StateSpec {
    pub const VACUUM: StateSpec = StateSpec::Fock { n: 0 };

    pub fn validate(&self) -> Result<()> {
        match *self {
            StateSpec::Fock { n } => {
                if n > MAX_FOCK_INPUT {
                    return Err(Error::ParameterBound(format!(
                        "Fock input |{n}> exceeds |{MAX_FOCK_INPUT}>"
                    )));
                }
            }
            StateSpec::Coherent { mag, theta_c } => {
                check_amplitude(mag, "coherent amplitude")?;
                check_angle(theta_c)?;
            }
            StateSpec::SqueezedVacuum { r, theta_s } => {
                check_squeezing(r)?;
                check_angle(theta_s)?;
            }
        }
        Ok(())
    }

    pub fn build(&self, trunc: impl Into<Truncation>) -> Result<SingleModeState> {
        self.validate()?;
        match *self {
            StateSpec::Fock { n } => make_fock(n as usize, trunc),
            StateSpec::Coherent { mag, theta_c } => make_coherent(C64::from_polar(mag, theta_c), trunc),
            StateSpec::SqueezedVacuum { r, theta_s } => make_squeezed(r, theta_s, trunc),
        }
    }

    /// Short label of the variant, ignoring continuous parameters.
    pub fn kind_label(&self) -> String {
        match self {
            StateSpec::Fock { n } => format!("fock{n}"),
            StateSpec::Coherent { .. } => "coherent".into(),
            StateSpec::SqueezedVacuum { .. } => "sv".into(),
        }
    }
}

pub(crate) fn check_angle(theta: f64) -> Result<()> {
    if !theta.is_finite() {
        return Err(Error::ParameterBound(format!("angle {theta} is not finite")));
    }
    Ok(())
}
