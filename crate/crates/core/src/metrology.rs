//! Phase-estimation figures of merit.
//!
//! The phase generator is `G = (n_a - n_b) / 2`. Probes are either pure
//! two-mode states or density matrices over the flattened `|n_a, n_b>` basis
//! (index `n_a * dim_b + n_b`). Loss is a per-arm pure-loss channel obtained
//! by mixing each arm with vacuum on a beam splitter of transmissivity `eta`
//! and discarding the ancilla.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hilbert::{make_squeezed, tensor, SingleModeState, Truncation, TwoModeState, C64, MAX_SQUEEZING, NORM_TOL};
use crate::operators::{BeamSplitterSectors, Mode};

/// Per-arm truncation used for two-mode density matrices.
pub const LOSS_DIM: usize = 25;
/// Eigenvalue pairs with `l_i + l_j` at or below this are skipped.
pub const EIGEN_PAIR_CUTOFF: f64 = 1e-12;
const HERMITIAN_TOL: f64 = 1e-8;

/// Either a pure two-mode probe or a mixed one.
#[derive(Debug, Clone)]
pub enum ProbeState {
    Pure(TwoModeState),
    Mixed(DensityMatrix),
}

impl ProbeState {
    /// `|psi> ⊗ |psi>` across the two interferometer arms.
    pub fn pair(arm: &SingleModeState) -> Self {
        ProbeState::Pure(tensor(arm, arm))
    }

    pub fn mean_photon(&self) -> Result<f64> {
        match self {
            ProbeState::Pure(s) => s.mean_photon(),
            ProbeState::Mixed(rho) => Ok(rho.mean_photon()),
        }
    }
}

/// Dense density matrix over a truncated two-mode Fock basis.
#[derive(Debug, Clone)]
pub struct DensityMatrix {
    dim_a: usize,
    dim_b: usize,
    mat: DMatrix<C64>,
}

impl DensityMatrix {
    pub fn from_matrix(dim_a: usize, dim_b: usize, mat: DMatrix<C64>) -> Result<Self> {
        let n = dim_a * dim_b;
        if n == 0 || mat.nrows() != n || mat.ncols() != n {
            return Err(Error::Dimension(format!(
                "{}x{} matrix for a {dim_a}x{dim_b} basis",
                mat.nrows(),
                mat.ncols()
            )));
        }
        Ok(Self { dim_a, dim_b, mat })
    }

    /// `|s><s|`.
    pub fn from_pure(s: &TwoModeState) -> Self {
        let v = nalgebra::DVector::from_column_slice(s.amps());
        let mat = &v * v.adjoint();
        Self {
            dim_a: s.dim_a(),
            dim_b: s.dim_b(),
            mat,
        }
    }

    /// A single mode stored as a `dim x 1` two-mode basis.
    pub fn from_single_mode(s: &SingleModeState) -> Self {
        let v = nalgebra::DVector::from_column_slice(s.amps());
        Self {
            dim_a: s.dim(),
            dim_b: 1,
            mat: &v * v.adjoint(),
        }
    }

    pub fn dim_a(&self) -> usize {
        self.dim_a
    }

    pub fn dim_b(&self) -> usize {
        self.dim_b
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.mat
    }

    pub fn trace(&self) -> f64 {
        self.mat.trace().re
    }

    /// `tr(rho^2)`.
    pub fn purity(&self) -> f64 {
        self.mat.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn mean_photon(&self) -> f64 {
        let mut mean = 0.0;
        for i in 0..self.dim_a {
            for j in 0..self.dim_b {
                let idx = i * self.dim_b + j;
                mean += (i + j) as f64 * self.mat[(idx, idx)].re;
            }
        }
        mean
    }

    /// Largest `|rho_ij - conj(rho_ji)|`.
    pub fn hermiticity_defect(&self) -> f64 {
        let n = self.mat.nrows();
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in i..n {
                worst = worst.max((self.mat[(i, j)] - self.mat[(j, i)].conj()).norm());
            }
        }
        worst
    }

    /// Hermitian, unit trace, and (numerically) positive.
    pub fn validate(&self) -> Result<()> {
        let defect = self.hermiticity_defect();
        if defect > HERMITIAN_TOL {
            return Err(Error::InvalidDensityMatrix(format!("hermiticity defect {defect:.3e}")));
        }
        let tr = self.trace();
        if (tr - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidDensityMatrix(format!("trace {tr}")));
        }
        let min = self
            .mat
            .clone()
            .symmetric_eigenvalues()
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min);
        if min < -1e-10 {
            return Err(Error::InvalidDensityMatrix(format!("eigenvalue {min:.3e}")));
        }
        Ok(())
    }

    /// Photon-number distribution of mode `a` (the diagonal of the reduced state).
    pub fn marginal_a(&self) -> Vec<f64> {
        (0..self.dim_a)
            .map(|i| {
                (0..self.dim_b)
                    .map(|j| {
                        let idx = i * self.dim_b + j;
                        self.mat[(idx, idx)].re
                    })
                    .sum()
            })
            .collect()
    }

    fn generator_diagonal(&self) -> Vec<f64> {
        let mut g = Vec::with_capacity(self.dim_a * self.dim_b);
        for i in 0..self.dim_a {
            for j in 0..self.dim_b {
                g.push(0.5 * (i as f64 - j as f64));
            }
        }
        g
    }

    /// Pure-loss channel on one mode with transmissivity `eta`.
    fn lose(&self, mode: Mode, eta: f64) -> Self {
        let (da, db) = (self.dim_a, self.dim_b);
        let dim = match mode {
            Mode::A => da,
            Mode::B => db,
        };
        // dilation amplitudes <n-k, k| U |n, 0>, ancilla in the second slot
        let bs = BeamSplitterSectors::new(100.0 * eta, dim.saturating_sub(1));
        let amp = |n: usize, k: usize| bs.element(n, n - k, n);
        let n = da * db;
        let mut out = DMatrix::<C64>::zeros(n, n);
        let split = |idx: usize| (idx / db, idx % db);
        for row in 0..n {
            let (ra, rb) = split(row);
            for col in 0..n {
                let (ca, cb) = split(col);
                let (r_mode, c_mode) = match mode {
                    Mode::A => (ra, ca),
                    Mode::B => (rb, cb),
                };
                let mut acc = C64::new(0.0, 0.0);
                for k in 0..dim - r_mode.max(c_mode) {
                    let (src_r, src_c) = match mode {
                        Mode::A => ((ra + k) * db + rb, (ca + k) * db + cb),
                        Mode::B => (ra * db + rb + k, ca * db + cb + k),
                    };
                    let w = amp(r_mode + k, k) * amp(c_mode + k, k);
                    if w != 0.0 {
                        acc += self.mat[(src_r, src_c)] * w;
                    }
                }
                out[(row, col)] = acc;
            }
        }
        Self {
            dim_a: da,
            dim_b: db,
            mat: out,
        }
    }
}

/// Per-arm photon loss: arm `a` keeps fraction `eta_a`, arm `b` keeps `eta_b`.
pub fn apply_loss(probe: &ProbeState, eta_a: f64, eta_b: f64) -> Result<DensityMatrix> {
    for eta in [eta_a, eta_b] {
        if !(0.0..=1.0).contains(&eta) {
            return Err(Error::ParameterBound(format!("transmissivity {eta} outside [0, 1]")));
        }
    }
    let rho = match probe {
        ProbeState::Pure(s) => DensityMatrix::from_pure(s),
        ProbeState::Mixed(rho) => rho.clone(),
    };
    let rho = if eta_a < 1.0 { rho.lose(Mode::A, eta_a) } else { rho };
    let rho = if eta_b < 1.0 && rho.dim_b > 1 {
        rho.lose(Mode::B, eta_b)
    } else {
        rho
    };
    Ok(rho)
}

/// Truncates a pure probe to `dim x dim` for density-matrix work, failing if
/// more than the tail tolerance would be discarded.
pub fn reduce_for_loss(s: &TwoModeState, dim: usize) -> Result<TwoModeState> {
    let lost = s.mass_outside(dim, dim);
    if lost >= crate::hilbert::TAIL_TOL {
        return Err(Error::Truncation(format!(
            "probe keeps mass {lost:.3e} beyond {dim} levels per arm"
        )));
    }
    let (out, _) = s.resized(dim.min(s.dim_a()), dim.min(s.dim_b())).normalize()?;
    Ok(out)
}

/// `4 Var(G)` for a pure state.
pub fn qfi_pure(p: &TwoModeState) -> Result<f64> {
    let n2 = p.norm_sqr();
    if (n2 - 1.0).abs() > NORM_TOL {
        return Err(Error::Normalization(n2));
    }
    let (mut first, mut second) = (0.0, 0.0);
    for i in 0..p.dim_a() {
        for (j, a) in p.row(i).iter().enumerate() {
            let w = a.norm_sqr();
            let g = 0.5 * (i as f64 - j as f64);
            first += w * g;
            second += w * g * g;
        }
    }
    Ok((4.0 * (second - first * first)).max(0.0))
}

/// Mixed-state QFI for `d rho / d phi = i[G, rho]`:
/// `sum_ij 2 (l_i - l_j)^2 / (l_i + l_j) |<l_i|G|l_j>|^2`.
pub fn qfi_mixed(rho: &DensityMatrix) -> Result<f64> {
    let defect = rho.hermiticity_defect();
    if defect > HERMITIAN_TOL {
        return Err(Error::InvalidDensityMatrix(format!("hermiticity defect {defect:.3e}")));
    }
    let eig = rho.mat.clone().symmetric_eigen();
    let g = rho.generator_diagonal();
    let vecs = &eig.eigenvectors;
    let mut gv = vecs.clone();
    for (r, gr) in g.iter().enumerate() {
        gv.row_mut(r).scale_mut(*gr);
    }
    let m = vecs.adjoint() * gv;
    let lambdas = &eig.eigenvalues;
    let n = lambdas.len();
    let mut qfi = 0.0;
    for i in 0..n {
        for j in 0..n {
            let sum = lambdas[i] + lambdas[j];
            if sum <= EIGEN_PAIR_CUTOFF {
                continue;
            }
            let diff = lambdas[i] - lambdas[j];
            qfi += 2.0 * diff * diff / sum * m[(i, j)].norm_sqr();
        }
    }
    Ok(qfi.max(0.0))
}

/// QFI of `|psi> ⊗ |psi>` after equal loss `eta` in both arms.
///
/// The lossy probe is `rho_eta ⊗ rho_eta`, and the QFI is additive over the
/// two arms, so only single-mode density matrices are diagonalized.
pub fn qfi_lossy_pair(arm: &SingleModeState, eta: f64) -> Result<f64> {
    let rho = DensityMatrix::from_single_mode(arm);
    let lossy = apply_loss(&ProbeState::Mixed(rho), eta, 1.0)?;
    Ok(2.0 * qfi_mixed(&lossy)?)
}

/// `sqrt(mu) * delta_phi = 1 / sqrt(F_Q)` of `|psi> ⊗ |psi>` under equal loss.
pub fn scaled_precision_lossy_pair(arm: &SingleModeState, eta: f64) -> Result<f64> {
    Ok(1.0 / qfi_lossy_pair(arm, eta)?.sqrt())
}

/// Figures of merit of a probe.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeritReport {
    pub qfi: f64,
    pub nbar: f64,
    pub gamma: f64,
}

impl MeritReport {
    pub fn new(qfi: f64, nbar: f64) -> Result<Self> {
        if !(nbar > 1e-12) {
            return Err(Error::ZeroPhoton);
        }
        Ok(Self {
            qfi,
            nbar,
            gamma: qfi / nbar,
        })
    }

    /// Cramér-Rao bound `1 / sqrt(mu F_Q)`.
    pub fn crb(&self, mu: f64) -> f64 {
        1.0 / (mu * self.qfi).sqrt()
    }
}

pub fn merit(p: &ProbeState) -> Result<MeritReport> {
    let nbar = p.mean_photon()?;
    if !(nbar > 1e-12) {
        return Err(Error::ZeroPhoton);
    }
    let qfi = match p {
        ProbeState::Pure(s) => qfi_pure(s)?,
        ProbeState::Mixed(rho) => qfi_mixed(rho)?,
    };
    MeritReport::new(qfi, nbar)
}

/// Squeezing amplitude whose `|z, z>` pair carries `nbar` photons in total.
pub fn sv_squeezing_for_nbar(nbar: f64) -> Result<f64> {
    if !(nbar > 0.0) {
        return Err(Error::ZeroPhoton);
    }
    let r = (nbar / 2.0).sqrt().asinh();
    if r > MAX_SQUEEZING + 1e-12 {
        return Err(Error::ParameterBound(format!(
            "nbar {nbar} needs r = {r:.4} > {MAX_SQUEEZING}"
        )));
    }
    Ok(r.min(MAX_SQUEEZING))
}

/// Mode-separable squeezed-vacuum pair `|z, z>` at total photon number `nbar`.
pub fn sv_baseline(nbar: f64) -> Result<MeritReport> {
    let r = sv_squeezing_for_nbar(nbar)?;
    let arm = make_squeezed(r, 0.0, Truncation::Auto)?;
    merit(&ProbeState::pair(&arm))
}

/// Shot-noise limit: `F_Q = nbar`.
pub fn snl_baseline(nbar: f64) -> Result<MeritReport> {
    MeritReport::new(nbar, nbar)
}
