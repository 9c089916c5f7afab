//! Two-mode linear-optics operators: beam splitter, displacement, phase
//! shift, identity, and measure-and-replace.

use std::sync::{Arc, OnceLock, RwLock};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hilbert::{check_amplitude, check_angle, StateSpec, Truncation, TwoModeState, C64, MAX_DIM};
use crate::postselect::{self, MeasurementSpec};

/// Which wire of the circuit an operator acts on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    A,
    B,
}

impl Mode {
    pub fn label(self) -> &'static str {
        match self {
            Mode::A => "a",
            Mode::B => "b",
        }
    }
}

/// One element of the operator sequence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum OperatorSpec {
    /// `U_T` with transmissivity `t` in percent.
    #[serde(rename = "bs")]
    BeamSplitter { t: f64 },
    /// `D(beta)` on one mode, `beta = mag e^{i theta}`.
    #[serde(rename = "disp")]
    Displacement { mag: f64, theta: f64, mode: Mode },
    /// `exp(i n theta_p)` on one mode.
    #[serde(rename = "phase")]
    PhaseShift { theta_p: f64, mode: Mode },
    #[serde(rename = "id")]
    Identity,
    /// `|new><meas|` on one mode.
    #[serde(rename = "measrep")]
    MeasureReplace {
        meas: MeasurementSpec,
        new_input: StateSpec,
        mode: Mode,
    },
}

impl OperatorSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            OperatorSpec::BeamSplitter { t } => {
                if !(t > 0.0 && t <= 100.0) {
                    return Err(Error::ParameterBound(format!("transmissivity {t}% outside (0, 100]")));
                }
            }
            OperatorSpec::Displacement { mag, theta, .. } => {
                check_amplitude(mag, "displacement amplitude")?;
                check_angle(theta)?;
            }
            OperatorSpec::PhaseShift { theta_p, .. } => check_angle(theta_p)?,
            OperatorSpec::Identity => {}
            OperatorSpec::MeasureReplace { meas, new_input, .. } => {
                meas.validate_intermediate()?;
                new_input.validate()?;
            }
        }
        Ok(())
    }

    /// Applies the operator; the second value is the herald probability of an
    /// intermediate measurement (1 for unitaries).
    pub fn apply(&self, s: &TwoModeState) -> Result<(TwoModeState, f64)> {
        self.validate()?;
        match *self {
            OperatorSpec::BeamSplitter { t } => Ok((apply_beam_splitter(t, s)?, 1.0)),
            OperatorSpec::Displacement { mag, theta, mode } => {
                Ok((apply_displacement(C64::from_polar(mag, theta), mode, s)?, 1.0))
            }
            OperatorSpec::PhaseShift { theta_p, mode } => Ok((apply_phase(theta_p, mode, s), 1.0)),
            OperatorSpec::Identity => Ok((s.clone(), 1.0)),
            OperatorSpec::MeasureReplace { meas, new_input, mode } => {
                apply_measure_replace(&meas, &new_input, mode, s)
            }
        }
    }

    /// Variant label with mode tags, ignoring continuous parameters.
    pub fn kind_label(&self) -> String {
        match self {
            OperatorSpec::BeamSplitter { .. } => "bs".into(),
            OperatorSpec::Displacement { mode, .. } => format!("disp_{}", mode.label()),
            OperatorSpec::PhaseShift { mode, .. } => format!("phase_{}", mode.label()),
            OperatorSpec::Identity => "id".into(),
            OperatorSpec::MeasureReplace { meas, new_input, mode } => format!(
                "measrep_{}[{}->{}]",
                mode.label(),
                meas.kind_label(),
                new_input.kind_label()
            ),
        }
    }
}

/// Beam-splitter unitaries restricted to each total-photon-number sector.
///
/// Sector `N` is stored as a dense real `(N+1) x (N+1)` matrix in the basis
/// `|m, N-m>`, column = input. The sector generator of `a b† - a† b` is
/// tridiagonal and, after the diagonal similarity `diag(i^k)`, becomes `i J`
/// with `J` real symmetric. `J` does not depend on `T`, so its eigenvectors
/// are computed once per sector and cached; `U = D V e^{i theta L} V^T D^-1`.
#[derive(Debug, Clone)]
pub struct BeamSplitterSectors {
    cos: f64,
    sin: f64,
    sectors: Vec<Vec<f64>>,
}

type SectorEigen = Arc<(DMatrix<f64>, Vec<f64>)>;

fn sector_eigen(n: usize) -> SectorEigen {
    static CACHE: OnceLock<RwLock<Vec<Option<SectorEigen>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| RwLock::new(Vec::new()));
    if let Some(Some(e)) = cache.read().unwrap().get(n) {
        return e.clone();
    }
    let w = n + 1;
    let mut j = DMatrix::<f64>::zeros(w, w);
    for k in 0..n {
        let beta = (((k + 1) * (n - k)) as f64).sqrt();
        j[(k, k + 1)] = beta;
        j[(k + 1, k)] = beta;
    }
    let eig = j.symmetric_eigen();
    let entry: SectorEigen = Arc::new((eig.eigenvectors, eig.eigenvalues.iter().cloned().collect()));
    let mut guard = cache.write().unwrap();
    if guard.len() <= n {
        guard.resize(n + 1, None);
    }
    guard[n].get_or_insert(entry).clone()
}

impl BeamSplitterSectors {
    /// Sectors `0..=max_total` for transmissivity `t` percent.
    pub fn new(t: f64, max_total: usize) -> Self {
        let cos = (t / 100.0).clamp(0.0, 1.0).sqrt();
        let sin = (1.0 - t / 100.0).clamp(0.0, 1.0).sqrt();
        let theta = sin.atan2(cos);
        let mut sectors: Vec<Vec<f64>> = Vec::with_capacity(max_total + 1);
        sectors.push(vec![1.0]);
        for n in 1..=max_total {
            let e = sector_eigen(n);
            let (v, lambdas) = (&e.0, &e.1);
            let w = n + 1;
            let mut vc = v.clone();
            let mut vs = v.clone();
            for (k, l) in lambdas.iter().enumerate() {
                let (s, c) = (theta * l).sin_cos();
                vc.column_mut(k).scale_mut(c);
                vs.column_mut(k).scale_mut(s);
            }
            let a = &vc * v.transpose();
            let b = &vs * v.transpose();
            let mut sector = vec![0.0; w * w];
            for p in 0..w {
                for q in 0..w {
                    sector[p * w + q] = match (p as isize - q as isize).rem_euclid(4) {
                        0 => a[(p, q)],
                        1 => -b[(p, q)],
                        2 => -a[(p, q)],
                        _ => b[(p, q)],
                    };
                }
            }
            sectors.push(sector);
        }
        Self { cos, sin, sectors }
    }

    pub fn max_total(&self) -> usize {
        self.sectors.len() - 1
    }

    /// `<m, N-m| U |m', N-m'>`.
    pub fn element(&self, total: usize, m_out: usize, m_in: usize) -> f64 {
        self.sectors[total][m_out * (total + 1) + m_in]
    }

    pub fn cos_sin(&self) -> (f64, f64) {
        (self.cos, self.sin)
    }

    /// Applies the unitary to a two-mode state. The result holds every sector
    /// in full and is not trimmed.
    pub fn apply_untrimmed(&self, s: &TwoModeState) -> TwoModeState {
        let (da, db) = (s.dim_a(), s.dim_b());
        let max_total = da + db - 2;
        assert!(max_total <= self.max_total(), "beam splitter sectors too small");
        let dim = max_total + 1;
        let mut out = TwoModeState::zeros(dim, dim);
        let mut input = vec![C64::new(0.0, 0.0); dim];
        let mut output = vec![C64::new(0.0, 0.0); dim];
        for total in 0..=max_total {
            let w = total + 1;
            let lo = total.saturating_sub(db - 1);
            let hi = total.min(da - 1);
            let mut any = false;
            for m in lo..=hi {
                let a = s.get(m, total - m);
                input[m] = a;
                any |= a != C64::new(0.0, 0.0);
            }
            if !any {
                continue;
            }
            let u = &self.sectors[total];
            for (p, o) in output[..w].iter_mut().enumerate() {
                let row = &u[p * w..(p + 1) * w];
                let mut acc = C64::new(0.0, 0.0);
                for m in lo..=hi {
                    acc += input[m] * row[m];
                }
                *o = acc;
            }
            let amps = out.amps_mut();
            for (p, o) in output[..w].iter().enumerate() {
                amps[p * dim + (total - p)] = *o;
            }
        }
        out
    }
}

/// `U_T |s>` with `U_T = exp[theta (a b† - a† b)]`, `T = 100 cos^2 theta`.
pub fn apply_beam_splitter(t: f64, s: &TwoModeState) -> Result<TwoModeState> {
    if !(0.0..=100.0).contains(&t) {
        return Err(Error::ParameterBound(format!("transmissivity {t}% outside [0, 100]")));
    }
    if t == 100.0 {
        return Ok(s.clone());
    }
    let cos = (t / 100.0).sqrt();
    let theta = (1.0 - t / 100.0).max(0.0).sqrt().atan2(cos);
    rotate_sectors(theta, s).trimmed()
}

const I_POW: [C64; 4] = [
    C64::new(1.0, 0.0),
    C64::new(0.0, 1.0),
    C64::new(-1.0, 0.0),
    C64::new(0.0, -1.0),
];

/// Sector-by-sector `D V e^{i theta L} V^T D^-1`, one matrix-vector pair per
/// sector. The result keeps every output sector and is not trimmed.
fn rotate_sectors(theta: f64, s: &TwoModeState) -> TwoModeState {
    let (da, db) = (s.dim_a(), s.dim_b());
    let max_total = da + db - 2;
    let dim = max_total + 1;
    let mut out = TwoModeState::zeros(dim, dim);
    let zero = C64::new(0.0, 0.0);
    let mut y = vec![zero; dim];
    let mut z = vec![zero; dim];
    for total in 0..=max_total {
        let w = total + 1;
        let lo = total.saturating_sub(db - 1);
        let hi = total.min(da - 1);
        if (lo..=hi).all(|m| s.get(m, total - m) == zero) {
            continue;
        }
        if total == 0 {
            out.amps_mut()[0] = s.get(0, 0);
            continue;
        }
        let e = sector_eigen(total);
        let (v, lambdas) = (&e.0, &e.1);
        let vs = v.as_slice();
        for (j, yj) in y[..w].iter_mut().enumerate() {
            let col = &vs[j * w..(j + 1) * w];
            let mut acc = zero;
            for m in lo..=hi {
                acc += s.get(m, total - m) * I_POW[(4 - m % 4) % 4] * col[m];
            }
            *yj = acc * C64::from_polar(1.0, theta * lambdas[j]);
        }
        z[..w].fill(zero);
        for (j, yj) in y[..w].iter().enumerate() {
            let col = &vs[j * w..(j + 1) * w];
            for (zp, vp) in z[..w].iter_mut().zip(col) {
                *zp += *yj * *vp;
            }
        }
        let amps = out.amps_mut();
        for (p, zp) in z[..w].iter().enumerate() {
            amps[p * dim + (total - p)] = *zp * I_POW[p % 4];
        }
    }
    out
}

/// Dense complex matrix, row-major.
#[derive(Debug, Clone)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<C64>,
}

impl DenseMatrix {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> C64 {
        self.data[r * self.cols + c]
    }
}

/// `<k|D(beta)|n>` for `k < rows`, `n < cols`.
///
/// With `x = |beta|^2` and `a = |k - n|`, the magnitude is the normalized
/// Laguerre function `g_j = sqrt(j!/(j+a)!) x^{a/2} e^{-x/2} L_j^{(a)}(x)` at
/// `j = min(k, n)`, generated along each diagonal by its three-term
/// recurrence. Phases follow `e^{i(k-n) arg beta}` below the diagonal and
/// `(-1)^a e^{-i a arg beta}` above it.
pub fn displacement_matrix(beta: C64, rows: usize, cols: usize) -> DenseMatrix {
    let mut data = vec![C64::new(0.0, 0.0); rows * cols];
    let x = beta.norm_sqr();
    let phi = beta.arg();
    let max_offset = rows.max(cols);
    for a in 0..max_offset {
        // lower diagonal k = n + a needs n < min(cols, rows - a)
        let lower = if a < rows { cols.min(rows - a) } else { 0 };
        let upper = if a > 0 && a < cols { rows.min(cols - a) } else { 0 };
        let len = lower.max(upper);
        if len == 0 {
            continue;
        }
        let af = a as f64;
        let log_g0 = if a == 0 {
            -0.5 * x
        } else {
            0.5 * af * x.ln() - 0.5 * x - 0.5 * crate::hilbert::ln_factorial(a)
        };
        let mut g = Vec::with_capacity(len);
        g.push(log_g0.exp());
        if len > 1 {
            g.push((1.0 + af - x) / (1.0 + af).sqrt() * g[0]);
        }
        for j in 1..len.saturating_sub(1) {
            let jf = j as f64;
            let next = ((2.0 * jf + 1.0 + af - x) * g[j] - (jf * (jf + af)).sqrt() * g[j - 1])
                / ((jf + 1.0) * (jf + 1.0 + af)).sqrt();
            g.push(next);
        }
        let below = C64::from_polar(1.0, af * phi);
        let above = C64::from_polar(if a % 2 == 0 { 1.0 } else { -1.0 }, -af * phi);
        for (j, gj) in g.iter().enumerate().take(lower) {
            data[(j + a) * cols + j] = below * *gj;
        }
        for (j, gj) in g.iter().enumerate().take(upper) {
            data[j * cols + j + a] = above * *gj;
        }
    }
    DenseMatrix { rows, cols, data }
}

/// Rows needed so that `D(beta)` acting on `dim` levels loses less than the
/// auto-truncation tolerance.
fn displaced_rows(beta: C64, dim: usize) -> usize {
    let mag = beta.norm();
    let reach = ((dim as f64).sqrt() + mag).powi(2) + 8.0 * (mag + 1.0) * (((dim as f64).sqrt() + mag).sqrt() + 1.0);
    (dim + 15).max(reach.ceil() as usize + 15).min(MAX_DIM + 40)
}

/// `D(beta)` on one mode.
pub fn apply_displacement(beta: C64, mode: Mode, s: &TwoModeState) -> Result<TwoModeState> {
    check_amplitude(beta.norm(), "displacement amplitude")?;
    if beta.norm() == 0.0 {
        return Ok(s.clone());
    }
    let dim = match mode {
        Mode::A => s.dim_a(),
        Mode::B => s.dim_b(),
    };
    let mut rows = displaced_rows(beta, dim);
    loop {
        let d = displacement_matrix(beta, rows, dim);
        let out = displace_with(&d, mode, s);
        let lost = (s.norm_sqr() - out.norm_sqr()).max(0.0);
        if lost < crate::hilbert::AUTO_TOL || rows >= MAX_DIM + 40 {
            if lost >= crate::hilbert::TAIL_TOL {
                return Err(Error::Truncation(format!(
                    "displaced state loses {lost:.3e} beyond {rows} levels"
                )));
            }
            return out.trimmed();
        }
        rows = MAX_DIM + 40;
    }
}

fn displace_with(d: &DenseMatrix, mode: Mode, s: &TwoModeState) -> TwoModeState {
    let (da, db) = (s.dim_a(), s.dim_b());
    match mode {
        Mode::A => {
            let mut out = TwoModeState::zeros(d.rows, db);
            let amps = out.amps_mut();
            for k in 0..d.rows {
                let target = &mut amps[k * db..(k + 1) * db];
                for n in 0..da {
                    let coef = d.get(k, n);
                    if coef == C64::new(0.0, 0.0) {
                        continue;
                    }
                    for (t, x) in target.iter_mut().zip(s.row(n)) {
                        *t += coef * x;
                    }
                }
            }
            out
        }
        Mode::B => {
            let mut out = TwoModeState::zeros(da, d.rows);
            let rows = d.rows;
            let amps = out.amps_mut();
            for i in 0..da {
                let src = s.row(i);
                let target = &mut amps[i * rows..(i + 1) * rows];
                for (k, t) in target.iter_mut().enumerate() {
                    let drow = &d.data[k * d.cols..(k + 1) * d.cols];
                    *t = drow.iter().zip(src).map(|(a, b)| a * b).sum();
                }
            }
            out
        }
    }
}

/// `exp(i n theta_p)` on one mode.
pub fn apply_phase(theta_p: f64, mode: Mode, s: &TwoModeState) -> TwoModeState {
    let (da, db) = (s.dim_a(), s.dim_b());
    let mut out = s.clone();
    let amps = out.amps_mut();
    for i in 0..da {
        for j in 0..db {
            let n = match mode {
                Mode::A => i,
                Mode::B => j,
            };
            amps[i * db + j] *= C64::from_polar(1.0, n as f64 * theta_p);
        }
    }
    out
}

/// `|new><meas|` on one mode: herald on `meas`, then feed a fresh input into
/// the emptied mode. Returns the herald probability (or density).
pub fn apply_measure_replace(
    meas: &MeasurementSpec,
    new_input: &StateSpec,
    mode: Mode,
    s: &TwoModeState,
) -> Result<(TwoModeState, f64)> {
    let heralded = postselect::project(meas, mode, s)?;
    let fresh = new_input.build(Truncation::Auto)?;
    let out = match mode {
        Mode::A => crate::hilbert::tensor(&fresh, &heralded.state),
        Mode::B => crate::hilbert::tensor(&heralded.state, &fresh),
    };
    Ok((out, heralded.prob))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::{make_coherent, make_fock, make_squeezed, tensor};
    use nalgebra::DMatrix;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    fn fock2(n_a: usize, n_b: usize) -> TwoModeState {
        tensor(&make_fock(n_a, n_a + 3).unwrap(), &make_fock(n_b, n_b + 3).unwrap())
    }

    /// Sector generator `a b† - a† b` in the basis `|m, N-m>`, exponentiated densely.
    fn sector_oracle(t: f64, total: usize) -> DMatrix<f64> {
        let theta = (t / 100.0).sqrt().acos();
        let w = total + 1;
        let mut k = DMatrix::<f64>::zeros(w, w);
        for m in 0..w {
            // a b† |m, N-m> = sqrt(m) sqrt(N-m+1) |m-1, N-m+1>
            if m > 0 {
                k[(m - 1, m)] += ((m * (total - m + 1)) as f64).sqrt();
            }
            // a† b |m, N-m> = sqrt(m+1) sqrt(N-m) |m+1, N-m-1>
            if m < total {
                k[(m + 1, m)] -= (((m + 1) * (total - m)) as f64).sqrt();
            }
        }
        (k * theta).exp()
    }

    #[test]
    fn sectors_match_generator_exponential() {
        for &t in &[15.0, 50.0, 65.0, 95.0, 37.3] {
            let bs = BeamSplitterSectors::new(t, 12);
            for total in 0..=12 {
                let oracle = sector_oracle(t, total);
                for i in 0..=total {
                    for j in 0..=total {
                        assert!(
                            close(bs.element(total, i, j), oracle[(i, j)], 1e-11),
                            "T={t} N={total} ({i},{j})"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn transmissive_limit_is_identity() {
        let s = tensor(
            &make_coherent(C64::new(0.5, 0.2), 12).unwrap(),
            &make_squeezed(0.3, 0.1, 18).unwrap(),
        );
        let out = apply_beam_splitter(100.0, &s).unwrap();
        assert_eq!(out, s);
    }

    #[test]
    fn hong_ou_mandel() {
        let out = apply_beam_splitter(50.0, &fock2(1, 1)).unwrap();
        assert!(out.get(1, 1).norm() < 1e-15);
        assert!(close(out.get(2, 0).norm(), 1.0 / 2f64.sqrt(), 1e-14));
        assert!(close(out.get(0, 2).norm(), 1.0 / 2f64.sqrt(), 1e-14));
    }

    #[test]
    fn single_photon_splits_by_transmissivity() {
        let out = apply_beam_splitter(15.0, &fock2(1, 0)).unwrap();
        assert!(close(out.get(1, 0).norm_sqr(), 0.15, 1e-14));
        assert!(close(out.get(0, 1).norm_sqr(), 0.85, 1e-14));
    }

    #[test]
    fn balanced_splitters_with_phase_flips_cancel() {
        // one-photon sector, basis (|0,1>, |1,0>): U = [[c, s], [-s, c]],
        // P_b(pi) = diag(-1, 1), and (U P)^2 = [[-c, s], [s, c]]^2 = 1.
        let s = fock2(1, 0);
        let mut x = s.clone();
        for _ in 0..2 {
            x = apply_phase(std::f64::consts::PI, Mode::B, &x);
            x = apply_beam_splitter(50.0, &x).unwrap();
        }
        assert!(s.max_abs_diff(&x) < 1e-12);
    }

    #[test]
    fn beam_splitter_inverse_recovers_input() {
        let s = tensor(
            &make_squeezed(0.6, 0.4, Truncation::Auto).unwrap(),
            &make_coherent(C64::new(0.9, -0.4), Truncation::Auto).unwrap(),
        );
        let dim = s.dim_a() + s.dim_b();
        let bs = BeamSplitterSectors::new(25.0, 2 * dim);
        let u = bs.apply_untrimmed(&s);
        // exp(-theta K) = P_b(pi) exp(theta K) P_b(pi)
        let back = apply_phase(std::f64::consts::PI, Mode::B, &u);
        let back = bs.apply_untrimmed(&back);
        let back = apply_phase(std::f64::consts::PI, Mode::B, &back);
        assert!(s.max_abs_diff(&back) < 1e-12);
        let trimmed = apply_beam_splitter(25.0, &s).unwrap();
        assert!(trimmed.max_abs_diff(&u) < 1e-7);
    }

    #[test]
    fn beam_splitter_conserves_sectors() {
        let s = tensor(
            &make_squeezed(0.8, 1.3, Truncation::Auto).unwrap(),
            &make_coherent(C64::new(1.2, 0.6), Truncation::Auto).unwrap(),
        );
        let out = apply_beam_splitter(65.0, &s).unwrap();
        let before = s.total_number_distribution();
        let after = out.total_number_distribution();
        for (n, p) in before.iter().enumerate() {
            let q = after.get(n).copied().unwrap_or(0.0);
            assert!(close(*p, q, 1e-13), "sector {n}");
        }
        assert!(close(out.norm_sqr(), 1.0, 1e-10));
    }

    #[test]
    fn displacement_matches_matrix_exponential() {
        let beta = C64::new(1.3, -0.7);
        let dim = 90;
        let mut gen = DMatrix::<C64>::zeros(dim, dim);
        for n in 0..dim - 1 {
            let v = ((n + 1) as f64).sqrt();
            gen[(n + 1, n)] += beta * v;
            gen[(n, n + 1)] -= beta.conj() * v;
        }
        let oracle = gen.exp();
        let d = displacement_matrix(beta, 40, 12);
        for k in 0..40 {
            for n in 0..12 {
                assert!((d.get(k, n) - oracle[(k, n)]).norm() < 1e-10, "({k},{n})");
            }
        }
    }

    #[test]
    fn displacement_of_vacuum_is_coherent() {
        let beta = C64::new(-0.8, 1.1);
        let s = tensor(&make_fock(0, 4).unwrap(), &make_fock(1, 4).unwrap());
        let out = apply_displacement(beta, Mode::A, &s).unwrap();
        let coh = make_coherent(beta, Truncation::Auto).unwrap();
        for k in 0..coh.dim() {
            assert!((out.get(k, 1) - coh.amp(k)).norm() < 1e-10);
        }
    }

    #[test]
    fn displacement_round_trip() {
        let s = tensor(
            &make_squeezed(0.7, 0.2, Truncation::Auto).unwrap(),
            &make_fock(2, 5).unwrap(),
        );
        let beta = C64::new(2.0, 1.0);
        let there = apply_displacement(beta, Mode::A, &s).unwrap();
        let back = apply_displacement(-beta, Mode::A, &there).unwrap();
        assert!(s.max_abs_diff(&back) < 1e-8);
        assert!(close(there.norm_sqr(), 1.0, 1e-9));
    }

    #[test]
    fn displaced_single_photon_mean() {
        let s = tensor(&make_fock(0, 3).unwrap(), &make_fock(1, 4).unwrap());
        let out = apply_displacement(C64::new(1.0, 0.0), Mode::B, &s).unwrap();
        assert!(close(out.mean_photon().unwrap(), 2.0, 1e-10));
    }

    #[test]
    fn phase_shift_cases() {
        let vac = fock2(0, 0);
        assert_eq!(apply_phase(1.234, Mode::A, &vac), vac);
        let s = tensor(
            &make_coherent(C64::new(1.1, 0.0), Truncation::Auto).unwrap(),
            &make_fock(0, 3).unwrap(),
        );
        let full = apply_phase(std::f64::consts::TAU, Mode::A, &s);
        assert!(s.max_abs_diff(&full) < 1e-12);
        let rotated = apply_phase(0.8, Mode::A, &s);
        let expected = tensor(
            &make_coherent(C64::from_polar(1.1, 0.8), s.dim_a()).unwrap(),
            &make_fock(0, 3).unwrap(),
        );
        assert!(rotated.max_abs_diff(&expected) < 1e-9);
    }

    #[test]
    fn phase_shifts_on_different_modes_commute() {
        let s = tensor(
            &make_coherent(C64::new(0.3, 0.9), Truncation::Auto).unwrap(),
            &make_squeezed(0.5, 0.5, Truncation::Auto).unwrap(),
        );
        let ab = apply_phase(0.3, Mode::B, &apply_phase(1.7, Mode::A, &s));
        let ba = apply_phase(1.7, Mode::A, &apply_phase(0.3, Mode::B, &s));
        assert!(ab.max_abs_diff(&ba) < 1e-14);
        let beta = C64::new(0.4, 0.2);
        let x = apply_displacement(beta, Mode::A, &apply_phase(0.9, Mode::B, &s)).unwrap();
        let y = apply_phase(0.9, Mode::B, &apply_displacement(beta, Mode::A, &s).unwrap());
        assert!(x.max_abs_diff(&y) < 1e-12);
    }

    #[test]
    fn measure_replace_cases() {
        let vac = fock2(0, 0);
        let (out, p) = apply_measure_replace(
            &MeasurementSpec::Number { k: 0 },
            &StateSpec::VACUUM,
            Mode::A,
            &vac,
        )
        .unwrap();
        assert!(close(p, 1.0, 1e-15));
        assert!(close(out.get(0, 0).norm(), 1.0, 1e-15));

        let err = apply_measure_replace(
            &MeasurementSpec::Number { k: 1 },
            &StateSpec::VACUUM,
            Mode::A,
            &vac,
        );
        assert_eq!(err.unwrap_err(), Error::ZeroState);

        let psi = make_squeezed(0.4, 0.0, Truncation::Auto).unwrap();
        let host = tensor(&make_fock(0, 3).unwrap(), &psi);
        let (out, p) = apply_measure_replace(
            &MeasurementSpec::Number { k: 0 },
            &StateSpec::Fock { n: 1 },
            Mode::A,
            &host,
        )
        .unwrap();
        assert!(close(p, 1.0, 1e-12));
        let expected = tensor(&make_fock(1, 3).unwrap(), &psi);
        assert!(out.max_abs_diff(&expected) < 1e-12);
    }

    #[test]
    fn operator_json() {
        let op: OperatorSpec = serde_json::from_str(r#"{"kind":"disp","mag":1.0,"theta":0.5,"mode":"a"}"#).unwrap();
        assert_eq!(op, OperatorSpec::Displacement { mag: 1.0, theta: 0.5, mode: Mode::A });
        let text = serde_json::to_string(&OperatorSpec::BeamSplitter { t: 15.0 }).unwrap();
        assert_eq!(text, r#"{"kind":"bs","t":15.0}"#);
        let text = serde_json::to_string(&OperatorSpec::Identity).unwrap();
        assert_eq!(text, r#"{"kind":"id"}"#);
        assert!(OperatorSpec::BeamSplitter { t: 0.0 }.validate().is_err());
        assert!(OperatorSpec::Displacement { mag: 4.5, theta: 0.0, mode: Mode::B }.validate().is_err());
    }
}
