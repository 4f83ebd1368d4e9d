//! Two-photon input states, classical probe fields and phase masks on the
//! modulator grid.

use std::f64::consts::TAU;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use std::fs;
use std::path::Path;

use crate::error::{dims, invalid, Error, Result};
use crate::formats::{read_cmx, sidecar_path, write_cmx};

/// Upper bound on the number of components in a separable ensemble.
pub const MAX_COMPONENTS: usize = 1 << 16;

/// Rectangular grid of macropixels, centered on the optical axis.
///
/// Mode `n` sits at row `n / cols`, column `n % cols`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModeGrid {
    pub rows: usize,
    pub cols: usize,
    pub pitch: f64,
}

impl ModeGrid {
    pub fn square(n_side: usize, pitch: f64) -> Result<Self> {
        Self::new(n_side, n_side, pitch)
    }

    pub fn new(rows: usize, cols: usize, pitch: f64) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(invalid("grid must hold at least one mode"));
        }
        if !(pitch > 0.0 && pitch.is_finite()) {
            return Err(invalid(format!("pitch must be positive, got {pitch}")));
        }
        Ok(Self { rows, cols, pitch })
    }

    pub fn n_modes(&self) -> usize {
        self.rows * self.cols
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        i * self.cols + j
    }

    pub fn coords(&self, n: usize) -> (usize, usize) {
        (n / self.cols, n % self.cols)
    }

    /// Physical position of mode `n` in meters.
    pub fn position(&self, n: usize) -> (f64, f64) {
        let (i, j) = self.coords(n);
        (
            self.pitch * (i as f64 - (self.rows as f64 - 1.0) / 2.0),
            self.pitch * (j as f64 - (self.cols as f64 - 1.0) / 2.0),
        )
    }

    fn check_same(&self, other: &ModeGrid) -> Result<()> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(dims(format!(
                "grid {}x{} vs {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianStateParams {
    /// Position correlation width, meters.
    pub sigma_r: f64,
    /// Momentum correlation width, 1/m.
    pub sigma_k: f64,
}

impl GaussianStateParams {
    pub fn new(sigma_r: f64, sigma_k: f64) -> Result<Self> {
        let p = Self { sigma_r, sigma_k };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_r > 0.0 && self.sigma_r.is_finite()) {
            return Err(invalid(format!("sigma_r must be positive, got {}", self.sigma_r)));
        }
        if !(self.sigma_k > 0.0 && self.sigma_k.is_finite()) {
            return Err(invalid(format!("sigma_k must be positive, got {}", self.sigma_k)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct TwoPhotonState {
    pub grid: ModeGrid,
    pub psi: DMatrix<Complex64>,
    pub label: String,
}

impl TwoPhotonState {
    /// Wrap an arbitrary amplitude matrix, normalizing it.
    pub fn from_matrix(grid: ModeGrid, psi: DMatrix<Complex64>, label: &str) -> Result<Self> {
        let n = grid.n_modes();
        if psi.nrows() != n || psi.ncols() != n {
            return Err(dims(format!("psi is {}x{}, grid has {n} modes", psi.nrows(), psi.ncols())));
        }
        let norm = psi.norm();
        if !(norm > 0.0 && norm.is_finite()) {
            return Err(invalid("psi must have finite nonzero norm"));
        }
        Ok(Self { grid, psi: psi / Complex64::new(norm, 0.0), label: label.to_string() })
    }
}

#[derive(Clone, Debug)]
pub struct SeparableComponent {
    pub weight: f64,
    pub phi: DVector<Complex64>,
    pub chi: DVector<Complex64>,
}

/// Mixture of product states `sum_j p_j |phi_j chi_j><phi_j chi_j|`.
#[derive(Clone, Debug)]
pub struct SeparableEnsemble {
    pub grid: ModeGrid,
    pub components: Vec<SeparableComponent>,
}

#[derive(Clone, Debug)]
pub struct ClassicalField {
    pub grid: ModeGrid,
    pub amplitudes: DVector<Complex64>,
}

impl ClassicalField {
    pub fn new(grid: ModeGrid, amplitudes: DVector<Complex64>) -> Result<Self> {
        if amplitudes.len() != grid.n_modes() {
            return Err(dims("field length differs from grid size"));
        }
        Ok(Self { grid, amplitudes: unit(amplitudes)? })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PhaseMask {
    pub grid: ModeGrid,
    pub theta: Vec<f64>,
}

pub fn wrap_phase(x: f64) -> f64 {
    let w = x.rem_euclid(TAU);
    if w >= TAU {
        0.0
    } else {
        w
    }
}

impl PhaseMask {
    pub fn flat(grid: ModeGrid) -> Self {
        Self { grid, theta: vec![0.0; grid.n_modes()] }
    }

    pub fn new(grid: ModeGrid, theta: Vec<f64>) -> Result<Self> {
        if theta.len() != grid.n_modes() {
            return Err(dims("mask length differs from grid size"));
        }
        if theta.iter().any(|t| !t.is_finite()) {
            return Err(invalid("mask phases must be finite"));
        }
        Ok(Self { grid, theta: theta.into_iter().map(wrap_phase).collect() })
    }

    pub fn phasors(&self) -> Vec<Complex64> {
        self.theta.iter().map(|&t| Complex64::from_polar(1.0, t)).collect()
    }

    /// Add `delta` to every mode flagged in `active`.
    pub fn shifted(&self, active: &[bool], delta: f64) -> Self {
        let theta = self
            .theta
            .iter()
            .zip(active)
            .map(|(&t, &a)| if a { wrap_phase(t + delta) } else { t })
            .collect();
        Self { grid: self.grid, theta }
    }
}

fn unit(v: DVector<Complex64>) -> Result<DVector<Complex64>> {
    let norm = v.norm();
    if !(norm > 0.0 && norm.is_finite()) {
        return Err(invalid("vector must have finite nonzero norm"));
    }
    Ok(v / Complex64::new(norm, 0.0))
}

/// Double-Gaussian biphoton amplitude sampled at macropixel centers.
pub fn build_double_gaussian(grid: &ModeGrid, params: &GaussianStateParams) -> Result<TwoPhotonState> {
    params.validate()?;
    let n = grid.n_modes();
    let pos: Vec<(f64, f64)> = (0..n).map(|m| grid.position(m)).collect();
    let sr2 = params.sigma_r * params.sigma_r;
    let sk2 = params.sigma_k * params.sigma_k;
    let psi = DMatrix::from_fn(n, n, |m, k| {
        let (xm, ym) = pos[m];
        let (xk, yk) = pos[k];
        let d2 = (xm - xk).powi(2) + (ym - yk).powi(2);
        let s2 = (xm + xk).powi(2) + (ym + yk).powi(2);
        Complex64::new((-d2 / (4.0 * sr2) - s2 * sk2 / 4.0).exp(), 0.0)
    });
    TwoPhotonState::from_matrix(*grid, psi, "double-gaussian")
}

/// Schmidt number of the double-Gaussian model.
pub fn schmidt_number(params: &GaussianStateParams) -> Result<f64> {
    params.validate()?;
    let x = params.sigma_r * params.sigma_k;
    Ok(0.25 * (x + 1.0 / x).powi(2))
}

/// Gaussian classical beam with the single-photon profile of the pure
/// separable state.
pub fn gaussian_field(grid: &ModeGrid, sigma_k: f64) -> Result<ClassicalField> {
    if !(sigma_k > 0.0 && sigma_k.is_finite()) {
        return Err(invalid("sigma_k must be positive"));
    }
    let v = DVector::from_fn(grid.n_modes(), |m, _| {
        let (x, y) = grid.position(m);
        Complex64::new((-(x * x + y * y) * sigma_k * sigma_k / 8.0).exp(), 0.0)
    });
    ClassicalField::new(*grid, v)
}

pub fn build_pure_separable(grid: &ModeGrid, sigma_k: f64) -> Result<SeparableEnsemble> {
    let field = gaussian_field(grid, sigma_k)?.amplitudes;
    Ok(SeparableEnsemble {
        grid: *grid,
        components: vec![SeparableComponent { weight: 1.0, phi: field.clone(), chi: field }],
    })
}

/// Transverse frequencies of the mixed-state grid: `n_q` uniform samples of
/// [-pi/pitch, pi/pitch), containing zero.
pub fn mixed_frequencies(pitch: f64, n_q: usize) -> Vec<f64> {
    let step = TAU / (n_q as f64 * pitch);
    (0..n_q).map(|j| (j as f64 - (n_q / 2) as f64) * step).collect()
}

/// Mixture of tilted product states reproducing the entangled correlations
/// in the far field. The signal photon carries the opposite tilt of the idler
/// so that the pair lands on anti-correlated output positions.
pub fn build_mixed_separable(
    grid: &ModeGrid,
    params: &GaussianStateParams,
    n_q: usize,
) -> Result<SeparableEnsemble> {
    params.validate()?;
    if n_q == 0 {
        return Err(invalid("n_q must be positive"));
    }
    if n_q.saturating_mul(n_q) > MAX_COMPONENTS {
        return Err(invalid(format!("n_q^2 = {} exceeds the component cap {MAX_COMPONENTS}", n_q * n_q)));
    }
    let x2 = (params.sigma_r * params.sigma_k).powi(2);
    let sk2 = params.sigma_k * params.sigma_k;
    let qs = mixed_frequencies(grid.pitch, n_q);
    let n = grid.n_modes();
    let weight = 1.0 / (n_q * n_q) as f64;
    let mut components = Vec::with_capacity(n_q * n_q);
    for &qx in &qs {
        for &qy in &qs {
            let phi = DVector::from_fn(n, |m, _| {
                let (x, y) = grid.position(m);
                let env = (-(x * x + y * y) * sk2 / (4.0 * (1.0 + x2))).exp();
                Complex64::from_polar(env, qx * x + qy * y)
            });
            let chi = DVector::from_fn(n, |m, _| {
                let (x, y) = grid.position(m);
                Complex64::from_polar(1.0, -(qx * x + qy * y))
            });
            components.push(SeparableComponent { weight, phi: unit(phi)?, chi: unit(chi)? });
        }
    }
    Ok(SeparableEnsemble { grid: *grid, components })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Topology {
    Chain1d,
    Grid2d,
}

/// Unnormalized near-diagonal amplitude: identity plus `alpha` on the
/// nearest-neighbor couplings of the chosen topology.
pub fn near_diagonal_matrix(grid: &ModeGrid, alpha: f64, topology: Topology) -> DMatrix<Complex64> {
    let n = grid.n_modes();
    let mut psi = DMatrix::<Complex64>::identity(n, n);
    let a = Complex64::new(alpha, 0.0);
    match topology {
        Topology::Chain1d => {
            for m in 0..n.saturating_sub(1) {
                psi[(m, m + 1)] = a;
                psi[(m + 1, m)] = a;
            }
        }
        Topology::Grid2d => {
            for i in 0..grid.rows {
                for j in 0..grid.cols {
                    let m = grid.index(i, j);
                    if i + 1 < grid.rows {
                        let k = grid.index(i + 1, j);
                        psi[(m, k)] = a;
                        psi[(k, m)] = a;
                    }
                    if j + 1 < grid.cols {
                        let k = grid.index(i, j + 1);
                        psi[(m, k)] = a;
                        psi[(k, m)] = a;
                    }
                }
            }
        }
    }
    psi
}

pub fn near_diagonal_state(grid: &ModeGrid, alpha: f64, topology: Topology) -> Result<TwoPhotonState> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(invalid(format!("alpha must lie in [0, 1], got {alpha}")));
    }
    TwoPhotonState::from_matrix(*grid, near_diagonal_matrix(grid, alpha, topology), "near-diagonal")
}

/// Imprint the mask on both photons: `psi'_mn = psi_mn e^{i theta_m} e^{i theta_n}`.
pub fn apply_mask(state: &TwoPhotonState, mask: &PhaseMask) -> Result<TwoPhotonState> {
    state.grid.check_same(&mask.grid)?;
    let e = mask.phasors();
    let psi = DMatrix::from_fn(state.psi.nrows(), state.psi.ncols(), |m, n| state.psi[(m, n)] * e[m] * e[n]);
    Ok(TwoPhotonState { grid: state.grid, psi, label: state.label.clone() })
}

pub(crate) fn check_grid(a: &ModeGrid, b: &ModeGrid) -> Result<()> {
    a.check_same(b)
}

/// JSON written next to a saved state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateSidecar {
    /// `two-photon` or `separable`.
    pub kind: String,
    pub grid: ModeGrid,
    pub params: Option<GaussianStateParams>,
    pub label: String,
    /// Component weights of a separable ensemble.
    #[serde(default)]
    pub weights: Vec<f64>,
}

fn write_state_sidecar(path: &Path, side: &StateSidecar) -> Result<()> {
    fs::write(sidecar_path(path), serde_json::to_vec_pretty(side)?)?;
    Ok(())
}

fn read_state_sidecar(path: &Path, kind: &str) -> Result<StateSidecar> {
    let side: StateSidecar = serde_json::from_slice(&fs::read(sidecar_path(path))?)?;
    if side.kind != kind {
        return Err(Error::Format(format!("expected a {kind} state, found {}", side.kind)));
    }
    ModeGrid::new(side.grid.rows, side.grid.cols, side.grid.pitch)?;
    Ok(side)
}

/// `psi` as an N x N CMX1 matrix plus sidecar.
pub fn save_state(state: &TwoPhotonState, params: Option<&GaussianStateParams>, path: &Path) -> Result<()> {
    write_cmx(path, &state.psi)?;
    write_state_sidecar(
        path,
        &StateSidecar {
            kind: "two-photon".into(),
            grid: state.grid,
            params: params.copied(),
            label: state.label.clone(),
            weights: Vec::new(),
        },
    )
}

pub fn load_state(path: &Path) -> Result<TwoPhotonState> {
    let side = read_state_sidecar(path, "two-photon")?;
    let psi = read_cmx(path)?;
    TwoPhotonState::from_matrix(side.grid, psi, &side.label).map_err(|e| Error::Format(e.to_string()))
}

/// Rows `2j` and `2j + 1` hold `phi_j` and `chi_j`; weights go to the sidecar.
pub fn save_ensemble(
    ens: &SeparableEnsemble,
    params: Option<&GaussianStateParams>,
    label: &str,
    path: &Path,
) -> Result<()> {
    let n = ens.grid.n_modes();
    let m = DMatrix::from_fn(2 * ens.components.len(), n, |r, c| {
        let comp = &ens.components[r / 2];
        if r % 2 == 0 { comp.phi[c] } else { comp.chi[c] }
    });
    write_cmx(path, &m)?;
    write_state_sidecar(
        path,
        &StateSidecar {
            kind: "separable".into(),
            grid: ens.grid,
            params: params.copied(),
            label: label.into(),
            weights: ens.components.iter().map(|c| c.weight).collect(),
        },
    )
}

pub fn load_ensemble(path: &Path) -> Result<SeparableEnsemble> {
    let side = read_state_sidecar(path, "separable")?;
    let m = read_cmx(path)?;
    if m.nrows() != 2 * side.weights.len() || m.ncols() != side.grid.n_modes() {
        return Err(Error::Format("ensemble matrix does not match its sidecar".into()));
    }
    let components = side
        .weights
        .iter()
        .enumerate()
        .map(|(j, &weight)| SeparableComponent {
            weight,
            phi: m.row(2 * j).transpose(),
            chi: m.row(2 * j + 1).transpose(),
        })
        .collect();
    Ok(SeparableEnsemble { grid: side.grid, components })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2 as HALF_PI, PI};

    fn grid8() -> ModeGrid {
        ModeGrid::square(8, 296e-6).unwrap()
    }

    #[test]
    fn saved_states_reload() {
        let dir = tempfile::tempdir().unwrap();
        let g = ModeGrid::square(3, 296e-6).unwrap();
        let params = GaussianStateParams::new(2.9e-5, 8.0e2).unwrap();
        let s = build_double_gaussian(&g, &params).unwrap();
        let p = dir.path().join("psi.cmx");
        save_state(&s, Some(&params), &p).unwrap();
        let back = load_state(&p).unwrap();
        assert_eq!(back.psi, s.psi);
        assert_eq!(back.label, s.label);
        assert!(load_ensemble(&p).is_err());

        let ens = build_mixed_separable(&g, &params, 2).unwrap();
        let q = dir.path().join("mixed.cmx");
        save_ensemble(&ens, Some(&params), "mixed", &q).unwrap();
        let back = load_ensemble(&q).unwrap();
        assert_eq!(back.components.len(), 4);
        for (a, b) in back.components.iter().zip(&ens.components) {
            assert_eq!((a.weight, &a.phi, &a.chi), (b.weight, &b.phi, &b.chi));
        }
    }

    #[test]
    fn single_mode_state_is_unity() {
        let g = ModeGrid::square(1, 1e-4).unwrap();
        let s = build_double_gaussian(&g, &GaussianStateParams::new(1e-5, 10.0).unwrap()).unwrap();
        assert!((s.psi[(0, 0)] - Complex64::new(1.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn double_gaussian_is_symmetric_and_normalized() {
        let s = build_double_gaussian(&grid8(), &GaussianStateParams::new(2e-4, 8e2).unwrap()).unwrap();
        assert!((s.psi.norm() - 1.0).abs() < 1e-12);
        let asym = (&s.psi - s.psi.transpose()).camax();
        assert!(asym < 1e-12);
    }

    #[test]
    fn double_gaussian_wide_limit_is_uniform() {
        let g = ModeGrid::square(4, 296e-6).unwrap();
        let s = build_double_gaussian(&g, &GaussianStateParams::new(1e3, 1e-3).unwrap()).unwrap();
        for v in s.psi.iter() {
            assert!((v.re - 1.0 / 16.0).abs() < 1e-12 && v.im == 0.0);
        }
    }

    #[test]
    fn entangled_state_is_diagonal_dominated() {
        let s = build_double_gaussian(&grid8(), &GaussianStateParams::new(2.9e-5, 8e2).unwrap()).unwrap();
        let n = s.psi.nrows();
        let diag: f64 = (0..n).map(|m| s.psi[(m, m)].norm()).sum::<f64>() / n as f64;
        let off: f64 = (0..n - 1).map(|m| s.psi[(m, m + 1)].norm()).sum::<f64>() / (n - 1) as f64;
        // Point sampling with pitch/sigma_r ~ 10 leaves neighbor amplitudes of
        // order exp(-pitch^2 / (4 sigma_r^2)).
        assert!(off / diag < 1e-10);
        assert!(off / diag > 0.0);
    }

    #[test]
    fn schmidt_examples() {
        let k = |r, s| schmidt_number(&GaussianStateParams::new(r, s).unwrap()).unwrap();
        assert!((k(1e-3, 1e3) - 1.0).abs() < 1e-12);
        assert!((k(2.9e-5, 8.0e2) - 465.0).abs() < 1.0);
        assert!((k(2e-3, 1e3) - 1.5625).abs() < 1e-12);
    }

    #[test]
    fn pure_separable_examples() {
        let g = ModeGrid::square(1, 1e-4).unwrap();
        let e = build_pure_separable(&g, 8e2).unwrap();
        assert!((e.components[0].phi[0] - Complex64::new(1.0, 0.0)).norm() < 1e-15);
        let e = build_pure_separable(&grid8(), 8e2).unwrap();
        assert_eq!(e.components.len(), 1);
        let c = &e.components[0];
        assert_eq!(c.phi, c.chi);
        assert!(c.phi.iter().all(|v| v.re > 0.0 && v.im == 0.0));
    }

    #[test]
    fn mixed_single_component_is_untilted() {
        let e = build_mixed_separable(&grid8(), &GaussianStateParams::new(2.9e-5, 8e2).unwrap(), 1).unwrap();
        assert_eq!(e.components.len(), 1);
        let c = &e.components[0];
        assert!(c.phi.iter().all(|v| v.im.abs() < 1e-15 && v.re > 0.0));
        let first = c.chi[0];
        assert!(c.chi.iter().all(|v| (v - first).norm() < 1e-15));
    }

    #[test]
    fn mixed_weights_are_equal_and_sum_to_one() {
        let e = build_mixed_separable(&grid8(), &GaussianStateParams::new(2.9e-5, 8e2).unwrap(), 5).unwrap();
        assert_eq!(e.components.len(), 25);
        let total: f64 = e.components.iter().map(|c| c.weight).sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert!(e.components.iter().all(|c| c.weight == e.components[0].weight));
    }

    #[test]
    fn mixed_frequency_grid_spans_the_band() {
        let q = mixed_frequencies(1.0, 8);
        assert!((q[0] + PI).abs() < 1e-12);
        assert!(q.contains(&0.0));
        assert!(q[7] < PI);
    }

    #[test]
    fn mixed_rejects_component_overflow() {
        let p = GaussianStateParams::new(2.9e-5, 8e2).unwrap();
        assert!(build_mixed_separable(&grid8(), &p, 300).is_err());
    }

    #[test]
    fn near_diagonal_examples() {
        let g = ModeGrid::new(1, 3, 1e-4).unwrap();
        let raw = near_diagonal_matrix(&g, 0.1, Topology::Chain1d);
        let expect = [[1.0, 0.1, 0.0], [0.1, 1.0, 0.1], [0.0, 0.1, 1.0]];
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(raw[(i, j)].re, expect[i][j]);
            }
        }
        let s = near_diagonal_state(&ModeGrid::square(3, 1e-4).unwrap(), 0.0, Topology::Grid2d).unwrap();
        assert!((s.psi[(4, 4)].re - 1.0 / 3.0).abs() < 1e-15);
        let g3 = ModeGrid::square(3, 1e-4).unwrap();
        let raw = near_diagonal_matrix(&g3, 0.1, Topology::Grid2d);
        let center = g3.index(1, 1);
        let couplings = (0..9).filter(|&m| m != center && raw[(center, m)].re != 0.0).count();
        assert_eq!(couplings, 4);
        // diagonal neighbors stay uncoupled
        assert_eq!(raw[(center, g3.index(0, 0))].re, 0.0);
    }

    #[test]
    fn near_diagonal_rejects_alpha_out_of_range() {
        assert!(near_diagonal_state(&grid8(), 1.5, Topology::Chain1d).is_err());
    }

    #[test]
    fn mask_examples() {
        let g = ModeGrid::new(1, 2, 1e-4).unwrap();
        let psi = DMatrix::from_row_slice(2, 2, &[
            Complex64::new(0.5, 0.0), Complex64::new(0.5, 0.1),
            Complex64::new(0.5, 0.1), Complex64::new(0.4, 0.0),
        ]);
        let s = TwoPhotonState::from_matrix(g, psi, "t").unwrap();
        let same = apply_mask(&s, &PhaseMask::flat(g)).unwrap();
        assert!((&same.psi - &s.psi).camax() < 1e-15);
        let all = apply_mask(&s, &PhaseMask::new(g, vec![HALF_PI; 2]).unwrap()).unwrap();
        assert!((&all.psi + &s.psi).camax() < 1e-15);
        let m = apply_mask(&s, &PhaseMask::new(g, vec![HALF_PI, 0.0]).unwrap()).unwrap();
        let i = Complex64::new(0.0, 1.0);
        assert!((m.psi[(0, 0)] + s.psi[(0, 0)]).norm() < 1e-15);
        assert!((m.psi[(0, 1)] - i * s.psi[(0, 1)]).norm() < 1e-15);
        assert!((m.psi[(1, 1)] - s.psi[(1, 1)]).norm() < 1e-15);
    }

    #[test]
    fn mask_grid_mismatch_is_an_error() {
        let s = build_double_gaussian(&grid8(), &GaussianStateParams::new(1e-4, 8e2).unwrap()).unwrap();
        let other = PhaseMask::flat(ModeGrid::square(4, 1e-4).unwrap());
        assert!(apply_mask(&s, &other).is_err());
    }

    #[test]
    fn invalid_params_rejected() {
        assert!(GaussianStateParams::new(-1.0, 1.0).is_err());
        assert!(ModeGrid::square(4, -1.0).is_err());
        assert!(ModeGrid::square(0, 1.0).is_err());
    }
}
