//! Scattering media: generation, simulated holographic measurement and
//! persistence.

use std::f64::consts::TAU;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{dims, invalid, Error, Result};
use crate::formats::{read_cmx, read_sidecar, write_cmx, write_sidecar, MatrixSidecar};
use crate::rng::{stream, PRNG_ID};
use crate::state::ModeGrid;

/// Largest matrix (in complex entries) the generator will build.
pub const MAX_ENTRIES: usize = 1 << 26;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MediumKind {
    IidComplex,
    PhaseScreenFourier,
    Dft,
    File,
}

impl MediumKind {
    pub fn name(&self) -> &'static str {
        match self {
            MediumKind::IidComplex => "iid-complex",
            MediumKind::PhaseScreenFourier => "phase-screen-fourier",
            MediumKind::Dft => "dft",
            MediumKind::File => "file",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MediumSpec {
    pub kind: MediumKind,
    #[serde(default)]
    pub seed: u64,
    /// Number of phase-screen + Fourier stages.
    #[serde(default = "one")]
    pub thickness_proxy: usize,
    /// Screen pixels per macropixel side.
    #[serde(default = "default_oversample")]
    pub screen_oversample: usize,
    /// Source matrix for `kind = file`.
    #[serde(default)]
    pub path: Option<PathBuf>,
}

fn one() -> usize {
    1
}

fn default_oversample() -> usize {
    4
}

impl MediumSpec {
    pub fn new(kind: MediumKind, seed: u64) -> Self {
        Self { kind, seed, thickness_proxy: 1, screen_oversample: default_oversample(), path: None }
    }

    pub fn validate(&self) -> Result<()> {
        if self.thickness_proxy == 0 {
            return Err(invalid("thickness_proxy must be at least 1"));
        }
        if self.screen_oversample == 0 {
            return Err(invalid("screen_oversample must be at least 1"));
        }
        if self.kind == MediumKind::File && self.path.is_none() {
            return Err(invalid("file medium needs a path"));
        }
        Ok(())
    }
}

/// Conversion between output frequency and camera-plane position.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scale {
    pub lambda: f64,
    pub focal: f64,
}

impl Default for Scale {
    fn default() -> Self {
        Self { lambda: 810e-9, focal: 0.1 }
    }
}

#[derive(Clone, Debug)]
pub struct ScatteringMatrix {
    /// `t[(k, n)]`: output pixel `k` (row-major over `out_shape`), input mode `n`.
    pub t: DMatrix<Complex64>,
    pub out_shape: (usize, usize),
    pub in_grid: ModeGrid,
    pub scale: Option<Scale>,
    pub kind: MediumKind,
    pub seed: u64,
}

impl ScatteringMatrix {
    pub fn new(t: DMatrix<Complex64>, out_shape: (usize, usize), in_grid: ModeGrid) -> Result<Self> {
        if t.nrows() != out_shape.0 * out_shape.1 || t.ncols() != in_grid.n_modes() {
            return Err(dims(format!(
                "matrix is {}x{}, expected {}x{}",
                t.nrows(),
                t.ncols(),
                out_shape.0 * out_shape.1,
                in_grid.n_modes()
            )));
        }
        if t.iter().any(|v| !v.is_finite()) {
            return Err(invalid("matrix entries must be finite"));
        }
        Ok(Self { t, out_shape, in_grid, scale: None, kind: MediumKind::File, seed: 0 })
    }

    pub fn n_out(&self) -> usize {
        self.t.nrows()
    }

    pub fn n_in(&self) -> usize {
        self.t.ncols()
    }

    /// Camera-plane distance between adjacent output pixels, when the
    /// physical scale is known.
    pub fn output_pixel_size(&self) -> Option<f64> {
        let s = self.scale?;
        let dk = TAU / (self.out_shape.0 as f64 * self.in_grid.pitch);
        Some(s.lambda * s.focal * dk / TAU)
    }
}

/// Centered output frequencies: `(u - n/2) * 2 pi / (n * pitch)`.
pub fn output_frequencies(n_out: usize, pitch: f64) -> Vec<f64> {
    let dk = TAU / (n_out as f64 * pitch);
    (0..n_out).map(|u| (u as f64 - (n_out / 2) as f64) * dk).collect()
}

/// `exp(-i k x)` for every (frequency, position) pair.
fn fourier_kernel(freqs: &[f64], positions: &[f64]) -> DMatrix<Complex64> {
    DMatrix::from_fn(freqs.len(), positions.len(), |u, a| Complex64::from_polar(1.0, -freqs[u] * positions[a]))
}

fn centered_positions(n: usize, pitch: f64) -> Vec<f64> {
    (0..n).map(|i| pitch * (i as f64 - (n as f64 - 1.0) / 2.0)).collect()
}

pub fn make_medium(spec: &MediumSpec, out_shape: (usize, usize), grid: &ModeGrid) -> Result<ScatteringMatrix> {
    spec.validate()?;
    let (h, w) = out_shape;
    if h == 0 || w == 0 {
        return Err(invalid("output shape must be positive"));
    }
    let m = h.checked_mul(w).ok_or_else(|| invalid("output shape overflows"))?;
    let n = grid.n_modes();
    if m.saturating_mul(n) > MAX_ENTRIES {
        return Err(invalid(format!("{m}x{n} matrix exceeds the cap of {MAX_ENTRIES} entries")));
    }
    let t = match spec.kind {
        MediumKind::IidComplex => iid_complex(spec.seed, m, n),
        MediumKind::Dft => dft_matrix(out_shape, grid),
        MediumKind::PhaseScreenFourier => phase_screen_fourier(spec, out_shape, grid)?,
        MediumKind::File => {
            let path = spec.path.as_ref().expect("validated");
            let loaded = load_matrix(path)?;
            if loaded.out_shape != out_shape || loaded.n_in() != n {
                return Err(dims("stored matrix does not match requested dimensions"));
            }
            loaded.t
        }
    };
    Ok(ScatteringMatrix {
        t,
        out_shape,
        in_grid: *grid,
        scale: Some(Scale::default()),
        kind: spec.kind,
        seed: spec.seed,
    })
}

fn iid_complex(seed: u64, m: usize, n: usize) -> DMatrix<Complex64> {
    let mut rng = stream(seed, "medium");
    let mut data = Vec::with_capacity(m * n);
    for _ in 0..m * n {
        let amp: f64 = rng.random();
        let phase: f64 = rng.random::<f64>() * TAU;
        data.push(Complex64::from_polar(amp, phase));
    }
    DMatrix::from_row_slice(m, n, &data)
}

/// Far-field propagation sampled on the output frequency grid, normalized so
/// that `T^H T = I` whenever the output grid is at least as large as the
/// input grid.
pub fn dft_matrix(out_shape: (usize, usize), grid: &ModeGrid) -> DMatrix<Complex64> {
    let (h, w) = out_shape;
    let kx = output_frequencies(h, grid.pitch);
    let ky = output_frequencies(w, grid.pitch);
    let norm = 1.0 / ((h * w) as f64).sqrt();
    DMatrix::from_fn(h * w, grid.n_modes(), |k, n| {
        let (x, y) = grid.position(n);
        Complex64::from_polar(norm, -(kx[k / w] * x + ky[k % w] * y))
    })
}

/// Random phase screens, finer than the macropixels, separated by unitary
/// Fourier transforms; the last stage is imaged onto the output grid.
fn phase_screen_fourier(spec: &MediumSpec, out_shape: (usize, usize), grid: &ModeGrid) -> Result<DMatrix<Complex64>> {
    let s = spec.screen_oversample;
    let (fr, fc) = (grid.rows * s, grid.cols * s);
    if fr.saturating_mul(fc).saturating_mul(spec.thickness_proxy) > MAX_ENTRIES {
        return Err(invalid("phase screens exceed the size cap"));
    }
    let fine_pitch = grid.pitch / s as f64;
    let xr = centered_positions(fr, fine_pitch);
    let xc = centered_positions(fc, fine_pitch);
    let mut rng = stream(spec.seed, "medium");
    let screens: Vec<Vec<Complex64>> = (0..spec.thickness_proxy)
        .map(|_| (0..fr * fc).map(|_| Complex64::from_polar(1.0, rng.random::<f64>() * TAU)).collect())
        .collect();
    let unit_r = fourier_kernel(&output_frequencies(fr, fine_pitch), &xr) / Complex64::new((fr as f64).sqrt(), 0.0);
    let unit_c = fourier_kernel(&output_frequencies(fc, fine_pitch), &xc) / Complex64::new((fc as f64).sqrt(), 0.0);
    let out_r = fourier_kernel(&output_frequencies(out_shape.0, grid.pitch), &xr);
    let out_c = fourier_kernel(&output_frequencies(out_shape.1, grid.pitch), &xc);
    let (h, w) = out_shape;
    let mut t = DMatrix::<Complex64>::zeros(h * w, grid.n_modes());
    for mode in 0..grid.n_modes() {
        let (i, j) = grid.coords(mode);
        let mut field = DMatrix::<Complex64>::zeros(fr, fc);
        for a in i * s..(i + 1) * s {
            for b in j * s..(j + 1) * s {
                field[(a, b)] = screens[0][a * fc + b];
            }
        }
        for screen in &screens[1..] {
            field = &unit_r * field * unit_c.transpose();
            for a in 0..fr {
                for b in 0..fc {
                    field[(a, b)] *= screen[a * fc + b];
                }
            }
        }
        let out = &out_r * field * out_c.transpose();
        for u in 0..h {
            for v in 0..w {
                t[(u * w + v, mode)] = out[(u, v)];
            }
        }
    }
    let fro = t.norm();
    if fro == 0.0 {
        return Err(Error::Degenerate("medium carries no light to the output grid".into()));
    }
    let scale = (grid.n_modes() as f64).sqrt() / fro;
    Ok(t * Complex64::new(scale, 0.0))
}

/// Simulated phase-stepping holography against input mode 0.
///
/// Each row of the estimate carries the unknown phase of that row's
/// reference coefficient.
pub fn measure_tm(medium: &ScatteringMatrix, n_phase_steps: usize) -> Result<ScatteringMatrix> {
    if n_phase_steps < 3 {
        return Err(invalid("at least three phase steps are required"));
    }
    let (m, n) = (medium.n_out(), medium.n_in());
    let steps: Vec<Complex64> =
        (0..n_phase_steps).map(|p| Complex64::from_polar(1.0, TAU * p as f64 / n_phase_steps as f64)).collect();
    let mut est = DMatrix::<Complex64>::zeros(m, n);
    for k in 0..m {
        let reference = medium.t[(k, 0)];
        let ref_intensity = reference.norm_sqr();
        let ref_amp = ref_intensity.sqrt();
        est[(k, 0)] = Complex64::new(ref_amp, 0.0);
        if ref_amp == 0.0 {
            continue;
        }
        for col in 1..n {
            let probe = medium.t[(k, col)];
            let mut acc = Complex64::new(0.0, 0.0);
            for step in &steps {
                let intensity = (reference + step * probe).norm_sqr();
                acc += step.conj() * intensity;
            }
            est[(k, col)] = acc / (n_phase_steps as f64 * ref_amp);
        }
    }
    Ok(ScatteringMatrix { t: est, ..medium.clone() })
}

pub fn save_matrix(m: &ScatteringMatrix, path: &Path) -> Result<()> {
    write_cmx(path, &m.t)?;
    let scale = m.scale.unwrap_or_default();
    write_sidecar(
        path,
        &MatrixSidecar {
            kind: m.kind.name().to_string(),
            seed: m.seed,
            out_shape: [m.out_shape.0, m.out_shape.1],
            in_grid: m.in_grid,
            lambda: scale.lambda,
            focal: scale.focal,
            prng: PRNG_ID.to_string(),
        },
    )
}

pub fn load_matrix(path: &Path) -> Result<ScatteringMatrix> {
    let t = read_cmx(path)?;
    let side = read_sidecar(path)?;
    let grid = ModeGrid::new(side.in_grid.rows, side.in_grid.cols, side.in_grid.pitch)?;
    let out_shape = (side.out_shape[0], side.out_shape[1]);
    let mut m = ScatteringMatrix::new(t, out_shape, grid)
        .map_err(|e| Error::Format(format!("dimension mismatch with sidecar: {e}")))?;
    m.scale = Some(Scale { lambda: side.lambda, focal: side.focal });
    m.kind = match side.kind.as_str() {
        "iid-complex" => MediumKind::IidComplex,
        "phase-screen-fourier" => MediumKind::PhaseScreenFourier,
        "dft" => MediumKind::Dft,
        _ => MediumKind::File,
    };
    m.seed = side.seed;
    Ok(m)
}

/// Mean over columns of `(sum |t|^2)^2 / sum |t|^4`.
pub fn column_participation_ratio(t: &DMatrix<Complex64>) -> f64 {
    let mut total = 0.0;
    for col in t.column_iter() {
        let s2: f64 = col.iter().map(|v| v.norm_sqr()).sum();
        let s4: f64 = col.iter().map(|v| v.norm_sqr().powi(2)).sum();
        total += s2 * s2 / s4;
    }
    total / t.ncols() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gram_deviation(t: &DMatrix<Complex64>) -> f64 {
        let g = t.adjoint() * t;
        (g - DMatrix::<Complex64>::identity(t.ncols(), t.ncols())).camax()
    }

    #[test]
    fn dft_square_is_unitary() {
        let grid = ModeGrid::square(2, 1e-4).unwrap();
        let m = make_medium(&MediumSpec::new(MediumKind::Dft, 0), (2, 2), &grid).unwrap();
        assert!(gram_deviation(&m.t) < 1e-12);
    }

    #[test]
    fn dft_oversampled_output_is_isometric() {
        let grid = ModeGrid::square(4, 296e-6).unwrap();
        let m = make_medium(&MediumSpec::new(MediumKind::Dft, 0), (9, 8), &grid).unwrap();
        assert!(gram_deviation(&m.t) < 1e-12);
    }

    #[test]
    fn iid_entries_follow_declared_ranges() {
        let grid = ModeGrid::square(4, 1e-4).unwrap();
        let m = make_medium(&MediumSpec::new(MediumKind::IidComplex, 3), (5, 5), &grid).unwrap();
        assert!(m.t.iter().all(|v| v.norm() < 1.0));
        let again = make_medium(&MediumSpec::new(MediumKind::IidComplex, 3), (5, 5), &grid).unwrap();
        assert_eq!(m.t, again.t);
        let other = make_medium(&MediumSpec::new(MediumKind::IidComplex, 4), (5, 5), &grid).unwrap();
        assert_ne!(m.t, other.t);
    }

    #[test]
    fn thin_unoversampled_screen_is_a_phase_times_dft() {
        let grid = ModeGrid::square(3, 1e-4).unwrap();
        let mut spec = MediumSpec::new(MediumKind::PhaseScreenFourier, 9);
        spec.screen_oversample = 1;
        let m = make_medium(&spec, (3, 3), &grid).unwrap();
        let f = dft_matrix((3, 3), &grid);
        assert!(gram_deviation(&m.t) < 1e-12);
        for n in 0..9 {
            let ratio = m.t[(0, n)] / f[(0, n)];
            for k in 0..9 {
                assert!((m.t[(k, n)] - f[(k, n)] * ratio).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn phase_screen_is_deterministic_and_normalized() {
        let grid = ModeGrid::square(4, 296e-6).unwrap();
        let mut spec = MediumSpec::new(MediumKind::PhaseScreenFourier, 5);
        spec.thickness_proxy = 2;
        let a = make_medium(&spec, (8, 8), &grid).unwrap();
        let b = make_medium(&spec, (8, 8), &grid).unwrap();
        assert_eq!(a.t, b.t);
        assert!((a.t.norm_squared() - 16.0).abs() < 1e-9);
    }

    #[test]
    fn thick_media_reach_developed_speckle() {
        let grid = ModeGrid::square(8, 296e-6).unwrap();
        for seed in 0..3 {
            let contrast = |thickness| {
                let mut spec = MediumSpec::new(MediumKind::PhaseScreenFourier, seed);
                spec.thickness_proxy = thickness;
                let m = make_medium(&spec, (16, 16), &grid).unwrap();
                m.n_out() as f64 / column_participation_ratio(&m.t) - 1.0
            };
            let (thin, thick) = (contrast(1), contrast(6));
            assert!(thin < 0.7, "thin screen contrast {thin}");
            assert!((thick - 1.0).abs() < 0.1, "thick medium contrast {thick}");
        }
    }

    #[test]
    fn size_cap_is_enforced() {
        let grid = ModeGrid::square(64, 1e-4).unwrap();
        let r = make_medium(&MediumSpec::new(MediumKind::Dft, 0), (200, 200), &grid);
        assert!(r.is_err());
    }

    #[test]
    fn holography_recovers_dft_up_to_row_phase() {
        let grid = ModeGrid::square(2, 1e-4).unwrap();
        let m = make_medium(&MediumSpec::new(MediumKind::Dft, 0), (2, 2), &grid).unwrap();
        let est = measure_tm(&m, 4).unwrap();
        for k in 0..4 {
            let a = m.t.row(k);
            let b = est.t.row(k);
            let corr = a.iter().zip(b.iter()).map(|(x, y)| x.conj() * y).sum::<Complex64>().norm()
                / (a.norm() * b.norm());
            assert!(corr > 0.999);
        }
    }

    #[test]
    fn holography_single_mode_is_proportional() {
        let grid = ModeGrid::square(1, 1e-4).unwrap();
        let m = make_medium(&MediumSpec::new(MediumKind::IidComplex, 2), (2, 2), &grid).unwrap();
        let est = measure_tm(&m, 3).unwrap();
        // one phase per output row is unobservable, so the moduli carry everything
        for k in 0..4 {
            assert!((est.t[(k, 0)] - Complex64::new(m.t[(k, 0)].norm(), 0.0)).norm() < 1e-12);
        }
    }

    #[test]
    fn holography_moduli_are_exact() {
        let grid = ModeGrid::new(4, 4, 1e-4).unwrap();
        let m = make_medium(&MediumSpec::new(MediumKind::IidComplex, 11), (2, 4), &grid).unwrap();
        let est = measure_tm(&m, 4).unwrap();
        for (a, b) in m.t.iter().zip(est.t.iter()) {
            assert!((a.norm() - b.norm()).abs() <= 1e-10 * a.norm().max(1e-300));
        }
    }

    #[test]
    fn holography_needs_three_steps() {
        let grid = ModeGrid::square(2, 1e-4).unwrap();
        let m = make_medium(&MediumSpec::new(MediumKind::Dft, 0), (2, 2), &grid).unwrap();
        assert!(measure_tm(&m, 2).is_err());
    }
}
