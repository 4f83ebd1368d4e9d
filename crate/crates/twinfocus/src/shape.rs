//! Wavefront shaping: the modulation law of a target under a partial phase
//! shift, its extraction from scans, the analytic optimal phase, and the
//! iterative optimizers built on them.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI, TAU};
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use nalgebra::{DMatrix, DVector, Matrix4};
use num_complex::Complex64;
use rand::seq::index::sample;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{dims, invalid, Error, Result};
use crate::formats::sha256_hex;
use crate::measure::{
    coincidence_map, estimate_gamma, separable_coincidence_map, simulate_frames, sum_coordinate_pairs, FrameMeta,
    Image,
};
use crate::medium::ScatteringMatrix;
use crate::rng::{derive_seed, stream, Stream};
use crate::state::{check_grid, wrap_phase, ClassicalField, ModeGrid, PhaseMask, SeparableEnsemble, TwoPhotonState};

/// Phases of the six-point holographic scheme, in sample order.
pub const SIX_PHASES: [f64; 6] = [0.0, FRAC_PI_4, FRAC_PI_2, PI, 3.0 * FRAC_PI_2, 5.0 * FRAC_PI_4];

/// Relative magnitude below which amplitude entries are dropped from the
/// sparse two-photon kernel.
const PRUNE: f64 = 1e-15;

#[derive(Clone, Debug, PartialEq)]
pub struct Partition {
    active: Vec<bool>,
}

impl Partition {
    pub fn from_flags(active: Vec<bool>) -> Result<Self> {
        if !active.iter().any(|&a| a) {
            return Err(invalid("partition needs at least one active mode"));
        }
        Ok(Self { active })
    }

    pub fn new(n_modes: usize, active: &[usize]) -> Result<Self> {
        let mut flags = vec![false; n_modes];
        for &m in active {
            if m >= n_modes {
                return Err(invalid(format!("mode {m} outside {n_modes}")));
            }
            flags[m] = true;
        }
        Self::from_flags(flags)
    }

    /// `ceil(fraction * n)` active modes drawn without replacement, kept
    /// a proper subset.
    pub fn random(n_modes: usize, fraction: f64, rng: &mut impl Rng) -> Result<Self> {
        if n_modes < 2 {
            return Err(invalid("random partitions need at least two modes"));
        }
        if !(fraction > 0.0 && fraction < 1.0) {
            return Err(invalid(format!("fraction must lie in (0, 1), got {fraction}")));
        }
        let count = ((fraction * n_modes as f64).ceil() as usize).clamp(1, n_modes - 1);
        let mut flags = vec![false; n_modes];
        for m in sample(rng, n_modes, count) {
            flags[m] = true;
        }
        Ok(Self { active: flags })
    }

    pub fn flags(&self) -> &[bool] {
        &self.active
    }

    pub fn n_modes(&self) -> usize {
        self.active.len()
    }

    pub fn active_indices(&self) -> Vec<usize> {
        (0..self.active.len()).filter(|&m| self.active[m]).collect()
    }
}

/// `value(theta) = C + A cos(2 theta + theta_a) + B cos(theta + theta_b)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModulationModel {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub theta_a: f64,
    pub theta_b: f64,
}

impl ModulationModel {
    pub fn from_phasors(a: Complex64, b: Complex64, c: f64) -> Self {
        Self { a: a.norm(), b: b.norm(), c, theta_a: wrap_phase(a.arg()), theta_b: wrap_phase(b.arg()) }
    }

    pub fn a_phasor(&self) -> Complex64 {
        Complex64::from_polar(self.a, self.theta_a)
    }

    pub fn b_phasor(&self) -> Complex64 {
        Complex64::from_polar(self.b, self.theta_b)
    }

    pub fn eval(&self, theta: f64) -> f64 {
        self.c + self.a * (2.0 * theta + self.theta_a).cos() + self.b * (theta + self.theta_b).cos()
    }

    fn slope(&self, theta: f64) -> f64 {
        -2.0 * self.a * (2.0 * theta + self.theta_a).sin() - self.b * (theta + self.theta_b).sin()
    }

    fn curvature(&self, theta: f64) -> f64 {
        -4.0 * self.a * (2.0 * theta + self.theta_a).cos() - self.b * (theta + self.theta_b).cos()
    }

    fn is_finite(&self) -> bool {
        [self.a, self.b, self.c, self.theta_a, self.theta_b].iter().all(|v| v.is_finite())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Noise {
    #[default]
    None,
    /// Multiplicative `1 + eps`, `eps ~ N(0, sigma_rel)`, clipped at zero.
    Gaussian { sigma_rel: f64 },
}

impl Noise {
    fn apply(&self, values: &mut [f64], rng: &mut Stream) -> Result<()> {
        if let Noise::Gaussian { sigma_rel } = *self {
            let d = Normal::new(0.0, sigma_rel).map_err(|e| invalid(format!("noise: {e}")))?;
            for v in values {
                *v = (*v * (1.0 + d.sample(rng))).max(0.0);
            }
        }
        Ok(())
    }
}

/// Output coordinates are `[row, col]`; sum coordinates index the
/// `(2h-1) x (2w-1)` projection.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum TargetKind {
    SumCoordinate { coord: [usize; 2] },
    PixelPair { k: [usize; 2], l: [usize; 2] },
    ClassicalIntensity { pixel: [usize; 2] },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetSpec {
    pub kind: TargetKind,
    #[serde(default)]
    pub noise: Noise,
}

impl TargetSpec {
    pub fn new(kind: TargetKind) -> Self {
        Self { kind, noise: Noise::None }
    }

    pub fn is_coincidence(&self) -> bool {
        !matches!(self.kind, TargetKind::ClassicalIntensity { .. })
    }

    /// Ordered output-pixel pairs summed by the target; a single `(k, k)`
    /// for intensity targets.
    pub fn pairs(&self, out_shape: (usize, usize)) -> Result<Vec<(usize, usize)>> {
        let (h, w) = out_shape;
        let pixel = |p: [usize; 2]| {
            if p[0] >= h || p[1] >= w {
                Err(invalid(format!("pixel {p:?} outside {h}x{w}")))
            } else {
                Ok(p[0] * w + p[1])
            }
        };
        match self.kind {
            TargetKind::SumCoordinate { coord } => {
                if coord[0] >= 2 * h - 1 || coord[1] >= 2 * w - 1 {
                    return Err(invalid(format!("sum coordinate {coord:?} outside {}x{}", 2 * h - 1, 2 * w - 1)));
                }
                Ok(sum_coordinate_pairs(out_shape, (coord[0], coord[1]), true))
            }
            TargetKind::PixelPair { k, l } => Ok(vec![(pixel(k)?, pixel(l)?)]),
            TargetKind::ClassicalIntensity { pixel: p } => {
                let k = pixel(p)?;
                Ok(vec![(k, k)])
            }
        }
    }
}

/// What is being shaped: a light source and the medium it crosses.
#[derive(Clone, Copy, Debug)]
pub enum Source<'a> {
    Entangled(&'a TwoPhotonState),
    Separable(&'a SeparableEnsemble),
    Classical(&'a ClassicalField),
}

#[derive(Clone, Copy, Debug)]
pub struct System<'a> {
    pub source: Source<'a>,
    pub medium: &'a ScatteringMatrix,
}

impl<'a> System<'a> {
    pub fn new(source: Source<'a>, medium: &'a ScatteringMatrix) -> Result<Self> {
        let grid = match source {
            Source::Entangled(s) => &s.grid,
            Source::Separable(e) => &e.grid,
            Source::Classical(f) => &f.grid,
        };
        check_grid(grid, &medium.in_grid)?;
        Ok(Self { source, medium })
    }

    pub fn grid(&self) -> ModeGrid {
        self.medium.in_grid
    }

    fn check_target(&self, target: &TargetSpec) -> Result<()> {
        match (self.source, target.is_coincidence()) {
            (Source::Classical(_), true) => Err(invalid("coincidence targets need a two-photon source")),
            (Source::Entangled(_) | Source::Separable(_), false) => {
                Err(invalid("intensity targets need a classical source"))
            }
            _ => Ok(()),
        }
    }
}

/// Target evaluated from the full output maps, independent of the
/// partition machinery.
pub fn evaluate_target(system: &System, mask: &PhaseMask, target: &TargetSpec) -> Result<f64> {
    system.check_target(target)?;
    let pairs = target.pairs(system.medium.out_shape)?;
    match system.source {
        Source::Entangled(s) => {
            let g = coincidence_map(s, mask, system.medium)?;
            Ok(pairs.iter().map(|&(k, l)| g.gamma[(k, l)]).sum())
        }
        Source::Separable(e) => {
            let g = separable_coincidence_map(e, mask, system.medium)?;
            Ok(pairs.iter().map(|&(k, l)| g.gamma[(k, l)]).sum())
        }
        Source::Classical(f) => {
            let i = crate::measure::classical_intensity(f, mask, system.medium)?;
            Ok(i.data[pairs[0].0])
        }
    }
}

/// Target split into the parts that rotate with a phase shift of the
/// active modes.
#[derive(Clone, Debug)]
pub enum Components {
    /// Per pair `(S_active, S_cross, S_reference)`: the pair amplitude is
    /// `e^{2i theta} S_active + e^{i theta} S_cross + S_reference`.
    Quadratic(Vec<[Complex64; 3]>),
    /// Field `e^{i theta} a_active + a_reference`.
    Linear([Complex64; 2]),
    /// Per component weight and per row `(phi_active, phi_reference,
    /// chi_active, chi_reference)`, combined over `pairs` of rows.
    Separable { pairs: Vec<(usize, usize)>, comps: Vec<(f64, Vec<[Complex64; 4]>)> },
}

impl Components {
    /// Target with the active modes shifted by `theta`, from the parts.
    pub fn value(&self, theta: f64) -> f64 {
        let z = Complex64::from_polar(1.0, theta);
        match self {
            Components::Quadratic(s) => s.iter().map(|p| (z * z * p[0] + z * p[1] + p[2]).norm_sqr()).sum(),
            Components::Linear(a) => (z * a[0] + a[1]).norm_sqr(),
            Components::Separable { pairs, comps } => {
                let mut total = 0.0;
                for (w, rows) in comps {
                    let ip: Vec<f64> = rows.iter().map(|r| (z * r[0] + r[1]).norm_sqr()).collect();
                    let ic: Vec<f64> = rows.iter().map(|r| (z * r[2] + r[3]).norm_sqr()).collect();
                    total += w * pairs.iter().map(|&(k, l)| ip[k] * ic[l]).sum::<f64>();
                }
                total
            }
        }
    }

    /// Closed-form modulation coefficients.
    pub fn model(&self) -> ModulationModel {
        let zero = Complex64::new(0.0, 0.0);
        match self {
            Components::Quadratic(s) => {
                let (mut a, mut b, mut c) = (zero, zero, 0.0);
                for p in s {
                    a += 2.0 * p[0] * p[2].conj();
                    b += 2.0 * (p[0] * p[1].conj() + p[1] * p[2].conj());
                    c += p[0].norm_sqr() + p[1].norm_sqr() + p[2].norm_sqr();
                }
                ModulationModel::from_phasors(a, b, c)
            }
            Components::Linear(f) => {
                ModulationModel::from_phasors(zero, 2.0 * f[0] * f[1].conj(), f[0].norm_sqr() + f[1].norm_sqr())
            }
            Components::Separable { pairs, comps } => {
                let (mut a, mut b, mut c) = (zero, zero, 0.0);
                for (w, rows) in comps {
                    let phi: Vec<(f64, Complex64)> =
                        rows.iter().map(|r| (r[0].norm_sqr() + r[1].norm_sqr(), 2.0 * r[0] * r[1].conj())).collect();
                    let chi: Vec<(f64, Complex64)> =
                        rows.iter().map(|r| (r[2].norm_sqr() + r[3].norm_sqr(), 2.0 * r[2] * r[3].conj())).collect();
                    for &(k, l) in pairs {
                        let (a0, a1) = phi[k];
                        let (b0, b1) = chi[l];
                        a += *w * 0.5 * a1 * b1;
                        b += *w * (a0 * b1 + b0 * a1);
                        c += *w * (a0 * b0 + 0.5 * (a1 * b1.conj()).re);
                    }
                }
                ModulationModel::from_phasors(a, b, c)
            }
        }
    }
}

enum Kernel {
    /// Nonzero `(m, n, psi_mn)`.
    Entangled(Vec<(usize, usize, Complex64)>),
    Separable(Vec<(f64, Vec<Complex64>, Vec<Complex64>)>),
    Classical(Vec<Complex64>),
}

/// Incremental target evaluator: keeps only the medium rows the target
/// reads, already multiplied by the current mask phasors.
pub struct Evaluator<'a> {
    system: System<'a>,
    target: TargetSpec,
    theta: Vec<f64>,
    pixels: Vec<usize>,
    rows: Vec<Vec<Complex64>>,
    pairs: Vec<(usize, usize)>,
    pixel_pairs: Vec<(usize, usize)>,
    kernel: Kernel,
}

impl<'a> Evaluator<'a> {
    pub fn new(system: System<'a>, target: &TargetSpec, mask: &PhaseMask) -> Result<Self> {
        system.check_target(target)?;
        check_grid(&mask.grid, &system.medium.in_grid)?;
        let pixel_pairs = target.pairs(system.medium.out_shape)?;
        if pixel_pairs.is_empty() {
            return Err(Error::Degenerate("target covers no pixel pairs".into()));
        }
        let mut pixels: Vec<usize> = pixel_pairs.iter().flat_map(|&(k, l)| [k, l]).collect();
        pixels.sort_unstable();
        pixels.dedup();
        let row_of = |p: usize| pixels.binary_search(&p).expect("pixel listed");
        let pairs = pixel_pairs.iter().map(|&(k, l)| (row_of(k), row_of(l))).collect();
        let kernel = match system.source {
            Source::Entangled(s) => {
                let max = s.psi.iter().map(|v| v.norm()).fold(0.0, f64::max);
                let mut entries = Vec::new();
                for m in 0..s.psi.nrows() {
                    for n in 0..s.psi.ncols() {
                        let v = s.psi[(m, n)];
                        if v.norm() > PRUNE * max {
                            entries.push((m, n, v));
                        }
                    }
                }
                Kernel::Entangled(entries)
            }
            Source::Separable(e) => Kernel::Separable(
                e.components
                    .iter()
                    .map(|c| (c.weight, c.phi.iter().copied().collect(), c.chi.iter().copied().collect()))
                    .collect(),
            ),
            Source::Classical(f) => Kernel::Classical(f.amplitudes.iter().copied().collect()),
        };
        let mut ev = Self {
            system,
            target: *target,
            theta: mask.theta.clone(),
            rows: Vec::new(),
            pixels,
            pairs,
            pixel_pairs,
            kernel,
        };
        ev.rebuild_rows();
        Ok(ev)
    }

    fn rebuild_rows(&mut self) {
        let t = &self.system.medium.t;
        let e: Vec<Complex64> = self.theta.iter().map(|&th| Complex64::from_polar(1.0, th)).collect();
        self.rows = self.pixels.iter().map(|&p| (0..t.ncols()).map(|m| t[(p, m)] * e[m]).collect()).collect();
    }

    pub fn n_modes(&self) -> usize {
        self.theta.len()
    }

    pub fn mask(&self) -> PhaseMask {
        PhaseMask { grid: self.system.medium.in_grid, theta: self.theta.clone() }
    }

    pub fn set_mask(&mut self, mask: &PhaseMask) -> Result<()> {
        check_grid(&mask.grid, &self.system.medium.in_grid)?;
        self.theta.clone_from(&mask.theta);
        self.rebuild_rows();
        Ok(())
    }

    /// Add `phase` to the active modes.
    pub fn apply(&mut self, partition: &Partition, phase: f64) {
        let z = Complex64::from_polar(1.0, phase);
        for (m, &on) in partition.flags().iter().enumerate() {
            if on {
                self.theta[m] = wrap_phase(self.theta[m] + phase);
                for row in &mut self.rows {
                    row[m] *= z;
                }
            }
        }
    }

    pub fn components(&self, partition: &Partition) -> Result<Components> {
        if partition.n_modes() != self.n_modes() {
            return Err(dims("partition size differs from mode count"));
        }
        Ok(self.split(partition.flags()))
    }

    fn split(&self, active: &[bool]) -> Components {
        let zero = Complex64::new(0.0, 0.0);
        let project = |row: &[Complex64], v: &[Complex64]| {
            let mut acc = [zero; 2];
            for (m, (&r, &x)) in row.iter().zip(v).enumerate() {
                acc[usize::from(!active[m])] += r * x;
            }
            acc
        };
        match &self.kernel {
            Kernel::Entangled(entries) => Components::Quadratic(
                self.pairs
                    .iter()
                    .map(|&(k, l)| {
                        let (rk, rl) = (&self.rows[k], &self.rows[l]);
                        let mut s = [zero; 3];
                        for &(m, n, v) in entries {
                            s[2 - usize::from(active[m]) - usize::from(active[n])] += rk[m] * v * rl[n];
                        }
                        s
                    })
                    .collect(),
            ),
            Kernel::Separable(comps) => Components::Separable {
                pairs: self.pairs.clone(),
                comps: comps
                    .iter()
                    .map(|(w, phi, chi)| {
                        let rows = self
                            .rows
                            .iter()
                            .map(|row| {
                                let p = project(row, phi);
                                let c = project(row, chi);
                                [p[0], p[1], c[0], c[1]]
                            })
                            .collect();
                        (*w, rows)
                    })
                    .collect(),
            },
            Kernel::Classical(field) => Components::Linear(project(&self.rows[self.pairs[0].0], field)),
        }
    }

    /// Exact target at the current mask.
    pub fn value(&self) -> f64 {
        self.split(&vec![false; self.n_modes()]).value(0.0)
    }

    /// Target sampled with the active set offset by each phase, then passed
    /// through the noise hook.
    pub fn scan(
        &self,
        partition: &Partition,
        phases: &[f64],
        source: &ScanSource,
        noise_rng: &mut Stream,
        frame_seed: u64,
    ) -> Result<Vec<f64>> {
        if phases.is_empty() {
            return Err(invalid("scan needs at least one phase"));
        }
        let mut values = match source {
            ScanSource::Exact => {
                let comps = self.components(partition)?;
                phases.iter().map(|&p| comps.value(p)).collect::<Vec<_>>()
            }
            ScanSource::Frames { frames, meta } => {
                let base = self.mask();
                let mut out = Vec::with_capacity(phases.len());
                for (i, &p) in phases.iter().enumerate() {
                    let mask = base.shifted(partition.flags(), p);
                    let g = match self.system.source {
                        Source::Entangled(s) => coincidence_map(s, &mask, self.system.medium)?,
                        Source::Separable(e) => separable_coincidence_map(e, &mask, self.system.medium)?,
                        Source::Classical(_) => return Err(invalid("frame scans need a coincidence target")),
                    };
                    let (h, w) = g.out_shape;
                    let singles = Image::new(h, w, g.gamma.row_sum().iter().copied().collect())?;
                    let stack = simulate_frames(&g, &singles, *frames, *meta, derive_seed(frame_seed, "scan", i as u64))?;
                    let est = estimate_gamma(&stack, false)?;
                    out.push(self.pixel_pairs.iter().map(|&(k, l)| est.gamma[(k, l)]).sum());
                }
                out
            }
        };
        self.target.noise.apply(&mut values, noise_rng)?;
        Ok(values)
    }
}

/// Modulation coefficients of the target for the given partition.
pub fn predict_modulation(
    system: &System,
    mask: &PhaseMask,
    partition: &Partition,
    target: &TargetSpec,
) -> Result<ModulationModel> {
    let model = Evaluator::new(*system, target, mask)?.components(partition)?.model();
    if model.a == 0.0 && model.b == 0.0 && model.c == 0.0 {
        return Err(Error::Degenerate("target is identically zero".into()));
    }
    Ok(model)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ScanSource {
    #[default]
    Exact,
    /// Target estimated from simulated binary frames.
    Frames { frames: usize, meta: FrameMeta },
}

/// Samples of the target over `phases` for one partition.
pub fn scan_target(
    system: &System,
    mask: &PhaseMask,
    partition: &Partition,
    phases: &[f64],
    target: &TargetSpec,
    seed: u64,
) -> Result<Vec<f64>> {
    let ev = Evaluator::new(*system, target, mask)?;
    ev.scan(partition, phases, &ScanSource::Exact, &mut stream(seed, "noise"), seed)
}

/// Closed-form inversion of samples at [`SIX_PHASES`].
pub fn extract_6pt(samples: &[f64; 6]) -> ModulationModel {
    let [g0, g45, g90, g180, g270, g225] = *samples;
    let c = 0.25 * (g0 + g90 + g180 + g270);
    let a = Complex64::new(0.5 * (g0 + g180 - 2.0 * c), -0.5 * (g45 + g225 - 2.0 * c));
    let b = Complex64::new(0.5 * (g0 - g180), 0.5 * (g270 - g90));
    ModulationModel::from_phasors(a, b, c)
}

/// Least-squares fit on `{cos 2t, sin 2t, cos t, sin t, 1}`; returns the
/// model and its coefficient of determination.
pub fn fit_model(samples: &[(f64, f64)]) -> Result<(ModulationModel, f64)> {
    let mut distinct: Vec<f64> = samples.iter().map(|s| wrap_phase(s.0)).collect();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
    if distinct.len() > 1 && TAU - distinct[distinct.len() - 1] + distinct[0] < 1e-9 {
        distinct.pop();
    }
    if distinct.len() < 5 {
        return Err(Error::Degenerate(format!("rank-deficient fit: {} distinct phases", distinct.len())));
    }
    let n = samples.len();
    let x = DMatrix::from_fn(n, 5, |i, j| {
        let t = samples[i].0;
        match j {
            0 => (2.0 * t).cos(),
            1 => (2.0 * t).sin(),
            2 => t.cos(),
            3 => t.sin(),
            _ => 1.0,
        }
    });
    let y = DVector::from_fn(n, |i, _| samples[i].1);
    let coef = x.clone().svd(true, true).solve(&y, 1e-14).map_err(|e| Error::Degenerate(e.to_string()))?;
    let model = ModulationModel::from_phasors(
        Complex64::new(coef[0], -coef[1]),
        Complex64::new(coef[2], -coef[3]),
        coef[4],
    );
    let mean = y.mean();
    let ss_tot: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    let ss_res: f64 = (&x * &coef - &y).norm_squared();
    let r2 = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
    Ok((model, r2))
}

/// Stationarity condition in `Y = sin x`, with `x = theta + theta_a / 2`.
#[derive(Clone, Debug, PartialEq)]
pub struct QuarticReduction {
    pub d: f64,
    pub phi: f64,
    pub e: f64,
    pub f: f64,
    /// Real roots in `[-1, 1]`.
    pub roots: Vec<f64>,
}

impl QuarticReduction {
    pub fn coefficients(&self) -> [f64; 5] {
        let (e, f) = (self.e, self.f);
        [1.0, 2.0 * e, e * e + f * f - 1.0, -2.0 * e, -e * e]
    }

    pub fn residual(&self, y: f64) -> f64 {
        self.coefficients().iter().fold(0.0, |acc, c| acc * y + c)
    }
}

fn quartic_derivative(c: &[f64; 5], y: f64) -> f64 {
    4.0 * c[0] * y.powi(3) + 3.0 * c[1] * y * y + 2.0 * c[2] * y + c[3]
}

/// Requires `a > 0`.
pub fn quartic_reduction(model: &ModulationModel) -> Option<QuarticReduction> {
    if !(model.a > 0.0) {
        return None;
    }
    let d = model.b / (4.0 * model.a);
    let phi = model.theta_b - model.theta_a / 2.0;
    let mut q = QuarticReduction { d, phi, e: d * phi.sin(), f: d * phi.cos(), roots: Vec::new() };
    let c = q.coefficients();
    let companion = Matrix4::new(
        -c[1], -c[2], -c[3], -c[4], //
        1.0, 0.0, 0.0, 0.0, //
        0.0, 1.0, 0.0, 0.0, //
        0.0, 0.0, 1.0, 0.0,
    );
    let eig = companion.complex_eigenvalues();
    let scale = 1.0 + q.e.abs() + q.f.abs();
    for z in eig.iter() {
        if z.im.abs() > 1e-6 * scale {
            continue;
        }
        let mut y = z.re;
        for _ in 0..20 {
            let dp = quartic_derivative(&c, y);
            if dp == 0.0 {
                break;
            }
            let step = q.residual(y) / dp;
            y -= step;
            if step.abs() < 1e-16 {
                break;
            }
        }
        if y.abs() <= 1.0 + 1e-9 {
            q.roots.push(y.clamp(-1.0, 1.0));
        }
    }
    Some(q)
}

fn polish(model: &ModulationModel, theta: f64) -> f64 {
    let mut best = theta;
    let mut best_v = model.eval(theta);
    let mut t = theta;
    for _ in 0..12 {
        let curv = model.curvature(t);
        if !(curv < 0.0) {
            break;
        }
        t -= model.slope(t) / curv;
        let v = model.eval(t);
        if v > best_v {
            best_v = v;
            best = t;
        } else {
            break;
        }
    }
    best
}

/// Best candidate; equal maxima resolve to the smallest phase in `[0, 2pi)`.
fn pick(model: &ModulationModel, candidates: &[f64]) -> f64 {
    let scored: Vec<(f64, f64)> = candidates
        .iter()
        .map(|&t| {
            let t = wrap_phase(t);
            (t, model.eval(t))
        })
        .collect();
    let best = scored.iter().map(|s| s.1).fold(f64::NEG_INFINITY, f64::max);
    let tol = 1e-13 * (model.a + model.b + model.c.abs());
    scored.iter().filter(|s| s.1 >= best - tol).map(|s| s.0).fold(f64::INFINITY, f64::min)
}

fn same_angle(x: f64, y: f64) -> bool {
    let d = wrap_phase(x - y);
    d < 1e-12 || TAU - d < 1e-12
}

/// Argmax of the model over one period.
pub fn optimal_phase(model: &ModulationModel) -> Result<f64> {
    if !model.is_finite() {
        return Err(invalid("model coefficients must be finite"));
    }
    let (a, b) = (model.a, model.b);
    let scale = a + b;
    if scale == 0.0 {
        return Ok(0.0);
    }
    if a <= 1e-15 * scale {
        return Ok(wrap_phase(-model.theta_b));
    }
    let half = -model.theta_a / 2.0;
    if b <= 1e-15 * scale {
        return Ok(pick(model, &[half, half + PI]));
    }
    if same_angle(model.theta_a, 2.0 * model.theta_b) {
        return Ok(wrap_phase(-model.theta_b));
    }
    if same_angle(model.theta_a, 2.0 * model.theta_b + PI) {
        // value = C - A cos 2u + B cos u with u = theta + theta_b
        let u = (b / (4.0 * a)).min(1.0).acos();
        return Ok(pick(model, &[-model.theta_b + u, -model.theta_b - u]));
    }
    let mut candidates = vec![-model.theta_b, half, half + PI];
    if let Some(q) = quartic_reduction(model) {
        for &y in &q.roots {
            let s = y.asin();
            candidates.push(s + half);
            candidates.push(PI - s + half);
            let den = y + q.e;
            if den.abs() > 1e-12 {
                let x = -q.f * y / den;
                candidates.push(y.atan2(x) + half);
            }
        }
    }
    candidates.extend((0..16).map(|j| j as f64 * TAU / 16.0));
    let polished: Vec<f64> = candidates.iter().map(|&t| polish(model, t)).collect();
    Ok(pick(model, &polished))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PhaseScheme {
    SixPoint,
    Fit(usize),
}

impl PhaseScheme {
    pub fn phases(&self) -> Vec<f64> {
        match *self {
            PhaseScheme::SixPoint => SIX_PHASES.to_vec(),
            PhaseScheme::Fit(n) => (0..n).map(|j| j as f64 * TAU / n as f64).collect(),
        }
    }
}

impl Default for PhaseScheme {
    fn default() -> Self {
        PhaseScheme::Fit(10)
    }
}

impl fmt::Display for PhaseScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PhaseScheme::SixPoint => write!(f, "6pt"),
            PhaseScheme::Fit(n) => write!(f, "fit({n})"),
        }
    }
}

impl FromStr for PhaseScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "6pt" {
            return Ok(PhaseScheme::SixPoint);
        }
        let n = s
            .strip_prefix("fit(")
            .and_then(|r| r.strip_suffix(')'))
            .and_then(|n| n.parse::<usize>().ok())
            .ok_or_else(|| Error::Config(format!("unknown phase scheme {s:?}; use 6pt or fit(n)")))?;
        if n < 9 {
            return Err(Error::Config(format!("fit schemes need at least 9 phases, got {n}")));
        }
        Ok(PhaseScheme::Fit(n))
    }
}

impl Serialize for PhaseScheme {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for PhaseScheme {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(|e| match e {
            Error::Config(msg) => serde::de::Error::custom(msg),
            e => serde::de::Error::custom(e),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    pub steps: usize,
    pub fraction: f64,
    pub scheme: PhaseScheme,
    /// Undo a step whose measured target fell.
    pub reject_on_decrease: bool,
    /// Stop once a 20-step window improves by less than 1e-4 relative.
    pub early_stop: bool,
    pub scan: ScanSource,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            steps: 200,
            fraction: 0.5,
            scheme: PhaseScheme::default(),
            reject_on_decrease: false,
            early_stop: false,
            scan: ScanSource::Exact,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TraceStep {
    pub index: usize,
    pub partition_seed: u64,
    pub applied_phase: f64,
    pub value_before: f64,
    pub value_after: f64,
    pub accepted: bool,
    pub r2: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct OptimizationTrace {
    pub steps: Vec<TraceStep>,
    pub initial_value: f64,
    pub final_mask: PhaseMask,
    pub wall_clock_s: f64,
    pub config_hash: String,
    pub early_stopped: bool,
}

impl OptimizationTrace {
    pub fn final_value(&self) -> f64 {
        self.steps.last().map_or(self.initial_value, |s| s.value_after)
    }

    /// Exact target after each step, starting with the initial value.
    pub fn values(&self) -> Vec<f64> {
        std::iter::once(self.initial_value).chain(self.steps.iter().map(|s| s.value_after)).collect()
    }

    pub fn is_non_decreasing(&self, rel_tol: f64) -> bool {
        self.steps.iter().all(|s| s.value_after >= s.value_before - rel_tol * s.value_before.abs().max(f64::MIN_POSITIVE))
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("step,value_before,value_after,applied_phase,accepted\n");
        for s in &self.steps {
            out.push_str(&format!(
                "{},{:e},{:e},{:.12},{}\n",
                s.index, s.value_before, s.value_after, s.applied_phase, s.accepted as u8
            ));
        }
        out
    }
}

pub fn random_mask(grid: ModeGrid, rng: &mut impl Rng) -> PhaseMask {
    PhaseMask { grid, theta: (0..grid.n_modes()).map(|_| rng.random::<f64>() * TAU).collect() }
}

/// `|sum e^{i(a - b)}| / N`: 1 for masks equal up to a global phase.
pub fn phasor_similarity(a: &PhaseMask, b: &PhaseMask) -> Result<f64> {
    if a.theta.len() != b.theta.len() || a.theta.is_empty() {
        return Err(dims("masks differ in length"));
    }
    let s: Complex64 = a.theta.iter().zip(&b.theta).map(|(x, y)| Complex64::from_polar(1.0, x - y)).sum();
    Ok(s.norm() / a.theta.len() as f64)
}

/// Random-partition optimization: per step shift a random subset, scan
/// the target, solve for the best shift and apply it.
pub fn optimize(
    system: &System,
    target: &TargetSpec,
    initial: &PhaseMask,
    cfg: &OptimizerConfig,
    seed: u64,
) -> Result<OptimizationTrace> {
    if cfg.steps == 0 {
        return Err(invalid("steps must be at least 1"));
    }
    if !(cfg.fraction > 0.0 && cfg.fraction < 1.0) {
        return Err(invalid(format!("fraction must lie in (0, 1), got {}", cfg.fraction)));
    }
    let started = Instant::now();
    let mut ev = Evaluator::new(*system, target, initial)?;
    let n = ev.n_modes();
    let phases = cfg.scheme.phases();
    let mut noise_rng = stream(seed, "noise");
    let initial_value = ev.value();
    let mut current = initial_value;
    let mut steps = Vec::with_capacity(cfg.steps);
    let mut early_stopped = false;
    for index in 0..cfg.steps {
        let partition_seed = derive_seed(seed, "partition", index as u64);
        let partition = Partition::random(n, cfg.fraction, &mut stream(partition_seed, "partition"))?;
        let frame_seed = derive_seed(seed, "frames", index as u64);
        let samples = ev.scan(&partition, &phases, &cfg.scan, &mut noise_rng, frame_seed)?;
        let (model, r2) = match cfg.scheme {
            PhaseScheme::SixPoint => {
                let six: [f64; 6] = samples.as_slice().try_into().expect("six samples");
                (extract_6pt(&six), None)
            }
            PhaseScheme::Fit(_) => {
                let pts: Vec<(f64, f64)> = phases.iter().copied().zip(samples.iter().copied()).collect();
                let (m, r2) = fit_model(&pts)?;
                (m, Some(r2))
            }
        };
        let phase = optimal_phase(&model)?;
        let before = current;
        ev.apply(&partition, phase);
        let mut accepted = true;
        if cfg.reject_on_decrease {
            let measured = ev.scan(&partition, &[0.0], &cfg.scan, &mut noise_rng, frame_seed ^ 1)?[0];
            if measured < samples[0] {
                ev.apply(&partition, -phase);
                accepted = false;
            }
        }
        current = ev.value();
        steps.push(TraceStep {
            index,
            partition_seed,
            applied_phase: phase,
            value_before: before,
            value_after: current,
            accepted,
            r2,
        });
        if cfg.early_stop && index >= 20 {
            let old = steps[index - 20].value_after;
            if (current - old) < 1e-4 * old.abs() {
                early_stopped = true;
                break;
            }
        }
    }
    let config_hash = sha256_hex(&serde_json::to_vec(&(cfg, target, seed))?);
    Ok(OptimizationTrace {
        steps,
        initial_value,
        final_mask: ev.mask(),
        wall_clock_s: started.elapsed().as_secs_f64(),
        config_hash,
        early_stopped,
    })
}

/// Optimizer for two-photon sources on coincidence targets.
pub fn optimize_nonclassical(
    system: &System,
    target: &TargetSpec,
    initial: &PhaseMask,
    cfg: &OptimizerConfig,
    seed: u64,
) -> Result<OptimizationTrace> {
    if matches!(system.source, Source::Classical(_)) || !target.is_coincidence() {
        return Err(invalid("non-classical optimization needs a two-photon source and a coincidence target"));
    }
    optimize(system, target, initial, cfg, seed)
}

/// Optimizer for coherent light focused on one output pixel.
pub fn optimize_classical(
    system: &System,
    target: &TargetSpec,
    initial: &PhaseMask,
    cfg: &OptimizerConfig,
    seed: u64,
) -> Result<OptimizationTrace> {
    if !matches!(system.source, Source::Classical(_)) || target.is_coincidence() {
        return Err(invalid("classical optimization needs a classical source and an intensity target"));
    }
    optimize(system, target, initial, cfg, seed)
}

/// Binary search trace; energies start with the initial configuration.
#[derive(Clone, Debug)]
pub struct SpinTrace {
    pub energies: Vec<f64>,
    pub accepted: Vec<bool>,
    pub sigma: Vec<i8>,
}

impl SpinTrace {
    pub fn final_energy(&self) -> f64 {
        *self.energies.last().expect("initial energy")
    }
}

/// Greedy spin flipping: each step flips `ceil(flip_fraction * n)` random
/// spins and keeps the flip only if the energy strictly decreases.
pub fn binary_search<F>(
    initial: Vec<i8>,
    steps: usize,
    flip_fraction: f64,
    rng: &mut impl Rng,
    mut energy: F,
) -> Result<SpinTrace>
where
    F: FnMut(&[i8]) -> Result<f64>,
{
    let n = initial.len();
    if n == 0 {
        return Err(invalid("no spins"));
    }
    if initial.iter().any(|&s| s != 1 && s != -1) {
        return Err(invalid("spins must be +1 or -1"));
    }
    if !(flip_fraction > 0.0 && flip_fraction <= 1.0) {
        return Err(invalid(format!("flip fraction must lie in (0, 1], got {flip_fraction}")));
    }
    let count = ((flip_fraction * n as f64).ceil() as usize).clamp(1, n);
    let mut sigma = initial;
    let mut current = energy(&sigma)?;
    let mut energies = vec![current];
    let mut accepted = Vec::with_capacity(steps);
    for _ in 0..steps {
        let picks = sample(rng, n, count).into_vec();
        for &m in &picks {
            sigma[m] = -sigma[m];
        }
        let e = energy(&sigma)?;
        if e < current {
            current = e;
            accepted.push(true);
        } else {
            for &m in &picks {
                sigma[m] = -sigma[m];
            }
            accepted.push(false);
        }
        energies.push(current);
    }
    Ok(SpinTrace { energies, accepted, sigma })
}

/// `sigma = +1` maps to phase 0, `sigma = -1` to phase pi/2.
pub fn spins_to_mask(grid: ModeGrid, sigma: &[i8]) -> Result<PhaseMask> {
    if sigma.len() != grid.n_modes() {
        return Err(dims("spin count differs from mode count"));
    }
    Ok(PhaseMask { grid, theta: sigma.iter().map(|&s| if s > 0 { 0.0 } else { FRAC_PI_2 }).collect() })
}

/// Binary-phase optimization of the target; energy is the negated target.
pub fn optimize_binary_spins(
    system: &System,
    target: &TargetSpec,
    steps: usize,
    flip_fraction: f64,
    seed: u64,
) -> Result<SpinTrace> {
    let grid = system.grid();
    let mut ev = Evaluator::new(*system, target, &PhaseMask::flat(grid))?;
    let mut rng = stream(seed, "spins");
    let initial: Vec<i8> = (0..grid.n_modes()).map(|_| if rng.random::<bool>() { 1 } else { -1 }).collect();
    binary_search(initial, steps, flip_fraction, &mut rng, |sigma| {
        ev.set_mask(&spins_to_mask(grid, sigma)?)?;
        Ok(-ev.value())
    })
}

#[derive(Clone, Debug)]
pub struct Landscape {
    pub resolution: usize,
    pub free_modes: [usize; 2],
    /// `values[i * resolution + j]` at phases `(2 pi i / R, 2 pi j / R)`.
    pub values: Vec<f64>,
    pub local_maxima: usize,
}

/// Strict maxima over the 8-neighborhood on a periodic `r x r` grid.
pub fn count_strict_local_maxima(values: &[f64], r: usize) -> usize {
    let mut count = 0;
    for i in 0..r {
        for j in 0..r {
            let v = values[i * r + j];
            let mut strict = true;
            'nb: for di in [r - 1, 0, 1] {
                for dj in [r - 1, 0, 1] {
                    if di == 0 && dj == 0 {
                        continue;
                    }
                    if values[((i + di) % r) * r + (j + dj) % r] >= v {
                        strict = false;
                        break 'nb;
                    }
                }
            }
            if strict {
                count += 1;
            }
        }
    }
    count
}

/// Target over the torus of two free phases, all other modes fixed by `base`.
pub fn landscape_scan(
    system: &System,
    base: &PhaseMask,
    free_modes: [usize; 2],
    resolution: usize,
    target: &TargetSpec,
) -> Result<Landscape> {
    let n = system.grid().n_modes();
    if n < 3 {
        return Err(invalid("landscapes need at least three modes"));
    }
    if resolution < 16 {
        return Err(invalid("resolution must be at least 16"));
    }
    if free_modes[0] == free_modes[1] || free_modes.iter().any(|&m| m >= n) {
        return Err(invalid(format!("free modes {free_modes:?} must be distinct and below {n}")));
    }
    let mut ev = Evaluator::new(*system, target, base)?;
    let mut mask = base.clone();
    let mut values = Vec::with_capacity(resolution * resolution);
    for i in 0..resolution {
        for j in 0..resolution {
            mask.theta[free_modes[0]] = i as f64 * TAU / resolution as f64;
            mask.theta[free_modes[1]] = j as f64 * TAU / resolution as f64;
            ev.set_mask(&mask)?;
            values.push(ev.value());
        }
    }
    let local_maxima = count_strict_local_maxima(&values, resolution);
    Ok(Landscape { resolution, free_modes, values, local_maxima })
}
