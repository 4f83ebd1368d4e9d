//! Propagation through medium and mask, coincidence maps, projections,
//! image metrics, and the binary frame model with its estimator.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{dims, invalid, Error, Result};
use crate::medium::ScatteringMatrix;
use crate::rng::stream;
use crate::state::{check_grid, ClassicalField, PhaseMask, SeparableEnsemble, TwoPhotonState};

/// Real image stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    pub h: usize,
    pub w: usize,
    pub data: Vec<f64>,
}

/// Output-plane intensity, `h x w`.
pub type OutputIntensity = Image;
/// Sum-coordinate projection, `(2h-1) x (2w-1)`.
pub type SumProjection = Image;

impl Image {
    pub fn new(h: usize, w: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != h * w {
            return Err(dims(format!("{} values for a {h}x{w} image", data.len())));
        }
        Ok(Self { h, w, data })
    }

    pub fn zeros(h: usize, w: usize) -> Self {
        Self { h, w, data: vec![0.0; h * w] }
    }

    pub fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.w + c]
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        self.sum() / self.data.len() as f64
    }
}

#[derive(Clone, Debug)]
pub struct CorrelationMap {
    /// `gamma[(k, l)]` over row-major output pixels.
    pub gamma: DMatrix<f64>,
    pub out_shape: (usize, usize),
    pub diagonal_zeroed: bool,
}

impl CorrelationMap {
    pub fn zero_diagonal(&mut self) {
        for k in 0..self.gamma.nrows() {
            self.gamma[(k, k)] = 0.0;
        }
        self.diagonal_zeroed = true;
    }

    /// Entries with `k != l`, row-major.
    pub fn off_diagonal(&self) -> Vec<f64> {
        let m = self.gamma.nrows();
        let mut out = Vec::with_capacity(m * m - m);
        for k in 0..m {
            for l in 0..m {
                if k != l {
                    out.push(self.gamma[(k, l)]);
                }
            }
        }
        out
    }
}

/// `T diag(e^{i theta})`: the medium seen through the mask.
pub fn masked_transfer(t: &ScatteringMatrix, mask: &PhaseMask) -> Result<DMatrix<Complex64>> {
    check_grid(&t.in_grid, &mask.grid)?;
    let e = mask.phasors();
    let mut w = t.t.clone();
    for (n, mut col) in w.column_iter_mut().enumerate() {
        col *= e[n];
    }
    Ok(w)
}

/// Output two-photon amplitude `Phi = (T e) psi (T e)^T`.
pub fn output_amplitude(state: &TwoPhotonState, mask: &PhaseMask, t: &ScatteringMatrix) -> Result<DMatrix<Complex64>> {
    check_grid(&state.grid, &t.in_grid)?;
    let w = masked_transfer(t, mask)?;
    Ok((&w * &state.psi) * w.transpose())
}

pub fn coincidence_map(state: &TwoPhotonState, mask: &PhaseMask, t: &ScatteringMatrix) -> Result<CorrelationMap> {
    let phi = output_amplitude(state, mask, t)?;
    Ok(CorrelationMap { gamma: phi.map(|v| v.norm_sqr()), out_shape: t.out_shape, diagonal_zeroed: false })
}

fn component_intensity(w: &DMatrix<Complex64>, v: &DVector<Complex64>) -> DVector<f64> {
    (w * v).map(|a| a.norm_sqr())
}

pub fn separable_coincidence_map(
    ens: &SeparableEnsemble,
    mask: &PhaseMask,
    t: &ScatteringMatrix,
) -> Result<CorrelationMap> {
    check_grid(&ens.grid, &t.in_grid)?;
    let w = masked_transfer(t, mask)?;
    let m = t.n_out();
    let mut gamma = DMatrix::<f64>::zeros(m, m);
    for c in &ens.components {
        let a = component_intensity(&w, &c.phi);
        let b = component_intensity(&w, &c.chi);
        gamma += (a * b.transpose()) * c.weight;
    }
    Ok(CorrelationMap { gamma, out_shape: t.out_shape, diagonal_zeroed: false })
}

pub fn classical_output_field(
    field: &ClassicalField,
    mask: &PhaseMask,
    t: &ScatteringMatrix,
) -> Result<DVector<Complex64>> {
    check_grid(&field.grid, &t.in_grid)?;
    Ok(masked_transfer(t, mask)? * &field.amplitudes)
}

pub fn classical_intensity(field: &ClassicalField, mask: &PhaseMask, t: &ScatteringMatrix) -> Result<OutputIntensity> {
    let e = classical_output_field(field, mask, t)?;
    Image::new(t.out_shape.0, t.out_shape.1, e.iter().map(|v| v.norm_sqr()).collect())
}

/// Every ordered pixel pair `(k, l)` whose coordinates sum to `target`.
pub fn sum_coordinate_pairs(out_shape: (usize, usize), target: (usize, usize), include_diagonal: bool) -> Vec<(usize, usize)> {
    let (h, w) = out_shape;
    let mut pairs = Vec::new();
    for r in 0..h {
        let Some(r2) = target.0.checked_sub(r) else { continue };
        if r2 >= h {
            continue;
        }
        for c in 0..w {
            let Some(c2) = target.1.checked_sub(c) else { continue };
            if c2 >= w {
                continue;
            }
            let (k, l) = (r * w + c, r2 * w + c2);
            if include_diagonal || k != l {
                pairs.push((k, l));
            }
        }
    }
    pairs
}

pub fn sum_projection(gmap: &CorrelationMap, zero_diagonal: bool) -> SumProjection {
    let (h, w) = gmap.out_shape;
    let mut out = Image::zeros(2 * h - 1, 2 * w - 1);
    for k in 0..h * w {
        for l in 0..h * w {
            if zero_diagonal && k == l {
                continue;
            }
            let r = k / w + l / w;
            let c = k % w + l % w;
            out.data[r * out.w + c] += gmap.gamma[(k, l)];
        }
    }
    out
}

pub fn target_value(gp: &SumProjection, coord: (usize, usize)) -> Result<f64> {
    if coord.0 >= gp.h || coord.1 >= gp.w {
        return Err(invalid(format!("target {coord:?} outside {}x{}", gp.h, gp.w)));
    }
    Ok(gp.at(coord.0, coord.1))
}

/// `Gamma_{., l}` reshaped to the output grid.
pub fn conditional_image(gmap: &CorrelationMap, l: usize) -> Result<Image> {
    let m = gmap.gamma.nrows();
    if l >= m {
        return Err(invalid(format!("pixel {l} outside {m} outputs")));
    }
    Image::new(gmap.out_shape.0, gmap.out_shape.1, gmap.gamma.column(l).iter().copied().collect())
}

/// Target over background, background taken over the central window of the
/// projection outside a Chebyshev radius around the target.
pub fn enhancement(gp: &SumProjection, coord: (usize, usize), exclusion_radius: usize) -> Result<f64> {
    let peak = target_value(gp, coord)?;
    let (ch, cw) = ((gp.h - 1) / 2, (gp.w - 1) / 2);
    let (half_h, half_w) = ((gp.h + 1) / 4, (gp.w + 1) / 4);
    let mut sum = 0.0;
    let mut count = 0usize;
    for r in ch.saturating_sub(half_h)..=(ch + half_h).min(gp.h - 1) {
        for c in cw.saturating_sub(half_w)..=(cw + half_w).min(gp.w - 1) {
            let dist = r.abs_diff(coord.0).max(c.abs_diff(coord.1));
            if dist > exclusion_radius {
                sum += gp.at(r, c);
                count += 1;
            }
        }
    }
    if count == 0 {
        return Err(Error::Degenerate("empty background region".into()));
    }
    let mean = sum / count as f64;
    if mean <= 0.0 {
        return Err(Error::Degenerate("zero background".into()));
    }
    Ok(peak / mean)
}

/// Pearson correlation of two equally sized samples.
pub fn pearson(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.is_empty() {
        return Err(dims("samples must be non-empty and equally sized"));
    }
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return Err(Error::Degenerate("zero variance".into()));
    }
    Ok((sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0))
}

pub fn similarity(a: &Image, b: &Image) -> Result<f64> {
    if a.h != b.h || a.w != b.w {
        return Err(dims("images differ in shape"));
    }
    pearson(&a.data, &b.data)
}

/// Intensity at pixel `k` over the image mean.
pub fn peak_to_mean(img: &Image, k: usize) -> f64 {
    img.data[k] / img.mean()
}

/// `sqrt(2 <r^2>)` in pixels after median subtraction and clipping: the
/// 1/e^2 radius for a Gaussian spot.
pub fn gaussian_width(img: &Image) -> Result<f64> {
    let mut sorted = img.data.clone();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let median = if n % 2 == 1 { sorted[n / 2] } else { 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]) };
    let vals: Vec<f64> = img.data.iter().map(|v| (v - median).max(0.0)).collect();
    let mass: f64 = vals.iter().sum();
    if !(mass > 0.0) {
        return Err(Error::Degenerate("no mass above the median".into()));
    }
    let (mut cr, mut cc) = (0.0, 0.0);
    for (i, v) in vals.iter().enumerate() {
        cr += v * (i / img.w) as f64;
        cc += v * (i % img.w) as f64;
    }
    cr /= mass;
    cc /= mass;
    let mut r2 = 0.0;
    for (i, v) in vals.iter().enumerate() {
        r2 += v * (((i / img.w) as f64 - cr).powi(2) + ((i % img.w) as f64 - cc).powi(2));
    }
    Ok((2.0 * r2 / mass).sqrt())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FrameMeta {
    /// Mean photon pairs per frame.
    pub pair_rate: f64,
    /// Mean uncorrelated photons per frame.
    pub singles_rate: f64,
    /// Per-pixel dark-count probability per frame.
    pub dark_prob: f64,
    /// Per-photon detection probability.
    pub efficiency: f64,
}

impl Default for FrameMeta {
    fn default() -> Self {
        Self { pair_rate: 5.0, singles_rate: 0.0, dark_prob: 0.0, efficiency: 1.0 }
    }
}

#[derive(Clone, Debug)]
pub struct FrameStack {
    pub n_frames: usize,
    pub h: usize,
    pub w: usize,
    /// `n_frames * h * w` values in {0, 1}.
    pub frames: Vec<u8>,
    pub meta: FrameMeta,
    pub seed: u64,
}

impl FrameStack {
    pub fn frame(&self, p: usize) -> &[u8] {
        let size = self.h * self.w;
        &self.frames[p * size..(p + 1) * size]
    }
}

fn cumulative(weights: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut acc = 0.0;
    weights
        .map(|w| {
            acc += w.max(0.0);
            acc
        })
        .collect()
}

fn draw(cdf: &[f64], rng: &mut impl Rng) -> usize {
    let total = *cdf.last().expect("non-empty");
    let u = rng.random::<f64>() * total;
    cdf.partition_point(|&c| c <= u).min(cdf.len() - 1)
}

fn poisson_count(rate: f64, rng: &mut impl Rng) -> Result<u64> {
    if rate == 0.0 {
        return Ok(0);
    }
    let d = Poisson::new(rate).map_err(|e| invalid(format!("rate {rate}: {e}")))?;
    Ok(d.sample(rng) as u64)
}

/// Binary single-photon frames: `p + 1` frames of Poisson pair arrivals
/// distributed by `gmap`, uniform singles distributed by `singles`, lossy
/// detection, dark counts, and logical-OR pixels.
pub fn simulate_frames(
    gmap: &CorrelationMap,
    singles: &OutputIntensity,
    p: usize,
    meta: FrameMeta,
    seed: u64,
) -> Result<FrameStack> {
    if p == 0 {
        return Err(invalid("need at least one frame pair"));
    }
    let rates = [meta.pair_rate, meta.singles_rate, meta.dark_prob, meta.efficiency];
    if rates.iter().any(|r| !(r.is_finite() && *r >= 0.0)) || meta.dark_prob > 1.0 || meta.efficiency > 1.0 {
        return Err(invalid("rates must be non-negative, probabilities at most 1"));
    }
    let (h, w) = gmap.out_shape;
    let m = h * w;
    if singles.data.len() != m {
        return Err(dims("singles image does not match the correlation map"));
    }
    let pair_cdf = cumulative(gmap.gamma.transpose().iter().copied());
    if meta.pair_rate > 0.0 && pair_cdf[pair_cdf.len() - 1] <= 0.0 {
        return Err(Error::Degenerate("empty correlation map".into()));
    }
    let single_cdf = cumulative(singles.data.iter().copied());
    if meta.singles_rate > 0.0 && single_cdf[single_cdf.len() - 1] <= 0.0 {
        return Err(Error::Degenerate("empty singles image".into()));
    }
    let mut rng = stream(seed, "frames");
    let n_frames = p + 1;
    let mut frames = vec![0u8; n_frames * m];
    for f in 0..n_frames {
        let frame = &mut frames[f * m..(f + 1) * m];
        for _ in 0..poisson_count(meta.pair_rate, &mut rng)? {
            let idx = draw(&pair_cdf, &mut rng);
            for pix in [idx / m, idx % m] {
                if rng.random::<f64>() < meta.efficiency {
                    frame[pix] = 1;
                }
            }
        }
        for _ in 0..poisson_count(meta.singles_rate, &mut rng)? {
            let pix = draw(&single_cdf, &mut rng);
            if rng.random::<f64>() < meta.efficiency {
                frame[pix] = 1;
            }
        }
        if meta.dark_prob > 0.0 {
            for v in frame.iter_mut() {
                if rng.random::<f64>() < meta.dark_prob {
                    *v = 1;
                }
            }
        }
    }
    Ok(FrameStack { n_frames, h, w, frames, meta, seed })
}

/// Coincidences minus accidentals from consecutive frames; same-pixel
/// entries are zeroed, and optionally nearest neighbors as well.
pub fn estimate_gamma(frames: &FrameStack, zero_neighbors: bool) -> Result<CorrelationMap> {
    if frames.n_frames < 2 {
        return Err(invalid("need at least two frames"));
    }
    let m = frames.h * frames.w;
    let lit: Vec<Vec<usize>> = (0..frames.n_frames)
        .map(|p| frames.frame(p).iter().enumerate().filter(|(_, &v)| v != 0).map(|(i, _)| i).collect())
        .collect();
    let mut counts = vec![0i64; m * m];
    for p in 0..frames.n_frames - 1 {
        for &k in &lit[p] {
            for &l in &lit[p] {
                counts[k * m + l] += 1;
            }
            for &l in &lit[p + 1] {
                counts[k * m + l] -= 1;
            }
        }
    }
    let scale = 1.0 / (frames.n_frames - 1) as f64;
    let mut gamma = DMatrix::from_fn(m, m, |k, l| counts[k * m + l] as f64 * scale);
    for k in 0..m {
        gamma[(k, k)] = 0.0;
    }
    if zero_neighbors {
        for k in 0..m {
            for l in 0..m {
                let (rk, ck) = (k / frames.w, k % frames.w);
                let (rl, cl) = (l / frames.w, l % frames.w);
                if rk.abs_diff(rl) + ck.abs_diff(cl) == 1 {
                    gamma[(k, l)] = 0.0;
                }
            }
        }
    }
    Ok(CorrelationMap { gamma, out_shape: (frames.h, frames.w), diagonal_zeroed: true })
}
