//! Multi-spin Hamiltonian induced by binary phase masks acting on a
//! near-diagonal two-photon state.
//!
//! With phases restricted to {0, pi/2}, `eps_n = e^{i theta_n}` satisfies
//! `eps_n^2 = sigma_n`, and the pair amplitude for output pixels `(k, l)`
//! becomes a polynomial in the spins:
//! `c0 + sum_n c1_n sigma_n + sum_n c2_n sigma_n sigma_{n+1}`. Its squared
//! modulus, summed over the target's pixel pairs, gives the 1- to 4-spin
//! couplings.

use std::path::Path;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{dims, invalid, Result};
use crate::formats::{read_cmx, write_cmx};
use crate::measure::coincidence_map;
use crate::medium::ScatteringMatrix;
use crate::rng::{derive_seed, stream};
use crate::shape::{binary_search, spins_to_mask, SpinTrace, TargetSpec};
use crate::state::{near_diagonal_state, PhaseMask, Topology};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpinConfig {
    pub sigma: Vec<i8>,
}

impl SpinConfig {
    pub fn new(sigma: Vec<i8>) -> Result<Self> {
        if sigma.iter().any(|&s| s != 1 && s != -1) {
            return Err(invalid("spins must be +1 or -1"));
        }
        Ok(Self { sigma })
    }

    pub fn all_up(n: usize) -> Self {
        Self { sigma: vec![1; n] }
    }

    /// Configuration number `bits` of `2^n`, bit `i` set meaning spin down.
    pub fn from_bits(n: usize, bits: u64) -> Self {
        Self { sigma: (0..n).map(|i| if bits >> i & 1 == 1 { -1 } else { 1 }).collect() }
    }

    pub fn random(n: usize, rng: &mut impl Rng) -> Self {
        Self { sigma: (0..n).map(|_| if rng.random::<bool>() { 1 } else { -1 }).collect() }
    }

    pub fn len(&self) -> usize {
        self.sigma.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sigma.is_empty()
    }
}

/// `H = -1/2 [sum K_n s_n + sum_{n<m} J_nm s_n s_m + sum L s s s + sum Q s s s s]`.
///
/// `J` is stored symmetric and each unordered pair enters the energy once.
/// `lambda` entries are `(n, m, m+1)` and `q` entries `(n, m, n+1, m+1)`;
/// repeated indices are kept and evaluated as plain products.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpinGlassModel {
    pub n_spins: usize,
    /// `energy + const_term = -target`.
    pub const_term: f64,
    pub k: Vec<f64>,
    #[serde(skip, default = "empty_couplings")]
    pub j: DMatrix<f64>,
    pub lambda: Vec<([usize; 3], f64)>,
    pub q: Vec<([usize; 4], f64)>,
    pub alpha: f64,
    pub target: TargetSpec,
}

fn empty_couplings() -> DMatrix<f64> {
    DMatrix::zeros(0, 0)
}

fn pair_polynomial(t: &ScatteringMatrix, k: usize, l: usize, alpha: f64, z: f64) -> (Complex64, Vec<Complex64>, Vec<Complex64>) {
    let n = t.n_in();
    let u: Vec<Complex64> = (0..n).map(|m| t.t[(k, m)] * t.t[(l, m)] / z).collect();
    let v: Vec<Complex64> = (0..n.saturating_sub(1))
        .map(|m| (t.t[(k, m)] * t.t[(l, m + 1)] + t.t[(k, m + 1)] * t.t[(l, m)]) / z)
        .collect();
    let half = Complex64::new(0.0, alpha / 2.0);
    let c0 = half * v.iter().sum::<Complex64>();
    let c1 = (0..n)
        .map(|m| {
            let right = if m + 1 < n { v[m] } else { Complex64::new(0.0, 0.0) };
            let left = if m > 0 { v[m - 1] } else { Complex64::new(0.0, 0.0) };
            u[m] + alpha / 2.0 * (right + left)
        })
        .collect();
    let c2 = v.iter().map(|&x| -half * x).collect();
    (c0, c1, c2)
}

pub fn build_spin_glass(t: &ScatteringMatrix, alpha: f64, target: &TargetSpec, topology: Topology) -> Result<SpinGlassModel> {
    if topology != Topology::Chain1d {
        return Err(invalid("the spin-glass builder supports the chain-1d topology only"));
    }
    if !(0.0..=1.0).contains(&alpha) {
        return Err(invalid(format!("alpha must lie in [0, 1], got {alpha}")));
    }
    if !target.is_coincidence() {
        return Err(invalid("spin-glass targets must be coincidence targets"));
    }
    let n = t.n_in();
    let z = (n as f64 + 2.0 * alpha * alpha * n.saturating_sub(1) as f64).sqrt();
    let nb = n.saturating_sub(1);
    let mut constant = 0.0;
    let mut k_vec = vec![0.0; n];
    let mut j = DMatrix::<f64>::zeros(n, n);
    let mut lam = DMatrix::<f64>::zeros(n, nb);
    let mut quad = DMatrix::<f64>::zeros(nb, nb);
    for (k, l) in target.pairs(t.out_shape)? {
        let (c0, c1, c2) = pair_polynomial(t, k, l, alpha, z);
        constant += c0.norm_sqr() + c1.iter().map(|c| c.norm_sqr()).sum::<f64>() + c2.iter().map(|c| c.norm_sqr()).sum::<f64>();
        for a in 0..n {
            k_vec[a] += 4.0 * (c0.conj() * c1[a]).re;
            for b in a + 1..n {
                let v = 4.0 * (c1[a] * c1[b].conj()).re;
                j[(a, b)] += v;
                j[(b, a)] += v;
            }
            for m in 0..nb {
                lam[(a, m)] += 4.0 * (c1[a] * c2[m].conj()).re;
            }
        }
        for m in 0..nb {
            let v = 4.0 * (c0.conj() * c2[m]).re;
            j[(m, m + 1)] += v;
            j[(m + 1, m)] += v;
            for p in 0..nb {
                if p != m {
                    quad[(m, p)] += 2.0 * (c2[m] * c2[p].conj()).re;
                }
            }
        }
    }
    let mut lambda = Vec::new();
    for a in 0..n {
        for m in 0..nb {
            if lam[(a, m)] != 0.0 {
                lambda.push(([a, m, m + 1], lam[(a, m)]));
            }
        }
    }
    let mut q = Vec::new();
    for m in 0..nb {
        for p in 0..nb {
            if quad[(m, p)] != 0.0 {
                q.push(([m, p, m + 1, p + 1], quad[(m, p)]));
            }
        }
    }
    Ok(SpinGlassModel { n_spins: n, const_term: -constant, k: k_vec, j, lambda, q, alpha, target: *target })
}

pub fn energy(model: &SpinGlassModel, s: &SpinConfig) -> Result<f64> {
    if s.len() != model.n_spins {
        return Err(dims(format!("{} spins for a {}-spin model", s.len(), model.n_spins)));
    }
    let sg: Vec<f64> = s.sigma.iter().map(|&x| x as f64).collect();
    let mut total: f64 = model.k.iter().zip(&sg).map(|(k, x)| k * x).sum();
    for a in 0..model.n_spins {
        for b in a + 1..model.n_spins {
            total += model.j[(a, b)] * sg[a] * sg[b];
        }
    }
    total += model.lambda.iter().map(|([a, b, c], v)| v * sg[*a] * sg[*b] * sg[*c]).sum::<f64>();
    total += model.q.iter().map(|([a, b, c, d], v)| v * sg[*a] * sg[*b] * sg[*c] * sg[*d]).sum::<f64>();
    Ok(-0.5 * total)
}

/// `-target` from direct propagation of the near-diagonal state through the
/// binary mask encoded by `s`.
pub fn direct_energy_oracle(t: &ScatteringMatrix, alpha: f64, target: &TargetSpec, s: &SpinConfig) -> Result<f64> {
    if !target.is_coincidence() {
        return Err(invalid("spin-glass targets must be coincidence targets"));
    }
    if s.len() != t.n_in() {
        return Err(dims("spin count differs from mode count"));
    }
    let state = near_diagonal_state(&t.in_grid, alpha, Topology::Chain1d)?;
    let mask: PhaseMask = spins_to_mask(t.in_grid, &s.sigma)?;
    let g = coincidence_map(&state, &mask, t)?;
    Ok(-target.pairs(t.out_shape)?.iter().map(|&(k, l)| g.gamma[(k, l)]).sum::<f64>())
}

/// Lowest energy by enumeration; limited to 24 spins.
pub fn exhaustive_ground_state(model: &SpinGlassModel) -> Result<(SpinConfig, f64)> {
    let n = model.n_spins;
    if n > 24 {
        return Err(invalid("exhaustive search is limited to 24 spins"));
    }
    let mut best = (SpinConfig::all_up(n), f64::INFINITY);
    for bits in 0..1u64 << n {
        let s = SpinConfig::from_bits(n, bits);
        let e = energy(model, &s)?;
        if e < best.1 {
            best = (s, e);
        }
    }
    Ok(best)
}

#[derive(Clone, Debug)]
pub struct GroundStateResult {
    pub config: SpinConfig,
    pub energy: f64,
    pub traces: Vec<SpinTrace>,
}

/// Best configuration over independent greedy flip searches.
pub fn ground_state_search(
    model: &SpinGlassModel,
    restarts: usize,
    steps: usize,
    flip_fraction: f64,
    seed: u64,
) -> Result<GroundStateResult> {
    if restarts == 0 {
        return Err(invalid("restarts must be at least 1"));
    }
    let mut traces = Vec::with_capacity(restarts);
    let mut best: Option<(SpinConfig, f64)> = None;
    for r in 0..restarts {
        let mut rng = stream(derive_seed(seed, "restart", r as u64), "spins");
        let initial = SpinConfig::random(model.n_spins, &mut rng);
        let trace = binary_search(initial.sigma, steps, flip_fraction, &mut rng, |sigma| {
            energy(model, &SpinConfig { sigma: sigma.to_vec() })
        })?;
        let e = trace.final_energy();
        if best.as_ref().is_none_or(|b| e < b.1) {
            best = Some((SpinConfig { sigma: trace.sigma.clone() }, e));
        }
        traces.push(trace);
    }
    let (config, energy) = best.expect("at least one restart");
    Ok(GroundStateResult { config, energy, traces })
}

/// Writes `<stem>.json` and the dense couplings as `<stem>.J.cmx`.
pub fn save_spin_glass(model: &SpinGlassModel, dir: &Path, stem: &str) -> Result<Vec<std::path::PathBuf>> {
    let json = dir.join(format!("{stem}.json"));
    let cmx = dir.join(format!("{stem}.J.cmx"));
    std::fs::write(&json, serde_json::to_vec_pretty(model)?)?;
    write_cmx(&cmx, &model.j.map(|v| Complex64::new(v, 0.0)))?;
    Ok(vec![json, cmx])
}

pub fn load_spin_glass(dir: &Path, stem: &str) -> Result<SpinGlassModel> {
    let mut model: SpinGlassModel = serde_json::from_slice(&std::fs::read(dir.join(format!("{stem}.json")))?)?;
    let j = read_cmx(&dir.join(format!("{stem}.J.cmx")))?;
    if j.nrows() != model.n_spins || j.ncols() != model.n_spins {
        return Err(dims("coupling matrix does not match the spin count"));
    }
    model.j = j.map(|v| v.re);
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::medium::{make_medium, MediumKind, MediumSpec};
    use crate::shape::TargetKind;
    use crate::state::ModeGrid;

    fn setup(n_side: (usize, usize), out: (usize, usize), seed: u64) -> ScatteringMatrix {
        let g = ModeGrid::new(n_side.0, n_side.1, 1e-4).unwrap();
        make_medium(&MediumSpec::new(MediumKind::IidComplex, seed), out, &g).unwrap()
    }

    fn empty_model(n: usize) -> SpinGlassModel {
        SpinGlassModel {
            n_spins: n,
            const_term: 0.0,
            k: vec![0.0; n],
            j: DMatrix::zeros(n, n),
            lambda: vec![],
            q: vec![],
            alpha: 0.0,
            target: TargetSpec::new(TargetKind::SumCoordinate { coord: [0, 0] }),
        }
    }

    #[test]
    fn epsilon_product_identity() {
        for (tn, tm) in [(0.0, 0.0), (0.0, 1.0), (1.0, 0.0), (1.0, 1.0)] {
            let e = |t: f64| Complex64::from_polar(1.0, t * std::f64::consts::FRAC_PI_2);
            let s = |t: f64| if t == 0.0 { 1.0 } else { -1.0 };
            let lhs = e(tn) * e(tm);
            let rhs = Complex64::new(0.5 * (s(tn) + s(tm)), 0.5 * (1.0 - s(tn) * s(tm)));
            assert!((lhs - rhs).norm() < 1e-15);
            assert!((e(tn) * e(tn) - s(tn)).norm() < 1e-15);
        }
    }

    #[test]
    fn hand_evaluated_energies() {
        let m = empty_model(2);
        assert_eq!(energy(&m, &SpinConfig::all_up(2)).unwrap(), 0.0);
        let mut m = empty_model(2);
        m.j[(0, 1)] = 2.0;
        m.j[(1, 0)] = 2.0;
        assert_eq!(energy(&m, &SpinConfig::all_up(2)).unwrap(), -1.0);
        assert!(energy(&m, &SpinConfig::all_up(3)).is_err());
    }

    #[test]
    fn two_spin_model_matches_oracle_on_all_configs() {
        let t = setup((1, 2), (3, 3), 1);
        let target = TargetSpec::new(TargetKind::SumCoordinate { coord: [2, 2] });
        let m = build_spin_glass(&t, 0.1, &target, Topology::Chain1d).unwrap();
        for bits in 0..4 {
            let s = SpinConfig::from_bits(2, bits);
            let oracle = direct_energy_oracle(&t, 0.1, &target, &s).unwrap();
            let e = energy(&m, &s).unwrap();
            assert!((e + m.const_term - oracle).abs() < 1e-12 * oracle.abs(), "{e} {oracle}");
        }
    }

    #[test]
    fn zero_coupling_leaves_only_pair_terms() {
        let t = setup((2, 2), (3, 3), 2);
        let target = TargetSpec::new(TargetKind::PixelPair { k: [0, 1], l: [2, 0] });
        let m = build_spin_glass(&t, 0.0, &target, Topology::Chain1d).unwrap();
        assert!(m.k.iter().all(|&v| v == 0.0));
        assert!(m.lambda.is_empty() && m.q.is_empty());
        // J_nm = 4 Re(u_n u_m^*) / N with u_n = t_kn t_ln
        let (k, l) = (1, 6);
        for a in 0..4 {
            for b in a + 1..4 {
                let ua = t.t[(k, a)] * t.t[(l, a)];
                let ub = t.t[(k, b)] * t.t[(l, b)];
                assert!((m.j[(a, b)] - 4.0 * (ua * ub.conj()).re / 4.0).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn sparsity_follows_chain_structure() {
        let t = setup((1, 5), (2, 3), 3);
        let target = TargetSpec::new(TargetKind::SumCoordinate { coord: [1, 2] });
        let m = build_spin_glass(&t, 0.1, &target, Topology::Chain1d).unwrap();
        assert!(m.q.iter().all(|([a, b, c, d], _)| *c == a + 1 && *d == b + 1 && a != b));
        assert!(m.lambda.iter().all(|([_, b, c], _)| *c == b + 1));
        assert!(!m.q.is_empty() && !m.lambda.is_empty());
    }

    #[test]
    fn sign_flip_changes_only_odd_terms() {
        let t = setup((1, 4), (2, 2), 4);
        let target = TargetSpec::new(TargetKind::SumCoordinate { coord: [1, 1] });
        let m = build_spin_glass(&t, 0.1, &target, Topology::Chain1d).unwrap();
        let s = SpinConfig::new(vec![1, -1, -1, 1]).unwrap();
        let neg = SpinConfig::new(s.sigma.iter().map(|x| -x).collect()).unwrap();
        let sg: Vec<f64> = s.sigma.iter().map(|&x| x as f64).collect();
        let odd: f64 = m.k.iter().zip(&sg).map(|(k, x)| k * x).sum::<f64>()
            + m.lambda.iter().map(|([a, b, c], v)| v * sg[*a] * sg[*b] * sg[*c]).sum::<f64>();
        let diff = energy(&m, &neg).unwrap() - energy(&m, &s).unwrap();
        assert!((diff - odd).abs() < 1e-12 * odd.abs().max(1e-30));
    }

    #[test]
    fn other_topologies_rejected() {
        let t = setup((2, 2), (2, 2), 5);
        let target = TargetSpec::new(TargetKind::SumCoordinate { coord: [1, 1] });
        assert!(build_spin_glass(&t, 0.1, &target, Topology::Grid2d).is_err());
        assert!(build_spin_glass(&t, 1.5, &target, Topology::Chain1d).is_err());
        let intensity = TargetSpec::new(TargetKind::ClassicalIntensity { pixel: [0, 0] });
        assert!(build_spin_glass(&t, 0.1, &intensity, Topology::Chain1d).is_err());
    }

    #[test]
    fn decoupled_spins_align_with_fields() {
        let mut m = empty_model(5);
        m.k = vec![1.0, -2.0, 0.5, -0.1, 3.0];
        let r = ground_state_search(&m, 3, 60, 0.25, 7).unwrap();
        assert_eq!(r.config.sigma, vec![1, -1, 1, -1, 1]);
        assert!(r.traces.iter().all(|t| t.energies.windows(2).all(|w| w[1] <= w[0])));
    }

    #[test]
    fn small_systems_reach_exhaustive_minimum() {
        let mut hits = 0;
        for seed in 0..20u64 {
            let t = setup((2, 2), (3, 3), 100 + seed);
            let target = TargetSpec::new(TargetKind::SumCoordinate { coord: [2, 2] });
            let m = build_spin_glass(&t, 0.1, &target, Topology::Chain1d).unwrap();
            let (_, best) = exhaustive_ground_state(&m).unwrap();
            let found = ground_state_search(&m, 4, 40, 0.25, seed).unwrap();
            if (found.energy - best).abs() <= 1e-12 * best.abs() {
                hits += 1;
            }
        }
        assert!(hits >= 16, "{hits}");
    }

    #[test]
    fn bundle_round_trip() {
        let t = setup((1, 3), (2, 2), 6);
        let target = TargetSpec::new(TargetKind::SumCoordinate { coord: [1, 1] });
        let m = build_spin_glass(&t, 0.05, &target, Topology::Chain1d).unwrap();
        let dir = tempfile::tempdir().unwrap();
        save_spin_glass(&m, dir.path(), "model").unwrap();
        assert_eq!(load_spin_glass(dir.path(), "model").unwrap(), m);
    }
}
