//! Scenario execution and artifact bookkeeping.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::config::{Scenario, ScenarioConfig, StateKind};
use crate::error::{Error, Result};
use crate::formats::{encode_cmx, encode_csv_image, encode_frames, encode_pgm16, read_cmx, sha256_hex, MatrixSidecar};
use crate::ising::{
    build_spin_glass, direct_energy_oracle, energy, exhaustive_ground_state, ground_state_search, save_spin_glass,
    SpinConfig,
};
use crate::measure::{
    classical_intensity, coincidence_map, enhancement, estimate_gamma, pearson, peak_to_mean, separable_coincidence_map,
    similarity, simulate_frames, sum_projection, CorrelationMap, Image,
};
use crate::medium::{make_medium, ScatteringMatrix};
use crate::rng::{derive_seed, stream, PRNG_ID};
use crate::shape::{
    landscape_scan, optimize_classical, optimize_nonclassical, phasor_similarity, random_mask,
    OptimizationTrace, Source, System, TargetKind, TargetSpec,
};
use crate::state::{
    build_double_gaussian, build_mixed_separable, build_pure_separable, gaussian_field, near_diagonal_state,
    schmidt_number, ClassicalField, GaussianStateParams, ModeGrid, PhaseMask, SeparableEnsemble, Topology,
    TwoPhotonState,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    /// Relative to the output directory.
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
    /// Value per count for 16-bit PGM images.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pgm_scale: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub scenario: Scenario,
    pub master_seed: u64,
    pub prng: String,
    pub config: ScenarioConfig,
    pub files: Vec<FileEntry>,
    pub metrics: BTreeMap<String, Value>,
}

pub const MANIFEST_NAME: &str = "manifest.json";

/// Every file written by a run, with its hash.
struct Artifacts {
    dir: PathBuf,
    files: Vec<FileEntry>,
}

impl Artifacts {
    fn new(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Self { dir: dir.to_path_buf(), files: Vec::new() })
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        fs::write(self.dir.join(name), bytes)?;
        self.push(name, bytes, None);
        Ok(())
    }

    fn push(&mut self, name: &str, bytes: &[u8], pgm_scale: Option<f64>) {
        self.files.push(FileEntry {
            path: name.to_string(),
            sha256: sha256_hex(bytes),
            bytes: bytes.len() as u64,
            pgm_scale,
        });
    }

    /// Register a file some other writer already produced.
    fn record(&mut self, path: &Path) -> Result<()> {
        let bytes = fs::read(path)?;
        let name = path
            .strip_prefix(&self.dir)
            .map_err(|_| Error::Config(format!("{} is outside the output directory", path.display())))?;
        self.push(&name.to_string_lossy(), &bytes, None);
        Ok(())
    }

    fn image(&mut self, stem: &str, img: &Image) -> Result<()> {
        let (bytes, scale) = encode_pgm16(img.h, img.w, &img.data);
        let name = format!("{stem}.pgm");
        fs::write(self.dir.join(&name), &bytes)?;
        self.push(&name, &bytes, Some(scale));
        self.write(&format!("{stem}.csv"), &encode_csv_image(img.h, img.w, &img.data))
    }

    fn mask(&mut self, name: &str, mask: &PhaseMask) -> Result<()> {
        let m = DMatrix::from_fn(1, mask.theta.len(), |_, c| Complex64::new(mask.theta[c], 0.0));
        self.write(name, &encode_cmx(&m))
    }

    fn medium(&mut self, name: &str, t: &ScatteringMatrix) -> Result<()> {
        self.write(name, &encode_cmx(&t.t))?;
        let scale = t.scale.unwrap_or_default();
        let side = MatrixSidecar {
            kind: t.kind.name().to_string(),
            seed: t.seed,
            out_shape: [t.out_shape.0, t.out_shape.1],
            in_grid: t.in_grid,
            lambda: scale.lambda,
            focal: scale.focal,
            prng: PRNG_ID.to_string(),
        };
        self.write(&format!("{name}.json"), &serde_json::to_vec_pretty(&side)?)
    }
}

#[derive(Default)]
struct Metrics(BTreeMap<String, Value>);

impl Metrics {
    fn set(&mut self, key: &str, v: impl Into<Value>) {
        self.0.insert(key.to_string(), v.into());
    }
}

/// Two-photon source owned by a scenario.
enum PairSource {
    Entangled(TwoPhotonState),
    Separable(SeparableEnsemble),
}

impl PairSource {
    fn build(kind: StateKind, grid: &ModeGrid, params: &GaussianStateParams, n_q: usize, alpha: f64) -> Result<Self> {
        Ok(match kind {
            StateKind::DoubleGaussian => PairSource::Entangled(build_double_gaussian(grid, params)?),
            StateKind::NearDiagonal => PairSource::Entangled(near_diagonal_state(grid, alpha, Topology::Chain1d)?),
            StateKind::PureSeparable => PairSource::Separable(build_pure_separable(grid, params.sigma_k)?),
            StateKind::MixedSeparable => PairSource::Separable(build_mixed_separable(grid, params, n_q)?),
        })
    }

    fn source(&self) -> Source<'_> {
        match self {
            PairSource::Entangled(s) => Source::Entangled(s),
            PairSource::Separable(e) => Source::Separable(e),
        }
    }

    fn gamma(&self, mask: &PhaseMask, t: &ScatteringMatrix) -> Result<CorrelationMap> {
        match self {
            PairSource::Entangled(s) => coincidence_map(s, mask, t),
            PairSource::Separable(e) => separable_coincidence_map(e, mask, t),
        }
    }
}

fn medium_with_seed(cfg: &ScenarioConfig, grid: &ModeGrid, seed: u64) -> Result<ScatteringMatrix> {
    let mut spec = cfg.medium.clone();
    spec.seed = seed;
    make_medium(&spec, cfg.out_shape(), grid)
}

fn run_seed(cfg: &ScenarioConfig, repeat: usize) -> u64 {
    derive_seed(cfg.master_seed, "repeat", repeat as u64)
}

/// Sum coordinate whose neighborhood measures the enhancement of a target.
fn enhancement_coord(target: &TargetSpec) -> (usize, usize) {
    match target.kind {
        TargetKind::SumCoordinate { coord } => (coord[0], coord[1]),
        TargetKind::PixelPair { k, l } => (k[0] + l[0], k[1] + l[1]),
        TargetKind::ClassicalIntensity { pixel } => (2 * pixel[0], 2 * pixel[1]),
    }
}

fn flat_index(cfg: &ScenarioConfig, p: [usize; 2]) -> usize {
    p[0] * cfg.out_shape[1] + p[1]
}

struct ClassicalRef {
    field: ClassicalField,
    trace: OptimizationTrace,
    intensity: Image,
}

fn classical_reference(cfg: &ScenarioConfig, grid: &ModeGrid, t: &ScatteringMatrix) -> Result<ClassicalRef> {
    let field = gaussian_field(grid, cfg.state.sigma_k)?;
    let sys = System::new(Source::Classical(&field), t)?;
    let target = TargetSpec { kind: TargetKind::ClassicalIntensity { pixel: cfg.center_pixel() }, noise: cfg.noise };
    let seed = derive_seed(cfg.master_seed, "classical", 0);
    let trace = optimize_classical(&sys, &target, &PhaseMask::flat(*grid), &cfg.optimizer, seed)?;
    let intensity = classical_intensity(&field, &trace.final_mask, t)?;
    Ok(ClassicalRef { field, trace, intensity })
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = if v.len() > 1 { v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    (mean, var.sqrt())
}

/// Run a validated scenario, write its artifacts and `manifest.json`.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<Manifest> {
    cfg.validate()?;
    let mut art = Artifacts::new(&cfg.output_dir)?;
    let mut m = Metrics::default();
    match cfg.scenario {
        Scenario::FocusNonclassical => focus_nonclassical(cfg, &mut art, &mut m)?,
        Scenario::FocusClassical => focus_classical(cfg, &mut art, &mut m)?,
        Scenario::ReplayMask => replay_mask(cfg, &mut art, &mut m)?,
        Scenario::SweepSigma => sweep_sigma(cfg, &mut art, &mut m)?,
        Scenario::SweepModes => sweep_modes(cfg, &mut art, &mut m)?,
        Scenario::SeparableCompare => separable_compare(cfg, &mut art, &mut m)?,
        Scenario::Landscape => landscape(cfg, &mut art, &mut m)?,
        Scenario::Ising => ising(cfg, &mut art, &mut m)?,
        Scenario::FramesDemo => frames_demo(cfg, &mut art, &mut m)?,
    }
    let manifest = Manifest {
        tool: format!("{} {}", env!("CARGO_PKG_NAME"), env!("CARGO_PKG_VERSION")),
        scenario: cfg.scenario,
        master_seed: cfg.master_seed,
        prng: PRNG_ID.to_string(),
        config: cfg.clone(),
        files: art.files,
        metrics: m.0,
    };
    fs::write(cfg.output_dir.join(MANIFEST_NAME), serde_json::to_vec_pretty(&manifest)?)?;
    Ok(manifest)
}

fn pair_source(cfg: &ScenarioConfig, grid: &ModeGrid, kind: StateKind) -> Result<PairSource> {
    PairSource::build(kind, grid, &cfg.state.params()?, cfg.state.n_q.unwrap_or(grid.cols), cfg.state.alpha)
}

/// Non-classical optimization shared by focus and replay scenarios.
fn nonclassical_run(
    cfg: &ScenarioConfig,
    art: &mut Artifacts,
    m: &mut Metrics,
) -> Result<(ModeGrid, ScatteringMatrix, PairSource, PhaseMask)> {
    let grid = cfg.mode_grid()?;
    let t = medium_with_seed(cfg, &grid, cfg.medium.seed)?;
    let src = pair_source(cfg, &grid, cfg.state.kind)?;
    let target = cfg.target();
    let sys = System::new(src.source(), &t)?;
    let trace = optimize_nonclassical(&sys, &target, &PhaseMask::flat(grid), &cfg.optimizer, run_seed(cfg, 0))?;
    let coord = enhancement_coord(&target);
    let before = sum_projection(&src.gamma(&PhaseMask::flat(grid), &t)?, false);
    let after = sum_projection(&src.gamma(&trace.final_mask, &t)?, false);
    art.medium("medium.cmx", &t)?;
    art.write("trace.csv", trace.to_csv().as_bytes())?;
    art.mask("mask.cmx", &trace.final_mask)?;
    art.image("gammaplus_before", &before)?;
    art.image("gammaplus_after", &after)?;
    m.set("initial_value", trace.initial_value);
    m.set("final_value", trace.final_value());
    m.set("enhancement_before", enhancement(&before, coord, 1)?);
    m.set("enhancement", enhancement(&after, coord, 1)?);
    m.set("non_decreasing", trace.is_non_decreasing(1e-9));
    m.set("steps", trace.steps.len());
    let mask = trace.final_mask.clone();
    Ok((grid, t, src, mask))
}

fn focus_nonclassical(cfg: &ScenarioConfig, art: &mut Artifacts, m: &mut Metrics) -> Result<()> {
    let (grid, t, _, mask) = nonclassical_run(cfg, art, m)?;
    let field = gaussian_field(&grid, cfg.state.sigma_k)?;
    let replay = classical_intensity(&field, &mask, &t)?;
    art.image("intensity_replay", &replay)?;
    m.set("replay_peak_to_mean", peak_to_mean(&replay, flat_index(cfg, cfg.center_pixel())));
    Ok(())
}

fn focus_classical(cfg: &ScenarioConfig, art: &mut Artifacts, m: &mut Metrics) -> Result<()> {
    let grid = cfg.mode_grid()?;
    let t = medium_with_seed(cfg, &grid, cfg.medium.seed)?;
    let field = gaussian_field(&grid, cfg.state.sigma_k)?;
    let target = cfg.target();
    let pixel = match target.kind {
        TargetKind::ClassicalIntensity { pixel } => pixel,
        _ => return Err(Error::Config("focus-classical needs a classical-intensity target".into())),
    };
    let sys = System::new(Source::Classical(&field), &t)?;
    let trace = optimize_classical(&sys, &target, &PhaseMask::flat(grid), &cfg.optimizer, run_seed(cfg, 0))?;
    let before = classical_intensity(&field, &PhaseMask::flat(grid), &t)?;
    let after = classical_intensity(&field, &trace.final_mask, &t)?;
    art.medium("medium.cmx", &t)?;
    art.write("trace.csv", trace.to_csv().as_bytes())?;
    art.mask("mask.cmx", &trace.final_mask)?;
    art.image("intensity_before", &before)?;
    art.image("intensity_after", &after)?;
    let k = flat_index(cfg, pixel);
    m.set("initial_value", trace.initial_value);
    m.set("final_value", trace.final_value());
    m.set("peak_to_mean_before", peak_to_mean(&before, k));
    m.set("peak_to_mean", peak_to_mean(&after, k));
    m.set("non_decreasing", trace.is_non_decreasing(1e-9));
    Ok(())
}

fn replay_mask(cfg: &ScenarioConfig, art: &mut Artifacts, m: &mut Metrics) -> Result<()> {
    let (grid, t, mask) = match &cfg.mask_path {
        Some(path) => {
            let grid = cfg.mode_grid()?;
            let t = medium_with_seed(cfg, &grid, cfg.medium.seed)?;
            let raw = read_cmx(path)?;
            if raw.nrows() != 1 || raw.ncols() != grid.n_modes() {
                return Err(Error::Format(format!("mask must be 1x{}, found {}x{}", grid.n_modes(), raw.nrows(), raw.ncols())));
            }
            let mask = PhaseMask::new(grid, raw.iter().map(|v| v.re).collect())?;
            art.mask("mask.cmx", &mask)?;
            (grid, t, mask)
        }
        None => {
            let (grid, t, _, mask) = nonclassical_run(cfg, art, m)?;
            (grid, t, mask)
        }
    };
    let field = gaussian_field(&grid, cfg.state.sigma_k)?;
    let replay = classical_intensity(&field, &mask, &t)?;
    let flat = classical_intensity(&field, &PhaseMask::flat(grid), &t)?;
    art.image("intensity_replay", &replay)?;
    let k = flat_index(cfg, cfg.center_pixel());
    m.set("peak_to_mean", peak_to_mean(&replay, k));
    m.set("peak_to_mean_flat", peak_to_mean(&flat, k));
    m.set("max_to_mean", replay.data.iter().cloned().fold(0.0, f64::max) / replay.mean());
    Ok(())
}

fn sweep_sigma(cfg: &ScenarioConfig, art: &mut Artifacts, m: &mut Metrics) -> Result<()> {
    let grid = cfg.mode_grid()?;
    let t = medium_with_seed(cfg, &grid, cfg.medium.seed)?;
    let reference = classical_reference(cfg, &grid, &t)?;
    art.image("intensity_classical", &reference.intensity)?;
    art.mask("mask_classical.cmx", &reference.trace.final_mask)?;
    let target = cfg.target();
    let mut runs = String::from("sigma_r,repeat,similarity\n");
    let mut summary = String::from("sigma_r,schmidt_number,mean,std\n");
    let (mut means, mut stds, mut ks) = (Vec::new(), Vec::new(), Vec::new());
    for &sigma_r in &cfg.sweep.sigma_r {
        let params = GaussianStateParams::new(sigma_r, cfg.state.sigma_k)?;
        let state = build_double_gaussian(&grid, &params)?;
        let sys = System::new(Source::Entangled(&state), &t)?;
        let mut sims = Vec::with_capacity(cfg.repeats);
        for rep in 0..cfg.repeats {
            let trace = optimize_nonclassical(&sys, &target, &PhaseMask::flat(grid), &cfg.optimizer, run_seed(cfg, rep))?;
            let img = classical_intensity(&reference.field, &trace.final_mask, &t)?;
            let s = similarity(&img, &reference.intensity)?;
            runs.push_str(&format!("{sigma_r:e},{rep},{s:.12}\n"));
            sims.push(s);
        }
        let (mean, std) = mean_std(&sims);
        let k = schmidt_number(&params)?;
        summary.push_str(&format!("{sigma_r:e},{k:.6},{mean:.12},{std:.12}\n"));
        means.push(mean);
        stds.push(std);
        ks.push(k);
    }
    art.write("sweep_runs.csv", runs.as_bytes())?;
    art.write("sweep_summary.csv", summary.as_bytes())?;
    m.set("sigma_r", cfg.sweep.sigma_r.clone());
    m.set("schmidt_number", ks);
    m.set("similarity_mean", means);
    m.set("similarity_std", stds);
    m.set("classical_peak_to_mean", peak_to_mean(&reference.intensity, flat_index(cfg, cfg.center_pixel())));
    Ok(())
}

fn sweep_modes(cfg: &ScenarioConfig, art: &mut Artifacts, m: &mut Metrics) -> Result<()> {
    let target = cfg.target();
    let coord = enhancement_coord(&target);
    let mut csv = String::from("n_side,pitch,repeat,enhancement\n");
    let (mut means, mut stds) = (Vec::new(), Vec::new());
    for &n in &cfg.sweep.n_sides {
        let pitch = if cfg.sweep.fixed_aperture {
            cfg.grid.pitch * cfg.grid.n_side as f64 / n as f64
        } else {
            cfg.grid.pitch
        };
        let grid = ModeGrid::square(n, pitch)?;
        let t = medium_with_seed(cfg, &grid, cfg.medium.seed)?;
        let src = pair_source(cfg, &grid, cfg.state.kind)?;
        let sys = System::new(src.source(), &t)?;
        let mut enh = Vec::with_capacity(cfg.repeats);
        for rep in 0..cfg.repeats {
            let trace = optimize_nonclassical(&sys, &target, &PhaseMask::flat(grid), &cfg.optimizer, run_seed(cfg, rep))?;
            let gp = sum_projection(&src.gamma(&trace.final_mask, &t)?, false);
            let e = enhancement(&gp, coord, 1)?;
            csv.push_str(&format!("{n},{pitch:e},{rep},{e:.12}\n"));
            enh.push(e);
        }
        let (mean, std) = mean_std(&enh);
        means.push(mean);
        stds.push(std);
    }
    art.write("modes.csv", csv.as_bytes())?;
    m.set("n_side", cfg.sweep.n_sides.clone());
    m.set("enhancement_mean", means);
    m.set("enhancement_std", stds);
    Ok(())
}

fn separable_compare(cfg: &ScenarioConfig, art: &mut Artifacts, m: &mut Metrics) -> Result<()> {
    let grid = cfg.mode_grid()?;
    let t = medium_with_seed(cfg, &grid, cfg.medium.seed)?;
    let reference = classical_reference(cfg, &grid, &t)?;
    art.image("intensity_classical", &reference.intensity)?;
    art.mask("mask_classical.cmx", &reference.trace.final_mask)?;
    let target = cfg.target();
    let k = flat_index(cfg, cfg.center_pixel());
    m.set("classical_peak_to_mean", peak_to_mean(&reference.intensity, k));
    let mut csv = String::from("source,repeat,similarity,peak_to_mean\n");
    for (name, kind) in [
        ("pure", StateKind::PureSeparable),
        ("mixed", StateKind::MixedSeparable),
        ("entangled", StateKind::DoubleGaussian),
    ] {
        let src = pair_source(cfg, &grid, kind)?;
        let sys = System::new(src.source(), &t)?;
        let (mut sims, mut p2m) = (Vec::new(), Vec::new());
        for rep in 0..cfg.repeats {
            let trace = optimize_nonclassical(&sys, &target, &PhaseMask::flat(grid), &cfg.optimizer, run_seed(cfg, rep))?;
            let img = classical_intensity(&reference.field, &trace.final_mask, &t)?;
            let s = similarity(&img, &reference.intensity)?;
            let p = peak_to_mean(&img, k);
            csv.push_str(&format!("{name},{rep},{s:.12},{p:.12}\n"));
            sims.push(s);
            p2m.push(p);
        }
        let converged = sims.iter().zip(&p2m).filter(|(s, p)| **s > 0.8 && **p > 5.0).count();
        m.set(&format!("{name}_similarity"), sims);
        m.set(&format!("{name}_peak_to_mean"), p2m);
        m.set(&format!("{name}_converged"), converged);
    }
    art.write("separable.csv", csv.as_bytes())?;
    Ok(())
}

fn landscape(cfg: &ScenarioConfig, art: &mut Artifacts, m: &mut Metrics) -> Result<()> {
    let grid = cfg.mode_grid()?;
    let n = grid.n_modes();
    let l = &cfg.landscape;
    let field = ClassicalField::new(grid, nalgebra::DVector::from_element(n, Complex64::new(1.0, 0.0)))?;
    let pairs = TwoPhotonState::from_matrix(grid, DMatrix::identity(n, n), "degenerate pairs")?;
    let c_target = TargetSpec { kind: TargetKind::ClassicalIntensity { pixel: cfg.center_pixel() }, noise: cfg.noise };
    let q_target = cfg.target();
    let mut csv = String::from("medium_seed,classical_maxima,two_photon_maxima,restart_min_similarity\n");
    let (mut cmax, mut qmax, mut sims) = (Vec::new(), Vec::new(), Vec::new());
    for i in 0..l.media {
        let seed = cfg.medium.seed + i as u64;
        let t = medium_with_seed(cfg, &grid, seed)?;
        let csys = System::new(Source::Classical(&field), &t)?;
        let qsys = System::new(Source::Entangled(&pairs), &t)?;
        let base = PhaseMask::flat(grid);
        let cl = landscape_scan(&csys, &base, l.free_modes, l.resolution, &c_target)?;
        let ql = landscape_scan(&qsys, &base, l.free_modes, l.resolution, &q_target)?;
        let mut masks = Vec::with_capacity(cfg.repeats);
        for rep in 0..cfg.repeats {
            let init = random_mask(grid, &mut stream(run_seed(cfg, rep), "initial-mask"));
            masks.push(optimize_classical(&csys, &c_target, &init, &cfg.optimizer, run_seed(cfg, rep))?.final_mask);
        }
        let mut min_sim = 1.0_f64;
        for a in 0..masks.len() {
            for b in a + 1..masks.len() {
                min_sim = min_sim.min(phasor_similarity(&masks[a], &masks[b])?);
            }
        }
        if i == 0 {
            let r = l.resolution;
            art.image("landscape_classical", &Image::new(r, r, cl.values.clone())?)?;
            art.image("landscape_two_photon", &Image::new(r, r, ql.values.clone())?)?;
        }
        csv.push_str(&format!("{seed},{},{},{min_sim:.12}\n", cl.local_maxima, ql.local_maxima));
        cmax.push(cl.local_maxima);
        qmax.push(ql.local_maxima);
        sims.push(min_sim);
    }
    art.write("landscape.csv", csv.as_bytes())?;
    m.set("classical_maxima", cmax);
    m.set("two_photon_maxima", qmax);
    m.set("restart_min_similarity", sims);
    Ok(())
}

fn ising(cfg: &ScenarioConfig, art: &mut Artifacts, m: &mut Metrics) -> Result<()> {
    let grid = cfg.mode_grid()?;
    let t = medium_with_seed(cfg, &grid, cfg.medium.seed)?;
    let target = cfg.target();
    let alpha = cfg.state.alpha;
    let model = build_spin_glass(&t, alpha, &target, Topology::Chain1d)?;
    for path in save_spin_glass(&model, &cfg.output_dir, "spin_glass")? {
        art.record(&path)?;
    }
    let ic = &cfg.ising;
    let found = ground_state_search(&model, ic.restarts, ic.steps, ic.flip_fraction, run_seed(cfg, 0))?;
    let mut csv = String::from("restart,step,energy\n");
    for (r, tr) in found.traces.iter().enumerate() {
        for (s, e) in tr.energies.iter().enumerate() {
            csv.push_str(&format!("{r},{s},{e:e}\n"));
        }
    }
    art.write("ising_trace.csv", csv.as_bytes())?;
    let mut rng = stream(cfg.master_seed, "oracle-check");
    let mut worst = 0.0_f64;
    for _ in 0..32 {
        let s = SpinConfig::random(model.n_spins, &mut rng);
        let oracle = direct_energy_oracle(&t, alpha, &target, &s)?;
        let e = energy(&model, &s)? + model.const_term;
        worst = worst.max((e - oracle).abs() / oracle.abs().max(f64::MIN_POSITIVE));
    }
    m.set("n_spins", model.n_spins);
    m.set("ground_energy", found.energy);
    m.set("ground_state", found.config.sigma.iter().map(|&s| s as i64).collect::<Vec<_>>());
    m.set("oracle_max_rel_dev", worst);
    if model.n_spins <= ic.exhaustive_max {
        let (_, best) = exhaustive_ground_state(&model)?;
        m.set("exhaustive_energy", best);
        m.set("matches_exhaustive", (found.energy - best).abs() <= 1e-9 * best.abs().max(1e-300));
    }
    Ok(())
}

fn frames_demo(cfg: &ScenarioConfig, art: &mut Artifacts, m: &mut Metrics) -> Result<()> {
    let grid = cfg.mode_grid()?;
    let t = medium_with_seed(cfg, &grid, cfg.medium.seed)?;
    let src = pair_source(cfg, &grid, cfg.state.kind)?;
    let truth = src.gamma(&PhaseMask::flat(grid), &t)?;
    let (h, w) = cfg.out_shape();
    let marginal: Vec<f64> = (0..h * w).map(|k| truth.gamma.row(k).sum()).collect();
    let singles = Image::new(h, w, marginal)?;
    let fc = &cfg.frames;
    let stack = simulate_frames(&truth, &singles, fc.frames, fc.meta, derive_seed(cfg.master_seed, "frames", 0))?;
    let est = estimate_gamma(&stack, fc.zero_neighbors)?;
    art.write("frames.frs", &encode_frames(stack.n_frames, h, w, &stack.frames))?;
    let gm = DMatrix::from_fn(h * w, h * w, |k, l| Complex64::new(est.gamma[(k, l)], 0.0));
    art.write("gamma_estimate.cmx", &encode_cmx(&gm))?;
    art.image("gammaplus_true", &sum_projection(&truth, true))?;
    art.image("gammaplus_estimate", &sum_projection(&est, true))?;
    m.set("n_frames", stack.n_frames);
    m.set("off_diagonal_similarity", pearson(&est.off_diagonal(), &truth.off_diagonal())?);
    m.set("medium", json!(cfg.medium.kind.name()));
    Ok(())
}
