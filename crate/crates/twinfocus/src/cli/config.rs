//! Scenario configuration: JSON with defaults, dotted-key overrides and
//! validation.

use std::fmt;
use std::fs;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::measure::FrameMeta;
use crate::medium::{MediumKind, MediumSpec};
use crate::shape::{Noise, OptimizerConfig, TargetKind, TargetSpec};
use crate::state::{GaussianStateParams, ModeGrid};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    FocusNonclassical,
    FocusClassical,
    ReplayMask,
    SweepSigma,
    SweepModes,
    SeparableCompare,
    Landscape,
    Ising,
    FramesDemo,
}

/// Name and one-line description of every scenario.
pub const SCENARIOS: &[(Scenario, &str, &str)] = &[
    (Scenario::FocusNonclassical, "focus-nonclassical", "optimize a coincidence target with a two-photon source"),
    (Scenario::FocusClassical, "focus-classical", "focus coherent light on one output pixel"),
    (Scenario::ReplayMask, "replay-mask", "send coherent light through a mask found with photon pairs"),
    (Scenario::SweepSigma, "sweep-sigma", "similarity to the classical solution versus position correlation width"),
    (Scenario::SweepModes, "sweep-modes", "final enhancement versus number of controlled modes"),
    (Scenario::SeparableCompare, "separable-compare", "pure and mixed separable sources against the classical solution"),
    (Scenario::Landscape, "landscape", "count local maxima over two free phases, classical and two-photon"),
    (Scenario::Ising, "ising", "build the multi-spin Hamiltonian and search its ground state"),
    (Scenario::FramesDemo, "frames-demo", "simulate binary camera frames and estimate the correlation map"),
];

impl Scenario {
    pub fn name(&self) -> &'static str {
        SCENARIOS.iter().find(|s| s.0 == *self).map(|s| s.1).expect("listed")
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SCENARIOS
            .iter()
            .find(|e| e.1 == s)
            .map(|e| e.0)
            .ok_or_else(|| Error::Config(format!("unknown scenario `{s}`")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub n_side: usize,
    /// Macropixel width, meters.
    pub pitch: f64,
    /// Rectangular `[rows, cols]`; overrides `n_side` when set.
    pub shape: Option<[usize; 2]>,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self { n_side: 8, pitch: 296e-6, shape: None }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StateKind {
    DoubleGaussian,
    PureSeparable,
    MixedSeparable,
    NearDiagonal,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StateConfig {
    pub kind: StateKind,
    pub sigma_r: f64,
    pub sigma_k: f64,
    /// Frequency samples per axis of the mixed ensemble; the grid side when unset.
    pub n_q: Option<usize>,
    /// Neighbor amplitude of the near-diagonal state.
    pub alpha: f64,
}

impl Default for StateConfig {
    fn default() -> Self {
        Self { kind: StateKind::DoubleGaussian, sigma_r: 2.9e-5, sigma_k: 8.0e2, n_q: None, alpha: 0.1 }
    }
}

impl StateConfig {
    pub fn params(&self) -> Result<GaussianStateParams> {
        GaussianStateParams::new(self.sigma_r, self.sigma_k)
    }
}

fn default_medium() -> MediumSpec {
    MediumSpec::new(MediumKind::PhaseScreenFourier, 0)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    /// Position correlation widths, meters.
    pub sigma_r: Vec<f64>,
    pub n_sides: Vec<usize>,
    /// Keep the illuminated area fixed when changing the mode count.
    pub fixed_aperture: bool,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            sigma_r: vec![1.6e-6, 4.14e-6, 1.07e-5, 2.78e-5, 7.20e-5, 1.86e-4, 4.83e-4, 1.25e-3],
            n_sides: vec![4, 8, 16],
            fixed_aperture: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LandscapeConfig {
    pub resolution: usize,
    pub free_modes: [usize; 2],
    pub media: usize,
}

impl Default for LandscapeConfig {
    fn default() -> Self {
        Self { resolution: 200, free_modes: [1, 2], media: 10 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IsingConfig {
    pub restarts: usize,
    pub steps: usize,
    pub flip_fraction: f64,
    /// Exhaustive check up to this many spins.
    pub exhaustive_max: usize,
}

impl Default for IsingConfig {
    fn default() -> Self {
        Self { restarts: 5, steps: 400, flip_fraction: 0.1, exhaustive_max: 16 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FramesConfig {
    /// Frame pairs `P`; `P + 1` frames are simulated.
    pub frames: usize,
    pub meta: FrameMeta,
    pub zero_neighbors: bool,
}

impl Default for FramesConfig {
    fn default() -> Self {
        Self { frames: 100_000, meta: FrameMeta::default(), zero_neighbors: false }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub scenario: Scenario,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub state: StateConfig,
    #[serde(default = "default_medium")]
    pub medium: MediumSpec,
    #[serde(default = "default_out_shape")]
    pub out_shape: [usize; 2],
    /// Scenario default when unset.
    #[serde(default)]
    pub target: Option<TargetKind>,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
    /// Measurement noise on every scanned target value.
    #[serde(default)]
    pub noise: Noise,
    #[serde(default = "default_repeats")]
    pub repeats: usize,
    #[serde(default)]
    pub sweep: SweepConfig,
    #[serde(default)]
    pub landscape: LandscapeConfig,
    #[serde(default)]
    pub ising: IsingConfig,
    #[serde(default)]
    pub frames: FramesConfig,
    /// Mask to replay (one-row CMX1 of phases); optimized first when unset.
    #[serde(default)]
    pub mask_path: Option<PathBuf>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
}

fn default_out_shape() -> [usize; 2] {
    [16, 16]
}

fn default_repeats() -> usize {
    5
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

impl ScenarioConfig {
    pub fn out_shape(&self) -> (usize, usize) {
        (self.out_shape[0], self.out_shape[1])
    }

    /// Modulator grid; `ising` defaults to a `1 x n_side` chain and
    /// `landscape` to three modes in a row.
    pub fn mode_grid(&self) -> Result<ModeGrid> {
        let shape = match (self.grid.shape, self.scenario) {
            (Some(s), _) => s,
            (None, Scenario::Ising) => [1, self.grid.n_side],
            (None, Scenario::Landscape) => [1, 3],
            (None, _) => [self.grid.n_side, self.grid.n_side],
        };
        ModeGrid::new(shape[0], shape[1], self.grid.pitch)
    }

    /// Output pixel conjugate to the optical axis.
    pub fn center_pixel(&self) -> [usize; 2] {
        [self.out_shape[0] / 2, self.out_shape[1] / 2]
    }

    /// Configured target, or the scenario default, with the noise applied.
    pub fn target(&self) -> TargetSpec {
        let [h, w] = self.out_shape;
        let c = self.center_pixel();
        let kind = match (self.target, self.scenario) {
            (Some(t), _) => t,
            (None, Scenario::FocusClassical) => TargetKind::ClassicalIntensity { pixel: c },
            (None, Scenario::SweepSigma | Scenario::SeparableCompare) => TargetKind::PixelPair { k: c, l: c },
            (None, _) => TargetKind::SumCoordinate { coord: [h, w] },
        };
        TargetSpec { kind, noise: self.noise }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        let grid = self.mode_grid().map_err(|e| Error::Config(e.to_string()))?;
        self.state.params().map_err(|e| Error::Config(e.to_string()))?;
        self.medium.validate().map_err(|e| Error::Config(e.to_string()))?;
        if self.out_shape.contains(&0) {
            return bad("out_shape entries must be positive".into());
        }
        self.target().pairs(self.out_shape()).map_err(|e| Error::Config(e.to_string()))?;
        if self.optimizer.steps == 0 {
            return bad("optimizer.steps must be at least 1".into());
        }
        if !(self.optimizer.fraction > 0.0 && self.optimizer.fraction < 1.0) {
            return bad(format!("optimizer.fraction must lie in (0, 1), got {}", self.optimizer.fraction));
        }
        if let Noise::Gaussian { sigma_rel } = self.noise {
            if !(sigma_rel >= 0.0 && sigma_rel.is_finite()) {
                return bad(format!("noise sigma_rel must be non-negative, got {sigma_rel}"));
            }
        }
        if !(0.0..=1.0).contains(&self.state.alpha) {
            return bad(format!("state.alpha must lie in [0, 1], got {}", self.state.alpha));
        }
        if self.state.n_q == Some(0) {
            return bad("state.n_q must be positive".into());
        }
        if self.repeats == 0 {
            return bad("repeats must be at least 1".into());
        }
        match self.scenario {
            Scenario::SweepSigma => {
                if self.sweep.sigma_r.is_empty() || self.sweep.sigma_r.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
                    return bad("sweep.sigma_r must be a non-empty list of positive widths".into());
                }
            }
            Scenario::SweepModes => {
                if self.sweep.n_sides.is_empty() || self.sweep.n_sides.contains(&0) {
                    return bad("sweep.n_sides must be a non-empty list of positive sizes".into());
                }
            }
            Scenario::Landscape => {
                let l = &self.landscape;
                if l.media == 0 || l.resolution < 16 {
                    return bad("landscape needs media >= 1 and resolution >= 16".into());
                }
                if grid.n_modes() < 3 || l.free_modes[0] == l.free_modes[1] || l.free_modes.iter().any(|&m| m >= grid.n_modes()) {
                    return bad(format!("landscape.free_modes {:?} invalid for {} modes", l.free_modes, grid.n_modes()));
                }
            }
            Scenario::Ising => {
                if grid.rows != 1 {
                    return bad("ising needs a single-row grid".into());
                }
                let i = &self.ising;
                if i.restarts == 0 || !(i.flip_fraction > 0.0 && i.flip_fraction <= 1.0) {
                    return bad("ising needs restarts >= 1 and flip_fraction in (0, 1]".into());
                }
            }
            Scenario::FramesDemo if self.frames.frames == 0 => {
                return bad("frames.frames must be at least 1".into());
            }
            _ => {}
        }
        Ok(())
    }
}

/// Set `a.b.c = value` inside a JSON object, creating objects on the way.
/// The value is parsed as JSON when possible and kept as a string otherwise.
pub fn apply_override(root: &mut Value, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override `{assignment}` is not key=value")))?;
    if key.is_empty() || key.split('.').any(str::is_empty) {
        return Err(Error::Config(format!("bad override key `{key}`")));
    }
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut node = root;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let obj = match node {
            Value::Object(map) => map,
            other @ Value::Null => {
                *other = Value::Object(Default::default());
                other.as_object_mut().expect("object")
            }
            _ => return Err(Error::Config(format!("override `{key}` descends into a non-object"))),
        };
        if i + 1 == parts.len() {
            obj.insert(part.to_string(), value);
            break;
        }
        node = obj.entry(part.to_string()).or_insert(Value::Null);
    }
    Ok(())
}

/// Inline JSON when the source starts with `{`, a file path otherwise.
pub fn read_config_source(source: &str) -> Result<Value> {
    let text = if source.trim_start().starts_with('{') { source.to_string() } else { fs::read_to_string(source)? };
    let v: Value = serde_json::from_str(&text)?;
    if !v.is_object() {
        return Err(Error::Config("config must be a JSON object".into()));
    }
    Ok(v)
}

pub fn parse_config(source: &str) -> Result<ScenarioConfig> {
    from_value(read_config_source(source)?)
}

pub fn from_value(v: Value) -> Result<ScenarioConfig> {
    if v.get("scenario").is_none() {
        return Err(Error::Config("missing `scenario`".into()));
    }
    let cfg: ScenarioConfig = serde_json::from_value(v).map_err(|e| Error::Config(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

/// Assemble a config from the command-line pieces. `scenario`, `seed` and
/// `out` take precedence over the file, overrides over everything.
pub fn load_config(
    source: Option<&str>,
    scenario: Option<&str>,
    seed: Option<u64>,
    out: Option<PathBuf>,
    overrides: &[String],
) -> Result<ScenarioConfig> {
    let mut v = match source {
        Some(s) => read_config_source(s)?,
        None => Value::Object(Default::default()),
    };
    let map = v.as_object_mut().expect("object");
    if let Some(s) = scenario {
        map.insert("scenario".into(), Value::String(s.parse::<Scenario>()?.name().into()));
    }
    if let Some(s) = seed {
        map.insert("master_seed".into(), s.into());
    }
    if let Some(o) = out {
        map.insert("output_dir".into(), Value::String(o.to_string_lossy().into_owned()));
    }
    for o in overrides {
        apply_override(&mut v, o)?;
    }
    from_value(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shape::PhaseScheme;

    #[test]
    fn minimal_config_gets_defaults() {
        let cfg = parse_config(r#"{"scenario":"focus-classical"}"#).unwrap();
        assert_eq!(cfg.grid.n_side, 8);
        assert_eq!(cfg.grid.pitch, 296e-6);
        assert_eq!((cfg.state.sigma_r, cfg.state.sigma_k), (2.9e-5, 8.0e2));
        assert_eq!(cfg.out_shape, [16, 16]);
        assert_eq!(cfg.optimizer.fraction, 0.5);
        assert_eq!(cfg.optimizer.scheme, PhaseScheme::Fit(10));
        assert_eq!(cfg.target().kind, TargetKind::ClassicalIntensity { pixel: [8, 8] });
    }

    #[test]
    fn sigma_sweep_list_is_accepted() {
        let cfg = parse_config(
            r#"{"scenario":"sweep-sigma","sweep":{"sigma_r":[1.6e-6,4.14e-6,1.07e-5,2.78e-5,7.2e-5,1.86e-4,4.83e-4,1.25e-3]}}"#,
        )
        .unwrap();
        assert_eq!(cfg.sweep.sigma_r.len(), 8);
    }

    #[test]
    fn rejects_bad_configs() {
        let err = |s: &str| parse_config(s).unwrap_err().to_string();
        assert!(err(r#"{"scenario":"focus-classical","grid":{"pitch":-1e-4}}"#).contains("pitch"));
        assert!(err(r#"{"scenario":"focus-classical","colour":1}"#).contains("colour"));
        assert!(err(r#"{"grid":{}}"#).contains("scenario"));
        assert!(err(r#"{"scenario":"warp"}"#).contains("warp"));
        assert!(err(r#"{"scenario":"focus-nonclassical","target":{"kind":"pixel-pair","k":[0,0],"l":[16,0]}}"#)
            .contains("outside"));
    }

    #[test]
    fn overrides_reach_nested_keys() {
        let cfg = load_config(
            Some(r#"{"scenario":"focus-classical"}"#),
            Some("focus-nonclassical"),
            Some(9),
            None,
            &["grid.n_side=4".into(), "optimizer.scheme=6pt".into(), "medium.kind=dft".into()],
        )
        .unwrap();
        assert_eq!(cfg.scenario, Scenario::FocusNonclassical);
        assert_eq!(cfg.master_seed, 9);
        assert_eq!(cfg.grid.n_side, 4);
        assert_eq!(cfg.optimizer.scheme, PhaseScheme::SixPoint);
        assert_eq!(cfg.medium.kind, MediumKind::Dft);
        assert!(load_config(None, Some("ising"), None, None, &["nokey".into()]).is_err());
    }

    #[test]
    fn scenario_names_round_trip() {
        for (s, name, _) in SCENARIOS {
            assert_eq!(name.parse::<Scenario>().unwrap(), *s);
            assert_eq!(serde_json::to_value(s).unwrap(), Value::String(name.to_string()));
        }
    }
}
