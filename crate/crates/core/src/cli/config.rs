use crate::acoustics::AcousticConstants;
use crate::error::{Error, Result};
use crate::framework::{SolverConfig, FEASIBILITY_FACTOR};
use crate::grid2d::SegmentKind;
use crate::magnet::{CoilSpec, ExcitationProfile};
use serde::Deserialize;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProblemKind {
    Eit,
    Magnet,
    Acoustic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DomainChoice {
    #[default]
    UnitSquare,
    Disk,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSection {
    pub kind: ProblemKind,
    pub nx: usize,
    pub ny: usize,
    #[serde(default)]
    pub domain: DomainChoice,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Inclusion {
    pub center: [f64; 2],
    pub radius: f64,
    pub value: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EitSection {
    #[serde(default = "default_electrodes")]
    pub electrodes: usize,
    #[serde(default = "default_coverage")]
    pub coverage: f64,
    #[serde(default = "default_contact")]
    pub contact_impedance: f64,
    /// CSV with `start,end,z` rows; replaces the uniform layout.
    pub layout_file: Option<PathBuf>,
    #[serde(default = "default_patterns")]
    pub patterns: usize,
    #[serde(default = "one")]
    pub background: f64,
    #[serde(default)]
    pub inclusions: Vec<Inclusion>,
}

impl Default for EitSection {
    fn default() -> Self {
        Self {
            electrodes: default_electrodes(),
            coverage: default_coverage(),
            contact_impedance: default_contact(),
            layout_file: None,
            patterns: default_patterns(),
            background: 1.0,
            inclusions: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CurveTruth {
    /// μ̄ − (μ̄ − μ̲)·s/H_max.
    #[default]
    Saturating,
    Flat,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MagnetSection {
    #[serde(default = "default_amplitudes")]
    pub amplitudes: Vec<f64>,
    #[serde(default = "default_profile")]
    pub profile: ExcitationProfile,
    #[serde(default = "default_knots")]
    pub knots: usize,
    #[serde(default = "default_mu_bounds")]
    pub mu_bounds: [f64; 2],
    #[serde(default)]
    pub truth: CurveTruth,
    #[serde(default = "two")]
    pub flat_value: f64,
    #[serde(default = "default_coil")]
    pub coil: CoilSpec,
}

impl Default for MagnetSection {
    fn default() -> Self {
        Self {
            amplitudes: default_amplitudes(),
            profile: default_profile(),
            knots: default_knots(),
            mu_bounds: default_mu_bounds(),
            truth: CurveTruth::default(),
            flat_value: 2.0,
            coil: default_coil(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MicRing {
    pub center: [f64; 2],
    pub radius: f64,
    pub count: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceKind {
    /// One-node monopole.
    #[default]
    Point,
    /// Monopole plateau on a disk.
    Plateau,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceSpec {
    #[serde(default)]
    pub kind: SourceKind,
    pub center: [f64; 2],
    #[serde(default)]
    pub radius: f64,
    #[serde(default = "one")]
    pub amplitude: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundarySegmentSpec {
    pub kind: SegmentKind,
    pub start: f64,
    pub end: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AcousticSection {
    #[serde(default = "one")]
    pub rho0: f64,
    #[serde(default = "one")]
    pub c0: f64,
    #[serde(default = "default_omega")]
    pub omega: f64,
    pub kappa: Option<f64>,
    pub ring: Option<MicRing>,
    /// CSV with `x1,x2` rows; replaces the ring.
    pub mic_file: Option<PathBuf>,
    pub bump_radius: Option<f64>,
    #[serde(default)]
    pub skip_f: bool,
    #[serde(default)]
    pub skip_g: bool,
    /// Arclength segments (absorbing / rigid); all-absorbing when empty.
    #[serde(default)]
    pub boundary: Vec<BoundarySegmentSpec>,
    #[serde(default = "default_sources")]
    pub sources: Vec<SourceSpec>,
    /// ρ = rho_factor · sparsity norm of the true sources when ρ is not given.
    #[serde(default = "default_rho_factor")]
    pub rho_factor: f64,
}

impl Default for AcousticSection {
    fn default() -> Self {
        Self {
            rho0: 1.0,
            c0: 1.0,
            omega: default_omega(),
            kappa: None,
            ring: None,
            mic_file: None,
            bump_radius: None,
            skip_f: false,
            skip_g: false,
            boundary: Vec::new(),
            sources: default_sources(),
            rho_factor: default_rho_factor(),
        }
    }
}

impl AcousticSection {
    pub fn constants(&self) -> AcousticConstants {
        AcousticConstants { rho0: self.rho0, c0: self.c0, omega: self.omega, kappa: self.kappa }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSection {
    pub deltas: Vec<f64>,
    /// Noise level of a single solve; the smallest sweep δ when absent.
    pub delta: Option<f64>,
    #[serde(default = "default_seed")]
    pub base_seed: u64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegularizationSection {
    pub alpha0: f64,
    pub c0: f64,
    pub tau: f64,
    /// Radius of the R̃ ball; problem-specific default when absent.
    pub rho: Option<f64>,
    /// Box on the parameters (EIT and magnet).
    pub lower: Option<f64>,
    pub upper: Option<f64>,
    /// Fixed α for sweeps; bypasses the parameter-choice rule.
    pub alpha: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub problem: ProblemSection,
    #[serde(default)]
    pub eit: EitSection,
    #[serde(default)]
    pub magnet: MagnetSection,
    #[serde(default)]
    pub acoustic: AcousticSection,
    pub noise: NoiseSection,
    pub regularization: RegularizationSection,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub output: OutputSection,
}

impl RunConfig {
    /// Parses TOML text; relative file paths are resolved against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let mut c: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        for p in [c.eit.layout_file.as_mut(), c.acoustic.mic_file.as_mut()].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        let d = &self.noise.deltas;
        if d.is_empty() {
            return bad("noise.deltas must not be empty".into());
        }
        if d.iter().any(|v| !(*v > 0.0 && v.is_finite())) || d.windows(2).any(|w| w[1] >= w[0]) {
            return bad(format!("noise.deltas must be positive and strictly decreasing, got {d:?}"));
        }
        if let Some(v) = self.noise.delta {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("noise.delta must be positive, got {v}"));
            }
        }
        let r = &self.regularization;
        if !(r.tau > 1.0) || !r.tau.is_finite() {
            return bad(format!("regularization.tau must be > 1, got {}", r.tau));
        }
        for (name, v) in [("alpha0", Some(r.alpha0)), ("c0", Some(r.c0)), ("alpha", r.alpha)] {
            if let Some(v) = v {
                if !(v > 0.0 && v.is_finite()) {
                    return bad(format!("regularization.{name} must be positive, got {v}"));
                }
            }
        }
        if let Some(rho) = r.rho {
            if !(rho >= 0.0) {
                return bad(format!("regularization.rho must be >= 0, got {rho}"));
            }
        }
        if let (Some(lo), Some(hi)) = (r.lower, r.upper) {
            if !(lo < hi) {
                return bad(format!("regularization box: lower {lo} is not below upper {hi}"));
            }
        }
        self.solver.validate().map_err(|e| Error::Config(format!("solver: {e}")))?;
        for p in [self.eit.layout_file.as_ref(), self.acoustic.mic_file.as_ref()].into_iter().flatten() {
            if !p.is_file() {
                return bad(format!("referenced file {} does not exist", p.display()));
            }
        }
        if self.problem.kind == ProblemKind::Acoustic {
            let a = &self.acoustic;
            if a.ring.is_none() && a.mic_file.is_none() {
                return bad("acoustic: give either `ring` or `mic_file`".into());
            }
            if a.sources.is_empty() {
                return bad("acoustic: at least one source is required".into());
            }
            if !(a.rho_factor >= 1.0) {
                return bad(format!("acoustic.rho_factor must be >= 1, got {}", a.rho_factor));
            }
            a.constants().validate().map_err(|e| Error::Config(format!("acoustic: {e}")))?;
        }
        Ok(())
    }

    /// δ used by a single solve.
    pub fn solve_delta(&self) -> f64 {
        self.noise.delta.unwrap_or(*self.noise.deltas.last().expect("validated"))
    }

    pub fn output_dir(&self) -> PathBuf {
        self.output.dir.clone().unwrap_or_else(|| PathBuf::from("out"))
    }

    /// Feasibility factor written into summaries.
    pub fn feasibility_factor(&self) -> f64 {
        FEASIBILITY_FACTOR
    }
}

fn one() -> f64 {
    1.0
}
fn two() -> f64 {
    2.0
}
fn default_electrodes() -> usize {
    12
}
fn default_coverage() -> f64 {
    0.5
}
fn default_contact() -> f64 {
    0.1
}
fn default_patterns() -> usize {
    8
}
fn default_amplitudes() -> Vec<f64> {
    vec![0.5, 1.0, 1.5, 2.0]
}
fn default_profile() -> ExcitationProfile {
    ExcitationProfile::Uniform
}
fn default_knots() -> usize {
    16
}
fn default_mu_bounds() -> [f64; 2] {
    [1.0, 3.0]
}
fn default_coil() -> CoilSpec {
    CoilSpec { lower: [0.25, 0.25], upper: [0.75, 0.75], normal: [1.0, 0.0], depth: 1.0 }
}
fn default_omega() -> f64 {
    AcousticConstants::default().omega
}
fn default_sources() -> Vec<SourceSpec> {
    vec![SourceSpec { kind: SourceKind::Point, center: [0.2, 0.75], radius: 0.0, amplitude: 1.0 }]
}
fn default_rho_factor() -> f64 {
    1.1
}
fn default_seed() -> u64 {
    1
}
