//! TOML/JSON configuration for sweeps and flows.

use std::path::Path;

use kerdisc::flow::{GradientMode, InitialDistribution};
use kerdisc::specfun::gauss_hermite;
use kerdisc::{
    KernelSpec, KummerMode, PriorSpec, RegularizerKind, RegularizerSpec, SliceFamily, SliceScoreMode, SlicedRegSpec,
    Statistic, VmfSteinForm,
};
use serde::Deserialize;

use crate::error::{usage, CliError};

fn one() -> f64 {
    1.0
}
fn half() -> f64 {
    0.5
}
fn five() -> f64 {
    5.0
}
fn knots() -> usize {
    21
}

#[derive(Debug, Clone, Copy, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PriorConfig {
    Gaussian {
        #[serde(default = "one")]
        sigma: f64,
    },
    Laplace {
        #[serde(default = "one")]
        sigma: f64,
    },
    StudentT {
        #[serde(default = "five")]
        nu: f64,
        #[serde(default = "one")]
        sigma: f64,
    },
    UniformSphere,
}

impl PriorConfig {
    pub fn build(&self, d: usize) -> Result<PriorSpec, CliError> {
        Ok(match *self {
            Self::Gaussian { sigma } => PriorSpec::gaussian(d, sigma)?,
            Self::Laplace { sigma } => PriorSpec::laplace(d, sigma)?,
            Self::StudentT { nu, sigma } => PriorSpec::student_t(d, nu, sigma)?,
            Self::UniformSphere => PriorSpec::uniform_sphere(d)?,
        })
    }
}

#[derive(Debug, Clone, Copy, Deserialize, PartialEq, Eq, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ModeConfig {
    #[default]
    Exact,
    ImqApprox,
}

impl From<ModeConfig> for KummerMode {
    fn from(m: ModeConfig) -> Self {
        match m {
            ModeConfig::Exact => KummerMode::Exact,
            ModeConfig::ImqApprox => KummerMode::ImqApprox,
        }
    }
}

#[derive(Debug, Clone, Copy, Deserialize, PartialEq, Eq, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ScoreModeConfig {
    #[default]
    ProjectedAmbient,
    PseudoCodeFaithful,
}

impl From<ScoreModeConfig> for SliceScoreMode {
    fn from(m: ScoreModeConfig) -> Self {
        match m {
            ScoreModeConfig::ProjectedAmbient => SliceScoreMode::ProjectedAmbient,
            ScoreModeConfig::PseudoCodeFaithful => SliceScoreMode::PseudoCodeFaithful,
        }
    }
}

#[derive(Debug, Clone, Copy, Deserialize, PartialEq, Eq, Default)]
#[serde(rename_all = "kebab-case")]
pub enum FormConfig {
    #[default]
    Intrinsic,
    Published,
}

impl From<FormConfig> for VmfSteinForm {
    fn from(f: FormConfig) -> Self {
        match f {
            FormConfig::Intrinsic => VmfSteinForm::Intrinsic,
            FormConfig::Published => VmfSteinForm::Published,
        }
    }
}

#[derive(Debug, Clone, Copy, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum KernelConfig {
    Gaussian {
        #[serde(default = "half")]
        gamma: f64,
    },
    Imq {
        #[serde(default = "one")]
        alpha: f64,
        #[serde(default = "half")]
        beta: f64,
    },
}

impl From<KernelConfig> for KernelSpec {
    fn from(k: KernelConfig) -> Self {
        match k {
            KernelConfig::Gaussian { gamma } => KernelSpec::Gaussian { gamma },
            KernelConfig::Imq { alpha, beta } => KernelSpec::Imq { alpha, beta },
        }
    }
}

impl Default for KernelConfig {
    fn default() -> Self {
        Self::Gaussian { gamma: 0.5 }
    }
}

/// The regularizer `Ω`; slice counts come from the surrounding config.
#[derive(Debug, Clone, Copy, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum EstimatorConfig {
    Bhep {
        #[serde(default = "half")]
        gamma: f64,
    },
    KummerMmd {
        #[serde(default = "half")]
        gamma: f64,
        #[serde(default)]
        mode: ModeConfig,
    },
    SlicedMmd {
        #[serde(default = "half")]
        gamma: f64,
        #[serde(default = "knots")]
        knots: usize,
        #[serde(default)]
        score_mode: ScoreModeConfig,
        #[serde(default)]
        projected_cf: bool,
    },
    SlicedKsd {
        #[serde(default = "half")]
        gamma: f64,
        #[serde(default = "knots")]
        knots: usize,
        #[serde(default)]
        score_mode: ScoreModeConfig,
    },
    Ksd {
        #[serde(default)]
        kernel: KernelConfig,
    },
    SlicedKsdAnalytic {
        #[serde(default = "half")]
        gamma: f64,
        #[serde(default)]
        mode: ModeConfig,
    },
    VmfMmd {
        #[serde(default = "one")]
        kappa: f64,
    },
    VmfKsd {
        #[serde(default = "one")]
        kappa: f64,
        #[serde(default)]
        form: FormConfig,
    },
}

impl EstimatorConfig {
    pub fn is_sliced(&self) -> bool {
        matches!(self, Self::SlicedMmd { .. } | Self::SlicedKsd { .. })
    }

    pub fn build(&self, prior: &PriorSpec, slices: usize, statistic: Statistic) -> Result<RegularizerSpec, CliError> {
        let sliced = |family, gamma: f64, knots: usize, mode: ScoreModeConfig, projected_cf| -> Result<RegularizerKind, CliError> {
            let mut s = SlicedRegSpec::new(family, *prior, slices, gauss_hermite(knots)?)?;
            s.gamma = gamma;
            s.score_mode = mode.into();
            s.projected_cf = projected_cf;
            s.validate()?;
            Ok(RegularizerKind::Sliced(s))
        };
        let kind = match *self {
            Self::Bhep { gamma } => RegularizerKind::Bhep { gamma },
            Self::KummerMmd { gamma, mode } => RegularizerKind::KummerMmd { gamma, mode: mode.into() },
            Self::SlicedMmd { gamma, knots, score_mode, projected_cf } => sliced(SliceFamily::MmdReg, gamma, knots, score_mode, projected_cf)?,
            Self::SlicedKsd { gamma, knots, score_mode } => sliced(SliceFamily::KsdReg, gamma, knots, score_mode, false)?,
            Self::Ksd { kernel } => RegularizerKind::Ksd { base: kernel.into() },
            Self::SlicedKsdAnalytic { gamma, mode } => RegularizerKind::SlicedKsdAnalytic { gamma, mode: mode.into() },
            Self::VmfMmd { kappa } => RegularizerKind::VmfMmd { kappa },
            Self::VmfKsd { kappa, form } => RegularizerKind::VmfKsd { kappa, form: form.into() },
        };
        let spec = RegularizerSpec { kind, statistic };
        spec.validate(prior)?;
        Ok(spec)
    }
}

#[derive(Debug, Clone, Copy, Deserialize, PartialEq, Eq, Default)]
#[serde(rename_all = "kebab-case")]
pub enum StatisticConfig {
    U,
    #[default]
    V,
}

impl From<StatisticConfig> for Statistic {
    fn from(s: StatisticConfig) -> Self {
        match s {
            StatisticConfig::U => Statistic::U,
            StatisticConfig::V => Statistic::V,
        }
    }
}

fn one_usize() -> usize {
    1
}

/// Grid of (dimension × slice count × seed × repetition).
///
/// Data for each (dimension, repetition) is drawn once from the prior with
/// `data_seed`; the grid seed drives only the slice directions, so the
/// across-seed spread at fixed data isolates slicing noise.
#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub dims: Vec<usize>,
    pub slice_counts: Vec<usize>,
    pub seeds: Vec<u64>,
    pub n: usize,
    pub estimator: EstimatorConfig,
    pub prior: PriorConfig,
    #[serde(default = "one_usize")]
    pub repetitions: usize,
    #[serde(default)]
    pub data_seed: u64,
    #[serde(default)]
    pub statistic: StatisticConfig,
}

impl SweepConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        for (key, empty) in [("dims", self.dims.is_empty()), ("slice_counts", self.slice_counts.is_empty()), ("seeds", self.seeds.is_empty())] {
            if empty {
                return usage(format!("config key `{key}` must be a nonempty list"));
            }
        }
        if self.repetitions == 0 {
            return usage("config key `repetitions` must be at least 1");
        }
        if self.n < 2 {
            return usage("config key `n` must be at least 2");
        }
        if let Some(d) = self.dims.iter().find(|&&d| d == 0) {
            return usage(format!("config key `dims` contains {d}"));
        }
        if self.slice_counts.contains(&0) {
            return usage("config key `slice_counts` contains 0");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum InitConfig {
    Collapsed,
    Gaussian,
    SphereCluster,
}

impl From<InitConfig> for InitialDistribution {
    fn from(i: InitConfig) -> Self {
        match i {
            InitConfig::Collapsed => InitialDistribution::Collapsed,
            InitConfig::Gaussian => InitialDistribution::Prior,
            InitConfig::SphereCluster => InitialDistribution::SphereCluster,
        }
    }
}

#[derive(Debug, Clone, Copy, Deserialize, PartialEq, Eq, Default)]
#[serde(rename_all = "kebab-case")]
pub enum GradientConfig {
    #[default]
    Analytic,
    FiniteDifference,
}

impl From<GradientConfig> for GradientMode {
    fn from(g: GradientConfig) -> Self {
        match g {
            GradientConfig::Analytic => GradientMode::Analytic,
            GradientConfig::FiniteDifference => GradientMode::FiniteDifference,
        }
    }
}

fn default_slices() -> usize {
    1024
}
fn default_log_every() -> usize {
    100
}
fn default_jitter() -> f64 {
    0.1
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct FlowConfig {
    pub init: InitConfig,
    pub dim: usize,
    pub n: usize,
    pub steps: usize,
    pub step_size: f64,
    #[serde(default = "one")]
    pub lambda: f64,
    pub estimator: EstimatorConfig,
    pub prior: PriorConfig,
    #[serde(default = "one_usize")]
    pub views: usize,
    #[serde(default = "default_jitter")]
    pub jitter: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_log_every")]
    pub log_every: usize,
    #[serde(default)]
    pub gradient: GradientConfig,
    #[serde(default = "default_slices")]
    pub slices: usize,
}

impl FlowConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        if self.steps == 0 {
            return usage("config key `steps` must be at least 1");
        }
        if !(self.step_size > 0.0) || !self.step_size.is_finite() {
            return usage("config key `step_size` must be positive");
        }
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return usage("config key `lambda` must be finite and >= 0");
        }
        if self.n < 2 {
            return usage("config key `n` must be at least 2");
        }
        if self.dim == 0 {
            return usage("config key `dim` must be at least 1");
        }
        if self.views == 0 {
            return usage("config key `views` must be at least 1");
        }
        if self.log_every == 0 {
            return usage("config key `log_every` must be at least 1");
        }
        Ok(())
    }
}

/// Parses TOML, or JSON when the file ends in `.json`.
pub fn load_config<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
    if json {
        serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
    } else {
        toml::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
    }
}
