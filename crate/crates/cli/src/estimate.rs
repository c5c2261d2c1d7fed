//! `kerdisc estimate`: one discrepancy value for a sample file.

use std::fmt::Write as _;
use std::path::PathBuf;

use clap::{Args, ValueEnum};
use kerdisc::ksd::{ksd_spectral_1d, ksd_statistic, sliced_ksd_analytic_with, vmf_stein_ksd, SlicedKsdOptions};
use kerdisc::mmd::{mmd_cf_quadrature_1d, mmd_gaussian_closed_form, mmd_kummer_analytic_sliced, mmd_two_sample, mmd_vmf_sphere_energy, vmf_cross_term};
use kerdisc::sliced::sliced_reg;
use kerdisc::specfun::gauss_hermite;
use kerdisc::{
    load_samples, DiscrepancyEstimate, KernelSpec, KummerMode, PriorSpec, RngState, SampleBatch, SampleFormat, Score1d,
    SliceFamily, SlicedRegSpec, Statistic, SteinKernelSpec,
};

use crate::config::{FormConfig, ModeConfig, ScoreModeConfig, StatisticConfig};
use crate::error::{usage, CliError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Metric {
    MmdU,
    MmdCf,
    Bhep,
    KummerMmd,
    Ksd,
    KsdSpectral,
    SlicedMmd,
    SlicedKsd,
    SlicedKsdAnalytic,
    VmfMmd,
    VmfKsd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KernelArg {
    Gaussian,
    Imq,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PriorArg {
    Gaussian,
    Laplace,
    StudentT,
    UniformSphere,
}

#[derive(Debug, Clone, Args)]
pub struct EstimateArgs {
    #[arg(long, value_enum)]
    pub metric: Metric,
    /// Sample file (CSV, or JSON lines for `.jsonl`/`.json`).
    #[arg(long)]
    pub input: PathBuf,
    /// Second sample for the two-sample MMD.
    #[arg(long)]
    pub input2: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub kernel: Option<KernelArg>,
    #[arg(long, value_enum)]
    pub prior: Option<PriorArg>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub nu: Option<f64>,
    #[arg(long)]
    pub kappa: Option<f64>,
    #[arg(long)]
    pub slices: Option<usize>,
    #[arg(long)]
    pub knots: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum)]
    pub statistic: Option<StatisticArg>,
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    #[arg(long, value_enum)]
    pub score_mode: Option<ScoreModeArg>,
    #[arg(long, value_enum)]
    pub form: Option<FormArg>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StatisticArg {
    U,
    V,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Exact,
    ImqApprox,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ScoreModeArg {
    ProjectedAmbient,
    PseudoCodeFaithful,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FormArg {
    Intrinsic,
    Published,
}

const DEFAULT_SLICES: usize = 1024;
const DEFAULT_KNOTS: usize = 21;
const DEFAULT_CF_KNOTS: usize = 64;

impl EstimateArgs {
    fn given(&self) -> Vec<&'static str> {
        let flags: [(&'static str, bool); 17] = [
            ("input2", self.input2.is_some()),
            ("kernel", self.kernel.is_some()),
            ("prior", self.prior.is_some()),
            ("gamma", self.gamma.is_some()),
            ("sigma", self.sigma.is_some()),
            ("alpha", self.alpha.is_some()),
            ("beta", self.beta.is_some()),
            ("nu", self.nu.is_some()),
            ("kappa", self.kappa.is_some()),
            ("slices", self.slices.is_some()),
            ("knots", self.knots.is_some()),
            ("seed", self.seed.is_some()),
            ("statistic", self.statistic.is_some()),
            ("mode", self.mode.is_some()),
            ("score-mode", self.score_mode.is_some()),
            ("form", self.form.is_some()),
            ("", false),
        ];
        flags.into_iter().filter(|f| f.1).map(|f| f.0).collect()
    }

    fn kernel(&self) -> Result<KernelSpec, CliError> {
        let kernel = match self.kernel.unwrap_or(KernelArg::Gaussian) {
            KernelArg::Gaussian => {
                if self.alpha.is_some() || self.beta.is_some() {
                    return usage("--alpha/--beta apply to --kernel imq only");
                }
                KernelSpec::Gaussian { gamma: self.gamma.unwrap_or(0.5) }
            }
            KernelArg::Imq => {
                if self.gamma.is_some() {
                    return usage("--gamma does not apply to --kernel imq; use --alpha and --beta");
                }
                KernelSpec::Imq { alpha: self.alpha.unwrap_or(1.0), beta: self.beta.unwrap_or(0.5) }
            }
        };
        kernel.validate()?;
        Ok(kernel)
    }

    fn prior(&self, d: usize) -> Result<PriorSpec, CliError> {
        let sigma = self.sigma.unwrap_or(1.0);
        let prior = self.prior.unwrap_or(PriorArg::Gaussian);
        if self.nu.is_some() && prior != PriorArg::StudentT {
            return usage("--nu applies to --prior student-t only");
        }
        Ok(match prior {
            PriorArg::Gaussian => PriorSpec::gaussian(d, sigma)?,
            PriorArg::Laplace => PriorSpec::laplace(d, sigma)?,
            PriorArg::StudentT => PriorSpec::student_t(d, self.nu.unwrap_or(kerdisc::priors::DEFAULT_STUDENT_NU), sigma)?,
            PriorArg::UniformSphere => {
                if self.sigma.is_some() {
                    return usage("--sigma does not apply to the uniform sphere prior");
                }
                PriorSpec::uniform_sphere(d)?
            }
        })
    }

    fn statistic(&self) -> Statistic {
        let s = match self.statistic {
            Some(StatisticArg::V) => StatisticConfig::V,
            _ => StatisticConfig::U,
        };
        s.into()
    }

    fn mode(&self) -> KummerMode {
        match self.mode {
            Some(ModeArg::ImqApprox) => ModeConfig::ImqApprox,
            _ => ModeConfig::Exact,
        }
        .into()
    }
}

fn allowed(metric: Metric) -> &'static [&'static str] {
    use Metric::*;
    match metric {
        MmdU => &["input2", "kernel", "gamma", "alpha", "beta", "statistic"],
        MmdCf => &["prior", "gamma", "sigma", "nu", "knots"],
        Bhep => &["gamma", "sigma", "statistic"],
        KummerMmd => &["gamma", "sigma", "mode", "statistic"],
        Ksd => &["kernel", "prior", "gamma", "sigma", "alpha", "beta", "nu", "statistic"],
        KsdSpectral => &["prior", "gamma", "sigma", "knots"],
        SlicedMmd | SlicedKsd => &["prior", "gamma", "sigma", "slices", "knots", "seed", "score-mode"],
        SlicedKsdAnalytic => &["gamma", "sigma", "mode", "statistic"],
        VmfMmd => &["kappa", "statistic"],
        VmfKsd => &["kappa", "form", "statistic"],
    }
}

fn load(path: &std::path::Path) -> Result<SampleBatch, CliError> {
    Ok(load_samples(path, SampleFormat::from_path(path))?)
}

pub fn estimate(args: &EstimateArgs) -> Result<DiscrepancyEstimate, CliError> {
    let ok = allowed(args.metric);
    if let Some(bad) = args.given().into_iter().find(|f| !ok.contains(f)) {
        return usage(format!("--{bad} does not apply to --metric {}", metric_name(args.metric)));
    }
    if args.metric == Metric::MmdU && args.input2.is_none() {
        return usage("--metric mmd-u needs --input2");
    }
    let x = load(&args.input)?;
    let gamma = args.gamma.unwrap_or(0.5);
    let sigma = args.sigma.unwrap_or(1.0);
    let stat = args.statistic();
    let est = match args.metric {
        Metric::MmdU => {
            let y = load(args.input2.as_deref().expect("checked above"))?;
            mmd_two_sample(&args.kernel()?, &x, &y, stat)?
        }
        Metric::MmdCf => mmd_cf_quadrature_1d(gamma, &x, &args.prior(x.d())?, &gauss_hermite(args.knots.unwrap_or(DEFAULT_CF_KNOTS))?)?,
        Metric::Bhep => mmd_gaussian_closed_form(gamma, sigma, &x, stat)?,
        Metric::KummerMmd => mmd_kummer_analytic_sliced(gamma, sigma, &x, args.mode(), stat)?,
        Metric::Ksd => ksd_statistic(&SteinKernelSpec::new(args.kernel()?, args.prior(x.d())?)?, &x, stat)?,
        Metric::KsdSpectral => {
            let score = Score1d::for_prior(&args.prior(x.d())?)?;
            ksd_spectral_1d(score, &x, gamma, &gauss_hermite(args.knots.unwrap_or(DEFAULT_CF_KNOTS))?)?
        }
        Metric::SlicedMmd | Metric::SlicedKsd => {
            let family = if args.metric == Metric::SlicedMmd { SliceFamily::MmdReg } else { SliceFamily::KsdReg };
            let rule = gauss_hermite(args.knots.unwrap_or(DEFAULT_KNOTS))?;
            let mut spec = SlicedRegSpec::new(family, args.prior(x.d())?, args.slices.unwrap_or(DEFAULT_SLICES), rule)?;
            spec.gamma = gamma;
            spec.score_mode = match args.score_mode {
                Some(ScoreModeArg::PseudoCodeFaithful) => ScoreModeConfig::PseudoCodeFaithful,
                _ => ScoreModeConfig::ProjectedAmbient,
            }
            .into();
            spec.validate()?;
            let seed = args.seed.unwrap_or(0);
            sliced_reg(&spec, &x, &RngState::new(seed))?
        }
        Metric::SlicedKsdAnalytic => {
            let opts = SlicedKsdOptions { mode: args.mode(), statistic: stat, ..Default::default() };
            sliced_ksd_analytic_with(gamma, sigma, &x, opts)?
        }
        Metric::VmfMmd => {
            let kappa = args.kappa.unwrap_or(1.0);
            let mut e = mmd_vmf_sphere_energy(kappa, &x, stat)?;
            e.value -= vmf_cross_term(kappa, x.d())?;
            e.estimator = format!("vmf-mmd-{}", if stat == Statistic::V { "v" } else { "u" });
            e
        }
        Metric::VmfKsd => {
            let form = match args.form {
                Some(FormArg::Published) => FormConfig::Published,
                _ => FormConfig::Intrinsic,
            };
            vmf_stein_ksd(args.kappa.unwrap_or(1.0), &x, form.into(), stat)?
        }
    };
    if !est.value.is_finite() {
        return Err(kerdisc::Error::Numerical(format!("{} returned {}", est.estimator, est.value)).into());
    }
    Ok(est)
}

fn metric_name(m: Metric) -> String {
    m.to_possible_value().map(|v| v.get_name().to_string()).unwrap_or_default()
}

fn num(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        "null".to_string()
    }
}

/// One JSON object; floats carry 17 significant digits.
pub fn to_json(e: &DiscrepancyEstimate) -> String {
    let mut s = String::from("{");
    let _ = write!(
        s,
        "\"value\":{},\"estimator\":{},\"n\":{},\"d\":{},\"slices\":{},\"knots\":{},\"seed\":{},\"std_error\":{},\"wall_ms\":{}",
        num(e.value),
        serde_json::Value::String(e.estimator.clone()),
        e.n,
        e.d,
        e.slices,
        e.knots,
        e.seed,
        e.std_error.map_or_else(|| "null".to_string(), num),
        num(e.wall_ms),
    );
    s.push('}');
    s
}
