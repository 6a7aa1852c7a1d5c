use std::path::PathBuf;

use randla::errorest::ErrorNorm;
use randla::lowrank::Axis;
use randla::sketching::SketchFamily;
use randla::synth::MatrixSpec;
use randla::trace::{ProbeDistribution, SpectralFunction};
use randla::RngKey;
use serde::{Deserialize, Serialize};

use crate::BenchError;

/// How the test matrix is assembled from its spec.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Structure {
    /// `U diag(σ) Vᵀ`.
    #[default]
    General,
    /// `V diag(σ) Vᵀ` (square, symmetric positive semidefinite).
    Psd,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatrixConfig {
    #[serde(flatten)]
    pub spec: MatrixSpec,
    #[serde(default)]
    pub structure: Structure,
    /// Noise level of the right-hand side `b = A x₀ + noise·w`.
    #[serde(default = "default_noise")]
    pub rhs_noise: f64,
    /// Read the matrix from a Matrix Market file instead of generating it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    /// Read the right-hand side from a vector file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rhs_path: Option<PathBuf>,
}

fn default_noise() -> f64 {
    1.0
}

fn default_passes() -> usize {
    2
}

fn default_oversample() -> usize {
    randla::lowrank::DEFAULT_OVERSAMPLE
}

fn default_sampling_factor() -> f64 {
    4.0
}

fn default_ls_tol() -> f64 {
    1e-12
}

fn default_maxit() -> usize {
    100
}

fn default_alpha() -> f64 {
    0.1
}

fn default_replicates() -> usize {
    100
}

fn default_family() -> SketchFamily {
    SketchFamily::default()
}

fn gaussian() -> SketchFamily {
    SketchFamily::Gaussian
}

fn default_function() -> String {
    "identity".into()
}

/// Driver and its parameters; the `name` tag selects the algorithm.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum DriverConfig {
    SketchSolve {
        d: usize,
        #[serde(default = "default_family")]
        family: SketchFamily,
    },
    Spo1 {
        #[serde(default = "default_sampling_factor")]
        sampling_factor: f64,
        #[serde(default = "default_family")]
        family: SketchFamily,
        #[serde(default = "default_ls_tol")]
        tol: f64,
        #[serde(default = "default_maxit")]
        maxit: usize,
    },
    Sps2 {
        #[serde(default)]
        mu: f64,
        /// Scale of the random linear term `c`; zero gives plain least squares.
        #[serde(default)]
        c_scale: f64,
        #[serde(default = "default_sampling_factor")]
        sampling_factor: f64,
        #[serde(default = "default_family")]
        family: SketchFamily,
        #[serde(default = "default_ls_tol")]
        tol: f64,
        #[serde(default = "default_maxit")]
        maxit: usize,
    },
    NystromPcg {
        mu: f64,
        #[serde(default = "default_nystrom_rank")]
        rank: usize,
        #[serde(default = "default_oversample")]
        oversample: usize,
        #[serde(default)]
        power_passes: usize,
        #[serde(default = "default_pcg_tol")]
        tol: f64,
        #[serde(default = "default_pcg_maxit")]
        maxit: usize,
        /// Also run unpreconditioned CG and report its iteration count.
        #[serde(default)]
        compare_cg: bool,
    },
    Qb2 {
        k: usize,
        #[serde(default)]
        tol: f64,
        block_size: usize,
        #[serde(default = "default_passes")]
        power_passes: usize,
    },
    Qb3 {
        k: usize,
        #[serde(default)]
        tol: f64,
        block_size: usize,
        #[serde(default = "default_passes")]
        power_passes: usize,
    },
    Svd1 {
        k: usize,
        #[serde(default = "default_oversample")]
        oversample: usize,
        #[serde(default)]
        tol: f64,
        #[serde(default = "default_passes")]
        power_passes: usize,
    },
    Evd1 {
        k: usize,
        #[serde(default = "default_oversample")]
        oversample: usize,
        #[serde(default)]
        tol: f64,
        #[serde(default = "default_passes")]
        power_passes: usize,
    },
    Evd2 {
        k: usize,
        #[serde(default = "default_oversample")]
        oversample: usize,
        #[serde(default = "default_passes")]
        power_passes: usize,
    },
    Osid1 {
        k: usize,
        #[serde(default = "default_oversample")]
        oversample: usize,
        axis: Axis,
        #[serde(default = "default_passes")]
        power_passes: usize,
    },
    Curd1 {
        k: usize,
        #[serde(default = "default_oversample")]
        oversample: usize,
        #[serde(default = "default_passes")]
        power_passes: usize,
    },
    RandCholQr {
        #[serde(default)]
        d: Option<usize>,
    },
    SapCholQrcp {
        #[serde(default)]
        d: Option<usize>,
    },
    ExactLeverage,
    ApproxLeverage {
        #[serde(default)]
        d1: Option<usize>,
        #[serde(default)]
        d2: Option<usize>,
    },
    SubspaceLeverage {
        k: usize,
        #[serde(default = "default_oversample")]
        oversample: usize,
        #[serde(default = "default_passes")]
        power_passes: usize,
    },
    GirardHutchinson {
        probes: usize,
        #[serde(default)]
        dist: ProbeDistribution,
    },
    HutchPp {
        budget: usize,
    },
    Slq {
        #[serde(default = "default_function")]
        function: String,
        probes: usize,
        steps: usize,
        #[serde(default)]
        dist: ProbeDistribution,
    },
    BootstrapLs {
        d: usize,
        #[serde(default = "default_replicates")]
        replicates: usize,
        #[serde(default = "default_alpha")]
        alpha: f64,
        #[serde(default)]
        norm: ErrorNorm,
        #[serde(default = "gaussian")]
        family: SketchFamily,
    },
    BootstrapSvd {
        d: usize,
        k: usize,
        #[serde(default = "default_replicates")]
        replicates: usize,
        #[serde(default = "default_alpha")]
        alpha: f64,
        #[serde(default = "gaussian")]
        family: SketchFamily,
    },
}

fn default_nystrom_rank() -> usize {
    10
}

fn default_pcg_tol() -> f64 {
    1e-10
}

fn default_pcg_maxit() -> usize {
    500
}

/// Driver families, one per CLI subcommand.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Family {
    Lstsq,
    LowRank,
    Qrcp,
    Leverage,
    Trace,
    Bootstrap,
}

impl Family {
    pub fn name(self) -> &'static str {
        match self {
            Family::Lstsq => "lstsq",
            Family::LowRank => "lowrank",
            Family::Qrcp => "qrcp",
            Family::Leverage => "leverage",
            Family::Trace => "trace",
            Family::Bootstrap => "bootstrap",
        }
    }
}

impl DriverConfig {
    pub fn family(&self) -> Family {
        use DriverConfig::*;
        match self {
            SketchSolve { .. } | Spo1 { .. } | Sps2 { .. } | NystromPcg { .. } => Family::Lstsq,
            Qb2 { .. } | Qb3 { .. } | Svd1 { .. } | Evd1 { .. } | Evd2 { .. } | Osid1 { .. } | Curd1 { .. } => {
                Family::LowRank
            }
            RandCholQr { .. } | SapCholQrcp { .. } => Family::Qrcp,
            ExactLeverage | ApproxLeverage { .. } | SubspaceLeverage { .. } => Family::Leverage,
            GirardHutchinson { .. } | HutchPp { .. } | Slq { .. } => Family::Trace,
            BootstrapLs { .. } | BootstrapSvd { .. } => Family::Bootstrap,
        }
    }

    fn needs_square(&self) -> bool {
        matches!(
            self,
            DriverConfig::NystromPcg { .. }
                | DriverConfig::Evd1 { .. }
                | DriverConfig::Evd2 { .. }
                | DriverConfig::GirardHutchinson { .. }
                | DriverConfig::HutchPp { .. }
                | DriverConfig::Slq { .. }
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    pub driver: DriverConfig,
    pub matrix: MatrixConfig,
    #[serde(default = "default_trials")]
    pub trials: usize,
    /// Base key; trial `t` runs with `seed.derive(t)`.
    #[serde(default)]
    pub seed: RngKey,
    /// Generate a fresh matrix for each trial instead of reusing one.
    #[serde(default)]
    pub resample_matrix: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
}

fn default_trials() -> usize {
    1
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, BenchError> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| BenchError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        let spec = &self.matrix.spec;
        if self.matrix.path.is_none() {
            spec.validate().map_err(|e| BenchError::Config(e.to_string()))?;
        }
        if self.matrix.structure == Structure::Psd && spec.m != spec.n {
            return Err(BenchError::Config(format!("psd structure needs a square matrix, got {}x{}", spec.m, spec.n)));
        }
        if self.driver.needs_square() && spec.m != spec.n {
            return Err(BenchError::Config(format!("driver needs a square matrix, got {}x{}", spec.m, spec.n)));
        }
        if !(self.matrix.rhs_noise >= 0.0) {
            return Err(BenchError::Config("rhs_noise must be nonnegative".into()));
        }
        let p = spec.m.min(spec.n);
        let check_k = |k: usize, extra: usize| {
            if k == 0 || k + extra > p {
                Err(BenchError::Config(format!("rank {k} plus oversampling {extra} must lie in 1..={p}")))
            } else {
                Ok(())
            }
        };
        use DriverConfig::*;
        match &self.driver {
            Qb2 { k, block_size, .. } | Qb3 { k, block_size, .. } => {
                check_k(*k, 0)?;
                if *block_size == 0 {
                    return Err(BenchError::Config("block_size must be at least 1".into()));
                }
            }
            Svd1 { k, oversample, .. }
            | Evd1 { k, oversample, .. }
            | Evd2 { k, oversample, .. }
            | Osid1 { k, oversample, .. }
            | Curd1 { k, oversample, .. }
            | SubspaceLeverage { k, oversample, .. } => check_k(*k, *oversample)?,
            Slq { function, steps, probes, .. } => {
                SpectralFunction::parse(function).map_err(|e| BenchError::Config(e.to_string()))?;
                if *steps == 0 || *probes == 0 {
                    return Err(BenchError::Config("slq needs at least one probe and one step".into()));
                }
            }
            BootstrapLs { alpha, replicates, .. } | BootstrapSvd { alpha, replicates, .. }
                if !(*alpha > 0.0 && *alpha < 1.0) || *replicates == 0 =>
            {
                return Err(BenchError::Config("bootstrap needs alpha in (0, 1) and replicates >= 1".into()));
            }
            _ => {}
        }
        Ok(())
    }
}
