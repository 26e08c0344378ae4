//! Experiment configuration (TOML).
//!
//! Every field has a default, so an empty file is a valid configuration:
//! the bright-core deconvolution problem with KL misfit and oracle
//! stopping. `configs/` in the repository root has annotated examples.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use irgnm::poisson::ErrVariant;
use irgnm::solver::{NewtonConfig, OffsetParam};
use irgnm::Misfit;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub problem: ProblemSpec,
    /// Fidelities to compare. All of them see the same count data.
    pub misfits: Vec<MisfitSpec>,
    pub penalty: PenaltySpec,
    pub newton: NewtonSpec,
    pub stopping: StoppingSpec,
    pub exposure_times: Vec<f64>,
    pub replicates: usize,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub errn: ErrnSpec,
    pub rates: RatesSpec,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            problem: ProblemSpec::default(),
            misfits: vec![MisfitSpec::default()],
            penalty: PenaltySpec::default(),
            newton: NewtonSpec::default(),
            stopping: StoppingSpec::default(),
            exposure_times: vec![1e3, 1e4],
            replicates: 20,
            seed: 1,
            out_dir: PathBuf::from("out"),
            errn: ErrnSpec::default(),
            rates: RatesSpec::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProblemSpec {
    /// Periodic 1D convolution with a Gaussian kernel on `[0, 1)`.
    Deconvolution {
        #[serde(default = "default_n")]
        n: usize,
        #[serde(default = "default_width")]
        kernel_width: f64,
        #[serde(default)]
        truth: TruthSpec,
    },
    /// Fourier-modulus phase retrieval of the synthetic cell phantom.
    PhaseRetrieval {
        #[serde(default = "default_pr_n")]
        n: usize,
        #[serde(default = "default_pr_m")]
        m: usize,
        #[serde(default = "default_rho")]
        rho: f64,
        #[serde(default = "default_kappa")]
        kappa: f64,
        /// Height of the even dome added to the constant initial guess.
        #[serde(default = "default_dome")]
        initial_bias: f64,
    },
}

fn default_n() -> usize {
    256
}
fn default_width() -> f64 {
    0.0225
}
fn default_pr_n() -> usize {
    32
}
fn default_pr_m() -> usize {
    48
}
fn default_rho() -> f64 {
    0.4
}
fn default_kappa() -> f64 {
    16.0
}
fn default_dome() -> f64 {
    0.1
}

impl Default for ProblemSpec {
    fn default() -> Self {
        ProblemSpec::Deconvolution {
            n: default_n(),
            kernel_width: default_width(),
            truth: TruthSpec::default(),
        }
    }
}

/// True solution and initial guess of the deconvolution problem.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TruthSpec {
    /// `u0 = background + peak·exp(−(x−½)²/(2 width²))`, known to the
    /// method; the truth adds a mix of low harmonics of size
    /// `feature_amplitude` on top.
    BrightCore {
        background: f64,
        peak: f64,
        peak_width: f64,
        feature_amplitude: f64,
    },
    /// `u0 ≡ background`, `u† = u0 + amplitude·(F^*F)^ν w` with a seeded `w`:
    /// a Hölder source condition of index `nu`.
    Source {
        background: f64,
        amplitude: f64,
        nu: f64,
        source_seed: u64,
    },
}

impl Default for TruthSpec {
    fn default() -> Self {
        TruthSpec::BrightCore {
            background: 1.0,
            peak: 40.0,
            peak_width: 0.12,
            feature_amplitude: 0.8,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MisfitSpec {
    L2,
    Kl {
        #[serde(default = "default_sigma")]
        sigma0: f64,
        #[serde(default = "default_decay")]
        decay: f64,
    },
    Pearson {
        #[serde(default = "default_cutoff")]
        cutoff: f64,
    },
}

fn default_sigma() -> f64 {
    0.002
}
fn default_decay() -> f64 {
    0.8
}
fn default_cutoff() -> f64 {
    0.2
}

impl Default for MisfitSpec {
    fn default() -> Self {
        MisfitSpec::Kl {
            sigma0: default_sigma(),
            decay: default_decay(),
        }
    }
}

impl MisfitSpec {
    pub fn misfit(&self) -> Misfit {
        match *self {
            MisfitSpec::L2 => Misfit::L2,
            MisfitSpec::Kl { .. } => Misfit::KullbackLeibler,
            MisfitSpec::Pearson { cutoff } => Misfit::Pearson { cutoff },
        }
    }

    pub fn offset(&self) -> OffsetParam {
        match *self {
            MisfitSpec::Kl { sigma0, decay } => OffsetParam { sigma: sigma0, decay },
            _ => OffsetParam::default(),
        }
    }

    pub fn label(&self) -> &'static str {
        self.misfit().name()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct PenaltySpec {
    /// Sobolev index of `R(u) = ‖u − u0‖²_{H^s}`; 0 is the plain L² norm.
    pub sobolev: f64,
}

impl Default for PenaltySpec {
    fn default() -> Self {
        PenaltySpec { sobolev: 0.0 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct NewtonSpec {
    pub alpha0: f64,
    pub c_dec: f64,
    pub max_outer: usize,
    pub inner_tol: f64,
    pub max_inner: usize,
    pub step_eta: f64,
    pub cg_tol: f64,
    pub cg_max_iter: usize,
    pub min_step: f64,
    pub descent_safeguard: bool,
}

impl Default for NewtonSpec {
    fn default() -> Self {
        let d = NewtonConfig::default();
        NewtonSpec {
            alpha0: d.alpha0,
            c_dec: d.c_dec,
            max_outer: d.max_outer,
            inner_tol: d.inner_tol,
            max_inner: d.max_inner,
            step_eta: d.step_eta,
            cg_tol: d.cg_tol,
            cg_max_iter: d.cg_max_iter,
            min_step: d.min_step,
            descent_safeguard: d.descent_safeguard,
        }
    }
}

impl NewtonSpec {
    pub fn config(&self, offset: OffsetParam) -> NewtonConfig {
        NewtonConfig {
            alpha0: self.alpha0,
            c_dec: self.c_dec,
            max_outer: self.max_outer,
            inner_tol: self.inner_tol,
            max_inner: self.max_inner,
            step_eta: self.step_eta,
            offset,
            cg_tol: self.cg_tol,
            cg_max_iter: self.cg_max_iter,
            min_step: self.min_step,
            descent_safeguard: self.descent_safeguard,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "rule", rename_all = "snake_case", deny_unknown_fields)]
pub enum StoppingSpec {
    /// One index for all replicates of a (misfit, t) cell, minimizing the
    /// empirical mean squared error.
    OracleMean,
    /// Per-run index of the smallest error.
    Oracle,
    MaxIter,
    /// `α_n ≤ τ err_n^{1/(1+2ν)}` with Poisson err_n estimates.
    APrioriHoelder { tau: f64, nu: f64 },
    /// `α_n² ≤ τ err_n`.
    APrioriLog { tau: f64 },
    /// Balancing principle with noise bound `err_scale/√t`.
    Lepskii {
        err_scale: f64,
        #[serde(default)]
        gamma_nl: f64,
        #[serde(default = "one")]
        c_bd: f64,
        #[serde(default = "two")]
        q: f64,
    },
}

fn one() -> f64 {
    1.0
}
fn two() -> f64 {
    2.0
}

impl Default for StoppingSpec {
    fn default() -> Self {
        StoppingSpec::OracleMean
    }
}

impl StoppingSpec {
    pub fn label(&self) -> &'static str {
        match self {
            StoppingSpec::OracleMean => "oracle_mean",
            StoppingSpec::Oracle => "oracle",
            StoppingSpec::MaxIter => "max_iter",
            StoppingSpec::APrioriHoelder { .. } => "a_priori_hoelder",
            StoppingSpec::APrioriLog { .. } => "a_priori_log",
            StoppingSpec::Lepskii { .. } => "lepskii",
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    A,
    B,
}

impl From<Variant> for ErrVariant {
    fn from(v: Variant) -> Self {
        match v {
            Variant::A => ErrVariant::A,
            Variant::B => ErrVariant::B,
        }
    }
}

/// Settings of the `errn` study.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct ErrnSpec {
    pub variant: Variant,
    /// Maximum of err_n over steps `n < steps`.
    pub steps: usize,
}

impl Default for ErrnSpec {
    fn default() -> Self {
        ErrnSpec {
            variant: Variant::B,
            steps: 20,
        }
    }
}

/// Settings of the `rates` study.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct RatesSpec {
    /// Step range `[first, last)` used for the exact-data fit against α_n.
    pub exact_steps: [usize; 2],
    /// Outer steps of the exact-data run.
    pub exact_max_outer: usize,
}

impl Default for RatesSpec {
    fn default() -> Self {
        RatesSpec {
            exact_steps: [5, 30],
            exact_max_outer: 30,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).context("parsing configuration")?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.replicates == 0 {
            bail!("replicates must be at least 1");
        }
        if self.exposure_times.is_empty() {
            bail!("exposure_times must not be empty");
        }
        if self.exposure_times.iter().any(|t| !(*t > 0.0 && t.is_finite())) {
            bail!("exposure times must be positive and finite");
        }
        if self.exposure_times.windows(2).any(|w| w[1] <= w[0]) {
            bail!("exposure times must be strictly ascending");
        }
        if self.misfits.is_empty() {
            bail!("at least one misfit is required");
        }
        if !(self.penalty.sobolev >= 0.0) {
            bail!("Sobolev index must be nonnegative");
        }
        if self.rates.exact_steps[0] >= self.rates.exact_steps[1] {
            bail!("rates.exact_steps must be an increasing pair");
        }
        for m in &self.misfits {
            self.newton.config(m.offset()).validate()?;
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form of the resolved configuration.
    /// The output directory is left out: it does not affect any result.
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.out_dir = PathBuf::new();
        let json = serde_json::to_string(&canonical).expect("configuration serializes");
        let digest = Sha256::digest(json.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let c = ExperimentConfig::from_toml("").unwrap();
        assert_eq!(c, ExperimentConfig::default());
        c.validate().unwrap();
    }

    #[test]
    fn round_trip_and_hash() {
        let text = r#"
            exposure_times = [100.0, 1000.0]
            misfits = [{ kind = "kl" }, { kind = "pearson", cutoff = 0.5 }, { kind = "l2" }]
            [problem]
            kind = "phase_retrieval"
            [stopping]
            rule = "lepskii"
            err_scale = 2.0
        "#;
        let c = ExperimentConfig::from_toml(text).unwrap();
        c.validate().unwrap();
        let back = ExperimentConfig::from_toml(&c.to_toml()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.hash(), c.hash());
        assert_eq!(c.hash().len(), 64);
        assert_ne!(c.hash(), ExperimentConfig::default().hash());
        let moved = ExperimentConfig {
            out_dir: "elsewhere".into(),
            ..c.clone()
        };
        assert_eq!(moved.hash(), c.hash());
    }

    #[test]
    fn rejects_bad_values() {
        assert!(ExperimentConfig::from_toml("replicats = 3").is_err());
        let mut c = ExperimentConfig::default();
        c.exposure_times = vec![1e4, 1e3];
        assert!(c.validate().is_err());
        c.exposure_times = vec![1e3];
        c.replicates = 0;
        assert!(c.validate().is_err());
        c.replicates = 1;
        c.newton.c_dec = 0.5;
        assert!(c.validate().is_err());
    }
}
