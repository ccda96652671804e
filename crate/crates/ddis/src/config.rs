//! Experiment configuration and run summaries.
//!
//! A single JSON document drives every batch command. Unknown keys are
//! rejected so a misspelled field can never silently fall back to a default;
//! missing keys take the documented defaults.

use serde::{Deserialize, Serialize};

use crate::error::{DdisError, Result};
use crate::grid::{Boundary, GridSpec};
use crate::operators::PdeTask;
use crate::samplers::SamplerConfig;
use crate::score::{make_schedule, NoiseSchedule};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskKind {
    Poisson,
    Helmholtz,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SamplerKind {
    DpsJoint,
    DecoupledDps,
    Fundaps,
    DdisDaps,
}

impl SamplerKind {
    pub fn label(&self) -> &'static str {
        match self {
            SamplerKind::DpsJoint => "dps-joint",
            SamplerKind::DecoupledDps => "decoupled-dps",
            SamplerKind::Fundaps => "fundaps",
            SamplerKind::DdisDaps => "ddis-daps",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScheduleConfig {
    pub sigma_min: f64,
    pub sigma_max: f64,
    pub rho: f64,
    pub steps: usize,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self {
            sigma_min: 0.002,
            sigma_max: 80.0,
            rho: 7.0,
            steps: 30,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LangevinConfig {
    pub langevin_steps: usize,
    pub eta: f64,
    pub beta_y: f64,
    pub r_scale: f64,
    pub w_prior: f64,
    pub w_like: f64,
    pub tau: f64,
}

impl Default for LangevinConfig {
    fn default() -> Self {
        Self {
            langevin_steps: 25,
            eta: 0.1,
            beta_y: 0.05,
            r_scale: 1.0,
            w_prior: 1.0,
            w_like: 1.0,
            tau: 1e-3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SurrogateConfig {
    pub mode_cutoff: usize,
    pub lambda_phys: f64,
    pub use_exact: bool,
}

impl Default for SurrogateConfig {
    fn default() -> Self {
        Self {
            mode_cutoff: 32,
            lambda_phys: 0.0,
            use_exact: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub task: TaskKind,
    /// Wavenumber for the Helmholtz task; ignored for Poisson.
    pub helmholtz_k: f64,
    pub resolution: usize,
    pub obs_count: usize,
    pub obs_noise: f64,
    pub sampler: SamplerKind,
    /// Number of mixture prior centers N_data.
    pub prior_centers: usize,
    /// Fraction of centers granted paired solutions (data-scarcity knob).
    pub paired_fraction: f64,
    pub schedule: ScheduleConfig,
    pub langevin: LangevinConfig,
    pub surrogate: SurrogateConfig,
    pub dps_zeta: f64,
    pub spectrum_bins: usize,
    pub seed: u64,
    pub repeats: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            task: TaskKind::Poisson,
            helmholtz_k: 1.0,
            resolution: 32,
            obs_count: 31,
            obs_noise: 0.0,
            sampler: SamplerKind::DdisDaps,
            prior_centers: 50,
            paired_fraction: 1.0,
            schedule: ScheduleConfig::default(),
            langevin: LangevinConfig::default(),
            surrogate: SurrogateConfig::default(),
            dps_zeta: 1.0,
            spectrum_bins: 12,
            seed: 0,
            repeats: 4,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let grid = self.grid()?;
        if self.obs_count > grid.len() {
            return Err(DdisError::InvalidArgument(format!(
                "obs_count {} exceeds {} grid points",
                self.obs_count,
                grid.len()
            )));
        }
        if !(self.obs_noise >= 0.0 && self.obs_noise.is_finite()) {
            return Err(DdisError::InvalidArgument(format!(
                "obs_noise must be nonnegative, got {}",
                self.obs_noise
            )));
        }
        if self.prior_centers == 0 {
            return Err(DdisError::InvalidArgument(
                "prior_centers must be >= 1".into(),
            ));
        }
        if !(self.paired_fraction > 0.0 && self.paired_fraction <= 1.0) {
            return Err(DdisError::InvalidArgument(format!(
                "paired_fraction must lie in (0, 1], got {}",
                self.paired_fraction
            )));
        }
        if self.repeats == 0 {
            return Err(DdisError::InvalidArgument("repeats must be >= 1".into()));
        }
        if self.surrogate.mode_cutoff == 0 {
            return Err(DdisError::InvalidArgument(
                "mode_cutoff must be >= 1".into(),
            ));
        }
        if self.spectrum_bins == 0 {
            return Err(DdisError::InvalidArgument(
                "spectrum_bins must be >= 1".into(),
            ));
        }
        self.noise_schedule()?;
        self.sampler_config().validate()?;
        Ok(())
    }

    pub fn grid(&self) -> Result<GridSpec> {
        GridSpec::new(self.resolution, Boundary::Dirichlet)
    }

    pub fn pde_task(&self) -> PdeTask {
        match self.task {
            TaskKind::Poisson => PdeTask::Poisson,
            TaskKind::Helmholtz => PdeTask::Helmholtz {
                k: self.helmholtz_k,
            },
        }
    }

    pub fn noise_schedule(&self) -> Result<NoiseSchedule> {
        make_schedule(
            self.schedule.sigma_min,
            self.schedule.sigma_max,
            self.schedule.rho,
            self.schedule.steps,
        )
    }

    pub fn sampler_config(&self) -> SamplerConfig {
        SamplerConfig {
            anneal_steps: self.schedule.steps,
            langevin_steps: self.langevin.langevin_steps,
            eta: self.langevin.eta,
            beta_y: self.langevin.beta_y,
            r_scale: self.langevin.r_scale,
            w_prior: self.langevin.w_prior,
            w_like: self.langevin.w_like,
            dps_zeta: self.dps_zeta,
            langevin_noise_tau: self.langevin.tau,
        }
    }

    /// Number of centers that come with paired solutions.
    pub fn paired_count(&self) -> usize {
        ((self.prior_centers as f64 * self.paired_fraction).floor() as usize).max(1)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)
            .map_err(|e| DdisError::InvalidArgument(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

/// Outcome of one inversion repeat.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepeatResult {
    pub repeat: usize,
    pub seed: u64,
    pub rel_l2: Option<f64>,
    pub e_s: Option<f64>,
    /// Error of reconstructing with the prior mean instead of sampling.
    pub baseline_rel_l2: Option<f64>,
    pub obs_misfit_first: Option<f64>,
    pub obs_misfit_final: Option<f64>,
    pub seconds: f64,
    pub error: Option<String>,
}

/// Aggregate of an inversion run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub config: ExperimentConfig,
    pub version: String,
    pub repeats: Vec<RepeatResult>,
    pub rel_l2_mean: Option<f64>,
    pub rel_l2_std: Option<f64>,
    pub e_s_mean: Option<f64>,
    pub seconds_per_sample: f64,
}

impl RunSummary {
    pub fn from_repeats(config: ExperimentConfig, repeats: Vec<RepeatResult>) -> Self {
        let ok: Vec<&RepeatResult> = repeats.iter().filter(|r| r.error.is_none()).collect();
        let rels: Vec<f64> = ok.iter().filter_map(|r| r.rel_l2).collect();
        let (rel_mean, rel_std) = mean_std(&rels);
        let es: Vec<f64> = ok.iter().filter_map(|r| r.e_s).collect();
        let (es_mean, _) = mean_std(&es);
        let total_secs: f64 = repeats.iter().map(|r| r.seconds).sum();
        let seconds_per_sample = total_secs / repeats.len().max(1) as f64;
        Self {
            config,
            version: env!("CARGO_PKG_VERSION").to_string(),
            repeats,
            rel_l2_mean: rel_mean,
            rel_l2_std: rel_std,
            e_s_mean: es_mean,
            seconds_per_sample,
        }
    }

    pub fn all_failed(&self) -> bool {
        self.repeats.iter().all(|r| r.error.is_some())
    }

    pub fn per_repeat_csv(&self) -> String {
        let mut s = String::from(
            "repeat,seed,rel_l2,e_s,baseline_rel_l2,obs_misfit_first,obs_misfit_final,seconds,error\n",
        );
        for r in &self.repeats {
            s.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                r.repeat,
                r.seed,
                opt(r.rel_l2),
                opt(r.e_s),
                opt(r.baseline_rel_l2),
                opt(r.obs_misfit_first),
                opt(r.obs_misfit_final),
                r.seconds,
                r.error.as_deref().unwrap_or("")
            ));
        }
        s
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn mean_std(xs: &[f64]) -> (Option<f64>, Option<f64>) {
    if xs.is_empty() {
        return (None, None);
    }
    let mean = xs.iter().sum::<f64>() / xs.len() as f64;
    if xs.len() == 1 {
        return (Some(mean), None);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (xs.len() - 1) as f64;
    (Some(mean), Some(var.sqrt()))
}
