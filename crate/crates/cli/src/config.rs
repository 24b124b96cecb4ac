use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use serde::Deserialize;
use wirepinn::autodiff::DEFAULT_SEED;
use wirepinn::DeviceConfig;

/// Run-wide settings; every section is optional.
#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub device: DeviceConfig,
    pub sweep: SweepSection,
    pub lr: LrSection,
    pub pinn: PinnSection,
    pub output_dir: PathBuf,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub v_start: f64,
    pub v_end: f64,
    pub step: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LrSection {
    /// Number of leading snapshots the surrogate is fitted on.
    pub cutoff: usize,
    pub rcond: f64,
    pub ridge: f64,
    /// Highest training bias a solve accepts.
    pub max_training_bias: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PinnSection {
    pub epochs: usize,
    pub seed: u64,
    pub architecture: String,
    pub w_boundary: f64,
    pub w_fd: f64,
    pub learning_rate: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            device: DeviceConfig::default(),
            sweep: SweepSection::default(),
            lr: LrSection::default(),
            pinn: PinnSection::default(),
            output_dir: PathBuf::from("out"),
        }
    }
}

impl Default for SweepSection {
    fn default() -> Self {
        Self { v_start: 0.0, v_end: 0.75, step: 0.0075 }
    }
}

impl Default for LrSection {
    fn default() -> Self {
        Self { cutoff: 40, rcond: 1e-12, ridge: 0.0, max_training_bias: wirepinn::pinn::TRAINING_CUTOFF_V }
    }
}

impl Default for PinnSection {
    fn default() -> Self {
        Self {
            epochs: 200_000,
            seed: DEFAULT_SEED,
            architecture: wirepinn::Architecture::default().to_string(),
            w_boundary: 1.0,
            w_fd: 1.0,
            learning_rate: 1e-3,
        }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> anyhow::Result<Self> {
        let mut cfg = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                toml::from_str(&text).with_context(|| format!("parsing {}", p.display()))?
            }
            None => RunConfig::default(),
        };
        if let Ok(seed) = std::env::var("WIREPINN_SEED") {
            cfg.pinn.seed = seed
                .trim()
                .parse()
                .with_context(|| format!("WIREPINN_SEED must be an unsigned integer, got `{seed}`"))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        self.device.validate()?;
        if self.pinn.epochs == 0 {
            bail!("pinn.epochs must be at least 1");
        }
        if self.lr.cutoff == 0 {
            bail!("lr.cutoff must be at least 1");
        }
        if !(self.sweep.step > 0.0) {
            bail!("sweep.step must be positive");
        }
        self.pinn
            .architecture
            .parse::<wirepinn::Architecture>()
            .context("pinn.architecture")?;
        Ok(())
    }

    pub fn out(&self, name: &str) -> PathBuf {
        self.output_dir.join(name)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_file_keeps_defaults() {
        let cfg: RunConfig = toml::from_str("[pinn]\nepochs = 10\n").unwrap();
        assert_eq!(cfg.pinn.epochs, 10);
        assert_eq!(cfg.lr.cutoff, 40);
        assert_eq!(cfg.device.nx, 129);
        assert!(toml::from_str::<RunConfig>("[pinn]\nepoch = 10\n").is_err());
    }
}
