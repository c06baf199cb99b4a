use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::arch::robot::{RobotOption, VISION_CODE};
use crate::arm::ArmConfig;
use crate::error::{Error, Result};
use crate::nn::Schedule;
use crate::readout::{EvalConfig, MIN_EVAL_BATCHES};
use crate::synthetic::SyntheticSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    SyntheticJe,
    SyntheticControl,
    SyntheticCm,
    RobotJe,
    RobotCm,
}

impl ExperimentKind {
    pub fn is_robot(self) -> bool {
        matches!(self, ExperimentKind::RobotJe | ExperimentKind::RobotCm)
    }

    pub fn arch(self) -> &'static str {
        match self {
            ExperimentKind::SyntheticJe | ExperimentKind::RobotJe => "je",
            ExperimentKind::SyntheticControl => "control",
            ExperimentKind::SyntheticCm | ExperimentKind::RobotCm => "cm",
        }
    }
}

/// Synthetic source sizes; the construction seed is derived per repetition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticParams {
    pub d_m: usize,
    pub d_e: usize,
    pub n: usize,
    pub k: usize,
}

impl Default for SyntheticParams {
    fn default() -> Self {
        let s = SyntheticSpec::default();
        SyntheticParams {
            d_m: s.d_m,
            d_e: s.d_e,
            n: s.n,
            k: s.k,
        }
    }
}

impl SyntheticParams {
    pub fn spec(&self, seed: u64) -> SyntheticSpec {
        SyntheticSpec {
            d_m: self.d_m,
            d_e: self.d_e,
            n: self.n,
            k: self.k,
            seed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalParams {
    pub batches: usize,
    pub batch_size: usize,
}

impl Default for EvalParams {
    fn default() -> Self {
        let e = EvalConfig::default();
        EvalParams {
            batches: e.eval_batches,
            batch_size: e.eval_batch_size,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RobotParams {
    /// Dataset size, a multiple of the steps per target.
    pub samples: usize,
    pub option: RobotOption,
    /// Where `z_post` splits into its vision and proprioception parts.
    pub split_index: usize,
    /// Budget of the stages trained once per repetition (AES pre-encoder,
    /// cross-modal predictors).
    pub stage_schedule: Schedule,
    /// Write a mean error map per cell.
    pub error_maps: bool,
}

impl Default for RobotParams {
    fn default() -> Self {
        RobotParams {
            samples: 100_000,
            option: RobotOption::Default,
            split_index: VISION_CODE,
            stage_schedule: Schedule::default(),
            error_maps: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Label used in output files; defaults to the kind (and robot option).
    pub name: Option<String>,
    pub kind: ExperimentKind,
    pub seed: u64,
    pub repetitions: usize,
    /// Latent sizes to train; `d_z = 0` is never trained.
    pub d_z: Option<Vec<usize>>,
    pub schedule: Schedule,
    /// Readout budget; defaults to `schedule`.
    pub readout: Option<Schedule>,
    pub synthetic: SyntheticParams,
    pub eval: EvalParams,
    pub robot: RobotParams,
    pub arm: ArmConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            name: None,
            kind: ExperimentKind::SyntheticJe,
            seed: 0,
            repetitions: 3,
            d_z: None,
            schedule: Schedule::default(),
            readout: None,
            synthetic: SyntheticParams::default(),
            eval: EvalParams::default(),
            robot: RobotParams::default(),
            arm: ArmConfig::default(),
        }
    }
}

pub const SYNTHETIC_DZ_MAX: usize = 30;
pub const ROBOT_DZ: [usize; 9] = [1, 2, 4, 8, 10, 14, 20, 32, 64];

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        ExperimentConfig::from_toml(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn label(&self) -> String {
        self.name.clone().unwrap_or_else(|| self.seed_label())
    }

    /// The label that seeds depend on: kind and robot option, never the name.
    pub fn seed_label(&self) -> String {
        let base = serde_plain_kind(self.kind);
        if self.kind.is_robot() {
            format!("{base}_{}", self.robot.option.label())
        } else {
            base.to_string()
        }
    }

    pub fn sweep(&self) -> Vec<usize> {
        match &self.d_z {
            Some(v) => v.clone(),
            None if self.kind.is_robot() => ROBOT_DZ.to_vec(),
            None => (1..=SYNTHETIC_DZ_MAX).collect(),
        }
    }

    pub fn readout_schedule(&self) -> Schedule {
        self.readout.unwrap_or(self.schedule)
    }

    pub fn eval_config(&self) -> EvalConfig {
        EvalConfig {
            schedule: self.readout_schedule(),
            eval_batches: self.eval.batches,
            eval_batch_size: self.eval.batch_size,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.repetitions == 0 {
            return Err(Error::Config("repetitions must be at least 1".into()));
        }
        if let Some(v) = &self.d_z {
            if v.contains(&0) {
                return Err(Error::Config("d_z = 0 is reported analytically; sweep values must be >= 1".into()));
            }
        }
        for s in [self.schedule, self.readout_schedule(), self.robot.stage_schedule] {
            if s.batch_size == 0 || !(s.lr > 0.0) {
                return Err(Error::Config("schedules need a positive batch size and learning rate".into()));
            }
        }
        if self.kind.is_robot() {
            self.arm.validate()?;
            if self.robot.samples % self.arm.steps_per_target != 0 || self.robot.samples < 2 * self.arm.steps_per_target {
                return Err(Error::Config(format!(
                    "robot.samples = {} must be a multiple of {} covering at least two episodes",
                    self.robot.samples, self.arm.steps_per_target
                )));
            }
        } else {
            self.synthetic.spec(0).validate()?;
            if self.eval.batches < MIN_EVAL_BATCHES {
                return Err(Error::Config(format!("eval.batches must be at least {MIN_EVAL_BATCHES}")));
            }
        }
        Ok(())
    }
}

fn serde_plain_kind(k: ExperimentKind) -> &'static str {
    match k {
        ExperimentKind::SyntheticJe => "synthetic_je",
        ExperimentKind::SyntheticControl => "synthetic_control",
        ExperimentKind::SyntheticCm => "synthetic_cm",
        ExperimentKind::RobotJe => "robot_je",
        ExperimentKind::RobotCm => "robot_cm",
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_parse_from_empty_text() {
        let c = ExperimentConfig::from_toml("").unwrap();
        assert_eq!(c.sweep(), (1..=30).collect::<Vec<_>>());
        assert_eq!(c.repetitions, 3);
        assert_eq!(c.schedule, Schedule::default());
    }

    #[test]
    fn sections_override_defaults() {
        let c = ExperimentConfig::from_toml(
            "kind = \"robot_cm\"\nd_z = [1, 4]\n[robot]\noption = \"aes\"\nsamples = 1000\n[schedule]\nbatches = 10\n",
        )
        .unwrap();
        assert_eq!(c.label(), "robot_cm_aes");
        assert_eq!(c.sweep(), vec![1, 4]);
        assert_eq!(c.schedule.batches, 10);
        assert_eq!(c.schedule.batch_size, 128);
    }

    #[test]
    fn rejects_zero_latent_and_unknown_keys() {
        assert!(ExperimentConfig::from_toml("d_z = [0, 1]").is_err());
        assert!(ExperimentConfig::from_toml("bogus = 1").is_err());
        assert!(ExperimentConfig::from_toml("repetitions = 0").is_err());
    }

    #[test]
    fn toml_round_trip() {
        let c = ExperimentConfig {
            d_z: Some(vec![2, 3]),
            ..ExperimentConfig::default()
        };
        assert_eq!(ExperimentConfig::from_toml(&c.to_toml().unwrap()).unwrap(), c);
    }
}
