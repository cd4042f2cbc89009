//! Run configuration: every knob of a pipeline run in one TOML document.
//!
//! A single master `seed` drives everything: the training set uses `seed`,
//! the test set `seed + 1`, and training and evaluation streams use `seed`.

use std::path::Path;

use serde::{Deserialize, Serialize};
use vsensor_core::{
    AttackConfig, EvalConfig, ExactConfig, Generator, Method, Mode, PerturbationSpec, TargetRange, TrainConfig,
};

use crate::error::{format_err, io_err, Error, Result};
use crate::io::{mode_name, write_atomic};

mod method_name {
    use serde::{de::Error, Deserialize, Deserializer, Serializer};
    use vsensor_core::Method;

    pub fn serialize<S: Serializer>(m: &Method, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(m.as_str())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Method, D::Error> {
        let s = String::deserialize(d)?;
        Method::parse(&s).ok_or_else(|| D::Error::custom(format!("unknown method `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    pub n_train: usize,
    pub n_test: usize,
    pub input_dim: usize,
    pub y_min: f64,
    pub noise_sigma: f64,
}

impl Default for DataSection {
    fn default() -> Self {
        let g = Generator::default();
        Self {
            n_train: 20_000,
            n_test: 1_000,
            input_dim: g.input_dim,
            y_min: g.y_min,
            noise_sigma: g.noise_sigma,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    #[serde(with = "mode_name")]
    pub mode: Mode,
    pub hidden_dim: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub momentum: f64,
    pub lr_peak: f64,
    pub lr_peak_epoch: usize,
    pub lambda: f64,
    pub target_lo: f64,
    pub target_hi: f64,
    pub eps_ramp_epochs: usize,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            mode: t.mode,
            hidden_dim: t.hidden_dim,
            epochs: t.epochs,
            batch_size: t.batch_size,
            momentum: t.momentum,
            lr_peak: t.lr_peak,
            lr_peak_epoch: t.lr_peak_epoch,
            lambda: t.lambda,
            target_lo: t.target_range.lo,
            target_hi: t.target_range.hi,
            eps_ramp_epochs: t.eps_ramp_epochs,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PerturbSection {
    pub eps_series: f64,
    pub eps_scalar: f64,
}

impl Default for PerturbSection {
    fn default() -> Self {
        let p = PerturbationSpec::default();
        Self {
            eps_series: p.eps_series,
            eps_scalar: p.eps_scalar,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AttackSection {
    pub steps: usize,
    pub step_series: f64,
    pub step_scalar: f64,
    pub restarts: usize,
    pub random_start: bool,
}

impl Default for AttackSection {
    fn default() -> Self {
        let a = AttackConfig::default();
        Self {
            steps: a.steps,
            step_series: a.step_series,
            step_scalar: a.step_scalar,
            restarts: a.restarts,
            random_start: a.random_start,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifySection {
    #[serde(with = "method_name")]
    pub method: Method,
    pub tol: f64,
    pub node_limit: usize,
    /// Only the first `limit` test examples are verified and reported.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub limit: Option<usize>,
}

impl Default for VerifySection {
    fn default() -> Self {
        let e = ExactConfig::default();
        Self {
            method: Method::Milp,
            tol: e.tol,
            node_limit: e.node_limit,
            limit: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub noise_draws: usize,
    /// Test examples whose perturbed series are written out.
    pub series_ids: Vec<usize>,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            noise_draws: EvalConfig::default().noise_draws,
            series_ids: vec![0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub data: DataSection,
    pub train: TrainSection,
    pub perturb: PerturbSection,
    pub attack: AttackSection,
    pub verify: VerifySection,
    pub eval: EvalSection,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        toml::from_str(&text).map_err(|e| format_err(path, e))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always representable")
    }

    /// Writes the resolved configuration as `config.toml` under `dir`.
    pub fn echo(&self, dir: &Path) -> Result<()> {
        let text = self.to_toml();
        write_atomic(&dir.join("config.toml"), |w| w.write_all(text.as_bytes()))
    }

    pub fn validate(&self) -> Result<()> {
        self.train_config().validate()?;
        self.spec().validate()?;
        self.attack_config().validate()?;
        if self.data.n_train == 0 || self.data.n_test == 0 || self.data.input_dim < 2 {
            return Err(Error::Config("need n_train, n_test >= 1 and input_dim >= 2".into()));
        }
        if !(self.verify.tol >= 0.0) || self.verify.node_limit == 0 {
            return Err(Error::Config("need tol >= 0 and node_limit >= 1".into()));
        }
        Ok(())
    }

    pub fn generator(&self) -> Generator {
        Generator {
            input_dim: self.data.input_dim,
            y_min: self.data.y_min,
            noise_sigma: self.data.noise_sigma,
        }
    }

    pub fn train_seed(&self) -> u64 {
        self.seed
    }

    pub fn test_seed(&self) -> u64 {
        self.seed.wrapping_add(1)
    }

    pub fn train_config(&self) -> TrainConfig {
        let t = &self.train;
        TrainConfig {
            mode: t.mode,
            hidden_dim: t.hidden_dim,
            epochs: t.epochs,
            batch_size: t.batch_size,
            momentum: t.momentum,
            lr_peak: t.lr_peak,
            lr_peak_epoch: t.lr_peak_epoch,
            lambda: t.lambda,
            target_range: TargetRange {
                lo: t.target_lo,
                hi: t.target_hi,
            },
            eps_ramp_epochs: t.eps_ramp_epochs,
            seed: self.seed,
        }
    }

    pub fn spec(&self) -> PerturbationSpec {
        PerturbationSpec::new(self.perturb.eps_series, self.perturb.eps_scalar)
    }

    pub fn attack_config(&self) -> AttackConfig {
        let a = &self.attack;
        AttackConfig {
            steps: a.steps,
            step_series: a.step_series,
            step_scalar: a.step_scalar,
            restarts: a.restarts,
            random_start: a.random_start,
        }
    }

    pub fn exact_config(&self) -> ExactConfig {
        ExactConfig {
            tol: self.verify.tol,
            node_limit: self.verify.node_limit,
            attack: self.attack_config(),
        }
    }

    pub fn eval_config(&self) -> EvalConfig {
        EvalConfig {
            attack: self.attack_config(),
            noise_draws: self.eval.noise_draws,
            seed: self.seed,
        }
    }
}
