//! Minibatch SGD with heavy-ball momentum and a one-cycle triangular
//! learning rate, in four regimes.

use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::net::{accumulate_batch, DenseNet, Gradient, Objective, Workspace};
use crate::perturb::PerturbationSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Plain mean squared error.
    Standard,
    /// Squared error on inputs resampled uniformly from their noise box
    /// every epoch.
    Noise,
    /// Robust squared error from the dual bound.
    Robust,
    /// Mixture of squared error on everything and robust squared error on
    /// the target output range.
    Targeted,
}

impl Mode {
    pub const ALL: [Mode; 4] = [Mode::Standard, Mode::Noise, Mode::Robust, Mode::Targeted];

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Standard => "standard",
            Mode::Noise => "noise",
            Mode::Robust => "robust",
            Mode::Targeted => "targeted",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Mode::ALL.into_iter().find(|m| m.as_str() == s)
    }
}

/// Closed output interval `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TargetRange {
    pub lo: f64,
    pub hi: f64,
}

impl TargetRange {
    pub fn contains(&self, y: f64) -> bool {
        self.lo <= y && y <= self.hi
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub mode: Mode,
    pub hidden_dim: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub momentum: f64,
    pub lr_peak: f64,
    pub lr_peak_epoch: usize,
    pub lambda: f64,
    pub target_range: TargetRange,
    pub eps_ramp_epochs: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Standard,
            hidden_dim: 32,
            epochs: 1000,
            batch_size: 512,
            momentum: 0.9,
            lr_peak: 0.035,
            lr_peak_epoch: 250,
            lambda: 0.8,
            target_range: TargetRange { lo: 0.6, hi: 1.0 },
            eps_ramp_epochs: 250,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.into()));
        if self.hidden_dim == 0 || self.epochs == 0 || self.batch_size == 0 {
            return bad("hidden_dim, epochs and batch_size must be positive");
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return bad("lambda must lie in [0, 1]");
        }
        if self.lr_peak_epoch > self.epochs {
            return bad("lr_peak_epoch must not exceed epochs");
        }
        if !(self.lr_peak.is_finite() && self.lr_peak >= 0.0) || !(0.0..1.0).contains(&self.momentum) {
            return bad("need lr_peak >= 0 and momentum in [0, 1)");
        }
        let r = self.target_range;
        if !(0.0 <= r.lo && r.lo <= r.hi && r.hi <= 1.0) {
            return bad("target range must be a sub-interval of [0, 1]");
        }
        Ok(())
    }
}

/// Learning rate for `epoch`: linear from 0 up to `lr_peak` at
/// `lr_peak_epoch`, then linear back to 0 at `epochs`.
pub fn cyclic_lr(epoch: usize, cfg: &TrainConfig) -> f64 {
    let peak = cfg.lr_peak_epoch;
    if epoch <= peak {
        if peak == 0 {
            cfg.lr_peak
        } else {
            cfg.lr_peak * epoch as f64 / peak as f64
        }
    } else {
        let tail = cfg.epochs.saturating_sub(peak);
        let left = cfg.epochs.saturating_sub(epoch);
        cfg.lr_peak * left as f64 / tail as f64
    }
}

/// Fraction of the full epsilon used in `epoch` by the robust regimes.
pub fn eps_scale(epoch: usize, cfg: &TrainConfig) -> f64 {
    if cfg.eps_ramp_epochs == 0 {
        1.0
    } else {
        (epoch as f64 / cfg.eps_ramp_epochs as f64).min(1.0)
    }
}

pub fn train(data: &Dataset, cfg: &TrainConfig, spec: &PerturbationSpec) -> Result<DenseNet> {
    train_with_history(data, cfg, spec).map(|(net, _)| net)
}

/// Trains and also returns the mean training loss of every epoch (measured
/// on the fly, before each step).
pub fn train_with_history(data: &Dataset, cfg: &TrainConfig, spec: &PerturbationSpec) -> Result<(DenseNet, Vec<f64>)> {
    cfg.validate()?;
    spec.validate()?;
    if data.is_empty() {
        return Err(Error::EmptyBatch);
    }
    if cfg.mode == Mode::Targeted && !data.targets().iter().any(|y| cfg.target_range.contains(*y)) {
        return Err(Error::Config("no training example falls in the target range".into()));
    }

    let k = data.input_dim();
    let n = data.len();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut net = DenseNet::init(k, cfg.hidden_dim, &mut rng);
    let mut velocity = Gradient::zeros_like(&net);
    let mut grad = Gradient::zeros_like(&net);
    let mut ws = Workspace::default();
    let mut order: Vec<usize> = (0..n).collect();
    let mut xs: Vec<f64> = Vec::with_capacity(cfg.batch_size * k);
    let mut ys: Vec<f64> = Vec::with_capacity(cfg.batch_size);
    let mut history = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        let lr = cyclic_lr(epoch, cfg);
        let eps = spec.scaled(eps_scale(epoch, cfg));
        let objective = match cfg.mode {
            Mode::Standard | Mode::Noise => Objective::Mse,
            Mode::Robust => Objective::RobustMse(eps),
            Mode::Targeted => Objective::Targeted {
                lambda: cfg.lambda,
                range: cfg.target_range,
                spec: eps,
            },
        };
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            xs.clear();
            ys.clear();
            for &i in batch {
                let x = data.row(i);
                if cfg.mode == Mode::Noise {
                    let start = xs.len();
                    xs.resize(start + k, 0.0);
                    spec.box_of_unchecked(x).sample_into(&mut rng, &mut xs[start..]);
                } else {
                    xs.extend_from_slice(x);
                }
                ys.push(data.targets()[i]);
            }
            grad.reset();
            let loss = accumulate_batch(&net, &xs, &ys, objective, &mut grad, &mut ws);
            epoch_loss += loss * batch.len() as f64;
            for ((p, v), g) in net.params_mut().zip(velocity.values_mut()).zip(grad.values()) {
                *v = cfg.momentum * *v - lr * g;
                *p += *v;
            }
        }
        if !net.is_finite() {
            return Err(Error::Domain(alloc::format!("non-finite weights after epoch {epoch}")));
        }
        history.push(epoch_loss / n as f64);
    }
    Ok((net, history))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Generator;

    #[test]
    fn lr_schedule() {
        let cfg = TrainConfig::default();
        assert_eq!(cyclic_lr(0, &cfg), 0.0);
        assert!((cyclic_lr(250, &cfg) - 0.035).abs() < 1e-15);
        assert!((cyclic_lr(625, &cfg) - 0.0175).abs() < 1e-15);
        assert!((cyclic_lr(125, &cfg) - 0.0175).abs() < 1e-15);
        assert!(cyclic_lr(999, &cfg) > 0.0);
    }

    #[test]
    fn config_validation() {
        let mut cfg = TrainConfig::default();
        assert!(cfg.validate().is_ok());
        cfg.lambda = 1.5;
        assert!(cfg.validate().is_err());
        let cfg = TrainConfig {
            lr_peak_epoch: 2000,
            ..TrainConfig::default()
        };
        assert!(cfg.validate().is_err());
        let cfg = TrainConfig {
            target_range: TargetRange { lo: 0.5, hi: 1.2 },
            ..TrainConfig::default()
        };
        assert!(cfg.validate().is_err());
    }

    fn small_cfg(mode: Mode) -> TrainConfig {
        TrainConfig {
            mode,
            hidden_dim: 8,
            epochs: 6,
            batch_size: 32,
            lr_peak_epoch: 2,
            eps_ramp_epochs: 2,
            seed: 17,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn robust_without_noise_equals_standard() {
        let ds = Generator::new(6).generate(200, 1).unwrap();
        let a = train(&ds, &small_cfg(Mode::Standard), &PerturbationSpec::default()).unwrap();
        let b = train(&ds, &small_cfg(Mode::Robust), &PerturbationSpec::zero()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn targeted_lambda_one_equals_standard() {
        let ds = Generator::new(6).generate(200, 2).unwrap();
        let spec = PerturbationSpec::default();
        let a = train(&ds, &small_cfg(Mode::Standard), &spec).unwrap();
        let mut cfg = small_cfg(Mode::Targeted);
        cfg.lambda = 1.0;
        let b = train(&ds, &cfg, &spec).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn deterministic_per_seed() {
        let ds = Generator::new(6).generate(200, 3).unwrap();
        let spec = PerturbationSpec::default();
        for mode in Mode::ALL {
            let a = train(&ds, &small_cfg(mode), &spec).unwrap();
            let b = train(&ds, &small_cfg(mode), &spec).unwrap();
            assert_eq!(a, b, "{mode:?}");
        }
    }

    #[test]
    fn targeted_needs_targets_in_range() {
        let ds = Generator::new(4).generate(50, 4).unwrap();
        let mut cfg = small_cfg(Mode::Targeted);
        cfg.target_range = TargetRange { lo: 0.0, hi: 0.01 };
        assert!(matches!(train(&ds, &cfg, &PerturbationSpec::default()), Err(Error::Config(_))));
    }

    #[test]
    fn mode_names_round_trip() {
        for m in Mode::ALL {
            assert_eq!(Mode::parse(m.as_str()), Some(m));
        }
        assert_eq!(Mode::parse("adversarial"), None);
    }
}
