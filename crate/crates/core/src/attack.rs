//! Empirical worst-case search over the noise box.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::error::{check_len, Error, Result};
use crate::net::DenseNet;
use crate::perturb::InputBox;

/// Projected sign-gradient attack settings. Step sizes are per feature
/// group: the time series and the trailing scalar sensor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttackConfig {
    pub steps: usize,
    pub step_series: f64,
    pub step_scalar: f64,
    pub restarts: usize,
    pub random_start: bool,
}

impl Default for AttackConfig {
    fn default() -> Self {
        Self {
            steps: 10,
            step_series: 0.0025,
            step_scalar: 0.00025,
            restarts: 1,
            random_start: false,
        }
    }
}

impl AttackConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = |s: f64| s.is_finite() && s > 0.0;
        if !ok(self.step_series) || !ok(self.step_scalar) {
            return Err(Error::Config("attack step sizes must be positive".into()));
        }
        if self.restarts == 0 {
            return Err(Error::Config("attack needs at least one restart".into()));
        }
        Ok(())
    }

    #[inline]
    fn step_at(&self, i: usize, k: usize) -> f64 {
        if i + 1 < k {
            self.step_series
        } else {
            self.step_scalar
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttackResult {
    /// Best iterate found; always inside the box.
    pub input: Vec<f64>,
    pub output: f64,
    /// `|f(input) - y| / |y|`.
    pub relative_error: f64,
}

fn relative(f: f64, y: f64) -> f64 {
    (f - y).abs() / y.abs()
}

/// PGD on `(f(z) - y)^2`. The clean input is always a candidate, so the
/// result is never worse than no attack.
pub fn pgd_attack<R: Rng + ?Sized>(
    net: &DenseNet,
    x: &[f64],
    y: f64,
    bx: &InputBox,
    cfg: &AttackConfig,
    rng: &mut R,
) -> Result<AttackResult> {
    check_len(net.input_dim(), x.len())?;
    check_len(net.input_dim(), bx.dim())?;
    if y == 0.0 {
        return Err(Error::Domain("relative error undefined for target 0".into()));
    }
    let k = x.len();
    let mut best_z = x.to_vec();
    let mut best_f = net.eval(x);
    let mut best_obj = (best_f - y) * (best_f - y);
    let mut z = vec![0.0; k];
    let mut grad = vec![0.0; k];
    // without random starts every restart would retrace the same path
    let runs = if cfg.random_start { cfg.restarts.max(1) } else { 1 };
    for _ in 0..runs {
        if cfg.random_start {
            bx.sample_into(rng, &mut z);
        } else {
            z.copy_from_slice(x);
        }
        for _ in 0..cfg.steps {
            let f = net.eval(&z);
            net.input_gradient(&z, &mut grad);
            // d/dz (f - y)^2 = 2 (f - y) ∇f; at f = y move along +∇f
            let dir = if f > y {
                1.0
            } else if f < y {
                -1.0
            } else {
                1.0
            };
            for i in 0..k {
                let g = dir * grad[i];
                if g != 0.0 {
                    z[i] += cfg.step_at(i, k) * g.signum();
                }
            }
            bx.project(&mut z);
            let f = net.eval(&z);
            let obj = (f - y) * (f - y);
            if obj > best_obj {
                best_obj = obj;
                best_f = f;
                best_z.copy_from_slice(&z);
            }
        }
    }
    Ok(AttackResult {
        relative_error: relative(best_f, y),
        input: best_z,
        output: best_f,
    })
}

/// Sign-gradient ascent on `c · f(z)` from `start`; returns the best
/// iterate and its output `f`. Used to seed the exact verifier.
pub(crate) fn signed_ascent(net: &DenseNet, bx: &InputBox, start: &[f64], c: f64, cfg: &AttackConfig) -> (Vec<f64>, f64) {
    let k = start.len();
    let mut z = start.to_vec();
    bx.project(&mut z);
    let mut best_z = z.clone();
    let mut best = net.eval(&z);
    let mut grad = vec![0.0; k];
    for _ in 0..cfg.steps {
        net.input_gradient(&z, &mut grad);
        for i in 0..k {
            let g = c * grad[i];
            if g != 0.0 {
                z[i] += cfg.step_at(i, k) * g.signum();
            }
        }
        bx.project(&mut z);
        let f = net.eval(&z);
        if c * f > c * best {
            best = f;
            best_z.copy_from_slice(&z);
        }
    }
    (best_z, best)
}

/// Mean relative error over `draws` uniform samples from the box.
pub fn noise_error<R: Rng + ?Sized>(net: &DenseNet, y: f64, bx: &InputBox, draws: usize, rng: &mut R) -> Result<f64> {
    check_len(net.input_dim(), bx.dim())?;
    if draws == 0 {
        return Err(Error::Config("noise evaluation needs at least one draw".into()));
    }
    if y == 0.0 {
        return Err(Error::Domain("relative error undefined for target 0".into()));
    }
    let mut z = vec![0.0; bx.dim()];
    let mut total = 0.0;
    for _ in 0..draws {
        bx.sample_into(rng, &mut z);
        total += relative(net.eval(&z), y);
    }
    Ok(total / draws as f64)
}
