//! One-hidden-layer ReLU regression network and its loss gradients.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::bounds::{self, BoundScratch};
use crate::error::{check_len, Error, Result};
use crate::perturb::PerturbationSpec;
use crate::train::TargetRange;

/// `f(x) = w2 · relu(W1 x + b1) + b2`, with `W1` stored row-major (`m × K`).
#[derive(Debug, Clone, PartialEq)]
pub struct DenseNet {
    input_dim: usize,
    hidden_dim: usize,
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: f64,
}

impl DenseNet {
    pub fn zeros(input_dim: usize, hidden_dim: usize) -> Self {
        Self {
            input_dim,
            hidden_dim,
            w1: vec![0.0; input_dim * hidden_dim],
            b1: vec![0.0; hidden_dim],
            w2: vec![0.0; hidden_dim],
            b2: 0.0,
        }
    }

    pub fn from_parts(
        input_dim: usize,
        hidden_dim: usize,
        w1: Vec<f64>,
        b1: Vec<f64>,
        w2: Vec<f64>,
        b2: f64,
    ) -> Result<Self> {
        if input_dim == 0 || hidden_dim == 0 {
            return Err(Error::Config("network dimensions must be positive".into()));
        }
        check_len(input_dim * hidden_dim, w1.len())?;
        check_len(hidden_dim, b1.len())?;
        check_len(hidden_dim, w2.len())?;
        let net = Self {
            input_dim,
            hidden_dim,
            w1,
            b1,
            w2,
            b2,
        };
        if !net.is_finite() {
            return Err(Error::Domain("network parameters must be finite".into()));
        }
        Ok(net)
    }

    /// Uniform initialization in `±1/sqrt(fan_in)` for every layer.
    pub fn init<R: Rng + ?Sized>(input_dim: usize, hidden_dim: usize, rng: &mut R) -> Self {
        let mut net = Self::zeros(input_dim, hidden_dim);
        let r1 = 1.0 / libm::sqrt(input_dim as f64);
        let r2 = 1.0 / libm::sqrt(hidden_dim as f64);
        for w in net.w1.iter_mut().chain(net.b1.iter_mut()) {
            *w = rng.random_range(-r1..r1);
        }
        for w in net.w2.iter_mut() {
            *w = rng.random_range(-r2..r2);
        }
        net.b2 = rng.random_range(-r2..r2);
        net
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn hidden_dim(&self) -> usize {
        self.hidden_dim
    }

    #[inline]
    pub fn row(&self, j: usize) -> &[f64] {
        &self.w1[j * self.input_dim..(j + 1) * self.input_dim]
    }

    pub fn is_finite(&self) -> bool {
        self.params().all(|p| p.is_finite())
    }

    pub fn params(&self) -> impl Iterator<Item = &f64> {
        self.w1
            .iter()
            .chain(&self.b1)
            .chain(&self.w2)
            .chain(core::iter::once(&self.b2))
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.w1
            .iter_mut()
            .chain(self.b1.iter_mut())
            .chain(self.w2.iter_mut())
            .chain(core::iter::once(&mut self.b2))
    }

    pub fn forward(&self, x: &[f64]) -> Result<f64> {
        check_len(self.input_dim, x.len())?;
        Ok(self.eval(x))
    }

    /// Forward pass without the length check.
    #[inline]
    pub fn eval(&self, x: &[f64]) -> f64 {
        let mut out = self.b2;
        for j in 0..self.hidden_dim {
            let a = dot(self.row(j), x) + self.b1[j];
            if a > 0.0 {
                out += self.w2[j] * a;
            }
        }
        out
    }

    /// `∇_x f(x)`, taking the ReLU derivative at zero as 0.
    pub fn input_gradient(&self, x: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        for j in 0..self.hidden_dim {
            let row = self.row(j);
            if dot(row, x) + self.b1[j] > 0.0 {
                let w = self.w2[j];
                for (o, r) in out.iter_mut().zip(row) {
                    *o += w * r;
                }
            }
        }
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Gradient of a scalar loss with respect to every network parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: f64,
}

impl Gradient {
    pub fn zeros_like(net: &DenseNet) -> Self {
        Self {
            w1: vec![0.0; net.w1.len()],
            b1: vec![0.0; net.b1.len()],
            w2: vec![0.0; net.w2.len()],
            b2: 0.0,
        }
    }

    pub fn reset(&mut self) {
        self.w1.fill(0.0);
        self.b1.fill(0.0);
        self.w2.fill(0.0);
        self.b2 = 0.0;
    }

    pub fn values(&self) -> impl Iterator<Item = &f64> {
        self.w1
            .iter()
            .chain(&self.b1)
            .chain(&self.w2)
            .chain(core::iter::once(&self.b2))
    }

    pub fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.w1
            .iter_mut()
            .chain(self.b1.iter_mut())
            .chain(self.w2.iter_mut())
            .chain(core::iter::once(&mut self.b2))
    }
}

/// Loss minimized over a batch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Objective {
    /// Mean `(f(x) - y)^2`.
    Mse,
    /// Mean `max((l - y)^2, (u - y)^2)` where `(l, u)` is the dual bound over
    /// the noise box of each example.
    RobustMse(PerturbationSpec),
    /// `lambda * Mse(batch) + (1 - lambda) * RobustMse(batch ∩ target range)`.
    Targeted {
        lambda: f64,
        range: TargetRange,
        spec: PerturbationSpec,
    },
}

/// Reusable buffers for per-example gradient accumulation.
#[derive(Debug, Default)]
pub(crate) struct Workspace {
    act: Vec<f64>,
    bound: BoundScratch,
}

/// Mean loss and its exact gradient over a batch (`xs` row-major, one row
/// per target in `ys`).
pub fn backward(net: &DenseNet, xs: &[f64], ys: &[f64], objective: Objective) -> Result<(f64, Gradient)> {
    if ys.is_empty() {
        return Err(Error::EmptyBatch);
    }
    check_len(ys.len() * net.input_dim, xs.len())?;
    let mut grad = Gradient::zeros_like(net);
    let mut ws = Workspace::default();
    let loss = accumulate_batch(net, xs, ys, objective, &mut grad, &mut ws);
    Ok((loss, grad))
}

/// Adds the batch gradient into `grad` and returns the batch loss.
pub(crate) fn accumulate_batch(
    net: &DenseNet,
    xs: &[f64],
    ys: &[f64],
    objective: Objective,
    grad: &mut Gradient,
    ws: &mut Workspace,
) -> f64 {
    let k = net.input_dim;
    let n = ys.len();
    let rows = || xs.chunks_exact(k).zip(ys.iter().copied());
    match objective {
        Objective::Mse => {
            let w = 1.0 / n as f64;
            rows().map(|(x, y)| mse_example(net, x, y, w, grad, ws)).sum()
        }
        Objective::RobustMse(spec) => {
            let w = 1.0 / n as f64;
            rows()
                .map(|(x, y)| robust_example(net, x, y, &spec, w, grad, ws))
                .sum()
        }
        Objective::Targeted { lambda, range, spec } => {
            let w = lambda / n as f64;
            let mut loss: f64 = rows().map(|(x, y)| mse_example(net, x, y, w, grad, ws)).sum();
            if lambda < 1.0 {
                let n_tar = ys.iter().filter(|y| range.contains(**y)).count();
                if n_tar > 0 {
                    let w = (1.0 - lambda) / n_tar as f64;
                    for (x, y) in rows().filter(|(_, y)| range.contains(*y)) {
                        loss += robust_example(net, x, y, &spec, w, grad, ws);
                    }
                }
            }
            loss
        }
    }
}

/// Accumulates `weight * d/dθ (f(x) - y)^2` and returns `weight * (f(x) - y)^2`.
fn mse_example(net: &DenseNet, x: &[f64], y: f64, weight: f64, grad: &mut Gradient, ws: &mut Workspace) -> f64 {
    let m = net.hidden_dim;
    let k = net.input_dim;
    ws.act.resize(m, 0.0);
    let mut f = net.b2;
    for j in 0..m {
        let a = dot(net.row(j), x) + net.b1[j];
        ws.act[j] = a;
        if a > 0.0 {
            f += net.w2[j] * a;
        }
    }
    let r = f - y;
    let g = 2.0 * r * weight;
    grad.b2 += g;
    for j in 0..m {
        let a = ws.act[j];
        if a > 0.0 {
            grad.w2[j] += g * a;
            let gj = g * net.w2[j];
            grad.b1[j] += gj;
            for (gw, xi) in grad.w1[j * k..(j + 1) * k].iter_mut().zip(x) {
                *gw += gj * xi;
            }
        }
    }
    weight * r * r
}

fn robust_example(
    net: &DenseNet,
    x: &[f64],
    y: f64,
    spec: &PerturbationSpec,
    weight: f64,
    grad: &mut Gradient,
    ws: &mut Workspace,
) -> f64 {
    let bx = spec.box_of_unchecked(x);
    if bx.is_degenerate() {
        // The relaxation is exact at a point, so the robust loss is the plain one.
        return mse_example(net, x, y, weight, grad, ws);
    }
    let sc = &mut ws.bound;
    bounds::fill_intervals(net, &bx, &mut sc.iv);
    let upper = bounds::dual_objective(net, &bx, 1.0, sc);
    let lower = -bounds::dual_objective(net, &bx, -1.0, sc);
    let du = upper - y;
    let dl = lower - y;
    // ties take the upper branch
    if du * du >= dl * dl {
        bounds::dual_objective_grad(net, &bx, 1.0, weight * 2.0 * du, grad, sc);
        weight * du * du
    } else {
        // lower = -J(-1), so d/dθ (lower - y)^2 = -2 (lower - y) dJ(-1)/dθ
        bounds::dual_objective_grad(net, &bx, -1.0, -weight * 2.0 * dl, grad, sc);
        weight * dl * dl
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn hand_net() -> DenseNet {
        DenseNet::from_parts(1, 1, vec![1.0], vec![-0.1], vec![1.0], 0.0).unwrap()
    }

    #[test]
    fn constant_network() {
        let mut net = DenseNet::zeros(4, 3);
        net.b2 = 0.7;
        assert_eq!(net.forward(&[0.1, 0.9, 0.3, 0.5]).unwrap(), 0.7);
    }

    #[test]
    fn relu_clamp_and_active() {
        let net = hand_net();
        assert_eq!(net.forward(&[0.05]).unwrap(), 0.0);
        assert!((net.forward(&[0.3]).unwrap() - 0.2).abs() < 1e-15);
    }

    #[test]
    fn shape_error() {
        assert_eq!(
            hand_net().forward(&[0.1, 0.2]),
            Err(Error::InputShape { expected: 1, found: 2 })
        );
    }

    #[test]
    fn constant_net_mse_gradient() {
        let mut net = DenseNet::zeros(3, 2);
        net.b2 = 0.4;
        let (_, g) = backward(&net, &[0.2, 0.3, 0.4], &[0.9], Objective::Mse).unwrap();
        assert!((g.b2 - 2.0 * (0.4 - 0.9)).abs() < 1e-15);
        assert!(g.w1.iter().chain(&g.b1).chain(&g.w2).all(|v| *v == 0.0));
    }

    #[test]
    fn duplicated_batch_same_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let net = DenseNet::init(3, 4, &mut rng);
        let xs = [0.1, 0.5, 0.9, 0.3, 0.2, 0.7];
        let ys = [0.4, 0.6];
        let mut xs2 = xs.to_vec();
        xs2.extend_from_slice(&xs);
        let mut ys2 = ys.to_vec();
        ys2.extend_from_slice(&ys);
        for obj in [Objective::Mse, Objective::RobustMse(PerturbationSpec::new(0.05, 0.01))] {
            let (l1, g1) = backward(&net, &xs, &ys, obj).unwrap();
            let (l2, g2) = backward(&net, &xs2, &ys2, obj).unwrap();
            assert!((l1 - l2).abs() < 1e-14);
            for (a, b) in g1.values().zip(g2.values()) {
                assert!((a - b).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn empty_batch() {
        assert_eq!(
            backward(&hand_net(), &[], &[], Objective::Mse).unwrap_err(),
            Error::EmptyBatch
        );
    }

    #[test]
    fn init_is_bounded() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let net = DenseNet::init(16, 8, &mut rng);
        assert!(net.w1.iter().chain(&net.b1).all(|w| w.abs() <= 0.25));
        assert!(net.w2.iter().all(|w| w.abs() <= 1.0 / libm::sqrt(8.0)));
    }
}
