//! Certified output bounds from the linear relaxation of the hidden ReLUs.
//!
//! For a sign `c ∈ {+1, -1}` the dual objective `J(c)` upper-bounds
//! `max_{z ∈ box} c·f(z)`. Each hidden unit with pre-activation interval
//! `[l, u]` is replaced by a linear function of its pre-activation: identity
//! when `l ≥ 0`, zero when `u ≤ 0`, and otherwise slope `s = u / (u - l)`,
//! adding the chord offset `-s·l` only where the unit pushes the objective
//! up (`c·w2_j > 0`). The remaining affine function of `z` is maximized over
//! the box coordinate-wise.
//!
//! The same routine is differentiated in closed form for robust training;
//! unit phases and the sign tests are held fixed, which yields a valid
//! subgradient of the piecewise-smooth bound.

use alloc::vec::Vec;

use crate::error::{check_len, Error, Result};
use crate::net::{dot, DenseNet, Gradient};
use crate::perturb::InputBox;

/// Interval widths below this are treated as a point.
const DEGENERATE_WIDTH: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Inactive,
    Active,
    Unstable,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PreactivationIntervals {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub phase: Vec<Phase>,
}

impl PreactivationIntervals {
    pub fn unstable_units(&self) -> impl Iterator<Item = usize> + '_ {
        self.phase
            .iter()
            .enumerate()
            .filter(|(_, p)| **p == Phase::Unstable)
            .map(|(j, _)| j)
    }
}

/// Certified bounds `lower ≤ f(z) ≤ upper` over a box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundPair {
    pub lower: f64,
    pub upper: f64,
}

impl BoundPair {
    pub fn point(v: f64) -> Self {
        Self { lower: v, upper: v }
    }
}

pub fn preactivation_intervals(net: &DenseNet, bx: &InputBox) -> Result<PreactivationIntervals> {
    check_len(net.input_dim(), bx.dim())?;
    let mut iv = PreactivationIntervals::default();
    fill_intervals(net, bx, &mut iv);
    Ok(iv)
}

pub(crate) fn fill_intervals(net: &DenseNet, bx: &InputBox, iv: &mut PreactivationIntervals) {
    let m = net.hidden_dim();
    iv.lower.clear();
    iv.upper.clear();
    iv.phase.clear();
    for j in 0..m {
        let mut l = net.b1[j];
        let mut u = net.b1[j];
        for ((w, lo), hi) in net.row(j).iter().zip(&bx.lo).zip(&bx.hi) {
            if *w >= 0.0 {
                l += w * lo;
                u += w * hi;
            } else {
                l += w * hi;
                u += w * lo;
            }
        }
        let phase = if u - l < DEGENERATE_WIDTH {
            if 0.5 * (l + u) >= 0.0 {
                Phase::Active
            } else {
                Phase::Inactive
            }
        } else if l >= 0.0 {
            Phase::Active
        } else if u <= 0.0 {
            Phase::Inactive
        } else {
            Phase::Unstable
        };
        iv.lower.push(l);
        iv.upper.push(u);
        iv.phase.push(phase);
    }
}

#[derive(Debug, Clone, Default)]
pub(crate) struct BoundScratch {
    pub(crate) iv: PreactivationIntervals,
    g: Vec<f64>,
    sel: Vec<f64>,
}

/// Slope of the relaxation of an unstable unit.
#[inline]
fn slope(l: f64, u: f64) -> f64 {
    u / (u - l)
}

/// Builds `g = Σ_j ν_j W1_j` and the maximizing box corner `sel` for sign
/// `c`. Returns `Σ_j (ν_j b1_j + κ_j)`.
fn linear_reduction(net: &DenseNet, bx: &InputBox, c: f64, sc: &mut BoundScratch) -> f64 {
    let k = net.input_dim();
    sc.g.clear();
    sc.g.resize(k, 0.0);
    let mut offset = 0.0;
    for j in 0..net.hidden_dim() {
        let c_hat = c * net.w2[j];
        let nu = match sc.iv.phase[j] {
            Phase::Inactive => continue,
            Phase::Active => c_hat,
            Phase::Unstable => {
                let (l, u) = (sc.iv.lower[j], sc.iv.upper[j]);
                let s = slope(l, u);
                if c_hat > 0.0 {
                    offset += c_hat * s * (-l);
                }
                c_hat * s
            }
        };
        offset += nu * net.b1[j];
        for (g, w) in sc.g.iter_mut().zip(net.row(j)) {
            *g += nu * w;
        }
    }
    sc.sel.clear();
    sc.sel
        .extend(sc.g.iter().zip(bx.lo.iter().zip(&bx.hi)).map(|(g, (lo, hi))| if *g >= 0.0 { *hi } else { *lo }));
    offset
}

/// `J(c)` using the intervals already stored in `sc.iv`.
pub(crate) fn dual_objective(net: &DenseNet, bx: &InputBox, c: f64, sc: &mut BoundScratch) -> f64 {
    let offset = linear_reduction(net, bx, c, sc);
    c * net.b2 + offset + dot(&sc.g, &sc.sel)
}

/// Adds `coef · ∂J(c)/∂θ` into `grad`. Expects `sc.iv` to be current.
pub(crate) fn dual_objective_grad(
    net: &DenseNet,
    bx: &InputBox,
    c: f64,
    coef: f64,
    grad: &mut Gradient,
    sc: &mut BoundScratch,
) {
    let k = net.input_dim();
    linear_reduction(net, bx, c, sc);
    grad.b2 += coef * c;
    for j in 0..net.hidden_dim() {
        let phase = sc.iv.phase[j];
        if phase == Phase::Inactive {
            continue;
        }
        let row = net.row(j);
        let c_hat = c * net.w2[j];
        // ∂J/∂ν_j
        let a_sel = dot(row, &sc.sel) + net.b1[j];
        let gw = &mut grad.w1[j * k..(j + 1) * k];
        match phase {
            Phase::Active => {
                grad.w2[j] += coef * c * a_sel;
                let nu = coef * c_hat;
                grad.b1[j] += nu;
                for (g, s) in gw.iter_mut().zip(&sc.sel) {
                    *g += nu * s;
                }
            }
            Phase::Unstable => {
                let (l, u) = (sc.iv.lower[j], sc.iv.upper[j]);
                let width = u - l;
                let s = u / width;
                let chord = c_hat > 0.0;
                let mut d_w2 = s * a_sel;
                let mut d_s = c_hat * a_sel;
                if chord {
                    d_w2 += s * (-l);
                    d_s += c_hat * (-l);
                }
                grad.w2[j] += coef * c * d_w2;
                let mut d_l = d_s * u / (width * width);
                if chord {
                    d_l -= c_hat * s;
                }
                let d_u = d_s * (-l) / (width * width);
                let nu = coef * c_hat * s;
                let (cl, cu) = (coef * d_l, coef * d_u);
                grad.b1[j] += nu + cl + cu;
                for (((g, w), lo), (hi, s_i)) in gw
                    .iter_mut()
                    .zip(row)
                    .zip(&bx.lo)
                    .zip(bx.hi.iter().zip(&sc.sel))
                {
                    let (dl_dw, du_dw) = if *w >= 0.0 { (*lo, *hi) } else { (*hi, *lo) };
                    *g += nu * s_i + cl * dl_dw + cu * du_dw;
                }
            }
            Phase::Inactive => unreachable!(),
        }
    }
}

/// Certified lower and upper bounds on `f` over `bx`.
pub fn dual_output_bounds(net: &DenseNet, bx: &InputBox) -> Result<BoundPair> {
    check_len(net.input_dim(), bx.dim())?;
    let mut sc = BoundScratch::default();
    fill_intervals(net, bx, &mut sc.iv);
    let upper = dual_objective(net, bx, 1.0, &mut sc);
    let lower = -dual_objective(net, bx, -1.0, &mut sc);
    Ok(BoundPair { lower, upper })
}

/// Upper bound on the worst-case squared error over the box.
pub fn robust_mse(bounds: BoundPair, y: f64) -> f64 {
    let dl = bounds.lower - y;
    let du = bounds.upper - y;
    (dl * dl).max(du * du)
}

/// Upper bound on the worst-case relative error `|f(z) - y| / |y|`.
pub fn certified_relative_error(bounds: BoundPair, y: f64) -> Result<f64> {
    if y == 0.0 || !y.is_finite() {
        return Err(Error::Domain(alloc::format!("relative error undefined for target {y}")));
    }
    Ok((bounds.lower - y).abs().max((bounds.upper - y).abs()) / y.abs())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::perturb::PerturbationSpec;
    use alloc::vec;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn hand_net() -> DenseNet {
        DenseNet::from_parts(1, 1, vec![1.0], vec![-0.1], vec![1.0], 0.0).unwrap()
    }

    fn random_box(rng: &mut ChaCha8Rng, k: usize, max_eps: f64) -> (Vec<f64>, InputBox) {
        let x: Vec<f64> = (0..k).map(|_| rng.random::<f64>()).collect();
        let e = rng.random::<f64>() * max_eps;
        let bx = PerturbationSpec::new(e, e).box_of(&x).unwrap();
        (x, bx)
    }

    #[test]
    fn point_box_intervals() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let net = DenseNet::init(4, 5, &mut rng);
        let x = [0.1, 0.2, 0.3, 0.4];
        let iv = preactivation_intervals(&net, &InputBox::point(&x)).unwrap();
        for j in 0..5 {
            let a = dot(net.row(j), &x) + net.b1[j];
            assert!((iv.lower[j] - a).abs() < 1e-15 && (iv.upper[j] - a).abs() < 1e-15);
        }
    }

    #[test]
    fn sign_split_interval() {
        let net = DenseNet::from_parts(2, 1, vec![1.0, -1.0], vec![0.0], vec![1.0], 0.0).unwrap();
        let bx = InputBox::new(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap();
        let iv = preactivation_intervals(&net, &bx).unwrap();
        assert_eq!((iv.lower[0], iv.upper[0]), (-1.0, 1.0));
        assert_eq!(iv.phase[0], Phase::Unstable);
    }

    #[test]
    fn sampled_preactivations_inside() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let net = DenseNet::init(4, 5, &mut rng);
        let (_, bx) = random_box(&mut rng, 4, 0.3);
        let iv = preactivation_intervals(&net, &bx).unwrap();
        for _ in 0..1000 {
            let z = bx.sample_uniform(&mut rng);
            for j in 0..5 {
                let a = dot(net.row(j), &z) + net.b1[j];
                assert!(iv.lower[j] <= a + 1e-12 && a <= iv.upper[j] + 1e-12);
            }
        }
    }

    #[test]
    fn hand_network_bounds() {
        let bx = InputBox::new(vec![0.0], vec![0.15]).unwrap();
        let b = dual_output_bounds(&hand_net(), &bx).unwrap();
        assert!((b.upper - 0.05).abs() < 1e-15, "{b:?}");
        assert!((b.lower + 1.0 / 30.0).abs() < 1e-15, "{b:?}");
    }

    #[test]
    fn point_collapse() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..20 {
            let net = DenseNet::init(6, 8, &mut rng);
            let x: Vec<f64> = (0..6).map(|_| rng.random()).collect();
            let b = dual_output_bounds(&net, &InputBox::point(&x)).unwrap();
            let f = net.eval(&x);
            assert!((b.lower - f).abs() <= 1e-12 && (b.upper - f).abs() <= 1e-12);
        }
    }

    /// With no unstable unit, f is affine on the box; enumerate corners.
    #[test]
    fn stable_units_match_corner_extrema() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut checked = 0;
        while checked < 20 {
            let net = DenseNet::init(3, 4, &mut rng);
            let (_, bx) = random_box(&mut rng, 3, 0.05);
            let iv = preactivation_intervals(&net, &bx).unwrap();
            if iv.unstable_units().count() > 0 {
                continue;
            }
            let mut hi = f64::NEG_INFINITY;
            let mut lo = f64::INFINITY;
            for mask in 0..8u32 {
                let z: Vec<f64> = (0..3)
                    .map(|i| if mask >> i & 1 == 1 { bx.hi[i] } else { bx.lo[i] })
                    .collect();
                let f = net.eval(&z);
                hi = hi.max(f);
                lo = lo.min(f);
            }
            let b = dual_output_bounds(&net, &bx).unwrap();
            assert!((b.upper - hi).abs() < 1e-12 && (b.lower - lo).abs() < 1e-12);
            checked += 1;
        }
    }

    #[test]
    fn sampled_soundness() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..30 {
            let net = DenseNet::init(5, 7, &mut rng);
            let (_, bx) = random_box(&mut rng, 5, 0.3);
            let b = dual_output_bounds(&net, &bx).unwrap();
            assert!(b.lower <= b.upper);
            let y: f64 = rng.random_range(0.05..1.0);
            let r = robust_mse(b, y);
            for _ in 0..1000 {
                let z = bx.sample_uniform(&mut rng);
                let f = net.eval(&z);
                assert!(b.lower - 1e-9 <= f && f <= b.upper + 1e-9);
                assert!((f - y) * (f - y) <= r + 1e-12);
            }
        }
    }

    #[test]
    fn robust_mse_examples() {
        assert_eq!(robust_mse(BoundPair::point(0.3), 0.3), 0.0);
        assert!((robust_mse(BoundPair { lower: 0.0, upper: 1.0 }, 0.3) - 0.49).abs() < 1e-15);
        assert!((robust_mse(BoundPair { lower: 0.2, upper: 0.4 }, 0.4) - 0.04).abs() < 1e-15);
    }

    #[test]
    fn certified_relative_error_examples() {
        assert_eq!(certified_relative_error(BoundPair::point(0.5), 0.5).unwrap(), 0.0);
        let e = certified_relative_error(BoundPair { lower: 0.45, upper: 0.55 }, 0.5).unwrap();
        assert!((e - 0.10).abs() < 1e-12);
        let e = certified_relative_error(BoundPair { lower: 0.4, upper: 0.7 }, 0.5).unwrap();
        assert!((e - 0.40).abs() < 1e-12);
        assert!(certified_relative_error(BoundPair::point(0.1), 0.0).is_err());
    }

    #[test]
    fn wider_box_never_shrinks_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..50 {
            let net = DenseNet::init(4, 6, &mut rng);
            let x: Vec<f64> = (0..4).map(|_| rng.random_range(0.2..0.8)).collect();
            let e = rng.random_range(0.0..0.05);
            let alpha = rng.random_range(1.0..3.0);
            let small = dual_output_bounds(&net, &PerturbationSpec::new(e, e).box_of(&x).unwrap()).unwrap();
            let big = dual_output_bounds(&net, &PerturbationSpec::new(e * alpha, e * alpha).box_of(&x).unwrap())
                .unwrap();
            assert!(big.lower <= small.lower + 1e-12 && big.upper >= small.upper - 1e-12);
        }
    }
}
