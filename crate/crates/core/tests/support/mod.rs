//! Independent oracles shared by the integration and acceptance tests.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vsensor_core::bounds::Phase;
use vsensor_core::lp::{self, LpProblem, LpStatus, Sense};
use vsensor_core::{
    backward, dual_output_bounds, exact_output_bounds, preactivation_intervals, robust_mse, DenseNet, ExactConfig,
    InputBox, Objective, PerturbationSpec,
};

/// Exact extremum of the network over the box by exhaustive phase
/// enumeration. For every on/off pattern of the unstable units the network
/// is affine on `{z ∈ box : sign(a_j(z)) matches the pattern}`; maximizing
/// that affine function is an LP in `z` alone.
pub fn enumerate_extremum(net: &DenseNet, bx: &InputBox, sense: Sense) -> f64 {
    let k = net.input_dim();
    let iv = preactivation_intervals(net, bx).unwrap();
    let unstable: Vec<usize> = iv.unstable_units().collect();
    let mut best: Option<f64> = None;
    for pattern in 0..(1u32 << unstable.len()) {
        let mut p = LpProblem::new(k, sense, 0.0, 1.0);
        p.lower.copy_from_slice(&bx.lo);
        p.upper.copy_from_slice(&bx.hi);
        let mut constant = net.b2;
        for j in 0..net.hidden_dim() {
            let on = match iv.phase[j] {
                Phase::Active => true,
                Phase::Inactive => false,
                Phase::Unstable => {
                    let t = unstable.iter().position(|&u| u == j).unwrap();
                    let on = pattern >> t & 1 == 1;
                    let row: Vec<f64> = net.row(j).iter().map(|w| if on { -w } else { *w }).collect();
                    // on: a_j(z) >= 0, off: a_j(z) <= 0
                    p.add_row(&row, if on { net.b1[j] } else { -net.b1[j] });
                    on
                }
            };
            if on {
                constant += net.w2[j] * net.b1[j];
                for (o, w) in p.objective.iter_mut().zip(net.row(j)) {
                    *o += net.w2[j] * w;
                }
            }
        }
        let sol = lp::solve(&p).unwrap();
        if sol.status == LpStatus::Infeasible {
            continue;
        }
        let v = sol.value + constant;
        best = Some(match (best, sense) {
            (None, _) => v,
            (Some(b), Sense::Maximize) => b.max(v),
            (Some(b), Sense::Minimize) => b.min(v),
        });
    }
    best.expect("some pattern is always feasible")
}

/// Outcome of comparing branch and bound with enumeration on random nets.
pub struct OracleSummary {
    pub worst_gap: f64,
    pub with_unstable: usize,
    pub dual_dominates: bool,
}

/// Random nets with `K ≤ 3`, `m ≤ 6` and random boxes.
pub fn compare_with_enumeration(nets: usize, seed: u64) -> OracleSummary {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s = OracleSummary {
        worst_gap: 0.0,
        with_unstable: 0,
        dual_dominates: true,
    };
    for _ in 0..nets {
        let k = rng.random_range(1..=3);
        let m = rng.random_range(1..=6);
        let net = DenseNet::init(k, m, &mut rng);
        let x: Vec<f64> = (0..k).map(|_| rng.random::<f64>()).collect();
        let e = rng.random_range(0.1..1.0);
        let bx = PerturbationSpec::new(e, e).box_of(&x).unwrap();
        let cert = exact_output_bounds(&net, &bx, &ExactConfig::default()).unwrap();
        let hi = enumerate_extremum(&net, &bx, Sense::Maximize);
        let lo = enumerate_extremum(&net, &bx, Sense::Minimize);
        s.worst_gap = s
            .worst_gap
            .max((cert.bounds.upper - hi).abs())
            .max((cert.bounds.lower - lo).abs());
        let dual = dual_output_bounds(&net, &bx).unwrap();
        s.dual_dominates &= dual.upper >= hi - 1e-9 && dual.lower <= lo + 1e-9;
        if preactivation_intervals(&net, &bx).unwrap().unstable_units().count() > 0 {
            s.with_unstable += 1;
        }
    }
    s
}

pub const FD_STEP: f64 = 1e-5;

/// Loss recomputed from the public forward and bound APIs.
pub fn loss_oracle(net: &DenseNet, xs: &[Vec<f64>], ys: &[f64], obj: Objective) -> f64 {
    let mse = |idx: &[usize]| idx.iter().map(|&i| (net.forward(&xs[i]).unwrap() - ys[i]).powi(2)).sum::<f64>() / idx.len() as f64;
    let rob = |spec: &PerturbationSpec, idx: &[usize]| {
        if idx.is_empty() {
            return 0.0;
        }
        idx.iter()
            .map(|&i| robust_mse(dual_output_bounds(net, &spec.box_of(&xs[i]).unwrap()).unwrap(), ys[i]))
            .sum::<f64>()
            / idx.len() as f64
    };
    let all: Vec<usize> = (0..ys.len()).collect();
    match obj {
        Objective::Mse => mse(&all),
        Objective::RobustMse(spec) => rob(&spec, &all),
        Objective::Targeted { lambda, range, spec } => {
            let tar: Vec<usize> = all.iter().copied().filter(|&i| range.contains(ys[i])).collect();
            lambda * mse(&all) + (1.0 - lambda) * rob(&spec, &tar)
        }
    }
}

/// Every pre-activation interval endpoint and the robust branch choice are
/// clear of their switching points.
pub fn away_from_kinks(net: &DenseNet, xs: &[Vec<f64>], ys: &[f64], spec: &PerturbationSpec) -> bool {
    xs.iter().zip(ys).all(|(x, y)| {
        let bx = spec.box_of(x).unwrap();
        let iv = preactivation_intervals(net, &bx).unwrap();
        let clear = iv.lower.iter().chain(&iv.upper).all(|v| v.abs() > 1e-3);
        let b = dual_output_bounds(net, &bx).unwrap();
        let no_tie = bx.is_degenerate() || ((b.lower - y).powi(2) - (b.upper - y).powi(2)).abs() > 1e-6;
        clear && no_tie
    })
}

/// Worst relative error between analytic and central-difference gradients,
/// or `None` when a kink falls inside the stencil of some parameter.
pub fn gradient_error(net: &DenseNet, xs: &[Vec<f64>], ys: &[f64], obj: Objective) -> Option<f64> {
    let (_, grad) = backward(net, &xs.concat(), ys, obj).unwrap();
    let mut worst = 0.0f64;
    for (p, a) in grad.values().enumerate() {
        let fd_at = |h: f64| {
            let mut plus = net.clone();
            *plus.params_mut().nth(p).unwrap() += h;
            let mut minus = net.clone();
            *minus.params_mut().nth(p).unwrap() -= h;
            (loss_oracle(&plus, xs, ys, obj) - loss_oracle(&minus, xs, ys, obj)) / (2.0 * h)
        };
        let fd = fd_at(FD_STEP);
        // a kink inside the stencil (e.g. a sign change of the reduced
        // input coefficients) shows up as disagreement between step sizes
        if (fd - fd_at(FD_STEP / 4.0)).abs() > 1e-4 * fd.abs().max(1e-6) {
            return None;
        }
        worst = worst.max((a - fd).abs() / a.abs().max(fd.abs()).max(1e-6));
    }
    Some(worst)
}

pub fn random_case(rng: &mut ChaCha8Rng, k: usize, m: usize, n: usize) -> (DenseNet, Vec<Vec<f64>>, Vec<f64>) {
    let net = DenseNet::init(k, m, rng);
    let xs = (0..n).map(|_| (0..k).map(|_| rng.random_range(0.05..0.95)).collect()).collect();
    let ys = (0..n).map(|_| rng.random_range(0.05..1.0)).collect();
    (net, xs, ys)
}

/// Worst gradient error over `nets` random kink-free cases.
pub fn gradient_check(objective: impl Fn(&PerturbationSpec) -> Objective, spec: PerturbationSpec, nets: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut checked = 0;
    let mut attempts = 0;
    let mut worst = 0.0f64;
    while checked < nets {
        attempts += 1;
        assert!(attempts < 100 * nets, "could not find kink-free samples");
        let (net, xs, ys) = random_case(&mut rng, 3, 4, 3);
        if !away_from_kinks(&net, &xs, &ys, &spec) {
            continue;
        }
        let Some(err) = gradient_error(&net, &xs, &ys, objective(&spec)) else { continue };
        worst = worst.max(err);
        checked += 1;
    }
    worst
}
