//! Exact output extrema over a box by big-M branch and bound.
//!
//! Stable units are substituted directly. Every unstable unit `j` with
//! pre-activation interval `[l, u]` gets a continuous `h ∈ [0, u]` and a
//! binary `δ` with
//!
//! ```text
//! h ≥ a(z),   h ≤ u·δ,   h ≤ a(z) − l·(1 − δ),   a(z) = W1_j·z + b1_j
//! ```
//!
//! so that integral `δ` forces `h = relu(a(z))`. Nodes relax `δ` to
//! `[0, 1]`, are explored best-bound-first and branch on the most
//! fractional binary. The incumbent starts from sign-gradient ascent and is
//! improved with every node's LP point, which is always a feasible input.

use alloc::collections::BinaryHeap;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::attack::{pgd_attack, signed_ascent, AttackConfig};
use crate::bounds::{dual_output_bounds, fill_intervals, BoundPair, Phase, PreactivationIntervals};
use crate::data::Example;
use crate::error::{check_len, Result};
use crate::lp::{self, LpProblem, LpStatus, Sense};
use crate::net::DenseNet;
use crate::perturb::{InputBox, PerturbationSpec};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExactConfig {
    /// Absolute optimality gap in output units.
    pub tol: f64,
    pub node_limit: usize,
    /// Used for incumbent seeding.
    pub attack: AttackConfig,
}

impl Default for ExactConfig {
    fn default() -> Self {
        Self {
            tol: 1e-6,
            node_limit: 1_000_000,
            attack: AttackConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Dual,
    Milp,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Dual => "dual",
            Method::Milp => "milp",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [Method::Dual, Method::Milp].into_iter().find(|m| m.as_str() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Certified,
    /// Node limit reached; bounds are sound but not tight.
    Timeout,
}

impl Status {
    pub fn as_str(self) -> &'static str {
        match self {
            Status::Certified => "certified",
            Status::Timeout => "timeout",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [Status::Certified, Status::Timeout].into_iter().find(|m| m.as_str() == s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Certificate {
    pub example_id: usize,
    pub method: Method,
    pub bounds: BoundPair,
    /// Inputs attaining the bounds (exact method only).
    pub witness_max: Option<Vec<f64>>,
    pub witness_min: Option<Vec<f64>>,
    pub node_count: usize,
    pub status: Status,
}

impl Certificate {
    pub fn dual(example_id: usize, bounds: BoundPair) -> Self {
        Self {
            example_id,
            method: Method::Dual,
            bounds,
            witness_max: None,
            witness_min: None,
            node_count: 0,
            status: Status::Certified,
        }
    }
}

/// Big-M encoding of one network over one box.
#[derive(Debug, Clone)]
pub struct MilpFormulation<'a> {
    net: &'a DenseNet,
    bx: &'a InputBox,
    intervals: PreactivationIntervals,
    /// Hidden-unit index of each binary, in variable order.
    unstable: Vec<usize>,
}

impl<'a> MilpFormulation<'a> {
    pub fn new(net: &'a DenseNet, bx: &'a InputBox) -> Result<Self> {
        check_len(net.input_dim(), bx.dim())?;
        let mut intervals = PreactivationIntervals::default();
        fill_intervals(net, bx, &mut intervals);
        let unstable = intervals.unstable_units().collect();
        Ok(Self {
            net,
            bx,
            intervals,
            unstable,
        })
    }

    pub fn unstable_units(&self) -> &[usize] {
        &self.unstable
    }

    pub fn intervals(&self) -> &PreactivationIntervals {
        &self.intervals
    }

    fn h_var(&self, t: usize) -> usize {
        self.net.input_dim() + 2 * t
    }

    fn delta_var(&self, t: usize) -> usize {
        self.net.input_dim() + 2 * t + 1
    }

    /// LP relaxation maximizing `c·f` with some binaries fixed
    /// (`fix[t] ∈ {-1 free, 0, 1}`). Returns the LP and the constant term
    /// to add to its objective.
    pub fn relaxation(&self, c: f64, fix: &[i8]) -> (LpProblem, f64) {
        let net = self.net;
        let k = net.input_dim();
        let n = k + 2 * self.unstable.len();
        let mut lp = LpProblem::new(n, Sense::Maximize, 0.0, 1.0);
        lp.lower[..k].copy_from_slice(&self.bx.lo);
        lp.upper[..k].copy_from_slice(&self.bx.hi);

        let mut constant = net.b2;
        for j in 0..net.hidden_dim() {
            if self.intervals.phase[j] == Phase::Active {
                constant += net.w2[j] * net.b1[j];
                for (o, w) in lp.objective[..k].iter_mut().zip(net.row(j)) {
                    *o += c * net.w2[j] * w;
                }
            }
        }

        let mut row = vec![0.0; n];
        for (t, &j) in self.unstable.iter().enumerate() {
            let (l, u) = (self.intervals.lower[j], self.intervals.upper[j]);
            let (h, d) = (self.h_var(t), self.delta_var(t));
            lp.objective[h] = c * net.w2[j];
            lp.upper[h] = u;
            if fix[t] >= 0 {
                lp.lower[d] = fix[t] as f64;
                lp.upper[d] = fix[t] as f64;
            }
            let w = net.row(j);
            // a(z) - h <= 0
            row.fill(0.0);
            row[..k].copy_from_slice(w);
            row[h] = -1.0;
            lp.add_row(&row, -net.b1[j]);
            // h - u δ <= 0
            row.fill(0.0);
            row[h] = 1.0;
            row[d] = -u;
            lp.add_row(&row, 0.0);
            // h - a(z) - l δ <= -l
            row.fill(0.0);
            for (r, wi) in row[..k].iter_mut().zip(w) {
                *r = -wi;
            }
            row[h] = 1.0;
            row[d] = -l;
            lp.add_row(&row, net.b1[j] - l);
        }
        (lp, c * constant)
    }

    /// Upper bound on `c·f` from the root relaxation.
    pub fn root_bound(&self, c: f64) -> Result<f64> {
        let fix = vec![-1; self.unstable.len()];
        let (lp, constant) = self.relaxation(c, &fix);
        let sol = lp::solve(&lp)?;
        Ok(sol.value + constant)
    }

    /// Branch and bound on `max c·f`, starting from the given candidate inputs.
    fn search(&self, c: f64, seeds: &[Vec<f64>], cfg: &ExactConfig) -> Result<Search> {
        let k = self.net.input_dim();
        let mut best_z = self.bx.center();
        let mut best = c * self.net.eval(&best_z);
        for s in seeds {
            let (z, f) = signed_ascent(self.net, self.bx, s, c, &cfg.attack);
            if c * f > best {
                best = c * f;
                best_z = z;
            }
        }

        let nu = self.unstable.len();
        let mut heap = BinaryHeap::new();
        heap.push(Node {
            bound: f64::INFINITY,
            id: 0,
            fix: vec![-1; nu],
        });
        let mut next_id = 1u64;
        let mut nodes = 0usize;
        while let Some(node) = heap.pop() {
            if node.bound <= best + cfg.tol {
                break;
            }
            if nodes >= cfg.node_limit {
                return Ok(Search {
                    best_z,
                    outer: node.bound.max(best),
                    nodes,
                    complete: false,
                });
            }
            nodes += 1;
            let (lp, constant) = self.relaxation(c, &node.fix);
            let sol = lp::solve(&lp)?;
            if sol.status == LpStatus::Infeasible {
                continue;
            }
            let value = sol.value + constant;
            let z = &sol.point[..k];
            let fz = c * self.net.eval(z);
            if fz > best {
                best = fz;
                best_z.copy_from_slice(z);
            }
            if value <= best + cfg.tol {
                continue;
            }
            let mut branch: Option<(usize, f64, f64)> = None;
            for t in 0..nu {
                if node.fix[t] >= 0 {
                    continue;
                }
                let dv = sol.point[self.delta_var(t)];
                let frac = dv.min(1.0 - dv);
                if frac <= 1e-9 {
                    continue;
                }
                let j = self.unstable[t];
                let influence = self.net.w2[j].abs() * (self.intervals.upper[j] - self.intervals.lower[j]);
                let better = match branch {
                    None => true,
                    Some((_, bf, bi)) => frac > bf || (frac == bf && influence > bi),
                };
                if better {
                    branch = Some((t, frac, influence));
                }
            }
            // integral relaxation: h = relu(a) exactly and z was already scored
            let Some((t, _, _)) = branch else { continue };
            for v in [0i8, 1] {
                let mut fix = node.fix.clone();
                fix[t] = v;
                heap.push(Node {
                    bound: value,
                    id: next_id,
                    fix,
                });
                next_id += 1;
            }
        }
        Ok(Search {
            best_z,
            outer: best,
            nodes,
            complete: true,
        })
    }
}

struct Search {
    best_z: Vec<f64>,
    /// Sound upper bound on `c·f`.
    outer: f64,
    nodes: usize,
    complete: bool,
}

struct Node {
    bound: f64,
    id: u64,
    fix: Vec<i8>,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Node {}

impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Node {
    // max-heap: highest bound first, then oldest node
    fn cmp(&self, other: &Self) -> Ordering {
        self.bound
            .total_cmp(&other.bound)
            .then_with(|| other.id.cmp(&self.id))
    }
}

/// Exact bounds of `f` over `bx`, within `cfg.tol`.
pub fn exact_output_bounds(net: &DenseNet, bx: &InputBox, cfg: &ExactConfig) -> Result<Certificate> {
    exact_output_bounds_seeded(net, bx, &[], cfg)
}

/// As [`exact_output_bounds`], also trying `seeds` as incumbent starts.
/// When certified, the reported bounds are attained by the witnesses.
pub fn exact_output_bounds_seeded(
    net: &DenseNet,
    bx: &InputBox,
    seeds: &[Vec<f64>],
    cfg: &ExactConfig,
) -> Result<Certificate> {
    let form = MilpFormulation::new(net, bx)?;
    let mut starts = vec![bx.center()];
    starts.extend(seeds.iter().cloned());
    let hi = form.search(1.0, &starts, cfg)?;
    let lo = form.search(-1.0, &starts, cfg)?;
    let complete = hi.complete && lo.complete;
    let bounds = if complete {
        BoundPair {
            lower: -lo.outer,
            upper: hi.outer,
        }
    } else {
        // open nodes may still carry the unbounded root estimate
        let dual = dual_output_bounds(net, bx)?;
        BoundPair {
            lower: (-lo.outer).max(dual.lower),
            upper: hi.outer.min(dual.upper),
        }
    };
    Ok(Certificate {
        example_id: 0,
        method: Method::Milp,
        bounds,
        witness_max: Some(hi.best_z),
        witness_min: Some(lo.best_z),
        node_count: hi.nodes + lo.nodes,
        status: if complete { Status::Certified } else { Status::Timeout },
    })
}

/// One certificate for one example.
pub fn verify_example(
    net: &DenseNet,
    ex: Example<'_>,
    spec: &PerturbationSpec,
    method: Method,
    cfg: &ExactConfig,
) -> Result<Certificate> {
    let bx = spec.box_of(ex.x)?;
    match method {
        Method::Dual => Ok(Certificate::dual(ex.id, dual_output_bounds(net, &bx)?)),
        Method::Milp => {
            let mut rng = ChaCha8Rng::seed_from_u64(ex.id as u64);
            let adv = pgd_attack(net, ex.x, ex.y, &bx, &cfg.attack, &mut rng)?;
            let seeds = [ex.x.to_vec(), adv.input];
            let mut cert = exact_output_bounds_seeded(net, &bx, &seeds, cfg)?;
            cert.example_id = ex.id;
            Ok(cert)
        }
    }
}

/// Certificates in input order; timeouts are recorded, not fatal.
pub fn verify_dataset<'a>(
    net: &DenseNet,
    examples: impl IntoIterator<Item = Example<'a>>,
    spec: &PerturbationSpec,
    method: Method,
    cfg: &ExactConfig,
) -> Result<Vec<Certificate>> {
    examples
        .into_iter()
        .map(|ex| verify_example(net, ex, spec, method, cfg))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bounds::certified_relative_error;
    use rand::Rng;

    fn hand_net() -> DenseNet {
        DenseNet::from_parts(1, 1, vec![1.0], vec![-0.1], vec![1.0], 0.0).unwrap()
    }

    #[test]
    fn point_box_no_branching() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net = DenseNet::init(4, 6, &mut rng);
        let x = [0.2, 0.4, 0.6, 0.8];
        let cert = exact_output_bounds(&net, &InputBox::point(&x), &ExactConfig::default()).unwrap();
        let f = net.eval(&x);
        assert_eq!(cert.bounds, BoundPair::point(f));
        assert!(cert.node_count <= 2);
        assert_eq!(cert.status, Status::Certified);
    }

    #[test]
    fn hand_network_exact() {
        let bx = InputBox::new(vec![0.0], vec![0.15]).unwrap();
        let cert = exact_output_bounds(&hand_net(), &bx, &ExactConfig::default()).unwrap();
        assert!((cert.bounds.upper - 0.05).abs() < 1e-12, "{cert:?}");
        assert!(cert.bounds.lower.abs() < 1e-12, "{cert:?}");
        let dual = dual_output_bounds(&hand_net(), &bx).unwrap();
        assert!(dual.lower < cert.bounds.lower - 0.03);
    }

    #[test]
    fn witnesses_attain_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..20 {
            let net = DenseNet::init(3, 6, &mut rng);
            let x: Vec<f64> = (0..3).map(|_| rng.random::<f64>()).collect();
            let bx = PerturbationSpec::new(0.2, 0.2).box_of(&x).unwrap();
            let cert = exact_output_bounds(&net, &bx, &ExactConfig::default()).unwrap();
            let wmax = cert.witness_max.as_ref().unwrap();
            let wmin = cert.witness_min.as_ref().unwrap();
            assert!(bx.contains(wmax) && bx.contains(wmin));
            assert!((net.eval(wmax) - cert.bounds.upper).abs() <= 1e-6);
            assert!((net.eval(wmin) - cert.bounds.lower).abs() <= 1e-6);
        }
    }

    #[test]
    fn root_relaxation_dominated_by_dual() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..30 {
            let net = DenseNet::init(4, 8, &mut rng);
            let x: Vec<f64> = (0..4).map(|_| rng.random::<f64>()).collect();
            let bx = PerturbationSpec::new(0.15, 0.15).box_of(&x).unwrap();
            let form = MilpFormulation::new(&net, &bx).unwrap();
            let dual = dual_output_bounds(&net, &bx).unwrap();
            assert!(form.root_bound(1.0).unwrap() <= dual.upper + 1e-9);
            assert!(-form.root_bound(-1.0).unwrap() >= dual.lower - 1e-9);
        }
    }

    #[test]
    fn timeout_keeps_sound_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let net = DenseNet::init(4, 16, &mut rng);
        let x = [0.5; 4];
        let bx = PerturbationSpec::new(0.5, 0.5).box_of(&x).unwrap();
        let cfg = ExactConfig {
            node_limit: 1,
            ..ExactConfig::default()
        };
        let cut = exact_output_bounds(&net, &bx, &cfg).unwrap();
        let full = exact_output_bounds(&net, &bx, &ExactConfig::default()).unwrap();
        assert_eq!(full.status, Status::Certified);
        if cut.status == Status::Timeout {
            assert!(cut.bounds.upper >= full.bounds.upper - 1e-9);
            assert!(cut.bounds.lower <= full.bounds.lower + 1e-9);
        }
    }

    #[test]
    fn dataset_order_and_dominance() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let net = DenseNet::init(4, 10, &mut rng);
        let xs: Vec<Vec<f64>> = (0..100).map(|_| (0..4).map(|_| rng.random::<f64>()).collect()).collect();
        let ys: Vec<f64> = (0..100).map(|_| rng.random_range(0.05..1.0)).collect();
        let examples = || xs.iter().zip(&ys).enumerate().map(|(i, (x, y))| Example { id: 1000 + i, x, y: *y });
        let spec = PerturbationSpec::new(0.05, 0.01);
        let cfg = ExactConfig::default();
        let milp = verify_dataset(&net, examples(), &spec, Method::Milp, &cfg).unwrap();
        let dual = verify_dataset(&net, examples(), &spec, Method::Dual, &cfg).unwrap();
        assert!(verify_dataset(&net, core::iter::empty(), &spec, Method::Milp, &cfg).unwrap().is_empty());
        let (mut sm, mut sd) = (0.0, 0.0);
        for (i, (m, d)) in milp.iter().zip(&dual).enumerate() {
            assert_eq!(m.example_id, 1000 + i);
            assert_eq!(d.example_id, 1000 + i);
            sm += certified_relative_error(m.bounds, ys[i]).unwrap();
            sd += certified_relative_error(d.bounds, ys[i]).unwrap();
        }
        assert!(sm <= sd);
    }
}
