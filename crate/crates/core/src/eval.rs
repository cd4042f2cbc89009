//! Per-example error metrics and their aggregation by output range.

use alloc::string::String;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::attack::{noise_error, pgd_attack, AttackConfig};
use crate::bounds::certified_relative_error;
use crate::data::{bin_of, Dataset, Example, BIN_COUNT, FULL_RANGE};
use crate::error::{Error, Result};
use crate::milp::{Certificate, Method};
use crate::net::DenseNet;
use crate::perturb::PerturbationSpec;

/// Mean relative error `(1/n) Σ |f(x_i) - y_i| / |y_i|`.
pub fn mre<'a>(net: &DenseNet, examples: impl IntoIterator<Item = Example<'a>>) -> Result<f64> {
    let mut total = 0.0;
    let mut n = 0usize;
    for ex in examples {
        if ex.y == 0.0 {
            return Err(Error::Domain(alloc::format!("example {} has target 0", ex.id)));
        }
        total += (net.forward(ex.x)? - ex.y).abs() / ex.y.abs();
        n += 1;
    }
    if n == 0 {
        return Err(Error::EmptyBatch);
    }
    Ok(total / n as f64)
}

/// Table rows, in presentation order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    Relative,
    Noise,
    Pgd,
    Milp,
    Dual,
}

impl Metric {
    pub const ALL: [Metric; 5] = [Metric::Relative, Metric::Noise, Metric::Pgd, Metric::Milp, Metric::Dual];

    pub fn label(self) -> &'static str {
        match self {
            Metric::Relative => "Relative error",
            Metric::Noise => "Noise error",
            Metric::Pgd => "PGD error",
            Metric::Milp => "MILP bound",
            Metric::Dual => "Dual bound",
        }
    }

    pub fn key(self) -> &'static str {
        match self {
            Metric::Relative => "relative",
            Metric::Noise => "noise",
            Metric::Pgd => "pgd",
            Metric::Milp => "milp",
            Metric::Dual => "dual",
        }
    }

    pub fn parse_key(s: &str) -> Option<Self> {
        Metric::ALL.into_iter().find(|m| m.key() == s)
    }

    fn index(self) -> usize {
        self as usize
    }
}

/// All relative errors of one test example.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExampleRecord {
    pub id: usize,
    pub y: f64,
    pub prediction: f64,
    pub clean: f64,
    pub noise: f64,
    pub pgd: f64,
    pub milp: f64,
    pub dual: f64,
}

impl ExampleRecord {
    pub fn get(&self, metric: Metric) -> f64 {
        match metric {
            Metric::Relative => self.clean,
            Metric::Noise => self.noise,
            Metric::Pgd => self.pgd,
            Metric::Milp => self.milp,
            Metric::Dual => self.dual,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalConfig {
    pub attack: AttackConfig,
    pub noise_draws: usize,
    /// Seeds the per-example noise streams.
    pub seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            attack: AttackConfig::default(),
            noise_draws: 1000,
            seed: 0,
        }
    }
}

/// Computes every metric of one example given its two certificates. Noise
/// draws come from a stream keyed by `(cfg.seed, example id)`, so results
/// do not depend on evaluation order.
pub fn evaluate_example(
    net: &DenseNet,
    ex: Example<'_>,
    spec: &PerturbationSpec,
    cfg: &EvalConfig,
    dual: &Certificate,
    milp: &Certificate,
) -> Result<ExampleRecord> {
    if dual.method != Method::Dual || milp.method != Method::Milp {
        return Err(Error::Config("certificate methods do not match their roles".into()));
    }
    if dual.example_id != ex.id || milp.example_id != ex.id {
        return Err(Error::Config(alloc::format!("certificates do not belong to example {}", ex.id)));
    }
    let bx = spec.box_of(ex.x)?;
    let prediction = net.forward(ex.x)?;
    let mut noise_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    noise_rng.set_stream(ex.id as u64);
    let noise = noise_error(net, ex.y, &bx, cfg.noise_draws, &mut noise_rng)?;
    let mut attack_rng = ChaCha8Rng::seed_from_u64(ex.id as u64);
    let pgd = pgd_attack(net, ex.x, ex.y, &bx, &cfg.attack, &mut attack_rng)?;
    Ok(ExampleRecord {
        id: ex.id,
        y: ex.y,
        prediction,
        clean: (prediction - ex.y).abs() / ex.y.abs(),
        noise,
        pgd: pgd.relative_error,
        milp: certified_relative_error(milp.bounds, ex.y)?,
        dual: certified_relative_error(dual.bounds, ex.y)?,
    })
}

/// Mean of each metric per output bin; `None` marks an empty bin.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalTable {
    pub label: String,
    pub counts: [usize; BIN_COUNT],
    pub values: [[Option<f64>; BIN_COUNT]; 5],
}

impl EvalTable {
    pub fn from_records(label: &str, records: &[ExampleRecord]) -> Result<Self> {
        let mut counts = [0usize; BIN_COUNT];
        let mut sums = [[0.0f64; BIN_COUNT]; 5];
        for r in records {
            let b = bin_of(r.y)?;
            for col in [b, BIN_COUNT - 1] {
                counts[col] += 1;
                for m in Metric::ALL {
                    sums[m.index()][col] += r.get(m);
                }
            }
        }
        debug_assert!(records.iter().all(|r| FULL_RANGE.contains(r.y)));
        let mut values = [[None; BIN_COUNT]; 5];
        for m in 0..5 {
            for col in 0..BIN_COUNT {
                if counts[col] > 0 {
                    values[m][col] = Some(sums[m][col] / counts[col] as f64);
                }
            }
        }
        Ok(Self {
            label: label.into(),
            counts,
            values,
        })
    }

    pub fn get(&self, metric: Metric, col: usize) -> Option<f64> {
        self.values[metric.index()][col]
    }

    pub fn full(&self, metric: Metric) -> Option<f64> {
        self.get(metric, BIN_COUNT - 1)
    }

    /// Mean of `metric` over records whose target lies in `[lo, hi]`.
    pub fn range_mean(records: &[ExampleRecord], metric: Metric, lo: f64, hi: f64) -> Option<f64> {
        let (s, n) = records
            .iter()
            .filter(|r| lo <= r.y && r.y <= hi)
            .fold((0.0, 0usize), |(s, n), r| (s + r.get(metric), n + 1));
        (n > 0).then(|| s / n as f64)
    }
}

/// Sequential evaluation of a whole test set.
pub fn evaluate_dataset(
    net: &DenseNet,
    data: &Dataset,
    spec: &PerturbationSpec,
    cfg: &EvalConfig,
    dual: &[Certificate],
    milp: &[Certificate],
) -> Result<alloc::vec::Vec<ExampleRecord>> {
    if dual.len() != data.len() || milp.len() != data.len() {
        return Err(Error::Config("certificates must cover every test example".into()));
    }
    data.examples()
        .zip(dual.iter().zip(milp))
        .map(|(ex, (d, m))| evaluate_example(net, ex, spec, cfg, d, m))
        .collect()
}

pub fn build_table(
    label: &str,
    net: &DenseNet,
    data: &Dataset,
    spec: &PerturbationSpec,
    dual: &[Certificate],
    milp: &[Certificate],
    cfg: &EvalConfig,
) -> Result<EvalTable> {
    EvalTable::from_records(label, &evaluate_dataset(net, data, spec, cfg, dual, milp)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Generator;
    use crate::milp::{verify_dataset, ExactConfig};
    use alloc::vec::Vec;

    fn net_predicting(k: usize, c: f64) -> DenseNet {
        let mut net = DenseNet::zeros(k, 2);
        net.b2 = c;
        net
    }

    #[test]
    fn mre_examples() {
        let net = net_predicting(2, 0.55);
        let x = [0.1, 0.2];
        let one = [Example { id: 0, x: &x, y: 0.5 }];
        assert!((mre(&net, one).unwrap() - 0.10).abs() < 1e-12);
        let two = [Example { id: 0, x: &x, y: 0.5 }, Example { id: 1, x: &x, y: 0.55 / 1.3 }];
        assert!((mre(&net, two).unwrap() - 0.20).abs() < 1e-12);
        let exact = [Example { id: 0, x: &x, y: 0.55 }];
        assert_eq!(mre(&net, exact).unwrap(), 0.0);
        assert!(mre(&net, []).is_err());
    }

    fn records_for(net: &DenseNet, ds: &Dataset, spec: &PerturbationSpec) -> Vec<ExampleRecord> {
        let cfg = ExactConfig::default();
        let d = verify_dataset(net, ds.examples(), spec, Method::Dual, &cfg).unwrap();
        let m = verify_dataset(net, ds.examples(), spec, Method::Milp, &cfg).unwrap();
        let ecfg = EvalConfig {
            noise_draws: 50,
            ..EvalConfig::default()
        };
        evaluate_dataset(net, ds, spec, &ecfg, &d, &m).unwrap()
    }

    #[test]
    fn zero_eps_rows_agree() {
        let ds = Generator::new(5).generate(60, 1).unwrap();
        let net = DenseNet::init(5, 6, &mut ChaCha8Rng::seed_from_u64(2));
        let t = EvalTable::from_records("t", &records_for(&net, &ds, &PerturbationSpec::zero())).unwrap();
        for col in 0..BIN_COUNT {
            let Some(base) = t.get(Metric::Relative, col) else { continue };
            for m in Metric::ALL {
                assert!((t.get(m, col).unwrap() - base).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn ordering_and_partition() {
        let ds = Generator::new(5).generate(80, 3).unwrap();
        let net = DenseNet::init(5, 6, &mut ChaCha8Rng::seed_from_u64(4));
        let recs = records_for(&net, &ds, &PerturbationSpec::new(0.05, 0.01));
        let t = EvalTable::from_records("t", &recs).unwrap();
        assert_eq!(t.counts[BIN_COUNT - 1], 80);
        assert_eq!(t.counts[..5].iter().sum::<usize>(), 80);
        for col in 0..BIN_COUNT {
            let Some(p) = t.get(Metric::Pgd, col) else { continue };
            let m = t.get(Metric::Milp, col).unwrap();
            let d = t.get(Metric::Dual, col).unwrap();
            assert!(p <= m + 1e-7 && m <= d + 1e-7);
        }
        for m in Metric::ALL {
            let weighted: f64 = (0..5)
                .filter_map(|c| t.get(m, c).map(|v| v * t.counts[c] as f64))
                .sum::<f64>()
                / 80.0;
            assert!((weighted - t.full(m).unwrap()).abs() < 1e-9);
        }
    }

    #[test]
    fn empty_bins_are_absent() {
        let r = ExampleRecord {
            id: 0,
            y: 0.9,
            prediction: 0.9,
            clean: 0.0,
            noise: 0.0,
            pgd: 0.0,
            milp: 0.0,
            dual: 0.0,
        };
        let t = EvalTable::from_records("t", &[r]).unwrap();
        assert_eq!(t.get(Metric::Relative, 0), None);
        assert_eq!(t.get(Metric::Relative, 4), Some(0.0));
    }
}
