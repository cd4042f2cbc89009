//! Synthetic virtual-sensor data and output range bins.
//!
//! Each example is `K - 1` readings of an injector-like pulse followed by a
//! slowly varying scalar sensor, all normalized to `[0, 1]`. The target
//! controls the pulse: larger targets give wider and taller pulses and a
//! higher scalar reading.

use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

pub const GENERATOR_VERSION: u32 = 1;

/// One example borrowed from a dataset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Example<'a> {
    pub id: usize,
    pub x: &'a [f64],
    pub y: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct DatasetMeta {
    pub seed: Option<u64>,
    pub generator_version: Option<u32>,
}

/// `n` examples of dimension `K`, features row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    input_dim: usize,
    x: Vec<f64>,
    y: Vec<f64>,
    pub meta: DatasetMeta,
}

impl Dataset {
    /// Features must lie in `[0, 1]`, targets in `(0, 1]`.
    pub fn new(input_dim: usize, x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        if input_dim < 2 {
            return Err(Error::Config("input dimension must be at least 2".into()));
        }
        if x.len() != y.len() * input_dim {
            return Err(Error::InputShape {
                expected: y.len() * input_dim,
                found: x.len(),
            });
        }
        if let Some(i) = x.iter().position(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::Domain(alloc::format!(
                "example {} feature {} = {} outside [0, 1]",
                i / input_dim,
                i % input_dim,
                x[i]
            )));
        }
        if let Some(i) = y.iter().position(|v| !(*v > 0.0 && *v <= 1.0)) {
            return Err(Error::Domain(alloc::format!("example {i} target {} outside (0, 1]", y[i])));
        }
        Ok(Self {
            input_dim,
            x,
            y,
            meta: DatasetMeta::default(),
        })
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn features(&self) -> &[f64] {
        &self.x
    }

    pub fn targets(&self) -> &[f64] {
        &self.y
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.input_dim..(i + 1) * self.input_dim]
    }

    pub fn example(&self, i: usize) -> Example<'_> {
        Example {
            id: i,
            x: self.row(i),
            y: self.y[i],
        }
    }

    pub fn examples(&self) -> impl ExactSizeIterator<Item = Example<'_>> + '_ {
        (0..self.len()).map(|i| self.example(i))
    }

    /// The first `n` examples (or all of them).
    pub fn truncated(&self, n: usize) -> Dataset {
        let n = n.min(self.len());
        Dataset {
            input_dim: self.input_dim,
            x: self.x[..n * self.input_dim].to_vec(),
            y: self.y[..n].to_vec(),
            meta: self.meta.clone(),
        }
    }
}

/// Seeded generator of the synthetic pulse dataset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Generator {
    pub input_dim: usize,
    /// Targets are uniform on `[y_min, 1]`.
    pub y_min: f64,
    /// Standard deviation of additive sensor noise.
    pub noise_sigma: f64,
}

impl Default for Generator {
    fn default() -> Self {
        Self {
            input_dim: 32,
            y_min: 0.05,
            noise_sigma: 0.005,
        }
    }
}

const BASELINE: f64 = 0.1;
const PULSE_CENTER: f64 = 0.3;

impl Generator {
    pub fn new(input_dim: usize) -> Self {
        Self {
            input_dim,
            ..Self::default()
        }
    }

    pub fn generate(&self, n: usize, seed: u64) -> Result<Dataset> {
        let k = self.input_dim;
        if n == 0 || k < 2 {
            return Err(Error::Config(alloc::format!(
                "generator needs n >= 1 and K >= 2 (got n = {n}, K = {k})"
            )));
        }
        if !(self.y_min > 0.0 && self.y_min < 1.0) {
            return Err(Error::Config("y_min must lie in (0, 1)".into()));
        }
        let noise = Normal::new(0.0, self.noise_sigma)
            .map_err(|_| Error::Config("noise sigma must be finite and non-negative".into()))?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let series = k - 1;
        let mut x = Vec::with_capacity(n * k);
        let mut y = Vec::with_capacity(n);
        for _ in 0..n {
            let target = rng.random_range(self.y_min..=1.0);
            let (amplitude, width) = pulse_shape(target);
            for t in 0..series {
                let tau = if series > 1 { t as f64 / (series - 1) as f64 } else { 0.0 };
                let d = (tau - PULSE_CENTER) / width;
                let v = BASELINE + amplitude * libm::exp(-0.5 * d * d) + noise.sample(&mut rng);
                x.push(v.clamp(0.0, 1.0));
            }
            let p = 0.5 + 0.3 * target + noise.sample(&mut rng);
            x.push(p.clamp(0.0, 1.0));
            y.push(target);
        }
        let mut ds = Dataset::new(k, x, y)?;
        ds.meta = DatasetMeta {
            seed: Some(seed),
            generator_version: Some(GENERATOR_VERSION),
        };
        Ok(ds)
    }
}

/// Pulse amplitude and width (in normalized time) for a target.
fn pulse_shape(target: f64) -> (f64, f64) {
    (0.3 + 0.3 * target, 0.06 + 0.06 * target)
}

/// One output range of the evaluation table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RangeBin {
    pub lo: f64,
    pub hi: f64,
    pub closed_hi: bool,
    pub label: &'static str,
}

impl RangeBin {
    pub fn contains(&self, y: f64) -> bool {
        y >= self.lo && (y < self.hi || self.closed_hi && y <= self.hi)
    }
}

/// Five disjoint bins covering `[0, 1]`.
pub const RANGE_BINS: [RangeBin; 5] = [
    RangeBin { lo: 0.0, hi: 0.2, closed_hi: false, label: "[0.0-0.2)" },
    RangeBin { lo: 0.2, hi: 0.4, closed_hi: false, label: "[0.2-0.4)" },
    RangeBin { lo: 0.4, hi: 0.6, closed_hi: false, label: "[0.4-0.6)" },
    RangeBin { lo: 0.6, hi: 0.8, closed_hi: false, label: "[0.6-0.8)" },
    RangeBin { lo: 0.8, hi: 1.0, closed_hi: true, label: "[0.8-1.0]" },
];

/// The whole range, overlapping every bin.
pub const FULL_RANGE: RangeBin = RangeBin {
    lo: 0.0,
    hi: 1.0,
    closed_hi: true,
    label: "[0.0-1.0]",
};

/// Table columns: the five bins plus the full range.
pub const BIN_COUNT: usize = 6;

pub fn bin_of(y: f64) -> Result<usize> {
    RANGE_BINS
        .iter()
        .position(|b| b.contains(y))
        .ok_or_else(|| Error::Domain(alloc::format!("target {y} outside [0, 1]")))
}
