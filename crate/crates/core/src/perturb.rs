//! Per-feature sensor noise model.
//!
//! Inputs are laid out as `K - 1` time-series readings followed by one
//! scalar-sensor reading. Each coordinate may move by its own absolute
//! epsilon (in normalized units) and the result is clipped to the
//! normalized range.

use alloc::vec::Vec;

use rand::Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerturbationSpec {
    pub eps_series: f64,
    pub eps_scalar: f64,
    pub clip_lo: f64,
    pub clip_hi: f64,
}

impl Default for PerturbationSpec {
    fn default() -> Self {
        Self {
            eps_series: 0.01,
            eps_scalar: 0.001,
            clip_lo: 0.0,
            clip_hi: 1.0,
        }
    }
}

impl PerturbationSpec {
    pub fn new(eps_series: f64, eps_scalar: f64) -> Self {
        Self {
            eps_series,
            eps_scalar,
            ..Self::default()
        }
    }

    /// No perturbation at all: every box collapses to its center.
    pub fn zero() -> Self {
        Self::new(0.0, 0.0)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v.is_finite() && v >= 0.0;
        if !ok(self.eps_series) || !ok(self.eps_scalar) {
            return Err(Error::Config("epsilon must be finite and non-negative".into()));
        }
        if !(self.clip_lo.is_finite() && self.clip_hi.is_finite() && self.clip_lo < self.clip_hi) {
            return Err(Error::Config("clip range must satisfy clip_lo < clip_hi".into()));
        }
        Ok(())
    }

    /// Same clipping range, every epsilon multiplied by `alpha`.
    pub fn scaled(&self, alpha: f64) -> Self {
        Self {
            eps_series: self.eps_series * alpha,
            eps_scalar: self.eps_scalar * alpha,
            ..*self
        }
    }

    /// Epsilon of coordinate `i` in a `k`-dimensional input.
    #[inline]
    pub fn eps_at(&self, i: usize, k: usize) -> f64 {
        if i + 1 < k {
            self.eps_series
        } else {
            self.eps_scalar
        }
    }

    /// The admissible input box around `x`.
    pub fn box_of(&self, x: &[f64]) -> Result<InputBox> {
        if let Some((i, v)) = x
            .iter()
            .enumerate()
            .find(|(_, v)| !(**v >= self.clip_lo && **v <= self.clip_hi))
        {
            return Err(Error::Domain(alloc::format!(
                "feature {i} = {v} outside [{}, {}]",
                self.clip_lo,
                self.clip_hi
            )));
        }
        Ok(self.box_of_unchecked(x))
    }

    pub(crate) fn box_of_unchecked(&self, x: &[f64]) -> InputBox {
        let k = x.len();
        let mut lo = Vec::with_capacity(k);
        let mut hi = Vec::with_capacity(k);
        for (i, &xi) in x.iter().enumerate() {
            let e = self.eps_at(i, k);
            lo.push((xi - e).max(self.clip_lo));
            hi.push((xi + e).min(self.clip_hi));
        }
        InputBox { lo, hi }
    }
}

/// Axis-aligned box `[lo, hi]` in input space.
#[derive(Debug, Clone, PartialEq)]
pub struct InputBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl InputBox {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() {
            return Err(Error::InputShape {
                expected: lo.len(),
                found: hi.len(),
            });
        }
        if lo.iter().zip(&hi).any(|(l, h)| !(l <= h)) {
            return Err(Error::Domain("box requires lo <= hi in every coordinate".into()));
        }
        Ok(Self { lo, hi })
    }

    /// Degenerate box at a single point.
    pub fn point(x: &[f64]) -> Self {
        Self {
            lo: x.to_vec(),
            hi: x.to_vec(),
        }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn contains(&self, z: &[f64]) -> bool {
        z.len() == self.dim()
            && z
                .iter()
                .zip(self.lo.iter().zip(&self.hi))
                .all(|(v, (l, h))| *l <= *v && *v <= *h)
    }

    pub fn is_degenerate(&self) -> bool {
        self.lo == self.hi
    }

    pub fn center(&self) -> Vec<f64> {
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(l, h)| 0.5 * (l + h))
            .collect()
    }

    /// Clamp `z` into the box in place.
    pub fn project(&self, z: &mut [f64]) {
        for ((v, l), h) in z.iter_mut().zip(&self.lo).zip(&self.hi) {
            *v = v.max(*l).min(*h);
        }
    }

    /// One point drawn uniformly from the box.
    pub fn sample_uniform<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let mut z = alloc::vec![0.0; self.dim()];
        self.sample_into(rng, &mut z);
        z
    }

    pub(crate) fn sample_into<R: Rng + ?Sized>(&self, rng: &mut R, z: &mut [f64]) {
        for ((v, l), h) in z.iter_mut().zip(&self.lo).zip(&self.hi) {
            let u: f64 = rng.random();
            // l + u*(h-l) can round above h for u close to 1
            *v = (l + u * (h - l)).min(*h);
        }
    }
}
