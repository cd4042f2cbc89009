//! Dense bounded-variable primal simplex.
//!
//! Solves `max/min c·v` subject to `A v ≤ b` and `lb ≤ v ≤ ub` with finite
//! bounds on every structural variable. Rows get a slack `s = b - A v ≥ 0`;
//! rows whose slack is negative at `v = lb` start with an artificial variable
//! and are repaired in a first phase that minimizes the artificial sum.
//!
//! Pricing is Dantzig's largest reduced cost until a run of degenerate
//! pivots is seen, after which Bland's smallest-index rule is used for the
//! rest of the solve, so the method always terminates.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

/// Primal feasibility tolerance.
pub const FEAS_TOL: f64 = 1e-8;
/// Reduced-cost tolerance.
pub const OPT_TOL: f64 = 1e-9;
const PIVOT_TOL: f64 = 1e-11;
const DEGENERATE_RUN: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Maximize,
    Minimize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpProblem {
    pub objective: Vec<f64>,
    /// Constraint matrix, row-major, `rows × objective.len()`.
    pub matrix: Vec<f64>,
    pub rhs: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub sense: Sense,
}

impl LpProblem {
    /// `n` variables in `[lower, upper]`, zero objective, no rows.
    pub fn new(n: usize, sense: Sense, lower: f64, upper: f64) -> Self {
        Self {
            objective: vec![0.0; n],
            matrix: Vec::new(),
            rhs: Vec::new(),
            lower: vec![lower; n],
            upper: vec![upper; n],
            sense,
        }
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn num_rows(&self) -> usize {
        self.rhs.len()
    }

    /// Appends `coeffs · v ≤ rhs`.
    pub fn add_row(&mut self, coeffs: &[f64], rhs: f64) {
        debug_assert_eq!(coeffs.len(), self.num_vars());
        self.matrix.extend_from_slice(coeffs);
        self.rhs.push(rhs);
    }

    /// Appends a sparse row given as `(variable, coefficient)` pairs.
    pub fn add_sparse_row(&mut self, terms: &[(usize, f64)], rhs: f64) {
        let n = self.num_vars();
        let start = self.matrix.len();
        self.matrix.resize(start + n, 0.0);
        for &(j, a) in terms {
            self.matrix[start + j] += a;
        }
        self.rhs.push(rhs);
    }

    fn validate(&self) -> Result<(), LpError> {
        let n = self.num_vars();
        if self.lower.len() != n || self.upper.len() != n {
            return Err(LpError::Shape(alloc::format!(
                "{n} variables but {} lower / {} upper bounds",
                self.lower.len(),
                self.upper.len()
            )));
        }
        if self.matrix.len() != n * self.rhs.len() {
            return Err(LpError::Shape(alloc::format!(
                "matrix has {} entries, expected {} rows × {n}",
                self.matrix.len(),
                self.rhs.len()
            )));
        }
        let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
        if !finite(&self.objective) || !finite(&self.matrix) || !finite(&self.rhs) {
            return Err(LpError::Shape("non-finite coefficient".into()));
        }
        if !finite(&self.lower) || !finite(&self.upper) {
            return Err(LpError::Shape("variable bounds must be finite".into()));
        }
        if self.lower.iter().zip(&self.upper).any(|(l, u)| l > u) {
            return Err(LpError::Shape("lower bound above upper bound".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub status: LpStatus,
    /// Objective value at `point` (meaningless when infeasible).
    pub value: f64,
    pub point: Vec<f64>,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LpError {
    Shape(String),
    /// Cannot happen for box-bounded problems; reported as a defect.
    Unbounded,
    IterationLimit(usize),
}

impl fmt::Display for LpError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LpError::Shape(m) => write!(f, "malformed problem: {m}"),
            LpError::Unbounded => f.write_str("unbounded direction on a box-bounded problem"),
            LpError::IterationLimit(n) => write!(f, "iteration limit {n} reached"),
        }
    }
}

impl core::error::Error for LpError {}

pub fn solve(problem: &LpProblem) -> Result<LpSolution, LpError> {
    problem.validate()?;
    let mut tab = Tableau::new(problem);
    let limit = 10_000 + 50 * (tab.rows + tab.cols);

    if tab.n_art > 0 {
        let mut cost = vec![0.0; tab.cols];
        cost[tab.art_start..].fill(-1.0);
        tab.run(&cost, limit)?;
        tab.refresh_basic_values(problem);
        let infeas: f64 = tab.x[tab.art_start..].iter().sum();
        if infeas > FEAS_TOL {
            return Ok(LpSolution {
                status: LpStatus::Infeasible,
                value: f64::NAN,
                point: tab.x[..tab.n].to_vec(),
                iterations: tab.iterations,
            });
        }
        tab.retire_artificials();
    }

    let sign = match problem.sense {
        Sense::Maximize => 1.0,
        Sense::Minimize => -1.0,
    };
    let mut cost = vec![0.0; tab.cols];
    for (c, o) in cost.iter_mut().zip(&problem.objective) {
        *c = sign * o;
    }
    tab.run(&cost, limit)?;
    tab.refresh_basic_values(problem);

    let point: Vec<f64> = tab.x[..tab.n]
        .iter()
        .zip(problem.lower.iter().zip(&problem.upper))
        .map(|(v, (l, u))| v.max(*l).min(*u))
        .collect();
    let value = point.iter().zip(&problem.objective).map(|(v, c)| v * c).sum();
    Ok(LpSolution {
        status: LpStatus::Optimal,
        value,
        point,
        iterations: tab.iterations,
    })
}

struct Tableau {
    n: usize,
    rows: usize,
    cols: usize,
    art_start: usize,
    n_art: usize,
    /// `B^{-1} [A | I | -E]`, row-major.
    t: Vec<f64>,
    basis: Vec<usize>,
    /// Row of each basic column, `usize::MAX` when nonbasic.
    row_of: Vec<usize>,
    lb: Vec<f64>,
    ub: Vec<f64>,
    x: Vec<f64>,
    d: Vec<f64>,
    iterations: usize,
    bland: bool,
}

impl Tableau {
    fn new(problem: &LpProblem) -> Self {
        let n = problem.num_vars();
        let p = problem.num_rows();
        let mut x = Vec::with_capacity(n + 2 * p);
        x.extend_from_slice(&problem.lower);
        let mut slack = Vec::with_capacity(p);
        for i in 0..p {
            let ax: f64 = problem.matrix[i * n..(i + 1) * n]
                .iter()
                .zip(&problem.lower)
                .map(|(a, v)| a * v)
                .sum();
            slack.push(problem.rhs[i] - ax);
        }
        let needs_art: Vec<usize> = (0..p).filter(|&i| slack[i] < 0.0).collect();
        let n_art = needs_art.len();
        let art_start = n + p;
        let cols = art_start + n_art;

        let mut t = vec![0.0; p * cols];
        let mut basis = vec![0; p];
        let mut row_of = vec![usize::MAX; cols];
        let mut lb = problem.lower.clone();
        let mut ub = problem.upper.clone();
        lb.resize(cols, 0.0);
        ub.resize(art_start, f64::INFINITY);
        ub.resize(cols, f64::INFINITY);
        x.resize(cols, 0.0);

        let mut art_of_row = vec![usize::MAX; p];
        for (a, &i) in needs_art.iter().enumerate() {
            art_of_row[i] = art_start + a;
        }
        for i in 0..p {
            let row = &mut t[i * cols..(i + 1) * cols];
            row[..n].copy_from_slice(&problem.matrix[i * n..(i + 1) * n]);
            row[n + i] = 1.0;
            if art_of_row[i] != usize::MAX {
                // basic artificial: scale the row by -1 so its column is +e_i
                for v in row[..art_start].iter_mut() {
                    *v = -*v;
                }
                row[art_of_row[i]] = 1.0;
                basis[i] = art_of_row[i];
                x[art_of_row[i]] = -slack[i];
            } else {
                basis[i] = n + i;
                x[n + i] = slack[i];
            }
            row_of[basis[i]] = i;
        }
        Self {
            n,
            rows: p,
            cols,
            art_start,
            n_art,
            t,
            basis,
            row_of,
            lb,
            ub,
            x,
            d: vec![0.0; cols],
            iterations: 0,
            bland: false,
        }
    }

    #[inline]
    fn at(&self, i: usize, j: usize) -> f64 {
        self.t[i * self.cols + j]
    }

    fn price(&mut self, cost: &[f64]) {
        self.d.copy_from_slice(cost);
        for i in 0..self.rows {
            let cb = cost[self.basis[i]];
            if cb != 0.0 {
                let row = &self.t[i * self.cols..(i + 1) * self.cols];
                for (d, a) in self.d.iter_mut().zip(row) {
                    *d -= cb * a;
                }
            }
        }
    }

    /// Direction `+1` (increase from lower) or `-1` (decrease from upper) in
    /// which column `j` improves the objective, if any.
    fn improving_direction(&self, j: usize) -> Option<f64> {
        if self.row_of[j] != usize::MAX || self.lb[j] == self.ub[j] {
            return None;
        }
        let d = self.d[j];
        if d > OPT_TOL && self.x[j] < self.ub[j] {
            Some(1.0)
        } else if d < -OPT_TOL && self.x[j] > self.lb[j] {
            Some(-1.0)
        } else {
            None
        }
    }

    fn choose_entering(&self) -> Option<(usize, f64)> {
        if self.bland {
            return (0..self.cols).find_map(|j| self.improving_direction(j).map(|dir| (j, dir)));
        }
        let mut best: Option<(usize, f64)> = None;
        let mut best_mag = 0.0;
        for j in 0..self.cols {
            if let Some(dir) = self.improving_direction(j) {
                let mag = self.d[j].abs();
                if mag > best_mag {
                    best_mag = mag;
                    best = Some((j, dir));
                }
            }
        }
        best
    }

    /// Maximizes `cost · x` from the current basis.
    fn run(&mut self, cost: &[f64], limit: usize) -> Result<(), LpError> {
        self.price(cost);
        let mut degenerate = 0;
        loop {
            let Some((j, dir)) = self.choose_entering() else {
                return Ok(());
            };
            self.iterations += 1;
            if self.iterations > limit {
                return Err(LpError::IterationLimit(limit));
            }

            // ratio test
            let mut step = self.ub[j] - self.lb[j];
            let mut leave: Option<(usize, bool)> = None;
            let mut leave_mag = 0.0;
            for i in 0..self.rows {
                let alpha = self.at(i, j);
                if alpha.abs() < PIVOT_TOL {
                    continue;
                }
                let b = self.basis[i];
                // basic value moves by -dir*alpha per unit step
                let rate = -dir * alpha;
                let (limit_t, to_upper) = if rate < 0.0 {
                    (((self.x[b] - self.lb[b]) / -rate).max(0.0), false)
                } else {
                    if self.ub[b] == f64::INFINITY {
                        continue;
                    }
                    (((self.ub[b] - self.x[b]) / rate).max(0.0), true)
                };
                let better = match leave {
                    _ if limit_t < step => true,
                    Some((r, _)) if limit_t == step => {
                        if self.bland {
                            b < self.basis[r]
                        } else {
                            alpha.abs() > leave_mag
                        }
                    }
                    None if limit_t == step => true,
                    _ => false,
                };
                if better {
                    step = limit_t;
                    leave = Some((i, to_upper));
                    leave_mag = alpha.abs();
                }
            }
            if step == f64::INFINITY {
                return Err(LpError::Unbounded);
            }

            if step <= 1e-12 {
                degenerate += 1;
                if degenerate >= DEGENERATE_RUN {
                    self.bland = true;
                }
            } else {
                degenerate = 0;
            }

            self.x[j] += dir * step;
            for i in 0..self.rows {
                let alpha = self.at(i, j);
                if alpha != 0.0 {
                    let b = self.basis[i];
                    self.x[b] -= dir * step * alpha;
                }
            }

            match leave {
                None => {
                    // bound flip
                    self.x[j] = if dir > 0.0 { self.ub[j] } else { self.lb[j] };
                }
                Some((r, to_upper)) => {
                    let out = self.basis[r];
                    self.x[out] = if to_upper { self.ub[out] } else { self.lb[out] };
                    self.pivot(r, j);
                }
            }
        }
    }

    fn pivot(&mut self, r: usize, j: usize) {
        let cols = self.cols;
        let piv = self.t[r * cols + j];
        let inv = 1.0 / piv;
        for v in self.t[r * cols..(r + 1) * cols].iter_mut() {
            *v *= inv;
        }
        self.t[r * cols + j] = 1.0;
        let (before, rest) = self.t.split_at_mut(r * cols);
        let (prow, after) = rest.split_at_mut(cols);
        for row in before.chunks_exact_mut(cols).chain(after.chunks_exact_mut(cols)) {
            let f = row[j];
            if f != 0.0 {
                for (v, p) in row.iter_mut().zip(prow.iter()) {
                    *v -= f * p;
                }
                row[j] = 0.0;
            }
        }
        let f = self.d[j];
        if f != 0.0 {
            for (v, p) in self.d.iter_mut().zip(prow.iter()) {
                *v -= f * p;
            }
            self.d[j] = 0.0;
        }
        let out = self.basis[r];
        self.row_of[out] = usize::MAX;
        self.basis[r] = j;
        self.row_of[j] = r;
    }

    /// Recomputes basic values as `B^{-1} (b - N x_N)`; the slack block of
    /// the tableau holds `B^{-1}`.
    fn refresh_basic_values(&mut self, problem: &LpProblem) {
        let n = self.n;
        let p = self.rows;
        // r = b - A x_struct(nonbasic) + E x_art(nonbasic) - s(nonbasic)
        let mut r = problem.rhs.clone();
        for (i, ri) in r.iter_mut().enumerate() {
            for j in 0..n {
                if self.row_of[j] == usize::MAX {
                    *ri -= problem.matrix[i * n + j] * self.x[j];
                }
            }
            if self.row_of[n + i] == usize::MAX {
                *ri -= self.x[n + i];
            }
        }
        // nonbasic artificials sit at zero, so they do not contribute
        for i in 0..p {
            let row = &self.t[i * self.cols + n..i * self.cols + n + p];
            let v: f64 = row.iter().zip(&r).map(|(a, b)| a * b).sum();
            self.x[self.basis[i]] = v;
        }
    }

    /// Pins artificials to zero and pivots basic ones out where possible.
    fn retire_artificials(&mut self) {
        for a in self.art_start..self.cols {
            self.ub[a] = 0.0;
            if self.row_of[a] == usize::MAX {
                self.x[a] = 0.0;
            }
        }
        for r in 0..self.rows {
            let a = self.basis[r];
            if a < self.art_start {
                continue;
            }
            let candidate = (0..self.art_start)
                .filter(|&j| self.row_of[j] == usize::MAX)
                .max_by(|&p, &q| self.at(r, p).abs().total_cmp(&self.at(r, q).abs()));
            if let Some(j) = candidate {
                if self.at(r, j).abs() > 1e-9 {
                    self.x[a] = 0.0;
                    self.pivot(r, j);
                }
            }
        }
    }
}
