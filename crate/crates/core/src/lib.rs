//! Certified-robust regression for small ReLU virtual sensors.
//!
//! The crate covers the full numeric path of a one-hidden-layer regression
//! network under bounded per-feature sensor noise:
//!
//! - [`net`]: the network, its forward pass and exact loss gradients
//!   (plain squared error, robust squared error, targeted mixture);
//! - [`train`]: SGD with heavy-ball momentum and a triangular learning-rate
//!   cycle, in four regimes (standard, noise-augmented, robust, targeted);
//! - [`perturb`]: the clipped per-feature noise box around an input;
//! - [`bounds`]: the linear-relaxation dual bound on the output over a box;
//! - [`attack`]: projected-gradient attack and random-noise evaluation;
//! - [`lp`] and [`milp`]: a dense bounded-variable simplex and a big-M
//!   branch-and-bound that computes exact output extrema;
//! - [`data`]: a synthetic injector-pulse dataset and output range bins;
//! - [`eval`]: per-bin aggregation of clean, noisy, attacked and certified
//!   relative errors.
//!
//! Everything here is `no_std` + `alloc`; file formats, the CLI and
//! parallel orchestration live in the `vsensor` crate.

#![no_std]

extern crate alloc;
#[cfg(any(test, feature = "std"))]
extern crate std;

pub mod attack;
pub mod bounds;
pub mod data;
mod error;
pub mod eval;
pub mod lp;
pub mod milp;
pub mod net;
pub mod perturb;
pub mod train;

pub use error::{Error, Result};

pub use attack::{noise_error, pgd_attack, AttackConfig, AttackResult};
pub use bounds::{
    certified_relative_error, dual_output_bounds, preactivation_intervals, robust_mse, BoundPair,
    Phase, PreactivationIntervals,
};
pub use data::{bin_of, Dataset, DatasetMeta, Example, Generator, RangeBin, BIN_COUNT, FULL_RANGE, RANGE_BINS};
pub use eval::{build_table, evaluate_example, mre, EvalConfig, EvalTable, ExampleRecord, Metric};
pub use lp::{LpError, LpProblem, LpSolution, LpStatus, Sense};
pub use milp::{
    exact_output_bounds, exact_output_bounds_seeded, verify_dataset, verify_example, Certificate, ExactConfig,
    Method, MilpFormulation, Status,
};
pub use net::{backward, DenseNet, Gradient, Objective};
pub use perturb::{InputBox, PerturbationSpec};
pub use train::{cyclic_lr, eps_scale, train, train_with_history, Mode, TargetRange, TrainConfig};
