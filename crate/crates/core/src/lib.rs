//! Coupon-offering policies for privacy-sensitive consumers.
//!
//! A retailer chooses each period between a targeted coupon (HP) and a
//! generic one (LP). The consumer is Normal or Alerted; an Alerted consumer
//! makes targeted coupons expensive. The retailer only holds a belief p that
//! the consumer is Alerted. HP costs reveal the state, LP costs do not.
//!
//! The crate provides
//! * a closed-form solver for the optimal threshold (`threshold`),
//! * a value-iteration oracle on discretized beliefs (`vi`, `simplex`),
//! * the coupon-dependent transition variant (`coupon_dependent`),
//! * noisy cost feedback with MAP and Bayesian belief estimators (`noisy`),
//! * a reproducible Monte Carlo harness (`sim`), and
//! * the configuration layer behind the `coupon-policy` binary (`config`, `cli`).

pub mod cli;
pub mod config;
pub mod coupon_dependent;
pub mod error;
pub mod evaluation;
pub mod model;
pub mod noisy;
pub mod rng;
pub mod sim;
pub mod simplex;
pub mod threshold;
pub mod vi;

pub use error::{Error, ErrorKind, Result};
pub use model::{Action, Assumption, Belief, ConsumerState, CostModel, TransitionModel};
pub use threshold::{solve_threshold, ThresholdSolution};
