//! Stochastic centre manifolds with exact noise bookkeeping.
//!
//! The crate constructs the stochastic slow manifold of the Burgers-type SPDE
//! `u_t = -u u_x + u_xx + u + σ Σ_k φ_k(t) sin kx` on `[0, π]`, reduces the
//! resulting amplitude equation to a Markovian model with the correct weak
//! statistics, and checks both reductions by Monte Carlo simulation.
//!
//! * [`noise`] is the exact algebra of noise atoms, memory convolutions and
//!   products.
//! * [`series`] and [`construct`] build the centre manifold and amplitude
//!   evolution.
//! * [`kernels`] has exact memory kernels, covariances and factors.
//! * [`weak`] replaces quadratic noise terms by Markovian drift and noise.
//! * [`sim`] and [`verify`] produce Monte Carlo evidence.
//! * [`schema`] is the JSON interchange format.

pub mod construct;
pub mod kernels;
pub mod noise;
pub mod rational;
pub mod schema;
pub mod series;
pub mod sim;
pub mod verify;
pub mod weak;

pub use construct::{construct, residual, ConstructError, ConstructionConfig, ReducedModel};
pub use noise::{NoiseAtom, NoiseError, NoiseExpr, Primary, Rate};
pub use series::{EvolutionSeries, FieldSeries, Truncation};
