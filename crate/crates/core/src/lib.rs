//! Stochastic normal forms for slow-fast SDE systems.
//!
//! Series with exact rational coefficients carry noise factors built from
//! white noises and their exponential convolutions. [`engine::construct`]
//! finds a coordinate transform that decouples slow and fast dynamics,
//! [`engine::verify_order`] re-checks it independently, and [`sim`] runs
//! the original and derived models on sampled noise paths.

pub mod noise;
pub mod rational;
pub mod series;
pub mod text;
pub mod engine;
pub mod homological;
pub mod ssm;
pub mod sim;
pub mod hopf;
pub mod io;
pub mod pipeline;

pub use engine::{construct, verify_order, EngineError, NormalForm, SystemSpec};
pub use homological::{Anticipation, Policy};
pub use io::{parse_spec, BuiltSpec, OrderSpec, SpecDocument, SpecError};
pub use noise::{NoiseAtom, NoiseExpr, NoisePoly};
pub use rational::Q;
pub use series::{Ctx, Dims, Series, SeriesError, Truncation};
pub use sim::{EnsembleConfig, NoisePath, SimError, Summary};
