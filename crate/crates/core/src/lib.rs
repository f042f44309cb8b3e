//! Deterministic 2D simulator of a magnetic capsule pulled by MRI gradient
//! pulses, with focused-ultrasound triggered drug release.
//!
//! The physics kernels are generic over [`Scalar`] (`f32` or `f64`). The
//! simulation loop, imaging and scenario handling run in `f64`, and the
//! aliases below name the `f64` instantiations used throughout.

pub mod capsule;
pub mod characterize;
pub mod dye;
pub mod dynamics;
pub mod environment;
pub mod error;
pub mod geometry;
pub mod headless;
pub mod hifu;
pub mod imaging;
pub mod metrics;
pub mod pilot;
pub mod scalar;
pub mod scenario;
pub mod sequence;
pub mod sim;
pub mod telemetry;
pub mod trace;

pub use error::{Result, SimError, ValidationError};
pub use scalar::Scalar;

pub type Vec2 = scalar::Vec2<f64>;
pub type Vec2f = scalar::Vec2<f32>;
pub type Rect = geometry::Rect<f64>;
pub type CapsuleGeometry = capsule::CapsuleGeometry<f64>;
pub type CapsuleState = capsule::CapsuleState<f64>;
pub type ThresholdModel = capsule::ThresholdModel<f64>;
pub type ReleaseRateModel = capsule::ReleaseRateModel<f64>;
pub type SequenceParams = sequence::SequenceParams<f64>;
pub type GradientCommand = sequence::GradientCommand<f64>;
pub type HifuConfig = hifu::HifuConfig<f64>;
pub type HifuState = hifu::HifuState<f64>;
pub type Environment = environment::Environment<f64>;
pub type Region = environment::Region<f64>;
pub type DynamicsParams = dynamics::DynamicsParams<f64>;
pub type BodyState = dynamics::BodyState<f64>;
pub type DyeField = dye::DyeField<f64>;
pub type DyeParams = dye::DyeParams<f64>;
