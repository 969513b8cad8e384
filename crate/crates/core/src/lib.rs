//! Performance model and planning toolkit for PCIe-attached systolic-array
//! edge accelerators with small on-chip memories.
//!
//! - [`model`]: layered FC/CONV model description and synthetic sweep generators.
//! - [`systolic`]: register-level simulation of the multiply-sum chain array.
//! - [`device`]: whole-layer on-chip placement with host spill and a roofline stage cost.
//! - [`partition`]: contiguous segmentations, even split, threshold and exhaustive search.
//! - [`pipeline`]: analytic, discrete-event and thread-per-stage pipeline execution.
//! - [`experiment`]: sweep, segment, profile, calibrate and systolic drivers.
//!
//! Time arithmetic is generic over [`Scalar`]. The aliases below fix it to
//! `f64` for experiments and to [`Rational64`] where exact comparisons are needed.

pub mod device;
pub mod error;
pub mod experiment;
pub mod model;
pub mod partition;
pub mod pipeline;
pub mod scalar;
pub mod systolic;

pub use num_rational::Rational64;

pub use device::{AcceleratorProfile, AllocationPolicy, Location, Placement, StageCost};
pub use error::{Error, Result};
pub use model::{LayerSpec, ModelKind, ModelSpec, SweepConfig};
pub use partition::{Partition, PartitionEvaluation};
pub use pipeline::{Backend, PipelinePlan, PlanStage, SimOptions, SimResult};
pub use scalar::Scalar;
pub use systolic::{CycleReport, MatVecJob, SystolicArrayConfig};

pub type Profile = AcceleratorProfile<f64>;
pub type Cost = StageCost<f64>;
pub type Evaluation = PartitionEvaluation<f64>;
pub type Plan = PipelinePlan<f64>;
pub type Outcome = SimResult<f64>;

pub type ExactProfile = AcceleratorProfile<Rational64>;
pub type ExactCost = StageCost<Rational64>;
pub type ExactEvaluation = PartitionEvaluation<Rational64>;
pub type ExactPlan = PipelinePlan<Rational64>;
pub type ExactOutcome = SimResult<Rational64>;
