//! Critical points of control landscapes: bounded gradient ascent,
//! Hessian-based classification, and the kinematic picture J(Û) in which
//! the landscape is viewed directly on the unitary group.

mod ascent;
mod classify;
mod kinematic;

pub use ascent::{ascend, descend, AscentConfig, AscentOutcome, ROUNDING_ULPS};
pub use classify::{classify, reclassify, ClassifyConfig, Classification, CriticalPoint};
pub use kinematic::{
    kinematic_overlap, kinematic_second_variation, random_unitary, zero_overlap_instance,
    InertiaReport, KinematicConfig,
};
