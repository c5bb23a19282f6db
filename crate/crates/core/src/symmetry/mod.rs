//! Candidate symmetries `k = (f, g, l)`, their detection on a batch and the
//! resulting augmentation.

mod catalog;
mod detect;
mod transform;

pub use catalog::{builtin_catalog, catalog_for, lookup, true_symmetries};
pub use detect::{
    augment_continuous, augment_discrete, continuous_residual, detect_continuous,
    detect_discrete, detect_with_lambda, force_augment_continuous, force_augment_discrete,
    grid_consistent, transform_continuous, transform_discrete, DetectionResult,
};
pub use transform::{ActionOp, Endpoint, StateMap, StateOp, TransformSpec};
