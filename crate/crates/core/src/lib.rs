//! Doubly robust self-training: losses, closed-form estimators, optimizers,
//! synthetic generators, verification oracles and an experiment harness.

// `!(x > 0.0)` style guards are kept on purpose: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod closed_form;
pub mod data;
pub mod error;
pub mod harness;
pub mod losses;
pub mod optim;
pub mod oracle;
pub mod rng;
pub mod sum;
pub mod synth;

pub use data::{
    validate_datasets, Datasets, ImportanceWeighter, LabeledSet, LossModel, Parameter, Teacher, TeacherFamily,
    TruthFn, UnlabeledSet,
};
pub use error::{Error, Result};
pub use losses::{alpha_at, CurriculumSchedule, LossKind, Objective, PreparedLoss, ScheduleKind};
