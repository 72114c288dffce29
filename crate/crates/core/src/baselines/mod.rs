//! Discriminative reference methods: projected/penalized gradient descent on
//! each instance, and a feed-forward regressor trained on oracle labels.

mod gd;
mod mtfnn;

pub use gd::{gd_solve, gd_solve_traced, project_capped_simplex, GdConfig, GdRun};
pub use mtfnn::{mtfnn_predict, mtfnn_train, MtfnnConfig, MtfnnMeta, MtfnnModel, MTFNN_FORMAT};
