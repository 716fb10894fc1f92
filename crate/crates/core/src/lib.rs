//! CBF-TB-RRT: a time-budgeted RRT for unicycle robots among pedestrians.
//! Tree edges come from a per-step QP that enforces control barrier function
//! constraints against walls, static discs and predicted pedestrian discs.

// `!(x > 0.0)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cbf;
pub mod error;
pub mod geometry;
pub mod params;
pub mod planner;
pub mod prediction;
pub mod qp;
pub mod scenario;
pub mod sim;
pub mod steer;
pub mod trace;
