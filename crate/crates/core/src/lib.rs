//! Desk-scale off-road navigation stack: a deterministic 2D world simulator,
//! self-supervised trajectory data collection, a learned conditional
//! trajectory density, a geometric costmap pipeline, and a planner that
//! blends the learned and geometric costs into one criterion, plus the
//! benchmark harness that compares the blended planner against its
//! components and baselines.

pub mod costmap;
pub mod data;
pub mod density;
pub mod eval;
pub mod geometry;
pub mod nn;
pub mod pipeline;
pub mod planner;
pub mod rng;
pub mod world;
