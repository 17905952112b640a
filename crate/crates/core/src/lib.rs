//! Hazard detection and avoidance for planetary landing from two monocular
//! images and navigation state.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod camera;
pub mod experiment;
pub mod features;
pub mod image;
pub mod montecarlo;
pub mod par;
pub mod pipeline;
pub mod quadtree;
pub mod scene;
pub mod sfm;
