//! Scene-completion grasping pipeline.
//!
//! From a single posed depth view: filter the background, segment the cloud
//! into objects, shape-complete each object into a watertight mesh, render
//! simulated viewpoints of the estimated scene, corrupt them with sensor
//! noise, plan planar grasps per view and select the best full 6-DOF grasp.
//! A synthetic harness with a geometric grasp oracle drives benchmark-style
//! experiments over the whole pipeline.

pub mod completion;
pub mod config;
pub mod error;
pub mod filter;
pub mod geometry;
pub mod grasp;
pub mod harness;
pub mod io;
pub mod marching;
mod mc_tables;
pub mod mesh;
pub mod noise;
pub mod pipeline;
pub mod render;
pub mod segmentation;
pub mod shapes;
pub mod viewpoints;
pub mod voxel;

pub use error::{Error, Result};
