//! Task and motion planning for 2D pick-and-place scenes: problems are
//! decomposed with a policy sketch and each subproblem is solved by a
//! width-based search with lazy geometric validation.

pub mod bench;
pub mod exec;
pub mod features;
pub mod geom;
pub mod io;
pub mod render;
pub mod replay;
pub mod rrt;
pub mod sampler;
pub mod search;
pub mod sketch;
pub mod suite;
pub mod world;
