//! Multi-agent submap fusion over Sim(3).
pub mod liegroup;
pub mod camera;
pub mod voxel;
pub mod summary;
pub mod registration;
pub mod posegraph;
pub mod fusion;
pub mod simworld;
pub mod coordinator;
