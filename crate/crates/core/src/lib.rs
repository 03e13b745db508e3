pub mod analysis;
pub mod field;
pub mod harness;
pub mod nn;
pub mod target;
pub mod trainer;
pub mod walker;
