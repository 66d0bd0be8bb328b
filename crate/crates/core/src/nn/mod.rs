//! Reverse-mode autodiff, parameter storage and optimization.

pub mod optim;
pub mod params;
pub mod tape;

pub use optim::{clip_global_norm, AdamW};
pub use params::{glorot_uniform, ParamEntry, ParamStore};
pub use tape::{Gradients, Tape, Var};
