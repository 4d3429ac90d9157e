//! Dense primitives, the reverse-mode tape, Adam, finite-difference gradient
//! checks and the parameter checkpoint format.

mod checkpoint;
mod gradcheck;
mod ops;
mod optim;
mod params;
mod tape;

pub use checkpoint::{read_checkpoint, write_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use gradcheck::{grad_check, sample_coords, Coord};
pub use ops::{inner, leaky_relu, log_loss, relu, sigmoid, softmax, LEAKY_SLOPE};
pub use optim::{Adam, AdamConfig};
pub use params::{GradSlot, Gradients, Param, ParamId, ParamRef, ParamStore};
pub use tape::{Tape, Var};
