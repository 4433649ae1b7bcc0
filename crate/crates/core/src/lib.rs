//! Unified instruction-driven video generation and editing at desk scale.
//!
//! One generator handles text-to-video, image-to-video, first/last-frame
//! generation, in-context generation and in-context editing. Every task is
//! phrased as an [`instruction::Instruction`]; the task is inferred from the
//! kinds of visual references it carries, and all visual conditions join the
//! target in a single token sequence whose 3D rotary positions
//! ([`rope::offset_policy`]) tell them apart.

pub mod autograd;
pub mod checkpoint;
pub mod codec;
pub mod config;
pub mod datagen;
pub mod dit;
pub mod error;
pub mod eval;
pub mod instruction;
pub mod params;
pub mod rope;
pub mod semantic;
pub mod tensor;
pub mod tomn;
pub mod trainer;

pub use error::{Error, Result};
