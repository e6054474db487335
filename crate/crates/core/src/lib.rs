//! Generalization-enhanced vision transformers on a synthetic
//! distribution-shift benchmark.
//!
//! The crate is organised bottom-up:
//!
//! * [`tensor`]: dense tensors with a reverse-mode tape and a
//!   finite-difference oracle.
//! * [`vit`]: the encoder and its linear, cosine and domain heads.
//! * [`train`]: ERM and the adversarial, minimax-entropy and prototypical
//!   self-supervised training schemes.
//! * [`forge`]: the procedural ShapeWorld corpus and its shift families.
//! * [`eval`]: OOD accuracy, IID/OOD gap, cue-conflict and corruption reports.
//! * [`harness`]: experiment configs and the `generate`/`train`/`evaluate`/`report` commands.

pub mod error;
pub mod eval;
pub mod forge;
pub mod harness;
pub mod par;
pub mod tensor;
pub mod train;
pub mod vit;

pub use error::{Error, Result};
