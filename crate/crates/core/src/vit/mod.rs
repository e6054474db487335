//! Toy-scale vision transformer: patch embedding, pre-norm encoder blocks
//! with optional windowed attention, and the label/domain heads.

pub mod checkpoint;
mod config;
mod heads;
mod model;
mod params;
mod posembed;

pub use config::{HeadKind, ViTConfig};
pub use heads::{cosine_head, domain_head, linear_head, DenseIndex, DomainHeadIndex};
pub use model::{
    attention_mask, mhsa_forward, patch_embed, patchify, AttentionIndex, BlockIndex, EncodeTrace,
    ModelIndex, NormIndex, ViTModel,
};
pub use params::{copy_by_name, Binding, Grads, Param, ParamGroup, ParamId, ParamStore};
pub use posembed::resize_pos_embed;
