use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Which label predictor produces class logits.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HeadKind {
    Linear,
    Cosine,
}

impl FromStr for HeadKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(HeadKind::Linear),
            "cosine" => Ok(HeadKind::Cosine),
            other => Err(Error::config(format!("unknown head kind {other:?}"))),
        }
    }
}

impl fmt::Display for HeadKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            HeadKind::Linear => "linear",
            HeadKind::Cosine => "cosine",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ViTConfig {
    pub image_size: usize,
    pub patch_size: usize,
    pub channels: usize,
    pub embed_dim: usize,
    pub num_heads: usize,
    pub num_layers: usize,
    pub num_classes: usize,
    /// Width of the projected feature F(x).
    pub embedding_dim_out: usize,
    pub cosine_temperature: f64,
    pub mlp_ratio: usize,
    pub domain_hidden: usize,
    pub head: HeadKind,
}

impl Default for ViTConfig {
    fn default() -> Self {
        ViTConfig {
            image_size: 32,
            patch_size: 4,
            channels: 3,
            embed_dim: 64,
            num_heads: 4,
            num_layers: 4,
            num_classes: 9,
            embedding_dim_out: 64,
            cosine_temperature: 0.05,
            mlp_ratio: 4,
            domain_hidden: 64,
            head: HeadKind::Linear,
        }
    }
}

impl ViTConfig {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("image_size", self.image_size),
            ("patch_size", self.patch_size),
            ("channels", self.channels),
            ("embed_dim", self.embed_dim),
            ("num_heads", self.num_heads),
            ("num_layers", self.num_layers),
            ("num_classes", self.num_classes),
            ("embedding_dim_out", self.embedding_dim_out),
            ("mlp_ratio", self.mlp_ratio),
            ("domain_hidden", self.domain_hidden),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(Error::config(format!("model.{name} must be >= 1")));
            }
        }
        if self.image_size % self.patch_size != 0 {
            return Err(Error::config(format!(
                "image size {} is not divisible by patch size {}",
                self.image_size, self.patch_size
            )));
        }
        if self.embed_dim % self.num_heads != 0 {
            return Err(Error::config(format!(
                "embed_dim {} is not divisible by num_heads {}",
                self.embed_dim, self.num_heads
            )));
        }
        if !(self.cosine_temperature > 0.0) {
            return Err(Error::config("cosine temperature must be > 0"));
        }
        Ok(())
    }

    /// Patches per side.
    pub fn grid(&self) -> usize {
        self.image_size / self.patch_size
    }

    pub fn num_patches(&self) -> usize {
        self.grid() * self.grid()
    }

    /// Patch tokens plus the class token.
    pub fn num_tokens(&self) -> usize {
        self.num_patches() + 1
    }

    pub fn patch_dim(&self) -> usize {
        self.channels * self.patch_size * self.patch_size
    }

    pub fn head_dim(&self) -> usize {
        self.embed_dim / self.num_heads
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn token_counts() {
        let cfg = ViTConfig {
            image_size: 16,
            patch_size: 4,
            ..ViTConfig::default()
        };
        assert_eq!(cfg.num_tokens(), 17);
        let paper = ViTConfig {
            image_size: 224,
            patch_size: 16,
            ..ViTConfig::default()
        };
        assert_eq!(paper.num_patches(), 196);
        assert_eq!(paper.num_tokens(), 197);
    }

    #[test]
    fn rejects_bad_geometry() {
        let cfg = ViTConfig {
            image_size: 30,
            ..ViTConfig::default()
        };
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        let cfg = ViTConfig {
            embed_dim: 30,
            num_heads: 4,
            ..ViTConfig::default()
        };
        assert!(cfg.validate().is_err());
        assert!(ViTConfig::default().validate().is_ok());
    }
}
