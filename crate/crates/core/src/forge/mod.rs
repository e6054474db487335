//! ShapeWorld: a procedural image corpus with independently controllable
//! background, texture, shape and structure cues, plus shift transforms.

pub mod corpus;
pub mod corrupt;
pub mod format;
pub mod geometry;
pub mod pattern;
pub mod render;
pub mod shift;

pub use corpus::{build_corpus, CorpusSpec, Manifest, ManifestEntry, Split};
pub use corrupt::{corrupt, Corruption};
pub use format::{read_dataset, write_dataset, Dataset};
pub use render::{render, render_style, RenderParams};
pub use shift::{
    background_shift, style_shift, texture_shift, BackgroundVariant, Suite, TextureMode,
};

use crate::tensor::Tensor;

/// splitmix64 finaliser over the pair; used to derive every seed.
pub fn mix(a: u64, b: u64) -> u64 {
    let mut z = a ^ b
        .wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(0x632B_E59B_D9B4_E019);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Cue settings of one image. `background_class = None` leaves the canvas
/// blank behind the object.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CueSpec {
    pub shape_class: u16,
    pub texture_class: u16,
    pub background_class: Option<u16>,
    pub background_seed: u64,
    pub color_jitter: f64,
    pub seed: u64,
}

impl CueSpec {
    /// All cues agree on `class`.
    pub fn clean(class: u16, seed: u64) -> Self {
        CueSpec {
            shape_class: class,
            texture_class: class,
            background_class: Some(class),
            background_seed: mix(seed, 0xB6),
            color_jitter: 1.0,
            seed,
        }
    }
}

/// Channel-major image with values in [0, 1].
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    data: Vec<f32>,
}

impl Image {
    pub fn new(channels: usize, height: usize, width: usize, data: Vec<f32>) -> Self {
        assert_eq!(data.len(), channels * height * width, "image buffer size");
        Image {
            channels,
            height,
            width,
            data,
        }
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::new(
            &[self.channels, self.height, self.width],
            self.data.iter().map(|&v| v as f64).collect(),
        )
        .expect("image geometry")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Domain {
    Source = 0,
    Target = 1,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ShiftFamily {
    Clean = 0,
    Background = 1,
    Corruption = 2,
    Texture = 3,
    Style = 4,
}

impl ShiftFamily {
    pub fn name(self) -> &'static str {
        match self {
            ShiftFamily::Clean => "clean",
            ShiftFamily::Background => "background",
            ShiftFamily::Corruption => "corruption",
            ShiftFamily::Texture => "texture",
            ShiftFamily::Style => "style",
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        [
            ShiftFamily::Clean,
            ShiftFamily::Background,
            ShiftFamily::Corruption,
            ShiftFamily::Texture,
            ShiftFamily::Style,
        ]
        .get(code as usize)
        .copied()
    }
}

/// Family, variant code within the family, and severity (corruption only).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ShiftTag {
    pub family: ShiftFamily,
    pub variant: u8,
    pub severity: u8,
}

impl ShiftTag {
    pub fn clean() -> Self {
        ShiftTag {
            family: ShiftFamily::Clean,
            variant: 0,
            severity: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum StyleDomain {
    PaintingLike,
    SketchLike,
    QuickdrawLike,
}

impl StyleDomain {
    pub const ALL: [StyleDomain; 3] = [
        StyleDomain::PaintingLike,
        StyleDomain::SketchLike,
        StyleDomain::QuickdrawLike,
    ];

    pub fn name(self) -> &'static str {
        match self {
            StyleDomain::PaintingLike => "painting_like",
            StyleDomain::SketchLike => "sketch_like",
            StyleDomain::QuickdrawLike => "quickdraw_like",
        }
    }

    pub fn code(self) -> u8 {
        self as u8
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Example {
    pub image: Image,
    pub shape_label: u16,
    pub texture_label: u16,
    pub background_label: Option<u16>,
    pub domain: Domain,
    pub shift: ShiftTag,
}

impl Example {
    /// Ground truth is always the shape class.
    pub fn label(&self) -> usize {
        self.shape_label as usize
    }
}
