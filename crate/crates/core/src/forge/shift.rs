//! The four shift families and the named evaluation suites built from them.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::corrupt::{corrupt, Corruption};
use super::render::{render_clean, render_style};
use super::{mix, CueSpec, Domain, Example, ShiftFamily, ShiftTag, StyleDomain};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BackgroundVariant {
    OnlyFg,
    MixedSame,
    MixedRand,
    MixedNext,
}

impl BackgroundVariant {
    pub const ALL: [BackgroundVariant; 4] = [
        BackgroundVariant::OnlyFg,
        BackgroundVariant::MixedSame,
        BackgroundVariant::MixedRand,
        BackgroundVariant::MixedNext,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BackgroundVariant::OnlyFg => "only_fg",
            BackgroundVariant::MixedSame => "mixed_same",
            BackgroundVariant::MixedRand => "mixed_rand",
            BackgroundVariant::MixedNext => "mixed_next",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TextureMode {
    Stylize,
    CueConflict,
}

impl TextureMode {
    pub fn name(self) -> &'static str {
        match self {
            TextureMode::Stylize => "stylize",
            TextureMode::CueConflict => "cue_conflict",
        }
    }
}

/// Replaces the backdrop; foreground cues are untouched.
pub fn background_shift(
    spec: &CueSpec,
    variant: BackgroundVariant,
    n_classes: usize,
    seed: u64,
) -> CueSpec {
    let mut out = *spec;
    let mut r = ChaCha8Rng::seed_from_u64(mix(seed, 0xBA));
    match variant {
        BackgroundVariant::OnlyFg => out.background_class = None,
        BackgroundVariant::MixedSame => {
            out.background_class = Some(spec.shape_class);
            out.background_seed = r.gen();
        }
        BackgroundVariant::MixedRand => {
            out.background_class = Some(r.gen_range(0..n_classes) as u16);
            out.background_seed = r.gen();
        }
        BackgroundVariant::MixedNext => {
            out.background_class = Some(((spec.shape_class as usize + 1) % n_classes) as u16);
            out.background_seed = r.gen();
        }
    }
    out
}

/// `Stylize` draws a random texture other than the shape class and a random
/// backdrop. `CueConflict` swaps in `conflict` as the texture and leaves the
/// rest of the spec alone.
pub fn texture_shift(
    spec: &CueSpec,
    mode: TextureMode,
    conflict: Option<u16>,
    n_classes: usize,
    seed: u64,
) -> Result<CueSpec> {
    let mut out = *spec;
    match mode {
        TextureMode::Stylize => {
            if n_classes < 2 {
                return Err(Error::contract("stylize needs at least two classes"));
            }
            let mut r = ChaCha8Rng::seed_from_u64(mix(seed, 0x57));
            out.texture_class = other_class(&mut r, spec.shape_class, n_classes);
            out.background_class = Some(r.gen_range(0..n_classes) as u16);
            out.background_seed = r.gen();
        }
        TextureMode::CueConflict => {
            let c =
                conflict.ok_or_else(|| Error::contract("cue conflict needs a conflict class"))?;
            if c == spec.shape_class {
                return Err(Error::contract(format!(
                    "conflict class {c} equals the shape class"
                )));
            }
            if c as usize >= n_classes {
                return Err(Error::contract(format!("conflict class {c} out of range")));
            }
            out.texture_class = c;
        }
    }
    Ok(out)
}

fn other_class(r: &mut ChaCha8Rng, avoid: u16, n_classes: usize) -> u16 {
    loop {
        let c = r.gen_range(0..n_classes) as u16;
        if c != avoid {
            return c;
        }
    }
}

/// Renders the spec in a style domain. The label stays the shape class.
pub fn style_shift(spec: &CueSpec, domain: StyleDomain, size: usize) -> Example {
    Example {
        image: render_style(spec, size, domain),
        shape_label: spec.shape_class,
        texture_label: spec.texture_class,
        background_label: spec.background_class,
        domain: Domain::Target,
        shift: ShiftTag {
            family: ShiftFamily::Style,
            variant: domain.code(),
            severity: 0,
        },
    }
}

/// A named evaluation set derived from clean specs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Suite {
    Clean,
    Background(BackgroundVariant),
    Corruption(Corruption, u8),
    Texture(TextureMode),
    Style(StyleDomain),
}

impl Suite {
    /// Every suite `build_corpus` writes by default.
    pub fn all() -> Vec<Suite> {
        let mut v: Vec<Suite> = BackgroundVariant::ALL
            .into_iter()
            .map(Suite::Background)
            .collect();
        for c in Corruption::ALL {
            for s in 1..=5 {
                v.push(Suite::Corruption(c, s));
            }
        }
        v.push(Suite::Texture(TextureMode::Stylize));
        v.push(Suite::Texture(TextureMode::CueConflict));
        v.extend(StyleDomain::ALL.into_iter().map(Suite::Style));
        v
    }

    pub fn tag(self) -> ShiftTag {
        let (family, variant, severity) = match self {
            Suite::Clean => (ShiftFamily::Clean, 0, 0),
            Suite::Background(b) => (ShiftFamily::Background, b as u8, 0),
            Suite::Corruption(c, s) => (ShiftFamily::Corruption, c.code(), s),
            Suite::Texture(t) => (ShiftFamily::Texture, t as u8, 0),
            Suite::Style(d) => (ShiftFamily::Style, d.code(), 0),
        };
        ShiftTag {
            family,
            variant,
            severity,
        }
    }

    /// Builds the shifted example for one clean spec.
    pub fn generate(self, spec: &CueSpec, size: usize, n_classes: usize) -> Result<Example> {
        let seed = mix(spec.seed, 0x5117);
        let render_as = |s: &CueSpec, tag: ShiftTag| Example {
            image: render_clean(s, size),
            shape_label: s.shape_class,
            texture_label: s.texture_class,
            background_label: s.background_class,
            domain: Domain::Source,
            shift: tag,
        };
        Ok(match self {
            Suite::Clean => render_as(spec, self.tag()),
            Suite::Background(v) => {
                render_as(&background_shift(spec, v, n_classes, seed), self.tag())
            }
            Suite::Corruption(c, s) => {
                // one noise stream per type, shared across severities
                let mut ex = render_as(spec, self.tag());
                ex.image = corrupt(&ex.image, c, s, mix(seed, c.code() as u64))?;
                ex
            }
            Suite::Texture(TextureMode::Stylize) => render_as(
                &texture_shift(spec, TextureMode::Stylize, None, n_classes, seed)?,
                self.tag(),
            ),
            Suite::Texture(TextureMode::CueConflict) => {
                let mut r = ChaCha8Rng::seed_from_u64(mix(seed, 0xCC));
                let c = other_class(&mut r, spec.shape_class, n_classes);
                render_as(
                    &texture_shift(spec, TextureMode::CueConflict, Some(c), n_classes, seed)?,
                    self.tag(),
                )
            }
            Suite::Style(d) => style_shift(spec, d, size),
        })
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Suite::Clean => f.write_str("clean"),
            Suite::Background(b) => write!(f, "background_{}", b.name()),
            Suite::Corruption(c, s) => write!(f, "corruption_{}_s{}", c.name(), s),
            Suite::Texture(t) => write!(f, "texture_{}", t.name()),
            Suite::Style(d) => write!(f, "style_{}", d.name()),
        }
    }
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "clean" {
            return Ok(Suite::Clean);
        }
        let found = Suite::all().into_iter().find(|x| x.to_string() == s);
        found.ok_or_else(|| Error::config(format!("unknown suite {s:?}")))
    }
}
