//! `SHFT0001` dataset files.
//!
//! Header: magic, n_examples (u32), channels (u8), height (u8), width (u8),
//! n_classes (u16). Each example: shape, texture and background labels
//! (u16, background `0xFFFF` when blank), domain, family, variant and
//! severity (u8 each), then C·H·W pixels as f32. Little endian throughout.

use std::fs;
use std::path::Path;

use super::{Domain, Example, Image, ShiftFamily, ShiftTag};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"SHFT0001";
const NO_BACKGROUND: u16 = 0xFFFF;

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub n_classes: usize,
    pub examples: Vec<Example>,
}

impl Dataset {
    pub fn new(channels: usize, height: usize, width: usize, n_classes: usize) -> Self {
        Dataset {
            channels,
            height,
            width,
            n_classes,
            examples: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }
}

pub fn to_bytes(ds: &Dataset) -> Result<Vec<u8>> {
    let fits = ds.channels <= 255 && ds.height <= 255 && ds.width <= 255 && ds.n_classes < 0xFFFF;
    if !fits || ds.examples.len() > u32::MAX as usize {
        return Err(Error::contract(
            "dataset geometry does not fit the file header",
        ));
    }
    let px = ds.channels * ds.height * ds.width;
    let mut buf = Vec::with_capacity(19 + ds.len() * (10 + 4 * px));
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&(ds.len() as u32).to_le_bytes());
    buf.extend_from_slice(&[ds.channels as u8, ds.height as u8, ds.width as u8]);
    buf.extend_from_slice(&(ds.n_classes as u16).to_le_bytes());
    for ex in &ds.examples {
        let img = &ex.image;
        if (img.channels, img.height, img.width) != (ds.channels, ds.height, ds.width) {
            return Err(Error::contract(
                "example geometry differs from the dataset header",
            ));
        }
        buf.extend_from_slice(&ex.shape_label.to_le_bytes());
        buf.extend_from_slice(&ex.texture_label.to_le_bytes());
        buf.extend_from_slice(&ex.background_label.unwrap_or(NO_BACKGROUND).to_le_bytes());
        buf.extend_from_slice(&[
            ex.domain as u8,
            ex.shift.family as u8,
            ex.shift.variant,
            ex.shift.severity,
        ]);
        for v in img.data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(buf)
}

pub fn from_bytes(bytes: &[u8]) -> std::result::Result<Dataset, String> {
    if bytes.len() < 17 || &bytes[..8] != MAGIC {
        return Err("missing SHFT0001 magic".into());
    }
    let n = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let (c, h, w) = (bytes[12] as usize, bytes[13] as usize, bytes[14] as usize);
    let n_classes = u16::from_le_bytes(bytes[15..17].try_into().unwrap()) as usize;
    let px = c * h * w;
    let rec = 10 + 4 * px;
    if bytes.len() != 17 + n * rec {
        return Err(format!(
            "expected {} bytes for {n} examples, found {}",
            17 + n * rec,
            bytes.len()
        ));
    }
    let mut ds = Dataset::new(c, h, w, n_classes);
    let u16_at = |b: &[u8], i: usize| u16::from_le_bytes([b[i], b[i + 1]]);
    for r in bytes[17..].chunks_exact(rec) {
        let bg = u16_at(r, 4);
        let domain = match r[6] {
            0 => Domain::Source,
            1 => Domain::Target,
            d => return Err(format!("bad domain tag {d}")),
        };
        let family =
            ShiftFamily::from_code(r[7]).ok_or_else(|| format!("bad shift family {}", r[7]))?;
        let data = r[10..]
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
            .collect();
        ds.examples.push(Example {
            image: Image::new(c, h, w, data),
            shape_label: u16_at(r, 0),
            texture_label: u16_at(r, 2),
            background_label: (bg != NO_BACKGROUND).then_some(bg),
            domain,
            shift: ShiftTag {
                family,
                variant: r[8],
                severity: r[9],
            },
        });
    }
    Ok(ds)
}

pub fn write_dataset(ds: &Dataset, path: &Path) -> Result<()> {
    fs::write(path, to_bytes(ds)?).map_err(|e| Error::io(path, e))
}

pub fn read_dataset(path: &Path) -> Result<Dataset> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    from_bytes(&bytes).map_err(|reason| Error::Format {
        path: path.to_path_buf(),
        reason,
    })
}
