//! Pixel-level corruptions with five severity levels each.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::Image;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Corruption {
    GaussianNoise,
    ImpulseNoise,
    GaussianBlur,
    Contrast,
    Pixelate,
}

pub const GAUSSIAN_NOISE_SIGMA: [f64; 5] = [0.04, 0.08, 0.12, 0.18, 0.26];
pub const IMPULSE_FRACTION: [f64; 5] = [0.02, 0.04, 0.07, 0.1, 0.15];
pub const BLUR_SIGMA: [f64; 5] = [0.5, 1.0, 1.5, 2.0, 3.0];
pub const CONTRAST_FACTOR: [f64; 5] = [0.8, 0.65, 0.5, 0.4, 0.3];
pub const PIXELATE_BLOCK: [usize; 5] = [2, 3, 4, 6, 8];

impl Corruption {
    pub const ALL: [Corruption; 5] = [
        Corruption::GaussianNoise,
        Corruption::ImpulseNoise,
        Corruption::GaussianBlur,
        Corruption::Contrast,
        Corruption::Pixelate,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Corruption::GaussianNoise => "gaussian_noise",
            Corruption::ImpulseNoise => "impulse_noise",
            Corruption::GaussianBlur => "gaussian_blur",
            Corruption::Contrast => "contrast",
            Corruption::Pixelate => "pixelate",
        }
    }

    pub fn code(self) -> u8 {
        Self::ALL.iter().position(|&c| c == self).unwrap() as u8
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Self::ALL.get(code as usize).copied()
    }
}

impl fmt::Display for Corruption {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Corruption {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::config(format!("unknown corruption type {s:?}")))
    }
}

/// Applies `kind` at `severity` (1–5; 0 is the identity). Output stays in
/// [0, 1] and keeps the input geometry.
pub fn corrupt(image: &Image, kind: Corruption, severity: u8, seed: u64) -> Result<Image> {
    if severity > 5 {
        return Err(Error::config(format!("severity {severity} outside 0..=5")));
    }
    if severity == 0 {
        return Ok(image.clone());
    }
    let s = severity as usize - 1;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = image.clone();
    match kind {
        Corruption::GaussianNoise => {
            let sigma = GAUSSIAN_NOISE_SIGMA[s];
            for v in out.data_mut() {
                let z: f64 = rng.sample(StandardNormal);
                *v = (*v as f64 + sigma * z).clamp(0.0, 1.0) as f32;
            }
        }
        Corruption::ImpulseNoise => {
            let frac = IMPULSE_FRACTION[s];
            for v in out.data_mut() {
                let u: f64 = rng.gen();
                let salt: bool = rng.gen();
                if u < frac {
                    *v = if salt { 1.0 } else { 0.0 };
                }
            }
        }
        Corruption::GaussianBlur => gaussian_blur(&mut out, BLUR_SIGMA[s]),
        Corruption::Contrast => {
            let c = CONTRAST_FACTOR[s];
            let plane = out.height * out.width;
            for ch in out.data_mut().chunks_mut(plane) {
                let mean = ch.iter().map(|&v| v as f64).sum::<f64>() / plane as f64;
                for v in ch {
                    *v = ((*v as f64 - mean) * c + mean).clamp(0.0, 1.0) as f32;
                }
            }
        }
        Corruption::Pixelate => pixelate(&mut out, PIXELATE_BLOCK[s]),
    }
    Ok(out)
}

fn gaussian_blur(img: &mut Image, sigma: f64) {
    let radius = (3.0 * sigma).ceil() as isize;
    let kernel: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let norm: f64 = kernel.iter().sum();
    let kernel: Vec<f64> = kernel.iter().map(|k| k / norm).collect();
    let (h, w) = (img.height as isize, img.width as isize);
    let plane = (h * w) as usize;
    for ch in img.data_mut().chunks_mut(plane) {
        let src: Vec<f64> = ch.iter().map(|&v| v as f64).collect();
        let mut tmp = vec![0.0; plane];
        for y in 0..h {
            for x in 0..w {
                let mut s = 0.0;
                for (k, kv) in kernel.iter().enumerate() {
                    let xx = (x + k as isize - radius).clamp(0, w - 1);
                    s += kv * src[(y * w + xx) as usize];
                }
                tmp[(y * w + x) as usize] = s;
            }
        }
        for y in 0..h {
            for x in 0..w {
                let mut s = 0.0;
                for (k, kv) in kernel.iter().enumerate() {
                    let yy = (y + k as isize - radius).clamp(0, h - 1);
                    s += kv * tmp[(yy * w + x) as usize];
                }
                ch[(y * w + x) as usize] = s.clamp(0.0, 1.0) as f32;
            }
        }
    }
}

fn pixelate(img: &mut Image, block: usize) {
    let (h, w) = (img.height, img.width);
    for ch in img.data_mut().chunks_mut(h * w) {
        for by in (0..h).step_by(block) {
            for bx in (0..w).step_by(block) {
                let ys = by..(by + block).min(h);
                let xs = bx..(bx + block).min(w);
                let mut s = 0.0;
                let mut n = 0.0;
                for y in ys.clone() {
                    for x in xs.clone() {
                        s += ch[y * w + x] as f64;
                        n += 1.0;
                    }
                }
                let all_same = ys
                    .clone()
                    .all(|y| xs.clone().all(|x| ch[y * w + x] == ch[by * w + bx]));
                if all_same {
                    continue;
                }
                let m = (s / n) as f32;
                for y in ys.clone() {
                    for x in xs.clone() {
                        ch[y * w + x] = m;
                    }
                }
            }
        }
    }
}
