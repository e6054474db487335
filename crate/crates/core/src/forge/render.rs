use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::geometry::{class_outline, coverage, simplify, stroke_alpha, Outline, Pose};
use super::pattern::{
    background_color, background_tones, smooth_color, texture_color, texture_tones, Rgb,
};
use super::{mix, CueSpec, Domain, Example, Image, ShiftTag, StyleDomain};

const SUBSAMPLES: usize = 4;
const CONTOUR_WIDTH: f64 = 1.0;
const INK: f64 = 0.08;
const PAPER: f64 = 1.0;
const QUICKDRAW_TOLERANCE: f64 = 0.12;

/// Canvas geometry shared by every rendering.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RenderParams {
    pub size: usize,
    pub n_classes: usize,
}

impl Default for RenderParams {
    fn default() -> Self {
        RenderParams {
            size: 32,
            n_classes: 9,
        }
    }
}

fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix(seed, stream))
}

/// Object pose drawn from the spec seed: identical for every style.
pub fn pose(spec: &CueSpec, size: usize) -> Pose {
    let mut r = rng(spec.seed, 1);
    let half = size as f64 / 2.0;
    Pose {
        angle: r.gen_range(-0.35..0.35),
        scale: half * 0.9 * r.gen_range(0.85..1.0),
        cx: half + r.gen_range(-1.5..1.5),
        cy: half + r.gen_range(-1.5..1.5),
    }
}

/// Silhouette in pixel coordinates.
pub fn placed_outline(spec: &CueSpec, size: usize) -> Outline {
    pose(spec, size).apply(&class_outline(spec.shape_class as usize))
}

/// Fractional foreground coverage per pixel.
pub fn shape_coverage(spec: &CueSpec, size: usize) -> Vec<f64> {
    coverage(&placed_outline(spec, size), size, SUBSAMPLES)
}

/// Pixels at least half covered by the silhouette.
pub fn shape_mask(spec: &CueSpec, size: usize) -> Vec<bool> {
    shape_coverage(spec, size)
        .into_iter()
        .map(|c| c >= 0.5)
        .collect()
}

/// Pixels fully inside the silhouette, i.e. excluding the anti-aliased band.
pub fn interior_mask(spec: &CueSpec, size: usize) -> Vec<bool> {
    shape_coverage(spec, size)
        .into_iter()
        .map(|c| c == 1.0)
        .collect()
}

/// Alpha of the dark contour drawn over the silhouette edge.
pub fn contour_alpha(spec: &CueSpec, size: usize) -> Vec<f64> {
    stroke_alpha(&placed_outline(spec, size), size, CONTOUR_WIDTH)
}

/// Hue rotation (degrees) and brightness offset of one layer.
#[derive(Clone, Copy, Debug)]
struct Tint {
    hue: f64,
    value: f64,
}

/// Jitter 1 draws the hue uniformly from the whole wheel.
fn tint(jitter: f64, seed: u64) -> Tint {
    let j = jitter.clamp(0.0, 1.0);
    if j == 0.0 {
        return Tint {
            hue: 0.0,
            value: 0.0,
        };
    }
    let mut r = rng(seed, 4);
    Tint {
        hue: r.gen_range(-180.0 * j..=180.0 * j),
        value: r.gen_range(-0.15 * j..=0.15 * j),
    }
}

fn tints(spec: &CueSpec) -> (Tint, Tint) {
    (
        tint(spec.color_jitter, spec.seed),
        tint(spec.color_jitter, spec.background_seed),
    )
}

fn shift(c: Rgb, d: f64) -> Rgb {
    [c[0] + d, c[1] + d, c[2] + d]
}

struct Canvas {
    size: usize,
    px: Vec<Rgb>,
}

impl Canvas {
    fn new(size: usize, fill: impl Fn(usize, usize) -> Rgb) -> Self {
        let px = (0..size * size).map(|i| fill(i % size, i / size)).collect();
        Canvas { size, px }
    }

    fn composite(&mut self, alpha: &[f64], color: impl Fn(usize, usize) -> Rgb) {
        for (i, (&a, p)) in alpha.iter().zip(self.px.iter_mut()).enumerate() {
            if a == 0.0 {
                continue;
            }
            let c = color(i % self.size, i / self.size);
            if a == 1.0 {
                *p = c;
            } else {
                for k in 0..3 {
                    p[k] = a * c[k] + (1.0 - a) * p[k];
                }
            }
        }
    }

    fn into_image(self) -> Image {
        let n = self.size * self.size;
        let mut data = vec![0f32; 3 * n];
        for (i, p) in self.px.iter().enumerate() {
            for k in 0..3 {
                data[k * n + i] = p[k].clamp(0.0, 1.0) as f32;
            }
        }
        Image::new(3, self.size, self.size, data)
    }
}

fn backdrop(spec: &CueSpec, size: usize, bg: Tint) -> Canvas {
    match spec.background_class {
        None => Canvas::new(size, |_, _| [0.0; 3]),
        Some(b) => {
            let phase = rng(spec.background_seed, 3).gen_range(0.0..std::f64::consts::TAU);
            Canvas::new(size, |x, y| {
                shift(
                    background_color(b as usize, bg.hue, x as f64 + 0.5, y as f64 + 0.5, phase),
                    bg.value,
                )
            })
        }
    }
}

fn example(spec: &CueSpec, image: Image, shift: ShiftTag) -> Example {
    Example {
        image,
        shape_label: spec.shape_class,
        texture_label: spec.texture_class,
        background_label: spec.background_class,
        domain: Domain::Source,
        shift,
    }
}

/// Standard rendering: backdrop, textured silhouette, dark contour.
pub fn render(spec: &CueSpec, params: &RenderParams) -> Example {
    let image = render_clean(spec, params.size);
    example(spec, image, ShiftTag::clean())
}

pub(crate) fn render_clean(spec: &CueSpec, size: usize) -> Image {
    let (fg, bg) = tints(spec);
    let outline = placed_outline(spec, size);
    let cov = coverage(&outline, size, SUBSAMPLES);
    let mut canvas = backdrop(spec, size, bg);
    let mut pr = rng(spec.seed, 2);
    let phase = (pr.gen_range(0.0..12.0), pr.gen_range(0.0..12.0));
    let tex = spec.texture_class as usize;
    let tex_seed = mix(spec.seed, 6);
    canvas.composite(&cov, |x, y| {
        shift(
            texture_color(tex, fg.hue, x as f64 + 0.5, y as f64 + 0.5, phase, tex_seed),
            fg.value,
        )
    });
    let contour = stroke_alpha(&outline, size, CONTOUR_WIDTH);
    canvas.composite(&contour, |_, _| [INK; 3]);
    canvas.into_image()
}

fn jittered(outline: &Outline, amount: f64, seed: u64) -> Outline {
    let mut r = rng(seed, 5);
    outline.map(|(x, y)| {
        (
            x + r.gen_range(-amount..=amount),
            y + r.gen_range(-amount..=amount),
        )
    })
}

/// Renders the spec in one of the style-shift domains.
pub fn render_style(spec: &CueSpec, size: usize, style: StyleDomain) -> Image {
    let pose = pose(spec, size);
    match style {
        StyleDomain::PaintingLike => {
            let outline = pose.apply(&class_outline(spec.shape_class as usize));
            let cov = coverage(&outline, size, SUBSAMPLES);
            let soft = box_blur(&cov, size);
            let (fg, bg) = tints(spec);
            let bg_tones = spec
                .background_class
                .map(|b| background_tones(b as usize, bg.hue))
                .unwrap_or(([0.0; 3], [0.0; 3]));
            let bseed = mix(spec.background_seed, 7);
            let mut canvas = Canvas::new(size, |x, y| {
                smooth_color(bg_tones, x as f64, y as f64, bseed)
            });
            let tones = texture_tones(spec.texture_class as usize, fg.hue);
            let fseed = mix(spec.seed, 7);
            canvas.composite(&soft, |x, y| smooth_color(tones, x as f64, y as f64, fseed));
            canvas.into_image()
        }
        StyleDomain::SketchLike => {
            let outline = jittered(
                &pose.apply(&class_outline(spec.shape_class as usize)),
                0.5,
                spec.seed,
            );
            let width = 1.1 + rng(spec.seed, 8).gen_range(0.0..0.4);
            let alpha = stroke_alpha(&outline, size, width);
            let mut canvas = Canvas::new(size, |_, _| [PAPER; 3]);
            canvas.composite(&alpha, |_, _| [INK; 3]);
            canvas.into_image()
        }
        StyleDomain::QuickdrawLike => {
            let simple = simplify(
                &class_outline(spec.shape_class as usize),
                QUICKDRAW_TOLERANCE,
            );
            let outline = jittered(&pose.apply(&simple), 0.9, spec.seed);
            let alpha = stroke_alpha(&outline, size, 1.5);
            let mut canvas = Canvas::new(size, |_, _| [PAPER; 3]);
            canvas.composite(&alpha, |_, _| [INK; 3]);
            canvas.into_image()
        }
    }
}

/// Outline actually drawn for a style (pre-pose), for vertex accounting.
pub fn style_outline(spec: &CueSpec, style: Option<StyleDomain>) -> Outline {
    let base = class_outline(spec.shape_class as usize);
    match style {
        Some(StyleDomain::QuickdrawLike) => simplify(&base, QUICKDRAW_TOLERANCE),
        _ => base,
    }
}

fn box_blur(v: &[f64], size: usize) -> Vec<f64> {
    let mut out = vec![0.0; v.len()];
    for y in 0..size {
        for x in 0..size {
            let mut s = 0.0;
            let mut n = 0.0;
            for yy in y.saturating_sub(1)..(y + 2).min(size) {
                for xx in x.saturating_sub(1)..(x + 2).min(size) {
                    s += v[yy * size + xx];
                    n += 1.0;
                }
            }
            out[y * size + x] = s / n;
        }
    }
    out
}
