//! Procedural fill textures and backdrops, one family per class.

use std::f64::consts::PI;

use super::mix;

pub type Rgb = [f64; 3];

pub fn hsv(h: f64, s: f64, v: f64) -> Rgb {
    let h = h.rem_euclid(360.0) / 60.0;
    let c = v * s;
    let x = c * (1.0 - ((h % 2.0) - 1.0).abs());
    let (r, g, b) = match h as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = v - c;
    [r + m, g + m, b + m]
}

fn lerp(a: Rgb, b: Rgb, t: f64) -> Rgb {
    [
        a[0] + (b[0] - a[0]) * t,
        a[1] + (b[1] - a[1]) * t,
        a[2] + (b[2] - a[2]) * t,
    ]
}

fn hue(class: usize) -> f64 {
    // a permutation keeps neighbouring classes far apart on the colour wheel
    const ORDER: [usize; 9] = [0, 5, 1, 6, 2, 7, 3, 8, 4];
    ORDER[class % 9] as f64 * 40.0
}

/// Dark and bright tones of a texture class, rotated by `dh` degrees.
pub fn texture_tones(class: usize, dh: f64) -> (Rgb, Rgb) {
    let h = hue(class) + dh;
    (hsv(h, 0.9, 0.3), hsv(h, 0.75, 0.95))
}

pub fn background_tones(class: usize, dh: f64) -> (Rgb, Rgb) {
    let h = hue(class) + 20.0 + dh;
    (hsv(h, 0.35, 0.42), hsv(h, 0.3, 0.78))
}

/// Hash-based value noise on a `cell`-pixel lattice, in [0, 1].
fn value_noise(x: f64, y: f64, cell: f64, seed: u64) -> f64 {
    let (gx, gy) = (x / cell, y / cell);
    let (ix, iy) = (gx.floor(), gy.floor());
    let (fx, fy) = (gx - ix, gy - iy);
    let corner = |dx: f64, dy: f64| {
        let h = mix(mix(seed, (ix + dx) as i64 as u64), (iy + dy) as i64 as u64);
        (h >> 11) as f64 / (1u64 << 53) as f64
    };
    let sx = fx * fx * (3.0 - 2.0 * fx);
    let sy = fy * fy * (3.0 - 2.0 * fy);
    let top = corner(0.0, 0.0) * (1.0 - sx) + corner(1.0, 0.0) * sx;
    let bot = corner(0.0, 1.0) * (1.0 - sx) + corner(1.0, 1.0) * sx;
    top * (1.0 - sy) + bot * sy
}

/// Pattern intensity in [0, 1] for texture class `class` at pixel centre
/// (x, y), shifted by a per-image phase.
pub fn texture_intensity(class: usize, x: f64, y: f64, phase: (f64, f64), seed: u64) -> f64 {
    let (x, y) = (x + phase.0, y + phase.1);
    let wave = |u: f64, period: f64| 0.5 + 0.5 * (2.0 * PI * u / period).sin();
    match class % 9 {
        0 => wave(y, 4.0),
        1 => wave(x, 4.0),
        2 => wave(x + y, 5.0),
        3 => {
            let c = ((x / 3.0).floor() + (y / 3.0).floor()) as i64;
            if c.rem_euclid(2) == 0 {
                1.0
            } else {
                0.0
            }
        }
        4 => {
            let (dx, dy) = (x.rem_euclid(5.0) - 2.5, y.rem_euclid(5.0) - 2.5);
            (1.8 - (dx * dx + dy * dy).sqrt()).clamp(0.0, 1.0)
        }
        5 => wave((x * x + y * y).sqrt(), 4.0),
        6 => value_noise(x, y, 2.0, seed),
        7 => {
            let on = x.rem_euclid(5.0) < 1.2 || y.rem_euclid(5.0) < 1.2;
            if on {
                1.0
            } else {
                0.0
            }
        }
        _ => wave(y + 2.0 * ((x / 3.0).rem_euclid(2.0) - 1.0).abs() * 3.0, 4.0),
    }
}

pub fn texture_color(class: usize, dh: f64, x: f64, y: f64, phase: (f64, f64), seed: u64) -> Rgb {
    let (dark, bright) = texture_tones(class, dh);
    lerp(dark, bright, texture_intensity(class, x, y, phase, seed))
}

/// Low-frequency backdrop: a tilted wave whose angle, period and base hue
/// depend on the class.
pub fn background_color(class: usize, dh: f64, x: f64, y: f64, phase: f64) -> Rgb {
    let (dark, bright) = background_tones(class, dh);
    let angle = class as f64 * 40.0_f64.to_radians();
    let period = 18.0 + 3.0 * (class % 3) as f64;
    let u = x * angle.cos() + y * angle.sin();
    let t = 0.5 + 0.5 * (2.0 * PI * u / period + phase).sin();
    lerp(dark, bright, t)
}

/// Smooth colour field used by the painting-like style: the class's mean
/// tone modulated by coarse value noise.
pub fn smooth_color(tones: (Rgb, Rgb), x: f64, y: f64, seed: u64) -> Rgb {
    let base = lerp(tones.0, tones.1, 0.5);
    let n = value_noise(x, y, 10.0, seed) - 0.5;
    [
        (base[0] + 0.25 * n).clamp(0.0, 1.0),
        (base[1] + 0.25 * n).clamp(0.0, 1.0),
        (base[2] + 0.25 * n).clamp(0.0, 1.0),
    ]
}
