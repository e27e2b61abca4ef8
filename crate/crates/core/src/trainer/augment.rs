use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::tensor::Shape;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentFlags {
    /// Largest shift in pixels along each axis; 0 disables translation.
    pub translate: usize,
    /// Random multiples of 90°.
    pub rotate: bool,
}

/// Mirror index into `0..n` without repeating the edge (`-1 → 1`, `n → n − 2`).
pub fn reflect(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let m = i.rem_euclid(period);
    (if m < n as isize { m } else { period - m }) as usize
}

/// Counter-clockwise rotation by `quarter_turns · 90°` of a square `(c, s, s)` item.
pub fn rotate90(src: &[f32], shape: Shape, quarter_turns: usize, out: &mut [f32]) {
    let s = shape.h;
    debug_assert_eq!(shape.h, shape.w);
    let plane = s * s;
    for c in 0..shape.c {
        let (sp, op) = (&src[c * plane..(c + 1) * plane], &mut out[c * plane..(c + 1) * plane]);
        for y in 0..s {
            for x in 0..s {
                let (sx, sy) = match quarter_turns % 4 {
                    0 => (x, y),
                    1 => (s - 1 - y, x),
                    2 => (s - 1 - x, s - 1 - y),
                    _ => (y, s - 1 - x),
                };
                op[y * s + x] = sp[sy * s + sx];
            }
        }
    }
}

/// Random translation (reflect padding, then a crop at a random offset) followed by a
/// random rotation. With every flag off `out` is a copy of `src`.
pub fn augment<R: Rng>(src: &[f32], shape: Shape, flags: &AugmentFlags, rng: &mut R, out: &mut [f32]) {
    let (h, w) = (shape.h, shape.w);
    let plane = h * w;
    let mut shifted;
    let moved: &[f32] = if flags.translate > 0 {
        let t = flags.translate as isize;
        let dx = rng.gen_range(-t..=t);
        let dy = rng.gen_range(-t..=t);
        shifted = vec![0.0; src.len()];
        for c in 0..shape.c {
            for y in 0..h {
                let sy = reflect(y as isize + dy, h);
                for x in 0..w {
                    shifted[c * plane + y * w + x] = src[c * plane + sy * w + reflect(x as isize + dx, w)];
                }
            }
        }
        &shifted
    } else {
        src
    };
    let turns = if flags.rotate && h == w { rng.gen_range(0..4) } else { 0 };
    if turns == 0 {
        out.copy_from_slice(moved);
    } else {
        rotate90(moved, shape, turns, out);
    }
}
