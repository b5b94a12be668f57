//! Synthetic digit corpus: template glyphs plus noise and jitter.

use rand::Rng as _;

use crate::data::Dataset;
use crate::rng::{rng_from_seed, Rng};
use crate::tensor::Tensor;

/// 5x7 bitmaps for digits 0-9; `#` marks lit pixels.
const GLYPHS: [[&str; 7]; 10] = [
    ["01110", "10001", "10011", "10101", "11001", "10001", "01110"],
    ["00100", "01100", "00100", "00100", "00100", "00100", "01110"],
    ["01110", "10001", "00001", "00010", "00100", "01000", "11111"],
    ["11111", "00010", "00100", "00010", "00001", "10001", "01110"],
    ["00010", "00110", "01010", "10010", "11111", "00010", "00010"],
    ["11111", "10000", "11110", "00001", "00001", "10001", "01110"],
    ["00110", "01000", "10000", "11110", "10001", "10001", "01110"],
    ["11111", "00001", "00010", "00100", "01000", "01000", "01000"],
    ["01110", "10001", "10001", "01110", "10001", "10001", "01110"],
    ["01110", "10001", "10001", "01111", "00001", "00010", "01100"],
];

const GLYPH_W: usize = 5;
const GLYPH_H: usize = 7;
const NOISE_AMPLITUDE: f64 = 0.15;

/// Draws `digit` into a `canvas` of width `side`, scaled to fill the box at
/// `(x0, y0)` with size `(bw, bh)` by nearest-neighbour lookup. Lit pixels
/// are set to `intensity`; others are left untouched.
pub(crate) fn draw_glyph(
    canvas: &mut [f64],
    side: usize,
    digit: usize,
    x0: usize,
    y0: usize,
    bw: usize,
    bh: usize,
    intensity: f64,
) {
    let glyph = &GLYPHS[digit % 10];
    for by in 0..bh {
        let gy = by * GLYPH_H / bh;
        let row = glyph[gy].as_bytes();
        for bx in 0..bw {
            let gx = bx * GLYPH_W / bw;
            if row[gx] == b'1' {
                let (x, y) = (x0 + bx, y0 + by);
                if x < side && y < side {
                    canvas[y * side + x] = intensity;
                }
            }
        }
    }
}

/// Renders a deterministic synthetic digit corpus: `n_per_class` samples of
/// each of `class_count` template glyphs at `side x side`, each perturbed by
/// a ±1-pixel translation and per-pixel uniform noise of amplitude 0.15,
/// clamped to `[0,1]`.
pub fn synth_digits(n_per_class: usize, side: usize, class_count: usize, rng_seed: u64) -> Dataset {
    assert!(side >= 8, "side must be at least 8");
    assert!((1..=10).contains(&class_count), "class_count must be in 1..=10");
    assert!(n_per_class >= 1, "n_per_class must be at least 1");

    let d = side * side;
    let n = n_per_class * class_count;
    let mut pixels = Vec::with_capacity(n * d);
    let mut labels = Vec::with_capacity(n);
    let mut rng: Rng = rng_from_seed(rng_seed);

    // Glyph box: the image minus a one-pixel margin, so the jitter below
    // always stays in bounds.
    let box_size = side - 2;

    for class in 0..class_count {
        for _ in 0..n_per_class {
            let dx = rng.random_range(-1i64..=1);
            let dy = rng.random_range(-1i64..=1);
            let mut img = vec![0.0; d];
            draw_glyph(
                &mut img,
                side,
                class,
                (1 + dx) as usize,
                (1 + dy) as usize,
                box_size,
                box_size,
                1.0,
            );
            for p in img.iter_mut() {
                *p = (*p + rng.random_range(-NOISE_AMPLITUDE..=NOISE_AMPLITUDE)).clamp(0.0, 1.0);
            }
            pixels.extend_from_slice(&img);
            labels.push(class);
        }
    }

    let images = Tensor::new(vec![n, d], pixels).expect("consistent dims");
    Dataset::new(images, labels, class_count, side).expect("synthesizer respects invariants")
}
