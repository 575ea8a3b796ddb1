//! Text patches: dominant-color extraction and bitmap-font rendering.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::raster::{PixelRect, Raster};

use super::font::{glyph, is_set, text_width, ADVANCE, GLYPH_H, GLYPH_W};
use super::RenderError;

pub const DEFAULT_K: usize = 4;
pub const KMEANS_SEED: u64 = 0x5eed;
pub const KMEANS_MAX_ITERS: usize = 50;
/// Fraction of the target height the text may occupy.
pub const TEXT_HEIGHT_RATIO: f64 = 0.8;

pub type Rgb = [u8; 3];

/// Background and foreground colors of a text patch: the centroid of the
/// largest k-means cluster, and the centroid furthest from it.
pub fn extract_text_colors(patch: &Raster, k: usize) -> (Rgb, Rgb) {
    let pixels: Vec<[f64; 3]> =
        patch.data.chunks_exact(4).map(|p| [p[0] as f64, p[1] as f64, p[2] as f64]).collect();
    assert!(!pixels.is_empty(), "patch has no pixels");
    let (centroids, counts) = kmeans(&pixels, k.max(1));
    let bg = (0..centroids.len()).fold(0, |best, c| if counts[c] > counts[best] { c } else { best });
    let fg = (0..centroids.len()).fold(bg, |best, c| {
        if counts[c] > 0 && dist2(&centroids[c], &centroids[bg]) > dist2(&centroids[best], &centroids[bg]) {
            c
        } else {
            best
        }
    });
    let to_rgb = |c: &[f64; 3]| c.map(|v| v.round().clamp(0.0, 255.0) as u8);
    (to_rgb(&centroids[bg]), to_rgb(&centroids[fg]))
}

fn dist2(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    (0..3).map(|c| (a[c] - b[c]) * (a[c] - b[c])).sum()
}

/// k-means++ seeding followed by Lloyd iterations. Seeding stops early
/// when every pixel already coincides with a centroid.
fn kmeans(pixels: &[[f64; 3]], k: usize) -> (Vec<[f64; 3]>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(KMEANS_SEED);
    let mut centroids = vec![pixels[rng.random_range(0..pixels.len())]];
    let mut d2: Vec<f64> = pixels.iter().map(|p| dist2(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        if total == 0.0 {
            break;
        }
        let mut target = rng.random::<f64>() * total;
        let mut pick = pixels.len() - 1;
        for (i, d) in d2.iter().enumerate() {
            if target < *d {
                pick = i;
                break;
            }
            target -= d;
        }
        let c = pixels[pick];
        centroids.push(c);
        for (p, d) in pixels.iter().zip(d2.iter_mut()) {
            *d = d.min(dist2(p, &c));
        }
    }

    let mut assign = vec![usize::MAX; pixels.len()];
    let mut counts = vec![0; centroids.len()];
    for _ in 0..KMEANS_MAX_ITERS {
        let mut changed = false;
        for (i, p) in pixels.iter().enumerate() {
            let best = (0..centroids.len())
                .fold(0, |b, c| if dist2(p, &centroids[c]) < dist2(p, &centroids[b]) { c } else { b });
            if assign[i] != best {
                assign[i] = best;
                changed = true;
            }
        }
        let mut sums = vec![[0.0; 3]; centroids.len()];
        counts = vec![0; centroids.len()];
        for (p, &a) in pixels.iter().zip(&assign) {
            for c in 0..3 {
                sums[a][c] += p[c];
            }
            counts[a] += 1;
        }
        for ((c, s), n) in centroids.iter_mut().zip(&sums).zip(&counts) {
            if *n > 0 {
                *c = s.map(|v| v / *n as f64);
            }
        }
        if !changed {
            break;
        }
    }
    (centroids, counts)
}

/// Text drawn centered at the largest integer scale that fits the canvas.
pub fn render_text_patch(
    text: &str,
    target_w: u32,
    target_h: u32,
    background: Rgb,
    foreground: Rgb,
    scale: f64,
) -> Result<Raster, RenderError> {
    let chars: Vec<char> = text.chars().collect();
    if chars.is_empty() {
        return Err(RenderError::EmptyText);
    }
    let unit_w = text_width(chars.len());
    let by_height = ((target_h as f64 * TEXT_HEIGHT_RATIO) / GLYPH_H as f64).floor() as u32;
    let by_width = target_w / unit_w;
    let s = by_height.min(by_width);
    if s == 0 {
        return Err(RenderError::TextTooLong { text: text.to_string(), width: target_w, height: target_h });
    }
    let [br, bg, bb] = background;
    let [fr, fg, fb] = foreground;
    let mut out = Raster::filled(target_w, target_h, scale, [br, bg, bb, 255]);
    let x0 = (target_w - unit_w * s) / 2;
    let y0 = (target_h - GLYPH_H * s) / 2;
    for (n, c) in chars.iter().enumerate() {
        let rows = glyph(*c);
        let gx = x0 + n as u32 * ADVANCE * s;
        for row in 0..GLYPH_H {
            for col in 0..GLYPH_W {
                if is_set(&rows, col, row) {
                    let px = gx + col * s;
                    let py = y0 + row * s;
                    out.fill_rect(PixelRect::new(px, py, px + s, py + s), [fr, fg, fb, 255]);
                }
            }
        }
    }
    Ok(out)
}
