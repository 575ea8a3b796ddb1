//! Diffusion fill of masked pixels.

use crate::raster::{InpaintMask, Raster};

use super::RenderError;

pub const MAX_SWEEPS: usize = 500;
/// Sweeps stop once no pixel moves by this many intensity levels.
pub const CHANGE_TOL: f64 = 0.5;

/// Fills masked pixels by isotropic diffusion from their unmasked
/// neighbours. Unmasked pixels are copied through untouched.
pub fn inpaint(image: &Raster, mask: &InpaintMask) -> Result<Raster, RenderError> {
    mask.check_shape(image)?;
    let holes = mask.count();
    if holes == 0 {
        return Ok(image.clone());
    }
    if holes == mask.bits.len() {
        return Err(RenderError::FullMask);
    }
    let (w, h) = (image.width as usize, image.height as usize);
    let mut buf: Vec<[f64; 4]> = (0..w * h)
        .map(|k| {
            let p = &image.data[k * 4..k * 4 + 4];
            [p[0] as f64, p[1] as f64, p[2] as f64, p[3] as f64]
        })
        .collect();
    initial_guess(&mut buf, &mask.bits, w, h);

    let holes: Vec<usize> = (0..w * h).filter(|&k| mask.bits[k]).collect();
    let mut next = buf.clone();
    for _ in 0..MAX_SWEEPS {
        let mut max_change: f64 = 0.0;
        for &k in &holes {
            let (x, y) = (k % w, k / w);
            let mut acc = [0.0; 4];
            let mut n = 0.0;
            let mut add = |j: usize| {
                for c in 0..4 {
                    acc[c] += buf[j][c];
                }
                n += 1.0;
            };
            if x > 0 {
                add(k - 1);
            }
            if x + 1 < w {
                add(k + 1);
            }
            if y > 0 {
                add(k - w);
            }
            if y + 1 < h {
                add(k + w);
            }
            for c in 0..4 {
                let v = acc[c] / n;
                max_change = max_change.max((v - buf[k][c]).abs());
                next[k][c] = v;
            }
        }
        for &k in &holes {
            buf[k] = next[k];
        }
        if max_change < CHANGE_TOL {
            break;
        }
    }

    let mut out = image.clone();
    for &k in &holes {
        for c in 0..4 {
            out.data[k * 4 + c] = buf[k][c].round().clamp(0.0, 255.0) as u8;
        }
    }
    Ok(out)
}

/// Starts each hole pixel at the mean of the linear interpolations between
/// the nearest known pixels along its row and its column.
fn initial_guess(buf: &mut [[f64; 4]], mask: &[bool], w: usize, h: usize) {
    let known: Vec<usize> = (0..w * h).filter(|&k| !mask[k]).collect();
    let mut fallback = [0.0; 4];
    for &k in &known {
        for c in 0..4 {
            fallback[c] += buf[k][c];
        }
    }
    for v in &mut fallback {
        *v /= known.len() as f64;
    }

    let mut sum = vec![[0.0; 4]; w * h];
    let mut count = vec![0u32; w * h];
    let mut line = |indices: &mut dyn Iterator<Item = usize>, buf: &[[f64; 4]]| {
        let idx: Vec<usize> = indices.collect();
        let mut prev: Option<usize> = None;
        let mut pos = 0;
        while pos < idx.len() {
            if !mask[idx[pos]] {
                prev = Some(pos);
                pos += 1;
                continue;
            }
            let run_start = pos;
            while pos < idx.len() && mask[idx[pos]] {
                pos += 1;
            }
            let next = (pos < idx.len()).then_some(pos);
            for t in run_start..pos {
                let v = match (prev, next) {
                    (Some(a), Some(b)) => {
                        let f = (t - a) as f64 / (b - a) as f64;
                        let (va, vb) = (buf[idx[a]], buf[idx[b]]);
                        [0, 1, 2, 3].map(|c| va[c] + (vb[c] - va[c]) * f)
                    }
                    (Some(a), None) => buf[idx[a]],
                    (None, Some(b)) => buf[idx[b]],
                    (None, None) => continue,
                };
                let k = idx[t];
                for c in 0..4 {
                    sum[k][c] += v[c];
                }
                count[k] += 1;
            }
        }
    };
    for y in 0..h {
        line(&mut (y * w..(y + 1) * w), buf);
    }
    for x in 0..w {
        line(&mut (0..h).map(|y| y * w + x), buf);
    }
    for k in 0..w * h {
        if mask[k] {
            buf[k] = if count[k] == 0 { fallback } else { sum[k].map(|v| v / count[k] as f64) };
        }
    }
}
