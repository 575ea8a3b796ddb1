//! Patch scaling.

use image::imageops::{self, FilterType};

use crate::raster::{InpaintMask, PixelRect, Raster};

use super::inpaint::inpaint;

/// Bilinear resize to exactly `w × h`.
pub fn scale_to(patch: &Raster, w: u32, h: u32) -> Raster {
    if (patch.width, patch.height) == (w, h) {
        return patch.clone();
    }
    let img = imageops::resize(&patch.to_image(), w, h, FilterType::Triangle);
    Raster::from_image(img, patch.scale)
}

/// Scales `patch` uniformly to the largest size fitting `target_w ×
/// target_h`, centers it, and inpaints the leftover bands.
pub fn content_aware_resize(patch: &Raster, target_w: u32, target_h: u32) -> Raster {
    assert!(patch.width > 0 && patch.height > 0 && target_w > 0 && target_h > 0, "dimensions must be positive");
    let s = (target_w as f64 / patch.width as f64).min(target_h as f64 / patch.height as f64);
    let sw = ((patch.width as f64 * s).round() as u32).clamp(1, target_w);
    let sh = ((patch.height as f64 * s).round() as u32).clamp(1, target_h);
    let scaled = scale_to(patch, sw, sh);
    if (sw, sh) == (target_w, target_h) {
        return scaled;
    }
    let (ox, oy) = ((target_w - sw) / 2, (target_h - sh) / 2);
    let mut canvas = Raster::filled(target_w, target_h, patch.scale, [0, 0, 0, 0]);
    canvas.blit(&scaled, ox, oy);
    let mut mask = InpaintMask::for_raster(&canvas);
    mask.set_rect(canvas.bounds(), true);
    mask.set_rect(PixelRect::new(ox, oy, ox + sw, oy + sh), false);
    inpaint(&canvas, &mask).expect("scaled patch leaves known pixels")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gradient_patch(w: u32, h: u32) -> Raster {
        let mut r = Raster::filled(w, h, 1.0, [0, 0, 0, 255]);
        for y in 0..h {
            for x in 0..w {
                r.set_pixel(x, y, [(x * 255 / w) as u8, (y * 255 / h) as u8, 90, 255]);
            }
        }
        r
    }

    #[test]
    fn equal_aspect_is_pure_scaling() {
        let p = gradient_patch(100, 50);
        let out = content_aware_resize(&p, 200, 100);
        assert_eq!(out, scale_to(&p, 200, 100));
    }

    #[test]
    fn wider_target_gets_side_bands() {
        let p = gradient_patch(100, 50);
        let out = content_aware_resize(&p, 200, 60);
        assert_eq!((out.width, out.height), (200, 60));
        let inner = scale_to(&p, 120, 60);
        assert_eq!(out.crop(PixelRect::new(40, 0, 160, 60)), inner);
        // band pixels stay within the range of the adjacent patch column
        let (lo, hi) = (0..60).map(|y| inner.pixel(0, y)[1]).fold((255, 0), |(l, h), v| (l.min(v), h.max(v)));
        for y in 0..60 {
            for x in 0..40 {
                let v = out.pixel(x, y)[1];
                assert!(v >= lo && v <= hi);
            }
            let (a, b) = (out.pixel(39, y)[1] as i32, inner.pixel(0, y)[1] as i32);
            assert!((a - b).abs() <= 8, "{y}: {a} vs {b}");
        }
    }

    #[test]
    fn single_pixel_fills_target() {
        let p = Raster::filled(1, 1, 1.0, [9, 99, 199, 255]);
        let out = content_aware_resize(&p, 37, 11);
        assert_eq!(out, Raster::filled(37, 11, 1.0, [9, 99, 199, 255]));
    }
}
