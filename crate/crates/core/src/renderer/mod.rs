//! Re-renders a screenshot after refinement: moved patches are composited
//! at their new boxes and the vacated background is inpainted. Source
//! regions of moved elements are filled in full, so the fill is seeded from
//! background only; whatever lands on top is painted afterwards.

mod font;
mod inpaint;
mod resize;
mod text;

use std::collections::HashMap;

use thiserror::Error;

use crate::layout::UiElement;
use crate::num::Scalar;
use crate::optimizer::RegionMapping;
use crate::raster::{InpaintMask, PixelRect, Raster, RasterError};

pub use inpaint::{inpaint, CHANGE_TOL, MAX_SWEEPS};
pub use resize::{content_aware_resize, scale_to};
pub use text::{extract_text_colors, render_text_patch, Rgb, DEFAULT_K, TEXT_HEIGHT_RATIO};

/// Aspect ratios closer than this are scaled directly.
pub const ASPECT_TOL: f64 = 0.01;

#[derive(Debug, Error)]
pub enum RenderError {
    #[error("box of '{0}' lies outside the screenshot")]
    OutOfBounds(String),
    #[error("mask covers the whole image")]
    FullMask,
    #[error("text is empty")]
    EmptyText,
    #[error("'{text}' does not fit in {width}x{height} px")]
    TextTooLong { text: String, width: u32, height: u32 },
    #[error(transparent)]
    Raster(#[from] RasterError),
}

/// Composites every mapped patch from `original` at its new box.
pub fn render<F: Scalar>(original: &Raster, mapping: &RegionMapping<F>) -> Result<Raster, RenderError> {
    render_impl(original, mapping, &HashMap::new())
}

/// Like [`render`], but resized elements that carry text are redrawn with
/// the bitmap font in colors taken from their original patch.
pub fn render_with_text<F: Scalar>(
    original: &Raster,
    mapping: &RegionMapping<F>,
    elements: &[UiElement<F>],
) -> Result<Raster, RenderError> {
    let texts = elements.iter().filter_map(|e| e.text.as_deref().map(|t| (e.id.as_str(), t))).collect();
    render_impl(original, mapping, &texts)
}

fn render_impl<F: Scalar>(
    original: &Raster,
    mapping: &RegionMapping<F>,
    texts: &HashMap<&str, &str>,
) -> Result<Raster, RenderError> {
    let slack = 0.5;
    for p in &mapping.pairs {
        let s = original.scale;
        let b = &p.from;
        if b.x.as_f64() * s < -slack
            || b.y.as_f64() * s < -slack
            || b.right().as_f64() * s > original.width as f64 + slack
            || b.bottom().as_f64() * s > original.height as f64 + slack
        {
            return Err(RenderError::OutOfBounds(p.id.clone()));
        }
    }
    let rects: Vec<(PixelRect, PixelRect)> =
        mapping.pairs.iter().map(|p| (original.rect_of(&p.from), original.rect_of(&p.to))).collect();

    let mut mask = InpaintMask::for_raster(original);
    for (from, to) in &rects {
        if from != to {
            mask.set_rect(*from, true);
        }
    }
    let mut out = inpaint(original, &mask)?;

    for (p, (from, to)) in mapping.pairs.iter().zip(&rects) {
        if from.is_empty() || to.is_empty() {
            continue;
        }
        let patch = original.crop(*from);
        let resized = (from.width(), from.height()) != (to.width(), to.height());
        let text_patch = match texts.get(p.id.as_str()) {
            Some(t) if resized => {
                let (bg, fg) = extract_text_colors(&patch, DEFAULT_K);
                render_text_patch(t, to.width(), to.height(), bg, fg, original.scale).ok()
            }
            _ => None,
        };
        let placed = match text_patch {
            Some(tp) => tp,
            None => fit_patch(&patch, to.width(), to.height()),
        };
        out.blit(&placed, to.x0, to.y0);
    }
    Ok(out)
}

fn fit_patch(patch: &Raster, w: u32, h: u32) -> Raster {
    let from_ar = patch.width as f64 / patch.height as f64;
    let to_ar = w as f64 / h as f64;
    if (from_ar / to_ar - 1.0).abs() > ASPECT_TOL {
        content_aware_resize(patch, w, h)
    } else {
        scale_to(patch, w, h)
    }
}
