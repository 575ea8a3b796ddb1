//! RGBA8 pixel buffers and boolean masks, with PNG I/O.

use std::io::Cursor;

use image::{ImageFormat, RgbaImage};
use thiserror::Error;

use crate::geometry::BBox;
use crate::num::Scalar;

#[derive(Debug, Error)]
pub enum RasterError {
    #[error("buffer length {got} does not match {width}x{height}x4")]
    BadLength { width: u32, height: u32, got: usize },
    #[error("png: {0}")]
    Png(#[from] image::ImageError),
    #[error("mask is {got:?}, raster is {want:?}")]
    MaskShape { want: (u32, u32), got: (u32, u32) },
}

pub type Rgba = [u8; 4];

#[derive(Debug, Clone, PartialEq)]
pub struct Raster {
    pub width: u32,
    pub height: u32,
    /// Pixels per point.
    pub scale: f64,
    pub data: Vec<u8>,
}

/// Half-open pixel rectangle `[x0, x1) × [y0, y1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PixelRect {
    pub x0: u32,
    pub y0: u32,
    pub x1: u32,
    pub y1: u32,
}

impl PixelRect {
    pub fn new(x0: u32, y0: u32, x1: u32, y1: u32) -> Self {
        Self { x0, y0, x1, y1 }
    }

    pub fn width(&self) -> u32 {
        self.x1.saturating_sub(self.x0)
    }

    pub fn height(&self) -> u32 {
        self.y1.saturating_sub(self.y0)
    }

    pub fn is_empty(&self) -> bool {
        self.width() == 0 || self.height() == 0
    }

    pub fn contains(&self, x: u32, y: u32) -> bool {
        x >= self.x0 && x < self.x1 && y >= self.y0 && y < self.y1
    }
}

impl Raster {
    pub fn new(width: u32, height: u32, scale: f64, data: Vec<u8>) -> Result<Self, RasterError> {
        if data.len() != width as usize * height as usize * 4 {
            return Err(RasterError::BadLength { width, height, got: data.len() });
        }
        Ok(Self { width, height, scale, data })
    }

    pub fn filled(width: u32, height: u32, scale: f64, color: Rgba) -> Self {
        let data = color.iter().copied().cycle().take(width as usize * height as usize * 4).collect();
        Self { width, height, scale, data }
    }

    #[inline]
    fn offset(&self, x: u32, y: u32) -> usize {
        (y as usize * self.width as usize + x as usize) * 4
    }

    #[inline]
    pub fn pixel(&self, x: u32, y: u32) -> Rgba {
        let o = self.offset(x, y);
        [self.data[o], self.data[o + 1], self.data[o + 2], self.data[o + 3]]
    }

    #[inline]
    pub fn set_pixel(&mut self, x: u32, y: u32, px: Rgba) {
        let o = self.offset(x, y);
        self.data[o..o + 4].copy_from_slice(&px);
    }

    pub fn fill_rect(&mut self, r: PixelRect, px: Rgba) {
        let r = self.clip(r);
        for y in r.y0..r.y1 {
            for x in r.x0..r.x1 {
                self.set_pixel(x, y, px);
            }
        }
    }

    pub fn bounds(&self) -> PixelRect {
        PixelRect::new(0, 0, self.width, self.height)
    }

    pub fn clip(&self, r: PixelRect) -> PixelRect {
        PixelRect::new(
            r.x0.min(self.width),
            r.y0.min(self.height),
            r.x1.min(self.width).max(r.x0.min(self.width)),
            r.y1.min(self.height).max(r.y0.min(self.height)),
        )
    }

    /// Pixel rectangle covered by a box in points (edges rounded to the
    /// nearest pixel boundary, clipped to the raster).
    pub fn rect_of<F: Scalar>(&self, b: &BBox<F>) -> PixelRect {
        let px = |v: F| {
            let p = (v.as_f64() * self.scale).round();
            if p <= 0.0 {
                0
            } else {
                p as u32
            }
        };
        self.clip(PixelRect::new(px(b.x), px(b.y), px(b.right()), px(b.bottom())))
    }

    pub fn crop(&self, r: PixelRect) -> Raster {
        let r = self.clip(r);
        let mut data = Vec::with_capacity(r.width() as usize * r.height() as usize * 4);
        for y in r.y0..r.y1 {
            let start = self.offset(r.x0, y);
            data.extend_from_slice(&self.data[start..start + r.width() as usize * 4]);
        }
        Raster { width: r.width(), height: r.height(), scale: self.scale, data }
    }

    /// Copies `patch` with its top-left at `(x, y)`, dropping what falls outside.
    pub fn blit(&mut self, patch: &Raster, x: u32, y: u32) {
        for py in 0..patch.height {
            let ty = y + py;
            if ty >= self.height {
                break;
            }
            for px in 0..patch.width {
                let tx = x + px;
                if tx >= self.width {
                    break;
                }
                self.set_pixel(tx, ty, patch.pixel(px, py));
            }
        }
    }

    pub fn decode_png(bytes: &[u8], scale: f64) -> Result<Self, RasterError> {
        let img = image::load_from_memory_with_format(bytes, ImageFormat::Png)?.to_rgba8();
        let (width, height) = img.dimensions();
        Ok(Self { width, height, scale, data: img.into_raw() })
    }

    pub fn encode_png(&self) -> Result<Vec<u8>, RasterError> {
        let img = self.to_image();
        let mut out = Cursor::new(Vec::new());
        img.write_to(&mut out, ImageFormat::Png)?;
        Ok(out.into_inner())
    }

    pub fn to_image(&self) -> RgbaImage {
        RgbaImage::from_raw(self.width, self.height, self.data.clone()).expect("length checked at construction")
    }

    pub fn from_image(img: RgbaImage, scale: f64) -> Self {
        let (width, height) = img.dimensions();
        Self { width, height, scale, data: img.into_raw() }
    }

    /// Two rasters next to each other with a 1-pixel gray separator.
    pub fn side_by_side(&self, other: &Raster) -> Raster {
        let gap = 1;
        let width = self.width + gap + other.width;
        let height = self.height.max(other.height);
        let mut out = Raster::filled(width, height, self.scale, [128, 128, 128, 255]);
        out.blit(self, 0, 0);
        out.blit(other, self.width + gap, 0);
        out
    }
}

/// Per-pixel boolean grid; `true` marks pixels to be regenerated.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InpaintMask {
    pub width: u32,
    pub height: u32,
    pub bits: Vec<bool>,
}

impl InpaintMask {
    pub fn empty(width: u32, height: u32) -> Self {
        Self { width, height, bits: vec![false; width as usize * height as usize] }
    }

    pub fn for_raster(r: &Raster) -> Self {
        Self::empty(r.width, r.height)
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> bool {
        self.bits[y as usize * self.width as usize + x as usize]
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, v: bool) {
        let i = y as usize * self.width as usize + x as usize;
        self.bits[i] = v;
    }

    pub fn set_rect(&mut self, r: PixelRect, v: bool) {
        for y in r.y0..r.y1.min(self.height) {
            for x in r.x0..r.x1.min(self.width) {
                self.set(x, y, v);
            }
        }
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    /// Nonzero luma marks a masked pixel.
    pub fn decode_png(bytes: &[u8]) -> Result<Self, RasterError> {
        let img = image::load_from_memory_with_format(bytes, ImageFormat::Png)?.to_luma8();
        let (width, height) = img.dimensions();
        Ok(Self { width, height, bits: img.into_raw().into_iter().map(|v| v > 0).collect() })
    }

    pub fn check_shape(&self, r: &Raster) -> Result<(), RasterError> {
        if (self.width, self.height) != (r.width, r.height) {
            return Err(RasterError::MaskShape { want: (r.width, r.height), got: (self.width, self.height) });
        }
        Ok(())
    }
}
