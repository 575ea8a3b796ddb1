//! Points and axis-aligned boxes in screen points (origin top-left, y down).

use serde::{Deserialize, Serialize};

use crate::num::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point2<F> {
    pub x: F,
    pub y: F,
}

impl<F: Scalar> Point2<F> {
    pub fn new(x: F, y: F) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Self) -> F {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Screen axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
}

impl Axis {
    pub const BOTH: [Axis; 2] = [Axis::X, Axis::Y];
}

/// Bounding box `[x, y, w, h]`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct BBox<F> {
    pub x: F,
    pub y: F,
    pub w: F,
    pub h: F,
}

impl<F: Scalar> BBox<F> {
    pub fn new(x: F, y: F, w: F, h: F) -> Self {
        Self { x, y, w, h }
    }

    #[inline]
    pub fn right(&self) -> F {
        self.x + self.w
    }

    #[inline]
    pub fn bottom(&self) -> F {
        self.y + self.h
    }

    pub fn center(&self) -> Point2<F> {
        let half = F::lit(0.5);
        Point2::new(self.x + self.w * half, self.y + self.h * half)
    }

    pub fn area(&self) -> F {
        self.w * self.h
    }

    /// Start coordinate along `axis`.
    #[inline]
    pub fn start(&self, axis: Axis) -> F {
        match axis {
            Axis::X => self.x,
            Axis::Y => self.y,
        }
    }

    /// Extent along `axis`.
    #[inline]
    pub fn extent(&self, axis: Axis) -> F {
        match axis {
            Axis::X => self.w,
            Axis::Y => self.h,
        }
    }

    #[inline]
    pub fn end(&self, axis: Axis) -> F {
        self.start(axis) + self.extent(axis)
    }

    #[inline]
    pub fn set_start(&mut self, axis: Axis, v: F) {
        match axis {
            Axis::X => self.x = v,
            Axis::Y => self.y = v,
        }
    }

    /// Intersection rectangle; `None` when the boxes are disjoint or only touch.
    pub fn intersection(&self, other: &Self) -> Option<Self> {
        let x0 = self.x.max(other.x);
        let y0 = self.y.max(other.y);
        let x1 = self.right().min(other.right());
        let y1 = self.bottom().min(other.bottom());
        if x1 > x0 && y1 > y0 {
            Some(Self::new(x0, y0, x1 - x0, y1 - y0))
        } else {
            None
        }
    }

    pub fn contains_point(&self, p: Point2<F>) -> bool {
        p.x >= self.x && p.x <= self.right() && p.y >= self.y && p.y <= self.bottom()
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.w.is_finite() && self.h.is_finite()
    }

    /// Largest absolute per-coordinate difference.
    pub fn max_abs_diff(&self, other: &Self) -> F {
        (self.x - other.x)
            .abs()
            .max((self.y - other.y).abs())
            .max((self.w - other.w).abs())
            .max((self.h - other.h).abs())
    }
}

/// Intersection area of two boxes; touching edges count as disjoint.
pub fn overlap_area<F: Scalar>(a: &BBox<F>, b: &BBox<F>) -> F {
    a.intersection(b).map_or(F::zero(), |r| r.area())
}
