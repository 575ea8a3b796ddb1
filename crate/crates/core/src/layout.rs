//! UI layouts and the detection post-processing heuristics: overlap and
//! containment pruning, and pixel-level refinement of box edges.

use std::cmp::Ordering;
use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::calibration::DeviceMetrics;
use crate::geometry::{overlap_area, BBox};
use crate::num::Scalar;
use crate::raster::{PixelRect, Raster};

/// Intersection over the smaller area at or above which a pair counts as
/// containment rather than partial overlap.
pub const CONTAINMENT_RATIO: f64 = 0.9;
pub const EDGE_REFINE_MAX_ITERS: usize = 20;
/// Smallest box edge refinement will produce, in pixels.
pub const MIN_EDGE_BOX_PX: u32 = 4;
/// How far edge refinement looks along a direction before stepping.
const EDGE_LOOKAHEAD_PX: u32 = 8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LayoutError {
    #[error("box is smaller than {MIN_EDGE_BOX_PX}x{MIN_EDGE_BOX_PX} px")]
    DegenerateBox,
    #[error("duplicate element id '{0}'")]
    DuplicateId(String),
    #[error("element '{0}': width and height must be positive and finite")]
    InvalidBox(String),
    #[error("invalid screen: {0}")]
    InvalidScreen(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ElementKind {
    Text,
    NonText,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Scalar")]
pub struct UiElement<F> {
    pub id: String,
    #[serde(flatten)]
    pub bbox: BBox<F>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub confidence: Option<F>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<ElementKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
}

impl<F: Scalar> UiElement<F> {
    pub fn new(id: impl Into<String>, bbox: BBox<F>) -> Self {
        Self { id: id.into(), bbox, confidence: None, kind: None, text: None }
    }

    pub fn with_confidence(mut self, c: F) -> Self {
        self.confidence = Some(c);
        self
    }

    pub fn with_kind(mut self, k: ElementKind) -> Self {
        self.kind = Some(k);
        self
    }

    pub fn is_text(&self) -> bool {
        self.kind == Some(ElementKind::Text)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Scalar")]
pub struct Layout<F> {
    pub screen: DeviceMetrics<F>,
    pub elements: Vec<UiElement<F>>,
}

impl<F: Scalar> Layout<F> {
    pub fn new(screen: DeviceMetrics<F>, elements: Vec<UiElement<F>>) -> Self {
        Self { screen, elements }
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.elements.iter().position(|e| e.id == id)
    }

    pub fn bboxes(&self) -> Vec<BBox<F>> {
        self.elements.iter().map(|e| e.bbox).collect()
    }

    /// Copy of the layout with new boxes, in element order.
    pub fn with_bboxes(&self, boxes: &[BBox<F>]) -> Self {
        assert_eq!(boxes.len(), self.elements.len());
        let mut out = self.clone();
        for (e, b) in out.elements.iter_mut().zip(boxes) {
            e.bbox = *b;
        }
        out
    }

    pub fn validate(&self) -> Result<(), LayoutError> {
        self.screen.validate().map_err(LayoutError::InvalidScreen)?;
        let mut seen = HashSet::new();
        for e in &self.elements {
            if !seen.insert(e.id.as_str()) {
                return Err(LayoutError::DuplicateId(e.id.clone()));
            }
            let b = &e.bbox;
            if !b.is_finite() || b.w <= F::zero() || b.h <= F::zero() {
                return Err(LayoutError::InvalidBox(e.id.clone()));
            }
        }
        Ok(())
    }

    /// Sum of pairwise intersection areas.
    pub fn total_overlap(&self) -> F {
        let mut acc = F::zero();
        for (i, a) in self.elements.iter().enumerate() {
            for b in &self.elements[i + 1..] {
                acc = acc + overlap_area(&a.bbox, &b.bbox);
            }
        }
        acc
    }

    pub fn is_overlap_free(&self) -> bool {
        self.total_overlap() == F::zero()
    }
}

enum Relation {
    Disjoint,
    Overlap,
    /// The first element of the pair sits inside the second.
    FirstInside,
    SecondInside,
}

fn relation<F: Scalar>(a: &BBox<F>, b: &BBox<F>) -> Relation {
    let inter = overlap_area(a, b);
    if inter <= F::zero() {
        return Relation::Disjoint;
    }
    let (aa, ab) = (a.area(), b.area());
    if inter / aa.min(ab) >= F::lit(CONTAINMENT_RATIO) {
        if aa <= ab {
            Relation::FirstInside
        } else {
            Relation::SecondInside
        }
    } else {
        Relation::Overlap
    }
}

/// Removes overlapping detections. Partial overlaps keep the more confident
/// box; for containment the container goes when the inner box is text,
/// otherwise the inner box goes. Survivors keep their input order.
pub fn prune_detections<F: Scalar>(candidates: &[UiElement<F>]) -> Vec<UiElement<F>> {
    let mut order: Vec<usize> = (0..candidates.len()).collect();
    let conf = |i: usize| candidates[i].confidence.unwrap_or(F::one());
    order.sort_by(|&i, &j| {
        conf(j)
            .partial_cmp(&conf(i))
            .unwrap_or(Ordering::Equal)
            .then_with(|| candidates[i].id.cmp(&candidates[j].id))
    });

    let mut kept: Vec<usize> = Vec::new();
    for &c in &order {
        let cand = &candidates[c];
        let mut drop_cand = false;
        let mut evict = Vec::new();
        for &k in &kept {
            let other = &candidates[k];
            match relation(&cand.bbox, &other.bbox) {
                Relation::Disjoint => {}
                // `other` was processed first, so it is at least as confident
                Relation::Overlap => drop_cand = true,
                Relation::FirstInside => {
                    if cand.is_text() {
                        evict.push(k);
                    } else {
                        drop_cand = true;
                    }
                }
                Relation::SecondInside => {
                    if other.is_text() {
                        drop_cand = true;
                    } else {
                        evict.push(k);
                    }
                }
            }
        }
        if !drop_cand {
            kept.retain(|k| !evict.contains(k));
            kept.push(c);
        }
    }
    kept.sort_unstable();
    kept.into_iter().map(|i| candidates[i].clone()).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Edge {
    Top,
    Left,
    Bottom,
    Right,
}

/// Tie-break order when several edges are equally dissimilar.
const EDGES: [Edge; 4] = [Edge::Top, Edge::Left, Edge::Bottom, Edge::Right];

struct EdgeProbe<'a> {
    image: &'a Raster,
    lut: [f64; 256],
}

impl EdgeProbe<'_> {
    fn strip_mean(&self, r: &PixelRect, edge: Edge) -> [f64; 3] {
        let (xs, ys) = match edge {
            Edge::Top => (r.x0..r.x1, r.y0..r.y0 + 1),
            Edge::Bottom => (r.x0..r.x1, r.y1 - 1..r.y1),
            Edge::Left => (r.x0..r.x0 + 1, r.y0..r.y1),
            Edge::Right => (r.x1 - 1..r.x1, r.y0..r.y1),
        };
        let mut acc = [0.0; 3];
        let mut n = 0.0;
        for y in ys {
            for x in xs.clone() {
                let p = self.image.pixel(x, y);
                for c in 0..3 {
                    acc[c] += self.lut[p[c] as usize];
                }
                n += 1.0;
            }
        }
        acc.map(|v| v / n)
    }

    fn dissimilarities(&self, r: &PixelRect) -> [f64; 4] {
        let means = EDGES.map(|e| self.strip_mean(r, e));
        let mut out = [0.0; 4];
        for i in 0..4 {
            let mut others = [0.0; 3];
            for j in (0..4).filter(|&j| j != i) {
                for c in 0..3 {
                    others[c] += means[j][c] / 3.0;
                }
            }
            out[i] = (0..3).map(|c| (means[i][c] - others[c]).powi(2)).sum::<f64>().sqrt();
        }
        out
    }

    /// Box with `edge` moved `k` pixels inward or outward, if still valid.
    fn moved(&self, r: &PixelRect, edge: Edge, inward: bool, k: u32) -> Option<PixelRect> {
        let mut m = *r;
        let shift = |v: u32, toward_larger: bool, limit: u32| -> Option<u32> {
            if toward_larger {
                let n = v.checked_add(k)?;
                (n <= limit).then_some(n)
            } else {
                v.checked_sub(k)
            }
        };
        match edge {
            Edge::Top => m.y0 = shift(r.y0, inward, self.image.height)?,
            Edge::Left => m.x0 = shift(r.x0, inward, self.image.width)?,
            Edge::Bottom => m.y1 = shift(r.y1, !inward, self.image.height)?,
            Edge::Right => m.x1 = shift(r.x1, !inward, self.image.width)?,
        }
        (m.width() >= MIN_EDGE_BOX_PX && m.height() >= MIN_EDGE_BOX_PX).then_some(m)
    }
}

fn srgb_to_linear_lut() -> [f64; 256] {
    let mut lut = [0.0; 256];
    for (i, v) in lut.iter_mut().enumerate() {
        let c = i as f64 / 255.0;
        *v = 255.0 * if c <= 0.04045 { c / 12.92 } else { ((c + 0.055) / 1.055).powf(2.4) };
    }
    lut
}

/// Nudges the edges of a detection box until its four edge strips have
/// consistent color. Each iteration picks the edge whose mean (linear RGB)
/// differs most from the mean of the other three and moves it one pixel
/// toward the position, within a short look-ahead, that minimizes that
/// difference.
pub fn refine_bbox_edges<F: Scalar>(image: &Raster, bbox: &BBox<F>) -> Result<BBox<F>, LayoutError> {
    refine_bbox_edges_with(image, bbox, EDGE_REFINE_MAX_ITERS)
}

pub fn refine_bbox_edges_with<F: Scalar>(
    image: &Raster,
    bbox: &BBox<F>,
    max_iters: usize,
) -> Result<BBox<F>, LayoutError> {
    let mut r = image.rect_of(bbox);
    if r.width() < MIN_EDGE_BOX_PX || r.height() < MIN_EDGE_BOX_PX {
        return Err(LayoutError::DegenerateBox);
    }
    let probe = EdgeProbe { image, lut: srgb_to_linear_lut() };
    let start = r;
    for _ in 0..max_iters {
        let d = probe.dissimilarities(&r);
        let mut worst = 0;
        for i in 1..4 {
            if d[i] > d[worst] {
                worst = i;
            }
        }
        let current = d[worst];
        if current <= 1e-9 {
            break;
        }
        let edge = EDGES[worst];
        let best_along = |inward: bool| -> Option<f64> {
            (1..=EDGE_LOOKAHEAD_PX)
                .map_while(|k| probe.moved(&r, edge, inward, k))
                .map(|m| probe.dissimilarities(&m)[worst])
                .min_by(|a, b| a.partial_cmp(b).unwrap_or(Ordering::Equal))
        };
        let inward = best_along(true);
        let outward = best_along(false);
        let go_inward = match (inward, outward) {
            (Some(i), Some(o)) => {
                if i <= o {
                    (i < current - 1e-9).then_some(true)
                } else {
                    (o < current - 1e-9).then_some(false)
                }
            }
            (Some(i), None) => (i < current - 1e-9).then_some(true),
            (None, Some(o)) => (o < current - 1e-9).then_some(false),
            (None, None) => None,
        };
        match go_inward.and_then(|dir| probe.moved(&r, edge, dir, 1)) {
            Some(m) => r = m,
            None => break,
        }
    }
    if r == start {
        return Ok(*bbox);
    }
    let s = F::lit(image.scale);
    let f = |v: u32| F::lit(v as f64) / s;
    Ok(BBox::new(f(r.x0), f(r.y0), f(r.x1) - f(r.x0), f(r.y1) - f(r.y0)))
}
