//! Layout score: mean probability that a Gaussian tap aimed at an element's
//! center lands inside the element. Two estimators share one contract: a
//! seeded Monte Carlo count and the closed-form rectangle integral, which is
//! also differentiated analytically for the optimizer.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::difficulty_map::DifficultyMap;
use crate::geometry::{BBox, Point2};
use crate::layout::{Layout, UiElement};
use crate::num::{normal_mass, normal_pdf, Scalar};

/// Samples per element used by default, matching the original pipeline.
pub const DEFAULT_MC_SAMPLES: usize = 30;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ScoreError {
    #[error("layout has no elements")]
    EmptyLayout,
}

/// How the Gaussian width reacts to an element moving.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SigmaMode {
    /// Sigma is evaluated at the current center and treated as a constant.
    #[default]
    Frozen,
    /// Differentiate through the difficulty map as well.
    ThroughMap,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Scalar")]
pub struct ScoringConfig<F> {
    /// Standard deviation per unit of adjusted error.
    pub sigma_multiplier: F,
    pub sigma_mode: SigmaMode,
}

impl<F: Scalar> Default for ScoringConfig<F> {
    fn default() -> Self {
        Self { sigma_multiplier: F::one(), sigma_mode: SigmaMode::Frozen }
    }
}

/// Axis-aligned tap distribution for one element.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElementGaussian<F> {
    pub center: Point2<F>,
    pub sigma_x: F,
    pub sigma_y: F,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Scalar")]
pub struct ElementScore<F> {
    pub id: String,
    pub p: F,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Scalar")]
pub struct Score<F> {
    pub value: F,
    pub per_element: Vec<ElementScore<F>>,
}

/// Gaussian of an element under the map, with the default 1:1 sigma.
pub fn element_gaussian<F: Scalar>(element: &UiElement<F>, map: &DifficultyMap<F>) -> ElementGaussian<F> {
    gaussian_for(&element.bbox, map, F::one())
}

pub fn gaussian_for<F: Scalar>(bbox: &BBox<F>, map: &DifficultyMap<F>, multiplier: F) -> ElementGaussian<F> {
    let center = bbox.center();
    let (ex, ey) = map.evaluate(center);
    ElementGaussian {
        center,
        sigma_x: (ex * multiplier).max(map.epsilon_min),
        sigma_y: (ey * multiplier).max(map.epsilon_min),
    }
}

/// Stable 64-bit stream id for an element (FNV-1a of its id).
fn stream_id(id: &str) -> u64 {
    id.bytes().fold(0xcbf2_9ce4_8422_2325_u64, |h, b| (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3))
}

/// Monte Carlo estimate: `n_per_element` taps per element from a
/// per-element ChaCha stream keyed by `seed` and the element id.
pub fn score_monte_carlo<F: Scalar>(
    layout: &Layout<F>,
    map: &DifficultyMap<F>,
    n_per_element: usize,
    seed: u64,
) -> Result<Score<F>, ScoreError> {
    score_monte_carlo_with(layout, map, n_per_element, seed, &ScoringConfig::default())
}

pub fn score_monte_carlo_with<F: Scalar>(
    layout: &Layout<F>,
    map: &DifficultyMap<F>,
    n_per_element: usize,
    seed: u64,
    cfg: &ScoringConfig<F>,
) -> Result<Score<F>, ScoreError> {
    if layout.is_empty() {
        return Err(ScoreError::EmptyLayout);
    }
    let mut total_hits = 0usize;
    let mut per_element = Vec::with_capacity(layout.len());
    for e in &layout.elements {
        let g = gaussian_for(&e.bbox, map, cfg.sigma_multiplier);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream_id(&e.id));
        let (cx, cy) = (g.center.x.as_f64(), g.center.y.as_f64());
        let (sx, sy) = (g.sigma_x.as_f64(), g.sigma_y.as_f64());
        let (x0, y0) = (e.bbox.x.as_f64(), e.bbox.y.as_f64());
        let (x1, y1) = (e.bbox.right().as_f64(), e.bbox.bottom().as_f64());
        let mut hits = 0usize;
        for _ in 0..n_per_element {
            let zx: f64 = StandardNormal.sample(&mut rng);
            let zy: f64 = StandardNormal.sample(&mut rng);
            let (px, py) = (cx + sx * zx, cy + sy * zy);
            if px >= x0 && px <= x1 && py >= y0 && py <= y1 {
                hits += 1;
            }
        }
        total_hits += hits;
        let p = if n_per_element == 0 { 0.0 } else { hits as f64 / n_per_element as f64 };
        per_element.push(ElementScore { id: e.id.clone(), p: F::lit(p) });
    }
    let total = (n_per_element * layout.len()) as f64;
    let value = if total == 0.0 { 0.0 } else { total_hits as f64 / total };
    Ok(Score { value: F::lit(value), per_element })
}

/// Exact hit probability of a box under an axis-aligned Gaussian.
pub fn hit_probability<F: Scalar>(bbox: &BBox<F>, g: &ElementGaussian<F>) -> F {
    let mx = normal_mass((bbox.x - g.center.x) / g.sigma_x, (bbox.right() - g.center.x) / g.sigma_x);
    let my = normal_mass((bbox.y - g.center.y) / g.sigma_y, (bbox.bottom() - g.center.y) / g.sigma_y);
    mx * my
}

pub fn score_closed_form<F: Scalar>(layout: &Layout<F>, map: &DifficultyMap<F>) -> Result<Score<F>, ScoreError> {
    score_closed_form_with(layout, map, &ScoringConfig::default())
}

pub fn score_closed_form_with<F: Scalar>(
    layout: &Layout<F>,
    map: &DifficultyMap<F>,
    cfg: &ScoringConfig<F>,
) -> Result<Score<F>, ScoreError> {
    if layout.is_empty() {
        return Err(ScoreError::EmptyLayout);
    }
    let per_element: Vec<ElementScore<F>> = layout
        .elements
        .iter()
        .map(|e| ElementScore {
            id: e.id.clone(),
            p: hit_probability(&e.bbox, &gaussian_for(&e.bbox, map, cfg.sigma_multiplier)),
        })
        .collect();
    let value = per_element.iter().map(|s| s.p).sum::<F>() / F::lit(per_element.len() as f64);
    Ok(Score { value, per_element })
}

/// Mean hit probability over raw boxes (closed form).
pub fn mean_hit_probability<F: Scalar>(boxes: &[BBox<F>], map: &DifficultyMap<F>, multiplier: F) -> F {
    let n = F::lit(boxes.len().max(1) as f64);
    boxes.iter().map(|b| hit_probability(b, &gaussian_for(b, map, multiplier))).sum::<F>() / n
}

/// Gradient of the closed-form score with respect to `[x, y, w, h]` of
/// every element.
pub fn score_gradient<F: Scalar>(layout: &Layout<F>, map: &DifficultyMap<F>) -> Result<Vec<[F; 4]>, ScoreError> {
    score_gradient_with(layout, map, &ScoringConfig::default())
}

pub fn score_gradient_with<F: Scalar>(
    layout: &Layout<F>,
    map: &DifficultyMap<F>,
    cfg: &ScoringConfig<F>,
) -> Result<Vec<[F; 4]>, ScoreError> {
    if layout.is_empty() {
        return Err(ScoreError::EmptyLayout);
    }
    Ok(gradient_on(&layout.bboxes(), map, cfg))
}

/// Per-axis mass and its partials for one interval `[lo, lo + len]` under
/// `N(c, σ²)`.
struct AxisMass<F> {
    mass: F,
    /// ∂/∂lo at fixed center.
    d_lo: F,
    /// ∂/∂len at fixed center.
    d_len: F,
    d_center: F,
    d_sigma: F,
}

fn axis_mass<F: Scalar>(lo: F, len: F, c: F, sigma: F) -> AxisMass<F> {
    let a = (lo - c) / sigma;
    let b = (lo + len - c) / sigma;
    let (pa, pb) = (normal_pdf(a), normal_pdf(b));
    AxisMass {
        mass: normal_mass(a, b),
        d_lo: (pb - pa) / sigma,
        d_len: pb / sigma,
        d_center: -(pb - pa) / sigma,
        d_sigma: -(pb * b - pa * a) / sigma,
    }
}

/// Gradient of [`mean_hit_probability`] over raw boxes.
pub fn gradient_on<F: Scalar>(boxes: &[BBox<F>], map: &DifficultyMap<F>, cfg: &ScoringConfig<F>) -> Vec<[F; 4]> {
    let n = F::lit(boxes.len().max(1) as f64);
    let half = F::lit(0.5);
    let m = cfg.sigma_multiplier;
    boxes
        .iter()
        .map(|b| {
            let c = b.center();
            let s = map.sample(c);
            // σ = max(m·ε, ε_min); its slope is zero on the floor
            let sigma = |e: F, g: [F; 2]| {
                let raw = e * m;
                if raw > map.epsilon_min {
                    (raw, [g[0] * m, g[1] * m])
                } else {
                    (map.epsilon_min, [F::zero(); 2])
                }
            };
            let (sx, mut dsx) = sigma(s.epsilon_x, s.grad_x);
            let (sy, mut dsy) = sigma(s.epsilon_y, s.grad_y);
            if cfg.sigma_mode == SigmaMode::Frozen {
                dsx = [F::zero(); 2];
                dsy = [F::zero(); 2];
            }
            let mx = axis_mass(b.x, b.w, c.x, sx);
            let my = axis_mass(b.y, b.h, c.y, sy);
            // d/dcx and d/dcy of each axis mass, including sigma motion
            let mx_dcx = mx.d_center + mx.d_sigma * dsx[0];
            let mx_dcy = mx.d_sigma * dsx[1];
            let my_dcx = my.d_sigma * dsy[0];
            let my_dcy = my.d_center + my.d_sigma * dsy[1];
            let dp_dcx = mx_dcx * my.mass + mx.mass * my_dcx;
            let dp_dcy = mx_dcy * my.mass + mx.mass * my_dcy;
            let dx = mx.d_lo * my.mass + dp_dcx;
            let dy = mx.mass * my.d_lo + dp_dcy;
            let dw = mx.d_len * my.mass + half * dp_dcx;
            let dh = mx.mass * my.d_len + half * dp_dcy;
            [dx / n, dy / n, dw / n, dh / n]
        })
        .collect()
}
