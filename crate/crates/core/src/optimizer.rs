//! Constrained gradient refinement of a layout: adaptive-moment steps on the
//! score, a cosine-distance regularizer on pairwise center displacements,
//! multiplier-method constraint terms, and corrective projections after every
//! step.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::calibration::DeviceMetrics;
use crate::constraints::{ConstraintError, ConstraintSet, ResolvedConstraint};
use crate::difficulty_map::DifficultyMap;
use crate::geometry::{Axis, BBox};
use crate::layout::Layout;
use crate::num::Scalar;
use crate::scoring::{gradient_on, mean_hit_probability, ScoringConfig};

/// Steps of stalled objective required before stopping.
pub const CONVERGENCE_WINDOW: usize = 5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RefineError {
    #[error("constraint set does not match the layout: {0}")]
    ConstraintIdMismatch(ConstraintError),
    #[error("objective became non-finite at step {step}")]
    NonFiniteObjective { step: usize, trace: Vec<TraceRecord> },
    #[error("layout has no elements")]
    EmptyLayout,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DissimilarityError {
    #[error("layouts do not contain the same element ids in the same order")]
    IdMismatch,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Scalar")]
pub struct OptimizerConfig<F> {
    pub max_steps: usize,
    /// Adam step size in points.
    pub step_size: F,
    pub beta1: F,
    pub beta2: F,
    pub lambda_reg: F,
    pub multiplier_rate: F,
    pub damping: F,
    pub w_min: F,
    pub h_min: F,
    /// `None` means the screen width.
    pub w_max: Option<F>,
    /// `None` means the screen height.
    pub h_max: Option<F>,
    pub overlap_max_passes: usize,
    pub convergence_tol: F,
    pub scoring: ScoringConfig<F>,
}

impl<F: Scalar> Default for OptimizerConfig<F> {
    fn default() -> Self {
        Self {
            max_steps: 200,
            step_size: F::lit(0.5),
            beta1: F::lit(0.9),
            beta2: F::lit(0.999),
            lambda_reg: F::lit(0.3),
            multiplier_rate: F::lit(0.05),
            damping: F::one(),
            w_min: F::lit(8.0),
            h_min: F::lit(8.0),
            w_max: None,
            h_max: None,
            overlap_max_passes: 50,
            convergence_tol: F::lit(1e-6),
            scoring: ScoringConfig::default(),
        }
    }
}

impl<F: Scalar> OptimizerConfig<F> {
    fn size_bounds(&self, screen: &DeviceMetrics<F>) -> [(F, F); 2] {
        let w_max = self.w_max.unwrap_or(screen.screen_width).min(screen.screen_width);
        let h_max = self.h_max.unwrap_or(screen.screen_height).min(screen.screen_height);
        [(self.w_min.min(w_max), w_max), (self.h_min.min(h_max), h_max)]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Converged,
    MaxSteps,
    UnresolvableOverlap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Scalar")]
pub struct TraceRecord<F = f64> {
    pub step: usize,
    pub score: F,
    pub reg: F,
    pub violation_norm: F,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub unresolvable_overlap: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Scalar")]
pub struct RegionPair<F> {
    pub id: String,
    pub from: BBox<F>,
    pub to: BBox<F>,
}

/// Original to refined box for every element.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Scalar")]
pub struct RegionMapping<F> {
    pub pairs: Vec<RegionPair<F>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stop_reason: Option<StopReason>,
}

impl<F: Scalar> RegionMapping<F> {
    /// Pairs elements of two layouts by position. Ids are taken from `from`.
    pub fn between(from: &Layout<F>, to: &Layout<F>) -> Self {
        let pairs = from
            .elements
            .iter()
            .zip(&to.elements)
            .map(|(a, b)| RegionPair { id: a.id.clone(), from: a.bbox, to: b.bbox })
            .collect();
        Self { pairs, stop_reason: None }
    }

    pub fn identity(layout: &Layout<F>) -> Self {
        Self::between(layout, layout)
    }

    pub fn is_identity(&self) -> bool {
        self.pairs.iter().all(|p| p.from == p.to)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RefinementResult<F> {
    pub refined: Layout<F>,
    pub mapping: RegionMapping<F>,
    pub trace: Vec<TraceRecord<F>>,
    pub stop_reason: StopReason,
}

/// Signed center differences `[cx_j − cx_i, cy_j − cy_i]` for every pair
/// `i < j` in element order.
pub fn displacement_signature<F: Scalar>(layout: &Layout<F>) -> Vec<F> {
    signature_of(&layout.bboxes())
}

fn signature_of<F: Scalar>(boxes: &[BBox<F>]) -> Vec<F> {
    let centers: Vec<_> = boxes.iter().map(|b| b.center()).collect();
    let mut out = Vec::with_capacity(centers.len() * centers.len().saturating_sub(1));
    for i in 0..centers.len() {
        for j in (i + 1)..centers.len() {
            out.push(centers[j].x - centers[i].x);
            out.push(centers[j].y - centers[i].y);
        }
    }
    out
}

/// Cosine distance between displacement signatures; 0 when either is the
/// zero vector.
pub fn dissimilarity<F: Scalar>(layout: &Layout<F>, original: &Layout<F>) -> Result<F, DissimilarityError> {
    if layout.len() != original.len() || layout.elements.iter().zip(&original.elements).any(|(a, b)| a.id != b.id) {
        return Err(DissimilarityError::IdMismatch);
    }
    Ok(CosineReg::new(&original.bboxes()).value(&layout.bboxes()))
}

/// Cosine distance against a fixed reference signature.
struct CosineReg<F> {
    reference: Vec<F>,
    norm: F,
}

impl<F: Scalar> CosineReg<F> {
    fn new(original: &[BBox<F>]) -> Self {
        let reference = signature_of(original);
        let norm = reference.iter().map(|v| *v * *v).sum::<F>().sqrt();
        Self { reference, norm }
    }

    fn value(&self, boxes: &[BBox<F>]) -> F {
        let phi = signature_of(boxes);
        let n = phi.iter().map(|v| *v * *v).sum::<F>().sqrt();
        if n == F::zero() || self.norm == F::zero() {
            return F::zero();
        }
        let dot = phi.iter().zip(&self.reference).map(|(a, b)| *a * *b).sum::<F>();
        (F::one() - dot / (n * self.norm)).max(F::zero()).min(F::lit(2.0))
    }

    /// Gradient with respect to `[x, y, w, h]` of every box.
    fn gradient(&self, boxes: &[BBox<F>]) -> Vec<[F; 4]> {
        let mut out = vec![[F::zero(); 4]; boxes.len()];
        let phi = signature_of(boxes);
        let n = phi.iter().map(|v| *v * *v).sum::<F>().sqrt();
        if n == F::zero() || self.norm == F::zero() {
            return out;
        }
        let dot = phi.iter().zip(&self.reference).map(|(a, b)| *a * *b).sum::<F>();
        let cos = dot / (n * self.norm);
        // dD/dφ = −(φ₀/(|φ||φ₀|) − cos·φ/|φ|²)
        let d_phi: Vec<F> =
            phi.iter().zip(&self.reference).map(|(p, r)| -(*r / (n * self.norm) - cos * *p / (n * n))).collect();
        let half = F::lit(0.5);
        let mut k = 0;
        for i in 0..boxes.len() {
            for j in (i + 1)..boxes.len() {
                let (gx, gy) = (d_phi[k], d_phi[k + 1]);
                k += 2;
                out[j][0] = out[j][0] + gx;
                out[j][2] = out[j][2] + gx * half;
                out[i][0] = out[i][0] - gx;
                out[i][2] = out[i][2] - gx * half;
                out[j][1] = out[j][1] + gy;
                out[j][3] = out[j][3] + gy * half;
                out[i][1] = out[i][1] - gy;
                out[i][3] = out[i][3] - gy * half;
            }
        }
        out
    }
}

fn screen_extent<F: Scalar>(screen: &DeviceMetrics<F>, axis: Axis) -> F {
    match axis {
        Axis::X => screen.screen_width,
        Axis::Y => screen.screen_height,
    }
}

/// Puts `first` directly before `second` along `axis`, splitting the
/// penetration evenly and keeping both on-screen when possible.
fn separate<F: Scalar>(first: &mut BBox<F>, second: &mut BBox<F>, axis: Axis, limit: F) {
    let pen = first.end(axis) - second.start(axis);
    let half = pen * F::lit(0.5);
    let lo = (first.start(axis) - half).max(F::zero()).min((limit - first.extent(axis)).max(F::zero()));
    first.set_start(axis, lo);
    second.set_start(axis, first.end(axis));
    if second.end(axis) > limit {
        second.set_start(axis, (limit - second.extent(axis)).max(F::zero()));
        first.set_start(axis, (second.start(axis) - first.extent(axis)).max(F::zero()));
    }
}

/// Orders a pair along `axis` by start, then center, then index.
fn leading<F: Scalar>(boxes: &[BBox<F>], i: usize, j: usize, axis: Axis) -> (usize, usize) {
    let key = |k: usize| (boxes[k].start(axis), boxes[k].start(axis) + boxes[k].extent(axis) * F::lit(0.5));
    let (ki, kj) = (key(i), key(j));
    if ki.0 < kj.0 || (ki.0 == kj.0 && (ki.1 < kj.1 || (ki.1 == kj.1 && i <= j))) {
        (i, j)
    } else {
        (j, i)
    }
}

fn pair_mut<T>(v: &mut [T], i: usize, j: usize) -> (&mut T, &mut T) {
    assert_ne!(i, j);
    if i < j {
        let (a, b) = v.split_at_mut(j);
        (&mut a[i], &mut b[0])
    } else {
        let (a, b) = v.split_at_mut(i);
        (&mut b[0], &mut a[j])
    }
}

/// One overlap-removal pass. Returns true if anything overlapped.
fn overlap_pass<F: Scalar>(boxes: &mut [BBox<F>], ids: &[&str], screen: &DeviceMetrics<F>) -> bool {
    let mut pairs = Vec::new();
    for i in 0..boxes.len() {
        for j in (i + 1)..boxes.len() {
            if let Some(r) = boxes[i].intersection(&boxes[j]) {
                let (a, b) = if ids[i] <= ids[j] { (ids[i], ids[j]) } else { (ids[j], ids[i]) };
                pairs.push((r.area(), a, b, i, j));
            }
        }
    }
    if pairs.is_empty() {
        return false;
    }
    pairs.sort_by(|p, q| q.0.partial_cmp(&p.0).unwrap_or(std::cmp::Ordering::Equal).then((p.1, p.2).cmp(&(q.1, q.2))));
    for &(_, _, _, i, j) in &pairs {
        let Some(r) = boxes[i].intersection(&boxes[j]) else { continue };
        let axis = if r.w <= r.h { Axis::X } else { Axis::Y };
        let (f, s) = leading(boxes, i, j, axis);
        let (bf, bs) = pair_mut(boxes, f, s);
        separate(bf, bs, axis, screen_extent(screen, axis));
    }
    true
}

/// Shifts intersecting pairs apart along the axis of smaller penetration
/// until the layout is overlap-free or `max_passes` passes have run.
pub fn remove_overlaps<F: Scalar>(layout: &Layout<F>, max_passes: usize) -> (Layout<F>, bool) {
    let mut boxes = layout.bboxes();
    let ids: Vec<&str> = layout.elements.iter().map(|e| e.id.as_str()).collect();
    let resolved = remove_overlaps_in(&mut boxes, &ids, &layout.screen, max_passes);
    (layout.with_bboxes(&boxes), resolved)
}

fn remove_overlaps_in<F: Scalar>(boxes: &mut [BBox<F>], ids: &[&str], screen: &DeviceMetrics<F>, max_passes: usize) -> bool {
    for _ in 0..max_passes {
        if !overlap_pass(boxes, ids, screen) {
            return true;
        }
    }
    !has_overlap(boxes)
}

fn has_overlap<F: Scalar>(boxes: &[BBox<F>]) -> bool {
    (0..boxes.len()).any(|i| ((i + 1)..boxes.len()).any(|j| boxes[i].intersection(&boxes[j]).is_some()))
}

/// Clamps sizes to the configured bounds and boxes onto the screen.
fn clamp_boxes<F: Scalar>(boxes: &mut [BBox<F>], screen: &DeviceMetrics<F>, bounds: [(F, F); 2]) {
    for b in boxes {
        b.w = b.w.max(bounds[0].0).min(bounds[0].1);
        b.h = b.h.max(bounds[1].0).min(bounds[1].1);
        b.x = b.x.max(F::zero()).min(screen.screen_width - b.w);
        b.y = b.y.max(F::zero()).min(screen.screen_height - b.h);
    }
}

/// Restores violated relative orderings, then overlaps, until both hold.
fn corrective<F: Scalar>(
    boxes: &mut [BBox<F>],
    ids: &[&str],
    relative: &[ResolvedConstraint],
    screen: &DeviceMetrics<F>,
    max_passes: usize,
) -> bool {
    for _ in 0..max_passes {
        let mut changed = false;
        for c in relative {
            if c.raw(boxes) > F::zero() {
                let (a, b) = pair_mut(boxes, c.i, c.j);
                separate(a, b, c.axis, screen_extent(screen, c.axis));
                changed = true;
            }
        }
        changed |= overlap_pass(boxes, ids, screen);
        if !changed {
            return true;
        }
    }
    !has_overlap(boxes) && relative.iter().all(|c| c.raw(boxes) <= F::zero())
}

struct Adam<F> {
    m: Vec<F>,
    v: Vec<F>,
    t: i32,
}

impl<F: Scalar> Adam<F> {
    fn new(n: usize) -> Self {
        Self { m: vec![F::zero(); n], v: vec![F::zero(); n], t: 0 }
    }

    /// Ascent step on `params` along `grad`, with per-parameter rates.
    fn step(&mut self, params: &mut [F], grad: &[F], lr: &[F], b1: F, b2: F) {
        self.t += 1;
        let eps = F::lit(1e-8);
        let c1 = F::one() - b1.powi(self.t);
        let c2 = F::one() - b2.powi(self.t);
        for k in 0..params.len() {
            self.m[k] = b1 * self.m[k] + (F::one() - b1) * grad[k];
            self.v[k] = b2 * self.v[k] + (F::one() - b2) * grad[k] * grad[k];
            let mh = self.m[k] / c1;
            let vh = self.v[k] / c2;
            params[k] = params[k] + lr[k] * mh / (vh.sqrt() + eps);
        }
    }
}

/// Residual used inside the objective: inequalities rectified, alignments
/// allowed to stay as far off as they were originally.
fn working_residual<F: Scalar>(c: &ResolvedConstraint, boxes: &[BBox<F>], slack: F) -> (F, F) {
    let raw = c.raw(boxes);
    if c.is_inequality() {
        if raw > F::zero() {
            (raw, F::one())
        } else {
            (F::zero(), F::zero())
        }
    } else if raw.abs() > slack {
        (raw - slack * raw.signum(), F::one())
    } else {
        (F::zero(), F::zero())
    }
}

struct Evaluation<F> {
    objective: F,
    score: F,
    reg: F,
    residuals: Vec<F>,
    grad: Vec<[F; 4]>,
}

pub fn refine<F: Scalar>(
    original: &Layout<F>,
    map: &DifficultyMap<F>,
    set: &ConstraintSet<F>,
    cfg: &OptimizerConfig<F>,
) -> Result<RefinementResult<F>, RefineError> {
    if original.is_empty() {
        return Err(RefineError::EmptyLayout);
    }
    let resolved = set.resolve(original).map_err(RefineError::ConstraintIdMismatch)?;
    let relative: Vec<ResolvedConstraint> = resolved.iter().copied().filter(|c| c.is_inequality()).collect();
    let start = original.bboxes();
    let slack: Vec<F> = resolved.iter().map(|c| if c.is_inequality() { F::zero() } else { c.raw(&start).abs() }).collect();
    let reg = CosineReg::new(&start);
    let ids: Vec<&str> = original.elements.iter().map(|e| e.id.as_str()).collect();
    let screen = &original.screen;
    let bounds = cfg.size_bounds(screen);
    let mut multipliers = vec![F::zero(); resolved.len()];

    let evaluate = |boxes: &[BBox<F>], multipliers: &[F]| -> Evaluation<F> {
        let score = mean_hit_probability(boxes, map, cfg.scoring.sigma_multiplier);
        let d = reg.value(boxes);
        let mut grad = gradient_on(boxes, map, &cfg.scoring);
        for (g, r) in grad.iter_mut().zip(reg.gradient(boxes)) {
            for k in 0..4 {
                g[k] = g[k] - cfg.lambda_reg * r[k];
            }
        }
        let mut objective = score - cfg.lambda_reg * d;
        let mut residuals = Vec::with_capacity(resolved.len());
        for (k, c) in resolved.iter().enumerate() {
            let (g, active) = working_residual(c, boxes, slack[k]);
            residuals.push(g);
            objective = objective - multipliers[k] * g - cfg.damping * F::lit(0.5) * g * g;
            if active != F::zero() {
                let coef = multipliers[k] + cfg.damping * g;
                for (e, p, partial) in c.partials() {
                    grad[e][p] = grad[e][p] - coef * F::lit(partial);
                }
            }
        }
        Evaluation { objective, score, reg: d, residuals, grad }
    };
    let norm = |r: &[F]| r.iter().map(|v| *v * *v).sum::<F>().sqrt();

    let mut boxes = start.clone();
    let mut eval = evaluate(&boxes, &multipliers);
    let mut trace = vec![TraceRecord {
        step: 0,
        score: eval.score,
        reg: eval.reg,
        violation_norm: norm(&eval.residuals),
        unresolvable_overlap: false,
    }];
    if !eval.objective.is_finite() {
        return Err(RefineError::NonFiniteObjective { step: 0, trace: trace.into_iter().map(to_f64).collect() });
    }

    // Parameters are optimized in screen-normalized units.
    let scale: Vec<F> = (0..start.len())
        .flat_map(|_| [screen.screen_width, screen.screen_height, screen.screen_width, screen.screen_height])
        .collect();
    let lr: Vec<F> = scale.iter().map(|s| cfg.step_size / *s).collect();
    let mut adam = Adam::new(start.len() * 4);
    let mut stop = StopReason::MaxSteps;
    let mut stalled = 0;

    for step in 1..=cfg.max_steps {
        let mut params: Vec<F> = boxes
            .iter()
            .zip(scale.chunks(4))
            .flat_map(|(b, s)| [b.x / s[0], b.y / s[1], b.w / s[2], b.h / s[3]])
            .collect();
        let grad: Vec<F> = eval.grad.iter().zip(scale.chunks(4)).flat_map(|(g, s)| [g[0] * s[0], g[1] * s[1], g[2] * s[2], g[3] * s[3]]).collect();
        adam.step(&mut params, &grad, &lr, cfg.beta1, cfg.beta2);
        for (k, m) in multipliers.iter_mut().enumerate() {
            *m = *m + cfg.multiplier_rate * eval.residuals[k];
        }
        let mut next: Vec<BBox<F>> = params
            .chunks(4)
            .zip(scale.chunks(4))
            .map(|(p, s)| BBox::new(p[0] * s[0], p[1] * s[1], p[2] * s[2], p[3] * s[3]))
            .collect();
        clamp_boxes(&mut next, screen, bounds);
        let ok = corrective(&mut next, &ids, &relative, screen, cfg.overlap_max_passes);
        let next_eval = evaluate(&next, &multipliers);
        let record = TraceRecord {
            step,
            score: next_eval.score,
            reg: next_eval.reg,
            violation_norm: norm(&next_eval.residuals),
            unresolvable_overlap: !ok,
        };
        trace.push(record);
        if !next_eval.objective.is_finite() {
            return Err(RefineError::NonFiniteObjective { step, trace: trace.into_iter().map(to_f64).collect() });
        }
        if !ok {
            stop = StopReason::UnresolvableOverlap;
            break;
        }
        let delta = (next_eval.objective - eval.objective).abs();
        boxes = next;
        eval = next_eval;
        stalled = if delta < cfg.convergence_tol { stalled + 1 } else { 0 };
        if stalled >= CONVERGENCE_WINDOW {
            stop = StopReason::Converged;
            break;
        }
    }

    // A refinement that ends below the starting score is not accepted.
    let initial = mean_hit_probability(&start, map, cfg.scoring.sigma_multiplier);
    if eval.score < initial {
        boxes = start;
    }
    let refined = original.with_bboxes(&boxes);
    let mut mapping = RegionMapping::between(original, &refined);
    mapping.stop_reason = Some(stop);
    Ok(RefinementResult { refined, mapping, trace, stop_reason: stop })
}

fn to_f64<F: Scalar>(r: TraceRecord<F>) -> TraceRecord<f64> {
    TraceRecord {
        step: r.step,
        score: r.score.as_f64(),
        reg: r.reg.as_f64(),
        violation_norm: r.violation_norm.as_f64(),
        unresolvable_overlap: r.unresolvable_overlap,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constraints::extract_constraints;
    use crate::difficulty_map::Preset;
    use crate::layout::UiElement;

    fn screen() -> DeviceMetrics<f64> {
        DeviceMetrics::new(375.0, 812.0, 163.0)
    }

    fn layout(boxes: &[(f64, f64, f64, f64)]) -> Layout<f64> {
        Layout::new(
            screen(),
            boxes.iter().enumerate().map(|(k, &(x, y, w, h))| UiElement::new(format!("e{k}"), BBox::new(x, y, w, h))).collect(),
        )
    }

    #[test]
    fn signature_examples() {
        let l = layout(&[(-5.0, -5.0, 10.0, 10.0), (5.0, 15.0, 10.0, 10.0)]);
        assert_eq!(displacement_signature(&l), vec![10.0, 20.0]);
        let moved = layout(&[(95.0, 45.0, 10.0, 10.0), (105.0, 65.0, 10.0, 10.0)]);
        assert_eq!(displacement_signature(&moved), vec![10.0, 20.0]);
        assert!(displacement_signature(&layout(&[(0.0, 0.0, 1.0, 1.0)])).is_empty());
    }

    #[test]
    fn dissimilarity_examples() {
        let l = layout(&[(0.0, 0.0, 10.0, 10.0), (20.0, 0.0, 10.0, 10.0), (0.0, 30.0, 10.0, 10.0)]);
        assert_eq!(dissimilarity(&l, &l).unwrap(), 0.0);
        let scaled = layout(&[(0.0, 0.0, 20.0, 20.0), (40.0, 0.0, 20.0, 20.0), (0.0, 60.0, 20.0, 20.0)]);
        assert!(dissimilarity(&scaled, &l).unwrap().abs() < 1e-12);
        let a = layout(&[(0.0, 0.0, 10.0, 10.0), (20.0, 0.0, 10.0, 10.0)]);
        let b = layout(&[(20.0, 0.0, 10.0, 10.0), (0.0, 0.0, 10.0, 10.0)]);
        assert_eq!(dissimilarity(&b, &a).unwrap(), 2.0);
        let coincident = layout(&[(0.0, 0.0, 10.0, 10.0), (0.0, 0.0, 10.0, 10.0)]);
        assert_eq!(dissimilarity(&coincident, &coincident).unwrap(), 0.0);
        let mut renamed = a.clone();
        renamed.elements[1].id = "zz".into();
        assert_eq!(dissimilarity(&renamed, &a), Err(DissimilarityError::IdMismatch));
    }

    #[test]
    fn regularizer_gradient_matches_finite_differences() {
        let orig = vec![BBox::new(10.0, 20.0, 30.0, 40.0), BBox::new(100.0, 30.0, 20.0, 20.0), BBox::new(40.0, 200.0, 50.0, 30.0)];
        let reg = CosineReg::new(&orig);
        let cur = vec![BBox::new(14.0, 18.0, 33.0, 41.0), BBox::new(96.0, 39.0, 22.0, 19.0), BBox::new(45.0, 190.0, 48.0, 35.0)];
        let g = reg.gradient(&cur);
        let h = 1e-5;
        for e in 0..3 {
            for p in 0..4 {
                let bump = |d: f64| {
                    let mut b = cur.clone();
                    match p {
                        0 => b[e].x += d,
                        1 => b[e].y += d,
                        2 => b[e].w += d,
                        _ => b[e].h += d,
                    }
                    reg.value(&b)
                };
                let fd = (bump(h) - bump(-h)) / (2.0 * h);
                assert!((fd - g[e][p]).abs() < 1e-8, "{e} {p}: {fd} vs {}", g[e][p]);
            }
        }
    }

    #[test]
    fn overlap_example_with_screen_clamp() {
        let l = layout(&[(0.0, 0.0, 10.0, 10.0), (8.0, 0.0, 10.0, 10.0)]);
        let (out, ok) = remove_overlaps(&l, 50);
        assert!(ok);
        assert_eq!(out.elements[0].bbox, BBox::new(0.0, 0.0, 10.0, 10.0));
        assert_eq!(out.elements[1].bbox, BBox::new(10.0, 0.0, 10.0, 10.0));
    }

    #[test]
    fn overlap_symmetric_split() {
        let l = layout(&[(100.0, 100.0, 10.0, 10.0), (106.0, 102.0, 10.0, 10.0)]);
        let (out, ok) = remove_overlaps(&l, 50);
        assert!(ok);
        assert_eq!(out.elements[0].bbox.x, 98.0);
        assert_eq!(out.elements[1].bbox.x, 108.0);
    }

    #[test]
    fn disjoint_layouts_are_untouched() {
        let l = layout(&[(0.0, 0.0, 10.0, 10.0), (10.0, 0.0, 10.0, 10.0), (50.0, 50.0, 5.0, 5.0)]);
        let (out, ok) = remove_overlaps(&l, 50);
        assert!(ok);
        assert_eq!(out, l);
    }

    #[test]
    fn full_screen_stack_is_unresolvable() {
        let l = layout(&vec![(0.0, 0.0, 375.0, 812.0); 20]);
        let (out, ok) = remove_overlaps(&l, 50);
        assert!(!ok);
        assert!(!out.is_overlap_free());
    }

    fn row_near_top() -> Layout<f64> {
        layout(&[(20.0, 20.0, 60.0, 40.0), (110.0, 20.0, 60.0, 40.0), (200.0, 20.0, 60.0, 40.0), (290.0, 20.0, 60.0, 40.0)])
    }

    #[test]
    fn zero_steps_is_identity() {
        let l = row_near_top();
        let map = Preset::Uniform.build(screen());
        let set = extract_constraints(&l, 4.0).reduced().unwrap();
        let cfg = OptimizerConfig { max_steps: 0, ..Default::default() };
        let r = refine(&l, &map, &set, &cfg).unwrap();
        assert_eq!(r.refined, l);
        assert_eq!(r.stop_reason, StopReason::MaxSteps);
        assert!(r.mapping.is_identity());
        assert_eq!(r.trace.len(), 1);
    }

    #[test]
    fn hard_top_pushes_row_down() {
        let l = row_near_top();
        let map = Preset::HardTop.build(screen());
        let set = extract_constraints(&l, 4.0).reduced().unwrap();
        let r = refine(&l, &map, &set, &OptimizerConfig::default()).unwrap();
        let before = mean_hit_probability(&l.bboxes(), &map, 1.0);
        let after = mean_hit_probability(&r.refined.bboxes(), &map, 1.0);
        assert!(after > before, "{after} <= {before}");
        for (a, b) in l.elements.iter().zip(&r.refined.elements) {
            assert!(b.bbox.center().y > a.bbox.center().y);
        }
        assert!(r.refined.is_overlap_free());
    }

    #[test]
    fn refinement_is_deterministic() {
        let l = row_near_top();
        let map = Preset::HardCorners.build(screen());
        let set = extract_constraints(&l, 4.0).reduced().unwrap();
        let a = refine(&l, &map, &set, &OptimizerConfig::default()).unwrap();
        let b = refine(&l, &map, &set, &OptimizerConfig::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn unknown_constraint_ids_are_rejected() {
        let l = row_near_top();
        let map = Preset::Uniform.build(screen());
        let mut set = extract_constraints(&l, 4.0);
        set.relative[0].a = "missing".into();
        assert!(matches!(refine(&l, &map, &set, &OptimizerConfig::default()), Err(RefineError::ConstraintIdMismatch(_))));
    }
}
