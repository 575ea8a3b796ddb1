//! Relative-position and alignment constraints extracted from an original
//! layout, their transitive reduction, and residual evaluation.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Axis, BBox};
use crate::layout::Layout;
use crate::num::Scalar;

pub const DEFAULT_ALIGN_TOLERANCE: f64 = 4.0;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ConstraintError {
    #[error("relative constraints along {0:?} contain a cycle")]
    CycleDetected(Axis),
    #[error("constraint refers to unknown element '{0}'")]
    UnknownId(String),
    #[error("constraint relates element '{0}' to itself")]
    SelfReference(String),
}

/// `a` ends before `b` starts along `axis`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RelativeConstraint {
    pub a: String,
    pub b: String,
    pub axis: Axis,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AlignMode {
    Begin,
    Center,
    End,
}

impl AlignMode {
    pub const ALL: [AlignMode; 3] = [AlignMode::Begin, AlignMode::Center, AlignMode::End];
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct AlignmentConstraint {
    pub a: String,
    pub b: String,
    pub axis: Axis,
    pub mode: AlignMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Scalar")]
pub struct ConstraintSet<F> {
    pub relative: Vec<RelativeConstraint>,
    pub alignment: Vec<AlignmentConstraint>,
    pub tolerance: F,
}

impl<F: Scalar> ConstraintSet<F> {
    pub fn empty(tolerance: F) -> Self {
        Self { relative: Vec::new(), alignment: Vec::new(), tolerance }
    }

    pub fn len(&self) -> usize {
        self.relative.len() + self.alignment.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Same set with the relative constraints transitively reduced.
    pub fn reduced(mut self) -> Result<Self, ConstraintError> {
        self.relative = transitive_reduction(&self.relative)?;
        Ok(self)
    }

    /// Binds constraint ids to element indices of `layout`.
    pub fn resolve(&self, layout: &Layout<F>) -> Result<Vec<ResolvedConstraint>, ConstraintError> {
        let index: HashMap<&str, usize> =
            layout.elements.iter().enumerate().map(|(i, e)| (e.id.as_str(), i)).collect();
        let lookup = |id: &String| index.get(id.as_str()).copied().ok_or_else(|| ConstraintError::UnknownId(id.clone()));
        let pair = |a: &String, b: &String| -> Result<(usize, usize), ConstraintError> {
            let (i, j) = (lookup(a)?, lookup(b)?);
            if i == j {
                return Err(ConstraintError::SelfReference(a.clone()));
            }
            Ok((i, j))
        };
        let mut out = Vec::with_capacity(self.len());
        for c in &self.relative {
            let (i, j) = pair(&c.a, &c.b)?;
            out.push(ResolvedConstraint { i, j, axis: c.axis, kind: ConstraintKind::Relative });
        }
        for c in &self.alignment {
            let (i, j) = pair(&c.a, &c.b)?;
            out.push(ResolvedConstraint { i, j, axis: c.axis, kind: ConstraintKind::Align(c.mode) });
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConstraintKind {
    Relative,
    Align(AlignMode),
}

/// A constraint bound to element indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ResolvedConstraint {
    pub i: usize,
    pub j: usize,
    pub axis: Axis,
    pub kind: ConstraintKind,
}

impl ResolvedConstraint {
    pub fn is_inequality(&self) -> bool {
        self.kind == ConstraintKind::Relative
    }

    /// Signed coordinate difference before the inequality is rectified:
    /// `end_i − start_j` for relative constraints, `coord_i − coord_j` for
    /// alignments.
    pub fn raw<F: Scalar>(&self, boxes: &[BBox<F>]) -> F {
        let (a, b) = (&boxes[self.i], &boxes[self.j]);
        let half = F::lit(0.5);
        let ax = self.axis;
        match self.kind {
            ConstraintKind::Relative => a.end(ax) - b.start(ax),
            ConstraintKind::Align(AlignMode::Begin) => a.start(ax) - b.start(ax),
            ConstraintKind::Align(AlignMode::Center) => {
                (a.start(ax) + a.extent(ax) * half) - (b.start(ax) + b.extent(ax) * half)
            }
            ConstraintKind::Align(AlignMode::End) => a.end(ax) - b.end(ax),
        }
    }

    pub fn residual<F: Scalar>(&self, boxes: &[BBox<F>]) -> F {
        let r = self.raw(boxes);
        if self.is_inequality() {
            r.max(F::zero())
        } else {
            r
        }
    }

    /// Partials of [`raw`](Self::raw) as `(element, parameter, coefficient)`
    /// with parameters ordered `[x, y, w, h]`.
    pub fn partials(&self) -> [(usize, usize, f64); 4] {
        let (pos, ext) = match self.axis {
            Axis::X => (0, 2),
            Axis::Y => (1, 3),
        };
        let ext_coef = match self.kind {
            ConstraintKind::Align(AlignMode::Begin) => 0.0,
            ConstraintKind::Align(AlignMode::Center) => 0.5,
            ConstraintKind::Align(AlignMode::End) => 1.0,
            ConstraintKind::Relative => 1.0,
        };
        let ext_coef_j = match self.kind {
            ConstraintKind::Relative => 0.0,
            _ => -ext_coef,
        };
        [(self.i, pos, 1.0), (self.i, ext, ext_coef), (self.j, pos, -1.0), (self.j, ext, ext_coef_j)]
    }
}

fn separation<F: Scalar>(a: &BBox<F>, b: &BBox<F>, axis: Axis) -> Option<(bool, F)> {
    if a.end(axis) <= b.start(axis) {
        Some((true, b.start(axis) - a.end(axis)))
    } else if b.end(axis) <= a.start(axis) {
        Some((false, a.start(axis) - b.end(axis)))
    } else {
        None
    }
}

fn align_value<F: Scalar>(b: &BBox<F>, axis: Axis, mode: AlignMode) -> F {
    match mode {
        AlignMode::Begin => b.start(axis),
        AlignMode::Center => b.start(axis) + b.extent(axis) * F::lit(0.5),
        AlignMode::End => b.end(axis),
    }
}

/// Tests every pair of elements for ordering and for the six alignments.
/// Relative constraints are returned unreduced.
pub fn extract_constraints<F: Scalar>(layout: &Layout<F>, tolerance: F) -> ConstraintSet<F> {
    let els = &layout.elements;
    let mut relative = Vec::new();
    for i in 0..els.len() {
        for j in (i + 1)..els.len() {
            let (a, b) = (&els[i].bbox, &els[j].bbox);
            let sx = separation(a, b, Axis::X);
            let sy = separation(a, b, Axis::Y);
            let pick = match (sx, sy) {
                (Some(x), Some(y)) => {
                    if y.1 > x.1 {
                        Some((Axis::Y, y.0))
                    } else {
                        Some((Axis::X, x.0))
                    }
                }
                (Some(x), None) => Some((Axis::X, x.0)),
                (None, Some(y)) => Some((Axis::Y, y.0)),
                (None, None) => None,
            };
            if let Some((axis, i_first)) = pick {
                let (first, second) = if i_first { (i, j) } else { (j, i) };
                relative.push(RelativeConstraint { a: els[first].id.clone(), b: els[second].id.clone(), axis });
            }
        }
    }
    relative.sort();

    let mut pairs: Vec<(usize, usize)> = Vec::new();
    for i in 0..els.len() {
        for j in (i + 1)..els.len() {
            if els[i].id <= els[j].id {
                pairs.push((i, j));
            } else {
                pairs.push((j, i));
            }
        }
    }
    pairs.sort_by(|p, q| (&els[p.0].id, &els[p.1].id).cmp(&(&els[q.0].id, &els[q.1].id)));

    let mut alignment = Vec::new();
    for axis in Axis::BOTH {
        for mode in AlignMode::ALL {
            let mut dsu = DisjointSets::new(els.len());
            for &(i, j) in &pairs {
                let d = align_value(&els[i].bbox, axis, mode) - align_value(&els[j].bbox, axis, mode);
                if d.abs() <= tolerance && dsu.union(i, j) {
                    alignment.push(AlignmentConstraint { a: els[i].id.clone(), b: els[j].id.clone(), axis, mode });
                }
            }
        }
    }
    alignment.sort();
    ConstraintSet { relative, alignment, tolerance }
}

struct DisjointSets {
    parent: Vec<usize>,
}

impl DisjointSets {
    fn new(n: usize) -> Self {
        Self { parent: (0..n).collect() }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    /// Returns false when already joined.
    fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        self.parent[ra.max(rb)] = ra.min(rb);
        true
    }
}

/// Minimal set of relative constraints with the same reachability per axis.
/// Duplicates collapse to their first occurrence; input order is kept.
pub fn transitive_reduction(constraints: &[RelativeConstraint]) -> Result<Vec<RelativeConstraint>, ConstraintError> {
    let mut keep = vec![false; constraints.len()];
    for axis in Axis::BOTH {
        let idx: Vec<usize> = (0..constraints.len()).filter(|&k| constraints[k].axis == axis).collect();
        if idx.is_empty() {
            continue;
        }
        let mut nodes: HashMap<&str, usize> = HashMap::new();
        for &k in &idx {
            for id in [&constraints[k].a, &constraints[k].b] {
                let next = nodes.len();
                nodes.entry(id.as_str()).or_insert(next);
            }
        }
        let n = nodes.len();
        let mut adj = vec![Vec::new(); n];
        let mut first_edge: HashMap<(usize, usize), usize> = HashMap::new();
        for &k in &idx {
            let (u, v) = (nodes[constraints[k].a.as_str()], nodes[constraints[k].b.as_str()]);
            if u == v {
                return Err(ConstraintError::CycleDetected(axis));
            }
            if let std::collections::hash_map::Entry::Vacant(e) = first_edge.entry((u, v)) {
                e.insert(k);
                adj[u].push(v);
            }
        }
        let order = topological_order(&adj).ok_or(ConstraintError::CycleDetected(axis))?;
        // reach[u][v]: v reachable from u by a path of length >= 1
        let mut reach = vec![vec![false; n]; n];
        for &u in order.iter().rev() {
            for &v in &adj[u] {
                reach[u][v] = true;
                let (lo, hi) = if u < v { reach.split_at_mut(v) } else { reach.split_at_mut(u) };
                let (ru, rv) = if u < v { (&mut lo[u], &hi[0]) } else { (&mut hi[0], &lo[v]) };
                for w in 0..n {
                    ru[w] |= rv[w];
                }
            }
        }
        for (&(u, v), &k) in &first_edge {
            let redundant = adj[u].iter().any(|&w| w != v && reach[w][v]);
            keep[k] = !redundant;
        }
    }
    Ok(constraints.iter().zip(keep).filter(|(_, k)| *k).map(|(c, _)| c.clone()).collect())
}

fn topological_order(adj: &[Vec<usize>]) -> Option<Vec<usize>> {
    let n = adj.len();
    let mut indeg = vec![0usize; n];
    for vs in adj {
        for &v in vs {
            indeg[v] += 1;
        }
    }
    let mut stack: Vec<usize> = (0..n).filter(|&v| indeg[v] == 0).collect();
    let mut order = Vec::with_capacity(n);
    while let Some(u) = stack.pop() {
        order.push(u);
        for &v in &adj[u] {
            indeg[v] -= 1;
            if indeg[v] == 0 {
                stack.push(v);
            }
        }
    }
    (order.len() == n).then_some(order)
}

/// Residuals of every constraint on `layout`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Scalar")]
pub struct Residuals<F> {
    /// `max(0, end_a − start_b)`; zero when satisfied.
    pub relative: Vec<F>,
    /// Signed coordinate differences.
    pub alignment: Vec<F>,
}

pub fn constraint_residuals<F: Scalar>(layout: &Layout<F>, set: &ConstraintSet<F>) -> Result<Residuals<F>, ConstraintError> {
    let resolved = set.resolve(layout)?;
    let boxes = layout.bboxes();
    let (rel, al) = resolved.split_at(set.relative.len());
    Ok(Residuals {
        relative: rel.iter().map(|c| c.residual(&boxes)).collect(),
        alignment: al.iter().map(|c| c.residual(&boxes)).collect(),
    })
}
