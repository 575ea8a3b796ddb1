//! Tap-calibration processing: fitting the extended Fitts model with a
//! learned 3-D rest position, and turning each tap into an adjusted error
//! normalized to a constant selection time.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Point2;
use crate::linalg::solve_square;
use crate::num::Scalar;

/// Smallest adjusted error handed to the difficulty map, in points.
pub const EPSILON_MIN: f64 = 0.5;

/// Upper bound for the rest position's height above the screen, in inches.
pub const MAX_REST_HEIGHT_INCHES: f64 = 5.0;

pub const DEFAULT_GRID_COLS: usize = 4;
pub const DEFAULT_GRID_ROWS: usize = 8;
pub const DEFAULT_TIMEOUT: f64 = 3.0;
pub const DEFAULT_T_N: f64 = 1.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CalibrationError {
    #[error("too few samples: {samples} samples over {targets} targets (need >= 8 over >= 4)")]
    TooFewSamples { samples: usize, targets: usize },
    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),
    #[error("fit did not converge after {iterations} iterations")]
    NonConvergence { iterations: usize },
    #[error("invalid model: slope b must be positive")]
    InvalidModel,
    #[error("invalid session: {0}")]
    InvalidSession(String),
}

/// Physical description of the screen, in points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeviceMetrics<F> {
    #[serde(rename = "w")]
    pub screen_width: F,
    #[serde(rename = "h")]
    pub screen_height: F,
    #[serde(rename = "ppi")]
    pub points_per_inch: F,
}

impl<F: Scalar> DeviceMetrics<F> {
    pub fn new(screen_width: F, screen_height: F, points_per_inch: F) -> Self {
        Self { screen_width, screen_height, points_per_inch }
    }

    pub fn validate(&self) -> Result<(), String> {
        let ok = |v: F| v.is_finite() && v > F::zero();
        if !ok(self.screen_width) || !ok(self.screen_height) {
            return Err("screen dimensions must be finite and positive".into());
        }
        if !(self.points_per_inch >= F::lit(50.0) && self.points_per_inch <= F::lit(1000.0)) {
            return Err("points_per_inch must lie in [50, 1000]".into());
        }
        Ok(())
    }

    pub fn max_rest_height(&self) -> F {
        F::lit(MAX_REST_HEIGHT_INCHES) * self.points_per_inch
    }

    pub fn clamp_point(&self, p: Point2<F>) -> Point2<F> {
        Point2::new(
            p.x.max(F::zero()).min(self.screen_width),
            p.y.max(F::zero()).min(self.screen_height),
        )
    }
}

/// One tap: where the target was, where the finger landed and how long it took.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "SampleRecord<F>", into = "SampleRecord<F>")]
#[serde(bound(serialize = "F: Scalar", deserialize = "F: Scalar"))]
pub struct CalibrationSample<F> {
    pub target: Point2<F>,
    pub tap: Point2<F>,
    /// Selection time in seconds.
    pub time: F,
}

#[derive(Serialize, Deserialize, Clone, Copy)]
struct SampleRecord<F> {
    tx: F,
    ty: F,
    fx: F,
    fy: F,
    t: F,
}

impl<F: Scalar> From<SampleRecord<F>> for CalibrationSample<F> {
    fn from(r: SampleRecord<F>) -> Self {
        Self { target: Point2::new(r.tx, r.ty), tap: Point2::new(r.fx, r.fy), time: r.t }
    }
}

impl<F: Scalar> From<CalibrationSample<F>> for SampleRecord<F> {
    fn from(s: CalibrationSample<F>) -> Self {
        Self { tx: s.target.x, ty: s.target.y, fx: s.tap.x, fy: s.tap.y, t: s.time }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Scalar")]
pub struct CalibrationSession<F> {
    pub device: DeviceMetrics<F>,
    pub grid_cols: usize,
    pub grid_rows: usize,
    pub samples: Vec<CalibrationSample<F>>,
    pub timeout: F,
}

impl<F: Scalar> CalibrationSession<F> {
    pub fn new(device: DeviceMetrics<F>, samples: Vec<CalibrationSample<F>>) -> Self {
        Self {
            device,
            grid_cols: DEFAULT_GRID_COLS,
            grid_rows: DEFAULT_GRID_ROWS,
            samples,
            timeout: F::lit(DEFAULT_TIMEOUT),
        }
    }

    /// Grid target centers in row-major order.
    pub fn grid_centers(&self) -> Vec<Point2<F>> {
        grid_centers(&self.device, self.grid_cols, self.grid_rows)
    }

    pub fn validate(&self) -> Result<(), CalibrationError> {
        self.device.validate().map_err(CalibrationError::InvalidSession)?;
        if self.grid_cols == 0 || self.grid_rows == 0 {
            return Err(CalibrationError::InvalidSession("grid must be non-empty".into()));
        }
        if !(self.timeout.is_finite() && self.timeout > F::zero()) {
            return Err(CalibrationError::InvalidSession("timeout must be positive".into()));
        }
        let centers = self.grid_centers();
        let tol = F::lit(1e-3);
        let (w, h) = (self.device.screen_width, self.device.screen_height);
        for (k, s) in self.samples.iter().enumerate() {
            if !(s.time.is_finite() && s.time > F::zero()) {
                return Err(CalibrationError::InvalidSession(format!(
                    "sample {k}: selection time must be positive"
                )));
            }
            let on_screen = |p: Point2<F>| {
                p.x.is_finite() && p.y.is_finite() && p.x >= F::zero() && p.x <= w && p.y >= F::zero() && p.y <= h
            };
            if !on_screen(s.target) || !on_screen(s.tap) {
                return Err(CalibrationError::InvalidSession(format!(
                    "sample {k}: target and tap must lie on screen"
                )));
            }
            if !centers.iter().any(|c| c.distance(&s.target) <= tol) {
                return Err(CalibrationError::InvalidSession(format!(
                    "sample {k}: target is not a grid center"
                )));
            }
        }
        Ok(())
    }
}

/// Centers of a `cols × rows` grid of equal cells covering the screen,
/// row-major (top row first).
pub fn grid_centers<F: Scalar>(device: &DeviceMetrics<F>, cols: usize, rows: usize) -> Vec<Point2<F>> {
    let half = F::lit(0.5);
    let cw = device.screen_width / F::lit(cols as f64);
    let rh = device.screen_height / F::lit(rows as f64);
    (0..rows)
        .flat_map(|r| {
            (0..cols).map(move |c| {
                Point2::new((F::lit(c as f64) + half) * cw, (F::lit(r as f64) + half) * rh)
            })
        })
        .collect()
}

/// Extended Fitts model `t = a + b·log2(‖p_f − p_i‖)` with the finger's
/// rest position `p_i` hovering `rest_z` points above the screen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FittsModel<F> {
    pub a: F,
    pub b: F,
    pub rest_x: F,
    pub rest_y: F,
    pub rest_z: F,
}

impl<F: Scalar> FittsModel<F> {
    /// 3-D distance from the rest position to a tap on the screen plane.
    pub fn travel_distance(&self, tap: Point2<F>) -> F {
        let dx = tap.x - self.rest_x;
        let dy = tap.y - self.rest_y;
        (dx * dx + dy * dy + self.rest_z * self.rest_z).sqrt()
    }

    pub fn predict_time(&self, tap: Point2<F>) -> F {
        self.a + self.b * self.travel_distance(tap).log2()
    }

    /// Distance travelled after `t` seconds, `2^((t − a)/b)`.
    pub fn distance_at(&self, t: F) -> F {
        ((t - self.a) / self.b).exp2()
    }
}

/// Fitted model plus diagnostics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FittsFit<F> {
    pub model: FittsModel<F>,
    pub rms_residual: F,
    /// Index of the winning multi-start initialization.
    pub start: usize,
    pub iterations: usize,
}

const LM_MAX_ITERS: usize = 500;

/// Fits `(a, b, p_i)` by bounded Levenberg–Marquardt from nine deterministic
/// starts and keeps the one with the smallest residual.
pub fn fit_fitts_model<F: Scalar>(session: &CalibrationSession<F>) -> Result<FittsFit<F>, CalibrationError> {
    let samples = &session.samples;
    let targets = distinct_targets(samples);
    if samples.len() < 8 || targets < 4 {
        return Err(CalibrationError::TooFewSamples { samples: samples.len(), targets });
    }
    session.device.validate().map_err(CalibrationError::InvalidSession)?;

    let n = F::lit(samples.len() as f64);
    let mean_t = samples.iter().map(|s| s.time).sum::<F>() / n;
    let var_t = samples.iter().map(|s| (s.time - mean_t).powi(2)).sum::<F>() / n;
    if var_t <= F::lit(1e-24) * (F::one() + mean_t * mean_t) {
        return Err(CalibrationError::DegenerateGeometry(
            "selection times have zero variance; slope is unidentifiable".into(),
        ));
    }
    if taps_are_collinear(samples) {
        return Err(CalibrationError::DegenerateGeometry("tap points are collinear or coincident".into()));
    }

    let problem = FittsProblem { samples, device: &session.device };
    let mut best: Option<(F, LmOutcome<F>, usize)> = None;
    let mut any_converged = false;
    for (k, start) in problem.starts().into_iter().enumerate() {
        let Some(outcome) = problem.levenberg_marquardt(start) else {
            continue;
        };
        any_converged |= outcome.converged;
        let better = match &best {
            None => true,
            Some((cost, _, _)) => outcome.cost < *cost,
        };
        if better {
            best = Some((outcome.cost, outcome, k));
        }
    }
    let Some((cost, outcome, start)) = best else {
        return Err(CalibrationError::DegenerateGeometry("no start produced a finite residual".into()));
    };
    if !any_converged {
        return Err(CalibrationError::NonConvergence { iterations: LM_MAX_ITERS });
    }
    let [a, b, rest_x, rest_y, rest_z] = outcome.params;
    if !(b > F::zero()) {
        return Err(CalibrationError::DegenerateGeometry(
            "fitted slope is not positive; times do not grow with distance".into(),
        ));
    }
    Ok(FittsFit {
        model: FittsModel { a, b, rest_x, rest_y, rest_z },
        rms_residual: (F::lit(2.0) * cost / n).sqrt(),
        start,
        iterations: outcome.iterations,
    })
}

fn distinct_targets<F: Scalar>(samples: &[CalibrationSample<F>]) -> usize {
    let mut keys: Vec<(F, F)> = samples.iter().map(|s| (s.target.x, s.target.y)).collect();
    keys.sort_by(|p, q| cmp_f(p.0, q.0).then(cmp_f(p.1, q.1)));
    keys.dedup();
    keys.len()
}

fn cmp_f<F: Scalar>(a: F, b: F) -> Ordering {
    a.partial_cmp(&b).unwrap_or(Ordering::Equal)
}

fn taps_are_collinear<F: Scalar>(samples: &[CalibrationSample<F>]) -> bool {
    let n = F::lit(samples.len() as f64);
    let mx = samples.iter().map(|s| s.tap.x).sum::<F>() / n;
    let my = samples.iter().map(|s| s.tap.y).sum::<F>() / n;
    let (mut sxx, mut syy, mut sxy) = (F::zero(), F::zero(), F::zero());
    for s in samples {
        let dx = s.tap.x - mx;
        let dy = s.tap.y - my;
        sxx = sxx + dx * dx;
        syy = syy + dy * dy;
        sxy = sxy + dx * dy;
    }
    let trace = sxx + syy;
    let det = sxx * syy - sxy * sxy;
    trace == F::zero() || det <= F::lit(1e-12) * trace * trace
}

struct FittsProblem<'a, F> {
    samples: &'a [CalibrationSample<F>],
    device: &'a DeviceMetrics<F>,
}

struct LmOutcome<F> {
    params: [F; 5],
    /// Half the sum of squared residuals.
    cost: F,
    iterations: usize,
    converged: bool,
}

impl<F: Scalar> FittsProblem<'_, F> {
    /// Bottom-center first (the usual thumb resting area), then the rest of
    /// a thirds grid; all at one inch above the screen.
    fn starts(&self) -> Vec<[F; 3]> {
        let (w, h) = (self.device.screen_width, self.device.screen_height);
        let z = self.device.points_per_inch;
        let fr = [F::lit(1.0 / 6.0), F::lit(0.5), F::lit(5.0 / 6.0)];
        let mut out = vec![[w * fr[1], h * fr[2], z]];
        for fy in fr {
            for fx in fr {
                let p = [w * fx, h * fy, z];
                if p != out[0] {
                    out.push(p);
                }
            }
        }
        out
    }

    fn project(&self, p: &mut [F; 5]) {
        p[2] = p[2].max(F::zero()).min(self.device.screen_width);
        p[3] = p[3].max(F::zero()).min(self.device.screen_height);
        p[4] = p[4].max(F::zero()).min(self.device.max_rest_height());
    }

    /// Parameters sitting on a bound whose descent direction points outside.
    fn active_bounds(&self, p: &[F; 5], grad: &[F; 5]) -> [bool; 5] {
        let upper = [
            F::infinity(),
            F::infinity(),
            self.device.screen_width,
            self.device.screen_height,
            self.device.max_rest_height(),
        ];
        let mut active = [false; 5];
        for i in 2..5 {
            active[i] = (p[i] <= F::zero() && grad[i] > F::zero()) || (p[i] >= upper[i] && grad[i] < F::zero());
        }
        active
    }

    fn log_distance(&self, s: &CalibrationSample<F>, px: F, py: F, pz: F) -> Option<(F, F)> {
        let dx = s.tap.x - px;
        let dy = s.tap.y - py;
        let d2 = dx * dx + dy * dy + pz * pz;
        if d2 <= F::lit(1e-12) || !d2.is_finite() {
            return None;
        }
        Some((d2.log2() * F::lit(0.5), d2))
    }

    /// Ordinary least squares of `t` on `log2 A` at a fixed rest position.
    fn linear_ab(&self, rest: [F; 3]) -> Option<(F, F)> {
        let n = F::lit(self.samples.len() as f64);
        let mut ls = Vec::with_capacity(self.samples.len());
        for s in self.samples {
            ls.push(self.log_distance(s, rest[0], rest[1], rest[2])?.0);
        }
        let ml = ls.iter().copied().sum::<F>() / n;
        let mt = self.samples.iter().map(|s| s.time).sum::<F>() / n;
        let mut sll = F::zero();
        let mut slt = F::zero();
        for (l, s) in ls.iter().zip(self.samples) {
            sll = sll + (*l - ml) * (*l - ml);
            slt = slt + (*l - ml) * (s.time - mt);
        }
        let b = if sll > F::zero() { slt / sll } else { F::zero() };
        Some((mt - b * ml, b))
    }

    fn cost(&self, p: &[F; 5]) -> Option<F> {
        let mut acc = F::zero();
        for s in self.samples {
            let (l, _) = self.log_distance(s, p[2], p[3], p[4])?;
            let r = s.time - p[0] - p[1] * l;
            acc = acc + r * r;
        }
        let c = acc * F::lit(0.5);
        c.is_finite().then_some(c)
    }

    /// Normal equations `(JᵀJ, Jᵀr)` of the residual `r = t − a − b·log2 A`.
    fn normal_equations(&self, p: &[F; 5]) -> Option<([F; 25], [F; 5])> {
        let mut jtj = [F::zero(); 25];
        let mut jtr = [F::zero(); 5];
        let ln2 = F::LN_2();
        for s in self.samples {
            let (l, d2) = self.log_distance(s, p[2], p[3], p[4])?;
            let r = s.time - p[0] - p[1] * l;
            let k = -p[1] / (d2 * ln2);
            let row = [
                -F::one(),
                -l,
                k * (p[2] - s.tap.x),
                k * (p[3] - s.tap.y),
                k * p[4],
            ];
            for i in 0..5 {
                jtr[i] = jtr[i] + row[i] * r;
                for j in 0..5 {
                    jtj[i * 5 + j] = jtj[i * 5 + j] + row[i] * row[j];
                }
            }
        }
        Some((jtj, jtr))
    }

    fn levenberg_marquardt(&self, rest: [F; 3]) -> Option<LmOutcome<F>> {
        let (a, b) = self.linear_ab(rest)?;
        let mut p = [a, b, rest[0], rest[1], rest[2]];
        self.project(&mut p);
        let mut cost = self.cost(&p)?;
        let scale_t: F = self.samples.iter().map(|s| s.time * s.time).sum();
        let mut mu = F::lit(1e-3);
        let mut converged = false;
        let mut iterations = 0;
        while iterations < LM_MAX_ITERS {
            iterations += 1;
            if cost <= F::lit(1e-30) * scale_t {
                converged = true;
                break;
            }
            let (jtj, jtr) = self.normal_equations(&p)?;
            let max_diag = (0..5).fold(F::zero(), |m, i| m.max(jtj[i * 6]));
            let active = self.active_bounds(&p, &jtr);
            let mut accepted = false;
            while mu < F::lit(1e20) {
                let mut lhs = jtj;
                let mut rhs: Vec<F> = jtr.iter().map(|v| -*v).collect();
                for i in 0..5 {
                    let d = jtj[i * 6].max(max_diag * F::lit(1e-12));
                    lhs[i * 6] = lhs[i * 6] + mu * d;
                }
                for i in (0..5).filter(|&i| active[i]) {
                    for j in 0..5 {
                        lhs[i * 5 + j] = F::zero();
                        lhs[j * 5 + i] = F::zero();
                    }
                    lhs[i * 6] = F::one();
                    rhs[i] = F::zero();
                }
                let Some(step) = solve_square(&lhs, &rhs) else {
                    mu = mu * F::lit(4.0);
                    continue;
                };
                let mut trial = p;
                for i in 0..5 {
                    trial[i] = trial[i] + step[i];
                }
                self.project(&mut trial);
                match self.cost(&trial) {
                    Some(c) if c < cost => {
                        let step_norm = (0..5)
                            .map(|i| ((trial[i] - p[i]) / (p[i].abs() + F::one())).powi(2))
                            .sum::<F>()
                            .sqrt();
                        let decrease = cost - c;
                        p = trial;
                        cost = c;
                        mu = (mu / F::lit(3.0)).max(F::lit(1e-12));
                        accepted = true;
                        if step_norm <= F::lit(1e-13) || decrease <= F::lit(1e-16) * cost {
                            converged = true;
                        }
                        break;
                    }
                    _ => mu = mu * F::lit(4.0),
                }
            }
            if !accepted {
                // no descent direction left within the box: a (local) minimum
                converged = true;
                break;
            }
            if converged {
                break;
            }
        }
        Some(LmOutcome { params: p, cost, iterations, converged })
    }
}

/// Choice of the expected landing radius at the rest position.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum InitialRadiusPolicy<F> {
    /// `r_i = A`: uncertainty at rest equals the distance still to travel.
    #[default]
    TravelDistance,
    Constant(F),
    MultipleOfDistance(F),
}

impl<F: Scalar> InitialRadiusPolicy<F> {
    pub fn radius(&self, travel: F) -> F {
        match *self {
            Self::TravelDistance => travel,
            Self::Constant(r) => r,
            Self::MultipleOfDistance(k) => k * travel,
        }
    }
}

/// Error expected after travelling `d` of the total distance `a`, linearly
/// interpolated between the initial radius `r_i` and the observed `r_f`.
///
/// Both endpoints are reproduced exactly.
pub fn interpolate_error<F: Scalar>(r_f: F, r_i: F, d: F, a: F) -> F {
    if a <= F::zero() {
        return r_f;
    }
    let frac = d / a;
    if frac >= F::one() {
        r_f
    } else {
        r_i + (r_f - r_i) * frac
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdjustedErrorSample<F> {
    pub location: Point2<F>,
    pub epsilon_x: F,
    pub epsilon_y: F,
}

/// Adjusted error of one tap at the normalized selection time `t_n`.
pub fn adjusted_error<F: Scalar>(
    sample: &CalibrationSample<F>,
    model: &FittsModel<F>,
    t_n: F,
    policy: InitialRadiusPolicy<F>,
) -> Result<AdjustedErrorSample<F>, CalibrationError> {
    if !(model.b > F::zero()) {
        return Err(CalibrationError::InvalidModel);
    }
    let travel = model.travel_distance(sample.tap);
    let d = model.distance_at(t_n).max(F::zero()).min(travel);
    let r_i = policy.radius(travel);
    let eps_min = F::lit(EPSILON_MIN);
    let eps = |r_f: F| interpolate_error(r_f, r_i, d, travel).max(eps_min);
    Ok(AdjustedErrorSample {
        location: sample.target,
        epsilon_x: eps((sample.tap.x - sample.target.x).abs()),
        epsilon_y: eps((sample.tap.y - sample.target.y).abs()),
    })
}

/// Averages adjusted errors per grid location; output is row-major.
pub fn aggregate_per_target<F: Scalar>(samples: &[AdjustedErrorSample<F>]) -> Vec<AdjustedErrorSample<F>> {
    let mut sorted: Vec<&AdjustedErrorSample<F>> = samples.iter().collect();
    sorted.sort_by(|p, q| cmp_f(p.location.y, q.location.y).then(cmp_f(p.location.x, q.location.x)));
    let mut out: Vec<AdjustedErrorSample<F>> = Vec::new();
    let mut count = 0usize;
    for s in sorted {
        match out.last_mut() {
            Some(last) if last.location == s.location => {
                last.epsilon_x = last.epsilon_x + s.epsilon_x;
                last.epsilon_y = last.epsilon_y + s.epsilon_y;
                count += 1;
            }
            _ => {
                finish_mean(out.last_mut(), count);
                out.push(*s);
                count = 1;
            }
        }
    }
    finish_mean(out.last_mut(), count);
    out
}

fn finish_mean<F: Scalar>(group: Option<&mut AdjustedErrorSample<F>>, count: usize) {
    if let Some(g) = group {
        if count > 1 {
            let n = F::lit(count as f64);
            g.epsilon_x = g.epsilon_x / n;
            g.epsilon_y = g.epsilon_y / n;
        }
    }
}

/// Noiseless-in-time synthetic session: taps are offset from their targets
/// by `tap_offset(k)` and times follow the model exactly (plus `time_noise(k)`).
pub fn synthetic_session<F: Scalar>(
    device: DeviceMetrics<F>,
    model: &FittsModel<F>,
    repetitions: usize,
    mut tap_offset: impl FnMut(usize) -> (F, F),
    mut time_noise: impl FnMut(usize) -> F,
) -> CalibrationSession<F> {
    let centers = grid_centers(&device, DEFAULT_GRID_COLS, DEFAULT_GRID_ROWS);
    let mut samples = Vec::with_capacity(centers.len() * repetitions);
    for rep in 0..repetitions {
        for (i, c) in centers.iter().enumerate() {
            let k = rep * centers.len() + i;
            let (ox, oy) = tap_offset(k);
            let tap = device.clamp_point(Point2::new(c.x + ox, c.y + oy));
            let time = model.predict_time(tap) + time_noise(k);
            samples.push(CalibrationSample { target: *c, tap, time });
        }
    }
    CalibrationSession::new(device, samples)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn device() -> DeviceMetrics<f64> {
        DeviceMetrics::new(375.0, 812.0, 163.0)
    }

    fn jitter(k: usize) -> (f64, f64) {
        // deterministic spread of taps around the targets
        let a = k as f64 * 2.399_963;
        (6.0 * a.cos(), 5.0 * (1.7 * a).sin())
    }

    #[test]
    fn recovers_known_model() {
        let truth = FittsModel { a: 0.2, b: 0.15, rest_x: 200.0, rest_y: 600.0, rest_z: 160.0 };
        let session = synthetic_session(device(), &truth, 2, jitter, |_| 0.0);
        let fit = fit_fitts_model(&session).unwrap();
        let m = fit.model;
        assert!((m.a - truth.a).abs() < 1e-3, "{m:?}");
        assert!((m.b - truth.b).abs() < 1e-3, "{m:?}");
        assert!((m.rest_x - 200.0).abs() < 1.0);
        assert!((m.rest_y - 600.0).abs() < 1.0);
        assert!((m.rest_z - 160.0).abs() < 1.0);
    }

    #[test]
    fn constant_times_are_degenerate() {
        let truth = FittsModel { a: 0.2, b: 0.15, rest_x: 200.0, rest_y: 600.0, rest_z: 160.0 };
        let mut session = synthetic_session(device(), &truth, 1, jitter, |_| 0.0);
        for s in &mut session.samples {
            s.time = 0.5;
        }
        assert!(matches!(fit_fitts_model(&session), Err(CalibrationError::DegenerateGeometry(_))));
    }

    #[test]
    fn collinear_taps_are_degenerate() {
        let truth = FittsModel { a: 0.2, b: 0.15, rest_x: 200.0, rest_y: 600.0, rest_z: 160.0 };
        let mut session = synthetic_session(device(), &truth, 1, jitter, |_| 0.0);
        for (k, s) in session.samples.iter_mut().enumerate() {
            s.tap = Point2::new(100.0, 10.0 + k as f64);
            s.time = truth.predict_time(s.tap);
        }
        assert!(matches!(fit_fitts_model(&session), Err(CalibrationError::DegenerateGeometry(_))));
    }

    #[test]
    fn too_few_samples() {
        let truth = FittsModel { a: 0.2, b: 0.15, rest_x: 200.0, rest_y: 600.0, rest_z: 160.0 };
        let mut session = synthetic_session(device(), &truth, 1, jitter, |_| 0.0);
        session.samples.truncate(4);
        assert_eq!(
            fit_fitts_model(&session),
            Err(CalibrationError::TooFewSamples { samples: 4, targets: 4 })
        );
        // many samples but only three targets
        let three: Vec<_> = (0..12).map(|k| session.samples[k % 3]).collect();
        session.samples = three;
        assert!(matches!(fit_fitts_model(&session), Err(CalibrationError::TooFewSamples { targets: 3, .. })));
    }

    #[test]
    fn rest_height_respects_bound() {
        // a rest position far above the allowed ceiling pins z to the bound
        let dev = device();
        let truth = FittsModel { a: 0.1, b: 0.2, rest_x: 180.0, rest_y: 500.0, rest_z: 2000.0 };
        let session = synthetic_session(dev, &truth, 2, jitter, |_| 0.0);
        let fit = fit_fitts_model(&session).unwrap();
        assert!(fit.model.rest_z <= dev.max_rest_height() + 1e-9);
        assert!(fit.model.rest_z >= 0.0);
    }

    #[test]
    fn hand_computed_adjusted_error() {
        assert_eq!(interpolate_error(4.0, 16.0, 8.0, 16.0), 10.0);
        assert_eq!(interpolate_error(4.0, 16.0, 0.0, 16.0), 16.0);
        assert_eq!(interpolate_error(4.0, 16.0, 16.0, 16.0), 4.0);
        assert_eq!(interpolate_error(7.0, 7.0, 3.3, 16.0), 7.0);
    }

    #[test]
    fn adjusted_error_through_model() {
        // a = 0, b = 1, t_n = 3 -> d = 8; A = 16 with the rest point 16 pt above the target
        let model = FittsModel { a: 0.0, b: 1.0, rest_x: 100.0, rest_y: 100.0, rest_z: 16.0 };
        let sample = CalibrationSample {
            target: Point2::new(96.0, 100.0),
            tap: Point2::new(100.0, 100.0),
            time: 4.0,
        };
        let e = adjusted_error(&sample, &model, 3.0, InitialRadiusPolicy::Constant(16.0)).unwrap();
        assert_eq!(e.epsilon_x, 10.0);
        // r_f = 0 in y -> 8, above the floor
        assert_eq!(e.epsilon_y, 8.0);
        assert_eq!(e.location, sample.target);
    }

    #[test]
    fn adjusted_error_rejects_bad_model() {
        let model = FittsModel { a: 0.0, b: 0.0, rest_x: 0.0, rest_y: 0.0, rest_z: 10.0 };
        let sample = CalibrationSample { target: Point2::new(1.0, 1.0), tap: Point2::new(1.0, 1.0), time: 1.0 };
        assert_eq!(
            adjusted_error(&sample, &model, 1.0, InitialRadiusPolicy::TravelDistance),
            Err(CalibrationError::InvalidModel)
        );
    }

    #[test]
    fn distance_is_clamped_to_travel() {
        // huge t_n -> d clamps to A -> epsilon = r_f
        let model: FittsModel<f64> = FittsModel { a: 0.0, b: 0.1, rest_x: 0.0, rest_y: 0.0, rest_z: 30.0 };
        let sample = CalibrationSample { target: Point2::new(40.0, 0.0), tap: Point2::new(43.0, 2.0), time: 1.0 };
        let e = adjusted_error(&sample, &model, 100.0, InitialRadiusPolicy::Constant(50.0)).unwrap();
        assert!((e.epsilon_x - 3.0).abs() < 1e-12);
        assert!((e.epsilon_y - 2.0).abs() < 1e-12);
        // t_n far below a -> d = 0 -> epsilon = r_i
        let e = adjusted_error(&sample, &model, -100.0, InitialRadiusPolicy::Constant(50.0)).unwrap();
        assert!((e.epsilon_x - 50.0).abs() < 1e-9);
    }

    #[test]
    fn aggregation() {
        let p = |x, y, ex, ey| AdjustedErrorSample { location: Point2::new(x, y), epsilon_x: ex, epsilon_y: ey };
        let out = aggregate_per_target(&[p(1.0, 1.0, 2.0, 1.0), p(1.0, 1.0, 4.0, 3.0)]);
        assert_eq!(out, vec![p(1.0, 1.0, 3.0, 2.0)]);
        let single = [p(5.0, 2.0, 7.0, 7.0)];
        assert_eq!(aggregate_per_target(&single), single.to_vec());
        // row-major: y first, then x
        let out = aggregate_per_target(&[p(9.0, 1.0, 1.0, 1.0), p(1.0, 5.0, 1.0, 1.0), p(1.0, 1.0, 1.0, 1.0)]);
        let locs: Vec<_> = out.iter().map(|s| (s.location.x, s.location.y)).collect();
        assert_eq!(locs, vec![(1.0, 1.0), (9.0, 1.0), (1.0, 5.0)]);
    }

    #[test]
    fn aggregation_cardinality_on_grid() {
        let centers = grid_centers(&device(), 4, 8);
        let samples: Vec<_> = centers
            .iter()
            .chain(centers.iter())
            .map(|c| AdjustedErrorSample { location: *c, epsilon_x: 1.0, epsilon_y: 2.0 })
            .collect();
        assert_eq!(samples.len(), 64);
        assert_eq!(aggregate_per_target(&samples).len(), 32);
    }

    #[test]
    fn session_validation() {
        let truth = FittsModel { a: 0.2, b: 0.15, rest_x: 200.0, rest_y: 600.0, rest_z: 160.0 };
        let mut session = synthetic_session(device(), &truth, 1, jitter, |_| 0.0);
        assert!(session.validate().is_ok());
        session.samples[3].target.x += 7.0;
        assert!(session.validate().is_err());
    }
}
