//! Spatial difficulty map: per-axis adjusted-error fields over the screen,
//! stored as tensor-product polynomials in normalized coordinates
//! `(u, v) = (x / W, y / H)`.

use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::calibration::{AdjustedErrorSample, DeviceMetrics, InitialRadiusPolicy, DEFAULT_T_N, EPSILON_MIN};
use crate::geometry::Point2;
use crate::linalg::Svd;
use crate::num::Scalar;

pub const DEFAULT_DEGREE: usize = 3;
/// Fits whose design matrix is worse conditioned than this are rejected.
pub const MAX_CONDITION: f64 = 1e10;

const PRESET_LOW: f64 = 4.0;
const PRESET_HIGH: f64 = 16.0;
const PRESET_UNIFORM: f64 = 8.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MapError {
    #[error("too few points: need {need}, got {got}")]
    TooFewPoints { need: usize, got: usize },
    #[error("ill-conditioned fit (condition number {condition:e}); lower the degree")]
    IllConditioned { condition: f64 },
    #[error("unknown preset '{0}'")]
    UnknownPreset(String),
    #[error("invalid map: {0}")]
    Invalid(String),
}

/// Where a map came from, kept alongside the coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
#[serde(bound = "F: Scalar")]
pub enum Provenance<F> {
    Fitted {
        points: usize,
        residual_rms_x: F,
        residual_rms_y: F,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        r_i_policy: Option<InitialRadiusPolicy<F>>,
    },
    Synthetic {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        note: Option<String>,
    },
    Preset {
        name: String,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Preset {
    Uniform,
    HardTop,
    HardLeft,
    HardRight,
    HardCorners,
}

impl Preset {
    pub const ALL: [Preset; 5] = [Preset::Uniform, Preset::HardTop, Preset::HardLeft, Preset::HardRight, Preset::HardCorners];

    pub fn name(self) -> &'static str {
        match self {
            Preset::Uniform => "uniform",
            Preset::HardTop => "hard-top",
            Preset::HardLeft => "hard-left",
            Preset::HardRight => "hard-right",
            Preset::HardCorners => "hard-corners",
        }
    }
}

impl FromStr for Preset {
    type Err = MapError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Preset::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| MapError::UnknownPreset(s.to_string()))
    }
}

/// Map value and its spatial derivatives (per screen point) at one location.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MapSample<F> {
    pub epsilon_x: F,
    pub epsilon_y: F,
    /// `[∂ε_x/∂x, ∂ε_x/∂y]`, zero where clamping is active.
    pub grad_x: [F; 2],
    /// `[∂ε_y/∂x, ∂ε_y/∂y]`.
    pub grad_y: [F; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "F: Scalar")]
pub struct DifficultyMap<F> {
    pub screen: DeviceMetrics<F>,
    pub t_n: F,
    pub degree_x: usize,
    pub degree_y: usize,
    /// `(degree_y + 1) × (degree_x + 1)`; entry `[j][i]` multiplies `u^i v^j`.
    pub coeffs_x: Vec<Vec<F>>,
    pub coeffs_y: Vec<Vec<F>>,
    pub epsilon_min: F,
    pub epsilon_max: F,
    pub provenance: Provenance<F>,
}

impl<F: Scalar> DifficultyMap<F> {
    pub fn default_epsilon_max(screen: &DeviceMetrics<F>) -> F {
        F::lit(0.5) * screen.screen_width.min(screen.screen_height)
    }

    /// Constant field `c` on both axes.
    pub fn uniform(screen: DeviceMetrics<F>, c: F) -> Self {
        Self {
            screen,
            t_n: F::lit(DEFAULT_T_N),
            degree_x: 0,
            degree_y: 0,
            coeffs_x: vec![vec![c]],
            coeffs_y: vec![vec![c]],
            epsilon_min: F::lit(EPSILON_MIN),
            epsilon_max: Self::default_epsilon_max(&screen),
            provenance: Provenance::Synthetic { note: None },
        }
    }

    pub fn validate(&self) -> Result<(), MapError> {
        let shape_ok = |c: &Vec<Vec<F>>| {
            c.len() == self.degree_y + 1 && c.iter().all(|row| row.len() == self.degree_x + 1)
        };
        if !shape_ok(&self.coeffs_x) || !shape_ok(&self.coeffs_y) {
            return Err(MapError::Invalid("coefficient matrix shape does not match degrees".into()));
        }
        if self.coeffs_x.iter().chain(&self.coeffs_y).flatten().any(|c| !c.is_finite()) {
            return Err(MapError::Invalid("coefficients must be finite".into()));
        }
        if !(self.epsilon_min > F::zero() && self.epsilon_min <= self.epsilon_max) {
            return Err(MapError::Invalid("need 0 < epsilon_min <= epsilon_max".into()));
        }
        self.screen.validate().map_err(MapError::Invalid)
    }

    fn normalized(&self, p: Point2<F>) -> (F, F, bool, bool) {
        let (w, h) = (self.screen.screen_width, self.screen.screen_height);
        let x = p.x.max(F::zero()).min(w);
        let y = p.y.max(F::zero()).min(h);
        // derivative vanishes along an axis whose coordinate was clamped
        (x / w, y / h, x == p.x, y == p.y)
    }

    fn clamp_eps(&self, e: F) -> (F, bool) {
        if e < self.epsilon_min {
            (self.epsilon_min, false)
        } else if e > self.epsilon_max || e.is_nan() {
            (self.epsilon_max, false)
        } else {
            (e, true)
        }
    }

    /// Adjusted error `(ε_x, ε_y)` at a screen location, clamped to the
    /// screen and to `[epsilon_min, epsilon_max]`.
    pub fn evaluate(&self, p: Point2<F>) -> (F, F) {
        let (u, v, _, _) = self.normalized(p);
        let ex = poly_value(&self.coeffs_x, u, v);
        let ey = poly_value(&self.coeffs_y, u, v);
        (self.clamp_eps(ex).0, self.clamp_eps(ey).0)
    }

    pub fn sample(&self, p: Point2<F>) -> MapSample<F> {
        let (u, v, free_x, free_y) = self.normalized(p);
        let (w, h) = (self.screen.screen_width, self.screen.screen_height);
        let field = |coeffs: &Vec<Vec<F>>| {
            let (du, dv) = poly_gradient(coeffs, u, v);
            let (val, free) = self.clamp_eps(poly_value(coeffs, u, v));
            let gx = if free && free_x { du / w } else { F::zero() };
            let gy = if free && free_y { dv / h } else { F::zero() };
            (val, [gx, gy])
        };
        let (epsilon_x, grad_x) = field(&self.coeffs_x);
        let (epsilon_y, grad_y) = field(&self.coeffs_y);
        MapSample { epsilon_x, epsilon_y, grad_x, grad_y }
    }
}

fn poly_value<F: Scalar>(coeffs: &[Vec<F>], u: F, v: F) -> F {
    // Horner in v over rows, each row Horner in u
    coeffs.iter().rev().fold(F::zero(), |acc, row| {
        acc * v + row.iter().rev().fold(F::zero(), |a, &c| a * u + c)
    })
}

fn poly_gradient<F: Scalar>(coeffs: &[Vec<F>], u: F, v: F) -> (F, F) {
    let mut du = F::zero();
    let mut dv = F::zero();
    let mut vp = F::one();
    let mut vp_prev = F::zero();
    for (j, row) in coeffs.iter().enumerate() {
        let mut up = F::one();
        let mut up_prev = F::zero();
        for (i, &c) in row.iter().enumerate() {
            du = du + c * F::lit(i as f64) * up_prev * vp;
            dv = dv + c * up * F::lit(j as f64) * vp_prev;
            up_prev = up;
            up = up * u;
        }
        vp_prev = vp;
        vp = vp * v;
    }
    (du, dv)
}

/// Least-squares fit of both error fields with a tensor-product polynomial
/// of the given degree in each coordinate.
pub fn fit_map<F: Scalar>(
    points: &[AdjustedErrorSample<F>],
    screen: DeviceMetrics<F>,
    degree: usize,
) -> Result<DifficultyMap<F>, MapError> {
    screen.validate().map_err(MapError::Invalid)?;
    let ncoef = (degree + 1) * (degree + 1);
    if points.len() < ncoef {
        return Err(MapError::TooFewPoints { need: ncoef, got: points.len() });
    }
    let (w, h) = (screen.screen_width, screen.screen_height);
    let mut design = Vec::with_capacity(points.len() * ncoef);
    for p in points {
        let u = p.location.x / w;
        let v = p.location.y / h;
        let mut vp = F::one();
        for _j in 0..=degree {
            let mut up = F::one();
            for _i in 0..=degree {
                design.push(up * vp);
                up = up * u;
            }
            vp = vp * v;
        }
    }
    let svd = Svd::new(&design, points.len(), ncoef);
    let condition = svd.condition_number();
    if !(condition.as_f64() <= MAX_CONDITION) {
        return Err(MapError::IllConditioned { condition: condition.as_f64() });
    }
    let rcond = F::epsilon() * F::lit(points.len() as f64);
    let bx: Vec<F> = points.iter().map(|p| p.epsilon_x).collect();
    let by: Vec<F> = points.iter().map(|p| p.epsilon_y).collect();
    let cx = svd.solve(&bx, rcond);
    let cy = svd.solve(&by, rcond);
    let rms = |coef: &[F], target: &[F]| {
        let n = F::lit(target.len() as f64);
        let ss: F = design
            .chunks(ncoef)
            .zip(target)
            .map(|(row, t)| {
                let fit: F = row.iter().zip(coef).map(|(a, c)| *a * *c).sum();
                (fit - *t) * (fit - *t)
            })
            .sum();
        (ss / n).sqrt()
    };
    let provenance = Provenance::Fitted {
        points: points.len(),
        residual_rms_x: rms(&cx, &bx),
        residual_rms_y: rms(&cy, &by),
        r_i_policy: None,
    };
    let to_matrix = |flat: Vec<F>| flat.chunks(degree + 1).map(|r| r.to_vec()).collect::<Vec<_>>();
    Ok(DifficultyMap {
        screen,
        t_n: F::lit(DEFAULT_T_N),
        degree_x: degree,
        degree_y: degree,
        coeffs_x: to_matrix(cx),
        coeffs_y: to_matrix(cy),
        epsilon_min: F::lit(EPSILON_MIN),
        epsilon_max: DifficultyMap::default_epsilon_max(&screen),
        provenance,
    })
}

/// Built-in profiles: linear ramps (quadratic bowl for `hard-corners`)
/// between 4 pt in the easy region and 16 pt in the hard one.
pub fn preset_map<F: Scalar>(name: &str, screen: DeviceMetrics<F>) -> Result<DifficultyMap<F>, MapError> {
    let preset: Preset = name.parse()?;
    Ok(preset.build(screen))
}

impl Preset {
    pub fn build<F: Scalar>(self, screen: DeviceMetrics<F>) -> DifficultyMap<F> {
        let lo = F::lit(PRESET_LOW);
        let hi = F::lit(PRESET_HIGH);
        let span = hi - lo;
        let z = F::zero();
        let (degree, coeffs) = match self {
            Preset::Uniform => (0, vec![vec![F::lit(PRESET_UNIFORM)]]),
            // ε = hi − span·v
            Preset::HardTop => (1, vec![vec![hi, z], vec![-span, z]]),
            // ε = hi − span·u
            Preset::HardLeft => (1, vec![vec![hi, -span], vec![z, z]]),
            // ε = lo + span·u
            Preset::HardRight => (1, vec![vec![lo, span], vec![z, z]]),
            // ε = lo + span/2·((2u − 1)² + (2v − 1)²)
            Preset::HardCorners => {
                let two = F::lit(2.0);
                (
                    2,
                    vec![
                        vec![hi, -two * span, two * span],
                        vec![-two * span, z, z],
                        vec![two * span, z, z],
                    ],
                )
            }
        };
        DifficultyMap {
            screen,
            t_n: F::lit(DEFAULT_T_N),
            degree_x: degree,
            degree_y: degree,
            coeffs_x: coeffs.clone(),
            coeffs_y: coeffs,
            epsilon_min: F::lit(EPSILON_MIN),
            epsilon_max: DifficultyMap::default_epsilon_max(&screen),
            provenance: Provenance::Preset { name: self.name().to_string() },
        }
    }
}
