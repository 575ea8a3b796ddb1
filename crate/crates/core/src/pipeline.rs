//! End-to-end stages shared by the command line and the HTTP service, so
//! both produce the same artifacts from the same inputs.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::calibration::{
    adjusted_error, aggregate_per_target, fit_fitts_model, AdjustedErrorSample, CalibrationError, CalibrationSession,
    FittsFit, InitialRadiusPolicy, DEFAULT_T_N,
};
use crate::constraints::{extract_constraints, ConstraintError, ConstraintSet, DEFAULT_ALIGN_TOLERANCE};
use crate::difficulty_map::{fit_map, DifficultyMap, MapError, Provenance, DEFAULT_DEGREE};
use crate::io::{self, IoError};
use crate::layout::{Layout, LayoutError};
use crate::optimizer::{refine, OptimizerConfig, RefineError, RefinementResult, RegionMapping, StopReason};
use crate::raster::{Raster, RasterError};
use crate::renderer::{render, render_with_text, RenderError};
use crate::scoring::{score_closed_form_with, score_monte_carlo_with, ElementScore, ScoreError, ScoringConfig};

pub const DEFAULT_SEED: u64 = 0;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Io(#[from] IoError),
    #[error(transparent)]
    Layout(#[from] LayoutError),
    #[error(transparent)]
    Calibration(#[from] CalibrationError),
    #[error(transparent)]
    Map(#[from] MapError),
    #[error(transparent)]
    Constraint(#[from] ConstraintError),
    #[error(transparent)]
    Score(#[from] ScoreError),
    #[error(transparent)]
    Refine(#[from] RefineError),
    #[error(transparent)]
    Render(#[from] RenderError),
    #[error(transparent)]
    Raster(#[from] RasterError),
}

/// Broad failure classes, used for exit codes and HTTP statuses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FailureClass {
    /// Malformed or inconsistent input.
    Input,
    /// A model or map could not be fitted.
    Fit,
    /// The optimizer aborted.
    Optimizer,
}

impl PipelineError {
    pub fn class(&self) -> FailureClass {
        match self {
            PipelineError::Calibration(CalibrationError::InvalidSession(_)) => FailureClass::Input,
            PipelineError::Calibration(_) | PipelineError::Map(MapError::TooFewPoints { .. } | MapError::IllConditioned { .. }) => {
                FailureClass::Fit
            }
            PipelineError::Refine(RefineError::NonFiniteObjective { .. }) => FailureClass::Optimizer,
            _ => FailureClass::Input,
        }
    }

    /// Stable snake_case identifier of the failure.
    pub fn reason(&self) -> &'static str {
        match self {
            PipelineError::Io(IoError::Version(_)) => "unsupported_version",
            PipelineError::Io(_) => "malformed_document",
            PipelineError::Layout(_) => "invalid_layout",
            PipelineError::Calibration(e) => match e {
                CalibrationError::TooFewSamples { .. } => "too_few_samples",
                CalibrationError::DegenerateGeometry(_) => "degenerate_geometry",
                CalibrationError::NonConvergence { .. } => "non_convergence",
                CalibrationError::InvalidModel => "invalid_model",
                CalibrationError::InvalidSession(_) => "invalid_session",
            },
            PipelineError::Map(e) => match e {
                MapError::TooFewPoints { .. } => "too_few_points",
                MapError::IllConditioned { .. } => "ill_conditioned",
                MapError::UnknownPreset(_) => "unknown_preset",
                MapError::Invalid(_) => "invalid_map",
            },
            PipelineError::Constraint(ConstraintError::CycleDetected(_)) => "constraint_cycle",
            PipelineError::Constraint(_) => "constraint_id_mismatch",
            PipelineError::Score(_) => "empty_layout",
            PipelineError::Refine(e) => match e {
                RefineError::ConstraintIdMismatch(_) => "constraint_id_mismatch",
                RefineError::NonFiniteObjective { .. } => "non_finite_objective",
                RefineError::EmptyLayout => "empty_layout",
            },
            PipelineError::Render(_) => "render_failed",
            PipelineError::Raster(_) => "invalid_image",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub t_n: f64,
    pub r_i_policy: InitialRadiusPolicy<f64>,
    pub degree: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self { t_n: DEFAULT_T_N, r_i_policy: InitialRadiusPolicy::default(), degree: DEFAULT_DEGREE }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitOutcome {
    pub fit: FittsFit<f64>,
    /// Per-target mean adjusted errors the map was fitted to.
    pub targets: Vec<AdjustedErrorSample<f64>>,
    pub map: DifficultyMap<f64>,
}

/// Calibration log to difficulty map.
pub fn fit_session(session: &CalibrationSession<f64>, opts: &FitOptions) -> Result<FitOutcome, PipelineError> {
    session.validate()?;
    let fit = fit_fitts_model(session)?;
    let adjusted = session
        .samples
        .iter()
        .map(|s| adjusted_error(s, &fit.model, opts.t_n, opts.r_i_policy))
        .collect::<Result<Vec<_>, _>>()?;
    let targets = aggregate_per_target(&adjusted);
    let mut map = fit_map(&targets, session.device, opts.degree)?;
    map.t_n = opts.t_n;
    if let Provenance::Fitted { r_i_policy, .. } = &mut map.provenance {
        *r_i_policy = Some(opts.r_i_policy);
    }
    Ok(FitOutcome { fit, targets, map })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Estimator {
    ClosedForm,
    MonteCarlo,
}

/// Score document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub value: f64,
    pub per_element: Vec<ElementScore<f64>>,
    pub estimator: Estimator,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl io::Document for ScoreReport {
    const VERSIONED: bool = false;
}

pub fn score_layout(
    layout: &Layout<f64>,
    map: &DifficultyMap<f64>,
    estimator: Estimator,
    n: usize,
    seed: u64,
    cfg: &ScoringConfig<f64>,
) -> Result<ScoreReport, PipelineError> {
    layout.validate()?;
    Ok(match estimator {
        Estimator::ClosedForm => {
            let s = score_closed_form_with(layout, map, cfg)?;
            ScoreReport { value: s.value, per_element: s.per_element, estimator, n: None, seed: None }
        }
        Estimator::MonteCarlo => {
            let s = score_monte_carlo_with(layout, map, n, seed, cfg)?;
            ScoreReport { value: s.value, per_element: s.per_element, estimator, n: Some(n), seed: Some(seed) }
        }
    })
}

/// Where refinement constraints come from.
#[derive(Debug, Clone, PartialEq)]
pub enum ConstraintSource {
    Extract { tolerance: f64 },
    Given(ConstraintSet<f64>),
    None,
}

impl Default for ConstraintSource {
    fn default() -> Self {
        ConstraintSource::Extract { tolerance: DEFAULT_ALIGN_TOLERANCE }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RefineOptions {
    pub constraints: ConstraintSource,
    pub optimizer: OptimizerConfig<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RefineOutcome {
    pub constraints: ConstraintSet<f64>,
    pub result: RefinementResult<f64>,
    pub initial_score: f64,
    pub final_score: f64,
}

/// Serialized outputs of a refinement run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RefineArtifacts {
    pub refined_layout: String,
    pub mapping: String,
    pub trace: String,
    pub constraints: String,
}

impl RefineArtifacts {
    pub const REFINED_LAYOUT: &'static str = "refined_layout.json";
    pub const MAPPING: &'static str = "mapping.json";
    pub const TRACE: &'static str = "trace.jsonl";
    pub const CONSTRAINTS: &'static str = "constraints.json";
    pub const RENDER: &'static str = "refined.png";
}

impl RefineOutcome {
    pub fn stop_reason(&self) -> StopReason {
        self.result.stop_reason
    }

    pub fn artifacts(&self, cfg: &OptimizerConfig<f64>) -> RefineArtifacts {
        RefineArtifacts {
            refined_layout: io::to_json(&self.result.refined),
            mapping: io::to_json(&self.result.mapping),
            trace: io::trace_to_jsonl(cfg, &self.result.trace),
            constraints: io::to_json(&self.constraints),
        }
    }
}

pub fn refine_layout(
    layout: &Layout<f64>,
    map: &DifficultyMap<f64>,
    opts: &RefineOptions,
) -> Result<RefineOutcome, PipelineError> {
    layout.validate()?;
    map.validate()?;
    let constraints = match &opts.constraints {
        ConstraintSource::Extract { tolerance } => extract_constraints(layout, *tolerance).reduced()?,
        ConstraintSource::Given(set) => {
            set.resolve(layout)?;
            set.clone().reduced()?
        }
        ConstraintSource::None => ConstraintSet::empty(DEFAULT_ALIGN_TOLERANCE),
    };
    let result = refine(layout, map, &constraints, &opts.optimizer)?;
    let scoring = &opts.optimizer.scoring;
    let initial_score = score_closed_form_with(layout, map, scoring)?.value;
    let final_score = score_closed_form_with(&result.refined, map, scoring)?.value;
    Ok(RefineOutcome { constraints, result, initial_score, final_score })
}

/// Pixels per point of a screenshot taken of `layout`'s screen.
pub fn raster_scale(png_width: u32, layout: &Layout<f64>) -> f64 {
    png_width as f64 / layout.screen.screen_width
}

/// Re-renders a PNG screenshot under `mapping`. When `elements` is given,
/// resized text elements are redrawn from their text.
pub fn render_png(
    png: &[u8],
    scale: f64,
    mapping: &RegionMapping<f64>,
    elements: Option<&Layout<f64>>,
    side_by_side: bool,
) -> Result<Vec<u8>, PipelineError> {
    let original = Raster::decode_png(png, scale)?;
    let out = match elements {
        Some(l) => render_with_text(&original, mapping, &l.elements)?,
        None => render(&original, mapping)?,
    };
    let out = if side_by_side { original.side_by_side(&out) } else { out };
    Ok(out.encode_png()?)
}
