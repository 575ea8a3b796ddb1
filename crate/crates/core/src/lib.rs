//! Touch-oriented layout refinement.
//!
//! A per-user difficulty map is fitted from tap calibration data
//! ([`calibration`], [`difficulty_map`]). Layouts are scored by the expected
//! probability of hitting each element ([`scoring`]) and refined by a
//! constrained gradient optimizer ([`constraints`], [`optimizer`]). The
//! screenshot is then re-rendered to match ([`renderer`]).
//!
//! Numerical code is generic over [`num::Scalar`] (`f32` or `f64`); the
//! aliases at the crate root fix the scalar to `f64`.

pub mod calibration;
pub mod constraints;
pub mod difficulty_map;
pub mod geometry;
pub mod io;
pub mod layout;
pub mod linalg;
pub mod num;
pub mod optimizer;
pub mod pipeline;
pub mod raster;
pub mod renderer;
pub mod scoring;

pub use num::Scalar;

pub type Point2 = geometry::Point2<f64>;
pub type BBox = geometry::BBox<f64>;
pub type DeviceMetrics = calibration::DeviceMetrics<f64>;
pub type CalibrationSample = calibration::CalibrationSample<f64>;
pub type CalibrationSession = calibration::CalibrationSession<f64>;
pub type FittsModel = calibration::FittsModel<f64>;
pub type DifficultyMap = difficulty_map::DifficultyMap<f64>;
pub type UiElement = layout::UiElement<f64>;
pub type Layout = layout::Layout<f64>;
pub type Score = scoring::Score<f64>;
pub type ConstraintSet = constraints::ConstraintSet<f64>;
pub type OptimizerConfig = optimizer::OptimizerConfig<f64>;
pub type RegionMapping = optimizer::RegionMapping<f64>;
pub type RefinementResult = optimizer::RefinementResult<f64>;
