//! Subcommands and their exit codes: 2 for unusable input, 3 when a fit
//! fails, 4 when the optimizer aborts.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use reflow_core::calibration::InitialRadiusPolicy;
use reflow_core::constraints::{extract_constraints, DEFAULT_ALIGN_TOLERANCE};
use reflow_core::difficulty_map::{preset_map, Preset, DEFAULT_DEGREE};
use reflow_core::io::{self, IoError};
use reflow_core::pipeline::{
    self, ConstraintSource, Estimator, FailureClass, FitOptions, PipelineError, RefineArtifacts, RefineOptions,
    DEFAULT_SEED,
};
use reflow_core::scoring::{ScoringConfig, DEFAULT_MC_SAMPLES};
use reflow_core::{CalibrationSession, ConstraintSet, DifficultyMap, Layout, OptimizerConfig, RegionMapping};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error("{0}")]
    Output(IoError),
    #[error("{0}")]
    Server(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Pipeline(e) => match e.class() {
                FailureClass::Input => 2,
                FailureClass::Fit => 3,
                FailureClass::Optimizer => 4,
            },
            CliError::Output(_) | CliError::Server(_) => 1,
        }
    }
}

impl From<IoError> for CliError {
    fn from(e: IoError) -> Self {
        CliError::Pipeline(PipelineError::Io(e))
    }
}

#[derive(Debug, Parser)]
#[command(name = "reflow", version, about = "Personalized touch-layout refinement")]
pub struct Cli {
    /// Seed for Monte Carlo estimates.
    #[arg(long, global = true, env = "REFLOW_SEED", default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a difficulty map from a calibration log.
    Fit(FitArgs),
    /// Score a layout under a difficulty map.
    Score(ScoreArgs),
    /// Refine a layout and write the refined layout, mapping and trace.
    Refine(RefineArgs),
    /// Re-render a screenshot under a region mapping.
    Render(RenderArgs),
    /// Extract ordering and alignment constraints from a layout.
    Extract(ExtractArgs),
    /// List the built-in difficulty maps, or write one to a file.
    Presets(PresetArgs),
    /// Serve the HTTP API and the companion web UI.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct MapArgs {
    /// Difficulty-map file.
    #[arg(long, conflicts_with = "preset", required_unless_present = "preset")]
    pub map: Option<PathBuf>,
    /// Built-in map (uniform, hard-top, hard-left, hard-right, hard-corners).
    #[arg(long)]
    pub preset: Option<String>,
}

impl MapArgs {
    fn load(&self, layout: &Layout) -> Result<DifficultyMap, PipelineError> {
        match (&self.map, &self.preset) {
            (Some(path), _) => {
                let map: DifficultyMap = io::read_document(path)?;
                map.validate()?;
                Ok(map)
            }
            (None, Some(name)) => Ok(preset_map(name, layout.screen)?),
            (None, None) => unreachable!("clap requires one of --map/--preset"),
        }
    }
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Calibration log.
    pub log: PathBuf,
    /// Normalized selection time in seconds.
    #[arg(long = "t-n", default_value_t = reflow_core::calibration::DEFAULT_T_N)]
    pub t_n: f64,
    /// Initial error radius: `travel`, `constant:<pt>` or `multiple:<k>`.
    #[arg(long, default_value = "travel", value_parser = parse_policy)]
    pub r_i_policy: InitialRadiusPolicy<f64>,
    /// Polynomial degree per axis.
    #[arg(long, default_value_t = DEFAULT_DEGREE)]
    pub degree: usize,
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
}

pub fn parse_policy(s: &str) -> Result<InitialRadiusPolicy<f64>, String> {
    let num = |v: &str| v.parse::<f64>().map_err(|e| format!("{v}: {e}"));
    match s.split_once(':') {
        None if s == "travel" => Ok(InitialRadiusPolicy::TravelDistance),
        Some(("constant", v)) => Ok(InitialRadiusPolicy::Constant(num(v)?)),
        Some(("multiple", v)) => Ok(InitialRadiusPolicy::MultipleOfDistance(num(v)?)),
        _ => Err(format!("unknown policy '{s}' (travel, constant:<pt>, multiple:<k>)")),
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum EstimatorArg {
    ClosedForm,
    MonteCarlo,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    pub layout: PathBuf,
    #[command(flatten)]
    pub map: MapArgs,
    #[arg(long, value_enum, default_value_t = EstimatorArg::ClosedForm)]
    pub estimator: EstimatorArg,
    /// Monte Carlo samples per element.
    #[arg(long, default_value_t = DEFAULT_MC_SAMPLES)]
    pub n: usize,
    /// Also write the report to `<out-dir>/score.json`.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RefineArgs {
    pub layout: PathBuf,
    #[command(flatten)]
    pub map: MapArgs,
    #[arg(long)]
    pub lambda_reg: Option<f64>,
    #[arg(long)]
    pub max_steps: Option<usize>,
    /// Refine without ordering or alignment constraints.
    #[arg(long, conflicts_with = "constraints")]
    pub no_constraints: bool,
    /// Use this constraint file instead of extracting one.
    #[arg(long)]
    pub constraints: Option<PathBuf>,
    /// Alignment tolerance in points.
    #[arg(long, default_value_t = DEFAULT_ALIGN_TOLERANCE)]
    pub align_tol: f64,
    /// Screenshot of the original layout; enables re-rendering.
    #[arg(long)]
    pub screenshot: Option<PathBuf>,
    /// Also write a before/after comparison image.
    #[arg(long, requires = "screenshot")]
    pub side_by_side: bool,
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
}

impl RefineArgs {
    pub fn optimizer_config(&self) -> OptimizerConfig {
        let mut cfg = OptimizerConfig::default();
        if let Some(l) = self.lambda_reg {
            cfg.lambda_reg = l;
        }
        if let Some(s) = self.max_steps {
            cfg.max_steps = s;
        }
        cfg
    }
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    #[arg(long)]
    pub screenshot: PathBuf,
    #[arg(long)]
    pub mapping: PathBuf,
    /// Original layout: sets the pixel scale and supplies element text.
    #[arg(long)]
    pub layout: Option<PathBuf>,
    /// Write original and rendered images next to each other.
    #[arg(long)]
    pub side_by_side: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ExtractArgs {
    pub layout: PathBuf,
    #[arg(long, default_value_t = DEFAULT_ALIGN_TOLERANCE)]
    pub align_tol: f64,
    /// Keep transitively implied orderings.
    #[arg(long)]
    pub no_reduce: bool,
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct PresetArgs {
    /// Write this preset for the screen of `--layout` to `<out-dir>/<name>.json`.
    #[arg(long, requires = "layout")]
    pub name: Option<String>,
    #[arg(long)]
    pub layout: Option<PathBuf>,
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
    /// Directory with the web UI build.
    #[arg(long)]
    pub static_dir: Option<PathBuf>,
}

fn write(dir: &Path, name: &str, bytes: &[u8]) -> Result<PathBuf, CliError> {
    std::fs::create_dir_all(dir)
        .map_err(|source| CliError::Output(IoError::File { path: dir.display().to_string(), source }))?;
    let path = dir.join(name);
    io::write_bytes(&path, bytes).map_err(CliError::Output)?;
    Ok(path)
}

fn read_bytes(path: &Path) -> Result<Vec<u8>, CliError> {
    std::fs::read(path).map_err(|source| IoError::File { path: path.display().to_string(), source }.into())
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Fit(a) => cmd_fit(&a),
        Command::Score(a) => cmd_score(&a, cli.seed),
        Command::Refine(a) => cmd_refine(&a, cli.seed),
        Command::Render(a) => cmd_render(&a),
        Command::Extract(a) => cmd_extract(&a),
        Command::Presets(a) => cmd_presets(&a),
        Command::Serve(a) => crate::server::serve(&a.host, a.port, a.static_dir.as_deref()),
    }
}

pub fn cmd_fit(a: &FitArgs) -> Result<(), CliError> {
    let session: CalibrationSession = io::read_document(&a.log)?;
    let opts = FitOptions { t_n: a.t_n, r_i_policy: a.r_i_policy, degree: a.degree };
    let out = pipeline::fit_session(&session, &opts)?;
    let path = write(&a.out_dir, "map.json", io::to_json(&out.map).as_bytes())?;
    let m = &out.fit.model;
    println!("fitts: a={:.4} s  b={:.4} s/bit  rest=({:.1}, {:.1}, {:.1}) pt", m.a, m.b, m.rest_x, m.rest_y, m.rest_z);
    println!("fitts rms residual: {:.4} s ({} iterations)", out.fit.rms_residual, out.fit.iterations);
    if let reflow_core::difficulty_map::Provenance::Fitted { residual_rms_x, residual_rms_y, points, .. } =
        &out.map.provenance
    {
        println!("map rms residual over {points} targets: x={residual_rms_x:.3} pt  y={residual_rms_y:.3} pt");
    }
    println!("wrote {}", path.display());
    Ok(())
}

pub fn cmd_score(a: &ScoreArgs, seed: u64) -> Result<(), CliError> {
    let layout: Layout = io::read_document(&a.layout)?;
    let map = a.map.load(&layout)?;
    let estimator = match a.estimator {
        EstimatorArg::ClosedForm => Estimator::ClosedForm,
        EstimatorArg::MonteCarlo => Estimator::MonteCarlo,
    };
    let report = pipeline::score_layout(&layout, &map, estimator, a.n, seed, &ScoringConfig::default())?;
    let text = io::to_json(&report);
    print!("{text}");
    if let Some(dir) = &a.out_dir {
        write(dir, "score.json", text.as_bytes())?;
    }
    Ok(())
}

pub fn cmd_refine(a: &RefineArgs, seed: u64) -> Result<(), CliError> {
    let layout: Layout = io::read_document(&a.layout)?;
    let map = a.map.load(&layout)?;
    let constraints = if a.no_constraints {
        ConstraintSource::None
    } else if let Some(path) = &a.constraints {
        ConstraintSource::Given(io::read_document::<ConstraintSet>(path)?)
    } else {
        ConstraintSource::Extract { tolerance: a.align_tol }
    };
    let cfg = a.optimizer_config();
    let opts = RefineOptions { constraints, optimizer: cfg };
    let out = pipeline::refine_layout(&layout, &map, &opts)?;
    let art = out.artifacts(&cfg);
    write(&a.out_dir, RefineArtifacts::REFINED_LAYOUT, art.refined_layout.as_bytes())?;
    write(&a.out_dir, RefineArtifacts::MAPPING, art.mapping.as_bytes())?;
    write(&a.out_dir, RefineArtifacts::TRACE, art.trace.as_bytes())?;
    write(&a.out_dir, RefineArtifacts::CONSTRAINTS, art.constraints.as_bytes())?;
    if let Some(shot) = &a.screenshot {
        let png = read_bytes(shot)?;
        let scale = pipeline::raster_scale(png_width(&png)?, &layout);
        let rendered = pipeline::render_png(&png, scale, &out.result.mapping, Some(&layout), false)?;
        write(&a.out_dir, RefineArtifacts::RENDER, &rendered)?;
        if a.side_by_side {
            let both = pipeline::render_png(&png, scale, &out.result.mapping, Some(&layout), true)?;
            write(&a.out_dir, "comparison.png", &both)?;
        }
    }
    let mc = pipeline::score_layout(&out.result.refined, &map, Estimator::MonteCarlo, 10_000, seed, &cfg.scoring)?;
    println!("initial score: {:.6}", out.initial_score);
    println!("final score:   {:.6} (monte carlo n=10000 seed={seed}: {:.4})", out.final_score, mc.value);
    println!("steps: {}  stop: {}", out.result.trace.len() - 1, stop_name(out.stop_reason()));
    println!(
        "constraints: {} relative, {} alignment",
        out.constraints.relative.len(),
        out.constraints.alignment.len()
    );
    println!("wrote {}", a.out_dir.display());
    Ok(())
}

fn stop_name(s: reflow_core::optimizer::StopReason) -> &'static str {
    use reflow_core::optimizer::StopReason::*;
    match s {
        Converged => "converged",
        MaxSteps => "max_steps",
        UnresolvableOverlap => "unresolvable_overlap",
    }
}

fn png_width(png: &[u8]) -> Result<u32, CliError> {
    let r = reflow_core::raster::Raster::decode_png(png, 1.0).map_err(PipelineError::Raster)?;
    Ok(r.width)
}

pub fn cmd_render(a: &RenderArgs) -> Result<(), CliError> {
    let png = read_bytes(&a.screenshot)?;
    let mapping: RegionMapping = io::read_document(&a.mapping)?;
    let layout: Option<Layout> = a.layout.as_deref().map(io::read_document).transpose()?;
    let scale = match &layout {
        Some(l) => pipeline::raster_scale(png_width(&png)?, l),
        None => 1.0,
    };
    let out = pipeline::render_png(&png, scale, &mapping, layout.as_ref(), a.side_by_side)?;
    let dir = a.out.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = a.out.file_name().and_then(|n| n.to_str()).unwrap_or("refined.png");
    let path = write(dir, name, &out)?;
    println!("wrote {}", path.display());
    Ok(())
}

pub fn cmd_extract(a: &ExtractArgs) -> Result<(), CliError> {
    let layout: Layout = io::read_document(&a.layout)?;
    layout.validate().map_err(PipelineError::Layout)?;
    let mut set = extract_constraints(&layout, a.align_tol);
    if !a.no_reduce {
        set = set.reduced().map_err(PipelineError::Constraint)?;
    }
    let path = write(&a.out_dir, RefineArtifacts::CONSTRAINTS, io::to_json(&set).as_bytes())?;
    println!("{} relative, {} alignment", set.relative.len(), set.alignment.len());
    println!("wrote {}", path.display());
    Ok(())
}

pub fn cmd_presets(a: &PresetArgs) -> Result<(), CliError> {
    match (&a.name, &a.layout) {
        (Some(name), Some(layout)) => {
            let layout: Layout = io::read_document(layout)?;
            let map: DifficultyMap = preset_map(name, layout.screen).map_err(PipelineError::Map)?;
            let path = write(&a.out_dir, &format!("{name}.json"), io::to_json(&map).as_bytes())?;
            println!("wrote {}", path.display());
        }
        _ => {
            for p in Preset::ALL {
                println!("{}", p.name());
            }
        }
    }
    Ok(())
}
