use std::path::{Path, PathBuf};
use std::sync::Arc;

use colbreak_core::{BreakageConfig, BreakageLaw, CollisionKernel, DensityField, GridSpec, SolverConfig, Tolerances};
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Contents of a run configuration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Seed of the random fields used by `oracle-compare`.
    #[serde(default = "default_seed")]
    pub seed: u64,
    pub kernel: CollisionKernel,
    pub breakage: BreakageConfig,
    #[serde(default)]
    pub grid: GridSpec,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub initial: InitialConfig,
    #[serde(default)]
    pub simulate: SimulateConfig,
}

fn default_seed() -> u64 {
    20240607
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Csv,
    Json,
    Table,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub directory: PathBuf,
    pub formats: Vec<Format>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { directory: PathBuf::from("out"), formats: vec![Format::Csv, Format::Json, Format::Table] }
    }
}

impl OutputConfig {
    pub fn wants(&self, f: Format) -> bool {
        self.formats.contains(&f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Shape {
    /// `e^(-x)`.
    #[default]
    Exponential,
    /// Two log-normal bumps centered at 0.2 and 2.
    TwoBump,
    /// A field stored with `write_csv`; its time stamp becomes the start time.
    Csv,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InitialConfig {
    pub shape: Shape,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum SimMode {
    #[default]
    Physical,
    Rescaled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateConfig {
    pub mode: SimMode,
    /// Final `t` (physical) or `tau` (rescaled).
    pub t_end: f64,
    /// Number of snapshots, spaced evenly in `ln(1 + t)`.
    pub snapshots: usize,
    /// Profile for the self-similar distance; computed when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub profile: Option<PathBuf>,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self { mode: SimMode::Physical, t_end: 10.0, snapshots: 10, profile: None }
    }
}

/// Validated configuration with derived objects.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub config: RunConfig,
    pub base_dir: PathBuf,
    pub kernel: CollisionKernel,
    pub law: BreakageLaw,
}

impl Resolved {
    pub fn grid(&self) -> Result<Arc<colbreak_core::Grid>, CliError> {
        Ok(Arc::new(self.config.grid.build().map_err(|e| CliError::Config(format!("grid: {e}")))?))
    }

    pub fn resolve_path(&self, p: &Path) -> PathBuf {
        if p.is_relative() {
            self.base_dir.join(p)
        } else {
            p.to_path_buf()
        }
    }

    /// Initial field and start time.
    pub fn initial(&self) -> Result<(DensityField, f64), CliError> {
        let grid = self.grid()?;
        let cfg = &self.config.initial;
        let field = match cfg.shape {
            Shape::Exponential => DensityField::from_fn(grid, |x| (-x).exp()),
            Shape::TwoBump => DensityField::from_fn(grid, |x| {
                let bump = |c: f64| (-(x / c).ln().powi(2) / 0.5).exp();
                bump(0.2) + bump(2.0)
            }),
            Shape::Csv => {
                let p = cfg
                    .path
                    .as_ref()
                    .ok_or_else(|| CliError::Config("initial.shape = \"csv\" requires initial.path".into()))?;
                let (f, t) = DensityField::load(&self.resolve_path(p))
                    .map_err(|e| CliError::Config(format!("initial field {}: {e}", p.display())))?;
                if !f.grid().same_as(&grid) {
                    return Err(CliError::Config(format!(
                        "initial field {} does not match the configured grid",
                        p.display()
                    )));
                }
                return Ok((f, t.unwrap_or(0.0)));
            }
        }
        .map_err(|e| CliError::Config(e.to_string()))?;
        Ok((field, 0.0))
    }
}

pub fn parse(text: &str, base_dir: &Path) -> Result<Resolved, CliError> {
    let config: RunConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
    resolve(config, base_dir)
}

pub fn resolve(config: RunConfig, base_dir: &Path) -> Result<Resolved, CliError> {
    let law = config.breakage.build(Some(base_dir)).map_err(|e| CliError::Config(format!("breakage: {e}")))?;
    config.solver.validate().map_err(|e| CliError::Config(format!("solver: {e}")))?;
    config.grid.build().map_err(|e| CliError::Config(format!("grid: {e}")))?;
    if config.output.formats.is_empty() {
        return Err(CliError::Config("output.formats must not be empty".into()));
    }
    if !(config.simulate.t_end > 0.0) {
        return Err(CliError::Config("simulate.t_end must be positive".into()));
    }
    let kernel = config.kernel;
    Ok(Resolved { config, base_dir: base_dir.to_path_buf(), kernel, law })
}

pub fn load(path: &Path) -> Result<Resolved, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    parse(&text, &base)
}
