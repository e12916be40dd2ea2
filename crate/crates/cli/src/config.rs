//! JSON run configurations and the sources they name.

use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use clap::ValueEnum;
use serde::Deserialize;
use supercaloric::closed_form::{normalize_mass, SolutionFamily};
use supercaloric::exponents::Medium;
use supercaloric::grid::{uniform_times, GridField, RadialGrid};
use supercaloric::harnack::{HarnackProbe, DEFAULT_C2};
use supercaloric::integrability::{Cylinder, Selector};
use supercaloric::solver::SolverConfig;

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum FamilyName {
    Sbb,
    Dbb,
    Ips,
    Power,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilySpec {
    pub family: FamilyName,
    #[serde(default)]
    pub q: Option<f64>,
    #[serde(default)]
    pub c: Option<f64>,
    #[serde(default)]
    pub zero_extend: bool,
}

impl FamilySpec {
    /// Unset constants default to the mass-one Barenblatt, `c = 1` for the
    /// degenerate profile and the canonical supersolution constant.
    pub fn build(&self, medium: Medium) -> Result<SolutionFamily, CliError> {
        let family = match self.family {
            FamilyName::Sbb => {
                let c = match self.c {
                    Some(c) => c,
                    None => normalize_mass(medium, 1.0)?,
                };
                SolutionFamily::singular_barenblatt(medium, c)?
            }
            FamilyName::Dbb => SolutionFamily::degenerate_barenblatt(medium, self.c.unwrap_or(1.0))?,
            FamilyName::Ips => {
                if self.c.is_some() {
                    return Err(CliError::Config("the point-source constant is fixed; drop c".into()));
                }
                SolutionFamily::infinite_point_source(medium)?
            }
            FamilyName::Power => {
                let q = self.q.ok_or_else(|| CliError::Config("family power needs q".into()))?;
                match self.c {
                    Some(c) => SolutionFamily::power(medium, q, c)?,
                    None => SolutionFamily::power_canonical(medium, q)?,
                }
            }
        };
        if self.q.is_some() && self.family != FamilyName::Power {
            return Err(CliError::Config("q only applies to family power".into()));
        }
        Ok(family.with_zero_extension(self.zero_extend))
    }
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    #[serde(default)]
    pub r_min: f64,
    pub r_max: f64,
    pub intervals: usize,
    /// Geometric spacing ratio; uniform when absent.
    #[serde(default)]
    pub ratio: Option<f64>,
}

impl GridSpec {
    pub fn build(&self, n: u32) -> Result<RadialGrid, CliError> {
        Ok(match self.ratio {
            Some(ratio) => RadialGrid::geometric(n, self.r_min, self.r_max, self.intervals, ratio)?,
            None => RadialGrid::uniform(n, self.r_min, self.r_max, self.intervals)?,
        })
    }
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeSpec {
    pub t0: f64,
    pub t1: f64,
    pub steps: usize,
}

impl TimeSpec {
    pub fn build(&self) -> Result<Vec<f64>, CliError> {
        if !(self.t1 > self.t0 && self.steps >= 1 && self.t0.is_finite() && self.t1.is_finite()) {
            return Err(CliError::Config("times need t0 < t1 and steps >= 1".into()));
        }
        Ok(uniform_times(self.t0, self.t1, self.steps))
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveConfig {
    pub medium: Medium,
    pub grid: GridSpec,
    pub times: TimeSpec,
    /// Closed form supplying the initial row and the Dirichlet traces.
    pub data: FamilySpec,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum ObstacleSpec {
    /// `height·(1 − (r/width)²)₊²`, constant in time.
    Bump { height: f64, width: f64 },
    Family {
        family: FamilyName,
        #[serde(default)]
        q: Option<f64>,
        #[serde(default)]
        c: Option<f64>,
        #[serde(default)]
        zero_extend: bool,
        #[serde(default)]
        cap: Option<f64>,
    },
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObstacleConfig {
    pub medium: Medium,
    pub grid: GridSpec,
    pub times: TimeSpec,
    pub obstacle: ObstacleSpec,
    #[serde(default = "obstacle_solver")]
    pub solver: SolverConfig,
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub contact_output: Option<PathBuf>,
}

/// Projected sweeps count against `picard_max`, which needs more room than
/// a Picard loop.
fn obstacle_solver() -> SolverConfig {
    SolverConfig {
        picard_max: 200_000,
        ..SolverConfig::default()
    }
}

impl ObstacleConfig {
    pub fn obstacle_field(&self) -> Result<GridField, CliError> {
        let grid = self.grid.build(self.medium.n())?;
        let times = self.times.build()?;
        match self.obstacle {
            ObstacleSpec::Bump { height, width } => {
                if !(height.is_finite() && width > 0.0) {
                    return Err(CliError::Config("bump needs finite height and width > 0".into()));
                }
                let row: Vec<f64> = grid
                    .nodes()
                    .iter()
                    .map(|r| height * (1.0 - (r / width).powi(2)).max(0.0).powi(2))
                    .collect();
                let values = row.repeat(times.len());
                Ok(GridField::from_values(self.medium, grid, times, values, "bump obstacle")?)
            }
            ObstacleSpec::Family {
                family,
                q,
                c,
                zero_extend,
                cap,
            } => {
                let spec = FamilySpec {
                    family,
                    q,
                    c,
                    zero_extend,
                };
                Ok(GridField::sample(&spec.build(self.medium)?, grid, times, cap)?)
            }
        }
    }
}

/// A closed form (needs `medium`) or a stored grid field.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum SourceSpec {
    Field { field: PathBuf },
    Family(FamilySpec),
}

pub enum Source {
    Family(SolutionFamily),
    Field(GridField),
}

impl Source {
    pub fn as_evaluable(&self) -> &dyn supercaloric::source::Evaluable {
        match self {
            Source::Family(f) => f,
            Source::Field(f) => f,
        }
    }
}

impl SourceSpec {
    pub fn load(&self, medium: Option<Medium>, base: &Path) -> Result<Source, CliError> {
        match self {
            SourceSpec::Field { field } => Ok(Source::Field(read_field(&base.join(field))?)),
            SourceSpec::Family(spec) => {
                let medium = medium.ok_or_else(|| CliError::Config("a family source needs medium".into()))?;
                Ok(Source::Family(spec.build(medium)?))
            }
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanConfig {
    #[serde(default)]
    pub medium: Option<Medium>,
    pub source: SourceSpec,
    pub cylinder: Cylinder,
    pub selector: Selector,
    /// Exponents scanned one by one.
    #[serde(default)]
    pub q: Vec<f64>,
    /// Bracket searched for the threshold exponent.
    #[serde(default)]
    pub q_range: Option<(f64, f64)>,
    #[serde(default = "default_levels")]
    pub levels: usize,
    #[serde(default)]
    pub output: Option<PathBuf>,
}

fn default_levels() -> usize {
    40
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub x0: f64,
    pub r0: f64,
    pub s0: f64,
    #[serde(default = "default_c2")]
    pub c2: f64,
    pub scales: Vec<f64>,
    #[serde(default)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct L1Spec {
    pub x0: f64,
    pub r: f64,
    pub s: f64,
    pub t: f64,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RateSpec {
    pub x0: f64,
    pub t0: f64,
    pub s: f64,
    pub r0: f64,
    #[serde(default = "default_c2")]
    pub theta: f64,
}

fn default_c2() -> f64 {
    DEFAULT_C2
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HarnackConfig {
    #[serde(default)]
    pub medium: Option<Medium>,
    pub source: SourceSpec,
    #[serde(default)]
    pub probes: Vec<HarnackProbe>,
    #[serde(default)]
    pub sweep: Option<SweepSpec>,
    #[serde(default)]
    pub l1: Vec<L1Spec>,
    #[serde(default)]
    pub rate: Option<RateSpec>,
    /// Residual settings for the solution check on grid fields.
    #[serde(default)]
    pub solver: SolverConfig,
}

/// Parses a JSON config; relative paths inside it resolve against its
/// directory. The raw JSON is returned for provenance.
pub fn load<T: serde::de::DeserializeOwned>(path: &Path) -> Result<(T, serde_json::Value, PathBuf), CliError> {
    let bad = |e: &dyn std::fmt::Display| CliError::Config(format!("{}: {e}", path.display()));
    let file = File::open(path).map_err(|e| bad(&e))?;
    let raw: serde_json::Value = serde_json::from_reader(BufReader::new(file)).map_err(|e| bad(&e))?;
    let config = serde_json::from_value(raw.clone()).map_err(|e| bad(&e))?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok((config, raw, base))
}

/// Sidecar path of a field table: same stem, `.json` extension.
pub fn sidecar_path(csv: &Path) -> PathBuf {
    csv.with_extension("json")
}

pub fn read_field(csv: &Path) -> Result<GridField, CliError> {
    let open = |p: &Path| File::open(p).map_err(|e| CliError::Config(format!("{}: {e}", p.display())));
    let table = open(csv)?;
    let sidecar = open(&sidecar_path(csv))?;
    GridField::read(BufReader::new(table), BufReader::new(sidecar)).map_err(|e| CliError::Config(format!("{}: {e}", csv.display())))
}
