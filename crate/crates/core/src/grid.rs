//! Radial grids and discrete space-time fields.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::closed_form::SolutionFamily;
use crate::exponents::Medium;

#[derive(Debug, Error)]
pub enum GridError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("invalid time levels: {0}")]
    InvalidTimes(String),
    #[error("invalid field data: {0}")]
    InvalidData(String),
    #[error("fields live on different grids or time levels")]
    GridMismatch,
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Spacing {
    Uniform,
    Geometric { ratio: f64 },
    Custom,
}

/// Radii `r_0 < … < r_J` carrying the `r^{n−1}` weight of dimension `n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadialGrid {
    n: u32,
    nodes: Vec<f64>,
    spacing: Spacing,
}

impl RadialGrid {
    pub fn uniform(n: u32, r_min: f64, r_max: f64, intervals: usize) -> Result<Self, GridError> {
        if !(r_min >= 0.0 && r_max > r_min && r_max.is_finite()) {
            return Err(GridError::InvalidGrid(format!("bad range [{r_min}, {r_max}]")));
        }
        let h = (r_max - r_min) / intervals as f64;
        let mut nodes: Vec<f64> = (0..=intervals).map(|j| r_min + h * j as f64).collect();
        *nodes.last_mut().unwrap() = r_max;
        Self::with_spacing(n, nodes, Spacing::Uniform)
    }

    /// Cells growing by `ratio` from `r_min` outward.
    pub fn geometric(n: u32, r_min: f64, r_max: f64, intervals: usize, ratio: f64) -> Result<Self, GridError> {
        if !(ratio > 0.0 && ratio.is_finite()) {
            return Err(GridError::InvalidGrid(format!("bad ratio {ratio}")));
        }
        if !(r_min >= 0.0 && r_max > r_min) {
            return Err(GridError::InvalidGrid(format!("bad range [{r_min}, {r_max}]")));
        }
        let total: f64 = (0..intervals).map(|j| ratio.powi(j as i32)).sum();
        let h0 = (r_max - r_min) / total;
        let mut nodes = Vec::with_capacity(intervals + 1);
        let mut r = r_min;
        nodes.push(r);
        for j in 0..intervals {
            r += h0 * ratio.powi(j as i32);
            nodes.push(r);
        }
        *nodes.last_mut().unwrap() = r_max;
        Self::with_spacing(n, nodes, Spacing::Geometric { ratio })
    }

    pub fn from_nodes(n: u32, nodes: Vec<f64>) -> Result<Self, GridError> {
        Self::with_spacing(n, nodes, Spacing::Custom)
    }

    fn with_spacing(n: u32, nodes: Vec<f64>, spacing: Spacing) -> Result<Self, GridError> {
        if n == 0 {
            return Err(GridError::InvalidGrid("dimension must be >= 1".into()));
        }
        if nodes.len() < 3 {
            return Err(GridError::InvalidGrid("need at least two intervals".into()));
        }
        if !(nodes[0] >= 0.0) || nodes.iter().any(|r| !r.is_finite()) {
            return Err(GridError::InvalidGrid("radii must be finite and non-negative".into()));
        }
        if nodes.windows(2).any(|w| w[1] <= w[0]) {
            return Err(GridError::InvalidGrid("radii must be strictly increasing".into()));
        }
        Ok(Self { n, nodes, spacing })
    }

    pub fn n(&self) -> u32 {
        self.n
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn spacing(&self) -> Spacing {
        self.spacing
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn last(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn r_min(&self) -> f64 {
        self.nodes[0]
    }

    pub fn r_max(&self) -> f64 {
        self.nodes[self.last()]
    }

    /// A zero-flux symmetry node sits at `r_0 = 0`.
    pub fn has_origin(&self) -> bool {
        self.nodes[0] == 0.0
    }

    /// Index of the first node carrying an unknown.
    pub fn first_free(&self) -> usize {
        usize::from(!self.has_origin())
    }

    /// Index range of the nodes between `lo` and `hi` (inclusive).
    pub fn index_range(&self, lo: f64, hi: f64) -> (usize, usize) {
        let a = self.nodes.iter().position(|&r| r >= lo - 1e-12).unwrap_or(self.last());
        let b = self.nodes.iter().rposition(|&r| r <= hi + 1e-12).unwrap_or(0);
        (a, b)
    }
}

/// Checks that time levels are finite and strictly increasing.
pub fn validate_times(times: &[f64]) -> Result<(), GridError> {
    if times.len() < 2 {
        return Err(GridError::InvalidTimes("need at least two time levels".into()));
    }
    if times.iter().any(|t| !t.is_finite()) || times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(GridError::InvalidTimes("times must be finite and strictly increasing".into()));
    }
    Ok(())
}

pub fn uniform_times(t0: f64, t1: f64, steps: usize) -> Vec<f64> {
    let dt = (t1 - t0) / steps as f64;
    let mut times: Vec<f64> = (0..=steps).map(|k| t0 + dt * k as f64).collect();
    *times.last_mut().unwrap() = t1;
    times
}

/// Dirichlet traces on the discrete parabolic boundary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryRecord {
    /// Row at `t_0`.
    pub initial: Vec<f64>,
    /// Column at `r_0`, absent when `r_0 = 0` (symmetry node).
    pub inner: Option<Vec<f64>>,
    /// Column at `r_J`.
    pub outer: Vec<f64>,
}

/// Discrete field on `grid × times`, row-major by time level.
#[derive(Debug, Clone, PartialEq)]
pub struct GridField {
    medium: Medium,
    grid: RadialGrid,
    times: Vec<f64>,
    values: Vec<f64>,
    boundary: BoundaryRecord,
    provenance: String,
}

impl GridField {
    /// Builds a field from a full value matrix; the boundary record is read
    /// off the matrix.
    pub fn from_values(
        medium: Medium,
        grid: RadialGrid,
        times: Vec<f64>,
        values: Vec<f64>,
        provenance: impl Into<String>,
    ) -> Result<Self, GridError> {
        validate_times(&times)?;
        if medium.n() != grid.n() {
            return Err(GridError::InvalidData(format!(
                "medium dimension {} differs from grid dimension {}",
                medium.n(),
                grid.n()
            )));
        }
        if values.len() != times.len() * grid.len() {
            return Err(GridError::InvalidData(format!(
                "expected {} values, got {}",
                times.len() * grid.len(),
                values.len()
            )));
        }
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(GridError::InvalidData(format!("non-finite value {bad}")));
        }
        let mut field = Self {
            medium,
            grid,
            times,
            values,
            boundary: BoundaryRecord {
                initial: Vec::new(),
                inner: None,
                outer: Vec::new(),
            },
            provenance: provenance.into(),
        };
        field.boundary = field.read_boundary();
        Ok(field)
    }

    /// Samples a closed-form family; `cap` truncates as `min(u, cap)`.
    pub fn sample(
        family: &SolutionFamily,
        grid: RadialGrid,
        times: Vec<f64>,
        cap: Option<f64>,
    ) -> Result<Self, GridError> {
        let mut values = Vec::with_capacity(times.len() * grid.len());
        for &t in &times {
            for &r in grid.nodes() {
                let v = match family.value(r, t) {
                    crate::extended::Extended::Finite(v) => v,
                    crate::extended::Extended::Infinite if cap.is_some() => f64::INFINITY,
                    other => {
                        return Err(GridError::InvalidData(format!(
                            "family value at (r={r}, t={t}) is {other:?}"
                        )))
                    }
                };
                values.push(match cap {
                    Some(k) => v.min(k),
                    None => v,
                });
            }
        }
        let provenance = match cap {
            Some(k) => format!("sampled {:?} truncated at {k}", family.kind()),
            None => format!("sampled {:?}", family.kind()),
        };
        Self::from_values(family.medium(), grid, times, values, provenance)
    }

    pub fn constant(medium: Medium, grid: RadialGrid, times: Vec<f64>, value: f64) -> Result<Self, GridError> {
        let len = grid.len() * times.len();
        Self::from_values(medium, grid, times, vec![value; len], format!("constant {value}"))
    }

    fn read_boundary(&self) -> BoundaryRecord {
        let last = self.grid.last();
        BoundaryRecord {
            initial: self.row(0).to_vec(),
            inner: (!self.grid.has_origin()).then(|| (0..self.times.len()).map(|k| self.at(k, 0)).collect()),
            outer: (0..self.times.len()).map(|k| self.at(k, last)).collect(),
        }
    }

    pub fn medium(&self) -> Medium {
        self.medium
    }

    pub fn grid(&self) -> &RadialGrid {
        &self.grid
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn boundary(&self) -> &BoundaryRecord {
        &self.boundary
    }

    pub fn provenance(&self) -> &str {
        &self.provenance
    }

    pub fn at(&self, k: usize, j: usize) -> f64 {
        self.values[k * self.grid.len() + j]
    }

    pub fn row(&self, k: usize) -> &[f64] {
        let w = self.grid.len();
        &self.values[k * w..(k + 1) * w]
    }

    pub fn same_layout(&self, other: &GridField) -> bool {
        self.grid == other.grid && self.times == other.times
    }

    /// Whether `(k, j)` lies on the discrete parabolic boundary.
    pub fn is_boundary_cell(&self, k: usize, j: usize) -> bool {
        k == 0 || j == self.grid.last() || (j == 0 && !self.grid.has_origin())
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64, provenance: impl Into<String>) -> Result<GridField, GridError> {
        Self::from_values(
            self.medium,
            self.grid.clone(),
            self.times.clone(),
            self.values.iter().map(|&v| f(v)).collect(),
            provenance,
        )
    }

    /// Entrywise `min(u, v)`.
    pub fn pointwise_min(&self, other: &GridField) -> Result<GridField, GridError> {
        if !self.same_layout(other) {
            return Err(GridError::GridMismatch);
        }
        Self::from_values(
            self.medium,
            self.grid.clone(),
            self.times.clone(),
            self.values.iter().zip(&other.values).map(|(a, b)| a.min(*b)).collect(),
            format!("min({}, {})", self.provenance, other.provenance),
        )
    }

    /// Truncation `min(u, k)`.
    pub fn truncate(&self, k: f64) -> GridField {
        self.map(|v| v.min(k), format!("min({}, {k})", self.provenance))
            .expect("truncation keeps the layout")
    }

    /// Replaces a rectangular block of values (time rows `k0..`, radii `j0..`).
    pub fn with_block(&self, k0: usize, j0: usize, block: &GridField) -> Result<GridField, GridError> {
        let w = block.grid.len();
        if k0 + block.times.len() > self.times.len() || j0 + w > self.grid.len() {
            return Err(GridError::GridMismatch);
        }
        let mut values = self.values.clone();
        for (dk, row) in block.values.chunks(w).enumerate() {
            let start = (k0 + dk) * self.grid.len() + j0;
            values[start..start + w].copy_from_slice(row);
        }
        Self::from_values(
            self.medium,
            self.grid.clone(),
            self.times.clone(),
            values,
            self.provenance.clone(),
        )
    }

    /// Piecewise-linear interpolation in `r` and `t`; `None` outside the
    /// covered rectangle.
    pub fn interpolate(&self, r: f64, t: f64) -> Option<f64> {
        let (j, wr) = locate(self.grid.nodes(), r)?;
        let (k, wt) = locate(&self.times, t)?;
        let row = |k: usize| self.at(k, j) * (1.0 - wr) + self.at(k, j + 1) * wr;
        Some(row(k) * (1.0 - wt) + row(k + 1) * wt)
    }

    /// Nodal radial derivative by centered differences (one-sided at the
    /// ends, zero at a symmetry origin), linearly interpolated.
    pub fn gradient_at(&self, r: f64, t: f64) -> Option<f64> {
        let (j, wr) = locate(self.grid.nodes(), r)?;
        let (k, wt) = locate(&self.times, t)?;
        let row = |k: usize| self.nodal_gradient(k, j) * (1.0 - wr) + self.nodal_gradient(k, j + 1) * wr;
        Some(row(k) * (1.0 - wt) + row(k + 1) * wt)
    }

    pub fn nodal_gradient(&self, k: usize, j: usize) -> f64 {
        let r = self.grid.nodes();
        let last = self.grid.last();
        if j == 0 {
            if self.grid.has_origin() {
                return 0.0;
            }
            return (self.at(k, 1) - self.at(k, 0)) / (r[1] - r[0]);
        }
        if j == last {
            return (self.at(k, last) - self.at(k, last - 1)) / (r[last] - r[last - 1]);
        }
        (self.at(k, j + 1) - self.at(k, j - 1)) / (r[j + 1] - r[j - 1])
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), GridError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["r", "t", "value"])?;
        for (k, &t) in self.times.iter().enumerate() {
            for (j, &r) in self.grid.nodes().iter().enumerate() {
                w.write_record([format!("{r:.16e}"), format!("{t:.16e}"), format!("{:.16e}", self.at(k, j))])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn sidecar(&self, config: Option<serde_json::Value>) -> FieldSidecar {
        FieldSidecar {
            n: self.grid.n(),
            p: self.medium.p(),
            grid: self.grid.clone(),
            times: self.times.clone(),
            boundary_provenance: self.provenance.clone(),
            config,
        }
    }

    /// Reads a field from its CSV table and JSON sidecar.
    pub fn read<R1: Read, R2: Read>(csv_in: R1, sidecar_in: R2) -> Result<GridField, GridError> {
        let sidecar: FieldSidecar = serde_json::from_reader(sidecar_in)?;
        let medium = Medium::new(sidecar.n, sidecar.p).map_err(|e| GridError::InvalidData(e.to_string()))?;
        let grid = RadialGrid::with_spacing(sidecar.grid.n, sidecar.grid.nodes.clone(), sidecar.grid.spacing)?;
        let width = grid.len();
        let mut values = vec![f64::NAN; width * sidecar.times.len()];
        let mut rdr = csv::Reader::from_reader(csv_in);
        let mut count = 0usize;
        for (idx, rec) in rdr.records().enumerate() {
            let rec = rec?;
            if rec.len() != 3 {
                return Err(GridError::InvalidData(format!("row {idx}: expected 3 columns")));
            }
            let parse = |s: &str| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|e| GridError::InvalidData(format!("row {idx}: {e}")))
            };
            let v = parse(&rec[2])?;
            if idx >= values.len() {
                return Err(GridError::InvalidData("more rows than grid cells".into()));
            }
            let (k, j) = (idx / width, idx % width);
            let (r, t) = (parse(&rec[0])?, parse(&rec[1])?);
            if (r - grid.nodes()[j]).abs() > 1e-12 * (1.0 + r.abs())
                || (t - sidecar.times[k]).abs() > 1e-12 * (1.0 + t.abs())
            {
                return Err(GridError::InvalidData(format!("row {idx}: coordinates do not match the sidecar")));
            }
            values[idx] = v;
            count += 1;
        }
        if count != values.len() {
            return Err(GridError::InvalidData(format!("expected {} rows, got {count}", values.len())));
        }
        Self::from_values(medium, grid, sidecar.times, values, sidecar.boundary_provenance)
    }
}

/// Interval index and linear weight of `x` inside sorted `xs`.
fn locate(xs: &[f64], x: f64) -> Option<(usize, f64)> {
    let last = xs.len() - 1;
    if !(x >= xs[0] && x <= xs[last]) {
        return None;
    }
    let i = match xs.binary_search_by(|v| v.partial_cmp(&x).unwrap()) {
        Ok(i) => i.min(last - 1),
        Err(i) => i - 1,
    };
    Some((i, (x - xs[i]) / (xs[i + 1] - xs[i])))
}

/// JSON sidecar accompanying a field CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldSidecar {
    pub n: u32,
    pub p: f64,
    pub grid: RadialGrid,
    pub times: Vec<f64>,
    pub boundary_provenance: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<serde_json::Value>,
}
