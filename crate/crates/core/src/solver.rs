//! Implicit radial solver for `∂_t u = div(|∇u|^{p−2}∇u)`.
//!
//! Backward Euler in time, a conservative finite-volume flux in space, and
//! frozen-coefficient Picard iteration with one tridiagonal solve per sweep.
//! The diffusivity is regularized as `(|∂_r u|² + δ²)^{(p−2)/2}`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exponents::Medium;
use crate::grid::{validate_times, GridError, GridField, RadialGrid};
use crate::tridiag;

#[derive(Debug, Error)]
pub enum SolverError {
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),
    #[error("delta = 0 with p = {0} < 2: diffusivity is singular at zero gradient")]
    SingularDiffusivity(f64),
    #[error("Picard iteration did not converge in {iterations} sweeps at step {step} (last change {change:e})")]
    PicardDivergence { step: usize, iterations: usize, change: f64 },
    #[error("tridiagonal system singular at step {0}")]
    SingularSystem(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    /// Diffusivity regularization `δ ≥ 0`.
    pub delta: f64,
    /// Relative fixed-point tolerance.
    pub picard_tol: f64,
    pub picard_max: usize,
    /// Relative tolerance for residual-sign classification.
    pub residual_tol: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            delta: 1e-8,
            picard_tol: 1e-10,
            picard_max: 500,
            residual_tol: 1e-3,
        }
    }
}

impl SolverConfig {
    /// Default configuration with `δ = 1e−8 · scale`.
    pub fn for_data_scale(scale: f64) -> Self {
        Self {
            delta: 1e-8 * scale.abs().max(f64::MIN_POSITIVE),
            ..Self::default()
        }
    }

    pub fn validate(&self, medium: Medium) -> Result<(), SolverError> {
        if !(self.picard_tol > 0.0) {
            return Err(SolverError::InvalidConfig("picard_tol must be > 0".into()));
        }
        if self.picard_max < 1 {
            return Err(SolverError::InvalidConfig("picard_max must be >= 1".into()));
        }
        if !(self.delta >= 0.0 && self.delta.is_finite()) {
            return Err(SolverError::InvalidConfig("delta must be finite and >= 0".into()));
        }
        if !(self.residual_tol >= 0.0) {
            return Err(SolverError::InvalidConfig("residual_tol must be >= 0".into()));
        }
        if self.delta == 0.0 && medium.p() < 2.0 {
            return Err(SolverError::SingularDiffusivity(medium.p()));
        }
        Ok(())
    }
}

/// Geometry and flux law of the radial finite-volume discretization.
#[derive(Debug, Clone)]
pub struct DiscreteOperator {
    p: f64,
    delta: f64,
    origin: bool,
    /// Face `i` sits between nodes `i` and `i+1`.
    face_width: Vec<f64>,
    face_area: Vec<f64>,
    /// Control volume of each node divided by `ω_{n−1}`; zero on Dirichlet nodes.
    volume: Vec<f64>,
}

impl DiscreteOperator {
    pub fn new(grid: &RadialGrid, p: f64, delta: f64) -> Self {
        let r = grid.nodes();
        let n = f64::from(grid.n());
        let last = grid.last();
        let mid: Vec<f64> = r.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
        let face_width = r.windows(2).map(|w| w[1] - w[0]).collect();
        let face_area = mid.iter().map(|&m| m.powf(n - 1.0)).collect();
        let mut volume = vec![0.0; r.len()];
        if grid.has_origin() {
            volume[0] = mid[0].powf(n) / n;
        }
        for j in 1..last {
            volume[j] = (mid[j].powf(n) - mid[j - 1].powf(n)) / n;
        }
        Self {
            p,
            delta,
            origin: grid.has_origin(),
            face_width,
            face_area,
            volume,
        }
    }

    pub fn volume(&self) -> &[f64] {
        &self.volume
    }

    fn first_free(&self) -> usize {
        usize::from(!self.origin)
    }

    fn last(&self) -> usize {
        self.volume.len() - 1
    }

    fn diffusivity(&self, g: f64) -> f64 {
        if self.delta == 0.0 {
            if g == 0.0 {
                return if self.p > 2.0 { 0.0 } else { 1.0 };
            }
            return g.abs().powf(self.p - 2.0);
        }
        (g * g + self.delta * self.delta).powf(0.5 * (self.p - 2.0))
    }

    /// Conductance `area · D(g) / width` of face `i` for the state `w`.
    pub fn conductance(&self, i: usize, w: &[f64]) -> f64 {
        let h = self.face_width[i];
        let g = (w[i + 1] - w[i]) / h;
        self.face_area[i] * self.diffusivity(g) / h
    }

    pub fn face_conductance(&self, w: &[f64]) -> Vec<f64> {
        (0..self.face_width.len()).map(|i| self.conductance(i, w)).collect()
    }

    /// Discrete `div(|∇u|^{p−2}∇u)` at every free node; NaN on Dirichlet nodes.
    pub fn divergence(&self, w: &[f64]) -> Vec<f64> {
        self.divergence_with_stiffness(w).0
    }

    /// Divergence together with the row sums `(a₊ + a₋)/V` of the frozen
    /// operator, which bound how iteration error enters the residual.
    pub fn divergence_with_stiffness(&self, w: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let a = self.face_conductance(w);
        let mut div = vec![f64::NAN; w.len()];
        let mut scale = vec![f64::NAN; w.len()];
        for j in self.first_free()..self.last() {
            let right = a[j] * (w[j + 1] - w[j]);
            let left = if j > 0 { a[j - 1] * (w[j] - w[j - 1]) } else { 0.0 };
            div[j] = (right - left) / self.volume[j];
            scale[j] = (a[j] + if j > 0 { a[j - 1] } else { 0.0 }) / self.volume[j];
        }
        (div, scale)
    }

    pub(crate) fn free_range(&self) -> std::ops::Range<usize> {
        self.first_free()..self.last()
    }

    /// Assembles the frozen-coefficient backward-Euler system for the free
    /// nodes, with Dirichlet values taken from `w`.
    pub(crate) fn assemble(&self, conductance: &[f64], w: &[f64], previous: &[f64], dt: f64) -> Tridiagonal {
        let first = self.first_free();
        let last = self.last();
        let size = last - first;
        let mut t = Tridiagonal {
            sub: vec![0.0; size],
            diag: vec![0.0; size],
            sup: vec![0.0; size],
            rhs: vec![0.0; size],
        };
        for j in first..last {
            let i = j - first;
            let mass = self.volume[j] / dt;
            let right = conductance[j];
            let left = if j > 0 { conductance[j - 1] } else { 0.0 };
            t.diag[i] = mass + left + right;
            t.rhs[i] = mass * previous[j];
            if j > 0 {
                if j - 1 < first {
                    t.rhs[i] += left * w[j - 1];
                } else {
                    t.sub[i] = -left;
                }
            }
            if j + 1 == last {
                t.rhs[i] += right * w[last];
            } else {
                t.sup[i] = -right;
            }
        }
        t
    }
}

pub(crate) struct Tridiagonal {
    pub sub: Vec<f64>,
    pub diag: Vec<f64>,
    pub sup: Vec<f64>,
    pub rhs: Vec<f64>,
}

/// Dirichlet traces over all time levels.
#[derive(Debug, Clone, PartialEq)]
pub struct DirichletData {
    /// Trace at `r_0`; must be absent exactly when `r_0 = 0`.
    pub inner: Option<Vec<f64>>,
    pub outer: Vec<f64>,
}

impl DirichletData {
    pub fn from_fn(grid: &RadialGrid, times: &[f64], f: impl Fn(f64, f64) -> f64) -> Self {
        Self {
            inner: (!grid.has_origin()).then(|| times.iter().map(|&t| f(grid.r_min(), t)).collect()),
            outer: times.iter().map(|&t| f(grid.r_max(), t)).collect(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SolveOutcome {
    pub field: GridField,
    /// Picard sweeps used at each time step.
    pub picard_iterations: Vec<usize>,
    pub delta: f64,
}

fn corner_mismatch(a: f64, b: f64) -> bool {
    (a - b).abs() > 1e-9 * (1.0 + a.abs().max(b.abs()))
}

/// Evolves `initial` over `times` with Dirichlet data `boundary`.
pub fn solve(
    medium: Medium,
    grid: &RadialGrid,
    times: &[f64],
    initial: &[f64],
    boundary: &DirichletData,
    config: &SolverConfig,
) -> Result<SolveOutcome, SolverError> {
    config.validate(medium)?;
    validate_times(times)?;
    let width = grid.len();
    let last = grid.last();
    if initial.len() != width {
        return Err(GridError::InvalidData(format!("initial trace has {} values, grid has {width}", initial.len())).into());
    }
    if boundary.outer.len() != times.len() {
        return Err(GridError::InvalidData("outer trace length differs from time levels".into()).into());
    }
    match (&boundary.inner, grid.has_origin()) {
        (Some(inner), false) => {
            if inner.len() != times.len() {
                return Err(GridError::InvalidData("inner trace length differs from time levels".into()).into());
            }
            if corner_mismatch(inner[0], initial[0]) {
                return Err(GridError::InvalidData("initial and inner traces disagree at the corner".into()).into());
            }
        }
        (None, true) => {}
        (Some(_), true) => {
            return Err(GridError::InvalidData("inner trace given but r_0 = 0 is a symmetry node".into()).into())
        }
        (None, false) => return Err(GridError::InvalidData("r_0 > 0 requires an inner trace".into()).into()),
    }
    if corner_mismatch(boundary.outer[0], initial[last]) {
        return Err(GridError::InvalidData("initial and outer traces disagree at the corner".into()).into());
    }
    let all_finite = initial.iter().chain(&boundary.outer).chain(boundary.inner.iter().flatten()).all(|v| v.is_finite());
    if !all_finite {
        return Err(GridError::InvalidData("data must be finite".into()).into());
    }

    let op = DiscreteOperator::new(grid, medium.p(), config.delta);
    let first = grid.first_free();
    let mut values = Vec::with_capacity(width * times.len());
    let mut row = initial.to_vec();
    if let Some(inner) = &boundary.inner {
        row[0] = inner[0];
    }
    row[last] = boundary.outer[0];
    values.extend_from_slice(&row);
    let mut iterations = Vec::with_capacity(times.len() - 1);

    for k in 1..times.len() {
        let dt = times[k] - times[k - 1];
        let previous = row.clone();
        let mut w = previous.clone();
        if let Some(inner) = &boundary.inner {
            w[0] = inner[k];
        }
        w[last] = boundary.outer[k];

        let mut prev_change = f64::INFINITY;
        let mut non_monotone = 0usize;
        let mut converged = None;
        let mut change = f64::INFINITY;
        for it in 1..=config.picard_max {
            let conductance = op.face_conductance(&w);
            let sys = op.assemble(&conductance, &w, &previous, dt);
            let x = tridiag::solve(&sys.sub, &sys.diag, &sys.sup, &sys.rhs).ok_or(SolverError::SingularSystem(k))?;
            change = x
                .iter()
                .zip(&w[first..last])
                .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            if change > prev_change {
                non_monotone += 1;
            }
            prev_change = change;
            let relax = if non_monotone >= 10 { 0.5 } else { 1.0 };
            for (wi, xi) in w[first..last].iter_mut().zip(&x) {
                *wi += relax * (xi - *wi);
            }
            let scale = w.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
            if !change.is_finite() {
                break;
            }
            if change <= config.picard_tol * scale {
                converged = Some(it);
                break;
            }
        }
        let Some(used) = converged else {
            return Err(SolverError::PicardDivergence {
                step: k,
                iterations: config.picard_max,
                change,
            });
        };
        iterations.push(used);
        values.extend_from_slice(&w);
        row = w;
    }

    let field = GridField::from_values(
        medium,
        grid.clone(),
        times.to_vec(),
        values,
        format!("backward-Euler solve, delta={:e}", config.delta),
    )?;
    Ok(SolveOutcome {
        field,
        picard_iterations: iterations,
        delta: config.delta,
    })
}

/// Solves with initial and boundary data taken from `u`'s parabolic boundary.
pub fn resolve_from_boundary(u: &GridField, config: &SolverConfig) -> Result<SolveOutcome, SolverError> {
    let b = u.boundary();
    solve(
        u.medium(),
        u.grid(),
        u.times(),
        &b.initial,
        &DirichletData {
            inner: b.inner.clone(),
            outer: b.outer.clone(),
        },
        config,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum CellClass {
    Solution,
    Supersolution,
    Subsolution,
    Indeterminate,
}

/// Per-cell residual classification; parabolic-boundary cells carry `None`.
#[derive(Debug, Clone)]
pub struct ResidualMap {
    width: usize,
    classes: Vec<Option<CellClass>>,
    residuals: Vec<f64>,
    scales: Vec<f64>,
}

impl ResidualMap {
    pub fn class(&self, k: usize, j: usize) -> Option<CellClass> {
        self.classes[k * self.width + j]
    }

    pub fn residual(&self, k: usize, j: usize) -> f64 {
        self.residuals[k * self.width + j]
    }

    /// Local magnitude `|∂_t u| + |div|` the tolerance is scaled by.
    pub fn scale(&self, k: usize, j: usize) -> f64 {
        self.scales[k * self.width + j]
    }

    pub fn interior(&self) -> impl Iterator<Item = CellClass> + '_ {
        self.classes.iter().filter_map(|c| *c)
    }

    pub fn count(&self, class: CellClass) -> usize {
        self.interior().filter(|&c| c == class).count()
    }

    pub fn interior_len(&self) -> usize {
        self.interior().count()
    }

    pub fn fraction(&self, class: CellClass) -> f64 {
        self.count(class) as f64 / self.interior_len().max(1) as f64
    }

    /// No interior cell is a strict subsolution or indeterminate.
    pub fn is_supersolution(&self) -> bool {
        self.interior().all(|c| matches!(c, CellClass::Solution | CellClass::Supersolution))
    }

    pub fn is_subsolution(&self) -> bool {
        self.interior().all(|c| matches!(c, CellClass::Solution | CellClass::Subsolution))
    }

    pub fn is_solution(&self) -> bool {
        self.interior().all(|c| c == CellClass::Solution)
    }
}

/// Classifies every interior cell by the sign of the discrete residual
/// `(u^k − u^{k−1})/Δt − div_h(u^k)`, the operator the solver inverts.
///
/// A cell is `Solution` when `|R| ≤ residual_tol·(|∂_t u| + |div|)` plus a
/// floor covering the solver's own stopping error: a perturbation of size
/// `picard_tol·‖u^k‖∞` moves `R` by at most that times `1/Δt + (a₊+a₋)/V`.
pub fn residual_sign(field: &GridField, config: &SolverConfig) -> ResidualMap {
    let grid = field.grid();
    let width = grid.len();
    let op = DiscreteOperator::new(grid, field.medium().p(), config.delta);
    let mut classes = vec![None; field.values().len()];
    let mut residuals = vec![f64::NAN; field.values().len()];
    let mut scales = vec![f64::NAN; field.values().len()];
    let times = field.times();
    for k in 1..times.len() {
        let dt = times[k] - times[k - 1];
        let now = field.row(k);
        let before = field.row(k - 1);
        let (div, stiffness) = op.divergence_with_stiffness(now);
        let row_max = now.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for j in grid.first_free()..grid.last() {
            let ut = (now[j] - before[j]) / dt;
            let res = ut - div[j];
            let scale = ut.abs() + div[j].abs();
            let floor = 10.0 * config.picard_tol * row_max * (1.0 / dt + stiffness[j]);
            let idx = k * width + j;
            residuals[idx] = res;
            scales[idx] = scale;
            classes[idx] = Some(if !res.is_finite() {
                CellClass::Indeterminate
            } else if res.abs() <= config.residual_tol * scale + floor {
                CellClass::Solution
            } else if res > 0.0 {
                CellClass::Supersolution
            } else {
                CellClass::Subsolution
            });
        }
    }
    ResidualMap {
        width,
        classes,
        residuals,
        scales,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ComparisonReport {
    pub boundary_ordered: bool,
    pub interior_ordered: bool,
    /// Largest `u − v` over interior cells (0 when ordered everywhere).
    pub max_violation: f64,
    pub max_boundary_violation: f64,
}

/// Checks `u ≤ v + tol` on the discrete parabolic boundary and inside.
pub fn compare(u: &GridField, v: &GridField, tol: f64) -> Result<ComparisonReport, GridError> {
    if !u.same_layout(v) {
        return Err(GridError::GridMismatch);
    }
    let width = u.grid().len();
    let mut interior = 0.0f64;
    let mut boundary = 0.0f64;
    for (idx, (a, b)) in u.values().iter().zip(v.values()).enumerate() {
        let excess = (a - b).max(0.0);
        if u.is_boundary_cell(idx / width, idx % width) {
            boundary = boundary.max(excess);
        } else {
            interior = interior.max(excess);
        }
    }
    Ok(ComparisonReport {
        boundary_ordered: boundary <= tol,
        interior_ordered: interior <= tol,
        max_violation: interior,
        max_boundary_violation: boundary,
    })
}
