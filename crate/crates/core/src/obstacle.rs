//! Discrete obstacle problem and Poisson modification.
//!
//! Each backward-Euler step is a variational inequality: find `w ≥ ψ` with
//! residual `R(w) ≥ 0` and `R(w) = 0` wherever `w > ψ`. It is solved by
//! projected nonlinear Gauss–Seidel; face conductances are recomputed from
//! the current iterate at every node visit.

use std::io::Write;

use serde::Serialize;
use thiserror::Error;

use crate::grid::{GridError, GridField, RadialGrid};
use crate::solver::{residual_sign, solve, DirichletData, DiscreteOperator, SolverConfig, SolverError};

#[derive(Debug, Error)]
pub enum ObstacleError {
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("projected Gauss-Seidel did not settle in {sweeps} sweeps at step {step} (last change {change:e})")]
    ProjectionStall { step: usize, sweeps: usize, change: f64 },
    #[error("minimality candidate rejected: {0}")]
    PreconditionViolation(String),
    #[error("invalid sub-box: {0}")]
    InvalidSubBox(String),
}

/// Contact when `u − ψ < CONTACT_TOL·(1 + |ψ|)`.
pub const CONTACT_TOL: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct ObstacleProblem {
    /// The obstacle; its parabolic boundary values are the boundary data.
    pub psi: GridField,
    pub config: SolverConfig,
}

#[derive(Debug, Clone)]
pub struct ObstacleSolution {
    pub u: GridField,
    pub psi: GridField,
    /// Row-major by time, like [`GridField::values`].
    pub contact_mask: Vec<bool>,
    /// Largest `|min(Δt·R/(1+|u|), (u−ψ)/(1+|ψ|))|` over interior cells.
    pub complementarity_residual: f64,
    /// Gauss–Seidel sweeps used at each time step.
    pub sweeps: Vec<usize>,
    pub config: SolverConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ObstacleSummary {
    pub complementarity_residual: f64,
    pub contact_fraction: f64,
}

fn is_contact(u: f64, psi: f64) -> bool {
    u - psi < CONTACT_TOL * (1.0 + psi.abs())
}

pub fn solve_obstacle(problem: &ObstacleProblem) -> Result<ObstacleSolution, ObstacleError> {
    let psi = &problem.psi;
    let config = problem.config;
    config.validate(psi.medium())?;
    let grid = psi.grid();
    let times = psi.times();
    let op = DiscreteOperator::new(grid, psi.medium().p(), config.delta);
    let free = op.free_range();
    let volume = op.volume().to_vec();

    let mut values = Vec::with_capacity(psi.values().len());
    values.extend_from_slice(psi.row(0));
    let mut sweeps_used = Vec::with_capacity(times.len() - 1);
    let mut row = psi.row(0).to_vec();

    for k in 1..times.len() {
        let dt = times[k] - times[k - 1];
        let obstacle = psi.row(k);
        let previous = row;
        let mut w: Vec<f64> = previous.iter().zip(obstacle).map(|(a, b)| a.max(*b)).collect();
        if !grid.has_origin() {
            w[0] = obstacle[0];
        }
        w[grid.last()] = obstacle[grid.last()];

        let mut prev_change = f64::INFINITY;
        let mut settled = None;
        let mut change = f64::INFINITY;
        for sweep in 1..=config.picard_max {
            change = 0.0;
            for j in free.clone() {
                let mass = volume[j] / dt;
                let right = op.conductance(j, &w);
                let (left, left_value) = if j > 0 { (op.conductance(j - 1, &w), w[j - 1]) } else { (0.0, 0.0) };
                let x = (mass * previous[j] + left * left_value + right * w[j + 1]) / (mass + left + right);
                let x = x.max(obstacle[j]);
                change = change.max((x - w[j]).abs());
                w[j] = x;
            }
            if !change.is_finite() {
                break;
            }
            let scale = w.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
            // Geometric tail bound on the remaining distance to the fixed point.
            let rho = change / prev_change;
            let remaining = if rho < 1.0 { change * rho / (1.0 - rho) } else { f64::INFINITY };
            prev_change = change;
            if change <= config.picard_tol * scale && (remaining <= config.picard_tol * scale || change == 0.0) {
                settled = Some(sweep);
                break;
            }
        }
        let Some(used) = settled else {
            return Err(ObstacleError::ProjectionStall {
                step: k,
                sweeps: config.picard_max,
                change,
            });
        };
        sweeps_used.push(used);
        values.extend_from_slice(&w);
        row = w;
    }

    let u = GridField::from_values(
        psi.medium(),
        grid.clone(),
        times.to_vec(),
        values,
        format!("obstacle solve, delta={:e}", config.delta),
    )?;
    let contact_mask = u.values().iter().zip(psi.values()).map(|(a, b)| is_contact(*a, *b)).collect();
    let complementarity_residual = complementarity(&u, psi, &op);
    Ok(ObstacleSolution {
        u,
        psi: psi.clone(),
        contact_mask,
        complementarity_residual,
        sweeps: sweeps_used,
        config,
    })
}

fn complementarity(u: &GridField, psi: &GridField, op: &DiscreteOperator) -> f64 {
    let times = u.times();
    let mut worst = 0.0f64;
    for k in 1..times.len() {
        let dt = times[k] - times[k - 1];
        let now = u.row(k);
        let before = u.row(k - 1);
        let div = op.divergence(now);
        for j in op.free_range() {
            let res = (now[j] - before[j]) - dt * div[j];
            let res = res / (1.0 + now[j].abs());
            let gap = (now[j] - psi.row(k)[j]) / (1.0 + psi.row(k)[j].abs());
            worst = worst.max(res.min(gap).abs());
        }
    }
    worst
}

impl ObstacleSolution {
    pub fn is_contact(&self, k: usize, j: usize) -> bool {
        self.contact_mask[k * self.u.grid().len() + j]
    }

    /// Contact cells with a non-contact spatial neighbour; the discrete
    /// free boundary is only resolved to within one cell there.
    pub fn is_contact_boundary(&self, k: usize, j: usize) -> bool {
        if !self.is_contact(k, j) {
            return false;
        }
        let last = self.u.grid().last();
        (j > 0 && !self.is_contact(k, j - 1)) || (j < last && !self.is_contact(k, j + 1))
    }

    /// Fraction of interior cells in contact with the obstacle.
    pub fn contact_fraction(&self) -> f64 {
        let width = self.u.grid().len();
        let mut total = 0usize;
        let mut hits = 0usize;
        for (idx, &c) in self.contact_mask.iter().enumerate() {
            if !self.u.is_boundary_cell(idx / width, idx % width) {
                total += 1;
                hits += usize::from(c);
            }
        }
        hits as f64 / total.max(1) as f64
    }

    pub fn summary(&self) -> ObstacleSummary {
        ObstacleSummary {
            complementarity_residual: self.complementarity_residual,
            contact_fraction: self.contact_fraction(),
        }
    }

    pub fn write_contact_csv<W: Write>(&self, out: W) -> Result<(), GridError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["r", "t", "contact"])?;
        let nodes = self.u.grid().nodes();
        for (k, t) in self.u.times().iter().enumerate() {
            for (j, r) in nodes.iter().enumerate() {
                let flag = if self.is_contact(k, j) { "1" } else { "0" };
                w.write_record([format!("{r:.16e}"), format!("{t:.16e}"), flag.to_string()])?;
            }
        }
        w.flush().map_err(GridError::Io)?;
        Ok(())
    }
}

/// Index box `[k0, k1] × [j0, j1]` of a field; both ends inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize)]
pub struct SubBox {
    pub k0: usize,
    pub k1: usize,
    pub j0: usize,
    pub j1: usize,
}

impl SubBox {
    pub fn full(field: &GridField) -> Self {
        Self {
            k0: 0,
            k1: field.times().len() - 1,
            j0: 0,
            j1: field.grid().last(),
        }
    }

    /// Smallest index box covering the physical box `[r_lo, r_hi] × [t_lo, t_hi]`.
    pub fn covering(field: &GridField, r_lo: f64, r_hi: f64, t_lo: f64, t_hi: f64) -> Result<Self, ObstacleError> {
        let (j0, j1) = field.grid().index_range(r_lo, r_hi);
        let times = field.times();
        let k0 = times.iter().position(|&t| t >= t_lo - 1e-12);
        let k1 = times.iter().rposition(|&t| t <= t_hi + 1e-12);
        let (Some(k0), Some(k1)) = (k0, k1) else {
            return Err(ObstacleError::InvalidSubBox("time range outside the field".into()));
        };
        Ok(Self { k0, k1, j0, j1 })
    }
}

/// Replaces `u` inside `sub` by the solution carrying `u`'s trace on the
/// sub-box's parabolic boundary.
pub fn poisson_modify(u: &GridField, sub: SubBox, config: &SolverConfig) -> Result<GridField, ObstacleError> {
    let SubBox { k0, k1, j0, j1 } = sub;
    if k1 >= u.times().len() || j1 >= u.grid().len() || k1 <= k0 || j1 < j0 + 2 {
        return Err(ObstacleError::InvalidSubBox(format!(
            "need k0 < k1 < {} and j0 + 2 <= j1 < {}",
            u.times().len(),
            u.grid().len()
        )));
    }
    let nodes = u.grid().nodes()[j0..=j1].to_vec();
    let grid = RadialGrid::from_nodes(u.grid().n(), nodes)?;
    let times = u.times()[k0..=k1].to_vec();
    let initial = u.row(k0)[j0..=j1].to_vec();
    let boundary = DirichletData {
        inner: (!grid.has_origin()).then(|| (k0..=k1).map(|k| u.at(k, j0)).collect()),
        outer: (k0..=k1).map(|k| u.at(k, j1)).collect(),
    };
    let inner = solve(u.medium(), &grid, &times, &initial, &boundary, config)?;
    Ok(u.with_block(k0, j0, &inner.field)?)
}

/// Checks `solution.u ≤ candidate + 10·tol` for a discrete supersolution
/// `candidate ≥ ψ`, where `tol = picard_tol·(1 + |ψ|)` cellwise.
pub fn minimality_check(solution: &ObstacleSolution, candidate: &GridField) -> Result<bool, ObstacleError> {
    let psi = &solution.psi;
    if !candidate.same_layout(psi) {
        return Err(GridError::GridMismatch.into());
    }
    let tol = solution.config.picard_tol;
    let width = psi.grid().len();
    for (idx, (c, s)) in candidate.values().iter().zip(psi.values()).enumerate() {
        if *c < s - 10.0 * tol * (1.0 + s.abs()) {
            return Err(ObstacleError::PreconditionViolation(format!(
                "candidate below the obstacle at (t={}, r={})",
                psi.times()[idx / width],
                psi.grid().nodes()[idx % width]
            )));
        }
    }
    if !residual_sign(candidate, &solution.config).is_supersolution() {
        return Err(ObstacleError::PreconditionViolation("candidate is not a discrete supersolution".into()));
    }
    Ok(solution
        .u
        .values()
        .iter()
        .zip(candidate.values())
        .zip(psi.values())
        .all(|((u, c), s)| *u <= c + 10.0 * tol * (1.0 + s.abs())))
}
