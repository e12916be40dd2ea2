//! Radial space-time functions that the measurement labs can sample.

use crate::closed_form::SolutionFamily;
use crate::exponents::Medium;
use crate::extended::Extended;
use crate::grid::GridField;

/// Rectangle in `(|x|, t)` on which a source is defined.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Domain {
    pub r_min: f64,
    /// `f64::INFINITY` when unbounded.
    pub r_max: f64,
    /// Open at `t_min` when `t_open` is set (closed forms live on `t > 0`).
    pub t_min: f64,
    pub t_open: bool,
    pub t_max: f64,
}

impl Domain {
    pub fn contains_time(&self, t: f64) -> bool {
        let above = if self.t_open { t > self.t_min } else { t >= self.t_min };
        above && t <= self.t_max
    }

    /// Whether the ball `B(x0·e₁, radius)` lies in the radial domain.
    pub fn contains_ball(&self, x0: f64, radius: f64) -> bool {
        let outer = x0 + radius <= self.r_max * (1.0 + 1e-12);
        let inner = self.r_min == 0.0 || x0 - radius >= self.r_min * (1.0 - 1e-12);
        outer && inner
    }

    pub fn contains_interval(&self, t1: f64, t2: f64) -> bool {
        self.contains_time(t1) && self.contains_time(t2)
    }
}

pub trait Evaluable {
    fn medium(&self) -> Medium;

    fn domain(&self) -> Domain;

    /// `u` at distance `radius` from the origin; `Undefined` outside the domain.
    fn value(&self, radius: f64, t: f64) -> Extended;

    /// `|∇u|`, or `None` when the source carries no gradient.
    fn gradient(&self, radius: f64, t: f64) -> Option<Extended>;

    /// Whether the source is known to solve the equation (not merely to be
    /// a supersolution) on balls avoiding `x = 0`.
    fn is_solution(&self) -> bool;

    /// Whether balls containing `x = 0` see a non-solution singularity.
    fn singular_at_origin(&self) -> bool {
        false
    }

    fn describe(&self) -> String;
}

impl Evaluable for SolutionFamily {
    fn medium(&self) -> Medium {
        SolutionFamily::medium(self)
    }

    fn domain(&self) -> Domain {
        Domain {
            r_min: 0.0,
            r_max: f64::INFINITY,
            t_min: if self.is_zero_extended() { f64::NEG_INFINITY } else { 0.0 },
            t_open: !self.is_zero_extended(),
            t_max: f64::INFINITY,
        }
    }

    fn value(&self, radius: f64, t: f64) -> Extended {
        SolutionFamily::value(self, radius, t)
    }

    fn gradient(&self, radius: f64, t: f64) -> Option<Extended> {
        Some(self.gradient_abs(radius, t))
    }

    fn is_solution(&self) -> bool {
        self.is_exact_solution()
    }

    fn singular_at_origin(&self) -> bool {
        SolutionFamily::singular_at_origin(self)
    }

    fn describe(&self) -> String {
        format!("{:?}{}", self.kind(), if self.is_zero_extended() { " (zero-extended)" } else { "" })
    }
}

impl Evaluable for GridField {
    fn medium(&self) -> Medium {
        GridField::medium(self)
    }

    fn domain(&self) -> Domain {
        Domain {
            r_min: self.grid().r_min(),
            r_max: self.grid().r_max(),
            t_min: self.times()[0],
            t_open: false,
            t_max: *self.times().last().unwrap(),
        }
    }

    fn value(&self, radius: f64, t: f64) -> Extended {
        self.interpolate(radius, t).map_or(Extended::Undefined, Extended::from)
    }

    fn gradient(&self, radius: f64, t: f64) -> Option<Extended> {
        Some(self.gradient_at(radius, t).map_or(Extended::Undefined, |g| Extended::from(g.abs())))
    }

    /// Grid fields are not trusted as solutions without a residual check.
    fn is_solution(&self) -> bool {
        false
    }

    fn describe(&self) -> String {
        format!("grid field ({})", self.provenance())
    }
}

/// `u ≡ value` on all of space-time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantField {
    pub medium: Medium,
    pub value: f64,
}

impl Evaluable for ConstantField {
    fn medium(&self) -> Medium {
        self.medium
    }

    fn domain(&self) -> Domain {
        Domain {
            r_min: 0.0,
            r_max: f64::INFINITY,
            t_min: f64::NEG_INFINITY,
            t_open: false,
            t_max: f64::INFINITY,
        }
    }

    fn value(&self, _radius: f64, _t: f64) -> Extended {
        Extended::Finite(self.value)
    }

    fn gradient(&self, _radius: f64, _t: f64) -> Option<Extended> {
        Some(Extended::ZERO)
    }

    fn is_solution(&self) -> bool {
        true
    }

    fn describe(&self) -> String {
        format!("constant {}", self.value)
    }
}

/// `u + shift`; used to make sources nonnegative (or `≥ 1`) before
/// taking powers.
pub struct Shifted<'a> {
    pub inner: &'a dyn Evaluable,
    pub shift: f64,
}

impl Evaluable for Shifted<'_> {
    fn medium(&self) -> Medium {
        self.inner.medium()
    }

    fn domain(&self) -> Domain {
        self.inner.domain()
    }

    fn value(&self, radius: f64, t: f64) -> Extended {
        match self.inner.value(radius, t) {
            Extended::Finite(v) => Extended::Finite(v + self.shift),
            other => other,
        }
    }

    fn gradient(&self, radius: f64, t: f64) -> Option<Extended> {
        self.inner.gradient(radius, t)
    }

    fn is_solution(&self) -> bool {
        self.inner.is_solution()
    }

    fn singular_at_origin(&self) -> bool {
        self.inner.singular_at_origin()
    }

    fn describe(&self) -> String {
        format!("{} + {}", self.inner.describe(), self.shift)
    }
}

/// Shift making a grid field `≥ 1`: `max(0, −min u) + 1`.
pub fn unit_floor_shift(field: &GridField) -> f64 {
    (-field.min_value()).max(0.0) + 1.0
}
