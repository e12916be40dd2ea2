//! Explicit radial solutions of `∂_t u = div(|∇u|^{p−2}∇u)`.
//!
//! Every family is evaluated with exact derivatives; the radial flux
//! divergence is `r^{1−n} ∂_r(r^{n−1}|∂_r u|^{p−2}∂_r u)`.

use std::io::{self, Write};

use serde::Serialize;
use thiserror::Error;

use crate::exponents::{ExponentError, Medium, Regime};
use crate::extended::Extended;
use crate::quadrature::{gauss, unit_sphere_area};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ClosedFormError {
    #[error(transparent)]
    Exponent(#[from] ExponentError),
    #[error("{family} requires {required}, medium is {actual:?}")]
    RegimeMismatch {
        family: &'static str,
        required: &'static str,
        actual: Regime,
    },
    #[error("constant must be finite and positive (got {0})")]
    InvalidConstant(f64),
    #[error("point-source constant degenerates: p/(2-p) - n = {0} <= 0")]
    DegenerateConstant(f64),
    #[error("power supersolution factor q/(2-p) - q + p - n = {0} <= 0")]
    NonpositiveFactor(f64),
    #[error("family undefined at radius {radius}, t {t}")]
    UndefinedPoint { radius: f64, t: f64 },
    #[error("radius must be non-negative (got {0})")]
    NegativeRadius(f64),
    #[error("mass quadrature failed: {0}")]
    QuadratureFailure(String),
    #[error("no bisection bracket for target mass {0}")]
    BracketFailure(f64),
    #[error("finite-difference step {h} too large for radius {radius}, t {t}")]
    StepTooLarge { h: f64, radius: f64, t: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum FamilyKind {
    /// Fast-diffusion Barenblatt profile, positive everywhere.
    SingularBarenblatt { c: f64 },
    /// Slow-diffusion Barenblatt profile with compact support.
    DegenerateBarenblatt { c: f64 },
    /// `(ct/|x|^p)^{1/(2−p)}` with the constant from [`ips_constant`].
    InfinitePointSource { c: f64 },
    /// `(ct/|x|^q)^{1/(2−p)}`, a supersolution in the punctured unit ball
    /// when `c` is [`power_constant`].
    PowerSupersolution { q: f64, c: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SolutionFamily {
    medium: Medium,
    kind: FamilyKind,
    zero_extended: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EvalResult {
    pub value: Extended,
    pub radial_gradient: Extended,
    pub time_derivative: Extended,
    pub flux_divergence: Extended,
    pub residual: Extended,
}

impl EvalResult {
    const ZERO: EvalResult = EvalResult {
        value: Extended::ZERO,
        radial_gradient: Extended::ZERO,
        time_derivative: Extended::ZERO,
        flux_divergence: Extended::ZERO,
        residual: Extended::ZERO,
    };

    const SINGULAR: EvalResult = EvalResult {
        value: Extended::Infinite,
        radial_gradient: Extended::Undefined,
        time_derivative: Extended::Undefined,
        flux_divergence: Extended::Undefined,
        residual: Extended::Undefined,
    };

    fn finite(value: f64, grad: f64, dt: f64, div: f64) -> Self {
        EvalResult {
            value: value.into(),
            radial_gradient: grad.into(),
            time_derivative: dt.into(),
            flux_divergence: div.into(),
            residual: (dt - div).into(),
        }
    }
}

fn check_constant(c: f64) -> Result<f64, ClosedFormError> {
    if c.is_finite() && c > 0.0 {
        Ok(c)
    } else {
        Err(ClosedFormError::InvalidConstant(c))
    }
}

/// Constant of the infinite point source solution.
pub fn ips_constant(medium: Medium) -> Result<f64, ClosedFormError> {
    let p = medium.p();
    if medium.regime() != Regime::SupercriticalFast {
        // At or below the critical exponent the defining factor is not positive.
        if p < 2.0 {
            return Err(ClosedFormError::DegenerateConstant(medium.ips_power() - medium.nf()));
        }
        return Err(ClosedFormError::RegimeMismatch {
            family: "InfinitePointSource",
            required: "2n/(n+1) < p < 2",
            actual: medium.regime(),
        });
    }
    let a = medium.ips_power();
    let factor = a - medium.nf();
    if factor <= 0.0 {
        return Err(ClosedFormError::DegenerateConstant(factor));
    }
    Ok((2.0 - p) * a.powf(p - 1.0) * factor)
}

/// Sign factor `q/(2−p) − q + p − n` of the power supersolution.
pub fn power_factor(medium: Medium, q: f64) -> f64 {
    let p = medium.p();
    q / (2.0 - p) - q + p - medium.nf()
}

/// Canonical constant making the power profile a supersolution in the
/// punctured unit ball.
pub fn power_constant(medium: Medium, q: f64) -> Result<f64, ClosedFormError> {
    let p = medium.p();
    if p >= 2.0 {
        return Err(ClosedFormError::RegimeMismatch {
            family: "PowerSupersolution",
            required: "1 < p < 2",
            actual: medium.regime(),
        });
    }
    let factor = power_factor(medium, q);
    if !(factor > 0.0) {
        return Err(ClosedFormError::NonpositiveFactor(factor));
    }
    let aq = q / (2.0 - p);
    Ok((2.0 - p) * aq.powf(p - 1.0) * factor)
}

impl SolutionFamily {
    pub fn singular_barenblatt(medium: Medium, c: f64) -> Result<Self, ClosedFormError> {
        if !medium.is_supercritical_fast() {
            return Err(ClosedFormError::RegimeMismatch {
                family: "SingularBarenblatt",
                required: "2n/(n+1) < p < 2",
                actual: medium.regime(),
            });
        }
        Ok(Self::raw(medium, FamilyKind::SingularBarenblatt { c: check_constant(c)? }))
    }

    pub fn degenerate_barenblatt(medium: Medium, c: f64) -> Result<Self, ClosedFormError> {
        if medium.regime() != Regime::SlowDiffusion {
            return Err(ClosedFormError::RegimeMismatch {
                family: "DegenerateBarenblatt",
                required: "p > 2",
                actual: medium.regime(),
            });
        }
        Ok(Self::raw(medium, FamilyKind::DegenerateBarenblatt { c: check_constant(c)? }))
    }

    pub fn infinite_point_source(medium: Medium) -> Result<Self, ClosedFormError> {
        let c = ips_constant(medium)?;
        Ok(Self::raw(medium, FamilyKind::InfinitePointSource { c }))
    }

    /// Power profile with an explicit constant `c`.
    pub fn power(medium: Medium, q: f64, c: f64) -> Result<Self, ClosedFormError> {
        if medium.p() >= 2.0 {
            return Err(ClosedFormError::RegimeMismatch {
                family: "PowerSupersolution",
                required: "1 < p < 2",
                actual: medium.regime(),
            });
        }
        if !(q.is_finite() && q > 0.0) {
            return Err(ClosedFormError::InvalidConstant(q));
        }
        Ok(Self::raw(medium, FamilyKind::PowerSupersolution { q, c: check_constant(c)? }))
    }

    /// Power profile with the canonical constant [`power_constant`].
    pub fn power_canonical(medium: Medium, q: f64) -> Result<Self, ClosedFormError> {
        let c = power_constant(medium, q)?;
        Self::power(medium, q, c)
    }

    fn raw(medium: Medium, kind: FamilyKind) -> Self {
        Self {
            medium,
            kind,
            zero_extended: false,
        }
    }

    /// Same family extended by zero to `t ≤ 0`.
    pub fn zero_extended(mut self) -> Self {
        self.zero_extended = true;
        self
    }

    pub fn with_zero_extension(mut self, on: bool) -> Self {
        self.zero_extended = on;
        self
    }

    pub fn is_zero_extended(&self) -> bool {
        self.zero_extended
    }

    pub fn medium(&self) -> Medium {
        self.medium
    }

    pub fn kind(&self) -> FamilyKind {
        self.kind
    }

    /// Whether the family is an exact solution (as opposed to a strict
    /// supersolution) away from its singular set.
    pub fn is_exact_solution(&self) -> bool {
        match self.kind {
            FamilyKind::PowerSupersolution { q, .. } => q == self.medium.p(),
            _ => true,
        }
    }

    /// Whether `x = 0` is a standing singularity for `t > 0`.
    pub fn singular_at_origin(&self) -> bool {
        matches!(
            self.kind,
            FamilyKind::InfinitePointSource { .. } | FamilyKind::PowerSupersolution { .. }
        )
    }

    pub fn evaluate(&self, radius: f64, t: f64) -> Result<EvalResult, ClosedFormError> {
        if radius < 0.0 || radius.is_nan() {
            return Err(ClosedFormError::NegativeRadius(radius));
        }
        if t <= 0.0 {
            return if self.zero_extended {
                Ok(EvalResult::ZERO)
            } else {
                Err(ClosedFormError::UndefinedPoint { radius, t })
            };
        }
        let n = self.medium.nf();
        let p = self.medium.p();
        Ok(match self.kind {
            FamilyKind::SingularBarenblatt { c } => {
                let s = BarenblattScales::new(self.medium, t);
                let b = (2.0 - p) / p * s.time_factor;
                let m = (p - 1.0) / (2.0 - p);
                let rg = radius.powf(s.gamma);
                let y = c + b * rg;
                let u = s.amplitude * y.powf(-m);
                let grad = -s.amplitude * m * b * s.gamma * radius.powf(s.gamma - 1.0) * y.powf(-m - 1.0);
                let dt = u * (-(n / s.lambda) + m * s.beta * b * rg / y) / t;
                let k = (s.amplitude * m * b * s.gamma).powf(p - 1.0);
                let div = -k * y.powf(-m - 1.0) * (n * y - m * s.gamma * b * rg);
                EvalResult::finite(u, grad, dt, div)
            }
            FamilyKind::DegenerateBarenblatt { c } => {
                let s = BarenblattScales::new(self.medium, t);
                let b = (p - 2.0) / p * s.time_factor;
                let m = (p - 1.0) / (p - 2.0);
                let rg = radius.powf(s.gamma);
                let y = c - b * rg;
                if y <= 0.0 {
                    EvalResult::ZERO
                } else {
                    let u = s.amplitude * y.powf(m);
                    let ym1 = y.powf(m - 1.0);
                    let grad = -s.amplitude * m * b * s.gamma * radius.powf(s.gamma - 1.0) * ym1;
                    let dt = (-(n / s.lambda) * u + s.amplitude * m * ym1 * s.beta * b * rg) / t;
                    let k = (s.amplitude * m * b * s.gamma).powf(p - 1.0);
                    let div = -k * ym1 * (n * y - m * s.gamma * b * rg);
                    EvalResult::finite(u, grad, dt, div)
                }
            }
            FamilyKind::InfinitePointSource { c } => power_profile(self.medium, p, c, radius, t),
            FamilyKind::PowerSupersolution { q, c } => power_profile(self.medium, q, c, radius, t),
        })
    }

    /// Fast path for the value alone.
    pub fn value(&self, radius: f64, t: f64) -> Extended {
        if t <= 0.0 {
            return if self.zero_extended { Extended::ZERO } else { Extended::Undefined };
        }
        let p = self.medium.p();
        match self.kind {
            FamilyKind::SingularBarenblatt { c } => {
                let s = BarenblattScales::new(self.medium, t);
                let b = (2.0 - p) / p * s.time_factor;
                let y = c + b * radius.powf(s.gamma);
                Extended::Finite(s.amplitude * y.powf(-(p - 1.0) / (2.0 - p)))
            }
            FamilyKind::DegenerateBarenblatt { c } => {
                let s = BarenblattScales::new(self.medium, t);
                let b = (p - 2.0) / p * s.time_factor;
                let y = c - b * radius.powf(s.gamma);
                Extended::Finite(if y > 0.0 { s.amplitude * y.powf((p - 1.0) / (p - 2.0)) } else { 0.0 })
            }
            FamilyKind::InfinitePointSource { c } => power_value(p, p, c, radius, t),
            FamilyKind::PowerSupersolution { q, c } => power_value(p, q, c, radius, t),
        }
    }

    /// `|∂_r u|`, fast path.
    pub fn gradient_abs(&self, radius: f64, t: f64) -> Extended {
        match self.evaluate(radius, t) {
            Ok(e) => match e.radial_gradient {
                Extended::Finite(g) => Extended::Finite(g.abs()),
                other => other,
            },
            Err(_) => Extended::Undefined,
        }
    }

    /// `liminf u(x,t)|x−x0|^{p/(2−p)}` as `(x,t) → (x0,s)` with `t > s`.
    pub fn pointwise_rate_exact(&self, x0_radius: f64, s: f64) -> Extended {
        if s < 0.0 || (s == 0.0 && !self.zero_extended) {
            return if self.zero_extended { Extended::ZERO } else { Extended::Undefined };
        }
        let p = self.medium.p();
        let k = 1.0 / (2.0 - p);
        match self.kind {
            FamilyKind::SingularBarenblatt { .. } | FamilyKind::DegenerateBarenblatt { .. } => Extended::ZERO,
            FamilyKind::InfinitePointSource { c } => rate_of_power(p, p, c, k, x0_radius, s),
            FamilyKind::PowerSupersolution { q, c } => rate_of_power(p, q, c, k, x0_radius, s),
        }
    }
}

fn rate_of_power(p: f64, q: f64, c: f64, k: f64, x0: f64, s: f64) -> Extended {
    if x0 > 0.0 {
        return Extended::ZERO;
    }
    if q > p {
        Extended::Infinite
    } else if q == p {
        Extended::Finite((c * s).powf(k))
    } else {
        Extended::ZERO
    }
}

/// Time-dependent factors shared by both Barenblatt profiles.
struct BarenblattScales {
    lambda: f64,
    gamma: f64,
    beta: f64,
    /// `(λt)^{−n/λ}`
    amplitude: f64,
    /// `(λt)^{−p/(λ(p−1))}`
    time_factor: f64,
}

impl BarenblattScales {
    fn new(medium: Medium, t: f64) -> Self {
        let p = medium.p();
        let lambda = medium.lambda();
        let tau = lambda * t;
        let beta = p / (lambda * (p - 1.0));
        Self {
            lambda,
            gamma: p / (p - 1.0),
            beta,
            amplitude: tau.powf(-medium.nf() / lambda),
            time_factor: tau.powf(-beta),
        }
    }
}

fn power_value(p: f64, q: f64, c: f64, radius: f64, t: f64) -> Extended {
    if radius == 0.0 {
        return Extended::Infinite;
    }
    let k = 1.0 / (2.0 - p);
    Extended::Finite((c * t).powf(k) * radius.powf(-q * k))
}

fn power_profile(medium: Medium, q: f64, c: f64, radius: f64, t: f64) -> EvalResult {
    if radius == 0.0 {
        return EvalResult::SINGULAR;
    }
    let p = medium.p();
    let n = medium.nf();
    let k = 1.0 / (2.0 - p);
    let aq = q * k;
    let u = (c * t).powf(k) * radius.powf(-aq);
    let dt = k * u / t;
    let grad = -aq * u / radius;
    let div = aq.powf(p - 1.0) * (aq - q + p - n) * (c * t).powf((p - 1.0) * k) * radius.powf(q - p - aq);
    EvalResult::finite(u, grad, dt, div)
}

/// Central-difference approximation of `∂_t u − div(|∇u|^{p−2}∇u)` using
/// only point values of the family.
pub fn pde_residual_fd(family: &SolutionFamily, radius: f64, t: f64, h: f64) -> Result<f64, ClosedFormError> {
    if !(h > 0.0 && h < radius / 4.0 && h < t / 4.0) {
        return Err(ClosedFormError::StepTooLarge { h, radius, t });
    }
    let val = |r: f64, s: f64| -> Result<f64, ClosedFormError> {
        family
            .value(r, s)
            .finite()
            .ok_or(ClosedFormError::UndefinedPoint { radius: r, t: s })
    };
    let p = family.medium().p();
    let n = family.medium().nf();
    let flux = |g: f64| if g == 0.0 { 0.0 } else { g.abs().powf(p - 2.0) * g };

    let dt = (val(radius, t + h)? - val(radius, t - h)?) / (2.0 * h);
    let u0 = val(radius, t)?;
    let f_plus = flux((val(radius + h, t)? - u0) / h);
    let f_minus = flux((u0 - val(radius - h, t)?) / h);
    let w_plus = ((radius + 0.5 * h) / radius).powf(n - 1.0);
    let w_minus = ((radius - 0.5 * h) / radius).powf(n - 1.0);
    let div = (w_plus * f_plus - w_minus * f_minus) / h;
    Ok(dt - div)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MassReport {
    pub c_used: f64,
    pub time_samples: Vec<f64>,
    pub masses: Vec<f64>,
    pub max_relative_spread: f64,
}

/// Relative accuracy targeted by [`total_mass`].
pub const MASS_QUAD_TOL: f64 = 1e-11;

/// `∫_{ℝⁿ} U(x,t) dx` for a fast-diffusion Barenblatt profile.
///
/// Log-spaced Gauss–Legendre panels around the profile's length scale,
/// plus the analytic tail of the `|x|^{−p/(2−p)}` envelope.
pub fn total_mass(family: &SolutionFamily, t: f64) -> Result<f64, ClosedFormError> {
    let FamilyKind::SingularBarenblatt { c } = family.kind else {
        return Err(ClosedFormError::QuadratureFailure(
            "mass is only defined for the fast-diffusion Barenblatt family".into(),
        ));
    };
    if t <= 0.0 {
        return Err(ClosedFormError::UndefinedPoint { radius: 0.0, t });
    }
    let medium = family.medium;
    let n = medium.nf();
    let p = medium.p();
    let s = BarenblattScales::new(medium, t);
    let b = (2.0 - p) / p * s.time_factor;
    let m = (p - 1.0) / (2.0 - p);
    let decay = medium.ips_power();
    let omega = unit_sphere_area(medium.n());
    let length = (c / b).powf(1.0 / s.gamma);

    // ∫ U r^{n-1} dr = ∫ U r^n d(ln r)
    let integrand = |log_r: f64| {
        let r = log_r.exp();
        s.amplitude * (c + b * r.powf(s.gamma)).powf(-m) * r.powf(n)
    };
    let rule = gauss(16);
    let r_head = length * 1e-8;
    let mut total = s.amplitude * c.powf(-m) * r_head.powf(n) / n;
    let mut lo = r_head.ln();
    let panel = 0.5;
    let max_log = (length * 1e40).ln();
    loop {
        let hi = lo + panel;
        total += rule.integrate(lo, hi, integrand);
        lo = hi;
        let r = lo.exp();
        // U ≤ A (b r^γ)^{-m} = A b^{-m} r^{-p/(2-p)}
        let tail = s.amplitude * b.powf(-m) * r.powf(n - decay) / (decay - n);
        if tail <= MASS_QUAD_TOL * 1e-2 * total {
            total += tail;
            break;
        }
        if lo > max_log {
            return Err(ClosedFormError::QuadratureFailure(format!(
                "tail bound {tail:e} did not reach tolerance"
            )));
        }
    }
    Ok(omega * total)
}

pub fn mass_report(family: &SolutionFamily, times: &[f64]) -> Result<MassReport, ClosedFormError> {
    let c_used = match family.kind {
        FamilyKind::SingularBarenblatt { c } => c,
        _ => {
            return Err(ClosedFormError::QuadratureFailure(
                "mass is only defined for the fast-diffusion Barenblatt family".into(),
            ))
        }
    };
    let masses = times
        .iter()
        .map(|&t| total_mass(family, t))
        .collect::<Result<Vec<_>, _>>()?;
    let lo = masses.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = masses.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(MassReport {
        c_used,
        time_samples: times.to_vec(),
        masses,
        max_relative_spread: if lo > 0.0 { (hi - lo) / lo } else { f64::INFINITY },
    })
}

/// Constant `c` of the fast-diffusion Barenblatt profile whose total mass
/// equals `target`, by bisection on the decreasing map `c ↦ mass`.
pub fn normalize_mass(medium: Medium, target: f64) -> Result<f64, ClosedFormError> {
    if !(target.is_finite() && target > 0.0) {
        return Err(ClosedFormError::InvalidConstant(target));
    }
    let mass = |c: f64| -> Result<f64, ClosedFormError> {
        total_mass(&SolutionFamily::singular_barenblatt(medium, c)?, 1.0)
    };
    let mut lo = 1.0;
    let mut hi = 1.0;
    let mut tries = 0;
    while mass(lo)? < target {
        lo *= 0.5;
        tries += 1;
        if tries > 400 {
            return Err(ClosedFormError::BracketFailure(target));
        }
    }
    while mass(hi)? > target {
        hi *= 2.0;
        tries += 1;
        if tries > 400 {
            return Err(ClosedFormError::BracketFailure(target));
        }
    }
    for _ in 0..200 {
        let mid = (lo * hi).sqrt();
        if mass(mid)? > target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi / lo - 1.0 < 1e-15 {
            break;
        }
    }
    Ok((lo * hi).sqrt())
}

/// Normalized-mass fast-diffusion Barenblatt profile.
pub fn normalized_barenblatt(medium: Medium) -> Result<SolutionFamily, ClosedFormError> {
    SolutionFamily::singular_barenblatt(medium, normalize_mass(medium, 1.0)?)
}

/// Writes evaluation rows as CSV; `+∞` is written as `inf`.
pub fn write_eval_csv<W: Write>(
    mut out: W,
    rows: impl IntoIterator<Item = (f64, f64, EvalResult)>,
) -> io::Result<()> {
    writeln!(out, "radius,t,value,radial_gradient,time_derivative,flux_divergence,residual")?;
    for (r, t, e) in rows {
        writeln!(
            out,
            "{:.16e},{:.16e},{},{},{},{},{}",
            r, t, e.value, e.radial_gradient, e.time_derivative, e.flux_divergence, e.residual
        )?;
    }
    Ok(())
}
