//! Parameter regimes, critical exponents and the Moser exponent ladder.
//!
//! Exponent arithmetic is plain `f64`; comparisons that need slack use
//! [`EXPONENT_TOL`]. Regime boundaries are decided by exact comparison of
//! `p·(n+1)` against `2n`, never with a tolerance.

use serde::{Serialize, Serializer};
use thiserror::Error;

/// Comparison tolerance for exponent identities.
pub const EXPONENT_TOL: f64 = 1e-12;

/// Default step cap for [`moser_sequence`].
pub const DEFAULT_MOSER_CAP: usize = 64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExponentError {
    #[error("invalid medium: dimension must be >= 1 (got {0})")]
    InvalidDimension(u32),
    #[error("invalid medium: p must be a finite number > 1 (got {0})")]
    InvalidExponent(f64),
    #[error("operation requires the supercritical fast-diffusion range, medium is {0:?}")]
    WrongRegime(Regime),
    #[error("starting exponent {s0} is below the fixed point {s_critical}; the ladder decreases")]
    NonIterable { s0: f64, s_critical: f64 },
    #[error("exponent 1 not reached within {cap} steps (last value {last})")]
    CapExceeded { cap: usize, last: f64 },
}

/// Spatial dimension and diffusion exponent of `∂_t u = div(|∇u|^{p-2}∇u)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, serde::Deserialize)]
#[serde(try_from = "RawMedium")]
pub struct Medium {
    n: u32,
    p: f64,
}

#[derive(serde::Deserialize)]
struct RawMedium {
    n: u32,
    p: f64,
}

impl TryFrom<RawMedium> for Medium {
    type Error = ExponentError;
    fn try_from(raw: RawMedium) -> Result<Self, Self::Error> {
        Medium::new(raw.n, raw.p)
    }
}

impl Medium {
    pub fn new(n: u32, p: f64) -> Result<Self, ExponentError> {
        if n == 0 {
            return Err(ExponentError::InvalidDimension(n));
        }
        if !(p.is_finite() && p > 1.0) {
            return Err(ExponentError::InvalidExponent(p));
        }
        Ok(Self { n, p })
    }

    pub fn n(&self) -> u32 {
        self.n
    }

    pub fn nf(&self) -> f64 {
        f64::from(self.n)
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn regime(&self) -> Regime {
        classify_regime(*self)
    }

    pub fn is_supercritical_fast(&self) -> bool {
        self.regime() == Regime::SupercriticalFast
    }

    /// `λ = n(p−2)+p`, evaluated as `(n+1)p − 2n` so that its sign agrees
    /// bit-for-bit with the regime comparison.
    pub fn lambda(&self) -> f64 {
        (self.nf() + 1.0) * self.p - 2.0 * self.nf()
    }

    /// Spatial decay exponent `p/(2−p)` of the point-source profile.
    pub fn ips_power(&self) -> f64 {
        self.p / (2.0 - self.p)
    }

    pub fn exponents(&self) -> ExponentTable {
        exponent_table(*self)
    }

    pub(crate) fn require_supercritical(&self) -> Result<(), ExponentError> {
        match self.regime() {
            Regime::SupercriticalFast => Ok(()),
            other => Err(ExponentError::WrongRegime(other)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Regime {
    /// `p > 2`
    SlowDiffusion,
    /// `p = 2`
    Heat,
    /// `2n/(n+1) < p < 2`
    SupercriticalFast,
    /// `1 < p ≤ 2n/(n+1)`
    CriticalOrSubcritical,
}

pub fn classify_regime(medium: Medium) -> Regime {
    let p = medium.p;
    if p > 2.0 {
        Regime::SlowDiffusion
    } else if p == 2.0 {
        Regime::Heat
    } else if (medium.nf() + 1.0) * p > 2.0 * medium.nf() {
        Regime::SupercriticalFast
    } else {
        Regime::CriticalOrSubcritical
    }
}

/// Every critical exponent attached to a [`Medium`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExponentTable {
    pub n: u32,
    pub p: f64,
    pub regime: Regime,
    pub lambda: f64,
    /// Upper endpoint `p−1+p/n` of Barenblatt-class integrability (excluded).
    pub q_barenblatt: f64,
    /// Upper endpoint `p−1+1/(n+1)` of gradient integrability (excluded).
    pub q_gradient: f64,
    /// `n(2−p)/p`, the integrability threshold separating the two classes.
    pub s_critical: f64,
    /// `n(2−p)/2`, the gradient threshold of the point-source solution.
    pub g_critical: f64,
    pub sobolev_q: SobolevExponent,
}

/// The affine map `m ↦ p + (p/n)·m` of the parabolic Sobolev inequality.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SobolevExponent {
    pub offset: f64,
    pub slope: f64,
}

impl SobolevExponent {
    pub fn at(&self, m: f64) -> f64 {
        self.offset + self.slope * m
    }
}

impl Serialize for SobolevExponent {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        let mut st = s.serialize_struct("SobolevExponent", 2)?;
        st.serialize_field("offset", &self.offset)?;
        st.serialize_field("slope", &self.slope)?;
        st.end()
    }
}

impl ExponentTable {
    pub fn sobolev_q(&self, m: f64) -> f64 {
        self.sobolev_q.at(m)
    }
}

pub fn exponent_table(medium: Medium) -> ExponentTable {
    let n = medium.nf();
    let p = medium.p;
    ExponentTable {
        n: medium.n,
        p,
        regime: medium.regime(),
        lambda: medium.lambda(),
        q_barenblatt: p - 1.0 + p / n,
        q_gradient: p - 1.0 + 1.0 / (n + 1.0),
        s_critical: n * (2.0 - p) / p,
        g_critical: n * (2.0 - p) / 2.0,
        sobolev_q: SobolevExponent { offset: p, slope: p / n },
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MoserTrace {
    pub s0: f64,
    /// `s_0, s_1, …` with `s_i = s_{i−1}(1+p/n) − (2−p)`.
    pub steps: Vec<f64>,
    pub first_ge_one: Option<usize>,
    /// Largest `|recursive s_i − closed-form s_i|` over the trace.
    pub closed_form_check: f64,
}

/// Closed form of the ladder: `(1+p/n)^i (s0 − s*) + s*`.
pub fn moser_closed_form(medium: Medium, s0: f64, i: usize) -> f64 {
    let s_star = exponent_table(medium).s_critical;
    let growth = 1.0 + medium.p / medium.nf();
    growth.powi(i as i32) * (s0 - s_star) + s_star
}

/// Iterates the Moser exponent ladder from `s0` until it reaches 1.
pub fn moser_sequence(medium: Medium, s0: f64, cap: usize) -> Result<MoserTrace, ExponentError> {
    medium.require_supercritical()?;
    let s_star = exponent_table(medium).s_critical;
    if (s0 - s_star).abs() <= EXPONENT_TOL {
        // Fixed point: the exact sequence is constant and never reaches 1.
        return Ok(MoserTrace {
            s0,
            steps: vec![s0; cap + 1],
            first_ge_one: None,
            closed_form_check: 0.0,
        });
    }
    if s0 < s_star {
        return Err(ExponentError::NonIterable { s0, s_critical: s_star });
    }

    let growth = 1.0 + medium.p / medium.nf();
    let shift = 2.0 - medium.p;
    let mut steps = vec![s0];
    let mut check = 0.0f64;
    let mut current = s0;
    for i in 0..=cap {
        check = check.max((current - moser_closed_form(medium, s0, i)).abs());
        if current >= 1.0 {
            return Ok(MoserTrace {
                s0,
                steps,
                first_ge_one: Some(i),
                closed_form_check: check,
            });
        }
        if i == cap {
            break;
        }
        current = current * growth - shift;
        steps.push(current);
    }
    Err(ExponentError::CapExceeded { cap, last: current })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(n: u32, p: f64) -> Medium {
        Medium::new(n, p).unwrap()
    }

    #[test]
    fn regimes() {
        assert_eq!(classify_regime(m(2, 1.5)), Regime::SupercriticalFast);
        assert_eq!(classify_regime(m(2, 3.0)), Regime::SlowDiffusion);
        assert_eq!(classify_regime(m(3, 1.4)), Regime::CriticalOrSubcritical);
        assert_eq!(classify_regime(m(3, 1.5)), Regime::CriticalOrSubcritical);
        assert_eq!(classify_regime(m(4, 2.0)), Regime::Heat);
    }

    #[test]
    fn invalid_media() {
        assert_eq!(Medium::new(0, 1.5), Err(ExponentError::InvalidDimension(0)));
        assert!(Medium::new(2, 1.0).is_err());
        assert!(Medium::new(2, f64::NAN).is_err());
    }

    #[test]
    fn table_values() {
        let t = exponent_table(m(2, 1.5));
        assert!((t.lambda - 0.5).abs() < 1e-12);
        assert!((t.q_barenblatt - 1.25).abs() < 1e-12);
        assert!((t.q_gradient - 5.0 / 6.0).abs() < 1e-12);
        assert!((t.s_critical - 2.0 / 3.0).abs() < 1e-12);
        assert!((t.g_critical - 0.5).abs() < 1e-12);
        assert!((t.sobolev_q(2.0) - 3.0).abs() < 1e-12);

        let t = exponent_table(m(3, 1.8));
        assert!((t.lambda - 1.2).abs() < 1e-12);
        assert!((t.q_barenblatt - 1.4).abs() < 1e-12);
        assert!((t.q_gradient - 1.05).abs() < 1e-12);
        assert!((t.s_critical - 1.0 / 3.0).abs() < 1e-12);

        // n(2-p)/p = 0.5/1.5
        let t = exponent_table(m(1, 1.5));
        assert!((t.lambda - 1.0).abs() < 1e-12);
        assert!((t.s_critical - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn moser_fixed_point_and_trivial_start() {
        let md = m(2, 1.5);
        let fixed = moser_sequence(md, 2.0 / 3.0, DEFAULT_MOSER_CAP).unwrap();
        assert!(fixed.first_ge_one.is_none());
        assert!(fixed.steps.iter().all(|&s| s == 2.0 / 3.0));

        let one = moser_sequence(md, 1.0, DEFAULT_MOSER_CAP).unwrap();
        assert_eq!(one.first_ge_one, Some(0));
        assert_eq!(one.steps, vec![1.0]);
    }

    #[test]
    fn moser_errors() {
        let md = m(2, 1.5);
        assert!(matches!(
            moser_sequence(md, 0.5, 64),
            Err(ExponentError::NonIterable { .. })
        ));
        assert!(matches!(
            moser_sequence(md, 0.6667, 3),
            Err(ExponentError::CapExceeded { cap: 3, .. })
        ));
        assert!(matches!(
            moser_sequence(m(2, 3.0), 0.7, 64),
            Err(ExponentError::WrongRegime(Regime::SlowDiffusion))
        ));
    }

    #[test]
    fn table_serializes_with_listed_names() {
        let json = serde_json::to_value(exponent_table(m(2, 1.5))).unwrap();
        for key in ["lambda", "q_barenblatt", "q_gradient", "s_critical", "g_critical", "sobolev_q"] {
            assert!(json.get(key).is_some(), "missing {key}");
        }
        assert_eq!(json["lambda"], 0.5);
    }
}
