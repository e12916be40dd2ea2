//! Extended reals: a finite value, a genuine `+∞`, or an undefined marker.
//!
//! No arithmetic is implemented on [`Extended`]; callers must unwrap the
//! finite case explicitly before computing with it.

use std::fmt;

use serde::{Serialize, Serializer};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Extended {
    Finite(f64),
    /// The quantity is `+∞` (e.g. the point-source value at the origin).
    Infinite,
    /// The quantity has no meaning at this point.
    Undefined,
}

impl Extended {
    pub const ZERO: Extended = Extended::Finite(0.0);

    pub fn finite(self) -> Option<f64> {
        match self {
            Extended::Finite(v) => Some(v),
            _ => None,
        }
    }

    pub fn is_finite(self) -> bool {
        matches!(self, Extended::Finite(_))
    }

    pub fn is_infinite(self) -> bool {
        matches!(self, Extended::Infinite)
    }

    /// `f64` view with `+∞ → f64::INFINITY` and undefined → NaN.
    pub fn to_f64_lossy(self) -> f64 {
        match self {
            Extended::Finite(v) => v,
            Extended::Infinite => f64::INFINITY,
            Extended::Undefined => f64::NAN,
        }
    }
}

impl From<f64> for Extended {
    /// Overflowed or NaN floats are not silently promoted to the `+∞`
    /// marker; they map to [`Extended::Undefined`].
    fn from(v: f64) -> Self {
        if v.is_finite() {
            Extended::Finite(v)
        } else {
            Extended::Undefined
        }
    }
}

impl fmt::Display for Extended {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Extended::Finite(v) => write!(f, "{v:.16e}"),
            Extended::Infinite => f.write_str("inf"),
            Extended::Undefined => f.write_str("nan"),
        }
    }
}

impl Serialize for Extended {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Extended::Finite(v) => s.serialize_f64(*v),
            Extended::Infinite => s.serialize_str("inf"),
            Extended::Undefined => s.serialize_none(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overflow_is_not_infinity() {
        assert_eq!(Extended::from(f64::INFINITY), Extended::Undefined);
        assert_eq!(Extended::from(2.5), Extended::Finite(2.5));
    }

    #[test]
    fn display_uses_inf_literal() {
        assert_eq!(Extended::Infinite.to_string(), "inf");
        assert_eq!(serde_json::to_string(&Extended::Infinite).unwrap(), "\"inf\"");
    }
}
