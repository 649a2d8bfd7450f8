//! Shared domain types: simulated time, classifier and context identifiers,
//! and individual score records.

use std::fmt;
use std::ops::{Add, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A point in simulated time, in integer milliseconds.
///
/// Signed so that window bounds such as `t_now - window` stay meaningful
/// before the window has fully elapsed.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct TimeInstant(pub i64);

/// A non-negative length of simulated time, in integer milliseconds.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct TimeSpan(u64);

/// Simulation times stay below 2^53 ms so they round-trip through f64.
pub const MAX_TIME_MS: i64 = 1 << 53;

impl TimeInstant {
    pub const ZERO: TimeInstant = TimeInstant(0);

    pub fn from_millis(ms: i64) -> Self {
        TimeInstant(ms)
    }

    pub fn as_millis(self) -> i64 {
        self.0
    }

    /// Span from `earlier` to `self`; zero if `earlier` is later.
    pub fn since(self, earlier: TimeInstant) -> TimeSpan {
        TimeSpan(self.0.saturating_sub(earlier.0).max(0) as u64)
    }
}

impl TimeSpan {
    pub const ZERO: TimeSpan = TimeSpan(0);
    pub const MAX: TimeSpan = TimeSpan(MAX_TIME_MS as u64);

    pub fn from_millis(ms: u64) -> Self {
        TimeSpan(ms)
    }

    pub fn from_secs(s: u64) -> Self {
        TimeSpan(s * 1000)
    }

    pub fn as_millis(self) -> u64 {
        self.0
    }

    fn signed(self) -> i64 {
        self.0.min(MAX_TIME_MS as u64) as i64
    }
}

impl Add<TimeSpan> for TimeInstant {
    type Output = TimeInstant;
    fn add(self, rhs: TimeSpan) -> TimeInstant {
        TimeInstant(self.0.saturating_add(rhs.signed()))
    }
}

impl Sub<TimeSpan> for TimeInstant {
    type Output = TimeInstant;
    fn sub(self, rhs: TimeSpan) -> TimeInstant {
        TimeInstant(self.0.saturating_sub(rhs.signed()))
    }
}

impl Add for TimeSpan {
    type Output = TimeSpan;
    fn add(self, rhs: TimeSpan) -> TimeSpan {
        TimeSpan(self.0.saturating_add(rhs.0))
    }
}

impl fmt::Display for TimeInstant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}ms", self.0)
    }
}

impl fmt::Display for TimeSpan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}ms", self.0)
    }
}

macro_rules! string_id {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(String);

        impl $name {
            pub fn new(s: impl Into<String>) -> Self {
                $name(s.into())
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                $name(s.to_owned())
            }
        }

        impl std::borrow::Borrow<str> for $name {
            fn borrow(&self) -> &str {
                &self.0
            }
        }
    };
}

string_id!(
    /// Identifies one classifier (sensor plus matcher) within an experiment.
    ClassifierId
);
string_id!(
    /// Discrete label for the authentication environment, e.g. `SF+LN`.
    ContextLabel
);

/// One classifier score. Scores are similarities: higher means more likely
/// genuine. Distance-type matchers must be negated before ingestion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub cid: ClassifierId,
    pub alpha: f64,
    pub t: TimeInstant,
}

impl ScoreRecord {
    pub fn new(cid: impl Into<ClassifierId>, alpha: f64, t: TimeInstant) -> Self {
        ScoreRecord {
            cid: cid.into(),
            alpha,
            t,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.alpha.is_finite() {
            return Err(Error::Validation(format!(
                "score for classifier {} at {} is not finite ({})",
                self.cid, self.t, self.alpha
            )));
        }
        if self.t.0.abs() >= MAX_TIME_MS {
            return Err(Error::Validation(format!(
                "timestamp {} outside the simulated time range",
                self.t
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn window_bound_goes_negative_before_window_elapses() {
        let t = TimeInstant(3_000) - TimeSpan::from_secs(10);
        assert_eq!(t, TimeInstant(-7_000));
    }

    #[test]
    fn since_clamps_at_zero() {
        assert_eq!(TimeInstant(5).since(TimeInstant(9)), TimeSpan::ZERO);
        assert_eq!(TimeInstant(9).since(TimeInstant(5)), TimeSpan::from_millis(4));
    }

    #[test]
    fn rejects_non_finite_alpha() {
        assert!(ScoreRecord::new("c1", f64::NAN, TimeInstant(1)).validate().is_err());
        assert!(ScoreRecord::new("c1", f64::INFINITY, TimeInstant(1))
            .validate()
            .is_err());
        assert!(ScoreRecord::new("c1", 0.3, TimeInstant(1)).validate().is_ok());
    }
}
