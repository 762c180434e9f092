use core::fmt;

/// Errors surfaced by the numerical layer.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// An integration produced a non-finite state (blow-up). Callers should
    /// cut off the vector field before integrating backward.
    NonFiniteState { t: f64 },
    /// Cutoff radii out of order (`r_keep >= r_zero`).
    BadRadii { r_keep: f64, r_zero: f64 },
    /// Unknown example-registry identifier.
    UnknownExample,
    /// Domain parameters violate the kind's invariants.
    InvalidDomain(&'static str),
    /// A filter eigenvalue has non-negative real part.
    NotHurwitz { re: f64 },
    /// Controllability matrix of `(A_o, B_o)` is rank-deficient.
    NotControllable { cond: f64 },
    /// Requested truncation horizon is shorter than the tail bound allows.
    TauTooShort { requested: f64, required: f64 },
    /// Transform queried outside the cutoff ball where the backward
    /// invariantization is valid.
    OutsideCutoff { norm: f64, r_zero: f64 },
    /// Hausdorff distance of an empty set is undefined.
    EmptySet,
    /// Tuple distance requires tuples of equal length.
    LengthMismatch { a: usize, b: usize },
    /// Tuple distance enumerates permutations; p > 8 is rejected.
    TooLarge { p: usize },
    /// The output signal does not cover the requested integration span.
    SignalGap { t: f64, lo: f64, hi: f64 },
    /// Lie-derivative order not reachable with finite-difference Jacobians.
    OrderTooHigh { m: usize, max: usize },
    /// Generic precondition failure with a short description.
    Precondition(&'static str),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::NonFiniteState { t } => write!(f, "non-finite state at t = {t}"),
            Error::BadRadii { r_keep, r_zero } => {
                write!(f, "cutoff radii must satisfy r_keep < r_zero, got {r_keep} >= {r_zero}")
            }
            Error::UnknownExample => write!(f, "unknown example name"),
            Error::InvalidDomain(msg) => write!(f, "invalid domain: {msg}"),
            Error::NotHurwitz { re } => {
                write!(f, "filter spectrum not Hurwitz: eigenvalue real part {re} >= 0")
            }
            Error::NotControllable { cond } => {
                write!(f, "pair (A_o, B_o) not controllable (condition {cond:e})")
            }
            Error::TauTooShort { requested, required } => {
                write!(f, "horizon {requested} below truncation bound {required}")
            }
            Error::OutsideCutoff { norm, r_zero } => {
                write!(f, "query at |x| = {norm} outside cutoff ball r_zero = {r_zero}")
            }
            Error::EmptySet => write!(f, "empty point set"),
            Error::LengthMismatch { a, b } => write!(f, "tuple lengths differ: {a} vs {b}"),
            Error::TooLarge { p } => write!(f, "tuple length {p} exceeds enumeration limit 8"),
            Error::SignalGap { t, lo, hi } => {
                write!(f, "output signal does not cover t = {t} (span [{lo}, {hi}])")
            }
            Error::OrderTooHigh { m, max } => {
                write!(f, "Lie-derivative order {m} exceeds finite-difference limit {max}")
            }
            Error::Precondition(msg) => write!(f, "precondition violated: {msg}"),
        }
    }
}

impl core::error::Error for Error {}

pub type Result<T> = core::result::Result<T, Error>;
