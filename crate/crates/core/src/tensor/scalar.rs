use std::cmp::Ordering;
use std::fmt;
use std::ops::{Div, Mul};

/// A real number stored as `sign * exp(log_mag)`.
///
/// Coset probabilities of large codes are far below the smallest positive
/// `f64`, so every contraction value travels in this form.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LogScalar {
    sign: i8,
    log_mag: f64,
}

impl LogScalar {
    pub const ZERO: LogScalar = LogScalar { sign: 0, log_mag: 0.0 };
    pub const ONE: LogScalar = LogScalar { sign: 1, log_mag: 0.0 };

    /// Builds a value from a sign and a log-magnitude. A zero sign yields
    /// [`LogScalar::ZERO`]; a non-finite log-magnitude is rejected.
    pub fn new(sign: i8, log_mag: f64) -> Self {
        match sign.signum() {
            0 => Self::ZERO,
            s => {
                if log_mag == f64::NEG_INFINITY {
                    return Self::ZERO;
                }
                assert!(log_mag.is_finite(), "non-finite log magnitude {log_mag}");
                LogScalar { sign: s, log_mag }
            }
        }
    }

    pub fn from_f64(x: f64) -> Self {
        assert!(x.is_finite(), "non-finite value {x}");
        if x == 0.0 {
            Self::ZERO
        } else {
            LogScalar {
                sign: if x > 0.0 { 1 } else { -1 },
                log_mag: x.abs().ln(),
            }
        }
    }

    /// `exp(log_mag)` with positive sign.
    pub fn from_ln(log_mag: f64) -> Self {
        Self::new(1, log_mag)
    }

    pub fn sign(&self) -> i8 {
        self.sign
    }

    /// Natural log of the magnitude. Meaningless when the sign is zero.
    pub fn log_mag(&self) -> f64 {
        self.log_mag
    }

    pub fn is_zero(&self) -> bool {
        self.sign == 0
    }

    /// Converts back to `f64`; underflows to zero for tiny magnitudes.
    pub fn to_f64(&self) -> f64 {
        if self.sign == 0 {
            0.0
        } else {
            f64::from(self.sign) * self.log_mag.exp()
        }
    }

    pub fn abs(&self) -> Self {
        LogScalar {
            sign: self.sign.abs(),
            log_mag: self.log_mag,
        }
    }

    pub fn recip(&self) -> Option<Self> {
        (self.sign != 0).then(|| LogScalar {
            sign: self.sign,
            log_mag: -self.log_mag,
        })
    }

    /// Multiplies by `exp(shift)`.
    pub fn scale_ln(&self, shift: f64) -> Self {
        if self.sign == 0 {
            *self
        } else {
            Self::new(self.sign, self.log_mag + shift)
        }
    }

    /// Sum of two values, evaluated without leaving log space.
    pub fn add(&self, other: &Self) -> Self {
        if self.sign == 0 {
            return *other;
        }
        if other.sign == 0 {
            return *self;
        }
        let (hi, lo) = if self.log_mag >= other.log_mag {
            (self, other)
        } else {
            (other, self)
        };
        let ratio = (lo.log_mag - hi.log_mag).exp();
        let factor = if hi.sign == lo.sign {
            1.0 + ratio
        } else {
            1.0 - ratio
        };
        if factor == 0.0 {
            Self::ZERO
        } else {
            Self::new(hi.sign, hi.log_mag + factor.ln())
        }
    }

    /// |self - other| / |other|, computed in log space. Returns infinity when
    /// `other` is zero and `self` is not.
    pub fn rel_diff(&self, other: &Self) -> f64 {
        match (self.sign, other.sign) {
            (0, 0) => 0.0,
            (_, 0) => f64::INFINITY,
            (0, _) => 1.0,
            (a, b) if a != b => 1.0 + (self.log_mag - other.log_mag).exp(),
            _ => (self.log_mag - other.log_mag).exp_m1().abs(),
        }
    }

    /// Total order on the represented real numbers.
    pub fn cmp_value(&self, other: &Self) -> Ordering {
        match self.sign.cmp(&other.sign) {
            Ordering::Equal => match self.sign {
                0 => Ordering::Equal,
                1 => self.log_mag.total_cmp(&other.log_mag),
                _ => other.log_mag.total_cmp(&self.log_mag),
            },
            ord => ord,
        }
    }
}

impl Default for LogScalar {
    fn default() -> Self {
        Self::ONE
    }
}

impl Mul for LogScalar {
    type Output = LogScalar;

    fn mul(self, rhs: LogScalar) -> LogScalar {
        if self.sign == 0 || rhs.sign == 0 {
            Self::ZERO
        } else {
            Self::new(self.sign * rhs.sign, self.log_mag + rhs.log_mag)
        }
    }
}

impl Div for LogScalar {
    type Output = LogScalar;

    /// Panics on division by zero.
    #[allow(clippy::suspicious_arithmetic_impl)]
    fn div(self, rhs: LogScalar) -> LogScalar {
        self * rhs.recip().expect("LogScalar division by zero")
    }
}

impl std::iter::Product for LogScalar {
    fn product<I: Iterator<Item = LogScalar>>(iter: I) -> Self {
        iter.fold(Self::ONE, |acc, x| acc * x)
    }
}

impl fmt::Display for LogScalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.sign {
            0 => write!(f, "0"),
            1 => write!(f, "exp({})", self.log_mag),
            _ => write!(f, "-exp({})", self.log_mag),
        }
    }
}
