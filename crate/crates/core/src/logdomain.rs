//! Signed values stored as `sign * exp(log_magnitude)`, for series whose
//! terms overflow `f64` long before their sum is used.

use std::cmp::Ordering;
use std::ops::{Add, Mul};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogValue {
    pub sign: i8,
    pub log_magnitude: f64,
}

impl LogValue {
    pub const ZERO: LogValue = LogValue {
        sign: 0,
        log_magnitude: f64::NEG_INFINITY,
    };

    pub fn from_log(log_magnitude: f64) -> Self {
        Self {
            sign: 1,
            log_magnitude,
        }
    }

    pub fn from_f64(x: f64) -> Self {
        match x.partial_cmp(&0.0) {
            Some(Ordering::Greater) => Self {
                sign: 1,
                log_magnitude: x.ln(),
            },
            Some(Ordering::Less) => Self {
                sign: -1,
                log_magnitude: (-x).ln(),
            },
            _ => Self::ZERO,
        }
    }

    pub fn to_f64(self) -> f64 {
        if self.sign == 0 {
            0.0
        } else {
            f64::from(self.sign) * self.log_magnitude.exp()
        }
    }

    pub fn is_zero(&self) -> bool {
        self.sign == 0
    }
}

impl Add for LogValue {
    type Output = LogValue;

    fn add(self, rhs: LogValue) -> LogValue {
        if self.is_zero() {
            return rhs;
        }
        if rhs.is_zero() {
            return self;
        }
        let (big, small) = if self.log_magnitude >= rhs.log_magnitude {
            (self, rhs)
        } else {
            (rhs, self)
        };
        let ratio = (small.log_magnitude - big.log_magnitude).exp();
        if big.sign == small.sign {
            LogValue {
                sign: big.sign,
                log_magnitude: big.log_magnitude + ratio.ln_1p(),
            }
        } else if ratio == 1.0 {
            LogValue::ZERO
        } else {
            LogValue {
                sign: big.sign,
                log_magnitude: big.log_magnitude + (-ratio).ln_1p(),
            }
        }
    }
}

impl Mul for LogValue {
    type Output = LogValue;

    fn mul(self, rhs: LogValue) -> LogValue {
        if self.is_zero() || rhs.is_zero() {
            return LogValue::ZERO;
        }
        LogValue {
            sign: self.sign * rhs.sign,
            log_magnitude: self.log_magnitude + rhs.log_magnitude,
        }
    }
}

/// `ln(sinh x)` for `x > 0`, finite for arbitrarily large `x`.
pub fn ln_sinh(x: f64) -> f64 {
    if x > 20.0 {
        x - std::f64::consts::LN_2 + (-(-2.0 * x).exp()).ln_1p()
    } else {
        x.sinh().ln()
    }
}

/// Table of `ln n!` for `n < len`, built by running sums.
pub fn ln_factorials(len: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(len);
    let mut acc = 0.0;
    for n in 0..len {
        if n > 1 {
            acc += (n as f64).ln();
        }
        out.push(acc);
    }
    out
}

/// Log-domain sum of a series of positive terms given by their logarithms.
/// Terms are generated until the series has passed its peak and the current
/// term lies `cutoff_nats` below the largest one seen.
pub fn sum_positive_log_series(mut log_term: impl FnMut(usize) -> f64, cutoff_nats: f64) -> f64 {
    let mut acc = LogValue::ZERO;
    let mut peak = f64::NEG_INFINITY;
    let mut prev = f64::NEG_INFINITY;
    let mut n = 0usize;
    loop {
        let t = log_term(n);
        acc = acc + LogValue::from_log(t);
        peak = peak.max(t);
        let descending = t < prev;
        if descending && t < peak - cutoff_nats {
            break;
        }
        prev = t;
        n += 1;
    }
    acc.log_magnitude
}
