//! Base dynamics: the doubling map on the circle, carried out exactly on
//! binary digit sequences.
//!
//! A [`BasePoint`] stores a finite run of binary digits `0.b_1 b_2 b_3 ...`.
//! Doubling is a left shift, so forward orbits are exact for as many
//! iterates as there are stored digits. The number of stored digits is the
//! point's *capacity*; every forward iterate consumes one.

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Default number of stored digits for generated points.
pub const DEFAULT_CAPACITY: usize = 128;

/// A point of the base circle `[0, 1)` given by its binary expansion.
#[derive(Clone)]
pub struct BasePoint {
    digits: Arc<[u8]>,
    start: usize,
}

impl BasePoint {
    /// Builds a point from digits (each 0 or 1), most significant first.
    pub fn from_digits(digits: &[u8]) -> Result<Self> {
        if let Some(bad) = digits.iter().find(|&&d| d > 1) {
            return Err(Error::InvalidArgument(format!("binary digit {bad}")));
        }
        Ok(Self {
            digits: digits.into(),
            start: 0,
        })
    }

    /// Parses a string of '0'/'1' characters, most significant first.
    pub fn parse(s: &str) -> Result<Self> {
        let digits = s
            .chars()
            .map(|c| match c {
                '0' => Ok(0u8),
                '1' => Ok(1u8),
                other => Err(Error::InvalidArgument(format!(
                    "invalid digit '{other}' in base point"
                ))),
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_digits(&digits)
    }

    pub fn zero(capacity: usize) -> Self {
        Self {
            digits: vec![0u8; capacity].into(),
            start: 0,
        }
    }

    /// Exact binary expansion of `num / den` (reduced mod 1), truncated to
    /// `capacity` digits.
    pub fn from_rational(num: u64, den: u64, capacity: usize) -> Result<Self> {
        if den == 0 {
            return Err(Error::InvalidArgument("zero denominator".into()));
        }
        let mut r = u128::from(num % den);
        let den = u128::from(den);
        let mut digits = Vec::with_capacity(capacity);
        for _ in 0..capacity {
            r *= 2;
            if r >= den {
                digits.push(1);
                r -= den;
            } else {
                digits.push(0);
            }
        }
        Self::from_digits(&digits)
    }

    /// Grid node `i / n` for `n` a power of two.
    pub fn dyadic(i: usize, n: usize, capacity: usize) -> Result<Self> {
        if !n.is_power_of_two() {
            return Err(Error::InvalidArgument(format!(
                "dyadic denominator {n} is not a power of two"
            )));
        }
        Self::from_rational((i % n) as u64, n as u64, capacity)
    }

    /// Binary expansion of a float in `[0, 1)`. Digits past the float's
    /// mantissa are zero.
    pub fn from_f64(x: f64, capacity: usize) -> Result<Self> {
        if !(0.0..1.0).contains(&x) {
            return Err(Error::InvalidArgument(format!("{x} is not in [0, 1)")));
        }
        let mut v = x;
        let mut digits = Vec::with_capacity(capacity);
        for _ in 0..capacity {
            v *= 2.0;
            if v >= 1.0 {
                digits.push(1);
                v -= 1.0;
            } else {
                digits.push(0);
            }
        }
        Self::from_digits(&digits)
    }

    /// Draws `capacity` independent fair digits.
    pub fn random<R: Rng + ?Sized>(rng: &mut R, capacity: usize) -> Self {
        let digits: Vec<u8> = (0..capacity).map(|_| rng.gen_range(0..2u8)).collect();
        Self {
            digits: digits.into(),
            start: 0,
        }
    }

    pub fn capacity(&self) -> usize {
        self.digits.len() - self.start
    }

    pub fn digits(&self) -> &[u8] {
        &self.digits[self.start..]
    }

    /// Nearest double to the stored (truncated) expansion.
    pub fn value(&self) -> f64 {
        let d = self.digits();
        let m = d.len().min(64);
        d[..m]
            .iter()
            .rev()
            .fold(0.0, |acc, &b| (acc + f64::from(b)) * 0.5)
    }

    /// `f^n(x)`: drops the leading `n` digits.
    pub fn forward(&self, n: usize) -> Result<Self> {
        if n > self.capacity() {
            return Err(Error::CapacityExhausted {
                needed: n,
                available: self.capacity(),
            });
        }
        Ok(Self {
            digits: Arc::clone(&self.digits),
            start: self.start + n,
        })
    }

    /// The forward orbit `x, f x, ..., f^n x`.
    pub fn orbit(&self, n: usize) -> Result<Vec<Self>> {
        if n > self.capacity() {
            return Err(Error::CapacityExhausted {
                needed: n,
                available: self.capacity(),
            });
        }
        (0..=n).map(|k| self.forward(k)).collect()
    }

    /// The two preimages `x/2` and `(x+1)/2`, in branch order.
    pub fn preimages(&self) -> [Self; 2] {
        [self.prepend(0), self.prepend(1)]
    }

    fn prepend(&self, digit: u8) -> Self {
        let mut v = Vec::with_capacity(self.capacity() + 1);
        v.push(digit);
        v.extend_from_slice(self.digits());
        Self {
            digits: v.into(),
            start: 0,
        }
    }

    /// `x + 2^{-k}` mod 1, exact. Requires `1 <= k <= capacity`.
    pub fn add_dyadic(&self, k: usize) -> Result<Self> {
        self.shift_dyadic(k, false)
    }

    /// `x - 2^{-k}` mod 1, exact.
    pub fn sub_dyadic(&self, k: usize) -> Result<Self> {
        self.shift_dyadic(k, true)
    }

    fn shift_dyadic(&self, k: usize, subtract: bool) -> Result<Self> {
        if k == 0 || k > self.capacity() {
            return Err(Error::CapacityExhausted {
                needed: k,
                available: self.capacity(),
            });
        }
        let mut v = self.digits().to_vec();
        // ripple carry (or borrow) from digit k toward the most significant
        for d in v[..k].iter_mut().rev() {
            if subtract {
                if *d == 1 {
                    *d = 0;
                    break;
                }
                *d = 1;
            } else {
                if *d == 0 {
                    *d = 1;
                    break;
                }
                *d = 0;
            }
        }
        Self::from_digits(&v)
    }

    /// Leading digits as a '0'/'1' string (at most `len` of them).
    pub fn prefix_string(&self, len: usize) -> String {
        self.digits()
            .iter()
            .take(len)
            .map(|&d| if d == 1 { '1' } else { '0' })
            .collect()
    }

    pub fn to_digit_string(&self) -> String {
        self.prefix_string(self.capacity())
    }
}

// equality is on the remaining digits, not on the shared buffer
impl PartialEq for BasePoint {
    fn eq(&self, other: &Self) -> bool {
        self.digits() == other.digits()
    }
}

impl Eq for BasePoint {}

impl std::hash::Hash for BasePoint {
    fn hash<H: std::hash::Hasher>(&self, state: &mut H) {
        self.digits().hash(state);
    }
}

impl fmt::Debug for BasePoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "BasePoint({:.17} | cap {})",
            self.value(),
            self.capacity()
        )
    }
}

impl fmt::Display for BasePoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "0.{}", self.to_digit_string())
    }
}

impl Serialize for BasePoint {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_digit_string())
    }
}

impl<'de> Deserialize<'de> for BasePoint {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        BasePoint::parse(&s).map_err(serde::de::Error::custom)
    }
}

/// Reduces a real number to `[0, 1)`.
#[inline]
pub fn wrap_unit(y: f64) -> f64 {
    let r = y - y.floor();
    if r >= 1.0 {
        0.0
    } else {
        r
    }
}

/// Distance on the circle `R/Z`.
#[inline]
pub fn circle_distance(a: f64, b: f64) -> f64 {
    let t = wrap_unit(a - b);
    t.min(1.0 - t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn doubling_of_dyadic_point() {
        let x = BasePoint::parse("01").unwrap();
        assert_eq!(x.value(), 0.25);
        assert_eq!(x.forward(1).unwrap().value(), 0.5);
    }

    #[test]
    fn zero_is_fixed() {
        let x = BasePoint::zero(32);
        for k in 0..=32 {
            assert_eq!(x.forward(k).unwrap().value(), 0.0);
        }
    }

    #[test]
    fn one_third_has_period_two() {
        // 2 * (2 * 1/3 mod 1) mod 1 = 1/3
        let x = BasePoint::from_rational(1, 3, 128).unwrap();
        let y = x.forward(2).unwrap();
        assert!((y.value() - 1.0 / 3.0).abs() < 1e-16);
        assert_eq!(y.capacity(), 126);
        let z = x.forward(1).unwrap();
        assert!((z.value() - 2.0 / 3.0).abs() < 1e-16);
    }

    #[test]
    fn forward_past_capacity_fails() {
        let x = BasePoint::zero(4);
        assert!(matches!(
            x.forward(5),
            Err(Error::CapacityExhausted {
                needed: 5,
                available: 4
            })
        ));
    }

    #[test]
    fn preimage_examples() {
        let [a, b] = BasePoint::zero(8).preimages();
        assert_eq!((a.value(), b.value()), (0.0, 0.5));
        let [a, b] = BasePoint::parse("1").unwrap().preimages();
        assert_eq!((a.value(), b.value()), (0.25, 0.75));
        let third = BasePoint::from_rational(1, 3, 100).unwrap();
        let [a, b] = third.preimages();
        assert!((a.value() - 1.0 / 6.0).abs() < 1e-16);
        assert!((b.value() - 2.0 / 3.0).abs() < 1e-16);
        assert_eq!(a.capacity(), 101);
    }

    #[test]
    fn circle_distance_examples() {
        assert!((circle_distance(0.1, 0.9) - 0.2).abs() < 1e-15);
        assert_eq!(circle_distance(0.3, 0.3), 0.0);
        assert_eq!(circle_distance(0.25, 0.5), 0.25);
    }

    #[test]
    fn dyadic_shifts_wrap() {
        let x = BasePoint::parse("1111").unwrap();
        assert_eq!(x.add_dyadic(4).unwrap().value(), 0.0);
        let z = BasePoint::zero(4);
        assert_eq!(z.sub_dyadic(2).unwrap().value(), 0.75);
        let y = BasePoint::parse("0101").unwrap();
        assert_eq!(y.add_dyadic(3).unwrap().value(), 0.3125 + 0.125);
    }

    #[test]
    fn digit_string_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let x = BasePoint::random(&mut rng, 40);
        let s = serde_json::to_string(&x).unwrap();
        let back: BasePoint = serde_json::from_str(&s).unwrap();
        assert_eq!(x, back);
    }

    proptest! {
        #[test]
        fn preimage_then_forward_is_identity(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x = BasePoint::random(&mut rng, 64);
            for p in x.preimages() {
                prop_assert_eq!(p.forward(1).unwrap(), x.clone());
            }
        }

        #[test]
        fn doubling_expands_small_distances(seed in any::<u64>(), k in 3usize..40) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = BasePoint::random(&mut rng, 64);
            let b = a.add_dyadic(k).unwrap();
            let d = circle_distance(a.value(), b.value());
            prop_assume!(d <= 0.25);
            let d1 = circle_distance(a.forward(1).unwrap().value(), b.forward(1).unwrap().value());
            prop_assert!((d1 - 2.0 * d).abs() <= 1e-15);
        }

        #[test]
        fn circle_metric_axioms(a in 0.0f64..1.0, b in 0.0f64..1.0, c in 0.0f64..1.0) {
            let ab = circle_distance(a, b);
            prop_assert!(ab <= 0.5);
            prop_assert!((ab - circle_distance(b, a)).abs() < 1e-15);
            prop_assert!(ab <= circle_distance(a, c) + circle_distance(c, b) + 1e-15);
        }
    }
}
