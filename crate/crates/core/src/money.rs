//! Integer money. Every currency quantity in the system is a nonnegative
//! arbitrary-precision integer of base units; divisions round down at the
//! final step so that conservation can be checked with exact equality.

use std::fmt;
use std::iter::Sum;
use std::ops::{Add, AddAssign, Mul, SubAssign};

use num_bigint::BigUint;
use num_traits::{ToPrimitive, Zero};

/// A nonnegative amount of currency in base units.
#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Amount(BigUint);

impl Amount {
    pub fn zero() -> Self {
        Amount(BigUint::zero())
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_zero()
    }

    pub fn from_biguint(v: BigUint) -> Self {
        Amount(v)
    }

    pub fn as_biguint(&self) -> &BigUint {
        &self.0
    }

    pub fn into_biguint(self) -> BigUint {
        self.0
    }

    /// Subtraction that refuses to go negative.
    pub fn checked_sub(&self, rhs: &Amount) -> Option<Amount> {
        if self.0 >= rhs.0 {
            Some(Amount(&self.0 - &rhs.0))
        } else {
            None
        }
    }

    /// Floor division by an integer divisor; `u64::MAX` sentinel for
    /// division by zero is up to the caller — this panics on zero.
    pub fn div_floor_u64(&self, divisor: u64) -> Amount {
        Amount(&self.0 / BigUint::from(divisor))
    }

    /// `self / divisor` clamped into `u64` range.
    pub fn quot_u64_saturating(&self, divisor: u64) -> u64 {
        (&self.0 / BigUint::from(divisor))
            .to_u64()
            .unwrap_or(u64::MAX)
    }

    pub fn to_u64_saturating(&self) -> u64 {
        self.0.to_u64().unwrap_or(u64::MAX)
    }

    /// Lossy conversion for metrics and ratios.
    pub fn to_f64(&self) -> f64 {
        self.0.to_f64().unwrap_or(f64::INFINITY)
    }
}

impl From<u64> for Amount {
    fn from(v: u64) -> Self {
        Amount(BigUint::from(v))
    }
}

impl From<u128> for Amount {
    fn from(v: u128) -> Self {
        Amount(BigUint::from(v))
    }
}

impl fmt::Display for Amount {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

impl Add<&Amount> for &Amount {
    type Output = Amount;
    fn add(self, rhs: &Amount) -> Amount {
        Amount(&self.0 + &rhs.0)
    }
}

impl AddAssign<&Amount> for Amount {
    fn add_assign(&mut self, rhs: &Amount) {
        self.0 += &rhs.0;
    }
}

impl SubAssign<&Amount> for Amount {
    /// Panics if the result would be negative; use [`Amount::checked_sub`]
    /// on any path where that is a reachable condition.
    fn sub_assign(&mut self, rhs: &Amount) {
        assert!(self.0 >= rhs.0, "amount underflow");
        self.0 -= &rhs.0;
    }
}

impl Mul<u64> for &Amount {
    type Output = Amount;
    fn mul(self, rhs: u64) -> Amount {
        Amount(&self.0 * BigUint::from(rhs))
    }
}

impl<'a> Sum<&'a Amount> for Amount {
    fn sum<I: Iterator<Item = &'a Amount>>(iter: I) -> Amount {
        let mut acc = BigUint::zero();
        for a in iter {
            acc += &a.0;
        }
        Amount(acc)
    }
}
