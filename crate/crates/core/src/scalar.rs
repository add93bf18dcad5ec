//! Real scalar abstraction shared by the polynomial and spectral code.
//!
//! Everything that evaluates recursion polynomials is generic over [`Scalar`]
//! so the same code runs in binary64 (cheap, used for plotting grids and
//! oracles) and in [`Mp`], a binary multiprecision float whose working
//! precision is scoped per thread with [`with_precision`].

use std::cell::Cell;
use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};

use dashu_float::round::mode::HalfEven;
use dashu_float::FBig;

/// Arithmetic required by the recursions, determinants and eigen refinement.
pub trait Scalar:
    Clone
    + fmt::Debug
    + PartialOrd
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    fn from_f64(v: f64) -> Self;
    fn to_f64(&self) -> f64;

    fn zero() -> Self {
        Self::from_f64(0.0)
    }

    fn one() -> Self {
        Self::from_f64(1.0)
    }

    fn abs(&self) -> Self {
        if self.is_negative() {
            -self.clone()
        } else {
            self.clone()
        }
    }

    fn is_zero(&self) -> bool;

    fn is_negative(&self) -> bool;

    /// Unit roundoff of the current working precision.
    fn epsilon() -> f64;

    fn max_of(a: Self, b: Self) -> Self {
        if a >= b {
            a
        } else {
            b
        }
    }
}

impl Scalar for f64 {
    fn from_f64(v: f64) -> Self {
        v
    }

    fn to_f64(&self) -> f64 {
        *self
    }

    fn abs(&self) -> Self {
        f64::abs(*self)
    }

    fn is_zero(&self) -> bool {
        *self == 0.0
    }

    fn is_negative(&self) -> bool {
        *self < 0.0
    }

    fn epsilon() -> f64 {
        f64::EPSILON / 2.0
    }
}

thread_local! {
    static WORKING_BITS: Cell<usize> = const { Cell::new(DEFAULT_BITS) };
}

/// Precision used by [`Mp`] when no scope is active.
pub const DEFAULT_BITS: usize = 128;

/// Current [`Mp`] working precision in bits for this thread.
pub fn working_bits() -> usize {
    WORKING_BITS.with(Cell::get)
}

/// Runs `f` with [`Mp`] constants created at `bits` of precision.
///
/// Values already created keep their own precision; arithmetic between two
/// values rounds to the larger of the two.
pub fn with_precision<T>(bits: usize, f: impl FnOnce() -> T) -> T {
    struct Restore(usize);
    impl Drop for Restore {
        fn drop(&mut self) {
            WORKING_BITS.with(|c| c.set(self.0));
        }
    }
    let _restore = Restore(WORKING_BITS.with(|c| c.replace(bits.max(64))));
    f()
}

type Inner = FBig<HalfEven, 2>;

/// Binary multiprecision float.
#[derive(Clone, PartialEq, PartialOrd)]
pub struct Mp(Inner);

impl Mp {
    pub fn precision(&self) -> usize {
        self.0.precision()
    }

    /// Re-rounds (or widens) the value to the current working precision.
    pub fn rescaled(&self) -> Self {
        Mp(self.0.clone().with_precision(working_bits()).value())
    }

    pub fn from_usize(v: usize) -> Self {
        Mp::from_f64(v as f64)
    }

    /// `2^e`, exact for any exponent.
    pub fn pow2(e: i32) -> Self {
        let two = Mp::from_f64(2.0).powi(e.unsigned_abs());
        if e < 0 {
            Mp::one() / two
        } else {
            two
        }
    }

    /// Integer power by repeated squaring.
    pub fn powi(&self, mut k: u32) -> Self {
        let mut base = self.clone();
        let mut acc = Mp::one();
        while k > 0 {
            if k & 1 == 1 {
                acc = acc * base.clone();
            }
            k >>= 1;
            if k > 0 {
                base = base.clone() * base;
            }
        }
        acc
    }
}

impl fmt::Debug for Mp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Mp({:e})", self.to_f64())
    }
}

impl fmt::Display for Mp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(&self.0, f)
    }
}

impl Scalar for Mp {
    fn from_f64(v: f64) -> Self {
        assert!(v.is_finite(), "non-finite value {v} cannot enter multiprecision arithmetic");
        let exact = Inner::try_from(v).expect("finite f64 converts exactly");
        Mp(exact.with_precision(working_bits()).value())
    }

    fn to_f64(&self) -> f64 {
        self.0.to_f64().value()
    }

    fn is_zero(&self) -> bool {
        self.0.repr().is_zero()
    }

    fn is_negative(&self) -> bool {
        self.0 < Inner::ZERO
    }

    fn epsilon() -> f64 {
        2f64.powi(-(working_bits() as i32))
    }
}

macro_rules! forward_binop {
    ($trait:ident, $method:ident, $op:tt) => {
        impl $trait for Mp {
            type Output = Mp;
            fn $method(self, rhs: Mp) -> Mp {
                Mp(self.0 $op rhs.0)
            }
        }
        impl<'a> $trait<&'a Mp> for &'a Mp {
            type Output = Mp;
            fn $method(self, rhs: &'a Mp) -> Mp {
                Mp(&self.0 $op &rhs.0)
            }
        }
    };
}

forward_binop!(Add, add, +);
forward_binop!(Sub, sub, -);
forward_binop!(Mul, mul, *);
forward_binop!(Div, div, /);

impl Neg for Mp {
    type Output = Mp;
    fn neg(self) -> Mp {
        Mp(-self.0)
    }
}

/// Neumaier-compensated sum of binary64 terms.
#[derive(Clone, Copy, Debug, Default)]
pub struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn merge(&mut self, other: &CompensatedSum) {
        self.add(other.sum);
        self.add(other.carry);
    }

    pub fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

impl FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = CompensatedSum::default();
        for x in iter {
            s.add(x);
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn precision_scope_is_restored() {
        let before = working_bits();
        let inside = with_precision(512, || {
            let a = Mp::from_f64(1.0) / Mp::from_f64(3.0);
            (working_bits(), a.precision())
        });
        assert_eq!(inside, (512, 512));
        assert_eq!(working_bits(), before);
    }

    #[test]
    fn mp_carries_more_digits_than_f64() {
        with_precision(256, || {
            let third = Mp::from_f64(1.0) / Mp::from_f64(3.0);
            let back = third.clone() * Mp::from_f64(3.0) - Mp::one();
            assert!(back.abs().to_f64() < 1e-70);
            let tiny = Mp::from_f64(1e-30);
            let sum = (Mp::one() + tiny.clone()) - Mp::one();
            assert!(((sum.to_f64() - 1e-30) / 1e-30).abs() < 1e-15);
        });
    }

    #[test]
    fn sign_predicates() {
        assert!(Mp::from_f64(-2.5).is_negative());
        assert!(!Mp::from_f64(2.5).is_negative());
        assert!(Mp::zero().is_zero());
        assert_eq!(Mp::from_f64(-2.5).abs().to_f64(), 2.5);
        assert_eq!(Mp::from_f64(0.5).powi(3).to_f64(), 0.125);
    }

    #[test]
    fn compensated_sum_recovers_small_terms() {
        let s: CompensatedSum = [1.0, 1e-16, 1e-16, -1.0].into_iter().collect();
        assert!((s.value() - 2e-16).abs() < 1e-30);
    }
}
