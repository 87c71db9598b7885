//! Scalar abstraction for the numerical core.
//!
//! Everything upstream of path synthesis (correlation evaluation, Toeplitz
//! factorization, the dense Cholesky oracle) is generic over [`Scalar`] so the
//! same code runs in ordinary `f64`, in `f32`, and in the compensated
//! double-double type [`DoubleDouble`] used by the extended precision mode.

use core::fmt;
use core::ops::{Add, AddAssign, Div, DivAssign, Mul, MulAssign, Neg, Rem, RemAssign, Sub, SubAssign};
use num_traits::{FromPrimitive, Num, NumAssignOps, One, ToPrimitive, Zero};

/// Floating-point scalar usable by the numerical core.
///
/// The supertraits come from `num-traits`; the methods here are the small set
/// of transcendentals the correlation function and the factorizations need.
pub trait Scalar:
    Num
    + NumAssignOps
    + FromPrimitive
    + ToPrimitive
    + Neg<Output = Self>
    + PartialOrd
    + Copy
    + fmt::Debug
    + fmt::Display
    + Send
    + Sync
    + 'static
{
    /// Machine epsilon of the representation (unit roundoff scale).
    fn eps() -> Self;
    /// Exact injection of an `f64` value.
    fn of(x: f64) -> Self {
        <Self as FromPrimitive>::from_f64(x).expect("every f64 is representable")
    }
    /// Nearest `f64`; lossless for `f64`, rounds for `DoubleDouble`.
    fn to_f64_near(self) -> f64;
    fn abs(self) -> Self;
    fn sqrt(self) -> Self;
    fn exp(self) -> Self;
    fn exp_m1(self) -> Self;
    fn ln(self) -> Self;
    fn powi(self, n: i32) -> Self;
    fn is_finite_s(self) -> bool;
    /// `self^y` for positive `self`.
    fn powf_s(self, y: Self) -> Self {
        (self.ln() * y).exp()
    }
}

macro_rules! impl_scalar_native {
    ($t:ty) => {
        impl Scalar for $t {
            fn eps() -> Self {
                <$t>::EPSILON
            }
            fn to_f64_near(self) -> f64 {
                self as f64
            }
            fn abs(self) -> Self {
                <$t>::abs(self)
            }
            fn sqrt(self) -> Self {
                <$t>::sqrt(self)
            }
            fn exp(self) -> Self {
                <$t>::exp(self)
            }
            fn exp_m1(self) -> Self {
                <$t>::exp_m1(self)
            }
            fn ln(self) -> Self {
                <$t>::ln(self)
            }
            fn powi(self, n: i32) -> Self {
                <$t>::powi(self, n)
            }
            fn is_finite_s(self) -> bool {
                <$t>::is_finite(self)
            }
            fn powf_s(self, y: Self) -> Self {
                <$t>::powf(self, y)
            }
        }
    };
}

impl_scalar_native!(f32);
impl_scalar_native!(f64);

/// Unevaluated sum `hi + lo` of two doubles with `|lo| <= ulp(hi)/2`,
/// giving roughly 106 bits of significand.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct DoubleDouble {
    pub hi: f64,
    pub lo: f64,
}

/// Error-free sum, no ordering requirement (Knuth).
#[inline]
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let v = s - a;
    (s, (a - (s - v)) + (b - v))
}

/// Error-free sum assuming `|a| >= |b|` (Dekker).
#[inline]
fn quick_two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    (s, b - (s - a))
}

/// Error-free product via FMA.
#[inline]
fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    (p, a.mul_add(b, -p))
}

/// ln(2) split across two doubles.
const LN2: DoubleDouble = DoubleDouble {
    hi: std::f64::consts::LN_2,
    lo: 2.319_046_813_846_299_6e-17,
};

impl DoubleDouble {
    pub const ZERO: Self = Self { hi: 0.0, lo: 0.0 };
    pub const ONE: Self = Self { hi: 1.0, lo: 0.0 };

    #[inline]
    pub fn new(hi: f64, lo: f64) -> Self {
        let (hi, lo) = quick_two_sum(hi, lo);
        Self { hi, lo }
    }

    #[inline]
    pub fn from_f64(x: f64) -> Self {
        Self { hi: x, lo: 0.0 }
    }

    #[inline]
    pub fn to_f64(self) -> f64 {
        self.hi + self.lo
    }

    /// Exact product of the value with `2^k` (component-wise scaling).
    #[inline]
    fn ldexp(self, k: i32) -> Self {
        let s = pow2(k);
        Self {
            hi: self.hi * s,
            lo: self.lo * s,
        }
    }

    fn renorm3(a: f64, b: f64, c: f64) -> Self {
        let (s1, t) = quick_two_sum(b, c);
        let (hi, t2) = quick_two_sum(a, s1);
        Self::new(hi, t2 + t)
    }

    pub fn abs(self) -> Self {
        if self.hi < 0.0 || (self.hi == 0.0 && self.lo < 0.0) {
            -self
        } else {
            self
        }
    }

    pub fn sqrt(self) -> Self {
        if self.hi == 0.0 && self.lo == 0.0 {
            return Self::ZERO;
        }
        if self.hi < 0.0 {
            return Self::from_f64(f64::NAN);
        }
        // One Newton correction of the f64 root recovers full precision.
        let a = self.hi.sqrt();
        let (p, e) = two_prod(a, a);
        let r = self - Self::new(p, e);
        let corr = (r.hi + r.lo) / (2.0 * a);
        let (hi, lo) = quick_two_sum(a, corr);
        Self { hi, lo }
    }

    /// `e^self - 1`, full precision for small arguments.
    pub fn exp_m1(self) -> Self {
        if self.hi.abs() <= 0.4 {
            return exp_m1_reduced(self);
        }
        self.exp() - Self::ONE
    }

    pub fn exp(self) -> Self {
        if self.hi > 709.0 {
            return Self::from_f64(f64::INFINITY);
        }
        if self.hi < -745.0 {
            return Self::ZERO;
        }
        let k = (self.hi / LN2.hi).round();
        let r = self - LN2 * k;
        (exp_m1_reduced(r) + Self::ONE).ldexp(k as i32)
    }

    pub fn ln(self) -> Self {
        if self.hi <= 0.0 {
            return Self::from_f64(if self.hi == 0.0 { f64::NEG_INFINITY } else { f64::NAN });
        }
        // Newton on y -> y + x e^{-y} - 1, two rounds from the f64 seed.
        let mut y = Self::from_f64(self.hi.ln());
        for _ in 0..2 {
            y = y + self * (-y).exp() - Self::ONE;
        }
        y
    }

    pub fn powi(self, n: i32) -> Self {
        let mut base = if n < 0 { Self::ONE / self } else { self };
        let mut m = n.unsigned_abs();
        let mut acc = Self::ONE;
        while m > 0 {
            if m & 1 == 1 {
                acc *= base;
            }
            base = base * base;
            m >>= 1;
        }
        acc
    }

    pub fn is_finite(self) -> bool {
        self.hi.is_finite() && self.lo.is_finite()
    }

    fn trunc(self) -> Self {
        let t = self.hi.trunc();
        if t == self.hi {
            let (hi, lo) = quick_two_sum(t, self.lo.trunc());
            Self { hi, lo }
        } else {
            Self { hi: t, lo: 0.0 }
        }
    }
}

#[inline]
fn pow2(k: i32) -> f64 {
    // Exact for the exponent range reachable from finite dd values.
    if (-1021..=1023).contains(&k) {
        f64::from_bits(((k + 1023) as u64) << 52)
    } else if k < 0 {
        f64::from_bits(((k + 2045).max(1) as u64) << 52) * pow2(-1022)
    } else {
        f64::INFINITY
    }
}

/// Taylor core on `|r| <= ln2/2`: scale down by 2^9, sum, square back up,
/// tracking `p = e^x - 1` throughout so small results keep full precision.
fn exp_m1_reduced(r: DoubleDouble) -> DoubleDouble {
    let rs = r.ldexp(-9);
    let mut term = rs;
    let mut p = rs;
    for n in 2..=12 {
        term = term * rs / f64::from(n);
        p += term;
    }
    for _ in 0..9 {
        p = p * p + p * 2.0;
    }
    p
}

impl fmt::Display for DoubleDouble {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", DoubleDouble::to_f64(*self))
    }
}

impl From<f64> for DoubleDouble {
    fn from(x: f64) -> Self {
        Self::from_f64(x)
    }
}

impl Neg for DoubleDouble {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        Self {
            hi: -self.hi,
            lo: -self.lo,
        }
    }
}

impl Add for DoubleDouble {
    type Output = Self;
    #[inline]
    fn add(self, rhs: Self) -> Self {
        let (s1, s2) = two_sum(self.hi, rhs.hi);
        let (t1, t2) = two_sum(self.lo, rhs.lo);
        let (s1, s2) = quick_two_sum(s1, s2 + t1);
        let (hi, lo) = quick_two_sum(s1, s2 + t2);
        Self { hi, lo }
    }
}

impl Sub for DoubleDouble {
    type Output = Self;
    #[inline]
    fn sub(self, rhs: Self) -> Self {
        self + (-rhs)
    }
}

impl Mul for DoubleDouble {
    type Output = Self;
    #[inline]
    fn mul(self, rhs: Self) -> Self {
        let (p, e) = two_prod(self.hi, rhs.hi);
        let e = e + (self.hi * rhs.lo + self.lo * rhs.hi);
        let (hi, lo) = quick_two_sum(p, e);
        Self { hi, lo }
    }
}

impl Div for DoubleDouble {
    type Output = Self;
    fn div(self, rhs: Self) -> Self {
        let q1 = self.hi / rhs.hi;
        let r = self - rhs * q1;
        let q2 = r.hi / rhs.hi;
        let r = r - rhs * q2;
        let q3 = r.hi / rhs.hi;
        Self::renorm3(q1, q2, q3)
    }
}

impl Rem for DoubleDouble {
    type Output = Self;
    fn rem(self, rhs: Self) -> Self {
        self - rhs * (self / rhs).trunc()
    }
}

macro_rules! impl_dd_f64_ops {
    ($Op:ident, $op:ident) => {
        impl $Op<f64> for DoubleDouble {
            type Output = Self;
            #[inline]
            fn $op(self, rhs: f64) -> Self {
                self.$op(Self::from_f64(rhs))
            }
        }
    };
}
impl_dd_f64_ops!(Add, add);
impl_dd_f64_ops!(Sub, sub);
impl_dd_f64_ops!(Mul, mul);
impl_dd_f64_ops!(Div, div);

macro_rules! impl_dd_assign {
    ($Op:ident, $op:ident, $base:ident) => {
        impl $Op for DoubleDouble {
            #[inline]
            fn $op(&mut self, rhs: Self) {
                *self = self.$base(rhs);
            }
        }
    };
}
impl_dd_assign!(AddAssign, add_assign, add);
impl_dd_assign!(SubAssign, sub_assign, sub);
impl_dd_assign!(MulAssign, mul_assign, mul);
impl_dd_assign!(DivAssign, div_assign, div);
impl_dd_assign!(RemAssign, rem_assign, rem);

impl PartialOrd for DoubleDouble {
    fn partial_cmp(&self, other: &Self) -> Option<core::cmp::Ordering> {
        // Lexicographic order is total order under the normalization invariant.
        match self.hi.partial_cmp(&other.hi) {
            Some(core::cmp::Ordering::Equal) => self.lo.partial_cmp(&other.lo),
            ord => ord,
        }
    }
}

impl Zero for DoubleDouble {
    fn zero() -> Self {
        Self::ZERO
    }
    fn is_zero(&self) -> bool {
        self.hi == 0.0 && self.lo == 0.0
    }
}

impl One for DoubleDouble {
    fn one() -> Self {
        Self::ONE
    }
}

impl Num for DoubleDouble {
    type FromStrRadixErr = <f64 as Num>::FromStrRadixErr;
    fn from_str_radix(s: &str, radix: u32) -> Result<Self, Self::FromStrRadixErr> {
        f64::from_str_radix(s, radix).map(Self::from_f64)
    }
}

impl FromPrimitive for DoubleDouble {
    fn from_i64(n: i64) -> Option<Self> {
        let hi = n as f64;
        let residue = n.wrapping_sub(hi as i64) as f64;
        Some(Self::new(hi, residue))
    }
    fn from_u64(n: u64) -> Option<Self> {
        let hi = n as f64;
        // hi rounds to within 2^11 of n, so the difference is exact in i64.
        let residue = (n as i128 - hi as i128) as f64;
        Some(Self::new(hi, residue))
    }
    fn from_f64(x: f64) -> Option<Self> {
        Some(Self::from_f64(x))
    }
}

impl ToPrimitive for DoubleDouble {
    fn to_i64(&self) -> Option<i64> {
        DoubleDouble::to_f64(*self).to_i64()
    }
    fn to_u64(&self) -> Option<u64> {
        DoubleDouble::to_f64(*self).to_u64()
    }
    fn to_f64(&self) -> Option<f64> {
        Some(DoubleDouble::to_f64(*self))
    }
}

impl Scalar for DoubleDouble {
    fn eps() -> Self {
        // 2^-104, the relative resolution of a normalized pair.
        Self::from_f64(4.930_380_657_631_324e-32)
    }
    fn to_f64_near(self) -> f64 {
        self.to_f64()
    }
    fn abs(self) -> Self {
        DoubleDouble::abs(self)
    }
    fn sqrt(self) -> Self {
        DoubleDouble::sqrt(self)
    }
    fn exp(self) -> Self {
        DoubleDouble::exp(self)
    }
    fn exp_m1(self) -> Self {
        DoubleDouble::exp_m1(self)
    }
    fn ln(self) -> Self {
        DoubleDouble::ln(self)
    }
    fn powi(self, n: i32) -> Self {
        DoubleDouble::powi(self, n)
    }
    fn is_finite_s(self) -> bool {
        self.is_finite()
    }
}
