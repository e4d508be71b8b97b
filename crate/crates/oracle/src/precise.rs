//! Arbitrary-precision evaluation with 320-bit binary fixed point.

use num_bigint::{BigInt, Sign};
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

const BITS: u64 = 320;

/// Fixed-point number `value / 2^BITS`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct Fixed(BigInt);

fn one() -> BigInt {
    BigInt::one() << BITS
}

impl Fixed {
    pub fn from_rational(r: &BigRational) -> Fixed {
        Fixed((r.numer() << BITS) / r.denom())
    }

    pub fn from_f64(x: f64) -> Fixed {
        Fixed::from_rational(&exact(x))
    }

    pub fn to_f64(&self) -> f64 {
        // keep 64 significant bits beyond the binary point before rounding
        let shifted: BigInt = &self.0 >> (BITS - 100);
        shifted.to_f64().expect("finite") / 2f64.powi(100)
    }

    fn mul(&self, o: &Fixed) -> Fixed {
        Fixed((&self.0 * &o.0) >> BITS)
    }

    fn div(&self, o: &Fixed) -> Fixed {
        Fixed((&self.0 << BITS) / &o.0)
    }

    fn add(&self, o: &Fixed) -> Fixed {
        Fixed(&self.0 + &o.0)
    }

    fn sub(&self, o: &Fixed) -> Fixed {
        Fixed(&self.0 - &o.0)
    }

    pub fn small(n: i64) -> Fixed {
        Fixed(BigInt::from(n) << BITS)
    }
}

/// Exact rational value of a finite `f64`.
pub fn exact(x: f64) -> BigRational {
    assert!(x.is_finite());
    if x == 0.0 {
        return BigRational::zero();
    }
    let bits = x.to_bits();
    let sign = if bits >> 63 == 1 { Sign::Minus } else { Sign::Plus };
    let exp = ((bits >> 52) & 0x7ff) as i64;
    let frac = bits & ((1u64 << 52) - 1);
    let (mantissa, e) = if exp == 0 { (frac, -1074) } else { (frac | (1u64 << 52), exp - 1075) };
    let m = BigInt::from_biguint(sign, mantissa.into());
    if e >= 0 {
        BigRational::from_integer(m << e as u64)
    } else {
        BigRational::new(m, BigInt::one() << (-e) as u64)
    }
}

/// `Σ t^(2n+1) / (2n+1)` for |t| well below 1.
fn artanh_series(t: &Fixed) -> Fixed {
    let t2 = t.mul(t);
    let mut power = t.clone();
    let mut sum = Fixed(BigInt::zero());
    let mut n = 1i64;
    while !power.0.is_zero() {
        sum = sum.add(&Fixed(&power.0 / n));
        power = power.mul(&t2);
        n += 2;
    }
    sum
}

fn ln2() -> Fixed {
    let third = Fixed(one() / 3);
    let a = artanh_series(&third);
    a.add(&a)
}

/// Natural log of a positive fixed-point value.
pub fn ln(z: &Fixed) -> Fixed {
    assert!(z.0.is_positive());
    // z = m · 2^k with m in [1, 2)
    let mut k: i64 = z.0.bits() as i64 - 1 - BITS as i64;
    let m = if k >= 0 { Fixed(&z.0 >> k as u64) } else { Fixed(&z.0 << (-k) as u64) };
    let m = if m.0 < one() {
        k -= 1;
        Fixed(&m.0 << 1u32)
    } else {
        m
    };
    let t = m.sub(&Fixed(one())).div(&m.add(&Fixed(one())));
    let a = artanh_series(&t);
    let lnm = a.add(&a);
    lnm.add(&Fixed(ln2().0 * k))
}

pub fn exp(x: &Fixed) -> Fixed {
    let l2 = ln2();
    let k = (&x.0 / &l2.0).to_i64().expect("small exponent") - i64::from(x.0.is_negative());
    let r = x.sub(&Fixed(&l2.0 * k));
    let mut term = Fixed(one());
    let mut sum = Fixed(one());
    let mut n = 1i64;
    while !term.0.is_zero() {
        term = Fixed(term.mul(&r).0 / n);
        sum = sum.add(&term);
        n += 1;
    }
    if k >= 0 {
        Fixed(sum.0 << k as u64)
    } else {
        Fixed(sum.0 >> (-k) as u64)
    }
}

/// `½ ln((1+x)/(1−x))` for |x| < 1.
pub fn artanh_fixed(x: &Fixed) -> Fixed {
    let o = Fixed(one());
    let q = o.add(x).div(&o.sub(x));
    Fixed(ln(&q).0 >> 1u32)
}

pub fn artanh(x: f64) -> f64 {
    artanh_fixed(&Fixed::from_f64(x)).to_f64()
}

pub fn tanh(x: f64) -> f64 {
    let e = exp(&Fixed::from_f64(2.0 * x));
    let o = Fixed(one());
    e.sub(&o).div(&e.add(&o)).to_f64()
}

/// Euclidean norm, computed from the exact sum of squares.
pub fn norm_fixed(v: &[f64]) -> Fixed {
    let sum: BigRational = v.iter().map(|&x| exact(x) * exact(x)).fold(BigRational::zero(), |a, b| a + b);
    let scaled = (sum.numer() << (2 * BITS)) / sum.denom();
    Fixed(scaled.sqrt())
}

pub fn norm(v: &[f64]) -> f64 {
    norm_fixed(v).to_f64()
}

/// `2 · artanh(‖y‖)`: the distance of `y` from the origin.
pub fn distance_from_origin(y: &[f64]) -> f64 {
    let a = artanh_fixed(&norm_fixed(y));
    Fixed(a.0 << 1u32).to_f64()
}

/// Möbius addition evaluated exactly in rationals, rounded once at the end.
pub fn mobius_add(x: &[f64], y: &[f64]) -> Vec<f64> {
    let xs: Vec<BigRational> = x.iter().map(|&v| exact(v)).collect();
    let ys: Vec<BigRational> = y.iter().map(|&v| exact(v)).collect();
    let dot = |a: &[BigRational], b: &[BigRational]| {
        a.iter().zip(b).map(|(p, q)| p * q).fold(BigRational::zero(), |s, t| s + t)
    };
    let xy = dot(&xs, &ys);
    let xx = dot(&xs, &xs);
    let yy = dot(&ys, &ys);
    let two = BigRational::from_integer(2.into());
    let o = BigRational::one();
    let cx = &o + &two * &xy + &yy;
    let cy = &o - &xx;
    let den = &o + &two * &xy + &xx * &yy;
    xs.iter()
        .zip(&ys)
        .map(|(a, b)| {
            let v = (&cx * a + &cy * b) / &den;
            Fixed::from_rational(&v).to_f64()
        })
        .collect()
}
