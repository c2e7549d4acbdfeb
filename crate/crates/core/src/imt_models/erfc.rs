//! Complementary error function.
//!
//! Rational Chebyshev approximations of W. J. Cody (Math. Comp. 1969),
//! evaluated in the caller's scalar type. The exponential factor is split as
//! `exp(-t^2) * exp(-(y - t)(y + t))` with `t` rounded to 1/16 so that the
//! large-argument branch keeps full relative precision.

use crate::Scalar;

const THRESHOLD: f64 = 0.46875;
const XBIG: f64 = 26.543;
const FRAC_1_SQRT_PI: f64 = 0.564_189_583_547_756_3;

const A: [f64; 5] = [
    3.161_123_743_870_565_6,
    113.864_154_151_050_16,
    377.485_237_685_302,
    3_209.377_589_138_469_5,
    0.185_777_706_184_603_15,
];
const B: [f64; 4] = [
    23.601_290_952_344_122,
    244.024_637_934_444_17,
    1_282.616_526_077_372_3,
    2_844.236_833_439_170_6,
];
const C: [f64; 9] = [
    0.564_188_496_988_670_1,
    8.883_149_794_388_377,
    66.119_190_637_141_63,
    298.635_138_197_400_1,
    881.952_221_241_769,
    1_712.047_612_634_070_7,
    2_051.078_377_826_071_6,
    1_230.339_354_797_997_2,
    2.153_115_354_744_038_5e-8,
];
const D: [f64; 8] = [
    15.744_926_110_709_835,
    117.693_950_891_312_5,
    537.181_101_862_009_9,
    1_621.389_574_566_690_2,
    3_290.799_235_733_459_6,
    4_362.619_090_143_247,
    3_439.367_674_143_721_6,
    1_230.339_354_803_749_4,
];
const P: [f64; 6] = [
    0.305_326_634_961_232_36,
    0.360_344_899_949_804_45,
    0.125_781_726_111_229_24,
    0.016_083_785_148_742_275,
    6.587_491_615_298_378e-4,
    0.016_315_387_137_302_097,
];
const Q: [f64; 5] = [
    2.568_520_192_289_822,
    1.872_952_849_923_460_4,
    0.527_905_102_951_428_4,
    0.060_518_341_312_441_32,
    0.002_335_204_976_268_691_8,
];

/// `erf(x) / x` on `|x| <= 0.46875`, argument `z = x^2`.
fn small<T: Scalar>(z: T) -> T {
    let mut num = T::c(A[4]) * z;
    let mut den = z;
    for i in 0..3 {
        num = (num + T::c(A[i])) * z;
        den = (den + T::c(B[i])) * z;
    }
    (num + T::c(A[3])) / (den + T::c(B[3]))
}

/// `exp(y^2) erfc(y)` on `0.46875 < y <= 4`.
fn mid<T: Scalar>(y: T) -> T {
    let mut num = T::c(C[8]) * y;
    let mut den = y;
    for i in 0..7 {
        num = (num + T::c(C[i])) * y;
        den = (den + T::c(D[i])) * y;
    }
    (num + T::c(C[7])) / (den + T::c(D[7]))
}

/// Correction term for `y > 4`, argument `z = 1 / y^2`.
fn large<T: Scalar>(z: T) -> T {
    let mut num = T::c(P[5]) * z;
    let mut den = z;
    for i in 0..4 {
        num = (num + T::c(P[i])) * z;
        den = (den + T::c(Q[i])) * z;
    }
    z * (num + T::c(P[4])) / (den + T::c(Q[4]))
}

fn exp_neg_square<T: Scalar>(y: T) -> T {
    let sixteen = T::c(16.0);
    let t = (y * sixteen).trunc() / sixteen;
    (-t * t).exp() * (-(y - t) * (y + t)).exp()
}

/// Complementary error function `1 - 2/sqrt(pi) * int_0^z exp(-t^2) dt`.
///
/// Absolute error below 1e-15 in f64 over the whole real line.
pub fn erfc<T: Scalar>(x: T) -> T {
    if x.is_nan() {
        return x;
    }
    let y = x.abs();
    if y <= T::c(THRESHOLD) {
        return T::one() - x * small(y * y);
    }
    let tail = if y >= T::c(XBIG) {
        T::zero()
    } else if y <= T::c(4.0) {
        mid(y) * exp_neg_square(y)
    } else {
        let z = (y * y).recip();
        (T::c(FRAC_1_SQRT_PI) - large(z)) / y * exp_neg_square(y)
    };
    if x < T::zero() {
        T::c(2.0) - tail
    } else {
        tail
    }
}

/// Error function, `1 - erfc(x)`, accurate near zero.
pub fn erf<T: Scalar>(x: T) -> T {
    let y = x.abs();
    if y <= T::c(THRESHOLD) {
        x * small(y * y)
    } else {
        T::one() - erfc(x)
    }
}
