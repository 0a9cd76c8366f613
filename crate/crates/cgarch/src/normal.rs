//! Standard normal density, distribution function, and quantile function.

use crate::real::Real;

/// Standard normal density.
pub fn norm_pdf<T: Real>(x: T) -> T {
    let half = T::of(0.5);
    (-half * x * x).exp() / (T::TAU()).sqrt()
}

/// Standard normal cumulative distribution function.
///
/// Double-precision rational approximation (absolute error below 1e-15 for
/// `f64`); the lower tail underflows to zero past `|x| = 37`.
pub fn norm_cdf<T: Real>(x: T) -> T {
    let xabs = x.abs();
    let tail = if xabs > T::of(37.0) {
        T::zero()
    } else {
        let e = (-xabs * xabs * T::of(0.5)).exp();
        if xabs < T::of(7.071_067_811_865_47) {
            let mut n = T::of(3.526_249_659_989_11e-2);
            n = n.mul_add(xabs, T::of(0.700_383_064_443_688));
            n = n.mul_add(xabs, T::of(6.373_962_203_531_65));
            n = n.mul_add(xabs, T::of(33.912_866_078_383));
            n = n.mul_add(xabs, T::of(112.079_291_497_871));
            n = n.mul_add(xabs, T::of(221.213_596_169_931));
            n = n.mul_add(xabs, T::of(220.206_867_912_376));
            let mut d = T::of(8.838_834_764_831_84e-2);
            d = d.mul_add(xabs, T::of(1.755_667_163_182_64));
            d = d.mul_add(xabs, T::of(16.064_177_579_207));
            d = d.mul_add(xabs, T::of(86.780_732_202_946_1));
            d = d.mul_add(xabs, T::of(296.564_248_779_674));
            d = d.mul_add(xabs, T::of(637.333_633_378_831));
            d = d.mul_add(xabs, T::of(793.826_512_519_948));
            d = d.mul_add(xabs, T::of(440.413_735_824_752));
            e * n / d
        } else {
            let mut b = xabs + T::of(0.65);
            b = xabs + T::of(4.0) / b;
            b = xabs + T::of(3.0) / b;
            b = xabs + T::of(2.0) / b;
            b = xabs + T::one() / b;
            e / b / T::of(2.506_628_274_631_000_5)
        }
    };
    if x > T::zero() {
        T::one() - tail
    } else {
        tail
    }
}

/// Standard normal quantile function on `(0, 1)`.
///
/// Rational approximations with relative error below 1e-15 for `f64`.
/// Returns `±infinity` at the endpoints and NaN outside `[0, 1]`.
pub fn inv_norm_cdf<T: Real>(p: T) -> T {
    if p <= T::zero() || p >= T::one() {
        return if p == T::zero() {
            T::neg_infinity()
        } else if p == T::one() {
            T::infinity()
        } else {
            T::nan()
        };
    }
    let q = p - T::of(0.5);
    if q.abs() <= T::of(0.425) {
        let r = T::of(0.180_625) - q * q;
        return q * central_num(r) / central_den(r);
    }
    let mut r = if q < T::zero() { p } else { T::one() - p };
    r = (-r.ln()).sqrt();
    let val = if r <= T::of(5.0) {
        let r = r - T::of(1.6);
        middle_num(r) / middle_den(r)
    } else {
        let r = r - T::of(5.0);
        far_num(r) / far_den(r)
    };
    if q < T::zero() {
        -val
    } else {
        val
    }
}

fn central_num<T: Real>(r: T) -> T {
    let mut n = T::of(2.509_080_928_730_122_7e3);
    n = n.mul_add(r, T::of(3.343_057_558_358_812_8e4));
    n = n.mul_add(r, T::of(6.726_577_092_700_870_1e4));
    n = n.mul_add(r, T::of(4.592_195_393_154_987_1e4));
    n = n.mul_add(r, T::of(1.373_169_376_550_946_1e4));
    n = n.mul_add(r, T::of(1.971_590_950_306_551_4e3));
    n = n.mul_add(r, T::of(1.331_416_678_917_843_8e2));
    n.mul_add(r, T::of(3.387_132_872_796_366_608))
}

fn central_den<T: Real>(r: T) -> T {
    let mut d = T::of(5.226_495_278_852_854_6e3);
    d = d.mul_add(r, T::of(2.872_908_573_572_194_3e4));
    d = d.mul_add(r, T::of(3.930_789_580_009_271e4));
    d = d.mul_add(r, T::of(2.121_379_430_158_659_7e4));
    d = d.mul_add(r, T::of(5.394_196_021_424_751_1e3));
    d = d.mul_add(r, T::of(6.871_870_074_920_579_1e2));
    d = d.mul_add(r, T::of(4.231_333_070_160_091_1e1));
    d.mul_add(r, T::one())
}

fn middle_num<T: Real>(r: T) -> T {
    let mut n = T::of(7.745_450_142_783_414e-4);
    n = n.mul_add(r, T::of(2.272_384_498_926_918_4e-2));
    n = n.mul_add(r, T::of(2.417_807_251_774_506_1e-1));
    n = n.mul_add(r, T::of(1.270_458_252_452_368_4));
    n = n.mul_add(r, T::of(3.647_848_324_763_204_5));
    n = n.mul_add(r, T::of(5.769_497_221_460_691_4));
    n = n.mul_add(r, T::of(4.630_337_846_156_545_3));
    n.mul_add(r, T::of(1.423_437_110_749_683_5))
}

fn middle_den<T: Real>(r: T) -> T {
    let mut d = T::of(1.050_750_071_644_416_9e-9);
    d = d.mul_add(r, T::of(5.475_938_084_995_345e-4));
    d = d.mul_add(r, T::of(1.519_866_656_361_645_7e-2));
    d = d.mul_add(r, T::of(1.481_039_764_274_800_8e-1));
    d = d.mul_add(r, T::of(6.897_673_349_851e-1));
    d = d.mul_add(r, T::of(1.676_384_830_183_803_8));
    d = d.mul_add(r, T::of(2.053_191_626_637_758_8));
    d.mul_add(r, T::one())
}

fn far_num<T: Real>(r: T) -> T {
    let mut n = T::of(2.010_334_399_292_288_1e-7);
    n = n.mul_add(r, T::of(2.711_555_568_743_487_6e-5));
    n = n.mul_add(r, T::of(1.242_660_947_388_078_4e-3));
    n = n.mul_add(r, T::of(2.653_218_952_657_612_3e-2));
    n = n.mul_add(r, T::of(2.965_605_718_285_048_9e-1));
    n = n.mul_add(r, T::of(1.784_826_539_917_291_3));
    n = n.mul_add(r, T::of(5.463_784_911_164_114_4));
    n.mul_add(r, T::of(6.657_904_643_501_103_8))
}

fn far_den<T: Real>(r: T) -> T {
    let mut d = T::of(2.044_263_103_389_939_8e-15);
    d = d.mul_add(r, T::of(1.421_511_758_316_445_9e-7));
    d = d.mul_add(r, T::of(1.846_318_317_510_054_8e-5));
    d = d.mul_add(r, T::of(7.868_691_311_456_132_6e-4));
    d = d.mul_add(r, T::of(1.487_536_129_085_061_5e-2));
    d = d.mul_add(r, T::of(1.369_298_809_227_358e-1));
    d = d.mul_add(r, T::of(5.998_322_065_558_879_4e-1));
    d.mul_add(r, T::one())
}
