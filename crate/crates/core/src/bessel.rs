//! Bessel functions of the first kind, `J_ν(x)`, for real order and real
//! non-negative argument.
//!
//! Corner-adapted bases need fractional orders (`2k/3` at a reentrant
//! corner), so everything here works for arbitrary real `ν ≥ -1/2`.
//!
//! The evaluation follows the Temme/Steed scheme:
//!
//! 1. Continued fraction CF1 gives `J'_ν / J_ν` at a top order `ν ≥ x`,
//!    where `J_ν(x) > 0`.
//! 2. Downward recurrence carries the unnormalized pair `(J, J')` to the
//!    base order `μ ∈ [-1/2, 1/2]`, storing every intermediate order.
//! 3. The base pair is normalized through the Wronskian
//!    `J_μ Y'_μ - J'_μ Y_μ = 2/(πx)`, with `Y_μ` from Temme's series for
//!    `x < 2` or from Steed's complex continued fraction CF2 otherwise.
//!
//! Step 3 uses both `J_μ` and `J'_μ`, so it stays accurate when the
//! argument sits on a zero of `J_μ`.

use std::f64::consts::PI;

const EPS: f64 = 1e-16;
const FPMIN: f64 = 1e-300;
const MAX_ITER: usize = 1_000_000;
const TEMME_XMAX: f64 = 2.0;
const RESCALE_AT: f64 = 1e250;

/// Taylor coefficients of `1/Γ(z) = Σ_{k≥1} c_k z^k`.
const RECIP_GAMMA: [f64; 27] = [
    1.0,
    0.577_215_664_901_532_860_61,
    -0.655_878_071_520_253_881_08,
    -0.042_002_635_034_095_235_529,
    0.166_538_611_382_291_489_5,
    -0.042_197_734_555_544_336_748,
    -0.009_621_971_527_876_973_562_1,
    0.007_218_943_246_663_099_542_4,
    -0.001_165_167_591_859_065_112_1,
    -0.000_215_241_674_114_950_972_82,
    0.000_128_050_282_388_116_186_15,
    -0.000_020_134_854_780_788_238_656,
    -1.250_493_482_142_670_657_3e-6,
    1.133_027_231_981_695_882_4e-6,
    -2.056_338_416_977_607_103_5e-7,
    6.116_095_104_481_415_817_9e-9,
    5.002_007_644_469_222_930_1e-9,
    -1.181_274_570_487_020_144_6e-9,
    1.043_426_711_691_100_510_5e-10,
    7.782_263_439_905_071_254e-12,
    -3.696_805_618_642_205_708_2e-12,
    5.100_370_287_454_475_979e-13,
    -2.058_326_053_566_506_783_2e-14,
    -5.348_122_539_423_017_982_4e-15,
    1.226_778_628_238_260_790_2e-15,
    -1.181_259_301_697_458_769_5e-16,
    1.186_692_254_751_600_332_6e-18,
];

/// `(Γ₁, Γ₂, 1/Γ(1+μ), 1/Γ(1-μ))` in Temme's notation, `|μ| ≤ 1/2`.
fn temme_gammas(mu: f64) -> (f64, f64, f64, f64) {
    let mu2 = mu * mu;
    let mut gam1 = 0.0;
    let mut gam2 = 0.0;
    let mut pow = 1.0;
    for pair in RECIP_GAMMA.chunks(2) {
        gam2 += pair[0] * pow;
        if let Some(c) = pair.get(1) {
            gam1 -= c * pow;
        }
        pow *= mu2;
    }
    (gam1, gam2, gam2 - mu * gam1, gam2 + mu * gam1)
}

/// Temme's series: `(Y_μ, Y_{μ+1})` for `|μ| ≤ 1/2`, `0 < x < 2`.
fn temme_y(mu: f64, x: f64) -> (f64, f64) {
    let x2 = 0.5 * x;
    let pimu = PI * mu;
    let fact = if pimu.abs() < EPS { 1.0 } else { pimu / pimu.sin() };
    let d = -x2.ln();
    let e = mu * d;
    let fact2 = if e.abs() < EPS { 1.0 } else { e.sinh() / e };
    let (gam1, gam2, gampl, gammi) = temme_gammas(mu);
    let mut ff = 2.0 / PI * fact * (gam1 * e.cosh() + gam2 * fact2 * d);
    let e = e.exp();
    let mut p = e / (gampl * PI);
    let mut q = 1.0 / (e * PI * gammi);
    let pimu2 = 0.5 * pimu;
    let fact3 = if pimu2.abs() < EPS { 1.0 } else { pimu2.sin() / pimu2 };
    let r = PI * pimu2 * fact3 * fact3;
    let mut c = 1.0;
    let dd = -x2 * x2;
    let mut sum = ff + r * q;
    let mut sum1 = p;
    let mu2 = mu * mu;
    for i in 1..MAX_ITER {
        let fi = i as f64;
        ff = (fi * ff + p + q) / (fi * fi - mu2);
        c *= dd / fi;
        p /= fi - mu;
        q /= fi + mu;
        let del = c * (ff + r * q);
        sum += del;
        sum1 += c * p - fi * del;
        if del.abs() < (1.0 + sum.abs()) * EPS {
            break;
        }
    }
    (-sum, -sum1 * 2.0 / x)
}

/// Steed's CF2: `p + iq = (J'_μ + iY'_μ) / (J_μ + iY_μ)` for `x ≥ 2`.
fn steed_cf2(mu: f64, x: f64) -> (f64, f64) {
    let xi = 1.0 / x;
    let mut a = 0.25 - mu * mu;
    let mut p = -0.5 * xi;
    let mut q = 1.0;
    let br = 2.0 * x;
    let mut bi = 2.0;
    let mut fact = a * xi / (p * p + q * q);
    let mut cr = br + q * fact;
    let mut ci = bi + p * fact;
    let mut den = br * br + bi * bi;
    let mut dr = br / den;
    let mut di = -bi / den;
    let mut dlr = cr * dr - ci * di;
    let mut dli = cr * di + ci * dr;
    let mut temp = p * dlr - q * dli;
    q = p * dli + q * dlr;
    p = temp;
    for i in 2..MAX_ITER {
        a += 2.0 * (i as f64 - 1.0);
        bi += 2.0;
        dr = a * dr + br;
        di = a * di + bi;
        if dr.abs() + di.abs() < FPMIN {
            dr = FPMIN;
        }
        fact = a / (cr * cr + ci * ci);
        cr = br + cr * fact;
        ci = bi - ci * fact;
        if cr.abs() + ci.abs() < FPMIN {
            cr = FPMIN;
        }
        den = dr * dr + di * di;
        dr /= den;
        di /= -den;
        dlr = cr * dr - ci * di;
        dli = cr * di + ci * dr;
        temp = p * dlr - q * dli;
        q = p * dli + q * dlr;
        p = temp;
        if (dlr - 1.0).abs() + dli.abs() < EPS {
            break;
        }
    }
    (p, q)
}

/// CF1: `J'_ν(x) / J_ν(x)`.
fn cf1_log_derivative(nu: f64, x: f64) -> f64 {
    let xi = 1.0 / x;
    let xi2 = 2.0 * xi;
    let mut h = (nu * xi).max(FPMIN);
    let mut b = xi2 * nu;
    let mut d = 0.0;
    let mut c = h;
    for _ in 0..MAX_ITER {
        b += xi2;
        d = b - d;
        if d.abs() < FPMIN {
            d = FPMIN;
        }
        c = b - 1.0 / c;
        if c.abs() < FPMIN {
            c = FPMIN;
        }
        d = 1.0 / d;
        let del = c * d;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// Fills `out[k] = J_{μ+k}(x)` for `k = 0..=n`.
///
/// `μ` must lie in `[-1/2, 1/2]` and `x ≥ 0`.
pub fn bessel_j_ladder(mu: f64, x: f64, n: usize, out: &mut Vec<f64>) {
    debug_assert!((-0.5 - 1e-12..=0.5 + 1e-12).contains(&mu));
    out.clear();
    out.resize(n + 1, 0.0);
    if x == 0.0 {
        if mu == 0.0 {
            out[0] = 1.0;
        } else if mu < 0.0 {
            out[0] = f64::INFINITY;
        }
        return;
    }

    // Top order above x, where J is positive and minimal.
    let top = n.max((x - mu).ceil().max(0.0) as usize + 2);
    let xi = 1.0 / x;
    let nu_top = mu + top as f64;
    let mut jl = 1.0;
    let mut jpl = cf1_log_derivative(nu_top, x);
    let mut fact = nu_top * xi;
    if top <= n {
        out[top] = jl;
    }
    for l in (0..top).rev() {
        let jtemp = fact * jl + jpl;
        fact -= xi;
        jpl = fact * jtemp - jl;
        jl = jtemp;
        if l <= n {
            out[l] = jl;
        }
        if jl.abs() > RESCALE_AT {
            jl /= RESCALE_AT;
            jpl /= RESCALE_AT;
            for v in out.iter_mut().skip(l) {
                *v /= RESCALE_AT;
            }
        }
    }

    let w = 2.0 / (PI * x);
    let scale = if x < TEMME_XMAX {
        let (ymu, y1) = temme_y(mu, x);
        let ymup = mu * xi * ymu - y1;
        w / (jl * ymup - jpl * ymu)
    } else {
        let (p, q) = steed_cf2(mu, x);
        let yl = (p * jl - jpl) / q;
        (w / q).sqrt() / jl.hypot(yl)
    };
    for v in out.iter_mut() {
        *v *= scale;
    }
}

/// Splits an order into `(μ, n)` with `ν = μ + n`, `|μ| ≤ 1/2`.
pub fn split_order(nu: f64) -> (f64, usize) {
    assert!(nu >= -0.5 - 1e-12, "order {nu} below -1/2 is not supported");
    let n = nu.round().max(0.0);
    (nu - n, n as usize)
}

/// `J_ν(x)` for real `ν ≥ -1/2` and `x ≥ 0`.
pub fn bessel_j(nu: f64, x: f64) -> f64 {
    let (mu, n) = split_order(nu);
    let mut buf = Vec::with_capacity(n + 2);
    bessel_j_ladder(mu, x, n, &mut buf);
    buf[n]
}

/// `(J_ν(x), J'_ν(x))`.
pub fn bessel_j_with_derivative(nu: f64, x: f64) -> (f64, f64) {
    let (mu, n) = split_order(nu);
    let mut buf = Vec::with_capacity(n + 2);
    bessel_j_ladder(mu, x, n + 1, &mut buf);
    let j = buf[n];
    let jp = if x == 0.0 {
        if nu == 1.0 {
            0.5
        } else if nu == 0.0 || nu > 1.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        nu / x * j - buf[n + 1]
    };
    (j, jp)
}

/// The `n`-th positive zero (1-based) of `J_ν`.
pub fn bessel_j_zero(nu: f64, n: usize) -> f64 {
    assert!(n >= 1);
    // Consecutive zeros are more than 2 apart for ν ≥ 0; a 0.25 step
    // cannot straddle two of them.
    let step = 0.25;
    let mut a = nu.max(0.0) + 1e-3;
    let mut fa = bessel_j(nu, a);
    let mut found = 0;
    loop {
        let b = a + step;
        let fb = bessel_j(nu, b);
        if fa == 0.0 || fa * fb < 0.0 {
            found += 1;
            if found == n {
                return refine_zero(nu, a, b);
            }
        }
        a = b;
        fa = fb;
    }
}

/// All positive zeros of `J_ν` below `x_max`, ascending.
pub fn bessel_j_zeros_below(nu: f64, x_max: f64) -> Vec<f64> {
    let step = 0.25;
    let mut out = Vec::new();
    let mut a = nu.max(0.0) + 1e-3;
    let mut fa = bessel_j(nu, a);
    while a < x_max {
        let b = a + step;
        let fb = bessel_j(nu, b);
        if fa == 0.0 || fa * fb < 0.0 {
            let z = refine_zero(nu, a, b);
            if z < x_max {
                out.push(z);
            }
        }
        a = b;
        fa = fb;
    }
    out
}

fn refine_zero(nu: f64, mut lo: f64, mut hi: f64) -> f64 {
    let flo = bessel_j(nu, lo);
    if flo == 0.0 {
        return lo;
    }
    let sign_lo = flo.signum();
    let mut x = 0.5 * (lo + hi);
    for _ in 0..200 {
        let (f, fp) = bessel_j_with_derivative(nu, x);
        if f == 0.0 {
            return x;
        }
        if f.signum() == sign_lo {
            lo = x;
        } else {
            hi = x;
        }
        let newton = x - f / fp;
        let next = if newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
        if (next - x).abs() <= 4.0 * f64::EPSILON * x {
            return next;
        }
        x = next;
    }
    x
}
