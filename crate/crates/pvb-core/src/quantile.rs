//! Normal and Student-t quantiles with their supporting special functions.
//!
//! Everything is computed internally in f64 regardless of the caller's
//! scalar type: quantile accuracy requirements (1e-9 normal, 1e-8 t) are not
//! reachable in f32, and the conversion cost is irrelevant here.

use crate::error::{Error, Result};
use crate::scalar::{s, to_f64, Scalar};

/// Inverse standard normal CDF.
///
/// Rational-minimax approximation with three branches (central, tail, far
/// tail), good to about 1e-15 relative over the full double range.
pub fn normal_quantile<S: Scalar>(p: S) -> Result<S> {
    let p = to_f64(p);
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::DomainError("quantile level must lie in (0,1)"));
    }
    Ok(s(normal_quantile_f64(p)))
}

/// Standard normal CDF, accurate into the far tails.
pub fn normal_cdf<S: Scalar>(x: S) -> S {
    s(normal_cdf_f64(to_f64(x)))
}

/// Student-t quantile for `df > 0` degrees of freedom.
///
/// Inverts the t CDF (regularized incomplete beta) with a safeguarded
/// Newton iteration started from a normal approximation.
pub fn t_quantile<S: Scalar>(p: S, df: S) -> Result<S> {
    let (p, df) = (to_f64(p), to_f64(df));
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::DomainError("quantile level must lie in (0,1)"));
    }
    if !(df > 0.0) {
        return Err(Error::DomainError("degrees of freedom must be positive"));
    }
    Ok(s(t_quantile_f64(p, df)))
}

/// One standard normal draw by inversion, rejecting the zero uniform the
/// half-open generator range can produce.
pub(crate) fn standard_normal<S: Scalar, R: rand::Rng>(rng: &mut R) -> S {
    loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            return s(normal_quantile_f64(u));
        }
    }
}

pub(crate) fn normal_quantile_f64(p: f64) -> f64 {
    debug_assert!(p > 0.0 && p < 1.0);
    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180625 - q * q;
        return q * poly(&A_CENTRAL, r) / poly(&B_CENTRAL, r);
    }
    let r = if q < 0.0 { p } else { 1.0 - p };
    let mut r = (-r.ln()).sqrt();
    let v = if r <= 5.0 {
        r -= 1.6;
        poly(&C_TAIL, r) / poly(&D_TAIL, r)
    } else {
        r -= 5.0;
        poly(&E_FAR, r) / poly(&F_FAR, r)
    };
    if q < 0.0 {
        -v
    } else {
        v
    }
}

#[inline]
fn poly(c: &[f64], x: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, &ck| acc * x + ck)
}

const A_CENTRAL: [f64; 8] = [
    3.3871328727963666080e0,
    1.3314166789178437745e2,
    1.9715909503065514427e3,
    1.3731693765509461125e4,
    4.5921953931549871457e4,
    6.7265770927008700853e4,
    3.3430575583588128105e4,
    2.5090809287301226727e3,
];
const B_CENTRAL: [f64; 8] = [
    1.0,
    4.2313330701600911252e1,
    6.8718700749205790830e2,
    5.3941960214247511077e3,
    2.1213794301586595867e4,
    3.9307895800092710610e4,
    2.8729085735721942674e4,
    5.2264952788528545610e3,
];
const C_TAIL: [f64; 8] = [
    1.42343711074968357734e0,
    4.63033784615654529590e0,
    5.76949722146069140550e0,
    3.64784832476320460504e0,
    1.27045825245236838258e0,
    2.41780725177450611770e-1,
    2.27238449892691845833e-2,
    7.74545014278341407640e-4,
];
const D_TAIL: [f64; 8] = [
    1.0,
    2.05319162663775882187e0,
    1.67638483018380384940e0,
    6.89767334985100004550e-1,
    1.48103976427480074590e-1,
    1.51986665636164571966e-2,
    5.47593808499534494600e-4,
    1.05075007164441684324e-9,
];
const E_FAR: [f64; 8] = [
    6.65790464350110377720e0,
    5.46378491116411436990e0,
    1.78482653991729133580e0,
    2.96560571828504891230e-1,
    2.65321895265761230930e-2,
    1.24266094738807843860e-3,
    2.71155556874348757815e-5,
    2.01033439929228813265e-7,
];
const F_FAR: [f64; 8] = [
    1.0,
    5.99832206555887937690e-1,
    1.36929880922735805310e-1,
    1.48753612908506148525e-2,
    7.86869131145613259100e-4,
    1.84631831751005468180e-5,
    1.42151175831644588870e-7,
    2.04426310338993978564e-15,
];

pub(crate) fn normal_cdf_f64(x: f64) -> f64 {
    let z = x / std::f64::consts::SQRT_2;
    if z < 0.0 {
        0.5 * erfc_f64(-z)
    } else {
        1.0 - 0.5 * erfc_f64(z)
    }
}

/// Complementary error function for nonnegative arguments.
fn erfc_f64(z: f64) -> f64 {
    debug_assert!(z >= 0.0);
    if z <= 1.0 {
        return 1.0 - erf_series(z);
    }
    if z > 27.5 {
        // exp(-z^2) underflows past here.
        return 0.0;
    }
    // Legendre continued fraction, evaluated by the modified Lentz scheme:
    // erfc(z) = exp(-z^2)/sqrt(pi) * 1/(z + (1/2)/(z + (2/2)/(z + ...))).
    let tiny = 1e-300;
    let mut f = z;
    let mut c = z;
    let mut d = 0.0;
    for k in 1..200 {
        let a = k as f64 / 2.0;
        d = z + a * d;
        if d.abs() < tiny {
            d = tiny;
        }
        c = z + a / c;
        if c.abs() < tiny {
            c = tiny;
        }
        d = 1.0 / d;
        let delta = c * d;
        f *= delta;
        if (delta - 1.0).abs() < 1e-17 {
            break;
        }
    }
    (-z * z).exp() / (std::f64::consts::PI.sqrt() * f)
}

/// Maclaurin series for erf, adequate on [0, 1].
fn erf_series(z: f64) -> f64 {
    let mut term = z;
    let mut sum = 0.0;
    let z2 = z * z;
    for n in 0..60 {
        let contrib = term / (2 * n + 1) as f64;
        sum += contrib;
        if contrib.abs() < 1e-18 * sum.abs() {
            break;
        }
        term *= -z2 / (n + 1) as f64;
    }
    2.0 / std::f64::consts::PI.sqrt() * sum
}

/// Lanczos approximation (g = 7, 9 terms), with reflection below 1/2.
pub(crate) fn ln_gamma_f64(z: f64) -> f64 {
    const G: [f64; 9] = [
        0.99999999999980993,
        676.5203681218851,
        -1259.1392167224028,
        771.32342877765313,
        -176.61502916214059,
        12.507343278686905,
        -0.13857109526572012,
        9.9843695780195716e-6,
        1.5056327351493116e-7,
    ];
    if z < 0.5 {
        // ln Gamma(z) = ln(pi / sin(pi z)) - ln Gamma(1 - z)
        return (std::f64::consts::PI / (std::f64::consts::PI * z).sin()).ln()
            - ln_gamma_f64(1.0 - z);
    }
    let z = z - 1.0;
    let mut x = G[0];
    for (i, &gi) in G.iter().enumerate().skip(1) {
        x += gi / (z + i as f64);
    }
    let t = z + 7.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (z + 0.5) * t.ln() - t + x.ln()
}

/// Regularized incomplete beta I_x(a, b) by continued fraction.
pub(crate) fn reg_inc_beta_f64(a: f64, b: f64, x: f64) -> f64 {
    debug_assert!(a > 0.0 && b > 0.0 && (0.0..=1.0).contains(&x));
    if x == 0.0 {
        return 0.0;
    }
    if x == 1.0 {
        return 1.0;
    }
    let ln_front =
        ln_gamma_f64(a + b) - ln_gamma_f64(a) - ln_gamma_f64(b) + a * x.ln() + b * (1.0 - x).ln();
    // The continued fraction converges fast only below the distribution mode.
    if x < (a + 1.0) / (a + b + 2.0) {
        ln_front.exp() * beta_cf(a, b, x) / a
    } else {
        1.0 - ln_front.exp() * beta_cf(b, a, 1.0 - x) / b
    }
}

fn beta_cf(a: f64, b: f64, x: f64) -> f64 {
    let tiny = 1e-300;
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < tiny {
        d = tiny;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..300 {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < tiny {
            d = tiny;
        }
        c = 1.0 + aa / c;
        if c.abs() < tiny {
            c = tiny;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < tiny {
            d = tiny;
        }
        c = 1.0 + aa / c;
        if c.abs() < tiny {
            c = tiny;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < 1e-16 {
            break;
        }
    }
    h
}

pub(crate) fn t_cdf_f64(t: f64, df: f64) -> f64 {
    if t.is_infinite() {
        return if t > 0.0 { 1.0 } else { 0.0 };
    }
    let x = df / (df + t * t);
    let half_tail = 0.5 * reg_inc_beta_f64(0.5 * df, 0.5, x);
    if t >= 0.0 {
        1.0 - half_tail
    } else {
        half_tail
    }
}

fn t_pdf_f64(t: f64, df: f64) -> f64 {
    let ln_norm = ln_gamma_f64(0.5 * (df + 1.0))
        - ln_gamma_f64(0.5 * df)
        - 0.5 * (df * std::f64::consts::PI).ln();
    (ln_norm - 0.5 * (df + 1.0) * (t * t / df).ln_1p()).exp()
}

pub(crate) fn t_quantile_f64(p: f64, df: f64) -> f64 {
    if p == 0.5 {
        return 0.0;
    }
    // Work on the upper half, mirror at the end.
    let (p_hi, neg) = if p < 0.5 { (1.0 - p, true) } else { (p, false) };

    // Normal start with a one-term small-sample correction.
    let z = normal_quantile_f64(p_hi);
    let mut t = z + (z * z * z + z) / (4.0 * df);
    if !t.is_finite() || t < 0.0 {
        t = z.max(0.0);
    }

    // Establish a bracket [lo, hi] with cdf(lo) <= p_hi <= cdf(hi).
    let mut lo = 0.0;
    let mut hi = t.max(1.0);
    for _ in 0..200 {
        if t_cdf_f64(hi, df) >= p_hi {
            break;
        }
        lo = hi;
        hi *= 2.0;
    }
    t = t.clamp(lo, hi);

    for _ in 0..100 {
        let f = t_cdf_f64(t, df) - p_hi;
        if f > 0.0 {
            hi = t;
        } else {
            lo = t;
        }
        let dens = t_pdf_f64(t, df);
        let step = if dens > 0.0 { f / dens } else { 0.0 };
        let mut next = t - step;
        if !(next > lo && next < hi) || step == 0.0 {
            next = 0.5 * (lo + hi);
        }
        if (next - t).abs() <= 1e-14 * t.abs().max(1.0) {
            t = next;
            break;
        }
        t = next;
    }
    if neg {
        -t
    } else {
        t
    }
}
