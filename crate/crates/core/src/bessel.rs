//! Bessel function of the first kind, order zero.
//!
//! Three regimes keep the absolute error below 1e-12 for |x| <= 20:
//!
//! * |x| < 8: the Maclaurin series. The largest term is ~10^2, so
//!   cancellation costs at most two digits.
//! * 8 <= |x| < 20: Miller's backward recurrence normalised with
//!   `J0 + 2 * sum J_2k = 1`.
//! * |x| >= 20: Hankel's asymptotic expansion, truncated at its smallest term.

use std::f64::consts::{FRAC_PI_4, PI};

const SERIES_LIMIT: f64 = 8.0;
const ASYMPTOTIC_LIMIT: f64 = 20.0;

/// `J0(x)` for any finite `x`. Non-finite input yields NaN.
pub fn bessel_j0(x: f64) -> f64 {
    if !x.is_finite() {
        return f64::NAN;
    }
    let ax = x.abs();
    if ax < SERIES_LIMIT {
        series(ax)
    } else if ax < ASYMPTOTIC_LIMIT {
        miller(ax)
    } else {
        hankel(ax)
    }
}

fn series(x: f64) -> f64 {
    let q = 0.25 * x * x;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..60 {
        let kf = k as f64;
        term *= -q / (kf * kf);
        sum += term;
        if term.abs() < 1e-18 {
            break;
        }
    }
    sum
}

fn miller(x: f64) -> f64 {
    // Start well above x so the seed's error has decayed by the time n ~ x.
    let mut n = (x as usize + 40) & !1;
    let mut next = 0.0_f64;
    let mut cur = 1e-30_f64;
    let mut norm = 0.0_f64;
    while n > 0 {
        let prev = 2.0 * n as f64 / x * cur - next;
        next = cur;
        cur = prev;
        n -= 1;
        // `cur` now holds J_n (unnormalised).
        if n.is_multiple_of(2) && n > 0 {
            norm += 2.0 * cur;
        }
        if cur.abs() > 1e250 {
            cur *= 1e-250;
            next *= 1e-250;
            norm *= 1e-250;
        }
    }
    norm += cur;
    cur / norm
}

fn hankel(x: f64) -> f64 {
    // P ~ sum (-1)^k a_{2k} / x^{2k}, Q ~ sum (-1)^k a_{2k+1} / x^{2k+1},
    // a_k = prod_{m=1..k} (2m-1)^2 / (k! 8^k).
    let mut p = 1.0;
    let mut q = 0.0;
    let mut a = 1.0_f64;
    let mut last = f64::INFINITY;
    for k in 1..80 {
        let kf = k as f64;
        let m = 2.0 * kf - 1.0;
        a *= m * m / (kf * 8.0 * x);
        if a > last {
            break;
        }
        last = a;
        // k odd -> Q, k even -> P, with alternating signs in each.
        match k % 4 {
            1 => q -= a,
            2 => p -= a,
            3 => q += a,
            _ => p += a,
        }
        if a < 1e-17 {
            break;
        }
    }
    let chi = x - FRAC_PI_4;
    (2.0 / (PI * x)).sqrt() * (p * chi.cos() - q * chi.sin())
}
