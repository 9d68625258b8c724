//! Bessel functions of the first kind, their positive zeros, and
//! Gauss–Legendre rules.

use crate::error::{Error, Result};

/// `J_0(x) ..= J_order(x)` for `x >= 0` by Miller's downward recurrence,
/// normalized with `J_0 + 2 Σ J_{2k} = 1`.
pub fn bessel_j_upto(order: usize, x: f64) -> Vec<f64> {
    assert!(x >= 0.0 && x.is_finite(), "bessel_j_upto: x must be finite and nonnegative");
    let mut out = vec![0.0; order + 1];
    if x == 0.0 {
        out[0] = 1.0;
        return out;
    }
    let top = (order as f64).max(x.ceil());
    let start = 2 * ((top as usize + 24 + (40.0 * top).sqrt() as usize) / 2 + 1);

    let two_over_x = 2.0 / x;
    let mut above = 0.0_f64;
    let mut current = 1e-30_f64;
    let mut norm = 0.0_f64;
    for k in (1..=start).rev() {
        let below = k as f64 * two_over_x * current - above;
        above = current;
        current = below;
        // `current` now holds the unnormalized J_{k-1}.
        let idx = k - 1;
        if idx <= order {
            out[idx] = current;
        }
        if idx % 2 == 0 && idx > 0 {
            norm += 2.0 * current;
        }
        if current.abs() > 1e250 {
            current *= 1e-250;
            above *= 1e-250;
            norm *= 1e-250;
            for v in out.iter_mut() {
                *v *= 1e-250;
            }
        }
    }
    norm += current;
    for v in out.iter_mut() {
        *v /= norm;
    }
    out
}

/// `J_m(x)` for integer order; negative orders use `J_{-m} = (-1)^m J_m`.
pub fn bessel_j(m: i64, x: f64) -> f64 {
    let order = m.unsigned_abs() as usize;
    let (xa, sx) = if x < 0.0 { (-x, -1.0) } else { (x, 1.0) };
    let v = bessel_j_upto(order, xa)[order];
    let parity = |k: usize| if k % 2 == 1 { -1.0 } else { 1.0 };
    let mut v = if sx < 0.0 { v * parity(order) } else { v };
    if m < 0 {
        v *= parity(order);
    }
    v
}

/// `(J_m(x), J_m'(x))` for `m >= 0`, `x > 0`.
fn value_and_slope(m: usize, x: f64) -> (f64, f64) {
    let j = bessel_j_upto(m + 1, x);
    let slope = if m == 0 { -j[1] } else { j[m - 1] - m as f64 / x * j[m] };
    (j[m], slope)
}

/// The first `count` positive zeros of `J_m`, each located to within `tol`.
///
/// Zeros are bracketed by a sign scan with unit step (consecutive zeros of
/// integer-order Bessel functions are more than 3 apart) starting below
/// `j_{m,1} > m`, then polished by bracketed Newton iteration.
pub fn bessel_zeros(m: u32, count: usize, tol: f64) -> Result<Vec<f64>> {
    if count == 0 {
        return Err(Error::invalid("count", "at least one zero must be requested"));
    }
    if !(tol > 0.0 && tol <= 1e-6) {
        return Err(Error::invalid("tol", format!("{tol} not in (0, 1e-6]")));
    }
    let m = m as usize;
    let step = 1.0;
    let mut zeros = Vec::with_capacity(count);
    let mut lo = m as f64 + 0.5;
    let mut f_lo = value_and_slope(m, lo).0;
    while zeros.len() < count {
        let hi = lo + step;
        let f_hi = value_and_slope(m, hi).0;
        if f_hi == 0.0 {
            zeros.push(hi);
        } else if f_lo.signum() != f_hi.signum() {
            zeros.push(polish_root(m, lo, hi, f_lo, tol)?);
        }
        lo = hi;
        f_lo = f_hi;
    }
    Ok(zeros)
}

fn polish_root(m: usize, mut a: f64, mut b: f64, f_a: f64, tol: f64) -> Result<f64> {
    let sign_a = f_a.signum();
    let mut x = 0.5 * (a + b);
    for _ in 0..200 {
        let (f, df) = value_and_slope(m, x);
        if f == 0.0 {
            return Ok(x);
        }
        if f.signum() == sign_a {
            a = x;
        } else {
            b = x;
        }
        let newton = x - f / df;
        let next = if df != 0.0 && newton > a && newton < b { newton } else { 0.5 * (a + b) };
        let moved = (next - x).abs();
        x = next;
        if moved < 0.25 * tol || (b - a) < tol {
            return Ok(x);
        }
    }
    Err(Error::Numerical(format!("Bessel zero of order {m} did not converge in [{a}, {b}]")))
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`, nodes ascending.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "gauss_legendre: at least one node");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        if d.is_finite() {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[n - 1 - i] = x;
        nodes[i] = -x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// Gauss–Legendre rule mapped onto `[a, b]`.
pub fn gauss_legendre_on(n: usize, a: f64, b: f64) -> (Vec<f64>, Vec<f64>) {
    let (x, w) = gauss_legendre(n);
    let half = 0.5 * (b - a);
    let mid = 0.5 * (b + a);
    (x.iter().map(|t| mid + half * t).collect(), w.iter().map(|v| v * half).collect())
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    if n == 0 {
        return (1.0, 0.0);
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}
