//! Dense complex helpers: matrix exponential, stable divided differences of
//! exponentials and a randomized truncated SVD.

use faer::linalg::solvers::Solve;
use faer::{c64, Mat, MatRef};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub type CMat = Mat<c64>;

/// Maximum absolute column sum.
pub fn norm1(a: MatRef<'_, c64>) -> f64 {
    (0..a.ncols())
        .map(|j| (0..a.nrows()).map(|i| a[(i, j)].norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

pub fn to_complex(a: MatRef<'_, f64>) -> CMat {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| c64::new(a[(i, j)], 0.0))
}

/// `exp(A)` by degree-13 Padé approximation with scaling and squaring.
pub fn expm(a: MatRef<'_, c64>) -> CMat {
    const THETA13: f64 = 5.371920351148152;
    const B: [f64; 14] = [
        64764752532480000.0,
        32382376266240000.0,
        7771770303897600.0,
        1187353796428800.0,
        129060195264000.0,
        10559470521600.0,
        670442572800.0,
        33522128640.0,
        1323241920.0,
        40840800.0,
        960960.0,
        16380.0,
        182.0,
        1.0,
    ];
    let n = a.nrows();
    let norm = norm1(a);
    let squarings = if norm > THETA13 { (norm / THETA13).log2().ceil() as i32 } else { 0 };
    let scale = c64::new(0.5_f64.powi(squarings), 0.0);
    let a = Mat::from_fn(n, n, |i, j| a[(i, j)] * scale);
    let ident = Mat::<c64>::identity(n, n);
    let a2 = &a * &a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let lin = |c6: f64, c4: f64, c2: f64, c0: f64| {
        Mat::from_fn(n, n, |i, j| {
            a6[(i, j)] * c6 + a4[(i, j)] * c4 + a2[(i, j)] * c2 + ident[(i, j)] * c0
        })
    };
    let u_inner = lin(B[13], B[11], B[9], 0.0);
    let u_outer = &a6 * &u_inner + lin(B[7], B[5], B[3], B[1]);
    let u = &a * &u_outer;
    let v_inner = lin(B[12], B[10], B[8], 0.0);
    let v = &a6 * &v_inner + lin(B[6], B[4], B[2], B[0]);
    let p = &v + &u;
    let q = &v - &u;
    let mut r = q.partial_piv_lu().solve(&p);
    for _ in 0..squarings {
        r = &r * &r;
    }
    r
}

const SERIES_RADIUS: f64 = 0.1;

fn exprel_series(x: c64) -> c64 {
    let mut term = c64::new(1.0, 0.0);
    let mut sum = term;
    for k in 2..16 {
        term = term * x / k as f64;
        sum += term;
    }
    sum
}

/// `(e^x − 1)/x`, accurate near zero.
pub fn exprel(x: c64) -> c64 {
    if x.norm() < SERIES_RADIUS {
        exprel_series(x)
    } else {
        (x.exp() - 1.0) / x
    }
}

/// [`exprel`] with `e^x` supplied.
pub fn exprel_with(x: c64, exp_x: c64) -> c64 {
    if x.norm() < SERIES_RADIUS {
        exprel_series(x)
    } else {
        (exp_x - 1.0) / x
    }
}

/// `∫₀¹ e^{a(1−z) + b z} dz = (e^b − e^a)/(b − a)`, without cancellation or
/// overflow when `Re a, Re b ≤ 0`.
pub fn exp_divided_difference(a: c64, b: c64) -> c64 {
    exp_divided_difference_with(a, a.exp(), b, b.exp())
}

/// [`exp_divided_difference`] with the exponentials supplied.
pub fn exp_divided_difference_with(a: c64, exp_a: c64, b: c64, exp_b: c64) -> c64 {
    let delta = b - a;
    if delta.norm() < SERIES_RADIUS {
        let (hi, exp_hi, lo) = if a.re >= b.re { (a, exp_a, b) } else { (b, exp_b, a) };
        exp_hi * exprel_series(lo - hi)
    } else {
        (exp_b - exp_a) / delta
    }
}

/// 1-norm condition number of `v` given its inverse.
pub fn condition1(v: MatRef<'_, c64>, inverse: MatRef<'_, c64>) -> f64 {
    norm1(v) * norm1(inverse)
}

/// Largest singular values (and right singular vectors if requested) of a
/// linear operator given by its action and the action of its adjoint.
pub struct TruncatedSvd {
    /// Descending.
    pub values: Vec<f64>,
    /// Right singular vectors as columns; empty unless requested.
    pub right: CMat,
}

/// Options for [`randomized_svd`].
#[derive(Debug, Clone, Copy)]
pub struct RandomizedOptions {
    /// Initial target rank.
    pub rank: usize,
    pub oversample: usize,
    pub power_iterations: usize,
    /// Stop growing the rank once the smallest retained singular value
    /// squared drops below this.
    pub floor_sq: f64,
    pub seed: u64,
    pub want_vectors: bool,
}

impl Default for RandomizedOptions {
    fn default() -> Self {
        RandomizedOptions {
            rank: 24,
            oversample: 12,
            power_iterations: 4,
            floor_sq: 0.02,
            seed: 0x5eed,
            want_vectors: false,
        }
    }
}

fn orthonormalize(y: &CMat) -> CMat {
    y.qr().compute_thin_Q()
}

/// Randomized range finder with subspace iteration (Halko, Martinsson,
/// Tropp), growing the rank until the tail falls under `floor_sq`.
pub fn randomized_svd(a: MatRef<'_, c64>, opts: RandomizedOptions) -> Result<TruncatedSvd> {
    let (rows, cols) = (a.nrows(), a.ncols());
    let full = rows.min(cols);
    let mut rank = opts.rank.max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    loop {
        let width = (rank + opts.oversample).min(full);
        let omega = Mat::from_fn(cols, width, |_, _| c64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5));
        let mut q = orthonormalize(&(a * &omega));
        for _ in 0..opts.power_iterations {
            let z = orthonormalize(&(a.adjoint() * &q));
            q = orthonormalize(&(a * &z));
        }
        // B = Q† A, small and wide; its SVD gives A ≈ Q U Σ V†.
        let b = q.adjoint() * a;
        let svd = b.adjoint().to_owned().thin_svd().map_err(|e| Error::Numerical(format!("SVD: {e:?}")))?;
        let s = svd.S().column_vector();
        let values: Vec<f64> = (0..s.nrows()).map(|i| s[i].re).collect();
        let tail = values.get(rank.min(values.len()) - 1).copied().unwrap_or(0.0);
        if width == full || tail * tail < opts.floor_sq {
            let keep = rank.min(values.len());
            let right = if opts.want_vectors {
                // b† = V Σ U†, so the right vectors of A are the left vectors of b†.
                svd.U().subcols(0, keep).to_owned()
            } else {
                Mat::zeros(0, 0)
            };
            return Ok(TruncatedSvd { values: values[..keep].to_vec(), right });
        }
        rank *= 2;
    }
}

/// All singular values (descending) and optionally right singular vectors.
pub fn dense_svd(a: MatRef<'_, c64>, want_vectors: bool) -> Result<TruncatedSvd> {
    let svd = a.thin_svd().map_err(|e| Error::Numerical(format!("SVD: {e:?}")))?;
    let s = svd.S().column_vector();
    let values = (0..s.nrows()).map(|i| s[i].re).collect();
    let right = if want_vectors { svd.V().to_owned() } else { Mat::zeros(0, 0) };
    Ok(TruncatedSvd { values, right })
}

#[cfg(test)]
mod tests {
    use super::*;
    use faer::linalg::solvers::DenseSolveCore;

    fn random(n: usize, scale: f64, seed: u64) -> CMat {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Mat::from_fn(n, n, |_, _| c64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5) * scale)
    }

    fn rel_diff(a: &CMat, b: &CMat) -> f64 {
        let d = a - b;
        d.norm_l2() / b.norm_l2()
    }

    #[test]
    fn expm_of_diagonal() {
        let d = Mat::from_fn(3, 3, |i, j| if i == j { c64::new(-(i as f64) * 7.0, i as f64) } else { c64::new(0.0, 0.0) });
        let e = expm(d.as_ref());
        for i in 0..3 {
            let expect = c64::new(-(i as f64) * 7.0, i as f64).exp();
            assert!((e[(i, i)] - expect).norm() < 1e-13);
        }
    }

    #[test]
    fn expm_agrees_with_eigendecomposition() {
        for seed in 0..10 {
            let a = random(8, 4.0, seed);
            let direct = expm(a.as_ref());
            let eig = a.eigen().unwrap();
            let v = eig.U().to_owned();
            let vinv = v.partial_piv_lu().inverse();
            let lam = eig.S().column_vector();
            let e = Mat::from_fn(8, 8, |i, j| v[(i, j)] * lam[j].exp());
            let via_eig = &e * &vinv;
            assert!(rel_diff(&via_eig, &direct) < 1e-9, "seed {seed}");
        }
    }

    #[test]
    fn expm_semigroup() {
        let a = random(10, 30.0, 99);
        let half = Mat::from_fn(10, 10, |i, j| a[(i, j)] * 0.5);
        let eh = expm(half.as_ref());
        assert!(rel_diff(&(&eh * &eh), &expm(a.as_ref())) < 1e-9);
    }

    #[test]
    fn divided_difference_limits() {
        let a = c64::new(-3.0, 2.0);
        let same = exp_divided_difference(a, a);
        assert!((same - a.exp()).norm() < 1e-15);
        let b = a + c64::new(1e-9, -1e-9);
        let expect = (b.exp() - a.exp()) / (b - a);
        assert!((exp_divided_difference(a, b) - expect).norm() < 1e-6);
        let far = exp_divided_difference(c64::new(-1e4, 0.0), c64::new(-1.0, 0.0));
        assert!((far - c64::new(-1.0, 0.0).exp() / (1e4 - 1.0)).norm() < 1e-15);
        assert!((exprel(c64::new(0.0999, 0.0)) - exprel(c64::new(0.1001, 0.0))).norm() < 1e-3);
    }

    #[test]
    fn randomized_matches_dense() {
        let n = 300;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let u = random(n, 1.0, 1).qr().compute_thin_Q();
        let v = random(n, 1.0, 2).qr().compute_thin_Q();
        let sigma: Vec<f64> = (0..n).map(|k| 0.97 * (-(k as f64) / 6.0).exp() + 1e-3 * rng.gen::<f64>()).collect();
        let a = Mat::from_fn(n, n, |i, j| u[(i, j)] * sigma[j]) * v.adjoint();
        let dense = dense_svd(a.as_ref(), false).unwrap();
        let approx = randomized_svd(a.as_ref(), RandomizedOptions { rank: 4, want_vectors: true, ..Default::default() }).unwrap();
        assert!(approx.values.len() >= 12);
        assert!(approx.values.last().unwrap().powi(2) < 0.02);
        for (x, y) in approx.values.iter().zip(&dense.values) {
            assert!((x * x - y * y).abs() < 1e-8, "{x} {y}");
        }
        // Right vectors: ‖A v‖ = σ.
        let av = &a * &approx.right;
        for k in 0..approx.values.len().min(8) {
            let norm = (0..n).map(|i| av[(i, k)].norm_sqr()).sum::<f64>().sqrt();
            assert!((norm - approx.values[k]).abs() < 1e-8);
        }
    }
}
