//! Independent oracles shared by the integration and acceptance tests.
//!
//! Kernels of chains with distinct rates come from partial fractions,
//! `h_m(t) = Σ_{j≤m} e^{-β_j t} / Π_{l≤m, l≠j} (β_l - β_j)`, and the
//! diffusion matrix from the Ito isometry `D = ½ ∫_0^∞ h hᵀ dt`.

#![allow(dead_code)]

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};
use rand::Rng;

pub fn q(n: i64, d: i64) -> BigRational {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

/// `(rate, coefficient)` pairs of the exponential sum `h_m`, `m` 1-based.
pub fn kernel_terms(rates: &[BigRational], m: usize) -> Vec<(BigRational, BigRational)> {
    (0..m)
        .map(|j| {
            let mut c = BigRational::one();
            for l in 0..m {
                if l != j {
                    c /= &rates[l] - &rates[j];
                }
            }
            (rates[j].clone(), c)
        })
        .collect()
}

/// `∫_0^∞ h_k h_m dt`, 1-based.
pub fn kernel_inner(rates: &[BigRational], k: usize, m: usize) -> BigRational {
    let mut s = BigRational::zero();
    for (ga, ca) in kernel_terms(rates, k) {
        for (gb, cb) in kernel_terms(rates, m) {
            s += &ca * &cb / (&ga + &gb);
        }
    }
    s
}

pub fn diffusion(rates: &[BigRational]) -> Vec<Vec<BigRational>> {
    let n = rates.len();
    (0..n)
        .map(|k| (0..n).map(|m| kernel_inner(rates, k + 1, m + 1) / q(2, 1)).collect())
        .collect()
}

/// Distinct positive rationals `p/d` with `p <= 40`, `d <= 4`.
pub fn random_rates(rng: &mut impl Rng, n: usize) -> Vec<BigRational> {
    let mut out: Vec<BigRational> = Vec::with_capacity(n);
    while out.len() < n {
        let r = q(rng.random_range(1..=40), rng.random_range(1..=4));
        if !out.contains(&r) {
            out.push(r);
        }
    }
    out
}

/// Gauss-Jordan inverse, independent of the library's.
pub fn inverse(a: &[Vec<BigRational>]) -> Vec<Vec<BigRational>> {
    let n = a.len();
    let mut m: Vec<Vec<BigRational>> = a
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let mut r = row.clone();
            r.extend((0..n).map(|j| if i == j { BigRational::one() } else { BigRational::zero() }));
            r
        })
        .collect();
    for c in 0..n {
        let p = (c..n).find(|&r| !m[r][c].is_zero()).expect("invertible");
        m.swap(c, p);
        let piv = m[c][c].clone();
        for x in m[c].iter_mut() {
            *x /= &piv;
        }
        for r in 0..n {
            if r != c && !m[r][c].is_zero() {
                let f = m[r][c].clone();
                for j in 0..2 * n {
                    let v = &m[c][j] * &f;
                    m[r][j] -= v;
                }
            }
        }
    }
    m.into_iter().map(|r| r[n..].to_vec()).collect()
}

pub fn to_f64(r: &BigRational) -> f64 {
    use num_traits::ToPrimitive;
    r.to_f64().expect("finite")
}

/// Heun integration of `ȧ = f(a)` from `a0` over `[0, t]`.
pub fn heun_scalar(f: impl Fn(f64) -> f64, a0: f64, t: f64, dt: f64) -> f64 {
    let steps = (t / dt).round() as usize;
    let mut a = a0;
    for _ in 0..steps {
        let k1 = f(a);
        let k2 = f(a + dt * k1);
        a += 0.5 * dt * (k1 + k2);
    }
    a
}

/// Classical RK4 for `ȧ = f(a)`.
pub fn rk4_scalar(f: impl Fn(f64) -> f64, a0: f64, t: f64, dt: f64) -> f64 {
    let steps = (t / dt).round() as usize;
    let mut a = a0;
    for _ in 0..steps {
        let k1 = f(a);
        let k2 = f(a + 0.5 * dt * k1);
        let k3 = f(a + 0.5 * dt * k2);
        let k4 = f(a + dt * k3);
        a += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    a
}

/// Normalised stationary density of the scalar Stratonovich SDE
/// `da = f(a) dt + Σ_i g_i(a) ∘ dW_i` on a grid, by quadrature of
/// `log p = ∫ 2 f / D - ½ log D` with `D = Σ g_i²`. The grid must be
/// symmetric about zero.
pub fn stationary_density(
    f: impl Fn(f64) -> f64,
    d: impl Fn(f64) -> f64,
    lo: f64,
    hi: f64,
    n: usize,
) -> (Vec<f64>, Vec<f64>) {
    let h = (hi - lo) / n as f64;
    let xs: Vec<f64> = (0..=n).map(|i| lo + i as f64 * h).collect();
    let mid = n / 2;
    let integrand = |x: f64| 2.0 * f(x) / d(x);
    let mut logp = vec![0.0; n + 1];
    for i in mid + 1..=n {
        let (a, b) = (xs[i - 1], xs[i]);
        logp[i] = logp[i - 1] + simpson(&integrand, a, b);
    }
    for i in (0..mid).rev() {
        let (a, b) = (xs[i], xs[i + 1]);
        logp[i] = logp[i + 1] - simpson(&integrand, a, b);
    }
    let mut p: Vec<f64> = xs.iter().zip(&logp).map(|(&x, &l)| (l - 0.5 * d(x).ln()).exp()).collect();
    let norm: f64 = p.iter().sum::<f64>() * h;
    for v in &mut p {
        *v /= norm;
    }
    (xs, p)
}

fn simpson(f: &impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    (b - a) / 6.0 * (f(a) + 4.0 * f(0.5 * (a + b)) + f(b))
}
