//! Memory kernels of convolution chains.
//!
//! A chain with rates `β_1, …, β_n` driven by white noise `ξ` defines
//! `Z_1 = e^{-β_1 t} ⋆ ξ` and `Z_m = e^{-β_m t} ⋆ Z_{m-1}`. Each `Z_m` is a
//! linear functional of past noise with kernel `h_m`, a finite sum of
//! `t^n e^{-γ t}` terms computed here exactly.

use std::collections::BTreeMap;
use std::fmt;

use nalgebra::DMatrix;
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use thiserror::Error;

use crate::noise::Rate;
use crate::rational::{int, to_f64, Surd};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KernelError {
    #[error("a convolution chain needs at least one rate")]
    EmptyChain,
    #[error("decay rates must be positive, got {0}")]
    NonPositiveRate(BigRational),
    #[error("closed forms are available for chains of length at most {max}, got {len}")]
    Unsupported { len: usize, max: usize },
    #[error("kernel index {index} is outside a chain of length {len}")]
    Index { index: usize, len: usize },
    #[error("the covariance of this chain is not positive definite")]
    NotPositiveDefinite,
    #[error("cannot parse chain {0:?}: expected comma-separated mode numbers or p/q rates")]
    Parse(String),
}

/// Decay rates `β_1, …, β_n`, innermost convolution first.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ConvolutionChain {
    rates: Vec<BigRational>,
}

impl ConvolutionChain {
    pub fn new(rates: Vec<BigRational>) -> Result<Self, KernelError> {
        if rates.is_empty() {
            return Err(KernelError::EmptyChain);
        }
        if let Some(bad) = rates.iter().find(|b| !b.is_positive()) {
            return Err(KernelError::NonPositiveRate(bad.clone()));
        }
        Ok(ConvolutionChain { rates })
    }

    /// Chain of SPDE mode rates given the rates directly, e.g. `[8, 3]`.
    pub fn from_integers(rates: &[i64]) -> Result<Self, KernelError> {
        Self::new(rates.iter().map(|&b| int(b)).collect())
    }

    pub fn from_rates(rates: &[Rate]) -> Result<Self, KernelError> {
        Self::new(rates.iter().map(Rate::beta).collect())
    }

    /// Parses `"8,3"` or `"7/2, 3"`.
    pub fn parse(s: &str) -> Result<Self, KernelError> {
        let rates = s
            .split(',')
            .map(|t| crate::rational::parse(t).ok_or_else(|| KernelError::Parse(s.to_string())))
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(rates)
    }

    pub fn len(&self) -> usize {
        self.rates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rates.is_empty()
    }

    pub fn rates(&self) -> &[BigRational] {
        &self.rates
    }

    pub fn rates_f64(&self) -> Vec<f64> {
        self.rates.iter().map(to_f64).collect()
    }

    pub fn prefix(&self, len: usize) -> ConvolutionChain {
        ConvolutionChain {
            rates: self.rates[..len].to_vec(),
        }
    }
}

impl fmt::Display for ConvolutionChain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.rates.iter().map(|r| r.to_string()).collect();
        write!(f, "({})", parts.join(","))
    }
}

/// `Σ_j p_j(t) e^{-γ_j t}` with exact polynomial coefficients.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExpPolySum {
    /// Rate → polynomial coefficients in ascending powers of `t`.
    terms: BTreeMap<BigRational, Vec<BigRational>>,
}

impl ExpPolySum {
    pub fn exponential(rate: BigRational) -> Self {
        let mut terms = BTreeMap::new();
        terms.insert(rate, vec![BigRational::one()]);
        ExpPolySum { terms }
    }

    fn add_monomial(&mut self, rate: &BigRational, power: usize, c: BigRational) {
        if c.is_zero() {
            return;
        }
        let poly = self.terms.entry(rate.clone()).or_default();
        if poly.len() <= power {
            poly.resize(power + 1, BigRational::zero());
        }
        poly[power] += c;
    }

    fn normalize(mut self) -> Self {
        for poly in self.terms.values_mut() {
            while poly.last().is_some_and(Zero::is_zero) {
                poly.pop();
            }
        }
        self.terms.retain(|_, p| !p.is_empty());
        self
    }

    /// `∫_0^t e^{-β(t-s)} f(s) ds`.
    pub fn convolve(&self, beta: &BigRational) -> Self {
        let mut out = ExpPolySum {
            terms: BTreeMap::new(),
        };
        for (gamma, poly) in &self.terms {
            if gamma == beta {
                for (n, c) in poly.iter().enumerate() {
                    out.add_monomial(beta, n + 1, c / int(n as i64 + 1));
                }
                continue;
            }
            // ∫_0^t s^n e^{d s} ds with d = β - γ, multiplied by e^{-βt}.
            let d = beta - gamma;
            for (n, c) in poly.iter().enumerate() {
                if c.is_zero() {
                    continue;
                }
                let mut falling = BigRational::one();
                let mut d_pow = d.clone();
                let mut last = BigRational::zero();
                for k in 0..=n {
                    let sign = if k % 2 == 0 { int(1) } else { int(-1) };
                    last = &sign * &falling / &d_pow;
                    out.add_monomial(gamma, n - k, c * &last);
                    falling *= int((n - k) as i64);
                    d_pow *= &d;
                }
                out.add_monomial(beta, 0, -(c * last));
            }
        }
        out.normalize()
    }

    /// `∫_0^∞ f(t) g(t) dt`, using `∫ t^a e^{-ct} dt = a!/c^{a+1}`.
    pub fn inner_product(&self, other: &ExpPolySum) -> BigRational {
        let mut total = BigRational::zero();
        for (g1, p1) in &self.terms {
            for (g2, p2) in &other.terms {
                let c = g1 + g2;
                for (a1, c1) in p1.iter().enumerate() {
                    for (a2, c2) in p2.iter().enumerate() {
                        let a = a1 + a2;
                        let fact: BigInt = (1..=a as u64).map(BigInt::from).product();
                        let mut denom = c.clone();
                        for _ in 0..a {
                            denom *= &c;
                        }
                        total += c1 * c2 * BigRational::from_integer(fact) / denom;
                    }
                }
            }
        }
        total
    }

    pub fn eval(&self, t: f64) -> f64 {
        self.terms
            .iter()
            .map(|(g, poly)| {
                let p: f64 = poly.iter().rev().fold(0.0, |acc, c| acc * t + to_f64(c));
                p * (-to_f64(g) * t).exp()
            })
            .sum()
    }

    /// `(rate, polynomial)` pairs in increasing rate.
    pub fn terms(&self) -> impl Iterator<Item = (&BigRational, &[BigRational])> {
        self.terms.iter().map(|(g, p)| (g, p.as_slice()))
    }
}

impl fmt::Display for ExpPolySum {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for (g, poly) in &self.terms {
            for (n, c) in poly.iter().enumerate() {
                if c.is_zero() {
                    continue;
                }
                let sign = if c.is_negative() { "-" } else { "+" };
                if first {
                    if c.is_negative() {
                        write!(f, "-")?;
                    }
                } else {
                    write!(f, " {sign} ")?;
                }
                first = false;
                let t = match n {
                    0 => String::new(),
                    1 => " t".to_string(),
                    n => format!(" t^{n}"),
                };
                write!(f, "{}{t} e^(-{g} t)", c.abs())?;
            }
        }
        if first {
            write!(f, "0")?;
        }
        Ok(())
    }
}

/// Kernel `h_m` (1-based) of the chain.
pub fn kernel(chain: &ConvolutionChain, m: usize) -> Result<ExpPolySum, KernelError> {
    if m == 0 || m > chain.len() {
        return Err(KernelError::Index {
            index: m,
            len: chain.len(),
        });
    }
    Ok(kernels(chain).swap_remove(m - 1))
}

/// All kernels `h_1, …, h_n`.
pub fn kernels(chain: &ConvolutionChain) -> Vec<ExpPolySum> {
    let mut out = Vec::with_capacity(chain.len());
    let mut h = ExpPolySum::exponential(chain.rates[0].clone());
    out.push(h.clone());
    for beta in &chain.rates[1..] {
        h = h.convolve(beta);
        out.push(h.clone());
    }
    out
}

/// Dense exact matrix.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RationalMatrix {
    n_rows: usize,
    n_cols: usize,
    data: Vec<BigRational>,
}

impl RationalMatrix {
    pub fn zeros(n_rows: usize, n_cols: usize) -> Self {
        RationalMatrix {
            n_rows,
            n_cols,
            data: vec![BigRational::zero(); n_rows * n_cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.set(i, i, BigRational::one());
        }
        m
    }

    pub fn from_fn(n_rows: usize, n_cols: usize, mut f: impl FnMut(usize, usize) -> BigRational) -> Self {
        let mut m = Self::zeros(n_rows, n_cols);
        for i in 0..n_rows {
            for j in 0..n_cols {
                m.set(i, j, f(i, j));
            }
        }
        m
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn get(&self, i: usize, j: usize) -> &BigRational {
        &self.data[i * self.n_cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: BigRational) {
        self.data[i * self.n_cols + j] = v;
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.n_cols, self.n_rows, |i, j| self.get(j, i).clone())
    }

    pub fn mul(&self, other: &RationalMatrix) -> Self {
        assert_eq!(self.n_cols, other.n_rows, "matrix dimensions");
        Self::from_fn(self.n_rows, other.n_cols, |i, j| {
            (0..self.n_cols).map(|k| self.get(i, k) * other.get(k, j)).sum()
        })
    }

    pub fn scaled(&self, c: &BigRational) -> Self {
        RationalMatrix {
            data: self.data.iter().map(|x| x * c).collect(),
            ..*self
        }
    }

    /// Gauss-Jordan inverse; `None` when singular.
    pub fn inverse(&self) -> Option<Self> {
        assert_eq!(self.n_rows, self.n_cols, "square matrix");
        let n = self.n_rows;
        let mut a = self.clone();
        let mut inv = Self::identity(n);
        for col in 0..n {
            let pivot = (col..n).find(|&r| !a.get(r, col).is_zero())?;
            if pivot != col {
                for j in 0..n {
                    a.data.swap(pivot * n + j, col * n + j);
                    inv.data.swap(pivot * n + j, col * n + j);
                }
            }
            let p = a.get(col, col).clone();
            for j in 0..n {
                let x = a.get(col, j) / &p;
                a.set(col, j, x);
                let y = inv.get(col, j) / &p;
                inv.set(col, j, y);
            }
            for r in 0..n {
                if r == col || a.get(r, col).is_zero() {
                    continue;
                }
                let factor = a.get(r, col).clone();
                for j in 0..n {
                    let x = a.get(r, j) - &factor * a.get(col, j);
                    a.set(r, j, x);
                    let y = inv.get(r, j) - &factor * inv.get(col, j);
                    inv.set(r, j, y);
                }
            }
        }
        Some(inv)
    }

    pub fn to_f64(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.n_rows, self.n_cols, |i, j| to_f64(self.get(i, j)))
    }
}

impl fmt::Display for RationalMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in 0..self.n_rows {
            let row: Vec<String> = (0..self.n_cols).map(|j| self.get(i, j).to_string()).collect();
            writeln!(f, "[{}]", row.join(", "))?;
        }
        Ok(())
    }
}

/// Covariance `E[Z_k Z_m] = ∫_0^∞ h_k h_m dt` of the stationary chain.
pub fn covariance(chain: &ConvolutionChain) -> RationalMatrix {
    let hs = kernels(chain);
    let n = hs.len();
    RationalMatrix::from_fn(n, n, |i, j| hs[i].inner_product(&hs[j]))
}

/// Diffusion matrix `D = ½ Cov(Z)` from the kernel integrals.
pub fn diffusion_from_kernels(chain: &ConvolutionChain) -> RationalMatrix {
    covariance(chain).scaled(&BigRational::new(1.into(), 2.into()))
}

/// Diffusion matrix `D` of the Fokker-Planck equation for `(Z_1, …, Z_n)`.
/// Chains of length up to three use closed forms; longer chains use the
/// kernel integrals.
pub fn diffusion(chain: &ConvolutionChain) -> RationalMatrix {
    diffusion_closed_form(chain).unwrap_or_else(|_| diffusion_from_kernels(chain))
}

/// Closed-form `D` for chains of length one to three.
pub fn diffusion_closed_form(chain: &ConvolutionChain) -> Result<RationalMatrix, KernelError> {
    let b = chain.rates();
    let n = b.len();
    if n > 3 {
        return Err(KernelError::Unsupported { len: n, max: 3 });
    }
    let one = BigRational::one();
    let mut d = RationalMatrix::zeros(n, n);
    d.set(0, 0, &one / (int(4) * &b[0]));
    if n >= 2 {
        let s12 = &b[0] + &b[1];
        let d12 = &one / (int(4) * &b[0] * &s12);
        let d22 = &one / (int(4) * &b[0] * &b[1] * &s12);
        d.set(0, 1, d12.clone());
        d.set(1, 0, d12);
        d.set(1, 1, d22);
    }
    if n == 3 {
        let (b1, b2, b3) = (&b[0], &b[1], &b[2]);
        let s12 = b1 + b2;
        let s13 = b1 + b3;
        let s23 = b2 + b3;
        let s123 = b1 + b2 + b3;
        let d13 = &one / (int(4) * b1 * &s12 * &s13);
        let d23 = &s123 / (int(4) * b1 * b2 * &s12 * &s13 * &s23);
        let d33 = &s123 / (int(4) * b1 * b2 * b3 * &s12 * &s13 * &s23);
        d.set(0, 2, d13.clone());
        d.set(2, 0, d13);
        d.set(1, 2, d23.clone());
        d.set(2, 1, d23);
        d.set(2, 2, d33);
    }
    Ok(d)
}

/// Lower-triangular `L` with `½ L Lᵀ = D`, so that `dZ` is driven by
/// independent Wiener increments through `L`.
#[derive(Clone, Debug, PartialEq)]
pub enum CholeskyFactor {
    /// `L_{mℓ} = r_{mℓ} / √(2β_ℓ)` with exact rationals `r`.
    Exact {
        scaled: RationalMatrix,
        radicands: Vec<BigRational>,
    },
    /// Floating-point factor for longer chains.
    Numeric(DMatrix<f64>),
}

impl CholeskyFactor {
    pub fn n(&self) -> usize {
        match self {
            CholeskyFactor::Exact { radicands, .. } => radicands.len(),
            CholeskyFactor::Numeric(m) => m.nrows(),
        }
    }

    /// `L_{ij}` as an exact surd, when available.
    pub fn exact(&self, i: usize, j: usize) -> Option<Surd> {
        match self {
            CholeskyFactor::Exact { scaled, radicands } => {
                Some(Surd::new(scaled.get(i, j).clone(), radicands[j].clone()))
            }
            CholeskyFactor::Numeric(_) => None,
        }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        match self {
            CholeskyFactor::Exact { .. } => self.exact(i, j).map_or(0.0, |s| s.to_f64()),
            CholeskyFactor::Numeric(m) => m[(i, j)],
        }
    }

    pub fn to_f64(&self) -> DMatrix<f64> {
        let n = self.n();
        DMatrix::from_fn(n, n, |i, j| self.get(i, j))
    }

    /// `½ L Lᵀ` computed exactly, when the factor is exact.
    pub fn half_llt_exact(&self) -> Option<RationalMatrix> {
        let CholeskyFactor::Exact { scaled, radicands } = self else {
            return None;
        };
        let n = radicands.len();
        Some(RationalMatrix::from_fn(n, n, |i, j| {
            let s: BigRational = (0..n)
                .map(|l| scaled.get(i, l) * scaled.get(j, l) / &radicands[l])
                .sum();
            s / int(2)
        }))
    }
}

/// Cholesky factor of `2D`: exact closed forms up to length four, numeric
/// beyond.
pub fn cholesky(chain: &ConvolutionChain) -> Result<CholeskyFactor, KernelError> {
    if chain.len() <= 4 {
        return cholesky_closed_form(chain);
    }
    let two_d = covariance(chain).to_f64();
    let c = nalgebra::Cholesky::new(two_d).ok_or(KernelError::NotPositiveDefinite)?;
    Ok(CholeskyFactor::Numeric(c.l()))
}

/// Closed-form Cholesky factor for chains of length one to four.
pub fn cholesky_closed_form(chain: &ConvolutionChain) -> Result<CholeskyFactor, KernelError> {
    let b = chain.rates();
    let n = b.len();
    if n > 4 {
        return Err(KernelError::Unsupported { len: n, max: 4 });
    }
    let one = BigRational::one();
    let s = |i: usize, j: usize| &b[i] + &b[j];
    let mut r = RationalMatrix::zeros(n, n);
    r.set(0, 0, one.clone());
    if n >= 2 {
        r.set(1, 0, &one / s(0, 1));
        r.set(1, 1, &one / s(0, 1));
    }
    if n >= 3 {
        r.set(2, 0, &one / (s(0, 1) * s(0, 2)));
        r.set(2, 1, (&one / s(0, 1) + &one / s(1, 2)) / s(0, 2));
        r.set(2, 2, &one / (s(1, 2) * s(0, 2)));
    }
    if n == 4 {
        r.set(3, 0, &one / (s(0, 1) * s(0, 2) * s(0, 3)));
        r.set(
            3,
            1,
            (&one / (s(1, 2) * s(1, 3)) + &one / (s(0, 3) * s(1, 3)) + &one / (s(0, 1) * s(0, 3))) / s(0, 2),
        );
        r.set(
            3,
            2,
            (&one / (s(0, 2) * s(1, 2)) + &one / (s(0, 3) * s(2, 3)) + &one / (s(0, 2) * s(0, 3))) / s(1, 3),
        );
        r.set(3, 3, &one / (s(0, 3) * s(1, 3) * s(2, 3)));
    }
    Ok(CholeskyFactor::Exact {
        scaled: r,
        radicands: b.iter().map(|x| int(2) * x).collect(),
    })
}

/// Drift of the increments `Δ𝔜_m` in the diagonal `s = 1` or off-diagonal
/// `s = 0` case: `s/2` for `m = 1`, zero otherwise.
pub fn drift(chain: &ConvolutionChain, s: u8) -> Vec<BigRational> {
    let mut d = vec![BigRational::zero(); chain.len()];
    d[0] = BigRational::new(BigInt::from(s), BigInt::from(2));
    d
}

/// Precision matrix `M = Cᵀ diag(β) C` of the stationary Gaussian density
/// `G_0 ∝ exp(-Σ β_m ζ_m²)` of the chain, where `ζ = C z`. Its inverse is
/// `4D`. Available for chains of length up to four.
pub fn g0_precision(chain: &ConvolutionChain) -> Result<RationalMatrix, KernelError> {
    let b = chain.rates();
    let n = b.len();
    if n > 4 {
        return Err(KernelError::Unsupported { len: n, max: 4 });
    }
    let mut c = RationalMatrix::zeros(n, n);
    let one = BigRational::one();
    c.set(0, 0, one.clone());
    if n >= 2 {
        c.set(1, 0, one.clone());
        c.set(1, 1, -(&b[0] + &b[1]));
    }
    if n >= 3 {
        let (b1, b2, b3) = (&b[0], &b[1], &b[2]);
        c.set(2, 0, one.clone());
        c.set(2, 1, -(b1 + int(2) * b2 + b3));
        c.set(2, 2, b1 * b2 + (b1 + b2 + b3) * b3);
    }
    if n == 4 {
        let (b1, b2, b3, b4) = (&b[0], &b[1], &b[2], &b[3]);
        let sum = b1 + b2 + b3 + b4;
        c.set(3, 0, one);
        c.set(3, 1, -(b1 + int(2) * b2 + int(2) * b3 + b4));
        c.set(3, 2, b1 * b2 + (int(2) * b1 + int(2) * b2 + int(2) * b3 + b4) * b3 + &sum * b4);
        c.set(
            3,
            3,
            -(b1 * b2 * b3 + (b1 * b2 + b1 * b3 + b2 * b3) * b4 + &sum * b4 * b4),
        );
    }
    let diag = RationalMatrix::from_fn(n, n, |i, j| if i == j { b[i].clone() } else { BigRational::zero() });
    Ok(c.transpose().mul(&diag).mul(&c))
}
