//! Weak (Markovian) models from strong models with quadratic noise.
//!
//! A quadratic noise term `c · φ_j H_{m_n} ⋯ H_{m_1} φ_i` is a white noise
//! multiplied by a coloured process. Over long times it acts like
//! `c·(δ_ij/2)` drift (only for a single convolution) plus a combination of
//! new white noises `ψ`, one for each prefix of the convolution chain, with
//! weights from the Cholesky factor of the chain's diffusion matrix.

use std::collections::BTreeMap;
use std::fmt;

use nalgebra::DMatrix;
use num_rational::BigRational;
use num_traits::{One, Zero};
use thiserror::Error;

use crate::kernels::{cholesky, CholeskyFactor, ConvolutionChain, KernelError};
use crate::noise::{Primary, Rate};
use crate::rational::{int, to_f64, Surd};
use crate::series::{monomial_label, EvolutionSeries};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WeakError {
    #[error("malformed noise term at {monomial}: {reason}")]
    Structure { monomial: String, reason: String },
    #[error("{family} is defined for k >= {min}, got {k}")]
    Range { family: &'static str, min: u32, k: u32 },
    #[error(transparent)]
    Kernel(#[from] KernelError),
}

/// `c · a^p σ^q · φ_j H⋯H φ_i` with the chain read innermost first.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct QuadraticNoiseTerm {
    pub a: u32,
    pub sigma: u32,
    pub coefficient: BigRational,
    pub outer: u32,
    pub inner: u32,
    pub rates: Vec<Rate>,
}

impl QuadraticNoiseTerm {
    pub fn chain(&self) -> ConvolutionChain {
        ConvolutionChain::from_rates(&self.rates).expect("rates of a parsed term are positive")
    }

    /// The primary `φ_j H⋯H φ_i` this term multiplies.
    pub fn primary(&self) -> Primary {
        let convolved = self
            .rates
            .iter()
            .fold(Primary::atom(self.inner), |p, r| Primary::conv_rate(r.clone(), p));
        Primary::product(Primary::atom(self.outer), convolved).expect("degree two")
    }
}

/// `c · a^p σ^q · φ_k`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BareNoise {
    pub a: u32,
    pub sigma: u32,
    pub atom: u32,
    pub coefficient: BigRational,
}

/// Terms of an evolution series sorted by kind.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ExtractedTerms {
    pub deterministic: BTreeMap<(u32, u32), BigRational>,
    pub bare: Vec<BareNoise>,
    pub quadratic: Vec<QuadraticNoiseTerm>,
}

fn structure(p: u32, q: u32, reason: impl Into<String>) -> WeakError {
    WeakError::Structure {
        monomial: monomial_label(p, q),
        reason: reason.into(),
    }
}

/// Innermost-first rates and inner atom of `H⋯H φ_i`.
fn read_chain(p: &Primary) -> Option<(Vec<Rate>, u32)> {
    let mut rates = Vec::new();
    let mut cur = p;
    while let Primary::Conv { rate, inner } = cur {
        rates.push(rate.clone());
        cur = inner;
    }
    match cur {
        Primary::Atom(a) if !rates.is_empty() => {
            rates.reverse();
            Some((rates, a.mode()))
        }
        _ => None,
    }
}

/// Sorts the terms of `g` into deterministic, bare-noise and quadratic terms.
pub fn extract_quadratic_terms(g: &EvolutionSeries) -> Result<ExtractedTerms, WeakError> {
    let mut out = ExtractedTerms::default();
    for (&(p, q), expr) in g.iter() {
        for (c, primary) in expr.iter() {
            match primary {
                None => {
                    *out.deterministic.entry((p, q)).or_insert_with(BigRational::zero) += c;
                }
                Some(Primary::Atom(k)) => out.bare.push(BareNoise {
                    a: p,
                    sigma: q,
                    atom: k.mode(),
                    coefficient: c.clone(),
                }),
                Some(Primary::Product(x, y)) => {
                    let (bare, other) = match (x.is_atom(), y.is_atom()) {
                        (true, false) => (x, y),
                        (false, true) => (y, x),
                        (true, true) => return Err(structure(p, q, format!("{} has two bare factors", primary.unwrap()))),
                        (false, false) => return Err(structure(p, q, format!("{} has no bare factor", primary.unwrap()))),
                    };
                    let Primary::Atom(j) = **bare else { unreachable!() };
                    let (rates, i) = read_chain(other).ok_or_else(|| {
                        structure(p, q, format!("{other} is not a chain of convolutions of one atom"))
                    })?;
                    out.quadratic.push(QuadraticNoiseTerm {
                        a: p,
                        sigma: q,
                        coefficient: c.clone(),
                        outer: j.mode(),
                        inner: i,
                        rates,
                    });
                }
                Some(other) => {
                    return Err(structure(p, q, format!("{other} is convolved noise without a bare factor")));
                }
            }
        }
    }
    for d in out.deterministic.values() {
        debug_assert!(!d.is_zero());
    }
    Ok(out)
}

/// Identity of an effective noise: the pair `(j, i)` and a chain prefix.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PsiId {
    pub outer: u32,
    pub inner: u32,
    pub prefix: Vec<Rate>,
}

impl fmt::Display for PsiId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let convs: String = self.prefix.iter().rev().map(Rate::to_string).collect();
        write!(f, "ψ[φ{}{}φ{}]", self.outer, convs, self.inner)
    }
}

/// Weight of an effective noise.
#[derive(Clone, Debug, PartialEq)]
pub enum PsiValue {
    Exact(Surd),
    Numeric(f64),
}

impl PsiValue {
    pub fn to_f64(&self) -> f64 {
        match self {
            PsiValue::Exact(s) => s.to_f64(),
            PsiValue::Numeric(x) => *x,
        }
    }

    fn square_exact(&self) -> Option<BigRational> {
        match self {
            PsiValue::Exact(s) => Some(s.square()),
            PsiValue::Numeric(_) => None,
        }
    }
}

impl fmt::Display for PsiValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PsiValue::Exact(s) => write!(f, "{s}"),
            PsiValue::Numeric(x) => write!(f, "{x:.10}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PsiCoefficient {
    pub a: u32,
    pub sigma: u32,
    pub id: PsiId,
    pub value: PsiValue,
}

/// Root-sum-square of the effective noises at one monomial.
#[derive(Clone, Debug, PartialEq)]
pub struct EffectiveNoise {
    pub a: u32,
    pub sigma: u32,
    pub amplitude: f64,
    pub amplitude_squared: Option<BigRational>,
}

/// Drift and replacement noise for one unit quadratic term.
#[derive(Clone, Debug, PartialEq)]
pub struct Replacement {
    pub drift: BigRational,
    pub psi: Vec<(PsiId, PsiValue)>,
}

/// Weak model `da = f(a, σ) dt + bare noise + Σ amplitude · a^p σ^q dW`.
#[derive(Clone, Debug, PartialEq)]
pub struct WeakModel {
    pub drift: BTreeMap<(u32, u32), BigRational>,
    pub bare: Vec<BareNoise>,
    pub psi: Vec<PsiCoefficient>,
    pub noise: Vec<EffectiveNoise>,
}

/// Replacement for `φ_j H⋯H φ_i` with unit coefficient.
pub fn replacement(outer: u32, inner: u32, rates: &[Rate]) -> Result<Replacement, WeakError> {
    let chain = ConvolutionChain::from_rates(rates)?;
    let l = cholesky(&chain)?;
    let m = rates.len();
    let drift = if outer == inner && m == 1 {
        BigRational::new(1.into(), 2.into())
    } else {
        BigRational::zero()
    };
    let psi = (0..m)
        .map(|ell| {
            let id = PsiId {
                outer,
                inner,
                prefix: rates[..=ell].to_vec(),
            };
            let value = match &l {
                CholeskyFactor::Exact { .. } => PsiValue::Exact(l.exact(m - 1, ell).expect("exact factor")),
                CholeskyFactor::Numeric(_) => PsiValue::Numeric(l.get(m - 1, ell)),
            };
            (id, value)
        })
        .collect();
    Ok(Replacement { drift, psi })
}

#[derive(Clone)]
enum Accum {
    Exact { sum: BigRational, radicand: BigRational },
    Numeric(f64),
}

/// Replaces every quadratic noise term of `g` by drift and effective noise.
pub fn reduce(g: &EvolutionSeries) -> Result<WeakModel, WeakError> {
    let extracted = extract_quadratic_terms(g)?;
    let mut drift = extracted.deterministic.clone();
    let mut acc: BTreeMap<((u32, u32), PsiId), Accum> = BTreeMap::new();
    let mut factors: BTreeMap<Vec<Rate>, CholeskyFactor> = BTreeMap::new();

    for t in &extracted.quadratic {
        let monomial = (t.a, t.sigma);
        if t.outer == t.inner && t.rates.len() == 1 {
            *drift.entry(monomial).or_insert_with(BigRational::zero) += &t.coefficient / int(2);
        }
        if !factors.contains_key(&t.rates) {
            factors.insert(t.rates.clone(), cholesky(&t.chain())?);
        }
        let l = &factors[&t.rates];
        let m = t.rates.len();
        for ell in 0..m {
            let id = PsiId {
                outer: t.outer,
                inner: t.inner,
                prefix: t.rates[..=ell].to_vec(),
            };
            let contribution = match l {
                CholeskyFactor::Exact { scaled, radicands } => Accum::Exact {
                    sum: &t.coefficient * scaled.get(m - 1, ell),
                    radicand: radicands[ell].clone(),
                },
                CholeskyFactor::Numeric(_) => Accum::Numeric(to_f64(&t.coefficient) * l.get(m - 1, ell)),
            };
            let slot = acc.entry((monomial, id));
            use std::collections::btree_map::Entry;
            match slot {
                Entry::Vacant(v) => {
                    v.insert(contribution);
                }
                Entry::Occupied(mut o) => {
                    let merged = match (o.get().clone(), contribution) {
                        (Accum::Exact { sum, radicand }, Accum::Exact { sum: s2, .. }) => Accum::Exact {
                            sum: sum + s2,
                            radicand,
                        },
                        (a, b) => Accum::Numeric(accum_f64(&a) + accum_f64(&b)),
                    };
                    o.insert(merged);
                }
            }
        }
    }
    drift.retain(|_, c| !c.is_zero());

    let psi: Vec<PsiCoefficient> = acc
        .into_iter()
        .filter_map(|(((p, q), id), a)| {
            let value = match a {
                Accum::Exact { sum, radicand } if !sum.is_zero() => PsiValue::Exact(Surd::new(sum, radicand)),
                Accum::Exact { .. } => return None,
                Accum::Numeric(x) => PsiValue::Numeric(x),
            };
            Some(PsiCoefficient { a: p, sigma: q, id, value })
        })
        .collect();

    let mut grouped: BTreeMap<(u32, u32), Vec<&PsiValue>> = BTreeMap::new();
    for c in &psi {
        grouped.entry((c.a, c.sigma)).or_default().push(&c.value);
    }
    let noise = grouped
        .into_iter()
        .map(|((p, q), values)| {
            let exact: Option<BigRational> = values.iter().map(|v| v.square_exact()).sum();
            let amplitude = match &exact {
                Some(sq) => to_f64(sq).sqrt(),
                None => values.iter().map(|v| v.to_f64().powi(2)).sum::<f64>().sqrt(),
            };
            EffectiveNoise {
                a: p,
                sigma: q,
                amplitude,
                amplitude_squared: exact,
            }
        })
        .collect();

    Ok(WeakModel {
        drift,
        bare: extracted.bare,
        psi,
        noise,
    })
}

fn accum_f64(a: &Accum) -> f64 {
    match a {
        Accum::Exact { sum, radicand } => to_f64(sum) / to_f64(radicand).sqrt(),
        Accum::Numeric(x) => *x,
    }
}

impl WeakModel {
    /// Coefficient of `σ² a` in the drift.
    pub fn stochastic_resonance(&self) -> BigRational {
        self.drift.get(&(1, 2)).cloned().unwrap_or_else(BigRational::zero)
    }

    pub fn amplitude(&self, p: u32, q: u32) -> Option<&EffectiveNoise> {
        self.noise.iter().find(|n| n.a == p && n.sigma == q)
    }

    /// Drift coefficients as a polynomial in `a` (ascending) for fixed `σ`.
    pub fn drift_polynomial(&self, sigma: f64) -> Vec<f64> {
        let degree = self.drift.keys().map(|&(p, _)| p).max().unwrap_or(0) as usize;
        let mut c = vec![0.0; degree + 1];
        for (&(p, q), v) in &self.drift {
            c[p as usize] += to_f64(v) * sigma.powi(q as i32);
        }
        c
    }

    /// The same model with every bare and effective noise removed.
    pub fn drift_only(&self) -> WeakModel {
        WeakModel {
            drift: self.drift.clone(),
            bare: Vec::new(),
            psi: Vec::new(),
            noise: Vec::new(),
        }
    }
}

impl fmt::Display for WeakModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "drift")?;
        for (&(p, q), c) in &self.drift {
            writeln!(f, "  {:<10} {c}", monomial_label(p, q))?;
        }
        let sr = self.stochastic_resonance();
        writeln!(f, "  stochastic resonance (σ² a): {sr} ≈ {:.6}", to_f64(&sr))?;
        writeln!(f, "bare noise")?;
        for b in &self.bare {
            writeln!(f, "  {:<10} {}·φ{}", monomial_label(b.a, b.sigma), b.coefficient, b.atom)?;
        }
        writeln!(f, "effective noise")?;
        for c in &self.psi {
            writeln!(f, "  {:<10} {} {}", monomial_label(c.a, c.sigma), c.id, c.value)?;
        }
        writeln!(f, "amplitudes")?;
        for n in &self.noise {
            writeln!(f, "  {:<10} {:.6}", monomial_label(n.a, n.sigma), n.amplitude)?;
        }
        Ok(())
    }
}

fn k_poly(k: u32) -> (BigRational, BigRational, BigRational) {
    let k = int(k as i64);
    let k2 = &k * &k;
    let minus = int(2) * &k2 - int(2) * &k - int(1);
    let plus = int(2) * &k2 + int(2) * &k - int(1);
    (k2, minus, plus)
}

/// `1 / [2(k²-1)(2k²-2k-1)(2k²+2k-1)]`, the coefficient of `a σ² φ_k H_k φ_k`.
pub fn c0(k: u32) -> Result<BigRational, WeakError> {
    if k < 3 {
        return Err(WeakError::Range { family: "c0", min: 3, k });
    }
    let (k2, minus, plus) = k_poly(k);
    Ok(BigRational::one() / (int(2) * (k2 - int(1)) * minus * plus))
}

/// `(4k⁴-2k²+1) / [12k²(2k²-2k-1)(2k²+2k-1)]`.
pub fn cstar(k: u32) -> Result<BigRational, WeakError> {
    if k < 3 {
        return Err(WeakError::Range { family: "c*", min: 3, k });
    }
    let (k2, minus, plus) = k_poly(k);
    Ok((int(4) * &k2 * &k2 - int(2) * &k2 + int(1)) / (int(12) * k2 * minus * plus))
}

/// `(k±1) / [4(2k²±2k-1)]`; `positive` selects the upper sign.
pub fn cpm(k: u32, positive: bool) -> Result<BigRational, WeakError> {
    let min = if positive { 2 } else { 4 };
    if k < min {
        let family = if positive { "c+" } else { "c-" };
        return Err(WeakError::Range { family, min, k });
    }
    let kk = int(k as i64);
    let s = if positive { int(1) } else { int(-1) };
    Ok((&kk + &s) / (int(4) * (int(2) * &kk * &kk + int(2) * &s * &kk - int(1))))
}

/// `(1/18 - 1/44 + Σ_{k=3}^{K} c0(k)) / 2`: the `σ² a` drift coefficient
/// with noise forcing modes `1..=K`.
pub fn stochastic_resonance(modes: u32) -> Result<BigRational, WeakError> {
    if modes < 2 {
        return Err(WeakError::Range {
            family: "stochastic resonance",
            min: 2,
            k: modes,
        });
    }
    let mut s = BigRational::new(1.into(), 18.into()) - BigRational::new(1.into(), 44.into());
    for k in 3..=modes {
        s += c0(k)?;
    }
    Ok(s / int(2))
}

/// Real roots of `Σ c_n x^n` (ascending coefficients), sorted.
pub fn polynomial_roots(coeffs: &[f64]) -> Vec<f64> {
    let mut c: Vec<f64> = coeffs.to_vec();
    while c.last().is_some_and(|x| *x == 0.0) {
        c.pop();
    }
    let mut roots = Vec::new();
    let zeros = c.iter().take_while(|x| **x == 0.0).count();
    if zeros > 0 {
        roots.push(0.0);
        c.drain(..zeros);
    }
    let n = c.len().saturating_sub(1);
    if n == 0 {
        return roots;
    }
    let lead = c[n];
    let companion = DMatrix::from_fn(n, n, |i, j| {
        if i == 0 {
            -c[n - 1 - j] / lead
        } else if i == j + 1 {
            1.0
        } else {
            0.0
        }
    });
    let scale = c.iter().map(|x| (x / lead).abs()).fold(1.0, f64::max);
    for z in companion.complex_eigenvalues().iter() {
        if z.im.abs() <= 1e-7 * scale.max(z.re.abs()) {
            roots.push(newton_polish(&c, z.re));
        }
    }
    roots.sort_by(f64::total_cmp);
    roots.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    roots
}

fn newton_polish(c: &[f64], mut x: f64) -> f64 {
    for _ in 0..20 {
        let (mut p, mut dp) = (0.0, 0.0);
        for &ci in c.iter().rev() {
            dp = dp * x + p;
            p = p * x + ci;
        }
        if dp == 0.0 {
            break;
        }
        let step = p / dp;
        x -= step;
        if step.abs() < 1e-15 * x.abs().max(1.0) {
            break;
        }
    }
    x
}

/// Equilibria of the deterministic drift at noise strength `σ`: always
/// `a = 0`, plus any nonzero real roots.
pub fn equilibria(w: &WeakModel, sigma: f64) -> Vec<f64> {
    let mut roots = polynomial_roots(&w.drift_polynomial(sigma));
    if !roots.iter().any(|r| *r == 0.0) {
        roots.push(0.0);
        roots.sort_by(f64::total_cmp);
    }
    roots
}

/// Leading-order equilibria `±σ√(12α)` of `ασ²a - a³/12`; empty for `α <= 0`.
pub fn cubic_equilibria(alpha: f64, sigma: f64) -> Vec<f64> {
    if alpha <= 0.0 {
        return Vec::new();
    }
    let a = sigma * (12.0 * alpha).sqrt();
    vec![-a, a]
}

/// Integer helper for building custom-rate chains in tests and tools.
pub fn mode_rates(modes: &[u32]) -> Vec<Rate> {
    modes.iter().map(|&m| Rate::Mode(m)).collect()
}
