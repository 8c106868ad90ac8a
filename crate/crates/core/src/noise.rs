//! Exact noise expressions.
//!
//! A [`NoiseExpr`] is a finite linear combination, with exact rational
//! coefficients, of *primaries*: white-noise atoms `φ_k`, memory convolutions
//! `H_m Φ = e^{-β_m t} ⋆ Φ` and products of at most two atoms' worth of noise.
//! Expressions are kept in a unique canonical form, so two expressions are
//! equal exactly when they compare equal.
//!
//! The two non-trivial operations are [`NoiseExpr::ddt`], the exact time
//! derivative under `d/dt H_m Φ = -β_m H_m Φ + Φ`, and
//! [`NoiseExpr::split_solvability`], which peels convolutions off a term and
//! sorts the pieces into a field part and an irreducible evolution part.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, AddAssign, Mul, Neg, Sub, SubAssign};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use thiserror::Error;

/// Highest noise degree (atom count) carried by any primary.
pub const MAX_DEGREE: usize = 2;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum NoiseError {
    #[error("noise degree {0} exceeds the supported maximum of 2")]
    DegreeOverflow(usize),
    #[error("bare white noise is not differentiable")]
    NonDifferentiable,
    #[error("noise atoms need a mode k >= 1, got {0}")]
    InvalidAtom(u32),
    #[error("memory convolutions need a mode m >= 2, got {0}")]
    InvalidConvMode(u32),
    #[error("convolution decay rates must be positive, got {0}")]
    NonPositiveRate(BigRational),
}

/// White noise `φ_k` attached to the spatial mode `sin kx`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NoiseAtom(u32);

impl NoiseAtom {
    pub fn new(mode: u32) -> Result<Self, NoiseError> {
        if mode == 0 {
            return Err(NoiseError::InvalidAtom(mode));
        }
        Ok(NoiseAtom(mode))
    }

    pub fn mode(self) -> u32 {
        self.0
    }
}

/// Decay rate of a memory convolution.
///
/// `Mode(m)` is the convolution `H_m` of the prototype SPDE with
/// `β = m² - 1`; `Custom` carries an arbitrary positive rational rate.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Rate {
    Mode(u32),
    Custom(BigRational),
}

impl Rate {
    pub fn mode(m: u32) -> Result<Self, NoiseError> {
        if m < 2 {
            return Err(NoiseError::InvalidConvMode(m));
        }
        Ok(Rate::Mode(m))
    }

    pub fn custom(beta: BigRational) -> Result<Self, NoiseError> {
        if !beta.is_positive() {
            return Err(NoiseError::NonPositiveRate(beta));
        }
        Ok(Rate::Custom(beta))
    }

    /// The decay rate `β`.
    pub fn beta(&self) -> BigRational {
        match self {
            Rate::Mode(m) => {
                let m = BigInt::from(*m);
                BigRational::from_integer(&m * &m - 1)
            }
            Rate::Custom(b) => b.clone(),
        }
    }

    fn validate(&self) -> Result<(), NoiseError> {
        match self {
            Rate::Mode(m) if *m < 2 => Err(NoiseError::InvalidConvMode(*m)),
            Rate::Custom(b) if !b.is_positive() => Err(NoiseError::NonPositiveRate(b.clone())),
            _ => Ok(()),
        }
    }
}

impl fmt::Display for Rate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Rate::Mode(m) => write!(f, "H{m}"),
            Rate::Custom(b) => write!(f, "H[{b}]"),
        }
    }
}

/// A noise factor: an atom, a convolution of a primary, or a product of two
/// degree-one primaries.
///
/// Convolution is linear, so in canonical form the convolved object is always
/// a single primary; sums are distributed into the owning [`NoiseExpr`].
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Primary {
    Atom(NoiseAtom),
    Conv { rate: Rate, inner: Box<Primary> },
    Product(Box<Primary>, Box<Primary>),
}

impl Primary {
    /// `φ_k`. Panics if `k == 0`.
    pub fn atom(k: u32) -> Primary {
        Primary::Atom(NoiseAtom::new(k).expect("noise atoms are indexed from 1"))
    }

    /// `H_m inner`. Panics if `m < 2`.
    pub fn conv(m: u32, inner: Primary) -> Primary {
        Primary::Conv {
            rate: Rate::mode(m).expect("convolution modes start at 2"),
            inner: Box::new(inner),
        }
    }

    /// Convolution with an arbitrary rate.
    pub fn conv_rate(rate: Rate, inner: Primary) -> Primary {
        Primary::Conv {
            rate,
            inner: Box::new(inner),
        }
    }

    /// Nested convolutions `H_{m_1} H_{m_2} … φ_k`, outermost mode first.
    pub fn convs(modes: &[u32], k: u32) -> Primary {
        modes
            .iter()
            .rev()
            .fold(Primary::atom(k), |inner, &m| Primary::conv(m, inner))
    }

    /// Canonical product of two primaries.
    pub fn product(a: Primary, b: Primary) -> Result<Primary, NoiseError> {
        let degree = a.degree() + b.degree();
        if degree > MAX_DEGREE {
            return Err(NoiseError::DegreeOverflow(degree));
        }
        Ok(match a.cmp(&b) {
            Ordering::Greater => Primary::Product(Box::new(b), Box::new(a)),
            _ => Primary::Product(Box::new(a), Box::new(b)),
        })
    }

    /// Number of atoms (the noise degree).
    pub fn degree(&self) -> usize {
        match self {
            Primary::Atom(_) => 1,
            Primary::Conv { inner, .. } => inner.degree(),
            Primary::Product(a, b) => a.degree() + b.degree(),
        }
    }

    pub fn is_atom(&self) -> bool {
        matches!(self, Primary::Atom(_))
    }

    /// True for an atom or a product with an atom factor.
    pub fn has_bare_factor(&self) -> bool {
        match self {
            Primary::Atom(_) => true,
            Primary::Conv { .. } => false,
            Primary::Product(a, b) => a.is_atom() || b.is_atom(),
        }
    }

    /// True when every atom sits under at least one convolution.
    pub fn all_atoms_convolved(&self) -> bool {
        match self {
            Primary::Atom(_) => false,
            Primary::Conv { .. } => true,
            Primary::Product(a, b) => a.all_atoms_convolved() && b.all_atoms_convolved(),
        }
    }

    /// Visits this primary and every sub-primary in preorder.
    pub fn visit<'a>(&'a self, f: &mut impl FnMut(&'a Primary)) {
        f(self);
        match self {
            Primary::Atom(_) => {}
            Primary::Conv { inner, .. } => inner.visit(f),
            Primary::Product(a, b) => {
                a.visit(f);
                b.visit(f);
            }
        }
    }

    /// Validates modes and rates, sorts every product and checks the degree.
    pub fn canonical(&self) -> Result<Primary, NoiseError> {
        match self {
            Primary::Atom(a) => Ok(Primary::Atom(NoiseAtom::new(a.0)?)),
            Primary::Conv { rate, inner } => {
                rate.validate()?;
                let inner = inner.canonical()?;
                if inner.degree() > MAX_DEGREE {
                    return Err(NoiseError::DegreeOverflow(inner.degree()));
                }
                Ok(Primary::Conv {
                    rate: rate.clone(),
                    inner: Box::new(inner),
                })
            }
            Primary::Product(a, b) => {
                let degree = self.degree();
                if degree > MAX_DEGREE {
                    return Err(NoiseError::DegreeOverflow(degree));
                }
                Primary::product(a.canonical()?, b.canonical()?)
            }
        }
    }

    fn tag(&self) -> u8 {
        match self {
            Primary::Atom(_) => 0,
            Primary::Conv { .. } => 1,
            Primary::Product(..) => 2,
        }
    }

    // Lexicographic comparison of preorder encodings. Encodings of complete
    // trees are prefix-free, so a recursive comparison is equivalent.
    fn preorder_cmp(&self, other: &Primary) -> Ordering {
        match (self, other) {
            (Primary::Atom(a), Primary::Atom(b)) => a.cmp(b),
            (Primary::Conv { rate: r1, inner: i1 }, Primary::Conv { rate: r2, inner: i2 }) => {
                r1.cmp(r2).then_with(|| i1.preorder_cmp(i2))
            }
            (Primary::Product(a1, b1), Primary::Product(a2, b2)) => {
                a1.preorder_cmp(a2).then_with(|| b1.preorder_cmp(b2))
            }
            _ => self.tag().cmp(&other.tag()),
        }
    }
}

impl Ord for Primary {
    fn cmp(&self, other: &Self) -> Ordering {
        self.degree()
            .cmp(&other.degree())
            .then_with(|| self.preorder_cmp(other))
    }
}

impl PartialOrd for Primary {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for Primary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Primary::Atom(a) => write!(f, "φ{}", a.0),
            Primary::Conv { rate, inner } => match **inner {
                Primary::Product(..) => write!(f, "{rate}({inner})"),
                _ => write!(f, "{rate}{inner}"),
            },
            Primary::Product(a, b) => write!(f, "{a}·{b}"),
        }
    }
}

/// One term of an expression; `primary == None` is the deterministic unit.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NoiseTerm {
    pub coefficient: BigRational,
    pub primary: Option<Primary>,
}

/// Canonical exact-rational combination of noise primaries.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct NoiseExpr {
    terms: BTreeMap<Option<Primary>, BigRational>,
}

fn key_product(a: &Option<Primary>, b: &Option<Primary>) -> Result<Option<Primary>, NoiseError> {
    match (a, b) {
        (None, x) | (x, None) => Ok(x.clone()),
        (Some(a), Some(b)) => Primary::product(a.clone(), b.clone()).map(Some),
    }
}

impl NoiseExpr {
    pub fn zero() -> Self {
        Self::default()
    }

    /// The deterministic constant `c`.
    pub fn constant(c: BigRational) -> Self {
        let mut e = Self::zero();
        e.add_term(c, None);
        e
    }

    pub fn one() -> Self {
        Self::constant(BigRational::one())
    }

    /// `c · p` after canonicalising `p`.
    pub fn term(c: BigRational, p: Primary) -> Result<Self, NoiseError> {
        let mut e = Self::zero();
        e.add_term(c, Some(p.canonical()?));
        Ok(e)
    }

    /// `c · p` for a primary built from the canonical constructors.
    pub(crate) fn term_unchecked(c: BigRational, p: Primary) -> Self {
        let mut e = Self::zero();
        e.add_term(c, Some(p));
        e
    }

    /// Builds the canonical form of an arbitrary list of terms: products are
    /// sorted, like terms merged and zero coefficients dropped.
    pub fn canonicalize<I>(terms: I) -> Result<Self, NoiseError>
    where
        I: IntoIterator<Item = (BigRational, Option<Primary>)>,
    {
        let mut e = Self::zero();
        for (c, p) in terms {
            let key = match p {
                Some(p) => Some(p.canonical()?),
                None => None,
            };
            e.add_term(c, key);
        }
        Ok(e)
    }

    pub(crate) fn add_term(&mut self, c: BigRational, key: Option<Primary>) {
        if c.is_zero() {
            return;
        }
        match self.terms.entry(key) {
            std::collections::btree_map::Entry::Vacant(v) => {
                v.insert(c);
            }
            std::collections::btree_map::Entry::Occupied(mut o) => {
                *o.get_mut() += c;
                if o.get().is_zero() {
                    o.remove();
                }
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// Terms in canonical order.
    pub fn iter(&self) -> impl Iterator<Item = (&BigRational, Option<&Primary>)> {
        self.terms.iter().map(|(k, c)| (c, k.as_ref()))
    }

    pub fn to_terms(&self) -> Vec<NoiseTerm> {
        self.iter()
            .map(|(c, p)| NoiseTerm {
                coefficient: c.clone(),
                primary: p.cloned(),
            })
            .collect()
    }

    /// Coefficient of `p` (or of the deterministic unit when `None`).
    pub fn coefficient(&self, p: Option<&Primary>) -> BigRational {
        self.terms
            .get(&p.cloned())
            .cloned()
            .unwrap_or_else(BigRational::zero)
    }

    /// Highest noise degree over all terms (0 for the empty expression).
    pub fn degree(&self) -> usize {
        self.terms
            .keys()
            .map(|k| k.as_ref().map_or(0, Primary::degree))
            .max()
            .unwrap_or(0)
    }

    pub fn scaled(&self, c: &BigRational) -> Self {
        if c.is_zero() {
            return Self::zero();
        }
        NoiseExpr {
            terms: self
                .terms
                .iter()
                .map(|(k, v)| (k.clone(), v * c))
                .collect(),
        }
    }

    /// Product of two expressions.
    pub fn try_mul(&self, other: &NoiseExpr) -> Result<NoiseExpr, NoiseError> {
        let mut out = Self::zero();
        for (ka, ca) in &self.terms {
            for (kb, cb) in &other.terms {
                out.add_term(ca * cb, key_product(ka, kb)?);
            }
        }
        Ok(out)
    }

    /// Applies the memory convolution `e^{-βt} ⋆ (·)` term by term. The
    /// convolution of a constant `c` is `c/β`.
    pub fn convolve(&self, rate: &Rate) -> NoiseExpr {
        let beta = rate.beta();
        let mut out = Self::zero();
        for (k, c) in &self.terms {
            match k {
                None => out.add_term(c / &beta, None),
                Some(p) => out.add_term(c.clone(), Some(Primary::conv_rate(rate.clone(), p.clone()))),
            }
        }
        out
    }

    /// Exact time derivative: `d/dt H Φ = -β H Φ + Φ` together with the
    /// Leibniz rule; constants have zero derivative.
    pub fn ddt(&self) -> Result<NoiseExpr, NoiseError> {
        let mut out = Self::zero();
        for (k, c) in &self.terms {
            if let Some(p) = k {
                for (dk, dc) in primary_ddt(p)?.terms {
                    out.add_term(dc * c, dk);
                }
            }
        }
        Ok(out)
    }

    /// Splits `e` into `(field, evolution)` with `e = d/dt(field) + evolution`.
    ///
    /// Constants and terms with a bare atom factor are irreducible and go to
    /// the evolution. A convolution `c·H Φ` contributes `-c·H Φ/β` to the
    /// field and leaves `c·Φ/β` to be split again. A product of two
    /// convolutions with outer rates `β_a`, `β_b` contributes
    /// `-c·(product)/(β_a+β_b)` and leaves both singly-peeled products.
    pub fn split_solvability(&self) -> (NoiseExpr, NoiseExpr) {
        let mut field = Self::zero();
        let mut evolution = Self::zero();
        for (k, c) in &self.terms {
            split_term(c.clone(), k.as_ref(), &mut field, &mut evolution);
        }
        (field, evolution)
    }
}

fn primary_ddt(p: &Primary) -> Result<NoiseExpr, NoiseError> {
    match p {
        Primary::Atom(_) => Err(NoiseError::NonDifferentiable),
        Primary::Conv { rate, inner } => {
            let mut e = NoiseExpr::zero();
            e.add_term(-rate.beta(), Some(p.clone()));
            e.add_term(BigRational::one(), Some((**inner).clone()));
            Ok(e)
        }
        Primary::Product(a, b) => {
            let mut e = NoiseExpr::zero();
            for (dk, dc) in primary_ddt(a)?.terms {
                e.add_term(dc, key_product(&dk, &Some((**b).clone()))?);
            }
            for (dk, dc) in primary_ddt(b)?.terms {
                e.add_term(dc, key_product(&Some((**a).clone()), &dk)?);
            }
            Ok(e)
        }
    }
}

fn split_term(
    c: BigRational,
    key: Option<&Primary>,
    field: &mut NoiseExpr,
    evolution: &mut NoiseExpr,
) {
    let p = match key {
        Some(p) if !p.has_bare_factor() => p,
        _ => {
            evolution.add_term(c, key.cloned());
            return;
        }
    };
    match p {
        Primary::Conv { rate, inner } => {
            let share = c / rate.beta();
            field.add_term(-share.clone(), Some(p.clone()));
            split_term(share, Some(inner), field, evolution);
        }
        Primary::Product(a, b) => {
            let (Primary::Conv { rate: ra, inner: ia }, Primary::Conv { rate: rb, inner: ib }) =
                (&**a, &**b)
            else {
                unreachable!("a product without bare factors has two convolved factors")
            };
            let share = c / (ra.beta() + rb.beta());
            field.add_term(-share.clone(), Some(p.clone()));
            // Peeling never raises the degree, so these products are valid.
            let left = Primary::product((**ia).clone(), (**b).clone()).expect("degree preserved");
            let right = Primary::product((**a).clone(), (**ib).clone()).expect("degree preserved");
            split_term(share.clone(), Some(&left), field, evolution);
            split_term(share, Some(&right), field, evolution);
        }
        Primary::Atom(_) => unreachable!("atoms are bare"),
    }
}

impl fmt::Display for NoiseExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        for (i, (k, c)) in self.terms.iter().enumerate() {
            let negative = c.is_negative();
            let magnitude = c.abs();
            match (i, negative) {
                (0, true) => write!(f, "-")?,
                (0, false) => {}
                (_, true) => write!(f, " - ")?,
                (_, false) => write!(f, " + ")?,
            }
            match k {
                None => write!(f, "{magnitude}")?,
                Some(p) if magnitude.is_one() => write!(f, "{p}")?,
                Some(p) => write!(f, "{magnitude}·{p}")?,
            }
        }
        Ok(())
    }
}

impl AddAssign<&NoiseExpr> for NoiseExpr {
    fn add_assign(&mut self, rhs: &NoiseExpr) {
        for (k, c) in &rhs.terms {
            self.add_term(c.clone(), k.clone());
        }
    }
}

impl SubAssign<&NoiseExpr> for NoiseExpr {
    fn sub_assign(&mut self, rhs: &NoiseExpr) {
        for (k, c) in &rhs.terms {
            self.add_term(-c.clone(), k.clone());
        }
    }
}

impl Add<&NoiseExpr> for &NoiseExpr {
    type Output = NoiseExpr;
    fn add(self, rhs: &NoiseExpr) -> NoiseExpr {
        let mut out = self.clone();
        out += rhs;
        out
    }
}

impl Sub<&NoiseExpr> for &NoiseExpr {
    type Output = NoiseExpr;
    fn sub(self, rhs: &NoiseExpr) -> NoiseExpr {
        let mut out = self.clone();
        out -= rhs;
        out
    }
}

impl Neg for &NoiseExpr {
    type Output = NoiseExpr;
    fn neg(self) -> NoiseExpr {
        self.scaled(&-BigRational::one())
    }
}

impl Mul<&BigRational> for &NoiseExpr {
    type Output = NoiseExpr;
    fn mul(self, rhs: &BigRational) -> NoiseExpr {
        self.scaled(rhs)
    }
}
