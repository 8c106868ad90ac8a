//! Iterative construction of the stochastic slow manifold.
//!
//! The field starts at `v = a sin x` with `da/dt = 0`. Each pass computes
//! the residual of the SPDE and removes it: a coefficient of `sin kx` with
//! `k >= 2` is corrected by the memory convolution `H_k`, and the `sin x`
//! coefficient is split into a field part and an irreducible part that goes
//! into the amplitude evolution. The lowest weighted level carrying residual
//! rises every pass until nothing retained is left.

use std::collections::BTreeMap;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::One;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::noise::{NoiseError, NoiseExpr, Primary, Rate};
use crate::series::{EvolutionSeries, FieldSeries, Truncation};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ConstructError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Noise(#[from] NoiseError),
    #[error("residual stopped decreasing at level {level} after {passes} passes")]
    NonConvergence { passes: usize, level: u64 },
}

/// Orders and noise cutoff for the construction.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ConstructionConfig {
    /// Error order in the amplitude, `O(a^P)`.
    pub order_a: u32,
    /// Error order in the noise, `O(σ^Q)`.
    pub order_sigma: u32,
    /// Number of forced modes `K`.
    pub modes: u32,
}

impl ConstructionConfig {
    pub fn new(order_a: u32, order_sigma: u32, modes: u32) -> Result<Self, ConstructError> {
        let c = ConstructionConfig {
            order_a,
            order_sigma,
            modes,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<(), ConstructError> {
        if self.modes == 0 {
            return Err(ConstructError::Config("at least one forced mode is required".into()));
        }
        if self.order_sigma == 0 {
            return Err(ConstructError::Config("the noise order must be at least 1".into()));
        }
        if self.order_a <= self.order_sigma {
            return Err(ConstructError::Config(format!(
                "the amplitude order ({}) must exceed the noise order ({})",
                self.order_a, self.order_sigma
            )));
        }
        Ok(())
    }

    pub fn truncation(&self) -> Truncation {
        Truncation::new(self.order_a, self.order_sigma).expect("validated orders")
    }

    /// Highest wavenumber kept in the field, `K + 2(P - 1)`.
    pub fn max_wavenumber(&self) -> u32 {
        self.modes + 2 * (self.order_a - 1)
    }
}

/// Field and amplitude evolution of a constructed slow manifold.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ReducedModel {
    pub config: ConstructionConfig,
    pub field: FieldSeries,
    pub evolution: EvolutionSeries,
}

impl ReducedModel {
    /// Wraps a hand-built field and evolution, e.g. to inspect residuals.
    pub fn from_parts(config: ConstructionConfig, field: FieldSeries, evolution: EvolutionSeries) -> Self {
        ReducedModel {
            config,
            field,
            evolution,
        }
    }

    /// The starting point of the construction: `v = a sin x`, `da/dt = 0`.
    pub fn linear(config: ConstructionConfig) -> Self {
        let mut field = FieldSeries::new(config.truncation(), config.max_wavenumber());
        field.add(1, 0, 1, &NoiseExpr::one());
        ReducedModel {
            config,
            field,
            evolution: EvolutionSeries::new(config.truncation().with_lookahead()),
        }
    }
}

fn beta_mode(k: u32) -> BigRational {
    let k = BigInt::from(k);
    BigRational::from_integer(&k * &k - 1)
}

/// Galerkin projection of `-u u_x` onto `sin mx` for a field series.
///
/// With `u = Σ u_j sin jx`, products of two modes `j` and `l` contribute
/// `(l/2)·u_j u_l` to `sin(j+l)x` and `±(l/2)·u_j u_l` to `sin|j-l|x`
/// (positive when `j > l`); the result is the negative of that sum. Only
/// monomials retained by `truncation` and modes up to the field's bound are
/// produced; `only_mode` restricts the output to a single wavenumber.
pub fn advection(
    field: &FieldSeries,
    truncation: Truncation,
    only_mode: Option<u32>,
) -> Result<FieldSeries, NoiseError> {
    let w = field.max_wavenumber();
    let mut out = FieldSeries::new(truncation, w);
    let mut groups: BTreeMap<(u32, u32), Vec<(u32, &NoiseExpr)>> = BTreeMap::new();
    for (&(p, q, k), e) in field.iter() {
        groups.entry((p, q)).or_default().push((k, e));
    }
    let wanted = |m: u32| m >= 1 && m <= w && only_mode.map_or(true, |o| o == m);
    for (&(p1, q1), left) in &groups {
        for (&(p2, q2), right) in &groups {
            let (p, q) = (p1 + p2, q1 + q2);
            if !truncation.retains(p, q) {
                continue;
            }
            for &(j, e1) in left {
                for &(l, e2) in right {
                    let sum = j + l;
                    let diff = j.abs_diff(l);
                    let want_sum = wanted(sum);
                    let want_diff = j != l && wanted(diff);
                    if !want_sum && !want_diff {
                        continue;
                    }
                    let half_l = BigRational::new(BigInt::from(l), BigInt::from(2));
                    let prod = e1.try_mul(e2)?;
                    if want_sum {
                        out.add(p, q, sum, &prod.scaled(&-half_l.clone()));
                    }
                    if want_diff {
                        let c = if j > l { -half_l } else { half_l };
                        out.add(p, q, diff, &prod.scaled(&c));
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Floating-point `-u u_x` projected onto the first `a.len()` sine modes;
/// `a[j - 1]` is the coefficient of `sin jx`.
pub fn advection_f64(a: &[f64], out: &mut [f64]) {
    let n = a.len();
    out[..n].iter_mut().for_each(|o| *o = 0.0);
    for j in 1..=n {
        let aj = a[j - 1];
        if aj == 0.0 {
            continue;
        }
        for l in 1..=n {
            let c = 0.5 * l as f64 * aj * a[l - 1];
            if j + l <= n {
                out[j + l - 1] -= c;
            }
            if j > l {
                out[j - l - 1] -= c;
            } else if l > j {
                out[l - j - 1] += c;
            }
        }
    }
}

/// Residual `v_t + v v_x - v_xx - v - σ Σ φ_k sin kx` of a model, where
/// `v_t = ∂v/∂a · da/dt + ∂v/∂t` carries the explicit noise dependence.
/// Coefficients are reported for every monomial retained by the field's
/// truncation and every wavenumber up to its bound.
pub fn residual(model: &ReducedModel) -> Result<FieldSeries, NoiseError> {
    residual_with(model, model.field.truncation(), None)
}

fn residual_with(
    model: &ReducedModel,
    truncation: Truncation,
    only_mode: Option<u32>,
) -> Result<FieldSeries, NoiseError> {
    let field = &model.field;
    let mut r = FieldSeries::new(truncation, field.max_wavenumber());
    let wanted = |k: u32| only_mode.map_or(true, |o| o == k);

    for (&(p, q, k), e) in field.iter() {
        if !wanted(k) {
            continue;
        }
        r.add(p, q, k, &e.scaled(&beta_mode(k)));
        r.add(p, q, k, &e.ddt()?);
    }

    for (&(p, q, k), e) in field.iter() {
        if p == 0 || !wanted(k) {
            continue;
        }
        let dp = BigRational::from_integer(BigInt::from(p));
        for (&(pg, qg), g) in model.evolution.iter() {
            let (pt, qt) = (p - 1 + pg, q + qg);
            if truncation.retains(pt, qt) {
                r.add(pt, qt, k, &e.try_mul(g)?.scaled(&dp));
            }
        }
    }

    let nonlinear = advection(field, truncation, only_mode)?;
    for (&(p, q, k), e) in nonlinear.iter() {
        r.add(p, q, k, &-e);
    }

    for k in 1..=model.config.modes {
        if wanted(k) {
            r.add(0, 1, k, &NoiseExpr::term_unchecked(-BigRational::one(), Primary::atom(k)));
        }
    }
    Ok(r)
}

/// Builds the slow manifold and amplitude evolution.
///
/// The field is exact to `O(a^P + σ^Q)`. The evolution additionally carries
/// the monomials with weighted level just above `P·Q` that the field at that
/// accuracy already determines.
pub fn construct(config: ConstructionConfig) -> Result<ReducedModel, ConstructError> {
    config.validate()?;
    let truncation = config.truncation();
    let mut model = ReducedModel::linear(config);
    let max_passes = (config.order_a * config.order_sigma) as usize + 2;
    let mut last_level = None;
    for pass in 0.. {
        let r = residual_with(&model, truncation, None)?;
        let Some(level) = r.lowest_level() else {
            break;
        };
        if last_level.is_some_and(|prev| level <= prev) || pass >= max_passes {
            return Err(ConstructError::NonConvergence { passes: pass, level });
        }
        last_level = Some(level);
        for (&(p, q, k), e) in r.iter() {
            let rhs = -e;
            if k == 1 {
                let (f, g) = rhs.split_solvability();
                model.field.add(p, q, 1, &f);
                model.evolution.add(p, q, &g);
            } else {
                model.field.add(p, q, k, &rhs.convolve(&Rate::Mode(k)));
            }
        }
    }

    let lookahead = truncation.with_lookahead();
    let r = residual_with(&model, lookahead, Some(1))?;
    for (&(p, q, _), e) in r.iter() {
        if !truncation.retains(p, q) {
            let (_, g) = (-e).split_solvability();
            model.evolution.add(p, q, &g);
        }
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::ratio;

    fn cfg(p: u32, q: u32, k: u32) -> ConstructionConfig {
        ConstructionConfig::new(p, q, k).unwrap()
    }

    #[test]
    fn rejects_bad_orders() {
        assert!(ConstructionConfig::new(2, 2, 3).is_err());
        assert!(ConstructionConfig::new(4, 2, 0).is_err());
    }

    #[test]
    fn residual_of_linear_start() {
        let model = ReducedModel::linear(cfg(4, 2, 3));
        let r = residual(&model).unwrap();
        assert_eq!(r.coefficient(2, 0, 2), NoiseExpr::constant(ratio(1, 2)));
        for k in 1..=3 {
            assert_eq!(
                r.coefficient(0, 1, k),
                NoiseExpr::term(ratio(-1, 1), Primary::atom(k)).unwrap()
            );
        }
        assert_eq!(r.len(), 4);
    }

    #[test]
    fn deterministic_pitchfork() {
        let m = construct(cfg(4, 1, 1)).unwrap();
        assert_eq!(m.evolution.coefficient(3, 0), NoiseExpr::constant(ratio(-1, 12)));
        assert_eq!(m.evolution.len(), 1);
        assert_eq!(m.field.deterministic_coefficient(2, 0, 2), ratio(-1, 6));
        assert_eq!(m.field.deterministic_coefficient(3, 0, 3), ratio(1, 32));
    }

    #[test]
    fn float_advection_matches_single_mode() {
        let a = [1.0, 0.0, 0.0];
        let mut out = [0.0; 3];
        advection_f64(&a, &mut out);
        assert_eq!(out, [0.0, -0.5, 0.0]);
    }
}
