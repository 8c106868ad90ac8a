//! Truncated multivariate series in the amplitude `a` and noise strength `σ`.
//!
//! Orders are weighted: with `a ~ ε` and `σ ~ ε^{P/Q}` the monomial `a^p σ^q`
//! has level `p·Q + q·P` and is retained while that level stays below `P·Q`.

use std::collections::BTreeMap;
use std::fmt;

use num_rational::BigRational;
use num_traits::Zero;

use crate::noise::NoiseExpr;

/// Which monomials `a^p σ^q` a series keeps.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Truncation {
    order_a: u32,
    order_sigma: u32,
    lookahead: u32,
}

impl Truncation {
    /// Error terms `O(a^P + σ^Q)`. Requires `P > Q >= 1`.
    pub fn new(order_a: u32, order_sigma: u32) -> Option<Self> {
        (order_sigma >= 1 && order_a > order_sigma).then_some(Truncation {
            order_a,
            order_sigma,
            lookahead: 0,
        })
    }

    /// The same orders, extended by the levels that the evolution needs to be
    /// exact up to the residual error: `σ^q` with `q < Q` on levels in
    /// `[PQ, PQ + min(Q, P - Q))`.
    pub fn with_lookahead(self) -> Self {
        Truncation {
            lookahead: self.order_sigma.min(self.order_a - self.order_sigma),
            ..self
        }
    }

    pub fn order_a(&self) -> u32 {
        self.order_a
    }

    pub fn order_sigma(&self) -> u32 {
        self.order_sigma
    }

    pub fn lookahead(&self) -> u32 {
        self.lookahead
    }

    pub fn level(&self, p: u32, q: u32) -> u64 {
        p as u64 * self.order_sigma as u64 + q as u64 * self.order_a as u64
    }

    fn limit(&self) -> u64 {
        self.order_a as u64 * self.order_sigma as u64 + self.lookahead as u64
    }

    pub fn retains(&self, p: u32, q: u32) -> bool {
        q < self.order_sigma && self.level(p, q) < self.limit()
    }

    /// All retained monomials, ordered by level and then by `q`.
    pub fn monomials(&self) -> Vec<(u32, u32)> {
        let mut out = Vec::new();
        for q in 0..self.order_sigma {
            let mut p = 0;
            while self.retains(p, q) {
                out.push((p, q));
                p += 1;
            }
        }
        out.sort_by_key(|&(p, q)| (self.level(p, q), q));
        out
    }
}

/// Formats `a^p σ^q` compactly, e.g. `a^2 σ`, `1` for the constant.
pub fn monomial_label(p: u32, q: u32) -> String {
    fn factor(name: &str, n: u32) -> Option<String> {
        match n {
            0 => None,
            1 => Some(name.to_string()),
            n => Some(format!("{name}^{n}")),
        }
    }
    let parts: Vec<String> = [factor("a", p), factor("σ", q)].into_iter().flatten().collect();
    if parts.is_empty() {
        "1".to_string()
    } else {
        parts.join(" ")
    }
}

/// Spatial field `v(a, σ, x, t) = Σ a^p σ^q e_{pqk} sin kx`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FieldSeries {
    truncation: Truncation,
    max_wavenumber: u32,
    coeffs: BTreeMap<(u32, u32, u32), NoiseExpr>,
}

impl FieldSeries {
    pub fn new(truncation: Truncation, max_wavenumber: u32) -> Self {
        FieldSeries {
            truncation,
            max_wavenumber,
            coeffs: BTreeMap::new(),
        }
    }

    pub fn truncation(&self) -> Truncation {
        self.truncation
    }

    pub fn max_wavenumber(&self) -> u32 {
        self.max_wavenumber
    }

    /// Adds `e` to the coefficient of `a^p σ^q sin kx`. Terms outside the
    /// truncation or above the wavenumber bound are discarded.
    pub fn add(&mut self, p: u32, q: u32, k: u32, e: &NoiseExpr) {
        if k == 0 || k > self.max_wavenumber || !self.truncation.retains(p, q) || e.is_zero() {
            return;
        }
        let slot = self.coeffs.entry((p, q, k)).or_default();
        *slot += e;
        if slot.is_zero() {
            self.coeffs.remove(&(p, q, k));
        }
    }

    pub fn get(&self, p: u32, q: u32, k: u32) -> Option<&NoiseExpr> {
        self.coeffs.get(&(p, q, k))
    }

    /// Coefficient, or the zero expression when absent.
    pub fn coefficient(&self, p: u32, q: u32, k: u32) -> NoiseExpr {
        self.get(p, q, k).cloned().unwrap_or_default()
    }

    /// Entries `((p, q, k), e)` in `(p, q, k)` order.
    pub fn iter(&self) -> impl Iterator<Item = (&(u32, u32, u32), &NoiseExpr)> {
        self.coeffs.iter()
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// Lowest weighted level carrying a nonzero coefficient.
    pub fn lowest_level(&self) -> Option<u64> {
        self.coeffs
            .keys()
            .map(|&(p, q, _)| self.truncation.level(p, q))
            .min()
    }

    /// The deterministic parts of every coefficient.
    pub fn deterministic_coefficient(&self, p: u32, q: u32, k: u32) -> BigRational {
        self.get(p, q, k)
            .map(|e| e.coefficient(None))
            .unwrap_or_else(BigRational::zero)
    }
}

impl fmt::Display for FieldSeries {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut keys: Vec<_> = self.coeffs.keys().copied().collect();
        keys.sort_by_key(|&(p, q, k)| (self.truncation.level(p, q), q, k));
        let rows: Vec<[String; 3]> = keys
            .iter()
            .map(|&(p, q, k)| {
                [
                    monomial_label(p, q),
                    format!("sin {k}x"),
                    self.coeffs[&(p, q, k)].to_string(),
                ]
            })
            .collect();
        write_table(f, &["monomial", "mode", "coefficient"], &rows)
    }
}

/// Amplitude evolution `da/dt = Σ a^p σ^q g_{pq}`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EvolutionSeries {
    truncation: Truncation,
    coeffs: BTreeMap<(u32, u32), NoiseExpr>,
}

impl EvolutionSeries {
    pub fn new(truncation: Truncation) -> Self {
        EvolutionSeries {
            truncation,
            coeffs: BTreeMap::new(),
        }
    }

    pub fn truncation(&self) -> Truncation {
        self.truncation
    }

    pub fn add(&mut self, p: u32, q: u32, e: &NoiseExpr) {
        if !self.truncation.retains(p, q) || e.is_zero() {
            return;
        }
        let slot = self.coeffs.entry((p, q)).or_default();
        *slot += e;
        if slot.is_zero() {
            self.coeffs.remove(&(p, q));
        }
    }

    pub fn get(&self, p: u32, q: u32) -> Option<&NoiseExpr> {
        self.coeffs.get(&(p, q))
    }

    pub fn coefficient(&self, p: u32, q: u32) -> NoiseExpr {
        self.get(p, q).cloned().unwrap_or_default()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&(u32, u32), &NoiseExpr)> {
        self.coeffs.iter()
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// Drops every monomial `(p, q)` for which `keep` is false.
    pub fn retain(&mut self, mut keep: impl FnMut(u32, u32) -> bool) {
        self.coeffs.retain(|&(p, q), _| keep(p, q));
    }
}

impl fmt::Display for EvolutionSeries {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut keys: Vec<_> = self.coeffs.keys().copied().collect();
        keys.sort_by_key(|&(p, q)| (self.truncation.level(p, q), q));
        let rows: Vec<[String; 2]> = keys
            .iter()
            .map(|&(p, q)| [monomial_label(p, q), self.coeffs[&(p, q)].to_string()])
            .collect();
        write_table(f, &["monomial", "coefficient"], &rows)
    }
}

pub(crate) fn write_table<const N: usize>(
    f: &mut fmt::Formatter<'_>,
    header: &[&str; N],
    rows: &[[String; N]],
) -> fmt::Result {
    let mut widths = header.map(|h| h.chars().count());
    for row in rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let line = |f: &mut fmt::Formatter<'_>, cells: Vec<&str>| -> fmt::Result {
        let last = cells.len() - 1;
        for (i, cell) in cells.iter().enumerate() {
            if i == last {
                writeln!(f, "{cell}")?;
            } else {
                let pad = widths[i] - cell.chars().count();
                write!(f, "{cell}{}  ", " ".repeat(pad))?;
            }
        }
        Ok(())
    };
    line(f, header.to_vec())?;
    for row in rows {
        line(f, row.iter().map(String::as_str).collect())?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weighted_orders() {
        let t = Truncation::new(4, 2).unwrap();
        assert_eq!(t.monomials(), vec![(0, 0), (1, 0), (2, 0), (0, 1), (3, 0), (1, 1)]);
        let e = t.with_lookahead();
        assert!(e.retains(4, 0));
        assert!(e.retains(2, 1));
        assert!(!e.retains(5, 0));
        assert!(!e.retains(0, 2));
    }

    #[test]
    fn deterministic_truncation() {
        let t = Truncation::new(4, 1).unwrap().with_lookahead();
        assert_eq!(t.monomials(), vec![(0, 0), (1, 0), (2, 0), (3, 0), (4, 0)]);
    }

    #[test]
    fn orders_must_be_ordered() {
        assert!(Truncation::new(2, 2).is_none());
        assert!(Truncation::new(3, 0).is_none());
    }

    #[test]
    fn labels() {
        assert_eq!(monomial_label(0, 0), "1");
        assert_eq!(monomial_label(2, 1), "a^2 σ");
        assert_eq!(monomial_label(0, 2), "σ^2");
    }

    #[test]
    fn out_of_range_entries_are_dropped() {
        let t = Truncation::new(4, 2).unwrap();
        let mut f = FieldSeries::new(t, 5);
        f.add(4, 0, 1, &NoiseExpr::one());
        f.add(1, 0, 6, &NoiseExpr::one());
        assert!(f.is_zero());
        f.add(1, 0, 1, &NoiseExpr::one());
        assert_eq!(f.len(), 1);
    }
}
