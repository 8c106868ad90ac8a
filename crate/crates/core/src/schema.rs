//! Versioned JSON interchange.
//!
//! Rationals are written as strings `"p/q"` (or `"p"` for integers) so that
//! documents round-trip exactly. Rates are `"H3"` for the mode convolution
//! `H_3` and a bare rational such as `"7/2"` for a custom decay rate.
//! Decode errors carry the JSON path of the offending value.

use std::collections::BTreeMap;

use num_rational::BigRational;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::construct::{ConstructionConfig, ReducedModel};
use crate::noise::{NoiseExpr, Primary, Rate};
use crate::rational::{parse, to_f64, Surd};
use crate::series::{EvolutionSeries, FieldSeries};
use crate::weak::{BareNoise, EffectiveNoise, PsiCoefficient, PsiId, PsiValue, WeakModel};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum SchemaError {
    #[error("invalid JSON at {path}: {message}")]
    Json { path: String, message: String },
    #[error("unsupported schema_version {found} (expected {SCHEMA_VERSION})")]
    Version { found: u32 },
    #[error("expected a {expected} document, found {found:?}")]
    Kind { expected: &'static str, found: String },
    #[error("invalid value at {path}: {message}")]
    Invalid { path: String, message: String },
}

fn invalid(path: impl Into<String>, message: impl ToString) -> SchemaError {
    SchemaError::Invalid {
        path: path.into(),
        message: message.to_string(),
    }
}

/// Deserializes `text`, reporting the path of the first error.
pub fn from_json<T: DeserializeOwned>(text: &str) -> Result<T, SchemaError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| SchemaError::Json {
        path: e.path().to_string(),
        message: e.inner().to_string(),
    })
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("documents serialize");
    s.push('\n');
    s
}

pub fn rational_string(r: &BigRational) -> String {
    r.to_string()
}

fn rational_at(path: &str, s: &str) -> Result<BigRational, SchemaError> {
    parse(s).ok_or_else(|| invalid(path, format!("not a rational: {s:?}")))
}

pub fn rate_string(r: &Rate) -> String {
    match r {
        Rate::Mode(m) => format!("H{m}"),
        Rate::Custom(b) => b.to_string(),
    }
}

fn rate_at(path: &str, s: &str) -> Result<Rate, SchemaError> {
    let rate = match s.strip_prefix('H') {
        Some(m) => {
            let m: u32 = m.parse().map_err(|_| invalid(path, format!("not a rate: {s:?}")))?;
            Rate::mode(m)
        }
        None => Rate::custom(rational_at(path, s)?),
    };
    rate.map_err(|e| invalid(path, e))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FactorDoc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub atom: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub conv: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inner: Option<Vec<FactorDoc>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TermDoc {
    pub coeff: String,
    pub factors: Vec<FactorDoc>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExprDoc {
    pub terms: Vec<TermDoc>,
}

fn factors_of(p: &Primary) -> Vec<FactorDoc> {
    match p {
        Primary::Product(a, b) => vec![factor_of(a), factor_of(b)],
        other => vec![factor_of(other)],
    }
}

fn factor_of(p: &Primary) -> FactorDoc {
    match p {
        Primary::Atom(a) => FactorDoc {
            atom: Some(a.mode()),
            conv: None,
            inner: None,
        },
        Primary::Conv { rate, inner } => FactorDoc {
            atom: None,
            conv: Some(rate_string(rate)),
            inner: Some(factors_of(inner)),
        },
        Primary::Product(..) => unreachable!("products are split by factors_of"),
    }
}

fn primary_from_factors(path: &str, factors: &[FactorDoc]) -> Result<Option<Primary>, SchemaError> {
    let mut out: Option<Primary> = None;
    for (i, f) in factors.iter().enumerate() {
        let p = primary_from_factor(&format!("{path}[{i}]"), f)?;
        out = Some(match out {
            None => p,
            Some(prev) => Primary::product(prev, p).map_err(|e| invalid(path, e))?,
        });
    }
    Ok(out)
}

fn primary_from_factor(path: &str, f: &FactorDoc) -> Result<Primary, SchemaError> {
    match (f.atom, &f.conv, &f.inner) {
        (Some(k), None, None) => {
            if k == 0 {
                return Err(invalid(format!("{path}.atom"), "atom modes start at 1"));
            }
            Ok(Primary::atom(k))
        }
        (None, Some(rate), Some(inner)) => {
            let rate = rate_at(&format!("{path}.conv"), rate)?;
            let inner_path = format!("{path}.inner");
            let inner = primary_from_factors(&inner_path, inner)?
                .ok_or_else(|| invalid(&inner_path, "a convolution needs a noise to act on"))?;
            Ok(Primary::conv_rate(rate, inner))
        }
        _ => Err(invalid(path, "a factor is either {\"atom\"} or {\"conv\", \"inner\"}")),
    }
}

impl ExprDoc {
    pub fn from_expr(e: &NoiseExpr) -> Self {
        ExprDoc {
            terms: e
                .iter()
                .map(|(c, p)| TermDoc {
                    coeff: rational_string(c),
                    factors: p.map(factors_of).unwrap_or_default(),
                })
                .collect(),
        }
    }

    pub fn to_expr(&self, path: &str) -> Result<NoiseExpr, SchemaError> {
        let mut terms = Vec::with_capacity(self.terms.len());
        for (i, t) in self.terms.iter().enumerate() {
            let here = format!("{path}.terms[{i}]");
            let c = rational_at(&format!("{here}.coeff"), &t.coeff)?;
            let p = primary_from_factors(&format!("{here}.factors"), &t.factors)?;
            terms.push((c, p));
        }
        NoiseExpr::canonicalize(terms).map_err(|e| invalid(path, e))
    }
}

fn check_header(version: u32, kind: &str, expected: &'static str) -> Result<(), SchemaError> {
    if version != SCHEMA_VERSION {
        return Err(SchemaError::Version { found: version });
    }
    if kind != expected {
        return Err(SchemaError::Kind {
            expected,
            found: kind.to_string(),
        });
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldEntryDoc {
    pub a: u32,
    pub sigma: u32,
    pub mode: u32,
    pub expr: ExprDoc,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldDoc {
    pub max_wavenumber: u32,
    pub entries: Vec<FieldEntryDoc>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvolutionEntryDoc {
    pub a: u32,
    pub sigma: u32,
    pub expr: ExprDoc,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvolutionDoc {
    pub lookahead: u32,
    pub entries: Vec<EvolutionEntryDoc>,
}

/// A constructed slow manifold and its amplitude evolution.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReducedModelDoc {
    pub schema_version: u32,
    pub kind: String,
    pub config: ConstructionConfig,
    pub field: FieldDoc,
    pub evolution: EvolutionDoc,
}

impl ReducedModelDoc {
    pub const KIND: &'static str = "reduced_model";

    pub fn from_model(m: &ReducedModel) -> Self {
        ReducedModelDoc {
            schema_version: SCHEMA_VERSION,
            kind: Self::KIND.into(),
            config: m.config,
            field: FieldDoc {
                max_wavenumber: m.field.max_wavenumber(),
                entries: m
                    .field
                    .iter()
                    .map(|(&(a, sigma, mode), e)| FieldEntryDoc {
                        a,
                        sigma,
                        mode,
                        expr: ExprDoc::from_expr(e),
                    })
                    .collect(),
            },
            evolution: EvolutionDoc {
                lookahead: m.evolution.truncation().lookahead(),
                entries: m
                    .evolution
                    .iter()
                    .map(|(&(a, sigma), e)| EvolutionEntryDoc {
                        a,
                        sigma,
                        expr: ExprDoc::from_expr(e),
                    })
                    .collect(),
            },
        }
    }

    pub fn to_model(&self) -> Result<ReducedModel, SchemaError> {
        check_header(self.schema_version, &self.kind, Self::KIND)?;
        self.config.validate().map_err(|e| invalid("config", e))?;
        let trunc = self.config.truncation();
        let mut field = FieldSeries::new(trunc, self.field.max_wavenumber);
        for (i, en) in self.field.entries.iter().enumerate() {
            let path = format!("field.entries[{i}]");
            if !trunc.retains(en.a, en.sigma) || en.mode == 0 || en.mode > self.field.max_wavenumber {
                return Err(invalid(path, "entry outside the truncation"));
            }
            field.add(en.a, en.sigma, en.mode, &en.expr.to_expr(&format!("{path}.expr"))?);
        }
        let evo_trunc = if self.evolution.lookahead == 0 {
            trunc
        } else {
            let t = trunc.with_lookahead();
            if t.lookahead() != self.evolution.lookahead {
                return Err(invalid("evolution.lookahead", "does not match the orders"));
            }
            t
        };
        let mut evolution = EvolutionSeries::new(evo_trunc);
        for (i, en) in self.evolution.entries.iter().enumerate() {
            let path = format!("evolution.entries[{i}]");
            if !evo_trunc.retains(en.a, en.sigma) {
                return Err(invalid(path, "entry outside the truncation"));
            }
            evolution.add(en.a, en.sigma, &en.expr.to_expr(&format!("{path}.expr"))?);
        }
        Ok(ReducedModel::from_parts(self.config, field, evolution))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriftDoc {
    pub a: u32,
    pub sigma: u32,
    pub coeff: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BareNoiseDoc {
    pub a: u32,
    pub sigma: u32,
    pub atom: u32,
    pub coeff: String,
}

/// `rational / √radicand`, or a plain float.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "snake_case")]
pub enum PsiValueDoc {
    Exact { rational: String, radicand: String },
    Numeric(f64),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PsiDoc {
    pub a: u32,
    pub sigma: u32,
    pub outer: u32,
    pub inner: u32,
    /// Rates innermost first.
    pub prefix: Vec<String>,
    pub label: String,
    pub value: PsiValueDoc,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseDoc {
    pub a: u32,
    pub sigma: u32,
    pub amplitude: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub amplitude_squared: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExactValueDoc {
    pub exact: String,
    pub decimal: f64,
}

/// A Markovian weak model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeakModelDoc {
    pub schema_version: u32,
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<ConstructionConfig>,
    pub drift: Vec<DriftDoc>,
    pub bare_noise: Vec<BareNoiseDoc>,
    pub psi: Vec<PsiDoc>,
    pub effective_noise: Vec<NoiseDoc>,
    pub stochastic_resonance: ExactValueDoc,
}

impl WeakModelDoc {
    pub const KIND: &'static str = "weak_model";

    pub fn from_model(w: &WeakModel, source: Option<ConstructionConfig>) -> Self {
        let sr = w.stochastic_resonance();
        WeakModelDoc {
            schema_version: SCHEMA_VERSION,
            kind: Self::KIND.into(),
            source,
            drift: w
                .drift
                .iter()
                .map(|(&(a, sigma), c)| DriftDoc {
                    a,
                    sigma,
                    coeff: rational_string(c),
                })
                .collect(),
            bare_noise: w
                .bare
                .iter()
                .map(|b| BareNoiseDoc {
                    a: b.a,
                    sigma: b.sigma,
                    atom: b.atom,
                    coeff: rational_string(&b.coefficient),
                })
                .collect(),
            psi: w
                .psi
                .iter()
                .map(|p| PsiDoc {
                    a: p.a,
                    sigma: p.sigma,
                    outer: p.id.outer,
                    inner: p.id.inner,
                    prefix: p.id.prefix.iter().map(rate_string).collect(),
                    label: p.id.to_string(),
                    value: match &p.value {
                        PsiValue::Exact(s) => PsiValueDoc::Exact {
                            rational: rational_string(&s.rational),
                            radicand: rational_string(&s.radicand),
                        },
                        PsiValue::Numeric(x) => PsiValueDoc::Numeric(*x),
                    },
                })
                .collect(),
            effective_noise: w
                .noise
                .iter()
                .map(|n| NoiseDoc {
                    a: n.a,
                    sigma: n.sigma,
                    amplitude: n.amplitude,
                    amplitude_squared: n.amplitude_squared.as_ref().map(rational_string),
                })
                .collect(),
            stochastic_resonance: ExactValueDoc {
                decimal: to_f64(&sr),
                exact: rational_string(&sr),
            },
        }
    }

    pub fn to_model(&self) -> Result<WeakModel, SchemaError> {
        check_header(self.schema_version, &self.kind, Self::KIND)?;
        let mut drift = BTreeMap::new();
        for (i, d) in self.drift.iter().enumerate() {
            let c = rational_at(&format!("drift[{i}].coeff"), &d.coeff)?;
            if drift.insert((d.a, d.sigma), c).is_some() {
                return Err(invalid(format!("drift[{i}]"), "duplicate monomial"));
            }
        }
        let mut bare = Vec::with_capacity(self.bare_noise.len());
        for (i, b) in self.bare_noise.iter().enumerate() {
            if b.atom == 0 {
                return Err(invalid(format!("bare_noise[{i}].atom"), "atom modes start at 1"));
            }
            bare.push(BareNoise {
                a: b.a,
                sigma: b.sigma,
                atom: b.atom,
                coefficient: rational_at(&format!("bare_noise[{i}].coeff"), &b.coeff)?,
            });
        }
        let mut psi = Vec::with_capacity(self.psi.len());
        for (i, p) in self.psi.iter().enumerate() {
            let path = format!("psi[{i}]");
            let prefix = p
                .prefix
                .iter()
                .enumerate()
                .map(|(j, r)| rate_at(&format!("{path}.prefix[{j}]"), r))
                .collect::<Result<Vec<_>, _>>()?;
            let value = match &p.value {
                PsiValueDoc::Exact { rational, radicand } => {
                    let radicand = rational_at(&format!("{path}.value.exact.radicand"), radicand)?;
                    if radicand <= BigRational::from_integer(0.into()) {
                        return Err(invalid(format!("{path}.value.exact.radicand"), "must be positive"));
                    }
                    PsiValue::Exact(Surd::new(
                        rational_at(&format!("{path}.value.exact.rational"), rational)?,
                        radicand,
                    ))
                }
                PsiValueDoc::Numeric(x) => PsiValue::Numeric(*x),
            };
            psi.push(PsiCoefficient {
                a: p.a,
                sigma: p.sigma,
                id: PsiId {
                    outer: p.outer,
                    inner: p.inner,
                    prefix,
                },
                value,
            });
        }
        let mut noise = Vec::with_capacity(self.effective_noise.len());
        for (i, n) in self.effective_noise.iter().enumerate() {
            if !n.amplitude.is_finite() || n.amplitude < 0.0 {
                return Err(invalid(format!("effective_noise[{i}].amplitude"), "must be finite and non-negative"));
            }
            noise.push(EffectiveNoise {
                a: n.a,
                sigma: n.sigma,
                amplitude: n.amplitude,
                amplitude_squared: n
                    .amplitude_squared
                    .as_ref()
                    .map(|s| rational_at(&format!("effective_noise[{i}].amplitude_squared"), s))
                    .transpose()?,
            });
        }
        Ok(WeakModel {
            drift,
            bare,
            psi,
            noise,
        })
    }
}

/// Parses a reduced-model document.
pub fn reduced_model_from_json(text: &str) -> Result<ReducedModel, SchemaError> {
    from_json::<ReducedModelDoc>(text)?.to_model()
}

/// Parses a weak-model document.
pub fn weak_model_from_json(text: &str) -> Result<WeakModel, SchemaError> {
    from_json::<WeakModelDoc>(text)?.to_model()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::construct::construct;
    use crate::rational::ratio;
    use crate::weak::reduce;

    #[test]
    fn expression_round_trip() {
        let p = Primary::product(Primary::atom(1), Primary::convs(&[2, 3], 3)).unwrap();
        let q = Primary::conv_rate(Rate::custom(ratio(7, 2)).unwrap(), Primary::atom(2));
        let e = &NoiseExpr::term(ratio(1, 6), p).unwrap() + &NoiseExpr::term(ratio(-3, 4), q).unwrap();
        let e = &e + &NoiseExpr::constant(ratio(-1, 12));
        let doc = ExprDoc::from_expr(&e);
        let text = serde_json::to_string(&doc).unwrap();
        let back: ExprDoc = from_json(&text).unwrap();
        assert_eq!(back.to_expr("expr").unwrap(), e);
    }

    #[test]
    fn model_round_trip() {
        let m = construct(ConstructionConfig::new(4, 2, 3).unwrap()).unwrap();
        let text = to_json(&ReducedModelDoc::from_model(&m));
        assert_eq!(reduced_model_from_json(&text).unwrap(), m);
    }

    #[test]
    fn weak_round_trip() {
        let m = construct(ConstructionConfig::new(6, 3, 3).unwrap()).unwrap();
        let w = reduce(&m.evolution).unwrap();
        let text = to_json(&WeakModelDoc::from_model(&w, Some(m.config)));
        assert_eq!(weak_model_from_json(&text).unwrap(), w);
    }

    #[test]
    fn errors_name_the_location() {
        let bad = r#"{"terms":[{"coeff":"1/2","factors":[{"atom":"x"}]}]}"#;
        match from_json::<ExprDoc>(bad) {
            Err(SchemaError::Json { path, .. }) => assert_eq!(path, "terms[0].factors[0].atom"),
            other => panic!("{other:?}"),
        }
        let bad = r#"{"terms":[{"coeff":"1/0x","factors":[]}]}"#;
        let doc: ExprDoc = from_json(bad).unwrap();
        match doc.to_expr("expr") {
            Err(SchemaError::Invalid { path, .. }) => assert_eq!(path, "expr.terms[0].coeff"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn version_is_checked() {
        let m = construct(ConstructionConfig::new(4, 2, 2).unwrap()).unwrap();
        let mut doc = ReducedModelDoc::from_model(&m);
        doc.schema_version = 2;
        assert!(matches!(doc.to_model(), Err(SchemaError::Version { found: 2 })));
    }
}
