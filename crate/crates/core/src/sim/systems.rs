//! Concrete SDE systems.

use std::collections::BTreeMap;

use crate::construct::advection_f64;
use crate::kernels::ConvolutionChain;
use crate::noise::Primary;
use crate::rational::to_f64;
use crate::series::EvolutionSeries;
use crate::weak::WeakModel;

use super::{SdeSystem, SimError, Workspace};

/// Galerkin truncation of the SPDE to modes `sin x … sin Kx`:
/// `da_k = [-(k²-1) a_k + N_k(a)] dt + σ dW_k`.
#[derive(Clone, Debug)]
pub struct GalerkinSpde {
    modes: usize,
    sigma: f64,
    decay: Vec<f64>,
}

impl GalerkinSpde {
    pub fn new(modes: u32, sigma: f64) -> Self {
        let decay = (1..=modes).map(|k| (k * k - 1) as f64).collect();
        GalerkinSpde {
            modes: modes as usize,
            sigma,
            decay,
        }
    }
}

impl SdeSystem for GalerkinSpde {
    fn dim(&self) -> usize {
        self.modes
    }

    fn noise_dim(&self) -> usize {
        self.modes
    }

    fn state_names(&self) -> Vec<String> {
        (1..=self.modes).map(|k| format!("a{k}")).collect()
    }

    fn drift(&self, x: &[f64], out: &mut [f64]) {
        advection_f64(x, out);
        for ((o, xi), d) in out.iter_mut().zip(x).zip(&self.decay) {
            *o -= d * xi;
        }
    }

    fn diffusion_times(&self, _x: &[f64], dw: &[f64], out: &mut [f64]) {
        for (o, w) in out.iter_mut().zip(dw) {
            *o = self.sigma * w;
        }
    }

    fn stiffness(&self) -> f64 {
        self.decay.last().copied().unwrap_or(0.0)
    }

    fn label(&self) -> String {
        format!("spde(K={})", self.modes)
    }
}

#[derive(Clone, Debug, PartialEq)]
struct Monomial {
    coef: f64,
    factors: Vec<(usize, i32)>,
}

impl Monomial {
    #[inline]
    fn eval(&self, x: &[f64]) -> f64 {
        self.factors
            .iter()
            .fold(self.coef, |acc, &(i, p)| acc * if p == 1 { x[i] } else { x[i].powi(p) })
    }
}

#[derive(Clone, Debug, PartialEq)]
struct Term {
    target: usize,
    /// `None` for a drift term, otherwise the Wiener process index.
    noise: Option<usize>,
    monomial: Monomial,
}

/// SDE whose drift and diffusion are sums of monomials in the state.
#[derive(Clone, Debug, PartialEq)]
pub struct PolySde {
    names: Vec<String>,
    noise_dim: usize,
    drift: Vec<Term>,
    noise: Vec<Term>,
    stiffness: f64,
    label: String,
}

struct StrongBuilder {
    aux: BTreeMap<Primary, usize>,
    terms: Vec<Term>,
}

impl StrongBuilder {
    fn index(&self, p: &Primary) -> usize {
        self.aux[p]
    }

    fn push(&mut self, target: usize, coef: f64, mut factors: Vec<(usize, i32)>, primary: Option<&Primary>) -> Result<(), SimError> {
        let noise = match primary {
            None => None,
            Some(Primary::Atom(k)) => Some(k.mode() as usize - 1),
            Some(p @ Primary::Conv { .. }) => {
                factors.push((self.index(p), 1));
                None
            }
            Some(Primary::Product(a, b)) => match (&**a, &**b) {
                (Primary::Atom(k), c) | (c, Primary::Atom(k)) if !c.is_atom() => {
                    factors.push((self.index(c), 1));
                    Some(k.mode() as usize - 1)
                }
                (Primary::Atom(_), Primary::Atom(_)) => {
                    return Err(SimError::Unsupported(format!(
                        "product of two white noises {a}·{b} has no pathwise meaning"
                    )))
                }
                (c1, c2) => {
                    factors.push((self.index(c1), 1));
                    factors.push((self.index(c2), 1));
                    None
                }
            },
        };
        self.terms.push(Term {
            target,
            noise,
            monomial: Monomial { coef, factors },
        });
        Ok(())
    }
}

impl PolySde {
    fn from_terms(names: Vec<String>, noise_dim: usize, terms: Vec<Term>, stiffness: f64, label: String) -> Self {
        let (noise, drift) = terms.into_iter().partition(|t| t.noise.is_some());
        PolySde {
            names,
            noise_dim,
            drift,
            noise,
            stiffness,
            label,
        }
    }

    /// Realises each distinct convolution in `g` as an auxiliary state
    /// `dz = (-β z + inner) dt`, where `inner` is evaluated with white noise
    /// as a Wiener increment. State 0 is the amplitude `a`.
    pub fn strong_model(g: &EvolutionSeries, sigma: f64) -> Result<Self, SimError> {
        let mut aux = BTreeMap::new();
        let mut max_atom = 0;
        for (_, e) in g.iter() {
            for (_, p) in e.iter() {
                if let Some(p) = p {
                    p.visit(&mut |s| match s {
                        Primary::Conv { .. } => {
                            aux.entry(s.clone()).or_insert(0);
                        }
                        Primary::Atom(k) => max_atom = max_atom.max(k.mode() as usize),
                        Primary::Product(..) => {}
                    });
                }
            }
        }
        for (i, v) in aux.values_mut().enumerate() {
            *v = i + 1;
        }
        let mut b = StrongBuilder { aux, terms: Vec::new() };
        let mut stiffness: f64 = 0.0;
        let convs: Vec<(Primary, usize)> = b.aux.iter().map(|(p, &i)| (p.clone(), i)).collect();
        for (p, i) in &convs {
            let Primary::Conv { rate, inner } = p else { unreachable!() };
            let beta = to_f64(&rate.beta());
            stiffness = stiffness.max(beta);
            b.push(*i, -beta, vec![(*i, 1)], None)?;
            b.push(*i, 1.0, Vec::new(), Some(inner))?;
        }
        for (&(p, q), e) in g.iter() {
            let scale = sigma.powi(q as i32);
            for (c, prim) in e.iter() {
                let factors = if p > 0 { vec![(0, p as i32)] } else { Vec::new() };
                b.push(0, to_f64(c) * scale, factors, prim)?;
            }
        }
        let mut names = vec!["a".to_string()];
        names.extend(convs.iter().map(|(p, _)| format!("z[{p}]")));
        Ok(Self::from_terms(
            names,
            max_atom,
            b.terms,
            stiffness,
            format!("strong({} auxiliary states)", convs.len()),
        ))
    }

    /// Single amplitude `a` driven by the retained bare noises and one
    /// independent Wiener process per effective-noise monomial.
    pub fn weak_model(w: &WeakModel, sigma: f64) -> Self {
        let mut terms = Vec::new();
        let factors = |p: u32| if p > 0 { vec![(0, p as i32)] } else { Vec::new() };
        for (&(p, q), c) in &w.drift {
            terms.push(Term {
                target: 0,
                noise: None,
                monomial: Monomial {
                    coef: to_f64(c) * sigma.powi(q as i32),
                    factors: factors(p),
                },
            });
        }
        let bare_dim = w.bare.iter().map(|b| b.atom as usize).max().unwrap_or(0);
        for b in &w.bare {
            terms.push(Term {
                target: 0,
                noise: Some(b.atom as usize - 1),
                monomial: Monomial {
                    coef: to_f64(&b.coefficient) * sigma.powi(b.sigma as i32),
                    factors: factors(b.a),
                },
            });
        }
        for (i, n) in w.noise.iter().enumerate() {
            terms.push(Term {
                target: 0,
                noise: Some(bare_dim + i),
                monomial: Monomial {
                    coef: n.amplitude * sigma.powi(n.sigma as i32),
                    factors: factors(n.a),
                },
            });
        }
        Self::from_terms(
            vec!["a".to_string()],
            bare_dim + w.noise.len(),
            terms,
            0.0,
            "weak".to_string(),
        )
    }

    /// Number of auxiliary (non-amplitude) states.
    pub fn auxiliary_states(&self) -> usize {
        self.names.len() - 1
    }
}

impl SdeSystem for PolySde {
    fn dim(&self) -> usize {
        self.names.len()
    }

    fn noise_dim(&self) -> usize {
        self.noise_dim
    }

    fn state_names(&self) -> Vec<String> {
        self.names.clone()
    }

    fn drift(&self, x: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        for t in &self.drift {
            out[t.target] += t.monomial.eval(x);
        }
    }

    fn diffusion_times(&self, x: &[f64], dw: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        for t in &self.noise {
            out[t.target] += t.monomial.eval(x) * dw[t.noise.expect("noise term")];
        }
    }

    fn stiffness(&self) -> f64 {
        self.stiffness
    }

    fn label(&self) -> String {
        self.label.clone()
    }
}

/// Canonical hierarchy of a convolution chain. States are
/// `y_1 … y_n, z_1 … z_n, W, W_hat`: `dy_m = z_m ∘ dW`,
/// `dz_1 = -β_1 z_1 dt + dŴ`, `dz_m = (-β_m z_m + z_{m-1}) dt`. With
/// `s = 1` the two Wiener processes coincide.
#[derive(Clone, Debug)]
pub struct Hierarchy {
    rates: Vec<f64>,
    shared: bool,
}

impl Hierarchy {
    pub fn new(chain: &ConvolutionChain, s: u8) -> Result<Self, SimError> {
        if s > 1 {
            return Err(SimError::Config(format!("s must be 0 or 1, got {s}")));
        }
        Ok(Hierarchy {
            rates: chain.rates_f64(),
            shared: s == 1,
        })
    }

    fn n(&self) -> usize {
        self.rates.len()
    }
}

impl SdeSystem for Hierarchy {
    fn dim(&self) -> usize {
        2 * self.n() + 2
    }

    fn noise_dim(&self) -> usize {
        if self.shared {
            1
        } else {
            2
        }
    }

    fn state_names(&self) -> Vec<String> {
        let n = self.n();
        let mut names: Vec<String> = (1..=n).map(|m| format!("y{m}")).collect();
        names.extend((1..=n).map(|m| format!("z{m}")));
        names.push("W".into());
        names.push("W_hat".into());
        names
    }

    #[inline]
    fn drift(&self, x: &[f64], out: &mut [f64]) {
        let n = self.n();
        out[..n].iter_mut().for_each(|o| *o = 0.0);
        let z = &x[n..2 * n];
        out[n] = -self.rates[0] * z[0];
        for m in 1..n {
            out[n + m] = -self.rates[m] * z[m] + z[m - 1];
        }
        out[2 * n] = 0.0;
        out[2 * n + 1] = 0.0;
    }

    #[inline]
    fn diffusion_times(&self, x: &[f64], dw: &[f64], out: &mut [f64]) {
        let n = self.n();
        let w = dw[0];
        let w_hat = if self.shared { dw[0] } else { dw[1] };
        for m in 0..n {
            out[m] = x[n + m] * w;
            out[n + m] = 0.0;
        }
        out[n] = w_hat;
        out[2 * n] = w;
        out[2 * n + 1] = w_hat;
    }

    fn stiffness(&self) -> f64 {
        self.rates.iter().copied().fold(0.0, f64::max)
    }

    fn label(&self) -> String {
        let r: Vec<String> = self.rates.iter().map(|b| b.to_string()).collect();
        format!("hierarchy(({}), s={})", r.join(","), self.shared as u8)
    }

    fn heun_step(&self, x: &mut [f64], dw: &[f64], dt: f64, ws: &mut Workspace) {
        let n = self.n();
        let w = dw[0];
        let w_hat = if self.shared { dw[0] } else { dw[1] };
        let (y, rest) = x.split_at_mut(n);
        let (z, tail) = rest.split_at_mut(n);
        let f0 = &mut ws.f0[..n];
        let pred = &mut ws.pred[..n];
        for m in 0..n {
            let inflow = if m == 0 { 0.0 } else { z[m - 1] };
            f0[m] = -self.rates[m] * z[m] + inflow;
            pred[m] = z[m] + f0[m] * dt + if m == 0 { w_hat } else { 0.0 };
        }
        for m in 0..n {
            let inflow = if m == 0 { 0.0 } else { pred[m - 1] };
            let f1 = -self.rates[m] * pred[m] + inflow;
            y[m] += 0.5 * (z[m] + pred[m]) * w;
            z[m] += 0.5 * (f0[m] + f1) * dt + if m == 0 { w_hat } else { 0.0 };
        }
        tail[0] += w;
        tail[1] += w_hat;
    }
}
