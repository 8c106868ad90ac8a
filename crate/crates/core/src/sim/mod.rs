//! Reproducible Monte Carlo integration of Stratonovich SDEs.
//!
//! Every trajectory draws from its own ChaCha8 stream, selected by the
//! trajectory index on a generator seeded from the run seed. Trajectories
//! are integrated in parallel but collected in index order, so an ensemble
//! is bit-identical for a given configuration regardless of thread count.

pub mod stats;
pub mod systems;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use systems::{GalerkinSpde, Hierarchy, PolySde};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    Config(String),
    #[error("trajectory {trajectory} left the bound {bound} at t = {time}")]
    StepInstability { trajectory: usize, time: f64, bound: f64 },
    #[error("invalid window: {0}")]
    Window(String),
    #[error("unsupported system: {0}")]
    Unsupported(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    /// Stochastic Heun predictor-corrector, consistent with Stratonovich calculus.
    #[default]
    Heun,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub dt: f64,
    pub horizon: f64,
    pub trajectories: usize,
    pub seed: u64,
    pub sigma: f64,
    /// Number of retained SPDE modes.
    pub modes: u32,
    #[serde(default)]
    pub scheme: Scheme,
    /// Record every this many steps.
    pub record_every: usize,
    /// Leading components of the initial state; the rest start at zero.
    #[serde(default)]
    pub initial: Vec<f64>,
    pub blowup_bound: f64,
    /// Worker threads; `None` uses the global pool. Excluded from the
    /// configuration hash since it cannot change results.
    #[serde(skip)]
    pub threads: Option<usize>,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            dt: 1e-3,
            horizon: 50.0,
            trajectories: 10_000,
            seed: 0,
            sigma: 1.0,
            modes: 8,
            scheme: Scheme::Heun,
            record_every: 1000,
            initial: Vec::new(),
            blowup_bound: 1e3,
            threads: None,
        }
    }
}

impl SimConfig {
    pub fn steps(&self) -> usize {
        (self.horizon / self.dt).round() as usize
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serialises");
        hex(&Sha256::digest(json))
    }

    pub fn validate(&self, stiffness: f64) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::Config(m));
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad(format!("dt must be positive, got {}", self.dt));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return bad(format!("horizon must be positive, got {}", self.horizon));
        }
        if self.trajectories == 0 {
            return bad("at least one trajectory is required".into());
        }
        if self.record_every == 0 {
            return bad("record_every must be at least 1".into());
        }
        if self.steps() == 0 {
            return bad("horizon is shorter than one step".into());
        }
        if self.dt * stiffness > 0.5 {
            return bad(format!(
                "dt = {} is unstable for decay rate {stiffness}: need dt * rate <= 0.5",
                self.dt
            ));
        }
        if !(self.blowup_bound > 0.0) {
            return bad("blowup_bound must be positive".into());
        }
        if self.threads == Some(0) {
            return bad("threads must be at least 1".into());
        }
        Ok(())
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// A Stratonovich SDE `dx = f(x) dt + G(x) ∘ dW`.
pub trait SdeSystem: Sync {
    fn dim(&self) -> usize;
    fn noise_dim(&self) -> usize;
    fn state_names(&self) -> Vec<String>;
    /// Writes `f(x)` into `out`.
    fn drift(&self, x: &[f64], out: &mut [f64]);
    /// Writes `G(x) dw` into `out`.
    fn diffusion_times(&self, x: &[f64], dw: &[f64], out: &mut [f64]);
    /// Largest linear decay rate, for the step-size guard.
    fn stiffness(&self) -> f64;
    /// Short name recorded in provenance.
    fn label(&self) -> String;

    /// One stochastic Heun step in place. Systems may override this with a
    /// specialised version of the same scheme.
    fn heun_step(&self, x: &mut [f64], dw: &[f64], dt: f64, ws: &mut Workspace) {
        self.drift(x, &mut ws.f0);
        self.diffusion_times(x, dw, &mut ws.g0);
        for i in 0..x.len() {
            ws.pred[i] = x[i] + ws.f0[i] * dt + ws.g0[i];
        }
        self.drift(&ws.pred, &mut ws.f1);
        self.diffusion_times(&ws.pred, dw, &mut ws.g1);
        for i in 0..x.len() {
            x[i] += 0.5 * (ws.f0[i] + ws.f1[i]) * dt + 0.5 * (ws.g0[i] + ws.g1[i]);
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub system: String,
    pub config_hash: String,
    pub seed: u64,
}

/// Recorded trajectories. `paths[i]` holds trajectory `i` as consecutive
/// state vectors, one per recorded time.
#[derive(Clone, Debug, PartialEq)]
pub struct PathEnsemble {
    pub state_names: Vec<String>,
    pub times: Vec<f64>,
    pub paths: Vec<Vec<f64>>,
    pub provenance: Provenance,
}

impl PathEnsemble {
    pub fn dim(&self) -> usize {
        self.state_names.len()
    }

    pub fn trajectories(&self) -> usize {
        self.paths.len()
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.state_names.iter().position(|n| n == name)
    }

    pub fn value(&self, trajectory: usize, record: usize, var: usize) -> f64 {
        self.paths[trajectory][record * self.dim() + var]
    }

    /// Index of the record at time `t`, if `t` lies on the recording grid.
    pub fn record_at(&self, t: f64) -> Option<usize> {
        let spacing = if self.times.len() > 1 { self.times[1] - self.times[0] } else { 1.0 };
        self.times
            .iter()
            .position(|&r| (r - t).abs() <= 1e-9 * spacing.max(1.0) + 1e-12)
    }

    /// CSV with a `trajectory,t,<states…>` header and LF line endings.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("trajectory,t");
        for n in &self.state_names {
            s.push(',');
            s.push_str(n);
        }
        s.push('\n');
        for (i, path) in self.paths.iter().enumerate() {
            for (r, t) in self.times.iter().enumerate() {
                s.push_str(&format!("{i},{t}"));
                for v in &path[r * self.dim()..(r + 1) * self.dim()] {
                    s.push_str(&format!(",{v:e}"));
                }
                s.push('\n');
            }
        }
        s
    }
}

/// Random stream of trajectory `index`.
pub fn trajectory_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

/// Scratch buffers for one trajectory.
pub struct Workspace {
    pub f0: Vec<f64>,
    pub f1: Vec<f64>,
    pub g0: Vec<f64>,
    pub g1: Vec<f64>,
    pub pred: Vec<f64>,
}

fn integrate<S: SdeSystem>(system: &S, config: &SimConfig, index: usize) -> Result<Vec<f64>, SimError> {
    let n = system.dim();
    let steps = config.steps();
    let n_records = steps / config.record_every + 1;
    let mut rng = trajectory_rng(config.seed, index);
    let mut x = vec![0.0; n];
    for (xi, v) in x.iter_mut().zip(&config.initial) {
        *xi = *v;
    }
    let mut ws = Workspace {
        f0: vec![0.0; n],
        f1: vec![0.0; n],
        g0: vec![0.0; n],
        g1: vec![0.0; n],
        pred: vec![0.0; n],
    };
    let mut dw = vec![0.0; system.noise_dim()];
    let sqrt_dt = config.dt.sqrt();
    let dt = config.dt;
    let mut record = Vec::with_capacity(n_records * n);
    record.extend_from_slice(&x);
    for step in 1..=steps {
        for w in dw.iter_mut() {
            let z: f64 = StandardNormal.sample(&mut rng);
            *w = z * sqrt_dt;
        }
        system.heun_step(&mut x, &dw, dt, &mut ws);
        if !x.iter().all(|v| v.abs() <= config.blowup_bound) {
            return Err(SimError::StepInstability {
                trajectory: index,
                time: step as f64 * dt,
                bound: config.blowup_bound,
            });
        }
        if step % config.record_every == 0 {
            record.extend_from_slice(&x);
        }
    }
    Ok(record)
}

/// Integrates `config.trajectories` paths of `system` with the stochastic
/// Heun scheme.
pub fn run_ensemble<S: SdeSystem>(system: &S, config: &SimConfig) -> Result<PathEnsemble, SimError> {
    config.validate(system.stiffness())?;
    if config.initial.len() > system.dim() {
        return Err(SimError::Config(format!(
            "initial state has {} components but the system has {}",
            config.initial.len(),
            system.dim()
        )));
    }
    let run = || -> Result<Vec<Vec<f64>>, SimError> {
        (0..config.trajectories)
            .into_par_iter()
            .map(|i| integrate(system, config, i))
            .collect()
    };
    let paths = match config.threads {
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| SimError::Config(e.to_string()))?
            .install(run)?,
        None => run()?,
    };
    let steps = config.steps();
    let times = (0..=steps / config.record_every)
        .map(|r| (r * config.record_every) as f64 * config.dt)
        .collect();
    Ok(PathEnsemble {
        state_names: system.state_names(),
        times,
        paths,
        provenance: Provenance {
            system: system.label(),
            config_hash: config.hash(),
            seed: config.seed,
        },
    })
}

/// Spectral Galerkin SPDE with `config.modes` modes.
pub fn simulate_spde(config: &SimConfig) -> Result<PathEnsemble, SimError> {
    run_ensemble(&GalerkinSpde::new(config.modes, config.sigma), config)
}

/// Strong model with one auxiliary state per distinct convolution.
pub fn simulate_strong_model(
    g: &crate::series::EvolutionSeries,
    config: &SimConfig,
) -> Result<PathEnsemble, SimError> {
    run_ensemble(&PolySde::strong_model(g, config.sigma)?, config)
}

pub fn simulate_weak_model(w: &crate::weak::WeakModel, config: &SimConfig) -> Result<PathEnsemble, SimError> {
    run_ensemble(&PolySde::weak_model(w, config.sigma), config)
}

/// Canonical hierarchy `dy_m = z_m ∘ dW`, `dz_1 = -β_1 z_1 dt + dŴ`,
/// `dz_m = (-β_m z_m + z_{m-1}) dt`, with `Ŵ = W` when `s = 1`.
pub fn simulate_hierarchy(
    chain: &crate::kernels::ConvolutionChain,
    s: u8,
    config: &SimConfig,
) -> Result<PathEnsemble, SimError> {
    run_ensemble(&Hierarchy::new(chain, s)?, config)
}
