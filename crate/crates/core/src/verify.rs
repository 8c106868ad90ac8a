//! Monte Carlo verification suites.
//!
//! Each suite runs a simulation and compares estimates with exact targets,
//! either within a number of standard errors or within a relative tolerance.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::construct::{construct, ConstructError, ConstructionConfig};
use crate::kernels::{diffusion, drift, ConvolutionChain};
use crate::rational::to_f64;
use crate::sim::stats::{increment_statistics, stationary_moment, Estimate, Histogram, Window};
use crate::sim::{simulate_hierarchy, simulate_spde, simulate_weak_model, PathEnsemble, SimConfig, SimError};
use crate::weak::{reduce, WeakError};

#[derive(Debug, Error)]
pub enum VerifyError {
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Construct(#[from] ConstructError),
    #[error(transparent)]
    Weak(#[from] WeakError),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum Tolerance {
    /// `|estimate - target| <= n · standard error`.
    StdErrors(f64),
    /// `|estimate - target| <= r · |target|`.
    Relative(f64),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub estimate: f64,
    pub std_error: f64,
    pub target: f64,
    pub tolerance: Tolerance,
    pub pass: bool,
}

impl Check {
    pub fn new(name: impl Into<String>, estimate: Estimate, target: f64, tolerance: Tolerance) -> Self {
        let err = (estimate.value - target).abs();
        let pass = match tolerance {
            Tolerance::StdErrors(n) => err <= n * estimate.std_error,
            Tolerance::Relative(r) => err <= r * target.abs(),
        };
        Check {
            name: name.into(),
            estimate: estimate.value,
            std_error: estimate.std_error,
            target,
            tolerance,
            pass,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub suite: String,
    pub system: String,
    pub config_hash: String,
    pub seed: u64,
    pub checks: Vec<Check>,
    pub pass: bool,
}

impl Report {
    fn new(suite: &str, ensemble: &PathEnsemble, checks: Vec<Check>) -> Self {
        Report {
            suite: suite.to_string(),
            system: ensemble.provenance.system.clone(),
            config_hash: ensemble.provenance.config_hash.clone(),
            seed: ensemble.provenance.seed,
            pass: checks.iter().all(|c| c.pass),
            checks,
        }
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.pass)
    }
}

/// Increment window of a hierarchy run: from the first recorded time after
/// the `10 / min β` transient to the end of the run.
pub fn increment_window(chain: &ConvolutionChain, config: &SimConfig) -> Window {
    let min_rate = chain.rates_f64().into_iter().fold(f64::INFINITY, f64::min);
    let spacing = config.dt * config.record_every as f64;
    Window {
        start: ((10.0 / min_rate) / spacing).ceil() * spacing,
        end: config.steps() as f64 * config.dt,
    }
}

/// Checks on one hierarchy ensemble, grouped by what they test.
#[derive(Clone, Debug, PartialEq)]
pub struct HierarchyChecks {
    pub drift: Vec<Check>,
    pub covariance: Vec<Check>,
    pub decorrelation: Vec<Check>,
}

/// Compares hierarchy increments with the exact drift `s/2 · e_1`, the
/// covariance rate `L Lᵀ = 2D`, and zero correlation with the driving
/// Wiener increments.
pub fn hierarchy_checks(
    ensemble: &PathEnsemble,
    chain: &ConvolutionChain,
    s: u8,
    window: Window,
) -> Result<HierarchyChecks, SimError> {
    let st = increment_statistics(ensemble, window)?;
    let targets = drift(chain, s);
    let two_d = diffusion(chain).scaled(&crate::rational::int(2));
    let n = chain.len();
    let mut drift_checks: Vec<Check> = (0..n)
        .map(|m| Check::new(format!("drift y{}", m + 1), st.drift[m], to_f64(&targets[m]), Tolerance::StdErrors(3.0)))
        .collect();
    drift_checks.push(Check::new(
        "variance rate y1",
        st.covariance[0][0],
        to_f64(two_d.get(0, 0)),
        Tolerance::Relative(0.05),
    ));
    let mut covariance = Vec::new();
    for k in 0..n {
        for l in k..n {
            let tolerance = if k == l {
                Tolerance::Relative(0.05)
            } else {
                Tolerance::StdErrors(3.0)
            };
            covariance.push(Check::new(
                format!("cov rate y{} y{}", k + 1, l + 1),
                st.covariance[k][l],
                to_f64(two_d.get(k, l)),
                tolerance,
            ));
        }
    }
    let mut decorrelation = Vec::new();
    for m in 0..n {
        decorrelation.push(Check::new(
            format!("corr dW y{}", m + 1),
            st.corr_w[m],
            0.0,
            Tolerance::StdErrors(3.0),
        ));
        if s == 0 {
            decorrelation.push(Check::new(
                format!("corr dW_hat y{}", m + 1),
                st.corr_w_hat[m],
                0.0,
                Tolerance::StdErrors(3.0),
            ));
        }
    }
    Ok(HierarchyChecks {
        drift: drift_checks,
        covariance,
        decorrelation,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Suite {
    Drift,
    Covariance,
    Decorrelation,
    Fidelity,
}

/// Runs a hierarchy suite. The window starts after the transient implied by
/// the chain and ends at the horizon.
pub fn hierarchy_suite(
    suite: Suite,
    chain: &ConvolutionChain,
    s: u8,
    config: &SimConfig,
) -> Result<Report, VerifyError> {
    let ensemble = simulate_hierarchy(chain, s, config)?;
    let window = increment_window(chain, config);
    let checks = hierarchy_checks(&ensemble, chain, s, window)?;
    let (name, list) = match suite {
        Suite::Drift => ("drift", checks.drift),
        Suite::Covariance => ("covariance", checks.covariance),
        Suite::Decorrelation => ("decorrelation", checks.decorrelation),
        Suite::Fidelity => unreachable!("fidelity is not a hierarchy suite"),
    };
    Ok(Report::new(name, &ensemble, list))
}

/// Settings of the SPDE-versus-weak-model comparison.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FidelityConfig {
    pub modes: u32,
    pub sigma: f64,
    pub spde_dt: f64,
    pub weak_dt: f64,
    pub horizon: f64,
    pub transient: f64,
    pub trajectories: usize,
    /// Noise strength of the histogram run.
    pub histogram_sigma: f64,
    pub histogram_horizon: f64,
    pub histogram_trajectories: usize,
    pub seed: u64,
    pub threads: Option<usize>,
}

impl Default for FidelityConfig {
    fn default() -> Self {
        FidelityConfig {
            modes: 8,
            sigma: 0.2,
            spde_dt: 2e-3,
            weak_dt: 1e-2,
            horizon: 200.0,
            transient: 50.0,
            trajectories: 200,
            histogram_sigma: 0.5,
            histogram_horizon: 2000.0,
            histogram_trajectories: 100,
            seed: 0,
            threads: None,
        }
    }
}

/// Results of the fidelity comparison.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Fidelity {
    pub spde_second_moment: Estimate,
    pub weak_second_moment: Estimate,
    pub histogram: Histogram,
    pub modes: Vec<f64>,
    pub report: Report,
}

/// Stationary `E[a²]` of the SPDE's `sin x` amplitude against the weak
/// model built from `construct(6, 3, K)`, then the weak model's stationary
/// histogram at a larger noise, expected to peak near `±0.45σ`.
pub fn fidelity(config: &FidelityConfig) -> Result<Fidelity, VerifyError> {
    let model = construct(ConstructionConfig::new(6, 3, config.modes)?)?;
    let weak = reduce(&model.evolution)?;
    let record = |dt: f64| ((1.0 / dt).round() as usize).max(1);

    let spde_cfg = SimConfig {
        dt: config.spde_dt,
        horizon: config.horizon,
        trajectories: config.trajectories,
        seed: config.seed,
        sigma: config.sigma,
        modes: config.modes,
        record_every: record(config.spde_dt),
        threads: config.threads,
        ..SimConfig::default()
    };
    let spde = simulate_spde(&spde_cfg)?;
    let spde_m2 = stationary_moment(&spde, 0, 0, config.transient)?;

    let weak_cfg = SimConfig {
        dt: config.weak_dt,
        record_every: record(config.weak_dt),
        seed: config.seed.wrapping_add(1),
        ..spde_cfg.clone()
    };
    let weak_run = simulate_weak_model(&weak, &weak_cfg)?;
    let weak_m2 = stationary_moment(&weak_run, 0, 0, config.transient)?;

    let hist_cfg = SimConfig {
        sigma: config.histogram_sigma,
        horizon: config.histogram_horizon,
        trajectories: config.histogram_trajectories,
        seed: config.seed.wrapping_add(2),
        ..weak_cfg.clone()
    };
    let hist_run = simulate_weak_model(&weak, &hist_cfg)?;
    let span = 6.0 * config.histogram_sigma;
    let histogram = Histogram::from_ensemble(&hist_run, 0, config.transient, -span, span, 120);
    let modes = histogram.modes(2, 0.05);

    let mut checks = vec![Check::new(
        "E[a^2] weak vs spde",
        weak_m2,
        spde_m2.value,
        Tolerance::Relative(0.10),
    )];
    let target = 0.45 * config.histogram_sigma;
    let bimodal = modes.len() == 2;
    checks.push(Check {
        name: "histogram mode count".into(),
        estimate: modes.len() as f64,
        std_error: 0.0,
        target: 2.0,
        tolerance: Tolerance::Relative(0.0),
        pass: bimodal,
    });
    for (label, sign) in [("negative", -1.0), ("positive", 1.0)] {
        let found = modes
            .iter()
            .copied()
            .filter(|m| m * sign > 0.0)
            .min_by(|a, b| (a - sign * target).abs().total_cmp(&(b - sign * target).abs()));
        let estimate = found.unwrap_or(0.0);
        checks.push(Check::new(
            format!("{label} mode"),
            Estimate { value: estimate, std_error: 0.0 },
            sign * target,
            Tolerance::Relative(0.15),
        ));
    }
    let report = Report::new("fidelity", &spde, checks);
    Ok(Fidelity {
        spde_second_moment: spde_m2,
        weak_second_moment: weak_m2,
        histogram,
        modes,
        report,
    })
}
