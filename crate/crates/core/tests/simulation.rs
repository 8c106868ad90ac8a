//! Deterministic limits and stationary statistics of the simulated systems.

mod support;

use stocm::kernels::{diffusion, g0_precision, ConvolutionChain};
use stocm::rational::to_f64;
use stocm::sim::stats::stationary_moment;
use stocm::sim::{simulate_hierarchy, simulate_spde, simulate_strong_model, simulate_weak_model, PolySde, SimConfig};
use stocm::weak::{cubic_equilibria, equilibria, reduce};
use stocm::{construct, ConstructionConfig};

fn single(dt: f64, horizon: f64, sigma: f64, initial: Vec<f64>) -> SimConfig {
    let steps = (horizon / dt).round() as usize;
    SimConfig {
        dt,
        horizon,
        trajectories: 1,
        sigma,
        record_every: steps,
        initial,
        ..SimConfig::default()
    }
}

fn final_value(e: &stocm::sim::PathEnsemble) -> f64 {
    e.value(0, e.times.len() - 1, 0)
}

#[test]
fn heun_is_second_order_on_the_cubic() {
    let m = construct(ConstructionConfig::new(4, 2, 2).unwrap()).unwrap();
    let w = reduce(&m.evolution).unwrap().drift_only();
    let (a0, t): (f64, f64) = (1.0, 10.0);
    let exact = a0 / (1.0 + a0 * a0 * t / 6.0).sqrt();
    let err = |dt: f64| (final_value(&simulate_weak_model(&w, &single(dt, t, 0.0, vec![a0])).unwrap()) - exact).abs();
    let (e1, e2, e3) = (err(0.4), err(0.2), err(0.1));
    for ratio in [e1 / e2, e2 / e3] {
        assert!((3.6..4.4).contains(&ratio), "error ratio {ratio}");
    }
}

#[test]
fn spde_decays_along_the_slow_manifold() {
    let m = construct(ConstructionConfig::new(6, 3, 8).unwrap()).unwrap();
    let c3 = to_f64(&m.evolution.coefficient(3, 0).coefficient(None));
    let c5 = to_f64(&m.evolution.coefficient(5, 0).coefficient(None));
    let (a0, t): (f64, f64) = (0.4, 40.0);
    let on_manifold: Vec<f64> = (1..=8)
        .map(|k| (0..6).map(|p| to_f64(&m.field.deterministic_coefficient(p, 0, k)) * a0.powi(p as i32)).sum())
        .collect();
    let mut cfg = single(2e-3, t, 0.0, on_manifold);
    cfg.modes = 8;
    let a = final_value(&simulate_spde(&cfg).unwrap());
    let model = support::rk4_scalar(|a| c3 * a.powi(3) + c5 * a.powi(5), a0, t, 1e-2);
    assert!((a - model).abs() < 1e-5 * model, "spde {a} model {model}");
}

#[test]
fn ornstein_uhlenbeck_variance() {
    let chain = ConvolutionChain::from_integers(&[3]).unwrap();
    let cfg = SimConfig {
        horizon: 20.0,
        trajectories: 400,
        seed: 11,
        record_every: 100,
        ..SimConfig::default()
    };
    let e = simulate_hierarchy(&chain, 0, &cfg).unwrap();
    let z = e.column("z1").unwrap();
    let v = stationary_moment(&e, z, z, 10.0 / 3.0).unwrap();
    assert!(v.z_score(1.0 / 6.0).abs() < 3.0, "{v:?}");
}

#[test]
fn chain_stationary_covariance() {
    let chain = ConvolutionChain::from_integers(&[3, 8]).unwrap();
    let two_d = to_f64(diffusion(&chain).get(0, 1)) * 2.0;
    let precision_inverse = g0_precision(&chain).unwrap().inverse().unwrap();
    assert_eq!(to_f64(precision_inverse.get(0, 1)) / 2.0, two_d);
    let cfg = SimConfig {
        horizon: 20.0,
        trajectories: 400,
        seed: 12,
        record_every: 100,
        ..SimConfig::default()
    };
    let e = simulate_hierarchy(&chain, 0, &cfg).unwrap();
    let (z1, z2) = (e.column("z1").unwrap(), e.column("z2").unwrap());
    let c = stationary_moment(&e, z1, z2, 10.0 / 3.0).unwrap();
    assert!(c.z_score(two_d).abs() < 3.0, "{c:?} vs {two_d}");
}

#[test]
fn strong_model_states_and_deterministic_limit() {
    let config = ConstructionConfig::new(6, 3, 3).unwrap();
    let m = construct(config).unwrap();
    let mut g = m.evolution.clone();
    let trunc = config.truncation();
    g.retain(|p, q| trunc.retains(p, q));
    assert_eq!(PolySde::strong_model(&g, 1.0).unwrap().auxiliary_states(), 6);

    let w = reduce(&g).unwrap().drift_only();
    let cfg = single(1e-2, 30.0, 0.0, vec![0.5]);
    let strong = final_value(&simulate_strong_model(&g, &cfg).unwrap());
    let weak = final_value(&simulate_weak_model(&w, &cfg).unwrap());
    assert!((strong - weak).abs() < 1e-12, "{strong} vs {weak}");
}

#[test]
fn drift_only_weak_model_settles_on_its_equilibrium() {
    let m = construct(ConstructionConfig::new(6, 3, 10).unwrap()).unwrap();
    let w = reduce(&m.evolution).unwrap();
    let sigma = 1.0;
    let a = final_value(&simulate_weak_model(&w.drift_only(), &single(1e-2, 1500.0, sigma, vec![0.05])).unwrap());
    let root = equilibria(&w, sigma).into_iter().filter(|r| *r > 0.0).fold(f64::INFINITY, f64::min);
    assert!((a - root).abs() < 1e-6, "{a} vs {root}");
    let cubic = cubic_equilibria(to_f64(&w.stochastic_resonance()), sigma)[1];
    assert!((cubic - 0.4458).abs() < 5e-4, "{cubic}");
}
