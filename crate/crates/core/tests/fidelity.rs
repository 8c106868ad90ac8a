//! Long SPDE-versus-weak-model comparison. Ignored by default; run with
//! `cargo test -p stocm --test fidelity -- --ignored`.

use stocm::verify::{fidelity, FidelityConfig};

/// The weak model at σ = 0.5 should linger about two symmetric equilibria.
/// Its stationary density is flat-topped and single-peaked instead, so this
/// currently fails; the acceptance suite reports it the same way.
#[test]
#[ignore = "weak-model stationary density at σ = 0.5 is not bimodal"]
fn weak_model_is_bimodal_at_moderate_noise() {
    let f = fidelity(&FidelityConfig::default()).unwrap();
    for c in &f.report.checks {
        assert!(c.pass, "{}: {} (target {})", c.name, c.estimate, c.target);
    }
}
