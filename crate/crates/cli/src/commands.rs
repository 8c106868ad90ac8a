use std::fs;
use std::path::Path;

use serde_json::{json, Value};
use stocm::kernels::{cholesky, covariance, diffusion, g0_precision, kernels as chain_kernels, ConvolutionChain, RationalMatrix};
use stocm::rational::to_f64;
use stocm::schema::{from_json, reduced_model_from_json, to_json, weak_model_from_json, ReducedModelDoc, WeakModelDoc};
use stocm::sim::{simulate_hierarchy, simulate_spde, simulate_strong_model, simulate_weak_model, SimConfig, SimError};
use stocm::verify::{fidelity, hierarchy_suite, FidelityConfig, Report, Suite, Tolerance};
use stocm::weak::{c0, cpm, cstar, reduce as weak_reduce, WeakModel};
use stocm::{construct, ConstructionConfig, ReducedModel};

use crate::output::{reproducible_args, resolve, sha256_hex, write_with_manifest, Run};
use crate::{
    CliError, CoeffsArgs, DeriveArgs, Format, KernelItem, KernelsArgs, ReduceArgs, SimulateArgs, SuiteArg, System,
    VerifyArgs,
};

fn failure(e: impl ToString) -> CliError {
    CliError::Failure(e.to_string())
}

fn usage(e: impl ToString) -> CliError {
    CliError::Usage(e.to_string())
}

fn sim_error(e: SimError) -> CliError {
    match e {
        SimError::Config(_) => usage(e),
        other => failure(other),
    }
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

fn orders(order_a: u32, order_sigma: u32, modes: u32) -> Result<ConstructionConfig, CliError> {
    ConstructionConfig::new(order_a, order_sigma, modes).map_err(usage)
}

fn opt<T: ToString, E>(r: Result<T, E>) -> Option<String> {
    r.ok().map(|v| v.to_string())
}

fn parse_chain(s: &str) -> Result<ConvolutionChain, CliError> {
    ConvolutionChain::parse(s).map_err(|e| usage(format!("--chain {s:?}: {e}")))
}

pub fn derive(a: DeriveArgs) -> Result<(), CliError> {
    let config = orders(a.order_a, a.order_sigma, a.modes)?;
    let model = construct(config).map_err(failure)?;
    let json = to_json(&ReducedModelDoc::from_model(&model));
    if let Some(path) = resolve(a.out.as_deref(), "reduced_model.json") {
        let run = Run {
            command: "derive",
            args: &reproducible_args(),
            config: json!(config),
            seed: None,
        };
        write_with_manifest(&path, json.as_bytes(), &run)?;
    }
    match a.format {
        Format::Json => print!("{json}"),
        Format::Table => print!("{}", model_table(&model)),
    }
    Ok(())
}

fn model_table(m: &ReducedModel) -> String {
    let c = m.config;
    format!(
        "slow manifold, errors O(a^{} + σ^{}), {} forced modes\n\namplitude evolution da/dt\n{}\nfield v\n{}",
        c.order_a, c.order_sigma, c.modes, m.evolution, m.field
    )
}

fn headline(w: &WeakModel) -> String {
    let sr = w.stochastic_resonance();
    let amp = |p, q| {
        w.amplitude(p, q)
            .map(|n| format!("{:.6}", n.amplitude))
            .unwrap_or_else(|| "-".into())
    };
    format!(
        "stochastic resonance (σ² a)  {:.6}  = {sr}\nnoise amplitude σ²           {}\nnoise amplitude a σ²         {}\n",
        to_f64(&sr),
        amp(0, 2),
        amp(1, 2)
    )
}

fn reduced(model: &ReducedModel) -> Result<WeakModel, CliError> {
    let w = weak_reduce(&model.evolution).map_err(failure)?;
    if w.psi.is_empty() {
        return Err(failure("no quadratic terms: derive the model with --order-sigma 3 or more"));
    }
    Ok(w)
}

pub fn reduce(a: ReduceArgs) -> Result<(), CliError> {
    let text = read(&a.model)?;
    let model = reduced_model_from_json(&text).map_err(|e| failure(format!("{}: {e}", a.model.display())))?;
    let w = reduced(&model)?;
    let json = to_json(&WeakModelDoc::from_model(&w, Some(model.config)));
    if let Some(path) = resolve(a.out.as_deref(), "weak_model.json") {
        let run = Run {
            command: "reduce",
            args: &reproducible_args(),
            config: json!({ "model_sha256": sha256_hex(text.as_bytes()) }),
            seed: None,
        };
        write_with_manifest(&path, json.as_bytes(), &run)?;
    }
    match a.format {
        Format::Json => print!("{json}"),
        Format::Table => print!("{}\n{w}", headline(&w)),
    }
    Ok(())
}

fn matrix_json(m: &RationalMatrix) -> Value {
    let rows = |f: &dyn Fn(usize, usize) -> Value| -> Value {
        (0..m.n_rows())
            .map(|i| (0..m.n_cols()).map(|j| f(i, j)).collect::<Vec<_>>())
            .collect::<Vec<_>>()
            .into()
    };
    json!({
        "exact": rows(&|i, j| m.get(i, j).to_string().into()),
        "decimal": rows(&|i, j| to_f64(m.get(i, j)).into()),
    })
}

fn matrix_table(name: &str, exact: &[Vec<String>], decimal: &[Vec<f64>]) -> String {
    let width = exact.iter().flatten().map(|s| s.chars().count()).max().unwrap_or(0);
    let mut out = format!("{name}\n");
    for (er, dr) in exact.iter().zip(decimal) {
        let e: Vec<String> = er.iter().map(|s| format!("{s:>width$}")).collect();
        let d: Vec<String> = dr.iter().map(|x| format!("{x:>12.8}")).collect();
        out.push_str(&format!("  [{}]   [{}]\n", e.join("  "), d.join("  ")));
    }
    out
}

fn rational_rows(m: &RationalMatrix) -> (Vec<Vec<String>>, Vec<Vec<f64>>) {
    let e = (0..m.n_rows())
        .map(|i| (0..m.n_cols()).map(|j| m.get(i, j).to_string()).collect())
        .collect();
    let d = (0..m.n_rows())
        .map(|i| (0..m.n_cols()).map(|j| to_f64(m.get(i, j))).collect())
        .collect();
    (e, d)
}

pub fn kernels(a: KernelsArgs) -> Result<(), CliError> {
    let chain = parse_chain(&a.chain)?;
    let mut show = a.show.clone();
    show.sort();
    show.dedup();
    let n = chain.len();
    let mut doc = serde_json::Map::new();
    doc.insert("schema_version".into(), stocm::schema::SCHEMA_VERSION.into());
    doc.insert("kind".into(), "kernels".into());
    doc.insert(
        "chain".into(),
        chain.rates().iter().map(|r| r.to_string()).collect::<Vec<_>>().into(),
    );
    let mut table = format!("chain {chain}\n");
    for item in show {
        match item {
            KernelItem::H => {
                let hs: Vec<String> = chain_kernels(&chain).iter().map(|h| h.to_string()).collect();
                table.push_str("kernels\n");
                for (m, h) in hs.iter().enumerate() {
                    table.push_str(&format!("  h{}(t) = {h}\n", m + 1));
                }
                doc.insert("h".into(), hs.into());
            }
            KernelItem::D => {
                let d = diffusion(&chain);
                let (e, x) = rational_rows(&d);
                table.push_str(&matrix_table("D", &e, &x));
                doc.insert("D".into(), matrix_json(&d));
            }
            KernelItem::Cov => {
                let c = covariance(&chain);
                let (e, x) = rational_rows(&c);
                table.push_str(&matrix_table("cov", &e, &x));
                doc.insert("cov".into(), matrix_json(&c));
            }
            KernelItem::L => {
                let l = cholesky(&chain).map_err(failure)?;
                let exact: Vec<Vec<Option<String>>> = (0..n)
                    .map(|i| (0..n).map(|j| l.exact(i, j).map(|s| s.to_string())).collect())
                    .collect();
                let decimal: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| l.get(i, j)).collect()).collect();
                let shown: Vec<Vec<String>> = exact
                    .iter()
                    .zip(&decimal)
                    .map(|(er, dr)| {
                        er.iter()
                            .zip(dr)
                            .map(|(e, d)| e.clone().unwrap_or_else(|| format!("{d:.12}")))
                            .collect()
                    })
                    .collect();
                table.push_str(&matrix_table("L  (L Lᵀ = 2D)", &shown, &decimal));
                doc.insert("L".into(), json!({ "exact": exact, "decimal": decimal }));
            }
            KernelItem::G0 => match g0_precision(&chain) {
                Ok(m) => {
                    let (e, x) = rational_rows(&m);
                    table.push_str(&matrix_table("G0 precision M  (M⁻¹ = 4D)", &e, &x));
                    doc.insert("G0".into(), matrix_json(&m));
                }
                Err(e) => {
                    table.push_str(&format!("G0 precision M: {e}\n"));
                    doc.insert("G0".into(), Value::Null);
                }
            },
        }
    }
    let json = to_json(&Value::Object(doc));
    if let Some(path) = resolve(a.out.as_deref(), "kernels.json") {
        let run = Run {
            command: "kernels",
            args: &reproducible_args(),
            config: json!({ "chain": a.chain }),
            seed: None,
        };
        write_with_manifest(&path, json.as_bytes(), &run)?;
    }
    match a.format {
        Format::Json => print!("{json}"),
        Format::Table => print!("{table}"),
    }
    Ok(())
}

pub fn coeffs(a: CoeffsArgs) -> Result<(), CliError> {
    if a.modes < 2 {
        return Err(usage("--K must be at least 2"));
    }
    let model = construct(orders(6, 3, a.modes)?).map_err(failure)?;
    let w = reduced(&model)?;
    let closed: Vec<Value> = (2..=a.modes)
        .map(|k| {
            json!({
                "k": k,
                "c0": opt(c0(k)),
                "cstar": opt(cstar(k)),
                "cplus": opt(cpm(k, true)),
                "cminus": opt(cpm(k, false)),
            })
        })
        .collect();
    match a.format {
        Format::Json => {
            let amp = |p, q| w.amplitude(p, q).map(|n| n.amplitude);
            let sr = w.stochastic_resonance();
            let doc = json!({
                "schema_version": stocm::schema::SCHEMA_VERSION,
                "kind": "coeffs",
                "modes": a.modes,
                "stochastic_resonance": { "exact": sr.to_string(), "decimal": to_f64(&sr) },
                "amplitude_sigma2": amp(0, 2),
                "amplitude_a_sigma2": amp(1, 2),
                "closed_forms": closed,
            });
            print!("{}", to_json(&doc));
        }
        Format::Table => {
            print!("{}", headline(&w));
            println!("\nclosed forms");
            println!("  {:>3}  {:>14}  {:>14}  {:>14}  {:>14}", "k", "c0", "c*", "c+", "c-");
            for k in 2..=a.modes {
                let cell = |r: Option<String>| r.unwrap_or_else(|| "-".into());
                println!(
                    "  {:>3}  {:>14}  {:>14}  {:>14}  {:>14}",
                    k,
                    cell(opt(c0(k))),
                    cell(opt(cstar(k))),
                    cell(opt(cpm(k, true))),
                    cell(opt(cpm(k, false)))
                );
            }
        }
    }
    Ok(())
}

/// Loads `--model` as either document kind, or derives one from the orders.
fn load_model(a: &SimulateArgs) -> Result<(Option<ReducedModel>, Option<WeakModel>, Option<String>), CliError> {
    let Some(path) = &a.model else {
        let model = construct(orders(a.order_a, a.order_sigma, a.modes)?).map_err(failure)?;
        return Ok((Some(model), None, None));
    };
    let text = read(path)?;
    let digest = Some(sha256_hex(text.as_bytes()));
    let located = |e: stocm::schema::SchemaError| failure(format!("{}: {e}", path.display()));
    let kind: Value = from_json(&text).map_err(located)?;
    match kind.get("kind").and_then(Value::as_str) {
        Some(ReducedModelDoc::KIND) => Ok((Some(reduced_model_from_json(&text).map_err(located)?), None, digest)),
        Some(WeakModelDoc::KIND) => Ok((None, Some(weak_model_from_json(&text).map_err(located)?), digest)),
        other => Err(failure(format!("{}: unknown document kind {other:?}", path.display()))),
    }
}

pub fn simulate(a: SimulateArgs) -> Result<(), CliError> {
    let config = SimConfig {
        dt: a.sim.dt,
        horizon: a.sim.horizon,
        trajectories: a.sim.trajectories,
        seed: a.sim.seed,
        sigma: a.sigma,
        modes: a.modes,
        record_every: a.record_every,
        initial: a.initial.clone(),
        blowup_bound: a.blowup_bound,
        threads: a.sim.threads,
        ..SimConfig::default()
    };
    let mut extra = json!({});
    let ensemble = match a.system {
        System::Spde => simulate_spde(&config),
        System::Hierarchy => {
            let chain = parse_chain(&a.chain)?;
            extra = json!({ "chain": a.chain, "s": a.s });
            simulate_hierarchy(&chain, a.s, &config)
        }
        System::Strong | System::Weak => {
            let (model, weak, digest) = load_model(&a)?;
            extra = match &digest {
                Some(d) => json!({ "model_sha256": d }),
                None => json!({ "order_a": a.order_a, "order_sigma": a.order_sigma }),
            };
            if a.system == System::Strong {
                let model = model.ok_or_else(|| failure("the strong model needs a reduced-model document"))?;
                simulate_strong_model(&model.evolution, &config)
            } else {
                let w = match (weak, model) {
                    (Some(w), _) => w,
                    (None, Some(m)) => reduced(&m)?,
                    (None, None) => unreachable!(),
                };
                simulate_weak_model(&w, &config)
            }
        }
    }
    .map_err(sim_error)?;
    let csv = ensemble.to_csv();
    match resolve(a.out.as_deref(), "paths.csv") {
        Some(path) => {
            let system = format!("{:?}", a.system).to_lowercase();
            let run = Run {
                command: "simulate",
                args: &reproducible_args(),
                config: json!({ "system": system, "sim": config, "system_config": extra }),
                seed: Some(config.seed),
            };
            write_with_manifest(&path, csv.as_bytes(), &run)?;
            eprintln!(
                "{}: {} trajectories, {} records, config {}",
                path.display(),
                ensemble.trajectories(),
                ensemble.times.len(),
                &ensemble.provenance.config_hash[..12]
            );
        }
        None => print!("{csv}"),
    }
    Ok(())
}

fn report_table(r: &Report) -> String {
    let verdict = if r.pass { "PASS" } else { "FAIL" };
    let mut out = format!("suite {}  {}  seed {}  {verdict}\n", r.suite, r.system, r.seed);
    let width = r.checks.iter().map(|c| c.name.chars().count()).max().unwrap_or(0);
    for c in &r.checks {
        let tol = match c.tolerance {
            Tolerance::StdErrors(n) => format!("±{n} SE"),
            Tolerance::Relative(x) => format!("±{}%", x * 100.0),
        };
        out.push_str(&format!(
            "  {:<width$}  {:>12.6} ± {:<10.6}  target {:>10.6}  {:<8}  {}\n",
            c.name,
            c.estimate,
            c.std_error,
            c.target,
            tol,
            if c.pass { "pass" } else { "FAIL" }
        ));
    }
    out
}

pub fn verify(a: VerifyArgs) -> Result<(), CliError> {
    let (report, config) = match a.suite {
        SuiteArg::Fidelity => {
            let defaults = FidelityConfig::default();
            let config = FidelityConfig {
                modes: a.modes,
                sigma: a.sigma,
                spde_dt: a.dt.unwrap_or(defaults.spde_dt),
                weak_dt: a.dt.unwrap_or(defaults.weak_dt),
                horizon: a.horizon.unwrap_or(defaults.horizon),
                trajectories: a.trajectories.unwrap_or(defaults.trajectories),
                histogram_sigma: a.histogram_sigma,
                seed: a.seed,
                threads: a.threads,
                ..defaults
            };
            if config.transient >= config.horizon {
                return Err(usage(format!("--horizon must exceed the transient {}", config.transient)));
            }
            let f = fidelity(&config).map_err(|e| match e {
                stocm::verify::VerifyError::Sim(s) => sim_error(s),
                other => failure(other),
            })?;
            let mut json_config = json!(config);
            json_config.as_object_mut().map(|o| o.remove("threads"));
            (f.report, json_config)
        }
        hierarchy => {
            let suite = match hierarchy {
                SuiteArg::Drift => Suite::Drift,
                SuiteArg::Covariance => Suite::Covariance,
                _ => Suite::Decorrelation,
            };
            let chain = parse_chain(&a.chain)?;
            let dt = a.dt.unwrap_or(1e-3);
            let config = SimConfig {
                dt,
                horizon: a.horizon.unwrap_or(50.0),
                trajectories: a.trajectories.unwrap_or(10_000),
                seed: a.seed,
                record_every: ((1.0 / dt).round() as usize).max(1),
                threads: a.threads,
                ..SimConfig::default()
            };
            let report = hierarchy_suite(suite, &chain, a.s, &config).map_err(|e| match e {
                stocm::verify::VerifyError::Sim(s) => sim_error(s),
                other => failure(other),
            })?;
            (report, json!({ "chain": a.chain, "s": a.s, "sim": config }))
        }
    };
    let json = to_json(&report);
    if let Some(path) = resolve(a.out.as_deref(), "report.json") {
        let run = Run {
            command: "verify",
            args: &reproducible_args(),
            config,
            seed: Some(a.seed),
        };
        write_with_manifest(&path, json.as_bytes(), &run)?;
    }
    match a.format {
        Format::Json => print!("{json}"),
        Format::Table => print!("{}", report_table(&report)),
    }
    if report.pass {
        Ok(())
    } else {
        Err(CliError::ChecksFailed)
    }
}
