use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use equikoop::dictionary::{induced_representation_default, DictionarySpec};
use equikoop::dynamics::{self, hamiltonian_energy, snapshots, SystemDef, Trajectory};
use equikoop::equivariant::{assemble_global, GlobalFile, InvariantSetRegistry};
use equikoop::groups::{builtin_group, check_equivariance, AxiomReport, EquivarianceReport, FiniteMatrixGroup, GroupSpec};
use equikoop::io::{load_json, load_trajectory, save_trajectory, to_json_string, write_phase_portrait_csv};
use equikoop::koopman::{fit_pairs, spectrum as spectrum_of_op, EigenRecord, KoopmanApprox, OperatorFile, DEFAULT_LABEL, DEFAULT_RANK_TOL};
use equikoop::scenario::{eigenvalue_spread, Scenario, DEFAULT_SEED};
use equikoop::{Error, Result};
use rand_chacha::rand_core::SeedableRng;
use serde::Serialize;

use crate::config::RunConfig;

const GROUP_MAX_ORDER: usize = 64;
const DEFAULT_STEPS: usize = 1000;

#[derive(Serialize)]
struct RunEcho<'a> {
    command: &'a str,
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    inputs: BTreeMap<&'a str, String>,
    config: &'a RunConfig,
}

#[derive(Serialize)]
struct Output<'a, T: Serialize> {
    #[serde(flatten)]
    body: &'a T,
    run: RunEcho<'a>,
}

fn write_output<T: Serialize>(
    path: &Path,
    body: &T,
    command: &str,
    inputs: BTreeMap<&str, String>,
    config: &RunConfig,
) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let out = Output {
        body,
        run: RunEcho { command, inputs, config },
    };
    fs::write(path, to_json_string(&out)?)?;
    Ok(())
}

fn require_system(cfg: &RunConfig) -> Result<SystemDef> {
    let name = cfg
        .system
        .as_deref()
        .ok_or_else(|| Error::Config("no system given (use --system or \"system\" in the config)".into()))?;
    SystemDef::builtin(name, &cfg.params)
}

fn load_group(cfg: &RunConfig) -> Result<FiniteMatrixGroup> {
    match (&cfg.group, &cfg.system) {
        (Some(path), _) => load_json::<GroupSpec>(path)?.generate(GROUP_MAX_ORDER),
        (None, Some(system)) => builtin_group(system),
        (None, None) => Err(Error::Config("no group given (use --group or --system)".into())),
    }
}

fn load_operator(path: &Path) -> Result<KoopmanApprox> {
    load_json::<OperatorFile>(path)?.into_operator()
}

fn show(path: &Path) -> String {
    path.display().to_string()
}

fn fmt_state(x: &[f64]) -> String {
    x.iter().map(|v| format!("{v:.6}")).collect::<Vec<_>>().join(", ")
}

pub fn simulate(cfg: &RunConfig, phase_portrait: bool) -> Result<ExitCode> {
    let system = require_system(cfg)?;
    let dt = cfg.dt.unwrap_or_else(|| dynamics::default_dt(system.name()));
    let n_steps = cfg.n_steps.unwrap_or(DEFAULT_STEPS);
    let discard = cfg.discard.unwrap_or(0);
    let seed = cfg.seed.unwrap_or(DEFAULT_SEED);
    let starts: Vec<Vec<f64>> = if cfg.x0.is_empty() {
        let scenario = Scenario::builtin_with(system.clone())?;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        (0..cfg.count.unwrap_or(1))
            .map(|_| scenario.sampler.sample(&mut rng).iter().copied().collect())
            .collect()
    } else {
        cfg.x0.clone()
    };
    for x0 in &starts {
        if x0.len() != system.dim() {
            return Err(Error::Config(format!(
                "x0 has {} components but '{}' has dimension {}",
                x0.len(),
                system.name(),
                system.dim()
            )));
        }
    }
    let resolved = RunConfig {
        system: Some(system.name().to_string()),
        params: system.params().clone(),
        dt: Some(dt),
        n_steps: Some(n_steps),
        discard: Some(discard),
        seed: Some(seed),
        x0: starts.clone(),
        output_dir: Some(cfg.output_dir()),
        ..Default::default()
    };
    let dir = cfg.output_dir();
    fs::create_dir_all(&dir)?;

    let mut trajs = Vec::new();
    for (i, x0) in starts.iter().enumerate() {
        let traj = system.simulate(&nalgebra::DVector::from_vec(x0.clone()), dt, n_steps, discard)?;
        let path = dir.join(format!("{}_{i}.csv", system.name()));
        save_trajectory(&traj, &path)?;
        let last = traj.last().expect("non-empty");
        print!("{}: {} rows, final state ({})", show(&path), traj.len(), fmt_state(last.as_slice()));
        if system.name() == dynamics::HAMILTONIAN {
            let first = &traj.states()[0];
            let drift = (hamiltonian_energy(last[0], last[1]) - hamiltonian_energy(first[0], first[1])).abs();
            print!(", energy drift {drift:e}");
        }
        println!();
        trajs.push(traj);
    }
    if phase_portrait {
        let group = builtin_group(system.name())?;
        let mut all: Vec<Trajectory> = trajs.clone();
        for g in group.elements().iter().skip(1) {
            for t in &trajs {
                all.push(t.mapped(g.matrix())?);
            }
        }
        let path = dir.join(format!("{}_phase.csv", system.name()));
        write_phase_portrait_csv(&all, fs::File::create(&path)?)?;
        println!("{}: {} trajectories (with group images)", show(&path), all.len());
    }
    write_output(&dir.join("simulate_config.json"), &(), "simulate", BTreeMap::new(), &resolved)?;
    Ok(ExitCode::SUCCESS)
}

fn print_spectrum(op: &KoopmanApprox) -> Result<()> {
    let spec = spectrum_of_op(op)?;
    for (k, l) in spec.eigenvalues().iter().enumerate() {
        println!("  lambda[{k}] = {:.10} {:+.10}i  |lambda| = {:.10}", l.re, l.im, l.norm());
    }
    Ok(())
}

pub fn fit(cfg: &RunConfig, trajectory: &Path, label: Option<String>, out: Option<PathBuf>) -> Result<ExitCode> {
    let traj = load_trajectory(trajectory)?;
    let spec = cfg.dictionary.clone().unwrap_or(DictionarySpec::Identity);
    let rank_tol = cfg.rank_tol.unwrap_or(DEFAULT_RANK_TOL);
    let label = label.unwrap_or_else(|| DEFAULT_LABEL.to_string());
    let dict = spec.build(traj.dim())?;
    let op = fit_pairs(&dict, &snapshots(&traj)?, rank_tol, &label)?;
    let path = out.unwrap_or_else(|| cfg.output_dir().join("operator.json"));
    let resolved = RunConfig {
        dictionary: Some(spec),
        rank_tol: Some(rank_tol),
        ..Default::default()
    };
    let inputs = BTreeMap::from([("trajectory", show(trajectory))]);
    write_output(&path, &OperatorFile::from_operator(&op)?, "fit", inputs, &resolved)?;
    println!(
        "{}: '{}' K = {}x{}, rank {}, fit residual {:e}",
        show(&path),
        op.set_label(),
        op.size(),
        op.size(),
        op.rank_used(),
        op.fit_residual()
    );
    print_spectrum(&op)?;
    Ok(ExitCode::SUCCESS)
}

pub fn transport(
    cfg: &RunConfig,
    operator: &Path,
    element: &str,
    label: Option<String>,
    out: Option<PathBuf>,
) -> Result<ExitCode> {
    let mut op = load_operator(operator)?;
    if let Some(spec) = &cfg.dictionary {
        let dict = spec.build(op.dictionary().dim())?;
        if dict.size() != op.size() {
            return Err(Error::Config(format!(
                "dictionary has {} observables but the operator is {}x{}",
                dict.size(),
                op.size(),
                op.size()
            )));
        }
        op = KoopmanApprox::from_parts(
            op.matrix().clone(),
            dict,
            op.set_label(),
            op.fit_residual(),
            op.rank_used(),
            op.provenance().clone(),
        )?;
    }
    let group = load_group(cfg)?;
    let g = group
        .by_label(element)
        .map_err(|_| Error::Config(format!("element '{element}' is not in the group")))?;
    let seed = cfg.seed.unwrap_or(DEFAULT_SEED);
    let rep = induced_representation_default(op.dictionary(), g, seed)?;
    let label = label.unwrap_or_else(|| format!("{}_{element}", op.set_label()));
    let moved = equikoop::equivariant::transport_case1(&op, &rep, &label)?;
    let path = out.unwrap_or_else(|| cfg.output_dir().join("transported.json"));
    let resolved = RunConfig {
        seed: Some(seed),
        group: cfg.group.clone(),
        system: cfg.system.clone(),
        ..Default::default()
    };
    let inputs = BTreeMap::from([("operator", show(operator)), ("element", element.to_string())]);
    write_output(&path, &OperatorFile::from_operator(&moved)?, "transport", inputs, &resolved)?;
    println!(
        "{}: '{}' = R K R^-1 with R = R({element}) ({}, residual {:e})",
        show(&path),
        moved.set_label(),
        if rep.is_exact() { "exact" } else { "least squares" },
        rep.residual()
    );
    print_spectrum(&moved)?;
    Ok(ExitCode::SUCCESS)
}

pub fn assemble(cfg: &RunConfig, base: &Path, out: Option<PathBuf>) -> Result<ExitCode> {
    let registry_path = cfg
        .registry
        .as_ref()
        .ok_or_else(|| Error::Config("no registry given (use --registry)".into()))?;
    let registry: InvariantSetRegistry = load_json(registry_path)
        .map_err(|e| Error::Config(format!("registry {}: {e}", show(registry_path))))?;
    let group = load_group(cfg)?;
    registry.check_against(&group).map_err(|e| Error::Config(e.to_string()))?;
    let mut op = load_operator(base)?;
    if op.set_label() == DEFAULT_LABEL {
        op = op.with_label(registry.base());
    }
    let seed = cfg.seed.unwrap_or(DEFAULT_SEED);
    let mut reps = BTreeMap::new();
    for label in registry.labels() {
        if let Some(element) = registry.element_for(label) {
            let g = group.by_label(element)?;
            reps.insert(label.clone(), induced_representation_default(op.dictionary(), g, seed)?);
        }
    }
    let gk = assemble_global(&registry, &op, &reps)?;
    let path = out.unwrap_or_else(|| cfg.output_dir().join("global.json"));
    let resolved = RunConfig {
        seed: Some(seed),
        group: cfg.group.clone(),
        registry: cfg.registry.clone(),
        system: cfg.system.clone(),
        ..Default::default()
    };
    let inputs = BTreeMap::from([("base", show(base))]);
    write_output(&path, &GlobalFile::from_global(&gk)?, "assemble", inputs, &resolved)?;
    println!("{}: {} blocks, total size {}", show(&path), gk.blocks().len(), gk.total_size());
    println!("  {:<12} {:<10} {:<12} provenance", "set", "element", "size");
    for (label, block) in gk.blocks() {
        let element = registry.element_for(label).unwrap_or("-");
        let provenance = serde_json::to_string(block.provenance())?;
        println!("  {label:<12} {element:<10} {:<12} {provenance}", format!("{0}x{0}", block.size()));
    }
    Ok(ExitCode::SUCCESS)
}

pub fn verify(cfg: &RunConfig, out: Option<PathBuf>) -> Result<ExitCode> {
    let system = require_system(cfg)?;
    let mut scenario = Scenario::builtin_with(system.clone())?;
    let defaults = scenario.clone();
    if let Some(dt) = cfg.dt {
        scenario.dt = dt;
    }
    if let Some(n) = cfg.n_steps {
        scenario.n_steps = n;
    }
    if let Some(d) = cfg.discard {
        scenario.discard = d;
    }
    if let Some(spec) = &cfg.dictionary {
        scenario.dictionary = spec.clone();
    }
    if let Some(t) = cfg.rank_tol {
        scenario.rank_tol = t;
    }
    if cfg.group.is_some() {
        scenario.group = load_group(cfg)?;
    }
    cfg.tolerances.apply(&mut scenario.tolerances);
    let seed = cfg.seed.unwrap_or(DEFAULT_SEED);

    let mut notes = Vec::new();
    let selected = cfg.checks.clone();
    let wants_statistical = selected
        .as_ref()
        .is_none_or(|c| c.iter().any(|s| s == equikoop::scenario::CHECK_CONJUGATION_STATISTICAL));
    let changed = !cfg.params.is_empty()
        || seed != DEFAULT_SEED
        || scenario.dt != defaults.dt
        || scenario.n_steps != defaults.n_steps
        || scenario.discard != defaults.discard
        || scenario.dictionary != defaults.dictionary
        || scenario.rank_tol != defaults.rank_tol;
    if changed && wants_statistical && scenario.frozen_spread.is_some() {
        let spread = eigenvalue_spread(&scenario, seed)?;
        scenario.frozen_spread = Some(spread);
        notes.push(format!("statistical spread recalibrated for these settings: {spread:e}"));
    }

    let mut report = scenario.run_checks(selected.as_deref(), seed);
    report.warnings.extend(notes);
    for c in &report.checks {
        let status = match (c.applicable, c.passed) {
            (false, _) => "SKIP",
            (true, true) => "PASS",
            (true, false) => "FAIL",
        };
        let worst = c
            .metrics
            .iter()
            .filter(|(k, _)| !["fraction", "order", "tolerance", "frozen_spread"].iter().any(|s| k.ends_with(s)))
            .map(|(_, v)| *v)
            .fold(None, |acc: Option<f64>, v| Some(acc.map_or(v, |a| a.max(v))));
        match worst {
            Some(w) => println!("{status} {:<24} max metric {w:.3e}  {}", c.name, c.detail),
            None => println!("{status} {:<24} {}", c.name, c.detail),
        }
    }
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    let resolved = RunConfig {
        system: Some(system.name().to_string()),
        params: system.params().clone(),
        dt: Some(scenario.dt),
        n_steps: Some(scenario.n_steps),
        discard: Some(scenario.discard),
        seed: Some(seed),
        dictionary: Some(scenario.dictionary.clone()),
        group: cfg.group.clone(),
        rank_tol: Some(scenario.rank_tol),
        tolerances: cfg.tolerances.clone(),
        checks: selected,
        ..Default::default()
    };
    let path = out.unwrap_or_else(|| cfg.output_dir().join("verify_report.json"));
    write_output(&path, &report, "verify", BTreeMap::new(), &resolved)?;
    let passed = report.checks.iter().filter(|c| c.passed).count();
    println!(
        "verify {}: {passed}/{} checks passed; report {}",
        report.system,
        report.checks.len(),
        show(&path)
    );
    Ok(if report.passed {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}

#[derive(Serialize)]
struct GroupCheck {
    order: usize,
    elements: Vec<String>,
    cayley: Vec<Vec<String>>,
    axioms: AxiomReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    equivariance: Option<EquivarianceReport>,
}

pub fn group_check(cfg: &RunConfig, out: Option<PathBuf>) -> Result<ExitCode> {
    let group = load_group(cfg)?;
    let labels: Vec<String> = group.elements().iter().map(|g| g.label().to_string()).collect();
    let axioms = group.verify_axioms();
    println!("order {}: {}", group.order(), labels.join(", "));
    let cayley: Vec<Vec<String>> = group
        .cayley()
        .iter()
        .map(|row| row.iter().map(|&k| labels[k].clone()).collect())
        .collect();
    for (label, row) in labels.iter().zip(&cayley) {
        println!("  {label:>8} | {}", row.join(" "));
    }
    println!(
        "axioms: closure {}, identity {}, inverses {}, associativity {}",
        axioms.closure, axioms.identity, axioms.inverses, axioms.associativity
    );
    let mut passed = axioms.passed();
    let equivariance = match &cfg.system {
        Some(_) => {
            let system = require_system(cfg)?;
            let scenario = Scenario::builtin_with(system.clone())?;
            let dt = cfg.dt.unwrap_or(scenario.dt);
            let tol = cfg.tolerances.equivariance.unwrap_or(scenario.tolerances.equivariance);
            let samples = scenario.equivariance_samples(cfg.seed.unwrap_or(DEFAULT_SEED), 1000);
            let report = check_equivariance(&system, &group, dt, &samples, tol)?;
            for e in &report.elements {
                println!(
                    "equivariance {:>8}: max defect {:e} {}",
                    e.label,
                    e.max_defect,
                    if e.passed { "ok" } else { "FAILED" }
                );
            }
            passed &= report.passed();
            Some(report)
        }
        None => None,
    };
    if let Some(path) = out {
        let body = GroupCheck {
            order: group.order(),
            elements: labels,
            cayley,
            axioms,
            equivariance,
        };
        write_output(&path, &body, "group check", BTreeMap::new(), cfg)?;
    }
    Ok(if passed { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

#[derive(Serialize)]
struct SpectrumFile {
    set_label: String,
    spectral_radius: f64,
    max_defect: f64,
    eigen: Vec<EigenRecord>,
}

pub fn spectrum(cfg: &RunConfig, operator: &Path, out: Option<PathBuf>) -> Result<ExitCode> {
    let op = load_operator(operator)?;
    let spec = spectrum_of_op(&op)?;
    println!("'{}': spectral radius {:.10}", op.set_label(), spec.spectral_radius());
    print_spectrum(&op)?;
    if let Some(path) = out {
        let body = SpectrumFile {
            set_label: op.set_label().to_string(),
            spectral_radius: spec.spectral_radius(),
            max_defect: spec.max_defect(op.matrix()),
            eigen: spec.records(),
        };
        let inputs = BTreeMap::from([("operator", show(operator))]);
        write_output(&path, &body, "spectrum", inputs, cfg)?;
    }
    Ok(ExitCode::SUCCESS)
}
