//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use equikoop::dictionary::{
    induced_representation_default, DictionarySpec, Dictionary, FeatureRepresentation, DEFAULT_CLOSURE_TOL,
};
use equikoop::dynamics::{hamiltonian_energy, snapshots, SnapshotPairs, SystemDef, BUILTIN_SYSTEMS};
use equikoop::equivariant::{
    assemble_global, commutator_norm, global_predict, local_predict, transport_case1,
};
use equikoop::error::Error;
use equikoop::groups::{
    builtin_group, conjugate_isotropy, generate_group, isotropy_set, GroupElement, DEFAULT_ISOTROPY_TOL,
};
use equikoop::koopman::{eigenvalues, fit_pairs, KoopmanApprox, DEFAULT_RANK_TOL};
use equikoop::linalg::{hausdorff, multiset_distance};
use equikoop::scenario::{
    Scenario, DEFAULT_SEED, FROZEN_SPREAD_HAMILTONIAN, FROZEN_SPREAD_TOGGLE, INDEPENDENT_SEED_OFFSET,
};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn ok<T>(r: equikoop::Result<T>) -> Result<T, String> {
    r.map_err(|e| e.to_string())
}

fn monomial2() -> DictionarySpec {
    DictionarySpec::Monomial {
        max_degree: 2,
        include_constant: true,
    }
}

fn scenarios() -> Vec<Scenario> {
    BUILTIN_SYSTEMS.iter().map(|s| Scenario::builtin(s).unwrap()).collect()
}

fn rep(dict: &Dictionary, g: &GroupElement) -> Result<FeatureRepresentation, String> {
    ok(induced_representation_default(dict, g, DEFAULT_SEED))
}

fn conj(r: &FeatureRepresentation, k: &DMatrix<f64>) -> DMatrix<f64> {
    r.matrix() * k * r.inverse_matrix()
}

fn c1_equivariance() -> Outcome {
    let mut worst = 0.0f64;
    for sc in scenarios() {
        let samples = sc.equivariance_samples(DEFAULT_SEED, 1000);
        for g in sc.group.elements().iter().skip(1) {
            for x in &samples {
                let tx = ok(sc.system.step(x, sc.dt))?;
                let lhs = ok(sc.system.step(&(g.matrix() * x), sc.dt))?;
                let defect = (lhs - g.matrix() * &tx).norm() / (1.0 + tx.norm());
                worst = worst.max(defect);
            }
        }
    }
    ensure(worst <= 1e-12, || format!("max relative defect {worst:e} > 1e-12"))?;
    Ok(format!("max relative defect {worst:e}"))
}

fn c2_exact_tier() -> Outcome {
    let mut detail = Vec::new();
    for sc in scenarios() {
        let start = Instant::now();
        let pairs = ok(sc.base_trajectory(DEFAULT_SEED).and_then(|t| snapshots(&t)))?;
        let mut worst = 0.0f64;
        for spec in [DictionarySpec::Identity, monomial2()] {
            let dict = ok(spec.build(sc.system.dim()))?;
            let k_i = ok(fit_pairs(&dict, &pairs, DEFAULT_RANK_TOL, "i"))?;
            for s in &sc.sets[1..] {
                let g = ok(sc.group.by_label(s.element.as_deref().unwrap()))?;
                let mirrored = ok(pairs.mapped(g.matrix()))?;
                let k_j = ok(fit_pairs(&dict, &mirrored, DEFAULT_RANK_TOL, "j"))?;
                let r = rep(&dict, g)?;
                let err = (k_j.matrix() - conj(&r, k_i.matrix())).norm() / k_j.matrix().norm();
                worst = worst.max(err);
            }
        }
        let elapsed = start.elapsed();
        ensure(worst <= 1e-10, || format!("{}: relative Frobenius {worst:e} > 1e-10", sc.system.name()))?;
        ensure(elapsed < Duration::from_secs(10), || {
            format!("{}: {elapsed:?} exceeds 10 s", sc.system.name())
        })?;
        detail.push(format!("{} {worst:.1e}", sc.system.name()));
    }
    Ok(detail.join(", "))
}

fn base_eigs(sc: &Scenario, seed: u64) -> Result<Vec<num_complex::Complex64>, String> {
    let traj = ok(sc.system.simulate(&sc.base_x0(seed), sc.dt, sc.n_steps, sc.discard))?;
    let k = ok(fit_pairs(&Dictionary::identity(sc.system.dim()), &ok(snapshots(&traj))?, DEFAULT_RANK_TOL, "i"))?;
    ok(eigenvalues(k.matrix()))
}

fn c3_statistical_tier() -> Outcome {
    let mut detail = Vec::new();
    for (name, frozen) in [("toggle_switch", FROZEN_SPREAD_TOGGLE), ("hamiltonian", FROZEN_SPREAD_HAMILTONIAN)] {
        let sc = Scenario::builtin(name).unwrap();
        // Oracle: seed-to-seed spread over 10 reseeded base fits.
        let reference = base_eigs(&sc, DEFAULT_SEED)?;
        let mut spread = 0.0f64;
        for s in 1..=10 {
            spread = spread.max(hausdorff(&reference, &base_eigs(&sc, DEFAULT_SEED + s)?));
        }
        ensure((spread - frozen).abs() <= 1e-9 * frozen, || {
            format!("{name}: oracle spread {spread:e} differs from frozen {frozen:e}")
        })?;
        let tol = 3.0 * frozen;
        let dict = Dictionary::identity(sc.system.dim());
        let k_i = ok(fit_pairs(
            &dict,
            &ok(sc.base_trajectory(DEFAULT_SEED).and_then(|t| snapshots(&t)))?,
            DEFAULT_RANK_TOL,
            "i",
        ))?;
        let x0 = sc.base_x0(DEFAULT_SEED + INDEPENDENT_SEED_OFFSET);
        for s in &sc.sets[1..] {
            let g = ok(sc.group.by_label(s.element.as_deref().unwrap()))?;
            let traj = ok(sc.system.simulate(&(g.matrix() * &x0), sc.dt, sc.n_steps, sc.discard))?;
            ensure(traj.states().iter().all(|x| s.region.contains(x)), || {
                format!("{name}: independent trajectory leaves {}", s.label)
            })?;
            let k_j = ok(fit_pairs(&dict, &ok(snapshots(&traj))?, DEFAULT_RANK_TOL, "j"))?;
            let r = rep(&dict, g)?;
            let d = hausdorff(&ok(eigenvalues(k_j.matrix()))?, &ok(eigenvalues(&conj(&r, k_i.matrix())))?);
            ensure(d <= tol, || format!("{name}/{}: Hausdorff {d:e} > {tol:e}", s.label))?;
            detail.push(format!("{name}/{} {d:.2e} <= {tol:.2e}", s.label));
        }
    }
    Ok(detail.join(", "))
}

fn c4_structure() -> Outcome {
    let sc = Scenario::builtin("toggle_switch").unwrap();
    let right = ok(sc.fit_base(&DictionarySpec::Identity, DEFAULT_SEED))?;
    let r = rep(right.dictionary(), ok(sc.group.by_label("swap"))?)?;
    ensure(r.matrix() == &DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]), || "R is not the swap".into())?;
    let left = ok(transport_case1(&right, &r, "left"))?;
    let (kl, kr) = (left.matrix(), right.matrix());
    ensure(
        kl[(0, 0)] == kr[(1, 1)] && kl[(1, 1)] == kr[(0, 0)] && kl[(0, 1)] == kr[(1, 0)] && kl[(1, 0)] == kr[(0, 1)],
        || format!("toggle permutation structure broken: {kl} vs {kr}"),
    )?;

    let sc = Scenario::builtin("lorenz").unwrap();
    let blue = ok(sc.fit_base(&DictionarySpec::Identity, DEFAULT_SEED))?;
    let r = rep(blue.dictionary(), ok(sc.group.by_label("rot_z"))?)?;
    let magenta = ok(transport_case1(&blue, &r, "magenta"))?;
    let (kb, km) = (blue.matrix(), magenta.matrix());
    for i in 0..3 {
        for j in 0..3 {
            let flips = (i == 2) != (j == 2);
            let expected = if flips { -kb[(i, j)] } else { kb[(i, j)] };
            ensure(km[(i, j)] == expected, || format!("Lorenz sign pattern broken at ({i},{j})"))?;
        }
    }

    // Printed pairs: K_right -> K_left and K_IS-1 -> K_IS-2.
    let swap = FeatureRepresentation::from_matrix("swap", DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0])).unwrap();
    for (from, to) in [
        ([0.6039, 0.0313, -0.4784, 1.0375], [1.0375, -0.4784, 0.0313, 0.6039]),
        ([0.955, 0.486, -0.059, 0.215], [0.215, -0.059, 0.486, 0.955]),
    ] {
        let k = ok(KoopmanApprox::from_parts(
            DMatrix::from_row_slice(2, 2, &from),
            Dictionary::identity(2),
            "printed",
            0.0,
            2,
            equikoop::koopman::Provenance::Fitted,
        ))?;
        let moved = ok(transport_case1(&k, &swap, "image"))?;
        ensure(moved.matrix() == &DMatrix::from_row_slice(2, 2, &to), || {
            format!("printed pair not reproduced: {}", moved.matrix())
        })?;
    }
    Ok("toggle swap permutation, Lorenz sign pattern and printed pairs exact".into())
}

fn c5_global() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut blocks = 0;
    for sc in scenarios() {
        let base = ok(sc.fit_base(&monomial2(), DEFAULT_SEED))?;
        let reps: BTreeMap<String, FeatureRepresentation> = sc.sets[1..]
            .iter()
            .map(|s| {
                let g = sc.group.by_label(s.element.as_deref().unwrap()).unwrap();
                rep(base.dictionary(), g).map(|r| (s.label.clone(), r))
            })
            .collect::<Result<_, _>>()?;
        let gk = ok(assemble_global(&ok(sc.registry())?, &base, &reps))?;
        for (label, block) in gk.blocks() {
            blocks += 1;
            let (off, size) = gk.offset(label).unwrap();
            for _ in 0..10 {
                let x0 = DVector::from_fn(sc.system.dim(), |_, _| rng.random_range(-1.0..1.0));
                let global = ok(global_predict(&gk, label, &x0, 50))?;
                ensure(global.block == ok(local_predict(block, &x0, 50))?, || {
                    format!("{}/{label}: global and local predictions differ", sc.system.name())
                })?;
                for v in &global.stacked {
                    let leak = v.iter().enumerate().any(|(i, c)| (i < off || i >= off + size) && *c != 0.0);
                    ensure(!leak, || format!("{}/{label}: off-block leakage", sc.system.name()))?;
                }
            }
        }
    }
    Ok(format!("{blocks} blocks bit-identical, no leakage"))
}

fn c6_spectrum() -> Outcome {
    let mut worst = 0.0f64;
    let mut count = 0;
    for sc in scenarios() {
        for spec in [DictionarySpec::Identity, monomial2()] {
            let k: KoopmanApprox = ok(sc.fit_base(&spec, DEFAULT_SEED))?;
            let ev = ok(eigenvalues(k.matrix()))?;
            for g in sc.group.elements() {
                let r = match induced_representation_default(k.dictionary(), g, DEFAULT_SEED) {
                    Ok(r) => r,
                    Err(Error::DictionaryNotClosed { .. }) => continue,
                    Err(e) => return Err(e.to_string()),
                };
                let d = multiset_distance(&ev, &ok(eigenvalues(&conj(&r, k.matrix())))?);
                worst = worst.max(d);
                count += 1;
            }
        }
    }
    ensure(worst <= 1e-8, || format!("eigenvalue multiset distance {worst:e} > 1e-8"))?;
    Ok(format!("{count} operator/element pairs, max distance {worst:e}"))
}

fn c7_commutation() -> Outcome {
    let sc = Scenario::builtin("toggle_switch").unwrap();
    let pairs = ok(sc.base_trajectory(DEFAULT_SEED).and_then(|t| snapshots(&t)))?;
    let swap = ok(sc.group.by_label("swap"))?;
    let union: SnapshotPairs = ok(pairs.concat(&ok(pairs.mapped(swap.matrix()))?))?;
    let k = ok(fit_pairs(&Dictionary::identity(2), &union, DEFAULT_RANK_TOL, "union"))?;
    let c = commutator_norm(k.matrix(), swap.matrix());
    ensure(c <= 1e-8, || format!("commutator {c:e} > 1e-8"))?;
    Ok(format!("commutator {c:e}"))
}

fn c8_groups() -> Outcome {
    let g1 = GroupElement::from_rows("gamma1", &[&[0.0, 1.0], &[1.0, 0.0]]).unwrap();
    let g2 = GroupElement::from_rows("gamma2", &[&[-1.0, 0.0], &[0.0, -1.0]]).unwrap();
    let klein = ok(generate_group(2, &[g1, g2], 16))?;
    ensure(klein.order() == 4, || format!("order {}", klein.order()))?;
    let (a, b) = (klein.index_of_label("gamma1").unwrap(), klein.index_of_label("gamma2").unwrap());
    let ab = klein.product(a, b);
    ensure(
        klein.element(ab).matrix() == &DMatrix::from_row_slice(2, 2, &[0.0, -1.0, -1.0, 0.0]),
        || "gamma1 gamma2 is not gamma3".into(),
    )?;
    ensure(
        klein.product(a, a) == 0 && klein.product(b, b) == 0 && klein.product(ab, ab) == 0,
        || "Klein relations fail".into(),
    )?;
    let mut checked = 0;
    for sc in scenarios() {
        ensure(sc.group.verify_axioms().passed(), || format!("{} axioms", sc.system.name()))?;
        let order = sc.group.order();
        for seed in 0..20u64 {
            let mut x0 = sc.sampler.sample(&mut ChaCha8Rng::seed_from_u64(seed));
            if seed % 2 == 1 {
                // Symmetrize onto the fixed subspace of one element.
                let h = sc.group.element(1 + (seed as usize / 2) % (order - 1)).matrix();
                x0 = (&x0 + h * &x0) / 2.0;
            }
            let traj = ok(sc.system.simulate(&x0, sc.dt, 50, 0))?;
            let direct = ok(isotropy_set(&sc.group, &traj, DEFAULT_ISOTROPY_TOL))?;
            for g in sc.group.elements() {
                let via = ok(conjugate_isotropy(&sc.group, &direct, g))?;
                let image = ok(isotropy_set(&sc.group, &ok(traj.mapped(g.matrix()))?, DEFAULT_ISOTROPY_TOL))?;
                ensure(via.member_indices == image.member_indices, || {
                    format!("{} seed {seed} element {}", sc.system.name(), g.label())
                })?;
                checked += 1;
            }
        }
    }
    Ok(format!("Klein relations hold, axioms pass, {checked} isotropy comparisons agree"))
}

fn c9_linear_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut worst = 0.0f64;
    for trial in 0..20 {
        let n = 2 + trial % 5;
        let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        let sys = ok(SystemDef::linear_map(a.clone()))?;
        let mut pairs: Option<SnapshotPairs> = None;
        for _ in 0..n + 2 {
            let x0 = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
            let p = ok(sys.simulate(&x0, 1.0, 3, 0).and_then(|t| snapshots(&t)))?;
            pairs = Some(match pairs {
                None => p,
                Some(acc) => ok(acc.concat(&p))?,
            });
        }
        let k = ok(fit_pairs(&Dictionary::identity(n), &pairs.unwrap(), DEFAULT_RANK_TOL, "lin"))?;
        ensure(k.rank_used() == n, || format!("trial {trial}: data rank {} < {n}", k.rank_used()))?;
        worst = worst.max((k.matrix() - &a).amax());
    }
    ensure(worst <= 1e-10, || format!("max error {worst:e} > 1e-10"))?;
    Ok(format!("max |K - A| {worst:e}"))
}

fn c10_energy() -> Outcome {
    let sys = SystemDef::hamiltonian();
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut worst = 0.0f64;
    let mut starts = 0;
    while starts < 10 {
        let x0 = DVector::from_fn(2, |_, _| rng.random_range(-4.0..4.0));
        if x0.norm_squared() >= 17.0 {
            continue;
        }
        starts += 1;
        let traj = ok(sys.simulate(&x0, 1e-3, 10_000, 0))?;
        let h0 = hamiltonian_energy(x0[0], x0[1]);
        let end = traj.last().unwrap();
        worst = worst.max((hamiltonian_energy(end[0], end[1]) - h0).abs() / (1.0 + h0.abs()));
    }
    ensure(worst <= 1e-6, || format!("relative drift {worst:e} > 1e-6"))?;
    Ok(format!("max relative drift {worst:e}"))
}

fn c11_representations() -> Outcome {
    let mut homo = 0.0f64;
    let mut residual = 0.0f64;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let phi = std::f64::consts::TAU / 6.0;
    let c6 = ok(generate_group(
        2,
        &[GroupElement::from_rows("r", &[&[phi.cos(), -phi.sin()], &[phi.sin(), phi.cos()]]).unwrap()],
        12,
    ))?;
    let mut cases: Vec<(equikoop::groups::FiniteMatrixGroup, Dictionary)> = Vec::new();
    for name in BUILTIN_SYSTEMS {
        let g = ok(builtin_group(name))?;
        cases.push((g.clone(), ok(Dictionary::monomial(g.dim(), 2, true))?));
        cases.push((g.clone(), ok(Dictionary::monomial(g.dim(), 3, true))?));
    }
    cases.push((c6.clone(), ok(Dictionary::monomial(2, 3, true))?));
    for (group, dict) in &cases {
        let reps: Vec<FeatureRepresentation> =
            group.elements().iter().map(|g| rep(dict, g)).collect::<Result<_, _>>()?;
        for a in 0..group.order() {
            for b in 0..group.order() {
                let d = (reps[group.product(a, b)].matrix() - reps[a].matrix() * reps[b].matrix()).amax();
                homo = homo.max(d);
            }
            let g = group.element(a);
            for _ in 0..10 * dict.size() {
                let x = DVector::from_fn(group.dim(), |_, _| rng.random_range(-1.0..1.0));
                let lhs = ok(dict.evaluate(&(g.matrix() * &x)))?;
                let rhs = reps[a].matrix() * ok(dict.evaluate(&x))?;
                residual = residual.max((&lhs - &rhs).amax() / rhs.amax().max(1.0));
            }
        }
    }
    ensure(homo <= 1e-8, || format!("homomorphism defect {homo:e} > 1e-8"))?;
    ensure(residual <= 1e-8, || format!("out-of-sample residual {residual:e} > 1e-8"))?;

    let psi = 0.7f64;
    let rot = GroupElement::from_rows("rot", &[&[psi.cos(), -psi.sin()], &[psi.sin(), psi.cos()]]).unwrap();
    let bad = ok(Dictionary::polynomial(2, vec![vec![1, 0], vec![0, 1], vec![2, 0]]))?;
    match induced_representation_default(&bad, &rot, DEFAULT_SEED) {
        Err(Error::DictionaryNotClosed { residual, tol, .. }) if residual > tol && tol == DEFAULT_CLOSURE_TOL => {}
        other => return Err(format!("expected dictionary-not-closed, got {other:?}")),
    }
    Ok(format!("homomorphism {homo:e}, out-of-sample {residual:e}, non-closed detected"))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome, Duration); 11] = [
        ("1 equivariance", c1_equivariance, Duration::from_secs(5)),
        ("2 exact conjugation tier", c2_exact_tier, Duration::from_secs(30)),
        ("3 statistical conjugation tier", c3_statistical_tier, Duration::from_secs(30)),
        ("4 structural reproduction", c4_structure, Duration::from_secs(1)),
        ("5 global operator", c5_global, Duration::from_secs(1)),
        ("6 spectrum invariance", c6_spectrum, Duration::from_secs(1)),
        ("7 commutation on symmetric data", c7_commutation, Duration::from_secs(5)),
        ("8 group-theory suite", c8_groups, Duration::from_secs(2)),
        ("9 EDMD exactness oracle", c9_linear_oracle, Duration::from_secs(2)),
        ("10 Hamiltonian energy drift", c10_energy, Duration::from_secs(5)),
        ("11 induced-representation suite", c11_representations, Duration::from_secs(5)),
    ];
    let mut failures = 0;
    for (name, run, limit) in criteria {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|_| Err("panicked".into()));
        let elapsed = start.elapsed();
        let outcome = outcome.and_then(|d| {
            if elapsed < limit {
                Ok(d)
            } else {
                Err(format!("{elapsed:?} exceeds {limit:?} ({d})"))
            }
        });
        match outcome {
            Ok(d) => println!("PASS criterion {name} [{elapsed:.2?}]: {d}"),
            Err(d) => {
                failures += 1;
                println!("FAIL criterion {name} [{elapsed:.2?}]: {d}");
            }
        }
    }
    println!("acceptance: {} of 11 criteria passed", 11 - failures);
    if failures > 0 {
        std::process::exit(1);
    }
}
