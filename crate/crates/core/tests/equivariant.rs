use std::collections::BTreeMap;

use equikoop::dictionary::{induced_representation_default, Dictionary, FeatureRepresentation};
use equikoop::dynamics::{snapshots, SystemDef};
use equikoop::equivariant::{
    assemble_global, commutator_norm, global_predict, local_predict, transport_case1, transport_case2,
    verify_commutation, verify_invariant_set_image,
};
use equikoop::error::Error;
use equikoop::groups::{builtin_group, set_stabilizer};
use equikoop::koopman::{fit_pairs, predict, DEFAULT_RANK_TOL};
use equikoop::scenario::{Region, Scenario};
use nalgebra::{dvector, DMatrix, DVector};

fn reps_for(sc: &Scenario, dict: &Dictionary) -> BTreeMap<String, FeatureRepresentation> {
    sc.sets[1..]
        .iter()
        .map(|s| {
            let g = sc.group.by_label(s.element.as_deref().unwrap()).unwrap();
            (s.label.clone(), induced_representation_default(dict, g, 0).unwrap())
        })
        .collect()
}

#[test]
fn case_two_agrees_with_case_one() {
    let sc = Scenario::builtin("toggle_switch").unwrap();
    let monomial = equikoop::dictionary::DictionarySpec::Monomial {
        max_degree: 2,
        include_constant: true,
    };
    let k = sc.fit_base(&monomial, 0).unwrap();
    let g = sc.group.by_label("swap").unwrap();
    let rep = induced_representation_default(k.dictionary(), g, 0).unwrap();
    let case1 = transport_case1(&k, &rep, "left").unwrap();
    let (case2, dict2) = transport_case2(&k, g, "left").unwrap();
    assert_eq!(case2.matrix(), k.matrix());
    assert_eq!(dict2.size(), k.size());
    for x in [dvector![0.3, 2.1], dvector![0.9, 1.7], dvector![0.05, 3.0]] {
        let a = predict(&case1, &x, 20).unwrap();
        let b = predict(&case2, &x, 20).unwrap();
        for (pa, pb) in a.iter().zip(&b) {
            let mapped = rep.inverse_matrix() * pa;
            assert!((mapped - pb).amax() <= 1e-10 * pa.amax().max(1.0));
        }
    }
}

#[test]
fn case_two_one_step_residual_is_the_base_residual() {
    let sc = Scenario::builtin("hamiltonian").unwrap();
    let traj = sc.base_trajectory(2).unwrap();
    let k = fit_pairs(&Dictionary::identity(2), &snapshots(&traj).unwrap(), DEFAULT_RANK_TOL, "IS-1").unwrap();
    let g = sc.group.by_label("gamma1").unwrap();
    let (kj, dict) = transport_case2(&k, g, "IS-2").unwrap();
    let image = snapshots(&traj.mapped(g.matrix()).unwrap()).unwrap();
    let yp = dict.evaluate_columns(image.xp()).unwrap();
    let yf = dict.evaluate_columns(image.xf()).unwrap();
    let residual = (kj.matrix() * &yp - &yf).norm() / yf.norm();
    assert!((residual - k.fit_residual()).abs() <= 1e-12);
}

#[test]
fn transport_round_trip_and_homomorphism() {
    let sc = Scenario::builtin("hamiltonian").unwrap();
    let spec = equikoop::dictionary::DictionarySpec::Monomial {
        max_degree: 2,
        include_constant: true,
    };
    let k = sc.fit_base(&spec, 1).unwrap();
    let dict = k.dictionary().clone();
    let rep = |label: &str| induced_representation_default(&dict, sc.group.by_label(label).unwrap(), 0).unwrap();
    let r1 = rep("gamma1");
    let back = transport_case1(&transport_case1(&k, &r1, "IS-2").unwrap(), &r1.inverse(), "IS-1").unwrap();
    assert!((back.matrix() - k.matrix()).amax() <= 1e-12);

    let g1 = sc.group.index_of_label("gamma1").unwrap();
    let g2 = sc.group.index_of_label("gamma2").unwrap();
    let composed_label = sc.group.element(sc.group.product(g2, g1)).label().to_string();
    let two_steps = transport_case1(&transport_case1(&k, &r1, "a").unwrap(), &rep("gamma2"), "b").unwrap();
    let direct = transport_case1(&k, &rep(&composed_label), "b").unwrap();
    assert!((two_steps.matrix() - direct.matrix()).amax() <= 1e-10);
}

#[test]
fn independent_toggle_fit_is_close_to_transport() {
    let sc = Scenario::builtin("toggle_switch").unwrap();
    for seed in 0..5 {
        for (_, d) in sc.statistical_distances(seed).unwrap() {
            assert!(d <= 0.05, "seed {seed}: {d}");
        }
    }
}

#[test]
fn union_data_commutes_with_the_swap() {
    let sc = Scenario::builtin("toggle_switch").unwrap();
    let k = sc.symmetric_fit(3).unwrap();
    let rep = induced_representation_default(k.dictionary(), sc.group.by_label("swap").unwrap(), 0).unwrap();
    let c = verify_commutation(&k, &rep, &["e", "swap"]).unwrap();
    assert!(c <= 1e-8, "{c}");
}

#[test]
fn single_lorenz_lobe_does_not_commute() {
    let sys = SystemDef::lorenz();
    let traj = sys.simulate(&dvector![1.0, 1.0, 1.0], 0.01, 4000, 1000).unwrap();
    // Longest run of consecutive samples with x > 0.
    let (mut best, mut start) = ((0, 0), 0);
    for (i, x) in traj.states().iter().enumerate() {
        if x[0] <= 0.0 {
            start = i + 1;
        } else if i + 1 - start > best.1 - best.0 {
            best = (start, i + 1);
        }
    }
    let lobe: Vec<DVector<f64>> = traj.states()[best.0..best.1].to_vec();
    assert!(lobe.len() > 50);
    let segment = equikoop::dynamics::Trajectory::new(3, 0.01, lobe.clone()).unwrap();
    let k = fit_pairs(&Dictionary::identity(3), &snapshots(&segment).unwrap(), DEFAULT_RANK_TOL, "blue").unwrap();
    let group = builtin_group("lorenz").unwrap();
    let rot = group.by_label("rot_z").unwrap();
    let rep = induced_representation_default(k.dictionary(), rot, 0).unwrap();
    assert!(commutator_norm(k.matrix(), rep.matrix()) > 0.1);

    let stabilizer: Vec<&str> = set_stabilizer(&group, &lobe, 1e-8)
        .into_iter()
        .map(|i| group.element(i).label())
        .collect();
    assert_eq!(stabilizer, vec!["e"]);
    assert!(matches!(verify_commutation(&k, &rep, &stabilizer), Err(Error::IsotropyRequired { .. })));
}

#[test]
fn mirrored_toggle_samples_stay_mirrored() {
    let sys = SystemDef::toggle_switch();
    let group = builtin_group("toggle_switch").unwrap();
    let swap = group.by_label("swap").unwrap();
    let samples = vec![dvector![2.0, 0.5], dvector![1.2, 1.0], dvector![3.5, 3.4]];
    let left = Region::HalfPlane { sign: -1.0 };
    let report = verify_invariant_set_image(&sys, swap, &samples, 0.01, 1500, &|x| left.contains(x)).unwrap();
    assert_eq!(report.fraction, 1.0);

    let diagonal = vec![dvector![1.7, 1.7]];
    let on_diag = verify_invariant_set_image(&sys, swap, &diagonal, 0.01, 1500, &|x| x[0] == x[1]).unwrap();
    assert_eq!(on_diag.fraction, 1.0);
}

#[test]
fn hamiltonian_global_operator_has_four_conjugate_blocks() {
    let sc = Scenario::builtin("hamiltonian").unwrap();
    let base = sc.fit_base(&sc.dictionary, 0).unwrap().with_label("IS-1");
    let reps = reps_for(&sc, base.dictionary());
    let gk = assemble_global(&sc.registry().unwrap(), &base, &reps).unwrap();
    assert_eq!(gk.blocks().len(), 4);
    assert_eq!(gk.total_size(), 8);
    let r1 = &reps["IS-2"];
    let expected = r1.matrix() * base.matrix() * r1.inverse_matrix();
    assert_eq!(gk.block("IS-2").unwrap().matrix(), &expected);
    // gamma1 is the swap: IS-2 block is the entry-permuted base block.
    let b = base.matrix();
    assert_eq!(
        gk.block("IS-2").unwrap().matrix(),
        &DMatrix::from_row_slice(2, 2, &[b[(1, 1)], b[(1, 0)], b[(0, 1)], b[(0, 0)]])
    );
    let dense = gk.dense();
    for i in 0..8 {
        for j in 0..8 {
            if i / 2 != j / 2 {
                assert_eq!(dense[(i, j)], 0.0);
            }
        }
    }
    for (label, block) in gk.blocks() {
        let x0 = dvector![0.2, 3.1];
        let global = global_predict(&gk, label, &x0, 30).unwrap();
        assert_eq!(global.block, local_predict(block, &x0, 30).unwrap());
    }
}
