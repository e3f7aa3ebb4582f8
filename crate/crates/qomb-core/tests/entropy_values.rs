//! End-to-end min-entropy values for the shipped measurement scenarios,
//! checked against independently computed references, plus LP/SDP
//! cross-validation on random classical instances.

use qomb_core::combs::ClassicalComb;
use qomb_core::entropy::{
    extract_strategy, min_entropy, min_entropy_classical, CombSdpProblem, SolveStatus,
    SolverConfig,
};
use qomb_core::gflow::{enumerate_gflows, four_qubit_graph, FOUR_QUBIT_ENUM_TO_CATALOGUE};
use qomb_core::mbqc::{build_d_calibr, build_d_gflow, build_d_mp};
use qomb_core::operators::SpaceLayout;
use qomb_core::{ClassicalQuantumComb, Comb, SubsystemLabel, TimeStepStructure};

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

#[test]
fn gflow_discovery_value_certificate_and_strategy() {
    let g = four_qubit_graph();
    let found = enumerate_gflows(&g, None).unwrap();
    let refs: Vec<_> = found.iter().collect();
    let cq = build_d_gflow(&g, &refs, &vec![1.0 / 15.0; 15]).unwrap();
    let cfg = SolverConfig::default();
    let r = min_entropy(&cq, &cfg).unwrap();
    assert_eq!(r.status, SolveStatus::Optimal);
    assert!(
        (r.p_guess - 0.3732051).abs() < 1e-6,
        "p_guess {}",
        r.p_guess
    );
    assert!((r.h_min - 1.421959).abs() < 1e-5);
    assert_eq!(r.distinct_blocks, 6);
    assert!(r.primal_residual < 1e-9);
    assert!(r.duality_gap < 1e-8);
    let cert = r.certificate.validate(1e-6).unwrap();
    assert!(cert.accepted, "certificate {cert:?}");
    let s = extract_strategy(&cq, &r).unwrap();
    assert!(
        (s.achieved - r.p_guess).abs() < 1e-5,
        "achieved {} vs p {}",
        s.achieved,
        r.p_guess
    );
    assert!(s.report.accepted, "strategy {:?}", s.report);
}

#[test]
fn restricted_xy_family_hides_the_label_completely() {
    let g = four_qubit_graph();
    let found = enumerate_gflows(&g, None).unwrap();
    let by = |want: usize| {
        let pos = FOUR_QUBIT_ENUM_TO_CATALOGUE
            .iter()
            .position(|&l| l == want)
            .unwrap();
        &found[pos]
    };
    let xy = [by(1), by(2), by(4), by(5)];
    let cq = build_d_gflow(&g, &xy, &[0.25; 4]).unwrap();
    let r = min_entropy(&cq, &SolverConfig::default()).unwrap();
    assert!((r.p_guess - 0.25).abs() < 1e-7, "p_guess {}", r.p_guess);
    assert_eq!(r.distinct_blocks, 1);
    assert!((r.h_min - 2.0).abs() < 1e-6);
}

#[test]
fn plane_mixture_is_perfectly_distinguishable() {
    let g = four_qubit_graph();
    let cq = build_d_mp(&g).unwrap();
    let r = min_entropy(&cq, &SolverConfig::default()).unwrap();
    assert!((r.p_guess - 1.0).abs() < 1e-6, "p_guess {}", r.p_guess);
    assert!(r.h_min.abs() < 1e-5);
}

#[test]
fn calibration_reference_points() {
    let cfg = SolverConfig::default();
    for (n, want) in [(2usize, 1.0f64), (3, 0.991582), (4, 0.933013)] {
        let cq = build_d_calibr(n).unwrap();
        let r = min_entropy(&cq, &cfg).unwrap();
        assert!(
            (r.p_guess - want).abs() < 1e-5,
            "angle count {n}: p_guess {} want {want}",
            r.p_guess
        );
    }
}

fn random_classical_instance(seed: u64) -> (Vec<f64>, Vec<ClassicalComb>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let layout = SpaceLayout::of(&[("A", 2), ("B", 2), ("C", 2)]);
    let structure = TimeStepStructure::of(&[(&[], &["A"]), (&["B"], &["C"])]);
    let nx = 3usize;
    let mut simplex = |k: usize| {
        let mut v: Vec<f64> = (0..k).map(|_| rng.random::<f64>() + 1e-3).collect();
        let s: f64 = v.iter().sum();
        v.iter_mut().for_each(|x| *x /= s);
        v
    };
    let mut blocks = Vec::new();
    for _ in 0..nx {
        let pa = simplex(2);
        let mut diag = vec![0.0f64; 8];
        for a in 0..2 {
            for b in 0..2 {
                let pc = simplex(2);
                for (cdig, pcv) in pc.iter().enumerate() {
                    diag[a * 4 + b * 2 + cdig] = pa[a] * pcv;
                }
            }
        }
        blocks.push(ClassicalComb::new(layout.clone(), diag, structure.clone()).unwrap());
    }
    let prior = simplex(nx);
    (prior, blocks)
}

fn embed_as_cq(prior: &[f64], blocks: &[ClassicalComb]) -> ClassicalQuantumComb {
    let combs: Vec<Comb> = blocks
        .iter()
        .map(|b| {
            Comb::new(
                b.to_operator(4096).unwrap(),
                b.structure().clone(),
                true,
            )
            .unwrap()
        })
        .collect();
    ClassicalQuantumComb::new(
        prior.to_vec(),
        combs,
        SubsystemLabel::new("X", blocks.len()),
    )
    .unwrap()
}

#[test]
fn lp_and_sdp_agree_on_random_classical_instances() {
    for seed in 0..10u64 {
        let (prior, blocks) = random_classical_instance(seed);
        let lp = min_entropy_classical(&prior, &blocks, &SolverConfig::default()).unwrap();
        let cq = embed_as_cq(&prior, &blocks);
        let sdp = min_entropy(&cq, &SolverConfig::default()).unwrap();
        assert!(
            (lp.p_guess - sdp.p_guess).abs() < 1e-6,
            "seed {seed}: lp {} sdp {}",
            lp.p_guess,
            sdp.p_guess
        );
        assert!(lp.certificate.validate(1e-8).accepted);
    }
}

#[test]
fn disabling_the_sector_split_does_not_change_the_value() {
    let (prior, blocks) = random_classical_instance(42);
    let lp = min_entropy_classical(&prior, &blocks, &SolverConfig::default()).unwrap();
    let cq = embed_as_cq(&prior, &blocks);
    let cfg = SolverConfig {
        sector_split: false,
        ..SolverConfig::default()
    };
    let problem = CombSdpProblem::new(&cq, false, 1e-12).unwrap();
    assert!(!problem.is_diagonal());
    let sdp = min_entropy(&cq, &cfg).unwrap();
    assert!(
        (lp.p_guess - sdp.p_guess).abs() < 1e-6,
        "lp {} dense sdp {}",
        lp.p_guess,
        sdp.p_guess
    );
}
