mod common;

use std::f64::consts::PI;

use common::{game, naive_effective, random_pure_strategy, random_strategy};
use proptest::prelude::{any, prop_assert, prop_assert_eq, proptest, ProptestConfig};
use sqgame::certify::{certification_report, effective_alignment, seesaw_optimize, SeeSawConfig, Verdict};
use sqgame::game::{effective_element, phi_plus, score, Strategy};
use sqgame::oracle::{lemma1_probe, lemma3_check, min_pt_eigenvalue, theorem1_probe, theorem1_sample, Side};
use sqgame::qlin::eig_hermitian;
use sqgame::swap::{swap_effective, SwapInstance};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn contraction_matches_naive_loops(seed in any::<u64>()) {
        let st = random_strategy(seed);
        let fast = effective_element(&st).unwrap();
        let slow = naive_effective(&st.rho, &st.m_a, &st.m_b);
        prop_assert!((fast.operator.matrix() - slow).norm() <= 1e-12);
    }

    #[test]
    fn effective_element_is_psd_and_bounded(seed in any::<u64>()) {
        let m = effective_element(&random_strategy(seed)).unwrap();
        prop_assert!(m.is_valid());
    }

    #[test]
    fn rank_one_weight_is_a_probability(seed in any::<u64>()) {
        let m = effective_element(&random_pure_strategy(seed)).unwrap();
        prop_assert!(m.weight >= -1e-10 && m.weight <= 1.0 + 1e-10);
    }

    #[test]
    fn bell_measurements_transpose_the_state(seed in any::<u64>()) {
        let st = random_strategy(seed);
        let st = Strategy::new(st.rho, phi_plus(["A0", "A"]).projector(), phi_plus(["B", "B0"]).projector()).unwrap();
        let m = effective_element(&st).unwrap();
        let expected = st.rho.transpose().scale(0.25);
        prop_assert!((m.operator.matrix() - expected.matrix()).norm() <= 1e-12);
    }

    #[test]
    fn score_bounded_at_balanced_target(seed in any::<u64>()) {
        let g = game(PI / 4.0);
        prop_assert!(score(&g, &random_strategy(seed)).unwrap() <= 0.25 + 1e-9);
    }

    #[test]
    fn separable_elements_pass_ppt(seed in any::<u64>(), bob in any::<bool>()) {
        let side = if bob { Side::Bob } else { Side::Alice };
        let m = effective_element(&theorem1_sample(seed, side).unwrap()).unwrap().operator;
        prop_assert!(min_pt_eigenvalue(&m).unwrap() >= -1e-9);
    }

    #[test]
    fn swap_probabilities_conserved(seed in any::<u64>()) {
        let inst = SwapInstance::random(seed);
        let total: f64 = (0..inst.joint_povm.len()).map(|i| swap_effective(&inst, i).unwrap().weight).sum();
        prop_assert!((total - 1.0).abs() <= 1e-10);
        for i in 0..inst.joint_povm.len() {
            let r = swap_effective(&inst, i).unwrap();
            prop_assert!(*eig_hermitian(&r.operator.hermitian_part()).unwrap().eigenvalues.last().unwrap() >= -1e-10);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn probes_reproduce_from_worst_seed(seed in any::<u64>()) {
        let a = lemma1_probe(50, seed, 0.1, PI / 8.0).unwrap();
        let b = lemma1_probe(50, seed, 0.1, PI / 8.0).unwrap();
        prop_assert_eq!(&a, &b);
        let t = theorem1_probe(50, seed, Side::Alice).unwrap();
        let st = theorem1_sample(t.worst_seed, Side::Alice).unwrap();
        let m = effective_element(&st).unwrap().operator;
        prop_assert_eq!(min_pt_eigenvalue(&m).unwrap() / m.real_trace(), t.worst_value);
        let l3 = lemma3_check(50, &[(2, 2), (4, 4)], seed).unwrap();
        prop_assert!(l3.worst_value <= 1.0 + 1e-9);
    }

    #[test]
    fn certified_runs_align_with_target(seed in any::<u64>()) {
        let g = game(PI / 4.0);
        let cfg = SeeSawConfig { restarts: 2, seed, ..SeeSawConfig::default() };
        let opt = seesaw_optimize(&g, &cfg).unwrap();
        let tol = 1e-6;
        let rep = certification_report(&opt, &g, tol).unwrap();
        if rep.verdict == Verdict::Certified {
            prop_assert!(effective_alignment(&opt, &g).unwrap() <= 10.0 * tol);
        }
        prop_assert!(opt.score_trajectory.windows(2).all(|w| w[1] >= w[0] - 1e-12));
    }
}
