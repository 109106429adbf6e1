use nalgebra::DMatrix;
use num_complex::Complex64;
use proptest::prelude::*;
use qdoe_core::fisher::{fisher_region_point, DesignMeasure, FisherMatrix, ModelPoint, SldFrame};
use qdoe_core::linalg;
use qdoe_core::quantum::{
    bloch_vector, merge_proportional, mix_povms, pauli, HermitianMatrix, ParametricModel, Povm,
};
use qdoe_core::solver::random_projective;

fn bloch_theta() -> impl Strategy<Value = Vec<f64>> {
    prop::array::uniform3(-0.57f64..0.57).prop_map(|a| a.to_vec())
}

fn affine_model() -> ParametricModel {
    let half = |m: DMatrix<Complex64>| HermitianMatrix::new(m.scale(0.5)).unwrap();
    let a0 = half(DMatrix::identity(2, 2) + pauli(3).scale(0.1));
    let g1 = half(pauli(1).scale(0.4) + pauli(2).scale(0.2));
    let g2 = half(pauli(3).scale(0.5) - pauli(1).scale(0.1));
    ParametricModel::affine(a0, vec![g1, g2]).unwrap()
}

fn models_with_theta() -> impl Strategy<Value = (ParametricModel, Vec<f64>)> {
    prop_oneof![
        bloch_theta().prop_map(|t| (ParametricModel::Bloch3, t)),
        (-0.9f64..0.9).prop_map(|x| (ParametricModel::bloch_sub(&[2]).unwrap(), vec![x])),
        (-0.6f64..0.6, -0.6f64..0.6).prop_map(|(a, b)| (ParametricModel::bloch_sub(&[1, 3]).unwrap(), vec![a, b])),
        (-3.1f64..3.1, 0.01f64..0.95).prop_map(|(a, b)| (ParametricModel::PhaseAmplitude, vec![a, b])),
        (-0.5f64..0.5, -0.5f64..0.5).prop_map(|(a, b)| (affine_model(), vec![a, b])),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn states_are_density_matrices((m, t) in models_with_theta()) {
        let rho = m.state_at(&t).unwrap();
        let mat = rho.matrix();
        prop_assert!((mat.trace() - 1.0).abs() < 1e-12);
        prop_assert!(mat.min_eigenvalue() >= -1e-10);
        prop_assert!(linalg::max_abs_c(&(mat.as_matrix() - mat.as_matrix().adjoint())) < 1e-14);
    }

    #[test]
    fn derivatives_match_finite_differences((m, t) in models_with_theta()) {
        let h = 1e-6;
        for i in 0..m.n_params() {
            let mut tp = t.clone();
            let mut tm = t.clone();
            tp[i] += h;
            tm[i] -= h;
            let fd = (m.state_at(&tp).unwrap().matrix().as_matrix() - m.state_at(&tm).unwrap().matrix().as_matrix())
                .unscale(2.0 * h);
            let exact = m.state_derivative(&t, i).unwrap();
            let err = linalg::max_abs_c(&(exact.as_matrix() - &fd));
            prop_assert!(err <= 1e-6 * linalg::max_abs_c(exact.as_matrix()).max(1e-3), "param {}: {}", i, err);
        }
    }

    #[test]
    fn bloch_vector_roundtrip(t in bloch_theta()) {
        let r = bloch_vector(&ParametricModel::Bloch3.state_at(&t).unwrap()).unwrap();
        for k in 0..3 {
            prop_assert!((r[k] - t[k]).abs() < 1e-12);
        }
    }

    #[test]
    fn self_mixture_merges_back(seed in any::<u64>(), d in 2usize..4, lambda in 0.0f64..=1.0) {
        let p = random_projective(d, 1, seed).remove(0);
        let merged = merge_proportional(&mix_povms(&p, &p, lambda).unwrap(), 1e-9);
        prop_assert!(merged.max_abs_diff(&p).unwrap() < 1e-12);
    }

    #[test]
    fn gill_massar_region(t in bloch_theta(), seed in any::<u64>(), eps in 0.0f64..0.9) {
        // Ĵ = (J^SLD)^{-1/2} J (J^SLD)^{-1/2} is PSD with trace at most one.
        let point = ModelPoint::new(&ParametricModel::Bloch3, &t).unwrap();
        let p = random_projective(2, 1, seed).remove(0);
        let noisy = Povm::new(
            p.elements()
                .iter()
                .map(|e| HermitianMatrix::new(e.scaled(1.0 - eps).as_matrix() + HermitianMatrix::identity(2).scaled(eps / 2.0).as_matrix()).unwrap())
                .collect(),
        )
        .unwrap();
        let j = point.fisher(&noisy).unwrap();
        let half = linalg::sym_pow(point.sld_fisher().unwrap().as_matrix(), -0.5);
        let jhat = &half * j.as_matrix() * &half;
        let (vals, _) = linalg::sym_eigh(&jhat);
        prop_assert!(vals[0] >= -1e-12);
        prop_assert!(jhat.trace() <= 1.0 + 1e-9);
    }

    #[test]
    fn design_fisher_is_affine(t in bloch_theta(), s1 in any::<u64>(), s2 in any::<u64>(), lambda in 0.01f64..0.99) {
        let m = ParametricModel::Bloch3;
        let point = ModelPoint::new(&m, &t).unwrap();
        let x1 = DesignMeasure::uniform(random_projective(2, 2, s1)).unwrap();
        let x2 = DesignMeasure::uniform(random_projective(2, 3, s2)).unwrap();
        let mixed = x1.mix(&x2, lambda).unwrap();
        let j1 = point.design_fisher(&x1).unwrap().into_inner();
        let j2 = point.design_fisher(&x2).unwrap().into_inner();
        let want = j1.scale(lambda) + j2.scale(1.0 - lambda);
        let got = point.design_fisher(&mixed).unwrap().into_inner();
        prop_assert!(linalg::max_abs(&(got - want)) < 1e-12);
    }

    #[test]
    fn fisher_ignores_labels_and_merging(t in bloch_theta(), seed in any::<u64>(), lambda in 0.1f64..0.9) {
        let point = ModelPoint::new(&ParametricModel::Bloch3, &t).unwrap();
        let p = random_projective(2, 1, seed).remove(0);
        let mut reversed: Vec<HermitianMatrix> = p.elements().to_vec();
        reversed.reverse();
        let reversed = Povm::new(reversed).unwrap();
        let split = mix_povms(&p, &p, lambda).unwrap();
        let merged = merge_proportional(&split, 1e-9);
        let base = point.fisher(&p).unwrap();
        for other in [&reversed, &split, &merged] {
            prop_assert!(point.fisher(other).unwrap().max_abs_diff(&base) < 1e-12);
        }
    }

    #[test]
    fn frame_measurements_are_rank_one(t in bloch_theta(), u in prop::array::uniform3(-1.0f64..1.0)) {
        let norm = u.iter().map(|x| x * x).sum::<f64>().sqrt();
        prop_assume!(norm > 0.1);
        let u: Vec<f64> = u.iter().map(|x| x / norm).collect();
        let m = ParametricModel::Bloch3;
        let point = ModelPoint::new(&m, &t).unwrap();
        let frame = SldFrame::new(&point).unwrap();
        let pvm = frame.pvm(&u).unwrap();
        let j = point.fisher(&pvm).unwrap();
        prop_assert!(j.max_abs_diff(&frame.rank_one_fisher(&u)) < 1e-9);
        let inv = point.sld_fisher().unwrap().inverse().unwrap();
        prop_assert!(((inv * j.as_matrix()).trace() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn region_points_match_designs(t in bloch_theta(), dirs in prop::collection::vec(prop::array::uniform3(-1.0f64..1.0), 1..5), raw in prop::collection::vec(0.05f64..1.0, 5)) {
        let dirs: Vec<Vec<f64>> = dirs
            .iter()
            .filter_map(|u| {
                let n = u.iter().map(|x| x * x).sum::<f64>().sqrt();
                (n > 0.1).then(|| u.iter().map(|x| x / n).collect())
            })
            .collect();
        prop_assume!(!dirs.is_empty());
        let total: f64 = raw[..dirs.len()].iter().sum();
        let weights: Vec<f64> = raw[..dirs.len()].iter().map(|w| w / total).collect();
        let m = ParametricModel::Bloch3;
        let region = fisher_region_point(&m, &t, &weights, &dirs).unwrap();
        let point = ModelPoint::new(&m, &t).unwrap();
        let frame = SldFrame::new(&point).unwrap();
        let povms = dirs.iter().map(|u| frame.pvm(u).unwrap()).collect();
        let j = point.design_fisher(&DesignMeasure::new(weights, povms).unwrap()).unwrap();
        prop_assert!(region.max_abs_diff(&j) < 1e-9);
        let inv = point.sld_fisher().unwrap().inverse().unwrap();
        prop_assert!((inv * region.as_matrix()).trace() <= 1.0 + 1e-10);
    }

    #[test]
    fn scalar_bound_for_random_pvms(x in -0.9f64..0.9, seed in any::<u64>()) {
        let m = ParametricModel::bloch_sub(&[1]).unwrap();
        let point = ModelPoint::new(&m, &[x]).unwrap();
        let sld = point.sld_fisher().unwrap();
        for p in random_projective(2, 20, seed) {
            let j = point.fisher(&p).unwrap();
            prop_assert!(j.as_matrix()[(0, 0)] <= sld.as_matrix()[(0, 0)] + 1e-12);
        }
        let frame = SldFrame::new(&point).unwrap();
        let best = point.fisher(&frame.pvm(&[1.0]).unwrap()).unwrap();
        prop_assert!(best.max_abs_diff(&sld) < 1e-9);
    }
}

#[test]
fn json_round_trips() {
    let m = affine_model();
    let text = serde_json::to_string(&m).unwrap();
    assert_eq!(serde_json::from_str::<ParametricModel>(&text).unwrap(), m);
    let p = random_projective(3, 1, 9).remove(0);
    let text = serde_json::to_string(&p).unwrap();
    assert!(serde_json::from_str::<Povm>(&text).unwrap().max_abs_diff(&p).unwrap() < 1e-15);
    let f = FisherMatrix::from_diagonal(&[1.0, 2.0]).unwrap();
    assert_eq!(serde_json::from_str::<FisherMatrix>(&serde_json::to_string(&f).unwrap()).unwrap(), f);
}
