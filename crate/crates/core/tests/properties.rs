//! Invariants checked on randomly drawn processes, states and operators.

mod common;

use edrlab::hilbert::{
    embed, partial_inner, random_hermitian, random_state, random_unitary, tensor_state, CMatrix, C64,
};
use edrlab::meter::{deficit_components, delta_quadratic, min_delta_f, solve_unbiased_f};
use edrlab::models::random_process;
use edrlab::povm::{epsilon_from_moments, extract_povm};
use edrlab::{GridSpec, MeasurementProcess, MeterFunction, Observable, ProcessParts, Slot, UnitaryOp, Units};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn process(seed: u64, no: usize, np: usize) -> (MeasurementProcess, edrlab::QState, ChaCha8Rng) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let go = GridSpec::new(no, 1.0, 1.0).unwrap();
    let gp = GridSpec::new(np, 0.5, 1.0).unwrap();
    let proc = random_process(go, gp, &mut rng).unwrap();
    let psi = random_state(no, &mut rng);
    (proc, psi, rng)
}

fn config() -> ProptestConfig {
    ProptestConfig { cases: 24, ..ProptestConfig::default() }
}

proptest! {
    #![proptest_config(config())]

    #[test]
    fn spectral_reassembly_and_projectors(seed in any::<u64>(), n in 2usize..8) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = random_hermitian(n, &mut rng, Units::Length);
        let spec = h.spectrum(1e-8);
        let back = spec.reassemble(&spec.cluster_values());
        prop_assert!((back - h.matrix()).norm() < 1e-12);
        let mut sum = CMatrix::zeros(n, n);
        for k in 0..spec.clusters.len() {
            let p = spec.projector(k);
            prop_assert!((&p * &p - &p).norm() < 1e-12);
            sum += p;
        }
        prop_assert!((sum - CMatrix::identity(n, n)).norm() < 1e-12);
        prop_assert!(spec.values.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn composition_matches_dense_product(seed in any::<u64>(), n in 2usize..10) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random_unitary(n, &mut rng);
        let b = random_unitary(n, &mut rng);
        let dense = b.to_dense() * a.to_dense();
        let composed = a.then(b).unwrap();
        prop_assert!((composed.to_dense() - &dense).norm() < 1e-12);
        let v = random_state(n, &mut rng).into_amplitudes();
        prop_assert!((composed.apply(&v) - &dense * &v).norm() < 1e-12);
        prop_assert!((composed.apply_adjoint(&composed.apply(&v)) - &v).norm() < 1e-12);
    }

    #[test]
    fn partial_inner_of_product_operator(seed in any::<u64>(), no in 2usize..5, np in 2usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random_hermitian(no, &mut rng, Units::Length);
        let b = random_hermitian(np, &mut rng, Units::Length);
        let xi = random_state(np, &mut rng);
        let ab = Observable::new(a.matrix().kronecker(b.matrix()), Units::Length).unwrap();
        let got = partial_inner(&xi, &ab, edrlab::Dims::new(no, np)).unwrap();
        let scale = xi.amplitudes().dotc(&(b.matrix() * xi.amplitudes())).re;
        prop_assert!((got.matrix() - a.matrix().map(|z| z * scale)).norm() < 1e-12);
    }

    #[test]
    fn povm_is_positive_and_complete(seed in any::<u64>(), no in 4usize..6, np in 4usize..6) {
        let (proc, _, _) = process(seed, no, np);
        let povm = extract_povm(&proc);
        prop_assert!(povm.min_eigenvalue() >= -1e-10);
        prop_assert!(povm.completeness_deviation() <= 1e-10);
        prop_assert_eq!(povm.len(), np);
    }

    #[test]
    fn povm_matches_dense_contraction(seed in any::<u64>()) {
        let (proc, _, _) = process(seed, 4, 4);
        let povm = extract_povm(&proc);
        for (o, dense) in povm.outcomes.iter().zip(common::dense_povm(&proc)) {
            prop_assert!((o.element.matrix() - dense).norm() < 1e-12);
        }
    }

    #[test]
    fn epsilon_is_a_function_of_the_moments(seed in any::<u64>(), no in 4usize..6) {
        let (proc, psi, _) = process(seed, no, 4);
        let mom = extract_povm(&proc).moments();
        let from_moments = epsilon_from_moments(&psi, proc.measured(), &mom, 1e-10).unwrap();
        let direct = proc.epsilon(&psi).unwrap().value;
        prop_assert!((from_moments - direct).abs() <= 1e-10 * (1.0 + direct));
    }

    #[test]
    fn mean_squares_match_dense_oracle(seed in any::<u64>()) {
        let (proc, psi, mut rng) = process(seed, 4, 4);
        let values = proc.meter_spectrum().cluster_values();
        let f = MeterFunction::tabulated(values.iter().map(|&m| (m, rng.random_range(-2.0..2.0))).collect());
        let d = common::dense_differences(&proc, &f);
        let eps = common::dense_mean_square(&proc, &psi, &d.eps);
        let delta = common::dense_mean_square(&proc, &psi, &d.delta);
        let eta = common::dense_mean_square(&proc, &psi, &d.eta);
        prop_assert!((proc.epsilon(&psi).unwrap().mean_square - eps).abs() < 1e-12 * (1.0 + eps));
        prop_assert!((proc.delta(&psi, &f).unwrap().mean_square - delta).abs() < 1e-12 * (1.0 + delta));
        prop_assert!((proc.eta(&psi).unwrap().mean_square - eta).abs() < 1e-12 * (1.0 + eta));
    }

    #[test]
    fn delta_quadratic_reproduces_delta(seed in any::<u64>()) {
        let (proc, psi, mut rng) = process(seed, 4, 5);
        let quad = delta_quadratic(&proc, &psi).unwrap();
        let f: Vec<f64> = quad.values.iter().map(|_| rng.random_range(-3.0..3.0)).collect();
        let table = MeterFunction::tabulated(quad.values.iter().copied().zip(f.iter().copied()).collect());
        let direct = proc.delta(&psi, &table).unwrap().mean_square;
        prop_assert!((quad.value(&f) - direct).abs() < 1e-11 * (1.0 + direct));
        let best = min_delta_f(&proc, &psi).unwrap();
        prop_assert!(best.delta_min.mean_square <= direct + 1e-12);
    }

    #[test]
    fn unbiasing_residual_never_exceeds_identity(seed in any::<u64>(), no in 4usize..6) {
        let (proc, _, _) = process(seed, no, 4);
        let comps = deficit_components(&proc).unwrap();
        let sol = solve_unbiased_f(&proc).unwrap();
        let at_identity = comps.deficit(&comps.values).matrix().norm();
        prop_assert!(sol.residual <= at_identity + 1e-12);
        let (_, oracle) = common::normal_equations_lstsq(
            &comps.basis.iter().map(|b| b.matrix().clone()).collect::<Vec<_>>(),
            comps.target.matrix(),
        );
        prop_assert!((sol.residual - oracle).abs() < 1e-9);
    }

    /// Relabelling the meter basis by a permutation `P` (meter `P X P^T`,
    /// interaction `(I (x) P) U`) changes neither the POVM nor the residual.
    #[test]
    fn residual_is_invariant_under_meter_relabelling(seed in any::<u64>(), np in 4usize..6) {
        let (proc, psi, mut rng) = process(seed, 4, np);
        let mut perm: Vec<usize> = (0..np).collect();
        perm.shuffle(&mut rng);
        let p = CMatrix::from_fn(np, np, |i, j| if perm[j] == i { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) });
        let lift = CMatrix::identity(4, 4).kronecker(&p);
        let relabelled = MeasurementProcess::new(ProcessParts {
            probe_state: proc.probe_state().clone(),
            interaction: UnitaryOp::from_matrix(lift * proc.interaction().to_dense()).unwrap(),
            meter: Observable::new(&p * proc.meter().matrix() * p.transpose(), Units::Length).unwrap(),
            measured: proc.measured().clone(),
            disturbed: proc.disturbed().clone(),
            hbar: proc.hbar(),
        })
        .unwrap();
        let a = solve_unbiased_f(&proc).unwrap();
        let b = solve_unbiased_f(&relabelled).unwrap();
        prop_assert!((a.residual - b.residual).abs() < 1e-10);
        let e1 = proc.epsilon(&psi).unwrap().value;
        let e2 = relabelled.epsilon(&psi).unwrap().value;
        prop_assert!((e1 - e2).abs() < 1e-10);
    }

    #[test]
    fn embedding_respects_products(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dims = edrlab::Dims::new(3, 4);
        let a = random_hermitian(3, &mut rng, Units::Length);
        let b = random_hermitian(4, &mut rng, Units::Length);
        let psi = random_state(3, &mut rng);
        let xi = random_state(4, &mut rng);
        let v = tensor_state(&psi, &xi).into_amplitudes();
        let ea = embed(&a, Slot::Object, dims).unwrap();
        let eb = embed(&b, Slot::Probe, dims).unwrap();
        // (A (x) I)(I (x) B) = (I (x) B)(A (x) I)
        let ab = ea.matrix() * eb.matrix();
        prop_assert!((&ab - eb.matrix() * ea.matrix()).norm() < 1e-12);
        let mean_a = psi.amplitudes().dotc(&(a.matrix() * psi.amplitudes())).re;
        let composite = v.dotc(&(ea.matrix() * &v)).re;
        prop_assert!((mean_a - composite).abs() < 1e-12);
    }
}
