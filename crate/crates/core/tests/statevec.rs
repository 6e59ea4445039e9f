use detcomm::analysis::chi_square_p_value;
use detcomm::statevec::{
    born_probability, gram_schmidt, measure, project, random_orthonormal_basis, random_state, Operator,
    OrthonormalBasis, StateVector, ALGEBRA_TOL, DIM,
};
use detcomm::RandomStream;
use num_complex::Complex64;
use proptest::prelude::*;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

#[test]
fn measurement_frequencies_follow_born_rule() {
    let mut rng = RandomStream::from_seed(21);
    for _ in 0..5 {
        let state = random_state(&mut rng);
        let basis = random_orthonormal_basis(&mut rng);
        let probs = basis.probabilities(&state);
        let mut counts = [0usize; DIM];
        for _ in 0..100_000 {
            let (k, post) = measure(&state, &basis, &mut rng);
            counts[k] += 1;
            assert_eq!(post, *basis.state(k));
        }
        let p = chi_square_p_value(&counts, &probs);
        assert!(p > 1e-3, "p = {p}, counts {counts:?}, probs {probs:?}");
    }
}

#[test]
fn haar_states_have_uniform_mean_overlap() {
    let mut rng = RandomStream::from_seed(22);
    let n = 100_000;
    let e1 = StateVector::unit(0);
    let samples: Vec<f64> = (0..n).map(|_| born_probability(&random_state(&mut rng), &e1)).collect();
    let mean = samples.iter().sum::<f64>() / n as f64;
    // |<e1|psi>|^2 is Beta(1, 3): mean 1/4, variance 3/80
    let sigma = (3.0 / 80.0 / n as f64).sqrt();
    assert!((mean - 0.25).abs() < 3.0 * sigma, "mean {mean}");
}

#[test]
fn projection_statistics_and_collapse() {
    let mut rng = RandomStream::from_seed(23);
    let p = Operator::projector_onto([StateVector::unit(0), StateVector::unit(3)].iter());
    let state = StateVector::new([c(0.5, 0.0), c(0.0, 0.5), c(0.5, 0.0), c(0.0, -0.5)]).unwrap();
    let mut hits = 0;
    for _ in 0..20_000 {
        let (hit, post, prob) = project(&state, &p, &mut rng).unwrap();
        assert!((prob - 0.5).abs() < 1e-12);
        let expected = if hit {
            StateVector::new([
                c(0.5f64.sqrt(), 0.0),
                c(0.0, 0.0),
                c(0.0, 0.0),
                c(0.0, -(0.5f64.sqrt())),
            ])
            .unwrap()
        } else {
            StateVector::new([c(0.0, 0.0), c(0.0, 0.5f64.sqrt()), c(0.5f64.sqrt(), 0.0), c(0.0, 0.0)]).unwrap()
        };
        assert!(post.same_ray(&expected, 1e-12));
        hits += usize::from(hit);
    }
    assert!(chi_square_p_value(&[hits, 20_000 - hits], &[0.5, 0.5]) > 1e-3);
}

#[test]
fn projector_validation() {
    let mut rng = RandomStream::from_seed(24);
    let s = random_state(&mut rng);
    let not_projector = Operator::identity().scale(c(0.5, 0.0));
    assert!(project(&s, &not_projector, &mut rng).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn random_bases_are_orthonormal_and_complete(seed in any::<u64>()) {
        let mut rng = RandomStream::from_seed(seed);
        let basis = random_orthonormal_basis(&mut rng);
        prop_assert!(basis.orthonormality_deviation() <= ALGEBRA_TOL);
        prop_assert!(basis.completeness_sum().max_abs_diff(&Operator::identity()) <= ALGEBRA_TOL);
        let s = random_state(&mut rng);
        let total: f64 = basis.probabilities(&s).iter().sum();
        prop_assert!((total - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn gram_schmidt_preserves_orthonormal_input(seed in any::<u64>()) {
        let mut rng = RandomStream::from_seed(seed);
        let basis = random_orthonormal_basis(&mut rng);
        let columns = basis.states().map(|s| *s.amplitudes());
        let again = gram_schmidt(columns).unwrap();
        for (a, b) in basis.states().iter().zip(again.states()) {
            prop_assert!(a.same_ray(b, 1e-10));
        }
    }

    #[test]
    fn phases_do_not_change_probabilities(seed in any::<u64>(), theta in 0.0..std::f64::consts::TAU) {
        let mut rng = RandomStream::from_seed(seed);
        let s = random_state(&mut rng);
        let basis = random_orthonormal_basis(&mut rng);
        let rotated = s.with_phase(Complex64::from_polar(1.0, theta));
        for (p, q) in basis.probabilities(&s).iter().zip(basis.probabilities(&rotated)) {
            prop_assert!((p - q).abs() <= 1e-12);
        }
    }
}

#[test]
fn rejects_dependent_columns() {
    let e = *StateVector::unit(0).amplitudes();
    let columns = [
        e,
        e,
        *StateVector::unit(2).amplitudes(),
        *StateVector::unit(3).amplitudes(),
    ];
    assert!(gram_schmidt(columns).is_none());
    assert!(OrthonormalBasis::new([StateVector::unit(0); 4]).is_err());
}
