use detcomm::scheme::{
    build_matrix_a, concealment_density, probability_table, qnd_vulnerability, BitValue, ProbabilityTable,
};
use detcomm::statevec::{born_probability, Operator};
use detcomm::{build_bases, SchemeParams};
use num_complex::Complex64;
use proptest::prelude::*;

const TOL: f64 = 1e-12;

fn params_from_angles(theta: f64, phi: f64) -> SchemeParams {
    SchemeParams::new(theta.sin() * phi.cos(), theta.sin() * phi.sin(), theta.cos()).unwrap()
}

/// The defining matrix written out entry by entry.
fn literal_a(p: &SchemeParams) -> [[Complex64; 4]; 4] {
    let [a1, a2, a3] = p.as_array();
    let m = [
        [0.0, a1, a2, a3],
        [-a1, 0.0, a3, -a2],
        [-a2, -a3, 0.0, a1],
        [-a3, a2, -a1, 0.0],
    ];
    m.map(|row| row.map(|x| Complex64::new(0.0, x)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn algebraic_identities(theta in 0.0..std::f64::consts::PI, phi in 0.0..std::f64::consts::TAU) {
        let p = params_from_angles(theta, phi);
        let a = build_matrix_a(&p);
        let lit = literal_a(&p);
        for (r, row) in lit.iter().enumerate() {
            for (col, x) in row.iter().enumerate() {
                prop_assert!((a.entry(r, col) - x).norm() <= TOL);
            }
        }
        prop_assert!(a.unitarity_deviation() <= TOL);
        prop_assert!(a.hermiticity_deviation() <= TOL);

        let bases = build_bases(&p);
        prop_assert!(bases.same_index_overlap() <= TOL);
        prop_assert!(bases.c().completeness_sum().max_abs_diff(&Operator::identity()) <= TOL);
        let table = probability_table(&bases);
        prop_assert!(table.max_abs_diff(&ProbabilityTable::symbolic(&p)) <= TOL);
        prop_assert!(table.row_sum_deviation() <= 1e-10);

        let quarter = Operator::identity().scale(Complex64::new(0.25, 0.0));
        for bit in [BitValue::Plus, BitValue::Minus] {
            prop_assert!(concealment_density(&bases, bit).max_abs_diff(&quarter) <= TOL);
        }
    }

    #[test]
    fn cross_overlaps_are_squared_parameters(theta in 0.0..std::f64::consts::PI, phi in 0.0..std::f64::consts::TAU) {
        let p = params_from_angles(theta, phi);
        let [a1, a2, a3] = p.as_array();
        let (s1, s2, s3) = (a1 * a1, a2 * a2, a3 * a3);
        let expected = [
            [0.0, s1, s2, s3],
            [s1, 0.0, s3, s2],
            [s2, s3, 0.0, s1],
            [s3, s2, s1, 0.0],
        ];
        let bases = build_bases(&p);
        for (n, row) in expected.iter().enumerate() {
            for (k, want) in row.iter().enumerate() {
                let got = born_probability(bases.c().state(n), bases.b().state(k));
                prop_assert!((got - want).abs() <= TOL);
            }
        }
    }

    #[test]
    fn no_backdoor_in_the_interior(theta in 0.01..3.13f64, phi in 0.01..1.56f64, quadrant in 0usize..4) {
        let phi = phi + quadrant as f64 * std::f64::consts::FRAC_PI_2;
        let p = params_from_angles(theta, phi);
        prop_assume!(p.as_array().iter().all(|x| x.abs() > 1e-6));
        prop_assert!(qnd_vulnerability(&p).is_none());
    }

    #[test]
    fn backdoor_on_every_edge(angle in 0.0..std::f64::consts::TAU, zero in 0usize..3) {
        let mut v = [0.0; 3];
        v[(zero + 1) % 3] = angle.cos();
        v[(zero + 2) % 3] = angle.sin();
        let p = SchemeParams::new(v[0], v[1], v[2]).unwrap();
        let door = qnd_vulnerability(&p).expect("edge scheme has a backdoor");
        prop_assert!(door.projector.projector_deviation() <= TOL);
        let rank = door.projector.trace().re;
        prop_assert!(rank > 0.5 && rank < 3.5);
        // every signal state is an eigenstate
        let bases = build_bases(&p);
        for basis in [bases.b(), bases.c()] {
            for s in basis.states() {
                let e = door.projector.expectation(s);
                prop_assert!(e.min(1.0 - e) <= 1e-10);
            }
        }
    }
}

#[test]
fn preset_values() {
    let close = |got: [f64; 3], want: [f64; 3]| got.iter().zip(want).all(|(g, w)| (g - w).abs() < TOL);
    let s = 1.0 / 3f64.sqrt();
    assert!(close(SchemeParams::optimal().as_array(), [s, s, s]));
    let h = 1.0 / 2f64.sqrt();
    assert!(close(SchemeParams::simple().as_array(), [h, h, 0.0]));
    assert!((SchemeParams::optimal().sum_fourth_powers() - 1.0 / 3.0).abs() < TOL);
    assert_eq!("simple".parse::<SchemeParams>().unwrap(), SchemeParams::simple());
    assert_eq!("0,0,1".parse::<SchemeParams>().unwrap().as_array(), [0.0, 0.0, 1.0]);
    assert!("0.5,0.5,0.5".parse::<SchemeParams>().is_err());
}

#[test]
fn simple_scheme_backdoor_pattern() {
    let door = qnd_vulnerability(&SchemeParams::simple()).unwrap();
    assert_eq!(door.pattern_bits(), [1, 0, 0, 1]);
    assert_eq!(door.to_string(), "(1,0,0,1)");
    let axis = qnd_vulnerability(&SchemeParams::new(1.0, 0.0, 0.0).unwrap()).unwrap();
    assert_eq!(axis.pattern_bits(), [1, 0, 0, 0]);
}
