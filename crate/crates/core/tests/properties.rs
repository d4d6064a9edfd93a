mod common;

use birkhoff_core::frequency::FrequencyVector;
use birkhoff_core::models::{
    build_model, resonance_sequence, EntryOverride, Family, ModelSpec, SequenceConstraints, SequenceMode,
};
use birkhoff_core::scalar::{Backend, Scalar};
use birkhoff_core::series::{Monomial, PoissonSeries};
use proptest::prelude::*;
use proptest::test_runner::RngSeed;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const E: Backend = Backend::Exact;

fn config(cases: u32) -> ProptestConfig {
    ProptestConfig { cases, rng_seed: RngSeed::Fixed(20_241_016), ..ProptestConfig::default() }
}

fn series_setup(seed: u64) -> (ChaCha8Rng, usize, usize) {
    let d = 2 + (seed % 2) as usize;
    let n = 4 + (seed % 4) as usize;
    (ChaCha8Rng::seed_from_u64(seed), d, n)
}

fn monomial_strategy(d: usize, max_each: u16) -> impl Strategy<Value = Monomial> {
    prop::collection::vec(0..=max_each, 2 * d).prop_map(move |e| Monomial::new(&e[..d], &e[d..]))
}

fn three_dof_model(family: Family, a: (i64, i64), terms: usize) -> PoissonSeries {
    let omega = FrequencyVector::new(vec![Scalar::from_i64(1, E), Scalar::ratio(-21, 10, E), Scalar::ratio(1, 3, E)]).unwrap();
    let c = SequenceConstraints {
        overrides: vec![EntryOverride { position: 0, a: Some(format!("{}/{}", a.0, a.1)), ..Default::default() }],
        pairs: Some(vec![(2, 1)]),
        ..Default::default()
    };
    let seq = resonance_sequence(&omega, 1, SequenceMode::B, &c).unwrap();
    build_model(&ModelSpec::new(family, seq, terms, 10)).unwrap()
}

proptest! {
    #![proptest_config(config(64))]

    #[test]
    fn bracket_is_antisymmetric(seed in any::<u64>()) {
        let (mut rng, d, n) = series_setup(seed);
        let f = common::random_real_series(&mut rng, d, n, 2, 4, 3);
        let g = common::random_real_series(&mut rng, d, n, 2, 4, 3);
        prop_assert_eq!(common::antisymmetry(&f, &g, n), Ok(()));
    }

    #[test]
    fn bracket_obeys_leibniz_and_jacobi(seed in any::<u64>()) {
        let (mut rng, d, n) = series_setup(seed);
        let f = common::random_real_series(&mut rng, d, n, 2, 4, 3);
        let g = common::random_real_series(&mut rng, d, n, 2, 4, 3);
        let k = common::random_real_series(&mut rng, d, n, 2, 3, 2);
        prop_assert_eq!(common::leibniz(&f, &g, &k, n), Ok(()));
        prop_assert_eq!(common::jacobi(&f, &g, &k, n), Ok(()));
    }

    #[test]
    fn operations_keep_real_series_real(seed in any::<u64>()) {
        let (mut rng, d, n) = series_setup(seed);
        let f = common::random_real_series(&mut rng, d, n, 2, 4, 3);
        let g = common::random_real_series(&mut rng, d, n, 2, 4, 3);
        let chi = common::random_real_series(&mut rng, d, n, 3, 4, 2);
        prop_assert_eq!(common::reality_closure(&f, &g, &chi, n), Ok(()));
    }

    #[test]
    fn quadratic_part_acts_diagonally(m in monomial_strategy(3, 3), p in 1i64..300, q in 1i64..300) {
        let omega = FrequencyVector::new(vec![
            Scalar::from_i64(1, E),
            Scalar::ratio(-p, 97, E),
            Scalar::ratio(q, 101, E),
        ]).unwrap();
        prop_assert_eq!(common::homega_identity(&omega, &m, 18), Ok(()));
    }

    #[test]
    fn resonant_split_is_a_projection(seed in any::<u64>()) {
        let (mut rng, d, n) = series_setup(seed);
        let omega = common::random_omega(&mut rng, d);
        let h = PoissonSeries::quadratic(omega.values(), n)
            .add(&common::random_real_series(&mut rng, d, n, 3, n, 4))
            .unwrap();
        prop_assert_eq!(common::split_projection(&h, &omega), Ok(()));
    }

    #[test]
    fn lie_transform_inverts(seed in any::<u64>()) {
        let (mut rng, d, n) = series_setup(seed);
        let h = common::random_real_series(&mut rng, d, n, 2, n, 4);
        let chi = common::random_real_series(&mut rng, d, n, 3, 4, 2);
        prop_assert_eq!(common::lie_inverse(&h, &chi, n), Ok(()));
    }
}

proptest! {
    #![proptest_config(config(16))]

    #[test]
    fn normal_form_ignores_elimination_order(seed in any::<u64>(), shuffle in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = 2 + (seed % 2) as usize;
        let order = 2 + (seed % 2) as usize;
        let omega = common::random_omega(&mut rng, d);
        let h = PoissonSeries::quadratic(omega.values(), 2 * order)
            .add(&common::random_real_series(&mut rng, d, 2 * order, 3, 2 * order, 4))
            .unwrap();
        prop_assert_eq!(common::order_invariance(&h, &omega, order, shuffle), Ok(()));
    }

    #[test]
    fn models_are_real_and_conserve_third_action(
        family in prop::sample::select(vec![Family::A3, Family::A3Tilde]),
        num in -9i64..=9,
        den in 1i64..=9,
        terms in 0usize..=1,
    ) {
        prop_assume!(num != 0);
        let h = three_dof_model(family, (num, den), terms);
        prop_assert!(h.is_real() && h.check_reality());
        let i3 = PoissonSeries::action(3, 10, 2, Scalar::one(E));
        prop_assert!(h.bracket(&i3, 10).unwrap().is_zero());
    }
}
