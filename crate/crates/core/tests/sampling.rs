use dasha_pp::compressors::{partial_fisher_yates, CompressorSpec};
use dasha_pp::participation::{pp_mean_variance_oracle, ParticipationScheme};
use dasha_pp::rng::seeded;
use proptest::prelude::*;

proptest! {
    #[test]
    fn rand_k_keeps_k_distinct_scaled_coordinates(d in 1usize..40, k_frac in 0.0f64..1.0, seed in any::<u64>()) {
        let k = 1 + ((d - 1) as f64 * k_frac) as usize;
        let c = CompressorSpec::rand_k(d, k).unwrap();
        let x: Vec<f64> = (0..d).map(|i| i as f64 + 1.0).collect();
        let out = c.compress(&x, &mut seeded(seed)).unwrap();
        prop_assert_eq!(out.stored(), k);
        prop_assert!(out.indices.windows(2).all(|w| w[0] < w[1]));
        for (&i, &v) in out.indices.iter().zip(&out.values) {
            prop_assert!((v - x[i] * d as f64 / k as f64).abs() <= 1e-12 * v.abs());
        }
        prop_assert_eq!(c.omega(), d as f64 / k as f64 - 1.0);
    }

    #[test]
    fn partial_shuffle_draws_distinct_indices(n in 1usize..200, k_frac in 0.0f64..=1.0, seed in any::<u64>()) {
        let k = (n as f64 * k_frac) as usize;
        let mut idx = partial_fisher_yates(&mut seeded(seed), n, k);
        prop_assert_eq!(idx.len(), k);
        idx.sort_unstable();
        idx.dedup();
        prop_assert_eq!(idx.len(), k);
        prop_assert!(idx.iter().all(|&i| i < n));
    }

    #[test]
    fn s_nice_masks_have_exactly_s_nodes(n in 1usize..30, s_frac in 0.0f64..1.0, seed in any::<u64>()) {
        let s = 1 + ((n - 1) as f64 * s_frac) as usize;
        let scheme = ParticipationScheme::s_nice(n, s).unwrap();
        let mask = scheme.sample_round(&mut seeded(seed));
        prop_assert_eq!(mask.len(), n);
        prop_assert_eq!(mask.iter().filter(|b| **b).count(), s);
    }
}

#[test]
fn mask_frequencies_match_moments() {
    let rounds = 20_000;
    for scheme in [ParticipationScheme::s_nice(6, 2).unwrap(), ParticipationScheme::independent(6, 0.3).unwrap()] {
        let (pa, paa) = scheme.moments();
        let mut rng = seeded(17);
        let (mut single, mut pair) = (0usize, 0usize);
        for _ in 0..rounds {
            let m = scheme.sample_round(&mut rng);
            single += m[0] as usize;
            pair += (m[0] && m[1]) as usize;
        }
        for (hits, p) in [(single, pa), (pair, paa)] {
            let sd = (rounds as f64 * p * (1.0 - p)).sqrt();
            assert!((hits as f64 - rounds as f64 * p).abs() <= 4.0 * sd, "{scheme:?}");
        }
    }
}

#[test]
fn full_participation_variance_is_plain_average() {
    let scheme = ParticipationScheme::full(3).unwrap();
    let means = vec![vec![1.0, 0.0], vec![0.0, 2.0], vec![3.0, 1.0]];
    let vars = [0.3, 0.6, 0.9];
    let v = pp_mean_variance_oracle(&scheme, &means, &vars).unwrap();
    assert!((v - (0.3 + 0.6 + 0.9) / 9.0).abs() < 1e-15);
}
