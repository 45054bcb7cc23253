use std::collections::BTreeMap;

use emc_core::emc::{
    adjusted_rand_index, assign, centroid_summary, gmm_fit, unique_microclimate_count, CovarianceKind,
    GmmConfig, MONOTONE_TOL,
};
use emc_core::linalg::Matrix;
use emc_core::rng::SeededRng;
use proptest::prelude::*;

fn names(d: usize) -> Vec<String> {
    (0..d).map(|j| format!("c{j}")).collect()
}

/// `k` spherical blobs in `d` dimensions with centers `sep` apart along distinct axes.
fn blobs(k: usize, n_per: usize, d: usize, sep: f64, rng: &mut SeededRng) -> (Matrix, Vec<usize>) {
    let mut data = Vec::new();
    let mut truth = Vec::new();
    for c in 0..k {
        for _ in 0..n_per {
            for j in 0..d {
                let center = if j == c % d { sep * (1 + c / d) as f64 } else { 0.0 };
                data.push(rng.gaussian(center, 1.0));
            }
            truth.push(c);
        }
    }
    (Matrix::from_row_major(k * n_per, d, data).unwrap(), truth)
}

/// Pair-counting Rand index adjusted by its permutation expectation, computed
/// over all O(n²) pairs.
fn ari_brute_force(a: &[usize], b: &[usize]) -> f64 {
    let n = a.len();
    let (mut both, mut only_a, mut only_b, mut total) = (0.0, 0.0, 0.0, 0.0);
    for i in 0..n {
        for j in i + 1..n {
            let sa = a[i] == a[j];
            let sb = b[i] == b[j];
            both += (sa && sb) as u8 as f64;
            only_a += sa as u8 as f64;
            only_b += sb as u8 as f64;
            total += 1.0;
        }
    }
    let expected = only_a * only_b / total;
    let max = 0.5 * (only_a + only_b);
    (both - expected) / (max - expected)
}

#[test]
fn em_is_deterministic_per_seed() {
    let mut rng = SeededRng::new(2);
    let (data, _) = blobs(3, 80, 5, 3.0, &mut rng);
    for kind in [CovarianceKind::Diagonal, CovarianceKind::Full] {
        let cfg = GmmConfig { covariance: kind, ..GmmConfig::new(3, 41) };
        let a = gmm_fit(&data, &names(5), &cfg).unwrap();
        let b = gmm_fit(&data, &names(5), &cfg).unwrap();
        assert_eq!(a, b);
        assert!(a.max_monotonicity_violation() < MONOTONE_TOL);
        a.validate(cfg.floor).unwrap();
    }
}

#[test]
fn well_separated_partition_survives_row_permutation() {
    let mut rng = SeededRng::new(3);
    let (data, truth) = blobs(4, 60, 6, 12.0, &mut rng);
    let n = data.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        order.swap(i, rng.below(i + 1));
    }
    let permuted =
        Matrix::from_row_major(n, 6, order.iter().flat_map(|&i| data.row(i).to_vec()).collect()).unwrap();
    let cfg = GmmConfig::new(4, 7);
    let a = gmm_fit(&data, &names(6), &cfg).unwrap();
    let b = gmm_fit(&permuted, &names(6), &cfg).unwrap();
    let la: Vec<usize> = assign(&a, &data).unwrap().iter().map(|x| x.label).collect();
    let lb: Vec<usize> = assign(&b, &permuted).unwrap().iter().map(|x| x.label).collect();
    let lb_unpermuted: Vec<usize> = {
        let mut v = vec![0; n];
        for (pos, &i) in order.iter().enumerate() {
            v[i] = lb[pos];
        }
        v
    };
    assert_eq!(adjusted_rand_index(&la, &truth).unwrap(), 1.0);
    assert_eq!(adjusted_rand_index(&la, &lb_unpermuted).unwrap(), 1.0);
}

#[test]
fn centroid_rows_are_min_max_scaled() {
    let mut rng = SeededRng::new(4);
    let (data, _) = blobs(3, 50, 4, 6.0, &mut rng);
    let model = gmm_fit(&data, &names(4), &GmmConfig::new(3, 1)).unwrap();
    let s = centroid_summary(&model);
    assert_eq!(s.normalized.len(), 4);
    for row in &s.normalized {
        assert_eq!(row.len(), 3);
        assert!(row.iter().all(|v| (0.0..=1.0).contains(v)));
        assert!(row.contains(&0.0) && row.contains(&1.0));
    }
    for (c, dev) in s.centroids.iter().zip(&s.aggregate_deviation) {
        assert!((dev - 100.0 * (c.iter().sum::<f64>().exp() - 1.0)).abs() < 1e-9 * (1.0 + dev.abs()));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn ari_matches_pair_counting(a in prop::collection::vec(0usize..4, 2..60), seed in any::<u64>()) {
        let mut rng = SeededRng::new(seed);
        let b: Vec<usize> = a.iter().map(|&x| if rng.uniform() < 0.3 { rng.below(5) } else { x }).collect();
        let fast = adjusted_rand_index(&a, &b).unwrap();
        let distinct = |v: &[usize]| v.iter().collect::<std::collections::BTreeSet<_>>().len();
        let n = a.len();
        let trivial = |v: &[usize]| distinct(v) == 1 || distinct(v) == n;
        if !(trivial(&a) && trivial(&b)) {
            let slow = ari_brute_force(&a, &b);
            if slow.is_finite() {
                prop_assert!((fast - slow).abs() < 1e-12, "{} vs {}", fast, slow);
            }
        }
        // Relabeling either side leaves the index unchanged.
        let relabeled: Vec<usize> = b.iter().map(|&x| 10 - x).collect();
        prop_assert_eq!(adjusted_rand_index(&a, &relabeled).unwrap(), fast);
    }

    #[test]
    fn unique_counts_ignore_label_names(labels in prop::collection::vec((0u8..10, 0usize..10), 1..200), shift in 1usize..50) {
        let counts = unique_microclimate_count(labels.iter().copied());
        let renamed = unique_microclimate_count(labels.iter().map(|&(k, l)| (k, l * 7 + shift)));
        prop_assert_eq!(&counts, &renamed);
        let mut brute: BTreeMap<u8, Vec<usize>> = BTreeMap::new();
        for (k, l) in labels {
            let e = brute.entry(k).or_default();
            if !e.contains(&l) {
                e.push(l);
            }
        }
        for (k, ls) in brute {
            prop_assert_eq!(counts[&k], ls.len());
        }
    }
}
