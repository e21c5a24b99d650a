use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use segcert::stats::{binomial_tail_pvalue, holm_correct};
use segcert::verification::{holm_bruteforce, pvalue_bruteforce};

#[test]
fn pvalues_match_bruteforce_on_full_small_grid() {
    for n in 1..=12u64 {
        for k in 0..=n {
            for tau in [0.5, 0.75, 0.9] {
                let fast = binomial_tail_pvalue(k, n, tau).unwrap();
                let slow = pvalue_bruteforce(k, n, tau).unwrap();
                assert!(
                    (fast - slow).abs() <= 1e-12,
                    "k={k} n={n} tau={tau}: {fast} vs {slow}"
                );
            }
        }
    }
}

#[test]
fn pvalue_at_full_success() {
    let expected = 3.207_202_185_381_504e-13;
    let v = binomial_tail_pvalue(100, 100, 0.75).unwrap();
    assert!(((v - expected) / expected).abs() <= 1e-9, "{v}");
}

#[test]
fn pvalues_match_bruteforce_up_to_64() {
    for n in [20u64, 33, 50, 64] {
        for k in 0..=n {
            for tau in [0.5, 0.6, 0.75, 0.9, 0.99] {
                let fast = binomial_tail_pvalue(k, n, tau).unwrap();
                let slow = pvalue_bruteforce(k, n, tau).unwrap();
                let scale = slow.max(1e-300);
                assert!(
                    (fast - slow).abs() <= 1e-12 || ((fast - slow) / scale).abs() <= 1e-9,
                    "k={k} n={n} tau={tau}: {fast} vs {slow}"
                );
            }
        }
    }
}

#[test]
fn holm_matches_definition_on_exhaustive_grids() {
    let alpha = 0.05;
    let grid = [
        0.0,
        alpha / 6.0,
        alpha / 5.0,
        alpha / 4.0,
        alpha / 3.0,
        alpha / 2.0,
        alpha,
        0.5,
        1.0,
    ];
    for n in 1..=6u32 {
        let total = (grid.len() as u32).pow(n);
        let mut pv = vec![0.0; n as usize];
        for code in 0..total {
            let mut c = code;
            for slot in pv.iter_mut() {
                *slot = grid[(c % grid.len() as u32) as usize];
                c /= grid.len() as u32;
            }
            assert_eq!(
                holm_correct(&pv, alpha).unwrap(),
                holm_bruteforce(&pv, alpha).unwrap(),
                "{pv:?}"
            );
        }
    }
}

#[test]
fn holm_matches_definition_on_random_vectors() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for _ in 0..10_000 {
        let n = rng.random_range(1..=20usize);
        let alpha = [0.001, 0.01, 0.05, 0.2][rng.random_range(0..4usize)];
        let pv: Vec<f64> = (0..n)
            .map(|_| match rng.random_range(0..4u32) {
                // Mix exact ties, threshold-sized values and uniforms.
                0 => alpha / rng.random_range(1..=n) as f64,
                1 => 0.0,
                2 => rng.random::<f64>() * alpha,
                _ => rng.random::<f64>(),
            })
            .collect();
        assert_eq!(
            holm_correct(&pv, alpha).unwrap(),
            holm_bruteforce(&pv, alpha).unwrap(),
            "{pv:?}"
        );
    }
}
