use mmtts::align::{brute_force_align, count_paths, mas, mas_batch_reference, AlignmentPath, BatchedLoglik, MasBackend};
use ndarray::Array2;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_matrix(rng: &mut ChaCha8Rng, p: usize, f: usize) -> Array2<f32> {
    Array2::from_shape_fn((p, f), |_| rng.random_range(-10.0f32..0.0))
}

#[test]
fn random_4x7_matches_exhaustive_search() {
    for seed in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let l = random_matrix(&mut rng, 4, 7);
        let a = mas(l.view(), 4, 7).unwrap();
        let b = brute_force_align(l.view()).unwrap();
        assert_eq!(a.total(l.view()), b.total(l.view()), "seed {seed}");
        assert_eq!(a.assignment, b.assignment, "seed {seed}");
    }
}

#[test]
fn random_small_shapes_match_exhaustive_search() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for _ in 0..500 {
        let p = rng.random_range(1..=5);
        let f = rng.random_range(p..=8);
        let l = random_matrix(&mut rng, p, f);
        let a = mas(l.view(), p, f).unwrap();
        let b = brute_force_align(l.view()).unwrap();
        assert_eq!(a.total(l.view()), b.total(l.view()));
        assert_eq!(a, b);
    }
}

#[test]
fn enumeration_counts_are_binomial() {
    fn binom(n: usize, k: usize) -> usize {
        (0..k).fold(1, |acc, i| acc * (n - i) / (i + 1))
    }
    for p in 1..=6 {
        for f in p..=10 {
            assert_eq!(count_paths(p, f), binom(f - 1, p - 1), "{p}x{f}");
        }
    }
}

#[test]
fn one_row_has_single_path() {
    let l = Array2::from_shape_fn((1, 9), |(_, f)| f as f32 * -0.5);
    let b = brute_force_align(l.view()).unwrap();
    assert_eq!(b.assignment, vec![0; 9]);
    assert_eq!(b.durations, vec![9]);
}

#[test]
fn shift_invariance() {
    for seed in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let p = rng.random_range(1..=12);
        let f = rng.random_range(p..=40);
        let l = random_matrix(&mut rng, p, f);
        let c = rng.random_range(-50.0f32..50.0);
        let shifted = l.mapv(|v| v + c);
        assert_eq!(
            mas(l.view(), p, f).unwrap().assignment,
            mas(shifted.view(), p, f).unwrap().assignment,
            "seed {seed} c {c}"
        );
    }
}

#[test]
fn deterministic() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let l = random_matrix(&mut rng, 20, 90);
    assert_eq!(mas(l.view(), 20, 90).unwrap(), mas(l.view(), 20, 90).unwrap());
}

proptest! {
    #[test]
    fn mas_output_is_a_valid_path(p in 1usize..16, extra in 0usize..40, seed in any::<u64>()) {
        let f = p + extra;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let l = random_matrix(&mut rng, p, f);
        let path = mas(l.view(), p, f).unwrap();
        path.check().unwrap();
        prop_assert_eq!(path.assignment[0], 0);
        prop_assert_eq!(path.assignment[f - 1], p - 1);
        prop_assert_eq!(path.durations.iter().sum::<usize>(), f);
        prop_assert!(path.durations.iter().all(|&d| d >= 1));
    }

    #[test]
    fn batch_padding_does_not_change_items(seed in any::<u64>(), n in 1usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let items: Vec<Array2<f32>> = (0..n).map(|_| {
            let p = rng.random_range(1..=8);
            let f = rng.random_range(p..=20);
            random_matrix(&mut rng, p, f)
        }).collect();
        let views: Vec<_> = items.iter().map(|m| m.view()).collect();
        let paths = mas_batch_reference(&BatchedLoglik::from_items(&views).unwrap()).unwrap();
        for (m, path) in items.iter().zip(&paths) {
            prop_assert_eq!(path, &mas(m.view(), m.nrows(), m.ncols()).unwrap());
        }
    }
}

/// A C implementation of the kernel ABI, compiled and loaded at test time.
const C_KERNEL: &str = r#"
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>
#include <math.h>
int32_t mas_batch_f32(const float *data, size_t batch, size_t p_max, size_t f_max,
                      const int32_t *valid_p, const int32_t *valid_f, int32_t *out) {
    for (size_t b = 0; b < batch; b++) {
        int tp = valid_p[b], tf = valid_f[b];
        if (tp < 1 || (size_t)tp > p_max || tf < 0 || (size_t)tf > f_max) return -1;
        if (tf < tp) return (int32_t)b + 1;
        float *v = malloc(sizeof(float) * tp * tf);
        for (int i = 0; i < tp * tf; i++) v[i] = -INFINITY;
        for (int f = 0; f < tf; f++) {
            int lo = tp + f - tf; if (lo < 0) lo = 0;
            int hi = f + 1 < tp ? f + 1 : tp;
            for (int p = lo; p < hi; p++) {
                float x = data[(b * p_max + p) * f_max + f];
                float stay = p == f ? -INFINITY : v[(f - 1) * tp + p];
                float adv = p == 0 ? (f == 0 ? 0.0f : -INFINITY) : v[(f - 1) * tp + p - 1];
                v[f * tp + p] = (adv > stay ? adv : stay) + x;
            }
        }
        int p = tp - 1;
        for (int f = tf - 1; f >= 0; f--) {
            out[b * f_max + f] = p;
            if (p != 0 && (p == f || v[(f - 1) * tp + p] < v[(f - 1) * tp + p - 1])) p--;
        }
        for (size_t f = tf; f < f_max; f++) out[b * f_max + f] = -1;
        free(v);
    }
    return 0;
}
"#;

fn build_c_kernel(dir: &std::path::Path) -> Option<std::path::PathBuf> {
    let src = dir.join("kernel.c");
    let lib = dir.join("libmmtts_mas_kernel.so");
    std::fs::write(&src, C_KERNEL).ok()?;
    let status = std::process::Command::new("cc")
        .args(["-O2", "-ffp-contract=off", "-shared", "-fPIC", "-o"])
        .arg(&lib)
        .arg(&src)
        .status()
        .ok()?;
    status.success().then_some(lib)
}

#[cfg(unix)]
#[test]
fn dlopened_kernel_is_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    let Some(lib) = build_c_kernel(dir.path()) else {
        eprintln!("skipping: no C compiler available");
        return;
    };
    let backend = MasBackend::from_env(Some(&lib));
    assert!(backend.is_native(), "{}", backend.name());
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for round in 0..20 {
        let items: Vec<Array2<f32>> = (0..16)
            .map(|_| {
                let p = rng.random_range(1..=64);
                let f = rng.random_range(p..=256);
                random_matrix(&mut rng, p, f)
            })
            .collect();
        let views: Vec<_> = items.iter().map(|m| m.view()).collect();
        let batch = BatchedLoglik::from_items(&views).unwrap();
        let native: Vec<AlignmentPath> = backend.run(&batch).unwrap();
        assert_eq!(native, mas_batch_reference(&batch).unwrap(), "round {round}");
    }
    // a library without the symbol is rejected
    let empty = dir.path().join("empty.c");
    std::fs::write(&empty, "int unrelated(void) { return 0; }\n").unwrap();
    let so = dir.path().join("libempty.so");
    let ok = std::process::Command::new("cc")
        .args(["-shared", "-fPIC", "-o"])
        .arg(&so)
        .arg(&empty)
        .status()
        .unwrap()
        .success();
    if ok {
        assert!(MasBackend::load(&so).is_err());
        assert!(!MasBackend::from_env(Some(&so)).is_native());
    }
}
