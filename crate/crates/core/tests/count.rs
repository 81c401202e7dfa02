use farmic::audio::{MultichannelRecording, Waveform};
use farmic::count::{
    binarized_affinity, channel_correlation, cosine_affinity, nmesc_count_vectors,
    normalized_laplacian, p_grid, CorrelationConfig, NmescConfig,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn gaussian(rng: &mut impl Rng, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| StandardNormal.sample(&mut *rng)).collect()
}

fn unit(v: &[f64]) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter().map(|x| x / n).collect()
}

fn cos(a: &[f32], b: &[f32]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| f64::from(*x) * f64::from(*y)).sum();
    let na: f64 = a.iter().map(|x| f64::from(*x).powi(2)).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| f64::from(*x).powi(2)).sum::<f64>().sqrt();
    dot / (na * nb)
}

/// Orthonormal rows via Gram-Schmidt on Gaussian draws.
fn orthonormal(rng: &mut impl Rng, count: usize, dim: usize) -> Vec<Vec<f64>> {
    let mut basis: Vec<Vec<f64>> = Vec::new();
    while basis.len() < count {
        let mut v = gaussian(rng, dim);
        for b in &basis {
            let d: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
            v.iter_mut().zip(b).for_each(|(x, y)| *x -= d * y);
        }
        basis.push(unit(&v));
    }
    basis
}

/// `k` clusters whose centroids all have cosine exactly 0.2 with each other;
/// members are centroid plus isotropic noise, redrawn until every intra-cluster
/// pair has cosine >= 0.8.
fn spherical_clusters(k: usize, per: usize, dim: usize, seed: u64) -> Vec<Vec<f32>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let basis = orthonormal(&mut rng, k + 1, dim);
    let centroids: Vec<Vec<f64>> = (1..=k)
        .map(|i| {
            basis[0]
                .iter()
                .zip(&basis[i])
                .map(|(a, b)| 0.2f64.sqrt() * a + 0.8f64.sqrt() * b)
                .collect()
        })
        .collect();
    let sigma = 0.4 / (dim as f64).sqrt();
    let mut out = Vec::new();
    for c in &centroids {
        'retry: loop {
            let members: Vec<Vec<f32>> = (0..per)
                .map(|_| {
                    c.iter()
                        .map(|x| {
                            let z: f64 = StandardNormal.sample(&mut rng);
                            (x + sigma * z) as f32
                        })
                        .collect()
                })
                .collect();
            for i in 0..per {
                for j in i + 1..per {
                    if cos(&members[i], &members[j]) < 0.8 {
                        continue 'retry;
                    }
                }
            }
            out.extend(members);
            break;
        }
    }
    out
}

#[test]
fn three_orthogonal_clusters_against_dense_eigensolver() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let dim = 24;
    let basis = orthonormal(&mut rng, 3, dim);
    let mut vectors = Vec::new();
    for b in &basis {
        for _ in 0..10 {
            let v: Vec<f32> = b
                .iter()
                .map(|x| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    (x + 0.01 * z) as f32
                })
                .collect();
            vectors.push(v);
        }
    }
    for i in 0..30 {
        for j in 0..30 {
            if i / 10 == j / 10 {
                assert!(cos(&vectors[i], &vectors[j]) >= 0.99);
            }
        }
    }
    let cfg = NmescConfig::default();
    let (count, diag) = nmesc_count_vectors(&vectors, &cfg).unwrap();
    assert_eq!(count, 3);

    // recompute the spectrum at the chosen p with nalgebra
    let sim = cosine_affinity(&vectors).unwrap();
    let a = binarized_affinity(&sim, 30, diag.chosen_p, cfg.tie_tolerance);
    let l = normalized_laplacian(&a, 30);
    let mut eig: Vec<f64> = nalgebra::DMatrix::from_row_slice(30, 30, &l)
        .symmetric_eigenvalues()
        .iter()
        .copied()
        .collect();
    eig.sort_by(f64::total_cmp);
    for (x, y) in diag.eigenvalues.iter().zip(&eig) {
        assert!((x - y).abs() < 1e-9, "{x} vs {y}");
    }
    let gaps: Vec<f64> = (0..8).map(|k| eig[k + 1] - eig[k]).collect();
    let arg = (0..8).fold(0, |b, k| if gaps[k] > gaps[b] { k } else { b });
    assert_eq!(arg + 1, 3);
    assert!(eig[..3].iter().all(|e| e.abs() < 1e-9));
}

#[test]
fn monte_carlo_spherical_clusters() {
    let cfg = NmescConfig::default();
    for k in 2..=8 {
        // the full 400-trial run lives in the acceptance suite
        let hits = (0..10u64)
            .filter(|&seed| {
                let v = spherical_clusters(k, 12, 64, 1000 * k as u64 + seed);
                nmesc_count_vectors(&v, &cfg).unwrap().0 == k
            })
            .count();
        assert_eq!(hits, 10, "k = {k}");
    }
}

#[test]
fn sweep_grid_is_capped() {
    let cfg = NmescConfig::default();
    for n in [2usize, 3, 10, 64, 101, 500] {
        let g = p_grid(n, &cfg);
        assert!(!g.is_empty() && g.len() <= 50);
        assert!(g.windows(2).all(|w| w[0] < w[1]));
        assert!(*g.last().unwrap() <= (n / 2).max(1));
    }
}

#[test]
fn independent_noise_channels_are_uncorrelated() {
    let sr = 16000u32;
    let len = 120 * sr as usize;
    for seed in 0..10u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let chans = (0..2)
            .map(|c| {
                let s: Vec<f32> = (0..len)
                    .map(|_| {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        (0.1 * z) as f32
                    })
                    .collect();
                Waveform::new(s, sr, format!("{c}")).unwrap()
            })
            .collect();
        let rec = MultichannelRecording::new(chans).unwrap();
        let m = channel_correlation(&rec, &CorrelationConfig::default()).unwrap();
        assert!(m.get(0, 1).abs() < 0.05, "seed {seed}: {}", m.get(0, 1));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn count_is_permutation_and_rotation_invariant(
        k in 1usize..5,
        seed in 0u64..1000,
        perm_seed in 0u64..1000,
    ) {
        let dim = 16;
        let v = spherical_clusters(k, 8, dim, seed);
        let cfg = NmescConfig::default();
        let base = nmesc_count_vectors(&v, &cfg).unwrap().0;

        let mut rng = ChaCha8Rng::seed_from_u64(perm_seed);
        let mut order: Vec<usize> = (0..v.len()).collect();
        for i in (1..order.len()).rev() {
            order.swap(i, rng.random_range(0..=i));
        }
        let permuted: Vec<Vec<f32>> = order.iter().map(|&i| v[i].clone()).collect();
        prop_assert_eq!(nmesc_count_vectors(&permuted, &cfg).unwrap().0, base);

        let q = orthonormal(&mut rng, dim, dim);
        let rotated: Vec<Vec<f32>> = v
            .iter()
            .map(|x| {
                q.iter()
                    .map(|row| row.iter().zip(x).map(|(a, b)| a * f64::from(*b)).sum::<f64>() as f32)
                    .collect()
            })
            .collect();
        prop_assert_eq!(nmesc_count_vectors(&rotated, &cfg).unwrap().0, base);
    }
}
