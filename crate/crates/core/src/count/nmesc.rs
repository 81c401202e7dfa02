//! Speaker counting by normalized maximum eigengap spectral clustering.
//!
//! For each neighbour count `p` in a sweep, every row of the cosine affinity
//! matrix keeps its `p` strongest positive off-diagonal entries (binarized to
//! 1, ties at the cut kept), the result is symmetrized as `(A + A^T) / 2`, and
//! the eigenvalues of the symmetric-normalized Laplacian are examined. The
//! sweep picks the `p` with the smallest ratio `p / g(p)`, where `g(p)` is the
//! largest eigengap among the first `max_speakers` divided by the largest
//! eigenvalue; the count is the position of that largest gap.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::eigen::symmetric_eigenvalues;
use super::CountError;

/// Upper bound of the normalized Laplacian spectrum; stands in for the
/// eigenvalue after the last one, so `n` disconnected vectors count as `n`.
const SPECTRAL_BOUND: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NmescConfig {
    pub max_speakers: usize,
    /// At most this many `p` values are evaluated (evenly spaced).
    pub max_p_values: usize,
    /// Smallest neighbour count in the sweep; `None` uses `ceil(log2 n)`.
    pub min_neighbors: Option<usize>,
    /// Affinities within this distance of the `p`-th largest are kept too.
    pub tie_tolerance: f64,
}

impl Default for NmescConfig {
    fn default() -> Self {
        Self {
            max_speakers: 8,
            max_p_values: 50,
            min_neighbors: None,
            tie_tolerance: 1e-9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NmescDiagnostics {
    pub p_values: Vec<usize>,
    /// `p / g(p)` per swept value (`null` in JSON when no gap exists).
    pub ratios: Vec<Option<f64>>,
    pub chosen_p: usize,
    /// Smallest eigenvalues at the chosen `p`.
    pub eigenvalues: Vec<f64>,
    pub eigengaps: Vec<f64>,
}

/// Neighbour counts to evaluate for `n` embeddings.
pub fn p_grid(n: usize, cfg: &NmescConfig) -> Vec<usize> {
    let hi = (n / 2).max(1);
    let auto = (n as f64).log2().ceil() as usize;
    let lo = cfg.min_neighbors.unwrap_or(auto).clamp(1, hi);
    let span = hi - lo + 1;
    let slots = cfg.max_p_values.max(1);
    if span <= slots {
        return (lo..=hi).collect();
    }
    let mut grid: Vec<usize> = (0..slots)
        .map(|k| lo + ((k * (hi - lo)) as f64 / (slots - 1).max(1) as f64).round() as usize)
        .collect();
    grid.dedup();
    grid
}

/// Cosine similarity matrix of the rows of `vectors`.
pub fn cosine_affinity(vectors: &[Vec<f32>]) -> Result<Vec<f64>, CountError> {
    let n = vectors.len();
    let units: Vec<Vec<f64>> = vectors
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let norm = v.iter().map(|&x| f64::from(x).powi(2)).sum::<f64>().sqrt();
            if norm == 0.0 {
                return Err(CountError::InvalidInput(format!("embedding {i} has zero norm")));
            }
            Ok(v.iter().map(|&x| f64::from(x) / norm).collect())
        })
        .collect::<Result<_, _>>()?;
    let mut s = vec![0.0; n * n];
    for i in 0..n {
        s[i * n + i] = 1.0;
        for j in i + 1..n {
            let v: f64 = units[i].iter().zip(&units[j]).map(|(a, b)| a * b).sum();
            s[i * n + j] = v;
            s[j * n + i] = v;
        }
    }
    Ok(s)
}

/// Row-wise top-`p` binarization followed by `(A + A^T) / 2`.
pub fn binarized_affinity(sim: &[f64], n: usize, p: usize, tie_tolerance: f64) -> Vec<f64> {
    let mut b = vec![0.0; n * n];
    let mut row: Vec<f64> = Vec::with_capacity(n);
    for i in 0..n {
        row.clear();
        row.extend((0..n).filter(|&j| j != i).map(|j| sim[i * n + j]));
        row.sort_by(|x, y| y.total_cmp(x));
        let Some(&cut) = row.get(p.saturating_sub(1)) else { continue };
        for j in 0..n {
            let v = sim[i * n + j];
            if j != i && v > 0.0 && v >= cut - tie_tolerance {
                b[i * n + j] = 1.0;
            }
        }
    }
    let mut a = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            a[i * n + j] = 0.5 * (b[i * n + j] + b[j * n + i]);
        }
    }
    a
}

/// `I - D^{-1/2} A D^{-1/2}`; isolated vertices get an all-zero row.
pub fn normalized_laplacian(a: &[f64], n: usize) -> Vec<f64> {
    let inv_sqrt: Vec<f64> = (0..n)
        .map(|i| {
            let d: f64 = a[i * n..(i + 1) * n].iter().sum();
            if d > 0.0 {
                1.0 / d.sqrt()
            } else {
                0.0
            }
        })
        .collect();
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            let off = -inv_sqrt[i] * a[i * n + j] * inv_sqrt[j];
            l[i * n + j] = if i == j && inv_sqrt[i] > 0.0 { 1.0 + off } else { off };
        }
    }
    l
}

struct SweepPoint {
    ratio: Option<f64>,
    count: usize,
    eigenvalues: Vec<f64>,
    gaps: Vec<f64>,
}

fn evaluate(sim: &[f64], n: usize, p: usize, cfg: &NmescConfig) -> SweepPoint {
    let a = binarized_affinity(sim, n, p, cfg.tie_tolerance);
    let lambdas = symmetric_eigenvalues(&normalized_laplacian(&a, n), n);
    let k_max = cfg.max_speakers.min(n).max(1);
    let gaps: Vec<f64> = (0..k_max)
        .map(|k| lambdas.get(k + 1).copied().unwrap_or(SPECTRAL_BOUND) - lambdas[k])
        .collect();
    let (arg, max_gap) = gaps
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &g)| if g > bv { (i, g) } else { (bi, bv) });
    let lambda_max = lambdas.last().copied().unwrap_or(0.0);
    let scale = if lambda_max > 1e-12 { lambda_max } else { SPECTRAL_BOUND };
    let normalized = max_gap / scale;
    let ratio = (normalized > 1e-12).then(|| p as f64 / normalized);
    SweepPoint {
        ratio,
        count: arg + 1,
        eigenvalues: lambdas.into_iter().take(k_max + 1).collect(),
        gaps,
    }
}

/// Estimated number of speakers in `vectors` with sweep diagnostics.
pub fn nmesc_count_vectors(
    vectors: &[Vec<f32>],
    cfg: &NmescConfig,
) -> Result<(usize, NmescDiagnostics), CountError> {
    if cfg.max_speakers == 0 {
        return Err(CountError::InvalidInput("max_speakers must be >= 1".into()));
    }
    let n = vectors.len();
    if n == 0 {
        return Err(CountError::InvalidInput("no embeddings to count".into()));
    }
    let dim = vectors[0].len();
    if let Some(i) = vectors.iter().position(|v| v.len() != dim) {
        return Err(CountError::DimensionMismatch {
            index: i,
            expected: dim,
            found: vectors[i].len(),
        });
    }
    let sim = cosine_affinity(vectors)?;
    if n == 1 {
        return Ok((
            1,
            NmescDiagnostics {
                p_values: Vec::new(),
                ratios: Vec::new(),
                chosen_p: 0,
                eigenvalues: vec![0.0],
                eigengaps: Vec::new(),
            },
        ));
    }
    let grid = p_grid(n, cfg);
    let sweep: Vec<SweepPoint> = grid.par_iter().map(|&p| evaluate(&sim, n, p, cfg)).collect();
    // smallest ratio wins; ties and all-undefined sweeps go to the smallest p
    let mut best = 0;
    for (i, point) in sweep.iter().enumerate() {
        if let Some(r) = point.ratio {
            if sweep[best].ratio.is_none_or(|b| r < b) {
                best = i;
            }
        }
    }
    let chosen = &sweep[best];
    let count = chosen.count.clamp(1, cfg.max_speakers.min(n));
    Ok((
        count,
        NmescDiagnostics {
            chosen_p: grid[best],
            p_values: grid,
            ratios: sweep.iter().map(|s| s.ratio).collect(),
            eigenvalues: chosen.eigenvalues.clone(),
            eigengaps: chosen.gaps.clone(),
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn jittered_copies(n: usize, dim: usize, jitter: f64, seed: u64) -> Vec<Vec<f32>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let base: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
        (0..n)
            .map(|_| {
                base.iter()
                    .map(|b| {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        (b + jitter * z) as f32
                    })
                    .collect()
            })
            .collect()
    }

    #[test]
    fn grid_respects_bounds() {
        let cfg = NmescConfig::default();
        assert_eq!(p_grid(2, &cfg), vec![1]);
        assert_eq!(p_grid(12, &cfg), vec![4, 5, 6]);
        let big = p_grid(1000, &cfg);
        assert_eq!(big.len(), 50);
        assert_eq!((big[0], *big.last().unwrap()), (10, 500));
        let fixed = NmescConfig { min_neighbors: Some(1), ..cfg };
        assert_eq!(p_grid(12, &fixed), (1..=6).collect::<Vec<_>>());
    }

    #[test]
    fn near_identical_vectors_are_one_speaker() {
        let v = jittered_copies(20, 16, 1e-6, 1);
        assert_eq!(nmesc_count_vectors(&v, &NmescConfig::default()).unwrap().0, 1);
    }

    #[test]
    fn single_and_orthogonal_singletons() {
        let cfg = NmescConfig::default();
        assert_eq!(nmesc_count_vectors(&[vec![1.0, 2.0]], &cfg).unwrap().0, 1);
        for n in 2..=8 {
            let v: Vec<Vec<f32>> = (0..n)
                .map(|i| (0..8).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
                .collect();
            assert_eq!(nmesc_count_vectors(&v, &cfg).unwrap().0, n, "n = {n}");
        }
    }

    #[test]
    fn dimension_mismatch_and_zero_vector() {
        let cfg = NmescConfig::default();
        assert!(matches!(
            nmesc_count_vectors(&[vec![1.0, 0.0], vec![1.0, 0.0, 0.0]], &cfg),
            Err(CountError::DimensionMismatch { index: 1, .. })
        ));
        assert!(nmesc_count_vectors(&[vec![1.0, 0.0], vec![0.0, 0.0]], &cfg).is_err());
        assert!(nmesc_count_vectors(&[], &cfg).is_err());
    }

    #[test]
    fn laplacian_of_two_components() {
        // two disjoint edges: spectrum {0, 0, 2, 2}
        let mut a = vec![0.0; 16];
        for (i, j) in [(0, 1), (2, 3)] {
            a[i * 4 + j] = 1.0;
            a[j * 4 + i] = 1.0;
        }
        let e = symmetric_eigenvalues(&normalized_laplacian(&a, 4), 4);
        for (x, y) in e.iter().zip([0.0, 0.0, 2.0, 2.0]) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn binarization_keeps_ties_and_drops_nonpositive() {
        // row 0 has two equal best neighbours
        let sim = vec![
            1.0, 0.5, 0.5, -0.2, //
            0.5, 1.0, 0.1, 0.0, //
            0.5, 0.1, 1.0, 0.0, //
            -0.2, 0.0, 0.0, 1.0,
        ];
        let a = binarized_affinity(&sim, 4, 1, 1e-9);
        assert_eq!(&a[0..4], &[0.0, 1.0, 1.0, 0.0]);
        assert_eq!(&a[12..16], &[0.0; 4]);
    }
}
