//! Session-level speaker counting: group nearby microphones by correlation,
//! count speakers per group from embeddings, and pool the counts.

mod ahc;
mod correlation;
mod eigen;
mod embedding;
mod nmesc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audio::MultichannelRecording;

pub use ahc::{cluster_channels, ChannelGroups};
pub use correlation::{channel_correlation, CorrelationConfig, CorrelationMatrix};
pub use eigen::symmetric_eigenvalues;
pub use embedding::{
    read_embeddings, resegment_embeddings, sidecar_path, write_embeddings, EmbeddingMeta,
    EmbeddingSet,
};
pub use nmesc::{
    binarized_affinity, cosine_affinity, nmesc_count_vectors, normalized_laplacian, p_grid,
    NmescConfig, NmescDiagnostics,
};

#[derive(Debug, Error)]
pub enum CountError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("embedding {index} has dimension {found}, expected {expected}")]
    DimensionMismatch {
        index: usize,
        expected: usize,
        found: usize,
    },
    #[error("embedding file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Speaker count of an embedding set.
pub fn nmesc_count(
    emb: &EmbeddingSet,
    cfg: &NmescConfig,
) -> Result<(usize, NmescDiagnostics), CountError> {
    nmesc_count_vectors(emb.vectors(), cfg)
}

/// `round_half_up(sum n_i c_i / sum n_i)` over `(c_i, n_i)` pairs.
pub fn aggregate_counts(per_group: &[(usize, usize)]) -> Result<usize, CountError> {
    if per_group.is_empty() {
        return Err(CountError::InvalidInput("no group counts to aggregate".into()));
    }
    if let Some(&(c, n)) = per_group.iter().find(|&&(c, n)| c == 0 || n == 0) {
        return Err(CountError::InvalidInput(format!(
            "group count {c} with {n} embeddings; both must be >= 1"
        )));
    }
    let total: u128 = per_group.iter().map(|&(_, n)| n as u128).sum();
    let weighted: u128 = per_group.iter().map(|&(c, n)| (c * n) as u128).sum();
    // floor(x + 1/2) in integers
    Ok(((2 * weighted + total) / (2 * total)) as usize)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CountConfig {
    pub correlation: CorrelationConfig,
    pub corr_threshold: f64,
    pub nmesc: NmescConfig,
    pub seg_len_s: f64,
}

impl Default for CountConfig {
    fn default() -> Self {
        Self {
            correlation: CorrelationConfig::default(),
            corr_threshold: 0.3,
            nmesc: NmescConfig::default(),
            seg_len_s: 15.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupCount {
    pub group_index: usize,
    pub channels: Vec<String>,
    pub count: usize,
    pub num_embeddings: usize,
    /// Distinct fixed-length segments the group's embeddings cover.
    pub num_segments: usize,
    pub diagnostics: NmescDiagnostics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountEstimate {
    pub per_group: Vec<GroupCount>,
    pub session_count: usize,
    pub total_embeddings: usize,
    /// Channel groups that had no embeddings and were left out.
    pub empty_groups: Vec<usize>,
    pub groups: ChannelGroups,
}

/// Counts speakers in one session from its audio and per-channel embeddings.
pub fn count_session(
    rec: &MultichannelRecording,
    emb: &EmbeddingSet,
    cfg: &CountConfig,
) -> Result<CountEstimate, CountError> {
    let groups = if rec.num_channels() == 1 {
        cluster_channels(
            &CorrelationMatrix::from_values(rec.channel_ids(), vec![1.0])?,
            cfg.corr_threshold,
        )
    } else {
        cluster_channels(&channel_correlation(rec, &cfg.correlation)?, cfg.corr_threshold)
    };
    count_groups(groups, emb, cfg)
}

/// Counts speakers given precomputed channel groups.
pub fn count_groups(
    groups: ChannelGroups,
    emb: &EmbeddingSet,
    cfg: &CountConfig,
) -> Result<CountEstimate, CountError> {
    let emb = resegment_embeddings(emb, cfg.seg_len_s);
    let subsets: Vec<(usize, EmbeddingSet)> = groups
        .groups
        .iter()
        .enumerate()
        .map(|(g, chans)| (g, emb.filter_channels(chans)))
        .collect();
    let empty_groups: Vec<usize> = subsets
        .iter()
        .filter(|(_, s)| s.is_empty())
        .map(|(g, _)| *g)
        .collect();
    let per_group: Vec<GroupCount> = subsets
        .par_iter()
        .filter(|(_, s)| !s.is_empty())
        .map(|(g, s)| {
            let (count, diagnostics) = nmesc_count(s, &cfg.nmesc)?;
            Ok(GroupCount {
                group_index: *g,
                channels: groups.groups[*g].clone(),
                count,
                num_embeddings: s.len(),
                num_segments: s.distinct_bins().len(),
                diagnostics,
            })
        })
        .collect::<Result<_, CountError>>()?;
    if per_group.is_empty() {
        return Err(CountError::InvalidInput(
            "no embeddings belong to any channel of the session".into(),
        ));
    }
    let pairs: Vec<(usize, usize)> = per_group.iter().map(|g| (g.count, g.num_embeddings)).collect();
    Ok(CountEstimate {
        session_count: aggregate_counts(&pairs)?,
        total_embeddings: pairs.iter().map(|p| p.1).sum(),
        per_group,
        empty_groups,
        groups,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn aggregation_examples() {
        assert_eq!(aggregate_counts(&[(4, 17)]).unwrap(), 4);
        assert_eq!(aggregate_counts(&[(4, 10), (5, 5)]).unwrap(), 4);
        assert_eq!(aggregate_counts(&[(4, 8), (5, 8)]).unwrap(), 5);
        assert!(aggregate_counts(&[]).is_err());
        assert!(aggregate_counts(&[(0, 3)]).is_err());
        assert!(aggregate_counts(&[(2, 0)]).is_err());
    }

    proptest! {
        #[test]
        fn aggregation_bounds_and_scaling(
            groups in prop::collection::vec((1usize..9, 1usize..200), 1..10),
            scale in 1usize..20,
        ) {
            let c = aggregate_counts(&groups).unwrap();
            let lo = groups.iter().map(|g| g.0).min().unwrap();
            let hi = groups.iter().map(|g| g.0).max().unwrap();
            prop_assert!(lo <= c && c <= hi);
            let scaled: Vec<_> = groups.iter().map(|&(c, n)| (c, n * scale)).collect();
            prop_assert_eq!(aggregate_counts(&scaled).unwrap(), c);
        }
    }
}
