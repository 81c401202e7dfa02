use serde::{Deserialize, Serialize};

use super::correlation::CorrelationMatrix;

/// Partition of channels into nearby-microphone groups.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelGroups {
    /// Each group sorted by channel id; groups ordered by their smallest id.
    pub groups: Vec<Vec<String>>,
    pub corr: CorrelationMatrix,
}

impl ChannelGroups {
    pub fn group_of(&self, channel_id: &str) -> Option<usize> {
        self.groups
            .iter()
            .position(|g| g.iter().any(|c| c == channel_id))
    }
}

struct Cluster {
    /// Indices into the correlation matrix, sorted by channel id.
    members: Vec<usize>,
}

/// Average-linkage agglomerative clustering on distance `1 - corr`.
///
/// Clusters are merged while the best pair has average correlation
/// `>= threshold`. Equal linkages are resolved by the smallest member ids, so
/// the result does not depend on the order of the input channels.
pub fn cluster_channels(corr: &CorrelationMatrix, threshold: f64) -> ChannelGroups {
    let n = corr.len();
    let ids = &corr.channel_ids;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| ids[a].cmp(&ids[b]));
    // rank[i] = position of channel i in id order
    let mut rank = vec![0usize; n];
    for (r, &i) in order.iter().enumerate() {
        rank[i] = r;
    }

    // clusters indexed in id order; sums[a][b] = sum of corr over member pairs
    let mut clusters: Vec<Option<Cluster>> = order
        .iter()
        .map(|&i| Some(Cluster { members: vec![i] }))
        .collect();
    let mut sums: Vec<Vec<f64>> = (0..n)
        .map(|a| {
            (0..n)
                .map(|b| {
                    let (x, y) = (order[a.min(b)], order[a.max(b)]);
                    corr.get(x, y)
                })
                .collect()
        })
        .collect();

    loop {
        let mut best: Option<(f64, usize, usize)> = None;
        for a in 0..n {
            let Some(ca) = &clusters[a] else { continue };
            for b in a + 1..n {
                let Some(cb) = &clusters[b] else { continue };
                let avg = sums[a][b] / (ca.members.len() * cb.members.len()) as f64;
                // slots are kept in smallest-member-id order, so scanning
                // (a, b) ascending and taking strict improvements implements
                // the canonical tie-break
                if best.is_none_or(|(v, _, _)| avg > v) {
                    best = Some((avg, a, b));
                }
            }
        }
        let Some((avg, a, b)) = best else { break };
        if avg < threshold {
            break;
        }
        let cb = clusters[b].take().expect("live cluster");
        let ca = clusters[a].as_mut().expect("live cluster");
        ca.members.extend(cb.members);
        ca.members.sort_by_key(|&i| rank[i]);
        for c in 0..n {
            if c == a || c == b || clusters[c].is_none() {
                continue;
            }
            let merged = sums[a][c] + sums[b][c];
            sums[a][c] = merged;
            sums[c][a] = merged;
        }
    }

    let groups = clusters
        .into_iter()
        .flatten()
        .map(|c| c.members.iter().map(|&i| ids[i].clone()).collect())
        .collect();
    ChannelGroups {
        groups,
        corr: corr.clone(),
    }
}
