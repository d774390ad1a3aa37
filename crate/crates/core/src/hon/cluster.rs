//! Agglomerative clustering of states that share a current block.

use std::collections::BTreeMap;

use rayon::prelude::*;

use super::matrix::AggregationMatrix;
use super::state::StateStats;
use crate::flowfield::BlockId;

/// Merge threshold used by default.
pub const DEFAULT_MERGE_THRESHOLD: f64 = 0.04;

/// One clustering input: a sparse next-block distribution and its weight.
#[derive(Clone, Debug)]
pub struct Profile {
    pub distribution: BTreeMap<BlockId, f64>,
    pub weight: f64,
}

/// Euclidean distance between two sparse distributions.
pub fn euclidean(p: &BTreeMap<BlockId, f64>, q: &BTreeMap<BlockId, f64>) -> f64 {
    let mut sum = 0.0;
    for (k, &a) in p {
        let b = q.get(k).copied().unwrap_or(0.0);
        sum += (a - b) * (a - b);
    }
    for (k, &b) in q {
        if !p.contains_key(k) {
            sum += b * b;
        }
    }
    sum.sqrt()
}

/// Weighted average of pairwise member distances between two clusters.
pub fn cluster_distance(u: &[&Profile], v: &[&Profile]) -> f64 {
    let wu: f64 = u.iter().map(|p| p.weight).sum();
    let wv: f64 = v.iter().map(|p| p.weight).sum();
    let mut acc = 0.0;
    for a in u {
        for b in v {
            acc += a.weight * b.weight * euclidean(&a.distribution, &b.distribution);
        }
    }
    acc / (wu * wv)
}

/// Clusters `items` (already in canonical order) and returns a cluster
/// label per item. Clusters merge while the closest pair is nearer than
/// `threshold`; equal distances resolve toward the pair with the lowest
/// `(min member, max member)` positions. Zero-weight items stay alone.
pub fn cluster_profiles(items: &[Profile], threshold: f64) -> Vec<usize> {
    let n = items.len();
    let mut label: Vec<usize> = (0..n).collect();
    let active_items: Vec<usize> = (0..n).filter(|&i| items[i].weight > 0.0).collect();
    let m = active_items.len();
    if m < 2 {
        return label;
    }
    // clusters are identified by their lowest member position
    let mut weight: Vec<f64> = active_items.iter().map(|&i| items[i].weight).collect();
    let mut lo: Vec<usize> = active_items.clone();
    let mut members: Vec<Vec<usize>> = active_items.iter().map(|&i| vec![i]).collect();
    let mut alive = vec![true; m];
    let mut dist = vec![vec![0.0; m]; m];
    for a in 0..m {
        for b in a + 1..m {
            let d = euclidean(
                &items[active_items[a]].distribution,
                &items[active_items[b]].distribution,
            );
            dist[a][b] = d;
            dist[b][a] = d;
        }
    }
    loop {
        let mut best: Option<(f64, (usize, usize), usize, usize)> = None;
        for a in 0..m {
            if !alive[a] {
                continue;
            }
            for b in a + 1..m {
                if !alive[b] {
                    continue;
                }
                let key = (lo[a].min(lo[b]), lo[a].max(lo[b]));
                let d = dist[a][b];
                let better = match best {
                    None => true,
                    Some((bd, bk, _, _)) => d < bd || (d == bd && key < bk),
                };
                if better {
                    best = Some((d, key, a, b));
                }
            }
        }
        let Some((d, _, a, b)) = best else { break };
        if d >= threshold {
            break;
        }
        let (wa, wb) = (weight[a], weight[b]);
        for c in 0..m {
            if alive[c] && c != a && c != b {
                let merged = (wa * dist[a][c] + wb * dist[b][c]) / (wa + wb);
                dist[a][c] = merged;
                dist[c][a] = merged;
            }
        }
        weight[a] = wa + wb;
        lo[a] = lo[a].min(lo[b]);
        let moved = std::mem::take(&mut members[b]);
        members[a].extend(moved);
        alive[b] = false;
    }
    for c in (0..m).filter(|&c| alive[c]) {
        for &i in &members[c] {
            label[i] = lo[c];
        }
    }
    label
}

/// Clusters the states of every block independently on their next-block
/// distributions, weighted by observed transitions.
pub fn init_aggregation_hclust(stats: &StateStats, threshold: f64) -> AggregationMatrix {
    let mut by_block: BTreeMap<BlockId, Vec<usize>> = BTreeMap::new();
    for (s, st) in stats.states.iter().enumerate() {
        by_block.entry(st.current).or_default().push(s);
    }
    let groups: Vec<Vec<usize>> = by_block.into_values().collect();
    let labelled: Vec<Vec<(usize, usize)>> = groups
        .par_iter()
        .map(|group| {
            let profiles: Vec<Profile> = group
                .iter()
                .map(|&s| Profile {
                    distribution: stats.next_distribution(s),
                    weight: stats.transitions(s) as f64,
                })
                .collect();
            let labels = cluster_profiles(&profiles, threshold);
            group
                .iter()
                .zip(labels)
                .map(|(&s, l)| (s, group[l]))
                .collect()
        })
        .collect();
    let mut label = vec![0; stats.len()];
    for (s, l) in labelled.into_iter().flatten() {
        label[s] = l;
    }
    AggregationMatrix::from_labels(&label)
}
