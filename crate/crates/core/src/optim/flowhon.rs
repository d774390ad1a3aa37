//! Alternating optimization of node transitions and state aggregation.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::loss::DensitySeries;
use super::pgd::{optimize_t, optimize_ts, series_loss, TrainConfig};
use crate::error::Result;
use crate::flowfield::BlockSequence;
use crate::hon::{
    assemble, extract_states_pruned, init_aggregation_hclust, AggregationMatrix, ColumnMatrix,
    DistributionMode, Network, NetworkKind,
};

/// One line of a training log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationLog {
    pub iter: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub nodes: usize,
    #[serde(rename = "A_changed")]
    pub a_changed: bool,
    /// Descent iteration that produced the kept transition matrix.
    pub best_inner: usize,
}

fn column_distance(a: &[(usize, f64)], b: &[(usize, f64)]) -> f64 {
    let (mut i, mut j, mut sum) = (0, 0, 0.0);
    while i < a.len() || j < b.len() {
        let ra = a.get(i).map_or(usize::MAX, |e| e.0);
        let rb = b.get(j).map_or(usize::MAX, |e| e.0);
        let d = if ra == rb {
            i += 1;
            j += 1;
            a[i - 1].1 - b[j - 1].1
        } else if ra < rb {
            i += 1;
            a[i - 1].1
        } else {
            j += 1;
            b[j - 1].1
        };
        sum += d * d;
    }
    sum.sqrt()
}

/// Reassigns every state with observed successors to the node of its block
/// whose outgoing column in `t` is closest to the state's column in `ts`.
/// Ties keep the previous node, otherwise the lowest node id wins. Empty
/// nodes are dropped and ids compacted.
pub fn update_a(
    t: &ColumnMatrix,
    ts: &ColumnMatrix,
    observed: &[bool],
    prev: &AggregationMatrix,
    node_bins: &[usize],
) -> AggregationMatrix {
    let mut by_bin: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (n, &b) in node_bins.iter().enumerate() {
        by_bin.entry(b).or_default().push(n);
    }
    let labels: Vec<usize> = (0..prev.state_count())
        .map(|s| {
            let old = prev.node_of(s);
            if !observed[s] {
                return old;
            }
            let col = ts.column(s);
            let mut best = (column_distance(col, t.column(old)), old);
            for &n in &by_bin[&node_bins[old]] {
                let d = column_distance(col, t.column(n));
                if d < best.0 || (d == best.0 && best.1 != old && n < best.1) {
                    best = (d, n);
                }
            }
            best.1
        })
        .collect();
    AggregationMatrix::from_labels(&labels)
}

/// Fits a counted network's transitions once; used for the `+` variants.
pub fn optimize_network(
    net: &Network,
    train: &DensitySeries,
    val: &DensitySeries,
    cfg: &TrainConfig,
) -> Result<(Network, IterationLog)> {
    let fit = optimize_t(net, train, val, cfg)?;
    let mut out = net.clone();
    out.t = fit.matrix;
    out.optimized = true;
    let log = IterationLog {
        iter: 1,
        train_loss: series_loss(&out, train, cfg),
        val_loss: fit.loss,
        nodes: out.node_count(),
        a_changed: false,
        best_inner: fit.best_iteration,
    };
    Ok((out, log))
}

/// Builds an order-`k` network by clustering states, then alternately
/// fitting node transitions and reassigning states until the assignment
/// settles or validation stops improving. Returns the best network seen
/// on validation and the per-round log.
pub fn train_flowhon(
    train: &[BlockSequence],
    val: &[BlockSequence],
    k: usize,
    block_count: usize,
    cfg: &TrainConfig,
    mode: DistributionMode,
) -> Result<(Network, Vec<IterationLog>)> {
    cfg.validate()?;
    let stats = extract_states_pruned(train, k, block_count, cfg.min_support)?;
    let train_series = DensitySeries::from_sequences(train, block_count, cfg.horizon);
    let val_series = DensitySeries::from_sequences(val, block_count, cfg.horizon);
    let kind = NetworkKind::FlowHon(k);

    let a = init_aggregation_hclust(&stats, cfg.merge_threshold);
    let mut net = assemble(kind, &stats, block_count, a, mode);
    net.optimized = true;
    let mut best: Option<(f64, Network)> = None;
    let mut log = Vec::new();
    let (mut unchanged, mut stalled) = (0, 0);
    for iter in 1..=cfg.max_outer {
        let fit = optimize_t(&net, &train_series, &val_series, cfg)?;
        net.t = fit.matrix;
        let (ts, observed) = optimize_ts(&net, &stats, &train_series, cfg)?;
        let next_a = update_a(&net.t, &ts, &observed, &net.a, &net.projection());
        let changed = next_a != net.a;

        if best.as_ref().is_none_or(|(l, _)| fit.loss < *l) {
            best = Some((fit.loss, net.clone()));
            stalled = 0;
        } else {
            stalled += 1;
        }
        unchanged = if changed { 0 } else { unchanged + 1 };
        log.push(IterationLog {
            iter,
            train_loss: series_loss(&net, &train_series, cfg),
            val_loss: fit.loss,
            nodes: net.node_count(),
            a_changed: changed,
            best_inner: fit.best_iteration,
        });
        if unchanged >= cfg.patience_a || stalled >= cfg.patience_val {
            break;
        }
        if changed {
            net = assemble(kind, &stats, block_count, next_a, mode);
            net.optimized = true;
        }
    }
    let (_, net) = best.expect("at least one round runs");
    Ok((net, log))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sparse_column_distance() {
        let a = [(0, 1.0), (2, 0.0)];
        let b = [(1, 1.0)];
        assert!((column_distance(&a, &b) - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(column_distance(&a, &a), 0.0);
    }

    #[test]
    fn nearer_node_wins_within_block() {
        // nodes 0 and 1 share a block, node 2 lies in another block
        let t = ColumnMatrix::new(
            3,
            vec![
                vec![(0, 0.1), (2, 0.9)],
                vec![(1, 0.3), (2, 0.7)],
                vec![(0, 1.0)],
            ],
        )
        .unwrap();
        // the first state is 0.1·√2 from node 0 and 0.3·√2 from node 1;
        // the second state matches node 1 exactly
        let ts = ColumnMatrix::new(
            3,
            vec![
                vec![(0, 0.0), (2, 1.0)],
                vec![(1, 0.3), (2, 0.7)],
                vec![(0, 1.0)],
            ],
        )
        .unwrap();
        let prev = AggregationMatrix::new(3, vec![1, 0, 2]).unwrap();
        let bins = [0, 0, 1];
        let a = update_a(&t, &ts, &[true, true, true], &prev, &bins);
        // state 0 -> node 0, state 1 -> node 1, state 2 stays in its own block
        assert_eq!(a.assignment(), &[0, 1, 2]);
    }
}
