//! Counting-based construction of the baseline network families.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::matrix::{
    block_bin, build_mask, counts_to_t, node_transition_counts, AggregationMatrix,
    DistributionMatrix,
};
use super::network::{Network, NetworkKind, Provenance};
use super::state::{extract_states_for_blocks, extract_states_pruned, HOState, StateStats};
use crate::error::{Error, Result};
use crate::flowfield::{BlockId, BlockSequence};

/// How block counts are split over the states of a block.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistributionMode {
    /// In proportion to each state's training occupancy.
    #[default]
    Approximate,
    /// All mass on the lowest-order states of the block, as for particles
    /// with no known history.
    FirstOrder,
}

/// Decides when a longer context is kept as its own node in a
/// variable-order network.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum PromotionRule {
    /// Keep when the divergence exceeds `order / log2(1 + support)`.
    Adaptive,
    /// Keep when the divergence exceeds a fixed value.
    Constant(f64),
}

impl PromotionRule {
    pub fn threshold(&self, order: usize, support: u64) -> f64 {
        match *self {
            PromotionRule::Adaptive => order as f64 / (1.0 + support as f64).log2(),
            PromotionRule::Constant(c) => c,
        }
    }
}

/// Builds `D` for the given states.
pub fn init_distribution(
    stats: &StateStats,
    block_count: usize,
    mode: DistributionMode,
) -> DistributionMatrix {
    let approx = DistributionMatrix::approximate(stats, block_count);
    match mode {
        DistributionMode::Approximate => approx,
        DistributionMode::FirstOrder => {
            let mut min_order: BTreeMap<BlockId, usize> = BTreeMap::new();
            for st in &stats.states {
                let e = min_order.entry(st.current).or_insert(usize::MAX);
                *e = (*e).min(st.order());
            }
            let keep = |s: usize| stats.states[s].order() == min_order[&stats.states[s].current];
            let mut mass: BTreeMap<BlockId, (u64, usize)> = BTreeMap::new();
            for s in (0..stats.len()).filter(|&s| keep(s)) {
                let e = mass.entry(stats.states[s].current).or_default();
                e.0 += stats.support[s];
                e.1 += 1;
            }
            let (column, value) = (0..stats.len())
                .map(|s| {
                    let st = &stats.states[s];
                    let v = if !keep(s) {
                        0.0
                    } else {
                        let (total, count) = mass[&st.current];
                        if total == 0 {
                            1.0 / count as f64
                        } else {
                            stats.support[s] as f64 / total as f64
                        }
                    };
                    (block_bin(st.current, block_count), v)
                })
                .unzip();
            DistributionMatrix::new(block_count, column, value).expect("columns in range")
        }
    }
}

/// Assembles a counted network from states and an aggregation.
pub fn assemble(
    kind: NetworkKind,
    stats: &StateStats,
    block_count: usize,
    a: AggregationMatrix,
    mode: DistributionMode,
) -> Network {
    let d = init_distribution(stats, block_count, mode);
    let m = build_mask(stats, &a);
    let counts = node_transition_counts(stats, &a);
    let t = counts_to_t(&counts, &m, a.node_of(stats.exit_index()));
    Network {
        kind,
        optimized: false,
        block_count,
        states: stats.states.clone(),
        support: stats.support.clone(),
        d,
        a,
        t,
        m,
        provenance: Provenance::default(),
    }
}

/// One node per block plus the exit.
pub fn build_fon(train: &[BlockSequence], block_count: usize) -> Result<Network> {
    let stats = extract_states_for_blocks(train, 1, block_count)?;
    let a = AggregationMatrix::identity(stats.len());
    Ok(assemble(
        NetworkKind::Fon,
        &stats,
        block_count,
        a,
        DistributionMode::Approximate,
    ))
}

/// Every extracted state of order up to `k` is its own node. `min_support`
/// above one drops rare history windows in favor of shorter ones.
pub fn build_fixed_order(
    train: &[BlockSequence],
    k: usize,
    block_count: usize,
    mode: DistributionMode,
    min_support: u64,
) -> Result<Network> {
    let stats = extract_states_pruned(train, k, block_count, min_support)?;
    let a = AggregationMatrix::identity(stats.len());
    Ok(assemble(
        NetworkKind::FixedOrder(k),
        &stats,
        block_count,
        a,
        mode,
    ))
}

#[derive(Default)]
struct Context {
    next: BTreeMap<BlockId, u64>,
}

impl Context {
    fn total(&self) -> u64 {
        self.next.values().sum()
    }
}

/// Base-2 divergence of the next-block distribution of `child` from `parent`.
fn kld_log2(child: &BTreeMap<BlockId, u64>, parent: &BTreeMap<BlockId, u64>) -> f64 {
    let tc: u64 = child.values().sum();
    let tp: u64 = parent.values().sum();
    child
        .iter()
        .map(|(b, &c)| {
            let p = c as f64 / tc as f64;
            let q = parent.get(b).copied().unwrap_or(0) as f64 / tp as f64;
            p * (p / q).log2()
        })
        .sum()
}

/// Contexts whose next-block behavior diverges enough from their shorter
/// parent context, over contexts of order `2..=k`.
pub fn promoted_contexts(
    train: &[BlockSequence],
    k: usize,
    rule: PromotionRule,
) -> HashMap<HOState, bool> {
    let mut ctx: HashMap<HOState, Context> = HashMap::new();
    for seq in train {
        let v = seq.visits();
        for t in 0..v.len() {
            let next = if t + 1 < v.len() {
                Some(v[t + 1])
            } else if seq.terminated() {
                Some(crate::flowfield::TERMINAL)
            } else {
                None
            };
            for order in 1..=k.min(t + 1) {
                let c = ctx.entry(HOState::at(v, t, order)).or_default();
                if let Some(n) = next {
                    *c.next.entry(n).or_default() += 1;
                }
            }
        }
    }
    ctx.iter()
        .filter(|(c, _)| c.order() >= 2)
        .map(|(c, stats)| {
            let parent = &ctx[&c.parent().expect("order >= 2")];
            let keep = stats.total() > 0 && {
                let div = kld_log2(&stats.next, &parent.next);
                div > rule.threshold(c.order(), stats.total())
            };
            (c.clone(), keep)
        })
        .collect()
}

/// States are grouped under their longest history whose behavior differs
/// from its shorter parent; everything else falls back to lower orders.
pub fn build_variable_order(
    train: &[BlockSequence],
    k: usize,
    block_count: usize,
    rule: PromotionRule,
    mode: DistributionMode,
) -> Result<Network> {
    if k < 2 {
        return Err(Error::Config(
            "variable-order networks need order >= 2".into(),
        ));
    }
    let stats = extract_states_for_blocks(train, k, block_count)?;
    let promoted = promoted_contexts(train, k, rule);
    let mut group_of: BTreeMap<HOState, usize> = BTreeMap::new();
    let labels: Vec<usize> = stats
        .states
        .iter()
        .map(|st| {
            let ctx = (2..=st.order())
                .rev()
                .map(|o| st.truncated(o))
                .find(|c| promoted.get(c).copied().unwrap_or(false))
                .unwrap_or_else(|| st.truncated(1));
            let next = group_of.len();
            *group_of.entry(ctx).or_insert(next)
        })
        .collect();
    let a = AggregationMatrix::from_labels(&labels);
    Ok(assemble(
        NetworkKind::VariableOrder(k),
        &stats,
        block_count,
        a,
        mode,
    ))
}
