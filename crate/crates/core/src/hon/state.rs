use std::collections::{BTreeMap, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flowfield::{BlockId, BlockSequence, TERMINAL};

/// A block together with the blocks visited just before it, most recent first.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct HOState {
    pub current: BlockId,
    pub history: Vec<BlockId>,
}

impl HOState {
    pub fn new(current: BlockId, history: Vec<BlockId>) -> Self {
        HOState { current, history }
    }

    /// The absorbing state every trajectory ends in.
    pub fn exit() -> Self {
        HOState::new(TERMINAL, Vec::new())
    }

    pub fn first_order(block: BlockId) -> Self {
        HOState::new(block, Vec::new())
    }

    pub fn is_exit(&self) -> bool {
        self.current == TERMINAL
    }

    pub fn order(&self) -> usize {
        1 + self.history.len()
    }

    /// State of the particle at position `t` of `visits`, with at most
    /// `k - 1` blocks of history.
    pub fn at(visits: &[BlockId], t: usize, k: usize) -> Self {
        let lo = (t + 1).saturating_sub(k);
        HOState {
            current: visits[t],
            history: visits[lo..t].iter().rev().copied().collect(),
        }
    }

    pub fn truncated(&self, order: usize) -> Self {
        let keep = order.saturating_sub(1).min(self.history.len());
        HOState::new(self.current, self.history[..keep].to_vec())
    }

    /// The next-lower-order state (oldest history entry dropped).
    pub fn parent(&self) -> Option<Self> {
        (!self.history.is_empty()).then(|| self.truncated(self.order() - 1))
    }

    /// `[current, most recent, ..., oldest]`
    pub fn to_vec(&self) -> Vec<BlockId> {
        let mut v = Vec::with_capacity(self.order());
        v.push(self.current);
        v.extend_from_slice(&self.history);
        v
    }

    pub fn from_slice(v: &[BlockId]) -> Option<Self> {
        let (&current, history) = v.split_first()?;
        Some(HOState::new(current, history.to_vec()))
    }
}

impl fmt::Display for HOState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.current)?;
        for (i, h) in self.history.iter().enumerate() {
            f.write_str(if i == 0 { "|" } else { "." })?;
            write!(f, "{h}")?;
        }
        Ok(())
    }
}

/// Higher-order states observed in a training corpus with their statistics.
///
/// States are indexed canonically: regular states in sorted order, then the
/// exit state last.
#[derive(Clone, Debug)]
pub struct StateStats {
    pub order: usize,
    pub block_count: Option<usize>,
    pub states: Vec<HOState>,
    /// Number of times each state was occupied.
    pub support: Vec<u64>,
    /// Counts of the next block (including [`TERMINAL`]) per state.
    pub next_blocks: Vec<BTreeMap<BlockId, u64>>,
    /// Counts of successor states per state.
    pub successors: Vec<BTreeMap<usize, u64>>,
    index: HashMap<HOState, usize>,
}

/// Enumerates the order-`k` states of `train`. Each position of a sequence
/// yields one state whose history is as long as available (shorter near
/// sequence starts). The exit state is always present.
pub fn extract_states(train: &[BlockSequence], k: usize) -> Result<StateStats> {
    extract(train, k, None, 1)
}

/// Like [`extract_states`], but every block in `0..block_count` gets at least
/// a first-order placeholder state, and out-of-range ids are rejected.
pub fn extract_states_for_blocks(
    train: &[BlockSequence],
    k: usize,
    block_count: usize,
) -> Result<StateStats> {
    extract(train, k, Some(block_count), 1)
}

/// Like [`extract_states_for_blocks`], but a history window is only used
/// once it occurs at least `min_support` times; rarer windows fall back to
/// their longest sufficiently frequent truncation.
pub fn extract_states_pruned(
    train: &[BlockSequence],
    k: usize,
    block_count: usize,
    min_support: u64,
) -> Result<StateStats> {
    extract(train, k, Some(block_count), min_support)
}

/// Occurrence counts of every history window of order `1..=k`.
fn window_counts(train: &[BlockSequence], k: usize) -> HashMap<HOState, u64> {
    let mut counts = HashMap::new();
    for seq in train {
        let v = seq.visits();
        for t in 0..v.len() {
            for o in 2..=k.min(t + 1) {
                *counts.entry(HOState::at(v, t, o)).or_default() += 1;
            }
        }
    }
    counts
}

#[derive(Default)]
struct Tally {
    support: u64,
    next: BTreeMap<BlockId, u64>,
    succ: BTreeMap<HOState, u64>,
}

fn extract(
    train: &[BlockSequence],
    k: usize,
    block_count: Option<usize>,
    min_support: u64,
) -> Result<StateStats> {
    if k == 0 {
        return Err(Error::Config("state order must be at least 1".into()));
    }
    if train.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let windows = (min_support > 1).then(|| window_counts(train, k));
    let state_at = |v: &[BlockId], t: usize| match &windows {
        None => HOState::at(v, t, k),
        Some(w) => (2..=k.min(t + 1))
            .rev()
            .map(|o| HOState::at(v, t, o))
            .find(|s| w[s] >= min_support)
            .unwrap_or_else(|| HOState::first_order(v[t])),
    };
    let mut tallies: HashMap<HOState, Tally> = HashMap::new();
    let mut exit_support = 0u64;
    for seq in train {
        let visits = seq.visits();
        if let Some(b) = block_count {
            if let Some(&bad) = visits.iter().find(|&&v| v as usize >= b) {
                return Err(Error::Shape(format!("block id {bad} outside 0..{b}")));
            }
        }
        for t in 0..visits.len() {
            let state = state_at(visits, t);
            let (next, succ) = if t + 1 < visits.len() {
                (Some(visits[t + 1]), Some(state_at(visits, t + 1)))
            } else if seq.terminated() {
                (Some(TERMINAL), Some(HOState::exit()))
            } else {
                (None, None)
            };
            let tally = tallies.entry(state).or_default();
            tally.support += 1;
            if let (Some(n), Some(s)) = (next, succ) {
                *tally.next.entry(n).or_default() += 1;
                *tally.succ.entry(s).or_default() += 1;
            }
        }
        if seq.terminated() {
            exit_support += 1;
        }
    }
    if let Some(b) = block_count {
        let mut seen = vec![false; b];
        for s in tallies.keys() {
            seen[s.current as usize] = true;
        }
        for (blk, _) in seen.iter().enumerate().filter(|(_, &s)| !s) {
            tallies.insert(HOState::first_order(blk as BlockId), Tally::default());
        }
    }

    let mut states: Vec<HOState> = tallies.keys().cloned().collect();
    states.sort();
    states.push(HOState::exit());
    let index: HashMap<HOState, usize> = states
        .iter()
        .cloned()
        .enumerate()
        .map(|(i, s)| (s, i))
        .collect();

    let n = states.len();
    let mut support = vec![0u64; n];
    let mut next_blocks = vec![BTreeMap::new(); n];
    let mut successors = vec![BTreeMap::new(); n];
    for (state, tally) in tallies {
        let i = index[&state];
        support[i] = tally.support;
        next_blocks[i] = tally.next;
        successors[i] = tally
            .succ
            .into_iter()
            .map(|(s, c)| (index[&s], c))
            .collect();
    }
    support[n - 1] = exit_support;
    Ok(StateStats {
        order: k,
        block_count,
        states,
        support,
        next_blocks,
        successors,
        index,
    })
}

impl StateStats {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn exit_index(&self) -> usize {
        self.states.len() - 1
    }

    pub fn index_of(&self, s: &HOState) -> Option<usize> {
        self.index.get(s).copied()
    }

    /// Number of observed outgoing transitions of state `s`.
    pub fn transitions(&self, s: usize) -> u64 {
        self.next_blocks[s].values().sum()
    }

    /// Empirical next-block distribution of state `s` (empty if unobserved).
    pub fn next_distribution(&self, s: usize) -> BTreeMap<BlockId, f64> {
        let total = self.transitions(s) as f64;
        self.next_blocks[s]
            .iter()
            .map(|(&b, &c)| (b, c as f64 / total))
            .collect()
    }

    /// Occupancy per block, summed over the states of that block.
    pub fn block_occurrences(&self) -> BTreeMap<BlockId, u64> {
        let mut occ = BTreeMap::new();
        for (s, st) in self.states.iter().enumerate() {
            *occ.entry(st.current).or_default() += self.support[s];
        }
        occ
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seqs(v: &[&[BlockId]]) -> Vec<BlockSequence> {
        v.iter()
            .map(|s| BlockSequence::new(s.to_vec()).unwrap())
            .collect()
    }

    #[test]
    fn display_matches_notation() {
        assert_eq!(HOState::new(2, vec![1, 0]).to_string(), "2|1.0");
        assert_eq!(HOState::first_order(7).to_string(), "7");
    }

    #[test]
    fn positional_states() {
        let v = [0, 1, 2, 3];
        assert_eq!(HOState::at(&v, 0, 3), HOState::first_order(0));
        assert_eq!(HOState::at(&v, 1, 3), HOState::new(1, vec![0]));
        assert_eq!(HOState::at(&v, 3, 3), HOState::new(3, vec![2, 1]));
        assert_eq!(
            HOState::new(3, vec![2, 1]).parent(),
            Some(HOState::new(3, vec![2]))
        );
    }

    #[test]
    fn first_order_states_are_observed_blocks() {
        let st = extract_states(&seqs(&[&[0, 1, 2, -1], &[1, 3]]), 1).unwrap();
        let regular: Vec<_> = st.states.iter().filter(|s| !s.is_exit()).collect();
        assert_eq!(regular.len(), 4);
        assert!(regular.iter().all(|s| s.order() == 1));
        assert!(st.states.last().unwrap().is_exit());
        assert_eq!(st.support[st.exit_index()], 1);
    }

    #[test]
    fn third_order_window_to_exit() {
        let st = extract_states(&seqs(&[&[0, 1, 2, -1]]), 3).unwrap();
        let s = st.index_of(&HOState::new(2, vec![1, 0])).unwrap();
        assert_eq!(st.next_blocks[s].get(&TERMINAL), Some(&1));
        assert_eq!(st.successors[s].get(&st.exit_index()), Some(&1));
        assert_eq!(st.transitions(s), 1);
    }

    #[test]
    fn crossing_pattern_probabilities() {
        // Two groups passing through block 23 (grid cell (2,3)): eight of ten
        // particles coming from 21 through 22 turn to 13, the rest continue to 24.
        let mut v = Vec::new();
        for _ in 0..8 {
            v.push(vec![21, 22, 23, 13, -1]);
        }
        for _ in 0..2 {
            v.push(vec![21, 22, 23, 24, -1]);
        }
        for _ in 0..10 {
            v.push(vec![32, 22, 23, 24, -1]);
        }
        let corpus: Vec<_> = v
            .into_iter()
            .map(|s| BlockSequence::new(s).unwrap())
            .collect();
        let st = extract_states(&corpus, 3).unwrap();
        let red = st.index_of(&HOState::new(23, vec![22, 21])).unwrap();
        let p = st.next_distribution(red);
        assert!((p[&13] - 0.8).abs() < 1e-12);
        assert!((p[&24] - 0.2).abs() < 1e-12);
        let blue = st.index_of(&HOState::new(23, vec![22, 32])).unwrap();
        assert_eq!(st.next_distribution(blue)[&24], 1.0);
    }

    #[test]
    fn placeholders_and_range_checks() {
        let st = extract_states_for_blocks(&seqs(&[&[0, 2]]), 2, 4).unwrap();
        assert!(st.index_of(&HOState::first_order(1)).is_some());
        assert!(st.index_of(&HOState::first_order(3)).is_some());
        assert!(extract_states_for_blocks(&seqs(&[&[0, 5]]), 2, 4).is_err());
        assert!(matches!(extract_states(&[], 2), Err(Error::EmptyCorpus)));
    }

    #[test]
    fn rare_windows_fall_back_to_frequent_truncations() {
        let mut v: Vec<&[BlockId]> = vec![&[0, 1, 2, -1]; 5];
        v.push(&[3, 1, 2, -1]);
        let st = extract_states_pruned(&seqs(&v), 3, 4, 5).unwrap();
        assert!(st.index_of(&HOState::new(2, vec![1, 0])).is_some());
        assert!(st.index_of(&HOState::new(2, vec![1, 3])).is_none());
        // the rare history is absorbed by 2|1, seen six times
        let s = st.index_of(&HOState::new(2, vec![1])).unwrap();
        assert_eq!(st.support[s], 1);
        let full = st.index_of(&HOState::new(2, vec![1, 0])).unwrap();
        assert_eq!(st.support[full], 5);
        assert!(st.index_of(&HOState::new(1, vec![3])).is_none());
        assert!(st.index_of(&HOState::first_order(3)).is_some());
    }
}
