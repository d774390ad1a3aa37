//! The distribution, aggregation, transition and mask layers.
//!
//! Vectors over blocks have `B + 1` entries: one per block plus a final exit
//! bin that collects particles whose trajectory has ended.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::state::StateStats;
use crate::error::{Error, Result};
use crate::flowfield::{BlockId, BlockSequence, TERMINAL};

/// Bin index of a block id in a `B + 1` vector.
#[inline]
pub fn block_bin(block: BlockId, block_count: usize) -> usize {
    if block == TERMINAL {
        block_count
    } else {
        block as usize
    }
}

/// `S × (B+1)` matrix splitting block counts over states. Every row has its
/// single structural entry in the column of the state's current block.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistributionMatrix {
    block_count: usize,
    column: Vec<usize>,
    value: Vec<f64>,
}

impl DistributionMatrix {
    pub fn new(block_count: usize, column: Vec<usize>, value: Vec<f64>) -> Result<Self> {
        if column.len() != value.len() {
            return Err(Error::Shape(
                "distribution columns/values differ in length".into(),
            ));
        }
        if column.iter().any(|&c| c > block_count) {
            return Err(Error::Shape("distribution column out of range".into()));
        }
        Ok(DistributionMatrix {
            block_count,
            column,
            value,
        })
    }

    /// Approximate assignment: the share of a block's occupancy held by each
    /// state. Blocks without observations put all mass on their first-order
    /// state (present as a placeholder).
    pub fn approximate(stats: &StateStats, block_count: usize) -> Self {
        let occ = stats.block_occurrences();
        let mut column = Vec::with_capacity(stats.len());
        let mut value = Vec::with_capacity(stats.len());
        for (s, st) in stats.states.iter().enumerate() {
            column.push(block_bin(st.current, block_count));
            let total = occ[&st.current];
            value.push(if st.is_exit() {
                1.0
            } else if total == 0 {
                if st.order() == 1 {
                    1.0
                } else {
                    0.0
                }
            } else {
                stats.support[s] as f64 / total as f64
            });
        }
        DistributionMatrix {
            block_count,
            column,
            value,
        }
    }

    /// Exact assignment from the known histories of an evaluated particle
    /// set: each particle's first position is matched to its longest known
    /// state and the matches are tallied per block. Blocks none of the
    /// particles start in fall back to approximate assignment.
    pub fn exact(
        stats_states: &[super::HOState],
        lookup: &dyn Fn(&[BlockId], usize) -> Option<usize>,
        approximate: &DistributionMatrix,
        particles: &[BlockSequence],
    ) -> Self {
        let b = approximate.block_count;
        let mut hits = vec![0u64; stats_states.len()];
        let mut per_block = vec![0u64; b + 1];
        for p in particles {
            if let Some(s) = lookup(p.visits(), 0) {
                hits[s] += 1;
                per_block[block_bin(stats_states[s].current, b)] += 1;
            }
        }
        let value = stats_states
            .iter()
            .enumerate()
            .map(|(s, st)| {
                let bin = block_bin(st.current, b);
                if st.is_exit() {
                    1.0
                } else if per_block[bin] == 0 {
                    approximate.value[s]
                } else {
                    hits[s] as f64 / per_block[bin] as f64
                }
            })
            .collect();
        DistributionMatrix {
            block_count: b,
            column: approximate.column.clone(),
            value,
        }
    }

    pub fn block_count(&self) -> usize {
        self.block_count
    }

    pub fn rows(&self) -> usize {
        self.column.len()
    }

    pub fn column_of(&self, s: usize) -> usize {
        self.column[s]
    }

    pub fn value(&self, s: usize) -> f64 {
        self.value[s]
    }

    /// `s = D · b`
    pub fn apply(&self, b: &[f64]) -> Vec<f64> {
        self.column
            .iter()
            .zip(&self.value)
            .map(|(&c, &v)| v * b[c])
            .collect()
    }

    pub fn column_sums(&self) -> Vec<f64> {
        let mut sums = vec![0.0; self.block_count + 1];
        for (&c, &v) in self.column.iter().zip(&self.value) {
            sums[c] += v;
        }
        sums
    }

    pub fn triplets(&self) -> Vec<(usize, usize, f64)> {
        self.column
            .iter()
            .zip(&self.value)
            .enumerate()
            .filter(|(_, (_, &v))| v != 0.0)
            .map(|(s, (&c, &v))| (s, c, v))
            .collect()
    }
}

/// `N × S` binary matrix stored as the node of each state.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AggregationMatrix {
    node_count: usize,
    assignment: Vec<usize>,
}

impl AggregationMatrix {
    pub fn new(node_count: usize, assignment: Vec<usize>) -> Result<Self> {
        if let Some(&bad) = assignment.iter().find(|&&n| n >= node_count) {
            return Err(Error::Shape(format!(
                "node {bad} out of range 0..{node_count}"
            )));
        }
        Ok(AggregationMatrix {
            node_count,
            assignment,
        })
    }

    pub fn identity(n: usize) -> Self {
        AggregationMatrix {
            node_count: n,
            assignment: (0..n).collect(),
        }
    }

    /// Relabels arbitrary group labels into compact node ids ordered by each
    /// group's lowest state index, dropping empty groups.
    pub fn from_labels(labels: &[usize]) -> Self {
        let mut relabel = BTreeMap::new();
        let assignment = labels
            .iter()
            .map(|l| {
                let next = relabel.len();
                *relabel.entry(*l).or_insert(next)
            })
            .collect();
        AggregationMatrix {
            node_count: relabel.len(),
            assignment,
        }
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn state_count(&self) -> usize {
        self.assignment.len()
    }

    pub fn node_of(&self, s: usize) -> usize {
        self.assignment[s]
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    /// `n = A · s`
    pub fn apply(&self, s: &[f64]) -> Vec<f64> {
        let mut n = vec![0.0; self.node_count];
        for (&node, &v) in self.assignment.iter().zip(s) {
            n[node] += v;
        }
        n
    }

    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut m = vec![Vec::new(); self.node_count];
        for (s, &n) in self.assignment.iter().enumerate() {
            m[n].push(s);
        }
        m
    }
}

/// Sparse matrix stored by columns, rows ascending within each column.
/// Used for node transitions (`N × N`), state transitions (`N × S`) and counts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ColumnMatrix {
    nrows: usize,
    cols: Vec<Vec<(usize, f64)>>,
}

pub type TransitionMatrix = ColumnMatrix;
pub type StateTransitionMatrix = ColumnMatrix;

impl ColumnMatrix {
    pub fn new(nrows: usize, mut cols: Vec<Vec<(usize, f64)>>) -> Result<Self> {
        for col in &mut cols {
            col.sort_by_key(|e| e.0);
            if col.windows(2).any(|w| w[0].0 == w[1].0) {
                return Err(Error::Shape("duplicate row in sparse column".into()));
            }
            if col.iter().any(|e| e.0 >= nrows) {
                return Err(Error::Shape("row index out of range".into()));
            }
        }
        Ok(ColumnMatrix { nrows, cols })
    }

    pub fn from_dense(rows: &[Vec<f64>]) -> Self {
        let nrows = rows.len();
        let ncols = rows.first().map_or(0, |r| r.len());
        let cols = (0..ncols)
            .map(|j| {
                (0..nrows)
                    .filter(|&i| rows[i][j] != 0.0)
                    .map(|i| (i, rows[i][j]))
                    .collect()
            })
            .collect();
        ColumnMatrix { nrows, cols }
    }

    /// All entries on `mask`'s pattern, zero-valued.
    pub fn zeros_like(mask: &MaskMatrix) -> Self {
        ColumnMatrix {
            nrows: mask.nrows,
            cols: mask
                .cols
                .iter()
                .map(|c| c.iter().map(|&i| (i, 0.0)).collect())
                .collect(),
        }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.cols.len()
    }

    pub fn column(&self, j: usize) -> &[(usize, f64)] {
        &self.cols[j]
    }

    pub fn columns(&self) -> &[Vec<(usize, f64)>] {
        &self.cols
    }

    pub fn columns_mut(&mut self) -> &mut [Vec<(usize, f64)>] {
        &mut self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.cols[j]
            .binary_search_by_key(&i, |e| e.0)
            .map(|k| self.cols[j][k].1)
            .unwrap_or(0.0)
    }

    pub fn nnz(&self) -> usize {
        self.cols.iter().map(Vec::len).sum()
    }

    /// `y = M · x`
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.nrows];
        for (col, &xj) in self.cols.iter().zip(x) {
            if xj == 0.0 {
                continue;
            }
            for &(i, v) in col {
                y[i] += v * xj;
            }
        }
        y
    }

    /// `x = Mᵀ · y`
    pub fn tr_mul_vec(&self, y: &[f64]) -> Vec<f64> {
        self.cols
            .iter()
            .map(|col| col.iter().map(|&(i, v)| v * y[i]).sum())
            .collect()
    }

    pub fn column_sums(&self) -> Vec<f64> {
        self.cols
            .iter()
            .map(|c| c.iter().map(|e| e.1).sum())
            .collect()
    }

    /// Scales every column with a positive sum to sum to one; columns summing
    /// to zero become a unit entry at `fallback(j)` (which must be on the pattern).
    pub fn normalize_columns(&mut self, fallback: impl Fn(usize) -> usize) {
        for (j, col) in self.cols.iter_mut().enumerate() {
            let s: f64 = col.iter().map(|e| e.1).sum();
            if s > 0.0 {
                for e in col.iter_mut() {
                    e.1 /= s;
                }
            } else {
                let f = fallback(j);
                for e in col.iter_mut() {
                    e.1 = if e.0 == f { 1.0 } else { 0.0 };
                }
            }
        }
    }

    pub fn pattern(&self) -> MaskMatrix {
        MaskMatrix {
            nrows: self.nrows,
            cols: self
                .cols
                .iter()
                .map(|c| c.iter().map(|e| e.0).collect())
                .collect(),
        }
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.ncols()]; self.nrows];
        for (j, col) in self.cols.iter().enumerate() {
            for &(i, v) in col {
                d[i][j] = v;
            }
        }
        d
    }

    pub fn triplets(&self, min_abs: f64) -> Vec<(usize, usize, f64)> {
        let mut t = Vec::new();
        for (j, col) in self.cols.iter().enumerate() {
            for &(i, v) in col {
                if v.abs() >= min_abs {
                    t.push((i, j, v));
                }
            }
        }
        t.sort_by_key(|e| (e.0, e.1));
        t
    }

    /// Checks non-negativity, unit column sums and support within `mask`.
    pub fn check_stochastic(&self, mask: &MaskMatrix, tol: f64) -> std::result::Result<(), String> {
        for (j, col) in self.cols.iter().enumerate() {
            let mut s = 0.0;
            for &(i, v) in col {
                if v < 0.0 || !v.is_finite() {
                    return Err(format!("entry ({i},{j}) = {v}"));
                }
                if v != 0.0 && !mask.contains(i, j) {
                    return Err(format!("entry ({i},{j}) = {v} outside the mask"));
                }
                s += v;
            }
            if (s - 1.0).abs() > tol {
                return Err(format!("column {j} sums to {s}"));
            }
        }
        Ok(())
    }
}

/// Binary validity pattern, stored as the allowed rows of each column.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskMatrix {
    nrows: usize,
    cols: Vec<Vec<usize>>,
}

impl MaskMatrix {
    pub fn new(nrows: usize, mut cols: Vec<Vec<usize>>) -> Self {
        for c in &mut cols {
            c.sort_unstable();
            c.dedup();
        }
        MaskMatrix { nrows, cols }
    }

    pub fn full(nrows: usize, ncols: usize) -> Self {
        MaskMatrix {
            nrows,
            cols: vec![(0..nrows).collect(); ncols],
        }
    }

    pub fn contains(&self, i: usize, j: usize) -> bool {
        self.cols[j].binary_search(&i).is_ok()
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.cols.len()
    }

    pub fn column(&self, j: usize) -> &[usize] {
        &self.cols[j]
    }

    pub fn nnz(&self) -> usize {
        self.cols.iter().map(Vec::len).sum()
    }

    pub fn pairs(&self) -> Vec<(usize, usize)> {
        let mut p: Vec<_> = self
            .cols
            .iter()
            .enumerate()
            .flat_map(|(j, c)| c.iter().map(move |&i| (i, j)))
            .collect();
        p.sort_unstable();
        p
    }
}

/// Node-to-node transition counts implied by the state successor counts.
pub fn node_transition_counts(stats: &StateStats, a: &AggregationMatrix) -> ColumnMatrix {
    let n = a.node_count();
    let mut cols: Vec<BTreeMap<usize, f64>> = vec![BTreeMap::new(); n];
    for (s, succ) in stats.successors.iter().enumerate() {
        let j = a.node_of(s);
        for (&t, &c) in succ {
            *cols[j].entry(a.node_of(t)).or_default() += c as f64;
        }
    }
    ColumnMatrix {
        nrows: n,
        cols: cols.into_iter().map(|c| c.into_iter().collect()).collect(),
    }
}

/// `M[i][j] = 1` iff a training transition leads from a state of node `j` to
/// a state of node `i`. The exit node and nodes without any observed
/// transition only get a self-loop.
pub fn build_mask(stats: &StateStats, a: &AggregationMatrix) -> MaskMatrix {
    let counts = node_transition_counts(stats, a);
    mask_from_counts(&counts, a.node_of(stats.exit_index()))
}

pub(crate) fn mask_from_counts(counts: &ColumnMatrix, exit_node: usize) -> MaskMatrix {
    let cols = counts
        .cols
        .iter()
        .enumerate()
        .map(|(j, col)| {
            let rows: Vec<usize> = col.iter().filter(|e| e.1 > 0.0).map(|e| e.0).collect();
            if j == exit_node || rows.is_empty() {
                vec![j]
            } else {
                rows
            }
        })
        .collect();
    MaskMatrix::new(counts.nrows, cols)
}

/// Column-normalized counts on the mask's pattern. The exit column and
/// columns without counts become unit self-loops.
pub fn counts_to_t(counts: &ColumnMatrix, mask: &MaskMatrix, exit_node: usize) -> TransitionMatrix {
    let mut t = ColumnMatrix::zeros_like(mask);
    for (j, col) in t.cols.iter_mut().enumerate() {
        if j == exit_node {
            continue;
        }
        for e in col.iter_mut() {
            e.1 = counts.get(e.0, j);
        }
    }
    t.normalize_columns(|j| j);
    t
}

/// `nonzero(Dᵀ·Aᵀ)` taken over the structural pattern of `D`: the block bin
/// of every node, i.e. the `B+1 × N` projection stored column-wise.
pub fn block_projection(d: &DistributionMatrix, a: &AggregationMatrix) -> Result<Vec<usize>> {
    if d.rows() != a.state_count() {
        return Err(Error::Shape(format!(
            "D has {} rows but A has {} columns",
            d.rows(),
            a.state_count()
        )));
    }
    let mut bin = vec![usize::MAX; a.node_count()];
    for s in 0..d.rows() {
        let n = a.node_of(s);
        let c = d.column_of(s);
        if bin[n] == usize::MAX {
            bin[n] = c;
        } else if bin[n] != c {
            return Err(Error::Shape(format!(
                "node {n} spans blocks {} and {c}",
                bin[n]
            )));
        }
    }
    if let Some(n) = bin.iter().position(|&b| b == usize::MAX) {
        return Err(Error::Shape(format!("node {n} has no member states")));
    }
    Ok(bin)
}

#[cfg(test)]
mod tests {
    use super::super::state::extract_states;
    use super::*;

    fn seqs(v: &[&[BlockId]]) -> Vec<BlockSequence> {
        v.iter()
            .map(|s| BlockSequence::new(s.to_vec()).unwrap())
            .collect()
    }

    #[test]
    fn counts_normalize_by_column() {
        let counts =
            ColumnMatrix::new(3, vec![vec![(0, 2.0), (1, 1.0), (2, 1.0)], vec![], vec![]]).unwrap();
        let mask = mask_from_counts(&counts, 2);
        let t = counts_to_t(&counts, &mask, 2);
        assert_eq!(t.get(0, 0), 0.5);
        assert_eq!(t.get(1, 0), 0.25);
        assert_eq!(t.get(2, 0), 0.25);
        // empty column and exit become self-loops
        assert_eq!(t.get(1, 1), 1.0);
        assert_eq!(t.get(2, 2), 1.0);
        t.check_stochastic(&mask, 1e-12).unwrap();
    }

    #[test]
    fn chain_mask_under_first_order() {
        let st = extract_states(&seqs(&[&[0, 1, 2]]), 1).unwrap();
        let a = AggregationMatrix::identity(st.len());
        let m = build_mask(&st, &a);
        // states: 0, 1, 2, exit
        assert!(m.contains(1, 0));
        assert!(m.contains(2, 1));
        assert!(!m.contains(2, 0));
        assert!(!m.contains(0, 1));
        // node 2 has no observed successor (open sequence) -> self-loop only
        assert_eq!(m.column(2), &[2]);
        assert_eq!(m.column(3), &[3]);
    }

    #[test]
    fn approximate_distribution_splits_by_occupancy() {
        // block 5 occupied 10 times: 6 times coming from 1, 4 times from 2
        let mut v: Vec<Vec<BlockId>> = Vec::new();
        v.extend(std::iter::repeat_n(vec![1, 5], 6));
        v.extend(std::iter::repeat_n(vec![2, 5], 4));
        let corpus: Vec<_> = v
            .into_iter()
            .map(|s| BlockSequence::new(s).unwrap())
            .collect();
        let st = extract_states(&corpus, 2).unwrap();
        let d = DistributionMatrix::approximate(&st, 6);
        let s1 = st.index_of(&crate::hon::HOState::new(5, vec![1])).unwrap();
        let s2 = st.index_of(&crate::hon::HOState::new(5, vec![2])).unwrap();
        assert!((d.value(s1) - 0.6).abs() < 1e-15);
        assert!((d.value(s2) - 0.4).abs() < 1e-15);
        assert_eq!(d.column_of(s1), 5);
    }

    #[test]
    fn projection_round_trip_conserves_mass() {
        let st = extract_states(&seqs(&[&[0, 1, 2, -1], &[1, 2, 0], &[2, 0, 1, -1]]), 2).unwrap();
        let d = DistributionMatrix::approximate(&st, 3);
        let a = AggregationMatrix::from_labels(
            &st.states
                .iter()
                .map(|s| (s.current + 1) as usize)
                .collect::<Vec<_>>(),
        );
        let p = block_projection(&d, &a).unwrap();
        // P · A · D has unit column sums on observed columns
        for col in 0..4 {
            let mut b = vec![0.0; 4];
            b[col] = 1.0;
            let n = a.apply(&d.apply(&b));
            let mut back = [0.0; 4];
            for (node, &m) in n.iter().enumerate() {
                back[p[node]] += m;
            }
            assert!((back.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!((back[col] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn projection_rejects_mixed_blocks() {
        let st = extract_states(&seqs(&[&[0, 1]]), 1).unwrap();
        let d = DistributionMatrix::approximate(&st, 2);
        let a = AggregationMatrix::new(1, vec![0; st.len()]).unwrap();
        assert!(block_projection(&d, &a).is_err());
    }
}
