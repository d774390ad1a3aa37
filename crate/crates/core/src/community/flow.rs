use crate::error::{Error, Result};
use crate::hon::ColumnMatrix;

/// Default teleportation probability.
pub const DEFAULT_TELEPORT: f64 = 0.15;
const MAX_ITERATIONS: usize = 10_000;
const TOLERANCE: f64 = 1e-10;

/// A directed graph with node visit rates and link flows, self-links removed.
#[derive(Clone, Debug)]
pub struct FlowGraph {
    pub node_flow: Vec<f64>,
    pub out_links: Vec<Vec<(usize, f64)>>,
    pub in_links: Vec<Vec<(usize, f64)>>,
}

impl FlowGraph {
    pub fn len(&self) -> usize {
        self.node_flow.len()
    }

    pub fn is_empty(&self) -> bool {
        self.node_flow.is_empty()
    }

    /// Builds link flows `f(j → i) = π_j T_ij` from a column-stochastic
    /// matrix and its visit rates. Self-links carry no codelength and are dropped.
    pub fn from_transitions(t: &ColumnMatrix, visits: Vec<f64>) -> Self {
        let n = visits.len();
        let mut out_links = vec![Vec::new(); n];
        let mut in_links = vec![Vec::new(); n];
        for (j, col) in t.columns().iter().enumerate() {
            for &(i, p) in col {
                let f = visits[j] * p;
                if i != j && f > 0.0 {
                    out_links[j].push((i, f));
                    in_links[i].push((j, f));
                }
            }
        }
        FlowGraph {
            node_flow: visits,
            out_links,
            in_links,
        }
    }
}

/// Visit rates of a random walk on `t` that teleports to a uniformly chosen
/// node with probability `tau` at every step and whenever it would enter
/// `absorbing` (which is removed from the result). Returned rates sum to one.
pub fn stationary_flow(t: &ColumnMatrix, absorbing: Option<usize>, tau: f64) -> Result<Vec<f64>> {
    let n_all = t.ncols();
    let keep: Vec<usize> = (0..n_all).filter(|&j| Some(j) != absorbing).collect();
    let n = keep.len();
    if n == 0 {
        return Ok(Vec::new());
    }
    let mut pos = vec![usize::MAX; n_all];
    for (k, &j) in keep.iter().enumerate() {
        pos[j] = k;
    }
    let u = 1.0 / n as f64;
    let mut pi = vec![u; n];
    for _ in 0..MAX_ITERATIONS {
        let mut next = vec![0.0; n];
        let mut dangling = 0.0;
        for (k, &j) in keep.iter().enumerate() {
            let mut kept = 0.0;
            for &(i, p) in t.column(j) {
                if pos[i] != usize::MAX {
                    next[pos[i]] += (1.0 - tau) * p * pi[k];
                    kept += p;
                }
            }
            dangling += (1.0 - kept).max(0.0) * pi[k];
        }
        let spread = (1.0 - tau) * dangling + tau * pi.iter().sum::<f64>();
        for x in next.iter_mut() {
            *x += spread * u;
        }
        let total: f64 = next.iter().sum();
        for x in next.iter_mut() {
            *x /= total;
        }
        let diff: f64 = next.iter().zip(&pi).map(|(a, b)| (a - b).abs()).sum();
        pi = next;
        if diff < TOLERANCE {
            return Ok(pi);
        }
    }
    Err(Error::NoConvergence(MAX_ITERATIONS))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_gives_uniform() {
        let t = ColumnMatrix::from_dense(&[
            vec![1.0, 0.0, 0.0],
            vec![0.0, 1.0, 0.0],
            vec![0.0, 0.0, 1.0],
        ]);
        let pi = stationary_flow(&t, None, 0.15).unwrap();
        assert!(pi.iter().all(|&p| (p - 1.0 / 3.0).abs() < 1e-9));
    }

    #[test]
    fn two_cycle_is_balanced() {
        let t = ColumnMatrix::from_dense(&[vec![0.0, 1.0], vec![1.0, 0.0]]);
        let pi = stationary_flow(&t, None, 0.0).unwrap();
        assert!((pi[0] - 0.5).abs() < 1e-9 && (pi[1] - 0.5).abs() < 1e-9);
    }

    #[test]
    fn absorbing_mass_is_redistributed() {
        // 0 -> 1 -> exit(2)
        let t = ColumnMatrix::from_dense(&[
            vec![0.0, 0.0, 0.0],
            vec![1.0, 0.0, 0.0],
            vec![0.0, 1.0, 1.0],
        ]);
        let pi = stationary_flow(&t, Some(2), 0.15).unwrap();
        assert_eq!(pi.len(), 2);
        assert!((pi.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        // every walk visits 0 then 1 unless it teleports: rates are equal up to teleports landing on 1
        assert!(pi[1] > pi[0]);
    }
}
