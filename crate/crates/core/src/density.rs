//! Multi-step block density estimation error against traced ground truth.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flowfield::BlockSequence;
use crate::hon::{DistributionMatrix, Network};
use crate::optim::{estimate_blocks, kld_term, DensitySeries};

/// How the evaluated particles' initial counts are split over states.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Assignment {
    /// The network's own `D`.
    #[default]
    Approximate,
    /// `D` rebuilt from the evaluated particles' known histories.
    Exact,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensityReport {
    pub dataset: String,
    pub network: String,
    pub size: usize,
    pub particles: usize,
    /// Per-particle divergence at steps `1..=k`.
    pub per_step: Vec<f64>,
    pub total: f64,
    pub mean: f64,
}

/// Block counts of the test particles at steps `0..=k`.
pub fn ground_truth_series(test: &[BlockSequence], block_count: usize, k: usize) -> DensitySeries {
    DensitySeries::from_sequences(test, block_count, k)
}

/// Propagates the test particles' initial block counts through the network
/// for `k` steps and compares against where they actually are.
pub fn density_error(
    net: &Network,
    test: &[BlockSequence],
    k: usize,
    epsilon: f64,
    assignment: Assignment,
    dataset: &str,
) -> Result<DensityReport> {
    if test.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    if let Some(bad) = test
        .iter()
        .flat_map(|s| s.visits())
        .find(|&&b| b as usize >= net.block_count)
    {
        return Err(Error::Shape(format!(
            "block {bad} outside the network's {} blocks",
            net.block_count
        )));
    }
    let truth = ground_truth_series(test, net.block_count, k);
    let n = truth.particles();
    let est = match assignment {
        Assignment::Approximate => estimate_blocks(net, truth.initial(), k)?,
        Assignment::Exact => {
            let idx = net.state_index();
            let mut exact = net.clone();
            exact.d =
                DistributionMatrix::exact(&net.states, &|v, t| idx.lookup(v, t), &net.d, test);
            estimate_blocks(&exact, truth.initial(), k)?
        }
    };
    let per_step: Vec<f64> = (1..=k)
        .map(|t| kld_term(&truth.counts[t], &est[t - 1], epsilon) / n)
        .collect();
    let total = per_step.iter().sum();
    Ok(DensityReport {
        dataset: dataset.to_string(),
        network: net.label(),
        size: net.node_count(),
        particles: test.len(),
        mean: total / k as f64,
        per_step,
        total,
    })
}

/// One `network,step,error` row per network and step.
pub fn write_csv(path: &Path, reports: &[DensityReport]) -> Result<()> {
    let mut out = Vec::new();
    writeln!(out, "network,step,error")?;
    for r in reports {
        for (i, e) in r.per_step.iter().enumerate() {
            writeln!(out, "{},{},{}", r.network, i + 1, e)?;
        }
    }
    std::fs::write(path, out).map_err(|e| Error::file(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hon::build_fon;

    fn seqs(v: &[&[i32]]) -> Vec<BlockSequence> {
        v.iter()
            .map(|s| BlockSequence::new(s.to_vec()).unwrap())
            .collect()
    }

    #[test]
    fn deterministic_path_is_reproduced() {
        let path: &[i32] = &[0, 1, 2, -1];
        let corpus = seqs(&[path; 5]);
        let net = build_fon(&corpus, 3).unwrap();
        let r = density_error(&net, &corpus, 8, 1e-8, Assignment::Approximate, "line").unwrap();
        assert!(r.total < 1e-6, "{}", r.total);
        assert_eq!(r.per_step.len(), 8);
        assert!((r.mean * 8.0 - r.total).abs() < 1e-15);
    }

    #[test]
    fn errors_are_non_negative_and_sum() {
        let corpus = seqs(&[&[0, 1, -1], &[0, 2, -1], &[1, 2, 0, -1]]);
        let net = build_fon(&corpus, 3).unwrap();
        let r = density_error(&net, &corpus, 4, 1e-8, Assignment::Approximate, "mix").unwrap();
        assert!(r.per_step.iter().all(|&e| e >= -1e-12));
        assert!((r.per_step.iter().sum::<f64>() - r.total).abs() < 1e-15);
    }

    #[test]
    fn foreign_blocks_are_rejected() {
        let net = build_fon(&seqs(&[&[0, 1]]), 2).unwrap();
        assert!(density_error(&net, &seqs(&[&[0, 5]]), 2, 1e-8, Assignment::Exact, "x").is_err());
    }
}
