//! Partitions of a network, their block sizes and visit counts, and the
//! resolution sweep.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::detect::detect_communities;
use super::flow::{stationary_flow, FlowGraph};
use crate::error::{Error, Result};
use crate::flowfield::{BlockSequence, TERMINAL};
use crate::hon::Network;

/// Community of every network node. The exit node is kept in a community
/// of its own, which is excluded from size statistics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Partition {
    pub markov_time: f64,
    pub assignment: BTreeMap<usize, usize>,
}

impl Partition {
    pub fn community_of(&self, node: usize) -> Option<usize> {
        self.assignment.get(&node).copied()
    }

    pub fn community_count(&self) -> usize {
        self.assignment.values().collect::<BTreeSet<_>>().len()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text + "\n").map_err(|e| Error::file(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    /// Checks that every node of `net` has a community.
    pub fn check(&self, net: &Network) -> Result<()> {
        if let Some(n) = (0..net.node_count()).find(|n| !self.assignment.contains_key(n)) {
            return Err(Error::Shape(format!(
                "partition leaves node {n} unassigned"
            )));
        }
        if let Some(n) = self.assignment.keys().find(|&&n| n >= net.node_count()) {
            return Err(Error::Shape(format!("partition names unknown node {n}")));
        }
        Ok(())
    }
}

/// The network's transitions as a flow graph without the exit node.
pub struct CommunityGraph {
    pub graph: FlowGraph,
    /// Network node id of every graph node.
    pub nodes: Vec<usize>,
    pub exit: usize,
}

impl CommunityGraph {
    pub fn new(net: &Network, teleport: f64) -> Result<Self> {
        let exit = net.exit_node();
        let visits = stationary_flow(&net.t, Some(exit), teleport)?;
        let nodes: Vec<usize> = (0..net.node_count()).filter(|&n| n != exit).collect();
        let mut pos = vec![usize::MAX; net.node_count()];
        for (k, &n) in nodes.iter().enumerate() {
            pos[n] = k;
        }
        let cols = nodes
            .iter()
            .map(|&j| {
                net.t
                    .column(j)
                    .iter()
                    .filter(|e| pos[e.0] != usize::MAX)
                    .map(|&(i, p)| (pos[i], p))
                    .collect()
            })
            .collect();
        let t = crate::hon::ColumnMatrix::new(nodes.len(), cols)?;
        Ok(CommunityGraph {
            graph: FlowGraph::from_transitions(&t, visits),
            nodes,
            exit,
        })
    }

    pub fn detect(&self, markov_time: f64) -> Partition {
        let labels = detect_communities(&self.graph, markov_time);
        let exit_community = labels.iter().max().map_or(0, |m| m + 1);
        let mut assignment: BTreeMap<usize, usize> = self
            .nodes
            .iter()
            .zip(&labels)
            .map(|(&n, &c)| (n, c))
            .collect();
        assignment.insert(self.exit, exit_community);
        Partition {
            markov_time,
            assignment,
        }
    }
}

/// Mean number of distinct blocks per community; a block counts once for
/// every community holding at least one of its nodes.
pub fn average_community_size(net: &Network, partition: &Partition) -> f64 {
    let exit = net.exit_node();
    let exit_community = partition.community_of(exit);
    let mut blocks: BTreeMap<usize, BTreeSet<i32>> = BTreeMap::new();
    for node in net.nodes() {
        if node.id == exit {
            continue;
        }
        if let Some(c) = partition.community_of(node.id) {
            if Some(c) != exit_community {
                blocks.entry(c).or_default().insert(node.current);
            }
        }
    }
    if blocks.is_empty() {
        return 0.0;
    }
    blocks.values().map(|b| b.len() as f64).sum::<f64>() / blocks.len() as f64
}

/// Average over particles of the number of community changes along the
/// particle's node trajectory, plus one. Re-entering a community counts.
pub fn mean_community_visits(net: &Network, partition: &Partition, seqs: &[BlockSequence]) -> f64 {
    let idx = net.state_index();
    let mut total = 0.0;
    let mut particles = 0usize;
    for seq in seqs {
        let v = seq.visits();
        let mut count = 0usize;
        let mut last = None;
        for t in 0..v.len() {
            if v[t] == TERMINAL {
                continue;
            }
            let Some(state) = idx.lookup_or_block(v, t) else {
                continue;
            };
            let community = partition.community_of(net.a.node_of(state));
            if community.is_some() && community != last {
                count += 1;
                last = community;
            }
        }
        if count > 0 {
            total += count as f64;
            particles += 1;
        }
    }
    if particles == 0 {
        0.0
    } else {
        total / particles as f64
    }
}

/// `lo, lo + step, ..., hi`.
pub fn markov_times(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let n = ((hi - lo) / step).round() as usize;
    (0..=n).map(|i| lo + step * i as f64).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub markov_time: f64,
    pub communities: usize,
    pub avg_size_blocks: f64,
    pub mean_visits: f64,
    pub pareto: bool,
    /// Visits measured on held-out particles, for points on the front.
    pub test_mean_visits: Option<f64>,
}

/// Marks points not dominated in (smaller size, fewer visits).
pub fn mark_pareto(points: &mut [SweepPoint]) {
    let flags: Vec<bool> = points
        .iter()
        .map(|p| {
            !points.iter().any(|q| {
                q.avg_size_blocks <= p.avg_size_blocks
                    && q.mean_visits <= p.mean_visits
                    && (q.avg_size_blocks < p.avg_size_blocks || q.mean_visits < p.mean_visits)
            })
        })
        .collect();
    for (p, f) in points.iter_mut().zip(flags) {
        p.pareto = f;
    }
}

/// Detects communities at every Markov time, scores them on `sample`,
/// marks the Pareto front and scores front points on `test`.
pub fn sweep_markov_time(
    net: &Network,
    times: &[f64],
    teleport: f64,
    sample: &[BlockSequence],
    test: &[BlockSequence],
) -> Result<Vec<(SweepPoint, Partition)>> {
    if sample.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let graph = CommunityGraph::new(net, teleport)?;
    let mut results: Vec<(SweepPoint, Partition)> = times
        .par_iter()
        .map(|&mt| {
            let partition = graph.detect(mt);
            let point = SweepPoint {
                markov_time: mt,
                communities: partition.community_count() - 1,
                avg_size_blocks: average_community_size(net, &partition),
                mean_visits: mean_community_visits(net, &partition, sample),
                pareto: false,
                test_mean_visits: None,
            };
            (point, partition)
        })
        .collect();
    let mut points: Vec<SweepPoint> = results.iter().map(|r| r.0.clone()).collect();
    mark_pareto(&mut points);
    for ((slot, partition), point) in results.iter_mut().zip(points) {
        *slot = point;
        if slot.pareto && !test.is_empty() {
            slot.test_mean_visits = Some(mean_community_visits(net, partition, test));
        }
    }
    Ok(results)
}

pub fn write_sweep_csv(path: &Path, points: &[SweepPoint]) -> Result<()> {
    let mut out = Vec::new();
    writeln!(
        out,
        "markov_time,n_communities,avg_size_blocks,mean_visits,pareto,test_mean_visits"
    )?;
    for p in points {
        let test = p
            .test_mean_visits
            .map(|v| v.to_string())
            .unwrap_or_default();
        writeln!(
            out,
            "{:.1},{},{},{},{},{}",
            p.markov_time, p.communities, p.avg_size_blocks, p.mean_visits, p.pareto, test
        )?;
    }
    std::fs::write(path, out).map_err(|e| Error::file(path, e))
}
