use serde::{Deserialize, Serialize};

use crate::community::Partition;
use crate::error::{Error, Result};
use crate::flowfield::{block_path, BlockGrid, BlockId, Streamline, Vec3};
use crate::hon::Network;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UiNode {
    pub id: usize,
    pub block: BlockId,
    pub order: usize,
    /// Training transitions out of the node's states.
    pub size: u64,
    pub community: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UiEdge {
    pub src: usize,
    pub dst: usize,
    pub probability: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UiStreamline {
    pub id: usize,
    pub points: Vec<Vec3>,
    /// Node of segment `i`, which runs from `points[i]` to `points[i + 1]`.
    pub labels: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UiBundle {
    pub network: String,
    pub block_count: usize,
    pub grid: BlockGrid,
    pub nodes: Vec<UiNode>,
    pub edges: Vec<UiEdge>,
    pub streamlines: Vec<UiStreamline>,
    pub partition: Option<Partition>,
}

/// Indices of at most `max` points spread evenly over `0..n`, always keeping
/// both ends.
pub fn decimate(n: usize, max: usize) -> Vec<usize> {
    if n <= max {
        return (0..n).collect();
    }
    let mut idx: Vec<usize> = (0..max)
        .map(|i| ((i as f64) * (n - 1) as f64 / (max - 1) as f64).round() as usize)
        .collect();
    idx.dedup();
    idx
}

/// Points inside the grid, decimated, with every segment labelled by the
/// node of the state its start point occupies given the particle's history.
pub fn label_streamline(
    id: usize,
    line: &Streamline,
    grid: &BlockGrid,
    net: &Network,
    max_points: usize,
) -> Result<UiStreamline> {
    let (seq, index) = block_path(line, grid);
    let lookup = net.state_index();
    let visits = seq.blocks();
    let keep = decimate(index.len(), max_points);
    let mut labels = Vec::with_capacity(keep.len().saturating_sub(1));
    for &p in keep.iter().take(keep.len().saturating_sub(1)) {
        let state = lookup.lookup_or_block(visits, index[p]).ok_or_else(|| {
            Error::Shape(format!(
                "streamline {id} enters block {} which the network lacks",
                visits[index[p]]
            ))
        })?;
        labels.push(net.a.node_of(state));
    }
    Ok(UiStreamline {
        id,
        points: keep.iter().map(|&p| line.points[p]).collect(),
        labels,
    })
}

/// Assembles the exploration bundle. The exit node is left out, as are
/// unsupported nodes no streamline passes through; edges touching omitted
/// nodes are dropped.
pub fn ui_bundle(
    net: &Network,
    grid: BlockGrid,
    streamlines: Vec<UiStreamline>,
    partition: Option<Partition>,
) -> Result<UiBundle> {
    if let Some(p) = &partition {
        p.check(net)?;
    }
    let exit = net.exit_node();
    let records = net.to_bundle().nodes;
    let mut used = vec![false; net.node_count()];
    for s in &streamlines {
        for &l in &s.labels {
            used[l] = true;
        }
    }
    let keep: Vec<bool> = records
        .iter()
        .map(|r| r.id != exit && (r.support > 0 || used[r.id]))
        .collect();
    let nodes = records
        .iter()
        .filter(|r| keep[r.id])
        .map(|r| UiNode {
            id: r.id,
            block: r.block,
            order: r.order,
            size: r.support,
            community: partition.as_ref().and_then(|p| p.community_of(r.id)),
        })
        .collect();
    let edges = net
        .t
        .triplets(1e-12)
        .into_iter()
        .filter(|&(dst, src, _)| keep[src] && keep[dst])
        .map(|(dst, src, probability)| UiEdge {
            src,
            dst,
            probability,
        })
        .collect();
    Ok(UiBundle {
        network: net.label(),
        block_count: net.block_count,
        grid,
        nodes,
        edges,
        streamlines,
        partition,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flowfield::{to_block_sequence, Bounds, Termination};
    use crate::hon::build_fon;

    #[test]
    fn decimation_keeps_ends() {
        assert_eq!(decimate(3, 500), vec![0, 1, 2]);
        let d = decimate(2001, 500);
        assert_eq!(d.len(), 500);
        assert_eq!((d[0], d[499]), (0, 2000));
        assert!(d.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn labels_follow_blocks() {
        let grid =
            BlockGrid::new(Bounds::new([0.0; 3], [3.0, 1.0, 1.0]).unwrap(), [3, 1, 1]).unwrap();
        let line = Streamline {
            points: (0..30).map(|i| [0.05 + 0.1 * i as f64, 0.5, 0.5]).collect(),
            termination: Termination::OutOfBounds,
        };
        let seq = to_block_sequence(&line, &grid);
        let net = build_fon(&[seq.clone(), seq], 3).unwrap();
        let s = label_streamline(0, &line, &grid, &net, 7).unwrap();
        assert_eq!(s.points.len(), 7);
        assert_eq!(s.labels.len(), 6);
        let nodes = net.nodes();
        for (p, &l) in s.points.iter().zip(&s.labels) {
            assert_eq!(nodes[l].current, grid.block_of(*p));
        }
        let b = ui_bundle(&net, grid, vec![s], None).unwrap();
        assert_eq!(b.nodes.len(), 3);
        let ids: Vec<usize> = b.nodes.iter().map(|n| n.id).collect();
        assert!(b
            .edges
            .iter()
            .all(|e| ids.contains(&e.src) && ids.contains(&e.dst)));
    }
}
