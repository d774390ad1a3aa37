//! Two-level map equation codelength.

use super::flow::FlowGraph;

#[inline]
pub fn plogp(x: f64) -> f64 {
    if x > 0.0 {
        x * x.log2()
    } else {
        0.0
    }
}

/// Codelength in bits of `assignment` (module per node). Module exit flows
/// are multiplied by `markov_time`, so longer times make leaving a module
/// costlier and favor fewer, larger modules.
pub fn map_equation(g: &FlowGraph, assignment: &[usize], markov_time: f64) -> f64 {
    let m = assignment.iter().max().map_or(0, |&x| x + 1);
    let mut exit = vec![0.0; m];
    let mut flow = vec![0.0; m];
    for (a, links) in g.out_links.iter().enumerate() {
        flow[assignment[a]] += g.node_flow[a];
        for &(b, f) in links {
            if assignment[a] != assignment[b] {
                exit[assignment[a]] += f;
            }
        }
    }
    let node_entropy: f64 = g.node_flow.iter().map(|&p| plogp(p)).sum();
    codelength_terms(&exit, &flow, markov_time, node_entropy)
}

pub(crate) fn codelength_terms(
    exit: &[f64],
    flow: &[f64],
    markov_time: f64,
    node_entropy: f64,
) -> f64 {
    let mut q = 0.0;
    let mut sum_q = 0.0;
    let mut sum_qp = 0.0;
    for (&e, &p) in exit.iter().zip(flow) {
        let qm = e * markov_time;
        q += qm;
        sum_q += plogp(qm);
        sum_qp += plogp(qm + p);
    }
    plogp(q) - 2.0 * sum_q - node_entropy + sum_qp
}

/// Calls `f` with every set partition of `n` items, as restricted growth
/// strings.
pub fn for_each_partition(n: usize, mut f: impl FnMut(&[usize])) {
    let mut rgs = vec![0usize; n];
    loop {
        f(&rgs);
        let mut i = n;
        loop {
            if i <= 1 {
                return;
            }
            i -= 1;
            let max_prefix = rgs[..i].iter().copied().max().unwrap_or(0);
            if rgs[i] <= max_prefix {
                rgs[i] += 1;
                for x in rgs[i + 1..].iter_mut() {
                    *x = 0;
                }
                break;
            }
        }
    }
}

/// Minimum codelength over every partition of a small graph, with one
/// optimal assignment.
pub fn brute_force_minimum(g: &FlowGraph, markov_time: f64) -> (f64, Vec<usize>) {
    assert!(
        g.len() <= 10,
        "exhaustive search is only meant for tiny graphs"
    );
    let mut best = (f64::INFINITY, vec![0; g.len()]);
    for_each_partition(g.len(), |rgs| {
        let l = map_equation(g, rgs, markov_time);
        if l < best.0 - 1e-12 {
            best = (l, rgs.to_vec());
        }
    });
    best
}
