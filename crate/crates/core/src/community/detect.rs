//! Greedy map-equation minimization: node moves alternated with module merges.

use std::collections::BTreeMap;

use super::flow::FlowGraph;
use super::mapeq::{codelength_terms, plogp};

const MIN_GAIN: f64 = 1e-10;

struct Modules<'a> {
    g: &'a FlowGraph,
    markov_time: f64,
    node_entropy: f64,
    module_of: Vec<usize>,
    /// Unscaled exit flow per module.
    exit: Vec<f64>,
    flow: Vec<f64>,
    size: Vec<usize>,
    sum_exit: f64,
    sum_plogp_q: f64,
    sum_plogp_qp: f64,
}

impl<'a> Modules<'a> {
    fn singletons(g: &'a FlowGraph, markov_time: f64) -> Self {
        let n = g.len();
        let exit: Vec<f64> = g
            .out_links
            .iter()
            .map(|l| l.iter().map(|e| e.1).sum())
            .collect();
        let mut m = Modules {
            g,
            markov_time,
            node_entropy: g.node_flow.iter().map(|&p| plogp(p)).sum(),
            module_of: (0..n).collect(),
            exit,
            flow: g.node_flow.clone(),
            size: vec![1; n],
            sum_exit: 0.0,
            sum_plogp_q: 0.0,
            sum_plogp_qp: 0.0,
        };
        m.refresh();
        m
    }

    fn refresh(&mut self) {
        let t = self.markov_time;
        self.sum_exit = self.exit.iter().sum();
        self.sum_plogp_q = self.exit.iter().map(|&e| plogp(e * t)).sum();
        self.sum_plogp_qp = self
            .exit
            .iter()
            .zip(&self.flow)
            .map(|(&e, &p)| plogp(e * t + p))
            .sum();
    }

    fn codelength(&self) -> f64 {
        codelength_terms(&self.exit, &self.flow, self.markov_time, self.node_entropy)
    }

    /// Codelength change when the modules in `old` take the stats in `new`.
    fn delta(&self, old: &[(f64, f64)], new: &[(f64, f64)]) -> f64 {
        let t = self.markov_time;
        let (mut sum_exit, mut sq, mut sqp) = (self.sum_exit, self.sum_plogp_q, self.sum_plogp_qp);
        for &(e, p) in old {
            sum_exit -= e;
            sq -= plogp(e * t);
            sqp -= plogp(e * t + p);
        }
        for &(e, p) in new {
            sum_exit += e;
            sq += plogp(e * t);
            sqp += plogp(e * t + p);
        }
        let before = plogp(self.sum_exit * t) - 2.0 * self.sum_plogp_q + self.sum_plogp_qp;
        let after = plogp(sum_exit * t) - 2.0 * sq + sqp;
        after - before
    }

    fn set(&mut self, module: usize, exit: f64, flow: f64) {
        let t = self.markov_time;
        self.sum_exit += exit - self.exit[module];
        self.sum_plogp_q += plogp(exit * t) - plogp(self.exit[module] * t);
        self.sum_plogp_qp +=
            plogp(exit * t + flow) - plogp(self.exit[module] * t + self.flow[module]);
        self.exit[module] = exit;
        self.flow[module] = flow;
    }

    /// Moves single nodes to neighboring (or fresh) modules while that
    /// shortens the code. Returns whether anything moved.
    fn local_moves(&mut self) -> bool {
        let g = self.g;
        let mut any = false;
        loop {
            let mut moved = false;
            for a in 0..g.len() {
                let from = self.module_of[a];
                let out_a: f64 = g.out_links[a].iter().map(|e| e.1).sum();
                // (flow a -> module, flow module -> a)
                let mut link: BTreeMap<usize, (f64, f64)> = BTreeMap::new();
                for &(b, f) in &g.out_links[a] {
                    link.entry(self.module_of[b]).or_default().0 += f;
                }
                for &(b, f) in &g.in_links[a] {
                    link.entry(self.module_of[b]).or_default().1 += f;
                }
                let (to_from, from_from) = link.get(&from).copied().unwrap_or_default();
                let p = g.node_flow[a];
                let from_exit = self.exit[from] - (out_a - to_from) + from_from;
                let from_flow = self.flow[from] - p;
                let old_from = (self.exit[from], self.flow[from]);

                let mut best: Option<(f64, usize, f64)> = None;
                let mut consider =
                    |target: usize, exit_t: f64, flow_t: f64, tf: (f64, f64), m: &Self| {
                        let new_exit = exit_t + (out_a - tf.0) - tf.1;
                        let d = m.delta(
                            &[old_from, (exit_t, flow_t)],
                            &[(from_exit, from_flow), (new_exit, flow_t + p)],
                        );
                        if d < -MIN_GAIN && best.is_none_or(|(bd, _, _)| d < bd) {
                            best = Some((d, target, new_exit));
                        }
                    };
                for (&target, &tf) in &link {
                    if target != from {
                        consider(target, self.exit[target], self.flow[target], tf, self);
                    }
                }
                if self.size[from] > 1 {
                    if let Some(empty) = self.size.iter().position(|&s| s == 0) {
                        consider(empty, 0.0, 0.0, (0.0, 0.0), self);
                    }
                }
                if let Some((_, target, new_exit)) = best {
                    let target_flow = self.flow[target] + p;
                    self.set(from, from_exit.max(0.0), from_flow.max(0.0));
                    self.set(target, new_exit.max(0.0), target_flow);
                    self.size[from] -= 1;
                    self.size[target] += 1;
                    self.module_of[a] = target;
                    moved = true;
                }
            }
            if !moved {
                return any;
            }
            any = true;
        }
    }

    /// Merges the best pair of linked modules while that shortens the code.
    fn merges(&mut self) -> bool {
        let g = self.g;
        let mut any = false;
        loop {
            let mut between: BTreeMap<(usize, usize), f64> = BTreeMap::new();
            for (a, links) in g.out_links.iter().enumerate() {
                for &(b, f) in links {
                    let (ma, mb) = (self.module_of[a], self.module_of[b]);
                    if ma != mb {
                        *between.entry((ma.min(mb), ma.max(mb))).or_default() += f;
                    }
                }
            }
            let mut best: Option<(f64, usize, usize, f64)> = None;
            for (&(x, y), &f) in &between {
                let exit = self.exit[x] + self.exit[y] - f;
                let d = self.delta(
                    &[(self.exit[x], self.flow[x]), (self.exit[y], self.flow[y])],
                    &[(exit, self.flow[x] + self.flow[y]), (0.0, 0.0)],
                );
                if d < -MIN_GAIN && best.is_none_or(|(bd, ..)| d < bd) {
                    best = Some((d, x, y, exit));
                }
            }
            let Some((_, x, y, exit)) = best else {
                return any;
            };
            let flow = self.flow[x] + self.flow[y];
            self.set(x, exit.max(0.0), flow);
            self.set(y, 0.0, 0.0);
            self.size[x] += self.size[y];
            self.size[y] = 0;
            for m in self.module_of.iter_mut() {
                if *m == y {
                    *m = x;
                }
            }
            any = true;
        }
    }
}

/// Partitions a flow graph by greedily minimizing the map equation. Module
/// ids in the result are numbered by first appearance.
pub fn detect_communities(g: &FlowGraph, markov_time: f64) -> Vec<usize> {
    if g.is_empty() {
        return Vec::new();
    }
    let mut m = Modules::singletons(g, markov_time);
    loop {
        let moved = m.local_moves();
        let merged = m.merges();
        if !moved && !merged {
            break;
        }
        // keep the running sums from drifting
        m.refresh();
    }
    debug_assert!(m.codelength().is_finite());
    compact(&m.module_of)
}

pub(crate) fn compact(labels: &[usize]) -> Vec<usize> {
    let mut map = BTreeMap::new();
    labels
        .iter()
        .map(|l| {
            let next = map.len();
            *map.entry(*l).or_insert(next)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::super::mapeq::{brute_force_minimum, map_equation};
    use super::*;
    use crate::hon::ColumnMatrix;

    fn graph(rows: &[Vec<f64>]) -> FlowGraph {
        let t = ColumnMatrix::from_dense(rows);
        let pi = super::super::flow::stationary_flow(&t, None, 0.15).unwrap();
        FlowGraph::from_transitions(&t, pi)
    }

    #[test]
    fn two_components_are_separated() {
        let g = graph(&[
            vec![0.0, 0.5, 0.5, 0.0, 0.0, 0.0],
            vec![0.5, 0.0, 0.5, 0.0, 0.0, 0.0],
            vec![0.5, 0.5, 0.0, 0.0, 0.0, 0.0],
            vec![0.0, 0.0, 0.0, 0.0, 0.5, 0.5],
            vec![0.0, 0.0, 0.0, 0.5, 0.0, 0.5],
            vec![0.0, 0.0, 0.0, 0.5, 0.5, 0.0],
        ]);
        assert_eq!(detect_communities(&g, 1.0), vec![0, 0, 0, 1, 1, 1]);
    }

    #[test]
    fn complete_graph_is_one_module() {
        let third = 1.0 / 3.0;
        let rows: Vec<Vec<f64>> = (0..4)
            .map(|i| (0..4).map(|j| if i == j { 0.0 } else { third }).collect())
            .collect();
        let g = graph(&rows);
        assert_eq!(detect_communities(&g, 1.0), vec![0, 0, 0, 0]);
        let (best, _) = brute_force_minimum(&g, 1.0);
        assert!((map_equation(&g, &[0, 0, 0, 0], 1.0) - best).abs() < 1e-12);
    }
}
