//! Block-density propagation, the density loss and its gradients.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flowfield::BlockSequence;
use crate::hon::{block_bin, ColumnMatrix, Network};

/// Particle counts per block bin (blocks then exit) at steps `0..=k`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensitySeries {
    pub counts: Vec<Vec<f64>>,
}

impl DensitySeries {
    /// Counts the `t`-th entry of every sequence; particles past the end of
    /// their sequence are counted in the exit bin.
    pub fn from_sequences(seqs: &[BlockSequence], block_count: usize, k: usize) -> Self {
        let mut counts = vec![vec![0.0; block_count + 1]; k + 1];
        for seq in seqs {
            let v = seq.blocks();
            for (t, row) in counts.iter_mut().enumerate() {
                let bin = v.get(t).map_or(block_count, |&b| block_bin(b, block_count));
                row[bin] += 1.0;
            }
        }
        DensitySeries { counts }
    }

    pub fn steps(&self) -> usize {
        self.counts.len().saturating_sub(1)
    }

    pub fn bins(&self) -> usize {
        self.counts.first().map_or(0, Vec::len)
    }

    pub fn initial(&self) -> &[f64] {
        &self.counts[0]
    }

    pub fn particles(&self) -> f64 {
        self.counts.first().map_or(0.0, |c| c.iter().sum())
    }

    /// The same series divided by the particle count.
    pub fn normalized(&self) -> Self {
        let n = self.particles();
        let scale = if n > 0.0 { 1.0 / n } else { 1.0 };
        DensitySeries {
            counts: self
                .counts
                .iter()
                .map(|c| c.iter().map(|v| v * scale).collect())
                .collect(),
        }
    }
}

/// `Σ_i b_i log(b_i / (b̂_i + ε))` with `0 log 0 = 0`.
pub fn kld_term(b: &[f64], est: &[f64], eps: f64) -> f64 {
    b.iter()
        .zip(est)
        .filter(|(&bi, _)| bi > 0.0)
        .map(|(&bi, &ei)| bi * (bi / (ei + eps)).ln())
        .sum()
}

/// Sums node values into block bins.
pub fn project(x: &[f64], proj: &[usize], bins: usize) -> Vec<f64> {
    let mut b = vec![0.0; bins];
    for (&v, &p) in x.iter().zip(proj) {
        b[p] += v;
    }
    b
}

/// Node vectors `x_0..=x_k` with `x_1 = first · x0` and `x_t = T · x_{t-1}`.
pub fn forward(first: &ColumnMatrix, x0: &[f64], t: &ColumnMatrix, k: usize) -> Vec<Vec<f64>> {
    let mut xs = Vec::with_capacity(k + 1);
    xs.push(x0.to_vec());
    if k >= 1 {
        xs.push(first.mul_vec(x0));
    }
    for step in 2..=k {
        let next = t.mul_vec(&xs[step - 1]);
        xs.push(next);
    }
    xs
}

/// Estimated block counts `b̂(t)` for `t = 1..=k` from initial counts `b0`.
pub fn estimate_blocks(net: &Network, b0: &[f64], k: usize) -> Result<Vec<Vec<f64>>> {
    if b0.len() != net.block_count + 1 {
        return Err(Error::Shape(format!(
            "initial counts have {} bins, network expects {}",
            b0.len(),
            net.block_count + 1
        )));
    }
    let x0 = net.a.apply(&net.d.apply(b0));
    let proj = net.projection();
    let xs = forward(&net.t, &x0, &net.t, k);
    Ok(xs[1..]
        .iter()
        .map(|x| project(x, &proj, b0.len()))
        .collect())
}

/// Column-sum penalty `w Σ_j (Σ_i T_ij − 1)²`.
pub fn column_penalty(m: &ColumnMatrix, weight: f64) -> f64 {
    weight
        * m.column_sums()
            .into_iter()
            .map(|s| (s - 1.0) * (s - 1.0))
            .sum::<f64>()
}

/// Which matrix the gradient is taken with respect to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Target {
    /// `T` itself, used at every step.
    Nodes,
    /// A first-hop matrix from states; `T` is held fixed afterwards.
    States,
}

/// A density-fitting problem: fixed layers, a series and a horizon.
pub struct Objective<'a> {
    /// Block bin of every node.
    pub proj: &'a [usize],
    /// Starting vector: node counts for [`Target::Nodes`], state counts for
    /// [`Target::States`].
    pub start: Vec<f64>,
    pub series: &'a DensitySeries,
    pub horizon: usize,
    pub epsilon: f64,
    pub penalty: f64,
}

impl<'a> Objective<'a> {
    fn horizon(&self) -> usize {
        self.horizon.min(self.series.steps())
    }

    fn data_loss(&self, xs: &[Vec<f64>]) -> f64 {
        let bins = self.series.bins();
        (1..xs.len())
            .map(|t| {
                kld_term(
                    &self.series.counts[t],
                    &project(&xs[t], self.proj, bins),
                    self.epsilon,
                )
            })
            .sum()
    }

    /// Density loss without the penalty. `first` is `T` or the state matrix.
    pub fn loss(&self, first: &ColumnMatrix, t: &ColumnMatrix) -> f64 {
        self.data_loss(&forward(first, &self.start, t, self.horizon()))
    }

    /// Density loss plus the column-sum penalty on the optimized matrix.
    pub fn regularized_loss(&self, first: &ColumnMatrix, t: &ColumnMatrix) -> f64 {
        self.loss(first, t) + column_penalty(first, self.penalty)
    }

    /// Regularized loss and its gradient on the sparsity pattern of the
    /// optimized matrix (`first`; for [`Target::Nodes`] `first` and `t` are
    /// the same matrix).
    pub fn gradient(
        &self,
        target: Target,
        first: &ColumnMatrix,
        t: &ColumnMatrix,
    ) -> (f64, ColumnMatrix) {
        let k = self.horizon();
        let bins = self.series.bins();
        let xs = forward(first, &self.start, t, k);
        let mut loss = 0.0;
        // seeds g_t = Pᵀ ∂L/∂b̂(t)
        let mut seeds = vec![Vec::new(); k + 1];
        for step in 1..=k {
            let est = project(&xs[step], self.proj, bins);
            let b = &self.series.counts[step];
            loss += kld_term(b, &est, self.epsilon);
            let db: Vec<f64> = b
                .iter()
                .zip(&est)
                .map(|(&bi, &ei)| {
                    if bi > 0.0 {
                        -bi / (ei + self.epsilon)
                    } else {
                        0.0
                    }
                })
                .collect();
            seeds[step] = self.proj.iter().map(|&p| db[p]).collect();
        }
        // adjoints λ_k = g_k, λ_t = g_t + Tᵀ λ_{t+1}
        let mut lambda = vec![Vec::new(); k + 2];
        for step in (1..=k).rev() {
            let mut l = seeds[step].clone();
            if step < k {
                for (li, ti) in l.iter_mut().zip(t.tr_mul_vec(&lambda[step + 1])) {
                    *li += ti;
                }
            }
            lambda[step] = l;
        }
        let sums = first.column_sums();
        let mut grad = first.clone();
        for (j, col) in grad.columns_mut().iter_mut().enumerate() {
            let pen = 2.0 * self.penalty * (sums[j] - 1.0);
            for e in col.iter_mut() {
                let i = e.0;
                let mut g = pen;
                match target {
                    Target::Nodes => {
                        for step in 1..=k {
                            g += lambda[step][i] * xs[step - 1][j];
                        }
                    }
                    Target::States => {
                        if k >= 1 {
                            g += lambda[1][i] * xs[0][j];
                        }
                    }
                }
                e.1 = g;
            }
        }
        loss += column_penalty(first, self.penalty);
        (loss, grad)
    }
}
