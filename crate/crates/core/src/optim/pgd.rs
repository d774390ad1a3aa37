//! Masked projected gradient descent on column-stochastic matrices.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::loss::{DensitySeries, Objective, Target};
use crate::error::{Error, Result};
use crate::hon::{ColumnMatrix, Network, StateStats, StateTransitionMatrix};

/// How a gradient becomes a parameter update.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepRule {
    /// `x ← x − α ∇`
    Gradient,
    /// Per-entry moment-scaled steps; `α` then bounds the step length.
    #[default]
    Adam,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Number of propagation steps in the loss.
    pub horizon: usize,
    /// Descent iterations per matrix fit.
    pub iterations: usize,
    pub learning_rate: f64,
    /// Multiplicative learning-rate decay applied every `decay_every` iterations.
    pub decay: f64,
    pub decay_every: usize,
    /// Added to estimates inside the logarithm, in particle counts.
    pub epsilon: f64,
    /// Weight of the column-sum penalty.
    pub penalty: f64,
    /// Stop after this many outer rounds without an assignment change.
    pub patience_a: usize,
    /// Stop after this many outer rounds without validation improvement.
    pub patience_val: usize,
    /// Hard cap on outer rounds.
    pub max_outer: usize,
    pub step_rule: StepRule,
    /// Fit densities per particle instead of raw counts.
    pub per_particle: bool,
    /// Clustering threshold for the initial aggregation.
    pub merge_threshold: f64,
    /// History windows seen fewer times fall back to shorter histories
    /// before clustering.
    pub min_support: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            horizon: 8,
            iterations: 100,
            learning_rate: 0.01,
            decay: 0.9,
            decay_every: 10,
            epsilon: 1e-8,
            penalty: 1.0,
            patience_a: 4,
            patience_val: 5,
            max_outer: 25,
            step_rule: StepRule::default(),
            per_particle: true,
            merge_threshold: crate::hon::DEFAULT_MERGE_THRESHOLD,
            min_support: 5,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.horizon == 0 {
            return bad("train.horizon must be at least 1");
        }
        if !(self.learning_rate > 0.0) {
            return bad("train.learning_rate must be positive");
        }
        if !(self.decay > 0.0 && self.decay <= 1.0) {
            return bad("train.decay must lie in (0, 1]");
        }
        if self.decay_every == 0 {
            return bad("train.decay_every must be at least 1");
        }
        if !(self.epsilon > 0.0) {
            return bad("train.epsilon must be positive");
        }
        if self.penalty < 0.0 {
            return bad("train.penalty must be non-negative");
        }
        if self.min_support == 0 {
            return bad("train.min_support must be at least 1");
        }
        if !(self.merge_threshold >= 0.0) {
            return bad("train.merge_threshold must be non-negative");
        }
        if self.max_outer == 0 || self.patience_a == 0 || self.patience_val == 0 {
            return bad("train patience values and max_outer must be at least 1");
        }
        Ok(())
    }

    pub fn learning_rate_at(&self, iteration: usize) -> f64 {
        self.learning_rate * self.decay.powi((iteration / self.decay_every) as i32)
    }

    /// The series and `ε` the optimizer fits against.
    fn scaled(&self, series: &DensitySeries) -> (DensitySeries, f64) {
        if self.per_particle {
            let n = series.particles().max(1.0);
            (series.normalized(), self.epsilon / n)
        } else {
            (series.clone(), self.epsilon)
        }
    }
}

/// Per-particle density loss of a network against a series; the quantity
/// used for model selection and reported in training logs.
pub fn series_loss(net: &Network, series: &DensitySeries, cfg: &TrainConfig) -> f64 {
    let n = series.particles().max(1.0);
    let norm = series.normalized();
    let proj = net.projection();
    let obj = Objective {
        proj: &proj,
        start: net.a.apply(&net.d.apply(norm.initial())),
        series: &norm,
        horizon: cfg.horizon,
        epsilon: cfg.epsilon / n,
        penalty: 0.0,
    };
    obj.loss(&net.t, &net.t)
}

/// Column-normalizes `m`; columns that lost all mass take `fallback`'s column.
pub fn normalize_or(m: &ColumnMatrix, fallback: &ColumnMatrix) -> ColumnMatrix {
    let mut out = m.clone();
    for (j, col) in out.columns_mut().iter_mut().enumerate() {
        let s: f64 = col.iter().map(|e| e.1).sum();
        if s > 0.0 && s.is_finite() {
            for e in col.iter_mut() {
                e.1 /= s;
            }
        } else {
            *col = fallback.column(j).to_vec();
        }
    }
    out
}

struct Adam {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: i32,
}

impl Adam {
    fn new(shape: &ColumnMatrix) -> Self {
        let z: Vec<Vec<f64>> = shape.columns().iter().map(|c| vec![0.0; c.len()]).collect();
        Adam {
            m: z.clone(),
            v: z,
            t: 0,
        }
    }
}

/// Outcome of fitting one matrix.
#[derive(Clone, Debug)]
pub struct Fit {
    /// Best iterate, column-normalized.
    pub matrix: ColumnMatrix,
    /// Selection loss of the best iterate (per particle).
    pub loss: f64,
    /// Selection loss of the starting matrix.
    pub initial_loss: f64,
    /// Iteration that produced the best iterate (0 = the start).
    pub best_iteration: usize,
}

/// Runs masked projected descent from `start`, whose sparsity pattern is
/// the mask. Columns flagged in `frozen` never move. After every step the
/// column-normalized iterate is scored by `select`; the best is kept.
fn descend(
    start: &ColumnMatrix,
    frozen: &[bool],
    cfg: &TrainConfig,
    grad: &dyn Fn(&ColumnMatrix) -> (f64, ColumnMatrix),
    select: &dyn Fn(&ColumnMatrix) -> f64,
) -> Result<Fit> {
    let initial_loss = select(start);
    if !initial_loss.is_finite() {
        return Err(Error::Divergence {
            iteration: 0,
            loss: initial_loss,
        });
    }
    let mut best = Fit {
        matrix: start.clone(),
        loss: initial_loss,
        initial_loss,
        best_iteration: 0,
    };
    let mut x = start.clone();
    let mut adam = Adam::new(start);
    for it in 0..cfg.iterations {
        let (loss, g) = grad(&x);
        if !loss.is_finite() {
            return Err(Error::Divergence {
                iteration: it,
                loss,
            });
        }
        let lr = cfg.learning_rate_at(it);
        adam.t += 1;
        let (b1, b2, eps) = (0.9f64, 0.999f64, 1e-8);
        let bc1 = 1.0 - b1.powi(adam.t);
        let bc2 = 1.0 - b2.powi(adam.t);
        for (j, (col, gcol)) in x.columns_mut().iter_mut().zip(g.columns()).enumerate() {
            if frozen[j] {
                continue;
            }
            for (k, (e, ge)) in col.iter_mut().zip(gcol).enumerate() {
                let step = match cfg.step_rule {
                    StepRule::Gradient => lr * ge.1,
                    StepRule::Adam => {
                        let m = &mut adam.m[j][k];
                        let v = &mut adam.v[j][k];
                        *m = b1 * *m + (1.0 - b1) * ge.1;
                        *v = b2 * *v + (1.0 - b2) * ge.1 * ge.1;
                        lr * (*m / bc1) / ((*v / bc2).sqrt() + eps)
                    }
                };
                e.1 = (e.1 - step).max(0.0);
            }
        }
        let candidate = normalize_or(&x, start);
        let score = select(&candidate);
        if !score.is_finite() {
            return Err(Error::Divergence {
                iteration: it + 1,
                loss: score,
            });
        }
        if score < best.loss {
            best = Fit {
                matrix: candidate,
                loss: score,
                initial_loss,
                best_iteration: it + 1,
            };
        }
    }
    Ok(best)
}

/// Fits `net.t` to the training series, selecting on validation loss.
pub fn optimize_t(
    net: &Network,
    train: &DensitySeries,
    val: &DensitySeries,
    cfg: &TrainConfig,
) -> Result<Fit> {
    cfg.validate()?;
    let proj = net.projection();
    let (series, eps) = cfg.scaled(train);
    let obj = Objective {
        proj: &proj,
        start: net.a.apply(&net.d.apply(series.initial())),
        series: &series,
        horizon: cfg.horizon,
        epsilon: eps,
        penalty: cfg.penalty,
    };
    let val_norm = val.normalized();
    let val_obj = Objective {
        proj: &proj,
        start: net.a.apply(&net.d.apply(val_norm.initial())),
        series: &val_norm,
        horizon: cfg.horizon,
        epsilon: cfg.epsilon / val.particles().max(1.0),
        penalty: 0.0,
    };
    let mut frozen = vec![false; net.node_count()];
    frozen[net.exit_node()] = true;
    descend(
        &net.t,
        &frozen,
        cfg,
        &|t| obj.gradient(Target::Nodes, t, t),
        &|t| val_obj.loss(t, t),
    )
}

/// Counted state-to-node transitions and the states that have any.
pub fn initial_state_transitions(
    net: &Network,
    stats: &StateStats,
) -> (StateTransitionMatrix, Vec<bool>) {
    let n = net.node_count();
    let mut observed = vec![false; stats.len()];
    let cols = stats
        .successors
        .iter()
        .enumerate()
        .map(|(s, succ)| {
            let mut col: BTreeMap<usize, f64> = BTreeMap::new();
            for (&t, &c) in succ {
                *col.entry(net.a.node_of(t)).or_default() += c as f64;
            }
            let total: f64 = col.values().sum();
            if total > 0.0 && s != stats.exit_index() {
                observed[s] = true;
                col.into_iter().map(|(i, c)| (i, c / total)).collect()
            } else {
                vec![(net.a.node_of(s), 1.0)]
            }
        })
        .collect();
    (
        ColumnMatrix::new(n, cols).expect("node ids in range"),
        observed,
    )
}

/// Fits the state-to-node first-hop matrix with `T` held fixed. Selection
/// uses the training loss. Returns the matrix and which states had observed
/// successors (the others keep their counted one-hot column).
pub fn optimize_ts(
    net: &Network,
    stats: &StateStats,
    train: &DensitySeries,
    cfg: &TrainConfig,
) -> Result<(StateTransitionMatrix, Vec<bool>)> {
    cfg.validate()?;
    let proj = net.projection();
    let (series, eps) = cfg.scaled(train);
    let obj = Objective {
        proj: &proj,
        start: net.d.apply(series.initial()),
        series: &series,
        horizon: cfg.horizon,
        epsilon: eps,
        penalty: cfg.penalty,
    };
    let (ts0, observed) = initial_state_transitions(net, stats);
    let frozen: Vec<bool> = observed.iter().map(|o| !o).collect();
    let fit = descend(
        &ts0,
        &frozen,
        cfg,
        &|ts| obj.gradient(Target::States, ts, &net.t),
        &|ts| obj.loss(ts, &net.t),
    )?;
    Ok((fit.matrix, observed))
}
