//! Steady vector fields, RK4 streamline tracing, block partitioning and the
//! conversion of streamlines into block sequences.

mod blocks;
mod corpus;
mod field;
mod trace;

pub use blocks::{block_path, to_block_sequence, BlockGrid, BlockId, BlockSequence, TERMINAL};
pub use corpus::{
    generate_corpus, read_sequences, stratified_seeds, write_sequences, CorpusCounts,
    SequenceCorpus,
};
pub use field::{AnalyticField, AnalyticKind, Bounds, GridField, VectorField};
pub use trace::{rk4_step, trace_streamline, Streamline, Termination, TraceParams};

pub type Vec3 = [f64; 3];

#[inline]
pub(crate) fn axpy(a: f64, x: Vec3, y: Vec3) -> Vec3 {
    [y[0] + a * x[0], y[1] + a * x[1], y[2] + a * x[2]]
}

#[inline]
pub(crate) fn norm(v: Vec3) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}
