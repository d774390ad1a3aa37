use std::fs;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    to_block_sequence, trace_streamline, BlockGrid, BlockSequence, TraceParams, Vec3, VectorField,
};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusCounts {
    pub train: usize,
    pub validation: usize,
    pub test: usize,
}

impl CorpusCounts {
    pub fn total(&self) -> usize {
        self.train + self.validation + self.test
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SequenceCorpus {
    pub train: Vec<BlockSequence>,
    pub validation: Vec<BlockSequence>,
    pub test: Vec<BlockSequence>,
    pub rng_seed: u64,
}

/// `n` jittered seeds from distinct cells of an `m³` lattice over the box,
/// `m = ceil(cbrt(n))`, cells chosen by a seeded shuffle.
pub fn stratified_seeds(bounds: &super::Bounds, n: usize, rng_seed: u64) -> Vec<Vec3> {
    let mut m = (n as f64).cbrt().ceil() as usize;
    while m * m * m < n {
        m += 1;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut cells: Vec<usize> = (0..m * m * m).collect();
    cells.shuffle(&mut rng);
    let ext = bounds.extent();
    cells
        .into_iter()
        .take(n)
        .map(|c| {
            let idx = [c % m, (c / m) % m, c / (m * m)];
            let mut p = [0.0; 3];
            for a in 0..3 {
                let u: f64 = rng.gen();
                p[a] = bounds.min[a] + (idx[a] as f64 + u) / m as f64 * ext[a];
                p[a] = p[a].min(bounds.max[a]);
            }
            p
        })
        .collect()
}

/// Traces `counts.total()` particles from stratified seeds and splits them,
/// in seed order, into train / validation / test.
pub fn generate_corpus<F: VectorField + ?Sized>(
    field: &F,
    grid: &BlockGrid,
    counts: CorpusCounts,
    params: &TraceParams,
    rng_seed: u64,
) -> Result<SequenceCorpus> {
    if counts.train == 0 || counts.validation == 0 || counts.test == 0 {
        return Err(Error::Config(format!(
            "corpus counts must be positive, got {counts:?}"
        )));
    }
    let seeds = stratified_seeds(&field.bounds(), counts.total(), rng_seed);
    let mut sequences = seeds
        .par_iter()
        .map(|&s| trace_streamline(field, s, params).map(|line| to_block_sequence(&line, grid)))
        .collect::<Result<Vec<_>>>()?;
    let test = sequences.split_off(counts.train + counts.validation);
    let validation = sequences.split_off(counts.train);
    Ok(SequenceCorpus {
        train: sequences,
        validation,
        test,
        rng_seed,
    })
}

pub fn write_sequences(path: &Path, sequences: &[BlockSequence]) -> Result<()> {
    let mut out = Vec::new();
    for s in sequences {
        let line: Vec<String> = s.blocks().iter().map(|b| b.to_string()).collect();
        writeln!(out, "{}", line.join(" "))?;
    }
    fs::write(path, out).map_err(|e| Error::file(path, e))
}

/// Parses one sequence per line. Consecutive repeats are collapsed so that
/// externally produced visit lists can be ingested as-is; blank lines are skipped.
pub fn read_sequences(path: &Path) -> Result<Vec<BlockSequence>> {
    let text = fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
    parse_sequences(&text)
}

pub(crate) fn parse_sequences(text: &str) -> Result<Vec<BlockSequence>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let ids = line
            .split_whitespace()
            .map(|t| t.parse::<i32>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::Sequence {
                line: i + 1,
                reason: e.to_string(),
            })?;
        let seq = BlockSequence::from_visits(ids).map_err(|e| match e {
            Error::Sequence { reason, .. } => Error::Sequence {
                line: i + 1,
                reason,
            },
            other => other,
        })?;
        out.push(seq);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flowfield::{AnalyticField, Bounds, TERMINAL};

    #[test]
    fn seeds_are_stratified_and_deterministic() {
        let b = Bounds::cube(0.0, 1.0);
        let a = stratified_seeds(&b, 100, 3);
        assert_eq!(a, stratified_seeds(&b, 100, 3));
        assert_ne!(a, stratified_seeds(&b, 100, 4));
        // 5³ lattice: no two seeds share a cell
        let mut cells: Vec<_> = a
            .iter()
            .map(|p| {
                (
                    (p[0] * 5.0) as usize,
                    (p[1] * 5.0) as usize,
                    (p[2] * 5.0) as usize,
                )
            })
            .collect();
        cells.sort();
        cells.dedup();
        assert_eq!(cells.len(), 100);
    }

    #[test]
    fn constant_field_corpus_moves_right() {
        let b = Bounds::cube(0.0, 10.0);
        let f = AnalyticField::constant([1.0, 0.0, 0.0], b);
        let grid = BlockGrid::new(b, [5, 2, 2]).unwrap();
        let counts = CorpusCounts {
            train: 10,
            validation: 5,
            test: 15,
        };
        let c = generate_corpus(&f, &grid, counts, &TraceParams::new(&f, 0.5, 1000), 1).unwrap();
        assert_eq!(
            (c.train.len(), c.validation.len(), c.test.len()),
            (10, 5, 15)
        );
        for s in c.train.iter().chain(&c.validation).chain(&c.test) {
            assert!(s.terminated());
            let v = s.visits();
            for w in v.windows(2) {
                assert_eq!(w[1], w[0] + 1, "{:?}", s.blocks());
            }
            let row = grid.coords_of(v[0]);
            assert!(v.iter().all(|&b| grid.coords_of(b)[1..] == row[1..]));
            assert_eq!(grid.coords_of(*v.last().unwrap())[0], 4);
        }
        assert_eq!(
            c,
            generate_corpus(&f, &grid, counts, &TraceParams::new(&f, 0.5, 1000), 1).unwrap()
        );
    }

    #[test]
    fn sequence_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.txt");
        let seqs = vec![
            BlockSequence::new(vec![0, 1, 2, TERMINAL]).unwrap(),
            BlockSequence::new(vec![5]).unwrap(),
        ];
        write_sequences(&p, &seqs).unwrap();
        assert_eq!(fs::read_to_string(&p).unwrap(), "0 1 2 -1\n5\n");
        assert_eq!(read_sequences(&p).unwrap(), seqs);
    }

    #[test]
    fn parse_reports_line_numbers() {
        match parse_sequences("0 1\n2 -1 3\n") {
            Err(Error::Sequence { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
        assert!(parse_sequences("0 x\n").is_err());
        assert_eq!(parse_sequences("4 4 5\n").unwrap()[0].blocks(), &[4, 5]);
    }
}
