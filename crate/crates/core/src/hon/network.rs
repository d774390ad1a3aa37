use std::collections::HashMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::matrix::{
    block_bin, block_projection, AggregationMatrix, ColumnMatrix, DistributionMatrix, MaskMatrix,
    TransitionMatrix,
};
use super::state::HOState;
use crate::error::{Error, Result};
use crate::flowfield::{BlockGrid, BlockId, TERMINAL};

/// Smallest transition probability written to a bundle.
pub const BUNDLE_MIN_PROBABILITY: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum NetworkKind {
    Fon,
    FixedOrder(usize),
    VariableOrder(usize),
    FlowHon(usize),
}

impl NetworkKind {
    pub fn order(&self) -> usize {
        match *self {
            NetworkKind::Fon => 1,
            NetworkKind::FixedOrder(k)
            | NetworkKind::VariableOrder(k)
            | NetworkKind::FlowHon(k) => k,
        }
    }
}

impl fmt::Display for NetworkKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NetworkKind::Fon => f.write_str("FON"),
            NetworkKind::FixedOrder(k) => write!(f, "FixedOrder({k})"),
            NetworkKind::VariableOrder(k) => write!(f, "VariableOrder({k})"),
            NetworkKind::FlowHon(k) => write!(f, "FlowHON({k})"),
        }
    }
}

impl FromStr for NetworkKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "FON" {
            return Ok(NetworkKind::Fon);
        }
        let bad = || Error::UnknownKind(s.to_string());
        let (name, rest) = s.split_once('(').ok_or_else(bad)?;
        let k: usize = rest
            .strip_suffix(')')
            .ok_or_else(bad)?
            .parse()
            .map_err(|_| bad())?;
        match name {
            "FixedOrder" => Ok(NetworkKind::FixedOrder(k)),
            "VariableOrder" => Ok(NetworkKind::VariableOrder(k)),
            "FlowHON" => Ok(NetworkKind::FlowHon(k)),
            _ => Err(bad()),
        }
    }
}

/// Where a network came from, for consistency checks between stages.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub corpus_hash: String,
    pub config_hash: String,
    pub grid: Option<BlockGrid>,
}

/// A group of states sharing a current block.
#[derive(Clone, Debug, PartialEq)]
pub struct HONode {
    pub id: usize,
    pub current: BlockId,
    pub members: Vec<usize>,
}

/// A network as the three linear layers `D`, `A`, `T` plus mask `M`.
#[derive(Clone, Debug)]
pub struct Network {
    pub kind: NetworkKind,
    /// Transitions were fitted to block densities rather than counted.
    pub optimized: bool,
    pub block_count: usize,
    pub states: Vec<HOState>,
    pub support: Vec<u64>,
    pub d: DistributionMatrix,
    pub a: AggregationMatrix,
    pub t: TransitionMatrix,
    pub m: MaskMatrix,
    pub provenance: Provenance,
}

impl Network {
    /// `FON`, `FixedOrder(3)+`, ...
    pub fn label(&self) -> String {
        format!("{}{}", self.kind, if self.optimized { "+" } else { "" })
    }

    /// File-name friendly label such as `fixed3_opt`.
    pub fn slug(&self) -> String {
        let base = match self.kind {
            NetworkKind::Fon => "fon".to_string(),
            NetworkKind::FixedOrder(k) => format!("fixed{k}"),
            NetworkKind::VariableOrder(k) => format!("var{k}"),
            NetworkKind::FlowHon(k) => format!("flowhon{k}"),
        };
        if self.optimized && !matches!(self.kind, NetworkKind::FlowHon(_)) {
            base + "_opt"
        } else {
            base
        }
    }

    pub fn node_count(&self) -> usize {
        self.a.node_count()
    }

    pub fn state_count(&self) -> usize {
        self.states.len()
    }

    pub fn exit_state(&self) -> usize {
        self.states.len() - 1
    }

    pub fn exit_node(&self) -> usize {
        self.a.node_of(self.exit_state())
    }

    /// Block bin (`0..=B`, exit last) of every node.
    pub fn projection(&self) -> Vec<usize> {
        block_projection(&self.d, &self.a).expect("network layers are consistent")
    }

    /// Highest state order present.
    pub fn max_order(&self) -> usize {
        self.states.iter().map(HOState::order).max().unwrap_or(1)
    }

    pub fn nodes(&self) -> Vec<HONode> {
        self.a
            .members()
            .into_iter()
            .enumerate()
            .map(|(id, members)| HONode {
                id,
                current: self.states[members[0]].current,
                members,
            })
            .collect()
    }

    pub fn state_index(&self) -> StateIndex {
        StateIndex::new(&self.states)
    }

    /// Checks every structural invariant of the layers within `tol`.
    pub fn validate(&self, tol: f64) -> Result<()> {
        let shape = |m: String| Err(Error::Shape(m));
        let s = self.states.len();
        if self.d.rows() != s || self.a.state_count() != s || self.support.len() != s {
            return shape(format!("{s} states but layer sizes disagree"));
        }
        if self.d.block_count() != self.block_count {
            return shape("D block count differs from the network".into());
        }
        if !self.states[s - 1].is_exit() || self.states[..s - 1].iter().any(HOState::is_exit) {
            return shape("the exit state must be present exactly once, last".into());
        }
        for (i, st) in self.states.iter().enumerate() {
            if st.history.contains(&TERMINAL) {
                return shape(format!("state {st} has the exit in its history"));
            }
            if self.d.column_of(i) != block_bin(st.current, self.block_count) {
                return shape(format!("D row of state {st} is off its block"));
            }
            if self.d.value(i) < 0.0 {
                return shape(format!("negative D entry for state {st}"));
            }
        }
        for (b, sum) in self.d.column_sums().into_iter().enumerate() {
            if (sum - 1.0).abs() > tol {
                return shape(format!("D column {b} sums to {sum}"));
            }
        }
        block_projection(&self.d, &self.a)?;
        let n = self.node_count();
        if self.t.ncols() != n || self.t.nrows() != n || self.m.ncols() != n || self.m.nrows() != n
        {
            return shape("T and M must be N x N".into());
        }
        self.t.check_stochastic(&self.m, tol).map_err(Error::Shape)
    }

    pub fn to_bundle(&self) -> NetworkBundle {
        let nodes = self
            .nodes()
            .into_iter()
            .map(|node| NodeRecord {
                id: node.id,
                block: node.current,
                order: node
                    .members
                    .iter()
                    .map(|&s| self.states[s].order())
                    .max()
                    .unwrap_or(1),
                support: node.members.iter().map(|&s| self.support[s]).sum(),
                members: node
                    .members
                    .iter()
                    .map(|&s| self.states[s].to_vec())
                    .collect(),
            })
            .collect();
        NetworkBundle {
            kind: self.kind.to_string(),
            optimized: self.optimized,
            order: self.kind.order(),
            block_count: self.block_count,
            states: self.states.iter().map(HOState::to_vec).collect(),
            support: self.support.clone(),
            nodes,
            d: self.d.triplets(),
            a: (0..self.state_count())
                .map(|s| (self.a.node_of(s), s))
                .collect(),
            m: self.m.pairs(),
            t: self.t.triplets(BUNDLE_MIN_PROBABILITY),
            provenance: self.provenance.clone(),
        }
    }

    pub fn from_bundle(b: &NetworkBundle) -> Result<Self> {
        let kind: NetworkKind = b.kind.parse()?;
        let states = b
            .states
            .iter()
            .map(|v| HOState::from_slice(v).ok_or_else(|| Error::Shape("empty state".into())))
            .collect::<Result<Vec<_>>>()?;
        let s = states.len();
        if s == 0 || b.support.len() != s || b.a.len() != s {
            return Err(Error::Shape(
                "bundle state tables disagree in length".into(),
            ));
        }
        let mut column = vec![usize::MAX; s];
        let mut value = vec![0.0; s];
        for (i, st) in states.iter().enumerate() {
            column[i] = block_bin(st.current, b.block_count);
        }
        for &(row, col, v) in &b.d {
            if row >= s || column[row] != col {
                return Err(Error::Shape(format!(
                    "D entry ({row},{col}) is off its block"
                )));
            }
            value[row] = v;
        }
        let mut assignment = vec![usize::MAX; s];
        for &(node, state) in &b.a {
            if state >= s {
                return Err(Error::Shape(format!("A entry for unknown state {state}")));
            }
            assignment[state] = node;
        }
        let n = b.nodes.len();
        let a = AggregationMatrix::new(n, assignment)?;
        let mut mask_cols = vec![Vec::new(); n];
        for &(i, j) in &b.m {
            if i >= n || j >= n {
                return Err(Error::Shape(format!("M entry ({i},{j}) out of range")));
            }
            mask_cols[j].push(i);
        }
        let m = MaskMatrix::new(n, mask_cols);
        let mut t = ColumnMatrix::zeros_like(&m);
        for &(i, j, v) in &b.t {
            if j >= n || !m.contains(i, j) {
                return Err(Error::Shape(format!("T entry ({i},{j}) outside the mask")));
            }
            let col = &mut t.columns_mut()[j];
            let k = col.binary_search_by_key(&i, |e| e.0).expect("on the mask");
            col[k].1 = v;
        }
        let net = Network {
            kind,
            optimized: b.optimized,
            block_count: b.block_count,
            states,
            support: b.support.clone(),
            d: DistributionMatrix::new(b.block_count, column, value)?,
            a,
            t,
            m,
            provenance: b.provenance.clone(),
        };
        net.validate(1e-9)?;
        Ok(net)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(&self.to_bundle())?;
        std::fs::write(path, text + "\n").map_err(|e| Error::file(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
        Network::from_bundle(&serde_json::from_str(&text)?)
    }
}

/// Serialized form of a [`Network`]. States and members are written as
/// `[current, most recent, ..., oldest]`; matrices as sparse triplets
/// `(row, column[, value])`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkBundle {
    pub kind: String,
    pub optimized: bool,
    pub order: usize,
    #[serde(rename = "B")]
    pub block_count: usize,
    pub states: Vec<Vec<BlockId>>,
    pub support: Vec<u64>,
    pub nodes: Vec<NodeRecord>,
    #[serde(rename = "D")]
    pub d: Vec<(usize, usize, f64)>,
    #[serde(rename = "A")]
    pub a: Vec<(usize, usize)>,
    #[serde(rename = "M")]
    pub m: Vec<(usize, usize)>,
    #[serde(rename = "T")]
    pub t: Vec<(usize, usize, f64)>,
    pub provenance: Provenance,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeRecord {
    pub id: usize,
    pub block: BlockId,
    pub order: usize,
    pub members: Vec<Vec<BlockId>>,
    pub support: u64,
}

/// Finds the state a particle occupies from its visited blocks.
pub struct StateIndex {
    map: HashMap<HOState, usize>,
    /// First state (canonical order) of every block.
    fallback: HashMap<BlockId, usize>,
    max_order: usize,
    exit: usize,
}

impl StateIndex {
    pub fn new(states: &[HOState]) -> Self {
        let mut fallback = HashMap::new();
        for (i, s) in states.iter().enumerate() {
            fallback.entry(s.current).or_insert(i);
        }
        StateIndex {
            fallback,
            map: states
                .iter()
                .cloned()
                .enumerate()
                .map(|(i, s)| (s, i))
                .collect(),
            max_order: states.iter().map(HOState::order).max().unwrap_or(1),
            exit: states.len() - 1,
        }
    }

    /// The longest known state ending at position `t` of `visits`.
    pub fn lookup(&self, visits: &[BlockId], t: usize) -> Option<usize> {
        if visits[t] == TERMINAL {
            return Some(self.exit);
        }
        (1..=self.max_order.min(t + 1))
            .rev()
            .find_map(|k| self.map.get(&HOState::at(visits, t, k)).copied())
    }

    /// Like [`StateIndex::lookup`], falling back to the block's first state
    /// when no history matches. `None` only for blocks the network lacks.
    pub fn lookup_or_block(&self, visits: &[BlockId], t: usize) -> Option<usize> {
        self.lookup(visits, t)
            .or_else(|| self.fallback.get(&visits[t]).copied())
    }
}
