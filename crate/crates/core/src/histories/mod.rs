//! Branching histories: repeated evolve-then-measure with a coherent-state
//! POVM, kept as a tree of unnormalized branch states.
//!
//! A measurement with outcome `α` acts through the Kraus operator `√Π_α`
//! (on the system factor in closed mode, `√Π ρ √Π` in open mode), so child
//! weights are `<Π_α>` and sum to the parent weight up to the part of the
//! state the window does not cover. That uncovered part is the weight of the
//! remainder effect `I - Σ Π_α` and is booked as escaped mass.

mod calibrate;
mod state;

use std::io::Write;
use std::sync::Arc;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use crate::dynamics::{
    ClosedPropagator, EnvironmentSpec, HamiltonianSpec, MasterEquationSpec, MasterOptions,
    MasterPropagator, WarningCounters,
};
use crate::error::{Error, Result};
use crate::grid::{CompositeState, DensityMatrix, Grid};
use crate::partition::Povm;

pub use calibrate::{fit_dephasing_lambda, LambdaFit, LeafComparison};
pub use state::BranchState;

type C64 = nalgebra::Complex<f64>;

pub const DEFAULT_LEAF_CAP: usize = 4096;
/// Coherent-state widths beyond a cell at which its POVM element is
/// treated as not touching a state.
pub const REACH_MARGIN: f64 = 8.0;

pub type BranchIndex = Vec<(i32, i32)>;

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum Dynamics {
    /// System plus explicit qubit register, evolved unitarily.
    Closed {
        hamiltonian: HamiltonianSpec<f64>,
        environment: EnvironmentSpec<f64>,
    },
    /// Reduced system state under the dephasing master equation.
    Open(MasterEquationSpec<f64>),
}

impl Dynamics {
    pub fn mode(&self) -> &'static str {
        match self {
            Dynamics::Closed { .. } => "closed",
            Dynamics::Open(_) => "open",
        }
    }

    pub fn hamiltonian(&self) -> &HamiltonianSpec<f64> {
        match self {
            Dynamics::Closed { hamiltonian, .. } => hamiltonian,
            Dynamics::Open(m) => &m.hamiltonian,
        }
    }
}

/// Dynamics plus the integration step used between measurements.
#[derive(Clone, Debug)]
pub struct Evolution {
    pub dynamics: Dynamics,
    /// Largest integration step; each interval is cut into equal substeps.
    pub step: f64,
    pub options: MasterOptions,
    /// Dense per-register-state propagators for one fixed interval.
    cache: Option<(f64, Arc<Vec<DMatrix<C64>>>)>,
}

impl Evolution {
    /// Picks the default step from `initial` when `step` is `None`, and
    /// rejects an explicit step that fails the stability heuristic.
    pub fn new(dynamics: Dynamics, initial: &BranchState, step: Option<f64>) -> Result<Self> {
        let scale = match (&dynamics, initial) {
            (
                Dynamics::Closed {
                    hamiltonian,
                    environment,
                },
                BranchState::Pure(s),
            ) => {
                environment.validate()?;
                ClosedPropagator::energy_scale(s, hamiltonian, environment)
            }
            (Dynamics::Open(spec), BranchState::Mixed(rho)) => {
                spec.validate()?;
                MasterPropagator::energy_scale(rho, spec)
            }
            _ => {
                return Err(Error::ModeMismatch(format!(
                    "{} dynamics with a {} branch state",
                    dynamics.mode(),
                    initial.mode()
                )))
            }
        };
        let step = match step {
            Some(dt) => {
                scale.check(dt)?;
                dt
            }
            None => scale.default_dt(),
        };
        Ok(Evolution {
            dynamics,
            step,
            options: MasterOptions::default(),
            cache: None,
        })
    }

    /// Precomputes the closed-mode propagator over `interval` as one dense
    /// matrix per register basis state, so repeated steps of that length
    /// become matrix-vector products. Same substeps, same result up to
    /// rounding. Open dynamics is returned unchanged.
    pub fn cached(mut self, grid: &Grid<f64>, interval: f64) -> Result<Self> {
        if let Dynamics::Closed {
            hamiltonian,
            environment,
        } = &self.dynamics
        {
            if !(interval > 0.0) {
                return Err(Error::InvalidSpec(format!("interval = {interval} must be > 0")));
            }
            let k = self.substeps(interval);
            let mut prop = ClosedPropagator::new(grid, hamiltonian, environment, interval / k as f64)?;
            let blocks: Vec<_> = (0..1usize << environment.env_qubits())
                .map(|e| prop.component_matrix(e, k))
                .collect();
            self.cache = Some((interval, Arc::new(blocks)));
        }
        Ok(self)
    }

    pub fn substeps(&self, interval: f64) -> usize {
        ((interval / self.step).ceil() as usize).max(1)
    }

    /// Evolves `state` over `interval` without renormalizing.
    pub fn advance(&self, state: &mut BranchState, interval: f64, warnings: &mut WarningCounters) -> Result<()> {
        if let (Some((t, blocks)), BranchState::Pure(s)) = (&self.cache, &mut *state) {
            if (t - interval).abs() <= 1e-12 * t && blocks[0].nrows() == s.grid().n_points() {
                let n = s.grid().n_points();
                for (chunk, u) in s.amplitudes_mut().as_mut_slice().chunks_exact_mut(n).zip(blocks.iter()) {
                    let out = u * nalgebra::DVector::from_column_slice(chunk);
                    chunk.copy_from_slice(out.as_slice());
                }
                return Ok(());
            }
        }
        let k = self.substeps(interval);
        let dt = interval / k as f64;
        match (&self.dynamics, state) {
            (
                Dynamics::Closed {
                    hamiltonian,
                    environment,
                },
                BranchState::Pure(s),
            ) => ClosedPropagator::new(s.grid(), hamiltonian, environment, dt)?.advance(s, k),
            (Dynamics::Open(spec), BranchState::Mixed(rho)) => {
                MasterPropagator::new(rho.grid(), spec, dt)?.advance(rho, k, &self.options, warnings)
            }
            (d, s) => Err(Error::ModeMismatch(format!(
                "{} dynamics with a {} branch state",
                d.mode(),
                s.mode()
            ))),
        }
    }
}

/// Children of one measurement on `state`, with the uncovered weight.
#[derive(Clone, Debug)]
pub struct Split {
    /// `(element position in the POVM, child state, child weight)`.
    pub children: Vec<(usize, BranchState, f64)>,
    pub parent_weight: f64,
    /// `parent_weight - Σ child weights`.
    pub remainder: f64,
}

impl Split {
    /// Transition probabilities `w_child / w_parent`, in child order.
    pub fn probabilities(&self) -> Vec<f64> {
        self.children.iter().map(|c| c.2 / self.parent_weight).collect()
    }
}

/// Applies element `a` of `povm` to `state`: `√Π ψ` or `√Π ρ √Π`.
pub fn apply_element(state: &BranchState, povm: &Povm, a: usize) -> Result<BranchState> {
    let e = &povm.elements[a];
    Ok(match state {
        BranchState::Pure(s) => {
            let out = e.apply_sqrt(&system_columns(s));
            BranchState::Pure(CompositeState::new(
                *s.grid(),
                s.env_qubits(),
                nalgebra::DVector::from_column_slice(out.as_slice()),
            )?)
        }
        BranchState::Mixed(rho) => BranchState::Mixed(DensityMatrix::new(*rho.grid(), e.conjugate_sqrt(rho.elements()))?),
    })
}

fn system_columns(s: &CompositeState<f64>) -> DMatrix<C64> {
    DMatrix::from_column_slice(s.grid().n_points(), s.env_dim(), s.amplitudes().as_slice())
}

/// Outcome weights of every element that can reach `state`, without
/// building the children, with the parent weight.
pub fn outcome_weights(state: &BranchState, povm: &Povm) -> Result<(Vec<(usize, f64)>, f64)> {
    povm.grid.same_as(state.grid())?;
    let support = state.support();
    let dx = povm.grid.spacing();
    let columns = match state {
        BranchState::Pure(s) => Some(system_columns(s)),
        BranchState::Mixed(_) => None,
    };
    let mut out = Vec::new();
    for (a, e) in povm.iter().enumerate() {
        if !support.overlaps(&povm.reach(e, REACH_MARGIN)) {
            continue;
        }
        let w = match (state, &columns) {
            (BranchState::Pure(_), Some(c)) => e.expectation_columns(c) * dx,
            (BranchState::Mixed(rho), _) => e.weight_density(rho.elements(), dx),
            _ => unreachable!("pure states carry their columns"),
        };
        if w > 0.0 {
            out.push((a, w));
        }
    }
    Ok((out, state.weight()))
}

/// Applies every POVM element that can reach `state`.
pub fn split(state: &BranchState, povm: &Povm) -> Result<Split> {
    povm.grid.same_as(state.grid())?;
    let support = state.support();
    let parent_weight = state.weight();
    let mut children = Vec::new();
    for (a, e) in povm.iter().enumerate() {
        if !support.overlaps(&povm.reach(e, REACH_MARGIN)) {
            continue;
        }
        let child = apply_element(state, povm, a)?;
        let w = child.weight();
        if w > 0.0 {
            children.push((a, child, w));
        }
    }
    let total: f64 = children.iter().map(|c| c.2).sum();
    Ok(Split {
        children,
        parent_weight,
        remainder: parent_weight - total,
    })
}

#[derive(Clone, Debug)]
pub struct BranchNode {
    pub index: BranchIndex,
    /// `W²`, the squared norm (closed) or trace (open) of the branch state.
    pub weight: f64,
    pub parent: Option<usize>,
    pub children: Vec<usize>,
    /// Branch-relative `<X>` and `<P>` at the node's time.
    pub q: f64,
    pub p: f64,
    /// Present on leaves; interior states are dropped once split.
    pub state: Option<BranchState>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ExtendOptions {
    pub epsilon_prune: f64,
    pub leaf_cap: usize,
}

impl Default for ExtendOptions {
    fn default() -> Self {
        ExtendOptions {
            epsilon_prune: 0.0,
            leaf_cap: DEFAULT_LEAF_CAP,
        }
    }
}

#[derive(Clone, Debug)]
pub struct BranchTree {
    pub nodes: Vec<BranchNode>,
    pub leaves: Vec<usize>,
    pub depth: usize,
    pub time: f64,
    /// Weight removed by pruning plus weight that left the window.
    pub pruned_mass: f64,
    /// The window-escape part of `pruned_mass`.
    pub escaped_mass: f64,
    pub warnings: WarningCounters,
}

impl BranchTree {
    /// Tree holding only `initial`, which must have unit weight.
    pub fn new(initial: BranchState) -> Result<Self> {
        let w = initial.weight();
        if (w - 1.0).abs() > 1e-8 {
            return Err(Error::InvalidState(format!("initial branch weight {w} is not 1")));
        }
        let (q, p) = initial.expectations();
        Ok(BranchTree {
            nodes: vec![BranchNode {
                index: Vec::new(),
                weight: w,
                parent: None,
                children: Vec::new(),
                q,
                p,
                state: Some(initial),
            }],
            leaves: vec![0],
            depth: 0,
            time: 0.0,
            pruned_mass: 0.0,
            escaped_mass: 0.0,
            warnings: WarningCounters::default(),
        })
    }

    pub fn root(&self) -> &BranchNode {
        &self.nodes[0]
    }

    pub fn leaf_nodes(&self) -> impl Iterator<Item = &BranchNode> {
        self.leaves.iter().map(|&i| &self.nodes[i])
    }

    pub fn leaf_weight_sum(&self) -> f64 {
        self.leaf_nodes().map(|n| n.weight).sum()
    }

    /// `Σ leaf weights + pruned_mass`, which should stay at 1.
    pub fn total_mass(&self) -> f64 {
        self.leaf_weight_sum() + self.pruned_mass
    }

    pub fn find_leaf(&self, index: &[(i32, i32)]) -> Option<&BranchNode> {
        self.leaf_nodes().find(|n| n.index == index)
    }

    /// Chain of nodes from the root to `node`.
    pub fn lineage(&self, node: usize) -> Vec<usize> {
        let mut chain = vec![node];
        let mut cur = node;
        while let Some(p) = self.nodes[cur].parent {
            chain.push(p);
            cur = p;
        }
        chain.reverse();
        chain
    }

    pub fn mode(&self) -> &'static str {
        self.root()
            .state
            .as_ref()
            .or_else(|| self.leaf_nodes().find_map(|n| n.state.as_ref()))
            .map(BranchState::mode)
            .unwrap_or("closed")
    }

    pub fn dump(&self) -> TreeDump {
        TreeDump {
            depth: self.depth,
            time: self.time,
            pruned_mass: self.pruned_mass,
            escaped_mass: self.escaped_mass,
            leaf_weight_sum: self.leaf_weight_sum(),
            nodes: self
                .nodes
                .iter()
                .map(|n| NodeDump {
                    index: n.index.clone(),
                    weight: n.weight,
                    parent: n.parent,
                    q: n.q,
                    p: n.p,
                    leaf: n.state.is_some(),
                })
                .collect(),
        }
    }

    pub fn write_json<W: Write>(&self, out: W) -> Result<()> {
        serde_json::to_writer_pretty(out, &self.dump())?;
        Ok(())
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct NodeDump {
    pub index: BranchIndex,
    pub weight: f64,
    pub parent: Option<usize>,
    pub q: f64,
    pub p: f64,
    pub leaf: bool,
}

/// JSON form of a tree: indices, weights and bookkeeping; states omitted.
#[derive(Clone, Debug, Serialize)]
pub struct TreeDump {
    pub depth: usize,
    pub time: f64,
    pub pruned_mass: f64,
    pub escaped_mass: f64,
    pub leaf_weight_sum: f64,
    pub nodes: Vec<NodeDump>,
}

/// Evolves every leaf over `dt` and splits it with `povm`.
pub fn extend_tree(
    mut tree: BranchTree,
    povm: &Povm,
    evolution: &Evolution,
    dt: f64,
    options: &ExtendOptions,
) -> Result<BranchTree> {
    if !(options.epsilon_prune >= 0.0 && options.epsilon_prune <= 1e-3) {
        return Err(Error::InvalidSpec(format!(
            "epsilon_prune = {} must lie in [0, 1e-3]",
            options.epsilon_prune
        )));
    }
    let leaves = std::mem::take(&mut tree.leaves);
    let mut states = Vec::with_capacity(leaves.len());
    for &l in &leaves {
        let s = tree.nodes[l].state.take().ok_or_else(|| {
            Error::InvalidState(format!("leaf {:?} has no stored state", tree.nodes[l].index))
        })?;
        states.push(s);
    }
    let results: Vec<Result<(Split, WarningCounters)>> = states
        .into_par_iter()
        .map(|mut s| {
            let mut warnings = WarningCounters::default();
            evolution.advance(&mut s, dt, &mut warnings)?;
            Ok((split(&s, povm)?, warnings))
        })
        .collect();
    let mut new_leaves = Vec::new();
    for (&parent, r) in leaves.iter().zip(results) {
        let (sp, warnings) = r?;
        tree.warnings.merge(&warnings);
        tree.escaped_mass += sp.remainder;
        tree.pruned_mass += sp.remainder;
        for (a, child, w) in sp.children {
            if w < options.epsilon_prune {
                tree.pruned_mass += w;
                continue;
            }
            let mut index = tree.nodes[parent].index.clone();
            index.push(povm.elements[a].index());
            let (q, p) = child.expectations();
            let id = tree.nodes.len();
            tree.nodes.push(BranchNode {
                index,
                weight: w,
                parent: Some(parent),
                children: Vec::new(),
                q,
                p,
                state: Some(child),
            });
            tree.nodes[parent].children.push(id);
            new_leaves.push(id);
        }
    }
    if new_leaves.len() > options.leaf_cap {
        return Err(Error::TooManyLeaves {
            leaves: new_leaves.len(),
            cap: options.leaf_cap,
        });
    }
    tree.leaves = new_leaves;
    tree.depth += 1;
    tree.time += dt;
    Ok(tree)
}

/// `<Ψ_j|Ψ_i>` for two leaf histories of a closed-mode tree.
pub fn decoherence_functional(tree: &BranchTree, i: &[(i32, i32)], j: &[(i32, i32)]) -> Result<C64> {
    if i.len() != j.len() {
        return Err(Error::InvalidSpec(format!(
            "histories of length {} and {} are not comparable",
            i.len(),
            j.len()
        )));
    }
    let find = |idx: &[(i32, i32)]| {
        tree.find_leaf(idx)
            .and_then(|n| n.state.as_ref())
            .ok_or_else(|| Error::UnknownBranch(idx.to_vec()))
    };
    match (find(i)?, find(j)?) {
        (BranchState::Pure(a), BranchState::Pure(b)) => Ok(b.inner(a)),
        _ => Err(Error::ModeMismatch(
            "the decoherence functional needs closed-mode branch vectors".into(),
        )),
    }
}

/// Largest `|D(i, j)| / √(w_i w_j)` over pairs of distinct leaves with
/// weight at least `min_weight`. With `earlier_only`, pairs that differ
/// only in their final outcome are skipped.
pub fn max_offdiagonal_ratio(tree: &BranchTree, min_weight: f64, earlier_only: bool) -> Result<f64> {
    let leaves: Vec<&BranchNode> = tree.leaf_nodes().filter(|n| n.weight >= min_weight).collect();
    let mut worst: f64 = 0.0;
    for (a, na) in leaves.iter().enumerate() {
        for nb in &leaves[a + 1..] {
            let k = na.index.len();
            if earlier_only && k > 0 && na.index[..k - 1] == nb.index[..k - 1] {
                continue;
            }
            let d = decoherence_functional(tree, &na.index, &nb.index)?;
            worst = worst.max(d.norm() / (na.weight * nb.weight).sqrt());
        }
    }
    Ok(worst)
}

/// Removes leaves lighter than `epsilon_prune`, booking their weight.
pub fn prune(mut tree: BranchTree, epsilon_prune: f64) -> BranchTree {
    if epsilon_prune <= 0.0 {
        return tree;
    }
    let (keep, drop): (Vec<usize>, Vec<usize>) = tree
        .leaves
        .iter()
        .partition(|&&l| tree.nodes[l].weight >= epsilon_prune);
    for l in drop {
        tree.pruned_mass += tree.nodes[l].weight;
        tree.nodes[l].state = None;
        if let Some(p) = tree.nodes[l].parent {
            tree.nodes[p].children.retain(|&c| c != l);
        }
    }
    tree.leaves = keep;
    tree
}

/// Builds a tree of the given depth from scratch.
pub fn grow_tree(
    initial: BranchState,
    povm: &Povm,
    evolution: &Evolution,
    dt: f64,
    depth: usize,
    options: &ExtendOptions,
) -> Result<BranchTree> {
    let mut tree = BranchTree::new(initial)?;
    for _ in 0..depth {
        tree = extend_tree(tree, povm, evolution, dt, options)?;
    }
    Ok(tree)
}

#[cfg(test)]
mod tests;
