use std::collections::HashMap;

use serde::Serialize;

use super::{grow_tree, BranchIndex, BranchState, BranchTree, Dynamics, Evolution, ExtendOptions};
use crate::dynamics::{HamiltonianSpec, MasterEquationSpec};
use crate::error::{Error, Result};
use crate::partition::Povm;

const GOLDEN_ITERATIONS: usize = 24;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LeafComparison {
    pub index: BranchIndex,
    pub closed: f64,
    pub open: f64,
    pub relative_error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LambdaFit {
    pub lambda: f64,
    /// Largest relative leaf error at the fitted `lambda`.
    pub max_relative_error: f64,
    /// The same error with no dephasing.
    pub error_at_zero: f64,
    pub min_weight: f64,
    pub leaves: Vec<LeafComparison>,
}

fn leaf_weights(tree: &BranchTree) -> HashMap<BranchIndex, f64> {
    tree.leaf_nodes().map(|n| (n.index.clone(), n.weight)).collect()
}

fn compare(reference: &[(BranchIndex, f64)], open: &BranchTree) -> Vec<LeafComparison> {
    let ow = leaf_weights(open);
    reference
        .iter()
        .map(|(index, w)| {
            let o = ow.get(index).copied().unwrap_or(0.0);
            LeafComparison {
                index: index.clone(),
                closed: *w,
                open: o,
                relative_error: ((o - w) / w).abs(),
            }
        })
        .collect()
}

fn worst(leaves: &[LeafComparison]) -> f64 {
    leaves.iter().map(|l| l.relative_error).fold(0.0, f64::max)
}

/// Finds the dephasing strength whose open-mode tree best reproduces the
/// leaves of `closed` with weight at least `min_weight`, by golden-section
/// search on `ln Λ` over `range`. The objective is the largest relative
/// leaf error.
#[allow(clippy::too_many_arguments)]
pub fn fit_dephasing_lambda(
    closed: &BranchTree,
    open_initial: &BranchState,
    hamiltonian: &HamiltonianSpec<f64>,
    povm: &Povm,
    dt: f64,
    min_weight: f64,
    range: (f64, f64),
    options: &ExtendOptions,
) -> Result<LambdaFit> {
    if !(range.0 > 0.0 && range.1 > range.0) {
        return Err(Error::InvalidSpec(format!("lambda range {range:?} must satisfy 0 < min < max")));
    }
    let mut reference: Vec<(BranchIndex, f64)> = closed
        .leaf_nodes()
        .filter(|n| n.weight >= min_weight)
        .map(|n| (n.index.clone(), n.weight))
        .collect();
    if reference.is_empty() {
        return Err(Error::InvalidSpec(format!("no closed leaf has weight >= {min_weight}")));
    }
    reference.sort_by(|a, b| a.0.cmp(&b.0));
    let depth = closed.depth;
    let open_tree = |lambda: f64| -> Result<BranchTree> {
        let spec = MasterEquationSpec {
            hamiltonian: hamiltonian.clone(),
            lambda,
        };
        let evo = Evolution::new(Dynamics::Open(spec), open_initial, None)?;
        grow_tree(open_initial.clone(), povm, &evo, dt, depth, options)
    };
    let error = |lambda: f64| -> Result<f64> { Ok(worst(&compare(&reference, &open_tree(lambda)?))) };

    let r = 0.5 * (5f64.sqrt() - 1.0);
    let (mut lo, mut hi) = (range.0.ln(), range.1.ln());
    let mut x1 = hi - r * (hi - lo);
    let mut x2 = lo + r * (hi - lo);
    let (mut f1, mut f2) = (error(x1.exp())?, error(x2.exp())?);
    for _ in 0..GOLDEN_ITERATIONS {
        if f1 < f2 {
            hi = x2;
            (x2, f2) = (x1, f1);
            x1 = hi - r * (hi - lo);
            f1 = error(x1.exp())?;
        } else {
            lo = x1;
            (x1, f1) = (x2, f2);
            x2 = lo + r * (hi - lo);
            f2 = error(x2.exp())?;
        }
    }
    let lambda = if f1 < f2 { x1 } else { x2 }.exp();
    let leaves = compare(&reference, &open_tree(lambda)?);
    Ok(LambdaFit {
        lambda,
        max_relative_error: worst(&leaves),
        error_at_zero: error(0.0)?,
        min_weight,
        leaves,
    })
}
