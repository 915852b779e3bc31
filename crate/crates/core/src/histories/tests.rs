use super::*;
use crate::grid::{coherent_state, CoherentStateSpec, Grid, WaveFunction};
use crate::partition::{build_povm, PhasePartition, Window};

fn grid() -> Grid<f64> {
    Grid::new(64, 16.0, 1.0).unwrap()
}

fn packet(q: f64, p: f64) -> WaveFunction<f64> {
    coherent_state(&CoherentStateSpec::new(q, p, 0.7071), &grid()).unwrap()
}

fn quad_povm(nq: usize, np: usize) -> Povm {
    let part = PhasePartition::regular(Window::new((-6.0, 6.0), (-5.0, 5.0)), nq, np, 6, 1.0).unwrap();
    build_povm(&part, 0.7071, &grid()).unwrap()
}

fn harmonic_closed() -> Dynamics {
    Dynamics::Closed {
        hamiltonian: HamiltonianSpec::harmonic(1.0, 1.0),
        environment: EnvironmentSpec::none(),
    }
}

#[test]
fn single_cell_keeps_a_chain() {
    let povm = quad_povm(1, 1);
    let init = BranchState::pure(&packet(1.0, 0.5));
    let evo = Evolution::new(harmonic_closed(), &init, None).unwrap();
    let tree = grow_tree(init, &povm, &evo, 0.5, 3, &ExtendOptions::default()).unwrap();
    assert_eq!(tree.leaves.len(), 1);
    assert!((tree.leaf_weight_sum() - 1.0).abs() < 1e-3);
    assert!((tree.total_mass() - 1.0).abs() < 1e-12);
}

#[test]
fn symmetric_superposition_splits_evenly() {
    let g = grid();
    let a = packet(-2.0, 0.0);
    let b = packet(2.0, 0.0);
    let amps = (a.amplitudes() + b.amplitudes()) * nalgebra::Complex::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    let psi = WaveFunction::new(g, amps).unwrap().normalized().unwrap();
    let povm = quad_povm(2, 1);
    let init = BranchState::pure(&psi);
    let sp = split(&init, &povm).unwrap();
    assert_eq!(sp.children.len(), 2);
    let (w0, w1) = (sp.children[0].2, sp.children[1].2);
    assert!((w0 - w1).abs() < 1e-6, "{w0} {w1}");
    assert!((w0 - 0.5).abs() < 1e-4, "{w0}");
}

/// Dense `√Π` from an explicit sum of outer products and an eigen square root.
fn dense_sqrt(povm: &Povm, a: usize) -> DMatrix<C64> {
    let m = povm.elements[a].matrix();
    let eig = m.symmetric_eigen();
    let d = eig.eigenvalues.map(|l| C64::new(l.max(0.0).sqrt(), 0.0));
    &eig.eigenvectors * DMatrix::from_diagonal(&d) * eig.eigenvectors.adjoint()
}

#[test]
fn depth_three_matches_explicit_chains() {
    let g = grid();
    let povm = quad_povm(2, 2);
    let psi = packet(1.0, 0.5);
    let init = BranchState::pure(&psi);
    let evo = Evolution::new(harmonic_closed(), &init, None).unwrap();
    let dt = 0.6;
    let tree = grow_tree(init, &povm, &evo, dt, 3, &ExtendOptions::default()).unwrap();
    assert!((tree.total_mass() - 1.0).abs() < 1e-6);
    assert!(tree.escaped_mass.abs() < 1e-3);

    // U as a dense matrix, column by column
    let n = g.n_points();
    let mut u = DMatrix::<C64>::zeros(n, n);
    for k in 0..n {
        let mut e = BranchState::Pure(CompositeState::new(g, 0, nalgebra::DVector::from_fn(n, |j, _| C64::new((j == k) as i32 as f64, 0.0))).unwrap());
        evo.advance(&mut e, dt, &mut WarningCounters::default()).unwrap();
        if let BranchState::Pure(s) = e {
            u.set_column(k, s.amplitudes());
        }
    }
    let roots: Vec<_> = (0..povm.len()).map(|a| dense_sqrt(&povm, a)).collect();
    let v0 = psi.amplitudes().clone() * C64::new(g.spacing().sqrt(), 0.0);
    let mut total = 0.0;
    for a in 0..4 {
        for b in 0..4 {
            for c in 0..4 {
                let v = &roots[c] * (&u * (&roots[b] * (&u * (&roots[a] * (&u * &v0)))));
                let w = v.norm_squared();
                total += w;
                let idx = vec![povm.elements[a].index(), povm.elements[b].index(), povm.elements[c].index()];
                let leaf = tree.find_leaf(&idx).map(|l| l.weight).unwrap_or(0.0);
                assert!((leaf - w).abs() < 1e-9, "{idx:?}: {leaf} vs {w}");
            }
        }
    }
    assert!((total - tree.leaf_weight_sum()).abs() < 1e-9);
}

#[test]
fn diagonal_functional_is_weight() {
    let povm = quad_povm(2, 2);
    let init = BranchState::pure(&packet(0.5, 0.5));
    let evo = Evolution::new(harmonic_closed(), &init, None).unwrap();
    let tree = grow_tree(init, &povm, &evo, 0.5, 2, &ExtendOptions::default()).unwrap();
    let leaves: Vec<_> = tree.leaf_nodes().collect();
    for l in &leaves {
        let d = decoherence_functional(&tree, &l.index, &l.index).unwrap();
        assert!((d.re - l.weight).abs() < 1e-12 && d.im.abs() < 1e-12);
    }
    let d = decoherence_functional(&tree, &leaves[0].index, &leaves[1].index).unwrap();
    assert!(d.norm() <= (leaves[0].weight * leaves[1].weight).sqrt() + 1e-12);
    assert!(matches!(
        decoherence_functional(&tree, &[(9, 9), (9, 9)], &leaves[0].index),
        Err(Error::UnknownBranch(_))
    ));
}

#[test]
fn open_mode_rejects_functional_and_matches_closed_weights() {
    let povm = quad_povm(2, 2);
    let psi = packet(1.0, -0.5);
    let closed_init = BranchState::pure(&psi);
    let evo = Evolution::new(harmonic_closed(), &closed_init, Some(0.004)).unwrap();
    let closed = grow_tree(closed_init, &povm, &evo, 0.5, 2, &ExtendOptions::default()).unwrap();
    let open_init = BranchState::mixed(&psi);
    let open_dyn = Dynamics::Open(MasterEquationSpec {
        hamiltonian: HamiltonianSpec::harmonic(1.0, 1.0),
        lambda: 0.0,
    });
    let evo = Evolution::new(open_dyn, &open_init, Some(0.004)).unwrap();
    let open = grow_tree(open_init, &povm, &evo, 0.5, 2, &ExtendOptions::default()).unwrap();
    for l in closed.leaf_nodes() {
        let o = open.find_leaf(&l.index).unwrap();
        assert!((o.weight - l.weight).abs() < 1e-9);
    }
    let idx = &closed.leaf_nodes().next().unwrap().index;
    assert!(matches!(decoherence_functional(&open, idx, idx), Err(Error::ModeMismatch(_))));
}

#[test]
fn pruning_bookkeeping() {
    let povm = quad_povm(2, 2);
    let init = BranchState::pure(&packet(1.0, 0.5));
    let evo = Evolution::new(harmonic_closed(), &init, None).unwrap();
    let tree = grow_tree(init, &povm, &evo, 0.5, 2, &ExtendOptions::default()).unwrap();
    let same = prune(tree.clone(), 0.0);
    assert_eq!(same.leaves, tree.leaves);
    let heaviest = tree
        .leaf_nodes()
        .map(|n| n.weight)
        .fold(0.0, f64::max);
    let pruned = prune(tree.clone(), heaviest * 0.999);
    assert_eq!(pruned.leaves.len(), 1);
    assert!((pruned.pruned_mass - (tree.pruned_mass + tree.leaf_weight_sum() - heaviest)).abs() < 1e-12);
    assert!((pruned.total_mass() - 1.0).abs() < 1e-9);
}

#[test]
fn light_pruning_barely_moves_expectations() {
    let povm = quad_povm(3, 2);
    let init = BranchState::pure(&packet(1.0, 0.5));
    let evo = Evolution::new(harmonic_closed(), &init, None).unwrap();
    let full = grow_tree(init.clone(), &povm, &evo, 0.4, 4, &ExtendOptions::default()).unwrap();
    let opts = ExtendOptions {
        epsilon_prune: 1e-6,
        ..Default::default()
    };
    let light = grow_tree(init, &povm, &evo, 0.4, 4, &opts).unwrap();
    assert!((light.total_mass() - 1.0).abs() < 1e-6);
    for l in light.leaf_nodes() {
        let f = full.find_leaf(&l.index).unwrap();
        assert!((f.q - l.q).abs() < 1e-4 && (f.p - l.p).abs() < 1e-4);
    }
}

#[test]
fn leaf_cap_enforced() {
    let povm = quad_povm(3, 2);
    let init = BranchState::pure(&packet(0.0, 0.0));
    let evo = Evolution::new(harmonic_closed(), &init, None).unwrap();
    let opts = ExtendOptions {
        leaf_cap: 3,
        ..Default::default()
    };
    assert!(matches!(
        grow_tree(init, &povm, &evo, 0.5, 2, &opts),
        Err(Error::TooManyLeaves { .. })
    ));
}

#[test]
fn dump_lists_every_node() {
    let povm = quad_povm(2, 1);
    let init = BranchState::pure(&packet(0.0, 0.0));
    let evo = Evolution::new(harmonic_closed(), &init, None).unwrap();
    let tree = grow_tree(init, &povm, &evo, 0.5, 2, &ExtendOptions::default()).unwrap();
    let mut buf = Vec::new();
    tree.write_json(&mut buf).unwrap();
    let v: serde_json::Value = serde_json::from_slice(&buf).unwrap();
    assert_eq!(v["nodes"].as_array().unwrap().len(), tree.nodes.len());
    assert_eq!(v["depth"], 2);
}

#[test]
fn cached_interval_matches_substeps() {
    let g = grid();
    let psi = packet(1.0, -0.5);
    let init = BranchState::Pure(CompositeState::with_plus_register(&psi, 2).unwrap());
    let dynamics = Dynamics::Closed {
        hamiltonian: HamiltonianSpec::quartic(1.0, 1.0, 0.1),
        environment: EnvironmentSpec::new(vec![0.3, 0.1], vec![0.2, 0.0]).unwrap(),
    };
    let plain = Evolution::new(dynamics, &init, None).unwrap();
    let cached = plain.clone().cached(&g, 0.4).unwrap();
    let mut w = WarningCounters::default();
    let (mut a, mut b) = (init.clone(), init.clone());
    for _ in 0..3 {
        plain.advance(&mut a, 0.4, &mut w).unwrap();
        cached.advance(&mut b, 0.4, &mut w).unwrap();
    }
    let diff = match (&a, &b) {
        (BranchState::Pure(x), BranchState::Pure(y)) => (x.amplitudes() - y.amplitudes()).camax(),
        _ => unreachable!(),
    };
    assert!(diff < 1e-10, "{diff}");
    // other interval lengths fall back to substeps
    let (mut a, mut b) = (init.clone(), init);
    plain.advance(&mut a, 0.3, &mut w).unwrap();
    cached.advance(&mut b, 0.3, &mut w).unwrap();
    assert_eq!(a, b);
}

#[test]
fn lambda_fit_recovers_a_known_rate() {
    let povm = quad_povm(3, 1);
    let psi = packet(1.0, 0.0);
    let init = BranchState::mixed(&psi);
    let ham = HamiltonianSpec::harmonic(1.0, 1.0);
    let truth = 0.2;
    let spec = MasterEquationSpec {
        hamiltonian: ham.clone(),
        lambda: truth,
    };
    let evo = Evolution::new(Dynamics::Open(spec), &init, None).unwrap();
    let reference = grow_tree(init.clone(), &povm, &evo, 0.5, 2, &ExtendOptions::default()).unwrap();
    let fit = fit_dephasing_lambda(&reference, &init, &ham, &povm, 0.5, 0.01, (1e-3, 10.0), &ExtendOptions::default()).unwrap();
    assert!((fit.lambda / truth - 1.0).abs() < 0.01, "{}", fit.lambda);
    assert!(fit.max_relative_error < 1e-3, "{}", fit.max_relative_error);
    assert!(fit.error_at_zero > 10.0 * fit.max_relative_error);
    assert!(fit.leaves.iter().all(|l| l.closed >= 0.01));
    assert!(fit_dephasing_lambda(&reference, &init, &ham, &povm, 0.5, 0.01, (0.0, 1.0), &ExtendOptions::default()).is_err());
}
