use super::*;
use crate::dynamics::{evolve_closed, EnvironmentSpec, HamiltonianSpec};
use crate::grid::{coherent_state, CoherentStateSpec, CompositeState, Grid, WaveFunction};
use crate::histories::{split, grow_tree, Dynamics, ExtendOptions};
use crate::partition::{build_povm, PhaseCell, PhasePartition, Window};
use nalgebra::{Complex, DMatrix, DVector};

const SIGMA: f64 = 0.7071;

fn grid() -> Grid<f64> {
    Grid::new(64, 16.0, 1.0).unwrap()
}

fn packet(q: f64, p: f64) -> WaveFunction<f64> {
    coherent_state(&CoherentStateSpec::new(q, p, SIGMA), &grid()).unwrap()
}

fn window() -> Window {
    Window::new((-6.0, 6.0), (-5.0, 5.0))
}

fn povm(nq: usize, np: usize) -> Povm {
    let part = PhasePartition::regular(window(), nq, np, 6, 1.0).unwrap();
    build_povm(&part, SIGMA, &grid()).unwrap()
}

fn frozen() -> Dynamics {
    Dynamics::Closed {
        hamiltonian: HamiltonianSpec::free(1e15),
        environment: EnvironmentSpec::none(),
    }
}

fn harmonic() -> Dynamics {
    Dynamics::Closed {
        hamiltonian: HamiltonianSpec::harmonic(1.0, 1.0),
        environment: EnvironmentSpec::none(),
    }
}

/// Mass of the coherent-state Husimi density of `|z0>` over a cell,
/// by composite Simpson integration of the closed-form density.
fn husimi_mass(q0: f64, p0: f64, q: (f64, f64), p: (f64, f64)) -> f64 {
    let simpson = |f: &dyn Fn(f64) -> f64, a: f64, b: f64| {
        let m = 2000;
        let h = (b - a) / m as f64;
        let mut s = f(a) + f(b);
        for k in 1..m {
            s += f(a + k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 };
        }
        s * h / 3.0
    };
    let fq = |x: f64| (-(x - q0).powi(2) / (4.0 * SIGMA * SIGMA)).exp();
    let fp = |y: f64| (-(y - p0).powi(2) * SIGMA * SIGMA).exp();
    simpson(&fq, q.0, q.1) * simpson(&fp, p.0, p.1) / (2.0 * std::f64::consts::PI)
}

#[test]
fn single_cell_step_is_certain() {
    let pv = povm(1, 1);
    let init = BranchState::pure(&packet(1.0, 0.5));
    let evo = Evolution::new(harmonic(), &init, None).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..5 {
        let out = sample_step(&init, &pv, &evo, 0.3, 1e-3, &mut rng, &mut WarningCounters::default()).unwrap();
        assert_eq!(out.cell, (0, 0));
        assert!((out.probability - 1.0).abs() < 1e-3);
        assert!((out.state.weight() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn three_cells_follow_quadrature_weights() {
    let pv = povm(3, 1);
    let (q0, p0) = (-0.8, 0.3);
    let init = BranchState::pure(&packet(q0, p0));
    let evo = Evolution::new(frozen(), &init, None).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let n = 10_000;
    let mut counts = [0usize; 3];
    for _ in 0..n {
        let out = sample_step(&init, &pv, &evo, 1e-3, 1e-3, &mut rng, &mut WarningCounters::default()).unwrap();
        counts[out.cell.0 as usize] += 1;
    }
    for (i, c) in pv.elements.iter().enumerate() {
        let cell = c.cell;
        let w = husimi_mass(q0, p0, cell.q_range, cell.p_range);
        let f = counts[i] as f64 / n as f64;
        let sd = (w * (1.0 - w) / n as f64).sqrt();
        assert!((f - w).abs() < 3.0 * sd, "cell {i}: {f} vs {w} ± {sd}");
    }
}

#[test]
fn escaped_state_is_an_error() {
    let part = PhasePartition::regular(Window::new((-6.0, -2.0), (-5.0, 5.0)), 1, 1, 6, 1.0).unwrap();
    let pv = build_povm(&part, SIGMA, &grid()).unwrap();
    let init = BranchState::pure(&packet(3.0, 0.0));
    let evo = Evolution::new(frozen(), &init, None).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let r = sample_step(&init, &pv, &evo, 1e-3, 1e-3, &mut rng, &mut WarningCounters::default());
    assert!(matches!(r, Err(Error::EscapedWindow(_))));
}

#[test]
fn stop_policy_truncates_escaped_samples() {
    let part = PhasePartition::regular(Window::new((-7.5, -1.0), (-5.0, 5.0)), 1, 1, 6, 1.0).unwrap();
    let pv = build_povm(&part, SIGMA, &grid()).unwrap();
    // swings right, out of the window
    let init = BranchState::pure(&packet(-4.0, 0.0));
    let evo = Evolution::new(harmonic(), &init, None).unwrap();
    let mut w = WarningCounters::default();
    let r = sample_trajectory(&init, &pv, &evo, 0.25, 8, 5, 0, 1e-2, EscapePolicy::Error, &mut w);
    assert!(matches!(r, Err(Error::EscapedWindow(_))));
    let t = sample_trajectory(&init, &pv, &evo, 0.25, 8, 5, 0, 1e-2, EscapePolicy::Stop, &mut w).unwrap();
    let at = t.escaped_at.unwrap();
    assert!(t.len() < 9 && (at - t.len() as f64 * 0.25).abs() < 1e-12);
    assert_eq!(t.branch_index.len(), t.len() - 1);
    let whole = sample_trajectory(&init, &pv, &evo, 0.25, 1, 5, 1, 1e-2, EscapePolicy::Stop, &mut w).unwrap();
    assert!(whole.escaped_at.is_none() && whole.len() == 2);
}

#[test]
fn expectations_of_simple_states() {
    let (q, p) = branch_expectations(&BranchState::pure(&packet(2.0, -1.0)));
    assert!((q - 2.0).abs() < 1e-5 && (p + 1.0).abs() < 1e-5);
    let a = packet(-2.0, 0.0);
    let b = packet(2.0, 0.0);
    let cat = WaveFunction::new(grid(), a.amplitudes() + b.amplitudes())
        .unwrap()
        .normalized()
        .unwrap();
    let (q, p) = branch_expectations(&BranchState::pure(&cat));
    assert!(q.abs() < 1e-8 && p.abs() < 1e-8);
}

#[test]
fn projected_expectations_match_dense_oracle() {
    let g = grid();
    let n = g.n_points();
    // half-space cell q < 0 applied to a packet straddling the edge
    let cells = vec![
        PhaseCell {
            index: (0, 0),
            q_range: (-6.0, 0.0),
            p_range: (-5.0, 5.0),
        },
        PhaseCell {
            index: (1, 0),
            q_range: (0.0, 6.0),
            p_range: (-5.0, 5.0),
        },
    ];
    let part = PhasePartition::new(cells, window(), 6, 1.0).unwrap();
    let pv = build_povm(&part, SIGMA, &g).unwrap();
    let psi = packet(0.4, 0.7);
    let sp = split(&BranchState::pure(&psi), &pv).unwrap();
    let (a, child, _) = sp.children.iter().find(|c| c.0 == 0).unwrap();
    let (q, p) = branch_expectations(&child.normalized());

    let m = pv.elements[*a].matrix();
    let eig = m.symmetric_eigen();
    let root = &eig.eigenvectors
        * DMatrix::from_diagonal(&eig.eigenvalues.map(|l| Complex::new(l.max(0.0).sqrt(), 0.0)))
        * eig.eigenvectors.adjoint();
    let v = &root * psi.amplitudes();
    let norm = v.norm_squared();
    let x = g.positions();
    let q_ref = v.iter().zip(&x).map(|(z, x)| z.norm_sqr() * x).sum::<f64>() / norm;
    // P = F† diag(ħk) F with an explicit DFT matrix
    let k = g.wavenumbers();
    let f = DMatrix::from_fn(n, n, |r, c| {
        Complex::from_polar(1.0 / (n as f64).sqrt(), -2.0 * std::f64::consts::PI * (r * c) as f64 / n as f64)
    });
    let pmat = f.adjoint() * DMatrix::from_diagonal(&DVector::from_fn(n, |r, _| Complex::new(g.hbar() * k[r], 0.0))) * &f;
    let p_ref = (v.adjoint() * &pmat * &v)[(0, 0)].re / norm;
    assert!((q - q_ref).abs() < 1e-8, "{q} vs {q_ref}");
    assert!((p - p_ref).abs() < 1e-8, "{p} vs {p_ref}");
}

#[test]
fn single_cell_run_follows_unmeasured_motion() {
    let pv = povm(1, 1);
    let psi = packet(1.0, 0.5);
    let init = BranchState::pure(&psi);
    let evo = Evolution::new(harmonic(), &init, None).unwrap();
    let ens = run_ensemble(&init, &pv, &evo, 0.5, 6, 1, 9, &EnsembleOptions::default()).unwrap();
    let t = &ens.samples[0];
    let mut state = CompositeState::from_system(psi);
    let ham = HamiltonianSpec::harmonic(1.0, 1.0);
    let spectral = crate::grid::Spectral::for_grid(&grid());
    for k in 1..=6 {
        let steps = evo.substeps(0.5);
        state = evolve_closed(state, &ham, &EnvironmentSpec::none(), 0.5 / steps as f64, steps).unwrap();
        let q = state.expectation_x();
        let p = state.expectation_p(&spectral);
        assert!((t.q_values[k] - q).abs() < 1e-3 && (t.p_values[k] - p).abs() < 1e-3);
    }
}

#[test]
fn ensembles_are_reproducible() {
    let pv = povm(3, 2);
    let init = BranchState::pure(&packet(0.0, 0.0));
    let evo = Evolution::new(harmonic(), &init, None).unwrap();
    let run = |seed| run_ensemble(&init, &pv, &evo, 0.5, 3, 16, seed, &EnsembleOptions::default()).unwrap();
    let a = run(5);
    let b = run(5);
    let c = run(6);
    assert_eq!(a.summary, b.summary);
    assert_eq!(a.samples, b.samples);
    assert_ne!(a.samples, c.samples);
}

#[test]
fn step_products_match_tree_weights() {
    let pv = povm(3, 2);
    let init = BranchState::pure(&packet(0.5, 0.5));
    let evo = Evolution::new(harmonic(), &init, None).unwrap();
    let tree = grow_tree(init.clone(), &pv, &evo, 0.5, 3, &ExtendOptions::default()).unwrap();
    let ens = run_ensemble(&init, &pv, &evo, 0.5, 3, 20, 17, &EnsembleOptions::default()).unwrap();
    for s in &ens.samples {
        let leaf = tree.find_leaf(&s.branch_index).unwrap();
        assert!((s.log_weight.exp() - leaf.weight).abs() < 1e-9);
        assert!((s.q_values[3] - leaf.q).abs() < 1e-9);
    }
}

#[test]
fn branches_stay_localized() {
    let pv = povm(4, 2);
    let init = BranchState::pure(&packet(0.5, 0.5));
    let evo = Evolution::new(harmonic(), &init, None).unwrap();
    let ens = run_ensemble(&init, &pv, &evo, 0.5, 4, 32, 2, &EnsembleOptions::default()).unwrap();
    let wq = 12.0 / 4.0;
    for s in &ens.samples {
        assert!(s.max_spread <= wq + 3.0 * SIGMA, "{}", s.max_spread);
    }
}

#[test]
fn csv_has_schema_and_one_row_per_time() {
    let pv = povm(2, 1);
    let init = BranchState::pure(&packet(0.0, 0.0));
    let evo = Evolution::new(harmonic(), &init, None).unwrap();
    let ens = run_ensemble(&init, &pv, &evo, 0.5, 2, 3, 1, &EnsembleOptions::default()).unwrap();
    let mut buf = Vec::new();
    ens.samples[0].write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let lines: Vec<_> = text.lines().collect();
    assert_eq!(lines[0], "t,q,p,cell_q_index,cell_p_index,step_prob");
    assert_eq!(lines.len(), 4);
    let dir = tempfile::tempdir().unwrap();
    let files = ens.write_outputs(dir.path()).unwrap();
    assert_eq!(files.len(), 4);
}
