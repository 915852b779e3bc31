use super::{energy_scale, kinetic_multiplier, EnergyScale, EnvironmentSpec, HamiltonianSpec};
use crate::error::{Error, Result};
use crate::grid::{CompositeState, Grid, Spectral, WaveFunction};
use crate::scalar::{cis, Complex, Real};

/// Strang-split propagator for the system plus dephasing register.
///
/// Under `H_I = X ⊗ sum g_k sz_k` every register basis state `e` is
/// stationary, so its system component evolves with the effective potential
/// `V(x) + G(e) x + E(e)`.
pub struct ClosedPropagator<T: Real> {
    grid: Grid<T>,
    dt: T,
    spectral: Spectral<T>,
    kinetic: Vec<Complex<T>>,
    half_potential: Vec<Vec<Complex<T>>>,
    scratch: Vec<Complex<T>>,
}

impl<T: Real> ClosedPropagator<T> {
    pub fn new(grid: &Grid<T>, ham: &HamiltonianSpec<T>, env: &EnvironmentSpec<T>, dt: T) -> Result<Self> {
        ham.validate()?;
        env.validate()?;
        if !(dt > T::zero()) || !dt.is_finite() {
            return Err(Error::InvalidSpec(format!("dt = {dt} must be > 0")));
        }
        let hbar = grid.hbar();
        let x = grid.positions();
        let v: Vec<T> = x.iter().map(|&x| ham.potential(x)).collect();
        let half = T::lit(0.5) * dt / hbar;
        let half_potential = (0..1usize << env.env_qubits())
            .map(|e| {
                let g = env.branch_coupling(e);
                let en = env.branch_energy(e);
                x.iter()
                    .zip(&v)
                    .map(|(&x, &v)| cis(-(v + g * x + en) * half))
                    .collect()
            })
            .collect();
        Ok(ClosedPropagator {
            grid: *grid,
            dt,
            spectral: Spectral::for_grid(grid),
            kinetic: kinetic_multiplier(grid, ham.mass, dt),
            half_potential,
            scratch: Vec::new(),
        })
    }

    pub fn dt(&self) -> T {
        self.dt
    }

    pub fn env_qubits(&self) -> usize {
        self.half_potential.len().trailing_zeros() as usize
    }

    fn step_component(&mut self, e: usize, amps: &mut [Complex<T>], steps: usize) {
        let hp = &self.half_potential[e];
        for _ in 0..steps {
            amps.iter_mut().zip(hp).for_each(|(z, m)| *z = *z * *m);
            self.spectral
                .apply_fourier_multiplier(amps, &self.kinetic, &mut self.scratch);
            amps.iter_mut().zip(hp).for_each(|(z, m)| *z = *z * *m);
        }
    }

    pub fn advance(&mut self, state: &mut CompositeState<T>, steps: usize) -> Result<()> {
        self.grid.same_as(state.grid())?;
        if state.env_qubits() != self.env_qubits() {
            return Err(Error::InvalidState(format!(
                "state has {} register qubits, propagator {}",
                state.env_qubits(),
                self.env_qubits()
            )));
        }
        let n = self.grid.n_points();
        let amps = state.amplitudes_mut().as_mut_slice();
        for (e, chunk) in amps.chunks_exact_mut(n).enumerate() {
            self.step_component(e, chunk, steps);
        }
        Ok(())
    }

    /// Dense matrix of `steps` steps acting on register component `e`.
    pub fn component_matrix(&mut self, e: usize, steps: usize) -> nalgebra::DMatrix<Complex<T>> {
        let n = self.grid.n_points();
        let mut m = nalgebra::DMatrix::zeros(n, n);
        let mut col = vec![Complex::new(T::zero(), T::zero()); n];
        for i in 0..n {
            col.iter_mut().for_each(|z| *z = Complex::new(T::zero(), T::zero()));
            col[i] = Complex::new(T::one(), T::zero());
            self.step_component(e, &mut col, steps);
            m.column_mut(i).copy_from_slice(&col);
        }
        m
    }

    pub fn advance_wave(&mut self, psi: &mut WaveFunction<T>, steps: usize) -> Result<()> {
        self.grid.same_as(psi.grid())?;
        if self.env_qubits() != 0 {
            return Err(Error::InvalidState("propagator carries a register".into()));
        }
        self.step_component(0, psi.amplitudes_mut().as_mut_slice(), steps);
        Ok(())
    }

    /// Step-relevant rates for `state` under this run's Hamiltonian.
    pub fn energy_scale(state: &CompositeState<T>, ham: &HamiltonianSpec<T>, env: &EnvironmentSpec<T>) -> EnergyScale<T> {
        let grid = state.grid();
        let n = grid.n_points();
        let mut density = vec![T::zero(); n];
        for c in state.components() {
            density.iter_mut().zip(c).for_each(|(d, z)| *d += z.norm_sqr());
        }
        let spectral = Spectral::for_grid(grid);
        let p = grid.momenta();
        let mut buf: Vec<_> = state.amplitudes().iter().copied().collect();
        spectral.forward(&mut buf);
        let (mut num, mut den) = (T::zero(), T::zero());
        for (i, z) in buf.iter().enumerate() {
            num += z.norm_sqr() * p[i % n] * p[i % n];
            den += z.norm_sqr();
        }
        let max_g = env.couplings.iter().fold(T::zero(), |a, g| a + g.abs());
        energy_scale(grid, &density, num / den.max(T::min_positive_value()), ham, max_g, T::zero())
    }
}

/// Advances `state` by `steps` Strang steps of size `dt`.
pub fn evolve_closed<T: Real>(
    mut state: CompositeState<T>,
    ham: &HamiltonianSpec<T>,
    env: &EnvironmentSpec<T>,
    dt: T,
    steps: usize,
) -> Result<CompositeState<T>> {
    if env.env_qubits() != state.env_qubits() {
        return Err(Error::InvalidState(format!(
            "state has {} register qubits, environment {}",
            state.env_qubits(),
            env.env_qubits()
        )));
    }
    ClosedPropagator::energy_scale(&state, ham, env).check(dt)?;
    let mut prop = ClosedPropagator::new(state.grid(), ham, env, dt)?;
    prop.advance(&mut state, steps)?;
    Ok(state)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{coherent_state, partial_trace_env, CoherentStateSpec};

    fn grid() -> Grid<f64> {
        Grid::new(256, 40.0, 1.0).unwrap()
    }

    #[test]
    fn free_packet_moves_ballistically() {
        let g = grid();
        let sp = Spectral::for_grid(&g);
        let psi = coherent_state(&CoherentStateSpec::new(-3.0, 1.5, 1.0), &g).unwrap();
        let ham = HamiltonianSpec::free(2.0);
        let out = evolve_closed(CompositeState::from_system(psi), &ham, &EnvironmentSpec::none(), 0.01, 200).unwrap();
        assert!((out.norm_sqr() - 1.0).abs() < 1e-10);
        assert!((out.expectation_x() - (-3.0 + 1.5 * 2.0 / 2.0)).abs() < 1e-6);
        assert!((out.expectation_p(&sp) - 1.5).abs() < 1e-6);
    }

    #[test]
    fn harmonic_packet_follows_oscillator() {
        let g = grid();
        let (m, w, q, p) = (1.0, 1.3, 1.0, 0.5);
        let s = CoherentStateSpec::<f64>::default_sigma(1.0, m, w);
        let psi = coherent_state(&CoherentStateSpec::new(q, p, s), &g).unwrap();
        let ham = HamiltonianSpec::harmonic(m, w);
        let dt = 0.002;
        let steps = 1000;
        let out = evolve_closed(CompositeState::from_system(psi), &ham, &EnvironmentSpec::none(), dt, steps).unwrap();
        let t = dt * steps as f64;
        let exact = q * (w * t).cos() + p / (m * w) * (w * t).sin();
        assert!((out.expectation_x() - exact).abs() < 1e-5);
    }

    #[test]
    fn decoupled_register_keeps_purity() {
        let g = grid();
        let psi = coherent_state(&CoherentStateSpec::new(0.0, 0.0, 1.0), &g).unwrap();
        let env = EnvironmentSpec::new(vec![0.0; 3], vec![0.5, -0.2, 1.0]).unwrap();
        let state = CompositeState::with_plus_register(&psi, 3).unwrap();
        let out = evolve_closed(state, &HamiltonianSpec::harmonic(1.0, 1.0), &env, 0.004, 100).unwrap();
        assert!((partial_trace_env(&out).purity() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn rejects_large_step() {
        let g = grid();
        let psi = coherent_state(&CoherentStateSpec::new(0.0, 3.0, 1.0), &g).unwrap();
        let r = evolve_closed(CompositeState::from_system(psi), &HamiltonianSpec::free(1.0), &EnvironmentSpec::none(), 1.0, 1);
        assert!(matches!(r, Err(Error::UnstableStep { .. })));
    }

    #[test]
    fn strang_error_is_second_order() {
        let g = Grid::new(128, 20.0, 1.0).unwrap();
        let ham = HamiltonianSpec::quartic(1.0, 1.0, 0.5);
        let psi = coherent_state(&CoherentStateSpec::new(1.0, 0.0, 0.7), &g).unwrap();
        let run = |dt: f64, steps: usize| {
            let mut w = psi.clone();
            let mut prop = ClosedPropagator::new(&g, &ham, &EnvironmentSpec::none(), dt).unwrap();
            prop.advance_wave(&mut w, steps).unwrap();
            w
        };
        let t_end = 0.8;
        let reference = run(0.0025, 320);
        let err = |w: &WaveFunction<f64>| {
            w.amplitudes()
                .iter()
                .zip(reference.amplitudes().iter())
                .map(|(a, b)| (a - b).norm_sqr())
                .sum::<f64>()
                .sqrt()
        };
        let e1 = err(&run(t_end / 40.0, 40));
        let e2 = err(&run(t_end / 80.0, 80));
        let ratio = e1 / e2;
        assert!(ratio > 3.5 && ratio < 4.6, "ratio {ratio}");
    }

    #[test]
    fn dephasing_register_suppresses_coherence() {
        // Two separated packets; each qubit multiplies the cross term by cos(g Δx t / ħ).
        let g = Grid::new(256, 24.0, 1.0).unwrap();
        let a = coherent_state(&CoherentStateSpec::new(-2.0, 0.0, 0.5), &g).unwrap();
        let b = coherent_state(&CoherentStateSpec::new(2.0, 0.0, 0.5), &g).unwrap();
        let mut amps = a.amplitudes() + b.amplitudes();
        amps.iter_mut().for_each(|z| *z = *z * std::f64::consts::FRAC_1_SQRT_2);
        let psi = WaveFunction::new(g, amps).unwrap();
        let gs = vec![0.05, 0.08];
        let env = EnvironmentSpec::new(gs.clone(), vec![0.0; 2]).unwrap();
        let state = CompositeState::with_plus_register(&psi, 2).unwrap();
        let ham = HamiltonianSpec::free(1e9);
        let (dt, steps) = (0.01, 300);
        let out = evolve_closed(state, &ham, &env, dt, steps).unwrap();
        let rho = partial_trace_env(&out);
        let j = g.n_points() / 2 - 21;
        let k = g.n_points() / 2 + 21;
        let dx = g.position(k) - g.position(j);
        let t = dt * steps as f64;
        let factor: f64 = gs.iter().map(|g| (g * dx * t).cos()).product();
        let initial = psi.amplitudes()[j] * psi.amplitudes()[k].conj();
        let got = rho.elements()[(j, k)];
        assert!((got - initial * factor).norm() < 1e-6 * initial.norm().max(1.0), "{got} vs {}", initial * factor);
    }
}
