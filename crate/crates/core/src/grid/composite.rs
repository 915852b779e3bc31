use nalgebra::{DMatrix, DVector};

use super::density::adjoint;
use super::{DensityMatrix, Grid, Spectral, WaveFunction};
use crate::error::{Error, Result};
use crate::scalar::{Complex, Real};

pub const MAX_ENV_QUBITS: usize = 10;

/// Pure state of the system and a qubit register.
///
/// Amplitudes are environment-major: entry `e * n + j` is the amplitude of
/// `|x_j> ⊗ |e>`, so each environment basis state owns a contiguous system
/// wavefunction. Bit `k` of `e` set means qubit `k` is in `|1>`.
#[derive(Clone, Debug, PartialEq)]
pub struct CompositeState<T: Real> {
    grid: Grid<T>,
    env_qubits: usize,
    amplitudes: DVector<Complex<T>>,
}

impl<T: Real> CompositeState<T> {
    pub fn new(grid: Grid<T>, env_qubits: usize, amplitudes: DVector<Complex<T>>) -> Result<Self> {
        if env_qubits > MAX_ENV_QUBITS {
            return Err(Error::InvalidState(format!(
                "env_qubits = {env_qubits} exceeds {MAX_ENV_QUBITS}"
            )));
        }
        let expected = grid.n_points() << env_qubits;
        if amplitudes.len() != expected {
            return Err(Error::InvalidState(format!(
                "{} amplitudes, expected {expected}",
                amplitudes.len()
            )));
        }
        Ok(CompositeState {
            grid,
            env_qubits,
            amplitudes,
        })
    }

    pub fn from_system(psi: WaveFunction<T>) -> Self {
        let grid = *psi.grid();
        CompositeState {
            grid,
            env_qubits: 0,
            amplitudes: psi.into_amplitudes(),
        }
    }

    /// `psi ⊗ env`, where `env` has `2^m` amplitudes.
    pub fn product(psi: &WaveFunction<T>, env: &[Complex<T>]) -> Result<Self> {
        if !env.len().is_power_of_two() {
            return Err(Error::InvalidState(format!(
                "environment vector length {} is not a power of two",
                env.len()
            )));
        }
        let m = env.len().trailing_zeros() as usize;
        let n = psi.grid().n_points();
        let mut amps = DVector::zeros(n << m);
        for (e, c) in env.iter().enumerate() {
            for (j, a) in psi.amplitudes().iter().enumerate() {
                amps[e * n + j] = *a * *c;
            }
        }
        Self::new(*psi.grid(), m, amps)
    }

    /// `psi ⊗ |+>^{⊗m}`.
    pub fn with_plus_register(psi: &WaveFunction<T>, env_qubits: usize) -> Result<Self> {
        let dim = 1usize << env_qubits;
        let c = Complex::new(T::one() / T::from_usize(dim).unwrap().sqrt(), T::zero());
        Self::product(psi, &vec![c; dim])
    }

    #[inline]
    pub fn grid(&self) -> &Grid<T> {
        &self.grid
    }

    #[inline]
    pub fn env_qubits(&self) -> usize {
        self.env_qubits
    }

    #[inline]
    pub fn env_dim(&self) -> usize {
        1 << self.env_qubits
    }

    #[inline]
    pub fn amplitudes(&self) -> &DVector<Complex<T>> {
        &self.amplitudes
    }

    #[inline]
    pub fn amplitudes_mut(&mut self) -> &mut DVector<Complex<T>> {
        &mut self.amplitudes
    }

    pub fn component(&self, e: usize) -> &[Complex<T>] {
        let n = self.grid.n_points();
        &self.amplitudes.as_slice()[e * n..(e + 1) * n]
    }

    pub fn components(&self) -> impl Iterator<Item = &[Complex<T>]> {
        self.amplitudes.as_slice().chunks_exact(self.grid.n_points())
    }

    pub fn components_mut(&mut self) -> impl Iterator<Item = &mut [Complex<T>]> {
        let n = self.grid.n_points();
        self.amplitudes.as_mut_slice().chunks_exact_mut(n)
    }

    /// The system wavefunction when the register is empty.
    pub fn system(&self) -> Option<WaveFunction<T>> {
        (self.env_qubits == 0).then(|| WaveFunction::new(self.grid, self.amplitudes.clone()).unwrap())
    }

    pub fn norm_sqr(&self) -> T {
        self.amplitudes
            .iter()
            .fold(T::zero(), |a, z| a + z.norm_sqr())
            * self.grid.spacing()
    }

    pub fn normalized(mut self) -> Result<Self> {
        let n2 = self.norm_sqr();
        if !(n2 > T::zero()) || !n2.is_finite() {
            return Err(Error::InvalidState(format!("cannot normalize state with norm² {n2}")));
        }
        let s = T::one() / n2.sqrt();
        self.amplitudes.iter_mut().for_each(|z| *z = *z * s);
        Ok(self)
    }

    pub fn inner(&self, other: &CompositeState<T>) -> Complex<T> {
        self.amplitudes
            .iter()
            .zip(other.amplitudes.iter())
            .fold(Complex::default(), |a, (x, y)| a + x.conj() * y)
            * self.grid.spacing()
    }

    /// `<X ⊗ I>` divided by the squared norm.
    pub fn expectation_x(&self) -> T {
        let n = self.grid.n_points();
        let x = self.grid.positions();
        let mut num = T::zero();
        let mut den = T::zero();
        for (i, z) in self.amplitudes.iter().enumerate() {
            let w = z.norm_sqr();
            num += w * x[i % n];
            den += w;
        }
        num / den
    }

    /// `<P ⊗ I>` divided by the squared norm.
    pub fn expectation_p(&self, spectral: &Spectral<T>) -> T {
        let p = self.grid.momenta();
        let mut buf: Vec<_> = self.amplitudes.iter().copied().collect();
        spectral.forward(&mut buf);
        let n = self.grid.n_points();
        let mut num = T::zero();
        let mut den = T::zero();
        for (i, z) in buf.iter().enumerate() {
            let w = z.norm_sqr();
            num += w * p[i % n];
            den += w;
        }
        num / den
    }
}

/// `Tr_E |Psi><Psi|`. The trace equals the state's squared norm.
pub fn partial_trace_env<T: Real>(state: &CompositeState<T>) -> DensityMatrix<T> {
    let n = state.grid.n_points();
    let a = DMatrix::from_column_slice(n, state.env_dim(), state.amplitudes.as_slice());
    DensityMatrix::new(state.grid, &a * adjoint(&a)).expect("shape is n x n by construction")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{coherent_state, CoherentStateSpec};

    fn grid() -> Grid<f64> {
        Grid::new(64, 16.0, 1.0).unwrap()
    }

    #[test]
    fn product_state_traces_to_pure() {
        let g = grid();
        let psi = coherent_state(&CoherentStateSpec::new(1.0, 0.3, 1.0), &g).unwrap();
        let env = [Complex::new(0.6, 0.0), Complex::new(0.0, 0.8)];
        let s = CompositeState::product(&psi, &env).unwrap();
        let rho = partial_trace_env(&s);
        let pure = DensityMatrix::from_pure(&psi);
        let diff = (rho.elements() - pure.elements()).camax();
        assert!(diff < 1e-10);
    }

    #[test]
    fn entangled_orthogonal_branches_have_half_purity() {
        let g = grid();
        let a = coherent_state(&CoherentStateSpec::new(-4.5, 0.0, 0.6), &g).unwrap();
        let b = coherent_state(&CoherentStateSpec::new(4.5, 0.0, 0.6), &g).unwrap();
        assert!(a.inner(&b).norm() < 1e-10);
        let n = g.n_points();
        let r = std::f64::consts::FRAC_1_SQRT_2;
        let mut amps = DVector::zeros(2 * n);
        for j in 0..n {
            amps[j] = a.amplitudes()[j] * r;
            amps[n + j] = b.amplitudes()[j] * r;
        }
        let s = CompositeState::new(g, 1, amps).unwrap();
        let rho = partial_trace_env(&s);
        assert!((rho.purity() - 0.5).abs() < 1e-10);
        let expected = DensityMatrix::mixture(&[0.5, 0.5], &[a, b]).unwrap();
        assert!((rho.elements() - expected.elements()).camax() < 1e-10);
    }

    #[test]
    fn rejects_oversized_register() {
        let g = Grid::new(2, 1.0, 1.0).unwrap();
        assert!(CompositeState::<f64>::new(g, 11, DVector::zeros(2 << 11)).is_err());
    }
}
