//! Discretized 1-D quantum kinematics on a periodic position grid.
//!
//! Amplitudes are stored in continuum normalization: a wavefunction satisfies
//! `sum |psi_j|^2 * dx = 1` and a density matrix `sum rho_jj * dx = 1`.
//! Dense operators act in the orthonormal grid basis, which makes `O psi`
//! and `O rho O'` independent of the normalization convention; only inner
//! products and traces pick up the factor `dx`.

mod checkpoint;
mod composite;
mod density;
mod operators;
mod wave;

use std::sync::Arc;

use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{Complex, Real};

pub use checkpoint::{read_amplitudes, write_amplitudes};
pub use composite::{partial_trace_env, CompositeState, MAX_ENV_QUBITS};
pub use density::DensityMatrix;
pub use operators::{
    expectation, momentum_operator_apply, position_operator, DenseOperator, DiagonalOperator,
    Identity, Momentum, Observable,
};
pub use wave::{coherent_state, gaussian_amplitudes, CoherentStateSpec, WaveFunction};

/// Periodic position grid `x_j = -L/2 + j dx` carrying the value of ħ used by
/// every spectral operation on it.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid<T> {
    n_points: usize,
    length: T,
    hbar: T,
}

impl<T: Real> Grid<T> {
    pub fn new(n_points: usize, length: T, hbar: T) -> Result<Self> {
        if n_points < 2 || !n_points.is_power_of_two() {
            return Err(Error::InvalidGrid(format!(
                "n_points = {n_points} must be a power of two >= 2"
            )));
        }
        if !(length > T::zero()) || !length.is_finite() {
            return Err(Error::InvalidGrid(format!("length = {length} must be > 0")));
        }
        if !(hbar > T::zero()) || !hbar.is_finite() {
            return Err(Error::InvalidGrid(format!("hbar = {hbar} must be > 0")));
        }
        Ok(Grid {
            n_points,
            length,
            hbar,
        })
    }

    #[inline]
    pub fn n_points(&self) -> usize {
        self.n_points
    }

    #[inline]
    pub fn length(&self) -> T {
        self.length
    }

    #[inline]
    pub fn hbar(&self) -> T {
        self.hbar
    }

    #[inline]
    pub fn spacing(&self) -> T {
        self.length / T::from_usize(self.n_points).unwrap()
    }

    #[inline]
    pub fn position(&self, j: usize) -> T {
        -self.length / T::lit(2.0) + T::from_usize(j).unwrap() * self.spacing()
    }

    pub fn positions(&self) -> Vec<T> {
        (0..self.n_points).map(|j| self.position(j)).collect()
    }

    /// Angular wavenumbers in FFT order.
    pub fn wavenumbers(&self) -> Vec<T> {
        let n = self.n_points;
        let dk = T::TAU() / self.length;
        (0..n)
            .map(|j| {
                let m = if j < n / 2 { j as f64 } else { j as f64 - n as f64 };
                T::lit(m) * dk
            })
            .collect()
    }

    /// Momentum eigenvalues `ħ k` in FFT order.
    pub fn momenta(&self) -> Vec<T> {
        self.wavenumbers()
            .into_iter()
            .map(|k| k * self.hbar)
            .collect()
    }

    /// Largest representable momentum magnitude, `π ħ / dx`.
    pub fn nyquist_momentum(&self) -> T {
        T::PI() * self.hbar / self.spacing()
    }

    pub(crate) fn same_as(&self, other: &Grid<T>) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::GridMismatch(format!("{self:?} vs {other:?}")))
        }
    }
}

/// Unitary FFT pair for one grid size.
#[derive(Clone)]
pub struct Spectral<T: Real> {
    n: usize,
    forward: Arc<dyn Fft<T>>,
    inverse: Arc<dyn Fft<T>>,
    scale: T,
}

impl<T: Real> std::fmt::Debug for Spectral<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Spectral").field("n", &self.n).finish()
    }
}

impl<T: Real> Spectral<T> {
    pub fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        Spectral {
            n,
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
            scale: T::one() / T::from_usize(n).unwrap().sqrt(),
        }
    }

    pub fn for_grid(grid: &Grid<T>) -> Self {
        Self::new(grid.n_points())
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// In-place unitary forward transform of every length-`n` chunk of `buf`.
    pub fn forward(&self, buf: &mut [Complex<T>]) {
        self.forward.process(buf);
        buf.iter_mut().for_each(|z| *z = *z * self.scale);
    }

    pub fn inverse(&self, buf: &mut [Complex<T>]) {
        self.inverse.process(buf);
        buf.iter_mut().for_each(|z| *z = *z * self.scale);
    }

    /// Applies `F^-1 diag(phase) F` to each length-`n` chunk of `buf`.
    pub fn apply_fourier_multiplier(
        &self,
        buf: &mut [Complex<T>],
        multiplier: &[Complex<T>],
        scratch: &mut Vec<Complex<T>>,
    ) {
        debug_assert_eq!(multiplier.len(), self.n);
        let need = self
            .forward
            .get_inplace_scratch_len()
            .max(self.inverse.get_inplace_scratch_len());
        if scratch.len() < need {
            scratch.resize(need, Complex::default());
        }
        self.forward.process_with_scratch(buf, &mut scratch[..need]);
        // both normalization factors folded into one pass
        let s = self.scale * self.scale;
        for chunk in buf.chunks_exact_mut(self.n) {
            for (z, m) in chunk.iter_mut().zip(multiplier) {
                *z = *z * *m * s;
            }
        }
        self.inverse.process_with_scratch(buf, &mut scratch[..need]);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_non_power_of_two() {
        assert!(Grid::new(12, 1.0, 1.0).is_err());
        assert!(Grid::new(16, 0.0, 1.0).is_err());
        assert!(Grid::new(16, 1.0, -1.0).is_err());
    }

    #[test]
    fn positions_start_at_minus_half_length() {
        let g = Grid::new(4, 4.0_f64, 1.0).unwrap();
        assert_eq!(g.positions(), vec![-2.0, -1.0, 0.0, 1.0]);
        assert_eq!(g.spacing(), 1.0);
    }

    #[test]
    fn wavenumbers_in_fft_order() {
        let g = Grid::new(4, std::f64::consts::TAU, 1.0).unwrap();
        assert_eq!(g.wavenumbers(), vec![0.0, 1.0, -2.0, -1.0]);
    }

    #[test]
    fn spectral_roundtrip_is_identity() {
        let sp = Spectral::<f64>::new(16);
        let orig: Vec<_> = (0..16)
            .map(|j| Complex::new(j as f64, -(j as f64) * 0.5))
            .collect();
        let mut buf = orig.clone();
        sp.forward(&mut buf);
        sp.inverse(&mut buf);
        for (a, b) in buf.iter().zip(&orig) {
            assert!((a - b).norm() < 1e-12);
        }
    }
}
