use nalgebra::DMatrix;

use super::{DensityMatrix, Grid, Spectral, WaveFunction};
use crate::error::{Error, Result};
use crate::scalar::{Complex, Real};

/// Anything whose trace against a density matrix can be taken.
pub trait Observable<T: Real> {
    /// `Tr[rho O]` before the hermiticity check.
    fn trace_with(&self, rho: &DensityMatrix<T>) -> Complex<T>;
}

/// Real operator diagonal in the position basis, e.g. `X` or `V(X)`.
#[derive(Clone, Debug, PartialEq)]
pub struct DiagonalOperator<T> {
    pub diagonal: Vec<T>,
}

impl<T: Real> DiagonalOperator<T> {
    pub fn from_fn(grid: &Grid<T>, f: impl Fn(T) -> T) -> Self {
        DiagonalOperator {
            diagonal: grid.positions().into_iter().map(f).collect(),
        }
    }

    pub fn apply(&self, psi: &WaveFunction<T>) -> WaveFunction<T> {
        let mut out = psi.clone();
        out.amplitudes_mut()
            .iter_mut()
            .zip(&self.diagonal)
            .for_each(|(z, d)| *z = *z * *d);
        out
    }
}

impl<T: Real> Observable<T> for DiagonalOperator<T> {
    fn trace_with(&self, rho: &DensityMatrix<T>) -> Complex<T> {
        let dx = rho.grid().spacing();
        rho.elements()
            .diagonal()
            .iter()
            .zip(&self.diagonal)
            .fold(Complex::default(), |a, (z, d)| a + *z * *d)
            * dx
    }
}

/// Position operator `X`, diagonal with entries `x_j`.
pub fn position_operator<T: Real>(grid: &Grid<T>) -> DiagonalOperator<T> {
    DiagonalOperator {
        diagonal: grid.positions(),
    }
}

pub struct Identity;

impl<T: Real> Observable<T> for Identity {
    fn trace_with(&self, rho: &DensityMatrix<T>) -> Complex<T> {
        Complex::new(rho.trace(), T::zero())
    }
}

/// Spectral momentum operator `-iħ d/dx`.
#[derive(Clone, Debug)]
pub struct Momentum<T: Real> {
    spectral: Spectral<T>,
}

impl<T: Real> Momentum<T> {
    pub fn new(grid: &Grid<T>) -> Self {
        Momentum {
            spectral: Spectral::for_grid(grid),
        }
    }
}

impl<T: Real> Observable<T> for Momentum<T> {
    fn trace_with(&self, rho: &DensityMatrix<T>) -> Complex<T> {
        Complex::new(rho.expectation_p(&self.spectral), T::zero())
    }
}

/// Dense operator in the orthonormal grid basis.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseOperator<T: Real> {
    pub matrix: DMatrix<Complex<T>>,
}

impl<T: Real> Observable<T> for DenseOperator<T> {
    fn trace_with(&self, rho: &DensityMatrix<T>) -> Complex<T> {
        let r = rho.elements();
        let n = r.nrows();
        let mut acc = Complex::default();
        for j in 0..n {
            for k in 0..n {
                acc += r[(j, k)] * self.matrix[(k, j)];
            }
        }
        acc * rho.grid().spacing()
    }
}

/// `Tr[rho O]`, rejecting a non-negligible imaginary part.
pub fn expectation<T: Real>(obs: &impl Observable<T>, rho: &DensityMatrix<T>) -> Result<T> {
    let z = obs.trace_with(rho);
    let limit = 1e-9_f64.max(100.0 * T::epsilon().to_f64_lossy());
    let residue = z.im.abs().to_f64_lossy();
    if residue > limit * z.re.abs().to_f64_lossy().max(1.0) {
        return Err(Error::NonHermitian { residue, limit });
    }
    Ok(z.re)
}

/// Spectral `-iħ dψ/dx` under periodic boundary conditions.
pub fn momentum_operator_apply<T: Real>(psi: &WaveFunction<T>) -> WaveFunction<T> {
    psi.apply_momentum(&Spectral::for_grid(psi.grid()))
}
